//! Implicit midpoint time stepping of `ℳ ẏ + 𝒦 y + 𝒬(y) y = 0` with a
//! Newton–Raphson solve per step.

pub mod initial;

use fem::{assemble, AssembledSystem, BandLu, BandMatrix, FemError, Mesh};
use model_core::{BeamParameters, Mat6};
use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("Newton did not converge at step {step} after {iterations} iterations (residual {residual:e})")]
    StepFailure { step: usize, iterations: usize, residual: f64 },
    #[error("linear solve failed at step {step}: {reason}")]
    LinearSolve { step: usize, reason: String },
    #[error(transparent)]
    Fem(#[from] FemError),
}

pub type Result<T> = std::result::Result<T, IntegrateError>;

/// `t_k = (k−1) h` for `k = 1..Nt`, `h = T/(Nt−1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub nt: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, nt: usize) -> Result<Self> {
        if nt < 2 {
            return Err(IntegrateError::Parameter(format!("Nt must be at least 2, got {nt}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(IntegrateError::Parameter(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { horizon, nt })
    }

    pub fn step(&self) -> f64 {
        self.horizon / (self.nt - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.nt {
            self.horizon
        } else {
            k as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nt).map(|k| self.time(k)).collect()
    }
}

/// Convergence when `‖F(ζ)‖ ≤ tol_abs + tol_rel ‖F(yᵏ)‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub max_iter: usize,
    pub tol_rel: f64,
    pub tol_abs: f64,
}

impl NewtonSettings {
    /// `max_iter = 20`, `tol_rel = 1e-10`, `tol_abs = 1e-12 √N_f`.
    pub fn default_for(n_free: usize) -> Self {
        Self { max_iter: 20, tol_rel: 1e-10, tol_abs: 1e-12 * (n_free as f64).sqrt() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.tol_rel > 0.0) || !(self.tol_abs > 0.0) {
            return Err(IntegrateError::Parameter("Newton settings need max_iter ≥ 1 and positive tolerances".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<DVector<f64>>,
    /// Newton iterations per step (residual evaluations until convergence).
    pub iterations: Vec<usize>,
    /// Final residual norm per step.
    pub residuals: Vec<f64>,
    /// `⟨yᵏ, ℳ yᵏ⟩`.
    pub energies: Vec<f64>,
}

fn check_len(sys: &AssembledSystem, v: &DVector<f64>) -> Result<()> {
    if v.len() != sys.n_free() {
        return Err(IntegrateError::Shape { expected: sys.n_free(), got: v.len() });
    }
    Ok(())
}

/// `F(ζ) = (ℳ + h/2 𝒦) ζ − (ℳ − h/2 𝒦) yᵏ
///        + h/4 (𝒬(yᵏ)yᵏ + 𝒬(yᵏ)ζ + 𝒬(ζ)yᵏ + 𝒬(ζ)ζ)`.
pub fn residual(sys: &AssembledSystem, yk: &DVector<f64>, zeta: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    check_len(sys, yk)?;
    check_len(sys, zeta)?;
    let diff = zeta - yk;
    let sum = zeta + yk;
    let mut f = sys.mass.mul_vec(&diff) + sys.stiffness.mul_vec(&sum) * (0.5 * h);
    let q = sys.apply_q(yk, &sum)? + sys.apply_q(zeta, &sum)?;
    f.axpy(0.25 * h, &q, 1.0);
    Ok(f)
}

/// `ℳ + h/2 𝒦 + h/4 (𝒬(yᵏ) + 𝒬†(yᵏ)) + h/4 (𝒬(ζ) + 𝒬†(ζ))`.
pub fn jacobian(sys: &AssembledSystem, yk: &DVector<f64>, zeta: &DVector<f64>, h: f64) -> Result<BandMatrix> {
    check_len(sys, yk)?;
    check_len(sys, zeta)?;
    let mut j = linear_part(sys, h);
    j.axpy(0.25 * h, &sys.eval_q_sum(yk)?);
    j.axpy(0.25 * h, &sys.eval_q_sum(zeta)?);
    Ok(j)
}

fn linear_part(sys: &AssembledSystem, h: f64) -> BandMatrix {
    let mut j = sys.mass.clone();
    j.axpy(0.5 * h, &sys.stiffness);
    j
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: DVector<f64>,
    pub iterations: usize,
    /// Residual norm at each Newton iterate, starting from `ζ₁ = yᵏ`.
    pub residual_history: Vec<f64>,
}

/// One implicit midpoint step from `yᵏ`, Newton started at `ζ₁ = yᵏ`.
/// `index` only labels errors.
pub fn step(
    sys: &AssembledSystem,
    yk: &DVector<f64>,
    h: f64,
    settings: &NewtonSettings,
    index: usize,
) -> Result<StepOutcome> {
    settings.validate()?;
    check_len(sys, yk)?;
    let base = linear_part(sys, h);
    let q_yk = sys.eval_q_sum(yk)?;
    let mut zeta = yk.clone();
    let mut f = residual(sys, yk, &zeta, h)?;
    let f0 = f.norm();
    let tol = settings.tol_abs + settings.tol_rel * f0;
    let mut history = vec![f0];
    for it in 1..=settings.max_iter {
        let norm = *history.last().unwrap();
        if !norm.is_finite() {
            break;
        }
        if norm <= tol {
            return Ok(StepOutcome { state: zeta, iterations: it, residual_history: history });
        }
        let mut jac = base.clone();
        jac.axpy(0.25 * h, &q_yk);
        jac.axpy(0.25 * h, &sys.eval_q_sum(&zeta)?);
        let lu = BandLu::new(&jac).map_err(|e| IntegrateError::LinearSolve { step: index, reason: e.to_string() })?;
        zeta -= lu.solve(&f);
        f = residual(sys, yk, &zeta, h)?;
        history.push(f.norm());
    }
    let last = *history.last().unwrap();
    if last <= tol {
        return Ok(StepOutcome { state: zeta, iterations: settings.max_iter + 1, residual_history: history });
    }
    Err(IntegrateError::StepFailure { step: index, iterations: settings.max_iter, residual: last })
}

/// Marches `y⁰` over the grid on an assembled system.
pub fn simulate_system(
    sys: &AssembledSystem,
    grid: &TimeGrid,
    y0: &DVector<f64>,
    settings: &NewtonSettings,
) -> Result<Trajectory> {
    check_len(sys, y0)?;
    let h = grid.step();
    let mut states = Vec::with_capacity(grid.nt);
    let mut iterations = Vec::with_capacity(grid.nt - 1);
    let mut residuals = Vec::with_capacity(grid.nt - 1);
    let mut energies = Vec::with_capacity(grid.nt);
    energies.push(sys.energy(y0));
    states.push(y0.clone());
    for k in 0..grid.nt - 1 {
        let out = step(sys, &states[k], h, settings, k + 1)?;
        iterations.push(out.iterations);
        residuals.push(*out.residual_history.last().unwrap());
        energies.push(sys.energy(&out.state));
        states.push(out.state);
    }
    Ok(Trajectory { grid: *grid, states, iterations, residuals, energies })
}

/// Assembles the system for `(params, mesh, K)` and marches `y⁰`.
pub fn simulate(
    params: &BeamParameters,
    mesh: &Mesh,
    grid: &TimeGrid,
    feedback: &Mat6,
    y0: &DVector<f64>,
    settings: &NewtonSettings,
) -> Result<(AssembledSystem, Trajectory)> {
    let sys = assemble(params, mesh, feedback)?;
    let traj = simulate_system(&sys, grid, y0, settings)?;
    Ok((sys, traj))
}

/// Per-step energy balance `(Eᵏ⁺¹ − Eᵏ, −2h midᵀ 𝒦 mid)`.
pub fn energy_balance(sys: &AssembledSystem, traj: &Trajectory) -> Vec<(f64, f64)> {
    let h = traj.grid.step();
    traj.states
        .windows(2)
        .zip(traj.energies.windows(2))
        .map(|(s, e)| {
            let mid = (&s[0] + &s[1]) * 0.5;
            (e[1] - e[0], -2.0 * h * mid.dot(&sys.stiffness.mul_vec(&mid)))
        })
        .collect()
}
