//! Quadratic Lyapunov functionals `∫ ⟨y, Q̄ y⟩` with
//! `Q̄ = ρ Q^P + w [[0, W], [Wᵀ, 0]]` for a beam clamped at `x = 0` and
//! controlled by `z = −K v` at `x = ℓ`.

pub mod weights;

use fem::{weighted_mass, BandMatrix, Mesh};
use integrate::Trajectory;
use model_core::linalg::{is_symmetric, max_eigenvalue, min_eigenvalue, sym_inv_sqrt, sym_sqrt};
use model_core::{block_diag, blocks, build_a_bbar, BeamParameters, Mat12, Mat6, ModelError};
use nalgebra::DVector;
use thiserror::Error;

pub use weights::{grid, Sign, Weight, WeightFunction, WeightKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, LyapunovError>;

/// Relative tolerance for strict definiteness and symmetry checks.
pub const DEFINITENESS_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-10;
pub const DEFAULT_GRID: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WVariant {
    Identity,
    MC,
    /// `C^{−1/2} (C^{1/2} M C^{1/2})^{1/2} C^{1/2}`.
    Sqrt,
}

impl WVariant {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Self::Identity),
            "mc" => Some(Self::MC),
            "sqrt" => Some(Self::Sqrt),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::MC => "mc",
            Self::Sqrt => "sqrt",
        }
    }
}

pub fn build_w(params: &BeamParameters, x: f64, variant: WVariant) -> Mat6 {
    let m = params.mass_at(x);
    let c = params.flexibility_at(x);
    match variant {
        WVariant::Identity => Mat6::identity(),
        WVariant::MC => m * c,
        WVariant::Sqrt => {
            let ch = sym_sqrt(&c);
            sym_inv_sqrt(&c) * sym_sqrt(&(ch * m * ch)) * ch
        }
    }
}

fn offdiag(w: &Mat6) -> Mat12 {
    blocks(&Mat6::zeros(), w, &w.transpose(), &Mat6::zeros())
}

fn sym<const N: usize>(m: &nalgebra::SMatrix<f64, N, N>) -> nalgebra::SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// `Λ = diag(W C⁻¹, Wᵀ M⁻¹)` and `Ξ = −sign(w) (X + Xᵀ)` with
/// `X = diag(Λᴵ Eᵀ, −Λᴵᴵ E)`, so that `S̄ = −w′ Λ + |w| Ξ` for
/// x-independent coefficients.
pub fn lambda_xi(params: &BeamParameters, x: f64, variant: WVariant, sign_w: f64) -> Result<(Mat12, Mat12)> {
    let w = build_w(params, x, variant);
    let c_inv = params.flexibility_at(x).try_inverse().ok_or_else(|| LyapunovError::Parameter("singular flexibility".into()))?;
    let m_inv = params.mass_at(x).try_inverse().ok_or_else(|| LyapunovError::Parameter("singular mass".into()))?;
    let l1 = w * c_inv;
    let l2 = w.transpose() * m_inv;
    let e = model_core::build_e(&params.precurvature_at(x));
    let xm = block_diag(&(l1 * e.transpose()), &(-l2 * e));
    Ok((block_diag(&l1, &l2), (xm + xm.transpose()) * -sign_w))
}

/// `Q̄(x) = ρ Q^P + w(x) [[0, W], [Wᵀ, 0]]`.
pub fn q_bar(params: &BeamParameters, x: f64, rho: f64, weight: &Weight, variant: WVariant) -> Mat12 {
    params.qp_at(x) * rho + offdiag(&build_w(params, x, variant)) * weight.value(x)
}

/// `S̄ = d/dx(Q̄A) − Q̄B̄ − B̄ᵀQ̄` for x-independent coefficients.
pub fn s_bar(params: &BeamParameters, x: f64, rho: f64, weight: &Weight, variant: WVariant) -> Result<Mat12> {
    let (a, bbar) = build_a_bbar(params, x)?;
    let q = q_bar(params, x, rho, weight, variant);
    let dq = offdiag(&build_w(params, x, variant)) * weight.derivative(x);
    Ok(dq * a - q * bbar - bbar.transpose() * q)
}

/// `μ(x, K) = −2ρK + |w| Λᴵ + |w| K Λᴵᴵ K`.
pub fn mu_matrix(params: &BeamParameters, x: f64, rho: f64, weight: &Weight, variant: WVariant, k: &Mat6) -> Result<Mat6> {
    let (lambda, _) = lambda_xi(params, x, variant, 0.0)?;
    let l1 = lambda.fixed_view::<6, 6>(0, 0).into_owned();
    let l2 = lambda.fixed_view::<6, 6>(6, 6).into_owned();
    let w = weight.value(x).abs();
    Ok(sym(&(k * (-2.0 * rho) + l1 * w + k * l2 * k * w)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateSettings {
    pub rho: f64,
    pub weight: Weight,
    pub variant: WVariant,
    pub grid_pts: usize,
}

/// Pointwise margins of conditions (i)–(iv).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    /// (i) smallest eigenvalue of `Q̄` over the grid.
    pub q_min_eig: f64,
    /// (ii) largest entry of `|Q̄A − (Q̄A)ᵀ|` over the grid.
    pub qa_asymmetry: f64,
    /// (iii) largest eigenvalue of `S̄` over the grid.
    pub s_max_eig: f64,
    /// (iv) largest eigenvalue of `μ(ℓ, K)`.
    pub mu_max_eig: f64,
    /// (iv) `w(0)`, required nonnegative.
    pub w0: f64,
}

/// Constants of the sufficient conditions `w′ > C_Ξ C_Λ⁻¹ |w|`,
/// `|w| < ρ / √C_θ` and `|w(ℓ)| ≤ ρ / C_μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub c_lambda: f64,
    pub c_xi: f64,
    pub c_theta: f64,
    /// Undefined unless `K` is positive definite.
    pub c_mu: Option<f64>,
    /// `min(C_θ^{−1/2}, C_μ⁻¹)`.
    pub chi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub settings: CertificateSettings,
    pub feedback: Mat6,
    pub margins: Margins,
    pub constants: Constants,
    /// Pass flags of (i)–(iv), in order.
    pub conditions: [bool; 4],
    /// Whether the sufficient conditions on `w` and `ρ` hold on the grid.
    pub sufficient: bool,
    pub verdict: bool,
}

pub const CONDITION_NAMES: [&str; 4] = ["(i) Q positive definite", "(ii) QA symmetric", "(iii) S negative definite", "(iv) boundary mu negative semidefinite"];

impl LyapunovCertificate {
    pub fn failed(&self) -> Vec<&'static str> {
        CONDITION_NAMES.iter().zip(self.conditions).filter(|(_, ok)| !ok).map(|(n, _)| *n).collect()
    }

    /// `key = value` lines.
    pub fn report(&self) -> String {
        let m = &self.margins;
        let c = &self.constants;
        let opt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:e}"));
        let mut out = String::new();
        out += &format!("verdict = {}\n", self.verdict);
        out += &format!("rho = {:e}\n", self.settings.rho);
        out += &format!("w_variant = {}\n", self.settings.variant.name());
        out += &format!("grid_pts = {}\n", self.settings.grid_pts);
        out += &format!("margin_i_min_eig_q = {:e}\n", m.q_min_eig);
        out += &format!("margin_ii_asym_qa = {:e}\n", m.qa_asymmetry);
        out += &format!("margin_iii_max_eig_s = {:e}\n", m.s_max_eig);
        out += &format!("margin_iv_max_eig_mu = {:e}\n", m.mu_max_eig);
        out += &format!("w_at_0 = {:e}\n", m.w0);
        out += &format!("c_lambda = {:e}\nc_xi = {:e}\nc_theta = {:e}\n", c.c_lambda, c.c_xi, c.c_theta);
        out += &format!("c_mu = {}\nchi = {}\n", opt(c.c_mu), opt(c.chi));
        out += &format!("sufficient_conditions = {}\n", self.sufficient);
        for (name, ok) in CONDITION_NAMES.iter().zip(self.conditions) {
            out += &format!("condition \"{name}\" = {}\n", if ok { "pass" } else { "fail" });
        }
        out
    }
}

fn feedback_constant(l1: &Mat6, l2: &Mat6, k: &Mat6) -> Option<f64> {
    if min_eigenvalue(k) <= 0.0 {
        return None;
    }
    let kh = sym_sqrt(k);
    let kih = sym_inv_sqrt(k);
    Some(max_eigenvalue(&sym(&(kih * l1 * kih + kh * l2 * kh))))
}

/// Checks (i)–(iv) on `grid_pts` uniform points. The verdict uses the
/// eigenvalues of `Q̄`, `S̄` and `μ(ℓ, K)` directly; the sufficient
/// conditions are reported alongside.
pub fn certificate(params: &BeamParameters, k: &Mat6, settings: &CertificateSettings) -> Result<LyapunovCertificate> {
    let CertificateSettings { rho, weight, variant, grid_pts } = *settings;
    if !(rho.is_finite() && rho > 0.0) {
        return Err(LyapunovError::Parameter(format!("rho must be positive, got {rho}")));
    }
    if grid_pts < 2 {
        return Err(LyapunovError::Parameter("grid needs at least 2 points".into()));
    }
    if !is_symmetric(k, model_core::SYMMETRY_TOL * k.amax().max(1.0)) {
        return Err(LyapunovError::Parameter("feedback K must be symmetric".into()));
    }
    if min_eigenvalue(&sym(k)) < -DEFINITENESS_TOL * k.amax().max(1.0) {
        return Err(LyapunovError::Parameter("feedback K must be positive semidefinite".into()));
    }
    params.validate()?;
    let len = params.length;
    let mut q_min = f64::INFINITY;
    let mut q_ok = true;
    let mut asym: f64 = 0.0;
    let mut s_max = f64::NEG_INFINITY;
    let mut s_ok = true;
    let (mut c_lambda, mut c_xi, mut c_theta) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut pts = Vec::with_capacity(grid_pts);
    for x in grid(len, grid_pts) {
        let q = q_bar(params, x, rho, &weight, variant);
        let qs = sym(&q);
        let lmin = min_eigenvalue(&qs);
        q_ok &= lmin > DEFINITENESS_TOL * q.amax();
        q_min = q_min.min(lmin);
        let (a, _) = build_a_bbar(params, x)?;
        let qa = q * a;
        asym = asym.max((qa - qa.transpose()).amax());
        let s = s_bar(params, x, rho, &weight, variant)?;
        let smax = max_eigenvalue(&sym(&s));
        // Scale of the constituents: S̄ can vanish identically.
        let (lambda, xi) = lambda_xi(params, x, variant, weight.value(x).signum())?;
        let scale = (lambda * weight.derivative(x)).amax() + (xi * weight.value(x)).amax();
        s_ok &= scale > 0.0 && smax < -DEFINITENESS_TOL * scale;
        s_max = s_max.max(smax);
        c_lambda = c_lambda.max(min_eigenvalue(&sym(&lambda)));
        c_xi = c_xi.max(max_eigenvalue(&sym(&xi)));
        let m = params.mass_at(x);
        let w = build_w(params, x, variant);
        let mih = sym_inv_sqrt(&m);
        let cinv = params.flexibility_at(x).try_inverse().unwrap();
        c_theta = c_theta.max(max_eigenvalue(&sym(&(mih * w * cinv * w.transpose() * mih))));
        pts.push(x);
    }
    let mu = mu_matrix(params, len, rho, &weight, variant, k)?;
    let mu_max = max_eigenvalue(&mu);
    let (lambda_l, _) = lambda_xi(params, len, variant, 0.0)?;
    let l1 = lambda_l.fixed_view::<6, 6>(0, 0).into_owned();
    let l2 = lambda_l.fixed_view::<6, 6>(6, 6).into_owned();
    let wl = weight.value(len).abs();
    let mu_scale = 2.0 * rho * k.amax() + wl * (l1.amax() + (k * l2 * k).amax());
    let w0 = weight.value(0.0);
    let mu_ok = mu_max <= DEFINITENESS_TOL * mu_scale && w0 >= 0.0;
    let c_mu = feedback_constant(&l1, &l2, k);
    let chi = c_mu.map(|c| c_theta.powf(-0.5).min(1.0 / c));
    let sufficient = match c_mu {
        Some(cm) => pts.iter().all(|&x| {
            let w = weight.value(x).abs();
            weight.derivative(x) > c_xi / c_lambda * w && w < rho / c_theta.sqrt()
        }) && wl <= rho / cm && w0 >= 0.0,
        None => false,
    };
    let conditions = [q_ok, asym <= SYMMETRY_TOL * rho.max(1.0) * params.qp_at(0.0).amax(), s_ok, mu_ok];
    Ok(LyapunovCertificate {
        settings: *settings,
        feedback: *k,
        margins: Margins { q_min_eig: q_min, qa_asymmetry: asym, s_max_eig: s_max, mu_max_eig: mu_max, w0 },
        constants: Constants { c_lambda, c_xi, c_theta, c_mu, chi },
        conditions,
        sufficient,
        verdict: conditions.iter().all(|&c| c),
    })
}

/// `χ` of the sufficient conditions, or `None` when `K` is not definite.
pub fn chi(params: &BeamParameters, k: &Mat6, variant: WVariant) -> Result<Option<f64>> {
    let settings = CertificateSettings { rho: 1.0, weight: Weight::zero(), variant, grid_pts: 2 };
    Ok(certificate(params, k, &settings)?.constants.chi)
}

/// Raises `ρ₀` so that `w(ℓ) − w(0) < χ ρ` with 5% slack.
pub fn step5_rho(rho0: f64, weight: &Weight, length: f64, chi: f64) -> f64 {
    let span = (weight.value(length) - weight.value(0.0)).abs();
    rho0.max(1.05 * span / chi)
}

/// `𝒬̄`: the reduced mass form with `Q̄` frozen at element midpoints.
pub fn lyapunov_matrix(params: &BeamParameters, mesh: &Mesh, rho: f64, weight: &Weight, variant: WVariant) -> BandMatrix {
    weighted_mass(mesh, |x| q_bar(params, x, rho, weight, variant))
}

/// `Eᵏ = ⟨yᵏ, ℳ yᵏ⟩`.
pub fn energy(mass: &BandMatrix, traj: &Trajectory) -> Vec<f64> {
    traj.states.iter().map(|y| y.dot(&mass.mul_vec(y))).collect()
}

/// `L̄₀ᵏ = ⟨yᵏ, 𝒬̄ yᵏ⟩`, plus `⟨ẏᵏ, 𝒬̄ ẏᵏ⟩` for order 1 with centered
/// differences inside and one-sided differences at both ends.
pub fn lyapunov_series(q: &BandMatrix, traj: &Trajectory, order: usize) -> Result<Vec<f64>> {
    if order > 1 {
        return Err(LyapunovError::Parameter(format!("order must be 0 or 1, got {order}")));
    }
    let form = |y: &DVector<f64>| y.dot(&q.mul_vec(y));
    let s = &traj.states;
    let h = traj.grid.step();
    let n = s.len();
    Ok((0..n)
        .map(|k| {
            let mut l = form(&s[k]);
            if order == 1 && n >= 2 {
                let d = if k == 0 {
                    (&s[1] - &s[0]) / h
                } else if k + 1 == n {
                    (&s[n - 1] - &s[n - 2]) / h
                } else {
                    (&s[k + 1] - &s[k - 1]) / (2.0 * h)
                };
                l += form(&d);
            }
            l
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// `β = −slope / 2` so that `L̄(t) ≈ L̄(t₀) e^{−2βt}`.
    pub beta: f64,
    pub slope: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares fit of `log L̄` against `t` over `t ∈ [t0, t1]`.
pub fn fit_decay(times: &[f64], series: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    if times.len() != series.len() {
        return Err(LyapunovError::Parameter("times and series differ in length".into()));
    }
    let pts: Vec<(f64, f64)> = times.iter().zip(series).filter(|(t, _)| **t >= window.0 && **t <= window.1).map(|(t, v)| (*t, *v)).collect();
    if pts.len() < 2 {
        return Err(LyapunovError::Parameter("fit window holds fewer than 2 samples".into()));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(LyapunovError::Parameter(format!("nonpositive value {v} at t = {t}")));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let lm = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let stl: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1.ln() - lm)).sum();
    let sll: f64 = pts.iter().map(|p| (p.1.ln() - lm).powi(2)).sum();
    let slope = stl / stt;
    let resid: f64 = pts.iter().map(|p| (p.1.ln() - lm - slope * (p.0 - tm)).powi(2)).sum();
    let r2 = if sll == 0.0 { 1.0 } else { 1.0 - resid / sll };
    Ok(DecayFit { beta: -slope / 2.0, slope, r2, points: pts.len() })
}
