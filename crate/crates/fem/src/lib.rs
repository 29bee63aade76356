//! Quadratic Lagrange (P2) semi-discretization of the single-beam system,
//! clamped at `x = 0` and with velocity feedback `z(ℓ) = −K v(ℓ)` at `x = ℓ`.
//!
//! The reduced ODE reads `ℳ ẏ + 𝒦 y + 𝒬(y) y = 0`. Global DOF `η(i, k) =
//! 12(k−1) + i` (1-based) carries component `i` of `y = (v, z)` at node `k`;
//! the six velocity DOFs of node 1 are removed by the Dirichlet condition.

pub mod band;

use model_core::{bold_a, bold_b, calg, linalg::skew, BeamParameters, Mat12, Mat3, Mat6, Vec12};
use nalgebra::{DMatrix, DVector, SMatrix};
use rayon::prelude::*;
use thiserror::Error;

pub use band::{BandLu, BandMatrix};

pub type Mat3x3 = SMatrix<f64, 3, 3>;

/// Half-bandwidth of every assembled matrix: one element spans 36 DOFs.
pub const HALF_BANDWIDTH: usize = 35;
/// Number of clamped DOFs removed at `x = 0`.
pub const CLAMPED: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error(transparent)]
    Model(#[from] model_core::ModelError),
}

pub type Result<T> = std::result::Result<T, FemError>;

/// Uniform mesh with `Nx = 2 Ne + 1` nodes; node `2e` (1-based) is the
/// midpoint of element `e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    pub length: f64,
    pub ne: usize,
}

impl Mesh {
    pub fn new(length: f64, ne: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(FemError::Parameter(format!("mesh length must be positive, got {length}")));
        }
        if ne == 0 {
            return Err(FemError::Parameter("element count must be at least 1".into()));
        }
        Ok(Self { length, ne })
    }

    pub fn nx(&self) -> usize {
        2 * self.ne + 1
    }

    pub fn he(&self) -> f64 {
        self.length / self.ne as f64
    }

    /// Position of node `k` (0-based).
    pub fn node(&self, k: usize) -> f64 {
        if k + 1 == self.nx() {
            self.length
        } else {
            k as f64 * self.he() * 0.5
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.nx()).map(|k| self.node(k)).collect()
    }

    /// Midpoint of element `e` (0-based), where coefficients are frozen.
    pub fn midpoint(&self, e: usize) -> f64 {
        self.node(2 * e + 1)
    }

    pub fn n_full(&self) -> usize {
        12 * self.nx()
    }

    pub fn n_free(&self) -> usize {
        self.n_full() - CLAMPED
    }
}

/// `η(i, k) = 12(k−1) + i`, 1-based.
pub fn eta(i: usize, k: usize) -> usize {
    12 * (k - 1) + i
}

/// Reduced index `η̄ = η − 6`, 1-based.
pub fn eta_bar(i: usize, k: usize) -> Option<usize> {
    eta(i, k).checked_sub(CLAMPED).filter(|&x| x >= 1)
}

/// `μ(i, e, p) = η(i, 2e − 2 + p)`, 1-based.
pub fn mu(i: usize, e: usize, p: usize) -> usize {
    eta(i, 2 * e - 2 + p)
}

/// Reference shape functions on `[0, 1]` and their derivatives.
pub fn reference_shape(xi: f64) -> Result<([f64; 3], [f64; 3])> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(FemError::Domain(format!("ξ = {xi} outside [0, 1]")));
    }
    let n = [(1.0 - xi) * (1.0 - 2.0 * xi), 4.0 * xi * (1.0 - xi), xi * (2.0 * xi - 1.0)];
    let d = [4.0 * xi - 3.0, 4.0 - 8.0 * xi, 4.0 * xi - 1.0];
    Ok((n, d))
}

/// Element matrices on the reference interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrices {
    /// `∫ Ñₖ Ñₘ`.
    pub mass: Mat3x3,
    /// `∫ Ñₖ′ Ñₘ`.
    pub stiffness: Mat3x3,
    /// `𝒫ₙ[k, m] = ∫ Ñₙ Ñₖ Ñₘ`.
    pub cubic: [Mat3x3; 3],
}

/// Integer numerators and common denominators of the element matrices, in
/// the order mass, stiffness, cubic 1..3.
pub const ELEMENT_RATIONALS: [([[i64; 3]; 3], i64); 5] = [
    ([[4, 2, -1], [2, 16, 2], [-1, 2, 4]], 30),
    ([[-3, -4, 1], [4, 0, -4], [-1, 4, 3]], 6),
    ([[39, 20, -3], [20, 16, -8], [-3, -8, -3]], 420),
    ([[5, 4, -2], [4, 48, 4], [-2, 4, 5]], 105),
    ([[-3, -8, -3], [-8, 16, 20], [-3, 20, 39]], 420),
];

pub fn element_matrices() -> ElementMatrices {
    let m = |k: usize| {
        let (num, den) = ELEMENT_RATIONALS[k];
        Mat3x3::from_fn(|i, j| num[i][j] as f64 / den as f64)
    };
    ElementMatrices { mass: m(0), stiffness: m(1), cubic: [m(2), m(3), m(4)] }
}

/// `G(x, u) = −𝒢(u) Q^P(x)`, so that the nonlinearity is `∫ Nᵀ G(Ny) N y`.
pub fn g_mat(qp: &Mat12, u: &Vec12) -> Mat12 {
    -calg(u) * qp
}

/// `G†(ȳ)` with `G(y) ȳ = G†(ȳ) y`:
/// `[[−L₂(Mv̄), −L₁(Cz̄)], [L₁(Cz̄)ᵀ, 0]]`,
/// `L₁(w) = [[ŵ₂, 0], [ŵ₁, ŵ₂]]`, `L₂(w) = [[0, ŵ₁], [ŵ₁, ŵ₂]]`.
pub fn g_dagger(qp: &Mat12, ybar: &Vec12) -> Mat12 {
    let w = qp * ybar;
    let h: [Mat3; 4] = std::array::from_fn(|k| skew(&w.fixed_rows::<3>(3 * k).into_owned()));
    let z = Mat3::zeros();
    let l1 = |a: Mat3, b: Mat3| [[b, z], [a, b]];
    let l2 = |a: Mat3, b: Mat3| [[z, a], [a, b]];
    let mut out = Mat12::zeros();
    let put = |out: &mut Mat12, r: usize, c: usize, blk: [[Mat3; 2]; 2], sign: f64, transpose: bool| {
        for i in 0..2 {
            for j in 0..2 {
                let b = if transpose { blk[j][i].transpose() } else { blk[i][j] };
                out.fixed_view_mut::<3, 3>(r + 3 * i, c + 3 * j).copy_from(&(b * sign));
            }
        }
    };
    put(&mut out, 0, 0, l2(h[0], h[1]), -1.0, false);
    put(&mut out, 0, 6, l1(h[2], h[3]), -1.0, false);
    put(&mut out, 6, 0, l1(h[2], h[3]), 1.0, true);
    out
}

/// Local 36×36 contributions of one element.
struct ElementBlocks {
    mass: [[Mat12; 3]; 3],
    k1: [[Mat12; 3]; 3],
    k2: [[Mat12; 3]; 3],
}

/// Semi-discrete system after Dirichlet reduction.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub params: BeamParameters,
    pub mesh: Mesh,
    pub feedback: Mat6,
    /// `Q^P(x_{2e})` per element.
    pub qp: Vec<Mat12>,
    pub mass: BandMatrix,
    pub stiffness: BandMatrix,
    /// Unreduced pieces `ℳ`, `𝒦₁`, `𝒦₂`, `𝒦₃` of size `12 Nx`.
    pub mass_full: BandMatrix,
    pub k1_full: BandMatrix,
    pub k2_full: BandMatrix,
    pub k3_full: BandMatrix,
    pub element: ElementMatrices,
}

pub fn assemble(params: &BeamParameters, mesh: &Mesh, feedback: &Mat6) -> Result<AssembledSystem> {
    assemble_with(params, mesh, feedback, true)
}

/// Element blocks are computed in parallel when `parallel`, then scattered
/// in element order, so both paths give bit-identical matrices.
pub fn assemble_with(params: &BeamParameters, mesh: &Mesh, feedback: &Mat6, parallel: bool) -> Result<AssembledSystem> {
    params.validate()?;
    if !feedback.iter().all(|x| x.is_finite()) || !model_core::linalg::is_symmetric(feedback, 1e-12) {
        return Err(FemError::Parameter("feedback matrix must be symmetric".into()));
    }
    let el = element_matrices();
    let he = mesh.he();
    let a = bold_a();
    let build = |e: usize| {
        let x = mesh.midpoint(e);
        let qp = params.qp_at(x);
        let b = bold_b(params, x);
        let f = |s: &Mat3x3, m: &Mat12, w: f64| -> [[Mat12; 3]; 3] {
            std::array::from_fn(|k| std::array::from_fn(|j| m * (w * s[(k, j)])))
        };
        let blocks = ElementBlocks { mass: f(&el.mass, &qp, he), k1: f(&el.stiffness, &a, -1.0), k2: f(&el.mass, &b, he) };
        (qp, blocks)
    };
    let per_element: Vec<(Mat12, ElementBlocks)> = if parallel {
        (0..mesh.ne).into_par_iter().map(build).collect()
    } else {
        (0..mesh.ne).map(build).collect()
    };
    let n = mesh.n_full();
    let bw = HALF_BANDWIDTH;
    let mut mass = BandMatrix::zeros(n, bw, bw);
    let mut k1 = mass.clone();
    let mut k2 = mass.clone();
    let mut k3 = mass.clone();
    for (e, (_, blk)) in per_element.iter().enumerate() {
        let base = 24 * e;
        for k in 0..3 {
            for m in 0..3 {
                for i in 0..12 {
                    for j in 0..12 {
                        let (r, c) = (base + 12 * k + i, base + 12 * m + j);
                        mass.add(r, c, blk.mass[k][m][(i, j)]);
                        k1.add(r, c, blk.k1[k][m][(i, j)]);
                        k2.add(r, c, blk.k2[k][m][(i, j)]);
                    }
                }
            }
        }
    }
    let last = 12 * (mesh.nx() - 1);
    for i in 0..6 {
        for j in 0..6 {
            k3.add(last + i, last + j, feedback[(i, j)]);
        }
        k3.add(last + 6 + i, last + i, -1.0);
    }
    let mut stiff_full = k1.clone();
    stiff_full.axpy(1.0, &k2);
    stiff_full.axpy(1.0, &k3);
    Ok(AssembledSystem {
        params: params.clone(),
        mesh: *mesh,
        feedback: *feedback,
        qp: per_element.into_iter().map(|(q, _)| q).collect(),
        mass: mass.trailing(CLAMPED),
        stiffness: stiff_full.trailing(CLAMPED),
        mass_full: mass,
        k1_full: k1,
        k2_full: k2,
        k3_full: k3,
        element: el,
    })
}

/// Assembles `∫ Nᵀ W(x_{2e}) N` for a per-element weight, reduced.
pub fn weighted_mass(mesh: &Mesh, weight: impl Fn(f64) -> Mat12) -> BandMatrix {
    let el = element_matrices();
    let he = mesh.he();
    let mut m = BandMatrix::zeros(mesh.n_full(), HALF_BANDWIDTH, HALF_BANDWIDTH);
    for e in 0..mesh.ne {
        let w = weight(mesh.midpoint(e));
        let base = 24 * e;
        for k in 0..3 {
            for l in 0..3 {
                let s = he * el.mass[(k, l)];
                for i in 0..12 {
                    for j in 0..12 {
                        m.add(base + 12 * k + i, base + 12 * l + j, s * w[(i, j)]);
                    }
                }
            }
        }
    }
    m.trailing(CLAMPED)
}

impl AssembledSystem {
    pub fn n_free(&self) -> usize {
        self.mesh.n_free()
    }

    fn check(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.n_free() {
            return Err(FemError::Shape { expected: self.n_free(), got: y.len() });
        }
        Ok(())
    }

    /// Nodal 12-vector of node `k` (0-based) from a reduced vector.
    pub fn node_value(&self, y: &DVector<f64>, k: usize) -> Vec12 {
        node_value(y, k)
    }

    fn local_nodes(&self, y: &DVector<f64>, e: usize) -> [Vec12; 3] {
        std::array::from_fn(|n| node_value(y, 2 * e + n))
    }

    fn local_matrices(&self, y: &DVector<f64>, e: usize, dagger: bool) -> [[Mat12; 3]; 3] {
        let qp = &self.qp[e];
        let g: [Mat12; 3] = self
            .local_nodes(y, e)
            .map(|u| if dagger { g_dagger(qp, &u) } else { g_mat(qp, &u) });
        let he = self.mesh.he();
        let p = &self.element.cubic;
        std::array::from_fn(|k| {
            std::array::from_fn(|m| (g[0] * p[0][(k, m)] + g[1] * p[1][(k, m)] + g[2] * p[2][(k, m)]) * he)
        })
    }

    fn scatter(&self, out: &mut BandMatrix, e: usize, blk: &[[Mat12; 3]; 3], alpha: f64) {
        let base = 24 * e;
        for k in 0..3 {
            for m in 0..3 {
                for i in 0..12 {
                    let r = base + 12 * k + i;
                    if r < CLAMPED {
                        continue;
                    }
                    for j in 0..12 {
                        let c = base + 12 * m + j;
                        if c >= CLAMPED {
                            out.add(r - CLAMPED, c - CLAMPED, alpha * blk[k][m][(i, j)]);
                        }
                    }
                }
            }
        }
    }

    fn eval(&self, y: &DVector<f64>, dagger: bool) -> Result<BandMatrix> {
        self.check(y)?;
        let mut out = BandMatrix::zeros(self.n_free(), HALF_BANDWIDTH, HALF_BANDWIDTH);
        for e in 0..self.mesh.ne {
            let blk = self.local_matrices(y, e, dagger);
            self.scatter(&mut out, e, &blk, 1.0);
        }
        Ok(out)
    }

    /// `𝒬(y)`.
    pub fn eval_q(&self, y: &DVector<f64>) -> Result<BandMatrix> {
        self.eval(y, false)
    }

    /// `𝒬†(ȳ)`, with `𝒬(y) ȳ = 𝒬†(ȳ) y`.
    pub fn eval_qdagger(&self, ybar: &DVector<f64>) -> Result<BandMatrix> {
        self.eval(ybar, true)
    }

    /// `𝒬(y) + 𝒬†(y)`, the derivative of `y ↦ 𝒬(y) y`.
    pub fn eval_q_sum(&self, y: &DVector<f64>) -> Result<BandMatrix> {
        self.check(y)?;
        let mut out = BandMatrix::zeros(self.n_free(), HALF_BANDWIDTH, HALF_BANDWIDTH);
        for e in 0..self.mesh.ne {
            self.scatter(&mut out, e, &self.local_matrices(y, e, false), 1.0);
            self.scatter(&mut out, e, &self.local_matrices(y, e, true), 1.0);
        }
        Ok(out)
    }

    /// `𝒬(y) x` without forming the matrix.
    pub fn apply_q(&self, y: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(y)?;
        self.check(x)?;
        let mut out = DVector::zeros(self.n_free());
        for e in 0..self.mesh.ne {
            let blk = self.local_matrices(y, e, false);
            let xs = self.local_nodes(x, e);
            for k in 0..3 {
                let mut acc = Vec12::zeros();
                for m in 0..3 {
                    acc += blk[k][m] * xs[m];
                }
                for i in 0..12 {
                    let r = 24 * e + 12 * k + i;
                    if r >= CLAMPED {
                        out[r - CLAMPED] += acc[i];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Literal nonlinear tensor `P_n^{p,e}` restricted to the 36 DOFs of
    /// element `e`: `he 𝒫ₙᵉ ⊗ G(x_{2e}, e_p)` (all indices 0-based).
    pub fn nonlinear_tensor(&self, n: usize, p: usize, e: usize, dagger: bool) -> DMatrix<f64> {
        let ep = Vec12::from_fn(|i, _| if i == p { 1.0 } else { 0.0 });
        let g = if dagger { g_dagger(&self.qp[e], &ep) } else { g_mat(&self.qp[e], &ep) };
        let he = self.mesh.he();
        DMatrix::from_fn(36, 36, |r, c| he * self.element.cubic[n][(r / 12, c / 12)] * g[(r % 12, c % 12)])
    }

    /// Quadratic form `yᵀ ℳ y`.
    pub fn energy(&self, y: &DVector<f64>) -> f64 {
        y.dot(&self.mass.mul_vec(y))
    }
}

/// Nodal 12-vector of node `k` (0-based) from a reduced vector; the clamped
/// velocities of node 0 read as zero.
pub fn node_value(y: &DVector<f64>, k: usize) -> Vec12 {
    Vec12::from_fn(|i, _| {
        let f = 12 * k + i;
        if f < CLAMPED {
            0.0
        } else {
            y[f - CLAMPED]
        }
    })
}

/// Reduced vector from nodal values; node 0 velocities are dropped.
pub fn from_nodes(values: &[Vec12]) -> DVector<f64> {
    let n = 12 * values.len() - CLAMPED;
    DVector::from_fn(n, |r, _| {
        let f = r + CLAMPED;
        values[f / 12][f % 12]
    })
}

/// Samples `f` at the mesh nodes.
pub fn interpolate(mesh: &Mesh, f: impl Fn(f64) -> Vec12) -> DVector<f64> {
    let values: Vec<Vec12> = mesh.nodes().into_iter().map(f).collect();
    from_nodes(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_values() {
        assert_eq!(reference_shape(0.0).unwrap().0, [1.0, 0.0, 0.0]);
        assert_eq!(reference_shape(0.5).unwrap().0, [0.0, 1.0, 0.0]);
        assert_eq!(reference_shape(1.0).unwrap().0, [0.0, 0.0, 1.0]);
        assert_eq!(reference_shape(0.25).unwrap().0, [0.375, 0.75, -0.125]);
        assert!(reference_shape(1.5).is_err());
        for k in 0..=20 {
            let (n, d) = reference_shape(k as f64 / 20.0).unwrap();
            assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(d.iter().sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn index_maps() {
        assert_eq!(eta(1, 1), 1);
        assert_eq!(eta(12, 2), 24);
        assert_eq!(eta_bar(6, 1), None);
        assert_eq!(eta_bar(7, 1), Some(1));
        assert_eq!(mu(1, 2, 1), eta(1, 3));
        assert_eq!(mu(12, 2, 3), eta(12, 5));
    }

    #[test]
    fn sizes_single_element() {
        let p = BeamParameters::hesse2012();
        let mesh = Mesh::new(1.0, 1).unwrap();
        let sys = assemble(&p, &mesh, &Mat6::zeros()).unwrap();
        assert_eq!(sys.mass_full.nrows(), 36);
        assert_eq!(sys.mass.nrows(), 30);
        assert_eq!(sys.stiffness.nrows(), 30);
    }

    #[test]
    fn rejects_asymmetric_feedback() {
        let mut k = Mat6::identity();
        k[(0, 1)] = 1.0;
        let err = assemble(&BeamParameters::hesse2012(), &Mesh::new(1.0, 2).unwrap(), &k);
        assert!(matches!(err, Err(FemError::Parameter(_))));
    }

    #[test]
    fn shape_errors() {
        let sys = assemble(&BeamParameters::hesse2012(), &Mesh::new(1.0, 2).unwrap(), &Mat6::zeros()).unwrap();
        let y = DVector::zeros(3);
        assert!(matches!(sys.eval_q(&y), Err(FemError::Shape { .. })));
    }
}
