//! Continuous-model coefficients of the intrinsic geometrically exact beam
//! system `∂t y + A ∂x y + B̄ y = ḡ(x, y)` with `y = (v, z)`.
//!
//! Mass, flexibility and precurvature are constant along the beam; every
//! field accessor still takes `x` so that restriction can be lifted later.

pub mod linalg;

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

use linalg::{is_diagonal, is_symmetric, min_eigenvalue, skew, sym_eigen, sym_inv_sqrt, sym_sqrt};

pub type Mat3 = SMatrix<f64, 3, 3>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat12 = SMatrix<f64, 12, 12>;
pub type Vec3 = SVector<f64, 3>;
pub type Vec6 = SVector<f64, 6>;
pub type Vec12 = SVector<f64, 12>;

/// Relative symmetry tolerance for mass and flexibility.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("matrix not positive definite: {0}")]
    Definiteness(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Physical data of one beam.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamParameters {
    pub length: f64,
    pub mass: Mat6,
    pub flexibility: Mat6,
    pub precurvature: Vec3,
}

impl BeamParameters {
    pub fn new(length: f64, mass: Mat6, flexibility: Mat6, precurvature: Vec3) -> Result<Self> {
        let p = Self { length, mass, flexibility, precurvature };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(ModelError::Parameter(format!("length must be positive, got {}", self.length)));
        }
        if !self.precurvature.iter().all(|x| x.is_finite()) {
            return Err(ModelError::Parameter("precurvature must be finite".into()));
        }
        check_spd(&self.mass, "mass")?;
        check_spd(&self.flexibility, "flexibility")
    }

    /// Numerical example set: `M = diag(1,1,1,20,10,10)`,
    /// `C = diag(1e4,1e4,1e4,500,500,500)⁻¹`, `ℓ = 1`, straight.
    pub fn hesse2012() -> Self {
        let m = Vec6::from([1.0, 1.0, 1.0, 20.0, 10.0, 10.0]);
        let c = Vec6::from([1e4, 1e4, 1e4, 500.0, 500.0, 500.0]).map(|x| 1.0 / x);
        Self {
            length: 1.0,
            mass: Mat6::from_diagonal(&m),
            flexibility: Mat6::from_diagonal(&c),
            precurvature: Vec3::zeros(),
        }
    }

    pub fn mass_at(&self, _x: f64) -> Mat6 {
        self.mass
    }

    pub fn flexibility_at(&self, _x: f64) -> Mat6 {
        self.flexibility
    }

    pub fn precurvature_at(&self, _x: f64) -> Vec3 {
        self.precurvature
    }

    /// `Q^P(x) = diag(M, C)`.
    pub fn qp_at(&self, x: f64) -> Mat12 {
        block_diag(&self.mass_at(x), &self.flexibility_at(x))
    }

    pub fn is_diagonal(&self) -> bool {
        is_diagonal(&self.mass) && is_diagonal(&self.flexibility)
    }
}

fn check_spd(m: &Mat6, name: &str) -> Result<()> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err(ModelError::Parameter(format!("{name} has non-finite entries")));
    }
    if !is_symmetric(m, SYMMETRY_TOL) {
        return Err(ModelError::Parameter(format!("{name} is not symmetric")));
    }
    let lmin = min_eigenvalue(m);
    if lmin <= 0.0 {
        return Err(ModelError::Definiteness(format!("{name} has smallest eigenvalue {lmin}")));
    }
    Ok(())
}

/// Prismatic isotropic cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicSection {
    pub density: f64,
    pub area: f64,
    pub young: f64,
    pub shear: f64,
    pub i2: f64,
    pub i3: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

/// `M = ρ diag(a I₃, J)` and `C = diag(S₁, S₂)⁻¹` with
/// `J = diag((I₂+I₃)k₁, I₂, I₃)`, `S₁ = a diag(E, k₂G, k₃G)`, `S₂ = J diag(G, E, E)`.
pub fn isotropic_mass_flex(s: &IsotropicSection) -> Result<(Mat6, Mat6)> {
    let fields = [
        ("density", s.density),
        ("area", s.area),
        ("young", s.young),
        ("shear", s.shear),
        ("i2", s.i2),
        ("i3", s.i3),
        ("k1", s.k1),
        ("k2", s.k2),
        ("k3", s.k3),
    ];
    for (name, v) in fields {
        if !(v.is_finite() && v > 0.0) {
            return Err(ModelError::Parameter(format!("section field {name} must be positive, got {v}")));
        }
    }
    let j = [(s.i2 + s.i3) * s.k1, s.i2, s.i3];
    let s1 = [s.area * s.young, s.area * s.k2 * s.shear, s.area * s.k3 * s.shear];
    let s2 = [j[0] * s.shear, j[1] * s.young, j[2] * s.young];
    let m = Vec6::from([s.area, s.area, s.area, j[0], j[1], j[2]]) * s.density;
    let c = Vec6::from([s1[0], s1[1], s1[2], s2[0], s2[1], s2[2]]).map(|x| 1.0 / x);
    Ok((Mat6::from_diagonal(&m), Mat6::from_diagonal(&c)))
}

/// Intrinsic state at one point: velocities `v = (V, W)`, stresses `z = (Φ, Ψ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointState {
    pub v: Vec6,
    pub z: Vec6,
}

impl PointState {
    pub fn from_vector(y: &Vec12) -> Self {
        Self { v: y.fixed_rows::<6>(0).into_owned(), z: y.fixed_rows::<6>(6).into_owned() }
    }

    pub fn to_vector(&self) -> Vec12 {
        stack(&self.v, &self.z)
    }

    /// `s = C z`.
    pub fn strains(&self, flexibility: &Mat6) -> Vec6 {
        flexibility * self.z
    }
}

pub fn stack(a: &Vec6, b: &Vec6) -> Vec12 {
    let mut y = Vec12::zeros();
    y.fixed_rows_mut::<6>(0).copy_from(a);
    y.fixed_rows_mut::<6>(6).copy_from(b);
    y
}

pub fn block_diag(a: &Mat6, b: &Mat6) -> Mat12 {
    blocks(a, &Mat6::zeros(), &Mat6::zeros(), b)
}

/// `[[a, b], [c, d]]`.
pub fn blocks(a: &Mat6, b: &Mat6, c: &Mat6, d: &Mat6) -> Mat12 {
    let mut m = Mat12::zeros();
    m.fixed_view_mut::<6, 6>(0, 0).copy_from(a);
    m.fixed_view_mut::<6, 6>(0, 6).copy_from(b);
    m.fixed_view_mut::<6, 6>(6, 0).copy_from(c);
    m.fixed_view_mut::<6, 6>(6, 6).copy_from(d);
    m
}

fn blocks3(b: [[Mat3; 2]; 2]) -> Mat6 {
    let mut m = Mat6::zeros();
    for (i, row) in b.iter().enumerate() {
        for (j, blk) in row.iter().enumerate() {
            m.fixed_view_mut::<3, 3>(3 * i, 3 * j).copy_from(blk);
        }
    }
    m
}

/// `E = [[Υ̂c, 0], [ê₁, Υ̂c]]`.
pub fn build_e(precurvature: &Vec3) -> Mat6 {
    let u = skew(precurvature);
    blocks3([[u, Mat3::zeros()], [skew(&Vec3::x()), u]])
}

/// `[[0, I], [I, 0]]` in 6×6 blocks.
pub fn swap_matrix() -> Mat12 {
    blocks(&Mat6::zeros(), &Mat6::identity(), &Mat6::identity(), &Mat6::zeros())
}

/// `A = −(Q^P)⁻¹[[0,I],[I,0]]` and `B̄ = (Q^P)⁻¹[[0,−E],[Eᵀ,0]]` at `x`.
pub fn build_a_bbar(params: &BeamParameters, x: f64) -> Result<(Mat12, Mat12)> {
    let qp_inv = params
        .qp_at(x)
        .try_inverse()
        .ok_or_else(|| ModelError::Definiteness("Q^P is singular".into()))?;
    let a = -qp_inv * swap_matrix();
    let b = qp_inv * bold_b(params, x);
    Ok((a, b))
}

/// `Q^P A`, independent of the coefficients.
pub fn bold_a() -> Mat12 {
    -swap_matrix()
}

/// `Q^P B̄ = [[0, −E], [Eᵀ, 0]]`, skew-symmetric.
pub fn bold_b(params: &BeamParameters, x: f64) -> Mat12 {
    let e = build_e(&params.precurvature_at(x));
    blocks(&Mat6::zeros(), &-e, &e.transpose(), &Mat6::zeros())
}

/// Quadratic-term matrix
/// `𝒢(u) = −[[û₂,0,0,û₃],[û₁,û₂,û₃,û₄],[0,0,û₂,û₁],[0,0,0,û₂]]`
/// with `u = (u₁,u₂,u₃,u₄)` split into 3-vectors.
pub fn calg(u: &Vec12) -> Mat12 {
    let h: [Mat3; 4] = std::array::from_fn(|k| skew(&u.fixed_rows::<3>(3 * k).into_owned()));
    let z = Mat3::zeros();
    let layout = [
        [h[1], z, z, h[2]],
        [h[0], h[1], h[2], h[3]],
        [z, z, h[1], h[0]],
        [z, z, z, h[1]],
    ];
    let mut m = Mat12::zeros();
    for (i, row) in layout.iter().enumerate() {
        for (j, blk) in row.iter().enumerate() {
            m.fixed_view_mut::<3, 3>(3 * i, 3 * j).copy_from(&-blk);
        }
    }
    m
}

/// `ḡ(x, u) = Q^P(x)⁻¹ 𝒢(u) Q^P(x) u`.
pub fn gbar(qp: &Mat12, u: &Vec12) -> Result<Vec12> {
    let rhs = calg(u) * (qp * u);
    qp.clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| ModelError::Definiteness("Q^P is not positive definite".into()))
}

/// Characteristic decomposition `L A L⁻¹ = diag(−D, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagonalization {
    /// Wave speeds, the diagonal of `D`.
    pub d: Vec6,
    /// Orthogonal factor in `Θ = Uᵀ D² U`.
    pub u: Mat6,
    pub l: Mat12,
    pub l_inv: Mat12,
    /// `(−D, D)` flattened.
    pub eigenvalues: Vec12,
}

impl Diagonalization {
    pub fn d_matrix(&self) -> Mat6 {
        Mat6::from_diagonal(&self.d)
    }

    /// `diag(−D, D)`.
    pub fn lambda_matrix(&self) -> Mat12 {
        Mat12::from_diagonal(&self.eigenvalues)
    }
}

/// Diagonalizes `A` through `Θ = (C^{1/2} M C^{1/2})⁻¹ = Uᵀ D² U`.
///
/// Diagonal `M`, `C` keep `U = I` and the natural component order.
/// Otherwise eigenvalues of `Θ` are ascending.
pub fn diagonalize(params: &BeamParameters, x: f64) -> Result<Diagonalization> {
    let m = params.mass_at(x);
    let c = params.flexibility_at(x);
    check_spd(&m, "mass")?;
    check_spd(&c, "flexibility")?;
    let (d, u) = if is_diagonal(&m) && is_diagonal(&c) {
        let d = Vec6::from_fn(|i, _| 1.0 / (m[(i, i)] * c[(i, i)]).sqrt());
        (d, Mat6::identity())
    } else {
        let ch = sym_sqrt(&c);
        let inner = ch * m * ch;
        let theta = inner.try_inverse().ok_or_else(|| ModelError::Definiteness("C^½MC^½ singular".into()))?;
        let (vals, vecs) = sym_eigen(&theta);
        (vals.map(f64::sqrt), vecs.transpose())
    };
    let dm = Mat6::from_diagonal(&d);
    let dinv = Mat6::from_diagonal(&d.map(|x| 1.0 / x));
    let ch = sym_sqrt(&c);
    let cih = sym_inv_sqrt(&c);
    let top_left = u * cih;
    let right = dm * u * ch;
    let l = blocks(&top_left, &right, &top_left, &-right);
    let p = ch * u.transpose() * 0.5;
    let q = cih * u.transpose() * dinv * 0.5;
    let l_inv = blocks(&p, &p, &q, &-q);
    let eigenvalues = stack(&-d, &d);
    Ok(Diagonalization { d, u, l, l_inv, eigenvalues })
}

/// `r = L y`.
pub fn to_riemann(y: &Vec12, diag: &Diagonalization) -> Vec12 {
    diag.l * y
}

/// `y = L⁻¹ r`.
pub fn from_riemann(r: &Vec12, diag: &Diagonalization) -> Vec12 {
    diag.l_inv * r
}

/// Non-reflecting feedback `K = C^{−1/2}(C^{1/2} M C^{1/2})^{1/2} C^{−1/2}`.
pub fn transparent_k(params: &BeamParameters, x: f64) -> Result<Mat6> {
    let m = params.mass_at(x);
    let c = params.flexibility_at(x);
    check_spd(&m, "mass")?;
    check_spd(&c, "flexibility")?;
    let ch = sym_sqrt(&c);
    let cih = sym_inv_sqrt(&c);
    let k = cih * sym_sqrt(&(ch * m * ch)) * cih;
    Ok((k + k.transpose()) * 0.5)
}

/// Diagonal of `M^{1/2} C^{−1/2}` for diagonal coefficients.
pub fn impedances(params: &BeamParameters, x: f64) -> Result<Vec6> {
    let m = params.mass_at(x);
    let c = params.flexibility_at(x);
    if !(is_diagonal(&m) && is_diagonal(&c)) {
        return Err(ModelError::Unsupported("impedances need diagonal mass and flexibility".into()));
    }
    Ok(Vec6::from_fn(|i, _| (m[(i, i)] / c[(i, i)]).sqrt()))
}

/// `(μ₁, μ₂)` with `μ₁ = √(min b₁..₃ · max b₁..₃)` and `μ₂` likewise over
/// `b₄..₆`, where `b` is the diagonal of `M^{1/2} C^{−1/2}`.
pub fn near_transparent_mu(params: &BeamParameters, x: f64) -> Result<(f64, f64)> {
    let b = impedances(params, x)?;
    let geo = |s: &[f64]| {
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo * hi).sqrt()
    };
    Ok((geo(&b.as_slice()[..3]), geo(&b.as_slice()[3..])))
}

/// `diag(μ₁ I₃, μ₂ I₃)`.
pub fn near_transparent_k(params: &BeamParameters, x: f64) -> Result<Mat6> {
    let (m1, m2) = near_transparent_mu(params, x)?;
    Ok(Mat6::from_diagonal(&Vec6::from([m1, m1, m1, m2, m2, m2])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_section() {
        let s = IsotropicSection {
            density: 1.0,
            area: 1.0,
            young: 1.0,
            shear: 1.0,
            i2: 1.0,
            i3: 1.0,
            k1: 1.0,
            k2: 1.0,
            k3: 1.0,
        };
        let (m, c) = isotropic_mass_flex(&s).unwrap();
        assert_eq!(m.diagonal(), Vec6::from([1.0, 1.0, 1.0, 2.0, 1.0, 1.0]));
        assert_eq!(c.diagonal(), Vec6::from([1.0, 1.0, 1.0, 0.5, 1.0, 1.0]));
        let (m2, c2) = isotropic_mass_flex(&IsotropicSection { density: 2.0, ..s }).unwrap();
        assert_eq!(m2, m * 2.0);
        assert_eq!(c2, c);
        assert!(isotropic_mass_flex(&IsotropicSection { k2: 0.0, ..s }).is_err());
    }

    #[test]
    fn e_with_twist() {
        let e = build_e(&Vec3::new(1.0, 0.0, 0.0));
        let expect = Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_eq!(e.fixed_view::<3, 3>(0, 0), expect);
        assert_eq!(e.fixed_view::<3, 3>(3, 3), expect);
        let e0 = build_e(&Vec3::zeros());
        assert_eq!(e0.fixed_view::<3, 3>(3, 0), skew(&Vec3::x()));
        assert_eq!(e0.iter().filter(|x| **x != 0.0).count(), 2);
    }

    #[test]
    fn unit_coefficients() {
        let p = BeamParameters::new(1.0, Mat6::identity(), Mat6::identity(), Vec3::zeros()).unwrap();
        let (a, b) = build_a_bbar(&p, 0.0).unwrap();
        assert_eq!(a, -swap_matrix());
        assert_eq!(b, bold_b(&p, 0.0));
        let d = diagonalize(&p, 0.0).unwrap();
        assert_eq!(d.d, Vec6::repeat(1.0));
        assert_eq!(transparent_k(&p, 0.0).unwrap(), Mat6::identity());
        assert_eq!(near_transparent_mu(&p, 0.0).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn hesse_speeds_and_feedback() {
        let p = BeamParameters::hesse2012();
        let d = diagonalize(&p, 0.0).unwrap();
        let expect = [100.0, 100.0, 100.0, 5.0, 50f64.sqrt(), 50f64.sqrt()];
        for i in 0..6 {
            assert_relative_eq!(d.d[i], expect[i], max_relative = 1e-14);
        }
        let k = transparent_k(&p, 0.0).unwrap();
        let kexp = [100.0, 100.0, 100.0, 100.0, 5000f64.sqrt(), 5000f64.sqrt()];
        for i in 0..6 {
            assert_relative_eq!(k[(i, i)], kexp[i], max_relative = 1e-13);
        }
        let (m1, m2) = near_transparent_mu(&p, 0.0).unwrap();
        assert_relative_eq!(m1, 100.0, max_relative = 1e-13);
        assert_relative_eq!(m2, (100.0 * 5000f64.sqrt()).sqrt(), max_relative = 1e-13);
        assert!((m2 - 84.090).abs() < 1e-3);
    }

    #[test]
    fn non_diagonal_mu_rejected() {
        let mut m = Mat6::identity();
        m[(0, 1)] = 0.1;
        m[(1, 0)] = 0.1;
        let p = BeamParameters::new(1.0, m, Mat6::identity(), Vec3::zeros()).unwrap();
        assert!(matches!(near_transparent_mu(&p, 0.0), Err(ModelError::Unsupported(_))));
    }

    #[test]
    fn invalid_parameters() {
        let mut m = Mat6::identity();
        m[(0, 1)] = 0.5;
        assert!(BeamParameters::new(1.0, m, Mat6::identity(), Vec3::zeros()).is_err());
        assert!(BeamParameters::new(0.0, Mat6::identity(), Mat6::identity(), Vec3::zeros()).is_err());
        let mut n = Mat6::identity();
        n[(2, 2)] = -1.0;
        assert!(matches!(
            BeamParameters::new(1.0, n, Mat6::identity(), Vec3::zeros()),
            Err(ModelError::Definiteness(_))
        ));
    }

    #[test]
    fn riemann_unit_case() {
        let p = BeamParameters::new(1.0, Mat6::identity(), Mat6::identity(), Vec3::zeros()).unwrap();
        let d = diagonalize(&p, 0.0).unwrap();
        let y = Vec12::from_fn(|i, _| i as f64 - 3.5);
        let r = to_riemann(&y, &d);
        let v = y.fixed_rows::<6>(0);
        let z = y.fixed_rows::<6>(6);
        for i in 0..6 {
            assert_relative_eq!(r[i], v[i] + z[i], epsilon = 1e-14);
            assert_relative_eq!(r[i + 6], v[i] - z[i], epsilon = 1e-14);
        }
        assert_eq!(to_riemann(&Vec12::zeros(), &d), Vec12::zeros());
    }
}
