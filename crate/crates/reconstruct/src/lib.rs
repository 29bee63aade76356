//! Recovery of centerline positions and cross-section rotations from
//! intrinsic trajectories, by quaternion marching in time or in space.

use fem::{node_value, Mesh};
use integrate::Trajectory;
use model_core::linalg::skew;
use model_core::{BeamParameters, Mat3, Vec3};
use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use thiserror::Error;

/// Allowed deviation of `|𝐪|` from 1 where a rotation is claimed.
pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error("quaternion is not unit (|q| = {0})")]
    NotUnit(f64),
    #[error("matrix is not a rotation (orthogonality defect {defect:e}, det {det})")]
    NotRotation { defect: f64, det: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular Cayley system")]
    Singular,
}

pub type Result<T> = std::result::Result<T, ReconstructError>;

/// `𝐪 = (q₀, q)` with real part `q₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub q0: f64,
    pub q: Vec3,
}

impl Quaternion {
    pub fn new(q0: f64, q: Vec3) -> Self {
        Self { q0, q }
    }

    pub fn identity() -> Self {
        Self::new(1.0, Vec3::zeros())
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], Vec3::new(v[1], v[2], v[3]))
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.q0, self.q[0], self.q[1], self.q[2])
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.to_vector().dot(&other.to_vector())
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.q0, -self.q)
    }
}

/// `R = (q₀² − ⟨q,q⟩) I + 2 q qᵀ + 2 q₀ q̂`; rejects non-unit input.
pub fn quat_to_rot(quat: &Quaternion) -> Result<Mat3> {
    let n = quat.norm();
    if !((n - 1.0).abs() <= UNIT_TOL) {
        return Err(ReconstructError::NotUnit(n));
    }
    let (q0, q) = (quat.q0, quat.q);
    Ok(Mat3::identity() * (q0 * q0 - q.dot(&q)) + q * q.transpose() * 2.0 + skew(&q) * (2.0 * q0))
}

pub fn orthogonality_defect(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).norm()
}

/// Inverse of [`quat_to_rot`] with `q₀ ≥ 0`; when `q₀ = 0` the first
/// nonzero component of `q` is made positive.
pub fn rot_to_quat(r: &Mat3) -> Result<Quaternion> {
    let defect = orthogonality_defect(r);
    let det = r.determinant();
    if !(defect <= UNIT_TOL && (det - 1.0).abs() <= UNIT_TOL) {
        return Err(ReconstructError::NotRotation { defect, det });
    }
    let tr = r.trace();
    let diag = [r[(0, 0)], r[(1, 1)], r[(2, 2)]];
    // Largest of 4q₀², 4q₁², 4q₂², 4q₃² for a well-conditioned division.
    let cands = [1.0 + tr, 1.0 + 2.0 * diag[0] - tr, 1.0 + 2.0 * diag[1] - tr, 1.0 + 2.0 * diag[2] - tr];
    let best = (0..4).fold(0, |b, i| if cands[i] > cands[b] { i } else { b });
    let s = 2.0 * cands[best].max(0.0).sqrt();
    let v = match best {
        0 => Vector4::new(s / 4.0, (r[(2, 1)] - r[(1, 2)]) / s, (r[(0, 2)] - r[(2, 0)]) / s, (r[(1, 0)] - r[(0, 1)]) / s),
        1 => Vector4::new((r[(2, 1)] - r[(1, 2)]) / s, s / 4.0, (r[(0, 1)] + r[(1, 0)]) / s, (r[(0, 2)] + r[(2, 0)]) / s),
        2 => Vector4::new((r[(0, 2)] - r[(2, 0)]) / s, (r[(0, 1)] + r[(1, 0)]) / s, s / 4.0, (r[(1, 2)] + r[(2, 1)]) / s),
        _ => Vector4::new((r[(1, 0)] - r[(0, 1)]) / s, (r[(0, 2)] + r[(2, 0)]) / s, (r[(1, 2)] + r[(2, 1)]) / s, s / 4.0),
    };
    let v = v / v.norm();
    let tie = 1e-14;
    let lead = if v[0].abs() > tie { v[0] } else { v.iter().copied().find(|c| c.abs() > tie).unwrap_or(1.0) };
    Ok(Quaternion::from_vector(&if lead < 0.0 { -v } else { v }))
}

/// `𝒰(w) = ½ [[0, −wᵀ], [w, −ŵ]]`, so that `𝐪′ = 𝒰(w) 𝐪` ⇔ `R′ = R ŵ`.
pub fn u_of(w: &Vec3) -> Matrix4<f64> {
    let mut u = Matrix4::zeros();
    let wh = skew(w);
    for i in 0..3 {
        u[(0, i + 1)] = -w[i];
        u[(i + 1, 0)] = w[i];
        for j in 0..3 {
            u[(i + 1, j + 1)] = -wh[(i, j)];
        }
    }
    u * 0.5
}

/// Cayley midpoint step `(I − ½hU)⁻¹ (I + ½hU) 𝐪` with `U = 𝒰((w_k + w_{k+1})/2)`,
/// keeping the representative with `⟨𝐪ᵏ⁺¹, 𝐪ᵏ⟩ ≥ 0`. No renormalization.
pub fn advance_quaternion(q: &Quaternion, wk: &Vec3, wk1: &Vec3, h: f64) -> Result<Quaternion> {
    let u = u_of(&((wk + wk1) * 0.5)) * (0.5 * h);
    let lhs = Matrix4::identity() - u;
    let rhs = (Matrix4::identity() + u) * q.to_vector();
    let next = lhs.lu().solve(&rhs).ok_or(ReconstructError::Singular)?;
    let next = Quaternion::from_vector(&next);
    Ok(if next.dot(q) < 0.0 { next.neg() } else { next })
}

/// Centerline point and cross-section orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub p: Vec3,
    pub q: Quaternion,
}

impl Frame {
    pub fn from_rotation(p: Vec3, r: &Mat3) -> Result<Self> {
        Ok(Self { p, q: rot_to_quat(r)? })
    }

    pub fn rotation(&self) -> Result<Mat3> {
        quat_to_rot(&self.q)
    }
}

/// Frames indexed by mesh node `α` and time step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameField {
    nodes: usize,
    steps: usize,
    /// Row-major in `k`: entry `k * nodes + α`.
    frames: Vec<Frame>,
}

impl FrameField {
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn at(&self, alpha: usize, k: usize) -> &Frame {
        &self.frames[k * self.nodes + alpha]
    }

    /// All nodes at time step `k`.
    pub fn slice(&self, k: usize) -> &[Frame] {
        &self.frames[k * self.nodes..(k + 1) * self.nodes]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter()
    }

    pub fn max_norm_defect(&self) -> f64 {
        self.frames.iter().map(|f| (f.q.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Largest `‖RᵀR − I‖` over all entries.
    pub fn max_orthogonality_defect(&self) -> Result<f64> {
        self.frames.iter().try_fold(0.0, |m: f64, f| Ok(m.max(orthogonality_defect(&f.rotation()?))))
    }
}

fn split(y12: &model_core::Vec12) -> (Vec3, Vec3) {
    (y12.fixed_rows::<3>(0).into_owned(), y12.fixed_rows::<3>(3).into_owned())
}

/// Marches every node in time: `𝐪` by the Cayley midpoint step on the angular
/// velocity `v₂`, `𝐩` by the composite trapezoid rule on `𝐑 v₁`.
pub fn reconstruct_time(mesh: &Mesh, traj: &Trajectory, initial: &[Frame], parallel: bool) -> Result<FrameField> {
    let nx = mesh.nx();
    if initial.len() != nx {
        return Err(ReconstructError::Shape(format!("{} initial frames for {nx} nodes", initial.len())));
    }
    let nt = traj.states.len();
    if nt != traj.grid.nt || traj.states.iter().any(|s| s.len() != mesh.n_free()) {
        return Err(ReconstructError::Shape("trajectory does not match mesh and grid".into()));
    }
    let h = traj.grid.step();
    let march = |alpha: usize| -> Result<Vec<Frame>> {
        let mut out = Vec::with_capacity(nt);
        let mut frame = initial[alpha];
        let mut r = frame.rotation()?;
        let (mut v1, mut v2) = split(&node_value(&traj.states[0], alpha));
        out.push(frame);
        for k in 1..nt {
            let (n1, n2) = split(&node_value(&traj.states[k], alpha));
            let q = advance_quaternion(&frame.q, &v2, &n2, h)?;
            let rn = quat_to_rot(&q)?;
            let p = frame.p + (r * v1 + rn * n1) * (0.5 * h);
            frame = Frame { p, q };
            r = rn;
            (v1, v2) = (n1, n2);
            out.push(frame);
        }
        Ok(out)
    };
    let columns: Vec<Vec<Frame>> = if parallel {
        (0..nx).into_par_iter().map(march).collect::<Result<_>>()?
    } else {
        (0..nx).map(march).collect::<Result<_>>()?
    };
    let mut frames = Vec::with_capacity(nx * nt);
    for k in 0..nt {
        frames.extend(columns.iter().map(|c| c[k]));
    }
    Ok(FrameField { nodes: nx, steps: nt, frames })
}

/// Marches from the frame at `x = 0` along the P2 nodes: `𝐪` by the Cayley
/// midpoint step on `s₂ + Υc`, `𝐩` by the trapezoid rule on `𝐑 (s₁ + e₁)`,
/// with strains `s = C z`.
pub fn reconstruct_space(params: &BeamParameters, mesh: &Mesh, state: &nalgebra::DVector<f64>, boundary: &Frame) -> Result<Vec<Frame>> {
    if state.len() != mesh.n_free() {
        return Err(ReconstructError::Shape(format!("state has {} entries, expected {}", state.len(), mesh.n_free())));
    }
    let nodes = mesh.nodes();
    let strains: Vec<(Vec3, Vec3)> = nodes
        .iter()
        .enumerate()
        .map(|(a, &x)| {
            let z = node_value(state, a).fixed_rows::<6>(6).into_owned();
            let s = params.flexibility_at(x) * z;
            (s.fixed_rows::<3>(0) + Vec3::x(), s.fixed_rows::<3>(3) + params.precurvature_at(x))
        })
        .collect();
    let mut out = Vec::with_capacity(nodes.len());
    let mut frame = *boundary;
    let mut r = frame.rotation()?;
    out.push(frame);
    for a in 1..nodes.len() {
        let dx = nodes[a] - nodes[a - 1];
        let q = advance_quaternion(&frame.q, &strains[a - 1].1, &strains[a].1, dx)?;
        let rn = quat_to_rot(&q)?;
        let p = frame.p + (r * strains[a - 1].0 + rn * strains[a].0) * (0.5 * dx);
        frame = Frame { p, q };
        r = rn;
        out.push(frame);
    }
    Ok(out)
}

/// Centerline of the unsheared helical datum, parametrized by arclength.
pub fn helix_position(x: f64) -> Vec3 {
    Vec3::new(x, 1.0 - x.cos(), x.sin()) / 2f64.sqrt()
}

/// Frenet frame of the helical datum.
pub fn helix_rotation(x: f64) -> Mat3 {
    let (s, c) = x.sin_cos();
    let r2 = 2f64.sqrt();
    Mat3::new(1.0, 0.0, -1.0, s, r2 * c, s, c, -r2 * s, c) / r2
}

pub fn helix_frames(mesh: &Mesh) -> Result<Vec<Frame>> {
    mesh.nodes().into_iter().map(|x| Frame::from_rotation(helix_position(x), &helix_rotation(x))).collect()
}

/// `sup_α |p_a − p_b|` over matching nodes.
pub fn centerline_sup_diff(a: &[Frame], b: &[Frame]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.p - y.p).amax()).fold(0.0, f64::max)
}
