//! Boundary matrices `𝓜ₙ = ℬₙᵀ Qₙᵒᵘᵗ D̄ₙ ℬₙ − Qₙⁱⁿ D̄ₙ` of the Riemann-invariant
//! network formulation and their negative-semidefiniteness verdicts.
//!
//! Orientation follows the tree convention: node 0 is the start `x = 0` of
//! beam 1; every other node is the end `x = ℓ` of exactly one beam, listed
//! first, and a multiple node is also the start of the remaining beams.

use lyapunov::{certificate, CertificateSettings, LyapunovError, WVariant, Weight, DEFAULT_GRID};
use model_core::linalg::{is_symmetric, min_eigenvalue, sym_eigen, sym_inv_sqrt, sym_sqrt};
use model_core::{diagonalize, BeamParameters, Mat3, Mat6, ModelError};
use nalgebra::DMatrix;
use thiserror::Error;

/// NSD verdict tolerance relative to the size of the terms of `𝓜ₙ`.
pub const NSD_TOL: f64 = 1e-10;
pub const FRAME_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("singular nodal system at node {0}")]
    Singular(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Start,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub beam: usize,
    pub end: End,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Velocity feedback `K` (symmetric positive definite).
    Controlled(Mat6),
    Free,
    Clamped,
    /// Rigid joint; `K = 0` or a feedback applied at the joint.
    Multiple(Mat6),
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Controlled(_) => "simple_controlled",
            Self::Free => "simple_free",
            Self::Clamped => "simple_clamped",
            Self::Multiple(_) => "multiple",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub kind: NodeKind,
    pub incident: Vec<Incidence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamSpec {
    pub params: BeamParameters,
    /// Constant frame `R_i` of the undeformed beam.
    pub frame: Mat3,
    pub weight: Weight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub beams: Vec<BeamSpec>,
    pub nodes: Vec<NodeSpec>,
    pub rho: f64,
}

fn rbar(r: &Mat3) -> Mat6 {
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    m
}

pub fn rot_z(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Per-beam data at the node: `γ = R̄ C^{1/2} Uᵀ`, `σ = R̄ C^{−1/2} Uᵀ D⁻¹ U C^{−1/2} R̄ᵀ`,
/// the wave speeds `D` and the weight value.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamAtNode {
    pub gamma: Mat6,
    pub sigma: Mat6,
    pub d: Mat6,
    pub w: f64,
    pub end: End,
}

pub fn beam_at_node(beam: &BeamSpec, end: End) -> Result<BeamAtNode> {
    let r = beam.frame;
    let defect = (r.transpose() * r - Mat3::identity()).amax();
    if !(defect <= FRAME_TOL && (r.determinant() - 1.0).abs() <= FRAME_TOL) {
        return Err(NetworkError::Parameter(format!("beam frame is not a rotation (defect {defect:e})")));
    }
    let x = match end {
        End::Start => 0.0,
        End::End => beam.params.length,
    };
    let diag = diagonalize(&beam.params, x)?;
    let c = beam.params.flexibility_at(x);
    let ch = sym_sqrt(&c);
    let cih = sym_inv_sqrt(&c);
    let rb = rbar(&r);
    let d = diag.d_matrix();
    let d_inv = Mat6::from_diagonal(&diag.d.map(|v| 1.0 / v));
    let gamma = rb * ch * diag.u.transpose();
    let sigma = rb * cih * diag.u.transpose() * d_inv * diag.u * cih * rb.transpose();
    Ok(BeamAtNode { gamma, sigma: (sigma + sigma.transpose()) * 0.5, d, w: beam.weight.value(x), end })
}

/// Precursors of `𝓜ₙ` for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalMatrices {
    pub node: usize,
    pub kind: NodeKind,
    pub beams: Vec<BeamAtNode>,
    /// `K̄ₙ = R̄ Kₙ R̄ᵀ` in the frame of the first incident beam.
    pub kbar: Mat6,
    pub g: DMatrix<f64>,
    pub d_bar: DMatrix<f64>,
    pub q_out: DMatrix<f64>,
    pub q_in: DMatrix<f64>,
    /// `w̄ₙ`: `+w` at an `x = ℓ` end, `−w` at an `x = 0` end.
    pub w_bar: DMatrix<f64>,
}

fn block_diag_dyn(blocks: &[Mat6]) -> DMatrix<f64> {
    let n = blocks.len();
    let mut m = DMatrix::zeros(6 * n, 6 * n);
    for (k, b) in blocks.iter().enumerate() {
        m.view_mut((6 * k, 6 * k), (6, 6)).copy_from(b);
    }
    m
}

fn check_feedback(k: &Mat6, node: usize, definite: bool) -> Result<()> {
    if !is_symmetric(k, model_core::SYMMETRY_TOL * k.amax().max(1.0)) {
        return Err(NetworkError::Parameter(format!("feedback at node {node} is not symmetric")));
    }
    let lmin = min_eigenvalue(k);
    let ok = if definite { lmin > 0.0 } else { *k == Mat6::zeros() || lmin > 0.0 };
    if !ok {
        let need = if definite { "positive definite" } else { "zero or positive definite" };
        return Err(NetworkError::Parameter(format!("feedback at node {node} must be {need}")));
    }
    Ok(())
}

impl Network {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(NetworkError::Parameter(format!("rho must be positive, got {}", self.rho)));
        }
        if self.beams.is_empty() || self.nodes.len() != self.beams.len() + 1 {
            return Err(NetworkError::Unsupported("a tree with N beams needs N + 1 nodes".into()));
        }
        for (n, node) in self.nodes.iter().enumerate() {
            let inc = &node.incident;
            if inc.iter().any(|i| i.beam >= self.beams.len()) {
                return Err(NetworkError::Parameter(format!("node {n} references a missing beam")));
            }
            let simple = !matches!(node.kind, NodeKind::Multiple(_));
            let expect_first = if n == 0 { Incidence { beam: 0, end: End::Start } } else { Incidence { beam: n - 1, end: End::End } };
            if inc.first() != Some(&expect_first) {
                return Err(NetworkError::Unsupported(format!(
                    "node {n} must list beam {} at its {} first",
                    expect_first.beam + 1,
                    if n == 0 { "start" } else { "end" }
                )));
            }
            if simple && inc.len() != 1 {
                return Err(NetworkError::Parameter(format!("simple node {n} must have degree 1")));
            }
            if !simple && (n == 0 || inc.len() < 2 || inc[1..].iter().any(|i| i.end != End::Start)) {
                return Err(NetworkError::Unsupported(format!("multiple node {n} must join one beam end with beam starts")));
            }
            match &node.kind {
                NodeKind::Controlled(k) => check_feedback(k, n, true)?,
                NodeKind::Multiple(k) => check_feedback(k, n, false)?,
                _ => {}
            }
        }
        let mut starts = vec![0; self.beams.len()];
        for node in &self.nodes {
            for i in node.incident.iter().filter(|i| i.end == End::Start) {
                starts[i.beam] += 1;
            }
        }
        if starts.iter().any(|&s| s != 1) {
            return Err(NetworkError::Parameter("every beam must start at exactly one node".into()));
        }
        Ok(())
    }

    pub fn nodal_matrices(&self, node: usize) -> Result<NodalMatrices> {
        let spec = self.nodes.get(node).ok_or_else(|| NetworkError::Parameter(format!("no node {node}")))?;
        let beams = spec.incident.iter().map(|i| beam_at_node(&self.beams[i.beam], i.end)).collect::<Result<Vec<_>>>()?;
        let first = rbar(&self.beams[spec.incident[0].beam].frame);
        let k = match &spec.kind {
            NodeKind::Controlled(k) | NodeKind::Multiple(k) => *k,
            _ => Mat6::zeros(),
        };
        let kbar = first * k * first.transpose();
        let rho = self.rho;
        // Qᵢ⁻ = (ρ + w) ½ D⁻², Qᵢ⁺ = (ρ − w) ½ D⁻².
        let q = |b: &BeamAtNode, minus: bool| {
            let f = if minus { rho + b.w } else { rho - b.w };
            Mat6::from_diagonal(&b.d.diagonal().map(|v| 0.5 * f / (v * v)))
        };
        let (outs, ins): (Vec<Mat6>, Vec<Mat6>) = beams
            .iter()
            .map(|b| match b.end {
                End::End => (q(b, true), q(b, false)),
                End::Start => (q(b, false), q(b, true)),
            })
            .unzip();
        let wbar: Vec<Mat6> = beams.iter().map(|b| Mat6::identity() * if b.end == End::End { b.w } else { -b.w }).collect();
        Ok(NodalMatrices {
            node,
            kind: spec.kind.clone(),
            g: block_diag_dyn(&beams.iter().map(|b| b.gamma).collect::<Vec<_>>()),
            d_bar: block_diag_dyn(&beams.iter().map(|b| b.d).collect::<Vec<_>>()),
            q_out: block_diag_dyn(&outs),
            q_in: block_diag_dyn(&ins),
            w_bar: block_diag_dyn(&wbar),
            kbar,
            beams,
        })
    }
}

fn ones_blocks(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(6 * k, 6 * k, |i, j| if i % 6 == j % 6 { 1.0 } else { 0.0 })
}

fn sigma_sum(nm: &NodalMatrices) -> Mat6 {
    nm.beams.iter().map(|b| b.sigma).sum()
}

/// `rₙᵒᵘᵗ = ℬₙ rₙⁱⁿ`.
pub fn reflection(nm: &NodalMatrices) -> Result<DMatrix<f64>> {
    let singular = || NetworkError::Singular(nm.node);
    match nm.kind {
        NodeKind::Free => Ok(DMatrix::identity(6, 6)),
        NodeKind::Clamped => Ok(-DMatrix::identity(6, 6)),
        NodeKind::Controlled(_) => {
            let b = &nm.beams[0];
            let lhs = (b.sigma + nm.kbar) * b.gamma;
            let rhs = (b.sigma - nm.kbar) * b.gamma;
            let sol = lhs.lu().solve(&rhs).ok_or_else(singular)?;
            Ok(DMatrix::from_column_slice(6, 6, sol.as_slice()))
        }
        NodeKind::Multiple(_) => {
            let k = nm.beams.len();
            let s = sigma_sum(nm) + nm.kbar;
            let s_inv = s.try_inverse().ok_or_else(singular)?;
            let g_inv = nm.g.clone().try_inverse().ok_or_else(singular)?;
            let sig = block_diag_dyn(&nm.beams.iter().map(|b| b.sigma).collect::<Vec<_>>());
            let sinv = block_diag_dyn(&vec![s_inv; k]);
            Ok(g_inv * sinv * ones_blocks(k) * sig * &nm.g * 2.0 - DMatrix::identity(6 * k, 6 * k))
        }
    }
}

/// `(Aₙ Gₙ)⁻¹ Bₙ Gₙ` from the transmission system of a multiple node.
pub fn reflection_from_transmission(nm: &NodalMatrices) -> Result<DMatrix<f64>> {
    let k = nm.beams.len();
    let mut a = DMatrix::zeros(6 * k, 6 * k);
    let mut b = DMatrix::zeros(6 * k, 6 * k);
    for (j, beam) in nm.beams.iter().enumerate() {
        let top = if j == 0 { beam.sigma + nm.kbar } else { beam.sigma };
        let bot = if j == 0 { beam.sigma - nm.kbar } else { beam.sigma };
        a.view_mut((0, 6 * j), (6, 6)).copy_from(&top);
        b.view_mut((0, 6 * j), (6, 6)).copy_from(&bot);
        if j > 0 {
            for d in 0..6 {
                a[(6 * j + d, d)] = -1.0;
                a[(6 * j + d, 6 * j + d)] = 1.0;
                b[(6 * j + d, d)] = 1.0;
                b[(6 * j + d, 6 * j + d)] = -1.0;
            }
        }
    }
    let ag = a * &nm.g;
    ag.lu().solve(&(b * &nm.g)).ok_or(NetworkError::Singular(nm.node))
}

fn sym_dyn(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn max_eig_dyn(m: &DMatrix<f64>) -> f64 {
    sym_dyn(m).symmetric_eigenvalues().max()
}

/// `(𝓜ₙ, scale)` with `scale = ‖ℬᵀQᵒᵘᵗD̄ℬ‖ + ‖QⁱⁿD̄‖`.
pub fn boundary_matrix(nm: &NodalMatrices, b: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let out = b.transpose() * &nm.q_out * &nm.d_bar * b;
    let inn = &nm.q_in * &nm.d_bar;
    let scale = out.amax() + inn.amax();
    (sym_dyn(&(out - inn)), scale)
}

/// Congruent form `𝓜̃ₙ`; `None` when it is not defined for the node.
pub fn m_tilde(nm: &NodalMatrices, rho: f64) -> Option<DMatrix<f64>> {
    match nm.kind {
        NodeKind::Free | NodeKind::Clamped => {
            let d_inv = nm.d_bar.map(|v| if v != 0.0 { 1.0 / v } else { 0.0 });
            Some(&nm.w_bar * d_inv)
        }
        NodeKind::Controlled(_) => {
            let w = nm.w_bar[(0, 0)];
            let diag: Vec<f64> = upsilon(nm)?
                .into_iter()
                .map(|u| {
                    let f = reflection_factor(u);
                    rho * (f - 1.0) + w * (f + 1.0)
                })
                .collect();
            Some(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
        }
        NodeKind::Multiple(k) => {
            if !(k == Mat6::zeros() || min_eigenvalue(&k) > 0.0) {
                return None;
            }
            let kn = nm.beams.len();
            let ones = ones_blocks(kn);
            let sig = block_diag_dyn(&nm.beams.iter().map(|b| b.sigma).collect::<Vec<_>>());
            let sig_inv = block_diag_dyn(&nm.beams.iter().map(|b| b.sigma.try_inverse().unwrap()).collect::<Vec<_>>());
            let s = block_diag_dyn(&vec![sigma_sum(nm) + nm.kbar; kn]);
            let kbar = block_diag_dyn(&vec![nm.kbar; kn]);
            let w = &nm.w_bar;
            let m = &ones * kbar * &ones * (-2.0 * rho / kn as f64) + &ones * w * &sig * &ones * 2.0
                - &ones * w * &s
                - &s * w * &ones
                + w * &s * sig_inv * &s;
            Some(sym_dyn(&m))
        }
    }
}

/// Eigenvalues `Υ` of `D̄^{1/2} γᵀ K̄ γ D̄^{1/2}` at a controlled node.
pub fn upsilon(nm: &NodalMatrices) -> Option<Vec<f64>> {
    match nm.kind {
        NodeKind::Controlled(_) => {
            let b = &nm.beams[0];
            let dh = Mat6::from_diagonal(&b.d.diagonal().map(f64::sqrt));
            let m = dh * b.gamma.transpose() * nm.kbar * b.gamma * dh;
            Some(sym_eigen(&((m + m.transpose()) * 0.5)).0.iter().copied().collect())
        }
        _ => None,
    }
}

fn reflection_factor(u: f64) -> f64 {
    (1.0 - u).powi(2) / (1.0 + u).powi(2)
}

/// `C_K = maxⱼ (f_j − 1)/(f_j + 1)` with `f = (1 − Υ)²/(1 + Υ)²`.
pub fn feedback_constant(nm: &NodalMatrices) -> Option<f64> {
    upsilon(nm).map(|ups| ups.iter().map(|&u| (reflection_factor(u) - 1.0) / (reflection_factor(u) + 1.0)).fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodalCertificate {
    pub node: usize,
    pub kind: &'static str,
    pub gammas: Vec<Mat6>,
    pub sigmas: Vec<Mat6>,
    pub kbar: Mat6,
    /// Largest 2-norm condition number among the `γᵢⁿ`.
    pub gamma_condition: f64,
    pub reflection: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub m_tilde: Option<DMatrix<f64>>,
    pub max_eig: f64,
    pub tilde_max_eig: Option<f64>,
    pub scale: f64,
    pub verdict: bool,
}

pub fn nodal_certificate(net: &Network, node: usize) -> Result<NodalCertificate> {
    let nm = net.nodal_matrices(node)?;
    let b = reflection(&nm)?;
    let (m, scale) = boundary_matrix(&nm, &b);
    let max_eig = max_eig_dyn(&m);
    let mt = m_tilde(&nm, net.rho);
    Ok(NodalCertificate {
        node,
        kind: nm.kind.name(),
        gammas: nm.beams.iter().map(|b| b.gamma).collect(),
        sigmas: nm.beams.iter().map(|b| b.sigma).collect(),
        kbar: nm.kbar,
        gamma_condition: nm.beams.iter().map(|b| {
            let sv = b.gamma.singular_values();
            sv.max() / sv.min()
        }).fold(0.0, f64::max),
        tilde_max_eig: mt.as_ref().map(max_eig_dyn),
        m_tilde: mt,
        reflection: b,
        verdict: max_eig <= NSD_TOL * scale,
        m,
        max_eig,
        scale,
    })
}

/// Interior conditions (i)–(iii) of one beam.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamCertificate {
    pub beam: usize,
    pub q_min_eig: f64,
    pub s_max_eig: f64,
    pub conditions: [bool; 3],
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCertificate {
    pub nodes: Vec<NodalCertificate>,
    pub beams: Vec<BeamCertificate>,
    pub pass: bool,
}

impl NetworkCertificate {
    /// `key = value` lines.
    pub fn report(&self) -> String {
        let mut out = format!("pass = {}\n", self.pass);
        for n in &self.nodes {
            out += &format!(
                "node {} kind = {} max_eig_M = {:e} scale = {:e} cond_gamma = {:e} verdict = {}\n",
                n.node, n.kind, n.max_eig, n.scale, n.gamma_condition, n.verdict
            );
            if let Some(t) = n.tilde_max_eig {
                out += &format!("node {} max_eig_M_tilde = {:e}\n", n.node, t);
            }
        }
        for b in &self.beams {
            out += &format!(
                "beam {} min_eig_Q = {:e} max_eig_S = {:e} verdict = {}\n",
                b.beam + 1,
                b.q_min_eig,
                b.s_max_eig,
                b.verdict
            );
        }
        out
    }

    pub fn failing_nodes(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| !n.verdict).map(|n| n.node).collect()
    }
}

/// Certifies every node and the interior conditions of every beam
/// (square-root `W`, common `ρ`).
pub fn network_certificate(net: &Network) -> Result<NetworkCertificate> {
    net.validate()?;
    let nodes = (0..net.nodes.len()).map(|n| nodal_certificate(net, n)).collect::<Result<Vec<_>>>()?;
    let beams = net
        .beams
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let settings = CertificateSettings { rho: net.rho, weight: b.weight, variant: WVariant::Sqrt, grid_pts: DEFAULT_GRID };
            let c = certificate(&b.params, &Mat6::zeros(), &settings)?;
            let conditions = [c.conditions[0], c.conditions[1], c.conditions[2]];
            Ok(BeamCertificate {
                beam: i,
                q_min_eig: c.margins.q_min_eig,
                s_max_eig: c.margins.s_max_eig,
                conditions,
                verdict: conditions.iter().all(|&x| x),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = nodes.iter().all(|n| n.verdict) && beams.iter().all(|b| b.verdict);
    Ok(NetworkCertificate { nodes, beams, pass })
}

/// Star certificate: exactly one multiple node (node 1) joining beam 1's end
/// with the starts of beams `2..N`; `N = 1` is a single beam.
pub fn star_certificate(net: &Network) -> Result<NetworkCertificate> {
    net.validate()?;
    let multiple: Vec<usize> = net.nodes.iter().enumerate().filter(|(_, n)| matches!(n.kind, NodeKind::Multiple(_))).map(|(i, _)| i).collect();
    let ok = match net.beams.len() {
        1 => multiple.is_empty(),
        n => multiple == vec![1] && net.nodes[1].incident.len() == n,
    };
    if !ok {
        return Err(NetworkError::Unsupported("not a star: need a single multiple node joining every beam".into()));
    }
    network_certificate(net)
}

/// Star of `beams.len()` beams: node 0 at the start of beam 1, node 1 the
/// joint, node `i` the end of beam `i` for `i ≥ 2`.
pub fn star(beams: Vec<BeamSpec>, rho: f64, root: NodeKind, joint: Mat6, tips: Vec<NodeKind>) -> Result<Network> {
    let n = beams.len();
    if tips.len() + 1 != n {
        return Err(NetworkError::Parameter(format!("{n} beams need {} tip nodes", n.saturating_sub(1))));
    }
    let mut nodes = vec![NodeSpec { kind: root, incident: vec![Incidence { beam: 0, end: End::Start }] }];
    let mut joint_inc = vec![Incidence { beam: 0, end: End::End }];
    joint_inc.extend((1..n).map(|b| Incidence { beam: b, end: End::Start }));
    if n == 1 {
        return Err(NetworkError::Parameter("use single_beam for N = 1".into()));
    }
    nodes.push(NodeSpec { kind: NodeKind::Multiple(joint), incident: joint_inc });
    for (i, kind) in tips.into_iter().enumerate() {
        nodes.push(NodeSpec { kind, incident: vec![Incidence { beam: i + 1, end: End::End }] });
    }
    Ok(Network { beams, nodes, rho })
}

/// One beam clamped at `x = 0` and closed by `end` at `x = ℓ`.
pub fn single_beam(beam: BeamSpec, rho: f64, end: NodeKind) -> Network {
    Network {
        beams: vec![beam],
        nodes: vec![
            NodeSpec { kind: NodeKind::Clamped, incident: vec![Incidence { beam: 0, end: End::Start }] },
            NodeSpec { kind: end, incident: vec![Incidence { beam: 0, end: End::End }] },
        ],
        rho,
    }
}

/// Count of (positive, negative, zero) eigenvalues; `|λ| ≤ band` is zero.
pub fn inertia(m: &DMatrix<f64>, band: f64) -> (usize, usize, usize) {
    sym_dyn(m).symmetric_eigenvalues().iter().fold((0, 0, 0), |(p, n, z), &v| {
        if v > band {
            (p + 1, n, z)
        } else if v < -band {
            (p, n + 1, z)
        } else {
            (p, n, z + 1)
        }
    })
}
