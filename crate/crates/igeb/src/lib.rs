//! Configuration-driven commands over the beam crates.

pub mod config;
pub mod io;

use std::path::Path;

use fem::{from_nodes, Mesh};
use integrate::initial::{helix_state, HelixVelocity};
use integrate::{simulate, NewtonSettings, TimeGrid, Trajectory};
use lyapunov::{certificate, lyapunov_matrix, lyapunov_series, step5_rho, CertificateSettings};
use model_core::{bold_b, diagonalize, near_transparent_mu, transparent_k, BeamParameters, Mat3, Mat6, Vec6};
use nalgebra::DVector;
use network_cert::{rot_z, star, star_certificate, BeamSpec, NodeKind};
use reconstruct::{centerline_sup_diff, helix_frames, reconstruct_space, reconstruct_time, Frame, Quaternion};
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("config error in {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("input error: {0}")]
    Input(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        Self::Config { field: field.to_string(), reason: reason.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Input(_) => EXIT_CONFIG,
            Self::Solver(_) => EXIT_SOLVER,
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CERTIFICATE: i32 = 4;

/// Text for stdout and the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub code: i32,
}

fn solver<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Solver(e.to_string())
}

fn newton_settings(cfg: &RunConfig, n_free: usize) -> NewtonSettings {
    let mut s = NewtonSettings::default_for(n_free);
    s.max_iter = cfg.newton.max_iter;
    s.tol_rel = cfg.newton.tol_rel;
    if let Some(t) = cfg.newton.tol_abs {
        s.tol_abs = t;
    }
    s
}

/// Initial nodal vector and a note on how it was built.
pub fn initial_state(cfg: &RunConfig, params: &BeamParameters, mesh: &Mesh, k: &Mat6) -> Result<(DVector<f64>, String), CliError> {
    if let Some(file) = &cfg.initial.file {
        let values = io::read_nodal_table(file)?;
        if values.len() != mesh.nx() {
            return Err(CliError::Input(format!("{} rows in {}, mesh has {} nodes", values.len(), file.display(), mesh.nx())));
        }
        if values[0].fixed_rows::<6>(0).amax() != 0.0 {
            return Err(CliError::Input("velocity at the clamped node must be zero".into()));
        }
        return Ok((from_nodes(&values), format!("file {}", file.display())));
    }
    let y = match cfg.initial.preset_name() {
        Some("zero") => return Ok((DVector::zeros(mesh.n_free()), "zero".into())),
        Some("helix_zero_velocity") => helix_state(params, mesh, HelixVelocity::Zero, k),
        Some("helix_compatible_velocity") => helix_state(params, mesh, HelixVelocity::Compatible, k),
        other => return Err(CliError::config("initial.preset", format!("unknown preset {other:?}"))),
    }
    .map_err(|e| CliError::config("initial.preset", e.to_string()))?;
    let note = if cfg.initial.preset_name() == Some("helix_compatible_velocity") {
        "helix, velocity blended by the cubic Hermite curve 3s^2 - 2s^3 from 0 to -K^-1 z(l)"
    } else {
        "helix, zero velocity"
    };
    Ok((y, note.into()))
}

/// `ρ` after the optional rescaling to the sufficient bound.
pub fn effective_rho(cfg: &RunConfig, params: &BeamParameters, k: &Mat6) -> Result<f64, CliError> {
    let l = &cfg.lyapunov;
    if !l.rescale_rho {
        return Ok(l.rho);
    }
    let weight = l.weight.weight(params.length, "lyapunov.weight")?;
    let chi = lyapunov::chi(params, k, l.variant()?).map_err(|e| CliError::config("lyapunov", e.to_string()))?;
    Ok(chi.map_or(l.rho, |c| step5_rho(l.rho, &weight, params.length, c)))
}

pub fn cmd_simulate(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let params = cfg.beam.parameters()?;
    let k = cfg.feedback.matrix(&params)?;
    let d = cfg.discretization;
    let mesh = Mesh::new(params.length, d.ne).map_err(|e| CliError::config("discretization.ne", e.to_string()))?;
    let grid = TimeGrid::new(d.horizon, d.nt).map_err(|e| CliError::config("discretization", e.to_string()))?;
    let (y0, note) = initial_state(cfg, &params, &mesh, &k)?;
    let settings = newton_settings(cfg, mesh.n_free());
    let (_, traj) = simulate(&params, &mesh, &grid, &k, &y0, &settings).map_err(solver)?;
    let rho = effective_rho(cfg, &params, &k)?;
    let weight = cfg.lyapunov.weight.weight(params.length, "lyapunov.weight")?;
    let q = lyapunov_matrix(&params, &mesh, rho, &weight, cfg.lyapunov.variant()?);
    let lyap = lyapunov_series(&q, &traj, 0).map_err(solver)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    if cfg.output.wants("states") {
        io::write_states(&dir.join(io::STATES_FILE), &mesh, &traj)?;
    }
    if cfg.output.wants("energy") {
        io::write_energy(&dir.join(io::ENERGY_FILE), &traj, &lyap)?;
    }
    let mut meta = io::base_metadata("simulate", cfg);
    let mut run = toml::Table::new();
    run.insert("initial_datum".into(), note.into());
    run.insert("n_free".into(), (mesh.n_free() as i64).into());
    run.insert("time_step".into(), grid.step().into());
    run.insert("rho_effective".into(), rho.into());
    run.insert("max_newton_iterations".into(), (traj.iterations.iter().copied().max().unwrap_or(0) as i64).into());
    meta.insert("simulate".into(), run.into());
    io::write_metadata(dir, &meta)?;
    let (e0, et) = (traj.energies[0], *traj.energies.last().unwrap());
    let ratio = if e0 > 0.0 { et / e0 } else { f64::NAN };
    let text = format!(
        "simulate: Ne = {} Nt = {} T = {}\nenergy_initial = {e0:e}\nenergy_final = {et:e}\nenergy_ratio = {ratio:e}\noutput = {}\n",
        d.ne,
        d.nt,
        d.horizon,
        dir.display()
    );
    Ok(Outcome { text, code: EXIT_OK })
}

fn identity_frame() -> Frame {
    Frame { p: model_core::Vec3::zeros(), q: Quaternion::identity() }
}

pub fn cmd_reconstruct(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let params = cfg.beam.parameters()?;
    let d = cfg.discretization;
    let mesh = Mesh::new(params.length, d.ne).map_err(|e| CliError::config("discretization.ne", e.to_string()))?;
    let grid = TimeGrid::new(d.horizon, d.nt).map_err(|e| CliError::config("discretization", e.to_string()))?;
    let states_path = dir.join(io::STATES_FILE);
    if !states_path.exists() {
        return Err(CliError::Input(format!("missing bundle: {} (run simulate first)", states_path.display())));
    }
    let states = io::read_states(&states_path, &mesh)?;
    if states.len() != grid.nt {
        return Err(CliError::Input(format!("bundle has {} time steps, config expects {}", states.len(), grid.nt)));
    }
    let traj = Trajectory { grid, states, iterations: vec![], residuals: vec![], energies: vec![] };
    let helix = cfg.initial.preset_name().is_some_and(|p| p.starts_with("helix"));
    let initial = if helix {
        helix_frames(&mesh).map_err(solver)?
    } else {
        reconstruct_space(&params, &mesh, &traj.states[0], &identity_frame()).map_err(solver)?
    };
    let method = cfg.reconstruct.method.as_str();
    let times = grid.times();
    let nodes = mesh.nodes();
    let mut rows = Vec::new();
    let mut report = toml::Table::new();
    report.insert("method".into(), method.into());
    let time_field = if method != "space" {
        let field = reconstruct_time(&mesh, &traj, &initial, cfg.reconstruct.parallel).map_err(solver)?;
        report.insert("max_quaternion_norm_defect".into(), field.max_norm_defect().into());
        report.insert("max_orthogonality_defect".into(), field.max_orthogonality_defect().map_err(solver)?.into());
        for kk in 0..grid.nt {
            rows.extend(field.slice(kk).iter().zip(&nodes).map(|(f, &x)| ("time", times[kk], x, *f)));
        }
        Some(field)
    } else {
        None
    };
    if method != "time" {
        let mut sup: f64 = 0.0;
        for kk in 0..grid.nt {
            let space = reconstruct_space(&params, &mesh, &traj.states[kk], &initial[0]).map_err(solver)?;
            if let Some(f) = &time_field {
                sup = sup.max(centerline_sup_diff(f.slice(kk), &space));
            }
            rows.extend(space.iter().zip(&nodes).map(|(f, &x)| ("space", times[kk], x, *f)));
        }
        if time_field.is_some() {
            report.insert("cross_method_sup_difference".into(), sup.into());
        }
    }
    if cfg.output.wants("frames") {
        io::write_frames(&dir.join(io::FRAMES_FILE), &rows)?;
    }
    let mut meta = io::read_metadata(dir).unwrap_or_else(|_| io::base_metadata("reconstruct", cfg));
    meta.insert("reconstruct".into(), report.clone().into());
    io::write_metadata(dir, &meta)?;
    let mut text = String::from("reconstruct:\n");
    for (k, v) in &report {
        text += &format!("{k} = {v}\n");
    }
    Ok(Outcome { text, code: EXIT_OK })
}

pub fn cmd_certify(cfg: &RunConfig, dir: Option<&Path>) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let params = cfg.beam.parameters()?;
    let k = cfg.feedback.matrix(&params)?;
    let l = &cfg.lyapunov;
    let rho = effective_rho(cfg, &params, &k)?;
    let settings = CertificateSettings {
        rho,
        weight: l.weight.weight(params.length, "lyapunov.weight")?,
        variant: l.variant()?,
        grid_pts: l.grid_pts,
    };
    let cert = certificate(&params, &k, &settings).map_err(|e| CliError::config("lyapunov", e.to_string()))?;
    let mut text = format!("certify: single beam, rho = {rho} (configured {})\n", l.rho);
    text += &cert.report();
    for name in cert.failed() {
        text += &format!("failed = \"{name}\"\n");
    }
    if let Some(dir) = dir {
        io::write_text(dir, io::CERTIFICATE_FILE, &text)?;
    }
    Ok(Outcome { text, code: if cert.verdict { EXIT_OK } else { EXIT_CERTIFICATE } })
}

fn node_kind(name: &str, k: &Mat6, field: &str) -> Result<NodeKind, CliError> {
    match name {
        "controlled" => Ok(NodeKind::Controlled(*k)),
        "free" => Ok(NodeKind::Free),
        "clamped" => Ok(NodeKind::Clamped),
        other => Err(CliError::config(field, format!("unknown node kind {other:?}"))),
    }
}

pub fn build_network(cfg: &RunConfig) -> Result<network_cert::Network, CliError> {
    let params = cfg.beam.parameters()?;
    let k = cfg.feedback.matrix(&params)?;
    let n = &cfg.network;
    let beams = match n.topology.as_str() {
        "star" => n.weights.len(),
        "serial" => 2,
        other => return Err(CliError::config("network.topology", format!("unknown topology {other:?}"))),
    };
    if beams < 2 || n.weights.len() != beams || n.angles.len() != beams || n.tips.len() + 1 != beams {
        return Err(CliError::config(
            "network",
            format!("{beams} beams need {beams} weights, {beams} angles and {} tips", beams.saturating_sub(1)),
        ));
    }
    if k == Mat6::zeros() && (n.root == "controlled" || n.tips.iter().any(|t| t == "controlled")) {
        return Err(CliError::config("feedback.mode", "controlled nodes need a positive definite feedback"));
    }
    let specs = (0..beams)
        .map(|i| {
            let frame: Mat3 = rot_z(n.angles[i]);
            Ok(BeamSpec {
                params: params.clone(),
                frame,
                weight: n.weights[i].weight(params.length, &format!("network.weights[{i}]"))?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let joint = match n.joint.as_str() {
        "free" => Mat6::zeros(),
        "feedback" => k,
        other => return Err(CliError::config("network.joint", format!("unknown joint {other:?}"))),
    };
    let root = node_kind(&n.root, &k, "network.root")?;
    let tips = n.tips.iter().map(|t| node_kind(t, &k, "network.tips")).collect::<Result<Vec<_>, _>>()?;
    star(specs, n.rho, root, joint, tips).map_err(|e| CliError::config("network", e.to_string()))
}

pub fn cmd_certify_network(cfg: &RunConfig, dir: Option<&Path>) -> Result<Outcome, CliError> {
    let net = build_network(cfg)?;
    let cert = star_certificate(&net).map_err(|e| CliError::config("network", e.to_string()))?;
    let mut text = format!("certify-network: {} with {} beams, rho = {}\n", cfg.network.topology, net.beams.len(), net.rho);
    text += &cert.report();
    for n in cert.failing_nodes() {
        text += &format!("failed = \"node {n} boundary matrix not negative semidefinite\"\n");
    }
    for b in cert.beams.iter().filter(|b| !b.verdict) {
        text += &format!("failed = \"beam {} interior conditions\"\n", b.beam + 1);
    }
    if let Some(dir) = dir {
        io::write_text(dir, io::NETWORK_FILE, &text)?;
    }
    Ok(Outcome { text, code: if cert.pass { EXIT_OK } else { EXIT_CERTIFICATE } })
}

/// Quantities printed by `info`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub speeds: Vec6,
    /// Spectral norm of `B̄ = (Q^P)⁻¹ [[0, −E], [Eᵀ, 0]]`.
    pub bbar_norm: f64,
    pub transparent_k: Mat6,
    /// `(μ₁, μ₂)` for diagonal coefficients.
    pub mu: Option<(f64, f64)>,
}

pub fn model_summary(params: &BeamParameters) -> Result<ModelSummary, CliError> {
    let err = |e: model_core::ModelError| CliError::config("beam", e.to_string());
    let speeds = diagonalize(params, 0.0).map_err(err)?.d;
    let qp_inv = params.qp_at(0.0).try_inverse().ok_or_else(|| CliError::config("beam", "Q^P singular"))?;
    let bbar = qp_inv * bold_b(params, 0.0);
    let bbar_norm = bbar.singular_values().max();
    let transparent = transparent_k(params, 0.0).map_err(err)?;
    Ok(ModelSummary { speeds, bbar_norm, transparent_k: transparent, mu: near_transparent_mu(params, 0.0).ok() })
}

pub fn cmd_info(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.beam.parameters()?;
    let s = model_summary(&params)?;
    let row = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
    let mut text = format!("length = {}\n", params.length);
    text += &format!("mass_diagonal = [{}]\n", row(params.mass.diagonal().as_slice()));
    text += &format!("flexibility_diagonal = [{}]\n", row(params.flexibility.diagonal().as_slice()));
    text += &format!("precurvature = [{}]\n", row(params.precurvature.as_slice()));
    text += &format!("wave_speeds = [{}]\n", row(s.speeds.as_slice()));
    text += &format!("bbar_norm = {}\n", s.bbar_norm);
    for i in 0..6 {
        text += &format!("transparent_k_row{} = [{}]\n", i + 1, row(&s.transparent_k.row(i).iter().copied().collect::<Vec<_>>()));
    }
    match s.mu {
        Some((m1, m2)) => text += &format!("mu1 = {m1}\nmu2 = {m2}\n"),
        None => text += "mu1 = undefined\nmu2 = undefined\n",
    }
    Ok(Outcome { text, code: EXIT_OK })
}
