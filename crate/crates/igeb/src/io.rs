//! Comma-separated series with one header row and TOML run metadata.
//! Floats are written in shortest round-trip form, so reloads are bit-exact.

use std::path::Path;

use fem::{from_nodes, node_value, Mesh};
use integrate::Trajectory;
use model_core::Vec12;
use nalgebra::DVector;
use reconstruct::Frame;

use crate::{CliError, RunConfig};

pub const STATES_FILE: &str = "states.csv";
pub const ENERGY_FILE: &str = "energy.csv";
pub const FRAMES_FILE: &str = "frames.csv";
pub const METADATA_FILE: &str = "metadata.toml";
pub const CERTIFICATE_FILE: &str = "certificate.txt";
pub const NETWORK_FILE: &str = "network_certificate.txt";

const COMPONENTS: [&str; 12] = ["v1", "v2", "v3", "v4", "v5", "v6", "z1", "z2", "z3", "z4", "z5", "z6"];

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn parse(path: &Path, s: &str) -> Result<f64, CliError> {
    s.trim().parse::<f64>().map_err(|e| io_err(path, format!("bad number {s:?}: {e}")))
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::Reader::from_path(path).map_err(|e| io_err(path, e))
}

/// Rows `k, t, node, x, v1..v6, z1..z6` for every step and P2 node.
pub fn write_states(path: &Path, mesh: &Mesh, traj: &Trajectory) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header = vec!["k", "t", "node", "x"];
    header.extend(COMPONENTS);
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    let nodes = mesh.nodes();
    for (k, y) in traj.states.iter().enumerate() {
        let t = traj.grid.time(k);
        for (a, &x) in nodes.iter().enumerate() {
            let mut rec = vec![k.to_string(), fmt(t), a.to_string(), fmt(x)];
            rec.extend(node_value(y, a).iter().map(|v| fmt(*v)));
            w.write_record(&rec).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reduced nodal vectors per step from a states table.
pub fn read_states(path: &Path, mesh: &Mesh) -> Result<Vec<DVector<f64>>, CliError> {
    let mut r = reader(path)?;
    let nx = mesh.nx();
    let mut steps: Vec<Vec<Vec12>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        if rec.len() != 16 {
            return Err(io_err(path, format!("expected 16 columns, got {}", rec.len())));
        }
        let k: usize = rec[0].parse().map_err(|e| io_err(path, e))?;
        let a: usize = rec[2].parse().map_err(|e| io_err(path, e))?;
        if k != steps.len() && k + 1 != steps.len() {
            return Err(io_err(path, format!("step {k} out of order")));
        }
        if k == steps.len() {
            steps.push(Vec::with_capacity(nx));
        }
        if a != steps[k].len() {
            return Err(io_err(path, format!("node {a} out of order at step {k}")));
        }
        let mut v = Vec12::zeros();
        for i in 0..12 {
            v[i] = parse(path, &rec[4 + i])?;
        }
        steps[k].push(v);
    }
    if let Some(bad) = steps.iter().position(|s| s.len() != nx) {
        return Err(io_err(path, format!("step {bad} has {} nodes, mesh has {nx}", steps[bad].len())));
    }
    Ok(steps.iter().map(|s| from_nodes(s)).collect())
}

/// Rows `k, t, energy, lyapunov, newton_iterations, residual`; step 0 has no solve.
pub fn write_energy(path: &Path, traj: &Trajectory, lyapunov: &[f64]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["k", "t", "energy", "lyapunov", "newton_iterations", "residual"]).map_err(|e| io_err(path, e))?;
    for k in 0..traj.states.len() {
        let (it, res) = if k == 0 { (0, 0.0) } else { (traj.iterations[k - 1], traj.residuals[k - 1]) };
        w.write_record([k.to_string(), fmt(traj.grid.time(k)), fmt(traj.energies[k]), fmt(lyapunov[k]), it.to_string(), fmt(res)])
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// `(t, energy, lyapunov)` columns of an energy table.
pub fn read_energy(path: &Path) -> Result<Vec<(f64, f64, f64)>, CliError> {
    let mut r = reader(path)?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| io_err(path, e))?;
            Ok((parse(path, &rec[1])?, parse(path, &rec[2])?, parse(path, &rec[3])?))
        })
        .collect()
}

/// Rows `method, t, x, p1, p2, p3, q0, q1, q2, q3`.
pub fn write_frames(path: &Path, rows: &[(&str, f64, f64, Frame)]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["method", "t", "x", "p1", "p2", "p3", "q0", "q1", "q2", "q3"]).map_err(|e| io_err(path, e))?;
    for (m, t, x, f) in rows {
        let mut rec = vec![m.to_string(), fmt(*t), fmt(*x)];
        rec.extend(f.p.iter().map(|v| fmt(*v)));
        rec.push(fmt(f.q.q0));
        rec.extend(f.q.q.iter().map(|v| fmt(*v)));
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// `(method, t, x, frame)` rows of a frames table.
pub fn read_frames(path: &Path) -> Result<Vec<(String, f64, f64, Frame)>, CliError> {
    let mut r = reader(path)?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| io_err(path, e))?;
            let v = |i: usize| parse(path, &rec[i]);
            let frame = Frame {
                p: model_core::Vec3::new(v(3)?, v(4)?, v(5)?),
                q: reconstruct::Quaternion::new(v(6)?, model_core::Vec3::new(v(7)?, v(8)?, v(9)?)),
            };
            Ok((rec[0].to_string(), v(1)?, v(2)?, frame))
        })
        .collect()
}

/// Nodal state table `x, v1..v6, z1..z6`, one row per P2 node.
pub fn read_nodal_table(path: &Path) -> Result<Vec<Vec12>, CliError> {
    let mut r = reader(path)?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| io_err(path, e))?;
            if rec.len() != 13 {
                return Err(io_err(path, format!("expected 13 columns, got {}", rec.len())));
            }
            let mut v = Vec12::zeros();
            for i in 0..12 {
                v[i] = parse(path, &rec[1 + i])?;
            }
            Ok(v)
        })
        .collect()
}

pub fn write_nodal_table(path: &Path, mesh: &Mesh, y: &DVector<f64>) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header = vec!["x"];
    header.extend(COMPONENTS);
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for (a, x) in mesh.nodes().into_iter().enumerate() {
        let mut rec = vec![fmt(x)];
        rec.extend(node_value(y, a).iter().map(|v| fmt(*v)));
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn base_metadata(command: &str, cfg: &RunConfig) -> toml::Table {
    let mut meta = toml::Table::new();
    meta.insert("command".into(), command.into());
    meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    let config: toml::Table = cfg.to_toml().parse().expect("serialized config parses");
    meta.insert("config".into(), config.into());
    meta
}

pub fn write_metadata(dir: &Path, meta: &toml::Table) -> Result<(), CliError> {
    let path = dir.join(METADATA_FILE);
    let text = toml::to_string(meta).map_err(|e| io_err(&path, e))?;
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

pub fn read_metadata(dir: &Path) -> Result<toml::Table, CliError> {
    let path = dir.join(METADATA_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    text.parse().map_err(|e| io_err(&path, e))
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}
