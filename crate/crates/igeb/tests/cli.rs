use std::path::Path;
use std::process::Command;

use fem::Mesh;
use igeb::config::{MatrixSpec, SectionSpec, WeightSpec};
use igeb::*;
use integrate::initial::{helix_state, HelixVelocity};
use integrate::{simulate, NewtonSettings, TimeGrid};
use model_core::{near_transparent_k, BeamParameters, Mat6};
use proptest::prelude::*;
use reconstruct::{helix_position, helix_rotation, rot_to_quat};

fn small(preset: &str, mode: &str, ne: usize, nt: usize, horizon: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.initial.preset = Some(preset.into());
    cfg.feedback.mode = mode.into();
    cfg.discretization.ne = ne;
    cfg.discretization.nt = nt;
    cfg.discretization.horizon = horizon;
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_igeb"))
}

#[test]
fn default_config_round_trips() {
    let cfg = RunConfig::default();
    let text = cfg.to_toml();
    let back = RunConfig::from_toml(&text, &[]).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_toml(), text);
    assert_eq!(RunConfig::from_toml("", &[]).unwrap(), cfg);
}

#[test]
fn full_config_round_trips() {
    let mut cfg = RunConfig::default();
    cfg.beam.preset = Some("none".into());
    cfg.beam.length = Some(2.5);
    cfg.beam.section = Some(SectionSpec { density: 2.0, area: 0.1, young: 3.0, shear: 1.0, i2: 0.01, i3: 0.02, k1: 1.0, k2: 0.8, k3: 0.8 });
    cfg.beam.precurvature = Some([0.1, 0.0, -0.2]);
    cfg.feedback.mode = "explicit".into();
    cfg.feedback.matrix = Some(MatrixSpec::Rows((0..6).map(|i| (0..6).map(|j| if i == j { 2.0 } else { 0.1 }).collect()).collect()));
    cfg.feedback.mu = Some([3.0, 4.0]);
    cfg.initial.preset = None;
    cfg.initial.file = Some("state.csv".into());
    cfg.newton.tol_abs = Some(1e-9);
    cfg.lyapunov.weight = WeightSpec::PolyMinus { n: 6, eta: 1.25 };
    cfg.network.weights.push(WeightSpec::Constant { value: -0.25 });
    cfg.network.weights.push(WeightSpec::Zero);
    let back = RunConfig::from_toml(&cfg.to_toml(), &[]).unwrap();
    assert_eq!(back, cfg);
}

fn weight_spec() -> impl Strategy<Value = WeightSpec> {
    prop_oneof![
        Just(WeightSpec::Zero),
        (-2.0..2.0f64).prop_map(|value| WeightSpec::Constant { value }),
        (-1.0..1.0f64, -1.0..1.0f64, 0.0..10.0f64).prop_map(|(a, b, eta)| WeightSpec::ExpPos { a, b, eta }),
        (-1.0..1.0f64, -1.0..1.0f64, 0.0..10.0f64).prop_map(|(a, b, eta)| WeightSpec::ExpNeg { a, b, eta }),
        (1u32..12, 0.0..3.0f64).prop_map(|(n, eta)| WeightSpec::PolyPlus { n, eta }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_configs_round_trip(
        ne in 1usize..200,
        nt in 2usize..5000,
        horizon in 1e-3..100.0f64,
        rho in 1e-3..10.0f64,
        diag in proptest::collection::vec(1e-6..1e6f64, 6),
        weight in weight_spec(),
        angles in proptest::collection::vec(-7.0..7.0f64, 1..5),
    ) {
        let mut cfg = RunConfig::default();
        cfg.discretization.ne = ne;
        cfg.discretization.nt = nt;
        cfg.discretization.horizon = horizon;
        cfg.lyapunov.rho = rho;
        cfg.lyapunov.weight = weight;
        cfg.beam.mass = Some(MatrixSpec::Diagonal(diag));
        cfg.network.angles = angles;
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text, &[]).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
    }
}

#[test]
fn dotted_overrides_apply() {
    let o = |s: &str| s.to_string();
    let cfg = RunConfig::from_toml(
        "[discretization]\nne = 7\n",
        &[o("discretization.nt=33"), o("feedback.mode=free"), o("lyapunov.weight={family=\"poly_plus\",n=4,eta=0.5}"), o("output.dir = runs/a")],
    )
    .unwrap();
    assert_eq!(cfg.discretization.ne, 7);
    assert_eq!(cfg.discretization.nt, 33);
    assert_eq!(cfg.feedback.mode, "free");
    assert_eq!(cfg.lyapunov.weight, WeightSpec::PolyPlus { n: 4, eta: 0.5 });
    assert_eq!(cfg.output.dir, Path::new("runs/a"));
    for bad in ["nokey", "discretization.ne=abc", "discretization..ne=3", "unknown.section=1"] {
        let err = RunConfig::from_toml("", &[o(bad)]).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG, "{bad}");
    }
}

#[test]
fn validation_names_the_field() {
    let field_of = |cfg: &RunConfig| match cfg.validate().unwrap_err() {
        CliError::Config { field, .. } => field,
        other => panic!("unexpected {other:?}"),
    };
    let cfg = small("helix_compatible_velocity", "free", 4, 5, 0.1);
    assert_eq!(field_of(&cfg), "initial.preset");
    assert_eq!(field_of(&small("zero", "bogus", 4, 5, 0.1)), "feedback.mode");
    assert_eq!(field_of(&small("zero", "free", 0, 5, 0.1)), "discretization.ne");
    assert_eq!(field_of(&small("zero", "free", 4, 1, 0.1)), "discretization.nt");
    let mut cfg = small("zero", "diag", 4, 5, 0.1);
    assert_eq!(field_of(&cfg), "feedback.mu");
    cfg.feedback.mu = Some([1.0, -1.0]);
    assert_eq!(field_of(&cfg), "feedback");
    let mut cfg = small("zero", "free", 4, 5, 0.1);
    cfg.lyapunov.weight = WeightSpec::PolyPlus { n: 2, eta: 5.0 };
    assert_eq!(field_of(&cfg), "lyapunov.weight");
    let mut cfg = small("zero", "free", 4, 5, 0.1);
    cfg.initial.file = Some("/nonexistent/state.csv".into());
    cfg.initial.preset = None;
    assert_eq!(field_of(&cfg), "initial.file");
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn zero_preset_gives_zero_series_and_constant_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("zero", "near_transparent", 3, 11, 0.1);
    assert_eq!(cmd_simulate(&cfg, dir.path()).unwrap().code, 0);
    let energy = io::read_energy(&dir.path().join(io::ENERGY_FILE)).unwrap();
    assert_eq!(energy.len(), 11);
    assert!(energy.iter().all(|&(_, e, l)| e == 0.0 && l == 0.0));
    let mesh = Mesh::new(1.0, 3).unwrap();
    let states = io::read_states(&dir.path().join(io::STATES_FILE), &mesh).unwrap();
    assert!(states.iter().all(|s| s.amax() == 0.0));
    assert_eq!(cmd_reconstruct(&cfg, dir.path()).unwrap().code, 0);
    let frames = io::read_frames(&dir.path().join(io::FRAMES_FILE)).unwrap();
    assert_eq!(frames.len(), 2 * 11 * mesh.nx());
    for (_, _, x, f) in &frames {
        assert_eq!(f.p, model_core::Vec3::new(*x, 0.0, 0.0));
        assert_eq!(f.q, reconstruct::Quaternion::identity());
    }
}

#[test]
fn bundle_reload_is_bit_exact_and_deterministic() {
    let cfg = small("helix_zero_velocity", "near_transparent", 4, 21, 0.2);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cmd_simulate(&cfg, a.path()).unwrap();
    cmd_simulate(&cfg, b.path()).unwrap();
    for f in [io::STATES_FILE, io::ENERGY_FILE, io::METADATA_FILE] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    let p = BeamParameters::hesse2012();
    let mesh = Mesh::new(1.0, 4).unwrap();
    let k = near_transparent_k(&p, 0.0).unwrap();
    let y0 = helix_state(&p, &mesh, HelixVelocity::Zero, &k).unwrap();
    let grid = TimeGrid::new(0.2, 21).unwrap();
    let (_, traj) = simulate(&p, &mesh, &grid, &k, &y0, &NewtonSettings::default_for(mesh.n_free())).unwrap();
    let states = io::read_states(&a.path().join(io::STATES_FILE), &mesh).unwrap();
    for (s, t) in states.iter().zip(&traj.states) {
        assert!(s.iter().zip(t.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let energy = io::read_energy(&a.path().join(io::ENERGY_FILE)).unwrap();
    assert!(energy.iter().zip(&traj.energies).all(|(e, t)| e.1.to_bits() == t.to_bits()));
    cmd_reconstruct(&cfg, a.path()).unwrap();
    cmd_reconstruct(&cfg, b.path()).unwrap();
    assert_eq!(read(a.path(), io::FRAMES_FILE), read(b.path(), io::FRAMES_FILE));
}

#[test]
fn nodal_table_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let p = BeamParameters::hesse2012();
    let mesh = Mesh::new(1.0, 3).unwrap();
    let y = helix_state(&p, &mesh, HelixVelocity::Zero, &Mat6::zeros()).unwrap();
    let file = dir.path().join("init.csv");
    io::write_nodal_table(&file, &mesh, &y).unwrap();
    let mut cfg = small("zero", "free", 3, 3, 0.01);
    cfg.initial.preset = None;
    cfg.initial.file = Some(file);
    let (loaded, _) = initial_state(&cfg, &p, &mesh, &Mat6::zeros()).unwrap();
    assert_eq!(loaded, y);
}

#[test]
fn free_and_controlled_energy_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("helix_zero_velocity", "free", 10, 201, 1.0);
    cmd_simulate(&cfg, dir.path()).unwrap();
    let e = io::read_energy(&dir.path().join(io::ENERGY_FILE)).unwrap();
    let drift = e.iter().map(|r| (r.1 - e[0].1).abs()).fold(0.0, f64::max) / e[0].1;
    assert!(drift <= 1e-6, "drift {drift}");

    let cfg = small("helix_zero_velocity", "near_transparent", 10, 201, 1.0);
    cmd_simulate(&cfg, dir.path()).unwrap();
    let e = io::read_energy(&dir.path().join(io::ENERGY_FILE)).unwrap();
    let tol = 10.0 * (1e-12 * (Mesh::new(1.0, 10).unwrap().n_free() as f64).sqrt() + 1e-10 * e[0].1);
    assert!(e.windows(2).all(|w| w[1].1 <= w[0].1 + tol));
    assert!(e.last().unwrap().1 < e[0].1);
}

#[test]
fn helix_initial_row_and_cross_method_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("helix_compatible_velocity", "near_transparent", 20, 1001, 1.0);
    cmd_simulate(&cfg, dir.path()).unwrap();
    let out = cmd_reconstruct(&cfg, dir.path()).unwrap();
    assert!(out.text.contains("cross_method_sup_difference"));
    let frames = io::read_frames(&dir.path().join(io::FRAMES_FILE)).unwrap();
    for (m, t, x, f) in frames.iter().filter(|r| r.1 == 0.0 && r.0 == "time") {
        assert_eq!((m.as_str(), *t), ("time", 0.0));
        assert!((f.p - helix_position(*x)).amax() <= 1e-12);
        let q = rot_to_quat(&helix_rotation(*x)).unwrap();
        assert!((f.q.to_vector() - q.to_vector()).amax() <= 1e-12);
    }
    let meta = io::read_metadata(dir.path()).unwrap();
    let sup = meta["reconstruct"]["cross_method_sup_difference"].as_float().unwrap();
    assert!(sup <= 1e-3, "sup {sup}");
    assert!(meta["simulate"]["initial_datum"].as_str().unwrap().contains("cubic Hermite"));
}

#[test]
fn reconstruct_without_bundle_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_reconstruct(&small("zero", "free", 3, 3, 0.1), dir.path()).unwrap_err();
    assert!(matches!(err, CliError::Input(_)));
    assert_eq!(err.exit_code(), EXIT_CONFIG);
}

#[test]
fn certify_single_beam() {
    let cfg = small("zero", "near_transparent", 3, 3, 0.1);
    let out = cmd_certify(&cfg, None).unwrap();
    assert_eq!(out.code, EXIT_OK, "{}", out.text);
    assert!(out.text.contains("margin_iv_max_eig_mu"));
    let cfg = small("zero", "free", 3, 3, 0.1);
    let out = cmd_certify(&cfg, None).unwrap();
    assert_eq!(out.code, EXIT_CERTIFICATE);
    assert!(out.text.contains("failed = \"(iv) boundary mu negative semidefinite\""));
}

#[test]
fn certify_networks() {
    let cfg = RunConfig::default();
    let out = cmd_certify_network(&cfg, None).unwrap();
    assert_eq!(out.code, EXIT_OK, "{}", out.text);
    let mut clamped = cfg.clone();
    clamped.network.root = "clamped".into();
    let out = cmd_certify_network(&clamped, None).unwrap();
    assert_eq!(out.code, EXIT_CERTIFICATE);
    assert!(out.text.contains("node 0 kind = simple_clamped max_eig_M = 2e-1"), "{}", out.text);

    let mut serial = cfg.clone();
    serial.network.topology = "serial".into();
    serial.network.angles = vec![0.0, 0.0];
    serial.network.tips = vec!["controlled".into()];
    serial.network.weights = vec![WeightSpec::Constant { value: 0.3 }, WeightSpec::Constant { value: 0.3 }];
    let net = build_network(&serial).unwrap();
    let node = network_cert::nodal_certificate(&net, 1).unwrap();
    assert!(node.m.amax() <= 1e-10 * node.scale);
    let out = cmd_certify_network(&serial, None).unwrap();
    assert!(out.text.contains("node 1 kind = multiple"));
}

#[test]
fn info_summaries() {
    let s = model_summary(&BeamParameters::hesse2012()).unwrap();
    let expect = [100.0, 100.0, 100.0, 5.0, 50f64.sqrt(), 50f64.sqrt()];
    assert!(s.speeds.iter().zip(expect).all(|(a, b)| (a - b).abs() <= 1e-10));
    let (m1, m2) = s.mu.unwrap();
    assert!((m1 - 100.0).abs() <= 1e-10 && (m2 - 84.090).abs() < 1e-3);
    let unit = BeamParameters::new(1.0, Mat6::identity(), Mat6::identity(), model_core::Vec3::zeros()).unwrap();
    assert!(model_summary(&unit).unwrap().speeds.iter().all(|v| (v - 1.0).abs() <= 1e-14));

    let sec = SectionSpec { density: 7.8, area: 0.3, young: 210.0, shear: 80.0, i2: 0.02, i3: 0.05, k1: 1.1, k2: 0.9, k3: 0.85 };
    let mut cfg = RunConfig::default();
    cfg.beam.preset = Some("none".into());
    cfg.beam.length = Some(1.0);
    cfg.beam.section = Some(sec);
    let s = model_summary(&cfg.beam.parameters().unwrap()).unwrap();
    let closed = [1.0 / (sec.density * sec.i2), 1.0 / (sec.density * sec.i3), sec.area * sec.k2 * sec.shear, sec.area * sec.k3 * sec.shear]
        .into_iter()
        .fold(0.0, f64::max);
    assert!((s.bbar_norm - closed).abs() <= 1e-12 * closed, "{} vs {closed}", s.bbar_norm);
    assert!(cmd_info(&RunConfig::default()).unwrap().text.contains("mu1 = 100"));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = |args: &[&str], threads: Option<&str>| {
        let mut c = bin();
        c.args(args).args(["--out", out]);
        if let Some(t) = threads {
            c.env("IGEB_THREADS", t);
        }
        c.output().unwrap().status.code().unwrap()
    };
    assert_eq!(code(&["info"], None), 0);
    assert_eq!(code(&["info", "--override", "beam.preset=nope"], None), 2);
    assert_eq!(code(&["certify", "--override", "feedback.mode=free"], None), 4);
    assert_eq!(code(&["certify-network"], Some("2")), 0);
    assert_eq!(code(&["info"], Some("0")), 2);
    let failing = [
        "simulate",
        "--override",
        "discretization.ne=4",
        "--override",
        "discretization.nt=3",
        "--override",
        "newton.max_iter=1",
        "--override",
        "newton.tol_rel=1e-300",
        "--override",
        "newton.tol_abs=1e-300",
    ];
    assert_eq!(code(&failing, None), 3);
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, small("zero", "free", 2, 3, 0.1).to_toml()).unwrap();
    assert_eq!(code(&["simulate", "--config", cfg_path.to_str().unwrap()], Some("1")), 0);
    assert_eq!(code(&["reconstruct", "--config", cfg_path.to_str().unwrap()], None), 0);
}
