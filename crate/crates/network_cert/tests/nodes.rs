use lyapunov::{certificate, CertificateSettings, Sign, WVariant, Weight, WeightFunction, DEFAULT_GRID};
use model_core::{diagonalize, near_transparent_k, stack, transparent_k, BeamParameters, Mat3, Mat6, Vec12, Vec3, Vec6};
use nalgebra::{DMatrix, DVector, Rotation3};
use network_cert::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn twisted() -> BeamParameters {
    let mut m = Mat6::from_diagonal(&Vec6::new(2.0, 2.0, 2.0, 3.0, 1.5, 1.5));
    m[(0, 4)] = 0.3;
    m[(4, 0)] = 0.3;
    let mut c = Mat6::from_diagonal(&Vec6::new(0.5, 0.7, 0.7, 1.0, 2.0, 2.0));
    c[(1, 5)] = 0.2;
    c[(5, 1)] = 0.2;
    BeamParameters::new(1.5, m, c, Vec3::new(0.3, -0.2, 0.5)).unwrap()
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
    let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    Rotation3::from_scaled_axis(axis * 2.0).into_inner()
}

fn random_spd(rng: &mut ChaCha8Rng, scale: f64) -> Mat6 {
    let a = Mat6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    (a * a.transpose() + Mat6::identity() * 0.5) * scale
}

fn exp_weight(sign: Sign, a: f64, b: f64, len: f64) -> Weight {
    WeightFunction::exp(a, b, 5.0, len, sign).unwrap().shifted()
}

fn beam(params: BeamParameters, frame: Mat3, weight: Weight) -> BeamSpec {
    BeamSpec { params, frame, weight }
}

fn rbar(r: &Mat3) -> Mat6 {
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    m
}

/// `(r⁻, r⁺)` of a local state `(v, z)`.
fn riemann(params: &BeamParameters, x: f64, v: &Vec6, z: &Vec6) -> (Vec6, Vec6) {
    let r: Vec12 = diagonalize(params, x).unwrap().l * stack(v, z);
    (r.fixed_rows::<6>(0).into_owned(), r.fixed_rows::<6>(6).into_owned())
}

fn to_dyn(parts: &[Vec6]) -> DVector<f64> {
    DVector::from_iterator(6 * parts.len(), parts.iter().flat_map(|p| p.iter().copied()))
}

#[test]
fn controlled_reflection_matches_physical_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for params in [BeamParameters::hesse2012(), twisted()] {
        for _ in 0..5 {
            let frame = random_rotation(&mut rng);
            let k = random_spd(&mut rng, 3.0);
            let b = beam(params.clone(), frame, Weight::zero());
            let tip = Network {
                beams: vec![b.clone()],
                nodes: vec![
                    NodeSpec { kind: NodeKind::Clamped, incident: vec![Incidence { beam: 0, end: End::Start }] },
                    NodeSpec { kind: NodeKind::Controlled(k), incident: vec![Incidence { beam: 0, end: End::End }] },
                ],
                rho: 1.0,
            };
            let root = Network {
                nodes: vec![
                    NodeSpec { kind: NodeKind::Controlled(k), incident: vec![Incidence { beam: 0, end: End::Start }] },
                    NodeSpec { kind: NodeKind::Free, incident: vec![Incidence { beam: 0, end: End::End }] },
                ],
                ..tip.clone()
            };
            let v = Vec6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            // End x = ℓ: z = −K v, outgoing r⁻, incoming r⁺.
            let (rm, rp) = riemann(&params, params.length, &v, &(-k * v));
            let bl = reflection(&tip.nodal_matrices(1).unwrap()).unwrap();
            let err = (&bl * to_dyn(&[rp]) - to_dyn(&[rm])).amax();
            assert!(err <= 1e-10 * rm.amax().max(rp.amax()), "end error {err}");
            // Start x = 0: z = K v, outgoing r⁺, incoming r⁻.
            let (rm, rp) = riemann(&params, 0.0, &v, &(k * v));
            let b0 = reflection(&root.nodal_matrices(0).unwrap()).unwrap();
            let err = (&b0 * to_dyn(&[rm]) - to_dyn(&[rp])).amax();
            assert!(err <= 1e-10 * rm.amax().max(rp.amax()), "start error {err}");
        }
    }
}

#[test]
fn transparent_feedback_does_not_reflect() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for params in [BeamParameters::hesse2012(), twisted()] {
        let k = transparent_k(&params, params.length).unwrap();
        let net = single_beam(beam(params.clone(), random_rotation(&mut rng), Weight::zero()), 1.0, NodeKind::Controlled(k));
        let b = reflection(&net.nodal_matrices(1).unwrap()).unwrap();
        assert!(b.amax() <= 1e-10, "reflection {}", b.amax());
        let clamp = reflection(&net.nodal_matrices(0).unwrap()).unwrap();
        assert_eq!(clamp, -DMatrix::identity(6, 6));
    }
}

fn star_beams(params: &BeamParameters, n: usize, rng: &mut ChaCha8Rng) -> Vec<BeamSpec> {
    (0..n).map(|_| beam(params.clone(), random_rotation(rng), Weight::zero())).collect()
}

#[test]
fn multiple_reflection_matches_transmission_and_physics() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for params in [BeamParameters::hesse2012(), twisted()] {
        for n in 2..=4 {
            for with_k in [false, true] {
                let k = if with_k { random_spd(&mut rng, 2.0) } else { Mat6::zeros() };
                let beams = star_beams(&params, n, &mut rng);
                let tips = vec![NodeKind::Free; n - 1];
                let net = star(beams.clone(), 1.0, NodeKind::Clamped, k, tips).unwrap();
                let nm = net.nodal_matrices(1).unwrap();
                let b = reflection(&nm).unwrap();
                let oracle = reflection_from_transmission(&nm).unwrap();
                assert!((&b - &oracle).amax() <= 1e-10 * oracle.amax().max(1.0));

                // Common global velocity; Kirchhoff R̄₁z₁(ℓ) − Σ R̄ᵢzᵢ(0) = −K̄ V.
                let vg = Vec6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                let r: Vec<Mat6> = beams.iter().map(|b| rbar(&b.frame)).collect();
                let kbar = r[0] * k * r[0].transpose();
                let zs: Vec<Vec6> = (1..n).map(|_| Vec6::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect();
                let sum: Vec6 = zs.iter().zip(&r[1..]).map(|(z, ri)| ri * z).sum();
                let z1 = r[0].transpose() * (sum - kbar * vg);
                let (m1, p1) = riemann(&params, params.length, &(r[0].transpose() * vg), &z1);
                let mut outs = vec![m1];
                let mut ins = vec![p1];
                for (z, ri) in zs.iter().zip(&r[1..]) {
                    let (m, p) = riemann(&params, 0.0, &(ri.transpose() * vg), z);
                    outs.push(p);
                    ins.push(m);
                }
                let (o, i) = (to_dyn(&outs), to_dyn(&ins));
                let err = (&b * &i - &o).amax();
                assert!(err <= 1e-9 * o.amax().max(i.amax()), "n {n} k {with_k} error {err}");
            }
        }
    }
}

#[test]
fn serial_identical_beams_have_zero_boundary_matrix() {
    let p = BeamParameters::hesse2012();
    let frame = Rotation3::from_scaled_axis(Vec3::new(0.2, -0.4, 0.7)).into_inner();
    for c in [0.0, 0.4, -0.3] {
        let w1 = Weight::constant(c);
        let w2 = Weight::constant(c);
        let net = star(vec![beam(p.clone(), frame, w1), beam(p.clone(), frame, w2)], 1.5, NodeKind::Clamped, Mat6::zeros(), vec![NodeKind::Free]).unwrap();
        let cert = nodal_certificate(&net, 1).unwrap();
        assert!(cert.m_tilde.as_ref().unwrap().amax() <= 1e-12, "c {c}");
        assert!(cert.m.amax() <= 1e-12 * cert.scale, "c {c} M {}", cert.m.amax());
        assert!(cert.verdict);
    }
}

fn inertia_agrees(nm: &NodalMatrices, rho: f64) -> std::result::Result<(), String> {
    let b = reflection(nm).unwrap();
    let (m, scale) = boundary_matrix(nm, &b);
    let mt = m_tilde(nm, rho).unwrap();
    // 𝓜 can be pure rounding noise while 𝓜̃ vanishes exactly.
    let (a, c) = (inertia(&m, 1e-9 * scale), inertia(&mt, 1e-9 * mt.amax()));
    if a == c {
        Ok(())
    } else {
        Err(format!("{:?} kind {} M {a:?} M~ {c:?}", nm.node, nm.kind.name()))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn congruent_forms_share_inertia(seed in 0u64..10_000, rho in 0.2..3.0f64, w1 in -1.0..1.0f64, w2 in -1.0..1.0f64, n in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = if seed % 2 == 0 { BeamParameters::hesse2012() } else { twisted() };
        let mut beams = star_beams(&p, n, &mut rng);
        beams[0].weight = Weight::constant(w1);
        for b in &mut beams[1..] {
            b.weight = Weight::constant(w2);
        }
        let k_root = random_spd(&mut rng, 5.0);
        let tips = (1..n).map(|i| match i % 3 { 0 => NodeKind::Free, 1 => NodeKind::Controlled(random_spd(&mut rng, 0.5)), _ => NodeKind::Clamped }).collect();
        let joint = if seed % 3 == 0 { random_spd(&mut rng, 1.0) } else { Mat6::zeros() };
        let net = star(beams, rho, NodeKind::Controlled(k_root), joint, tips).unwrap();
        for node in 0..net.nodes.len() {
            let nm = net.nodal_matrices(node).unwrap();
            prop_assert!(inertia_agrees(&nm, rho).is_ok(), "{}", inertia_agrees(&nm, rho).unwrap_err());
        }
    }
}

#[test]
fn hesse_feedback_constant() {
    let p = BeamParameters::hesse2012();
    let k = near_transparent_k(&p, 0.0).unwrap();
    let net = single_beam(beam(p, Mat3::identity(), Weight::zero()), 1.0, NodeKind::Controlled(k));
    let c = feedback_constant(&net.nodal_matrices(1).unwrap()).unwrap();
    assert!((c + 0.98517).abs() < 5e-5, "C_K {c}");
    assert_eq!(feedback_constant(&net.nodal_matrices(0).unwrap()), None);
}

fn three_star(root: NodeKind) -> Network {
    let p = BeamParameters::hesse2012();
    let k = near_transparent_k(&p, 0.0).unwrap();
    let third = 2.0 * std::f64::consts::PI / 3.0;
    let beams = vec![
        beam(p.clone(), Mat3::identity(), exp_weight(Sign::Neg, -1.0, 0.0, 1.0)),
        beam(p.clone(), rot_z(third), exp_weight(Sign::Pos, 0.0, 1.0, 1.0)),
        beam(p.clone(), rot_z(-third), exp_weight(Sign::Pos, 0.0, 1.0, 1.0)),
    ];
    let root = match root {
        NodeKind::Controlled(_) => NodeKind::Controlled(k),
        other => other,
    };
    star(beams, 1.5, root, Mat6::zeros(), vec![NodeKind::Controlled(k); 2]).unwrap()
}

#[test]
fn controlled_three_star_is_certified() {
    let cert = star_certificate(&three_star(NodeKind::Controlled(Mat6::zeros()))).unwrap();
    assert!(cert.pass, "{}", cert.report());
    assert_eq!(cert.nodes.len(), 4);
    assert_eq!(cert.nodes[1].kind, "multiple");
    let net = three_star(NodeKind::Controlled(Mat6::zeros()));
    for n in [0, 2, 3] {
        let nm = net.nodal_matrices(n).unwrap();
        let ck = feedback_constant(&nm).unwrap();
        // |w̄| = 1 at these nodes, within ρ |C_K|.
        assert!(nm.w_bar[(0, 0)] + net.rho * ck < 0.0);
        assert!(cert.nodes[n].tilde_max_eig.unwrap() < 0.0);
    }
}

#[test]
fn clamped_root_fails_with_margin() {
    let cert = star_certificate(&three_star(NodeKind::Clamped)).unwrap();
    assert!(!cert.pass);
    assert_eq!(cert.failing_nodes(), vec![0]);
    // 𝓜₀ = −w₁(0) D⁻¹ = D⁻¹, largest eigenvalue 1/5.
    assert!((cert.nodes[0].max_eig - 0.2).abs() < 1e-12);
    assert!(cert.report().contains("node 0 kind = simple_clamped"));
}

#[test]
fn single_beam_matches_beam_certificate() {
    let p = BeamParameters::hesse2012();
    let k = near_transparent_k(&p, 0.0).unwrap();
    let w = exp_weight(Sign::Pos, 0.0, 1.0, 1.0);
    for rho in [0.5, 0.9, 1.0, 1.1, 1.5, 3.0] {
        for kk in [k, k * 0.2, k * 4.0] {
            let net = single_beam(beam(p.clone(), Mat3::identity(), w), rho, NodeKind::Controlled(kk));
            let cert = star_certificate(&net).unwrap();
            let settings = CertificateSettings { rho, weight: w, variant: WVariant::Sqrt, grid_pts: DEFAULT_GRID };
            let single = certificate(&p, &kk, &settings).unwrap();
            assert_eq!(cert.pass, single.verdict, "rho {rho}\n{}\n{}", cert.report(), single.report());
        }
    }
}

#[test]
fn invalid_networks_are_rejected() {
    let p = BeamParameters::hesse2012();
    let mut bad = Mat3::identity();
    bad[(0, 0)] = 2.0;
    let net = single_beam(beam(p.clone(), bad, Weight::zero()), 1.0, NodeKind::Free);
    assert!(matches!(star_certificate(&net), Err(NetworkError::Parameter(_))));
    let mut k = Mat6::identity();
    k[(0, 1)] = 0.5;
    let net = single_beam(beam(p.clone(), Mat3::identity(), Weight::zero()), 1.0, NodeKind::Controlled(k));
    assert!(matches!(star_certificate(&net), Err(NetworkError::Parameter(_))));
    let mut net = single_beam(beam(p.clone(), Mat3::identity(), Weight::zero()), 1.0, NodeKind::Free);
    net.nodes[1].incident[0].end = End::Start;
    assert!(matches!(star_certificate(&net), Err(NetworkError::Unsupported(_))));
    let net = single_beam(beam(p, Mat3::identity(), Weight::zero()), -1.0, NodeKind::Free);
    assert!(star_certificate(&net).is_err());
}

#[test]
fn unit_coefficients_give_identity_factors() {
    let p = BeamParameters::new(1.0, Mat6::identity(), Mat6::identity(), Vec3::zeros()).unwrap();
    let b = beam_at_node(&beam(p.clone(), Mat3::identity(), Weight::zero()), End::End).unwrap();
    assert!((b.gamma - Mat6::identity()).amax() <= 1e-15);
    assert!((b.sigma - Mat6::identity()).amax() <= 1e-15);
}

#[test]
fn hesse_sigma_literal_and_frame_congruence() {
    let p = BeamParameters::hesse2012();
    let plain = beam_at_node(&beam(p.clone(), Mat3::identity(), Weight::zero()), End::Start).unwrap();
    // σ = C^{−1/2} D⁻¹ C^{−1/2} = (C D)⁻¹ entrywise for diagonal data.
    let c = p.flexibility_at(0.0);
    let d = [100.0, 100.0, 100.0, 5.0, 50f64.sqrt(), 50f64.sqrt()];
    for i in 0..6 {
        let expect = 1.0 / (c[(i, i)] * d[i]);
        assert!((plain.sigma[(i, i)] - expect).abs() <= 1e-12 * expect);
    }
    let r = Rotation3::from_scaled_axis(Vec3::new(0.4, 1.1, -0.3)).into_inner();
    let turned = beam_at_node(&beam(p, r, Weight::zero()), End::Start).unwrap();
    let rb = rbar(&r);
    assert!((turned.sigma - rb * plain.sigma * rb.transpose()).amax() <= 1e-12 * plain.sigma.amax());
    assert!((turned.gamma - rb * plain.gamma).amax() <= 1e-12 * plain.gamma.amax());
}

#[test]
fn transparent_node_is_nonpositive_below_rho() {
    let p = BeamParameters::hesse2012();
    let k = transparent_k(&p, 1.0).unwrap();
    for w in [-0.9, 0.0, 0.5, 0.99] {
        let net = single_beam(beam(p.clone(), Mat3::identity(), Weight::constant(w)), 1.0, NodeKind::Controlled(k));
        let cert = nodal_certificate(&net, 1).unwrap();
        assert!(cert.verdict, "w {w} max eig {}", cert.max_eig);
        assert!(cert.gamma_condition >= 1.0);
    }
    let net = single_beam(beam(p, Mat3::identity(), Weight::constant(1.2)), 1.0, NodeKind::Controlled(k));
    assert!(!nodal_certificate(&net, 1).unwrap().verdict);
}
