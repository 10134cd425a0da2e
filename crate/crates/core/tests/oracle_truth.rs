mod common;

use common::Exact;
use didp::exec::Execution;
use didp::oracle::{estimand_contrast, estimate_contrast, oracle_estimand, Contrast, EstimandKind, McConfig};
use didp::scm::{
    builtin_cars_example, builtin_staggered_dgp, prop1_dgp, prop2_dgp, sample_interventional, sample_observational,
    staggered_closed_form_att, two_period_anticipation_dgp, Dist, Intervention, MeanExpr, NodeSpec, Role,
    SampleOptions, Scm, ScmDocument, StaggeredParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mc(draws: usize, seed: u64) -> McConfig {
    McConfig::new(draws, seed)
}

/// `|estimate − truth| ≤ k·se`, with slack for exact (zero-variance) cases.
fn assert_close(label: &str, value: f64, se: f64, truth: f64, k: f64) {
    let tol = k * se + 1e-9 * (1.0 + truth.abs());
    assert!((value - truth).abs() <= tol, "{label}: {value} vs {truth} (se {se})");
}

#[test]
fn cars_conditional_means() {
    let cars = builtin_cars_example();
    let exact = Exact::new(cars.document());
    let set = |n: &str, v: f64| Intervention::none().set(n, v);
    let cases: Vec<(&str, Contrast, f64)> = vec![
        ("E(Y1 | P=1)", Contrast::mean("Y1", Intervention::none(), &[("P", 1.0)]), 10.0),
        ("E(Y1^{p=0} | U=1)", Contrast::mean("Y1", set("P", 0.0), &[("U", 1.0)]), 15.0),
        (
            "E(Y2^{p=0,a2=0} | U=1)",
            Contrast::mean("Y2", set("P", 0.0).set("A2", 0.0), &[("U", 1.0)]),
            10.0 - 0.2 * 15.0 + 5.0,
        ),
        ("E(Y2 | A2=1)", Contrast::mean("Y2", Intervention::none(), &[("A2", 1.0)]), 8.0),
    ];
    for (i, (label, c, hand)) in cases.into_iter().enumerate() {
        let v = estimate_contrast(&cars, &c, &mc(200_000, 40 + i as u64)).unwrap();
        let cond: Vec<(&str, f64)> = c.condition.iter().map(|(n, x)| (n.as_str(), *x)).collect();
        let forced: Vec<(&str, f64)> =
            c.arms[0].intervention.assignments.iter().map(|(n, x)| (n.as_str(), *x)).collect();
        let truth = exact.mean(&c.arms[0].terms[0].0, &forced, &cond);
        assert!((truth - hand).abs() < 1e-12, "{label}: exact oracle {truth} vs hand value {hand}");
        assert_close(label, v.value, v.mc_se, truth, 4.0);
        assert!((v.value - hand).abs() <= 0.03, "{label}: {}", v.value);
    }
}

#[test]
fn cars_implementation_share() {
    let cars = builtin_cars_example();
    let p = sample_observational(&cars, 1_000_000, 1, &SampleOptions::default()).unwrap();
    let share = (0..p.n_units()).filter(|&i| p.treatment(i, 2) == 1).count() as f64 / p.n_units() as f64;
    assert!((share - 0.2).abs() < 0.002, "{share}");
}

#[test]
fn cars_named_estimands() {
    let cars = builtin_cars_example();
    let exact = Exact::new(cars.document());
    let stated_values = [(EstimandKind::AttA2, 0.0), (EstimandKind::AttP, -4.0), (EstimandKind::Psi, -5.0)];
    for (i, (kind, stated)) in stated_values.into_iter().enumerate() {
        let c = estimand_contrast(&cars, kind).unwrap();
        let truth = exact_of(&exact, &c);
        assert!((truth - stated).abs() < 1e-12, "{kind}: exact {truth}");
        let v = oracle_estimand(&cars, kind, &mc(300_000, i as u64)).unwrap();
        assert_close(&kind.to_string(), v.value, v.mc_se, stated, 3.0);
        assert!(v.mc_se >= 0.0 && v.value.is_finite() && v.n_draws == 300_000);
    }
}

fn exact_of(exact: &Exact, c: &Contrast) -> f64 {
    let cond: Vec<(&str, f64)> = c.condition.iter().map(|(n, x)| (n.as_str(), *x)).collect();
    let forced: Vec<Vec<(&str, f64)>> =
        c.arms.iter().map(|a| a.intervention.assignments.iter().map(|(n, x)| (n.as_str(), *x)).collect()).collect();
    let terms: Vec<Vec<(&str, f64)>> =
        c.arms.iter().map(|a| a.terms.iter().map(|(n, x)| (n.as_str(), *x)).collect()).collect();
    let arms: Vec<common::ArmSpec> = forced.iter().zip(&terms).map(|(f, t)| (f.as_slice(), t.as_slice())).collect();
    exact.contrast(&cond, &arms)
}

#[test]
fn two_period_models_against_affine_propagation() {
    let models = [
        (prop2_dgp(), [0.0, -3.0, 0.0]),
        (prop1_dgp(), [-3.0, -3.0, -2.0]),
        (two_period_anticipation_dgp(-3.0).unwrap(), [-3.0, -3.0, -3.0]),
    ];
    for (m, (scm, hand)) in models.iter().enumerate() {
        let exact = Exact::new(scm.document());
        for (i, kind) in [EstimandKind::AttA2, EstimandKind::AttP, EstimandKind::Psi].into_iter().enumerate() {
            let c = estimand_contrast(scm, kind).unwrap();
            let truth = exact_of(&exact, &c);
            assert!((truth - hand[i]).abs() < 1e-12, "{} {kind}: {truth}", scm.name());
            let v = estimate_contrast(scm, &c, &mc(100_000, (10 * m + i) as u64)).unwrap();
            assert_close(&format!("{} {kind}", scm.name()), v.value, v.mc_se, truth, 4.0);
        }
    }
}

#[test]
fn staggered_group_time_effects() {
    let params = StaggeredParams::default_for(4);
    let scm = builtin_staggered_dgp(4, 1, &params).unwrap();
    let exact = Exact::new(scm.document());
    for g in 1..=3 {
        for k in 1..=4 {
            let kind = EstimandKind::AttPGt { g, k };
            let c = estimand_contrast(&scm, kind).unwrap();
            let truth = exact_of(&exact, &c);
            let closed = staggered_closed_form_att(&params, 1, g, k);
            assert!((truth - closed).abs() < 1e-12, "{kind}: exact {truth} vs closed form {closed}");
            let v = estimate_contrast(&scm, &c, &mc(50_000, (g * 10 + k) as u64)).unwrap();
            assert_close(&kind.to_string(), v.value, v.mc_se, truth, 4.0);
            if k < g + 1 {
                assert_close(&kind.to_string(), v.value, v.mc_se, 0.0, 4.0);
            }
        }
    }
}

#[test]
fn staggered_null_model_is_null_everywhere() {
    let params = StaggeredParams { effects: vec![0.0; 3], ..StaggeredParams::default_for(4) };
    let scm = builtin_staggered_dgp(4, 1, &params).unwrap();
    for g in 1..=3 {
        for k in 1..=4 {
            let v = oracle_estimand(&scm, EstimandKind::AttPGt { g, k }, &mc(20_000, 3)).unwrap();
            assert_close("null", v.value, v.mc_se, 0.0, 4.0);
        }
    }
}

#[test]
fn staggered_with_anticipation() {
    let params = StaggeredParams { anticipation: -1.5, ..StaggeredParams::default_for(5) };
    let scm = builtin_staggered_dgp(5, 2, &params).unwrap();
    let exact = Exact::new(scm.document());
    for (g, k) in [(1, 1), (1, 2), (1, 3), (2, 3), (2, 5), (3, 4), (3, 5)] {
        let c = estimand_contrast(&scm, EstimandKind::AttPGt { g, k }).unwrap();
        let truth = exact_of(&exact, &c);
        assert!((truth - staggered_closed_form_att(&params, 2, g, k)).abs() < 1e-12, "({g},{k}) {truth}");
        let v = estimate_contrast(&scm, &c, &mc(40_000, (g * 7 + k) as u64)).unwrap();
        assert_close("anticipation", v.value, v.mc_se, truth, 4.0);
    }
}

#[test]
fn implementation_paths_match_decision_paths_without_anticipation() {
    // With no anticipation, outcomes read only A, so starting treatment at
    // g + s is the same intervention as deciding at g.
    let params = StaggeredParams::default_for(4);
    let scm = builtin_staggered_dgp(4, 1, &params).unwrap();
    let exact = Exact::new(scm.document());
    for (g, k) in [(2, 2), (2, 4), (3, 3), (4, 4)] {
        let a = exact_of(&exact, &estimand_contrast(&scm, EstimandKind::AttAGt { g, k }).unwrap());
        let p = exact_of(&exact, &estimand_contrast(&scm, EstimandKind::AttPGt { g: g - 1, k }).unwrap());
        assert!((a - p).abs() < 1e-12, "({g},{k}): {a} vs {p}");
        let v = oracle_estimand(&scm, EstimandKind::AttAGt { g, k }, &mc(30_000, 9)).unwrap();
        assert_close("ATT_A_GT", v.value, v.mc_se, a, 4.0);
    }
    // Nobody is treated in period 1.
    assert!(oracle_estimand(&scm, EstimandKind::AttAGt { g: 1, k: 2 }, &mc(1000, 1)).is_err());
}

fn random_affine_model(rng: &mut ChaCha8Rng, id: usize) -> Scm {
    let mut u = || rng.random_range(0.5..2.0);
    let (a, b, c, d, e, f, g, h) = (u(), u(), u(), u(), u(), u(), u(), u());
    let doc = ScmDocument {
        name: format!("affine-{id}"),
        lag: None,
        nodes: vec![
            NodeSpec::exogenous_bernoulli("U", 0.1 + 0.8 * (a - 0.5) / 1.5),
            NodeSpec::stochastic("V", Dist::Bernoulli, Role::Auxiliary, None, MeanExpr::constant(0.2).term("U", 0.5)),
            NodeSpec::normal("X", Role::Auxiliary, None, MeanExpr::constant(b).term("U", c), 1.0 + d),
            NodeSpec::deterministic("T", Role::Auxiliary, None, MeanExpr::constant(0.0).term("V", 1.0)),
            NodeSpec::stochastic(
                "W",
                Dist::Poisson,
                Role::Auxiliary,
                None,
                MeanExpr::constant(3.0).term("V", 2.0 * h).term("U", 1.0),
            ),
            NodeSpec::normal(
                "Y",
                Role::Auxiliary,
                None,
                MeanExpr::constant(e).term("X", -f).term("T", g).term("W", 0.5),
                2.0,
            ),
            NodeSpec::normal(
                "Z",
                Role::Auxiliary,
                None,
                MeanExpr::constant(1.0).term("Y", 0.1 * h).term("T", -h).term("X", 0.3),
                1.0,
            ),
        ],
    };
    Scm::from_document(doc).unwrap()
}

#[test]
fn random_affine_models_match_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for id in 0..6 {
        let scm = random_affine_model(&mut rng, id);
        let exact = Exact::new(scm.document());
        let set = |n: &str, v: f64| Intervention::none().set(n, v);
        let contrasts = [
            Contrast::difference("Z", set("T", 1.0), set("T", 0.0), &[("V", 1.0)]),
            Contrast::trend("Z", "Y", set("X", 0.5), &[("U", 0.0)]),
            Contrast::mean("Y", Intervention::none(), &[("V", 0.0), ("U", 1.0)]),
            Contrast::difference("Y", set("V", 1.0), set("V", 0.0), &[("U", 1.0)]),
        ];
        for (i, c) in contrasts.iter().enumerate() {
            let truth = exact_of(&exact, c);
            let v = estimate_contrast(&scm, c, &mc(60_000, (id * 10 + i) as u64)).unwrap();
            assert_close(&format!("model {id} contrast {i}"), v.value, v.mc_se, truth, 4.0);
        }
    }
}

#[test]
fn oracle_is_deterministic_per_seed() {
    let cars = builtin_cars_example();
    let a = oracle_estimand(&cars, EstimandKind::AttP, &mc(30_000, 5)).unwrap();
    let b = oracle_estimand(&cars, EstimandKind::AttP, &mc(30_000, 5)).unwrap();
    let seq =
        oracle_estimand(&cars, EstimandKind::AttP, &McConfig { exec: Execution::Sequential, ..mc(30_000, 5) }).unwrap();
    let c = oracle_estimand(&cars, EstimandKind::AttP, &mc(30_000, 6)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, seq);
    assert_ne!(a.value, c.value);
}

#[test]
fn interventional_samples_follow_the_surgery() {
    let cars = builtin_cars_example();
    let opts = SampleOptions { retain_latent: true, ..Default::default() };
    let p = sample_interventional(&cars, &Intervention::none().set("P", 0.0), 5000, 2, &opts).unwrap();
    for i in 0..p.n_units() {
        assert_eq!(p.decision(i, 1), Some(0));
        assert_eq!(p.treatment(i, 2), 0);
    }
    // U keeps its natural law under surgery downstream of it.
    let share = p.latent()[0].values.iter().sum::<f64>() / 5000.0;
    assert!((share - 0.2).abs() < 4.0 * (0.16f64 / 5000.0).sqrt());
    let exact = Exact::new(cars.document());
    assert!((exact.probability(&[("P", 1.0)]) - 0.2).abs() < 1e-15);
}
