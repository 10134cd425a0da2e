use didp::oracle::{bias_sweep, SweepConfig, SweepFamily};
use didp::scm::{builtin_cars_example, builtin_staggered_dgp, sample_observational, SampleOptions, StaggeredParams};
use didp::{audit_assumptions, infer_groups, load_panel, save_panel, Execution, Group, PanelSchema};

#[test]
fn cars_sample_survives_csv_and_passes_the_panel_audit() {
    let cars = builtin_cars_example();
    let panel = sample_observational(&cars, 1000, 1, &SampleOptions::default()).unwrap();
    let schema = PanelSchema { lag: Some(1), ..Default::default() };
    let mut first = Vec::new();
    save_panel(&panel, &mut first, &schema).unwrap();
    let back = load_panel(first.as_slice(), &schema).unwrap();
    let mut second = Vec::new();
    save_panel(&back, &mut second, &schema).unwrap();
    assert_eq!(first, second);
    assert_eq!(back, panel.select_units(&(0..1000).collect::<Vec<_>>()));

    let audit = audit_assumptions(&back);
    assert!(audit.determinism.holds(), "{:?}", audit.determinism);
    assert!(audit.positivity_ok);
    let treated = audit.positivity[0].count as f64 / 1000.0;
    assert!((treated - 0.2).abs() < 4.0 * (0.16f64 / 1000.0).sqrt(), "{treated}");
}

#[test]
fn samples_do_not_depend_on_the_schedule() {
    let scm = builtin_staggered_dgp(5, 2, &StaggeredParams::default_for(5)).unwrap();
    let par = SampleOptions { retain_latent: true, exec: Execution::Parallel };
    let seq = SampleOptions { retain_latent: true, exec: Execution::Sequential };
    let a = sample_observational(&scm, 3000, 77, &par).unwrap();
    let b = sample_observational(&scm, 3000, 77, &seq).unwrap();
    assert_eq!(a, b);
    // Prefixes agree: unit i depends only on (seed, i).
    let c = sample_observational(&scm, 100, 77, &seq).unwrap();
    assert_eq!(c, a.select_units(&(0..100).collect::<Vec<_>>()));
}

#[test]
fn staggered_cohorts_are_recoverable() {
    let scm = builtin_staggered_dgp(5, 2, &StaggeredParams::default_for(5)).unwrap();
    let panel = sample_observational(&scm, 5000, 3, &SampleOptions::default()).unwrap();
    let groups = infer_groups(&panel, 2).unwrap();
    let counts = groups.counts();
    for g in 1..=3 {
        assert!(counts.get(&Group::Decided(g)).copied().unwrap_or(0) > 100, "{counts:?}");
    }
    assert!(!counts.contains_key(&Group::Decided(4)));
    assert!(audit_assumptions(&panel).determinism.holds());
}

fn sweep_cfg(alphas: Vec<f64>, seed: u64) -> SweepConfig {
    SweepConfig {
        alphas,
        n_units: 4000,
        replications: 60,
        oracle_draws: 200_000,
        seed,
        sigmas: 4.0,
        exec: Execution::Parallel,
    }
}

#[test]
fn two_period_sweep_tracks_the_bias_term() {
    let table = bias_sweep(&SweepFamily::TwoPeriod, &sweep_cfg(vec![-3.0, -2.0, -1.0, 0.0], 5)).unwrap();
    assert_eq!(table.rows.len(), 4);
    for row in &table.rows {
        // ψ(α) = α exactly in this family; the oracle must agree.
        assert!((row.psi - row.alpha).abs() <= 4.0 * row.psi_se + 1e-9, "{row:?}");
        assert!((row.att + 3.0).abs() <= 4.0 * row.att_se + 1e-9, "{row:?}");
        // E(did) = ATT − ψ = −3 − α.
        let se = row.did_sd / (row.replications as f64).sqrt();
        assert!((row.did_mean - (-3.0 - row.alpha)).abs() <= 4.0 * se, "{row:?}");
        assert!(row.within, "{row:?}");
    }
    let zero = table.rows.iter().find(|r| r.alpha == 0.0).unwrap();
    assert_eq!(zero.psi, 0.0);
    assert!(table.all_within);
    let mut csv = Vec::new();
    table.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
}

#[test]
fn staggered_sweep_covers_both_controls() {
    let family = SweepFamily::Staggered { tau: 4, s: 1, params: StaggeredParams::default_for(4) };
    let mut cfg = sweep_cfg(vec![-1.0, 0.0], 8);
    cfg.n_units = 3000;
    cfg.replications = 40;
    cfg.oracle_draws = 60_000;
    let table = bias_sweep(&family, &cfg).unwrap();
    // (g, k) pairs with g + 1 ≤ k ≤ 4 and g ≤ 3: six, each with two controls.
    assert_eq!(table.rows.len(), 2 * 6 * 2);
    for row in &table.rows {
        assert!((row.psi - row.alpha).abs() <= 4.0 * row.psi_se + 1e-9, "{row:?}");
    }
    assert!(table.all_within, "max residual {} sigma", table.max_residual_sigmas);
}
