//! Built-in data-generating processes.

use serde::{Deserialize, Serialize};

use super::{Dist, MeanExpr, NodeSpec, Role, Scm, ScmDocument, ScmError};

fn build(doc: ScmDocument) -> Scm {
    Scm::from_document(doc).expect("built-in model is valid")
}

/// The defective-cars recall model:
///
/// ```text
/// U  ~ Bernoulli(0.2)
/// A1 := 0
/// P  := U
/// Y1 ~ Poisson(10 + 5U − 5P)
/// A2 := P
/// Y2 ~ Poisson(10 − 0.2·Y1 + 5U − 5·max(P, A2))
/// ```
pub fn builtin_cars_example() -> Scm {
    build(ScmDocument {
        name: "cars".into(),
        lag: Some(1),
        nodes: vec![
            NodeSpec::exogenous_bernoulli("U", 0.2),
            NodeSpec::deterministic("A1", Role::Treatment, Some(1), MeanExpr::constant(0.0)),
            NodeSpec::deterministic("P", Role::Decision, Some(1), MeanExpr::constant(0.0).term("U", 1.0)),
            NodeSpec::stochastic(
                "Y1",
                Dist::Poisson,
                Role::Outcome,
                Some(1),
                MeanExpr::constant(10.0).term("U", 5.0).term("P", -5.0),
            ),
            NodeSpec::deterministic("A2", Role::Treatment, Some(2), MeanExpr::constant(0.0).term("P", 1.0)),
            NodeSpec::stochastic(
                "Y2",
                Dist::Poisson,
                Role::Outcome,
                Some(2),
                MeanExpr::constant(10.0).term("Y1", -0.2).term("U", 5.0).max_term(&["P", "A2"], -5.0),
            ),
        ],
    })
}

fn two_period_doc(name: &str, y1: MeanExpr, y2: MeanExpr) -> ScmDocument {
    ScmDocument {
        name: name.into(),
        lag: Some(1),
        nodes: vec![
            NodeSpec::exogenous_bernoulli("U", 0.2),
            NodeSpec::deterministic("A1", Role::Treatment, Some(1), MeanExpr::constant(0.0)),
            NodeSpec::deterministic("P", Role::Decision, Some(1), MeanExpr::constant(0.0).term("U", 1.0)),
            NodeSpec::stochastic("Y1", Dist::Poisson, Role::Outcome, Some(1), y1),
            NodeSpec::deterministic("A2", Role::Treatment, Some(2), MeanExpr::constant(0.0).term("P", 1.0)),
            NodeSpec::stochastic("Y2", Dist::Poisson, Role::Outcome, Some(2), y2),
        ],
    }
}

/// Two-period model without anticipation: the decision moves `Y2` only
/// together with implementation, and parallel trends hold under `do(P=0)`.
///
/// `Y1 ~ Poisson(10 + 5U)`, `Y2 ~ Poisson(12 + 5U − 3·max(P, A2))`,
/// `P := U ~ Bernoulli(0.2)`, `A2 := P`.
pub fn prop2_dgp() -> Scm {
    build(two_period_doc(
        "prop2-dgp",
        MeanExpr::constant(10.0).term("U", 5.0),
        MeanExpr::constant(12.0).term("U", 5.0).max_term(&["P", "A2"], -3.0),
    ))
}

/// Two-period family with an anticipation effect `alpha` of the decision on
/// `Y1` and no direct decision effect on `Y2`:
/// `Y1 ~ Poisson(10 + 5U + alpha·P)`, `Y2 ~ Poisson(12 + 5U − 3·A2)`.
pub fn two_period_anticipation_dgp(alpha: f64) -> Result<Scm, ScmError> {
    Scm::from_document(two_period_doc(
        &format!("anticipation({alpha})"),
        MeanExpr::constant(10.0).term("U", 5.0).term("P", alpha),
        MeanExpr::constant(12.0).term("U", 5.0).term("A2", -3.0),
    ))
}

/// [`two_period_anticipation_dgp`] at `alpha = −2`.
pub fn prop1_dgp() -> Scm {
    let mut doc = two_period_anticipation_dgp(-2.0).expect("valid").document().clone();
    doc.name = "prop1-dgp".into();
    build(doc)
}

/// Coefficients of the staggered-adoption model built by
/// [`builtin_staggered_dgp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaggeredParams {
    /// `Pr(U = 1)` for the binary unit type.
    pub latent_prob: f64,
    /// Per-period probability of first deciding, for `U = 0`.
    pub base_hazard: f64,
    /// Added to the hazard when `U = 1`.
    pub latent_hazard_shift: f64,
    /// Level shift of every outcome when `U = 1`.
    pub latent_level: f64,
    /// Period intercepts `α_1 … α_τ`.
    pub trend: Vec<f64>,
    /// Effect of the `e`-th period of implementation (0-based), added up:
    /// after `e + 1` implemented periods the effect is `Σ_{j≤e} effects[j]`.
    pub effects: Vec<f64>,
    /// Outcome shift while decided but not yet implemented. Zero means no
    /// anticipation of the decision.
    pub anticipation: f64,
    pub noise_sd: f64,
}

impl StaggeredParams {
    pub fn default_for(tau: usize) -> Self {
        Self {
            latent_prob: 0.5,
            base_hazard: 0.2,
            latent_hazard_shift: 0.15,
            latent_level: 3.0,
            trend: (0..tau).map(|i| 10.0 + 2.0 * i as f64 - 0.3 * (i * i) as f64).collect(),
            effects: vec![2.0, 1.0, 0.5],
            anticipation: 0.0,
            noise_sd: 1.0,
        }
    }
}

/// Staggered adoption with decisions `P_1 … P_τ` and implementation lag `s`.
///
/// Nodes, in order: `U`; then for each period `k`: a decision shock `Dk`
/// (only while `k ≤ τ − s`), `Pk`, `Ak`, `Yk`.
///
/// ```text
/// U  ~ Bernoulli(latent_prob)
/// Dk ~ Bernoulli(base_hazard + latent_hazard_shift·U)      k ≤ τ − s
/// P1 := D1;  Pk := max(P(k−1), Dk)                          k ≤ τ − s
/// Pk := P(τ−s)                                              k > τ − s
/// Ak := 0 (k ≤ s);  Ak := P(k−s) (k > s)
/// Yk ~ Normal(trend_k + latent_level·U + Σ_j effects[k−j]·Aj
///             + anticipation·(Pk − Ak), noise_sd)
/// ```
///
/// Every decision path of the form zeros, then ones from some `g ≤ τ − s`,
/// or all zeros, has positive probability, and no other path can occur.
pub fn builtin_staggered_dgp(tau: usize, s: usize, params: &StaggeredParams) -> Result<Scm, ScmError> {
    if s < 1 || tau < s + 1 {
        return Err(ScmError::InvalidParams(format!("need tau ≥ s + 1 ≥ 2, got tau={tau}, s={s}")));
    }
    if params.trend.len() != tau {
        return Err(ScmError::InvalidParams(format!("trend has {} entries for tau={tau}", params.trend.len())));
    }
    let open = |p: f64| p > 0.0 && p < 1.0;
    if !open(params.latent_prob) || !open(params.base_hazard) || !open(params.base_hazard + params.latent_hazard_shift)
    {
        return Err(ScmError::InvalidParams(
            "latent probability and both decision hazards must lie strictly inside (0, 1)".into(),
        ));
    }
    let finite = [params.latent_level, params.anticipation, params.noise_sd]
        .iter()
        .chain(&params.trend)
        .chain(&params.effects)
        .all(|v| v.is_finite());
    if !finite || params.noise_sd <= 0.0 {
        return Err(ScmError::InvalidParams("coefficients must be finite and noise_sd positive".into()));
    }

    let last_decision = tau - s;
    let mut nodes = vec![NodeSpec::exogenous_bernoulli("U", params.latent_prob)];
    for k in 1..=tau {
        let p = format!("P{k}");
        if k <= last_decision {
            let d = format!("D{k}");
            nodes.push(NodeSpec::stochastic(
                &d,
                Dist::Bernoulli,
                Role::Auxiliary,
                Some(k),
                MeanExpr::constant(params.base_hazard).term("U", params.latent_hazard_shift),
            ));
            let mean = if k == 1 {
                MeanExpr::constant(0.0).term(&d, 1.0)
            } else {
                MeanExpr::constant(0.0).max_term(&[&format!("P{}", k - 1), &d], 1.0)
            };
            nodes.push(NodeSpec::deterministic(&p, Role::Decision, Some(k), mean));
        } else {
            nodes.push(NodeSpec::deterministic(
                &p,
                Role::Decision,
                Some(k),
                MeanExpr::constant(0.0).term(&format!("P{last_decision}"), 1.0),
            ));
        }
        let a = format!("A{k}");
        let a_mean =
            if k <= s { MeanExpr::constant(0.0) } else { MeanExpr::constant(0.0).term(&format!("P{}", k - s), 1.0) };
        nodes.push(NodeSpec::deterministic(&a, Role::Treatment, Some(k), a_mean));

        let mut y = MeanExpr::constant(params.trend[k - 1]).term("U", params.latent_level);
        for j in 1..=k {
            let coef = params.effects.get(k - j).copied().unwrap_or(0.0);
            if coef != 0.0 {
                y = y.term(&format!("A{j}"), coef);
            }
        }
        if params.anticipation != 0.0 {
            y = y.term(&p, params.anticipation).term(&a, -params.anticipation);
        }
        nodes.push(NodeSpec::normal(&format!("Y{k}"), Role::Outcome, Some(k), y, params.noise_sd));
    }
    Scm::from_document(ScmDocument { name: format!("staggered(tau={tau},s={s})"), lag: Some(s), nodes })
}

/// Exact decision-effect `E(Y_k^{first decision g} − Y_k^{never} | cohort g)`
/// for [`builtin_staggered_dgp`]: the outcome equation is affine and the
/// two strategies differ only through `A` and `P − A`.
pub fn staggered_closed_form_att(params: &StaggeredParams, s: usize, g: usize, k: usize) -> f64 {
    if k < g {
        0.0
    } else if k < g + s {
        params.anticipation
    } else {
        params.effects.iter().take(k - g - s + 1).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;
    use crate::scm::{sample_nodes, Intervention};

    #[test]
    fn cars_structure() {
        let cars = builtin_cars_example();
        assert_eq!(cars.n_nodes(), 6);
        let det: Vec<&str> =
            cars.nodes().iter().filter(|n| n.dist == Dist::Deterministic).map(|n| n.name.as_str()).collect();
        assert_eq!(det, ["A1", "P", "A2"]);
    }

    #[test]
    fn staggered_rejects_bad_params() {
        let p = StaggeredParams::default_for(4);
        assert!(builtin_staggered_dgp(4, 0, &p).is_err());
        assert!(builtin_staggered_dgp(1, 1, &StaggeredParams::default_for(1)).is_err());
        assert!(builtin_staggered_dgp(5, 1, &p).is_err());
        let bad = StaggeredParams { base_hazard: 0.9, latent_hazard_shift: 0.2, ..p.clone() };
        assert!(builtin_staggered_dgp(4, 1, &bad).is_err());
        let bad = StaggeredParams { noise_sd: 0.0, ..p };
        assert!(builtin_staggered_dgp(4, 1, &bad).is_err());
    }

    #[test]
    fn staggered_paths_are_admissible() {
        // Exhaustive check of every sampled decision path against the
        // admissible set: zeros, then ones from some g ≤ τ − s, constant after.
        let (tau, s) = (4, 1);
        let scm = builtin_staggered_dgp(tau, s, &StaggeredParams::default_for(tau)).unwrap();
        let sample = sample_nodes(&scm, &Intervention::none(), 20_000, 17, Execution::Parallel).unwrap();
        let p: Vec<usize> = (1..=tau).map(|k| scm.node_index(&format!("P{k}")).unwrap()).collect();
        let a: Vec<usize> = (1..=tau).map(|k| scm.node_index(&format!("A{k}")).unwrap()).collect();
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..sample.n_units {
            let row = sample.unit(i);
            let path: Vec<u8> = p.iter().map(|&n| row[n] as u8).collect();
            let first = path.iter().position(|&v| v == 1).map(|f| f + 1);
            let admissible = match first {
                None => true,
                Some(g) => g <= tau - s && path[g - 1..].iter().all(|&v| v == 1),
            };
            assert!(admissible, "path {path:?}");
            for k in 1..=tau {
                let expect = if k <= s { 0.0 } else { row[p[k - s - 1]] };
                assert_eq!(row[a[k - 1]], expect);
            }
            seen.insert(first);
        }
        // Positive probability on each admissible path: never and g = 1..τ−s.
        assert_eq!(seen.len(), tau - s + 1);
    }

    #[test]
    fn staggered_export_round_trips() {
        let scm =
            builtin_staggered_dgp(5, 2, &StaggeredParams { anticipation: 0.7, ..StaggeredParams::default_for(5) })
                .unwrap();
        let back = Scm::from_json(&scm.document().to_json_pretty()).unwrap();
        assert_eq!(back.document(), scm.document());
        assert_eq!(back.panel_layout().unwrap().n_periods, 5);
    }

    #[test]
    fn closed_form_att_shape() {
        let p = StaggeredParams { anticipation: 0.5, ..StaggeredParams::default_for(4) };
        assert_eq!(staggered_closed_form_att(&p, 1, 2, 1), 0.0);
        assert_eq!(staggered_closed_form_att(&p, 1, 2, 2), 0.5);
        assert_eq!(staggered_closed_form_att(&p, 1, 2, 3), 2.0);
        assert_eq!(staggered_closed_form_att(&p, 1, 2, 4), 3.0);
    }
}
