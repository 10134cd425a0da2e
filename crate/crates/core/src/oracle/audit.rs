//! Oracle checks of identifying assumptions on a model.
//!
//! These involve counterfactuals, so they need the model itself; nothing
//! here can be run on an observed panel.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    estimand_contrast, estimate_contrast, path_assignment, two_period_nodes, Contrast, EstimandKind, McConfig,
    OracleError, OracleValue, POSITIVITY_FLOOR,
};
use crate::exec::{derive_seed, domain};
use crate::scm::{sample_nodes, Intervention, Role, Scm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditStatus {
    Holds,
    Violated,
    /// True in every recursive structural model; nothing to simulate.
    ByConstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditItem {
    pub label: String,
    pub value: f64,
    pub expected: f64,
    pub mc_se: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl AuditItem {
    fn zero_within(label: String, value: f64, mc_se: f64, sigmas: f64) -> Self {
        Self::near(label, value, 0.0, mc_se, sigmas)
    }

    fn near(label: String, value: f64, expected: f64, mc_se: f64, sigmas: f64) -> Self {
        // The additive slack absorbs rounding when the contrast is exact.
        let tolerance = sigmas * mc_se + 1e-9 * (1.0 + expected.abs());
        Self { label, value, expected, mc_se, tolerance, pass: (value - expected).abs() <= tolerance }
    }

    fn exact(label: String, value: f64, pass: bool) -> Self {
        Self { label, value, expected: 0.0, mc_se: 0.0, tolerance: 0.0, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub name: String,
    pub statement: String,
    pub required: bool,
    pub status: AuditStatus,
    pub items: Vec<AuditItem>,
}

impl AuditResult {
    fn from_items(name: &str, statement: &str, items: Vec<AuditItem>) -> Self {
        let status = if items.iter().all(|i| i.pass) { AuditStatus::Holds } else { AuditStatus::Violated };
        Self { name: name.into(), statement: statement.into(), required: true, status, items }
    }

    pub fn holds(&self) -> bool {
        self.status != AuditStatus::Violated
    }

    pub(crate) fn optional(mut self) -> Self {
        self.required = false;
        self
    }
}

/// Oracle budget and tolerance shared by the checks of one report.
pub(crate) struct Auditor<'a> {
    pub scm: &'a Scm,
    pub cfg: McConfig,
    pub sigmas: f64,
    next: u64,
}

impl<'a> Auditor<'a> {
    pub fn new(scm: &'a Scm, cfg: McConfig, sigmas: f64) -> Self {
        Self { scm, cfg: McConfig { seed: derive_seed(cfg.seed, domain::AUDIT, 0), ..cfg }, sigmas, next: 0 }
    }

    fn fresh_cfg(&mut self) -> McConfig {
        self.next += 1;
        self.cfg.child(self.next)
    }

    fn eval(&mut self, c: &Contrast) -> Result<OracleValue, OracleError> {
        let cfg = self.fresh_cfg();
        estimate_contrast(self.scm, c, &cfg)
    }

    fn natural_sample(&mut self) -> Result<(usize, Vec<f64>), OracleError> {
        let cfg = self.fresh_cfg();
        let n = cfg.draws.min(200_000);
        Ok((n, sample_nodes(self.scm, &Intervention::none(), n, cfg.seed, cfg.exec)?.values))
    }

    pub fn consistency(&self, name: &str, statement: &str) -> AuditResult {
        AuditResult {
            name: name.into(),
            statement: statement.into(),
            required: true,
            status: AuditStatus::ByConstruction,
            items: Vec::new(),
        }
    }

    /// Both arms of `A2` have natural probability above the positivity floor.
    pub fn positivity(&mut self) -> Result<AuditResult, OracleError> {
        let t = two_period_nodes(self.scm)?;
        let v = self.eval(&Contrast::mean(&t.a2, Intervention::none(), &[]))?;
        let items = vec![
            AuditItem::exact(format!("Pr({}=1)", t.a2), v.value, v.value >= POSITIVITY_FLOOR),
            AuditItem::exact(format!("Pr({}=0)", t.a2), 1.0 - v.value, 1.0 - v.value >= POSITIVITY_FLOOR),
        ];
        Ok(AuditResult::from_items("positivity", "0 < Pr(A2=1) < 1", items))
    }

    /// `A2 = P` in every natural draw.
    pub fn determinism(&mut self) -> Result<AuditResult, OracleError> {
        let t = two_period_nodes(self.scm)?;
        let (p, a2) = (self.scm.node_index(&t.p)?, self.scm.node_index(&t.a2)?);
        let k = self.scm.n_nodes();
        let (n, values) = self.natural_sample()?;
        let mismatches = (0..n).filter(|i| values[i * k + p] != values[i * k + a2]).count();
        let item =
            AuditItem::exact(format!("units with {} != {} (of {n})", t.a2, t.p), mismatches as f64, mismatches == 0);
        Ok(AuditResult::from_items("decision_determinism", "A2 = P for every unit", vec![item]))
    }

    /// `E(Y1^{p=1} − Y1^{p=0} | P=1) = 0`.
    pub fn no_anticipation(&mut self) -> Result<AuditResult, OracleError> {
        let v = self.eval(&estimand_contrast(self.scm, EstimandKind::Psi)?)?;
        let item = AuditItem::zero_within("E(Y1^{p=1} - Y1^{p=0} | P=1)".into(), v.value, v.mc_se, self.sigmas);
        Ok(AuditResult::from_items("no_anticipation_of_decision", "E(Y1^{p=1} | P=1) = E(Y1^{p=0} | P=1)", vec![item]))
    }

    fn trend_audit(&mut self, name: &str, statement: &str, group: &str) -> Result<AuditResult, OracleError> {
        let t = two_period_nodes(self.scm)?;
        let off = Intervention::none().set(group, 0.0);
        let tr = self.eval(&Contrast::trend(&t.y2, &t.y1, off.clone(), &[(group, 1.0)]))?;
        let co = self.eval(&Contrast::trend(&t.y2, &t.y1, off, &[(group, 0.0)]))?;
        let diff = tr.value - co.value;
        let mut items = vec![AuditItem::zero_within(
            format!("trend difference ({group}=1 minus {group}=0)"),
            diff,
            tr.joint_se(&co),
            self.sigmas,
        )];
        for (label, v) in [(format!("trend | {group}=1"), tr), (format!("trend | {group}=0"), co)] {
            items.push(AuditItem { mc_se: v.mc_se, ..AuditItem::exact(label, v.value, true) });
        }
        Ok(AuditResult::from_items(name, statement, items))
    }

    /// Parallel trends under `do(P=0)` between `P=1` and `P=0`.
    pub fn trends_under_no_decision(&mut self) -> Result<AuditResult, OracleError> {
        let t = two_period_nodes(self.scm)?;
        self.trend_audit(
            "parallel_trends_under_no_decision",
            "E(Y2^{p=0} - Y1^{p=0} | P=1) = E(Y2^{p=0} - Y1^{p=0} | P=0)",
            &t.p,
        )
    }

    /// Parallel trends under `do(A2=0)` between `A2=1` and `A2=0`.
    pub fn trends_under_no_implementation(&mut self) -> Result<AuditResult, OracleError> {
        let t = two_period_nodes(self.scm)?;
        self.trend_audit(
            "parallel_trends_under_no_implementation",
            "E(Y2^{a2=0} - Y1 | A2=1) = E(Y2^{a2=0} - Y1 | A2=0)",
            &t.a2,
        )
    }

    /// `E(Y2^{p=p*, a2=a*} | P=p') = E(Y2^{a2=a*} | P=p')` for all eight triples.
    pub fn exclusion(&mut self) -> Result<AuditResult, OracleError> {
        let t = two_period_nodes(self.scm)?;
        let mut items = Vec::new();
        for p_star in [0.0, 1.0] {
            for a_star in [0.0, 1.0] {
                for p_obs in [0.0, 1.0] {
                    let joint = Intervention::none().set(&t.p, p_star).set(&t.a2, a_star);
                    let single = Intervention::none().set(&t.a2, a_star);
                    let v = self.eval(&Contrast::difference(&t.y2, joint, single, &[(&t.p, p_obs)]))?;
                    items.push(AuditItem::zero_within(
                        format!("E(Y2^{{p={p_star},a2={a_star}}} - Y2^{{a2={a_star}}} | P={p_obs})"),
                        v.value,
                        v.mc_se,
                        self.sigmas,
                    ));
                }
            }
        }
        Ok(AuditResult::from_items(
            "no_direct_effect_of_decision",
            "E(Y2^{p=p*,a2=a*} | P=p') = E(Y2^{a2=a*} | P=p') for all p*, a*, p'",
            items,
        ))
    }

    fn lag(&self) -> Result<usize, OracleError> {
        self.scm.lag().ok_or_else(|| OracleError::InvalidQuery("model declares no implementation lag".into()))
    }

    /// `A_k = 0` for `k ≤ s` and `A_k = P_{k−s}` afterwards, in every natural draw.
    pub fn lagged_determinism(&mut self) -> Result<AuditResult, OracleError> {
        let s = self.lag()?;
        let layout = self.scm.panel_layout()?.clone();
        let k = self.scm.n_nodes();
        let (n, values) = self.natural_sample()?;
        let mut items = Vec::new();
        for t in 1..=layout.n_periods {
            let a = layout.treatment[t - 1];
            let src = if t > s { layout.decision_node_at(t - s) } else { None };
            if t > s && src.is_none() {
                items.push(AuditItem::exact(format!("A{t}: no decision node at period {}", t - s), 0.0, false));
                continue;
            }
            let bad = (0..n)
                .filter(|i| {
                    let want = src.map_or(0.0, |p| values[i * k + p]);
                    values[i * k + a] != want
                })
                .count();
            items.push(AuditItem::exact(format!("units violating A{t} rule (of {n})"), bad as f64, bad == 0));
        }
        Ok(AuditResult::from_items("lagged_determinism", "A_k = 0 for k <= s and A_k = P_{k-s} for k > s", items))
    }

    /// Decision paths are exactly the admissible staggered paths, each with
    /// probability above the positivity floor.
    pub fn decision_structure(&mut self) -> Result<AuditResult, OracleError> {
        let s = self.lag()?;
        let layout = self.scm.panel_layout()?.clone();
        let tau = layout.n_periods;
        if s >= tau {
            return Err(OracleError::InvalidQuery(format!("lag s={s} leaves no decision period for τ={tau}")));
        }
        let k = self.scm.n_nodes();
        let (n, values) = self.natural_sample()?;
        let path_of = |i: usize| -> Vec<u8> {
            (1..=tau).map(|t| layout.decision_node_at(t).map_or(0, |p| values[i * k + p] as u8)).collect()
        };
        let admissible: Vec<Vec<u8>> =
            (1..=tau - s + 1).map(|g| (1..=tau).map(|t| u8::from(t >= g && g <= tau - s)).collect()).collect();
        let mut counts: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for i in 0..n {
            *counts.entry(path_of(i)).or_default() += 1;
        }
        let label = |p: &[u8]| p.iter().map(u8::to_string).collect::<String>();
        let mut items = Vec::new();
        for p in &admissible {
            let freq = counts.get(p).copied().unwrap_or(0) as f64 / n as f64;
            items.push(AuditItem::exact(format!("Pr(path {})", label(p)), freq, freq >= POSITIVITY_FLOOR));
        }
        let stray: usize = counts.iter().filter(|(p, _)| !admissible.contains(p)).map(|(_, c)| c).sum();
        items.push(AuditItem::exact(format!("units on inadmissible paths (of {n})"), stray as f64, stray == 0));
        Ok(AuditResult::from_items(
            "decision_structure",
            "decision paths are monotone, switch by tau - s and stay fixed afterwards; every such path has positive probability",
            items,
        ))
    }

    /// Group-time decision effects vanish before implementation.
    pub fn no_anticipation_group_time(&mut self) -> Result<AuditResult, OracleError> {
        let s = self.lag()?;
        let tau = self.scm.panel_layout()?.n_periods;
        let mut items = Vec::new();
        for g in 1..=tau.saturating_sub(s) {
            for k in g..(g + s).min(tau + 1) {
                let v = self.eval(&estimand_contrast(self.scm, EstimandKind::AttPGt { g, k })?)?;
                items.push(AuditItem::zero_within(format!("ATT_P_GT({g},{k})"), v.value, v.mc_se, self.sigmas));
            }
        }
        Ok(AuditResult::from_items("no_anticipation_of_decision", "ATT_P_GT(g,k) = 0 for g <= k < g + s", items))
    }

    /// One-period trends under never deciding agree between cohort `g` and
    /// units undecided through `j`, for every `g`, `k ≥ g+s` and `k ≤ j ≤ τ`.
    pub fn trends_group_time(&mut self) -> Result<AuditResult, OracleError> {
        let s = self.lag()?;
        let layout = self.scm.panel_layout()?.clone();
        let tau = layout.n_periods;
        let never: Intervention = path_assignment(self.scm, Role::Decision, usize::MAX)?.into_iter().collect();
        let y = |t: usize| self.scm.node_name(layout.outcome[t - 1]).to_string();
        let mut control_trend: BTreeMap<(usize, usize), OracleValue> = BTreeMap::new();
        let mut items = Vec::new();
        for g in 1..=tau.saturating_sub(s) {
            for k in (g + s).max(2)..=tau {
                let (yk, yk1) = (y(k), y(k - 1));
                let cohort = {
                    let cond = path_assignment(self.scm, Role::Decision, g)?;
                    let c = Contrast {
                        condition: cond,
                        arms: vec![super::Arm::new(never.clone(), &[(&yk, 1.0), (&yk1, -1.0)])],
                    };
                    self.eval(&c)?
                };
                for j in k..=tau {
                    if let Entry::Vacant(slot) = control_trend.entry((j, k)) {
                        let cond: Vec<(String, f64)> = layout
                            .decision
                            .iter()
                            .filter(|(t, _)| *t <= j)
                            .map(|&(_, n)| (self.scm.node_name(n).to_string(), 0.0))
                            .collect();
                        let c = Contrast {
                            condition: cond,
                            arms: vec![super::Arm::new(never.clone(), &[(&yk, 1.0), (&yk1, -1.0)])],
                        };
                        slot.insert(self.eval(&c)?);
                    }
                    let (a, b) = (cohort, control_trend[&(j, k)]);
                    items.push(AuditItem::zero_within(
                        format!("g={g} k={k} j={j}: cohort trend minus undecided-through-j trend"),
                        a.value - b.value,
                        a.joint_se(&b),
                        self.sigmas,
                    ));
                }
            }
        }
        Ok(AuditResult::from_items(
            "parallel_trends_under_never_deciding",
            "E(Y_k^{never} - Y_{k-1}^{never} | cohort g) = E(Y_k^{never} - Y_{k-1}^{never} | P_1..P_j = 0) for g <= tau - s, k >= g + s, k <= j <= tau",
            items,
        ))
    }
}
