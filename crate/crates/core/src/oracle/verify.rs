//! Simulate-then-estimate checks of the identification results.
//!
//! Each check compares the mean of an estimator over independent simulated
//! panels with the oracle value of the quantity it is claimed to identify.
//! The comparison passes when `|Δ| ≤ sigmas · σ`, where
//! `σ² = oracle_se² + sd²/R` and `R` is the number of replications.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::audit::{AuditResult, Auditor};
use super::{estimand_contrast, estimate_contrast, EstimandKind, McConfig, OracleError, OracleValue};
use crate::estimators::{did_classic, group_time_att, ControlGroup, EstimateError, GroupTimeQuery};
use crate::exec::{derive_seed, domain, map_indices, Execution};
use crate::panel::PanelDataset;
use crate::scm::{sample_observational, SampleOptions, Scm};

/// The identification results that can be checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// Under parallel trends for `do(P=0)` and no direct effect of `P` on
    /// `Y2`, the two-period functional equals `ATT_A2 − ψ`.
    BiasDecomposition,
    /// Under no anticipation of the decision and parallel trends for
    /// `do(P=0)`, the two-period functional equals `ATT_P`.
    DecisionEffect,
    /// In staggered designs the group-time functional equals the decision
    /// effect `ATT_P_GT(g,k)` for both control groups.
    GroupTime,
}

impl Claim {
    /// Short numeric id used on the command line.
    pub fn id(self) -> u8 {
        match self {
            Claim::BiasDecomposition => 1,
            Claim::DecisionEffect => 2,
            Claim::GroupTime => 3,
        }
    }

    pub fn statement(self) -> &'static str {
        match self {
            Claim::BiasDecomposition => "two-period DiD functional = ATT_A2 - PSI",
            Claim::DecisionEffect => "two-period DiD functional = ATT_P",
            Claim::GroupTime => {
                "group-time DiD functional = ATT_P_GT(g,k) for every g <= tau - s, k >= g + s, with not-yet-treated and never-treated controls"
            }
        }
    }
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Claim::BiasDecomposition => "bias-decomposition",
            Claim::DecisionEffect => "decision-effect",
            Claim::GroupTime => "group-time",
        })
    }
}

impl FromStr for Claim {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "1" | "bias-decomposition" => Ok(Claim::BiasDecomposition),
            "2" | "decision-effect" => Ok(Claim::DecisionEffect),
            "3" | "group-time" => Ok(Claim::GroupTime),
            other => Err(format!("unknown claim '{other}' (expected 1, 2, 3 or a claim name)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub n_units: usize,
    pub replications: usize,
    /// Accepted draws per oracle evaluation.
    pub oracle_draws: usize,
    pub seed: u64,
    /// Width of the pass band in combined standard errors.
    pub sigmas: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n_units: 10_000,
            replications: 200,
            oracle_draws: 400_000,
            seed: 0,
            sigmas: 4.0,
            exec: Execution::Parallel,
        }
    }
}

impl VerifyConfig {
    fn oracle_cfg(&self) -> McConfig {
        McConfig { draws: self.oracle_draws, seed: derive_seed(self.seed, domain::ORACLE, 0), exec: self.exec }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSummary {
    pub mean: f64,
    pub sd: f64,
    pub replications: usize,
}

impl SamplingSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, sd: var.sqrt(), replications: values.len() }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        self.sd / (self.replications as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    /// What the estimator mean is compared with.
    pub target: String,
    pub estimator: SamplingSummary,
    pub target_value: f64,
    pub target_se: f64,
    pub delta: f64,
    pub sigma: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Comparison {
    fn new(label: String, target: String, est: SamplingSummary, truth: f64, truth_se: f64, sigmas: f64) -> Self {
        let sigma = truth_se.hypot(est.se());
        let delta = est.mean - truth;
        let tolerance = sigmas * sigma;
        Self {
            label,
            target,
            estimator: est,
            target_value: truth,
            target_se: truth_se,
            delta,
            sigma,
            tolerance,
            pass: delta.abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyStatus {
    Pass,
    /// Premises hold but the estimator does not match its target.
    IdentityFails,
    /// A required assumption fails on this model, so the claim says nothing.
    Vacuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub claim: Claim,
    pub claim_id: u8,
    pub statement: String,
    pub scm: String,
    pub settings: VerifyConfig,
    pub oracle: BTreeMap<String, OracleValue>,
    pub comparisons: Vec<Comparison>,
    /// Checks reported for context that do not decide the status.
    pub supplementary: Vec<Comparison>,
    pub audits: Vec<AuditResult>,
    pub premises_hold: bool,
    pub identity_holds: bool,
    pub status: VerifyStatus,
}

/// Runs `cfg.replications` simulate-then-estimate cycles. Replication `r`
/// samples with its own derived seed, so results do not depend on the
/// schedule.
fn replicate<F>(scm: &Scm, cfg: &VerifyConfig, estimate: F) -> Result<Vec<Vec<f64>>, OracleError>
where
    F: Fn(&PanelDataset) -> Result<Vec<f64>, EstimateError> + Sync,
{
    let opts = SampleOptions { retain_latent: false, exec: Execution::Sequential };
    let runs = map_indices(cfg.exec, cfg.replications, |r| -> Result<Vec<f64>, OracleError> {
        let seed = derive_seed(cfg.seed, domain::REPLICATION, r as u64);
        let panel = sample_observational(scm, cfg.n_units, seed, &opts)?;
        estimate(&panel).map_err(|source| OracleError::Replication { replication: r, source })
    });
    runs.into_iter().collect()
}

fn column(runs: &[Vec<f64>], j: usize) -> Vec<f64> {
    runs.iter().map(|r| r[j]).collect()
}

/// Checks `claim` on `scm` against the oracle.
pub fn verify_claim(claim: Claim, scm: &Scm, cfg: &VerifyConfig) -> Result<VerificationReport, OracleError> {
    if cfg.replications < 2 || cfg.n_units < 2 || cfg.oracle_draws < 2 {
        return Err(OracleError::InvalidQuery("replications, n_units and oracle_draws must each be at least 2".into()));
    }
    let mut report = VerificationReport {
        claim,
        claim_id: claim.id(),
        statement: claim.statement().into(),
        scm: scm.name().into(),
        settings: *cfg,
        oracle: BTreeMap::new(),
        comparisons: Vec::new(),
        supplementary: Vec::new(),
        audits: Vec::new(),
        premises_hold: true,
        identity_holds: true,
        status: VerifyStatus::Pass,
    };
    match claim {
        Claim::BiasDecomposition | Claim::DecisionEffect => two_period(claim, scm, cfg, &mut report)?,
        Claim::GroupTime => group_time(scm, cfg, &mut report)?,
    }
    report.premises_hold = report.audits.iter().filter(|a| a.required).all(AuditResult::holds);
    report.identity_holds = report.comparisons.iter().all(|c| c.pass);
    report.status = match (report.premises_hold, report.identity_holds) {
        (false, _) => VerifyStatus::Vacuous,
        (true, false) => VerifyStatus::IdentityFails,
        (true, true) => VerifyStatus::Pass,
    };
    Ok(report)
}

fn two_period(claim: Claim, scm: &Scm, cfg: &VerifyConfig, report: &mut VerificationReport) -> Result<(), OracleError> {
    let ocfg = cfg.oracle_cfg();
    let kinds = [EstimandKind::AttA2, EstimandKind::AttP, EstimandKind::Psi];
    for (i, kind) in kinds.iter().enumerate() {
        let v = estimate_contrast(scm, &estimand_contrast(scm, *kind)?, &ocfg.child(i as u64))?;
        report.oracle.insert(kind.to_string(), v);
    }
    let runs = replicate(scm, cfg, |p| Ok(vec![did_classic(p)?.estimate]))?;
    let did = SamplingSummary::of(&column(&runs, 0));
    let (att_a2, att_p, psi) = (report.oracle["ATT_A2"], report.oracle["ATT_P"], report.oracle["PSI"]);

    let mut aud = Auditor::new(scm, ocfg, cfg.sigmas);
    let consistency = |aud: &Auditor<'_>| {
        aud.consistency("consistency_for_decision", "Y1^{p=p*} = Y1, Y2^{p=p*} = Y2 and A2^{p=p*} = A2 when P = p*")
    };
    match claim {
        Claim::BiasDecomposition => {
            report.comparisons.push(Comparison::new(
                "did_classic".into(),
                "ATT_A2 - PSI".into(),
                did,
                att_a2.value - psi.value,
                att_a2.joint_se(&psi),
                cfg.sigmas,
            ));
            report.audits.push(aud.positivity()?);
            report.audits.push(aud.determinism()?);
            report.audits.push(aud.trends_under_no_decision()?);
            report.audits.push(consistency(&aud));
            report.audits.push(aud.exclusion()?);
        }
        _ => {
            report.comparisons.push(Comparison::new(
                "did_classic".into(),
                "ATT_P".into(),
                did,
                att_p.value,
                att_p.mc_se,
                cfg.sigmas,
            ));
            report.supplementary.push(Comparison::new(
                "did_classic".into(),
                "ATT_A2".into(),
                did,
                att_a2.value,
                att_a2.mc_se,
                cfg.sigmas,
            ));
            report.audits.push(aud.positivity()?);
            report.audits.push(aud.determinism()?);
            report.audits.push(aud.no_anticipation()?);
            report.audits.push(aud.trends_under_no_decision()?);
            report.audits.push(consistency(&aud));
            report.audits.push(aud.trends_under_no_implementation()?.optional());
        }
    }
    Ok(())
}

/// `(g, k)` pairs with `g ≤ τ − s`, `k ≥ g + s` and a valid base period.
pub(crate) fn admissible_pairs(tau: usize, s: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for g in 1..=tau.saturating_sub(s) {
        if g + s < 2 {
            continue;
        }
        for k in g + s..=tau {
            out.push((g, k));
        }
    }
    out
}

fn group_time(scm: &Scm, cfg: &VerifyConfig, report: &mut VerificationReport) -> Result<(), OracleError> {
    let s = scm.lag().ok_or_else(|| OracleError::InvalidQuery("model declares no implementation lag".into()))?;
    let tau = scm.panel_layout()?.n_periods;
    let pairs = admissible_pairs(tau, s);
    if pairs.is_empty() {
        return Err(OracleError::InvalidQuery(format!("no admissible (g,k) for τ={tau}, s={s}")));
    }
    let ocfg = cfg.oracle_cfg();
    let mut truths = Vec::new();
    for (i, &(g, k)) in pairs.iter().enumerate() {
        let kind = EstimandKind::AttPGt { g, k };
        let v = estimate_contrast(scm, &estimand_contrast(scm, kind)?, &ocfg.child(i as u64))?;
        report.oracle.insert(kind.to_string(), v);
        truths.push(v);
    }
    let controls = [ControlGroup::NotYetTreated, ControlGroup::NeverTreated];
    let runs = replicate(scm, cfg, |panel| {
        let mut row = Vec::with_capacity(2 * pairs.len());
        for &(g, k) in &pairs {
            for control in controls {
                row.push(group_time_att(panel, &GroupTimeQuery { g, k, s, control })?.estimate);
            }
        }
        Ok(row)
    })?;
    for (i, &(g, k)) in pairs.iter().enumerate() {
        let kind = EstimandKind::AttPGt { g, k };
        for (c, control) in controls.iter().enumerate() {
            let name = match control {
                ControlGroup::NotYetTreated => "not_yet_treated",
                _ => "never_treated",
            };
            report.comparisons.push(Comparison::new(
                format!("group_time_att(g={g},k={k},{name})"),
                kind.to_string(),
                SamplingSummary::of(&column(&runs, 2 * i + c)),
                truths[i].value,
                truths[i].mc_se,
                cfg.sigmas,
            ));
        }
        let gap: Vec<f64> = runs.iter().map(|r| r[2 * i] - r[2 * i + 1]).collect();
        report.comparisons.push(Comparison::new(
            format!("control agreement (g={g},k={k})"),
            "not_yet_treated minus never_treated = 0".into(),
            SamplingSummary::of(&gap),
            0.0,
            0.0,
            cfg.sigmas,
        ));
    }
    let mut aud = Auditor::new(scm, ocfg, cfg.sigmas);
    report.audits.push(aud.lagged_determinism()?);
    report.audits.push(aud.decision_structure()?);
    report.audits.push(aud.consistency(
        "consistency_for_decision_paths",
        "Y_k^{p-path} = Y_k when the natural decision path equals p-path",
    ));
    report.audits.push(aud.no_anticipation_group_time()?);
    report.audits.push(aud.trends_group_time()?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn claim_ids_and_names() {
        for c in [Claim::BiasDecomposition, Claim::DecisionEffect, Claim::GroupTime] {
            assert_eq!(c.id().to_string().parse::<Claim>().unwrap(), c);
            assert_eq!(c.to_string().parse::<Claim>().unwrap(), c);
        }
        assert!("4".parse::<Claim>().is_err());
    }

    #[test]
    fn admissible_pairs_small() {
        assert_eq!(admissible_pairs(4, 1), vec![(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]);
        assert_eq!(admissible_pairs(2, 1), vec![(1, 2)]);
        assert_eq!(admissible_pairs(3, 0), vec![(2, 2), (2, 3), (3, 3)]);
        assert!(admissible_pairs(2, 2).is_empty());
    }

    #[test]
    fn sampling_summary() {
        let s = SamplingSummary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.se(), s.sd / 2.0);
    }
}
