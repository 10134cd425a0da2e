//! Anticipation-bias sweeps.
//!
//! For each anticipation coefficient `α` the table holds the oracle bias
//! term `ψ(α)`, the oracle effect the estimator is aimed at, the mean of the
//! estimator over replications, and the residual `did − att + ψ`. The
//! residual is zero in expectation whenever the decomposition applies.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::verify::{admissible_pairs, SamplingSummary};
use super::{estimand_contrast, estimate_contrast, EstimandKind, McConfig, OracleError};
use crate::estimators::{did_classic, group_time_att, ControlGroup, EstimateError, GroupTimeQuery};
use crate::exec::{derive_seed, domain, map_indices, Execution};
use crate::scm::{
    builtin_staggered_dgp, sample_observational, two_period_anticipation_dgp, SampleOptions, Scm, StaggeredParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SweepFamily {
    /// `Y1 ~ Poisson(10 + 5U + αP)`, `Y2 ~ Poisson(12 + 5U − 3A2)`.
    TwoPeriod,
    /// The built-in staggered model with `anticipation = α`.
    Staggered { tau: usize, s: usize, params: StaggeredParams },
}

impl SweepFamily {
    fn model(&self, alpha: f64) -> Result<Scm, OracleError> {
        Ok(match self {
            SweepFamily::TwoPeriod => two_period_anticipation_dgp(alpha)?,
            SweepFamily::Staggered { tau, s, params } => {
                builtin_staggered_dgp(*tau, *s, &StaggeredParams { anticipation: alpha, ..params.clone() })?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub n_units: usize,
    pub replications: usize,
    pub oracle_draws: usize,
    pub seed: u64,
    pub sigmas: f64,
    #[serde(skip)]
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub g: Option<usize>,
    pub k: Option<usize>,
    pub control: Option<String>,
    pub psi: f64,
    pub psi_se: f64,
    pub att: f64,
    pub att_se: f64,
    pub did_mean: f64,
    pub did_sd: f64,
    pub replications: usize,
    pub residual: f64,
    pub joint_sigma: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub family: SweepFamily,
    pub settings: SweepConfig,
    pub rows: Vec<SweepRow>,
    /// Largest `|residual| / joint_sigma` over the rows.
    pub max_residual_sigmas: f64,
    pub all_within: bool,
}

impl SweepTable {
    /// One CSV record per row, with a header.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(sink);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn control_name(c: ControlGroup) -> String {
    match c {
        ControlGroup::NotYetTreated => "not_yet_treated",
        ControlGroup::NeverTreated => "never_treated",
        ControlGroup::NotApplicable => "n/a",
    }
    .into()
}

fn row(
    alpha: f64,
    gk: Option<(usize, usize, ControlGroup)>,
    psi: super::OracleValue,
    att: super::OracleValue,
    did: SamplingSummary,
    sigmas: f64,
) -> SweepRow {
    let residual = did.mean - att.value + psi.value;
    let joint_sigma = (did.se().powi(2) + att.mc_se.powi(2) + psi.mc_se.powi(2)).sqrt();
    SweepRow {
        alpha,
        g: gk.map(|x| x.0),
        k: gk.map(|x| x.1),
        control: gk.map(|x| control_name(x.2)),
        psi: psi.value,
        psi_se: psi.mc_se,
        att: att.value,
        att_se: att.mc_se,
        did_mean: did.mean,
        did_sd: did.sd,
        replications: did.replications,
        residual,
        joint_sigma,
        within: residual.abs() <= sigmas * joint_sigma + 1e-12,
    }
}

/// Runs the sweep over `cfg.alphas`.
pub fn bias_sweep(family: &SweepFamily, cfg: &SweepConfig) -> Result<SweepTable, OracleError> {
    if cfg.alphas.iter().any(|a| !a.is_finite()) || cfg.alphas.is_empty() {
        return Err(OracleError::InvalidQuery("anticipation grid must be non-empty and finite".into()));
    }
    if cfg.replications < 2 || cfg.n_units < 2 {
        return Err(OracleError::InvalidQuery("replications and n_units must each be at least 2".into()));
    }
    let mut rows = Vec::new();
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        let scm = family.model(alpha)?;
        let alpha_seed = derive_seed(cfg.seed, domain::REPLICATION, ai as u64);
        let ocfg =
            McConfig { draws: cfg.oracle_draws, seed: derive_seed(alpha_seed, domain::ORACLE, 0), exec: cfg.exec };
        let oracle =
            |i: u64, kind: EstimandKind| estimate_contrast(&scm, &estimand_contrast(&scm, kind)?, &ocfg.child(i));
        let opts = SampleOptions { retain_latent: false, exec: Execution::Sequential };
        let replicate = |f: &(dyn Fn(&crate::panel::PanelDataset) -> Result<Vec<f64>, EstimateError> + Sync)| {
            map_indices(cfg.exec, cfg.replications, |r| -> Result<Vec<f64>, OracleError> {
                let panel =
                    sample_observational(&scm, cfg.n_units, derive_seed(alpha_seed, domain::SAMPLE, r as u64), &opts)?;
                f(&panel).map_err(|source| OracleError::Replication { replication: r, source })
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
        };
        match family {
            SweepFamily::TwoPeriod => {
                let psi = oracle(0, EstimandKind::Psi)?;
                let att = oracle(1, EstimandKind::AttA2)?;
                let runs = replicate(&|p| Ok(vec![did_classic(p)?.estimate]))?;
                let did = SamplingSummary::of(&runs.iter().map(|r| r[0]).collect::<Vec<_>>());
                rows.push(row(alpha, None, psi, att, did, cfg.sigmas));
            }
            SweepFamily::Staggered { tau, s, .. } => {
                let (tau, s) = (*tau, *s);
                let pairs = admissible_pairs(tau, s);
                let controls = [ControlGroup::NotYetTreated, ControlGroup::NeverTreated];
                let runs = replicate(&|p| {
                    let mut out = Vec::new();
                    for &(g, k) in &pairs {
                        for control in controls {
                            out.push(group_time_att(p, &GroupTimeQuery { g, k, s, control })?.estimate);
                        }
                    }
                    Ok(out)
                })?;
                for (i, &(g, k)) in pairs.iter().enumerate() {
                    // The bias term is the decision effect at the base period.
                    let psi = oracle(2 * i as u64, EstimandKind::AttPGt { g, k: g + s - 1 })?;
                    let att = oracle(2 * i as u64 + 1, EstimandKind::AttPGt { g, k })?;
                    for (c, &control) in controls.iter().enumerate() {
                        let did = SamplingSummary::of(&runs.iter().map(|r| r[2 * i + c]).collect::<Vec<_>>());
                        rows.push(row(alpha, Some((g, k, control)), psi, att, did, cfg.sigmas));
                    }
                }
            }
        }
    }
    let max_residual_sigmas = rows
        .iter()
        .map(|r| if r.joint_sigma > 0.0 { r.residual.abs() / r.joint_sigma } else { 0.0 })
        .fold(0.0, f64::max);
    let all_within = rows.iter().all(|r| r.within);
    Ok(SweepTable { family: family.clone(), settings: cfg.clone(), rows, max_residual_sigmas, all_within })
}
