//! Difference-in-differences functionals on observed panels.
//!
//! Both estimators are differences of unweighted cell means:
//!
//! * [`did_classic`]: `{Ȳ₂ − Ȳ₁ | A₂=1} − {Ȳ₂ − Ȳ₁ | A₂=0}` on a two-period
//!   panel. The same number identifies the implementation effect `ATT_A2`
//!   under classic parallel trends, or the decision effect `ATT_P` under
//!   no anticipation of the decision plus parallel trends under `do(P=0)`.
//!   Data cannot tell these readings apart, so the caller states which one
//!   is asserted and the report records it.
//! * [`group_time_att`]: the cohort-`g` decision effect at period `k` with
//!   either not-yet-decided or never-decided controls, using `g + s − 1` as
//!   the base period.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{derive_seed, domain, map_indices, substream, Execution};
use crate::panel::{PanelDataset, PanelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("two-period estimator needs n_periods = 2, got {0}")]
    WrongPeriods(usize),
    #[error("positivity violation: cell '{0}' is empty")]
    EmptyCell(String),
    #[error("unit {0} is treated in period 1")]
    TreatedAtBaseline(String),
    #[error("invalid index: {0}")]
    Index(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bootstrap needs at least 100 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("bootstrap refuses cell '{0}' with a single unit")]
    SingletonCell(String),
    #[error("bootstrap degenerate: {degenerate} of {attempts} resamples had an empty cell")]
    Degenerate { degenerate: usize, attempts: usize },
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// What the reported number is claimed to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Estimand {
    AttA2,
    AttP,
    AttPGt { g: usize, k: usize },
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimand::AttA2 => f.write_str("ATT_A2"),
            Estimand::AttP => f.write_str("ATT_P"),
            Estimand::AttPGt { g, k } => write!(f, "ATT_P_GT({g},{k})"),
        }
    }
}

impl From<Estimand> for String {
    fn from(e: Estimand) -> Self {
        e.to_string()
    }
}

impl TryFrom<String> for Estimand {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        match s.as_str() {
            "ATT_A2" => Ok(Estimand::AttA2),
            "ATT_P" => Ok(Estimand::AttP),
            other => {
                let inner = other
                    .strip_prefix("ATT_P_GT(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| format!("unknown estimand '{other}'"))?;
                let (g, k) = inner.split_once(',').ok_or_else(|| format!("unknown estimand '{other}'"))?;
                let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| e.to_string());
                Ok(Estimand::AttPGt { g: parse(g)?, k: parse(k)? })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlGroup {
    #[serde(rename = "not_yet_treated")]
    NotYetTreated,
    #[serde(rename = "never_treated")]
    NeverTreated,
    #[serde(rename = "n/a")]
    NotApplicable,
}

/// Assumption set the caller asserts for the two-period functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reading {
    /// Effect of implementing at period 2: positivity, consistency and
    /// parallel trends under `do(A2=0)`.
    #[default]
    Implementation,
    /// Effect of the decision: positivity, decision determinism, no
    /// anticipation of the decision, parallel trends under `do(P=0)` and
    /// consistency for decisions.
    Decision,
}

impl Reading {
    pub fn assumption_set(self) -> &'static str {
        match self {
            Reading::Implementation => "positivity; consistency; parallel trends under do(A2=0)",
            Reading::Decision => {
                "positivity; A2 = P; no anticipation of the decision; parallel trends under do(P=0); consistency for P"
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Resamples discarded because a required cell was empty.
    pub redraws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimand: Estimand,
    pub estimate: f64,
    pub functional: String,
    pub control_group: ControlGroup,
    pub assumption_set: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag: Option<usize>,
    /// Units in each conditioning cell.
    pub cells: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_ci: Option<BootstrapCi>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl EstimateReport {
    fn flag_small_cells(mut self) -> Self {
        for (cell, &n) in &self.cells {
            if n == 1 {
                self.diagnostics.push(format!("cell '{cell}' has a single unit"));
            }
        }
        self
    }
}

/// Mean of `Y_k` over `units`, summed in unit order.
fn cell_mean(panel: &PanelDataset, units: &[usize], k: usize) -> f64 {
    units.iter().map(|&i| panel.outcome(i, k)).sum::<f64>() / units.len() as f64
}

fn require_nonempty(name: &str, units: &[usize]) -> Result<(), EstimateError> {
    if units.is_empty() {
        Err(EstimateError::EmptyCell(name.into()))
    } else {
        Ok(())
    }
}

/// Two-group trend contrast: `{Ȳ_post − Ȳ_pre}_treated − {Ȳ_post − Ȳ_pre}_control`.
pub(crate) fn trend_contrast(
    panel: &PanelDataset,
    treated: &[usize],
    control: &[usize],
    post: usize,
    pre: usize,
) -> f64 {
    (cell_mean(panel, treated, post) - cell_mean(panel, treated, pre))
        - (cell_mean(panel, control, post) - cell_mean(panel, control, pre))
}

/// Classic two-period functional, reported as `ATT_A2`.
pub fn did_classic(panel: &PanelDataset) -> Result<EstimateReport, EstimateError> {
    did_classic_as(panel, Reading::Implementation)
}

/// Classic two-period functional under the stated reading.
pub fn did_classic_as(panel: &PanelDataset, reading: Reading) -> Result<EstimateReport, EstimateError> {
    if panel.n_periods() != 2 {
        return Err(EstimateError::WrongPeriods(panel.n_periods()));
    }
    if let Some(i) = (0..panel.n_units()).find(|&i| panel.treatment(i, 1) == 1) {
        return Err(EstimateError::TreatedAtBaseline(panel.unit_ids()[i].clone()));
    }
    let (treated, control): (Vec<usize>, Vec<usize>) = (0..panel.n_units()).partition(|&i| panel.treatment(i, 2) == 1);
    require_nonempty("A2=1", &treated)?;
    require_nonempty("A2=0", &control)?;
    let estimate = trend_contrast(panel, &treated, &control, 2, 1);
    let (estimand, functional) = match reading {
        Reading::Implementation => (Estimand::AttA2, "{E(Y2|A2=1) - E(Y1|A2=1)} - {E(Y2|A2=0) - E(Y1|A2=0)}"),
        Reading::Decision => (Estimand::AttP, "{E(Y2|A2=1) - E(Y1|A2=1)} - {E(Y2|A2=0) - E(Y1|A2=0)}"),
    };
    Ok(EstimateReport {
        estimand,
        estimate,
        functional: functional.into(),
        control_group: ControlGroup::NotApplicable,
        assumption_set: reading.assumption_set().into(),
        lag: panel.lag(),
        cells: BTreeMap::from([("A2=1".to_string(), treated.len()), ("A2=0".to_string(), control.len())]),
        bootstrap_ci: None,
        diagnostics: Vec::new(),
    }
    .flag_small_cells())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTimeQuery {
    /// First decision time of the cohort.
    pub g: usize,
    /// Outcome period.
    pub k: usize,
    /// Decision-to-implementation lag.
    pub s: usize,
    pub control: ControlGroup,
}

impl GroupTimeQuery {
    /// Last pre-implementation period of the cohort.
    pub fn base_period(&self) -> usize {
        self.g + self.s - 1
    }

    pub fn check(&self, n_periods: usize) -> Result<(), EstimateError> {
        let Self { g, k, s, control } = *self;
        let tau = n_periods;
        let err = |m: String| Err(EstimateError::Index(m));
        if control == ControlGroup::NotApplicable {
            return Err(EstimateError::InvalidArgument("group-time estimation needs a control group".into()));
        }
        if g < 1 || g + s > tau {
            return err(format!("need 1 ≤ g ≤ τ − s, got g={g}, s={s}, τ={tau}"));
        }
        if g + s < 2 {
            return err(format!("g + s − 1 must be a valid base period, got g={g}, s={s}"));
        }
        if k < g + s || k > tau {
            return err(format!("need g + s ≤ k ≤ τ, got g={g}, s={s}, k={k}, τ={tau}"));
        }
        Ok(())
    }
}

/// Units first implementing at `g + s`: `A_{g+s} = 1` and `Ā_{g+s−1} = 0`.
pub fn treated_cell(panel: &PanelDataset, g: usize, s: usize) -> Vec<usize> {
    let start = g + s;
    (0..panel.n_units())
        .filter(|&i| {
            let row = panel.treatment_row(i);
            row[start - 1] == 1 && row[..start - 1].iter().all(|&a| a == 0)
        })
        .collect()
}

/// Units with `Ā_m = 0` through period `m`.
pub fn untreated_through(panel: &PanelDataset, m: usize) -> Vec<usize> {
    (0..panel.n_units()).filter(|&i| panel.treatment_row(i)[..m].iter().all(|&a| a == 0)).collect()
}

/// Units with `P̄_m = 0` through period `m`; empty when decisions are unobserved.
pub fn undecided_through(panel: &PanelDataset, m: usize) -> Vec<usize> {
    (0..panel.n_units())
        .filter(|&i| panel.decision_row(i).is_some_and(|row| row[..m].iter().all(|&p| p == 0)))
        .collect()
}

/// Control units for a query.
///
/// Not-yet-decided controls are `Ā_{k+s} = 0`. Treatment is recorded only
/// through τ, and for `k + s > τ` the admissible decision paths make
/// `Ā_{k+s} = 0` equivalent to `Ā_τ = 0`, so the cell uses
/// `Ā_{min(k+s, τ)} = 0`. When decisions are observed the cell is `P̄_k = 0`
/// directly. Never-decided controls are `Ā_τ = 0`.
pub fn control_cell(panel: &PanelDataset, query: &GroupTimeQuery) -> Vec<usize> {
    let tau = panel.n_periods();
    match query.control {
        ControlGroup::NotYetTreated if panel.has_decision() => undecided_through(panel, query.k),
        ControlGroup::NotYetTreated => untreated_through(panel, (query.k + query.s).min(tau)),
        _ => untreated_through(panel, tau),
    }
}

/// Cohort-`g` decision effect at period `k`.
pub fn group_time_att(panel: &PanelDataset, query: &GroupTimeQuery) -> Result<EstimateReport, EstimateError> {
    query.check(panel.n_periods())?;
    let GroupTimeQuery { g, k, s, control } = *query;
    let base = query.base_period();
    let treated = treated_cell(panel, g, s);
    let controls = control_cell(panel, query);
    let treated_name = format!("A{}=1,A[1..{}]=0", g + s, base);
    let control_name = match control {
        ControlGroup::NotYetTreated if panel.has_decision() => format!("P[1..{k}]=0"),
        ControlGroup::NotYetTreated => format!("A[1..{}]=0", (k + s).min(panel.n_periods())),
        _ => format!("A[1..{}]=0", panel.n_periods()),
    };
    require_nonempty(&treated_name, &treated)?;
    require_nonempty(&control_name, &controls)?;
    let estimate = trend_contrast(panel, &treated, &controls, k, base);
    let functional = format!(
        "{{E(Y{k}|{treated_name}) - E(Y{base}|{treated_name})}} - {{E(Y{k}|{control_name}) - E(Y{base}|{control_name})}}"
    );
    Ok(EstimateReport {
        estimand: Estimand::AttPGt { g, k },
        estimate,
        functional,
        control_group: control,
        assumption_set: "A_k = P_{k-s}; staggered decision paths; consistency for decision paths; no anticipation of the decision; parallel trends under never deciding".into(),
        lag: Some(s),
        cells: BTreeMap::from([(treated_name, treated.len()), (control_name, controls.len())]),
        bootstrap_ci: None,
        diagnostics: Vec::new(),
    }
    .flag_small_cells())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub level: f64,
    pub replicates: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { level: 0.95, replicates: 999, seed: 0, exec: Execution::Parallel }
    }
}

/// Attempts per replicate before the resampling is declared degenerate.
const MAX_ATTEMPTS_PER_REPLICATE: usize = 1000;

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval from unit-level resampling with replacement.
///
/// Replicate `r` draws from its own substream, so the interval does not
/// depend on thread scheduling. Resamples in which the estimator fails (an
/// empty cell) are redrawn and counted.
pub fn bootstrap_ci<F>(panel: &PanelDataset, estimator: F, cfg: &BootstrapConfig) -> Result<BootstrapCi, EstimateError>
where
    F: Fn(&PanelDataset) -> Result<EstimateReport, EstimateError> + Sync + Send,
{
    if cfg.replicates < 100 {
        return Err(EstimateError::TooFewReplicates(cfg.replicates));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(EstimateError::InvalidArgument(format!("level must be in (0, 1), got {}", cfg.level)));
    }
    let full = estimator(panel)?;
    if let Some((cell, _)) = full.cells.iter().find(|(_, &n)| n < 2) {
        return Err(EstimateError::SingletonCell(cell.clone()));
    }
    let n = panel.n_units();
    let draws = map_indices(cfg.exec, cfg.replicates, |r| {
        let rep_seed = derive_seed(cfg.seed, domain::BOOTSTRAP, r as u64);
        for attempt in 0..MAX_ATTEMPTS_PER_REPLICATE {
            let mut rng = substream(rep_seed, domain::BOOTSTRAP, attempt as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            if let Ok(rep) = estimator(&panel.select_units(&idx)) {
                return (Some(rep.estimate), attempt);
            }
        }
        (None, MAX_ATTEMPTS_PER_REPLICATE)
    });
    let redraws: usize = draws.iter().map(|d| d.1).sum();
    let attempts = redraws + draws.iter().filter(|d| d.0.is_some()).count();
    if draws.iter().any(|d| d.0.is_none()) || 2 * redraws > attempts {
        return Err(EstimateError::Degenerate { degenerate: redraws, attempts });
    }
    let mut est: Vec<f64> = draws.into_iter().filter_map(|d| d.0).collect();
    est.sort_by(f64::total_cmp);
    let alpha = (1.0 - cfg.level) / 2.0;
    Ok(BootstrapCi {
        lo: quantile_sorted(&est, alpha),
        hi: quantile_sorted(&est, 1.0 - alpha),
        level: cfg.level,
        replicates: cfg.replicates,
        seed: cfg.seed,
        redraws,
    })
}
