//! Ground-truth causal estimands by brute-force simulation.
//!
//! Every estimand handled here is a difference of conditional expectations
//! of single-world potential outcomes, `Σ_arm E(f_arm(V^{do(arm)}) | C)`,
//! where `C` is an event on natural (unintervened) node values. Such a
//! quantity depends only on the marginal law of each arm given `C`, never
//! on how the arms are coupled. The engine therefore:
//!
//! 1. draws natural units and keeps those satisfying `C` (rejection);
//! 2. for each kept unit and each arm, keeps every node outside the arm's
//!    mutilated-graph descendants at its natural value, forces the
//!    intervened nodes, and redraws the descendants with fresh noise;
//! 3. averages the per-unit contrast.
//!
//! Step 2 is valid as long as no redrawn node is an ancestor of (or equal
//! to) a conditioning node: the fresh noise is then independent of `C`
//! given the kept nodes. Queries that break this rule would need
//! abduction of the noise and are rejected.
//!
//! Stochastic term nodes that are not ancestors of the conditioning event
//! contribute their conditional mean given their parents instead of a
//! draw. The expectation is unchanged and the Monte Carlo error drops.

mod audit;
mod example;
mod sweep;
mod verify;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::EstimateError;
use crate::exec::{derive_seed, domain, map_indices, substream, Execution};
use crate::scm::{Intervention, Role, Scm, ScmError};

pub use audit::{AuditItem, AuditResult, AuditStatus};
pub use example::{replicate_cars_example, CheckStatus, ExampleReport, ExampleRow};
pub use sweep::{bias_sweep, SweepConfig, SweepFamily, SweepRow, SweepTable};
pub use verify::{verify_claim, Claim, Comparison, SamplingSummary, VerificationReport, VerifyConfig, VerifyStatus};

/// Attempts per unit of parallel work.
const CHUNK: usize = 16_384;
/// Chunks evaluated per round, independent of the thread count.
const CHUNKS_PER_ROUND: usize = 32;
/// Minimum attempts before the acceptance rate is judged.
const POSITIVITY_MIN_ATTEMPTS: usize = 100_000;
/// Conditioning events rarer than this are treated as positivity failures.
pub const POSITIVITY_FLOOR: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error("positivity failure: event '{event}' accepted {accepted} of {attempts} draws (below {POSITIVITY_FLOOR})")]
    Positivity { event: String, accepted: usize, attempts: usize },
    #[error("node '{node}' is redrawn by the intervention but the conditioning event depends on it")]
    ConditionsOnAffected { node: String },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("estimator failed in replication {replication}: {source}")]
    Replication { replication: usize, source: EstimateError },
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

/// Draw budget and seed for one oracle evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Accepted draws, i.e. units satisfying the conditioning event.
    pub draws: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl McConfig {
    pub fn new(draws: usize, seed: u64) -> Self {
        Self { draws, seed, exec: Execution::Parallel }
    }

    /// Same budget with a seed derived for sub-query `index`.
    pub fn child(&self, index: u64) -> Self {
        Self { seed: derive_seed(self.seed, domain::ORACLE, index), ..*self }
    }
}

/// One intervention arm and the weighted nodes it contributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub intervention: Intervention,
    pub terms: Vec<(String, f64)>,
}

impl Arm {
    pub fn new(intervention: Intervention, terms: &[(&str, f64)]) -> Self {
        Self { intervention, terms: terms.iter().map(|&(n, c)| (n.to_string(), c)).collect() }
    }
}

/// `E(Σ_arm Σ_term coef · node^{do(arm)} | condition)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    /// Natural node values the unit must have, combined with AND.
    pub condition: Vec<(String, f64)>,
    pub arms: Vec<Arm>,
}

impl Contrast {
    /// `E(node^{do(intervention)} | condition)`.
    pub fn mean(node: &str, intervention: Intervention, condition: &[(&str, f64)]) -> Self {
        Self { condition: own(condition), arms: vec![Arm::new(intervention, &[(node, 1.0)])] }
    }

    /// `E(node^{do(a)} − node^{do(b)} | condition)`.
    pub fn difference(node: &str, a: Intervention, b: Intervention, condition: &[(&str, f64)]) -> Self {
        Self { condition: own(condition), arms: vec![Arm::new(a, &[(node, 1.0)]), Arm::new(b, &[(node, -1.0)])] }
    }

    /// `E(post^{do(i)} − pre^{do(i)} | condition)`.
    pub fn trend(post: &str, pre: &str, intervention: Intervention, condition: &[(&str, f64)]) -> Self {
        Self { condition: own(condition), arms: vec![Arm::new(intervention, &[(post, 1.0), (pre, -1.0)])] }
    }

    pub fn describe_condition(&self) -> String {
        describe(&self.condition)
    }
}

fn own(condition: &[(&str, f64)]) -> Vec<(String, f64)> {
    condition.iter().map(|&(n, v)| (n.to_string(), v)).collect()
}

fn describe(condition: &[(String, f64)]) -> String {
    if condition.is_empty() {
        return "always".into();
    }
    condition.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(", ")
}

/// Monte Carlo value of a [`Contrast`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub mc_se: f64,
    pub n_draws: usize,
    /// Natural draws generated to obtain `n_draws` accepted ones.
    pub attempts: usize,
}

impl OracleValue {
    /// Standard error of `self − other` for independent evaluations.
    pub fn joint_se(&self, other: &OracleValue) -> f64 {
        self.mc_se.hypot(other.mc_se)
    }
}

struct CompiledArm {
    forced: Vec<Option<f64>>,
    affected: Vec<bool>,
    natural: bool,
    /// `(node, coef, use conditional mean)`.
    terms: Vec<(usize, f64, bool)>,
}

struct CompiledContrast {
    condition: Vec<(usize, f64)>,
    arms: Vec<CompiledArm>,
}

fn compile(scm: &Scm, contrast: &Contrast) -> Result<CompiledContrast, OracleError> {
    if contrast.arms.is_empty() {
        return Err(OracleError::InvalidQuery("contrast has no arms".into()));
    }
    let condition =
        contrast.condition.iter().map(|(n, v)| Ok((scm.node_index(n)?, *v))).collect::<Result<Vec<_>, ScmError>>()?;
    let cond_nodes: Vec<usize> = condition.iter().map(|c| c.0).collect();
    let upstream = scm.ancestors_or_self(&cond_nodes);
    let arms = contrast
        .arms
        .iter()
        .map(|arm| {
            let forced = scm.compile_intervention(&arm.intervention)?;
            let affected = scm.affected_by(&forced);
            if let Some(node) = (0..scm.n_nodes()).find(|&i| affected[i] && upstream[i]) {
                return Err(OracleError::ConditionsOnAffected { node: scm.node_name(node).into() });
            }
            let terms = arm
                .terms
                .iter()
                .map(|(n, c)| {
                    let idx = scm.node_index(n)?;
                    let smooth = forced[idx].is_none() && scm.is_stochastic(idx) && !upstream[idx];
                    Ok((idx, *c, smooth))
                })
                .collect::<Result<Vec<_>, ScmError>>()?;
            Ok(CompiledArm { natural: arm.intervention.is_empty(), forced, affected, terms })
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    Ok(CompiledContrast { condition, arms })
}

struct ChunkOut {
    values: Vec<f64>,
    /// Attempt index (within the chunk) of each accepted draw.
    positions: Vec<u32>,
}

fn run_chunk(scm: &Scm, cc: &CompiledContrast, seed: u64, chunk: usize) -> ChunkOut {
    let n = scm.n_nodes();
    let mut rng = substream(seed, domain::ORACLE, chunk as u64);
    let no_force = vec![None; n];
    let mut natural = vec![0.0; n];
    let mut arm_vals = vec![0.0; n];
    let mut out = ChunkOut { values: Vec::new(), positions: Vec::new() };
    // Nodes after the last conditioning node are drawn only for kept units.
    let split = cc.condition.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    for attempt in 0..CHUNK {
        scm.draw_nodes(&no_force, 0..split, &mut rng, &mut natural);
        if !cc.condition.iter().all(|&(i, v)| natural[i] == v) {
            continue;
        }
        scm.draw_nodes(&no_force, split..n, &mut rng, &mut natural);
        let mut d = 0.0;
        for arm in &cc.arms {
            let vals: &[f64] = if arm.natural {
                &natural
            } else {
                scm.redraw_unit(&natural, &arm.forced, &arm.affected, &mut rng, &mut arm_vals);
                &arm_vals
            };
            for &(idx, coef, smooth) in &arm.terms {
                let v = if smooth { scm.node_mean(idx, vals) } else { vals[idx] };
                d += coef * v;
            }
        }
        out.values.push(d);
        out.positions.push(attempt as u32);
    }
    out
}

/// Evaluates a contrast with `cfg.draws` accepted draws.
///
/// Draws are generated in fixed chunks with their own substreams and
/// concatenated in chunk order, so the result does not depend on the
/// execution mode or thread count.
pub fn estimate_contrast(scm: &Scm, contrast: &Contrast, cfg: &McConfig) -> Result<OracleValue, OracleError> {
    if cfg.draws < 2 {
        return Err(OracleError::InvalidQuery(format!("need at least 2 draws, got {}", cfg.draws)));
    }
    let cc = compile(scm, contrast)?;
    let mut values: Vec<f64> = Vec::with_capacity(cfg.draws);
    let mut attempts = 0usize;
    let mut next_chunk = 0usize;
    while values.len() < cfg.draws {
        let round = map_indices(cfg.exec, CHUNKS_PER_ROUND, |c| run_chunk(scm, &cc, cfg.seed, next_chunk + c));
        next_chunk += CHUNKS_PER_ROUND;
        for chunk in round {
            let need = cfg.draws - values.len();
            if chunk.values.len() >= need {
                attempts += chunk.positions[need - 1] as usize + 1;
                values.extend_from_slice(&chunk.values[..need]);
                break;
            }
            attempts += CHUNK;
            values.extend(chunk.values);
        }
        let rate = values.len() as f64 / attempts as f64;
        if attempts >= POSITIVITY_MIN_ATTEMPTS && rate < POSITIVITY_FLOOR {
            return Err(OracleError::Positivity {
                event: contrast.describe_condition(),
                accepted: values.len(),
                attempts,
            });
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(OracleValue { value: mean, mc_se: (var / n).sqrt(), n_draws: values.len(), attempts })
}

/// Named causal estimands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum EstimandKind {
    /// `E(Y2^{a2=1} − Y2^{a2=0} | A2=1)`.
    AttA2,
    /// `E(Y2^{p=1} − Y2^{p=0} | P=1)`.
    AttP,
    /// Anticipation effect `E(Y1^{p=1} − Y1^{p=0} | P=1)`.
    Psi,
    /// Effect at `k` of first deciding at `g` versus never deciding, among
    /// units whose decision path first switches at `g`.
    AttPGt { g: usize, k: usize },
    /// Effect at `k` of starting treatment at `g` versus never treating,
    /// among units whose treatment path first switches at `g`.
    AttAGt { g: usize, k: usize },
}

impl fmt::Display for EstimandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimandKind::AttA2 => f.write_str("ATT_A2"),
            EstimandKind::AttP => f.write_str("ATT_P"),
            EstimandKind::Psi => f.write_str("PSI"),
            EstimandKind::AttPGt { g, k } => write!(f, "ATT_P_GT({g},{k})"),
            EstimandKind::AttAGt { g, k } => write!(f, "ATT_A_GT({g},{k})"),
        }
    }
}

impl From<EstimandKind> for String {
    fn from(k: EstimandKind) -> Self {
        k.to_string()
    }
}

impl TryFrom<String> for EstimandKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl std::str::FromStr for EstimandKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        match norm.as_str() {
            "ATT_A2" => return Ok(Self::AttA2),
            "ATT_P" => return Ok(Self::AttP),
            "PSI" => return Ok(Self::Psi),
            _ => {}
        }
        let parse_gk = |prefix: &str| -> Option<(usize, usize)> {
            let inner = norm.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
            let (g, k) = inner.split_once(',')?;
            Some((g.trim().parse().ok()?, k.trim().parse().ok()?))
        };
        if let Some((g, k)) = parse_gk("ATT_P_GT") {
            return Ok(Self::AttPGt { g, k });
        }
        if let Some((g, k)) = parse_gk("ATT_A_GT") {
            return Ok(Self::AttAGt { g, k });
        }
        Err(format!("unknown estimand '{s}' (expected ATT_A2, ATT_P, PSI, ATT_P_GT(g,k) or ATT_A_GT(g,k))"))
    }
}

/// An oracle estimate of a named estimand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimand {
    pub kind: EstimandKind,
    pub value: f64,
    pub mc_se: f64,
    pub n_draws: usize,
    pub attempts: usize,
    pub condition: String,
}

/// Node names of a two-period model: `(P, A2, Y1, Y2)`.
pub(crate) struct TwoPeriodNodes {
    pub p: String,
    pub a2: String,
    pub y1: String,
    pub y2: String,
}

pub(crate) fn two_period_nodes(scm: &Scm) -> Result<TwoPeriodNodes, OracleError> {
    let layout = scm.panel_layout()?;
    if layout.n_periods != 2 {
        return Err(OracleError::InvalidQuery(format!("needs a two-period model, got {} periods", layout.n_periods)));
    }
    let p = layout
        .decision_node_at(1)
        .ok_or_else(|| OracleError::InvalidQuery("needs a decision node at period 1".into()))?;
    let name = |i: usize| scm.node_name(i).to_string();
    Ok(TwoPeriodNodes {
        p: name(p),
        a2: name(layout.treatment[1]),
        y1: name(layout.outcome[0]),
        y2: name(layout.outcome[1]),
    })
}

/// `(node, value)` pairs setting a role's path to zeros before `start` and
/// ones from `start` on (`start > τ` gives the all-zero path).
pub(crate) fn path_assignment(scm: &Scm, role: Role, start: usize) -> Result<Vec<(String, f64)>, OracleError> {
    let layout = scm.panel_layout()?;
    let nodes: Vec<(usize, usize)> = match role {
        Role::Decision => layout.decision.clone(),
        Role::Treatment => layout.treatment.iter().enumerate().map(|(i, &n)| (i + 1, n)).collect(),
        _ => return Err(OracleError::InvalidQuery(format!("no path for role {role:?}"))),
    };
    if nodes.is_empty() {
        return Err(OracleError::InvalidQuery(format!("model has no {role:?} nodes")));
    }
    Ok(nodes.into_iter().map(|(t, n)| (scm.node_name(n).to_string(), f64::from(u8::from(t >= start)))).collect())
}

fn gk_contrast(scm: &Scm, role: Role, g: usize, k: usize) -> Result<Contrast, OracleError> {
    let layout = scm.panel_layout()?;
    let tau = layout.n_periods;
    if g < 1 || g > tau || k < 1 || k > tau {
        return Err(OracleError::InvalidQuery(format!("need 1 ≤ g, k ≤ τ = {tau}, got g={g}, k={k}")));
    }
    if role == Role::Decision {
        let s = scm.lag().ok_or_else(|| OracleError::InvalidQuery("model declares no implementation lag".into()))?;
        if g + s > tau {
            return Err(OracleError::InvalidQuery(format!("need g ≤ τ − s = {}, got g={g}", tau - s.min(tau))));
        }
    }
    let on = path_assignment(scm, role, g)?;
    let off = path_assignment(scm, role, usize::MAX)?;
    let y = scm.node_name(layout.outcome[k - 1]).to_string();
    Ok(Contrast {
        condition: on.clone(),
        arms: vec![
            Arm { intervention: on.into_iter().collect(), terms: vec![(y.clone(), 1.0)] },
            Arm { intervention: off.into_iter().collect(), terms: vec![(y, -1.0)] },
        ],
    })
}

/// The contrast defining `kind` on `scm`.
pub fn estimand_contrast(scm: &Scm, kind: EstimandKind) -> Result<Contrast, OracleError> {
    let one = |n: &str, v: f64| Intervention::none().set(n, v);
    match kind {
        EstimandKind::AttA2 => {
            let t = two_period_nodes(scm)?;
            Ok(Contrast::difference(&t.y2, one(&t.a2, 1.0), one(&t.a2, 0.0), &[(&t.a2, 1.0)]))
        }
        EstimandKind::AttP => {
            let t = two_period_nodes(scm)?;
            Ok(Contrast::difference(&t.y2, one(&t.p, 1.0), one(&t.p, 0.0), &[(&t.p, 1.0)]))
        }
        EstimandKind::Psi => {
            let t = two_period_nodes(scm)?;
            Ok(Contrast::difference(&t.y1, one(&t.p, 1.0), one(&t.p, 0.0), &[(&t.p, 1.0)]))
        }
        EstimandKind::AttPGt { g, k } => gk_contrast(scm, Role::Decision, g, k),
        EstimandKind::AttAGt { g, k } => gk_contrast(scm, Role::Treatment, g, k),
    }
}

/// Oracle value of a named estimand.
pub fn oracle_estimand(scm: &Scm, kind: EstimandKind, cfg: &McConfig) -> Result<OracleEstimand, OracleError> {
    let contrast = estimand_contrast(scm, kind)?;
    let v = estimate_contrast(scm, &contrast, cfg)?;
    Ok(OracleEstimand {
        kind,
        value: v.value,
        mc_se: v.mc_se,
        n_draws: v.n_draws,
        attempts: v.attempts,
        condition: contrast.describe_condition(),
    })
}
