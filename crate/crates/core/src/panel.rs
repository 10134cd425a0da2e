//! Balanced unit × period panels of treatment, outcome and (optionally)
//! policy-decision indicators.
//!
//! Periods are 1-based throughout the public API: `outcome(i, 1)` is the
//! first measurement of unit `i`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PanelError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("missing required column '{0}'")]
    MissingColumn(String),
    #[error("empty panel: no data rows")]
    Empty,
    #[error("missing {column} value for unit {unit} at time {time}")]
    MissingCell { unit: String, time: usize, column: String },
    #[error("non-binary {column} value '{value}' for unit {unit} at time {time}")]
    NonBinary { unit: String, time: usize, column: String, value: String },
    #[error("invalid {column} value '{value}' for unit {unit}")]
    InvalidValue { unit: String, column: String, value: String },
    #[error("duplicate row for unit {unit} at time {time}")]
    Duplicate { unit: String, time: usize },
    #[error("ragged panel: unit {unit} {detail}")]
    Ragged { unit: String, detail: String },
    #[error("decision column is only partially observed ({observed} of {total} cells)")]
    PartialDecision { observed: usize, total: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-monotone treatment path for unit {unit}: treatment reverts from 1 to 0")]
    NonMonotone { unit: String },
    #[error(
        "unit {unit} is first treated at time {first_treated}, which precedes any admissible decision time for lag {lag}"
    )]
    TreatedBeforeDecision { unit: String, first_treated: usize, lag: usize },
}

/// Column names used when reading and writing long-format panels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub unit: String,
    pub time: String,
    pub treatment: String,
    pub outcome: String,
    pub decision: String,
    /// Decision-to-implementation lag attached to the loaded panel.
    pub lag: Option<usize>,
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            time: "time".into(),
            treatment: "a".into(),
            outcome: "y".into(),
            decision: "p".into(),
            lag: None,
        }
    }
}

/// A named per-unit column that is not part of the observed panel, such as
/// an exogenous node retained from simulation for oracle conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentColumn {
    pub name: String,
    pub values: Vec<f64>,
}

/// Dense rectangular panel. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    unit_ids: Vec<String>,
    n_periods: usize,
    outcome: Vec<f64>,
    treatment: Vec<u8>,
    decision: Option<Vec<u8>>,
    lag: Option<usize>,
    latent: Vec<LatentColumn>,
}

impl PanelDataset {
    /// Builds a panel from unit-major (`unit * n_periods + (k - 1)`) arrays.
    ///
    /// Only the shape is checked here (lengths, binary indicators, finite
    /// outcomes). Path restrictions are checked by [`infer_groups`] and
    /// [`audit_assumptions`], since violating them is a diagnostic rather
    /// than a malformed dataset.
    pub fn new(
        unit_ids: Vec<String>,
        n_periods: usize,
        outcome: Vec<f64>,
        treatment: Vec<u8>,
        decision: Option<Vec<u8>>,
        lag: Option<usize>,
    ) -> Result<Self, PanelError> {
        if n_periods == 0 {
            return Err(PanelError::Shape("n_periods must be positive".into()));
        }
        let cells = unit_ids.len() * n_periods;
        if outcome.len() != cells || treatment.len() != cells {
            return Err(PanelError::Shape(format!(
                "expected {cells} cells, got {} outcomes and {} treatments",
                outcome.len(),
                treatment.len()
            )));
        }
        if let Some(d) = &decision {
            if d.len() != cells {
                return Err(PanelError::Shape(format!("expected {cells} decision cells, got {}", d.len())));
            }
        }
        for (idx, &y) in outcome.iter().enumerate() {
            if !y.is_finite() {
                return Err(PanelError::InvalidValue {
                    unit: unit_ids[idx / n_periods].clone(),
                    column: "outcome".into(),
                    value: y.to_string(),
                });
            }
        }
        let binary = |col: &[u8], name: &str| -> Result<(), PanelError> {
            match col.iter().position(|&v| v > 1) {
                Some(idx) => Err(PanelError::NonBinary {
                    unit: unit_ids[idx / n_periods].clone(),
                    time: idx % n_periods + 1,
                    column: name.into(),
                    value: col[idx].to_string(),
                }),
                None => Ok(()),
            }
        };
        binary(&treatment, "treatment")?;
        if let Some(d) = &decision {
            binary(d, "decision")?;
        }
        Ok(Self { unit_ids, n_periods, outcome, treatment, decision, lag, latent: Vec::new() })
    }

    /// Attaches latent per-unit columns.
    pub fn with_latent(mut self, latent: Vec<LatentColumn>) -> Result<Self, PanelError> {
        for col in &latent {
            if col.values.len() != self.n_units() {
                return Err(PanelError::Shape(format!(
                    "latent column '{}' has {} values for {} units",
                    col.name,
                    col.values.len(),
                    self.n_units()
                )));
            }
        }
        self.latent = latent;
        Ok(self)
    }

    pub fn with_lag(mut self, lag: Option<usize>) -> Self {
        self.lag = lag;
        self
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn lag(&self) -> Option<usize> {
        self.lag
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn latent(&self) -> &[LatentColumn] {
        &self.latent
    }

    pub fn has_decision(&self) -> bool {
        self.decision.is_some()
    }

    #[inline]
    fn cell(&self, unit: usize, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.n_periods, "period {k} out of range");
        unit * self.n_periods + (k - 1)
    }

    /// Outcome `Y_k` of `unit`.
    #[inline]
    pub fn outcome(&self, unit: usize, k: usize) -> f64 {
        self.outcome[self.cell(unit, k)]
    }

    /// Treatment `A_k` of `unit`.
    #[inline]
    pub fn treatment(&self, unit: usize, k: usize) -> u8 {
        self.treatment[self.cell(unit, k)]
    }

    /// Decision `P_k` of `unit`, if decisions were observed.
    #[inline]
    pub fn decision(&self, unit: usize, k: usize) -> Option<u8> {
        self.decision.as_ref().map(|d| d[self.cell(unit, k)])
    }

    pub fn outcome_row(&self, unit: usize) -> &[f64] {
        &self.outcome[unit * self.n_periods..(unit + 1) * self.n_periods]
    }

    pub fn treatment_row(&self, unit: usize) -> &[u8] {
        &self.treatment[unit * self.n_periods..(unit + 1) * self.n_periods]
    }

    pub fn decision_row(&self, unit: usize) -> Option<&[u8]> {
        self.decision.as_ref().map(|d| &d[unit * self.n_periods..(unit + 1) * self.n_periods])
    }

    /// Same panel without the decision column.
    pub fn without_decision(&self) -> Self {
        Self { decision: None, ..self.clone() }
    }

    /// Panel with every outcome replaced by `f(unit, k, y)`.
    pub fn map_outcomes(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let outcome = self
            .outcome
            .iter()
            .enumerate()
            .map(|(idx, &y)| f(idx / self.n_periods, idx % self.n_periods + 1, y))
            .collect();
        Self { outcome, ..self.clone() }
    }

    /// Panel made of the listed units, in the listed order. Units may repeat
    /// (bootstrap resamples); ids are kept as-is.
    pub fn select_units(&self, units: &[usize]) -> Self {
        let t = self.n_periods;
        let mut outcome = Vec::with_capacity(units.len() * t);
        let mut treatment = Vec::with_capacity(units.len() * t);
        let mut decision = self.decision.as_ref().map(|_| Vec::with_capacity(units.len() * t));
        for &u in units {
            outcome.extend_from_slice(self.outcome_row(u));
            treatment.extend_from_slice(self.treatment_row(u));
            if let (Some(dst), Some(src)) = (decision.as_mut(), self.decision_row(u)) {
                dst.extend_from_slice(src);
            }
        }
        let latent = self
            .latent
            .iter()
            .map(|c| LatentColumn { name: c.name.clone(), values: units.iter().map(|&u| c.values[u]).collect() })
            .collect();
        Self {
            unit_ids: units.iter().map(|&u| self.unit_ids[u].clone()).collect(),
            n_periods: t,
            outcome,
            treatment,
            decision,
            lag: self.lag,
            latent,
        }
    }
}

/// One unit-period record: `(a, y, p)`.
type Cell = (u8, f64, Option<u8>);

fn parse_binary(raw: &str, unit: &str, time: usize, column: &str) -> Result<u8, PanelError> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => match other.parse::<f64>() {
            Ok(0.0) => Ok(0),
            Ok(1.0) => Ok(1),
            _ => Err(PanelError::NonBinary { unit: unit.into(), time, column: column.into(), value: other.into() }),
        },
    }
}

fn unit_order(ids: &mut [String]) {
    if ids.iter().all(|id| id.parse::<i64>().is_ok()) {
        ids.sort_by_key(|id| id.parse::<i64>().unwrap_or_default());
    } else {
        ids.sort();
    }
}

/// Reads a long-format CSV panel (one row per unit-period).
///
/// Row order is irrelevant. Unit ids are sorted (numerically when every id
/// is an integer) and remapped to 0-based indices.
pub fn load_panel<R: Read>(source: R, schema: &PanelSchema) -> Result<PanelDataset, PanelError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers().map_err(|e| PanelError::Csv(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| PanelError::MissingColumn(name.into()));
    let (c_unit, c_time, c_a, c_y) =
        (need(&schema.unit)?, need(&schema.time)?, need(&schema.treatment)?, need(&schema.outcome)?);
    let c_p = col(&schema.decision);

    let mut rows: HashMap<String, BTreeMap<usize, Cell>> = HashMap::new();
    let mut decision_cells = (0usize, 0usize);
    for record in reader.records() {
        let record = record.map_err(|e| PanelError::Csv(e.to_string()))?;
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let unit = field(c_unit).to_string();
        if unit.is_empty() {
            return Err(PanelError::InvalidValue { unit, column: schema.unit.clone(), value: String::new() });
        }
        let time = field(c_time).parse::<usize>().ok().filter(|&t| t >= 1).ok_or_else(|| PanelError::InvalidValue {
            unit: unit.clone(),
            column: schema.time.clone(),
            value: field(c_time).into(),
        })?;
        let missing = |column: &str| PanelError::MissingCell { unit: unit.clone(), time, column: column.into() };
        let a_raw = field(c_a);
        if a_raw.is_empty() {
            return Err(missing(&schema.treatment));
        }
        let a = parse_binary(a_raw, &unit, time, &schema.treatment)?;
        let y_raw = field(c_y);
        if y_raw.is_empty() {
            return Err(missing(&schema.outcome));
        }
        let y = y_raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| PanelError::InvalidValue {
            unit: unit.clone(),
            column: schema.outcome.clone(),
            value: y_raw.into(),
        })?;
        let p = match c_p.map(field) {
            Some(raw) if !raw.is_empty() => {
                decision_cells.0 += 1;
                Some(parse_binary(raw, &unit, time, &schema.decision)?)
            }
            _ => None,
        };
        decision_cells.1 += 1;
        let unit_rows = rows.entry(unit.clone()).or_default();
        if unit_rows.insert(time, (a, y, p)).is_some() {
            return Err(PanelError::Duplicate { unit, time });
        }
    }
    if rows.is_empty() {
        return Err(PanelError::Empty);
    }
    let (observed, total) = decision_cells;
    if observed != 0 && observed != total {
        return Err(PanelError::PartialDecision { observed, total });
    }

    let n_periods = rows.values().filter_map(|r| r.keys().next_back().copied()).max().unwrap_or(0);
    let mut ids: Vec<String> = rows.keys().cloned().collect();
    unit_order(&mut ids);
    let mut outcome = Vec::with_capacity(ids.len() * n_periods);
    let mut treatment = Vec::with_capacity(ids.len() * n_periods);
    let mut decision = (observed > 0).then(|| Vec::with_capacity(ids.len() * n_periods));
    for id in &ids {
        let unit_rows = &rows[id];
        if unit_rows.len() != n_periods {
            let missing: Vec<String> =
                (1..=n_periods).filter(|t| !unit_rows.contains_key(t)).map(|t| t.to_string()).collect();
            return Err(PanelError::Ragged {
                unit: id.clone(),
                detail: format!("lacks time(s) {} of the 1..{n_periods} grid", missing.join(",")),
            });
        }
        for (&_t, &(a, y, p)) in unit_rows {
            outcome.push(y);
            treatment.push(a);
            if let (Some(d), Some(p)) = (decision.as_mut(), p) {
                d.push(p);
            }
        }
    }
    PanelDataset::new(ids, n_periods, outcome, treatment, decision, schema.lag)
}

/// Decimal rendering with 17 significant digits; parses back to the same f64.
pub fn format_outcome(y: f64) -> String {
    format!("{y:.16e}")
}

/// Writes the canonical long-format CSV: units in index order, periods
/// ascending, outcomes with 17 significant digits.
pub fn save_panel<W: Write>(panel: &PanelDataset, sink: W, schema: &PanelSchema) -> Result<(), PanelError> {
    let mut writer = csv::Writer::from_writer(sink);
    let err = |e: csv::Error| PanelError::Csv(e.to_string());
    let mut header = vec![&schema.unit, &schema.time, &schema.treatment, &schema.outcome];
    if panel.has_decision() {
        header.push(&schema.decision);
    }
    writer.write_record(header).map_err(err)?;
    for (i, id) in panel.unit_ids().iter().enumerate() {
        for k in 1..=panel.n_periods() {
            let mut row =
                vec![id.clone(), k.to_string(), panel.treatment(i, k).to_string(), format_outcome(panel.outcome(i, k))];
            if let Some(p) = panel.decision(i, k) {
                row.push(p.to_string());
            }
            writer.write_record(&row).map_err(err)?;
        }
    }
    writer.flush().map_err(|e| PanelError::Csv(e.to_string()))
}

/// First-decision cohort of a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    /// Decided at time `g`; implemented from `g + s`.
    Decided(usize),
    Never,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Decided(g) => write!(f, "g={g}"),
            Group::Never => f.write_str("never"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignment {
    pub lag: usize,
    pub labels: Vec<Group>,
}

impl GroupAssignment {
    /// Units per label, ordered `g=1, g=2, …, never`.
    pub fn counts(&self) -> BTreeMap<Group, usize> {
        let mut out = BTreeMap::new();
        for &g in &self.labels {
            *out.entry(g).or_insert(0) += 1;
        }
        out
    }

    pub fn units_in(&self, group: Group) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().enumerate().filter(move |(_, &g)| g == group).map(|(i, _)| i)
    }
}

/// First period with `A_k = 1`, after checking that the path is monotone.
pub(crate) fn first_treated(row: &[u8]) -> Result<Option<usize>, ()> {
    let first = row.iter().position(|&a| a == 1);
    if let Some(f) = first {
        if row[f..].contains(&0) {
            return Err(());
        }
    }
    Ok(first.map(|f| f + 1))
}

/// Assigns every unit its decision cohort `g = first treated time − s`.
///
/// Paths must be zeros followed by ones. A unit first treated at or before
/// period `s` (or at period 1 when `s = 0`, which leaves no pre-period)
/// cannot be reconciled with an admissible decision path.
pub fn infer_groups(panel: &PanelDataset, s: usize) -> Result<GroupAssignment, PanelError> {
    let mut labels = Vec::with_capacity(panel.n_units());
    for i in 0..panel.n_units() {
        let unit = || panel.unit_ids()[i].clone();
        let first = first_treated(panel.treatment_row(i)).map_err(|_| PanelError::NonMonotone { unit: unit() })?;
        labels.push(match first {
            None => Group::Never,
            Some(t) if t <= s || t == 1 => {
                return Err(PanelError::TreatedBeforeDecision { unit: unit(), first_treated: t, lag: s })
            }
            Some(t) => Group::Decided(t - s),
        });
    }
    Ok(GroupAssignment { lag: s, labels })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmCheck {
    pub arm: String,
    pub count: usize,
    pub nonempty: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeterminismCheck {
    /// `A_k = P_{k−s}` (and `A_k = 0` for `k ≤ s`) held in every checked cell.
    Holds {
        lag: usize,
        cells_checked: usize,
    },
    Violated {
        lag: usize,
        violations: usize,
        units: usize,
        first_unit: String,
    },
    Skipped {
        reason: String,
    },
}

impl DeterminismCheck {
    pub fn holds(&self) -> bool {
        matches!(self, DeterminismCheck::Holds { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelAudit {
    pub n_units: usize,
    pub n_periods: usize,
    pub positivity: Vec<ArmCheck>,
    pub positivity_ok: bool,
    pub determinism: DeterminismCheck,
    /// Units per cohort label, or the reason cohorts could not be inferred.
    pub groups: Result<BTreeMap<String, usize>, String>,
    pub lag_used: usize,
    /// Assumptions about counterfactuals; auditable only against a model.
    pub not_checkable: Vec<String>,
}

const NOT_CHECKABLE: &[&str] = &[
    "consistency",
    "parallel trends",
    "no anticipation of the decision",
    "no direct effect of the decision on implemented outcomes",
];

/// Checks `A_k = P_{k−s}` for `k > s` and `A_k = 0` for `k ≤ s`.
pub fn check_determinism(panel: &PanelDataset, lag: Option<usize>) -> DeterminismCheck {
    if !panel.has_decision() {
        return DeterminismCheck::Skipped { reason: "skipped: P unobserved".into() };
    }
    let Some(s) = lag else {
        return DeterminismCheck::Skipped { reason: "skipped: decision lag unknown".into() };
    };
    let t = panel.n_periods();
    let (mut violations, mut units, mut first_unit) = (0usize, 0usize, None);
    for i in 0..panel.n_units() {
        let mut bad = 0;
        for k in 1..=t {
            let expected = if k <= s { 0 } else { panel.decision(i, k - s).unwrap_or(0) };
            if panel.treatment(i, k) != expected {
                bad += 1;
            }
        }
        if bad > 0 {
            violations += bad;
            units += 1;
            first_unit.get_or_insert_with(|| panel.unit_ids()[i].clone());
        }
    }
    match first_unit {
        None => DeterminismCheck::Holds { lag: s, cells_checked: panel.n_units() * t },
        Some(first_unit) => DeterminismCheck::Violated { lag: s, violations, units, first_unit },
    }
}

/// Observational checks only: positivity, decision/implementation
/// determinism and cohort sizes. Counterfactual assumptions are listed as
/// not checkable from data.
pub fn audit_assumptions(panel: &PanelDataset) -> PanelAudit {
    let lag = panel.lag().unwrap_or(if panel.n_periods() == 2 { 1 } else { 0 });
    let groups = infer_groups(panel, lag);
    let positivity = if panel.n_periods() == 2 {
        let treated = (0..panel.n_units()).filter(|&i| panel.treatment(i, 2) == 1).count();
        vec![
            ArmCheck { arm: "A2=1".into(), count: treated, nonempty: treated > 0 },
            ArmCheck { arm: "A2=0".into(), count: panel.n_units() - treated, nonempty: panel.n_units() > treated },
        ]
    } else {
        match &groups {
            Ok(g) => {
                let counts = g.counts();
                let treated: usize = counts.iter().filter(|(k, _)| **k != Group::Never).map(|(_, c)| c).sum();
                let never = counts.get(&Group::Never).copied().unwrap_or(0);
                vec![
                    ArmCheck { arm: "ever decided".into(), count: treated, nonempty: treated > 0 },
                    ArmCheck { arm: "never".into(), count: never, nonempty: never > 0 },
                ]
            }
            Err(_) => Vec::new(),
        }
    };
    let positivity_ok = !positivity.is_empty() && positivity.iter().all(|a| a.nonempty);
    PanelAudit {
        n_units: panel.n_units(),
        n_periods: panel.n_periods(),
        positivity,
        positivity_ok,
        determinism: check_determinism(panel, Some(lag)),
        groups: groups
            .map(|g| g.counts().into_iter().map(|(k, v)| (k.to_string(), v)).collect())
            .map_err(|e| e.to_string()),
        lag_used: lag,
        not_checkable: NOT_CHECKABLE.iter().map(|s| s.to_string()).collect(),
    }
}
