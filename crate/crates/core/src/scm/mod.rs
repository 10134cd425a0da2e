//! Recursive structural causal models over binary, count and real nodes.
//!
//! A model is an ordered list of structural equations. A node may only refer
//! to nodes listed before it, so list order is a topological (temporal) order
//! and no sampling path can read a node that has not been assigned yet.
//! Mechanisms are affine combinations of parent values plus weighted `max`
//! terms, fed through a Bernoulli, Poisson, Normal or deterministic link.

mod builtin;
mod sample;
mod validate;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::{
    builtin_cars_example, builtin_staggered_dgp, prop1_dgp, prop2_dgp, staggered_closed_form_att,
    two_period_anticipation_dgp, StaggeredParams,
};
pub use sample::{sample_interventional, sample_nodes, sample_observational, NodeSample, SampleOptions};
pub use validate::{validate, Support};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScmError {
    #[error("invalid SCM JSON: {0}")]
    Json(String),
    #[error("duplicate node '{0}'")]
    DuplicateNode(String),
    #[error("forward reference: node '{node}' refers to '{parent}', which is not defined before it")]
    ForwardReference { node: String, parent: String },
    #[error("node '{node}' refers to unknown node '{parent}'")]
    UnknownParent { node: String, parent: String },
    #[error("node '{node}': {detail}")]
    KindMismatch { node: String, detail: String },
    #[error("node '{node}': normal mechanism needs a finite positive sd")]
    InvalidSd { node: String },
    #[error("negative reachable mean for Poisson node '{node}' (lower bound {lower})")]
    NegativeMean { node: String, lower: f64 },
    #[error("Bernoulli node '{node}' has reachable mean in [{lo}, {hi}], outside [0, 1]")]
    InvalidProbability { node: String, lo: f64, hi: f64 },
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("value {value} is outside the support of node '{node}'")]
    OutOfSupport { node: String, value: f64 },
    #[error("model cannot be mapped onto a panel: {0}")]
    Layout(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Exogenous,
    Deterministic,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist {
    Bernoulli,
    Poisson,
    Normal,
    Deterministic,
}

/// How a node maps onto panel columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Unobserved unit-level variable; kept in samples only on request.
    Latent,
    Decision,
    Treatment,
    Outcome,
    #[default]
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub parent: String,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxTerm {
    pub parents: Vec<String>,
    pub coef: f64,
}

/// `intercept + Σ coef·parent + Σ coef·max(parents…)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanExpr {
    pub intercept: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<Term>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub max_terms: Vec<MaxTerm>,
}

impl MeanExpr {
    pub fn constant(intercept: f64) -> Self {
        Self { intercept, ..Self::default() }
    }

    pub fn term(mut self, parent: &str, coef: f64) -> Self {
        self.terms.push(Term { parent: parent.into(), coef });
        self
    }

    pub fn max_term(mut self, parents: &[&str], coef: f64) -> Self {
        self.max_terms.push(MaxTerm { parents: parents.iter().map(|p| p.to_string()).collect(), coef });
        self
    }

    /// Every node the expression reads, in first-mention order.
    pub fn parents(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        let names = self
            .terms
            .iter()
            .map(|t| t.parent.as_str())
            .chain(self.max_terms.iter().flat_map(|m| m.parents.iter().map(String::as_str)));
        for name in names {
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
    pub dist: Dist,
    #[serde(default)]
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<usize>,
    pub mean: MeanExpr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
}

impl NodeSpec {
    fn with(name: &str, kind: NodeKind, dist: Dist, role: Role, time: Option<usize>, mean: MeanExpr) -> Self {
        Self { name: name.into(), kind, dist, role, time, mean, sd: None }
    }

    pub fn exogenous_bernoulli(name: &str, p: f64) -> Self {
        Self::with(name, NodeKind::Exogenous, Dist::Bernoulli, Role::Latent, None, MeanExpr::constant(p))
    }

    pub fn deterministic(name: &str, role: Role, time: Option<usize>, mean: MeanExpr) -> Self {
        Self::with(name, NodeKind::Deterministic, Dist::Deterministic, role, time, mean)
    }

    pub fn stochastic(name: &str, dist: Dist, role: Role, time: Option<usize>, mean: MeanExpr) -> Self {
        Self::with(name, NodeKind::Stochastic, dist, role, time, mean)
    }

    pub fn normal(name: &str, role: Role, time: Option<usize>, mean: MeanExpr, sd: f64) -> Self {
        Self { sd: Some(sd), ..Self::with(name, NodeKind::Stochastic, Dist::Normal, role, time, mean) }
    }
}

/// The serializable form of a model (the SCM definition file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmDocument {
    pub name: String,
    /// Decision-to-implementation lag `s`, when the model has decisions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag: Option<usize>,
    pub nodes: Vec<NodeSpec>,
}

impl ScmDocument {
    pub fn from_json(text: &str) -> Result<Self, ScmError> {
        serde_json::from_str(text).map_err(|e| ScmError::Json(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    /// Compact JSON with a fixed key order; the input to model hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("document serializes")
    }

    pub fn node_mut(&mut self, name: &str) -> Option<&mut NodeSpec> {
        self.nodes.iter_mut().find(|n| n.name == name)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledNode {
    pub dist: Dist,
    pub sd: f64,
    pub intercept: f64,
    pub terms: Vec<(usize, f64)>,
    pub max_terms: Vec<(Vec<usize>, f64)>,
    pub parents: Vec<usize>,
}

impl CompiledNode {
    #[inline]
    pub fn mean(&self, values: &[f64]) -> f64 {
        let mut m = self.intercept;
        for &(p, c) in &self.terms {
            m += c * values[p];
        }
        for (ps, c) in &self.max_terms {
            let mx = ps.iter().map(|&p| values[p]).fold(f64::NEG_INFINITY, f64::max);
            m += c * mx;
        }
        m
    }
}

/// Column mapping from nodes to panel fields.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelLayout {
    pub n_periods: usize,
    pub outcome: Vec<usize>,
    pub treatment: Vec<usize>,
    /// Decision nodes as `(time, node)`, ascending in time.
    pub decision: Vec<(usize, usize)>,
    pub latent: Vec<usize>,
}

impl PanelLayout {
    /// Node carrying `P_k`: the latest decision node at or before `k`.
    pub fn decision_node_at(&self, k: usize) -> Option<usize> {
        self.decision.iter().rev().find(|(t, _)| *t <= k).map(|&(_, n)| n)
    }
}

/// A validated model. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct Scm {
    doc: ScmDocument,
    index: HashMap<String, usize>,
    compiled: Vec<CompiledNode>,
    support: Vec<Support>,
    layout: Result<PanelLayout, ScmError>,
}

/// Forced node values: the graph-surgery half of a do-intervention.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Intervention {
    pub assignments: BTreeMap<String, f64>,
}

impl Intervention {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn set(mut self, node: impl Into<String>, value: f64) -> Self {
        self.assignments.insert(node.into(), value);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Intervention {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        Self { assignments: iter.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }
}

impl Scm {
    pub fn from_document(doc: ScmDocument) -> Result<Self, ScmError> {
        let support = validate::analyze(&doc)?;
        let index: HashMap<String, usize> = doc.nodes.iter().enumerate().map(|(i, n)| (n.name.clone(), i)).collect();
        let compiled = doc
            .nodes
            .iter()
            .map(|n| CompiledNode {
                dist: n.dist,
                sd: n.sd.unwrap_or(0.0),
                intercept: n.mean.intercept,
                terms: n.mean.terms.iter().map(|t| (index[&t.parent], t.coef)).collect(),
                max_terms: n
                    .mean
                    .max_terms
                    .iter()
                    .map(|m| (m.parents.iter().map(|p| index[p]).collect(), m.coef))
                    .collect(),
                parents: n.mean.parents().iter().map(|p| index[*p]).collect(),
            })
            .collect();
        let layout = build_layout(&doc);
        Ok(Self { doc, index, compiled, support, layout })
    }

    pub fn from_json(text: &str) -> Result<Self, ScmError> {
        Self::from_document(ScmDocument::from_json(text)?)
    }

    pub fn document(&self) -> &ScmDocument {
        &self.doc
    }

    pub fn name(&self) -> &str {
        &self.doc.name
    }

    pub fn lag(&self) -> Option<usize> {
        self.doc.lag
    }

    pub fn n_nodes(&self) -> usize {
        self.doc.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.doc.nodes
    }

    pub fn node_index(&self, name: &str) -> Result<usize, ScmError> {
        self.index.get(name).copied().ok_or_else(|| ScmError::UnknownNode(name.into()))
    }

    pub fn node_name(&self, idx: usize) -> &str {
        &self.doc.nodes[idx].name
    }

    pub fn support(&self, idx: usize) -> Support {
        self.support[idx]
    }

    pub fn parents(&self, idx: usize) -> &[usize] {
        &self.compiled[idx].parents
    }

    pub(crate) fn compiled(&self) -> &[CompiledNode] {
        &self.compiled
    }

    /// Mean of node `idx` given already-assigned values of its parents.
    pub fn node_mean(&self, idx: usize, values: &[f64]) -> f64 {
        self.compiled[idx].mean(values)
    }

    pub fn is_stochastic(&self, idx: usize) -> bool {
        self.compiled[idx].dist != Dist::Deterministic
    }

    pub fn panel_layout(&self) -> Result<&PanelLayout, ScmError> {
        self.layout.as_ref().map_err(Clone::clone)
    }

    /// Node index for a role at a time, e.g. the outcome at period 2.
    pub fn node_at(&self, role: Role, time: usize) -> Result<usize, ScmError> {
        self.doc
            .nodes
            .iter()
            .position(|n| n.role == role && n.time == Some(time))
            .ok_or_else(|| ScmError::Layout(format!("no {role:?} node at time {time}")))
    }

    /// Per-node forced values, after checking names and supports.
    pub fn compile_intervention(&self, intervention: &Intervention) -> Result<Vec<Option<f64>>, ScmError> {
        let mut forced = vec![None; self.n_nodes()];
        for (name, &value) in &intervention.assignments {
            let idx = self.node_index(name)?;
            if !self.support[idx].contains(value) {
                return Err(ScmError::OutOfSupport { node: name.clone(), value });
            }
            forced[idx] = Some(value);
        }
        Ok(forced)
    }

    /// Nodes whose value can change under surgery on the `forced` nodes:
    /// descendants in the mutilated graph, excluding the forced nodes.
    pub fn affected_by(&self, forced: &[Option<f64>]) -> Vec<bool> {
        let mut changed = vec![false; self.n_nodes()];
        for idx in 0..self.n_nodes() {
            if forced[idx].is_none() {
                changed[idx] = self.compiled[idx].parents.iter().any(|&p| forced[p].is_some() || changed[p]);
            }
        }
        changed
    }

    /// Ancestors of `targets`, including the targets themselves.
    pub fn ancestors_or_self(&self, targets: &[usize]) -> Vec<bool> {
        let mut mark = vec![false; self.n_nodes()];
        for &t in targets {
            mark[t] = true;
        }
        for idx in (0..self.n_nodes()).rev() {
            if mark[idx] {
                for &p in &self.compiled[idx].parents {
                    mark[p] = true;
                }
            }
        }
        mark
    }
}

fn build_layout(doc: &ScmDocument) -> Result<PanelLayout, ScmError> {
    let by_role = |role: Role| -> Result<BTreeMap<usize, usize>, ScmError> {
        let mut out = BTreeMap::new();
        for (i, n) in doc.nodes.iter().enumerate().filter(|(_, n)| n.role == role) {
            let t = n
                .time
                .filter(|&t| t >= 1)
                .ok_or_else(|| ScmError::Layout(format!("{role:?} node '{}' needs a time index ≥ 1", n.name)))?;
            if out.insert(t, i).is_some() {
                return Err(ScmError::Layout(format!("two {role:?} nodes at time {t}")));
            }
        }
        Ok(out)
    };
    let outcome = by_role(Role::Outcome)?;
    let treatment = by_role(Role::Treatment)?;
    let decision = by_role(Role::Decision)?;
    let n_periods = outcome.keys().next_back().copied().unwrap_or(0);
    if n_periods == 0 {
        return Err(ScmError::Layout("no outcome nodes".into()));
    }
    let contiguous = |m: &BTreeMap<usize, usize>, what: &str| -> Result<Vec<usize>, ScmError> {
        if m.len() != n_periods || m.keys().copied().ne(1..=n_periods) {
            return Err(ScmError::Layout(format!("{what} nodes must cover times 1..{n_periods}")));
        }
        Ok(m.values().copied().collect())
    };
    let outcome = contiguous(&outcome, "outcome")?;
    let treatment = contiguous(&treatment, "treatment")?;
    let latent = doc.nodes.iter().enumerate().filter(|(_, n)| n.role == Role::Latent).map(|(i, _)| i).collect();
    Ok(PanelLayout {
        n_periods,
        outcome,
        treatment,
        decision: decision.into_iter().filter(|(t, _)| *t <= n_periods).collect(),
        latent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_of_builtin() {
        let cars = builtin_cars_example();
        let text = cars.document().to_json_pretty();
        let back = Scm::from_json(&text).unwrap();
        assert_eq!(back.document(), cars.document());
    }

    #[test]
    fn layout_of_cars() {
        let cars = builtin_cars_example();
        let layout = cars.panel_layout().unwrap();
        assert_eq!(layout.n_periods, 2);
        assert_eq!(layout.decision.len(), 1);
        assert_eq!(layout.decision_node_at(2), layout.decision_node_at(1));
        assert_eq!(layout.latent, vec![cars.node_index("U").unwrap()]);
    }

    #[test]
    fn affected_set_is_downstream_only() {
        let cars = builtin_cars_example();
        let forced = cars.compile_intervention(&Intervention::none().set("A2", 1.0)).unwrap();
        let changed = cars.affected_by(&forced);
        let names: Vec<&str> = (0..cars.n_nodes()).filter(|&i| changed[i]).map(|i| cars.node_name(i)).collect();
        assert_eq!(names, ["Y2"]);

        let forced = cars.compile_intervention(&Intervention::none().set("P", 0.0)).unwrap();
        let changed = cars.affected_by(&forced);
        let names: Vec<&str> = (0..cars.n_nodes()).filter(|&i| changed[i]).map(|i| cars.node_name(i)).collect();
        assert_eq!(names, ["Y1", "A2", "Y2"]);
    }

    #[test]
    fn intervention_checks() {
        let cars = builtin_cars_example();
        assert!(matches!(
            cars.compile_intervention(&Intervention::none().set("Q", 1.0)),
            Err(ScmError::UnknownNode(_))
        ));
        assert!(matches!(
            cars.compile_intervention(&Intervention::none().set("P", 0.5)),
            Err(ScmError::OutOfSupport { .. })
        ));
        assert!(cars.compile_intervention(&Intervention::none().set("Y1", 3.0)).is_ok());
        assert!(cars.compile_intervention(&Intervention::none().set("Y1", -1.0)).is_err());
    }
}
