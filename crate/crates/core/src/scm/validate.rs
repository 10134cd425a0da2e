//! Structural checks and reachable-mean analysis.
//!
//! Binary nodes are enumerated exactly (each reachable configuration is a
//! separate scenario), count and real nodes are tracked as intervals. A value
//! counts as reachable when its probability is at least [`REACH_EPS`]; this
//! is what lets `Y ~ Poisson(10 − 0.2·Y₁)` with `Y₁ ~ Poisson(10)` pass while
//! `Poisson(10 − 2·Y₁)` is rejected.

use std::collections::HashSet;

use super::{Dist, NodeKind, ScmDocument, ScmError};

/// Tail probability below which a value is treated as unreachable.
pub const REACH_EPS: f64 = 1e-12;
/// Two-sided normal quantile for [`REACH_EPS`].
const NORMAL_REACH_Z: f64 = 7.2;
/// Scenario count above which binary configurations are merged into hulls.
const MAX_SCENARIOS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Binary,
    Count,
    Real,
}

impl Support {
    pub fn contains(self, v: f64) -> bool {
        match self {
            Support::Binary => v == 0.0 || v == 1.0,
            Support::Count => v >= 0.0 && v.fract() == 0.0 && v.is_finite(),
            Support::Real => v.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    fn scale(self, c: f64) -> Self {
        if c == 0.0 {
            return Self::point(0.0);
        }
        let (a, b) = (c * self.lo, c * self.hi);
        Self { lo: a.min(b), hi: a.max(b) }
    }

    fn hull(self, other: Self) -> Self {
        Self { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }
}

/// Smallest `k` with `P(X > k) < REACH_EPS` for `X ~ Poisson(lambda)`.
pub(crate) fn poisson_reach_upper(lambda: f64) -> f64 {
    if !lambda.is_finite() {
        return f64::INFINITY;
    }
    if lambda <= 0.0 {
        return 0.0;
    }
    let ln_lambda = lambda.ln();
    let mut ln_p = -lambda;
    let mut cdf = ln_p.exp();
    let mut k = 0.0;
    while 1.0 - cdf >= REACH_EPS || k < lambda {
        k += 1.0;
        ln_p += ln_lambda - f64::ln(k);
        cdf += ln_p.exp();
        if k > lambda + 60.0 * lambda.sqrt() + 100.0 {
            break;
        }
    }
    k
}

fn structural_checks(doc: &ScmDocument) -> Result<(), ScmError> {
    let all: HashSet<&str> = doc.nodes.iter().map(|n| n.name.as_str()).collect();
    let mut seen: HashSet<&str> = HashSet::new();
    for node in &doc.nodes {
        if seen.contains(node.name.as_str()) {
            return Err(ScmError::DuplicateNode(node.name.clone()));
        }
        for parent in node.mean.parents() {
            if !seen.contains(parent) {
                return Err(if all.contains(parent) {
                    ScmError::ForwardReference { node: node.name.clone(), parent: parent.into() }
                } else {
                    ScmError::UnknownParent { node: node.name.clone(), parent: parent.into() }
                });
            }
        }
        let mismatch = |detail: &str| ScmError::KindMismatch { node: node.name.clone(), detail: detail.into() };
        match node.kind {
            NodeKind::Exogenous if !node.mean.parents().is_empty() => {
                return Err(mismatch("exogenous nodes cannot have parents"))
            }
            NodeKind::Deterministic if node.dist != Dist::Deterministic => {
                return Err(mismatch("deterministic kind requires the deterministic mechanism"))
            }
            NodeKind::Stochastic if node.dist == Dist::Deterministic => {
                return Err(mismatch("stochastic kind requires a random mechanism"))
            }
            _ => {}
        }
        if node.mean.max_terms.iter().any(|m| m.parents.is_empty()) {
            return Err(mismatch("max term without arguments"));
        }
        match (node.dist, node.sd) {
            (Dist::Normal, Some(sd)) if sd.is_finite() && sd > 0.0 => {}
            (Dist::Normal, _) => return Err(ScmError::InvalidSd { node: node.name.clone() }),
            (_, Some(_)) => return Err(mismatch("sd is only meaningful for normal mechanisms")),
            _ => {}
        }
        let finite = node.mean.intercept.is_finite()
            && node.mean.terms.iter().all(|t| t.coef.is_finite())
            && node.mean.max_terms.iter().all(|t| t.coef.is_finite());
        if !finite {
            return Err(mismatch("non-finite coefficient"));
        }
        seen.insert(node.name.as_str());
    }
    Ok(())
}

/// Validates ordering, references and reachable means; returns the support
/// of every node.
pub(crate) fn analyze(doc: &ScmDocument) -> Result<Vec<Support>, ScmError> {
    structural_checks(doc)?;
    let index: std::collections::HashMap<&str, usize> =
        doc.nodes.iter().enumerate().map(|(i, n)| (n.name.as_str(), i)).collect();

    let mut scenarios: Vec<Vec<Interval>> = vec![Vec::with_capacity(doc.nodes.len())];
    let mut support = Vec::with_capacity(doc.nodes.len());
    for node in &doc.nodes {
        let mut next = Vec::with_capacity(scenarios.len());
        let mut all_binary_points = true;
        for sc in scenarios {
            let mut mean = Interval::point(node.mean.intercept);
            for t in &node.mean.terms {
                let v = sc[index[t.parent.as_str()]].scale(t.coef);
                mean = Interval { lo: mean.lo + v.lo, hi: mean.hi + v.hi };
            }
            for m in &node.mean.max_terms {
                let args = m.parents.iter().map(|p| sc[index[p.as_str()]]);
                let mx = args
                    .reduce(|a, b| Interval { lo: a.lo.max(b.lo), hi: a.hi.max(b.hi) })
                    .expect("max term has arguments");
                let v = mx.scale(m.coef);
                mean = Interval { lo: mean.lo + v.lo, hi: mean.hi + v.hi };
            }
            match node.dist {
                Dist::Deterministic => {
                    if !(mean.is_point() && (mean.lo == 0.0 || mean.lo == 1.0)) {
                        all_binary_points = false;
                    }
                    let mut sc = sc;
                    sc.push(mean);
                    next.push(sc);
                }
                Dist::Bernoulli => {
                    if mean.lo < 0.0 || mean.hi > 1.0 {
                        return Err(ScmError::InvalidProbability { node: node.name.clone(), lo: mean.lo, hi: mean.hi });
                    }
                    if mean.hi > 0.0 {
                        let mut one = sc.clone();
                        one.push(Interval::point(1.0));
                        next.push(one);
                    }
                    if mean.lo < 1.0 {
                        let mut zero = sc;
                        zero.push(Interval::point(0.0));
                        next.push(zero);
                    }
                }
                Dist::Poisson => {
                    if mean.lo < 0.0 {
                        return Err(ScmError::NegativeMean { node: node.name.clone(), lower: mean.lo });
                    }
                    let mut sc = sc;
                    sc.push(Interval { lo: 0.0, hi: poisson_reach_upper(mean.hi) });
                    next.push(sc);
                }
                Dist::Normal => {
                    let w = NORMAL_REACH_Z * node.sd.unwrap_or(0.0);
                    let mut sc = sc;
                    sc.push(Interval { lo: mean.lo - w, hi: mean.hi + w });
                    next.push(sc);
                }
            }
        }
        support.push(match node.dist {
            Dist::Bernoulli => Support::Binary,
            Dist::Deterministic if all_binary_points => Support::Binary,
            Dist::Poisson => Support::Count,
            _ => Support::Real,
        });
        scenarios = if next.len() > MAX_SCENARIOS { vec![merge(next)] } else { next };
    }
    Ok(support)
}

fn merge(scenarios: Vec<Vec<Interval>>) -> Vec<Interval> {
    scenarios.into_iter().reduce(|a, b| a.into_iter().zip(b).map(|(x, y)| x.hull(y)).collect()).unwrap_or_default()
}

/// Checks a model document without building it.
pub fn validate(doc: &ScmDocument) -> Result<(), ScmError> {
    analyze(doc).map(|_| ())
}
