//! Exact conditional interventional means for models whose real-valued
//! nodes enter every mean affinely.
//!
//! Bernoulli nodes are enumerated with their probabilities; Poisson and
//! normal nodes are replaced by their means, which is exact for expectations
//! of affine functions. `max` terms are allowed only over binary nodes, so
//! they are evaluated on point values.

#![allow(dead_code)]

use didp::scm::{Dist, NodeKind, ScmDocument};

struct Node {
    name: String,
    dist: Dist,
    intercept: f64,
    terms: Vec<(usize, f64)>,
    max_terms: Vec<(Vec<usize>, f64)>,
}

impl Node {
    fn mean(&self, v: &[f64]) -> f64 {
        let mut m = self.intercept;
        for &(p, c) in &self.terms {
            m += c * v[p];
        }
        for (ps, c) in &self.max_terms {
            m += c * ps.iter().map(|&p| v[p]).fold(f64::MIN, f64::max);
        }
        m
    }
}

/// One interventional arm: forced `(node, value)` pairs and weighted terms.
pub type ArmSpec<'a> = (&'a [(&'a str, f64)], &'a [(&'a str, f64)]);

pub struct Exact {
    nodes: Vec<Node>,
}

impl Exact {
    pub fn new(doc: &ScmDocument) -> Self {
        let idx = |n: &str| doc.nodes.iter().position(|x| x.name == n).unwrap();
        let nodes: Vec<Node> = doc
            .nodes
            .iter()
            .map(|n| {
                let dist = if n.kind == NodeKind::Deterministic { Dist::Deterministic } else { n.dist };
                Node {
                    name: n.name.clone(),
                    dist,
                    intercept: n.mean.intercept,
                    terms: n.mean.terms.iter().map(|t| (idx(&t.parent), t.coef)).collect(),
                    max_terms: n
                        .mean
                        .max_terms
                        .iter()
                        .map(|m| (m.parents.iter().map(|p| idx(p)).collect(), m.coef))
                        .collect(),
                }
            })
            .collect();
        Self { nodes }
    }

    fn index(&self, name: &str) -> usize {
        self.nodes.iter().position(|n| n.name == name).unwrap_or_else(|| panic!("no node {name}"))
    }

    fn scenarios(&self, i: usize, vals: &mut Vec<f64>, w: f64, out: &mut Vec<(f64, Vec<f64>)>) {
        if w == 0.0 {
            return;
        }
        if i == self.nodes.len() {
            out.push((w, vals.clone()));
            return;
        }
        let node = &self.nodes[i];
        let m = node.mean(vals);
        if node.dist == Dist::Bernoulli {
            let p = m.clamp(0.0, 1.0);
            vals.push(1.0);
            self.scenarios(i + 1, vals, w * p, out);
            vals.pop();
            vals.push(0.0);
            self.scenarios(i + 1, vals, w * (1.0 - p), out);
            vals.pop();
        } else {
            vals.push(m);
            self.scenarios(i + 1, vals, w, out);
            vals.pop();
        }
    }

    /// `E(Σ_arm Σ_term coef·node^{do(arm)} | condition)`.
    pub fn contrast(&self, condition: &[(&str, f64)], arms: &[ArmSpec]) -> f64 {
        let mut all = Vec::new();
        self.scenarios(0, &mut Vec::new(), 1.0, &mut all);
        let cond: Vec<(usize, f64)> = condition.iter().map(|&(n, v)| (self.index(n), v)).collect();
        let (mut num, mut den) = (0.0, 0.0);
        for (w, natural) in all {
            if !cond.iter().all(|&(i, v)| natural[i] == v) {
                continue;
            }
            den += w;
            for (forced, terms) in arms {
                let forced: Vec<(usize, f64)> = forced.iter().map(|&(n, v)| (self.index(n), v)).collect();
                let mut vals = natural.clone();
                let mut changed = vec![false; self.nodes.len()];
                for (i, node) in self.nodes.iter().enumerate() {
                    if let Some(&(_, v)) = forced.iter().find(|f| f.0 == i) {
                        vals[i] = v;
                        changed[i] = true;
                        continue;
                    }
                    let touched = node
                        .terms
                        .iter()
                        .map(|t| t.0)
                        .chain(node.max_terms.iter().flat_map(|m| m.0.iter().copied()))
                        .any(|p| changed[p]);
                    if touched {
                        assert!(node.dist != Dist::Bernoulli, "redrawn Bernoulli node {} is not supported", node.name);
                        vals[i] = node.mean(&vals);
                        changed[i] = true;
                    }
                }
                for &(n, c) in terms.iter() {
                    num += w * c * vals[self.index(n)];
                }
            }
        }
        assert!(den > 0.0, "conditioning event has probability zero");
        num / den
    }

    pub fn mean(&self, node: &str, forced: &[(&str, f64)], condition: &[(&str, f64)]) -> f64 {
        self.contrast(condition, &[(forced, &[(node, 1.0)])])
    }

    pub fn probability(&self, condition: &[(&str, f64)]) -> f64 {
        let mut all = Vec::new();
        self.scenarios(0, &mut Vec::new(), 1.0, &mut all);
        let cond: Vec<(usize, f64)> = condition.iter().map(|&(n, v)| (self.index(n), v)).collect();
        all.iter().filter(|(_, v)| cond.iter().all(|&(i, x)| v[i] == x)).map(|(w, _)| w).sum()
    }
}
