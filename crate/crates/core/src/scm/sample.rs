//! Observational and interventional sampling.
//!
//! Unit `i` always draws from substream `(seed, i)`, so a sample is a pure
//! function of `(model, intervention, n, seed)` whatever the thread count.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::{CompiledNode, Dist, Intervention, Scm, ScmError};
use crate::exec::{domain, map_indices, substream, Execution};
use crate::panel::{LatentColumn, PanelDataset};

#[derive(Debug, Clone, Copy, Default)]
pub struct SampleOptions {
    /// Keep latent (exogenous) node values alongside the panel.
    pub retain_latent: bool,
    pub exec: Execution,
}

/// Raw node values, unit-major (`unit * n_nodes + node`).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSample {
    pub n_units: usize,
    pub n_nodes: usize,
    pub values: Vec<f64>,
}

impl NodeSample {
    pub fn unit(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_nodes..(i + 1) * self.n_nodes]
    }

    pub fn column(&self, node: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_units).map(move |i| self.values[i * self.n_nodes + node])
    }

    pub fn mean_of(&self, node: usize) -> f64 {
        self.column(node).sum::<f64>() / self.n_units as f64
    }
}

#[inline]
pub(crate) fn draw_value<R: Rng + ?Sized>(node: &CompiledNode, mean: f64, rng: &mut R) -> f64 {
    match node.dist {
        Dist::Deterministic => mean,
        // Means are validated to stay in range for every reachable parent
        // configuration; clamping only guards events below the reach floor.
        Dist::Bernoulli => f64::from(u8::from(rng.random::<f64>() < mean.clamp(0.0, 1.0))),
        Dist::Poisson => {
            if mean <= 0.0 {
                0.0
            } else {
                Poisson::new(mean).expect("finite positive Poisson mean").sample(rng)
            }
        }
        Dist::Normal => {
            let z: f64 = StandardNormal.sample(rng);
            mean + node.sd * z
        }
    }
}

impl Scm {
    /// Draws one unit in list order. Forced nodes take their forced value
    /// and consume no randomness.
    pub fn draw_unit<R: Rng + ?Sized>(&self, forced: &[Option<f64>], rng: &mut R, out: &mut [f64]) {
        self.draw_nodes(forced, 0..self.n_nodes(), rng, out);
    }

    /// Draws nodes `range` in list order; earlier nodes must already be set.
    pub(crate) fn draw_nodes<R: Rng + ?Sized>(
        &self,
        forced: &[Option<f64>],
        range: std::ops::Range<usize>,
        rng: &mut R,
        out: &mut [f64],
    ) {
        for idx in range {
            let node = &self.compiled()[idx];
            out[idx] = match forced[idx] {
                Some(v) => v,
                None => {
                    let m = node.mean(out);
                    draw_value(node, m, rng)
                }
            };
        }
    }

    /// Re-draws the `changed` nodes of an existing unit under surgery,
    /// keeping every other unforced node at its `natural` value.
    pub fn redraw_unit<R: Rng + ?Sized>(
        &self,
        natural: &[f64],
        forced: &[Option<f64>],
        changed: &[bool],
        rng: &mut R,
        out: &mut [f64],
    ) {
        for (idx, node) in self.compiled().iter().enumerate() {
            out[idx] = match forced[idx] {
                Some(v) => v,
                None if changed[idx] => {
                    let m = node.mean(out);
                    draw_value(node, m, rng)
                }
                None => natural[idx],
            };
        }
    }
}

/// Draws `n` units under `intervention` (empty for observational data).
pub fn sample_nodes(
    scm: &Scm,
    intervention: &Intervention,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<NodeSample, ScmError> {
    let forced = scm.compile_intervention(intervention)?;
    let k = scm.n_nodes();
    let rows = map_indices(exec, n, |i| {
        let mut rng = substream(seed, domain::SAMPLE, i as u64);
        let mut row = vec![0.0; k];
        scm.draw_unit(&forced, &mut rng, &mut row);
        row
    });
    Ok(NodeSample { n_units: n, n_nodes: k, values: rows.concat() })
}

fn to_panel(scm: &Scm, sample: &NodeSample, retain_latent: bool) -> Result<PanelDataset, ScmError> {
    let layout = scm.panel_layout()?;
    let t = layout.n_periods;
    let n = sample.n_units;
    let mut outcome = Vec::with_capacity(n * t);
    let mut treatment = Vec::with_capacity(n * t);
    let mut decision = (!layout.decision.is_empty()).then(|| Vec::with_capacity(n * t));
    for i in 0..n {
        let row = sample.unit(i);
        for k in 1..=t {
            outcome.push(row[layout.outcome[k - 1]]);
            treatment.push(row[layout.treatment[k - 1]] as u8);
            if let Some(d) = decision.as_mut() {
                d.push(layout.decision_node_at(k).map_or(0, |p| row[p] as u8));
            }
        }
    }
    let ids = (0..n).map(|i| i.to_string()).collect();
    let panel = PanelDataset::new(ids, t, outcome, treatment, decision, scm.lag())
        .map_err(|e| ScmError::Layout(e.to_string()))?;
    if !retain_latent {
        return Ok(panel);
    }
    let latent = layout
        .latent
        .iter()
        .map(|&node| LatentColumn { name: scm.node_name(node).to_string(), values: sample.column(node).collect() })
        .collect();
    panel.with_latent(latent).map_err(|e| ScmError::Layout(e.to_string()))
}

/// `n` i.i.d. observational units as a panel.
pub fn sample_observational(scm: &Scm, n: usize, seed: u64, opts: &SampleOptions) -> Result<PanelDataset, ScmError> {
    let sample = sample_nodes(scm, &Intervention::none(), n, seed, opts.exec)?;
    to_panel(scm, &sample, opts.retain_latent)
}

/// `n` i.i.d. units drawn under graph surgery.
pub fn sample_interventional(
    scm: &Scm,
    intervention: &Intervention,
    n: usize,
    seed: u64,
    opts: &SampleOptions,
) -> Result<PanelDataset, ScmError> {
    let sample = sample_nodes(scm, intervention, n, seed, opts.exec)?;
    to_panel(scm, &sample, opts.retain_latent)
}
