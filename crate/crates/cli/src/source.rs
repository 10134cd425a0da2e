//! Resolving `--scm` arguments to models.

use std::fs;

use anyhow::{bail, Context, Result};
use didp::scm::{
    builtin_cars_example, builtin_staggered_dgp, prop1_dgp, prop2_dgp, two_period_anticipation_dgp, StaggeredParams,
};
use didp::Scm;
use sha2::{Digest, Sha256};

/// Extra knobs for the parameterised built-ins.
#[derive(Debug, Clone, Copy)]
pub struct BuiltinParams {
    pub tau: usize,
    pub s: usize,
    pub anticipation: f64,
}

pub const BUILTINS: &str = "cars, prop1-dgp, prop2-dgp, anticipation, staggered";

/// Accepts `cars`, `builtin:NAME` or `file:PATH`.
pub fn resolve(source: &str, params: BuiltinParams) -> Result<Scm> {
    if let Some(path) = source.strip_prefix("file:") {
        let text = fs::read_to_string(path).with_context(|| format!("reading SCM file {path}"))?;
        return Scm::from_json(&text).with_context(|| format!("loading SCM from {path}"));
    }
    let name = source.strip_prefix("builtin:").unwrap_or(source);
    Ok(match name {
        "cars" => builtin_cars_example(),
        "prop1-dgp" => prop1_dgp(),
        "prop2-dgp" => prop2_dgp(),
        "anticipation" => two_period_anticipation_dgp(params.anticipation)?,
        "staggered" => {
            let p = StaggeredParams { anticipation: params.anticipation, ..StaggeredParams::default_for(params.tau) };
            builtin_staggered_dgp(params.tau, params.s, &p)?
        }
        other => bail!("unknown SCM source '{other}'; use file:PATH or one of: {BUILTINS}"),
    })
}

/// SHA-256 of the canonical JSON form of the model.
pub fn model_hash(scm: &Scm) -> String {
    hex::encode(Sha256::digest(scm.document().canonical_json().as_bytes()))
}

pub fn file_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
