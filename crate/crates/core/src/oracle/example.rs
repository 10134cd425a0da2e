//! Oracle replication of every number in the defective-cars example.

use serde::{Deserialize, Serialize};

use super::{estimand_contrast, estimate_contrast, Contrast, EstimandKind, McConfig, OracleError};
use crate::scm::{builtin_cars_example, Intervention};

/// 97.5% standard normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The 95% interval is wider than the check margin.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRow {
    pub quantity: String,
    pub expression: String,
    /// `stated` for the numbers the example states, `derived` otherwise.
    pub source: String,
    pub expected: f64,
    pub value: f64,
    pub mc_se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub model: String,
    pub draws: usize,
    pub seed: u64,
    pub margin: f64,
    pub rows: Vec<ExampleRow>,
    pub all_pass: bool,
}

fn status(value: f64, se: f64, expected: f64, margin: f64) -> CheckStatus {
    if Z_975 * se > margin {
        CheckStatus::Inconclusive
    } else if (value - expected).abs() <= margin {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

/// Reproduces the example's components, trends and effects with `cfg.draws`
/// accepted draws each, checking them against the stated values within
/// `margin`.
pub fn replicate_cars_example(cfg: &McConfig, margin: f64) -> Result<ExampleReport, OracleError> {
    let cars = builtin_cars_example();
    let none = Intervention::none;
    let set = |n: &str, v: f64| Intervention::none().set(n, v);
    let treated = [("P", 1.0), ("U", 1.0)];
    let control = [("P", 0.0), ("U", 0.0)];
    let rows: Vec<(&str, &str, &str, f64, Contrast)> = vec![
        ("E(Y2^{a2=0} | P=1, U=1)", "component", "stated", 8.0, Contrast::mean("Y2", set("A2", 0.0), &treated)),
        ("E(Y1 | P=1, U=1)", "component", "stated", 10.0, Contrast::mean("Y1", none(), &treated)),
        ("E(Y2^{a2=0} | P=0, U=0)", "component", "stated", 8.0, Contrast::mean("Y2", set("A2", 0.0), &control)),
        ("E(Y1 | P=0, U=0)", "component", "stated", 10.0, Contrast::mean("Y1", none(), &control)),
        ("E(Y2^{a2=1} | P=1, U=1)", "component", "stated", 8.0, Contrast::mean("Y2", set("A2", 1.0), &treated)),
        ("E(Y2^{p=1} | U=1)", "component", "stated", 8.0, Contrast::mean("Y2", set("P", 1.0), &[("U", 1.0)])),
        ("E(Y2^{p=0} | U=1)", "component", "stated", 12.0, Contrast::mean("Y2", set("P", 0.0), &[("U", 1.0)])),
        (
            "E(Y2^{a2=0} - Y1 | A2=1)",
            "trend",
            "stated",
            -2.0,
            Contrast::trend("Y2", "Y1", set("A2", 0.0), &[("A2", 1.0)]),
        ),
        (
            "E(Y2^{a2=0} - Y1 | A2=0)",
            "trend",
            "stated",
            -2.0,
            Contrast::trend("Y2", "Y1", set("A2", 0.0), &[("A2", 0.0)]),
        ),
        ("E(Y2 - Y1 | A2=1)", "observed trend", "stated", -2.0, Contrast::trend("Y2", "Y1", none(), &[("A2", 1.0)])),
        ("E(Y2 - Y1 | A2=0)", "observed trend", "stated", -2.0, Contrast::trend("Y2", "Y1", none(), &[("A2", 0.0)])),
        ("ATT_A2", "effect", "stated", 0.0, estimand_contrast(&cars, EstimandKind::AttA2)?),
        ("ATT_P", "effect", "stated", -4.0, estimand_contrast(&cars, EstimandKind::AttP)?),
        ("PSI", "effect", "derived", -5.0, estimand_contrast(&cars, EstimandKind::Psi)?),
    ];
    let mut out = Vec::with_capacity(rows.len());
    for (i, (quantity, expression, source, expected, contrast)) in rows.into_iter().enumerate() {
        let v = estimate_contrast(&cars, &contrast, &cfg.child(i as u64))?;
        out.push(ExampleRow {
            quantity: quantity.into(),
            expression: expression.into(),
            source: source.into(),
            expected,
            value: v.value,
            mc_se: v.mc_se,
            ci_lo: v.value - Z_975 * v.mc_se,
            ci_hi: v.value + Z_975 * v.mc_se,
            status: status(v.value, v.mc_se, expected, margin),
        });
    }
    let all_pass = out.iter().all(|r| r.status == CheckStatus::Pass);
    Ok(ExampleReport { model: cars.name().into(), draws: cfg.draws, seed: cfg.seed, margin, rows: out, all_pass })
}
