//! `didp`: simulate panels from structural models, estimate DiD functionals,
//! query the counterfactual oracle and check identification claims.
//!
//! Exit codes: 0 success, 2 invalid input or failed computation, 3 a check
//! failed, 4 the premises of the checked claim do not hold.

mod source;
mod table;

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use didp::oracle::{
    bias_sweep, oracle_estimand, replicate_cars_example, verify_claim, CheckStatus, Claim, EstimandKind, McConfig,
    OracleEstimand, SweepConfig, SweepFamily, VerifyConfig, VerifyStatus,
};
use didp::scm::{sample_interventional, SampleOptions, StaggeredParams};
use didp::{
    audit_assumptions, bootstrap_ci, did_classic_as, group_time_att, load_panel, save_panel, BootstrapConfig,
    ControlGroup, Execution, GroupTimeQuery, Intervention, PanelSchema, Reading, Scm,
};
use serde::Serialize;

use source::{file_hash, model_hash, resolve, BuiltinParams};
use table::{num, Table};

const THREADS_ENV: &str = "DIDP_THREADS";

#[derive(Parser)]
#[command(name = "didp", version, about = "Difference-in-differences with separate policy decision and implementation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a panel from a model and write it as CSV with a JSON manifest
    Simulate(SimulateArgs),
    /// Estimate a DiD functional on a panel CSV
    Estimate(EstimateArgs),
    /// Compute counterfactual estimands by brute-force simulation
    Oracle(OracleArgs),
    /// Check an identification claim against the oracle
    Verify(VerifyArgs),
    /// Reproduce every number of the defective-cars example
    ReplicateExample(ReplicateArgs),
    /// Tabulate estimator bias against anticipation strength
    Sweep(SweepArgs),
}

#[derive(Args, Serialize)]
struct ModelArgs {
    /// Model: cars, builtin:NAME or file:PATH
    #[arg(long)]
    scm: String,
    /// Periods of builtin:staggered
    #[arg(long, default_value_t = 4)]
    tau: usize,
    /// Implementation lag of builtin:staggered
    #[arg(long, default_value_t = 1)]
    s: usize,
    /// Anticipation coefficient of builtin:staggered and builtin:anticipation
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    anticipation: f64,
}

impl ModelArgs {
    fn load(&self) -> Result<Scm> {
        resolve(&self.scm, BuiltinParams { tau: self.tau, s: self.s, anticipation: self.anticipation })
    }
}

#[derive(Args, Serialize)]
struct OutputArgs {
    /// Write the JSON report here
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the JSON report on standard output instead of the table
    #[arg(long)]
    json: bool,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of units
    #[arg(long = "n", alias = "n-units")]
    n: usize,
    /// Random seed; drawn from entropy when absent and recorded in the manifest
    #[arg(long)]
    seed: Option<u64>,
    /// Panel CSV to write
    #[arg(long)]
    out: PathBuf,
    /// Manifest path (default: the panel path with extension .manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Intervene on a node, NODE=VALUE; repeatable
    #[arg(long = "do", value_name = "NODE=VALUE")]
    interventions: Vec<String>,
    /// Print the manifest JSON instead of the summary table
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ControlArg {
    NotYet,
    Never,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ReadingArg {
    Implementation,
    Decision,
}

#[derive(Args, Serialize)]
struct EstimateArgs {
    /// Long-format panel CSV with columns unit, time, a, y and optionally p
    #[arg(long)]
    panel: PathBuf,
    /// First decision time of the cohort (group-time estimation)
    #[arg(long)]
    g: Option<usize>,
    /// Outcome period (group-time estimation)
    #[arg(long)]
    k: Option<usize>,
    /// Decision-to-implementation lag (group-time estimation)
    #[arg(long)]
    s: Option<usize>,
    /// Control group for group-time estimation
    #[arg(long, value_enum, default_value = "not-yet")]
    control: ControlArg,
    /// Which effect the two-period estimate is read as
    #[arg(long, value_enum)]
    reading: Option<ReadingArg>,
    /// Ignore the decision column even when present
    #[arg(long)]
    no_decision: bool,
    /// Bootstrap replicates for a percentile interval (0 disables)
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    /// Confidence level of the bootstrap interval
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Bootstrap seed; drawn from entropy when absent
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct OracleArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// ATT_A2, ATT_P, PSI, ATT_P_GT(g,k) or ATT_A_GT(g,k); repeatable.
    /// Defaults to every estimand the model supports.
    #[arg(long)]
    estimand: Vec<String>,
    /// Cohort for a bare ATT_P_GT or ATT_A_GT
    #[arg(long)]
    g: Option<usize>,
    /// Outcome period for a bare ATT_P_GT or ATT_A_GT
    #[arg(long)]
    k: Option<usize>,
    /// Accepted Monte Carlo draws per estimand
    #[arg(long, default_value_t = 400_000)]
    draws: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    /// Claim: 1 or bias-decomposition, 2 or decision-effect, 3 or group-time
    #[arg(long, alias = "claim")]
    prop: String,
    #[command(flatten)]
    model: ModelArgs,
    /// Units per simulated panel
    #[arg(long = "n", alias = "n-units", default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    replications: usize,
    #[arg(long, default_value_t = 400_000)]
    oracle_draws: usize,
    /// Pass band in combined standard errors
    #[arg(long, default_value_t = 4.0)]
    sigmas: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct ReplicateArgs {
    /// Accepted draws per quantity
    #[arg(long, alias = "n", default_value_t = 1_000_000)]
    draws: usize,
    /// Allowed distance from the stated values
    #[arg(long, default_value_t = 0.03)]
    margin: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FamilyArg {
    TwoPeriod,
    Staggered,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long, value_enum, default_value = "two-period")]
    family: FamilyArg,
    /// Anticipation values, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-3,-2,-1,0")]
    alphas: Vec<f64>,
    /// Periods of the staggered family
    #[arg(long, default_value_t = 4)]
    tau: usize,
    /// Lag of the staggered family
    #[arg(long, default_value_t = 1)]
    s: usize,
    #[arg(long = "n", alias = "n-units", default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    replications: usize,
    #[arg(long, default_value_t = 200_000)]
    oracle_draws: usize,
    #[arg(long, default_value_t = 4.0)]
    sigmas: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the table as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

/// Everything a report file holds. No timings or thread counts, so equal
/// inputs give byte-identical files.
#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a C,
    result: R,
}

fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}

fn check_output(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            bail!("output directory {} does not exist", dir.display())
        }
        _ => Ok(()),
    }
}

fn check_outputs(output: &OutputArgs) -> Result<()> {
    output.report.as_deref().map_or(Ok(()), check_output)
}

fn emit<C: Serialize, R: Serialize>(
    output: &OutputArgs,
    command: &'static str,
    seed: u64,
    config: &C,
    result: R,
    table: String,
) -> Result<()> {
    let envelope = Envelope { tool: "didp", version: env!("CARGO_PKG_VERSION"), command, seed, config, result };
    let text = serde_json::to_string_pretty(&envelope)? + "\n";
    if let Some(path) = &output.report {
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    if output.json {
        print!("{text}");
    } else {
        print!("{table}");
    }
    Ok(())
}

fn parse_interventions(items: &[String]) -> Result<Intervention> {
    items
        .iter()
        .map(|item| {
            let (node, value) =
                item.split_once('=').with_context(|| format!("intervention '{item}' is not NODE=VALUE"))?;
            let value: f64 = value.trim().parse().with_context(|| format!("bad value in intervention '{item}'"))?;
            Ok((node.trim().to_string(), value))
        })
        .collect()
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    scm: String,
    scm_source: String,
    scm_sha256: String,
    seed: u64,
    n_units: usize,
    n_periods: usize,
    lag: Option<usize>,
    intervention: BTreeMap<String, f64>,
    panel: String,
    panel_sha256: String,
}

fn simulate(args: &SimulateArgs) -> Result<ExitCode> {
    check_output(&args.out)?;
    let manifest_path = args.manifest.clone().unwrap_or_else(|| args.out.with_extension("manifest.json"));
    check_output(&manifest_path)?;
    let scm = args.model.load()?;
    let intervention = parse_interventions(&args.interventions)?;
    let seed = seed_or_entropy(args.seed);
    let opts = SampleOptions { retain_latent: false, exec: Execution::Parallel };
    let panel = sample_interventional(&scm, &intervention, args.n, seed, &opts)?;

    let mut csv = Vec::new();
    save_panel(&panel, &mut csv, &PanelSchema::default())?;
    fs::write(&args.out, &csv).with_context(|| format!("writing {}", args.out.display()))?;
    let manifest = Manifest {
        tool: "didp",
        version: env!("CARGO_PKG_VERSION"),
        scm: scm.name().into(),
        scm_source: args.model.scm.clone(),
        scm_sha256: model_hash(&scm),
        seed,
        n_units: panel.n_units(),
        n_periods: panel.n_periods(),
        lag: scm.lag(),
        intervention: intervention.assignments.clone(),
        panel: args.out.display().to_string(),
        panel_sha256: file_hash(&csv),
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&manifest_path, &text).with_context(|| format!("writing {}", manifest_path.display()))?;

    if args.json {
        print!("{text}");
        return Ok(ExitCode::SUCCESS);
    }
    let n = panel.n_units().max(1) as f64;
    let mut t = Table::new(["period", "share A=1", "share P=1", "mean Y"]);
    for k in 1..=panel.n_periods() {
        let units = 0..panel.n_units();
        let a = units.clone().filter(|&i| panel.treatment(i, k) == 1).count() as f64 / n;
        let p = if panel.has_decision() {
            num(units.clone().filter(|&i| panel.decision(i, k) == Some(1)).count() as f64 / n)
        } else {
            "-".into()
        };
        let y = units.map(|i| panel.outcome(i, k)).sum::<f64>() / n;
        t.row([k.to_string(), num(a), p, num(y)]);
    }
    println!("model {} (sha256 {}), seed {}, {} units", manifest.scm, manifest.scm_sha256, seed, manifest.n_units);
    print!("{}", t.render());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct PanelInfo {
    path: String,
    sha256: String,
    n_units: usize,
    n_periods: usize,
    has_decision: bool,
}

#[derive(Serialize)]
struct EstimateResult {
    panel: PanelInfo,
    report: didp::EstimateReport,
    audit: didp::PanelAudit,
}

fn estimate(args: &EstimateArgs) -> Result<ExitCode> {
    check_input(&args.panel)?;
    check_outputs(&args.output)?;
    if !(args.level > 0.0 && args.level < 1.0) {
        bail!("--level must lie strictly between 0 and 1");
    }
    let group_time = match (args.g, args.k) {
        (Some(g), Some(k)) => {
            let s = args.s.context("group-time estimation needs --s")?;
            if args.reading.is_some() {
                bail!("--reading applies to the two-period estimator only");
            }
            let control = match args.control {
                ControlArg::NotYet => ControlGroup::NotYetTreated,
                ControlArg::Never => ControlGroup::NeverTreated,
            };
            Some(GroupTimeQuery { g, k, s, control })
        }
        (None, None) => None,
        _ => bail!("--g and --k must be given together"),
    };
    let reading = match args.reading {
        Some(ReadingArg::Decision) => Reading::Decision,
        _ => Reading::Implementation,
    };
    let seed = seed_or_entropy(args.seed);

    let bytes = fs::read(&args.panel).with_context(|| format!("reading {}", args.panel.display()))?;
    let lag = group_time.map_or(1, |q| q.s);
    let schema = PanelSchema { lag: Some(lag), ..PanelSchema::default() };
    let mut panel = load_panel(BufReader::new(bytes.as_slice()), &schema)?;
    if args.no_decision {
        panel = panel.without_decision();
    }
    let run = |p: &didp::PanelDataset| match &group_time {
        Some(q) => group_time_att(p, q),
        None => did_classic_as(p, reading),
    };
    let mut report = run(&panel)?;
    if args.bootstrap > 0 {
        let cfg = BootstrapConfig { level: args.level, replicates: args.bootstrap, seed, exec: Execution::Parallel };
        report.bootstrap_ci = Some(bootstrap_ci(&panel, run, &cfg)?);
    }

    let mut t = Table::new(["field", "value"]);
    t.row(["estimand".to_string(), report.estimand.to_string()]);
    t.row(["estimate".to_string(), num(report.estimate)]);
    if let Some(ci) = &report.bootstrap_ci {
        t.row([format!("{:.0}% bootstrap CI", ci.level * 100.0), format!("[{}, {}]", num(ci.lo), num(ci.hi))]);
    }
    t.row(["functional".to_string(), report.functional.clone()]);
    t.row(["control group".to_string(), serde_json::to_value(report.control_group)?.as_str().unwrap_or("").into()]);
    t.row(["assumptions".to_string(), report.assumption_set.clone()]);
    for (cell, count) in &report.cells {
        t.row([format!("units with {cell}"), count.to_string()]);
    }
    for d in &report.diagnostics {
        t.row(["diagnostic".to_string(), d.clone()]);
    }
    let audit = audit_assumptions(&panel);
    let result = EstimateResult {
        panel: PanelInfo {
            path: args.panel.display().to_string(),
            sha256: file_hash(&bytes),
            n_units: panel.n_units(),
            n_periods: panel.n_periods(),
            has_decision: panel.has_decision(),
        },
        report,
        audit,
    };
    emit(&args.output, "estimate", seed, args, result, t.render())?;
    Ok(ExitCode::SUCCESS)
}

/// Every estimand the model's panel layout supports.
fn default_estimands(scm: &Scm) -> Result<Vec<EstimandKind>> {
    let layout = scm.panel_layout()?;
    let tau = layout.n_periods;
    if tau == 2 && layout.decision.iter().any(|&(t, _)| t == 1) {
        return Ok(vec![EstimandKind::AttA2, EstimandKind::AttP, EstimandKind::Psi]);
    }
    match scm.lag() {
        Some(s) if !layout.decision.is_empty() && s < tau => {
            Ok((1..=tau - s).flat_map(|g| (1..=tau).map(move |k| EstimandKind::AttPGt { g, k })).collect())
        }
        _ => bail!("model {} has no default estimands; pass --estimand", scm.name()),
    }
}

fn parse_estimand(text: &str, g: Option<usize>, k: Option<usize>) -> Result<EstimandKind> {
    let bare = text.trim().to_ascii_uppercase().replace('-', "_");
    let full = match (bare.as_str(), g, k) {
        ("ATT_P_GT" | "ATT_A_GT", Some(g), Some(k)) => format!("{bare}({g},{k})"),
        ("ATT_P_GT" | "ATT_A_GT", _, _) => bail!("{bare} needs --g and --k, or the form {bare}(g,k)"),
        _ => text.to_string(),
    };
    full.parse::<EstimandKind>().map_err(anyhow::Error::msg)
}

fn oracle(args: &OracleArgs) -> Result<ExitCode> {
    check_outputs(&args.output)?;
    let scm = args.model.load()?;
    let kinds = if args.estimand.is_empty() {
        default_estimands(&scm)?
    } else {
        args.estimand.iter().map(|e| parse_estimand(e, args.g, args.k)).collect::<Result<_>>()?
    };
    let seed = seed_or_entropy(args.seed);
    let base = McConfig::new(args.draws, seed);
    let values: Vec<OracleEstimand> = kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| oracle_estimand(&scm, kind, &base.child(i as u64)))
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(["estimand", "value", "mc_se", "95% interval", "draws", "acceptance", "condition"]);
    for v in &values {
        t.row([
            v.kind.to_string(),
            num(v.value),
            num(v.mc_se),
            format!("[{}, {}]", num(v.value - 1.96 * v.mc_se), num(v.value + 1.96 * v.mc_se)),
            v.n_draws.to_string(),
            num(v.n_draws as f64 / v.attempts.max(1) as f64),
            v.condition.clone(),
        ]);
    }
    #[derive(Serialize)]
    struct OracleResult {
        scm: String,
        scm_sha256: String,
        estimands: Vec<OracleEstimand>,
    }
    let table = format!("model {}\n{}", scm.name(), t.render());
    let result = OracleResult { scm: scm.name().into(), scm_sha256: model_hash(&scm), estimands: values };
    emit(&args.output, "oracle", seed, args, result, table)?;
    Ok(ExitCode::SUCCESS)
}

fn pass_label(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

fn verify(args: &VerifyArgs) -> Result<ExitCode> {
    check_outputs(&args.output)?;
    let claim: Claim = args.prop.parse().map_err(anyhow::Error::msg)?;
    let scm = args.model.load()?;
    let seed = seed_or_entropy(args.seed);
    let cfg = VerifyConfig {
        n_units: args.n,
        replications: args.replications,
        oracle_draws: args.oracle_draws,
        seed,
        sigmas: args.sigmas,
        exec: Execution::Parallel,
    };
    let report = verify_claim(claim, &scm, &cfg)?;

    let mut t = Table::new(["comparison", "target", "oracle", "estimator mean", "delta", "tolerance", "result"]);
    for c in report.comparisons.iter().chain(&report.supplementary) {
        t.row([
            c.label.clone(),
            c.target.clone(),
            num(c.target_value),
            num(c.estimator.mean),
            num(c.delta),
            num(c.tolerance),
            pass_label(c.pass).into(),
        ]);
    }
    let mut a = Table::new(["assumption", "required", "status", "items"]);
    for audit in &report.audits {
        let failed = audit.items.iter().filter(|i| !i.pass).count();
        a.row([
            audit.name.clone(),
            if audit.required { "yes" } else { "no" }.into(),
            serde_json::to_value(audit.status)?.as_str().unwrap_or("").into(),
            format!("{} checked, {} off", audit.items.len(), failed),
        ]);
    }
    let status = serde_json::to_value(report.status)?.as_str().unwrap_or("").to_string();
    let table = format!(
        "claim {} ({}): {}\nmodel {}\n\n{}\n{}\nstatus: {status}\n",
        claim.id(),
        claim,
        claim.statement(),
        scm.name(),
        t.render(),
        a.render()
    );
    let code = match report.status {
        VerifyStatus::Pass => 0,
        VerifyStatus::IdentityFails => 3,
        VerifyStatus::Vacuous => 4,
    };
    emit(&args.output, "verify", seed, args, report, table)?;
    Ok(ExitCode::from(code))
}

fn check_label(status: CheckStatus) -> &'static str {
    match status {
        CheckStatus::Pass => "pass",
        CheckStatus::Fail => "FAIL",
        CheckStatus::Inconclusive => "inconclusive",
    }
}

fn replicate_example(args: &ReplicateArgs) -> Result<ExitCode> {
    check_outputs(&args.output)?;
    if args.draws < 2 {
        bail!("--draws must be at least 2");
    }
    let seed = seed_or_entropy(args.seed);
    let report = replicate_cars_example(&McConfig::new(args.draws, seed), args.margin)?;
    let mut t = Table::new(["quantity", "kind", "source", "expected", "estimate", "mc_se", "95% interval", "check"]);
    for r in &report.rows {
        t.row([
            r.quantity.clone(),
            r.expression.clone(),
            r.source.clone(),
            num(r.expected),
            num(r.value),
            num(r.mc_se),
            format!("[{}, {}]", num(r.ci_lo), num(r.ci_hi)),
            check_label(r.status).into(),
        ]);
    }
    let failed = report.rows.iter().any(|r| r.status == CheckStatus::Fail);
    let table = format!("{} draws per quantity, margin {}\n{}", args.draws, args.margin, t.render());
    emit(&args.output, "replicate-example", seed, args, report, table)?;
    Ok(if failed { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn sweep(args: &SweepArgs) -> Result<ExitCode> {
    check_outputs(&args.output)?;
    if let Some(path) = &args.csv {
        check_output(path)?;
    }
    let family = match args.family {
        FamilyArg::TwoPeriod => SweepFamily::TwoPeriod,
        FamilyArg::Staggered => {
            SweepFamily::Staggered { tau: args.tau, s: args.s, params: StaggeredParams::default_for(args.tau) }
        }
    };
    let seed = seed_or_entropy(args.seed);
    let cfg = SweepConfig {
        alphas: args.alphas.clone(),
        n_units: args.n,
        replications: args.replications,
        oracle_draws: args.oracle_draws,
        seed,
        sigmas: args.sigmas,
        exec: Execution::Parallel,
    };
    let table = bias_sweep(&family, &cfg)?;
    if let Some(path) = &args.csv {
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut t =
        Table::new(["alpha", "g", "k", "control", "psi", "att", "did mean", "residual", "joint sigma", "within"]);
    let opt = |x: Option<usize>| x.map_or("-".to_string(), |v| v.to_string());
    for r in &table.rows {
        t.row([
            format!("{}", r.alpha),
            opt(r.g),
            opt(r.k),
            r.control.clone().unwrap_or_else(|| "-".into()),
            num(r.psi),
            num(r.att),
            num(r.did_mean),
            num(r.residual),
            num(r.joint_sigma),
            if r.within { "yes" } else { "NO" }.into(),
        ]);
    }
    let code = if table.all_within { ExitCode::SUCCESS } else { ExitCode::from(3) };
    let text = format!("largest residual: {:.3} joint sigma\n{}", table.max_residual_sigmas, t.render());
    emit(&args.output, "sweep", seed, args, table, text)?;
    Ok(code)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got '{raw}'"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().context("configuring the thread pool")?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Oracle(a) => oracle(a),
        Command::Verify(a) => verify(a),
        Command::ReplicateExample(a) => replicate_example(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
