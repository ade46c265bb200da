//! Command-line driver: bound evaluation, lattice counts, Monte Carlo
//! verification runs and the self-check.
//!
//! Exit status is 0 when every check passes, 1 on any FAIL verdict and 2
//! on usage or configuration errors.

pub mod checks;
pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ncf_core::bounds::{
    approx_error_bound, deviation_bound_s, deviation_bound_tilde, deviation_threshold, legacy_deviation_bound,
    normalized_bound, recommend_d, site_approx_bound, swap_filling_h_bound, swap_filling_s_bound,
    swap_marginal_h_bound, swap_marginal_s_bound, upsilon, upsilon_sup, BoundParams,
};
use ncf_core::exec::Backend;
use ncf_core::innovations::MomentOrder;
use ncf_core::lattice::{IndexSet, Orthotope};
use ncf_core::montecarlo::{format_number, write_csv, ExperimentKind, ExperimentPlan, RunReport};

use crate::config::{render_resolved, resolve_plans, ConfigFile, Overrides};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config: exit 2.
    Config(String),
    /// A computation failed: exit 2.
    Run(ncf_core::Error),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Run(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ncf_core::Error> for CliError {
    fn from(e: ncf_core::Error) -> Self {
        match e {
            ncf_core::Error::InvalidParameter(_)
            | ncf_core::Error::NonContractive { .. }
            | ncf_core::Error::Geometry(_)
            | ncf_core::Error::Dimension(_) => CliError::Config(e.to_string()),
            other => CliError::Run(other),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "ncf", version, about = "Non-causal random fields: bounds and Monte Carlo checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one closed-form quantity and print it as a CSV row.
    Bound(BoundArgs),
    /// Print the lattice counts n, n_B, n_B', n_d, N1, N2.
    Combinatorics(CombArgs),
    /// Per-site and statistic approximation error checks.
    VerifyApprox(RunArgs),
    /// Swap sensitivity checks.
    VerifySwap(RunArgs),
    /// Deviation probability checks.
    VerifyDeviation(RunArgs),
    /// Every experiment listed in the config.
    RunAll(RunArgs),
    /// Fast invariant suite.
    Selfcheck,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Experiment config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Root seed [config: seed; env: NCF_SEED].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replicates for every experiment [config: mc.replicates].
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Directory for results.csv, resolved_config.cfg and summary.txt [config: output.dir].
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// sequential, parallel or parallel:N [config: mc.backend].
    #[arg(long)]
    pub backend: Option<Backend>,
    /// Override any config key, e.g. --set model.beta=0.25.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Print experiment notes on stderr [config: output.verbose].
    #[arg(short, long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Quantity {
    Upsilon,
    UpsilonSup,
    SiteApprox,
    Approx,
    SwapMarginalH,
    SwapFillingH,
    SwapMarginalS,
    SwapFillingS,
    DeviationTilde,
    DeviationS,
    Threshold,
    Normalized,
    Legacy,
    RecommendD,
}

impl Quantity {
    fn name(self) -> &'static str {
        match self {
            Quantity::Upsilon => "upsilon",
            Quantity::UpsilonSup => "upsilon_sup",
            Quantity::SiteApprox => "site_approx",
            Quantity::Approx => "approx",
            Quantity::SwapMarginalH => "swap_marginal_h",
            Quantity::SwapFillingH => "swap_filling_h",
            Quantity::SwapMarginalS => "swap_marginal_s",
            Quantity::SwapFillingS => "swap_filling_s",
            Quantity::DeviationTilde => "deviation_tilde",
            Quantity::DeviationS => "deviation_s",
            Quantity::Threshold => "threshold",
            Quantity::Normalized => "normalized",
            Quantity::Legacy => "legacy",
            Quantity::RecommendD => "recommend_d",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[arg(long, value_enum)]
    pub quantity: Quantity,
    #[arg(long, default_value_t = 1)]
    pub kappa: u32,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub d: u64,
    /// Shell index for swap_marginal_h.
    #[arg(long, default_value_t = 0)]
    pub c: u64,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Moment label for approx rows; `inf` gives the almost-sure form.
    #[arg(long, default_value = "1")]
    pub m: String,
    /// Take geometry, ρ and V from this plan config; flags below override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub n_b: Option<u64>,
    #[arg(long)]
    pub n_bbar: Option<u64>,
    #[arg(long)]
    pub n_d: Option<u64>,
    #[arg(long)]
    pub n1: Option<u64>,
    #[arg(long)]
    pub n2: Option<u64>,
    #[arg(long)]
    pub v_m: Option<f64>,
    #[arg(long)]
    pub v_inf: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CombArgs {
    /// Plan config providing the model stencil, δ' and the index set.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model half-widths, comma separated.
    #[arg(long, default_value = "1")]
    pub delta: String,
    /// Statistic half-widths.
    #[arg(long, default_value = "1")]
    pub delta_bar: String,
    /// Interval index set {0, …, len − 1} (κ = 1).
    #[arg(long, default_value_t = 64)]
    pub index_len: usize,
    #[arg(long, default_value_t = 1)]
    pub d: u64,
}

/// Runs a parsed command, writing the summary or CSV to `out`.
pub fn dispatch<W: Write>(cli: Cli, out: &mut W) -> Result<bool, CliError> {
    match cli.command {
        Command::Bound(args) => bound_command(&args, out),
        Command::Combinatorics(args) => combinatorics_command(&args, out),
        Command::VerifyApprox(args) => run_command(
            &args,
            Some(&[ExperimentKind::ApproxDecay, ExperimentKind::StatApprox]),
            out,
        ),
        Command::VerifySwap(args) => run_command(&args, Some(&[ExperimentKind::Swap]), out),
        Command::VerifyDeviation(args) => run_command(&args, Some(&[ExperimentKind::Deviation]), out),
        Command::RunAll(args) => run_command(&args, None, out),
        Command::Selfcheck => Ok(selfcheck(&upsilon, out)),
    }
}

/// Parses `argv`, runs, and maps the outcome to an exit status.
pub fn main_with_args<I, T, W, E>(argv: I, out: &mut W, err: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
    W: Write,
    E: Write,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

/// Prints `PASS name` or `FAIL name` per invariant.
pub fn selfcheck<W: Write>(upsilon_fn: checks::UpsilonFn<'_>, out: &mut W) -> bool {
    let results = checks::selfcheck_with(upsilon_fn);
    for (name, ok) in &results {
        let _ = writeln!(out, "{} {name}", if *ok { "PASS" } else { "FAIL" });
    }
    results.iter().all(|r| r.1)
}

fn parse_widths(s: &str) -> Result<Vec<u32>, CliError> {
    s.split(',')
        .map(|x| x.trim().parse::<u32>().map_err(|e| CliError::Config(format!("bad half-width '{x}': {e}"))))
        .collect()
}

fn plan_from_optional_config(path: Option<&Path>) -> Result<Option<ExperimentPlan>, CliError> {
    let Some(path) = path else {
        return Ok(None);
    };
    let cfg = ConfigFile::load(path)?;
    let mut plans = resolve_plans(&cfg, &Overrides::default())?;
    if plans.len() != 1 {
        return Err(CliError::Config("expected a single-plan config".into()));
    }
    Ok(plans.pop())
}

fn geometry(plan: &ExperimentPlan) -> Result<(IndexSet, Orthotope, Orthotope), CliError> {
    let model = plan.model.build()?;
    Ok((
        plan.index.build()?,
        model.neighborhood().clone(),
        Orthotope::new(plan.statistic_delta.clone())?,
    ))
}

fn bound_params(args: &BoundArgs, m: MomentOrder) -> Result<BoundParams, CliError> {
    let plan = plan_from_optional_config(args.config.as_deref())?;
    let mut p = match &plan {
        Some(plan) => {
            let (index, model_o, stat_o) = geometry(plan)?;
            let rho = plan.model.build()?.rho();
            let dim = plan.model.dim();
            let v_inf = plan.law.v_infinity(dim).unwrap_or(f64::NAN);
            let v_m = plan.law.v_m(m, dim).unwrap_or(f64::NAN);
            BoundParams::from_geometry(&index, &model_o, &stat_o, rho, v_m, v_inf, args.d)?
        }
        None => BoundParams {
            n: 1,
            n_b: 3,
            n_bbar: 3,
            n_d: 2 * args.d + 1,
            n1: 3,
            n2: 2 * args.d + 3,
            kappa: args.kappa,
            rho: f64::NAN,
            v_m: 1.0,
            v_inf: 1.0,
            d: args.d,
        },
    };
    macro_rules! set {
        ($($field:ident),*) => {$( if let Some(v) = args.$field { p.$field = v; } )*};
    }
    set!(n, n_b, n_bbar, n_d, n1, n2, v_m, v_inf, rho);
    p.validate()?;
    Ok(p)
}

fn parse_m(s: &str) -> Result<MomentOrder, CliError> {
    match s.trim() {
        "inf" => Ok(MomentOrder::Infinite),
        x => x
            .parse::<u32>()
            .ok()
            .filter(|&m| m > 0)
            .map(MomentOrder::Finite)
            .ok_or_else(|| CliError::Config(format!("bad moment order '{s}'"))),
    }
}

fn bound_command<W: Write>(args: &BoundArgs, out: &mut W) -> Result<bool, CliError> {
    let q = args.quantity;
    let m = parse_m(&args.m)?;
    let need_rho = || args.rho.ok_or_else(|| CliError::Config("--rho is required".into()));
    let need_eps = || args.epsilon.ok_or_else(|| CliError::Config("--epsilon is required".into()));
    // (value, clamped value for probabilities)
    let (value, clamped): (f64, Option<f64>) = match q {
        Quantity::Upsilon => (upsilon(args.kappa, need_rho()?, args.d)?, None),
        Quantity::UpsilonSup => (upsilon_sup(args.kappa, need_rho()?)?, None),
        Quantity::RecommendD => {
            let n = args.n.ok_or_else(|| CliError::Config("--n is required".into()))?;
            (recommend_d(n as f64, args.kappa)? as f64, None)
        }
        Quantity::SiteApprox => {
            let p = bound_params(args, m)?;
            (site_approx_bound(p.rho, args.d, p.v_m), None)
        }
        Quantity::SwapMarginalH => {
            let p = bound_params(args, m)?;
            (swap_marginal_h_bound(p.rho, args.c, p.v_m), None)
        }
        Quantity::SwapFillingH => {
            let p = bound_params(args, m)?;
            (swap_filling_h_bound(p.rho, args.d, p.v_m), None)
        }
        Quantity::Approx => {
            let p = bound_params(args, m)?;
            (approx_error_bound(&p, m == MomentOrder::Infinite).value, None)
        }
        Quantity::SwapMarginalS => {
            let p = bound_params(args, m)?;
            (swap_marginal_s_bound(&p, p.v_m)?, None)
        }
        Quantity::SwapFillingS => {
            let p = bound_params(args, m)?;
            (swap_filling_s_bound(&p, p.v_m), None)
        }
        Quantity::Threshold => (deviation_threshold(&bound_params(args, m)?), None),
        Quantity::DeviationTilde | Quantity::DeviationS | Quantity::Normalized | Quantity::Legacy => {
            let p = bound_params(args, m)?;
            let eps = need_eps()?;
            let r = match q {
                Quantity::DeviationTilde => deviation_bound_tilde(eps, &p)?,
                Quantity::DeviationS => deviation_bound_s(eps, &p)?,
                Quantity::Normalized => normalized_bound(eps, &p)?,
                _ => legacy_deviation_bound(eps, &p)?,
            };
            (r.value, r.clamped)
        }
    };
    let m_col = matches!(q, Quantity::SiteApprox | Quantity::Approx | Quantity::SwapMarginalH | Quantity::SwapFillingH
        | Quantity::SwapMarginalS | Quantity::SwapFillingS)
    .then(|| m.to_string())
    .unwrap_or_default();
    writeln!(out, "{}", ncf_core::montecarlo::CSV_HEADER).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(
        out,
        "{},{},{m_col},{},,,{},{},",
        q.name(),
        args.d,
        args.epsilon.map(format_number).unwrap_or_default(),
        format_number(value),
        clamped.map(format_number).unwrap_or_default(),
    )
    .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(true)
}

fn combinatorics_command<W: Write>(args: &CombArgs, out: &mut W) -> Result<bool, CliError> {
    let (index, model_o, stat_o) = match plan_from_optional_config(args.config.as_deref())? {
        Some(plan) => geometry(&plan)?,
        None => (
            IndexSet::interval(0, args.index_len)?,
            Orthotope::new(parse_widths(&args.delta)?)?,
            Orthotope::new(parse_widths(&args.delta_bar)?)?,
        ),
    };
    let p = BoundParams::from_geometry(&index, &model_o, &stat_o, 0.5, 1.0, 1.0, args.d)?;
    let chain = p.n <= p.n1 && p.n1 <= p.n * p.n_bbar && p.n1 <= p.n2 && p.n2 <= p.n1 * p.n_d;
    let w = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(out, "{}", ncf_core::montecarlo::CSV_HEADER).map_err(w)?;
    for (name, v) in [
        ("n", p.n),
        ("n_b", p.n_b),
        ("n_bbar", p.n_bbar),
        ("n_d", p.n_d),
        ("N1", p.n1),
        ("N2", p.n2),
    ] {
        writeln!(out, "{name},{},,,{v},,,,{chain}", args.d).map_err(w)?;
    }
    Ok(chain)
}

/// Verdict lines for stdout, and the same lines with reasons for summary.txt.
fn summary_lines(reports: &[RunReport], multi: bool) -> (Vec<String>, Vec<String>) {
    let (mut short, mut long) = (Vec::new(), Vec::new());
    for report in reports {
        let prefix = |name: &str| {
            if multi {
                format!("{}/{name}", report.plan)
            } else {
                name.to_string()
            }
        };
        for r in &report.results {
            let line = format!("{} {}", if r.pass() { "PASS" } else { "FAIL" }, prefix(&r.name));
            short.push(line.clone());
            long.push(line);
        }
        for (name, why) in &report.skipped {
            short.push(format!("SKIP {}", prefix(name)));
            long.push(format!("SKIP {}: {why}", prefix(name)));
        }
        for w in &report.warnings {
            let (name, why) = w.split_once(": ").unwrap_or((w, ""));
            short.push(format!("WARN {}: few replicates, standard errors not meaningful", prefix(name)));
            long.push(format!("WARN {}: {why}", prefix(name)));
        }
    }
    (short, long)
}

fn run_command<W: Write>(args: &RunArgs, only: Option<&[ExperimentKind]>, out: &mut W) -> Result<bool, CliError> {
    let mut cfg = ConfigFile::load(&args.config)?;
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v);
    }
    let env_seed = match std::env::var("NCF_SEED") {
        Ok(s) => Some(
            s.trim()
                .parse::<u64>()
                .map_err(|e| CliError::Config(format!("NCF_SEED: {e}")))?,
        ),
        Err(_) => None,
    };
    let overrides = Overrides {
        seed: args.seed,
        replicates: args.replicates,
        backend: args.backend,
        env_seed,
    };
    let mut plans = resolve_plans(&cfg, &overrides)?;
    if let Some(kinds) = only {
        for plan in &mut plans {
            plan.experiments = kinds.to_vec();
        }
    }
    let output_dir = args
        .output_dir
        .clone()
        .or_else(|| cfg.get("output.dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ncf-output"));
    let verbose = args.verbose || cfg.get("output.verbose").is_some_and(|v| v == "true");

    let mut reports = Vec::new();
    for plan in &plans {
        reports.push(run_plan(plan)?);
    }
    let multi = plans.len() > 1;

    std::fs::create_dir_all(&output_dir).map_err(|e| io_err(&output_dir, e))?;
    let csv_path = output_dir.join("results.csv");
    let mut csv = Vec::new();
    write_csv(
        &mut csv,
        reports
            .iter()
            .flat_map(|r| r.rows().map(move |row| (row, multi.then_some(r.plan.as_str())))),
    )
    .map_err(|e| io_err(&csv_path, e))?;
    std::fs::write(&csv_path, csv).map_err(|e| io_err(&csv_path, e))?;
    let cfg_path = output_dir.join("resolved_config.cfg");
    std::fs::write(&cfg_path, render_resolved(&plans, &output_dir)).map_err(|e| io_err(&cfg_path, e))?;

    let (lines, detailed) = summary_lines(&reports, multi);
    let mut summary = detailed.join("\n");
    summary.push('\n');
    for report in &reports {
        for r in &report.results {
            for note in &r.notes {
                summary.push_str(&format!("note {}/{}: {note}\n", report.plan, r.name));
                if verbose {
                    eprintln!("{}/{}: {note}", report.plan, r.name);
                }
            }
        }
    }
    let summary_path = output_dir.join("summary.txt");
    std::fs::write(&summary_path, &summary).map_err(|e| io_err(&summary_path, e))?;
    if verbose {
        for line in detailed.iter().filter(|l| !l.starts_with("PASS") && !l.starts_with("FAIL")) {
            eprintln!("{line}");
        }
    }
    for line in &lines {
        writeln!(out, "{line}").map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(reports.iter().all(RunReport::pass))
}

fn run_plan(plan: &ExperimentPlan) -> Result<RunReport, CliError> {
    ncf_core::montecarlo::run_all(plan).map_err(CliError::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = main_with_args(std::iter::once("ncf").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn upsilon_row() {
        let (code, out, _) = run(&["bound", "--kappa", "1", "--rho", "0.5", "--d", "10", "--quantity", "upsilon"]);
        assert_eq!(code, 0);
        let row = out.lines().nth(1).unwrap();
        assert!(row.starts_with("upsilon,10,,,,,2.4412"), "{row}");
    }

    #[test]
    fn deviation_row_reports_raw_and_clamped() {
        let (code, out, _) = run(&[
            "bound", "--quantity", "deviation-tilde", "--rho", "0.4", "--d", "4", "--epsilon", "1",
            "--n", "64", "--n1", "66", "--n2", "72", "--n-d", "9", "--v-inf", "6",
        ]);
        assert_eq!(code, 0);
        let fields: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(fields[0], "deviation_tilde");
        let raw: f64 = fields[6].parse().unwrap();
        let clamped: f64 = fields[7].parse().unwrap();
        assert_eq!(clamped, raw.min(1.0));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(&["frobnicate"]).0, 2);
        assert_eq!(run(&["bound", "--quantity", "upsilon"]).0, 2);
        let (code, _, err) = run(&["run-all", "--config", "/nonexistent/missing.cfg"]);
        assert_eq!(code, 2);
        assert!(err.contains("config not found"));
        assert_eq!(run(&["--help"]).0, 0);
    }

    #[test]
    fn combinatorics_counts() {
        let (code, out, _) = run(&["combinatorics", "--index-len", "64", "--d", "4"]);
        assert_eq!(code, 0);
        assert!(out.contains("\nN1,4,,,66,"));
        assert!(out.contains("\nN2,4,,,72,"));
        assert!(out.contains("\nn_d,4,,,9,"));
    }

    #[test]
    fn selfcheck_passes_and_is_stable() {
        let (a, out_a, _) = run(&["selfcheck"]);
        let (b, out_b, _) = run(&["selfcheck"]);
        assert_eq!((a, b), (0, 0));
        assert_eq!(out_a, out_b);
        assert!(out_a.lines().all(|l| l.starts_with("PASS ")));
    }

    #[test]
    fn corrupted_upsilon_fails_selfcheck() {
        let broken = |k: u32, rho: f64, d: u64| -> ncf_core::Result<f64> {
            upsilon(k, rho, d).map(|v| if d > 2 { v * 0.1 } else { v })
        };
        let mut out = Vec::new();
        assert!(!selfcheck(&broken, &mut out));
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("FAIL upsilon_dominance"));
    }
}
