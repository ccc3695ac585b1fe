//! `ldpmin`: simulations, sweeps, rate fits and the networked demo.
//!
//! Exit codes: 0 success, 2 usage, 3 runtime or protocol failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod fit;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ldp_min::datagen::{fixed_cohort, ingest_csv_cohort, iid_cohort, unscale, Cohort, FatModel};
use ldp_min::harness::{compare_baseline, guidelines_for, run_experiment, ExperimentSpec, Mechanism};
use ldp_min::ldp::PrivacyBudget;
use ldp_min::net::{self, ServerOptions};
use ldp_min::params::ParamMode;
use ldp_min::protocol::{
    baseline_min, run_nonprivate_min, run_private_max, run_private_min, ProtocolConfig,
};
use ldp_min::report;
use ldp_min::rng::SeededStream;

#[derive(Parser)]
#[command(name = "ldpmin", version, about = "Locally private minimum/maximum estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One protocol run; writes the transcript as JSON lines.
    Simulate(SimulateArgs),
    /// Full sweep from a config file; writes the result CSV.
    Experiment(ExperimentArgs),
    /// Binary search vs. the Laplace baseline, side by side.
    Compare(CompareArgs),
    /// Fit ln err = ln C + B ln ln n − A ln n to a result CSV.
    Fit(fit::FitArgs),
    /// Aggregator for a networked session.
    Serve(ServeArgs),
    /// One user in a networked session.
    Client(ClientArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Uniform,
    Beta,
    Truncnormal,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingKind {
    Fixed,
    Iid,
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of users.
    #[arg(long)]
    n: usize,
    /// Total privacy budget; `inf` disables noise.
    #[arg(long, default_value = "1", value_parser = parse_epsilon)]
    epsilon: f64,
    /// Search depth L. Required with --gamma.
    #[arg(long)]
    depth: Option<usize>,
    /// Decision threshold.
    #[arg(long, conflicts_with = "param_mode")]
    gamma: Option<f64>,
    /// lower, unknown, known:<alpha0> or unknown:<scale>.
    #[arg(long)]
    param_mode: Option<String>,
    #[arg(long, value_enum, default_value = "uniform")]
    model: ModelKind,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Support width for uniform/beta; truncation width for truncnormal.
    #[arg(long, default_value_t = 2.0)]
    delta: f64,
    /// Truncnormal mean, as an offset from x_min.
    #[arg(long, default_value_t = 0.0)]
    mu_offset: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    x_min: f64,
    #[arg(long, value_enum, default_value = "fixed")]
    setting: SettingKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Explicit comma-separated values in [-1, 1]; overrides the model.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "input")]
    values: Option<Vec<f64>>,
    /// One value per line, rescaled from [--lo, --hi].
    #[arg(long, requires_all = ["lo", "hi"])]
    input: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<f64>,
    /// Estimate the maximum instead.
    #[arg(long)]
    max: bool,
    /// binary_search, nonprivate or laplace.
    #[arg(long, default_value = "binary_search")]
    mechanism: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Guideline curves (epsilon, n, guideline_value).
    #[arg(long)]
    guideline_out: Option<PathBuf>,
    /// Allow N up to 2^20.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args)]
struct CompareArgs {
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    bind: String,
    #[arg(long)]
    clients: usize,
    #[arg(long, value_parser = parse_epsilon)]
    epsilon: f64,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, conflicts_with = "param_mode")]
    gamma: Option<f64>,
    #[arg(long)]
    param_mode: Option<String>,
    /// Seconds allowed for the handshake and for each round.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    /// Transcript destination (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClientArgs {
    #[arg(long)]
    connect: String,
    #[arg(long, allow_hyphen_values = true)]
    value: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    id: Option<String>,
}

pub(crate) enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ldp_min::Error> for Failure {
    fn from(e: ldp_min::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub(crate) type CliResult<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn parse_epsilon(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = match s {
        "inf" | "infinity" => f64::INFINITY,
        _ => s.parse().map_err(|_| format!("not a number: {s}"))?,
    };
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("epsilon must be positive, got {s}"))
    }
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Depth and γ from explicit flags or a parameter schedule. With ε = ∞ and no
/// γ, uses 1/(2N), which makes the private search replay the plain one.
fn resolve_protocol(
    n: usize,
    budget: PrivacyBudget,
    depth: Option<usize>,
    gamma: Option<f64>,
    param_mode: Option<&str>,
) -> CliResult<ProtocolConfig> {
    let (depth, gamma) = match (gamma, param_mode) {
        (Some(g), _) => match depth {
            Some(d) => (d, g),
            None => return usage("--gamma needs --depth"),
        },
        (None, None) if budget.is_unbounded() => {
            let d = match depth {
                Some(d) => d,
                None => ParamMode::LowerAlphaPreset
                    .schedule(n)
                    .map_err(|e| Failure::Usage(format!("{e}; pass --depth")))?
                    .0,
            };
            (d, 0.5 / n as f64)
        }
        (None, mode) => {
            let mode = ParamMode::parse(mode.unwrap_or("lower"))
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let choice = mode
                .choose(n, budget)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            (depth.unwrap_or(choice.depth), choice.gamma)
        }
    };
    ProtocolConfig::new(budget, depth, gamma, n).map_err(|e| Failure::Usage(e.to_string()))
}

fn simulate_cohort(a: &SimulateArgs) -> CliResult<(Cohort, Option<(f64, f64)>)> {
    if let Some(values) = &a.values {
        if values.len() != a.n {
            return usage(format!("--values has {} entries but --n is {}", values.len(), a.n));
        }
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return usage(format!("value {v} outside [-1, 1]"));
        }
        return Ok((Cohort::from_values(values.clone())?, None));
    }
    if let Some(path) = &a.input {
        let (lo, hi) = (a.lo.unwrap_or(0.0), a.hi.unwrap_or(0.0));
        let c = ingest_csv_cohort(path, lo, hi)?;
        if c.len() != a.n {
            return usage(format!("{} holds {} values but --n is {}", path.display(), c.len(), a.n));
        }
        return Ok((c, Some((lo, hi))));
    }
    let model = match a.model {
        ModelKind::Uniform => FatModel::uniform(a.x_min, a.delta),
        ModelKind::Beta => FatModel::beta_scaled(a.alpha, a.beta, a.x_min, a.delta),
        ModelKind::Truncnormal => FatModel::trunc_normal(
            a.x_min + a.mu_offset,
            a.sigma,
            a.x_min,
            (a.x_min + a.delta).min(1.0),
        ),
    }
    .map_err(|e| Failure::Usage(format!("invalid model parameters: {e}")))?;
    let cohort = match a.setting {
        // A single fixed-setting user sits at F*(0) = x_min.
        SettingKind::Fixed if a.n == 1 => Cohort::from_values(vec![model.x_min()])?,
        SettingKind::Fixed => fixed_cohort(&model, a.n)?,
        SettingKind::Iid => {
            let mut s = SeededStream::derive(a.seed, &[0xc0]);
            iid_cohort(&model, a.n, &mut s)?
        }
    };
    Ok((cohort, None))
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    if a.n == 0 {
        return usage("--n must be at least 1");
    }
    let mechanism = Mechanism::parse(&a.mechanism).map_err(|e| Failure::Usage(e.to_string()))?;
    let budget = PrivacyBudget::from_f64(a.epsilon).map_err(|e| Failure::Usage(e.to_string()))?;
    let (cohort, range) = simulate_cohort(&a)?;
    let mut rng = SeededStream::new(a.seed);
    let mut out = output(a.out.as_deref())?;
    let estimate = match mechanism {
        Mechanism::LaplaceBaseline => {
            let est = if a.max {
                -baseline_min(&cohort.negated(), budget, &mut rng)?
            } else {
                baseline_min(&cohort, budget, &mut rng)?
            };
            writeln!(out, "{{\"estimate\":{}}}", json_real(est))?;
            est
        }
        Mechanism::NonPrivate => {
            let depth = match a.depth {
                Some(d) => d,
                None => return usage("--mechanism nonprivate needs --depth"),
            };
            let t = if a.max {
                let mut t = run_nonprivate_min(&cohort.negated(), depth)?;
                t.estimate = -t.estimate;
                for r in &mut t.rounds {
                    r.tau = -r.tau;
                }
                t.reflected = true;
                t
            } else {
                run_nonprivate_min(&cohort, depth)?
            };
            report::write_transcript_jsonl(&mut out, &t)?;
            t.estimate
        }
        Mechanism::BinarySearch => {
            let cfg = resolve_protocol(a.n, budget, a.depth, a.gamma, a.param_mode.as_deref())?;
            let t = if a.max {
                run_private_max(&cohort, &cfg, &mut rng)?
            } else {
                run_private_min(&cohort, &cfg, &mut rng)?
            };
            report::write_transcript_jsonl(&mut out, &t)?;
            t.estimate
        }
    };
    out.flush()?;
    if let Some((lo, hi)) = range {
        eprintln!("estimate in input units: {}", report::fmt_real(unscale(estimate, lo, hi)));
    }
    Ok(())
}

fn json_real(v: f64) -> String {
    if v.is_finite() {
        report::fmt_real(v)
    } else {
        format!("\"{}\"", report::fmt_real(v))
    }
}

fn load_spec(path: &Path) -> CliResult<ExperimentSpec> {
    ExperimentSpec::from_config_file(path).map_err(|e| Failure::Usage(e.to_string()))
}

fn write_metadata(spec: &ExperimentSpec, out: Option<&Path>) -> CliResult<()> {
    let meta = format!(
        "{{\"worst_case\":\"max over x_min of per-x_min mean\",\"quantiles\":\"type 7, taken at the worst x_min\",\"x_min_grid\":[{}],\"reps\":{},\"seed\":{},\"setting\":\"{:?}\"}}",
        spec.xmin_grid.iter().map(|x| report::fmt_real(*x)).collect::<Vec<_>>().join(","),
        spec.reps,
        spec.seed,
        spec.setting,
    );
    match out {
        Some(p) => {
            let mut side = p.as_os_str().to_owned();
            side.push(".meta.json");
            std::fs::write(PathBuf::from(side), meta + "\n")?;
        }
        None => eprintln!("{meta}"),
    }
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> CliResult<()> {
    let mut spec = load_spec(&a.config)?;
    spec.full_scale |= a.full_scale;
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let result = run_experiment(&spec)?;
    for (x, why) in &result.infeasible {
        eprintln!("skipped x_min = {}: {why}", report::fmt_real(*x));
    }
    let mut out = output(a.out.as_deref())?;
    report::write_results_csv(&mut out, &result)?;
    out.flush()?;
    write_metadata(&spec, a.out.as_deref())?;
    if let Some(g) = &a.guideline_out {
        let rows = guidelines_for(&spec, &result);
        let mut w = BufWriter::new(File::create(g)?);
        report::write_guideline_csv(&mut w, &rows)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> CliResult<()> {
    let spec = load_spec(&a.config)?;
    let rows = compare_baseline(&spec)?;
    let mut out = output(a.out.as_deref())?;
    report::write_comparison_csv(&mut out, &rows)?;
    out.flush()?;
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> CliResult<()> {
    if a.clients == 0 {
        return usage("--clients must be at least 1");
    }
    if !(a.timeout > 0.0 && a.timeout.is_finite()) {
        return usage("--timeout must be positive");
    }
    let budget = PrivacyBudget::from_f64(a.epsilon).map_err(|e| Failure::Usage(e.to_string()))?;
    let cfg = resolve_protocol(a.clients, budget, a.depth, a.gamma, a.param_mode.as_deref())?;
    let options = ServerOptions {
        round_timeout: Duration::from_secs_f64(a.timeout),
        ..ServerOptions::default()
    };
    let server = net::Server::bind(a.bind.as_str(), cfg, options)?;
    eprintln!("listening on {}", server.local_addr()?);
    let outcome = server.run()?;
    println!("RESULT {}", report::fmt_real(outcome.transcript.estimate));
    if let Some(p) = &a.out {
        let mut w = BufWriter::new(File::create(p)?);
        report::write_transcript_jsonl(&mut w, &outcome.transcript)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_client(a: ClientArgs) -> CliResult<()> {
    if !(-1.0..=1.0).contains(&a.value) {
        return usage(format!("--value {} outside [-1, 1]", a.value));
    }
    let id = a.id.unwrap_or_else(|| format!("client-{}", a.seed));
    let estimate = net::client(a.connect.as_str(), a.value, a.seed, &id)?;
    println!("RESULT {}", report::fmt_real(estimate));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Fit(a) => fit::cmd_fit(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Client(a) => cmd_client(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
