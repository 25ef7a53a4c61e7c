//! `motionavg`: robust motion averaging from the command line.
//!
//! Exit status: 0 on success (for `average`, convergence), 2 when `average`
//! stops at the iteration cap, 1 on any error.

mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use motionavg::bench::{evaluate, format_table, run_trial, sweep_alpha, BenchError, ScenarioSpec};
use motionavg::io::{write_g2o, write_json, Format};
use motionavg::{build_graph, solve, spanning_tree_init, GaugeFix, GlobalMotionSet, Mode, MotionGraph, SolverConfig};

use files::{emit, ensure_dir, load, load_globals, resolve_format, FileFormat, Staged};

#[derive(Debug, Parser)]
#[command(name = "motionavg", version, about = "Robust SE(3) motion averaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate global motions from a graph of relative motions.
    Average(AverageArgs),
    /// Generate a synthetic scene: graph, ground truth and outlier labels.
    Synth(SynthArgs),
    /// Run the robust solver on one scene for several kernel multipliers.
    Sweep(SweepArgs),
    /// Compare estimated global motions against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Mcc,
    Plain,
    FixedWeights,
}

impl From<Method> for Mode {
    fn from(m: Method) -> Self {
        match m {
            Method::Mcc => Mode::Mcc,
            Method::Plain => Mode::Plain,
            Method::FixedWeights => Mode::FixedWeights,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Gauge {
    Anchored,
    DiscardReference,
}

impl From<Gauge> for GaugeFix {
    fn from(g: Gauge) -> Self {
        match g {
            Gauge::Anchored => GaugeFix::Anchored,
            Gauge::DiscardReference => GaugeFix::DiscardReference,
        }
    }
}

fn default_solver() -> SolverConfig {
    SolverConfig::default()
}

fn default_scenario() -> ScenarioSpec {
    ScenarioSpec::default()
}

#[derive(Debug, Args)]
struct SolverFlags {
    /// Edge weighting scheme.
    #[arg(long, value_enum, default_value_t = Method::Mcc)]
    method: Method,
    /// Kernel width multiplier (width = alpha * mean residual).
    #[arg(long, default_value_t = default_solver().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = default_solver().max_iterations)]
    max_iterations: usize,
    /// Stop once the largest applied twist entry is below this.
    #[arg(long, default_value_t = default_solver().change_tolerance)]
    tolerance: f64,
    /// Smallest kernel width.
    #[arg(long, default_value_t = default_solver().sigma_floor)]
    sigma_floor: f64,
    /// How the reference view is held fixed.
    #[arg(long, value_enum, default_value_t = Gauge::Anchored)]
    gauge: Gauge,
}

impl SolverFlags {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            alpha: self.alpha,
            max_iterations: self.max_iterations,
            change_tolerance: self.tolerance,
            sigma_floor: self.sigma_floor,
            mode: self.method.into(),
            gauge: self.gauge.into(),
        }
    }
}

#[derive(Debug, Args)]
struct ScenarioFlags {
    #[arg(long, default_value_t = default_scenario().n_views)]
    views: usize,
    /// Fraction of view pairs joined by an edge.
    #[arg(long, default_value_t = default_scenario().edge_density)]
    density: f64,
    /// Per-axis rotational noise, degrees.
    #[arg(long, default_value_t = default_scenario().rot_noise_deg)]
    rot_noise: f64,
    /// Per-axis translational noise.
    #[arg(long, default_value_t = default_scenario().trans_noise)]
    trans_noise: f64,
    /// Fraction of edges replaced by random motions.
    #[arg(long, default_value_t = default_scenario().outlier_fraction)]
    outliers: f64,
    #[arg(long, default_value_t = default_scenario().seed)]
    seed: u64,
    /// Norm of the random twist added to each initial view.
    #[arg(long, default_value_t = default_scenario().init_perturbation)]
    init_perturbation: f64,
}

impl ScenarioFlags {
    fn spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            n_views: self.views,
            edge_density: self.density,
            rot_noise_deg: self.rot_noise,
            trans_noise: self.trans_noise,
            outlier_fraction: self.outliers,
            seed: self.seed,
            init_perturbation: self.init_perturbation,
        }
    }
}

#[derive(Debug, Args)]
struct AverageArgs {
    /// Graph file (.g2o or .json).
    input: PathBuf,
    /// Initial global motions; defaults to the input's vertices, else spanning-tree chaining.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Format of the input files, overriding the extension.
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
    /// Where to write the estimated globals; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of --out, overriding the extension.
    #[arg(long, value_enum)]
    out_format: Option<FileFormat>,
    /// Where to write the solver report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FileFormat::G2o)]
    format: FileFormat,
    #[command(flatten)]
    scenario: ScenarioFlags,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated kernel width multipliers.
    #[arg(long, default_value = "0.4,0.7,1.0,1.5,2.0")]
    alphas: String,
    /// Also run classical averaging on the same scene.
    #[arg(long)]
    with_plain: bool,
    /// Record wall-clock runtimes (makes the table non-reproducible).
    #[arg(long)]
    timing: bool,
    /// Table destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    scenario: ScenarioFlags,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Debug, Args)]
struct EvalArgs {
    estimate: PathBuf,
    truth: PathBuf,
    /// Format of both files, overriding the extensions.
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
}

fn write_globals(format: Format, graph: &MotionGraph, globals: &GlobalMotionSet) -> String {
    match format {
        Format::G2o => write_g2o(graph, Some(globals)),
        Format::Json => write_json(graph, Some(globals), None),
    }
}

fn cmd_average(args: &AverageArgs) -> Result<ExitCode> {
    let cfg = args.solver.config();
    let input = load(&args.input, resolve_format(&args.input, args.format)?)?;
    let init = match (&args.init, input.globals) {
        (Some(path), _) => load_globals(path, args.format)?,
        (None, Some(globals)) => globals,
        (None, None) => spanning_tree_init(&input.graph)?,
    };
    let (globals, report) = solve(&input.graph, &init, &cfg)?;

    let mut staged = Staged::default();
    let doc = match &args.out {
        Some(path) => {
            let format = match args.out_format {
                Some(f) => f.into(),
                None => resolve_format(path, None)?,
            };
            staged.add(path, &write_globals(format, &input.graph, &globals))?;
            None
        }
        None => Some(write_json(&input.graph, Some(&globals), Some(&report))),
    };
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&report)? + "\n";
        staged.add(path, &text)?;
    }
    staged.commit()?;
    if let Some(doc) = doc {
        emit(None, &doc)?;
    }

    eprintln!(
        "{} after {} iterations, residual error {:e}",
        if report.converged() { "converged" } else { "iteration cap reached" },
        report.iterations_run,
        report.final_residual_error
    );
    Ok(if report.converged() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_synth(args: &SynthArgs) -> Result<ExitCode> {
    let spec = args.scenario.spec();
    let scene = motionavg::bench::build_scene(&spec)?;
    let format: Format = args.format.into();
    let ext = args.format.extension();
    let no_edges = build_graph(spec.n_views, Vec::new())?;

    ensure_dir(&args.out)?;
    let mut staged = Staged::default();
    let graph_text = match format {
        Format::G2o => write_g2o(&scene.graph, None),
        Format::Json => write_json(&scene.graph, None, None),
    };
    staged.add(&args.out.join(format!("graph.{ext}")), &graph_text)?;
    staged.add(
        &args.out.join(format!("truth.{ext}")),
        &write_globals(format, &no_edges, &scene.truth),
    )?;
    if spec.init_perturbation > 0.0 {
        staged.add(
            &args.out.join(format!("init.{ext}")),
            &write_globals(format, &no_edges, &scene.init),
        )?;
    }
    let labels: String = scene.outliers.iter().map(|h| format!("{h}\n")).collect();
    staged.add(&args.out.join("outliers.txt"), &labels)?;
    staged.commit()?;
    Ok(ExitCode::SUCCESS)
}

fn parse_alphas(list: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for token in list.split(',') {
        let token = token.trim();
        match token.parse::<f64>() {
            Ok(a) if a > 0.0 && a.is_finite() => out.push(a),
            _ => bail!("invalid alpha {token:?} in --alphas; expected positive numbers separated by commas"),
        }
    }
    Ok(out)
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode> {
    let alphas = parse_alphas(&args.alphas)?;
    let spec = args.scenario.spec();
    let cfg = args.solver.config();
    let mut rows: Vec<_> = sweep_alpha(&spec, &alphas, &cfg)?
        .iter()
        .map(|r| r.row(spec.seed))
        .collect();
    if args.with_plain {
        let trial = run_trial(&spec, &cfg, &[Mode::Plain])?;
        rows.push(trial.runs[0].row(spec.seed));
    }
    emit(args.out.as_deref(), &format_table(&spec, &rows, args.timing))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: &EvalArgs) -> Result<ExitCode> {
    let est = load_globals(&args.estimate, args.format)?;
    let truth = load_globals(&args.truth, args.format)?;
    let result = evaluate(&est, &truth).context("cannot compare the two files")?;
    emit(None, &(serde_json::to_string_pretty(&result)? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Average(a) => cmd_average(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            // scenario validation failures read better without the chain
            if let Some(BenchError::InvalidSpec(msg)) = e.downcast_ref::<BenchError>() {
                eprintln!("error: {msg}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use std::path::Path;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn alpha_lists() {
        assert_eq!(parse_alphas("1.0").unwrap(), vec![1.0]);
        assert_eq!(parse_alphas("0.4, 0.7,2").unwrap(), vec![0.4, 0.7, 2.0]);
        let err = parse_alphas("0.4,abc,1").unwrap_err().to_string();
        assert!(err.contains("\"abc\""), "{err}");
        assert!(parse_alphas("0.4,-1").is_err());
        assert!(parse_alphas("").is_err());
    }

    #[test]
    fn unknown_extension_needs_a_format() {
        assert!(resolve_format(Path::new("x.txt"), None).is_err());
        assert_eq!(resolve_format(Path::new("x.txt"), Some(FileFormat::Json)).unwrap(), Format::Json);
    }
}
