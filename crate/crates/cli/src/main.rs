//! `cellbridge`: runs simulator scenarios and writes CSV results.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid scenario, 3 runtime failure
//! (simulation assertion or output write error).

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cellbridge_core::metrics::{build_report, Report};
use cellbridge_core::net::RunOutput;
use cellbridge_core::report;
use cellbridge_core::ScenarioFile;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "cellbridge", version, about = "Cell-switched TCP simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; print its summary CSV and optionally write files.
    Run(RunArgs),
    /// Run one scenario once per parameter value; combine group ratios.
    Sweep(SweepArgs),
    /// List the built-in presets.
    Presets,
    /// Print a scenario (preset or file) as a validated TOML document.
    Show {
        /// Preset name or path to a scenario TOML file.
        scenario: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or path to a scenario TOML file.
    scenario: String,
    /// Replace the scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the scenario's duration, in simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Directory for summary.csv, queue_bottleneck.csv, cwnd_conn<N>.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Preset name or path to a scenario TOML file.
    scenario: String,
    /// Field to vary: "seed", "duration", "occupancy-scale", or "thresholds".
    #[arg(long)]
    param: String,
    /// Comma-separated values. For "thresholds", slash-separated lists of
    /// per-circuit cell counts, e.g. "305,611,917/458,917,1375".
    #[arg(long)]
    values: String,
    /// Replace the base scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the base scenario's duration, in simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Directory for per-run results and the combined ratios.csv.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    /// The scenario could not be loaded or validated (exit 2).
    Scenario(String),
    /// The simulation or result writing failed (exit 3).
    Runtime(String),
}

fn scenario_err<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Scenario(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Scenario(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Presets => {
            for name in ScenarioFile::preset_names() {
                let p = ScenarioFile::preset(name).expect("listed preset exists");
                println!(
                    "{name:<16} {:<12} connections={:<2} duration={}s policy={}",
                    p.scenario.topology,
                    p.scenario.connections,
                    p.scenario.duration_s,
                    p.switch.policy,
                );
            }
            Ok(())
        }
        Command::Show { scenario } => {
            let file = load_scenario(&scenario)?;
            file.resolve()
                .map_err(|e| Failure::Scenario(e.to_string()))?;
            print!("{}", file.to_toml_string());
            Ok(())
        }
    }
}

/// A preset name, or a path to a TOML file if one exists at `source`.
fn load_scenario(source: &str) -> Result<ScenarioFile, Failure> {
    if Path::new(source).is_file() {
        let text = std::fs::read_to_string(source)
            .map_err(|e| Failure::Scenario(format!("cannot read {source}: {e}")))?;
        return ScenarioFile::from_toml_str(&text)
            .map_err(|e| Failure::Scenario(format!("{source}: {e}")));
    }
    match ScenarioFile::preset(source) {
        Some(file) => Ok(file),
        None => scenario_err(format!(
            "no scenario file or preset named \"{source}\" (try `cellbridge presets`)"
        )),
    }
}

fn apply_overrides(file: &mut ScenarioFile, seed: Option<u64>, duration: Option<f64>) {
    if let Some(seed) = seed {
        file.scenario.seed = seed;
    }
    if let Some(duration) = duration {
        file.scenario.duration_s = duration;
    }
}

/// Resolve, simulate, and summarize; simulation panics become exit-3 errors.
fn execute(file: &ScenarioFile) -> Result<(RunOutput, Report), Failure> {
    let config = file
        .resolve()
        .map_err(|e| Failure::Scenario(e.to_string()))?;
    let out = panic::catch_unwind(AssertUnwindSafe(|| config.build().run())).map_err(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "simulation panicked".into());
        Failure::Runtime(format!("simulation failed: {msg}"))
    })?;
    let report = build_report(&out);
    Ok((out, report))
}

fn write_failure(e: std::io::Error) -> Failure {
    Failure::Runtime(format!("cannot write results: {e}"))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut file = load_scenario(&args.scenario)?;
    apply_overrides(&mut file, args.seed, args.duration);
    let (out, report) = execute(&file)?;
    if let Some(dir) = &args.out {
        report::write_run_dir(dir, &out, &report).map_err(write_failure)?;
    }
    report::write_summary(std::io::stdout().lock(), &report).map_err(write_failure)?;
    eprintln!(
        "{}: {} events over {}s simulated, utilization {:.3}, max queue {} cells",
        file.scenario.name,
        out.events_processed,
        out.duration_s,
        out.utilization,
        out.max_queue_cells,
    );
    Ok(())
}

/// One sweep point: a label for output naming and a scenario mutation.
enum SweepValue {
    Seed(u64),
    Duration(f64),
    OccupancyScale(f64),
    Thresholds(Vec<u64>),
}

impl SweepValue {
    fn parse(param: &str, text: &str) -> Result<SweepValue, String> {
        let bad = |e| format!("value \"{text}\" invalid for {param}: {e}");
        match param {
            "seed" => Ok(SweepValue::Seed(
                text.parse().map_err(|e| bad(format!("{e}")))?,
            )),
            "duration" => Ok(SweepValue::Duration(
                text.parse().map_err(|e| bad(format!("{e}")))?,
            )),
            "occupancy-scale" => Ok(SweepValue::OccupancyScale(
                text.parse().map_err(|e| bad(format!("{e}")))?,
            )),
            "thresholds" => {
                let cells: Result<Vec<u64>, _> =
                    text.split(',').map(|c| c.trim().parse()).collect();
                Ok(SweepValue::Thresholds(
                    cells.map_err(|e| bad(format!("{e}")))?,
                ))
            }
            other => Err(format!(
                "unknown sweep parameter \"{other}\" \
                 (expected seed, duration, occupancy-scale, or thresholds)"
            )),
        }
    }

    fn label(&self) -> String {
        match self {
            SweepValue::Seed(v) => format!("seed={v}"),
            SweepValue::Duration(v) => format!("duration={v}"),
            SweepValue::OccupancyScale(v) => format!("occupancy-scale={v}"),
            SweepValue::Thresholds(cells) => {
                let parts: Vec<String> = cells.iter().map(u64::to_string).collect();
                format!("thresholds={}", parts.join("+"))
            }
        }
    }

    fn apply(&self, file: &mut ScenarioFile) {
        match self {
            SweepValue::Seed(v) => file.scenario.seed = *v,
            SweepValue::Duration(v) => file.scenario.duration_s = *v,
            SweepValue::OccupancyScale(v) => file.switch.occupancy_scale = *v,
            SweepValue::Thresholds(cells) => {
                file.switch.thresholds_cells = cells.clone();
                file.switch.shares.clear();
                file.switch.share_pool_cells = None;
            }
        }
    }
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let mut base = load_scenario(&args.scenario)?;
    apply_overrides(&mut base, args.seed, args.duration);

    let separator = if args.param == "thresholds" { '/' } else { ',' };
    let texts: Vec<&str> = args
        .values
        .split(separator)
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    if texts.is_empty() {
        return scenario_err("sweep value list is empty");
    }
    let values: Vec<SweepValue> = texts
        .iter()
        .map(|t| SweepValue::parse(&args.param, t))
        .collect::<Result<_, _>>()
        .map_err(Failure::Scenario)?;

    // Validate every point up front so a bad value late in the list cannot
    // waste the runs before it.
    for v in &values {
        let mut file = base.clone();
        v.apply(&mut file);
        file.resolve()
            .map_err(|e| Failure::Scenario(format!("sweep point {}: {e}", v.label())))?;
    }

    let runs: Vec<_> = values
        .par_iter()
        .map(|v| {
            let mut file = base.clone();
            v.apply(&mut file);
            (v.label(), execute(&file))
        })
        .collect();

    let mut columns = Vec::new();
    for (label, result) in runs {
        let (out, report) = result?;
        report::write_run_dir(&args.out.join(&label), &out, &report).map_err(write_failure)?;
        let ratios: Vec<Option<f64>> = report.groups.iter().map(|g| g.ratio).collect();
        println!(
            "{label}: total {:.4} Mbps, utilization {:.3}, max queue {} cells",
            report.total_goodput_mbps, out.utilization, out.max_queue_cells,
        );
        columns.push((label, ratios));
    }

    let rows = columns[0].1.len();
    if columns.iter().any(|(_, c)| c.len() != rows) {
        return Err(Failure::Runtime(
            "sweep points produced different circuit groupings; no combined ratios.csv".into(),
        ));
    }
    // Rows are threshold ranks; a thresholds sweep changes the cell values
    // per column, so rank labels are the only ones valid across the matrix.
    let labels: Vec<String> = (1..=rows).map(|i| format!("rank{i}")).collect();
    std::fs::create_dir_all(&args.out).map_err(write_failure)?;
    let ratios_path = args.out.join("ratios.csv");
    report::write_ratio_matrix(
        std::fs::File::create(&ratios_path).map_err(write_failure)?,
        &labels,
        &columns,
    )
    .map_err(write_failure)?;
    println!("wrote {}", ratios_path.display());
    Ok(())
}
