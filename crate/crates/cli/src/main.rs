//! `sgbh`: simulation driver, grouped FDR analysis of p-value tables,
//! per-group uniformity diagnostics and result plots.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
//! 4 data-shape error (for example an empty group).

mod analyze;
mod data;
mod error;
mod plot;
mod synth;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sgbh::procedures::GenericScope;
use sgbh::selection::TestMethod;
use sgbh::simulate::{run_grid, GridConfig, Sided, DEFAULT_SEED};
use sgbh::{Estimator, Selector};

use crate::data::{groups_from_bins, groups_from_file, parse_bins, read_table, subsample};
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "sgbh", version, about = "Grouped, selectively weighted FDR procedures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation grid from a JSON config and write the metrics CSV.
    Simulate(SimulateArgs),
    /// Run one procedure on an `id,pvalue` or `id,zscore` table.
    Analyze(AnalyzeArgs),
    /// Test each group for uniform p-values.
    Uniformity(UniformityArgs),
    /// Render a simulation CSV as FDR-vs-power panels.
    Plot(PlotArgs),
    /// Write a synthetic 4374-row table with three p-value bins.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use the six large-study sample sizes up to 100000 (slow).
    #[arg(long)]
    full_grid: bool,
    /// Master seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Output does not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct PartitionArgs {
    /// `id,group` table.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// `a,b`: group 1 has p > b, group 2 has a <= p <= b, group 3 has p < a.
    #[arg(long)]
    bins: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SidedArg {
    One,
    Two,
}

impl From<SidedArg> for Sided {
    fn from(s: SidedArg) -> Self {
        match s {
            SidedArg::One => Sided::One,
            SidedArg::Two => Sided::Two,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Local,
    Global,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    partition: PartitionArgs,
    /// How z-scores map to p-values.
    #[arg(long, value_enum, default_value = "two")]
    sided: SidedArg,
    /// Keep at most this many randomly chosen rows per group.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// bh, plugin-sgbh, plugin-gbh, generic-sgbh or generic-gbh.
    #[arg(long)]
    procedure: String,
    #[arg(long)]
    alpha: f64,
    /// `storey:LAMBDA`, `storey-smooth` or `jin:GAMMA`.
    #[arg(long, default_value = "jin:0.5")]
    estimator: Estimator,
    /// `ks:BETA`, `simes:XI` or `all`.
    #[arg(long, default_value = "simes:0.1")]
    selector: Selector,
    /// Threshold of the generic weights.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Whether generic weights of selective procedures count only the
    /// selected groups.
    #[arg(long, value_enum, default_value = "local")]
    scope: ScopeArg,
    /// Per-hypothesis report.
    #[arg(long)]
    out: PathBuf,
    /// Also write the summary as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct UniformityArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    method: String,
    #[arg(long)]
    level: f64,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_grid(path: &Path) -> CliResult<GridConfig> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        CliError::usage(format!("{}: at `{key}`: {}", path.display(), e.inner()))
    })
}

fn simulate(args: SimulateArgs) -> CliResult<()> {
    let mut grid = load_grid(&args.config)?;
    if let Some(seed) = args.seed {
        grid.seed = seed;
    }
    if args.full_grid {
        eprintln!("warning: the full grid runs sample sizes up to 100000 and can take hours");
        grid = grid.full_grid();
    }
    let scenarios = grid.scenarios()?;
    let csv = run_grid(&scenarios, args.workers)?;
    write_atomic(&args.out, &csv)
}

fn load_data(args: &DataArgs) -> CliResult<(data::Table, data::Grouping)> {
    let table = read_table(&args.data, args.sided.into())?;
    let grouping = match (&args.partition.groups, &args.partition.bins) {
        (Some(path), None) => groups_from_file(path, &table)?,
        (None, Some(raw)) => groups_from_bins(&table, parse_bins(raw)?)?,
        _ => return Err(CliError::usage("exactly one of --groups and --bins is required")),
    };
    match args.subsample {
        Some(k) => subsample(&table, &grouping, k, args.seed),
        None => Ok((table, grouping)),
    }
}

fn analyze(args: AnalyzeArgs) -> CliResult<()> {
    let scope = match args.scope {
        ScopeArg::Local => GenericScope::SelectionLocal,
        ScopeArg::Global => GenericScope::Global,
    };
    let spec = analyze::procedure_from_name(
        &args.procedure,
        args.estimator,
        args.selector,
        args.lambda,
        scope,
    )?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::usage(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    let (table, grouping) = load_data(&args.data)?;
    let report = analyze::run(&table, &grouping, &spec, args.alpha)?;
    write_atomic(&args.out, &analyze::hypothesis_csv(&table, &grouping, &report)?)?;
    let summary = analyze::summarize(&grouping, &spec, args.alpha, &report);
    print!("{}", summary.render());
    if let Some(path) = &args.summary {
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write_atomic(path, &(json + "\n"))?;
    }
    Ok(())
}

fn uniformity(args: UniformityArgs) -> CliResult<()> {
    let method: TestMethod = args.method.parse().map_err(|e: sgbh::Error| CliError::usage(e.to_string()))?;
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::usage(format!("--level must lie in (0, 1), got {}", args.level)));
    }
    let (table, grouping) = load_data(&args.data)?;
    let csv = analyze::uniformity_csv(&table, &grouping, method, args.level)?;
    match &args.out {
        Some(path) => write_atomic(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn plot(args: PlotArgs) -> CliResult<()> {
    let rows = plot::parse_rows(&read_text(&args.input)?)?;
    write_atomic(&args.out, &plot::render(&rows))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Uniformity(a) => uniformity(a),
        Command::Plot(a) => plot(a),
        Command::Synth(a) => write_atomic(&a.out, &synth::table(a.seed)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
