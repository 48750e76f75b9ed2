use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use repeater_core::scenario::report::{rows_for, run_one, SweepError};
use repeater_core::scenario::{
    aggregate, load_scenario, preset, run_replications, sweep, write_csv, ReplicationError, RunResult, Scenario,
    ScenarioError, SweepParam, PRESETS,
};
use repeater_core::sim::{SimError, TraceLine};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "repeater-sim", version, about = "Simulate entanglement distribution over a linear repeater chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the replications of one scenario and write a results table.
    Run(RunArgs),
    /// Run a scenario across strategies and values of one parameter.
    Sweep(SweepArgs),
    /// Check a scenario file and print it with defaults filled in.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Built-in strategy presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names, rank vectors and purification rounds.
    List,
    /// Print a preset as a scenario file.
    Show { name: String },
}

#[derive(Args)]
struct Source {
    /// Scenario file (JSON).
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in preset, e.g. `Nestedx2` or `Nested**`.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Master seed; overrides the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replications; overrides the scenario.
    #[arg(long)]
    runs: Option<usize>,
    /// Pairs to deliver per run; overrides the scenario.
    #[arg(long)]
    pairs: Option<u64>,
    /// CSV output path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the event log of every run as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Tc,
    Perr,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum)]
    param: Param,
    /// Comma-separated values; `inf` is accepted for `tc`.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Strategies to cross with the values: `all`, or comma-separated preset
    /// names. Defaults to the scenario's own strategy.
    #[arg(long, value_delimiter = ',')]
    presets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    pairs: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Invalid(String),
    Protocol(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Protocol(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Protocol(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => Failure::Io(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<ReplicationError> for Failure {
    fn from(e: ReplicationError) -> Self {
        match e.source {
            SimError::Protocol { .. } | SimError::Engine(_) => Failure::Protocol(e.to_string()),
            SimError::Config(_) | SimError::Param(_) => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Run { source, .. } => (*source).into(),
            SweepError::Scenario(s) => s.into(),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Validate { scenario } => validate(&scenario),
        Command::Presets { action } => presets(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load(source: &Source) -> Result<Scenario, Failure> {
    match (&source.scenario, &source.preset) {
        (Some(path), _) => Ok(load_scenario(path)?),
        (None, Some(name)) => preset(name)
            .map(|p| p.scenario())
            .ok_or_else(|| Failure::Invalid(format!("unknown preset `{name}`; see `presets list`"))),
        (None, None) => unreachable!("clap requires one source"),
    }
}

fn apply_overrides(
    s: &mut Scenario,
    seed: Option<u64>,
    runs: Option<usize>,
    pairs: Option<u64>,
) -> Result<(), Failure> {
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(runs) = runs {
        s.runs = runs;
    }
    if let Some(pairs) = pairs {
        s.pairs = pairs;
    }
    s.resolve()?;
    Ok(())
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn summarize(s: &Scenario, results: &[RunResult]) {
    let agg = aggregate(results);
    let fid = agg.mean_fidelity.map_or("n/a".to_string(), |f| format!("{:.4} ± {:.4}", f[0], f[1]));
    eprintln!(
        "{}: {} runs, throughput {:.1} ± {:.1} pairs/s, fidelity {fid}, delivered {:.1}/{}",
        s.label(),
        agg.runs,
        agg.throughput_pps[0],
        agg.throughput_pps[1],
        agg.delivered[0],
        s.pairs
    );
}

#[derive(Serialize)]
struct RunTraceLine<'a> {
    run: usize,
    #[serde(flatten)]
    line: &'a TraceLine,
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut s = load(&args.source)?;
    apply_overrides(&mut s, args.seed, args.runs, args.pairs)?;
    let results = match &args.trace {
        None => run_replications(&s)?,
        Some(path) => {
            let mut log =
                BufWriter::new(File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?);
            let mut results = Vec::with_capacity(s.runs);
            for i in 0..s.runs {
                let (r, trace) = run_one(&s, i, true)?;
                for line in trace.unwrap_or_default() {
                    serde_json::to_writer(&mut log, &RunTraceLine { run: i, line: &line })
                        .map_err(|e| Failure::Io(e.to_string()))?;
                    log.write_all(b"\n")?;
                }
                results.push(r);
            }
            log.flush()?;
            results
        }
    };
    write_csv(open_out(&args.out)?, &rows_for(&s, &results))?;
    summarize(&s, &results);
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<(), Failure> {
    let mut base = load(&args.source)?;
    apply_overrides(&mut base, args.seed, args.runs, args.pairs)?;
    let cells: Vec<Scenario> = match args.presets.as_slice() {
        [] => vec![base.clone()],
        [all] if all.eq_ignore_ascii_case("all") => {
            PRESETS.iter().map(|p| base.with_preset(p)).collect::<Result<_, _>>()?
        }
        names => names
            .iter()
            .map(|n| {
                let p = preset(n).ok_or_else(|| Failure::Invalid(format!("unknown preset `{n}`")))?;
                Ok(base.with_preset(p)?)
            })
            .collect::<Result<_, Failure>>()?,
    };
    let param = match args.param {
        Param::Tc => SweepParam::Tc,
        Param::Perr => SweepParam::PErr,
    };
    let rows = sweep(&cells, param, &args.values)?;
    write_csv(open_out(&args.out)?, &rows)?;
    eprintln!("{} strategies x {} values, {} rows", cells.len(), args.values.len(), rows.len());
    Ok(())
}

/// Prints to stdout; a reader that went away (`| head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn validate(path: &Path) -> Result<(), Failure> {
    let s = load_scenario(path)?;
    let json = serde_json::to_string_pretty(&s).map_err(|e| Failure::Io(e.to_string()))?;
    emit(&json)
}

fn presets(action: PresetAction) -> Result<(), Failure> {
    match action {
        PresetAction::List => {
            for p in &PRESETS {
                let s = p.scenario();
                emit(&format!(
                    "{:<14} {:<14} R={:?} P={:?}",
                    s.label(),
                    p.file,
                    s.ranks.unwrap_or_default(),
                    s.purification
                ))?;
            }
        }
        PresetAction::Show { name } => {
            let p = preset(&name).ok_or_else(|| Failure::Invalid(format!("unknown preset `{name}`")))?;
            emit(&serde_json::to_string_pretty(&p.scenario()).map_err(|e| Failure::Io(e.to_string()))?)?;
        }
    }
    Ok(())
}
