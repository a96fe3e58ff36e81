//! Command-line driver. `fitagent run` executes one agent session end to
//! end; `fitagent synth` writes the synthetic benchmark datasets.

use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::agent::{self, AgentState, RunPolicy, RunStatus};
use crate::llm::{ChatConfig, LiveBackend, LlmError, RecordBackend, ReplayBackend, ReplayMode};
use crate::report::{self, TraceHeader};
use crate::synth;
use crate::task::{TaskConfig, TaskKind};
use crate::tools::{registry_for, RunContext};

/// Seed for the noisy Hall-Petch sweep. Chosen once so the shipped dataset
/// is stable; both fitted parameters land well inside the documented 15%
/// tolerance at this seed.
pub const DEFAULT_SYNTH_SEED: u64 = 60;

#[derive(Debug, Parser)]
#[command(name = "fitagent", version, about = "Autonomous equation-fitting agent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one agent session against a dataset.
    Run(RunArgs),
    /// Write the synthetic benchmark datasets.
    Synth(SynthArgs),
}

/// Where chat completions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    /// OpenAI-compatible endpoint; needs FITAGENT_API_KEY.
    Live,
    /// Recorded transcript; fully offline.
    Replay,
    /// Live, with every exchange appended to the transcript file.
    Record,
}

/// Replay strictness. Strict pins each request digest to the recording and
/// catches prompt drift; lenient answers by position, which tolerates
/// hand-written transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReplayModeChoice {
    Strict,
    Lenient,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Task preset: hall-petch, paris, kuhn-recall, kuhn-extract,
    /// strain-kuhn, or generic.
    #[arg(long, value_parser = <TaskKind as FromStr>::from_str)]
    pub task: TaskKind,

    /// CSV with the experimental data. The agent addresses files by name in
    /// its load_data calls; this path serves as the fallback when that name
    /// does not resolve.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Column holding the independent variable (defaults to the task's).
    #[arg(long = "x-col")]
    pub x_col: Option<String>,

    /// Column holding the dependent variable (defaults to the task's).
    #[arg(long = "y-col")]
    pub y_col: Option<String>,

    #[arg(long, value_enum, default_value_t = BackendChoice::Live)]
    pub backend: BackendChoice,

    /// Transcript file: read by replay, appended to by record.
    #[arg(long)]
    pub transcript: Option<PathBuf>,

    #[arg(long = "replay-mode", value_enum, default_value_t = ReplayModeChoice::Strict)]
    pub replay_mode: ReplayModeChoice,

    /// Chat model identifier (default gpt-5).
    #[arg(long = "model-id")]
    pub model_id: Option<String>,

    /// Sampling temperature; omitted models keep their per-family default.
    #[arg(long)]
    pub temperature: Option<f64>,

    #[arg(long = "max-iterations")]
    pub max_iterations: Option<usize>,

    /// History entries shown verbatim in each prompt; older ones are elided.
    #[arg(long = "history-window")]
    pub history_window: Option<usize>,

    /// Extra attempts for critical operations; total tries = retries + 1.
    #[arg(long)]
    pub retries: Option<usize>,

    /// Manual Region II bounds as lo:hi, overriding slope-based selection.
    #[arg(long = "region-bounds", value_parser = parse_bounds)]
    pub region_bounds: Option<(f64, f64)>,

    /// Plausibility band factor for generated-function probes: outputs must
    /// land in [y_min / factor, y_max * factor].
    #[arg(long = "band-factor")]
    pub band_factor: Option<f64>,

    /// Output directory for the trace, figures, and results.
    #[arg(long, default_value = "runs/latest")]
    pub out: PathBuf,

    /// Base URL for the literature mirror (kuhn-extract).
    #[arg(long = "mirror-base")]
    pub mirror_base: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving the CSV files.
    #[arg(long, default_value = "data")]
    pub out: PathBuf,

    /// Seed for the noisy Hall-Petch sweep; everything else is noiseless.
    #[arg(long, default_value_t = DEFAULT_SYNTH_SEED)]
    pub seed: u64,
}

fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(format!("bounds must be finite with lo < hi, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{0}")]
    Report(String),
}

/// Executes a parsed command and reports the process exit code. Errors are
/// printed to stderr and map to exit 1; completed runs exit with their final
/// status code.
pub fn dispatch(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run(args) => run_task(args),
        Command::Synth(args) => run_synth(&args).map(|()| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fitagent: {e}");
            1
        }
    }
}

/// One full agent session: build the task registry and backend, run the
/// loop, then flush the trace, canonical results, and summary.
pub fn run_task(args: RunArgs) -> Result<i32, CliError> {
    let mut task = TaskConfig::new(args.task);
    if let Some(base) = &args.mirror_base {
        task.mirror_base = base.clone();
    }

    let backend: Box<dyn crate::llm::ChatBackend> = match args.backend {
        BackendChoice::Live => Box::new(LiveBackend::from_env()?),
        BackendChoice::Replay => {
            let path = args.transcript.as_ref().ok_or_else(|| {
                CliError::Usage("replay backend requires --transcript".to_owned())
            })?;
            let mode = match args.replay_mode {
                ReplayModeChoice::Strict => ReplayMode::Strict,
                ReplayModeChoice::Lenient => ReplayMode::Lenient,
            };
            Box::new(ReplayBackend::from_file(path, mode)?)
        }
        BackendChoice::Record => {
            let path = args.transcript.as_ref().ok_or_else(|| {
                CliError::Usage("record backend requires --transcript".to_owned())
            })?;
            Box::new(RecordBackend::new(Box::new(LiveBackend::from_env()?), path)?)
        }
    };

    fs::create_dir_all(&args.out)?;
    let mut ctx = RunContext::new(task, backend, args.out.clone());
    if let Some(model) = &args.model_id {
        ctx.chat = ChatConfig::new(model, &ctx.task.system_prompt);
    }
    if let Some(t) = args.temperature {
        ctx.chat.temperature = Some(t);
    }
    ctx.data_path = args.data.clone();
    if args.x_col.is_some() {
        ctx.x_column = args.x_col.clone();
    }
    if args.y_col.is_some() {
        ctx.y_column = args.y_col.clone();
    }
    if let Some(r) = args.retries {
        ctx.retries = r;
    }
    if let Some(b) = args.band_factor {
        ctx.band_factor = b;
    }
    ctx.region_bounds = args.region_bounds;

    let policy = RunPolicy {
        max_iterations: args.max_iterations.unwrap_or(agent::DEFAULT_MAX_ITERATIONS),
        history_window: args.history_window.unwrap_or(agent::DEFAULT_HISTORY_WINDOW),
    };
    let registry = registry_for(ctx.task.kind);
    let mut state = AgentState::new();
    agent::run(&mut state, &registry, &mut ctx, &policy);

    let header = TraceHeader::from_run(&state, &ctx, &policy);
    report::write_trace(&args.out.join("trace.jsonl"), &header, &state.history, false)?;
    if state.model.is_some() {
        report::export_results(&state, &ctx.task, "json", &args.out.join("results.json"))
            .map_err(CliError::Report)?;
    }
    println!("{}", report::summary_block(&state));

    debug_assert_ne!(state.status, RunStatus::Running);
    Ok(state.status.exit_code())
}

/// Writes every benchmark dataset into one directory. Bytes depend only on
/// the seed, so repeated invocations are diff-stable.
pub fn run_synth(args: &SynthArgs) -> Result<(), CliError> {
    fs::create_dir_all(&args.out)?;
    let flat = [
        ("hall_petch.csv", synth::hall_petch_noiseless()),
        ("hall_petch_noisy.csv", synth::hall_petch(args.seed)),
        ("paris.csv", synth::paris()),
        ("strain_kuhn.csv", synth::strain_kuhn()),
    ];
    for (name, data) in &flat {
        let path = args.out.join(name);
        synth::write_csv(data, &path)?;
        println!("wrote {}", path.display());
    }
    let path = args.out.join("kuhn.csv");
    synth::write_kuhn_csv(&synth::kuhn(), &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
