use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use langnav_core::assistants::corpus::{evaluate, Corpus};
use langnav_core::assistants::{LlmClient, PromptSet};
use langnav_core::sim::{corridor_variants, run_batch, EpisodeConfig, Variant, BASE_INSTRUCTION};
use langnav_core::world::Scenario;
use langnav_service::backend::{BackendKind, BackendSpec};
use langnav_service::session::{resolve_scenario, Server, SessionConfig};

/// Exit code for usage and configuration errors.
const USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "langnav",
    version,
    about = "Language-configured MPC navigation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of simulated episodes and report metrics.
    Run(RunArgs),
    /// Score the assistants on a query corpus.
    Eval(EvalArgs),
    /// Serve a live session over websockets.
    Serve(ServeArgs),
    /// Run a batch while recording every model answer as a replay fixture.
    ReplayRecord(RecordArgs),
}

#[derive(Args)]
struct BackendArgs {
    /// Language model backend.
    #[arg(long, value_enum, default_value = "mock")]
    llm: BackendKind,
    /// Fixture directory for `--llm replay`.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Model name for `--llm live`.
    #[arg(long, env = "LLM_MODEL", default_value = "gpt-4o-mini")]
    model: String,
}

impl BackendArgs {
    fn spec(&self, record_to: Option<PathBuf>) -> BackendSpec {
        BackendSpec {
            kind: self.llm,
            fixtures: self.fixtures.clone(),
            model: self.model.clone(),
            record_to,
        }
    }
}

#[derive(Args)]
struct BatchArgs {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,
    /// `corridor` for the six corridor instructions a-f, `default` for the
    /// base instruction alone, or a JSON file with a list of variants.
    #[arg(long, default_value = "corridor")]
    variants: String,
    /// Episodes per variant.
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    /// Seed of the first episode; episode i uses seed + i.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON file overriding episode, solver and pedestrian settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    batch: BatchArgs,
    /// Per-episode CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecordArgs {
    #[command(flatten)]
    batch: BatchArgs,
    /// Directory receiving the fixtures.
    #[arg(long)]
    record_to: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Corpus file; the shipped C/G/W query sets by default.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    repetitions: u32,
    /// JSON report output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8765)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Builtin scenario name or scenario file.
    #[arg(long, default_value = "corridor")]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Artificial delay before each query is processed [ms].
    #[arg(long, default_value_t = 1500)]
    query_delay_ms: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

/// A failure with its exit code.
struct Failure(u8, String);

fn usage(message: impl Into<String>) -> Failure {
    Failure(USAGE, message.into())
}

fn load_config(path: Option<&Path>) -> Result<EpisodeConfig, Failure> {
    let Some(path) = path else {
        return Ok(EpisodeConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let config: EpisodeConfig = serde_json::from_str(&text)
        .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
    config
        .validate()
        .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
    Ok(config)
}

fn load_variants(which: &str) -> Result<Vec<Variant>, Failure> {
    match which {
        "corridor" | "paper_table" => Ok(corridor_variants()),
        "default" => Ok(vec![Variant::at_start("a", BASE_INSTRUCTION)]),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                usage(format!(
                    "unknown variant set `{path}` and cannot read it as a file: {e}"
                ))
            })?;
            let variants: Vec<Variant> = serde_json::from_str(&text)
                .map_err(|e| usage(format!("invalid variants file {path}: {e}")))?;
            if variants.is_empty() {
                return Err(usage(format!("variants file {path} is empty")));
            }
            Ok(variants)
        }
    }
}

fn run_batch_command(
    args: &BatchArgs,
    backend: &BackendSpec,
) -> Result<langnav_core::sim::BatchReport, Failure> {
    let scenario = Scenario::load(&args.scenario).map_err(|e| usage(e.to_string()))?;
    let variants = load_variants(&args.variants)?;
    let config = load_config(args.config.as_deref())?;
    if args.episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    backend.validate().map_err(usage)?;
    let factory = || -> Box<dyn LlmClient> { backend.build().expect("backend validated") };
    let start = Instant::now();
    let report = run_batch(
        &scenario,
        &variants,
        args.episodes,
        args.seed,
        &config,
        &factory,
    )
    .map_err(|e| Failure(1, format!("episode failed: {e}")))?;
    print!("{}", report.to_table());
    println!(
        "{} episodes, {} collisions, {:.1} s",
        report.rows.len(),
        report.collisions(),
        start.elapsed().as_secs_f64()
    );
    Ok(report)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let report = run_batch_command(&args.batch, &args.batch.backend.spec(None))?;
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_csv())
            .map_err(|e| Failure(1, format!("cannot write {}: {e}", out.display())))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn record(args: RecordArgs) -> Result<(), Failure> {
    run_batch_command(
        &args.batch,
        &args.batch.backend.spec(Some(args.record_to.clone())),
    )?;
    let count = std::fs::read_dir(&args.record_to)
        .map(|d| d.count())
        .unwrap_or(0);
    println!("{count} fixtures in {}", args.record_to.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let corpus = match &args.corpus {
        Some(path) => Corpus::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))?,
        None => Corpus::shipped(),
    };
    if args.repetitions == 0 {
        return Err(usage("--repetitions must be at least 1"));
    }
    let backend = args.backend.spec(None);
    backend.validate().map_err(usage)?;
    let mut factory = || backend.build().expect("backend validated");
    let report = evaluate(
        &corpus,
        args.repetitions,
        &PromptSet::default(),
        &mut factory,
    );
    print!("{}", report.to_table());
    let perfect = report
        .rows
        .iter()
        .filter(|r| r.successes == r.trials)
        .count();
    println!("{perfect} of {} cases at rate 1.00", report.rows.len());
    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(out, json)
            .map_err(|e| Failure(1, format!("cannot write {}: {e}", out.display())))?;
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    let scenario = resolve_scenario(&args.scenario).map_err(usage)?;
    let backend = args.backend.spec(None);
    backend.validate().map_err(usage)?;
    let mut config = SessionConfig::new(scenario);
    config.episode = load_config(args.config.as_deref())?;
    config.period = Duration::from_secs_f64(config.episode.mpc.dt);
    config.seed = args.seed;
    config.query_delay = Duration::from_millis(args.query_delay_ms);
    let client = backend.build().map_err(usage)?;
    let server =
        Server::bind((args.host.as_str(), args.port), config, client).map_err(|e| Failure(1, e))?;
    println!("serving on ws://{}", server.local_addr());
    server.wait();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
        Command::ReplayRecord(a) => record(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
