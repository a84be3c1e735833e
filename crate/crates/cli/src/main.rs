use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use driftmine::event::ParseStats;
use driftmine::replay::EventReader;
use driftmine::synth::{Scenario, ScenarioKind};
use driftmine::{AdwinInput, Engine, EngineConfig, Error, EventQueue};
use log::{info, warn};

const QUEUE_CAPACITY: usize = 100_000;

#[derive(Parser)]
#[command(
    name = "driftmine",
    version,
    about = "Online decision mining with decision-drift detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay an event log through the engine and write reports.
    Run(RunArgs),
    /// Generate a synthetic loan-application log.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InputMode {
    Average,
    Raw,
}

impl From<InputMode> for AdwinInput {
    fn from(m: InputMode) -> Self {
        match m {
            InputMode::Average => AdwinInput::Average,
            InputMode::Raw => AdwinInput::Raw,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// CSV event log; standard input when omitted.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Report directory.
    #[arg(long, default_value = "reports")]
    out: PathBuf,
    /// Completed cases before the first rule mining.
    #[arg(long, default_value_t = 200)]
    grace: usize,
    /// Lossy-counting error bound of the directly-follows graph.
    #[arg(long, default_value_t = 0.001)]
    epsilon: f64,
    /// Minimum dependency for an arc of the heuristics net.
    #[arg(long, default_value_t = 0.9)]
    dep_threshold: f64,
    /// Events between heuristics-net refreshes.
    #[arg(long, default_value_t = 100)]
    net_stride: usize,
    /// Confidence parameter of every drift detector.
    #[arg(long, default_value_t = 0.002)]
    delta: f64,
    /// Values fed to the drift detectors.
    #[arg(long, value_enum, default_value_t = InputMode::Average)]
    adwin_input: InputMode,
    /// Smallest window a remine may train on.
    #[arg(long, default_value_t = 30)]
    min_mine: usize,
    /// Omit the timestamp line from rules.txt.
    #[arg(long)]
    no_banner: bool,
    /// Also write dfg.json, net.dot and trees.json.
    #[arg(long)]
    dump_debug: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// baseline, sd1, sd2, sd3 or sd4.
    #[arg(long, value_parser = parse_scenario)]
    scenario: ScenarioKind,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of cases.
    #[arg(long, default_value_t = 5_000)]
    instances: usize,
    /// First post-drift case; half the cases when omitted.
    #[arg(long)]
    drift_at: Option<usize>,
    /// Probability of flipping a branch to another class.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Cases executed concurrently.
    #[arg(long, default_value_t = 1)]
    interleave: usize,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let config_error = e
                .downcast_ref::<Error>()
                .is_some_and(|e| matches!(e, Error::Config(_)));
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let config = EngineConfig {
        grace: args.grace,
        epsilon: args.epsilon,
        dep_threshold: args.dep_threshold,
        net_stride: args.net_stride,
        adwin_input: args.adwin_input.into(),
        min_mine_instances: args.min_mine,
        ..EngineConfig::default()
    }
    .with_delta(args.delta);
    let mut engine = Engine::new(config)?;

    let queue = Arc::new(EventQueue::with_capacity(QUEUE_CAPACITY));
    let producer = match &args.log {
        Some(path) => spawn_producer(EventReader::from_path(path, b',')?, Arc::clone(&queue)),
        None => spawn_producer(EventReader::from_stdin(b',')?, Arc::clone(&queue)),
    };
    while let Some(event) = queue.pop() {
        for n in engine.process_event(&event) {
            info!("seq {} {}: {}", n.seq, n.point_id, n.trigger);
        }
    }
    let stats = producer
        .join()
        .map_err(|_| anyhow::anyhow!("reader thread panicked"))??;
    if stats.malformed_rows > 0 || stats.skipped_values > 0 {
        warn!(
            "{} malformed rows skipped, {} attribute values ignored",
            stats.malformed_rows, stats.skipped_values
        );
    }

    let report = engine.report();
    let banner = (!args.no_banner).then(|| {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        format!(
            "driftmine {} run at unix time {secs}",
            env!("CARGO_PKG_VERSION")
        )
    });
    report.write_dir(&args.out, banner.as_deref())?;
    if args.dump_debug {
        dump_debug(&engine, &args.out)?;
    }
    println!(
        "{} events, {} completed cases, {} decision points, {} drift events; reports in {}",
        engine.events_seen(),
        engine.completed_cases(),
        report.points.len(),
        report.notifications.len(),
        args.out.display()
    );
    Ok(())
}

fn spawn_producer<R: Read + Send + 'static>(
    reader: EventReader<R>,
    queue: Arc<EventQueue>,
) -> thread::JoinHandle<driftmine::Result<ParseStats>> {
    thread::spawn(move || reader.pump(&queue))
}

fn dump_debug(engine: &Engine, dir: &Path) -> anyhow::Result<()> {
    fs::write(
        dir.join("dfg.json"),
        serde_json::to_string_pretty(&engine.dfg().snapshot())?,
    )?;
    fs::write(dir.join("net.dot"), engine.net().to_dot())?;
    let trees: BTreeMap<&str, _> = engine
        .decision_points()
        .keys()
        .filter_map(|id| {
            let model = engine.monitor_state(id)?.model.as_ref()?;
            Some((id.as_str(), &model.tree))
        })
        .collect();
    fs::write(
        dir.join("trees.json"),
        serde_json::to_string_pretty(&trees)?,
    )?;
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let scenario = Scenario {
        kind: args.scenario,
        n_cases: args.instances,
        drift_at: args.drift_at.unwrap_or(args.instances / 2),
        seed: args.seed,
        noise: args.noise,
        interleave: args.interleave,
    };
    scenario.validate()?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(|source| Error::Open {
                path: path.clone(),
                source,
            })?;
            let events = scenario.write_csv(BufWriter::new(file))?;
            let truth = path.with_extension("truth.json");
            fs::write(&truth, serde_json::to_string_pretty(&scenario.truth())?)?;
            eprintln!(
                "wrote {events} events of {} cases to {} (ground truth in {})",
                scenario.n_cases,
                path.display(),
                truth.display()
            );
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            scenario.write_csv(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}
