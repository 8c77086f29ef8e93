//! The `ffc` command line.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, TrySendError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{AppConfig, GridOverrides};
use crate::error::{Error, Result};
use crate::evaluator::{run_evaluation, CsvSinks, DEFAULT_TESTS};
use crate::grid::GridSpec;
use crate::model::{TrainingSession, TransitionTable};
use crate::predictor::{predict_play, Prediction};
use crate::simulator::{self, builtin_plays, LogSink, Play, PlayBook, SimulatorConfig};
use crate::vision::{DatagramReceiver, DatagramSender, PackageReader};

/// Bound on packages buffered between the UDP receiver and the trainer.
const LISTEN_QUEUE: usize = 1024;

#[derive(Debug, Parser)]
#[command(
    name = "ffc",
    version,
    about = "Learn and predict opponent team formations"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(flatten)]
    grid: GridArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Grid")]
struct GridArgs {
    /// Grid cells along the field length (x).
    #[arg(long, global = true)]
    cells_x: Option<u32>,
    /// Grid cells along the field width (y).
    #[arg(long, global = true)]
    cells_y: Option<u32>,
    /// Field origin x in millimetres.
    #[arg(long, global = true, allow_negative_numbers = true)]
    field_min_x: Option<f64>,
    /// Field origin y in millimetres.
    #[arg(long, global = true, allow_negative_numbers = true)]
    field_min_y: Option<f64>,
    /// Field extent along x in millimetres.
    #[arg(long, global = true)]
    field_width: Option<f64>,
    /// Field extent along y in millimetres.
    #[arg(long, global = true)]
    field_height: Option<f64>,
}

impl GridArgs {
    fn overrides(&self) -> GridOverrides {
        GridOverrides {
            field_min_x: self.field_min_x,
            field_min_y: self.field_min_y,
            field_width: self.field_width,
            field_height: self.field_height,
            cells_x: self.cells_x,
            cells_y: self.cells_y,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic vision feed of plays and noise.
    Simulate(SimulateArgs),
    /// Count state transitions from a package log or a live UDP feed.
    Train(TrainArgs),
    /// Predict the next formations from one observed package.
    Predict(PredictArgs),
    /// Score predictions against the plays over many random trials.
    Evaluate(EvaluateArgs),
    /// List every state index with its decomposed digits.
    States,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// RNG seed; drawn from entropy and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of draws (each emits 1 noise or 3 play packages).
    #[arg(long)]
    draws: u64,
    /// Seconds between packages; 0 runs as fast as possible.
    #[arg(long, default_value_t = 2.0)]
    interval: f64,
    /// Write a package log to this file.
    #[arg(long, conflicts_with = "udp", required_unless_present = "udp")]
    out: Option<PathBuf>,
    /// Send packages as UDP datagrams to HOST:PORT.
    #[arg(long)]
    udp: Option<String>,
    /// Plays file; defaults to the bundled plays.
    #[arg(long)]
    plays: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Package log to train from.
    #[arg(
        long = "in",
        conflicts_with = "listen",
        required_unless_present = "listen"
    )]
    input: Option<PathBuf>,
    /// Listen for UDP packages on HOST:PORT.
    #[arg(long)]
    listen: Option<String>,
    /// Output table file.
    #[arg(long)]
    table: PathBuf,
    /// Stop after this many packages.
    #[arg(long)]
    packages: Option<u64>,
    /// Reset the previous formation at every draw boundary in the log.
    #[arg(long)]
    episodic: bool,
    /// Stop listening after this many idle seconds.
    #[arg(long, default_value_t = 10.0)]
    idle_timeout: f64,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Trained table file.
    #[arg(long)]
    table: PathBuf,
    /// Package log whose first package is the observed formation.
    #[arg(long)]
    formation: PathBuf,
    /// Formations to predict beyond the observed one.
    #[arg(long, default_value_t = 2)]
    steps: usize,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Trained table file.
    #[arg(long)]
    table: PathBuf,
    /// Plays file; defaults to the bundled plays.
    #[arg(long)]
    plays: Option<PathBuf>,
    /// Number of random trials.
    #[arg(long, default_value_t = DEFAULT_TESTS)]
    tests: usize,
    /// RNG seed; drawn from entropy and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for running_avg.csv and confidence.csv.
    #[arg(long)]
    csv_dir: Option<PathBuf>,
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        // Downstream reader went away (e.g. `| head`); nothing left to report.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = AppConfig::file_from_env()?;
    let plays_flag = match &cli.command {
        Command::Simulate(a) => a.plays.clone(),
        Command::Evaluate(a) => a.plays.clone(),
        _ => None,
    };
    let config = AppConfig::resolve(cli.grid.overrides(), plays_flag, cli.verbose, file.as_ref())?;
    init_logging(config.verbosity);

    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Simulate(args) => simulate(&config, args, &mut out),
        Command::Train(args) => train(&config, args, &mut out),
        Command::Predict(args) => predict(&config, args, &mut out),
        Command::Evaluate(args) => evaluate(&config, args, &mut out),
        Command::States => write_states(&config.grid, &mut out),
    }
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
}

fn load_plays(config: &AppConfig) -> Result<Vec<Play>> {
    match &config.plays {
        Some(path) => Ok(PlayBook::load(path, &config.grid)?.plays),
        None => {
            let plays = builtin_plays();
            PlayBook {
                plays: plays.clone(),
            }
            .validate(&config.grid)?;
            Ok(plays)
        }
    }
}

fn seed_or_entropy(seed: Option<u64>, what: &str) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("{what} seed: {s}");
        s
    })
}

fn simulate(config: &AppConfig, args: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let plays = load_plays(config)?;
    let sim = SimulatorConfig {
        seed: seed_or_entropy(args.seed, "simulate"),
        interval: args.interval,
        draws: args.draws,
    };
    let summary = match (&args.out, &args.udp) {
        (Some(path), _) => {
            let mut sink = LogSink::new(BufWriter::new(File::create(path)?));
            simulator::run(config.grid, plays, &sim, &mut sink).inspect_err(|_| {
                eprintln!("note: {} may hold partial output", path.display());
            })?
        }
        (None, Some(endpoint)) => {
            let mut sink = DatagramSender::connect(endpoint.as_str())?;
            simulator::run(config.grid, plays, &sim, &mut sink)?
        }
        (None, None) => return Err(Error::validation("one of --out or --udp is required")),
    };
    writeln!(
        out,
        "emitted {} packages in {} draws: {} play, {} noise ({:.1}% play)",
        summary.packages,
        summary.draws,
        summary.play_packages,
        summary.noise_packages,
        100.0 * summary.play_fraction()
    )?;
    Ok(())
}

fn train(config: &AppConfig, args: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut session = TrainingSession::new(config.grid)?;
    let mut dropped = 0;
    if let Some(path) = &args.input {
        let mut reader = PackageReader::new(BufReader::new(File::open(path)?));
        session.consume_log(&mut reader, args.episodic, args.packages)?;
    } else if let Some(endpoint) = &args.listen {
        if args.episodic {
            return Err(Error::validation(
                "--episodic needs draw boundaries, which only log files carry",
            ));
        }
        dropped = listen(&mut session, endpoint, args.packages, args.idle_timeout)?;
    }
    let table = session.table();
    let mut sink = BufWriter::new(File::create(&args.table)?);
    table.save(&mut sink)?;
    writeln!(
        out,
        "consumed {} packages ({} skipped, {} dropped), recorded {} transitions, {} distinct",
        session.packages_consumed(),
        session.skipped(),
        dropped,
        table.total_recorded(),
        table.nonzero_entries()
    )?;
    Ok(())
}

/// Runs a UDP receiver thread feeding the session through a bounded queue.
/// Returns how many packages were dropped because the queue was full.
fn listen(
    session: &mut TrainingSession,
    endpoint: &str,
    limit: Option<u64>,
    idle_timeout: f64,
) -> Result<u64> {
    if !(idle_timeout > 0.0 && idle_timeout.is_finite()) {
        return Err(Error::validation("--idle-timeout must be positive"));
    }
    let mut receiver = DatagramReceiver::bind(endpoint)?;
    receiver
        .socket()
        .set_read_timeout(Some(Duration::from_secs_f64(idle_timeout)))?;
    log::info!("listening on {}", receiver.local_addr()?);

    let (tx, rx) = mpsc::sync_channel(LISTEN_QUEUE);
    let dropped = Arc::new(AtomicU64::new(0));
    let producer_dropped = Arc::clone(&dropped);
    let producer = thread::spawn(move || -> Result<()> {
        while let Some(pkg) = receiver.recv()? {
            match tx.try_send(pkg) {
                Ok(()) => {}
                Err(TrySendError::Full(_)) => {
                    producer_dropped.fetch_add(1, Ordering::Relaxed);
                }
                Err(TrySendError::Disconnected(_)) => break,
            }
        }
        Ok(())
    });

    let mut taken = 0u64;
    while limit.is_none_or(|l| taken < l) {
        match rx.recv() {
            Ok(pkg) => {
                session.consume(&pkg)?;
                taken += 1;
            }
            Err(_) => break,
        }
    }
    drop(rx);
    producer
        .join()
        .map_err(|_| Error::Io(io::Error::other("receiver thread panicked")))??;
    Ok(dropped.load(Ordering::Relaxed))
}

fn load_table(config: &AppConfig, path: &Path) -> Result<TransitionTable> {
    TransitionTable::load_for(BufReader::new(File::open(path)?), &config.grid)
}

#[derive(Serialize)]
struct RobotView {
    id: u8,
    t: [u32; 2],
    p: [u32; 2],
    v: [u32; 2],
    index: usize,
    p_transition: f64,
}

#[derive(Serialize)]
struct StepView {
    step: usize,
    centroid: [u32; 2],
    p_centroid: f64,
    p_formation: f64,
    confidence: f64,
    centroid_unseen: bool,
    unseen_ids: Vec<u8>,
    robots: Vec<RobotView>,
}

fn step_view(spec: &GridSpec, step: usize, pred: &Prediction) -> Result<StepView> {
    let robots = pred
        .formation
        .states()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(RobotView {
                id: i as u8 + 1,
                t: [s.centroid.cx, s.centroid.cy],
                p: [s.position.cx, s.position.cy],
                v: [s.velocity.cx, s.velocity.cy],
                index: spec.encode(s)?.value(),
                p_transition: pred.per_player_p[i],
            })
        })
        .collect::<Result<_>>()?;
    let c = pred.formation.centroid();
    Ok(StepView {
        step,
        centroid: [c.cx, c.cy],
        p_centroid: pred.p_centroid,
        p_formation: pred.p_formation,
        confidence: pred.confidence,
        centroid_unseen: pred.centroid_unseen,
        unseen_ids: pred.unseen_ids.clone(),
        robots,
    })
}

fn predict(config: &AppConfig, args: PredictArgs, out: &mut dyn Write) -> Result<()> {
    let table = load_table(config, &args.table)?;
    let mut reader = PackageReader::new(BufReader::new(File::open(&args.formation)?));
    let initial = reader.read_package()?.ok_or_else(|| {
        Error::validation(format!("{} holds no packages", args.formation.display()))
    })?;
    let predictions = predict_play(&table, &initial, args.steps)?;
    let views = predictions
        .iter()
        .enumerate()
        .map(|(k, p)| step_view(&config.grid, k + 1, p))
        .collect::<Result<Vec<_>>>()?;

    if args.json {
        serde_json::to_writer_pretty(&mut *out, &views).map_err(io::Error::from)?;
        writeln!(out)?;
        return Ok(());
    }
    for view in &views {
        writeln!(
            out,
            "step {}: centroid ({},{}) p_centroid={} p_formation={} confidence={}",
            view.step,
            view.centroid[0],
            view.centroid[1],
            view.p_centroid,
            view.p_formation,
            view.confidence
        )?;
        for r in &view.robots {
            let flag = if view.unseen_ids.contains(&r.id) {
                " unseen"
            } else {
                ""
            };
            writeln!(
                out,
                "  robot {} <({},{}),({},{}),({},{})> index {} p={}{flag}",
                r.id, r.t[0], r.t[1], r.p[0], r.p[1], r.v[0], r.v[1], r.index, r.p_transition
            )?;
        }
    }
    Ok(())
}

fn evaluate(config: &AppConfig, args: EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let table = load_table(config, &args.table)?;
    let plays = load_plays(config)?;
    let seed = seed_or_entropy(args.seed, "evaluate");
    let report = match &args.csv_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut running = BufWriter::new(File::create(dir.join("running_avg.csv"))?);
            let mut confidence = BufWriter::new(File::create(dir.join("confidence.csv"))?);
            let report = run_evaluation(
                &table,
                &plays,
                args.tests,
                seed,
                Some(CsvSinks {
                    running_avg: &mut running,
                    confidence: &mut confidence,
                }),
            )?;
            running.flush()?;
            confidence.flush()?;
            report
        }
        None => run_evaluation(&table, &plays, args.tests, seed, None)?,
    };
    out.write_all(report.summary().as_bytes())?;
    Ok(())
}

/// One TSV row per state: `index<TAB>t_x,t_y<TAB>p_x,p_y<TAB>v_x,v_y`.
pub fn write_states(spec: &GridSpec, out: &mut dyn Write) -> Result<()> {
    let mut out = BufWriter::new(out);
    for (index, s) in spec.enumerate_states() {
        writeln!(
            out,
            "{index}\t{},{}\t{},{}\t{},{}",
            s.centroid.cx,
            s.centroid.cy,
            s.position.cx,
            s.position.cy,
            s.velocity.cx,
            s.velocity.cy
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn states_tsv_layout() {
        let mut buf = Vec::new();
        write_states(&GridSpec::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<_> = text.lines().collect();
        assert_eq!(rows.len(), 216);
        assert_eq!(rows[0], "0\t0,0\t0,0\t0,0");
        assert_eq!(rows[138], "138\t1,1\t2,1\t0,0");
        assert_eq!(rows[215], "215\t2,1\t2,1\t2,1");
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["ffc", "bogus"]), 1);
        assert_eq!(main_with_args(["ffc", "states", "--nope"]), 1);
        assert_eq!(main_with_args(["ffc", "--cells-x", "0", "states"]), 1);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
