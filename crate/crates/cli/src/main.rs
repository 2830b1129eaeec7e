//! `emachine`: run E-machine experiments and verification suites.
//!
//! Exit status: 0 success, 1 invalid input, 2 runtime failure, 3 a check
//! or acceptance criterion failed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use emachine_core::afield::AfMode;
use emachine_core::epmm::StepMode;
use emachine_core::experiment::{
    run, write_artifacts, ExperimentConfig, Kind, Payload, RobotExamPayload, RobotTrainPayload, SpikePayload,
};
use emachine_core::robot::{BrainConfig, MAX_CYCLES};
use emachine_core::verify::{verify, DEFAULT_SEED};
use emachine_core::Error;

#[derive(Parser)]
#[command(name = "emachine", version, about = "Simulate primitive E-machines and protein-molecule ensembles")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every random stream; overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for traces and summaries.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Print progress and extra trace columns.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run any experiment config.
    Run {
        /// Expected kind; must match the config when given.
        kind: Option<String>,
    },
    /// Winner-take-all network driven as a symbolic machine.
    Ann0,
    /// Associative field AF-0 / AF-1.
    Af {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Trace CSV path, relative to the output directory.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Learn a Mealy machine by demonstration and examine it.
    Fsm,
    /// Tape-world robot.
    Robot {
        #[command(subcommand)]
        action: RobotCommand,
    },
    /// Single protein-molecule machine.
    Pmm {
        #[arg(value_enum)]
        task: PmmTask,
    },
    /// Ensembles coupled through a membrane.
    Epmm {
        #[command(subcommand)]
        action: EpmmCommand,
    },
    /// Run a named acceptance suite (`all` for every criterion).
    Verify { suite: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Af0,
    Af1,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PmmTask {
    Path,
    Master,
    Ghk,
}

#[derive(Subcommand)]
enum RobotCommand {
    /// Teacher-forced training on a JSON array of tapes.
    Train {
        #[arg(long)]
        tapes: Option<PathBuf>,
        /// Brain file, relative to the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Examine a trained brain on one tape.
    Exam {
        #[arg(long)]
        brain: Option<PathBuf>,
        #[arg(long)]
        tape: Option<String>,
        /// Also run with imagined tape and compare.
        #[arg(long)]
        mental: bool,
    },
}

#[derive(Subcommand)]
enum EpmmCommand {
    /// Coupled membrane run from a config.
    Run,
    /// Two-channel spike demonstration (defaults when no config is given).
    Spike {
        #[arg(long, value_enum)]
        mode: Option<ModeStep>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeStep {
    TauLeap,
    Exact,
}

enum Failure {
    Invalid(String),
    Runtime(String),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Checks) => ExitCode::from(3),
    }
}

fn load(g: &Global, expected: Kind) -> Result<ExperimentConfig, Failure> {
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| Failure::Invalid(format!("{} needs --config", expected.as_str())))?;
    let cfg = ExperimentConfig::from_file(path)?;
    if cfg.kind != expected {
        return Err(Failure::Invalid(format!(
            "{}: config kind is {}, expected {}",
            path.display(),
            cfg.kind.as_str(),
            expected.as_str()
        )));
    }
    Ok(cfg)
}

fn load_optional(g: &Global, expected: Kind) -> Result<Option<ExperimentConfig>, Failure> {
    match g.config {
        Some(_) => load(g, expected).map(Some),
        None => Ok(None),
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    let config = match &cli.command {
        Command::Verify { suite } => return run_verify(g, suite),
        Command::Run { kind } => {
            let path = g.config.as_deref().ok_or_else(|| Failure::Invalid("run needs --config".into()))?;
            let cfg = ExperimentConfig::from_file(path)?;
            if let Some(k) = kind {
                let k = Kind::parse(k)?;
                if k != cfg.kind {
                    return Err(Failure::Invalid(format!(
                        "config kind is {}, not {}",
                        cfg.kind.as_str(),
                        k.as_str()
                    )));
                }
            }
            cfg
        }
        Command::Ann0 => load(g, Kind::Ann0)?,
        Command::Af { mode, trace } => {
            let mut cfg = load(g, Kind::Af)?;
            if let Payload::Af(p) = &mut cfg.payload {
                if let Some(m) = mode {
                    p.config.mode = match m {
                        ModeArg::Af0 => AfMode::Af0,
                        ModeArg::Af1 => AfMode::Af1,
                    };
                }
                p.dump_e |= g.verbose;
            }
            if trace.is_some() {
                cfg.trace.clone_from(trace);
            }
            cfg
        }
        Command::Fsm => load(g, Kind::Fsm)?,
        Command::Robot { action: RobotCommand::Train { tapes, out, episodes } } => robot_train(g, tapes, out, *episodes)?,
        Command::Robot { action: RobotCommand::Exam { brain, tape, mental } } => robot_exam(g, brain, tape, *mental)?,
        Command::Pmm { task } => {
            let cfg = load(g, Kind::Pmm)?;
            let actual = match &cfg.payload {
                Payload::Pmm(emachine_core::experiment::PmmPayload::Path { .. }) => PmmTask::Path,
                Payload::Pmm(emachine_core::experiment::PmmPayload::Master { .. }) => PmmTask::Master,
                _ => PmmTask::Ghk,
            };
            if actual != *task {
                return Err(Failure::Invalid("config task does not match the pmm subcommand".into()));
            }
            cfg
        }
        Command::Epmm { action: EpmmCommand::Run } => load(g, Kind::Epmm)?,
        Command::Epmm { action: EpmmCommand::Spike { mode } } => {
            let mut cfg = load_optional(g, Kind::Spike)?.unwrap_or_else(|| {
                let payload = SpikePayload {
                    demo: Default::default(),
                    mode: StepMode::TauLeap,
                    record_every: 10,
                    sub_factor: 0.1,
                };
                let mut c = ExperimentConfig::new(Kind::Spike, 0, Payload::Spike(payload));
                c.nonpaper = true;
                c
            });
            if let (Some(m), Payload::Spike(p)) = (mode, &mut cfg.payload) {
                p.mode = match m {
                    ModeStep::TauLeap => StepMode::TauLeap,
                    ModeStep::Exact => StepMode::Exact,
                };
            }
            cfg
        }
    };
    execute(g, config)
}

fn robot_train(
    g: &Global,
    tapes: &Option<PathBuf>,
    out: &Option<PathBuf>,
    episodes: Option<usize>,
) -> Result<ExperimentConfig, Failure> {
    let mut cfg = load_optional(g, Kind::RobotTrain)?.unwrap_or_else(|| {
        let payload = RobotTrainPayload {
            tapes: Vec::new(),
            episodes: 1,
            brain: BrainConfig::default(),
            max_cycles: MAX_CYCLES,
            brain_file: "brain.json".into(),
        };
        ExperimentConfig::new(Kind::RobotTrain, 0, Payload::RobotTrain(payload))
    });
    if let Payload::RobotTrain(p) = &mut cfg.payload {
        if let Some(path) = tapes {
            p.tapes = read_tapes(path)?;
        }
        if let Some(o) = out {
            p.brain_file = o.to_string_lossy().into_owned();
        }
        if let Some(e) = episodes {
            p.episodes = e;
        }
        if p.tapes.is_empty() {
            return Err(Failure::Invalid("no training tapes; pass --tapes or a config".into()));
        }
    }
    Ok(cfg)
}

fn read_tapes(path: &Path) -> Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Invalid(format!("{}: expected a JSON array of tape strings: {e}", path.display())))
}

fn robot_exam(
    g: &Global,
    brain: &Option<PathBuf>,
    tape: &Option<String>,
    mental: bool,
) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match load_optional(g, Kind::RobotExam)? {
        Some(c) => c,
        None => {
            let brain = brain.clone().ok_or_else(|| Failure::Invalid("robot exam needs --brain".into()))?;
            let tape = tape.clone().ok_or_else(|| Failure::Invalid("robot exam needs --tape".into()))?;
            let payload = RobotExamPayload { brain, tape, mental, max_cycles: MAX_CYCLES };
            ExperimentConfig::new(Kind::RobotExam, 0, Payload::RobotExam(payload))
        }
    };
    if let Payload::RobotExam(p) = &mut cfg.payload {
        if let Some(b) = brain {
            p.brain.clone_from(b);
        }
        if let Some(t) = tape {
            p.tape.clone_from(t);
        }
        p.mental |= mental;
    }
    Ok(cfg)
}

fn execute(g: &Global, mut config: ExperimentConfig) -> Result<(), Failure> {
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if g.verbose {
        eprintln!("running {} with seed {}", config.kind.as_str(), config.seed);
    }
    let out = run(&config)?;
    let written = write_artifacts(&g.out_dir, &out.artifacts).map_err(|e| Failure::Runtime(e.to_string()))?;
    if g.verbose {
        for p in &written {
            eprintln!("wrote {}", p.display());
        }
    }
    emit(&out.summary);
    if out.passed {
        Ok(())
    } else {
        eprintln!("one or more built-in checks failed");
        Err(Failure::Checks)
    }
}

fn run_verify(g: &Global, suite: &str) -> Result<(), Failure> {
    let report = verify(suite, g.seed.unwrap_or(DEFAULT_SEED))?;
    for c in &report.criteria {
        eprintln!(
            "criterion {:>2} [{}]: {} ({:.2} s) {}",
            c.criterion,
            c.suite,
            if c.passed { "PASS" } else { "FAIL" },
            c.seconds,
            c.detail
        );
    }
    emit(&report);
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

/// Pretty JSON on stdout; a closed pipe is not an error.
fn emit(value: &impl serde::Serialize) {
    let text = serde_json::to_string_pretty(value).unwrap_or_default();
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}
