//! Configuration-driven experiment runs.
//!
//! A config is a JSON object
//!
//! ```json
//! { "kind": "af", "seed": 7, "payload": { ... } }
//! ```
//!
//! with optional `name`, `trace`, `summary`, `nonpaper` and `note` fields.
//! The seed is mandatory. [`run`] computes every artifact in memory, so a
//! failing run leaves nothing behind; [`write_artifacts`] then commits
//! them with a write-then-rename per file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::afield::{demonstrate_mealy, make_fsm, AfConfig, AfMode, AssociativeField, AssociativeProgram, MealyCoding};
use crate::ann0::{max_current, Ann0Params, DriveSchedule, SymbolDrive};
use crate::codes::{Similarity, SymbolVector};
use crate::epmm::{run_membrane, Ensemble, MembraneModel, MembraneParams, MembraneTrace, Messenger, SpikeDemo, StepMode};
use crate::error::{Error, Result};
use crate::machines::{equivalent, BlackBox, Equivalence, MealySpec, Probe};
use crate::pmm::{
    channel5_spec, conservation_residual, ghk_current, master_run, nernst, sample_path, stationary, Channel5Params,
    Omega, PiecewiseInput, PmmSpec,
};
use crate::robot::{
    exam_mental, exam_real, teacher_episode, train, Brain, BrainConfig, TapeSymbol, TapeWorld, TraceRow, MAX_CYCLES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Ann0,
    Af,
    Fsm,
    RobotTrain,
    RobotExam,
    Pmm,
    Epmm,
    Spike,
}

impl Kind {
    pub const ALL: [Kind; 8] =
        [Kind::Ann0, Kind::Af, Kind::Fsm, Kind::RobotTrain, Kind::RobotExam, Kind::Pmm, Kind::Epmm, Kind::Spike];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Ann0 => "ann0",
            Kind::Af => "af",
            Kind::Fsm => "fsm",
            Kind::RobotTrain => "robot-train",
            Kind::RobotExam => "robot-exam",
            Kind::Pmm => "pmm",
            Kind::Epmm => "epmm",
            Kind::Spike => "spike",
        }
    }

    pub fn parse(s: &str) -> Result<Kind> {
        Kind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Kind::ALL.iter().map(|k| k.as_str()).collect();
            Error::Config(format!("unknown experiment kind '{s}'; expected one of {}", names.join(", ")))
        })
    }
}

/// Gains come from the program; these are the remaining network constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    #[serde(default = "default_noise")]
    pub noise_amp: f64,
}

fn default_noise() -> f64 {
    1e-6
}

fn default_trace_every() -> usize {
    10
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ann0Payload {
    pub params: NetworkParams,
    pub schedule: DriveSchedule,
    pub program: AssociativeProgram,
    pub inputs: Vec<SymbolVector>,
    /// Integration steps between trace rows.
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AfPayload {
    /// The experiment seed replaces `config.seed`.
    #[serde(default)]
    pub config: AfConfig,
    pub program: AssociativeProgram,
    #[serde(default)]
    pub estate: Option<Vec<f64>>,
    pub inputs: Vec<SymbolVector>,
    /// Per-cycle clamped outputs; `null` leaves a cycle autonomous.
    #[serde(default)]
    pub targets: Vec<Option<SymbolVector>>,
    #[serde(default)]
    pub write_enable: bool,
    /// Adds the full E-state to every trace row.
    #[serde(default)]
    pub dump_e: bool,
}

fn default_depth() -> usize {
    6
}

fn default_demo_cycles() -> usize {
    10_000
}

fn default_xinh() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsmPayload {
    pub machine: MealySpec,
    /// Equivalence is examined on every input sequence up to this length.
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_demo_cycles")]
    pub max_cycles: usize,
    #[serde(default = "default_xinh")]
    pub xinh: f64,
    /// Input sequence replayed through teacher and learner for the trace.
    #[serde(default)]
    pub inputs: Vec<String>,
}

fn default_brain_file() -> String {
    "brain.json".into()
}

fn default_max_cycles() -> usize {
    MAX_CYCLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotTrainPayload {
    pub tapes: Vec<String>,
    #[serde(default = "one")]
    pub episodes: usize,
    /// The experiment seed replaces `brain.seed`.
    #[serde(default)]
    pub brain: BrainConfig,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: usize,
    /// Where the trained brain is written, relative to the output directory.
    #[serde(default = "default_brain_file")]
    pub brain_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotExamPayload {
    pub brain: PathBuf,
    pub tape: String,
    #[serde(default)]
    pub mental: bool,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: usize,
}

/// A protein-molecule machine given inline or by one of the built-in
/// channel shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MachineSource {
    Spec(PmmSpec),
    Channel5(Channel5Params),
    Sodium,
    Potassium,
}

impl MachineSource {
    pub fn build(&self) -> Result<PmmSpec> {
        match self {
            MachineSource::Spec(s) => {
                s.validate()?;
                Ok(s.clone())
            }
            MachineSource::Channel5(p) => channel5_spec(p),
            MachineSource::Sodium => channel5_spec(&Channel5Params::sodium()),
            MachineSource::Potassium => channel5_spec(&Channel5Params::potassium()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase", deny_unknown_fields)]
pub enum PmmPayload {
    /// One exactly sampled trajectory.
    Path { machine: MachineSource, input: PiecewiseInput, s0: usize, t_end: f64 },
    /// Master-equation integration.
    Master {
        machine: MachineSource,
        input: PiecewiseInput,
        p0: Vec<f64>,
        t_end: f64,
        dt: f64,
        #[serde(default = "one")]
        record_every: usize,
    },
    /// Per-state GHK current over a voltage sweep.
    Ghk { machine: MachineSource, v_from: f64, v_to: f64, v_step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    /// Stationary distribution at the resting potential.
    Rest,
    State(usize),
    Occupations(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub machine: MachineSource,
    pub n: u64,
    #[serde(default = "rest")]
    pub initial: Initial,
}

fn rest() -> Initial {
    Initial::Rest
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpmmPayload {
    pub ensembles: Vec<EnsembleSpec>,
    pub membrane: MembraneParams,
    #[serde(default)]
    pub messengers: Vec<Messenger>,
    #[serde(default)]
    pub mode: StepMode,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn default_sub_factor() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikePayload {
    #[serde(default)]
    pub demo: SpikeDemo,
    #[serde(default)]
    pub mode: StepMode,
    #[serde(default = "default_trace_every")]
    pub record_every: usize,
    /// Stimulus scale of the comparison run.
    #[serde(default = "default_sub_factor")]
    pub sub_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Ann0(Ann0Payload),
    Af(AfPayload),
    Fsm(FsmPayload),
    RobotTrain(RobotTrainPayload),
    RobotExam(RobotExamPayload),
    Pmm(PmmPayload),
    Epmm(EpmmPayload),
    Spike(SpikePayload),
}

impl Payload {
    fn to_value(&self) -> Value {
        let v = match self {
            Payload::Ann0(p) => serde_json::to_value(p),
            Payload::Af(p) => serde_json::to_value(p),
            Payload::Fsm(p) => serde_json::to_value(p),
            Payload::RobotTrain(p) => serde_json::to_value(p),
            Payload::RobotExam(p) => serde_json::to_value(p),
            Payload::Pmm(p) => serde_json::to_value(p),
            Payload::Epmm(p) => serde_json::to_value(p),
            Payload::Spike(p) => serde_json::to_value(p),
        };
        v.unwrap_or(Value::Null)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Kind,
    seed: u64,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    trace: Option<PathBuf>,
    #[serde(default)]
    summary: Option<PathBuf>,
    #[serde(default)]
    nonpaper: bool,
    #[serde(default)]
    note: Option<String>,
    payload: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    /// Prefix of the default artifact names; defaults to the kind.
    pub name: Option<String>,
    /// Trace CSV path, relative to the output directory.
    pub trace: Option<PathBuf>,
    /// Summary JSON path, relative to the output directory.
    pub summary: Option<PathBuf>,
    /// Marks configs whose values are illustrative rather than sourced.
    pub nonpaper: bool,
    pub note: Option<String>,
    pub payload: Payload,
}

fn schema_error(prefix: &str, e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    let path = match (prefix.is_empty(), path.as_str()) {
        (true, _) => path,
        (false, ".") => prefix.to_string(),
        (false, p) => format!("{prefix}.{p}"),
    };
    Error::Config(format!("{path}: {}", e.into_inner()))
}

fn payload_of<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| schema_error("payload", e))
}

impl ExperimentConfig {
    pub fn new(kind: Kind, seed: u64, payload: Payload) -> Self {
        ExperimentConfig { kind, seed, name: None, trace: None, summary: None, nonpaper: false, note: None, payload }
    }

    /// Parses and schema-checks a config. Errors name the offending JSON path.
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| schema_error("", e))?;
        let payload = match raw.kind {
            Kind::Ann0 => Payload::Ann0(payload_of(raw.payload)?),
            Kind::Af => Payload::Af(payload_of(raw.payload)?),
            Kind::Fsm => Payload::Fsm(payload_of(raw.payload)?),
            Kind::RobotTrain => Payload::RobotTrain(payload_of(raw.payload)?),
            Kind::RobotExam => Payload::RobotExam(payload_of(raw.payload)?),
            Kind::Pmm => Payload::Pmm(payload_of(raw.payload)?),
            Kind::Epmm => Payload::Epmm(payload_of(raw.payload)?),
            Kind::Spike => Payload::Spike(payload_of(raw.payload)?),
        };
        Ok(ExperimentConfig {
            kind: raw.kind,
            seed: raw.seed,
            name: raw.name,
            trace: raw.trace,
            summary: raw.summary,
            nonpaper: raw.nonpaper,
            note: raw.note,
            payload,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        let mut m = Map::new();
        m.insert("kind".into(), json!(self.kind.as_str()));
        m.insert("seed".into(), json!(self.seed));
        if let Some(n) = &self.name {
            m.insert("name".into(), json!(n));
        }
        if let Some(p) = &self.trace {
            m.insert("trace".into(), json!(p));
        }
        if let Some(p) = &self.summary {
            m.insert("summary".into(), json!(p));
        }
        if self.nonpaper {
            m.insert("nonpaper".into(), json!(true));
        }
        if let Some(n) = &self.note {
            m.insert("note".into(), json!(n));
        }
        m.insert("payload".into(), self.payload.to_value());
        serde_json::to_string_pretty(&Value::Object(m)).unwrap_or_default()
    }

    fn stem(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.as_str().to_string())
    }

    pub fn trace_path(&self) -> PathBuf {
        self.trace.clone().unwrap_or_else(|| PathBuf::from(format!("{}_trace.csv", self.stem())))
    }

    pub fn summary_path(&self) -> PathBuf {
        self.summary.clone().unwrap_or_else(|| PathBuf::from(format!("{}_summary.json", self.stem())))
    }
}

/// A file to be written, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub summary: Value,
    /// All built-in invariant checks held.
    pub passed: bool,
}

/// Rows of a CSV file with a fixed header.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt_vec(v: &Option<SymbolVector>) -> String {
    v.as_ref().map_or_else(|| "NULL".to_string(), ToString::to_string)
}

fn membrane_table(trace: &MembraneTrace) -> Table {
    let mut t = Table::new(trace.header.clone());
    for r in &trace.rows {
        t.push(r.iter().copied().map(num).collect());
    }
    t
}

struct Outcome {
    trace: Table,
    summary: Map<String, Value>,
    checks: Vec<(&'static str, bool)>,
    extra: Vec<Artifact>,
}

impl Outcome {
    fn new(trace: Table) -> Self {
        Outcome { trace, summary: Map::new(), checks: Vec::new(), extra: Vec::new() }
    }

    fn put(&mut self, key: &str, v: impl Serialize) {
        self.summary.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }
}

/// Runs an experiment without touching the output directory.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let seed = config.seed;
    let mut out = match &config.payload {
        Payload::Ann0(p) => run_ann0(p, seed)?,
        Payload::Af(p) => run_af(p, seed)?,
        Payload::Fsm(p) => run_fsm(p, seed)?,
        Payload::RobotTrain(p) => run_robot_train(p, seed)?,
        Payload::RobotExam(p) => run_robot_exam(p)?,
        Payload::Pmm(p) => run_pmm(p, seed)?,
        Payload::Epmm(p) => run_epmm(p, seed)?,
        Payload::Spike(p) => run_spike(p, seed)?,
    };
    let passed = out.checks.iter().all(|c| c.1);
    let mut summary = Map::new();
    summary.insert("kind".into(), json!(config.kind.as_str()));
    summary.insert("seed".into(), json!(seed));
    if config.nonpaper {
        summary.insert("nonpaper".into(), json!(true));
    }
    let checks: Map<String, Value> = out.checks.iter().map(|(k, v)| ((*k).to_string(), json!(v))).collect();
    summary.insert("checks".into(), Value::Object(checks));
    summary.insert("passed".into(), json!(passed));
    summary.insert("results".into(), Value::Object(std::mem::take(&mut out.summary)));
    let summary = Value::Object(summary);
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    let mut artifacts = vec![
        Artifact { path: config.trace_path(), bytes: out.trace.bytes()? },
        Artifact { path: config.summary_path(), bytes: text.into_bytes() },
    ];
    artifacts.append(&mut out.extra);
    Ok(RunOutput { artifacts, summary, passed })
}

/// Writes every artifact under `dir`. Each file is first written to a
/// hidden sibling and renamed into place once all of them are complete;
/// on failure the temporaries are removed.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let result = (|| -> Result<()> {
        for a in artifacts {
            let target = dir.join(&a.path);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let tmp = target.with_file_name(format!(".{name}.partial"));
            fs::write(&tmp, &a.bytes)?;
            staged.push((tmp, target));
        }
        Ok(())
    })();
    if let Err(e) = result {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
        return Err(e);
    }
    let mut written = Vec::new();
    for (tmp, target) in staged {
        fs::rename(&tmp, &target)?;
        written.push(target);
    }
    Ok(written)
}

fn run_ann0(p: &Ann0Payload, seed: u64) -> Result<Outcome> {
    let np = &p.params;
    let params = Ann0Params::from_program(&p.program, np.alpha, np.beta, np.tau, np.noise_amp)?;
    let reals: Vec<Vec<f64>> = p.inputs.iter().map(SymbolVector::as_reals).collect();
    let scale = max_current(&params, &reals)?;
    let mut drive = SymbolDrive::new(params.clone(), p.schedule.clone(), scale, seed)?.with_trace(p.trace_every);
    let samples = reals.iter().map(|x| drive.cycle(x)).collect::<Result<Vec<_>>>()?;
    let outcome = drive.finish();

    let (n, k) = (params.n(), params.k());
    let header = ["t".to_string()]
        .into_iter()
        .chain((1..=n).map(|i| format!("u_{i}")))
        .chain((1..=n).map(|i| format!("r_{i}")))
        .chain(["q".to_string()])
        .chain((1..=k).map(|i| format!("y_{i}")));
    let mut table = Table::new(header);
    for row in &outcome.trace {
        let mut r = vec![num(row.t)];
        r.extend(row.u.iter().copied().map(num));
        r.extend(row.r.iter().copied().map(num));
        r.push(num(row.q));
        r.extend(row.y.iter().copied().map(num));
        table.push(r);
    }
    let mut o = Outcome::new(table);
    let outputs: Vec<Option<SymbolVector>> = samples.iter().map(|s| s.symbol.clone()).collect();
    o.put("outputs", &outputs);
    o.put("winners", samples.iter().map(|s| s.winner).collect::<Vec<_>>());
    o.put("warnings", &outcome.warnings);
    let unique = {
        let xs: Vec<&SymbolVector> = p.program.rows().map(|r| r.0).collect();
        xs.iter().enumerate().all(|(i, x)| !xs[..i].contains(x))
    };
    if unique {
        let config = AfConfig::af0(Similarity::ScalarProduct, p.schedule.xinh_input, seed);
        let mut field = AssociativeField::new(config, p.program.clone())?;
        let reference = p.inputs.iter().map(|x| field.cycle(x).map(|r| r.y)).collect::<Result<Vec<_>>>()?;
        o.put("af0_outputs", &reference);
        o.checks.push(("af0_agreement", reference == outputs));
    }
    Ok(o)
}

fn run_af(p: &AfPayload, seed: u64) -> Result<Outcome> {
    if !p.targets.is_empty() && p.targets.len() != p.inputs.len() {
        return Err(Error::Config(format!(
            "payload.targets: {} entries for {} inputs",
            p.targets.len(),
            p.inputs.len()
        )));
    }
    let config = AfConfig { seed, ..p.config.clone() };
    let mut field = AssociativeField::new(config, p.program.clone())?;
    if let Some(e) = &p.estate {
        let mut es = field.estate().clone();
        es.load_snapshot(e.clone())?;
        field.set_estate(es)?;
    }
    field.set_write_enable(p.write_enable);
    let mut header = vec!["cycle", "x", "win", "s_win", "se_win", "y"];
    if p.dump_e {
        header.push("e");
    }
    let mut table = Table::new(header);
    let mut outputs = Vec::new();
    let mut learned = 0;
    for (cycle, x) in p.inputs.iter().enumerate() {
        let target = p.targets.get(cycle).cloned().flatten();
        let rec = match &target {
            Some(y) => field.forced_cycle(x, y)?,
            None => field.cycle(x)?,
        };
        learned += usize::from(rec.learned);
        let mut row = vec![
            cycle.to_string(),
            x.to_string(),
            rec.win.map_or_else(String::new, |w| w.to_string()),
            num(rec.s_win),
            num(rec.se_win),
            opt_vec(&rec.y),
        ];
        if p.dump_e {
            let e: Vec<String> = field.estate().e.iter().copied().map(num).collect();
            row.push(format!("[{}]", e.join(" ")));
        }
        table.push(row);
        outputs.push(rec.y);
    }
    let mut o = Outcome::new(table);
    o.put("mode", field.config().mode);
    o.put("outputs", &outputs);
    o.put("rows", field.program().len());
    o.put("learned", learned);
    if field.config().mode == AfMode::Af1 {
        o.put("final_estate", &field.estate().e);
    }
    o.checks.push(("estate_non_negative", field.estate().e.iter().all(|&e| e >= 0.0)));
    Ok(o)
}

fn run_fsm(p: &FsmPayload, seed: u64) -> Result<Outcome> {
    let teacher = p.machine.build()?;
    let config = AfConfig { dedup: true, ..AfConfig::af0(Similarity::NonzeroMatchRatio, p.xinh, seed) };
    let demo = demonstrate_mealy(&teacher, config, p.max_cycles, seed)?;
    let coding = MealyCoding::of(&teacher);
    let coded = coding.coded(&teacher)?;
    let mut fsm = make_fsm(demo.field, coding.layout(), coding.s(teacher.initial_state()))?;
    let alphabet = coding.xs.iter().map(|x| coding.x(x)).collect();
    let verdict = equivalent(&mut coded.runner(), &mut fsm, &Probe::Sequences { alphabet, depth: p.depth })?;

    let mut table = Table::new(["cycle", "x", "state", "y_teacher", "y_field"]);
    let mut runner = teacher.runner();
    fsm.reset();
    for (cycle, x) in p.inputs.iter().enumerate() {
        let state = runner.state().clone();
        let y = runner.step(x)?;
        let got = fsm.step(&coding.x(x))?;
        let decoded = got
            .components()
            .first()
            .and_then(|&c| coding.ys.get((c as usize).wrapping_sub(1)))
            .cloned()
            .unwrap_or_else(|| "NULL".into());
        table.push(vec![cycle.to_string(), x.clone(), state, y, decoded]);
    }
    let mut o = Outcome::new(table);
    o.put("demonstration_cycles", demo.cycles);
    o.put("rows", demo.rows);
    o.put("depth", p.depth);
    match &verdict {
        Equivalence::Pass { probes } => o.put("sequences_checked", probes),
        Equivalence::Fail { inputs, left, right } => {
            let show = |v: &[SymbolVector]| v.iter().map(ToString::to_string).collect::<Vec<_>>();
            o.put("witness", json!({ "inputs": show(inputs), "teacher": show(left), "field": show(right) }));
        }
    }
    o.checks.push(("equivalent", verdict.passed()));
    Ok(o)
}

fn robot_header(with_tape: bool) -> Vec<&'static str> {
    let mut h = vec!["cycle", "seen", "uttered_fb", "cmd_write", "cmd_move", "cmd_utter", "source", "sensory_source"];
    if with_tape {
        h.push("tape");
    }
    h
}

fn robot_row(cycle: usize, r: &TraceRow) -> Vec<String> {
    let src = |v: Value| v.as_str().unwrap_or_default().to_string();
    vec![
        cycle.to_string(),
        r.seen.to_string(),
        r.uttered_fb.clone(),
        r.cmd_write.clone(),
        r.cmd_move.to_string(),
        r.cmd_utter.clone(),
        src(serde_json::to_value(r.source).unwrap_or(Value::Null)),
        src(serde_json::to_value(r.sensory_source).unwrap_or(Value::Null)),
    ]
}

fn verdict_name(v: Option<TapeSymbol>) -> Value {
    match v {
        Some(TapeSymbol::Yes) => json!("yes"),
        Some(TapeSymbol::No) => json!("no"),
        Some(other) => json!(other.to_char().to_string()),
        None => Value::Null,
    }
}

fn run_robot_train(p: &RobotTrainPayload, seed: u64) -> Result<Outcome> {
    let worlds = p.tapes.iter().map(|t| TapeWorld::parse(t)).collect::<Result<Vec<_>>>()?;
    let mut brain = Brain::new(&BrainConfig { seed, ..p.brain.clone() })?;
    let (am, tape, voice) = train(&mut brain, &worlds, p.episodes, p.max_cycles)?;
    let mut table = Table::new(robot_header(true));
    let mut cycle = 0;
    let mut verdicts = Vec::new();
    for (t, w) in p.tapes.iter().zip(&worlds) {
        let ep = teacher_episode(w, p.max_cycles)?;
        for r in &ep.trace {
            let mut row = robot_row(cycle, r);
            row.push(t.clone());
            table.push(row);
            cycle += 1;
        }
        verdicts.push(json!({ "tape": t, "verdict": verdict_name(ep.verdict) }));
    }
    let mut o = Outcome::new(table);
    o.put("tapes", p.tapes.len());
    o.put("episodes", p.episodes);
    o.put("rows_added", json!({ "am": am, "tape": tape, "voice": voice }));
    o.put("teacher_verdicts", verdicts);
    o.put("brain_file", &p.brain_file);
    o.checks.push(("teacher_halts", true));
    let mut text = brain.to_json()?;
    text.push('\n');
    o.extra.push(Artifact { path: PathBuf::from(&p.brain_file), bytes: text.into_bytes() });
    Ok(o)
}

fn run_robot_exam(p: &RobotExamPayload) -> Result<Outcome> {
    let text = fs::read_to_string(&p.brain).map_err(|e| Error::Config(format!("{}: {e}", p.brain.display())))?;
    let brain = Brain::from_json(&text)?;
    let world = TapeWorld::parse(&p.tape)?;
    let real = exam_real(&brain, &world, p.max_cycles)?;
    let mental = if p.mental { Some(exam_mental(&brain, &world, p.max_cycles)?) } else { None };
    let shown = mental.as_ref().unwrap_or(&real);
    let mut table = Table::new(robot_header(false));
    for r in &shown.trace {
        table.push(robot_row(r.cycle, r));
    }
    let expected = if crate::verify::balanced(&p.tape) { TapeSymbol::Yes } else { TapeSymbol::No };
    let mut o = Outcome::new(table);
    o.put("tape", &p.tape);
    o.put("real_verdict", verdict_name(real.verdict));
    o.put("real_cycles", real.commands.len());
    o.put("final_tape", real.tape.render());
    o.checks.push(("real_verdict_correct", real.verdict == Some(expected)));
    if let Some(m) = &mental {
        o.put("mental_verdict", verdict_name(m.verdict));
        o.put("mental_cycles", m.commands.len());
        o.put("imagined_tape", m.tape.render());
        o.checks.push(("mental_equals_real", m.commands == real.commands && m.verdict == real.verdict));
    }
    Ok(o)
}

fn run_pmm(p: &PmmPayload, seed: u64) -> Result<Outcome> {
    match p {
        PmmPayload::Path { machine, input, s0, t_end } => {
            let spec = machine.build()?;
            let path = sample_path(&spec, input, *s0, *t_end, seed)?;
            let mut table = Table::new(["time", "state"]);
            let mut dwell = vec![0.0; spec.n_states];
            for (k, (t, s)) in path.iter().enumerate() {
                table.push(vec![num(*t), s.to_string()]);
                let until = path.get(k + 1).map_or(*t_end, |n| n.0);
                dwell[*s] += until - t;
            }
            let mut o = Outcome::new(table);
            o.put("jumps", path.len() - 1);
            o.put("final_state", path.last().map(|p| p.1));
            o.put("dwell_fraction", dwell.iter().map(|d| d / t_end).collect::<Vec<_>>());
            o.checks.push(("states_in_range", path.iter().all(|(_, s)| *s < spec.n_states)));
            Ok(o)
        }
        PmmPayload::Master { machine, input, p0, t_end, dt, record_every } => {
            let spec = machine.build()?;
            let run = master_run(&spec, input, p0, *t_end, *dt, *record_every)?;
            let header = ["t".to_string()].into_iter().chain((0..spec.n_states).map(|i| format!("P_{i}")));
            let mut table = Table::new(header);
            let mut residual: f64 = 0.0;
            for (t, pr) in &run {
                residual = residual.max(conservation_residual(pr));
                table.push(std::iter::once(*t).chain(pr.iter().copied()).map(num).collect());
            }
            let mut o = Outcome::new(table);
            o.put("final", run.last().map(|r| r.1.clone()));
            o.put("max_conservation_residual", residual);
            o.checks.push(("conservation", residual < 1e-9));
            Ok(o)
        }
        PmmPayload::Ghk { machine, v_from, v_to, v_step } => {
            let spec = machine.build()?;
            let Omega::Ghk { channel, .. } = &spec.omega else {
                return Err(Error::Config("payload.machine: GHK sweep needs a GHK output binding".into()));
            };
            if !(*v_step > 0.0 && v_to >= v_from) {
                return Err(Error::Config("payload: need v_step > 0 and v_to >= v_from".into()));
            }
            let steps = ((v_to - v_from) / v_step).round() as usize;
            let header = ["V".to_string()].into_iter().chain((0..spec.n_states).map(|i| format!("I_{i}")));
            let mut table = Table::new(header);
            for k in 0..=steps {
                let v = v_from + k as f64 * v_step;
                let row = std::iter::once(v).chain((0..spec.n_states).map(|s| ghk_current(v, s, channel)));
                table.push(row.map(num).collect());
            }
            let reversal = nernst(channel);
            let mut o = Outcome::new(table);
            o.put("nernst", reversal);
            o.checks.push(("zero_at_nernst", (0..spec.n_states).all(|s| ghk_current(reversal, s, channel) == 0.0)));
            Ok(o)
        }
    }
}

fn run_epmm(p: &EpmmPayload, seed: u64) -> Result<Outcome> {
    let v0 = [p.membrane.v0];
    let ensembles = p
        .ensembles
        .iter()
        .map(|e| {
            let spec = e.machine.build()?;
            match &e.initial {
                Initial::Rest => {
                    let rest = stationary(&spec, &v0)?;
                    Ensemble::from_fractions(spec, e.n, &rest)
                }
                Initial::State(s) => Ensemble::all_in(spec, e.n, *s),
                Initial::Occupations(occ) => {
                    let ens = Ensemble::new(spec, occ.clone())?;
                    if ens.n() != e.n {
                        return Err(Error::Config(format!("occupations sum to {}, not n = {}", ens.n(), e.n)));
                    }
                    Ok(ens)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<u64> = ensembles.iter().map(Ensemble::n).collect();
    let mut model = MembraneModel::new(p.membrane.clone(), ensembles, p.messengers.clone(), p.mode, seed)?;
    let trace = run_membrane(&mut model, p.t_end, p.dt, p.record_every)?;
    let v = trace.column("V").unwrap_or_default();
    let mut o = Outcome::new(membrane_table(&trace));
    o.put("v_min", v.iter().copied().fold(f64::INFINITY, f64::min));
    o.put("v_max", v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    o.put("v_final", model.v);
    o.checks.push(("ensemble_sizes_conserved", model.ensembles.iter().map(Ensemble::n).eq(sizes)));
    Ok(o)
}

fn run_spike(p: &SpikePayload, seed: u64) -> Result<Outcome> {
    let trace = p.demo.run(p.mode, seed, p.record_every)?;
    let supra = p.demo.measure(&trace)?;
    let weak = p.demo.scaled(p.sub_factor);
    let sub = weak.measure(&weak.run(p.mode, seed, p.record_every)?)?;
    let mut o = Outcome::new(membrane_table(&trace));
    o.put("suprathreshold", supra);
    o.put("subthreshold", sub);
    o.put("sub_factor", p.sub_factor);
    o.checks.push(("threshold", supra.excursion >= 2.0 * sub.excursion));
    o.checks.push(("transient_inactivation", supra.inactivation_is_transient()));
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    const AF_AND: &str = r#"{
        "kind": "af", "seed": 7,
        "payload": {
            "config": { "mode": "af0" },
            "program": { "rows": [
                { "x": [1, 1], "y": [1] }, { "x": [1, 2], "y": [1] },
                { "x": [2, 1], "y": [1] }, { "x": [2, 2], "y": [2] }
            ] },
            "inputs": [[1, 1], [2, 2], [1, 2], [0, 0]]
        }
    }"#;

    #[test]
    fn af_config_runs() {
        let c = ExperimentConfig::parse(AF_AND).unwrap();
        let out = run(&c).unwrap();
        assert!(out.passed);
        let trace = String::from_utf8(out.artifacts[0].bytes.clone()).unwrap();
        assert!(trace.starts_with("cycle,x,win,s_win,se_win,y\n"));
        assert_eq!(out.summary["results"]["outputs"], json!([[1], [2], [1], null]));
    }

    #[test]
    fn same_seed_same_bytes() {
        let c = ExperimentConfig::parse(AF_AND).unwrap();
        assert_eq!(run(&c).unwrap().artifacts, run(&c).unwrap().artifacts);
    }

    #[test]
    fn missing_seed_is_rejected() {
        let text = AF_AND.replace("\"seed\": 7,", "");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn schema_errors_carry_a_path() {
        let text = AF_AND.replace("\"mode\": \"af0\"", "\"mode\": \"af9\"");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("payload.config.mode"), "{err}");
        let text = AF_AND.replace("\"inputs\"", "\"inptus\"");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn config_round_trips() {
        let c = ExperimentConfig::parse(AF_AND).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn pmm_tasks_parse() {
        let text = r#"{ "kind": "pmm", "seed": 1, "payload": {
            "task": "ghk", "machine": "potassium", "v_from": -0.1, "v_to": 0.05, "v_step": 0.01 } }"#;
        let out = run(&ExperimentConfig::parse(text).unwrap()).unwrap();
        assert!(out.passed);
        let bad = text.replace("\"ghk\"", "\"gkh\"");
        assert!(ExperimentConfig::parse(&bad).is_err());
    }

    #[test]
    fn artifacts_are_written_whole() {
        let dir = tempfile::tempdir().unwrap();
        let arts = vec![
            Artifact { path: "a.csv".into(), bytes: b"t\n0\n".to_vec() },
            Artifact { path: "sub/b.json".into(), bytes: b"{}".to_vec() },
        ];
        let written = write_artifacts(dir.path(), &arts).unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(fs::read(dir.path().join("sub/b.json")).unwrap(), b"{}");
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert!(names.iter().all(|n| !n.to_string_lossy().ends_with(".partial")));
    }
}
