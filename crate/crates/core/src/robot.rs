//! A tape-using robot that learns an algorithm by forced motor training and
//! can then run it on an imagined tape.
//!
//! The world is a finite tape with boundary markers, scanned by an eye that
//! moves together with a writing hand. Each cycle the robot sees the scanned
//! symbol and hears back what it uttered one cycle earlier. Its motor centers
//! issue a [`MotorCommand`]: an optional symbol to write, a move, an optional
//! utterance and a halt bit.
//!
//! The brain has two parts:
//!
//! * **AM**, the motor field, maps `(sensory, previous command)` to the next
//!   command. Because the teacher keeps its control state only in what it
//!   utters, this map is purely combinatorial.
//! * **AS**, the imagery, maps `(command, sensory)` to the next sensory
//!   input. It is built from two fields: a cell-local tape field that
//!   predicts how each imagined cell and the eye flag over it change under a
//!   command, and a voice field that predicts the heard utterance. Running
//!   the tape field over every imagined cell replaces the real world.
//!
//! All symbols are coded as small positive integers so that the non-zero
//! match ratio equals the fraction of matching fields; with the output
//! threshold just below one, only exact matches produce output.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::afield::{AfConfig, AfMode, AssociativeField, AssociativeProgram, DEFAULT_CAPACITY};
use crate::codes::{Similarity, SymbolVector};
use crate::error::{Error, Result};

/// Default bound on episode length.
pub const MAX_CYCLES: usize = 10_000;

/// Output threshold that admits only exact matches under the ratio
/// similarity.
pub const EXACT_MATCH_XINH: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TapeSymbol {
    Blank,
    Open,
    Close,
    Star,
    Yes,
    No,
    Boundary,
}

impl TapeSymbol {
    const ALL: [TapeSymbol; 7] = [
        TapeSymbol::Blank,
        TapeSymbol::Open,
        TapeSymbol::Close,
        TapeSymbol::Star,
        TapeSymbol::Yes,
        TapeSymbol::No,
        TapeSymbol::Boundary,
    ];

    pub fn code(self) -> u32 {
        self as u32 + 1
    }

    pub fn from_code(c: u32) -> Option<Self> {
        Self::ALL.get((c as usize).checked_sub(1)?).copied()
    }

    pub fn to_char(self) -> char {
        match self {
            TapeSymbol::Blank => '_',
            TapeSymbol::Open => '(',
            TapeSymbol::Close => ')',
            TapeSymbol::Star => '*',
            TapeSymbol::Yes => 'Y',
            TapeSymbol::No => 'N',
            TapeSymbol::Boundary => '#',
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        Ok(match c {
            '_' | ' ' => TapeSymbol::Blank,
            '(' => TapeSymbol::Open,
            ')' => TapeSymbol::Close,
            '*' => TapeSymbol::Star,
            'Y' => TapeSymbol::Yes,
            'N' => TapeSymbol::No,
            '#' => TapeSymbol::Boundary,
            other => return Err(Error::Config(format!("unknown tape symbol {other:?}"))),
        })
    }
}

impl fmt::Display for TapeSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Left,
    Right,
    Stay,
}

impl Move {
    const ALL: [Move; 3] = [Move::Left, Move::Right, Move::Stay];

    pub fn code(self) -> u32 {
        self as u32 + 1
    }

    pub fn from_code(c: u32) -> Option<Self> {
        Self::ALL.get((c as usize).checked_sub(1)?).copied()
    }

    pub fn to_char(self) -> char {
        match self {
            Move::Left => 'L',
            Move::Right => 'R',
            Move::Stay => 'S',
        }
    }
}

/// Symbols the robot can utter. The teacher uses them to name its control
/// state, and the two verdicts to announce its result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mark {
    /// Scanning right for a `)`.
    Right,
    /// Scanning left for the matching `(`.
    Left,
    /// Final sweep looking for an unmatched `(`.
    Sweep,
    /// An unmatched `(` was found; walking home to write the verdict.
    Unmatched,
    Yes,
    No,
}

impl Mark {
    const ALL: [Mark; 6] = [Mark::Right, Mark::Left, Mark::Sweep, Mark::Unmatched, Mark::Yes, Mark::No];

    pub fn code(self) -> u32 {
        self as u32 + 1
    }

    pub fn from_code(c: u32) -> Option<Self> {
        Self::ALL.get((c as usize).checked_sub(1)?).copied()
    }

    pub fn to_char(self) -> char {
        match self {
            Mark::Right => 'R',
            Mark::Left => 'L',
            Mark::Sweep => 'C',
            Mark::Unmatched => 'U',
            Mark::Yes => 'Y',
            Mark::No => 'N',
        }
    }
}

fn opt_code(c: Option<u32>) -> u32 {
    c.map_or(1, |c| c + 1)
}

fn opt_decode<T>(c: u32, f: impl Fn(u32) -> Option<T>) -> Option<Option<T>> {
    match c {
        1 => Some(None),
        c if c > 1 => f(c - 1).map(Some),
        _ => None,
    }
}

fn opt_char(c: Option<char>) -> String {
    c.map(String::from).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MotorCommand {
    pub write: Option<TapeSymbol>,
    #[serde(rename = "move")]
    pub mv: Move,
    pub utter: Option<Mark>,
    pub halt: bool,
}

impl MotorCommand {
    /// The command assumed before the first cycle.
    pub const REST: MotorCommand = MotorCommand { write: None, mv: Move::Stay, utter: None, halt: false };

    pub const DIM: usize = 4;

    pub fn encode(&self) -> SymbolVector {
        SymbolVector::new(vec![
            opt_code(self.write.map(TapeSymbol::code)),
            self.mv.code(),
            opt_code(self.utter.map(Mark::code)),
            u32::from(self.halt) + 1,
        ])
    }

    pub fn decode(v: &SymbolVector) -> Option<Self> {
        let c = v.components();
        if c.len() != Self::DIM {
            return None;
        }
        Some(MotorCommand {
            write: opt_decode(c[0], TapeSymbol::from_code)?,
            mv: Move::from_code(c[1])?,
            utter: opt_decode(c[2], Mark::from_code)?,
            halt: match c[3] {
                1 => false,
                2 => true,
                _ => return None,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sensory {
    pub seen: TapeSymbol,
    pub uttered: Option<Mark>,
}

impl Sensory {
    pub const DIM: usize = 2;

    pub fn encode(&self) -> SymbolVector {
        SymbolVector::new(vec![self.seen.code(), opt_code(self.uttered.map(Mark::code))])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapeWorld {
    pub cells: Vec<TapeSymbol>,
    pub position: usize,
}

impl TapeWorld {
    pub fn new(cells: Vec<TapeSymbol>, position: usize) -> Result<Self> {
        if position >= cells.len() {
            return Err(Error::Config(format!("position {position} outside a tape of {} cells", cells.len())));
        }
        Ok(TapeWorld { cells, position })
    }

    /// Parses a tape body such as `"(()"` and wraps it in boundary markers,
    /// with the eye on the left marker.
    pub fn parse(body: &str) -> Result<Self> {
        let mut cells = vec![TapeSymbol::Boundary];
        for c in body.chars() {
            cells.push(TapeSymbol::from_char(c)?);
        }
        cells.push(TapeSymbol::Boundary);
        Ok(TapeWorld { cells, position: 0 })
    }

    pub fn scanned(&self) -> TapeSymbol {
        self.cells[self.position]
    }

    pub fn render(&self) -> String {
        self.cells.iter().map(|s| s.to_char()).collect()
    }
}

/// The one-cycle utterance buffer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Devices {
    pub last_uttered: Option<Mark>,
}

/// What the robot perceives before its first command.
pub fn initial_sensory(world: &TapeWorld, devices: &Devices) -> Sensory {
    Sensory { seen: world.scanned(), uttered: devices.last_uttered }
}

/// Executes `cmd` on the world: write, then move (clamped at the ends),
/// then report the newly scanned symbol and the utterance just made.
pub fn world_step(world: &mut TapeWorld, devices: &mut Devices, cmd: &MotorCommand) -> Sensory {
    if let Some(w) = cmd.write {
        world.cells[world.position] = w;
    }
    world.position = match cmd.mv {
        Move::Left => world.position.saturating_sub(1),
        Move::Right => (world.position + 1).min(world.cells.len() - 1),
        Move::Stay => world.position,
    };
    devices.last_uttered = cmd.utter;
    initial_sensory(world, devices)
}

/// Minsky's parenthesis checker with its state held in the utter channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParenChecker;

fn go(mv: Move, utter: Mark) -> MotorCommand {
    MotorCommand { write: None, mv, utter: Some(utter), halt: false }
}

fn mark(mv: Move, utter: Mark) -> MotorCommand {
    MotorCommand { write: Some(TapeSymbol::Star), mv, utter: Some(utter), halt: false }
}

fn halt(verdict: TapeSymbol, utter: Mark) -> MotorCommand {
    MotorCommand { write: Some(verdict), mv: Move::Stay, utter: Some(utter), halt: true }
}

/// The teacher's command for observation `obs`. The controller state is
/// `obs.uttered`: none before the first cycle, then whatever was uttered.
pub fn teacher_policy(_task: ParenChecker, obs: &Sensory) -> Result<MotorCommand> {
    use Mark::{Left, Right, Sweep, Unmatched};
    use TapeSymbol::{Blank, Boundary, Close, Open, Star};
    let fault = || Error::TeacherFault(format!("saw {} in state {:?}", obs.seen, obs.uttered));
    if matches!(obs.seen, TapeSymbol::Yes | TapeSymbol::No) {
        return Err(fault());
    }
    Ok(match (obs.uttered, obs.seen) {
        (None, _) => go(Move::Right, Right),
        (Some(Right), Open | Star | Blank) => go(Move::Right, Right),
        (Some(Right), Close) => mark(Move::Left, Left),
        (Some(Right), Boundary) => go(Move::Left, Sweep),
        (Some(Left), Star | Close | Blank) => go(Move::Left, Left),
        (Some(Left), Open) => mark(Move::Right, Right),
        (Some(Left), Boundary) => halt(TapeSymbol::No, Mark::No),
        (Some(Sweep), Star | Blank) => go(Move::Left, Sweep),
        (Some(Sweep), Open) => go(Move::Left, Unmatched),
        (Some(Sweep), Boundary) => halt(TapeSymbol::Yes, Mark::Yes),
        (Some(Unmatched), Boundary) => halt(TapeSymbol::No, Mark::No),
        (Some(Unmatched), _) => go(Move::Left, Unmatched),
        _ => return Err(fault()),
    })
}

fn verdict_of(utter: Option<Mark>) -> Option<TapeSymbol> {
    match utter {
        Some(Mark::Yes) => Some(TapeSymbol::Yes),
        Some(Mark::No) => Some(TapeSymbol::No),
        _ => None,
    }
}

/// Input of the motor field: `(seen, heard, previous command)`.
pub fn am_input(obs: &Sensory, prev: &MotorCommand) -> SymbolVector {
    SymbolVector::concat(&[&obs.encode(), &prev.encode()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Eye {
    Away,
    Here,
    OffTape,
}

impl Eye {
    fn code(self) -> u32 {
        self as u32 + 1
    }
}

fn eye_at(position: usize, k: Option<usize>, len: usize) -> Eye {
    match k {
        Some(k) if k < len => {
            if k == position {
                Eye::Here
            } else {
                Eye::Away
            }
        }
        _ => Eye::OffTape,
    }
}

/// Input of the tape field for cell `k`: the command's write and move, the
/// cell's symbol, and whether the eye is left of, on, or right of the cell.
fn tape_input(cmd: &MotorCommand, cells: &[TapeSymbol], position: usize, k: usize) -> SymbolVector {
    let len = cells.len();
    SymbolVector::new(vec![
        opt_code(cmd.write.map(TapeSymbol::code)),
        cmd.mv.code(),
        cells[k].code(),
        eye_at(position, k.checked_sub(1), len).code(),
        eye_at(position, Some(k), len).code(),
        eye_at(position, Some(k + 1), len).code(),
    ])
}

fn tape_output(cells: &[TapeSymbol], position: usize, k: usize) -> SymbolVector {
    SymbolVector::new(vec![cells[k].code(), eye_at(position, Some(k), cells.len()).code()])
}

fn voice_input(cmd: &MotorCommand) -> SymbolVector {
    SymbolVector::new(vec![opt_code(cmd.utter.map(Mark::code))])
}

fn voice_output(utter: Option<Mark>) -> SymbolVector {
    SymbolVector::new(vec![opt_code(utter.map(Mark::code))])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrainConfig {
    pub xinh: f64,
    pub am_bias_add: f64,
    pub am_bias_mul: f64,
    pub as_bias_add: f64,
    pub as_bias_mul: f64,
    pub tau_e: f64,
    pub capacity: usize,
    pub seed: u64,
}

impl Default for BrainConfig {
    fn default() -> Self {
        BrainConfig {
            xinh: EXACT_MATCH_XINH,
            am_bias_add: 0.0,
            am_bias_mul: 0.0,
            as_bias_add: 0.0,
            as_bias_mul: 0.0,
            tau_e: 1e6,
            capacity: DEFAULT_CAPACITY,
            seed: 0,
        }
    }
}

impl BrainConfig {
    fn field(&self, bias_add: f64, bias_mul: f64, stream: u64) -> AfConfig {
        AfConfig {
            mode: AfMode::Af1,
            similarity: Similarity::NonzeroMatchRatio,
            xinh: self.xinh,
            dedup: true,
            tau_e: self.tau_e,
            bias_add,
            bias_mul,
            seed: crate::rng::derive_seed(self.seed, &[stream]),
            ..AfConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Brain {
    pub am: AssociativeField,
    pub tape: AssociativeField,
    pub voice: AssociativeField,
}

#[derive(Serialize, Deserialize)]
struct FieldFile {
    config: AfConfig,
    program: AssociativeProgram,
}

#[derive(Serialize, Deserialize)]
struct BrainFile {
    am: FieldFile,
    tape: FieldFile,
    voice: FieldFile,
}

fn field_file(f: &AssociativeField) -> FieldFile {
    FieldFile { config: f.config().clone(), program: f.program().clone() }
}

fn field_from(f: FieldFile) -> Result<AssociativeField> {
    AssociativeField::new(f.config, f.program)
}

impl Brain {
    pub fn new(config: &BrainConfig) -> Result<Self> {
        let prog = |dx, dy| AssociativeProgram::new(dx, dy, config.capacity);
        Ok(Brain {
            am: AssociativeField::new(
                config.field(config.am_bias_add, config.am_bias_mul, 0),
                prog(Sensory::DIM + MotorCommand::DIM, MotorCommand::DIM),
            )?,
            tape: AssociativeField::new(config.field(config.as_bias_add, config.as_bias_mul, 1), prog(6, 2))?,
            voice: AssociativeField::new(config.field(config.as_bias_add, config.as_bias_mul, 2), prog(1, 1))?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = BrainFile { am: field_file(&self.am), tape: field_file(&self.tape), voice: field_file(&self.voice) };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: BrainFile =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Config(format!("brain file: {e}")))?;
        Ok(Brain { am: field_from(file.am)?, tape: field_from(file.tape)?, voice: field_from(file.voice)? })
    }

    /// Row counts of AM, the tape field and the voice field.
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.am.program().len(), self.tape.program().len(), self.voice.program().len())
    }

    fn set_write_enable(&mut self, wen: bool) {
        self.am.set_write_enable(wen);
        self.tape.set_write_enable(wen);
        self.voice.set_write_enable(wen);
    }

    /// Predicts the world's response to `cmd` by running the tape field
    /// over every imagined cell. Updates `imagined` in place.
    fn imagine(&mut self, imagined: &mut TapeWorld, cmd: &MotorCommand, cycle: usize) -> Result<Sensory> {
        let mut cells = Vec::with_capacity(imagined.cells.len());
        let mut eye = None;
        for k in 0..imagined.cells.len() {
            let x = tape_input(cmd, &imagined.cells, imagined.position, k);
            let gap = || Error::ImageryGap { cycle, input: x.components().to_vec() };
            let y = self.tape.cycle(&x)?.y.ok_or_else(gap)?;
            let c = y.components();
            cells.push(TapeSymbol::from_code(c[0]).ok_or_else(gap)?);
            if c[1] == Eye::Here.code() {
                if eye.is_some() {
                    return Err(gap());
                }
                eye = Some(k);
            }
        }
        let x = voice_input(cmd);
        let heard = self
            .voice
            .cycle(&x)?
            .y
            .and_then(|y| opt_decode(y.components()[0], Mark::from_code))
            .ok_or_else(|| Error::ImageryGap { cycle, input: x.components().to_vec() })?;
        let Some(position) = eye else {
            let x = tape_input(cmd, &imagined.cells, imagined.position, imagined.position);
            return Err(Error::ImageryGap { cycle, input: x.components().to_vec() });
        };
        imagined.cells = cells;
        imagined.position = position;
        Ok(Sensory { seen: imagined.scanned(), uttered: heard })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandSource {
    Teacher,
    Am,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorySource {
    World,
    As,
}

/// One row of an episode trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub cycle: usize,
    pub seen: char,
    pub uttered_fb: String,
    pub cmd_write: String,
    pub cmd_move: char,
    pub cmd_utter: String,
    pub source: CommandSource,
    pub sensory_source: SensorySource,
}

impl TraceRow {
    fn new(cycle: usize, obs: &Sensory, cmd: &MotorCommand, source: CommandSource, sensory: SensorySource) -> Self {
        TraceRow {
            cycle,
            seen: obs.seen.to_char(),
            uttered_fb: opt_char(obs.uttered.map(Mark::to_char)),
            cmd_write: opt_char(cmd.write.map(TapeSymbol::to_char)),
            cmd_move: cmd.mv.to_char(),
            cmd_utter: opt_char(cmd.utter.map(Mark::to_char)),
            source,
            sensory_source: sensory,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub verdict: Option<TapeSymbol>,
    pub commands: Vec<MotorCommand>,
    pub trace: Vec<TraceRow>,
    /// The real tape after a real run, the imagined tape after a mental one.
    pub tape: TapeWorld,
}

/// Runs the teacher alone on `world`.
pub fn teacher_episode(world: &TapeWorld, max_cycles: usize) -> Result<Episode> {
    let mut world = world.clone();
    let mut devices = Devices::default();
    let mut obs = initial_sensory(&world, &devices);
    let mut commands = Vec::new();
    let mut trace = Vec::new();
    for cycle in 0..max_cycles {
        let cmd = teacher_policy(ParenChecker, &obs)?;
        trace.push(TraceRow::new(cycle, &obs, &cmd, CommandSource::Teacher, SensorySource::World));
        commands.push(cmd);
        obs = world_step(&mut world, &mut devices, &cmd);
        if cmd.halt {
            return Ok(Episode { verdict: Some(world.scanned()), commands, trace, tape: world });
        }
    }
    Err(Error::NoHalt(max_cycles))
}

/// Forced motor training: the teacher drives the world while AM records
/// `(sensory, previous command) → command` and the imagery records how the
/// world answered each command. Returns the rows added to AM, the tape field
/// and the voice field.
pub fn train(brain: &mut Brain, worlds: &[TapeWorld], episodes: usize, max_cycles: usize) -> Result<(usize, usize, usize)> {
    let before = brain.sizes();
    brain.set_write_enable(true);
    let result = (|| -> Result<()> {
        for _ in 0..episodes {
            for w in worlds {
                train_episode(brain, w, max_cycles)?;
            }
        }
        Ok(())
    })();
    brain.set_write_enable(false);
    result?;
    let after = brain.sizes();
    Ok((after.0 - before.0, after.1 - before.1, after.2 - before.2))
}

fn train_episode(brain: &mut Brain, world: &TapeWorld, max_cycles: usize) -> Result<()> {
    let mut world = world.clone();
    let mut devices = Devices::default();
    let mut obs = initial_sensory(&world, &devices);
    let mut prev = MotorCommand::REST;
    for _ in 0..max_cycles {
        let cmd = teacher_policy(ParenChecker, &obs)?;
        brain.am.forced_cycle(&am_input(&obs, &prev), &cmd.encode())?;
        let before = world.clone();
        obs = world_step(&mut world, &mut devices, &cmd);
        if cmd.halt {
            return Ok(());
        }
        for k in 0..world.cells.len() {
            let x = tape_input(&cmd, &before.cells, before.position, k);
            brain.tape.forced_cycle(&x, &tape_output(&world.cells, world.position, k))?;
        }
        brain.voice.forced_cycle(&voice_input(&cmd), &voice_output(obs.uttered))?;
        prev = cmd;
    }
    Err(Error::NoHalt(max_cycles))
}

fn am_command(am: &mut AssociativeField, obs: &Sensory, prev: &MotorCommand, cycle: usize) -> Result<MotorCommand> {
    let x = am_input(obs, prev);
    am.cycle(&x)?
        .y
        .as_ref()
        .and_then(MotorCommand::decode)
        .ok_or_else(|| Error::Stuck { cycle, input: x.into_inner() })
}

/// AM drives the real world with learning off.
pub fn exam_real(brain: &Brain, world: &TapeWorld, max_cycles: usize) -> Result<Episode> {
    let mut am = brain.am.clone();
    am.set_write_enable(false);
    let mut world = world.clone();
    let mut devices = Devices::default();
    let mut obs = initial_sensory(&world, &devices);
    let mut prev = MotorCommand::REST;
    let mut commands = Vec::new();
    let mut trace = Vec::new();
    for cycle in 0..max_cycles {
        let cmd = am_command(&mut am, &obs, &prev, cycle)?;
        trace.push(TraceRow::new(cycle, &obs, &cmd, CommandSource::Am, SensorySource::World));
        commands.push(cmd);
        obs = world_step(&mut world, &mut devices, &cmd);
        if cmd.halt {
            return Ok(Episode { verdict: Some(world.scanned()), commands, trace, tape: world });
        }
        prev = cmd;
    }
    Err(Error::NoHalt(max_cycles))
}

/// AM drives an imagined tape: after one look at `image`, every sensory
/// input comes from the imagery instead of the world. The verdict is what
/// the robot utters when it halts.
pub fn exam_mental(brain: &Brain, image: &TapeWorld, max_cycles: usize) -> Result<Episode> {
    let mut brain = brain.clone();
    brain.set_write_enable(false);
    let mut imagined = image.clone();
    let mut obs = initial_sensory(&imagined, &Devices::default());
    let mut prev = MotorCommand::REST;
    let mut commands = Vec::new();
    let mut trace = Vec::new();
    for cycle in 0..max_cycles {
        let cmd = am_command(&mut brain.am, &obs, &prev, cycle)?;
        let source = if cycle == 0 { SensorySource::World } else { SensorySource::As };
        trace.push(TraceRow::new(cycle, &obs, &cmd, CommandSource::Am, source));
        commands.push(cmd);
        if cmd.halt {
            if let Some(w) = cmd.write {
                imagined.cells[imagined.position] = w;
            }
            return Ok(Episode { verdict: verdict_of(cmd.utter), commands, trace, tape: imagined });
        }
        obs = brain.imagine(&mut imagined, &cmd, cycle)?;
        prev = cmd;
    }
    Err(Error::NoHalt(max_cycles))
}

/// Situations the teacher meets on one tape, as field inputs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Situations {
    pub am: BTreeSet<SymbolVector>,
    pub tape: BTreeSet<SymbolVector>,
    pub voice: BTreeSet<SymbolVector>,
}

impl Situations {
    pub fn of(world: &TapeWorld, max_cycles: usize) -> Result<Self> {
        let mut s = Situations::default();
        let mut world = world.clone();
        let mut devices = Devices::default();
        let mut obs = initial_sensory(&world, &devices);
        let mut prev = MotorCommand::REST;
        for _ in 0..max_cycles {
            let cmd = teacher_policy(ParenChecker, &obs)?;
            s.am.insert(am_input(&obs, &prev));
            if cmd.halt {
                return Ok(s);
            }
            for k in 0..world.cells.len() {
                s.tape.insert(tape_input(&cmd, &world.cells, world.position, k));
            }
            s.voice.insert(voice_input(&cmd));
            obs = world_step(&mut world, &mut devices, &cmd);
            prev = cmd;
        }
        Err(Error::NoHalt(max_cycles))
    }

    pub fn extend(&mut self, other: &Situations) {
        self.am.extend(other.am.iter().cloned());
        self.tape.extend(other.tape.iter().cloned());
        self.voice.extend(other.voice.iter().cloned());
    }

    pub fn len(&self) -> usize {
        self.am.len() + self.tape.len() + self.voice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gain(&self, other: &Situations) -> usize {
        other.am.difference(&self.am).count()
            + other.tape.difference(&self.tape).count()
            + other.voice.difference(&self.voice).count()
    }

    pub fn covers(&self, other: &Situations) -> bool {
        self.gain(other) == 0
    }
}

/// Every string over `(` and `)` of length at most `max_len`, shortest first.
pub fn paren_strings(max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..max_len {
        layer = layer.iter().flat_map(|s| [format!("{s}("), format!("{s})")]).collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Greedily picks tapes from `universe` until their situations cover those
/// of the whole universe. Ties go to the earlier tape.
pub fn covering_set(universe: &[String], max_cycles: usize) -> Result<Vec<String>> {
    let sits = universe
        .iter()
        .map(|t| Situations::of(&TapeWorld::parse(t)?, max_cycles))
        .collect::<Result<Vec<_>>>()?;
    let mut target = Situations::default();
    for s in &sits {
        target.extend(s);
    }
    let mut have = Situations::default();
    let mut chosen = Vec::new();
    let mut used: HashSet<usize> = HashSet::new();
    while !have.covers(&target) {
        let (best, gain) = (0..sits.len())
            .filter(|i| !used.contains(i))
            .map(|i| (i, have.gain(&sits[i])))
            .fold((usize::MAX, 0), |acc, (i, g)| if g > acc.1 { (i, g) } else { acc });
        if gain == 0 {
            break;
        }
        used.insert(best);
        have.extend(&sits[best]);
        chosen.push(universe[best].clone());
    }
    Ok(chosen)
}
