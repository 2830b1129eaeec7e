//! Associative fields: the primitive E-machines AF-0 and AF-1.
//!
//! One cycle of a field is
//!
//! 1. **decode**: score the input against every Input-LTM row,
//! 2. **bias** (AF-1 only): `se[i] = s[i] + a·e[i] + b·s[i]·e[i]`,
//! 3. **choose**: pick a winner uniformly from the rows whose score is maximal,
//! 4. **encode**: read the winner's Output-LTM row if `s[win] > xinh`, else NULL,
//! 5. **next E-state** (AF-1 only): instant charge to `s[i]` when `s[i] > e[i]`,
//!    otherwise discharge by `(tau-1)/tau`,
//! 6. **learn**: when write-enabled, append the `(x, y)` pair at the write pointer.
//!
//! With `a = b = 0` an AF-1 field behaves exactly like AF-0.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codes::{Similarity, SymbolVector, EPS_SCORE};
use crate::error::{Error, Result};
use crate::machines::{BlackBox, CombinatorialMachine, DelayedFeedback, MealyMachine, Symbol};
use crate::rng::{seeded, SimRng};

pub const DEFAULT_CAPACITY: usize = 65_536;

/// Paired Input-LTM / Output-LTM rows; the write pointer is the row count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProgramFile", into = "ProgramFile")]
pub struct AssociativeProgram {
    dim_x: usize,
    dim_y: usize,
    capacity: usize,
    gx: Vec<SymbolVector>,
    gy: Vec<SymbolVector>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProgramRow {
    x: SymbolVector,
    y: SymbolVector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProgramFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim_x: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim_y: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity: Option<usize>,
    rows: Vec<ProgramRow>,
}

impl TryFrom<ProgramFile> for AssociativeProgram {
    type Error = Error;

    fn try_from(f: ProgramFile) -> Result<Self> {
        let dim_x = f.dim_x.or_else(|| f.rows.first().map(|r| r.x.dim()));
        let dim_y = f.dim_y.or_else(|| f.rows.first().map(|r| r.y.dim()));
        let (Some(dim_x), Some(dim_y)) = (dim_x, dim_y) else {
            return Err(Error::Config("empty program needs explicit dim_x and dim_y".into()));
        };
        let mut prog = AssociativeProgram::new(dim_x, dim_y, f.capacity.unwrap_or(DEFAULT_CAPACITY));
        for r in f.rows {
            prog.push(r.x, r.y)?;
        }
        Ok(prog)
    }
}

impl From<AssociativeProgram> for ProgramFile {
    fn from(p: AssociativeProgram) -> Self {
        ProgramFile {
            dim_x: Some(p.dim_x),
            dim_y: Some(p.dim_y),
            capacity: Some(p.capacity),
            rows: p.gx.into_iter().zip(p.gy).map(|(x, y)| ProgramRow { x, y }).collect(),
        }
    }
}

impl AssociativeProgram {
    pub fn new(dim_x: usize, dim_y: usize, capacity: usize) -> Self {
        AssociativeProgram { dim_x, dim_y, capacity, gx: Vec::new(), gy: Vec::new() }
    }

    pub fn from_rows(rows: impl IntoIterator<Item = (SymbolVector, SymbolVector)>) -> Result<Self> {
        let rows: Vec<_> = rows.into_iter().collect();
        let Some((x0, y0)) = rows.first() else {
            return Err(Error::Config("empty row list; use AssociativeProgram::new".into()));
        };
        let mut prog = AssociativeProgram::new(x0.dim(), y0.dim(), DEFAULT_CAPACITY.max(rows.len()));
        for (x, y) in rows {
            prog.push(x, y)?;
        }
        Ok(prog)
    }

    /// Every pair of `xs × ys`, in row-major order.
    pub fn full_product(xs: &[SymbolVector], ys: &[SymbolVector]) -> Result<Self> {
        Self::from_rows(xs.iter().flat_map(|x| ys.iter().map(move |y| (x.clone(), y.clone()))))
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Write pointer: index of the next free row.
    pub fn wptr(&self) -> usize {
        self.gx.len()
    }

    pub fn len(&self) -> usize {
        self.gx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gx.is_empty()
    }

    pub fn input(&self, i: usize) -> &SymbolVector {
        &self.gx[i]
    }

    pub fn output(&self, i: usize) -> &SymbolVector {
        &self.gy[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&SymbolVector, &SymbolVector)> {
        self.gx.iter().zip(&self.gy)
    }

    pub fn contains_pair(&self, x: &SymbolVector, y: &SymbolVector) -> bool {
        self.rows().any(|(gx, gy)| gx == x && gy == y)
    }

    fn push(&mut self, x: SymbolVector, y: SymbolVector) -> Result<()> {
        x.check_dim(self.dim_x)?;
        y.check_dim(self.dim_y)?;
        if self.gx.len() >= self.capacity {
            return Err(Error::MemoryFull { capacity: self.capacity });
        }
        self.gx.push(x);
        self.gy.push(y);
        Ok(())
    }
}

/// Per-row residual excitation with its discharge constant and the additive
/// (`a`) and multiplicative (`b`) biasing coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EState {
    pub e: Vec<f64>,
    pub tau_e: f64,
    pub a: f64,
    pub b: f64,
}

impl EState {
    pub fn new(n: usize, tau_e: f64, a: f64, b: f64) -> Result<Self> {
        if !(tau_e > 1.0) {
            return Err(Error::Config(format!("E-state time constant must exceed 1, got {tau_e}")));
        }
        Ok(EState { e: vec![0.0; n], tau_e, a, b })
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    /// Replaces `e` with a snapshot (a JSON array in files).
    pub fn load_snapshot(&mut self, e: Vec<f64>) -> Result<()> {
        if e.len() != self.e.len() {
            return Err(Error::Dimension { expected: self.e.len(), got: e.len() });
        }
        if e.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Config("E-state values must be non-negative".into()));
        }
        self.e = e;
        Ok(())
    }
}

pub fn decode(x: &SymbolVector, prog: &AssociativeProgram, similarity: Similarity) -> Result<Vec<f64>> {
    x.check_dim(prog.dim_x)?;
    prog.gx.iter().map(|g| similarity.score(x, g)).collect()
}

pub fn bias(s: &[f64], estate: &EState) -> Result<Vec<f64>> {
    if s.len() != estate.e.len() {
        return Err(Error::Dimension { expected: estate.e.len(), got: s.len() });
    }
    Ok(s.iter()
        .zip(&estate.e)
        .map(|(&si, &ei)| si + estate.a * ei + estate.b * si * ei)
        .collect())
}

/// Indices whose score lies within [`EPS_SCORE`] of the maximum.
pub fn max_set(se: &[f64]) -> Vec<usize> {
    let max = se.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    se.iter()
        .enumerate()
        .filter(|(_, &v)| v >= max - EPS_SCORE)
        .map(|(i, _)| i)
        .collect()
}

/// Draws the winner uniformly from the max-set. The stream is only consumed
/// when there is a tie.
pub fn choose(se: &[f64], rng: &mut SimRng) -> Result<usize> {
    if se.is_empty() {
        return Err(Error::NoSelection);
    }
    let set = max_set(se);
    Ok(if set.len() == 1 { set[0] } else { set[rng.random_range(0..set.len())] })
}

pub fn encode(win: usize, s: &[f64], prog: &AssociativeProgram, xinh: f64) -> Option<SymbolVector> {
    (s[win] > xinh).then(|| prog.gy[win].clone())
}

pub fn next_estate(s: &[f64], estate: &mut EState) -> Result<()> {
    if s.len() != estate.e.len() {
        return Err(Error::Dimension { expected: estate.e.len(), got: s.len() });
    }
    let keep = (estate.tau_e - 1.0) / estate.tau_e;
    for (ei, &si) in estate.e.iter_mut().zip(s) {
        if si > *ei {
            *ei = si;
        } else {
            *ei *= keep;
        }
    }
    Ok(())
}

/// Tape-recording learning. Returns whether a row was written.
pub fn learn(x: &SymbolVector, y: &SymbolVector, wen: bool, prog: &mut AssociativeProgram, dedup: bool) -> Result<bool> {
    if !wen || (dedup && prog.contains_pair(x, y)) {
        return Ok(false);
    }
    prog.push(x.clone(), y.clone())?;
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AfMode {
    Af0,
    #[default]
    Af1,
}

/// Which score the output threshold compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EncodeGuard {
    /// Raw similarity `s[win]`.
    #[default]
    Raw,
    /// Biased similarity `se[win]`.
    Biased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AfConfig {
    pub mode: AfMode,
    pub similarity: Similarity,
    pub xinh: f64,
    pub guard: EncodeGuard,
    pub dedup: bool,
    pub tau_e: f64,
    pub bias_add: f64,
    pub bias_mul: f64,
    pub seed: u64,
}

impl Default for AfConfig {
    fn default() -> Self {
        AfConfig {
            mode: AfMode::Af1,
            similarity: Similarity::NonzeroMatchRatio,
            xinh: 0.5,
            guard: EncodeGuard::Raw,
            dedup: false,
            tau_e: 1e6,
            bias_add: 0.0,
            bias_mul: 0.0,
            seed: 0,
        }
    }
}

impl AfConfig {
    pub fn af0(similarity: Similarity, xinh: f64, seed: u64) -> Self {
        AfConfig { mode: AfMode::Af0, similarity, xinh, seed, ..Default::default() }
    }

    pub fn af1(similarity: Similarity, xinh: f64, seed: u64, tau_e: f64, bias_add: f64, bias_mul: f64) -> Self {
        AfConfig { mode: AfMode::Af1, similarity, xinh, seed, tau_e, bias_add, bias_mul, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.xinh >= 0.0) {
            return Err(Error::Config(format!("xinh must be non-negative, got {}", self.xinh)));
        }
        if !(self.tau_e > 1.0) {
            return Err(Error::Config(format!("tau_e must exceed 1, got {}", self.tau_e)));
        }
        Ok(())
    }
}

/// What one cycle did.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub win: Option<usize>,
    pub s_win: f64,
    pub se_win: f64,
    pub y: Option<SymbolVector>,
    pub learned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociativeField {
    config: AfConfig,
    program: AssociativeProgram,
    estate: EState,
    rng: SimRng,
    wen: bool,
}

impl AssociativeField {
    pub fn new(config: AfConfig, program: AssociativeProgram) -> Result<Self> {
        config.validate()?;
        let estate = EState::new(program.len(), config.tau_e, config.bias_add, config.bias_mul)?;
        let rng = seeded(config.seed);
        Ok(AssociativeField { config, program, estate, rng, wen: false })
    }

    pub fn empty(config: AfConfig, dim_x: usize, dim_y: usize) -> Result<Self> {
        Self::new(config, AssociativeProgram::new(dim_x, dim_y, DEFAULT_CAPACITY))
    }

    pub fn config(&self) -> &AfConfig {
        &self.config
    }

    pub fn program(&self) -> &AssociativeProgram {
        &self.program
    }

    pub fn estate(&self) -> &EState {
        &self.estate
    }

    pub fn set_estate(&mut self, estate: EState) -> Result<()> {
        if estate.len() != self.program.len() {
            return Err(Error::Dimension { expected: self.program.len(), got: estate.len() });
        }
        self.estate = estate;
        Ok(())
    }

    pub fn set_write_enable(&mut self, wen: bool) {
        self.wen = wen;
    }

    pub fn write_enabled(&self) -> bool {
        self.wen
    }

    /// One autonomous cycle.
    pub fn cycle(&mut self, x: &SymbolVector) -> Result<CycleRecord> {
        self.cycle_with(x, None)
    }

    /// One cycle with the output clamped to `y`, as a teacher would force it.
    /// E-states evolve as usual; the pair is recorded when write-enabled.
    pub fn forced_cycle(&mut self, x: &SymbolVector, y: &SymbolVector) -> Result<CycleRecord> {
        y.check_dim(self.program.dim_y)?;
        self.cycle_with(x, Some(y))
    }

    fn cycle_with(&mut self, x: &SymbolVector, forced: Option<&SymbolVector>) -> Result<CycleRecord> {
        let s = decode(x, &self.program, self.config.similarity)?;
        let af1 = self.config.mode == AfMode::Af1;
        let se = if af1 { bias(&s, &self.estate)? } else { s.clone() };
        let (win, s_win, se_win, out) = if s.is_empty() {
            (None, 0.0, 0.0, None)
        } else {
            let win = choose(&se, &mut self.rng)?;
            let guard_scores = match self.config.guard {
                EncodeGuard::Raw => &s,
                EncodeGuard::Biased => &se,
            };
            let out = encode(win, guard_scores, &self.program, self.config.xinh);
            (Some(win), s[win], se[win], out)
        };
        if af1 {
            next_estate(&s, &mut self.estate)?;
        }
        let y = forced.cloned().or(out);
        let mut learned = false;
        if let Some(y) = &y {
            learned = learn(x, y, self.wen, &mut self.program, self.config.dedup)?;
            if learned {
                self.estate.e.push(0.0);
            }
        }
        Ok(CycleRecord { win, s_win, se_win, y, learned })
    }

    /// Output of one autonomous cycle, with NULL as the zero vector.
    pub fn respond(&mut self, x: &SymbolVector) -> Result<SymbolVector> {
        let dim_y = self.program.dim_y;
        Ok(self.cycle(x)?.y.unwrap_or_else(|| SymbolVector::null(dim_y)))
    }
}

/// Black-box view of a field; `reset` restores the field as it was wrapped.
#[derive(Debug, Clone)]
pub struct FieldBox {
    initial: AssociativeField,
    live: AssociativeField,
}

impl FieldBox {
    pub fn new(field: AssociativeField) -> Self {
        FieldBox { live: field.clone(), initial: field }
    }

    pub fn field(&self) -> &AssociativeField {
        &self.live
    }
}

impl BlackBox for FieldBox {
    type Input = SymbolVector;
    type Output = SymbolVector;

    fn reset(&mut self) {
        self.live = self.initial.clone();
    }

    fn step(&mut self, x: &SymbolVector) -> Result<SymbolVector> {
        self.live.respond(x)
    }
}

/// Computes the E-state that turns an AF-1 holding a full `X × Y` program
/// into machine `m`: `e[i] = 1` on rows that belong to the graph of `m`,
/// `0` elsewhere. Biasing defaults to `a = 0, b = 1`.
///
/// The field's own cycles recharge every row whose `x` matches the input,
/// so the result holds for one presentation of each input; re-apply it
/// (or use `respond` on a fresh clone) before presenting an input again.
pub fn reconfigure(
    prog: &AssociativeProgram,
    m: &CombinatorialMachine<SymbolVector, SymbolVector>,
    tau_e: f64,
) -> Result<EState> {
    let present: HashSet<(&SymbolVector, &SymbolVector)> = prog.rows().collect();
    let missing: Vec<String> = m
        .alphabet_x()
        .flat_map(|x| m.alphabet_y().map(move |y| (x, y)))
        .filter(|pair| !present.contains(pair))
        .map(|(x, y)| format!("{x}->{y}"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage { missing });
    }
    let mut estate = EState::new(prog.len(), tau_e, 0.0, 1.0)?;
    for (i, (gx, gy)) in prog.rows().enumerate() {
        if m.apply(gx).is_ok_and(|y| y == gy) {
            estate.e[i] = 1.0;
        }
    }
    Ok(estate)
}

/// Field sizes for the delayed-feedback view: the field input is the
/// external input followed by the feedback field, the field output is the
/// external output followed by the next feedback field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackLayout {
    pub ext_in: usize,
    pub ext_out: usize,
    pub feedback: usize,
}

/// A field read as a combinatorial machine over `(external, feedback)` pairs.
#[derive(Debug, Clone)]
pub struct SplitField {
    inner: FieldBox,
    layout: FeedbackLayout,
}

impl BlackBox for SplitField {
    type Input = (SymbolVector, SymbolVector);
    type Output = (SymbolVector, SymbolVector);

    fn reset(&mut self) {
        self.inner.reset();
    }

    fn step(&mut self, (x, s): &(SymbolVector, SymbolVector)) -> Result<Self::Output> {
        x.check_dim(self.layout.ext_in)?;
        s.check_dim(self.layout.feedback)?;
        let y = self.inner.step(&SymbolVector::concat(&[x, s]))?;
        let split = self.layout.ext_out;
        Ok((y.slice(0..split), y.slice(split..y.dim())))
    }
}

pub type FieldMealy = DelayedFeedback<SplitField, SymbolVector>;

/// Closes a one-cycle delayed feedback loop around `field`; the loop starts
/// with `s0` in the feedback field. A NULL output feeds back the zero vector.
pub fn make_fsm(field: AssociativeField, layout: FeedbackLayout, s0: SymbolVector) -> Result<FieldMealy> {
    let prog = field.program();
    if prog.dim_x() != layout.ext_in + layout.feedback || prog.dim_y() != layout.ext_out + layout.feedback {
        return Err(Error::Config(format!(
            "layout {layout:?} does not match field dimensions {}→{}",
            prog.dim_x(),
            prog.dim_y()
        )));
    }
    s0.check_dim(layout.feedback)?;
    Ok(DelayedFeedback::new(SplitField { inner: FieldBox::new(field), layout }, s0))
}

/// Trains `field` by demonstration: for each cycle the teacher's
/// `(x, s) → (y, s_next)` step is presented with the output clamped, with
/// the state carried through the delayed loop. Returns the number of rows
/// written.
pub fn demonstrate(
    field: &mut AssociativeField,
    steps: impl IntoIterator<Item = (SymbolVector, SymbolVector, SymbolVector, SymbolVector)>,
) -> Result<usize> {
    let was = field.write_enabled();
    field.set_write_enable(true);
    let mut written = 0;
    for (x, s, y, s_next) in steps {
        let rec = field.forced_cycle(&SymbolVector::concat(&[&x, &s]), &SymbolVector::concat(&[&y, &s_next]))?;
        written += usize::from(rec.learned);
    }
    field.set_write_enable(was);
    Ok(written)
}

/// One-component symbol coding of a Mealy machine's alphabets: the `k`-th
/// symbol of each alphabet is coded as `[k + 1]`.
#[derive(Debug, Clone)]
pub struct MealyCoding<X: Symbol, Y: Symbol, S: Symbol> {
    pub xs: Vec<X>,
    pub ys: Vec<Y>,
    pub states: Vec<S>,
}

fn code_of<T: PartialEq>(items: &[T], t: &T) -> SymbolVector {
    let k = items.iter().position(|u| u == t).expect("symbol belongs to its alphabet");
    SymbolVector::new(vec![k as u32 + 1])
}

impl<X: Symbol, Y: Symbol, S: Symbol> MealyCoding<X, Y, S> {
    pub fn of(m: &MealyMachine<X, Y, S>) -> Self {
        MealyCoding {
            xs: m.alphabet_x().cloned().collect(),
            ys: m.alphabet_y().cloned().collect(),
            states: m.states().cloned().collect(),
        }
    }

    pub fn x(&self, x: &X) -> SymbolVector {
        code_of(&self.xs, x)
    }

    pub fn y(&self, y: &Y) -> SymbolVector {
        code_of(&self.ys, y)
    }

    pub fn s(&self, s: &S) -> SymbolVector {
        code_of(&self.states, s)
    }

    pub fn layout(&self) -> FeedbackLayout {
        FeedbackLayout { ext_in: 1, ext_out: 1, feedback: 1 }
    }

    /// The machine rewritten over symbol codes.
    pub fn coded(&self, m: &MealyMachine<X, Y, S>) -> Result<MealyMachine<SymbolVector, SymbolVector, SymbolVector>> {
        MealyMachine::new(
            self.xs.iter().map(|x| self.x(x)),
            self.ys.iter().map(|y| self.y(y)),
            self.states.iter().map(|s| self.s(s)),
            self.s(m.initial_state()),
            m.rows().map(|((x, s), (y, s_next))| (self.x(x), self.s(s), self.y(y), self.s(s_next))),
        )
    }
}

/// `(x, s)` pairs reachable from the initial state.
fn reachable_pairs<X: Symbol, Y: Symbol, S: Symbol>(m: &MealyMachine<X, Y, S>) -> Result<Vec<(X, S)>> {
    let mut seen = vec![m.initial_state().clone()];
    let mut i = 0;
    while i < seen.len() {
        let s = seen[i].clone();
        for x in m.alphabet_x() {
            let (_, s_next) = m.transition(x, &s)?;
            if !seen.contains(s_next) {
                seen.push(s_next.clone());
            }
        }
        i += 1;
    }
    Ok(seen.iter().flat_map(|s| m.alphabet_x().map(move |x| (x.clone(), s.clone()))).collect())
}

/// Outcome of [`demonstrate_mealy`].
#[derive(Debug, Clone)]
pub struct MealyDemonstration {
    pub field: AssociativeField,
    pub cycles: usize,
    pub rows: usize,
}

/// Teaches `m` to an empty field through the delayed feedback loop: the
/// teacher runs from its initial state on uniformly random inputs and every
/// step is recorded, until each reachable `(x, s)` pair has been shown.
pub fn demonstrate_mealy<X: Symbol, Y: Symbol, S: Symbol>(
    m: &MealyMachine<X, Y, S>,
    config: AfConfig,
    max_cycles: usize,
    seed: u64,
) -> Result<MealyDemonstration> {
    let coding = MealyCoding::of(m);
    let mut pending: HashSet<(X, S)> = reachable_pairs(m)?.into_iter().collect();
    let mut field = AssociativeField::empty(config, 2, 2)?;
    let mut rng = seeded(seed);
    let mut state = m.initial_state().clone();
    let mut steps = Vec::new();
    while !pending.is_empty() && steps.len() < max_cycles {
        let x = coding.xs[rng.random_range(0..coding.xs.len())].clone();
        let (y, s_next) = m.transition(&x, &state)?.clone();
        pending.remove(&(x.clone(), state.clone()));
        steps.push((coding.x(&x), coding.s(&state), coding.y(&y), coding.s(&s_next)));
        state = s_next;
    }
    if !pending.is_empty() {
        let mut missing: Vec<String> = pending.iter().map(|(x, s)| format!("({x:?}, {s:?})")).collect();
        missing.sort();
        return Err(Error::Coverage { missing });
    }
    let cycles = steps.len();
    let rows = demonstrate(&mut field, steps)?;
    Ok(MealyDemonstration { field, cycles, rows })
}
