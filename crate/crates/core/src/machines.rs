//! Reference semantics for combinatorial, probabilistic-combinatorial and
//! finite-state (Mealy) machines, the one-cycle delayed-feedback
//! construction, and black-box equivalence testing.

use std::collections::HashSet;
use std::fmt::Debug;
use std::hash::Hash;

use indexmap::{IndexMap, IndexSet};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, SimRng};

/// Anything usable as a machine symbol.
pub trait Symbol: Clone + Eq + Hash + Debug {}
impl<T: Clone + Eq + Hash + Debug> Symbol for T {}

/// A machine observed only through its inputs and outputs.
pub trait BlackBox {
    type Input: Symbol;
    type Output: Clone + PartialEq + Debug;

    /// Returns the machine to its initial state.
    fn reset(&mut self);

    /// One cycle. Inputs outside the alphabet yield [`Error::Rejected`].
    fn step(&mut self, x: &Self::Input) -> Result<Self::Output>;
}

fn rejected<X: Debug>(x: &X) -> Error {
    Error::Rejected(format!("{x:?}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinatorialMachine<X: Symbol, Y: Symbol> {
    alphabet_y: IndexSet<Y>,
    table: IndexMap<X, Y>,
}

impl<X: Symbol, Y: Symbol> CombinatorialMachine<X, Y> {
    /// Builds a machine from its output alphabet and the rows of `f`.
    /// The input alphabet is the set of row keys, so `f` is total.
    pub fn new(alphabet_y: impl IntoIterator<Item = Y>, rows: impl IntoIterator<Item = (X, Y)>) -> Result<Self> {
        let alphabet_y: IndexSet<Y> = alphabet_y.into_iter().collect();
        let mut table = IndexMap::new();
        for (x, y) in rows {
            if !alphabet_y.contains(&y) {
                return Err(Error::Config(format!("output {y:?} is not in the output alphabet")));
            }
            if table.insert(x.clone(), y).is_some() {
                return Err(Error::Config(format!("input {x:?} appears twice in the table")));
            }
        }
        Ok(CombinatorialMachine { alphabet_y, table })
    }

    pub fn from_fn(alphabet_x: impl IntoIterator<Item = X>, alphabet_y: impl IntoIterator<Item = Y>, f: impl Fn(&X) -> Y) -> Result<Self> {
        let rows: Vec<(X, Y)> = alphabet_x.into_iter().map(|x| {
            let y = f(&x);
            (x, y)
        }).collect();
        Self::new(alphabet_y, rows)
    }

    pub fn alphabet_x(&self) -> impl Iterator<Item = &X> {
        self.table.keys()
    }

    pub fn alphabet_y(&self) -> impl Iterator<Item = &Y> {
        self.alphabet_y.iter()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&X, &Y)> {
        self.table.iter()
    }

    pub fn apply(&self, x: &X) -> Result<&Y> {
        self.table.get(x).ok_or_else(|| rejected(x))
    }

    /// Pointwise application of `f`.
    pub fn run(&self, xs: &[X]) -> Result<Vec<Y>> {
        xs.iter().map(|x| self.apply(x).cloned()).collect()
    }
}

impl<X: Symbol, Y: Symbol> BlackBox for CombinatorialMachine<X, Y> {
    type Input = X;
    type Output = Y;

    fn reset(&mut self) {}

    fn step(&mut self, x: &X) -> Result<Y> {
        self.apply(x).cloned()
    }
}

/// A probability given as an integer ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u64; 2]", into = "[u64; 2]")]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        Ratio { num, den }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl From<[u64; 2]> for Ratio {
    fn from(v: [u64; 2]) -> Self {
        Ratio { num: v[0], den: v[1] }
    }
}

impl From<Ratio> for [u64; 2] {
    fn from(r: Ratio) -> Self {
        [r.num, r.den]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilisticMachine<X: Symbol, Y: Symbol> {
    alphabet_y: IndexSet<Y>,
    /// `delta[x][k]` is the probability of the `k`-th output symbol.
    delta: IndexMap<X, Vec<Ratio>>,
}

impl<X: Symbol, Y: Symbol> ProbabilisticMachine<X, Y> {
    /// `rows` lists, per input, the probability of each output in
    /// `alphabet_y` order.
    pub fn new(alphabet_y: impl IntoIterator<Item = Y>, rows: impl IntoIterator<Item = (X, Vec<Ratio>)>) -> Result<Self> {
        let alphabet_y: IndexSet<Y> = alphabet_y.into_iter().collect();
        let mut delta = IndexMap::new();
        for (x, probs) in rows {
            if probs.len() != alphabet_y.len() {
                return Err(Error::Config(format!(
                    "row for {x:?} has {} probabilities for {} outputs",
                    probs.len(),
                    alphabet_y.len()
                )));
            }
            if probs.iter().any(|r| r.den == 0 || r.num > r.den) {
                return Err(Error::Config(format!("row for {x:?} has a probability outside [0,1]")));
            }
            let total: f64 = probs.iter().map(|r| r.value()).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("row for {x:?} sums to {total}, not 1")));
            }
            if delta.insert(x.clone(), probs).is_some() {
                return Err(Error::Config(format!("input {x:?} appears twice")));
            }
        }
        Ok(ProbabilisticMachine { alphabet_y, delta })
    }

    pub fn alphabet_x(&self) -> impl Iterator<Item = &X> {
        self.delta.keys()
    }

    pub fn alphabet_y(&self) -> impl Iterator<Item = &Y> {
        self.alphabet_y.iter()
    }

    /// `δ(x, y)`.
    pub fn probability(&self, x: &X, y: &Y) -> Result<f64> {
        let row = self.delta.get(x).ok_or_else(|| rejected(x))?;
        Ok(self.alphabet_y.get_index_of(y).map_or(0.0, |k| row[k].value()))
    }

    pub fn draw(&self, x: &X, rng: &mut SimRng) -> Result<Y> {
        let row = self.delta.get(x).ok_or_else(|| rejected(x))?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        for (k, r) in row.iter().enumerate() {
            if r.num == 0 {
                continue;
            }
            last_nonzero = k;
            acc += r.value();
            if u < acc {
                return Ok(self.alphabet_y[k].clone());
            }
        }
        Ok(self.alphabet_y[last_nonzero].clone())
    }

    /// Independent per-cycle draws from `δ(x_ν, ·)`, reproducible from `seed`.
    pub fn sample(&self, xs: &[X], seed: u64) -> Result<Vec<Y>> {
        let mut rng = seeded(seed);
        xs.iter().map(|x| self.draw(x, &mut rng)).collect()
    }

    pub fn runner(&self, seed: u64) -> ProbabilisticRunner<'_, X, Y> {
        ProbabilisticRunner { machine: self, seed, rng: seeded(seed) }
    }
}

pub struct ProbabilisticRunner<'a, X: Symbol, Y: Symbol> {
    machine: &'a ProbabilisticMachine<X, Y>,
    seed: u64,
    rng: SimRng,
}

impl<X: Symbol, Y: Symbol> BlackBox for ProbabilisticRunner<'_, X, Y> {
    type Input = X;
    type Output = Y;

    fn reset(&mut self) {
        self.rng = seeded(self.seed);
    }

    fn step(&mut self, x: &X) -> Result<Y> {
        self.machine.draw(x, &mut self.rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MealyMachine<X: Symbol, Y: Symbol, S: Symbol> {
    alphabet_x: IndexSet<X>,
    alphabet_y: IndexSet<Y>,
    states: IndexSet<S>,
    s0: S,
    table: IndexMap<(X, S), (Y, S)>,
}

impl<X: Symbol, Y: Symbol, S: Symbol> MealyMachine<X, Y, S> {
    /// Rows are `(x, s, y, s_next)`; `ω` and the next-state map must be total.
    pub fn new(
        alphabet_x: impl IntoIterator<Item = X>,
        alphabet_y: impl IntoIterator<Item = Y>,
        states: impl IntoIterator<Item = S>,
        s0: S,
        rows: impl IntoIterator<Item = (X, S, Y, S)>,
    ) -> Result<Self> {
        let alphabet_x: IndexSet<X> = alphabet_x.into_iter().collect();
        let alphabet_y: IndexSet<Y> = alphabet_y.into_iter().collect();
        let states: IndexSet<S> = states.into_iter().collect();
        if !states.contains(&s0) {
            return Err(Error::Config(format!("initial state {s0:?} is not a state")));
        }
        let mut table = IndexMap::new();
        for (x, s, y, s_next) in rows {
            if !alphabet_x.contains(&x) || !states.contains(&s) || !alphabet_y.contains(&y) || !states.contains(&s_next) {
                return Err(Error::Config(format!("row ({x:?}, {s:?}) -> ({y:?}, {s_next:?}) leaves the alphabets")));
            }
            if table.insert((x.clone(), s.clone()), (y, s_next)).is_some() {
                return Err(Error::Config(format!("row ({x:?}, {s:?}) appears twice")));
            }
        }
        for x in &alphabet_x {
            for s in &states {
                if !table.contains_key(&(x.clone(), s.clone())) {
                    return Err(Error::Config(format!("no row for ({x:?}, {s:?})")));
                }
            }
        }
        Ok(MealyMachine { alphabet_x, alphabet_y, states, s0, table })
    }

    pub fn alphabet_x(&self) -> impl Iterator<Item = &X> {
        self.alphabet_x.iter()
    }

    pub fn alphabet_y(&self) -> impl Iterator<Item = &Y> {
        self.alphabet_y.iter()
    }

    pub fn states(&self) -> impl Iterator<Item = &S> {
        self.states.iter()
    }

    pub fn initial_state(&self) -> &S {
        &self.s0
    }

    pub fn rows(&self) -> impl Iterator<Item = (&(X, S), &(Y, S))> {
        self.table.iter()
    }

    /// `(ω(x, s), α(x, s))`.
    pub fn transition(&self, x: &X, s: &S) -> Result<&(Y, S)> {
        self.table.get(&(x.clone(), s.clone())).ok_or_else(|| rejected(x))
    }

    pub fn run(&self, xs: &[X]) -> Result<Vec<Y>> {
        let mut runner = self.runner();
        xs.iter().map(|x| runner.step(x)).collect()
    }

    pub fn runner(&self) -> MealyRunner<'_, X, Y, S> {
        MealyRunner { machine: self, state: self.s0.clone() }
    }
}

pub struct MealyRunner<'a, X: Symbol, Y: Symbol, S: Symbol> {
    machine: &'a MealyMachine<X, Y, S>,
    state: S,
}

impl<X: Symbol, Y: Symbol, S: Symbol> MealyRunner<'_, X, Y, S> {
    pub fn state(&self) -> &S {
        &self.state
    }
}

impl<X: Symbol, Y: Symbol, S: Symbol> BlackBox for MealyRunner<'_, X, Y, S> {
    type Input = X;
    type Output = Y;

    fn reset(&mut self) {
        self.state = self.machine.s0.clone();
    }

    fn step(&mut self, x: &X) -> Result<Y> {
        let (y, s_next) = self.machine.transition(x, &self.state)?.clone();
        self.state = s_next;
        Ok(y)
    }
}

/// Turns a combinatorial machine over `X × S → Y × S` into a Mealy machine
/// by feeding the `S` component of the output back one cycle later.
pub fn wrap_delayed_feedback<X: Symbol, Y: Symbol, S: Symbol>(
    m: &CombinatorialMachine<(X, S), (Y, S)>,
    s0: S,
) -> Result<MealyMachine<X, Y, S>> {
    let xs: IndexSet<X> = m.alphabet_x().map(|(x, _)| x.clone()).collect();
    let states: IndexSet<S> = m.alphabet_x().map(|(_, s)| s.clone()).collect();
    if m.table.len() != xs.len() * states.len() {
        return Err(Error::Config(
            "input alphabet is not a product of external and feedback components".into(),
        ));
    }
    let ys: IndexSet<Y> = m.alphabet_y().map(|(y, _)| y.clone()).collect();
    if let Some((_, s)) = m.alphabet_y().find(|(_, s)| !states.contains(s)) {
        return Err(Error::Config(format!("fed-back component {s:?} is not an input state")));
    }
    let rows: Vec<(X, S, Y, S)> = m
        .rows()
        .map(|((x, s), (y, s_next))| (x.clone(), s.clone(), y.clone(), s_next.clone()))
        .collect();
    MealyMachine::new(xs, ys, states, s0, rows)
}

/// Black-box form of the delayed feedback loop around any machine whose
/// input and output carry a feedback component.
pub struct DelayedFeedback<B, S> {
    inner: B,
    s0: S,
    state: S,
}

impl<B, S: Clone> DelayedFeedback<B, S> {
    pub fn new(inner: B, s0: S) -> Self {
        DelayedFeedback { inner, state: s0.clone(), s0 }
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<X, Y, S, B> BlackBox for DelayedFeedback<B, S>
where
    X: Symbol,
    Y: Symbol,
    S: Symbol,
    B: BlackBox<Input = (X, S), Output = (Y, S)>,
{
    type Input = X;
    type Output = Y;

    fn reset(&mut self) {
        self.inner.reset();
        self.state = self.s0.clone();
    }

    fn step(&mut self, x: &X) -> Result<Y> {
        let (y, s_next) = self.inner.step(&(x.clone(), self.state.clone()))?;
        self.state = s_next;
        Ok(y)
    }
}

#[derive(Debug, Clone)]
pub enum Probe<X> {
    /// Every symbol once, from a fresh reset.
    Exhaustive(Vec<X>),
    /// Every input sequence of length `1..=depth`, each from a fresh reset.
    Sequences { alphabet: Vec<X>, depth: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Equivalence<X, Y> {
    Pass { probes: usize },
    Fail { inputs: Vec<X>, left: Vec<Y>, right: Vec<Y> },
}

impl<X, Y> Equivalence<X, Y> {
    pub fn passed(&self) -> bool {
        matches!(self, Equivalence::Pass { .. })
    }
}

fn run_sequence<B: BlackBox>(m: &mut B, xs: &[B::Input]) -> Result<Vec<B::Output>> {
    m.reset();
    xs.iter()
        .map(|x| {
            m.step(x).map_err(|e| match e {
                Error::Rejected(s) => Error::Config(format!("alphabet mismatch: {s} rejected")),
                other => other,
            })
        })
        .collect()
}

/// Deterministic black-box equivalence on a probe set. A failing probe is
/// reported with the shortest witness sequence found.
pub fn equivalent<A, B>(a: &mut A, b: &mut B, probe: &Probe<A::Input>) -> Result<Equivalence<A::Input, A::Output>>
where
    A: BlackBox,
    B: BlackBox<Input = A::Input, Output = A::Output>,
{
    let mut probes = 0;
    let mut compare = |xs: &[A::Input]| -> Result<Option<Equivalence<A::Input, A::Output>>> {
        probes += 1;
        let left = run_sequence(a, xs)?;
        let right = run_sequence(b, xs)?;
        if left == right {
            return Ok(None);
        }
        let cut = left.iter().zip(&right).position(|(l, r)| l != r).unwrap_or(0) + 1;
        Ok(Some(Equivalence::Fail {
            inputs: xs[..cut].to_vec(),
            left: left[..cut].to_vec(),
            right: right[..cut].to_vec(),
        }))
    };
    match probe {
        Probe::Exhaustive(xs) => {
            for x in xs {
                if let Some(fail) = compare(std::slice::from_ref(x))? {
                    return Ok(fail);
                }
            }
        }
        Probe::Sequences { alphabet, depth } => {
            if alphabet.is_empty() {
                return Ok(Equivalence::Pass { probes: 0 });
            }
            for len in 1..=*depth {
                let mut digits = vec![0usize; len];
                loop {
                    let seq: Vec<A::Input> = digits.iter().map(|&d| alphabet[d].clone()).collect();
                    if let Some(fail) = compare(&seq)? {
                        return Ok(fail);
                    }
                    // odometer increment
                    let mut i = len;
                    let wrapped = loop {
                        if i == 0 {
                            break true;
                        }
                        i -= 1;
                        digits[i] += 1;
                        if digits[i] < alphabet.len() {
                            break false;
                        }
                        digits[i] = 0;
                    };
                    if wrapped {
                        break;
                    }
                }
            }
        }
    }
    Ok(Equivalence::Pass { probes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyCheck<X, Y> {
    pub x: X,
    pub y: Y,
    pub expected: f64,
    pub observed: f64,
    pub sigma: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilisticVerdict<X, Y> {
    pub checks: Vec<FrequencyCheck<X, Y>>,
    /// Outputs that are not in the reference output alphabet.
    pub foreign_outputs: usize,
}

impl<X, Y> ProbabilisticVerdict<X, Y> {
    pub fn passed(&self) -> bool {
        self.foreign_outputs == 0 && self.checks.iter().all(|c| c.within)
    }
}

/// Frequency-band equivalence against a reference `δ`: every empirical
/// frequency over `samples` draws per input must fall within
/// `k_sigma · sqrt(δ(1-δ)/samples)` of `δ`.
pub fn equivalent_probabilistic<X, Y, B>(
    reference: &ProbabilisticMachine<X, Y>,
    candidate: &mut B,
    samples: usize,
    k_sigma: f64,
) -> Result<ProbabilisticVerdict<X, Y>>
where
    X: Symbol,
    Y: Symbol,
    B: BlackBox<Input = X, Output = Y>,
{
    if samples == 0 {
        return Err(Error::Config("probabilistic probe needs at least one sample".into()));
    }
    let mut checks = Vec::new();
    let mut foreign_outputs = 0;
    candidate.reset();
    for x in reference.alphabet_x() {
        let mut counts = vec![0usize; reference.alphabet_y.len()];
        for _ in 0..samples {
            let y = candidate.step(x).map_err(|e| match e {
                Error::Rejected(s) => Error::Config(format!("alphabet mismatch: {s} rejected")),
                other => other,
            })?;
            match reference.alphabet_y.get_index_of(&y) {
                Some(k) => counts[k] += 1,
                None => foreign_outputs += 1,
            }
        }
        for (k, y) in reference.alphabet_y.iter().enumerate() {
            let expected = reference.probability(x, y)?;
            let observed = counts[k] as f64 / samples as f64;
            let sigma = (expected * (1.0 - expected) / samples as f64).sqrt();
            let within = (observed - expected).abs() <= k_sigma * sigma + 1e-12;
            checks.push(FrequencyCheck { x: x.clone(), y: y.clone(), expected, observed, sigma, within });
        }
    }
    Ok(ProbabilisticVerdict { checks, foreign_outputs })
}

/// JSON form of a combinatorial machine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CombinatorialSpec {
    pub alphabet_x: Vec<String>,
    pub alphabet_y: Vec<String>,
    pub table: Vec<[String; 2]>,
}

impl CombinatorialSpec {
    pub fn build(&self) -> Result<CombinatorialMachine<String, String>> {
        let m = CombinatorialMachine::new(
            self.alphabet_y.iter().cloned(),
            self.table.iter().map(|[x, y]| (x.clone(), y.clone())),
        )?;
        let declared: HashSet<&String> = self.alphabet_x.iter().collect();
        let covered: HashSet<&String> = m.alphabet_x().collect();
        if declared != covered {
            return Err(Error::Config("table rows do not match alphabet_x".into()));
        }
        Ok(m)
    }
}

/// JSON form of a Mealy machine; rows are `[x, s, y, s_next]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealySpec {
    pub alphabet_x: Vec<String>,
    pub alphabet_y: Vec<String>,
    pub states: Vec<String>,
    pub s0: String,
    pub table: Vec<[String; 4]>,
}

impl MealySpec {
    pub fn build(&self) -> Result<MealyMachine<String, String, String>> {
        MealyMachine::new(
            self.alphabet_x.iter().cloned(),
            self.alphabet_y.iter().cloned(),
            self.states.iter().cloned(),
            self.s0.clone(),
            self.table
                .iter()
                .map(|[x, s, y, n]| (x.clone(), s.clone(), y.clone(), n.clone())),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbabilisticEntry {
    pub x: String,
    pub y: String,
    pub p: Ratio,
}

/// JSON form of a probabilistic machine; missing `(x, y)` entries are zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbabilisticSpec {
    pub alphabet_x: Vec<String>,
    pub alphabet_y: Vec<String>,
    pub delta: Vec<ProbabilisticEntry>,
}

impl ProbabilisticSpec {
    pub fn build(&self) -> Result<ProbabilisticMachine<String, String>> {
        let rows: Vec<(String, Vec<Ratio>)> = self
            .alphabet_x
            .iter()
            .map(|x| {
                let probs = self
                    .alphabet_y
                    .iter()
                    .map(|y| {
                        self.delta
                            .iter()
                            .find(|e| &e.x == x && &e.y == y)
                            .map_or(Ratio::new(0, 1), |e| e.p)
                    })
                    .collect();
                (x.clone(), probs)
            })
            .collect();
        ProbabilisticMachine::new(self.alphabet_y.iter().cloned(), rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> CombinatorialMachine<&'static str, &'static str> {
        CombinatorialMachine::new(["0", "1"], [("00", "0"), ("01", "1"), ("10", "1"), ("11", "0")]).unwrap()
    }

    fn parity_table() -> CombinatorialMachine<(u8, u8), (u8, u8)> {
        let rows = (0..2).flat_map(|b| (0..2).map(move |s| ((b, s), (s ^ b, s ^ b))));
        CombinatorialMachine::new([(0, 0), (1, 1)], rows).unwrap()
    }

    #[test]
    fn identity_machine() {
        let m = CombinatorialMachine::new(["a", "b"], [("a", "a"), ("b", "b")]).unwrap();
        assert_eq!(m.run(&["a", "b", "a"]).unwrap(), vec!["a", "b", "a"]);
    }

    #[test]
    fn xor_truth_table() {
        assert_eq!(xor().run(&["01", "11"]).unwrap(), vec!["1", "0"]);
    }

    #[test]
    fn constant_machine() {
        let m = CombinatorialMachine::from_fn(0..5u8, ["c"], |_| "c").unwrap();
        assert_eq!(m.run(&[3, 1, 4, 1]).unwrap(), vec!["c"; 4]);
    }

    #[test]
    fn out_of_alphabet_input_is_rejected() {
        assert!(matches!(xor().run(&["02"]), Err(Error::Rejected(_))));
    }

    #[test]
    fn parity_through_delayed_feedback() {
        let mealy = wrap_delayed_feedback(&parity_table(), 0).unwrap();
        let ys: Vec<u8> = mealy.run(&[1, 1, 1]).unwrap();
        assert_eq!(ys, vec![1, 0, 1]);
    }

    #[test]
    fn singleton_feedback_is_memoryless() {
        let rows = [((0u8, ()), (5u8, ())), ((1, ()), (6, ()))];
        let m = CombinatorialMachine::new([(5u8, ()), (6, ())], rows).unwrap();
        let mealy = wrap_delayed_feedback(&m, ()).unwrap();
        assert_eq!(mealy.run(&[1, 0, 0, 1]).unwrap(), vec![6, 5, 5, 6]);
    }

    #[test]
    fn two_state_counter_alternates() {
        // unary input; output is the current state, state flips each cycle
        let rows = (0..2u8).map(|s| (((), s), (s, 1 - s)));
        let m = CombinatorialMachine::new([(0u8, 1u8), (1, 0)], rows).unwrap();
        let mealy = wrap_delayed_feedback(&m, 0).unwrap();
        assert_eq!(mealy.run(&[(); 6]).unwrap(), vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn non_product_alphabet_is_rejected() {
        let rows = [((0u8, 0u8), (0u8, 0u8)), ((1, 1), (1, 1))];
        let m = CombinatorialMachine::new([(0u8, 0u8), (1, 1)], rows).unwrap();
        assert!(matches!(wrap_delayed_feedback(&m, 0), Err(Error::Config(_))));
    }

    #[test]
    fn delayed_feedback_black_box_matches_table_form() {
        let table = parity_table();
        let mealy = wrap_delayed_feedback(&table, 0).unwrap();
        let mut loop_box = DelayedFeedback::new(table, 0u8);
        let probe = Probe::Sequences { alphabet: vec![0u8, 1], depth: 6 };
        let v = equivalent(&mut loop_box, &mut mealy.runner(), &probe).unwrap();
        assert!(v.passed());
    }

    fn mealy_pair() -> (MealyMachine<u8, u8, u8>, MealyMachine<u8, u8, u8>) {
        // states 0,1; input 0 keeps the state, input 1 toggles; output = state
        let rows: Vec<_> = (0..2u8)
            .flat_map(|x| (0..2u8).map(move |s| (x, s, s, s ^ x)))
            .collect();
        let a = MealyMachine::new(0..2, 0..2, 0..2, 0, rows.clone()).unwrap();
        // differ only on (x=0, s=1), first reachable at depth 2 via input 1,0
        let altered: Vec<_> = rows
            .into_iter()
            .map(|(x, s, y, n)| if (x, s) == (0, 1) { (x, s, 0, n) } else { (x, s, y, n) })
            .collect();
        let b = MealyMachine::new(0..2, 0..2, 0..2, 0, altered).unwrap();
        (a, b)
    }

    #[test]
    fn mealy_self_equivalence() {
        let (a, _) = mealy_pair();
        let probe = Probe::Sequences { alphabet: vec![0, 1], depth: 3 };
        assert!(equivalent(&mut a.runner(), &mut a.runner(), &probe).unwrap().passed());
    }

    #[test]
    fn mealy_difference_found_with_shortest_witness() {
        let (a, b) = mealy_pair();
        let probe = Probe::Sequences { alphabet: vec![0, 1], depth: 3 };
        let v = equivalent(&mut a.runner(), &mut b.runner(), &probe).unwrap();
        assert_eq!(
            v,
            Equivalence::Fail { inputs: vec![1, 0], left: vec![0, 1], right: vec![0, 0] }
        );
        // symmetric verdict
        let w = equivalent(&mut b.runner(), &mut a.runner(), &probe).unwrap();
        assert!(!w.passed());
    }

    #[test]
    fn alphabet_mismatch_is_a_configuration_error() {
        let (a, _) = mealy_pair();
        let probe = Probe::Exhaustive(vec![0u8, 1, 2]);
        let err = equivalent(&mut a.runner(), &mut a.runner(), &probe).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn degenerate_delta_is_deterministic() {
        let m = ProbabilisticMachine::new(["p", "q"], [("a", vec![Ratio::new(0, 1), Ratio::new(1, 1)])]).unwrap();
        assert_eq!(m.sample(&["a"; 50], 3).unwrap(), vec!["q"; 50]);
    }

    #[test]
    fn same_seed_same_sequence() {
        let half = vec![Ratio::new(1, 2), Ratio::new(1, 2)];
        let m = ProbabilisticMachine::new([0u8, 1], [("a", half)]).unwrap();
        let xs = vec!["a"; 200];
        assert_eq!(m.sample(&xs, 11).unwrap(), m.sample(&xs, 11).unwrap());
        assert_ne!(m.sample(&xs, 11).unwrap(), m.sample(&xs, 12).unwrap());
    }

    #[test]
    fn fair_coin_frequencies_within_three_sigma() {
        let half = vec![Ratio::new(1, 2), Ratio::new(1, 2)];
        let m = ProbabilisticMachine::new([0u8, 1], [("a", half)]).unwrap();
        let ys = m.sample(&vec!["a"; 10_000], 2024).unwrap();
        let ones = ys.iter().filter(|&&y| y == 1).count() as f64 / 10_000.0;
        assert!((ones - 0.5).abs() <= 3.0 * 0.005, "frequency {ones}");
    }

    #[test]
    fn fair_coin_program_is_probabilistically_equivalent() {
        let half = vec![Ratio::new(1, 2), Ratio::new(1, 2)];
        let m = ProbabilisticMachine::new([0u8, 1], [("a", half)]).unwrap();
        let mut candidate = m.runner(99);
        let v = equivalent_probabilistic(&m, &mut candidate, 10_000, 3.0).unwrap();
        assert!(v.passed(), "{v:?}");
    }

    #[test]
    fn malformed_delta_row_is_rejected() {
        let bad = vec![Ratio::new(1, 2), Ratio::new(1, 3)];
        assert!(ProbabilisticMachine::new([0u8, 1], [("a", bad)]).is_err());
    }

    #[test]
    fn json_schemas_build() {
        let spec: CombinatorialSpec = serde_json::from_str(
            r#"{"alphabet_x":["a","b"],"alphabet_y":["0","1"],"table":[["a","1"],["b","0"]]}"#,
        )
        .unwrap();
        let m = spec.build().unwrap();
        assert_eq!(m.run(&["a".into(), "b".into()]).unwrap(), vec!["1", "0"]);

        let mealy: MealySpec = serde_json::from_str(
            r#"{"alphabet_x":["t"],"alphabet_y":["0","1"],"states":["e","o"],"s0":"e",
                "table":[["t","e","0","o"],["t","o","1","e"]]}"#,
        )
        .unwrap();
        assert_eq!(mealy.build().unwrap().run(&vec!["t".to_string(); 3]).unwrap(), vec!["0", "1", "0"]);

        let incomplete: CombinatorialSpec = serde_json::from_str(
            r#"{"alphabet_x":["a","b"],"alphabet_y":["0"],"table":[["a","0"]]}"#,
        )
        .unwrap();
        assert!(incomplete.build().is_err());
    }

    #[test]
    fn exhaustive_feedback_unroll_matches_direct_simulation() {
        // every 2-input, 2-state machine table with outputs in {0,1}: 4^4 = 256 tables
        let keys: Vec<(u8, u8)> = (0..2).flat_map(|x| (0..2).map(move |s| (x, s))).collect();
        for code in 0..256u32 {
            let rows: Vec<((u8, u8), (u8, u8))> = keys
                .iter()
                .enumerate()
                .map(|(k, &key)| {
                    let v = ((code >> (2 * k)) & 3) as u8;
                    (key, (v & 1, v >> 1))
                })
                .collect();
            let outs: IndexSet<(u8, u8)> = rows.iter().map(|(_, o)| *o).collect();
            let table = CombinatorialMachine::new(outs, rows.clone()).unwrap();
            let mealy = match wrap_delayed_feedback(&table, 0) {
                Ok(m) => m,
                Err(_) => continue,
            };
            let mut direct = DelayedFeedback::new(table, 0u8);
            let probe = Probe::Sequences { alphabet: vec![0u8, 1], depth: 6 };
            assert!(equivalent(&mut direct, &mut mealy.runner(), &probe).unwrap().passed());
        }
    }
}
