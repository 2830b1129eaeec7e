//! Ensembles of identical protein-molecule machines sharing one input.
//!
//! An ensemble is tracked by its occupation numbers `N_i`. Stochastic steps
//! either tau-leap with one binomial draw per link or run the exact
//! stochastic simulation algorithm on the occupations. The mean-field
//! fractions `ē_i` obey the same master equation as a single molecule's
//! probabilities, and each occupation is binomial with
//! `σ_rel = √(P(1−P)/N)`.
//!
//! [`MembraneModel`] couples ensembles through a shared membrane potential
//! and, optionally, through a low-pass "second messenger" that carries one
//! ensemble's output into another's input.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmm::{check_probability, master_step, Channel5Params, PiecewiseInput, PmmSpec, MAX_RATE_DT};
use crate::rng::{substream, SimRng};

/// Halvings allowed when a leap would drive an occupation negative.
pub const MAX_HALVINGS: usize = 20;
/// Largest ensemble the exact simulation accepts.
pub const EXACT_MAX_N: u64 = 1000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    #[default]
    TauLeap,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub spec: PmmSpec,
    occupations: Vec<u64>,
}

impl Ensemble {
    pub fn new(spec: PmmSpec, occupations: Vec<u64>) -> Result<Self> {
        spec.validate()?;
        if occupations.len() != spec.n_states {
            return Err(Error::Dimension { expected: spec.n_states, got: occupations.len() });
        }
        if occupations.iter().sum::<u64>() == 0 {
            return Err(Error::Config("an ensemble needs at least one molecule".into()));
        }
        Ok(Ensemble { spec, occupations })
    }

    /// `n` molecules, all in `state`.
    pub fn all_in(spec: PmmSpec, n: u64, state: usize) -> Result<Self> {
        let mut occ = vec![0; spec.n_states];
        *occ.get_mut(state).ok_or_else(|| Error::Config(format!("state {state} does not exist")))? = n;
        Self::new(spec, occ)
    }

    /// Occupations rounded from `n · p`, with the remainder put in the
    /// largest state.
    pub fn from_fractions(spec: PmmSpec, n: u64, p: &[f64]) -> Result<Self> {
        check_probability(p, spec.n_states)?;
        let mut occ: Vec<u64> = p.iter().map(|&q| (q.max(0.0) * n as f64).floor() as u64).collect();
        let rest = n - occ.iter().sum::<u64>().min(n);
        let top = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        occ[top] += rest;
        Self::new(spec, occ)
    }

    pub fn n(&self) -> u64 {
        self.occupations.iter().sum()
    }

    pub fn occupations(&self) -> &[u64] {
        &self.occupations
    }

    pub fn fractions(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.occupations.iter().map(|&k| k as f64 / n).collect()
    }
}

fn max_exit(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    (0..n).map(|j| (0..n).map(|i| a[i][j]).sum::<f64>()).fold(0.0, f64::max)
}

fn leap(occ: &mut [u64], a: &[Vec<f64>], dt: f64, rng: &mut SimRng, depth: usize) -> Result<()> {
    let n = occ.len();
    let mut delta = vec![0i64; n];
    for j in 0..n {
        if occ[j] == 0 {
            continue;
        }
        for i in 0..n {
            if i == j || a[i][j] <= 0.0 {
                continue;
            }
            let p = (a[i][j] * dt).min(1.0);
            let k = Binomial::new(occ[j], p).map_err(|e| Error::Config(e.to_string()))?.sample(rng) as i64;
            delta[j] -= k;
            delta[i] += k;
        }
    }
    if (0..n).any(|j| occ[j] as i64 + delta[j] < 0) {
        if depth >= MAX_HALVINGS {
            return Err(Error::StepSize(format!("occupation stayed negative after {MAX_HALVINGS} halvings")));
        }
        leap(occ, a, dt / 2.0, rng, depth + 1)?;
        return leap(occ, a, dt / 2.0, rng, depth + 1);
    }
    for j in 0..n {
        occ[j] = (occ[j] as i64 + delta[j]) as u64;
    }
    Ok(())
}

fn ssa(occ: &mut [u64], a: &[Vec<f64>], dt: f64, rng: &mut SimRng) -> Result<()> {
    let n = occ.len();
    let mut t = 0.0;
    loop {
        let total: f64 = (0..n).map(|j| occ[j] as f64 * (0..n).map(|i| a[i][j]).sum::<f64>()).sum();
        if total <= 0.0 {
            return Ok(());
        }
        t += Exp::new(total).map_err(|e| Error::Config(e.to_string()))?.sample(rng);
        if t >= dt {
            return Ok(());
        }
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = None;
        'outer: for j in 0..n {
            for i in 0..n {
                let prop = if i == j { 0.0 } else { occ[j] as f64 * a[i][j] };
                if prop <= 0.0 {
                    continue;
                }
                chosen = Some((i, j));
                if pick < prop {
                    break 'outer;
                }
                pick -= prop;
            }
        }
        if let Some((i, j)) = chosen {
            occ[j] -= 1;
            occ[i] += 1;
        }
    }
}

/// Advances the ensemble by `dt` at input `x`.
pub fn ensemble_step(ens: &mut Ensemble, x: &[f64], dt: f64, mode: StepMode, rng: &mut SimRng) -> Result<()> {
    let a = ens.spec.rate_matrix(x);
    match mode {
        StepMode::TauLeap => {
            let m = max_exit(&a);
            if !(dt > 0.0) || dt * m > MAX_RATE_DT {
                return Err(Error::StepSize(format!("dt = {dt} with max exit rate {m} exceeds dt·rate ≤ {MAX_RATE_DT}")));
            }
            leap(&mut ens.occupations, &a, dt, rng, 0)
        }
        StepMode::Exact => {
            if ens.n() > EXACT_MAX_N {
                return Err(Error::Config(format!("exact mode supports at most {EXACT_MAX_N} molecules")));
            }
            ssa(&mut ens.occupations, &a, dt, rng)
        }
    }
}

/// Relative occupations `ē_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub e: Vec<f64>,
}

pub fn meanfield_step(mf: &MeanField, x: &[f64], spec: &PmmSpec, dt: f64) -> Result<MeanField> {
    Ok(MeanField { e: master_step(&mf.e, x, spec, dt)? })
}

/// `y = Σ N_i ω(x, s_i)`.
pub fn ensemble_output(ens: &Ensemble, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; ens.spec.output_dim()];
    for (s, &k) in ens.occupations.iter().enumerate() {
        if k > 0 {
            for (yk, w) in y.iter_mut().zip(ens.spec.omega(x, s)) {
                *yk += k as f64 * w;
            }
        }
    }
    y
}

/// `ȳ = N Σ ω(x, s_i) ē_i`.
pub fn meanfield_output(mf: &MeanField, spec: &PmmSpec, n: u64, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; spec.output_dim()];
    for (s, &e) in mf.e.iter().enumerate() {
        for (yk, w) in y.iter_mut().zip(spec.omega(x, s)) {
            *yk += n as f64 * e * w;
        }
    }
    y
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OccupancyStats {
    pub mean: f64,
    pub sigma_abs: f64,
    pub sigma_rel: f64,
}

pub fn occupancy_stats(p: f64, n: u64) -> Result<OccupancyStats> {
    if !(0.0..=1.0).contains(&p) || n == 0 {
        return Err(Error::Config(format!("need 0 ≤ P ≤ 1 and N ≥ 1, got P = {p}, N = {n}")));
    }
    let n = n as f64;
    let var = p * (1.0 - p);
    Ok(OccupancyStats { mean: n * p, sigma_abs: (n * var).sqrt(), sigma_rel: (var / n).sqrt() })
}

/// Runs `runs` independent copies of `ens` to each probe time and returns
/// `occupations[run][probe][state]`. Run `r` draws from its own substream of
/// `seed`, so results do not depend on how runs are spread over threads.
pub fn ensemble_runs(
    ens: &Ensemble,
    input: &PiecewiseInput,
    dt: f64,
    probes: &[f64],
    runs: usize,
    mode: StepMode,
    seed: u64,
) -> Result<Vec<Vec<Vec<u64>>>> {
    if probes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("probe times must be sorted".into()));
    }
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, &[r as u64]);
            let mut e = ens.clone();
            let mut t = 0.0;
            let mut step = 0u64;
            let mut out = Vec::with_capacity(probes.len());
            for &probe in probes {
                let target = (probe / dt).round() as u64;
                while step < target {
                    ensemble_step(&mut e, input.at(t), dt, mode, &mut rng)?;
                    step += 1;
                    t = step as f64 * dt;
                }
                out.push(e.occupations.clone());
            }
            Ok(out)
        })
        .collect()
}

/// A rectangular stimulus current pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    pub start: f64,
    pub duration: f64,
    pub amplitude: f64,
}

/// First-order low-pass carrying the output of ensemble `source` into input
/// component `input` of ensemble `target`:
/// `tau dm/dt = gain · y_source − m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Messenger {
    pub source: usize,
    pub target: usize,
    pub input: usize,
    pub tau: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembraneParams {
    pub c_m: f64,
    pub g_leak: f64,
    pub e_leak: f64,
    pub v0: f64,
    #[serde(default)]
    pub stimulus: Vec<Pulse>,
}

impl MembraneParams {
    pub fn stimulus_at(&self, t: f64) -> f64 {
        self.stimulus
            .iter()
            .filter(|p| t >= p.start && t < p.start + p.duration)
            .map(|p| p.amplitude)
            .sum()
    }
}

/// Largest membrane-potential change one step may make before the step is
/// treated as numerically divergent.
pub const MAX_DV: f64 = 5e-3;

#[derive(Debug, Clone)]
pub struct MembraneModel {
    pub params: MembraneParams,
    pub ensembles: Vec<Ensemble>,
    pub messengers: Vec<Messenger>,
    pub mode: StepMode,
    pub v: f64,
    pub t: f64,
    /// Messenger concentrations, one per messenger.
    pub m: Vec<f64>,
    rngs: Vec<SimRng>,
}

/// Result of one coupled step.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledReport {
    pub v: f64,
    pub currents: Vec<f64>,
}

impl MembraneModel {
    pub fn new(params: MembraneParams, ensembles: Vec<Ensemble>, messengers: Vec<Messenger>, mode: StepMode, seed: u64) -> Result<Self> {
        if !(params.c_m > 0.0) {
            return Err(Error::Config("membrane capacitance must be positive".into()));
        }
        if !(params.g_leak >= 0.0) {
            return Err(Error::Config("leak conductance must be non-negative".into()));
        }
        for m in &messengers {
            if m.source >= ensembles.len() || m.target >= ensembles.len() || m.input == 0 || !(m.tau > 0.0) {
                return Err(Error::Config(format!("invalid messenger {m:?}")));
            }
        }
        let rngs = (0..ensembles.len()).map(|k| substream(seed, &[k as u64])).collect();
        Ok(MembraneModel {
            v: params.v0,
            t: 0.0,
            m: vec![0.0; messengers.len()],
            params,
            ensembles,
            messengers,
            mode,
            rngs,
        })
    }

    /// Input vector of ensemble `k`: the membrane potential, followed by any
    /// messenger concentrations routed to it.
    pub fn input_of(&self, k: usize) -> Vec<f64> {
        let len = 1 + self.messengers.iter().filter(|m| m.target == k).map(|m| m.input).max().unwrap_or(0);
        let mut x = vec![0.0; len];
        x[0] = self.v;
        for (m, &c) in self.messengers.iter().zip(&self.m) {
            if m.target == k {
                x[m.input] = c;
            }
        }
        x
    }

    /// Membrane current of ensemble `k` (first output component).
    pub fn current_of(&self, k: usize) -> f64 {
        ensemble_output(&self.ensembles[k], &self.input_of(k)).first().copied().unwrap_or(0.0)
    }
}

/// Operator-split step: ensembles advance at the current potential, then the
/// potential advances with their new currents, then the messengers relax.
pub fn coupled_step(model: &mut MembraneModel, dt: f64) -> Result<CoupledReport> {
    let inputs: Vec<Vec<f64>> = (0..model.ensembles.len()).map(|k| model.input_of(k)).collect();
    for ((ens, rng), x) in model.ensembles.iter_mut().zip(model.rngs.iter_mut()).zip(&inputs) {
        ensemble_step(ens, x, dt, model.mode, rng)?;
    }
    let outputs: Vec<Vec<f64>> = model.ensembles.iter().zip(&inputs).map(|(e, x)| ensemble_output(e, x)).collect();
    let currents: Vec<f64> = outputs.iter().map(|y| y.first().copied().unwrap_or(0.0)).collect();
    let p = &model.params;
    let i_total: f64 = currents.iter().sum();
    let dv = dt * (-i_total - p.g_leak * (model.v - p.e_leak) + p.stimulus_at(model.t)) / p.c_m;
    if !dv.is_finite() || dv.abs() > MAX_DV {
        return Err(Error::StepSize(format!(
            "membrane potential changed by {dv} V in one step at t = {}; reduce dt",
            model.t
        )));
    }
    model.v += dv;
    for (m, c) in model.messengers.iter().zip(model.m.iter_mut()) {
        let y = outputs[m.source].first().copied().unwrap_or(0.0);
        *c += dt * (m.gain * y - *c) / m.tau;
    }
    model.t += dt;
    Ok(CoupledReport { v: model.v, currents })
}

/// Column-oriented record of a membrane run.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneTrace {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl MembraneTrace {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Runs the model to `t_end`, recording every `record_every` steps.
/// Columns: `t`, `V`, `e{k}_s{i}` fractions, then `I{k}` currents.
pub fn run_membrane(model: &mut MembraneModel, t_end: f64, dt: f64, record_every: usize) -> Result<MembraneTrace> {
    let mut header = vec!["t".to_string(), "V".to_string()];
    for (k, e) in model.ensembles.iter().enumerate() {
        header.extend((0..e.spec.n_states).map(|i| format!("e{k}_s{i}")));
    }
    header.extend((0..model.ensembles.len()).map(|k| format!("I{k}")));
    let row = |m: &MembraneModel, currents: &[f64]| {
        let mut r = vec![m.t, m.v];
        for e in &m.ensembles {
            r.extend(e.fractions());
        }
        r.extend_from_slice(currents);
        r
    };
    let initial: Vec<f64> = (0..model.ensembles.len()).map(|k| model.current_of(k)).collect();
    let mut rows = vec![row(model, &initial)];
    let steps = (t_end / dt).round() as usize;
    let every = record_every.max(1);
    for s in 0..steps {
        let rep = coupled_step(model, dt)?;
        if (s + 1) % every == 0 {
            rows.push(row(model, &rep.currents));
        }
    }
    Ok(MembraneTrace { header, rows })
}

/// Parameters of the two-ensemble spike demonstration. The numbers are
/// illustrative choices tuned to give an all-or-none response; they are not
/// measured constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpikeDemo {
    pub sodium: Channel5Params,
    pub potassium: Channel5Params,
    pub n_sodium: u64,
    pub n_potassium: u64,
    pub membrane: MembraneParams,
    pub dt: f64,
    pub t_end: f64,
}

impl Default for SpikeDemo {
    fn default() -> Self {
        let n = 10_000;
        let mut sodium = Channel5Params::sodium();
        sodium.p_open = SPIKE_P_SODIUM / n as f64;
        let mut potassium = Channel5Params::potassium();
        potassium.p_open = SPIKE_P_POTASSIUM / n as f64;
        SpikeDemo {
            sodium,
            potassium,
            n_sodium: n,
            n_potassium: n,
            membrane: MembraneParams {
                c_m: 1.0,
                g_leak: SPIKE_G_LEAK,
                e_leak: -0.070,
                v0: -0.070,
                stimulus: vec![Pulse { start: 2.0, duration: 1.0, amplitude: SPIKE_STIMULUS }],
            },
            dt: 0.005,
            t_end: 25.0,
        }
    }
}

const SPIKE_P_SODIUM: f64 = 1e-5;
const SPIKE_P_POTASSIUM: f64 = 1e-5;
const SPIKE_G_LEAK: f64 = 0.2;
const SPIKE_STIMULUS: f64 = 0.04;

impl SpikeDemo {
    /// The demo with every stimulus pulse scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut d = self.clone();
        for p in &mut d.membrane.stimulus {
            p.amplitude *= factor;
        }
        d
    }

    /// Builds the model with both ensembles at their resting distribution.
    pub fn build(&self, mode: StepMode, seed: u64) -> Result<MembraneModel> {
        let v = [self.membrane.v0];
        let na = crate::pmm::channel5_spec(&self.sodium)?;
        let k = crate::pmm::channel5_spec(&self.potassium)?;
        let na_rest = crate::pmm::stationary(&na, &v)?;
        let k_rest = crate::pmm::stationary(&k, &v)?;
        let ensembles = vec![
            Ensemble::from_fractions(na, self.n_sodium, &na_rest)?,
            Ensemble::from_fractions(k, self.n_potassium, &k_rest)?,
        ];
        MembraneModel::new(self.membrane.clone(), ensembles, Vec::new(), mode, seed)
    }

    pub fn run(&self, mode: StepMode, seed: u64, record_every: usize) -> Result<MembraneTrace> {
        let mut model = self.build(mode, seed)?;
        run_membrane(&mut model, self.t_end, self.dt, record_every)
    }

    /// Summarizes a trace of this demo: resting potential just before the
    /// first pulse, peak excursion above it, and the course of the sodium
    /// ensemble's inactive-state fraction.
    pub fn measure(&self, trace: &MembraneTrace) -> Result<SpikeMeasures> {
        let missing = |c: &str| Error::Config(format!("trace has no column {c}"));
        let t = trace.column("t").ok_or_else(|| missing("t"))?;
        let v = trace.column("V").ok_or_else(|| missing("V"))?;
        let inactive = trace.column("e0_s4").ok_or_else(|| missing("e0_s4"))?;
        let onset = self.membrane.stimulus.iter().map(|p| p.start).fold(f64::INFINITY, f64::min);
        let rest = t
            .iter()
            .zip(&v)
            .take_while(|(&ti, _)| ti < onset)
            .map(|(_, &vi)| vi)
            .last()
            .unwrap_or(self.membrane.v0);
        let peak = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(SpikeMeasures {
            rest,
            peak,
            excursion: peak - rest,
            inactive_start: inactive.first().copied().unwrap_or(0.0),
            inactive_peak: inactive.iter().copied().fold(0.0, f64::max),
            inactive_end: inactive.last().copied().unwrap_or(0.0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpikeMeasures {
    pub rest: f64,
    pub peak: f64,
    pub excursion: f64,
    pub inactive_start: f64,
    pub inactive_peak: f64,
    pub inactive_end: f64,
}

impl SpikeMeasures {
    /// The inactive state fills by at least a quarter of the ensemble and
    /// gives back at least half of that by the end.
    pub fn inactivation_is_transient(&self) -> bool {
        self.inactive_peak >= self.inactive_start + 0.25
            && self.inactive_end <= self.inactive_start + 0.5 * (self.inactive_peak - self.inactive_start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmm::{Omega, RateEntry, RateFn};
    use crate::rng::seeded;

    fn two_state(a10: f64, a01: f64) -> PmmSpec {
        PmmSpec::new(
            2,
            vec![
                RateEntry { from: 0, to: 1, rate: RateFn::Const { value: a10 } },
                RateEntry { from: 1, to: 0, rate: RateFn::Const { value: a01 } },
            ],
            Omega::Table { values: vec![vec![1.0], vec![2.0]] },
        )
        .unwrap()
    }

    #[test]
    fn zero_rates_keep_occupations() {
        let mut e = Ensemble::new(two_state(0.0, 0.0), vec![3, 7]).unwrap();
        let mut rng = seeded(1);
        for mode in [StepMode::TauLeap, StepMode::Exact] {
            ensemble_step(&mut e, &[], 0.1, mode, &mut rng).unwrap();
            assert_eq!(e.occupations(), &[3, 7]);
        }
    }

    #[test]
    fn steps_conserve_molecules() {
        let mut e = Ensemble::new(two_state(1.0, 2.0), vec![50, 50]).unwrap();
        let mut rng = seeded(2);
        for i in 0..2000 {
            let mode = if i % 2 == 0 { StepMode::TauLeap } else { StepMode::Exact };
            ensemble_step(&mut e, &[], 0.05, mode, &mut rng).unwrap();
            assert_eq!(e.n(), 100);
        }
    }

    #[test]
    fn output_is_weighted_sum() {
        let e = Ensemble::new(two_state(1.0, 1.0), vec![4, 6]).unwrap();
        assert_eq!(ensemble_output(&e, &[]), vec![16.0]);
        let mf = MeanField { e: vec![0.4, 0.6] };
        assert!((meanfield_output(&mf, &e.spec, 10, &[])[0] - 16.0).abs() < 1e-12);
    }

    #[test]
    fn zero_output_state() {
        let mut spec = two_state(1.0, 1.0);
        spec.omega = Omega::Table { values: vec![vec![0.0], vec![5.0]] };
        let e = Ensemble::all_in(spec, 100, 0).unwrap();
        assert_eq!(ensemble_output(&e, &[]), vec![0.0]);
    }

    #[test]
    fn stats_examples() {
        assert!((occupancy_stats(0.5, 100).unwrap().sigma_rel - 0.05).abs() < 1e-15);
        assert_eq!(occupancy_stats(0.0, 50).unwrap().sigma_abs, 0.0);
        assert_eq!(occupancy_stats(1.0, 50).unwrap().sigma_rel, 0.0);
        assert!(occupancy_stats(1.5, 10).is_err());
    }

    #[test]
    fn meanfield_steady_state() {
        let spec = two_state(2.0, 3.0);
        let mut mf = MeanField { e: vec![1.0, 0.0] };
        for _ in 0..5000 {
            mf = meanfield_step(&mf, &[], &spec, 0.01).unwrap();
        }
        assert!((mf.e[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn exact_mode_limits_size() {
        let mut e = Ensemble::all_in(two_state(1.0, 1.0), 5000, 0).unwrap();
        assert!(matches!(ensemble_step(&mut e, &[], 0.01, StepMode::Exact, &mut seeded(0)), Err(Error::Config(_))));
    }

    #[test]
    fn large_steps_are_refused() {
        let mut e = Ensemble::all_in(two_state(10.0, 1.0), 10, 0).unwrap();
        assert!(matches!(ensemble_step(&mut e, &[], 0.1, StepMode::TauLeap, &mut seeded(0)), Err(Error::StepSize(_))));
    }

    #[test]
    fn symmetric_long_run_is_binomial() {
        let e = Ensemble::all_in(two_state(1.0, 1.0), 1000, 0).unwrap();
        let runs = ensemble_runs(&e, &PiecewiseInput::constant(vec![]), 0.01, &[10.0], 400, StepMode::TauLeap, 5).unwrap();
        let n0: Vec<f64> = runs.iter().map(|r| r[0][0] as f64).collect();
        let mean = n0.iter().sum::<f64>() / n0.len() as f64;
        let sigma = 250f64.sqrt();
        assert!((mean - 500.0).abs() < 3.0 * sigma / (n0.len() as f64).sqrt(), "{mean}");
    }

    #[test]
    fn runs_do_not_depend_on_thread_count() {
        let e = Ensemble::all_in(two_state(1.0, 2.0), 300, 0).unwrap();
        let input = PiecewiseInput::constant(vec![]);
        let go = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ensemble_runs(&e, &input, 0.01, &[0.5, 1.0], 16, StepMode::TauLeap, 9).unwrap())
        };
        assert_eq!(go(1), go(4));
    }

    #[test]
    fn passive_membrane_relaxes_to_leak() {
        let params = MembraneParams { c_m: 1.0, g_leak: 0.5, e_leak: -0.065, v0: 0.0, stimulus: vec![] };
        let mut m = MembraneModel::new(params, vec![], vec![], StepMode::TauLeap, 0).unwrap();
        for _ in 0..4000 {
            coupled_step(&mut m, 0.01).unwrap();
        }
        assert!((m.v + 0.065).abs() < 1e-9);
    }

    #[test]
    fn messenger_tracks_source_output() {
        let spec = two_state(0.0, 0.0);
        let src = Ensemble::new(spec.clone(), vec![0, 10]).unwrap();
        let dst = Ensemble::new(spec, vec![10, 0]).unwrap();
        let params = MembraneParams { c_m: 1e9, g_leak: 0.0, e_leak: 0.0, v0: 0.0, stimulus: vec![] };
        let msg = Messenger { source: 0, target: 1, input: 1, tau: 1.0, gain: 0.5 };
        let mut m = MembraneModel::new(params, vec![src, dst], vec![msg], StepMode::TauLeap, 0).unwrap();
        for _ in 0..2000 {
            coupled_step(&mut m, 0.01).unwrap();
        }
        assert!((m.m[0] - 10.0).abs() < 1e-6);
        assert_eq!(m.input_of(1)[1], m.m[0]);
    }

    #[test]
    fn runaway_potential_is_reported() {
        let params = MembraneParams { c_m: 1e-6, g_leak: 1.0, e_leak: 1.0, v0: 0.0, stimulus: vec![] };
        let mut m = MembraneModel::new(params, vec![], vec![], StepMode::TauLeap, 0).unwrap();
        assert!(matches!(coupled_step(&mut m, 0.01), Err(Error::StepSize(_))));
    }
}
