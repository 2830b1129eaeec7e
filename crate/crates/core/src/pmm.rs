//! Protein-molecule machines: continuous-time Markov chains whose transition
//! rates depend on an input vector and whose output depends on the state.
//!
//! The probability vector obeys the master equation
//!
//! ```text
//! dP_i/dt = Σ_{j≠i} α(x, i←j) P_j − P_i Σ_{j≠i} α(x, j←i)
//! ```
//!
//! and a single molecule's trajectory is a jump process with exponential
//! dwell times. Outputs are either tabulated per state or given by the
//! Goldman-Hodgkin-Katz current through a state-dependent permeability.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// Faraday constant, C/mol.
pub const FARADAY: f64 = 9.6484e4;
/// Gas constant, J/(K·mol).
pub const GAS_CONSTANT: f64 = 8.3144;

/// Largest admitted `dt · max total exit rate` for deterministic steps.
pub const MAX_RATE_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum RateFn {
    Const { value: f64 },
    /// `amplitude / (1 + exp(-(x[input] - midpoint) / slope))`.
    Sigmoid {
        amplitude: f64,
        midpoint: f64,
        slope: f64,
        #[serde(default)]
        input: usize,
    },
}

impl RateFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            RateFn::Const { value } => value,
            RateFn::Sigmoid { amplitude, midpoint, slope, input } => {
                let v = x.get(input).copied().unwrap_or(0.0);
                amplitude / (1.0 + (-(v - midpoint) / slope).exp())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            RateFn::Const { value } if !(value >= 0.0 && value.is_finite()) => {
                Err(Error::Config(format!("constant rate must be finite and non-negative, got {value}")))
            }
            RateFn::Sigmoid { amplitude, .. } if !(amplitude > 0.0 && amplitude.is_finite()) => {
                Err(Error::Config(format!("sigmoid amplitude must be positive, got {amplitude}")))
            }
            RateFn::Sigmoid { slope, midpoint, .. } if !(slope != 0.0 && slope.is_finite() && midpoint.is_finite()) => {
                Err(Error::Config(format!("sigmoid slope must be finite and non-zero, got {slope}")))
            }
            _ => Ok(()),
        }
    }
}

/// Rate density of the jump `from → to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub from: usize,
    pub to: usize,
    #[serde(flatten)]
    pub rate: RateFn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Permeability of each state, cm/s.
    pub permeabilities: Vec<f64>,
    pub z: f64,
    /// Temperature, K.
    pub temperature: f64,
    pub c_in: f64,
    pub c_out: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_in > 0.0 && self.c_out > 0.0) {
            return Err(Error::Config("concentrations must be positive".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if !self.z.is_finite() || self.permeabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Config("valence and permeabilities must be finite, permeabilities non-negative".into()));
        }
        Ok(())
    }

    /// `zVF/RT` for potential `v`.
    fn reduced(&self, v: f64) -> f64 {
        self.z * v * FARADAY / (GAS_CONSTANT * self.temperature)
    }
}

/// Per-state output ω(x, s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Omega {
    /// One output vector per state, independent of the input.
    Table { values: Vec<Vec<f64>> },
    /// GHK current through the state's permeability at potential `x[input]`.
    Ghk {
        channel: ChannelParams,
        #[serde(default)]
        input: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmmSpec {
    pub n_states: usize,
    pub rates: Vec<RateEntry>,
    pub omega: Omega,
}

impl PmmSpec {
    pub fn new(n_states: usize, rates: Vec<RateEntry>, omega: Omega) -> Result<Self> {
        let spec = PmmSpec { n_states, rates, omega };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(Error::Config("a machine needs at least one state".into()));
        }
        for r in &self.rates {
            if r.from >= self.n_states || r.to >= self.n_states {
                return Err(Error::Config(format!("rate {}→{} names a missing state", r.from, r.to)));
            }
            if r.from == r.to {
                return Err(Error::Config(format!("self-transition {}→{} is meaningless", r.from, r.to)));
            }
            r.rate.validate()?;
        }
        match &self.omega {
            Omega::Table { values } => {
                if values.len() != self.n_states {
                    return Err(Error::Dimension { expected: self.n_states, got: values.len() });
                }
                let k = values[0].len();
                if values.iter().any(|v| v.len() != k || v.iter().any(|w| !w.is_finite())) {
                    return Err(Error::Config("output table rows must be finite and equally long".into()));
                }
            }
            Omega::Ghk { channel, .. } => {
                channel.validate()?;
                if channel.permeabilities.len() != self.n_states {
                    return Err(Error::Dimension { expected: self.n_states, got: channel.permeabilities.len() });
                }
            }
        }
        Ok(())
    }

    /// `rates[to][from]` at input `x`; the diagonal is zero.
    pub fn rate_matrix(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = self.n_states;
        let mut a = vec![vec![0.0; n]; n];
        for r in &self.rates {
            a[r.to][r.from] += r.rate.eval(x);
        }
        a
    }

    /// Total exit rate of every state at input `x`.
    pub fn exit_rates(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        for r in &self.rates {
            out[r.from] += r.rate.eval(x);
        }
        out
    }

    pub fn output_dim(&self) -> usize {
        match &self.omega {
            Omega::Table { values } => values[0].len(),
            Omega::Ghk { .. } => 1,
        }
    }

    pub fn omega(&self, x: &[f64], state: usize) -> Vec<f64> {
        match &self.omega {
            Omega::Table { values } => values[state].clone(),
            Omega::Ghk { channel, input } => {
                vec![ghk_current(x.get(*input).copied().unwrap_or(0.0), state, channel)]
            }
        }
    }
}

pub fn conservation_residual(p: &[f64]) -> f64 {
    (p.iter().sum::<f64>() - 1.0).abs()
}

pub fn check_probability(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::Dimension { expected: n, got: p.len() });
    }
    if p.iter().any(|v| !(v.is_finite() && *v >= -1e-12)) || conservation_residual(p) > 1e-9 {
        return Err(Error::Config("probability vector must be non-negative and sum to 1".into()));
    }
    Ok(())
}

/// `dP/dt` for rate matrix `a` (`a[to][from]`).
pub fn generator_apply(a: &[Vec<f64>], p: &[f64], out: &mut [f64]) {
    let n = p.len();
    for i in 0..n {
        let mut d = 0.0;
        for j in 0..n {
            if j != i {
                d += a[i][j] * p[j] - a[j][i] * p[i];
            }
        }
        out[i] = d;
    }
}

fn check_rate_dt(a: &[Vec<f64>], dt: f64) -> Result<()> {
    let n = a.len();
    let max_exit = (0..n).map(|j| (0..n).map(|i| a[i][j]).sum::<f64>()).fold(0.0, f64::max);
    if !(dt > 0.0) || dt * max_exit > MAX_RATE_DT {
        return Err(Error::StepSize(format!(
            "dt = {dt} with max exit rate {max_exit} exceeds dt·rate ≤ {MAX_RATE_DT}"
        )));
    }
    Ok(())
}

/// One RK4 step of the master equation with a fixed rate matrix.
pub fn rk4_linear(a: &[Vec<f64>], p: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_rate_dt(a, dt)?;
    let n = p.len();
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];
    generator_apply(a, p, &mut k[0]);
    for (stage, frac) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
        for i in 0..n {
            tmp[i] = p[i] + frac * dt * k[stage - 1][i];
        }
        let (_, rest) = k.split_at_mut(stage);
        generator_apply(a, &tmp, &mut rest[0]);
    }
    let next: Vec<f64> = (0..n)
        .map(|i| p[i] + dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
        .collect();
    if let Some(v) = next.iter().find(|v| **v < -1e-12) {
        return Err(Error::StepSize(format!("step produced a negative probability {v}")));
    }
    Ok(next)
}

pub fn master_step(p: &[f64], x: &[f64], spec: &PmmSpec, dt: f64) -> Result<Vec<f64>> {
    if p.len() != spec.n_states {
        return Err(Error::Dimension { expected: spec.n_states, got: p.len() });
    }
    rk4_linear(&spec.rate_matrix(x), p, dt)
}

/// Piecewise-constant input: `x(t) = segments[k].1` for
/// `segments[k].0 ≤ t < segments[k+1].0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, Vec<f64>)>", into = "Vec<(f64, Vec<f64>)>")]
pub struct PiecewiseInput {
    segments: Vec<(f64, Vec<f64>)>,
}

impl TryFrom<Vec<(f64, Vec<f64>)>> for PiecewiseInput {
    type Error = Error;

    fn try_from(segments: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        PiecewiseInput::new(segments)
    }
}

impl From<PiecewiseInput> for Vec<(f64, Vec<f64>)> {
    fn from(p: PiecewiseInput) -> Self {
        p.segments
    }
}

impl PiecewiseInput {
    pub fn new(segments: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        if segments.first().is_none_or(|s| s.0 != 0.0) {
            return Err(Error::Config("input signal must start with a segment at t = 0".into()));
        }
        if segments.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::Config("input switch times must increase".into()));
        }
        Ok(PiecewiseInput { segments })
    }

    pub fn constant(x: Vec<f64>) -> Self {
        PiecewiseInput { segments: vec![(0.0, x)] }
    }

    pub fn at(&self, t: f64) -> &[f64] {
        let k = self.segments.partition_point(|s| s.0 <= t).saturating_sub(1);
        &self.segments[k].1
    }

    /// The first switch time strictly after `t`, if any.
    pub fn next_switch(&self, t: f64) -> Option<f64> {
        self.segments.iter().map(|s| s.0).find(|&s| s > t)
    }
}

/// Integrates the master equation to `t_end` with step `dt`, recording
/// `(t, P)` every `record_every` steps (and at the start).
pub fn master_run(
    spec: &PmmSpec,
    input: &PiecewiseInput,
    p0: &[f64],
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Vec<(f64, Vec<f64>)>> {
    check_probability(p0, spec.n_states)?;
    let steps = (t_end / dt).round() as usize;
    let every = record_every.max(1);
    let mut p = p0.to_vec();
    let mut out = vec![(0.0, p.clone())];
    for k in 0..steps {
        let t = k as f64 * dt;
        p = master_step(&p, input.at(t), spec, dt)?;
        if (k + 1) % every == 0 {
            out.push(((k + 1) as f64 * dt, p.clone()));
        }
    }
    Ok(out)
}

/// Samples one molecule's trajectory exactly. Returns `(time, state)` at
/// the start and after every jump.
pub fn sample_path(spec: &PmmSpec, input: &PiecewiseInput, s0: usize, t_end: f64, seed: u64) -> Result<Vec<(f64, usize)>> {
    if s0 >= spec.n_states {
        return Err(Error::Config(format!("initial state {s0} does not exist")));
    }
    let mut rng = seeded(seed);
    let mut path = vec![(0.0, s0)];
    let (mut t, mut s) = (0.0, s0);
    while t < t_end {
        let horizon = input.next_switch(t).map_or(t_end, |n| n.min(t_end));
        let x = input.at(t);
        let a = spec.rate_matrix(x);
        let total: f64 = (0..spec.n_states).map(|i| a[i][s]).sum();
        if total <= 0.0 {
            t = horizon;
            continue;
        }
        let dwell = Exp::new(total).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng);
        if t + dwell >= horizon {
            t = horizon;
            continue;
        }
        t += dwell;
        let mut pick = rng.random::<f64>() * total;
        let mut next = s;
        for (i, row) in a.iter().enumerate() {
            if i == s || row[s] <= 0.0 {
                continue;
            }
            next = i;
            if pick < row[s] {
                break;
            }
            pick -= row[s];
        }
        s = next;
        path.push((t, s));
    }
    Ok(path)
}

/// State of a sampled path at time `t`.
pub fn state_at(path: &[(f64, usize)], t: f64) -> usize {
    let k = path.partition_point(|p| p.0 <= t).saturating_sub(1);
    path[k].1
}

/// Reversal potential `(RT/zF) ln(C_out/C_in)` in volts.
pub fn nernst(params: &ChannelParams) -> f64 {
    GAS_CONSTANT * params.temperature / (params.z * FARADAY) * (params.c_out / params.c_in).ln()
}

/// Below this `|zV′|` the current is evaluated by its series expansion.
pub const GHK_SERIES_CUTOFF: f64 = 1e-6;

/// Goldman-Hodgkin-Katz current of state `state` at potential `v` (volts);
/// positive is outward.
pub fn ghk_current(v: f64, state: usize, params: &ChannelParams) -> f64 {
    let p = params.permeabilities.get(state).copied().unwrap_or(0.0);
    if p == 0.0 || params.z == 0.0 {
        return 0.0;
    }
    let scale = p * params.z * FARADAY;
    let u = params.reduced(v);
    let (ci, co) = (params.c_in, params.c_out);
    if u.abs() < GHK_SERIES_CUTOFF {
        return scale * ((ci - co) + u * (ci + co) / 2.0 + u * u * (ci - co) / 12.0);
    }
    // C_in − C_out e^{−u} = −C_in·expm1(u_rev − u), exact zero at reversal.
    let u_rev = params.reduced(nernst(params));
    scale * u * ci * (u_rev - u).exp_m1() / (-u).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    /// State 3 conducts, state 4 is inactive.
    Sodium,
    /// States 3 and 4 conduct.
    Potassium,
}

/// A voltage sigmoid `amplitude / (1 + exp(-(V - midpoint)/slope))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigmoid {
    pub amplitude: f64,
    pub midpoint: f64,
    pub slope: f64,
}

impl Sigmoid {
    fn rate(self) -> RateFn {
        RateFn::Sigmoid { amplitude: self.amplitude, midpoint: self.midpoint, slope: self.slope, input: 0 }
    }
}

/// Shape parameters of the five-state ring `0→1→2→3→4→0`. Voltages in
/// volts, rates per millisecond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel5Params {
    pub kind: ChannelKind,
    /// Sigmoids for `0→1`, `1→2`, `2→3`.
    pub activation: [Sigmoid; 3],
    /// Constant rate `3→4`.
    pub a43: f64,
    /// Constant rate `4→0`.
    pub a04: f64,
    /// Permeability of conducting states.
    pub p_open: f64,
    /// Permeability of the other states.
    #[serde(default)]
    pub p_closed: f64,
    pub z: f64,
    pub temperature: f64,
    pub c_in: f64,
    pub c_out: f64,
}

impl Channel5Params {
    /// Sodium-like defaults. These numbers are illustrative choices, not
    /// measured constants; they rest above 95% in state 0 at −70 mV.
    pub fn sodium() -> Self {
        Channel5Params {
            kind: ChannelKind::Sodium,
            activation: [
                Sigmoid { amplitude: 20.0, midpoint: -0.040, slope: 0.003 },
                Sigmoid { amplitude: 20.0, midpoint: -0.060, slope: 0.004 },
                Sigmoid { amplitude: 20.0, midpoint: -0.060, slope: 0.004 },
            ],
            a43: 2.0,
            a04: 0.2,
            p_open: 1e-6,
            p_closed: 0.0,
            z: 1.0,
            temperature: 300.0,
            c_in: 0.015,
            c_out: 0.145,
        }
    }

    /// Potassium-like defaults; slower activation, two conducting states.
    pub fn potassium() -> Self {
        Channel5Params {
            kind: ChannelKind::Potassium,
            activation: [
                Sigmoid { amplitude: 1.0, midpoint: -0.035, slope: 0.004 },
                Sigmoid { amplitude: 2.0, midpoint: -0.060, slope: 0.004 },
                Sigmoid { amplitude: 2.0, midpoint: -0.060, slope: 0.004 },
            ],
            a43: 0.5,
            a04: 0.5,
            p_open: 1e-6,
            p_closed: 0.0,
            z: 1.0,
            temperature: 300.0,
            c_in: 0.14,
            c_out: 0.005,
        }
    }
}

pub fn channel5_spec(params: &Channel5Params) -> Result<PmmSpec> {
    for s in &params.activation {
        if !(s.amplitude > 0.0) {
            return Err(Error::Config(format!("activation amplitude must be positive, got {}", s.amplitude)));
        }
    }
    if !(params.a43 > 0.0 && params.a04 > 0.0) {
        return Err(Error::Config("constant rates a43 and a04 must be positive".into()));
    }
    let mut rates: Vec<RateEntry> = params
        .activation
        .iter()
        .enumerate()
        .map(|(j, s)| RateEntry { from: j, to: j + 1, rate: s.rate() })
        .collect();
    rates.push(RateEntry { from: 3, to: 4, rate: RateFn::Const { value: params.a43 } });
    rates.push(RateEntry { from: 4, to: 0, rate: RateFn::Const { value: params.a04 } });
    let conducting: &[usize] = match params.kind {
        ChannelKind::Sodium => &[3],
        ChannelKind::Potassium => &[3, 4],
    };
    let permeabilities = (0..5)
        .map(|s| if conducting.contains(&s) { params.p_open } else { params.p_closed })
        .collect();
    let channel = ChannelParams {
        permeabilities,
        z: params.z,
        temperature: params.temperature,
        c_in: params.c_in,
        c_out: params.c_out,
    };
    PmmSpec::new(5, rates, Omega::Ghk { channel, input: 0 })
}

/// Stationary distribution by integrating the master equation until it
/// stops changing.
pub fn stationary(spec: &PmmSpec, x: &[f64]) -> Result<Vec<f64>> {
    let a = spec.rate_matrix(x);
    let n = spec.n_states;
    let max_exit = spec.exit_rates(x).into_iter().fold(0.0, f64::max);
    if max_exit == 0.0 {
        return Err(Error::Singular("all rates vanish; every state is absorbing".into()));
    }
    let dt = MAX_RATE_DT / max_exit;
    let mut p = vec![1.0 / n as f64; n];
    for _ in 0..10_000_000 {
        let next = rk4_linear(&a, &p, dt)?;
        let change = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        p = next;
        if change < 1e-15 {
            return Ok(p);
        }
    }
    Err(Error::NonConvergence { limit: 1e7 * dt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_state(a10: f64, a01: f64) -> PmmSpec {
        PmmSpec::new(
            2,
            vec![
                RateEntry { from: 0, to: 1, rate: RateFn::Const { value: a10 } },
                RateEntry { from: 1, to: 0, rate: RateFn::Const { value: a01 } },
            ],
            Omega::Table { values: vec![vec![0.0], vec![1.0]] },
        )
        .unwrap()
    }

    fn pin_channel() -> ChannelParams {
        ChannelParams { permeabilities: vec![1e-6], z: 1.0, temperature: 300.0, c_in: 0.14, c_out: 0.005 }
    }

    #[test]
    fn zero_rates_leave_p_unchanged() {
        let spec = two_state(0.0, 0.0);
        assert_eq!(master_step(&[0.3, 0.7], &[], &spec, 0.1).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn two_state_balance() {
        let spec = two_state(2.0, 3.0);
        let p = stationary(&spec, &[]).unwrap();
        assert!((p[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn symmetric_transient() {
        let spec = two_state(1.0, 1.0);
        let input = PiecewiseInput::constant(vec![]);
        let run = master_run(&spec, &input, &[1.0, 0.0], 2.0, 1e-3, 500).unwrap();
        for (t, p) in run {
            let exact = 0.5 * (1.0 + (-2.0 * t).exp());
            assert!((p[0] - exact).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn step_size_guard() {
        let spec = two_state(10.0, 1.0);
        assert!(matches!(master_step(&[1.0, 0.0], &[], &spec, 0.02), Err(Error::StepSize(_))));
    }

    #[test]
    fn residual_reports_defect() {
        assert_eq!(conservation_residual(&[0.5, 0.5]), 0.0);
        assert!((conservation_residual(&[0.5, 0.5 + 1e-6]) - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn absorbing_path_stays_put() {
        let spec = two_state(0.0, 0.0);
        let path = sample_path(&spec, &PiecewiseInput::constant(vec![]), 1, 10.0, 3).unwrap();
        assert_eq!(path, vec![(0.0, 1)]);
    }

    #[test]
    fn input_switch_changes_rates() {
        let spec = PmmSpec::new(
            2,
            vec![RateEntry { from: 0, to: 1, rate: RateFn::Sigmoid { amplitude: 50.0, midpoint: 0.5, slope: 0.01, input: 0 } }],
            Omega::Table { values: vec![vec![0.0], vec![1.0]] },
        )
        .unwrap();
        let input = PiecewiseInput::new(vec![(0.0, vec![0.0]), (5.0, vec![1.0])]).unwrap();
        let path = sample_path(&spec, &input, 0, 10.0, 11).unwrap();
        assert_eq!(path.len(), 2);
        assert!(path[1].0 > 5.0 && path[1].0 < 6.0);
    }

    #[test]
    fn ghk_regression_pin() {
        let i = ghk_current(0.05, 0, &pin_channel());
        assert!((i - 0.030_382_110_744_807_292_6).abs() < 1e-14 * 0.03);
    }

    #[test]
    fn ghk_zero_at_reversal() {
        let c = pin_channel();
        assert_eq!(ghk_current(nernst(&c), 0, &c), 0.0);
        assert!((nernst(&c) + 0.086_144_690_869_161_88).abs() < 1e-15);
    }

    #[test]
    fn ghk_limit_at_zero() {
        let c = pin_channel();
        let limit = 1e-6 * FARADAY * (0.14 - 0.005);
        assert!((ghk_current(0.0, 0, &c) - limit).abs() <= 1e-9 * limit);
        for v in [1e-9, -1e-9] {
            let i = ghk_current(v, 0, &c);
            assert!((i - ghk_current(0.0, 0, &c)).abs() < 1e-6 * (ghk_current(0.0, 0, &c) + 1.0).abs());
        }
    }

    #[test]
    fn ghk_series_joins_closed_form() {
        let c = pin_channel();
        let v_cut = GHK_SERIES_CUTOFF * GAS_CONSTANT * 300.0 / FARADAY;
        let below = ghk_current(v_cut * 0.999_999, 0, &c);
        let above = ghk_current(v_cut * 1.000_001, 0, &c);
        assert!((below - above).abs() < 1e-9 * below.abs());
    }

    #[test]
    fn channel_rests_in_state_zero() {
        for params in [Channel5Params::sodium(), Channel5Params::potassium()] {
            let spec = channel5_spec(&params).unwrap();
            let p = stationary(&spec, &[-0.070]).unwrap();
            assert!(p[0] > 0.95, "{:?}: {p:?}", params.kind);
        }
    }

    #[test]
    fn channel_sigmoid_limits() {
        let spec = channel5_spec(&Channel5Params::sodium()).unwrap();
        let low = spec.rate_matrix(&[-10.0]);
        let high = spec.rate_matrix(&[10.0]);
        assert!(low[1][0] < 1e-100 && low[2][1] < 1e-100 && low[3][2] < 1e-100);
        assert!((high[1][0] - 20.0).abs() < 1e-12);
        assert_eq!(low[4][3], 2.0);
        assert_eq!(low[0][4], 0.2);
    }

    #[test]
    fn channel_rejects_bad_amplitude() {
        let mut p = Channel5Params::sodium();
        p.activation[1].amplitude = 0.0;
        assert!(matches!(channel5_spec(&p), Err(Error::Config(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = channel5_spec(&Channel5Params::potassium()).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"kind\":\"sigmoid\""));
        let back: PmmSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn bad_rate_entry_is_rejected() {
        let err = PmmSpec::new(
            2,
            vec![RateEntry { from: 0, to: 2, rate: RateFn::Const { value: 1.0 } }],
            Omega::Table { values: vec![vec![0.0], vec![1.0]] },
        )
        .unwrap_err();
        assert!(err.is_validation());
    }

    proptest! {
        #[test]
        fn sigmoid_rate_is_monotone(amp in 0.1f64..10.0, mid in -0.1f64..0.1, slope in 0.001f64..0.02, v in -0.2f64..0.2, dv in 0.0f64..0.05) {
            let r = RateFn::Sigmoid { amplitude: amp, midpoint: mid, slope, input: 0 };
            prop_assert!(r.eval(&[v + dv]) >= r.eval(&[v]));
        }

        #[test]
        fn master_step_conserves(a in 0.0f64..5.0, b in 0.0f64..5.0, p0 in 0.0f64..1.0) {
            let spec = two_state(a, b);
            let p = master_step(&[p0, 1.0 - p0], &[], &spec, 0.01).unwrap();
            prop_assert!(conservation_residual(&p) < 1e-12);
        }

        #[test]
        fn current_sign_flips_at_reversal(dv in 1e-4f64..0.1, ci in 0.001f64..0.5, co in 0.001f64..0.5) {
            let c = ChannelParams { permeabilities: vec![1e-6], z: 1.0, temperature: 300.0, c_in: ci, c_out: co };
            let e = nernst(&c);
            prop_assert!(ghk_current(e + dv, 0, &c) > 0.0);
            prop_assert!(ghk_current(e - dv, 0, &c) < 0.0);
        }
    }
}
