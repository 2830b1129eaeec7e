//! The three-layer associative network with winner-take-all dynamics.
//!
//! Layer N1 feeds the input vector `x` through gains `gx` into the N2
//! neurons, which obey
//!
//! ```text
//! tau du_i/dt + u_i = s_i + alpha r_i - q,   r_i = max(u_i, 0),
//! q = beta Σ r_i + x_inh,                    s_i = Σ_j gx_ij x_j
//! ```
//!
//! and drive N3 through `y_k = Σ_i gy_ki r_i`. In the regime
//! `1 < alpha < 1 + beta` the network settles to a single active neuron
//! drawn from the maxima of `s`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::afield::AssociativeProgram;
use crate::codes::SymbolVector;
use crate::error::{Error, Result};
use crate::machines::BlackBox;
use crate::rng::{seeded, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ann0Params {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    /// `n × m` input gains.
    pub gx: Vec<Vec<f64>>,
    /// `k × n` output gains.
    pub gy: Vec<Vec<f64>>,
    #[serde(default = "default_noise")]
    pub noise_amp: f64,
}

fn default_noise() -> f64 {
    1e-6
}

impl Ann0Params {
    pub fn new(alpha: f64, beta: f64, tau: f64, gx: Vec<Vec<f64>>, gy: Vec<Vec<f64>>, noise_amp: f64) -> Result<Self> {
        let p = Ann0Params { alpha, beta, tau, gx, gy, noise_amp };
        p.validate()?;
        Ok(p)
    }

    /// Gains that store an associative program: row `i` of the program
    /// becomes input gains `gx[i]` and output column `i`.
    pub fn from_program(prog: &AssociativeProgram, alpha: f64, beta: f64, tau: f64, noise_amp: f64) -> Result<Self> {
        let gx = prog.rows().map(|(x, _)| x.as_reals()).collect();
        let gy = (0..prog.dim_y())
            .map(|k| prog.rows().map(|(_, y)| f64::from(y.components()[k])).collect())
            .collect();
        Self::new(alpha, beta, tau, gx, gy, noise_amp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.gx.is_empty() {
            return Err(Error::Config("network needs at least one N2 neuron".into()));
        }
        let m = self.gx[0].len();
        if self.gx.iter().any(|row| row.len() != m) {
            return Err(Error::Config("gx rows differ in length".into()));
        }
        if self.gy.iter().any(|row| row.len() != self.gx.len()) {
            return Err(Error::Config("gy rows must have one gain per N2 neuron".into()));
        }
        let finite = |rows: &[Vec<f64>]| rows.iter().flatten().all(|v| v.is_finite());
        if !finite(&self.gx) || !finite(&self.gy) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::Config("gains must be finite".into()));
        }
        if !(self.noise_amp >= 0.0) {
            return Err(Error::Config("noise amplitude must be non-negative".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.gx.len()
    }

    pub fn m(&self) -> usize {
        self.gx[0].len()
    }

    pub fn k(&self) -> usize {
        self.gy.len()
    }

    pub fn is_wta_regime(&self) -> bool {
        1.0 < self.alpha && self.alpha < 1.0 + self.beta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ann0State {
    pub u: Vec<f64>,
    pub t: f64,
}

impl Ann0State {
    pub fn rest(n: usize) -> Self {
        Ann0State { u: vec![0.0; n], t: 0.0 }
    }

    pub fn r(&self) -> Vec<f64> {
        self.u.iter().map(|&u| u.max(0.0)).collect()
    }

    pub fn active(&self) -> Vec<usize> {
        self.u.iter().enumerate().filter(|(_, &u)| u > 0.0).map(|(i, _)| i).collect()
    }
}

pub fn synaptic_currents(x: &[f64], params: &Ann0Params) -> Result<Vec<f64>> {
    if x.len() != params.m() {
        return Err(Error::Dimension { expected: params.m(), got: x.len() });
    }
    Ok(params.gx.iter().map(|row| row.iter().zip(x).map(|(g, x)| g * x).sum()).collect())
}

pub fn output_projection(r: &[f64], params: &Ann0Params) -> Result<Vec<f64>> {
    if r.len() != params.n() {
        return Err(Error::Dimension { expected: params.n(), got: r.len() });
    }
    Ok(params.gy.iter().map(|row| row.iter().zip(r).map(|(g, r)| g * r).sum()).collect())
}

/// Inhibitory neuron output `q = beta Σ r + x_inh`.
pub fn inhibition(u: &[f64], beta: f64, x_inh: f64) -> f64 {
    beta * u.iter().map(|&u| u.max(0.0)).sum::<f64>() + x_inh
}

fn derivative(params: &Ann0Params, u: &[f64], s: &[f64], x_inh: f64, out: &mut [f64]) {
    let q = inhibition(u, params.beta, x_inh);
    for i in 0..u.len() {
        let r = u[i].max(0.0);
        out[i] = (s[i] + params.alpha * r - q - u[i]) / params.tau;
    }
}

/// Scratch buffers for the fixed-step RK4 integrator.
#[derive(Debug, Clone)]
struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 { k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] }
    }

    /// Advances `u` by one step and returns the largest deterministic change.
    fn step(&mut self, params: &Ann0Params, u: &mut [f64], s: &[f64], x_inh: f64, dt: f64) -> f64 {
        let n = u.len();
        derivative(params, u, s, x_inh, &mut self.k[0]);
        for (stage, frac) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..n {
                self.tmp[i] = u[i] + frac * dt * self.k[stage - 1][i];
            }
            let (done, rest) = self.k.split_at_mut(stage);
            let _ = done;
            derivative(params, &self.tmp, s, x_inh, &mut rest[0]);
        }
        let mut max_du: f64 = 0.0;
        for i in 0..n {
            let du = dt / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
            u[i] += du;
            max_du = max_du.max(du.abs());
        }
        max_du
    }
}

fn check_dt(params: &Ann0Params, dt: f64) -> Result<()> {
    if !(dt > 0.0) || dt > params.tau / 50.0 {
        return Err(Error::Config(format!(
            "integration step {dt} must be positive and at most tau/50 = {}",
            params.tau / 50.0
        )));
    }
    Ok(())
}

fn add_noise(u: &mut [f64], amp: f64, rng: &mut SimRng) {
    if amp > 0.0 {
        for ui in u {
            *ui += amp * rng.random_range(-1.0..=1.0);
        }
    }
}

fn check_finite(state: &Ann0State) -> Result<()> {
    if state.u.iter().all(|u| u.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { t: state.t, detail: "non-finite membrane potential".into() })
    }
}

/// Integrates `steps` RK4 steps with step-constant `s` and `x_inh`,
/// returning the state after every step. Independent uniform noise of
/// amplitude `noise_amp` is added to each `u_i` after each step.
pub fn integrate(
    params: &Ann0Params,
    state: &mut Ann0State,
    s: &[f64],
    x_inh: f64,
    dt: f64,
    steps: usize,
    rng: &mut SimRng,
) -> Result<Vec<Ann0State>> {
    let mut trajectory = Vec::with_capacity(steps);
    integrate_with(params, state, s, x_inh, dt, steps, rng, |st, _| trajectory.push(st.clone()))?;
    Ok(trajectory)
}

/// Like [`integrate`] but hands each state and its deterministic `max |du|`
/// to `observe` instead of collecting them.
#[allow(clippy::too_many_arguments)]
pub fn integrate_with(
    params: &Ann0Params,
    state: &mut Ann0State,
    s: &[f64],
    x_inh: f64,
    dt: f64,
    steps: usize,
    rng: &mut SimRng,
    mut observe: impl FnMut(&Ann0State, f64),
) -> Result<()> {
    check_dt(params, dt)?;
    if s.len() != params.n() || state.u.len() != params.n() {
        return Err(Error::Dimension { expected: params.n(), got: s.len().min(state.u.len()) });
    }
    let mut rk = Rk4::new(params.n());
    for _ in 0..steps {
        let du = rk.step(params, &mut state.u, s, x_inh, dt);
        add_noise(&mut state.u, params.noise_amp, rng);
        state.t += dt;
        check_finite(state)?;
        observe(state, du);
    }
    Ok(())
}

/// Explicit solution for the neurons of a constant active set.
///
/// `s_active` and `u0_active` hold the currents and initial potentials of
/// the `n1` active neurons; the result is only meaningful while all of them
/// stay above zero.
pub fn closed_form_u(params: &Ann0Params, s_active: &[f64], u0_active: &[f64], x_inh: f64, t: f64) -> Result<Vec<f64>> {
    if s_active.len() != u0_active.len() {
        return Err(Error::Dimension { expected: s_active.len(), got: u0_active.len() });
    }
    let n1 = s_active.len();
    if n1 == 0 {
        return Ok(Vec::new());
    }
    let (alpha, beta) = (params.alpha, params.beta);
    if alpha == 1.0 {
        return Err(Error::Singular("alpha = 1 makes the growth term singular".into()));
    }
    let decay_gain = 1.0 + beta * n1 as f64 - alpha;
    if decay_gain == 0.0 {
        return Err(Error::Singular("1 + beta·n1 - alpha = 0 makes the mean term singular".into()));
    }
    let s_av = s_active.iter().sum::<f64>() / n1 as f64;
    let u_av0 = u0_active.iter().sum::<f64>() / n1 as f64;
    let (a, b) = growth_decay_rates(params, n1);
    let grow = (a * t).exp();
    let decay = (-b * t).exp();
    Ok(s_active
        .iter()
        .zip(u0_active)
        .map(|(&s, &u0)| {
            (s - s_av) / (alpha - 1.0) * (grow - 1.0)
                + (u0 - u_av0) * grow
                + (s_av - x_inh) / decay_gain * (1.0 - decay)
                + u_av0 * decay
        })
        .collect())
}

/// Growth rate `a = (alpha-1)/tau` of deviations from the mean and decay
/// rate `b = (1 + beta·n1 - alpha)/tau` of the mean, for `n1` active neurons.
pub fn growth_decay_rates(params: &Ann0Params, n1: usize) -> (f64, f64) {
    (
        (params.alpha - 1.0) / params.tau,
        (1.0 + params.beta * n1 as f64 - params.alpha) / params.tau,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WtaOutcome {
    pub winner: usize,
    pub settle_time: f64,
}

/// Simulations stop after this many time constants.
pub const WTA_LIMIT_TAUS: f64 = 1000.0;

/// Runs from rest until exactly one neuron stays active with a steady
/// potential for one full `tau`, and returns it.
pub fn run_wta(params: &Ann0Params, s: &[f64], x_inh: f64, seed: u64) -> Result<WtaOutcome> {
    if !params.is_wta_regime() {
        return Err(Error::Config(format!(
            "alpha = {}, beta = {} is outside the winner-take-all regime",
            params.alpha, params.beta
        )));
    }
    if s.len() != params.n() {
        return Err(Error::Dimension { expected: params.n(), got: s.len() });
    }
    let dt = params.tau / 100.0;
    let hold_steps = (params.tau / dt).round() as usize;
    let max_steps = (WTA_LIMIT_TAUS * params.tau / dt).round() as usize;
    let du_tol = 1e-9 * params.tau + params.noise_amp;
    let mut rng = seeded(seed);
    let mut state = Ann0State::rest(params.n());
    let mut rk = Rk4::new(params.n());
    let mut candidate: Option<usize> = None;
    let mut held = 0usize;
    for _ in 0..max_steps {
        let du = rk.step(params, &mut state.u, s, x_inh, dt);
        add_noise(&mut state.u, params.noise_amp, &mut rng);
        state.t += dt;
        check_finite(&state)?;
        let mut active = state.u.iter().enumerate().filter(|(_, &u)| u > 0.0).map(|(i, _)| i);
        let single = match (active.next(), active.next()) {
            (Some(w), None) => Some(w),
            _ => None,
        };
        match single {
            Some(w) if candidate == Some(w) && du < du_tol => held += 1,
            Some(w) => {
                candidate = Some(w);
                held = 0;
            }
            None => {
                candidate = None;
                held = 0;
            }
        }
        if held >= hold_steps {
            return Ok(WtaOutcome { winner: candidate.unwrap_or_default(), settle_time: state.t });
        }
    }
    Err(Error::NonConvergence { limit: WTA_LIMIT_TAUS * params.tau })
}

/// Periodic-inhibition drive that turns the network into a symbolic machine.
///
/// Cycle `ν` lasts `dt_psy`. During the first half the input `x̄(ν)` is
/// applied with inhibition `xinh_input`; the output is sampled at the end of
/// that half. During the second half the input is removed and the reset
/// inhibition is applied, which must switch every neuron off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSchedule {
    pub dt_psy: f64,
    /// Inhibition applied together with the input; plays the role of the
    /// associative field's output threshold.
    #[serde(default)]
    pub xinh_input: f64,
    /// Reset inhibition; defaults to `10 · max(s)` over the whole run.
    #[serde(default)]
    pub xinh_reset: Option<f64>,
    /// Integration step; defaults to `tau / 100`.
    #[serde(default)]
    pub dt: Option<f64>,
}

impl DriveSchedule {
    pub fn new(dt_psy: f64) -> Self {
        DriveSchedule { dt_psy, xinh_input: 0.0, xinh_reset: None, dt: None }
    }

    /// Hard lower bound and soft warning bound on `dt_psy / tau`.
    pub const MIN_RATIO: f64 = 10.0;
    pub const WARN_RATIO: f64 = 20.0;

    fn check(&self, params: &Ann0Params) -> Result<Option<String>> {
        if self.dt_psy < Self::MIN_RATIO * params.tau {
            return Err(Error::Config(format!(
                "psychological step {} must be at least {}·tau",
                self.dt_psy,
                Self::MIN_RATIO
            )));
        }
        Ok((self.dt_psy < Self::WARN_RATIO * params.tau).then(|| {
            format!("psychological step {} is below {}·tau; settling may be incomplete", self.dt_psy, Self::WARN_RATIO)
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveSample {
    /// Raw output vector `y(t_ν + Δt/2)`.
    pub y: Vec<f64>,
    /// `y / Σ r` rounded to symbols, or `None` when nothing is active.
    pub symbol: Option<SymbolVector>,
    pub winner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ann0TraceRow {
    pub t: f64,
    pub u: Vec<f64>,
    pub r: Vec<f64>,
    pub q: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveOutcome {
    pub samples: Vec<DriveSample>,
    pub warnings: Vec<String>,
    pub trace: Vec<Ann0TraceRow>,
}

/// Stateful symbolic drive; one [`SymbolDrive::cycle`] per input symbol.
#[derive(Debug, Clone)]
pub struct SymbolDrive {
    params: Ann0Params,
    schedule: DriveSchedule,
    xinh_reset: f64,
    dt: f64,
    seed: u64,
    rng: SimRng,
    state: Ann0State,
    cycle: usize,
    trace_every: usize,
    trace: Vec<Ann0TraceRow>,
    warnings: Vec<String>,
}

impl SymbolDrive {
    /// `reset_scale` is the largest current the drive must be able to
    /// suppress; the default reset inhibition is ten times that.
    pub fn new(params: Ann0Params, schedule: DriveSchedule, reset_scale: f64, seed: u64) -> Result<Self> {
        params.validate()?;
        let warnings: Vec<String> = schedule.check(&params)?.into_iter().collect();
        let dt = schedule.dt.unwrap_or(params.tau / 100.0);
        check_dt(&params, dt)?;
        let xinh_reset = schedule.xinh_reset.unwrap_or(10.0 * reset_scale.max(1.0));
        let n = params.n();
        Ok(SymbolDrive {
            params,
            schedule,
            xinh_reset,
            dt,
            seed,
            rng: seeded(seed),
            state: Ann0State::rest(n),
            cycle: 0,
            trace_every: 0,
            trace: Vec::new(),
            warnings,
        })
    }

    /// Records a trace row every `every` integration steps (0 disables).
    pub fn with_trace(mut self, every: usize) -> Self {
        self.trace_every = every;
        self
    }

    pub fn state(&self) -> &Ann0State {
        &self.state
    }

    fn half_cycle(&mut self, s: &[f64], x_inh: f64) -> Result<()> {
        let steps = (self.schedule.dt_psy / 2.0 / self.dt).round() as usize;
        let every = self.trace_every;
        let params = &self.params;
        let trace = &mut self.trace;
        let mut count = 0usize;
        integrate_with(params, &mut self.state, s, x_inh, self.dt, steps, &mut self.rng, |st, _| {
            count += 1;
            if every > 0 && count.is_multiple_of(every) {
                let r = st.r();
                let y = output_projection(&r, params).unwrap_or_default();
                trace.push(Ann0TraceRow { t: st.t, q: inhibition(&st.u, params.beta, x_inh), u: st.u.clone(), r, y });
            }
        })
    }

    /// Potentials below this floor are read as noise around rest.
    pub fn activity_floor(&self) -> f64 {
        100.0 * self.params.noise_amp + 1e-12
    }

    pub fn cycle(&mut self, x_bar: &[f64]) -> Result<DriveSample> {
        let s = synaptic_currents(x_bar, &self.params)?;
        self.half_cycle(&s, self.schedule.xinh_input)?;
        let floor = self.activity_floor();
        let r: Vec<f64> = self.state.u.iter().map(|&u| if u > floor { u } else { 0.0 }).collect();
        let active: Vec<usize> = (0..r.len()).filter(|&i| r[i] > 0.0).collect();
        if active.len() > 1 {
            return Err(Error::NonConvergence { limit: self.schedule.dt_psy / 2.0 });
        }
        let y = output_projection(&r, &self.params)?;
        let total: f64 = r.iter().sum();
        let symbol = (total > 0.0).then(|| {
            SymbolVector::new(y.iter().map(|v| (v / total).round().max(0.0) as u32).collect())
        });
        let zero = vec![0.0; self.params.n()];
        self.half_cycle(&zero, self.xinh_reset)?;
        let left = self.state.active().len();
        if left > 0 {
            return Err(Error::ResetFailure { cycle: self.cycle, active: left });
        }
        self.cycle += 1;
        Ok(DriveSample { y, symbol, winner: active.first().copied() })
    }

    pub fn finish(self) -> DriveOutcome {
        DriveOutcome { samples: Vec::new(), warnings: self.warnings, trace: self.trace }
    }
}

impl BlackBox for SymbolDrive {
    type Input = SymbolVector;
    type Output = SymbolVector;

    fn reset(&mut self) {
        self.rng = seeded(self.seed);
        self.state = Ann0State::rest(self.params.n());
        self.cycle = 0;
        self.trace.clear();
    }

    fn step(&mut self, x: &SymbolVector) -> Result<SymbolVector> {
        let k = self.params.k();
        Ok(self.cycle(&x.as_reals())?.symbol.unwrap_or_else(|| SymbolVector::null(k)))
    }
}

/// Largest synaptic current any of `inputs` can produce.
pub fn max_current(params: &Ann0Params, inputs: &[Vec<f64>]) -> Result<f64> {
    let mut max: f64 = 0.0;
    for x in inputs {
        for s in synaptic_currents(x, params)? {
            max = max.max(s);
        }
    }
    Ok(max)
}

/// Runs the periodic-inhibition drive over `inputs`, one cycle each.
pub fn drive_as_symbol_machine(
    params: &Ann0Params,
    schedule: &DriveSchedule,
    inputs: &[Vec<f64>],
    seed: u64,
    trace_every: usize,
) -> Result<DriveOutcome> {
    let scale = max_current(params, inputs)?;
    let mut drive = SymbolDrive::new(params.clone(), schedule.clone(), scale, seed)?.with_trace(trace_every);
    let samples = inputs.iter().map(|x| drive.cycle(x)).collect::<Result<Vec<_>>>()?;
    let mut out = drive.finish();
    out.samples = samples;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wta(n: usize) -> Ann0Params {
        let gx = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let gy = gx_clone_identity(n);
        Ann0Params::new(1.5, 1.0, 1.0, gx, gy, 1e-6).unwrap()
    }

    fn gx_clone_identity(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    #[test]
    fn identity_gains_pass_input_through() {
        let p = wta(2);
        assert_eq!(synaptic_currents(&[2.0, 3.0], &p).unwrap(), vec![2.0, 3.0]);
        assert_eq!(synaptic_currents(&[0.0, 0.0], &p).unwrap(), vec![0.0, 0.0]);
        assert!(synaptic_currents(&[1.0], &p).is_err());
    }

    #[test]
    fn output_projection_cases() {
        let mut p = wta(3);
        p.gy = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        assert_eq!(output_projection(&[0.0, 1.0, 0.0], &p).unwrap(), vec![2.0, 5.0]);
        assert_eq!(output_projection(&[0.0; 3], &p).unwrap(), vec![0.0, 0.0]);
        let q = wta(3);
        assert_eq!(output_projection(&[0.3, 0.0, 1.2], &q).unwrap(), vec![0.3, 0.0, 1.2]);
    }

    #[test]
    fn zero_input_is_a_fixed_point() {
        let mut p = wta(3);
        p.noise_amp = 0.0;
        let mut st = Ann0State::rest(3);
        let traj = integrate(&p, &mut st, &[0.0; 3], 0.0, 0.01, 500, &mut seeded(0)).unwrap();
        assert!(traj.iter().all(|s| s.u.iter().all(|&u| u == 0.0)));
    }

    #[test]
    fn decoupled_neurons_relax_as_first_order_lags() {
        let mut p = wta(2);
        p.alpha = 0.0;
        p.beta = 0.0;
        p.noise_amp = 0.0;
        let mut st = Ann0State::rest(2);
        let s = [0.8, 0.3];
        integrate(&p, &mut st, &s, 0.0, 0.01, 200, &mut seeded(0)).unwrap();
        for (u, s) in st.u.iter().zip(s) {
            let expect = s * (1.0 - (-2.0f64).exp());
            assert!((u - expect).abs() < 1e-9, "{u} vs {expect}");
        }
    }

    #[test]
    fn step_size_guard() {
        let p = wta(2);
        let mut st = Ann0State::rest(2);
        assert!(matches!(integrate(&p, &mut st, &[0.0; 2], 0.0, 0.05, 1, &mut seeded(0)), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let mut p = wta(1);
        p.alpha = 1e308;
        p.noise_amp = 0.0;
        let mut st = Ann0State { u: vec![1.0], t: 0.0 };
        let err = integrate(&p, &mut st, &[1.0], 0.0, 0.01, 100, &mut seeded(0)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn wta_single_winner_at_ten_tau() {
        let p = wta(3);
        let mut st = Ann0State::rest(3);
        integrate(&p, &mut st, &[0.9, 0.5, 0.5], 0.0, 0.01, 1000, &mut seeded(4)).unwrap();
        assert_eq!(st.active(), vec![0]);
    }

    #[test]
    fn closed_form_at_zero_returns_initial_values() {
        let p = wta(3);
        let u0 = [0.4, 0.1, 0.7];
        let u = closed_form_u(&p, &[1.0, 0.5, 0.2], &u0, 0.3, 0.0).unwrap();
        for (a, b) in u.iter().zip(u0) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_two_active_neurons() {
        let p = wta(2);
        let u = closed_form_u(&p, &[1.0, 0.5], &[0.0, 0.0], 0.0, 1.0).unwrap();
        assert!((u[0] - 0.712_795_555_275_849_16).abs() < 1e-12);
        assert!((u[1] - 0.064_074_284_575_721_01).abs() < 1e-12);
    }

    #[test]
    fn integrator_tracks_closed_form() {
        let mut p = wta(2);
        p.noise_amp = 0.0;
        let mut st = Ann0State::rest(2);
        integrate(&p, &mut st, &[1.0, 0.5], 0.0, 0.01, 100, &mut seeded(0)).unwrap();
        let exact = closed_form_u(&p, &[1.0, 0.5], &[0.0, 0.0], 0.0, 1.0).unwrap();
        for (a, b) in st.u.iter().zip(exact) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn growth_rate() {
        let p = wta(2);
        assert_eq!(growth_decay_rates(&p, 2), (0.5, 1.5));
    }

    #[test]
    fn closed_form_singular_alpha() {
        let mut p = wta(2);
        p.alpha = 1.0;
        assert!(matches!(closed_form_u(&p, &[1.0], &[0.0], 0.0, 1.0), Err(Error::Singular(_))));
    }

    #[test]
    fn wta_regime_required() {
        let mut p = wta(2);
        p.alpha = 0.5;
        assert!(run_wta(&p, &[1.0, 0.5], 0.0, 0).is_err());
    }

    #[test]
    fn noiseless_unique_max_wins() {
        let mut p = wta(4);
        p.noise_amp = 0.0;
        let out = run_wta(&p, &[0.2, 0.6, 0.9, 0.1], 0.0, 0).unwrap();
        assert_eq!(out.winner, 2);
        assert!(out.settle_time > 1.0);
    }

    #[test]
    fn noiseless_tie_never_settles() {
        let mut p = wta(2);
        p.noise_amp = 0.0;
        assert!(matches!(run_wta(&p, &[0.7, 0.7], 0.0, 0), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn psychological_step_bounds() {
        let p = wta(2);
        assert!(SymbolDrive::new(p.clone(), DriveSchedule::new(5.0), 1.0, 0).is_err());
        let d = SymbolDrive::new(p.clone(), DriveSchedule::new(15.0), 1.0, 0).unwrap();
        assert_eq!(d.warnings.len(), 1);
        let d = SymbolDrive::new(p, DriveSchedule::new(40.0), 1.0, 0).unwrap();
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn null_input_gives_null_output() {
        let p = wta(2);
        let out = drive_as_symbol_machine(&p, &DriveSchedule::new(40.0), &[vec![0.0, 0.0]], 1, 0).unwrap();
        assert_eq!(out.samples[0].symbol, None);
    }

    #[test]
    fn weak_reset_is_detected() {
        let p = wta(2);
        let mut sched = DriveSchedule::new(40.0);
        sched.xinh_reset = Some(0.0);
        let err = drive_as_symbol_machine(&p, &sched, &[vec![1.0, 0.0]], 1, 0).unwrap_err();
        assert!(matches!(err, Error::ResetFailure { cycle: 0, active: 1 }));
    }

    #[test]
    fn trace_rows_are_recorded() {
        let p = wta(2);
        let out = drive_as_symbol_machine(&p, &DriveSchedule::new(20.0), &[vec![1.0, 0.0]], 1, 100).unwrap();
        assert_eq!(out.trace.len(), 20);
        assert!(out.trace.windows(2).all(|w| w[0].t < w[1].t));
    }
}
