//! Delay-aware time-domain simulation of the droop + consensus plant.
//!
//! States are the integrator outputs di (current sharing) and du (voltage
//! recovery). Currents and bus voltage are algebraic: the constant-power load
//! closes them through the bus quadratic at every stage. Integration is
//! fixed-step RK4; delayed signals come from a Hermite-interpolated history.

mod export;
mod history;
mod linear;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{equilibrium, solve_bus, MicrogridConfig};

pub use export::{write_event_log, write_summary, write_trace_csv, TraceSummary};
pub use history::{hermite, History};
pub use linear::{linear_dde_run, linear_dde_run_matrix, LinearDdeTrace};

/// Default relative tolerance for the regulation targets.
pub const CONVERGENCE_TOL: f64 = 1e-3;

/// Which measured signals pass through the communication delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayPlacement {
    /// Every signal feeding the integrators, including the DG's own current
    /// and the sampled bus voltage.
    #[default]
    Uniform,
    /// Only currents received from neighbours.
    NeighborsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Action {
    EnableDistributedControl,
    /// Back to droop only: corrections are cleared and integrators stop.
    DisableDistributedControl,
    SetLoad { power: f64 },
    /// Symmetric weight a_ij = a_ji = w (0-based indices).
    SetLink { i: usize, j: usize, w: f64 },
    SetVoltageWeight { i: usize, w: f64 },
    SetDelay { tau: f64 },
    /// Every a_ij and every g_i set to zero.
    FailAllLinks,
}

impl Action {
    pub fn describe(&self) -> String {
        match self {
            Action::EnableDistributedControl => "distributed control enabled".into(),
            Action::DisableDistributedControl => "distributed control disabled (droop only)".into(),
            Action::SetLoad { power } => format!("load set to {power} W"),
            Action::SetLink { i, j, w } => format!("link {}-{} weight set to {w}", i + 1, j + 1),
            Action::SetVoltageWeight { i, w } => format!("g_{} set to {w}", i + 1),
            Action::SetDelay { tau } => format!("delay set to {tau} s"),
            Action::FailAllLinks => "all communication links failed".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialState {
    /// Corrections at zero: the droop operating point.
    Droop,
    /// Regulated equilibrium with `perturbation` (V) added to di.
    Equilibrium { perturbation: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: MicrogridConfig,
    pub t_end: f64,
    pub dt: f64,
    /// Record every `decimation`-th step (the final state is always kept).
    pub decimation: usize,
    pub events: Vec<Event>,
    pub initial: InitialState,
    /// Whether the consensus layer runs from t = 0.
    pub distributed: bool,
    pub delay_placement: DelayPlacement,
    /// A DG left with no neighbours and no bus-voltage feedback drops its
    /// corrections and falls back to droop.
    pub isolated_revert_to_droop: bool,
    pub convergence_tol: f64,
}

impl Scenario {
    pub fn new(config: MicrogridConfig, t_end: f64, dt: f64) -> Self {
        Scenario {
            config,
            t_end,
            dt,
            decimation: 1,
            events: Vec::new(),
            initial: InitialState::Droop,
            distributed: true,
            delay_placement: DelayPlacement::Uniform,
            isolated_revert_to_droop: true,
            convergence_tol: CONVERGENCE_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate_physical()?;
        let n = self.config.n();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::InvalidConfig("t_end must be nonnegative".into()));
        }
        if self.decimation == 0 {
            return Err(Error::InvalidConfig("decimation must be at least 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig("convergence tolerance must be positive".into()));
        }
        let check_tau = |tau: f64| -> Result<()> {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(Error::InvalidConfig(format!("delay {tau} must be nonnegative")));
            }
            if tau > 0.0 && self.dt > tau / 10.0 * (1.0 + 1e-12) {
                return Err(Error::InvalidConfig(format!(
                    "dt = {} is too coarse for delay {tau} (needs dt <= tau/10)",
                    self.dt
                )));
            }
            Ok(())
        };
        check_tau(self.config.tau)?;
        if let InitialState::Equilibrium { perturbation } = &self.initial {
            if perturbation.len() != n || perturbation.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidConfig(format!("perturbation must have {n} finite entries")));
            }
        }
        let mut last = f64::NEG_INFINITY;
        for ev in &self.events {
            if !ev.time.is_finite() || ev.time < 0.0 {
                return Err(Error::InvalidConfig(format!("event time {} is invalid", ev.time)));
            }
            if ev.time < last {
                return Err(Error::InvalidConfig("events must be sorted by time".into()));
            }
            last = ev.time;
            match ev.action {
                Action::SetLoad { power } if !(power.is_finite() && power >= 0.0) => {
                    return Err(Error::InvalidConfig(format!("load {power} must be nonnegative")));
                }
                Action::SetLink { i, j, w } => {
                    if i >= n || j >= n || i == j {
                        return Err(Error::InvalidConfig(format!("link {}-{} is not valid", i + 1, j + 1)));
                    }
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(Error::InvalidConfig(format!("link weight {w} must be nonnegative")));
                    }
                }
                Action::SetVoltageWeight { i, w } => {
                    if i >= n || !(w.is_finite() && w >= 0.0) {
                        return Err(Error::InvalidConfig(format!("voltage weight g_{} <- {w} is not valid", i + 1)));
                    }
                }
                Action::SetDelay { tau } => check_tau(tau)?,
                _ => {}
            }
        }
        Ok(())
    }

    /// Longest delay that can be active during the run.
    fn delay_window(&self) -> f64 {
        self.events
            .iter()
            .filter_map(|e| match e.action {
                Action::SetDelay { tau } => Some(tau),
                _ => None,
            })
            .fold(self.config.tau, f64::max)
    }
}

/// Integrator states plus the algebraic quantities they determine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    pub t: f64,
    pub di: Vec<f64>,
    pub du: Vec<f64>,
    pub currents: Vec<f64>,
    pub voltages: Vec<f64>,
    pub bus_voltage: f64,
}

impl SimState {
    /// Relative bus-voltage error |u_L - v_ref| / v_ref.
    pub fn voltage_error(&self, v_ref: f64) -> f64 {
        (self.bus_voltage - v_ref).abs() / v_ref
    }

    /// Largest relative deviation of i_j / k_j from its mean.
    pub fn sharing_error(&self, k: &[f64]) -> f64 {
        sharing_error(&self.currents, k)
    }
}

pub fn sharing_error(currents: &[f64], k: &[f64]) -> f64 {
    let ratios: Vec<f64> = currents.iter().zip(k).map(|(i, k)| i / k).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    ratios.iter().map(|r| (r - mean).abs()).fold(0.0, f64::max) / mean.abs()
}

/// Measured signals as seen by the controllers (after the delay).
#[derive(Debug, Clone, Copy)]
pub struct DelayedView<'a> {
    pub currents: &'a [f64],
    pub bus_voltage: f64,
}

/// Integrator rates (d di/dt, d du/dt) for the control law with the given
/// delay placement. `state` supplies undelayed signals for `NeighborsOnly`.
pub fn derivatives(
    config: &MicrogridConfig,
    state: &SimState,
    delayed: &DelayedView<'_>,
    placement: DelayPlacement,
) -> (Vec<f64>, Vec<f64>) {
    let n = config.n();
    let mut d_di = vec![0.0; n];
    let mut d_du = vec![0.0; n];
    let w = config.comm.weights();
    let (own, bus) = match placement {
        DelayPlacement::Uniform => (delayed.currents, delayed.bus_voltage),
        DelayPlacement::NeighborsOnly => (state.currents.as_slice(), state.bus_voltage),
    };
    for i in 0..n {
        let mine = own[i] / config.k[i];
        let mut acc = 0.0;
        for j in 0..n {
            let a = w[(i, j)];
            if a != 0.0 {
                acc += a * (mine - delayed.currents[j] / config.k[j]);
            }
        }
        d_di[i] = -config.b1 * acc / config.k[i];
        d_du[i] = config.b2 * (config.v_ref - bus) * config.g[i];
    }
    (d_di, d_du)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// Ran to t_end and meets the regulation targets.
    Converged,
    /// Ran to t_end, bounded, but off the regulation targets.
    RunningStable,
    /// u_L left (0, 2 v_ref) or a state became non-finite.
    Diverged,
    /// The bus quadratic lost its real root.
    Infeasible,
}

impl Outcome {
    pub fn is_stable(&self) -> bool {
        matches!(self, Outcome::Converged | Outcome::RunningStable)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EventRecord {
    pub scheduled: f64,
    pub applied_at: f64,
    pub description: String,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationTrace {
    pub v_ref: f64,
    pub k: Vec<f64>,
    pub samples: Vec<SimState>,
    pub events: Vec<EventRecord>,
    pub outcome: Outcome,
    /// Time of the last accepted state.
    pub stop_time: f64,
    pub stop_reason: Option<String>,
    /// max |u_L sum(i) - P| / P over accepted steps.
    pub max_power_residual: f64,
}

impl SimulationTrace {
    pub fn last(&self) -> Option<&SimState> {
        self.samples.last()
    }

    pub fn n(&self) -> usize {
        self.k.len()
    }

    /// Samples with t in [t0, t1].
    pub fn window(&self, t0: f64, t1: f64) -> impl Iterator<Item = &SimState> {
        self.samples.iter().filter(move |s| s.t >= t0 && s.t <= t1)
    }

    /// Largest sharing and voltage errors over [t0, t1].
    pub fn max_errors(&self, t0: f64, t1: f64) -> (f64, f64) {
        self.window(t0, t1).fold((0.0f64, 0.0f64), |(s, v), st| {
            (s.max(st.sharing_error(&self.k)), v.max(st.voltage_error(self.v_ref)))
        })
    }

    pub fn sample_at(&self, t: f64) -> Option<&SimState> {
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}

enum Stop {
    Diverged(String),
    Infeasible(String),
}

struct Runner {
    cfg: MicrogridConfig,
    rb: Vec<f64>,
    distributed: bool,
    placement: DelayPlacement,
    revert: bool,
    history: History,
}

/// Algebraic closure at integrator state x = (di, du).
struct Closure {
    currents: Vec<f64>,
    bus_voltage: f64,
}

impl Runner {
    fn n(&self) -> usize {
        self.cfg.n()
    }

    fn close(&self, x: &[f64]) -> std::result::Result<Closure, Stop> {
        let n = self.n();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Stop::Diverged("non-finite integrator state".into()));
        }
        let emf: Vec<f64> = (0..n).map(|i| self.cfg.v_ref + x[i] + x[n + i]).collect();
        match solve_bus(&self.rb, self.cfg.load_power, &emf) {
            Ok(sol) => Ok(Closure {
                currents: sol.currents,
                bus_voltage: sol.bus_voltage,
            }),
            Err(e) => Err(Stop::Infeasible(e.to_string())),
        }
    }

    fn state_of(&self, t: f64, x: &[f64], c: &Closure) -> SimState {
        let n = self.n();
        SimState {
            t,
            di: x[..n].to_vec(),
            du: x[n..].to_vec(),
            voltages: c.currents.iter().zip(&self.cfg.r).map(|(i, r)| r * i + c.bus_voltage).collect(),
            currents: c.currents.clone(),
            bus_voltage: c.bus_voltage,
        }
    }

    /// Integrator rates at (t, x); also returns the closure.
    fn field(&self, t: f64, x: &[f64]) -> std::result::Result<(Vec<f64>, Closure), Stop> {
        let n = self.n();
        let c = self.close(x)?;
        if !self.distributed {
            return Ok((vec![0.0; 2 * n], c));
        }
        let state = SimState {
            t,
            di: Vec::new(),
            du: Vec::new(),
            currents: c.currents.clone(),
            voltages: Vec::new(),
            bus_voltage: c.bus_voltage,
        };
        let (d_di, d_du) = if self.cfg.tau > 0.0 {
            let mut lagged = vec![0.0; n + 1];
            self.history.eval(t - self.cfg.tau, &mut lagged);
            let view = DelayedView {
                currents: &lagged[..n],
                bus_voltage: lagged[n],
            };
            derivatives(&self.cfg, &state, &view, self.placement)
        } else {
            let view = DelayedView {
                currents: &c.currents,
                bus_voltage: c.bus_voltage,
            };
            derivatives(&self.cfg, &state, &view, self.placement)
        };
        let mut out = d_di;
        out.extend(d_du);
        Ok((out, c))
    }

    /// Time derivatives of (i, u_L) implied by integrator rates `dx`.
    fn algebraic_rates(&self, c: &Closure, dx: &[f64]) -> Vec<f64> {
        let n = self.n();
        let a: f64 = self.rb.iter().map(|r| 1.0 / r).sum();
        let total: f64 = c.currents.iter().sum();
        let weighted: f64 = (0..n).map(|i| (dx[i] + dx[n + i]) / self.rb[i]).sum();
        let denom = c.bus_voltage * a - total;
        let du_l = if denom.abs() > 0.0 { c.bus_voltage * weighted / denom } else { 0.0 };
        let mut out: Vec<f64> = (0..n).map(|i| (dx[i] + dx[n + i] - du_l) / self.rb[i]).collect();
        out.push(du_l);
        out
    }

    fn apply(&mut self, action: &Action, x: &mut [f64]) {
        let n = self.n();
        match *action {
            Action::EnableDistributedControl => self.distributed = true,
            Action::DisableDistributedControl => {
                self.distributed = false;
                x.iter_mut().for_each(|v| *v = 0.0);
            }
            Action::SetLoad { power } => self.cfg.load_power = power,
            Action::SetLink { i, j, w } => {
                // indices were validated up front
                let _ = self.cfg.comm.set_link(i, j, w);
            }
            Action::SetVoltageWeight { i, w } => self.cfg.g[i] = w,
            Action::SetDelay { tau } => self.cfg.tau = tau,
            Action::FailAllLinks => {
                self.cfg.comm = crate::netgraph::CommGraph::empty(n);
                self.cfg.g.iter_mut().for_each(|g| *g = 0.0);
            }
        }
        if self.revert {
            for i in 0..n {
                if self.cfg.comm.degree(i) == 0.0 && self.cfg.g[i] == 0.0 {
                    x[i] = 0.0;
                    x[n + i] = 0.0;
                }
            }
        }
    }
}

fn check_band(v_ref: f64, bus: f64) -> Option<Stop> {
    if !bus.is_finite() {
        Some(Stop::Diverged("bus voltage is not finite".into()))
    } else if bus <= 0.0 || bus >= 2.0 * v_ref {
        Some(Stop::Diverged(format!("bus voltage {bus:.3} V left (0, {:.0}) V", 2.0 * v_ref)))
    } else {
        None
    }
}

/// Integrates the scenario from t = 0 to t_end.
///
/// Infeasible closures and divergence stop the run early; the partial trace
/// is returned with the corresponding outcome rather than as an error.
pub fn run(scenario: &Scenario) -> Result<SimulationTrace> {
    scenario.validate()?;
    let cfg = scenario.config.clone();
    let n = cfg.n();
    let dt = scenario.dt;
    let steps = (scenario.t_end / dt).round() as usize;

    let mut x = vec![0.0; 2 * n];
    if let InitialState::Equilibrium { perturbation } = &scenario.initial {
        let eq = equilibrium(&cfg)?;
        for (i, s) in eq.correction_totals(&cfg).iter().enumerate() {
            x[i] = s + perturbation[i];
        }
    }

    let mut runner = Runner {
        rb: cfg.branch_resistance(),
        distributed: scenario.distributed,
        placement: scenario.delay_placement,
        revert: scenario.isolated_revert_to_droop,
        history: History::new(vec![0.0; n + 1], scenario.delay_window() + 4.0 * dt),
        cfg,
    };

    let mut trace = SimulationTrace {
        v_ref: runner.cfg.v_ref,
        k: runner.cfg.k.clone(),
        samples: Vec::new(),
        events: Vec::new(),
        outcome: Outcome::Converged,
        stop_time: 0.0,
        stop_reason: None,
        max_power_residual: 0.0,
    };

    let mut next_event = 0;
    let mut apply_due = |runner: &mut Runner, x: &mut [f64], t: f64, trace: &mut SimulationTrace| {
        while next_event < scenario.events.len() && scenario.events[next_event].time <= t + 0.5 * dt {
            let ev = &scenario.events[next_event];
            runner.apply(&ev.action, x);
            trace.events.push(EventRecord {
                scheduled: ev.time,
                applied_at: t,
                description: ev.action.describe(),
                action: ev.action.clone(),
            });
            next_event += 1;
        }
    };

    let finish = |mut trace: SimulationTrace, stop: Stop, t: f64| {
        let (outcome, reason) = match stop {
            Stop::Diverged(r) => (Outcome::Diverged, r),
            Stop::Infeasible(r) => (Outcome::Infeasible, r),
        };
        trace.outcome = outcome;
        trace.stop_reason = Some(format!("t = {t:.6} s: {reason}"));
        trace
    };

    apply_due(&mut runner, &mut x, 0.0, &mut trace);
    // pre-start history: the initial algebraic state, held constant
    let c0 = match runner.close(&x) {
        Ok(c) => c,
        Err(stop) => return Ok(finish(trace, stop, 0.0)),
    };
    let mut prestart = c0.currents.clone();
    prestart.push(c0.bus_voltage);
    runner.history = History::new(prestart, scenario.delay_window() + 4.0 * dt);

    let mut t = 0.0;
    let (mut k1, mut c) = match runner.field(t, &x) {
        Ok(v) => v,
        Err(stop) => return Ok(finish(trace, stop, t)),
    };

    let push_sample = |runner: &mut Runner, t: f64, x: &[f64], c: &Closure, dx: &[f64], trace: &mut SimulationTrace| {
        let mut sample = c.currents.clone();
        sample.push(c.bus_voltage);
        let rates = runner.algebraic_rates(c, dx);
        runner.history.push(t, sample, rates);
        let p = runner.cfg.load_power;
        if p > 0.0 {
            let residual = (c.bus_voltage * c.currents.iter().sum::<f64>() - p).abs() / p;
            trace.max_power_residual = trace.max_power_residual.max(residual);
        }
        trace.stop_time = t;
        runner.state_of(t, x, c)
    };

    let first = push_sample(&mut runner, t, &x, &c, &k1, &mut trace);
    if let Some(stop) = check_band(runner.cfg.v_ref, c.bus_voltage) {
        trace.samples.push(first);
        return Ok(finish(trace, stop, t));
    }
    trace.samples.push(first);

    let mut tmp = vec![0.0; 2 * n];
    for step in 1..=steps {
        let stage = |runner: &Runner, tt: f64, base: &[f64], k: &[f64], h: f64, tmp: &mut Vec<f64>| {
            for ((o, b), d) in tmp.iter_mut().zip(base).zip(k) {
                *o = b + h * d;
            }
            runner.field(tt, tmp).map(|(d, _)| d)
        };
        let result = stage(&runner, t + 0.5 * dt, &x, &k1, 0.5 * dt, &mut tmp).and_then(|k2| {
            let k3 = stage(&runner, t + 0.5 * dt, &x, &k2, 0.5 * dt, &mut tmp)?;
            let k4 = stage(&runner, t + dt, &x, &k3, dt, &mut tmp)?;
            Ok((k2, k3, k4))
        });
        let (k2, k3, k4) = match result {
            Ok(v) => v,
            Err(stop) => return Ok(finish(trace, stop, t)),
        };
        for i in 0..2 * n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t = step as f64 * dt;
        apply_due(&mut runner, &mut x, t, &mut trace);

        (k1, c) = match runner.field(t, &x) {
            Ok(v) => v,
            Err(stop) => return Ok(finish(trace, stop, t)),
        };
        let state = push_sample(&mut runner, t, &x, &c, &k1, &mut trace);
        if let Some(stop) = check_band(runner.cfg.v_ref, c.bus_voltage) {
            trace.samples.push(state);
            return Ok(finish(trace, stop, t));
        }
        if step % scenario.decimation == 0 || step == steps {
            trace.samples.push(state);
        }
    }

    let last = trace.samples.last().expect("at least the initial sample");
    let tol = scenario.convergence_tol;
    trace.outcome = if last.voltage_error(trace.v_ref) <= tol && last.sharing_error(&trace.k) <= tol {
        Outcome::Converged
    } else {
        Outcome::RunningStable
    };
    Ok(trace)
}

#[cfg(test)]
mod tests;
