//! The linearized delay model dx/dt = -J1 x(t - tau), integrated with the
//! same RK4 + Hermite-history scheme as the nonlinear plant.

use nalgebra::{DMatrix, DVector};

use super::history::History;
use crate::error::{Error, Result};
use crate::plant::SmallSignalModel;

#[derive(Debug, Clone)]
pub struct LinearDdeTrace {
    pub t: Vec<f64>,
    /// Euclidean norm of the deviation at each recorded time.
    pub norm: Vec<f64>,
    pub final_state: Vec<f64>,
}

impl LinearDdeTrace {
    fn peak(&self, from: f64, to: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.norm)
            .filter(|(t, _)| **t >= from && **t <= to)
            .map(|(_, n)| *n)
            .fold(0.0, f64::max)
    }

    /// Peak norm over the final quarter of the run divided by the peak over
    /// the second quarter; below 1 means the deviation decays.
    pub fn growth_ratio(&self) -> f64 {
        let end = self.t.last().copied().unwrap_or(0.0);
        self.peak(0.75 * end, end) / self.peak(0.25 * end, 0.5 * end)
    }

    pub fn decays(&self) -> bool {
        self.growth_ratio() < 1.0
    }
}

pub fn linear_dde_run(model: &SmallSignalModel, tau: f64, x0: &[f64], t_end: f64, dt: f64) -> Result<LinearDdeTrace> {
    linear_dde_run_matrix(&model.j1, tau, x0, t_end, dt)
}

/// Same as [`linear_dde_run`] for an arbitrary square J1.
pub fn linear_dde_run_matrix(j1: &DMatrix<f64>, tau: f64, x0: &[f64], t_end: f64, dt: f64) -> Result<LinearDdeTrace> {
    let n = j1.nrows();
    if j1.ncols() != n {
        return Err(Error::InvalidInput("J1 must be square".into()));
    }
    if x0.len() != n {
        return Err(Error::InvalidInput(format!("initial deviation has {} entries, expected {n}", x0.len())));
    }
    if !(dt > 0.0 && t_end >= 0.0 && tau >= 0.0) {
        return Err(Error::InvalidInput("dt must be positive, t_end and tau nonnegative".into()));
    }
    if tau > 0.0 && dt > tau / 10.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!("dt = {dt} exceeds tau/10 = {}", tau / 10.0)));
    }
    let a: DMatrix<f64> = -j1;
    let steps = (t_end / dt).round() as usize;
    let record_every = (steps / 20_000).max(1);
    let mut history = History::new(x0.to_vec(), tau + 4.0 * dt);

    let rhs = |history: &History, t: f64, x: &DVector<f64>| -> DVector<f64> {
        if tau > 0.0 {
            let mut lag = vec![0.0; n];
            history.eval(t - tau, &mut lag);
            &a * DVector::from_vec(lag)
        } else {
            &a * x
        }
    };

    let mut x = DVector::from_column_slice(x0);
    let mut t = 0.0;
    let mut k1 = rhs(&history, t, &x);
    history.push(t, x.iter().copied().collect(), k1.iter().copied().collect());
    let mut out = LinearDdeTrace {
        t: vec![0.0],
        norm: vec![x.norm()],
        final_state: Vec::new(),
    };
    for step in 1..=steps {
        let k2 = rhs(&history, t + 0.5 * dt, &(&x + 0.5 * dt * &k1));
        let k3 = rhs(&history, t + 0.5 * dt, &(&x + 0.5 * dt * &k2));
        let k4 = rhs(&history, t + dt, &(&x + dt * &k3));
        x += dt / 6.0 * (&k1 + 2.0 * &k2 + 2.0 * &k3 + &k4);
        t = step as f64 * dt;
        k1 = rhs(&history, t, &x);
        history.push(t, x.iter().copied().collect(), k1.iter().copied().collect());
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalFailure(format!("linear delay model overflowed at t = {t}")));
        }
        if step % record_every == 0 || step == steps {
            out.t.push(t);
            out.norm.push(x.norm());
        }
    }
    out.final_state = x.iter().copied().collect();
    Ok(out)
}
