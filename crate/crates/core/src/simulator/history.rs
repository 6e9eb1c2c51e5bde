//! Dense history for delayed lookups: samples with exact derivatives at every
//! accepted step, cubic Hermite interpolation in between, and a constant
//! pre-start value before the first sample.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
struct Sample {
    t: f64,
    x: Vec<f64>,
    dx: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct History {
    samples: VecDeque<Sample>,
    prestart: Vec<f64>,
    /// Samples older than `latest - window` are dropped.
    window: f64,
}

impl History {
    pub fn new(prestart: Vec<f64>, window: f64) -> Self {
        History {
            samples: VecDeque::new(),
            prestart,
            window,
        }
    }

    pub fn dim(&self) -> usize {
        self.prestart.len()
    }

    pub fn push(&mut self, t: f64, x: Vec<f64>, dx: Vec<f64>) {
        debug_assert_eq!(x.len(), self.dim());
        // a re-evaluation at the same time (after an event) replaces the sample
        if self.samples.back().is_some_and(|s| s.t >= t) {
            self.samples.pop_back();
        }
        self.samples.push_back(Sample { t, x, dx });
        // keep one sample older than the window as the left interpolation node
        while self.samples.len() > 2 && self.samples[1].t < t - self.window {
            self.samples.pop_front();
        }
    }

    /// Value at `t`, written into `out`. Queries before the first sample
    /// return the pre-start state; queries past the last sample hold it.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let first = match self.samples.front() {
            Some(s) => s,
            None => {
                out.copy_from_slice(&self.prestart);
                return;
            }
        };
        if t < first.t {
            out.copy_from_slice(&self.prestart);
            return;
        }
        let last = self.samples.back().unwrap();
        if t >= last.t {
            out.copy_from_slice(&last.x);
            return;
        }
        // samples are uniformly spaced except around replaced entries, so
        // guess the slot then walk
        let len = self.samples.len();
        let span = last.t - first.t;
        let mut idx = (((t - first.t) / span) * (len - 1) as f64) as usize;
        idx = idx.min(len - 2);
        while idx > 0 && self.samples[idx].t > t {
            idx -= 1;
        }
        while idx + 2 < len && self.samples[idx + 1].t <= t {
            idx += 1;
        }
        let (a, b) = (&self.samples[idx], &self.samples[idx + 1]);
        hermite(a.t, &a.x, &a.dx, b.t, &b.x, &b.dx, t, out);
    }
}

#[allow(clippy::too_many_arguments)]
pub fn hermite(t0: f64, x0: &[f64], d0: &[f64], t1: f64, x1: &[f64], d1: &[f64], t: f64, out: &mut [f64]) {
    let h = t1 - t0;
    if h <= 0.0 {
        out.copy_from_slice(x1);
        return;
    }
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    for k in 0..out.len() {
        out[k] = h00 * x0[k] + h10 * h * d0[k] + h01 * x1[k] + h11 * h * d1[k];
    }
}
