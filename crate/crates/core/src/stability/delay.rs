//! Uniform-delay margin of dx/dt = -J1 x(t - tau).
//!
//! Each eigenvalue chi = Theta e^{j theta} of J1 contributes the scalar
//! quasi-polynomial z + tau chi e^{-z}, whose zeros all lie in the open left
//! half-plane iff tau Theta + |theta| < pi / 2.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrixkit::C64;

#[derive(Debug, Clone, Serialize)]
pub struct DelayMargin {
    /// Largest delay keeping every nonzero mode stable; 0 if some mode has
    /// Re <= 0, infinite if there are no nonzero modes.
    pub tau_max: f64,
    pub all_nonzero_positive: bool,
    /// Modes within the zero band, excluded from the minimum.
    pub zero_modes: usize,
    /// Index (into the input) of the eigenvalue attaining the minimum.
    pub critical_index: Option<usize>,
}

impl DelayMargin {
    pub fn is_delay_stable(&self, tau: f64) -> bool {
        self.all_nonzero_positive && self.zero_modes == 0 && tau < self.tau_max
    }
}

/// Scalar condition: every zero of z + b e^{j angle} e^{-z} has negative real
/// part iff pi/2 - b > |angle|.
pub fn lemma6_check(b: f64, angle: f64) -> bool {
    FRAC_PI_2 - b > angle.abs()
}

/// Largest delay for a single mode, (pi - 2|theta|) / (2 Theta).
pub fn mode_delay_limit(chi: C64) -> f64 {
    (PI - 2.0 * chi.arg().abs()) / (2.0 * chi.norm())
}

pub fn delay_margin(eigenvalues: &[C64], zero_band: f64) -> Result<DelayMargin> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidInput("empty spectrum".into()));
    }
    let mut zero_modes = 0;
    let mut all_positive = true;
    let mut tau_max = f64::INFINITY;
    let mut critical_index = None;
    for (idx, chi) in eigenvalues.iter().enumerate() {
        if chi.norm() <= zero_band {
            zero_modes += 1;
            continue;
        }
        if chi.re <= 0.0 {
            all_positive = false;
            continue;
        }
        let limit = mode_delay_limit(*chi);
        if limit < tau_max {
            tau_max = limit;
            critical_index = Some(idx);
        }
    }
    if !all_positive {
        tau_max = 0.0;
        critical_index = None;
    }
    Ok(DelayMargin {
        tau_max,
        all_nonzero_positive: all_positive,
        zero_modes,
        critical_index,
    })
}

/// Branch `k` of the Lambert W function, w e^w = x, by Halley iteration.
pub fn lambert_w(x: C64, branch: i32) -> Option<C64> {
    let two_pi_i = C64::new(0.0, 2.0 * PI * branch as f64);
    let branch_point = x + C64::new((-1.0f64).exp(), 0.0);
    let one_plus = x + 1.0;
    let mut w = if branch == 0 && branch_point.norm() < 0.3 {
        let p = (2.0 * std::f64::consts::E * branch_point).sqrt();
        C64::new(-1.0, 0.0) + p - p * p / 3.0
    } else if branch == 0 && x.norm() < 3.0 {
        if one_plus.norm() > 0.3 {
            one_plus.ln()
        } else {
            x
        }
    } else {
        let l1 = x.ln() + two_pi_i;
        l1 - l1.ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.norm() < 1e-300 {
            return None;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if !w.re.is_finite() || !w.im.is_finite() {
            return None;
        }
        if step.norm() <= 1e-15 * w.norm().max(1.0) {
            return Some(w);
        }
    }
    let residual = (w * w.exp() - x).norm();
    (residual <= 1e-10 * x.norm().max(1.0)).then_some(w)
}

/// Rightmost zero of z + a e^{-z}, searched over the central Lambert W
/// branches (z = W_k(-a)).
pub fn dominant_delay_root(a: C64) -> Option<C64> {
    (-3..=3)
        .filter_map(|k| lambert_w(-a, k))
        .filter(|z| (z + a * (-z).exp()).norm() <= 1e-8 * (1.0 + a.norm()))
        .max_by(|p, q| p.re.total_cmp(&q.re))
}
