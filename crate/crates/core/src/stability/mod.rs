//! Analytic stability certificates (maximum load, consensus-gain bound, delay
//! margin) together with the direct eigenvalue check they are validated
//! against.

mod delay;
mod diagonalize;
mod gain;

use serde::{Serialize, Serializer};

pub use delay::{delay_margin, dominant_delay_root, lambert_w, lemma6_check, mode_delay_limit, DelayMargin};
pub use diagonalize::{diagonalize_j2, DiagonalizationResult, DEGENERACY_TOL};
pub use gain::{gain_bound, threshold_ratio, EpsilonRule, GainBound};

use crate::error::Result;
use crate::matrixkit::{general_eigenvalues, C64};
use crate::plant::{linearize, MicrogridConfig, SmallSignalModel};

/// Relative zero band (on ||J1||_F) for the eigenvalue oracle.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LoadLimit {
    pub p_sup: f64,
    /// P < p_sup.
    pub satisfied: bool,
}

/// P_sup = v_ref^2 (sum k)^2 / sum k_i^2 (r_i + c_i).
pub fn max_load(config: &MicrogridConfig) -> LoadLimit {
    let sum_k: f64 = config.k.iter().sum();
    let weighted: f64 = config
        .k
        .iter()
        .zip(config.branch_resistance())
        .map(|(k, rb)| k * k * rb)
        .sum();
    let p_sup = config.v_ref * config.v_ref * sum_k * sum_k / weighted;
    LoadLimit {
        p_sup,
        satisfied: config.load_power < p_sup,
    }
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn option_finite_or_null<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        _ => s.serialize_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralPoint {
    pub re: f64,
    pub im: f64,
    pub theta: f64,
    pub magnitude: f64,
}

impl SpectralPoint {
    pub fn from_complex(z: C64) -> Self {
        SpectralPoint {
            re: z.re,
            im: z.im,
            theta: z.arg(),
            magnitude: z.norm(),
        }
    }

    pub fn as_complex(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<SpectralPoint>,
    pub zero_band: f64,
    pub zero_modes: usize,
    /// Every eigenvalue has Re > zero band.
    pub positive_stable: bool,
}

impl Spectrum {
    pub fn complex(&self) -> Vec<C64> {
        self.eigenvalues.iter().map(SpectralPoint::as_complex).collect()
    }

    /// Smallest real part; negative means the undelayed system is unstable.
    pub fn min_real(&self) -> f64 {
        self.eigenvalues.iter().map(|p| p.re).fold(f64::INFINITY, f64::min)
    }
}

/// Eigenvalues of J1 with polar forms. Modes within `tol * max(1, ||J1||_F)`
/// of zero are counted as zero modes (the consensus mode when b2 = 0).
pub fn eigen_classify(model: &SmallSignalModel, tol: f64) -> Result<Spectrum> {
    let values = general_eigenvalues(&model.j1)?;
    let zero_band = tol * model.j1.norm().max(1.0);
    let zero_modes = values.iter().filter(|z| z.norm() <= zero_band).count();
    let positive_stable = values.iter().all(|z| z.re > zero_band);
    Ok(Spectrum {
        eigenvalues: values.into_iter().map(SpectralPoint::from_complex).collect(),
        zero_band,
        zero_modes,
        positive_stable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    CertifiedStable,
    OracleStableUncertified,
    Unstable,
    Marginal,
}

impl Verdict {
    pub fn is_stable(&self) -> bool {
        matches!(self, Verdict::CertifiedStable | Verdict::OracleStableUncertified)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::CertifiedStable => 0,
            Verdict::OracleStableUncertified => 1,
            Verdict::Unstable | Verdict::Marginal => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub load_power: f64,
    pub p_sup: f64,
    pub cond28: bool,
    /// p_sup - P.
    pub delta1: f64,
    #[serde(serialize_with = "option_finite_or_null")]
    pub gamma1: Option<f64>,
    #[serde(serialize_with = "option_finite_or_null")]
    pub gamma1_clipped: Option<f64>,
    #[serde(serialize_with = "option_finite_or_null")]
    pub gamma1_square_root: Option<f64>,
    #[serde(serialize_with = "option_finite_or_null")]
    pub bound62: Option<f64>,
    /// b1 - bound62.
    #[serde(serialize_with = "option_finite_or_null")]
    pub delta2: Option<f64>,
    pub b1: f64,
    pub b2: f64,
    pub eigenvalues: Vec<SpectralPoint>,
    pub zero_modes: usize,
    pub tau: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub tau_max: f64,
    pub cz_condition: f64,
    pub verdict: Verdict,
    /// Sub-computations that could not be completed.
    pub notes: Vec<String>,
}

impl StabilityReport {
    pub fn certificate_holds(&self) -> bool {
        self.cond28 && self.delta2.is_some_and(|d| d > 0.0) && self.tau < self.tau_max
    }
}

pub fn full_report(config: &MicrogridConfig) -> Result<StabilityReport> {
    full_report_with_tol(config, DEFAULT_EIGEN_TOL)
}

pub fn full_report_with_tol(config: &MicrogridConfig, eigen_tol: f64) -> Result<StabilityReport> {
    config.validate_physical()?;
    let mut notes = Vec::new();
    if let Err(e) = config.validate() {
        notes.push(e.to_string());
    }
    let limit = max_load(config);
    if config.load_power >= config.high_branch_limit() {
        notes.push(format!(
            "load is above {:.1} W: the regulated point lies on the low-voltage branch",
            config.high_branch_limit()
        ));
    }
    let model = linearize(config)?;
    let spectrum = eigen_classify(&model, eigen_tol)?;
    let margin = delay_margin(&spectrum.complex(), spectrum.zero_band)?;

    let gain = if limit.satisfied {
        match diagonalize_j2(&model).and_then(|d| gain_bound(&d, config.b2)) {
            Ok(g) => Some(g),
            Err(e) => {
                notes.push(format!("gain bound unavailable: {e}"));
                None
            }
        }
    } else {
        notes.push("gain bound not evaluated: load exceeds maximum".into());
        None
    };

    let delay_ok = config.tau < margin.tau_max;
    let oracle_stable = spectrum.positive_stable && delay_ok;
    let marginal = spectrum.zero_modes > 0 && margin.all_nonzero_positive && delay_ok;
    let certified = limit.satisfied && gain.as_ref().is_some_and(|g| g.certifies(config.b1)) && delay_ok;
    let verdict = if certified && oracle_stable {
        Verdict::CertifiedStable
    } else if oracle_stable {
        Verdict::OracleStableUncertified
    } else if marginal {
        Verdict::Marginal
    } else {
        Verdict::Unstable
    };
    if certified && !oracle_stable {
        notes.push("certificate holds but the eigenvalue check disagrees".into());
    }

    Ok(StabilityReport {
        load_power: config.load_power,
        p_sup: limit.p_sup,
        cond28: limit.satisfied,
        delta1: limit.p_sup - config.load_power,
        gamma1: gain.as_ref().map(|g| g.gamma1),
        gamma1_clipped: gain.as_ref().map(|g| g.gamma1_clipped),
        gamma1_square_root: gain.as_ref().map(|g| g.gamma1_square_root),
        bound62: gain.as_ref().map(|g| g.bound62),
        delta2: gain.as_ref().map(|g| config.b1 - g.bound62),
        b1: config.b1,
        b2: config.b2,
        eigenvalues: spectrum.eigenvalues,
        zero_modes: spectrum.zero_modes,
        tau: config.tau,
        tau_max: margin.tau_max,
        cz_condition: model.cz_condition,
        verdict,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::CommGraph;
    use approx::assert_relative_eq;

    fn six_bus(load_power: f64, b1: f64, b2: f64) -> MicrogridConfig {
        MicrogridConfig {
            r: vec![2.0, 2.0, 1.0, 0.5, 0.5, 2.0],
            c: vec![5.0, 5.0, 5.0, 10.0, 10.0, 10.0],
            k: vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0],
            g: vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
            comm: CommGraph::ring(6, 100.0),
            v_ref: 200.0,
            load_power,
            b1,
            b2,
            tau: 0.0,
        }
    }

    #[test]
    fn max_load_six_bus() {
        let lim = max_load(&six_bus(5000.0, 20.0, 10.0));
        assert_relative_eq!(lim.p_sup, 3_240_000.0 / 152.0, max_relative = 1e-14);
        assert!((lim.p_sup - 21_300.0).abs() / 21_300.0 < 1e-3);
        assert!(lim.satisfied);
    }

    #[test]
    fn max_load_single_branch_and_scaling() {
        let mut cfg = six_bus(1.0, 1.0, 1.0);
        cfg.r = vec![1.5];
        cfg.c = vec![2.5];
        cfg.k = vec![3.0];
        cfg.g = vec![1.0];
        cfg.comm = CommGraph::empty(1);
        assert_relative_eq!(max_load(&cfg).p_sup, 200.0 * 200.0 / 4.0, max_relative = 1e-15);
        let base = max_load(&six_bus(5000.0, 1.0, 1.0)).p_sup;
        let mut doubled = six_bus(5000.0, 1.0, 1.0);
        doubled.v_ref *= 2.0;
        assert_relative_eq!(max_load(&doubled).p_sup, 4.0 * base, max_relative = 1e-14);
    }

    #[test]
    fn diagonalization_six_bus() {
        let model = linearize(&six_bus(5000.0, 20.0, 10.0)).unwrap();
        let d = diagonalize_j2(&model).unwrap();
        assert!(d.residual <= 1e-8 * model.j2.norm());
        assert!(d.mu.iter().all(|&m| m > 0.0));
        assert!(d.mu.windows(2).all(|w| w[0] > w[1]));
        for col in d.transform.column_iter() {
            assert_relative_eq!(col.norm(), 1.0, max_relative = 1e-12);
        }
        let diag = &d.transform_inv * &model.j2 * &d.transform;
        for (i, mu) in d.mu.iter().enumerate() {
            assert_relative_eq!(diag[(i, i)], *mu, max_relative = 1e-9);
        }
        assert!(diag[(5, 5)].abs() <= 1e-8 * model.j2.norm());
        // closed form for alpha_n beta_n
        let cfg = six_bus(5000.0, 20.0, 10.0);
        let expected = model.load_resistance * cfg.sum_kg() * cfg.k.iter().sum::<f64>() / model.q_sum();
        assert_relative_eq!(d.alpha_beta_last(), expected, max_relative = 1e-6);
    }

    #[test]
    fn diagonalization_requires_load_below_max() {
        let model = linearize(&six_bus(21_400.0, 20.0, 10.0)).unwrap();
        assert!(matches!(diagonalize_j2(&model), Err(crate::Error::HypothesisViolated(_))));
    }

    #[test]
    fn gain_bound_six_bus_values() {
        let model = linearize(&six_bus(5000.0, 20.0, 10.0)).unwrap();
        let g = gain_bound(&diagonalize_j2(&model).unwrap(), 10.0).unwrap();
        assert!((g.gamma1 - 0.06).abs() / 0.06 < 0.1, "gamma1 = {}", g.gamma1);
        assert_relative_eq!(g.gamma1, g.gamma1_clipped, max_relative = 1e-9);
        assert_relative_eq!(g.bound62, 10.0 * g.gamma1, max_relative = 1e-15);
        assert!(g.gamma1_signed <= 0.0);

        let model = linearize(&six_bus(21_000.0, 300.0, 2.0)).unwrap();
        let g = gain_bound(&diagonalize_j2(&model).unwrap(), 2.0).unwrap();
        assert!((g.gamma1 - 114.4).abs() / 114.4 < 0.1, "gamma1 = {}", g.gamma1);
        assert!(g.certifies(300.0));
        assert!(!g.certifies(200.0));
    }

    #[test]
    fn gain_bound_without_feedback_fails() {
        let mut cfg = six_bus(5000.0, 20.0, 10.0);
        cfg.g = vec![0.0; 6];
        let model = linearize(&cfg).unwrap();
        let d = diagonalize_j2(&model).unwrap();
        assert!(matches!(gain_bound(&d, 10.0), Err(crate::Error::HypothesisViolated(_))));
    }

    #[test]
    fn spectrum_cases() {
        let s = eigen_classify(&linearize(&six_bus(5000.0, 20.0, 10.0)).unwrap(), DEFAULT_EIGEN_TOL).unwrap();
        assert!(s.positive_stable);
        let s = eigen_classify(&linearize(&six_bus(5000.0, 20.0, 0.0)).unwrap(), DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(s.zero_modes, 1);
        assert!(!s.positive_stable);
        for p in &s.eigenvalues {
            if p.magnitude > s.zero_band {
                assert!(p.magnitude > 0.0 && p.theta.abs() < std::f64::consts::PI);
            }
        }
    }

    #[test]
    fn report_verdicts() {
        let a = full_report(&six_bus(5000.0, 20.0, 10.0)).unwrap();
        assert_eq!(a.verdict, Verdict::CertifiedStable);
        assert!(a.delta1 > 0.0 && a.delta2.unwrap() > 0.0);
        let b = full_report(&six_bus(5000.0, 1.0, 20.0)).unwrap();
        assert!(b.delta2.unwrap() < 0.0);
        assert_eq!(b.verdict, Verdict::OracleStableUncertified);
        let marginal = full_report(&six_bus(5000.0, 20.0, 0.0)).unwrap();
        assert_eq!(marginal.verdict, Verdict::Marginal);
        let json = serde_json::to_value(&a).unwrap();
        assert_eq!(json["verdict"], "certified-stable");
        assert!(json["eigenvalues"][0]["theta"].is_number());
        assert!(json["eigenvalues"][0]["magnitude"].is_number());
    }
}
