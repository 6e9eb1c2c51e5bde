//! Seeded randomized checks of the analytic results against direct
//! numerical oracles. Shared by the `verify` subcommand and the test suites.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::matrixkit::{general_eigenvalues, RankOneDiag};
use crate::netgraph::CommGraph;
use crate::plant::{fd_physical_jacobian, linearize, MicrogridConfig};
use crate::stability::{diagonalize_j2, eigen_classify, gain_bound, max_load, DEFAULT_EIGEN_TOL};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub trials: usize,
    /// Trials in which the property was actually exercised.
    pub exercised: usize,
    pub failures: usize,
    /// Largest error observed (relative, where applicable; for checks with
    /// two tolerances, the larger error as a fraction of its tolerance).
    pub worst: f64,
    /// First few failing cases, for diagnosis.
    pub examples: Vec<String>,
}

impl CheckResult {
    fn new(name: &str, trials: usize) -> Self {
        CheckResult {
            name: name.into(),
            trials,
            exercised: 0,
            failures: 0,
            worst: 0.0,
            examples: Vec::new(),
        }
    }

    fn fail(&mut self, msg: String) {
        self.failures += 1;
        if self.examples.len() < 5 {
            self.examples.push(msg);
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.exercised > 0
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Connected random network with n DGs (spanning tree plus random chords),
/// at least one voltage-feedback DG, and a load of `load_fraction * P_sup`.
pub fn random_config<R: Rng>(rng: &mut R, n: usize, load_fraction: f64) -> MicrogridConfig {
    let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..10.0)).collect();
    let k: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
    let mut g: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.5) { rng.random_range(0.5..2.0) } else { 0.0 })
        .collect();
    if g.iter().all(|&x| x == 0.0) {
        let pick = rng.random_range(0..n);
        g[pick] = rng.random_range(0.5..2.0);
    }
    let mut w = DMatrix::zeros(n, n);
    for i in 1..n {
        let j = rng.random_range(0..i);
        let a = rng.random_range(1.0..100.0);
        w[(i, j)] = a;
        w[(j, i)] = a;
    }
    for i in 0..n {
        for j in i + 1..n {
            if w[(i, j)] == 0.0 && rng.random_bool(0.3) {
                let a = rng.random_range(1.0..100.0);
                w[(i, j)] = a;
                w[(j, i)] = a;
            }
        }
    }
    let mut cfg = MicrogridConfig {
        r,
        c,
        k,
        g,
        comm: CommGraph::from_dense(w).expect("symmetric nonnegative weights"),
        v_ref: rng.random_range(50.0..400.0),
        load_power: 1.0,
        b1: rng.random_range(0.1..50.0),
        b2: rng.random_range(0.1..20.0),
        tau: 0.0,
    };
    cfg.load_power = load_fraction * max_load(&cfg).p_sup;
    cfg
}

/// A load fraction in [lo, hi) that stays more than 0.1% away from P_sup.
fn load_fraction<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let f: f64 = rng.random_range(lo..hi);
        if (f - 1.0).abs() > 1e-3 {
            return f;
        }
    }
}

/// Positive product of the nonzero eigenvalues of J2 iff P < P_sup, for loads
/// whose regulated point is on the high-voltage branch (see
/// [`MicrogridConfig::high_branch_limit`]).
pub fn check_max_load_iff(seed: u64, trials: usize) -> CheckResult {
    let mut out = CheckResult::new("max-load iff sign of nonzero J2 spectrum", trials);
    let mut rng = rng(seed);
    for t in 0..trials {
        let n = rng.random_range(2..=5);
        let mut cfg = random_config(&mut rng, n, 1.0);
        let p_sup = cfg.load_power;
        let upper = (1.6f64).min(0.999 * cfg.high_branch_limit() / p_sup);
        let f = load_fraction(&mut rng, 0.05, upper);
        cfg.load_power = f * p_sup;
        let cond = max_load(&cfg).satisfied;
        let model = match linearize(&cfg) {
            Ok(m) => m,
            Err(e) => {
                out.fail(format!("trial {t}: {e}"));
                continue;
            }
        };
        let mut ev = general_eigenvalues(&model.j2).unwrap_or_default();
        ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        let product: f64 = ev[1..].iter().map(|z| z.re).product();
        out.exercised += 1;
        if (product > 0.0) != cond {
            out.fail(format!("trial {t}: n = {n}, P/P_sup = {f:.4}, product = {product:e}"));
        }
    }
    out
}

/// b1 > bound62 with P < P_sup must never come with an unstable eigenvalue.
/// Draws until `trials` configs satisfy the certificate's hypotheses.
pub fn check_certificate_soundness(seed: u64, trials: usize) -> CheckResult {
    let mut out = CheckResult::new("gain certificate soundness", trials);
    let mut rng = rng(seed);
    for t in 0..10 * trials {
        if out.exercised >= trials {
            break;
        }
        let n = rng.random_range(2..=5);
        let f = load_fraction(&mut rng, 0.05, 0.999);
        let mut cfg = random_config(&mut rng, n, f);
        let bound = match linearize(&cfg)
            .and_then(|m| diagonalize_j2(&m))
            .and_then(|d| gain_bound(&d, cfg.b2))
        {
            Ok(g) => g.bound62,
            Err(e) => {
                out.fail(format!("trial {t}: bound unavailable: {e}"));
                continue;
            }
        };
        // half the trials sit just above the bound to probe its edge
        // (floored so the spectrum stays resolvable when the bound is ~0)
        if t % 2 == 0 {
            cfg.b1 = bound.max(1e-3 * cfg.b2) * rng.random_range(1.0001..3.0);
        }
        if !(cfg.b1 > bound) {
            continue;
        }
        let Ok(spectrum) = linearize(&cfg).and_then(|m| eigen_classify(&m, DEFAULT_EIGEN_TOL)) else {
            out.fail(format!("trial {t}: eigenvalues unavailable"));
            continue;
        };
        out.exercised += 1;
        out.worst = out.worst.max(-spectrum.min_real());
        if !(spectrum.min_real() > 0.0) {
            out.fail(format!(
                "trial {t}: b1 = {:.4} > {bound:.4} but min Re = {:e}",
                cfg.b1,
                spectrum.min_real()
            ));
        }
    }
    out
}

/// Closed-form determinants of diag + rank-one (and symmetrized rank-two)
/// updates against LU determinants.
pub fn check_rank_one_determinants(seed: u64, trials: usize) -> CheckResult {
    let mut out = CheckResult::new("rank-one determinant closed forms", trials);
    let mut rng = rng(seed);
    for t in 0..trials {
        let n = rng.random_range(2..=8);
        let diag: Vec<f64> = (0..n - 1)
            .map(|_| {
                let m: f64 = rng.random_range(0.2..5.0);
                if rng.random_bool(0.5) { m } else { -m }
            })
            .collect();
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = RankOneDiag::new(diag.clone(), a.clone(), b.clone()).expect("valid instance");
        let prod: f64 = diag.iter().map(|c| c.abs()).product();
        let (an, bn) = (a[n - 1], b[n - 1]);
        // size of the terms entering each closed form
        let scale1 = prod * (an * bn).abs();
        let scale2 = prod
            * (2.0 * (an * bn).abs()
                + (0..n - 1)
                    .map(|i| (an * b[i] - a[i] * bn).powi(2) / diag[i].abs())
                    .sum::<f64>());
        let d1 = m.dense_m1().determinant();
        let d2 = m.dense_m2().determinant();
        let e1 = (m.det_m1() - d1).abs() / d1.abs().max(scale1).max(f64::MIN_POSITIVE);
        let e2 = (m.det_m2() - d2).abs() / d2.abs().max(scale2).max(f64::MIN_POSITIVE);
        out.exercised += 1;
        out.worst = out.worst.max(e1).max(e2);
        if e1 > 1e-8 || e2 > 1e-8 {
            out.fail(format!("trial {t}: n = {n}, errors {e1:e}, {e2:e}"));
        }
    }
    out
}

/// Off-diagonal residual of the explicit diagonalization of J2, and the
/// closed form of alpha_n beta_n.
pub fn check_diagonalization(seed: u64, trials: usize) -> CheckResult {
    let mut out = CheckResult::new("J2 diagonalization residual and alpha_n beta_n identity", trials);
    let mut rng = rng(seed);
    for t in 0..trials {
        let n = rng.random_range(2..=6);
        let f = load_fraction(&mut rng, 0.05, 0.999);
        let cfg = random_config(&mut rng, n, f);
        let model = match linearize(&cfg) {
            Ok(m) => m,
            Err(e) => {
                out.fail(format!("trial {t}: {e}"));
                continue;
            }
        };
        let d = match diagonalize_j2(&model) {
            Ok(d) => d,
            Err(e) => {
                out.fail(format!("trial {t}: {e}"));
                continue;
            }
        };
        let m = &d.transform_inv * &model.j2 * &d.transform;
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| m[(i, j)].powi(2))
            .sum::<f64>()
            .sqrt();
        let residual = off / model.j2.norm();
        let sum_k: f64 = cfg.k.iter().sum();
        let expected = model.load_resistance * cfg.sum_kg() * sum_k / model.q_sum();
        let identity = (d.alpha_beta_last() - expected).abs() / expected.abs();
        out.exercised += 1;
        out.worst = out.worst.max(residual / 1e-8).max(identity / 1e-6);
        if residual > 1e-8 || identity > 1e-6 {
            out.fail(format!("trial {t}: n = {n}, residual {residual:e}, identity error {identity:e}"));
        }
    }
    out
}

/// Finite-difference Jacobian of the reduced nonlinear field against -J1.
///
/// Loads stay below 90% of the high-branch limit: near the fold of the bus
/// quadratic di/ds grows like 1/sqrt(discriminant) and the difference
/// quotients lose accuracy, although J1 itself is still exact.
pub fn check_linearization(seed: u64, trials: usize) -> CheckResult {
    let mut out = CheckResult::new("finite-difference Jacobian matches -J1", trials);
    let mut rng = rng(seed);
    for t in 0..trials {
        let n = rng.random_range(2..=6);
        let f = load_fraction(&mut rng, 0.05, 0.95);
        let mut cfg = random_config(&mut rng, n, 1.0);
        cfg.load_power = f * cfg.load_power.min(0.9 * cfg.high_branch_limit());
        let (Ok(model), Ok(fd)) = (linearize(&cfg), fd_physical_jacobian(&cfg, 1e-4)) else {
            out.fail(format!("trial {t}: evaluation failed"));
            continue;
        };
        let err = (&fd + &model.j1).norm() / model.j1.norm();
        out.exercised += 1;
        out.worst = out.worst.max(err);
        if err > 1e-5 {
            out.fail(format!("trial {t}: n = {n}, relative error {err:e}"));
        }
    }
    out
}

/// All checks with the default trial counts.
pub fn run_all(seed: u64, scale: f64) -> Vec<CheckResult> {
    let count = |base: usize| ((base as f64 * scale).round() as usize).max(1);
    vec![
        check_max_load_iff(seed, count(500)),
        check_certificate_soundness(seed.wrapping_add(1), count(500)),
        check_rank_one_determinants(seed.wrapping_add(2), count(1000)),
        check_diagonalization(seed.wrapping_add(3), count(200)),
        check_linearization(seed.wrapping_add(4), count(50)),
    ]
}
