//! Physical and control model of the microgrid: configuration, the algebraic
//! bus-voltage closure, the regulated equilibrium and the small-signal
//! matrices around it.
//!
//! Per DG `i` the converter output is `u_i = v_ref + di_i + du_i - c_i i_i`
//! and the cable gives `u_i = r_i i_i + u_L`, while the load draws constant
//! power `u_L * sum(i) = P`. Eliminating `u_i` and `i_i` leaves a quadratic in
//! the bus voltage `u_L`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrixkit::condition_number_1;
use crate::netgraph::{build_laplacian, CommGraph};

/// Above this 1-norm condition number (C + Z) is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e13;

#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridConfig {
    /// Cable resistances (ohm).
    pub r: Vec<f64>,
    /// Virtual (droop) resistances (ohm).
    pub c: Vec<f64>,
    /// Current-sharing coefficients; at consensus i_j / k_j is equal for all j.
    pub k: Vec<f64>,
    /// Bus-voltage feedback weights.
    pub g: Vec<f64>,
    pub comm: CommGraph,
    /// Rated bus voltage (V).
    pub v_ref: f64,
    /// Constant-power load (W).
    pub load_power: f64,
    /// Current-consensus gain.
    pub b1: f64,
    /// Voltage-recovery gain.
    pub b2: f64,
    /// Uniform communication delay (s).
    pub tau: f64,
}

impl MicrogridConfig {
    pub fn n(&self) -> usize {
        self.r.len()
    }

    /// Lengths and sign constraints only; no connectivity requirement.
    pub fn validate_physical(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::InvalidConfig("at least one DG is required".into()));
        }
        for (name, v) in [("c", &self.c), ("k", &self.k), ("g", &self.g)] {
            if v.len() != n {
                return Err(Error::InvalidConfig(format!("{name} has {} entries, expected {n}", v.len())));
            }
        }
        if self.comm.n() != n {
            return Err(Error::InvalidConfig(format!(
                "communication graph has {} nodes, expected {n}",
                self.comm.n()
            )));
        }
        let all = |v: &[f64], pred: fn(f64) -> bool| v.iter().all(|&x| x.is_finite() && pred(x));
        if !all(&self.r, |x| x > 0.0) {
            return Err(Error::InvalidConfig("cable resistances must be positive".into()));
        }
        if !all(&self.c, |x| x >= 0.0) {
            return Err(Error::InvalidConfig("virtual resistances must be nonnegative".into()));
        }
        if !all(&self.k, |x| x > 0.0) {
            return Err(Error::InvalidConfig("sharing coefficients must be positive".into()));
        }
        if !all(&self.g, |x| x >= 0.0) {
            return Err(Error::InvalidConfig("voltage weights must be nonnegative".into()));
        }
        if !(self.v_ref.is_finite() && self.v_ref > 0.0) {
            return Err(Error::InvalidConfig("v_ref must be positive".into()));
        }
        if !(self.load_power.is_finite() && self.load_power >= 0.0) {
            return Err(Error::InvalidConfig("load power must be nonnegative".into()));
        }
        if !(self.b1.is_finite() && self.b1 >= 0.0 && self.b2.is_finite() && self.b2 >= 0.0) {
            return Err(Error::InvalidConfig("gains b1, b2 must be nonnegative".into()));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::InvalidConfig("delay must be nonnegative".into()));
        }
        self.comm.validate()
    }

    /// Physical checks plus a connected communication graph.
    pub fn validate(&self) -> Result<()> {
        self.validate_physical()?;
        if !build_laplacian(&self.comm)?.connected {
            return Err(Error::InvalidConfig("communication graph has no spanning tree".into()));
        }
        Ok(())
    }

    /// c_i + r_i, the series resistance seen by each source.
    pub fn branch_resistance(&self) -> Vec<f64> {
        self.r.iter().zip(&self.c).map(|(r, c)| r + c).collect()
    }

    pub fn sum_kg(&self) -> f64 {
        self.k.iter().zip(&self.g).map(|(k, g)| k * g).sum()
    }

    /// v_ref^2 sum 1/(c_i + r_i): above this load the regulated point u_L = v_ref
    /// is the low root of the bus quadratic and det(C + Z) changes sign.
    pub fn high_branch_limit(&self) -> f64 {
        self.v_ref * self.v_ref * self.branch_resistance().iter().map(|rb| 1.0 / rb).sum::<f64>()
    }

    /// Equivalent incremental resistance of the load, -v_ref^2 / P.
    pub fn load_resistance(&self) -> f64 {
        -self.v_ref * self.v_ref / self.load_power
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub currents: Vec<f64>,
    pub voltages: Vec<f64>,
    pub bus_voltage: f64,
}

impl Equilibrium {
    /// Steady value of di_i + du_i, i.e. (c_i + r_i) i*_i + u_L* - v_ref.
    pub fn correction_totals(&self, config: &MicrogridConfig) -> Vec<f64> {
        config
            .branch_resistance()
            .iter()
            .zip(&self.currents)
            .map(|(rb, i)| rb * i + self.bus_voltage - config.v_ref)
            .collect()
    }
}

/// Regulated operating point: u_L = v_ref and i_j proportional to k_j.
pub fn equilibrium(config: &MicrogridConfig) -> Result<Equilibrium> {
    config.validate_physical()?;
    if config.sum_kg() <= 0.0 {
        return Err(Error::NoVoltageRecovery);
    }
    let sum_k: f64 = config.k.iter().sum();
    let total = config.load_power / config.v_ref;
    let currents: Vec<f64> = config.k.iter().map(|k| k / sum_k * total).collect();
    let voltages = currents
        .iter()
        .zip(&config.r)
        .map(|(i, r)| config.v_ref + r * i)
        .collect();
    Ok(Equilibrium {
        currents,
        voltages,
        bus_voltage: config.v_ref,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusSolution {
    pub bus_voltage: f64,
    pub currents: Vec<f64>,
}

/// Solves A u^2 - B u + P = 0 on the high-voltage branch, where
/// A = sum 1/R_i and B = sum emf_i / R_i with R_i = c_i + r_i.
pub fn solve_bus(branch_resistance: &[f64], load_power: f64, emf: &[f64]) -> Result<BusSolution> {
    if branch_resistance.len() != emf.len() {
        return Err(Error::InvalidInput(format!(
            "{} emf values for {} branches",
            emf.len(),
            branch_resistance.len()
        )));
    }
    if branch_resistance.iter().any(|&rb| !(rb > 0.0)) {
        return Err(Error::InvalidConfig("c_i + r_i must be positive".into()));
    }
    let a: f64 = branch_resistance.iter().map(|rb| 1.0 / rb).sum();
    let b: f64 = branch_resistance.iter().zip(emf).map(|(rb, e)| e / rb).sum();
    let discriminant = b * b - 4.0 * a * load_power;
    if !discriminant.is_finite() || discriminant < 0.0 {
        return Err(Error::LoadInfeasible { discriminant });
    }
    let bus_voltage = (b + discriminant.sqrt()) / (2.0 * a);
    let currents = branch_resistance
        .iter()
        .zip(emf)
        .map(|(rb, e)| (e - bus_voltage) / rb)
        .collect();
    Ok(BusSolution {
        bus_voltage,
        currents,
    })
}

/// Bus voltage and DG currents for effective source voltages
/// `v_ref + di_i + du_i`.
pub fn solve_bus_voltage(config: &MicrogridConfig, effective_emf: &[f64]) -> Result<BusSolution> {
    solve_bus(&config.branch_resistance(), config.load_power, effective_emf)
}

#[derive(Debug, Clone)]
pub struct SmallSignalModel {
    pub n: usize,
    pub load_resistance: f64,
    pub z: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// diag(1 / k_i).
    pub k: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub g_weights: DVector<f64>,
    pub klk: DMatrix<f64>,
    /// K^{-1} (C + Z) K^{-1}.
    pub q: DMatrix<f64>,
    pub cz: DMatrix<f64>,
    pub cz_inv: DMatrix<f64>,
    pub cz_condition: f64,
    pub j1: DMatrix<f64>,
    pub j2: DMatrix<f64>,
    pub j3: DMatrix<f64>,
    pub b1: f64,
    pub b2: f64,
}

impl SmallSignalModel {
    /// 1^T Q 1 = sum k_i^2 (r_i + c_i) + r_L (sum k_i)^2.
    pub fn q_sum(&self) -> f64 {
        self.q.sum()
    }

    /// System matrix of the state-space model, -J1.
    pub fn jacobian(&self) -> DMatrix<f64> {
        -&self.j1
    }
}

/// Builds Z, G, Q and J1 = (C+Z)^{-1} (b1 K L K + b2 G) around the regulated
/// equilibrium.
pub fn linearize(config: &MicrogridConfig) -> Result<SmallSignalModel> {
    config.validate_physical()?;
    if !(config.load_power > 0.0) {
        return Err(Error::InvalidConfig("linearization needs a positive load".into()));
    }
    let n = config.n();
    let r_l = config.load_resistance();
    let z = DMatrix::from_fn(n, n, |i, j| r_l + if i == j { config.r[i] } else { 0.0 });
    let c = DMatrix::from_diagonal(&DVector::from_column_slice(&config.c));
    let k = DMatrix::from_diagonal(&DVector::from_iterator(n, config.k.iter().map(|k| 1.0 / k)));
    let k_inv = DMatrix::from_diagonal(&DVector::from_column_slice(&config.k));
    let g_weights = DVector::from_column_slice(&config.g);
    let g = DMatrix::from_fn(n, n, |i, _| r_l * g_weights[i]);
    let laplacian = config.comm.laplacian_matrix();
    let klk = &k * &laplacian * &k;
    let cz = &c + &z;
    let q = &k_inv * &cz * &k_inv;

    let cz_inv = cz
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularModel { condition: f64::INFINITY })?;
    let cz_condition = condition_number_1(&cz, &cz_inv);
    if !cz_condition.is_finite() || cz_condition > SINGULAR_CONDITION {
        return Err(Error::SingularModel {
            condition: cz_condition,
        });
    }
    let j2 = &cz_inv * &klk;
    let j3 = &cz_inv * &g;
    let j1 = &cz_inv * (config.b1 * &klk + config.b2 * &g);
    Ok(SmallSignalModel {
        n,
        load_resistance: r_l,
        z,
        c,
        k,
        g,
        g_weights,
        klk,
        q,
        cz,
        cz_inv,
        cz_condition,
        j1,
        j2,
        j3,
        b1: config.b1,
        b2: config.b2,
    })
}

/// Rate of the correction totals s = di + du given measured currents and
/// bus voltage: ds/dt = -b1 K L K i + b2 (v_ref - u_L) g.
pub fn correction_rate(config: &MicrogridConfig, currents: &[f64], bus_voltage: f64) -> DVector<f64> {
    let n = config.n();
    let laplacian = config.comm.laplacian_matrix();
    let scaled = DVector::from_iterator(n, currents.iter().zip(&config.k).map(|(i, k)| i / k));
    let consensus = laplacian * scaled;
    DVector::from_fn(n, |i, _| {
        -config.b1 * consensus[i] / config.k[i] + config.b2 * (config.v_ref - bus_voltage) * config.g[i]
    })
}

/// Reduced nonlinear vector field in the correction totals s, closed through
/// the bus-voltage quadratic.
pub fn reduced_field(config: &MicrogridConfig, totals: &[f64]) -> Result<DVector<f64>> {
    let emf: Vec<f64> = totals.iter().map(|s| config.v_ref + s).collect();
    let bus = solve_bus_voltage(config, &emf)?;
    Ok(correction_rate(config, &bus.currents, bus.bus_voltage))
}

/// Fourth-order central-difference Jacobian of the reduced field at
/// equilibrium, mapped into current-deviation coordinates with a
/// finite-difference estimate of di/ds. Should reproduce -J1.
pub fn fd_physical_jacobian(config: &MicrogridConfig, rel_step: f64) -> Result<DMatrix<f64>> {
    let eq = equilibrium(config)?;
    let s0 = eq.correction_totals(config);
    let n = config.n();
    let emf = |s: &[f64]| s.iter().map(|x| config.v_ref + x).collect::<Vec<_>>();
    let mut field_jac = DMatrix::zeros(n, n);
    let mut current_jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = rel_step * s0[j].abs().max(1.0);
        let eval = |offset: f64| -> Result<(DVector<f64>, Vec<f64>)> {
            let mut s = s0.clone();
            s[j] += offset;
            Ok((reduced_field(config, &s)?, solve_bus_voltage(config, &emf(&s))?.currents))
        };
        let (f1p, i1p) = eval(h)?;
        let (f1m, i1m) = eval(-h)?;
        let (f2p, i2p) = eval(2.0 * h)?;
        let (f2m, i2m) = eval(-2.0 * h)?;
        for i in 0..n {
            field_jac[(i, j)] = (8.0 * (f1p[i] - f1m[i]) - (f2p[i] - f2m[i])) / (12.0 * h);
            current_jac[(i, j)] = (8.0 * (i1p[i] - i1m[i]) - (i2p[i] - i2m[i])) / (12.0 * h);
        }
    }
    let current_jac_inv = current_jac
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("finite-difference current map is singular".into()))?;
    Ok(&current_jac * field_jac * current_jac_inv)
}
