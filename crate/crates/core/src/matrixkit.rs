//! Dense linear-algebra kernels: inertia counting, the closed-form
//! determinants of a diagonal-plus-rank-one/rank-two family, the secular
//! function of a diagonal-plus-rank-one spectrum, and general eigenvalues.

use nalgebra::{Complex, DMatrix, Schur, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Default relative zero band for inertia counting.
pub const DEFAULT_INERTIA_TOL: f64 = 1e-9;

const SCHUR_EPS: f64 = 1e-14;
const SCHUR_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl Inertia {
    pub fn new(positive: usize, negative: usize, zero: usize) -> Self {
        Inertia {
            positive,
            negative,
            zero,
        }
    }

    pub fn order(&self) -> usize {
        self.positive + self.negative + self.zero
    }

    pub fn is_positive_stable(&self) -> bool {
        self.negative == 0 && self.zero == 0
    }

    pub fn is_semi_positive_stable(&self) -> bool {
        self.negative == 0
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-14 * scale))
}

/// All eigenvalues of a real square matrix, computed from its real Schur form
/// and sorted by (re, im).
pub fn general_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::InvalidInput(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("Schur iteration did not converge".into()))?;
    let mut values: Vec<C64> = schur.complex_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(values)
}

/// Eigenvalue real parts, using the symmetric solver when the input is
/// symmetric.
fn real_parts(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if is_symmetric(m) {
        Ok(SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect())
    } else {
        Ok(general_eigenvalues(m)?.into_iter().map(|z| z.re).collect())
    }
}

/// Counts eigenvalues by the sign of their real part. Real parts within
/// `tol * max(1, ||A||_F)` of zero are counted as zero.
pub fn inertia_of(m: &DMatrix<f64>, tol: f64) -> Result<Inertia> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("matrix has non-finite entries".into()));
    }
    let band = tol * m.norm().max(1.0);
    let mut inertia = Inertia::new(0, 0, 0);
    for re in real_parts(m)? {
        if re > band {
            inertia.positive += 1;
        } else if re < -band {
            inertia.negative += 1;
        } else {
            inertia.zero += 1;
        }
    }
    Ok(inertia)
}

/// diag(c_1, .., c_{n-1}, 0) together with two length-n vectors a, b.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneDiag {
    diag: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl RankOneDiag {
    pub fn new(diag: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = diag.len() + 1;
        if a.len() != n || b.len() != n {
            return Err(Error::InvalidInput(format!(
                "vectors must have length {n}, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        if let Some(i) = diag.iter().position(|&c| c == 0.0 || !c.is_finite()) {
            return Err(Error::InvalidInput(format!("diagonal entry {i} must be finite and nonzero")));
        }
        Ok(RankOneDiag { diag, a, b })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    fn lambda(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| if i == j && i < n - 1 { self.diag[i] } else { 0.0 })
    }

    /// Lambda + a b^T.
    pub fn dense_m1(&self) -> DMatrix<f64> {
        let n = self.n();
        self.lambda() + DMatrix::from_fn(n, n, |i, j| self.a[i] * self.b[j])
    }

    /// Lambda + a b^T + b a^T.
    pub fn dense_m2(&self) -> DMatrix<f64> {
        let n = self.n();
        self.lambda() + DMatrix::from_fn(n, n, |i, j| self.a[i] * self.b[j] + self.b[i] * self.a[j])
    }

    /// det(Lambda + a b^T) = a_n b_n prod c_i.
    pub fn det_m1(&self) -> f64 {
        let n = self.n();
        self.a[n - 1] * self.b[n - 1] * self.diag.iter().product::<f64>()
    }

    /// det(Lambda + a b^T + b a^T)
    ///   = prod c_i * (2 a_n b_n - sum_i (a_n b_i - a_i b_n)^2 / c_i).
    pub fn det_m2(&self) -> f64 {
        let n = self.n();
        let (an, bn) = (self.a[n - 1], self.b[n - 1]);
        let correction: f64 = self
            .diag
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let d = an * self.b[i] - self.a[i] * bn;
                d * d / c
            })
            .sum();
        self.diag.iter().product::<f64>() * (2.0 * an * bn - correction)
    }
}

pub fn det_lemma5_m1(m: &RankOneDiag) -> f64 {
    m.det_m1()
}

pub fn det_lemma5_m2(m: &RankOneDiag) -> f64 {
    m.det_m2()
}

/// Inputs of the secular equation for the spectrum of
/// `b1 * diag(mu_2, .., mu_n, 0) + b2 * alpha beta^T`.
#[derive(Debug, Clone, Copy)]
pub struct SecularInputs<'a> {
    /// mu_2..mu_n (length n-1).
    pub mu: &'a [f64],
    pub alpha: &'a [f64],
    pub beta: &'a [f64],
    pub b1: f64,
    pub b2: f64,
}

impl SecularInputs<'_> {
    fn check(&self) -> Result<()> {
        let n = self.mu.len() + 1;
        if self.alpha.len() != n || self.beta.len() != n {
            return Err(Error::InvalidInput(format!(
                "alpha/beta must have length {n}, got {} and {}",
                self.alpha.len(),
                self.beta.len()
            )));
        }
        Ok(())
    }

    fn pole_scale(&self) -> f64 {
        self.mu.iter().fold(1.0f64, |acc, m| acc.max((self.b1 * m).abs()))
    }
}

/// 1 - b2 * sum_i alpha_i beta_i / (lambda - b1 mu_{i+1}) - b2 alpha_n beta_n / lambda.
pub fn secular_eval(lambda: C64, inputs: SecularInputs<'_>) -> Result<C64> {
    inputs.check()?;
    let n = inputs.alpha.len();
    let pole_band = 1e-14 * inputs.pole_scale();
    let mut value = C64::new(1.0, 0.0);
    for (i, &mu) in inputs.mu.iter().enumerate() {
        let denom = lambda - inputs.b1 * mu;
        if denom.norm() <= pole_band {
            return Err(Error::Pole {
                re: lambda.re,
                im: lambda.im,
            });
        }
        value -= inputs.b2 * inputs.alpha[i] * inputs.beta[i] / denom;
    }
    if lambda.norm() <= pole_band {
        return Err(Error::Pole {
            re: lambda.re,
            im: lambda.im,
        });
    }
    value -= inputs.b2 * inputs.alpha[n - 1] * inputs.beta[n - 1] / lambda;
    Ok(value)
}

/// The full characteristic polynomial lambda * prod(lambda - b1 mu_i) times
/// the secular factor, expanded so it has no poles. Returns the value and
/// the sum of the magnitudes of its terms (a natural scale for residuals).
pub fn characteristic_eval(lambda: C64, inputs: SecularInputs<'_>) -> Result<(C64, f64)> {
    inputs.check()?;
    let n = inputs.alpha.len();
    let shifted: Vec<C64> = inputs.mu.iter().map(|&m| lambda - inputs.b1 * m).collect();
    let product_except = |skip: Option<usize>| -> C64 {
        shifted
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .fold(C64::new(1.0, 0.0), |acc, (_, z)| acc * z)
    };
    let lead = lambda * product_except(None);
    let mut value = lead;
    let mut scale = lead.norm();
    for i in 0..n - 1 {
        let term = inputs.b2 * inputs.alpha[i] * inputs.beta[i] * lambda * product_except(Some(i));
        value -= term;
        scale += term.norm();
    }
    let last = inputs.b2 * inputs.alpha[n - 1] * inputs.beta[n - 1] * product_except(None);
    value -= last;
    scale += last.norm();
    Ok((value, scale))
}

/// Condition number in the 1-norm, computed from an explicit inverse.
pub fn condition_number_1(m: &DMatrix<f64>, inverse: &DMatrix<f64>) -> f64 {
    let norm1 = |a: &DMatrix<f64>| {
        (0..a.ncols())
            .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    norm1(m) * norm1(inverse)
}
