//! Explicit similarity transform that diagonalizes J2 = (C+Z)^{-1} K L K
//! when the load is below its maximum.
//!
//! Steps: an orthogonal P1 puts K L K into diag(Lambda1, 0); M = P1 (C+Z)^{-1}
//! P1^T is symmetric, so M11 Lambda1 is similar to the symmetric
//! Lambda1^{1/2} M11 Lambda1^{1/2} and P2 comes out of a symmetric
//! eigen-decomposition. A unit lower-triangular P4 then clears the last row.
//! The product P5 = P1^T P3^{-1} P4 is column-normalized into P6.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::plant::SmallSignalModel;

/// Relative threshold (on ||J2||) below which two eigenvalues of J2, or one
/// eigenvalue and zero, count as coincident.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct DiagonalizationResult {
    #[serde(skip)]
    pub transform: DMatrix<f64>,
    #[serde(skip)]
    pub transform_inv: DMatrix<f64>,
    /// Nonzero eigenvalues of J2, descending.
    pub mu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// max |off-diagonal| of P6^{-1} J2 P6.
    pub residual: f64,
}

impl DiagonalizationResult {
    pub fn alpha_beta_last(&self) -> f64 {
        let n = self.alpha.len();
        self.alpha[n - 1] * self.beta[n - 1]
    }
}

/// Eigenvectors of a symmetric matrix ordered by descending eigenvalue.
fn sorted_symmetric(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn diagonalize_j2(model: &SmallSignalModel) -> Result<DiagonalizationResult> {
    let n = model.n;
    if n < 2 {
        return Err(Error::InvalidInput("diagonalization needs at least two DGs".into()));
    }
    if model.q_sum() >= 0.0 {
        return Err(Error::HypothesisViolated(
            "load is not below the maximum load (1^T Q 1 >= 0)".into(),
        ));
    }
    let j2_norm = model.j2.norm();
    let band = DEGENERACY_TOL * j2_norm.max(f64::MIN_POSITIVE);

    // P1: rows are eigenvectors of KLK, zero eigenvalue last.
    let (klk_values, klk_vectors) = sorted_symmetric(model.klk.clone());
    let klk_scale = klk_values[0].abs().max(1.0);
    if klk_values[n - 2] <= 1e-9 * klk_scale {
        return Err(Error::HypothesisViolated(
            "communication graph has no spanning tree (K L K has a repeated zero eigenvalue)".into(),
        ));
    }
    let p1 = klk_vectors.transpose();
    let lambda1: Vec<f64> = klk_values[..n - 1].to_vec();

    let m = &p1 * &model.cz_inv * p1.transpose();
    let m11 = m.view((0, 0), (n - 1, n - 1)).clone_owned();
    let m12 = m.view((0, n - 1), (n - 1, 1)).clone_owned();

    let sqrt_l1 = DVector::from_iterator(n - 1, lambda1.iter().map(|l| l.sqrt()));
    let s = DMatrix::from_fn(n - 1, n - 1, |i, j| sqrt_l1[i] * m11[(i, j)] * sqrt_l1[j]);
    let (mu, w) = sorted_symmetric(s);

    if let Some(bad) = mu.iter().find(|m| m.abs() <= band) {
        return Err(Error::DegenerateSpectrum(format!(
            "nonzero eigenvalue block is singular (mu = {bad:e})"
        )));
    }
    if let Some(pair) = mu.windows(2).find(|p| (p[0] - p[1]).abs() <= band) {
        return Err(Error::DegenerateSpectrum(format!(
            "eigenvalues {:e} and {:e} of J2 are too close to separate",
            pair[0], pair[1]
        )));
    }

    // P2 = W^T Lambda1^{1/2}, P2^{-1} = Lambda1^{-1/2} W
    let p2_inv = DMatrix::from_fn(n - 1, n - 1, |i, j| w[(i, j)] / sqrt_l1[i]);
    // last row of P3 J4 P3^{-1}: M12^T Lambda1 P2^{-1}
    let lower: Vec<f64> = (0..n - 1)
        .map(|j| (0..n - 1).map(|i| m12[(i, 0)] * lambda1[i] * p2_inv[(i, j)]).sum())
        .collect();

    let mut p3_inv = DMatrix::zeros(n, n);
    p3_inv.view_mut((0, 0), (n - 1, n - 1)).copy_from(&p2_inv);
    p3_inv[(n - 1, n - 1)] = 1.0;
    let mut p4 = DMatrix::identity(n, n);
    for j in 0..n - 1 {
        p4[(n - 1, j)] = lower[j] / mu[j];
    }
    let mut p6 = p1.transpose() * p3_inv * p4;

    for mut col in p6.column_iter_mut() {
        let norm = col.norm();
        let pivot = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let scale = if pivot < 0.0 { -1.0 / norm } else { 1.0 / norm };
        col *= scale;
    }

    let p6_inv = p6
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateSpectrum("transformation is singular".into()))?;
    let diag = &p6_inv * &model.j2 * &p6;
    let mut residual = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                residual = residual.max(diag[(i, j)].abs());
            }
        }
    }

    let ones = DVector::from_element(n, 1.0);
    let beta = p6.transpose() * ones;
    let alpha = model.load_resistance * (&p6_inv * (&model.cz_inv * &model.g_weights));

    Ok(DiagonalizationResult {
        transform: p6,
        transform_inv: p6_inv,
        mu,
        alpha: alpha.iter().copied().collect(),
        beta: beta.iter().copied().collect(),
        residual,
    })
}
