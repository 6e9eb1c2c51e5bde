//! Communication graph, its Laplacian and the spectral / combinatorial facts
//! the stability analysis leans on.
//!
//! Nodes are indexed from zero internally. Scenario files use 1-based DG
//! labels and convert on load.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on lambda_2 for the connectivity decision.
pub const CONNECTIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Undirected weighted communication graph stored as a dense adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    weights: DMatrix<f64>,
}

impl CommGraph {
    pub fn from_dense(weights: DMatrix<f64>) -> Result<Self> {
        let g = CommGraph { weights };
        g.validate()?;
        Ok(g)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != n) {
            return Err(Error::InvalidGraph(format!(
                "row {r} has {} entries, expected {n}",
                row.len()
            )));
        }
        Self::from_dense(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Builds a graph from 0-based undirected edges; repeated edges overwrite.
    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self> {
        let mut weights = DMatrix::zeros(n, n);
        for e in edges {
            if e.i >= n || e.j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) out of range for {n} nodes",
                    e.i, e.j
                )));
            }
            if e.i == e.j {
                return Err(Error::InvalidGraph(format!("self-loop on node {}", e.i)));
            }
            weights[(e.i, e.j)] = e.w;
            weights[(e.j, e.i)] = e.w;
        }
        Self::from_dense(weights)
    }

    /// Unweighted-ring helper: node i linked to i+1 (mod n) with weight `w`.
    pub fn ring(n: usize, w: f64) -> Self {
        let mut weights = DMatrix::zeros(n, n);
        if n >= 2 {
            for i in 0..n {
                let j = (i + 1) % n;
                if i != j {
                    weights[(i, j)] = w;
                    weights[(j, i)] = w;
                }
            }
        }
        CommGraph { weights }
    }

    pub fn empty(n: usize) -> Self {
        CommGraph {
            weights: DMatrix::zeros(n, n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.weights.nrows();
        if n == 0 || self.weights.ncols() != n {
            return Err(Error::InvalidGraph(format!(
                "adjacency must be square and non-empty, got {}x{}",
                n,
                self.weights.ncols()
            )));
        }
        for i in 0..n {
            if self.weights[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!("nonzero diagonal at node {i}")));
            }
            for j in 0..n {
                let a = self.weights[(i, j)];
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::InvalidGraph(format!(
                        "weight a[{i}][{j}] = {a} must be finite and nonnegative"
                    )));
                }
                if a != self.weights[(j, i)] {
                    return Err(Error::InvalidGraph(format!(
                        "asymmetric weights a[{i}][{j}] = {a} vs a[{j}][{i}] = {}",
                        self.weights[(j, i)]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Sets the symmetric link weight between `i` and `j`.
    pub fn set_link(&mut self, i: usize, j: usize, w: f64) -> Result<()> {
        let n = self.n();
        if i >= n || j >= n || i == j {
            return Err(Error::InvalidGraph(format!("cannot set link ({i}, {j}) on {n} nodes")));
        }
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidGraph(format!("link weight {w} must be finite and nonnegative")));
        }
        self.weights[(i, j)] = w;
        self.weights[(j, i)] = w;
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CommGraph {
            weights: &self.weights * factor,
        }
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.weights.row(i).sum()
    }

    pub fn edges(&self) -> Vec<Edge> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.weights[(i, j)];
                if w > 0.0 {
                    out.push(Edge { i, j, w });
                }
            }
        }
        out
    }

    /// L = D - A.
    pub fn laplacian_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.degree(i)
            } else {
                -self.weights[(i, j)]
            }
        })
    }

    /// Breadth-first reachability over positive-weight edges.
    pub fn is_connected_bfs(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for (v, s) in seen.iter_mut().enumerate() {
                if !*s && self.weights[(u, v)] > 0.0 {
                    *s = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone)]
pub struct LaplacianBundle {
    pub laplacian: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub connected: bool,
}

impl LaplacianBundle {
    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn algebraic_connectivity(&self) -> f64 {
        self.eigenvalues.get(1).copied().unwrap_or(0.0)
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Symmetric eigenvalues sorted ascending; ties keep solver order.
pub fn symmetric_eigenvalues_sorted(m: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values
}

pub fn build_laplacian(graph: &CommGraph) -> Result<LaplacianBundle> {
    graph.validate()?;
    let laplacian = graph.laplacian_matrix();
    let eigenvalues = symmetric_eigenvalues_sorted(&laplacian);
    let connected = match eigenvalues.len() {
        1 => true,
        _ => {
            let scale = eigenvalues.last().copied().unwrap_or(0.0).max(1.0);
            eigenvalues[1] > CONNECTIVITY_TOL * scale
        }
    };
    Ok(LaplacianBundle {
        laplacian,
        eigenvalues,
        connected,
    })
}

/// Weighted spanning-tree count det(L_1), L with its last row and column
/// removed. Returns 0 for a disconnected graph.
pub fn weighted_spanning_tree_count(bundle: &LaplacianBundle) -> f64 {
    if !bundle.connected {
        return 0.0;
    }
    let n = bundle.n();
    if n == 1 {
        return 1.0;
    }
    bundle
        .laplacian
        .view((0, 0), (n - 1, n - 1))
        .clone_owned()
        .determinant()
}

/// Same count from the spectrum: (1/n) times the product of the nonzero
/// Laplacian eigenvalues.
pub fn spanning_tree_count_spectral(bundle: &LaplacianBundle) -> f64 {
    if !bundle.connected {
        return 0.0;
    }
    let n = bundle.n();
    bundle.eigenvalues.iter().skip(1).product::<f64>() / n as f64
}
