//! Discrete optimal transport between finite probability vectors.
//!
//! [`exact`] solves the linear program exactly with a transportation simplex;
//! [`entropic`] solves its entropic regularization with Sinkhorn scaling.

pub mod entropic;
pub mod exact;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub use entropic::{
    entropy, gamma_heuristic, gibbs_kernel, reg_ot, sinkhorn, RegOt, RegOtConfig, SinkhornConfig,
    SinkhornResult,
};
pub use exact::{solve_exact, wasserstein, OtSolution};

/// Absolute tolerance on the total mass of a distribution.
pub const MASS_TOL: f64 = 1e-12;

/// Strictly positive probability weights attached to support labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<usize>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    /// Weights on the support `0..weights.len()`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let support = (0..weights.len()).collect();
        Self::with_support(support, weights)
    }

    pub fn with_support(support: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty weight vector".into()));
        }
        if support.len() != weights.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} support labels for {} weights",
                support.len(),
                weights.len()
            )));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(**w > 0.0 && w.is_finite()))
        {
            return Err(Error::InvalidDistribution(format!(
                "weight {i} is {w}, must be positive"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        Ok(DiscreteDistribution { support, weights })
    }

    /// Uniform weights on `n` points.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("empty weight vector".into()));
        }
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        // push the rounding residue onto the last entry
        let head: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = 1.0 - head;
        Self::new(weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }
}

/// Dense matrix of finite, nonnegative pairwise costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        check_costs(entries.view())?;
        Ok(CostMatrix(entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch("ragged cost rows".into()));
        }
        let flat = rows.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((n, m), flat).expect("shape checked above");
        Self::new(arr)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Entrywise `c_ij^r`.
    pub fn powf(&self, r: f64) -> Result<Self> {
        Self::new(self.0.mapv(|c| c.powf(r)))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.mapv(|c| c * factor))
    }

    pub fn transposed(&self) -> Self {
        CostMatrix(self.0.t().to_owned())
    }
}

pub(crate) fn check_costs(c: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), &value) in c.indexed_iter() {
        if !value.is_finite() {
            return Err(Error::NonFiniteCost { row, col, value });
        }
        if value < 0.0 {
            return Err(Error::NegativeCost { row, col, value });
        }
    }
    Ok(())
}

pub(crate) fn check_dims(p: &[f64], q: &[f64], c: ArrayView2<'_, f64>) -> Result<()> {
    if c.dim() != (p.len(), q.len()) {
        return Err(Error::DimensionMismatch(format!(
            "cost matrix is {}x{} but marginals have lengths {} and {}",
            c.nrows(),
            c.ncols(),
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// A coupling of two distributions with its measured marginal violations
/// (L1 norms of `plan 1 - p` and `plan^T 1 - q`).
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub entries: Array2<f64>,
    pub row_marginal_err: f64,
    pub col_marginal_err: f64,
}

impl TransportPlan {
    pub fn new(entries: Array2<f64>, p: &[f64], q: &[f64]) -> Self {
        let row_marginal_err = entries
            .rows()
            .into_iter()
            .zip(p)
            .map(|(row, &pi)| (row.sum() - pi).abs())
            .sum();
        let col_marginal_err = entries
            .columns()
            .into_iter()
            .zip(q)
            .map(|(col, &qj)| (col.sum() - qj).abs())
            .sum();
        TransportPlan {
            entries,
            row_marginal_err,
            col_marginal_err,
        }
    }

    pub fn marginal_err(&self) -> f64 {
        self.row_marginal_err + self.col_marginal_err
    }

    /// `sum_ij c_ij pi_ij` in row-major order.
    pub fn cost(&self, c: ArrayView2<'_, f64>) -> f64 {
        dot(c, self.entries.view())
    }
}

pub(crate) fn dot(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
