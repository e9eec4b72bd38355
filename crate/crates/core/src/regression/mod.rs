//! Linear-kernel regression and classification solvers.
//!
//! Three fits share one model type: kernel ridge regression, ν-support vector
//! regression and a hinge-loss linear SVM. With a linear kernel every model
//! collapses to a primal weight vector plus bias, so prediction costs one dot
//! product per row regardless of how many training examples there were.

mod combine;
mod grid;
mod krr;
mod nu_svr;
mod svc;

pub use combine::{combine_predictors, CombineParams};
pub use grid::{
    check_disjoint, evaluate_point, finish, grid_search, select_best, Dataset, Grid, GridPoint, GridPointResult, GridSearchReport,
};
pub use krr::krr_fit;
pub use nu_svr::{nu_svr_fit, NuSvrParams};
pub use svc::{linear_svc_fit, SvcParams};

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::linalg::dot;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Krr,
    NuSvr,
    LinearSvc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Hyperparameters {
    pub lambda: Option<f64>,
    pub c: Option<f64>,
    pub nu: Option<f64>,
}

/// How the last solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SolverSummary {
    pub iterations: u64,
    /// Final KKT violation, or relative residual for the direct solve.
    pub violation: f64,
    pub objective: f64,
}

/// Per-column affine map applied to raw inputs before the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    /// Width of the raw input rows.
    pub n_input: usize,
    /// Raw column index feeding each weight.
    pub kept: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    fn apply(&self, row: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(&c, (m, s))| (row[c] - m) / s)
            .collect()
    }
}

/// A trained linear predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub kind: ModelKind,
    pub kernel: Kernel,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Signed dual coefficient per training row (`α − α*` for ν-SVR, `α y`
    /// for the SVM, `α` for KRR).
    pub dual: Vec<f64>,
    pub training_ids: Vec<String>,
    pub hyperparameters: Hyperparameters,
    /// Tube half-width found by ν-SVR.
    pub epsilon: Option<f64>,
    /// Whether the caller L2-normalized rows before fitting; `predict`
    /// expects rows prepared the same way.
    pub l2_normalized: bool,
    pub standardization: Option<Standardization>,
    pub solver: SolverSummary,
}

impl RegressionModel {
    /// Constant predictor, mostly useful as a baseline.
    pub fn constant(kind: ModelKind, dim: usize, bias: f64) -> Self {
        Self {
            kind,
            kernel: Kernel::Linear,
            weights: alloc::vec![0.0; dim],
            bias,
            dual: Vec::new(),
            training_ids: Vec::new(),
            hyperparameters: Hyperparameters::default(),
            epsilon: None,
            l2_normalized: false,
            standardization: None,
            solver: SolverSummary::default(),
        }
    }

    pub fn with_training_ids(mut self, ids: Vec<String>) -> Self {
        self.training_ids = ids;
        self
    }

    pub fn with_l2_normalized(mut self, flag: bool) -> Self {
        self.l2_normalized = flag;
        self
    }

    /// Width of the rows `predict` accepts.
    pub fn input_dim(&self) -> usize {
        self.standardization.as_ref().map_or(self.weights.len(), |s| s.n_input)
    }

    pub fn decision(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: row.len(),
            });
        }
        let v = match &self.standardization {
            Some(s) => dot(&self.weights, &s.apply(row)),
            None => dot(&self.weights, row),
        } + self.bias;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("prediction"))
        }
    }

    pub fn predict<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.decision(r.as_ref())).collect()
    }
}

/// Primal weights `Σ coef_i x_i`.
pub(crate) fn primal_weights<R: AsRef<[f64]>>(rows: &[R], coef: &[f64], dim: usize) -> Vec<f64> {
    let mut w = alloc::vec![0.0; dim];
    for (r, &c) in rows.iter().zip(coef) {
        if c != 0.0 {
            crate::linalg::axpy(c, r.as_ref(), &mut w);
        }
    }
    w
}

pub(crate) fn check_targets<R>(rows: &[R], y: &[f64]) -> Result<()> {
    if rows.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("targets"));
    }
    Ok(())
}
