//! Hinge-loss linear SVM by dual coordinate descent.
//!
//! The bias is learned as the weight of a constant feature equal to one, so
//! the dual has box constraints only and every coordinate step is exact.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Hyperparameters, Kernel, ModelKind, RegressionModel, SolverSummary};
use crate::linalg::{axpy, dot, row_dim};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvcParams {
    pub c: f64,
    /// Stop once the largest projected-gradient magnitude seen in an epoch is
    /// at most this.
    pub tol: f64,
    pub max_epochs: usize,
    /// Seeds the per-epoch visiting order.
    pub seed: u64,
}

impl Default for SvcParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_epochs: 10_000,
            seed: 0,
        }
    }
}

/// Fits on `labels[i] = true` for the positive class. `solver.objective`
/// holds the final dual objective; the per-epoch history is returned too.
pub fn linear_svc_fit<R: AsRef<[f64]>>(rows: &[R], labels: &[bool], params: &SvcParams) -> Result<RegressionModel> {
    linear_svc_fit_traced(rows, labels, params).map(|(m, _)| m)
}

pub(crate) fn linear_svc_fit_traced<R: AsRef<[f64]>>(
    rows: &[R],
    labels: &[bool],
    params: &SvcParams,
) -> Result<(RegressionModel, Vec<f64>)> {
    let SvcParams { c, tol, max_epochs, seed } = *params;
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::param("c", "must be positive and finite"));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let dim = row_dim(rows)?;
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: labels.len(),
        });
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::SingleClass);
    }
    let n = rows.len();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let q_diag: Vec<f64> = rows.iter().map(|r| dot(r.as_ref(), r.as_ref()) + 1.0).collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = Vec::new();
    let dual_objective = |w: &[f64], b: f64, alpha: &[f64]| 0.5 * (dot(w, w) + b * b) - alpha.iter().sum::<f64>();

    let mut epochs = 0;
    let violation = loop {
        if epochs == max_epochs {
            let v = max_violation(rows, &y, &alpha, &w, b, c);
            return Err(Error::NonConvergence {
                iterations: epochs,
                violation: v,
            });
        }
        order.shuffle(&mut rng);
        let mut worst = 0.0f64;
        for &i in &order {
            let x = rows[i].as_ref();
            let g = y[i] * (dot(&w, x) + b) - 1.0;
            let pg = projected(g, alpha[i], c);
            worst = worst.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q_diag[i]).clamp(0.0, c);
                let delta = (alpha[i] - old) * y[i];
                axpy(delta, x, &mut w);
                b += delta;
            }
        }
        epochs += 1;
        history.push(dual_objective(&w, b, &alpha));
        if worst <= tol {
            break worst;
        }
    };

    let dual: Vec<f64> = alpha.iter().zip(&y).map(|(a, y)| a * y).collect();
    let model = RegressionModel {
        kind: ModelKind::LinearSvc,
        kernel: Kernel::Linear,
        weights: w,
        bias: b,
        dual,
        training_ids: Vec::new(),
        hyperparameters: Hyperparameters {
            c: Some(c),
            ..Default::default()
        },
        epsilon: None,
        l2_normalized: false,
        standardization: None,
        solver: SolverSummary {
            iterations: epochs as u64,
            violation,
            objective: *history.last().unwrap_or(&0.0),
        },
    };
    Ok((model, history))
}

#[inline]
fn projected(g: f64, alpha: f64, c: f64) -> f64 {
    if alpha <= 0.0 {
        g.min(0.0)
    } else if alpha >= c {
        g.max(0.0)
    } else {
        g
    }
}

fn max_violation<R: AsRef<[f64]>>(rows: &[R], y: &[f64], alpha: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    rows.iter()
        .zip(y.iter().zip(alpha))
        .map(|(r, (y, a))| projected(y * (dot(w, r.as_ref()) + b) - 1.0, *a, c).abs())
        .fold(0.0, f64::max)
}
