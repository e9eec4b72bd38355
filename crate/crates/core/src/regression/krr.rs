//! Kernel ridge regression: `(K + λI) α = y − ȳ`, solved by Cholesky.

use alloc::vec::Vec;

use super::{check_targets, primal_weights, Hyperparameters, Kernel, ModelKind, RegressionModel, SolverSummary};
use crate::linalg::{gram, mat_vec, norm, row_dim, Cholesky};
use crate::{Error, Result};

const MAX_RELATIVE_RESIDUAL: f64 = 1e-8;
const REFINEMENT_STEPS: usize = 4;

pub fn krr_fit<R: AsRef<[f64]>>(rows: &[R], y: &[f64], lambda: f64) -> Result<RegressionModel> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::param("lambda", "must be positive and finite"));
    }
    let dim = row_dim(rows)?;
    check_targets(rows, y)?;
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();

    let mut a = gram(rows);
    for i in 0..n {
        a[i * n + i] += lambda;
    }
    let chol = Cholesky::factor(&a, n)?;
    let mut alpha = chol.solve(&yc);

    let y_norm = norm(&yc);
    let residual = |alpha: &[f64]| -> (Vec<f64>, f64) {
        let r: Vec<f64> = yc.iter().zip(mat_vec(&a, alpha)).map(|(b, ax)| b - ax).collect();
        let rel = if y_norm > 0.0 { norm(&r) / y_norm } else { norm(&r) };
        (r, rel)
    };
    let (mut r, mut rel) = residual(&alpha);
    let mut steps = 0;
    while rel > MAX_RELATIVE_RESIDUAL * 1e-2 && steps < REFINEMENT_STEPS {
        let delta = chol.solve(&r);
        let candidate: Vec<f64> = alpha.iter().zip(&delta).map(|(x, d)| x + d).collect();
        let (r2, rel2) = residual(&candidate);
        steps += 1;
        if rel2 >= rel {
            break;
        }
        (alpha, r, rel) = (candidate, r2, rel2);
    }
    if !(rel <= MAX_RELATIVE_RESIDUAL) {
        return Err(Error::NonConvergence {
            iterations: steps,
            violation: rel,
        });
    }

    let weights = primal_weights(rows, &alpha, dim);
    let fitted = mat_vec(&a, &alpha);
    let objective = 0.5 * alpha.iter().zip(&fitted).map(|(a, f)| a * f).sum::<f64>()
        - alpha.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>();
    Ok(RegressionModel {
        kind: ModelKind::Krr,
        kernel: Kernel::Linear,
        weights,
        bias: mean,
        dual: alpha,
        training_ids: Vec::new(),
        hyperparameters: Hyperparameters {
            lambda: Some(lambda),
            ..Default::default()
        },
        epsilon: None,
        l2_normalized: false,
        standardization: None,
        solver: SolverSummary {
            iterations: steps as u64,
            violation: rel,
            objective,
        },
    })
}
