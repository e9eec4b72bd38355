//! ν-support vector regression by sequential two-variable optimization.
//!
//! The dual is written over `β = (α, α*)` of length `2ℓ`:
//!
//! ```text
//! min  ½ (α − α*)ᵀ K (α − α*) − yᵀ (α − α*)
//! s.t. 0 ≤ α_i, α*_i ≤ C,   Σ α_i = Σ α*_i = C ν ℓ / 2
//! ```
//!
//! Splitting `Σ(α + α*) = Cνℓ` evenly between the two blocks encodes the
//! `Σ(α − α*) = 0` constraint as well, so each block keeps its own sum and a
//! working pair always comes from one block. The pair is the maximal violating
//! one: within the block, the variable that can still grow with the smallest
//! gradient and the variable that can still shrink with the largest.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_targets, primal_weights, Hyperparameters, Kernel, ModelKind, RegressionModel, SolverSummary};
use crate::linalg::{gram, row_dim};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuSvrParams {
    pub c: f64,
    pub nu: f64,
    /// Stop once the largest KKT violation is at most this.
    pub tol: f64,
    pub max_updates: u64,
}

impl Default for NuSvrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            nu: 0.5,
            tol: 1e-3,
            max_updates: 10_000_000,
        }
    }
}

impl NuSvrParams {
    pub fn new(c: f64, nu: f64) -> Self {
        Self {
            c,
            nu,
            ..Default::default()
        }
    }
}

/// Curvature floor for pairs of identical rows.
const TAU: f64 = 1e-12;

struct Pair {
    grow: usize,
    shrink: usize,
    violation: f64,
}

fn block_pair(beta: &[f64], grad: &[f64], range: core::ops::Range<usize>, c: f64) -> Option<Pair> {
    let mut grow: Option<usize> = None;
    let mut shrink: Option<usize> = None;
    for t in range {
        if beta[t] < c && grow.is_none_or(|g| grad[t] < grad[g]) {
            grow = Some(t);
        }
        if beta[t] > 0.0 && shrink.is_none_or(|s| grad[t] > grad[s]) {
            shrink = Some(t);
        }
    }
    let (grow, shrink) = (grow?, shrink?);
    Some(Pair {
        grow,
        shrink,
        violation: grad[shrink] - grad[grow],
    })
}

/// Multiplier of one block's sum constraint: the mean gradient of its free
/// variables, or the midpoint of the bounds the bounded ones impose.
fn block_multiplier(beta: &[f64], grad: &[f64], range: core::ops::Range<usize>, c: f64) -> f64 {
    let (mut lb, mut ub) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in range {
        if beta[t] >= c {
            lb = lb.max(grad[t]);
        } else if beta[t] <= 0.0 {
            ub = ub.min(grad[t]);
        } else {
            n_free += 1;
            sum_free += grad[t];
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (lb + ub)
    }
}

pub fn nu_svr_fit<R: AsRef<[f64]>>(rows: &[R], y: &[f64], params: &NuSvrParams) -> Result<RegressionModel> {
    let NuSvrParams { c, nu, tol, max_updates } = *params;
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::param("c", "must be positive and finite"));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::param("nu", "must lie in (0, 1]"));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let dim = row_dim(rows)?;
    check_targets(rows, y)?;
    let n = y.len();
    let k = gram(rows);

    let mut beta = vec![0.0; 2 * n];
    let mut remaining = c * nu * n as f64 / 2.0;
    for i in 0..n {
        let v = remaining.min(c);
        beta[i] = v;
        beta[n + i] = v;
        remaining -= v;
    }
    // f = K(α − α*) is zero at the start, so the gradients are ∓y.
    let mut grad: Vec<f64> = y.iter().map(|v| -v).chain(y.iter().copied()).collect();

    let mut updates = 0u64;
    let violation = loop {
        let best = [block_pair(&beta, &grad, 0..n, c), block_pair(&beta, &grad, n..2 * n, c)]
            .into_iter()
            .flatten()
            .reduce(|a, b| if b.violation > a.violation { b } else { a });
        let Some(pair) = best else { break 0.0 };
        if pair.violation <= tol {
            break pair.violation.max(0.0);
        }
        if updates >= max_updates {
            return Err(Error::NonConvergence {
                iterations: updates as usize,
                violation: pair.violation,
            });
        }
        let (gi, si) = (pair.grow % n, pair.shrink % n);
        let curvature = (k[gi * n + gi] + k[si * n + si] - 2.0 * k[gi * n + si]).max(TAU);
        let step = (pair.violation / curvature).min(c - beta[pair.grow]).min(beta[pair.shrink]);
        beta[pair.grow] += step;
        beta[pair.shrink] -= step;
        // Moving α up (or α* down) shifts f by ±step (K_·g − K_·s).
        let sign = if pair.grow < n { step } else { -step };
        for u in 0..n {
            let df = sign * (k[u * n + gi] - k[u * n + si]);
            grad[u] += df;
            grad[n + u] -= df;
        }
        updates += 1;
    };

    let r1 = block_multiplier(&beta, &grad, 0..n, c);
    let r2 = block_multiplier(&beta, &grad, n..2 * n, c);
    let dual: Vec<f64> = (0..n).map(|i| beta[i] - beta[n + i]).collect();
    let fitted: Vec<f64> = (0..n).map(|i| grad[i] + y[i]).collect();
    let objective = dual
        .iter()
        .zip(&fitted)
        .zip(y)
        .map(|((d, f), y)| 0.5 * d * f - y * d)
        .sum::<f64>();
    Ok(RegressionModel {
        kind: ModelKind::NuSvr,
        kernel: Kernel::Linear,
        weights: primal_weights(rows, &dual, dim),
        bias: -(r1 - r2) / 2.0,
        dual,
        training_ids: Vec::new(),
        hyperparameters: Hyperparameters {
            c: Some(c),
            nu: Some(nu),
            ..Default::default()
        },
        epsilon: Some(-(r1 + r2) / 2.0),
        l2_normalized: false,
        standardization: None,
        solver: SolverSummary {
            iterations: updates,
            violation,
            objective,
        },
    })
}
