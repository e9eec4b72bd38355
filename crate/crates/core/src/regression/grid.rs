//! Hyperparameter selection on a held-out validation split.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use super::{krr_fit, nu_svr_fit, NuSvrParams, RegressionModel};
use crate::metrics::{kendall_tau, mse};
use crate::{Error, Result};

/// Borrowed rows with ids and targets.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub ids: &'a [String],
    pub rows: &'a [Vec<f64>],
    pub targets: &'a [f64],
}

impl Dataset<'_> {
    fn check(&self) -> Result<()> {
        if self.ids.len() != self.rows.len() || self.rows.len() != self.targets.len() {
            return Err(Error::LengthMismatch {
                left: self.ids.len(),
                right: self.rows.len().min(self.targets.len()),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Krr { lambdas: Vec<f64> },
    NuSvr { cs: Vec<f64>, nus: Vec<f64> },
}

impl Grid {
    /// λ from 1e-4 to 1e2 in decades.
    pub fn default_krr() -> Self {
        Grid::Krr {
            lambdas: (-4..=2).map(|e| libm::pow(10.0, f64::from(e))).collect(),
        }
    }

    /// C from 2^-6 to 2^6 in steps of four, crossed with five ν values.
    pub fn default_nu_svr() -> Self {
        Grid::NuSvr {
            cs: (-3..=3).map(|e| libm::pow(2.0, f64::from(2 * e))).collect(),
            nus: alloc::vec![0.2, 0.4, 0.5, 0.6, 0.8],
        }
    }

    pub fn points(&self) -> Vec<GridPoint> {
        match self {
            Grid::Krr { lambdas } => lambdas.iter().map(|&l| GridPoint::Krr { lambda: l }).collect(),
            Grid::NuSvr { cs, nus } => cs
                .iter()
                .flat_map(|&c| nus.iter().map(move |&nu| GridPoint::NuSvr { c, nu }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridPoint {
    Krr { lambda: f64 },
    NuSvr { c: f64, nu: f64 },
}

impl GridPoint {
    pub fn fit(&self, rows: &[Vec<f64>], targets: &[f64], tol: f64) -> Result<RegressionModel> {
        match *self {
            GridPoint::Krr { lambda } => krr_fit(rows, targets, lambda),
            GridPoint::NuSvr { c, nu } => nu_svr_fit(
                rows,
                targets,
                &NuSvrParams {
                    tol,
                    ..NuSvrParams::new(c, nu)
                },
            ),
        }
    }

    fn c(&self) -> f64 {
        match *self {
            GridPoint::NuSvr { c, .. } => c,
            GridPoint::Krr { .. } => 0.0,
        }
    }

    fn lambda(&self) -> f64 {
        match *self {
            GridPoint::Krr { lambda } => lambda,
            GridPoint::NuSvr { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointResult {
    pub point: GridPoint,
    pub tau: Option<f64>,
    pub mse: Option<f64>,
    /// Why the point has no score, if it failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub points: Vec<GridPointResult>,
    pub selected: usize,
    pub seed: u64,
}

impl GridSearchReport {
    pub fn selected_point(&self) -> &GridPointResult {
        &self.points[self.selected]
    }
}

pub fn check_disjoint(train: &Dataset<'_>, val: &Dataset<'_>) -> Result<()> {
    train.check()?;
    val.check()?;
    let ids: BTreeSet<&str> = train.ids.iter().map(String::as_str).collect();
    match val.ids.iter().find(|id| ids.contains(id.as_str())) {
        Some(id) => Err(Error::OverlappingSplits(id.clone())),
        None => Ok(()),
    }
}

/// Fits one grid point on `train` and scores it on `val`. A failed fit or an
/// undefined τ is recorded, not raised.
pub fn evaluate_point(train: &Dataset<'_>, val: &Dataset<'_>, point: GridPoint, tol: f64) -> GridPointResult {
    let scored = point
        .fit(train.rows, train.targets, tol)
        .and_then(|m| m.predict(val.rows))
        .and_then(|pred| {
            let err = mse(&pred, val.targets)?;
            let tau = kendall_tau(&pred, val.targets).map(|s| s.tau).ok();
            Ok((tau, err))
        });
    match scored {
        Ok((tau, err)) => GridPointResult {
            point,
            tau,
            mse: Some(err),
            error: None,
        },
        Err(e) => GridPointResult {
            point,
            tau: None,
            mse: None,
            error: Some(e.to_string()),
        },
    }
}

/// Highest validation τ; ties go to the smaller C, then the larger λ, then
/// the earlier grid point. Points without a τ rank last.
pub fn select_best(results: &[GridPointResult]) -> Option<usize> {
    let better = |a: &GridPointResult, b: &GridPointResult| -> Ordering {
        let ta = a.tau.unwrap_or(f64::NEG_INFINITY);
        let tb = b.tau.unwrap_or(f64::NEG_INFINITY);
        ta.total_cmp(&tb)
            .then(b.point.c().total_cmp(&a.point.c()))
            .then(a.point.lambda().total_cmp(&b.point.lambda()))
    };
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if best.is_none_or(|b| better(r, &results[b]) == Ordering::Greater) {
            best = Some(i);
        }
    }
    best
}

/// Sequential grid search. Returns the report and the selected model refit on
/// `train`.
pub fn grid_search(
    train: &Dataset<'_>,
    val: &Dataset<'_>,
    grid: &Grid,
    tol: f64,
    seed: u64,
) -> Result<(GridSearchReport, RegressionModel)> {
    check_disjoint(train, val)?;
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::Empty("grid"));
    }
    let results: Vec<GridPointResult> = points
        .into_iter()
        .map(|p| evaluate_point(train, val, p, tol))
        .collect();
    finish(train, results, tol, seed)
}

/// Picks the winner among already evaluated points and refits it.
pub fn finish(
    train: &Dataset<'_>,
    results: Vec<GridPointResult>,
    tol: f64,
    seed: u64,
) -> Result<(GridSearchReport, RegressionModel)> {
    let selected = select_best(&results).ok_or(Error::Empty("grid"))?;
    let model = results[selected]
        .point
        .fit(train.rows, train.targets, tol)?
        .with_training_ids(train.ids.to_vec());
    Ok((
        GridSearchReport {
            points: results,
            selected,
            seed,
        },
        model,
    ))
}
