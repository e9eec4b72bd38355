//! Combining several per-image score columns into one predictor.

use alloc::format;
use alloc::vec::Vec;

use super::{nu_svr_fit, NuSvrParams, RegressionModel, Standardization};
use crate::metrics::{mean, sample_std};
use crate::{Diagnostic, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CombineParams {
    pub svr: NuSvrParams,
}

/// Standardizes each named column, drops constant ones with a diagnostic and
/// fits ν-SVR on what remains. The model takes raw column values.
pub fn combine_predictors(
    columns: &[(&str, &[f64])],
    targets: &[f64],
    params: &CombineParams,
) -> Result<(RegressionModel, Vec<Diagnostic>)> {
    if columns.len() < 2 {
        return Err(Error::NotEnoughItems {
            needed: 2,
            available: columns.len(),
        });
    }
    let n = targets.len();
    for (_, col) in columns {
        if col.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: col.len(),
            });
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("score column"));
        }
    }
    let mut diagnostics = Vec::new();
    let mut std = Standardization {
        n_input: columns.len(),
        kept: Vec::new(),
        means: Vec::new(),
        scales: Vec::new(),
    };
    for (i, (name, col)) in columns.iter().enumerate() {
        let s = sample_std(col);
        if !(s > 0.0) {
            diagnostics.push(Diagnostic::new(name, "constant column dropped"));
            continue;
        }
        std.kept.push(i);
        std.means.push(mean(col).unwrap_or(0.0));
        std.scales.push(s);
    }
    if std.kept.is_empty() {
        return Err(Error::InvalidConfig(format!("all {} score columns are constant", columns.len())));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            std.kept
                .iter()
                .zip(std.means.iter().zip(&std.scales))
                .map(|(&c, (m, s))| (columns[c].1[r] - m) / s)
                .collect()
        })
        .collect();
    let mut model = nu_svr_fit(&rows, targets, &params.svr)?;
    model.standardization = Some(std);
    Ok((model, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::kendall_tau;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = a.iter().zip(&b).map(|(a, b)| 0.3 * a + b + rng.random_range(-0.5..0.5)).collect();
        (a, b, y)
    }

    fn tau_of(model: &RegressionModel, cols: &[&[f64]], y: &[f64]) -> f64 {
        let rows: Vec<Vec<f64>> = (0..y.len()).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
        kendall_tau(&model.predict(&rows).unwrap(), y).unwrap().tau
    }

    #[test]
    fn duplicated_column_changes_nothing_about_ranking() {
        let (a, _, y) = fixture(1, 60);
        let (zero, _) = combine_predictors(&[("a", &a), ("flat", &[1.0; 60])], &y, &CombineParams::default()).unwrap();
        let (twice, _) = combine_predictors(&[("a", &a), ("a2", &a)], &y, &CombineParams::default()).unwrap();
        let single_tau = tau_of(&zero, &[&a, &[1.0; 60]], &y);
        let twin_tau = tau_of(&twice, &[&a, &a], &y);
        assert_eq!(single_tau, twin_tau);
        assert_eq!(single_tau, kendall_tau(&a, &y).unwrap().tau);
    }

    #[test]
    fn constant_columns_are_dropped_with_a_note() {
        let (a, b, y) = fixture(2, 40);
        let (m, diags) =
            combine_predictors(&[("a", &a), ("k", &[2.0; 40]), ("b", &b)], &y, &CombineParams::default()).unwrap();
        assert_eq!(diags, vec![Diagnostic::new("k", "constant column dropped")]);
        assert_eq!(m.standardization.as_ref().unwrap().kept, vec![0, 2]);
        assert_eq!(m.input_dim(), 3);
    }

    #[test]
    fn combination_beats_either_column() {
        let (a, b, y) = fixture(3, 120);
        let (m, _) = combine_predictors(&[("a", &a), ("b", &b)], &y, &CombineParams::default()).unwrap();
        let both = tau_of(&m, &[&a, &b], &y);
        assert!(both > kendall_tau(&a, &y).unwrap().tau);
        assert!(both > kendall_tau(&b, &y).unwrap().tau);
    }

    #[test]
    fn needs_two_columns() {
        assert!(combine_predictors(&[("a", &[1.0, 2.0])], &[1.0, 2.0], &CombineParams::default()).is_err());
    }
}
