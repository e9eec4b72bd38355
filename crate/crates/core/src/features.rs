//! Dense per-image feature matrices and their pyramid layout.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

/// Bins of a 1x1 + 2x2 + 3x3 spatial pyramid.
pub const PYRAMID_BINS: u32 = 14;
/// Width of the second-to-last layer of the supported networks.
pub const PER_BIN_DIM: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayoutFactor {
    Architectures,
    Views,
    BinsPerView,
    PerBinDim,
    /// The dimension matches no single-factor change.
    Dimension,
}

impl fmt::Display for LayoutFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayoutFactor::Architectures => "n_architectures",
            LayoutFactor::Views => "views",
            LayoutFactor::BinsPerView => "bins_per_view",
            LayoutFactor::PerBinDim => "per_bin_dim",
            LayoutFactor::Dimension => "dim",
        })
    }
}

/// How a feature row is assembled: for each architecture, for each view
/// (original, then flipped), for each pyramid bin, a `per_bin_dim` vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureLayout {
    pub n_architectures: u32,
    pub views: u32,
    pub bins_per_view: u32,
    pub per_bin_dim: u32,
}

impl FeatureLayout {
    /// Pyramid features over the original and flipped image.
    pub const fn pyramid_flip(n_architectures: u32) -> Self {
        Self {
            n_architectures,
            views: 2,
            bins_per_view: PYRAMID_BINS,
            per_bin_dim: PER_BIN_DIM,
        }
    }

    /// One whole-window vector per row, as used for MIL instances.
    pub const fn single_window() -> Self {
        Self {
            n_architectures: 1,
            views: 1,
            bins_per_view: 1,
            per_bin_dim: PER_BIN_DIM,
        }
    }

    pub fn dim(&self) -> u64 {
        self.n_architectures as u64 * self.views as u64 * self.bins_per_view as u64 * self.per_bin_dim as u64
    }

    fn factors(&self) -> [(LayoutFactor, u32); 4] {
        [
            (LayoutFactor::Architectures, self.n_architectures),
            (LayoutFactor::Views, self.views),
            (LayoutFactor::BinsPerView, self.bins_per_view),
            (LayoutFactor::PerBinDim, self.per_bin_dim),
        ]
    }
}

/// Row-major `f32` features with one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    dim: usize,
    values: Vec<f32>,
    layout: Option<FeatureLayout>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, dim: usize, values: Vec<f32>, layout: Option<FeatureLayout>) -> Result<Self> {
        if values.len() != ids.len() * dim {
            return Err(Error::LengthMismatch {
                left: ids.len() * dim,
                right: values.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if let Some(l) = layout {
            if l.dim() != dim as u64 {
                return Err(Error::LayoutMismatch {
                    factor: LayoutFactor::Dimension,
                    expected: l.dim(),
                    found: format!("{dim}"),
                });
            }
        }
        Ok(Self {
            ids,
            dim,
            values,
            layout,
        })
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f32>], layout: Option<FeatureLayout>) -> Result<Self> {
        let dim = rows.first().map_or(layout.map_or(0, |l| l.dim() as usize), Vec::len);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(ids, dim, values, layout)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn layout(&self) -> Option<FeatureLayout> {
        self.layout
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Row widened to `f64`.
    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// All rows widened to `f64` and scaled to unit Euclidean norm.
    pub fn normalized_rows(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.n_rows()).map(|i| l2_normalize(&self.row_f64(i))).collect()
    }
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("feature vector"));
    }
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Err(Error::ZeroVector);
    }
    // Scaling by the max entry first keeps the squared sum in range.
    let norm = scale * libm::sqrt(v.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>());
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Checks a matrix against the layout a consumer expects.
///
/// A matrix carrying its own descriptor is compared field by field. Otherwise
/// the mismatching factor is inferred from the dimension alone, trying the
/// architecture count, then the view count (1 or 2), then the pyramid bin count
/// (1, 5 or 14), then the per-bin width.
pub fn validate_layout(matrix: &FeatureMatrix, expected: &FeatureLayout) -> Result<()> {
    if let Some(own) = matrix.layout() {
        for ((factor, want), (_, got)) in expected.factors().into_iter().zip(own.factors()) {
            if want != got {
                return Err(Error::LayoutMismatch {
                    factor,
                    expected: want as u64,
                    found: format!("{got}"),
                });
            }
        }
    }
    validate_dim(matrix.dim() as u64, expected)
}

pub fn validate_dim(dim: u64, expected: &FeatureLayout) -> Result<()> {
    let want = expected.dim();
    if dim == want {
        return Ok(());
    }
    let factors = expected.factors();
    let plausible = |factor: LayoutFactor, v: u64| match factor {
        LayoutFactor::Views => v == 1 || v == 2,
        LayoutFactor::BinsPerView => v == 1 || v == 5 || v == 14,
        _ => v >= 1,
    };
    for (factor, value) in factors {
        let others = want / value as u64;
        if others > 0 && dim.is_multiple_of(others) {
            let implied = dim / others;
            if implied != value as u64 && plausible(factor, implied) {
                return Err(Error::LayoutMismatch {
                    factor,
                    expected: value as u64,
                    found: format!("{implied} (dim {dim})"),
                });
            }
        }
    }
    Err(Error::LayoutMismatch {
        factor: LayoutFactor::Dimension,
        expected: want,
        found: format!("{dim}"),
    })
}
