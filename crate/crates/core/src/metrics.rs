//! Rank correlation, regression error, retrieval and localization metrics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::{Diagnostic, Error, Result};

/// Pair counts behind a Kendall rank correlation.
///
/// `n_ties_a` and `n_ties_b` count every pair tied in the respective argument,
/// so a pair tied in both is included in each of them and in `n_ties_both`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedPairSummary {
    pub n_pairs: u64,
    pub n_concordant: u64,
    pub n_discordant: u64,
    pub n_ties_a: u64,
    pub n_ties_b: u64,
    pub n_ties_both: u64,
    /// Tie-corrected tau-b.
    pub tau: f64,
}

impl RankedPairSummary {
    /// Builds the summary from raw pair counts and computes tau-b.
    pub fn from_counts(
        n: usize,
        n_discordant: u64,
        n_ties_a: u64,
        n_ties_b: u64,
        n_ties_both: u64,
    ) -> Result<Self> {
        let n = n as u64;
        let n_pairs = n * (n - 1) / 2;
        let untied = n_pairs + n_ties_both - n_ties_a - n_ties_b;
        let n_concordant = untied - n_discordant;
        if n_ties_a == n_pairs || n_ties_b == n_pairs {
            return Err(Error::AllTied);
        }
        // One square root of the product keeps tau exactly 1 for identical rankings.
        let denom = libm::sqrt((n_pairs - n_ties_a) as f64 * (n_pairs - n_ties_b) as f64);
        let tau = (n_concordant as f64 - n_discordant as f64) / denom;
        Ok(Self {
            n_pairs,
            n_concordant,
            n_discordant,
            n_ties_a,
            n_ties_b,
            n_ties_both,
            tau: tau.clamp(-1.0, 1.0),
        })
    }
}

fn check_pairable(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::NotEnoughItems {
            needed: 2,
            available: a.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rank correlation input"));
    }
    Ok(())
}

fn tie_pairs(run: u64) -> u64 {
    run * (run - 1) / 2
}

/// Kendall's tau-b in O(n log n).
///
/// Items are sorted by `(a, b)`; a bottom-up merge sort on `b` then counts
/// exchanges, each of which is exactly one discordant pair.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<RankedPairSummary> {
    check_pairable(a, b)?;
    let n = a.len();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[i].partial_cmp(&a[j])
            .unwrap_or(Ordering::Equal)
            .then(b[i].partial_cmp(&b[j]).unwrap_or(Ordering::Equal))
    });

    let mut ties_a = 0u64;
    let mut ties_both = 0u64;
    let mut run_a = 1u64;
    let mut run_both = 1u64;
    for w in order.windows(2) {
        let (p, q) = (w[0], w[1]);
        if a[p] == a[q] {
            run_a += 1;
            if b[p] == b[q] {
                run_both += 1;
            } else {
                ties_both += tie_pairs(run_both);
                run_both = 1;
            }
        } else {
            ties_a += tie_pairs(run_a);
            ties_both += tie_pairs(run_both);
            run_a = 1;
            run_both = 1;
        }
    }
    ties_a += tie_pairs(run_a);
    ties_both += tie_pairs(run_both);

    let mut ys: Vec<f64> = order.iter().map(|&i| b[i]).collect();
    let mut buf = vec![0.0; n];
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut out) = (start, mid, start);
            while i < mid && j < end {
                if ys[i] <= ys[j] {
                    buf[out] = ys[i];
                    i += 1;
                } else {
                    buf[out] = ys[j];
                    j += 1;
                    swaps += (mid - i) as u64;
                }
                out += 1;
            }
            buf[out..out + (mid - i)].copy_from_slice(&ys[i..mid]);
            out += mid - i;
            buf[out..out + (end - j)].copy_from_slice(&ys[j..end]);
            start = end;
        }
        core::mem::swap(&mut ys, &mut buf);
        width *= 2;
    }

    let mut ties_b = 0u64;
    let mut run_b = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_b += 1;
        } else {
            ties_b += tie_pairs(run_b);
            run_b = 1;
        }
    }
    ties_b += tie_pairs(run_b);

    RankedPairSummary::from_counts(n, swaps, ties_a, ties_b, ties_both)
}

/// Fraction of pairs ranked consistently, treating ties as absent.
pub fn pair_accuracy(tau: f64) -> f64 {
    (tau + 1.0) / 2.0
}

pub fn mse(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("mse input"));
    }
    let sum: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g) * (p - g)).sum();
    Ok(sum / pred.len() as f64)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (n-1 denominator); zero for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    libm::sqrt(ss / (values.len() - 1) as f64)
}

/// Non-interpolated average precision: the mean, over positives, of the
/// precision at each positive's rank. Ranking is by descending score with ties
/// kept in input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("average precision scores"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap_or(Ordering::Equal));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        if labels[idx] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

/// Mean of per-class average precisions.
pub fn mean_average_precision(per_class: &[f64]) -> Result<f64> {
    mean(per_class).ok_or(Error::Empty("per-class average precisions"))
}

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        if ![xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("box coordinates"));
        }
        if xmax <= xmin || ymax <= ymin {
            return Err(Error::param("box", "xmax > xmin and ymax > ymin required"));
        }
        Ok(Self {
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.xmax.min(b.xmax) - a.xmin.max(b.xmin);
    let ih = a.ymax.min(b.ymax) - a.ymin.max(b.ymin);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Minimum overlap, exclusive, for a selected window to count as a correct
/// localization.
pub const CORLOC_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct CorLocReport {
    pub corloc: f64,
    pub n_images: usize,
    pub n_correct: usize,
    pub diagnostics: Vec<Diagnostic>,
}

/// Fraction of ground-truth images whose selected window overlaps one of the
/// image's target boxes with IoU above [`CORLOC_IOU`]. Images without a
/// selection count as failures.
pub fn corloc(
    selected: &BTreeMap<String, BBox>,
    ground_truth: &BTreeMap<String, Vec<BBox>>,
) -> Result<CorLocReport> {
    if ground_truth.is_empty() {
        return Err(Error::Empty("ground-truth images"));
    }
    let mut diagnostics = Vec::new();
    let mut n_correct = 0;
    for (image, boxes) in ground_truth {
        match selected.get(image) {
            Some(sel) => {
                if boxes.iter().any(|gt| iou(sel, gt) > CORLOC_IOU) {
                    n_correct += 1;
                }
            }
            None => diagnostics.push(Diagnostic::new(image, "no window selected; counted as failure")),
        }
    }
    Ok(CorLocReport {
        corloc: n_correct as f64 / ground_truth.len() as f64,
        n_images: ground_truth.len(),
        n_correct,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementSummary {
    pub taus: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// One-versus-all human agreement: each annotator's times against the mean
/// time of all annotators (including themselves) over a common image set.
pub fn one_vs_all_agreement(times: &[Vec<f64>]) -> Result<AgreementSummary> {
    if times.len() < 2 {
        return Err(Error::NotEnoughItems {
            needed: 2,
            available: times.len(),
        });
    }
    let n_images = times[0].len();
    for t in times {
        if t.len() != n_images {
            return Err(Error::LengthMismatch {
                left: n_images,
                right: t.len(),
            });
        }
    }
    let mut mean_time = vec![0.0; n_images];
    for t in times {
        for (m, v) in mean_time.iter_mut().zip(t) {
            *m += v;
        }
    }
    for m in &mut mean_time {
        *m /= times.len() as f64;
    }
    let taus = times
        .iter()
        .map(|t| kendall_tau(t, &mean_time).map(|s| s.tau))
        .collect::<Result<Vec<_>>>()?;
    let mean = mean(&taus).unwrap_or(0.0);
    Ok(AgreementSummary {
        std: sample_std(&taus),
        min: taus.iter().copied().fold(f64::INFINITY, f64::min),
        max: taus.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        taus,
    })
}
