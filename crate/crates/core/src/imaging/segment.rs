//! Graph-based image segmentation (Felzenszwalb and Huttenlocher, 2004).
//!
//! Pixels are nodes of an 8-connected grid graph weighted by the Euclidean
//! color distance of the Gaussian-smoothed image. Edges are visited in
//! non-decreasing weight order (ties by edge index) and two components merge
//! when the edge is no heavier than either component's internal difference
//! plus `k / |C|`. Components smaller than `min_size` are then merged into a
//! neighbor along the same edge order.

use alloc::vec;
use alloc::vec::Vec;

use super::RasterImage;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    pub k: f64,
    pub min_size: usize,
    pub sigma: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            k: 500.0,
            min_size: 20,
            sigma: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub width: usize,
    pub height: usize,
    /// Segment id per pixel, contiguous from zero in raster order of first
    /// appearance.
    pub labels: Vec<u32>,
    pub n_segments: usize,
    pub params: SegmentParams,
}

impl SegmentationResult {
    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_segments];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

struct DisjointSet {
    parent: Vec<u32>,
    rank: Vec<u8>,
    size: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    /// Joins two roots and returns the surviving root.
    fn join(&mut self, a: u32, b: u32) -> u32 {
        let (a, b) = (a as usize, b as usize);
        let (root, child) = if self.rank[a] >= self.rank[b] { (a, b) } else { (b, a) };
        if self.rank[a] == self.rank[b] {
            self.rank[root] += 1;
        }
        self.parent[child] = root as u32;
        self.size[root] += self.size[child];
        root as u32
    }

    fn size(&self, root: u32) -> usize {
        self.size[root as usize] as usize
    }
}

struct Edge {
    a: u32,
    b: u32,
    w: f64,
}

fn gaussian_mask(sigma: f64) -> Vec<f64> {
    let sigma = sigma.max(0.01);
    let len = libm::ceil(sigma * 4.0) as usize + 1;
    let mut mask: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / sigma;
            libm::exp(-0.5 * t * t)
        })
        .collect();
    let sum = 2.0 * mask.iter().sum::<f64>() - mask[0];
    for m in &mut mask {
        *m /= sum;
    }
    mask
}

/// Separable symmetric convolution with clamped borders, per channel plane.
fn smooth(plane: &[f64], width: usize, height: usize, mask: &[f64]) -> Vec<f64> {
    let conv1d = |src: &[f64], dst: &mut [f64], n: usize, stride: usize, lines: usize, line_stride: usize| {
        for line in 0..lines {
            let base = line * line_stride;
            for i in 0..n {
                let mut acc = mask[0] * src[base + i * stride];
                for (j, &m) in mask.iter().enumerate().skip(1) {
                    let lo = i.saturating_sub(j);
                    let hi = (i + j).min(n - 1);
                    acc += m * (src[base + lo * stride] + src[base + hi * stride]);
                }
                dst[base + i * stride] = acc;
            }
        }
    };
    let mut tmp = vec![0.0; plane.len()];
    conv1d(plane, &mut tmp, width, 1, height, width);
    let mut out = vec![0.0; plane.len()];
    conv1d(&tmp, &mut out, height, width, width, 1);
    out
}

pub fn segment(image: &RasterImage, params: &SegmentParams) -> Result<SegmentationResult> {
    if !(params.k > 0.0) {
        return Err(Error::param("k", "must be positive"));
    }
    if params.min_size < 1 {
        return Err(Error::param("min_size", "must be at least 1"));
    }
    if !(params.sigma >= 0.0) {
        return Err(Error::param("sigma", "must be non-negative"));
    }
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    let n = w * h;

    let mask = (params.sigma > 0.0).then(|| gaussian_mask(params.sigma));
    let planes: Vec<Vec<f64>> = (0..ch)
        .map(|c| {
            let plane: Vec<f64> = (0..n).map(|i| f64::from(image.data()[i * ch + c])).collect();
            match &mask {
                Some(m) => smooth(&plane, w, h, m),
                None => plane,
            }
        })
        .collect();
    let dist = |p: usize, q: usize| -> f64 {
        libm::sqrt(planes.iter().map(|pl| (pl[p] - pl[q]) * (pl[p] - pl[q])).sum::<f64>())
    };

    let mut edges = Vec::with_capacity(4 * n);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let mut push = |q: usize| {
                edges.push(Edge {
                    a: p as u32,
                    b: q as u32,
                    w: dist(p, q),
                })
            };
            if x + 1 < w {
                push(p + 1);
            }
            if y + 1 < h {
                push(p + w);
            }
            if x + 1 < w && y + 1 < h {
                push(p + w + 1);
            }
            if x + 1 < w && y > 0 {
                push(p - w + 1);
            }
        }
    }
    // Stable: equal weights keep edge-index order.
    edges.sort_by(|e, f| e.w.total_cmp(&f.w));

    let mut sets = DisjointSet::new(n);
    let mut threshold = vec![params.k; n];
    for e in &edges {
        let a = sets.find(e.a);
        let b = sets.find(e.b);
        if a != b && e.w <= threshold[a as usize] && e.w <= threshold[b as usize] {
            let root = sets.join(a, b);
            threshold[root as usize] = e.w + params.k / sets.size(root) as f64;
        }
    }
    for e in &edges {
        let a = sets.find(e.a);
        let b = sets.find(e.b);
        if a != b && (sets.size(a) < params.min_size || sets.size(b) < params.min_size) {
            sets.join(a, b);
        }
    }

    let mut root_label = vec![u32::MAX; n];
    let mut labels = Vec::with_capacity(n);
    let mut next = 0u32;
    for p in 0..n {
        let r = sets.find(p as u32) as usize;
        if root_label[r] == u32::MAX {
            root_label[r] = next;
            next += 1;
        }
        labels.push(root_label[r]);
    }
    Ok(SegmentationResult {
        width: w,
        height: h,
        labels,
        n_segments: next as usize,
        params: *params,
    })
}
