//! The VSDF binary feature file.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic     b"VSDF"
//! version   u16          currently 1
//! flags     u16          bit 0: layout descriptor is meaningful
//! n_rows    u64
//! dim       u64
//! layout    4 x u32      n_architectures, views, bins_per_view, per_bin_dim
//! ids       n_rows x (u32 byte length, UTF-8 bytes)
//! payload   n_rows x dim x f32, row-major
//! ```
//!
//! A sidecar TOML manifest describes how the features were extracted.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use vsd_core::features::{FeatureLayout, FeatureMatrix};

use crate::error::{Error, FeatureFileError, Result};

pub const MAGIC: [u8; 4] = *b"VSDF";
pub const VERSION: u16 = 1;
pub const FLAG_LAYOUT: u16 = 1;

const HEADER_LEN: u64 = 4 + 2 + 2 + 8 + 8 + 16;
const CHUNK: usize = 1 << 16;

pub fn write_features<W: Write>(matrix: &FeatureMatrix, mut w: W) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let (flags, layout) = match matrix.layout() {
        Some(l) => (FLAG_LAYOUT, [l.n_architectures, l.views, l.bins_per_view, l.per_bin_dim]),
        None => (0, [0; 4]),
    };
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(matrix.n_rows() as u64).to_le_bytes())?;
    w.write_all(&(matrix.dim() as u64).to_le_bytes())?;
    for v in layout {
        w.write_all(&v.to_le_bytes())?;
    }
    for id in matrix.ids() {
        let len = u32::try_from(id.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "id too long"))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(id.as_bytes())?;
    }
    let mut buf = Vec::with_capacity(CHUNK * 4);
    for chunk in matrix.values().chunks(CHUNK) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

/// Tracks how many bytes were consumed so truncation can be reported exactly.
struct Counted<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Counted<R> {
    /// Fills `buf`; `expected` is the total file length implied so far.
    fn fill(&mut self, buf: &mut [u8], expected: u64) -> Result<(), FeatureFileError> {
        let mut got = 0;
        while got < buf.len() {
            match self.inner.read(&mut buf[got..]) {
                Ok(0) => {
                    return Err(FeatureFileError::Truncated {
                        expected,
                        actual: self.pos + got as u64,
                    })
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.pos += got as u64;
        Ok(())
    }

    fn array<const N: usize>(&mut self, expected: u64) -> Result<[u8; N], FeatureFileError> {
        let mut b = [0u8; N];
        self.fill(&mut b, expected)?;
        Ok(b)
    }
}

pub fn read_features<R: Read>(r: R) -> Result<FeatureMatrix, FeatureFileError> {
    let mut r = Counted { inner: r, pos: 0 };
    let magic: [u8; 4] = r.array(HEADER_LEN)?;
    if magic != MAGIC {
        return Err(FeatureFileError::BadMagic { found: magic });
    }
    let version = u16::from_le_bytes(r.array(HEADER_LEN)?);
    if version != VERSION {
        return Err(FeatureFileError::UnsupportedVersion(version));
    }
    let flags = u16::from_le_bytes(r.array(HEADER_LEN)?);
    if flags & !FLAG_LAYOUT != 0 {
        return Err(FeatureFileError::UnknownFlags(flags));
    }
    let n_rows = u64::from_le_bytes(r.array(HEADER_LEN)?);
    let dim = u64::from_le_bytes(r.array(HEADER_LEN)?);
    let mut layout = [0u32; 4];
    for v in &mut layout {
        *v = u32::from_le_bytes(r.array(HEADER_LEN)?);
    }
    let n_values = n_rows
        .checked_mul(dim)
        .filter(|n| n.checked_mul(4).is_some() && usize::try_from(*n).is_ok())
        .ok_or(FeatureFileError::TooLarge { n_rows, dim })?;
    let payload_len = n_values * 4;

    // Every id needs at least its length prefix, so a bogus row count is caught
    // as truncation before anything large is allocated.
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut expected = r.pos.saturating_add(n_rows.saturating_mul(4)).saturating_add(payload_len);
    for index in 0..n_rows {
        let len = u32::from_le_bytes(r.array(expected)?) as u64;
        expected = expected.saturating_add(len);
        let mut bytes = vec![0u8; len as usize];
        r.fill(&mut bytes, expected)?;
        let id = String::from_utf8(bytes).map_err(|_| FeatureFileError::InvalidId { index })?;
        if !seen.insert(id.clone()) {
            return Err(FeatureFileError::DuplicateId(id));
        }
        ids.push(id);
    }

    let mut values = Vec::with_capacity(n_values as usize);
    let mut buf = vec![0u8; CHUNK * 4];
    let mut left = payload_len as usize;
    while left > 0 {
        let take = left.min(buf.len());
        r.fill(&mut buf[..take], expected)?;
        values.extend(buf[..take].chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
        left -= take;
    }
    let mut extra = 0u64;
    loop {
        match r.inner.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => extra += n as u64,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if extra > 0 {
        return Err(FeatureFileError::TrailingBytes { extra });
    }

    let layout = (flags & FLAG_LAYOUT != 0).then(|| FeatureLayout {
        n_architectures: layout[0],
        views: layout[1],
        bins_per_view: layout[2],
        per_bin_dim: layout[3],
    });
    FeatureMatrix::new(ids, dim as usize, values, layout).map_err(FeatureFileError::Layout)
}

pub fn write_features_path(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_features(matrix, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn read_features_path(path: &Path) -> Result<FeatureMatrix> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(BufReader::new(f)).map_err(|source| Error::FeatureFile {
        path: path.into(),
        source,
    })
}

/// Sidecar describing how a feature file was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub extractor: String,
    /// Pyramid levels, e.g. `[1, 2, 3]` for 1x1, 2x2 and 3x3 grids.
    pub pyramid: Vec<u32>,
    pub flip: bool,
    pub bin_order: String,
    pub n_rows: u64,
    pub dim: u64,
}

impl FeatureManifest {
    pub fn describe(matrix: &FeatureMatrix, extractor: &str) -> Self {
        let layout = matrix.layout();
        Self {
            extractor: extractor.into(),
            pyramid: match layout.map(|l| l.bins_per_view) {
                Some(14) => vec![1, 2, 3],
                Some(5) => vec![1, 2],
                _ => vec![1],
            },
            flip: layout.is_some_and(|l| l.views == 2),
            bin_order: "architecture, view (original then flipped), level coarse to fine, row-major bins".into(),
            n_rows: matrix.n_rows() as u64,
            dim: matrix.dim() as u64,
        }
    }
}

pub fn write_feature_manifest(manifest: &FeatureManifest, path: &Path) -> Result<()> {
    let text = toml::to_string(manifest).map_err(|e| Error::Invalid(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_feature_manifest(path: &Path) -> Result<FeatureManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

/// Manifest path that sits next to a feature file.
pub fn manifest_path_for(features: &Path) -> std::path::PathBuf {
    features.with_extension("toml")
}
