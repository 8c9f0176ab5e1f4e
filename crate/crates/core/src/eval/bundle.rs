//! On-disk feature bundles exchanged with an external trainer.
//!
//! Layout of a bundle directory:
//!
//! ```text
//! bundle.json      {stages: [{index, rows, cols, file}], labels_file, num_classes}
//! stage_<i>.swsf   "SWSF" | u32 version=1 | u64 rows | u64 cols | rows·cols f32, row-major
//! labels.swsl      "SWSL" | u32 version=1 | u64 rows | rows u32 class indices
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::importance::{FeatureMatrix, ImportanceError};

pub const STAGE_MAGIC: &[u8; 4] = b"SWSF";
pub const LABEL_MAGIC: &[u8; 4] = b"SWSL";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "bundle.json";
pub const LABELS_FILE: &str = "labels.swsl";

const STAGE_HEADER: u64 = 4 + 4 + 8 + 8;
const LABEL_HEADER: u64 = 4 + 4 + 8;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{file}: size is {actual} bytes, manifest implies {expected}")]
    SizeMismatch { file: String, expected: u64, actual: u64 },
    #[error("{file}: bad magic bytes")]
    BadMagic { file: String },
    #[error("{file}: unsupported version {version}")]
    Version { file: String, version: u32 },
    #[error("{file}: header says {got:?} (rows, cols), manifest says {expected:?}")]
    HeaderMismatch { file: String, expected: (u64, u64), got: (u64, u64) },
    #[error("{file}: label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { file: String, label: u32, num_classes: usize },
    #[error("{file}: non-finite feature value")]
    NonFinite { file: String },
    #[error(transparent)]
    Features(#[from] ImportanceError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestStage {
    pub index: usize,
    pub rows: u64,
    pub cols: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub stages: Vec<ManifestStage>,
    pub labels_file: String,
    pub num_classes: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io { path: path.to_path_buf(), source }
}

pub fn stage_file_name(i: usize) -> String {
    format!("stage_{i}.swsf")
}

pub fn encode_stage(block: &DMatrix<f64>) -> Vec<u8> {
    let (rows, cols) = block.shape();
    let mut out = Vec::with_capacity(STAGE_HEADER as usize + rows * cols * 4);
    out.extend_from_slice(STAGE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for r in 0..rows {
        for c in 0..cols {
            out.extend_from_slice(&(block[(r, c)] as f32).to_le_bytes());
        }
    }
    out
}

pub fn encode_labels(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(LABEL_HEADER as usize + labels.len() * 4);
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    for &l in labels {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    out
}

/// Writes every stage of `f`, its labels and the manifest into `dir`.
pub fn write_bundle(dir: &Path, f: &FeatureMatrix, num_classes: usize) -> Result<BundleManifest, BundleError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut stages = Vec::with_capacity(f.slices().len());
    for s in f.slices() {
        let block = f.data().columns(s.start, s.len()).into_owned();
        let file = stage_file_name(s.stage);
        let path = dir.join(&file);
        fs::write(&path, encode_stage(&block)).map_err(io_err(&path))?;
        stages.push(ManifestStage { index: s.stage, rows: f.rows() as u64, cols: s.len() as u64, file });
    }
    let path = dir.join(LABELS_FILE);
    fs::write(&path, encode_labels(f.labels())).map_err(io_err(&path))?;
    let manifest = BundleManifest { stages, labels_file: LABELS_FILE.to_string(), num_classes };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serialization cannot fail");
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(manifest)
}

fn read_checked(dir: &Path, file: &str, expected: u64) -> Result<Vec<u8>, BundleError> {
    let path = dir.join(file);
    let actual = fs::metadata(&path).map_err(io_err(&path))?.len();
    if actual != expected {
        return Err(BundleError::SizeMismatch { file: file.to_string(), expected, actual });
    }
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    if bytes.len() as u64 != expected {
        return Err(BundleError::SizeMismatch { file: file.to_string(), expected, actual: bytes.len() as u64 });
    }
    Ok(bytes)
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4-byte slice"))
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("8-byte slice"))
}

fn check_header(bytes: &[u8], magic: &[u8; 4], file: &str) -> Result<(), BundleError> {
    if &bytes[0..4] != magic {
        return Err(BundleError::BadMagic { file: file.to_string() });
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(BundleError::Version { file: file.to_string(), version });
    }
    Ok(())
}

pub fn decode_stage(bytes: &[u8], file: &str, rows: u64, cols: u64) -> Result<DMatrix<f64>, BundleError> {
    check_header(bytes, STAGE_MAGIC, file)?;
    let got = (u64_at(bytes, 8), u64_at(bytes, 16));
    if got != (rows, cols) {
        return Err(BundleError::HeaderMismatch { file: file.to_string(), expected: (rows, cols), got });
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let body = &bytes[STAGE_HEADER as usize..];
    let mut values = Vec::with_capacity(rows * cols);
    for chunk in body.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(BundleError::NonFinite { file: file.to_string() });
        }
        values.push(v as f64);
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn decode_labels(bytes: &[u8], file: &str, rows: u64, num_classes: usize) -> Result<Vec<usize>, BundleError> {
    check_header(bytes, LABEL_MAGIC, file)?;
    let got = u64_at(bytes, 8);
    if got != rows {
        return Err(BundleError::HeaderMismatch { file: file.to_string(), expected: (rows, 1), got: (got, 1) });
    }
    bytes[LABEL_HEADER as usize..]
        .chunks_exact(4)
        .map(|c| {
            let label = u32::from_le_bytes(c.try_into().expect("4-byte chunk"));
            if (label as usize) < num_classes {
                Ok(label as usize)
            } else {
                Err(BundleError::LabelOutOfRange { file: file.to_string(), label, num_classes })
            }
        })
        .collect()
}

fn plain_name(file: &str) -> bool {
    !file.is_empty() && file != "." && file != ".." && !file.contains(['/', '\\'])
}

pub fn read_manifest(dir: &Path) -> Result<BundleManifest, BundleError> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let manifest: BundleManifest =
        serde_json::from_slice(&bytes).map_err(|e| BundleError::Manifest(e.to_string()))?;
    if manifest.stages.is_empty() {
        return Err(BundleError::Manifest("no stages".into()));
    }
    let rows = manifest.stages[0].rows;
    for (i, s) in manifest.stages.iter().enumerate() {
        if s.index != i {
            return Err(BundleError::Manifest(format!("stage entry {i} has index {}", s.index)));
        }
        if s.rows != rows {
            return Err(BundleError::Manifest(format!("stage {i} has {} rows, stage 0 has {rows}", s.rows)));
        }
        if s.cols == 0 {
            return Err(BundleError::Manifest(format!("stage {i} has no columns")));
        }
        if !plain_name(&s.file) {
            return Err(BundleError::Manifest(format!("stage {i} file `{}` is not a plain name", s.file)));
        }
    }
    if !plain_name(&manifest.labels_file) {
        return Err(BundleError::Manifest(format!("labels file `{}` is not a plain name", manifest.labels_file)));
    }
    if manifest.num_classes == 0 {
        return Err(BundleError::Manifest("num_classes must be positive".into()));
    }
    Ok(manifest)
}

/// Loads and validates a bundle. File sizes are checked against the
/// manifest before any payload is decoded.
pub fn read_bundle(dir: &Path) -> Result<(FeatureMatrix, BundleManifest), BundleError> {
    let manifest = read_manifest(dir)?;
    let rows = manifest.stages[0].rows;
    let sizes: Vec<u64> = manifest
        .stages
        .iter()
        .map(|s| {
            s.rows
                .checked_mul(s.cols)
                .and_then(|v| v.checked_mul(4))
                .and_then(|v| v.checked_add(STAGE_HEADER))
                .ok_or_else(|| BundleError::Manifest(format!("stage {} shape overflows", s.index)))
        })
        .collect::<Result<_, _>>()?;
    let label_size = LABEL_HEADER + rows * 4;

    let mut raw = Vec::with_capacity(sizes.len());
    for (s, &size) in manifest.stages.iter().zip(&sizes) {
        raw.push(read_checked(dir, &s.file, size)?);
    }
    let label_bytes = read_checked(dir, &manifest.labels_file, label_size)?;

    let blocks = manifest
        .stages
        .iter()
        .zip(&raw)
        .map(|(s, bytes)| decode_stage(bytes, &s.file, s.rows, s.cols))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = decode_labels(&label_bytes, &manifest.labels_file, rows, manifest.num_classes)?;
    let features = FeatureMatrix::from_stage_blocks(blocks, labels)?;
    Ok((features, manifest))
}
