//! File formats: HREP representation dumps, tokens JSONL, run manifests, and
//! the NPY/CSV convenience importers.
//!
//! HREP layout (all little-endian, no padding, no footer):
//!
//! ```text
//! 0..6    b"HREP1\n"
//! 6..10   u32  D (dims)
//! 10..18  u64  M (rows)
//! 18..    M*D  f32, row-major
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::RepresentationBatch;
use crate::labels::{token_count, SentenceRecord};

pub const HREP_MAGIC: &[u8; 6] = b"HREP1\n";
const HREP_HEADER: usize = 18;
const NPY_MAGIC: &[u8; 6] = b"\x93NUMPY";

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Decodes an HREP byte buffer; `path` is only used in error messages.
pub fn decode_reps(bytes: &[u8], path: &Path) -> Result<RepresentationBatch> {
    if bytes.len() < HREP_MAGIC.len() || &bytes[..HREP_MAGIC.len()] != HREP_MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    if bytes.len() < HREP_HEADER {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HREP_HEADER as u64,
            actual: bytes.len() as u64,
        });
    }
    let dims = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as u64;
    let rows = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    if dims == 0 || rows == 0 {
        return Err(Error::InvalidData(format!(
            "{}: header declares rows={rows} dims={dims}",
            path.display()
        )));
    }
    let expected = rows
        .checked_mul(dims)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::InvalidData(format!("{}: header size overflows", path.display())))?;
    let actual = (bytes.len() - HREP_HEADER) as u64;
    if actual < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(Error::InvalidData(format!(
            "{}: {} trailing bytes after payload of {expected}",
            path.display(),
            actual - expected
        )));
    }
    let values = bytes[HREP_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    RepresentationBatch::new(rows as usize, dims as usize, values)
}

pub fn read_reps(path: impl AsRef<Path>) -> Result<RepresentationBatch> {
    let path = path.as_ref();
    decode_reps(&read_bytes(path)?, path)
}

pub fn encode_reps(batch: &RepresentationBatch) -> Vec<u8> {
    let mut out = Vec::with_capacity(HREP_HEADER + batch.values().len() * 4);
    out.extend_from_slice(HREP_MAGIC);
    out.extend_from_slice(&(batch.dims() as u32).to_le_bytes());
    out.extend_from_slice(&(batch.rows() as u64).to_le_bytes());
    for v in batch.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_reps(batch: &RepresentationBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if batch.dims() > u32::MAX as usize {
        return Err(Error::InvalidData(format!("{} dims do not fit in HREP", batch.dims())));
    }
    fs::write(path, encode_reps(batch)).map_err(|e| Error::io(path, e))
}

/// Imports a version 1.0 `.npy` file holding a 2-D little-endian float32
/// C-order array. Anything else is rejected.
pub fn read_npy(path: impl AsRef<Path>) -> Result<RepresentationBatch> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let bad = |msg: &str| Error::InvalidData(format!("{}: {msg}", path.display()));
    if bytes.len() < 10 || &bytes[..6] != NPY_MAGIC {
        return Err(bad("not an npy file"));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(bad(&format!("unsupported npy version {}.{}", bytes[6], bytes[7])));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let header = bytes
        .get(10..10 + header_len)
        .ok_or_else(|| bad("truncated npy header"))?;
    let header = std::str::from_utf8(header).map_err(|_| bad("npy header is not ASCII"))?;

    let field = |key: &str| -> Option<&str> {
        let start = header.find(&format!("'{key}'"))? + key.len() + 2;
        let rest = header[start..].trim_start().strip_prefix(':')?.trim_start();
        Some(rest)
    };
    let descr = field("descr").ok_or_else(|| bad("missing descr"))?;
    if !descr.starts_with("'<f4'") {
        return Err(bad("only little-endian float32 ('<f4') arrays are supported"));
    }
    let fortran = field("fortran_order").ok_or_else(|| bad("missing fortran_order"))?;
    if !fortran.starts_with("False") {
        return Err(bad("fortran-order arrays are not supported"));
    }
    let shape = field("shape").ok_or_else(|| bad("missing shape"))?;
    let shape = shape
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| bad("malformed shape"))?;
    let dims: Vec<usize> = shape
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad("malformed shape")))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(bad(&format!("expected a 2-D array, got {} dims", dims.len())));
    };
    let payload = &bytes[10 + header_len..];
    let expected = (rows * cols * 4) as u64;
    if (payload.len() as u64) < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual: payload.len() as u64,
        });
    }
    let values = payload[..expected as usize]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    RepresentationBatch::new(rows, cols, values)
}

/// Header-less comma-separated floats, one row per line.
pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<RepresentationBatch> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.into(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f32>().map_err(|e| Error::Parse {
                    path: path.into(),
                    line: i + 1,
                    msg: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    RepresentationBatch::from_rows(&rows)
}

/// Reads a representation matrix, choosing the format from the file's leading
/// bytes (HREP or NPY) and falling back to CSV.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<RepresentationBatch> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.starts_with(NPY_MAGIC) {
        read_npy(path)
    } else if bytes.starts_with(b"HREP") || path.extension().is_some_and(|e| e == "hrep") {
        decode_reps(&bytes, path)
    } else {
        read_csv_matrix(path)
    }
}

pub fn read_tokens(path: impl AsRef<Path>) -> Result<Vec<SentenceRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.into(),
            line: i + 1,
            msg,
        };
        let rec: SentenceRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if rec.tokens.is_empty() {
            return Err(parse_err(format!("sentence_id {} has no tokens", rec.sentence_id)));
        }
        if let Some(pos) = &rec.pos {
            if pos.len() != rec.tokens.len() {
                return Err(parse_err(format!(
                    "sentence_id {}: {} pos tags for {} tokens",
                    rec.sentence_id,
                    pos.len(),
                    rec.tokens.len()
                )));
            }
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_tokens(records: &[SentenceRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("sentence records always serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One label per line, aligned with batch rows.
pub fn read_label_file(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

pub fn write_label_file<S: AsRef<str>>(labels: &[S], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for l in labels {
        text.push_str(l.as_ref());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn validate_alignment(batch: &RepresentationBatch, records: &[SentenceRecord]) -> Result<()> {
    let tokens = token_count(records);
    if records.is_empty() || tokens != batch.rows() {
        return Err(Error::Alignment {
            tokens,
            rows: batch.rows(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: u64,
    pub reps_path: PathBuf,
    pub loss: f64,
    #[serde(default, rename = "gen_acc", skip_serializing_if = "Option::is_none")]
    pub generalization_accuracy: Option<f64>,
}

/// One training run: ordered checkpoints plus the shared token file.
///
/// Relative paths in the file are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub seed: i64,
    pub tokens_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_path: Option<PathBuf>,
    /// Extra per-row label files, keyed by label-set name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, PathBuf>,
    pub checkpoints: Vec<Checkpoint>,
}

impl RunManifest {
    pub fn validate(&self, source: &Path) -> Result<()> {
        let err = |msg: String| Error::Manifest {
            path: source.into(),
            msg,
        };
        if self.checkpoints.is_empty() {
            return Err(err("no checkpoints".into()));
        }
        for pair in self.checkpoints.windows(2) {
            if pair[1].step <= pair[0].step {
                return Err(err(format!(
                    "steps must be strictly increasing: {} then {}",
                    pair[0].step, pair[1].step
                )));
            }
        }
        for c in &self.checkpoints {
            if !c.loss.is_finite() {
                return Err(err(format!("step {}: loss is not finite", c.step)));
            }
            if !c.reps_path.is_file() {
                return Err(err(format!(
                    "step {}: reps file {} does not exist",
                    c.step,
                    c.reps_path.display()
                )));
            }
        }
        let extra = self.pos_path.iter().chain(self.labels.values());
        for p in std::iter::once(&self.tokens_path).chain(extra) {
            if !p.is_file() {
                return Err(err(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Loads the token records, merging tags from `pos_path` when present.
    pub fn records(&self) -> Result<Vec<SentenceRecord>> {
        let mut records = read_tokens(&self.tokens_path)?;
        if let Some(pos_path) = &self.pos_path {
            let tagged = read_tokens(pos_path)?;
            if tagged.len() != records.len() {
                return Err(Error::Alignment {
                    tokens: token_count(&tagged),
                    rows: token_count(&records),
                });
            }
            for (r, t) in records.iter_mut().zip(tagged) {
                let pos = t.pos.unwrap_or(t.tokens);
                if pos.len() != r.tokens.len() {
                    return Err(Error::InvalidData(format!(
                        "{}: sentence_id {} has {} tags for {} tokens",
                        pos_path.display(),
                        r.sentence_id,
                        pos.len(),
                        r.tokens.len()
                    )));
                }
                r.pos = Some(pos);
            }
        }
        Ok(records)
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.into(),
        msg: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    resolve(&mut m.tokens_path);
    m.pos_path.as_mut().map(resolve);
    m.labels.values_mut().for_each(resolve);
    m.checkpoints.iter_mut().for_each(|c| resolve(&mut c.reps_path));
    m.validate(path)?;
    Ok(m)
}
