//! Equal-width discretization of representation batches and discrete entropy
//! estimation over the resulting per-dimension histograms.
//!
//! All entropies are in bits. Sums over bins run in ascending bin order and
//! sums over dimensions in ascending dimension order, so results do not
//! depend on how work is split across threads.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported bin count; bin indices are stored as `u16`.
pub const MAX_BINS: usize = 1 << 16;

/// Default number of equal-width bins per dimension.
pub const DEFAULT_BINS: usize = 100;

/// Default cap on the size of a dimension subset for joint entropies.
pub const DEFAULT_SUBSET_CAP: usize = 3;

/// An `M x D` matrix of token-level vectors, stored row-major.
///
/// Row `i` lines up with row `i` of every label set built from the same
/// sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationBatch {
    rows: usize,
    dims: usize,
    values: Vec<f32>,
}

impl RepresentationBatch {
    pub fn new(rows: usize, dims: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || dims == 0 {
            return Err(Error::InvalidData(format!(
                "batch must have at least one row and one dim (rows={rows}, dims={dims})"
            )));
        }
        let expected = rows
            .checked_mul(dims)
            .ok_or_else(|| Error::InvalidData(format!("batch shape {rows}x{dims} overflows")))?;
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} values for {rows}x{dims}, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dims,
                dim: pos % dims,
            });
        }
        Ok(Self { rows, dims, values })
    }

    /// Builds a batch from a slice of rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dims = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * dims);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dims {
                return Err(Error::Shape(format!("row {i} has {} values, expected {dims}", r.len())));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), dims, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn get(&self, row: usize, dim: usize) -> f32 {
        self.values[row * self.dims + dim]
    }

    /// Applies `f(dim, value)` to every entry, re-validating finiteness.
    pub fn map(&self, f: impl Fn(usize, f32) -> f32) -> Result<Self> {
        let dims = self.dims;
        let values = self.values.iter().enumerate().map(|(i, &v)| f(i % dims, v)).collect();
        Self::new(self.rows, self.dims, values)
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.dims);
        for &r in rows {
            if r >= self.rows {
                return Err(Error::Shape(format!("row {r} out of range for {} rows", self.rows)));
            }
            values.extend_from_slice(self.row(r));
        }
        Self::new(rows.len(), self.dims, values)
    }
}

/// Per-dimension equal-width bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    n_bins: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BinningSpec {
    pub fn new(n_bins: usize, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_bins(n_bins)?;
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Shape(format!(
                "lo/hi lengths {} and {} must match and be non-empty",
                lo.len(),
                hi.len()
            )));
        }
        for (d, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) || l > h {
                return Err(Error::InvalidParameter(format!("dim {d}: invalid range [{l}, {h}]")));
            }
        }
        Ok(Self { n_bins, lo, hi })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self, dim: usize) -> f64 {
        self.lo[dim]
    }

    pub fn hi(&self, dim: usize) -> f64 {
        self.hi[dim]
    }

    pub fn width(&self, dim: usize) -> f64 {
        (self.hi[dim] - self.lo[dim]) / self.n_bins as f64
    }

    pub fn is_degenerate(&self, dim: usize) -> bool {
        self.hi[dim] == self.lo[dim]
    }

    pub fn degenerate_dims(&self) -> Vec<usize> {
        (0..self.dims()).filter(|&d| self.is_degenerate(d)).collect()
    }

    /// Bin of `x` in dimension `dim`: `floor((x - lo) / width)` clamped to
    /// `[0, N-1]`. Degenerate dimensions always map to bin 0.
    #[inline]
    pub fn bin_index(&self, dim: usize, x: f64) -> usize {
        let lo = self.lo[dim];
        let hi = self.hi[dim];
        if hi == lo {
            return 0;
        }
        let width = (hi - lo) / self.n_bins as f64;
        let pos = ((x - lo) / width).floor();
        if pos <= 0.0 {
            0
        } else if pos >= (self.n_bins - 1) as f64 {
            self.n_bins - 1
        } else {
            pos as usize
        }
    }
}

pub(crate) fn check_bins(n_bins: usize) -> Result<()> {
    if n_bins < 2 {
        return Err(Error::InvalidParameter(format!(
            "bin count must be at least 2, got {n_bins}"
        )));
    }
    if n_bins > MAX_BINS {
        return Err(Error::InvalidParameter(format!(
            "bin count must be at most {MAX_BINS}, got {n_bins}"
        )));
    }
    Ok(())
}

/// Per-dimension bin counts, stored dimension-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSet {
    n_bins: usize,
    total: u64,
    counts: Vec<u64>,
}

impl HistogramSet {
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn dims(&self) -> usize {
        self.counts.len() / self.n_bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self, dim: usize) -> &[u64] {
        &self.counts[dim * self.n_bins..(dim + 1) * self.n_bins]
    }

    /// Number of nonempty bins in `dim`.
    pub fn occupied(&self, dim: usize) -> usize {
        self.counts(dim).iter().filter(|&&c| c > 0).count()
    }
}

/// Result of a dimension-wise entropy estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub per_dim: Vec<f64>,
    pub mean: f64,
    /// `mean / log2(N)`. Not clamped: with the correction applied it may
    /// exceed 1 by up to `(N-1) / (2 M ln2 log2 N)`.
    pub efficiency: f64,
    pub corrected: bool,
}

pub fn fit_bins(batch: &RepresentationBatch, n_bins: usize) -> Result<BinningSpec> {
    check_bins(n_bins)?;
    let dims = batch.dims();
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for r in 0..batch.rows() {
        for (d, &v) in batch.row(r).iter().enumerate() {
            let v = v as f64;
            if v < lo[d] {
                lo[d] = v;
            }
            if v > hi[d] {
                hi[d] = v;
            }
        }
    }
    BinningSpec::new(n_bins, lo, hi)
}

fn check_shape(batch: &RepresentationBatch, spec: &BinningSpec) -> Result<()> {
    if batch.dims() != spec.dims() {
        return Err(Error::Shape(format!(
            "batch has {} dims, binning spec has {}",
            batch.dims(),
            spec.dims()
        )));
    }
    Ok(())
}

/// Row-major bin indices for a whole batch.
#[derive(Debug, Clone)]
pub(crate) struct BinnedBatch {
    pub rows: usize,
    pub dims: usize,
    pub n_bins: usize,
    pub bins: Vec<u16>,
}

impl BinnedBatch {
    pub fn new(batch: &RepresentationBatch, spec: &BinningSpec) -> Result<Self> {
        check_shape(batch, spec)?;
        let dims = batch.dims();
        let mut bins = vec![0u16; batch.rows() * dims];
        bins.par_chunks_mut(dims)
            .zip(batch.values().par_chunks(dims))
            .for_each(|(out, row)| {
                for (d, (o, &v)) in out.iter_mut().zip(row).enumerate() {
                    *o = spec.bin_index(d, v as f64) as u16;
                }
            });
        Ok(Self {
            rows: batch.rows(),
            dims,
            n_bins: spec.n_bins(),
            bins,
        })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u16] {
        &self.bins[i * self.dims..(i + 1) * self.dims]
    }

    /// Counts of every row, dimension-major (`d * N + bin`).
    pub fn histogram(&self) -> HistogramSet {
        let width = self.dims * self.n_bins;
        let counts = self
            .bins
            .par_chunks(self.dims * 1024)
            .fold(
                || vec![0u64; width],
                |mut acc, chunk| {
                    for row in chunk.chunks(self.dims) {
                        for (d, &b) in row.iter().enumerate() {
                            acc[d * self.n_bins + b as usize] += 1;
                        }
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u64; width],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        HistogramSet {
            n_bins: self.n_bins,
            total: self.rows as u64,
            counts,
        }
    }
}

pub fn discretize(batch: &RepresentationBatch, spec: &BinningSpec) -> Result<HistogramSet> {
    Ok(BinnedBatch::new(batch, spec)?.histogram())
}

/// Shannon entropy in bits of a count vector, plus the number of occupied
/// bins. Zero counts are skipped; the sum runs in iteration order.
#[inline]
pub(crate) fn shannon_bits<I>(counts: I, total: u64) -> (f64, usize)
where
    I: IntoIterator<Item = u64>,
{
    let t = total as f64;
    let mut h = 0.0f64;
    let mut occupied = 0usize;
    for c in counts {
        if c > 0 {
            let p = c as f64 / t;
            h -= p * p.log2();
            occupied += 1;
        }
    }
    (h, occupied)
}

/// Miller-Madow bias term `(K - 1) / (2 M ln 2)` in bits.
#[inline]
pub(crate) fn miller_madow_term(occupied: usize, total: u64) -> f64 {
    occupied.saturating_sub(1) as f64 / (2.0 * total as f64 * LN_2)
}

#[inline]
pub(crate) fn entropy_bits<I>(counts: I, total: u64, corrected: bool) -> f64
where
    I: IntoIterator<Item = u64>,
{
    let (h, k) = shannon_bits(counts, total);
    if corrected {
        h + miller_madow_term(k, total)
    } else {
        h
    }
}

fn check_counts(counts: &[u64], total: u64) -> Result<()> {
    let sum: u64 = counts.iter().sum();
    if total == 0 || sum != total {
        return Err(Error::InconsistentHistogram { sum, total });
    }
    Ok(())
}

/// Maximum-likelihood (plug-in) entropy in bits.
pub fn entropy_mle(counts: &[u64], total: u64) -> Result<f64> {
    check_counts(counts, total)?;
    Ok(shannon_bits(counts.iter().copied(), total).0)
}

/// Plug-in entropy plus the Miller-Madow correction, in bits.
pub fn entropy_miller_madow(counts: &[u64], total: u64) -> Result<f64> {
    check_counts(counts, total)?;
    Ok(entropy_bits(counts.iter().copied(), total, true))
}

pub(crate) fn estimate_from_histogram(hist: &HistogramSet, corrected: bool) -> EntropyEstimate {
    let per_dim: Vec<f64> = (0..hist.dims())
        .map(|d| entropy_bits(hist.counts(d).iter().copied(), hist.total(), corrected))
        .collect();
    let mean = per_dim.iter().sum::<f64>() / per_dim.len() as f64;
    EntropyEstimate {
        efficiency: mean / (hist.n_bins() as f64).log2(),
        per_dim,
        mean,
        corrected,
    }
}

pub fn dimensionwise_entropy(
    batch: &RepresentationBatch,
    spec: &BinningSpec,
    corrected: bool,
) -> Result<EntropyEstimate> {
    let hist = discretize(batch, spec)?;
    Ok(estimate_from_histogram(&hist, corrected))
}

/// Entropy of the joint distribution of bin-index tuples over `dims`.
///
/// Tuples are counted sparsely (sorted packed keys), so memory is `O(M)`
/// regardless of `N^|dims|`.
pub fn joint_subset_entropy(
    batch: &RepresentationBatch,
    spec: &BinningSpec,
    dims: &[usize],
    corrected: bool,
    cap: usize,
) -> Result<f64> {
    check_shape(batch, spec)?;
    if dims.is_empty() || dims.len() > cap {
        return Err(Error::InvalidParameter(format!(
            "subset size must be in [1, {cap}], got {}",
            dims.len()
        )));
    }
    for (i, &d) in dims.iter().enumerate() {
        if d >= spec.dims() {
            return Err(Error::InvalidParameter(format!(
                "dim {d} out of range for {} dims",
                spec.dims()
            )));
        }
        if dims[..i].contains(&d) {
            return Err(Error::InvalidParameter(format!("dim {d} listed twice")));
        }
    }
    let n = spec.n_bins() as u64;
    if n.checked_pow(dims.len() as u32).is_none() {
        return Err(Error::InvalidParameter(format!(
            "bin-tuple space {}^{} does not fit in 64 bits",
            n,
            dims.len()
        )));
    }

    let mut keys: Vec<u64> = (0..batch.rows())
        .map(|r| {
            dims.iter().rev().fold(0u64, |key, &d| {
                key * n + spec.bin_index(d, batch.get(r, d) as f64) as u64
            })
        })
        .collect();
    keys.sort_unstable();
    let runs = keys.chunk_by(|a, b| a == b).map(|run| run.len() as u64);
    Ok(entropy_bits(runs, batch.rows() as u64, corrected))
}

/// [`joint_subset_entropy`] divided by `|dims| * log2(N)`.
pub fn joint_subset_efficiency(
    batch: &RepresentationBatch,
    spec: &BinningSpec,
    dims: &[usize],
    corrected: bool,
    cap: usize,
) -> Result<f64> {
    let h = joint_subset_entropy(batch, spec, dims, corrected, cap)?;
    Ok(h / (dims.len() as f64 * (spec.n_bins() as f64).log2()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f32]) -> RepresentationBatch {
        RepresentationBatch::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn fit_bins_uses_column_extremes() {
        let b = column(&[0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let spec = fit_bins(&b, 5).unwrap();
        assert_eq!((spec.lo(0), spec.hi(0)), (0.0, 10.0));
        assert_eq!(spec.width(0), 2.0);
        assert!(!spec.is_degenerate(0));
    }

    #[test]
    fn constant_dimension_is_degenerate() {
        let b = column(&[3.0, 3.0, 3.0]);
        let spec = fit_bins(&b, 10).unwrap();
        assert_eq!((spec.lo(0), spec.hi(0)), (3.0, 3.0));
        assert!(spec.is_degenerate(0));
        let h = discretize(&b, &spec).unwrap();
        let mut expected = vec![0u64; 10];
        expected[0] = 3;
        assert_eq!(h.counts(0), expected.as_slice());
    }

    #[test]
    fn per_dimension_extremes_are_independent() {
        let b = RepresentationBatch::from_rows(&[[-1.0f32, 5.0], [1.0, 0.0], [0.0, 2.0]]).unwrap();
        let spec = fit_bins(&b, 4).unwrap();
        assert_eq!((spec.lo(0), spec.hi(0)), (-1.0, 1.0));
        assert_eq!((spec.lo(1), spec.hi(1)), (0.0, 5.0));
    }

    #[test]
    fn fit_bins_rejects_small_n() {
        let b = column(&[0.0, 1.0]);
        assert!(matches!(fit_bins(&b, 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn non_finite_values_are_reported_with_position() {
        let err = RepresentationBatch::new(2, 2, vec![0.0, 1.0, f32::NAN, 2.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, dim: 0 }));
    }

    #[test]
    fn top_edge_clamps_into_last_bin() {
        let b = column(&[0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let spec = fit_bins(&b, 5).unwrap();
        let h = discretize(&b, &spec).unwrap();
        assert_eq!(h.counts(0), &[1, 1, 1, 1, 2]);
    }

    #[test]
    fn out_of_range_values_clamp() {
        let spec = BinningSpec::new(5, vec![0.0], vec![10.0]).unwrap();
        assert_eq!(spec.bin_index(0, 11.0), 4);
        assert_eq!(spec.bin_index(0, -3.0), 0);
    }

    #[test]
    fn discretize_checks_dims() {
        let b = column(&[0.0, 1.0]);
        let spec = BinningSpec::new(5, vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(discretize(&b, &spec), Err(Error::Shape(_))));
    }

    #[test]
    fn mle_examples() {
        assert_eq!(entropy_mle(&[4, 0, 0, 0], 4).unwrap(), 0.0);
        assert_eq!(entropy_mle(&[2, 2], 4).unwrap(), 1.0);
        // -2 * 0.25 * log2(0.25) - 0.5 * log2(0.5) = 1 + 0.5
        assert_eq!(entropy_mle(&[1, 1, 2], 4).unwrap(), 1.5);
    }

    #[test]
    fn miller_madow_examples() {
        let one_over_8ln2 = 1.0 / (8.0 * std::f64::consts::LN_2);
        assert!((entropy_miller_madow(&[2, 2], 4).unwrap() - (1.0 + one_over_8ln2)).abs() < 1e-12);
        assert!((entropy_miller_madow(&[2, 2], 4).unwrap() - 1.18034).abs() < 1e-5);
        assert_eq!(entropy_miller_madow(&[4, 0], 4).unwrap(), 0.0);
        let v = entropy_miller_madow(&[1, 1, 1, 1], 4).unwrap();
        assert!((v - (2.0 + 3.0 * one_over_8ln2)).abs() < 1e-12);
        assert!((v - 2.54101).abs() < 1e-5);
    }

    #[test]
    fn inconsistent_histogram_is_rejected() {
        assert!(matches!(
            entropy_mle(&[1, 1], 3),
            Err(Error::InconsistentHistogram { sum: 2, total: 3 })
        ));
        assert!(entropy_miller_madow(&[0, 0], 0).is_err());
    }

    #[test]
    fn identical_rows_have_zero_efficiency() {
        let b = RepresentationBatch::from_rows(&vec![[0.5f32, -1.0, 2.0]; 20]).unwrap();
        let spec = fit_bins(&b, 10).unwrap();
        for corrected in [false, true] {
            let e = dimensionwise_entropy(&b, &spec, corrected).unwrap();
            assert_eq!(e.efficiency, 0.0);
        }
    }

    #[test]
    fn singleton_subset_matches_marginal() {
        let rows: Vec<[f32; 2]> = (0..40).map(|i| [((i * 7) % 13) as f32, ((i * 3) % 5) as f32]).collect();
        let b = RepresentationBatch::from_rows(&rows).unwrap();
        let spec = fit_bins(&b, 6).unwrap();
        for corrected in [false, true] {
            let e = dimensionwise_entropy(&b, &spec, corrected).unwrap();
            for d in 0..2 {
                let j = joint_subset_entropy(&b, &spec, &[d], corrected, 3).unwrap();
                assert_eq!(j, e.per_dim[d]);
            }
        }
    }

    #[test]
    fn correlated_pair_joint_equals_marginal() {
        let rows: Vec<[f32; 2]> = (0..50).map(|i| [i as f32, i as f32]).collect();
        let b = RepresentationBatch::from_rows(&rows).unwrap();
        let spec = fit_bins(&b, 8).unwrap();
        let marginal = dimensionwise_entropy(&b, &spec, false).unwrap().per_dim[0];
        let joint = joint_subset_entropy(&b, &spec, &[0, 1], false, 3).unwrap();
        assert!((joint - marginal).abs() < 1e-12);
    }

    #[test]
    fn subset_guards() {
        let b = RepresentationBatch::from_rows(&[[0.0f32; 4], [1.0; 4]]).unwrap();
        let spec = fit_bins(&b, 4).unwrap();
        assert!(joint_subset_entropy(&b, &spec, &[0, 1, 2, 3], false, 3).is_err());
        assert!(joint_subset_entropy(&b, &spec, &[], false, 3).is_err());
        assert!(joint_subset_entropy(&b, &spec, &[0, 0], false, 3).is_err());
        assert!(joint_subset_entropy(&b, &spec, &[4], false, 3).is_err());
        let big = BinningSpec::new(MAX_BINS, vec![0.0; 4], vec![1.0; 4]).unwrap();
        assert!(joint_subset_entropy(&b, &big, &[0, 1, 2, 3], false, 4).is_err());
    }
}
