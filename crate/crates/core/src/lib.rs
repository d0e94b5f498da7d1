//! Information-theoretic structure measures for learned vector representations.
//!
//! Representations are discretized into per-dimension equal-width histograms
//! and scored against label sets (tokens, parts of speech, bigrams):
//!
//! * **information**: normalized dimension-wise entropy of all rows;
//! * **variation**: mean normalized entropy of the rows carrying one label;
//! * **regularity**: information minus variation;
//! * **disentanglement**: mean Jensen-Shannon divergence between each label's
//!   rows and all other rows.
//!
//! ```
//! use reprstruct::{analyze, fit_bins, AnalyzeOptions, LabelKind, LabelSet, RepresentationBatch};
//!
//! let batch = RepresentationBatch::from_rows(&[[0.0f32], [0.0], [1.0], [1.0]]).unwrap();
//! let labels = LabelSet::from_labels(LabelKind::Token, &["a", "a", "b", "b"]).unwrap();
//! let spec = fit_bins(&batch, 2).unwrap();
//! let opts = AnalyzeOptions { min_count: 1, corrected: false, ..Default::default() };
//! let report = analyze(&batch, &spec, &[labels], &opts).unwrap();
//! assert_eq!(report.information, 1.0);
//! assert_eq!(report.set("token").unwrap().disentanglement, Some(1.0));
//! ```

pub mod analysis;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod io;
pub mod labels;
pub mod measures;
pub mod synth;

pub use analysis::{
    aggregate_runs, compute_series, correlate_across_runs, spearman, spearman_p_value, Aggregate, CorrelationResult,
    MeasureSeries, SeriesOptions, SeriesPoint, Target,
};
pub use error::{Error, Result};
pub use estimator::{
    dimensionwise_entropy, discretize, entropy_miller_madow, entropy_mle, fit_bins, joint_subset_efficiency,
    joint_subset_entropy, BinningSpec, EntropyEstimate, HistogramSet, RepresentationBatch, DEFAULT_BINS,
    DEFAULT_SUBSET_CAP,
};
pub use io::{
    read_manifest, read_matrix, read_reps, read_tokens, validate_alignment, write_reps, write_tokens, Checkpoint,
    RunManifest,
};
pub use labels::{
    build_pos_labels, build_token_labels, derive_bigram_labels, ExcludedLabel, LabelKind, LabelSet, SentenceRecord,
    DEFAULT_MIN_COUNT,
};
pub use measures::{
    analyze, conditional_entropy, disentanglement, information, jsd, regularity, variation, AnalyzeOptions,
    LabelMeasures, MeasureReport, PreparedBatch, RegularityBaseline, SetMeasures, SetReport, Weighting,
};

/// Analyzes an in-memory row-major `rows x dims` float32 buffer against named
/// per-row label id lists. Used by foreign-language bindings; the numbers are
/// the same as the file-based pipeline's.
pub fn analyze_arrays(
    values: &[f32],
    rows: usize,
    dims: usize,
    label_sets: &[(String, Vec<u32>)],
    n_bins: usize,
    opts: &AnalyzeOptions,
) -> Result<MeasureReport> {
    estimator::check_bins(n_bins)?;
    let batch = RepresentationBatch::new(rows, dims, values.to_vec())?;
    let mut sets = Vec::with_capacity(label_sets.len());
    for (name, ids) in label_sets {
        if ids.len() != rows {
            return Err(Error::Alignment {
                tokens: ids.len(),
                rows,
            });
        }
        let kind = match name.as_str() {
            "token" => LabelKind::Token,
            "pos" => LabelKind::Pos,
            "bigram" => LabelKind::Bigram,
            other => LabelKind::Custom(other.to_string()),
        };
        sets.push(LabelSet::from_ids(kind, ids)?);
    }
    let spec = fit_bins(&batch, n_bins)?;
    analyze(&batch, &spec, &sets, opts)
}
