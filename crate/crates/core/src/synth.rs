//! Synthetic representation systems with known structure, and a brute-force
//! recomputation of every measure used to cross-check the fast path.
//!
//! Labels are assigned round-robin (row `i` gets token `i mod K`), so label
//! counts differ by at most one and closed-form entropies are exact. Noise is
//! gaussian from a ChaCha8 stream seeded by the config.

use std::f64::consts::LN_2;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{BinningSpec, RepresentationBatch, DEFAULT_BINS};
use crate::io::{write_label_file, write_reps, write_tokens};
use crate::labels::{LabelKind, LabelSet, SentenceRecord};
use crate::measures::{
    AnalyzeOptions, LabelMeasures, MeasureReport, RegularityBaseline, SetMeasures, SetReport, Weighting,
};

/// Largest batch [`oracle_measures`] accepts.
pub const ORACLE_MAX_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    Monotone,
    Contextual,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub mode: SynthMode,
    pub labels: usize,
    pub contexts: usize,
    pub dims: usize,
    pub samples: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Bin count the generated system is meant to be analyzed at; bounds the
    /// number of distinct values the contextual generator may use.
    pub n_bins: usize,
    /// Scale of the context offsets in contextual mode, in `[0, 1]`.
    pub separation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            mode: SynthMode::Monotone,
            labels: 10,
            contexts: 2,
            dims: 8,
            samples: 1000,
            noise_sigma: 0.0,
            seed: 0,
            n_bins: DEFAULT_BINS,
            separation: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.labels == 0 {
            return bad("labels must be at least 1".into());
        }
        if self.dims == 0 {
            return bad("dims must be at least 1".into());
        }
        if self.samples < self.labels {
            return bad(format!(
                "samples ({}) must be at least labels ({})",
                self.samples, self.labels
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!(
                "noise must be finite and non-negative, got {}",
                self.noise_sigma
            ));
        }
        if !(0.0..=1.0).contains(&self.separation) {
            return bad(format!("separation must be in [0, 1], got {}", self.separation));
        }
        if self.mode == SynthMode::Contextual {
            if self.contexts < 2 {
                return bad(format!(
                    "contextual mode needs at least 2 contexts, got {}",
                    self.contexts
                ));
            }
            if self.labels * self.contexts > self.n_bins {
                return bad(format!(
                    "labels*contexts = {} exceeds the {} distinct bins available",
                    self.labels * self.contexts,
                    self.n_bins
                ));
            }
        }
        Ok(())
    }
}

/// A generated batch with its row-aligned labels.
#[derive(Debug, Clone)]
pub struct SynthSystem {
    pub batch: RepresentationBatch,
    pub records: Vec<SentenceRecord>,
    pub token: LabelSet,
    /// `token|context` per row (contextual mode only).
    pub context: Option<Vec<String>>,
}

impl SynthSystem {
    pub fn context_set(&self) -> Option<LabelSet> {
        self.context
            .as_ref()
            .map(|c| LabelSet::from_labels(LabelKind::Custom("context".into()), c).expect("non-empty"))
    }

    /// Writes `reps.hrep`, `tokens.jsonl` and, for contextual systems,
    /// `context.labels` into `dir`. Returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = vec![dir.join("reps.hrep"), dir.join("tokens.jsonl")];
        write_reps(&self.batch, &written[0])?;
        write_tokens(&self.records, &written[1])?;
        if let Some(ctx) = &self.context {
            let p = dir.join("context.labels");
            write_label_file(ctx, &p)?;
            written.push(p);
        }
        Ok(written)
    }
}

/// One single-token sentence per row.
fn sentences(tokens: &[String]) -> Vec<SentenceRecord> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| SentenceRecord {
            sentence_id: i as i64,
            tokens: vec![t.clone()],
            pos: None,
        })
        .collect()
}

fn base_level(k: usize, labels: usize) -> f64 {
    if labels == 1 {
        0.0
    } else {
        k as f64 / (labels - 1) as f64
    }
}

fn noise(cfg: &SynthConfig) -> impl FnMut(&mut ChaCha8Rng) -> f64 {
    let normal = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("sigma validated"));
    move |rng| normal.as_ref().map_or(0.0, |n| n.sample(rng))
}

fn finish(
    values: Vec<f32>,
    cfg: &SynthConfig,
    tokens: Vec<String>,
    context: Option<Vec<String>>,
) -> Result<SynthSystem> {
    let batch = RepresentationBatch::new(cfg.samples, cfg.dims, values)?;
    let token = LabelSet::from_labels(LabelKind::Token, &tokens)?;
    Ok(SynthSystem {
        batch,
        records: sentences(&tokens),
        token,
        context,
    })
}

/// Label `k` sits at `k/(K-1)` on every coordinate, plus gaussian noise.
pub fn gen_monotone(cfg: &SynthConfig) -> Result<SynthSystem> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut eps = noise(cfg);
    let mut values = Vec::with_capacity(cfg.samples * cfg.dims);
    let mut tokens = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let k = i % cfg.labels;
        let base = base_level(k, cfg.labels);
        for _ in 0..cfg.dims {
            values.push((base + eps(&mut rng)) as f32);
        }
        tokens.push(k.to_string());
    }
    finish(values, cfg, tokens, None)
}

/// Row `(k, c)` sits at `k/(K-1) + c * s * separation` on every coordinate.
/// With `s = 1/((K-1) C)` all `K*C` levels are evenly spaced and, when
/// `K*C <= N`, land in distinct bins.
pub fn gen_contextual(cfg: &SynthConfig) -> Result<SynthSystem> {
    let cfg = SynthConfig {
        mode: SynthMode::Contextual,
        ..cfg.clone()
    };
    cfg.validate()?;
    let step = if cfg.labels == 1 {
        1.0 / cfg.contexts as f64
    } else {
        1.0 / ((cfg.labels - 1) * cfg.contexts) as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut eps = noise(&cfg);
    let mut values = Vec::with_capacity(cfg.samples * cfg.dims);
    let mut tokens = Vec::with_capacity(cfg.samples);
    let mut context = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let k = i % cfg.labels;
        let c = (i / cfg.labels) % cfg.contexts;
        let base = base_level(k, cfg.labels);
        let delta = c as f64 * step * cfg.separation;
        for _ in 0..cfg.dims {
            values.push((base + delta + eps(&mut rng)) as f32);
        }
        tokens.push(k.to_string());
        context.push(format!("{k}|{c}"));
    }
    finish(values, &cfg, tokens, Some(context))
}

/// IID uniform `[0, 1)` coordinates with IID uniform labels.
pub fn gen_uniform(cfg: &SynthConfig) -> Result<SynthSystem> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut values = Vec::with_capacity(cfg.samples * cfg.dims);
    let mut tokens = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        for _ in 0..cfg.dims {
            values.push(rng.random::<f32>());
        }
        tokens.push(rng.random_range(0..cfg.labels).to_string());
    }
    finish(values, cfg, tokens, None)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthSystem> {
    match cfg.mode {
        SynthMode::Monotone => gen_monotone(cfg),
        SynthMode::Contextual => gen_contextual(cfg),
        SynthMode::Uniform => gen_uniform(cfg),
    }
}

/// Expected plug-in measures of a noiseless monotone system analyzed at
/// `cfg.n_bins`, when every label lands in its own bin (`K <= N`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub information: f64,
    pub variation: f64,
    pub regularity: f64,
    pub disentanglement: Option<f64>,
}

pub fn closed_form(cfg: &SynthConfig) -> Option<ClosedForm> {
    if cfg.mode != SynthMode::Monotone || cfg.noise_sigma != 0.0 || cfg.labels > cfg.n_bins || cfg.validate().is_err() {
        return None;
    }
    let m = cfg.samples as f64;
    let h: f64 = (0..cfg.labels)
        .map(|k| (cfg.samples - k).div_ceil(cfg.labels) as f64 / m)
        .map(|p| -p * p.log2())
        .sum();
    let information = h / (cfg.n_bins as f64).log2();
    Some(ClosedForm {
        information,
        variation: 0.0,
        regularity: information,
        disentanglement: (cfg.labels > 1).then_some(1.0),
    })
}

/// Phases of [`two_phase_trajectory`].
pub const TRAJECTORY_STEPS: [u64; 4] = [100, 1000, 10000, 100000];

/// A fabricated training run over [`TRAJECTORY_STEPS`]:
///
/// 1. diffuse: every row is gaussian noise around its token level;
/// 2. aligned: rows sit exactly on their token level;
/// 3. contextualizing: on the first half of the coordinates rows move to a
///    level set by their context alone, the rest stay on the token level;
/// 4. as 3, unchanged (a plateau).
///
/// With more contexts than tokens, token regularity rises then falls while
/// context regularity keeps rising into the last phase. Returns one system
/// and one loss per step.
pub fn two_phase_trajectory(
    labels: usize,
    contexts: usize,
    dims: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<(SynthSystem, f64)>> {
    let cfg = SynthConfig {
        mode: SynthMode::Contextual,
        labels,
        contexts,
        dims,
        samples,
        seed,
        ..Default::default()
    };
    cfg.validate()?;
    let shifted = dims.div_ceil(2);
    let normal = Normal::new(0.0, 0.3).expect("valid sigma");
    let mut out = Vec::new();
    for (phase, loss) in [(0usize, 2.0), (1, 0.5), (2, 0.2), (3, 0.1)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(phase as u64));
        let mut values = Vec::with_capacity(samples * dims);
        let mut tokens = Vec::with_capacity(samples);
        let mut context = Vec::with_capacity(samples);
        for i in 0..samples {
            let k = i % labels;
            let c = (i / labels) % contexts;
            let base = base_level(k, labels);
            for d in 0..dims {
                let v = match phase {
                    0 => base + normal.sample(&mut rng),
                    1 => base,
                    _ if d < shifted => c as f64 / (contexts - 1) as f64,
                    _ => base,
                };
                values.push(v as f32);
            }
            tokens.push(k.to_string());
            context.push(format!("{k}|{c}"));
        }
        out.push((finish(values, &cfg, tokens, Some(context))?, loss));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Brute-force oracle. Deliberately shares nothing with the estimator and
// measures modules beyond the data types: bins are recomputed per value,
// histograms are built by sorting and run-length counting, and every
// distribution is rebuilt from scratch for every label.

fn oracle_bin(spec: &BinningSpec, dim: usize, x: f32) -> u64 {
    let (lo, hi) = (spec.lo(dim), spec.hi(dim));
    if lo == hi {
        return 0;
    }
    let n = spec.n_bins() as f64;
    let k = ((x as f64 - lo) / ((hi - lo) / n)).floor();
    k.max(0.0).min(n - 1.0) as u64
}

/// Sorted `(bin, count)` pairs of the given rows in one dimension.
fn oracle_counts(batch: &RepresentationBatch, spec: &BinningSpec, rows: &[usize], dim: usize) -> Vec<(u64, u64)> {
    let mut bins: Vec<u64> = rows.iter().map(|&r| oracle_bin(spec, dim, batch.get(r, dim))).collect();
    bins.sort();
    let mut out: Vec<(u64, u64)> = Vec::new();
    for b in bins {
        match out.last_mut() {
            Some((last, n)) if *last == b => *n += 1,
            _ => out.push((b, 1)),
        }
    }
    out
}

fn oracle_entropy(counts: &[(u64, u64)], corrected: bool) -> f64 {
    let m: u64 = counts.iter().map(|c| c.1).sum();
    let m = m as f64;
    let mut h = 0.0;
    for &(_, c) in counts {
        let p = c as f64 / m;
        h += -(p * p.log2());
    }
    if corrected {
        h += (counts.len() - 1) as f64 / (2.0 * m * LN_2);
    }
    h
}

fn oracle_efficiency(batch: &RepresentationBatch, spec: &BinningSpec, rows: &[usize], corrected: bool) -> f64 {
    let mut total = 0.0;
    for d in 0..batch.dims() {
        total += oracle_entropy(&oracle_counts(batch, spec, rows, d), corrected);
    }
    total / batch.dims() as f64 / (spec.n_bins() as f64).log2()
}

fn oracle_jsd(inside: &[(u64, u64)], outside: &[(u64, u64)]) -> f64 {
    let c: u64 = inside.iter().map(|x| x.1).sum();
    let cc: u64 = outside.iter().map(|x| x.1).sum();
    let (c, cc) = (c as f64, cc as f64);
    let mut bins: Vec<u64> = inside.iter().chain(outside).map(|x| x.0).collect();
    bins.sort();
    bins.dedup();
    let lookup = |v: &[(u64, u64)], b: u64| v.iter().find(|x| x.0 == b).map_or(0, |x| x.1);
    let mut left = 0.0;
    let mut right = 0.0;
    for b in bins {
        let a = lookup(inside, b) as f64;
        let r = lookup(outside, b) as f64;
        let mix = a * cc + r * c;
        if a > 0.0 {
            left += a * (2.0 * (a * cc) / mix).log2();
        }
        if r > 0.0 {
            right += r * (2.0 * (r * c) / mix).log2();
        }
    }
    (left / (2.0 * c) + right / (2.0 * cc)).clamp(0.0, 1.0)
}

fn oracle_mean(values: &[(usize, f64)], weighting: Weighting) -> f64 {
    match weighting {
        Weighting::Unweighted => values.iter().map(|v| v.1).sum::<f64>() / values.len() as f64,
        Weighting::Frequency => {
            let n: usize = values.iter().map(|v| v.0).sum();
            values.iter().map(|v| v.0 as f64 * v.1).sum::<f64>() / n as f64
        }
    }
}

fn oracle_set(
    batch: &RepresentationBatch,
    spec: &BinningSpec,
    set: &LabelSet,
    information: f64,
    opts: &AnalyzeOptions,
) -> std::result::Result<SetMeasures, String> {
    if set.rows() != batch.rows() {
        return Err(format!(
            "alignment: alignment error: tokens={} rows={}",
            set.rows(),
            batch.rows()
        ));
    }
    let mut per = Vec::new();
    let mut excluded = Vec::new();
    for (id, label) in set.vocab().iter().enumerate() {
        let rows: Vec<usize> = (0..batch.rows())
            .filter(|&r| set.row_labels()[r] as usize == id)
            .collect();
        if rows.len() < opts.min_count {
            excluded.push(crate::labels::ExcludedLabel {
                label: label.clone(),
                count: rows.len(),
            });
            continue;
        }
        let rest: Vec<usize> = (0..batch.rows())
            .filter(|&r| set.row_labels()[r] as usize != id)
            .collect();
        let eff = oracle_efficiency(batch, spec, &rows, opts.corrected);
        let dis = if rest.is_empty() {
            None
        } else {
            let mut s = 0.0;
            for d in 0..batch.dims() {
                s += oracle_jsd(
                    &oracle_counts(batch, spec, &rows, d),
                    &oracle_counts(batch, spec, &rest, d),
                );
            }
            Some(s / batch.dims() as f64)
        };
        per.push((label.clone(), rows.len(), eff, dis));
    }
    if per.is_empty() {
        return Err(format!(
            "empty-labelset: empty label set: no {} label occurs at least {} times",
            set.name(),
            opts.min_count
        ));
    }
    let variation = oracle_mean(&per.iter().map(|p| (p.1, p.2)).collect::<Vec<_>>(), opts.weighting);
    let separable = per.len() >= 2;
    let disentanglement = separable.then(|| {
        oracle_mean(
            &per.iter().map(|p| (p.1, p.3.unwrap_or(0.0))).collect::<Vec<_>>(),
            opts.weighting,
        )
    });
    Ok(SetMeasures {
        variation,
        regularity: information - variation,
        disentanglement,
        disentanglement_error: (!separable).then(|| {
            format!(
                "undefined measure: disentanglement of {} needs at least 2 active labels, found {}",
                set.name(),
                per.len()
            )
        }),
        n_labels: set.vocab().len(),
        n_active: per.len(),
        excluded,
        per_label: if opts.per_label {
            per.iter()
                .map(|(label, count, eff, dis)| LabelMeasures {
                    label: label.clone(),
                    count: *count,
                    variation: *eff,
                    regularity: information - eff,
                    disentanglement: if separable { *dis } else { None },
                })
                .collect()
        } else {
            Vec::new()
        },
    })
}

/// Recomputes a [`MeasureReport`] by brute force. Only the information
/// regularity baseline is supported.
pub fn oracle_measures(
    batch: &RepresentationBatch,
    spec: &BinningSpec,
    sets: &[LabelSet],
    opts: &AnalyzeOptions,
) -> Result<MeasureReport> {
    if batch.rows() > ORACLE_MAX_ROWS {
        return Err(Error::InvalidParameter(format!(
            "oracle is limited to {ORACLE_MAX_ROWS} rows, got {}",
            batch.rows()
        )));
    }
    if opts.regularity_baseline != RegularityBaseline::Information {
        return Err(Error::InvalidParameter(
            "oracle supports only the information baseline".into(),
        ));
    }
    if batch.dims() != spec.dims() {
        return Err(Error::Shape("oracle: batch/spec dims differ".into()));
    }
    let all: Vec<usize> = (0..batch.rows()).collect();
    let information = oracle_efficiency(batch, spec, &all, opts.corrected);
    let sets = sets
        .iter()
        .map(|set| match oracle_set(batch, spec, set, information, opts) {
            Ok(m) => SetReport {
                name: set.name().to_string(),
                measures: Some(m),
                error: None,
            },
            Err(e) => SetReport {
                name: set.name().to_string(),
                measures: None,
                error: Some(e),
            },
        })
        .collect();
    Ok(MeasureReport {
        n_bins: spec.n_bins(),
        corrected: opts.corrected,
        min_count: opts.min_count,
        weighting: opts.weighting,
        regularity_baseline: RegularityBaseline::Information,
        information,
        sets,
    })
}
