//! Measure trajectories over checkpoints, rank correlation against loss or
//! generalization accuracy, and confidence intervals across runs.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimator::{fit_bins, BinningSpec, DEFAULT_BINS};
use crate::io::{read_label_file, read_reps, validate_alignment, RunManifest};
use crate::labels::{build_pos_labels, build_token_labels, derive_bigram_labels, LabelKind, LabelSet, SentenceRecord};
use crate::measures::{AnalyzeOptions, PreparedBatch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub step: u64,
    pub loss: f64,
    pub gen_acc: Option<f64>,
    /// One entry per series key, `None` where the measure was undefined.
    pub values: Vec<Option<f64>>,
}

/// Flattened measure values per checkpoint for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSeries {
    pub run_id: String,
    pub keys: Vec<String>,
    pub points: Vec<SeriesPoint>,
    /// Bin edges fitted at each successful checkpoint.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub specs: Vec<(u64, BinningSpec)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MeasureSeries {
    pub fn point(&self, step: u64) -> Option<&SeriesPoint> {
        self.points.iter().find(|p| p.step == step)
    }

    /// Value of `key` at a point. Besides measure keys, `step`, `loss` and
    /// `gen_acc` are accepted.
    pub fn value(&self, point: &SeriesPoint, key: &str) -> Result<Option<f64>> {
        Ok(match key {
            "step" => Some(point.step as f64),
            "loss" => Some(point.loss),
            "gen_acc" => point.gen_acc,
            _ => {
                let i = self
                    .keys
                    .iter()
                    .position(|k| k == key)
                    .ok_or_else(|| Error::MissingLabel(format!("series key {key:?} not in run {}", self.run_id)))?;
                point.values[i]
            }
        })
    }

    pub fn column(&self, key: &str) -> Result<Vec<Option<f64>>> {
        self.points.iter().map(|p| self.value(p, key)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    pub n_bins: usize,
    /// Label sets to measure: `token`, `pos`, `bigram`, or a key of the
    /// manifest's `labels` map.
    pub sets: Vec<String>,
    pub analyze: AnalyzeOptions,
    /// Abort on the first failing checkpoint instead of skipping it.
    pub strict: bool,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_BINS,
            sets: vec!["token".into()],
            analyze: AnalyzeOptions::default(),
            strict: false,
        }
    }
}

/// Series keys for the given set names, in output order.
pub fn series_keys(sets: &[String]) -> Vec<String> {
    let mut keys = vec!["information".to_string()];
    for s in sets {
        for m in ["variation", "regularity", "disentanglement"] {
            keys.push(format!("{s}.{m}"));
        }
    }
    keys
}

/// Builds the named label sets from token records and extra label files.
pub fn build_label_sets(
    names: &[String],
    records: &[SentenceRecord],
    extra: &BTreeMap<String, Vec<String>>,
) -> Result<Vec<LabelSet>> {
    names
        .iter()
        .map(|name| match name.as_str() {
            "token" => build_token_labels(records),
            "pos" => build_pos_labels(records),
            "bigram" => derive_bigram_labels(records),
            other => {
                let labels = extra
                    .get(other)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown label set {other:?}")))?;
                LabelSet::from_labels(LabelKind::Custom(other.to_string()), labels)
            }
        })
        .collect()
}

pub fn compute_series(manifest: &RunManifest, opts: &SeriesOptions) -> Result<MeasureSeries> {
    let records = manifest.records()?;
    let mut extra = BTreeMap::new();
    for name in &opts.sets {
        if let Some(path) = manifest.labels.get(name) {
            extra.insert(name.clone(), read_label_file(path)?);
        }
    }
    let sets = build_label_sets(&opts.sets, &records, &extra)?;
    let keys = series_keys(&opts.sets);

    let outcomes: Vec<Result<(SeriesPoint, BinningSpec)>> = manifest
        .checkpoints
        .par_iter()
        .map(|ckpt| {
            let batch = read_reps(&ckpt.reps_path)?;
            validate_alignment(&batch, &records)?;
            let spec = fit_bins(&batch, opts.n_bins)?;
            let report = PreparedBatch::new(&batch, &spec)?.analyze(&sets, &opts.analyze)?;
            let values = report.scalars().into_iter().map(|(_, v)| v).collect();
            let point = SeriesPoint {
                step: ckpt.step,
                loss: ckpt.loss,
                gen_acc: ckpt.generalization_accuracy,
                values,
            };
            Ok((point, spec))
        })
        .collect();

    let mut series = MeasureSeries {
        run_id: manifest.run_id.clone(),
        keys,
        points: Vec::new(),
        specs: Vec::new(),
        warnings: Vec::new(),
    };
    for (ckpt, outcome) in manifest.checkpoints.iter().zip(outcomes) {
        match outcome {
            Ok((point, spec)) => {
                series.points.push(point);
                series.specs.push((ckpt.step, spec));
            }
            Err(e) if opts.strict => return Err(e),
            Err(e) => {
                let msg = format!("run {} step {} skipped: {e}", manifest.run_id, ckpt.step);
                warn!("{msg}");
                series.warnings.push(msg);
            }
        }
    }
    Ok(series)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `run_id,step,loss,gen_acc,<key...>` rows for every series.
pub fn write_series_csv<W: std::io::Write>(series: &[MeasureSeries], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let keys = series.first().map(|s| s.keys.clone()).unwrap_or_default();
    let to_err = |e: csv::Error| Error::io("<series csv>", std::io::Error::other(e));
    let mut header = vec!["run_id".to_string(), "step".into(), "loss".into(), "gen_acc".into()];
    header.extend(keys.iter().cloned());
    w.write_record(&header).map_err(to_err)?;
    for s in series {
        if s.keys != keys {
            return Err(Error::InvalidData(format!("run {} has a different key set", s.run_id)));
        }
        for p in &s.points {
            let mut row = vec![
                s.run_id.clone(),
                p.step.to_string(),
                p.loss.to_string(),
                fmt_opt(p.gen_acc),
            ];
            row.extend(p.values.iter().map(|v| fmt_opt(*v)));
            w.write_record(&row).map_err(to_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<series csv>", e))
}

/// Reads a series CSV; rows are grouped by `run_id` in order of first appearance.
pub fn read_series_csv(path: impl AsRef<Path>) -> Result<Vec<MeasureSeries>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let fixed = ["run_id", "step", "loss", "gen_acc"];
    if header.len() < 4 || header.iter().take(4).ne(fixed) {
        return Err(parse_err(1, format!("header must start with {}", fixed.join(","))));
    }
    let keys: Vec<String> = header.iter().skip(4).map(String::from).collect();
    let mut out: Vec<MeasureSeries> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let num = |f: &str| -> Result<Option<f64>> {
            if f.is_empty() {
                Ok(None)
            } else {
                f.parse::<f64>()
                    .map(Some)
                    .map_err(|e| parse_err(line, format!("{f:?}: {e}")))
            }
        };
        let step = rec[1]
            .parse::<u64>()
            .map_err(|e| parse_err(line, format!("step: {e}")))?;
        let loss = num(&rec[2])?.ok_or_else(|| parse_err(line, "empty loss".into()))?;
        let point = SeriesPoint {
            step,
            loss,
            gen_acc: num(&rec[3])?,
            values: rec.iter().skip(4).map(num).collect::<Result<_>>()?,
        };
        let run_id = &rec[0];
        let idx = match out.iter().position(|s| s.run_id == run_id) {
            Some(i) => i,
            None => {
                out.push(MeasureSeries {
                    run_id: run_id.to_string(),
                    keys: keys.clone(),
                    points: Vec::new(),
                    specs: Vec::new(),
                    warnings: Vec::new(),
                });
                out.len() - 1
            }
        };
        let series = &mut out[idx];
        if series.points.last().is_some_and(|p| p.step >= step) {
            return Err(parse_err(
                line,
                format!("steps of run {run_id} must be strictly increasing"),
            ));
        }
        series.points.push(point);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub n: usize,
    pub rho: f64,
    pub p_two_sided: f64,
    pub method: String,
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided p-value of a rank correlation via the t approximation with
/// `n - 2` degrees of freedom. `|rho| = 1` gives exactly 0.
pub fn spearman_p_value(rho: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n });
    }
    if rho.abs() >= 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    Ok((2.0 * dist.sf(t.abs())).clamp(0.0, 1.0))
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<CorrelationResult> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "series lengths differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n });
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::InvalidData("NaN in correlation input".into()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mean, b - mean);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(format!(
            "zero variance in {} series",
            if sxx == 0.0 { "first" } else { "second" }
        )));
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok(CorrelationResult {
        n,
        rho,
        p_two_sided: spearman_p_value(rho, n)?,
        method: "spearman (average ranks); two-sided p via t approximation, df = n-2".into(),
    })
}

/// Spearman correlation between two keys across the points of one run.
pub fn correlate_within_run(series: &MeasureSeries, x: &str, y: &str) -> Result<CorrelationResult> {
    let xs = series.column(x)?;
    let ys = series.column(y)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = xs.into_iter().zip(ys).filter_map(|(a, b)| Some((a?, b?))).unzip();
    spearman(&xs, &ys)
}

fn values_at_step(series: &[MeasureSeries], key: &str, step: u64) -> Result<(Vec<f64>, Vec<String>)> {
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for s in series {
        match s.point(step).map(|p| s.value(p, key)).transpose()?.flatten() {
            Some(v) => values.push(v),
            None => missing.push(s.run_id.clone()),
        }
    }
    Ok((values, missing))
}

/// Spearman correlation between two keys at one step, one pair per run.
pub fn correlate_keys_across_runs(series: &[MeasureSeries], x: &str, y: &str, step: u64) -> Result<CorrelationResult> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut missing = Vec::new();
    for s in series {
        let pair = match s.point(step) {
            Some(p) => s.value(p, x)?.zip(s.value(p, y)?),
            None => None,
        };
        match pair {
            Some((a, b)) => {
                xs.push(a);
                ys.push(b);
            }
            None => missing.push(s.run_id.clone()),
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientRuns(format!(
            "{} runs have {x} and {y} at step {step}, need 3; missing: [{}]",
            xs.len(),
            missing.join(", ")
        )));
    }
    spearman(&xs, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Loss,
    GenAcc,
}

impl Target {
    pub fn key(self) -> &'static str {
        match self {
            Target::Loss => "loss",
            Target::GenAcc => "gen_acc",
        }
    }
}

pub fn correlate_across_runs(
    series: &[MeasureSeries],
    key: &str,
    target: Target,
    step: u64,
) -> Result<CorrelationResult> {
    correlate_keys_across_runs(series, key, target.key(), step)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub ci95_half_width: f64,
}

/// Mean and 95% t-interval half-width of `values`.
pub fn mean_ci95(values: &[f64]) -> Result<Aggregate> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let all_equal = values.iter().all(|&v| v == values[0]);
    let half = if all_equal {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("df is positive")
            .inverse_cdf(0.975);
        t * var.sqrt() / (n as f64).sqrt()
    };
    Ok(Aggregate {
        n,
        mean: if all_equal { values[0] } else { mean },
        ci95_half_width: half,
    })
}

pub fn aggregate_runs(series: &[MeasureSeries], key: &str, step: u64) -> Result<Aggregate> {
    let (values, missing) = values_at_step(series, key, step)?;
    if values.len() < 2 {
        return Err(Error::InsufficientRuns(format!(
            "{} runs have {key} at step {step}, need 2; missing: [{}]",
            values.len(),
            missing.join(", ")
        )));
    }
    mean_ci95(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_monotone_and_antitone() {
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert_eq!((r.rho, r.p_two_sided), (1.0, 0.0));
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!((r.rho, r.p_two_sided), (-1.0, 0.0));
    }

    #[test]
    fn p_value_anchor() {
        let p = spearman_p_value(0.65, 10).unwrap();
        assert!((p - 0.042).abs() <= 0.005, "p = {p}");
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn correlation_errors() {
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(matches!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(Error::Shape(_))));
        assert!(matches!(
            spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn ci_examples() {
        let a = mean_ci95(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((a.mean, a.ci95_half_width), (1.0, 0.0));
        let a = mean_ci95(&[0.0, 1.0]).unwrap();
        assert_eq!(a.mean, 0.5);
        assert!((a.ci95_half_width - 12.706 * 0.5).abs() < 1e-3);
        assert!(mean_ci95(&[1.0]).is_err());
        assert_eq!(mean_ci95(&[0.1, 0.1, 0.1]).unwrap().ci95_half_width, 0.0);
    }

    fn run(id: &str, rows: &[(u64, f64, Option<f64>, f64)]) -> MeasureSeries {
        MeasureSeries {
            run_id: id.into(),
            keys: vec!["information".into()],
            points: rows
                .iter()
                .map(|&(step, loss, gen_acc, v)| SeriesPoint {
                    step,
                    loss,
                    gen_acc,
                    values: vec![Some(v)],
                })
                .collect(),
            specs: vec![],
            warnings: vec![],
        }
    }

    #[test]
    fn across_runs() {
        let runs: Vec<MeasureSeries> = (0..5)
            .map(|i| run(&format!("r{i}"), &[(10, 1.0, Some(i as f64), i as f64 * 0.1)]))
            .collect();
        let r = correlate_across_runs(&runs, "information", Target::GenAcc, 10).unwrap();
        assert_eq!(r.rho, 1.0);
        assert_eq!(r.n, 5);

        let err = correlate_across_runs(&runs, "information", Target::GenAcc, 20).unwrap_err();
        assert!(err.to_string().contains("r0, r1, r2, r3, r4"));

        let same: Vec<MeasureSeries> = (0..4)
            .map(|i| run(&format!("s{i}"), &[(10, 1.0, Some(0.5), 0.3)]))
            .collect();
        assert!(matches!(
            correlate_across_runs(&same, "information", Target::Loss, 10),
            Err(Error::UndefinedCorrelation(_))
        ));

        let agg = aggregate_runs(&runs, "information", 10).unwrap();
        assert_eq!(agg.n, 5);
        assert!(aggregate_runs(&runs[..1], "information", 10).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut a = run("a", &[(1, 2.5, None, 0.1), (5, 1.25, Some(0.5), 1.0 / 3.0)]);
        a.points[0].values[0] = None;
        let b = run("b", &[(1, 3.0, Some(0.25), 0.2)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let mut buf = Vec::new();
        write_series_csv(&[a.clone(), b.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("run_id,step,loss,gen_acc,information\na,1,2.5,,\n"));
        std::fs::write(&p, buf).unwrap();
        let back = read_series_csv(&p).unwrap();
        assert_eq!(back, vec![a, b]);
    }
}
