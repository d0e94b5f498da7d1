//! Information, Variation, Regularity and Disentanglement of a representation
//! batch with respect to label sets.
//!
//! Every conditional and complement histogram reuses the bin edges fitted on
//! the full batch. Efficiencies are dimension-wise entropies divided by
//! `log2(N)`. Disentanglement compares distributions with plug-in
//! probabilities only, so it stays within `[0, 1]` whatever the estimator
//! setting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    entropy_bits, estimate_from_histogram, BinnedBatch, BinningSpec, HistogramSet, RepresentationBatch,
};
use crate::labels::{ExcludedLabel, LabelSet, DEFAULT_MIN_COUNT};

/// How per-label values are averaged into a set value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Weighted by label occurrence count.
    Frequency,
}

/// What regularity is measured against.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "set")]
pub enum RegularityBaseline {
    /// `information - variation`.
    #[default]
    Information,
    /// `variation(other set) - variation`.
    Variation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub corrected: bool,
    pub min_count: usize,
    pub weighting: Weighting,
    pub regularity_baseline: RegularityBaseline,
    pub per_label: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            corrected: true,
            min_count: DEFAULT_MIN_COUNT,
            weighting: Weighting::Unweighted,
            regularity_baseline: RegularityBaseline::Information,
            per_label: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMeasures {
    pub label: String,
    pub count: usize,
    pub variation: f64,
    pub regularity: f64,
    pub disentanglement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetMeasures {
    pub variation: f64,
    pub regularity: f64,
    /// `None` when fewer than two labels survive the count filter.
    pub disentanglement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disentanglement_error: Option<String>,
    pub n_labels: usize,
    pub n_active: usize,
    pub excluded: Vec<ExcludedLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_label: Vec<LabelMeasures>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetReport {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measures: Option<SetMeasures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub n_bins: usize,
    pub corrected: bool,
    pub min_count: usize,
    pub weighting: Weighting,
    pub regularity_baseline: RegularityBaseline,
    pub information: f64,
    pub sets: Vec<SetReport>,
}

impl MeasureReport {
    pub fn set(&self, name: &str) -> Option<&SetMeasures> {
        self.sets
            .iter()
            .find(|s| s.name == name)
            .and_then(|s| s.measures.as_ref())
    }

    /// Flattened scalars keyed `information` and `<set>.<measure>`, in report
    /// order. Failed sets and undefined measures yield `None`.
    pub fn scalars(&self) -> Vec<(String, Option<f64>)> {
        let mut out = vec![("information".to_string(), Some(self.information))];
        for s in &self.sets {
            let m = s.measures.as_ref();
            out.push((format!("{}.variation", s.name), m.map(|m| m.variation)));
            out.push((format!("{}.regularity", s.name), m.map(|m| m.regularity)));
            out.push((format!("{}.disentanglement", s.name), m.and_then(|m| m.disentanglement)));
        }
        out
    }
}

/// Jensen-Shannon divergence in bits between two probability vectors over the
/// same bins.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    for v in [p, q] {
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidData(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(s));
        }
    }
    let (mut sp, mut sq) = (0.0f64, 0.0f64);
    for (&pb, &qb) in p.iter().zip(q) {
        let mix = pb + qb;
        if pb > 0.0 {
            sp += pb * (2.0 * pb / mix).log2();
        }
        if qb > 0.0 {
            sq += qb * (2.0 * qb / mix).log2();
        }
    }
    Ok((0.5 * sp + 0.5 * sq).clamp(0.0, 1.0))
}

/// JSD between a label histogram (`inside`, `c` rows) and its complement
/// (`total - inside`, `cc` rows), using exact integer cross-products.
#[inline]
fn jsd_label_vs_rest(inside: &[u32], total: &[u64], c: u64, cc: u64) -> f64 {
    let (cf, ccf) = (c as f64, cc as f64);
    let (mut sp, mut sq) = (0.0f64, 0.0f64);
    for (&a, &t) in inside.iter().zip(total) {
        if t == 0 {
            continue;
        }
        let a = a as u64;
        let r = t - a;
        let ac = a as f64 * ccf;
        let rc = r as f64 * cf;
        let mix = ac + rc;
        if a > 0 {
            sp += a as f64 * (2.0 * ac / mix).log2();
        }
        if r > 0 {
            sq += r as f64 * (2.0 * rc / mix).log2();
        }
    }
    (sp / (2.0 * cf) + sq / (2.0 * ccf)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy)]
struct LabelStat {
    count: usize,
    efficiency: f64,
    disentanglement: Option<f64>,
}

/// A batch discretized once against a fixed spec; every measure reads from it.
pub struct PreparedBatch {
    binned: BinnedBatch,
    global: HistogramSet,
}

impl PreparedBatch {
    pub fn new(batch: &RepresentationBatch, spec: &BinningSpec) -> Result<Self> {
        let binned = BinnedBatch::new(batch, spec)?;
        let global = binned.histogram();
        Ok(Self { binned, global })
    }

    pub fn rows(&self) -> usize {
        self.binned.rows
    }

    pub fn n_bins(&self) -> usize {
        self.binned.n_bins
    }

    pub fn information(&self, corrected: bool) -> f64 {
        estimate_from_histogram(&self.global, corrected).efficiency
    }

    fn check_rows(&self, set: &LabelSet) -> Result<()> {
        if set.rows() != self.rows() {
            return Err(Error::Alignment {
                tokens: set.rows(),
                rows: self.rows(),
            });
        }
        Ok(())
    }

    /// Conditional efficiency and label-vs-rest disentanglement for each id.
    fn label_stats(&self, set: &LabelSet, ids: &[u32], corrected: bool) -> Vec<LabelStat> {
        let n_labels = set.vocab().len();
        // counting sort of rows by label
        let mut offsets = vec![0usize; n_labels + 1];
        for &l in set.row_labels() {
            offsets[l as usize + 1] += 1;
        }
        for i in 0..n_labels {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut order = vec![0u32; set.rows()];
        for (row, &l) in set.row_labels().iter().enumerate() {
            order[cursor[l as usize]] = row as u32;
            cursor[l as usize] += 1;
        }

        let dims = self.binned.dims;
        let n_bins = self.binned.n_bins;
        let m = self.rows() as u64;
        let log_n = (n_bins as f64).log2();
        ids.par_iter()
            .map_init(
                || vec![0u32; dims * n_bins],
                |table, &id| {
                    let rows = &order[offsets[id as usize]..offsets[id as usize + 1]];
                    for &r in rows {
                        for (d, &b) in self.binned.row(r as usize).iter().enumerate() {
                            table[d * n_bins + b as usize] += 1;
                        }
                    }
                    let c = rows.len() as u64;
                    let mut h_sum = 0.0f64;
                    let mut jsd_sum = 0.0f64;
                    for d in 0..dims {
                        let slice = &table[d * n_bins..(d + 1) * n_bins];
                        h_sum += entropy_bits(slice.iter().map(|&x| x as u64), c, corrected);
                        if c < m {
                            jsd_sum += jsd_label_vs_rest(slice, self.global.counts(d), c, m - c);
                        }
                    }
                    table.iter_mut().for_each(|x| *x = 0);
                    LabelStat {
                        count: rows.len(),
                        efficiency: h_sum / dims as f64 / log_n,
                        disentanglement: (c < m).then(|| jsd_sum / dims as f64),
                    }
                },
            )
            .collect()
    }

    pub fn conditional_entropy(&self, set: &LabelSet, label: &str, corrected: bool) -> Result<f64> {
        self.check_rows(set)?;
        let id = set
            .id_of(label)
            .ok_or_else(|| Error::MissingLabel(format!("{label:?} not in {} vocabulary", set.name())))?;
        Ok(self.label_stats(set, &[id], corrected)[0].efficiency)
    }

    fn active(&self, set: &LabelSet) -> Result<Vec<u32>> {
        self.check_rows(set)?;
        let ids = set.active_ids();
        if ids.is_empty() {
            return Err(Error::EmptyLabelSet(format!("no active labels in {}", set.name())));
        }
        Ok(ids)
    }

    pub fn variation(&self, set: &LabelSet, corrected: bool, weighting: Weighting) -> Result<f64> {
        let ids = self.active(set)?;
        let stats = self.label_stats(set, &ids, corrected);
        Ok(aggregate(&stats, weighting, |s| s.efficiency))
    }

    pub fn regularity(&self, set: &LabelSet, corrected: bool, weighting: Weighting) -> Result<f64> {
        Ok(self.information(corrected) - self.variation(set, corrected, weighting)?)
    }

    pub fn disentanglement(&self, set: &LabelSet, weighting: Weighting) -> Result<f64> {
        let ids = self.active(set)?;
        check_separable(set, ids.len())?;
        let stats = self.label_stats(set, &ids, false);
        Ok(aggregate(&stats, weighting, |s| s.disentanglement.unwrap_or(0.0)))
    }

    fn set_measures(&self, set: &LabelSet, information: f64, opts: &AnalyzeOptions) -> Result<SetMeasures> {
        self.check_rows(set)?;
        let (filtered, excluded) = set.filter_min_count(opts.min_count)?;
        let ids = filtered.active_ids();
        let stats = self.label_stats(&filtered, &ids, opts.corrected);
        let variation = aggregate(&stats, opts.weighting, |s| s.efficiency);
        let (disentanglement, disentanglement_error) = match check_separable(&filtered, ids.len()) {
            Ok(()) => (
                Some(aggregate(&stats, opts.weighting, |s| s.disentanglement.unwrap_or(0.0))),
                None,
            ),
            Err(e) => (None, Some(e.to_string())),
        };
        let per_label = if opts.per_label {
            ids.iter()
                .zip(&stats)
                .map(|(&id, s)| LabelMeasures {
                    label: filtered.label(id).to_string(),
                    count: s.count,
                    variation: s.efficiency,
                    regularity: information - s.efficiency,
                    disentanglement: disentanglement.and(s.disentanglement),
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(SetMeasures {
            variation,
            regularity: information - variation,
            disentanglement,
            disentanglement_error,
            n_labels: filtered.vocab().len(),
            n_active: ids.len(),
            excluded,
            per_label,
        })
    }

    pub fn analyze(&self, sets: &[LabelSet], opts: &AnalyzeOptions) -> Result<MeasureReport> {
        if opts.min_count == 0 {
            return Err(Error::InvalidParameter("min_count must be at least 1".into()));
        }
        let information = self.information(opts.corrected);
        let mut reports: Vec<SetReport> = sets
            .iter()
            .map(|set| match self.set_measures(set, information, opts) {
                Ok(m) => SetReport {
                    name: set.name().to_string(),
                    measures: Some(m),
                    error: None,
                },
                Err(e) => SetReport {
                    name: set.name().to_string(),
                    measures: None,
                    error: Some(format!("{}: {e}", e.kind())),
                },
            })
            .collect();
        if let RegularityBaseline::Variation(base) = &opts.regularity_baseline {
            rebase_regularity(&mut reports, base);
        }
        Ok(MeasureReport {
            n_bins: self.n_bins(),
            corrected: opts.corrected,
            min_count: opts.min_count,
            weighting: opts.weighting,
            regularity_baseline: opts.regularity_baseline.clone(),
            information,
            sets: reports,
        })
    }
}

fn check_separable(set: &LabelSet, active: usize) -> Result<()> {
    if active < 2 {
        return Err(Error::UndefinedMeasure(format!(
            "disentanglement of {} needs at least 2 active labels, found {active}",
            set.name()
        )));
    }
    Ok(())
}

fn aggregate(stats: &[LabelStat], weighting: Weighting, value: impl Fn(&LabelStat) -> f64) -> f64 {
    match weighting {
        Weighting::Unweighted => stats.iter().map(&value).sum::<f64>() / stats.len() as f64,
        Weighting::Frequency => {
            let total: usize = stats.iter().map(|s| s.count).sum();
            stats.iter().map(|s| s.count as f64 * value(s)).sum::<f64>() / total as f64
        }
    }
}

fn rebase_regularity(reports: &mut [SetReport], base: &str) {
    let baseline = reports
        .iter()
        .find(|r| r.name == base)
        .and_then(|r| r.measures.as_ref())
        .map(|m| m.variation);
    for r in reports.iter_mut() {
        match (baseline, r.measures.as_mut()) {
            (Some(b), Some(m)) => {
                m.regularity = b - m.variation;
                for l in &mut m.per_label {
                    l.regularity = b - l.variation;
                }
            }
            (None, Some(_)) => {
                r.measures = None;
                r.error = Some(format!("missing-label: regularity baseline set {base:?} unavailable"));
            }
            _ => {}
        }
    }
}

pub fn information(batch: &RepresentationBatch, spec: &BinningSpec, corrected: bool) -> Result<f64> {
    Ok(PreparedBatch::new(batch, spec)?.information(corrected))
}

/// Efficiency of the rows carrying `label`, binned with the global spec.
pub fn conditional_entropy(
    batch: &RepresentationBatch,
    spec: &BinningSpec,
    set: &LabelSet,
    label: &str,
    corrected: bool,
) -> Result<f64> {
    PreparedBatch::new(batch, spec)?.conditional_entropy(set, label, corrected)
}

pub fn variation(batch: &RepresentationBatch, spec: &BinningSpec, set: &LabelSet, corrected: bool) -> Result<f64> {
    PreparedBatch::new(batch, spec)?.variation(set, corrected, Weighting::Unweighted)
}

pub fn regularity(batch: &RepresentationBatch, spec: &BinningSpec, set: &LabelSet, corrected: bool) -> Result<f64> {
    PreparedBatch::new(batch, spec)?.regularity(set, corrected, Weighting::Unweighted)
}

pub fn disentanglement(batch: &RepresentationBatch, spec: &BinningSpec, set: &LabelSet) -> Result<f64> {
    PreparedBatch::new(batch, spec)?.disentanglement(set, Weighting::Unweighted)
}

pub fn analyze(
    batch: &RepresentationBatch,
    spec: &BinningSpec,
    sets: &[LabelSet],
    opts: &AnalyzeOptions,
) -> Result<MeasureReport> {
    PreparedBatch::new(batch, spec)?.analyze(sets, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::fit_bins;
    use crate::labels::LabelKind;

    fn entropy(v: &[f64]) -> f64 {
        v.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum()
    }

    fn jsd_via_entropies(p: &[f64], q: &[f64]) -> f64 {
        let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
        entropy(&m) - 0.5 * (entropy(p) + entropy(q))
    }

    #[test]
    fn jsd_examples() {
        assert_eq!(jsd(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(jsd(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.5]).unwrap(), 1.0);
        let v = jsd(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        let oracle = jsd_via_entropies(&[1.0, 0.0], &[0.5, 0.5]);
        assert!((oracle - 0.311_278_124_459_132_8).abs() < 1e-15);
        assert!((v - oracle).abs() < 1e-12);
    }

    #[test]
    fn jsd_rejects_bad_inputs() {
        assert!(matches!(jsd(&[1.0], &[0.5, 0.5]), Err(Error::SupportMismatch { .. })));
        assert!(matches!(jsd(&[0.5, 0.4], &[0.5, 0.5]), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn counts_form_matches_probability_form() {
        let inside = [3u32, 0, 1, 4];
        let total = [5u64, 2, 1, 4];
        let c = 8u64;
        let cc = 4u64;
        let p: Vec<f64> = inside.iter().map(|&a| a as f64 / c as f64).collect();
        let q: Vec<f64> = inside
            .iter()
            .zip(&total)
            .map(|(&a, &t)| (t - a as u64) as f64 / cc as f64)
            .collect();
        let v = jsd_label_vs_rest(&inside, &total, c, cc);
        assert!((v - jsd_via_entropies(&p, &q)).abs() < 1e-12);
    }

    fn two_label_batch() -> (RepresentationBatch, LabelSet) {
        // label a on rows with value 0 and 1, label b on rows with value 2 and 3
        let rows: Vec<[f32; 1]> = vec![[0.0], [1.0], [2.0], [3.0], [0.0], [1.0], [2.0], [3.0]];
        let b = RepresentationBatch::from_rows(&rows).unwrap();
        let set = LabelSet::from_labels(LabelKind::Token, &["a", "a", "b", "b", "a", "a", "b", "b"]).unwrap();
        (b, set)
    }

    #[test]
    fn separated_labels() {
        let (b, set) = two_label_batch();
        let spec = fit_bins(&b, 4).unwrap();
        assert_eq!(disentanglement(&b, &spec, &set).unwrap(), 1.0);
        // each label covers 2 of 4 equally filled bins
        let v = variation(&b, &spec, &set, false).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let info = information(&b, &spec, false).unwrap();
        assert_eq!(info, 1.0);
        assert_eq!(regularity(&b, &spec, &set, false).unwrap(), info - v);
    }

    #[test]
    fn whole_batch_label_equals_information() {
        let (b, _) = two_label_batch();
        let spec = fit_bins(&b, 3).unwrap();
        let one = LabelSet::from_labels(LabelKind::Token, &["x"; 8]).unwrap();
        for corrected in [false, true] {
            let info = information(&b, &spec, corrected).unwrap();
            assert_eq!(conditional_entropy(&b, &spec, &one, "x", corrected).unwrap(), info);
            assert_eq!(variation(&b, &spec, &one, corrected).unwrap(), info);
        }
        assert!(matches!(
            disentanglement(&b, &spec, &one),
            Err(Error::UndefinedMeasure(_))
        ));
    }

    #[test]
    fn identical_label_distributions_give_zero() {
        let rows: Vec<[f32; 2]> = vec![[0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        let b = RepresentationBatch::from_rows(&rows).unwrap();
        let set = LabelSet::from_labels(LabelKind::Token, &["a", "a", "b", "b"]).unwrap();
        let spec = fit_bins(&b, 2).unwrap();
        assert_eq!(disentanglement(&b, &spec, &set).unwrap(), 0.0);
    }

    #[test]
    fn unknown_label() {
        let (b, set) = two_label_batch();
        let spec = fit_bins(&b, 4).unwrap();
        assert!(matches!(
            conditional_entropy(&b, &spec, &set, "zzz", true),
            Err(Error::MissingLabel(_))
        ));
    }

    #[test]
    fn analyze_reports_per_set_errors() {
        let (b, set) = two_label_batch();
        let spec = fit_bins(&b, 4).unwrap();
        let short = LabelSet::from_labels(LabelKind::Pos, &["x", "y"]).unwrap();
        let opts = AnalyzeOptions {
            min_count: 1,
            ..Default::default()
        };
        let report = analyze(&b, &spec, &[set, short], &opts).unwrap();
        assert!(report.sets[0].measures.is_some());
        assert!(report.sets[1].error.as_deref().unwrap().contains("tokens=2 rows=8"));

        let empty = analyze(&b, &spec, &[], &opts).unwrap();
        assert!(empty.sets.is_empty());
        assert_eq!(empty.scalars().len(), 1);
    }

    #[test]
    fn frequency_weighting_and_baseline() {
        let rows: Vec<[f32; 1]> = (0..12).map(|i| [i as f32]).collect();
        let b = RepresentationBatch::from_rows(&rows).unwrap();
        let labels: Vec<&str> = (0..12).map(|i| if i < 9 { "big" } else { "small" }).collect();
        let tok = LabelSet::from_labels(LabelKind::Token, &labels).unwrap();
        let coarse = LabelSet::from_labels(LabelKind::Custom("all".into()), &["z"; 12]).unwrap();
        let spec = fit_bins(&b, 12).unwrap();
        let mut opts = AnalyzeOptions {
            min_count: 1,
            corrected: false,
            ..Default::default()
        };
        let unweighted = analyze(&b, &spec, std::slice::from_ref(&tok), &opts).unwrap();
        opts.weighting = Weighting::Frequency;
        let weighted = analyze(&b, &spec, std::slice::from_ref(&tok), &opts).unwrap();
        let per = &unweighted.set("token").unwrap().per_label;
        let expect = (9.0 * per[0].variation + 3.0 * per[1].variation) / 12.0;
        assert!((weighted.set("token").unwrap().variation - expect).abs() < 1e-15);

        opts.weighting = Weighting::Unweighted;
        opts.regularity_baseline = RegularityBaseline::Variation("all".into());
        let r = analyze(&b, &spec, &[tok, coarse], &opts).unwrap();
        let t = r.set("token").unwrap();
        let a = r.set("all").unwrap();
        assert_eq!(t.regularity, a.variation - t.variation);
    }
}
