//! Per-row categorical label sets aligned with a representation batch.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Left element used for the first token of every sentence in bigram labels.
pub const BOS: &str = "⟨BOS⟩";

/// Default minimum occurrence count for a label to enter per-label aggregation.
pub const DEFAULT_MIN_COUNT: usize = 10;

/// One input sentence: its tokens and, optionally, one POS tag per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub sentence_id: i64,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<String>>,
}

impl SentenceRecord {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Total number of token rows across `records`.
pub fn token_count(records: &[SentenceRecord]) -> usize {
    records.iter().map(SentenceRecord::len).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Token,
    Pos,
    Bigram,
    Custom(String),
}

impl LabelKind {
    pub fn name(&self) -> &str {
        match self {
            LabelKind::Token => "token",
            LabelKind::Pos => "pos",
            LabelKind::Bigram => "bigram",
            LabelKind::Custom(name) => name,
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One label id per row, with a dense vocabulary in first-occurrence order.
///
/// `active[id]` is false for labels dropped by [`LabelSet::filter_min_count`];
/// their rows stay in the set and still count towards the pooled and
/// complement distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    kind: LabelKind,
    row_labels: Vec<u32>,
    vocab: Vec<String>,
    counts: Vec<usize>,
    active: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedLabel {
    pub label: String,
    pub count: usize,
}

#[derive(Default)]
struct VocabBuilder {
    ids: HashMap<String, u32>,
    vocab: Vec<String>,
    counts: Vec<usize>,
    rows: Vec<u32>,
}

impl VocabBuilder {
    fn push(&mut self, label: &str) {
        let id = match self.ids.get(label) {
            Some(&id) => id,
            None => {
                let id = self.vocab.len() as u32;
                self.ids.insert(label.to_owned(), id);
                self.vocab.push(label.to_owned());
                self.counts.push(0);
                id
            }
        };
        self.counts[id as usize] += 1;
        self.rows.push(id);
    }

    fn finish(self, kind: LabelKind) -> LabelSet {
        let active = vec![true; self.vocab.len()];
        LabelSet {
            kind,
            row_labels: self.rows,
            vocab: self.vocab,
            counts: self.counts,
            active,
        }
    }
}

fn non_empty(records: &[SentenceRecord]) -> Result<()> {
    if token_count(records) == 0 {
        return Err(Error::InvalidData("no tokens in record list".into()));
    }
    Ok(())
}

impl LabelSet {
    /// Builds a set from one label string per row.
    pub fn from_labels<S: AsRef<str>>(kind: LabelKind, labels: &[S]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidData(format!("label set {kind} has no rows")));
        }
        let mut b = VocabBuilder::default();
        labels.iter().for_each(|l| b.push(l.as_ref()));
        Ok(b.finish(kind))
    }

    /// Builds a set from integer ids; the vocabulary is the decimal id, in
    /// first-occurrence order.
    pub fn from_ids(kind: LabelKind, ids: &[u32]) -> Result<Self> {
        let labels: Vec<String> = ids.iter().map(u32::to_string).collect();
        Self::from_labels(kind, &labels)
    }

    pub fn kind(&self) -> &LabelKind {
        &self.kind
    }

    pub fn name(&self) -> &str {
        self.kind.name()
    }

    pub fn rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn row_labels(&self) -> &[u32] {
        &self.row_labels
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn label(&self, id: u32) -> &str {
        &self.vocab[id as usize]
    }

    pub fn id_of(&self, label: &str) -> Option<u32> {
        self.vocab.iter().position(|v| v == label).map(|i| i as u32)
    }

    pub fn is_active(&self, id: u32) -> bool {
        self.active[id as usize]
    }

    /// Ids that take part in per-label aggregation, ascending.
    pub fn active_ids(&self) -> Vec<u32> {
        (0..self.vocab.len() as u32)
            .filter(|&id| self.active[id as usize])
            .collect()
    }

    pub fn excluded(&self) -> Vec<ExcludedLabel> {
        (0..self.vocab.len())
            .filter(|&id| !self.active[id])
            .map(|id| ExcludedLabel {
                label: self.vocab[id].clone(),
                count: self.counts[id],
            })
            .collect()
    }

    /// Marks labels with fewer than `min_count` rows as excluded from
    /// per-label aggregation. Returns the filtered set and the exclusions.
    pub fn filter_min_count(&self, min_count: usize) -> Result<(LabelSet, Vec<ExcludedLabel>)> {
        if min_count == 0 {
            return Err(Error::InvalidParameter("min_count must be at least 1".into()));
        }
        let mut out = self.clone();
        for (a, &c) in out.active.iter_mut().zip(&self.counts) {
            *a = *a && c >= min_count;
        }
        if !out.active.iter().any(|&a| a) {
            return Err(Error::EmptyLabelSet(format!(
                "no {} label occurs at least {min_count} times",
                self.kind
            )));
        }
        let excluded = out.excluded();
        Ok((out, excluded))
    }
}

pub fn build_token_labels(records: &[SentenceRecord]) -> Result<LabelSet> {
    non_empty(records)?;
    let mut b = VocabBuilder::default();
    records.iter().flat_map(|r| &r.tokens).for_each(|t| b.push(t));
    Ok(b.finish(LabelKind::Token))
}

pub fn build_pos_labels(records: &[SentenceRecord]) -> Result<LabelSet> {
    non_empty(records)?;
    let mut b = VocabBuilder::default();
    for r in records {
        let pos = r.pos.as_ref().ok_or(Error::MissingLabels {
            sentence_id: r.sentence_id,
        })?;
        if pos.len() != r.tokens.len() {
            return Err(Error::InvalidData(format!(
                "sentence_id {}: {} pos tags for {} tokens",
                r.sentence_id,
                pos.len(),
                r.tokens.len()
            )));
        }
        pos.iter().for_each(|t| b.push(t));
    }
    Ok(b.finish(LabelKind::Pos))
}

/// Labels each token with its left bigram `(previous, current)`; the first
/// token of a sentence gets [`BOS`] as its left element.
pub fn derive_bigram_labels(records: &[SentenceRecord]) -> Result<LabelSet> {
    non_empty(records)?;
    // keyed on the pair so a literal "⟨BOS⟩" token cannot collide with padding
    let mut ids: HashMap<(Option<&str>, &str), u32> = HashMap::new();
    let mut vocab = Vec::new();
    let mut counts = Vec::new();
    let mut rows = Vec::with_capacity(token_count(records));
    for r in records {
        let mut prev: Option<&str> = None;
        for t in &r.tokens {
            let key = (prev, t.as_str());
            let id = *ids.entry(key).or_insert_with(|| {
                vocab.push(format!("{} {}", prev.unwrap_or(BOS), t));
                counts.push(0);
                (vocab.len() - 1) as u32
            });
            counts[id as usize] += 1;
            rows.push(id);
            prev = Some(t);
        }
    }
    let active = vec![true; vocab.len()];
    Ok(LabelSet {
        kind: LabelKind::Bigram,
        row_labels: rows,
        vocab,
        counts,
        active,
    })
}
