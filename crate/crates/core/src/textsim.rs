//! Sentence similarity: averaged word vectors, cosine, BLEU, and
//! nearest-question retrieval over the train split.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EmbeddingTable, Split};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceVector<T> {
    pub values: Vec<T>,
    pub known_tokens: usize,
}

/// Mean of the vectors of in-vocabulary tokens. Unknown tokens are skipped;
/// an all-unknown sentence maps to the zero vector.
pub fn sentence_vector<T: Scalar>(text: &str, table: &EmbeddingTable<T>) -> SentenceVector<T> {
    let dim = table.dim().unwrap_or(0);
    let mut values = vec![T::zero(); dim];
    let mut known = 0usize;
    for token in tokenize(text) {
        if let Some(v) = table.get(&token) {
            for (acc, x) in values.iter_mut().zip(v) {
                *acc += *x;
            }
            known += 1;
        }
    }
    if known > 0 {
        let n = T::from_usize(known).expect("count fits scalar");
        for x in &mut values {
            *x /= n;
        }
    }
    SentenceVector {
        values,
        known_tokens: known,
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let mut dot = T::zero();
    let mut uu = T::zero();
    let mut vv = T::zero();
    for (&a, &b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == T::zero() || vv == T::zero() {
        return Ok(T::zero());
    }
    let c = dot / (uu.sqrt() * vv.sqrt());
    // rounding can push |c| a hair past 1
    Ok(c.max(-T::one()).min(T::one()))
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU without smoothing: geometric mean of clipped n-gram
/// precisions for n = 1..=max_n times the brevity penalty.
pub fn bleu(hypothesis: &str, reference: &str, max_n: usize) -> f64 {
    bleu_tokens(&tokenize(hypothesis), &tokenize(reference), max_n)
}

pub fn bleu_tokens(hyp: &[String], reference: &[String], max_n: usize) -> f64 {
    if hyp.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let hyp_counts = ngram_counts(hyp, n);
        let total: usize = hyp_counts.values().sum();
        if total == 0 {
            return 0.0;
        }
        let ref_counts = ngram_counts(reference, n);
        let clipped: usize = hyp_counts
            .iter()
            .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let c = hyp.len() as f64;
    let r = reference.len() as f64;
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (log_sum / max_n as f64).exp()
}

/// One retrievable train question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry<T> {
    pub qid: String,
    pub vector: SentenceVector<T>,
    pub majority: String,
    /// All ten normalized answers, for the all-answers aggregation mode.
    pub answers: Vec<String>,
}

/// Averaged-embedding index over train questions, sorted by qid.
#[derive(Debug, Clone, PartialEq)]
pub struct W2vIndex<T> {
    dim: usize,
    entries: Vec<IndexEntry<T>>,
}

const W2V_MAGIC: &str = "AP-W2V-INDEX v1";

fn by_score_then_key<T: Scalar>(a: (&str, T), b: (&str, T)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(b.0))
}

impl<T: Scalar> W2vIndex<T> {
    /// Indexes every train-split instance.
    pub fn build(corpus: &Corpus, table: &EmbeddingTable<T>) -> Self {
        let train: Vec<_> = corpus.split(Split::Train).collect();
        let mut entries: Vec<IndexEntry<T>> = train
            .par_iter()
            .map(|inst| IndexEntry {
                qid: inst.qid.clone(),
                vector: sentence_vector(&inst.question, table),
                majority: inst.majority_answer(),
                answers: inst.normalized_answers(),
            })
            .collect();
        entries.sort_by(|a, b| a.qid.cmp(&b.qid));
        W2vIndex {
            dim: table.dim().unwrap_or(0),
            entries,
        }
    }

    pub fn from_entries(dim: usize, mut entries: Vec<IndexEntry<T>>) -> Result<Self> {
        for e in &entries {
            if e.vector.values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: e.vector.values.len(),
                });
            }
        }
        entries.sort_by(|a, b| a.qid.cmp(&b.qid));
        Ok(W2vIndex { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[IndexEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, qid: &str) -> Option<&IndexEntry<T>> {
        self.entries
            .binary_search_by(|e| e.qid.as_str().cmp(qid))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// The `k` entries most cosine-similar to `query`, best first, ties by qid.
    pub fn topk_by_vector(&self, query: &[T], k: usize) -> Result<Vec<(String, T)>> {
        let mut scored = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            scored.push((e.qid.as_str(), cosine(query, &e.vector.values)?));
        }
        let k = k.min(scored.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let cmp = |a: &(&str, T), b: &(&str, T)| by_score_then_key(*a, *b);
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        Ok(scored.into_iter().map(|(q, s)| (q.to_string(), s)).collect())
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{W2V_MAGIC}")?;
        writeln!(out, "dim {}", self.dim)?;
        writeln!(out, "entries {}", self.entries.len())?;
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()
                .map_err(|e| Error::Cache(e.to_string()))?
                .ok_or_else(|| Error::Cache(format!("truncated file: missing {what}")))
        };
        if next("magic")? != W2V_MAGIC {
            return Err(Error::Cache("not a W2V index file".into()));
        }
        let dim = parse_header_field(&next("dim")?, "dim")?;
        let count = parse_header_field(&next("entries")?, "entries")?;
        let mut entries = Vec::with_capacity(count);
        for i in 0..count {
            let line = next("entry")?;
            let e: IndexEntry<T> = serde_json::from_str(&line)
                .map_err(|err| Error::Cache(format!("entry {}: {err}", i + 1)))?;
            entries.push(e);
        }
        Self::from_entries(dim, entries)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file))
    }
}

pub(crate) fn parse_header_field(line: &str, name: &str) -> Result<usize> {
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next().map(str::parse::<usize>), parts.next()) {
        (Some(key), Some(Ok(v)), None) if key == name => Ok(v),
        _ => Err(Error::Cache(format!("bad {name} header line {line:?}"))),
    }
}

/// Ranks train questions by cosine similarity to `question`.
pub fn topk_similar<T: Scalar>(
    question: &str,
    index: &W2vIndex<T>,
    table: &EmbeddingTable<T>,
    k: usize,
) -> Result<Vec<(String, T)>> {
    let mut q = sentence_vector(question, table);
    if q.values.is_empty() {
        q.values = vec![T::zero(); index.dim()];
    }
    index.topk_by_vector(&q.values, k)
}

/// Train questions kept as token lists for BLEU retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuIndex {
    entries: Vec<(String, Vec<String>, String)>,
}

impl BleuIndex {
    pub fn build(corpus: &Corpus) -> Self {
        let mut entries: Vec<_> = corpus
            .split(Split::Train)
            .map(|i| (i.qid.clone(), tokenize(&i.question), i.majority_answer()))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        BleuIndex { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn majority(&self, qid: &str) -> Option<&str> {
        self.entries
            .binary_search_by(|e| e.0.as_str().cmp(qid))
            .ok()
            .map(|i| self.entries[i].2.as_str())
    }

    /// The query is scored as the hypothesis against each train question.
    pub fn topk(&self, question: &str, k: usize, max_n: usize) -> Vec<(String, f64)> {
        let hyp = tokenize(question);
        let mut scored: Vec<(&str, f64)> = self
            .entries
            .iter()
            .map(|(qid, toks, _)| (qid.as_str(), bleu_tokens(&hyp, toks, max_n)))
            .collect();
        scored.sort_by(|a, b| by_score_then_key(*a, *b));
        scored.truncate(k);
        scored.into_iter().map(|(q, s)| (q.to_string(), s)).collect()
    }
}
