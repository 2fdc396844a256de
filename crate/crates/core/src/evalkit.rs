//! Recall@N, hit-rank histograms, VQA accuracy and per-type breakdowns.
//!
//! All matching happens on normalized answer strings.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_answer, normalize_cow, QaInstance};
use crate::error::{Error, Result};
use crate::graphmatch::{question_category, QuestionCategory};
use crate::proposal::{ProposalList, Source};
use crate::semparse::SemanticParser;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Hit iff the majority answer is among the proposals.
    #[default]
    Majority,
    /// Hit iff any gold answer is among the proposals.
    Any,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Majority => "majority",
            MatchMode::Any => "any",
        })
    }
}

impl FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "majority" => Ok(MatchMode::Majority),
            "any" => Ok(MatchMode::Any),
            _ => Err(Error::InvalidArgument(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalTriplet {
    pub qid: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub majority: String,
    pub proposals: ProposalList,
}

impl EvalTriplet {
    /// Pairs an instance with its proposals; answers are normalized here.
    pub fn new(instance: &QaInstance, proposals: ProposalList) -> Self {
        EvalTriplet {
            qid: instance.qid.clone(),
            question: instance.question.clone(),
            gold_answers: instance.normalized_answers(),
            majority: instance.majority_answer(),
            proposals,
        }
    }

    /// 1-based rank of the first proposal that counts as a hit.
    pub fn hit_rank(&self, mode: MatchMode) -> Option<usize> {
        let gold: HashSet<&str> = match mode {
            MatchMode::Majority => std::iter::once(self.majority.as_str()).collect(),
            MatchMode::Any => self.gold_answers.iter().map(String::as_str).collect(),
        };
        self.proposals
            .answers()
            .position(|a| gold.contains(normalize_cow(a).as_ref()))
            .map(|i| i + 1)
    }
}

/// Triplets for every instance of `instances`; an instance without a
/// proposal list gets an empty one and can never be a hit.
pub fn build_triplets<'a, I>(instances: I, proposals: &BTreeMap<String, ProposalList>) -> Vec<EvalTriplet>
where
    I: IntoIterator<Item = &'a QaInstance>,
{
    instances
        .into_iter()
        .map(|inst| {
            let list = proposals
                .get(&inst.qid)
                .cloned()
                .unwrap_or_else(|| ProposalList::empty(inst.qid.clone(), Source::Agg));
            EvalTriplet::new(inst, list)
        })
        .collect()
}

/// Fraction of triplets with a hit in the first `n` proposals.
pub fn recall_at_n(triplets: &[EvalTriplet], n: usize, mode: MatchMode) -> Result<f64> {
    if triplets.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let hits = triplets
        .iter()
        .filter(|t| t.hit_rank(mode).is_some_and(|r| r <= n))
        .count();
    Ok(hits as f64 / triplets.len() as f64)
}

/// Histogram of first-hit ranks; misses are left out.
pub fn rank_distribution(triplets: &[EvalTriplet], mode: MatchMode) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for r in triplets.iter().filter_map(|t| t.hit_rank(mode)) {
        *hist.entry(r).or_insert(0) += 1;
    }
    hist
}

/// Share of all hits that sit at rank 1, or `None` without hits.
pub fn rank1_fraction(hist: &BTreeMap<usize, usize>) -> Option<f64> {
    let total: usize = hist.values().sum();
    (total > 0).then(|| hist.get(&1).copied().unwrap_or(0) as f64 / total as f64)
}

/// `min(#matching gold answers / 3, 1)`.
pub fn vqa_accuracy<S: AsRef<str>>(predicted: &str, gold_answers: &[S]) -> f64 {
    let predicted = normalize_answer(predicted);
    let count = gold_answers
        .iter()
        .filter(|g| normalize_answer(g.as_ref()) == predicted)
        .count();
    (count as f64 / 3.0).min(1.0)
}

/// Mean accuracy per question type; `None` marks a type with no questions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerType {
    pub yes_no: Option<f64>,
    pub number: Option<f64>,
    pub other: Option<f64>,
    pub all: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerTypeReport {
    pub per_type: PerType,
    pub counts: BTreeMap<&'static str, usize>,
    /// Qids with no prediction; they score 0.
    pub missing: Vec<String>,
}

/// Groups by the parsed question category; unparseable questions count as
/// "other".
pub fn per_type_report<'a, I>(
    predictions: &BTreeMap<String, String>,
    instances: I,
    parser: &SemanticParser,
) -> PerTypeReport
where
    I: IntoIterator<Item = &'a QaInstance>,
{
    let mut sums: BTreeMap<&'static str, (f64, usize)> = BTreeMap::new();
    let mut missing = Vec::new();
    for inst in instances {
        let group = match parser.parse(&inst.question).map(|g| question_category(&g)) {
            Ok(QuestionCategory::YesNo) => "yes_no",
            Ok(QuestionCategory::Count) => "number",
            _ => "other",
        };
        let score = match predictions.get(&inst.qid) {
            Some(p) => vqa_accuracy(p, &inst.answers),
            None => {
                missing.push(inst.qid.clone());
                0.0
            }
        };
        for key in [group, "all"] {
            let e = sums.entry(key).or_insert((0.0, 0));
            e.0 += score;
            e.1 += 1;
        }
    }
    let mean = |k: &str| sums.get(k).map(|&(s, n)| s / n as f64);
    PerTypeReport {
        per_type: PerType {
            yes_no: mean("yes_no"),
            number: mean("number"),
            other: mean("other"),
            all: mean("all"),
        },
        counts: sums.iter().map(|(k, v)| (*k, v.1)).collect(),
        missing,
    }
}

/// The JSON evaluation report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
    pub mode: MatchMode,
    #[serde(rename = "M")]
    pub m: usize,
    pub recall_at: BTreeMap<usize, f64>,
    pub rank_histogram: BTreeMap<usize, usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rank1_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_type: Option<PerType>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flagged: Vec<String>,
}

impl EvalReport {
    /// Recall at each cutoff plus the rank histogram.
    pub fn intrinsic(triplets: &[EvalTriplet], cutoffs: &[usize], mode: MatchMode) -> Result<Self> {
        let mut recall_at = BTreeMap::new();
        for &n in cutoffs {
            recall_at.insert(n, recall_at_n(triplets, n, mode)?);
        }
        let rank_histogram = rank_distribution(triplets, mode);
        Ok(EvalReport {
            label: None,
            mode,
            m: triplets.len(),
            recall_at,
            rank1_fraction: rank1_fraction(&rank_histogram),
            rank_histogram,
            per_type: None,
            flagged: Vec::new(),
        })
    }
}
