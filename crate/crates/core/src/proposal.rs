//! Ranked answer-proposal lists: the W2V proposer, alternating merge, and
//! truncation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingTable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::textsim::{topk_similar, BleuIndex, W2vIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "W2V")]
    W2v,
    #[serde(rename = "SEM")]
    Sem,
    #[serde(rename = "AGG")]
    Agg,
    #[serde(rename = "BLEU")]
    Bleu,
    /// A provided multiple-choice list.
    #[serde(rename = "CHOICES")]
    Choices,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::W2v => "W2V",
            Source::Sem => "SEM",
            Source::Agg => "AGG",
            Source::Bleu => "BLEU",
            Source::Choices => "CHOICES",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "W2V" => Source::W2v,
            "SEM" => Source::Sem,
            "AGG" => Source::Agg,
            "BLEU" => Source::Bleu,
            "CHOICES" => Source::Choices,
            _ => return Err(Error::InvalidArgument(format!("unknown source {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub answer: String,
    pub score: f64,
    pub source: Source,
}

/// Deduplicated answers in rank order (rank 1 first).
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalList {
    pub qid: String,
    /// Source tag for the list as a whole.
    pub source: Source,
    entries: Vec<Proposal>,
    pub cutoff: Option<usize>,
}

impl ProposalList {
    pub fn empty(qid: impl Into<String>, source: Source) -> Self {
        ProposalList {
            qid: qid.into(),
            source,
            entries: Vec::new(),
            cutoff: None,
        }
    }

    /// Builds a list from ranked `(answer, score)` pairs, dropping repeated
    /// answers after their first occurrence.
    pub fn from_ranked<I, S>(qid: impl Into<String>, source: Source, ranked: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut list = ProposalList::empty(qid, source);
        let mut seen = HashSet::new();
        for (answer, score) in ranked {
            let answer = answer.into();
            if seen.insert(answer.clone()) {
                list.entries.push(Proposal {
                    answer,
                    score,
                    source,
                });
            }
        }
        list
    }

    pub fn entries(&self) -> &[Proposal] {
        &self.entries
    }

    pub fn answers(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|p| p.answer.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head(&self) -> Option<&Proposal> {
        self.entries.first()
    }

    /// 1-based rank of `answer`, if present.
    pub fn rank_of(&self, answer: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|p| p.answer == answer)
            .map(|i| i + 1)
    }
}

/// How each retrieved neighbour contributes answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborMode {
    /// The neighbour's majority answer, weighted by similarity.
    #[default]
    Majority,
    /// Each of the neighbour's ten answers, weighted by similarity / 10.
    AllAnswers,
}

/// Sums neighbour weights per answer and ranks by total, ties by answer.
pub(crate) fn aggregate_neighbors<'a, I>(qid: &str, source: Source, contributions: I) -> ProposalList
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    let mut totals: HashMap<&str, f64> = HashMap::new();
    for (answer, w) in contributions {
        *totals.entry(answer).or_insert(0.0) += w;
    }
    let mut ranked: Vec<(&str, f64)> = totals.into_iter().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    ProposalList::from_ranked(qid, source, ranked)
}

/// Proposes answers from the `k` nearest train questions.
pub fn propose_w2v<T: Scalar>(
    qid: &str,
    question: &str,
    index: &W2vIndex<T>,
    table: &EmbeddingTable<T>,
    k: usize,
    mode: NeighborMode,
) -> Result<ProposalList> {
    let neighbours = topk_similar(question, index, table, k)?;
    let mut contributions = Vec::new();
    for (nq, score) in &neighbours {
        let entry = index.entry(nq).expect("neighbour comes from the index");
        let w = score.as_f64();
        match mode {
            NeighborMode::Majority => contributions.push((entry.majority.as_str(), w)),
            NeighborMode::AllAnswers => {
                let share = w / entry.answers.len().max(1) as f64;
                contributions.extend(entry.answers.iter().map(|a| (a.as_str(), share)));
            }
        }
    }
    Ok(aggregate_neighbors(qid, Source::W2v, contributions))
}

/// BLEU-similarity retrieval with the same aggregation as [`propose_w2v`].
pub fn propose_bleu(qid: &str, question: &str, index: &BleuIndex, k: usize, max_n: usize) -> ProposalList {
    let neighbours = index.topk(question, k, max_n);
    let contributions = neighbours
        .iter()
        .map(|(nq, s)| (index.majority(nq).expect("neighbour comes from the index"), *s));
    aggregate_neighbors(qid, Source::Bleu, contributions)
}

/// Interleaves `a` and `b` (a1, b1, a2, b2, ...), keeping only the first
/// occurrence of each answer. A list whose next entry was already taken
/// skips ahead to its next unseen one within the same turn, so
/// `[a, b] ⊕ [a, c]` gives `[a, c, b]`.
pub fn alternate_merge(a: &ProposalList, b: &ProposalList) -> Result<ProposalList> {
    if a.qid != b.qid {
        return Err(Error::QidMismatch(a.qid.clone(), b.qid.clone()));
    }
    let mut out = ProposalList::empty(a.qid.clone(), Source::Agg);
    let mut seen = HashSet::new();
    let mut iters = [a.entries.iter().peekable(), b.entries.iter().peekable()];
    let mut turn = 0;
    while iters.iter_mut().any(|it| it.peek().is_some()) {
        for p in iters[turn].by_ref() {
            if seen.insert(p.answer.as_str()) {
                out.entries.push(Proposal {
                    answer: p.answer.clone(),
                    score: p.score,
                    source: Source::Agg,
                });
                break;
            }
        }
        turn = 1 - turn;
    }
    Ok(out)
}

/// First `min(n, len)` entries.
pub fn truncate(p: &ProposalList, n: usize) -> ProposalList {
    let mut out = p.clone();
    out.entries.truncate(n);
    out.cutoff = Some(p.cutoff.map_or(n, |c| c.min(n)));
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct RankedRecord {
    rank: usize,
    answer: String,
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProposalRecord {
    qid: String,
    source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cutoff: Option<usize>,
    proposals: Vec<RankedRecord>,
}

/// Writes one JSON object per list.
pub fn write_proposals<'a, W, I>(mut out: W, lists: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a ProposalList>,
{
    for list in lists {
        let rec = ProposalRecord {
            qid: list.qid.clone(),
            source: list.source,
            cutoff: list.cutoff,
            proposals: list
                .entries
                .iter()
                .enumerate()
                .map(|(i, p)| RankedRecord {
                    rank: i + 1,
                    answer: p.answer.clone(),
                    score: p.score,
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_proposals<'a, I>(path: impl AsRef<Path>, lists: I) -> Result<()>
where
    I: IntoIterator<Item = &'a ProposalList>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_proposals(&mut out, lists)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads proposal lists keyed by qid. Ranks must be 1..=n in order.
pub fn read_proposals<R: BufRead>(reader: R, origin: &Path) -> Result<BTreeMap<String, ProposalList>> {
    let mut lists = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProposalRecord = serde_json::from_str(&line)
            .map_err(|e| Error::record(origin, line_no, format!("malformed proposal record: {e}")))?;
        for (i, r) in rec.proposals.iter().enumerate() {
            if r.rank != i + 1 {
                return Err(Error::record(
                    origin,
                    line_no,
                    format!("rank {} at position {}", r.rank, i + 1),
                ));
            }
        }
        let ranked = rec.proposals.into_iter().map(|r| (r.answer, r.score));
        let mut list = ProposalList::from_ranked(rec.qid.clone(), rec.source, ranked);
        list.cutoff = rec.cutoff;
        if lists.insert(rec.qid.clone(), list).is_some() {
            return Err(Error::record(origin, line_no, format!("duplicate qid {:?}", rec.qid)));
        }
    }
    Ok(lists)
}

pub fn load_proposals(path: impl AsRef<Path>) -> Result<BTreeMap<String, ProposalList>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_proposals(BufReader::new(file), path)
}
