//! Two-stage semantic retrieval.
//!
//! Stage 1 sorts questions into yes/no, counting, and other WH categories;
//! yes/no questions are answered from the train prior alone. Stage 2
//! matches mutated variants of the test graph against an index of mutated
//! train graphs. A mutation either lifts a node to an ontology ancestor
//! (cost 1 per level) or deletes a LOCATION/MOD node with its subtree
//! (cost 2). Matches found with fewer test-side mutations rank first.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::proposal::{ProposalList, Source};
use crate::semparse::{FormMode, Ontology, SemanticGraph, SemanticParser, SpeechAct, ROOT};
use crate::textsim::parse_header_field;

pub const LIFT_COST_PER_LEVEL: u32 = 1;
pub const DELETE_COST: u32 = 2;

const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionCategory {
    YesNo,
    Count,
    OtherWh,
}

pub fn question_category(g: &SemanticGraph) -> QuestionCategory {
    match (g.speech_act, g.count_focus) {
        (SpeechAct::YesNoQuestion, _) => QuestionCategory::YesNo,
        (SpeechAct::WhQuestion, true) => QuestionCategory::Count,
        (SpeechAct::WhQuestion, false) => QuestionCategory::OtherWh,
    }
}

/// Digits, or a number word from zero to twenty.
pub fn is_numeric_answer(answer: &str) -> bool {
    (!answer.is_empty() && answer.chars().all(|c| c.is_ascii_digit())) || NUMBER_WORDS.contains(&answer)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutant {
    pub graph: SemanticGraph,
    pub cost: u32,
    /// Typed canonical form of `graph`.
    pub form: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeState {
    Keep(u32),
    Delete,
}

/// Per mutable node: the lift levels that still change its label.
fn max_lift(g: &SemanticGraph, id: usize, onto: &Ontology) -> u32 {
    let node = g.node(id).expect("node exists");
    // lift 1 yields the node's own type; each further level one ancestor
    onto.depth(&node.onto_type).map_or(1, |d| d + 1)
}

fn apply(g: &SemanticGraph, states: &HashMap<usize, NodeState>, onto: &Ontology) -> SemanticGraph {
    let mut removed = std::collections::HashSet::new();
    for id in g.preorder() {
        let parent_removed = g.incoming(id).is_some_and(|e| removed.contains(&e.from));
        if parent_removed || states.get(&id) == Some(&NodeState::Delete) {
            removed.insert(id);
        }
    }
    let nodes = g
        .nodes
        .iter()
        .filter(|n| !removed.contains(&n.id))
        .map(|n| {
            let mut n = n.clone();
            if let Some(NodeState::Keep(levels)) = states.get(&n.id) {
                if *levels > 0 {
                    n.lift = *levels;
                    let t = onto
                        .ancestor(&n.onto_type, levels - 1)
                        .unwrap_or(ROOT)
                        .to_string();
                    n.lifted_type = Some(t);
                }
            }
            n
        })
        .collect();
    let edges = g
        .edges
        .iter()
        .filter(|e| !removed.contains(&e.to))
        .copied()
        .collect();
    SemanticGraph {
        nodes,
        edges,
        ..g.clone()
    }
}

/// Every distinct graph reachable within `budget`, cheapest first, ties by
/// canonical form. The unmutated graph comes first at cost 0.
///
/// The root and the focus node are never mutated.
pub fn mutations(g: &SemanticGraph, budget: u32, onto: &Ontology) -> Vec<Mutant> {
    let focus = g
        .children(g.root)
        .find(|e| e.role == crate::semparse::Role::Focus)
        .map(|e| e.to);
    let order: Vec<usize> = g
        .preorder()
        .into_iter()
        .filter(|&id| id != g.root && Some(id) != focus)
        .collect();

    let mut best: HashMap<String, Mutant> = HashMap::new();
    let mut states: HashMap<usize, NodeState> = HashMap::new();
    enumerate(g, onto, &order, 0, 0, budget, &mut states, &mut best);

    let mut out: Vec<Mutant> = best.into_values().collect();
    out.sort_by(|a, b| a.cost.cmp(&b.cost).then_with(|| a.form.cmp(&b.form)));
    out
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    g: &SemanticGraph,
    onto: &Ontology,
    order: &[usize],
    pos: usize,
    cost: u32,
    budget: u32,
    states: &mut HashMap<usize, NodeState>,
    best: &mut HashMap<String, Mutant>,
) {
    if pos == order.len() {
        let graph = apply(g, states, onto);
        let form = graph.canonical_form(FormMode::Typed);
        if best.get(&form).is_none_or(|m| m.cost > cost) {
            best.insert(form.clone(), Mutant { graph, cost, form });
        }
        return;
    }
    let id = order[pos];
    let edge = g.incoming(id).expect("non-root node has a parent");
    // preorder: the parent's state is settled; descendants of a deleted node go with it
    if states.get(&edge.from) == Some(&NodeState::Delete) {
        states.insert(id, NodeState::Delete);
        enumerate(g, onto, order, pos + 1, cost, budget, states, best);
        states.remove(&id);
        return;
    }
    for levels in 0..=max_lift(g, id, onto) {
        let c = cost + levels * LIFT_COST_PER_LEVEL;
        if c > budget {
            break;
        }
        states.insert(id, NodeState::Keep(levels));
        enumerate(g, onto, order, pos + 1, c, budget, states, best);
    }
    if edge.role.is_deletable() && cost + DELETE_COST <= budget {
        states.insert(id, NodeState::Delete);
        enumerate(g, onto, order, pos + 1, cost + DELETE_COST, budget, states, best);
    }
    states.remove(&id);
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketEntry {
    pub answer: String,
    /// Number of train questions with this answer that reach the form.
    pub frequency: u32,
    /// Cheapest train-side mutation cost reaching the form.
    pub train_cost: u32,
}

/// Train-side index: mutated typed forms mapped to train answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemIndex {
    budget: u32,
    buckets: BTreeMap<(QuestionCategory, String), Vec<BucketEntry>>,
    /// Majority-answer counts of train yes/no questions.
    yes_no_prior: BTreeMap<String, u32>,
    indexed: usize,
    skipped: usize,
}

/// Category, majority answer and reachable `(form, cost)` pairs.
type ParsedTrain = (QuestionCategory, String, Vec<(String, u32)>);

const SEM_MAGIC: &str = "AP-SEM-INDEX v1";

#[derive(Debug, Serialize, Deserialize)]
struct BucketRecord {
    category: QuestionCategory,
    form: String,
    answers: Vec<BucketEntry>,
}

impl SemIndex {
    /// Indexes every parseable train question under all of its mutants
    /// within `budget`. Unparseable questions are counted in `skipped`.
    pub fn build(corpus: &Corpus, parser: &SemanticParser, budget: u32) -> Self {
        let train: Vec<_> = corpus.split(Split::Train).collect();
        let parsed: Vec<Option<ParsedTrain>> = train
            .par_iter()
            .map(|inst| {
                let g = parser.parse(&inst.question).ok()?;
                let cat = question_category(&g);
                let forms = if cat == QuestionCategory::YesNo {
                    Vec::new()
                } else {
                    mutations(&g, budget, parser.ontology())
                        .into_iter()
                        .map(|m| (m.form, m.cost))
                        .collect()
                };
                Some((cat, inst.majority_answer(), forms))
            })
            .collect();

        let mut acc: BTreeMap<(QuestionCategory, String), BTreeMap<String, (u32, u32)>> = BTreeMap::new();
        let mut yes_no_prior = BTreeMap::new();
        let (mut indexed, mut skipped) = (0, 0);
        for item in parsed {
            let Some((cat, answer, forms)) = item else {
                skipped += 1;
                continue;
            };
            indexed += 1;
            if cat == QuestionCategory::YesNo {
                *yes_no_prior.entry(answer).or_insert(0) += 1;
                continue;
            }
            for (form, cost) in forms {
                let slot = acc
                    .entry((cat, form))
                    .or_default()
                    .entry(answer.clone())
                    .or_insert((0, cost));
                slot.0 += 1;
                slot.1 = slot.1.min(cost);
            }
        }
        let buckets = acc
            .into_iter()
            .map(|(key, answers)| {
                let entries = answers
                    .into_iter()
                    .map(|(answer, (frequency, train_cost))| BucketEntry {
                        answer,
                        frequency,
                        train_cost,
                    })
                    .collect();
                (key, entries)
            })
            .collect();
        SemIndex {
            budget,
            buckets,
            yes_no_prior,
            indexed,
            skipped,
        }
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn indexed(&self) -> usize {
        self.indexed
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty() && self.yes_no_prior.is_empty()
    }

    pub fn bucket(&self, category: QuestionCategory, form: &str) -> &[BucketEntry] {
        self.buckets
            .get(&(category, form.to_string()))
            .map_or(&[], Vec::as_slice)
    }

    pub fn yes_no_prior(&self) -> &BTreeMap<String, u32> {
        &self.yes_no_prior
    }

    /// `yes` and `no`, most frequent train majority first, ties by answer.
    pub fn yes_no_ranking(&self) -> Vec<(&'static str, f64)> {
        let count = |a: &str| self.yes_no_prior.get(a).copied().unwrap_or(0);
        let (y, n) = (count("yes"), count("no"));
        let total = (y + n).max(1) as f64;
        let mut ranked = vec![("no", n), ("yes", y)];
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked
            .into_iter()
            .map(|(a, c)| (a, if y + n == 0 { 0.5 } else { c as f64 / total }))
            .collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{SEM_MAGIC}")?;
        writeln!(out, "budget {}", self.budget)?;
        writeln!(out, "indexed {}", self.indexed)?;
        writeln!(out, "skipped {}", self.skipped)?;
        serde_json::to_writer(&mut out, &self.yes_no_prior)?;
        writeln!(out)?;
        writeln!(out, "buckets {}", self.buckets.len())?;
        for ((category, form), answers) in &self.buckets {
            let rec = BucketRecord {
                category: *category,
                form: form.clone(),
                answers: answers.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
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
        if next("magic")? != SEM_MAGIC {
            return Err(Error::Cache("not a semantic index file".into()));
        }
        let budget = parse_header_field(&next("budget")?, "budget")? as u32;
        let indexed = parse_header_field(&next("indexed")?, "indexed")?;
        let skipped = parse_header_field(&next("skipped")?, "skipped")?;
        let yes_no_prior = serde_json::from_str(&next("prior")?)
            .map_err(|e| Error::Cache(format!("yes/no prior: {e}")))?;
        let count = parse_header_field(&next("buckets")?, "buckets")?;
        let mut buckets = BTreeMap::new();
        for i in 0..count {
            let rec: BucketRecord = serde_json::from_str(&next("bucket")?)
                .map_err(|e| Error::Cache(format!("bucket {}: {e}", i + 1)))?;
            buckets.insert((rec.category, rec.form), rec.answers);
        }
        Ok(SemIndex {
            budget,
            buckets,
            yes_no_prior,
            indexed,
            skipped,
        })
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

/// Sort key for a candidate answer: cheaper test mutation, then cheaper
/// train mutation, then more frequent, then alphabetical.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MatchKey {
    pub test_cost: u32,
    pub train_cost: u32,
    pub neg_frequency: i64,
    pub answer: String,
}

/// Ranks answers for `question` by semantic graph matching.
///
/// Fails with [`Error::Unparseable`] when the question cannot be parsed, so
/// callers can fall back to another proposer.
pub fn propose_sem(
    qid: &str,
    question: &str,
    index: &SemIndex,
    parser: &SemanticParser,
    test_budget: u32,
) -> Result<ProposalList> {
    let g = parser
        .parse(question)
        .map_err(|e| Error::Unparseable(e.to_string()))?;
    let category = question_category(&g);
    if category == QuestionCategory::YesNo {
        return Ok(ProposalList::from_ranked(qid, Source::Sem, index.yes_no_ranking()));
    }
    let mut best: HashMap<&str, MatchKey> = HashMap::new();
    for m in mutations(&g, test_budget, parser.ontology()) {
        for e in index.bucket(category, &m.form) {
            if category == QuestionCategory::Count && !is_numeric_answer(&e.answer) {
                continue;
            }
            let key = MatchKey {
                test_cost: m.cost,
                train_cost: e.train_cost,
                neg_frequency: -i64::from(e.frequency),
                answer: e.answer.clone(),
            };
            match best.get(e.answer.as_str()) {
                Some(k) if *k <= key => {}
                _ => {
                    best.insert(&e.answer, key);
                }
            }
        }
    }
    let mut ranked: Vec<MatchKey> = best.into_values().collect();
    ranked.sort();
    Ok(ProposalList::from_ranked(
        qid,
        Source::Sem,
        ranked
            .into_iter()
            .map(|k| (k.answer, 1.0 / (1.0 + f64::from(k.test_cost)))),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QaInstance;
    use crate::semparse::tests::toy_parser;

    fn corpus(rows: &[(&str, &str, &str, Split)]) -> Corpus {
        Corpus::new(
            rows.iter()
                .map(|(qid, q, a, split)| QaInstance {
                    qid: qid.to_string(),
                    image_id: format!("img-{qid}"),
                    question: q.to_string(),
                    answers: vec![a.to_string(); 10],
                    choices: None,
                    split: *split,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn categories() {
        let p = toy_parser();
        let cat = |q: &str| question_category(&p.parse(q).unwrap());
        assert_eq!(cat("Is the dog black?"), QuestionCategory::YesNo);
        assert_eq!(cat("How many dogs?"), QuestionCategory::Count);
        assert_eq!(cat("What is she eating?"), QuestionCategory::OtherWh);
    }

    #[test]
    fn budget_one_lifts_single_nodes() {
        let p = toy_parser();
        let g = p.parse("What is she eating?").unwrap();
        assert!(mutations(&g, 0, p.ontology()).len() == 1);
        let ms = mutations(&g, 1, p.ontology());
        assert_eq!(ms[0].cost, 0);
        assert_eq!(ms[0].form, g.canonical_form(FormMode::Typed));
        let forms: Vec<(&str, u32)> = ms.iter().map(|m| (m.form.as_str(), m.cost)).collect();
        assert_eq!(
            forms[1..],
            [
                ("WH_QUESTION(CONTENT:[CONSUME](AGENT:she),FOCUS:what)", 1),
                ("WH_QUESTION(CONTENT:eating(AGENT:[PERSON]),FOCUS:what)", 1),
            ]
        );
    }

    #[test]
    fn delete_requires_budget_two_and_noncore_role() {
        let p = toy_parser();
        let g = p.parse("Is the cat black?").unwrap();
        let ms = mutations(&g, 2, p.ontology());
        assert!(ms.iter().any(|m| m.cost == 2 && m.form == "YESNO_QUESTION(CONTENT:cat)"));
        assert!(!mutations(&g, 1, p.ontology()).iter().any(|m| m.form == "YESNO_QUESTION(CONTENT:cat)"));

        let g = p.parse("What is she eating?").unwrap();
        assert!(mutations(&g, 4, p.ontology())
            .iter()
            .all(|m| m.graph.nodes.len() == g.nodes.len()));
    }

    #[test]
    fn mutations_sorted_and_unique() {
        let p = toy_parser();
        let g = p.parse("What is he consuming in the big kitchen?").unwrap();
        let ms = mutations(&g, 3, p.ontology());
        let mut forms: Vec<&str> = ms.iter().map(|m| m.form.as_str()).collect();
        assert!(ms.windows(2).all(|w| (w[0].cost, &w[0].form) < (w[1].cost, &w[1].form)));
        forms.sort();
        forms.dedup();
        assert_eq!(forms.len(), ms.len());
        // deleting the location drops its adjective too
        assert!(ms.iter().any(|m| m.cost == 2 && m.form == "WH_QUESTION(CONTENT:consuming(AGENT:he),FOCUS:what)"));
    }

    #[test]
    fn person_lift_pools_answers() {
        let p = toy_parser();
        let c = corpus(&[
            ("t1", "What is she eating?", "apple", Split::Train),
            ("t2", "What is he eating?", "banana", Split::Train),
        ]);
        let idx = SemIndex::build(&c, &p, 1);
        let b = idx.bucket(QuestionCategory::OtherWh, "WH_QUESTION(CONTENT:eating(AGENT:[PERSON]),FOCUS:what)");
        let names: Vec<(&str, u32, u32)> = b.iter().map(|e| (e.answer.as_str(), e.frequency, e.train_cost)).collect();
        assert_eq!(names, [("apple", 1, 1), ("banana", 1, 1)]);

        let exact = SemIndex::build(&c, &p, 0);
        assert_eq!(exact.bucket_count(), 2);
        assert!(SemIndex::build(&corpus(&[]), &p, 3).is_empty());
    }

    #[test]
    fn paraphrase_with_location_matches() {
        let p = toy_parser();
        let c = corpus(&[("t1", "What is she eating?", "apple", Split::Train)]);
        let idx = SemIndex::build(&c, &p, 3);
        // lift consuming (1) + lift he (1) + delete kitchen (2)
        let out = propose_sem("v", "What is he consuming in the kitchen?", &idx, &p, 4).unwrap();
        assert_eq!(out.answers().collect::<Vec<_>>(), ["apple"]);
        let out = propose_sem("v", "What is he consuming in the kitchen?", &idx, &p, 3).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn yes_no_uses_prior_only() {
        let p = toy_parser();
        let c = corpus(&[
            ("t1", "Is the cat black?", "no", Split::Train),
            ("t2", "Is the dog black?", "no", Split::Train),
            ("t3", "Is it raining?", "yes", Split::Train),
        ]);
        let idx = SemIndex::build(&c, &p, 3);
        let out = propose_sem("v", "Is the cat black?", &idx, &p, 3).unwrap();
        assert_eq!(out.answers().collect::<Vec<_>>(), ["no", "yes"]);
        let empty = SemIndex::build(&corpus(&[]), &p, 3);
        let out = propose_sem("v", "Is it raining?", &empty, &p, 3).unwrap();
        assert_eq!(out.answers().collect::<Vec<_>>(), ["no", "yes"]);
    }

    #[test]
    fn count_questions_keep_numbers() {
        let p = toy_parser();
        let c = corpus(&[
            ("t1", "How many dogs are there?", "3", Split::Train),
            ("t2", "How many dogs are there?", "lots", Split::Train),
            ("t3", "How many dogs are there near the tree?", "two", Split::Train),
        ]);
        let idx = SemIndex::build(&c, &p, 3);
        let out = propose_sem("v", "How many dogs are there?", &idx, &p, 3).unwrap();
        assert_eq!(out.answers().collect::<Vec<_>>(), ["3", "two"]);
        assert!(matches!(
            propose_sem("v", "Dogs?", &idx, &p, 3),
            Err(Error::Unparseable(_))
        ));
    }

    #[test]
    fn ranking_prefers_cheaper_test_mutations() {
        let p = toy_parser();
        let c = corpus(&[
            ("t1", "What is she eating?", "apple", Split::Train),
            ("t2", "What is he eating?", "banana", Split::Train),
            ("t3", "What is she eating?", "cherry", Split::Train),
        ]);
        let idx = SemIndex::build(&c, &p, 1);
        let out = propose_sem("v", "What is she eating?", &idx, &p, 1).unwrap();
        // exact match: apple and cherry (freq 1 each, alphabetical), then banana
        assert_eq!(out.answers().collect::<Vec<_>>(), ["apple", "cherry", "banana"]);
    }

    #[test]
    fn index_cache_round_trips() {
        let p = toy_parser();
        let c = corpus(&[
            ("t1", "What is she eating?", "apple", Split::Train),
            ("t2", "Is it raining?", "yes", Split::Train),
            ("t3", "Cats?", "x", Split::Train),
        ]);
        let idx = SemIndex::build(&c, &p, 2);
        assert_eq!((idx.indexed(), idx.skipped()), (2, 1));
        let mut buf = Vec::new();
        idx.write(&mut buf).unwrap();
        assert_eq!(SemIndex::read(buf.as_slice()).unwrap(), idx);
    }

    #[test]
    fn numeric_answers() {
        assert!(is_numeric_answer("12"));
        assert!(is_numeric_answer("twenty"));
        assert!(!is_numeric_answer("twenty one"));
        assert!(!is_numeric_answer(""));
        assert!(!is_numeric_answer("1.5"));
    }
}
