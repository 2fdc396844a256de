//! Independent reference implementations and random fixtures shared by the
//! integration tests and the acceptance suite.
//!
//! Everything here is written for obviousness over speed: full scans, full
//! sorts, and plain nested loops.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use ap_core::classifier::{featurize_triplet, LabeledRow, TripletBatch};
use ap_core::corpus::{EmbeddingTable, FeatureTable};
use ap_core::graphmatch::{question_category, QuestionCategory};
use ap_core::semparse::{FormMode, Role};
use ap_core::{
    Corpus, EvalTriplet, MatchMode, Ontology, ProposalList, QaInstance, SemanticGraph, SemanticParser, Source, Split,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn instance(qid: &str, question: &str, answers: Vec<String>, split: Split) -> QaInstance {
    QaInstance {
        qid: qid.to_string(),
        image_id: format!("img-{qid}"),
        question: question.to_string(),
        answers,
        choices: None,
        split,
    }
}

// ---------------------------------------------------------------- recall

/// Up to 50 triplets with proposal lists of up to 200 entries. Gold answers
/// come from a small vocabulary so hits are common; some proposals are
/// upper-cased to exercise normalization.
pub fn recall_fixture(rng: &mut ChaCha8Rng) -> Vec<(QaInstance, ProposalList)> {
    let m = rng.gen_range(1..=50);
    (0..m)
        .map(|i| {
            let qid = format!("q{i:03}");
            let gold_vocab = rng.gen_range(1..=6);
            let answers = (0..10).map(|_| format!("w{}", rng.gen_range(0..gold_vocab))).collect();
            let inst = instance(&qid, "what is it?", answers, Split::Val);
            let len = rng.gen_range(0..=200);
            let ranked: Vec<(String, f64)> = (0..len)
                .map(|r| {
                    let w = format!("w{}", rng.gen_range(0..300));
                    let w = if rng.gen_bool(0.1) { w.to_uppercase() } else { w };
                    (w, 1.0 / (r + 1) as f64)
                })
                .collect();
            (inst.clone(), ProposalList::from_ranked(qid, Source::W2v, ranked))
        })
        .collect()
}

pub fn triplets(fixture: &[(QaInstance, ProposalList)]) -> Vec<EvalTriplet> {
    fixture.iter().map(|(i, l)| EvalTriplet::new(i, l.clone())).collect()
}

/// Most frequent answer, ties to the alphabetically first. Fixture answers
/// are already lowercase words, so no further normalization is needed.
pub fn oracle_majority(answers: &[String]) -> String {
    let mut best = String::new();
    let mut best_count = 0;
    let mut sorted = answers.to_vec();
    sorted.sort();
    for a in &sorted {
        let c = answers.iter().filter(|b| *b == a).count();
        if c > best_count {
            best_count = c;
            best = a.clone();
        }
    }
    best
}

/// Fraction of instances whose first `n` proposals contain a correct answer.
pub fn oracle_recall(fixture: &[(QaInstance, ProposalList)], n: usize, mode: MatchMode) -> f64 {
    let mut hits = 0;
    for (inst, list) in fixture {
        let majority = oracle_majority(&inst.answers);
        let answers: Vec<&str> = list.answers().collect();
        let mut hit = false;
        for a in answers.iter().take(n) {
            let correct = match mode {
                MatchMode::Majority => a.eq_ignore_ascii_case(&majority),
                MatchMode::Any => inst.answers.iter().any(|g| a.eq_ignore_ascii_case(g)),
            };
            if correct {
                hit = true;
            }
        }
        if hit {
            hits += 1;
        }
    }
    hits as f64 / fixture.len() as f64
}

// ---------------------------------------------------------------- retrieval

/// A random train corpus, an embedding table over its vocabulary, and a
/// query. Some train questions are repeated under new qids so that equal
/// similarities occur.
pub struct RetrievalFixture {
    pub corpus: Corpus,
    pub table: EmbeddingTable<f64>,
    pub query: String,
    pub k: usize,
}

pub fn retrieval_fixture(rng: &mut ChaCha8Rng) -> RetrievalFixture {
    let dim = rng.gen_range(1..=16);
    let vocab: Vec<String> = (0..40).map(|i| format!("t{i}")).collect();
    let mut rows = Vec::new();
    for w in &vocab {
        // leave a few tokens out so unknown words are skipped
        if rows.is_empty() || rng.gen_bool(0.9) {
            rows.push((w.clone(), (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>()));
        }
    }
    let table = EmbeddingTable::from_rows(rows).unwrap();
    let sentence = |rng: &mut ChaCha8Rng| {
        let len = rng.gen_range(1..=6);
        (0..len).map(|_| vocab.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
    };
    let n = rng.gen_range(1..=200);
    let mut questions: Vec<String> = Vec::with_capacity(n);
    for _ in 0..n {
        let q = if !questions.is_empty() && rng.gen_bool(0.15) {
            questions.choose(rng).unwrap().clone()
        } else {
            sentence(rng)
        };
        questions.push(q);
    }
    // qids in shuffled order so the index sort and the tie rule both matter
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let instances = questions
        .iter()
        .zip(ids)
        .map(|(q, id)| instance(&format!("r{id:04}"), q, vec!["x".into(); 10], Split::Train))
        .collect();
    let query = if rng.gen_bool(0.2) {
        questions.choose(rng).unwrap().clone()
    } else {
        sentence(rng)
    };
    RetrievalFixture {
        corpus: Corpus::new(instances).unwrap(),
        table,
        query,
        k: rng.gen_range(1..=n + 5),
    }
}

fn mean_vector(text: &str, table: &EmbeddingTable<f64>, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut n = 0;
    for token in text.split_whitespace() {
        if let Some(v) = table.get(&token.to_lowercase()) {
            for i in 0..dim {
                sum[i] += v[i];
            }
            n += 1;
        }
    }
    if n > 0 {
        for x in &mut sum {
            *x /= n as f64;
        }
    }
    sum
}

fn oracle_cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        (dot / (nu * nv)).clamp(-1.0, 1.0)
    }
}

/// Scores every train question, sorts all of them, keeps the first `k`.
///
/// Train questions that are token-for-token identical receive identical
/// scores here and in the index, so ties are decided by qid alone.
pub fn oracle_topk(fx: &RetrievalFixture) -> Vec<(String, f64)> {
    let dim = fx.table.dim().unwrap();
    let q = mean_vector(&fx.query, &fx.table, dim);
    let mut by_text: HashMap<&str, f64> = HashMap::new();
    let mut scored: Vec<(String, f64)> = fx
        .corpus
        .instances()
        .iter()
        .map(|inst| {
            let s = *by_text
                .entry(inst.question.as_str())
                .or_insert_with(|| oracle_cosine(&q, &mean_vector(&inst.question, &fx.table, dim)));
            (inst.qid.clone(), s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(fx.k);
    scored
}

// ---------------------------------------------------------------- BLEU

/// Sentence BLEU by direct counting: for each hypothesis n-gram position,
/// count how often the n-gram occurs in the hypothesis and the reference.
pub fn oracle_bleu(hyp: &[&str], reference: &[&str], max_n: usize) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_precisions = 0.0;
    for n in 1..=max_n {
        if hyp.len() < n {
            return 0.0;
        }
        let hyp_grams: Vec<&[&str]> = hyp.windows(n).collect();
        let ref_grams: Vec<&[&str]> = if reference.len() >= n { reference.windows(n).collect() } else { Vec::new() };
        let mut clipped = 0.0;
        let mut done: Vec<&[&str]> = Vec::new();
        for g in &hyp_grams {
            if done.contains(g) {
                continue;
            }
            done.push(g);
            let in_hyp = hyp_grams.iter().filter(|h| *h == g).count();
            let in_ref = ref_grams.iter().filter(|r| *r == g).count();
            clipped += in_hyp.min(in_ref) as f64;
        }
        if clipped == 0.0 {
            return 0.0;
        }
        log_precisions += (clipped / hyp_grams.len() as f64).ln();
    }
    let c = hyp.len() as f64;
    let r = reference.len() as f64;
    let bp = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_precisions / max_n as f64).exp()
}

pub fn bleu_fixture(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<String>, usize) {
    let vocab = ["the", "cat", "dog", "sat", "on", "mat", "a", "red"];
    let sentence = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let len = rng.gen_range(1..=9);
        (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())].to_string()).collect()
    };
    let hyp = sentence(rng);
    // bias toward overlap so the result is not always zero
    let reference = if rng.gen_bool(0.5) {
        let mut r = hyp.clone();
        r.extend(sentence(rng));
        r.shuffle(rng);
        r.truncate(rng.gen_range(1..=r.len()));
        r
    } else {
        sentence(rng)
    };
    (hyp, reference, rng.gen_range(1..=4))
}

// ---------------------------------------------------------------- graph matching

const DELETE: Option<u32> = None;

fn type_chain(onto: &Ontology, t: &str) -> Vec<String> {
    let mut chain = vec![t.to_string()];
    let mut cur = t;
    while let Some(p) = onto.parent(cur) {
        chain.push(p.to_string());
        cur = p;
    }
    chain
}

/// Every typed form reachable from `g` within `budget`, with its cheapest
/// cost, by trying every combination of per-node states (keep, lift k
/// levels, delete).
///
/// States under a deleted node are still enumerated; they only produce
/// duplicate forms at a higher cost, which the minimum removes.
pub fn oracle_mutants(g: &SemanticGraph, budget: u32, onto: &Ontology) -> BTreeMap<String, u32> {
    let focus: Vec<usize> = g
        .edges
        .iter()
        .filter(|e| e.from == g.root && e.role == Role::Focus)
        .map(|e| e.to)
        .collect();
    let mutable: Vec<usize> = g
        .nodes
        .iter()
        .map(|n| n.id)
        .filter(|&id| id != g.root && !focus.contains(&id))
        .collect();
    let options: Vec<Vec<(Option<u32>, u32)>> = mutable
        .iter()
        .map(|&id| {
            let node = g.nodes.iter().find(|n| n.id == id).unwrap();
            let levels = type_chain(onto, &node.onto_type).len() as u32;
            let mut opts: Vec<(Option<u32>, u32)> = (0..=levels).map(|k| (Some(k), k)).collect();
            let role = g.edges.iter().find(|e| e.to == id).unwrap().role;
            if matches!(role, Role::Location | Role::Mod) {
                opts.push((DELETE, 2));
            }
            opts
        })
        .collect();

    let mut out = BTreeMap::new();
    let mut choice = vec![0usize; mutable.len()];
    loop {
        let cost: u32 = choice.iter().zip(&options).map(|(&c, o)| o[c].1).sum();
        if cost <= budget {
            let form = render(g, &mutable, &choice, &options, onto);
            let slot = out.entry(form).or_insert(cost);
            *slot = (*slot).min(cost);
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == choice.len() {
                return out;
            }
            choice[i] += 1;
            if choice[i] < options[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

fn render(
    g: &SemanticGraph,
    mutable: &[usize],
    choice: &[usize],
    options: &[Vec<(Option<u32>, u32)>],
    onto: &Ontology,
) -> String {
    let state: HashMap<usize, Option<u32>> =
        mutable.iter().zip(choice).zip(options).map(|((&id, &c), o)| (id, o[c].0)).collect();
    let deleted = |mut id: usize| -> bool {
        loop {
            if state.get(&id) == Some(&DELETE) {
                return true;
            }
            match g.edges.iter().find(|e| e.to == id) {
                Some(e) => id = e.from,
                None => return false,
            }
        }
    };
    let mut h = g.clone();
    h.nodes.retain(|n| !deleted(n.id));
    h.edges.retain(|e| !deleted(e.to));
    for n in &mut h.nodes {
        if let Some(Some(k)) = state.get(&n.id) {
            if *k > 0 {
                n.lift = *k;
                n.lifted_type = Some(type_chain(onto, &n.onto_type)[*k as usize - 1].clone());
            }
        }
    }
    h.canonical_form(FormMode::Typed)
}

fn oracle_numeric(a: &str) -> bool {
    const WORDS: [&str; 21] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
        "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
    ];
    (!a.is_empty() && a.bytes().all(|b| b.is_ascii_digit())) || WORDS.contains(&a)
}

/// Ranked answers for `question` by pairing every test-side mutant with
/// every train-side mutant of every train question. `None` when the test
/// question does not parse.
pub fn oracle_sem(
    question: &str,
    corpus: &Corpus,
    parser: &SemanticParser,
    index_budget: u32,
    test_budget: u32,
) -> Option<Vec<String>> {
    let g = parser.parse(question).ok()?;
    let category = question_category(&g);
    let train: Vec<(QuestionCategory, String, SemanticGraph)> = corpus
        .split(Split::Train)
        .filter_map(|inst| {
            let tg = parser.parse(&inst.question).ok()?;
            Some((question_category(&tg), inst.majority_answer(), tg))
        })
        .collect();

    if category == QuestionCategory::YesNo {
        let count = |a: &str| train.iter().filter(|(c, m, _)| *c == QuestionCategory::YesNo && m == a).count();
        let (y, n) = (count("yes"), count("no"));
        return Some(if y > n { vec!["yes".into(), "no".into()] } else { vec!["no".into(), "yes".into()] });
    }

    let test_forms = oracle_mutants(&g, test_budget, parser.ontology());
    let train_forms: Vec<(&String, BTreeMap<String, u32>)> = train
        .iter()
        .filter(|(c, _, _)| *c == category)
        .map(|(_, a, tg)| (a, oracle_mutants(tg, index_budget, parser.ontology())))
        .collect();

    // key: (test cost, train cost, -frequency, answer)
    let mut best: BTreeMap<String, (u32, u32, i64)> = BTreeMap::new();
    for (form, &ct) in &test_forms {
        // (min train cost, frequency) per answer reaching this form
        let mut per_answer: BTreeMap<&String, (u32, i64)> = BTreeMap::new();
        for (answer, forms) in &train_forms {
            if let Some(&cr) = forms.get(form) {
                let e = per_answer.entry(*answer).or_insert((u32::MAX, 0));
                e.0 = e.0.min(cr);
                e.1 += 1;
            }
        }
        for (answer, (cr, freq)) in per_answer {
            if category == QuestionCategory::Count && !oracle_numeric(answer) {
                continue;
            }
            let key = (ct, cr, -freq);
            let slot = best.entry(answer.clone()).or_insert(key);
            if key < *slot {
                *slot = key;
            }
        }
    }
    let mut ranked: Vec<((u32, u32, i64), String)> = best.into_iter().map(|(a, k)| (k, a)).collect();
    ranked.sort();
    Some(ranked.into_iter().map(|(_, a)| a).collect())
}

// ---------------------------------------------------------------- classifier

/// 200 triplet rows labelled by a fixed hyperplane over their features, with
/// a margin so the set is linearly separable.
pub fn separable_triplets(rng: &mut ChaCha8Rng) -> TripletBatch<f64> {
    let dim = 4;
    let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let images: Vec<String> = (0..12).map(|i| format!("img{i}")).collect();
    let gauss = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let emb = EmbeddingTable::from_rows(words.iter().map(|w| (w.clone(), gauss(rng))).collect::<Vec<_>>()).unwrap();
    let feats = FeatureTable::from_rows(images.iter().map(|i| (i.clone(), gauss(rng))).collect::<Vec<_>>()).unwrap();
    let normal: Vec<f64> = (0..3 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut rows = Vec::new();
    while rows.len() < 200 {
        let q = format!("{} {}", words.choose(rng).unwrap(), words.choose(rng).unwrap());
        let a = words.choose(rng).unwrap();
        let img = images.choose(rng).unwrap();
        let x = featurize_triplet(&q, a, img, &emb, &feats).unwrap();
        let s: f64 = x.iter().zip(&normal).map(|(a, b)| a * b).sum();
        if s.abs() < 0.2 {
            continue;
        }
        rows.push(LabeledRow { x, y: if s > 0.0 { 1.0 } else { 0.0 } });
    }
    TripletBatch { rows }
}
