//! End-to-end orchestration: propose candidates, pick an answer, and the
//! choice-swap experiment.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{build_training_rows, fit, predict_answer, EpochLog, MlpModel, TrainConfig};
use crate::corpus::{Corpus, EmbeddingTable, FeatureTable, QaInstance, Split};
use crate::error::{Error, Result};
use crate::evalkit::{build_triplets, per_type_report, EvalReport, MatchMode};
use crate::graphmatch::{propose_sem, SemIndex};
use crate::proposal::{alternate_merge, propose_bleu, propose_w2v, truncate, NeighborMode, ProposalList, Source};
use crate::scalar::Scalar;
use crate::semparse::SemanticParser;
use crate::textsim::{BleuIndex, W2vIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ProposalModel {
    #[serde(rename = "w2v")]
    W2v,
    #[serde(rename = "sem")]
    Sem,
    #[default]
    #[serde(rename = "w2v+sem")]
    W2vSem,
    #[serde(rename = "bleu")]
    Bleu,
}

impl fmt::Display for ProposalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProposalModel::W2v => "w2v",
            ProposalModel::Sem => "sem",
            ProposalModel::W2vSem => "w2v+sem",
            ProposalModel::Bleu => "bleu",
        })
    }
}

impl FromStr for ProposalModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "w2v" => Ok(ProposalModel::W2v),
            "sem" => Ok(ProposalModel::Sem),
            "w2v+sem" | "w2v_sem" => Ok(ProposalModel::W2vSem),
            "bleu" => Ok(ProposalModel::Bleu),
            _ => Err(Error::InvalidArgument(format!("unknown proposal model {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    #[default]
    TopRank,
    Classifier,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selector::TopRank => "toprank",
            Selector::Classifier => "classifier",
        })
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "toprank" | "top_rank" => Ok(Selector::TopRank),
            "classifier" => Ok(Selector::Classifier),
            _ => Err(Error::InvalidArgument(format!("unknown selector {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    #[default]
    Proposals,
    Choices,
}

impl fmt::Display for CandidateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CandidateSource::Proposals => "proposals",
            CandidateSource::Choices => "choices",
        })
    }
}

impl FromStr for CandidateSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proposals" => Ok(CandidateSource::Proposals),
            "choices" | "provided_choices" => Ok(CandidateSource::Choices),
            _ => Err(Error::InvalidArgument(format!("unknown candidate source {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub model: ProposalModel,
    pub cutoff: usize,
    pub selector: Selector,
    pub candidate_source: CandidateSource,
    pub k_neighbors: usize,
    pub neighbor_mode: NeighborMode,
    pub index_budget: u32,
    pub test_budget: u32,
    pub bleu_max_n: usize,
    /// Optional cap on proposal-sourced candidate lists in the choice-swap
    /// experiment, e.g. the length of the multiple-choice lists.
    pub candidate_truncation: Option<usize>,
    pub eval_split: Split,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: ProposalModel::W2vSem,
            cutoff: 100,
            selector: Selector::TopRank,
            candidate_source: CandidateSource::Proposals,
            k_neighbors: 200,
            neighbor_mode: NeighborMode::Majority,
            index_budget: 3,
            test_budget: 3,
            bleu_max_n: 4,
            candidate_truncation: None,
            eval_split: Split::Val,
            train: TrainConfig::default(),
        }
    }
}

/// Loaded resources; each proposal model needs only some of them.
#[derive(Debug, Clone, Default)]
pub struct Indices<T> {
    pub embeddings: Option<EmbeddingTable<T>>,
    pub features: Option<FeatureTable<T>>,
    pub w2v: Option<W2vIndex<T>>,
    pub sem: Option<SemIndex>,
    pub parser: Option<SemanticParser>,
    pub bleu: Option<BleuIndex>,
}

fn need<'a, X>(x: &'a Option<X>, what: &str) -> Result<&'a X> {
    x.as_ref().ok_or_else(|| Error::MissingResource(what.to_string()))
}

impl<T: Scalar> Indices<T> {
    /// Builds the indices `config.model` needs from the train split.
    pub fn build(
        corpus: &Corpus,
        config: &PipelineConfig,
        embeddings: Option<EmbeddingTable<T>>,
        parser: Option<SemanticParser>,
    ) -> Result<Self> {
        let mut ix = Indices {
            embeddings,
            parser,
            ..Indices::default()
        };
        let uses_w2v = matches!(config.model, ProposalModel::W2v | ProposalModel::Sem | ProposalModel::W2vSem);
        if uses_w2v {
            ix.w2v = Some(W2vIndex::build(corpus, ix.embeddings()?));
        }
        if matches!(config.model, ProposalModel::Sem | ProposalModel::W2vSem) {
            ix.sem = Some(SemIndex::build(corpus, ix.parser()?, config.index_budget));
        }
        if config.model == ProposalModel::Bleu {
            ix.bleu = Some(BleuIndex::build(corpus));
        }
        Ok(ix)
    }

    pub fn embeddings(&self) -> Result<&EmbeddingTable<T>> {
        need(&self.embeddings, "word embeddings")
    }

    pub fn features(&self) -> Result<&FeatureTable<T>> {
        need(&self.features, "image features")
    }

    pub fn parser(&self) -> Result<&SemanticParser> {
        need(&self.parser, "semantic parser (lexicon and ontology)")
    }

    fn w2v_list(&self, qid: &str, question: &str, config: &PipelineConfig) -> Result<ProposalList> {
        let index = need(&self.w2v, "W2V index")?;
        propose_w2v(qid, question, index, self.embeddings()?, config.k_neighbors, config.neighbor_mode)
    }

    /// `Ok(None)` when the question does not parse.
    fn sem_list(&self, qid: &str, question: &str, config: &PipelineConfig) -> Result<Option<ProposalList>> {
        let index = need(&self.sem, "SEM index")?;
        match propose_sem(qid, question, index, self.parser()?, config.test_budget) {
            Ok(list) => Ok(Some(list)),
            Err(Error::Unparseable(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Ranked proposals for one question, truncated to `config.cutoff`.
pub fn propose<T: Scalar>(qid: &str, question: &str, config: &PipelineConfig, ix: &Indices<T>) -> Result<ProposalList> {
    let list = match config.model {
        ProposalModel::W2v => ix.w2v_list(qid, question, config)?,
        ProposalModel::Sem => match ix.sem_list(qid, question, config)? {
            Some(list) => list,
            None => ix.w2v_list(qid, question, config)?,
        },
        ProposalModel::W2vSem => {
            let w2v = ix.w2v_list(qid, question, config)?;
            let sem = ix
                .sem_list(qid, question, config)?
                .unwrap_or_else(|| ProposalList::empty(qid, Source::Sem));
            alternate_merge(&w2v, &sem)?
        }
        ProposalModel::Bleu => propose_bleu(
            qid,
            question,
            need(&ix.bleu, "BLEU index")?,
            config.k_neighbors,
            config.bleu_max_n,
        ),
    };
    Ok(truncate(&list, config.cutoff))
}

/// Proposals for many instances, computed in parallel, returned in input order.
pub fn propose_all<T: Scalar>(
    instances: &[&QaInstance],
    config: &PipelineConfig,
    ix: &Indices<T>,
) -> Result<Vec<ProposalList>> {
    instances
        .par_iter()
        .map(|inst| propose(&inst.qid, &inst.question, config, ix))
        .collect()
}

/// The instance's multiple-choice list in its given order.
pub fn choice_list(inst: &QaInstance) -> Result<ProposalList> {
    let choices = inst
        .choices
        .as_ref()
        .ok_or_else(|| Error::MissingChoices(vec![inst.qid.clone()]))?;
    Ok(ProposalList::from_ranked(
        inst.qid.clone(),
        Source::Choices,
        choices.iter().map(|c| (crate::corpus::normalize_answer(c), 1.0)),
    ))
}

pub fn candidates<T: Scalar>(
    inst: &QaInstance,
    source: CandidateSource,
    config: &PipelineConfig,
    ix: &Indices<T>,
) -> Result<ProposalList> {
    match source {
        CandidateSource::Choices => choice_list(inst),
        CandidateSource::Proposals => {
            let list = propose(&inst.qid, &inst.question, config, ix)?;
            Ok(match config.candidate_truncation {
                Some(n) => truncate(&list, n),
                None => list,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub qid: String,
    pub answer: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probability: Option<f64>,
    pub selector: Selector,
}

/// Picks an answer from a candidate list.
pub fn select<T: Scalar>(
    inst: &QaInstance,
    list: &ProposalList,
    selector: Selector,
    model: Option<&MlpModel<T>>,
    ix: &Indices<T>,
) -> Result<Prediction> {
    match selector {
        Selector::TopRank => {
            let head = list.head().ok_or(Error::NoCandidates)?;
            Ok(Prediction {
                qid: inst.qid.clone(),
                answer: head.answer.clone(),
                probability: None,
                selector,
            })
        }
        Selector::Classifier => {
            let model = model.ok_or_else(|| Error::MissingResource("classifier model".into()))?;
            let (answer, p) = predict_answer(model, &inst.question, &inst.image_id, list, ix.embeddings()?, ix.features()?)?;
            Ok(Prediction {
                qid: inst.qid.clone(),
                answer,
                probability: Some(p.as_f64()),
                selector,
            })
        }
    }
}

/// Answers one instance with the configured candidate source and selector.
pub fn answer<T: Scalar>(
    inst: &QaInstance,
    config: &PipelineConfig,
    ix: &Indices<T>,
    model: Option<&MlpModel<T>>,
) -> Result<Prediction> {
    let list = candidates(inst, config.candidate_source, config, ix)?;
    select(inst, &list, config.selector, model, ix)
}

/// Predictions in input order plus the qids that had no candidates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnswerRun {
    pub predictions: Vec<Prediction>,
    pub flagged: Vec<String>,
}

fn select_all<T: Scalar>(
    instances: &[&QaInstance],
    lists: &[ProposalList],
    selector: Selector,
    model: Option<&MlpModel<T>>,
    ix: &Indices<T>,
) -> Result<AnswerRun> {
    let results: Vec<Result<Prediction>> = instances
        .par_iter()
        .zip(lists)
        .map(|(inst, list)| select(inst, list, selector, model, ix))
        .collect();
    let mut run = AnswerRun::default();
    for (inst, r) in instances.iter().zip(results) {
        match r {
            Ok(p) => run.predictions.push(p),
            Err(Error::NoCandidates) => run.flagged.push(inst.qid.clone()),
            Err(e) => return Err(e),
        }
    }
    Ok(run)
}

/// Answers every instance; those without candidates are flagged, not fatal.
pub fn answer_all<T: Scalar>(
    instances: &[&QaInstance],
    config: &PipelineConfig,
    ix: &Indices<T>,
    model: Option<&MlpModel<T>>,
) -> Result<AnswerRun> {
    let lists = candidate_lists(instances, config.candidate_source, config, ix)?;
    select_all(instances, &lists, config.selector, model, ix)
}

fn candidate_lists<T: Scalar>(
    instances: &[&QaInstance],
    source: CandidateSource,
    config: &PipelineConfig,
    ix: &Indices<T>,
) -> Result<Vec<ProposalList>> {
    if source == CandidateSource::Choices {
        let missing: Vec<String> = instances
            .iter()
            .filter(|i| i.choices.is_none())
            .map(|i| i.qid.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingChoices(missing));
        }
    }
    instances
        .par_iter()
        .map(|inst| candidates(inst, source, config, ix))
        .collect()
}

pub fn write_predictions<W: Write>(mut out: W, predictions: &[Prediction]) -> std::io::Result<()> {
    for p in predictions {
        serde_json::to_writer(&mut out, p)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_predictions(path: impl AsRef<Path>, predictions: &[Prediction]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_predictions(&mut out, predictions)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_predictions<R: BufRead>(reader: R, origin: &Path) -> Result<BTreeMap<String, Prediction>> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line).map_err(|e| Error::record(origin, i + 1, e.to_string()))?;
        if out.contains_key(&p.qid) {
            return Err(Error::record(origin, i + 1, format!("duplicate qid {:?}", p.qid)));
        }
        out.insert(p.qid.clone(), p);
    }
    Ok(out)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<BTreeMap<String, Prediction>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(BufReader::new(file), path)
}

/// Everything one choice-swap configuration produces.
#[derive(Debug, Clone)]
pub struct ChoiceSwapRun<T> {
    pub report: EvalReport,
    pub model: MlpModel<T>,
    pub training_log: Vec<EpochLog>,
    pub predictions: Vec<Prediction>,
    pub test_candidates: Vec<ProposalList>,
}

/// Trains on candidates from `train_source` and evaluates on the
/// `config.eval_split` instances with candidates from `test_source`.
pub fn run_choice_swap<T: Scalar>(
    corpus: &Corpus,
    train_source: CandidateSource,
    test_source: CandidateSource,
    config: &PipelineConfig,
    ix: &Indices<T>,
) -> Result<ChoiceSwapRun<T>> {
    let train: Vec<&QaInstance> = corpus.split(Split::Train).collect();
    let test: Vec<&QaInstance> = corpus.split(config.eval_split).collect();
    if test.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut missing = Vec::new();
    for (set, source) in [(&train, train_source), (&test, test_source)] {
        if source == CandidateSource::Choices {
            missing.extend(set.iter().filter(|i| i.choices.is_none()).map(|i| i.qid.clone()));
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingChoices(missing));
    }

    let train_lists = candidate_lists(&train, train_source, config, ix)?;
    let by_qid: BTreeMap<String, ProposalList> = train_lists.into_iter().map(|l| (l.qid.clone(), l)).collect();
    let rows = build_training_rows(corpus, &by_qid, ix.embeddings()?, ix.features()?, config.train.negatives)?;
    let (model, training_log) = fit(&rows, &config.train)?;

    let test_lists = candidate_lists(&test, test_source, config, ix)?;
    let run = select_all(&test, &test_lists, Selector::Classifier, Some(&model), ix)?;

    let by_answer: BTreeMap<String, String> = run
        .predictions
        .iter()
        .map(|p| (p.qid.clone(), p.answer.clone()))
        .collect();
    let per_type = per_type_report(&by_answer, test.iter().copied(), ix.parser()?);
    let test_map: BTreeMap<String, ProposalList> = test_lists.iter().map(|l| (l.qid.clone(), l.clone())).collect();
    let triplets = build_triplets(test.iter().copied(), &test_map);
    let mut report = EvalReport::intrinsic(&triplets, &[1, 5, 10, 100], MatchMode::Majority)?;
    report.label = Some(format!("train={train_source},test={test_source}"));
    report.per_type = Some(per_type.per_type);
    report.flagged = per_type.missing;
    Ok(ChoiceSwapRun {
        report,
        model,
        training_log,
        predictions: run.predictions,
        test_candidates: test_lists,
    })
}
