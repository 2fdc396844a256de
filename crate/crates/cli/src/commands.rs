use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use ap_core::classifier::{build_training_rows, fit, gradient_check, MlpModel};
use ap_core::corpus::{EmbeddingTable, FeatureTable};
use ap_core::evalkit::{build_triplets, per_type_report, rank1_fraction, rank_distribution, EvalReport, PerType};
use ap_core::pipeline::{
    self, answer_all, candidates, propose_all, run_choice_swap, CandidateSource, Indices, PipelineConfig, ProposalModel,
    Selector,
};
use ap_core::proposal::{load_proposals, save_proposals, write_proposals, ProposalList};
use ap_core::synth::{generate, SynthConfig};
use ap_core::textsim::W2vIndex;
use ap_core::{BleuIndex, Corpus, Error, QaInstance, SemIndex, SemanticParser, Split};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::settings::{self, log_run, FileConfig};
use crate::CliError;

type Result<T, E = CliError> = std::result::Result<T, E>;

pub fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Index(IndexCommand::W2v(a)) => index_w2v(a),
        Command::Index(IndexCommand::Sem(a)) => index_sem(a, &file),
        Command::Propose(a) => propose(a, &file),
        Command::Eval(EvalCommand::Recall(a)) => eval_recall(a, &file),
        Command::Eval(EvalCommand::Rankdist(a)) => eval_rankdist(a, &file),
        Command::Eval(EvalCommand::Vqa(a)) => eval_vqa(a, &file),
        Command::TrainClassifier(a) => train_classifier(a, &file),
        Command::Answer(a) => answer(a, &file),
        Command::Gradcheck(a) => gradcheck(a, &file),
        Command::Experiment(ExperimentCommand::ChoiceSwap(a)) => choice_swap(a, &file),
        Command::SynthCorpus(a) => synth_corpus(a, &file),
    }
}

/// Fails before any work when an input file is missing.
fn check_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::Io {
                path: p.to_path_buf(),
                source: io::Error::new(io::ErrorKind::NotFound, "input file not found"),
            }
            .into());
        }
    }
    Ok(())
}

fn opt(p: &Option<PathBuf>) -> Option<&Path> {
    p.as_deref()
}

fn resource_inputs(r: &ResourceArgs) -> Vec<&Path> {
    let mut v = vec![r.questions.as_path()];
    v.extend(
        [&r.embeddings, &r.image_features, &r.ontology, &r.lexicon, &r.w2v_index, &r.sem_index]
            .into_iter()
            .filter_map(opt),
    );
    v
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(|e| Error::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    if out.is_some() {
        // reports always reach stdout; the file is an extra copy
        emit(None, text.as_bytes())?;
    }
    emit(out, text.as_bytes())
}

fn load_parser(lexicon: Option<&Path>, ontology: Option<&Path>) -> Result<Option<SemanticParser>> {
    match (lexicon, ontology) {
        (Some(l), Some(o)) => Ok(Some(SemanticParser::load(l, o)?)),
        (None, None) => Ok(None),
        _ => Err(CliError::Usage("--lexicon and --ontology must be given together".into())),
    }
}

/// Loads or builds whatever `config.model` needs.
fn indices(r: &ResourceArgs, config: &PipelineConfig, corpus: &Corpus, need_features: bool) -> Result<Indices<f64>> {
    let mut ix = Indices::<f64> {
        embeddings: opt(&r.embeddings).map(EmbeddingTable::load_embeddings).transpose()?,
        parser: load_parser(opt(&r.lexicon), opt(&r.ontology))?,
        ..Indices::default()
    };
    if need_features {
        let path = opt(&r.image_features).ok_or_else(|| CliError::Usage("--image-features is required".into()))?;
        ix.features = Some(FeatureTable::load_features(path)?);
    }
    if matches!(config.model, ProposalModel::W2v | ProposalModel::Sem | ProposalModel::W2vSem) {
        let emb = ix
            .embeddings
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("--embeddings is required for model {}", config.model)))?;
        let index = match opt(&r.w2v_index) {
            Some(p) => {
                let index = W2vIndex::load(p)?;
                if emb.dim().is_some_and(|d| d != index.dim()) {
                    return Err(Error::DimensionMismatch {
                        expected: index.dim(),
                        actual: emb.dim().unwrap_or(0),
                    }
                    .into());
                }
                index
            }
            None => W2vIndex::build(corpus, emb),
        };
        ix.w2v = Some(index);
    }
    if matches!(config.model, ProposalModel::Sem | ProposalModel::W2vSem) {
        let index = match opt(&r.sem_index) {
            Some(p) => {
                let index = SemIndex::load(p)?;
                if index.budget() != config.index_budget {
                    warn!(
                        "cached SEM index has budget {}, configured {}; using the cache",
                        index.budget(),
                        config.index_budget
                    );
                }
                index
            }
            None => {
                let parser = ix.parser.as_ref().ok_or_else(|| {
                    CliError::Usage(format!("--lexicon and --ontology are required for model {}", config.model))
                })?;
                SemIndex::build(corpus, parser, config.index_budget)
            }
        };
        ix.sem = Some(index);
    }
    if config.model == ProposalModel::Bleu {
        ix.bleu = Some(BleuIndex::build(corpus));
    }
    Ok(ix)
}

fn ingest(a: IngestArgs) -> Result<()> {
    check_inputs([a.questions.as_path()].into_iter().chain(opt(&a.embeddings)).chain(opt(&a.image_features)))?;
    log_run("ingest", 0, &json!({ "questions": a.questions, "embeddings": a.embeddings, "image_features": a.image_features, "out": a.out }));
    let corpus = Corpus::load(&a.questions)?;
    let mut summary = json!({
        "instances": corpus.len(),
        "splits": corpus.split_counts(),
        "with_choices": corpus.instances().iter().filter(|i| i.choices.is_some()).count(),
    });
    if let Some(p) = &a.embeddings {
        let emb = EmbeddingTable::<f64>::load_embeddings(p)?;
        let tokens: std::collections::BTreeSet<String> = corpus
            .instances()
            .iter()
            .flat_map(|i| ap_core::textsim::tokenize(&i.question))
            .collect();
        let known = tokens.iter().filter(|t| emb.get(t).is_some()).count();
        summary["embeddings"] = json!({ "tokens": emb.len(), "dim": emb.dim(), "question_vocabulary": tokens.len(), "covered": known });
    }
    if let Some(p) = &a.image_features {
        let feats = FeatureTable::<f64>::load_features(p)?;
        for inst in corpus.instances() {
            feats.feature(&inst.image_id)?;
        }
        summary["image_features"] = json!({ "images": feats.len(), "dim": feats.dim() });
    }
    if let Some(out) = &a.out {
        corpus.save(out)?;
    }
    emit_json(None, &summary)
}

fn index_w2v(a: IndexW2vArgs) -> Result<()> {
    check_inputs([a.questions.as_path(), a.embeddings.as_path()])?;
    log_run("index w2v", 0, &json!({ "questions": a.questions, "embeddings": a.embeddings, "out": a.out }));
    let corpus = Corpus::load(&a.questions)?;
    let emb = EmbeddingTable::<f64>::load_embeddings(&a.embeddings)?;
    let index = W2vIndex::build(&corpus, &emb);
    index.save(&a.out)?;
    emit_json(None, &json!({ "entries": index.len(), "dim": index.dim(), "out": a.out }))
}

fn index_sem(a: IndexSemArgs, file: &FileConfig) -> Result<()> {
    check_inputs([a.questions.as_path(), a.lexicon.as_path(), a.ontology.as_path()])?;
    let budget = a.index_budget.or(file.index_budget).unwrap_or(3);
    log_run(
        "index sem",
        0,
        &json!({ "questions": a.questions, "lexicon": a.lexicon, "ontology": a.ontology, "index_budget": budget, "out": a.out }),
    );
    let corpus = Corpus::load(&a.questions)?;
    let parser = SemanticParser::load(&a.lexicon, &a.ontology)?;
    let index = SemIndex::build(&corpus, &parser, budget);
    index.save(&a.out)?;
    emit_json(
        None,
        &json!({ "indexed": index.indexed(), "skipped": index.skipped(), "forms": index.bucket_count(), "budget": budget, "out": a.out }),
    )
}

fn split_instances(corpus: &Corpus, split: Split) -> Vec<&QaInstance> {
    corpus.split(split).collect()
}

fn propose(a: ProposeArgs, file: &FileConfig) -> Result<()> {
    check_inputs(resource_inputs(&a.resources))?;
    let config = settings::pipeline(&a.knobs, file)?;
    let split = settings::split(a.split.as_deref(), file)?;
    log_run("propose", 0, &json!({ "resources": paths_json(&a.resources), "pipeline": config, "split": split, "out": a.out }));
    let corpus = Corpus::load(&a.resources.questions)?;
    let ix = indices(&a.resources, &config, &corpus, false)?;
    let instances = split_instances(&corpus, split);
    let lists = propose_all(&instances, &config, &ix)?;
    info!("proposed for {} questions", lists.len());
    let mut buf = Vec::new();
    write_proposals(&mut buf, &lists).expect("in-memory write");
    emit(opt(&a.out), &buf)
}

fn paths_json(r: &ResourceArgs) -> serde_json::Value {
    json!({
        "questions": r.questions,
        "embeddings": r.embeddings,
        "image_features": r.image_features,
        "ontology": r.ontology,
        "lexicon": r.lexicon,
        "w2v_index": r.w2v_index,
        "sem_index": r.sem_index,
    })
}

fn eval_triplets(
    proposals: &Path,
    questions: &Path,
    split: Split,
) -> Result<Vec<ap_core::EvalTriplet>> {
    let corpus = Corpus::load(questions)?;
    let lists = load_proposals(proposals)?;
    let instances = split_instances(&corpus, split);
    let missing = instances.iter().filter(|i| !lists.contains_key(&i.qid)).count();
    if missing > 0 {
        warn!("{missing} questions have no proposal list and count as misses");
    }
    Ok(build_triplets(instances, &lists))
}

fn eval_recall(a: EvalRecallArgs, file: &FileConfig) -> Result<()> {
    check_inputs([a.proposals.as_path(), a.questions.as_path()])?;
    let mode = settings::match_mode(a.mode.as_deref(), file)?;
    let split = settings::split(a.split.as_deref(), file)?;
    let cutoffs = a.cutoffs.clone().or(file.cutoffs.clone()).unwrap_or_else(|| vec![1, 5, 10, 100]);
    log_run(
        "eval recall",
        0,
        &json!({ "proposals": a.proposals, "questions": a.questions, "mode": mode, "cutoffs": cutoffs, "split": split }),
    );
    let triplets = eval_triplets(&a.proposals, &a.questions, split)?;
    let report = EvalReport::intrinsic(&triplets, &cutoffs, mode)?;
    emit_json(opt(&a.out), &report)
}

fn eval_rankdist(a: EvalRankArgs, file: &FileConfig) -> Result<()> {
    check_inputs([a.proposals.as_path(), a.questions.as_path()])?;
    let mode = settings::match_mode(a.mode.as_deref(), file)?;
    let split = settings::split(a.split.as_deref(), file)?;
    log_run("eval rankdist", 0, &json!({ "proposals": a.proposals, "questions": a.questions, "mode": mode, "split": split }));
    let triplets = eval_triplets(&a.proposals, &a.questions, split)?;
    let hist = rank_distribution(&triplets, mode);
    let hits: usize = hist.values().sum();
    emit_json(
        opt(&a.out),
        &json!({
            "mode": mode,
            "M": triplets.len(),
            "hits": hits,
            "rank_histogram": hist,
            "rank1_fraction": rank1_fraction(&hist),
        }),
    )
}

#[derive(Serialize)]
struct VqaReport {
    #[serde(rename = "M")]
    m: usize,
    per_type: PerType,
    counts: BTreeMap<&'static str, usize>,
    flagged: Vec<String>,
}

fn eval_vqa(a: EvalVqaArgs, file: &FileConfig) -> Result<()> {
    check_inputs([a.predictions.as_path(), a.questions.as_path(), a.lexicon.as_path(), a.ontology.as_path()])?;
    let split = settings::split(a.split.as_deref(), file)?;
    log_run(
        "eval vqa",
        0,
        &json!({ "predictions": a.predictions, "questions": a.questions, "lexicon": a.lexicon, "ontology": a.ontology, "split": split }),
    );
    let corpus = Corpus::load(&a.questions)?;
    let parser = SemanticParser::load(&a.lexicon, &a.ontology)?;
    let preds: BTreeMap<String, String> = pipeline::load_predictions(&a.predictions)?
        .into_iter()
        .map(|(q, p)| (q, p.answer))
        .collect();
    let instances = split_instances(&corpus, split);
    let r = per_type_report(&preds, instances.iter().copied(), &parser);
    emit_json(
        opt(&a.out),
        &VqaReport {
            m: instances.len(),
            per_type: r.per_type,
            counts: r.counts,
            flagged: r.missing,
        },
    )
}

/// Candidate lists for `instances`, from a proposals file or computed.
fn candidate_map(
    instances: &[&QaInstance],
    source: CandidateSource,
    proposals: Option<&Path>,
    config: &PipelineConfig,
    ix: &Indices<f64>,
) -> Result<Vec<ProposalList>> {
    match (source, proposals) {
        (CandidateSource::Proposals, Some(p)) => {
            let lists = load_proposals(p)?;
            Ok(instances
                .iter()
                .map(|i| {
                    lists
                        .get(&i.qid)
                        .cloned()
                        .unwrap_or_else(|| ProposalList::empty(i.qid.clone(), ap_core::Source::Agg))
                })
                .collect())
        }
        _ => Ok(instances
            .iter()
            .map(|i| candidates(i, source, config, ix))
            .collect::<ap_core::Result<Vec<_>>>()?),
    }
}

fn train_classifier(a: TrainArgs, file: &FileConfig) -> Result<()> {
    let mut inputs = resource_inputs(&a.resources);
    inputs.extend(opt(&a.proposals));
    check_inputs(inputs)?;
    let mut config = settings::pipeline(&a.knobs, file)?;
    config.train = settings::train(&a.train, file)?;
    let source: CandidateSource = settings::parse(
        "candidates",
        a.candidates.as_deref().or(file.candidates.as_deref()),
        CandidateSource::Proposals,
    )?;
    log_run(
        "train-classifier",
        config.train.seed,
        &json!({ "resources": paths_json(&a.resources), "pipeline": config, "candidates": source, "proposals": a.proposals, "out": a.out }),
    );
    let corpus = Corpus::load(&a.resources.questions)?;
    if a.resources.embeddings.is_none() {
        return Err(CliError::Usage("--embeddings is required".into()));
    }
    let needs_index = source == CandidateSource::Proposals && a.proposals.is_none();
    let mut ix = if needs_index {
        indices(&a.resources, &config, &corpus, true)?
    } else {
        Indices::<f64> {
            embeddings: opt(&a.resources.embeddings).map(EmbeddingTable::load_embeddings).transpose()?,
            features: Some(FeatureTable::load_features(
                opt(&a.resources.image_features).ok_or_else(|| CliError::Usage("--image-features is required".into()))?,
            )?),
            ..Indices::default()
        }
    };
    let train = split_instances(&corpus, Split::Train);
    if source == CandidateSource::Choices {
        let missing: Vec<String> = train.iter().filter(|i| i.choices.is_none()).map(|i| i.qid.clone()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingChoices(missing).into());
        }
    }
    let lists = candidate_map(&train, source, opt(&a.proposals), &config, &ix)?;
    let by_qid: BTreeMap<String, ProposalList> = lists.into_iter().map(|l| (l.qid.clone(), l)).collect();
    let emb = ix.embeddings.take().expect("embeddings loaded");
    let feats = ix.features.take().expect("features loaded");
    let rows = build_training_rows(&corpus, &by_qid, &emb, &feats, config.train.negatives)?;
    let (model, log) = fit(&rows, &config.train)?;
    for e in &log {
        info!("epoch {} mean loss {:.6}", e.epoch, e.mean_loss);
    }
    model.save(&a.out)?;
    emit_json(
        None,
        &json!({
            "rows": rows.rows.len(),
            "layer_dims": model.layer_dims(),
            "epochs": log,
            "out": a.out,
        }),
    )
}

fn answer(a: AnswerArgs, file: &FileConfig) -> Result<()> {
    let mut inputs = resource_inputs(&a.resources);
    inputs.extend(opt(&a.proposals));
    inputs.extend(opt(&a.classifier_model));
    check_inputs(inputs)?;
    let mut config = settings::pipeline(&a.knobs, file)?;
    config.selector = settings::parse("selector", a.selector.as_deref().or(file.selector.as_deref()), Selector::TopRank)?;
    config.candidate_source = settings::parse(
        "candidates",
        a.candidates.as_deref().or(file.candidates.as_deref()),
        CandidateSource::Proposals,
    )?;
    let split = settings::split(a.split.as_deref(), file)?;
    log_run(
        "answer",
        0,
        &json!({ "resources": paths_json(&a.resources), "pipeline": config, "proposals": a.proposals, "classifier_model": a.classifier_model, "split": split }),
    );
    let classifier = config.selector == Selector::Classifier;
    let model = match (&a.classifier_model, classifier) {
        (Some(p), true) => Some(MlpModel::<f64>::load(p)?),
        (None, true) => return Err(CliError::Usage("--classifier-model is required with --selector classifier".into())),
        _ => None,
    };
    let corpus = Corpus::load(&a.resources.questions)?;
    let needs_index = config.candidate_source == CandidateSource::Proposals && a.proposals.is_none();
    let ix = if needs_index {
        indices(&a.resources, &config, &corpus, classifier)?
    } else {
        Indices::<f64> {
            embeddings: opt(&a.resources.embeddings).map(EmbeddingTable::load_embeddings).transpose()?,
            features: if classifier {
                Some(FeatureTable::load_features(
                    opt(&a.resources.image_features)
                        .ok_or_else(|| CliError::Usage("--image-features is required".into()))?,
                )?)
            } else {
                None
            },
            ..Indices::default()
        }
    };
    let instances = split_instances(&corpus, split);
    let run = if a.proposals.is_some() && config.candidate_source == CandidateSource::Proposals {
        let lists = candidate_map(&instances, config.candidate_source, opt(&a.proposals), &config, &ix)?;
        let mut run = pipeline::AnswerRun::default();
        for (inst, list) in instances.iter().zip(&lists) {
            match pipeline::select(inst, list, config.selector, model.as_ref(), &ix) {
                Ok(p) => run.predictions.push(p),
                Err(Error::NoCandidates) => run.flagged.push(inst.qid.clone()),
                Err(e) => return Err(e.into()),
            }
        }
        run
    } else {
        answer_all(&instances, &config, &ix, model.as_ref())?
    };
    if !run.flagged.is_empty() {
        eprintln!("{}", json!({ "event": "flagged", "reason": "no candidates", "qids": run.flagged }));
    }
    let mut buf = Vec::new();
    pipeline::write_predictions(&mut buf, &run.predictions).expect("in-memory write");
    emit(opt(&a.out), &buf)
}

const KINK_MARGIN: f64 = 1e-3;

fn gradcheck(a: GradcheckArgs, file: &FileConfig) -> Result<()> {
    let networks = a.networks.unwrap_or(20);
    let max_dim = a.max_dim.unwrap_or(8).max(1);
    let epsilon = a.epsilon.unwrap_or(1e-5);
    let tolerance = a.tolerance.unwrap_or(1e-4);
    let seed = a.seed.or(file.seed).unwrap_or(0);
    log_run(
        "gradcheck",
        seed,
        &json!({ "networks": networks, "max_dim": max_dim, "epsilon": epsilon, "tolerance": tolerance, "seed": seed }),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(networks);
    for _ in 0..networks {
        let hidden_layers = rng.gen_range(1..=3);
        let mut dims: Vec<usize> = (0..=hidden_layers).map(|_| rng.gen_range(1..=max_dim)).collect();
        dims.push(1);
        let model = MlpModel::<f64>::new(dims.clone(), 0.0, rng.gen(), Default::default())?;
        // resample inputs that land next to a ReLU kink
        let mut x: Vec<f64> = Vec::new();
        for _ in 0..1000 {
            x = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if model.kink_margin(&x)? > KINK_MARGIN {
                break;
            }
        }
        let y = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        let err = gradient_check(&model, &x, y, epsilon)?;
        errors.push(json!({ "layer_dims": dims, "max_rel_error": err }));
    }
    let worst = errors
        .iter()
        .map(|e| e["max_rel_error"].as_f64().unwrap_or(f64::NAN))
        .fold(0.0, f64::max);
    emit_json(
        None,
        &json!({ "networks": errors, "max_rel_error": worst, "tolerance": tolerance, "pass": worst < tolerance }),
    )
}

fn choice_swap(a: ChoiceSwapArgs, file: &FileConfig) -> Result<()> {
    check_inputs(resource_inputs(&a.resources))?;
    let mut config = settings::pipeline(&a.knobs, file)?;
    config.train = settings::train(&a.train, file)?;
    config.eval_split = settings::split(a.split.as_deref(), file)?;
    config.candidate_truncation = a.candidate_truncation.or(config.candidate_truncation);
    let pairs: Vec<(CandidateSource, CandidateSource)> = match (&a.train_source, &a.test_source) {
        (None, None) => vec![
            (CandidateSource::Choices, CandidateSource::Choices),
            (CandidateSource::Choices, CandidateSource::Proposals),
            (CandidateSource::Proposals, CandidateSource::Proposals),
        ],
        (Some(tr), Some(te)) => vec![(
            settings::parse("train-source", Some(tr), CandidateSource::Proposals)?,
            settings::parse("test-source", Some(te), CandidateSource::Proposals)?,
        )],
        _ => return Err(CliError::Usage("give both --train-source and --test-source, or neither".into())),
    };
    log_run(
        "experiment choice-swap",
        config.train.seed,
        &json!({ "resources": paths_json(&a.resources), "pipeline": config, "pairs": pairs, "out": a.out }),
    );
    if a.resources.lexicon.is_none() {
        return Err(CliError::Usage("--lexicon and --ontology are required for the per-type report".into()));
    }
    let corpus = Corpus::load(&a.resources.questions)?;
    let ix = indices(&a.resources, &config, &corpus, true)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let mut reports = Vec::new();
    for (train_source, test_source) in pairs {
        let run = run_choice_swap(&corpus, train_source, test_source, &config, &ix)?;
        let dir = a.out.join(format!("train-{train_source}_test-{test_source}"));
        fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        run.model.save(dir.join("model.txt"))?;
        pipeline::save_predictions(dir.join("predictions.jsonl"), &run.predictions)?;
        save_proposals(dir.join("candidates.jsonl"), &run.test_candidates)?;
        let mut text = serde_json::to_string_pretty(&run.report).expect("report serializes");
        text.push('\n');
        emit(Some(&dir.join("report.json")), text.as_bytes())?;
        reports.push(run.report);
    }
    emit_json(None, &reports)
}

fn synth_corpus(a: SynthArgs, file: &FileConfig) -> Result<()> {
    let d = SynthConfig::default();
    let config = SynthConfig {
        seed: a.seed.or(file.seed).unwrap_or(d.seed),
        train: a.train.unwrap_or(d.train),
        val: a.val.unwrap_or(d.val),
        embedding_dim: a.embedding_dim.unwrap_or(d.embedding_dim),
        feature_dim: a.feature_dim.unwrap_or(d.feature_dim),
        ..d
    };
    log_run("synth-corpus", config.seed, &json!({ "synth": config, "out": a.out }));
    let data = generate(&config)?;
    let paths = data.write_dir(&a.out)?;
    emit_json(
        None,
        &json!({
            "instances": data.corpus.len(),
            "splits": data.corpus.split_counts(),
            "frames": data.frames.len(),
            "corpus": paths.corpus,
            "ontology": paths.ontology,
            "lexicon": paths.lexicon,
            "embeddings": paths.embeddings,
            "image_features": paths.features,
            "frames_file": paths.frames,
        }),
    )
}
