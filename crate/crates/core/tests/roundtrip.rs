//! Every persisted artifact reloads to an equal value.

use std::collections::BTreeMap;

use ap_core::classifier::{fit, LabeledRow, MlpModel, TripletBatch};
use ap_core::pipeline::{answer_all, load_predictions, propose_all, save_predictions, Indices, PipelineConfig};
use ap_core::proposal::{load_proposals, save_proposals};
use ap_core::synth::{generate, SynthConfig};
use ap_core::textsim::W2vIndex;
use ap_core::{Activation, Corpus, QaInstance, SemIndex, Split, TrainConfig};

fn data() -> ap_core::synth::SynthData {
    generate(&SynthConfig { train: 120, val: 30, ..SynthConfig::default() }).unwrap()
}

#[test]
fn corpus_and_tables() {
    let d = data();
    let dir = tempfile::tempdir().unwrap();
    let paths = d.write_dir(dir.path()).unwrap();
    assert_eq!(Corpus::load(&paths.corpus).unwrap(), d.corpus);
    assert_eq!(ap_core::corpus::EmbeddingTable::<f64>::load_embeddings(&paths.embeddings).unwrap(), d.embeddings);
    assert_eq!(ap_core::corpus::FeatureTable::<f64>::load_features(&paths.features).unwrap(), d.features);
}

#[test]
fn indices() {
    let d = data();
    let dir = tempfile::tempdir().unwrap();
    let w2v = W2vIndex::build(&d.corpus, &d.embeddings);
    w2v.save(dir.path().join("w2v")).unwrap();
    assert_eq!(W2vIndex::<f64>::load(dir.path().join("w2v")).unwrap(), w2v);

    let table32 = ap_core::corpus::EmbeddingTable::<f32>::from_rows(
        d.embeddings.iter().map(|(k, v)| (k, v.iter().map(|&x| x as f32).collect::<Vec<_>>())),
    )
    .unwrap();
    let w2v32 = W2vIndex::build(&d.corpus, &table32);
    w2v32.save(dir.path().join("w2v32")).unwrap();
    assert_eq!(W2vIndex::<f32>::load(dir.path().join("w2v32")).unwrap(), w2v32);

    let sem = SemIndex::build(&d.corpus, &d.parser().unwrap(), 3);
    sem.save(dir.path().join("sem")).unwrap();
    assert_eq!(SemIndex::load(dir.path().join("sem")).unwrap(), sem);
}

#[test]
fn proposals_predictions_and_models() {
    let d = data();
    let dir = tempfile::tempdir().unwrap();
    let ix = Indices::build(&d.corpus, &PipelineConfig::default(), Some(d.embeddings.clone()), Some(d.parser().unwrap())).unwrap();
    let val: Vec<&QaInstance> = d.corpus.split(Split::Val).collect();
    let lists = propose_all(&val, &PipelineConfig::default(), &ix).unwrap();
    save_proposals(dir.path().join("p.jsonl"), &lists).unwrap();
    let expected: BTreeMap<_, _> = lists.into_iter().map(|l| (l.qid.clone(), l)).collect();
    assert_eq!(load_proposals(dir.path().join("p.jsonl")).unwrap(), expected);

    let run = answer_all(&val, &PipelineConfig::default(), &ix, None).unwrap();
    save_predictions(dir.path().join("a.jsonl"), &run.predictions).unwrap();
    let back = load_predictions(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(back.into_values().collect::<Vec<_>>(), run.predictions);

    let rows = TripletBatch {
        rows: (0..20)
            .map(|i| LabeledRow { x: vec![i as f64 / 7.0, (i % 3) as f64 - 1.0, 0.25], y: (i % 2) as f64 })
            .collect(),
    };
    let config = TrainConfig { hidden: 5, layers: 2, epochs: 3, activation: Activation::Tanh, ..TrainConfig::default() };
    let (model, _) = fit(&rows, &config).unwrap();
    model.save(dir.path().join("m.txt")).unwrap();
    assert_eq!(MlpModel::<f64>::load(dir.path().join("m.txt")).unwrap(), model);
}
