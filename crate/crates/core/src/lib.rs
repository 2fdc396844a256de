//! Answer proposal for open-ended visual question answering.
//!
//! Given a question alone, the proposers rank plausible answers by
//! averaged-embedding retrieval ([`textsim`], [`proposal`]) and by semantic
//! graph matching with ontology lifts ([`semparse`], [`graphmatch`]). The
//! lists are scored with Recall@N ([`evalkit`]) and fed, together with image
//! features, to a triplet classifier ([`classifier`]) that picks the final
//! answer ([`pipeline`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod graphmatch;
pub mod pipeline;
pub mod proposal;
pub mod scalar;
pub mod semparse;
pub mod synth;
pub mod textsim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use classifier::{Activation, TrainConfig};
pub use corpus::{normalize_answer, Corpus, QaInstance, Split};
pub use evalkit::{EvalReport, EvalTriplet, MatchMode};
pub use graphmatch::{propose_sem, QuestionCategory, SemIndex};
pub use pipeline::{CandidateSource, PipelineConfig, ProposalModel, Selector};
pub use proposal::{alternate_merge, truncate, Proposal, ProposalList, Source};
pub use semparse::{Ontology, SemanticGraph, SemanticParser};
pub use textsim::BleuIndex;

pub type Embeddings = corpus::EmbeddingTable<f64>;
pub type Features = corpus::FeatureTable<f64>;
pub type W2vIndex = textsim::W2vIndex<f64>;
pub type Mlp = classifier::MlpModel<f64>;
pub type Indices = pipeline::Indices<f64>;

pub type Embeddings32 = corpus::EmbeddingTable<f32>;
pub type Features32 = corpus::FeatureTable<f32>;
pub type W2vIndex32 = textsim::W2vIndex<f32>;
pub type Mlp32 = classifier::MlpModel<f32>;
pub type Indices32 = pipeline::Indices<f32>;
