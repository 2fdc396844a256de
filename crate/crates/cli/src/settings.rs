//! Knob resolution: flags, then the optional TOML config file, then defaults.

use std::path::Path;
use std::str::FromStr;

use ap_core::pipeline::PipelineConfig;
use ap_core::proposal::NeighborMode;
use ap_core::{Activation, MatchMode, Split, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::{ProposalKnobs, TrainKnobs};
use crate::CliError;

/// Every knob a config file may set.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub model: Option<String>,
    pub cutoff: Option<usize>,
    pub k_neighbors: Option<usize>,
    pub neighbor_mode: Option<String>,
    pub index_budget: Option<u32>,
    pub test_budget: Option<u32>,
    pub bleu_max_n: Option<usize>,
    pub mode: Option<String>,
    pub cutoffs: Option<Vec<usize>>,
    pub split: Option<String>,
    pub selector: Option<String>,
    pub candidates: Option<String>,
    pub candidate_truncation: Option<usize>,
    pub hidden: Option<usize>,
    pub layers: Option<usize>,
    pub dropout: Option<f64>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub negatives: Option<usize>,
    pub activation: Option<String>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

pub fn parse<T>(flag: &str, value: Option<&str>, default: T) -> Result<T, CliError>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    match value {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|e: T::Err| CliError::Usage(format!("--{flag}: {e}"))),
    }
}

fn neighbor_mode(v: Option<&str>) -> Result<NeighborMode, CliError> {
    match v {
        None | Some("majority") => Ok(NeighborMode::Majority),
        Some("all-answers") => Ok(NeighborMode::AllAnswers),
        Some(other) => Err(CliError::Usage(format!("--neighbor-mode: unknown value {other:?}"))),
    }
}

pub fn split(flag: Option<&str>, file: &FileConfig) -> Result<Split, CliError> {
    parse("split", flag.or(file.split.as_deref()), Split::Val)
}

pub fn match_mode(flag: Option<&str>, file: &FileConfig) -> Result<MatchMode, CliError> {
    parse("mode", flag.or(file.mode.as_deref()), MatchMode::Majority)
}

pub fn pipeline(k: &ProposalKnobs, file: &FileConfig) -> Result<PipelineConfig, CliError> {
    let d = PipelineConfig::default();
    let config = PipelineConfig {
        model: parse("model", k.model.as_deref().or(file.model.as_deref()), d.model)?,
        cutoff: k.cutoff.or(file.cutoff).unwrap_or(d.cutoff),
        k_neighbors: k.k_neighbors.or(file.k_neighbors).unwrap_or(d.k_neighbors),
        neighbor_mode: neighbor_mode(k.neighbor_mode.as_deref().or(file.neighbor_mode.as_deref()))?,
        index_budget: k.index_budget.or(file.index_budget).unwrap_or(d.index_budget),
        test_budget: k.test_budget.or(file.test_budget).unwrap_or(d.test_budget),
        bleu_max_n: k.bleu_max_n.or(file.bleu_max_n).unwrap_or(d.bleu_max_n),
        candidate_truncation: file.candidate_truncation,
        ..d
    };
    if config.k_neighbors == 0 {
        return Err(CliError::Usage("--k-neighbors must be at least 1".into()));
    }
    if config.bleu_max_n == 0 {
        return Err(CliError::Usage("--bleu-max-n must be at least 1".into()));
    }
    Ok(config)
}

pub fn train(k: &TrainKnobs, file: &FileConfig) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    let config = TrainConfig {
        hidden: k.hidden.or(file.hidden).unwrap_or(d.hidden),
        layers: k.layers.or(file.layers).unwrap_or(d.layers),
        dropout: k.dropout.or(file.dropout).unwrap_or(d.dropout),
        lr: k.lr.or(file.lr).unwrap_or(d.lr),
        epochs: k.epochs.or(file.epochs).unwrap_or(d.epochs),
        batch: k.batch.or(file.batch).unwrap_or(d.batch),
        negatives: k.negatives.or(file.negatives).unwrap_or(d.negatives),
        seed: k.seed.or(file.seed).unwrap_or(d.seed),
        activation: parse::<Activation>(
            "activation",
            k.activation.as_deref().or(file.activation.as_deref()),
            d.activation,
        )?,
    };
    if config.hidden == 0 || config.batch == 0 {
        return Err(CliError::Usage("--hidden and --batch must be positive".into()));
    }
    if !(0.0..1.0).contains(&config.dropout) {
        return Err(CliError::Usage("--dropout must be in [0, 1)".into()));
    }
    if !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(CliError::Usage("--lr must be positive".into()));
    }
    Ok(config)
}

/// The one machine-readable line every run writes to stderr.
#[derive(Debug, Serialize)]
pub struct RunLog<'a, C: Serialize> {
    pub event: &'static str,
    pub command: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub config: &'a C,
}

pub fn config_hash<C: Serialize>(config: &C) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&canonical);
    hex::encode(&digest[..8])
}

pub fn log_run<C: Serialize>(command: &str, seed: u64, config: &C) {
    let line = RunLog {
        event: "run",
        command,
        config_hash: config_hash(config),
        seed,
        config,
    };
    eprintln!("{}", serde_json::to_string(&line).expect("log line serializes"));
}
