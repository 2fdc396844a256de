//! Triplet classifier: an MLP over `[question ∥ image ∥ answer]` features
//! with a sigmoid output, trained by plain SGD on the logistic loss.
//!
//! Hidden layers use the configured activation (ReLU by default). Dropout
//! with inverted scaling follows the first hidden layer and is active only
//! in training passes.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EmbeddingTable, FeatureTable, Split};
use crate::error::{Error, Result};
use crate::proposal::ProposalList;
use crate::scalar::Scalar;
use crate::textsim::sentence_vector;

/// Probabilities are clamped to `[P_MIN, 1 - P_MIN]` inside the loss.
pub const P_MIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative in terms of the pre-activation.
    fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::InvalidArgument(format!("unknown activation {s:?}"))),
        }
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Feed-forward network `layer_dims[0] -> ... -> 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    layer_dims: Vec<usize>,
    /// Per layer, `out × in` row-major.
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
    dropout_rate: f64,
    seed: u64,
    activation: Activation,
}

/// Gradients with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow<T> {
    pub x: Vec<T>,
    pub y: T,
}

/// Concatenated triplet features with 0/1 labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripletBatch<T> {
    pub rows: Vec<LabeledRow<T>>,
}

struct Trace<T> {
    /// `activations[0]` is the input; `activations[l]` feeds layer `l`.
    activations: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    mask: Option<Vec<T>>,
    prob: T,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) || *dims.last().unwrap() != 1 {
        return Err(Error::Model(format!(
            "layer dims must be positive and end in 1, got {dims:?}"
        )));
    }
    Ok(())
}

impl<T: Scalar> MlpModel<T> {
    /// Seeded Glorot-uniform weights and zero biases.
    pub fn new(layer_dims: Vec<usize>, dropout_rate: f64, seed: u64, activation: Activation) -> Result<Self> {
        check_dims(&layer_dims)?;
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Model(format!("dropout rate {dropout_rate} outside [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| T::lit(rng.gen_range(-limit..limit)))
                    .collect(),
            );
            biases.push(vec![T::zero(); fan_out]);
        }
        Ok(MlpModel {
            layer_dims,
            weights,
            biases,
            dropout_rate,
            seed,
            activation,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(layer_dims: Vec<usize>, dropout_rate: f64, seed: u64, activation: Activation) -> Result<Self> {
        let mut m = Self::new(layer_dims, dropout_rate, seed, activation)?;
        for w in m.weights.iter_mut().chain(m.biases.iter_mut()) {
            w.iter_mut().for_each(|x| *x = T::zero());
        }
        Ok(m)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[Vec<T>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Vec<T>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.biases
    }

    fn param_mut(&mut self, kind: usize, layer: usize, i: usize) -> &mut T {
        if kind == 0 {
            &mut self.weights[layer][i]
        } else {
            &mut self.biases[layer][i]
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    fn trace(&self, x: &[T], mut dropout: Option<&mut (dyn RngCore + 'static)>) -> Result<Trace<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let n_layers = self.weights.len();
        let mut activations = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut mask = None;
        activations.push(x.to_vec());
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let input = &activations[l];
            let w = &self.weights[l];
            let z: Vec<T> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    row.iter().zip(input).fold(self.biases[l][o], |acc, (a, b)| acc + *a * *b)
                })
                .collect();
            if l + 1 < n_layers {
                let mut a: Vec<T> = z.iter().map(|&v| self.activation.apply(v)).collect();
                if l == 0 && self.dropout_rate > 0.0 {
                    if let Some(rng) = dropout.as_deref_mut() {
                        let scale = T::lit(1.0 / (1.0 - self.dropout_rate));
                        let m: Vec<T> = (0..n_out)
                            .map(|_| {
                                if rng.gen::<f64>() < self.dropout_rate {
                                    T::zero()
                                } else {
                                    scale
                                }
                            })
                            .collect();
                        a.iter_mut().zip(&m).for_each(|(v, k)| *v *= *k);
                        mask = Some(m);
                    }
                }
                activations.push(a);
            }
            pre.push(z);
        }
        let prob = sigmoid(pre[n_layers - 1][0]);
        Ok(Trace {
            activations,
            pre,
            mask,
            prob,
        })
    }

    /// Evaluation-mode probability; deterministic.
    pub fn forward(&self, x: &[T]) -> Result<T> {
        Ok(self.trace(x, None)?.prob)
    }

    /// Smallest |pre-activation| over the hidden layers at `x`. A finite-difference
    /// probe closer than this to a ReLU kink measures the kink, not the gradient.
    pub fn kink_margin(&self, x: &[T]) -> Result<T> {
        let trace = self.trace(x, None)?;
        if self.activation == Activation::Tanh {
            return Ok(T::infinity());
        }
        let hidden = &trace.pre[..trace.pre.len() - 1];
        Ok(hidden.iter().flatten().fold(T::infinity(), |m, z| m.min(z.abs())))
    }

    /// Training-mode probability with a dropout mask drawn from `rng`.
    pub fn forward_train(&self, x: &[T], rng: &mut (dyn RngCore + 'static)) -> Result<T> {
        Ok(self.trace(x, Some(rng))?.prob)
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            weights: self.weights.iter().map(|w| vec![T::zero(); w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![T::zero(); b.len()]).collect(),
        }
    }

    fn backprop(&self, t: &Trace<T>, dlogit: T, grads: &mut Gradients<T>) {
        let mut delta = vec![dlogit];
        for l in (0..self.weights.len()).rev() {
            let n_in = self.layer_dims[l];
            let input = &t.activations[l];
            for (o, &d) in delta.iter().enumerate() {
                grads.biases[l][o] += d;
                let row = &mut grads.weights[l][o * n_in..(o + 1) * n_in];
                row.iter_mut().zip(input).for_each(|(g, a)| *g += d * *a);
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut back: Vec<T> = (0..n_in)
                .map(|i| delta.iter().enumerate().fold(T::zero(), |acc, (o, &d)| acc + w[o * n_in + i] * d))
                .collect();
            if l == 1 {
                if let Some(m) = &t.mask {
                    back.iter_mut().zip(m).for_each(|(b, k)| *b *= *k);
                }
            }
            for (b, &z) in back.iter_mut().zip(&t.pre[l - 1]) {
                *b *= self.activation.derivative(z);
            }
            delta = back;
        }
    }

    /// Mean clamped logistic loss and its gradients. With `dropout` set, one
    /// mask per row is drawn and reused by the backward pass.
    pub fn loss_and_grads(
        &self,
        rows: &[LabeledRow<T>],
        mut dropout: Option<&mut (dyn RngCore + 'static)>,
    ) -> Result<(T, Gradients<T>)> {
        if rows.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = T::from_usize(rows.len()).expect("batch size fits scalar");
        let mut grads = self.zero_gradients();
        let mut loss = T::zero();
        for row in rows {
            let t = self.trace(&row.x, dropout.as_deref_mut())?;
            loss += logistic_loss(t.prob, row.y);
            // d/dz of the unclamped loss; identical wherever the clamp is inactive
            self.backprop(&t, (t.prob - row.y) / n, &mut grads);
        }
        Ok((loss / n, grads))
    }

    /// Mean loss in evaluation mode.
    pub fn loss(&self, rows: &[LabeledRow<T>]) -> Result<T> {
        if rows.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = T::from_usize(rows.len()).expect("batch size fits scalar");
        let mut loss = T::zero();
        for row in rows {
            loss += logistic_loss(self.forward(&row.x)?, row.y);
        }
        Ok(loss / n)
    }

    pub fn apply_gradients(&mut self, grads: &Gradients<T>, lr: T) {
        for (p, g) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(grads.weights.iter().chain(&grads.biases))
        {
            p.iter_mut().zip(g).for_each(|(w, d)| *w -= lr * *d);
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{MODEL_MAGIC}")?;
        let dims: Vec<String> = self.layer_dims.iter().map(usize::to_string).collect();
        writeln!(out, "layer_dims {}", dims.join(" "))?;
        writeln!(out, "dropout {}", self.dropout_rate)?;
        writeln!(out, "seed {}", self.seed)?;
        writeln!(out, "activation {}", self.activation)?;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            write!(out, "W{l}")?;
            for x in w {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
            write!(out, "b{l}")?;
            for x in b {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .transpose()
                .map_err(|e| Error::Model(e.to_string()))?
                .ok_or_else(|| Error::Model("truncated model file".into()))
        };
        if next()? != MODEL_MAGIC {
            return Err(Error::Model("not a model file".into()));
        }
        let field = |line: String, name: &str| -> Result<String> {
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::Model(format!("expected {name} line, got {line:?}")))
        };
        let bad = |what: &str| Error::Model(format!("unparseable {what}"));
        let layer_dims = field(next()?, "layer_dims")?
            .split_whitespace()
            .map(|d| d.parse::<usize>().map_err(|_| bad("layer_dims")))
            .collect::<Result<Vec<_>>>()?;
        check_dims(&layer_dims)?;
        let dropout_rate: f64 = field(next()?, "dropout")?.parse().map_err(|_| bad("dropout"))?;
        let seed: u64 = field(next()?, "seed")?.parse().map_err(|_| bad("seed"))?;
        let activation: Activation = field(next()?, "activation")?.parse()?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, w) in layer_dims.windows(2).enumerate() {
            let parse_vec = |s: String, len: usize| -> Result<Vec<T>> {
                let v = s
                    .split_whitespace()
                    .map(|x| x.parse::<T>().map_err(|_| bad("parameter")))
                    .collect::<Result<Vec<T>>>()?;
                if v.len() != len {
                    return Err(Error::Model(format!("layer {l}: expected {len} values, got {}", v.len())));
                }
                Ok(v)
            };
            weights.push(parse_vec(field(next()?, &format!("W{l}"))?, w[0] * w[1])?);
            biases.push(parse_vec(field(next()?, &format!("b{l}"))?, w[1])?);
        }
        let m = MlpModel {
            layer_dims,
            weights,
            biases,
            dropout_rate,
            seed,
            activation,
        };
        if !m.is_finite() {
            return Err(Error::Model("non-finite parameters".into()));
        }
        Ok(m)
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

const MODEL_MAGIC: &str = "AP-MLP v1";

/// `-[y ln p + (1 - y) ln(1 - p)]` with `p` clamped away from 0 and 1.
pub fn logistic_loss<T: Scalar>(p: T, y: T) -> T {
    let eps = T::lit(P_MIN);
    let p = p.max(eps).min(T::one() - eps);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

/// Largest relative difference between backprop gradients and central
/// differences `(L(θ+ε) − L(θ−ε)) / 2ε`, over every parameter, for one row
/// in evaluation mode.
pub fn gradient_check<T: Scalar>(model: &MlpModel<T>, x: &[T], y: T, epsilon: T) -> Result<T> {
    let rows = [LabeledRow { x: x.to_vec(), y }];
    let (_, grads) = model.loss_and_grads(&rows, None)?;
    let mut probe = model.clone();
    let mut worst = T::zero();
    let floor = T::lit(1e-12);
    let two_eps = epsilon + epsilon;
    for kind in 0..2 {
        for l in 0..model.weights.len() {
            let len = if kind == 0 { model.weights[l].len() } else { model.biases[l].len() };
            for i in 0..len {
                let original = *probe.param_mut(kind, l, i);
                *probe.param_mut(kind, l, i) = original + epsilon;
                let up = probe.loss(&rows)?;
                *probe.param_mut(kind, l, i) = original - epsilon;
                let down = probe.loss(&rows)?;
                *probe.param_mut(kind, l, i) = original;
                let numeric = (up - down) / two_eps;
                let analytic = if kind == 0 { grads.weights[l][i] } else { grads.biases[l][i] };
                let denom = analytic.abs().max(numeric.abs()).max(floor);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub negatives: usize,
    pub seed: u64,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 256,
            layers: 3,
            dropout: 0.5,
            lr: 0.01,
            epochs: 10,
            batch: 32,
            negatives: 3,
            seed: 0,
            activation: Activation::Relu,
        }
    }
}

impl TrainConfig {
    pub fn layer_dims(&self, input: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(self.hidden, self.layers));
        dims.push(1);
        dims
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Runs seeded minibatch SGD from a freshly initialised model.
pub fn fit<T: Scalar>(batch: &TripletBatch<T>, config: &TrainConfig) -> Result<(MlpModel<T>, Vec<EpochLog>)> {
    let rows = &batch.rows;
    let Some(first) = rows.first() else {
        return Err(Error::NoTrainableRows);
    };
    let input = first.x.len();
    if let Some(bad) = rows.iter().find(|r| r.x.len() != input) {
        return Err(Error::DimensionMismatch {
            expected: input,
            actual: bad.x.len(),
        });
    }
    if config.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut model = MlpModel::new(config.layer_dims(input), config.dropout, config.seed, config.activation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let lr = T::lit(config.lr);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch) {
            let mb: Vec<LabeledRow<T>> = chunk.iter().map(|&i| rows[i].clone()).collect();
            let (loss, grads) = model.loss_and_grads(&mb, Some(&mut rng))?;
            model.apply_gradients(&grads, lr);
            total += loss.as_f64() * chunk.len() as f64;
        }
        if !model.is_finite() {
            return Err(Error::Model(format!("parameters diverged in epoch {}", epoch + 1)));
        }
        log.push(EpochLog {
            epoch: epoch + 1,
            mean_loss: total / rows.len() as f64,
        });
    }
    Ok((model, log))
}

/// `[sentence(question) ∥ image features ∥ sentence(answer)]`.
pub fn featurize_triplet<T: Scalar>(
    question: &str,
    answer: &str,
    image_id: &str,
    emb: &EmbeddingTable<T>,
    feats: &FeatureTable<T>,
) -> Result<Vec<T>> {
    let image = feats.feature(image_id)?;
    let q = sentence_vector(question, emb);
    let a = sentence_vector(answer, emb);
    let mut x = Vec::with_capacity(q.values.len() + image.len() + a.values.len());
    x.extend(q.values);
    x.extend_from_slice(image);
    x.extend(a.values);
    Ok(x)
}

/// One positive (majority answer) per train instance plus up to `negatives`
/// top-ranked candidates that match none of its gold answers.
pub fn build_training_rows<T: Scalar>(
    corpus: &Corpus,
    candidates: &BTreeMap<String, ProposalList>,
    emb: &EmbeddingTable<T>,
    feats: &FeatureTable<T>,
    negatives: usize,
) -> Result<TripletBatch<T>> {
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for inst in corpus.split(Split::Train) {
        let Some(list) = candidates.get(&inst.qid) else {
            missing.push(inst.qid.clone());
            continue;
        };
        let gold: HashSet<String> = inst.normalized_answers().into_iter().collect();
        let majority = inst.majority_answer();
        rows.push(LabeledRow {
            x: featurize_triplet(&inst.question, &majority, &inst.image_id, emb, feats)?,
            y: T::one(),
        });
        for cand in list.answers().filter(|a| !gold.contains(*a)).take(negatives) {
            rows.push(LabeledRow {
                x: featurize_triplet(&inst.question, cand, &inst.image_id, emb, feats)?,
                y: T::zero(),
            });
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingResource(format!(
            "no candidate list for {} train questions (first {:?})",
            missing.len(),
            missing[0]
        )));
    }
    if rows.is_empty() {
        return Err(Error::NoTrainableRows);
    }
    Ok(TripletBatch { rows })
}

/// Highest-probability candidate; ties go to the better-ranked one.
pub fn predict_answer<T: Scalar>(
    model: &MlpModel<T>,
    question: &str,
    image_id: &str,
    candidates: &ProposalList,
    emb: &EmbeddingTable<T>,
    feats: &FeatureTable<T>,
) -> Result<(String, T)> {
    let mut best: Option<(&str, T)> = None;
    for answer in candidates.answers() {
        let p = model.forward(&featurize_triplet(question, answer, image_id, emb, feats)?)?;
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((answer, p));
        }
    }
    best.map(|(a, p)| (a.to_string(), p)).ok_or(Error::NoCandidates)
}

/// The rank-1 answer.
pub fn answer_toprank(candidates: &ProposalList) -> Result<String> {
    candidates
        .head()
        .map(|p| p.answer.clone())
        .ok_or(Error::NoCandidates)
}
