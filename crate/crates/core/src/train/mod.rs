//! Desk-scale gradient training on parity and offset prediction.
//!
//! Recurrent layers are differentiated with hand-written adjoint recursions
//! ([`backprop`]) and the nonlinear baseline with plain BPTT ([`rnn`]).

pub mod backprop;
pub mod offset;
pub mod rnn;

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::inputs::parity_label;
use crate::ssm::{
    argmax, Activation, Dense, DiagonalLayer, Gate, Head, InputEncoding, InputSequence, Mode, Phase,
    RationalPhase, StackModel, Transition,
};
use rnn::ElmanRnn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Optimizer {
    SgdMomentum { momentum_milli: u32 },
    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Cross-entropy on the final step's two-class head.
    FinalCrossEntropy,
    /// Mean cross-entropy over every step against per-step classes.
    StepCrossEntropy,
    /// Mean squared error of the head's first output at every step.
    StepSquaredError,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub loss: LossKind,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub schedule: Schedule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Schedule {
    #[default]
    Constant,
    /// Cosine decay from the base rate to zero over all epochs.
    Cosine,
}

impl Schedule {
    fn factor(&self, epoch: usize, epochs: usize) -> f64 {
        match self {
            Schedule::Constant => 1.0,
            Schedule::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs as f64).cos()),
        }
    }
}

impl TrainConfig {
    /// Parity recipe for `kind`: Adam on every-prefix cross-entropy, batch 64.
    /// RNN: lr 2e-2 for 1500 epochs; SSM stacks: lr 3e-3 for 150 epochs.
    pub fn parity(kind: ModelKind, seed: u64) -> Self {
        let (learning_rate, epochs) = match kind {
            ModelKind::Rnn => (2e-2, 1500),
            _ => (3e-3, 150),
        };
        Self {
            learning_rate,
            epochs,
            batch_size: 64,
            optimizer: Optimizer::Adam,
            seed,
            loss: LossKind::StepCrossEntropy,
            clip_norm: Some(1.0),
            schedule: Schedule::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        Ok(())
    }

    fn hash_into(&self, h: &mut impl Hasher) {
        self.learning_rate.to_bits().hash(h);
        self.epochs.hash(h);
        self.batch_size.hash(h);
        self.optimizer.hash(h);
        self.seed.hash(h);
        self.loss.hash(h);
        self.clip_norm.map(f64::to_bits).hash(h);
        self.schedule.hash(h);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Rnn,
    S4d,
    Mamba,
    /// Alternating selective and time-invariant layers, selective first.
    MambaS4d,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Rnn, ModelKind::S4d, ModelKind::Mamba, ModelKind::MambaS4d];
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Rnn => "RNN",
            ModelKind::S4d => "S4D",
            ModelKind::Mamba => "Mamba",
            ModelKind::MambaS4d => "Mamba+S4D",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "rnn" => Ok(ModelKind::Rnn),
            "s4d" => Ok(ModelKind::S4d),
            "mamba" => Ok(ModelKind::Mamba),
            "mamba+s4d" | "hybrid" | "mambas4d" => Ok(ModelKind::MambaS4d),
            _ => Err(Error::InvalidParameter(format!("unknown model kind {s:?}"))),
        }
    }
}

/// Architecture sizes for one model family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelSpecRow {
    pub kind: ModelKind,
    pub num_layers: usize,
    pub embedding_size: usize,
    /// Hidden size for the RNN, state size for the SSMs.
    pub state_size: usize,
}

impl ModelSpecRow {
    /// Parity-task sizes: RNN (1, 2, 8), every SSM (2, 8, 16).
    pub fn parity(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Rnn => Self {
                kind,
                num_layers: 1,
                embedding_size: 2,
                state_size: 8,
            },
            _ => Self {
                kind,
                num_layers: 2,
                embedding_size: 8,
                state_size: 16,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.embedding_size == 0 || self.state_size == 0 {
            return Err(Error::InvalidParameter(format!("degenerate model spec {self:?}")));
        }
        if self.kind == ModelKind::Rnn && self.num_layers != 1 {
            return Err(Error::InvalidParameter("the RNN baseline has one layer".into()));
        }
        Ok(())
    }

    /// Randomly initialised model with `outputs` head units.
    pub fn build(&self, outputs: usize, rng: &mut impl Rng) -> Result<SequenceModel> {
        self.validate()?;
        let d = self.embedding_size;
        let n = self.state_size;
        if self.kind == ModelKind::Rnn {
            return Ok(SequenceModel::Rnn(ElmanRnn::random(d, n, outputs, rng)));
        }
        let layers = (0..self.num_layers)
            .map(|l| {
                let selective = match self.kind {
                    ModelKind::S4d => false,
                    ModelKind::Mamba => true,
                    _ => l % 2 == 0,
                };
                let layer = if selective {
                    init_selective(d, n, d, rng)
                } else {
                    init_time_invariant(d, n, d, rng)
                };
                block(layer, rng)
            })
            .collect::<Result<_>>()?;
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let encoding = InputEncoding::Embedding(Dense::from_fn(2, d, |_, _| normal.sample(rng)));
        let head = Head {
            weight: Dense::from_fn(outputs, d, |_, _| normal.sample(rng) / (d as f64).sqrt()),
            bias: vec![0.0; outputs],
        };
        Ok(SequenceModel::Stack(StackModel::new(encoding, layers, head)?))
    }
}

fn gaussian(rng: &mut impl Rng, std: f64) -> f64 {
    Normal::new(0.0, std).expect("valid normal").sample(rng)
}

/// S4D-style layer: magnitudes in `[0.5, 0.99]`, phases in `[0, 0.5)` turns.
pub fn init_time_invariant(d_in: usize, n: usize, d_out: usize, rng: &mut impl Rng) -> DiagonalLayer {
    let modes = (0..n)
        .map(|_| Mode::new(rng.gen_range(0.5..0.99), Phase::Turns(rng.gen_range(0.0..0.5))))
        .collect();
    let sb = (0.5 / d_in as f64).sqrt();
    let sc = (0.5 / n as f64).sqrt();
    let input = Dense::from_fn(n, d_in, |_, _| Complex64::new(gaussian(rng, sb), gaussian(rng, sb)));
    let readout = Dense::from_fn(d_out, n, |_, _| Complex64::new(gaussian(rng, sc), gaussian(rng, sc)));
    let feedthrough = Dense::from_fn(d_out, d_in, |_, _| gaussian(rng, (1.0 / d_in as f64).sqrt()));
    DiagonalLayer {
        transition: Transition::TimeInvariant { modes, input },
        readout,
        feedthrough,
        initial_state: vec![Complex64::default(); n],
        activation: Activation::Tanh,
        skip: false,
        gate: None,
    }
}

/// Residual gated unit of width `d_in` over a `d_y`-wide readout.
pub fn init_gate(d_y: usize, d_in: usize, rng: &mut impl Rng) -> Gate {
    let s = (1.0 / d_y as f64).sqrt();
    Gate {
        value: Dense::from_fn(d_in, d_y, |_, _| gaussian(rng, s)),
        value_bias: vec![0.0; d_in],
        gate: Dense::from_fn(d_in, d_y, |_, _| gaussian(rng, s)),
        gate_bias: vec![0.0; d_in],
        residual: true,
    }
}

/// Turns a bare recurrence layer into a trainable block: linear readout
/// followed by a residual gated unit.
pub fn block(mut layer: DiagonalLayer, rng: &mut impl Rng) -> Result<DiagonalLayer> {
    layer.activation = Activation::Identity;
    let gate = init_gate(layer.readout.rows(), layer.input_width(), rng);
    layer.with_gate(gate)
}

fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// Mamba-style layer: step sizes log-uniform in `[0.01, 1]`, decay rates `1..=N`.
pub fn init_selective(d_in: usize, n: usize, d_out: usize, rng: &mut impl Rng) -> DiagonalLayer {
    let sw = (1.0 / d_in as f64).sqrt();
    let dt_bias = (0..n)
        .map(|_| inverse_softplus(rng.gen_range(0.01f64.ln()..0.0).exp()))
        .collect();
    let log_alpha = (0..n).map(|j| ((j + 1) as f64).ln()).collect();
    DiagonalLayer {
        transition: Transition::NonNegative {
            dt_weight: Dense::from_fn(n, d_in, |_, _| gaussian(rng, sw)),
            dt_bias,
            log_alpha,
            input: Dense::from_fn(n, d_in, |_, _| gaussian(rng, sw)),
        },
        readout: Dense::from_fn(d_out, n, |_, _| {
            Complex64::new(gaussian(rng, (1.0 / n as f64).sqrt()), 0.0)
        }),
        feedthrough: Dense::from_fn(d_out, d_in, |_, _| gaussian(rng, sw)),
        initial_state: vec![Complex64::default(); n],
        activation: Activation::Tanh,
        skip: false,
        gate: None,
    }
}

/// A trainable sequence classifier/regressor.
#[derive(Clone, Debug, PartialEq)]
pub enum SequenceModel {
    Stack(StackModel),
    Rnn(ElmanRnn),
}

/// Supervision for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Class(u8),
    /// One class per step; the last one is the sequence label.
    Classes(Vec<u8>),
    Steps(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: InputSequence,
    pub target: Target,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Loss value and head-output gradients for one example.
fn loss_terms(logits: &[Vec<f64>], target: &Target, loss: LossKind) -> Result<(f64, Vec<Vec<f64>>)> {
    let t_len = logits.len();
    let mut dl = vec![Vec::new(); t_len];
    match (loss, target) {
        (LossKind::FinalCrossEntropy, Target::Class(c)) => {
            let Some(last) = logits.last() else {
                return Ok((0.0, dl));
            };
            let p = softmax(last);
            let c = *c as usize;
            let mut g = p.clone();
            g[c] -= 1.0;
            dl[t_len - 1] = g;
            Ok((-(p[c].max(1e-300)).ln(), dl))
        }
        (LossKind::StepCrossEntropy, Target::Classes(classes)) => {
            crate::error::check_dim("step classes", t_len, classes.len())?;
            let scale = 1.0 / t_len.max(1) as f64;
            let mut total = 0.0;
            for t in 0..t_len {
                let p = softmax(&logits[t]);
                let c = classes[t] as usize;
                total -= p[c].max(1e-300).ln() * scale;
                let mut g: Vec<f64> = p.iter().map(|v| v * scale).collect();
                g[c] -= scale;
                dl[t] = g;
            }
            Ok((total, dl))
        }
        (LossKind::StepSquaredError, Target::Steps(targets)) => {
            crate::error::check_dim("step targets", t_len, targets.len())?;
            let scale = 1.0 / t_len.max(1) as f64;
            let mut total = 0.0;
            for t in 0..t_len {
                let e = logits[t][0] - targets[t];
                total += e * e * scale;
                let mut g = vec![0.0; logits[t].len()];
                g[0] = 2.0 * e * scale;
                dl[t] = g;
            }
            Ok((total, dl))
        }
        _ => Err(Error::InvalidParameter("loss kind does not match the target".into())),
    }
}

impl SequenceModel {
    pub fn params(&self) -> Vec<f64> {
        match self {
            SequenceModel::Stack(m) => backprop::flat_params(m),
            SequenceModel::Rnn(r) => r.flat_params(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        match self {
            SequenceModel::Stack(m) => backprop::set_flat_params(m, p),
            SequenceModel::Rnn(r) => r.set_flat_params(p),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().len()
    }

    /// Restores parameter constraints after an unconstrained update.
    pub fn project(&mut self) {
        if let SequenceModel::Stack(m) = self {
            backprop::project(m);
        }
    }

    pub fn final_logits(&self, xs: &InputSequence) -> Result<Vec<f64>> {
        match self {
            SequenceModel::Stack(m) => m.final_logits(xs),
            SequenceModel::Rnn(r) => r.final_logits(xs),
        }
    }

    pub fn step_logits(&self, xs: &InputSequence) -> Result<Vec<Vec<f64>>> {
        match self {
            SequenceModel::Stack(m) => Ok(m.forward(xs)?.logits),
            SequenceModel::Rnn(r) => r.step_logits(xs),
        }
    }

    pub fn classify(&self, xs: &InputSequence) -> Result<usize> {
        Ok(argmax(&self.final_logits(xs)?))
    }

    /// Mean loss over `batch` and its gradient in [`Self::params`] order.
    pub fn loss_and_grad(&self, batch: &[Example], loss: LossKind) -> Result<(f64, Vec<f64>)> {
        let mut total = 0.0;
        let grad = match self {
            SequenceModel::Stack(m) => {
                let mut g = backprop::zeros_like(m);
                for ex in batch {
                    let (cache, logits) = backprop::forward_cached(m, &ex.input)?;
                    let (l, dl) = loss_terms(&logits, &ex.target, loss)?;
                    total += l;
                    backprop::backward(m, &cache, &dl, &mut g);
                }
                backprop::flat_grad(&g)
            }
            SequenceModel::Rnn(r) => {
                let mut g = r.zeros_like();
                for ex in batch {
                    let mut err = None;
                    r.backprop(
                        &ex.input,
                        |logits| match loss_terms(logits, &ex.target, loss) {
                            Ok((l, dl)) => {
                                total += l;
                                dl
                            }
                            Err(e) => {
                                err = Some(e);
                                Vec::new()
                            }
                        },
                        &mut g,
                    )?;
                    if let Some(e) = err {
                        return Err(e);
                    }
                }
                g.flat_params()
            }
        };
        let scale = 1.0 / batch.len().max(1) as f64;
        Ok((total * scale, grad.into_iter().map(|g| g * scale).collect()))
    }

    /// Mean loss only.
    pub fn loss(&self, batch: &[Example], loss: LossKind) -> Result<f64> {
        let mut total = 0.0;
        for ex in batch {
            let logits = self.step_logits(&ex.input)?;
            total += loss_terms(&logits, &ex.target, loss)?.0;
        }
        Ok(total / batch.len().max(1) as f64)
    }
}

/// Adam or SGD with momentum over a flat parameter vector.
struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        Self {
            kind,
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        match self.kind {
            Optimizer::Adam => {
                let (b1, b2, eps) = (0.9, 0.999, 1e-8);
                let c1 = 1.0 - b1f(b1, self.t);
                let c2 = 1.0 - b1f(b2, self.t);
                for i in 0..params.len() {
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
                    params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
                }
            }
            Optimizer::SgdMomentum { momentum_milli } => {
                let mu = momentum_milli as f64 / 1000.0;
                for i in 0..params.len() {
                    self.m[i] = mu * self.m[i] + grad[i];
                    params[i] -= self.lr * self.m[i];
                }
            }
        }
    }
}

fn b1f(beta: f64, t: i32) -> f64 {
    beta.powi(t)
}

/// A fitted model with its loss curve.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpecRow,
    pub model: SequenceModel,
    /// Mean training loss per epoch.
    pub curve: Vec<f64>,
    pub config_hash: u64,
}

/// Uniform random binary strings labelled with their parity.
pub fn gen_parity_dataset(length: usize, count: usize, seed: u64) -> Result<Vec<Example>> {
    if length == 0 {
        return Err(Error::InvalidParameter("parity strings need length >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let xs: InputSequence = (0..length).map(|_| rng.gen_range(0..2u8) as f64).collect();
            let label = parity_label(&xs)?;
            Ok(Example {
                input: xs,
                target: Target::Class(label),
            })
        })
        .collect()
}

/// Replaces final labels with the parity of every prefix.
pub fn with_prefix_labels(data: &[Example]) -> Result<Vec<Example>> {
    data.iter()
        .map(|ex| {
            let mut acc = 0u8;
            let classes = ex
                .input
                .tokens()
                .iter()
                .map(|&x| {
                    acc ^= crate::ssm::binary_index(x)? as u8;
                    Ok(acc)
                })
                .collect::<Result<Vec<u8>>>()?;
            Ok(Example {
                input: ex.input.clone(),
                target: Target::Classes(classes),
            })
        })
        .collect()
}

/// Minibatch gradient descent on `data` from a freshly initialised `spec` model.
pub fn train(spec: &ModelSpecRow, data: &[Example], cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let outputs = match cfg.loss {
        LossKind::FinalCrossEntropy | LossKind::StepCrossEntropy => 2,
        LossKind::StepSquaredError => 1,
    };
    let model = spec.build(outputs, &mut rng)?;
    train_from(spec, model, data, cfg, &mut rng)
}

pub(crate) fn train_from(
    spec: &ModelSpecRow,
    mut model: SequenceModel,
    data: &[Example],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainedModel> {
    let mut params = model.params();
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, params.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        opt.lr = cfg.learning_rate * cfg.schedule.factor(epoch, cfg.epochs);
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (loss, mut grad) = model.loss_and_grad(&batch, cfg.loss)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, loss });
            }
            if let Some(clip) = cfg.clip_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    grad.iter_mut().for_each(|g| *g *= clip / norm);
                }
            }
            opt.step(&mut params, &grad);
            model.set_params(&params);
            model.project();
            params = model.params();
            epoch_loss += loss * chunk.len() as f64;
        }
        curve.push(epoch_loss / data.len().max(1) as f64);
    }
    let mut h = DefaultHasher::new();
    spec.hash(&mut h);
    cfg.hash_into(&mut h);
    Ok(TrainedModel {
        spec: *spec,
        model,
        curve,
        config_hash: h.finish(),
    })
}

/// Fraction of examples whose final-step class matches the label.
pub fn evaluate(model: &SequenceModel, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Ok(1.0);
    }
    let mut correct = 0usize;
    for ex in data {
        let c = match &ex.target {
            Target::Class(c) => *c,
            Target::Classes(cs) if !cs.is_empty() => cs[cs.len() - 1],
            _ => return Err(Error::InvalidParameter("evaluate expects class targets".into())),
        };
        correct += usize::from(model.classify(&ex.input)? == c as usize);
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Accuracy on fresh random parity data at each length.
pub fn extrapolation_sweep(
    model: &SequenceModel,
    lengths: &[usize],
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    lengths
        .iter()
        .map(|&len| {
            let data = gen_parity_dataset(len, count, seed ^ (len as u64).wrapping_mul(0x9E37_79B9))?;
            Ok((len, evaluate(model, &data)?))
        })
        .collect()
}

/// Train-set size and seed offset shared by the parity experiments.
pub const PARITY_TRAIN_COUNT: usize = 2048;

/// One trained parity model with its accuracies.
#[derive(Clone, Debug)]
pub struct ParityRun {
    pub kind: ModelKind,
    pub seed: u64,
    pub train_len: usize,
    pub train_acc: f64,
    /// `(length, accuracy)` on fresh data per extrapolation length.
    pub evals: Vec<(usize, f64)>,
    pub config: TrainConfig,
    pub trained: TrainedModel,
}

/// Trains `kind` on random length-`train_len` strings with prefix-parity
/// supervision, then scores whole-string parity on the training strings and
/// on `eval_count` fresh strings per length in `eval_lengths`. Data seeds
/// derive from `config.seed`; see [`TrainConfig::parity`] for the defaults.
pub fn parity_run(
    kind: ModelKind,
    config: &TrainConfig,
    train_len: usize,
    eval_lengths: &[usize],
    eval_count: usize,
) -> Result<ParityRun> {
    let seed = config.seed;
    let data = gen_parity_dataset(train_len, PARITY_TRAIN_COUNT, 1000 + seed)?;
    let supervised = with_prefix_labels(&data)?;
    let spec = ModelSpecRow::parity(kind);
    let trained = train(&spec, &supervised, config)?;
    let train_acc = evaluate(&trained.model, &data)?;
    let evals = extrapolation_sweep(&trained.model, eval_lengths, eval_count, 2000 + seed)?;
    Ok(ParityRun {
        kind,
        seed,
        train_len,
        train_acc,
        evals,
        config: config.clone(),
        trained,
    })
}

/// Copy of a trained stack with every phase replaced by the nearest fraction
/// of denominator at most `max_denominator`, ready for collapse certification.
pub fn snap_phases(model: &StackModel, max_denominator: u64) -> StackModel {
    let mut out = model.clone();
    for layer in &mut out.layers {
        if let Transition::TimeInvariant { modes, .. } = &mut layer.transition {
            for m in modes {
                m.phase = Phase::Rational(RationalPhase::snap(m.phase.turns(), max_denominator));
            }
        }
    }
    out
}
