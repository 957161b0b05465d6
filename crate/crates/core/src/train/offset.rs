//! Offset prediction: next-token regression on stimulus on/off signals.

use serde::Serialize;

use super::{train, Example, LossKind, ModelKind, ModelSpecRow, Optimizer, Schedule, SequenceModel, Target, TrainConfig, TrainedModel};
use crate::constructions::{gen_offset_sequence, OffsetTaskSpec};
use crate::error::{Error, Result};
use crate::ssm::InputSequence;

/// One recurrent block of width 8 with 8 states.
pub fn offset_model_spec(kind: ModelKind) -> ModelSpecRow {
    ModelSpecRow {
        kind,
        num_layers: 1,
        embedding_size: 8,
        state_size: 8,
    }
}

/// 1000 epochs of Adam on squared error; lr 5e-3 for time-invariant layers,
/// 1e-2 otherwise.
pub fn offset_config(kind: ModelKind, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: if kind == ModelKind::S4d { 5e-3 } else { 1e-2 },
        epochs: 1000,
        batch_size: 16,
        optimizer: Optimizer::Adam,
        seed,
        loss: LossKind::StepSquaredError,
        clip_norm: Some(1.0),
        schedule: Schedule::Constant,
    }
}

pub fn gen_offset_dataset(task: &OffsetTaskSpec, count: usize, seed: u64) -> Result<Vec<Example>> {
    (0..count as u64)
        .map(|i| {
            let (input, targets) = gen_offset_sequence(task, seed.wrapping_mul(1_000_003).wrapping_add(i))?;
            Ok(Example {
                input,
                target: Target::Steps(targets),
            })
        })
        .collect()
}

/// Scored steps with their targets: the last 1 of every complete stimulus
/// (next token 0) and the step before it (next token 1). A constant predictor
/// scores 50% on these.
pub fn offset_positions(xs: &InputSequence) -> Vec<(usize, f64)> {
    let t = xs.tokens();
    let mut out = Vec::new();
    for i in 1..t.len().saturating_sub(1) {
        if t[i - 1] == 1.0 && t[i] == 1.0 && t[i + 1] == 0.0 {
            out.push((i - 1, 1.0));
            out.push((i, 0.0));
        }
    }
    out
}

/// Thresholded (at 0.5) accuracy over [`offset_positions`] of every example.
pub fn offset_accuracy(model: &SequenceModel, data: &[Example]) -> Result<f64> {
    let (mut correct, mut total) = (0usize, 0usize);
    for ex in data {
        let outputs = model.step_logits(&ex.input)?;
        for (t, target) in offset_positions(&ex.input) {
            total += 1;
            correct += usize::from((outputs[t][0] > 0.5) == (target > 0.5));
        }
    }
    if total == 0 {
        return Err(Error::InvalidParameter("no complete stimulus to score".into()));
    }
    Ok(correct as f64 / total as f64)
}

/// Trains on `train_count` fresh task sequences.
pub fn train_offset(
    spec: &ModelSpecRow,
    task: &OffsetTaskSpec,
    cfg: &TrainConfig,
    train_count: usize,
) -> Result<TrainedModel> {
    if cfg.loss != LossKind::StepSquaredError {
        return Err(Error::InvalidParameter("offset training uses squared error".into()));
    }
    let data = gen_offset_dataset(task, train_count, cfg.seed)?;
    train(spec, &data, cfg)
}

pub const OFFSET_TRAIN_COUNT: usize = 64;
pub const OFFSET_TEST_COUNT: usize = 128;

#[derive(Clone, Debug)]
pub struct OffsetRun {
    pub kind: ModelKind,
    pub seed: u64,
    pub train_accuracy: f64,
    /// Offset-position accuracy on held-out sequences.
    pub accuracy: f64,
    pub config: TrainConfig,
    pub trained: TrainedModel,
}

/// Trains the offset model for `kind` and scores it on [`OFFSET_TEST_COUNT`]
/// sequences drawn from a disjoint seed. [`offset_config`] gives the defaults.
pub fn offset_run(kind: ModelKind, config: &TrainConfig, task: &OffsetTaskSpec) -> Result<OffsetRun> {
    let seed = config.seed;
    let trained = train_offset(&offset_model_spec(kind), task, config, OFFSET_TRAIN_COUNT)?;
    let train_data = gen_offset_dataset(task, OFFSET_TRAIN_COUNT, seed)?;
    let test = gen_offset_dataset(task, OFFSET_TEST_COUNT, seed.wrapping_add(1 << 32))?;
    Ok(OffsetRun {
        kind,
        seed,
        train_accuracy: offset_accuracy(&trained.model, &train_data)?,
        accuracy: offset_accuracy(&trained.model, &test)?,
        config: config.clone(),
        trained,
    })
}

fn burst(xs: &mut Vec<f64>, v: f64, n: usize) {
    xs.extend(std::iter::repeat(v).take(n));
}

fn pad_to(mut xs: Vec<f64>, len: usize) -> Result<InputSequence> {
    if xs.len() > len {
        return Err(Error::InvalidParameter(format!(
            "scenario needs {} steps but the task has {len}",
            xs.len()
        )));
    }
    let rest = len - xs.len();
    burst(&mut xs, 0.0, rest);
    Ok(InputSequence::new(xs))
}

/// Shortest ITI, a stimulus, a gap of `gap` zeros (longer than any trained
/// ITI), a second stimulus, then zeros up to the task length.
pub fn scenario_two_isi(task: &OffsetTaskSpec, gap: usize) -> Result<InputSequence> {
    if gap <= task.iti_max {
        return Err(Error::InvalidParameter(format!(
            "gap {gap} must exceed the longest trained ITI {}",
            task.iti_max
        )));
    }
    let mut xs = Vec::new();
    burst(&mut xs, 0.0, task.iti_min);
    burst(&mut xs, 1.0, task.isi_len);
    burst(&mut xs, 0.0, gap);
    burst(&mut xs, 1.0, task.isi_len);
    pad_to(xs, task.seq_len)
}

/// Shortest ITI, then two stimuli back to back, then zeros.
pub fn scenario_double_isi(task: &OffsetTaskSpec) -> Result<InputSequence> {
    let mut xs = Vec::new();
    burst(&mut xs, 0.0, task.iti_min);
    burst(&mut xs, 1.0, 2 * task.isi_len);
    pad_to(xs, task.seq_len)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub input: f64,
    pub target: f64,
    pub output: f64,
}

/// Raw per-step model output on `xs` with next-token targets.
pub fn trace(model: &SequenceModel, xs: &InputSequence) -> Result<Vec<TraceRow>> {
    let outputs = model.step_logits(xs)?;
    let targets = crate::constructions::next_token_targets(xs);
    Ok(outputs
        .iter()
        .enumerate()
        .map(|(t, o)| TraceRow {
            step: t,
            input: xs.tokens()[t],
            target: targets[t],
            output: o[0],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runs(xs: &InputSequence) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &x in xs.tokens() {
            match out.last_mut() {
                Some((v, n)) if *v == x => *n += 1,
                _ => out.push((x, 1)),
            }
        }
        out
    }

    #[test]
    fn two_isi_layout() {
        let task = OffsetTaskSpec::default();
        let xs = scenario_two_isi(&task, 60).unwrap();
        assert_eq!(xs.len(), task.seq_len);
        let bursts: Vec<usize> = runs(&xs).into_iter().filter(|r| r.0 == 1.0).map(|r| r.1).collect();
        assert_eq!(bursts, vec![10, 10]);
        assert!(scenario_two_isi(&task, 30).is_err());
        assert!(scenario_two_isi(&task, 500).is_err());
    }

    #[test]
    fn double_isi_layout() {
        let task = OffsetTaskSpec::default();
        let xs = scenario_double_isi(&task).unwrap();
        assert_eq!(xs.len(), task.seq_len);
        let bursts: Vec<usize> = runs(&xs).into_iter().filter(|r| r.0 == 1.0).map(|r| r.1).collect();
        assert_eq!(bursts, vec![20]);
    }

    #[test]
    fn scored_positions_are_balanced() {
        let xs = InputSequence::from_bits("0011100110").unwrap();
        assert_eq!(offset_positions(&xs), vec![(3, 1.0), (4, 0.0), (7, 1.0), (8, 0.0)]);
        // A stimulus cut off by the end of the sequence is not scored.
        assert!(offset_positions(&InputSequence::from_bits("00111").unwrap()).is_empty());
    }

    #[test]
    fn untrained_model_is_near_chance() {
        use rand::SeedableRng;
        let task = OffsetTaskSpec::default();
        let data = gen_offset_dataset(&task, 32, 9).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let model = offset_model_spec(ModelKind::S4d).build(1, &mut rng).unwrap();
        let acc = offset_accuracy(&model, &data).unwrap();
        assert!((0.3..=0.7).contains(&acc), "accuracy {acc}");
    }
}
