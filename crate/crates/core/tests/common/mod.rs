//! Random small models and a central finite-difference oracle shared by the
//! integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ssmlab::ssm::{
    Activation, Dense, DiagonalLayer, Gate, Head, InputEncoding, InputSequence, Mode, Phase, StackModel,
    Transition,
};
use ssmlab::train::{Example, LossKind, SequenceModel, Target};

pub fn finite_difference(model: &SequenceModel, batch: &[Example], loss: LossKind) -> Vec<f64> {
    let p0 = model.params();
    (0..p0.len())
        .map(|i| {
            let h = 1e-6 * p0[i].abs().max(1.0);
            let mut m = model.clone();
            let mut p = p0.clone();
            p[i] = p0[i] + h;
            m.set_params(&p);
            let up = m.loss(batch, loss).unwrap();
            p[i] = p0[i] - h;
            m.set_params(&p);
            let down = m.loss(batch, loss).unwrap();
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn assert_gradients_match(model: &SequenceModel, batch: &[Example], loss: LossKind) {
    let (_, analytic) = model.loss_and_grad(batch, loss).unwrap();
    let numeric = finite_difference(model, batch, loss);
    assert_eq!(analytic.len(), numeric.len());
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let tol = 1e-6 * (1.0 + n.abs().max(a.abs()));
        assert!((a - n).abs() < tol, "param {i}: analytic {a} vs numeric {n}");
    }
}

pub fn g(rng: &mut ChaCha8Rng, s: f64) -> f64 {
    rng.gen_range(-s..s)
}

pub fn time_invariant(d_in: usize, n: usize, d_out: usize, rng: &mut ChaCha8Rng) -> DiagonalLayer {
    DiagonalLayer {
        transition: Transition::TimeInvariant {
            modes: (0..n)
                .map(|_| Mode::new(rng.gen_range(0.3..0.95), Phase::Turns(rng.gen_range(0.0..1.0))))
                .collect(),
            input: Dense::from_fn(n, d_in, |_, _| Complex64::new(g(rng, 1.0), g(rng, 1.0))),
        },
        readout: Dense::from_fn(d_out, n, |_, _| Complex64::new(g(rng, 1.0), g(rng, 1.0))),
        feedthrough: Dense::from_fn(d_out, d_in, |_, _| g(rng, 1.0)),
        initial_state: (0..n).map(|_| Complex64::new(g(rng, 0.5), g(rng, 0.5))).collect(),
        activation: Activation::Tanh,
        skip: false,
        gate: None,
    }
}

pub fn selective(d_in: usize, n: usize, d_out: usize, rng: &mut ChaCha8Rng) -> DiagonalLayer {
    DiagonalLayer {
        transition: Transition::NonNegative {
            dt_weight: Dense::from_fn(n, d_in, |_, _| g(rng, 1.0)),
            dt_bias: (0..n).map(|_| g(rng, 1.0)).collect(),
            log_alpha: (0..n).map(|_| g(rng, 1.0)).collect(),
            input: Dense::from_fn(n, d_in, |_, _| g(rng, 1.0)),
        },
        readout: Dense::from_fn(d_out, n, |_, _| Complex64::new(g(rng, 1.0), 0.0)),
        feedthrough: Dense::from_fn(d_out, d_in, |_, _| g(rng, 1.0)),
        initial_state: (0..n).map(|_| Complex64::new(g(rng, 0.5), 0.0)).collect(),
        activation: Activation::Tanh,
        skip: false,
        gate: None,
    }
}

pub fn signed(d_in: usize, n: usize, d_out: usize, rng: &mut ChaCha8Rng) -> DiagonalLayer {
    // Small weights keep |a| strictly inside the clamp.
    DiagonalLayer {
        transition: Transition::Signed {
            weight: Dense::from_fn(n, d_in, |_, _| g(rng, 0.2)),
            bias: (0..n).map(|_| g(rng, 0.4)).collect(),
            input: Dense::from_fn(n, d_in, |_, _| g(rng, 1.0)),
            input_bias: (0..n).map(|_| g(rng, 1.0)).collect(),
        },
        readout: Dense::from_fn(d_out, n, |_, _| Complex64::new(g(rng, 1.0), 0.0)),
        feedthrough: Dense::from_fn(d_out, d_in, |_, _| g(rng, 1.0)),
        initial_state: (0..n).map(|_| Complex64::new(g(rng, 0.5), 0.0)).collect(),
        activation: Activation::Identity,
        skip: false,
        gate: None,
    }
}

pub fn gate(d_y: usize, width: usize, residual: bool, rng: &mut ChaCha8Rng) -> Gate {
    Gate {
        value: Dense::from_fn(width, d_y, |_, _| g(rng, 1.0)),
        value_bias: (0..width).map(|_| g(rng, 0.5)).collect(),
        gate: Dense::from_fn(width, d_y, |_, _| g(rng, 1.0)),
        gate_bias: (0..width).map(|_| g(rng, 0.5)).collect(),
        residual,
    }
}

pub fn stack(layers: Vec<DiagonalLayer>, outputs: usize, rng: &mut ChaCha8Rng) -> SequenceModel {
    let d0 = layers[0].input_width();
    let last = layers.last().unwrap().output_width();
    let encoding = InputEncoding::Embedding(Dense::from_fn(2, d0, |_, _| g(rng, 0.7)));
    let head = Head::new(
        Dense::from_fn(outputs, last, |_, _| g(rng, 1.0)),
        (0..outputs).map(|_| g(rng, 0.5)).collect(),
    )
    .unwrap();
    SequenceModel::Stack(StackModel::new(encoding, layers, head).unwrap())
}

pub fn class_batch(rng: &mut ChaCha8Rng) -> Vec<Example> {
    (0..3)
        .map(|i| {
            let xs: InputSequence = (0..5 + i).map(|_| rng.gen_range(0..2u8) as f64).collect();
            Example {
                target: Target::Class(rng.gen_range(0..2u8)),
                input: xs,
            }
        })
        .collect()
}

pub fn step_batch(rng: &mut ChaCha8Rng) -> Vec<Example> {
    (0..2)
        .map(|_| {
            let xs: InputSequence = (0..6).map(|_| rng.gen_range(0..2u8) as f64).collect();
            let targets = (0..6).map(|_| rng.gen_range(0..2u8) as f64).collect();
            Example {
                input: xs,
                target: Target::Steps(targets),
            }
        })
        .collect()
}


/// Largest `|a - n| / max(|a|, |n|, 1e-4)` between analytic and numeric
/// gradients. The floor keeps finite-difference round-off on vanishing
/// components from reading as a large relative error.
pub fn max_relative_error(model: &SequenceModel, batch: &[Example], loss: LossKind) -> f64 {
    let (_, analytic) = model.loss_and_grad(batch, loss).unwrap();
    let numeric = finite_difference(model, batch, loss);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}
