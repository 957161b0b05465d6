//! Random and named models for the collapse certificates.

use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constructions::{modular_counting_model, parity_layer_signed};
use crate::error::{Error, Result};
use crate::ssm::{
    Activation, Dense, DiagonalLayer, Head, InputEncoding, Mode, Phase, RationalPhase, StackModel, Transition,
};

fn normal(rng: &mut impl Rng, scale: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    scale * z
}

fn sign_head(width: usize, rng: &mut impl Rng) -> Result<Head> {
    let s = 1.0 / (width as f64).sqrt();
    Head::new(
        Dense::from_fn(2, width, |_, _| normal(rng, s)),
        (0..2).map(|_| normal(rng, 0.1)).collect(),
    )
}

fn random_non_negative(d_in: usize, n: usize, d_out: usize, skip: bool, rng: &mut impl Rng) -> Result<DiagonalLayer> {
    let s_in = 1.0 / (d_in as f64).sqrt();
    let s_n = 1.0 / (n as f64).sqrt();
    DiagonalLayer::new(
        Transition::NonNegative {
            dt_weight: Dense::from_fn(n, d_in, |_, _| normal(rng, s_in)),
            dt_bias: (0..n).map(|_| rng.gen_range(-3.0..1.0)).collect(),
            log_alpha: (0..n).map(|_| rng.gen_range(-1.0..1.5)).collect(),
            input: Dense::from_fn(n, d_in, |_, _| normal(rng, 1.0)),
        },
        Dense::from_fn(d_out, n, |_, _| Complex64::new(normal(rng, s_n), 0.0)),
        Dense::from_fn(d_out, d_in, |_, _| normal(rng, s_in)),
        (0..n).map(|_| Complex64::new(normal(rng, 1.0), 0.0)).collect(),
        Activation::Tanh,
        skip,
    )
}

fn random_time_invariant(
    d_in: usize,
    n: usize,
    d_out: usize,
    max_den: u64,
    skip: bool,
    rng: &mut impl Rng,
) -> Result<DiagonalLayer> {
    let s_n = 1.0 / (n as f64).sqrt();
    let modes = (0..n)
        .map(|_| {
            let den = rng.gen_range(1..=max_den);
            let phase = RationalPhase::new(rng.gen_range(0..den), den)?;
            Ok(Mode::new(rng.gen_range(0.3..0.99), Phase::Rational(phase)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut c = || Complex64::new(normal(rng, 1.0), normal(rng, 1.0));
    let input = Dense::from_fn(n, d_in, |_, _| c());
    let initial_state = (0..n).map(|_| c()).collect();
    let readout = Dense::from_fn(d_out, n, |_, _| c() * s_n);
    DiagonalLayer::new(
        Transition::TimeInvariant { modes, input },
        readout,
        Dense::from_fn(d_out, d_in, |_, _| normal(rng, 1.0 / (d_in as f64).sqrt())),
        initial_state,
        Activation::Tanh,
        skip,
    )
}

fn assemble(layers: Vec<DiagonalLayer>, d0: usize, rng: &mut impl Rng) -> Result<StackModel> {
    let encoding = InputEncoding::Embedding(Dense::from_fn(2, d0, |_, _| normal(rng, 1.0)));
    let last = layers.last().map_or(d0, DiagonalLayer::output_width);
    let head = sign_head(last, rng)?;
    StackModel::new(encoding, layers, head)
}

/// Stack of `1..=max_depth` non-negative selective layers with state sizes in
/// `1..=max_state` and tanh readouts.
pub fn random_non_negative_stack(max_depth: usize, max_state: usize, rng: &mut impl Rng) -> Result<StackModel> {
    if max_depth == 0 || max_state == 0 {
        return Err(Error::InvalidParameter("depth and state size must be positive".into()));
    }
    let depth = rng.gen_range(1..=max_depth);
    let d0 = rng.gen_range(1..=4);
    let mut width = d0;
    let mut layers = Vec::with_capacity(depth);
    for _ in 0..depth {
        let n = rng.gen_range(1..=max_state);
        let d_out = rng.gen_range(1..=4);
        let layer = random_non_negative(width, n, d_out, rng.gen_bool(0.3), rng)?;
        width = layer.output_width();
        layers.push(layer);
    }
    assemble(layers, d0, rng)
}

/// Two to four layers alternating complex time-invariant layers (rational
/// phases with denominators `≤ max_den`, magnitudes in `[0.3, 0.99)`) with
/// non-negative selective ones. Random initial states; every other layer
/// carries a skip connection.
pub fn random_hybrid_stack(max_den: u64, max_state: usize, rng: &mut impl Rng) -> Result<StackModel> {
    if max_den == 0 || max_state == 0 {
        return Err(Error::InvalidParameter("denominator and state bounds must be positive".into()));
    }
    let depth = rng.gen_range(2..=4);
    let ti_first = rng.gen_bool(0.5);
    let skip_parity = rng.gen_range(0..2);
    let d0 = rng.gen_range(1..=3);
    let mut width = d0;
    let mut layers = Vec::with_capacity(depth);
    for i in 0..depth {
        let n = rng.gen_range(1..=max_state);
        let d_out = rng.gen_range(1..=3);
        let skip = i % 2 == skip_parity;
        let layer = if (i % 2 == 0) == ti_first {
            random_time_invariant(width, n, d_out, max_den, skip, rng)?
        } else {
            random_non_negative(width, n, d_out, skip, rng)?
        };
        width = layer.output_width();
        layers.push(layer);
    }
    assemble(layers, d0, rng)
}

/// Model names understood by the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NamedModel {
    /// Two-layer random non-negative selective stack.
    Mamba2,
    /// Random hybrid stack with denominators up to 8.
    Hybrid,
    ModCount(u64),
    ParitySigned,
}

impl NamedModel {
    pub fn build(&self, seed: u64) -> Result<StackModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            NamedModel::Mamba2 => {
                let first = random_non_negative(2, 4, 3, false, &mut rng)?;
                let second = random_non_negative(3, 4, 2, false, &mut rng)?;
                assemble(vec![first, second], 2, &mut rng)
            }
            NamedModel::Hybrid => random_hybrid_stack(8, 8, &mut rng),
            NamedModel::ModCount(n) => modular_counting_model(n),
            NamedModel::ParitySigned => Ok(parity_layer_signed()),
        }
    }
}

impl std::fmt::Display for NamedModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NamedModel::Mamba2 => write!(f, "mamba2"),
            NamedModel::Hybrid => write!(f, "hybrid"),
            NamedModel::ModCount(n) => write!(f, "modcount:{n}"),
            NamedModel::ParitySigned => write!(f, "parity-signed"),
        }
    }
}

impl FromStr for NamedModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mamba2" => Ok(NamedModel::Mamba2),
            "hybrid" => Ok(NamedModel::Hybrid),
            "parity-signed" => Ok(NamedModel::ParitySigned),
            other => other
                .strip_prefix("modcount:")
                .and_then(|n| n.parse().ok())
                .map(NamedModel::ModCount)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown model {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::LayerKind;

    #[test]
    fn non_negative_stacks_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let m = random_non_negative_stack(3, 8, &mut rng).unwrap();
            assert!((1..=3).contains(&m.layers.len()));
            for l in &m.layers {
                assert_eq!(l.kind(), LayerKind::InputDependentNonNegative);
                assert!(l.state_dim() <= 8);
            }
        }
    }

    #[test]
    fn hybrids_interleave_and_skip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let m = random_hybrid_stack(8, 8, &mut rng).unwrap();
            let kinds: Vec<LayerKind> = m.layers.iter().map(DiagonalLayer::kind).collect();
            assert!(kinds.windows(2).all(|w| w[0] != w[1]));
            assert!(m.layers.iter().any(|l| l.skip));
            for l in &m.layers {
                if let Transition::TimeInvariant { modes, .. } = &l.transition {
                    for mode in modes {
                        let Phase::Rational(p) = mode.phase else { panic!("irrational phase") };
                        assert!(p.denominator() <= 8);
                        assert!(mode.magnitude < 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for name in ["mamba2", "hybrid", "modcount:5", "parity-signed"] {
            let m: NamedModel = name.parse().unwrap();
            assert_eq!(m.to_string(), name);
            assert!(m.build(3).is_ok());
        }
        assert!("modcount:x".parse::<NamedModel>().is_err());
        assert_eq!(NamedModel::Hybrid.build(4).unwrap(), NamedModel::Hybrid.build(4).unwrap());
    }
}
