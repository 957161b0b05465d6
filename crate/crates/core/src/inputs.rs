//! Input families used by the collapse arguments, parity labels and the
//! cycle length `W`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ssm::{lcm, InputSequence, Phase, StackModel, Transition};

/// A block of tokens repeated a number of times.
#[derive(Clone, Debug, PartialEq)]
pub struct CyclicInputSpec {
    pub block: Vec<f64>,
    pub repetitions: usize,
}

impl CyclicInputSpec {
    pub fn new(block: Vec<f64>, repetitions: usize) -> Result<Self> {
        if block.is_empty() {
            return Err(Error::InvalidParameter("cycle block must be non-empty".into()));
        }
        if repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
        }
        Ok(Self { block, repetitions })
    }

    pub fn cycle_len(&self) -> usize {
        self.block.len()
    }

    pub fn generate(&self) -> InputSequence {
        self.block
            .iter()
            .copied()
            .cycle()
            .take(self.block.len() * self.repetitions)
            .collect()
    }

    /// Recovers the spec when `xs` is an exact repetition of its first `w` tokens.
    pub fn detect(xs: &InputSequence, w: usize) -> Option<Self> {
        let t = xs.tokens();
        if w == 0 || t.is_empty() || t.len() % w != 0 {
            return None;
        }
        let block = &t[..w];
        t.chunks(w).all(|c| c == block).then(|| Self {
            block: block.to_vec(),
            repetitions: t.len() / w,
        })
    }
}

/// `1^T`.
pub fn ones(t: usize) -> InputSequence {
    InputSequence::new(vec![1.0; t])
}

fn zeros_then_ones(k: usize, m: usize) -> Vec<f64> {
    let mut block = vec![0.0; k];
    block.extend(std::iter::repeat(1.0).take(m));
    block
}

/// The block `0^k 1^m` with `m` odd.
pub fn zeros_ones_block(k: usize, m: usize) -> Result<Vec<f64>> {
    if m % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "the number of ones per cycle must be odd, got {m}"
        )));
    }
    Ok(zeros_then_ones(k, m))
}

/// `(0^k 1^m)^c` with `m` odd.
pub fn cycle_zeros_ones(k: usize, m: usize, cycles: usize) -> Result<InputSequence> {
    let block = zeros_ones_block(k, m)?;
    Ok(block
        .iter()
        .copied()
        .cycle()
        .take(block.len() * cycles)
        .collect())
}

/// The block `1 0^{W-1}`.
pub fn impulse_block(w: usize) -> Result<Vec<f64>> {
    if w == 0 {
        return Err(Error::InvalidParameter("impulse spacing W must be >= 1".into()));
    }
    let mut block = vec![0.0; w];
    block[0] = 1.0;
    Ok(block)
}

/// `(1 0^{W-1})^T`.
pub fn spaced_impulse(w: usize, t: usize) -> Result<InputSequence> {
    Ok(CyclicInputSpec {
        block: impulse_block(w)?,
        repetitions: t,
    }
    .generate())
}

/// 1 when the number of ones is odd (the string is not in the parity language).
pub fn parity_label(xs: &InputSequence) -> Result<u8> {
    let mut parity = 0u8;
    for &x in xs.tokens() {
        parity ^= crate::ssm::binary_index(x)? as u8;
    }
    Ok(parity)
}

/// Least common multiple of every rational phase denominator in the model's
/// time-invariant layers, so that each eigenvalue raised to `W` is real and
/// non-negative. 1 when the model has no time-invariant layer.
pub fn compute_w(model: &StackModel) -> Result<u64> {
    let mut w = 1u64;
    for layer in &model.layers {
        if let Transition::TimeInvariant { modes, .. } = &layer.transition {
            for mode in modes {
                match mode.phase {
                    Phase::Rational(q) => {
                        w = lcm(w, q.denominator()).ok_or_else(|| {
                            Error::InvalidParameter("cycle length W overflows 64 bits".into())
                        })?
                    }
                    Phase::Turns(t) => return Err(Error::NonRationalPhase(t)),
                }
            }
        }
    }
    Ok(w)
}

/// Input family names accepted on the command line: `ones:T`,
/// `cycle:k,m,c` and `impulse:W,T`. `impulse:auto,T` defers `W` to the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFamily {
    Ones { t: usize },
    Cycle { zeros: usize, ones: usize, cycles: usize },
    Impulse { w: Option<usize>, t: usize },
}

impl InputFamily {
    /// Cycle block and repetition count; `model_w` resolves `impulse:auto`.
    pub fn cyclic_spec(&self, model_w: Option<u64>) -> Result<CyclicInputSpec> {
        match *self {
            InputFamily::Ones { t } => CyclicInputSpec::new(vec![1.0], t),
            InputFamily::Cycle {
                zeros,
                ones,
                cycles,
            } => CyclicInputSpec::new(zeros_ones_block(zeros, ones)?, cycles),
            InputFamily::Impulse { w, t } => {
                let w = match (w, model_w) {
                    (Some(w), _) => w,
                    (None, Some(w)) => w as usize,
                    (None, None) => {
                        return Err(Error::InvalidParameter(
                            "impulse:auto needs a model to compute W".into(),
                        ))
                    }
                };
                CyclicInputSpec::new(impulse_block(w)?, t)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InputFamily::Ones { .. } => "ones",
            InputFamily::Cycle { .. } => "cycle",
            InputFamily::Impulse { .. } => "impulse",
        }
    }
}

impl fmt::Display for InputFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputFamily::Ones { t } => write!(f, "ones:{t}"),
            InputFamily::Cycle {
                zeros,
                ones,
                cycles,
            } => write!(f, "cycle:{zeros},{ones},{cycles}"),
            InputFamily::Impulse { w: Some(w), t } => write!(f, "impulse:{w},{t}"),
            InputFamily::Impulse { w: None, t } => write!(f, "impulse:auto,{t}"),
        }
    }
}

impl FromStr for InputFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognised input family {s:?}"));
        let (name, args) = s.split_once(':').ok_or_else(bad)?;
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        let num = |a: &str| a.parse::<usize>().map_err(|_| bad());
        match (name.trim(), args.as_slice()) {
            ("ones", [t]) => Ok(InputFamily::Ones { t: num(t)? }),
            ("cycle", [k, m, c]) => {
                let ones = num(m)?;
                zeros_ones_block(0, ones)?;
                Ok(InputFamily::Cycle {
                    zeros: num(k)?,
                    ones,
                    cycles: num(c)?,
                })
            }
            ("impulse", [w, t]) => {
                let w = if *w == "auto" { None } else { Some(num(w)?) };
                if w == Some(0) {
                    return Err(bad());
                }
                Ok(InputFamily::Impulse { w, t: num(t)? })
            }
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::{scalar, InputEncoding, Dense, Head, Mode};
    use num_complex::Complex64;

    fn bits(xs: &InputSequence) -> String {
        xs.to_string()
    }

    #[test]
    fn ones_examples() {
        assert!(ones(0).is_empty());
        assert_eq!(bits(&ones(3)), "111");
        assert_eq!(parity_label(&ones(7)).unwrap(), 1);
    }

    #[test]
    fn cycle_examples() {
        assert_eq!(bits(&cycle_zeros_ones(1, 1, 2).unwrap()), "0101");
        assert_eq!(cycle_zeros_ones(0, 1, 9).unwrap(), ones(9));
        for c in 0..7 {
            let xs = cycle_zeros_ones(2, 3, c).unwrap();
            assert_eq!(parity_label(&xs).unwrap() as usize, c % 2);
        }
        assert!(cycle_zeros_ones(1, 2, 3).is_err());
    }

    #[test]
    fn impulse_examples() {
        assert_eq!(bits(&spaced_impulse(1, 4).unwrap()), "1111");
        assert_eq!(bits(&spaced_impulse(3, 2).unwrap()), "100100");
        for t in 0..9 {
            let xs = spaced_impulse(5, t).unwrap();
            assert_eq!(parity_label(&xs).unwrap() as usize, t % 2);
        }
        assert!(spaced_impulse(0, 3).is_err());
    }

    #[test]
    fn spaced_impulse_round_trips_through_its_cyclic_spec() {
        let xs = spaced_impulse(4, 6).unwrap();
        let spec = CyclicInputSpec::detect(&xs, 4).unwrap();
        assert_eq!(spec.block, impulse_block(4).unwrap());
        assert_eq!(spec.repetitions, 6);
        assert_eq!(spec.generate(), xs);
        assert!(CyclicInputSpec::detect(&xs, 3).is_none());
    }

    #[test]
    fn parity_label_examples() {
        assert_eq!(parity_label(&InputSequence::from_bits("0110").unwrap()).unwrap(), 0);
        assert_eq!(parity_label(&InputSequence::from_bits("1").unwrap()).unwrap(), 1);
        assert!(parity_label(&InputSequence::new(vec![0.5])).is_err());
    }

    fn model_with_phases(phases: &[(u64, u64)]) -> StackModel {
        let layers: Vec<_> = phases
            .iter()
            .map(|&(n, d)| {
                scalar::time_invariant(
                    Mode::rational(0.9, n, d).unwrap(),
                    Complex64::new(1.0, 0.0),
                    Complex64::new(0.0, 0.0),
                )
            })
            .collect();
        let head = Head::new(Dense::zeros(2, 1), vec![0.0; 2]).unwrap();
        StackModel::new(InputEncoding::Scalar, layers, head).unwrap()
    }

    #[test]
    fn compute_w_examples() {
        assert_eq!(compute_w(&model_with_phases(&[(1, 2)])).unwrap(), 2);
        assert_eq!(compute_w(&model_with_phases(&[(1, 2), (1, 3)])).unwrap(), 6);
        assert_eq!(compute_w(&model_with_phases(&[(2, 4), (3, 8)])).unwrap(), 8);
        let layer = scalar::signed(0.5, 0.5, 0.0, 0.0, 0.0);
        let head = Head::new(Dense::zeros(2, 1), vec![0.0; 2]).unwrap();
        let model = StackModel::new(InputEncoding::Scalar, vec![layer], head).unwrap();
        assert_eq!(compute_w(&model).unwrap(), 1);
    }

    #[test]
    fn compute_w_rejects_continuous_phase() {
        let mut model = model_with_phases(&[(1, 2)]);
        if let Transition::TimeInvariant { modes, .. } = &mut model.layers[0].transition {
            modes[0].phase = Phase::Turns(0.123);
        }
        assert!(matches!(compute_w(&model), Err(Error::NonRationalPhase(_))));
    }

    #[test]
    fn family_names_parse_and_print() {
        for s in ["ones:100", "cycle:2,3,50", "impulse:4,10", "impulse:auto,7"] {
            let f: InputFamily = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("cycle:1,2,3".parse::<InputFamily>().is_err());
        assert!("impulse:0,3".parse::<InputFamily>().is_err());
        assert!("spiral:3".parse::<InputFamily>().is_err());
        let spec = "impulse:auto,5".parse::<InputFamily>().unwrap().cyclic_spec(Some(3)).unwrap();
        assert_eq!(spec.block, vec![1.0, 0.0, 0.0]);
    }
}
