//! Hand-built models that do solve their tasks: modular counting with a
//! unit-circle eigenvalue, parity with a signed input-dependent eigenvalue,
//! and the offset-prediction automaton with its scalar complex realization.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ssm::{scalar, Dense, DiagonalLayer, Head, InputEncoding, InputSequence, Mode, StackModel};

/// Absolute tolerance of the `h = 1` accept predicate.
pub const ACCEPT_TOLERANCE: f64 = 1e-9;

/// `|h - 1| < ACCEPT_TOLERANCE`.
pub fn at_unit(h: Complex64) -> bool {
    (h - Complex64::new(1.0, 0.0)).norm() < ACCEPT_TOLERANCE
}

fn check_modulus(n: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("modulus must be >= 2, got {n}")));
    }
    Ok(())
}

/// Scalar layer `h' = exp(2πi/n) h`, `h_0 = 1`; accepts (`h = 1`) exactly
/// after multiples of `n` steps.
pub fn modular_counting_layer(n: u64) -> Result<DiagonalLayer> {
    check_modulus(n)?;
    Ok(scalar::time_invariant(
        Mode::rational(1.0, 1, n)?,
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
    ))
}

/// Head reading class 0 when the scalar output is positive, class 1 otherwise.
fn sign_head() -> Head {
    Head {
        weight: Dense::from_fn(2, 1, |r, _| if r == 0 { 1.0 } else { -1.0 }),
        bias: vec![0.0; 2],
    }
}

fn scalar_stack(layer: DiagonalLayer) -> Result<StackModel> {
    StackModel::new(InputEncoding::Scalar, vec![layer], sign_head())
}

/// [`modular_counting_layer`] wrapped as a stack. For `n = 2` the head
/// reports the parity of the number of ones read so far.
pub fn modular_counting_model(n: u64) -> Result<StackModel> {
    scalar_stack(modular_counting_layer(n)?)
}

/// Scalar signed layer with `a(0) = 1`, `a(1) = -1`, `b ≡ 0`, `h_0 = 1`;
/// the head maps `h = 1` to class 0 (even) and `h = -1` to class 1 (odd).
pub fn parity_layer_signed() -> StackModel {
    scalar_stack(scalar::signed(1.0, -1.0, 0.0, 0.0, 1.0)).expect("scalar parity stack is well formed")
}

/// Deterministic automaton over tokens `{0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteAutomaton {
    /// `transitions[state][token]`.
    pub transitions: Vec<[usize; 2]>,
    pub initial: usize,
    pub accepting: Vec<bool>,
    pub labels: Vec<String>,
}

impl FiniteAutomaton {
    pub fn num_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn step(&self, state: usize, token: f64) -> Result<usize> {
        Ok(self.transitions[state][crate::ssm::binary_index(token)?])
    }

    /// States after each token (not including the initial one).
    pub fn run(&self, xs: &InputSequence) -> Result<Vec<usize>> {
        let mut s = self.initial;
        xs.tokens()
            .iter()
            .map(|&x| {
                s = self.step(s, x)?;
                Ok(s)
            })
            .collect()
    }

    /// Accept flag after each token.
    pub fn outputs(&self, xs: &InputSequence) -> Result<Vec<bool>> {
        Ok(self.run(xs)?.into_iter().map(|s| self.accepting[s]).collect())
    }
}

/// Offset automaton: sleep state `s_0` loops on 1, each 0 advances the count
/// `s_i → s_{i+1 mod n}`, and a 1 mid-count falls into an absorbing fail
/// state. Outputs 1 exactly in `s_0`.
pub fn offset_fsa(n: usize) -> Result<FiniteAutomaton> {
    check_modulus(n as u64)?;
    let fail = n;
    let mut transitions: Vec<[usize; 2]> = (0..n)
        .map(|i| [(i + 1) % n, if i == 0 { 0 } else { fail }])
        .collect();
    transitions.push([fail, fail]);
    let mut labels: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    labels.push("fail".into());
    Ok(FiniteAutomaton {
        transitions,
        initial: 0,
        accepting: (0..=n).map(|s| s == 0).collect(),
        labels,
    })
}

/// Scalar complex layer with the `h = 1` output predicate.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetSsm {
    pub layer: DiagonalLayer,
}

impl OffsetSsm {
    /// Predicate output after each token.
    pub fn outputs(&self, xs: &InputSequence) -> Result<Vec<bool>> {
        Ok(self.layer.unroll(xs)?.iter().map(|h| at_unit(h[0])).collect())
    }
}

/// `h' = A h + (1 - A) x` with `A = exp(2πi/n)` and `h_0 = 1`: input 1 keeps
/// the sleep state `h = 1` fixed and `n` zeros rotate once around the circle.
pub fn offset_ssm(n: usize) -> Result<OffsetSsm> {
    check_modulus(n as u64)?;
    let mode = Mode::rational(1.0, 1, n as u64)?;
    let b = Complex64::new(1.0, 0.0) - mode.eigenvalue();
    Ok(OffsetSsm {
        layer: scalar::time_invariant(mode, b, Complex64::new(1.0, 0.0)),
    })
}

/// Random sequence of runs of 1s separated by complete bursts of `n` zeros
/// (possibly several in a row), truncated to `len`.
pub fn random_non_interrupting(n: usize, len: usize, rng: &mut impl Rng) -> InputSequence {
    let mut xs = Vec::with_capacity(len);
    while xs.len() < len {
        let ones = rng.gen_range(0..=2 * n);
        xs.extend(std::iter::repeat(1.0).take(ones));
        let bursts = rng.gen_range(1..=2);
        xs.extend(std::iter::repeat(0.0).take(bursts * n));
    }
    xs.truncate(len);
    InputSequence::new(xs)
}

/// Outcome of a per-step comparison against an integer oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub checks: usize,
    pub mismatches: usize,
    pub first_mismatch: Option<String>,
}

impl OracleReport {
    fn new() -> Self {
        Self {
            checks: 0,
            mismatches: 0,
            first_mismatch: None,
        }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.mismatches += 1;
            if self.first_mismatch.is_none() {
                self.first_mismatch = Some(what());
            }
        }
    }

    pub fn pass(&self) -> bool {
        self.mismatches == 0
    }
}

/// `h_t = 1` against `t mod n = 0` for `t = 1..=t_max` on `1^t`.
pub fn modular_counting_check(n: u64, t_max: usize) -> Result<OracleReport> {
    let layer = modular_counting_layer(n)?;
    let states = layer.unroll(&crate::inputs::ones(t_max))?;
    let mut report = OracleReport::new();
    for (i, h) in states.iter().enumerate() {
        let t = i as u64 + 1;
        report.record(at_unit(h[0]) == (t % n == 0), || format!("t={t}: h={h:?}", h = h[0]));
    }
    Ok(report)
}

fn parity_prefix_check(
    model: &StackModel,
    xs: &[f64],
    precision: Option<&crate::precision::PrecisionSpec>,
    every_prefix: bool,
    report: &mut OracleReport,
) -> Result<()> {
    let mut runner = model.runner();
    let mut parity = 0usize;
    for (t, &x) in xs.iter().enumerate() {
        match precision {
            Some(spec) => runner.push_with(x, |_, h| spec.quantize_state(h))?,
            None => runner.push(x)?,
        }
        parity ^= crate::ssm::binary_index(x)?;
        if every_prefix || t + 1 == xs.len() {
            let class = runner.class();
            report.record(class == parity, || {
                let bits: String = xs[..=t].iter().map(|&v| if v == 1.0 { '1' } else { '0' }).take(64).collect();
                format!("prefix of length {} starting {bits}: class {class}, parity {parity}", t + 1)
            });
        }
    }
    Ok(())
}

/// [`parity_layer_signed`] against XOR on every string of length
/// `1..=max_len` and on `random_count` uniform strings of length `random_len`,
/// optionally with the state rounded to `precision` after every step.
pub fn parity_signed_check(
    max_len: usize,
    random_count: usize,
    random_len: usize,
    precision: Option<&crate::precision::PrecisionSpec>,
    seed: u64,
) -> Result<OracleReport> {
    if max_len > 24 {
        return Err(Error::InvalidParameter(format!("exhaustive length {max_len} exceeds 24")));
    }
    let model = parity_layer_signed();
    let mut report = OracleReport::new();
    // Every shorter string is a prefix of some length-max_len string.
    for code in 0u64..(1u64 << max_len) {
        let xs: Vec<f64> = (0..max_len).map(|i| ((code >> i) & 1) as f64).collect();
        parity_prefix_check(&model, &xs, precision, true, &mut report)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_count {
        let xs: Vec<f64> = (0..random_len).map(|_| rng.gen_range(0..2u8) as f64).collect();
        parity_prefix_check(&model, &xs, precision, false, &mut report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub input: InputSequence,
    pub step: usize,
    pub ssm_output: bool,
    pub fsa_output: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub steps_checked: usize,
    pub counterexample: Option<Counterexample>,
}

impl EquivalenceReport {
    pub fn equivalent(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Per-step comparison of `ssm` and `fsa` on `trials` random non-interrupting
/// sequences for modulus `n` with lengths up to `max_len`. Stops at the first
/// disagreement (reported, not raised).
pub fn fsa_equivalence_check(
    ssm: &OffsetSsm,
    fsa: &FiniteAutomaton,
    n: usize,
    trials: usize,
    max_len: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps_checked = 0;
    for trial in 0..trials {
        let len = if max_len == 0 { 0 } else { rng.gen_range(1..=max_len) };
        let xs = random_non_interrupting(n, len, &mut rng);
        let (a, b) = (ssm.outputs(&xs)?, fsa.outputs(&xs)?);
        if let Some(step) = (0..xs.len()).find(|&t| a[t] != b[t]) {
            return Ok(EquivalenceReport {
                trials: trial + 1,
                steps_checked: steps_checked + step + 1,
                counterexample: Some(Counterexample {
                    input: xs,
                    step,
                    ssm_output: a[step],
                    fsa_output: b[step],
                }),
            });
        }
        steps_checked += xs.len();
    }
    Ok(EquivalenceReport {
        trials,
        steps_checked,
        counterexample: None,
    })
}

/// Offset-prediction task: ITIs of 0s with random length, ISIs of 1s with
/// fixed length, starting with an ITI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OffsetTaskSpec {
    pub isi_len: usize,
    pub iti_min: usize,
    pub iti_max: usize,
    pub seq_len: usize,
}

impl Default for OffsetTaskSpec {
    fn default() -> Self {
        Self {
            isi_len: 10,
            iti_min: 20,
            iti_max: 40,
            seq_len: 200,
        }
    }
}

impl OffsetTaskSpec {
    pub fn new(isi_len: usize, iti_min: usize, iti_max: usize, seq_len: usize) -> Result<Self> {
        let spec = Self {
            isi_len,
            iti_min,
            iti_max,
            seq_len,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.isi_len == 0 || self.iti_min == 0 || self.iti_min > self.iti_max {
            return Err(Error::InvalidParameter(format!("invalid offset task {self:?}")));
        }
        Ok(())
    }
}

/// Next-token targets `x_{t+1}`, with 0 after the last token.
pub fn next_token_targets(xs: &InputSequence) -> Vec<f64> {
    let t = xs.tokens();
    (0..t.len()).map(|i| t.get(i + 1).copied().unwrap_or(0.0)).collect()
}

/// One offset-task sequence and its per-step next-token targets.
pub fn gen_offset_sequence(spec: &OffsetTaskSpec, seed: u64) -> Result<(InputSequence, Vec<f64>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(spec.seq_len + spec.iti_max + spec.isi_len);
    while xs.len() < spec.seq_len {
        let iti = rng.gen_range(spec.iti_min..=spec.iti_max);
        xs.extend(std::iter::repeat(0.0).take(iti));
        xs.extend(std::iter::repeat(1.0).take(spec.isi_len));
    }
    xs.truncate(spec.seq_len);
    let xs = InputSequence::new(xs);
    let targets = next_token_targets(&xs);
    Ok((xs, targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::ones;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn modular_counting_examples() {
        let two = modular_counting_layer(2).unwrap();
        let states = two.unroll(&ones(6)).unwrap();
        let re: Vec<f64> = states.iter().map(|h| h[0].re).collect();
        assert_eq!(re, vec![-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]);

        let four = modular_counting_layer(4).unwrap();
        let states = four.unroll(&ones(4)).unwrap();
        assert_eq!(states.iter().map(|h| h[0]).collect::<Vec<_>>(), vec![c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0), c(1.0, 0.0)]);

        let three = modular_counting_layer(3).unwrap();
        let states = three.unroll(&ones(30)).unwrap();
        for (i, h) in states.iter().enumerate() {
            let t = i + 1;
            assert_eq!(at_unit(h[0]), t % 3 == 0, "t = {t}");
            assert!((h[0].norm() - 1.0).abs() < 1e-12);
        }
        assert!(modular_counting_layer(1).is_err());
    }

    #[test]
    fn parity_layer_examples() {
        let m = parity_layer_signed();
        assert_eq!(m.classify(&InputSequence::from_bits("0110").unwrap()).unwrap(), 0);
        assert_eq!(m.classify(&ones(10001)).unwrap(), 1);
        assert_eq!(m.classify(&InputSequence::default()).unwrap(), 0);
    }

    #[test]
    fn offset_fsa_examples() {
        let f = offset_fsa(4).unwrap();
        let path = f.run(&InputSequence::from_bits("1100001").unwrap()).unwrap();
        let labels: Vec<&str> = path.iter().map(|&s| f.labels[s].as_str()).collect();
        assert_eq!(labels, vec!["s0", "s0", "s1", "s2", "s3", "s0", "s0"]);
        let path = f.run(&InputSequence::from_bits("01").unwrap()).unwrap();
        assert_eq!(f.labels[path[1]], "fail");
        assert_eq!(f.step(4, 0.0).unwrap(), 4);
        assert_eq!(f.step(4, 1.0).unwrap(), 4);
        let two = offset_fsa(2).unwrap();
        assert_eq!(two.outputs(&InputSequence::from_bits("0000").unwrap()).unwrap(), vec![false, true, false, true]);
    }

    #[test]
    fn offset_ssm_examples() {
        let s = offset_ssm(4).unwrap();
        let h = s.layer.step(&[c(1.0, 0.0)], &[1.0]).unwrap();
        assert!(at_unit(h[0]));
        let states = s.layer.unroll(&InputSequence::from_bits("0000").unwrap()).unwrap();
        let expect = [c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0), c(1.0, 0.0)];
        for (h, e) in states.iter().zip(expect) {
            assert!((h[0] - e).norm() < 1e-15);
        }
        assert_eq!(s.outputs(&InputSequence::from_bits("0000").unwrap()).unwrap(), vec![false, false, false, true]);
    }

    #[test]
    fn offset_ssm_matches_fsa_for_small_moduli() {
        for n in 2..=6 {
            let r = fsa_equivalence_check(&offset_ssm(n).unwrap(), &offset_fsa(n).unwrap(), n, 50, 200, n as u64).unwrap();
            assert!(r.equivalent(), "n = {n}: {:?}", r.counterexample);
        }
        let r = fsa_equivalence_check(&offset_ssm(3).unwrap(), &offset_fsa(3).unwrap(), 3, 5, 0, 0).unwrap();
        assert!(r.equivalent());
        assert_eq!(r.steps_checked, 0);
    }

    #[test]
    fn interrupted_count_never_matches_sleep() {
        let s = offset_ssm(4).unwrap();
        let out = s.outputs(&InputSequence::from_bits("0110000").unwrap()).unwrap();
        let f = offset_fsa(4).unwrap();
        assert_eq!(f.outputs(&InputSequence::from_bits("01").unwrap()).unwrap(), vec![false, false]);
        assert!(!out[1]);
    }

    #[test]
    fn offset_sequence_layout() {
        let spec = OffsetTaskSpec::new(10, 20, 20, 62).unwrap();
        let (xs, targets) = gen_offset_sequence(&spec, 0).unwrap();
        let expect: String = "0".repeat(20) + &"1".repeat(10) + &"0".repeat(20) + &"1".repeat(10) + "00";
        assert_eq!(xs.to_string(), expect);
        assert_eq!(targets.len(), 62);
        for t in 0..61 {
            assert_eq!(targets[t], xs.tokens()[t + 1]);
        }
        assert_eq!(targets[61], 0.0);
        for seed in 0..20 {
            let (xs, _) = gen_offset_sequence(&OffsetTaskSpec::default(), seed).unwrap();
            assert_eq!(xs.tokens()[0], 0.0);
            assert_eq!(xs.len(), 200);
        }
        assert!(OffsetTaskSpec::new(10, 0, 5, 10).is_err());
        assert!(OffsetTaskSpec::new(10, 6, 5, 10).is_err());
    }

    #[test]
    fn oracle_checks_pass_for_the_constructions() {
        let r = modular_counting_check(3, 30).unwrap();
        assert_eq!((r.checks, r.mismatches), (30, 0));
        let spec = crate::precision::PrecisionSpec::with_mantissa_bits(10).unwrap();
        let r = parity_signed_check(4, 3, 50, Some(&spec), 1).unwrap();
        assert_eq!(r.checks, 16 * 4 + 3);
        assert!(r.pass());
        assert!(parity_signed_check(25, 0, 0, None, 0).is_err());
    }
}
