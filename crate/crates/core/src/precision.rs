//! Emulated finite-precision execution and detection of state collapse.
//!
//! States are rounded to a binary format with `p` fraction bits after every
//! recurrence step; magnitudes below `2^min_exponent` flush to zero and
//! magnitudes above `2^max_exponent` saturate. Under such a format each
//! quantized state can only take finitely many values, which is what makes the
//! per-phase state sequences on cyclic inputs become stationary.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inputs::CyclicInputSpec;
use crate::ssm::{InputSequence, StackModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Rounding {
    #[default]
    NearestEven,
}

/// Binary floating-point format with `mantissa_bits` fraction bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrecisionSpec {
    mantissa_bits: u32,
    min_exponent: i32,
    max_exponent: i32,
    rounding: Rounding,
}

impl Default for PrecisionSpec {
    /// Certification default: 10 fraction bits, exponents in `[-30, 30]`.
    fn default() -> Self {
        Self {
            mantissa_bits: 10,
            min_exponent: -30,
            max_exponent: 30,
            rounding: Rounding::NearestEven,
        }
    }
}

impl PrecisionSpec {
    pub fn new(mantissa_bits: u32, min_exponent: i32, max_exponent: i32) -> Result<Self> {
        if !(2..=52).contains(&mantissa_bits) {
            return Err(Error::InvalidParameter(format!(
                "mantissa bits must lie in 2..=52, got {mantissa_bits}"
            )));
        }
        if min_exponent >= max_exponent {
            return Err(Error::InvalidParameter(format!(
                "min exponent {min_exponent} must be below max exponent {max_exponent}"
            )));
        }
        if min_exponent < -1022 || max_exponent > 1023 {
            return Err(Error::InvalidParameter(
                "exponent range must fit inside binary64 normal numbers".into(),
            ));
        }
        Ok(Self {
            mantissa_bits,
            min_exponent,
            max_exponent,
            rounding: Rounding::NearestEven,
        })
    }

    /// Default exponent range with a different mantissa width.
    pub fn with_mantissa_bits(mantissa_bits: u32) -> Result<Self> {
        let d = Self::default();
        Self::new(mantissa_bits, d.min_exponent, d.max_exponent)
    }

    pub fn mantissa_bits(&self) -> u32 {
        self.mantissa_bits
    }

    pub fn min_exponent(&self) -> i32 {
        self.min_exponent
    }

    pub fn max_exponent(&self) -> i32 {
        self.max_exponent
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    /// Nearest representable value. Zero is always returned as `+0.0`, so
    /// bitwise comparison of quantized values is meaningful.
    pub fn quantize(&self, v: f64) -> f64 {
        if v.is_nan() {
            return v;
        }
        let limit = 2f64.powi(self.max_exponent);
        if v.is_infinite() {
            return limit.copysign(v);
        }
        if v.abs() < 2f64.powi(self.min_exponent) {
            // also catches zero, negative zero and binary64 subnormals
            return 0.0;
        }
        let dropped = 52 - self.mantissa_bits;
        let mut bits = v.to_bits();
        if dropped > 0 {
            let mask = (1u64 << dropped) - 1;
            let rem = bits & mask;
            let half = 1u64 << (dropped - 1);
            bits &= !mask;
            let lsb_odd = (bits >> dropped) & 1 == 1;
            if rem > half || (rem == half && lsb_odd) {
                // a carry out of the fraction correctly bumps the exponent
                bits += 1u64 << dropped;
            }
        }
        let r = f64::from_bits(bits);
        if r.abs() < 2f64.powi(self.min_exponent) {
            0.0
        } else if r.abs() > limit {
            limit.copysign(r)
        } else {
            r
        }
    }

    pub fn quantize_complex(&self, v: Complex64) -> Complex64 {
        Complex64::new(self.quantize(v.re), self.quantize(v.im))
    }

    pub fn quantize_state(&self, h: &mut [Complex64]) {
        for v in h {
            *v = self.quantize_complex(*v);
        }
    }
}

/// Per-layer state trajectories; `states[layer][t]` is `h_{t+1}`.
pub type Trajectories = Vec<Vec<Vec<Complex64>>>;

/// Forward pass with every state component quantized after each step.
pub fn run_quantized(
    model: &StackModel,
    xs: &InputSequence,
    spec: &PrecisionSpec,
) -> Result<Trajectories> {
    let mut runner = model.runner();
    let mut out = vec![Vec::with_capacity(xs.len()); model.layers.len()];
    for &x in xs.tokens() {
        runner.push_with(x, |_, h| spec.quantize_state(h))?;
        for (l, h) in runner.states().iter().enumerate() {
            out[l].push(h.clone());
        }
    }
    Ok(out)
}

fn bitwise_eq(a: &[Complex64], b: &[Complex64]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()
        })
}

/// Outcome of a stationarity search on one phase of a cyclic trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stationarity {
    /// `h_{tW+i}` is bitwise constant for every cycle `t ≥ tau`.
    Stationary { tau: usize, first_step: usize },
    NotStationary,
}

impl Stationarity {
    pub fn tau(&self) -> Option<usize> {
        match self {
            Stationarity::Stationary { tau, .. } => Some(*tau),
            Stationarity::NotStationary => None,
        }
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self, Stationarity::Stationary { .. })
    }
}

/// Smallest cycle index `tau` such that `h_{tW+i}` is bitwise identical for
/// `tau ≤ t < t_max`, where `traj[k-1] = h_k` and `phase` `i` is 1-based.
///
/// The constant tail must cover at least two cycles; otherwise the phase is
/// reported as not stationary.
pub fn detect_stationary(
    traj: &[Vec<Complex64>],
    w: usize,
    phase: usize,
    t_max: usize,
) -> Result<Stationarity> {
    if w == 0 || !(1..=w).contains(&phase) {
        return Err(Error::InvalidParameter(format!(
            "phase {phase} outside 1..={w}"
        )));
    }
    let needed = t_max * w;
    if traj.len() < needed {
        return Err(Error::TrajectoryTooShort {
            needed,
            have: traj.len(),
        });
    }
    if t_max < 2 {
        return Ok(Stationarity::NotStationary);
    }
    let at = |t: usize| &traj[t * w + phase - 1];
    let last = at(t_max - 1);
    let mut tau = t_max - 1;
    while tau > 0 && bitwise_eq(at(tau - 1), last) {
        tau -= 1;
    }
    Ok(if tau <= t_max - 2 {
        Stationarity::Stationary {
            tau,
            first_step: tau * w + phase,
        }
    } else {
        Stationarity::NotStationary
    })
}

/// Stationarity verdict for one `(layer, phase)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseEntry {
    pub layer: usize,
    /// 1-based position inside the cycle.
    pub phase: usize,
    pub status: Stationarity,
}

/// One CSV row of a collapse report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollapseRow {
    pub model_id: String,
    pub input_family: String,
    #[serde(rename = "W")]
    pub w: usize,
    pub layer: usize,
    pub phase: usize,
    pub tau: Option<usize>,
    pub horizon: usize,
    pub stationary: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollapseReport {
    pub cycle_length: usize,
    /// Cycles the verdict covers.
    pub horizon: usize,
    /// Cycles actually simulated. Smaller than `horizon` when the joint state
    /// of the stack repeated after a full cycle, which fixes every later cycle.
    pub simulated_cycles: usize,
    /// Cycle after which the joint state provably repeats, if observed.
    pub certified_at: Option<usize>,
    pub entries: Vec<PhaseEntry>,
    /// `final_period_states[layer][phase-1]` over the last simulated cycle.
    pub final_period_states: Vec<Vec<Vec<Complex64>>>,
    /// Head class at the end of each of the last few cycles, oldest first.
    pub late_readouts: Vec<usize>,
    /// Parity of the input prefix at the same cycle ends.
    pub late_parities: Vec<u8>,
}

const LATE_CYCLES: usize = 4;

impl CollapseReport {
    pub fn all_stationary(&self) -> bool {
        self.entries.iter().all(|e| e.status.is_stationary())
    }

    pub fn max_tau(&self) -> Option<usize> {
        self.entries.iter().filter_map(|e| e.status.tau()).max()
    }

    pub fn readout_constant(&self) -> bool {
        self.late_readouts.windows(2).all(|w| w[0] == w[1])
    }

    /// True parity flips from cycle to cycle (odd number of ones per block).
    pub fn parity_alternates(&self) -> bool {
        self.late_parities.len() >= 2 && self.late_parities.windows(2).all(|w| w[0] != w[1])
    }

    /// The readout no longer tracks parity although the label keeps flipping.
    pub fn parity_contradiction(&self) -> bool {
        self.late_readouts.len() >= 2 && self.readout_constant() && self.parity_alternates()
    }

    /// The readout still follows the true parity on the late cycles.
    pub fn distinguishes_parity(&self) -> bool {
        if !self.parity_alternates() {
            return false;
        }
        let mut pairs = self.late_readouts.iter().zip(&self.late_parities);
        let same = pairs.clone().all(|(r, p)| *r == *p as usize);
        // a head with swapped class labels still separates the two parities
        same || pairs.all(|(r, p)| *r != *p as usize)
    }

    pub fn rows(&self, model_id: &str, input_family: &str) -> Vec<CollapseRow> {
        self.entries
            .iter()
            .map(|e| CollapseRow {
                model_id: model_id.to_string(),
                input_family: input_family.to_string(),
                w: self.cycle_length,
                layer: e.layer,
                phase: e.phase,
                tau: e.status.tau(),
                horizon: self.horizon,
                stationary: e.status.is_stationary(),
            })
            .collect()
    }
}

/// Runs the quantized model on `input.block` repeated `min(repetitions, t_max)`
/// times and reports, for every layer and phase, when its state stopped changing.
pub fn collapse_certificate(
    model: &StackModel,
    input: &CyclicInputSpec,
    spec: &PrecisionSpec,
    t_max: usize,
) -> Result<CollapseReport> {
    let w = input.cycle_len();
    let horizon = input.repetitions.min(t_max);
    let layers = model.layers.len();
    let mut runner = model.runner();

    let mut period: Vec<Vec<Vec<Complex64>>> = model
        .layers
        .iter()
        .map(|l| vec![vec![Complex64::default(); l.state_dim()]; w])
        .collect();
    // last cycle at which each (layer, phase) value changed
    let mut changed_at = vec![vec![0usize; w]; layers];
    let mut prev_end: Option<Vec<Vec<Complex64>>> = None;
    let mut readouts = Vec::new();
    let mut parities = Vec::new();
    let block_parity = input
        .block
        .iter()
        .try_fold(0u8, |p, &x| crate::ssm::binary_index(x).map(|b| p ^ b as u8))?;
    let mut parity = 0u8;
    let mut certified_at = None;
    let mut simulated = 0;

    for t in 0..horizon {
        for (i, &x) in input.block.iter().enumerate() {
            runner.push_with(x, |_, h| spec.quantize_state(h))?;
            for (l, h) in runner.states().iter().enumerate() {
                if t == 0 || !bitwise_eq(&period[l][i], h) {
                    changed_at[l][i] = t;
                    period[l][i].clone_from(h);
                }
            }
        }
        simulated = t + 1;
        parity ^= block_parity;
        readouts.push(runner.class());
        parities.push(parity);
        if readouts.len() > LATE_CYCLES {
            readouts.remove(0);
            parities.remove(0);
        }
        let end = runner.states();
        if prev_end
            .as_ref()
            .is_some_and(|prev| prev.iter().zip(end).all(|(a, b)| bitwise_eq(a, b)))
        {
            certified_at = Some(t);
            break;
        }
        prev_end = Some(end.to_vec());
    }

    // Past a certified repetition every cycle replays the last one: extend the
    // late window with the same readout and the continuing parity.
    if certified_at.is_some() {
        let r = *readouts.last().expect("at least one cycle");
        let mut p = parity;
        for _ in simulated..horizon.min(simulated + LATE_CYCLES) {
            p ^= block_parity;
            readouts.push(r);
            parities.push(p);
            if readouts.len() > LATE_CYCLES {
                readouts.remove(0);
                parities.remove(0);
            }
        }
    }

    let mut entries = Vec::with_capacity(layers * w);
    for (l, per_phase) in changed_at.iter().enumerate() {
        for (i, &tau) in per_phase.iter().enumerate() {
            let stationary = match certified_at {
                Some(_) => true,
                None => simulated >= 2 && tau + 2 <= simulated,
            };
            entries.push(PhaseEntry {
                layer: l,
                phase: i + 1,
                status: if stationary {
                    Stationarity::Stationary {
                        tau,
                        first_step: tau * w + i + 1,
                    }
                } else {
                    Stationarity::NotStationary
                },
            });
        }
    }

    Ok(CollapseReport {
        cycle_length: w,
        horizon,
        simulated_cycles: simulated,
        certified_at,
        entries,
        final_period_states: period,
        late_readouts: readouts,
        late_parities: parities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::ones;
    use crate::ssm::{scalar, Dense, Head, InputEncoding, Mode};
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn wrap(layer: crate::ssm::DiagonalLayer) -> StackModel {
        let head = Head::new(Dense::from_rows(vec![vec![1.0], vec![-1.0]]).unwrap(), vec![0.0; 2])
            .unwrap();
        StackModel::new(InputEncoding::Scalar, vec![layer], head).unwrap()
    }

    /// Round-to-nearest-even over an explicitly enumerated grid.
    fn grid_round(v: f64, p: u32) -> f64 {
        let e = v.abs().log2().floor() as i32;
        let step = 2f64.powi(e - p as i32);
        let grid: Vec<f64> = (0..=(1u64 << (p + 1)))
            .map(|k| 2f64.powi(e) + k as f64 * step)
            .collect();
        let mut best = grid[0];
        for &g in &grid {
            let (dg, db) = ((g - v).abs(), (best - v).abs());
            let even = ((g / step).round() as u64) % 2 == 0;
            if dg < db || (dg == db && even) {
                best = g;
            }
        }
        best
    }

    #[test]
    fn quantize_examples() {
        let spec = PrecisionSpec::new(3, -30, 30).unwrap();
        assert_eq!(spec.quantize(0.0), 0.0);
        assert_eq!(spec.quantize(-0.0).to_bits(), 0.0f64.to_bits());
        assert_eq!(grid_round(1.0625, 3), 1.0);
        assert_eq!(spec.quantize(1.0625), 1.0);
        assert_eq!(spec.quantize(1.1875), 1.25);
        for v in [1.03, 1.07, 1.3, 1.9999, 3.3, 5.06] {
            assert_eq!(spec.quantize(v), grid_round(v, 3), "v = {v}");
        }
    }

    #[test]
    fn quantize_flushes_and_clamps() {
        let spec = PrecisionSpec::new(10, -4, 4).unwrap();
        assert_eq!(spec.quantize(0.0624), 0.0);
        assert_eq!(spec.quantize(0.0625), 0.0625);
        assert_eq!(spec.quantize(1e6), 16.0);
        assert_eq!(spec.quantize(-1e6), -16.0);
        assert_eq!(spec.quantize(f64::INFINITY), 16.0);
    }

    #[test]
    fn precision_spec_validation() {
        assert!(PrecisionSpec::new(1, -10, 10).is_err());
        assert!(PrecisionSpec::new(10, 5, 5).is_err());
        assert!(PrecisionSpec::new(10, -2000, 5).is_err());
        assert_eq!(PrecisionSpec::default().mantissa_bits(), 10);
    }

    #[test]
    fn quantize_is_idempotent_on_many_values() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let spec = PrecisionSpec::default();
        for _ in 0..100_000 {
            let v: f64 = rng.gen_range(-1.0..1.0) * 2f64.powi(rng.gen_range(-40..40));
            let q = spec.quantize(v);
            assert_eq!(spec.quantize(q).to_bits(), q.to_bits());
        }
    }

    proptest! {
        #[test]
        fn quantize_is_monotone(a in -1e12f64..1e12, b in -1e12f64..1e12, p in 2u32..20) {
            let spec = PrecisionSpec::new(p, -30, 30).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(spec.quantize(lo) <= spec.quantize(hi));
        }

        #[test]
        fn quantize_error_is_half_ulp(v in 1e-6f64..1e6, p in 2u32..30) {
            let spec = PrecisionSpec::new(p, -60, 60).unwrap();
            let q = spec.quantize(v);
            let ulp = 2f64.powi(v.log2().floor() as i32 - p as i32);
            prop_assert!((q - v).abs() <= ulp / 2.0 + 1e-300);
        }
    }

    #[test]
    fn near_double_precision_matches_exact_forward() {
        let spec = PrecisionSpec::new(52, -1022, 1023).unwrap();
        let layer = scalar::time_invariant(
            Mode::rational(0.97, 1, 7).unwrap(),
            Complex64::new(0.3, -0.2),
            Complex64::new(0.5, 0.1),
        );
        let model = wrap(layer);
        let xs: InputSequence = (0..100).map(|t| ((t * 7) % 3 == 0) as u8 as f64).collect();
        let q = run_quantized(&model, &xs, &spec).unwrap();
        let exact = model.forward(&xs).unwrap();
        for (a, b) in q[0].iter().zip(&exact.states[0]) {
            assert!((a[0] - b[0]).norm() < 1e-12);
        }
    }

    #[test]
    fn geometric_decay_flushes_at_step_21() {
        let spec = PrecisionSpec::new(10, -20, 20).unwrap();
        let model = wrap(scalar::signed(0.5, 0.5, 0.0, 0.0, 1.0));
        let traj = run_quantized(&model, &ones(60), &spec).unwrap();
        // h_k = 2^-k survives until k = 20
        assert_eq!(traj[0][19][0], c(2f64.powi(-20)));
        let first_zero = traj[0].iter().position(|h| h[0] == c(0.0)).unwrap() + 1;
        assert_eq!(first_zero, 21);
        assert!(traj[0][20..].iter().all(|h| h[0] == c(0.0)));
        let st = detect_stationary(&traj[0], 1, 1, 60).unwrap();
        assert_eq!(
            st,
            Stationarity::Stationary {
                tau: 20,
                first_step: 21
            }
        );
    }

    #[test]
    fn sign_flip_never_becomes_stationary() {
        let model = wrap(scalar::signed(1.0, -1.0, 0.0, 0.0, 1.0));
        for p in [2, 6, 10, 40] {
            let spec = PrecisionSpec::with_mantissa_bits(p).unwrap();
            let traj = run_quantized(&model, &ones(500), &spec).unwrap();
            for (k, h) in traj[0].iter().enumerate() {
                assert_eq!(h[0].re, if k % 2 == 0 { -1.0 } else { 1.0 });
            }
            assert_eq!(
                detect_stationary(&traj[0], 1, 1, 500).unwrap(),
                Stationarity::NotStationary
            );
        }
    }

    #[test]
    fn detect_stationary_basics() {
        let constant = vec![vec![c(0.25)]; 10];
        assert_eq!(
            detect_stationary(&constant, 1, 1, 10).unwrap().tau(),
            Some(0)
        );
        let alternating: Vec<_> = (0..10).map(|k| vec![c(if k % 2 == 0 { 1.0 } else { -1.0 })]).collect();
        assert!(!detect_stationary(&alternating, 1, 1, 10).unwrap().is_stationary());
        // with W = 2 each phase of the alternation is constant
        assert_eq!(detect_stationary(&alternating, 2, 2, 5).unwrap().tau(), Some(0));
        assert!(matches!(
            detect_stationary(&constant, 1, 1, 11),
            Err(Error::TrajectoryTooShort { .. })
        ));
        assert!(detect_stationary(&constant, 2, 3, 2).is_err());
    }

    #[test]
    fn certificate_agrees_with_trajectory_scan() {
        let layer = scalar::signed(0.7, 0.3, 0.4, -1.1, 0.9);
        let model = wrap(layer);
        let spec = PrecisionSpec::default();
        let cyc = CyclicInputSpec::new(vec![0.0, 1.0, 1.0, 1.0], 400).unwrap();
        let report = collapse_certificate(&model, &cyc, &spec, 400).unwrap();
        assert!(report.certified_at.is_some());
        let traj = run_quantized(&model, &cyc.generate(), &spec).unwrap();
        for e in &report.entries {
            let scan = detect_stationary(&traj[e.layer], 4, e.phase, 400).unwrap();
            assert_eq!(scan, e.status);
        }
        assert!(report.parity_contradiction());
        assert!(!report.distinguishes_parity());
    }

    #[test]
    fn flip_layer_certificate_tracks_parity() {
        let model = wrap(scalar::signed(1.0, -1.0, 0.0, 0.0, 1.0));
        let report = collapse_certificate(
            &model,
            &CyclicInputSpec::new(vec![1.0], 1000).unwrap(),
            &PrecisionSpec::default(),
            1000,
        )
        .unwrap();
        assert!(!report.all_stationary());
        assert_eq!(report.simulated_cycles, 1000);
        assert!(!report.parity_contradiction());
        assert!(report.distinguishes_parity());
        let rows = report.rows("flip", "ones:1000");
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].tau, None);
        assert!(!rows[0].stationary);
    }
}
