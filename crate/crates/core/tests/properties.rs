mod common;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssmlab::inputs::compute_w;
use ssmlab::precision::PrecisionSpec;
use ssmlab::psd::{principal_sqrt, random_psd, symmetric_eigen, SymMatrix};
use ssmlab::ssm::{power_and_geometric_sum, DiagonalLayer, Phase, StackModel, Transition};
use ssmlab::zoo::random_hybrid_stack;

use common::{selective, signed, time_invariant};

fn layer(kind: u8, rng: &mut ChaCha8Rng) -> DiagonalLayer {
    match kind {
        0 => time_invariant(1, 4, 2, rng),
        1 => selective(1, 4, 2, rng),
        _ => signed(1, 4, 2, rng),
    }
}

fn denominators(model: &StackModel) -> Vec<u64> {
    let mut out = Vec::new();
    for l in &model.layers {
        if let Transition::TimeInvariant { modes, .. } = &l.transition {
            for m in modes {
                if let Phase::Rational(q) = m.phase {
                    out.push(q.denominator());
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn closed_form_matches_stepping(seed in any::<u64>(), kind in 0u8..3, token in 0u8..2, k in 0u64..=64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = layer(kind, &mut rng);
        let u = [f64::from(token)];
        let mut h = l.initial_state.clone();
        for _ in 0..k {
            h = l.step(&h, &u).unwrap();
        }
        let closed = l.closed_form_state(&u, k).unwrap();
        for (a, b) in closed.iter().zip(&h) {
            prop_assert!((a - b).norm() < 1e-9 * (1.0 + b.norm()), "{a} vs {b}");
        }
    }

    #[test]
    fn geometric_sum_matches_direct_sum(r in 0.0f64..1.2, turns in 0.0f64..1.0, k in 0u64..300) {
        let a = Complex64::from_polar(r, std::f64::consts::TAU * turns);
        let (mut p, mut s) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        for _ in 0..k {
            s += p;
            p *= a;
        }
        let (power, sum) = power_and_geometric_sum(a, k);
        prop_assert!((power - p).norm() < 1e-9 * (1.0 + p.norm()));
        prop_assert!((sum - s).norm() < 1e-9 * (1.0 + s.norm()));
    }

    #[test]
    fn quantize_is_idempotent_odd_and_monotone(p in 2u32..=23, x in -1e6f64..1e6, y in -1e6f64..1e6) {
        let spec = PrecisionSpec::new(p, -30, 30).unwrap();
        let (qx, qy) = (spec.quantize(x), spec.quantize(y));
        prop_assert_eq!(spec.quantize(qx).to_bits(), qx.to_bits());
        prop_assert_eq!(spec.quantize(-x), -qx + 0.0);
        if x <= y {
            prop_assert!(qx <= qy);
        }
        if x.abs() >= 2f64.powi(-30) {
            prop_assert!((qx - x).abs() <= x.abs() * 2f64.powi(-(p as i32) - 1));
        }
    }

    #[test]
    fn jacobi_agrees_with_nalgebra(seed in any::<u64>(), d in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = ssmlab::psd::random_matrix(d, &mut rng);
        let m = SymMatrix::new(&g + g.transpose()).unwrap();
        let ours = symmetric_eigen(&m);
        let mut theirs: Vec<f64> = m.matrix().clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (a, b) in ours.values.iter().zip(&theirs) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
        let back = ours.reconstruct();
        prop_assert!((&back - m.matrix()).amax() < 1e-9 * (1.0 + m.matrix().amax()));
        let orth = ours.vectors.transpose() * &ours.vectors - DMatrix::identity(d, d);
        prop_assert!(orth.amax() < 1e-10);
    }

    #[test]
    fn principal_sqrt_squares_back(seed in any::<u64>(), d in 1usize..=6, z in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_psd(d, z.min(d - 1), &mut rng).unwrap();
        let s = principal_sqrt(&a).unwrap();
        prop_assert!(s.is_psd());
        let sq = s.matrix() * s.matrix();
        prop_assert!((&sq - a.matrix()).amax() < 1e-8 * (1.0 + a.matrix().amax()));
    }

    #[test]
    fn cycle_length_is_a_common_multiple(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_hybrid_stack(8, 6, &mut rng).unwrap();
        let w = compute_w(&model).unwrap();
        let dens = denominators(&model);
        prop_assert!(dens.iter().all(|d| w % d == 0));
        // and it is the least one
        prop_assert!((1..w).all(|v| dens.iter().any(|d| v % d != 0)));
    }
}

#[test]
fn diagonal_sqrt_is_elementwise() {
    let s = principal_sqrt(&SymMatrix::diagonal(&[4.0, 0.0, 9.0]).unwrap()).unwrap();
    assert_relative_eq!(s.matrix()[(0, 0)], 2.0, epsilon = 1e-12);
    assert_relative_eq!(s.matrix()[(1, 1)], 0.0, epsilon = 1e-12);
    assert_relative_eq!(s.matrix()[(2, 2)], 3.0, epsilon = 1e-12);
}
