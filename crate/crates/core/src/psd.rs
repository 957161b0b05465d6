//! Small dense symmetric linear algebra for checking that the product of two
//! positive semi-definite matrices has a real, non-negative spectrum.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 16;
/// Off-diagonal Frobenius norm (relative to the matrix norm) at which Jacobi stops.
pub const JACOBI_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues above `-PSD_TOL` count as non-negative.
pub const PSD_TOL: f64 = 1e-10;
pub const SPECTRUM_TOL: f64 = 1e-8;
const SCHUR_ATTEMPTS: usize = 8;
pub const PRODUCT_TOL: f64 = 1e-9;

/// Real symmetric matrix of dimension `1..=16`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::InvalidParameter(format!("dimension {d} outside 1..={MAX_DIM}")));
    }
    Ok(())
}

impl SymMatrix {
    /// Rejects matrices whose asymmetry exceeds `1e-12` times `max(1, max |m_ij|)`,
    /// then stores the symmetric part.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension {
                what: "symmetric matrix columns",
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        check_dim(m.nrows())?;
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let m = (&m + m.transpose()) * 0.5;
        Ok(Self { m })
    }

    pub fn from_row_slice(d: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::Dimension {
                what: "symmetric matrix entries",
                expected: d * d,
                got: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(d, d, entries))
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(d, d))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(values)))
    }

    /// `GᵀG` for a square `G`; PSD by construction.
    pub fn gram(g: &DMatrix<f64>) -> Result<Self> {
        Self::new(g.transpose() * g)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn is_psd(&self) -> bool {
        symmetric_eigenvalues(self)[0] >= -PSD_TOL * self.m.amax().max(1.0)
    }
}

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&self.values));
        &self.vectors * d * self.vectors.transpose()
    }
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi rotations until the off-diagonal norm drops below `1e-12`
/// times `max(1, ‖M‖_F)`.
pub fn symmetric_eigen(m: &SymMatrix) -> SymmetricEigen {
    let n = m.dim();
    let mut a = m.m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let target = JACOBI_TOL * a.norm().max(1.0);
    for _sweep in 0..100 {
        if off_diagonal_norm(&a) < target {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    SymmetricEigen {
        values: order.iter().map(|&i| a[(i, i)]).collect(),
        vectors: DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]),
    }
}

pub fn symmetric_eigenvalues(m: &SymMatrix) -> Vec<f64> {
    symmetric_eigen(m).values
}

/// The unique symmetric PSD `S` with `S·S = M`. Eigenvalues in `[-1e-10, 0)`
/// (relative to the largest entry) are treated as zero.
pub fn principal_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    let mut e = symmetric_eigen(m);
    let min = e.values[0];
    if min < -PSD_TOL * m.m.amax().max(1.0) {
        return Err(Error::NotPsd(min));
    }
    for v in &mut e.values {
        *v = v.max(0.0).sqrt();
    }
    SymMatrix::new(e.reconstruct())
}

/// Eigenvalues of a general square matrix (real Schur form).
///
/// The QR iteration is capped; when it stalls (it can on matrices with many
/// exact zeros) it is restarted on a Householder-reflected copy `H M H`. The
/// zero matrix, which it never finishes, is answered directly.
pub fn general_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let d = m.nrows();
    if m.iter().all(|&x| x == 0.0) {
        return Ok(vec![Complex64::new(0.0, 0.0); d]);
    }
    let max_iter = 200 * d.max(1);
    for attempt in 0..SCHUR_ATTEMPTS {
        let work = if attempt == 0 {
            m.clone()
        } else {
            let v = DVector::from_fn(d, |i, _| ((attempt * (i + 1)) as f64).sin() + 1.5);
            let h = DMatrix::identity(d, d) - &v * v.transpose() * (2.0 / v.norm_squared());
            &h * m * &h
        };
        if let Some(schur) = Schur::try_new(work, f64::EPSILON, max_iter) {
            return Ok(schur.complex_eigenvalues().iter().map(|z| Complex64::new(z.re, z.im)).collect());
        }
    }
    Err(Error::NoConvergence("real Schur decomposition"))
}

/// Multiset equality of the nonzero values of `a` and `b`: each value with
/// `|λ| > 1e-8·max(1, scale)` must pair with a distinct partner within
/// `1e-8·max(1, |λ|)`. Near-zero leftovers on either side are ignored.
pub fn nonzero_multiset_match(a: &[Complex64], b: &[Complex64], scale: f64) -> bool {
    let zero = SPECTRUM_TOL * scale.max(1.0);
    let keep = |v: &[Complex64]| -> Vec<Complex64> { v.iter().copied().filter(|z| z.norm() > zero).collect() };
    let (mut big, small) = {
        let (x, y) = (keep(a), keep(b));
        if x.len() >= y.len() {
            (x, y)
        } else {
            (y, x)
        }
    };
    for z in &small {
        let tol = SPECTRUM_TOL * z.norm().max(1.0);
        let best = big
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (w - z).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        match best {
            Some((i, dist)) if dist <= tol => {
                big.swap_remove(i);
            }
            _ => return false,
        }
    }
    // Unpaired values must sit at the zero threshold, not inside the spectrum.
    big.iter().all(|z| z.norm() <= 2.0 * zero)
}

/// Whether `ST` and `TS` share their nonzero eigenvalues.
pub fn nonzero_spectrum_match(s: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<bool> {
    if !s.is_square() || s.shape() != t.shape() {
        return Ok(false);
    }
    let (st, ts) = (s * t, t * s);
    let scale = st.norm().max(ts.norm());
    Ok(nonzero_multiset_match(&general_eigenvalues(&st)?, &general_eigenvalues(&ts)?, scale))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsdProductReport {
    /// Minimum eigenvalue of `√A B √A`, which shares the nonzero spectrum of `AB`.
    pub min_eigenvalue: f64,
    /// Ascending spectrum of `√A B √A`.
    pub spectrum: Vec<f64>,
    pub spectra_match: bool,
    pub pass: bool,
}

/// Spectrum of `AB` through the similarity `AB = √A (√A B)`: the nonzero
/// eigenvalues of `AB` are those of the symmetric PSD matrix `√A B √A`.
pub fn psd_product_check(a: &SymMatrix, b: &SymMatrix) -> Result<PsdProductReport> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            what: "PSD pair",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let root = principal_sqrt(a)?;
    if !b.is_psd() {
        return Err(Error::NotPsd(symmetric_eigenvalues(b)[0]));
    }
    let r = root.matrix();
    let c = SymMatrix::new(r.transpose() * b.matrix() * r)?;
    let spectrum = symmetric_eigenvalues(&c);
    let min_eigenvalue = spectrum[0];
    let ab = a.matrix() * b.matrix();
    let ours: Vec<Complex64> = spectrum.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let spectra_match = nonzero_multiset_match(&ours, &general_eigenvalues(&ab)?, ab.norm());
    let pass = spectra_match && min_eigenvalue >= -PRODUCT_TOL;
    Ok(PsdProductReport {
        min_eigenvalue,
        spectrum,
        spectra_match,
        pass,
    })
}

pub fn random_matrix(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng))
}

/// `GᵀG` for Gaussian `G` with `zero_columns` columns zeroed, so the rank is at
/// most `d - zero_columns`.
pub fn random_psd(d: usize, zero_columns: usize, rng: &mut impl Rng) -> Result<SymMatrix> {
    check_dim(d)?;
    let mut g = random_matrix(d, rng);
    for c in rand::seq::index::sample(rng, d, zero_columns.min(d)) {
        g.column_mut(c).fill(0.0);
    }
    SymMatrix::gram(&g)
}
