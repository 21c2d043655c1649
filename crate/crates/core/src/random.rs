//! Seeded sampling of matrices, states, isometries and channels.

use nalgebra::QR;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::Channel;
use crate::linalg::{identity, ComplexMatrix};

pub type SeededRng = ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 0x1DE3_C4A2_0000_0001;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Matrix of i.i.d. standard complex Gaussian entries.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(gaussian(rng), gaussian(rng)) * std::f64::consts::FRAC_1_SQRT_2
    })
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    let g = random_matrix(rng, n, n);
    (&g + g.adjoint()).scale(0.5)
}

/// Wishart sample `g g*`, optionally normalized to unit trace.
pub fn random_psd(rng: &mut impl Rng, n: usize, unit_trace: bool) -> ComplexMatrix {
    let g = random_matrix(rng, n, n);
    let p = &g * g.adjoint();
    if unit_trace {
        let t = p.trace().re;
        p.unscale(t)
    } else {
        p
    }
}

pub fn random_density(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    random_psd(rng, n, true)
}

/// Haar-distributed isometry `C^cols → C^rows` (QR with phase correction).
pub fn random_isometry(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    assert!(cols <= rows, "isometry needs cols <= rows");
    if cols == 0 {
        return ComplexMatrix::zeros(rows, 0);
    }
    let g = random_matrix(rng, rows, cols);
    let qr = QR::new(g);
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..cols {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        let mut col = q.column_mut(k);
        col *= phase;
    }
    q
}

pub fn random_unitary(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    random_isometry(rng, n, n)
}

/// Random channel with `kraus_count` Kraus operators, built from a Haar
/// isometry `C^dim_in → C^{kraus_count·dim_out}` so trace preservation is exact
/// up to rounding.
pub fn random_channel(
    rng: &mut impl Rng,
    dim_in: usize,
    dim_out: usize,
    kraus_count: usize,
) -> Channel {
    let kraus_count = kraus_count.max(1);
    let stacked_rows = kraus_count * dim_out;
    let v = if stacked_rows >= dim_in {
        random_isometry(rng, stacked_rows, dim_in)
    } else {
        // not enough room for an isometry; fall back to a larger Kraus count
        let needed = dim_in.div_ceil(dim_out);
        return random_channel(rng, dim_in, dim_out, needed);
    };
    let kraus = (0..kraus_count)
        .map(|a| v.rows(a * dim_out, dim_out).into_owned())
        .collect();
    Channel::from_kraus_unchecked(dim_in, dim_out, kraus)
}

/// Random unitary conjugation channel.
pub fn random_unitary_channel(rng: &mut impl Rng, n: usize) -> Channel {
    Channel::from_kraus_unchecked(n, n, vec![random_unitary(rng, n)])
}

/// Random element in the span of `basis` with real Gaussian coefficients.
pub fn random_combination(rng: &mut impl Rng, basis: &[ComplexMatrix]) -> ComplexMatrix {
    let n = basis.first().map(|b| b.nrows()).unwrap_or(0);
    let mut out = ComplexMatrix::zeros(n, n);
    for b in basis {
        out += b.scale(gaussian(rng));
    }
    out
}

/// Random complex combination of `basis`.
pub fn random_complex_combination(
    rng: &mut impl Rng,
    basis: &[ComplexMatrix],
) -> ComplexMatrix {
    let n = basis.first().map(|b| b.nrows()).unwrap_or(0);
    let mut out = ComplexMatrix::zeros(n, n);
    for b in basis {
        out += b * Complex64::new(gaussian(rng), gaussian(rng));
    }
    out
}

pub fn random_unit_vector_matrix(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    let v = random_matrix(rng, n, 1);
    let norm = v.norm();
    v.unscale(norm)
}

#[allow(dead_code)]
pub(crate) fn is_unitary(u: &ComplexMatrix, tol: f64) -> bool {
    crate::linalg::frobenius_distance(&(u.adjoint() * u), &identity(u.ncols())) < tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isometries_are_isometric() {
        let mut rng = rng_from_seed(1);
        let v = random_isometry(&mut rng, 5, 3);
        assert!(is_unitary(&v, 1e-12));
    }

    #[test]
    fn random_channels_are_trace_preserving() {
        let mut rng = rng_from_seed(2);
        for (a, b, k) in [(2, 3, 2), (4, 2, 1), (3, 3, 4)] {
            let ch = random_channel(&mut rng, a, b, k);
            assert!(ch.trace_preservation_residual() < 1e-12);
        }
    }

    #[test]
    fn seeding_is_deterministic() {
        let a = random_matrix(&mut rng_from_seed(9), 2, 2);
        let b = random_matrix(&mut rng_from_seed(9), 2, 2);
        assert_eq!(a, b);
    }
}
