//! Dense complex linear algebra used throughout the crate.
//!
//! Operators are plain `nalgebra` matrices of `Complex64`. Everything here is a
//! pure function of its inputs; spectral routines return eigenvalues sorted in
//! descending order with ties broken by the solver's original index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Numerical thresholds shared by every routine that needs to decide whether
/// something is zero, equal, or degenerate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Relative threshold below which singular/eigen values count as zero.
    pub rank_tol: f64,
    /// Frobenius-norm threshold for matrix equality.
    pub eq_tol: f64,
    /// Minimal gap separating two eigenvalue clusters.
    pub cluster_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rank_tol: 1e-9,
            eq_tol: 1e-8,
            cluster_tol: 1e-6,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rank_tol", self.rank_tol),
            ("eq_tol", self.eq_tol),
            ("cluster_tol", self.cluster_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidTolerance(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Support projector of a positive semidefinite operator and an isometry onto it.
#[derive(Clone, Debug)]
pub struct SupportData {
    pub projector: ComplexMatrix,
    pub isometry: ComplexMatrix,
    pub rank: usize,
    /// Kept eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

impl SupportData {
    /// Smallest kept (non-zero) eigenvalue, if any.
    pub fn min_nonzero_eigenvalue(&self) -> Option<f64> {
        self.eigenvalues.last().copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub operator: f64,
    pub trace: f64,
    pub frobenius: f64,
}

/// Which tensor factor of a block `C^{d1} ⊗ C^{d2}` to trace out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    First,
    Second,
}

/// Eigenvalues (descending) and matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn diag_real(values: &[f64]) -> ComplexMatrix {
    let n = values.len();
    ComplexMatrix::from_fn(n, n, |i, j| if i == j { c(values[i]) } else { ZERO })
}

/// `|i⟩⟨j|` in dimension `n`.
pub fn unit(n: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = zeros(n, n);
    m[(i, j)] = ONE;
    m
}

pub fn basis_vector(n: usize, i: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(n);
    v[i] = ONE;
    v
}

pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn trace(x: &ComplexMatrix) -> Complex64 {
    x.trace()
}

/// Hilbert-Schmidt inner product `tr(a* b)`.
pub fn hs_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn frobenius(x: &ComplexMatrix) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frobenius_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

pub fn hermitian_defect(x: &ComplexMatrix) -> f64 {
    frobenius_distance(x, &x.adjoint())
}

/// Symmetrize `x` to `(x + x*)/2`; the defect must not exceed `eq_tol`
/// relative to the scale of `x`.
pub fn hermitize(x: &ComplexMatrix, tol: &ToleranceConfig) -> Result<ComplexMatrix> {
    if !x.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let defect = hermitian_defect(x);
    let allowed = tol.eq_tol * frobenius(x).max(1.0);
    if defect > allowed {
        return Err(Error::NotHermitian {
            defect,
            tol: allowed,
        });
    }
    Ok(hermitian_part(x))
}

pub fn hermitian_part(x: &ComplexMatrix) -> ComplexMatrix {
    (x + x.adjoint()).scale(0.5)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
pub fn eigh(x: &ComplexMatrix, tol: &ToleranceConfig) -> Result<Spectrum> {
    let h = hermitize(x, tol)?;
    Ok(eigh_hermitian(h))
}

/// Eigendecomposition of a matrix already known to be Hermitian (its
/// Hermitian part is used regardless).
pub fn eigh_hermitian(h: ComplexMatrix) -> Spectrum {
    let n = h.nrows();
    if n == 0 {
        return Spectrum {
            values: vec![],
            vectors: zeros(0, 0),
        };
    }
    let eig = to_faer(&hermitian_part(&h))
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("Hermitian eigensolver did not converge");
    let (s, u) = (eig.S().column_vector(), eig.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].re.total_cmp(&s[a].re).then(a.cmp(&b)));
    let values = order.iter().map(|&i| s[i].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, k| u[(r, order[k])]);
    Spectrum { values, vectors }
}

pub fn support_of(x: &ComplexMatrix, tol: &ToleranceConfig) -> Result<SupportData> {
    let spec = eigh(x, tol)?;
    let n = x.nrows();
    let max = spec.values.first().copied().unwrap_or(0.0).max(0.0);
    let min = spec.values.last().copied().unwrap_or(0.0);
    if min < -tol.eq_tol * max.max(1.0) {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    let threshold = tol.rank_tol * max;
    let kept: Vec<usize> = (0..n)
        .filter(|&i| max > 0.0 && spec.values[i] > threshold)
        .collect();
    let rank = kept.len();
    let isometry = ComplexMatrix::from_fn(n, rank, |r, k| spec.vectors[(r, kept[k])]);
    let projector = &isometry * isometry.adjoint();
    Ok(SupportData {
        projector,
        isometry,
        rank,
        eigenvalues: kept.iter().map(|&i| spec.values[i]).collect(),
    })
}

fn to_faer(x: &ComplexMatrix) -> faer::Mat<Complex64> {
    faer::Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)])
}

/// Thin SVD `x = U Σ V*` by one-sided Jacobi rotations, singular values in
/// descending order. Left vectors for (numerically) zero singular values are
/// not meaningful.
///
/// Neither nalgebra's nor faer's complex SVD reconstructs some rank-deficient
/// inputs correctly, so every decomposition here goes through this.
struct Svd {
    values: Vec<f64>,
    left: ComplexMatrix,
    right: ComplexMatrix,
}

fn svd(x: &ComplexMatrix) -> Svd {
    let (r, c) = x.shape();
    if c > r {
        let t = svd(&x.adjoint());
        return Svd {
            values: t.values,
            left: t.right,
            right: t.left,
        };
    }
    let col = |m: &ComplexMatrix, j: usize| m.column(j).iter().copied().collect::<Vec<Complex64>>();
    // start from the eigenvectors of x*x so that few sweeps remain
    let v0 = eigh_hermitian(x.adjoint() * x).vectors;
    let b = x * &v0;
    let mut a: Vec<Vec<Complex64>> = (0..c).map(|j| col(&b, j)).collect();
    let mut v: Vec<Vec<Complex64>> = (0..c).map(|j| col(&v0, j)).collect();
    let rotate = |cols: &mut [Vec<Complex64>], p: usize, q: usize, cs: f64, sn: f64, phase: Complex64| {
        let (lo, hi) = cols.split_at_mut(q);
        for (ap, aq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
            let x = *ap;
            let y = *aq * phase.conj();
            *ap = x * cs - y * sn;
            *aq = x * sn + y * cs;
        }
    };
    // columns this small only carry rounding noise
    let floor = {
        let total: f64 = a.iter().flatten().map(|z| z.norm_sqr()).sum();
        1e-28 * total
    };
    let conv = f64::EPSILON * (r as f64).sqrt();
    for _sweep in 0..80 {
        let mut rotated = false;
        let mut sq: Vec<f64> = a.iter().map(|cl| cl.iter().map(|z| z.norm_sqr()).sum()).collect();
        for p in 0..c {
            for q in p + 1..c {
                let (alpha, beta) = (sq[p], sq[q]);
                if alpha <= floor || beta <= floor {
                    continue;
                }
                let gamma: Complex64 = a[p].iter().zip(&a[q]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g == 0.0 || g <= conv * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = if zeta >= 0.0 { 1.0 } else { -1.0 } / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut a, p, q, cs, sn, phase);
                rotate(&mut v, p, q, cs, sn, phase);
                sq[p] = alpha - t * g;
                sq[q] = beta + t * g;
            }
        }
        if !rotated {
            break;
        }
    }
    let a = ComplexMatrix::from_fn(r, c, |i, j| a[j][i]);
    let v = ComplexMatrix::from_fn(c, c, |i, j| v[j][i]);
    let norms: Vec<f64> = (0..c).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let left = ComplexMatrix::from_fn(r, c, |i, k| {
        let j = order[k];
        if norms[j] > 0.0 {
            a[(i, j)] / norms[j]
        } else {
            ZERO
        }
    });
    Svd {
        values: order.iter().map(|&j| norms[j]).collect(),
        left,
        right: ComplexMatrix::from_fn(c, c, |i, k| v[(i, order[k])]),
    }
}

/// Orthonormal basis of the span of the columns of a nearly orthonormal `v`.
fn reorthonormalize(v: &ComplexMatrix) -> ComplexMatrix {
    let k = v.ncols();
    if k == 0 {
        return v.clone();
    }
    let spec = eigh_hermitian(v * v.adjoint());
    spec.vectors.columns(0, k).into_owned()
}

pub fn singular_values(x: &ComplexMatrix) -> Vec<f64> {
    if x.is_empty() {
        return vec![];
    }
    if x.is_square() && hermitian_defect(x) <= 1e-14 * frobenius(x) {
        let mut s: Vec<f64> = eigh_hermitian(x.clone()).values.iter().map(|v| v.abs()).collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        return s;
    }
    svd(x).values
}

pub fn norms(x: &ComplexMatrix) -> Norms {
    let s = singular_values(x);
    Norms {
        operator: s.first().copied().unwrap_or(0.0),
        trace: s.iter().sum(),
        frobenius: s.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

pub fn operator_norm(x: &ComplexMatrix) -> f64 {
    singular_values(x).first().copied().unwrap_or(0.0)
}

pub fn trace_norm(x: &ComplexMatrix) -> f64 {
    singular_values(x).iter().sum()
}

/// Orthonormal basis (as columns) of the column space of `x`, keeping singular
/// values above `rel_tol` times the largest one.
pub fn column_space(x: &ComplexMatrix, rel_tol: f64) -> ComplexMatrix {
    let (rows, cols) = x.shape();
    if rows == 0 || cols == 0 {
        return zeros(rows, 0);
    }
    let d = svd(x);
    let max = d.values.first().copied().unwrap_or(0.0);
    let kept = d.values.iter().filter(|&&v| max > 0.0 && v > rel_tol * max).count();
    reorthonormalize(&d.left.columns(0, kept).into_owned())
}

/// Orthonormal basis (as columns) of the null space of `x`: the complement of
/// the right singular vectors whose singular value exceeds `rel_tol` times the
/// largest one.
pub fn null_space(x: &ComplexMatrix, rel_tol: f64) -> ComplexMatrix {
    let cols = x.ncols();
    if cols == 0 {
        return zeros(0, 0);
    }
    if x.nrows() == 0 {
        return identity(cols);
    }
    orthogonal_complement(&column_space(&x.adjoint(), rel_tol))
}

/// Orthonormal basis of the orthogonal complement of the columns of an isometry.
pub fn orthogonal_complement(isometry: &ComplexMatrix) -> ComplexMatrix {
    let n = isometry.nrows();
    let k = isometry.ncols();
    if k == 0 {
        return identity(n);
    }
    let rest = identity(n) - isometry * isometry.adjoint();
    let spec = eigh_hermitian(rest);
    spec.vectors.columns(0, n.saturating_sub(k)).into_owned()
}

/// Partial isometry of the polar decomposition `x = W |x|`, restricted to the
/// `rank` largest singular directions.
pub fn polar_partial_isometry(x: &ComplexMatrix, rank: usize) -> ComplexMatrix {
    let d = svd(x);
    let k = rank.min(d.values.len());
    d.left.columns(0, k) * d.right.columns(0, k).adjoint()
}

/// `f(x)` for a Hermitian PSD `x`, applied to eigenvalues clamped at zero.
pub fn psd_function(x: &ComplexMatrix, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let spec = eigh_hermitian(x.clone());
    let n = x.nrows();
    let mut out = zeros(n, n);
    for (k, &v) in spec.values.iter().enumerate() {
        let col = spec.vectors.column(k);
        out += (col * col.adjoint()).scale(f(v.max(0.0)));
    }
    out
}

pub fn psd_sqrt(x: &ComplexMatrix) -> ComplexMatrix {
    psd_function(x, f64::sqrt)
}

/// Smallest eigenvalue of the Hermitian part of `x`.
pub fn min_eigenvalue(x: &ComplexMatrix) -> f64 {
    eigh_hermitian(x.clone())
        .values
        .last()
        .copied()
        .unwrap_or(0.0)
}

/// Row-major vectorization `vec(x)[a·cols + b] = x[a, b]`.
pub fn vec_row(x: &ComplexMatrix) -> DVector<Complex64> {
    let (r, c) = x.shape();
    DVector::from_fn(r * c, |k, _| x[(k / c, k % c)])
}

pub fn unvec_row(v: &[Complex64], rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |a, b| v[a * cols + b])
}

/// Partial trace of an operator that is block diagonal with respect to
/// `⊕_k C^{d1_k} ⊗ C^{d2_k}`. Each block is reduced independently and the
/// results are reassembled as a block-diagonal operator.
pub fn partial_trace(
    x: &ComplexMatrix,
    dims: &[(usize, usize)],
    which: Factor,
) -> Result<ComplexMatrix> {
    let total: usize = dims.iter().map(|(a, b)| a * b).sum();
    if !x.is_square() || x.nrows() != total {
        return Err(Error::Dimension(format!(
            "partial trace expects a square operator of dimension {total}, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    for (k, &(d1, d2)) in dims.iter().enumerate() {
        if d1 == 0 || d2 == 0 {
            return Err(Error::Block {
                block: k,
                detail: format!("block dimensions must be positive, got ({d1}, {d2})"),
            });
        }
    }
    let out_dim: usize = dims
        .iter()
        .map(|&(d1, d2)| if which == Factor::Second { d1 } else { d2 })
        .sum();
    let mut out = zeros(out_dim, out_dim);
    let (mut offset, mut out_offset) = (0usize, 0usize);
    for &(d1, d2) in dims {
        let keep = if which == Factor::Second { d1 } else { d2 };
        for a in 0..keep {
            for b in 0..keep {
                let mut s = ZERO;
                for t in 0..(if which == Factor::Second { d2 } else { d1 }) {
                    let (r, c) = match which {
                        Factor::Second => (a * d2 + t, b * d2 + t),
                        Factor::First => (t * d2 + a, t * d2 + b),
                    };
                    s += x[(offset + r, offset + c)];
                }
                out[(out_offset + a, out_offset + b)] = s;
            }
        }
        offset += d1 * d2;
        out_offset += keep;
    }
    Ok(out)
}

/// Block-diagonal direct sum.
pub fn direct_sum(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Unnormalized maximally entangled projector `Σ_{ij} |ii⟩⟨jj|` on `C^d ⊗ C^d`.
pub fn max_entangled_unnormalized(d: usize) -> ComplexMatrix {
    let mut m = zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            m[(i * d + i, j * d + j)] = ONE;
        }
    }
    m
}
