//! Quantum channels in Kraus form, their Choi matrices, and constructors for
//! the standard and block-idempotent families.

use std::sync::OnceLock;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, c, frobenius_distance, identity, orthogonal_complement, tensor_product, unit, zeros,
    ComplexMatrix, ToleranceConfig,
};
use crate::random::{random_isometry, rng_from_seed};

/// A completely positive map `L(C^dim_in) → L(C^dim_out)` given by Kraus
/// operators. Constructed through [`Channel::new`] it is also trace preserving.
///
/// The Choi matrix is computed at most once and then cached.
#[derive(Clone, Debug)]
pub struct Channel {
    dim_in: usize,
    dim_out: usize,
    kraus: Vec<ComplexMatrix>,
    choi_cache: OnceLock<ComplexMatrix>,
}

/// Choi matrix with entries `J[(i,k),(j,l)] = ⟨k|Φ(|i⟩⟨j|)|l⟩`, composite
/// index `i·dim_out + k` (input factor first).
#[derive(Clone, Debug)]
pub struct ChoiMatrix {
    pub matrix: ComplexMatrix,
    pub dim_in: usize,
    pub dim_out: usize,
}

impl ChoiMatrix {
    /// Partial trace over the output factor; the identity for trace-preserving maps.
    pub fn output_marginal(&self) -> ComplexMatrix {
        linalg::partial_trace(
            &self.matrix,
            &[(self.dim_in, self.dim_out)],
            linalg::Factor::Second,
        )
        .expect("Choi dimensions are consistent by construction")
    }
}

/// Outcome of an equality test between two maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equality {
    pub equal: bool,
    pub residual: f64,
}

impl Channel {
    /// Validated constructor: checks shapes and trace preservation.
    pub fn new(
        dim_in: usize,
        dim_out: usize,
        kraus: Vec<ComplexMatrix>,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        if dim_in == 0 || dim_out == 0 {
            return Err(Error::Dimension("channel dimensions must be positive".into()));
        }
        if kraus.is_empty() {
            return Err(Error::InvalidArgument("a channel needs at least one Kraus operator".into()));
        }
        for (i, k) in kraus.iter().enumerate() {
            if k.shape() != (dim_out, dim_in) {
                return Err(Error::Dimension(format!(
                    "Kraus operator {i} has shape {}x{}, expected {dim_out}x{dim_in}",
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        let ch = Self::from_kraus_unchecked(dim_in, dim_out, kraus);
        let residual = ch.trace_preservation_residual();
        if residual > tol.eq_tol * (dim_in as f64).sqrt().max(1.0) {
            return Err(Error::NotTracePreserving { residual });
        }
        Ok(ch)
    }

    /// Builds a completely positive map without checking trace preservation.
    pub fn from_kraus_unchecked(dim_in: usize, dim_out: usize, kraus: Vec<ComplexMatrix>) -> Self {
        debug_assert!(kraus.iter().all(|k| k.shape() == (dim_out, dim_in)));
        Self {
            dim_in,
            dim_out,
            kraus,
            choi_cache: OnceLock::new(),
        }
    }

    /// Kraus operators from the eigendecomposition of a PSD Choi matrix.
    /// Eigenvalues below `rank_tol` (relative) are dropped.
    pub fn from_choi(
        dim_in: usize,
        dim_out: usize,
        choi: &ComplexMatrix,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        let ch = Self::from_choi_cp(dim_in, dim_out, choi, tol)?;
        let residual = ch.trace_preservation_residual();
        if residual > tol.eq_tol * (dim_in as f64).sqrt().max(1.0) {
            return Err(Error::NotTracePreserving { residual });
        }
        Ok(ch)
    }

    /// Like [`Channel::from_choi`] but only requires complete positivity.
    pub fn from_choi_cp(
        dim_in: usize,
        dim_out: usize,
        choi: &ComplexMatrix,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        let n = dim_in * dim_out;
        if choi.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "Choi matrix must be {n}x{n}, got {}x{}",
                choi.nrows(),
                choi.ncols()
            )));
        }
        let spec = linalg::eigh(choi, tol)?;
        let max = spec.values.first().copied().unwrap_or(0.0).max(0.0);
        let min = spec.values.last().copied().unwrap_or(0.0);
        if min < -tol.eq_tol * max.max(1.0) {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        let mut kraus = Vec::new();
        for (idx, &lam) in spec.values.iter().enumerate() {
            if lam <= tol.rank_tol * max || lam <= 0.0 {
                break;
            }
            let s = lam.sqrt();
            let v = spec.vectors.column(idx);
            kraus.push(ComplexMatrix::from_fn(dim_out, dim_in, |k, i| {
                v[i * dim_out + k] * s
            }));
        }
        if kraus.is_empty() {
            kraus.push(zeros(dim_out, dim_in));
        }
        Ok(Self::from_kraus_unchecked(dim_in, dim_out, kraus))
    }

    /// Channel from a Schrödinger-picture linear map given as a closure.
    pub fn from_map(
        dim_in: usize,
        dim_out: usize,
        f: impl Fn(&ComplexMatrix) -> ComplexMatrix,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        Self::from_choi(dim_in, dim_out, &choi_of_map(dim_in, dim_out, f), tol)
    }

    /// Channel whose Heisenberg-picture adjoint is `f : L(C^dim_out) → L(C^dim_in)`.
    /// `f` must be unital and completely positive.
    pub fn from_heisenberg(
        dim_in: usize,
        dim_out: usize,
        f: impl Fn(&ComplexMatrix) -> ComplexMatrix,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        Self::from_choi(dim_in, dim_out, &choi_of_adjoint(dim_in, dim_out, f), tol)
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn into_kraus(self) -> Vec<ComplexMatrix> {
        self.kraus
    }

    pub fn apply(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        if x.shape() != (self.dim_in, self.dim_in) {
            return Err(Error::Dimension(format!(
                "input must be {0}x{0}, got {1}x{2}",
                self.dim_in,
                x.nrows(),
                x.ncols()
            )));
        }
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = zeros(self.dim_out, self.dim_out);
        for k in &self.kraus {
            out += k * x * k.adjoint();
        }
        out
    }

    /// Heisenberg picture: `y ↦ Σ K* y K`.
    pub fn adjoint_apply(&self, y: &ComplexMatrix) -> Result<ComplexMatrix> {
        if y.shape() != (self.dim_out, self.dim_out) {
            return Err(Error::Dimension(format!(
                "input must be {0}x{0}, got {1}x{2}",
                self.dim_out,
                y.nrows(),
                y.ncols()
            )));
        }
        Ok(self.adjoint_apply_unchecked(y))
    }

    pub(crate) fn adjoint_apply_unchecked(&self, y: &ComplexMatrix) -> ComplexMatrix {
        let mut out = zeros(self.dim_in, self.dim_in);
        for k in &self.kraus {
            out += k.adjoint() * y * k;
        }
        out
    }

    /// `(Φ ⊗ Id_aux)(σ)` for `σ` on `C^dim_in ⊗ C^aux_dim`.
    pub fn apply_extended(&self, sigma: &ComplexMatrix, aux_dim: usize) -> Result<ComplexMatrix> {
        let n = self.dim_in * aux_dim;
        if sigma.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "extended input must be {n}x{n}, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let id = identity(aux_dim);
        let m = self.dim_out * aux_dim;
        let mut out = zeros(m, m);
        for k in &self.kraus {
            let kk = tensor_product(k, &id);
            out += &kk * sigma * kk.adjoint();
        }
        Ok(out)
    }

    pub fn choi(&self) -> &ComplexMatrix {
        self.choi_cache.get_or_init(|| {
            let n = self.dim_in * self.dim_out;
            let mut j = zeros(n, n);
            for k in &self.kraus {
                let v = DVector::from_fn(n, |idx, _| k[(idx % self.dim_out, idx / self.dim_out)]);
                j += &v * v.adjoint();
            }
            j
        })
    }

    pub fn choi_matrix(&self) -> ChoiMatrix {
        ChoiMatrix {
            matrix: self.choi().clone(),
            dim_in: self.dim_in,
            dim_out: self.dim_out,
        }
    }

    /// Row-major superoperator matrix `Σ K ⊗ conj(K)`, acting on
    /// row-major vectorizations.
    pub fn superoperator(&self) -> ComplexMatrix {
        let mut s = zeros(self.dim_out * self.dim_out, self.dim_in * self.dim_in);
        for k in &self.kraus {
            s += tensor_product(k, &k.map(|z| z.conj()));
        }
        s
    }

    /// `‖Σ K* K − 𝟙‖_F`.
    pub fn trace_preservation_residual(&self) -> f64 {
        let mut s = zeros(self.dim_in, self.dim_in);
        for k in &self.kraus {
            s += k.adjoint() * k;
        }
        frobenius_distance(&s, &identity(self.dim_in))
    }

    pub fn choi_min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(self.choi())
    }

    /// Trace preservation and Choi positivity, both within `eq_tol`.
    pub fn check_cptp(&self, tol: &ToleranceConfig) -> Result<()> {
        let residual = self.trace_preservation_residual();
        if residual > tol.eq_tol * (self.dim_in as f64).sqrt().max(1.0) {
            return Err(Error::NotTracePreserving { residual });
        }
        let min = self.choi_min_eigenvalue();
        if min < -tol.eq_tol {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(())
    }

    /// Re-derives a minimal Kraus set from the Choi matrix.
    pub fn compress(&self, tol: &ToleranceConfig) -> Result<Self> {
        Self::from_choi_cp(self.dim_in, self.dim_out, self.choi(), tol)
    }
}

/// Choi matrix `Σ_{ij} |i⟩⟨j| ⊗ f(|i⟩⟨j|)` of an arbitrary linear map.
pub fn choi_of_map(
    dim_in: usize,
    dim_out: usize,
    f: impl Fn(&ComplexMatrix) -> ComplexMatrix,
) -> ComplexMatrix {
    let n = dim_in * dim_out;
    let mut j = zeros(n, n);
    for i in 0..dim_in {
        for jj in 0..dim_in {
            let img = f(&unit(dim_in, i, jj));
            j.view_mut((i * dim_out, jj * dim_out), (dim_out, dim_out))
                .copy_from(&img);
        }
    }
    j
}

/// Choi matrix of the Schrödinger map whose adjoint is `f : L(out) → L(in)`:
/// `J[(i,k),(j,l)] = f(|l⟩⟨k|)[j,i]`.
pub fn choi_of_adjoint(
    dim_in: usize,
    dim_out: usize,
    f: impl Fn(&ComplexMatrix) -> ComplexMatrix,
) -> ComplexMatrix {
    let n = dim_in * dim_out;
    let mut j = zeros(n, n);
    for k in 0..dim_out {
        for l in 0..dim_out {
            let img = f(&unit(dim_out, l, k));
            for i in 0..dim_in {
                for jj in 0..dim_in {
                    j[(i * dim_out + k, jj * dim_out + l)] = img[(jj, i)];
                }
            }
        }
    }
    j
}

/// `c2 ∘ c1`.
pub fn compose(c2: &Channel, c1: &Channel) -> Result<Channel> {
    if c1.dim_out != c2.dim_in {
        return Err(Error::Dimension(format!(
            "cannot compose: inner output dimension {} differs from outer input dimension {}",
            c1.dim_out, c2.dim_in
        )));
    }
    let mut kraus = Vec::with_capacity(c1.kraus.len() * c2.kraus.len());
    for b in &c2.kraus {
        for a in &c1.kraus {
            kraus.push(b * a);
        }
    }
    Ok(Channel::from_kraus_unchecked(c1.dim_in, c2.dim_out, kraus))
}

/// Composition followed by Kraus compression when the Kraus count grows past
/// the Choi rank bound.
pub fn compose_compressed(c2: &Channel, c1: &Channel, tol: &ToleranceConfig) -> Result<Channel> {
    let composed = compose(c2, c1)?;
    if composed.kraus.len() > composed.dim_in * composed.dim_out {
        composed.compress(tol)
    } else {
        Ok(composed)
    }
}

pub fn tensor(c1: &Channel, c2: &Channel) -> Channel {
    let mut kraus = Vec::with_capacity(c1.kraus.len() * c2.kraus.len());
    for a in &c1.kraus {
        for b in &c2.kraus {
            kraus.push(tensor_product(a, b));
        }
    }
    Channel::from_kraus_unchecked(c1.dim_in * c2.dim_in, c1.dim_out * c2.dim_out, kraus)
}

pub fn tensor_power(c: &Channel, n: usize) -> Result<Channel> {
    if n == 0 {
        return Err(Error::InvalidArgument("tensor power requires n >= 1".into()));
    }
    let mut out = c.clone();
    for _ in 1..n {
        out = tensor(&out, c);
    }
    Ok(out)
}

pub fn channels_equal(c1: &Channel, c2: &Channel, tol: &ToleranceConfig) -> Result<Equality> {
    if c1.dim_in != c2.dim_in || c1.dim_out != c2.dim_out {
        return Err(Error::Dimension(format!(
            "cannot compare {}→{} with {}→{}",
            c1.dim_in, c1.dim_out, c2.dim_in, c2.dim_out
        )));
    }
    let residual = frobenius_distance(c1.choi(), c2.choi());
    Ok(Equality {
        equal: residual <= tol.eq_tol,
        residual,
    })
}

pub fn is_idempotent(c: &Channel, tol: &ToleranceConfig) -> Result<Equality> {
    if c.dim_in != c.dim_out {
        return Err(Error::Dimension(
            "idempotence needs equal input and output dimensions".into(),
        ));
    }
    // Φ∘Φ through the Choi matrix avoids squaring the Kraus count
    let n = c.dim_in;
    let twice = choi_of_map(n, n, |x| c.apply_unchecked(&c.apply_unchecked(x)));
    let residual = frobenius_distance(c.choi(), &twice);
    Ok(Equality {
        equal: residual <= tol.eq_tol,
        residual,
    })
}

pub fn identity_channel(d: usize) -> Channel {
    Channel::from_kraus_unchecked(d, d, vec![identity(d)])
}

/// Completely dephasing channel: keeps the diagonal.
pub fn dephasing(d: usize) -> Channel {
    Channel::from_kraus_unchecked(d, d, (0..d).map(|i| unit(d, i, i)).collect())
}

/// `x ↦ tr(x) ρ`.
pub fn replacer(d: usize, rho: &ComplexMatrix, tol: &ToleranceConfig) -> Result<Channel> {
    check_density(rho, tol)?;
    let spec = linalg::eigh(rho, tol)?;
    let m = rho.nrows();
    let mut kraus = Vec::new();
    for (a, &p) in spec.values.iter().enumerate() {
        if p <= tol.rank_tol {
            continue;
        }
        let psi = spec.vectors.column(a);
        for i in 0..d {
            let mut k = zeros(m, d);
            k.set_column(i, &(psi * c(p.sqrt())));
            kraus.push(k);
        }
    }
    Ok(Channel::from_kraus_unchecked(d, m, kraus))
}

pub fn check_density(rho: &ComplexMatrix, tol: &ToleranceConfig) -> Result<()> {
    if !rho.is_square() || rho.nrows() == 0 {
        return Err(Error::InvalidState("density operator must be square and non-empty".into()));
    }
    let h = linalg::hermitize(rho, tol).map_err(|e| Error::InvalidState(e.to_string()))?;
    let t = h.trace().re;
    if (t - 1.0).abs() > tol.eq_tol {
        return Err(Error::InvalidState(format!("trace is {t}, expected 1")));
    }
    let min = linalg::min_eigenvalue(&h);
    if min < -tol.eq_tol {
        return Err(Error::InvalidState(format!(
            "smallest eigenvalue is {min:.3e}"
        )));
    }
    Ok(())
}

/// One block `L(C^d) ⊗ ρ` of a block-idempotent channel.
#[derive(Clone, Debug)]
pub struct BlockData {
    pub d: usize,
    pub m: usize,
    pub rho: ComplexMatrix,
}

/// Block data plus ambient space for [`make_block_idempotent`].
#[derive(Clone, Debug)]
pub struct BlockSpec {
    pub blocks: Vec<BlockData>,
    pub ambient_dim: usize,
    /// Isometry `C^{Σ d_k m_k} → C^ambient_dim`; generated from the seed when absent.
    pub embedding_isometry: Option<ComplexMatrix>,
}

impl BlockSpec {
    pub fn support_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.d * b.m).sum()
    }

    pub fn validate(&self, tol: &ToleranceConfig) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::InvalidArgument("block spec needs at least one block".into()));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.d == 0 || b.m == 0 {
                return Err(Error::Block {
                    block: k,
                    detail: "d and m must be positive".into(),
                });
            }
            if b.rho.shape() != (b.m, b.m) {
                return Err(Error::Block {
                    block: k,
                    detail: format!("rho must be {0}x{0}", b.m),
                });
            }
            check_density(&b.rho, tol).map_err(|e| Error::Block {
                block: k,
                detail: e.to_string(),
            })?;
        }
        let r = self.support_dim();
        if r > self.ambient_dim {
            return Err(Error::Dimension(format!(
                "blocks need dimension {r} but ambient dimension is {}",
                self.ambient_dim
            )));
        }
        if let Some(v) = &self.embedding_isometry {
            if v.shape() != (self.ambient_dim, r) {
                return Err(Error::Dimension(format!(
                    "embedding isometry must be {}x{r}",
                    self.ambient_dim
                )));
            }
            let defect = frobenius_distance(&(v.adjoint() * v), &identity(r));
            if defect > tol.eq_tol {
                return Err(Error::InvalidArgument(format!(
                    "embedding is not an isometry (defect {defect:.3e})"
                )));
            }
        }
        Ok(())
    }
}

/// Kraus operators of `x ↦ Σ_k tr_{k,2}(P_k x P_k) ⊗ ρ_k` on
/// `⊕_k C^{d_k} ⊗ C^{m_k}` (blocks laid out consecutively, index `u·m_k + β`).
pub fn block_form_kraus(blocks: &[BlockData], tol: &ToleranceConfig) -> Result<Vec<ComplexMatrix>> {
    let r: usize = blocks.iter().map(|b| b.d * b.m).sum();
    let mut kraus = Vec::new();
    let mut offset = 0;
    for b in blocks {
        let rs = linalg::eigh(&b.rho, tol)?;
        let max = rs.values.first().copied().unwrap_or(0.0);
        for (a, &p) in rs.values.iter().enumerate() {
            if p <= tol.rank_tol * max.max(1.0) {
                continue;
            }
            let psi = rs.vectors.column(a);
            let s = p.sqrt();
            for beta_in in 0..b.m {
                let mut k = zeros(r, r);
                for u in 0..b.d {
                    for beta in 0..b.m {
                        k[(offset + u * b.m + beta, offset + u * b.m + beta_in)] = psi[beta] * s;
                    }
                }
                kraus.push(k);
            }
        }
        offset += b.d * b.m;
    }
    Ok(kraus)
}

/// Idempotent channel `x ↦ V F̂(V* x V) V* + tr((𝟙−e)x) σ₁` where
/// `F̂(x) = Σ_k tr_{k,2}(P_k x P_k) ⊗ ρ_k` on `⊕ C^{d_k} ⊗ C^{m_k}`, `e = VV*`
/// and `σ₁ = V(𝟙/d₁ ⊗ ρ₁)V*` sits in the first block.
pub fn make_block_idempotent(
    spec: &BlockSpec,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<Channel> {
    spec.validate(tol)?;
    let r = spec.support_dim();
    let n = spec.ambient_dim;
    let v = match &spec.embedding_isometry {
        Some(v) => v.clone(),
        None => random_isometry(&mut rng_from_seed(seed), n, r),
    };

    let mut kraus: Vec<ComplexMatrix> = block_form_kraus(&spec.blocks, tol)?
        .into_iter()
        .map(|k| &v * k * v.adjoint())
        .collect();

    if r < n {
        let complement = orthogonal_complement(&v);
        let first = &spec.blocks[0];
        let mut sigma = zeros(r, r);
        let local = tensor_product(&identity(first.d).unscale(first.d as f64), &first.rho);
        sigma
            .view_mut((0, 0), (first.d * first.m, first.d * first.m))
            .copy_from(&local);
        let ss = linalg::eigh(&sigma, tol)?;
        for (a, &q) in ss.values.iter().enumerate() {
            if q <= tol.rank_tol {
                continue;
            }
            let phi = &v * ss.vectors.column(a) * Complex64::new(q.sqrt(), 0.0);
            for col in 0..complement.ncols() {
                kraus.push(&phi * complement.column(col).adjoint());
            }
        }
    }
    if kraus.is_empty() {
        kraus.push(zeros(n, n));
    }
    let ch = Channel::from_kraus_unchecked(n, n, kraus);
    ch.check_cptp(tol)?;
    Ok(ch)
}

/// `J(c1 ⊗ c2)` rebuilt from `J(c1) ⊗ J(c2)` by permuting `(i1,k1,i2,k2)` to
/// `(i1,i2,k1,k2)`.
pub fn tensor_choi_from_factors(c1: &Channel, c2: &Channel) -> ComplexMatrix {
    let (a1, b1, a2, b2) = (c1.dim_in, c1.dim_out, c2.dim_in, c2.dim_out);
    let big = tensor_product(c1.choi(), c2.choi());
    let n = a1 * a2 * b1 * b2;
    let src = |idx: usize| {
        // target layout ((i1 i2), (k1 k2))
        let k = idx % (b1 * b2);
        let i = idx / (b1 * b2);
        let (i1, i2) = (i / a2, i % a2);
        let (k1, k2) = (k / b2, k % b2);
        (i1 * b1 + k1) * (a2 * b2) + (i2 * b2 + k2)
    };
    let mut out = zeros(n, n);
    for r in 0..n {
        let sr = src(r);
        for cc in 0..n {
            out[(r, cc)] = big[(sr, src(cc))];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag_real, max_entangled_unnormalized};
    use crate::random::{random_channel, random_density, random_matrix, random_unitary_channel};

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    #[test]
    fn apply_examples() {
        let mut rng = rng_from_seed(1);
        let x = random_matrix(&mut rng, 3, 3);
        assert_eq!(identity_channel(3).apply(&x).unwrap(), x);

        let y = ComplexMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        assert_eq!(dephasing(2).apply(&y).unwrap(), diag_real(&[1.0, 4.0]));

        let r = replacer(2, &diag_real(&[1.0, 0.0]), &tol()).unwrap();
        let out = r.apply(&identity(2)).unwrap();
        assert!(frobenius_distance(&out, &diag_real(&[2.0, 0.0])) < 1e-14);
        assert!(r.apply(&identity(3)).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let mut rng = rng_from_seed(2);
        let ch = random_channel(&mut rng, 3, 2, 3);
        let u = ch.adjoint_apply(&identity(2)).unwrap();
        assert!(frobenius_distance(&u, &identity(3)) < 1e-12);

        let y = random_matrix(&mut rng, 3, 3);
        let d = dephasing(3);
        assert!(frobenius_distance(&d.adjoint_apply(&y).unwrap(), &d.apply(&y).unwrap()) < 1e-15);

        let x = random_matrix(&mut rng, 3, 3);
        let y = random_matrix(&mut rng, 2, 2);
        let lhs = linalg::hs_inner(&ch.apply(&x).unwrap(), &y);
        let rhs = linalg::hs_inner(&x, &ch.adjoint_apply(&y).unwrap());
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn composition_and_tensor_examples() {
        let mut rng = rng_from_seed(3);
        let ch = random_channel(&mut rng, 2, 3, 2);
        let composed = compose(&identity_channel(3), &ch).unwrap();
        assert!(channels_equal(&composed, &ch, &tol()).unwrap().equal);
        assert!(compose(&ch, &ch).is_err());

        let dd = tensor(&dephasing(2), &dephasing(2));
        assert!(channels_equal(&dd, &dephasing(4), &tol()).unwrap().equal);

        let id3 = tensor_power(&identity_channel(2), 3).unwrap();
        assert!(channels_equal(&id3, &identity_channel(8), &tol()).unwrap().equal);
        assert!(tensor_power(&ch, 0).is_err());
    }

    #[test]
    fn choi_examples() {
        let ch = dephasing(3);
        let eq = channels_equal(&ch, &ch, &tol()).unwrap();
        assert!(eq.equal && eq.residual == 0.0);

        let eq = channels_equal(&identity_channel(2), &dephasing(2), &tol()).unwrap();
        assert!(!eq.equal);
        assert!((eq.residual - 2f64.sqrt()).abs() < 1e-14);

        assert_eq!(identity_channel(2).choi(), &max_entangled_unnormalized(2));
    }

    #[test]
    fn choi_marginal_is_identity_for_channels() {
        let ch = random_channel(&mut rng_from_seed(4), 3, 2, 2);
        let marg = ch.choi_matrix().output_marginal();
        assert!(frobenius_distance(&marg, &identity(3)) < 1e-12);
    }

    #[test]
    fn idempotence_examples() {
        assert!(is_idempotent(&dephasing(4), &tol()).unwrap().equal);
        assert!(is_idempotent(&identity_channel(3), &tol()).unwrap().equal);
        let u = random_unitary_channel(&mut rng_from_seed(5), 3);
        let eq = is_idempotent(&u, &tol()).unwrap();
        assert!(!eq.equal && eq.residual > 0.1);
    }

    #[test]
    fn choi_roundtrip_through_kraus() {
        let ch = random_channel(&mut rng_from_seed(6), 2, 3, 4);
        let back = Channel::from_choi(2, 3, ch.choi(), &tol()).unwrap();
        assert!(back.kraus().len() <= 6);
        assert!(channels_equal(&ch, &back, &tol()).unwrap().equal);
    }

    #[test]
    fn heisenberg_constructor_matches_adjoint() {
        let ch = random_channel(&mut rng_from_seed(7), 3, 2, 2);
        let back = Channel::from_heisenberg(3, 2, |y| ch.adjoint_apply(y).unwrap(), &tol()).unwrap();
        assert!(channels_equal(&ch, &back, &tol()).unwrap().residual < 1e-12);
    }

    #[test]
    fn block_idempotent_small_cases() {
        let spec = BlockSpec {
            blocks: vec![BlockData { d: 1, m: 1, rho: identity(1) }],
            ambient_dim: 2,
            embedding_isometry: None,
        };
        let ch = make_block_idempotent(&spec, 1, &tol()).unwrap();
        assert!(is_idempotent(&ch, &tol()).unwrap().equal);
        // replacer: every input lands on the same state
        let a = ch.apply(&unit(2, 0, 0)).unwrap();
        let b = ch.apply(&unit(2, 1, 1)).unwrap();
        assert!(frobenius_distance(&a, &b) < 1e-12);

        let spec = BlockSpec {
            blocks: vec![BlockData { d: 2, m: 1, rho: identity(1) }],
            ambient_dim: 2,
            embedding_isometry: None,
        };
        let ch = make_block_idempotent(&spec, 2, &tol()).unwrap();
        assert!(channels_equal(&ch, &identity_channel(2), &tol()).unwrap().equal);
    }

    #[test]
    fn block_idempotent_rejects_bad_states() {
        let spec = BlockSpec {
            blocks: vec![BlockData { d: 1, m: 2, rho: diag_real(&[0.7, 0.7]) }],
            ambient_dim: 2,
            embedding_isometry: None,
        };
        assert!(matches!(
            make_block_idempotent(&spec, 0, &tol()),
            Err(Error::Block { block: 0, .. })
        ));
    }

    #[test]
    fn block_idempotent_with_complement_is_idempotent() {
        let mut rng = rng_from_seed(8);
        let spec = BlockSpec {
            blocks: vec![
                BlockData { d: 2, m: 3, rho: random_density(&mut rng, 3) },
                BlockData { d: 1, m: 1, rho: identity(1) },
            ],
            ambient_dim: 9,
            embedding_isometry: None,
        };
        let ch = make_block_idempotent(&spec, 3, &tol()).unwrap();
        let eq = is_idempotent(&ch, &tol()).unwrap();
        assert!(eq.equal, "residual {}", eq.residual);
    }

    #[test]
    fn compose_two_ways() {
        let mut rng = rng_from_seed(9);
        let c1 = random_channel(&mut rng, 2, 3, 2);
        let c2 = random_channel(&mut rng, 3, 2, 3);
        let direct = compose(&c2, &c1).unwrap();
        let mut via = zeros(4, 4);
        for k in c2.kraus() {
            let kk = tensor_product(&identity(2), k);
            via += &kk * c1.choi() * kk.adjoint();
        }
        assert!(frobenius_distance(direct.choi(), &via) < 1e-12);
    }

    #[test]
    fn tensor_choi_is_permuted_product() {
        let mut rng = rng_from_seed(10);
        let c1 = random_channel(&mut rng, 2, 3, 2);
        let c2 = random_channel(&mut rng, 3, 2, 2);
        let t = tensor(&c1, &c2);
        assert!(frobenius_distance(t.choi(), &tensor_choi_from_factors(&c1, &c2)) < 1e-12);
    }
}
