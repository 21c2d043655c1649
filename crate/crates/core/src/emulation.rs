//! Zero-error emulation `F^{⊗k} = D ∘ G^{⊗n} ∘ E` from subunital embeddings of
//! fixed-point algebras.

use serde::{Deserialize, Serialize};

use crate::channel::{self, compose_compressed, tensor_power, Channel};
use crate::error::{Error, Result};
use crate::linalg::{
    self, c, direct_sum, min_eigenvalue, frobenius_distance, identity, tensor_product, zeros,
    ComplexMatrix, ToleranceConfig,
};
use crate::random::DEFAULT_SEED;
use crate::structure::{analyze, conversion_channels, Analysis, IdempotentDecomposition, ShapeVector};

pub const DEFAULT_BUDGET: usize = 64;
pub const MAX_BUDGET: usize = 256;

/// Multiplicity data of an embedding `⊕ M_{d_i} → ⊕ M_{D_j}`; row `j` is a
/// target block, column `i` a source block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingPlan {
    pub source_dims: Vec<usize>,
    pub target_dims: Vec<usize>,
    pub multiplicity: Vec<Vec<usize>>,
}

impl EmbeddingPlan {
    pub fn validate(&self) -> Result<()> {
        if self.multiplicity.len() != self.target_dims.len()
            || self
                .multiplicity
                .iter()
                .any(|row| row.len() != self.source_dims.len())
        {
            return Err(Error::Dimension("multiplicity matrix has the wrong shape".into()));
        }
        for (j, row) in self.multiplicity.iter().enumerate() {
            let used: usize = row.iter().zip(&self.source_dims).map(|(n, d)| n * d).sum();
            if used > self.target_dims[j] {
                return Err(Error::Block {
                    block: j,
                    detail: format!("uses {used} of {} dimensions", self.target_dims[j]),
                });
            }
        }
        for i in 0..self.source_dims.len() {
            if self.multiplicity.iter().all(|row| row[i] == 0) {
                return Err(Error::InvalidArgument(format!("source block {i} is not embedded")));
            }
        }
        Ok(())
    }

    /// Integer CSV, one line per target block.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.multiplicity {
            let parts: Vec<String> = row.iter().map(|n| n.to_string()).collect();
            out.push_str(&parts.join(","));
            out.push('\n');
        }
        out
    }
}

/// Backtracking search for a plan placing every source block once.
pub fn embedding_feasible(source_dims: &[usize], target_dims: &[usize]) -> Option<EmbeddingPlan> {
    if source_dims.is_empty() || source_dims.contains(&0) || target_dims.contains(&0) {
        return None;
    }
    let mut src: Vec<usize> = (0..source_dims.len()).collect();
    src.sort_by(|&a, &b| source_dims[b].cmp(&source_dims[a]).then(a.cmp(&b)));
    let mut tgt: Vec<usize> = (0..target_dims.len()).collect();
    tgt.sort_by(|&a, &b| target_dims[b].cmp(&target_dims[a]).then(a.cmp(&b)));

    let sizes: Vec<usize> = src.iter().map(|&i| source_dims[i]).collect();
    let mut slack: Vec<usize> = tgt.iter().map(|&j| target_dims[j]).collect();
    let mut assign = vec![0; sizes.len()];
    let remaining: usize = sizes.iter().sum();
    if !place(0, &sizes, &mut slack, &mut assign, remaining) {
        return None;
    }
    let mut multiplicity = vec![vec![0; source_dims.len()]; target_dims.len()];
    for (pos, &slot) in assign.iter().enumerate() {
        multiplicity[tgt[slot]][src[pos]] += 1;
    }
    Some(EmbeddingPlan {
        source_dims: source_dims.to_vec(),
        target_dims: target_dims.to_vec(),
        multiplicity,
    })
}

fn place(idx: usize, sizes: &[usize], slack: &mut [usize], assign: &mut [usize], remaining: usize) -> bool {
    if idx == sizes.len() {
        return true;
    }
    let d = sizes[idx];
    if slack.iter().sum::<usize>() < remaining || slack.iter().copied().max().unwrap_or(0) < d {
        return false;
    }
    let mut tried: Vec<usize> = Vec::new();
    for j in 0..slack.len() {
        if slack[j] < d || tried.contains(&slack[j]) {
            continue;
        }
        tried.push(slack[j]);
        slack[j] -= d;
        assign[idx] = j;
        if place(idx + 1, sizes, slack, assign, remaining - d) {
            return true;
        }
        slack[j] += d;
    }
    false
}

/// Exhaustive feasibility over all multiplicity matrices with entries at most
/// `max(target_dims)`: rows are enumerated independently and a dynamic
/// program tracks which source columns are covered.
pub fn embedding_feasible_exhaustive(source_dims: &[usize], target_dims: &[usize]) -> bool {
    let s = source_dims.len();
    if s == 0 || s > 20 {
        return false;
    }
    let cap = target_dims.iter().copied().max().unwrap_or(0);
    let full = (1usize << s) - 1;
    let mut reachable = vec![false; full + 1];
    reachable[0] = true;
    for &dj in target_dims {
        let mut masks = vec![false; full + 1];
        let mut row = vec![0usize; s];
        loop {
            let used: usize = row.iter().zip(source_dims).map(|(n, d)| n * d).sum();
            if used <= dj {
                let mask = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &n)| n > 0)
                    .fold(0, |m, (i, _)| m | (1 << i));
                masks[mask] = true;
            }
            // odometer over entries 0..=cap
            let mut pos = 0;
            loop {
                if pos == s {
                    break;
                }
                row[pos] += 1;
                if row[pos] > cap {
                    row[pos] = 0;
                    pos += 1;
                } else {
                    break;
                }
            }
            if pos == s {
                break;
            }
        }
        let mut next = reachable.clone();
        for (a, &ra) in reachable.iter().enumerate() {
            if !ra {
                continue;
            }
            for (m, &ok) in masks.iter().enumerate() {
                if ok {
                    next[a | m] = true;
                }
            }
        }
        reachable = next;
    }
    reachable[full]
}

/// Multi-matrix algebra `U(⊕ M_{d_k} ⊗ 𝟙_{m_k})U*` acting on `C^{Σ d_k m_k}`.
#[derive(Clone, Debug)]
pub struct BlockAlgebra {
    pub dims: Vec<usize>,
    pub multiplicities: Vec<usize>,
    pub basis_change: ComplexMatrix,
}

impl BlockAlgebra {
    pub fn new(dims: Vec<usize>, multiplicities: Vec<usize>, basis_change: Option<ComplexMatrix>) -> Result<Self> {
        if dims.len() != multiplicities.len() || dims.is_empty() {
            return Err(Error::Dimension("dims and multiplicities must align".into()));
        }
        if dims.iter().chain(&multiplicities).any(|&x| x == 0) {
            return Err(Error::InvalidArgument("block data must be positive".into()));
        }
        let n: usize = dims.iter().zip(&multiplicities).map(|(d, m)| d * m).sum();
        let basis_change = basis_change.unwrap_or_else(|| identity(n));
        if basis_change.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "basis change must be {n}x{n}, the unit of the algebra must be the ambient identity"
            )));
        }
        Ok(Self {
            dims,
            multiplicities,
            basis_change,
        })
    }

    pub fn from_decomposition(dec: &IdempotentDecomposition) -> Self {
        Self {
            dims: dec.dims.clone(),
            multiplicities: dec.multiplicities.clone(),
            basis_change: dec.basis_change.clone(),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis_change.nrows()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.dims
            .iter()
            .zip(&self.multiplicities)
            .map(|(d, m)| {
                let o = acc;
                acc += d * m;
                o
            })
            .collect()
    }

    /// Block coordinates `x_k = tr_{k,2}(P_k U* x U P_k)/m_k`.
    pub fn to_blocks(&self, x: &ComplexMatrix) -> Vec<ComplexMatrix> {
        let u = &self.basis_change;
        let y = u.adjoint() * x * u;
        self.offsets()
            .iter()
            .zip(self.dims.iter().zip(&self.multiplicities))
            .map(|(&o, (&d, &m))| {
                let block = y.view((o, o), (d * m, d * m)).into_owned();
                linalg::partial_trace(&block, &[(d, m)], linalg::Factor::Second)
                    .expect("block dimensions are consistent")
                    .unscale(m as f64)
            })
            .collect()
    }

    pub fn from_blocks(&self, blocks: &[ComplexMatrix]) -> ComplexMatrix {
        let parts: Vec<ComplexMatrix> = blocks
            .iter()
            .zip(&self.multiplicities)
            .map(|(b, &m)| tensor_product(b, &identity(m)))
            .collect();
        let u = &self.basis_change;
        u * direct_sum(&parts) * u.adjoint()
    }

    /// `E_A(x) = Σ_k tr_{k,2}(P_k x P_k) ⊗ 𝟙_{m_k}/m_k` in the adapted basis.
    pub fn conditional_expectation(&self, x: &ComplexMatrix) -> ComplexMatrix {
        self.from_blocks(&self.to_blocks(x))
    }

    pub fn contains(&self, x: &ComplexMatrix, tol: &ToleranceConfig) -> bool {
        frobenius_distance(x, &self.conditional_expectation(x)) <= tol.eq_tol
    }

    pub fn unit_trace(&self) -> f64 {
        self.ambient_dim() as f64
    }
}

/// The tracial conditional expectation as a channel.
pub fn tracial_conditional_expectation(alg: &BlockAlgebra, tol: &ToleranceConfig) -> Result<Channel> {
    let n = alg.ambient_dim();
    Channel::from_map(n, n, |x| alg.conditional_expectation(x), tol)
}

/// Subunital injective *-homomorphism between two block algebras.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub plan: EmbeddingPlan,
    pub source: BlockAlgebra,
    pub target: BlockAlgebra,
    /// Per target block: `(source block, offset)` of every copy.
    pub layout: Vec<Vec<(usize, usize)>>,
}

impl Embedding {
    /// `ι(x)`; only the block coordinates of `x` enter, so this is `ι ∘ E_A`.
    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        self.apply_blocks(&self.source.to_blocks(x))
    }

    pub fn apply_blocks(&self, xs: &[ComplexMatrix]) -> ComplexMatrix {
        let blocks: Vec<ComplexMatrix> = self
            .layout
            .iter()
            .zip(&self.target.dims)
            .map(|(copies, &dj)| {
                let mut y = zeros(dj, dj);
                for &(i, off) in copies {
                    let d = self.source.dims[i];
                    y.view_mut((off, off), (d, d)).copy_from(&xs[i]);
                }
                y
            })
            .collect();
        self.target.from_blocks(&blocks)
    }

    /// `P_ι = ι(𝟙_A)`.
    pub fn unit_image(&self) -> ComplexMatrix {
        let ones: Vec<ComplexMatrix> = self.source.dims.iter().map(|&d| identity(d)).collect();
        self.apply_blocks(&ones)
    }

    /// Coordinate injections `W_j : ⊕_i C^{d_i} ⊗ C^{N_ji} → C^{D_j}`.
    pub fn block_isometries(&self) -> Vec<ComplexMatrix> {
        self.layout
            .iter()
            .zip(&self.target.dims)
            .map(|(copies, &dj)| {
                let used: usize = copies.iter().map(|&(i, _)| self.source.dims[i]).sum();
                let mut w = zeros(dj, used);
                let mut col = 0;
                for &(i, off) in copies {
                    for u in 0..self.source.dims[i] {
                        w[(off + u, col)] = c(1.0);
                        col += 1;
                    }
                }
                w
            })
            .collect()
    }

    /// `M_i = Σ_j N_ji m'_j`: total multiplicity of source block `i` in the target.
    pub fn copy_weights(&self) -> Vec<usize> {
        let mut w = vec![0; self.source.dims.len()];
        for (j, copies) in self.layout.iter().enumerate() {
            for &(i, _) in copies {
                w[i] += self.target.multiplicities[j];
            }
        }
        w
    }
}

/// Lays out every copy of the plan greedily from coordinate 0 upward.
pub fn build_embedding(plan: &EmbeddingPlan, source: &BlockAlgebra, target: &BlockAlgebra) -> Result<Embedding> {
    plan.validate()?;
    if plan.source_dims != source.dims || plan.target_dims != target.dims {
        return Err(Error::Dimension("plan does not match the block algebras".into()));
    }
    let layout = plan
        .multiplicity
        .iter()
        .map(|row| {
            let mut off = 0;
            let mut copies = Vec::new();
            for (i, &count) in row.iter().enumerate() {
                for _ in 0..count {
                    copies.push((i, off));
                    off += plan.source_dims[i];
                }
            }
            copies
        })
        .collect();
    Ok(Embedding {
        plan: plan.clone(),
        source: source.clone(),
        target: target.clone(),
        layout,
    })
}

/// Unital completely positive extensions `ι̃` and left inverse `ι̃⁻¹`.
#[derive(Clone, Debug)]
pub struct LiftedEmbedding {
    pub embedding: Embedding,
    complement: ComplexMatrix,
}

pub fn lift_homomorphism(embedding: &Embedding, tol: &ToleranceConfig) -> Result<LiftedEmbedding> {
    let p = embedding.unit_image();
    let defect = frobenius_distance(&(&p * &p), &p);
    if defect > tol.eq_tol {
        return Err(Error::Precondition(format!(
            "image of the unit is not a projector (defect {defect:.3e})"
        )));
    }
    let n = embedding.target.ambient_dim();
    Ok(LiftedEmbedding {
        embedding: embedding.clone(),
        complement: identity(n) - p,
    })
}

impl LiftedEmbedding {
    /// `ι̃(x) = ι(E_A(x)) + tr(x)/tr(𝟙_A) (𝟙_B − P_ι)`.
    pub fn lift(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let t = x.trace() / c(self.embedding.source.unit_trace());
        self.embedding.apply(x) + &self.complement * t
    }

    /// `ι̃⁻¹(y)`: average of the partial traces over every copy of each source block.
    pub fn inverse(&self, y: &ComplexMatrix) -> ComplexMatrix {
        let emb = &self.embedding;
        let tgt = &emb.target;
        let z = tgt.basis_change.adjoint() * y * &tgt.basis_change;
        let offsets = tgt.offsets();
        let mut acc: Vec<ComplexMatrix> = emb.source.dims.iter().map(|&d| zeros(d, d)).collect();
        for (j, copies) in emb.layout.iter().enumerate() {
            let m = tgt.multiplicities[j];
            for &(i, off) in copies {
                let d = emb.source.dims[i];
                for u in 0..d {
                    for v in 0..d {
                        let mut s = c(0.0);
                        for beta in 0..m {
                            s += z[(offsets[j] + (off + u) * m + beta, offsets[j] + (off + v) * m + beta)];
                        }
                        acc[i][(u, v)] += s;
                    }
                }
            }
        }
        let weights = emb.copy_weights();
        let blocks: Vec<ComplexMatrix> = acc
            .into_iter()
            .zip(weights)
            .map(|(a, w)| a.unscale(w as f64))
            .collect();
        emb.source.from_blocks(&blocks)
    }

    pub fn diagnostics(&self) -> LiftDiagnostics {
        let (na, nb) = (
            self.embedding.source.ambient_dim(),
            self.embedding.target.ambient_dim(),
        );
        let lift_choi = channel::choi_of_map(na, nb, |x| self.lift(x));
        let inv_choi = channel::choi_of_map(nb, na, |y| self.inverse(y));
        LiftDiagnostics {
            lift_unitality: frobenius_distance(&self.lift(&identity(na)), &identity(nb)),
            inverse_unitality: frobenius_distance(&self.inverse(&identity(nb)), &identity(na)),
            lift_choi_min: min_eigenvalue(&lift_choi),
            inverse_choi_min: min_eigenvalue(&inv_choi),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LiftDiagnostics {
    pub lift_unitality: f64,
    pub inverse_unitality: f64,
    pub lift_choi_min: f64,
    pub inverse_choi_min: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct EmulationOptions {
    pub tol: ToleranceConfig,
    pub seed: u64,
    /// Upper bound on `dim(F)^k · dim(G)^n`.
    pub budget_dim: usize,
}

impl Default for EmulationOptions {
    fn default() -> Self {
        Self {
            tol: ToleranceConfig::default(),
            seed: DEFAULT_SEED,
            budget_dim: DEFAULT_BUDGET,
        }
    }
}

pub fn check_budget(dim_f: usize, k: usize, dim_g: usize, n: usize, budget: usize) -> Result<()> {
    if budget > MAX_BUDGET {
        return Err(Error::InvalidArgument(format!("budget may not exceed {MAX_BUDGET}")));
    }
    let required = (dim_f as u128)
        .checked_pow(k as u32)
        .and_then(|a| (dim_g as u128).checked_pow(n as u32).and_then(|b| a.checked_mul(b)));
    match required {
        Some(r) if r <= budget as u128 => Ok(()),
        Some(r) => Err(Error::Budget {
            required: r.min(usize::MAX as u128) as usize,
            budget,
        }),
        None => Err(Error::Budget {
            required: usize::MAX,
            budget,
        }),
    }
}

/// Encoder/decoder pair with its verification data.
#[derive(Clone, Debug)]
pub struct EmulationKit {
    pub k: usize,
    pub n: usize,
    pub plan: EmbeddingPlan,
    pub block_isometries: Vec<ComplexMatrix>,
    /// Channels acting on the original (unreduced) spaces.
    pub encoder: Channel,
    pub decoder: Channel,
    /// Channels between the reduced spaces.
    pub reduced_encoder: Channel,
    pub reduced_decoder: Channel,
    pub residual: f64,
    pub reduced_residual: f64,
    pub lift: LiftDiagnostics,
}

/// One-shot synthesis at the given `(k, n)`; `Ok(None)` when the block
/// shapes do not admit an embedding.
pub fn synthesize_emulation(
    f: &Channel,
    g: &Channel,
    k: usize,
    n: usize,
    opts: &EmulationOptions,
) -> Result<Option<EmulationKit>> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument("k and n must be positive".into()));
    }
    check_budget(f.dim_in(), k, g.dim_in(), n, opts.budget_dim)?;
    let af = analyze(f, &opts.tol, opts.seed)?;
    let ag = analyze(g, &opts.tol, opts.seed.wrapping_add(1))?;
    synthesize_from_analyses(&af, &ag, k, n, opts)
}

pub fn synthesize_from_analyses(
    af: &Analysis,
    ag: &Analysis,
    k: usize,
    n: usize,
    opts: &EmulationOptions,
) -> Result<Option<EmulationKit>> {
    let tol = &opts.tol;
    let (f, g) = (&af.reduced.original, &ag.reduced.original);
    check_budget(f.dim_in(), k, g.dim_in(), n, opts.budget_dim)?;
    let fk = af.tensor_power(k)?;
    let gn = ag.tensor_power(n)?;
    let source = BlockAlgebra::from_decomposition(&fk.decomposition);
    let target = BlockAlgebra::from_decomposition(&gn.decomposition);
    let Some(plan) = embedding_feasible(&source.dims, &target.dims) else {
        return Ok(None);
    };
    let emb = build_embedding(&plan, &source, &target)?;
    let lifted = lift_homomorphism(&emb, tol)?;

    let (rf, rg) = (source.ambient_dim(), target.ambient_dim());
    let f_hat = &fk.reduced.reduced;
    let g_hat = &gn.reduced.reduced;
    let reduced_encoder = Channel::from_heisenberg(rf, rg, |y| lifted.inverse(y), tol)?;
    let reduced_decoder = Channel::from_heisenberg(
        rg,
        rf,
        |x| lifted.lift(&f_hat.adjoint_apply_unchecked(x)),
        tol,
    )?;
    let reduced_residual = residual_of(f_hat, g_hat, &reduced_encoder, &reduced_decoder)?;

    // transport across the conversion channels of the tensor powers
    let conv_f = conversion_channels(&fk.reduced);
    let conv_g = conversion_channels(&gn.reduced);
    let e_hat_f = conv_f.e_hat.compress(tol)?;
    let e_hat_g = conv_g.e_hat.compress(tol)?;
    let encoder = compose_compressed(
        &conv_g.d_hat,
        &compose_compressed(&reduced_encoder, &e_hat_f, tol)?,
        tol,
    )?;
    let decoder = compose_compressed(
        &conv_f.d_hat,
        &compose_compressed(&reduced_decoder, &e_hat_g, tol)?,
        tol,
    )?;
    let residual = verify_emulation(f, g, k, n, &encoder, &decoder, tol)?;
    Ok(Some(EmulationKit {
        k,
        n,
        block_isometries: emb.block_isometries(),
        plan,
        encoder,
        decoder,
        reduced_encoder,
        reduced_decoder,
        residual,
        reduced_residual,
        lift: lifted.diagnostics(),
    }))
}

fn residual_of(target: &Channel, g: &Channel, e: &Channel, d: &Channel) -> Result<f64> {
    if e.dim_in() != target.dim_in() || e.dim_out() != g.dim_in() || d.dim_in() != g.dim_out() || d.dim_out() != target.dim_out() {
        return Err(Error::Dimension("encoder/decoder dimensions do not fit the channels".into()));
    }
    let n = target.dim_in();
    let chained = channel::choi_of_map(n, d.dim_out(), |x| {
        d.apply_unchecked(&g.apply_unchecked(&e.apply_unchecked(x)))
    });
    Ok(frobenius_distance(target.choi(), &chained))
}

/// Choi distance between `F^{⊗k}` and `D ∘ G^{⊗n} ∘ E`.
pub fn verify_emulation(
    f: &Channel,
    g: &Channel,
    k: usize,
    n: usize,
    e: &Channel,
    d: &Channel,
    tol: &ToleranceConfig,
) -> Result<f64> {
    let fk = tensor_power(&f.compress(tol)?, k)?;
    let gn = tensor_power(&g.compress(tol)?, n)?;
    residual_of(&fk, &gn, e, d)
}

/// Tries `(k·m, n·m)` for `m = 1..=max_m`, stopping at the first success or
/// when the budget is exhausted.
pub fn search_blocklength(
    f: &Channel,
    g: &Channel,
    k: usize,
    n: usize,
    max_m: usize,
    opts: &EmulationOptions,
) -> Result<Option<EmulationKit>> {
    let af = analyze(f, &opts.tol, opts.seed)?;
    let ag = analyze(g, &opts.tol, opts.seed.wrapping_add(1))?;
    for m in 1..=max_m {
        if check_budget(f.dim_in(), k * m, g.dim_in(), n * m, opts.budget_dim).is_err() {
            break;
        }
        if let Some(kit) = synthesize_from_analyses(&af, &ag, k * m, n * m, opts)? {
            return Ok(Some(kit));
        }
    }
    Ok(None)
}

/// Smallest `m ≤ max_m` for which the shapes of `F^{⊗km}` and `G^{⊗nm}` admit an embedding.
pub fn feasible_blocklength(
    lam_f: &ShapeVector,
    lam_g: &ShapeVector,
    k: usize,
    n: usize,
    max_m: usize,
) -> Result<Option<usize>> {
    for m in 1..=max_m {
        let s = lam_f.tensor_power(k * m)?;
        let t = lam_g.tensor_power(n * m)?;
        if embedding_feasible(s.entries(), t.entries()).is_some() {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// `‖λ(F)‖_p^k ≤ ‖λ(G)‖_p^n` (relative slack 1e-9), the converse condition on a success.
pub fn soundness_holds(lam_f: &ShapeVector, lam_g: &ShapeVector, k: usize, n: usize, p: f64) -> Result<bool> {
    let lhs = k as f64 * crate::capacity::log_lp_norm(lam_f, p)?;
    let rhs = n as f64 * crate::capacity::log_lp_norm(lam_g, p)?;
    Ok(lhs <= rhs + 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{dephasing, identity_channel, make_block_idempotent, BlockData, BlockSpec};
    use crate::random::{random_density, random_hermitian, rng_from_seed};

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    #[test]
    fn feasibility_examples() {
        let plan = embedding_feasible(&[2], &[2, 1]).unwrap();
        assert_eq!(plan.multiplicity, vec![vec![1], vec![0]]);
        assert!(embedding_feasible(&[2, 2], &[3]).is_none());
        assert!(embedding_feasible(&[3], &[2, 2]).is_none());
        assert!(embedding_feasible(&[1, 1, 1, 1], &[4]).is_some());
        assert!(!embedding_feasible_exhaustive(&[2, 2], &[3]));
        assert!(embedding_feasible_exhaustive(&[2, 1], &[3]));
    }

    #[test]
    fn plans_respect_invariants() {
        let plan = embedding_feasible(&[3, 2, 2, 1], &[4, 3, 2]).unwrap();
        plan.validate().unwrap();
        assert_eq!(plan.to_csv().lines().count(), 3);
    }

    #[test]
    fn conditional_expectation_examples() {
        let full = BlockAlgebra::new(vec![3], vec![1], None).unwrap();
        let ch = tracial_conditional_expectation(&full, &tol()).unwrap();
        assert!(channel::channels_equal(&ch, &identity_channel(3), &tol()).unwrap().equal);

        let diag = BlockAlgebra::new(vec![1, 1], vec![1, 1], None).unwrap();
        let ch = tracial_conditional_expectation(&diag, &tol()).unwrap();
        assert!(channel::channels_equal(&ch, &dephasing(2), &tol()).unwrap().equal);

        let amp = BlockAlgebra::new(vec![2], vec![2], None).unwrap();
        let ch = tracial_conditional_expectation(&amp, &tol()).unwrap();
        assert!(channel::is_idempotent(&ch, &tol()).unwrap().equal);
        let x = random_hermitian(&mut rng_from_seed(1), 2);
        let a = tensor_product(&x, &identity(2));
        assert!(frobenius_distance(&ch.apply(&a).unwrap(), &a) < 1e-12);
        let unit = ch.adjoint_apply(&identity(4)).unwrap();
        assert!(frobenius_distance(&unit, &identity(4)) < 1e-12);
    }

    #[test]
    fn embedding_examples() {
        let src = BlockAlgebra::new(vec![2], vec![1], None).unwrap();
        let tgt = BlockAlgebra::new(vec![3], vec![1], None).unwrap();
        let plan = embedding_feasible(&[2], &[3]).unwrap();
        let emb = build_embedding(&plan, &src, &tgt).unwrap();
        let p = emb.unit_image();
        assert!(frobenius_distance(&(&p * &p), &p) < 1e-14);
        assert!((p.trace().re - 2.0).abs() < 1e-14);

        let mut rng = rng_from_seed(2);
        let (x, y) = (random_hermitian(&mut rng, 2), random_hermitian(&mut rng, 2));
        let lhs = emb.apply(&(&x * &y));
        let rhs = emb.apply(&x) * emb.apply(&y);
        assert!(frobenius_distance(&lhs, &rhs) < 1e-12);

        let lifted = lift_homomorphism(&emb, &tol()).unwrap();
        assert!(frobenius_distance(&lifted.lift(&identity(2)), &identity(3)) < 1e-14);
        assert!(frobenius_distance(&lifted.inverse(&lifted.lift(&x)), &x) < 1e-12);
        let diag = lifted.diagnostics();
        assert!(diag.lift_choi_min > -1e-12 && diag.inverse_choi_min > -1e-12);
    }

    #[test]
    fn identity_plan_is_identity_map() {
        let alg = BlockAlgebra::new(vec![2, 1], vec![1, 2], None).unwrap();
        let plan = embedding_feasible(&[2, 1], &[2, 1]).unwrap();
        let emb = build_embedding(&plan, &alg, &alg).unwrap();
        let x = alg.from_blocks(&[random_hermitian(&mut rng_from_seed(3), 2), identity(1)]);
        assert!(frobenius_distance(&emb.apply(&x), &x) < 1e-14);
        let lifted = lift_homomorphism(&emb, &tol()).unwrap();
        assert!(frobenius_distance(&lifted.lift(&x), &x) < 1e-14);
    }

    #[test]
    fn synthesis_examples() {
        let mut rng = rng_from_seed(4);
        let g = make_block_idempotent(
            &BlockSpec {
                blocks: vec![
                    BlockData { d: 2, m: 1, rho: identity(1) },
                    BlockData { d: 1, m: 2, rho: random_density(&mut rng, 2) },
                ],
                ambient_dim: 5,
                embedding_isometry: None,
            },
            5,
            &tol(),
        )
        .unwrap();
        let kit = synthesize_emulation(&identity_channel(2), &g, 1, 1, &EmulationOptions::default())
            .unwrap()
            .unwrap();
        assert!(kit.residual <= 1e-8, "residual {}", kit.residual);
        kit.encoder.check_cptp(&tol()).unwrap();
        kit.decoder.check_cptp(&tol()).unwrap();

        assert!(synthesize_emulation(&identity_channel(2), &dephasing(2), 1, 1, &EmulationOptions::default())
            .unwrap()
            .is_none());
        assert!(synthesize_emulation(&dephasing(4), &identity_channel(2), 1, 1, &EmulationOptions::default())
            .unwrap()
            .is_none());
        let kit = synthesize_emulation(&dephasing(4), &identity_channel(2), 1, 2, &EmulationOptions::default())
            .unwrap()
            .unwrap();
        assert!(kit.residual <= 1e-8, "residual {}", kit.residual);
    }

    #[test]
    fn trivial_verification() {
        let f = dephasing(3);
        let id = identity_channel(3);
        assert!(verify_emulation(&f, &f, 1, 1, &id, &id, &tol()).unwrap() < 1e-14);
    }

    #[test]
    fn budget_is_enforced() {
        let err = synthesize_emulation(&identity_channel(4), &identity_channel(4), 2, 2, &EmulationOptions::default());
        assert!(matches!(err, Err(Error::Budget { required: 256, budget: 64 })));
    }

    #[test]
    fn blocklength_search() {
        let (f, g) = (
            ShapeVector::new(vec![1, 1, 1, 1]).unwrap(),
            ShapeVector::new(vec![2]).unwrap(),
        );
        assert_eq!(feasible_blocklength(&f, &g, 1, 1, 3).unwrap(), None);
        assert_eq!(feasible_blocklength(&f, &g, 1, 2, 3).unwrap(), Some(1));
    }
}
