//! Witness states and effects that lower-bound the distance between
//! `F^{⊗k}` and any `D ∘ G^{⊗n} ∘ E`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::capacity::converse_error_floor_powers;
use crate::channel::{self, Channel};
use crate::error::{Error, Result};
use crate::linalg::{self, c, identity, tensor_product, zeros, ComplexMatrix, ToleranceConfig};
use crate::structure::{conversion_channels, Analysis, IdempotentDecomposition, ReducedChannel};

/// Effect `μ` on output ⊗ aux and state `σ` on input ⊗ aux.
#[derive(Clone, Debug)]
pub struct WitnessPair {
    pub mu: ComplexMatrix,
    pub sigma: ComplexMatrix,
    pub aux_dim: usize,
}

impl WitnessPair {
    pub fn validate(&self, tol: &ToleranceConfig) -> Result<()> {
        if self.aux_dim == 0 || !self.mu.nrows().is_multiple_of(self.aux_dim) || !self.sigma.nrows().is_multiple_of(self.aux_dim) {
            return Err(Error::InvalidWitness("dimensions are not multiples of aux_dim".into()));
        }
        let mu = linalg::hermitize(&self.mu, tol)
            .map_err(|e| Error::InvalidWitness(format!("mu: {e}")))?;
        let spec = linalg::eigh_hermitian(mu);
        let (hi, lo) = (spec.values[0], *spec.values.last().unwrap());
        if lo < -tol.eq_tol || hi > 1.0 + tol.eq_tol {
            return Err(Error::InvalidWitness(format!(
                "mu must satisfy 0 <= mu <= 1, spectrum in [{lo:.3e}, {hi:.3e}]"
            )));
        }
        channel::check_density(&self.sigma, tol)
            .map_err(|e| Error::InvalidWitness(format!("sigma: {e}")))
    }

    /// Transports the witness through isometries on the system parts:
    /// `σ ↦ (V_in ⊗ 𝟙)σ(V_in ⊗ 𝟙)*`, `μ ↦ (V_out ⊗ 𝟙)μ(V_out ⊗ 𝟙)*`.
    pub fn embed(&self, v_in: &ComplexMatrix, v_out: &ComplexMatrix) -> WitnessPair {
        let id = identity(self.aux_dim);
        let a = tensor_product(v_in, &id);
        let b = tensor_product(v_out, &id);
        WitnessPair {
            sigma: &a * &self.sigma * a.adjoint(),
            mu: &b * &self.mu * b.adjoint(),
            aux_dim: self.aux_dim,
        }
    }
}

/// `tr(μ (Φ ⊗ Id)(σ))`.
pub fn witness_value(phi: &Channel, w: &WitnessPair) -> Result<f64> {
    let out = phi.apply_extended(&w.sigma, w.aux_dim)?;
    if out.shape() != w.mu.shape() {
        return Err(Error::Dimension(format!(
            "effect is {}x{}, channel output is {}x{}",
            w.mu.nrows(),
            w.mu.ncols(),
            out.nrows(),
            out.ncols()
        )));
    }
    Ok(linalg::hs_inner(&w.mu, &out).re)
}

/// Witness value of a chain of channels; `channels[0]` acts first.
pub fn witness_value_chain(channels: &[&Channel], w: &WitnessPair) -> Result<f64> {
    let mut state = w.sigma.clone();
    for ch in channels {
        state = ch.apply_extended(&state, w.aux_dim)?;
    }
    if state.shape() != w.mu.shape() {
        return Err(Error::Dimension("effect does not match the chain output".into()));
    }
    Ok(linalg::hs_inner(&w.mu, &state).re)
}

pub fn holevo_helstrom_gap(phi1: &Channel, phi2: &Channel, w: &WitnessPair, tol: &ToleranceConfig) -> Result<f64> {
    if phi1.dim_in() != phi2.dim_in() || phi1.dim_out() != phi2.dim_out() {
        return Err(Error::Dimension("channels must have matching dimensions".into()));
    }
    w.validate(tol)?;
    Ok(witness_value(phi1, w)? - witness_value(phi2, w)?)
}

/// Maximally correlated witness on `H_0 ⊗ H_0` built from the diagonal matrix units.
pub fn witness_p1(dec: &IdempotentDecomposition) -> WitnessPair {
    let n = dec.dim();
    let norm1: usize = dec.dims.iter().sum();
    let mut mu = zeros(n * n, n * n);
    let mut sigma = zeros(n * n, n * n);
    for (k, units) in dec.matrix_units.iter().enumerate() {
        let m = dec.multiplicities[k] as f64;
        for (nu, row) in units.iter().enumerate() {
            let e = &row[nu];
            let t = tensor_product(e, e);
            sigma += t.unscale(m * m * norm1 as f64);
            mu += t;
        }
    }
    WitnessPair { mu, sigma, aux_dim: n }
}

/// Maximally entangled witness on the first factor of the largest block,
/// with `|ν⟩` sent to `e_{ν1} f_0`. `sigma` lives on `H_0 ⊗ C^d`; `mu` lives on
/// `(⊕_k C^{d_k}) ⊗ C^d`, the output space of the partial-trace half.
pub fn witness_pinf(dec: &IdempotentDecomposition) -> WitnessPair {
    // blocks are sorted by dimension, so block 0 is the first largest one
    let d = dec.dims[0];
    let iso = dec.first_factor_isometry(0, 0);
    let omega = ComplexMatrix::from_fn(d * d, 1, |r, _| {
        if r / d == r % d {
            c(1.0 / (d as f64).sqrt())
        } else {
            c(0.0)
        }
    });
    let proj = &omega * omega.adjoint();
    let lift_in = tensor_product(&iso, &identity(d));
    let total: usize = dec.dims.iter().sum();
    let mut out_iso = zeros(total, d);
    for u in 0..d {
        out_iso[(u, u)] = c(1.0);
    }
    let lift_out = tensor_product(&out_iso, &identity(d));
    WitnessPair {
        sigma: &lift_in * &proj * lift_in.adjoint(),
        mu: &lift_out * &proj * lift_out.adjoint(),
        aux_dim: d,
    }
}

/// `F̂ = g2 ∘ pinch ∘ g1` with `g1` the block partial traces, `pinch` the
/// block projector sandwich on `⊕ C^{d_k}` and `g2` the tensoring with `ρ_k`.
#[derive(Clone, Debug)]
pub struct PinchingFactorization {
    pub g1: Channel,
    pub pinch: Channel,
    pub g2: Channel,
}

impl PinchingFactorization {
    pub fn composed(&self) -> Channel {
        channel::compose(&self.g2, &channel::compose(&self.pinch, &self.g1).expect("dims fit"))
            .expect("dims fit")
    }
}

pub fn pinching_factorize(dec: &IdempotentDecomposition, tol: &ToleranceConfig) -> Result<PinchingFactorization> {
    let n = dec.dim();
    let total: usize = dec.dims.iter().sum();
    let u = &dec.basis_change;
    let offsets = dec.offsets();
    let mut g1 = Vec::new();
    let mut pinch = Vec::new();
    let mut g2 = Vec::new();
    let mut small_off = 0;
    for (k, (&d, &m)) in dec.dims.iter().zip(&dec.multiplicities).enumerate() {
        for beta in 0..m {
            let mut kk = zeros(total, n);
            for a in 0..d {
                kk[(small_off + a, offsets[k] + a * m + beta)] = c(1.0);
            }
            g1.push(kk * u.adjoint());
        }
        let mut q = zeros(total, total);
        for a in 0..d {
            q[(small_off + a, small_off + a)] = c(1.0);
        }
        pinch.push(q);
        let spec = linalg::eigh(&dec.block_states[k], tol)?;
        for (idx, &p) in spec.values.iter().enumerate() {
            if p <= tol.rank_tol {
                continue;
            }
            let psi = spec.vectors.column(idx);
            let mut kk = zeros(n, total);
            for a in 0..d {
                for beta in 0..m {
                    kk[(offsets[k] + a * m + beta, small_off + a)] = psi[beta] * Complex64::new(p.sqrt(), 0.0);
                }
            }
            g2.push(u * kk);
        }
        small_off += d;
    }
    Ok(PinchingFactorization {
        g1: Channel::from_kraus_unchecked(n, total, g1),
        pinch: Channel::from_kraus_unchecked(total, total, pinch),
        g2: Channel::from_kraus_unchecked(total, n, g2),
    })
}

/// `F₁ ∘ Ê_F` on the unreduced space, so that it absorbs `F` on the right.
pub fn full_first_half(rc: &ReducedChannel, pf: &PinchingFactorization, tol: &ToleranceConfig) -> Result<Channel> {
    let conv = conversion_channels(rc);
    channel::compose_compressed(&pf.g1, &conv.e_hat, tol)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConverseCertificate {
    pub gap_p1: f64,
    pub gap_pinf: f64,
    /// `1 − min(‖λ(G)‖₁^n/‖λ(F)‖₁^k, ‖λ(G)‖_∞^n/‖λ(F)‖_∞^k)`.
    pub theoretical_floor: f64,
    /// Witness values on `D ∘ G^{⊗n} ∘ E`.
    pub value_p1: f64,
    pub value_pinf: f64,
    pub certified: f64,
}

/// Witnesses for `F^{⊗k}` built once and reused across many `(E, D)`.
#[derive(Clone, Debug)]
pub struct ConverseWitnesses {
    pub k: usize,
    pub p1: WitnessPair,
    pub pinf: WitnessPair,
    pub first_half: Channel,
    pub target_value_p1: f64,
    pub target_value_pinf: f64,
    pub floor: f64,
}

pub fn converse_witnesses(
    af: &Analysis,
    ag: &Analysis,
    k: usize,
    n: usize,
    tol: &ToleranceConfig,
) -> Result<ConverseWitnesses> {
    let fk = af.tensor_power(k)?;
    let v = fk.reduced.isometry().clone();
    let p1 = witness_p1(&fk.decomposition).embed(&v, &v);
    let pinf_red = witness_pinf(&fk.decomposition);
    let total_out = pinf_red.mu.nrows() / pinf_red.aux_dim;
    let pinf = pinf_red.embed(&v, &identity(total_out));
    let pf = pinching_factorize(&fk.decomposition, tol)?;
    let first_half = full_first_half(&fk.reduced, &pf, tol)?;
    let f_full = fk.reduced.original.compress(tol)?;
    let target_value_p1 = witness_value(&f_full, &p1)?;
    let target_value_pinf = witness_value_chain(&[&f_full, &first_half], &pinf)?;
    Ok(ConverseWitnesses {
        k,
        p1,
        pinf,
        first_half,
        target_value_p1,
        target_value_pinf,
        floor: converse_error_floor_powers(af.shape(), ag.shape(), k, n),
    })
}

impl ConverseWitnesses {
    /// Evaluates both witnesses on `D ∘ G^{⊗n} ∘ E`.
    pub fn certify(&self, gn: &Channel, e: &Channel, d: &Channel) -> Result<ConverseCertificate> {
        let value_p1 = witness_value_chain(&[e, gn, d], &self.p1)?;
        let value_pinf = witness_value_chain(&[e, gn, d, &self.first_half], &self.pinf)?;
        let gap_p1 = self.target_value_p1 - value_p1;
        let gap_pinf = self.target_value_pinf - value_pinf;
        Ok(ConverseCertificate {
            gap_p1,
            gap_pinf,
            theoretical_floor: self.floor,
            value_p1,
            value_pinf,
            certified: gap_p1.max(gap_pinf),
        })
    }
}

pub fn converse_certificate(
    af: &Analysis,
    ag: &Analysis,
    e: &Channel,
    d: &Channel,
    k: usize,
    n: usize,
    tol: &ToleranceConfig,
) -> Result<ConverseCertificate> {
    let w = converse_witnesses(af, ag, k, n, tol)?;
    let gn = channel::tensor_power(&ag.reduced.original.compress(tol)?, n)?;
    w.certify(&gn, e, d)
}
