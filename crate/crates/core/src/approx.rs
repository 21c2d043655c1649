//! Approximate versions of the algebraic facts behind the converse:
//! Kadison-Schwarz defects, approximate multiplicative domains, and numerical
//! audits of the map `G̃* D*` restricted to `Rg(F*)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, compose_compressed, Channel};
use crate::error::{Error, Result};
use crate::linalg::{
    self, frobenius_distance, identity, operator_norm, support_of, trace_norm, ComplexMatrix,
    ToleranceConfig,
};
use crate::random::{random_complex_combination, random_matrix, rng_from_seed};
use crate::structure::{conversion_channels, Analysis};

pub const DEFAULT_DELTA_MAX: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSDefect {
    /// `‖Φ*(x*x) − Φ*(x*)Φ*(x)‖`.
    pub right_defect: f64,
    /// `‖Φ*(xx*) − Φ*(x)Φ*(x*)‖`.
    pub left_defect: f64,
    pub norm_x: f64,
    /// Smallest eigenvalues of the two differences (non-negative up to rounding).
    pub right_min_eigenvalue: f64,
    pub left_min_eigenvalue: f64,
}

fn unital_check(phi: &Channel, tol: &ToleranceConfig) -> Result<()> {
    let residual = phi.trace_preservation_residual();
    if residual > tol.eq_tol {
        return Err(Error::NotUnital { residual });
    }
    Ok(())
}

fn ks_of_map(f: &impl Fn(&ComplexMatrix) -> ComplexMatrix, x: &ComplexMatrix) -> KSDefect {
    let xa = x.adjoint();
    let (fx, fxa) = (f(x), f(&xa));
    let right = f(&(&xa * x)) - &fxa * &fx;
    let left = f(&(x * &xa)) - &fx * &fxa;
    KSDefect {
        right_defect: operator_norm(&right),
        left_defect: operator_norm(&left),
        norm_x: operator_norm(x),
        right_min_eigenvalue: linalg::min_eigenvalue(&right),
        left_min_eigenvalue: linalg::min_eigenvalue(&left),
    }
}

/// Kadison-Schwarz defects of the unital map `Φ*` (the adjoint of `phi`) at `x`.
pub fn ks_defect(phi: &Channel, x: &ComplexMatrix, tol: &ToleranceConfig) -> Result<KSDefect> {
    unital_check(phi, tol)?;
    if x.shape() != (phi.dim_out(), phi.dim_out()) {
        return Err(Error::Dimension("x must act on the output space".into()));
    }
    Ok(ks_of_map(&|y: &ComplexMatrix| phi.adjoint_apply_unchecked(y), x))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicativityCheck {
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Checks `‖Φ*(xy) − Φ*(x)Φ*(y)‖ ≤ 2δ‖x‖‖y‖` for `x ∈ C_δ^L`, `y ∈ C_δ^R`.
pub fn approx_mult_domain_check(
    phi: &Channel,
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    delta: f64,
    tol: &ToleranceConfig,
) -> Result<MultiplicativityCheck> {
    let kx = ks_defect(phi, x, tol)?;
    let ky = ks_defect(phi, y, tol)?;
    let slack = tol.eq_tol;
    if kx.left_defect > delta * kx.norm_x * kx.norm_x + slack {
        return Err(Error::Precondition(format!(
            "left defect of x is {:.3e}, above delta·‖x‖² = {:.3e}",
            kx.left_defect,
            delta * kx.norm_x * kx.norm_x
        )));
    }
    if ky.right_defect > delta * ky.norm_x * ky.norm_x + slack {
        return Err(Error::Precondition(format!(
            "right defect of y is {:.3e}, above delta·‖y‖² = {:.3e}",
            ky.right_defect,
            delta * ky.norm_x * ky.norm_x
        )));
    }
    let f = |z: &ComplexMatrix| phi.adjoint_apply_unchecked(z);
    let observed = operator_norm(&(f(&(x * y)) - f(x) * f(y)));
    let bound = 2.0 * delta * kx.norm_x * ky.norm_x;
    Ok(MultiplicativityCheck {
        observed,
        bound,
        pass: observed <= bound + slack,
    })
}

/// Smallest `δ` with `x ∈ C_δ^L` and `y ∈ C_δ^R`.
pub fn membership_delta(phi: &Channel, x: &ComplexMatrix, y: &ComplexMatrix, tol: &ToleranceConfig) -> Result<f64> {
    let kx = ks_defect(phi, x, tol)?;
    let ky = ks_defect(phi, y, tol)?;
    let a = if kx.norm_x > 0.0 { kx.left_defect / (kx.norm_x * kx.norm_x) } else { 0.0 };
    let b = if ky.norm_x > 0.0 { ky.right_defect / (ky.norm_x * ky.norm_x) } else { 0.0 };
    Ok(a.max(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `(λ_min/d)‖exe‖ ≤ ‖Φ*(x)‖` for PSD `x` on the output space.
pub fn expansion_check(phi: &Channel, x: &ComplexMatrix, tol: &ToleranceConfig) -> Result<ExpansionCheck> {
    if x.shape() != (phi.dim_out(), phi.dim_out()) {
        return Err(Error::Dimension("x must act on the output space".into()));
    }
    let min = linalg::min_eigenvalue(&linalg::hermitize(x, tol)?);
    if min < -tol.eq_tol {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let sup = support_of(&phi.apply_unchecked(&identity(phi.dim_in())), tol)?;
    let lambda = sup.min_nonzero_eigenvalue().unwrap_or(0.0);
    let e = &sup.projector;
    let lhs = lambda / phi.dim_in() as f64 * operator_norm(&(e * x * e));
    let rhs = operator_norm(&phi.adjoint_apply_unchecked(x));
    Ok(ExpansionCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + tol.eq_tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorThreshold {
    pub delta_max: f64,
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub lambda_min_n: f64,
    pub threshold: f64,
}

pub fn threshold_from_lambda(d: usize, k: usize, n: usize, lambda_min_n: f64, delta_max: f64) -> Result<ErrorThreshold> {
    if !(delta_max > 0.0) {
        return Err(Error::InvalidArgument("delta_max must be positive".into()));
    }
    if !(lambda_min_n > 0.0) {
        return Err(Error::Degenerate("minimal non-zero eigenvalue is zero".into()));
    }
    let threshold = delta_max * lambda_min_n / (6.0 * (d as f64).powi(k as i32));
    Ok(ErrorThreshold {
        delta_max,
        d,
        k,
        n,
        lambda_min_n,
        threshold,
    })
}

/// Threshold `δ_max λ_min,n / (6 d^k)` with `λ_min,n` read off `G^{⊗n} E(𝟙)`.
pub fn error_threshold(
    f_dim: usize,
    k: usize,
    n: usize,
    g: &Channel,
    e: &Channel,
    delta_max: f64,
    tol: &ToleranceConfig,
) -> Result<ErrorThreshold> {
    let fk = (f_dim as u32)
        .checked_pow(k as u32)
        .ok_or_else(|| Error::InvalidArgument("dimension overflow".into()))? as usize;
    if e.dim_in() != fk {
        return Err(Error::Dimension(format!("encoder input must have dimension {fk}")));
    }
    let gn = channel::tensor_power(g, n)?;
    if e.dim_out() != gn.dim_in() {
        return Err(Error::Dimension("encoder output does not match G^n".into()));
    }
    let image = gn.apply_unchecked(&e.apply_unchecked(&identity(fk)));
    let sup = support_of(&image, tol)?;
    let lambda = sup
        .min_nonzero_eigenvalue()
        .ok_or_else(|| Error::Degenerate("G^n E(1) vanishes".into()))?;
    threshold_from_lambda(f_dim, k, n, lambda, delta_max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    /// Trace norm of the unnormalized Choi difference; dominates the diamond distance.
    pub delta_cb: f64,
    /// Worst `1 − ‖v(x)‖/‖x‖` over samples; the bound is `delta_cb`.
    pub norm_preservation_worst: f64,
    /// Worst `‖v(x)‖/‖x‖ − 1`; should not be positive.
    pub norm_excess_worst: f64,
    pub unitality_residual: f64,
    /// Worst `‖v(xy) − v(x)v(y)‖/(‖x‖‖y‖)`.
    pub multiplicativity_worst: f64,
    pub lambda_min: f64,
    pub dim_source: usize,
    pub theoretical_mult_bound: f64,
    pub sample_count: usize,
    pub norm_ok: bool,
    pub unitality_ok: bool,
    pub multiplicativity_ok: bool,
    pub seed: u64,
}

impl InclusionReport {
    pub fn all_ok(&self) -> bool {
        self.norm_ok && self.unitality_ok && self.multiplicativity_ok
    }
}

/// Everything needed to evaluate `v = G̃* D'*` on `Rg(F̂*)`.
struct InclusionSetup {
    f_hat: Channel,
    g_hat: Channel,
    e_red: Channel,
    d_red: Channel,
    e_ge: ComplexMatrix,
    lambda_min: f64,
    basis: Vec<ComplexMatrix>,
}

impl InclusionSetup {
    fn new(af: &Analysis, ag: &Analysis, e: &Channel, d: &Channel, k: usize, n: usize, tol: &ToleranceConfig) -> Result<Self> {
        let fk = af.tensor_power(k)?;
        let gn = ag.tensor_power(n)?;
        let cf = conversion_channels(&fk.reduced);
        let cg = conversion_channels(&gn.reduced);
        if e.dim_in() != cf.d_hat.dim_out() || e.dim_out() != cg.e_hat.dim_in() {
            return Err(Error::Dimension("encoder does not fit F^k → G^n".into()));
        }
        if d.dim_in() != cg.d_hat.dim_out() || d.dim_out() != cf.e_hat.dim_in() {
            return Err(Error::Dimension("decoder does not fit G^n → F^k".into()));
        }
        let e_red = compose_compressed(&cg.e_hat.compress(tol)?, &compose_compressed(e, &cf.d_hat, tol)?, tol)?;
        let d_red = compose_compressed(&cf.e_hat.compress(tol)?, &compose_compressed(d, &cg.d_hat, tol)?, tol)?;
        let f_hat = fk.reduced.reduced.compress(tol)?;
        let g_hat = gn.reduced.reduced.compress(tol)?;
        let image = g_hat.apply_unchecked(&e_red.apply_unchecked(&identity(f_hat.dim_in())));
        let sup = support_of(&image, tol)?;
        let lambda_min = sup.min_nonzero_eigenvalue().unwrap_or(0.0);
        if lambda_min <= tol.rank_tol {
            return Err(Error::Degenerate(format!(
                "smallest non-zero eigenvalue of G E(1) is {lambda_min:.3e}"
            )));
        }
        Ok(Self {
            f_hat,
            g_hat,
            e_red,
            d_red,
            e_ge: sup.projector,
            lambda_min,
            basis: fk.algebra.basis,
        })
    }

    fn v(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let y = self.g_hat.adjoint_apply_unchecked(&self.d_red.adjoint_apply_unchecked(x));
        &self.e_ge * y * &self.e_ge
    }

    fn delta(&self) -> f64 {
        let n = self.f_hat.dim_in();
        let chained = channel::choi_of_map(n, n, |x| {
            self.d_red
                .apply_unchecked(&self.g_hat.apply_unchecked(&self.e_red.apply_unchecked(x)))
        });
        trace_norm(&(self.f_hat.choi() - chained))
    }

    /// Unit-norm element of the algebra: a basis element or a random combination.
    fn sample(&self, rng: &mut impl Rng, i: usize) -> ComplexMatrix {
        let x = if i.is_multiple_of(2) {
            self.basis[(i / 2) % self.basis.len()].clone()
        } else {
            random_complex_combination(rng, &self.basis)
        };
        let norm = operator_norm(&x);
        if norm > 0.0 {
            x.unscale(norm)
        } else {
            x
        }
    }
}

/// Measures norm preservation, unitality and multiplicativity of `G̃* D'*` on
/// `Rg(F̂*^{⊗k})`, where `E' = Ê_G E D̂_F` and `D' = Ê_F D D̂_G` move the code
/// to the reduced channels.
#[allow(clippy::too_many_arguments)]
pub fn delta_inclusion_report(
    af: &Analysis,
    ag: &Analysis,
    e: &Channel,
    d: &Channel,
    k: usize,
    n: usize,
    sample_count: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<InclusionReport> {
    let setup = InclusionSetup::new(af, ag, e, d, k, n, tol)?;
    let delta = setup.delta();
    let dim = setup.f_hat.dim_in();
    let mut rng = rng_from_seed(seed);

    let unitality_residual = frobenius_distance(&setup.v(&identity(dim)), &setup.e_ge);
    let (mut norm_worst, mut excess_worst, mut mult_worst) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64);
    for i in 0..sample_count.max(1) {
        let x = setup.sample(&mut rng, i);
        let y = setup.sample(&mut rng, i + 1);
        let vx = setup.v(&x);
        let nv = operator_norm(&vx);
        norm_worst = norm_worst.max(1.0 - nv);
        excess_worst = excess_worst.max(nv - 1.0);
        let prod = setup.v(&(&x * &y)) - &vx * setup.v(&y);
        mult_worst = mult_worst.max(operator_norm(&prod));
    }
    let bound = 6.0 * delta * dim as f64 / setup.lambda_min;
    Ok(InclusionReport {
        delta_cb: delta,
        norm_preservation_worst: norm_worst,
        norm_excess_worst: excess_worst,
        unitality_residual,
        multiplicativity_worst: mult_worst,
        lambda_min: setup.lambda_min,
        dim_source: dim,
        theoretical_mult_bound: bound,
        sample_count: sample_count.max(1),
        norm_ok: norm_worst <= delta + tol.eq_tol && excess_worst <= tol.eq_tol,
        unitality_ok: unitality_residual <= tol.eq_tol,
        multiplicativity_ok: mult_worst <= bound + tol.eq_tol,
        seed,
    })
}

/// Worst `‖v(xy) − v(x)v(y)‖` over pairs of algebra basis elements.
pub fn multiplicative_domain_diagnostic(
    af: &Analysis,
    ag: &Analysis,
    e: &Channel,
    d: &Channel,
    k: usize,
    n: usize,
    tol: &ToleranceConfig,
) -> Result<f64> {
    let setup = InclusionSetup::new(af, ag, e, d, k, n, tol)?;
    let images: Vec<ComplexMatrix> = setup.basis.iter().map(|b| setup.v(b)).collect();
    let mut worst = 0.0f64;
    for (x, vx) in setup.basis.iter().zip(&images) {
        for (y, vy) in setup.basis.iter().zip(&images) {
            worst = worst.max(operator_norm(&(setup.v(&(x * y)) - vx * vy)));
        }
    }
    Ok(worst)
}

/// `K' = (K + ηG) S^{-1/2}` with `S = Σ (K + ηG)*(K + ηG)`, Gaussian `G`.
pub fn perturb_channel(ch: &Channel, eta: f64, rng: &mut impl Rng, tol: &ToleranceConfig) -> Result<Channel> {
    let moved: Vec<ComplexMatrix> = ch
        .kraus()
        .iter()
        .map(|k| k + random_matrix(rng, k.nrows(), k.ncols()).scale(eta))
        .collect();
    let mut s = linalg::zeros(ch.dim_in(), ch.dim_in());
    for k in &moved {
        s += k.adjoint() * k;
    }
    let inv_sqrt = linalg::psd_function(&s, |v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    let kraus = moved.iter().map(|k| k * &inv_sqrt).collect();
    Channel::new(ch.dim_in(), ch.dim_out(), kraus, tol)
}
