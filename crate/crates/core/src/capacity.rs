//! ℓ_p norms of shape vectors and the zero-error emulation capacity
//! `inf_p log‖λ(G)‖_p / log‖λ(F)‖_p`.
//!
//! Everything is parameterized by `s = 1/p ∈ [0, 1]`; `s = 0` is `p = ∞`.
//! Extended reals are plain `f64` with `f64::INFINITY`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structure::ShapeVector;

pub const DEFAULT_GRID: usize = 4096;
pub const DEFAULT_S_TOL: f64 = 1e-12;

/// `log ‖v‖_p` via log-sum-exp; `p = ∞` gives `log max v`.
pub fn log_lp_norm(v: &ShapeVector, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok((v.max() as f64).ln());
    }
    Ok(log_norm_s(v, 1.0 / p))
}

pub fn lp_norm(v: &ShapeVector, p: f64) -> Result<f64> {
    let log = log_lp_norm(v, p)?;
    // exact integers at the endpoints
    if p.is_infinite() {
        Ok(v.max() as f64)
    } else if p == 1.0 {
        Ok(v.sum() as f64)
    } else {
        Ok(log.exp())
    }
}

/// `log ‖v‖_{1/s} = s · LSE(log d_i / s)` for `s ∈ (0, 1]`, `log max` at 0.
pub fn log_norm_s(v: &ShapeVector, s: f64) -> f64 {
    let max = (v.max() as f64).ln();
    if s <= 0.0 {
        return max;
    }
    let sum: f64 = v
        .entries()
        .iter()
        .map(|&d| (((d as f64).ln() - max) / s).exp())
        .sum();
    max + s * sum.ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialCase {
    None,
    SourceShapeOne,
    AllOnesBoth,
    DenominatorZero,
}

impl std::fmt::Display for SpecialCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SpecialCase::None => "none",
            SpecialCase::SourceShapeOne => "source_shape_one",
            SpecialCase::AllOnesBoth => "all_ones_both",
            SpecialCase::DenominatorZero => "denominator_zero",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCurvePoint {
    pub p: f64,
    pub s: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub value: f64,
    /// `None` for the source-shape-one case, where there is no minimizer.
    pub argmin_p: Option<f64>,
    pub endpoint_p1: f64,
    pub endpoint_pinf: f64,
    pub special_case: SpecialCase,
    pub curve_samples: Vec<RateCurvePoint>,
}

#[derive(Clone, Copy, Debug)]
pub struct CapacityOptions {
    pub grid: usize,
    pub s_tol: f64,
    /// Number of evenly spaced curve points kept in the report.
    pub samples: usize,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID,
            s_tol: DEFAULT_S_TOL,
            samples: 33,
        }
    }
}

fn is_trivial(v: &ShapeVector) -> bool {
    v.entries() == [1]
}

fn ratio_s(lam_f: &ShapeVector, lam_g: &ShapeVector, s: f64) -> RateCurvePoint {
    let p = if s <= 0.0 { f64::INFINITY } else { 1.0 / s };
    if lam_f.is_all_ones() && lam_g.is_all_ones() {
        // constant limit value, also at p = ∞
        let num = (lam_g.len() as f64).ln();
        let den = (lam_f.len() as f64).ln();
        return RateCurvePoint {
            p,
            s,
            numerator: s * num,
            denominator: s * den,
            ratio: num / den,
        };
    }
    let numerator = log_norm_s(lam_g, s);
    let denominator = log_norm_s(lam_f, s);
    let ratio = if denominator == 0.0 {
        if numerator > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        numerator / denominator
    };
    RateCurvePoint {
        p,
        s,
        numerator,
        denominator,
        ratio,
    }
}

/// `log‖λ(G)‖_p / log‖λ(F)‖_p` with the all-ones and zero-denominator conventions.
pub fn eval_ratio(lam_f: &ShapeVector, lam_g: &ShapeVector, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    if is_trivial(lam_f) {
        return Err(Error::InvalidArgument(
            "source shape (1) has infinite capacity; the ratio is undefined".into(),
        ));
    }
    let s = if p.is_infinite() { 0.0 } else { 1.0 / p };
    Ok(ratio_s(lam_f, lam_g, s).ratio)
}

/// Ratio curve at `points` evenly spaced values of `s`, from `p = 1` to `p = ∞`.
pub fn rate_curve(lam_f: &ShapeVector, lam_g: &ShapeVector, points: usize) -> Result<Vec<RateCurvePoint>> {
    if is_trivial(lam_f) {
        return Err(Error::InvalidArgument("source shape (1) has no rate curve".into()));
    }
    let points = points.max(2);
    Ok((0..points)
        .map(|i| ratio_s(lam_f, lam_g, 1.0 - i as f64 / (points - 1) as f64))
        .collect())
}

pub fn capacity(lam_f: &ShapeVector, lam_g: &ShapeVector) -> CapacityReport {
    capacity_with(lam_f, lam_g, &CapacityOptions::default())
}

pub fn capacity_with(lam_f: &ShapeVector, lam_g: &ShapeVector, opts: &CapacityOptions) -> CapacityReport {
    if is_trivial(lam_f) {
        return CapacityReport {
            value: f64::INFINITY,
            argmin_p: None,
            endpoint_p1: f64::INFINITY,
            endpoint_pinf: f64::INFINITY,
            special_case: SpecialCase::SourceShapeOne,
            curve_samples: vec![],
        };
    }
    let f = |s: f64| ratio_s(lam_f, lam_g, s).ratio;
    let endpoint_p1 = f(1.0);
    let endpoint_pinf = f(0.0);
    let curve_samples = rate_curve(lam_f, lam_g, opts.samples).expect("non-trivial source");

    if lam_f.is_all_ones() && lam_g.is_all_ones() {
        return CapacityReport {
            value: endpoint_p1,
            argmin_p: Some(1.0),
            endpoint_p1,
            endpoint_pinf,
            special_case: SpecialCase::AllOnesBoth,
            curve_samples,
        };
    }
    let special_case = if log_norm_s(lam_f, 0.0) == 0.0 {
        SpecialCase::DenominatorZero
    } else {
        SpecialCase::None
    };

    // walk from p = 1 towards p = ∞ so ties go to the smaller p
    let n = opts.grid.max(3);
    let s_at = |i: usize| 1.0 - i as f64 / (n - 1) as f64;
    let (mut best_i, mut best) = (0, f(s_at(0)));
    for i in 1..n {
        let v = f(s_at(i));
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let (mut best_s, mut best_v) = (s_at(best_i), best);
    let hi = s_at(best_i.saturating_sub(1));
    let lo = s_at((best_i + 1).min(n - 1));
    let (rs, rv) = golden_section(&f, lo, hi, opts.s_tol);
    if rv < best_v {
        best_s = rs;
        best_v = rv;
    }
    // near p = ∞ the curve can differ from its limit by less than an ulp
    let ulps = 8.0 * f64::EPSILON * best_v.abs().max(1.0);
    if best_s > 0.0 && endpoint_pinf <= best_v + ulps && endpoint_p1 > best_v + ulps {
        best_s = 0.0;
        best_v = endpoint_pinf;
    }
    CapacityReport {
        value: best_v,
        argmin_p: Some(if best_s <= 0.0 { f64::INFINITY } else { 1.0 / best_s }),
        endpoint_p1,
        endpoint_pinf,
        special_case,
        curve_samples,
    }
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let candidates = [(a, f(a)), (b, f(b)), (c, fc), (d, fd)];
    candidates
        .into_iter()
        .fold((a, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
}

/// Rows of the table of capacities where one side is an identity or a
/// completely dephasing channel of dimension `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableRow {
    /// `F = Id_d`; `lam` is `λ(G)`.
    SourceIdentity,
    /// `G = Id_d`; `lam` is `λ(F)`.
    TargetIdentity,
    /// `F = Δ_d`; `lam` is `λ(G)`.
    SourceDephasing,
    /// `G = Δ_d`; `lam` is `λ(F)`.
    TargetDephasing,
}

impl std::str::FromStr for TableRow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source_identity" | "f_id" => Ok(Self::SourceIdentity),
            "target_identity" | "g_id" => Ok(Self::TargetIdentity),
            "source_dephasing" | "f_dephasing" => Ok(Self::SourceDephasing),
            "target_dephasing" | "g_dephasing" => Ok(Self::TargetDephasing),
            other => Err(Error::InvalidArgument(format!("unknown table row '{other}'"))),
        }
    }
}

impl TableRow {
    pub const ALL: [TableRow; 4] = [
        TableRow::SourceIdentity,
        TableRow::TargetIdentity,
        TableRow::SourceDephasing,
        TableRow::TargetDephasing,
    ];

    /// `(λ(F), λ(G))` for this row.
    pub fn shapes(&self, lam: &ShapeVector, d: usize) -> Result<(ShapeVector, ShapeVector)> {
        let id = ShapeVector::new(vec![d])?;
        let deph = ShapeVector::new(vec![1; d])?;
        Ok(match self {
            TableRow::SourceIdentity => (id, lam.clone()),
            TableRow::TargetIdentity => (lam.clone(), id),
            TableRow::SourceDephasing => (deph, lam.clone()),
            TableRow::TargetDephasing => (lam.clone(), deph),
        })
    }
}

pub fn capacity_closed_form(row: TableRow, lam: &ShapeVector, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let ld = (d as f64).ln();
    let l1 = log_norm_s(lam, 1.0);
    let linf = log_norm_s(lam, 0.0);
    let div = |num: f64, den: f64| {
        if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        }
    };
    Ok(match row {
        TableRow::SourceIdentity => div(linf, ld),
        TableRow::TargetIdentity => div(ld, l1),
        TableRow::SourceDephasing => div(l1, ld),
        TableRow::TargetDephasing => {
            if is_trivial(lam) {
                f64::INFINITY
            } else if lam.is_all_ones() {
                div(ld, l1)
            } else {
                0.0
            }
        }
    })
}

/// `1 − min(‖λ(G)‖₁/‖λ(F)‖₁, ‖λ(G)‖_∞/‖λ(F)‖_∞)`, clamped to `[0, 1]`.
pub fn converse_error_floor(lam_f: &ShapeVector, lam_g: &ShapeVector) -> f64 {
    converse_error_floor_powers(lam_f, lam_g, 1, 1)
}

/// The same floor for `F^{⊗k}` against `G^{⊗n}`, evaluated in log space.
pub fn converse_error_floor_powers(lam_f: &ShapeVector, lam_g: &ShapeVector, k: usize, n: usize) -> f64 {
    let r1 = n as f64 * log_norm_s(lam_g, 1.0) - k as f64 * log_norm_s(lam_f, 1.0);
    let rinf = n as f64 * log_norm_s(lam_g, 0.0) - k as f64 * log_norm_s(lam_f, 0.0);
    (1.0 - r1.min(rinf).exp()).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditivityCheck {
    pub joint: f64,
    pub sum: f64,
    pub equal: bool,
}

/// Compares `C(G1⊗G2 ↦ F)` with `C(G1 ↦ F) + C(G2 ↦ F)` at tolerance 1e-6.
///
/// The joint value is never below the sum; it is strictly above it when the
/// two ratio curves are minimized at different `p`.
pub fn additivity_check(
    lam_f: &ShapeVector,
    lam_g1: &ShapeVector,
    lam_g2: &ShapeVector,
) -> Result<AdditivityCheck> {
    if is_trivial(lam_f) {
        return Err(Error::InvalidArgument("source shape (1) has infinite capacity".into()));
    }
    let joint = capacity(lam_f, &lam_g1.tensor(lam_g2)).value;
    let sum = capacity(lam_f, lam_g1).value + capacity(lam_f, lam_g2).value;
    Ok(AdditivityCheck {
        joint,
        sum,
        equal: (joint - sum).abs() <= 1e-6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(v: &[usize]) -> ShapeVector {
        ShapeVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn lp_norm_examples() {
        assert!((lp_norm(&sv(&[10, 3, 1, 1]), 1.0).unwrap() - 15.0).abs() < 1e-12);
        assert_eq!(lp_norm(&sv(&[5, 3]), f64::INFINITY).unwrap(), 5.0);
        assert!((lp_norm(&sv(&[2, 2]), 2.0).unwrap() - 8f64.sqrt()).abs() < 1e-12);
        assert!(lp_norm(&sv(&[2]), 0.5).is_err());
    }

    #[test]
    fn ratio_examples() {
        let r = eval_ratio(&sv(&[5, 3]), &sv(&[10, 3, 1, 1]), 1.0).unwrap();
        assert!((r - 15f64.ln() / 8f64.ln()).abs() < 1e-12);
        for p in [1.0, 1.5, 3.0, 10.0] {
            let r = eval_ratio(&sv(&[2]), &sv(&[1, 1]), p).unwrap();
            assert!((r - 1.0 / p).abs() < 1e-12);
        }
        let r = eval_ratio(&sv(&[1; 4]), &sv(&[1; 16]), f64::INFINITY).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        assert!(eval_ratio(&sv(&[1]), &sv(&[2]), 1.0).is_err());
        assert_eq!(eval_ratio(&sv(&[1, 1]), &sv(&[2]), f64::INFINITY).unwrap(), f64::INFINITY);
    }

    #[test]
    fn capacity_examples() {
        let rep = capacity(&sv(&[5, 3]), &sv(&[10, 3, 1, 1]));
        assert!((rep.value - 1.29916).abs() < 1e-4);
        assert!((rep.argmin_p.unwrap() - 1.15401).abs() < 1e-3);

        assert!((capacity(&sv(&[4]), &sv(&[2, 2])).value - 0.5).abs() < 1e-9);
        assert!((capacity(&sv(&[2, 2]), &sv(&[4])).value - 1.0).abs() < 1e-9);
        assert!((capacity(&sv(&[3, 2]), &sv(&[3, 2])).value - 1.0).abs() < 1e-12);

        let rep = capacity(&sv(&[1]), &sv(&[3]));
        assert_eq!(rep.special_case, SpecialCase::SourceShapeOne);
        assert!(rep.value.is_infinite());
    }

    #[test]
    fn capacity_is_below_sampled_ratios() {
        let (f, g) = (sv(&[4, 2, 1]), sv(&[3, 3, 2, 1]));
        let rep = capacity(&f, &g);
        for i in 0..200 {
            let s = i as f64 / 199.0;
            let p = if s == 0.0 { f64::INFINITY } else { 1.0 / s };
            assert!(rep.value <= eval_ratio(&f, &g, p).unwrap() + 1e-15);
        }
        assert!(rep.value <= rep.endpoint_p1 && rep.value <= rep.endpoint_pinf);
    }

    #[test]
    fn closed_form_examples() {
        assert!((capacity_closed_form(TableRow::SourceIdentity, &sv(&[2, 2]), 4).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(capacity_closed_form(TableRow::TargetDephasing, &sv(&[2, 1]), 5).unwrap(), 0.0);
        assert!((capacity_closed_form(TableRow::TargetDephasing, &sv(&[1, 1, 1]), 9).unwrap() - 2.0).abs() < 1e-12);
        assert!("bogus".parse::<TableRow>().is_err());
    }

    #[test]
    fn converse_floor_examples() {
        assert!((converse_error_floor(&sv(&[2]), &sv(&[1, 1])) - 0.5).abs() < 1e-12);
        assert_eq!(converse_error_floor(&sv(&[3, 1]), &sv(&[3, 1])), 0.0);
        let mut prev = 0.0;
        for k in 1..=6 {
            let f = converse_error_floor_powers(&sv(&[2]), &sv(&[1, 1]), 2 * k, k);
            assert!(f >= prev);
            prev = f;
        }
        assert!(prev > 0.98);
    }

    #[test]
    fn additivity_examples() {
        let a = additivity_check(&sv(&[2]), &sv(&[2]), &sv(&[3])).unwrap();
        assert!(a.equal);
        assert!((a.joint - (1.0 + 3f64.ln() / 2f64.ln())).abs() < 1e-6);
        let base = capacity(&sv(&[3, 1]), &sv(&[2, 2])).value;
        let b = additivity_check(&sv(&[3, 1]), &sv(&[2, 2]), &sv(&[1])).unwrap();
        assert!(b.equal && (b.joint - base).abs() < 1e-9);
    }

    #[test]
    fn joint_capacity_is_superadditive() {
        use rand::Rng;
        let mut rng = crate::random::rng_from_seed(5);
        let mut strict = 0;
        for _ in 0..200 {
            let mut draw = || {
                let l = rng.random_range(1..=3);
                ShapeVector::new((0..l).map(|_| rng.random_range(1..=5)).collect()).unwrap()
            };
            let (f, g1, g2) = (draw(), draw(), draw());
            if f.entries() == [1] {
                continue;
            }
            let a = additivity_check(&f, &g1, &g2).unwrap();
            assert!(a.joint >= a.sum - 1e-9, "{f} {g1} {g2} {a:?}");
            if !a.equal {
                strict += 1;
            }
        }
        // e.g. F=(5,3), G1=(5), G2=(5,5,2)
        assert!(strict > 0);
    }

    #[test]
    fn additivity_holds_for_identity_sources() {
        use rand::Rng;
        let mut rng = crate::random::rng_from_seed(6);
        for _ in 0..100 {
            let d = rng.random_range(2..=6);
            let mut draw = || {
                let l = rng.random_range(1..=3);
                ShapeVector::new((0..l).map(|_| rng.random_range(1..=5)).collect()).unwrap()
            };
            let (g1, g2) = (draw(), draw());
            assert!(additivity_check(&sv(&[d]), &g1, &g2).unwrap().equal);
            assert!(additivity_check(&sv(&vec![1; d]), &g1, &g2).unwrap().equal);
        }
    }

    #[test]
    fn log_norm_is_convex_in_s() {
        use rand::Rng;
        let mut rng = crate::random::rng_from_seed(7);
        for _ in 0..200 {
            let l = rng.random_range(1..=4);
            let v = ShapeVector::new((0..l).map(|_| rng.random_range(1..=6)).collect()).unwrap();
            let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
            let mid = log_norm_s(&v, 0.5 * (a + b));
            assert!(mid <= 0.5 * (log_norm_s(&v, a) + log_norm_s(&v, b)) + 1e-10);
        }
    }

    #[test]
    fn norms_are_multiplicative_and_monotone() {
        let (v, w) = (sv(&[4, 2, 1]), sv(&[3, 3]));
        let vw = v.tensor(&w);
        let mut prev = f64::INFINITY;
        for p in [1.0, 1.3, 2.0, 5.0, 40.0, f64::INFINITY] {
            let lhs = lp_norm(&vw, p).unwrap();
            let rhs = lp_norm(&v, p).unwrap() * lp_norm(&w, p).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs);
            let n = lp_norm(&v, p).unwrap();
            assert!(n <= prev + 1e-12);
            prev = n;
        }
    }
}
