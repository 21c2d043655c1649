//! Reduction of idempotent channels to their support, the fixed-point algebra
//! of the reduced adjoint, and its block decomposition.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, block_form_kraus, BlockData, Channel};
use crate::error::{Error, Result};
use crate::linalg::{
    self, column_space, frobenius, frobenius_distance, hermitian_part, identity, null_space,
    polar_partial_isometry, support_of, tensor_product, unvec_row, vec_row, zeros, ComplexMatrix,
    SupportData, ToleranceConfig,
};
use crate::random::{gaussian, random_complex_combination, rng_from_seed, DEFAULT_SEED};

const MAX_DRAWS: usize = 8;

/// Block dimensions `d_k`, sorted non-increasing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShapeVector(Vec<usize>);

impl ShapeVector {
    pub fn new(mut entries: Vec<usize>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("shape vector must be non-empty".into()));
        }
        if entries.contains(&0) {
            return Err(Error::InvalidArgument("shape entries must be positive".into()));
        }
        entries.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> usize {
        self.0[0]
    }

    pub fn min(&self) -> usize {
        *self.0.last().expect("non-empty")
    }

    pub fn sum(&self) -> usize {
        self.0.iter().sum()
    }

    /// All pairwise products, sorted.
    pub fn tensor(&self, other: &ShapeVector) -> ShapeVector {
        let mut out = Vec::with_capacity(self.len() * other.len());
        for &a in &self.0 {
            for &b in &other.0 {
                out.push(a * b);
            }
        }
        ShapeVector::new(out).expect("products of positive entries")
    }

    pub fn tensor_power(&self, n: usize) -> Result<ShapeVector> {
        if n == 0 {
            return Err(Error::InvalidArgument("tensor power requires n >= 1".into()));
        }
        let mut out = self.clone();
        for _ in 1..n {
            out = out.tensor(self);
        }
        Ok(out)
    }

    pub fn is_all_ones(&self) -> bool {
        self.0.iter().all(|&d| d == 1)
    }
}

impl std::fmt::Display for ShapeVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// An idempotent channel together with its compression to `supp F(𝟙)`.
#[derive(Clone, Debug)]
pub struct ReducedChannel {
    pub original: Channel,
    pub support: SupportData,
    pub reduced: Channel,
    pub idempotence_residual: f64,
}

impl ReducedChannel {
    pub fn dim(&self) -> usize {
        self.support.rank
    }

    /// The isometry `V` onto the support.
    pub fn isometry(&self) -> &ComplexMatrix {
        &self.support.isometry
    }
}

pub fn reduce(c: &Channel, tol: &ToleranceConfig) -> Result<ReducedChannel> {
    let eq = channel::is_idempotent(c, tol)?;
    if !eq.equal {
        return Err(Error::NotIdempotent {
            residual: eq.residual,
        });
    }
    let n = c.dim_in();
    let image_of_unit = c.apply_unchecked(&identity(n));
    let support = support_of(&image_of_unit, tol)?;
    if support.rank == 0 {
        return Err(Error::Degenerate("F(1) vanishes".into()));
    }
    let v = &support.isometry;
    let kraus = c.kraus().iter().map(|k| v.adjoint() * k * v).collect();
    let reduced = Channel::from_kraus_unchecked(support.rank, support.rank, kraus);
    let fixed = reduced.apply_unchecked(&identity(support.rank));
    let s = support_of(&fixed, tol)?;
    if s.rank != support.rank {
        return Err(Error::Degenerate(format!(
            "reduced channel has no full-rank fixed point (rank {} of {})",
            s.rank, support.rank
        )));
    }
    Ok(ReducedChannel {
        original: c.clone(),
        support,
        reduced,
        idempotence_residual: eq.residual,
    })
}

/// Reduction of `F1 ⊗ F2` assembled from the reductions of the factors.
pub fn reduce_tensor(a: &ReducedChannel, b: &ReducedChannel) -> ReducedChannel {
    let iso = tensor_product(&a.support.isometry, &b.support.isometry);
    let mut eigenvalues = Vec::new();
    for x in &a.support.eigenvalues {
        for y in &b.support.eigenvalues {
            eigenvalues.push(x * y);
        }
    }
    eigenvalues.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    ReducedChannel {
        original: channel::tensor(&a.original, &b.original),
        support: SupportData {
            projector: &iso * iso.adjoint(),
            rank: a.support.rank * b.support.rank,
            isometry: iso,
            eigenvalues,
        },
        reduced: channel::tensor(&a.reduced, &b.reduced),
        idempotence_residual: a.idempotence_residual + b.idempotence_residual,
    }
}

pub fn reduce_tensor_power(rc: &ReducedChannel, n: usize) -> Result<ReducedChannel> {
    if n == 0 {
        return Err(Error::InvalidArgument("tensor power requires n >= 1".into()));
    }
    let mut out = rc.clone();
    for _ in 1..n {
        out = reduce_tensor(&out, rc);
    }
    Ok(out)
}

/// Hilbert-Schmidt orthonormal basis of a *-subalgebra of `L(C^ambient_dim)`.
#[derive(Clone, Debug)]
pub struct AlgebraBasis {
    pub ambient_dim: usize,
    pub basis: Vec<ComplexMatrix>,
    pub dim: usize,
    /// Largest closure residual observed while validating.
    pub closure_residual: f64,
}

impl AlgebraBasis {
    /// Distance from `x` to the span of the basis.
    pub fn distance(&self, x: &ComplexMatrix) -> f64 {
        frobenius_distance(x, &self.project(x))
    }

    /// Orthogonal projection onto the span.
    pub fn project(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = zeros(x.nrows(), x.ncols());
        for b in &self.basis {
            out += b * linalg::hs_inner(b, x);
        }
        out
    }

    pub fn is_full(&self) -> bool {
        self.dim == self.ambient_dim * self.ambient_dim
    }

    /// Random Hermitian element (real Gaussian combination of Hermitian parts).
    pub fn random_hermitian(&self, rng: &mut impl Rng) -> ComplexMatrix {
        hermitian_part(&random_complex_combination(rng, &self.basis))
    }

    fn validate(&mut self, tol: &ToleranceConfig, seed: u64) -> Result<()> {
        let n = self.ambient_dim;
        let threshold = tol.eq_tol * (n as f64).sqrt().max(1.0);
        let unit_res = self.distance(&identity(n));
        if unit_res > threshold {
            return Err(Error::AlgebraClosure {
                operation: "unit",
                residual: unit_res,
            });
        }
        let mut worst = unit_res;
        for b in &self.basis {
            let r = self.distance(&b.adjoint());
            worst = worst.max(r);
            if r > threshold {
                return Err(Error::AlgebraClosure {
                    operation: "adjoint",
                    residual: r,
                });
            }
        }
        if !self.is_full() {
            let mut check = |x: &ComplexMatrix, y: &ComplexMatrix| -> Result<()> {
                let r = self.distance(&(x * y));
                worst = worst.max(r);
                if r > threshold {
                    return Err(Error::AlgebraClosure {
                        operation: "multiplication",
                        residual: r,
                    });
                }
                Ok(())
            };
            if self.dim <= 64 {
                for x in &self.basis {
                    for y in &self.basis {
                        check(x, y)?;
                    }
                }
            } else {
                let mut rng = rng_from_seed(seed ^ 0xC105);
                for _ in 0..64 {
                    let x = random_complex_combination(&mut rng, &self.basis);
                    let y = random_complex_combination(&mut rng, &self.basis);
                    let scale = frobenius(&x) * frobenius(&y);
                    check(&x.unscale(scale.sqrt()), &y.unscale(scale.sqrt()))?;
                }
            }
        }
        self.closure_residual = worst;
        Ok(())
    }
}

/// Range of `F̂*`, read off as the column space of its superoperator matrix.
pub fn fixed_point_algebra(rc: &ReducedChannel, tol: &ToleranceConfig) -> Result<AlgebraBasis> {
    let r = rc.dim();
    let sup = rc.reduced.superoperator().adjoint();
    let cols = column_space(&sup, tol.rank_tol);
    let basis: Vec<ComplexMatrix> = (0..cols.ncols())
        .map(|k| unvec_row(cols.column(k).as_slice(), r, r))
        .collect();
    let mut alg = AlgebraBasis {
        ambient_dim: r,
        dim: basis.len(),
        basis,
        closure_residual: 0.0,
    };
    alg.validate(tol, DEFAULT_SEED)?;
    Ok(alg)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DecompositionDiagnostics {
    pub idempotence_residual: f64,
    pub algebra_dim: usize,
    pub closure_residual: f64,
    pub matrix_unit_residual: f64,
    pub unitarity_residual: f64,
    /// Choi distance between the reduced channel and its block form.
    pub reconstruction_residual: f64,
    /// `tr(p_k)/d_k` before rounding, per block.
    pub multiplicity_raw: Vec<f64>,
    pub central_draws: usize,
}

/// Block structure of an idempotent channel on its support.
#[derive(Clone, Debug)]
pub struct IdempotentDecomposition {
    pub shape: ShapeVector,
    /// Block dimensions in block order (the same multiset as `shape`).
    pub dims: Vec<usize>,
    pub multiplicities: Vec<usize>,
    pub block_states: Vec<ComplexMatrix>,
    /// Unitary whose column `offset_k + u·m_k + β` is `e^{(k)}_{u1} f_β`.
    pub basis_change: ComplexMatrix,
    pub central_projections: Vec<ComplexMatrix>,
    pub matrix_units: Vec<Vec<Vec<ComplexMatrix>>>,
    pub diagnostics: DecompositionDiagnostics,
}

impl IdempotentDecomposition {
    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self) -> usize {
        self.basis_change.nrows()
    }

    pub fn matrix_unit(&self, k: usize, u: usize, v: usize) -> &ComplexMatrix {
        &self.matrix_units[k][u][v]
    }

    pub fn central_projection(&self, k: usize) -> &ComplexMatrix {
        &self.central_projections[k]
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dims.len());
        let mut acc = 0;
        for (d, m) in self.dims.iter().zip(&self.multiplicities) {
            out.push(acc);
            acc += d * m;
        }
        out
    }

    /// Columns of the basis change spanning block `k`.
    pub fn block_isometry(&self, k: usize) -> ComplexMatrix {
        let off = self.offsets()[k];
        self.basis_change
            .columns(off, self.dims[k] * self.multiplicities[k])
            .into_owned()
    }

    /// Isometry `C^{d_k} → H_0`, `|u⟩ ↦ e_{u1} f_β` for a fixed `β`.
    pub fn first_factor_isometry(&self, k: usize, beta: usize) -> ComplexMatrix {
        let off = self.offsets()[k];
        let (d, m) = (self.dims[k], self.multiplicities[k]);
        ComplexMatrix::from_fn(self.dim(), d, |r, u| self.basis_change[(r, off + u * m + beta)])
    }

    pub fn blocks(&self) -> Vec<BlockData> {
        self.dims
            .iter()
            .zip(&self.multiplicities)
            .zip(&self.block_states)
            .map(|((&d, &m), rho)| BlockData {
                d,
                m,
                rho: rho.clone(),
            })
            .collect()
    }

    /// The block form `x ↦ U[Σ tr_{k,2}(P_k U* x U P_k) ⊗ ρ_k]U*` as a channel.
    pub fn reconstruct(&self, tol: &ToleranceConfig) -> Result<Channel> {
        let u = &self.basis_change;
        let kraus = block_form_kraus(&self.blocks(), tol)?
            .into_iter()
            .map(|k| u * k * u.adjoint())
            .collect();
        Ok(Channel::from_kraus_unchecked(self.dim(), self.dim(), kraus))
    }

    /// Decomposition of the tensor product of the two reduced channels.
    pub fn tensor(&self, other: &IdempotentDecomposition) -> IdempotentDecomposition {
        let (oa, ob) = (self.offsets(), other.offsets());
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for i in 0..self.num_blocks() {
            for j in 0..other.num_blocks() {
                pairs.push((i, j));
            }
        }
        pairs.sort_by(|a, b| (other.dims[b.1] * self.dims[b.0]).cmp(&(other.dims[a.1] * self.dims[a.0])));

        let n = self.dim() * other.dim();
        let mut u = zeros(n, n);
        let mut dims = Vec::new();
        let mut mults = Vec::new();
        let mut states = Vec::new();
        let mut projs = Vec::new();
        let mut units = Vec::new();
        let mut col = 0;
        for &(i, j) in &pairs {
            let (d1, m1, d2, m2) = (
                self.dims[i],
                self.multiplicities[i],
                other.dims[j],
                other.multiplicities[j],
            );
            for u1 in 0..d1 {
                for u2 in 0..d2 {
                    for b1 in 0..m1 {
                        for b2 in 0..m2 {
                            let c1 = self.basis_change.column(oa[i] + u1 * m1 + b1);
                            let c2 = other.basis_change.column(ob[j] + u2 * m2 + b2);
                            u.set_column(col, &c1.kronecker(&c2));
                            col += 1;
                        }
                    }
                }
            }
            dims.push(d1 * d2);
            mults.push(m1 * m2);
            states.push(tensor_product(&self.block_states[i], &other.block_states[j]));
            projs.push(tensor_product(
                &self.central_projections[i],
                &other.central_projections[j],
            ));
            let d = d1 * d2;
            let block_units = (0..d)
                .map(|a| {
                    (0..d)
                        .map(|b| {
                            tensor_product(
                                &self.matrix_units[i][a / d2][b / d2],
                                &other.matrix_units[j][a % d2][b % d2],
                            )
                        })
                        .collect()
                })
                .collect();
            units.push(block_units);
        }
        let shape = ShapeVector::new(dims.clone()).expect("positive dims");
        let mut out = IdempotentDecomposition {
            shape,
            dims,
            multiplicities: mults,
            block_states: states,
            basis_change: u,
            central_projections: projs,
            matrix_units: units,
            diagnostics: DecompositionDiagnostics {
                idempotence_residual: self.diagnostics.idempotence_residual
                    + other.diagnostics.idempotence_residual,
                algebra_dim: self.diagnostics.algebra_dim * other.diagnostics.algebra_dim,
                closure_residual: self
                    .diagnostics
                    .closure_residual
                    .max(other.diagnostics.closure_residual),
                reconstruction_residual: self.diagnostics.reconstruction_residual
                    + other.diagnostics.reconstruction_residual,
                central_draws: 0,
                ..Default::default()
            },
        };
        out.diagnostics.multiplicity_raw = out.multiplicities.iter().map(|&m| m as f64).collect();
        out.diagnostics.matrix_unit_residual = matrix_unit_residual(&out);
        out.diagnostics.unitarity_residual =
            frobenius_distance(&(out.basis_change.adjoint() * &out.basis_change), &identity(n));
        out
    }

    pub fn tensor_power(&self, n: usize) -> Result<IdempotentDecomposition> {
        if n == 0 {
            return Err(Error::InvalidArgument("tensor power requires n >= 1".into()));
        }
        let mut out = self.clone();
        for _ in 1..n {
            out = out.tensor(self);
        }
        Ok(out)
    }
}

/// Largest violation of `e_uv e_wz = δ_vw e_uz`, `e_uv* = e_vu`, `Σ e_uu = p`.
pub fn matrix_unit_residual(dec: &IdempotentDecomposition) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, units) in dec.matrix_units.iter().enumerate() {
        let d = units.len();
        let mut diag_sum = zeros(dec.dim(), dec.dim());
        for u in 0..d {
            diag_sum += &units[u][u];
            for v in 0..d {
                worst = worst.max(frobenius_distance(&units[u][v].adjoint(), &units[v][u]));
                // products against a single column suffice for the relations
                for w in 0..d {
                    let prod = &units[u][v] * &units[v][w];
                    worst = worst.max(frobenius_distance(&prod, &units[u][w]));
                    if d > 1 {
                        let other = (v + 1) % d;
                        let zero = &units[u][v] * &units[other][w];
                        worst = worst.max(frobenius(&zero));
                    }
                }
            }
        }
        worst = worst.max(frobenius_distance(&diag_sum, &dec.central_projections[k]));
    }
    worst
}

/// Center of the algebra: elements commuting with a few generic elements.
fn center_basis(alg: &AlgebraBasis, rng: &mut impl Rng, tol: &ToleranceConfig) -> Vec<ComplexMatrix> {
    let n = alg.ambient_dim;
    let probes: Vec<ComplexMatrix> = (0..3)
        .map(|_| random_complex_combination(rng, &alg.basis))
        .collect();
    let rows = probes.len() * n * n;
    let mut system = zeros(rows, alg.dim);
    for (i, b) in alg.basis.iter().enumerate() {
        for (j, a) in probes.iter().enumerate() {
            let comm = b * a - a * b;
            system
                .view_mut((j * n * n, i), (n * n, 1))
                .copy_from(&vec_row(&comm));
        }
    }
    // a commutative algebra leaves only rounding noise, which a relative cutoff would keep
    let probe_scale = probes.iter().map(frobenius).fold(1.0, f64::max);
    if frobenius(&system) <= tol.rank_tol * probe_scale {
        return alg.basis.clone();
    }
    let null = null_space(&system, tol.cluster_tol);
    (0..null.ncols())
        .map(|k| {
            let mut z = zeros(n, n);
            for (i, b) in alg.basis.iter().enumerate() {
                z += b * null[(i, k)];
            }
            z
        })
        .collect()
}

/// Splits sorted eigenvalues into clusters at gaps larger than `gap`.
fn cluster_indices(values: &[f64], gap: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match clusters.last_mut() {
            Some(last) if (values[*last.last().unwrap()] - v).abs() <= gap => last.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    clusters
}

fn projector_from_columns(vectors: &ComplexMatrix, idx: &[usize]) -> ComplexMatrix {
    let n = vectors.nrows();
    let mut p = zeros(n, n);
    for &i in idx {
        let col = vectors.column(i);
        p += col * col.adjoint();
    }
    p
}

/// Minimal central projections from a generic central element.
fn central_projections(
    alg: &AlgebraBasis,
    rng: &mut impl Rng,
    tol: &ToleranceConfig,
) -> Result<(Vec<ComplexMatrix>, usize)> {
    let n = alg.ambient_dim;
    for draw in 1..=MAX_DRAWS {
        let center = center_basis(alg, rng, tol);
        if center.is_empty() {
            continue;
        }
        let mut herm = Vec::with_capacity(2 * center.len());
        for z in &center {
            herm.push(hermitian_part(z));
            herm.push(hermitian_part(&(z * Complex64::new(0.0, 1.0))));
        }
        let mut h = zeros(n, n);
        for x in &herm {
            h += x.scale(gaussian(rng));
        }
        let scale = linalg::operator_norm(&h).max(f64::MIN_POSITIVE);
        let spec = linalg::eigh_hermitian(h.unscale(scale));
        let clusters = cluster_indices(&spec.values, tol.cluster_tol.sqrt());
        if clusters.len() != center.len() {
            continue;
        }
        let projs = clusters
            .iter()
            .map(|idx| projector_from_columns(&spec.vectors, idx))
            .collect();
        return Ok((projs, draw));
    }
    Err(Error::Clustering {
        attempts: MAX_DRAWS,
        detail: "central element eigenvalues do not separate the center".into(),
    })
}

struct BlockPieces {
    d: usize,
    m: usize,
    m_raw: f64,
    projection: ComplexMatrix,
    units: Vec<Vec<ComplexMatrix>>,
    /// Columns `e_{u1} f_β` at `u·m + β`.
    columns: ComplexMatrix,
}

fn decompose_block(
    alg: &AlgebraBasis,
    p: &ComplexMatrix,
    rng: &mut impl Rng,
    tol: &ToleranceConfig,
) -> Result<BlockPieces> {
    let n = alg.ambient_dim;
    let mut corner = zeros(n * n, alg.dim);
    for (i, b) in alg.basis.iter().enumerate() {
        corner.set_column(i, &vec_row(&(p * b * p)));
    }
    let corner_basis = column_space(&corner, tol.rank_tol.max(tol.cluster_tol * 1e-2));
    let corner_dim = corner_basis.ncols();
    let d_raw = (corner_dim as f64).sqrt();
    let d = d_raw.round() as usize;
    if d == 0 || d * d != corner_dim {
        return Err(Error::Integrality {
            what: "block dimension",
            value: d_raw,
        });
    }
    let tr = p.trace().re;
    let m_raw = tr / d as f64;
    let m = m_raw.round() as usize;
    if m == 0 || (m_raw - m as f64).abs() > 1e-4 {
        return Err(Error::Integrality {
            what: "block multiplicity",
            value: m_raw,
        });
    }
    let elems: Vec<ComplexMatrix> = (0..corner_dim)
        .map(|k| unvec_row(corner_basis.column(k).as_slice(), n, n))
        .collect();
    let range = support_of(p, tol)?.isometry;

    for _ in 0..MAX_DRAWS {
        // generic Hermitian corner element has d eigenvalues of multiplicity m on p
        let a = hermitian_part(&random_complex_combination(rng, &elems));
        let local = range.adjoint() * &a * &range;
        let scale = linalg::operator_norm(&local).max(f64::MIN_POSITIVE);
        let spec = linalg::eigh_hermitian(local.unscale(scale));
        let clusters = cluster_indices(&spec.values, tol.cluster_tol.sqrt());
        if clusters.len() != d || clusters.iter().any(|c| c.len() != m) {
            continue;
        }
        let vecs = &range * &spec.vectors;
        let diag: Vec<ComplexMatrix> = clusters
            .iter()
            .map(|idx| projector_from_columns(&vecs, idx))
            .collect();
        let b = random_complex_combination(rng, &elems);
        let mut from_first = Vec::with_capacity(d);
        for e_uu in &diag {
            from_first.push(polar_partial_isometry(&(e_uu * &b * &diag[0]), m));
        }
        // e_{11} from the polar part would only be a partial isometry onto itself
        from_first[0] = diag[0].clone();
        let units: Vec<Vec<ComplexMatrix>> = (0..d)
            .map(|u| {
                (0..d)
                    .map(|v| &from_first[u] * from_first[v].adjoint())
                    .collect()
            })
            .collect();
        let f: Vec<usize> = clusters[0].clone();
        let mut columns = zeros(n, d * m);
        for u in 0..d {
            for (beta, &idx) in f.iter().enumerate() {
                let col = &from_first[u] * vecs.column(idx);
                columns.set_column(u * m + beta, &col);
            }
        }
        return Ok(BlockPieces {
            d,
            m,
            m_raw,
            projection: p.clone(),
            units,
            columns,
        });
    }
    Err(Error::Clustering {
        attempts: MAX_DRAWS,
        detail: format!("could not split a corner of dimension {d}x{d} into {d} groups of size {m}"),
    })
}

pub fn decompose(
    rc: &ReducedChannel,
    alg: &AlgebraBasis,
    tol: &ToleranceConfig,
    seed: u64,
) -> Result<IdempotentDecomposition> {
    let n = rc.dim();
    if alg.ambient_dim != n {
        return Err(Error::Dimension(format!(
            "algebra acts on dimension {}, reduced channel on {n}",
            alg.ambient_dim
        )));
    }
    let mut rng = rng_from_seed(seed);
    let (projs, draws) = central_projections(alg, &mut rng, tol)?;
    let mut pieces = projs
        .iter()
        .map(|p| decompose_block(alg, p, &mut rng, tol))
        .collect::<Result<Vec<_>>>()?;
    pieces.sort_by(|a, b| b.d.cmp(&a.d));

    let total: usize = pieces.iter().map(|b| b.d * b.m).sum();
    if total != n {
        return Err(Error::Integrality {
            what: "sum of d_k m_k",
            value: total as f64,
        });
    }
    let algebra_dim: usize = pieces.iter().map(|b| b.d * b.d).sum();
    if algebra_dim != alg.dim {
        return Err(Error::Integrality {
            what: "sum of d_k^2",
            value: algebra_dim as f64,
        });
    }

    let mut u = zeros(n, n);
    let mut off = 0;
    for b in &pieces {
        u.view_mut((0, off), (n, b.d * b.m)).copy_from(&b.columns);
        off += b.d * b.m;
    }

    // ρ_k from the image of |0⟩⟨0| ⊗ 𝟙/m in block k
    let mut states = Vec::with_capacity(pieces.len());
    off = 0;
    for (k, b) in pieces.iter().enumerate() {
        let mut x = zeros(n, n);
        for beta in 0..b.m {
            x[(off + beta, off + beta)] = linalg::c(1.0 / b.m as f64);
        }
        let y = u.adjoint() * rc.reduced.apply_unchecked(&(&u * x * u.adjoint())) * &u;
        let local = y.view((off, off), (b.d * b.m, b.d * b.m)).into_owned();
        let rho = linalg::partial_trace(&local, &[(b.d, b.m)], linalg::Factor::First)?;
        let rho = hermitian_part(&rho);
        channel::check_density(&rho, tol).map_err(|e| Error::Block {
            block: k,
            detail: e.to_string(),
        })?;
        states.push(rho);
        off += b.d * b.m;
    }

    let shape = ShapeVector::new(pieces.iter().map(|b| b.d).collect())?;
    let mut dec = IdempotentDecomposition {
        shape,
        dims: pieces.iter().map(|b| b.d).collect(),
        multiplicities: pieces.iter().map(|b| b.m).collect(),
        block_states: states,
        basis_change: u,
        central_projections: pieces.iter().map(|b| b.projection.clone()).collect(),
        matrix_units: pieces.iter().map(|b| b.units.clone()).collect(),
        diagnostics: DecompositionDiagnostics {
            idempotence_residual: rc.idempotence_residual,
            algebra_dim: alg.dim,
            closure_residual: alg.closure_residual,
            multiplicity_raw: pieces.iter().map(|b| b.m_raw).collect(),
            central_draws: draws,
            ..Default::default()
        },
    };
    dec.diagnostics.matrix_unit_residual = matrix_unit_residual(&dec);
    dec.diagnostics.unitarity_residual =
        frobenius_distance(&(dec.basis_change.adjoint() * &dec.basis_change), &identity(n));
    let rebuilt = dec.reconstruct(tol)?;
    dec.diagnostics.reconstruction_residual = channel::channels_equal(&rebuilt, &rc.reduced, tol)?.residual;
    Ok(dec)
}

/// Everything derived from an idempotent channel.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub reduced: ReducedChannel,
    pub algebra: AlgebraBasis,
    pub decomposition: IdempotentDecomposition,
}

impl Analysis {
    pub fn shape(&self) -> &ShapeVector {
        &self.decomposition.shape
    }

    /// Analysis of `F^{⊗n}` built from this one without re-decomposing.
    pub fn tensor_power(&self, n: usize) -> Result<Analysis> {
        let reduced = reduce_tensor_power(&self.reduced, n)?;
        let decomposition = self.decomposition.tensor_power(n)?;
        let algebra = algebra_from_decomposition(&decomposition);
        Ok(Analysis {
            reduced,
            algebra,
            decomposition,
        })
    }

    pub fn tensor(&self, other: &Analysis) -> Analysis {
        let decomposition = self.decomposition.tensor(&other.decomposition);
        Analysis {
            reduced: reduce_tensor(&self.reduced, &other.reduced),
            algebra: algebra_from_decomposition(&decomposition),
            decomposition,
        }
    }
}

/// Orthonormal basis `e^{(k)}_{uv} ⊗ 𝟙/√m_k` read off the matrix units.
pub fn algebra_from_decomposition(dec: &IdempotentDecomposition) -> AlgebraBasis {
    let mut basis = Vec::new();
    for (k, units) in dec.matrix_units.iter().enumerate() {
        let s = (dec.multiplicities[k] as f64).sqrt();
        for row in units {
            for e in row {
                basis.push(e.unscale(s));
            }
        }
    }
    AlgebraBasis {
        ambient_dim: dec.dim(),
        dim: basis.len(),
        basis,
        closure_residual: dec.diagnostics.closure_residual,
    }
}

pub fn analyze(c: &Channel, tol: &ToleranceConfig, seed: u64) -> Result<Analysis> {
    let reduced = reduce(c, tol)?;
    let algebra = fixed_point_algebra(&reduced, tol)?;
    let decomposition = decompose(&reduced, &algebra, tol, seed)?;
    Ok(Analysis {
        reduced,
        algebra,
        decomposition,
    })
}

pub fn shape_of(c: &Channel, tol: &ToleranceConfig) -> Result<ShapeVector> {
    Ok(analyze(c, tol, DEFAULT_SEED)?.decomposition.shape)
}

/// `Ê(x) = V*F(x)V`, `D̂(x) = VxV*`, and the reverse pair `E = D̂`, `D = Ê`.
#[derive(Clone, Debug)]
pub struct ConversionChannels {
    pub e_hat: Channel,
    pub d_hat: Channel,
    pub e: Channel,
    pub d: Channel,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConversionResiduals {
    /// `‖J(F) − J(D̂ F̂ Ê)‖_F`.
    pub full: f64,
    /// `‖J(F̂) − J(D F E)‖_F`.
    pub reduced: f64,
}

pub fn conversion_channels(rc: &ReducedChannel) -> ConversionChannels {
    let v = rc.isometry();
    let n = rc.original.dim_in();
    let r = rc.dim();
    let e_hat = Channel::from_kraus_unchecked(
        n,
        r,
        rc.original.kraus().iter().map(|k| v.adjoint() * k).collect(),
    );
    let d_hat = Channel::from_kraus_unchecked(r, n, vec![v.clone()]);
    ConversionChannels {
        e: d_hat.clone(),
        d: e_hat.clone(),
        e_hat,
        d_hat,
    }
}

impl ConversionChannels {
    pub fn verify(&self, rc: &ReducedChannel, tol: &ToleranceConfig) -> Result<ConversionResiduals> {
        let full = channel::compose(&self.d_hat, &channel::compose(&rc.reduced, &self.e_hat)?)?;
        let red = channel::compose(&self.d, &channel::compose(&rc.original, &self.e)?)?;
        Ok(ConversionResiduals {
            full: channel::channels_equal(&full, &rc.original, tol)?.residual,
            reduced: channel::channels_equal(&red, &rc.reduced, tol)?.residual,
        })
    }
}

/// Support projection `F(𝟙)^0` of any channel (used for the range check `eF(x)e = F(x)`).
pub fn range_projection(c: &Channel, tol: &ToleranceConfig) -> Result<ComplexMatrix> {
    Ok(support_of(&c.apply(&identity(c.dim_in()))?, tol)?.projector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{dephasing, identity_channel, make_block_idempotent, replacer, BlockSpec};
    use crate::linalg::diag_real;
    use crate::random::{random_density, random_matrix};

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn spec(blocks: Vec<(usize, usize)>, ambient: usize, seed: u64) -> BlockSpec {
        let mut rng = rng_from_seed(seed);
        BlockSpec {
            blocks: blocks
                .into_iter()
                .map(|(d, m)| BlockData {
                    d,
                    m,
                    rho: random_density(&mut rng, m),
                })
                .collect(),
            ambient_dim: ambient,
            embedding_isometry: None,
        }
    }

    #[test]
    fn reduce_examples() {
        let r = replacer(2, &diag_real(&[1.0, 0.0]), &tol()).unwrap();
        let rc = reduce(&r, &tol()).unwrap();
        assert_eq!(rc.dim(), 1);
        assert!(channel::channels_equal(&rc.reduced, &identity_channel(1), &tol()).unwrap().equal);

        let rc = reduce(&identity_channel(3), &tol()).unwrap();
        assert_eq!(rc.dim(), 3);

        let ch = make_block_idempotent(&spec(vec![(2, 2), (1, 1)], 8, 1), 4, &tol()).unwrap();
        assert_eq!(reduce(&ch, &tol()).unwrap().dim(), 5);
    }

    #[test]
    fn reduce_rejects_non_idempotent() {
        let u = crate::random::random_unitary_channel(&mut rng_from_seed(3), 3);
        assert!(matches!(reduce(&u, &tol()), Err(Error::NotIdempotent { .. })));
    }

    #[test]
    fn reduced_matches_compression_formula() {
        let ch = make_block_idempotent(&spec(vec![(2, 2)], 6, 2), 5, &tol()).unwrap();
        let rc = reduce(&ch, &tol()).unwrap();
        let v = rc.isometry();
        let x = random_matrix(&mut rng_from_seed(7), 4, 4);
        let direct = v.adjoint() * ch.apply(&(v * &x * v.adjoint())).unwrap() * v;
        assert!(frobenius_distance(&direct, &rc.reduced.apply(&x).unwrap()) < 1e-10);
        assert!(channel::is_idempotent(&rc.reduced, &tol()).unwrap().equal);
    }

    #[test]
    fn fixed_point_algebra_examples() {
        let alg = fixed_point_algebra(&reduce(&identity_channel(3), &tol()).unwrap(), &tol()).unwrap();
        assert_eq!(alg.dim, 9);
        let alg = fixed_point_algebra(&reduce(&dephasing(4), &tol()).unwrap(), &tol()).unwrap();
        assert_eq!(alg.dim, 4);
        let ch = make_block_idempotent(&spec(vec![(2, 3)], 6, 3), 1, &tol()).unwrap();
        let alg = fixed_point_algebra(&reduce(&ch, &tol()).unwrap(), &tol()).unwrap();
        assert_eq!(alg.dim, 4);
    }

    #[test]
    fn decompose_examples() {
        let a = analyze(&identity_channel(4), &tol(), 1).unwrap();
        assert_eq!(a.decomposition.shape.entries(), &[4]);
        assert_eq!(a.decomposition.multiplicities, vec![1]);

        let a = analyze(&dephasing(3), &tol(), 1).unwrap();
        assert_eq!(a.decomposition.shape.entries(), &[1, 1, 1]);
        assert_eq!(a.decomposition.multiplicities, vec![1, 1, 1]);
    }

    #[test]
    fn decompose_recovers_block_states() {
        let s = spec(vec![(2, 3), (1, 1)], 7, 11);
        let ch = make_block_idempotent(&s, 12, &tol()).unwrap();
        let a = analyze(&ch, &tol(), 13).unwrap();
        let dec = &a.decomposition;
        assert_eq!(dec.shape.entries(), &[2, 1]);
        assert_eq!(dec.multiplicities, vec![3, 1]);
        let want = linalg::eigh(&s.blocks[0].rho, &tol()).unwrap().values;
        let got = linalg::eigh(&dec.block_states[0], &tol()).unwrap().values;
        for (w, g) in want.iter().zip(&got) {
            assert!((w - g).abs() < 1e-8, "{want:?} vs {got:?}");
        }
        assert!(dec.diagnostics.matrix_unit_residual < 1e-8);
        assert!(dec.diagnostics.reconstruction_residual < 1e-8);
        assert!(dec.diagnostics.unitarity_residual < 1e-8);
    }

    #[test]
    fn shape_examples() {
        assert_eq!(shape_of(&dephasing(5), &tol()).unwrap().entries(), &[1; 5]);
        assert_eq!(shape_of(&identity_channel(7), &tol()).unwrap().entries(), &[7]);
        let r = replacer(2, &diag_real(&[1.0, 0.0]), &tol()).unwrap();
        assert_eq!(shape_of(&r, &tol()).unwrap().entries(), &[1]);
    }

    #[test]
    fn shape_is_multiplicative() {
        let f = make_block_idempotent(&spec(vec![(2, 1), (1, 1)], 4, 21), 1, &tol()).unwrap();
        let g = dephasing(2);
        let sf = shape_of(&f, &tol()).unwrap();
        let sg = shape_of(&g, &tol()).unwrap();
        let both = shape_of(&channel::tensor(&f, &g), &tol()).unwrap();
        assert_eq!(both, sf.tensor(&sg));
    }

    #[test]
    fn tensor_decomposition_is_valid() {
        let f = make_block_idempotent(&spec(vec![(2, 2), (1, 1)], 5, 31), 2, &tol()).unwrap();
        let a = analyze(&f, &tol(), 3).unwrap();
        let b = analyze(&dephasing(2), &tol(), 3).unwrap();
        let t = a.tensor(&b);
        assert_eq!(t.shape().entries(), &[2, 2, 1, 1]);
        assert!(t.decomposition.diagnostics.matrix_unit_residual < 1e-8);
        let rebuilt = t.decomposition.reconstruct(&tol()).unwrap();
        assert!(channel::channels_equal(&rebuilt, &t.reduced.reduced, &tol()).unwrap().equal);
    }

    #[test]
    fn conversion_channel_examples() {
        for ch in [
            identity_channel(3),
            replacer(2, &diag_real(&[1.0, 0.0]), &tol()).unwrap(),
            make_block_idempotent(&spec(vec![(1, 2), (1, 1)], 6, 41), 5, &tol()).unwrap(),
        ] {
            let rc = reduce(&ch, &tol()).unwrap();
            let conv = conversion_channels(&rc);
            let res = conv.verify(&rc, &tol()).unwrap();
            assert!(res.full < 1e-8 && res.reduced < 1e-8, "{res:?}");
        }
        let rc = reduce(&identity_channel(2), &tol()).unwrap();
        let conv = conversion_channels(&rc);
        for ch in [&conv.e_hat, &conv.d_hat, &conv.e, &conv.d] {
            assert_eq!(ch.dim_in(), 2);
            assert!(channel::channels_equal(ch, &identity_channel(2), &tol()).unwrap().equal);
        }
    }

    #[test]
    fn range_is_inside_support() {
        let ch = make_block_idempotent(&spec(vec![(2, 1)], 5, 51), 6, &tol()).unwrap();
        let e = range_projection(&ch, &tol()).unwrap();
        let x = random_matrix(&mut rng_from_seed(52), 5, 5);
        let y = ch.apply(&x).unwrap();
        assert!(frobenius_distance(&(&e * &y * &e), &y) < 1e-10);
    }
}
