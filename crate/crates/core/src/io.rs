//! File formats, fixtures and the numeric regression table.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approx::DEFAULT_DELTA_MAX;
use crate::capacity::{capacity, capacity_closed_form, CapacityReport, RateCurvePoint, TableRow, DEFAULT_GRID};
use crate::channel::{dephasing, identity_channel, make_block_idempotent, BlockData, BlockSpec, Channel};
use crate::emulation::{DEFAULT_BUDGET, MAX_BUDGET};
use crate::error::{Error, Result};
use crate::linalg::{identity, unit, ComplexMatrix, ToleranceConfig};
use crate::random::{rng_from_seed, DEFAULT_SEED};
use crate::structure::{Analysis, DecompositionDiagnostics, ShapeVector};

pub const SCHEMA_VERSION: &str = "1";

/// Kraus operators as nested `[re, im]` pairs, row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelJson {
    pub dim_in: usize,
    pub dim_out: usize,
    pub kraus: Vec<Vec<Vec<[f64; 2]>>>,
}

impl From<&Channel> for ChannelJson {
    fn from(ch: &Channel) -> Self {
        let kraus = ch
            .kraus()
            .iter()
            .map(|k| {
                (0..k.nrows())
                    .map(|i| (0..k.ncols()).map(|j| [k[(i, j)].re, k[(i, j)].im]).collect())
                    .collect()
            })
            .collect();
        Self {
            dim_in: ch.dim_in(),
            dim_out: ch.dim_out(),
            kraus,
        }
    }
}

impl ChannelJson {
    fn matrices(&self) -> Result<Vec<ComplexMatrix>> {
        let mut out = Vec::with_capacity(self.kraus.len());
        for (idx, rows) in self.kraus.iter().enumerate() {
            if rows.len() != self.dim_out || rows.iter().any(|r| r.len() != self.dim_in) {
                return Err(Error::Dimension(format!(
                    "Kraus operator {idx} is not {}x{}",
                    self.dim_out, self.dim_in
                )));
            }
            let m = ComplexMatrix::from_fn(self.dim_out, self.dim_in, |i, j| {
                let [re, im] = rows[i][j];
                Complex64::new(re, im)
            });
            out.push(m);
        }
        Ok(out)
    }

    /// Validated CPTP channel.
    pub fn to_channel(&self, tol: &ToleranceConfig) -> Result<Channel> {
        Channel::new(self.dim_in, self.dim_out, self.matrices()?, tol)
    }

    /// No CPTP check; the entries are taken as they are.
    pub fn to_channel_unchecked(&self) -> Result<Channel> {
        Ok(Channel::from_kraus_unchecked(self.dim_in, self.dim_out, self.matrices()?))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_shape: Option<ShapeVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelFile {
    pub schema_version: String,
    pub channel: ChannelJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<ChannelMetadata>,
}

impl ChannelFile {
    pub fn new(ch: &Channel, metadata: Option<ChannelMetadata>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            channel: ChannelJson::from(ch),
            metadata,
        }
    }

    pub fn named(ch: &Channel, name: &str, expected_shape: Option<ShapeVector>) -> Self {
        Self::new(
            ch,
            Some(ChannelMetadata {
                name: Some(name.into()),
                expected_shape,
            }),
        )
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(s)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported schema_version {:?}",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }

    pub fn name(&self) -> Option<&str> {
        self.metadata.as_ref().and_then(|m| m.name.as_deref())
    }

    pub fn expected_shape(&self) -> Option<&ShapeVector> {
        self.metadata.as_ref().and_then(|m| m.expected_shape.as_ref())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tolerances: ToleranceConfig,
    pub seed: u64,
    pub budget_dim: usize,
    pub delta_max: f64,
    pub grid_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tolerances: ToleranceConfig::default(),
            seed: DEFAULT_SEED,
            budget_dim: DEFAULT_BUDGET,
            delta_max: DEFAULT_DELTA_MAX,
            grid_points: DEFAULT_GRID,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.tolerances.validate()?;
        if self.budget_dim == 0 || self.budget_dim > MAX_BUDGET {
            return Err(Error::InvalidArgument(format!(
                "budget_dim must lie in 1..={MAX_BUDGET}, got {}",
                self.budget_dim
            )));
        }
        if !(self.delta_max > 0.0 && self.delta_max.is_finite()) {
            return Err(Error::InvalidArgument("delta_max must be positive".into()));
        }
        if self.grid_points < 3 {
            return Err(Error::InvalidArgument("grid_points must be at least 3".into()));
        }
        Ok(())
    }
}

/// Serializable summary of [`Analysis`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub dim_in: usize,
    pub support_dim: usize,
    pub shape: ShapeVector,
    pub dims: Vec<usize>,
    pub multiplicities: Vec<usize>,
    pub diagnostics: DecompositionDiagnostics,
}

impl From<&Analysis> for DecompositionReport {
    fn from(a: &Analysis) -> Self {
        let dec = &a.decomposition;
        Self {
            dim_in: a.reduced.original.dim_in(),
            support_dim: a.reduced.dim(),
            shape: dec.shape.clone(),
            dims: dec.dims.clone(),
            multiplicities: dec.multiplicities.clone(),
            diagnostics: dec.diagnostics.clone(),
        }
    }
}

/// Formats with 12 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0 as f64 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.11e}")
    }
}

/// Rate curve as CSV with columns `s,p,ratio`.
pub fn curve_csv(points: &[RateCurvePoint]) -> String {
    let mut out = String::from("s,p,ratio\n");
    for pt in points {
        out.push_str(&format!("{},{},{}\n", fmt_sig(pt.s), fmt_sig(pt.p), fmt_sig(pt.ratio)));
    }
    out
}

/// A channel with the given shape, multiplicities 1 and trivial states.
pub fn shape_fixture(shape: &[usize], extra_dim: usize, seed: u64, tol: &ToleranceConfig) -> Result<Channel> {
    let blocks: Vec<BlockData> = shape
        .iter()
        .map(|&d| BlockData {
            d,
            m: 1,
            rho: identity(1),
        })
        .collect();
    let ambient_dim = shape.iter().sum::<usize>() + extra_dim;
    make_block_idempotent(
        &BlockSpec {
            blocks,
            ambient_dim,
            embedding_isometry: None,
        },
        seed,
        tol,
    )
}

pub const FIXTURE_NAMES: &[&str] = &[
    "identity2",
    "identity4",
    "dephasing2",
    "dephasing3",
    "dephasing4",
    "shape21",
    "shape22",
    "shape53",
    "shape10_3_1_1",
    "non_idempotent",
];

/// Deterministic fixture channels used by tests and the `examples` command.
pub fn fixture(name: &str) -> Result<ChannelFile> {
    let tol = ToleranceConfig::default();
    let sv = |v: &[usize]| ShapeVector::new(v.to_vec());
    let (ch, shape) = match name {
        "identity2" => (identity_channel(2), Some(sv(&[2])?)),
        "identity4" => (identity_channel(4), Some(sv(&[4])?)),
        "dephasing2" => (dephasing(2), Some(sv(&[1, 1])?)),
        "dephasing3" => (dephasing(3), Some(sv(&[1, 1, 1])?)),
        "dephasing4" => (dephasing(4), Some(sv(&[1, 1, 1, 1])?)),
        "shape21" => (shape_fixture(&[2, 1], 1, 21, &tol)?, Some(sv(&[2, 1])?)),
        "shape22" => (shape_fixture(&[2, 2], 0, 22, &tol)?, Some(sv(&[2, 2])?)),
        "shape53" => (shape_fixture(&[5, 3], 0, 53, &tol)?, Some(sv(&[5, 3])?)),
        "shape10_3_1_1" => (shape_fixture(&[10, 3, 1, 1], 0, 1031, &tol)?, Some(sv(&[10, 3, 1, 1])?)),
        "non_idempotent" => {
            // amplitude damping with γ = 1/2
            let g = 0.5f64;
            let k0 = unit(2, 0, 0) + unit(2, 1, 1).scale((1.0 - g).sqrt());
            let k1 = unit(2, 0, 1).scale(g.sqrt());
            (Channel::new(2, 2, vec![k0, k1], &tol)?, None)
        }
        _ => return Err(Error::InvalidArgument(format!("unknown fixture {name:?}"))),
    };
    Ok(ChannelFile::named(&ch, name, shape))
}

pub fn write_fixtures(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for name in FIXTURE_NAMES {
        let path = dir.join(format!("{name}.json"));
        fixture(name)?.write(&path)?;
        written.push(path.display().to_string());
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub name: String,
    pub expected: f64,
    pub computed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl RegressionRow {
    fn new(name: impl Into<String>, expected: f64, computed: f64, tolerance: f64) -> Self {
        let pass = if expected.is_infinite() {
            computed == expected
        } else {
            (expected - computed).abs() <= tolerance
        };
        Self {
            name: name.into(),
            expected,
            computed,
            tolerance,
            pass,
        }
    }

    fn flag(name: impl Into<String>, computed: bool) -> Self {
        let c = if computed { 1.0 } else { 0.0 };
        Self::new(name, 1.0, c, 0.0)
    }
}

fn random_shape(rng: &mut impl Rng) -> ShapeVector {
    let len = rng.random_range(1..=4);
    ShapeVector::new((0..len).map(|_| rng.random_range(1..=6)).collect()).expect("positive entries")
}

/// Every tabulated number, recomputed.
pub fn regression_table(seed: u64) -> Vec<RegressionRow> {
    let sv = |v: &[usize]| ShapeVector::new(v.to_vec()).expect("valid shape");
    let mut rows = Vec::new();

    let (f, g) = (sv(&[5, 3]), sv(&[10, 3, 1, 1]));
    let fwd = capacity(&f, &g);
    let rev = capacity(&g, &f);
    rows.push(RegressionRow::new("(5,3) vs (10,3,1,1) C(G->F)", 1.29916, fwd.value, 1e-4));
    rows.push(RegressionRow::new("(5,3) vs (10,3,1,1) argmin p", 1.15401, fwd.argmin_p.unwrap_or(f64::NAN), 1e-3));
    rows.push(RegressionRow::flag("(5,3) vs (10,3,1,1) interior minimizer", is_interior(&fwd)));
    rows.push(RegressionRow::new("(5,3) vs (10,3,1,1) C(F->G)", 5f64.ln() / 10f64.ln(), rev.value, 1e-9));
    rows.push(RegressionRow::new("(5,3) vs (10,3,1,1) C(F->G) argmin p", f64::INFINITY, rev.argmin_p.unwrap_or(f64::NAN), 0.0));
    rows.push(RegressionRow::new("(5,3) vs (10,3,1,1) 1/C(F->G)", 1.43068, 1.0 / rev.value, 1e-5));
    rows.push(RegressionRow::flag("(5,3) vs (10,3,1,1) non-reversible", (fwd.value * rev.value - 1.0).abs() > 1e-6));

    let (id4, g22) = (sv(&[4]), sv(&[2, 2]));
    let a = capacity(&id4, &g22).value;
    let b = capacity(&g22, &id4).value;
    rows.push(RegressionRow::new("(4) vs (2,2) C(G->Id4)", 0.5, a, 1e-9));
    rows.push(RegressionRow::new("(4) vs (2,2) C(Id4->G)", 1.0, b, 1e-9));
    rows.push(RegressionRow::flag("(4) vs (2,2) non-reversible", (a * b - 1.0).abs() > 1e-6));

    let mut rng = rng_from_seed(seed);
    for trial in 0..4 {
        let lam = random_shape(&mut rng);
        let d = rng.random_range(2..=8);
        for row in TableRow::ALL {
            let Ok(closed) = capacity_closed_form(row, &lam, d) else {
                continue;
            };
            let (lf, lg) = row.shapes(&lam, d).expect("valid shapes");
            let general = capacity(&lf, &lg).value;
            let label = match row {
                TableRow::TargetDephasing if lam.is_all_ones() => "target_dephasing_all_ones".to_string(),
                _ => format!("{row:?}"),
            };
            rows.push(RegressionRow::new(
                format!("table #{trial} {label} lam={lam} d={d}"),
                closed,
                general,
                1e-9,
            ));
        }
    }
    rows
}

pub fn is_interior(rep: &CapacityReport) -> bool {
    matches!(rep.argmin_p, Some(p) if p.is_finite() && (p - 1.0).abs() > 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::shape_of;

    #[test]
    fn channel_file_roundtrip_is_bit_exact() {
        let mut rng = rng_from_seed(1);
        let ch = crate::random::random_channel(&mut rng, 3, 2, 2);
        let file = ChannelFile::named(&ch, "r", None);
        let text = file.to_json_string().unwrap();
        let back = ChannelFile::from_json_str(&text).unwrap();
        assert_eq!(back, file);
        let ch2 = back.channel.to_channel(&ToleranceConfig::default()).unwrap();
        for (a, b) in ch.kraus().iter().zip(ch2.kraus()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(ChannelFile::from_json_str("{").is_err());
        let mut f = fixture("identity2").unwrap();
        f.schema_version = "9".into();
        let text = serde_json::to_string(&f).unwrap();
        assert!(ChannelFile::from_json_str(&text).is_err());
        let mut f = fixture("identity2").unwrap();
        f.channel.kraus[0].pop();
        assert!(matches!(f.channel.to_channel(&ToleranceConfig::default()), Err(Error::Dimension(_))));
        let mut f = fixture("identity2").unwrap();
        f.channel.kraus[0][0][0] = [2.0, 0.0];
        assert!(f.channel.to_channel(&ToleranceConfig::default()).is_err());
    }

    #[test]
    fn fixtures_have_expected_shapes() {
        let tol = ToleranceConfig::default();
        for name in FIXTURE_NAMES {
            let f = fixture(name).unwrap();
            let ch = f.channel.to_channel(&tol).unwrap();
            match f.expected_shape() {
                Some(shape) => assert_eq!(&shape_of(&ch, &tol).unwrap(), shape, "{name}"),
                None => assert!(shape_of(&ch, &tol).is_err()),
            }
        }
    }

    #[test]
    fn run_config_limits() {
        assert!(RunConfig::default().validate().is_ok());
        let mut c = RunConfig::default();
        c.budget_dim = 257;
        assert!(c.validate().is_err());
        c.budget_dim = 256;
        assert!(c.validate().is_ok());
        c.delta_max = 0.0;
        assert!(c.validate().is_err());
        let text = serde_json::to_string(&RunConfig::default()).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(fmt_sig(1.0), "1.00000000000");
        assert_eq!(fmt_sig(1.29916), "1.29916000000");
        assert_eq!(fmt_sig(0.5), "0.500000000000");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(f64::INFINITY), "inf");
        assert_eq!(fmt_sig(1.5e-9), "1.50000000000e-9");
    }

    #[test]
    fn regression_table_passes() {
        let rows = regression_table(DEFAULT_SEED);
        assert!(rows.len() > 10);
        for r in &rows {
            assert!(r.pass, "{r:?}");
        }
    }
}
