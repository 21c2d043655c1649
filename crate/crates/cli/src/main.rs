use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use emulcap::approx::{delta_inclusion_report, error_threshold, perturb_channel};
use emulcap::capacity::{capacity_with, converse_error_floor_powers, CapacityOptions};
use emulcap::channel::{tensor_power, Channel};
use emulcap::discrimination::converse_witnesses;
use emulcap::emulation::{synthesize_from_analyses, EmulationOptions};
use emulcap::io::{curve_csv, fmt_sig, is_interior, regression_table, write_fixtures, ChannelFile, DecompositionReport, RunConfig};
use emulcap::random::rng_from_seed;
use emulcap::structure::{analyze, Analysis};
use emulcap::{Error, ToleranceConfig};

const EXIT_REGRESSION: u8 = 1;
const EXIT_NOT_IDEMPOTENT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_PARSE: u8 = 64;
const EXIT_NUMERIC: u8 = 65;
const EXIT_BUDGET: u8 = 66;

#[derive(Parser, Debug)]
#[command(name = "emulcap", version, about = "Structure and emulation capacity of idempotent quantum channels")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Equality tolerance (Frobenius / Choi residuals).
    #[arg(long, global = true, env = "EMULCAP_TOL")]
    tol: Option<f64>,
    #[arg(long, global = true, env = "EMULCAP_SEED")]
    seed: Option<u64>,
    /// Grid points for the rate-curve search.
    #[arg(long, global = true, env = "EMULCAP_GRID")]
    grid: Option<usize>,
    #[arg(long = "delta-max", global = true, env = "EMULCAP_DELTA_MAX")]
    delta_max: Option<f64>,
    /// Cap on dim(F)^k · dim(G)^n, at most 256.
    #[arg(long, global = true, env = "EMULCAP_BUDGET")]
    budget: Option<usize>,
}

impl ConfigArgs {
    fn run_config(&self) -> Result<RunConfig, Failure> {
        let mut c = RunConfig::default();
        if let Some(t) = self.tol {
            c.tolerances = ToleranceConfig {
                eq_tol: t,
                rank_tol: c.tolerances.rank_tol.min(t),
                ..c.tolerances
            };
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(g) = self.grid {
            c.grid_points = g;
        }
        if let Some(d) = self.delta_max {
            c.delta_max = d;
        }
        if let Some(b) = self.budget {
            c.budget_dim = b;
        }
        c.validate().map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
        Ok(c)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Block decomposition of an idempotent channel.
    Analyze { channel: PathBuf },
    /// Capacity C(G ↦ F): rate at which G emulates F.
    Capacity {
        f: PathBuf,
        g: PathBuf,
        /// Write the sampled rate curve as CSV.
        #[arg(long)]
        curve_csv: Option<PathBuf>,
    },
    /// Build E, D with F^{⊗k} = D G^{⊗n} E.
    Emulate {
        f: PathBuf,
        g: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Directory for encoder.json, decoder.json, plan.csv and kit.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Strong-converse floor, and witness gaps when a code is supplied.
    Bound {
        f: PathBuf,
        g: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, requires = "decoder")]
        encoder: Option<PathBuf>,
        #[arg(long, requires = "encoder")]
        decoder: Option<PathBuf>,
    },
    /// Approximate-inclusion audit of a code; without a code, audits the
    /// synthesized exact kit and its perturbations.
    Audit {
        f: PathBuf,
        g: PathBuf,
        #[arg(long, requires = "decoder")]
        encoder: Option<PathBuf>,
        #[arg(long, requires = "encoder")]
        decoder: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Perturbation strengths for the scaling table.
        #[arg(long, value_delimiter = ',', default_values_t = [1e-4, 1e-3, 1e-2])]
        eta: Vec<f64>,
    },
    /// Recompute every tabulated number and compare.
    Examples {
        /// Also write the fixture channels into this directory.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NotIdempotent { .. } => EXIT_NOT_IDEMPOTENT,
            Error::Budget { .. } => EXIT_BUDGET,
            Error::Json(_) | Error::Io(_) => EXIT_PARSE,
            _ => EXIT_NUMERIC,
        };
        Self::new(code, e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

/// Rounds every float to 12 significant digits; non-finite values become strings.
fn num(x: f64) -> Value {
    if x.is_finite() {
        let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
        json!(rounded)
    } else {
        json!(fmt_sig(x))
    }
}

fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => num(n.as_f64().unwrap_or(f64::NAN)),
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

fn print_json(v: Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(&round_floats(v)).map_err(|e| Failure::new(EXIT_NUMERIC, e.to_string()))?;
    say(&text);
    Ok(())
}

/// Writes a line to stdout; a closed pipe is not an error.
fn say(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

fn load(path: &Path, tol: &ToleranceConfig) -> Result<Channel, Failure> {
    let file = ChannelFile::read(path).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    file.channel.to_channel(tol).map_err(|e| {
        let code = match e {
            Error::Dimension(_) => EXIT_PARSE,
            _ => EXIT_NUMERIC,
        };
        Failure::new(code, format!("{}: {e}", path.display()))
    })
}

fn load_analysis(path: &Path, cfg: &RunConfig, seed: u64) -> Result<Analysis, Failure> {
    let ch = load(path, &cfg.tolerances)?;
    analyze(&ch, &cfg.tolerances, seed).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn cmd_analyze(path: &Path, cfg: &RunConfig) -> Outcome {
    let a = load_analysis(path, cfg, cfg.seed)?;
    let mut report = to_value(&DecompositionReport::from(&a));
    report["seed"] = json!(cfg.seed);
    print_json(report)?;
    Ok(0)
}

fn cmd_capacity(f: &Path, g: &Path, curve: Option<&Path>, cfg: &RunConfig) -> Outcome {
    let af = load_analysis(f, cfg, cfg.seed)?;
    let ag = load_analysis(g, cfg, cfg.seed.wrapping_add(1))?;
    let opts = CapacityOptions {
        grid: cfg.grid_points,
        ..CapacityOptions::default()
    };
    let rep = capacity_with(af.shape(), ag.shape(), &opts);
    if let Some(path) = curve {
        fs::write(path, curve_csv(&rep.curve_samples)).map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    }
    print_json(json!({
        "shape_f": to_value(af.shape()),
        "shape_g": to_value(ag.shape()),
        "value": num(rep.value),
        "argmin_p": rep.argmin_p.map(num),
        "interior_minimizer": is_interior(&rep),
        "endpoint_p1": num(rep.endpoint_p1),
        "endpoint_pinf": num(rep.endpoint_pinf),
        "special_case": to_value(&rep.special_case),
        "grid_points": cfg.grid_points,
    }))?;
    Ok(0)
}

fn cmd_emulate(f: &Path, g: &Path, k: usize, n: usize, out: Option<&Path>, cfg: &RunConfig) -> Outcome {
    let opts = EmulationOptions {
        tol: cfg.tolerances,
        seed: cfg.seed,
        budget_dim: cfg.budget_dim,
    };
    let fc = load(f, &cfg.tolerances)?;
    let gc = load(g, &cfg.tolerances)?;
    emulcap::emulation::check_budget(fc.dim_in(), k, gc.dim_in(), n, cfg.budget_dim)?;
    let af = load_analysis(f, cfg, cfg.seed)?;
    let ag = load_analysis(g, cfg, cfg.seed.wrapping_add(1))?;
    let Some(kit) = synthesize_from_analyses(&af, &ag, k, n, &opts)? else {
        print_json(json!({
            "feasible": false,
            "shape_f_k": to_value(&af.shape().tensor_power(k)?),
            "shape_g_n": to_value(&ag.shape().tensor_power(n)?),
            "note": "no subunital injective embedding of the block algebras",
        }))?;
        return Ok(EXIT_INFEASIBLE);
    };
    let mut summary = json!({
        "feasible": true,
        "k": k,
        "n": n,
        "residual": num(kit.residual),
        "reduced_residual": num(kit.reduced_residual),
        "plan": to_value(&kit.plan),
        "lift": to_value(&kit.lift),
        "seed": cfg.seed,
    });
    if let Some(dir) = out {
        let io = |e: std::io::Error| Failure::new(EXIT_PARSE, e.to_string());
        fs::create_dir_all(dir).map_err(io)?;
        ChannelFile::named(&kit.encoder, "encoder", None).write(dir.join("encoder.json"))?;
        ChannelFile::named(&kit.decoder, "decoder", None).write(dir.join("decoder.json"))?;
        fs::write(dir.join("plan.csv"), kit.plan.to_csv()).map_err(io)?;
        let text = serde_json::to_string_pretty(&round_floats(summary.clone())).map_err(|e| Failure::new(EXIT_NUMERIC, e.to_string()))?;
        fs::write(dir.join("kit.json"), text + "\n").map_err(io)?;
        summary["out"] = json!(dir.display().to_string());
    }
    print_json(summary)?;
    Ok(0)
}

/// Input errors (exit 64) when a code does not fit `F^{⊗k}` and `G^{⊗n}`.
fn check_code(code: &Option<(Channel, Channel)>, af: &Analysis, ag: &Analysis, k: usize, n: usize) -> Result<(), Failure> {
    let Some((e, d)) = code else {
        return Ok(());
    };
    let fk = af.reduced.original.dim_in().checked_pow(k as u32);
    let gn = ag.reduced.original.dim_in().checked_pow(n as u32);
    let ok = matches!((fk, gn), (Some(a), Some(b))
        if e.dim_in() == a && e.dim_out() == b && d.dim_in() == b && d.dim_out() == a);
    if ok {
        Ok(())
    } else {
        Err(Failure::new(
            EXIT_PARSE,
            format!(
                "code dimensions do not fit: encoder {}→{}, decoder {}→{}",
                e.dim_in(),
                e.dim_out(),
                d.dim_in(),
                d.dim_out()
            ),
        ))
    }
}

fn load_code(e: Option<&PathBuf>, d: Option<&PathBuf>, cfg: &RunConfig) -> Result<Option<(Channel, Channel)>, Failure> {
    match (e, d) {
        (Some(e), Some(d)) => Ok(Some((load(e, &cfg.tolerances)?, load(d, &cfg.tolerances)?))),
        _ => Ok(None),
    }
}

fn cmd_bound(f: &Path, g: &Path, k: usize, n: usize, code: Option<(Channel, Channel)>, cfg: &RunConfig) -> Outcome {
    let tol = &cfg.tolerances;
    let af = load_analysis(f, cfg, cfg.seed)?;
    let ag = load_analysis(g, cfg, cfg.seed.wrapping_add(1))?;
    check_code(&code, &af, &ag, k, n)?;
    let floor = converse_error_floor_powers(af.shape(), ag.shape(), k, n);
    let mut out = json!({
        "k": k,
        "n": n,
        "shape_f": to_value(af.shape()),
        "shape_g": to_value(ag.shape()),
        "theoretical_floor": num(floor),
    });
    if let Some((e, d)) = code {
        let fc = af.reduced.original.dim_in();
        let gc = ag.reduced.original.dim_in();
        emulcap::emulation::check_budget(fc, k, gc, n, cfg.budget_dim)?;
        let w = converse_witnesses(&af, &ag, k, n, tol)?;
        let gn = tensor_power(&ag.reduced.original.compress(tol)?, n)?;
        let cert = w.certify(&gn, &e, &d)?;
        out["certificate"] = to_value(&cert);
    }
    print_json(out)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_audit(
    f: &Path,
    g: &Path,
    code: Option<(Channel, Channel)>,
    k: usize,
    n: usize,
    samples: usize,
    etas: &[f64],
    cfg: &RunConfig,
) -> Outcome {
    let tol = &cfg.tolerances;
    let af = load_analysis(f, cfg, cfg.seed)?;
    let ag = load_analysis(g, cfg, cfg.seed.wrapping_add(1))?;
    emulcap::emulation::check_budget(af.reduced.original.dim_in(), k, ag.reduced.original.dim_in(), n, cfg.budget_dim)?;
    check_code(&code, &af, &ag, k, n)?;
    let fd = af.reduced.original.dim_in();
    let threshold_of = |e: &Channel| -> Result<Value, Failure> {
        let t = error_threshold(fd, k, n, &ag.reduced.original, e, cfg.delta_max, tol)?;
        Ok(to_value(&t))
    };
    let mut out = json!({ "k": k, "n": n, "delta_max": num(cfg.delta_max), "seed": cfg.seed });
    match code {
        Some((e, d)) => {
            let rep = delta_inclusion_report(&af, &ag, &e, &d, k, n, samples, cfg.seed, tol)?;
            out["report"] = to_value(&rep);
            out["threshold"] = threshold_of(&e)?;
        }
        None => {
            let opts = EmulationOptions {
                tol: *tol,
                seed: cfg.seed,
                budget_dim: cfg.budget_dim,
            };
            let Some(kit) = synthesize_from_analyses(&af, &ag, k, n, &opts)? else {
                return Err(Failure::new(EXIT_INFEASIBLE, "no exact kit exists to audit"));
            };
            let exact = delta_inclusion_report(&af, &ag, &kit.encoder, &kit.decoder, k, n, samples, cfg.seed, tol)?;
            out["report"] = to_value(&exact);
            out["threshold"] = threshold_of(&kit.encoder)?;
            let mut rng = rng_from_seed(cfg.seed);
            let mut table = Vec::new();
            for &eta in etas {
                let e = perturb_channel(&kit.encoder, eta, &mut rng, tol)?;
                let d = perturb_channel(&kit.decoder, eta, &mut rng, tol)?;
                let rep = delta_inclusion_report(&af, &ag, &e, &d, k, n, samples, cfg.seed, tol)?;
                table.push(json!({
                    "eta": num(eta),
                    "delta_cb": num(rep.delta_cb),
                    "norm_preservation_worst": num(rep.norm_preservation_worst),
                    "unitality_residual": num(rep.unitality_residual),
                    "multiplicativity_worst": num(rep.multiplicativity_worst),
                    "theoretical_mult_bound": num(rep.theoretical_mult_bound),
                    "all_ok": rep.all_ok(),
                }));
            }
            out["scaling"] = Value::Array(table);
        }
    }
    print_json(out)?;
    Ok(0)
}

fn cmd_examples(fixtures: Option<&Path>, cfg: &RunConfig) -> Outcome {
    if let Some(dir) = fixtures {
        for path in write_fixtures(dir)? {
            eprintln!("wrote {path}");
        }
    }
    let rows = regression_table(cfg.seed);
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    say(&format!("{:width$}  {:>20}  {:>20}  result", "check", "expected", "computed"));
    let mut failed = 0;
    for r in &rows {
        let verdict = if r.pass { "pass" } else { "FAIL" };
        failed += usize::from(!r.pass);
        say(&format!("{:width$}  {:>20}  {:>20}  {verdict}", r.name, fmt_sig(r.expected), fmt_sig(r.computed)));
    }
    say(&format!("{} checks, {failed} failed", rows.len()));
    Ok(if failed == 0 { 0 } else { EXIT_REGRESSION })
}

fn run(cli: Cli) -> Outcome {
    let cfg = cli.config.run_config()?;
    match &cli.command {
        Command::Analyze { channel } => cmd_analyze(channel, &cfg),
        Command::Capacity { f, g, curve_csv } => cmd_capacity(f, g, curve_csv.as_deref(), &cfg),
        Command::Emulate { f, g, k, n, out } => cmd_emulate(f, g, *k, *n, out.as_deref(), &cfg),
        Command::Bound { f, g, k, n, encoder, decoder } => {
            let code = load_code(encoder.as_ref(), decoder.as_ref(), &cfg)?;
            cmd_bound(f, g, *k, *n, code, &cfg)
        }
        Command::Audit { f, g, encoder, decoder, k, n, samples, eta } => {
            let code = load_code(encoder.as_ref(), decoder.as_ref(), &cfg)?;
            cmd_audit(f, g, code, *k, *n, *samples, eta, &cfg)
        }
        Command::Examples { fixtures } => cmd_examples(fixtures.as_deref(), &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
