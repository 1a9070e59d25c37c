//! Command-line front end. Every output document starts with a provenance
//! block (tool version, command, schema, parameters, seed); feeding the
//! `params` object back through `--config` reproduces the document.
//!
//! Output goes to `--out`, else to `$SBP_OUT_DIR/<command>.<ext>`, else to
//! stdout. A 6-significant-digit summary is printed to stdout when a file is
//! written and to stderr otherwise.

use crate::asymptotics::{
    asymptotic_solution, full_seed, level3_psi, level3_small_kappa_alpha, level4_small_kappa_path, KAPPA_CUTOFF,
};
use crate::clup::{clup_solve, monte_carlo, ClupConfig, McRow};
use crate::error::{Error, Result};
use crate::flrdt::{alpha_c, alpha_c_continued, alpha_c_from, c_ordering_report, AlphaOptions, CapacityEstimate, QuadSpec};
use crate::instance::{brute_force, gen_instance, SbpInstance};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub const OUT_DIR_ENV: &str = "SBP_OUT_DIR";
pub const SCHEMA_VERSION: u32 = 1;
/// κ step used when continuing full solutions away from κ = 1.
const CONTINUATION_STEP: f64 = 0.05;

#[derive(Parser, Debug)]
#[command(name = "sbp", version, about = "Symmetric binary perceptron capacity and CLuP tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output file (default: $SBP_OUT_DIR/<command>.<ext>, else stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON object whose keys override the command's flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Critical density at one margin and lifting level.
    Capacity(CapacityArgs),
    /// Critical densities over a κ grid and several levels.
    Sweep(SweepArgs),
    /// Small-α constants.
    Asym(AsymArgs),
    /// One CLuP-SBP run.
    Clup(ClupArgs),
    /// CLuP-SBP Monte Carlo over an α grid.
    Mc(McArgs),
    /// Exhaustive minimum discrepancy for small n.
    Oracle(OracleArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CapacityArgs {
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub level: Option<usize>,
    /// α bracket as lo:hi.
    #[arg(long)]
    pub bracket: Option<String>,
    /// Quadrature node count, a multiple of 8.
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SweepArgs {
    /// κ grid as lo:hi:step.
    #[arg(long)]
    pub kappa_grid: Option<String>,
    /// Levels, comma separated.
    #[arg(long = "level", value_delimiter = ',', default_values_t = [1usize, 2, 3, 4])]
    pub levels: Vec<usize>,
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AsymArgs {}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ClupArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Instance file to use instead of generating one.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Solver settings; only settable through --config.
    #[arg(skip)]
    #[serde(default)]
    pub clup: ClupConfig,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct McArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// α grid as lo:hi:step.
    #[arg(long)]
    pub alpha_grid: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(skip)]
    #[serde(default)]
    pub clup: ClupConfig,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub instance: Option<PathBuf>,
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Parameter(format!("missing --{flag}")))
}

/// Parses lo:hi:step into the values lo + i·step ≤ hi (rounded to 12 decimals).
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Parameter(format!("grid {s:?} must be lo:hi:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
    let (lo, hi, step) = (v[0], v[1], v[2]);
    if !(step > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor();
    if count < 0.0 {
        return Err(Error::Parameter(format!("grid {s:?} is empty")));
    }
    Ok((0..=count as usize)
        .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

pub fn parse_bracket(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Parameter(format!("bracket {s:?} must be lo:hi with 0 < lo < hi"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(0.0 < lo && lo < hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// 6 significant digits, fixed or scientific like C's %g.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..6).contains(&e) {
        let s = format!("{:.*}", (5 - e) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

/// Applies a JSON object of overrides to a flag struct; nested objects merge.
fn apply_overrides<T: Serialize + DeserializeOwned>(args: &T, overrides: Option<&Value>) -> Result<T> {
    let mut base = serde_json::to_value(args).map_err(|e| Error::Parameter(e.to_string()))?;
    if let Some(o) = overrides {
        merge(&mut base, o);
    }
    serde_json::from_value(base).map_err(|e| Error::Parameter(format!("config: {e}")))
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn quad_for(order: Option<usize>) -> Result<QuadSpec> {
    order.map_or(Ok(QuadSpec::default()), QuadSpec::from_order)
}

/// A finished command: its flat records plus what the provenance needs.
struct Output {
    command: &'static str,
    params: Value,
    seed: Option<u64>,
    /// CSV column order.
    columns: Vec<&'static str>,
    rows: Vec<Value>,
    /// Record commands produce one object; table commands produce `rows`.
    single: bool,
    summary: Vec<String>,
}

fn provenance(out: &Output) -> Value {
    json!({
        "tool": "sbp",
        "version": env!("CARGO_PKG_VERSION"),
        "command": out.command,
        "schema": format!("{}/v{SCHEMA_VERSION}", out.command),
        "params": out.params,
        "seed": out.seed,
    })
}

fn render_json(out: &Output) -> String {
    let body = if out.single {
        json!({ "provenance": provenance(out), "result": out.rows[0] })
    } else {
        json!({ "provenance": provenance(out), "rows": out.rows })
    };
    serde_json::to_string_pretty(&body).expect("plain JSON values serialize") + "\n"
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn render_csv(out: &Output) -> Result<String> {
    let p = provenance(out);
    let mut text = String::new();
    text += &format!("# tool: sbp {}\n", env!("CARGO_PKG_VERSION"));
    text += &format!("# command: {}\n", out.command);
    text += &format!("# schema: {} {}\n", p["schema"].as_str().unwrap_or_default(), out.columns.join(","));
    text += &format!("# params: {}\n", out.params);
    text += &format!("# seed: {}\n", out.seed.map_or("none".to_string(), |s| s.to_string()));
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Solver(format!("csv: {e}"));
    w.write_record(&out.columns).map_err(csv_err)?;
    for r in &out.rows {
        w.write_record(out.columns.iter().map(|c| csv_cell(&r[*c]))).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Solver(format!("csv: {e}")))?;
    text += &String::from_utf8(bytes).expect("csv output is UTF-8");
    Ok(text)
}

/// Reads a CSV document written by this tool, skipping provenance lines.
pub fn read_csv_rows(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let err = |e: csv::Error| Error::Parameter(format!("csv: {e}"));
    let header = r.headers().map_err(err)?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()).map_err(err))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

fn to_row<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("records serialize")
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn sign_string(s: &[i8]) -> String {
    s.iter().map(|x| if *x > 0 { '+' } else { '-' }).collect()
}

#[derive(Serialize)]
struct CapacityRecord {
    kappa: f64,
    level: usize,
    alpha: f64,
    branch: &'static str,
    psi_residual: f64,
    grad_residual: f64,
    quadrature_order: usize,
    p: String,
    q: String,
    c: String,
    c_curvature: String,
    ordering: String,
    ordering_violations: String,
    fold: bool,
}

fn capacity_estimate(kappa: f64, level: usize, bracket: Option<(f64, f64)>, opts: &AlphaOptions) -> Result<CapacityEstimate> {
    let on_reference = (kappa - 1.0).abs() < 1e-12;
    if kappa < KAPPA_CUTOFF && (level == 3 || level == 4) {
        let (seed, a) = full_seed(kappa, level, &opts.stationary.quad)?;
        return alpha_c_from(kappa, level, Some(bracket.unwrap_or((0.9 * a, 1.1 * a))), Some(&seed), Some(a), opts);
    }
    if on_reference || level <= 2 || bracket.is_some() {
        return alpha_c(kappa, level, bracket, None, opts);
    }
    alpha_c_continued(kappa, level, CONTINUATION_STEP, opts)
}

fn cmd_capacity(a: CapacityArgs) -> Result<Output> {
    let kappa = need(a.kappa, "kappa")?;
    let level = need(a.level, "level")?;
    if !(1..=5).contains(&level) {
        return Err(Error::Parameter(format!("level must be in 1..=5 (got {level})")));
    }
    let bracket = a.bracket.as_deref().map(parse_bracket).transpose()?;
    let mut opts = AlphaOptions::default();
    opts.stationary.quad = quad_for(a.order)?;
    let est = capacity_estimate(kappa, level, bracket, &opts)?;
    let ord = c_ordering_report(&est.point);
    let rec = CapacityRecord {
        kappa,
        level,
        alpha: est.alpha,
        branch: "full",
        psi_residual: est.psi_residual,
        grad_residual: est.grad_residual,
        quadrature_order: est.quadrature_order,
        p: join(&est.point.p),
        q: join(&est.point.q_s),
        c: join(&est.point.c_s),
        c_curvature: join(&est.c_curvature),
        ordering: ord.classification.clone(),
        ordering_violations: ord
            .violations
            .iter()
            .map(|(i, j)| format!("c{i}<c{j}"))
            .collect::<Vec<_>>()
            .join(";"),
        fold: est.fold,
    };
    let mut summary = vec![
        format!("level {level}, kappa {}: alpha = {}", sig6(kappa), sig6(est.alpha)),
        format!("psi residual {}, gradient residual {}", sig6(est.psi_residual), sig6(est.grad_residual)),
        format!("c ordering: {}", ord.classification),
    ];
    if est.fold {
        summary.push("stationary branch ends at a fold before psi = 0; alpha is the fold".into());
    }
    Ok(Output {
        command: "capacity",
        params: to_row(&a),
        seed: None,
        columns: vec![
            "kappa", "level", "alpha", "branch", "psi_residual", "grad_residual", "quadrature_order", "p", "q", "c",
            "c_curvature", "ordering", "ordering_violations", "fold",
        ],
        rows: vec![to_row(&rec)],
        single: true,
        summary,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    pub kappa: f64,
    pub level: usize,
    pub alpha: Option<f64>,
    pub branch: String,
    pub psi_residual: Option<f64>,
    pub grad_residual: Option<f64>,
    pub status: String,
}

pub const SWEEP_COLUMNS: [&str; 7] = ["kappa", "level", "alpha", "branch", "psi_residual", "grad_residual", "status"];

fn sweep_rows(kappas: &[f64], levels: &[usize], quad: &QuadSpec) -> Vec<SweepRow> {
    let mut opts = AlphaOptions::default();
    opts.stationary.quad = *quad;
    let small: Vec<f64> = kappas.iter().copied().filter(|k| *k < KAPPA_CUTOFF).collect();
    let level4_small = if levels.contains(&4) && !small.is_empty() {
        level4_small_kappa_path(&small, quad)
    } else {
        vec![]
    };
    let mut rows = Vec::new();
    for &kappa in kappas {
        for &level in levels {
            let asym = kappa < KAPPA_CUTOFF && level >= 3;
            let branch = if asym { "asymptotic" } else { "full" }.to_string();
            let cell: Result<(f64, f64, f64)> = if !asym {
                capacity_estimate(kappa, level, None, &opts).map(|e| (e.alpha, e.psi_residual, e.grad_residual))
            } else {
                match level {
                    3 => level3_small_kappa_alpha(kappa).map(|a| {
                        (a.alpha, level3_psi(1.0 - a.p2_hat, a.alpha, kappa), a.residual.abs())
                    }),
                    4 => {
                        let i = small.iter().position(|k| *k == kappa).expect("small grid holds kappa");
                        match &level4_small[i] {
                            Ok(a) => Ok((a.alpha, a.psi_residual, a.grad_residual)),
                            Err(e) => Err(Error::Solver(e.to_string())),
                        }
                    }
                    _ => Err(Error::Parameter(format!("no small-kappa approximation at level {level}"))),
                }
            };
            rows.push(match cell {
                Ok((alpha, psi, grad)) => SweepRow {
                    kappa,
                    level,
                    alpha: Some(alpha),
                    branch,
                    psi_residual: Some(psi),
                    grad_residual: Some(grad),
                    status: "ok".into(),
                },
                Err(e) => SweepRow {
                    kappa,
                    level,
                    alpha: None,
                    branch,
                    psi_residual: None,
                    grad_residual: None,
                    status: format!("error: {e}"),
                },
            });
        }
    }
    rows.sort_by(|a, b| a.kappa.total_cmp(&b.kappa).then(a.level.cmp(&b.level)));
    rows
}

fn cmd_sweep(a: SweepArgs) -> Result<Output> {
    let kappas = parse_grid(&need(a.kappa_grid.clone(), "kappa-grid")?)?;
    if a.levels.is_empty() {
        return Err(Error::Parameter("no levels requested".into()));
    }
    if let Some(l) = a.levels.iter().find(|l| !(1..=5).contains(*l)) {
        return Err(Error::Parameter(format!("level must be in 1..=5 (got {l})")));
    }
    if let Some(k) = kappas.iter().find(|k| !(**k > 0.0)) {
        return Err(Error::Parameter(format!("kappa must be positive (got {k})")));
    }
    let rows = sweep_rows(&kappas, &a.levels, &quad_for(a.order)?);
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "kappa {} level {} ({}): alpha = {} [{}]",
                sig6(r.kappa),
                r.level,
                r.branch,
                r.alpha.map_or("-".into(), sig6),
                r.status
            )
        })
        .collect();
    Ok(Output {
        command: "sweep",
        params: to_row(&a),
        seed: None,
        columns: SWEEP_COLUMNS.to_vec(),
        rows: rows.iter().map(to_row).collect(),
        single: false,
        summary,
    })
}

fn cmd_asym(a: AsymArgs) -> Output {
    let s = asymptotic_solution();
    Output {
        command: "asym",
        params: to_row(&a),
        seed: None,
        columns: vec!["kappa_x", "constant", "p_x"],
        rows: vec![to_row(&s)],
        single: true,
        summary: vec![
            format!("kappa_x = {}", sig6(s.kappa_x)),
            format!("constant = {}", sig6(s.constant)),
        ],
    }
}

fn load_or_generate(path: &Option<PathBuf>, n: Option<usize>, alpha: Option<f64>, kappa: Option<f64>, seed: u64) -> Result<SbpInstance> {
    match path {
        Some(p) => {
            let f = fs::File::open(p)?;
            SbpInstance::read_text(std::io::BufReader::new(f))
        }
        None => gen_instance(need(n, "n")?, need(alpha, "alpha")?, need(kappa, "kappa")?, seed),
    }
}

#[derive(Serialize)]
struct ClupRecord {
    n: usize,
    m: usize,
    alpha: f64,
    kappa: f64,
    kappa0: f64,
    seed: u64,
    kappa_hat: f64,
    success: bool,
    outer_iters: usize,
    inner_iters_total: usize,
    restarts_used: usize,
    sign_out: String,
}

fn cmd_clup(a: ClupArgs) -> Result<Output> {
    let inst = load_or_generate(&a.instance, a.n, a.alpha, a.kappa, a.seed)?;
    let r = clup_solve(&inst, &a.clup, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let rec = ClupRecord {
        n: inst.n,
        m: inst.m,
        alpha: inst.alpha(),
        kappa: inst.kappa,
        kappa0: a.clup.kappa0_for(inst.kappa),
        seed: a.seed,
        kappa_hat: r.kappa_hat,
        success: r.success,
        outer_iters: r.outer_iters,
        inner_iters_total: r.inner_iters_total,
        restarts_used: r.restarts_used,
        sign_out: sign_string(&r.sign_out),
    };
    Ok(Output {
        command: "clup",
        params: to_row(&a),
        seed: Some(a.seed),
        columns: vec![
            "n", "m", "alpha", "kappa", "kappa0", "seed", "kappa_hat", "success", "outer_iters", "inner_iters_total",
            "restarts_used", "sign_out",
        ],
        rows: vec![to_row(&rec)],
        single: true,
        summary: vec![
            format!("kappa_hat = {} (success: {})", sig6(r.kappa_hat), r.success),
            format!("restarts used {}, outer iterations {}", r.restarts_used, r.outer_iters),
        ],
    })
}

fn cmd_mc(a: McArgs) -> Result<Output> {
    let grid = parse_grid(&need(a.alpha_grid.clone(), "alpha-grid")?)?;
    let rows: Vec<McRow> = monte_carlo(need(a.n, "n")?, &grid, need(a.kappa, "kappa")?, a.trials, &a.clup, a.seed)?;
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "alpha {}: mean kappa_hat {} ± {}, success {}",
                sig6(r.alpha),
                sig6(r.mean_kappa_hat),
                sig6(r.stderr),
                sig6(r.success_rate)
            )
        })
        .collect();
    Ok(Output {
        command: "mc",
        params: to_row(&a),
        seed: Some(a.seed),
        columns: vec!["alpha", "trials", "mean_kappa_hat", "stderr", "success_rate", "mean_restarts"],
        rows: rows.iter().map(to_row).collect(),
        single: false,
        summary,
    })
}

#[derive(Serialize)]
struct OracleRecord {
    n: usize,
    m: usize,
    kappa: f64,
    seed: u64,
    xi_star: f64,
    feasible: bool,
    enumerated: u64,
    argmin_sign: String,
}

fn cmd_oracle(a: OracleArgs) -> Result<Output> {
    let inst = load_or_generate(&a.instance, a.n, a.alpha, a.kappa, a.seed)?;
    let r = brute_force(&inst)?;
    let rec = OracleRecord {
        n: inst.n,
        m: inst.m,
        kappa: inst.kappa,
        seed: inst.seed,
        xi_star: r.xi_star,
        feasible: r.feasible,
        enumerated: r.enumerated,
        argmin_sign: sign_string(&r.argmin_sign),
    };
    Ok(Output {
        command: "oracle",
        params: to_row(&a),
        seed: Some(inst.seed),
        columns: vec!["n", "m", "kappa", "seed", "xi_star", "feasible", "enumerated", "argmin_sign"],
        rows: vec![to_row(&rec)],
        single: true,
        summary: vec![format!("xi_star = {} (feasible: {})", sig6(r.xi_star), r.feasible)],
    })
}

fn default_format(command: &str) -> Format {
    match command {
        "sweep" | "mc" => Format::Csv,
        _ => Format::Json,
    }
}

fn output_path(explicit: &Option<PathBuf>, command: &str, format: Format) -> Option<PathBuf> {
    explicit.clone().or_else(|| {
        std::env::var_os(OUT_DIR_ENV).map(|dir| {
            let ext = if format == Format::Csv { "csv" } else { "json" };
            Path::new(&dir).join(format!("{command}.{ext}"))
        })
    })
}

fn execute(cli: Cli) -> Result<()> {
    let overrides = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let v: Value = serde_json::from_str(&text).map_err(|e| Error::Parameter(format!("config {}: {e}", p.display())))?;
            if !v.is_object() {
                return Err(Error::Parameter("config must be a JSON object".into()));
            }
            Some(v)
        }
        None => None,
    };
    let o = overrides.as_ref();
    let started = std::time::Instant::now();
    let out = match cli.command {
        Command::Capacity(a) => cmd_capacity(apply_overrides(&a, o)?)?,
        Command::Sweep(a) => cmd_sweep(apply_overrides(&a, o)?)?,
        Command::Asym(a) => cmd_asym(apply_overrides(&a, o)?),
        Command::Clup(a) => cmd_clup(apply_overrides(&a, o)?)?,
        Command::Mc(a) => cmd_mc(apply_overrides(&a, o)?)?,
        Command::Oracle(a) => cmd_oracle(apply_overrides(&a, o)?)?,
    };
    let format = cli.format.unwrap_or_else(|| default_format(out.command));
    let doc = match format {
        Format::Csv => render_csv(&out)?,
        Format::Json => render_json(&out),
    };
    let summary = out.summary.join("\n") + "\n";
    match output_path(&cli.out, out.command, format) {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&path, doc)?;
            print!("{summary}");
            println!("wrote {}", path.display());
        }
        None => {
            eprint!("{summary}");
            std::io::stdout().write_all(doc.as_bytes())?;
        }
    }
    if cli.verbose > 0 {
        eprintln!("elapsed {:.3} s", started.elapsed().as_secs_f64());
    }
    Ok(())
}

/// Exit code for an error: 2 for bad input, 3 for solver failures.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_parameter() {
        2
    } else {
        3
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
