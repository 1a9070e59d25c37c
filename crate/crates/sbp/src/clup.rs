//! CLuP-SBP: a barrier descent with a slowly tightened norm reward, restarted
//! from random scaled-down corners of the cube, plus a Monte Carlo harness.

use crate::error::{Error, Result};
use crate::instance::{gen_instance, is_feasible_sign, SbpInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MAX_RESTARTS: usize = 2000;
const INIT_MARGIN: f64 = 1e-9;

/// Default barrier margin for an instance with margin κ.
pub fn default_kappa0(kappa: f64) -> f64 {
    (1.5 * kappa).max(kappa + 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradbarOptions {
    pub max_inner_iters: usize,
    pub initial_step: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub grad_tol: f64,
}

impl Default for GradbarOptions {
    fn default() -> Self {
        GradbarOptions {
            max_inner_iters: 5000,
            initial_step: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
            grad_tol: 1e-8,
        }
    }
}

/// Growth factors for t₀ₓ: a constant, or a per-iteration sequence whose last
/// entry repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(f64),
    Sequence(Vec<f64>),
}

impl Schedule {
    pub fn factor(&self, iter: usize) -> f64 {
        match self {
            Schedule::Constant(c) => *c,
            Schedule::Sequence(v) => v[iter.min(v.len() - 1)],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Schedule::Constant(c) => *c > 1.0,
            Schedule::Sequence(v) => !v.is_empty() && v.iter().all(|c| *c > 1.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter("schedule factors must exceed 1".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClupConfig {
    /// Barrier margin κ₀; `None` means [`default_kappa0`] of the instance κ.
    pub kappa0: Option<f64>,
    pub t0x_init: f64,
    pub schedule: Schedule,
    pub t0x_cap: f64,
    pub max_outer_iters: usize,
    pub max_restarts: usize,
    pub gradbar: GradbarOptions,
    pub stability_window: usize,
    pub record_trace: bool,
}

impl Default for ClupConfig {
    fn default() -> Self {
        ClupConfig {
            kappa0: None,
            t0x_init: 1.3,
            schedule: Schedule::Constant(1.1),
            t0x_cap: 1e6,
            max_outer_iters: 200,
            max_restarts: 300,
            gradbar: GradbarOptions::default(),
            stability_window: 5,
            record_trace: false,
        }
    }
}

impl ClupConfig {
    pub fn kappa0_for(&self, kappa: f64) -> f64 {
        self.kappa0.unwrap_or_else(|| default_kappa0(kappa))
    }

    pub fn validate(&self, kappa: f64) -> Result<()> {
        self.schedule.validate()?;
        let k0 = self.kappa0_for(kappa);
        let g = &self.gradbar;
        let checks = [
            (self.t0x_init > 0.0, "t0x_init must be positive"),
            (self.t0x_cap > 0.0, "t0x_cap must be positive"),
            (k0 >= kappa, "kappa0 must be at least the instance kappa"),
            (self.max_restarts <= MAX_RESTARTS, "max_restarts may not exceed 2000"),
            (self.stability_window >= 1, "stability_window must be at least 1"),
            (g.initial_step > 0.0, "initial_step must be positive"),
            (g.backtrack > 0.0 && g.backtrack < 1.0, "backtrack must lie in (0, 1)"),
            (g.armijo > 0.0 && g.armijo < 1.0, "armijo must lie in (0, 1)"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Parameter((*msg).into())),
            None => Ok(()),
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Barrier objective −t₀ₓ‖x‖ − (1/m)Σⱼ log(κ₀² − (Gx)ⱼ²) − (1/n)Σᵢ log(1 − n xᵢ²)
/// and its gradient. Here G is the raw matrix and the cube is |xᵢ| < 1/√n. At
/// x = 0 the norm term contributes nothing to the gradient.
pub fn barrier_value_grad(x: &[f64], inst: &SbpInstance, kappa0: f64, t0x: f64) -> Result<(f64, Vec<f64>)> {
    let gx = inst.apply(x);
    let (value, weights) = barrier_terms(x, &gx, inst, kappa0, t0x)?;
    let mut grad = inst.apply_transpose(&weights);
    let nx = norm(x);
    let n = inst.n as f64;
    for (g, xi) in grad.iter_mut().zip(x) {
        *g += 2.0 * xi / (1.0 - n * xi * xi);
        if nx > 0.0 {
            *g -= t0x * xi / nx;
        }
    }
    Ok((value, grad))
}

/// Objective value from a precomputed Gx, plus the row weights
/// (2/m)(Gx)ⱼ/(κ₀² − (Gx)ⱼ²) that feed the gradient.
fn barrier_terms(x: &[f64], gx: &[f64], inst: &SbpInstance, kappa0: f64, t0x: f64) -> Result<(f64, Vec<f64>)> {
    let m = inst.m as f64;
    let n = inst.n as f64;
    let k2 = kappa0 * kappa0;
    let mut rows = 0.0;
    let mut weights = Vec::with_capacity(gx.len());
    for (j, v) in gx.iter().enumerate() {
        let slack = k2 - v * v;
        if !(slack > 0.0) {
            return Err(Error::Domain(format!("row constraint {j} reached: |(Gx)_{j}| = {} >= {kappa0}", v.abs())));
        }
        rows += slack.ln();
        weights.push(2.0 * v / (m * slack));
    }
    let mut cube = 0.0;
    for (i, xi) in x.iter().enumerate() {
        let slack = 1.0 - n * xi * xi;
        if !(slack > 0.0) {
            return Err(Error::Domain(format!("cube constraint {i} reached: |x_{i}| = {} >= 1/sqrt(n)", xi.abs())));
        }
        cube += slack.ln();
    }
    Ok((-t0x * norm(x) - rows / m - cube / n, weights))
}

fn value_only(x: &[f64], inst: &SbpInstance, kappa0: f64, t0x: f64) -> Option<f64> {
    barrier_terms(x, &inst.apply(x), inst, kappa0, t0x).ok().map(|r| r.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradbarOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iters: usize,
    /// No positive step stayed interior; `x` is the last accepted iterate.
    pub stalled: bool,
    /// Objective after each accepted step, starting with the value at x0.
    pub values: Vec<f64>,
}

/// Steepest descent on the barrier objective. Each step starts at
/// `initial_step`, shrinks until the trial point is interior, then keeps
/// shrinking until the Armijo condition holds.
pub fn gradbar(inst: &SbpInstance, x0: &[f64], kappa0: f64, t0x: f64, opts: &GradbarOptions) -> Result<GradbarOutcome> {
    let (mut value, mut grad) = barrier_value_grad(x0, inst, kappa0, t0x)?;
    let mut x = x0.to_vec();
    let mut values = vec![value];
    let mut trial = vec![0.0; x.len()];
    let mut last_step = opts.initial_step;
    for iter in 0..opts.max_inner_iters {
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if g2.sqrt() < opts.grad_tol {
            return Ok(GradbarOutcome { x, value, iters: iter, stalled: false, values });
        }
        // Start one expansion above the last accepted step, never above the initial step.
        let mut step = (last_step / opts.backtrack).min(opts.initial_step);
        let accepted = loop {
            for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&grad) {
                *t = xi - step * gi;
            }
            if let Some(v) = value_only(&trial, inst, kappa0, t0x) {
                if v <= value - opts.armijo * step * g2 {
                    break Some(v);
                }
            }
            step *= opts.backtrack;
            if step * g2.sqrt() < 1e-300 || step == 0.0 {
                break None;
            }
        };
        let Some(v) = accepted else {
            return Ok(GradbarOutcome { x, value, iters: iter, stalled: true, values });
        };
        std::mem::swap(&mut x, &mut trial);
        last_step = step;
        value = v;
        values.push(v);
        grad = barrier_value_grad(&x, inst, kappa0, t0x)?.1;
    }
    Ok(GradbarOutcome {
        x,
        value,
        iters: opts.max_inner_iters,
        stalled: false,
        values,
    })
}

/// Random corner of {±1/√n}ⁿ halved k ≥ 1 times until every barrier argument
/// exceeds 1e-9. Returns the point and k.
pub fn feasible_init<R: Rng>(inst: &SbpInstance, kappa0: f64, rng: &mut R) -> (Vec<f64>, u32) {
    let n = inst.n as f64;
    let corner: Vec<f64> = (0..inst.n)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 } / n.sqrt())
        .collect();
    let k2 = kappa0 * kappa0;
    let gc = inst.apply(&corner);
    let mut scale = 1.0;
    let mut k = 0;
    loop {
        scale *= 0.5;
        k += 1;
        let rows_ok = gc.iter().all(|v| k2 - (scale * v).powi(2) > INIT_MARGIN);
        let cube_ok = 1.0 - scale * scale > INIT_MARGIN;
        if rows_ok && cube_ok {
            return (corner.iter().map(|c| c * scale).collect(), k);
        }
    }
}

fn sign_of(x: &[f64]) -> Vec<i8> {
    x.iter().map(|v| if *v < 0.0 { -1 } else { 1 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub restart: usize,
    pub t0x: f64,
    pub objective: f64,
    pub kappa_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClupResult {
    pub x_final: Vec<f64>,
    pub sign_out: Vec<i8>,
    pub kappa_hat: f64,
    pub success: bool,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    /// Initializations after the first.
    pub restarts_used: usize,
    pub trace: Option<Vec<TraceRecord>>,
}

struct RunOutcome {
    x: Vec<f64>,
    sign: Vec<i8>,
    kappa_hat: f64,
    outer: usize,
    inner: usize,
}

fn single_run<R: Rng>(
    inst: &SbpInstance,
    config: &ClupConfig,
    kappa0: f64,
    rng: &mut R,
    restart: usize,
    trace: &mut Option<Vec<TraceRecord>>,
) -> Result<RunOutcome> {
    let (mut x, _) = feasible_init(inst, kappa0, rng);
    let mut t0x = config.t0x_init;
    let mut prev: Option<Vec<i8>> = None;
    let mut stable = 0;
    let (mut outer, mut inner) = (0, 0);
    while outer < config.max_outer_iters {
        let out = gradbar(inst, &x, kappa0, t0x, &config.gradbar)?;
        inner += out.iters;
        outer += 1;
        x = out.x;
        let sign = sign_of(&x);
        if let Some(tr) = trace.as_mut() {
            tr.push(TraceRecord {
                restart,
                t0x,
                objective: out.value,
                kappa_hat: is_feasible_sign(&sign, inst)?.1,
            });
        }
        if prev.as_ref() == Some(&sign) {
            stable += 1;
        } else {
            stable = 0;
        }
        prev = Some(sign);
        if stable >= config.stability_window {
            break;
        }
        t0x *= config.schedule.factor(outer - 1);
        if t0x > config.t0x_cap {
            break;
        }
    }
    let sign = sign_of(&x);
    let kappa_hat = is_feasible_sign(&sign, inst)?.1;
    Ok(RunOutcome { x, sign, kappa_hat, outer, inner })
}

/// Runs CLuP-SBP, restarting from fresh initial points until the rounded
/// sign vector satisfies κ̂ ≤ κ or the restart budget is spent. Reports the
/// run with the smallest κ̂ (earliest on ties).
pub fn clup_solve<R: Rng>(inst: &SbpInstance, config: &ClupConfig, rng: &mut R) -> Result<ClupResult> {
    config.validate(inst.kappa)?;
    let kappa0 = config.kappa0_for(inst.kappa);
    let mut trace = config.record_trace.then(Vec::new);
    let (mut outer_total, mut inner_total) = (0, 0);
    let mut best: Option<RunOutcome> = None;
    let mut restarts_used = 0;
    for restart in 0..=config.max_restarts {
        let run = single_run(inst, config, kappa0, rng, restart, &mut trace)?;
        outer_total += run.outer;
        inner_total += run.inner;
        restarts_used = restart;
        let success = run.kappa_hat <= inst.kappa;
        if best.as_ref().is_none_or(|b| run.kappa_hat < b.kappa_hat) {
            best = Some(run);
        }
        if success {
            break;
        }
    }
    let best = best.expect("at least one run");
    let (success, kappa_hat) = is_feasible_sign(&best.sign, inst)?;
    Ok(ClupResult {
        x_final: best.x,
        sign_out: best.sign,
        kappa_hat,
        success,
        outer_iters: outer_total,
        inner_iters_total: inner_total,
        restarts_used,
        trace,
    })
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub alpha: f64,
    pub trials: usize,
    pub mean_kappa_hat: f64,
    /// Standard error of the mean κ̂.
    pub stderr: f64,
    pub success_rate: f64,
    pub mean_restarts: f64,
}

/// Seeds for trial `trial` at grid index `cell`: (instance seed, solver seed).
pub fn trial_seeds(base_seed: u64, cell: usize, trial: usize) -> (u64, u64) {
    let key = base_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((cell as u64) << 32 | trial as u64);
    let mut r = ChaCha8Rng::seed_from_u64(key);
    (r.gen(), r.gen())
}

/// Independent CLuP runs on fresh instances at each α. Trials run in
/// parallel; rows are aggregated in trial order, so output does not depend on
/// scheduling.
pub fn monte_carlo(
    n: usize,
    alpha_grid: &[f64],
    kappa: f64,
    trials: usize,
    config: &ClupConfig,
    base_seed: u64,
) -> Result<Vec<McRow>> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    if alpha_grid.is_empty() {
        return Err(Error::Parameter("alpha grid is empty".into()));
    }
    config.validate(kappa)?;
    let cells: Vec<(usize, usize)> = (0..alpha_grid.len())
        .flat_map(|c| (0..trials).map(move |t| (c, t)))
        .collect();
    let runs: Vec<ClupResult> = cells
        .par_iter()
        .map(|&(c, t)| {
            let (inst_seed, solver_seed) = trial_seeds(base_seed, c, t);
            let inst = gen_instance(n, alpha_grid[c], kappa, inst_seed)?;
            clup_solve(&inst, config, &mut ChaCha8Rng::seed_from_u64(solver_seed))
        })
        .collect::<Result<_>>()?;
    Ok(alpha_grid
        .iter()
        .enumerate()
        .map(|(c, &alpha)| {
            let cell = &runs[c * trials..(c + 1) * trials];
            let (mut s, mut s2, mut succ, mut rest) = (Kahan::default(), Kahan::default(), 0usize, Kahan::default());
            for r in cell {
                s.add(r.kappa_hat);
                s2.add(r.kappa_hat * r.kappa_hat);
                succ += usize::from(r.success);
                rest.add(r.restarts_used as f64);
            }
            let t = trials as f64;
            let mean = s.sum / t;
            let var = if trials > 1 {
                ((s2.sum - t * mean * mean) / (t - 1.0)).max(0.0)
            } else {
                0.0
            };
            McRow {
                alpha,
                trials,
                mean_kappa_hat: mean,
                stderr: (var / t).sqrt(),
                success_rate: succ as f64 / t,
                mean_restarts: rest.sum / t,
            }
        })
        .collect())
}
