//! Small-margin regime: the α → 0 constant and the reduced level-3 and
//! level-4 functionals that replace the full cascades when κ is small.

use crate::error::{Error, Result};
use crate::flrdt::{alpha_level2, LiftingPoint, QuadSpec};
use crate::numerics::{
    bisect_root, gaussian_composite_rule, levenberg_marquardt, log_2cosh,
    log_erfc_diff_half_unchecked, log_sum_exp, LmOptions, QuadratureRule,
};
use libm::erf;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

/// Upper end of the approximation regime.
pub const KAPPA_CUTOFF: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSolution {
    pub kappa_x: f64,
    /// κ ≈ constant · √(α / −log α) as α → 0.
    pub constant: f64,
    /// Scaled 1 − p₂ = p_x α / (−log α); p_x = −4 log erf(κ̂_x).
    pub p_x: f64,
}

/// −log erf(k) − k e^{−k²} / (√π erf(k)); its root in (0.5, 1) is κ̂_x.
pub fn kappa_x_residual(k: f64) -> f64 {
    let e = erf(k);
    -e.ln() - k * (-k * k).exp() / (PI.sqrt() * e)
}

pub fn solve_kappa_x() -> f64 {
    bisect_root(kappa_x_residual, 0.5, 1.0, 1e-15).expect("residual changes sign on [0.5, 1]")
}

pub fn small_alpha_constant() -> f64 {
    let k = solve_kappa_x();
    k * (-8.0 * erf(k).ln()).sqrt()
}

pub fn asymptotic_solution() -> AsymptoticSolution {
    let kappa_x = solve_kappa_x();
    AsymptoticSolution {
        kappa_x,
        constant: kappa_x * (-8.0 * erf(kappa_x).ln()).sqrt(),
        p_x: -4.0 * erf(kappa_x).ln(),
    }
}

/// κ / √(α / −log α), the quantity that tends to the constant above.
pub fn implied_prefactor(kappa: f64, alpha: f64) -> f64 {
    kappa / (alpha / -alpha.ln()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level3Approx {
    pub kappa: f64,
    pub alpha: f64,
    pub p2_hat: f64,
    /// q₂c₃ at the stationary point, −½ log((1 − p̂₂)/4).
    pub c_x: f64,
    /// Stationarity residual in t = 1 − p₂ at the returned point.
    pub residual: f64,
}

/// Stationarity residual in t = 1 − p₂: −¼log(t/4) − ακe^{−κ²/2t}/(√(2π) erf(κ/√(2t)) t^{3/2}).
pub fn level3_residual(t: f64, alpha: f64, kappa: f64) -> f64 {
    let e = erf(kappa / (2.0 * t).sqrt());
    -0.25 * (t / 4.0).ln()
        - alpha * kappa * (-kappa * kappa / (2.0 * t)).exp() / ((2.0 * PI).sqrt() * e * t.powf(1.5))
}

/// Reduced level-3 functional ¼t log(t/4) − t/4 − α log erf(κ/√(2t)).
pub fn level3_psi(t: f64, alpha: f64, kappa: f64) -> f64 {
    0.25 * t * (t / 4.0).ln() - 0.25 * t - alpha * erf(kappa / (2.0 * t).sqrt()).ln()
}

/// Largest root t ∈ (0, 1) of the level-3 residual (p₂ ≥ 0), where ψ(t) has its local maximum.
pub fn level3_t_root(alpha: f64, kappa: f64) -> Option<f64> {
    let f = |t: f64| level3_residual(t, alpha, kappa);
    let (lo_log, hi_log) = ((1e-14f64).ln(), (1.0f64 - 1e-12).ln());
    let steps = 600;
    let mut prev_t = hi_log.exp();
    let mut prev_f = f(prev_t);
    for i in 1..=steps {
        let t = (hi_log + (lo_log - hi_log) * i as f64 / steps as f64).exp();
        let ft = f(t);
        if ft.is_finite() && prev_f.is_finite() && ft.signum() != prev_f.signum() {
            return bisect_root(f, t, prev_t, 1e-16 * prev_t).ok();
        }
        prev_t = t;
        prev_f = ft;
    }
    None
}

fn level3_objective(alpha: f64, kappa: f64) -> f64 {
    match level3_t_root(alpha, kappa) {
        Some(t) => level3_psi(t, alpha, kappa),
        // No interior stationary point: the functional stays below zero.
        None => f64::NEG_INFINITY,
    }
}

/// Critical α of the reduced level-3 functional at margin κ.
pub fn level3_small_kappa_alpha(kappa: f64) -> Result<Level3Approx> {
    check_regime(kappa)?;
    let hi = alpha_level2(kappa)?;
    let mut lo = 0.5 * hi;
    let mut tries = 0;
    while level3_objective(lo, kappa) >= 0.0 {
        lo *= 0.5;
        tries += 1;
        if tries > 200 {
            return Err(Error::Bracket {
                lo,
                hi,
                flo: level3_objective(lo, kappa),
                fhi: level3_objective(hi, kappa),
            });
        }
    }
    let g = |a: f64| {
        let v = level3_objective(a, kappa);
        if v.is_finite() { v } else { -1.0 }
    };
    let alpha = bisect_root(g, lo, hi, 1e-15 * hi)?;
    let t = level3_t_root(alpha, kappa)
        .ok_or_else(|| Error::Solver(format!("no stationary t at alpha = {alpha}")))?;
    Ok(Level3Approx {
        kappa,
        alpha,
        p2_hat: 1.0 - t,
        c_x: -0.5 * (t / 4.0).ln(),
        residual: level3_residual(t, alpha, kappa),
    })
}

fn check_regime(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa <= KAPPA_CUTOFF) {
        return Err(Error::Parameter(format!(
            "small-kappa approximation needs 0 < kappa <= {KAPPA_CUTOFF} (got {kappa})"
        )));
    }
    Ok(())
}

/// Free parameters of the reduced level-4 functional; c_x = q₃c₄.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level4Params {
    pub p2: f64,
    pub p3: f64,
    pub q2: f64,
    pub c3: f64,
    pub c_x: f64,
}

impl Level4Params {
    fn pack(&self) -> Vec<f64> {
        let logit = |v: f64| (v / (1.0 - v)).ln();
        vec![
            logit(self.p2),
            logit(self.p3 / self.p2),
            self.q2.ln(),
            self.c3.ln(),
            self.c_x.ln(),
        ]
    }

    fn unpack(z: &[f64]) -> Self {
        let expit = |v: f64| 1.0 / (1.0 + (-v).exp());
        let p2 = expit(z[0]);
        Level4Params {
            p2,
            p3: p2 * expit(z[1]),
            q2: z[2].exp(),
            c3: z[3].exp(),
            c_x: z[4].exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level4Eval {
    pub psi: f64,
    pub dpsi_dalpha: f64,
    /// Outer saddle of the cosh term.
    pub h: f64,
    pub saddle_residual: f64,
}

struct Level4Kernel<'a> {
    v: &'a Level4Params,
    quad: &'a QuadSpec,
    base: &'a QuadratureRule,
}

impl Level4Kernel<'_> {
    fn omega_rule(&self, h: f64) -> Result<QuadratureRule> {
        let sq = self.v.q2.sqrt();
        gaussian_composite_rule(
            self.quad.panels,
            self.quad.half_width + self.v.c3 * sq + h.abs() / sq.max(1e-3),
        )
    }

    /// log ω_q(h) and its first two h-derivatives, ω_q(h) = E(2cosh(√q₂Z + h))^{c₃}.
    fn log_omega_q(&self, h: f64) -> Result<(f64, f64, f64)> {
        let rule = self.omega_rule(h)?;
        let sq = self.v.q2.sqrt();
        let c3 = self.v.c3;
        let terms: Vec<f64> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w.ln() + c3 * log_2cosh(sq * x + h))
            .collect();
        let lse = log_sum_exp(&terms);
        let (mut m1, mut m2, mut sech2) = (0.0, 0.0, 0.0);
        for (x, t) in rule.nodes.iter().zip(&terms) {
            let w = (t - lse).exp();
            let th = (sq * x + h).tanh();
            m1 += w * th;
            m2 += w * th * th;
            sech2 += w * (1.0 - th * th);
        }
        Ok((lse, c3 * m1, c3 * sech2 + c3 * c3 * (m2 - m1 * m1)))
    }

    /// (c_x/c₃)·d log ω_q/dh − h and its h-derivative.
    fn saddle_equation(&self, h: f64) -> Result<(f64, f64)> {
        let (_, d1, d2) = self.log_omega_q(h)?;
        let r = self.v.c_x / self.v.c3;
        Ok((r * d1 - h, r * d2 - 1.0))
    }

    /// Positive root of the saddle equation when h = 0 is a local minimum of
    /// the exponent, else 0. Newton steps are kept inside a shrinking bracket.
    fn saddle(&self) -> Result<f64> {
        let (mut lo, mut hi) = (1e-9, self.v.c_x + 1.0);
        if self.saddle_equation(lo)?.0 <= 0.0 {
            return Ok(0.0);
        }
        let mut h = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (g, dg) = self.saddle_equation(h)?;
            if g > 0.0 {
                lo = h;
            } else {
                hi = h;
            }
            let mut next = h - g / dg;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - h).abs() <= 1e-15 * (1.0 + h) || hi - lo <= 1e-15 * (1.0 + h) {
                return Ok(next);
            }
            h = next;
        }
        Err(Error::Solver(format!("saddle iteration did not converge, last h = {h}")))
    }

    /// log ω_p(0) with ω_p(0) = E P(√(p₂−p₃)Z)^{c₃}.
    fn log_omega_p0(&self, kappa: f64) -> f64 {
        let b = (self.v.p2 - self.v.p3).max(0.0).sqrt();
        let scale = 1.0 / (SQRT_2 * (1.0 - self.v.p2).sqrt());
        let terms: Vec<f64> = self
            .base
            .nodes
            .iter()
            .zip(&self.base.weights)
            .map(|(x, w)| {
                let eta = b * x;
                w.ln() + self.v.c3 * log_erfc_diff_half_unchecked(-(eta + kappa) * scale, -(eta - kappa) * scale)
            })
            .collect();
        log_sum_exp(&terms)
    }
}

/// Reduced level-4 functional
/// ½(1−p₂)q₂ + ½p₂q₂c₃ + ½p₃c_x − [(1/c₃)log ω_q(h*) − h*²/(2c_x)] − (α/c₃)log ω_p(0).
pub fn level4_psi(v: &Level4Params, alpha: f64, kappa: f64, quad: &QuadSpec) -> Result<Level4Eval> {
    if !(0.0 < v.p3 && v.p3 < v.p2 && v.p2 < 1.0 && v.q2 > 0.0 && v.c3 > 0.0 && v.c_x > 0.0) {
        return Err(Error::Domain(format!("reduced level-4 parameters out of range: {v:?}")));
    }
    let base = gaussian_composite_rule(quad.panels, quad.half_width)?;
    let k = Level4Kernel { v, quad, base: &base };
    let h = k.saddle()?;
    let (log_wq, _, _) = k.log_omega_q(h)?;
    let log_wp = k.log_omega_p0(kappa);
    let cosh_term = log_wq / v.c3 - h * h / (2.0 * v.c_x);
    let quadratic = 0.5 * (1.0 - v.p2) * v.q2 + 0.5 * v.p2 * v.q2 * v.c3 + 0.5 * v.p3 * v.c_x;
    let psi = quadratic - cosh_term - alpha * log_wp / v.c3;
    if !psi.is_finite() {
        return Err(Error::Solver(format!("reduced level-4 functional non-finite at {v:?}")));
    }
    Ok(Level4Eval {
        psi,
        dpsi_dalpha: -log_wp / v.c3,
        h,
        saddle_residual: k.saddle_equation(h)?.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level4Approx {
    pub kappa: f64,
    pub alpha: f64,
    pub params: Level4Params,
    pub h: f64,
    pub saddle_residual: f64,
    pub psi_residual: f64,
    pub grad_residual: f64,
}

fn level4_gradient(z: &[f64], alpha: f64, kappa: f64, quad: &QuadSpec) -> Option<Vec<f64>> {
    let f = |y: &[f64]| level4_psi(&Level4Params::unpack(y), alpha, kappa, quad).ok().map(|e| e.psi);
    let mut g = Vec::with_capacity(5);
    let mut y = z.to_vec();
    for i in 0..z.len() {
        let h = crate::numerics::fd_step(z[i]);
        y[i] = z[i] + h;
        let fp = f(&y)?;
        y[i] = z[i] - h;
        let fm = f(&y)?;
        y[i] = z[i];
        g.push((fp - fm) / (2.0 * h));
    }
    Some(g)
}

/// Stationary point of the reduced level-4 functional at fixed α.
pub fn level4_stationary(
    alpha: f64,
    kappa: f64,
    init: &Level4Params,
    quad: &QuadSpec,
) -> Result<(Level4Params, f64)> {
    let grad = |z: &[f64]| level4_gradient(z, alpha, kappa, quad);
    let (z, cost) = levenberg_marquardt(&grad, &init.pack(), &LmOptions::default());
    if !(cost < 1e-14) {
        return Err(Error::Stationarity { best_residual: cost });
    }
    Ok((Level4Params::unpack(&z), cost))
}

/// Stationary point of the reduced level-4 functional at κ = 0.3 near its
/// critical α, used to start continuation in κ.
pub const LEVEL4_ANCHOR: (f64, f64, Level4Params) = (
    0.3,
    0.245,
    Level4Params {
        p2: 0.9644,
        p3: 0.8566,
        q2: 0.6118,
        c3: 4.396,
        c_x: 0.4437,
    },
);

/// Solves ψ = 0 in α for the reduced level-4 functional, starting from
/// (`alpha0`, `init`); Newton steps use the exact ∂ψ/∂α.
pub fn level4_alpha_from(
    kappa: f64,
    alpha0: f64,
    init: &Level4Params,
    quad: &QuadSpec,
) -> Result<Level4Approx> {
    let mut alpha = alpha0;
    let mut v = *init;
    let mut neg: Option<f64> = None;
    let mut pos: Option<f64> = None;
    let mut last_good: Option<f64> = None;
    let mut failures = 0;
    for _ in 0..60 {
        let (sv, cost) = match level4_stationary(alpha, kappa, &v, quad) {
            Ok(r) => r,
            Err(e) => {
                // The branch can end in a fold; retreat toward the last solved α.
                failures += 1;
                match last_good {
                    Some(a) if failures <= 20 => {
                        alpha = 0.5 * (alpha + a);
                        continue;
                    }
                    _ => return Err(e),
                }
            }
        };
        v = sv;
        last_good = Some(alpha);
        let e = level4_psi(&v, alpha, kappa, quad)?;
        if e.psi.abs() < 1e-11 {
            return Ok(Level4Approx {
                kappa,
                alpha,
                params: v,
                h: e.h,
                saddle_residual: e.saddle_residual,
                psi_residual: e.psi,
                grad_residual: cost.sqrt(),
            });
        }
        if e.psi < 0.0 {
            neg = Some(neg.map_or(alpha, |a: f64| a.max(alpha)));
        } else {
            pos = Some(pos.map_or(alpha, |a: f64| a.min(alpha)));
        }
        let mut next = alpha - e.psi / e.dpsi_dalpha;
        if let (Some(a), Some(b)) = (neg, pos) {
            if !(next > a.min(b) && next < a.max(b)) {
                next = 0.5 * (a + b);
            }
        } else if !(next > 0.5 * alpha && next < 2.0 * alpha) {
            next = next.clamp(0.5 * alpha, 2.0 * alpha);
        }
        alpha = next;
    }
    Err(Error::Solver(format!("reduced level-4 alpha did not converge near {alpha}")))
}

/// Critical α of the reduced level-4 functional, by continuation in κ from
/// the anchor at κ = 0.3. Steps are geometric in κ, at most 3% each.
pub fn level4_small_kappa_alpha(kappa: f64, quad: &QuadSpec) -> Result<Level4Approx> {
    let mut path = level4_small_kappa_path(&[kappa], quad);
    path.pop().expect("one entry per requested kappa")
}

/// Reduced level-4 solutions for several κ, visited in order of distance
/// from the anchor so each solve continues from its neighbour. Results come
/// back in the input order; a failure ends the branch on that side.
pub fn level4_small_kappa_path(kappas: &[f64], quad: &QuadSpec) -> Vec<Result<Level4Approx>> {
    let (k0, a0, v0) = LEVEL4_ANCHOR;
    let mut out: Vec<Option<Result<Level4Approx>>> = kappas.iter().map(|_| None).collect();
    for k in kappas {
        if let Err(e) = check_regime(*k) {
            let i = kappas.iter().position(|x| x == k).unwrap();
            out[i] = Some(Err(e));
        }
    }
    let anchor = match level4_alpha_from(k0, a0, &v0, quad) {
        Ok(a) => a,
        Err(e) => {
            let msg = e.to_string();
            return out
                .into_iter()
                .map(|o| o.unwrap_or_else(|| Err(Error::Solver(msg.clone()))))
                .collect();
        }
    };
    for below in [true, false] {
        let mut idx: Vec<usize> = (0..kappas.len())
            .filter(|&i| out[i].is_none() && (kappas[i] <= k0) == below)
            .collect();
        idx.sort_by(|&a, &b| {
            let (da, db) = ((kappas[a] / k0).ln().abs(), (kappas[b] / k0).ln().abs());
            da.total_cmp(&db)
        });
        let mut sol: Result<Level4Approx> = Ok(anchor);
        for i in idx {
            sol = match sol {
                Ok(s) => continue_to(&s, kappas[i], quad),
                Err(e) => Err(Error::Solver(format!("branch lost before kappa = {}: {e}", kappas[i]))),
            };
            out[i] = Some(match &sol {
                Ok(s) => Ok(*s),
                Err(e) => Err(Error::Solver(e.to_string())),
            });
        }
    }
    out.into_iter().map(|o| o.expect("every kappa visited")).collect()
}

fn continue_to(from: &Level4Approx, kappa: f64, quad: &QuadSpec) -> Result<Level4Approx> {
    let steps = ((kappa / from.kappa).ln().abs() / 1.03f64.ln()).ceil().max(1.0) as usize;
    let mut sol = *from;
    let k_start = from.kappa;
    for i in 1..=steps {
        let k = k_start * (kappa / k_start).powf(i as f64 / steps as f64);
        // The branch can fold just below α_c, so the first trial must stay
        // above it: keep α when κ shrinks, scale it like κ² when κ grows.
        let guess = sol.alpha * (k / sol.kappa).max(1.0).powi(2);
        sol = level4_alpha_from(k, guess, &sol.params, quad)?;
    }
    Ok(sol)
}

/// Seed for the full level-r solver at small κ, built from the reduced
/// solutions: level 3 uses (1 − t, small q₂, c₃ = c_x/q₂), level 4 lifts the
/// reduced parameters with a small q₃ and c₄ = c_x/q₃. Returns the seed and
/// the reduced α, which is where the full α search should start.
pub fn full_seed(kappa: f64, level: usize, quad: &QuadSpec) -> Result<(LiftingPoint, f64)> {
    match level {
        3 => {
            let a = level3_small_kappa_alpha(kappa)?;
            let q2 = 0.05;
            Ok((
                LiftingPoint::new(vec![a.p2_hat, 0.0], vec![q2, 0.0], vec![a.c_x / q2])?,
                a.alpha,
            ))
        }
        4 => {
            let a = level4_small_kappa_alpha(kappa, quad)?;
            let v = a.params;
            let q3 = 0.005;
            Ok((
                LiftingPoint::new(vec![v.p2, v.p3, 0.0], vec![v.q2, q3, 0.0], vec![v.c3, v.c_x / q3])?,
                a.alpha,
            ))
        }
        _ => Err(Error::Parameter(format!("no small-kappa seed for level {level}"))),
    }
}
