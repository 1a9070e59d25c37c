//! Lifted random-dual functionals for the symmetric binary perceptron.
//!
//! A level-r point carries p = (p₂..p_r), rescaled q = (q₂..q_r) and rescaled
//! c = (c₃..c_r); p₁ = 1, p_{r+1} = q_{r+1} = 0 and c₂ = 1 are implicit. The
//! functional is
//!
//! ψ = ½(1−p₂)q₂ + ½Σ_{k=3..r}(p_{k−1}q_{k−1} − p_k q_k)c_k − T_cosh − α·T_erfc
//!
//! where each T is a cascade of log-moment layers over independent normals,
//! innermost kernel 2cosh(·) or the erfc difference with margin κ.

use crate::error::{Error, Result};
use crate::numerics::{
    gaussian_composite_rule, levenberg_marquardt, log_2cosh, log_erfc_diff_half_unchecked,
    minimize_multistart, Bounds, LmOptions, NelderMeadOptions, QuadratureRule, PANEL_POINTS,
};
use libm::{erf, erfc};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI, SQRT_2};

/// Largest p₂ used in evaluation; the erfc kernel scales with 1/√(1−p₂).
pub const P2_MAX: f64 = 1.0 - 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftingPoint {
    pub level: usize,
    pub p: Vec<f64>,
    pub q_s: Vec<f64>,
    pub c_s: Vec<f64>,
    pub gamma_sq: f64,
}

impl LiftingPoint {
    /// Level is inferred as `p.len() + 1`.
    pub fn new(p: Vec<f64>, q_s: Vec<f64>, c_s: Vec<f64>) -> Result<Self> {
        let point = LiftingPoint {
            level: p.len() + 1,
            p,
            q_s,
            c_s,
            gamma_sq: 0.0,
        };
        point.validate()?;
        Ok(point)
    }

    pub fn level1(gamma_sq: f64) -> Self {
        LiftingPoint {
            level: 1,
            p: vec![],
            q_s: vec![],
            c_s: vec![],
            gamma_sq,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.level;
        if r == 0 || self.p.len() != r - 1 || self.q_s.len() != r - 1 {
            return Err(Error::Parameter(format!(
                "level {r} needs {} p and q entries (got {}, {})",
                r.saturating_sub(1),
                self.p.len(),
                self.q_s.len()
            )));
        }
        if self.c_s.len() != r.saturating_sub(2) {
            return Err(Error::Parameter(format!(
                "level {r} needs {} c entries (got {})",
                r.saturating_sub(2),
                self.c_s.len()
            )));
        }
        let mut prev = 1.0;
        for (k, &pk) in self.p.iter().enumerate() {
            if !(0.0..=prev).contains(&pk) {
                return Err(Error::Domain(format!(
                    "p{} = {pk} breaks 1 >= p2 >= ... >= 0",
                    k + 2
                )));
            }
            prev = pk;
        }
        let mut prev = f64::INFINITY;
        for (k, &qk) in self.q_s.iter().enumerate() {
            if !(qk >= 0.0 && qk <= prev) {
                return Err(Error::Domain(format!(
                    "q{} = {qk} breaks q2 >= q3 >= ... >= 0",
                    k + 2
                )));
            }
            prev = qk;
        }
        if let Some(c) = self.c_s.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::Domain(format!("c entries must be positive (got {c})")));
        }
        if !(self.gamma_sq >= 0.0) {
            return Err(Error::Domain(format!("gamma_sq = {} < 0", self.gamma_sq)));
        }
        Ok(())
    }

    /// Published stationary points at κ = 1 for levels 2..=7, with their α.
    /// Table columns list c as (c₃, …, c_r, c₂ = 1); the trailing 1 is implicit here.
    pub fn published(level: usize) -> Option<(LiftingPoint, f64)> {
        let (p, q, c, alpha): (&[f64], &[f64], &[f64], f64) = match level {
            2 => (&[0.0], &[0.0], &[], 1.8159),
            3 => (&[0.9852, 0.0], &[0.8794, 0.0], &[4.2629], 1.6576),
            4 => (
                &[0.9988, 0.9729, 0.0],
                &[1.1211, 0.0760, 0.0],
                &[4.1522, 12.0687],
                1.6218,
            ),
            5 => (
                &[0.99853, 0.99655, 0.96270, 0.0],
                &[1.2800, 0.0796, 0.0103, 0.0],
                &[4.3528, 12.7310, 29.6479],
                1.6093,
            ),
            6 => (
                &[0.99996, 0.99933, 0.99240, 0.94600, 0.0],
                // The printed column has only four entries; the last zero is the pinned q₆.
                &[1.4200, 0.0920, 0.0104, 0.0, 0.0],
                &[4.430, 12.70, 31.70, 59.50],
                1.6041,
            ),
            7 => (
                &[0.999992, 0.999810, 0.997800, 0.986000, 0.915000, 0.0],
                &[1.52000, 0.09900, 0.01130, 0.00217, 0.00050, 0.0],
                &[4.490, 12.90, 31.20, 65.00, 104.8],
                1.6021,
            ),
            _ => return None,
        };
        Some((
            LiftingPoint {
                level,
                p: p.to_vec(),
                q_s: q.to_vec(),
                c_s: c.to_vec(),
                gamma_sq: 0.0,
            },
            alpha,
        ))
    }

    /// Full exponent sequence (c₂ = 1, c₃, …, c_r).
    pub fn c_sequence(&self) -> Vec<f64> {
        if self.level < 2 {
            return vec![];
        }
        std::iter::once(1.0).chain(self.c_s.iter().cloned()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeCoefficients {
    /// b_k = √(p_{k−1} − p_k), k = 2..=r+1, with p₁ = 1 and p_{r+1} = 0.
    pub b: Vec<f64>,
    /// c_k = √(q_{k−1} − q_k), k = 3..=r+1, with q_{r+1} = 0.
    pub c: Vec<f64>,
}

pub fn cascade(p: &[f64], q_s: &[f64]) -> Result<CascadeCoefficients> {
    let full_p: Vec<f64> = std::iter::once(1.0)
        .chain(p.iter().cloned())
        .chain(std::iter::once(0.0))
        .collect();
    let full_q: Vec<f64> = q_s.iter().cloned().chain(std::iter::once(0.0)).collect();
    let diffs = |v: &[f64], name: &str| -> Result<Vec<f64>> {
        v.windows(2)
            .map(|w| {
                let d = w[0] - w[1];
                if d < 0.0 {
                    Err(Error::Domain(format!("{name} sequence increases: {} < {}", w[0], w[1])))
                } else {
                    Ok(d.sqrt())
                }
            })
            .collect()
    };
    Ok(CascadeCoefficients {
        b: diffs(&full_p, "p")?,
        c: if q_s.is_empty() { vec![] } else { diffs(&full_q, "q")? },
    })
}

/// Level-1 capacity 2 / (π E max(|Z|−κ, 0)²) in closed form.
pub fn alpha_level1(kappa: f64) -> f64 {
    2.0 / (PI * hinge_second_moment(kappa))
}

/// E max(|Z| − κ, 0)² = (κ² + 1) erfc(κ/√2) − 2κφ(κ).
pub fn hinge_second_moment(kappa: f64) -> f64 {
    let phi = (-0.5 * kappa * kappa).exp() / (2.0 * PI).sqrt();
    (kappa * kappa + 1.0) * erfc(kappa / SQRT_2) - 2.0 * kappa * phi
}

/// Optimal γ_sq at level 1: (√α / 2)·√E max(|Z|−κ, 0)².
pub fn gamma_sq_level1(kappa: f64) -> f64 {
    0.5 * alpha_level1(kappa).sqrt() * hinge_second_moment(kappa).sqrt()
}

/// Level-2 value log 2 / (−log erf(κ/√2)), reached at p₂ = q₂ = 0.
pub fn alpha_level2(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::Parameter(format!("level 2 needs kappa > 0 (got {kappa})")));
    }
    Ok(LN_2 / -erf(kappa / SQRT_2).ln())
}

/// Composite-rule settings used for every layer of the cascades.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub panels: usize,
    pub half_width: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            panels: 40,
            half_width: 10.0,
        }
    }
}

impl QuadSpec {
    pub fn order(&self) -> usize {
        self.panels * PANEL_POINTS
    }

    pub fn from_order(order: usize) -> Result<Self> {
        if order == 0 || !order.is_multiple_of(PANEL_POINTS) {
            return Err(Error::Parameter(format!(
                "order must be a positive multiple of {PANEL_POINTS} (got {order})"
            )));
        }
        Ok(QuadSpec {
            panels: order / PANEL_POINTS,
            ..QuadSpec::default()
        })
    }

    fn rule(&self, shift: f64) -> Result<QuadratureRule> {
        gaussian_composite_rule(self.panels, self.half_width + shift)
    }
}

/// The three pieces of ψ; ψ = quadratic − t_cosh − α·t_erfc and ∂ψ/∂α = −t_erfc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiParts {
    pub quadratic: f64,
    pub t_cosh: f64,
    pub t_erfc: f64,
}

impl PsiParts {
    pub fn psi(&self, alpha: f64) -> f64 {
        self.quadratic - self.t_cosh - alpha * self.t_erfc
    }
}

struct Layer {
    ratio: f64,
    coef: f64,
    nodes: Vec<f64>,
    log_w: Vec<f64>,
}

fn streaming_lse(values: impl Iterator<Item = f64>) -> f64 {
    let mut m = f64::NEG_INFINITY;
    let mut s = 0.0;
    for v in values {
        if v == f64::NEG_INFINITY {
            continue;
        }
        if v > m {
            s = s * (m - v).exp() + 1.0;
            m = v;
        } else {
            s += (v - m).exp();
        }
    }
    m + s.ln()
}

/// L_k(s) = log E exp(ρ_k L_{k−1}(s + coef_k Z)), L_0 = log_z.
fn layer_value(layers: &[Layer], log_z: &dyn Fn(f64) -> f64, s: f64) -> f64 {
    match layers.split_last() {
        None => log_z(s),
        Some((top, rest)) => streaming_lse(
            top.nodes
                .iter()
                .zip(&top.log_w)
                .map(|(x, lw)| lw + top.ratio * layer_value(rest, log_z, s + top.coef * x)),
        ),
    }
}

/// (1/m_r) E_outer L_r(coef_out Z) for one kernel.
fn cascade_term(
    layers: &[Layer],
    log_z: &dyn Fn(f64) -> f64,
    outer_coef: f64,
    outer: &QuadratureRule,
    m_r: f64,
    label: &str,
) -> Result<f64> {
    let value = if outer_coef == 0.0 {
        layer_value(layers, log_z, 0.0)
    } else {
        outer
            .nodes
            .iter()
            .zip(&outer.weights)
            .map(|(x, w)| w * layer_value(layers, log_z, outer_coef * x))
            .sum()
    };
    if !value.is_finite() {
        return Err(Error::Solver(format!(
            "{label} cascade is non-finite ({value}) at depth {}",
            layers.len() + 2
        )));
    }
    Ok(value / m_r)
}

/// Evaluates the three parts of ψ at `point` (level ≥ 2).
pub fn psi_parts(point: &LiftingPoint, kappa: f64, quad: &QuadSpec) -> Result<PsiParts> {
    point.validate()?;
    let r = point.level;
    if r < 2 {
        return Err(Error::Parameter("psi needs level >= 2".into()));
    }
    if point.p[0] >= 1.0 {
        return Err(Error::Domain(format!(
            "p2 = {} >= 1 makes the erfc kernel singular",
            point.p[0]
        )));
    }
    if !(kappa > 0.0) {
        return Err(Error::Parameter(format!("kappa must be positive (got {kappa})")));
    }
    // Index helpers over the full sequences P_1..P_{r+1}, Q_2..Q_{r+1}, m_2..m_r.
    let pk = |k: usize| -> f64 {
        if k == 1 {
            1.0
        } else if k <= r {
            point.p[k - 2]
        } else {
            0.0
        }
    };
    let qk = |k: usize| -> f64 { if k <= r { point.q_s[k - 2] } else { 0.0 } };
    let mk = |k: usize| -> f64 { if k == 2 { 1.0 } else { point.c_s[k - 3] } };

    let mut quadratic = 0.5 * (1.0 - pk(2)) * qk(2);
    for k in 3..=r {
        quadratic += 0.5 * (pk(k - 1) * qk(k - 1) - pk(k) * qk(k)) * mk(k);
    }

    let base = quad.rule(0.0)?;
    let make_layers = |coef: &dyn Fn(usize) -> f64, tilt: bool| -> Result<Vec<Layer>> {
        (3..=r)
            .map(|k| {
                let c = coef(k);
                let rule = quad.rule(if tilt { mk(k) * c } else { 0.0 })?;
                Ok(Layer {
                    ratio: mk(k) / mk(k - 1),
                    coef: c,
                    log_w: rule.log_weights(),
                    nodes: rule.nodes,
                })
            })
            .collect()
    };
    let q_coef = |k: usize| (qk(k - 1) - qk(k)).max(0.0).sqrt();
    let p_coef = |k: usize| (pk(k - 1) - pk(k)).max(0.0).sqrt();

    let cosh_layers = make_layers(&q_coef, true)?;
    let t_cosh = cascade_term(&cosh_layers, &log_2cosh, q_coef(r + 1), &base, mk(r), "cosh")?;

    let p2 = pk(2).min(P2_MAX);
    let scale = 1.0 / (SQRT_2 * (1.0 - p2).sqrt());
    let log_p = move |eta: f64| -> f64 {
        log_erfc_diff_half_unchecked(-(eta + kappa) * scale, -(eta - kappa) * scale)
    };
    let erfc_layers = make_layers(&p_coef, false)?;
    let t_erfc = cascade_term(&erfc_layers, &log_p, p_coef(r + 1), &base, mk(r), "erfc")?;

    Ok(PsiParts {
        quadratic,
        t_cosh,
        t_erfc,
    })
}

pub fn psi_level_r(point: &LiftingPoint, alpha: f64, kappa: f64, quad: &QuadSpec) -> Result<f64> {
    Ok(psi_parts(point, kappa, quad)?.psi(alpha))
}

pub fn psi_level2(p2: f64, q2s: f64, alpha: f64, kappa: f64, quad: &QuadSpec) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive (got {alpha})")));
    }
    psi_level_r(&LiftingPoint::new(vec![p2], vec![q2s], vec![])?, alpha, kappa, quad)
}

/// Which coordinates the stationary solver moves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeSet {
    pub level: usize,
    /// Pin p_r = q_r = 0 (partial lifting).
    pub pin_last: bool,
}

impl FreeSet {
    pub fn for_level(level: usize) -> Self {
        FreeSet {
            level,
            pin_last: level >= 3,
        }
    }

    fn n_pq(&self) -> usize {
        if self.pin_last {
            self.level - 2
        } else {
            self.level - 1
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_pq() + self.level - 2
    }

    /// Unconstrained coordinates: p₂ = expit(z), p_k = p_{k−1}·expit(z);
    /// q₂ = e^z, q_k = q_{k−1}·expit(z); c_k = e^z. At level 2 the stationary
    /// point is the corner (0, 0), so there p₂ = z²/(1 + z²) and q₂ = z²,
    /// which put it at a finite, smooth point.
    pub fn pack(&self, point: &LiftingPoint) -> Vec<f64> {
        if self.level == 2 {
            let p = point.p[0].clamp(0.0, 1.0 - 1e-12);
            return vec![(p / (1.0 - p)).sqrt(), point.q_s[0].max(0.0).sqrt()];
        }
        let n = self.n_pq();
        let logit = |v: f64| {
            let v = v.clamp(1e-12, 1.0 - 1e-12);
            (v / (1.0 - v)).ln()
        };
        let mut z = Vec::with_capacity(self.dim());
        let mut prev = 1.0;
        for k in 0..n {
            let v = point.p[k].max(1e-12);
            z.push(logit(v / prev));
            prev = v;
        }
        let mut prev = 0.0;
        for k in 0..n {
            let v = point.q_s[k].max(1e-12);
            z.push(if k == 0 { v.ln() } else { logit(v / prev) });
            prev = v;
        }
        z.extend(point.c_s.iter().map(|c| c.ln()));
        z
    }

    pub fn unpack(&self, z: &[f64]) -> LiftingPoint {
        if self.level == 2 {
            let (a, b) = (z[0] * z[0], z[1] * z[1]);
            return LiftingPoint {
                level: 2,
                p: vec![a / (1.0 + a)],
                q_s: vec![b],
                c_s: vec![],
                gamma_sq: 0.0,
            };
        }
        let n = self.n_pq();
        let r = self.level;
        let expit = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut p = Vec::with_capacity(r - 1);
        let mut prev = 1.0;
        for &zk in &z[..n] {
            prev *= expit(zk);
            p.push(prev);
        }
        let mut q = Vec::with_capacity(r - 1);
        for (k, &zk) in z[n..2 * n].iter().enumerate() {
            let v = if k == 0 { zk.exp() } else { q[k - 1] * expit(zk) };
            q.push(v);
        }
        if self.pin_last {
            p.push(0.0);
            q.push(0.0);
        }
        LiftingPoint {
            level: r,
            p,
            q_s: q,
            c_s: z[2 * n..].iter().map(|v| v.exp()).collect(),
            gamma_sq: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StationaryOptions {
    pub quad: QuadSpec,
    /// Required squared gradient norm in the unconstrained coordinates.
    pub tol: f64,
    pub lm: LmOptions,
    /// Nelder-Mead budget per start when Levenberg-Marquardt stalls. Zero
    /// starts disables the fallback.
    pub nm_evals: usize,
    pub max_starts: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            quad: QuadSpec::default(),
            tol: 1e-12,
            lm: LmOptions::default(),
            nm_evals: 4000,
            max_starts: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stationary {
    pub point: LiftingPoint,
    pub psi: f64,
    pub dpsi_dalpha: f64,
    /// Squared gradient norm in unconstrained coordinates.
    pub grad_sq: f64,
    /// Second difference of ψ along each c coordinate; ≤ 0 means maximization type.
    pub c_curvature: Vec<f64>,
}

/// Gradient of ψ in the solver's coordinates (central differences).
pub fn packed_gradient(
    z: &[f64],
    free: &FreeSet,
    alpha: f64,
    kappa: f64,
    quad: &QuadSpec,
) -> Option<Vec<f64>> {
    let eval = |y: &[f64]| psi_level_r(&free.unpack(y), alpha, kappa, quad).ok();
    let mut g = Vec::with_capacity(z.len());
    let mut y = z.to_vec();
    for i in 0..z.len() {
        let h = crate::numerics::fd_step(z[i]);
        y[i] = z[i] + h;
        let fp = eval(&y)?;
        y[i] = z[i] - h;
        let fm = eval(&y)?;
        y[i] = z[i];
        g.push((fp - fm) / (2.0 * h));
    }
    g.iter().all(|v| v.is_finite()).then_some(g)
}

fn perturbed_starts(z0: &[f64], free: &FreeSet, cap: usize) -> Vec<Vec<f64>> {
    let base = free.unpack(z0);
    let mut starts = vec![z0.to_vec()];
    'outer: for delta in [0.05, 0.2] {
        for i in 0..z0.len() {
            for sign in [1.0, -1.0] {
                if starts.len() >= cap {
                    break 'outer;
                }
                // Perturb the original coordinate by ±delta relative, then repack.
                let mut z = free.pack(&base);
                let mut pt = free.unpack(&z);
                let n = free.n_pq();
                let factor = 1.0 + sign * delta;
                if i < n {
                    pt.p[i] = (pt.p[i] * factor).min(if i == 0 { 1.0 - 1e-9 } else { pt.p[i - 1] });
                } else if i < 2 * n {
                    let j = i - n;
                    pt.q_s[j] *= factor;
                    if j > 0 {
                        pt.q_s[j] = pt.q_s[j].min(pt.q_s[j - 1]);
                    }
                } else {
                    pt.c_s[i - 2 * n] *= factor;
                }
                z = free.pack(&pt);
                starts.push(z);
            }
        }
    }
    starts
}

/// Finds a point where the gradient of ψ over the free coordinates vanishes.
///
/// Levenberg-Marquardt on the finite-difference gradient runs first; if it
/// stalls, a Nelder-Mead multistart on the squared gradient norm (seeded at
/// `init` and ±5%, ±20% perturbations) is polished by another LM pass.
pub fn stationary_point(
    alpha: f64,
    kappa: f64,
    init: &LiftingPoint,
    opts: &StationaryOptions,
) -> Result<Stationary> {
    init.validate()?;
    if init.level < 2 {
        return Err(Error::Parameter("stationary_point needs level >= 2".into()));
    }
    let free = FreeSet::for_level(init.level);
    let quad = opts.quad;
    let grad = |z: &[f64]| packed_gradient(z, &free, alpha, kappa, &quad);
    let z0 = free.pack(init);
    let (mut z, mut cost) = levenberg_marquardt(&grad, &z0, &opts.lm);
    if !(cost < opts.tol) && opts.max_starts > 0 {
        let objective = |y: &[f64]| grad(y).map(|g| g.iter().map(|v| v * v).sum()).unwrap_or(f64::INFINITY);
        let mut starts = vec![z.clone()];
        starts.extend(perturbed_starts(&z0, &free, opts.max_starts.saturating_sub(1)));
        let nm = NelderMeadOptions {
            max_evals: opts.nm_evals,
            f_tol: opts.tol * 1e-3,
            ..NelderMeadOptions::default()
        };
        if let Ok(best) = minimize_multistart(&objective, &starts, &Bounds::unbounded(), &nm) {
            let (z2, c2) = levenberg_marquardt(&grad, &best.point, &opts.lm);
            if c2 < cost {
                z = z2;
                cost = c2;
            }
        }
    }
    if !(cost < opts.tol) {
        return Err(Error::Stationarity {
            best_residual: cost,
        });
    }
    let point = free.unpack(&z);
    let parts = psi_parts(&point, kappa, &quad)?;
    Ok(Stationary {
        c_curvature: c_curvature(&point, alpha, kappa, &quad)?,
        psi: parts.psi(alpha),
        dpsi_dalpha: -parts.t_erfc,
        grad_sq: cost,
        point,
    })
}

fn c_curvature(point: &LiftingPoint, alpha: f64, kappa: f64, quad: &QuadSpec) -> Result<Vec<f64>> {
    let f0 = psi_level_r(point, alpha, kappa, quad)?;
    (0..point.c_s.len())
        .map(|i| {
            let h = 1e-3 * point.c_s[i];
            let mut up = point.clone();
            let mut dn = point.clone();
            up.c_s[i] += h;
            dn.c_s[i] -= h;
            Ok((psi_level_r(&up, alpha, kappa, quad)? - 2.0 * f0 + psi_level_r(&dn, alpha, kappa, quad)?) / (h * h))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub kappa: f64,
    pub level: usize,
    pub alpha: f64,
    pub point: LiftingPoint,
    pub psi_residual: f64,
    pub grad_residual: f64,
    pub quadrature_order: usize,
    pub c_curvature: Vec<f64>,
    /// True when the stationary branch ends at a fold before ψ reaches zero.
    /// `alpha` is then the fold and `psi_residual` is ψ there.
    #[serde(default)]
    pub fold: bool,
}

#[derive(Debug, Clone)]
pub struct AlphaOptions {
    pub stationary: StationaryOptions,
    pub psi_tol: f64,
    pub alpha_tol: f64,
    /// Relative width to which a fold of the stationary branch is located.
    pub fold_tol: f64,
    pub max_iters: usize,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        AlphaOptions {
            stationary: StationaryOptions::default(),
            psi_tol: 1e-10,
            alpha_tol: 1e-10,
            fold_tol: 1e-4,
            max_iters: 40,
        }
    }
}

/// Default α bracket: the published ranges at κ = 1, else (¼α₂, α₂).
pub fn default_bracket(kappa: f64, level: usize) -> Result<(f64, f64)> {
    if (kappa - 1.0).abs() < 1e-12 {
        match level {
            3 => return Ok((1.5, 1.8)),
            4 => return Ok((1.5, 1.7)),
            _ => {}
        }
    }
    let a2 = alpha_level2(kappa)?;
    Ok((0.25 * a2, a2))
}

/// Critical α at level r: closed forms for r ≤ 2, otherwise a safeguarded
/// Newton iteration on α ↦ ψ(stationary point(α)) using the exact
/// ∂ψ/∂α = −T_erfc, with bisection whenever a step leaves the known bracket.
/// Every trial α re-solves the stationary point warm-started from the last one.
pub fn alpha_c(
    kappa: f64,
    level: usize,
    bracket: Option<(f64, f64)>,
    init: Option<&LiftingPoint>,
    opts: &AlphaOptions,
) -> Result<CapacityEstimate> {
    alpha_c_from(kappa, level, bracket, init, None, opts)
}

/// [`alpha_c`] with an explicit first trial α. Without one, the first trial
/// is the published α (default seed) or the bracket midpoint.
pub fn alpha_c_from(
    kappa: f64,
    level: usize,
    bracket: Option<(f64, f64)>,
    init: Option<&LiftingPoint>,
    alpha0: Option<f64>,
    opts: &AlphaOptions,
) -> Result<CapacityEstimate> {
    if !(kappa > 0.0) {
        return Err(Error::Parameter(format!("kappa must be positive (got {kappa})")));
    }
    match level {
        1 => {
            let alpha = alpha_level1(kappa);
            return Ok(CapacityEstimate {
                kappa,
                level,
                alpha,
                point: LiftingPoint::level1(gamma_sq_level1(kappa)),
                psi_residual: 0.0,
                grad_residual: 0.0,
                quadrature_order: 0,
                c_curvature: vec![],
                fold: false,
            });
        }
        2 => {
            let alpha = alpha_level2(kappa)?;
            let point = LiftingPoint::new(vec![0.0], vec![0.0], vec![])?;
            let psi = psi_level_r(&point, alpha, kappa, &opts.stationary.quad)?;
            return Ok(CapacityEstimate {
                kappa,
                level,
                alpha,
                point,
                psi_residual: psi,
                grad_residual: 0.0,
                quadrature_order: opts.stationary.quad.order(),
                c_curvature: vec![],
                fold: false,
            });
        }
        3..=7 => {}
        _ => return Err(Error::Parameter(format!("level {level} outside 1..=7"))),
    }
    let (lo, hi) = match bracket {
        Some(b) => b,
        None => default_bracket(kappa, level)?,
    };
    if !(0.0 < lo && lo < hi) {
        return Err(Error::Parameter(format!("bad bracket [{lo}, {hi}]")));
    }
    let (seed, seed_alpha) = match init {
        Some(p) => (p.clone(), None),
        None => {
            let (p, a) = LiftingPoint::published(level)
                .ok_or_else(|| Error::Parameter(format!("no default seed for level {level}")))?;
            (p, Some(a))
        }
    };
    if seed.level != level {
        return Err(Error::Parameter(format!(
            "seed has level {} but level {level} was requested",
            seed.level
        )));
    }
    let mut alpha = alpha0
        .or(seed_alpha)
        .filter(|a| (lo..=hi).contains(a))
        .unwrap_or(0.5 * (lo + hi));
    let mut warm = seed;
    let mut stat_opts = opts.stationary.clone();
    // Nearest known points with ψ < 0 and ψ > 0.
    let mut neg: Option<(f64, f64)> = None;
    let mut pos: Option<(f64, f64)> = None;
    let mut best: Option<(f64, Stationary)> = None;
    // Last α with a stationary point, and the nearest α beyond it where the branch was lost.
    let mut last_ok: Option<f64> = None;
    let mut lost: Option<f64> = None;
    let mut fold = false;
    for _ in 0..opts.max_iters {
        let st = match stationary_point(alpha, kappa, &warm, &stat_opts) {
            Ok(st) => st,
            Err(e @ Error::Stationarity { .. }) => {
                let Some(ok) = last_ok else { return Err(e) };
                lost = Some(alpha);
                if (ok - alpha).abs() <= opts.fold_tol * ok.abs() {
                    fold = true;
                    break;
                }
                alpha = 0.5 * (ok + alpha);
                continue;
            }
            Err(e) => return Err(e),
        };
        // Warm starts from here on stay near the branch, so the multistart fallback only costs time.
        stat_opts.max_starts = 0;
        let psi = st.psi;
        // ψ increases with α, so the root lies above every ψ < 0 trial and below every ψ > 0 one.
        if psi < 0.0 {
            if neg.is_none_or(|(a, _)| alpha > a) {
                neg = Some((alpha, psi));
            }
        } else if pos.is_none_or(|(a, _)| alpha < a) {
            pos = Some((alpha, psi));
        }
        warm = st.point.clone();
        last_ok = Some(alpha);
        let done = psi.abs() < opts.psi_tol;
        let slope = st.dpsi_dalpha;
        if best.as_ref().is_none_or(|(_, b)| psi.abs() < b.psi.abs()) {
            best = Some((alpha, st));
        }
        if done {
            break;
        }
        let mut next = alpha - psi / slope;
        let (a_lo, a_hi) = match (neg, pos) {
            (Some((an, _)), Some((ap, _))) => (an.min(ap), an.max(ap)),
            _ => (lo, hi),
        };
        if !(next > a_lo && next < a_hi) || !next.is_finite() {
            next = match (neg, pos) {
                (Some((an, _)), Some((ap, _))) => 0.5 * (an + ap),
                _ => {
                    // Only one side seen: try the bracket end on the far side.
                    let target = if psi > 0.0 { lo } else { hi };
                    if (alpha - target).abs() < opts.alpha_tol {
                        let (flo, fhi) = if psi > 0.0 { (psi, f64::NAN) } else { (f64::NAN, psi) };
                        return Err(Error::Bracket { lo, hi, flo, fhi });
                    }
                    target
                }
            };
        }
        if let Some(l) = lost {
            // Do not step past where the branch ended.
            if (next - alpha) * (l - alpha) > 0.0 && (next - alpha).abs() >= (l - alpha).abs() {
                if (l - alpha).abs() <= opts.fold_tol * alpha.abs() {
                    fold = true;
                    break;
                }
                next = 0.5 * (alpha + l);
            }
        }
        if (next - alpha).abs() < opts.alpha_tol {
            break;
        }
        alpha = next;
    }
    let (alpha_best, st) = if fold {
        // The estimate is the end of the branch, whatever |ψ| is there.
        let ok = last_ok.expect("fold needs a solved point");
        let st = stationary_point(ok, kappa, &warm, &stat_opts)?;
        (ok, st)
    } else {
        best.expect("at least one iteration runs")
    };
    Ok(CapacityEstimate {
        kappa,
        level,
        alpha: alpha_best,
        psi_residual: st.psi,
        grad_residual: st.grad_sq.sqrt(),
        quadrature_order: opts.stationary.quad.order(),
        c_curvature: st.c_curvature,
        point: st.point,
        fold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    /// "decreasing" or "non-monotone".
    pub classification: String,
    /// Adjacent pairs (k, k+1) of the full sequence c₂, c₃, … with c_{k+1} > c_k.
    pub violations: Vec<(usize, usize)>,
}

pub fn c_ordering_report(point: &LiftingPoint) -> OrderingReport {
    let seq = point.c_sequence();
    let violations: Vec<(usize, usize)> = seq
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0])
        .map(|(i, _)| (i + 2, i + 3))
        .collect();
    OrderingReport {
        classification: if violations.is_empty() { "decreasing" } else { "non-monotone" }.into(),
        violations,
    }
}

/// Critical α at level r ≥ 3 for a κ away from the published point, by
/// continuation from κ = 1 in steps of at most `max_step` in κ. Each step
/// starts at the previous point with α predicted from the ratio of the
/// level-2 closed forms.
pub fn alpha_c_continued(kappa: f64, level: usize, max_step: f64, opts: &AlphaOptions) -> Result<CapacityEstimate> {
    if level <= 2 || (kappa - 1.0).abs() < 1e-12 {
        return alpha_c(kappa, level, None, None, opts);
    }
    if !(max_step > 0.0) {
        return Err(Error::Parameter(format!("continuation step must be positive (got {max_step})")));
    }
    let mut est = alpha_c(1.0, level, None, None, opts)?;
    let steps = ((kappa - 1.0).abs() / max_step).ceil() as usize;
    for i in 1..=steps {
        let k = 1.0 + (kappa - 1.0) * i as f64 / steps as f64;
        let pred = est.alpha * alpha_level2(k)? / alpha_level2(est.kappa)?;
        est = alpha_c_from(k, level, Some((0.9 * pred, 1.1 * pred)), Some(&est.point), Some(pred), opts)?;
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> QuadSpec {
        QuadSpec::default()
    }

    #[test]
    fn cascade_examples() {
        let c = cascade(&[], &[]).unwrap();
        assert_eq!(c.b, vec![1.0]);
        let c = cascade(&[0.5], &[1.0]).unwrap();
        assert!((c.b[0] - 0.5f64.sqrt()).abs() < 1e-15 && (c.b[1] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.c, vec![1.0]);
        let c = cascade(&[0.9852, 0.0], &[0.8794, 0.0]).unwrap();
        assert!((c.b[0] - 0.0148f64.sqrt()).abs() < 1e-12);
        assert!((c.b[1] - 0.9852f64.sqrt()).abs() < 1e-12);
        assert_eq!(c.b[2], 0.0);
        assert!(cascade(&[0.2, 0.5], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn cascade_telescopes() {
        let (pt, _) = LiftingPoint::published(5).unwrap();
        let c = cascade(&pt.p, &pt.q_s).unwrap();
        assert!((c.b.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((c.c.iter().map(|v| v * v).sum::<f64>() - pt.q_s[0]).abs() < 1e-14);
    }

    #[test]
    fn level1_values() {
        assert!((alpha_level1(1.0) - 4.2250).abs() < 1e-4);
        assert!((alpha_level1(0.0) - 2.0 / PI).abs() < 1e-15);
        // E max(|Z|-0.5,0)² from the composite rule, independent of the closed form.
        // Panel edges fall on the kink at |z| = 0.5.
        let r = gaussian_composite_rule(48, 12.0).unwrap();
        let e = crate::numerics::expect_gauss(|z| (z.abs() - 0.5).max(0.0).powi(2), &r).unwrap();
        assert!((alpha_level1(0.5) - 2.0 / (PI * e)).abs() < 1e-8);
        assert!((gamma_sq_level1(1.0) - 0.3989).abs() < 1e-4);
    }

    #[test]
    fn level2_values() {
        assert!((alpha_level2(1.0).unwrap() - 1.8159).abs() < 1e-3);
        // mpmath, 30 digits: 1.81587549583720730...
        assert!((alpha_level2(1.0).unwrap() - 1.815_875_495_837_207).abs() < 1e-12);
        // Independent scipy evaluation: 14.884652251701116.
        assert!((alpha_level2(2.0).unwrap() - 14.884_652_251_701_116).abs() < 1e-9);
        assert!(alpha_level2(1e-6).unwrap() < 0.1);
        assert!(alpha_level2(0.0).is_err());
    }

    #[test]
    fn psi2_at_origin() {
        let a = 1.8;
        let v = psi_level2(0.0, 0.0, a, 1.0, &quad()).unwrap();
        assert!((v - (-LN_2 - a * erf(1.0 / SQRT_2).ln())).abs() < 1e-12);
        let v = psi_level2(0.0, 0.0, alpha_level2(1.0).unwrap(), 1.0, &quad()).unwrap();
        assert!(v.abs() < 1e-10);
        assert!(psi_level2(1.0, 0.5, a, 1.0, &quad()).is_err());
    }

    #[test]
    fn free_coordinates_round_trip() {
        let two = LiftingPoint::new(vec![0.4], vec![0.6], vec![]).unwrap();
        let (four, _) = LiftingPoint::published(4).unwrap();
        for pt in [two, four] {
            let free = FreeSet::for_level(pt.level);
            let z = free.pack(&pt);
            assert_eq!(z.len(), free.dim());
            let back = free.unpack(&z);
            for (a, b) in pt.p.iter().chain(&pt.q_s).chain(&pt.c_s).zip(back.p.iter().chain(&back.q_s).chain(&back.c_s)) {
                assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
        // The level-2 corner is the origin of its coordinates.
        let corner = FreeSet::for_level(2).unpack(&[0.0, 0.0]);
        assert_eq!((corner.p[0], corner.q_s[0]), (0.0, 0.0));
    }

    #[test]
    fn published_level3_is_near_zero() {
        let (pt, a) = LiftingPoint::published(3).unwrap();
        let v = psi_level_r(&pt, a, 1.0, &quad()).unwrap();
        assert!(v.abs() < 5e-4, "{v}");
    }

    #[test]
    fn equal_exponents_merge_layers() {
        // c₃ = 1 merges layers 2 and 3; with p₃ = q₃ = 0 the result is ψ₂(0, 0).
        for (p2, q2) in [(0.5, 1.0), (0.9, 0.3), (0.2, 2.0)] {
            let pt = LiftingPoint::new(vec![p2, 0.0], vec![q2, 0.0], vec![1.0]).unwrap();
            let v3 = psi_level_r(&pt, 1.8, 1.0, &quad()).unwrap();
            let v2 = psi_level2(0.0, 0.0, 1.8, 1.0, &quad()).unwrap();
            assert!((v3 - v2).abs() < 1e-9, "{p2} {q2}: {v3} vs {v2}");
        }
    }

    #[test]
    fn inert_level_matches_lower_level() {
        let pt = LiftingPoint::new(vec![0.5, 0.5], vec![1.0, 1.0], vec![3.7]).unwrap();
        let v3 = psi_level_r(&pt, 1.8, 1.0, &quad()).unwrap();
        let v2 = psi_level2(0.5, 1.0, 1.8, 1.0, &quad()).unwrap();
        assert!((v3 - v2).abs() < 1e-9, "{v3} vs {v2}");
    }

    #[test]
    fn ordering_reports() {
        let two = LiftingPoint::new(vec![0.0], vec![0.0], vec![]).unwrap();
        assert_eq!(c_ordering_report(&two).classification, "decreasing");
        let (three, _) = LiftingPoint::published(3).unwrap();
        let rep = c_ordering_report(&three);
        assert_eq!(rep.classification, "non-monotone");
        assert_eq!(rep.violations, vec![(2, 3)]);
        let (five, _) = LiftingPoint::published(5).unwrap();
        assert_eq!(c_ordering_report(&five).violations, vec![(2, 3), (3, 4), (4, 5)]);
        let dec = LiftingPoint::new(vec![0.9, 0.5, 0.0], vec![1.0, 0.5, 0.0], vec![0.5, 0.2]).unwrap();
        assert_eq!(c_ordering_report(&dec).classification, "decreasing");
    }

    #[test]
    fn pack_roundtrip() {
        let (pt, _) = LiftingPoint::published(4).unwrap();
        let free = FreeSet::for_level(4);
        let back = free.unpack(&free.pack(&pt));
        for (a, b) in pt.p.iter().zip(&back.p) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in pt.q_s.iter().zip(&back.q_s) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(free.dim(), 6);
    }

    #[test]
    fn invalid_points_rejected() {
        assert!(LiftingPoint::new(vec![0.5, 0.7], vec![1.0, 0.5], vec![2.0]).is_err());
        assert!(LiftingPoint::new(vec![0.7, 0.5], vec![0.5, 1.0], vec![2.0]).is_err());
        assert!(LiftingPoint::new(vec![0.7, 0.5], vec![1.0, 0.5], vec![-2.0]).is_err());
        assert!(LiftingPoint::new(vec![0.7, 0.5], vec![1.0, 0.5], vec![]).is_err());
    }
}
