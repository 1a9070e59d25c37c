//! Numerical kernels shared by the rest of the crate: Gaussian quadrature,
//! stable log-domain special functions, scalar root finding, derivative-free
//! minimization and finite differences.

use crate::error::{Error, Result};
use rayon::prelude::*;
use libm::erfc;
use std::f64::consts::{LN_2, PI, SQRT_2};

/// Nodes and weights for expectations over a standard normal variable.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Same rule with nodes multiplied by `scale` (an expectation over `scale * Z`).
    pub fn scaled(&self, scale: f64) -> QuadratureRule {
        QuadratureRule {
            order: self.order,
            nodes: self.nodes.iter().map(|x| x * scale).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.ln()).collect()
    }
}

/// Gauss-Hermite rule for E[f(Z)], Z ~ N(0,1).
///
/// Nodes are isolated by Sturm-sequence bisection on the Jacobi matrix and
/// polished by Newton steps on the orthonormal Hermite recurrence, which stays
/// finite at orders where the monic recurrence overflows.
pub fn gauss_hermite_rule(order: usize) -> Result<QuadratureRule> {
    if !(2..=512).contains(&order) {
        return Err(Error::Parameter(format!(
            "quadrature order {order} outside [2, 512]"
        )));
    }
    let n = order;
    // Physicists' Jacobi matrix: zero diagonal, off-diagonal sqrt(k/2).
    let below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = -x;
        if d < 0.0 {
            count += 1;
        }
        for k in 1..n {
            let denom = if d == 0.0 { 1e-300 } else { d };
            d = -x - (k as f64 / 2.0) / denom;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    // Orthonormal recurrence: returns (h_n(z), sqrt(2n) h_{n-1}(z)).
    let eval = |z: f64| -> (f64, f64) {
        let mut p1 = PI.powf(-0.25);
        let mut p2 = 0.0;
        for j in 0..n {
            let p3 = p2;
            p2 = p1;
            let jf = j as f64;
            p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
        }
        (p1, (2.0 * n as f64).sqrt() * p2)
    };
    let bound = (2.0 * n as f64 + 1.0).sqrt() + 1.0;
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let (mut lo, mut hi) = (-bound, bound);
        while hi - lo > 1e-13 * hi.abs().max(lo.abs()).max(1.0) {
            let mid = 0.5 * (lo + hi);
            if below(mid) > i {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut z = 0.5 * (lo + hi);
        let mut pp = eval(z).1;
        for _ in 0..3 {
            let (p, d) = eval(z);
            pp = d;
            if d == 0.0 {
                break;
            }
            z -= p / d;
        }
        pairs.push((z * SQRT_2, 2.0 / (pp * pp) / PI.sqrt()));
    }
    // Symmetrize so odd moments vanish to rounding.
    for i in 0..n / 2 {
        let x = 0.5 * (pairs[n - 1 - i].0 - pairs[i].0);
        let w = 0.5 * (pairs[n - 1 - i].1 + pairs[i].1);
        pairs[i] = (-x, w);
        pairs[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(QuadratureRule {
        order,
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    })
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

pub const PANEL_POINTS: usize = 8;

/// Composite Gauss-Legendre rule for a standard normal variable on
/// [-half_width, half_width], `panels` panels of 8 points each, weights
/// multiplied by the normal density and renormalized to sum to one.
///
/// Unlike Gauss-Hermite this stays accurate for integrands with sharp,
/// off-centre peaks such as (2cosh)^c and high powers of erfc differences.
pub fn gaussian_composite_rule(panels: usize, half_width: f64) -> Result<QuadratureRule> {
    if panels == 0 || !(half_width > 0.0) {
        return Err(Error::Parameter(format!(
            "composite rule needs panels > 0 and half_width > 0 (got {panels}, {half_width})"
        )));
    }
    let (gx, gw) = gauss_legendre(PANEL_POINTS);
    let width = 2.0 * half_width / panels as f64;
    let mut nodes = Vec::with_capacity(panels * PANEL_POINTS);
    let mut weights = Vec::with_capacity(panels * PANEL_POINTS);
    for k in 0..panels {
        let mid = -half_width + (k as f64 + 0.5) * width;
        for (x, w) in gx.iter().zip(&gw) {
            let node = mid + 0.5 * width * x;
            nodes.push(node);
            weights.push(0.5 * width * w * (-0.5 * node * node).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(QuadratureRule {
        order: nodes.len(),
        nodes,
        weights,
    })
}

/// E[f(Z)] under `rule`.
pub fn expect_gauss<F: Fn(f64) -> f64>(f: F, rule: &QuadratureRule) -> Result<f64> {
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(*x);
        if !v.is_finite() {
            return Err(Error::Evaluation {
                node: *x,
                value: v,
                layer: None,
            });
        }
        acc += w * v;
    }
    Ok(acc)
}

/// log Σ exp(v_i), stable. Empty or all -inf input gives -inf.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// log(2 cosh z) without overflow.
pub fn log_2cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// log erfc(x); finite for every finite x.
pub fn log_erfc(x: f64) -> f64 {
    if x < 26.0 {
        erfc(x).ln()
    } else {
        // erfc(x) = e^{-x^2}/(x sqrt(pi)) * (1 - 1/(2x^2) + 3/(4x^4) - 15/(8x^6) + 105/(16x^8))
        let y = 1.0 / (2.0 * x * x);
        let series = 1.0 - y * (1.0 - 3.0 * y * (1.0 - 5.0 * y * (1.0 - 7.0 * y)));
        -x * x - (x * PI.sqrt()).ln() + series.ln()
    }
}

/// log Φ(x) for the standard normal CDF.
pub fn log_ndtr(x: f64) -> f64 {
    log_erfc(-x / SQRT_2) - LN_2
}

/// log(½erfc(a) − ½erfc(b)) for a < b, without cancellation.
pub fn log_erfc_diff_half(a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::Domain(format!(
            "log_erfc_diff_half needs a < b (got a = {a}, b = {b})"
        )));
    }
    Ok(log_erfc_diff_half_unchecked(a, b))
}

pub(crate) fn log_erfc_diff_half_unchecked(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        // Both in the right tail: factor out the larger term.
        let la = log_erfc(a);
        let lb = log_erfc(b);
        la - LN_2 + (-(lb - la).exp()).ln_1p()
    } else if b <= 0.0 {
        // ½erfc(a) − ½erfc(b) = ½erfc(−b) − ½erfc(−a)
        log_erfc_diff_half_unchecked(-b, -a)
    } else {
        // 1 − ½erfc(−a) − ½erfc(b), both tails small.
        let tail = 0.5 * erfc(-a) + 0.5 * erfc(b);
        (-tail).ln_1p()
    }
}

/// Bisection on a sign-changing bracket. Stops when the bracket is narrower
/// than `tol` or f hits exactly zero; returns the midpoint of the final bracket.
pub fn bisect_root<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) || !(lo < hi) {
        return Err(Error::Parameter(format!(
            "bisect_root needs lo < hi and tol > 0 (got [{lo}, {hi}], tol {tol})"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.signum() != fb.signum()) || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::Bracket {
            lo,
            hi,
            flo: fa,
            fhi: fb,
        });
    }
    for _ in 0..400 {
        if b - a < tol {
            break;
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Axis-aligned box. Empty bounds mean unbounded.
#[derive(Debug, Clone, Default)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded() -> Self {
        Bounds::default()
    }

    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Bounds { lower, upper }
    }

    fn project(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            if let Some(l) = self.lower.get(i) {
                *xi = xi.max(*l);
            }
            if let Some(u) = self.upper.get(i) {
                *xi = xi.min(*u);
            }
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, xi)| {
            self.lower.get(i).is_none_or(|l| xi >= l) && self.upper.get(i).is_none_or(|u| xi <= u)
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop once the largest vertex distance from the best vertex falls below this.
    pub diameter_tol: f64,
    /// Stop once f spread across the simplex falls below this.
    pub f_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 20_000,
            diameter_tol: 1e-10,
            f_tol: 0.0,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Nelder-Mead with dimension-adaptive coefficients (Gao and Han) and
/// projection onto `bounds`. Non-finite values are treated as +inf.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> Minimum {
    let n = x0.len();
    let nf = n.max(1) as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &mut Vec<f64>| -> f64 {
        bounds.project(x);
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    let f0 = eval(&mut start);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut v = start.clone();
        let step = opts.initial_step * v[i].abs().max(1.0);
        v[i] += step;
        if !bounds.contains(&v) {
            v[i] -= 2.0 * step;
        }
        let fv = eval(&mut v);
        simplex.push((v, fv));
    }
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(&best.0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let spread = simplex[n].1 - simplex[0].1;
        if n == 0
            || diameter < opts.diameter_tol
            || (spread.is_finite() && spread <= opts.f_tol)
            || evals.get() >= opts.max_evals
        {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let mut xr = along(alpha);
        let fr = eval(&mut xr);
        if fr < simplex[0].1 {
            let mut xe = along(alpha * beta);
            let fe = eval(&mut xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (mut xc, outside) = if fr < worst.1 {
                (along(alpha * gamma), true)
            } else {
                (along(-gamma), false)
            };
            let fc = eval(&mut xc);
            if (outside && fc <= fr) || (!outside && fc < worst.1) {
                simplex[n] = (xc, fc);
            } else {
                let b = simplex[0].0.clone();
                for (v, fv) in simplex.iter_mut().skip(1) {
                    for (x, bx) in v.iter_mut().zip(&b) {
                        *x = bx + delta * (*x - bx);
                    }
                    *fv = eval(v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (point, value) = simplex.swap_remove(0);
    Minimum {
        point,
        value,
        evals: evals.get(),
    }
}

/// Runs Nelder-Mead from every start and keeps the lowest value; ties go to
/// the lowest start index, so parallel and serial runs agree.
pub fn minimize_multistart<F: Fn(&[f64]) -> f64 + Sync>(
    f: &F,
    starts: &[Vec<f64>],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> Result<Minimum> {
    if starts.is_empty() {
        return Err(Error::Parameter("no starting points".into()));
    }
    if let Some(bad) = starts.iter().position(|s| !bounds.contains(s)) {
        return Err(Error::Parameter(format!("start {bad} lies outside bounds")));
    }
    let runs: Vec<Minimum> = starts
        .par_iter()
        .map(|s| nelder_mead(f, s, bounds, opts))
        .collect();
    runs.into_iter()
        .filter(|m| m.value.is_finite())
        .reduce(|best, m| if m.value < best.value { m } else { best })
        .ok_or_else(|| Error::Optimization("every start produced a non-finite objective".into()))
}

/// Default central-difference step for coordinate value `x`.
pub fn fd_step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

/// Central-difference gradient. `h = None` uses `fd_step` per coordinate.
pub fn finite_diff_grad<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: Option<f64>) -> Result<Vec<f64>> {
    let mut g = Vec::with_capacity(x.len());
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let hi = h.unwrap_or_else(|| fd_step(x[i]));
        y[i] = x[i] + hi;
        let fp = f(&y);
        y[i] = x[i] - hi;
        let fm = f(&y);
        y[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Evaluation {
                node: x[i],
                value: if fp.is_finite() { fm } else { fp },
                layer: Some(i),
            });
        }
        g.push((fp - fm) / (2.0 * hi));
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Stop when |F|² drops below this.
    pub tol: f64,
    /// Relative forward-difference step for the Jacobian.
    pub jac_step: f64,
    /// Largest allowed step in any coordinate.
    pub max_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iters: 60,
            tol: 1e-24,
            jac_step: 1e-4,
            max_step: 1.0,
        }
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Solves the dense system `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                let (top, bottom) = a.split_at_mut(row);
                for (x, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= factor * p;
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Levenberg-Marquardt on a square residual system F(x) = 0 with a
/// forward-difference Jacobian. Returns the best point seen and |F|² there.
pub fn levenberg_marquardt<F: Fn(&[f64]) -> Option<Vec<f64>>>(
    f: &F,
    x0: &[f64],
    opts: &LmOptions,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let Some(mut fx) = f(&x) else {
        return (x, f64::INFINITY);
    };
    let mut cost = sq_norm(&fx);
    let mut lambda = 1e-3;
    for _ in 0..opts.max_iters {
        if cost < opts.tol {
            break;
        }
        let mut jac = vec![vec![0.0; n]; fx.len()];
        let mut ok = true;
        for j in 0..n {
            let h = opts.jac_step * (1.0 + x[j].abs());
            let mut y = x.clone();
            y[j] += h;
            match f(&y) {
                Some(fy) => {
                    for i in 0..fx.len() {
                        jac[i][j] = (fy[i] - fx[i]) / h;
                    }
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtf = vec![0.0; n];
        for a in 0..n {
            for b in 0..n {
                jtj[a][b] = (0..fx.len()).map(|i| jac[i][a] * jac[i][b]).sum();
            }
            jtf[a] = -(0..fx.len()).map(|i| jac[i][a] * fx[i]).sum::<f64>();
        }
        let mut improved = false;
        for _ in 0..12 {
            let mut m = jtj.clone();
            for (d, row) in m.iter_mut().enumerate() {
                row[d] += lambda * jtj[d][d].max(1e-12);
            }
            let Some(mut step) = solve_linear(m, jtf.clone()) else {
                lambda *= 10.0;
                continue;
            };
            let big = step.iter().fold(0.0f64, |acc, s| acc.max(s.abs()));
            if big > opts.max_step {
                step.iter_mut().for_each(|s| *s *= opts.max_step / big);
            }
            let y: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + s).collect();
            if let Some(fy) = f(&y) {
                let c = sq_norm(&fy);
                if c < cost {
                    x = y;
                    fx = fy;
                    cost = c;
                    lambda = (lambda * 0.2).max(1e-12);
                    improved = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (x, cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_low_order_moments() {
        let r = gauss_hermite_rule(2).unwrap();
        let m2 = expect_gauss(|z| z * z, &r).unwrap();
        assert!((m2 - 1.0).abs() < 1e-15);
        let r = gauss_hermite_rule(20).unwrap();
        let c = expect_gauss(f64::cosh, &r).unwrap();
        assert!((c - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn hermite_large_orders_are_normalized() {
        for order in [80, 160, 512] {
            let r = gauss_hermite_rule(order).unwrap();
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            let m2 = expect_gauss(|z| z * z, &r).unwrap();
            assert!((m2 - 1.0).abs() < 1e-12, "order {order}: {m2}");
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn hermite_order_range() {
        assert!(gauss_hermite_rule(1).is_err());
        assert!(gauss_hermite_rule(513).is_err());
    }

    #[test]
    fn hinge_square_moment() {
        // 2(-e^{-1/2}/sqrt(2pi) + erfc(1/sqrt2)): frozen from adaptive integration.
        let r = gauss_hermite_rule(60).unwrap();
        let v = expect_gauss(|z| (z.abs() - 1.0).max(0.0).powi(2), &r).unwrap();
        let closed = 2.0 * (-(-0.5f64).exp() / (2.0 * PI).sqrt() + erfc(1.0 / SQRT_2));
        assert!((closed - 0.150_679_566_687_542).abs() < 1e-13);
        // The kink limits Gauss-Hermite accuracy; the composite rule is much tighter.
        assert!((v - closed).abs() < 3e-4);
        let c = gaussian_composite_rule(40, 10.0).unwrap();
        let vc = expect_gauss(|z| (z.abs() - 1.0).max(0.0).powi(2), &c).unwrap();
        assert!((vc - closed).abs() < 1e-6);
    }

    #[test]
    fn composite_rule_moments() {
        let r = gaussian_composite_rule(40, 10.0).unwrap();
        assert_eq!(r.len(), 320);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        assert!((expect_gauss(|z| z * z, &r).unwrap() - 1.0).abs() < 1e-12);
        assert!((expect_gauss(|z| z.powi(4), &r).unwrap() - 3.0).abs() < 1e-10);
        assert!(expect_gauss(|z| z, &r).unwrap().abs() < 1e-14);
    }

    #[test]
    fn expect_reports_bad_node() {
        let r = gauss_hermite_rule(4).unwrap();
        let e = expect_gauss(|z| if z > 0.0 { f64::NAN } else { 0.0 }, &r).unwrap_err();
        assert!(matches!(e, Error::Evaluation { node, .. } if node > 0.0));
    }

    #[test]
    fn log_cosh_stability() {
        assert!((log_2cosh(0.0) - LN_2).abs() < 1e-16);
        assert!((log_2cosh(800.0) - 800.0).abs() < 1e-12);
        assert!((log_2cosh(-3.0) - (2.0 * 3f64.cosh()).ln()).abs() < 1e-14);
    }

    #[test]
    fn erfc_difference_symmetric_case() {
        let v = log_erfc_diff_half(-1.0 / SQRT_2, 1.0 / SQRT_2).unwrap();
        assert!((v - 0.682_689_492_137_085_9f64.ln()).abs() < 1e-14);
        assert!((v + 0.381_715_146_302_126).abs() < 1e-14);
        // In erfc units a = -1, b = 1 gives erf(1).
        let v = log_erfc_diff_half(-1.0, 1.0).unwrap();
        assert!((v - libm::erf(1.0).ln()).abs() < 1e-15);
        assert!(log_erfc_diff_half(-40.0, 40.0).unwrap().abs() < 1e-300);
        assert!(log_erfc_diff_half(1.0, 1.0).is_err());
    }

    #[test]
    fn erfc_difference_far_tail() {
        // log(½erfc(9) − ½erfc(11)), 200-digit mpmath reference.
        let v = log_erfc_diff_half(9.0, 11.0).unwrap();
        let reference = -84.468_817_060_089_03;
        assert!(((v - reference) / reference).abs() < 1e-8, "{v}");
        // Deep tail stays finite.
        let v = log_erfc_diff_half(30.0, 31.0).unwrap();
        assert!((v + 904.667_264_291_203_8).abs() < 1e-9 * 904.7, "{v}");
    }

    #[test]
    fn bisect_examples() {
        let r = bisect_root(|x| x * x - 2.0, 1.0, 2.0, 1e-12).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(bisect_root(|x| x, -1.0, 1.0, 1e-12).unwrap(), 0.0);
        assert!(matches!(
            bisect_root(|x| x * x + 1.0, -1.0, 1.0, 1e-9),
            Err(Error::Bracket { .. })
        ));
    }

    #[test]
    fn nelder_mead_quadratic() {
        let f = |x: &[f64]| x.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>();
        let m = minimize_multistart(&f, &[vec![0.0; 3]], &Bounds::unbounded(), &Default::default()).unwrap();
        assert!(m.value < 1e-16);
        assert!(m.point.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn multistart_picks_lower_basin() {
        // Basins at -1 (value 0.5) and +2 (value 0).
        let f = |x: &[f64]| ((x[0] + 1.0).powi(2) + 0.5).min((x[0] - 2.0).powi(2));
        let m = minimize_multistart(
            &f,
            &[vec![-1.2], vec![2.3]],
            &Bounds::new(vec![-5.0], vec![5.0]),
            &Default::default(),
        )
        .unwrap();
        assert!((m.point[0] - 2.0).abs() < 1e-6);
        assert!(minimize_multistart(&f, &[vec![9.0]], &Bounds::new(vec![-5.0], vec![5.0]), &Default::default()).is_err());
    }

    #[test]
    fn fd_gradient() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let g = finite_diff_grad(&f, &[1.0, 2.0], Some(1e-5)).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);
        let g = finite_diff_grad(&|_: &[f64]| 3.0, &[1.0, 2.0], None).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lm_solves_nonlinear_system() {
        let f = |x: &[f64]| Some(vec![x[0] * x[0] + x[1] - 3.0, x[0] - x[1] * x[1] + 1.0]);
        let (x, c) = levenberg_marquardt(&f, &[0.5, 0.5], &Default::default());
        assert!(c < 1e-20, "{c} at {x:?}");
    }
}
