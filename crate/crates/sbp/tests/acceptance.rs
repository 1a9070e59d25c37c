//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.
//! Criteria listed in `KNOWN_UNATTAINABLE` are reported but do not fail the
//! run; the reason is printed next to them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbp::asymptotics::{
    full_seed, level3_small_kappa_alpha, level4_alpha_from, small_alpha_constant, solve_kappa_x, LEVEL4_ANCHOR,
};
use sbp::clup::{barrier_value_grad, clup_solve, feasible_init, monte_carlo, ClupConfig, GradbarOptions, McRow};
use sbp::flrdt::{
    alpha_c, alpha_c_from, alpha_level1, alpha_level2, c_ordering_report, psi_level2, psi_level_r, stationary_point,
    AlphaOptions, LiftingPoint, QuadSpec, StationaryOptions,
};
use sbp::instance::{brute_force, gen_instance, is_feasible_sign};
use sbp::numerics::{expect_gauss, finite_diff_grad, gauss_hermite_rule, gaussian_composite_rule};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

/// Criteria that cannot be met as stated, with the reason.
const KNOWN_UNATTAINABLE: &[(u32, &str)] = &[];

struct Report {
    failures: Vec<u32>,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let known = KNOWN_UNATTAINABLE.iter().find(|(k, _)| *k == id);
        let tag = if pass { "PASS" } else { "FAIL" };
        let mut line = format!("[{tag}] {id:>2}. {name}: {detail}");
        if let (false, Some((_, why))) = (pass, known) {
            let _ = write!(line, " (known unattainable: {why})");
        }
        println!("{line}");
        if !pass && known.is_none() {
            self.failures.push(id);
        }
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn level1(r: &mut Report) -> f64 {
    let t = Instant::now();
    let a = alpha_level1(1.0);
    let el = t.elapsed();
    r.record(
        1,
        "level-1 capacity at kappa=1",
        within(a, 4.2250, 1e-4) && el < Duration::from_secs(1),
        format!("alpha = {a:.6} (target 4.2250 ± 1e-4), {:.3} s", secs(el)),
    );
    a
}

fn level2(r: &mut Report) -> f64 {
    let t = Instant::now();
    let a = alpha_level2(1.0).unwrap();
    let init = LiftingPoint::new(vec![0.4], vec![0.6], vec![]).unwrap();
    let st = stationary_point(a, 1.0, &init, &StationaryOptions::default());
    let el = t.elapsed();
    let (p2, q2) = st.as_ref().map_or((f64::NAN, f64::NAN), |s| (s.point.p[0], s.point.q_s[0]));
    r.record(
        2,
        "level-2 threshold and trivial stationary point",
        within(a, 1.8159, 1e-3) && p2 < 1e-4 && q2 < 1e-4 && el < Duration::from_secs(10),
        format!("alpha = {a:.6} (target 1.8159 ± 1e-3), solver p2 = {p2:.2e}, q2 = {q2:.2e}, {:.2} s", secs(el)),
    );
    a
}

fn level3(r: &mut Report) -> f64 {
    let t = Instant::now();
    let est = alpha_c(1.0, 3, None, None, &AlphaOptions::default()).unwrap();
    let el = t.elapsed();
    let pt = &est.point;
    let dev = [rel(pt.p[0], 0.9852), rel(pt.q_s[0], 0.8794), rel(pt.c_s[0], 4.2629)]
        .into_iter()
        .fold(0.0, f64::max);
    let ordering = c_ordering_report(pt).classification;
    r.record(
        3,
        "level-3 capacity, stationary point and c ordering",
        within(est.alpha, 1.6576, 5e-3) && dev < 0.02 && ordering == "non-monotone" && el < Duration::from_secs(120),
        format!(
            "alpha = {:.6} (target 1.6576 ± 5e-3), point ({:.5}, {:.5}, {:.4}) max rel dev {:.2e}, ordering {ordering}, {:.2} s",
            est.alpha,
            pt.p[0],
            pt.q_s[0],
            pt.c_s[0],
            dev,
            secs(el)
        ),
    );
    est.alpha
}

fn level4(r: &mut Report) -> f64 {
    let t = Instant::now();
    let est = alpha_c(1.0, 4, None, None, &AlphaOptions::default()).unwrap();
    let el = t.elapsed();
    r.record(
        4,
        "level-4 capacity seeded from the published point",
        within(est.alpha, 1.6218, 1e-2) && el < Duration::from_secs(1800),
        format!(
            "alpha = {:.6} (target 1.6218 ± 1e-2), psi residual {:.1e}, grad residual {:.1e}, {:.1} s",
            est.alpha,
            est.psi_residual,
            est.grad_residual,
            secs(el)
        ),
    );
    est.alpha
}

fn monotone(r: &mut Report, seq: &[f64]) {
    let ok = seq.windows(2).all(|w| w[0] > w[1]);
    let shown: Vec<String> = seq.iter().map(|a| format!("{a:.6}")).collect();
    r.record(5, "strictly decreasing levels 1..4 at kappa=1", ok, shown.join(" > "));
}

fn asymptotics(r: &mut Report) {
    let t = Instant::now();
    let k = solve_kappa_x();
    let c = small_alpha_constant();
    let el = t.elapsed();
    r.record(
        6,
        "small-alpha constants",
        within(k, 0.7534, 1e-4) && within(c, 1.2385, 1e-3) && el < Duration::from_secs(1),
        format!("kappa_x = {k:.6}, constant = {c:.6}, {:.3} s", secs(el)),
    );
}

fn branch_consistency(r: &mut Report) {
    let t = Instant::now();
    let quad = QuadSpec::default();
    let opts = AlphaOptions::default();
    let kappa = 0.3;
    let a3 = level3_small_kappa_alpha(kappa).unwrap().alpha;
    let (seed3, s3) = full_seed(kappa, 3, &quad).unwrap();
    let f3 = alpha_c_from(kappa, 3, Some((0.9 * s3, 1.1 * s3)), Some(&seed3), Some(s3), &opts).unwrap().alpha;
    let (k0, a0, v0) = LEVEL4_ANCHOR;
    assert_eq!(k0, kappa);
    let a4 = level4_alpha_from(kappa, a0, &v0, &quad).unwrap().alpha;
    let (seed4, s4) = full_seed(kappa, 4, &quad).unwrap();
    let e4 = alpha_c_from(kappa, 4, Some((0.9 * s4, 1.1 * s4)), Some(&seed4), Some(s4), &opts).unwrap();
    let f4 = e4.alpha;
    // The full level-4 branch folds just before psi reaches zero, so its estimate is the fold.
    let how4 = if e4.fold { format!("fold, psi {:.2e}", e4.psi_residual) } else { "root".to_string() };
    let (d3, d4) = (rel(f3, a3), rel(f4, a4));
    r.record(
        7,
        "full vs small-kappa branches at kappa=0.3",
        d3 < 0.02 && d4 < 0.03,
        format!(
            "level 3: full {f3:.6} vs reduced {a3:.6} ({:.2}%), level 4: full {f4:.6} ({how4}) vs reduced {a4:.6} ({:.2}%), {:.1} s",
            100.0 * d3,
            100.0 * d4,
            secs(t.elapsed())
        ),
    );
}

fn quadrature(r: &mut Report) {
    // Gauss–Hermite with n nodes integrates Z^k exactly for k ≤ 2n − 1.
    let mut worst_moment: f64 = 0.0;
    for n in [4usize, 10, 40] {
        let rule = gauss_hermite_rule(n).unwrap();
        let mut double_fact = 1.0;
        for k in (0..2 * n).step_by(2) {
            if k > 0 {
                double_fact *= (k - 1) as f64;
            }
            let m = expect_gauss(|z| z.powi(k as i32), &rule).unwrap();
            worst_moment = worst_moment.max(rel(m, double_fact));
            let odd = expect_gauss(|z| z.powi(k as i32 + 1), &rule).unwrap();
            worst_moment = worst_moment.max(odd.abs() / double_fact.max(1.0));
        }
    }
    // Doubling the composite rule leaves ψ at the published level-3 and level-4 points unchanged.
    let mut worst_doubling: f64 = 0.0;
    for level in [3usize, 4] {
        let (pt, a) = LiftingPoint::published(level).unwrap();
        let base = QuadSpec::default();
        let doubled = QuadSpec {
            panels: 2 * base.panels,
            ..base
        };
        let v1 = psi_level_r(&pt, a, 1.0, &base).unwrap();
        let v2 = psi_level_r(&pt, a, 1.0, &doubled).unwrap();
        worst_doubling = worst_doubling.max((v1 - v2).abs());
    }
    // The composite rule reproduces E max(|Z| − 1, 0)² = 0.150679566687542 (closed form).
    let hinge = expect_gauss(|z| (z.abs() - 1.0).max(0.0).powi(2), &gaussian_composite_rule(40, 10.0).unwrap()).unwrap();
    let hinge_err = (hinge - 0.150_679_566_687_542).abs();
    r.record(
        8,
        "quadrature exactness and order doubling",
        worst_moment < 1e-10 && worst_doubling < 1e-6 && hinge_err < 1e-6,
        format!(
            "max moment error {worst_moment:.1e}, psi change on doubling {worst_doubling:.1e}, hinge error {hinge_err:.1e}"
        ),
    );
}

fn nesting(r: &mut Report) {
    let quad = QuadSpec::default();
    let (alpha, kappa) = (1.7, 1.0);
    let mut worst: f64 = 0.0;
    // c₃ = 1 merges the two outer layers of level 3; with p₃ = q₃ = 0 the
    // result is the level-2 value at the merged point (0, 0).
    for (p2, q2) in [(0.5, 1.0), (0.9, 0.3), (0.2, 2.0)] {
        let pt = LiftingPoint::new(vec![p2, 0.0], vec![q2, 0.0], vec![1.0]).unwrap();
        let v3 = psi_level_r(&pt, alpha, kappa, &quad).unwrap();
        let v2 = psi_level2(0.0, 0.0, alpha, kappa, &quad).unwrap();
        worst = worst.max((v3 - v2).abs());
    }
    // An inert level (p₃ = p₂, q₃ = q₂) reproduces level 2 at (p₂, q₂).
    for (p2, q2, c3) in [(0.5, 1.0, 3.7), (0.9, 0.3, 0.4)] {
        let pt = LiftingPoint::new(vec![p2, p2], vec![q2, q2], vec![c3]).unwrap();
        let v3 = psi_level_r(&pt, alpha, kappa, &quad).unwrap();
        let v2 = psi_level2(p2, q2, alpha, kappa, &quad).unwrap();
        worst = worst.max((v3 - v2).abs());
    }
    // Inserting an inert level into a level-3 point at r = 4.
    for (p2, q2, c3, c4) in [(0.98, 1.1, 4.0, 12.0), (0.7, 0.5, 2.0, 0.8)] {
        let p4 = LiftingPoint::new(vec![p2, p2, 0.0], vec![q2, q2, 0.0], vec![c3, c4]).unwrap();
        let p3 = LiftingPoint::new(vec![p2, 0.0], vec![q2, 0.0], vec![c4]).unwrap();
        let v4 = psi_level_r(&p4, alpha, kappa, &quad).unwrap();
        let v3 = psi_level_r(&p3, alpha, kappa, &quad).unwrap();
        worst = worst.max((v4 - v3).abs());
    }
    r.record(
        9,
        "nesting identities (merge, inert level, insertion at r=4)",
        worst < 1e-9,
        format!("max discrepancy {worst:.1e}"),
    );
}

fn clup_soundness(r: &mut Report) {
    let t = Instant::now();
    let alphas = [0.8, 1.0, 1.2, 1.5, 1.8];
    let (mut successes, mut dominated, mut certified) = (0, 0, 0);
    let total = 50;
    for i in 0..total {
        let n = 12 + i % 11;
        let inst = gen_instance(n, alphas[i % alphas.len()], 1.0, 1000 + i as u64).unwrap();
        let oracle = brute_force(&inst).unwrap();
        let res = clup_solve(&inst, &ClupConfig::default(), &mut ChaCha8Rng::seed_from_u64(i as u64)).unwrap();
        let (feasible, k) = is_feasible_sign(&res.sign_out, &inst).unwrap();
        if res.success {
            successes += 1;
            certified += usize::from(feasible && k == res.kappa_hat);
        }
        dominated += usize::from(res.kappa_hat >= oracle.xi_star);
    }
    let mut worst_grad: f64 = 0.0;
    for j in 0..100usize {
        let n = [10usize, 50, 200][j % 3];
        let inst = gen_instance(n, 1.5, 1.0, 5000 + j as u64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(j as u64);
        let (x0, _) = feasible_init(&inst, 1.5, &mut rng);
        let x: Vec<f64> = x0.iter().enumerate().map(|(i, v)| v * (0.3 + 0.6 * ((i * 7 + j) % 10) as f64 / 10.0)).collect();
        let (_, g) = barrier_value_grad(&x, &inst, 1.5, 1.3).unwrap();
        let f = |y: &[f64]| barrier_value_grad(y, &inst, 1.5, 1.3).unwrap().0;
        let fd = finite_diff_grad(&f, &x, Some(1e-7)).unwrap();
        let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst_grad = worst_grad.max(num / den);
    }
    let el = t.elapsed();
    r.record(
        10,
        "CLuP soundness, oracle dominance, gradient check",
        certified == successes && dominated == total && worst_grad < 1e-5 && el < Duration::from_secs(300),
        format!(
            "{successes}/{total} successes all certified: {}, kappa_hat >= xi* on {dominated}/{total}, worst gradient rel error {worst_grad:.1e}, {:.1} s",
            certified == successes,
            secs(el)
        ),
    );
}

fn crossing(rows: &[McRow], level: f64) -> Option<f64> {
    rows.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        (a.mean_kappa_hat <= level && b.mean_kappa_hat > level).then(|| {
            a.alpha + (level - a.mean_kappa_hat) * (b.alpha - a.alpha) / (b.mean_kappa_hat - a.mean_kappa_hat)
        })
    })
}

/// The library defaults take ~1 s per CLuP run at n = 100, most of it spent
/// driving the gradient from 1e-6 to 1e-8 without any sign change. This
/// looser inner stop gives the same κ̂ on sampled runs at a fraction of the
/// cost, and 50 restarts keeps the sweep within minutes.
fn mc_config() -> ClupConfig {
    let base = ClupConfig::default();
    ClupConfig {
        max_restarts: 50,
        gradbar: GradbarOptions {
            grad_tol: 1e-6,
            max_inner_iters: 2000,
            ..base.gradbar.clone()
        },
        ..base
    }
}

fn monte_carlo_trend(r: &mut Report, theory: &[(usize, f64)]) {
    let t = Instant::now();
    let grid: Vec<f64> = (0..11).map(|i| ((0.6 + 0.1 * i as f64) * 1e12).round() / 1e12).collect();
    let rows = monte_carlo(100, &grid, 1.0, 50, &mc_config(), 2024).unwrap();
    let violations: Vec<String> = rows
        .windows(2)
        .filter(|w| w[1].mean_kappa_hat < w[0].mean_kappa_hat - w[0].stderr.max(w[1].stderr))
        .map(|w| format!("{}->{}", w[0].alpha, w[1].alpha))
        .collect();
    let cross = crossing(&rows, 1.0);

    let mut csv = String::from("series,level,kappa,alpha,value\n");
    for (level, a) in theory {
        let _ = writeln!(csv, "theory,{level},1,{a},1");
    }
    for row in &rows {
        let _ = writeln!(csv, "mc,,1,{},{}", row.alpha, row.mean_kappa_hat);
    }
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("figure1_overlay.csv");
    std::fs::write(&path, csv).unwrap();

    let alpha_at = |l: usize| theory.iter().find(|(k, _)| *k == l).map(|x| x.1).unwrap_or(f64::NAN);
    let cross_text = match cross {
        Some(c) => format!(
            "mean kappa_hat crosses 1 at alpha ≈ {c:.3} (level 2: {:.4}, level 4: {:.4})",
            alpha_at(2),
            alpha_at(4)
        ),
        None => "mean kappa_hat does not cross 1 on the grid".into(),
    };
    let curve: Vec<String> = rows.iter().map(|x| format!("{:.2}:{:.4}±{:.4}", x.alpha, x.mean_kappa_hat, x.stderr)).collect();
    r.record(
        11,
        "Monte Carlo mean kappa_hat non-decreasing in alpha (n=100, kappa=1, 50 trials)",
        violations.is_empty(),
        format!(
            "violations [{}]; {cross_text}; curve {}; overlay {}; {:.1} s",
            violations.join(", "),
            curve.join(" "),
            path.display(),
            secs(t.elapsed())
        ),
    );
}

// Runs without the libtest harness so the report is printed on every run.
fn main() {
    let mut r = Report { failures: vec![] };
    let a1 = level1(&mut r);
    let a2 = level2(&mut r);
    let a3 = level3(&mut r);
    let a4 = level4(&mut r);
    monotone(&mut r, &[a1, a2, a3, a4]);
    asymptotics(&mut r);
    branch_consistency(&mut r);
    quadrature(&mut r);
    nesting(&mut r);
    clup_soundness(&mut r);
    monte_carlo_trend(&mut r, &[(2, a2), (3, a3), (4, a4)]);
    if r.failures.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        eprintln!("acceptance: failed criteria {:?}", r.failures);
        std::process::exit(1);
    }
}
