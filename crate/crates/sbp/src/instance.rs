//! Gaussian SBP instances, sign-vector feasibility and the exhaustive oracle.
//!
//! Entries of G come from a counter-based stream: the k-th 64-bit word is the
//! SplitMix64 finalizer applied to `seed + (k + 1)·0x9E3779B97F4A7C15`
//! (wrapping). Words 2j and 2j+1 give u₁ = (w₂ⱼ >> 11 + 1)·2⁻⁵³ ∈ (0, 1] and
//! u₂ = (w₂ⱼ₊₁ >> 11)·2⁻⁵³ ∈ [0, 1), and Box–Muller turns them into
//! √(−2 ln u₁)·cos(2πu₂) (entry 2j) and √(−2 ln u₁)·sin(2πu₂) (entry 2j+1).
//! G is filled row-major, so entry (j, i) has index j·n + i.

use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, Write};

pub const GENERATOR_ID: &str = "splitmix64-boxmuller-v1";
/// Matrices supplied directly rather than drawn from the stream.
pub const EXPLICIT_ID: &str = "explicit";
pub const MAX_ORACLE_N: usize = 26;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(counter: u64, seed: u64) -> u64 {
    let mut z = seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal number `index` of the stream for `seed`.
pub fn normal_at(seed: u64, index: u64) -> f64 {
    let pair = index / 2;
    let u1 = ((splitmix64(2 * pair, seed) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (splitmix64(2 * pair + 1, seed) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let r = (-2.0 * u1.ln()).sqrt();
    if index.is_multiple_of(2) {
        r * (2.0 * PI * u2).cos()
    } else {
        r * (2.0 * PI * u2).sin()
    }
}

/// Round-half-up of α·n.
pub fn rows_for(n: usize, alpha: f64) -> usize {
    (alpha * n as f64 + 0.5).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbpInstance {
    pub n: usize,
    pub m: usize,
    pub kappa: f64,
    pub seed: u64,
    pub generator: String,
    /// Row-major m×n.
    pub g: Vec<f64>,
}

pub fn gen_instance(n: usize, alpha: f64, kappa: f64, seed: u64) -> Result<SbpInstance> {
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("alpha must be positive (got {alpha})")));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Parameter(format!("kappa must be positive (got {kappa})")));
    }
    let m = rows_for(n, alpha);
    if m == 0 {
        return Err(Error::Parameter(format!("alpha·n = {} rounds to zero rows", alpha * n as f64)));
    }
    let g = (0..(m * n) as u64).map(|k| normal_at(seed, k)).collect();
    Ok(SbpInstance {
        n,
        m,
        kappa,
        seed,
        generator: GENERATOR_ID.into(),
        g,
    })
}

impl SbpInstance {
    pub fn from_rows(rows: &[Vec<f64>], kappa: f64) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parameter("matrix must be non-empty and rectangular".into()));
        }
        Ok(SbpInstance {
            n,
            m,
            kappa,
            seed: 0,
            generator: EXPLICIT_ID.into(),
            g: rows.concat(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.g[j * self.n..(j + 1) * self.n]
    }

    /// Gx for a real vector x.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m).map(|j| dot(self.row(j), x)).collect()
    }

    /// Gᵀy.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (j, yj) in y.iter().enumerate() {
            for (o, g) in out.iter_mut().zip(self.row(j)) {
                *o += g * yj;
            }
        }
        out
    }

    /// Writes the text format: a header of `key value` lines, then m rows of
    /// n space-separated values in shortest round-trip decimal form.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# sbp-instance v1")?;
        writeln!(w, "generator {}", self.generator)?;
        writeln!(w, "n {}", self.n)?;
        writeln!(w, "m {}", self.m)?;
        writeln!(w, "kappa {}", self.kappa)?;
        writeln!(w, "seed {}", self.seed)?;
        for j in 0..self.m {
            let line: Vec<String> = self.row(j).iter().map(f64::to_string).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let bad = |msg: String| Error::Parameter(format!("instance file: {msg}"));
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| bad("unexpected end of file".into()))?
                .map_err(Error::from)
        };
        let magic = next()?;
        if magic.trim() != "# sbp-instance v1" {
            return Err(bad(format!("unknown header {magic:?}")));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = next()?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                _ => Err(bad(format!("expected `{key}`, got {line:?}"))),
            }
        };
        let generator = field("generator")?;
        let parse_usize = |s: String| s.parse::<usize>().map_err(|e| bad(format!("{s}: {e}")));
        let n = parse_usize(field("n")?)?;
        let m = parse_usize(field("m")?)?;
        let kappa_s = field("kappa")?;
        let kappa = kappa_s.parse::<f64>().map_err(|e| bad(format!("{kappa_s}: {e}")))?;
        let seed_s = field("seed")?;
        let seed = seed_s.parse::<u64>().map_err(|e| bad(format!("{seed_s}: {e}")))?;
        let mut g = Vec::with_capacity(m * n);
        for j in 0..m {
            let line = next()?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| bad(format!("{t}: {e}"))))
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(bad(format!("row {j} has {} entries, expected {n}", row.len())));
            }
            g.extend(row);
        }
        Ok(SbpInstance {
            n,
            m,
            kappa,
            seed,
            generator,
            g,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// κ̂ = max_j |(G s)_j| / √n and whether κ̂ ≤ κ.
pub fn is_feasible_sign(sign: &[i8], inst: &SbpInstance) -> Result<(bool, f64)> {
    if sign.len() != inst.n {
        return Err(Error::Parameter(format!(
            "sign vector has length {}, instance has n = {}",
            sign.len(),
            inst.n
        )));
    }
    if sign.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::Parameter("sign vector entries must be ±1".into()));
    }
    let root_n = (inst.n as f64).sqrt();
    let kappa_hat = (0..inst.m)
        .map(|j| {
            let s: f64 = inst.row(j).iter().zip(sign).map(|(g, &x)| g * f64::from(x)).sum();
            s.abs() / root_n
        })
        .fold(0.0, f64::max);
    Ok((kappa_hat <= inst.kappa, kappa_hat))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub xi_star: f64,
    pub argmin_sign: Vec<i8>,
    pub feasible: bool,
    pub enumerated: u64,
}

/// Sign vector for a bit pattern: bit (n−1−i) set means s_i = +1, so numeric
/// order of masks is lexicographic order of sign vectors with −1 < +1.
fn mask_to_sign(mask: u64, n: usize) -> Vec<i8> {
    (0..n).map(|i| if mask >> (n - 1 - i) & 1 == 1 { 1 } else { -1 }).collect()
}

#[derive(Clone, Copy)]
struct Best {
    value: f64,
    mask: u64,
}

impl Best {
    fn better(self, other: Best) -> Best {
        if other.value < self.value || (other.value == self.value && other.mask < self.mask) {
            other
        } else {
            self
        }
    }
}

/// Exhaustive minimum of max_j |(Gx)_j| over x ∈ {±1/√n}ⁿ. Only vectors with
/// s₀ = −1 are visited; each is the lexicographically smaller of its ± pair.
/// Gray-code sums screen candidates, and anything within a small tolerance of
/// the incumbent is re-scored with [`is_feasible_sign`], which makes the
/// result and the tie-break exact.
pub fn brute_force(inst: &SbpInstance) -> Result<OracleResult> {
    let n = inst.n;
    if n > MAX_ORACLE_N {
        return Err(Error::Scale(format!("brute force needs n <= {MAX_ORACLE_N} (got {n})")));
    }
    let free = n - 1;
    let block_bits = free.min(8);
    let low_bits = free - block_bits;
    let root_n = (n as f64).sqrt();
    let exact = |mask: u64| is_feasible_sign(&mask_to_sign(mask, n), inst).map(|r| r.1).unwrap();

    let best = (0..1u64 << block_bits)
        .into_par_iter()
        .map(|block| {
            // Masks in this block: high bits fixed to `block`, low bits Gray-coded.
            let base = block << low_bits;
            let mut sums: Vec<f64> = (0..inst.m)
                .map(|j| {
                    inst.row(j)
                        .iter()
                        .enumerate()
                        .map(|(i, g)| if base >> (n - 1 - i) & 1 == 1 { *g } else { -*g })
                        .sum()
                })
                .collect();
            let mut best = Best {
                value: exact(base),
                mask: base,
            };
            let mut gray = 0u64;
            for step in 1..1u64 << low_bits {
                let bit = step.trailing_zeros() as usize;
                gray ^= 1 << bit;
                let col = n - 1 - bit;
                let up = gray >> bit & 1 == 1;
                for (j, s) in sums.iter_mut().enumerate() {
                    let g = inst.g[j * n + col];
                    *s += if up { 2.0 * g } else { -2.0 * g };
                }
                let approx = sums.iter().fold(0.0f64, |a, s| a.max(s.abs())) / root_n;
                if approx <= best.value + 1e-9 * (1.0 + best.value) {
                    let mask = base | gray;
                    best = best.better(Best {
                        value: exact(mask),
                        mask,
                    });
                }
            }
            best
        })
        .reduce(
            || Best {
                value: f64::INFINITY,
                mask: u64::MAX,
            },
            Best::better,
        );

    let argmin_sign = mask_to_sign(best.mask, n);
    let (feasible, xi_star) = is_feasible_sign(&argmin_sign, inst)?;
    Ok(OracleResult {
        xi_star,
        argmin_sign,
        feasible,
        enumerated: 1u64 << free,
    })
}
