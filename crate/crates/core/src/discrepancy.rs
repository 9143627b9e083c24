//! Discrepancy between a subsample and a two-level orthogonal array.
//!
//! For two rows `u`, `v` of a design scaled to `[-1, 1]^p` the pair loss is
//! `(p - |u|²/2 - |v|²/2 + δ(u, v))^e`, where `δ` counts coordinates with
//! strictly same-signed entries and `e` is 2 (strength-2 target) or 4
//! (strength-4 target). The total discrepancy sums this over all unordered
//! row pairs. With `e = 2` it is bounded below by
//! `(k²p(p+1) - 4kp²) / 8`, with equality exactly for orthogonal arrays.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::DataMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Exponent {
    #[default]
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "4")]
    Four,
}

impl Exponent {
    pub fn as_u32(self) -> u32 {
        match self {
            Exponent::Two => 2,
            Exponent::Four => 4,
        }
    }

    #[inline]
    pub(crate) fn raise(self, base: f64) -> f64 {
        let sq = base * base;
        match self {
            Exponent::Two => sq,
            Exponent::Four => sq * sq,
        }
    }
}

impl TryFrom<u32> for Exponent {
    type Error = Error;

    fn try_from(v: u32) -> Result<Self> {
        match v {
            2 => Ok(Exponent::Two),
            4 => Ok(Exponent::Four),
            other => Err(Error::invalid(format!("exponent must be 2 or 4, got {other}"))),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: u32 = s
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("exponent must be 2 or 4, got {s:?}")))?;
        Exponent::try_from(v)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u32())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DiscrepancyConfig {
    pub exponent: Exponent,
}

impl DiscrepancyConfig {
    pub const STRENGTH_2: DiscrepancyConfig = DiscrepancyConfig {
        exponent: Exponent::Two,
    };
    pub const STRENGTH_4: DiscrepancyConfig = DiscrepancyConfig {
        exponent: Exponent::Four,
    };
}

fn check_len(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            what: "row length",
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(())
}

/// Number of coordinates where `u` and `v` have strictly the same sign.
/// Zeros agree with nothing.
pub fn sign_agreement(u: &[f64], v: &[f64]) -> Result<usize> {
    check_len(u, v)?;
    Ok(u.iter().zip(v).filter(|(a, b)| *a * *b > 0.0).count())
}

#[inline]
pub fn sq_norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum()
}

/// Pair loss from precomputed squared norms and sign agreement. The
/// selection kernel uses the same expression so both routes agree bitwise.
#[inline]
pub(crate) fn pair_loss_parts(p: f64, sq_u: f64, sq_v: f64, agree: f64, exponent: Exponent) -> f64 {
    exponent.raise(p - (sq_u + sq_v) / 2.0 + agree)
}

pub fn pair_loss(u: &[f64], v: &[f64], cfg: DiscrepancyConfig) -> Result<f64> {
    let agree = sign_agreement(u, v)?;
    Ok(pair_loss_parts(
        u.len() as f64,
        sq_norm(u),
        sq_norm(v),
        agree as f64,
        cfg.exponent,
    ))
}

/// Sum of pair losses over all unordered pairs, accumulated in row-major
/// pair order `(0,1), (0,2), .., (1,2), ..`.
pub fn total_discrepancy(s: &DataMatrix, cfg: DiscrepancyConfig) -> Result<f64> {
    let all: Vec<usize> = (0..s.nrows()).collect();
    subset_discrepancy(s, &all, cfg)
}

/// Total discrepancy of the rows `indices` of `x`, in the given order.
pub fn subset_discrepancy(x: &DataMatrix, indices: &[usize], cfg: DiscrepancyConfig) -> Result<f64> {
    let k = indices.len();
    if k < 2 {
        return Err(Error::invalid(format!(
            "discrepancy needs at least 2 rows, got {k}"
        )));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= x.nrows()) {
        return Err(Error::invalid(format!(
            "row index {bad} out of range for {} rows",
            x.nrows()
        )));
    }
    let p = x.ncols() as f64;
    let norms: Vec<f64> = indices.iter().map(|&i| sq_norm(x.row(i))).collect();
    let mut total = 0.0;
    for a in 0..k {
        let u = x.row(indices[a]);
        for b in a + 1..k {
            let v = x.row(indices[b]);
            let agree = u.iter().zip(v).filter(|(s, t)| *s * *t > 0.0).count();
            total += pair_loss_parts(p, norms[a], norms[b], agree as f64, cfg.exponent);
        }
    }
    Ok(total)
}

/// Lower bound `(k²p(p+1) - 4kp²) / 8` on the strength-2 discrepancy of any
/// `k × p` design in `[-1, 1]^p`. Negative (vacuous) values are returned as is.
pub fn theorem1_bound(k: usize, p: usize) -> f64 {
    let (k, p) = (k as f64, p as f64);
    (k * k * p * (p + 1.0) - 4.0 * k * p * p) / 8.0
}

/// Strength-2 two-level orthogonal array check: entries within `tol` of ±1,
/// and every ordered sign pair occurring `k/4` times in every column pair.
pub fn is_orthogonal_array(s: &DataMatrix, tol: f64) -> bool {
    let (k, p) = (s.nrows(), s.ncols());
    if k % 4 != 0 {
        return false;
    }
    let mut signs = Vec::with_capacity(k * p);
    for &v in s.values() {
        if (v - 1.0).abs() <= tol {
            signs.push(true);
        } else if (v + 1.0).abs() <= tol {
            signs.push(false);
        } else {
            return false;
        }
    }
    let target = k / 4;
    for a in 0..p {
        for b in a + 1..p {
            let mut counts = [0usize; 4];
            for i in 0..k {
                let idx = usize::from(signs[i * p + a]) * 2 + usize::from(signs[i * p + b]);
                counts[idx] += 1;
            }
            if counts.iter().any(|&c| c != target) {
                return false;
            }
        }
    }
    true
}

/// Default cap on the number of subsets enumerated by the exhaustive search.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Exact minimiser of the total discrepancy over all `k`-subsets, by
/// enumeration in lexicographic order; ties keep the earliest subset.
pub fn brute_force_min_discrepancy(
    x: &DataMatrix,
    k: usize,
    cfg: DiscrepancyConfig,
    cap: u128,
) -> Result<(Vec<usize>, f64)> {
    let n = x.nrows();
    if k < 2 {
        return Err(Error::invalid("exhaustive search needs k >= 2"));
    }
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    let subsets = binomial(n, k);
    if subsets > cap {
        return Err(Error::EnumerationCap { subsets, cap });
    }

    // Pair losses depend only on the two rows, so tabulate them once.
    let mut table = vec![0.0; n * n];
    for a in 0..n {
        for b in a + 1..n {
            let l = pair_loss(x.row(a), x.row(b), cfg)?;
            table[a * n + b] = l;
            table[b * n + a] = l;
        }
    }

    let mut combo: Vec<usize> = (0..k).collect();
    let mut best = combo.clone();
    let mut best_value = f64::INFINITY;
    loop {
        let mut value = 0.0;
        for a in 0..k {
            for b in a + 1..k {
                value += table[combo[a] * n + combo[b]];
            }
        }
        if value < best_value {
            best_value = value;
            best.copy_from_slice(&combo);
        }
        // Advance to the next combination in lexicographic order.
        let mut i = k;
        loop {
            if i == 0 {
                return Ok((best, best_value));
            }
            i -= 1;
            if combo[i] < n - k + i {
                break;
            }
        }
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}
