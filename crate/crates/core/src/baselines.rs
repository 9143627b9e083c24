//! Reference subsamplers: uniform sampling without replacement and
//! information-based optimal subdata selection (per-covariate extremes).

use std::cmp::Ordering;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::DataMatrix;
use crate::error::{Error, Result};

/// `k` distinct indices from `0..n`, uniformly without replacement.
pub fn uniform_select(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, n, k).into_vec())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Low,
    High,
}

/// Takes up to `count` untaken rows from one end of column `j`. Ties in
/// value go to the smaller row index.
fn take_extremes(x: &DataMatrix, j: usize, side: Side, count: usize, taken: &mut [bool], out: &mut Vec<usize>) {
    if count == 0 {
        return;
    }
    let mut pool: Vec<usize> = (0..x.nrows()).filter(|&i| !taken[i]).collect();
    let count = count.min(pool.len());
    if count == 0 {
        return;
    }
    let cmp = |a: &usize, b: &usize| -> Ordering {
        let (va, vb) = (x.get(*a, j), x.get(*b, j));
        let by_value = match side {
            Side::Low => va.total_cmp(&vb),
            Side::High => vb.total_cmp(&va),
        };
        by_value.then_with(|| a.cmp(b))
    };
    if count < pool.len() {
        pool.select_nth_unstable_by(count - 1, cmp);
        pool.truncate(count);
    }
    pool.sort_unstable_by(cmp);
    for &i in &pool {
        taken[i] = true;
    }
    out.extend(pool);
}

/// For each covariate in turn, takes the `r = floor(k / 2p)` smallest and
/// `r` largest values among rows not chosen yet. Any remainder is filled
/// one row at a time, cycling through the covariates and alternating
/// between the low and the high end.
pub fn iboss_select(x: &DataMatrix, k: usize) -> Result<Vec<usize>> {
    let (n, p) = (x.nrows(), x.ncols());
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    let r = k / (2 * p);
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(k);
    for j in 0..p {
        take_extremes(x, j, Side::Low, r, &mut taken, &mut out);
        take_extremes(x, j, Side::High, r, &mut taken, &mut out);
    }
    let mut m = 0usize;
    while out.len() < k {
        let (pass, j) = (m / p, m % p);
        let side = if (pass + j) % 2 == 0 { Side::Low } else { Side::High };
        take_extremes(x, j, side, 1, &mut taken, &mut out);
        m += 1;
    }
    Ok(out)
}
