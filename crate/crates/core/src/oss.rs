//! Sequential orthogonal subsampling.
//!
//! Rows are chosen one at a time. The first row is the one farthest from the
//! centre of `[-1, 1]^p`; afterwards every surviving candidate carries the
//! accumulated pair loss against all rows selected so far, and the candidate
//! with the smallest accumulated loss is elected next. Between elections the
//! candidates with the largest accumulated losses are dropped according to a
//! shrinking budget, which keeps the total work near `n p log k`.
//!
//! Ties are resolved everywhere by (smaller loss, larger squared norm,
//! smaller row index), which makes every run fully deterministic.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::DataMatrix;
use crate::discrepancy::{self, pair_loss_parts, DiscrepancyConfig, Exponent};
use crate::error::{Error, Result};

/// Scaled inputs may exceed `[-1, 1]` by at most this much.
pub const SCALE_TOLERANCE: f64 = 1e-9;

// Election scans over at least this many candidates run on the rayon pool.
const PARALLEL_SCAN_MIN: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Elimination {
    /// Keep `n / i` candidates after election `i` when `n >= k²`, otherwise
    /// `n / i^(r-1)` with `r = ln n / ln k`.
    #[default]
    Schedule,
    /// Never prune; every election scans all remaining rows.
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OssConfig {
    pub k: usize,
    pub exponent: Exponent,
    pub elimination: Elimination,
    /// Number of disjoint batches; 1 runs a single selection.
    pub batches: usize,
    /// Seeds the row shuffle used to form batches. Unused when `batches == 1`.
    pub seed: u64,
}

impl OssConfig {
    pub fn new(k: usize) -> Self {
        OssConfig {
            k,
            exponent: Exponent::Two,
            elimination: Elimination::Schedule,
            batches: 1,
            seed: 0,
        }
    }

    pub fn with_exponent(mut self, exponent: Exponent) -> Self {
        self.exponent = exponent;
        self
    }

    pub fn with_elimination(mut self, elimination: Elimination) -> Self {
        self.elimination = elimination;
        self
    }

    pub fn with_batches(mut self, batches: usize, seed: u64) -> Self {
        self.batches = batches;
        self.seed = seed;
        self
    }

    fn discrepancy_config(&self) -> DiscrepancyConfig {
        DiscrepancyConfig {
            exponent: self.exponent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleResult {
    /// Selected rows of the input, in selection order (batch by batch).
    pub indices: Vec<usize>,
    /// Total discrepancy of the selected rows; 0 when fewer than two rows.
    pub discrepancy: f64,
    /// Accumulated loss of each row at the moment it was elected.
    pub per_step_losses: Vec<f64>,
    /// Candidate rows touched: the initial norm scan plus every election scan.
    pub candidate_visits: u64,
    /// Rows contributed by each batch.
    pub batch_sizes: Vec<usize>,
}

/// Size of the candidate set kept after election `i` (`i >= 2`).
///
/// The schedule value is floored and never drops below `k - i`, the number
/// of rows still to be chosen.
pub fn elimination_budget(n: usize, k: usize, i: usize) -> usize {
    let floor_k = k.saturating_sub(i);
    if i == 0 || k == 0 {
        return n.max(floor_k);
    }
    let nf = n as f64;
    let i_f = i as f64;
    let raw = if (n as u128) >= (k as u128) * (k as u128) {
        nf / i_f
    } else {
        let r = nf.ln() / (k as f64).ln();
        nf / i_f.powf(r - 1.0)
    };
    // Floating-point noise must not push an exact integer below itself.
    let nearest = raw.round();
    let value = if (raw - nearest).abs() <= 1e-9 * raw.max(1.0) {
        nearest
    } else {
        raw.floor()
    };
    (value.max(0.0) as usize).max(floor_k)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    row: usize,
    loss: f64,
}

/// Read-only per-row data used by the election scan: sign bit masks and
/// squared norms.
struct RowData {
    p: f64,
    words: usize,
    pos: Vec<u64>,
    neg: Vec<u64>,
    sq_norms: Vec<f64>,
    exponent: Exponent,
}

impl RowData {
    fn new(data: &DataMatrix, exponent: Exponent) -> Self {
        let (n, p) = (data.nrows(), data.ncols());
        let words = p.div_ceil(64);
        let mut pos = vec![0u64; n * words];
        let mut neg = vec![0u64; n * words];
        let mut sq_norms = Vec::with_capacity(n);
        for (i, row) in data.rows_iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let bit = 1u64 << (j % 64);
                if v > 0.0 {
                    pos[i * words + j / 64] |= bit;
                } else if v < 0.0 {
                    neg[i * words + j / 64] |= bit;
                }
            }
            sq_norms.push(discrepancy::sq_norm(row));
        }
        RowData {
            p: p as f64,
            words,
            pos,
            neg,
            sq_norms,
            exponent,
        }
    }

    #[inline]
    fn agreement(&self, a: usize, b: usize) -> u32 {
        let w = self.words;
        let (pa, pb) = (&self.pos[a * w..(a + 1) * w], &self.pos[b * w..(b + 1) * w]);
        let (na, nb) = (&self.neg[a * w..(a + 1) * w], &self.neg[b * w..(b + 1) * w]);
        let mut count = 0;
        for j in 0..w {
            count += (pa[j] & pb[j]).count_ones() + (na[j] & nb[j]).count_ones();
        }
        count
    }

    #[inline]
    fn pair_loss(&self, a: usize, b: usize) -> f64 {
        pair_loss_parts(
            self.p,
            self.sq_norms[a],
            self.sq_norms[b],
            f64::from(self.agreement(a, b)),
            self.exponent,
        )
    }

    /// Total order on candidates: smaller loss, then larger norm, then
    /// smaller row index.
    #[inline]
    fn order(&self, a: &Candidate, b: &Candidate) -> Ordering {
        a.loss
            .total_cmp(&b.loss)
            .then_with(|| self.sq_norms[b.row].total_cmp(&self.sq_norms[a.row]))
            .then_with(|| a.row.cmp(&b.row))
    }
}

/// Mutable selection state over a scaled data matrix.
pub struct CandidatePool<'a> {
    data: &'a DataMatrix,
    rows: RowData,
    active: Vec<Candidate>,
    selected: Vec<usize>,
    step_losses: Vec<f64>,
    visits: u64,
}

impl<'a> CandidatePool<'a> {
    /// Every row starts active with zero accumulated loss.
    pub fn new(data: &'a DataMatrix, exponent: Exponent) -> Self {
        CandidatePool {
            data,
            rows: RowData::new(data, exponent),
            active: (0..data.nrows()).map(|row| Candidate { row, loss: 0.0 }).collect(),
            selected: Vec::new(),
            step_losses: Vec::new(),
            visits: 0,
        }
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn active_len(&self) -> usize {
        self.active.len()
    }

    /// Active rows in ascending row order.
    pub fn active_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.active.iter().map(|c| c.row).collect();
        rows.sort_unstable();
        rows
    }

    /// Accumulated loss of an active row.
    pub fn loss_of(&self, row: usize) -> Option<f64> {
        self.active.iter().find(|c| c.row == row).map(|c| c.loss)
    }

    pub fn sq_norm(&self, row: usize) -> f64 {
        self.rows.sq_norms[row]
    }

    pub fn candidate_visits(&self) -> u64 {
        self.visits
    }

    /// Picks the row with the largest norm. Must be the first selection.
    pub fn select_initial(&mut self) -> Result<usize> {
        if !self.selected.is_empty() {
            return Err(Error::invalid("initial row already selected"));
        }
        let norms = &self.rows.sq_norms;
        let best = self
            .active
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                norms[a.row]
                    .total_cmp(&norms[b.row])
                    .then_with(|| b.row.cmp(&a.row))
            })
            .map(|(pos, _)| pos)
            .ok_or_else(|| Error::invalid("empty candidate pool"))?;
        self.visits += self.active.len() as u64;
        let chosen = self.active.swap_remove(best);
        for c in self.active.iter_mut() {
            c.loss = 0.0;
        }
        self.selected.push(chosen.row);
        self.step_losses.push(0.0);
        Ok(chosen.row)
    }

    /// Adds each candidate's pair loss against `last` to its accumulated
    /// loss, then elects the candidate with the smallest total.
    pub fn election_step(&mut self, last: usize) -> Result<usize> {
        if self.selected.last() != Some(&last) {
            return Err(Error::invalid(format!(
                "row {last} is not the most recent selection"
            )));
        }
        if self.active.is_empty() {
            return Err(Error::invalid("no candidates left to elect"));
        }
        self.visits += self.active.len() as u64;
        let kernel = &self.rows;
        let update = |c: &mut Candidate| c.loss += kernel.pair_loss(c.row, last);
        let pick = |a: (usize, Candidate), b: (usize, Candidate)| {
            if kernel.order(&a.1, &b.1) == Ordering::Greater {
                b
            } else {
                a
            }
        };
        let best = if self.active.len() >= PARALLEL_SCAN_MIN {
            self.active
                .par_iter_mut()
                .enumerate()
                .map(|(pos, c)| {
                    update(c);
                    (pos, *c)
                })
                .reduce_with(pick)
        } else {
            self.active
                .iter_mut()
                .enumerate()
                .map(|(pos, c)| {
                    update(c);
                    (pos, *c)
                })
                .reduce(pick)
        };
        let (pos, winner) = best.expect("active set is non-empty");
        self.active.swap_remove(pos);
        self.selected.push(winner.row);
        self.step_losses.push(winner.loss);
        Ok(winner.row)
    }

    /// Keeps the `t` candidates that come first in the tie-break order.
    pub fn eliminate(&mut self, t: usize) {
        if self.active.len() <= t {
            return;
        }
        let kernel = &self.rows;
        if t > 0 {
            self.active.select_nth_unstable_by(t, |a, b| kernel.order(a, b));
        }
        self.active.truncate(t);
    }

    fn finish(self, cfg: &OssConfig) -> Result<SubsampleResult> {
        let discrepancy = if self.selected.len() >= 2 {
            discrepancy::subset_discrepancy(self.data, &self.selected, cfg.discrepancy_config())?
        } else {
            0.0
        };
        Ok(SubsampleResult {
            batch_sizes: vec![self.selected.len()],
            indices: self.selected,
            discrepancy,
            per_step_losses: self.step_losses,
            candidate_visits: self.visits,
        })
    }
}

fn check_scaled(x: &DataMatrix) -> Result<()> {
    let p = x.ncols();
    match x.values().iter().position(|v| v.abs() > 1.0 + SCALE_TOLERANCE) {
        Some(pos) => Err(Error::Unscaled {
            row: pos / p,
            column: pos % p,
            value: x.values()[pos],
        }),
        None => Ok(()),
    }
}

/// Selects `cfg.k` rows of a matrix already scaled to `[-1, 1]^p`.
/// Batching in `cfg` is ignored here; see [`oss_select_batched`].
pub fn oss_select(x: &DataMatrix, cfg: &OssConfig) -> Result<SubsampleResult> {
    let (n, k) = (x.nrows(), cfg.k);
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    check_scaled(x)?;

    let mut pool = CandidatePool::new(x, cfg.exponent);
    let mut last = pool.select_initial()?;
    for i in 2..=k {
        last = pool.election_step(last)?;
        if i < k && cfg.elimination == Elimination::Schedule {
            pool.eliminate(elimination_budget(n, k, i));
        }
    }
    pool.finish(cfg)
}

/// Splits the rows into `cfg.batches` disjoint groups after a seeded
/// shuffle and runs [`oss_select`] on each; when the batch count does not
/// divide `k`, the first `k mod g` batches contribute one extra row.
pub fn oss_select_batched(x: &DataMatrix, cfg: &OssConfig) -> Result<SubsampleResult> {
    let (n, k, g) = (x.nrows(), cfg.k, cfg.batches);
    if g == 0 {
        return Err(Error::invalid("batch count must be at least 1"));
    }
    if g > k {
        return Err(Error::invalid(format!(
            "batch count {g} exceeds subsample size {k}"
        )));
    }
    if g == 1 {
        return oss_select(x, cfg);
    }
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    check_scaled(x)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut groups = Vec::with_capacity(g);
    let mut start = 0;
    for b in 0..g {
        let len = n / g + usize::from(b < n % g);
        let quota = k / g + usize::from(b < k % g);
        groups.push((&order[start..start + len], quota));
        start += len;
    }

    let parts: Vec<SubsampleResult> = groups
        .into_par_iter()
        .map(|(rows, quota)| {
            let sub = x.select_rows(rows)?;
            let mut sub_cfg = cfg.clone();
            sub_cfg.k = quota;
            sub_cfg.batches = 1;
            let mut res = oss_select(&sub, &sub_cfg)?;
            for idx in res.indices.iter_mut() {
                *idx = rows[*idx];
            }
            Ok(res)
        })
        .collect::<Result<_>>()?;

    let mut indices = Vec::with_capacity(k);
    let mut per_step_losses = Vec::with_capacity(k);
    let mut batch_sizes = Vec::with_capacity(g);
    let mut candidate_visits = 0;
    for part in parts {
        batch_sizes.push(part.indices.len());
        candidate_visits += part.candidate_visits;
        indices.extend(part.indices);
        per_step_losses.extend(part.per_step_losses);
    }
    let discrepancy = if indices.len() >= 2 {
        discrepancy::subset_discrepancy(x, &indices, cfg.discrepancy_config())?
    } else {
        0.0
    };
    Ok(SubsampleResult {
        indices,
        discrepancy,
        per_step_losses,
        candidate_visits,
        batch_sizes,
    })
}
