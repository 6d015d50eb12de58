//! Channel-drop transformations.
//!
//! The random drop zeroes one shared, seeded subset of channel indices in
//! both the reference and the target grid before they are compared. Two
//! deterministic alternatives are also provided: per-patch trimming of the
//! largest-magnitude channels, and a greedy search for the channels whose
//! removal most reduces foreground mismatches.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::cosine_unchecked;
use crate::tensor::{BinaryMask, FeatureGrid};

/// Largest grid (in patches) accepted by [`greedy_channel_prune`].
pub const PRUNE_MAX_PATCHES: usize = 4096;

/// A set of channel indices to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropMask {
    /// Total channel count.
    pub n: usize,
    /// Requested drop fraction, or the realized fraction for deterministic masks.
    pub ratio: f64,
    /// Seed the mask was sampled with; `None` for deterministic masks.
    pub seed: Option<u64>,
    /// Sorted, unique channel indices.
    pub dropped: Vec<usize>,
}

impl DropMask {
    /// The mask that drops nothing.
    pub fn empty(n: usize) -> Self {
        DropMask {
            n,
            ratio: 0.0,
            seed: None,
            dropped: Vec::new(),
        }
    }

    /// Builds a deterministic mask from arbitrary indices.
    pub fn from_indices(n: usize, mut dropped: Vec<usize>) -> Result<Self> {
        dropped.sort_unstable();
        dropped.dedup();
        let mask = DropMask {
            n,
            ratio: if n == 0 { 0.0 } else { dropped.len() as f64 / n as f64 },
            seed: None,
            dropped,
        };
        mask.validate()?;
        Ok(mask)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Validation("drop mask over zero channels".into()));
        }
        if !(0.0..1.0).contains(&self.ratio) {
            return Err(Error::Validation(format!(
                "drop mask ratio {} outside [0, 1)",
                self.ratio
            )));
        }
        if self.dropped.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "dropped indices must be sorted and unique".into(),
            ));
        }
        if let Some(&last) = self.dropped.last() {
            if last >= self.n {
                return Err(Error::Validation(format!(
                    "dropped channel {last} out of range for {} channels",
                    self.n
                )));
            }
        }
        if self.dropped.len() >= self.n {
            return Err(Error::Validation("a mask may not drop every channel".into()));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.dropped.is_empty()
    }

    pub fn contains(&self, channel: usize) -> bool {
        self.dropped.binary_search(&channel).is_ok()
    }

    /// Per-channel keep flags.
    pub fn keep_flags(&self) -> Vec<bool> {
        let mut keep = vec![true; self.n];
        for &c in &self.dropped {
            keep[c] = false;
        }
        keep
    }
}

/// Number of channels dropped at `ratio` of `n`, rounding half to even.
pub fn drop_count(n: usize, ratio: f64) -> usize {
    (ratio * n as f64).round_ties_even() as usize
}

/// Uniform integer in `[0, range)` by rejection, so the stream consumed is
/// fixed by the generator alone.
fn bounded(rng: &mut impl RngCore, range: u64) -> u64 {
    let threshold = range.wrapping_neg() % range;
    loop {
        let x = rng.next_u64();
        if x >= threshold {
            return x % range;
        }
    }
}

/// Samples `round(ratio · n)` distinct channels uniformly without
/// replacement.
///
/// The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`, and
/// indices come from a partial Fisher-Yates shuffle driven by rejection
/// sampling on raw 64-bit outputs. The result depends only on
/// `(n, ratio, seed)`.
pub fn sample_drop_mask(n: usize, ratio: f64, seed: u64) -> Result<DropMask> {
    if n == 0 {
        return Err(Error::Argument("channel count must be positive".into()));
    }
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Argument(format!(
            "drop ratio {ratio} outside [0, 1)"
        )));
    }
    let count = drop_count(n, ratio);
    if count >= n {
        return Err(Error::Argument(format!(
            "ratio {ratio} of {n} channels would drop all of them"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = i + bounded(&mut rng, (n - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut dropped = pool[..count].to_vec();
    dropped.sort_unstable();
    Ok(DropMask {
        n,
        ratio,
        seed: Some(seed),
        dropped,
    })
}

/// Zeroes the masked channels in every patch.
pub fn apply_drop(grid: &FeatureGrid, mask: &DropMask) -> Result<FeatureGrid> {
    if mask.n != grid.channels() {
        return Err(Error::Dimension(format!(
            "mask covers {} channels, grid has {}",
            mask.n,
            grid.channels()
        )));
    }
    if mask.is_empty() {
        return Ok(grid.clone());
    }
    let mut values = grid.values().to_vec();
    values
        .par_chunks_exact_mut(grid.channels())
        .for_each(|patch| {
            for &c in &mask.dropped {
                patch[c] = 0.0;
            }
        });
    Ok(grid.with_values(values, false))
}

/// Zeroes, in each patch independently, the `per_patch` channels with the
/// largest absolute value. Ties go to the lower channel index.
pub fn trim_extremes(grid: &FeatureGrid, per_patch: usize) -> Result<FeatureGrid> {
    if per_patch >= grid.channels() {
        return Err(Error::Argument(format!(
            "cannot trim {per_patch} of {} channels",
            grid.channels()
        )));
    }
    if per_patch == 0 {
        return Ok(grid.clone());
    }
    let mut values = grid.values().to_vec();
    values
        .par_chunks_exact_mut(grid.channels())
        .for_each(|patch| {
            let mut order: Vec<usize> = (0..patch.len()).collect();
            // stable sort keeps ascending index within equal magnitudes
            order.sort_by(|&a, &b| patch[b].abs().total_cmp(&patch[a].abs()));
            for &c in &order[..per_patch] {
                patch[c] = 0.0;
            }
        });
    Ok(grid.with_values(values, false))
}

/// Outcome of [`greedy_channel_prune`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneResult {
    pub mask: DropMask,
    /// `(channels dropped so far, foreground mismatch count)`, starting with
    /// the baseline `(0, count)`.
    pub error_history: Vec<(usize, usize)>,
}

/// Greedy forward selection of channels to drop from a reference grid.
///
/// Each foreground patch competes against every other foreground patch and
/// its `k_bg` most similar background patches (fixed at full channels). At
/// every step the channel whose additional removal gives the fewest
/// foreground patches matched to background is dropped, lowest index on
/// ties. Cost is about `budget · C · F · (F + k_bg) · C` for `F` foreground
/// patches.
pub fn greedy_channel_prune(
    reference: &FeatureGrid,
    fg: &BinaryMask,
    budget: usize,
    k_bg: usize,
) -> Result<PruneResult> {
    fg.check_matches(reference)?;
    if reference.len() > PRUNE_MAX_PATCHES {
        return Err(Error::Bound(format!(
            "greedy prune accepts at most {PRUNE_MAX_PATCHES} patches, grid has {}",
            reference.len()
        )));
    }
    let channels = reference.channels();
    if budget >= channels {
        return Err(Error::Argument(format!(
            "budget {budget} must be below the channel count {channels}"
        )));
    }
    if k_bg == 0 {
        return Err(Error::Argument("k_bg must be at least 1".into()));
    }
    if fg.count_ones() == 0 {
        return Err(Error::Argument("foreground mask is empty".into()));
    }

    let candidates = prune_candidates(reference, fg, k_bg);
    let mut keep = vec![true; channels];
    let mut dropped = Vec::with_capacity(budget);
    let mut history = vec![(0, fg_mismatch_count(reference, fg, &candidates, &keep))];

    for step in 1..=budget {
        let scored: Vec<(usize, usize)> = (0..channels)
            .into_par_iter()
            .filter(|&c| keep[c])
            .map(|c| {
                let mut trial = keep.clone();
                trial[c] = false;
                (fg_mismatch_count(reference, fg, &candidates, &trial), c)
            })
            .collect();
        let &(count, channel) = scored
            .iter()
            .min()
            .expect("budget < channels leaves a candidate");
        keep[channel] = false;
        dropped.push(channel);
        history.push((step, count));
    }

    Ok(PruneResult {
        mask: DropMask::from_indices(channels, dropped)?,
        error_history: history,
    })
}

/// For each foreground patch, the ascending list of patch indices it is
/// compared against.
fn prune_candidates(grid: &FeatureGrid, fg: &BinaryMask, k_bg: usize) -> Vec<(usize, Vec<usize>)> {
    let fg_idx: Vec<usize> = fg.ones().collect();
    let bg_idx: Vec<usize> = (0..grid.len()).filter(|&i| !fg.get(i)).collect();
    fg_idx
        .par_iter()
        .map(|&p| {
            let mut bg: Vec<(f64, usize)> = bg_idx
                .iter()
                .map(|&q| (cosine_unchecked(grid.patch(p), grid.patch(q)), q))
                .collect();
            bg.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut set: Vec<usize> = fg_idx.iter().copied().filter(|&q| q != p).collect();
            set.extend(bg.iter().take(k_bg).map(|&(_, q)| q));
            set.sort_unstable();
            (p, set)
        })
        .collect()
}

fn fg_mismatch_count(
    grid: &FeatureGrid,
    fg: &BinaryMask,
    candidates: &[(usize, Vec<usize>)],
    keep: &[bool],
) -> usize {
    candidates
        .iter()
        .filter(|(p, set)| {
            let u = grid.patch(*p);
            let mut best: Option<(f64, usize)> = None;
            for &q in set {
                let s = masked_cosine(u, grid.patch(q), keep);
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, q));
                }
            }
            best.is_some_and(|(_, q)| !fg.get(q))
        })
        .count()
}

/// Cosine similarity over the kept channels only.
pub(crate) fn masked_cosine(u: &[f64], v: &[f64], keep: &[bool]) -> f64 {
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for c in 0..u.len() {
        if keep[c] {
            dot += u[c] * v[c];
            uu += u[c] * u[c];
            vv += v[c] * v[c];
        }
    }
    let denom = uu.sqrt() * vv.sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (dot / denom).clamp(-1.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize, c: usize, v: &[f64]) -> FeatureGrid {
        FeatureGrid::new(h, w, c, v.to_vec()).unwrap()
    }

    #[test]
    fn count_forced_by_rounding() {
        for seed in 0..20 {
            assert_eq!(sample_drop_mask(10, 0.2, seed).unwrap().dropped.len(), 2);
        }
        assert!(sample_drop_mask(8, 0.0, 1).unwrap().dropped.is_empty());
    }

    #[test]
    fn rounding_is_half_to_even() {
        assert_eq!(drop_count(10, 0.25), 2);
        assert_eq!(drop_count(10, 0.35), 4);
        assert_eq!(drop_count(2, 0.25), 0);
        assert_eq!(drop_count(6, 0.25), 2);
    }

    #[test]
    fn sample_rejects_bad_ratio() {
        assert!(matches!(sample_drop_mask(10, 1.0, 0), Err(Error::Argument(_))));
        assert!(matches!(sample_drop_mask(10, -0.1, 0), Err(Error::Argument(_))));
        assert!(matches!(sample_drop_mask(10, 0.96, 0), Err(Error::Argument(_))));
        assert!(matches!(sample_drop_mask(0, 0.1, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn sampled_mask_is_valid() {
        let m = sample_drop_mask(1024, 0.1, 42).unwrap();
        m.validate().unwrap();
        assert_eq!(m.dropped.len(), 102);
        assert_eq!(m, sample_drop_mask(1024, 0.1, 42).unwrap());
    }

    #[test]
    fn frozen_sample() {
        // pins the generator and the shuffle against silent changes
        let m = sample_drop_mask(16, 0.25, 7).unwrap();
        assert_eq!(m.dropped, FROZEN_N16_R025_S7);
    }

    const FROZEN_N16_R025_S7: [usize; 4] = [9, 11, 13, 15];

    #[test]
    fn apply_zeroes_channels() {
        let g = grid(1, 1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let m = DropMask::from_indices(4, vec![3, 0]).unwrap();
        assert_eq!(apply_drop(&g, &m).unwrap().values(), &[0.0, 2.0, 3.0, 0.0]);
        assert_eq!(apply_drop(&g, &DropMask::empty(4)).unwrap(), g);
        assert!(matches!(
            apply_drop(&g, &DropMask::empty(3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn apply_clears_normalized_flag() {
        let g = crate::tensor::normalize_grid(&grid(1, 1, 2, &[3.0, 4.0]));
        let m = DropMask::from_indices(2, vec![0]).unwrap();
        assert!(!apply_drop(&g, &m).unwrap().is_normalized());
    }

    #[test]
    fn trim_examples() {
        let g = grid(1, 1, 3, &[0.9, 0.1, 0.3]);
        assert_eq!(trim_extremes(&g, 1).unwrap().values(), &[0.0, 0.1, 0.3]);
        assert_eq!(trim_extremes(&g, 0).unwrap(), g);
        let tie = grid(1, 1, 3, &[0.5, -0.5, 0.2]);
        assert_eq!(trim_extremes(&tie, 1).unwrap().values(), &[0.0, -0.5, 0.2]);
        assert!(matches!(trim_extremes(&g, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn from_indices_rejects_dropping_everything() {
        assert!(DropMask::from_indices(2, vec![0, 1]).is_err());
        assert!(DropMask::from_indices(2, vec![2]).is_err());
    }

    #[test]
    fn prune_degenerate_twin() {
        // A (fg) and B (bg) are identical, C is orthogonal background
        let g = grid(1, 3, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let fg = BinaryMask::new(1, 3, vec![true, false, false]).unwrap();
        let r = greedy_channel_prune(&g, &fg, 2, 2).unwrap();
        assert_eq!(r.error_history, vec![(0, 1), (1, 1), (2, 1)]);
        assert_eq!(r.mask.dropped.len(), 2);
    }

    #[test]
    fn prune_argument_errors() {
        let g = grid(1, 2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let fg = BinaryMask::new(1, 2, vec![true, false]).unwrap();
        assert!(matches!(greedy_channel_prune(&g, &fg, 2, 1), Err(Error::Argument(_))));
        assert!(matches!(greedy_channel_prune(&g, &fg, 1, 0), Err(Error::Argument(_))));
        let big = FeatureGrid::new(65, 64, 1, vec![1.0; 65 * 64]).unwrap();
        let big_fg = BinaryMask::filled(65, 64, true).unwrap();
        assert!(matches!(
            greedy_channel_prune(&big, &big_fg, 0, 1),
            Err(Error::Bound(_))
        ));
    }

    #[test]
    fn masked_cosine_skips_channels() {
        let keep = [true, false, true];
        let s = masked_cosine(&[3.0, 100.0, 4.0], &[4.0, -7.0, 3.0], &keep);
        assert!((s - 0.96).abs() < 1e-15);
    }
}
