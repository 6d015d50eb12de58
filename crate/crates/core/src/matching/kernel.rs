//! Blocked cosine-similarity kernel.
//!
//! Targets are processed in blocks of [`BLOCK`] patches packed channel-major,
//! so one reference channel value updates `BLOCK` independent accumulators.
//! Each accumulator still sums its products in ascending channel order, which
//! makes every score bit-identical to [`super::cosine_unchecked`] and
//! independent of how blocks are scheduled across threads.

use rayon::prelude::*;

use crate::tensor::{l2_norm, FeatureGrid};

pub const BLOCK: usize = 8;

/// A contiguous set of patch vectors with their precomputed norms.
pub struct PatchSet<'a> {
    pub channels: usize,
    pub values: std::borrow::Cow<'a, [f64]>,
    pub norms: Vec<f64>,
}

impl<'a> PatchSet<'a> {
    pub fn from_grid(grid: &'a FeatureGrid) -> Self {
        PatchSet {
            channels: grid.channels(),
            values: std::borrow::Cow::Borrowed(grid.values()),
            norms: grid.patches().map(l2_norm).collect(),
        }
    }

    /// Gathers the listed patches into a new contiguous set.
    pub fn gather(grid: &FeatureGrid, indices: &[usize]) -> PatchSet<'static> {
        let mut values = Vec::with_capacity(indices.len() * grid.channels());
        for &i in indices {
            values.extend_from_slice(grid.patch(i));
        }
        PatchSet {
            channels: grid.channels(),
            values: std::borrow::Cow::Owned(values),
            norms: indices.iter().map(|&i| l2_norm(grid.patch(i))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    fn patch(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.channels..(idx + 1) * self.channels]
    }
}

#[inline]
fn finish(dot: f64, denom: f64) -> f64 {
    if denom == 0.0 {
        0.0
    } else {
        (dot / denom).clamp(-1.0, 1.0)
    }
}

/// Scores targets `[start, start + count)` against every reference patch,
/// writing `count × refs.len()` values row-major into `out`.
pub fn score_block(
    targets: &PatchSet<'_>,
    start: usize,
    count: usize,
    refs: &PatchSet<'_>,
    out: &mut [f64],
) {
    debug_assert!(count <= BLOCK);
    debug_assert_eq!(targets.channels, refs.channels);
    let channels = targets.channels;
    let n_refs = refs.len();

    // channel-major packing: packed[c * BLOCK + k] = target k, channel c
    let mut packed = vec![0.0; channels * BLOCK];
    for k in 0..count {
        let t = targets.patch(start + k);
        for c in 0..channels {
            packed[c * BLOCK + k] = t[c];
        }
    }

    for r in 0..n_refs {
        let rv = refs.patch(r);
        let mut acc = [0.0f64; BLOCK];
        for c in 0..channels {
            let x = rv[c];
            let lane = &packed[c * BLOCK..(c + 1) * BLOCK];
            for k in 0..BLOCK {
                acc[k] += lane[k] * x;
            }
        }
        for k in 0..count {
            out[k * n_refs + r] = finish(acc[k], targets.norms[start + k] * refs.norms[r]);
        }
    }
}

/// Calls `visit(target_index, scores_against_all_refs)` for every target,
/// in parallel over blocks. The visitor's results are collected in target
/// order.
pub fn map_rows<T, F>(targets: &PatchSet<'_>, refs: &PatchSet<'_>, visit: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &[f64]) -> T + Sync,
{
    let n_targets = targets.len();
    let n_refs = refs.len();
    let blocks = n_targets.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let start = b * BLOCK;
            let count = BLOCK.min(n_targets - start);
            let mut buf = vec![0.0; count * n_refs];
            score_block(targets, start, count, refs, &mut buf);
            (0..count)
                .map(|k| visit(start + k, &buf[k * n_refs..(k + 1) * n_refs]))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Full `targets × refs` cosine matrix, row-major.
pub fn similarity_matrix(targets: &FeatureGrid, refs: &FeatureGrid) -> Vec<f64> {
    let t = PatchSet::from_grid(targets);
    let r = PatchSet::from_grid(refs);
    let n_refs = r.len();
    let mut out = vec![0.0; t.len() * n_refs];
    out.par_chunks_mut(BLOCK * n_refs.max(1))
        .enumerate()
        .for_each(|(b, chunk)| {
            let start = b * BLOCK;
            let count = chunk.len() / n_refs.max(1);
            score_block(&t, start, count, &r, chunk);
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::cosine_unchecked;

    #[test]
    fn matrix_is_bit_identical_to_pairwise_cosine() {
        let mut state = 0x9e37_79b9_u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 2001) as f64 / 1000.0 - 1.0
        };
        let a = FeatureGrid::new(3, 5, 7, (0..105).map(|_| next()).collect()).unwrap();
        let b = FeatureGrid::new(2, 3, 7, (0..42).map(|_| next()).collect()).unwrap();
        let m = similarity_matrix(&a, &b);
        for t in 0..a.len() {
            for r in 0..b.len() {
                let s = cosine_unchecked(a.patch(t), b.patch(r));
                assert_eq!(m[t * b.len() + r].to_bits(), s.to_bits());
            }
        }
    }
}
