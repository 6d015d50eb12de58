#![allow(dead_code)]

use nubblematch_core::{BinaryMask, FeatureGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureGrid {
    let values = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureGrid::new(h, w, c, values).unwrap()
}

/// Random mask with at least one set and one clear bit; needs two patches.
pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> BinaryMask {
    let n = h * w;
    let mut bits: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    let on = rng.random_range(0..n);
    let off = (on + rng.random_range(1..n)) % n;
    bits[on] = true;
    bits[off] = false;
    BinaryMask::new(h, w, bits).unwrap()
}

/// Cosine over the channels where `keep` is true, written out longhand.
pub fn naive_cosine(u: &[f64], v: &[f64], keep: Option<&[bool]>) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for c in 0..u.len() {
        if keep.is_some_and(|k| !k[c]) {
            continue;
        }
        dot += u[c] * v[c];
        nu += u[c] * u[c];
        nv += v[c] * v[c];
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0)
}

/// Triple-loop best match: `(ref index, score)` per target patch.
pub fn naive_best_match(
    tgt: &FeatureGrid,
    reference: &FeatureGrid,
    keep: Option<&[bool]>,
    exclude_self: bool,
) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for t in 0..tgt.len() {
        let mut best_idx = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for r in 0..reference.len() {
            if exclude_self && r == t {
                continue;
            }
            let s = naive_cosine(tgt.patch(t), reference.patch(r), keep);
            if s > best {
                best = s;
                best_idx = r;
            }
        }
        out.push((best_idx, best));
    }
    out
}

/// Aggregated foreground similarity, written out longhand.
pub fn naive_fg_map(
    reference: &FeatureGrid,
    fg: &BinaryMask,
    tgt: &FeatureGrid,
    mean: bool,
) -> Vec<f64> {
    (0..tgt.len())
        .map(|t| {
            let scores: Vec<f64> = (0..reference.len())
                .filter(|&r| fg.get(r))
                .map(|r| naive_cosine(tgt.patch(t), reference.patch(r), None))
                .collect();
            if mean {
                scores.iter().sum::<f64>() / scores.len() as f64
            } else {
                scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect()
}
