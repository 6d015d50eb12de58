//! Channel-wise cosine matching between patch grids.
//!
//! Segmentation here is a threshold on the foreground similarity map; it is
//! a stand-in for a promptable segmentation model, not a replacement.

pub mod kernel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nubble::{apply_drop, DropMask};
use crate::tensor::{l2_norm, BinaryMask, FeatureGrid};
use kernel::PatchSet;

/// Cosine similarity `u·v / (‖u‖‖v‖)`, 0 if either vector is zero, clamped
/// to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "vectors have {} and {} channels",
            u.len(),
            v.len()
        )));
    }
    Ok(cosine_unchecked(u, v))
}

/// [`cosine_similarity`] for equal-length inputs. The dot product and both
/// norms accumulate in ascending channel order.
pub(crate) fn cosine_unchecked(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
    }
    let denom = l2_norm(u) * l2_norm(v);
    if denom == 0.0 {
        0.0
    } else {
        (dot / denom).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Max,
    Mean,
}

impl std::str::FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregator::Max),
            "mean" => Ok(Aggregator::Mean),
            other => Err(Error::Argument(format!("unknown aggregator '{other}'"))),
        }
    }
}

/// Per-target-patch scores on the target grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMap {
    pub height: usize,
    pub width: usize,
    pub scores: Vec<f64>,
}

impl SimilarityMap {
    pub fn new(height: usize, width: usize, scores: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || scores.len() != height * width {
            return Err(Error::Validation(format!(
                "similarity map {height}x{width} with {} scores",
                scores.len()
            )));
        }
        if let Some(i) = scores
            .iter()
            .position(|s| !s.is_finite() || !(-1.0..=1.0).contains(s))
        {
            return Err(Error::Validation(format!(
                "score {} at flat index {i} outside [-1, 1]",
                scores[i]
            )));
        }
        Ok(SimilarityMap {
            height,
            width,
            scores,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.width + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestMatch {
    pub row: usize,
    pub col: usize,
    pub score: f64,
}

/// For each target patch (row-major), its best reference patch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestMatchMap {
    pub height: usize,
    pub width: usize,
    pub matches: Vec<BestMatch>,
}

impl BestMatchMap {
    /// Linear reference index of target patch `t`'s match.
    pub fn linear(&self, t: usize, ref_width: usize) -> usize {
        let m = self.matches[t];
        m.row * ref_width + m.col
    }
}

fn dropped_pair(
    tgt: &FeatureGrid,
    reference: &FeatureGrid,
    drop: Option<&DropMask>,
) -> Result<(FeatureGrid, FeatureGrid)> {
    if tgt.channels() != reference.channels() {
        return Err(Error::Dimension(format!(
            "target has {} channels, reference has {}",
            tgt.channels(),
            reference.channels()
        )));
    }
    match drop {
        Some(mask) => Ok((apply_drop(tgt, mask)?, apply_drop(reference, mask)?)),
        None => Ok((tgt.clone(), reference.clone())),
    }
}

/// Index of the first maximum, skipping `skip`.
fn argmax(scores: &[f64], skip: Option<usize>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best
}

/// Best reference patch for every target patch, optionally after dropping
/// channels from both grids. Ties go to the lowest reference index. With
/// `exclude_self` the two grids must be the same and no patch matches itself.
pub fn best_match_map(
    tgt: &FeatureGrid,
    reference: &FeatureGrid,
    drop: Option<&DropMask>,
    exclude_self: bool,
) -> Result<BestMatchMap> {
    if exclude_self {
        if tgt.values() != reference.values() || !tgt.same_shape(reference) {
            return Err(Error::Argument(
                "exclude_self requires target and reference to be the same grid".into(),
            ));
        }
        if tgt.len() < 2 {
            return Err(Error::Argument(
                "exclude_self needs at least two patches".into(),
            ));
        }
    }
    let (t, r) = dropped_pair(tgt, reference, drop)?;
    let tset = PatchSet::from_grid(&t);
    let rset = PatchSet::from_grid(&r);
    let ref_width = r.width();
    let matches = kernel::map_rows(&tset, &rset, |ti, scores| {
        let (idx, score) =
            argmax(scores, exclude_self.then_some(ti)).expect("at least one candidate");
        BestMatch {
            row: idx / ref_width,
            col: idx % ref_width,
            score,
        }
    });
    Ok(BestMatchMap {
        height: t.height(),
        width: t.width(),
        matches,
    })
}

/// Scores each target patch by aggregating its cosine similarity to every
/// foreground reference patch.
pub fn foreground_similarity_map(
    reference: &FeatureGrid,
    fg: &BinaryMask,
    tgt: &FeatureGrid,
    aggregator: Aggregator,
    drop: Option<&DropMask>,
) -> Result<SimilarityMap> {
    fg.check_matches(reference)?;
    let fg_idx: Vec<usize> = fg.ones().collect();
    if fg_idx.is_empty() {
        return Err(Error::Argument("foreground mask is empty".into()));
    }
    let (t, r) = dropped_pair(tgt, reference, drop)?;
    let tset = PatchSet::from_grid(&t);
    let rset = PatchSet::gather(&r, &fg_idx);
    let count = fg_idx.len() as f64;
    let scores = kernel::map_rows(&tset, &rset, |_, row| match aggregator {
        Aggregator::Max => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregator::Mean => {
            let mut sum = 0.0;
            for &s in row {
                sum += s;
            }
            (sum / count).clamp(-1.0, 1.0)
        }
    });
    SimilarityMap::new(t.height(), t.width(), scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PromptPoint {
    pub row: usize,
    pub col: usize,
    pub score: f64,
}

/// Inclusive patch-grid box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PromptBox {
    pub row_min: usize,
    pub col_min: usize,
    pub row_max: usize,
    pub col_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptSet {
    pub points: Vec<PromptPoint>,
    #[serde(rename = "box")]
    pub bbox: Option<PromptBox>,
}

/// Greedy point selection: highest score first (lowest index on ties),
/// skipping any patch closer than `min_separation` in Chebyshev distance to
/// a chosen point, up to `k` points. The box bounds every patch scoring at
/// least `tau`.
pub fn extract_prompts(
    map: &SimilarityMap,
    k: usize,
    min_separation: usize,
    tau: f64,
) -> PromptSet {
    let mut order: Vec<usize> = (0..map.scores.len()).collect();
    order.sort_by(|&a, &b| map.scores[b].total_cmp(&map.scores[a]));

    let mut points: Vec<PromptPoint> = Vec::with_capacity(k);
    for idx in order {
        if points.len() == k {
            break;
        }
        let (row, col) = (idx / map.width, idx % map.width);
        let clear = points
            .iter()
            .all(|p| p.row.abs_diff(row).max(p.col.abs_diff(col)) >= min_separation);
        if clear {
            points.push(PromptPoint {
                row,
                col,
                score: map.scores[idx],
            });
        }
    }

    let mut bbox: Option<PromptBox> = None;
    for (idx, &s) in map.scores.iter().enumerate() {
        if s >= tau {
            let (row, col) = (idx / map.width, idx % map.width);
            bbox = Some(match bbox {
                None => PromptBox {
                    row_min: row,
                    col_min: col,
                    row_max: row,
                    col_max: col,
                },
                Some(b) => PromptBox {
                    row_min: b.row_min.min(row),
                    col_min: b.col_min.min(col),
                    row_max: b.row_max.max(row),
                    col_max: b.col_max.max(col),
                },
            });
        }
    }
    PromptSet { points, bbox }
}

/// Thresholds a similarity map: a patch is foreground iff its score ≥ `tau`.
pub fn proxy_segment(map: &SimilarityMap, tau: f64) -> BinaryMask {
    BinaryMask::new(
        map.height,
        map.width,
        map.scores.iter().map(|&s| s >= tau).collect(),
    )
    .expect("map dimensions are valid")
}

/// Intersection over union; 1 when both masks are empty.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    if !pred.same_dims(gt) {
        return Err(Error::Dimension(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}
