//! Evidence for channel-level matching failures: foreground mismatch
//! counting, dominant-channel and channel-submergence statistics, and the
//! aggregated-weight interaction strength of a feed-forward network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::best_match_map;
use crate::nubble::DropMask;
use crate::report::{Cell, CsvTable};
use crate::tensor::{BinaryMask, FeatureGrid};

/// Default dominant-channel threshold on the largest |channel value|.
pub const DEFAULT_KAPPA: f64 = 0.5;
/// Default channel-submergence threshold on the mean per-patch variance.
pub const DEFAULT_NU: f64 = 0.0004;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FgMatchRecord {
    pub row: usize,
    pub col: usize,
    pub match_row: usize,
    pub match_col: usize,
    pub score: f64,
    pub best_is_foreground: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MismatchReport {
    pub records: Vec<FgMatchRecord>,
    pub mismatch_count: usize,
    pub total_fg: usize,
    pub image_flagged: bool,
}

impl MismatchReport {
    pub fn mismatch_rate(&self) -> f64 {
        self.mismatch_count as f64 / self.total_fg as f64
    }
}

/// Matches every foreground patch against all other patches of the same
/// grid and counts the ones whose best match lies in the background.
pub fn mismatch_report(
    reference: &FeatureGrid,
    fg: &BinaryMask,
    drop: Option<&DropMask>,
) -> Result<MismatchReport> {
    fg.check_matches(reference)?;
    let total_fg = fg.count_ones();
    if total_fg == 0 || total_fg == fg.len() {
        return Err(Error::Argument(
            "foreground mask must contain both foreground and background patches".into(),
        ));
    }
    let matches = best_match_map(reference, reference, drop, true)?;
    let width = reference.width();
    let records: Vec<FgMatchRecord> = fg
        .ones()
        .map(|p| {
            let m = matches.matches[p];
            FgMatchRecord {
                row: p / width,
                col: p % width,
                match_row: m.row,
                match_col: m.col,
                score: m.score,
                best_is_foreground: fg.get(m.row * width + m.col),
            }
        })
        .collect();
    let mismatch_count = records.iter().filter(|r| !r.best_is_foreground).count();
    Ok(MismatchReport {
        records,
        mismatch_count,
        total_fg,
        image_flagged: mismatch_count > 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelDiagnostics {
    /// Per patch: largest |value| over channels.
    pub max_abs: Vec<f64>,
    /// Per patch: population variance of |value| over channels.
    pub variance_abs: Vec<f64>,
    /// Mean over patches of the per-patch mean |value|.
    pub mean_abs_overall: f64,
    /// Mean over patches of `variance_abs`.
    pub mean_variance: f64,
    pub kappa: f64,
    pub nu: f64,
    /// Patches with `max_abs > kappa`.
    pub dominant_patch_count: usize,
    /// `mean_variance > nu`.
    pub submergence_flag: bool,
}

impl ChannelDiagnostics {
    pub fn is_dominant(&self, patch: usize) -> bool {
        self.max_abs[patch] > self.kappa
    }

    pub fn image_max_abs(&self) -> f64 {
        self.max_abs.iter().copied().fold(0.0, f64::max)
    }
}

/// Per-patch magnitude statistics of a normalized grid.
pub fn channel_diagnostics(grid: &FeatureGrid, kappa: f64, nu: f64) -> Result<ChannelDiagnostics> {
    if !kappa.is_finite() || !nu.is_finite() {
        return Err(Error::Argument("thresholds must be finite".into()));
    }
    grid.check_unit_norm()?;
    let c = grid.channels() as f64;
    let mut max_abs = Vec::with_capacity(grid.len());
    let mut variance_abs = Vec::with_capacity(grid.len());
    let (mut mean_sum, mut var_sum) = (0.0, 0.0);
    for patch in grid.patches() {
        let mut peak = 0.0f64;
        let mut sum = 0.0;
        for &v in patch {
            peak = peak.max(v.abs());
            sum += v.abs();
        }
        let mean = sum / c;
        let mut sq = 0.0;
        for &v in patch {
            let d = v.abs() - mean;
            sq += d * d;
        }
        let var = sq / c;
        max_abs.push(peak);
        variance_abs.push(var);
        mean_sum += mean;
        var_sum += var;
    }
    let n = grid.len() as f64;
    let mean_variance = var_sum / n;
    let dominant_patch_count = max_abs.iter().filter(|&&m| m > kappa).count();
    Ok(ChannelDiagnostics {
        max_abs,
        variance_abs,
        mean_abs_overall: mean_sum / n,
        mean_variance,
        kappa,
        nu,
        dominant_patch_count,
        submergence_flag: mean_variance > nu,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Count values strictly above each threshold.
    Above,
    /// Count values strictly below each threshold.
    Below,
}

/// `threshold,count` table of how many values pass each threshold.
pub fn threshold_counts(values: &[f64], thresholds: &[f64], direction: Direction) -> CsvTable {
    let mut table = CsvTable::new(&["threshold", "count"]);
    for &t in thresholds {
        let count = values
            .iter()
            .filter(|&&v| match direction {
                Direction::Above => v > t,
                Direction::Below => v < t,
            })
            .count();
        table.push(&[Cell::Float(t), Cell::Int(count as u64)]);
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionAggregator {
    #[default]
    Mean,
    Min,
}

/// A feed-forward network and a candidate set of interacting inputs.
///
/// `weight_matrices[l]` maps layer `l` to layer `l + 1` and is stored as
/// `rows = outputs`, `cols = inputs`. Interaction indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionQuery {
    pub weight_matrices: Vec<Vec<Vec<f64>>>,
    pub output_weights: Vec<f64>,
    pub interaction: Vec<usize>,
    #[serde(default)]
    pub aggregator: InteractionAggregator,
}

impl InteractionQuery {
    fn validate(&self) -> Result<()> {
        if self.weight_matrices.is_empty() {
            return Err(Error::Argument("network has no weight matrices".into()));
        }
        let mut prev_rows: Option<usize> = None;
        for (l, w) in self.weight_matrices.iter().enumerate() {
            let rows = w.len();
            let cols = w.first().map_or(0, Vec::len);
            if rows == 0 || cols == 0 || w.iter().any(|r| r.len() != cols) {
                return Err(Error::Dimension(format!(
                    "weight matrix {} is empty or ragged",
                    l + 1
                )));
            }
            if w.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "weight matrix {} has non-finite entries",
                    l + 1
                )));
            }
            if let Some(prev) = prev_rows {
                if cols != prev {
                    return Err(Error::Dimension(format!(
                        "weight matrix {} takes {cols} inputs but layer {} has {prev} units",
                        l + 1,
                        l
                    )));
                }
            }
            prev_rows = Some(rows);
        }
        let last_rows = prev_rows.expect("non-empty");
        if self.output_weights.len() != last_rows {
            return Err(Error::Dimension(format!(
                "output weights have length {}, last layer has {last_rows} units",
                self.output_weights.len()
            )));
        }
        if self.output_weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite output weight".into()));
        }
        let inputs = self.weight_matrices[0][0].len();
        if self.interaction.is_empty() {
            return Err(Error::Argument("interaction set is empty".into()));
        }
        if let Some(&bad) = self.interaction.iter().find(|&&i| i >= inputs) {
            return Err(Error::Argument(format!(
                "interaction index {bad} out of range for {inputs} inputs"
            )));
        }
        Ok(())
    }
}

/// Aggregated absolute influence of each first-hidden-layer unit on the
/// output: `|w_y|ᵀ |W_L| ⋯ |W_2|`, or `|w_y|` for a single layer.
pub fn aggregated_weights(query: &InteractionQuery) -> Result<Vec<f64>> {
    query.validate()?;
    let mut z: Vec<f64> = query.output_weights.iter().map(|w| w.abs()).collect();
    for w in query.weight_matrices[1..].iter().rev() {
        let cols = w[0].len();
        let mut next = vec![0.0; cols];
        for (zi, row) in z.iter().zip(w) {
            for (acc, &v) in next.iter_mut().zip(row) {
                *acc += zi * v.abs();
            }
        }
        z = next;
    }
    Ok(z)
}

/// Interaction strength `ω_i = z_i · μ(|W¹[i, I]|)` for every unit `i` of the
/// first hidden layer.
pub fn interaction_strength(query: &InteractionQuery) -> Result<Vec<f64>> {
    let z = aggregated_weights(query)?;
    let first = &query.weight_matrices[0];
    Ok(z.iter()
        .zip(first)
        .map(|(&zi, row)| {
            let mags = query.interaction.iter().map(|&j| row[j].abs());
            let mu = match query.aggregator {
                InteractionAggregator::Mean => {
                    mags.sum::<f64>() / query.interaction.len() as f64
                }
                InteractionAggregator::Min => mags.fold(f64::INFINITY, f64::min),
            };
            zi * mu
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize, c: usize, v: &[f64]) -> FeatureGrid {
        FeatureGrid::new(h, w, c, v.to_vec()).unwrap()
    }

    #[test]
    fn twin_background_is_a_mismatch() {
        let g = grid(1, 3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let fg = BinaryMask::new(1, 3, vec![true, false, false]).unwrap();
        let r = mismatch_report(&g, &fg, None).unwrap();
        assert_eq!(r.mismatch_count, 1);
        assert!(r.image_flagged);
        assert_eq!((r.records[0].match_row, r.records[0].match_col), (0, 1));
        assert_eq!(r.records[0].score, 1.0);
    }

    #[test]
    fn tie_goes_to_lower_index() {
        // patch 1 (fg) ties between patch 0 (bg) and patch 2 (fg)
        let g = grid(1, 3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let fg = BinaryMask::new(1, 3, vec![false, true, true]).unwrap();
        let r = mismatch_report(&g, &fg, None).unwrap();
        assert!(!r.records[0].best_is_foreground);
        // patch 2 ties between 0 (bg) and 1 (fg): bg has the lower index
        assert!(!r.records[1].best_is_foreground);

        let fg = BinaryMask::new(1, 3, vec![true, true, false]).unwrap();
        let r = mismatch_report(&g, &fg, None).unwrap();
        // patch 1 ties between 0 (fg) and 2 (bg): fg is lower
        assert!(r.records[1].best_is_foreground);
    }

    #[test]
    fn mismatch_needs_both_classes() {
        let g = grid(1, 2, 1, &[1.0, 1.0]);
        for bits in [vec![true, true], vec![false, false]] {
            let fg = BinaryMask::new(1, 2, bits).unwrap();
            assert!(matches!(mismatch_report(&g, &fg, None), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn dominant_patch() {
        let g = grid(1, 1, 2, &[0.6, 0.8]);
        let d = channel_diagnostics(&g, DEFAULT_KAPPA, DEFAULT_NU).unwrap();
        assert_eq!(d.dominant_patch_count, 1);
        assert_eq!(d.max_abs, vec![0.8]);
        assert!((d.variance_abs[0] - 0.01).abs() < 1e-15);
        assert!((d.mean_abs_overall - 0.7).abs() < 1e-15);
        assert!(d.submergence_flag);
    }

    #[test]
    fn uniform_patch_has_zero_variance() {
        let v = 1.0 / 16f64.sqrt();
        let g = grid(1, 1, 16, &[v; 16]);
        let d = channel_diagnostics(&g, DEFAULT_KAPPA, DEFAULT_NU).unwrap();
        assert_eq!(d.variance_abs, vec![0.0]);
        assert!(!d.submergence_flag);
        assert_eq!(d.dominant_patch_count, 0);
    }

    #[test]
    fn boundary_half_is_not_dominant() {
        let g = grid(1, 1, 4, &[0.5, -0.5, 0.5, 0.5]);
        let d = channel_diagnostics(&g, 0.5, DEFAULT_NU).unwrap();
        assert_eq!(d.dominant_patch_count, 0);
    }

    #[test]
    fn diagnostics_reject_raw_grid() {
        let g = grid(1, 1, 2, &[3.0, 4.0]);
        assert!(matches!(
            channel_diagnostics(&g, 0.5, 0.0004),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn worked_interaction_example() {
        let q = InteractionQuery {
            weight_matrices: vec![vec![vec![1.0, -2.0, 3.0], vec![4.0, 5.0, -6.0]]],
            output_weights: vec![2.0, -1.0],
            interaction: vec![0, 1],
            aggregator: InteractionAggregator::Mean,
        };
        assert_eq!(interaction_strength(&q).unwrap(), vec![3.0, 4.5]);
    }

    #[test]
    fn singleton_interaction() {
        let mut q = InteractionQuery {
            weight_matrices: vec![vec![vec![1.0, -2.0, 3.0], vec![4.0, 5.0, -6.0]]],
            output_weights: vec![2.0, -1.0],
            interaction: vec![2],
            aggregator: InteractionAggregator::Mean,
        };
        assert_eq!(interaction_strength(&q).unwrap(), vec![6.0, 6.0]);
        q.aggregator = InteractionAggregator::Min;
        assert_eq!(interaction_strength(&q).unwrap(), vec![6.0, 6.0]);
    }

    #[test]
    fn zero_first_layer() {
        let q = InteractionQuery {
            weight_matrices: vec![vec![vec![0.0; 3]; 2], vec![vec![1.0, 2.0]]],
            output_weights: vec![3.0],
            interaction: vec![0, 2],
            aggregator: InteractionAggregator::Min,
        };
        assert_eq!(interaction_strength(&q).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn chain_mismatch() {
        let q = InteractionQuery {
            weight_matrices: vec![vec![vec![1.0; 3]; 2], vec![vec![1.0; 3]]],
            output_weights: vec![1.0],
            interaction: vec![0],
            aggregator: InteractionAggregator::Mean,
        };
        assert!(matches!(interaction_strength(&q), Err(Error::Dimension(_))));
        let q = InteractionQuery {
            weight_matrices: vec![vec![vec![1.0; 3]; 2]],
            output_weights: vec![1.0],
            interaction: vec![0],
            aggregator: InteractionAggregator::Mean,
        };
        assert!(matches!(interaction_strength(&q), Err(Error::Dimension(_))));
    }

    #[test]
    fn counts_above_and_below() {
        let t = threshold_counts(&[0.1, 0.6, 0.9], &[0.5, 0.9], Direction::Above);
        assert_eq!(t.render(), "threshold,count\n0.5,2\n0.9,0\n");
        let t = threshold_counts(&[0.1, 0.6, 0.9], &[0.6], Direction::Below);
        assert_eq!(t.render(), "threshold,count\n0.6,1\n");
    }
}
