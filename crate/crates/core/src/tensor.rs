//! Patch-feature grids and patch-resolution binary masks.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Tolerance on the L2 norm of a patch in a grid flagged as normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

/// An `height × width` grid of `channels`-dimensional patch feature vectors,
/// stored row-major with the channel axis innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
    normalized: bool,
    source_id: String,
}

impl FeatureGrid {
    /// Builds a grid, checking dimensions and finiteness. The result is not
    /// flagged as normalized.
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Validation(format!(
                "grid dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::Validation("grid dimensions overflow".into()))?;
        if values.len() != expected {
            return Err(Error::Validation(format!(
                "grid {height}x{width}x{channels} needs {expected} values, got {}",
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(FeatureGrid {
            height,
            width,
            channels,
            values,
            normalized: false,
            source_id: String::new(),
        })
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of patches, `height · width`.
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Feature vector of the patch at linear (row-major) index `idx`.
    pub fn patch(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn patch_at(&self, row: usize, col: usize) -> &[f64] {
        self.patch(row * self.width + col)
    }

    pub fn patches(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.channels)
    }

    /// `(row, col)` of a linear patch index.
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.width, idx % self.width)
    }

    /// Returns a grid with the same shape and tag but new values.
    ///
    /// The caller guarantees `values` has the right length and is finite.
    pub(crate) fn with_values(&self, values: Vec<f64>, normalized: bool) -> FeatureGrid {
        debug_assert_eq!(values.len(), self.values.len());
        FeatureGrid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            values,
            normalized,
            source_id: self.source_id.clone(),
        }
    }

    /// Checks that every patch is unit-norm within [`UNIT_NORM_TOLERANCE`] or
    /// exactly zero, regardless of the `normalized` flag.
    pub fn check_unit_norm(&self) -> Result<()> {
        for (idx, patch) in self.patches().enumerate() {
            if patch.iter().all(|&v| v == 0.0) {
                continue;
            }
            let norm = l2_norm(patch);
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::Precondition(format!(
                    "patch {idx} has L2 norm {norm}, grid is not normalized"
                )));
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &FeatureGrid) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }
}

/// Sum of squares in ascending channel order, then square root.
pub fn l2_norm(v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &x in v {
        acc += x * x;
    }
    acc.sqrt()
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(idx) => Err(Error::Validation(format!(
            "non-finite value {} at flat index {idx}",
            values[idx]
        ))),
        None => Ok(()),
    }
}

/// L2-normalizes every patch vector. All-zero patches stay all-zero.
pub fn normalize_grid(grid: &FeatureGrid) -> FeatureGrid {
    let mut values = grid.values.clone();
    values
        .par_chunks_exact_mut(grid.channels)
        .for_each(|patch| {
            let norm = l2_norm(patch);
            if norm > 0.0 {
                for v in patch.iter_mut() {
                    *v /= norm;
                }
            }
        });
    grid.with_values(values, true)
}

/// A row-major `height × width` boolean mask at patch resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Validation(format!(
                "mask dimensions must be positive, got {height}x{width}"
            )));
        }
        if bits.len() != height * width {
            return Err(Error::Validation(format!(
                "mask {height}x{width} needs {} bits, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(BinaryMask {
            height,
            width,
            bits,
        })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Result<Self> {
        BinaryMask::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    /// Errors unless the mask matches the grid's spatial dimensions.
    pub fn check_matches(&self, grid: &FeatureGrid) -> Result<()> {
        if self.height != grid.height() || self.width != grid.width() {
            return Err(Error::Dimension(format!(
                "mask is {}x{} but grid is {}x{}",
                self.height,
                self.width,
                grid.height(),
                grid.width()
            )));
        }
        Ok(())
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.height == other.height && self.width == other.width
    }
}
