//! Channel-drop strategies, registered by name.
//!
//! Experiments are written against [`DropStrategy`] and look strategies up
//! in a [`StrategyRegistry`], so the command line can pick one with
//! `--strategy <name>`. The built-ins are:
//!
//! | name     | effect                                                          |
//! |----------|-----------------------------------------------------------------|
//! | `none`   | leaves both grids untouched                                     |
//! | `nubble` | zeroes one seeded random channel subset in both grids           |
//! | `trim`   | zeroes each patch's largest-magnitude channels                  |
//! | `greedy` | zeroes channels chosen by greedy mismatch reduction on the reference |

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nubble::{apply_drop, drop_count, greedy_channel_prune, sample_drop_mask, trim_extremes, DropMask};
use crate::tensor::{BinaryMask, FeatureGrid};

/// A reference grid with its foreground mask, and a target grid with its
/// ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchInstance {
    pub reference: FeatureGrid,
    pub fg: BinaryMask,
    pub target: FeatureGrid,
    pub target_gt: BinaryMask,
}

impl MatchInstance {
    pub fn validate(&self) -> Result<()> {
        self.fg.check_matches(&self.reference)?;
        self.target_gt.check_matches(&self.target)?;
        if self.reference.channels() != self.target.channels() {
            return Err(Error::Dimension(format!(
                "reference has {} channels, target has {}",
                self.reference.channels(),
                self.target.channels()
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.reference.channels()
    }
}

/// Grids after a strategy has been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub reference: FeatureGrid,
    pub target: FeatureGrid,
    /// The shared channel mask, for strategies that produce one.
    pub mask: Option<DropMask>,
}

impl Prepared {
    pub fn untouched(instance: &MatchInstance) -> Self {
        Prepared {
            reference: instance.reference.clone(),
            target: instance.target.clone(),
            mask: None,
        }
    }

    fn masked(instance: &MatchInstance, mask: DropMask) -> Result<Self> {
        Ok(Prepared {
            reference: apply_drop(&instance.reference, &mask)?,
            target: apply_drop(&instance.target, &mask)?,
            mask: Some(mask),
        })
    }
}

pub trait DropStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn summary(&self) -> &'static str;

    /// Whether `prepare` depends on its seed.
    fn randomized(&self) -> bool;

    /// Applies the strategy at drop fraction `ratio`.
    fn prepare(&self, instance: &MatchInstance, ratio: f64, seed: u64) -> Result<Prepared>;
}

pub struct NoDrop;

impl DropStrategy for NoDrop {
    fn name(&self) -> &'static str {
        "none"
    }

    fn summary(&self) -> &'static str {
        "leave both grids untouched"
    }

    fn randomized(&self) -> bool {
        false
    }

    fn prepare(&self, instance: &MatchInstance, _ratio: f64, _seed: u64) -> Result<Prepared> {
        Ok(Prepared::untouched(instance))
    }
}

/// Uniform random channel subset shared by reference and target.
pub struct RandomDrop;

impl DropStrategy for RandomDrop {
    fn name(&self) -> &'static str {
        "nubble"
    }

    fn summary(&self) -> &'static str {
        "zero a seeded random channel subset in both grids"
    }

    fn randomized(&self) -> bool {
        true
    }

    fn prepare(&self, instance: &MatchInstance, ratio: f64, seed: u64) -> Result<Prepared> {
        let mask = sample_drop_mask(instance.channels(), ratio, seed)?;
        Prepared::masked(instance, mask)
    }
}

/// Per-patch removal of the `round(ratio · C)` largest-magnitude channels.
pub struct TrimExtremes;

impl DropStrategy for TrimExtremes {
    fn name(&self) -> &'static str {
        "trim"
    }

    fn summary(&self) -> &'static str {
        "zero each patch's largest-magnitude channels"
    }

    fn randomized(&self) -> bool {
        false
    }

    fn prepare(&self, instance: &MatchInstance, ratio: f64, _seed: u64) -> Result<Prepared> {
        let per_patch = drop_count(instance.channels(), ratio);
        Ok(Prepared {
            reference: trim_extremes(&instance.reference, per_patch)?,
            target: trim_extremes(&instance.target, per_patch)?,
            mask: None,
        })
    }
}

/// Greedy mismatch-driven selection of `round(ratio · C)` channels on the
/// reference, then applied to both grids.
pub struct GreedyPrune {
    pub k_bg: usize,
}

impl Default for GreedyPrune {
    fn default() -> Self {
        GreedyPrune { k_bg: 8 }
    }
}

impl DropStrategy for GreedyPrune {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn summary(&self) -> &'static str {
        "zero channels chosen by greedy mismatch reduction on the reference"
    }

    fn randomized(&self) -> bool {
        false
    }

    fn prepare(&self, instance: &MatchInstance, ratio: f64, _seed: u64) -> Result<Prepared> {
        let budget = drop_count(instance.channels(), ratio);
        let pruned = greedy_channel_prune(&instance.reference, &instance.fg, budget, self.k_bg)?;
        Prepared::masked(instance, pruned.mask)
    }
}

/// Name → strategy lookup.
#[derive(Clone, Default)]
pub struct StrategyRegistry {
    strategies: BTreeMap<&'static str, Arc<dyn DropStrategy>>,
}

impl StrategyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut registry = Self::new();
        for s in [
            Arc::new(NoDrop) as Arc<dyn DropStrategy>,
            Arc::new(RandomDrop),
            Arc::new(TrimExtremes),
            Arc::new(GreedyPrune::default()),
        ] {
            registry.register(s).expect("built-in names are unique");
        }
        registry
    }

    pub fn register(&mut self, strategy: Arc<dyn DropStrategy>) -> Result<()> {
        let name = strategy.name();
        if self.strategies.contains_key(name) {
            return Err(Error::Argument(format!("strategy '{name}' already registered")));
        }
        self.strategies.insert(name, strategy);
        Ok(())
    }

    /// Replaces or inserts a strategy under its name.
    pub fn replace(&mut self, strategy: Arc<dyn DropStrategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn DropStrategy>> {
        self.strategies.get(name).cloned().ok_or_else(|| {
            Error::Argument(format!(
                "unknown strategy '{name}', expected one of: {}",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.keys().copied().collect()
    }
}
