//! Synthetic instances and seeded drop-ratio experiments.
//!
//! All randomness is derived up front from the user seed, so results do not
//! depend on iteration order or on how many threads evaluate the cells.

use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::mismatch_report;
use crate::error::{Error, Result};
use crate::matching::{best_match_map, extract_prompts, foreground_similarity_map, iou, proxy_segment, Aggregator};
use crate::nubble::{drop_count, DropMask};
use crate::npy;
use crate::report::{Cell, CsvTable};
use crate::strategy::{DropStrategy, MatchInstance, Prepared};
use crate::tensor::{normalize_grid, BinaryMask, FeatureGrid};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with cell coordinates:
/// `h₀ = splitmix64(seed)`, `hₖ₊₁ = splitmix64(hₖ ^ splitmix64(partₖ))`.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Seed for one `(ratio, trial, instance)` cell of a sweep.
pub fn cell_seed(seed: u64, ratio_index: usize, trial: usize, instance: usize) -> u64 {
    derive_seed(seed, &[ratio_index as u64, trial as u64, instance as u64])
}

/// Running mean and population variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).sqrt()
        }
    }

    fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut w = Welford::default();
        for v in values {
            w.push(v);
        }
        w
    }
}

fn default_dominant_value() -> f64 {
    4.0
}

fn default_nubble_fraction() -> f64 {
    0.05
}

/// Recipe for a two-cluster synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Fraction of patches that are foreground.
    pub fg_fraction: f64,
    /// Prototype separation: `cos(u_fg, u_bg) = 1 − margin`.
    pub margin: f64,
    /// Per-channel Gaussian noise scale before renormalization.
    pub noise_sigma: f64,
    /// Channel that receives `dominant_value` in a subset of patches.
    #[serde(default)]
    pub noise_channel: Option<usize>,
    #[serde(default = "default_dominant_value")]
    pub dominant_value: f64,
    /// Fraction of foreground and of background patches that get the
    /// dominant value (at least one of each).
    #[serde(default = "default_nubble_fraction")]
    pub nubble_fraction: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::Argument("synthetic dimensions must be positive".into()));
        }
        if self.height * self.width < 2 {
            return Err(Error::Argument(
                "a synthetic grid needs at least two patches".into(),
            ));
        }
        if !(self.fg_fraction > 0.0 && self.fg_fraction < 1.0) {
            return Err(Error::Argument(format!(
                "fg_fraction {} outside (0, 1)",
                self.fg_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.margin) {
            return Err(Error::Argument(format!("margin {} outside [0, 1]", self.margin)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Argument(format!(
                "noise_sigma {} must be finite and non-negative",
                self.noise_sigma
            )));
        }
        if !self.dominant_value.is_finite() {
            return Err(Error::Argument("dominant_value must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.nubble_fraction) {
            return Err(Error::Argument(format!(
                "nubble_fraction {} outside [0, 1]",
                self.nubble_fraction
            )));
        }
        if let Some(c) = self.noise_channel {
            if c >= self.channels {
                return Err(Error::Argument(format!(
                    "noise_channel {c} out of range for {} channels",
                    self.channels
                )));
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit prototypes with `cos(u_fg, u_bg) = 1 − margin`.
fn prototypes(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let c = spec.channels;
    let a = gaussian(rng, c);
    let na = dot(&a, &a).sqrt();
    let e1: Vec<f64> = a.iter().map(|x| x / na).collect();
    if c == 1 {
        return (e1.clone(), e1);
    }
    let b = gaussian(rng, c);
    let proj = dot(&b, &e1);
    let b: Vec<f64> = b.iter().zip(&e1).map(|(x, e)| x - proj * e).collect();
    let nb = dot(&b, &b).sqrt();
    let cos = 1.0 - spec.margin;
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    let ub = e1
        .iter()
        .zip(&b)
        .map(|(e, x)| cos * e + sin * x / nb)
        .collect();
    (e1, ub)
}

/// `count` distinct picks from `pool` by partial Fisher-Yates.
fn pick(rng: &mut ChaCha8Rng, pool: &[usize], count: usize) -> Vec<usize> {
    let mut pool = pool.to_vec();
    for i in 0..count {
        let span = (pool.len() - i) as u64;
        let j = i + (rng.next_u64() % span) as usize;
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

fn synth_grid(
    spec: &SynthSpec,
    fg_proto: &[f64],
    bg_proto: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<(FeatureGrid, BinaryMask)> {
    let n = spec.height * spec.width;
    let c = spec.channels;
    let n_fg = drop_count(n, spec.fg_fraction).clamp(1, n - 1);
    let all: Vec<usize> = (0..n).collect();
    let mut is_fg = vec![false; n];
    for i in pick(rng, &all, n_fg) {
        is_fg[i] = true;
    }

    let mut values = Vec::with_capacity(n * c);
    for &fg in &is_fg {
        let proto = if fg { fg_proto } else { bg_proto };
        for &p in proto {
            let z: f64 = StandardNormal.sample(rng);
            values.push(p + spec.noise_sigma * z);
        }
    }

    if let Some(channel) = spec.noise_channel {
        let fg_idx: Vec<usize> = (0..n).filter(|&i| is_fg[i]).collect();
        let bg_idx: Vec<usize> = (0..n).filter(|&i| !is_fg[i]).collect();
        let n_fg_hit = drop_count(fg_idx.len(), spec.nubble_fraction).clamp(1, fg_idx.len());
        let n_bg_hit = drop_count(bg_idx.len(), spec.nubble_fraction).clamp(1, bg_idx.len());
        let mut hit = pick(rng, &fg_idx, n_fg_hit);
        hit.extend(pick(rng, &bg_idx, n_bg_hit));
        for p in hit {
            values[p * c + channel] = spec.dominant_value;
        }
    }

    let grid = FeatureGrid::new(spec.height, spec.width, c, values)?;
    Ok((
        normalize_grid(&grid),
        BinaryMask::new(spec.height, spec.width, is_fg)?,
    ))
}

/// Builds a normalized reference/target pair around two prototypes.
///
/// Prototypes, reference and target use independent ChaCha8 streams derived
/// from `spec.seed`, so equal specs produce identical instances.
pub fn synth_clusters(spec: &SynthSpec) -> Result<MatchInstance> {
    spec.validate()?;
    let mut proto_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[0]));
    let (fg_proto, bg_proto) = prototypes(spec, &mut proto_rng);
    let mut ref_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[1]));
    let (reference, fg) = synth_grid(spec, &fg_proto, &bg_proto, &mut ref_rng)?;
    let mut tgt_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[2]));
    let (target, target_gt) = synth_grid(spec, &fg_proto, &bg_proto, &mut tgt_rng)?;
    Ok(MatchInstance {
        reference: reference.with_source_id(format!("synth:{}:ref", spec.seed)),
        fg,
        target: target.with_source_id(format!("synth:{}:tgt", spec.seed)),
        target_gt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// IoU of the thresholded foreground similarity map against the target
    /// ground truth.
    #[default]
    ProxyIou,
    /// Fraction of reference foreground patches whose best match is background.
    MismatchRate,
    /// Fraction of extracted prompt points that land on target foreground.
    PromptHitRate,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::ProxyIou => "proxy-iou",
            MetricKind::MismatchRate => "mismatch-rate",
            MetricKind::PromptHitRate => "prompt-hit-rate",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proxy-iou" => Ok(MetricKind::ProxyIou),
            "mismatch-rate" => Ok(MetricKind::MismatchRate),
            "prompt-hit-rate" => Ok(MetricKind::PromptHitRate),
            other => Err(Error::Argument(format!("unknown metric '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub kind: MetricKind,
    pub tau: f64,
    pub aggregator: Aggregator,
    pub prompt_k: usize,
    pub min_separation: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            kind: MetricKind::ProxyIou,
            tau: 0.5,
            aggregator: Aggregator::Max,
            prompt_k: 3,
            min_separation: 1,
        }
    }
}

impl MetricConfig {
    /// Scores one prepared instance.
    pub fn evaluate(&self, instance: &MatchInstance, prepared: &Prepared) -> Result<f64> {
        match self.kind {
            MetricKind::ProxyIou => {
                let map = foreground_similarity_map(
                    &prepared.reference,
                    &instance.fg,
                    &prepared.target,
                    self.aggregator,
                    None,
                )?;
                iou(&proxy_segment(&map, self.tau), &instance.target_gt)
            }
            MetricKind::MismatchRate => {
                Ok(mismatch_report(&prepared.reference, &instance.fg, None)?.mismatch_rate())
            }
            MetricKind::PromptHitRate => {
                let map = foreground_similarity_map(
                    &prepared.reference,
                    &instance.fg,
                    &prepared.target,
                    self.aggregator,
                    None,
                )?;
                let prompts = extract_prompts(&map, self.prompt_k, self.min_separation, self.tau);
                if prompts.points.is_empty() {
                    return Ok(0.0);
                }
                let hits = prompts
                    .points
                    .iter()
                    .filter(|p| instance.target_gt.get(p.row * map.width + p.col))
                    .count();
                Ok(hits as f64 / prompts.points.len() as f64)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() {
            return Err(Error::Argument("tau must be finite".into()));
        }
        if self.kind == MetricKind::PromptHitRate && self.prompt_k == 0 {
            return Err(Error::Argument("prompt k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub metric: MetricConfig,
}

/// One evaluated `(ratio, trial, instance)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub ratio_index: usize,
    pub ratio: f64,
    pub trial: usize,
    pub instance: usize,
    pub seed: u64,
    pub mask: Option<DropMask>,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub drop_ratio: f64,
    pub trials: usize,
    pub mean_metric: f64,
    pub std_metric: f64,
    pub baseline_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub metric: MetricKind,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// `ratio,trials,mean,std,baseline,metric`.
    pub fn to_csv(&self) -> String {
        let mut table = CsvTable::new(&["ratio", "trials", "mean", "std", "baseline", "metric"]);
        for r in &self.rows {
            table.push(&[
                Cell::Float(r.drop_ratio),
                Cell::Int(r.trials as u64),
                Cell::Float(r.mean_metric),
                Cell::Float(r.std_metric),
                Cell::Float(r.baseline_metric),
                Cell::Text(self.metric.as_str()),
            ]);
        }
        table.render()
    }
}

fn check_sweep_inputs(instances: &[MatchInstance], ratios: &[f64], trials: usize) -> Result<()> {
    if instances.is_empty() {
        return Err(Error::Argument("no instances to evaluate".into()));
    }
    if trials == 0 {
        return Err(Error::Argument("trials must be at least 1".into()));
    }
    if let Some(r) = ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(Error::Argument(format!("drop ratio {r} outside [0, 1)")));
    }
    for inst in instances {
        inst.validate()?;
    }
    Ok(())
}

/// Metric of every instance with no channels dropped.
pub fn baseline_metrics(instances: &[MatchInstance], metric: &MetricConfig) -> Result<Vec<f64>> {
    instances
        .par_iter()
        .map(|inst| metric.evaluate(inst, &Prepared::untouched(inst)))
        .collect()
}

/// Evaluates every `(ratio, trial, instance)` cell, ordered by ratio, then
/// trial, then instance.
pub fn run_trials(
    instances: &[MatchInstance],
    config: &SweepConfig,
    strategy: &dyn DropStrategy,
) -> Result<Vec<TrialRecord>> {
    check_sweep_inputs(instances, &config.ratios, config.trials)?;
    config.metric.validate()?;
    let n_inst = instances.len();
    let per_ratio = config.trials * n_inst;
    (0..config.ratios.len() * per_ratio)
        .into_par_iter()
        .map(|cell| {
            let ratio_index = cell / per_ratio;
            let trial = (cell % per_ratio) / n_inst;
            let instance = cell % n_inst;
            let ratio = config.ratios[ratio_index];
            let seed = cell_seed(config.seed, ratio_index, trial, instance);
            let inst = &instances[instance];
            let prepared = strategy.prepare(inst, ratio, seed)?;
            let metric = config.metric.evaluate(inst, &prepared)?;
            Ok(TrialRecord {
                ratio_index,
                ratio,
                trial,
                instance,
                seed,
                mask: prepared.mask,
                metric,
            })
        })
        .collect()
}

/// Aggregates trial records into one row per ratio. Each trial is averaged
/// over instances first; `mean_metric` and `std_metric` (population) are
/// then taken across trials.
pub fn summarize_trials(
    records: &[TrialRecord],
    config: &SweepConfig,
    baseline: &[f64],
) -> SweepResult {
    let n_inst = baseline.len();
    let baseline_metric = Welford::of(baseline.iter().copied()).mean;
    let per_ratio = config.trials * n_inst;
    let rows = config
        .ratios
        .iter()
        .enumerate()
        .map(|(ri, &ratio)| {
            let cells = &records[ri * per_ratio..(ri + 1) * per_ratio];
            let trial_means = cells
                .chunks_exact(n_inst)
                .map(|trial| Welford::of(trial.iter().map(|r| r.metric)).mean);
            let across = Welford::of(trial_means);
            SweepRow {
                drop_ratio: ratio,
                trials: config.trials,
                mean_metric: across.mean,
                std_metric: across.std(),
                baseline_metric,
            }
        })
        .collect();
    SweepResult {
        metric: config.metric.kind,
        rows,
    }
}

/// Drop-ratio sweep; see [`run_trials`] and [`summarize_trials`].
pub fn run_drop_sweep(
    instances: &[MatchInstance],
    config: &SweepConfig,
    strategy: &dyn DropStrategy,
) -> Result<SweepResult> {
    let records = run_trials(instances, config, strategy)?;
    let baseline = baseline_metrics(instances, &config.metric)?;
    Ok(summarize_trials(&records, config, &baseline))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub n_instances: usize,
    pub mean_improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveResult {
    pub metric: MetricKind,
    /// Per-instance improvement, in input order.
    pub improvements: Vec<f64>,
    pub rows: Vec<CurveRow>,
}

impl CurveResult {
    /// `n_pairs,mean_improvement,metric`; `n_pairs` counts reference/target
    /// pairs.
    pub fn to_csv(&self) -> String {
        let mut table = CsvTable::new(&["n_pairs", "mean_improvement", "metric"]);
        for r in &self.rows {
            table.push(&[
                Cell::Int(r.n_instances as u64),
                Cell::Float(r.mean_improvement),
                Cell::Text(self.metric.as_str()),
            ]);
        }
        table.render()
    }
}

/// Prefix means `sum(values[..n]) / n` for `n = 1..=len`.
pub fn prefix_means(values: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            sum += v;
            sum / (i + 1) as f64
        })
        .collect()
}

/// Average improvement over the first `n` instances, for every `n`. An
/// instance's improvement is its mean metric over `trials` drops minus its
/// no-drop metric.
pub fn run_cumulative_curve(
    instances: &[MatchInstance],
    ratio: f64,
    trials: usize,
    seed: u64,
    metric: &MetricConfig,
    strategy: &dyn DropStrategy,
) -> Result<CurveResult> {
    let config = SweepConfig {
        ratios: vec![ratio],
        trials,
        seed,
        metric: *metric,
    };
    let records = run_trials(instances, &config, strategy)?;
    let baseline = baseline_metrics(instances, metric)?;
    let n_inst = instances.len();
    let improvements: Vec<f64> = (0..n_inst)
        .map(|i| {
            let with_drop = Welford::of((0..trials).map(|t| records[t * n_inst + i].metric)).mean;
            with_drop - baseline[i]
        })
        .collect();
    let rows = prefix_means(&improvements)
        .into_iter()
        .enumerate()
        .map(|(i, m)| CurveRow {
            n_instances: i + 1,
            mean_improvement: m,
        })
        .collect();
    Ok(CurveResult {
        metric: metric.kind,
        improvements,
        rows,
    })
}

/// Fraction of target patches whose best reference match moves when `mask`
/// is applied to both grids.
pub fn best_match_change_rate(
    target: &FeatureGrid,
    reference: &FeatureGrid,
    mask: &DropMask,
) -> Result<f64> {
    let before = best_match_map(target, reference, None, false)?;
    let after = best_match_map(target, reference, Some(mask), false)?;
    let moved = before
        .matches
        .iter()
        .zip(&after.matches)
        .filter(|(a, b)| (a.row, a.col) != (b.row, b.col))
        .count();
    Ok(moved as f64 / before.matches.len() as f64)
}

/// Tensor file paths of one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstancePaths {
    pub reference: PathBuf,
    pub fg: PathBuf,
    pub target: PathBuf,
    pub target_gt: PathBuf,
}

/// JSON list of instances; relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InstanceManifest {
    pub instances: Vec<InstancePaths>,
}

impl InstanceManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Loads every instance. Grids are normalized on load.
    pub fn load(&self, base: &Path) -> Result<Vec<MatchInstance>> {
        self.instances
            .iter()
            .map(|p| {
                let resolve = |rel: &Path| base.join(rel);
                let inst = MatchInstance {
                    reference: normalize_grid(&npy::read_grid(resolve(&p.reference))?),
                    fg: npy::read_mask(resolve(&p.fg))?,
                    target: normalize_grid(&npy::read_grid(resolve(&p.target))?),
                    target_gt: npy::read_mask(resolve(&p.target_gt))?,
                };
                inst.validate()?;
                Ok(inst)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::RandomDrop;

    fn spec(seed: u64) -> SynthSpec {
        SynthSpec {
            height: 6,
            width: 6,
            channels: 16,
            fg_fraction: 0.3,
            margin: 0.8,
            noise_sigma: 0.0,
            noise_channel: None,
            dominant_value: 4.0,
            nubble_fraction: 0.05,
            seed,
        }
    }

    #[test]
    fn seeds_differ_by_coordinate() {
        let a = cell_seed(1, 0, 0, 0);
        assert_ne!(a, cell_seed(1, 0, 0, 1));
        assert_ne!(a, cell_seed(1, 0, 1, 0));
        assert_ne!(a, cell_seed(1, 1, 0, 0));
        assert_ne!(a, cell_seed(2, 0, 0, 0));
        assert_eq!(a, cell_seed(1, 0, 0, 0));
    }

    #[test]
    fn welford_identical_values_are_exact() {
        let w = Welford::of([0.1, 0.1, 0.1]);
        assert_eq!(w.mean, 0.1);
        assert_eq!(w.std(), 0.0);
    }

    #[test]
    fn synth_is_deterministic_and_normalized() {
        let a = synth_clusters(&spec(5)).unwrap();
        assert_eq!(a, synth_clusters(&spec(5)).unwrap());
        assert_ne!(a.reference, synth_clusters(&spec(6)).unwrap().reference);
        a.reference.check_unit_norm().unwrap();
        a.target.check_unit_norm().unwrap();
        assert_eq!(a.fg.count_ones(), 11);
    }

    #[test]
    fn synth_prototype_margin() {
        let inst = synth_clusters(&spec(3)).unwrap();
        let f = inst.fg.ones().next().unwrap();
        let b = (0..inst.fg.len()).find(|&i| !inst.fg.get(i)).unwrap();
        let cos = crate::matching::cosine_similarity(inst.reference.patch(f), inst.reference.patch(b)).unwrap();
        assert!((cos - 0.2).abs() < 1e-12, "{cos}");
    }

    #[test]
    fn synth_rejects_bad_spec() {
        let mut s = spec(1);
        s.fg_fraction = 1.0;
        assert!(matches!(synth_clusters(&s), Err(Error::Argument(_))));
        let mut s = spec(1);
        s.noise_channel = Some(16);
        assert!(matches!(synth_clusters(&s), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_ratio_row_equals_baseline() {
        let insts: Vec<_> = (0..3).map(|s| {
            let mut sp = spec(s);
            sp.noise_sigma = 0.05;
            synth_clusters(&sp).unwrap()
        }).collect();
        let cfg = SweepConfig {
            ratios: vec![0.0],
            trials: 4,
            seed: 11,
            metric: MetricConfig::default(),
        };
        let r = run_drop_sweep(&insts, &cfg, &RandomDrop).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].mean_metric.to_bits(), r.rows[0].baseline_metric.to_bits());
        assert_eq!(r.rows[0].std_metric, 0.0);
    }

    #[test]
    fn sweep_errors() {
        let inst = synth_clusters(&spec(1)).unwrap();
        let mut cfg = SweepConfig {
            ratios: vec![0.1],
            trials: 1,
            seed: 0,
            metric: MetricConfig::default(),
        };
        assert!(matches!(run_drop_sweep(&[], &cfg, &RandomDrop), Err(Error::Argument(_))));
        cfg.ratios = vec![1.0];
        assert!(matches!(
            run_drop_sweep(std::slice::from_ref(&inst), &cfg, &RandomDrop),
            Err(Error::Argument(_))
        ));
        cfg.ratios = vec![0.1];
        cfg.trials = 0;
        assert!(matches!(run_drop_sweep(&[inst], &cfg, &RandomDrop), Err(Error::Argument(_))));
    }

    #[test]
    fn single_instance_curve() {
        let inst = synth_clusters(&spec(2)).unwrap();
        let c = run_cumulative_curve(&[inst], 0.2, 5, 3, &MetricConfig::default(), &RandomDrop).unwrap();
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.rows[0].mean_improvement, c.improvements[0]);
    }

    #[test]
    fn csv_headers() {
        let r = SweepResult { metric: MetricKind::ProxyIou, rows: vec![] };
        assert_eq!(r.to_csv(), "ratio,trials,mean,std,baseline,metric\n");
        let c = CurveResult { metric: MetricKind::MismatchRate, improvements: vec![], rows: vec![] };
        assert_eq!(c.to_csv(), "n_pairs,mean_improvement,metric\n");
    }
}
