use std::path::{Path, PathBuf};
use std::sync::Arc;

use nubblematch_core::diagnostics::{
    aggregated_weights, channel_diagnostics, interaction_strength, mismatch_report, threshold_counts,
    Direction, InteractionQuery,
};
use nubblematch_core::harness::{
    baseline_metrics, run_cumulative_curve, run_trials, summarize_trials, synth_clusters,
    InstanceManifest, InstancePaths, MetricConfig, MetricKind, SweepConfig, SynthSpec,
};
use nubblematch_core::matching::{
    best_match_map, extract_prompts, foreground_similarity_map, iou, proxy_segment,
};
use nubblematch_core::npy;
use nubblematch_core::nubble::{apply_drop, greedy_channel_prune, sample_drop_mask, trim_extremes};
use nubblematch_core::report::{to_canonical_json, Cell, CsvTable, Report, ReportKind};
use nubblematch_core::strategy::GreedyPrune;
use nubblematch_core::tensor::normalize_grid;
use nubblematch_core::{
    Aggregator, DropMask, DropStrategy, Error, MatchInstance, Result, SimilarityMap, StrategyRegistry,
};
use serde_json::{json, Map, Value};

use crate::args::*;
use crate::output::Outputs;

/// Files to write plus the stdout summary fields.
pub struct Run {
    pub outputs: Outputs,
    pub summary: Map<String, Value>,
}

impl Run {
    fn new() -> Self {
        Run {
            outputs: Outputs::default(),
            summary: Map::new(),
        }
    }

    fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    fn report(&mut self, path: &Path, kind: ReportKind, payload: impl serde::Serialize) -> Result<()> {
        self.outputs.add(path, Report::new(kind, payload)?.to_canonical());
        Ok(())
    }
}

fn arg(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(arg(format!("--{name} must be finite")))
    }
}

fn check_ratio(name: &str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(arg(format!("--{name} {v} outside [0, 1)")))
    }
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.ok_or_else(|| arg(format!("--seed is required {what}")))
}

fn aggregator(a: AggregatorArg) -> Aggregator {
    match a {
        AggregatorArg::Max => Aggregator::Max,
        AggregatorArg::Mean => Aggregator::Mean,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn mask_json(mask: &DropMask) -> Result<String> {
    let mut text = to_canonical_json(mask)?;
    text.push('\n');
    Ok(text)
}

enum Source {
    None,
    File(PathBuf),
    Sample(f64, u64),
}

impl Source {
    fn check(src: &DropSource, required: bool) -> Result<Self> {
        if let Some(p) = &src.mask {
            return Ok(Source::File(p.clone()));
        }
        match src.ratio {
            Some(r) => {
                check_ratio("ratio", r)?;
                Ok(Source::Sample(r, require_seed(src.seed, "with --ratio")?))
            }
            None if required => Err(arg("either --mask or --ratio is required")),
            None => Ok(Source::None),
        }
    }

    fn resolve(&self, channels: usize) -> Result<Option<DropMask>> {
        match self {
            Source::None => Ok(None),
            Source::File(p) => {
                let mask: DropMask = read_json(p)?;
                mask.validate()?;
                if mask.n != channels {
                    return Err(Error::Dimension(format!(
                        "mask covers {} channels, grid has {channels}",
                        mask.n
                    )));
                }
                Ok(Some(mask))
            }
            Source::Sample(r, s) => Ok(Some(sample_drop_mask(channels, *r, *s)?)),
        }
    }
}

fn set_mask_summary(run: &mut Run, mask: Option<&DropMask>) {
    if let Some(m) = mask {
        run.set("dropped", m.dropped.len());
    }
}

pub fn run(command: Command) -> Result<Run> {
    match command {
        Command::Normalize(a) => normalize(a),
        Command::Drop(a) => drop(a),
        Command::Trim(a) => trim(a),
        Command::Prune(a) => prune(a),
        Command::Match(a) => matching(a),
        Command::Prompts(a) => prompts(a),
        Command::Segment(a) => segment(a),
        Command::Iou(a) => iou_cmd(a),
        Command::Mismatch(a) => mismatch(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Interaction(a) => interaction(a),
        Command::Synth(a) => synth(a),
        Command::Sweep(a) => sweep(a),
        Command::Curve(a) => curve(a),
    }
}

fn normalize(a: NormalizeArgs) -> Result<Run> {
    let g = normalize_grid(&npy::read_grid(&a.input)?);
    let mut run = Run::new();
    run.set("height", g.height());
    run.set("width", g.width());
    run.set("channels", g.channels());
    run.outputs.add(&a.out, npy::encode_grid(&g));
    Ok(run)
}

fn drop(a: DropArgs) -> Result<Run> {
    let source = Source::check(&a.source, true)?;
    let g = npy::read_grid(&a.input)?;
    let mask = source.resolve(g.channels())?.expect("source is required");
    let mut run = Run::new();
    run.outputs.add(&a.out, npy::encode_grid(&apply_drop(&g, &mask)?));
    if let (Some(tin), Some(tout)) = (&a.target_in, &a.target_out) {
        let t = npy::read_grid(tin)?;
        run.outputs.add(tout, npy::encode_grid(&apply_drop(&t, &mask)?));
    }
    if let Some(p) = &a.mask_out {
        run.outputs.add(p, mask_json(&mask)?);
    }
    run.set("channels", mask.n);
    set_mask_summary(&mut run, Some(&mask));
    Ok(run)
}

fn trim(a: TrimArgs) -> Result<Run> {
    let g = normalize_grid(&npy::read_grid(&a.input)?);
    let t = trim_extremes(&g, a.m_per_patch)?;
    let mut run = Run::new();
    run.set("m_per_patch", a.m_per_patch);
    run.outputs.add(&a.out, npy::encode_grid(&t));
    Ok(run)
}

fn prune(a: PruneArgs) -> Result<Run> {
    if a.k_bg == 0 {
        return Err(arg("--k-bg must be at least 1"));
    }
    let g = normalize_grid(&npy::read_grid(&a.input)?);
    let fg = npy::read_mask(&a.fg)?;
    let result = greedy_channel_prune(&g, &fg, a.budget, a.k_bg)?;
    let mut run = Run::new();
    run.set("dropped", result.mask.dropped.len());
    run.set("baseline_mismatch", result.error_history[0].1);
    run.set("final_mismatch", result.error_history.last().expect("baseline").1);
    if let Some(p) = &a.mask_out {
        run.outputs.add(p, mask_json(&result.mask)?);
    }
    run.report(&a.out, ReportKind::Prune, &result)?;
    Ok(run)
}

fn matching(a: MatchArgs) -> Result<Run> {
    if a.out.is_none() && a.json_out.is_none() && a.best_out.is_none() {
        return Err(arg("give at least one of --out, --json-out, --best-out"));
    }
    let source = Source::check(&a.source, false)?;
    let reference = npy::read_grid(&a.reference)?;
    let tgt = npy::read_grid(&a.tgt)?;
    let mask = source.resolve(reference.channels())?;
    let mut run = Run::new();
    if let Some(fg_path) = &a.fg {
        let fg = npy::read_mask(fg_path)?;
        let map = foreground_similarity_map(&reference, &fg, &tgt, aggregator(a.aggregator), mask.as_ref())?;
        if let Some(p) = &a.out {
            run.outputs.add(p, npy::encode_map(map.height, map.width, &map.scores));
        }
        if let Some(p) = &a.json_out {
            run.report(p, ReportKind::Similarity, &map)?;
        }
        let max = map.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        run.set("max_score", max);
    }
    if let Some(p) = &a.best_out {
        let best = best_match_map(&tgt, &reference, mask.as_ref(), false)?;
        run.report(p, ReportKind::BestMatch, &best)?;
    }
    set_mask_summary(&mut run, mask.as_ref());
    Ok(run)
}

fn read_similarity(path: &Path) -> Result<SimilarityMap> {
    let (h, w, scores) = npy::read_map(path)?;
    SimilarityMap::new(h, w, scores)
}

fn prompts(a: PromptsArgs) -> Result<Run> {
    if a.k == 0 {
        return Err(arg("--k must be at least 1"));
    }
    check_finite("tau", a.tau)?;
    let map = read_similarity(&a.map)?;
    let set = extract_prompts(&map, a.k, a.min_separation, a.tau);
    let mut run = Run::new();
    run.set("points", set.points.len());
    run.set("has_box", set.bbox.is_some());
    run.report(&a.out, ReportKind::Prompts, &set)?;
    Ok(run)
}

fn segment(a: SegmentArgs) -> Result<Run> {
    check_finite("tau", a.tau)?;
    let map = read_similarity(&a.map)?;
    let mask = proxy_segment(&map, a.tau);
    let mut run = Run::new();
    run.set("foreground", mask.count_ones());
    run.outputs.add(&a.out, npy::encode_mask(&mask));
    Ok(run)
}

fn iou_cmd(a: IouArgs) -> Result<Run> {
    let pred = npy::read_mask(&a.pred)?;
    let gt = npy::read_mask(&a.gt)?;
    let value = iou(&pred, &gt)?;
    let mut run = Run::new();
    run.set("iou", value);
    if let Some(p) = &a.out {
        let mut text = to_canonical_json(&json!({ "iou": value }))?;
        text.push('\n');
        run.outputs.add(p, text);
    }
    Ok(run)
}

fn mismatch(a: MismatchArgs) -> Result<Run> {
    let source = Source::check(&a.source, false)?;
    let g = npy::read_grid(&a.input)?;
    let fg = npy::read_mask(&a.fg)?;
    let mask = source.resolve(g.channels())?;
    let report = mismatch_report(&g, &fg, mask.as_ref())?;
    let mut payload = serde_json::to_value(&report)?;
    payload["mismatch_rate"] = json!(report.mismatch_rate());
    payload["mask"] = serde_json::to_value(&mask)?;
    let mut run = Run::new();
    run.set("mismatch_count", report.mismatch_count);
    run.set("total_fg", report.total_fg);
    run.set("image_flagged", report.image_flagged);
    set_mask_summary(&mut run, mask.as_ref());
    run.report(&a.out, ReportKind::Mismatch, payload)?;
    Ok(run)
}

fn diagnose(a: DiagnoseArgs) -> Result<Run> {
    for (name, v) in [("kappa", a.kappa), ("nu", a.nu)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(arg(format!("--{name} must be finite and non-negative")));
        }
    }
    if a.max_thresholds.iter().chain(&a.var_thresholds).any(|t| !t.is_finite()) {
        return Err(arg("thresholds must be finite"));
    }
    let diags = a
        .inputs
        .iter()
        .map(|p| channel_diagnostics(&normalize_grid(&npy::read_grid(p)?), a.kappa, a.nu))
        .collect::<Result<Vec<_>>>()?;

    let dominant_images = diags.iter().filter(|d| d.dominant_patch_count > 0).count();
    let submerged_images = diags.iter().filter(|d| d.submergence_flag).count();
    let mut run = Run::new();
    run.set("images", diags.len());
    run.set("dominant_images", dominant_images);
    run.set("submerged_images", submerged_images);

    let payload = if diags.len() == 1 {
        let d = &diags[0];
        run.set("dominant_patch_count", d.dominant_patch_count);
        run.set("submergence_flag", d.submergence_flag);
        serde_json::to_value(d)?
    } else {
        let images = a
            .inputs
            .iter()
            .zip(&diags)
            .map(|(p, d)| {
                let mut v = serde_json::to_value(d)?;
                v["source"] = json!(p.display().to_string());
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        json!({
            "images": images,
            "image_count": diags.len(),
            "dominant_image_count": dominant_images,
            "submerged_image_count": submerged_images,
            "kappa": a.kappa,
            "nu": a.nu,
        })
    };
    run.report(&a.out, ReportKind::Diagnostics, payload)?;

    if let Some(p) = &a.max_hist_out {
        let maxes: Vec<f64> = diags.iter().map(|d| d.image_max_abs()).collect();
        run.outputs.add(p, threshold_counts(&maxes, &a.max_thresholds, Direction::Above).render());
    }
    if let Some(p) = &a.var_hist_out {
        let vars: Vec<f64> = diags.iter().map(|d| d.mean_variance).collect();
        run.outputs.add(p, threshold_counts(&vars, &a.var_thresholds, Direction::Below).render());
    }
    Ok(run)
}

fn interaction(a: InteractionArgs) -> Result<Run> {
    let query: InteractionQuery = read_json(&a.query)?;
    let omega = interaction_strength(&query)?;
    let z = aggregated_weights(&query)?;
    let mut run = Run::new();
    run.set("units", omega.len());
    run.report(
        &a.out,
        ReportKind::Interaction,
        json!({
            "omega": omega,
            "aggregated_weights": z,
            "interaction": query.interaction,
            "aggregator": query.aggregator,
        }),
    )?;
    Ok(run)
}

fn synth(a: SynthArgs) -> Result<Run> {
    let seed = require_seed(a.seed, "for synth")?;
    if a.count == 0 {
        return Err(arg("--count must be at least 1"));
    }
    let spec_for = |i: usize| SynthSpec {
        height: a.height,
        width: a.width,
        channels: a.channels,
        fg_fraction: a.fg_fraction,
        margin: a.margin,
        noise_sigma: a.noise_sigma,
        noise_channel: a.noise_channel,
        dominant_value: a.dominant_value,
        nubble_fraction: a.nubble_fraction,
        seed: seed.wrapping_add(i as u64),
    };
    spec_for(0).validate()?;

    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let mut run = Run::new();
    let mut manifest = InstanceManifest::default();
    for i in 0..a.count {
        let inst = synth_clusters(&spec_for(i))?;
        let name = |part: &str| PathBuf::from(format!("inst{i:03}_{part}.npy"));
        let paths = InstancePaths {
            reference: name("ref"),
            fg: name("fg"),
            target: name("tgt"),
            target_gt: name("tgt_gt"),
        };
        run.outputs.add(&a.out_dir.join(&paths.reference), npy::encode_grid(&inst.reference));
        run.outputs.add(&a.out_dir.join(&paths.fg), npy::encode_mask(&inst.fg));
        run.outputs.add(&a.out_dir.join(&paths.target), npy::encode_grid(&inst.target));
        run.outputs.add(&a.out_dir.join(&paths.target_gt), npy::encode_mask(&inst.target_gt));
        manifest.instances.push(paths);
    }
    let mut text = to_canonical_json(&manifest)?;
    text.push('\n');
    run.outputs.add(&a.out_dir.join("manifest.json"), text);
    run.set("instances", a.count);
    Ok(run)
}

struct Experiment {
    instances: Vec<MatchInstance>,
    strategy: Arc<dyn DropStrategy>,
    seed: u64,
    metric: MetricConfig,
}

fn metric_config(e: &ExperimentArgs) -> MetricConfig {
    MetricConfig {
        kind: match e.metric {
            MetricArg::ProxyIou => MetricKind::ProxyIou,
            MetricArg::MismatchRate => MetricKind::MismatchRate,
            MetricArg::PromptHitRate => MetricKind::PromptHitRate,
        },
        tau: e.tau,
        aggregator: aggregator(e.aggregator),
        prompt_k: e.k,
        min_separation: e.min_separation,
    }
}

fn experiment(e: &ExperimentArgs) -> Result<Experiment> {
    if e.trials == 0 {
        return Err(arg("--trials must be at least 1"));
    }
    check_finite("tau", e.tau)?;
    if e.k == 0 {
        return Err(arg("--k must be at least 1"));
    }
    if e.k_bg == 0 {
        return Err(arg("--k-bg must be at least 1"));
    }
    let mut registry = StrategyRegistry::with_builtins();
    registry.replace(Arc::new(GreedyPrune { k_bg: e.k_bg }));
    let strategy = registry.get(&e.strategy)?;
    let seed = if strategy.randomized() {
        require_seed(e.seed, &format!("for strategy '{}'", strategy.name()))?
    } else {
        e.seed.unwrap_or(0)
    };
    let manifest = InstanceManifest::read(&e.manifest)?;
    let base = e.manifest.parent().unwrap_or(Path::new("."));
    let instances = manifest.load(base)?;
    if instances.is_empty() {
        return Err(arg("manifest lists no instances"));
    }
    Ok(Experiment {
        instances,
        strategy,
        seed,
        metric: metric_config(e),
    })
}

fn sweep(a: SweepArgs) -> Result<Run> {
    if a.ratios.is_empty() {
        return Err(arg("--ratios is empty"));
    }
    for &r in &a.ratios {
        check_ratio("ratios", r)?;
    }
    let ex = experiment(&a.experiment)?;
    let config = SweepConfig {
        ratios: a.ratios.clone(),
        trials: a.experiment.trials,
        seed: ex.seed,
        metric: ex.metric,
    };
    let records = run_trials(&ex.instances, &config, ex.strategy.as_ref())?;
    let baseline = baseline_metrics(&ex.instances, &ex.metric)?;
    let result = summarize_trials(&records, &config, &baseline);

    let mut run = Run::new();
    run.outputs.add(&a.out, result.to_csv());
    if let Some(p) = &a.trials_out {
        let mut table = CsvTable::new(&["ratio", "trial", "instance", "seed", "metric", "dropped"]);
        for r in &records {
            let dropped = r.mask.as_ref().map_or(String::new(), |m| {
                m.dropped.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
            });
            table.push(&[
                Cell::Float(r.ratio),
                Cell::Int(r.trial as u64),
                Cell::Int(r.instance as u64),
                Cell::Int(r.seed),
                Cell::Float(r.metric),
                Cell::Text(&dropped),
            ]);
        }
        run.outputs.add(p, table.render());
    }
    run.set("rows", result.rows.len());
    run.set("instances", ex.instances.len());
    run.set("strategy", ex.strategy.name());
    run.set("metric", ex.metric.kind.as_str());
    run.set("baseline", result.rows[0].baseline_metric);
    Ok(run)
}

fn curve(a: CurveArgs) -> Result<Run> {
    check_ratio("ratio", a.ratio)?;
    let ex = experiment(&a.experiment)?;
    let result = run_cumulative_curve(
        &ex.instances,
        a.ratio,
        a.experiment.trials,
        ex.seed,
        &ex.metric,
        ex.strategy.as_ref(),
    )?;
    let mut run = Run::new();
    run.outputs.add(&a.out, result.to_csv());
    run.set("rows", result.rows.len());
    run.set("strategy", ex.strategy.name());
    run.set("metric", ex.metric.kind.as_str());
    run.set(
        "mean_improvement",
        result.rows.last().map_or(0.0, |r| r.mean_improvement),
    );
    Ok(run)
}
