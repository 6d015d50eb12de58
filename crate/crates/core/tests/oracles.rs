//! Implementation-independent oracles: brute-force loops, path enumeration,
//! Monte Carlo frequencies and hand-checkable constructions.

mod common;

use common::*;
use nubblematch_core::diagnostics::{
    channel_diagnostics, interaction_strength, mismatch_report, InteractionAggregator, InteractionQuery,
    DEFAULT_KAPPA, DEFAULT_NU,
};
use nubblematch_core::harness::{prefix_means, run_cumulative_curve, synth_clusters, MetricConfig, SynthSpec};
use nubblematch_core::matching::{best_match_map, cosine_similarity, foreground_similarity_map, Aggregator};
use nubblematch_core::npy::{self, Tensor};
use nubblematch_core::nubble::{apply_drop, greedy_channel_prune, sample_drop_mask};
use nubblematch_core::strategy::RandomDrop;
use nubblematch_core::tensor::normalize_grid;
use rand::Rng;

#[test]
fn best_match_matches_triple_loop() {
    let mut r = rng(100);
    for _ in 0..20 {
        let t = random_grid(&mut r, 8, 8, 32);
        let g = random_grid(&mut r, 8, 8, 32);
        let got = best_match_map(&t, &g, None, false).unwrap();
        for (i, &(idx, score)) in naive_best_match(&t, &g, None, false).iter().enumerate() {
            assert_eq!(got.linear(i, 8), idx);
            assert!((got.matches[i].score - score).abs() < 1e-12);
        }
    }
}

#[test]
fn dropped_cosine_matches_skip_channel_loop() {
    let mut r = rng(101);
    for trial in 0..20 {
        let t = random_grid(&mut r, 4, 5, 24);
        let g = random_grid(&mut r, 3, 6, 24);
        let mask = sample_drop_mask(24, 0.3, trial).unwrap();
        let keep = mask.keep_flags();
        let td = apply_drop(&t, &mask).unwrap();
        let gd = apply_drop(&g, &mask).unwrap();
        for i in 0..t.len() {
            for j in 0..g.len() {
                let s = cosine_similarity(td.patch(i), gd.patch(j)).unwrap();
                let oracle = naive_cosine(t.patch(i), g.patch(j), Some(&keep));
                assert!((s - oracle).abs() < 1e-12);
            }
        }
        let got = best_match_map(&t, &g, Some(&mask), false).unwrap();
        for (i, &(idx, score)) in naive_best_match(&t, &g, Some(&keep), false).iter().enumerate() {
            assert_eq!(got.linear(i, 6), idx);
            assert!((got.matches[i].score - score).abs() < 1e-12);
        }
    }
}

#[test]
fn self_excluding_best_match_matches_loop() {
    let mut r = rng(102);
    let g = random_grid(&mut r, 6, 7, 16);
    let got = best_match_map(&g, &g, None, true).unwrap();
    for (i, &(idx, _)) in naive_best_match(&g, &g, None, true).iter().enumerate() {
        assert_eq!(got.linear(i, 7), idx);
        assert_ne!(idx, i);
    }
}

#[test]
fn fg_map_matches_brute_force() {
    let mut r = rng(103);
    for _ in 0..20 {
        let g = random_grid(&mut r, 8, 8, 32);
        let fg = random_mask(&mut r, 8, 8);
        let t = random_grid(&mut r, 8, 8, 32);
        for (agg, mean) in [(Aggregator::Max, false), (Aggregator::Mean, true)] {
            let got = foreground_similarity_map(&g, &fg, &t, agg, None).unwrap();
            for (a, b) in got.scores.iter().zip(naive_fg_map(&g, &fg, &t, mean)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

fn path_sum(q: &InteractionQuery, layer: usize, unit: usize) -> f64 {
    // layer is 0-based into weight_matrices; unit lives in that matrix's output
    if layer + 1 == q.weight_matrices.len() {
        return q.output_weights[unit].abs();
    }
    let next = &q.weight_matrices[layer + 1];
    (0..next.len())
        .map(|v| next[v][unit].abs() * path_sum(q, layer + 1, v))
        .sum()
}

fn random_query(r: &mut rand_chacha::ChaCha8Rng) -> InteractionQuery {
    let layers = r.random_range(1..=3);
    let mut widths = vec![r.random_range(1..=8)];
    for _ in 0..layers {
        widths.push(r.random_range(1..=8));
    }
    let weight_matrices = (0..layers)
        .map(|l| {
            (0..widths[l + 1])
                .map(|_| (0..widths[l]).map(|_| r.random_range(-2.0..2.0)).collect())
                .collect()
        })
        .collect();
    let output_weights = (0..widths[layers]).map(|_| r.random_range(-2.0..2.0)).collect();
    let mut interaction: Vec<usize> = (0..widths[0]).filter(|_| r.random_bool(0.5)).collect();
    if interaction.is_empty() {
        interaction.push(0);
    }
    InteractionQuery {
        weight_matrices,
        output_weights,
        interaction,
        aggregator: if r.random_bool(0.5) {
            InteractionAggregator::Mean
        } else {
            InteractionAggregator::Min
        },
    }
}

#[test]
fn interaction_matches_path_enumeration() {
    let mut r = rng(104);
    for _ in 0..50 {
        let q = random_query(&mut r);
        let got = interaction_strength(&q).unwrap();
        for (i, w) in got.iter().enumerate() {
            let mags: Vec<f64> = q.interaction.iter().map(|&j| q.weight_matrices[0][i][j].abs()).collect();
            let mu = match q.aggregator {
                InteractionAggregator::Mean => mags.iter().sum::<f64>() / mags.len() as f64,
                InteractionAggregator::Min => mags.iter().cloned().fold(f64::INFINITY, f64::min),
            };
            let expected = path_sum(&q, 0, i) * mu;
            assert!((w - expected).abs() < 1e-12, "{w} vs {expected}");
        }
    }
}

#[test]
fn drop_masks_deterministic_and_seed_sensitive() {
    let a = sample_drop_mask(1024, 0.1, 42).unwrap();
    assert_eq!(a, sample_drop_mask(1024, 0.1, 42).unwrap());
    let differing = (0..100u64)
        .filter(|&s| {
            sample_drop_mask(1024, 0.1, 2 * s).unwrap().dropped
                != sample_drop_mask(1024, 0.1, 2 * s + 1).unwrap().dropped
        })
        .count();
    assert!(differing >= 99, "{differing}");
}

#[test]
fn drop_inclusion_is_uniform() {
    // each channel is kept out with probability m / n
    let (n, ratio, trials) = (20usize, 0.25, 4000u64);
    let mut hits = vec![0usize; n];
    for s in 0..trials {
        for c in sample_drop_mask(n, ratio, s).unwrap().dropped {
            hits[c] += 1;
        }
    }
    let p = 5.0 / 20.0;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    for h in hits {
        let freq = h as f64 / trials as f64;
        assert!((freq - p).abs() < 4.0 * sigma, "{freq}");
    }
}

#[test]
fn npy_round_trips_random_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(105);
    for i in 0..100 {
        let (h, w, c) = (r.random_range(1..6), r.random_range(1..6), r.random_range(1..9));
        let g = random_grid(&mut r, h, w, c);
        let path = dir.path().join(format!("g{i}.npy"));
        npy::write_tensor(&Tensor::Grid(g.clone()), &path).unwrap();
        let back = npy::read_grid(&path).unwrap();
        let bits = |g: &nubblematch_core::FeatureGrid| g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&g));
        assert_eq!(npy::encode_grid(&back), std::fs::read(&path).unwrap());
    }
}

#[test]
fn curve_rows_are_prefix_means() {
    let insts: Vec<_> = (0..6)
        .map(|s| {
            synth_clusters(&SynthSpec {
                height: 6,
                width: 6,
                channels: 24,
                fg_fraction: 0.3,
                margin: 0.8,
                noise_sigma: 0.03,
                noise_channel: Some(2),
                dominant_value: 4.0,
                nubble_fraction: 0.05,
                seed: s,
            })
            .unwrap()
        })
        .collect();
    let curve = run_cumulative_curve(&insts, 0.2, 10, 4, &MetricConfig::default(), &RandomDrop).unwrap();
    for (n, row) in curve.rows.iter().enumerate() {
        let mut sum = 0.0;
        for v in &curve.improvements[..=n] {
            sum += v;
        }
        assert_eq!(row.mean_improvement, sum / (n + 1) as f64);
        assert_eq!(row.n_instances, n + 1);
    }
    assert_eq!(prefix_means(&[1.0, 3.0]), vec![1.0, 2.0]);

    let flat = run_cumulative_curve(&insts, 0.0, 3, 4, &MetricConfig::default(), &RandomDrop).unwrap();
    assert!(flat.improvements.iter().all(|&v| v == 0.0));
}

fn nubble_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        height: 8,
        width: 8,
        channels: 32,
        fg_fraction: 0.3,
        margin: 0.8,
        noise_sigma: 0.02,
        noise_channel: Some(3),
        dominant_value: 4.0,
        nubble_fraction: 0.05,
        seed,
    }
}

#[test]
fn clean_synth_has_no_mismatch() {
    let mut spec = nubble_spec(9);
    spec.noise_sigma = 0.0;
    spec.noise_channel = None;
    let inst = synth_clusters(&spec).unwrap();
    assert_eq!(mismatch_report(&inst.reference, &inst.fg, None).unwrap().mismatch_count, 0);
}

#[test]
fn injected_channel_is_dominant() {
    let inst = synth_clusters(&nubble_spec(10)).unwrap();
    let d = channel_diagnostics(&inst.reference, DEFAULT_KAPPA, DEFAULT_NU).unwrap();
    assert!(d.dominant_patch_count >= 1);
    for p in 0..inst.reference.len() {
        if d.is_dominant(p) {
            assert!(inst.reference.patch(p)[3].abs() > 0.5);
        }
    }
}

#[test]
fn greedy_drops_injected_channel_first() {
    for seed in 0..5 {
        let inst = synth_clusters(&nubble_spec(seed)).unwrap();
        let r = greedy_channel_prune(&inst.reference, &inst.fg, 1, 64).unwrap();
        assert!(r.error_history[0].1 > 0);
        assert_eq!(r.mask.dropped, vec![3]);
        assert_eq!(r.error_history[1], (1, 0));
    }
}

#[test]
fn greedy_on_clean_grid_keeps_zero_history() {
    let mut spec = nubble_spec(11);
    spec.noise_channel = None;
    let inst = synth_clusters(&spec).unwrap();
    let r = greedy_channel_prune(&inst.reference, &inst.fg, 3, 4).unwrap();
    assert_eq!(r.error_history.len(), 4);
    assert!(r.error_history.iter().all(|&(_, c)| c == 0));
    assert_eq!(r.mask.dropped.len(), 3);
}

#[test]
fn greedy_baseline_agrees_with_mismatch_report() {
    let mut r = rng(106);
    for _ in 0..10 {
        let g = normalize_grid(&random_grid(&mut r, 5, 5, 8));
        let fg = random_mask(&mut r, 5, 5);
        let full = greedy_channel_prune(&g, &fg, 0, 25).unwrap();
        let report = mismatch_report(&g, &fg, None).unwrap();
        assert_eq!(full.error_history, vec![(0, report.mismatch_count)]);
    }
}
