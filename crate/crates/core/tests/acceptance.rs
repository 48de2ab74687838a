//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use forensic_fusion::agent::{
    majority_of_labels, GuidelineSet, Pipeline, PipelineConfig, PipelineParts, ScriptedClient,
};
use forensic_fusion::benchmark::{
    conflict_vector, format_coverage, stratified_sample, target_size, BenchmarkManifest,
    ConflictVector, PoolEntry, StratPlan,
};
use forensic_fusion::calibration::{
    brier_score, build_expert_profile, expected_calibration_error, pava, CalibrationModel,
    LabeledScore, DEFAULT_ECE_BINS,
};
use forensic_fusion::clustering::{
    davies_bouldin, kmeans_fit, select_k, silhouette_score, KChoice, ReliabilitySample,
};
use forensic_fusion::domain::{hash_content, hash_file, Label, Modality, Sample, DEFAULT_THRESHOLD};
use forensic_fusion::experts::{
    register_expert, AdapterSpec, ExpertAdapter, ExpertRegistration, PanelConfig, ProfileData,
    ReplayAdapter,
};
use forensic_fusion::profiling::{build_profiles, write_profiles, ProfileBuildOptions, ScoreTable};
use forensic_fusion::report::{emit, ReportFormat};
use forensic_fusion::simulator::{
    generate_panel, PanelSpec, SimExpert, SimModality, SimSemantic, SimulatedPanel,
};
use forensic_fusion::store::ProfileStore;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

// ---------------------------------------------------------------------------
// Simulator and pipeline helpers

fn experts(acc: &[&[f64]], gammas: &[f64]) -> Vec<SimExpert> {
    acc.iter()
        .zip(gammas)
        .enumerate()
        .map(|(i, (a, g))| SimExpert {
            expert_id: format!("e{i}"),
            gamma: *g,
            accuracy: a.to_vec(),
            desc_text: format!("simulated detector {i}"),
        })
        .collect()
}

fn clip(clusters: usize, dim: usize) -> Vec<SimModality> {
    vec![SimModality {
        modality: Modality::Clip,
        clusters,
        dim,
        separation: 8.0,
    }]
}

/// Regime 0 favours e0/e1, regime 1 favours e2/e3.
fn two_regime(samples: usize, seed: u64) -> PanelSpec {
    PanelSpec {
        experts: experts(
            &[&[0.95, 0.45], &[0.90, 0.40], &[0.45, 0.95], &[0.40, 0.90]],
            &[1.0, 2.0, 0.5, 1.5],
        ),
        contexts: 2,
        context_weights: None,
        modalities: clip(2, 6),
        fake_fraction: 0.5,
        samples,
        seed,
        semantic: SimSemantic::default(),
        datasets: vec!["sim".into()],
        id_prefix: "tr".into(),
    }
}

/// Each expert is strong except in its own blind-spot context; a rare fifth
/// context is hard for everyone.
fn blind_spot(samples: usize, seed: u64) -> PanelSpec {
    let acc: Vec<Vec<f64>> = (0..4)
        .map(|i| {
            let mut a: Vec<f64> = (0..4).map(|c| if c == i { 0.30 } else { 0.97 }).collect();
            a.push(0.5);
            a
        })
        .collect();
    let refs: Vec<&[f64]> = acc.iter().map(Vec::as_slice).collect();
    PanelSpec {
        experts: experts(&refs, &[1.0, 1.5, 0.7, 2.0]),
        contexts: 5,
        context_weights: Some(vec![0.24, 0.24, 0.24, 0.24, 0.04]),
        modalities: clip(5, 8),
        fake_fraction: 0.5,
        samples,
        seed,
        semantic: SimSemantic::default(),
        datasets: vec!["sim".into()],
        id_prefix: "bs".into(),
    }
}

fn panel_config(ids: &[String]) -> PanelConfig {
    let mut panel = PanelConfig::new();
    for id in ids {
        panel
            .add(ExpertRegistration::new(
                id.clone(),
                AdapterSpec::Replay {
                    manifest: format!("scores-{id}.jsonl").into(),
                },
                format!("simulated detector {id}"),
            ))
            .expect("unique ids");
    }
    panel
}

fn score_table(sim: &SimulatedPanel, ids: &[String]) -> ScoreTable {
    ids.iter()
        .map(|id| (id.clone(), sim.score_map(id).expect("simulated expert")))
        .collect()
}

fn adapters(sim: &SimulatedPanel, ids: &[String]) -> Vec<Box<dyn ExpertAdapter>> {
    ids.iter()
        .map(|id| Box::new(ReplayAdapter::new(id.clone(), sim.score_map(id).expect("expert"))) as Box<dyn ExpertAdapter>)
        .collect()
}

struct Profiles {
    expert: BTreeMap<String, forensic_fusion::calibration::ExpertProfile>,
    clustering: BTreeMap<Modality, forensic_fusion::clustering::ClusteringProfile>,
}

fn pipeline(sim: &SimulatedPanel, panel: PanelConfig, profiles: Profiles, config: PipelineConfig) -> Result<Pipeline, String> {
    let ids = panel.signal_ids();
    Pipeline::new(PipelineParts {
        guidelines: GuidelineSet::builtin(),
        adapters: adapters(sim, &ids),
        panel,
        expert_profiles: profiles.expert,
        clustering_profiles: profiles.clustering,
        features: sim.features.clone(),
        vision: Some(Box::new(ScriptedClient::from_records(sim.semantic_transcript()))),
        text: None,
        config,
    })
    .map_err(e)
}

fn build(
    sim: &SimulatedPanel,
    ids: &[String],
    train: &forensic_fusion::domain::DatasetManifest,
    val: &forensic_fusion::domain::DatasetManifest,
    k: usize,
    expert_profiles: bool,
    seed: u64,
) -> Result<Profiles, String> {
    let mut opts = ProfileBuildOptions {
        expert_profiles,
        ..ProfileBuildOptions::default()
    };
    opts.clustering.k = KChoice::Fixed(k);
    opts.clustering.seed = seed;
    let built = build_profiles(&panel_config(ids), train, val, &score_table(sim, ids), &sim.features, &opts).map_err(e)?;
    Ok(Profiles {
        expert: built.expert_profiles,
        clustering: built.clustering_profiles,
    })
}

fn pool_of(sim: &SimulatedPanel, samples: &[Sample], ids: &[String]) -> Result<Vec<PoolEntry>, String> {
    samples
        .iter()
        .map(|s| {
            let k = sim.index_of(&s.id).expect("simulated sample");
            let scores: Vec<f64> = ids.iter().map(|id| sim.scores[id][k]).collect();
            Ok(PoolEntry {
                sample: s.clone(),
                conflict: conflict_vector(&scores, s.ground_truth, DEFAULT_THRESHOLD).map_err(e)?,
            })
        })
        .collect()
}

fn accuracy(p: &Pipeline, samples: &[Sample]) -> Result<f64, String> {
    let mut correct = 0usize;
    for s in samples {
        let r = p.run(s).map_err(e)?;
        correct += usize::from(r.verdict.label == s.ground_truth);
    }
    Ok(correct as f64 / samples.len() as f64)
}

// ---------------------------------------------------------------------------
// Criteria

fn c1_calibration_exactness() -> Outcome {
    let labels = [Label::Real, Label::Fake, Label::Fake, Label::Fake];
    let ece = expected_calibration_error(&[0.2, 0.3, 0.8, 0.9], &labels, 2).map_err(e)?.ece;
    check((ece - 0.2).abs() <= 1e-12, format!("ECE {ece}"))?;
    let brier = brier_score(&[0.8, 0.3], &[Label::Fake, Label::Real]).map_err(e)?;
    check((brier - 0.065).abs() <= 1e-12, format!("Brier {brier}"))?;
    let t = CalibrationModel::Temperature { t: 2.0 }.apply(0.9).map_err(e)?;
    check((t - 0.75).abs() <= 1e-12, format!("temperature {t}"))?;
    let fit = pava(&[0.0, 1.0, 0.0, 1.0], None);
    check(fit == vec![0.0, 0.5, 0.5, 1.0], format!("PAVA {fit:?}"))?;
    Ok(format!("ECE={ece} Brier={brier} T-apply={t} PAVA={fit:?}"))
}

fn c2_selection_oracle() -> Outcome {
    let spec = PanelSpec {
        experts: experts(&[&[0.85], &[0.85], &[0.85]], &[0.5, 1.0, 3.0]),
        contexts: 1,
        context_weights: None,
        modalities: clip(2, 4),
        fake_fraction: 0.5,
        samples: 5000,
        seed: 11,
        semantic: SimSemantic::default(),
        datasets: vec!["sim".into()],
        id_prefix: "cal".into(),
    };
    let sim = generate_panel(&spec).map_err(e)?;
    let (train, val, _) = sim.split(2500, 2500).map_err(e)?;
    let mut worst_gain = f64::INFINITY;
    for id in spec.expert_ids() {
        let scores = sim.score_map(&id).expect("expert");
        let ls = |m: &forensic_fusion::domain::DatasetManifest| -> Vec<LabeledScore> {
            m.samples().iter().map(|s| LabeledScore::new(s.id.clone(), scores[&s.id], s.ground_truth)).collect()
        };
        let p = build_expert_profile(&id, "", &ls(&train), &ls(&val), DEFAULT_ECE_BINS).map_err(e)?;
        let selected = p.ece().ok_or("no selected ECE")?;
        let raw = p.raw_metrics.as_ref().ok_or("no raw metrics")?.ece;
        check(selected <= raw, format!("{id}: selected {selected} > raw {raw}"))?;
        for c in &p.candidates {
            check(selected <= c.ece + 1e-12, format!("{id}: {} beats selection", c.method))?;
        }
        worst_gain = worst_gain.min(raw - selected);
    }
    Ok(format!("3 experts; min raw-minus-selected ECE {worst_gain:.4}"))
}

/// Exhaustive least-squares monotone fit over every contiguous partition.
fn brute_isotonic_sse(y: &[f64]) -> f64 {
    let n = y.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << (n - 1)) {
        let mut blocks = Vec::new();
        let mut start = 0;
        for i in 0..n {
            if i == n - 1 || mask & (1 << i) != 0 {
                blocks.push(&y[start..=i]);
                start = i + 1;
            }
        }
        let means: Vec<f64> = blocks.iter().map(|b| b.iter().sum::<f64>() / b.len() as f64).collect();
        if means.windows(2).any(|w| w[0] > w[1]) {
            continue;
        }
        let sse: f64 = blocks
            .iter()
            .zip(&means)
            .map(|(b, m)| b.iter().map(|v| (v - m).powi(2)).sum::<f64>())
            .sum();
        best = best.min(sse);
    }
    best
}

fn c3_pava_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut max_gap = 0.0f64;
    for case in 0..200 {
        let n = rng.random_range(1..=8);
        let y: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.3) { f64::from(rng.random_range(0u8..2)) } else { rng.random::<f64>() })
            .collect();
        let fit = pava(&y, None);
        check(fit.windows(2).all(|w| w[0] <= w[1]), format!("case {case}: fit not monotone"))?;
        let sse: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
        let gap = (sse - brute_isotonic_sse(&y)).abs();
        check(gap <= 1e-9, format!("case {case}: PAVA {sse} vs optimum gap {gap}"))?;
        max_gap = max_gap.max(gap);
    }
    Ok(format!("200 cases, max |SSE gap| {max_gap:.2e}"))
}

fn c4_clustering_metrics() -> Outcome {
    let pts: Vec<Vec<f64>> = [0.0, 1.0, 10.0, 11.0].iter().map(|x| vec![*x]).collect();
    let labels = [0, 0, 1, 1];
    let sil = silhouette_score(&pts, &labels).map_err(e)?;
    check((sil - 0.89975).abs() <= 1e-6, format!("silhouette {sil}"))?;
    let db = davies_bouldin(&pts, &labels).map_err(e)?;
    check((db - 0.1).abs() <= 1e-9, format!("Davies-Bouldin {db}"))?;
    let curve: Vec<(usize, f64)> = [100.0, 40.0, 20.0, 15.0, 12.0].iter().enumerate().map(|(i, v)| (i + 1, *v)).collect();
    let k = select_k(&curve).map_err(e)?;
    check(k == 2, format!("select_k chose {k}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut fits = 0;
    for trial in 0..60u64 {
        let n = rng.random_range(8..200);
        let dim = rng.random_range(1..6);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>() * 10.0).collect()).collect();
        for k in 1..=6.min(n) {
            let fit = kmeans_fit(&points, k, trial).map_err(e)?;
            check(
                fit.inertia_history.windows(2).all(|w| w[1] <= w[0]),
                format!("trial {trial} k={k}: inertia rose"),
            )?;
            fits += 1;
        }
    }
    Ok(format!("silhouette={sil:.6} DB={db} K={k}; {fits} fits monotone"))
}

fn c5_cluster_reliability_oracle() -> Outcome {
    let mut hits = 0;
    for trial in 0..20u64 {
        let spec = two_regime(2400, 500 + trial);
        let sim = generate_panel(&spec).map_err(e)?;
        let (train, val, _) = sim.split(1200, 1200).map_err(e)?;
        let ids = spec.expert_ids();
        let prof = build(&sim, &ids, &train, &val, 2, true, trial)?;
        let cp = &prof.clustering[&Modality::Clip];
        // Map each cluster to the regime most of its training members share.
        let mut votes = vec![[0usize; 2]; cp.model.k()];
        for s in train.samples() {
            let c = cp.assign(sim.features.get(&s.id, Modality::Clip).expect("feature")).map_err(e)?;
            votes[c][sim.truth[sim.index_of(&s.id).expect("sample")].context] += 1;
        }
        let ok = votes.iter().enumerate().all(|(c, v)| {
            let regime = usize::from(v[1] > v[0]);
            let want = if regime == 0 { "e0" } else { "e2" };
            cp.cluster(c).is_some_and(|r| r.ranking.first().map(String::as_str) == Some(want))
        });
        hits += usize::from(ok);
    }
    let rate = hits as f64 / 20.0;
    check(rate >= 0.95, format!("{hits}/20 trials matched"))?;
    Ok(format!("{hits}/20 trials top-ranked the regime argmax"))
}

fn synthetic_pool(per_cell_dataset: impl Fn(u64, usize) -> usize, datasets: usize) -> Vec<PoolEntry> {
    let mut pool = Vec::new();
    for cell in 0..32u64 {
        for d in 0..datasets {
            for n in 0..per_cell_dataset(cell, d) {
                let cv = ConflictVector::from_cell(cell, 4).expect("cell");
                let id = format!("c{cell}-d{d}-{n}");
                pool.push(PoolEntry {
                    sample: Sample {
                        id: id.clone(),
                        source_dataset: format!("ds{d}"),
                        ground_truth: cv.gt,
                        content_hash: hash_content(id.as_bytes()),
                        feature_refs: BTreeMap::new(),
                        image_locator: None,
                    },
                    conflict: cv,
                });
            }
        }
    }
    pool
}

fn c6_protocol_reproduction() -> Outcome {
    let target = target_size(4, 7, 15).map_err(e)?;
    check(target == 3360, format!("target_size {target}"))?;
    for cell in 0..32u64 {
        let cv = ConflictVector::from_cell(cell, 4).map_err(e)?;
        check(cv.cell_index() == cell, format!("cell {cell} round trip"))?;
    }
    let plan = StratPlan {
        experts: 4,
        datasets: (0..7).map(|d| format!("ds{d}")).collect(),
        per_cell: 15,
        threshold: DEFAULT_THRESHOLD,
    };
    let saturated = synthetic_pool(|_, _| 20, 7);
    let bm = stratified_sample(&saturated, &plan, 42).map_err(e)?;
    check(bm.coverage() == 1.0, format!("saturated coverage {}", bm.coverage()))?;
    check(
        bm.cell_counts().len() == 224 && bm.cell_counts().values().all(|c| *c == 15),
        "saturated per-(cell,dataset) counts differ from 15",
    )?;
    // Cell 31 is absent and cell 30 holds 24 samples: 3360 - 105 - 81 = 3174.
    let short = synthetic_pool(|c, d| match c {
        31 => 0,
        30 => usize::from(d < 3) * 8,
        _ => 20,
    }, 7);
    let bm = stratified_sample(&short, &plan, 42).map_err(e)?;
    check(bm.header.realized_count == 3174, format!("realized {}", bm.header.realized_count))?;
    let pct = (bm.coverage() * 10_000.0).round() / 100.0;
    check(pct == 94.46, format!("coverage {pct}%"))?;
    check(bm.header.coverage_text == "94.5%", format!("coverage text {}", bm.header.coverage_text))?;
    check(format_coverage(3174, 3360) == "94.5%", "format_coverage")?;
    let dir = tempfile::tempdir().map_err(e)?;
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    stratified_sample(&short, &plan, 7).map_err(e)?.write(&a).map_err(e)?;
    stratified_sample(&short, &plan, 7).map_err(e)?.write(&b).map_err(e)?;
    check(std::fs::read(&a).map_err(e)? == std::fs::read(&b).map_err(e)?, "same seed, different bytes")?;
    BenchmarkManifest::read(&a).map_err(e)?;
    Ok(format!("target=3360 saturated=1.0 engineered=3174 ({pct}% -> {})", bm.header.coverage_text))
}

fn c7_determinism() -> Outcome {
    let spec = two_regime(700, 42);
    let sim = generate_panel(&spec).map_err(e)?;
    let (train, val, test) = sim.split(300, 300).map_err(e)?;
    let ids = spec.expert_ids();
    let cfg = PipelineConfig {
        seed: 42,
        ..PipelineConfig::default()
    };
    let dir = tempfile::tempdir().map_err(e)?;
    let mut runs = Vec::new();
    for run in 0..2 {
        let p = pipeline(&sim, panel_config(&ids), build(&sim, &ids, &train, &val, 2, true, 42)?, cfg)?;
        let out = dir.path().join(format!("run{run}"));
        std::fs::create_dir_all(&out).map_err(e)?;
        let mut labels = Vec::new();
        for s in test.samples() {
            let r = p.run(s).map_err(e)?;
            std::fs::write(out.join(format!("{}.json", s.id)), emit(&r, ReportFormat::Json).map_err(e)?).map_err(e)?;
            labels.push(r.verdict.label);
        }
        runs.push((out, labels));
    }
    check(test.len() == 100, format!("{} samples", test.len()))?;
    for s in test.samples() {
        let f = format!("{}.json", s.id);
        check(
            std::fs::read(runs[0].0.join(&f)).map_err(e)? == std::fs::read(runs[1].0.join(&f)).map_err(e)?,
            format!("{f} differs between runs"),
        )?;
    }
    let agree = runs[0].1.iter().zip(&runs[1].1).filter(|(a, b)| a == b).count();
    check(agree == 100, format!("{agree}% consistent"))?;
    Ok("100 reports byte-identical; consistency 100%".into())
}

fn c8_augmentation_invariant() -> Outcome {
    let spec = two_regime(1500, 8);
    let mut sim = generate_panel(&spec).map_err(e)?;
    let (train, val, test) = sim.split(500, 500).map_err(e)?;
    // Drop the semantic verdict for every tenth test sample.
    let dropped: Vec<String> = test.samples().iter().step_by(10).map(|s| s.id.clone()).collect();
    let ids = spec.expert_ids();
    let prof = build(&sim, &ids, &train, &val, 2, true, 8)?;
    let mut transcript = sim.semantic_transcript();
    transcript.retain(|r| !dropped.contains(&r.sample_id));
    let p = Pipeline::new(PipelineParts {
        guidelines: GuidelineSet::builtin(),
        adapters: adapters(&sim, &ids),
        panel: panel_config(&ids),
        expert_profiles: prof.expert,
        clustering_profiles: prof.clustering,
        features: std::mem::take(&mut sim.features),
        vision: Some(Box::new(ScriptedClient::from_records(transcript))),
        text: None,
        config: PipelineConfig::default(),
    })
    .map_err(e)?;
    let (mut conflicts, mut signal_only) = (0, 0);
    for s in test.samples() {
        let r = p.run(s).map_err(e)?;
        let ev = &r.evidence;
        let differ = ev.semantic.as_ref().is_some_and(|sem| sem.verdict.label != ev.experts.verdict.label);
        let augmented = ev.cluster.is_some() && ev.arbitration.is_some();
        check(differ == augmented, format!("{}: differ={differ} augmented={augmented}", s.id))?;
        check(ev.cluster.is_some() == ev.arbitration.is_some(), format!("{}: partial augmentation", s.id))?;
        let dangling = ev.dangling_citations();
        check(dangling.is_empty(), format!("{}: dangling {dangling:?}", s.id))?;
        conflicts += usize::from(differ);
        signal_only += usize::from(ev.semantic.is_none());
    }
    check(test.len() == 500, format!("{} samples", test.len()))?;
    Ok(format!("500 samples: {conflicts} conflicts, {signal_only} signal-only, 0 dangling"))
}

fn c9_fusion_dominance() -> Outcome {
    let spec = blind_spot(90_000, 9);
    let sim = generate_panel(&spec).map_err(e)?;
    let ids = spec.expert_ids();
    let (train, val, rest) = sim.split(4000, 4000).map_err(e)?;
    let prof = build(&sim, &ids, &train, &val, 5, true, 9)?;
    let p = pipeline(&sim, panel_config(&ids), prof, PipelineConfig::default())?;
    let plan = StratPlan {
        experts: 4,
        datasets: vec!["sim".into()],
        per_cell: 75,
        threshold: DEFAULT_THRESHOLD,
    };
    let pool = pool_of(&sim, rest.samples(), &ids)?;
    let bm = stratified_sample(&pool, &plan, 9).map_err(e)?;
    let cells: HashMap<&str, u64> = bm.entries.iter().map(|x| (x.sample_id.as_str(), x.cell_index)).collect();
    let mut per_signal = [0usize; 16];
    for c in cells.values() {
        per_signal[(c >> 1) as usize] += 1;
    }
    check(per_signal.iter().all(|n| *n >= 150), format!("signal cell sizes {per_signal:?}"))?;

    // [correct count] -> (agent, majority, per-expert) correct tallies and n
    let mut agent = [0usize; 5];
    let mut total = [0usize; 5];
    let mut majority = [0usize; 5];
    let mut single = [[0usize; 4]; 5];
    for s in rest.samples() {
        let Some(cell) = cells.get(s.id.as_str()) else {
            continue;
        };
        let cv = ConflictVector::from_cell(*cell, 4).map_err(e)?;
        let k = cv.correct_count();
        let r = p.run(s).map_err(e)?;
        total[k] += 1;
        agent[k] += usize::from(r.verdict.label == s.ground_truth);
        let mut votes: Vec<Label> = cv.errors.iter().map(|wrong| if *wrong { s.ground_truth.flip() } else { s.ground_truth }).collect();
        for (j, v) in votes.iter().enumerate() {
            single[k][j] += usize::from(*v == s.ground_truth);
        }
        let sem = &sim.semantic[sim.index_of(&s.id).expect("sample")];
        votes.push(sem.label);
        majority[k] += usize::from(majority_of_labels(&votes).map_err(e)?.label == s.ground_truth);
    }
    let acc = |c: usize, k: usize| c as f64 / total[k].max(1) as f64;
    let a2 = acc(agent[2], 2);
    let best_baseline = single[2]
        .iter()
        .map(|c| acc(*c, 2))
        .fold(acc(majority[2], 2), f64::max);
    check(
        a2 >= best_baseline + 0.02,
        format!("2-correct strata: agent {a2:.4} vs best baseline {best_baseline:.4}"),
    )?;
    // Conflict intensity rises as the correct count falls.
    let curve: Vec<f64> = (0..5).rev().map(|k| acc(agent[k], k)).collect();
    let inversions: Vec<f64> = curve.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    check(
        inversions.len() <= 1 && inversions.iter().all(|d| *d <= 0.01),
        format!("stratum curve {curve:?}"),
    )?;
    Ok(format!(
        "2-correct: agent {a2:.4}, majority {:.4}, experts {:?}; curve(4..0 correct) {:?}",
        acc(majority[2], 2),
        single[2].iter().map(|c| format!("{:.3}", acc(*c, 2))).collect::<Vec<_>>(),
        curve.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>()
    ))
}

fn c10_quick_integration() -> Outcome {
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let spec = blind_spot(6000, 100 + seed);
        let sim = generate_panel(&spec).map_err(e)?;
        let ids = spec.expert_ids();
        let (train, val, test) = sim.split(2000, 2000).map_err(e)?;
        let dir = tempfile::tempdir().map_err(e)?;
        let store = ProfileStore::new(dir.path());
        let mut opts = ProfileBuildOptions::default();
        opts.clustering.k = KChoice::Fixed(5);
        opts.clustering.seed = seed;
        let first = &ids[..1];
        let built = build_profiles(&panel_config(first), &train, &val, &score_table(&sim, first), &sim.features, &opts).map_err(e)?;
        write_profiles(&store, &panel_config(first), &built).map_err(e)?;
        let mut accs = Vec::new();
        for step in 1..=4 {
            if step > 1 {
                let id = &ids[step - 1];
                let scores = sim.score_map(id).expect("expert");
                let ls = |m: &forensic_fusion::domain::DatasetManifest| -> Vec<LabeledScore> {
                    m.samples().iter().map(|s| LabeledScore::new(s.id.clone(), scores[&s.id], s.ground_truth)).collect()
                };
                let (tl, vl) = (ls(&train), ls(&val));
                let new_profile = build_expert_profile(id, "", &tl, &vl, DEFAULT_ECE_BINS).map_err(e)?;
                let loaded = store.load_all().map_err(e)?;
                let mut bundle = Vec::new();
                for s in val.samples() {
                    let k = sim.index_of(&s.id).expect("sample");
                    let mut per = BTreeMap::new();
                    for (eid, p) in &loaded.expert_profiles {
                        per.insert(eid.clone(), p.calibrate(sim.scores[eid][k]).map_err(e)?);
                    }
                    per.insert(id.clone(), new_profile.calibrate(scores[&s.id]).map_err(e)?);
                    bundle.push(ReliabilitySample {
                        sample_id: s.id.clone(),
                        features: sim.features.get(&s.id, Modality::Clip).expect("feature").clone(),
                        truth: s.ground_truth,
                        scores: per,
                    });
                }
                let before: Vec<_> = ids[..step - 1]
                    .iter()
                    .map(|x| hash_file(store.expert_profile_path(x)))
                    .collect::<Result<_, _>>()
                    .map_err(e)?;
                let reg = panel_config(std::slice::from_ref(id)).experts.remove(0);
                register_expert(
                    &store,
                    reg,
                    Some(ProfileData {
                        train: &tl,
                        val: &vl,
                        bins: DEFAULT_ECE_BINS,
                    }),
                    Some(&BTreeMap::from([(Modality::Clip, bundle)])),
                )
                .map_err(e)?;
                let after: Vec<_> = ids[..step - 1]
                    .iter()
                    .map(|x| hash_file(store.expert_profile_path(x)))
                    .collect::<Result<_, _>>()
                    .map_err(e)?;
                check(before == after, format!("seed {seed}: registering {id} touched earlier profiles"))?;
            }
            let loaded = store.load_all().map_err(e)?;
            let p = pipeline(
                &sim,
                loaded.panel,
                Profiles {
                    expert: loaded.expert_profiles,
                    clustering: loaded.clustering_profiles,
                },
                PipelineConfig::default(),
            )?;
            accs.push(accuracy(&p, test.samples())?);
        }
        for (step, w) in accs.windows(2).enumerate() {
            check(
                w[1] >= w[0] - 0.005,
                format!("seed {seed}: accuracy fell from {:.4} to {:.4} at step {}->{}", w[0], w[1], step + 1, step + 2),
            )?;
        }
        lines.push(accs.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(">"));
    }
    Ok(format!("checksums stable; accuracy 1..4 experts per seed: {}", lines.join(" | ")))
}

fn c11_ablation() -> Outcome {
    // (use expert profiles, use clustering profiles)
    let variants = [(true, true), (false, true), (true, false), (false, false)];
    let names = ["both", "clustering-only", "expert-only", "none"];
    let mut sums = [0.0f64; 4];
    for seed in 0..5u64 {
        let spec = two_regime(24_000, 1100 + seed);
        let sim = generate_panel(&spec).map_err(e)?;
        let ids = spec.expert_ids();
        let (train, val, rest) = sim.split(2000, 2000).map_err(e)?;
        let plan = StratPlan {
            experts: 4,
            datasets: vec!["sim".into()],
            per_cell: 30,
            threshold: DEFAULT_THRESHOLD,
        };
        let bm = stratified_sample(&pool_of(&sim, rest.samples(), &ids)?, &plan, seed).map_err(e)?;
        let chosen: std::collections::HashSet<&str> = bm.entries.iter().map(|x| x.sample_id.as_str()).collect();
        let eval: Vec<Sample> = rest.samples().iter().filter(|s| chosen.contains(s.id.as_str())).cloned().collect();
        for (v, (use_expert, use_cluster)) in variants.iter().enumerate() {
            let prof = build(&sim, &ids, &train, &val, 2, *use_expert, seed)?;
            let cfg = PipelineConfig {
                use_expert_profiles: *use_expert,
                use_clustering_profiles: *use_cluster,
                seed,
                ..PipelineConfig::default()
            };
            sums[v] += accuracy(&pipeline(&sim, panel_config(&ids), prof, cfg)?, &eval)?;
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / 5.0).collect();
    for i in 0..3 {
        check(
            means[i] >= means[i + 1] - 0.005,
            format!("{} {:.4} < {} {:.4}", names[i], means[i], names[i + 1], means[i + 1]),
        )?;
    }
    Ok(names
        .iter()
        .zip(&means)
        .map(|(n, m)| format!("{n}={m:.4}"))
        .collect::<Vec<_>>()
        .join(" >= "))
}

fn main() {
    type Criterion = (u32, &'static str, Option<Duration>, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        (1, "calibration exactness", Some(Duration::from_secs(1)), c1_calibration_exactness),
        (2, "calibration selection oracle", Some(Duration::from_secs(30)), c2_selection_oracle),
        (3, "PAVA vs brute force", Some(Duration::from_secs(10)), c3_pava_brute_force),
        (4, "clustering metrics", Some(Duration::from_secs(5)), c4_clustering_metrics),
        (5, "cluster reliability oracle", Some(Duration::from_secs(60)), c5_cluster_reliability_oracle),
        (6, "stratified benchmark protocol", Some(Duration::from_secs(30)), c6_protocol_reproduction),
        (7, "pipeline determinism", None, c7_determinism),
        (8, "augmentation invariant", None, c8_augmentation_invariant),
        (9, "fusion dominance", Some(Duration::from_secs(300)), c9_fusion_dominance),
        (10, "quick integration", None, c10_quick_integration),
        (11, "ablation ordering", Some(Duration::from_secs(300)), c11_ablation),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, budget, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let mut outcome = f();
        let took = start.elapsed();
        if let (Ok(_), Some(b)) = (&outcome, budget) {
            if took > b {
                outcome = Err(format!("took {took:.2?}, budget {b:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS criterion {n:>2} {name} ({took:.2?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n:>2} {name} ({took:.2?}): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
