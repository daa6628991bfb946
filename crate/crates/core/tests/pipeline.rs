//! Offline pipeline and suite plumbing, end to end on small houses.

use std::collections::HashMap;

use sea_core::atlas::{Atlas, SceneSummary};
use sea_core::features::PlaceModel;
use sea_core::harness::{
    atlas_from_logs, collect_place_samples, prepare, random_walk, report_from_rows, run_suite, sgm_from_log, train_place_model,
    ClusterTrainConfig, ExploreLog, Scene, SuiteConfig, Variant,
};
use sea_core::rng::stream;
use sea_core::rng::streams;
use sea_core::simworld::{FeatureBank, HouseConfig, NoiseModel};
use sea_core::{EpisodeFlags, SemanticGraphMap};

struct Built {
    scenes: HashMap<u64, Scene>,
    logs: Vec<ExploreLog>,
    place: PlaceModel,
}

fn build(seeds: &[u64], per_scene: usize) -> Built {
    let bank = FeatureBank::standard();
    let house = HouseConfig::default();
    let mut scenes = HashMap::new();
    let mut logs = Vec::new();
    for &s in seeds {
        let sc = Scene::generate(s, &house, &bank).unwrap();
        let mut rng = stream(s, streams::EPISODE);
        for k in 0..per_scene {
            let start = sc.world.random_free_pose(&mut rng);
            logs.push(random_walk(&sc.world, &sc.features, start, s * 100 + k as u64, 200, NoiseModel::default()).unwrap());
        }
        scenes.insert(s, sc);
    }
    let samples: Vec<_> = logs
        .iter()
        .flat_map(|l| {
            let sc = &scenes[&l.scene_seed];
            collect_place_samples(&sc.world, &sc.features, l, 5).unwrap()
        })
        .collect();
    let place = train_place_model(&samples, &ClusterTrainConfig::default()).unwrap();
    Built { scenes, logs, place }
}

fn atlas_of(b: &Built, logs: &[ExploreLog]) -> (Atlas, sea_core::harness::AtlasBuildReport) {
    atlas_from_logs(logs, |s| b.scenes.get(&s).map(|sc| (&sc.world, &sc.features)), &b.place, 0.8).unwrap()
}

#[test]
fn atlas_from_logs_matches_per_log_maps() {
    let b = build(&[11, 12, 13], 2);
    let (atlas, report) = atlas_of(&b, &b.logs);
    assert_eq!(report.used, 6);
    assert_eq!(atlas.n_scenes, 3);
    atlas.check_invariants().unwrap();

    // R is the plain sum over every map; Γ counts a pair once per scene
    let sgms: Vec<SemanticGraphMap> = b
        .logs
        .iter()
        .map(|l| {
            let sc = &b.scenes[&l.scene_seed];
            sgm_from_log(&sc.world, &sc.features, l, &b.place, 0.8).unwrap()
        })
        .collect();
    let per_map = Atlas::from_sgms(&sgms).unwrap();
    assert_eq!(atlas.r, per_map.r);
    let mut summaries: Vec<SceneSummary> = Vec::new();
    for pair in sgms.chunks(2) {
        let mut s = SceneSummary::from_sgm(&pair[0]).unwrap();
        s.absorb(&SceneSummary::from_sgm(&pair[1]).unwrap()).unwrap();
        summaries.push(s);
    }
    assert_eq!(atlas, Atlas::from_summaries(&summaries).unwrap());
}

#[test]
fn atlas_is_order_invariant_and_roundtrips() {
    let b = build(&[21, 22], 3);
    let (a, _) = atlas_of(&b, &b.logs);
    let mut reversed = b.logs.clone();
    reversed.reverse();
    let (r, _) = atlas_of(&b, &reversed);
    assert_eq!(a, r);
    assert_eq!(Atlas::from_json(&a.to_json().unwrap()).unwrap(), a);
}

#[test]
fn bad_logs_are_skipped_and_reported() {
    let b = build(&[31], 2);
    let mut logs = b.logs.clone();
    let mut stray = logs[0].clone();
    stray.scene_seed = 999;
    logs.push(stray);
    let mut stale = logs[0].clone();
    stale.schema_version += 1;
    logs.push(stale);
    let (_, report) = atlas_of(&b, &logs);
    assert_eq!(report.used, 2);
    assert_eq!(report.skipped.len(), 2);
    let none: Vec<ExploreLog> = logs[2..].to_vec();
    assert!(atlas_from_logs(&none, |s| b.scenes.get(&s).map(|sc| (&sc.world, &sc.features)), &b.place, 0.8).is_err());
}

#[test]
fn logs_replay_to_the_same_map_after_jsonl() {
    let b = build(&[41], 1);
    let log = &b.logs[0];
    let back = ExploreLog::from_jsonl(&log.to_jsonl().unwrap()).unwrap();
    let sc = &b.scenes[&41];
    let m1 = sgm_from_log(&sc.world, &sc.features, log, &b.place, 0.8).unwrap();
    let m2 = sgm_from_log(&sc.world, &sc.features, &back, &b.place, 0.8).unwrap();
    assert_eq!(m1, m2);
    let json = serde_json::to_string(&m1).unwrap();
    assert_eq!(serde_json::from_str::<SemanticGraphMap>(&json).unwrap(), m1);
    m1.check_invariants().unwrap();
}

#[test]
fn suite_rows_and_report_agree() {
    let cfg = SuiteConfig {
        train_scenes: 4,
        explore_episodes: 2,
        eval_scenes: 2,
        episodes_per_scene: 3,
        noise_levels: vec![0, 10],
        variants: vec![Variant::new("full", EpisodeFlags::full()), Variant::new("no_update", EpisodeFlags::without_update())],
        bootstrap_resamples: 200,
        ..SuiteConfig::default()
    };
    let prep = prepare(&cfg).unwrap();
    let out = run_suite(&cfg, &prep).unwrap();
    assert_eq!(out.rows.len(), 3 * 6);
    assert_eq!(out.report, report_from_rows(&out.rows, cfg.seed, cfg.episode.success_distance, cfg.bootstrap_resamples).unwrap());
    assert_eq!(out.report.summary.len(), 3);
    assert_eq!(out.report.comparisons.len(), 1);
    for s in &out.report.summary {
        assert!(s.metrics.spl <= s.metrics.success_rate + 1e-12);
    }
    for r in &out.rows {
        assert!(r.error.is_empty(), "{}", r.error);
        assert!(r.shortest_length > 0.0 && r.path_length >= 0.0);
        if r.success {
            assert!(r.final_dist <= cfg.episode.success_distance);
            assert_eq!(r.stop_reason, "agent_stop");
        }
    }
    assert_eq!(out.traces.len(), out.rows.len());
}
