use super::*;
use crate::atlas::Atlas;
use crate::features::{ClusterModel, PlaceModel};
use crate::global_policy::PolicyConfig;
use crate::grid::{Grid, Pose2};
use crate::matrix::Matrix;
use crate::simworld::{category_index, Action, FeatureBank, GridWorld, NoiseModel, ObjectInstance, Rect, Room, RoomType, SceneFeatures};

fn result(success: bool, l: f64, p: f64, d: f64) -> EpisodeResult {
    EpisodeResult {
        success,
        path_length: p,
        shortest_length: l,
        final_dist: d,
        steps: 10,
        stop_reason: if success { StopReason::AgentStop } else { StopReason::Timeout },
    }
}

#[test]
fn metric_arithmetic() {
    let m = compute_metrics(&[result(true, 3.0, 3.0, 0.5)]).unwrap();
    assert_eq!((m.success_rate, m.spl, m.dts), (1.0, 1.0, 0.0));
    assert_eq!(result(true, 2.0, 4.0, 0.2).spl_term(), 0.5);
    let f = compute_metrics(&[result(false, 2.0, 1.0, 3.5)]).unwrap();
    assert_eq!((f.success_rate, f.spl), (0.0, 0.0));
    assert!((f.dts - 2.5).abs() < 1e-12);
    assert!(compute_metrics(&[]).is_err());
}

#[test]
fn bootstrap_is_seeded_and_brackets_mean() {
    let a: Vec<f64> = (0..50).map(|i| (i % 2) as f64).collect();
    let b: Vec<f64> = (0..50).map(|i| (i % 5 == 0) as u8 as f64).collect();
    let r1 = paired_bootstrap(&a, &b, 500, 3).unwrap();
    assert_eq!(r1, paired_bootstrap(&a, &b, 500, 3).unwrap());
    assert!(r1.1 <= r1.0 && r1.0 <= r1.2);
    assert!(paired_bootstrap(&a, &b[..3], 10, 0).is_err());
}

fn room_world(w: usize, h: usize, room_type: RoomType) -> GridWorld {
    let mut g = Grid::filled(w + 2, h + 2, true);
    let rect = Rect { x0: 1, y0: 1, w, h };
    for c in rect.cells() {
        g.set(c, false);
    }
    GridWorld::new(1, 0.1, g, vec![Room { rect, room_type }], vec![])
}

fn put(world: &mut GridWorld, category: &str, x0: i64, y0: i64, decoy: bool) {
    let id = world.objects.len();
    world.add_object(ObjectInstance {
        id,
        category: category_index(category).unwrap(),
        footprint: Rect { x0, y0, w: 2, h: 2 },
        room: 0,
        decoy,
        proto_seed: 40 + id as u64,
    });
}

/// Clusters equal to the room-type prototypes, so places are exact.
fn oracle_places(bank: &FeatureBank) -> PlaceModel {
    PlaceModel { clusters: ClusterModel::new(bank.room_types.clone()).unwrap(), embedder: None }
}

fn atlas_with(place: RoomType, category: &str) -> Atlas {
    let (n_p, n_c) = (RoomType::ALL.len(), crate::simworld::n_categories());
    let mut r = Matrix::zeros(n_p, n_c);
    r[(place.index(), category_index(category).unwrap())] = 10.0;
    Atlas { n_places: n_p, n_categories: n_c, n_scenes: 1, gamma: Matrix::zeros(n_p, n_p), r, presence: vec![vec![true; n_p]] }
}

#[test]
fn adjacent_goal_succeeds_immediately() {
    let mut w = room_world(40, 30, RoomType::LivingRoom);
    put(&mut w, "sofa", 20, 15, false);
    let bank = FeatureBank::standard();
    let scene = SceneFeatures::new(&w, &bank);
    let place = oracle_places(&bank);
    let atlas = atlas_with(RoomType::LivingRoom, "sofa");
    let policy = PolicyConfig::default();
    let models = Models { place: &place, atlas: &atlas, policy: &policy };
    let spec =
        EpisodeSpec { scene: "fixture".into(), start: Pose2::new(1.55, 1.6, 0.0), goal_category: category_index("sofa").unwrap(), seed: 5 };
    let out = run_episode(&w, &scene, models, &spec, EpisodeFlags::full(), &EpisodeConfig::default(), &NoiseModel::default()).unwrap();
    assert!(out.result.success, "{:?}", out.result);
    assert!(out.result.steps <= 5);
    assert!(out.result.spl_term() > 0.99);
}

#[test]
fn absent_goal_times_out() {
    let mut w = room_world(40, 30, RoomType::LivingRoom);
    put(&mut w, "sofa", 20, 15, false);
    let bank = FeatureBank::standard();
    let scene = SceneFeatures::new(&w, &bank);
    let place = oracle_places(&bank);
    let atlas = atlas_with(RoomType::LivingRoom, "sofa");
    let policy = PolicyConfig::default();
    let models = Models { place: &place, atlas: &atlas, policy: &policy };
    let spec =
        EpisodeSpec { scene: "fixture".into(), start: Pose2::new(0.5, 0.5, 0.0), goal_category: category_index("bed").unwrap(), seed: 5 };
    let strict = EpisodeConfig::default();
    assert!(run_episode(&w, &scene, models, &spec, EpisodeFlags::full(), &strict, &NoiseModel::default()).is_err());
    let cfg = EpisodeConfig { allow_absent_goal: true, ..EpisodeConfig::default() };
    let out = run_episode(&w, &scene, models, &spec, EpisodeFlags::full(), &cfg, &NoiseModel::default()).unwrap();
    assert!(!out.result.success);
    assert_eq!(out.result.stop_reason, StopReason::Timeout);
    assert_eq!(out.result.steps, crate::simworld::MAX_STEPS);
}

#[test]
fn decoy_is_checked_and_not_stopped_at() {
    // decoy sofa straight ahead, real sofa in the far corner
    let mut w = room_world(80, 30, RoomType::LivingRoom);
    put(&mut w, "sofa", 40, 15, true);
    put(&mut w, "sofa", 75, 3, false);
    let bank = FeatureBank::standard();
    let scene = SceneFeatures::new(&w, &bank);
    let place = oracle_places(&bank);
    let atlas = atlas_with(RoomType::LivingRoom, "sofa");
    let policy = PolicyConfig::default();
    let models = Models { place: &place, atlas: &atlas, policy: &policy };
    let spec = EpisodeSpec {
        scene: "fixture".into(),
        start: Pose2::new(0.55, 1.6, 0.0),
        goal_category: category_index("sofa").unwrap(),
        seed: 11,
    };
    let out = run_episode(&w, &scene, models, &spec, EpisodeFlags::full(), &EpisodeConfig::default(), &NoiseModel::default()).unwrap();
    let events = &out.trace.events;
    assert!(matches!(events.first(), Some(TraceEvent::Approach { .. })), "{events:?}");
    assert!(events.iter().any(|e| matches!(e, TraceEvent::Checked { .. })), "{events:?}");
    let decoy = w.objects[0].center(w.resolution);
    let end = out.trace.positions.last().unwrap();
    if out.result.stop_reason == StopReason::AgentStop {
        assert!((end[0] - decoy[0]).hypot(end[1] - decoy[1]) > 1.0);
    }
    assert!(out.result.success, "{:?}", out.result);
}

#[test]
fn prior_atlas_untouched() {
    let mut w = room_world(40, 30, RoomType::Bedroom);
    put(&mut w, "sofa", 30, 20, false);
    let bank = FeatureBank::standard();
    let scene = SceneFeatures::new(&w, &bank);
    let place = oracle_places(&bank);
    let atlas = atlas_with(RoomType::LivingRoom, "sofa");
    let before = atlas.to_json().unwrap();
    let policy = PolicyConfig::default();
    let models = Models { place: &place, atlas: &atlas, policy: &policy };
    let spec =
        EpisodeSpec { scene: "fixture".into(), start: Pose2::new(0.5, 0.5, 0.0), goal_category: category_index("sofa").unwrap(), seed: 2 };
    let out = run_episode(&w, &scene, models, &spec, EpisodeFlags::full(), &EpisodeConfig::default(), &NoiseModel::default()).unwrap();
    assert!(!out.trace.relations.is_empty());
    assert_eq!(before, atlas.to_json().unwrap());
}

#[test]
fn suite_config_toml_roundtrip() {
    let cfg = SuiteConfig::default();
    let text = cfg.to_toml().unwrap();
    assert_eq!(SuiteConfig::from_toml(&text).unwrap(), cfg);
    let partial = SuiteConfig::from_toml("seed = 3\neval_scenes = 2\n").unwrap();
    assert_eq!((partial.seed, partial.eval_scenes, partial.train_scenes), (3, 2, 30));
}

#[test]
fn explore_log_jsonl_roundtrip() {
    let log = ExploreLog {
        schema_version: crate::SCHEMA_VERSION,
        scene_seed: 11,
        start: Pose2::new(1.0, 2.0, 0.5),
        seed: 3,
        noise: NoiseModel::none(),
        actions: vec![Action::Forward, Action::TurnLeft, Action::Forward],
    };
    let text = log.to_jsonl().unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(ExploreLog::from_jsonl(&text).unwrap(), log);
    let broken = text.replace("\"step\":1", "\"step\":5");
    assert!(ExploreLog::from_jsonl(&broken).is_err());
    assert!(ExploreLog::from_jsonl("").is_err());
}

fn row(variant: &str, success: bool, error: &str) -> EpisodeRow {
    EpisodeRow {
        variant: variant.into(),
        noise_level: 0,
        scene: "s".into(),
        episode: 0,
        goal: "bed".into(),
        success,
        spl: if success { 0.5 } else { 0.0 },
        path_length: 4.0,
        shortest_length: 2.0,
        final_dist: if success { 0.4 } else { 3.0 },
        steps: 20,
        stop_reason: if success { "agent_stop" } else { "timeout" }.into(),
        error: error.into(),
    }
}

#[test]
fn report_from_rows_groups_in_order() {
    let rows = vec![row("full", true, ""), row("full", true, ""), row("ablated", false, ""), row("ablated", false, "boom")];
    let rep = report_from_rows(&rows, 1, 1.0, 200).unwrap();
    assert_eq!(rep.summary.len(), 2);
    assert_eq!(rep.summary[0].variant, "full");
    assert_eq!(rep.summary[0].metrics.spl, 0.5);
    assert_eq!(rep.summary[1].errors, 1);
    assert_eq!(rep.summary[1].metrics.episodes, 1);
    assert_eq!(rep.comparisons.len(), 1);
    assert_eq!(rep.comparisons[0].diff, 1.0);
}

#[test]
fn suite_config_rejects_unknown_keys() {
    assert!(SuiteConfig::from_toml("seed = 1\n[episode]\nscore_treshold = 0.7\n").is_err());
    assert!(SuiteConfig::from_toml("sede = 1\n").is_err());
    assert_eq!(SuiteConfig::from_toml("seed = 1\n").unwrap().seed, 1);
}
