//! Offline pipeline: random-walk logs, place clustering and atlas building.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EpisodeSpec;
use crate::atlas::{Atlas, SceneSummary};
use crate::error::{Result, SeaError};
use crate::features::{kmeans_best_of, FeatureVec, PlaceModel};
use crate::grid::Pose2;
use crate::rng::{derive, stream, streams};
use crate::sgm::{assign_place, GraphUpdate, ObjectObservation, SemanticGraphMap};
use crate::simworld::{self, Action, GridWorld, NoiseModel, Observation, SceneFeatures, Simulator};
use crate::SCHEMA_VERSION;

/// Action log of one exploration episode. Observations are regenerated by
/// replaying the actions through the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploreLog {
    pub schema_version: u32,
    pub scene_seed: u64,
    pub start: Pose2,
    pub seed: u64,
    pub noise: NoiseModel,
    pub actions: Vec<Action>,
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    schema_version: u32,
    scene_seed: u64,
    start: Pose2,
    seed: u64,
    noise: NoiseModel,
}

#[derive(Serialize, Deserialize)]
struct LogStep {
    step: usize,
    action: Action,
}

impl ExploreLog {
    /// Header line followed by one `{step, action}` record per step.
    pub fn to_jsonl(&self) -> Result<String> {
        let header = LogHeader {
            schema_version: self.schema_version,
            scene_seed: self.scene_seed,
            start: self.start,
            seed: self.seed,
            noise: self.noise,
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for (step, &action) in self.actions.iter().enumerate() {
            out.push_str(&serde_json::to_string(&LogStep { step, action })?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let h: LogHeader = serde_json::from_str(lines.next().ok_or_else(|| SeaError::invalid("empty log"))?)?;
        if h.schema_version != SCHEMA_VERSION {
            return Err(SeaError::Schema { found: h.schema_version, expected: SCHEMA_VERSION });
        }
        let mut actions = Vec::new();
        for (i, line) in lines.enumerate() {
            let s: LogStep = serde_json::from_str(line)?;
            if s.step != i {
                return Err(SeaError::invalid(format!("log step {} out of order at line {}", s.step, i + 2)));
            }
            actions.push(s.action);
        }
        Ok(Self { schema_version: h.schema_version, scene_seed: h.scene_seed, start: h.start, seed: h.seed, noise: h.noise, actions })
    }
}

/// Forward until the path ahead is short, then turn a random amount.
pub fn random_walk(
    world: &GridWorld,
    scene: &SceneFeatures,
    start: Pose2,
    seed: u64,
    steps: usize,
    noise: NoiseModel,
) -> Result<ExploreLog> {
    let mut sim = Simulator::new(world, scene, noise, start, seed)?;
    let mut rng = stream(seed, streams::POLICY);
    let mut obs = sim.observe();
    let mut actions = Vec::new();
    let mut turning = 0usize;
    let mut turn_action = Action::TurnLeft;
    for _ in 0..steps.min(simworld::MAX_STEPS - 1) {
        let ahead = obs.depth.rays.iter().filter(|r| r.bearing.abs() <= 10f64.to_radians()).map(|r| r.range).fold(f64::INFINITY, f64::min);
        let action = if turning > 0 {
            turning -= 1;
            turn_action
        } else if ahead < 0.6 || rng.random_bool(0.1) {
            turn_action = if rng.random_bool(0.5) { Action::TurnLeft } else { Action::TurnRight };
            turning = rng.random_range(0..6);
            turn_action
        } else {
            Action::Forward
        };
        actions.push(action);
        obs = sim.step(action)?.0;
    }
    Ok(ExploreLog { schema_version: SCHEMA_VERSION, scene_seed: world.seed, start, seed, noise, actions })
}

/// Calls `f(step, observation, true_pose)` for the initial observation and
/// after every logged action.
pub fn replay_log(
    world: &GridWorld,
    scene: &SceneFeatures,
    log: &ExploreLog,
    mut f: impl FnMut(usize, &Observation, Pose2) -> Result<()>,
) -> Result<()> {
    if log.schema_version != SCHEMA_VERSION {
        return Err(SeaError::Schema { found: log.schema_version, expected: SCHEMA_VERSION });
    }
    if log.scene_seed != world.seed {
        return Err(SeaError::invalid(format!("log is for scene {} not {}", log.scene_seed, world.seed)));
    }
    let mut sim = Simulator::new(world, scene, log.noise, log.start, log.seed)?;
    let obs = sim.observe();
    f(0, &obs, sim.agent.true_pose)?;
    for (i, &a) in log.actions.iter().enumerate() {
        let (obs, done) = sim.step(a)?;
        f(i + 1, &obs, sim.agent.true_pose)?;
        if done {
            break;
        }
    }
    Ok(())
}

pub fn collect_place_samples(world: &GridWorld, scene: &SceneFeatures, log: &ExploreLog, every: usize) -> Result<Vec<FeatureVec>> {
    let mut out = Vec::new();
    replay_log(world, scene, log, |step, obs, _| {
        if step % every.max(1) == 0 {
            out.push(FeatureVec::normalized(obs.place_raw.clone())?);
        }
        Ok(())
    })?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterTrainConfig {
    pub n_places: usize,
    pub restarts: usize,
    pub sample_every: usize,
    pub seed: u64,
}

impl Default for ClusterTrainConfig {
    fn default() -> Self {
        Self { n_places: 8, restarts: 5, sample_every: 5, seed: 0 }
    }
}

/// Spherical k-means over raw place observations; no learned encoder.
pub fn train_place_model(samples: &[FeatureVec], cfg: &ClusterTrainConfig) -> Result<PlaceModel> {
    let fit = kmeans_best_of(samples, cfg.n_places, cfg.seed, cfg.restarts)?;
    Ok(PlaceModel { clusters: fit.model, embedder: None })
}

pub struct Integration {
    pub update: GraphUpdate,
    /// Place cluster of the current observation.
    pub place: usize,
    pub added_objects: Vec<usize>,
}

/// Folds one observation into `sgm`.
pub fn integrate_observation(
    sgm: &mut SemanticGraphMap,
    obs: &Observation,
    place_model: &PlaceModel,
    step: usize,
    position: [f64; 2],
    register_score: f64,
) -> Result<Integration> {
    let place_feature = place_model.place_feature(&obs.place_raw)?;
    let place = assign_place(&place_feature, &place_model.clusters)?;
    let update = sgm.update_graph(&obs.image, &place_feature, &place_model.clusters, step, position)?;
    let dets: Vec<ObjectObservation> = obs
        .panoramic
        .iter()
        .filter(|d| d.score >= register_score)
        .map(|d| ObjectObservation { feature: d.feature.clone(), category: d.category, score: d.score })
        .collect();
    let counts = sgm.register_objects(&dets, update.node)?;
    Ok(Integration { update, place, added_objects: counts.added_ids })
}

pub fn sgm_from_log(
    world: &GridWorld,
    scene: &SceneFeatures,
    log: &ExploreLog,
    place_model: &PlaceModel,
    register_score: f64,
) -> Result<SemanticGraphMap> {
    let mut sgm = SemanticGraphMap::new(place_model.n_places(), simworld::n_categories());
    replay_log(world, scene, log, |step, obs, pose| {
        integrate_observation(&mut sgm, obs, place_model, step, pose.position(), register_score).map(|_| ())
    })?;
    Ok(sgm)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AtlasBuildReport {
    pub used: usize,
    pub skipped: Vec<String>,
}

/// One summary per scene: the maps of all usable logs of a scene are merged
/// before aggregation. Logs that fail to replay are skipped and reported.
pub fn atlas_from_logs<'w>(
    logs: &[ExploreLog],
    scene_of: impl Fn(u64) -> Option<(&'w GridWorld, &'w SceneFeatures)>,
    place_model: &PlaceModel,
    register_score: f64,
) -> Result<(Atlas, AtlasBuildReport)> {
    let mut report = AtlasBuildReport::default();
    let mut per_scene: BTreeMap<u64, SceneSummary> = BTreeMap::new();
    for (i, log) in logs.iter().enumerate() {
        let Some((world, scene)) = scene_of(log.scene_seed) else {
            report.skipped.push(format!("log {i}: unknown scene {}", log.scene_seed));
            continue;
        };
        let summary = match sgm_from_log(world, scene, log, place_model, register_score) {
            Ok(s) if !s.is_empty() => SceneSummary::from_sgm(&s)?,
            Ok(_) => {
                report.skipped.push(format!("log {i}: empty map"));
                continue;
            }
            Err(e) => {
                report.skipped.push(format!("log {i}: {e}"));
                continue;
            }
        };
        report.used += 1;
        match per_scene.entry(log.scene_seed) {
            Entry::Vacant(v) => {
                v.insert(summary);
            }
            Entry::Occupied(mut o) => o.get_mut().absorb(&summary)?,
        }
    }
    if per_scene.is_empty() {
        return Err(SeaError::invalid("no usable exploration logs"));
    }
    let summaries: Vec<SceneSummary> = per_scene.into_values().collect();
    Ok((Atlas::from_summaries(&summaries)?, report))
}

/// Episodes with a goal category present in the scene and a start at least
/// `min_distance` meters (geodesic) from every instance.
pub fn sample_episodes(
    world: &GridWorld,
    scene_id: &str,
    goals: &[usize],
    n: usize,
    seed: u64,
    min_distance: f64,
) -> Result<Vec<EpisodeSpec>> {
    let present: Vec<usize> = goals.iter().copied().filter(|&g| world.instances_of(g).next().is_some()).collect();
    if present.is_empty() {
        return Err(SeaError::invalid(format!("scene {scene_id} holds no goal category")));
    }
    let mut rng = stream(seed, streams::EPISODE);
    let fields: Vec<_> = present.iter().map(|&g| world.geodesic_field(&world.goal_cells(g))).collect();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let gi = rng.random_range(0..present.len());
        let mut start = None;
        for _ in 0..200 {
            let p = world.random_free_pose(&mut rng);
            let d = fields[gi][world.cell_of(p.position())];
            if d.is_finite() && d >= min_distance {
                start = Some(p);
                break;
            }
        }
        let start = start.ok_or_else(|| SeaError::invalid(format!("no start far enough from goal in {scene_id}")))?;
        out.push(EpisodeSpec { scene: scene_id.to_string(), start, goal_category: present[gi], seed: derive(seed, 100 + k as u64) });
    }
    Ok(out)
}
