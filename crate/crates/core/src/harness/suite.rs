//! Experiment suites: scene preparation, the flag matrix, the noise sweep and
//! paired bootstrap comparisons.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{run_episode, EpisodeTrace, Models};
use super::pipeline::{
    atlas_from_logs, collect_place_samples, random_walk, sample_episodes, train_place_model, AtlasBuildReport, ClusterTrainConfig,
    ExploreLog,
};
use super::{compute_metrics_at, EpisodeConfig, EpisodeFlags, EpisodeResult, EpisodeSpec, Metrics, StopReason};
use crate::atlas::Atlas;
use crate::error::{Result, SeaError};
use crate::features::PlaceModel;
use crate::global_policy::PolicyConfig;
use crate::rng::{derive, seeded, stream, streams};
use crate::simworld::{generate_house, FeatureBank, GridWorld, HouseConfig, NoiseModel, SceneFeatures, CATEGORY_NAMES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub flags: EpisodeFlags,
}

impl Variant {
    pub fn new(name: &str, flags: EpisodeFlags) -> Self {
        Self { name: name.to_string(), flags }
    }

    pub fn matrix() -> Vec<Variant> {
        vec![
            Variant::new("full", EpisodeFlags::full()),
            Variant::new("no_update", EpisodeFlags::without_update()),
            Variant::new("random_subgoal", EpisodeFlags::random_subgoal()),
            Variant::new("no_place_stop", EpisodeFlags::without_place_stop()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    pub house: HouseConfig,
    pub train_scenes: usize,
    pub explore_episodes: usize,
    pub explore_steps: usize,
    pub eval_scenes: usize,
    pub episodes_per_scene: usize,
    pub min_start_distance: f64,
    pub clusters: ClusterTrainConfig,
    pub noise: NoiseModel,
    /// Pose noise level of the flag matrix; overrides `noise.pose`.
    pub pose_level: u32,
    /// Pose noise levels swept with the first variant.
    pub noise_levels: Vec<u32>,
    pub variants: Vec<Variant>,
    pub episode: EpisodeConfig,
    pub policy: PolicyConfig,
    pub bootstrap_resamples: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            house: HouseConfig::default(),
            train_scenes: 30,
            explore_episodes: 10,
            explore_steps: 499,
            eval_scenes: 20,
            episodes_per_scene: 10,
            min_start_distance: 2.0,
            clusters: ClusterTrainConfig::default(),
            noise: NoiseModel::default(),
            pose_level: 0,
            noise_levels: vec![0, 1, 4, 10],
            variants: Variant::matrix(),
            episode: EpisodeConfig::default(),
            policy: PolicyConfig::default(),
            bootstrap_resamples: 1000,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        self.house.validate()?;
        self.noise.validate()?;
        if self.train_scenes == 0 || self.explore_episodes == 0 || self.eval_scenes == 0 || self.episodes_per_scene == 0 {
            return Err(SeaError::Config("scene and episode counts must be positive".into()));
        }
        if self.variants.is_empty() {
            return Err(SeaError::Config("no variants".into()));
        }
        Ok(())
    }
}

/// Train and evaluation scene seeds.
pub fn scene_seeds(cfg: &SuiteConfig) -> (Vec<u64>, Vec<u64>) {
    let train = (0..cfg.train_scenes as u64).map(|i| derive(cfg.seed, 1_000 + i)).collect();
    let eval = (0..cfg.eval_scenes as u64).map(|i| derive(cfg.seed, 2_000 + i)).collect();
    (train, eval)
}

pub struct Scene {
    pub world: GridWorld,
    pub features: SceneFeatures,
}

impl Scene {
    pub fn generate(seed: u64, house: &HouseConfig, bank: &FeatureBank) -> Result<Self> {
        let world = generate_house(seed, house)?;
        let features = SceneFeatures::new(&world, bank);
        Ok(Self { world, features })
    }
}

/// Everything the evaluation needs: trained place clusters, the prior atlas
/// and the evaluation scenes with their episodes.
pub struct Prepared {
    pub place: PlaceModel,
    pub atlas: Atlas,
    pub atlas_report: AtlasBuildReport,
    pub logs: Vec<ExploreLog>,
    pub eval: Vec<(Scene, Vec<EpisodeSpec>)>,
}

pub fn prepare(cfg: &SuiteConfig) -> Result<Prepared> {
    cfg.validate()?;
    let bank = FeatureBank::standard();
    let (train_seeds, eval_seeds) = scene_seeds(cfg);
    let train: Vec<Scene> = train_seeds.par_iter().map(|&s| Scene::generate(s, &cfg.house, &bank)).collect::<Result<_>>()?;
    let logs: Vec<ExploreLog> = train
        .par_iter()
        .flat_map_iter(|sc| {
            let mut rng = stream(sc.world.seed, streams::EPISODE);
            (0..cfg.explore_episodes)
                .map(|k| {
                    let start = sc.world.random_free_pose(&mut rng);
                    (start, derive(sc.world.seed, 500 + k as u64))
                })
                .collect::<Vec<_>>()
                .into_iter()
                .map(move |(start, seed)| random_walk(&sc.world, &sc.features, start, seed, cfg.explore_steps, cfg.noise))
        })
        .collect::<Result<_>>()?;
    let by_seed: HashMap<u64, &Scene> = train.iter().map(|s| (s.world.seed, s)).collect();
    let scene_of = |seed: u64| by_seed.get(&seed).map(|s| (&s.world, &s.features));

    let samples: Vec<_> = logs
        .par_iter()
        .map(|log| {
            let (w, f) = scene_of(log.scene_seed).expect("log of a train scene");
            collect_place_samples(w, f, log, cfg.clusters.sample_every)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let place = train_place_model(&samples, &ClusterTrainConfig { seed: derive(cfg.seed, 3), ..cfg.clusters.clone() })?;
    let (atlas, atlas_report) = atlas_from_logs(&logs, scene_of, &place, cfg.episode.register_score)?;

    let eval = prepare_eval(cfg, &eval_seeds, &bank)?;
    Ok(Prepared { place, atlas, atlas_report, logs, eval })
}

/// Evaluation scenes and their sampled episodes.
pub fn prepare_eval(cfg: &SuiteConfig, seeds: &[u64], bank: &FeatureBank) -> Result<Vec<(Scene, Vec<EpisodeSpec>)>> {
    seeds
        .par_iter()
        .map(|&s| {
            let sc = Scene::generate(s, &cfg.house, bank)?;
            let eps =
                sample_episodes(&sc.world, &scene_name(s), &cfg.house.goal_categories, cfg.episodes_per_scene, s, cfg.min_start_distance)?;
            Ok((sc, eps))
        })
        .collect()
}

pub fn scene_name(seed: u64) -> String {
    format!("house-{seed}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub variant: String,
    pub noise_level: u32,
    pub scene: String,
    pub episode: usize,
    pub goal: String,
    pub success: bool,
    pub spl: f64,
    pub path_length: f64,
    pub shortest_length: f64,
    pub final_dist: f64,
    pub steps: usize,
    pub stop_reason: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub noise_level: u32,
    pub metrics: Metrics,
    pub errors: usize,
}

/// Paired difference `a - b` in success with a percentile bootstrap CI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub seed: u64,
    pub summary: Vec<SummaryRow>,
    pub comparisons: Vec<Comparison>,
}

pub struct SuiteOutput {
    pub rows: Vec<EpisodeRow>,
    pub report: SuiteReport,
    pub traces: Vec<(String, EpisodeTrace)>,
}

/// Percentile bootstrap of the mean paired difference.
pub fn paired_bootstrap(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() || a.is_empty() {
        return Err(SeaError::invalid("paired bootstrap needs equal, non-empty samples"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let mean = d.iter().sum::<f64>() / n as f64;
    let mut rng = seeded(seed);
    let mut means: Vec<f64> = (0..resamples.max(1)).map(|_| (0..n).map(|_| d[rng.random_range(0..n)]).sum::<f64>() / n as f64).collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| means[((p * (means.len() - 1) as f64).round() as usize).min(means.len() - 1)];
    Ok((mean, q(0.025), q(0.975)))
}

struct Job<'a> {
    variant: &'a Variant,
    level: u32,
    scene: &'a Scene,
    index: usize,
    spec: &'a EpisodeSpec,
}

/// Runs the flag matrix at the configured noise and the first variant across
/// the noise sweep. Episode errors are reported per row.
pub fn run_suite(cfg: &SuiteConfig, prep: &Prepared) -> Result<SuiteOutput> {
    cfg.validate()?;
    let base_level = cfg.pose_level;
    let mut plan: Vec<(&Variant, u32)> = cfg.variants.iter().map(|v| (v, base_level)).collect();
    for &l in &cfg.noise_levels {
        if l != base_level {
            plan.push((&cfg.variants[0], l));
        }
    }
    let mut jobs = Vec::new();
    for &(variant, level) in &plan {
        let mut index = 0;
        for (scene, specs) in &prep.eval {
            for spec in specs {
                jobs.push(Job { variant, level, scene, index, spec });
                index += 1;
            }
        }
    }
    let models = Models { place: &prep.place, atlas: &prep.atlas, policy: &cfg.policy };
    let outcomes: Vec<(EpisodeRow, Option<EpisodeTrace>)> = jobs
        .par_iter()
        .map(|j| {
            let noise = cfg.noise.with_pose_level(j.level);
            let out = run_episode(&j.scene.world, &j.scene.features, models, j.spec, j.variant.flags, &cfg.episode, &noise);
            let mut row = EpisodeRow {
                variant: j.variant.name.clone(),
                noise_level: j.level,
                scene: j.spec.scene.clone(),
                episode: j.index,
                goal: CATEGORY_NAMES[j.spec.goal_category].to_string(),
                success: false,
                spl: 0.0,
                path_length: 0.0,
                shortest_length: 0.0,
                final_dist: 0.0,
                steps: 0,
                stop_reason: String::new(),
                error: String::new(),
            };
            match out {
                Ok(o) => {
                    let r = &o.result;
                    row.success = r.success;
                    row.spl = r.spl_term();
                    row.path_length = r.path_length;
                    row.shortest_length = r.shortest_length;
                    row.final_dist = r.final_dist;
                    row.steps = r.steps;
                    row.stop_reason = r.stop_reason.as_str().to_string();
                    (row, Some(o.trace))
                }
                Err(e) => {
                    row.error = e.to_string();
                    (row, None)
                }
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut traces = Vec::new();
    for (row, trace) in outcomes {
        if let Some(t) = trace {
            traces.push((format!("{}/{}/{}", row.variant, row.noise_level, row.episode), t));
        }
        rows.push(row);
    }
    let report = report_from_rows(&rows, cfg.seed, cfg.episode.success_distance, cfg.bootstrap_resamples)?;
    Ok(SuiteOutput { rows, report, traces })
}

/// Summary and comparisons from episode rows. Groups keep their first
/// appearance order; the first group is the baseline and is compared with
/// every other group at its noise level. Rows with an error count as
/// failures in the comparisons and are left out of the metrics.
pub fn report_from_rows(rows: &[EpisodeRow], seed: u64, success_distance: f64, resamples: usize) -> Result<SuiteReport> {
    let mut keys: Vec<(String, u32)> = Vec::new();
    for r in rows {
        let k = (r.variant.clone(), r.noise_level);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut summary = Vec::new();
    let mut per_key: Vec<((String, u32), Vec<f64>)> = Vec::new();
    for key in keys {
        let sel: Vec<&EpisodeRow> = rows.iter().filter(|r| r.variant == key.0 && r.noise_level == key.1).collect();
        let results: Vec<EpisodeResult> = sel.iter().filter_map(|r| r.result()).collect();
        let errors = sel.len() - results.len();
        if let Ok(metrics) = compute_metrics_at(&results, success_distance) {
            summary.push(SummaryRow { variant: key.0.clone(), noise_level: key.1, metrics, errors });
        }
        per_key.push((key, sel.iter().map(|r| if r.success { 1.0 } else { 0.0 }).collect()));
    }
    let mut comparisons = Vec::new();
    if let Some(base) = per_key.first() {
        for (k, (key, ys)) in per_key.iter().enumerate().skip(1) {
            if key.1 != base.0 .1 {
                continue;
            }
            let (diff, lo, hi) = paired_bootstrap(&base.1, ys, resamples, derive(seed, 9_000 + k as u64))?;
            comparisons.push(Comparison { a: base.0 .0.clone(), b: key.0.clone(), diff, ci_low: lo, ci_high: hi });
        }
    }
    Ok(SuiteReport { schema_version: crate::SCHEMA_VERSION, seed, summary, comparisons })
}

impl EpisodeRow {
    /// The episode result, unless the row records an error.
    pub fn result(&self) -> Option<EpisodeResult> {
        if !self.error.is_empty() {
            return None;
        }
        let stop_reason = match self.stop_reason.as_str() {
            "agent_stop" => StopReason::AgentStop,
            "timeout" => StopReason::Timeout,
            "blocked" => StopReason::Blocked,
            _ => return None,
        };
        Some(EpisodeResult {
            success: self.success,
            path_length: self.path_length,
            shortest_length: self.shortest_length,
            final_dist: self.final_dist,
            steps: self.steps,
            stop_reason,
        })
    }
}

/// Parses rows written by [`SuiteOutput::write_csv`].
pub fn read_results_csv(path: &Path) -> Result<Vec<EpisodeRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

impl SuiteOutput {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| SeaError::io(path, e))
    }

    pub fn results_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| SeaError::invalid(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| SeaError::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| SeaError::invalid(e.to_string()))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> SeaError {
    SeaError::io(path, std::io::Error::other(e.to_string()))
}

impl SuiteConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| SeaError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SeaError::Config(e.to_string()))
    }

    /// Reads a TOML file; `SEA_SEED` overrides the seed.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SeaError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var("SEA_SEED") {
            self.seed = v.trim().parse().map_err(|_| SeaError::Config(format!("SEA_SEED={v} is not an integer")))?;
            log::info!("seed overridden by SEA_SEED: {}", self.seed);
        }
        Ok(())
    }
}
