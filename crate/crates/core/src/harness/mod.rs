//! Episode orchestration, metrics, experiment suites, persistence and plots.

mod episode;
mod pipeline;
pub mod plot;
mod suite;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeaError};
use crate::grid::Pose2;
use crate::local_policy::LocalConfig;
use crate::simworld::SUCCESS_DISTANCE;

pub use episode::{replay_decisions, run_episode, DecisionRecord, EpisodeOutcome, EpisodeTrace, Models, TraceEvent};
pub use pipeline::{
    atlas_from_logs, collect_place_samples, integrate_observation, random_walk, replay_log, sample_episodes, sgm_from_log,
    train_place_model, AtlasBuildReport, ClusterTrainConfig, ExploreLog,
};
pub use suite::{
    paired_bootstrap, prepare, prepare_eval, read_results_csv, report_from_rows, run_suite, scene_name, scene_seeds, Comparison,
    EpisodeRow, Prepared, Scene, SuiteConfig, SuiteOutput, SuiteReport, SummaryRow, Variant,
};

/// Ablation switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeFlags {
    pub update_relations: bool,
    pub place_stop: bool,
    /// Semantic subgoal selection; off picks a uniform sector each replan.
    pub place_subgoal: bool,
}

impl Default for EpisodeFlags {
    fn default() -> Self {
        Self::full()
    }
}

impl EpisodeFlags {
    pub const fn full() -> Self {
        Self { update_relations: true, place_stop: true, place_subgoal: true }
    }

    pub const fn without_update() -> Self {
        Self { update_relations: false, ..Self::full() }
    }

    pub const fn random_subgoal() -> Self {
        Self { place_subgoal: false, ..Self::full() }
    }

    pub const fn without_place_stop() -> Self {
        Self { place_stop: false, ..Self::full() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub scene: String,
    pub start: Pose2,
    pub goal_category: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Detection score needed to approach and to accept a target.
    pub score_threshold: f64,
    /// Similarity above which a detection is the same as a checked object.
    pub checked_similarity: f64,
    /// Range to the target at which it is re-scored.
    pub arrival_range: f64,
    /// Minimum score for a detection to enter the map.
    pub register_score: f64,
    /// Relation events fired when a target is accepted outside the target place.
    pub hold_events: usize,
    pub approach_attempts: usize,
    /// Consecutive steps without a movable plan before giving up.
    pub blocked_limit: usize,
    /// Smallest free depth in a sector for it to count as reachable.
    pub reach_min: f64,
    /// Objects seen within this range stop serving as subgoal anchors;
    /// zero disables the memory.
    pub visit_range: f64,
    /// Semantic subgoals head for the point nearest the anchor object
    /// instead of the farthest free direction in its sector.
    pub anchor_subgoal: bool,
    /// Subgoals stop this far short of the depth return.
    pub subgoal_margin: f64,
    pub success_distance: f64,
    /// Diagnostic: run even if the goal category is absent.
    pub allow_absent_goal: bool,
    pub local: LocalConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.75,
            checked_similarity: 0.8,
            arrival_range: 0.8,
            register_score: 0.8,
            hold_events: 5,
            approach_attempts: 3,
            blocked_limit: 40,
            reach_min: 1.0,
            visit_range: 2.5,
            anchor_subgoal: false,
            subgoal_margin: 0.3,
            success_distance: SUCCESS_DISTANCE,
            allow_absent_goal: false,
            local: LocalConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    AgentStop,
    Timeout,
    Blocked,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::AgentStop => "agent_stop",
            StopReason::Timeout => "timeout",
            StopReason::Blocked => "blocked",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub path_length: f64,
    pub shortest_length: f64,
    pub final_dist: f64,
    pub steps: usize,
    pub stop_reason: StopReason,
}

impl EpisodeResult {
    pub fn spl_term(&self) -> f64 {
        if self.success {
            self.shortest_length / self.path_length.max(self.shortest_length)
        } else {
            0.0
        }
    }

    pub fn dts_term(&self, success_distance: f64) -> f64 {
        (self.final_dist - success_distance).max(0.0)
    }
}

/// Object rejected on close inspection; never approached again.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckedObject {
    pub feature: crate::features::FeatureVec,
    pub category: usize,
    pub best_score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    pub success_rate: f64,
    pub spl: f64,
    pub dts: f64,
}

pub fn compute_metrics(results: &[EpisodeResult]) -> Result<Metrics> {
    compute_metrics_at(results, SUCCESS_DISTANCE)
}

pub fn compute_metrics_at(results: &[EpisodeResult], success_distance: f64) -> Result<Metrics> {
    if results.is_empty() {
        return Err(SeaError::invalid("metrics of an empty result set"));
    }
    let m = results.len() as f64;
    Ok(Metrics {
        episodes: results.len(),
        success_rate: results.iter().filter(|r| r.success).count() as f64 / m,
        spl: results.iter().map(EpisodeResult::spl_term).sum::<f64>() / m,
        dts: results.iter().map(|r| r.dts_term(success_distance)).sum::<f64>() / m,
    })
}

#[cfg(test)]
mod tests;
