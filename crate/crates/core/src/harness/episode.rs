//! The closed-loop episode and its open-loop replay variant.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::pipeline::integrate_observation;
use super::{CheckedObject, EpisodeConfig, EpisodeFlags, EpisodeResult, EpisodeSpec, StopReason};
use crate::atlas::{Atlas, RelationEvent, RelationKind};
use crate::error::{Result, SeaError};
use crate::features::{FeatureVec, PlaceModel};
use crate::global_policy::{
    object_importance, random_choice, select_subgoal, subgoal_candidates, target_place, PolicyConfig, Sector, SectorDetection,
    SelectionMode, SubgoalCandidate, SubgoalChoice, TargetStatus,
};
use crate::grid::Pose2;
use crate::local_policy::{fmm_field_to_agent, local_budget, next_action_at, DepthRay, LocalAction, LocalMap, STEP_LENGTH};
use crate::rng::{stream, streams, SeaRng};
use crate::sgm::{with_policy_guard, SemanticGraphMap};
use crate::simworld::{self, Action, Detection, GridWorld, NoiseModel, Observation, SceneFeatures, Simulator};

/// Trained components shared by every episode.
#[derive(Clone, Copy)]
pub struct Models<'a> {
    pub place: &'a PlaceModel,
    pub atlas: &'a Atlas,
    pub policy: &'a PolicyConfig,
}

/// One global-policy call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub step: usize,
    pub k_star: usize,
    pub candidates: Vec<SubgoalCandidate>,
    pub choice: Option<SubgoalChoice>,
    pub turn_around: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Approach { step: usize, score: f64, range: f64 },
    Checked { step: usize, score: f64 },
    PlaceReject { step: usize, place: usize, k_star: usize },
    GaveUp { step: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub actions: Vec<Action>,
    pub decisions: Vec<DecisionRecord>,
    pub relations: Vec<RelationEvent>,
    pub events: Vec<TraceEvent>,
    /// True positions, for plots.
    pub positions: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub result: EpisodeResult,
    pub trace: EpisodeTrace,
}

/// Map building, relation updates and global decisions. Nothing in here
/// reads a pose.
struct Cognition<'a> {
    models: Models<'a>,
    flags: EpisodeFlags,
    cfg: &'a EpisodeConfig,
    goal: usize,
    atlas: Atlas,
    sgm: SemanticGraphMap,
    links: BTreeSet<(usize, usize)>,
    /// Appearance of objects already passed close by.
    visited: Vec<(usize, FeatureVec)>,
    k_star: usize,
    place: usize,
    rng: SeaRng,
    relations: Vec<RelationEvent>,
    decisions: Vec<DecisionRecord>,
}

impl<'a> Cognition<'a> {
    fn new(models: Models<'a>, flags: EpisodeFlags, cfg: &'a EpisodeConfig, goal: usize, seed: u64) -> Self {
        let mut rng = stream(seed ^ models.policy.rng_seed, streams::POLICY);
        let atlas = models.atlas.clone();
        let k = with_policy_guard(|| target_place(&atlas, goal, &mut rng));
        Self {
            models,
            flags,
            cfg,
            goal,
            sgm: SemanticGraphMap::new(models.place.n_places(), simworld::n_categories()),
            atlas,
            links: BTreeSet::new(),
            visited: Vec::new(),
            k_star: k.place,
            place: 0,
            rng,
            relations: Vec::new(),
            decisions: Vec::new(),
        }
    }

    fn refresh_k_star(&mut self) {
        let k = with_policy_guard(|| target_place(&self.atlas, self.goal, &mut self.rng.clone()));
        if k.status == TargetStatus::Posterior {
            self.k_star = k.place;
        }
    }

    fn fire(&mut self, kind: RelationKind, step: usize) -> Result<()> {
        if !self.flags.update_relations {
            return Ok(());
        }
        let ev = RelationEvent { kind, step };
        self.atlas.update_relation(&ev)?;
        self.relations.push(ev);
        self.refresh_k_star();
        Ok(())
    }

    /// `position` only labels new nodes for evaluation.
    fn perceive(&mut self, obs: &Observation, step: usize, position: [f64; 2]) -> Result<()> {
        let int = integrate_observation(&mut self.sgm, obs, self.models.place, step, position, self.cfg.register_score)?;
        self.place = int.place;
        let node_place = self.sgm.image_nodes()[int.update.node].place_cluster;
        for id in int.added_objects {
            let category = self.sgm.object_nodes()[id].category;
            self.fire(RelationKind::ObservedConnection { place: node_place, category }, step)?;
        }
        if let Some((a, b)) = int.update.new_edge {
            let (pa, pb) = (self.sgm.image_nodes()[a].place_cluster, self.sgm.image_nodes()[b].place_cluster);
            if pa != pb && self.links.insert((pa.min(pb), pa.max(pb))) {
                self.fire(RelationKind::PlaceLink { a: pa.min(pb), b: pa.max(pb) }, step)?;
            }
        }
        for d in obs.panoramic.iter().filter(|d| d.range <= self.cfg.visit_range && d.score >= self.cfg.register_score) {
            if !self.was_visited(d) {
                self.visited.push((d.category, d.feature.clone()));
            }
        }
        if self.place == self.k_star && !obs.panoramic.iter().any(|d| d.category == self.goal) {
            self.fire(RelationKind::TargetNotFound { place: self.k_star, category: self.goal }, step)?;
        }
        Ok(())
    }

    fn was_visited(&self, d: &Detection) -> bool {
        self.visited.iter().any(|(c, f)| *c == d.category && similar(f, &d.feature) > self.cfg.checked_similarity)
    }

    fn decide(&mut self, obs: &Observation, step: usize) -> DecisionRecord {
        let reach_min = self.cfg.reach_min;
        let semantic = self.flags.place_subgoal;
        let fresh: Vec<&Detection> = obs.directional.iter().filter(|d| !self.was_visited(d)).collect();
        let (atlas, rng, k_star) = (&self.atlas, &mut self.rng, self.k_star);
        let rec = with_policy_guard(|| {
            let importance = object_importance(atlas, self.models.policy.importance_weighting);
            let dets: Vec<SectorDetection> =
                fresh.iter().map(|d| SectorDetection { category: d.category, bearing_deg: d.bearing.to_degrees() }).collect();
            let mut candidates = subgoal_candidates(&dets, atlas, &importance);
            for c in &mut candidates {
                c.reachable = sector_reach(obs, c.sector) >= reach_min;
            }
            if candidates.iter().all(|c| !c.reachable) {
                return DecisionRecord { step, k_star, candidates, choice: None, turn_around: true };
            }
            let choice = if semantic { select_subgoal(&candidates, &atlas.gamma, k_star, rng) } else { random_choice(&candidates, rng) };
            DecisionRecord { step, k_star, candidates, choice: Some(choice), turn_around: false }
        });
        self.decisions.push(rec.clone());
        rec
    }
}

fn sector_rays(obs: &Observation, sector: Sector) -> impl Iterator<Item = &DepthRay> + '_ {
    obs.depth.rays.iter().filter(move |r| Sector::of_bearing(r.bearing.to_degrees()) == Some(sector))
}

fn sector_reach(obs: &Observation, sector: Sector) -> f64 {
    sector_rays(obs, sector).map(|r| r.range).fold(0.0, f64::max)
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn project(pose: Pose2, bearing: f64, range: f64) -> [f64; 2] {
    let h = pose.direction_of(bearing);
    [pose.x + range * h.cos(), pose.y + range * h.sin()]
}

struct Target {
    feature: FeatureVec,
    point: [f64; 2],
    score: f64,
    range: f64,
    visible: bool,
    steps: usize,
    budget: usize,
    attempts: usize,
}

enum Mode {
    Explore,
    Approach(Target),
}

/// Pose-dependent controller state; lives in the odometry frame.
struct Control {
    map: LocalMap,
    mode: Mode,
    subgoal: Option<[f64; 2]>,
    budget: usize,
    turns_left: usize,
    checked: Vec<CheckedObject>,
    stuck: usize,
    hold_used: bool,
}

fn approach_budget(range: f64) -> usize {
    local_budget(range.max(STEP_LENGTH)) + 12
}

fn similar(a: &FeatureVec, b: &FeatureVec) -> f64 {
    a.dot(b)
}

enum Verdict {
    Stop,
    Continue,
}

impl Control {
    fn local_step(&self, goal: [f64; 2]) -> LocalAction {
        let cell = self.map.cell_of(self.clip_to_map(goal));
        let field = fmm_field_to_agent(&self.map, cell);
        let pose = self.map.pose();
        next_action_at(&field, self.map.origin(), pose.position(), pose.theta)
    }

    /// Pulls a goal outside the local map back along the line from the agent
    /// to just inside the border.
    fn clip_to_map(&self, goal: [f64; 2]) -> [f64; 2] {
        let res = self.map.resolution();
        let o = self.map.origin();
        let n = self.map.grid().width() as f64 * res;
        let p = self.map.pose().position();
        let mut t: f64 = 1.0;
        for k in 0..2 {
            let (lo, hi) = (o[k] + res, o[k] + n - res);
            let d = goal[k] - p[k];
            if goal[k] > hi && d > 0.0 {
                t = t.min((hi - p[k]) / d);
            } else if goal[k] < lo && d < 0.0 {
                t = t.min((lo - p[k]) / d);
            }
        }
        let t = t.max(0.0);
        [p[0] + t * (goal[0] - p[0]), p[1] + t * (goal[1] - p[1])]
    }

    fn is_checked(&self, det: &Detection, thr: f64) -> bool {
        self.checked.iter().any(|c| c.category == det.category && similar(&c.feature, &det.feature) > thr)
    }

    fn reject(&mut self, t: &Target, goal: usize) {
        self.checked.push(CheckedObject { feature: t.feature.clone(), category: goal, best_score: t.score });
        self.mode = Mode::Explore;
        self.subgoal = None;
    }

    /// Arrival check for an accepted-looking target.
    fn on_arrival(&mut self, cog: &mut Cognition, t: Target, step: usize, trace: &mut EpisodeTrace) -> Result<Verdict> {
        let cfg = cog.cfg;
        if t.score < cfg.score_threshold {
            trace.events.push(TraceEvent::Checked { step, score: t.score });
            self.reject(&t, cog.goal);
            return Ok(Verdict::Continue);
        }
        if !cog.flags.place_stop || cog.place == cog.k_star {
            return Ok(Verdict::Stop);
        }
        if cog.flags.update_relations && !self.hold_used {
            self.hold_used = true;
            for _ in 0..cfg.hold_events {
                cog.fire(RelationKind::ObservedConnection { place: cog.place, category: cog.goal }, step)?;
                if cog.place == cog.k_star {
                    return Ok(Verdict::Stop);
                }
            }
        }
        trace.events.push(TraceEvent::PlaceReject { step, place: cog.place, k_star: cog.k_star });
        self.reject(&t, cog.goal);
        Ok(Verdict::Continue)
    }

    fn act(&mut self, cog: &mut Cognition, obs: &Observation, step: usize, trace: &mut EpisodeTrace) -> Result<Option<Action>> {
        let cfg = cog.cfg;
        let goal = cog.goal;
        let pose = self.map.pose();

        if let Mode::Approach(t) = &mut self.mode {
            let best = obs
                .panoramic
                .iter()
                .filter(|d| d.category == goal)
                .map(|d| (similar(&d.feature, &t.feature), d))
                .filter(|(s, _)| *s > cfg.checked_similarity)
                .max_by(|a, b| a.0.total_cmp(&b.0));
            t.visible = best.is_some();
            if let Some((_, d)) = best {
                t.point = project(pose, d.bearing, d.range);
                t.score = d.score;
                t.range = d.range;
            }
        }

        if matches!(self.mode, Mode::Explore) {
            let pick = obs
                .panoramic
                .iter()
                .filter(|d| d.category == goal && d.score >= cfg.score_threshold && !self.is_checked(d, cfg.checked_similarity))
                .max_by(|a, b| a.score.total_cmp(&b.score).then(b.range.total_cmp(&a.range)));
            if let Some(d) = pick {
                trace.events.push(TraceEvent::Approach { step, score: d.score, range: d.range });
                self.hold_used = false;
                self.mode = Mode::Approach(Target {
                    feature: d.feature.clone(),
                    point: project(pose, d.bearing, d.range),
                    score: d.score,
                    range: d.range,
                    visible: true,
                    steps: 0,
                    budget: approach_budget(d.range),
                    attempts: 0,
                });
            }
        }

        if let Mode::Approach(_) = self.mode {
            let Mode::Approach(mut t) = std::mem::replace(&mut self.mode, Mode::Explore) else { unreachable!() };
            let la = self.local_step(t.point);
            let arrived = (t.visible && t.range <= cfg.arrival_range) || la == LocalAction::StopLocal;
            if arrived {
                return match self.on_arrival(cog, t, step, trace)? {
                    Verdict::Stop => Ok(Some(Action::Stop)),
                    Verdict::Continue => self.explore(cog, obs, step, trace),
                };
            }
            t.steps += 1;
            if t.steps > t.budget || la == LocalAction::Blocked {
                t.attempts += 1;
                t.steps = 0;
                t.budget = approach_budget(t.range);
                if t.attempts >= cfg.approach_attempts {
                    trace.events.push(TraceEvent::GaveUp { step });
                    self.reject(&t, goal);
                    return self.explore(cog, obs, step, trace);
                }
            }
            let action = match la {
                LocalAction::Forward => Action::Forward,
                LocalAction::TurnRight => Action::TurnRight,
                _ => Action::TurnLeft,
            };
            self.mode = Mode::Approach(t);
            return Ok(Some(action));
        }
        self.explore(cog, obs, step, trace)
    }

    fn replan(&mut self, cog: &mut Cognition, obs: &Observation, step: usize) -> Option<Action> {
        let rec = cog.decide(obs, step);
        if rec.turn_around {
            self.subgoal = None;
            self.turns_left = 5;
            return Some(Action::TurnLeft);
        }
        let sector = rec.choice.as_ref().map_or(Sector::Front, |c| c.sector);
        let pose = self.map.pose();
        let reach = |r: &DepthRay| (r.range - cog.cfg.subgoal_margin).min(self.map.d_m()).max(0.0);
        // a semantic pick may head for the reachable point nearest its anchor
        let anchor = rec
            .choice
            .as_ref()
            .filter(|c| c.mode == SelectionMode::Semantic && cog.cfg.anchor_subgoal)
            .and_then(|c| rec.candidates[c.index].anchor_object)
            .and_then(|cat| {
                obs.directional
                    .iter()
                    .filter(|d| d.category == cat && Sector::of_bearing(d.bearing.to_degrees()) == Some(sector) && !cog.was_visited(d))
                    .min_by(|a, b| a.range.total_cmp(&b.range))
            })
            .map(|d| project(pose, d.bearing, d.range));
        let toward_anchor = anchor.and_then(|q| {
            sector_rays(obs, sector)
                .filter(|r| reach(r) >= cog.cfg.reach_min)
                .map(|r| (dist2(project(pose, r.bearing, reach(r)), q), *r))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, r)| r)
        });
        // otherwise the farthest return in the sector, nearest the sector
        // center on ties
        let ray = match toward_anchor {
            Some(r) => r,
            None => sector_rays(obs, sector).copied().max_by(|a, b| {
                a.range.total_cmp(&b.range).then(
                    (b.bearing.to_degrees() - sector.center_deg()).abs().total_cmp(&(a.bearing.to_degrees() - sector.center_deg()).abs()),
                )
            })?,
        };
        self.subgoal = Some(project(pose, ray.bearing, reach(&ray)));
        self.budget = local_budget(self.map.d_m());
        None
    }

    fn explore(&mut self, cog: &mut Cognition, obs: &Observation, step: usize, _trace: &mut EpisodeTrace) -> Result<Option<Action>> {
        if self.turns_left > 0 {
            self.turns_left -= 1;
            return Ok(Some(Action::TurnLeft));
        }
        for attempt in 0..2 {
            if self.subgoal.is_none() || self.budget == 0 || attempt == 1 {
                if let Some(a) = self.replan(cog, obs, step) {
                    self.stuck = 0;
                    return Ok(Some(a));
                }
            }
            let Some(goal) = self.subgoal else { continue };
            match self.local_step(goal) {
                LocalAction::Forward => return Ok(Some(self.spend(Action::Forward))),
                LocalAction::TurnLeft => return Ok(Some(self.spend(Action::TurnLeft))),
                LocalAction::TurnRight => return Ok(Some(self.spend(Action::TurnRight))),
                LocalAction::StopLocal | LocalAction::Blocked => self.subgoal = None,
            }
        }
        self.stuck += 1;
        if self.stuck > cog.cfg.blocked_limit {
            return Ok(None);
        }
        Ok(Some(Action::TurnLeft))
    }

    fn spend(&mut self, a: Action) -> Action {
        self.budget = self.budget.saturating_sub(1);
        self.stuck = 0;
        a
    }
}

struct Episode<'a> {
    world: &'a GridWorld,
    goal_dist: crate::grid::Grid<f64>,
    shortest: f64,
}

fn setup<'a>(world: &'a GridWorld, spec: &EpisodeSpec, cfg: &EpisodeConfig) -> Result<Episode<'a>> {
    if spec.goal_category >= simworld::n_categories() {
        return Err(SeaError::invalid(format!("goal category {} out of range", spec.goal_category)));
    }
    let cells = world.goal_cells(spec.goal_category);
    if cells.is_empty() && !cfg.allow_absent_goal {
        return Err(SeaError::invalid(format!("goal {} absent from scene {}", simworld::CATEGORY_NAMES[spec.goal_category], spec.scene)));
    }
    let start_cell = world.cell_of(spec.start.position());
    if !world.is_free(start_cell) {
        return Err(SeaError::invalid("episode start is not on a free cell"));
    }
    let goal_dist = world.geodesic_field(&cells);
    let g = goal_dist[start_cell];
    if !g.is_finite() && !cfg.allow_absent_goal {
        return Err(SeaError::invalid("goal unreachable from start"));
    }
    let shortest = if g.is_finite() { (g - cfg.success_distance).max(world.resolution) } else { f64::INFINITY };
    Ok(Episode { world, goal_dist, shortest })
}

/// Runs one closed-loop episode. The prior atlas is only read; relation
/// updates go to a private copy.
pub fn run_episode(
    world: &GridWorld,
    scene: &SceneFeatures,
    models: Models,
    spec: &EpisodeSpec,
    flags: EpisodeFlags,
    cfg: &EpisodeConfig,
    noise: &NoiseModel,
) -> Result<EpisodeOutcome> {
    let ep = setup(world, spec, cfg)?;
    let mut sim = Simulator::new(world, scene, *noise, spec.start, spec.seed)?;
    let mut cog = Cognition::new(models, flags, cfg, spec.goal_category, spec.seed);
    let mut ctl = Control {
        map: LocalMap::new(cfg.local.clone(), sim.agent.odom_pose),
        mode: Mode::Explore,
        subgoal: None,
        budget: 0,
        turns_left: 0,
        checked: Vec::new(),
        stuck: 0,
        hold_used: false,
    };
    let mut trace = EpisodeTrace::default();
    let mut obs = sim.observe();
    trace.positions.push(sim.agent.true_pose.position());
    let mut reason = StopReason::Timeout;
    loop {
        let step = sim.agent.steps;
        ctl.map.integrate_depth(&obs.depth, obs.pose_delta);
        cog.perceive(&obs, step, sim.agent.true_pose.position())?;
        let Some(action) = ctl.act(&mut cog, &obs, step, &mut trace)? else {
            reason = StopReason::Blocked;
            break;
        };
        trace.actions.push(action);
        let (next, done) = sim.step(action)?;
        trace.positions.push(sim.agent.true_pose.position());
        obs = next;
        if action == Action::Stop {
            reason = StopReason::AgentStop;
            break;
        }
        if done {
            break;
        }
    }
    trace.relations = std::mem::take(&mut cog.relations);
    trace.decisions = std::mem::take(&mut cog.decisions);
    let final_dist = ep.goal_dist[ep.world.cell_of(sim.agent.true_pose.position())];
    let success = reason == StopReason::AgentStop && final_dist <= cfg.success_distance;
    Ok(EpisodeOutcome {
        result: EpisodeResult {
            success,
            path_length: sim.agent.path_length,
            shortest_length: ep.shortest,
            final_dist,
            steps: sim.agent.steps,
            stop_reason: reason,
        },
        trace,
    })
}

/// Open-loop replay: executes `actions` and calls the global policy after
/// every observation. Returns the decision and relation trace.
#[allow(clippy::too_many_arguments)]
pub fn replay_decisions(
    world: &GridWorld,
    scene: &SceneFeatures,
    models: Models,
    spec: &EpisodeSpec,
    flags: EpisodeFlags,
    cfg: &EpisodeConfig,
    noise: &NoiseModel,
    actions: &[Action],
) -> Result<EpisodeTrace> {
    setup(world, spec, cfg)?;
    let mut sim = Simulator::new(world, scene, *noise, spec.start, spec.seed)?;
    let mut cog = Cognition::new(models, flags, cfg, spec.goal_category, spec.seed);
    let mut obs = sim.observe();
    let mut trace = EpisodeTrace::default();
    for &a in actions {
        let step = sim.agent.steps;
        cog.perceive(&obs, step, sim.agent.true_pose.position())?;
        cog.decide(&obs, step);
        trace.actions.push(a);
        let (next, done) = sim.step(a)?;
        obs = next;
        if done {
            break;
        }
    }
    trace.relations = cog.relations;
    trace.decisions = cog.decisions;
    Ok(trace)
}
