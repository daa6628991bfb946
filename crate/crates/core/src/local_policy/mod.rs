//! Agent-centric occupancy map, fast-marching distance fields and the
//! deterministic controller that follows them.

mod fmm;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::grid::{bresenham, cast_ray, cell_at, cell_center, wrap_angle, Cell, Grid, Pose2, PoseDelta, NEIGHBORS8};

pub use fmm::solve as fmm_solve;

/// Forward step length in meters.
pub const STEP_LENGTH: f64 = 0.4;
/// Field value below which the agent counts as at the goal.
pub const GOAL_TOLERANCE: f64 = 0.2;
/// Heading error allowed for a forward move.
pub const ALIGN_TOLERANCE_DEG: f64 = 15.0;
/// Radius in cells searched when the goal sits on an obstacle.
pub const SNAP_RADIUS: i64 = 5;
/// Turn increment of the agent.
pub const TURN_STEP_DEG: f64 = 30.0;
/// Descent cells looked ahead when choosing a heading.
const LOOKAHEAD: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupancy {
    Unknown,
    Free,
    Obstacle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalAction {
    Forward,
    TurnLeft,
    TurnRight,
    StopLocal,
    Blocked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalConfig {
    pub resolution: f64,
    /// Side length of the square map in meters.
    pub size_m: f64,
    pub unknown_traversable: bool,
    /// Speed on cells touching an obstacle; 1.0 disables the penalty.
    pub wall_speed: f64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self { resolution: 0.1, size_m: 10.0, unknown_traversable: true, wall_speed: 0.3 }
    }
}

/// One depth return. `bearing` is in radians, positive to the right of the
/// heading. `hit` is false when the ray reached its maximum range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRay {
    pub bearing: f64,
    pub range: f64,
    pub hit: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DepthScan {
    pub rays: Vec<DepthRay>,
    pub max_range: f64,
}

impl DepthScan {
    pub fn max_reading(&self) -> f64 {
        self.rays.iter().map(|r| r.range).fold(0.0, f64::max)
    }
}

/// Occupancy map in the odometry frame. Cells are re-anchored by whole-cell
/// shifts so the agent stays near the middle.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalMap {
    cfg: LocalConfig,
    origin: [f64; 2],
    grid: Grid<Occupancy>,
    pose: Pose2,
    d_m: f64,
}

impl LocalMap {
    pub fn new(cfg: LocalConfig, pose: Pose2) -> Self {
        assert!(cfg.resolution > 0.0 && cfg.size_m > 0.0, "invalid local map config");
        let n = (cfg.size_m / cfg.resolution).round() as usize;
        let mut map = Self { origin: [0.0, 0.0], grid: Grid::filled(n, n, Occupancy::Unknown), cfg, pose, d_m: 0.0 };
        map.origin = map.centered_origin(pose.position());
        map.mark_agent_free();
        map
    }

    fn centered_origin(&self, p: [f64; 2]) -> [f64; 2] {
        let res = self.cfg.resolution;
        let half = (self.grid.width() / 2) as f64;
        [((p[0] / res).floor() - half) * res, ((p[1] / res).floor() - half) * res]
    }

    pub fn config(&self) -> &LocalConfig {
        &self.cfg
    }

    pub fn resolution(&self) -> f64 {
        self.cfg.resolution
    }

    pub fn pose(&self) -> Pose2 {
        self.pose
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn grid(&self) -> &Grid<Occupancy> {
        &self.grid
    }

    pub fn d_m(&self) -> f64 {
        self.d_m
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Cell {
        cell_at(p, self.origin, self.cfg.resolution)
    }

    pub fn center_of(&self, c: Cell) -> [f64; 2] {
        cell_center(c, self.origin, self.cfg.resolution)
    }

    pub fn agent_cell(&self) -> Cell {
        self.cell_of(self.pose.position())
    }

    pub fn occupancy(&self, c: Cell) -> Occupancy {
        self.grid.get(c).copied().unwrap_or(Occupancy::Unknown)
    }

    pub fn set(&mut self, c: Cell, v: Occupancy) {
        self.grid.set(c, v);
    }

    /// Clears all cells, keeping the pose.
    pub fn reset(&mut self) {
        self.grid.as_mut_slice().fill(Occupancy::Unknown);
        self.origin = self.centered_origin(self.pose.position());
        self.d_m = 0.0;
        self.mark_agent_free();
    }

    fn mark_agent_free(&mut self) {
        let c = self.agent_cell();
        self.grid.set(c, Occupancy::Free);
    }

    /// Dead-reckons the pose and shifts the grid when the agent leaves the
    /// central half.
    pub fn apply_motion(&mut self, delta: PoseDelta) {
        self.pose = self.pose.compose(delta);
        let n = self.grid.width() as i64;
        let a = self.agent_cell();
        let margin = n / 4;
        if a.x < margin || a.y < margin || a.x >= n - margin || a.y >= n - margin {
            let new_origin = self.centered_origin(self.pose.position());
            let res = self.cfg.resolution;
            let sx = ((new_origin[0] - self.origin[0]) / res).round() as i64;
            let sy = ((new_origin[1] - self.origin[1]) / res).round() as i64;
            let mut shifted = Grid::filled(self.grid.width(), self.grid.height(), Occupancy::Unknown);
            for c in self.grid.cells() {
                let src = c.offset(sx, sy);
                if let Some(&v) = self.grid.get(src) {
                    shifted.set(c, v);
                }
            }
            self.grid = shifted;
            self.origin = [self.origin[0] + sx as f64 * res, self.origin[1] + sy as f64 * res];
        }
        self.mark_agent_free();
    }

    /// Moves by `delta` then carves the scan into the map.
    pub fn integrate_depth(&mut self, scan: &DepthScan, delta: PoseDelta) {
        self.apply_motion(delta);
        self.carve(scan);
    }

    pub fn carve(&mut self, scan: &DepthScan) {
        let res = self.cfg.resolution;
        let agent = self.agent_cell();
        let start = self.pose.position();
        for ray in &scan.rays {
            if ray.range <= 0.0 {
                continue;
            }
            let dir = self.pose.direction_of(ray.bearing);
            // land a quarter cell past the return so the hit cell is the
            // obstacle and not the free cell in front of it
            let reach = ray.range + if ray.hit { 0.25 * res } else { 0.0 };
            let end = [start[0] + reach * dir.cos(), start[1] + reach * dir.sin()];
            let end_cell = self.cell_of(end);
            let line = bresenham(agent, end_cell);
            let last = line.len() - 1;
            for (k, &c) in line.iter().enumerate() {
                if k == last && ray.hit {
                    if c != agent {
                        self.grid.set(c, Occupancy::Obstacle);
                    }
                } else {
                    self.grid.set(c, Occupancy::Free);
                }
            }
        }
        self.d_m = scan.max_reading();
        self.mark_agent_free();
    }

    /// Speed grid for the distance solver.
    pub fn speed_grid(&self) -> Grid<f64> {
        let blocked = |c: Cell| match self.occupancy(c) {
            Occupancy::Obstacle => true,
            Occupancy::Unknown => !self.cfg.unknown_traversable,
            Occupancy::Free => false,
        };
        let mut speed = Grid::filled(self.grid.width(), self.grid.height(), 1.0);
        for c in self.grid.cells() {
            if blocked(c) {
                speed.set(c, 0.0);
            } else if self.cfg.wall_speed < 1.0
                && NEIGHBORS8.iter().any(|&(dx, dy)| self.occupancy(c.offset(dx, dy)) == Occupancy::Obstacle)
            {
                speed.set(c, self.cfg.wall_speed);
            }
        }
        speed
    }

    /// True when the straight cell line between `a` and `b` has no obstacle.
    pub fn straight_line_clear(&self, a: Cell, b: Cell) -> bool {
        bresenham(a, b).iter().all(|&c| self.grid.contains(c) && self.occupancy(c) != Occupancy::Obstacle)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldStatus {
    Ok,
    Snapped,
    Unreachable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    pub values: Grid<f64>,
    pub goal: Cell,
    pub status: FieldStatus,
    pub resolution: f64,
}

impl DistanceField {
    pub fn value(&self, c: Cell) -> f64 {
        self.values.get(c).copied().unwrap_or(f64::INFINITY)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for y in 0..self.values.height() as i64 {
            let row: Vec<String> = (0..self.values.width() as i64)
                .map(|x| {
                    let v = self.value(Cell::new(x, y));
                    if v.is_finite() {
                        format!("{v:.4}")
                    } else {
                        "inf".to_string()
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

fn snap_goal(speed: &Grid<f64>, goal: Cell) -> Option<Cell> {
    let passable = |c: Cell| speed.get(c).is_some_and(|&s| s > 0.0);
    if passable(goal) {
        return Some(goal);
    }
    let mut best: Option<(i64, Cell)> = None;
    for dy in -SNAP_RADIUS..=SNAP_RADIUS {
        for dx in -SNAP_RADIUS..=SNAP_RADIUS {
            let c = goal.offset(dx, dy);
            let d2 = dx * dx + dy * dy;
            if d2 <= SNAP_RADIUS * SNAP_RADIUS && passable(c) && best.is_none_or(|(b, _)| d2 < b) {
                best = Some((d2, c));
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Distance field to `goal` over a speed grid.
pub fn fmm_field_on(speed: &Grid<f64>, goal: Cell, res: f64, until: Option<Cell>) -> DistanceField {
    let unreachable = || DistanceField {
        values: Grid::filled(speed.width(), speed.height(), f64::INFINITY),
        goal,
        status: FieldStatus::Unreachable,
        resolution: res,
    };
    if !speed.contains(goal) {
        return unreachable();
    }
    let Some(source) = snap_goal(speed, goal) else {
        return unreachable();
    };
    let values = fmm::solve(speed, source, res, until);
    DistanceField {
        values: Grid::from_vec(speed.width(), speed.height(), values),
        goal: source,
        status: if source == goal { FieldStatus::Ok } else { FieldStatus::Snapped },
        resolution: res,
    }
}

pub fn fmm_field(map: &LocalMap, goal: Cell) -> DistanceField {
    fmm_field_on(&map.speed_grid(), goal, map.resolution(), None)
}

/// Field solved only as far as the agent cell.
pub fn fmm_field_to_agent(map: &LocalMap, goal: Cell) -> DistanceField {
    fmm_field_on(&map.speed_grid(), goal, map.resolution(), Some(map.agent_cell()))
}

/// Descent chain from `start`, at most `len` cells, avoiding diagonal steps
/// that cut a blocked corner.
pub fn descent_chain(field: &DistanceField, start: Cell, len: usize) -> Vec<Cell> {
    let mut chain = Vec::new();
    let mut cur = start;
    for _ in 0..len {
        let here = field.value(cur);
        let mut best: Option<(f64, Cell)> = None;
        for (dx, dy) in NEIGHBORS8 {
            let nb = cur.offset(dx, dy);
            let v = field.value(nb);
            if !v.is_finite() || v >= here {
                continue;
            }
            if dx != 0 && dy != 0 && !(field.value(cur.offset(dx, 0)).is_finite() && field.value(cur.offset(0, dy)).is_finite()) {
                continue;
            }
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, nb));
            }
        }
        let Some((_, nb)) = best else { break };
        chain.push(nb);
        cur = nb;
    }
    chain
}

/// Controller step toward the field's goal from a metric position in the
/// field's frame.
pub fn next_action_at(field: &DistanceField, origin: [f64; 2], pos: [f64; 2], heading: f64) -> LocalAction {
    let res = field.resolution;
    let cell = cell_at(pos, origin, res);
    let here = field.value(cell);
    if here < GOAL_TOLERANCE {
        return LocalAction::StopLocal;
    }
    let chain = descent_chain(field, cell, LOOKAHEAD);
    if chain.is_empty() {
        return if here.is_finite() && field.status != FieldStatus::Unreachable { LocalAction::StopLocal } else { LocalAction::Blocked };
    }
    // farthest chain cell with a clear straight segment from the agent
    let target = chain
        .iter()
        .rev()
        .find(|&&c| {
            let t = cell_center(c, origin, res);
            let (dx, dy) = (t[0] - pos[0], t[1] - pos[1]);
            let dist = dx.hypot(dy);
            cast_ray(pos, dy.atan2(dx), dist, origin, res, |b| !field.value(b).is_finite()) >= dist
        })
        .copied()
        .unwrap_or(chain[0]);
    let t = cell_center(target, origin, res);
    let want = (t[1] - pos[1]).atan2(t[0] - pos[0]);

    // among the headings reachable by turning, take the step that lands
    // lowest on the field; the target bearing only breaks ties
    let step = TURN_STEP_DEG.to_radians();
    let mut descending: Option<(f64, f64, i64)> = None;
    let mut moving: Option<(f64, i64)> = None;
    let better = |cur: Option<(f64, i64)>, off: f64, k: i64| match cur {
        None => true,
        Some((b_off, b_k)) => off < b_off - 1e-9 || ((off - b_off).abs() <= 1e-9 && (k.abs(), -k) < (b_k.abs(), -b_k)),
    };
    for k in -5..=6i64 {
        let h = wrap_angle(heading + k as f64 * step);
        let ahead = cast_ray(pos, h, STEP_LENGTH, origin, res, |c| !field.value(c).is_finite());
        let d = (ahead - 1e-6).max(0.0);
        let landing = field.value(cell_at([pos[0] + d * h.cos(), pos[1] + d * h.sin()], origin, res));
        let off = wrap_angle(h - want).abs();
        if landing < here
            && descending.is_none_or(|(l, o, dk)| landing < l - 1e-9 || ((landing - l).abs() <= 1e-9 && better(Some((o, dk)), off, k)))
        {
            descending = Some((landing, off, k));
        }
        if d >= 0.5 * res && better(moving, off, k) {
            moving = Some((off, k));
        }
    }
    // no step lands lower when the remaining bend is tighter than one
    // step; fall back to the free heading nearest the target bearing
    match descending.map(|(_, o, k)| (o, k)).or(moving) {
        Some((_, 0)) => LocalAction::Forward,
        Some((_, k)) if k > 0 => LocalAction::TurnLeft,
        Some(_) => LocalAction::TurnRight,
        None => LocalAction::Blocked,
    }
}

/// Forward within tolerance, otherwise turn toward the target; a target
/// exactly behind turns left.
pub fn heading_action(error: f64) -> LocalAction {
    if error.abs() <= ALIGN_TOLERANCE_DEG.to_radians() + 1e-9 {
        LocalAction::Forward
    } else if error > 0.0 {
        LocalAction::TurnLeft
    } else {
        LocalAction::TurnRight
    }
}

/// Controller step for an agent at a cell center.
pub fn next_action(field: &DistanceField, agent_cell: Cell, agent_heading: f64) -> LocalAction {
    let origin = [0.0, 0.0];
    next_action_at(field, origin, cell_center(agent_cell, origin, field.resolution), agent_heading)
}

/// Step budget for a local plan given the current maximum depth reading.
pub fn local_budget(d_m: f64) -> usize {
    let steps = 2.0 * d_m / STEP_LENGTH;
    // guard against 2*3/0.4 landing a hair above 15
    let rounded = steps.round();
    if (steps - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        steps.ceil() as usize
    }
}
