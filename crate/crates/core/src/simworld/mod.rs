//! Grid-world houses, agent kinematics with actuation and odometry noise, and
//! synthetic sensors.

mod house;
mod sensors;

use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SeaError};
use crate::grid::{cast_ray, cell_at, cell_center, Cell, Grid, NEIGHBORS8};
pub use crate::grid::{Pose2, PoseDelta};
use crate::rng::SeaRng;
use crate::SCHEMA_VERSION;

pub use house::{generate_house, HouseConfig, ObjectPrior};
pub use sensors::{
    instance_prototype, observe, Detection, FeatureBank, Observation, SceneFeatures, Simulator, DEPTH_RAYS, DIRECTIONAL_FOV_DEG,
    PLACE_RAW_DIM, SENSOR_RANGE,
};

/// Episode step limit.
pub const MAX_STEPS: usize = 500;
/// Distance to a goal instance that counts as success.
pub const SUCCESS_DISTANCE: f64 = 1.0;
pub const FORWARD_STEP: f64 = 0.4;
pub const TURN_DEG: f64 = 30.0;

pub const CATEGORY_NAMES: [&str; 21] = [
    "bed",
    "sofa",
    "tv_monitor",
    "refrigerator",
    "stove",
    "sink",
    "toilet",
    "bathtub",
    "dining_table",
    "chair",
    "wardrobe",
    "plant",
    "desk",
    "shower",
    "cabinet",
    "nightstand",
    "lamp",
    "bookshelf",
    "counter",
    "towel",
    "shoe_rack",
];

pub fn n_categories() -> usize {
    CATEGORY_NAMES.len()
}

pub fn category_index(name: &str) -> Option<usize> {
    CATEGORY_NAMES.iter().position(|&n| n == name)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomType {
    LivingRoom,
    Bedroom,
    Kitchen,
    Closet,
    DiningRoom,
    Bathroom,
    Toilet,
    Hallway,
}

impl RoomType {
    pub const ALL: [RoomType; 8] = [
        RoomType::LivingRoom,
        RoomType::Bedroom,
        RoomType::Kitchen,
        RoomType::Closet,
        RoomType::DiningRoom,
        RoomType::Bathroom,
        RoomType::Toilet,
        RoomType::Hallway,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap_or(0)
    }
}

/// Axis-aligned cell rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn contains(&self, c: Cell) -> bool {
        c.x >= self.x0 && c.y >= self.y0 && c.x < self.x0 + self.w as i64 && c.y < self.y0 + self.h as i64
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.y0..self.y0 + self.h as i64).flat_map(move |y| (self.x0..self.x0 + self.w as i64).map(move |x| Cell::new(x, y)))
    }

    /// Chebyshev gap between two rectangles, 0 when they touch or overlap.
    pub fn gap(&self, o: &Rect) -> i64 {
        let gx = (o.x0 - (self.x0 + self.w as i64 - 1)).max(self.x0 - (o.x0 + o.w as i64 - 1)) - 1;
        let gy = (o.y0 - (self.y0 + self.h as i64 - 1)).max(self.y0 - (o.y0 + o.h as i64 - 1)) - 1;
        gx.max(gy).max(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub rect: Rect,
    pub room_type: RoomType,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Door {
    pub rect: Rect,
    pub rooms: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: usize,
    /// Category the detector reports. For decoys this is the category they
    /// resemble.
    pub category: usize,
    pub footprint: Rect,
    pub room: usize,
    #[serde(default)]
    pub decoy: bool,
    pub proto_seed: u64,
}

impl ObjectInstance {
    pub fn center(&self, res: f64) -> [f64; 2] {
        let f = &self.footprint;
        [(f.x0 as f64 + f.w as f64 / 2.0) * res, (f.y0 as f64 + f.h as f64 / 2.0) * res]
    }
}

/// Immutable house. Cell (0, 0) starts at the metric origin.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    pub seed: u64,
    pub resolution: f64,
    walls: Grid<bool>,
    occupied: Grid<bool>,
    room_of: Grid<i32>,
    pub rooms: Vec<Room>,
    pub doors: Vec<Door>,
    pub objects: Vec<ObjectInstance>,
}

impl GridWorld {
    pub fn new(seed: u64, resolution: f64, walls: Grid<bool>, rooms: Vec<Room>, doors: Vec<Door>) -> Self {
        let mut room_of = Grid::filled(walls.width(), walls.height(), -1);
        for (i, r) in rooms.iter().enumerate() {
            for c in r.rect.cells() {
                room_of.set(c, i as i32);
            }
        }
        for d in &doors {
            for c in d.rect.cells() {
                room_of.set(c, d.rooms[0] as i32);
            }
        }
        Self { seed, resolution, occupied: walls.clone(), walls, room_of, rooms, doors, objects: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.walls.width()
    }

    pub fn height(&self) -> usize {
        self.walls.height()
    }

    pub fn occupancy(&self) -> &Grid<bool> {
        &self.occupied
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.occupied.get(c) == Some(&false)
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Cell {
        cell_at(p, [0.0, 0.0], self.resolution)
    }

    pub fn center_of(&self, c: Cell) -> [f64; 2] {
        cell_center(c, [0.0, 0.0], self.resolution)
    }

    pub fn room_at(&self, p: [f64; 2]) -> Option<usize> {
        self.room_of.get(self.cell_of(p)).and_then(|&r| usize::try_from(r).ok())
    }

    pub(crate) fn footprint_ok(&self, fp: Rect) -> bool {
        let inside_room = self.rooms.iter().any(|r| fp.cells().all(|c| r.rect.contains(c)));
        inside_room
            && fp.cells().all(|c| self.is_free(c))
            && self.doors.iter().all(|d| fp.gap(&d.rect) >= 3)
            && self.objects.iter().all(|o| o.footprint.gap(&fp) >= 2)
    }

    pub(crate) fn add_object(&mut self, o: ObjectInstance) {
        for c in o.footprint.cells() {
            self.occupied.set(c, true);
        }
        self.objects.push(o);
    }

    pub(crate) fn remove_last_object(&mut self) {
        if let Some(o) = self.objects.pop() {
            for c in o.footprint.cells() {
                let wall = self.walls[c];
                self.occupied.set(c, wall);
            }
        }
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.occupied.cells().filter(|&c| !self.occupied[c])
    }

    pub fn is_connected(&self) -> bool {
        let total = self.free_cells().count();
        match self.free_cells().next() {
            None => false,
            Some(start) => house::flood(&self.occupied, start) == total,
        }
    }

    /// True instances (decoys excluded) of `category`.
    pub fn instances_of(&self, category: usize) -> impl Iterator<Item = &ObjectInstance> + '_ {
        self.objects.iter().filter(move |o| o.category == category && !o.decoy)
    }

    /// Free cells touching the footprint of any true instance of `category`.
    pub fn goal_cells(&self, category: usize) -> Vec<Cell> {
        let mut out = Vec::new();
        for o in self.instances_of(category) {
            for c in o.footprint.cells() {
                for (dx, dy) in NEIGHBORS8 {
                    let nb = c.offset(dx, dy);
                    if self.is_free(nb) && !out.contains(&nb) {
                        out.push(nb);
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// Multi-source geodesic distance in meters over free cells, 8-connected
    /// with sqrt(2) diagonals and no corner cutting.
    pub fn geodesic_field(&self, sources: &[Cell]) -> Grid<f64> {
        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl Ord for Item {
            fn cmp(&self, o: &Self) -> std::cmp::Ordering {
                o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
            }
        }
        impl PartialOrd for Item {
            fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(o))
            }
        }
        let res = self.resolution;
        let mut dist = Grid::filled(self.width(), self.height(), f64::INFINITY);
        let mut heap = BinaryHeap::new();
        for &s in sources {
            if self.is_free(s) {
                dist.set(s, 0.0);
                heap.push(Item(0.0, self.occupied.index_of(s).expect("free cell in grid")));
            }
        }
        while let Some(Item(d, i)) = heap.pop() {
            let c = self.occupied.cell_of(i);
            if d > dist[c] {
                continue;
            }
            for (dx, dy) in NEIGHBORS8 {
                let nb = c.offset(dx, dy);
                if !self.is_free(nb) {
                    continue;
                }
                let diagonal = dx != 0 && dy != 0;
                if diagonal && !(self.is_free(c.offset(dx, 0)) && self.is_free(c.offset(0, dy))) {
                    continue;
                }
                let nd = d + if diagonal { std::f64::consts::SQRT_2 } else { 1.0 } * res;
                if nd < dist[nb] {
                    dist.set(nb, nd);
                    heap.push(Item(nd, self.occupied.index_of(nb).expect("neighbor in grid")));
                }
            }
        }
        dist
    }

    /// Geodesic distance between two metric points; infinite when either is
    /// not on a free cell or they are disconnected.
    pub fn geodesic(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let (ca, cb) = (self.cell_of(a), self.cell_of(b));
        if !self.is_free(ca) || !self.is_free(cb) {
            return f64::INFINITY;
        }
        self.geodesic_field(&[ca])[cb]
    }

    pub fn random_free_pose(&self, rng: &mut SeaRng) -> Pose2 {
        let free: Vec<Cell> = self.free_cells().collect();
        let c = free[rng.random_range(0..free.len())];
        let p = self.center_of(c);
        let k = rng.random_range(0..12) as f64;
        Pose2::new(p[0], p[1], crate::grid::wrap_angle((k * TURN_DEG).to_radians()))
    }

    /// Categories with at least one true instance.
    pub fn present_categories(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.objects.iter().filter(|o| !o.decoy).map(|o| o.category).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    width: usize,
    height: usize,
    resolution: f64,
    /// One string per row from y = 0, '#' for walls.
    rows: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    schema_version: u32,
    seed: u64,
    grid: GridFile,
    rooms: Vec<Room>,
    doors: Vec<Door>,
    objects: Vec<ObjectInstance>,
}

impl Serialize for GridWorld {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = (0..self.height() as i64)
            .map(|y| (0..self.width() as i64).map(|x| if self.walls[Cell::new(x, y)] { '#' } else { '.' }).collect())
            .collect();
        SceneFile {
            schema_version: SCHEMA_VERSION,
            seed: self.seed,
            grid: GridFile { width: self.width(), height: self.height(), resolution: self.resolution, rows },
            rooms: self.rooms.clone(),
            doors: self.doors.clone(),
            objects: self.objects.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridWorld {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let f = SceneFile::deserialize(d)?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(D::Error::custom(format!("unsupported scene schema {}", f.schema_version)));
        }
        let g = &f.grid;
        if g.rows.len() != g.height || g.rows.iter().any(|r| r.chars().count() != g.width) || g.resolution <= 0.0 {
            return Err(D::Error::custom("scene grid shape mismatch"));
        }
        let walls = Grid::from_vec(g.width, g.height, g.rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect());
        let mut world = GridWorld::new(f.seed, g.resolution, walls, f.rooms, f.doors);
        for (i, o) in f.objects.into_iter().enumerate() {
            if o.id != i || o.category >= n_categories() || o.room >= world.rooms.len() {
                return Err(D::Error::custom(format!("invalid object {i}")));
            }
            world.add_object(o);
        }
        Ok(world)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuationNoise {
    pub forward_sigma: f64,
    pub rotation_sigma_deg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseNoise {
    pub translation_sigma: f64,
    pub rotation_sigma_deg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionNoise {
    pub miss_rate: f64,
    pub score_jitter: f64,
    pub feature_sigma: f64,
    pub place_sigma: f64,
    pub image_sigma: f64,
    /// Drop in true-object detection score per meter of range.
    pub score_decay: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub actuation: ActuationNoise,
    pub pose: PoseNoise,
    pub detection: DetectionNoise,
}

impl Default for ActuationNoise {
    fn default() -> Self {
        Self { forward_sigma: 0.02, rotation_sigma_deg: 1.0 }
    }
}

impl Default for PoseNoise {
    fn default() -> Self {
        Self { translation_sigma: 0.0, rotation_sigma_deg: 0.0 }
    }
}

impl Default for DetectionNoise {
    fn default() -> Self {
        Self { miss_rate: 0.05, score_jitter: 0.03, feature_sigma: 0.05, place_sigma: 0.05, image_sigma: 0.01, score_decay: 0.05 }
    }
}

impl PoseNoise {
    /// Odometry noise for an integer noise level.
    pub fn level(level: u32) -> Self {
        Self { translation_sigma: 0.01 * level as f64, rotation_sigma_deg: 0.5 * level as f64 }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            actuation: ActuationNoise { forward_sigma: 0.0, rotation_sigma_deg: 0.0 },
            pose: PoseNoise::level(0),
            detection: DetectionNoise {
                miss_rate: 0.0,
                score_jitter: 0.0,
                feature_sigma: 0.0,
                place_sigma: 0.0,
                image_sigma: 0.0,
                score_decay: 0.05,
            },
        }
    }

    pub fn with_pose_level(mut self, level: u32) -> Self {
        self.pose = PoseNoise::level(level);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.detection;
        let sigmas = [
            self.actuation.forward_sigma,
            self.actuation.rotation_sigma_deg,
            self.pose.translation_sigma,
            self.pose.rotation_sigma_deg,
            d.score_jitter,
            d.feature_sigma,
            d.place_sigma,
            d.image_sigma,
            d.score_decay,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || !(0.0..=1.0).contains(&d.miss_rate) {
            return Err(SeaError::Config("noise parameters must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn gauss(rng: &mut SeaRng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).map_or(0.0, |n| n.sample(rng))
}

/// Agent ground truth plus its dead-reckoned estimate. Policies see only
/// odometry increments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub true_pose: Pose2,
    pub odom_pose: Pose2,
    pub steps: usize,
    pub done: bool,
    /// Metric length of the true trajectory.
    pub path_length: f64,
}

impl AgentState {
    pub fn new(start: Pose2) -> Self {
        Self { true_pose: start, odom_pose: start, steps: 0, done: false, path_length: 0.0 }
    }
}

/// Random streams used by the kinematics.
pub struct MotionRngs {
    pub actuation: SeaRng,
    pub pose: SeaRng,
}

impl GridWorld {
    /// Executes one action and returns the noisy odometry increment.
    pub fn step(&self, agent: &mut AgentState, action: Action, noise: &NoiseModel, rngs: &mut MotionRngs) -> Result<PoseDelta> {
        if agent.done {
            return Err(SeaError::ContractViolation("action after episode end".into()));
        }
        if agent.steps >= MAX_STEPS {
            return Err(SeaError::ContractViolation(format!("step limit {MAX_STEPS} reached")));
        }
        agent.steps += 1;
        // both streams advance once per step whatever the action, so runs
        // that differ only in noise levels stay aligned
        let a_lin = gauss(&mut rngs.actuation, noise.actuation.forward_sigma);
        let a_rot = gauss(&mut rngs.actuation, noise.actuation.rotation_sigma_deg.to_radians());
        let p_x = gauss(&mut rngs.pose, noise.pose.translation_sigma);
        let p_y = gauss(&mut rngs.pose, noise.pose.translation_sigma);
        let p_t = gauss(&mut rngs.pose, noise.pose.rotation_sigma_deg.to_radians());

        let truth = match action {
            Action::Stop => {
                agent.done = true;
                PoseDelta::default()
            }
            Action::Forward => {
                let want = (FORWARD_STEP + a_lin).max(0.0);
                let p = agent.true_pose;
                let free = cast_ray(p.position(), p.theta, want, [0.0, 0.0], self.resolution, |c| !self.is_free(c));
                let d = if free >= want { want } else { (free - 1e-6).max(0.0) };
                PoseDelta { dx: d, dy: 0.0, dtheta: 0.0 }
            }
            Action::TurnLeft => PoseDelta { dx: 0.0, dy: 0.0, dtheta: TURN_DEG.to_radians() + a_rot },
            Action::TurnRight => PoseDelta { dx: 0.0, dy: 0.0, dtheta: -TURN_DEG.to_radians() + a_rot },
        };
        agent.true_pose = agent.true_pose.compose(truth);
        agent.path_length += truth.dx.abs();
        let moved = truth.dx != 0.0 || truth.dtheta != 0.0;
        let odom = if moved { PoseDelta { dx: truth.dx + p_x, dy: truth.dy + p_y, dtheta: truth.dtheta + p_t } } else { truth };
        agent.odom_pose = agent.odom_pose.compose(odom);
        if agent.steps >= MAX_STEPS {
            agent.done = true;
        }
        Ok(odom)
    }
}

#[cfg(test)]
mod tests;
