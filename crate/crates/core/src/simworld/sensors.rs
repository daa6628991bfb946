//! Synthetic perception: detections with line of sight, a forward depth fan,
//! raw place features and position-dependent image features.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Action, AgentState, GridWorld, MotionRngs, NoiseModel, RoomType};
use crate::error::{Result, SeaError};
use crate::features::{FeatureVec, IMAGE_DIM, OBJECT_DIM};
use crate::grid::{bresenham, cast_ray, wrap_angle, Pose2, PoseDelta};
use crate::local_policy::{DepthRay, DepthScan};
use crate::rng::{derive, seeded, stream, streams, SeaRng};

pub const SENSOR_RANGE: f64 = 5.0;
pub const DIRECTIONAL_FOV_DEG: f64 = 120.0;
pub const DEPTH_RAYS: usize = 61;
pub const PLACE_RAW_DIM: usize = 64;
/// Length scale of the positional image kernel.
pub const IMAGE_LENGTH_SCALE: f64 = 1.2;
const IMAGE_POSITION_WEIGHT: f64 = 0.8;
const IMAGE_ROOM_WEIGHT: f64 = 0.6;
const INSTANCE_CATEGORY_WEIGHT: f64 = 0.6;
const INSTANCE_UNIQUE_WEIGHT: f64 = 0.8;
/// Root seed of the prototypes shared by every scene.
pub const BANK_SEED: u64 = 0x5EA;

fn noisy(rng: &mut SeaRng, proto: &FeatureVec, sigma: f64) -> FeatureVec {
    let noise: Vec<f64> = (0..proto.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    if sigma == 0.0 {
        return proto.clone();
    }
    let v = proto.as_slice().iter().zip(noise).map(|(p, n)| p + sigma * n).collect();
    FeatureVec::normalized(v).unwrap_or_else(|_| proto.clone())
}

/// Prototypes shared across scenes: one raw place vector per room type and
/// one appearance vector per object category.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBank {
    pub room_types: Vec<FeatureVec>,
    pub categories: Vec<FeatureVec>,
}

impl FeatureBank {
    pub fn new(seed: u64) -> Self {
        let mut rng = stream(seed, streams::PROTOTYPES);
        let room_types = RoomType::ALL.iter().map(|_| FeatureVec::random_unit(PLACE_RAW_DIM, &mut rng)).collect();
        let categories = (0..super::n_categories()).map(|_| FeatureVec::random_unit(OBJECT_DIM, &mut rng)).collect();
        Self { room_types, categories }
    }

    pub fn standard() -> Self {
        Self::new(BANK_SEED)
    }
}

impl Default for FeatureBank {
    fn default() -> Self {
        Self::standard()
    }
}

/// Per-scene appearance: random Fourier features for the positional image
/// component, one prototype per room instance and per object instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFeatures {
    pub bank: FeatureBank,
    omega: Vec<[f64; 2]>,
    phase: Vec<f64>,
    pub room_protos: Vec<FeatureVec>,
    pub object_protos: Vec<FeatureVec>,
}

impl SceneFeatures {
    pub fn new(world: &GridWorld, bank: &FeatureBank) -> Self {
        let mut rng = seeded(derive(world.seed, 0xFEA7));
        let inv = 1.0 / IMAGE_LENGTH_SCALE;
        let omega =
            (0..IMAGE_DIM).map(|_| [rng.sample::<f64, _>(StandardNormal) * inv, rng.sample::<f64, _>(StandardNormal) * inv]).collect();
        let phase = (0..IMAGE_DIM).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let room_protos = world.rooms.iter().map(|_| FeatureVec::random_unit(IMAGE_DIM, &mut rng)).collect();
        let object_protos = world.objects.iter().map(|o| instance_prototype(&bank.categories[o.category], o.proto_seed)).collect();
        Self { bank: bank.clone(), omega, phase, room_protos, object_protos }
    }

    fn rff(&self, p: [f64; 2]) -> Vec<f64> {
        let scale = (2.0 / IMAGE_DIM as f64).sqrt();
        self.omega.iter().zip(&self.phase).map(|(w, b)| scale * (w[0] * p[0] + w[1] * p[1] + b).cos()).collect()
    }

    /// Noise-free image feature at a position.
    pub fn image_prototype(&self, world: &GridWorld, p: [f64; 2]) -> FeatureVec {
        let mut v: Vec<f64> = self.rff(p).into_iter().map(|x| IMAGE_POSITION_WEIGHT * x).collect();
        if let Some(r) = world.room_at(p) {
            for (a, b) in v.iter_mut().zip(self.room_protos[r].as_slice()) {
                *a += IMAGE_ROOM_WEIGHT * b;
            }
        }
        FeatureVec::normalized(v).expect("random Fourier features are never all zero")
    }

    pub fn place_prototype(&self, world: &GridWorld, p: [f64; 2]) -> &FeatureVec {
        let t = world.room_at(p).map_or(RoomType::Hallway, |r| world.rooms[r].room_type);
        &self.bank.room_types[t.index()]
    }
}

/// Instance appearance: a mix of the category prototype and a per-instance
/// direction, so two instances of a category stay well apart.
pub fn instance_prototype(category: &FeatureVec, seed: u64) -> FeatureVec {
    let mut rng = seeded(seed);
    let own = FeatureVec::random_unit(category.dim(), &mut rng);
    let v =
        category.as_slice().iter().zip(own.as_slice()).map(|(c, u)| INSTANCE_CATEGORY_WEIGHT * c + INSTANCE_UNIQUE_WEIGHT * u).collect();
    FeatureVec::normalized(v).unwrap_or(own)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: usize,
    pub feature: FeatureVec,
    pub score: f64,
    /// Radians, positive to the right of the heading.
    pub bearing: f64,
    pub range: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub panoramic: Vec<Detection>,
    pub directional: Vec<Detection>,
    pub depth: DepthScan,
    pub place_raw: Vec<f64>,
    pub image: FeatureVec,
    pub pose_delta: PoseDelta,
}

impl GridWorld {
    /// Whether any footprint cell of object `id` is visible from `from`.
    pub fn line_of_sight(&self, from: [f64; 2], id: usize) -> bool {
        let o = &self.objects[id];
        let start = self.cell_of(from);
        o.footprint.cells().any(|target| bresenham(start, target).iter().skip(1).all(|&c| o.footprint.contains(c) || self.is_free(c)))
    }

    pub fn depth_scan(&self, pose: Pose2) -> DepthScan {
        let half = DIRECTIONAL_FOV_DEG / 2.0;
        let step = DIRECTIONAL_FOV_DEG / (DEPTH_RAYS - 1) as f64;
        let rays = (0..DEPTH_RAYS)
            .map(|i| {
                let bearing = (-half + step * i as f64).to_radians();
                let range =
                    cast_ray(pose.position(), pose.direction_of(bearing), SENSOR_RANGE, [0.0, 0.0], self.resolution, |c| !self.is_free(c));
                DepthRay { bearing, range, hit: range < SENSOR_RANGE }
            })
            .collect();
        DepthScan { rays, max_range: SENSOR_RANGE }
    }
}

/// Synthesizes an observation from the true pose.
pub fn observe(
    world: &GridWorld,
    scene: &SceneFeatures,
    pose: Pose2,
    noise: &NoiseModel,
    rng: &mut SeaRng,
    pose_delta: PoseDelta,
) -> Observation {
    let d = &noise.detection;
    let p = pose.position();
    let place_raw = noisy(rng, scene.place_prototype(world, p), d.place_sigma).into_vec();
    let image = noisy(rng, &scene.image_prototype(world, p), d.image_sigma);
    let mut panoramic = Vec::new();
    for (i, o) in world.objects.iter().enumerate() {
        let (bearing, range) = pose.bearing_range_to(o.center(world.resolution));
        if range > SENSOR_RANGE || !world.line_of_sight(p, i) {
            continue;
        }
        let missed = rng.random_bool(d.miss_rate);
        let jitter: f64 = rng.sample::<f64, _>(StandardNormal) * d.score_jitter;
        let feature = noisy(rng, &scene.object_protos[i], d.feature_sigma);
        if missed {
            continue;
        }
        // decoys look convincing from afar and fall apart up close
        let base = if o.decoy { 0.5 + 0.08 * range } else { 0.95 - d.score_decay * range };
        panoramic.push(Detection {
            category: o.category,
            feature,
            score: (base + jitter).clamp(0.0, 1.0),
            bearing: wrap_angle(bearing),
            range,
        });
    }
    let half = (DIRECTIONAL_FOV_DEG / 2.0).to_radians() + 1e-12;
    let directional = panoramic.iter().filter(|det| det.bearing.abs() <= half).cloned().collect();
    Observation { panoramic, directional, depth: world.depth_scan(pose), place_raw, image, pose_delta }
}

/// A running episode: world, agent and the three noise streams.
pub struct Simulator<'a> {
    pub world: &'a GridWorld,
    pub scene: &'a SceneFeatures,
    pub noise: NoiseModel,
    pub agent: AgentState,
    motion: MotionRngs,
    perception: SeaRng,
}

impl<'a> Simulator<'a> {
    pub fn new(world: &'a GridWorld, scene: &'a SceneFeatures, noise: NoiseModel, start: Pose2, seed: u64) -> Result<Self> {
        noise.validate()?;
        if !world.is_free(world.cell_of(start.position())) {
            return Err(SeaError::invalid(format!("start ({:.2}, {:.2}) is not on a free cell", start.x, start.y)));
        }
        Ok(Self {
            world,
            scene,
            noise,
            agent: AgentState::new(start),
            motion: MotionRngs { actuation: stream(seed, streams::ACTUATION), pose: stream(seed, streams::POSE) },
            perception: stream(seed, streams::PERCEPTION),
        })
    }

    /// Observation at the current pose with a zero odometry increment.
    pub fn observe(&mut self) -> Observation {
        observe(self.world, self.scene, self.agent.true_pose, &self.noise, &mut self.perception, PoseDelta::default())
    }

    pub fn step(&mut self, action: Action) -> Result<(Observation, bool)> {
        let delta = self.world.step(&mut self.agent, action, &self.noise, &mut self.motion)?;
        let obs = observe(self.world, self.scene, self.agent.true_pose, &self.noise, &mut self.perception, delta);
        Ok((obs, self.agent.done))
    }
}
