//! Object-goal navigation with a semantic environment atlas.
//!
//! The crate is organised bottom-up:
//!
//! * [`features`]: unit-norm embeddings, spherical k-means and a small
//!   contrastive trainer for the place encoder.
//! * [`sgm`]: the per-episode semantic graph map (image, object and place
//!   nodes with their affinity matrices).
//! * [`atlas`]: cross-scene reachability and place-object statistics plus the
//!   in-episode relation updates.
//! * [`global_policy`]: target place, object importance, sector subgoals and
//!   semantic shortest paths.
//! * [`local_policy`]: agent-centric occupancy map, fast-marching distance
//!   fields and the deterministic controller.
//! * [`simworld`]: procedural grid-world houses, agent kinematics, noise and
//!   synthetic sensors.
//! * [`localize`]: graph localization and distance accuracy metrics.
//! * [`harness`]: episode loop, metrics, suites, persistence and plots.

pub mod atlas;
pub mod error;
pub mod features;
pub mod global_policy;
pub mod grid;
pub mod harness;
pub mod local_policy;
pub mod localize;
pub mod matrix;
pub mod rng;
pub mod sgm;
pub mod simworld;

pub use atlas::{Atlas, Conditional, RelationEvent, RelationKind, SceneSummary};
pub use error::{Result, SeaError};
pub use features::{cosine_sim, ClusterModel, FeatureVec, PlaceEmbedder, PlaceModel};
pub use global_policy::{Sector, SemanticPath, SubgoalCandidate};
pub use harness::{EpisodeFlags, EpisodeResult, EpisodeSpec, Metrics, StopReason};
pub use local_policy::{DistanceField, LocalAction, LocalMap};
pub use matrix::Matrix;
pub use sgm::SemanticGraphMap;
pub use simworld::{Action, GridWorld, NoiseModel, Observation, Pose2};

/// Version tag written into every persisted JSON document.
pub const SCHEMA_VERSION: u32 = 1;
