//! Geometric types, analytic scene oracles and synthetic frame generation.

mod aabb;
pub mod frames;
pub mod rng;
mod scene;
mod vector;

pub use aabb::Aabb;
pub use frames::{generate_frames, Frame};
pub use scene::{AnalyticScene, Primitive, SceneFile, MEDIAL_TOLERANCE, ROOM_SCENE};
pub use vector::Vector3;

pub type Vec3 = Vector3<f64>;
pub type Point3 = Vector3<f64>;
