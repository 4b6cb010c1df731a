//! Online Euclidean signed distance reconstruction from posed point clouds.
//!
//! An octree stores learnable distance values and gradients at its
//! vertices and interpolates them into a prior; a hash-grid encoder with a
//! small MLP adds a learned residual. Parameters are generic over the
//! storage scalar (`f32` in production, `f64` for gradient checks); all
//! accumulation is done in `f64`.

mod binio;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod num;
pub mod octree;
pub mod residual;
pub mod sampling;
pub mod spatial;
pub mod training;

pub use error::{Error, Result};

pub type Scene = geometry::AnalyticScene<f64>;

pub type Octree = octree::SemiSparseOctree<f32>;
pub type Network = residual::ResidualNet<f32>;
pub type Model = training::SdfModel<f32>;
pub type State = training::TrainState<f32>;
pub type Checkpoint = training::Checkpoint<f32>;

pub type Octree64 = octree::SemiSparseOctree<f64>;
pub type Network64 = residual::ResidualNet<f64>;
pub type Model64 = training::SdfModel<f64>;
pub type State64 = training::TrainState<f64>;
