//! The explicit SDF prior: a semi-sparse octree whose shared vertices carry
//! learnable distance and gradient estimates.

mod config;
pub mod interp;
mod tree;

pub use config::OctreeConfig;
pub use interp::{blend_ga, blend_tl, interp_weights};
pub use tree::{
    AllocationReport, InterpMode, Interpolation, OctantAddr, SemiSparseOctree, StructureMode,
    VertexData, VertexKey, GRADIENT_CLAMP, VERTEX_STRIDE,
};
