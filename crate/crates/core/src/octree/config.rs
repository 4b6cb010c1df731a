use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};

/// Octree shape: `depth` layers (root at depth 0, leaves at `depth - 1` with
/// side `leaf_resolution`), the first `semi_sparse_depth` child layers
/// allocating sibling octants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OctreeConfig {
    pub depth: u32,
    pub semi_sparse_depth: u32,
    pub leaf_resolution: f64,
    /// Minimum corner of the root cube; centered on the origin when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_min: Option<[f64; 3]>,
}

impl OctreeConfig {
    pub fn paper_defaults() -> Self {
        Self { depth: 9, semi_sparse_depth: 5, leaf_resolution: 0.10, root_min: None }
    }

    pub fn desk_scale() -> Self {
        Self { depth: 7, semi_sparse_depth: 4, leaf_resolution: 0.05, root_min: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 || self.depth > 21 {
            return Err(Error::Config(format!("octree depth {} outside 2..=21", self.depth)));
        }
        if self.semi_sparse_depth < 1 || self.semi_sparse_depth >= self.depth {
            return Err(Error::Config(format!(
                "semi-sparse depth {} must satisfy 1 <= M < N = {}",
                self.semi_sparse_depth, self.depth
            )));
        }
        if !(self.leaf_resolution.is_finite() && self.leaf_resolution > 0.0) {
            return Err(Error::Config("leaf resolution must be positive".into()));
        }
        if let Some(m) = self.root_min {
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::Config("root_min must be finite".into()));
            }
        }
        Ok(())
    }

    /// Number of leaf cells along each root side, `2^(N-1)`.
    pub fn leaf_cells(&self) -> u32 {
        1 << (self.depth - 1)
    }

    pub fn root_side(&self) -> f64 {
        self.leaf_resolution * self.leaf_cells() as f64
    }

    pub fn root(&self) -> Aabb<f64> {
        let side = self.root_side();
        match self.root_min {
            Some(m) => Aabb::cube(Vec3::from(m), side),
            None => Aabb::centered_cube(side),
        }
    }

    /// Side of an octant at `depth`.
    pub fn octant_side(&self, depth: u32) -> f64 {
        self.leaf_resolution * (1u32 << (self.depth - 1 - depth)) as f64
    }
}
