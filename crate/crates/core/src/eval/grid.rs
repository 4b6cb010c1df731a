use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};

/// Regular evaluation grid over `bounds` with spacing `resolution`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdfGridSpec {
    pub bounds: Aabb<f64>,
    pub resolution: f64,
}

impl SdfGridSpec {
    /// Ground-truth bounds grown by `padding`, clipped to `root`.
    pub fn around(gt: Aabb<f64>, padding: f64, root: &Aabb<f64>, resolution: f64) -> Result<Self> {
        let bounds = gt
            .padded(padding)
            .intersection(root)
            .ok_or_else(|| Error::Config("evaluation bounds do not meet the root".into()))?;
        let spec = Self { bounds, resolution };
        spec.validate(root)?;
        Ok(spec)
    }

    pub fn validate(&self, root: &Aabb<f64>) -> Result<()> {
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::Config(format!("grid resolution {} must be positive", self.resolution)));
        }
        if !root.contains_box(&self.bounds) {
            return Err(Error::Config("evaluation grid leaves the root".into()));
        }
        Ok(())
    }

    /// Cells per axis (at least one).
    pub fn cells(&self) -> [usize; 3] {
        let size = self.bounds.size();
        std::array::from_fn(|a| ((size[a] / self.resolution - 1e-9).ceil() as usize).max(1))
    }

    /// Grid vertex `(i, j, k)`, clamped to the bounds on the last layer.
    pub fn vertex(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let p = self.bounds.min + Vec3::new(i as f64, j as f64, k as f64) * self.resolution;
        self.bounds.clamp(p)
    }

    /// Centers of all cells, x fastest.
    pub fn cell_centers(&self) -> Vec<Vec3> {
        let [nx, ny, nz] = self.cells();
        let mut out = Vec::with_capacity(nx * ny * nz);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let lo = self.vertex(i, j, k);
                    let hi = self.vertex(i + 1, j + 1, k + 1);
                    out.push((lo + hi) / 2.0);
                }
            }
        }
        out
    }
}
