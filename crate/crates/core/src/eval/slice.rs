use std::io::{Read, Write};

use crate::binio::{ReadLe, WriteLe};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::training::SdfPredictor;

pub const SLICE_MAGIC: &[u8; 4] = b"NSLC";
pub const SLICE_VERSION: u32 = 1;

/// Predicted distances on a horizontal plane, x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub origin: Vec3,
    pub z: f64,
    pub nx: u32,
    pub ny: u32,
    pub resolution: f64,
    pub values: Vec<f32>,
}

impl Slice {
    /// Samples `predictor` at `z` over the root's x/y extent, `resolution`
    /// apart, starting at the root's minimum corner.
    pub fn sample<P: SdfPredictor + ?Sized>(predictor: &P, z: f64, resolution: f64) -> Result<Self> {
        let root = predictor.root();
        if !(root.min.z..=root.max.z).contains(&z) {
            return Err(Error::OutOfBounds(Vec3::new(root.min.x, root.min.y, z)));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::Config(format!("slice resolution {resolution} must be positive")));
        }
        let size = root.size();
        let count = |s: f64| (s / resolution + 1e-9).floor() as u32 + 1;
        let (nx, ny) = (count(size.x), count(size.y));
        let origin = Vec3::new(root.min.x, root.min.y, z);
        let mut pts = Vec::with_capacity(nx as usize * ny as usize);
        for j in 0..ny {
            for i in 0..nx {
                pts.push(root.clamp(origin + Vec3::new(i as f64, j as f64, 0.0) * resolution));
            }
        }
        let values = predictor.predict_batch(&pts)?.into_iter().map(|v| v as f32).collect();
        Ok(Self { origin, z, nx, ny, resolution, values })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(SLICE_MAGIC)?;
        w.put_u32(SLICE_VERSION)?;
        for c in self.origin.to_array() {
            w.put_f64(c)?;
        }
        w.put_f64(self.z)?;
        w.put_u32(self.nx)?;
        w.put_u32(self.ny)?;
        w.put_f64(self.resolution)?;
        for &v in &self.values {
            w.put_f32(v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let magic = r.get_array::<4>()?;
        if &magic != SLICE_MAGIC {
            return Err(Error::format("slice", format!("bad magic {magic:?}")));
        }
        let version = r.get_u32()?;
        if version != SLICE_VERSION {
            return Err(Error::format("slice", format!("unsupported version {version}")));
        }
        let origin = Vec3::new(r.get_f64()?, r.get_f64()?, r.get_f64()?);
        let z = r.get_f64()?;
        let (nx, ny) = (r.get_u32()?, r.get_u32()?);
        let resolution = r.get_f64()?;
        let n = nx as usize * ny as usize;
        let mut values = Vec::with_capacity(n.min(1 << 26));
        for _ in 0..n {
            values.push(r.get_f32()?);
        }
        Ok(Self { origin, z, nx, ny, resolution, values })
    }
}
