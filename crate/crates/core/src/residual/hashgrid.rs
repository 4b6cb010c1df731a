use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::binio::{ReadLe, WriteLe};
use crate::error::{Error, Result};
use crate::geometry::rng::SampleRng;
use crate::geometry::{Aabb, Vec3};
use crate::num::Real;

const PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

/// Half-width of the uniform initialization of table entries.
pub const TABLE_INIT_SCALE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HashGridConfig {
    /// Cells per root side, one entry per level, coarse to fine.
    pub resolutions: Vec<u32>,
    pub features: u32,
    pub table_size: u32,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        Self { resolutions: vec![16, 32, 64, 128], features: 2, table_size: 1 << 19 }
    }
}

impl HashGridConfig {
    pub fn levels(&self) -> usize {
        self.resolutions.len()
    }

    pub fn output_dim(&self) -> usize {
        self.levels() * self.features as usize
    }

    fn level_len(&self) -> usize {
        self.table_size as usize * self.features as usize
    }

    pub fn parameter_count(&self) -> usize {
        self.levels() * self.level_len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() || self.features == 0 {
            return Err(Error::Config("hash grid needs at least one level and one feature".into()));
        }
        if self.resolutions[0] == 0 || self.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("hash grid resolutions must be positive and strictly increasing".into()));
        }
        if !self.table_size.is_power_of_two() {
            return Err(Error::Config(format!("hash table size {} is not a power of two", self.table_size)));
        }
        Ok(())
    }
}

#[inline]
pub fn hash_corner(c: [u32; 3], table_size: u32) -> u32 {
    (c[0].wrapping_mul(PRIMES[0]) ^ c[1].wrapping_mul(PRIMES[1]) ^ c[2].wrapping_mul(PRIMES[2]))
        & (table_size - 1)
}

/// Table rows and trilinear weights touched by one point at one level.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LevelFootprint {
    pub rows: [u32; 8],
    pub weights: [f64; 8],
}

/// Multi-resolution hash-grid encoder over a fixed root cube.
#[derive(Clone, Debug)]
pub struct HashGrid<T> {
    config: HashGridConfig,
    root: Aabb<f64>,
    /// Level-major, then row, then feature.
    tables: Vec<T>,
}

impl<T: Real> HashGrid<T> {
    pub fn zeros(config: HashGridConfig, root: Aabb<f64>) -> Result<Self> {
        config.validate()?;
        let tables = vec![T::zero(); config.parameter_count()];
        Ok(Self { config, root, tables })
    }

    /// Entries uniform in `±TABLE_INIT_SCALE`.
    pub fn new(config: HashGridConfig, root: Aabb<f64>, rng: &mut SampleRng) -> Result<Self> {
        let mut grid = Self::zeros(config, root)?;
        for v in &mut grid.tables {
            *v = T::lit(rng.uniform_in(-TABLE_INIT_SCALE, TABLE_INIT_SCALE));
        }
        Ok(grid)
    }

    pub fn config(&self) -> &HashGridConfig {
        &self.config
    }

    pub fn root(&self) -> &Aabb<f64> {
        &self.root
    }

    pub fn params(&self) -> &[T] {
        &self.tables
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.tables
    }

    /// Flat parameter index of `(level, row, feature)`.
    pub fn param_index(&self, level: usize, row: u32, feature: usize) -> usize {
        level * self.config.level_len() + row as usize * self.config.features as usize + feature
    }

    pub fn footprint(&self, level: usize, x: Vec3) -> LevelFootprint {
        let n = self.config.resolutions[level];
        let u = (x - self.root.min) / self.root.size().x * n as f64;
        let mut base = [0u32; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let c = u[a].floor().clamp(0.0, (n - 1) as f64);
            base[a] = c as u32;
            frac[a] = (u[a] - c).clamp(0.0, 1.0);
        }
        let mut fp = LevelFootprint::default();
        for k in 0..8 {
            let off = [(k & 1) as u32, ((k >> 1) & 1) as u32, ((k >> 2) & 1) as u32];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            fp.rows[k] = hash_corner(std::array::from_fn(|a| base[a] + off[a]), self.config.table_size);
            fp.weights[k] = w;
        }
        fp
    }

    /// Concatenated per-level features of `x`, coarse to fine, written into
    /// `out` (length `output_dim`); returns the per-level footprints.
    pub fn encode_into(&self, x: Vec3, out: &mut [f64], footprints: &mut [LevelFootprint]) -> Result<()> {
        if !(x.is_finite() && self.root.contains(x)) {
            return Err(Error::OutOfBounds(x));
        }
        let f = self.config.features as usize;
        for level in 0..self.config.levels() {
            let fp = self.footprint(level, x);
            for j in 0..f {
                let mut acc = 0.0;
                for k in 0..8 {
                    acc += fp.weights[k] * self.tables[self.param_index(level, fp.rows[k], j)].f64();
                }
                out[level * f + j] = acc;
            }
            footprints[level] = fp;
        }
        Ok(())
    }

    pub fn encode(&self, x: Vec3) -> Result<(Vec<f64>, Vec<LevelFootprint>)> {
        let mut out = vec![0.0; self.config.output_dim()];
        let mut fps = vec![LevelFootprint::default(); self.config.levels()];
        self.encode_into(x, &mut out, &mut fps)?;
        Ok((out, fps))
    }

    /// Scatters `d loss / d feature` back onto table entries.
    pub fn accumulate(&self, footprints: &[LevelFootprint], dfeat: &[f64], grads: &mut [f64]) {
        let f = self.config.features as usize;
        for (level, fp) in footprints.iter().enumerate() {
            for j in 0..f {
                let up = dfeat[level * f + j];
                if up == 0.0 {
                    continue;
                }
                for k in 0..8 {
                    grads[self.param_index(level, fp.rows[k], j)] += fp.weights[k] * up;
                }
            }
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.put_u32(self.config.levels() as u32)?;
        for &r in &self.config.resolutions {
            w.put_u32(r)?;
        }
        for c in self.root.min.to_array().into_iter().chain(self.root.max.to_array()) {
            w.put_f64(c)?;
        }
        for level in self.tables.chunks_exact(self.config.level_len()) {
            w.put_u32(self.config.table_size)?;
            w.put_u32(self.config.features)?;
            for v in level {
                w.put_f32(v.to_f32().unwrap_or(f32::NAN))?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let levels = r.get_u32()? as usize;
        if levels == 0 || levels > 64 {
            return Err(Error::format("hash section", format!("{levels} levels")));
        }
        let mut resolutions = Vec::with_capacity(levels);
        for _ in 0..levels {
            resolutions.push(r.get_u32()?);
        }
        let mut b = [0.0; 6];
        for v in &mut b {
            *v = r.get_f64()?;
        }
        if !(b.iter().all(|v| v.is_finite()) && (0..3).all(|a| b[a] < b[a + 3])) {
            return Err(Error::format("hash section", "invalid root bounds"));
        }
        let root = Aabb::new(Vec3::new(b[0], b[1], b[2]), Vec3::new(b[3], b[4], b[5]));
        let mut tables = Vec::new();
        let mut shape = None;
        for _ in 0..levels {
            let t = r.get_u32()?;
            let f = r.get_u32()?;
            if *shape.get_or_insert((t, f)) != (t, f) {
                return Err(Error::format("hash section", "levels disagree on table shape"));
            }
            let len = t as usize * f as usize;
            if len > 1 << 28 {
                return Err(Error::format("hash section", format!("table of {len} entries")));
            }
            tables.reserve(len);
            for _ in 0..len {
                tables.push(T::lit(r.get_f32()? as f64));
            }
        }
        let (table_size, features) = shape.expect("at least one level");
        let config = HashGridConfig { resolutions, features, table_size };
        config.validate()?;
        Ok(Self { config, root, tables })
    }
}
