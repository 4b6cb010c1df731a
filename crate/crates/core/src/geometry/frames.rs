//! Synthetic sensor frames: sphere-traced rays against an analytic scene, plus
//! the binary frame file and its plain-text manifest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::rng::SampleRng;
use super::{Aabb, AnalyticScene, Vec3};
use crate::binio::{ReadLe, WriteLe};
use crate::error::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"NSDF";
pub const FRAME_VERSION: u32 = 1;

pub const HIT_TOLERANCE: f64 = 1e-4;
pub const MAX_MARCH_STEPS: usize = 256;
pub const MIN_MARCH_STEP: f64 = 1e-5;

/// One posed observation: sensor origin and surface points in the global
/// frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub id: u64,
    pub origin: Vec3,
    pub points: Vec<Vec3>,
}

impl Frame {
    /// Drops points outside `root`, returning how many were removed.
    pub fn retain_inside(&mut self, root: &Aabb<f64>) -> usize {
        let before = self.points.len();
        self.points.retain(|p| root.contains(*p));
        before - self.points.len()
    }
}

/// Sphere-traces a ray; `None` on leaving the root or running out of steps.
pub fn march(scene: &AnalyticScene<f64>, origin: Vec3, dir: Vec3) -> Option<Vec3> {
    let root = scene.root();
    let mut t = 0.0;
    for _ in 0..MAX_MARCH_STEPS {
        let p = origin + dir * t;
        if !root.contains(p) {
            return None;
        }
        let d = scene.sdf(p);
        if d.abs() < HIT_TOLERANCE {
            return Some(p);
        }
        t += d.max(MIN_MARCH_STEP);
    }
    None
}

/// Casts `rays_per_frame` uniformly random rays from each pose.
///
/// Frame `i` draws from a generator seeded with `seed ^ i`. Hit points are
/// rounded to `f32` so in-memory frames equal their on-disk form.
pub fn generate_frames(
    scene: &AnalyticScene<f64>,
    trajectory: &[Vec3],
    rays_per_frame: usize,
    seed: u64,
) -> Result<Vec<Frame>> {
    trajectory
        .iter()
        .enumerate()
        .map(|(i, &origin)| {
            if scene.sdf(origin) <= 0.0 {
                return Err(Error::Scene(format!("pose {i} {origin:?} is not in free space")));
            }
            let id = i as u64;
            let mut rng = SampleRng::new(seed ^ id);
            let points: Vec<Vec3> = (0..rays_per_frame)
                .filter_map(|_| march(scene, origin, rng.unit_vector()))
                .map(|p| p.cast::<f32>().cast::<f64>())
                .collect();
            if points.is_empty() {
                return Err(Error::EmptyFrame(id));
            }
            Ok(Frame { id, origin, points })
        })
        .collect()
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<()> {
    w.write_all(FRAME_MAGIC)?;
    w.put_u32(FRAME_VERSION)?;
    for c in frame.origin.to_array() {
        w.put_f64(c)?;
    }
    let count = u32::try_from(frame.points.len())
        .map_err(|_| Error::format("frame", "too many points"))?;
    w.put_u32(count)?;
    for p in &frame.points {
        for c in p.to_array() {
            w.put_f32(c as f32)?;
        }
    }
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R, id: u64) -> Result<Frame> {
    let magic = r.get_array::<4>()?;
    if &magic != FRAME_MAGIC {
        return Err(Error::format("frame", format!("bad magic {magic:?}")));
    }
    let version = r.get_u32()?;
    if version != FRAME_VERSION {
        return Err(Error::format("frame", format!("unsupported version {version}")));
    }
    let origin = Vec3::new(r.get_f64()?, r.get_f64()?, r.get_f64()?);
    let count = r.get_u32()? as usize;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let p = Vec3::new(r.get_f32()? as f64, r.get_f32()? as f64, r.get_f32()? as f64);
        if !p.is_finite() {
            return Err(Error::format("frame", "non-finite point"));
        }
        points.push(p);
    }
    if !origin.is_finite() {
        return Err(Error::format("frame", "non-finite origin"));
    }
    Ok(Frame { id, origin, points })
}

/// Writes `frame_XXXXX.bin` files plus `frames.txt` listing them in order.
/// Returns the manifest path.
pub fn write_frame_set(dir: &Path, frames: &[Frame]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let manifest = dir.join("frames.txt");
    let mut m = BufWriter::new(File::create(&manifest)?);
    for f in frames {
        let name = format!("frame_{:05}.bin", f.id);
        let mut w = BufWriter::new(File::create(dir.join(&name))?);
        write_frame(&mut w, f)?;
        w.flush()?;
        writeln!(m, "{name}")?;
    }
    m.flush()?;
    Ok(manifest)
}

/// Frame file paths listed by a manifest, resolved against its directory.
/// Blank lines and `#` comments are ignored.
pub fn read_manifest(manifest: &Path) -> Result<Vec<PathBuf>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let reader = BufReader::new(File::open(manifest)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(base.join(line));
    }
    Ok(out)
}

/// Loads every frame of a manifest; ids follow manifest order.
pub fn load_frames(manifest: &Path) -> Result<Vec<Frame>> {
    read_manifest(manifest)?
        .iter()
        .enumerate()
        .map(|(i, p)| read_frame(&mut BufReader::new(File::open(p)?), i as u64))
        .collect()
}
