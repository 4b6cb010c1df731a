use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::binio::{ReadLe, WriteLe};
use crate::error::{Error, Result};
use crate::geometry::rng::SampleRng;
use crate::geometry::{Frame, Vec3};
use crate::spatial::KdTree;

pub const BATCH_MAGIC: &[u8; 4] = b"NSBT";
pub const BATCH_VERSION: u32 = 1;

/// Record tags in a batch dump.
pub const TAG_SURFACE: i8 = 0;
pub const TAG_FREE: i8 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    /// Keyframes selected per step (`W`).
    pub window: usize,
    /// Rays per batch (`N`), split evenly over the training frames.
    pub rays: usize,
    /// Free-space margin `δ`.
    pub free_margin: f64,
    /// Perturbation spread `σ` of the ray parameter.
    pub perturb_sigma: f64,
    pub free_per_ray: usize,
    pub perturbed_per_ray: usize,
    /// IoU below which a frame becomes a keyframe.
    pub keyframe_iou: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            window: 8,
            rays: 20480,
            free_margin: 0.05,
            perturb_sigma: 0.06,
            free_per_ray: 1,
            perturbed_per_ray: 2,
            keyframe_iou: 0.85,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.rays == 0 {
            return Err(Error::Config("sampling window and ray count must be positive".into()));
        }
        if !(self.free_margin > 0.0 && self.free_margin < 0.5) {
            return Err(Error::Config("free-space margin must lie in (0, 0.5)".into()));
        }
        if !(self.perturb_sigma > 0.0 && self.perturb_sigma < 0.5) {
            return Err(Error::Config("perturbation sigma must lie in (0, 0.5)".into()));
        }
        if !(0.0..=1.0).contains(&self.keyframe_iou) {
            return Err(Error::Config("keyframe IoU threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbedSample {
    pub x: Vec3,
    /// Unsigned distance to the nearest surface sample.
    pub dist: f64,
    /// `+1` in front of the observed surface, `-1` behind it.
    pub sign: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeSample {
    pub x: Vec3,
    pub dist: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleBatch {
    pub surface: Vec<Vec3>,
    pub perturbed: Vec<PerturbedSample>,
    pub free: Vec<FreeSample>,
    pub seed: u64,
    /// Rays lost because a frame held fewer points than its quota.
    pub ray_shortfall: usize,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.surface.len() + self.perturbed.len() + self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Clamped ray parameter of a perturbed sample.
pub fn clamp_alpha(alpha: f64, sigma: f64) -> f64 {
    alpha.clamp(1.0 - 2.0 * sigma, 1.0 + 2.0 * sigma)
}

/// Draws surface, perturbed and free-space samples from `frames`, each
/// contributing `floor(rays / frames.len())` rays.
pub fn generate_batch(frames: &[&Frame], config: &SamplingConfig, seed: u64) -> Result<SampleBatch> {
    if frames.is_empty() {
        return Err(Error::Config("no frames to sample from".into()));
    }
    if config.rays < frames.len() {
        return Err(Error::Config(format!(
            "{} rays cannot cover {} frames",
            config.rays,
            frames.len()
        )));
    }
    let quota = config.rays / frames.len();
    let mut rng = SampleRng::new(seed);
    let mut batch = SampleBatch { seed, ..Default::default() };
    let sigma = config.perturb_sigma;
    let mut perturbed = Vec::new();
    let mut free = Vec::new();
    for frame in frames {
        if frame.points.is_empty() {
            return Err(Error::EmptyFrame(frame.id));
        }
        if frame.points.len() < quota {
            log::warn!(
                "insufficient rays: frame {} has {} points for a quota of {quota}",
                frame.id,
                frame.points.len()
            );
            batch.ray_shortfall += quota - frame.points.len();
        }
        let o = frame.origin;
        for i in rng.choose_distinct(frame.points.len(), quota) {
            let q = frame.points[i];
            batch.surface.push(q);
            for _ in 0..config.perturbed_per_ray {
                let a = clamp_alpha(1.0 + sigma * rng.normal(), sigma);
                perturbed.push((o + (q - o) * a, if a < 1.0 { 1.0 } else { -1.0 }));
            }
            for _ in 0..config.free_per_ray {
                let l = rng.uniform_in(config.free_margin, 1.0 - config.free_margin);
                free.push(o + (q - o) * l);
            }
        }
    }
    let index = KdTree::build(&batch.surface);
    let dist = |x: Vec3| index.nearest(x).map(|(_, d)| d).expect("surface set non-empty");
    batch.perturbed = perturbed.into_iter().map(|(x, sign)| PerturbedSample { x, dist: dist(x), sign }).collect();
    batch.free = free.into_iter().map(|x| FreeSample { x, dist: dist(x) }).collect();
    Ok(batch)
}

/// One record of a batch dump.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DumpRecord {
    pub x: [f32; 3],
    pub dist: f32,
    pub tag: i8,
}

/// Writes every sample as `f32[3] point, f32 distance, i8 tag`
/// (surface 0, perturbed ±1, free 2).
pub fn write_batch_dump<W: Write>(w: &mut W, batch: &SampleBatch) -> Result<()> {
    w.write_all(BATCH_MAGIC)?;
    w.put_u32(BATCH_VERSION)?;
    w.put_u64(batch.seed)?;
    w.put_u32(batch.len() as u32)?;
    let mut put = |x: Vec3, d: f64, tag: i8| -> Result<()> {
        for c in x.to_array() {
            w.put_f32(c as f32)?;
        }
        w.put_f32(d as f32)?;
        w.put_i8(tag)?;
        Ok(())
    };
    for &x in &batch.surface {
        put(x, 0.0, TAG_SURFACE)?;
    }
    for p in &batch.perturbed {
        put(p.x, p.dist, p.sign as i8)?;
    }
    for f in &batch.free {
        put(f.x, f.dist, TAG_FREE)?;
    }
    Ok(())
}

pub fn read_batch_dump<R: Read>(r: &mut R) -> Result<(u64, Vec<DumpRecord>)> {
    if &r.get_array::<4>()? != BATCH_MAGIC {
        return Err(Error::format("batch dump", "bad magic"));
    }
    let version = r.get_u32()?;
    if version != BATCH_VERSION {
        return Err(Error::format("batch dump", format!("unsupported version {version}")));
    }
    let seed = r.get_u64()?;
    let n = r.get_u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let x = [r.get_f32()?, r.get_f32()?, r.get_f32()?];
        let dist = r.get_f32()?;
        let tag = r.get_i8()?;
        if !matches!(tag, -1..=2) {
            return Err(Error::format("batch dump", format!("unknown tag {tag}")));
        }
        out.push(DumpRecord { x, dist, tag });
    }
    Ok((seed, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(id: u64, n: usize) -> Frame {
        let mut rng = SampleRng::new(id);
        Frame {
            id,
            origin: Vec3::new(0.1, -0.2, 0.0),
            points: (0..n).map(|_| rng.unit_vector() * 1.3).collect(),
        }
    }

    #[test]
    fn sizes_ranges_and_determinism() {
        let (a, b) = (frame(1, 500), frame(2, 500));
        let cfg = SamplingConfig { rays: 300, ..Default::default() };
        let batch = generate_batch(&[&a, &b], &cfg, 42).unwrap();
        assert_eq!(batch.surface.len(), 300);
        assert_eq!(batch.perturbed.len(), 600);
        assert_eq!(batch.free.len(), 300);
        for (i, f) in batch.free.iter().enumerate() {
            let origin = if i < 150 { a.origin } else { b.origin };
            let q = batch.surface[i];
            let t = f.x.distance(origin) / q.distance(origin);
            assert!(t > 0.05 - 1e-12 && t < 0.95 + 1e-12);
        }
        for (i, p) in batch.perturbed.iter().enumerate() {
            let origin = if i < 300 { a.origin } else { b.origin };
            let q = batch.surface[i / 2];
            let t = p.x.distance(origin) / q.distance(origin);
            assert!((0.88 - 1e-12..=1.12 + 1e-12).contains(&t));
            assert_eq!(p.sign, if t < 1.0 { 1.0 } else { -1.0 });
            assert!(p.dist >= 0.0);
        }
        assert_eq!(generate_batch(&[&a, &b], &cfg, 42).unwrap(), batch);
        assert_ne!(generate_batch(&[&a, &b], &cfg, 43).unwrap(), batch);
    }

    #[test]
    fn single_ray_distance() {
        let f = Frame { id: 0, origin: Vec3::zero(), points: vec![Vec3::new(2.0, 0.0, 0.0)] };
        let cfg = SamplingConfig { rays: 1, ..Default::default() };
        let batch = generate_batch(&[&f], &cfg, 1).unwrap();
        let fs = batch.free[0];
        assert!((fs.dist - (2.0 - fs.x.x)).abs() < 1e-12);
    }

    #[test]
    fn short_frames_reduce_the_quota() {
        let (a, b) = (frame(1, 10), frame(2, 400));
        let cfg = SamplingConfig { rays: 200, ..Default::default() };
        let batch = generate_batch(&[&a, &b], &cfg, 3).unwrap();
        assert_eq!(batch.surface.len(), 110);
        assert_eq!(batch.ray_shortfall, 90);
    }

    #[test]
    fn alpha_clamp() {
        assert_eq!(clamp_alpha(0.5, 0.06), 0.88);
        assert_eq!(clamp_alpha(1.5, 0.06), 1.12);
        assert_eq!(clamp_alpha(1.01, 0.06), 1.01);
    }

    #[test]
    fn dump_roundtrip() {
        let a = frame(5, 50);
        let cfg = SamplingConfig { rays: 20, ..Default::default() };
        let batch = generate_batch(&[&a], &cfg, 8).unwrap();
        let mut buf = Vec::new();
        write_batch_dump(&mut buf, &batch).unwrap();
        let (seed, recs) = read_batch_dump(&mut buf.as_slice()).unwrap();
        assert_eq!(seed, 8);
        assert_eq!(recs.len(), 80);
        assert_eq!(recs.iter().filter(|r| r.tag == TAG_FREE).count(), 20);
        assert_eq!(recs[20].dist, batch.perturbed[0].dist as f32);
    }
}
