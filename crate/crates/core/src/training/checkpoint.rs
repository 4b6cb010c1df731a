//! `NSCK` checkpoint files: a magic, a version, then tagged sections
//! (`4-byte tag, u64 length, payload`).

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::binio::{ReadLe, WriteLe};
use crate::error::{Error, Result};
use crate::geometry::Frame;
use crate::num::Real;
use crate::octree::SemiSparseOctree;
use crate::residual::{HashGrid, Mlp, ResidualNet};
use crate::sampling::Keyframe;

use super::config::Config;
use super::model::SdfModel;
use super::optim::{Adam, Moments};
use super::trainer::TrainState;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn section<W: Write>(w: &mut W, tag: &[u8; 4], payload: &[u8]) -> Result<()> {
    w.write_all(tag)?;
    w.put_u64(payload.len() as u64)?;
    w.write_all(payload)?;
    Ok(())
}

/// Serializes the full training state.
pub fn write_checkpoint<T: Real, W: Write>(w: &mut W, state: &TrainState<T>) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.put_u32(CHECKPOINT_VERSION)?;
    section(w, b"META", state.config.to_toml().as_bytes())?;
    let mut buf = Vec::new();
    state.model.octree.write_to(&mut buf)?;
    section(w, b"OCTR", &buf)?;
    if let Some(net) = &state.model.net {
        buf.clear();
        net.write_hash(&mut buf)?;
        section(w, b"HASH", &buf)?;
        buf.clear();
        net.write_mlp(&mut buf)?;
        section(w, b"MLP\0", &buf)?;
    }
    buf.clear();
    buf.put_u64(state.step)?;
    buf.put_u64(state.frames_seen)?;
    buf.put_u32(state.keyframes.len() as u32)?;
    for kf in state.keyframes.iter() {
        buf.put_u64(kf.frame.id)?;
    }
    buf.put_u64(state.adam.t)?;
    buf.put_u32(state.adam.slots.len() as u32)?;
    for slot in &state.adam.slots {
        buf.put_u64(slot.m.len() as u64)?;
        for v in slot.m.iter().chain(&slot.v) {
            buf.put_f64(*v)?;
        }
    }
    section(w, b"TRAN", &buf)?;
    Ok(())
}

pub fn save_checkpoint<T: Real>(path: &Path, state: &TrainState<T>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, state)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Decoded checkpoint: the state minus keyframe contents, which live in the
/// frame stream and are re-attached by [`Checkpoint::into_state`].
#[derive(Debug)]
pub struct Checkpoint<T> {
    pub config: Config,
    pub model: SdfModel<T>,
    pub step: u64,
    pub frames_seen: u64,
    pub keyframe_ids: Vec<u64>,
    pub adam: Adam,
}

fn read_sections(bytes: &[u8]) -> Result<Vec<([u8; 4], &[u8])>> {
    let mut r = bytes;
    let magic = r.get_array::<4>()?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::format("checkpoint", format!("bad magic {magic:?}")));
    }
    let version = r.get_u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    while !r.is_empty() {
        let tag = r.get_array::<4>()?;
        let len = r.get_u64()?;
        if len > r.len() as u64 {
            return Err(Error::format("checkpoint", format!("section {:?} truncated", String::from_utf8_lossy(&tag))));
        }
        let (payload, rest) = r.split_at(len as usize);
        out.push((tag, payload));
        r = rest;
    }
    Ok(out)
}

fn expect_consumed(r: &[u8], what: &'static str) -> Result<()> {
    if r.is_empty() {
        Ok(())
    } else {
        Err(Error::format(what, format!("{} trailing bytes", r.len())))
    }
}

impl<T: Real> Checkpoint<T> {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let sections = read_sections(bytes)?;
        let get = |tag: &[u8; 4]| sections.iter().find(|(t, _)| t == tag).map(|(_, p)| *p);
        let meta = get(b"META").ok_or_else(|| Error::format("checkpoint", "missing META"))?;
        let meta = std::str::from_utf8(meta).map_err(|e| Error::format("checkpoint", e.to_string()))?;
        let config = Config::from_toml(meta)?;

        let mut r = get(b"OCTR").ok_or_else(|| Error::format("checkpoint", "missing OCTR"))?;
        let octree = SemiSparseOctree::read_from(&mut r)?;
        expect_consumed(r, "octree section")?;
        let net = match (get(b"HASH"), get(b"MLP\0")) {
            (Some(mut h), Some(mut m)) => {
                let grid = HashGrid::read_from(&mut h)?;
                let mlp = Mlp::read_from(&mut m)?;
                expect_consumed(h, "hash section")?;
                expect_consumed(m, "mlp section")?;
                Some(ResidualNet::from_parts(grid, mlp)?)
            }
            (None, None) => None,
            _ => return Err(Error::format("checkpoint", "HASH and MLP must appear together")),
        };
        if net.is_some() == config.model.prior_only {
            return Err(Error::format("checkpoint", "network sections disagree with the config"));
        }
        let model = SdfModel { octree, net, interp: config.model.interpolation };

        let mut r = get(b"TRAN").ok_or_else(|| Error::format("checkpoint", "missing TRAN"))?;
        let step = r.get_u64()?;
        let frames_seen = r.get_u64()?;
        let n = r.get_u32()? as usize;
        let mut keyframe_ids = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            keyframe_ids.push(r.get_u64()?);
        }
        let t = r.get_u64()?;
        let slots_n = r.get_u32()? as usize;
        let expected = Adam::new(&model);
        if slots_n != expected.slots.len() {
            return Err(Error::format("checkpoint", "optimizer slot count mismatch"));
        }
        let mut slots = Vec::with_capacity(slots_n);
        for (i, e) in expected.slots.iter().enumerate() {
            let len = r.get_u64()? as usize;
            if len != e.m.len() {
                return Err(Error::format("checkpoint", format!("optimizer slot {i} has {len} entries, expected {}", e.m.len())));
            }
            let mut read = || -> Result<Vec<f64>> { (0..len).map(|_| Ok(r.get_f64()?)).collect() };
            let m = read()?;
            let v = read()?;
            slots.push(Moments { m, v });
        }
        expect_consumed(r, "train section")?;
        Ok(Self { config, model, step, frames_seen, keyframe_ids, adam: Adam { t, slots } })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Rebuilds the training state, taking keyframe contents from `frames`
    /// (the same stream the run consumed).
    pub fn into_state(self, frames: &[Frame]) -> Result<TrainState<T>> {
        let mut state = TrainState::from_parts(self.config, self.model);
        state.adam = self.adam;
        state.step = self.step;
        state.frames_seen = self.frames_seen;
        for id in self.keyframe_ids {
            let mut frame = frames
                .iter()
                .find(|f| f.id == id)
                .cloned()
                .ok_or_else(|| Error::format("checkpoint", format!("keyframe {id} not in the frame stream")))?;
            frame.retain_inside(state.model.octree.root());
            let octants = state.model.octree.leaf_set(&frame.points);
            state.keyframes.push(Keyframe { frame: Arc::new(frame), octants });
        }
        Ok(state)
    }
}
