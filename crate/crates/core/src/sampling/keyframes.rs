use std::sync::Arc;

use rustc_hash::FxHashSet;

use crate::geometry::Frame;

/// Leaf cells observed by one frame.
pub type OctantSet = FxHashSet<[u32; 3]>;

#[derive(Clone, Debug)]
pub struct Keyframe {
    pub frame: Arc<Frame>,
    pub octants: OctantSet,
}

/// `|a ∩ b| / |a ∪ b|`; two empty sets count as identical.
pub fn iou(a: &OctantSet, b: &OctantSet) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|c| large.contains(*c)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Retained frames in insertion order.
#[derive(Clone, Debug, Default)]
pub struct KeyframeStore {
    frames: Vec<Keyframe>,
}

impl KeyframeStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn get(&self, i: usize) -> &Keyframe {
        &self.frames[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Keyframe> {
        self.frames.iter()
    }

    pub fn last(&self) -> Option<&Keyframe> {
        self.frames.last()
    }

    /// Appends without the overlap test (used when restoring a run).
    pub fn push(&mut self, keyframe: Keyframe) {
        self.frames.push(keyframe);
    }

    /// Inserts `frame` when its overlap with the last keyframe is below
    /// `c_min`, or when the store is empty. Frames observing nothing are
    /// never inserted.
    pub fn maybe_insert(&mut self, frame: Arc<Frame>, octants: OctantSet, c_min: f64) -> bool {
        if octants.is_empty() {
            return false;
        }
        let insert = match self.frames.last() {
            None => true,
            Some(last) => iou(&octants, &last.octants) < c_min,
        };
        if insert {
            self.frames.push(Keyframe { frame, octants });
        }
        insert
    }

    /// Greedy coverage selection of up to `window` keyframes, as store
    /// indices in selection order.
    ///
    /// Each round takes the frame with the most unmasked octants (ties go to
    /// the most recent frame id) and masks them. Once everything is masked,
    /// the mask is reset to the last selected frame's octants.
    pub fn select(&self, window: usize) -> Vec<usize> {
        let mut selected: Vec<usize> = Vec::new();
        let mut taken = vec![false; self.frames.len()];
        let mut mask = OctantSet::default();
        while selected.len() < window.min(self.frames.len()) {
            let mut best = self.best_unmasked(&taken, &mask);
            if best.1 == 0 {
                mask = selected.last().map(|&i| self.frames[i].octants.clone()).unwrap_or_default();
                best = self.best_unmasked(&taken, &mask);
            }
            let i = best.0;
            taken[i] = true;
            mask.extend(self.frames[i].octants.iter().copied());
            selected.push(i);
        }
        selected
    }

    fn best_unmasked(&self, taken: &[bool], mask: &OctantSet) -> (usize, usize) {
        let mut best: Option<(usize, usize)> = None;
        for (i, kf) in self.frames.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let count = kf.octants.iter().filter(|c| !mask.contains(*c)).count();
            let better = match best {
                None => true,
                Some((b, bc)) => count > bc || (count == bc && kf.frame.id > self.frames[b].frame.id),
            };
            if better {
                best = Some((i, count));
            }
        }
        best.expect("an unselected frame remains")
    }
}
