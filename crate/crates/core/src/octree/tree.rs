use std::io::{Read, Write};

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use super::interp::{corner_offset, interp_weights};
use super::OctreeConfig;
use crate::binio::{ReadLe, WriteLe};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3, Vector3};
use crate::num::Real;
use crate::spatial::KdTree;

/// Learnable scalars per vertex: `[d, gx, gy, gz]`.
pub const VERTEX_STRIDE: usize = 4;

/// Sanity bound on stored gradient norms, enforced after optimizer steps.
pub const GRADIENT_CLAMP: f64 = 10.0;

/// Integer coordinates on the finest vertex lattice (spacing = leaf
/// resolution), relative to the root minimum corner.
pub type VertexKey = [i32; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OctantAddr {
    pub depth: u32,
    pub cell: [u32; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexData<T> {
    pub d: T,
    pub g: Vector3<T>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureMode {
    #[default]
    SemiSparse,
    Sparse,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpMode {
    /// Gradient-augmented: blends first-order extrapolations from each vertex.
    #[default]
    GradientAugmented,
    /// Plain trilinear blend of vertex values.
    Trilinear,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AllocationReport {
    pub octants_created: usize,
    pub vertices_created: usize,
    pub dropped: usize,
}

/// Interpolation at one query point, with what is needed for backprop.
///
/// The value is linear in the vertex parameters:
/// `d/d(d_k) = weights[k]`, `d/d(g_k) = weights[k] * offsets[k]`
/// (the latter only in gradient-augmented mode).
#[derive(Clone, Copy, Debug)]
pub struct Interpolation {
    pub value: f64,
    pub octant: OctantAddr,
    pub vertices: [u32; 8],
    pub weights: [f64; 8],
    /// `x - x_k` per corner.
    pub offsets: [Vec3; 8],
}

/// Octree with learnable SDF values and gradients on shared lattice vertices.
///
/// Vertex indices are append-only: a vertex keeps its index (and its slot in
/// [`params`](Self::params)) for the lifetime of the tree.
#[derive(Clone, Debug)]
pub struct SemiSparseOctree<T> {
    config: OctreeConfig,
    mode: StructureMode,
    root: Aabb<f64>,
    /// Per depth: allocated cells and their child-existence masks.
    levels: Vec<FxHashMap<[u32; 3], u8>>,
    keys: Vec<VertexKey>,
    lookup: FxHashMap<VertexKey, u32>,
    params: Vec<T>,
}

fn child_bit(cell: [u32; 3]) -> u8 {
    1 << ((cell[0] & 1) | (cell[1] & 1) << 1 | (cell[2] & 1) << 2)
}

impl<T: Real> SemiSparseOctree<T> {
    /// A tree holding only the root octant, whose corner vertices start at
    /// `d = root side, g = 0`.
    pub fn new(config: OctreeConfig, mode: StructureMode) -> Result<Self> {
        config.validate()?;
        let root = config.root();
        let mut levels = vec![FxHashMap::default(); config.depth as usize];
        levels[0].insert([0, 0, 0], 0);
        let mut tree = Self {
            config,
            mode,
            root,
            levels,
            keys: Vec::new(),
            lookup: FxHashMap::default(),
            params: Vec::new(),
        };
        let side = tree.config.root_side();
        for k in 0..8 {
            let key = tree.corner_key(OctantAddr { depth: 0, cell: [0; 3] }, k);
            tree.push_vertex(key, VertexData { d: T::lit(side), g: Vector3::zero() });
        }
        Ok(tree)
    }

    pub fn config(&self) -> &OctreeConfig {
        &self.config
    }

    pub fn mode(&self) -> StructureMode {
        self.mode
    }

    pub fn root(&self) -> &Aabb<f64> {
        &self.root
    }

    pub fn vertex_count(&self) -> usize {
        self.keys.len()
    }

    pub fn octant_count(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    pub fn octants_at(&self, depth: u32) -> usize {
        self.levels[depth as usize].len()
    }

    pub fn contains_octant(&self, addr: OctantAddr) -> bool {
        self.levels
            .get(addr.depth as usize)
            .is_some_and(|l| l.contains_key(&addr.cell))
    }

    /// All allocated octants, sorted by depth then cell.
    pub fn octants(&self) -> Vec<OctantAddr> {
        let mut out: Vec<OctantAddr> = self
            .levels
            .iter()
            .enumerate()
            .flat_map(|(d, l)| l.keys().map(move |&cell| OctantAddr { depth: d as u32, cell }))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn vertex_key(&self, index: usize) -> VertexKey {
        self.keys[index]
    }

    pub fn vertex_index(&self, key: VertexKey) -> Option<usize> {
        self.lookup.get(&key).map(|&i| i as usize)
    }

    pub fn key_position(&self, key: VertexKey) -> Vec3 {
        let r = self.config.leaf_resolution;
        self.root.min + Vec3::new(key[0] as f64, key[1] as f64, key[2] as f64) * r
    }

    pub fn vertex_position(&self, index: usize) -> Vec3 {
        self.key_position(self.keys[index])
    }

    pub fn vertex(&self, index: usize) -> VertexData<T> {
        let p = &self.params[index * VERTEX_STRIDE..][..VERTEX_STRIDE];
        VertexData { d: p[0], g: Vector3::new(p[1], p[2], p[3]) }
    }

    pub fn set_vertex(&mut self, index: usize, v: VertexData<T>) {
        let p = &mut self.params[index * VERTEX_STRIDE..][..VERTEX_STRIDE];
        p[0] = v.d;
        p[1] = v.g.x;
        p[2] = v.g.y;
        p[3] = v.g.z;
    }

    /// `(key, value, gradient)` for every vertex in index order.
    pub fn parameters(&self) -> impl Iterator<Item = (VertexKey, VertexData<T>)> + '_ {
        (0..self.keys.len()).map(move |i| (self.keys[i], self.vertex(i)))
    }

    /// Overwrites every vertex with `f(position)`.
    pub fn set_vertices_with(&mut self, mut f: impl FnMut(Vec3) -> (f64, Vec3)) {
        for i in 0..self.keys.len() {
            let (d, g) = f(self.vertex_position(i));
            self.set_vertex(i, VertexData { d: T::lit(d), g: g.cast() });
        }
    }

    /// Rescales stored gradients whose norm exceeds `max_norm`.
    pub fn clamp_gradients(&mut self, max_norm: f64) {
        for p in self.params.chunks_exact_mut(VERTEX_STRIDE) {
            let n = (p[1].f64().powi(2) + p[2].f64().powi(2) + p[3].f64().powi(2)).sqrt();
            if n > max_norm {
                let s = max_norm / n;
                for v in &mut p[1..] {
                    *v = T::lit(v.f64() * s);
                }
            }
        }
    }

    fn push_vertex(&mut self, key: VertexKey, v: VertexData<T>) {
        self.lookup.insert(key, self.keys.len() as u32);
        self.keys.push(key);
        self.params.extend_from_slice(&[v.d, v.g.x, v.g.y, v.g.z]);
    }

    /// Lattice side length (in leaf units) of an octant at `depth`.
    fn lattice_side(&self, depth: u32) -> u32 {
        1 << (self.config.depth - 1 - depth)
    }

    pub fn corner_key(&self, addr: OctantAddr, k: usize) -> VertexKey {
        let s = self.lattice_side(addr.depth);
        let off = corner_offset(k);
        std::array::from_fn(|a| ((addr.cell[a] + off[a]) * s) as i32)
    }

    /// Minimum corner and side of an octant.
    pub fn octant_bounds(&self, addr: OctantAddr) -> (Vec3, f64) {
        let s = self.lattice_side(addr.depth);
        let lo = self.key_position(addr.cell.map(|c| (c * s) as i32));
        (lo, self.config.leaf_resolution * s as f64)
    }

    /// Leaf cell containing `x` (half-open cells; the root's max faces fold
    /// into the last cell).
    pub fn leaf_cell(&self, x: Vec3) -> Result<[u32; 3]> {
        if !(x.is_finite() && self.root.contains(x)) {
            return Err(Error::OutOfBounds(x));
        }
        let n = self.config.leaf_cells();
        let r = self.config.leaf_resolution;
        let u = (x - self.root.min) / r;
        Ok(u.to_array().map(|v| (v.floor().max(0.0) as u32).min(n - 1)))
    }

    /// Deepest allocated octant containing `x`.
    pub fn locate(&self, x: Vec3) -> Result<OctantAddr> {
        let leaf = self.leaf_cell(x)?;
        let top = self.config.depth - 1;
        let mut found = OctantAddr { depth: 0, cell: [0; 3] };
        for depth in 1..self.config.depth {
            let cell = leaf.map(|c| c >> (top - depth));
            if self.levels[depth as usize].contains_key(&cell) {
                found = OctantAddr { depth, cell };
            } else {
                break;
            }
        }
        Ok(found)
    }

    /// Allocates octants for each point, initializing new vertices from
    /// distances to `init_points` (normally the inserting frame's points).
    ///
    /// Along each point's root-to-leaf path, child layers `1..=M` also get all
    /// siblings in semi-sparse mode; deeper layers only the path octant.
    pub fn insert_points(&mut self, points: &[Vec3], init_points: &[Vec3]) -> AllocationReport {
        let mut report = AllocationReport::default();
        let mut index: Option<KdTree> = None;
        let top = self.config.depth - 1;
        for &p in points {
            let Ok(leaf) = self.leaf_cell(p) else {
                report.dropped += 1;
                continue;
            };
            for depth in 1..self.config.depth {
                let cell = leaf.map(|c| c >> (top - depth));
                if self.levels[depth as usize].contains_key(&cell) {
                    continue;
                }
                if self.mode == StructureMode::SemiSparse && depth <= self.config.semi_sparse_depth
                {
                    let base = cell.map(|c| c & !1);
                    for k in 0..8 {
                        let off = corner_offset(k);
                        let sib = std::array::from_fn(|a| base[a] + off[a]);
                        self.allocate(OctantAddr { depth, cell: sib }, init_points, &mut index, &mut report);
                    }
                } else {
                    self.allocate(OctantAddr { depth, cell }, init_points, &mut index, &mut report);
                }
            }
        }
        report
    }

    fn allocate(
        &mut self,
        addr: OctantAddr,
        init_points: &[Vec3],
        index: &mut Option<KdTree>,
        report: &mut AllocationReport,
    ) {
        let level = &mut self.levels[addr.depth as usize];
        if level.contains_key(&addr.cell) {
            return;
        }
        level.insert(addr.cell, 0);
        let parent = addr.cell.map(|c| c >> 1);
        *self.levels[addr.depth as usize - 1]
            .get_mut(&parent)
            .expect("parent octant allocated first") |= child_bit(addr.cell);
        report.octants_created += 1;

        let size = self.config.octant_side(addr.depth);
        for k in 0..8 {
            let key = self.corner_key(addr, k);
            if self.lookup.contains_key(&key) {
                continue;
            }
            let pos = self.key_position(key);
            let index = index.get_or_insert_with(|| KdTree::build(init_points));
            let init = match index.nearest(pos) {
                Some((i, dist)) if dist <= 2.0 * size => {
                    let g = if dist > 0.0 { (pos - init_points[i]) / dist } else { Vec3::zero() };
                    VertexData { d: T::lit(dist), g: g.cast() }
                }
                _ => VertexData { d: T::lit(size), g: Vector3::zero() },
            };
            self.push_vertex(key, init);
            report.vertices_created += 1;
        }
    }

    /// Interpolates at `x` in the smallest allocated octant containing it.
    pub fn interpolate(&self, x: Vec3, mode: InterpMode) -> Result<Interpolation> {
        let octant = self.locate(x)?;
        let (lo, side) = self.octant_bounds(octant);
        let weights = interp_weights(lo, side, x);
        let mut vertices = [0u32; 8];
        let mut offsets = [Vec3::zero(); 8];
        let mut value = 0.0;
        for k in 0..8 {
            let key = self.corner_key(octant, k);
            let vi = *self
                .lookup
                .get(&key)
                .expect("allocated octant corners are in the vertex store");
            vertices[k] = vi;
            let off = x - self.key_position(key);
            offsets[k] = off;
            let p = &self.params[vi as usize * VERTEX_STRIDE..][..VERTEX_STRIDE];
            let mut v = p[0].f64();
            if mode == InterpMode::GradientAugmented {
                v += p[1].f64() * off.x + p[2].f64() * off.y + p[3].f64() * off.z;
            }
            value += weights[k] * v;
        }
        Ok(Interpolation { value, octant, vertices, weights, offsets })
    }

    pub fn interpolate_ga(&self, x: Vec3) -> Result<Interpolation> {
        self.interpolate(x, InterpMode::GradientAugmented)
    }

    pub fn interpolate_tl(&self, x: Vec3) -> Result<f64> {
        self.interpolate(x, InterpMode::Trilinear).map(|i| i.value)
    }

    /// Checks the structural invariants; returns one message per violation.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let m = self.config.semi_sparse_depth;
        for (depth, level) in self.levels.iter().enumerate() {
            let depth = depth as u32;
            for (&cell, &mask) in level {
                let addr = OctantAddr { depth, cell };
                if depth > 0 {
                    let parent = cell.map(|c| c >> 1);
                    match self.levels[depth as usize - 1].get(&parent) {
                        None => problems.push(format!("{addr:?}: parent missing")),
                        Some(pm) if pm & child_bit(cell) == 0 => {
                            problems.push(format!("{addr:?}: parent mask bit clear"))
                        }
                        _ => {}
                    }
                }
                if self.mode == StructureMode::SemiSparse && mask != 0 && depth < m && mask != 0xff {
                    problems.push(format!("{addr:?}: semi-sparse layer with partial children {mask:#04x}"));
                }
                for k in 0..8 {
                    if !self.lookup.contains_key(&self.corner_key(addr, k)) {
                        problems.push(format!("{addr:?}: corner {k} has no vertex"));
                    }
                }
                if depth + 1 < self.config.depth {
                    for k in 0..8u32 {
                        let off = corner_offset(k as usize);
                        let child = std::array::from_fn(|a| cell[a] * 2 + off[a]);
                        let present = self.levels[depth as usize + 1].contains_key(&child);
                        if present != (mask & (1 << k) != 0) {
                            problems.push(format!("{addr:?}: mask disagrees with child {k}"));
                        }
                    }
                }
            }
        }
        for (i, p) in self.params.chunks_exact(VERTEX_STRIDE).enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                problems.push(format!("vertex {i} has non-finite parameters"));
            }
        }
        problems
    }

    /// Observed leaf octants of a point set, packed as `(x, y, z)` cells.
    pub fn leaf_set(&self, points: &[Vec3]) -> FxHashSet<[u32; 3]> {
        points.iter().filter_map(|&p| self.leaf_cell(p).ok()).collect()
    }

    /// Serializes config, mode, vertices, then the octant table.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.put_u32(self.config.depth)?;
        w.put_u32(self.config.semi_sparse_depth)?;
        w.put_f64(self.config.leaf_resolution)?;
        for c in self.root.min.to_array().into_iter().chain(self.root.max.to_array()) {
            w.put_f64(c)?;
        }
        w.put_u8(match self.mode {
            StructureMode::SemiSparse => 0,
            StructureMode::Sparse => 1,
        })?;
        w.put_u64(self.keys.len() as u64)?;
        for (i, key) in self.keys.iter().enumerate() {
            for c in key {
                w.put_i32(*c)?;
            }
            for v in &self.params[i * VERTEX_STRIDE..][..VERTEX_STRIDE] {
                w.put_f32(v.to_f32().unwrap_or(f32::NAN))?;
            }
        }
        let octants = self.octants();
        w.put_u64(octants.len() as u64)?;
        for o in octants {
            w.put_u8(o.depth as u8)?;
            for c in o.cell {
                w.put_u32(c)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let depth = r.get_u32()?;
        let semi_sparse_depth = r.get_u32()?;
        let leaf_resolution = r.get_f64()?;
        let mut bounds = [0.0; 6];
        for b in &mut bounds {
            *b = r.get_f64()?;
        }
        let config = OctreeConfig {
            depth,
            semi_sparse_depth,
            leaf_resolution,
            root_min: Some([bounds[0], bounds[1], bounds[2]]),
        };
        config.validate()?;
        let mode = match r.get_u8()? {
            0 => StructureMode::SemiSparse,
            1 => StructureMode::Sparse,
            m => return Err(Error::format("octree section", format!("unknown mode {m}"))),
        };
        let mut tree = Self {
            root: config.root(),
            levels: vec![FxHashMap::default(); depth as usize],
            config,
            mode,
            keys: Vec::new(),
            lookup: FxHashMap::default(),
            params: Vec::new(),
        };
        let count = r.get_u64()? as usize;
        for _ in 0..count {
            let key = [r.get_i32()?, r.get_i32()?, r.get_i32()?];
            let mut v = [T::zero(); VERTEX_STRIDE];
            for x in &mut v {
                *x = T::lit(r.get_f32()? as f64);
            }
            if tree.lookup.contains_key(&key) {
                return Err(Error::format("octree section", format!("duplicate vertex {key:?}")));
            }
            tree.push_vertex(key, VertexData { d: v[0], g: Vector3::new(v[1], v[2], v[3]) });
        }
        let octants = r.get_u64()? as usize;
        for _ in 0..octants {
            let d = r.get_u8()? as u32;
            let cell = [r.get_u32()?, r.get_u32()?, r.get_u32()?];
            if d >= depth || cell.iter().any(|&c| c >= 1 << d) {
                return Err(Error::format("octree section", format!("bad octant {d} {cell:?}")));
            }
            tree.levels[d as usize].insert(cell, 0);
        }
        for d in 1..depth as usize {
            let cells: Vec<[u32; 3]> = tree.levels[d].keys().copied().collect();
            for cell in cells {
                let parent = cell.map(|c| c >> 1);
                match tree.levels[d - 1].get_mut(&parent) {
                    Some(m) => *m |= child_bit(cell),
                    None => return Err(Error::format("octree section", "orphan octant")),
                }
            }
        }
        if !tree.levels[0].contains_key(&[0, 0, 0]) {
            return Err(Error::format("octree section", "missing root octant"));
        }
        let problems = tree.audit();
        if let Some(p) = problems.first() {
            return Err(Error::format("octree section", p.clone()));
        }
        Ok(tree)
    }
}
