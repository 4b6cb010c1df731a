use std::io::{BufRead, Write};

use crate::binio::{ReadLe, WriteLe};
use crate::error::{Error, Result};
use crate::geometry::rng::SampleRng;
use crate::geometry::Vec3;

/// Triangles with area at or below this are degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Indexed triangle mesh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Checks index ranges and triangle areas.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Self { vertices, triangles };
        for (i, t) in mesh.triangles.iter().enumerate() {
            if t.iter().any(|&v| v as usize >= mesh.vertices.len()) {
                return Err(Error::format("mesh", format!("triangle {i} indexes past the vertex list")));
            }
            if mesh.triangle_area(i) <= MIN_TRIANGLE_AREA {
                return Err(Error::format("mesh", format!("triangle {i} is degenerate")));
            }
        }
        Ok(mesh)
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangles[i].map(|v| self.vertices[v as usize]);
        (b - a).cross(c - a).norm() / 2.0
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// `n` points distributed uniformly over the surface area.
    pub fn sample_surface(&self, n: usize, rng: &mut SampleRng) -> Vec<Vec3> {
        if self.is_empty() {
            return Vec::new();
        }
        let mut cdf = Vec::with_capacity(self.triangles.len());
        let mut acc = 0.0;
        for i in 0..self.triangles.len() {
            acc += self.triangle_area(i);
            cdf.push(acc);
        }
        (0..n)
            .map(|_| {
                let u = rng.uniform() * acc;
                let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                let [a, b, c] = self.triangles[i].map(|v| self.vertices[v as usize]);
                let (r1, r2) = (rng.uniform().sqrt(), rng.uniform());
                a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
            })
            .collect()
    }

    /// Undirected edges not shared by exactly two oppositely oriented
    /// triangles. Empty for a closed, consistently wound surface.
    pub fn boundary_edges(&self) -> usize {
        let mut directed = rustc_hash::FxHashMap::default();
        for t in &self.triangles {
            for e in 0..3 {
                *directed.entry((t[e], t[(e + 1) % 3])).or_insert(0u32) += 1;
            }
        }
        directed
            .iter()
            .filter(|(&(a, b), &n)| n != 1 || directed.get(&(b, a)) != Some(&1))
            .count()
    }

    /// Binary little-endian PLY with `f32` positions.
    pub fn write_ply<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(
            w,
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
            self.vertices.len(),
            self.triangles.len()
        )?;
        for v in &self.vertices {
            for c in v.to_array() {
                w.put_f32(c as f32)?;
            }
        }
        for t in &self.triangles {
            w.write_all(&[3])?;
            for &i in t {
                w.put_i32(i as i32)?;
            }
        }
        Ok(())
    }

    /// Reads the layout written by [`TriMesh::write_ply`].
    pub fn read_ply<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut counts = [None, None];
        loop {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::format("ply", "missing end_header"));
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["end_header"] => break,
                ["format", f, _] if *f != "binary_little_endian" => {
                    return Err(Error::format("ply", format!("unsupported format {f}")));
                }
                ["element", "vertex", n] => counts[0] = n.parse::<usize>().ok(),
                ["element", "face", n] => counts[1] = n.parse::<usize>().ok(),
                _ => {}
            }
        }
        let [Some(nv), Some(nf)] = counts else {
            return Err(Error::format("ply", "missing vertex or face count"));
        };
        let mut vertices = Vec::with_capacity(nv.min(1 << 24));
        for _ in 0..nv {
            vertices.push(Vec3::new(r.get_f32()? as f64, r.get_f32()? as f64, r.get_f32()? as f64));
        }
        let mut triangles = Vec::with_capacity(nf.min(1 << 24));
        for _ in 0..nf {
            let mut n = [0u8];
            r.read_exact(&mut n)?;
            if n[0] != 3 {
                return Err(Error::format("ply", "only triangles are supported"));
            }
            let mut t = [0u32; 3];
            for v in &mut t {
                *v = u32::try_from(r.get_i32()?).map_err(|_| Error::format("ply", "negative index"))?;
            }
            triangles.push(t);
        }
        Self::new(vertices, triangles)
    }
}
