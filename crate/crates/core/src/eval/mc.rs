//! Marching cubes over a regular grid.
//!
//! The 256-case triangle table is generated rather than transcribed: on
//! each cube face every maximal run of inside corners is cut off by one
//! segment (so a face with two diagonal inside corners separates them, and
//! both cubes sharing the face agree), the face segments are chained into
//! loops, each loop is oriented so its normal points from inside to
//! outside, then fan-triangulated.
//!
//! Crossings that land exactly on a grid vertex reuse that vertex's mesh
//! vertex, and triangles that collapse are dropped.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::training::SdfPredictor;

use super::grid::SdfGridSpec;
use super::mesh::{TriMesh, MIN_TRIANGLE_AREA};

/// Cube edges as corner pairs; edge `4a + j` runs along axis `a`.
pub const EDGES: [(u8, u8); 12] = [
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
];

fn corner_pos(k: u8) -> Vec3 {
    Vec3::new((k & 1) as f64, ((k >> 1) & 1) as f64, ((k >> 2) & 1) as f64)
}

fn edge_between(a: u8, b: u8) -> usize {
    EDGES
        .iter()
        .position(|&(p, q)| (p, q) == (a.min(b), a.max(b)))
        .expect("corners share an edge")
}

/// Corners of each face in cyclic order.
fn faces() -> [[u8; 4]; 6] {
    std::array::from_fn(|f| {
        let (axis, side) = (f / 2, (f % 2) as u8);
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let base = side << axis;
        [base, base | 1 << u, base | 1 << u | 1 << v, base | 1 << v]
    })
}

fn triangulate_case(case: u8) -> Vec<[u8; 3]> {
    let inside = |k: u8| case >> k & 1 == 1;
    let mut links: [Vec<usize>; 12] = Default::default();
    for face in faces() {
        for i in 0..4 {
            // Each maximal run of inside corners starts after an outside one
            // and is cut off by one segment.
            if !inside(face[i]) || inside(face[(i + 3) % 4]) {
                continue;
            }
            let mut j = i;
            while inside(face[(j + 1) % 4]) {
                j += 1;
            }
            let start = edge_between(face[(i + 3) % 4], face[i]);
            let end = edge_between(face[j % 4], face[(j + 1) % 4]);
            links[start].push(end);
            links[end].push(start);
        }
    }
    let mut seen = [false; 12];
    let mut out = Vec::new();
    for s in 0..12 {
        if seen[s] || links[s].is_empty() {
            continue;
        }
        let mut lp = vec![s];
        seen[s] = true;
        let mut cur = s;
        loop {
            let next = links[cur].iter().copied().find(|&n| !seen[n]);
            match next {
                Some(n) => {
                    seen[n] = true;
                    lp.push(n);
                    cur = n;
                }
                None => break,
            }
        }
        let mid = |e: usize| (corner_pos(EDGES[e].0) + corner_pos(EDGES[e].1)) / 2.0;
        let mut normal = Vec3::zero();
        let mut outward = Vec3::zero();
        for i in 0..lp.len() {
            normal += mid(lp[i]).cross(mid(lp[(i + 1) % lp.len()]));
            let (a, b) = EDGES[lp[i]];
            let d = corner_pos(b) - corner_pos(a);
            outward += if inside(a) { d } else { -d };
        }
        if normal.dot(outward) < 0.0 {
            lp.reverse();
        }
        for i in 1..lp.len() - 1 {
            out.push([lp[0] as u8, lp[i] as u8, lp[i + 1] as u8]);
        }
    }
    out
}

/// Triangles (as cube-edge triples) for every corner configuration; bit `k`
/// of the case index is set when corner `k` lies inside (below the iso level).
pub fn case_table() -> &'static [Vec<[u8; 3]>] {
    static TABLE: OnceLock<Vec<Vec<[u8; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=255u8).map(triangulate_case).collect())
}

/// Marching cubes over precomputed vertex values (x fastest), as laid out
/// by [`SdfGridSpec::vertex`].
pub fn extract_from_values(grid: &SdfGridSpec, values: &[f64], iso: f64) -> Result<TriMesh> {
    let [nx, ny, nz] = grid.cells();
    let (vx, vy) = (nx + 1, ny + 1);
    let nv = vx * vy * (nz + 1);
    if values.len() != nv {
        return Err(Error::ShapeMismatch(format!("{} grid values for {nv} vertices", values.len())));
    }
    let idx = |i: usize, j: usize, k: usize| i + vx * (j + vy * k);
    let table = case_table();
    let mut edge_vertex = vec![u32::MAX; 3 * nv];
    // Crossings exactly on a grid vertex share one mesh vertex.
    let mut corner_vertex = vec![u32::MAX; nv];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let corner = |c: u8| idx(i + (c & 1) as usize, j + (c >> 1 & 1) as usize, k + (c >> 2 & 1) as usize);
                let mut case = 0u8;
                for c in 0..8 {
                    if values[corner(c)] < iso {
                        case |= 1 << c;
                    }
                }
                for tri in &table[case as usize] {
                    let t = tri.map(|e| {
                        let (a, b) = EDGES[e as usize];
                        let (ia, ib) = (corner(a), corner(b));
                        let (va, vb) = (values[ia], values[ib]);
                        let t = ((iso - va) / (vb - va)).clamp(0.0, 1.0);
                        let slot = if t == 0.0 {
                            &mut corner_vertex[ia]
                        } else if t == 1.0 {
                            &mut corner_vertex[ib]
                        } else {
                            &mut edge_vertex[3 * ia + e as usize / 4]
                        };
                        if *slot == u32::MAX {
                            let (pa, pb) = (vertex_of(grid, ia, vx, vy), vertex_of(grid, ib, vx, vy));
                            *slot = vertices.len() as u32;
                            vertices.push(pa + (pb - pa) * t);
                        }
                        *slot
                    });
                    triangles.push(t);
                }
            }
        }
    }
    compact(vertices, triangles)
}

fn vertex_of(grid: &SdfGridSpec, flat: usize, vx: usize, vy: usize) -> Vec3 {
    grid.vertex(flat % vx, flat / vx % vy, flat / (vx * vy))
}

/// Drops degenerate triangles and the vertices only they used.
fn compact(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<TriMesh> {
    let area = |t: &[u32; 3]| {
        let [a, b, c] = t.map(|v| vertices[v as usize]);
        (b - a).cross(c - a).norm() / 2.0
    };
    let kept: Vec<[u32; 3]> = triangles
        .into_iter()
        .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2] && area(t) > MIN_TRIANGLE_AREA)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut remap = vec![u32::MAX; vertices.len()];
    let mut out_v = Vec::new();
    let out_t = kept
        .iter()
        .map(|t| {
            t.map(|v| {
                if remap[v as usize] == u32::MAX {
                    remap[v as usize] = out_v.len() as u32;
                    out_v.push(vertices[v as usize]);
                }
                remap[v as usize]
            })
        })
        .collect();
    TriMesh::new(out_v, out_t)
}

/// Grid vertex positions (x fastest).
pub fn grid_vertices(grid: &SdfGridSpec) -> Vec<Vec3> {
    let [nx, ny, nz] = grid.cells();
    let mut out = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                out.push(grid.vertex(i, j, k));
            }
        }
    }
    out
}

/// Zero-level (or `iso`-level) surface of `predictor` over `grid`.
pub fn extract_mesh<P: SdfPredictor + ?Sized>(predictor: &P, grid: &SdfGridSpec, iso: f64) -> Result<TriMesh> {
    grid.validate(&predictor.root())?;
    let pts = grid_vertices(grid);
    let mut values = Vec::with_capacity(pts.len());
    for chunk in pts.chunks(1 << 16) {
        values.extend(predictor.predict_batch(chunk)?);
    }
    extract_from_values(grid, &values, iso)
}
