//! Prior-only comparison of octree structure and interpolation mode with
//! exact vertex data, plus an audit of the interpolation error bound.

use std::io::Write;

use rustc_hash::FxHashMap;

use crate::error::Result;
use crate::geometry::{Aabb, AnalyticScene, Frame, Vec3};
use crate::octree::{blend_ga, blend_tl, interp_weights, InterpMode, OctantAddr, OctreeConfig, SemiSparseOctree, StructureMode};

use super::field::{KEEP_MIN, NEAR_MAX};
use super::grid::SdfGridSpec;

/// Slack added to both interpolation error bounds.
pub const BOUND_SLACK: f64 = 1e-6;

/// Error bound of gradient-augmented interpolation with exact vertex data
/// on an octant of side `side` whose Hessian norm is at most `m`.
pub fn ga_error_bound(m: f64, side: f64) -> f64 {
    3.0 * m * side * side / 8.0
}

/// Error bound of plain trilinear interpolation with exact vertex values.
pub fn tl_error_bound(side: f64) -> f64 {
    3f64.sqrt() * side / 2.0
}

/// Dense-sampling errors inside one octant with exact vertex data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OctantErrors {
    pub hessian_bound: f64,
    pub side: f64,
    pub max_ga: f64,
    pub max_tl: f64,
    pub mean_ga: f64,
    pub mean_tl: f64,
    pub samples: usize,
}

impl OctantErrors {
    pub fn ga_bound(&self) -> f64 {
        ga_error_bound(self.hessian_bound, self.side)
    }

    pub fn tl_bound(&self) -> f64 {
        tl_error_bound(self.side)
    }

    pub fn within_bounds(&self) -> bool {
        self.max_ga <= self.ga_bound() + BOUND_SLACK && self.max_tl <= self.tl_bound() + BOUND_SLACK
    }
}

/// Interpolates the scene from exact corner data of `[lo, lo + side]^3` at
/// `per_axis^3` lattice points (faces included). `None` when the scene is
/// not certifiably smooth on the octant.
pub fn octant_errors(scene: &AnalyticScene<f64>, lo: Vec3, side: f64, per_axis: usize) -> Option<OctantErrors> {
    let m = scene.hessian_bound(&Aabb::cube(lo, side))?;
    let corners = crate::octree::interp::corners(lo, side);
    let d = corners.map(|c| scene.sdf(c));
    let g = corners.map(|c| scene.gradient_or_nearest(c));
    let mut e = OctantErrors { hessian_bound: m, side, max_ga: 0.0, max_tl: 0.0, mean_ga: 0.0, mean_tl: 0.0, samples: 0 };
    let t = |i: usize| i as f64 / (per_axis - 1) as f64 * side;
    for i in 0..per_axis {
        for j in 0..per_axis {
            for k in 0..per_axis {
                let x = lo + Vec3::new(t(i), t(j), t(k));
                let w = interp_weights(lo, side, x);
                let truth = scene.sdf(x);
                let ga = (blend_ga(&w, &corners, &d, &g, x) - truth).abs();
                let tl = (blend_tl(&w, &d) - truth).abs();
                e.max_ga = e.max_ga.max(ga);
                e.max_tl = e.max_tl.max(tl);
                e.mean_ga += ga;
                e.mean_tl += tl;
                e.samples += 1;
            }
        }
    }
    e.mean_ga /= e.samples as f64;
    e.mean_tl /= e.samples as f64;
    Some(e)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub structure: StructureMode,
    pub interpolation: InterpMode,
    /// Mean and max absolute error in meters.
    pub mean_near: f64,
    pub max_near: f64,
    pub mean_far: f64,
    pub max_far: f64,
    pub vertices: usize,
    pub octants: usize,
}

impl StudyRow {
    pub fn name(&self) -> String {
        let i = match self.interpolation {
            InterpMode::GradientAugmented => "ga",
            InterpMode::Trilinear => "tl",
        };
        let s = match self.structure {
            StructureMode::SemiSparse => "semi-sparse",
            StructureMode::Sparse => "sparse",
        };
        format!("{i}-{s}")
    }

    pub fn mean_all(&self, near: usize, far: usize) -> f64 {
        (self.mean_near * near as f64 + self.mean_far * far as f64) / (near + far).max(1) as f64
    }
}

/// Bound check over octants visited by the gradient-augmented variants.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundAudit {
    pub audited: usize,
    pub uncertified: usize,
    pub violations: usize,
    /// Largest sampled error over its bound.
    pub worst_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub near_points: usize,
    pub far_points: usize,
    pub audit: BoundAudit,
}

impl StudyReport {
    pub fn row(&self, structure: StructureMode, interpolation: InterpMode) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.structure == structure && r.interpolation == interpolation)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "variant,structure,interpolation,mean_err_near_m,max_err_near_m,mean_err_far_m,max_err_far_m,vertices,octants")?;
        for r in &self.rows {
            let name = r.name();
            let (i, s) = name.split_once('-').expect("name has a dash");
            writeln!(
                w,
                "{name},{s},{i},{:.9},{:.9},{:.9},{:.9},{},{}",
                r.mean_near, r.max_near, r.mean_far, r.max_far, r.vertices, r.octants
            )?;
        }
        Ok(())
    }
}

/// Builds each structure from `frames`, sets every vertex from the oracle,
/// and compares both interpolation modes at the grid's cell centers (kept
/// and split near/far as in field evaluation).
pub fn prior_study(
    scene: &AnalyticScene<f64>,
    frames: &[Frame],
    octree: &OctreeConfig,
    grid: &SdfGridSpec,
) -> Result<StudyReport> {
    grid.validate(&octree.root())?;
    let points: Vec<(Vec3, f64)> = grid
        .cell_centers()
        .into_iter()
        .map(|x| (x, scene.sdf(x)))
        .filter(|&(_, d)| d >= KEEP_MIN)
        .collect();
    let near_points = points.iter().filter(|p| p.1 <= NEAR_MAX).count();
    let mut rows = Vec::new();
    let mut audit = BoundAudit::default();
    for structure in [StructureMode::SemiSparse, StructureMode::Sparse] {
        let mut tree = SemiSparseOctree::<f64>::new(octree.clone(), structure)?;
        for f in frames {
            let mut f = f.clone();
            f.retain_inside(tree.root());
            tree.insert_points(&f.points, &f.points);
        }
        tree.set_vertices_with(|p| (scene.sdf(p), scene.gradient_or_nearest(p)));
        for interpolation in [InterpMode::GradientAugmented, InterpMode::Trilinear] {
            let mut row = StudyRow {
                structure,
                interpolation,
                mean_near: 0.0,
                max_near: 0.0,
                mean_far: 0.0,
                max_far: 0.0,
                vertices: tree.vertex_count(),
                octants: tree.octant_count(),
            };
            let mut per_octant: FxHashMap<OctantAddr, f64> = FxHashMap::default();
            for &(x, d) in &points {
                let it = tree.interpolate(x, interpolation)?;
                let e = (it.value - d).abs();
                if d <= NEAR_MAX {
                    row.mean_near += e;
                    row.max_near = row.max_near.max(e);
                } else {
                    row.mean_far += e;
                    row.max_far = row.max_far.max(e);
                }
                if interpolation == InterpMode::GradientAugmented {
                    let m = per_octant.entry(it.octant).or_insert(0.0);
                    *m = m.max(e);
                }
            }
            row.mean_near /= near_points.max(1) as f64;
            row.mean_far /= (points.len() - near_points).max(1) as f64;
            let mut octants: Vec<_> = per_octant.into_iter().collect();
            octants.sort_by_key(|(a, _)| (a.depth, a.cell));
            for (addr, max_err) in octants {
                let (lo, side) = tree.octant_bounds(addr);
                match scene.hessian_bound(&Aabb::cube(lo, side)) {
                    Some(m) => {
                        let bound = ga_error_bound(m, side);
                        audit.audited += 1;
                        if max_err > bound + BOUND_SLACK {
                            audit.violations += 1;
                        }
                        if bound > 0.0 {
                            audit.worst_ratio = audit.worst_ratio.max(max_err / bound);
                        }
                    }
                    None => audit.uncertified += 1,
                }
            }
            rows.push(row);
        }
    }
    Ok(StudyReport { rows, near_points, far_points: points.len() - near_points, audit })
}
