//! Analytic scenes with exact signed distance and gradient oracles.
//!
//! A scene is a union (pointwise min) of primitives. Primitives are expected
//! not to overlap, which keeps the union exact everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Aabb, Vec3, Vector3};
use crate::error::{Error, Result};
use crate::num::Real;

/// Two distances closer than this are treated as a tie (medial point).
pub const MEDIAL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub enum Primitive<T> {
    Sphere { center: Vector3<T>, radius: T },
    Box { center: Vector3<T>, half_extents: Vector3<T> },
    /// The hollow interior of a box: free space inside, solid outside.
    Room { center: Vector3<T>, half_extents: Vector3<T> },
}

fn box_sdf<T: Real>(p: Vector3<T>, h: Vector3<T>) -> T {
    let q = p.abs() - h;
    q.map(|v| v.max(T::zero())).norm() + q.max_elem().min(T::zero())
}

fn box_gradient<T: Real>(x: Vector3<T>, p: Vector3<T>, h: Vector3<T>) -> Result<Vector3<T>> {
    let tol = T::lit(MEDIAL_TOLERANCE);
    let q = p.abs() - h;
    if q.max_elem() > T::zero() {
        let v = Vector3::new(
            q.x.max(T::zero()) * p.x.signum(),
            q.y.max(T::zero()) * p.y.signum(),
            q.z.max(T::zero()) * p.z.signum(),
        );
        return Ok(v / v.norm());
    }
    // Inside or on the surface: the nearest face is the largest q.
    let qs = q.to_array();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| qs[b].partial_cmp(&qs[a]).unwrap());
    let axis = order[0];
    if qs[axis] - qs[order[1]] < tol || p[axis].abs() < tol {
        return Err(Error::MedialPoint(x.cast()));
    }
    Ok(Vector3::unit(axis) * p[axis].signum())
}

/// Bound for a box (or its complement) over `cell`, from per-axis ranges of
/// `q = |p| - h`. Axes strictly outside contribute to a face (0), edge or
/// corner distance; with none outside, a single strictly dominant axis
/// makes the field linear.
fn box_hessian_bound(cell: &Aabb<f64>, center: Vec3, h: Vec3) -> Option<f64> {
    let mut out = Vec::new();
    let mut inner = Vec::new();
    for a in 0..3 {
        let (lo, hi) = (cell.min[a] - center[a], cell.max[a] - center[a]);
        let (abs_lo, abs_hi) = if lo >= 0.0 {
            (lo, hi)
        } else if hi <= 0.0 {
            (-hi, -lo)
        } else {
            (0.0, hi.max(-lo))
        };
        let (qlo, qhi) = (abs_lo - h[a], abs_hi - h[a]);
        // Margins keep kinks on the cell boundary (within rounding) out.
        if qlo > MEDIAL_TOLERANCE {
            out.push(qlo);
        } else if qhi < -MEDIAL_TOLERANCE {
            inner.push((a, qlo, qhi, lo > 0.0 || hi < 0.0));
        } else {
            return None;
        }
    }
    match out.len() {
        0 => {
            let (a, qlo, _, one_sided) = *inner.iter().max_by(|x, y| x.1.total_cmp(&y.1))?;
            let dominant = inner.iter().all(|&(b, _, qhi, _)| b == a || qhi < qlo - MEDIAL_TOLERANCE);
            (dominant && one_sided).then_some(0.0)
        }
        1 => Some(0.0),
        _ => Some(1.0 / out.iter().map(|q| q * q).sum::<f64>().sqrt()),
    }
}

impl<T: Real> Primitive<T> {
    pub fn sdf(&self, x: Vector3<T>) -> T {
        match *self {
            Self::Sphere { center, radius } => (x - center).norm() - radius,
            Self::Box { center, half_extents } => box_sdf(x - center, half_extents),
            Self::Room { center, half_extents } => -box_sdf(x - center, half_extents),
        }
    }

    pub fn gradient(&self, x: Vector3<T>) -> Result<Vector3<T>> {
        match *self {
            Self::Sphere { center, .. } => {
                let p = x - center;
                let n = p.norm();
                if n < T::lit(MEDIAL_TOLERANCE) {
                    return Err(Error::MedialPoint(x.cast()));
                }
                Ok(p / n)
            }
            Self::Box { center, half_extents } => box_gradient(x, x - center, half_extents),
            Self::Room { center, half_extents } => {
                box_gradient(x, x - center, half_extents).map(|g| -g)
            }
        }
    }

    pub fn bounds(&self) -> Aabb<T> {
        match *self {
            Self::Sphere { center, radius } => Aabb::new(
                center - Vector3::splat(radius),
                center + Vector3::splat(radius),
            ),
            Self::Box { center, half_extents } | Self::Room { center, half_extents } => {
                Aabb::new(center - half_extents, center + half_extents)
            }
        }
    }

    /// Upper bound on the Hessian spectral norm over `cell`, or `None` when
    /// the primitive is not certifiably twice differentiable there.
    pub fn hessian_bound(&self, cell: &Aabb<f64>) -> Option<f64> {
        match *self {
            Self::Sphere { center, .. } => {
                let c = center.cast::<f64>();
                let gap = cell.clamp(c).distance(c);
                (gap > 0.0).then(|| 1.0 / gap)
            }
            Self::Box { center, half_extents } | Self::Room { center, half_extents } => {
                box_hessian_bound(cell, center.cast(), half_extents.cast())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Sphere { center, radius } => center.is_finite() && radius > T::zero(),
            Self::Box { center, half_extents } | Self::Room { center, half_extents } => {
                center.is_finite() && half_extents.min_elem() > T::zero()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Scene(format!("degenerate primitive {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticScene<T> {
    primitives: Vec<Primitive<T>>,
    root: Aabb<T>,
}

impl<T: Real> AnalyticScene<T> {
    pub fn new(primitives: Vec<Primitive<T>>, root: Aabb<T>) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::Scene("scene needs at least one primitive".into()));
        }
        for p in &primitives {
            p.validate()?;
            if !root.contains_box(&p.bounds()) {
                return Err(Error::Scene(format!("primitive {p:?} leaves the root volume")));
            }
        }
        Ok(Self { primitives, root })
    }

    pub fn primitives(&self) -> &[Primitive<T>] {
        &self.primitives
    }

    pub fn root(&self) -> &Aabb<T> {
        &self.root
    }

    /// Union of the primitives' bounds.
    pub fn bounds(&self) -> Aabb<T> {
        let first = self.primitives[0].bounds();
        self.primitives[1..].iter().fold(first, |b, p| b.union(&p.bounds()))
    }

    /// Exact signed distance to the union surface; negative inside.
    pub fn sdf(&self, x: Vector3<T>) -> T {
        self.primitives
            .iter()
            .map(|p| p.sdf(x))
            .fold(T::infinity(), T::min)
    }

    /// Upper bound on the Hessian spectral norm of the scene distance over
    /// `cell`, or `None` when `cell` may touch a medial set. One primitive
    /// must be nearest throughout, certified by 1-Lipschitz intervals.
    pub fn hessian_bound(&self, cell: &Aabb<f64>) -> Option<f64> {
        let c = cell.center();
        let r = cell.size().norm() / 2.0;
        let d: Vec<f64> = self.primitives.iter().map(|p| p.sdf(c.cast()).f64()).collect();
        let (best, &db) = d.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
        let separated = d.iter().enumerate().all(|(i, &di)| i == best || db + r < di - r);
        if !separated {
            return None;
        }
        self.primitives[best].hessian_bound(cell)
    }

    /// Index of the nearest primitive and whether another one ties with it.
    fn nearest(&self, x: Vector3<T>) -> (usize, bool) {
        let mut best = (0, T::infinity());
        let mut second = T::infinity();
        for (i, p) in self.primitives.iter().enumerate() {
            let d = p.sdf(x);
            if d < best.1 {
                second = best.1;
                best = (i, d);
            } else if d < second {
                second = d;
            }
        }
        (best.0, second - best.1 < T::lit(MEDIAL_TOLERANCE))
    }

    /// Unit gradient `(x - x*) / d(x)`; fails on medial points.
    pub fn gradient(&self, x: Vector3<T>) -> Result<Vector3<T>> {
        let (i, tie) = self.nearest(x);
        if tie {
            return Err(Error::MedialPoint(x.cast()));
        }
        self.primitives[i].gradient(x)
    }

    /// Gradient of the nearest primitive, breaking medial ties by primitive
    /// order. Used where some direction must be chosen (oracle vertex data).
    pub fn gradient_or_nearest(&self, x: Vector3<T>) -> Vector3<T> {
        if let Ok(g) = self.gradient(x) {
            return g;
        }
        let (i, _) = self.nearest(x);
        let h = T::lit(1e-7);
        let p = &self.primitives[i];
        p.gradient(x).unwrap_or_else(|_| {
            // Central difference of the chosen primitive alone.
            let g = Vector3::new(
                p.sdf(x + Vector3::unit(0) * h) - p.sdf(x - Vector3::unit(0) * h),
                p.sdf(x + Vector3::unit(1) * h) - p.sdf(x - Vector3::unit(1) * h),
                p.sdf(x + Vector3::unit(2) * h) - p.sdf(x - Vector3::unit(2) * h),
            );
            g.normalized().unwrap_or_else(|| Vector3::unit(0))
        })
    }
}

/// On-disk scene description (TOML).
///
/// ```toml
/// root_min = [-1.6, -1.6, -1.6]
/// root_max = [1.6, 1.6, 1.6]
/// trajectory = [[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]]
///
/// [[primitive]]
/// kind = "room"
/// center = [0.0, 0.0, 0.0]
/// half_extents = [1.5, 1.5, 1.5]
///
/// [[primitive]]
/// kind = "sphere"
/// center = [0.5, 0.2, -0.6]
/// radius = 0.35
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub root_min: [f64; 3],
    pub root_max: [f64; 3],
    #[serde(rename = "primitive")]
    pub primitives: Vec<Primitive<f64>>,
    #[serde(default)]
    pub trajectory: Vec<[f64; 3]>,
}

impl SceneFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Scene(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn scene(&self) -> Result<AnalyticScene<f64>> {
        let root = Aabb::new(self.root_min.into(), self.root_max.into());
        AnalyticScene::new(self.primitives.clone(), root)
    }

    /// Trajectory poses, each checked to lie in free space inside the root.
    pub fn poses(&self) -> Result<Vec<Vec3>> {
        let scene = self.scene()?;
        self.trajectory
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let p = Vec3::from(p);
                if !scene.root().contains(p) {
                    return Err(Error::Scene(format!("pose {i} {p:?} is outside the root")));
                }
                let d = scene.sdf(p);
                if d <= 0.0 {
                    return Err(Error::Scene(format!(
                        "pose {i} {p:?} lies inside an obstacle (sdf {d:.4})"
                    )));
                }
                Ok(p)
            })
            .collect()
    }
}

/// The bundled test room: a 3 m closed room with three interior obstacles
/// and a 50-pose loop trajectory.
pub const ROOM_SCENE: &str = include_str!("../../scenes/room.toml");
