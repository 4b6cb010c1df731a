//! Interpolation kernels inside a single cubic octant.
//!
//! Corner `k` of an octant with minimum corner `lo` and side `L` sits at
//! `lo + L * (k & 1, (k >> 1) & 1, (k >> 2) & 1)`.
//!
//! Weights are the reciprocal of the product of per-axis absolute distances
//! between the query and each corner, normalized to sum to one. On a
//! vertex-aligned plane the exact limit is taken: corners on the far side of
//! that axis get zero weight and the axis drops out of the product.

use crate::geometry::Vector3;
use crate::num::Real;

/// Per-axis distances below `SNAP_EPS * L` are treated as zero.
pub const SNAP_EPS: f64 = 1e-9;

#[inline]
pub fn corner_offset(k: usize) -> [u32; 3] {
    [(k & 1) as u32, ((k >> 1) & 1) as u32, ((k >> 2) & 1) as u32]
}

pub fn corners<T: Real>(lo: Vector3<T>, side: T) -> [Vector3<T>; 8] {
    std::array::from_fn(|k| {
        let [a, b, c] = corner_offset(k);
        lo + Vector3::new(T::lit(a as f64), T::lit(b as f64), T::lit(c as f64)) * side
    })
}

/// Normalized inverse-distance-product weights of `x` in the octant
/// `[lo, lo + side]^3`. `x` is expected inside the closed octant.
pub fn interp_weights<T: Real>(lo: Vector3<T>, side: T, x: Vector3<T>) -> [T; 8] {
    let eps = T::lit(SNAP_EPS) * side;
    let mut dist = [[T::zero(); 2]; 3];
    // Degenerate axis: Some(side index that keeps weight).
    let mut snap = [None; 3];
    for a in 0..3 {
        let lo_d = (x[a] - lo[a]).max(T::zero());
        let hi_d = (lo[a] + side - x[a]).max(T::zero());
        dist[a] = [lo_d, hi_d];
        if lo_d < eps {
            snap[a] = Some(0);
        } else if hi_d < eps {
            snap[a] = Some(1);
        }
    }
    let mut w = [T::zero(); 8];
    let mut total = T::zero();
    for (k, wk) in w.iter_mut().enumerate() {
        let off = corner_offset(k);
        let mut prod = T::one();
        let mut keep = true;
        for a in 0..3 {
            let s = off[a] as usize;
            match snap[a] {
                Some(near) if near != s => keep = false,
                Some(_) => {}
                None => prod *= dist[a][s],
            }
        }
        if keep {
            *wk = T::one() / prod;
            total += *wk;
        }
    }
    for wk in &mut w {
        *wk /= total;
    }
    w
}

/// Gradient-augmented blend: `sum_k w_k (d_k + g_k . (x - x_k))`.
pub fn blend_ga<T: Real>(
    weights: &[T; 8],
    corners: &[Vector3<T>; 8],
    d: &[T; 8],
    g: &[Vector3<T>; 8],
    x: Vector3<T>,
) -> T {
    (0..8).fold(T::zero(), |acc, k| acc + weights[k] * (d[k] + g[k].dot(x - corners[k])))
}

/// Trilinear blend of vertex values only.
pub fn blend_tl<T: Real>(weights: &[T; 8], d: &[T; 8]) -> T {
    (0..8).fold(T::zero(), |acc, k| acc + weights[k] * d[k])
}
