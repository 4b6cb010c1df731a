use serde::{Deserialize, Serialize};

use super::Vector3;
use crate::num::Real;

/// Axis-aligned box, closed on both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Aabb<T> {
    pub min: Vector3<T>,
    pub max: Vector3<T>,
}

impl<T: Real> Aabb<T> {
    /// Panics if `min > max` on any axis.
    pub fn new(min: Vector3<T>, max: Vector3<T>) -> Self {
        assert!(
            min.x <= max.x && min.y <= max.y && min.z <= max.z,
            "invalid aabb: min {min:?} max {max:?}"
        );
        Self { min, max }
    }

    pub fn cube(min: Vector3<T>, side: T) -> Self {
        Self::new(min, min + Vector3::splat(side))
    }

    pub fn centered_cube(side: T) -> Self {
        let h = side / T::lit(2.0);
        Self::new(Vector3::splat(-h), Vector3::splat(h))
    }

    pub fn size(&self) -> Vector3<T> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<T> {
        (self.min + self.max) / T::lit(2.0)
    }

    pub fn contains(&self, p: Vector3<T>) -> bool {
        p.x >= self.min.x
            && p.y >= self.min.y
            && p.z >= self.min.z
            && p.x <= self.max.x
            && p.y <= self.max.y
            && p.z <= self.max.z
    }

    pub fn contains_box(&self, o: &Self) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    pub fn padded(&self, pad: T) -> Self {
        Self::new(self.min - Vector3::splat(pad), self.max + Vector3::splat(pad))
    }

    /// `None` if the boxes are disjoint.
    pub fn intersection(&self, o: &Self) -> Option<Self> {
        let min = self.min.zip(o.min, T::max);
        let max = self.max.zip(o.max, T::min);
        (min.x <= max.x && min.y <= max.y && min.z <= max.z).then_some(Self { min, max })
    }

    pub fn union(&self, o: &Self) -> Self {
        Self { min: self.min.zip(o.min, T::min), max: self.max.zip(o.max, T::max) }
    }

    pub fn clamp(&self, p: Vector3<T>) -> Vector3<T> {
        p.zip(self.min, T::max).zip(self.max, T::min)
    }
}
