//! Static k-d tree for nearest-neighbour queries over 3D point sets.

use crate::geometry::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Balanced k-d tree built by median splits on the axis of largest spread.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        let mut tree = Self {
            points: points.iter().map(|p| p.to_array()).collect(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_range(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Vec3 {
        self.points[i].into()
    }

    fn build_range(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start: start as u32, end: end as u32 });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.points[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][axis]
                .total_cmp(&points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid] as usize][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_range(start, mid);
        let right = self.build_range(mid, end);
        self.nodes[id as usize] = Node::Split { axis: axis as u8, value, left, right };
        id
    }

    /// Nearest point as `(index into the build slice, distance)`. Equal
    /// distances resolve to the smaller index.
    pub fn nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let q = q.to_array();
        let mut best = (u32::MAX, f64::INFINITY);
        self.search(0, &q, &mut best);
        Some((best.0 as usize, best.1.sqrt()))
    }

    fn search(&self, node: u32, q: &[f64; 3], best: &mut (u32, f64)) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let p = self.points[i as usize];
                    let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                    if d2 < best.1 || (d2 == best.1 && i < best.0) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[Vec3], q: Vec3) -> (usize, f64) {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.distance(q)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .unwrap()
    }

    fn arb_point() -> impl Strategy<Value = Vec3> {
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn matches_brute_force(points in prop::collection::vec(arb_point(), 1..300),
                               queries in prop::collection::vec(arb_point(), 1..20)) {
            let tree = KdTree::build(&points);
            for q in queries {
                let (i, d) = tree.nearest(q).unwrap();
                let (bi, bd) = brute(&points, q);
                prop_assert!((d - bd).abs() < 1e-12);
                prop_assert_eq!(i, bi);
            }
        }
    }

    #[test]
    fn duplicates_resolve_to_smallest_index() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let points = vec![Vec3::zero(); 20].into_iter().chain([p, p, p]).collect::<Vec<_>>();
        let tree = KdTree::build(&points);
        assert_eq!(tree.nearest(p).unwrap(), (20, 0.0));
    }

    #[test]
    fn empty_tree() {
        assert!(KdTree::build(&[]).nearest(Vec3::zero()).is_none());
    }
}
