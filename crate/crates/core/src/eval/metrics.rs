use crate::error::{Error, Result};
use crate::geometry::rng::SampleRng;
use crate::geometry::Vec3;
use crate::spatial::KdTree;

use super::mesh::TriMesh;

/// Surface-sample count per mesh.
pub const DEFAULT_SAMPLES: usize = 200_000;
/// Precision/recall distance threshold in meters.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// Distances in centimeters, ratios in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeshMetrics {
    pub accuracy: f64,
    pub completion: f64,
    pub chamfer: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub completion_ratio: f64,
}

/// Distances from every point in `from` to the nearest point of `to`.
pub fn nearest_distances(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    let tree = KdTree::build(to);
    from.iter().map(|&p| tree.nearest(p).map_or(f64::INFINITY, |(_, d)| d)).collect()
}

fn summarize(dists: &[f64], threshold: f64) -> (f64, f64) {
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    let within = dists.iter().filter(|&&d| d < threshold).count() as f64 / dists.len() as f64;
    (mean, within)
}

/// Compares two meshes through `samples` area-uniform surface points each.
///
/// Both meshes are sampled with a generator seeded by `seed`, so swapping
/// the arguments swaps accuracy with completion and precision with recall.
pub fn mesh_metrics(recon: &TriMesh, gt: &TriMesh, samples: usize, threshold: f64, seed: u64) -> Result<MeshMetrics> {
    if recon.is_empty() || gt.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let r = recon.sample_surface(samples, &mut SampleRng::new(seed));
    let g = gt.sample_surface(samples, &mut SampleRng::new(seed));
    Ok(metrics_from_samples(&r, &g, threshold))
}

/// Metrics of two point samples of the reconstructed and reference surfaces.
pub fn metrics_from_samples(recon: &[Vec3], gt: &[Vec3], threshold: f64) -> MeshMetrics {
    let (accuracy, precision) = summarize(&nearest_distances(recon, gt), threshold);
    let (completion, recall) = summarize(&nearest_distances(gt, recon), threshold);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    MeshMetrics {
        accuracy: accuracy * 100.0,
        completion: completion * 100.0,
        chamfer: (accuracy + completion) / 2.0 * 100.0,
        precision: precision * 100.0,
        recall: recall * 100.0,
        f1: f1 * 100.0,
        completion_ratio: recall * 100.0,
    }
}
