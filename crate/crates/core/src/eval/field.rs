use crate::error::Result;
use crate::geometry::{AnalyticScene, Vec3};
use crate::training::SdfPredictor;

use super::grid::SdfGridSpec;
use super::oracle::OraclePredictor;

/// Grid points with true distance below this are not evaluated.
pub const KEEP_MIN: f64 = -0.1;
/// Upper edge of the near-surface region.
pub const NEAR_MAX: f64 = 0.2;
/// Accepted band of predicted gradient norms.
pub const GRAD_NORM_BAND: (f64, f64) = (0.8, 1.2);

const CHUNK: usize = 1 << 15;

/// Distances in centimeters, angles in radians, ratios in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SdfMetrics {
    pub mae_all: f64,
    pub mae_near: f64,
    pub mae_far: f64,
    pub grad_mae_all: f64,
    pub grad_mae_near: f64,
    pub grad_mae_far: f64,
    pub valid_ratio: f64,
    /// Near points (with a defined oracle gradient) whose predicted
    /// gradient norm lies in [`GRAD_NORM_BAND`].
    pub grad_norm_ok_near: f64,
    pub kept: usize,
    pub near: usize,
    pub far: usize,
    /// Kept points without a defined oracle gradient.
    pub medial_skipped: usize,
    /// Kept points whose difference stencil leaves the root.
    pub stencil_skipped: usize,
}

#[derive(Default)]
struct Acc {
    err: f64,
    n: usize,
    ang: f64,
    na: usize,
}

impl Acc {
    fn mean(sum: f64, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Compares `predictor` with the scene oracle at the grid's cell centers
/// with true distance at least [`KEEP_MIN`]. Both gradients use central
/// differences with step `eps`, so a stencil straddling a kink smooths the
/// reference the same way it smooths the prediction.
pub fn eval_sdf_field<P: SdfPredictor + ?Sized>(
    predictor: &P,
    scene: &AnalyticScene<f64>,
    grid: &SdfGridSpec,
    eps: f64,
) -> Result<SdfMetrics> {
    let root = predictor.root();
    grid.validate(&root)?;
    let kept: Vec<(Vec3, f64)> = grid
        .cell_centers()
        .into_iter()
        .map(|x| (x, scene.sdf(x)))
        .filter(|&(_, d)| d >= KEEP_MIN)
        .collect();
    let mut m = SdfMetrics { kept: kept.len(), ..Default::default() };
    let (mut near, mut far) = (Acc::default(), Acc::default());
    let (mut norm_ok, mut norm_n) = (0usize, 0usize);
    let inside = |x: Vec3| (0..3).all(|a| root.contains(x + Vec3::unit(a) * eps) && root.contains(x - Vec3::unit(a) * eps));
    let mut valid = 0usize;
    for chunk in kept.chunks(CHUNK) {
        let xs: Vec<Vec3> = chunk.iter().map(|c| c.0).collect();
        let pred = predictor.predict_batch(&xs)?;
        let with_stencil: Vec<Vec3> = xs.iter().copied().filter(|&x| inside(x)).collect();
        let mut grads = predictor.gradient_batch(&with_stencil, eps)?.into_iter();
        let mut truth = OraclePredictor::new(scene).gradient_batch(&with_stencil, eps)?.into_iter();
        for (&(x, d), p) in chunk.iter().zip(&pred) {
            let is_near = d <= NEAR_MAX;
            let acc = if is_near { &mut near } else { &mut far };
            valid += usize::from(p.is_finite());
            acc.err += (p - d).abs();
            acc.n += 1;
            if !inside(x) {
                m.stencil_skipped += 1;
                continue;
            }
            let g = grads.next().expect("one gradient per stencil point");
            let t = truth.next().expect("one gradient per stencil point");
            match scene.gradient(x) {
                Ok(_) => {
                    if is_near {
                        norm_n += 1;
                        norm_ok += usize::from((GRAD_NORM_BAND.0..=GRAD_NORM_BAND.1).contains(&g.norm()));
                    }
                    let angle = if g.norm() > 0.0 { g.angle_to(t) } else { std::f64::consts::FRAC_PI_2 };
                    acc.ang += angle;
                    acc.na += 1;
                }
                Err(_) => m.medial_skipped += 1,
            }
        }
    }
    m.near = near.n;
    m.far = far.n;
    m.mae_all = Acc::mean(near.err + far.err, near.n + far.n) * 100.0;
    m.mae_near = Acc::mean(near.err, near.n) * 100.0;
    m.mae_far = Acc::mean(far.err, far.n) * 100.0;
    m.grad_mae_all = Acc::mean(near.ang + far.ang, near.na + far.na);
    m.grad_mae_near = Acc::mean(near.ang, near.na);
    m.grad_mae_far = Acc::mean(far.ang, far.na);
    m.valid_ratio = if m.kept == 0 { 100.0 } else { valid as f64 / m.kept as f64 * 100.0 };
    m.grad_norm_ok_near = if norm_n == 0 { 0.0 } else { norm_ok as f64 / norm_n as f64 * 100.0 };
    Ok(m)
}
