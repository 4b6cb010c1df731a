use crate::error::Result;
use crate::geometry::Vec3;
use crate::num::Real;
use crate::octree::{InterpMode, Interpolation, VERTEX_STRIDE};
use crate::residual::GradBuffer;
use crate::sampling::SampleBatch;

use super::config::LossWeights;
use super::model::SdfModel;

/// Samples per forward/backward chunk; each expands to up to 7 evaluations.
const CHUNK: usize = 512;

/// Weighted loss terms of one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub recon: f64,
    pub eik: f64,
    pub proj: f64,
    /// Samples outside the root, dropped from every term.
    pub dropped_samples: usize,
    /// Samples whose stencil leaves the root, dropped from the Eikonal term.
    pub dropped_stencils: usize,
}

impl LossReport {
    pub fn total(&self) -> f64 {
        self.recon + self.eik + self.proj
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Group {
    Surface,
    Perturbed,
    Free,
}

#[derive(Clone, Copy)]
struct Sample {
    x: Vec3,
    group: Group,
    target: f64,
    /// Per-sample coefficient of the value term (0 when unused).
    value_coef: f64,
    /// Per-sample coefficient of the Eikonal term (0 when unused).
    eik_coef: f64,
}

#[inline]
fn l1_slope(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn plan<T: Real>(model: &SdfModel<T>, batch: &SampleBatch, w: &LossWeights, eps: f64) -> (Vec<Sample>, usize, usize) {
    let root = *model.octree.root();
    let mut samples = Vec::with_capacity(batch.len());
    for &x in &batch.surface {
        samples.push((x, Group::Surface, 0.0));
    }
    for p in &batch.perturbed {
        samples.push((p.x, Group::Perturbed, p.sign * p.dist));
    }
    for f in &batch.free {
        samples.push((f.x, Group::Free, f.dist));
    }
    let stencil_ok = |x: Vec3| {
        (0..3).all(|a| {
            let e = Vec3::unit(a) * eps;
            root.contains(x + e) && root.contains(x - e)
        })
    };
    let mut kept = [0usize; 3];
    let mut eik_kept = [0usize; 3];
    let mut flags = Vec::with_capacity(samples.len());
    let (mut dropped, mut dropped_stencils) = (0, 0);
    for &(x, g, _) in &samples {
        let inside = x.is_finite() && root.contains(x);
        let stencil = inside && stencil_ok(x);
        dropped += usize::from(!inside);
        dropped_stencils += usize::from(inside && !stencil);
        kept[g as usize] += usize::from(inside);
        eik_kept[g as usize] += usize::from(stencil);
        flags.push((inside, stencil));
    }
    let per = |weight: f64, n: usize| if n == 0 { 0.0 } else { weight / n as f64 };
    let value = [per(w.recon_surface, kept[0]), per(w.recon_perturbed, kept[1]), per(w.proj, kept[2])];
    let eik_near = per(w.eik_surface, eik_kept[0] + eik_kept[1]);
    let eik = [eik_near, eik_near, per(w.eik_free, eik_kept[2])];
    let out = samples
        .into_iter()
        .zip(flags)
        .filter(|(_, (inside, _))| *inside)
        .map(|((x, group, target), (_, stencil))| Sample {
            x,
            group,
            target,
            value_coef: value[group as usize],
            eik_coef: if stencil { eik[group as usize] } else { 0.0 },
        })
        .collect();
    (out, dropped, dropped_stencils)
}

/// Evaluates the reconstruction, Eikonal and projection losses on `batch`,
/// accumulating parameter gradients into `grads` when given.
///
/// Sample means run over the samples kept in each group; the numerical
/// gradient uses central differences with step `eps`.
pub fn evaluate_losses<T: Real>(
    model: &SdfModel<T>,
    batch: &SampleBatch,
    weights: &LossWeights,
    eps: f64,
    mut grads: Option<&mut GradBuffer>,
) -> Result<LossReport> {
    let (samples, dropped_samples, dropped_stencils) = plan(model, batch, weights, eps);
    let mut report = LossReport { dropped_samples, dropped_stencils, ..Default::default() };
    let ga = model.interp == InterpMode::GradientAugmented;

    let mut points: Vec<Vec3> = Vec::with_capacity(CHUNK * 7);
    let mut slots: Vec<(Option<usize>, Option<usize>)> = Vec::with_capacity(CHUNK);
    let mut interps: Vec<Interpolation> = Vec::with_capacity(CHUNK * 7);
    for chunk in samples.chunks(CHUNK) {
        points.clear();
        slots.clear();
        for s in chunk {
            let base = (s.value_coef > 0.0).then(|| {
                points.push(s.x);
                points.len() - 1
            });
            let stencil = (s.eik_coef > 0.0).then(|| {
                let start = points.len();
                for a in 0..3 {
                    let e = Vec3::unit(a) * eps;
                    points.push(s.x + e);
                    points.push(s.x - e);
                }
                start
            });
            slots.push((base, stencil));
        }
        if points.is_empty() {
            continue;
        }
        interps.clear();
        for &p in &points {
            interps.push(model.octree.interpolate(p, model.interp)?);
        }
        let cache = match &model.net {
            Some(net) => Some(net.forward_batch(&points)?),
            None => None,
        };
        let pred: Vec<f64> = match &cache {
            Some(c) => interps.iter().zip(c.output()).map(|(i, r)| i.value + r).collect(),
            None => interps.iter().map(|i| i.value).collect(),
        };

        let mut upstream = vec![0.0; points.len()];
        for (s, &(base, stencil)) in chunk.iter().zip(&slots) {
            if let Some(b) = base {
                let r = pred[b] - s.target;
                let term = s.value_coef * r.abs();
                match s.group {
                    Group::Free => report.proj += term,
                    _ => report.recon += term,
                }
                upstream[b] += s.value_coef * l1_slope(r);
            }
            if let Some(st) = stencil {
                let g = Vec3::new(
                    pred[st] - pred[st + 1],
                    pred[st + 2] - pred[st + 3],
                    pred[st + 4] - pred[st + 5],
                ) / (2.0 * eps);
                let n = g.norm();
                report.eik += s.eik_coef * (n - 1.0).abs();
                if n > 0.0 {
                    let k = s.eik_coef * l1_slope(n - 1.0) / (n * 2.0 * eps);
                    for a in 0..3 {
                        upstream[st + 2 * a] += k * g[a];
                        upstream[st + 2 * a + 1] -= k * g[a];
                    }
                }
            }
        }

        if let Some(grads) = grads.as_deref_mut() {
            for (it, &u) in interps.iter().zip(&upstream) {
                if u == 0.0 {
                    continue;
                }
                for k in 0..8 {
                    let base = it.vertices[k] as usize * VERTEX_STRIDE;
                    let wu = it.weights[k] * u;
                    grads.octree[base] += wu;
                    if ga {
                        for a in 0..3 {
                            grads.octree[base + 1 + a] += wu * it.offsets[k][a];
                        }
                    }
                }
            }
            if let (Some(net), Some(cache)) = (&model.net, &cache) {
                net.backward_batch(cache, &upstream, grads)?;
            }
        }
    }
    Ok(report)
}
