#![allow(dead_code)]

use gasdf::geometry::rng::SampleRng;
use gasdf::geometry::{generate_frames, AnalyticScene, Frame, Primitive, Vec3};
use gasdf::octree::{InterpMode, VERTEX_STRIDE};
use gasdf::residual::GradBuffer;
use gasdf::sampling::{generate_batch, SampleBatch};
use gasdf::training::{evaluate_losses, Config, LossWeights, Profile, SdfModel, SdfPredictor};
use gasdf::geometry::Aabb;

pub fn sphere_scene() -> AnalyticScene<f64> {
    let sphere = Primitive::Sphere { center: Vec3::new(0.1, -0.05, 0.0), radius: 0.5 };
    AnalyticScene::new(vec![sphere], Aabb::centered_cube(3.2)).unwrap()
}

pub fn sphere_frames(n: usize, rays: usize, seed: u64) -> Vec<Frame> {
    let poses: Vec<Vec3> = (0..n)
        .map(|i| {
            let t = i as f64 * 0.4;
            Vec3::new(1.2 * t.cos(), 1.2 * t.sin(), 0.3 * (0.7 * t).sin())
        })
        .collect();
    generate_frames(&sphere_scene(), &poses, rays, seed).unwrap()
}

/// One learnable scalar of a model.
#[derive(Clone, Copy, Debug)]
pub enum Param {
    Octree(usize),
    Hash(usize),
    Weight(usize, usize),
    Bias(usize, usize),
}

impl Param {
    pub fn get(self, m: &SdfModel<f64>) -> f64 {
        let net = m.net.as_ref();
        match self {
            Param::Octree(i) => m.octree.params()[i],
            Param::Hash(i) => net.unwrap().grid.params()[i],
            Param::Weight(l, i) => net.unwrap().mlp.layers()[l].weights[i],
            Param::Bias(l, i) => net.unwrap().mlp.layers()[l].biases[i],
        }
    }

    pub fn set(self, m: &mut SdfModel<f64>, v: f64) {
        let net = m.net.as_mut();
        match self {
            Param::Octree(i) => m.octree.params_mut()[i] = v,
            Param::Hash(i) => net.unwrap().grid.params_mut()[i] = v,
            Param::Weight(l, i) => net.unwrap().mlp.layers_mut()[l].weights[i] = v,
            Param::Bias(l, i) => net.unwrap().mlp.layers_mut()[l].biases[i] = v,
        }
    }

    pub fn grad(self, g: &GradBuffer) -> f64 {
        match self {
            Param::Octree(i) => g.octree[i],
            Param::Hash(i) => g.hash[i],
            Param::Weight(l, i) => g.mlp[l].weights[i],
            Param::Bias(l, i) => g.mlp[l].biases[i],
        }
    }
}

/// A full-size f64 model on a sphere, every parameter group randomized so
/// all of them carry gradient, plus a small batch.
///
/// The prior is a scaled and shifted distance (5 d + 0.25): gradient norms far from
/// 1 keep the Eikonal term smooth and its finite-difference truncation small, and the network
/// output is kept small.
pub fn randomized_problem(seed: u64) -> (SdfModel<f64>, SampleBatch) {
    let config = Config::profile(Profile::DeskScale);
    let mut model = SdfModel::<f64>::new(&config).unwrap();
    let frames = sphere_frames(2, 400, seed);
    for f in &frames {
        model.octree.insert_points(&f.points, &f.points);
    }
    let mut rng = SampleRng::new(seed ^ 0xfd);
    let scene = sphere_scene();
    model.octree.set_vertices_with(|p| {
        let g = scene.gradient_or_nearest(p) * (5.0 * rng.uniform_in(0.9, 1.1));
        (5.0 * scene.sdf(p) + 0.25 + rng.uniform_in(-0.01, 0.01), g)
    });
    let net = model.net.as_mut().unwrap();
    for v in net.grid.params_mut() {
        *v = rng.uniform_in(-0.5, 0.5);
    }
    let last = net.mlp.layers().len() - 1;
    for (l, layer) in net.mlp.layers_mut().iter_mut().enumerate() {
        let scale = if l == last { 0.01 } else { (3.0 / layer.cols as f64).sqrt() };
        for w in &mut layer.weights {
            *w = rng.uniform_in(-scale, scale);
        }
        for b in &mut layer.biases {
            *b = rng.uniform_in(-0.3, 0.3);
        }
    }
    let refs: Vec<&Frame> = frames.iter().collect();
    let mut sampling = config.sampling.clone();
    sampling.rays = 8;
    let batch = generate_batch(&refs, &sampling, seed).unwrap();
    (model, batch)
}

/// Every point the losses evaluate: samples and their stencils.
fn touched_points(batch: &SampleBatch, eps: f64) -> Vec<Vec3> {
    let base: Vec<Vec3> = batch
        .surface
        .iter()
        .copied()
        .chain(batch.perturbed.iter().map(|p| p.x))
        .chain(batch.free.iter().map(|f| f.x))
        .collect();
    let mut out = base.clone();
    for x in base {
        for a in 0..3 {
            out.push(x + Vec3::unit(a) * eps);
            out.push(x - Vec3::unit(a) * eps);
        }
    }
    out
}

/// Signs of every quantity at which the objective has a kink: value
/// residuals, gradient norm minus one, and hidden pre-activations.
pub fn kink_signature(model: &SdfModel<f64>, batch: &SampleBatch, eps: f64) -> Vec<bool> {
    let xs: Vec<Vec3> = batch
        .surface
        .iter()
        .copied()
        .chain(batch.perturbed.iter().map(|p| p.x))
        .chain(batch.free.iter().map(|f| f.x))
        .collect();
    let targets = batch
        .surface
        .iter()
        .map(|_| 0.0)
        .chain(batch.perturbed.iter().map(|p| p.sign * p.dist))
        .chain(batch.free.iter().map(|f| f.dist));
    let pred = model.predict_batch(&xs).unwrap();
    let mut sig: Vec<bool> = pred.iter().zip(targets).map(|(p, t)| p > &t).collect();
    sig.extend(model.gradient_batch(&xs, eps).unwrap().iter().map(|g| g.norm() > 1.0));
    if let Some(net) = &model.net {
        let cache = net.forward_batch(&touched_points(batch, eps)).unwrap();
        for layer in cache.mlp().hidden() {
            sig.extend(layer.iter().map(|v| *v > 0.0));
        }
    }
    sig
}

/// Whether the objective is smooth on `[v - h, v + h]` along `p`.
pub fn smooth_along(model: &mut SdfModel<f64>, batch: &SampleBatch, eps: f64, p: Param, base: &[bool]) -> bool {
    let v = p.get(model);
    let mut ok = true;
    for s in [FD_STEP, -FD_STEP] {
        p.set(model, v + s);
        ok &= kink_signature(model, batch, eps) == base;
    }
    p.set(model, v);
    ok
}

/// `per_group` parameters of each group (octree values, octree gradients,
/// hash entries, MLP weights and biases), drawn from those the batch can
/// influence. Selection uses the forward structure only, never the
/// analytic gradient.
///
/// Parameters whose `±h` probe crosses a kink are redrawn: finite
/// differences say nothing about a derivative across a kink.
pub fn pick_params(model: &mut SdfModel<f64>, batch: &SampleBatch, eps: f64, per_group: usize, seed: u64) -> Vec<Param> {
    let mut rng = SampleRng::new(seed);
    let pts = touched_points(batch, eps);
    let mut values = Vec::new();
    let mut grads = Vec::new();
    let mut hash = Vec::new();
    let net = model.net.as_ref().unwrap();
    let cfg = net.grid.config().clone();
    for &x in &pts {
        let it = model.octree.interpolate(x, InterpMode::GradientAugmented).unwrap();
        for &v in &it.vertices {
            let base = v as usize * VERTEX_STRIDE;
            values.push(Param::Octree(base));
            grads.push(Param::Octree(base + 1 + rng.index(3)));
        }
        for level in 0..cfg.levels() {
            let fp = net.grid.footprint(level, x);
            let row = fp.rows[rng.index(8)];
            hash.push(Param::Hash(net.grid.param_index(level, row, rng.index(cfg.features as usize))));
        }
    }
    let layers = net.mlp.layers();
    let mut mlp = Vec::new();
    for _ in 0..per_group * 8 {
        let l = rng.index(layers.len());
        if rng.uniform() < 0.75 {
            mlp.push(Param::Weight(l, rng.index(layers[l].weights.len())));
        } else {
            mlp.push(Param::Bias(l, rng.index(layers[l].biases.len())));
        }
    }
    let base = kink_signature(model, batch, eps);
    let mut out = Vec::new();
    for pool in [values, grads, hash, mlp] {
        let mut taken = 0;
        for _ in 0..pool.len() * 4 {
            if taken == per_group {
                break;
            }
            let p = pool[rng.index(pool.len())];
            if smooth_along(model, batch, eps, p, &base) {
                out.push(p);
                taken += 1;
            }
        }
        assert_eq!(taken, per_group, "too few kink-free parameters");
    }
    out
}

pub fn total_loss(model: &SdfModel<f64>, batch: &SampleBatch, w: &LossWeights, eps: f64) -> f64 {
    evaluate_losses(model, batch, w, eps, None).unwrap().total()
}

pub fn analytic_grads(model: &SdfModel<f64>, batch: &SampleBatch, w: &LossWeights, eps: f64) -> GradBuffer {
    let mut g = GradBuffer::new(model.octree.params().len(), model.net.as_ref().unwrap());
    evaluate_losses(model, batch, w, eps, Some(&mut g)).unwrap();
    g
}

pub const FD_STEP: f64 = 1e-3;
pub const FD_REL_TOL: f64 = 1e-4;
/// Absolute floor below which both gradients count as zero.
pub const FD_ABS_FLOOR: f64 = 1e-9;

#[derive(Debug)]
pub struct FdMismatch {
    pub param: Param,
    pub analytic: f64,
    pub numeric: f64,
}

/// `w` split into one weight set per active loss term.
fn split_terms(w: &LossWeights) -> Vec<LossWeights> {
    let fields: [fn(&mut LossWeights) -> &mut f64; 5] = [
        |w| &mut w.recon_surface,
        |w| &mut w.recon_perturbed,
        |w| &mut w.eik_surface,
        |w| &mut w.eik_free,
        |w| &mut w.proj,
    ];
    let mut out = Vec::new();
    for f in fields {
        let v = *f(&mut w.clone());
        if v != 0.0 {
            let mut one = LossWeights::zero();
            *f(&mut one) = v;
            out.push(one);
        }
    }
    out
}

/// Compares analytic and central-difference gradients; returns the worst
/// relative error and every mismatch.
///
/// The relative error divides by the larger of the two gradients and the
/// summed magnitudes of the per-term gradients, so terms that cancel in a
/// combined objective are judged against their own size.
pub fn fd_check(model: &mut SdfModel<f64>, batch: &SampleBatch, w: &LossWeights, params: &[Param]) -> (f64, Vec<FdMismatch>) {
    let eps = 0.01;
    let g = analytic_grads(model, batch, w, eps);
    let terms: Vec<GradBuffer> = split_terms(w).iter().map(|t| analytic_grads(model, batch, t, eps)).collect();
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for &p in params {
        let v = p.get(model);
        p.set(model, v + FD_STEP);
        let up = total_loss(model, batch, w, eps);
        p.set(model, v - FD_STEP);
        let down = total_loss(model, batch, w, eps);
        p.set(model, v);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let analytic = p.grad(&g);
        let diff = (analytic - numeric).abs();
        if diff <= FD_ABS_FLOOR {
            continue;
        }
        let scale: f64 = terms.iter().map(|t| p.grad(t).abs()).sum();
        let rel = diff / analytic.abs().max(numeric.abs()).max(scale);
        worst = worst.max(rel);
        if rel > FD_REL_TOL {
            bad.push(FdMismatch { param: p, analytic, numeric });
        }
    }
    (worst, bad)
}

pub fn weight_sets() -> Vec<(&'static str, LossWeights)> {
    let only = |f: fn(&mut LossWeights)| {
        let mut w = LossWeights::zero();
        f(&mut w);
        w
    };
    vec![
        ("recon_surface", only(|w| w.recon_surface = 1000.0)),
        ("recon_perturbed", only(|w| w.recon_perturbed = 200.0)),
        ("eik_surface", only(|w| w.eik_surface = 10.0)),
        ("eik_free", only(|w| w.eik_free = 3.0)),
        ("proj", only(|w| w.proj = 100.0)),
        ("combined", LossWeights::default()),
    ]
}
