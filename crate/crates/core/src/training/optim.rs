use crate::num::Real;
use crate::residual::GradBuffer;

use super::config::TrainConfig;
use super::model::SdfModel;

/// First and second moment estimates of one parameter slice.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// Adam over two parameter groups: octree vertices and the network.
///
/// Slots are ordered octree, hash tables, then each MLP layer's weights and
/// biases. The octree slot grows as vertices are appended.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub t: u64,
    pub slots: Vec<Moments>,
}

struct Hyper {
    lr: f64,
    b1: f64,
    b2: f64,
    c1: f64,
    c2: f64,
    eps: f64,
}

impl Hyper {
    #[inline]
    fn update<T: Real>(&self, p: &mut [T], g: &[f64], st: &mut Moments) {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(&mut st.m).zip(&mut st.v) {
            *m = self.b1 * *m + (1.0 - self.b1) * g;
            *v = self.b2 * *v + (1.0 - self.b2) * g * g;
            let step = self.lr * (*m / self.c1) / ((*v / self.c2).sqrt() + self.eps);
            *p = T::lit(p.f64() - step);
        }
    }
}

impl Adam {
    pub fn new<T: Real>(model: &SdfModel<T>) -> Self {
        let mut slots = vec![Moments::zeros(model.octree.params().len())];
        if let Some(net) = &model.net {
            slots.push(Moments::zeros(net.grid.params().len()));
            for l in net.mlp.layers() {
                slots.push(Moments::zeros(l.weights.len()));
                slots.push(Moments::zeros(l.biases.len()));
            }
        }
        Self { t: 0, slots }
    }

    pub fn resize_octree(&mut self, len: usize) {
        self.slots[0].m.resize(len, 0.0);
        self.slots[0].v.resize(len, 0.0);
    }

    /// One bias-corrected update of every parameter.
    pub fn step<T: Real>(&mut self, model: &mut SdfModel<T>, grads: &GradBuffer, cfg: &TrainConfig) {
        self.t += 1;
        let t = self.t as i32;
        let hyper = |lr| Hyper {
            lr,
            b1: cfg.beta1,
            b2: cfg.beta2,
            c1: 1.0 - cfg.beta1.powi(t),
            c2: 1.0 - cfg.beta2.powi(t),
            eps: cfg.adam_eps,
        };
        hyper(cfg.lr_octree).update(model.octree.params_mut(), &grads.octree, &mut self.slots[0]);
        if let Some(net) = &mut model.net {
            let h = hyper(cfg.lr_network);
            let (first, rest) = self.slots[1..].split_first_mut().expect("network slots present");
            h.update(net.grid.params_mut(), &grads.hash, first);
            for ((layer, g), st) in net.mlp.layers_mut().iter_mut().zip(&grads.mlp).zip(rest.chunks_exact_mut(2)) {
                h.update(&mut layer.weights, &g.weights, &mut st[0]);
                h.update(&mut layer.biases, &g.biases, &mut st[1]);
            }
        }
    }
}
