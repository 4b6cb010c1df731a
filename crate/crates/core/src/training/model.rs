use crate::error::Result;
use crate::geometry::rng::{mix_seed, SampleRng};
use crate::geometry::{Aabb, Vec3};
use crate::num::Real;
use crate::octree::{InterpMode, SemiSparseOctree};
use crate::residual::ResidualNet;

use super::config::Config;

/// RNG stream for network initialization.
const INIT_STREAM: u64 = 0x1d;

/// Anything that maps points to signed distances; lets evaluation run on
/// trained models and analytic stand-ins alike.
pub trait SdfPredictor {
    fn root(&self) -> Aabb<f64>;

    /// Predicted distances at `xs`; every point must lie inside the root.
    fn predict_batch(&self, xs: &[Vec3]) -> Result<Vec<f64>>;

    fn predict(&self, x: Vec3) -> Result<f64> {
        Ok(self.predict_batch(&[x])?[0])
    }

    /// Central-difference gradients with step `eps`.
    fn gradient_batch(&self, xs: &[Vec3], eps: f64) -> Result<Vec<Vec3>> {
        let mut stencil = Vec::with_capacity(xs.len() * 6);
        for &x in xs {
            for a in 0..3 {
                let e = Vec3::unit(a) * eps;
                stencil.push(x + e);
                stencil.push(x - e);
            }
        }
        let d = self.predict_batch(&stencil)?;
        Ok(d.chunks_exact(6)
            .map(|s| Vec3::new(s[0] - s[1], s[2] - s[3], s[4] - s[5]) / (2.0 * eps))
            .collect())
    }
}

/// Numerical gradient at one point.
pub fn numerical_gradient<P: SdfPredictor + ?Sized>(p: &P, x: Vec3, eps: f64) -> Result<Vec3> {
    Ok(p.gradient_batch(&[x], eps)?[0])
}

/// Octree prior plus optional neural residual.
#[derive(Clone, Debug)]
pub struct SdfModel<T> {
    pub octree: SemiSparseOctree<T>,
    pub net: Option<ResidualNet<T>>,
    pub interp: InterpMode,
}

impl<T: Real> SdfModel<T> {
    pub fn new(config: &Config) -> Result<Self> {
        config.validate()?;
        let octree = SemiSparseOctree::new(config.octree.clone(), config.model.structure)?;
        let net = if config.model.prior_only {
            None
        } else {
            let mut rng = SampleRng::new(mix_seed(config.train.seed, INIT_STREAM));
            Some(ResidualNet::new(config.hash_grid.clone(), &config.mlp, *octree.root(), &mut rng)?)
        };
        Ok(Self { octree, net, interp: config.model.interpolation })
    }

    pub fn prior(&self, x: Vec3) -> Result<f64> {
        Ok(self.octree.interpolate(x, self.interp)?.value)
    }

    pub fn residual(&self, x: Vec3) -> Result<f64> {
        match &self.net {
            Some(n) => n.forward(x),
            None => Ok(0.0),
        }
    }

    pub fn is_finite(&self) -> bool {
        let finite = |p: &[T]| p.iter().all(|v| v.is_finite());
        let mut ok = finite(self.octree.params());
        if let Some(n) = &self.net {
            ok &= finite(n.grid.params());
            ok &= n.mlp.layers().iter().all(|l| finite(&l.weights) && finite(&l.biases));
        }
        ok
    }
}

impl<T: Real> SdfPredictor for SdfModel<T> {
    fn root(&self) -> Aabb<f64> {
        *self.octree.root()
    }

    fn predict_batch(&self, xs: &[Vec3]) -> Result<Vec<f64>> {
        let mut out = xs.iter().map(|&x| self.prior(x)).collect::<Result<Vec<_>>>()?;
        if let Some(net) = &self.net {
            for (o, r) in out.iter_mut().zip(net.eval_batch(xs)?) {
                *o += r;
            }
        }
        Ok(out)
    }
}
