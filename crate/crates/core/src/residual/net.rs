use std::io::{Read, Write};

use super::hashgrid::{HashGrid, HashGridConfig, LevelFootprint};
use super::mlp::{LayerGrad, Mlp, MlpCache, MlpConfig};
use crate::error::{Error, Result};
use crate::geometry::rng::SampleRng;
use crate::geometry::{Aabb, Vec3};
use crate::num::Real;

/// Points per forward chunk in [`ResidualNet::eval_batch`].
const EVAL_CHUNK: usize = 4096;

/// Gradient accumulators mirroring every learnable scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer {
    /// Octree vertex parameters, stride 4 (`d, gx, gy, gz`).
    pub octree: Vec<f64>,
    pub hash: Vec<f64>,
    pub mlp: Vec<LayerGrad>,
}

impl GradBuffer {
    pub fn new<T: Real>(octree_len: usize, net: &ResidualNet<T>) -> Self {
        Self { octree: vec![0.0; octree_len], hash: vec![0.0; net.grid.params().len()], mlp: net.mlp.zero_grads() }
    }

    pub fn zero(&mut self) {
        self.octree.fill(0.0);
        self.hash.fill(0.0);
        for l in &mut self.mlp {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
    }

    /// Grows the octree slice to `len` (new vertices are appended).
    pub fn resize_octree(&mut self, len: usize) {
        self.octree.resize(len, 0.0);
    }

    pub fn norm_squared_octree(&self) -> f64 {
        self.octree.iter().map(|g| g * g).sum()
    }

    pub fn norm_squared_network(&self) -> f64 {
        self.hash.iter().map(|g| g * g).sum::<f64>()
            + self
                .mlp
                .iter()
                .flat_map(|l| l.weights.iter().chain(&l.biases))
                .map(|g| g * g)
                .sum::<f64>()
    }
}

/// Footprints and activations of a batched residual forward pass.
#[derive(Clone, Debug)]
pub struct ResidualCache {
    levels: usize,
    footprints: Vec<LevelFootprint>,
    mlp: MlpCache,
}

impl ResidualCache {
    pub fn len(&self) -> usize {
        self.footprints.len() / self.levels
    }

    pub fn is_empty(&self) -> bool {
        self.footprints.is_empty()
    }

    pub fn output(&self) -> &[f64] {
        &self.mlp.output
    }

    pub fn mlp(&self) -> &MlpCache {
        &self.mlp
    }
}

/// Hash-grid encoder followed by the MLP decoder: a scalar SDF correction.
#[derive(Clone, Debug)]
pub struct ResidualNet<T> {
    pub grid: HashGrid<T>,
    pub mlp: Mlp<T>,
}

impl<T: Real> ResidualNet<T> {
    pub fn new(grid: HashGridConfig, mlp: &MlpConfig, root: Aabb<f64>, rng: &mut SampleRng) -> Result<Self> {
        let grid = HashGrid::new(grid, root, rng)?;
        let mlp = Mlp::new(grid.config().output_dim(), mlp, rng)?;
        Ok(Self { grid, mlp })
    }

    pub fn from_parts(grid: HashGrid<T>, mlp: Mlp<T>) -> Result<Self> {
        if grid.config().output_dim() != mlp.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "encoder emits {} features, decoder expects {}",
                grid.config().output_dim(),
                mlp.input_dim()
            )));
        }
        Ok(Self { grid, mlp })
    }

    pub fn forward_batch(&self, xs: &[Vec3]) -> Result<ResidualCache> {
        let n = xs.len();
        let levels = self.grid.config().levels();
        let dim = self.grid.config().output_dim();
        let mut input = vec![0.0; dim * n];
        let mut footprints = vec![LevelFootprint::default(); levels * n];
        let mut feat = vec![0.0; dim];
        for (i, &x) in xs.iter().enumerate() {
            self.grid.encode_into(x, &mut feat, &mut footprints[i * levels..(i + 1) * levels])?;
            for (f, v) in feat.iter().enumerate() {
                input[f * n + i] = *v;
            }
        }
        let mlp = self.mlp.forward_batch(&input, n)?;
        Ok(ResidualCache { levels, footprints, mlp })
    }

    /// Accumulates `upstream[i] * d residual(x_i) / d params` into `grads`.
    pub fn backward_batch(&self, cache: &ResidualCache, upstream: &[f64], grads: &mut GradBuffer) -> Result<()> {
        let n = cache.len();
        if grads.hash.len() != self.grid.params().len() {
            return Err(Error::ShapeMismatch("hash gradient buffer".into()));
        }
        let dinput = self.mlp.backward_batch(&cache.mlp, upstream, &mut grads.mlp)?;
        let dim = self.grid.config().output_dim();
        let mut dfeat = vec![0.0; dim];
        for i in 0..n {
            if upstream[i] == 0.0 {
                continue;
            }
            for (f, d) in dfeat.iter_mut().enumerate() {
                *d = dinput[f * n + i];
            }
            self.grid
                .accumulate(&cache.footprints[i * cache.levels..(i + 1) * cache.levels], &dfeat, &mut grads.hash);
        }
        Ok(())
    }

    pub fn forward(&self, x: Vec3) -> Result<f64> {
        let (feat, _) = self.grid.encode(x)?;
        self.mlp.forward(&feat)
    }

    /// Forward-only evaluation over many points.
    pub fn eval_batch(&self, xs: &[Vec3]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(EVAL_CHUNK) {
            out.extend_from_slice(self.forward_batch(chunk)?.output());
        }
        Ok(out)
    }

    pub fn write_hash<W: Write>(&self, w: &mut W) -> Result<()> {
        self.grid.write_to(w)
    }

    pub fn write_mlp<W: Write>(&self, w: &mut W) -> Result<()> {
        self.mlp.write_to(w)
    }

    pub fn read_from<R: Read>(hash: &mut R, mlp: &mut R) -> Result<Self> {
        Self::from_parts(HashGrid::read_from(hash)?, Mlp::read_from(mlp)?)
    }
}
