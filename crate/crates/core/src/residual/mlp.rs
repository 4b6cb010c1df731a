use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::binio::{ReadLe, WriteLe};
use crate::error::{Error, Result};
use crate::geometry::rng::SampleRng;
use crate::num::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub negative_slope: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: vec![64; 5], negative_slope: 0.01 }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(self.negative_slope.is_finite() && self.negative_slope > 0.0) {
            return Err(Error::Config("negative slope must be positive".into()));
        }
        Ok(())
    }
}

/// Dense layer `y = W x + b`, weights row-major `rows x cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Real> Layer<T> {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, weights: vec![T::zero(); rows * cols], biases: vec![T::zero(); rows] }
    }
}

/// Gradient accumulator for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Scalar-output MLP with LeakyReLU hidden activations and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    input: usize,
    slope: f64,
    layers: Vec<Layer<T>>,
}

/// Activations of a batched forward pass, feature-major (`dim x n`).
#[derive(Clone, Debug)]
pub struct MlpCache {
    n: usize,
    /// Input to each layer; `acts[0]` is the network input.
    acts: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl MlpCache {
    /// Post-activation values of each hidden layer (`width x n`).
    pub fn hidden(&self) -> &[Vec<f64>] {
        &self.acts[1..]
    }
}

impl<T: Real> Mlp<T> {
    /// Hidden layers uniform in `±sqrt(6 / fan_in)` with zero biases; the
    /// output layer is all zeros.
    pub fn new(input: usize, config: &MlpConfig, rng: &mut SampleRng) -> Result<Self> {
        let mut mlp = Self::zeros(input, config)?;
        let last = mlp.layers.len() - 1;
        for layer in &mut mlp.layers[..last] {
            let bound = (6.0 / layer.cols as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::lit(rng.uniform_in(-bound, bound));
            }
        }
        Ok(mlp)
    }

    pub fn zeros(input: usize, config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        if input == 0 {
            return Err(Error::Config("mlp input width must be positive".into()));
        }
        let mut widths = vec![input];
        widths.extend(&config.hidden);
        widths.push(1);
        let layers = widths.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect();
        Ok(Self { input, slope: config.negative_slope, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn negative_slope(&self) -> f64 {
        self.slope
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn zero_grads(&self) -> Vec<LayerGrad> {
        self.layers
            .iter()
            .map(|l| LayerGrad { weights: vec![0.0; l.weights.len()], biases: vec![0.0; l.rows] })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn f64_weights(layer: &Layer<T>) -> Vec<f64> {
        layer.weights.iter().map(|w| w.f64()).collect()
    }

    /// Single-point forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        Ok(self.forward_batch(input, 1)?.output[0])
    }

    /// Forward pass over `n` inputs stored feature-major (`input_dim x n`).
    pub fn forward_batch(&self, input: &[f64], n: usize) -> Result<MlpCache> {
        if input.len() != self.input * n {
            return Err(Error::ShapeMismatch(format!(
                "mlp input has {} values, expected {} x {n}",
                input.len(),
                self.input
            )));
        }
        let mut acts = vec![input.to_vec()];
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let w = Self::f64_weights(layer);
            let mut z = Vec::with_capacity(layer.rows * n);
            for b in &layer.biases {
                z.extend(std::iter::repeat_n(b.f64(), n));
            }
            let a = acts.last().expect("input present");
            // SAFETY: all slices hold exactly the dimensions passed with the
            // given row-major strides.
            unsafe {
                matrixmultiply::dgemm(
                    layer.rows, layer.cols, n,
                    1.0, w.as_ptr(), layer.cols as isize, 1,
                    a.as_ptr(), n as isize, 1,
                    1.0, z.as_mut_ptr(), n as isize, 1,
                );
            }
            if li == last {
                return Ok(MlpCache { n, acts, output: z });
            }
            for v in &mut z {
                if *v <= 0.0 {
                    *v *= self.slope;
                }
            }
            acts.push(z);
        }
        unreachable!("the output layer returns")
    }

    /// Accumulates parameter gradients for `upstream = d loss / d output` and
    /// returns `d loss / d input` (feature-major).
    pub fn backward_batch(&self, cache: &MlpCache, upstream: &[f64], grads: &mut [LayerGrad]) -> Result<Vec<f64>> {
        let n = cache.n;
        if upstream.len() != n || grads.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "mlp backward got {} upstream values for {n} samples",
                upstream.len()
            )));
        }
        let mut dz = upstream.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let a = &cache.acts[li];
            let g = &mut grads[li];
            if g.weights.len() != layer.weights.len() || g.biases.len() != layer.rows {
                return Err(Error::ShapeMismatch(format!("gradient buffer for layer {li}")));
            }
            for (r, gb) in g.biases.iter_mut().enumerate() {
                *gb += dz[r * n..(r + 1) * n].iter().sum::<f64>();
            }
            // SAFETY: as in forward_batch; `a` is read column-major to form
            // its transpose.
            unsafe {
                matrixmultiply::dgemm(
                    layer.rows, n, layer.cols,
                    1.0, dz.as_ptr(), n as isize, 1,
                    a.as_ptr(), 1, n as isize,
                    1.0, g.weights.as_mut_ptr(), layer.cols as isize, 1,
                );
            }
            let w = Self::f64_weights(layer);
            let mut da = vec![0.0; layer.cols * n];
            // SAFETY: W^T read through swapped strides.
            unsafe {
                matrixmultiply::dgemm(
                    layer.cols, layer.rows, n,
                    1.0, w.as_ptr(), 1, layer.cols as isize,
                    dz.as_ptr(), n as isize, 1,
                    0.0, da.as_mut_ptr(), n as isize, 1,
                );
            }
            if li > 0 {
                for (d, &h) in da.iter_mut().zip(a) {
                    if h <= 0.0 {
                        *d *= self.slope;
                    }
                }
            }
            dz = da;
        }
        Ok(dz)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.put_u32(self.layers.len() as u32)?;
        w.put_f64(self.slope)?;
        for l in &self.layers {
            w.put_u32(l.rows as u32)?;
            w.put_u32(l.cols as u32)?;
            for v in l.weights.iter().chain(&l.biases) {
                w.put_f32(v.to_f32().unwrap_or(f32::NAN))?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let count = r.get_u32()? as usize;
        let slope = r.get_f64()?;
        if count == 0 || count > 64 {
            return Err(Error::format("mlp section", format!("{count} layers")));
        }
        let mut layers: Vec<Layer<T>> = Vec::with_capacity(count);
        for i in 0..count {
            let rows = r.get_u32()? as usize;
            let cols = r.get_u32()? as usize;
            if rows == 0 || cols == 0 || rows * cols > 1 << 24 {
                return Err(Error::format("mlp section", format!("layer {i} is {rows}x{cols}")));
            }
            if let Some(prev) = layers.last() {
                if prev.rows != cols {
                    return Err(Error::format("mlp section", format!("layer {i} does not chain")));
                }
            }
            let mut l = Layer::zeros(rows, cols);
            for v in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *v = T::lit(r.get_f32()? as f64);
            }
            layers.push(l);
        }
        if layers.last().map(|l| l.rows) != Some(1) {
            return Err(Error::format("mlp section", "output layer is not scalar"));
        }
        let config = MlpConfig {
            hidden: layers[..count - 1].iter().map(|l| l.rows).collect(),
            negative_slope: slope,
        };
        config.validate()?;
        Ok(Self { input: layers[0].cols, slope, layers })
    }

    pub fn config(&self) -> MlpConfig {
        MlpConfig {
            hidden: self.layers[..self.layers.len() - 1].iter().map(|l| l.rows).collect(),
            negative_slope: self.slope,
        }
    }
}
