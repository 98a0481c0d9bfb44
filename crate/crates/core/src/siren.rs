//! Sinusoidal-activation MLP with hand-written reverse-mode gradients.
//!
//! Every layer except the last computes `sin(omega0 * (W h + b))`; the last
//! layer is affine. Batches are row-major `batch x features` matrices.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{s, Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate dimension: networks map `(x, y)` to a spectrum.
pub const IN_DIM: usize = 2;

/// Default sine frequency scale.
pub const DEFAULT_OMEGA0: f64 = 30.0;

/// Rows per work unit in batched evaluation. Partial gradient sums are
/// reduced in chunk order, so results do not depend on the thread count.
pub const CHUNK_ROWS: usize = 256;

/// Floating-point type used for network arithmetic.
pub trait Real:
    num_traits::Float
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Send
    + Sync
    + Debug
    + Default
    + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Arithmetic precision for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Fp32,
    Fp64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fp32" | "f32" => Ok(Precision::Fp32),
            "fp64" | "f64" => Ok(Precision::Fp64),
            other => Err(Error::InvalidSettings(format!(
                "unknown precision {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::Fp32 => "fp32",
            Precision::Fp64 => "fp64",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirenConfig {
    /// Number of sine layers.
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub in_dim: usize,
    /// Number of spectral bands.
    pub out_dim: usize,
    pub omega0: f64,
}

impl SirenConfig {
    pub fn new(hidden_layers: usize, hidden_width: usize, out_dim: usize) -> Self {
        SirenConfig {
            hidden_layers,
            hidden_width,
            in_dim: IN_DIM,
            out_dim,
            omega0: DEFAULT_OMEGA0,
        }
    }

    pub fn with_omega0(mut self, omega0: f64) -> Self {
        self.omega0 = omega0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim != IN_DIM {
            return Err(Error::InvalidConfig(format!(
                "in_dim must be 2, got {}",
                self.in_dim
            )));
        }
        if self.out_dim == 0 || self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::InvalidConfig(format!(
                "depth, width and output size must be positive (d={}, w={}, out={})",
                self.hidden_layers, self.hidden_width, self.out_dim
            )));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "omega0 must be positive, got {}",
                self.omega0
            )));
        }
        Ok(())
    }

    /// `(fan_out, fan_in)` of every layer, input layer first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let w = self.hidden_width;
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        shapes.push((w, self.in_dim));
        shapes.extend((1..self.hidden_layers).map(|_| (w, w)));
        shapes.push((self.out_dim, w));
        shapes
    }

    pub fn param_count(&self) -> u64 {
        param_count(
            self.hidden_layers,
            self.hidden_width,
            self.in_dim,
            self.out_dim,
        )
    }
}

/// Scalars in a network of `depth` sine layers of `width` units.
pub fn param_count(depth: usize, width: usize, in_dim: usize, out_dim: usize) -> u64 {
    let (d, w, i, o) = (depth as u64, width as u64, in_dim as u64, out_dim as u64);
    (i * w + w) + d.saturating_sub(1) * (w * w + w) + (w * o + o)
}

/// Weight matrix (`fan_out x fan_in`) and bias of one layer. Also used for
/// gradients and optimizer moments, which share the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Layer<F> {
    pub fn zeros(fan_out: usize, fan_in: usize) -> Self {
        Layer {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weights row-major, then bias.
    pub fn values(&self) -> impl Iterator<Item = F> + '_ {
        self.weight.iter().chain(self.bias.iter()).copied()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut F> + '_ {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }

    fn add_assign(&mut self, other: &Layer<F>) {
        self.weight += &other.weight;
        self.bias += &other.bias;
    }
}

pub type Gradients<F> = Vec<Layer<F>>;

pub fn zeros_like<F: Real>(layers: &[Layer<F>]) -> Vec<Layer<F>> {
    layers
        .iter()
        .map(|l| Layer {
            weight: Array2::zeros(l.weight.raw_dim()),
            bias: Array1::zeros(l.bias.raw_dim()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SirenModel<F> {
    pub config: SirenConfig,
    pub layers: Vec<Layer<F>>,
}

impl<F: Real> SirenModel<F> {
    pub fn zeros(config: SirenConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(o, i)| Layer::zeros(o, i))
            .collect();
        Ok(SirenModel { config, layers })
    }

    /// Builds a model from parameters in layer order (weights row-major, then bias).
    pub fn from_flat(config: SirenConfig, params: &[F]) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        if params.len() as u64 != config.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters supplied, architecture needs {}",
                params.len(),
                config.param_count()
            )));
        }
        for (slot, v) in model.params_mut().zip(params) {
            *slot = *v;
        }
        Ok(model)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = F> + '_ {
        self.layers.iter().flat_map(Layer::values)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut F> + '_ {
        self.layers.iter_mut().flat_map(Layer::values_mut)
    }

    pub fn to_flat(&self) -> Vec<F> {
        self.params().collect()
    }

    /// Converts parameters to another precision.
    pub fn cast<G: Real>(&self) -> SirenModel<G> {
        SirenModel {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: l.weight.mapv(|v| G::of(v.as_f64())),
                    bias: l.bias.mapv(|v| G::of(v.as_f64())),
                })
                .collect(),
        }
    }

    fn omega(&self) -> F {
        F::of(self.config.omega0)
    }

    fn check_coords(&self, coords: &ArrayView2<'_, F>) -> Result<()> {
        if coords.ncols() != self.config.in_dim {
            return Err(Error::Shape(format!(
                "coordinates have {} columns, expected {}",
                coords.ncols(),
                self.config.in_dim
            )));
        }
        Ok(())
    }

    /// Evaluates one chunk of rows, single-threaded.
    fn forward_chunk(&self, coords: ArrayView2<'_, F>) -> Array2<F> {
        let omega = self.omega();
        let (last, hidden) = self.layers.split_last().expect("at least two layers");
        let mut h = coords.to_owned();
        for layer in hidden {
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            z.mapv_inplace(|v| (omega * v).sin());
            h = z;
        }
        let mut y = h.dot(&last.weight.t());
        y += &last.bias;
        y
    }

    /// Network output for each coordinate row; `batch x out_dim`.
    pub fn forward(&self, coords: ArrayView2<'_, F>) -> Result<Array2<F>> {
        self.check_coords(&coords)?;
        let n = coords.nrows();
        if n <= CHUNK_ROWS {
            return Ok(self.forward_chunk(coords));
        }
        let parts: Vec<Array2<F>> = (0..n)
            .step_by(CHUNK_ROWS)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|start| {
                let end = (start + CHUNK_ROWS).min(n);
                self.forward_chunk(coords.slice(s![start..end, ..]))
            })
            .collect();
        let mut out = Array2::zeros((n, self.config.out_dim));
        for (i, part) in parts.into_iter().enumerate() {
            let start = i * CHUNK_ROWS;
            out.slice_mut(s![start..start + part.nrows(), ..])
                .assign(&part);
        }
        Ok(out)
    }

    /// Sum of squared residuals over a chunk and the gradient of
    /// `scale * sum((f(p) - x)^2)`.
    fn backprop_chunk(
        &self,
        coords: ArrayView2<'_, F>,
        targets: ArrayView2<'_, F>,
        scale: F,
    ) -> (f64, Gradients<F>) {
        let omega = self.omega();
        let depth = self.layers.len() - 1;
        let mut acts: Vec<Array2<F>> = Vec::with_capacity(depth + 1);
        let mut slopes: Vec<Array2<F>> = Vec::with_capacity(depth);
        acts.push(coords.to_owned());
        for layer in &self.layers[..depth] {
            let mut z = acts.last().unwrap().dot(&layer.weight.t());
            z += &layer.bias;
            let mut slope = Array2::zeros(z.raw_dim());
            Zip::from(&mut z).and(&mut slope).for_each(|z, d| {
                let (sin, cos) = (omega * *z).sin_cos();
                *z = sin;
                *d = omega * cos;
            });
            acts.push(z);
            slopes.push(slope);
        }
        let last = &self.layers[depth];
        let mut residual = acts[depth].dot(&last.weight.t());
        residual += &last.bias;
        residual -= &targets;
        let sse: f64 = residual.iter().map(|r| r.as_f64() * r.as_f64()).sum();

        let two_scale = scale + scale;
        residual.mapv_inplace(|r| r * two_scale);
        let mut grads = zeros_like(&self.layers);
        grads[depth].weight = residual.t().dot(&acts[depth]);
        grads[depth].bias = residual.sum_axis(Axis(0));
        let mut upstream = residual.dot(&last.weight);
        for k in (0..depth).rev() {
            upstream *= &slopes[k];
            grads[k].weight = upstream.t().dot(&acts[k]);
            grads[k].bias = upstream.sum_axis(Axis(0));
            if k > 0 {
                upstream = upstream.dot(&self.layers[k].weight);
            }
        }
        (sse, grads)
    }

    /// Mean squared error over all `batch x out_dim` residuals and its exact
    /// gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        coords: ArrayView2<'_, F>,
        targets: ArrayView2<'_, F>,
    ) -> Result<(f64, Gradients<F>)> {
        self.check_coords(&coords)?;
        if coords.nrows() != targets.nrows() {
            return Err(Error::BatchSize {
                coords: coords.nrows(),
                targets: targets.nrows(),
            });
        }
        if targets.ncols() != self.config.out_dim {
            return Err(Error::Shape(format!(
                "targets have {} columns, network outputs {}",
                targets.ncols(),
                self.config.out_dim
            )));
        }
        let n = coords.nrows();
        let count = (n * self.config.out_dim) as f64;
        if n == 0 {
            return Ok((0.0, zeros_like(&self.layers)));
        }
        let scale = F::of(1.0 / count);
        if n <= CHUNK_ROWS {
            let (sse, grads) = self.backprop_chunk(coords, targets, scale);
            return Ok((sse / count, grads));
        }
        let partials: Vec<(f64, Gradients<F>)> = (0..n)
            .step_by(CHUNK_ROWS)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|start| {
                let end = (start + CHUNK_ROWS).min(n);
                self.backprop_chunk(
                    coords.slice(s![start..end, ..]),
                    targets.slice(s![start..end, ..]),
                    scale,
                )
            })
            .collect();
        let mut iter = partials.into_iter();
        let (mut sse, mut grads) = iter.next().unwrap();
        for (part_sse, part) in iter {
            sse += part_sse;
            for (g, p) in grads.iter_mut().zip(&part) {
                g.add_assign(p);
            }
        }
        Ok((sse / count, grads))
    }
}

/// Initial weight bound of layer `index` with `fan_in` inputs.
pub fn init_bound(index: usize, fan_in: usize, omega0: f64) -> f64 {
    if index == 0 {
        1.0 / fan_in as f64
    } else {
        (6.0 / fan_in as f64).sqrt() / omega0
    }
}

/// Sine-network initialization: first layer uniform on `±1/fan_in`, later
/// layers on `±sqrt(6/fan_in)/omega0`. Biases share their layer's interval.
pub fn init_siren<F: Real>(config: SirenConfig, seed: u64) -> Result<SirenModel<F>> {
    let mut model = SirenModel::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (index, layer) in model.layers.iter_mut().enumerate() {
        let bound = init_bound(index, layer.weight.ncols(), config.omega0);
        let dist = Uniform::new_inclusive(-bound, bound);
        for v in layer.values_mut() {
            *v = F::of(dist.sample(&mut rng));
        }
    }
    Ok(model)
}
