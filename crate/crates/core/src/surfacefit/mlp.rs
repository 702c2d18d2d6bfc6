use ndarray::linalg::general_mat_mul;
use std::borrow::Cow;
use std::ops::AddAssign;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec, CHUNK};

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid_t(x)
}

/// Topology of the elevation MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Widths of the SiLU hidden layers.
    pub hidden: Vec<usize>,
    /// Planar coordinates are divided by this before entering the network (meters).
    pub input_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32, 32],
            input_scale: 10.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(Error::Config(format!(
                "input_scale must be > 0, got {}",
                self.input_scale
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerSpan {
    fan_in: usize,
    fan_out: usize,
    /// Offset of the row-major `fan_in x fan_out` weight block; the bias follows it.
    offset: usize,
}

impl LayerSpan {
    fn weights_end(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }

    fn end(&self) -> usize {
        self.weights_end() + self.fan_out
    }
}

/// MLP surface `(x, y) -> z` with SiLU hidden layers and a linear output.
///
/// All weights and biases live in one flat vector so the optimizer can treat them
/// uniformly: layer by layer, a row-major `fan_in x fan_out` weight block followed by
/// the layer's biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ElevationModel {
    sizes: Vec<usize>,
    layers: Vec<LayerSpan>,
    params: Vec<f64>,
    input_scale: f64,
}

fn layout(sizes: &[usize]) -> (Vec<LayerSpan>, usize) {
    let mut offset = 0;
    let layers = sizes
        .windows(2)
        .map(|w| {
            let span = LayerSpan {
                fan_in: w[0],
                fan_out: w[1],
                offset,
            };
            offset = span.end();
            span
        })
        .collect();
    (layers, offset)
}

impl ElevationModel {
    /// Model with every parameter zero, i.e. the surface `z = 0`.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut sizes = vec![2];
        sizes.extend(&cfg.hidden);
        sizes.push(1);
        let (layers, n) = layout(&sizes);
        Ok(Self {
            sizes,
            layers,
            params: vec![0.0; n],
            input_scale: cfg.input_scale,
        })
    }

    /// Glorot-uniform weights from a seeded generator, zero biases.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for span in model.layers.clone() {
            let bound = (6.0 / (span.fan_in + span.fan_out) as f64).sqrt();
            for w in &mut model.params[span.offset..span.weights_end()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    /// Replaces the parameter vector; the length must match the topology.
    pub fn from_params(cfg: &ModelConfig, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(cfg)?;
        if params.len() != model.params.len() {
            return Err(Error::ShapeMismatch {
                expected: model.params.len(),
                got: params.len(),
            });
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.sizes[1..self.sizes.len() - 1].to_vec(),
            input_scale: self.input_scale,
        }
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Bias of the linear output unit.
    pub fn output_bias_mut(&mut self) -> &mut f64 {
        let last = self.layers.len() - 1;
        let idx = self.layers[last].weights_end();
        &mut self.params[idx]
    }

    /// Borrowed network view computing in `T`. `f64` borrows the parameters, `f32`
    /// works on a narrowed copy.
    pub(crate) fn net<T: Scalar>(&self) -> Net<'_, T> {
        let params = match T::borrow_f64(&self.params) {
            Some(p) => Cow::Borrowed(p),
            None => Cow::Owned(self.params.iter().map(|&v| T::from_f64(v)).collect()),
        };
        Net {
            layers: &self.layers,
            params,
            inv_scale: 1.0 / self.input_scale,
        }
    }

    pub fn predict_one(&self, x: f64, y: f64) -> f64 {
        self.predict_with(&[[x, y]], Exec::Sequential)[0]
    }

    pub fn predict(&self, xy: &[[f64; 2]]) -> Vec<f64> {
        self.predict_with(xy, Exec::default())
    }

    pub fn predict_with(&self, xy: &[[f64; 2]], exec: Exec) -> Vec<f64> {
        let net = self.net::<f64>();
        par::map_chunks(exec, xy, CHUNK, |_, c| {
            net.forward(net.input_batch(c.iter().copied())).to_vec()
        })
        .concat()
    }

    /// Heights at the planar positions of 3-D points.
    pub(crate) fn predict_points(&self, pts: &[[f64; 3]], exec: Exec) -> Vec<f64> {
        let net = self.net::<f64>();
        par::map_chunks(exec, pts, CHUNK, |_, c| {
            net.forward(net.input_batch(c.iter().map(|p| [p[0], p[1]])))
                .to_vec()
        })
        .concat()
    }
}

/// Floating-point type the forward/backward kernels run in.
pub(crate) trait Scalar: LinalgScalar + Float + ScalarOperand + AddAssign + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn widen(self) -> f64;
    fn borrow_f64(p: &[f64]) -> Option<&[Self]>;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn widen(self) -> f64 {
        self
    }
    fn borrow_f64(p: &[f64]) -> Option<&[f64]> {
        Some(p)
    }
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn widen(self) -> f64 {
        self as f64
    }
    fn borrow_f64(_: &[f64]) -> Option<&[f32]> {
        None
    }
}

pub(crate) struct Net<'a, T: Clone> {
    layers: &'a [LayerSpan],
    params: Cow<'a, [T]>,
    inv_scale: f64,
}

impl<T: Scalar> Net<'_, T> {
    fn weights(&self, l: usize) -> ArrayView2<'_, T> {
        let s = self.layers[l];
        ArrayView2::from_shape((s.fan_in, s.fan_out), &self.params[s.offset..s.weights_end()])
            .expect("layer layout")
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, T> {
        let s = self.layers[l];
        ArrayView1::from(&self.params[s.weights_end()..s.end()])
    }

    fn input_batch(&self, xy: impl ExactSizeIterator<Item = [f64; 2]>) -> Array2<T> {
        let mut x = Array2::zeros((xy.len(), 2));
        for (mut row, p) in x.rows_mut().into_iter().zip(xy) {
            row[0] = T::from_f64(p[0] * self.inv_scale);
            row[1] = T::from_f64(p[1] * self.inv_scale);
        }
        x
    }

    fn forward(&self, input: Array2<T>) -> Vec<f64> {
        let hidden = self.layers.len() - 1;
        let mut h = input;
        for l in 0..hidden {
            let mut z = h.dot(&self.weights(l));
            z += &self.bias(l);
            z.mapv_inplace(|v| v * sigmoid_t(v));
            h = z;
        }
        let mut out = h.dot(&self.weights(hidden));
        out += &self.bias(hidden);
        out.iter().map(|v| v.widen()).collect()
    }

    /// Runs forward and backward over one chunk of points.
    ///
    /// `upstream` maps `(z_i, g_i)` to `(loss_i, dloss_i/dg_i)`. Returns the summed loss
    /// and the summed gradient over the chunk.
    pub(crate) fn chunk_loss_grad<F>(&self, pts: &[[f64; 3]], upstream: F) -> (f64, Vec<f64>)
    where
        F: Fn(f64, f64) -> (f64, f64),
    {
        let hidden = self.layers.len() - 1;
        // activations feeding each layer, plus per hidden layer z and sigmoid(z)
        let mut acts = Vec::with_capacity(hidden + 1);
        let mut pre = Vec::with_capacity(hidden);
        let mut sig = Vec::with_capacity(hidden);
        acts.push(self.input_batch(pts.iter().map(|p| [p[0], p[1]])));
        for l in 0..hidden {
            let mut z = acts[l].dot(&self.weights(l));
            z += &self.bias(l);
            let s = z.mapv(sigmoid_t);
            acts.push(&z * &s);
            pre.push(z);
            sig.push(s);
        }
        let mut out = acts[hidden].dot(&self.weights(hidden));
        out += &self.bias(hidden);

        let mut loss = 0.0;
        let mut delta = Array2::zeros((pts.len(), 1));
        for (i, p) in pts.iter().enumerate() {
            let (l, d) = upstream(p[2], out[[i, 0]].widen());
            loss += l;
            delta[[i, 0]] = T::from_f64(d);
        }

        let mut grad = vec![T::zero(); self.params.len()];
        for l in (0..self.layers.len()).rev() {
            let span = self.layers[l];
            let (gw, gb) = grad[span.offset..span.end()].split_at_mut(span.fan_in * span.fan_out);
            let mut gw = ArrayViewMut2::from_shape((span.fan_in, span.fan_out), gw)
                .expect("layer layout");
            general_mat_mul(T::one(), &acts[l].t(), &delta, T::zero(), &mut gw);
            ArrayViewMut1::from(gb).assign(&delta.sum_axis(Axis(0)));
            if l == 0 {
                break;
            }
            let mut dh = delta.dot(&self.weights(l).t());
            // silu'(z) = s (1 + z (1 - s))
            Zip::from(&mut dh)
                .and(&pre[l - 1])
                .and(&sig[l - 1])
                .for_each(|d, &z, &s| *d = *d * s * (T::one() + z * (T::one() - s)));
            delta = dh;
        }
        (loss, grad.into_iter().map(|g| g.widen()).collect())
    }
}

#[inline]
fn sigmoid_t<T: Float>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
