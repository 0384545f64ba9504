//! A small dense feed-forward network: affine layers with a shared hidden
//! activation, exact backpropagation, Adam and a finite-difference gradient
//! checker.
//!
//! Parameters live in one flat buffer, layer-major: for each layer the weight
//! matrix `W_l` (`d_l x d_{l-1}`, row-major) followed by the bias `b_l`.
//! Gradients use the same layout, so optimizers operate on plain slices.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const NN_MAGIC: &[u8; 6] = b"SPPNN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    /// No nonlinearity; used for linear networks in tests and checks.
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative in terms of the pre-activation `z` and output `a`.
    /// `relu'(0) = 0`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

/// Row-major dense matrix; one row per batch item.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} != {rows} x {cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSpan {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    spans: Vec<LayerSpan>,
    /// Changes whenever parameters may have changed; ties caches to the
    /// parameter values they were computed with.
    stamp: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.activation == other.activation && self.params == other.params
    }
}

fn layout(dims: &[usize]) -> Result<(Vec<LayerSpan>, usize)> {
    if dims.len() < 2 {
        return Err(Error::invalid("a network needs at least an input and an output width"));
    }
    if dims.contains(&0) {
        return Err(Error::invalid(format!("layer widths must be positive: {dims:?}")));
    }
    let mut spans = Vec::with_capacity(dims.len() - 1);
    let mut off = 0;
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        spans.push(LayerSpan {
            fan_in,
            fan_out,
            weight: off,
            bias: off + fan_in * fan_out,
        });
        off += fan_out * (fan_in + 1);
    }
    Ok((spans, off))
}

/// `sum_l d_l (d_{l-1} + 1)`.
pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

/// Activations recorded by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stamp: u64,
    /// `inputs[l]` is the input of layer `l`; the last entry is the output.
    inputs: Vec<Matrix>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.inputs.last().expect("cache holds at least the input")
    }
}

/// Gradient buffer aligned with [`Mlp::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub data: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights `U(-s, s)`, `s = sqrt(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn new(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let (spans, total) = layout(dims)?;
        let mut params = vec![0.0; total];
        let mut r = rng::seeded(seed);
        for s in &spans {
            let bound = (6.0 / (s.fan_in + s.fan_out) as f64).sqrt();
            for w in &mut params[s.weight..s.bias] {
                *w = r.random_range(-bound..bound);
            }
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            activation,
            params,
            spans,
            stamp: fresh_stamp(),
        })
    }

    pub fn from_params(dims: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let (spans, total) = layout(dims)?;
        if params.len() != total {
            return Err(Error::invalid(format!(
                "expected {total} parameters for dims {dims:?}, got {}",
                params.len()
            )));
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            activation,
            params,
            spans,
            stamp: fresh_stamp(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("dims validated")
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access to the parameters; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.stamp = fresh_stamp();
        &mut self.params
    }

    pub fn layers(&self) -> usize {
        self.spans.len()
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        let s = self.spans[layer];
        &self.params[s.weight..s.bias]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let s = self.spans[layer];
        &self.params[s.bias..s.bias + s.fan_out]
    }

    pub fn set_layer(&mut self, layer: usize, weight: &[f64], bias: &[f64]) -> Result<()> {
        let s = self.spans[layer];
        if weight.len() != s.fan_in * s.fan_out || bias.len() != s.fan_out {
            return Err(Error::invalid(format!("layer {layer} shape mismatch")));
        }
        let p = self.params_mut();
        p[s.weight..s.bias].copy_from_slice(weight);
        p[s.bias..s.bias + s.fan_out].copy_from_slice(bias);
        Ok(())
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            data: vec![0.0; self.params.len()],
        }
    }

    fn affine(&self, s: LayerSpan, input: &Matrix) -> Matrix {
        let w = &self.params[s.weight..s.bias];
        let b = &self.params[s.bias..s.bias + s.fan_out];
        // transpose once so the inner loop is a contiguous axpy
        let mut wt = vec![0.0; w.len()];
        for o in 0..s.fan_out {
            for i in 0..s.fan_in {
                wt[i * s.fan_out + o] = w[o * s.fan_in + i];
            }
        }
        let mut out = Matrix::zeros(input.rows, s.fan_out);
        for r in 0..input.rows {
            let x = input.row(r);
            let z = out.row_mut(r);
            z.copy_from_slice(b);
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let wrow = &wt[i * s.fan_out..(i + 1) * s.fan_out];
                for (zo, wo) in z.iter_mut().zip(wrow) {
                    *zo += xi * wo;
                }
            }
        }
        out
    }

    /// Evaluates a batch (one row per item) and records the cache needed by
    /// [`Mlp::backward`].
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.cols != self.input_dim() {
            return Err(Error::invalid(format!(
                "input width {} != network input {}",
                x.cols,
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.spans.len() + 1);
        let mut pre = Vec::with_capacity(self.spans.len().saturating_sub(1));
        inputs.push(x.clone());
        let last = self.spans.len() - 1;
        for (l, &s) in self.spans.iter().enumerate() {
            let z = self.affine(s, inputs.last().expect("nonempty"));
            if l < last {
                let mut a = z.clone();
                for v in a.as_mut_slice() {
                    *v = self.activation.apply(*v);
                }
                pre.push(z);
                inputs.push(a);
            } else {
                inputs.push(z);
            }
        }
        let out = inputs.last().expect("nonempty").clone();
        Ok((
            out,
            ForwardCache {
                stamp: self.stamp,
                inputs,
                pre,
            },
        ))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols != self.input_dim() {
            return Err(Error::invalid(format!(
                "input width {} != network input {}",
                x.cols,
                self.input_dim()
            )));
        }
        let last = self.spans.len() - 1;
        let mut a = x.clone();
        for (l, &s) in self.spans.iter().enumerate() {
            a = self.affine(s, &a);
            if l < last {
                for v in a.as_mut_slice() {
                    *v = self.activation.apply(*v);
                }
            }
        }
        Ok(a)
    }

    /// Backpropagates `d loss / d output` through the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Matrix) -> Result<Gradients> {
        if cache.stamp != self.stamp {
            return Err(Error::InvalidState(
                "forward cache was computed with different parameters".into(),
            ));
        }
        let batch = cache.inputs[0].rows;
        if d_out.rows != batch || d_out.cols != self.output_dim() {
            return Err(Error::invalid(format!(
                "output gradient is {}x{}, expected {batch}x{}",
                d_out.rows,
                d_out.cols,
                self.output_dim()
            )));
        }
        let mut grads = self.zero_gradients();
        let mut delta = d_out.clone();
        for l in (0..self.spans.len()).rev() {
            let s = self.spans[l];
            let input = &cache.inputs[l];
            {
                let (gw, gb) = grads.data[s.weight..s.bias + s.fan_out].split_at_mut(s.fan_in * s.fan_out);
                for r in 0..batch {
                    let d = delta.row(r);
                    let a = input.row(r);
                    for (o, &dv) in d.iter().enumerate() {
                        if dv == 0.0 {
                            continue;
                        }
                        gb[o] += dv;
                        let row = &mut gw[o * s.fan_in..(o + 1) * s.fan_in];
                        for (g, &ai) in row.iter_mut().zip(a) {
                            *g += dv * ai;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[s.weight..s.bias];
            let mut prev = Matrix::zeros(batch, s.fan_in);
            for r in 0..batch {
                let d = delta.row(r);
                let p = prev.row_mut(r);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    for (pi, &wi) in p.iter_mut().zip(&w[o * s.fan_in..(o + 1) * s.fan_in]) {
                        *pi += dv * wi;
                    }
                }
            }
            let z = &cache.pre[l - 1];
            let a = &cache.inputs[l];
            for ((p, &zv), &av) in prev.data.iter_mut().zip(&z.data).zip(&a.data) {
                *p *= self.activation.derivative(zv, av);
            }
            delta = prev;
        }
        Ok(grads)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(NN_MAGIC)?;
        out.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        out.write_all(&[self.activation.tag()])?;
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a network written by [`Mlp::write_to`]. `offset` is the byte
    /// position of the reader within its file, used in error messages.
    pub fn read_from<R: Read>(input: &mut R, offset: u64) -> Result<(Self, u64)> {
        let mut reader = CountingReader { inner: input, pos: offset };
        let mut magic = [0u8; 6];
        reader.exact(&mut magic, "network magic")?;
        if &magic != NN_MAGIC {
            return Err(Error::format(offset, "bad network magic"));
        }
        let n = reader.u32("dims count")? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::format(reader.pos - 4, format!("implausible layer count {n}")));
        }
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            dims.push(reader.u32("layer width")? as usize);
        }
        let mut tag = [0u8; 1];
        reader.exact(&mut tag, "activation tag")?;
        let activation = Activation::from_tag(tag[0])
            .ok_or_else(|| Error::format(reader.pos - 1, format!("unknown activation tag {}", tag[0])))?;
        let (_, total) = layout(&dims).map_err(|e| Error::format(reader.pos, e.to_string()))?;
        let mut params = Vec::with_capacity(total);
        for _ in 0..total {
            params.push(reader.f64("parameters")?);
        }
        let end = reader.pos;
        Ok((Mlp::from_params(&dims, activation, params)?, end))
    }
}

pub(crate) struct CountingReader<'a, R: Read> {
    pub(crate) inner: &'a mut R,
    pub(crate) pos: u64,
}

impl<R: Read> CountingReader<'_, R> {
    pub(crate) fn exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(self.pos, format!("truncated input while reading {what}"))
            } else {
                Error::Io(e)
            }
        })?;
        self.pos += buf.len() as u64;
        Ok(())
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.exact(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "Adam state holds {} entries, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }
}

pub fn adam_step(mlp: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    state.step(mlp.params_mut(), &grads.data)
}

/// Finite-difference step used when none is given.
pub const DEFAULT_FD_STEP: f64 = 1e-6;
/// Gradients smaller than this are compared in absolute rather than relative
/// terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;
/// Parameters sampled by [`grad_check`].
pub const GRAD_CHECK_SAMPLES: usize = 64;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_CHECK_FLOOR)
}

/// Picks `GRAD_CHECK_SAMPLES` distinct parameter indices (all of them if the
/// network is smaller).
pub fn sample_indices(total: usize, seed: u64) -> Vec<usize> {
    if total <= GRAD_CHECK_SAMPLES {
        return (0..total).collect();
    }
    rand::seq::index::sample(&mut rng::seeded(seed), total, GRAD_CHECK_SAMPLES).into_vec()
}

/// Compares backprop against central differences of `L = 1/2 sum y^2` and
/// returns the largest relative error over a random parameter subset.
pub fn grad_check(mlp: &Mlp, x: &Matrix, fd_step: f64) -> Result<f64> {
    let loss = |net: &Mlp| -> Result<f64> {
        Ok(0.5 * net.predict(x)?.as_slice().iter().map(|v| v * v).sum::<f64>())
    };
    let (y, cache) = mlp.forward(x)?;
    let grads = mlp.backward(&cache, &y)?;
    let mut probe = mlp.clone();
    let mut worst = 0.0f64;
    for i in sample_indices(mlp.num_params(), 0x9d) {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + fd_step;
        let up = loss(&probe)?;
        probe.params_mut()[i] = orig - fd_step;
        let down = loss(&probe)?;
        probe.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * fd_step);
        worst = worst.max(relative_error(grads.data[i], fd));
    }
    Ok(worst)
}

/// Width-3 ReLU network of the nodal hat function centred at `x_n`:
/// `relu(x - x_prev)/a - (1/a + 1/b) relu(x - x_n) + relu(x - x_next)/b`
/// with `a = x_n - x_prev`, `b = x_next - x_n`.
pub fn hat_relu_net(x_prev: f64, x_n: f64, x_next: f64) -> Result<Mlp> {
    if !(x_prev < x_n && x_n < x_next) {
        return Err(Error::invalid(format!(
            "hat knots must increase: {x_prev}, {x_n}, {x_next}"
        )));
    }
    let a = x_n - x_prev;
    let b = x_next - x_n;
    let mut net = Mlp::from_params(&[1, 3, 1], Activation::Relu, vec![0.0; param_count(&[1, 3, 1])])?;
    net.set_layer(0, &[1.0, 1.0, 1.0], &[-x_prev, -x_n, -x_next])?;
    net.set_layer(1, &[1.0 / a, -(1.0 / a + 1.0 / b), 1.0 / b], &[0.0])?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(xs: &[f64]) -> Matrix {
        Matrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let a = Mlp::new(&[2, 3, 1], Activation::Tanh, 5).unwrap();
        let b = Mlp::new(&[2, 3, 1], Activation::Tanh, 5).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.num_params(), 13);
        assert!(a.bias(0).iter().chain(a.bias(1)).all(|&v| v == 0.0));
        let s = (6.0f64 / 5.0).sqrt();
        assert!(a.weight(0).iter().all(|w| w.abs() <= s));
        assert!(Mlp::new(&[3], Activation::Tanh, 0).is_err());
        assert!(Mlp::new(&[], Activation::Tanh, 0).is_err());
    }

    #[test]
    fn forward_examples() {
        let zero = Mlp::from_params(&[3, 4, 2], Activation::Tanh, vec![0.0; param_count(&[3, 4, 2])]).unwrap();
        let y = zero.predict(&Matrix::from_rows(&[vec![1.0, -2.0, 3.0]]).unwrap()).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));

        let mut id = Mlp::from_params(&[2, 2], Activation::Relu, vec![0.0; 6]).unwrap();
        id.set_layer(0, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]).unwrap();
        let x = Matrix::from_rows(&[vec![-1.5, 2.0]]).unwrap();
        assert_eq!(id.predict(&x).unwrap(), x);

        let mut one = Mlp::from_params(&[1, 1, 1], Activation::Relu, vec![0.0; 4]).unwrap();
        one.set_layer(0, &[1.0], &[-0.5]).unwrap();
        one.set_layer(1, &[2.0], &[0.0]).unwrap();
        assert!((one.predict(&column(&[1.0])).unwrap().as_slice()[0] - 1.0).abs() < 1e-15);

        assert!(one.forward(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = Mlp::new(&[3, 5, 2], Activation::Tanh, 1).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![-1.0, 0.5, 2.0]]).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = Mlp::new(&[2, 3, 1], Activation::Tanh, 1).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2]]).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        net.params_mut()[0] += 1.0;
        assert!(matches!(
            net.backward(&cache, &Matrix::zeros(1, 1)),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn linear_network_gradient_is_outer_product() {
        let net = Mlp::new(&[3, 2], Activation::Identity, 4).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        let dy = Matrix::from_rows(&[vec![0.3, -1.1]]).unwrap();
        let g = net.backward(&cache, &dy).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert!((g.data[o * 3 + i] - dy.row(0)[o] * x.row(0)[i]).abs() < 1e-15);
            }
            assert_eq!(g.data[6 + o], dy.row(0)[o]);
        }
    }

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn gradient_check_tanh_and_linear() {
        let net = Mlp::new(&[4, 8, 8, 1], Activation::Tanh, 3).unwrap();
        let err = grad_check(&net, &random_batch(6, 4, 1), DEFAULT_FD_STEP).unwrap();
        assert!(err < 1e-5, "{err}");

        let lin = Mlp::new(&[3, 4, 2], Activation::Identity, 3).unwrap();
        let err = grad_check(&lin, &random_batch(5, 3, 2), DEFAULT_FD_STEP).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn adam_zero_gradient_and_first_step() {
        let mut net = Mlp::new(&[2, 2], Activation::Identity, 1).unwrap();
        let before = net.params().to_vec();
        let mut st = AdamState::new(net.num_params(), AdamConfig::default());
        let zero = net.zero_gradients();
        adam_step(&mut net, &zero, &mut st).unwrap();
        assert_eq!(net.params(), &before[..]);
        assert_eq!(st.steps(), 1);

        let mut net = Mlp::new(&[2, 2], Activation::Identity, 1).unwrap();
        let before = net.params().to_vec();
        let g = Gradients {
            data: vec![0.5, -2.0, 1e-3, 3.0, -0.25, 1.0],
        };
        let mut st = AdamState::new(6, AdamConfig::default());
        adam_step(&mut net, &g, &mut st).unwrap();
        for ((p, b), gv) in net.params().iter().zip(&before).zip(&g.data) {
            let expect = -1e-3 * gv / (gv.abs() + 1e-8);
            assert!((p - b - expect).abs() < 1e-15);
        }
        assert!(adam_step(&mut net, &Gradients { data: vec![0.0; 3] }, &mut st).is_err());
    }

    #[test]
    fn hat_net_examples() {
        let net = hat_relu_net(0.2, 0.5, 0.6).unwrap();
        let y = net.predict(&column(&[0.5, 0.2, 0.6, 0.0, 1.0])).unwrap();
        let y = y.as_slice();
        assert!((y[0] - 1.0).abs() < 1e-12);
        for v in &y[1..] {
            assert!(v.abs() < 1e-12);
        }
        assert!(hat_relu_net(0.5, 0.5, 0.6).is_err());
    }

    #[test]
    fn relu_net_is_positively_homogeneous_without_bias() {
        let net = Mlp::new(&[3, 6, 6, 2], Activation::Relu, 8).unwrap();
        let x = random_batch(4, 3, 9);
        let mut x2 = x.clone();
        for v in x2.as_mut_slice() {
            *v *= 2.0;
        }
        let y = net.predict(&x).unwrap();
        let y2 = net.predict(&x2).unwrap();
        for (a, b) in y.as_slice().iter().zip(y2.as_slice()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn serialization_round_trip() {
        let net = Mlp::new(&[3, 5, 2], Activation::Relu, 2).unwrap();
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 6 + 4 + 3 * 4 + 1 + 8 * net.num_params());
        let (back, end) = Mlp::read_from(&mut buf.as_slice(), 0).unwrap();
        assert_eq!(back, net);
        assert_eq!(end as usize, buf.len());

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Mlp::read_from(&mut bad.as_slice(), 0), Err(Error::Format { offset: 0, .. })));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(Mlp::read_from(&mut &short[..], 0), Err(Error::Format { .. })));
    }
}
