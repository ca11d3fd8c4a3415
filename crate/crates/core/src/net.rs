//! Minimal multilayer perceptron with reverse-mode gradients, an Adam
//! optimizer and a binary checkpoint container.
//!
//! Parameters live in one flat vector, layer by layer: the row-major
//! `fan_in x fan_out` weight matrix followed by the bias. Gradients and
//! optimizer moments use the same layout.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Swish,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Tanh, Activation::Relu, Activation::Swish];

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Swish => z * sigmoid(z),
        }
    }

    /// Derivative at pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Swish => {
                let s = sigmoid(z);
                s + z * s * (1.0 - s)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Swish => "swish",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "swish" => Ok(Activation::Swish),
            other => Err(Error::Parse(format!("unknown activation '{other}'"))),
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Intermediate values kept by [`Mlp::forward_cached`] for the backward
/// pass: the input of every layer and the hidden pre-activations.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// All-zero network. `sizes` lists input, hidden and output widths.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            params: vec![0.0; n],
        })
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, zero biases.
    pub fn new(sizes: &[usize], activation: Activation, stream: &RngStream) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        let mut rng = stream.rng();
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for p in &mut net.params[off..off + w[0] * w[1]] {
                *p = rng.random_range(-bound..bound);
            }
            off += w[0] * w[1] + w[1];
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        check_dim("parameter vector", net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let off: usize = self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let w = ArrayView2::from_shape((i, o), &self.params[off..off + i * o]).unwrap();
        let b = ArrayView1::from(&self.params[off + i * o..off + i * o + o]);
        (w, b)
    }

    fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.input_dim(), x.len())?;
        let xb = ArrayView2::from_shape((1, x.len()), x).unwrap();
        Ok(self.forward_batch(xb).into_raw_vec_and_offset().0)
    }

    /// Forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.input_dim(), "network input width");
        let mut h = x.to_owned();
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            let mut z = h.dot(&w);
            z += &b;
            if l + 1 < self.num_layers() {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            h = z;
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, ForwardCache) {
        assert_eq!(x.ncols(), self.input_dim(), "network input width");
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.num_layers()),
            pre: Vec::with_capacity(self.num_layers()),
        };
        let mut h = x.to_owned();
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            let mut z = h.dot(&w);
            z += &b;
            cache.inputs.push(h);
            if l + 1 < self.num_layers() {
                let act = self.activation;
                let a = z.mapv(|v| act.apply(v));
                cache.pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }
        (h, cache)
    }

    /// Back-propagates `d_out` (gradient of a scalar loss with respect to
    /// the network outputs). Returns the flat parameter gradient and the
    /// gradient with respect to the inputs.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_out.to_owned();
        let mut offsets = Vec::with_capacity(self.num_layers());
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for l in (0..self.num_layers()).rev() {
            if l + 1 < self.num_layers() {
                let act = self.activation;
                delta.zip_mut_with(&cache.pre[l], |d, &z| *d *= act.derivative(z));
            }
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let dw = cache.inputs[l].t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            let g = &mut grad[offsets[l]..offsets[l] + i * o + o];
            for (dst, v) in g[..i * o].iter_mut().zip(dw.iter()) {
                *dst = *v;
            }
            for (dst, v) in g[i * o..].iter_mut().zip(db.iter()) {
                *dst = *v;
            }
            let (w, _) = self.layer(l);
            delta = delta.dot(&w.t());
        }
        (grad, delta)
    }

    /// Loss and exact parameter gradient for a loss defined on the outputs.
    /// `loss_fn` maps the output batch to `(loss, dloss/doutput)`.
    pub fn grad<F>(&self, x: ArrayView2<'_, f64>, loss_fn: F) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(&Array2<f64>) -> (f64, Array2<f64>),
    {
        let (out, cache) = self.forward_cached(x);
        let (loss, d_out) = loss_fn(&out);
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss {loss} on a batch of {} rows",
                x.nrows()
            )));
        }
        let (g, _) = self.backward(&cache, d_out.view());
        Ok((loss, g))
    }

    /// Serializes to the self-describing checkpoint format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ContainerWriter::new(MLP_MAGIC);
        w.str(self.activation.name());
        w.usizes(&self.sizes);
        w.f64s(&self.params);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ContainerReader::new(bytes, MLP_MAGIC)?;
        let act: Activation = r.str()?.parse()?;
        let sizes = r.usizes()?;
        let params = r.f64s()?;
        r.end()?;
        Self::from_params(&sizes, act, params)
    }
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        check_dim("optimizer parameters", self.m.len(), params.len())?;
        check_dim("optimizer gradient", self.m.len(), grad.len())?;
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i] + self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Output heads and their losses.
pub mod loss {
    use super::*;

    /// Mean over rows of the mean squared error across output columns.
    pub fn mse(pred: &Array2<f64>, target: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
        let n = (pred.nrows() * pred.ncols()) as f64;
        let diff = pred - &target;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
        (loss, diff * (2.0 / n))
    }

    /// Soft bounds on a predicted log-variance. The bounds themselves are
    /// trainable parameters.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct LogVarBounds {
        pub max: Vec<f64>,
        pub min: Vec<f64>,
    }

    impl LogVarBounds {
        pub fn new(dim: usize, min: f64, max: f64) -> Self {
            Self {
                max: vec![max; dim],
                min: vec![min; dim],
            }
        }

        /// `max - softplus(max - raw)`, then `min + softplus(. - min)`.
        pub fn apply(&self, d: usize, raw: f64) -> f64 {
            let u = self.max[d] - softplus(self.max[d] - raw);
            self.min[d] + softplus(u - self.min[d])
        }

        /// Bounded value and its partials with respect to
        /// `(raw, max[d], min[d])`.
        pub fn apply_with_grad(&self, d: usize, raw: f64) -> (f64, f64, f64, f64) {
            let (mx, mn) = (self.max[d], self.min[d]);
            let s1 = sigmoid(mx - raw);
            let u = mx - softplus(mx - raw);
            let s2 = sigmoid(u - mn);
            let lv = mn + softplus(u - mn);
            // du/draw = s1, du/dmx = 1 - s1; dlv/du = s2, dlv/dmn = 1 - s2
            (lv, s2 * s1, s2 * (1.0 - s1), 1.0 - s2)
        }
    }

    /// Weight of the penalty that keeps the learned bounds tight.
    pub const BOUND_PENALTY: f64 = 0.01;

    /// Gaussian negative log-likelihood (up to constants) of `target` under
    /// a diagonal Gaussian head. `out` holds `d` mean columns followed by
    /// `d` raw log-variance columns. Returns the loss, its gradient with
    /// respect to `out`, and the gradients for `bounds.max` / `bounds.min`.
    pub fn gaussian_nll(
        out: &Array2<f64>,
        target: ArrayView2<'_, f64>,
        bounds: &LogVarBounds,
    ) -> (f64, Array2<f64>, Vec<f64>, Vec<f64>) {
        let d = target.ncols();
        assert_eq!(out.ncols(), 2 * d, "gaussian head width");
        let rows = out.nrows();
        let n = (rows * d) as f64;
        let mut grad = Array2::zeros(out.raw_dim());
        let mut g_max = vec![0.0; d];
        let mut g_min = vec![0.0; d];
        let mut loss = 0.0;
        for r in 0..rows {
            for j in 0..d {
                let mu = out[[r, j]];
                let (lv, dlv_raw, dlv_max, dlv_min) = bounds.apply_with_grad(j, out[[r, d + j]]);
                let inv_var = (-lv).exp();
                let err = mu - target[[r, j]];
                loss += err * err * inv_var + lv;
                grad[[r, j]] = 2.0 * err * inv_var / n;
                let dl_dlv = (1.0 - err * err * inv_var) / n;
                grad[[r, d + j]] = dl_dlv * dlv_raw;
                g_max[j] += dl_dlv * dlv_max;
                g_min[j] += dl_dlv * dlv_min;
            }
        }
        loss /= n;
        let bmax: f64 = bounds.max.iter().sum();
        let bmin: f64 = bounds.min.iter().sum();
        loss += BOUND_PENALTY * (bmax - bmin);
        for j in 0..d {
            g_max[j] += BOUND_PENALTY;
            g_min[j] -= BOUND_PENALTY;
        }
        (loss, grad, g_max, g_min)
    }

    /// Splits a Gaussian head output into means and bounded log-variances.
    pub fn split_gaussian(out: &Array2<f64>, bounds: &LogVarBounds) -> (Array2<f64>, Array2<f64>) {
        let d = out.ncols() / 2;
        let mean = out.slice(s![.., ..d]).to_owned();
        let mut logvar = out.slice(s![.., d..]).to_owned();
        for mut row in logvar.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = bounds.apply(j, *v);
            }
        }
        (mean, logvar)
    }
}

const MLP_MAGIC: &[u8; 8] = b"MLPCKPT1";

/// Length-prefixed little-endian binary writer used by the checkpoint
/// formats.
#[derive(Debug)]
pub struct ContainerWriter {
    buf: Vec<u8>,
}

impl ContainerWriter {
    pub fn new(magic: &[u8; 8]) -> Self {
        Self { buf: magic.to_vec() }
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn usizes(&mut self, v: &[usize]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.u64(x as u64);
        }
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct ContainerReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ContainerReader<'a> {
    pub fn new(buf: &'a [u8], magic: &[u8; 8]) -> Result<Self> {
        if buf.len() < 8 || &buf[..8] != magic {
            return Err(Error::Parse(format!(
                "bad checkpoint magic (expected {})",
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(Self { buf, pos: 8 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse("truncated checkpoint".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()? as usize;
        if n > self.buf.len() {
            return Err(Error::Parse("corrupt length in checkpoint".into()));
        }
        Ok(n)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len()?;
        (0..n).map(|_| self.u64().map(|v| v as usize)).collect()
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n)
            .map(|_| Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap())))
            .collect()
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len()?;
        self.take(n)
    }

    pub fn end(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Parse("trailing bytes in checkpoint".into()));
        }
        Ok(())
    }
}

/// Row-stacks single-sample vectors into a batch.
pub fn stack_rows(rows: &[Vec<f64>]) -> Array2<f64> {
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).expect("rows of equal length")
}

/// Column means of a batch.
pub fn column_means(x: &Array2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()))
}
