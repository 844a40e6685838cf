//! Small differentiable building blocks with hand-written backward passes:
//! zero-padded 1-D convolution, batch normalisation, dense layers,
//! ReLU / tanh, MSE loss and Adam. Everything runs in `f64`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Batch of 1-D feature maps, layout `[batch][channel][position]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub batch: usize,
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self {
            batch,
            channels,
            len,
            data: vec![0.0; batch * channels * len],
        }
    }

    pub fn from_vec(batch: usize, channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * channels * len {
            return Err(Error::Shape(format!(
                "tensor data has {} values, shape {batch}x{channels}x{len}",
                data.len()
            )));
        }
        Ok(Self {
            batch,
            channels,
            len,
            data,
        })
    }

    /// Stack single-channel rows into a `[batch][1][len]` tensor.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let len = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::Shape("rows differ in length".into()));
        }
        Self::from_vec(rows.len(), 1, len, rows.concat())
    }

    #[inline]
    pub fn idx(&self, b: usize, c: usize, i: usize) -> usize {
        (b * self.channels + c) * self.len + i
    }

    pub fn row(&self, b: usize, c: usize) -> &[f64] {
        let s = self.idx(b, c, 0);
        &self.data[s..s + self.len]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.batch == other.batch && self.channels == other.channels && self.len == other.len
    }
}

/// 1-D cross-correlation with zero padding that keeps the length.
///
/// Odd widths pad symmetrically; even widths put the extra zero on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    /// Layout `[out][in][tap]`.
    pub weight: Vec<f64>,
}

impl Conv1d {
    pub fn zeros(in_channels: usize, out_channels: usize, width: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            width,
            weight: vec![0.0; in_channels * out_channels * width],
        }
    }

    /// He-uniform initialisation.
    pub fn init(in_channels: usize, out_channels: usize, width: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (in_channels * width) as f64).sqrt();
        let mut c = Self::zeros(in_channels, out_channels, width);
        c.weight.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        c
    }

    pub fn left_pad(&self) -> usize {
        (self.width - 1) / 2
    }

    #[inline]
    fn w(&self, o: usize, i: usize, t: usize) -> f64 {
        self.weight[(o * self.in_channels + i) * self.width + t]
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, x.channels
            )));
        }
        if self.weight.len() != self.in_channels * self.out_channels * self.width || self.width == 0 {
            return Err(Error::Shape("conv kernel size mismatch".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let n = x.len;
        let pad = self.left_pad() as isize;
        let mut y = Tensor::zeros(x.batch, self.out_channels, n);
        for b in 0..x.batch {
            for o in 0..self.out_channels {
                let yo = y.idx(b, o, 0);
                for i in 0..self.in_channels {
                    let xi = x.row(b, i);
                    for t in 0..self.width {
                        let w = self.w(o, i, t);
                        let shift = t as isize - pad;
                        let lo = (-shift).max(0) as usize;
                        let hi = ((n as isize) - shift).min(n as isize).max(0) as usize;
                        for j in lo..hi {
                            y.data[yo + j] += w * xi[(j as isize + shift) as usize];
                        }
                    }
                }
            }
        }
        Ok(y)
    }

    /// Returns `(dL/dx, dL/dweight)`.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        self.check(x)?;
        if grad_out.batch != x.batch || grad_out.channels != self.out_channels || grad_out.len != x.len {
            return Err(Error::Shape("conv upstream gradient shape mismatch".into()));
        }
        let n = x.len;
        let pad = self.left_pad() as isize;
        let mut gx = Tensor::zeros(x.batch, self.in_channels, n);
        let mut gw = vec![0.0; self.weight.len()];
        for b in 0..x.batch {
            for o in 0..self.out_channels {
                let go = grad_out.row(b, o);
                for i in 0..self.in_channels {
                    let xi = x.row(b, i);
                    let gxi = gx.idx(b, i, 0);
                    for t in 0..self.width {
                        let widx = (o * self.in_channels + i) * self.width + t;
                        let w = self.weight[widx];
                        let shift = t as isize - pad;
                        let lo = (-shift).max(0) as usize;
                        let hi = ((n as isize) - shift).min(n as isize).max(0) as usize;
                        let mut acc = 0.0;
                        for j in lo..hi {
                            let src = (j as isize + shift) as usize;
                            acc += go[j] * xi[src];
                            gx.data[gxi + src] += go[j] * w;
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
        Ok((gx, gw))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Batch normalisation over `(batch, position)` per channel, learnable scale
/// and shift. Running statistics live in one or more slots so a layer that is
/// reused at several unrolled stages can keep separate inference statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm1d {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running: Vec<RunningStats>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

impl BatchNorm1d {
    pub const EPS: f64 = 1e-5;
    pub const MOMENTUM: f64 = 0.9;

    pub fn new(channels: usize, slots: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running: vec![
                RunningStats {
                    mean: vec![0.0; channels],
                    var: vec![1.0; channels],
                };
                slots.max(1)
            ],
            eps: Self::EPS,
            momentum: Self::MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor, slot: usize) -> Result<()> {
        if x.channels != self.channels() {
            return Err(Error::Shape(format!(
                "batchnorm expects {} channels, got {}",
                self.channels(),
                x.channels
            )));
        }
        if slot >= self.running.len() {
            return Err(Error::Shape(format!("batchnorm slot {slot} out of range")));
        }
        Ok(())
    }

    /// Training-mode forward with batch statistics; updates `running[slot]`.
    pub fn forward_train(&mut self, x: &Tensor, slot: usize) -> Result<(Tensor, BnCache)> {
        self.check(x, slot)?;
        let count = (x.batch * x.len) as f64;
        let mut y = Tensor::zeros(x.batch, x.channels, x.len);
        let mut x_hat = Tensor::zeros(x.batch, x.channels, x.len);
        let mut inv_std = vec![0.0; x.channels];
        for c in 0..x.channels {
            let mut mean = 0.0;
            for b in 0..x.batch {
                mean += x.row(b, c).iter().sum::<f64>();
            }
            mean /= count;
            let mut var = 0.0;
            for b in 0..x.batch {
                var += x.row(b, c).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            }
            var /= count;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[c] = istd;
            for b in 0..x.batch {
                let s = x.idx(b, c, 0);
                for i in 0..x.len {
                    let xh = (x.data[s + i] - mean) * istd;
                    x_hat.data[s + i] = xh;
                    y.data[s + i] = self.gamma[c] * xh + self.beta[c];
                }
            }
            let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
            let r = &mut self.running[slot];
            r.mean[c] = self.momentum * r.mean[c] + (1.0 - self.momentum) * mean;
            r.var[c] = self.momentum * r.var[c] + (1.0 - self.momentum) * unbiased;
        }
        Ok((y, BnCache { x_hat, inv_std }))
    }

    /// Inference-mode forward using the running statistics of `slot`.
    pub fn forward_eval(&self, x: &Tensor, slot: usize) -> Result<Tensor> {
        self.check(x, slot)?;
        let r = &self.running[slot];
        let mut y = x.clone();
        for b in 0..x.batch {
            for c in 0..x.channels {
                let istd = 1.0 / (r.var[c] + self.eps).sqrt();
                let s = x.idx(b, c, 0);
                for v in &mut y.data[s..s + x.len] {
                    *v = self.gamma[c] * (*v - r.mean[c]) * istd + self.beta[c];
                }
            }
        }
        Ok(y)
    }

    /// Returns `(dL/dx, dL/dgamma, dL/dbeta)` for a training-mode forward.
    pub fn backward(&self, cache: &BnCache, grad_out: &Tensor) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
        if !grad_out.same_shape(&cache.x_hat) {
            return Err(Error::Shape("batchnorm upstream gradient shape mismatch".into()));
        }
        let xh = &cache.x_hat;
        let count = (xh.batch * xh.len) as f64;
        let mut gx = Tensor::zeros(xh.batch, xh.channels, xh.len);
        let mut g_gamma = vec![0.0; xh.channels];
        let mut g_beta = vec![0.0; xh.channels];
        for c in 0..xh.channels {
            let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
            for b in 0..xh.batch {
                let s = xh.idx(b, c, 0);
                for i in 0..xh.len {
                    sum_dy += grad_out.data[s + i];
                    sum_dy_xh += grad_out.data[s + i] * xh.data[s + i];
                }
            }
            g_gamma[c] = sum_dy_xh;
            g_beta[c] = sum_dy;
            let k = self.gamma[c] * cache.inv_std[c] / count;
            for b in 0..xh.batch {
                let s = xh.idx(b, c, 0);
                for i in 0..xh.len {
                    gx.data[s + i] =
                        k * (count * grad_out.data[s + i] - sum_dy - xh.data[s + i] * sum_dy_xh);
                }
            }
        }
        Ok((gx, g_gamma, g_beta))
    }
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient through ReLU given the forward input.
pub fn relu_backward(x: &[f64], grad_out: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(grad_out)
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn tanh_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Gradient through tanh given the forward output.
pub fn tanh_backward(y: &[f64], grad_out: &[f64]) -> Vec<f64> {
    y.iter().zip(grad_out).map(|(&t, &g)| g * (1.0 - t * t)).collect()
}

/// Fully connected layer `y = W x + b` on row-major batches `[batch][features]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Layout `[out][in]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut d = Self::zeros(inputs, outputs);
        d.weight.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        d
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        if x.len() != batch * self.inputs {
            return Err(Error::Shape(format!(
                "dense expects {} inputs per row, got {} values for batch {batch}",
                self.inputs,
                x.len()
            )));
        }
        let mut y = Vec::with_capacity(batch * self.outputs);
        for row in x.chunks_exact(self.inputs) {
            for o in 0..self.outputs {
                let w = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                y.push(self.bias[o] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        Ok(y)
    }

    /// Returns `(dL/dx, dL/dW, dL/db)`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if x.len() != batch * self.inputs || grad_out.len() != batch * self.outputs {
            return Err(Error::Shape("dense backward shape mismatch".into()));
        }
        let mut gx = vec![0.0; x.len()];
        let mut gw = vec![0.0; self.weight.len()];
        let mut gb = vec![0.0; self.outputs];
        for b in 0..batch {
            let row = &x[b * self.inputs..(b + 1) * self.inputs];
            let grow = &mut gx[b * self.inputs..(b + 1) * self.inputs];
            for o in 0..self.outputs {
                let g = grad_out[b * self.outputs + o];
                gb[o] += g;
                let w = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                let gwo = &mut gw[o * self.inputs..(o + 1) * self.inputs];
                for i in 0..self.inputs {
                    gwo[i] += g * row[i];
                    grow[i] += g * w[i];
                }
            }
        }
        Ok((gx, gw, gb))
    }
}

/// Mean squared error over all elements and its gradient w.r.t. `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "mse over {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Adam optimiser state over a list of parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam got {} parameter tensors, {} gradients, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::Shape(format!("adam tensor {i} size mismatch")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!("non-finite gradient in tensor {i}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Step decay: the rate halves every `every` epochs (`epoch` counts from 0).
pub fn step_decay_lr(initial: f64, epoch: usize, factor: f64, every: usize) -> f64 {
    initial * factor.powi((epoch / every.max(1)) as i32)
}

/// Versioned checkpoint: JSON header plus flat named weight arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub header: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Checkpoint {
    pub const FORMAT: &'static str = "aoa-checkpoint";
    pub const VERSION: u32 = 1;

    pub fn new(kind: impl Into<String>, header: serde_json::Value) -> Self {
        Self {
            format: Self::FORMAT.into(),
            version: Self::VERSION,
            kind: kind.into(),
            header,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: &[f64]) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape,
            data: data.to_vec(),
        });
    }

    pub fn tensor(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Parse(format!("checkpoint has no tensor '{name}'")))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("checkpoint serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, kind: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if ck.format != Self::FORMAT || ck.version != Self::VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.kind != kind {
            return Err(Error::Parse(format!("expected a '{kind}' checkpoint, found '{}'", ck.kind)));
        }
        Ok(ck)
    }
}
