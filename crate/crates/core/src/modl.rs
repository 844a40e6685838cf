//! Model-based spectrum reconstruction: a CNN calibrator `z = C_w(eta)`
//! alternating with a sparse conjugate-gradient (SCG) solve of
//! `(P + lambda I) eta = b + lambda z`, unrolled for a fixed number of stages
//! with the calibrator weights shared between stages.
//!
//! Gradients through the solver use the linear-solve adjoint of the
//! stationarity condition of the sparse objective, so training never
//! differentiates the CG recursion itself.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::coarray::ProjectionMatrix;
use crate::error::{Error, Result};
use crate::estimators::{pick_aoa, SpatialSpectrum};
use crate::nn::{
    adam_step, mse_loss, relu_backward, relu_forward, step_decay_lr, AdamState, BatchNorm1d, BnCache, Checkpoint,
    Conv1d, Tensor,
};
use crate::rng;
use crate::sim::DirectionGrid;

/// Which spectrum the data term of each stage pulls towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataTerm {
    /// The observed coarray spectrum `eta^0` at every stage.
    Observed,
    /// The previous stage output `eta^i`.
    PreviousIterate,
}

/// How the backward pass treats the zero-attracting term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverGradient {
    /// Differentiate the attractor through its subgradient (rank-one correction).
    Subgradient,
    /// Ignore the attractor: backward solves `(P + lambda I) u = g`.
    StraightThrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsrConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub mu: f64,
    pub iterations: usize,
    pub cg_tol: f64,
    pub max_inner: usize,
    pub data_term: DataTerm,
    pub gradient: SolverGradient,
}

impl Default for SsrConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            epsilon: 0.5,
            mu: 0.01,
            iterations: 3,
            cg_tol: 1e-10,
            max_inner: 200,
            data_term: DataTerm::Observed,
            gradient: SolverGradient::Subgradient,
        }
    }
}

impl SsrConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda > 0.0
            && self.epsilon > 0.0
            && self.mu >= 0.0
            && self.iterations >= 1
            && self.max_inner >= 1
            && self.cg_tol >= 0.0;
        if !ok {
            return Err(Error::Config(format!(
                "invalid SSR config: need lambda > 0, epsilon > 0, mu >= 0, I >= 1, N_max >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Unit vector at the grid index of the true angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotLabel {
    pub index: usize,
    pub len: usize,
}

impl OneHotLabel {
    pub fn new(index: usize, len: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::Domain(format!("label index {index} outside grid of {len}")));
        }
        Ok(Self { index, len })
    }

    /// Label at the grid point nearest to `aoa_deg`.
    pub fn snapped(grid: &DirectionGrid, aoa_deg: f64) -> Self {
        Self {
            index: grid.nearest_index(aoa_deg),
            len: grid.len(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len];
        v[self.index] = 1.0;
        v
    }
}

/// Four-layer CNN: conv, batch norm, ReLU on all but the last layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorParams {
    pub convs: Vec<Conv1d>,
    pub norms: Vec<BatchNorm1d>,
}

pub const DEFAULT_KERNELS: [usize; 4] = [4, 8, 4, 1];
pub const DEFAULT_KERNEL_WIDTH: usize = 32;

impl CalibratorParams {
    /// `kernels` lists output channels per layer; the last must be 1.
    /// `slots` is the number of unrolled stages that keep their own
    /// batch-norm running statistics.
    pub fn init(kernels: &[usize], width: usize, slots: usize, seed: u64) -> Result<Self> {
        if kernels.is_empty() || *kernels.last().unwrap() != 1 || width == 0 {
            return Err(Error::Config("calibrator needs >= 1 layer, width >= 1 and a single output channel".into()));
        }
        let mut r = rng::stream(seed, &[rng::tag("calibrator")]);
        let mut convs = Vec::with_capacity(kernels.len());
        let mut norms = Vec::with_capacity(kernels.len());
        let mut cin = 1;
        for &cout in kernels {
            convs.push(Conv1d::init(cin, cout, width, &mut r));
            norms.push(BatchNorm1d::new(cout, slots));
            cin = cout;
        }
        Ok(Self { convs, norms })
    }

    pub fn num_layers(&self) -> usize {
        self.convs.len()
    }

    pub fn num_slots(&self) -> usize {
        self.norms[0].running.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut cin = 1;
        for (c, n) in self.convs.iter().zip(&self.norms) {
            if c.in_channels != cin || n.channels() != c.out_channels {
                return Err(Error::Shape("calibrator layers do not chain".into()));
            }
            cin = c.out_channels;
        }
        if cin != 1 || self.convs.len() != self.norms.len() || self.convs.is_empty() {
            return Err(Error::Shape("calibrator must map one channel to one channel".into()));
        }
        Ok(())
    }

    /// Mutable views of the trainable tensors, in `param_grads` order.
    fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (c, n) in self.convs.iter_mut().zip(self.norms.iter_mut()) {
            out.push(&mut c.weight);
            out.push(&mut n.gamma);
            out.push(&mut n.beta);
        }
        out
    }

    pub fn trainable_sizes(&self) -> Vec<usize> {
        self.convs
            .iter()
            .zip(&self.norms)
            .flat_map(|(c, n)| [c.weight.len(), n.gamma.len(), n.beta.len()])
            .collect()
    }

    /// Inference-mode forward on a batch using the running statistics of `slot`.
    pub fn forward_eval(&self, x: &Tensor, slot: usize) -> Result<Tensor> {
        let last = self.num_layers() - 1;
        let mut h = x.clone();
        for (j, (c, n)) in self.convs.iter().zip(&self.norms).enumerate() {
            h = n.forward_eval(&c.forward(&h)?, slot)?;
            if j < last {
                h.data = relu_forward(&h.data);
            }
        }
        Ok(h)
    }

    fn forward_train(&mut self, x: &Tensor, slot: usize) -> Result<(Tensor, CnnCache)> {
        let last = self.num_layers() - 1;
        let mut layers = Vec::with_capacity(self.num_layers());
        let mut h = x.clone();
        for j in 0..self.num_layers() {
            let a = self.convs[j].forward(&h)?;
            let (b, bn) = self.norms[j].forward_train(&a, slot)?;
            let out = if j < last {
                Tensor {
                    data: relu_forward(&b.data),
                    ..b.clone()
                }
            } else {
                b.clone()
            };
            layers.push(LayerCache { input: h, pre_act: b, bn });
            h = out;
        }
        Ok((h, CnnCache { layers }))
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    fn backward(&self, cache: &CnnCache, grad_out: &Tensor, grads: &mut [Vec<f64>]) -> Result<Tensor> {
        let last = self.num_layers() - 1;
        let mut g = grad_out.clone();
        for j in (0..self.num_layers()).rev() {
            let lc = &cache.layers[j];
            if j < last {
                g.data = relu_backward(&lc.pre_act.data, &g.data);
            }
            let (g_a, g_gamma, g_beta) = self.norms[j].backward(&lc.bn, &g)?;
            let (g_x, g_w) = self.convs[j].backward(&lc.input, &g_a)?;
            add_into(&mut grads[3 * j], &g_w);
            add_into(&mut grads[3 * j + 1], &g_gamma);
            add_into(&mut grads[3 * j + 2], &g_beta);
            g = g_x;
        }
        Ok(g)
    }

    pub fn to_checkpoint(&self, header: serde_json::Value) -> Checkpoint {
        let mut ck = Checkpoint::new("calibrator", header);
        for (j, (c, n)) in self.convs.iter().zip(&self.norms).enumerate() {
            ck.push(format!("conv{j}.weight"), vec![c.out_channels, c.in_channels, c.width], &c.weight);
            ck.push(format!("bn{j}.gamma"), vec![n.channels()], &n.gamma);
            ck.push(format!("bn{j}.beta"), vec![n.channels()], &n.beta);
            for (s, r) in n.running.iter().enumerate() {
                ck.push(format!("bn{j}.slot{s}.mean"), vec![n.channels()], &r.mean);
                ck.push(format!("bn{j}.slot{s}.var"), vec![n.channels()], &r.var);
            }
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, kernels: &[usize], width: usize, slots: usize) -> Result<Self> {
        let mut params = Self::init(kernels, width, slots, 0)?;
        let load = |dst: &mut Vec<f64>, name: String| -> Result<()> {
            let t = ck.tensor(&name)?;
            if t.data.len() != dst.len() {
                return Err(Error::Shape(format!("tensor {name} has {} values, expected {}", t.data.len(), dst.len())));
            }
            dst.copy_from_slice(&t.data);
            Ok(())
        };
        for j in 0..params.num_layers() {
            load(&mut params.convs[j].weight, format!("conv{j}.weight"))?;
            load(&mut params.norms[j].gamma, format!("bn{j}.gamma"))?;
            load(&mut params.norms[j].beta, format!("bn{j}.beta"))?;
            for s in 0..slots {
                load(&mut params.norms[j].running[s].mean, format!("bn{j}.slot{s}.mean"))?;
                load(&mut params.norms[j].running[s].var, format!("bn{j}.slot{s}.var"))?;
            }
        }
        Ok(params)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

struct LayerCache {
    input: Tensor,
    pre_act: Tensor,
    bn: BnCache,
}

struct CnnCache {
    layers: Vec<LayerCache>,
}

/// `z = C_w(eta)` in inference mode, using the statistics of stage `slot`.
pub fn calibrate(eta: &SpatialSpectrum, params: &CalibratorParams, slot: usize) -> Result<SpatialSpectrum> {
    let x = Tensor::from_vec(1, 1, eta.len(), eta.values.clone())?;
    let z = params.forward_eval(&x, slot)?;
    SpatialSpectrum::new(z.data, eta.grid.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScgOutput {
    pub eta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn matvec(a: &DMatrix<f64>, x: &[f64], shift: f64, out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = shift * x[i];
    }
    // column-major storage: accumulate column by column
    for j in 0..n {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        let col = &a.as_slice()[j * n..(j + 1) * n];
        for i in 0..n {
            out[i] += col[i] * xj;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// SCG on `(P + lambda I) eta = rhs`, starting from zero.
///
/// Each step is a CG step followed by the zero-attracting update
/// `-mu sgn(eta) / (1 + epsilon ||eta||_1)` evaluated at the current iterate.
/// The direction restarts at `-g` whenever it stops being a descent direction
/// or its curvature is not positive.
pub fn scg_core(p: &DMatrix<f64>, rhs: &[f64], cfg: &SsrConfig) -> Result<ScgOutput> {
    let n = rhs.len();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::Shape(format!("projection is {}x{}, rhs has {n}", p.nrows(), p.ncols())));
    }
    let lam = cfg.lambda;
    let b_norm = dot(rhs, rhs).sqrt();
    let mut eta = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(ScgOutput {
            eta,
            iterations: 0,
            converged: true,
        });
    }
    let mut g: Vec<f64> = rhs.iter().map(|v| -v).collect();
    let mut c: Vec<f64> = rhs.to_vec();
    let mut ac = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut gg = dot(&g, &g);

    for it in 0..cfg.max_inner {
        matvec(p, &c, lam, &mut ac);
        let mut curvature = dot(&c, &ac);
        let mut slope = dot(&g, &c);
        if !(curvature > 0.0) || slope >= 0.0 {
            c.iter_mut().zip(&g).for_each(|(ci, gi)| *ci = -gi);
            matvec(p, &c, lam, &mut ac);
            curvature = dot(&c, &ac);
            slope = -gg;
            if !(curvature > 0.0) {
                return Ok(ScgOutput {
                    eta,
                    iterations: it,
                    converged: true,
                });
            }
        }
        let alpha = -slope / curvature;
        let shrink = if cfg.mu > 0.0 {
            cfg.mu / (1.0 + cfg.epsilon * eta.iter().map(|v| v.abs()).sum::<f64>())
        } else {
            0.0
        };
        let mut step2 = 0.0;
        for i in 0..n {
            next[i] = eta[i] + alpha * c[i] - shrink * sgn(eta[i]);
            step2 += (next[i] - eta[i]).powi(2);
        }
        std::mem::swap(&mut eta, &mut next);
        matvec(p, &eta, lam, &mut g_new);
        g_new.iter_mut().zip(rhs).for_each(|(gi, bi)| *gi -= bi);
        let gg_new = dot(&g_new, &g_new);
        let beta = if gg > 0.0 {
            (gg_new - dot(&g, &g_new)) / gg
        } else {
            0.0
        };
        for i in 0..n {
            c[i] = -g_new[i] + beta * c[i];
        }
        std::mem::swap(&mut g, &mut g_new);
        gg = gg_new;
        if !gg.is_finite() {
            return Err(Error::Numerical(format!("SCG diverged at iteration {it}")));
        }
        if step2.sqrt() < cfg.cg_tol || gg.sqrt() <= 1e-14 * b_norm {
            return Ok(ScgOutput {
                eta,
                iterations: it + 1,
                converged: true,
            });
        }
    }
    Ok(ScgOutput {
        eta,
        iterations: cfg.max_inner,
        converged: false,
    })
}

/// One reconstruction stage: solve `(P + lambda I) eta = eta_prev + lambda z`.
pub fn scg_solve(
    eta_prev: &SpatialSpectrum,
    z: &SpatialSpectrum,
    p: &ProjectionMatrix,
    cfg: &SsrConfig,
) -> Result<(SpatialSpectrum, ScgOutput)> {
    cfg.validate()?;
    if eta_prev.len() != p.dim() || z.len() != p.dim() {
        return Err(Error::Shape(format!(
            "spectra of length {} and {} for a {}-point projection",
            eta_prev.len(),
            z.len(),
            p.dim()
        )));
    }
    let rhs: Vec<f64> = eta_prev.values.iter().zip(&z.values).map(|(e, zz)| e + cfg.lambda * zz).collect();
    let out = scg_core(&p.p, &rhs, cfg)?;
    let spec = SpatialSpectrum::new(out.eta.clone(), p.grid.clone())?;
    Ok((spec, out))
}

#[derive(Debug, Clone)]
pub struct StageTrace {
    pub z: Vec<f64>,
    pub eta: Vec<f64>,
    pub inner_iterations: usize,
    pub converged: bool,
}

fn stage_rhs(anchor: &[f64], prev: &[f64], z: &[f64], cfg: &SsrConfig) -> Vec<f64> {
    let data = match cfg.data_term {
        DataTerm::Observed => anchor,
        DataTerm::PreviousIterate => prev,
    };
    data.iter().zip(z).map(|(d, zz)| d + cfg.lambda * zz).collect()
}

/// Unrolled alternation `z^i = C_w(eta^i)`, `eta^{i+1} = SCG(z^i)`.
pub fn modl_forward(
    eta0: &SpatialSpectrum,
    p: &ProjectionMatrix,
    params: &CalibratorParams,
    cfg: &SsrConfig,
) -> Result<(SpatialSpectrum, Vec<StageTrace>)> {
    cfg.validate()?;
    if eta0.len() != p.dim() {
        return Err(Error::Shape(format!(
            "input spectrum has {} points, projection {}",
            eta0.len(),
            p.dim()
        )));
    }
    if params.num_slots() < cfg.iterations {
        return Err(Error::Config(format!(
            "calibrator holds statistics for {} stages, config asks for {}",
            params.num_slots(),
            cfg.iterations
        )));
    }
    let mut eta = eta0.values.clone();
    let mut trace = Vec::with_capacity(cfg.iterations);
    for i in 0..cfg.iterations {
        let x = Tensor::from_vec(1, 1, eta.len(), eta.clone())?;
        let z = params.forward_eval(&x, i)?.data;
        let out = scg_core(&p.p, &stage_rhs(&eta0.values, &eta, &z, cfg), cfg)?;
        eta = out.eta;
        trace.push(StageTrace {
            z,
            eta: eta.clone(),
            inner_iterations: out.iterations,
            converged: out.converged,
        });
    }
    Ok((SpatialSpectrum::new(eta, p.grid.clone())?, trace))
}

pub fn estimate_aoa(eta_final: &SpatialSpectrum) -> Result<f64> {
    pick_aoa(eta_final)
}

/// Cached `(P + lambda I)^{-1}` for the adjoint solves.
#[derive(Debug, Clone)]
pub struct SolverAdjoint {
    inverse: DMatrix<f64>,
}

impl SolverAdjoint {
    pub fn new(p: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        assert!(lambda > 0.0, "P + lambda I is singular without a positive lambda");
        let n = p.nrows();
        let a = p + DMatrix::identity(n, n) * lambda;
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Numerical("P + lambda I is not positive definite".into()))?;
        Ok(Self { inverse: chol.inverse() })
    }

    pub fn solve(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.len()];
        matvec(&self.inverse, g, 0.0, &mut out);
        out
    }

    /// Solve `J^T u = g` with `J = (P + lambda I) - c s s^T` at the solver
    /// output `eta`, falling back to the plain system when the rank-one
    /// update is degenerate.
    pub fn solve_at(&self, eta: &[f64], g: &[f64], cfg: &SsrConfig) -> Vec<f64> {
        let base = self.solve(g);
        if cfg.gradient == SolverGradient::StraightThrough || cfg.mu == 0.0 {
            return base;
        }
        let l1: f64 = eta.iter().map(|v| v.abs()).sum();
        let c = cfg.mu * cfg.epsilon / (1.0 + cfg.epsilon * l1).powi(2);
        let s: Vec<f64> = eta.iter().map(|&v| sgn(v)).collect();
        let a_inv_s = self.solve(&s);
        let denom = 1.0 - c * dot(&s, &a_inv_s);
        if denom.abs() < 1e-8 {
            return base;
        }
        let k = c * dot(&s, &base) / denom;
        base.iter().zip(&a_inv_s).map(|(b, v)| b + k * v).collect()
    }
}

/// One training example: normalised input spectrum and its label.
#[derive(Debug, Clone)]
pub struct ModlSample {
    pub eta0: Vec<f64>,
    pub label: OneHotLabel,
}

/// Gradients of one mini-batch, in `CalibratorParams::trainable_sizes` order.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
}

/// Training-mode forward and backward of one mini-batch. Updates the running
/// batch-norm statistics in `params`.
pub fn batch_gradient(
    params: &mut CalibratorParams,
    batch: &[&ModlSample],
    p: &DMatrix<f64>,
    adjoint: &SolverAdjoint,
    cfg: &SsrConfig,
) -> Result<BatchGradient> {
    let b = batch.len();
    let l = p.nrows();
    if b == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    if batch.iter().any(|s| s.eta0.len() != l || s.label.len != l) {
        return Err(Error::Shape(format!("batch samples do not match a {l}-point grid")));
    }
    let anchor: Vec<f64> = batch.iter().flat_map(|s| s.eta0.iter().copied()).collect();
    let mut eta = anchor.clone();
    let mut caches = Vec::with_capacity(cfg.iterations);
    let mut etas_out = Vec::with_capacity(cfg.iterations);
    for i in 0..cfg.iterations {
        let x = Tensor::from_vec(b, 1, l, eta.clone())?;
        let (z, cache) = params.forward_train(&x, i)?;
        let mut next = vec![0.0; b * l];
        for s in 0..b {
            let r = s * l..(s + 1) * l;
            let rhs = stage_rhs(&anchor[r.clone()], &eta[r.clone()], &z.data[r.clone()], cfg);
            next[r].copy_from_slice(&scg_core(p, &rhs, cfg)?.eta);
        }
        caches.push(cache);
        etas_out.push(next.clone());
        eta = next;
    }
    let target: Vec<f64> = batch.iter().flat_map(|s| s.label.to_vec()).collect();
    let (loss, mut g_eta) = mse_loss(&eta, &target)?;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("loss is {loss}")));
    }
    let mut grads: Vec<Vec<f64>> = params.trainable_sizes().iter().map(|&n| vec![0.0; n]).collect();
    for i in (0..cfg.iterations).rev() {
        let mut g_z = vec![0.0; b * l];
        let mut g_prev = vec![0.0; b * l];
        for s in 0..b {
            let r = s * l..(s + 1) * l;
            let u = adjoint.solve_at(&etas_out[i][r.clone()], &g_eta[r.clone()], cfg);
            for (j, uj) in u.iter().enumerate() {
                g_z[s * l + j] = cfg.lambda * uj;
                if cfg.data_term == DataTerm::PreviousIterate {
                    g_prev[s * l + j] = *uj;
                }
            }
        }
        let g_x = params.backward(&caches[i], &Tensor::from_vec(b, 1, l, g_z)?, &mut grads)?;
        g_eta = g_x.data;
        add_into(&mut g_eta, &g_prev);
    }
    Ok(BatchGradient { loss, grads })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModlHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub kernels: Vec<usize>,
    pub kernel_width: usize,
    /// Initial scale of the last batch-norm layer; small values start
    /// training close to `z = 0`.
    pub final_gain_init: f64,
    pub seed: u64,
}

impl Default for ModlHyper {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            lr_decay: 0.5,
            lr_decay_every: 5,
            kernels: DEFAULT_KERNELS.to_vec(),
            kernel_width: DEFAULT_KERNEL_WIDTH,
            final_gain_init: 1.0,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModlTraining {
    pub params: CalibratorParams,
    /// Mean mini-batch loss per epoch.
    pub loss_curve: Vec<f64>,
    /// Every mini-batch loss, grouped by epoch.
    pub batch_losses: Vec<Vec<f64>>,
}

/// Adam training of one shared-weight calibrator on one projection.
pub fn train_modl(
    samples: &[ModlSample],
    p: &ProjectionMatrix,
    cfg: &SsrConfig,
    hyper: &ModlHyper,
) -> Result<ModlTraining> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("MoDL training set is empty".into()));
    }
    let mut params = CalibratorParams::init(&hyper.kernels, hyper.kernel_width, cfg.iterations, hyper.seed)?;
    if let Some(last) = params.norms.last_mut() {
        last.gamma.iter_mut().for_each(|g| *g = hyper.final_gain_init);
    }
    let adjoint = SolverAdjoint::new(&p.p, cfg.lambda)?;
    let mut adam = AdamState::new(hyper.learning_rate, &params.trainable_sizes());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle = rng::stream(hyper.seed, &[rng::tag("modl-shuffle")]);
    let mut loss_curve = Vec::with_capacity(hyper.epochs);
    let mut batch_losses = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        adam.lr = step_decay_lr(hyper.learning_rate, epoch, hyper.lr_decay, hyper.lr_decay_every);
        order.shuffle(&mut shuffle);
        let mut losses = Vec::new();
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let batch: Vec<&ModlSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let bg = batch_gradient(&mut params, &batch, &p.p, &adjoint, cfg).map_err(|e| match e {
                Error::Diverged(msg) => Error::Diverged(format!("epoch {epoch}: {msg}")),
                other => other,
            })?;
            let grads: Vec<&[f64]> = bg.grads.iter().map(|g| g.as_slice()).collect();
            adam_step(&mut params.trainable_mut(), &grads, &mut adam)?;
            losses.push(bg.loss);
        }
        loss_curve.push(losses.iter().sum::<f64>() / losses.len() as f64);
        batch_losses.push(losses);
    }
    Ok(ModlTraining {
        params,
        loss_curve,
        batch_losses,
    })
}

/// A trained calibrator bound to its grid segment and projection.
#[derive(Debug, Clone)]
pub struct ModlModel {
    pub projection: ProjectionMatrix,
    pub params: CalibratorParams,
    pub cfg: SsrConfig,
    pub hyper: ModlHyper,
    pub subregion: usize,
}

impl ModlModel {
    pub fn grid(&self) -> &DirectionGrid {
        &self.projection.grid
    }

    pub fn infer(&self, eta0: &SpatialSpectrum) -> Result<SpatialSpectrum> {
        modl_forward(eta0, &self.projection, &self.params, &self.cfg).map(|(s, _)| s)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let header = serde_json::json!({
            "subregion": self.subregion,
            "grid": self.projection.grid.angles(),
            "ssr": self.cfg,
            "hyper": self.hyper,
        });
        self.params.to_checkpoint(header)
    }

    /// Restore a model; the projection is rebuilt by the caller from the
    /// stored grid and must match it exactly.
    pub fn from_checkpoint(ck: &Checkpoint, projection: ProjectionMatrix) -> Result<Self> {
        let h = &ck.header;
        let grid: Vec<f64> =
            serde_json::from_value(h["grid"].clone()).map_err(|e| Error::Parse(format!("calibrator grid: {e}")))?;
        if grid.as_slice() != projection.grid.angles() {
            return Err(Error::Shape("checkpoint grid does not match the projection grid".into()));
        }
        let cfg: SsrConfig =
            serde_json::from_value(h["ssr"].clone()).map_err(|e| Error::Parse(format!("ssr config: {e}")))?;
        let hyper: ModlHyper =
            serde_json::from_value(h["hyper"].clone()).map_err(|e| Error::Parse(format!("hyper: {e}")))?;
        let subregion = h["subregion"]
            .as_u64()
            .ok_or_else(|| Error::Parse("checkpoint lacks subregion".into()))? as usize;
        let params = CalibratorParams::from_checkpoint(ck, &hyper.kernels, hyper.kernel_width, cfg.iterations)?;
        Ok(Self {
            projection,
            params,
            cfg,
            hyper,
            subregion,
        })
    }
}

/// Dense solve of `(P + lambda I) x = b`, used as a reference.
pub fn direct_solve(p: &DMatrix<f64>, lambda: f64, b: &[f64]) -> Result<Vec<f64>> {
    let n = p.nrows();
    let a = p + DMatrix::identity(n, n) * lambda;
    let lu = a.lu();
    lu.solve(&DVector::from_column_slice(b))
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| Error::Numerical("singular system".into()))
}
