//! Frequency-diverse multi-task autoencoder that gates CSI into angular
//! subregions.
//!
//! Per subcarrier `k` a single tanh encoder compresses the real-stacked
//! snapshot to a code `c(k)`, and `P` affine decoders reconstruct one block per
//! subregion. Training pushes the block of the true subregion towards the
//! input and every other block towards zero.
//!
//! Snapshots are phase-referenced to antenna 0 and scaled to unit norm before
//! encoding; decoded blocks are mapped back with the inverse factor.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{adam_step, mse_loss, step_decay_lr, tanh_backward, tanh_forward, AdamState, Checkpoint, Dense};
use crate::rng;
use crate::sim::{CfrSet, DirectionGrid};

/// Uniform split of the direction grid into `P` contiguous index ranges with
/// boundaries `floor(L p / P)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubregionPartition {
    pub grid: DirectionGrid,
    pub boundaries: Vec<usize>,
}

impl SubregionPartition {
    pub fn uniform(grid: &DirectionGrid, num_subregions: usize) -> Result<Self> {
        let l = grid.len();
        if num_subregions == 0 || num_subregions > l {
            return Err(Error::Config(format!(
                "cannot split {l} grid points into {num_subregions} subregions"
            )));
        }
        let boundaries = (0..=num_subregions).map(|p| l * p / num_subregions).collect();
        Ok(Self {
            grid: grid.clone(),
            boundaries,
        })
    }

    pub fn num_subregions(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn range(&self, p: usize) -> Range<usize> {
        self.boundaries[p]..self.boundaries[p + 1]
    }

    /// Range widened by `margin` grid points on each side, clipped to the grid.
    pub fn extended_range(&self, p: usize, margin: usize) -> Range<usize> {
        let r = self.range(p);
        r.start.saturating_sub(margin)..(r.end + margin).min(self.grid.len())
    }

    pub fn region_of_index(&self, l: usize) -> usize {
        // boundaries are sorted; the last region is closed on the right
        let p = self.boundaries.partition_point(|&b| b <= l);
        (p - 1).min(self.num_subregions() - 1)
    }

    pub fn region_of_angle(&self, aoa_deg: f64) -> Result<usize> {
        let l = self
            .grid
            .index_of(aoa_deg)
            .ok_or_else(|| Error::Domain(format!("aoa {aoa_deg} is not on the grid")))?;
        Ok(self.region_of_index(l))
    }
}

/// `[Re(h); Im(h)]`.
pub fn realify(h: &DVector<Complex64>) -> Vec<f64> {
    h.iter().map(|z| z.re).chain(h.iter().map(|z| z.im)).collect()
}

pub fn complexify(x: &[f64]) -> Result<DVector<Complex64>> {
    if x.len() % 2 != 0 {
        return Err(Error::Shape(format!("real stack of odd length {}", x.len())));
    }
    let m = x.len() / 2;
    Ok(DVector::from_fn(m, |i, _| Complex64::new(x[i], x[m + i])))
}

/// Phase-reference to antenna 0 and scale to unit norm. Returns the real
/// stack and the complex factor that undoes the normalisation.
pub fn normalize_snapshot(h: &DVector<Complex64>) -> (Vec<f64>, Complex64) {
    let norm = h.norm();
    if norm == 0.0 {
        return (realify(h), Complex64::new(1.0, 0.0));
    }
    let rot = if h[0].norm() > 0.0 {
        h[0] / h[0].norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let scale = rot * norm;
    (realify(&h.map(|z| z / scale)), scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply(self, x: Vec<f64>) -> Vec<f64> {
        match self {
            Activation::Identity => x,
            Activation::Tanh => tanh_forward(&x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderParams {
    pub num_elements: usize,
    pub code_dim: usize,
    pub num_subcarriers: usize,
    pub num_subregions: usize,
    /// One per subcarrier, `2M -> |c|`.
    pub encoders: Vec<Dense>,
    /// Index `p * K + k`, `|c| -> 2M`.
    pub decoders: Vec<Dense>,
    pub hidden: Activation,
    pub output: Activation,
}

impl AutoencoderParams {
    pub fn zeros(num_elements: usize, code_dim: usize, num_subcarriers: usize, num_subregions: usize) -> Self {
        let d = 2 * num_elements;
        Self {
            num_elements,
            code_dim,
            num_subcarriers,
            num_subregions,
            encoders: vec![Dense::zeros(d, code_dim); num_subcarriers],
            decoders: vec![Dense::zeros(code_dim, d); num_subcarriers * num_subregions],
            hidden: Activation::Tanh,
            output: Activation::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = 2 * self.num_elements;
        if self.code_dim == 0 || self.code_dim >= d {
            return Err(Error::Config(format!(
                "code size {} must satisfy 0 < |c| < 2M = {d}",
                self.code_dim
            )));
        }
        let enc_ok = self.encoders.len() == self.num_subcarriers
            && self.encoders.iter().all(|e| e.inputs == d && e.outputs == self.code_dim);
        let dec_ok = self.decoders.len() == self.num_subcarriers * self.num_subregions
            && self.decoders.iter().all(|e| e.inputs == self.code_dim && e.outputs == d);
        if !enc_ok || !dec_ok {
            return Err(Error::Shape("autoencoder layer shapes are inconsistent".into()));
        }
        Ok(())
    }

    pub fn decoder(&self, p: usize, k: usize) -> &Dense {
        &self.decoders[p * self.num_subcarriers + k]
    }

    pub fn to_checkpoint(&self, partition: &SubregionPartition) -> Checkpoint {
        let header = serde_json::json!({
            "num_elements": self.num_elements,
            "code_dim": self.code_dim,
            "num_subcarriers": self.num_subcarriers,
            "num_subregions": self.num_subregions,
            "hidden": self.hidden,
            "output": self.output,
            "partition": partition,
        });
        let mut ck = Checkpoint::new("autoencoder", header);
        for (k, e) in self.encoders.iter().enumerate() {
            ck.push(format!("enc.{k}.weight"), vec![e.outputs, e.inputs], &e.weight);
            ck.push(format!("enc.{k}.bias"), vec![e.outputs], &e.bias);
        }
        for p in 0..self.num_subregions {
            for k in 0..self.num_subcarriers {
                let d = self.decoder(p, k);
                ck.push(format!("dec.{p}.{k}.weight"), vec![d.outputs, d.inputs], &d.weight);
                ck.push(format!("dec.{p}.{k}.bias"), vec![d.outputs], &d.bias);
            }
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, SubregionPartition)> {
        let h = &ck.header;
        let field = |name: &str| -> Result<usize> {
            h[name]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::Parse(format!("autoencoder header lacks '{name}'")))
        };
        let partition: SubregionPartition = serde_json::from_value(h["partition"].clone())
            .map_err(|e| Error::Parse(format!("autoencoder partition: {e}")))?;
        let mut params = Self::zeros(
            field("num_elements")?,
            field("code_dim")?,
            field("num_subcarriers")?,
            field("num_subregions")?,
        );
        params.hidden = serde_json::from_value(h["hidden"].clone()).map_err(|e| Error::Parse(e.to_string()))?;
        params.output = serde_json::from_value(h["output"].clone()).map_err(|e| Error::Parse(e.to_string()))?;
        let load = |dst: &mut Vec<f64>, name: String| -> Result<()> {
            let t = ck.tensor(&name)?;
            if t.data.len() != dst.len() {
                return Err(Error::Shape(format!("tensor {name} has {} values, expected {}", t.data.len(), dst.len())));
            }
            dst.copy_from_slice(&t.data);
            Ok(())
        };
        for k in 0..params.num_subcarriers {
            load(&mut params.encoders[k].weight, format!("enc.{k}.weight"))?;
            load(&mut params.encoders[k].bias, format!("enc.{k}.bias"))?;
        }
        for p in 0..params.num_subregions {
            for k in 0..params.num_subcarriers {
                let idx = p * params.num_subcarriers + k;
                load(&mut params.decoders[idx].weight, format!("dec.{p}.{k}.weight"))?;
                load(&mut params.decoders[idx].bias, format!("dec.{p}.{k}.bias"))?;
            }
        }
        params.validate()?;
        if partition.num_subregions() != params.num_subregions {
            return Err(Error::Shape("partition and decoder count disagree".into()));
        }
        Ok((params, partition))
    }
}

/// `c(k) = f~_k(C_k x + b_k)`.
pub fn encode(x: &[f64], k: usize, params: &AutoencoderParams) -> Result<Vec<f64>> {
    let enc = params
        .encoders
        .get(k)
        .ok_or_else(|| Error::Shape(format!("no encoder for subcarrier {k}")))?;
    Ok(params.hidden.apply(enc.forward(x, 1)?))
}

/// `h~_p(k) = f_{p,k}(D_{p,k} c + b_{p,k})`.
pub fn decode(c: &[f64], p: usize, k: usize, params: &AutoencoderParams) -> Result<Vec<f64>> {
    if p >= params.num_subregions || k >= params.num_subcarriers {
        return Err(Error::Shape(format!("no decoder for subregion {p}, subcarrier {k}")));
    }
    Ok(params.output.apply(params.decoder(p, k).forward(c, 1)?))
}

/// `P` blocks: the input in the block of the true subregion, zeros elsewhere.
pub fn gating_target(x: &[f64], true_aoa: f64, partition: &SubregionPartition) -> Result<Vec<Vec<f64>>> {
    let region = partition.region_of_angle(true_aoa)?;
    Ok(gating_target_for_region(x, region, partition.num_subregions()))
}

fn gating_target_for_region(x: &[f64], region: usize, num_subregions: usize) -> Vec<Vec<f64>> {
    (0..num_subregions)
        .map(|p| if p == region { x.to_vec() } else { vec![0.0; x.len()] })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseMetrics {
    /// `|h^H h_p|`.
    pub r_amp: f64,
    /// `|h^H h_p| / (||h|| ||h_p||)`; `None` when `h_p = 0`.
    pub r_phase: Option<f64>,
}

pub fn response_metrics(h: &DVector<Complex64>, h_p: &DVector<Complex64>) -> Result<ResponseMetrics> {
    if h.len() != h_p.len() {
        return Err(Error::Shape("response vectors differ in length".into()));
    }
    let nh = h.norm();
    if nh == 0.0 {
        return Err(Error::Domain("reference channel is zero".into()));
    }
    let r_amp = h.dotc(h_p).norm();
    let np = h_p.norm();
    let r_phase = (np > 0.0).then(|| (r_amp / (nh * np)).min(1.0));
    Ok(ResponseMetrics { r_amp, r_phase })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeHyper {
    pub code_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub seed: u64,
}

impl Default for AeHyper {
    fn default() -> Self {
        Self {
            code_dim: 6,
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            lr_decay: 0.5,
            lr_decay_every: 5,
            seed: 7,
        }
    }
}

/// A CFR set already normalised per subcarrier, with its subregion label.
#[derive(Debug, Clone)]
pub struct AeSample {
    /// One real stack per subcarrier.
    pub x: Vec<Vec<f64>>,
    pub region: usize,
}

impl AeSample {
    pub fn new(cfr: &CfrSet, true_aoa: f64, partition: &SubregionPartition) -> Result<Self> {
        let region = partition.region_of_angle(true_aoa)?;
        let x = (0..cfr.num_subcarriers())
            .map(|k| normalize_snapshot(&cfr.snapshot(k)).0)
            .collect();
        Ok(Self { x, region })
    }
}

#[derive(Debug, Clone)]
pub struct AeTraining {
    pub params: AutoencoderParams,
    /// Mean training loss per epoch, averaged over subcarriers.
    pub loss_curve: Vec<f64>,
    /// Mini-batch losses grouped by epoch, averaged over subcarriers.
    pub batch_losses: Vec<Vec<f64>>,
}

/// Train every subcarrier's encoder and decoders independently.
///
/// All subcarriers share the same initialisation and shuffling stream, so the
/// learned block of subcarrier `k` depends only on the data of subcarrier `k`.
pub fn train_autoencoder(
    samples: &[AeSample],
    num_elements: usize,
    num_subregions: usize,
    hyper: &AeHyper,
) -> Result<AeTraining> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Config("autoencoder training set is empty".into()))?;
    let num_k = first.x.len();
    let d = 2 * num_elements;
    if samples
        .iter()
        .any(|s| s.x.len() != num_k || s.x.iter().any(|x| x.len() != d) || s.region >= num_subregions)
    {
        return Err(Error::Shape("inconsistent autoencoder samples".into()));
    }
    let mut params = AutoencoderParams::zeros(num_elements, hyper.code_dim, num_k, num_subregions);
    params.validate()?;
    let mut batch_losses: Vec<Vec<f64>> = Vec::new();
    for k in 0..num_k {
        let (enc, decs, per_batch) = train_subcarrier(samples, k, num_elements, num_subregions, hyper)?;
        params.encoders[k] = enc;
        for (p, dec) in decs.into_iter().enumerate() {
            params.decoders[p * num_k + k] = dec;
        }
        if batch_losses.is_empty() {
            batch_losses = per_batch.iter().map(|e| vec![0.0; e.len()]).collect();
        }
        for (acc, epoch) in batch_losses.iter_mut().zip(per_batch) {
            acc.iter_mut().zip(epoch).for_each(|(a, l)| *a += l / num_k as f64);
        }
    }
    let loss_curve = batch_losses
        .iter()
        .map(|e| e.iter().sum::<f64>() / e.len().max(1) as f64)
        .collect();
    Ok(AeTraining {
        params,
        loss_curve,
        batch_losses,
    })
}

fn train_subcarrier(
    samples: &[AeSample],
    k: usize,
    num_elements: usize,
    num_subregions: usize,
    hyper: &AeHyper,
) -> Result<(Dense, Vec<Dense>, Vec<Vec<f64>>)> {
    let d = 2 * num_elements;
    let c = hyper.code_dim;
    let mut init = rng::stream(hyper.seed, &[rng::tag("ae-init")]);
    let mut enc = Dense::init(d, c, &mut init);
    let mut decs: Vec<Dense> = (0..num_subregions).map(|_| Dense::init(c, d, &mut init)).collect();
    let mut sizes = vec![enc.weight.len(), enc.bias.len()];
    for dec in &decs {
        sizes.push(dec.weight.len());
        sizes.push(dec.bias.len());
    }
    let mut adam = AdamState::new(hyper.learning_rate, &sizes);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle = rng::stream(hyper.seed, &[rng::tag("ae-shuffle")]);
    let bs = hyper.batch_size.max(1);
    let mut curve = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        adam.lr = step_decay_lr(hyper.learning_rate, epoch, hyper.lr_decay, hyper.lr_decay_every);
        order.shuffle(&mut shuffle);
        let mut losses = Vec::new();
        for chunk in order.chunks(bs) {
            let n = chunk.len();
            let x: Vec<f64> = chunk.iter().flat_map(|&i| samples[i].x[k].iter().copied()).collect();
            let code = tanh_forward(&enc.forward(&x, n)?);
            let mut pred = Vec::with_capacity(n * num_subregions * d);
            let mut target = Vec::with_capacity(n * num_subregions * d);
            let outs: Vec<Vec<f64>> = decs.iter().map(|dec| dec.forward(&code, n)).collect::<Result<_>>()?;
            // layout [sample][region][feature] so the loss is a plain mean
            for (b, &i) in chunk.iter().enumerate() {
                let gated = gating_target_for_region(&samples[i].x[k], samples[i].region, num_subregions);
                for p in 0..num_subregions {
                    pred.extend_from_slice(&outs[p][b * d..(b + 1) * d]);
                    target.extend_from_slice(&gated[p]);
                }
            }
            let (loss, grad) = mse_loss(&pred, &target)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "autoencoder loss is {loss} at subcarrier {k}, epoch {epoch}"
                )));
            }
            losses.push(loss);
            let mut g_code = vec![0.0; n * c];
            let mut dec_grads = Vec::with_capacity(num_subregions);
            for (p, dec) in decs.iter().enumerate() {
                let mut g_out = vec![0.0; n * d];
                for b in 0..n {
                    let src = (b * num_subregions + p) * d;
                    g_out[b * d..(b + 1) * d].copy_from_slice(&grad[src..src + d]);
                }
                let (gc, gw, gb) = dec.backward(&code, &g_out, n)?;
                g_code.iter_mut().zip(&gc).for_each(|(a, b)| *a += b);
                dec_grads.push((gw, gb));
            }
            let g_pre = tanh_backward(&code, &g_code);
            let (_, gw_e, gb_e) = enc.backward(&x, &g_pre, n)?;

            let mut params: Vec<&mut [f64]> = vec![&mut enc.weight, &mut enc.bias];
            for dec in decs.iter_mut() {
                params.push(&mut dec.weight);
                params.push(&mut dec.bias);
            }
            let mut grads: Vec<&[f64]> = vec![&gw_e, &gb_e];
            for (gw, gb) in &dec_grads {
                grads.push(gw);
                grads.push(gb);
            }
            adam_step(&mut params, &grads, &mut adam)?;
        }
        curve.push(losses);
    }
    Ok((enc, decs, curve))
}

/// Decoded subregion blocks of one CFR set.
#[derive(Debug, Clone)]
pub struct BeamformerOutput {
    /// Per subregion, the decoded `M x K` MMV matrix in the original scale.
    pub blocks: Vec<DMatrix<Complex64>>,
    /// Per subregion, energy of the normalised decoder outputs summed over `k`.
    pub energies: Vec<f64>,
}

impl BeamformerOutput {
    /// Subregion with the largest output energy (first on ties).
    pub fn selected(&self) -> usize {
        let mut best = 0;
        for (p, &e) in self.energies.iter().enumerate() {
            if e > self.energies[best] {
                best = p;
            }
        }
        best
    }
}

pub fn beamform(cfr: &CfrSet, params: &AutoencoderParams) -> Result<BeamformerOutput> {
    let (m, k_count) = (cfr.num_elements(), cfr.num_subcarriers());
    if m != params.num_elements || k_count != params.num_subcarriers {
        return Err(Error::Shape(format!(
            "CFR is {m}x{k_count}, autoencoder expects {}x{}",
            params.num_elements, params.num_subcarriers
        )));
    }
    let mut blocks = vec![DMatrix::zeros(m, k_count); params.num_subregions];
    let mut energies = vec![0.0; params.num_subregions];
    for k in 0..k_count {
        let (x, scale) = normalize_snapshot(&cfr.snapshot(k));
        let code = encode(&x, k, params)?;
        for p in 0..params.num_subregions {
            let out = decode(&code, p, k, params)?;
            energies[p] += out.iter().map(|v| v * v).sum::<f64>();
            let z = complexify(&out)?;
            for i in 0..m {
                blocks[p][(i, k)] = z[i] * scale;
            }
        }
    }
    Ok(BeamformerOutput { blocks, energies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn grid() -> DirectionGrid {
        DirectionGrid::uniform(-60.0, 60.0, 1.0).unwrap()
    }

    #[test]
    fn realify_layout_and_round_trip() {
        let h = DVector::from_vec(vec![Complex64::new(1.0, 2.0), Complex64::new(3.0, 0.0)]);
        assert_eq!(realify(&h), vec![1.0, 3.0, 2.0, 0.0]);
        assert_eq!(complexify(&realify(&h)).unwrap(), h);
        assert_eq!(realify(&DVector::zeros(3)), vec![0.0; 6]);
        assert!(complexify(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn partition_boundaries_and_regions() {
        let part = SubregionPartition::uniform(&grid(), 4).unwrap();
        assert_eq!(part.boundaries, vec![0, 30, 60, 90, 121]);
        assert_eq!(part.region_of_angle(-45.0).unwrap(), 0);
        assert_eq!(part.region_of_angle(-30.0).unwrap(), 1);
        assert_eq!(part.region_of_angle(60.0).unwrap(), 3);
        assert!(part.region_of_angle(0.5).is_err());
        let mut counts = [0usize; 4];
        for l in 0..121 {
            counts[part.region_of_index(l)] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 121);
        assert_eq!(part.extended_range(0, 4), 0..34);
        assert_eq!(part.extended_range(3, 4), 86..121);
    }

    #[test]
    fn gating_examples() {
        let part = SubregionPartition::uniform(&grid(), 4).unwrap();
        let x = vec![1.0, -2.0, 0.5, 0.0];
        let t = gating_target(&x, -45.0, &part).unwrap();
        assert_eq!(t[0], x);
        assert!(t[1..].iter().all(|b| b.iter().all(|&v| v == 0.0)));
        let fine = SubregionPartition::uniform(&DirectionGrid::uniform(-60.0, 60.0, 0.1).unwrap(), 4).unwrap();
        let t = gating_target(&x, 59.9, &fine).unwrap();
        assert_eq!(t[3], x);
        assert!(gating_target(&x, 0.25, &part).is_err());
    }

    #[test]
    fn encode_decode_passthrough_and_zero() {
        let mut params = AutoencoderParams::zeros(2, 3, 1, 2);
        params.hidden = Activation::Identity;
        let x = [0.3, -0.1, 0.7, 0.2];
        assert_eq!(encode(&x, 0, &params).unwrap(), vec![0.0; 3]);
        for i in 0..3 {
            params.encoders[0].weight[i * 4 + i] = 1.0;
        }
        assert_eq!(encode(&x, 0, &params).unwrap(), vec![0.3, -0.1, 0.7]);
        let c = [0.5, -0.25, 1.0];
        assert_eq!(decode(&c, 1, 0, &params).unwrap(), vec![0.0; 4]);
        for i in 0..3 {
            params.decoders[1].weight[i * 3 + i] = 1.0;
        }
        assert_eq!(decode(&c, 1, 0, &params).unwrap(), vec![0.5, -0.25, 1.0, 0.0]);
        assert!(encode(&x[..3], 0, &params).is_err());
        assert!(decode(&c, 2, 0, &params).is_err());
    }

    #[test]
    fn encode_matches_affine_oracle() {
        let mut r = rng::stream(3, &[]);
        let mut params = AutoencoderParams::zeros(4, 6, 2, 3);
        params.encoders[1] = Dense::init(8, 6, &mut r);
        params.encoders[1].bias.iter_mut().for_each(|b| *b = r.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
        let got = encode(&x, 1, &params).unwrap();
        let e = &params.encoders[1];
        for o in 0..6 {
            let mut acc = e.bias[o];
            for i in 0..8 {
                acc += e.weight[o * 8 + i] * x[i];
            }
            assert_abs_diff_eq!(got[o], acc.tanh(), epsilon = 1e-12);
        }
    }

    #[test]
    fn code_must_compress() {
        assert!(AutoencoderParams::zeros(4, 8, 1, 4).validate().is_err());
        assert!(AutoencoderParams::zeros(4, 6, 1, 4).validate().is_ok());
    }

    #[test]
    fn response_metric_cases() {
        let h = DVector::from_vec(vec![Complex64::new(1.0, 1.0), Complex64::new(0.0, -2.0)]);
        let m = response_metrics(&h, &h).unwrap();
        assert_abs_diff_eq!(m.r_amp, h.norm_squared(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.r_phase.unwrap(), 1.0, epsilon = 1e-12);
        let m2 = response_metrics(&h, &h.map(|z| z * 2.0)).unwrap();
        assert_abs_diff_eq!(m2.r_amp, 2.0 * h.norm_squared(), epsilon = 1e-12);
        assert_abs_diff_eq!(m2.r_phase.unwrap(), 1.0, epsilon = 1e-12);
        let h2 = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)]);
        let perp = DVector::from_vec(vec![Complex64::new(0.0, 2.0), Complex64::new(1.0, 0.0)]);
        let m4 = response_metrics(&h2, &perp).unwrap();
        assert_abs_diff_eq!(m4.r_amp, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m4.r_phase.unwrap(), 0.0, epsilon = 1e-12);
        let z = response_metrics(&h, &DVector::zeros(2)).unwrap();
        assert_eq!(z.r_amp, 0.0);
        assert!(z.r_phase.is_none());
    }

    #[test]
    fn normalize_round_trip() {
        let h = DVector::from_vec(vec![Complex64::new(0.3, -1.0), Complex64::new(2.0, 0.5)]);
        let (x, s) = normalize_snapshot(&h);
        assert_abs_diff_eq!(x[2], 0.0, epsilon = 1e-15);
        let back = complexify(&x).unwrap().map(|z| z * s);
        assert!((back - h).norm() < 1e-12);
    }
}
