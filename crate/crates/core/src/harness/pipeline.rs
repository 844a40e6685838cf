//! Autoencoder gating followed by per-subregion MoDL reconstruction.

use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::dataset::Sample;
use crate::beamformer::{beamform, train_autoencoder, AeHyper, AeSample, AutoencoderParams, SubregionPartition};
use crate::codec::{read_text, write_text};
use crate::coarray::{coarray_dbf, coarray_manifold, projection, vectorize_covariance, CoarrayManifold};
use crate::error::{Error, Result};
use crate::estimators::{covariance_from_snapshots, SpatialSpectrum};
use crate::modl::{estimate_aoa, train_modl, ModlHyper, ModlModel, ModlSample, OneHotLabel};
use crate::nn::Checkpoint;
use crate::rng::{derive_seed, tag};
use crate::sim::{ArrayGeometry, CfrSet, DirectionGrid};

pub const MODEL_DIR: &str = "models";

#[derive(Debug, Clone)]
pub struct RegionModel {
    /// Grid indices covered by the calibrator, margin included.
    pub range: Range<usize>,
    pub manifold: CoarrayManifold,
    pub model: ModlModel,
}

#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub geometry: ArrayGeometry,
    pub grid: DirectionGrid,
    pub partition: SubregionPartition,
    pub autoencoder: AutoencoderParams,
    pub regions: Vec<RegionModel>,
}

#[derive(Debug, Clone)]
pub struct PipelineEstimate {
    pub region: usize,
    /// Unit-max coarray DBF spectrum of the gated block on the region grid.
    pub eta0: SpatialSpectrum,
    pub spectrum: SpatialSpectrum,
    pub aoa_deg: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingLog {
    pub autoencoder: Vec<Vec<f64>>,
    /// Per subregion, mini-batch losses grouped by epoch.
    pub calibrators: Vec<Vec<Vec<f64>>>,
}

/// Unit-max coarray DBF spectrum of an MMV block.
pub fn block_eta0(block: &DMatrix<Complex64>, manifold: &CoarrayManifold) -> Result<SpatialSpectrum> {
    let cov = covariance_from_snapshots(block)?;
    Ok(coarray_dbf(&vectorize_covariance(&cov), manifold)?.normalized())
}

fn region_grid(grid: &DirectionGrid, range: &Range<usize>) -> Result<DirectionGrid> {
    grid.slice(range.start, range.end)
}

fn ae_hyper(cfg: &ExperimentConfig) -> AeHyper {
    AeHyper {
        seed: derive_seed(cfg.seed, &[tag("autoencoder"), cfg.autoencoder.seed]),
        ..cfg.autoencoder.clone()
    }
}

fn modl_hyper(cfg: &ExperimentConfig) -> ModlHyper {
    ModlHyper {
        seed: derive_seed(cfg.seed, &[tag("calibrator"), cfg.modl.seed]),
        ..cfg.modl.clone()
    }
}

pub fn train_pipeline(cfg: &ExperimentConfig, train: &[&Sample]) -> Result<(TrainedPipeline, TrainingLog)> {
    cfg.validate()?;
    let grid = cfg.direction_grid()?;
    let geometry = cfg.array_geometry()?;
    let partition = SubregionPartition::uniform(&grid, cfg.num_subregions)?;

    let ae_samples: Vec<AeSample> = train
        .iter()
        .map(|s| AeSample::new(&s.cfr, s.aoa_deg, &partition))
        .collect::<Result<_>>()?;
    let ae = train_autoencoder(&ae_samples, cfg.geometry.num_elements, cfg.num_subregions, &ae_hyper(cfg))?;
    drop(ae_samples);

    let outputs: Vec<_> = train
        .par_iter()
        .map(|s| beamform(&s.cfr, &ae.params))
        .collect::<Result<_>>()?;

    let hyper = modl_hyper(cfg);
    let mut regions = Vec::with_capacity(cfg.num_subregions);
    let mut calibrators = Vec::with_capacity(cfg.num_subregions);
    for p in 0..cfg.num_subregions {
        let range = partition.extended_range(p, cfg.region_margin);
        let rg = region_grid(&grid, &range)?;
        let manifold = coarray_manifold(&rg, &geometry);
        let proj = projection(&manifold).unit_diagonal();
        let samples: Vec<ModlSample> = train
            .par_iter()
            .zip(&outputs)
            .filter(|(s, _)| range.contains(&s.angle_index))
            .map(|(s, out)| {
                Ok(ModlSample {
                    eta0: block_eta0(&out.blocks[p], &manifold)?.values,
                    label: OneHotLabel::new(s.angle_index - range.start, rg.len())?,
                })
            })
            .collect::<Result<_>>()?;
        if samples.is_empty() {
            return Err(Error::Config(format!("subregion {p} has no training samples")));
        }
        let trained = train_modl(&samples, &proj, &cfg.ssr, &hyper)?;
        calibrators.push(trained.batch_losses);
        regions.push(RegionModel {
            range,
            manifold,
            model: ModlModel {
                projection: proj,
                params: trained.params,
                cfg: cfg.ssr.clone(),
                hyper: hyper.clone(),
                subregion: p,
            },
        });
    }
    Ok((
        TrainedPipeline {
            geometry,
            grid,
            partition,
            autoencoder: ae.params,
            regions,
        },
        TrainingLog {
            autoencoder: ae.batch_losses,
            calibrators,
        },
    ))
}

impl TrainedPipeline {
    pub fn estimate(&self, cfr: &CfrSet) -> Result<PipelineEstimate> {
        let out = beamform(cfr, &self.autoencoder)?;
        let region = out.selected();
        let rm = &self.regions[region];
        let eta0 = block_eta0(&out.blocks[region], &rm.manifold)?;
        let spectrum = rm.model.infer(&eta0)?;
        let aoa_deg = estimate_aoa(&spectrum)?;
        Ok(PipelineEstimate {
            region,
            eta0,
            spectrum,
            aoa_deg,
        })
    }

    /// Spread a region spectrum over the full grid, zero outside the region.
    pub fn embed(&self, region: usize, spec: &SpatialSpectrum) -> Result<SpatialSpectrum> {
        let range = &self.regions[region].range;
        let mut values = vec![0.0; self.grid.len()];
        values[range.clone()].copy_from_slice(&spec.values);
        SpatialSpectrum::new(values, self.grid.clone())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join("autoencoder.json"), &self.autoencoder.to_checkpoint(&self.partition).to_json())?;
        for (p, rm) in self.regions.iter().enumerate() {
            write_text(&dir.join(format!("calibrator{p}.json")), &rm.model.to_checkpoint().to_json())?;
        }
        Ok(())
    }

    /// Restore a pipeline, rejecting checkpoints whose grid or shape
    /// disagrees with the config.
    pub fn load(cfg: &ExperimentConfig, dir: &Path) -> Result<Self> {
        let grid = cfg.direction_grid()?;
        let geometry = cfg.array_geometry()?;
        let partition = SubregionPartition::uniform(&grid, cfg.num_subregions)?;
        let ae_ck = Checkpoint::from_json(&read_text(&dir.join("autoencoder.json"))?, "autoencoder")?;
        let (autoencoder, stored) = AutoencoderParams::from_checkpoint(&ae_ck)?;
        if stored != partition {
            return Err(Error::Config(format!(
                "{}: autoencoder partition does not match the configured grid",
                dir.display()
            )));
        }
        if autoencoder.num_elements != cfg.geometry.num_elements
            || autoencoder.num_subcarriers != cfg.waveform.num_subcarriers
        {
            return Err(Error::Config(format!(
                "{}: autoencoder expects {}x{} CFRs",
                dir.display(),
                autoencoder.num_elements,
                autoencoder.num_subcarriers
            )));
        }
        let mut cks = Vec::with_capacity(cfg.num_subregions);
        for p in 0..cfg.num_subregions {
            let path = dir.join(format!("calibrator{p}.json"));
            let ck = Checkpoint::from_json(&read_text(&path)?, "calibrator")?;
            let range = partition.extended_range(p, cfg.region_margin);
            let want = region_grid(&grid, &range)?;
            let stored: Vec<f64> = serde_json::from_value(ck.header["grid"].clone())
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            if stored.as_slice() != want.angles() {
                return Err(Error::Config(format!(
                    "{}: calibrator grid does not match the configured grid",
                    path.display()
                )));
            }
            cks.push((ck, range, want));
        }
        let regions = cks
            .into_iter()
            .map(|(ck, range, rg)| {
                let manifold = coarray_manifold(&rg, &geometry);
                let model = ModlModel::from_checkpoint(&ck, projection(&manifold).unit_diagonal())?;
                Ok(RegionModel { range, manifold, model })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            geometry,
            grid,
            partition,
            autoencoder,
            regions,
        })
    }
}

pub fn model_dir(out: &Path, rho: f64) -> PathBuf {
    out.join(MODEL_DIR).join(format!("rho{rho:.2}"))
}
