//! Estimator bank and per-sample evaluation.

use rayon::prelude::*;

use super::config::{EstimatorKind, ExperimentConfig};
use super::dataset::Sample;
use super::pipeline::TrainedPipeline;
use crate::coarray::{coarray_dbf, coarray_manifold, projection, vectorize_covariance, CoarrayManifold, ProjectionMatrix};
use crate::error::{Error, Result};
use crate::estimators::{dbf_spectrum, music_spectrum, pick_aoa, sample_covariance, SpatialSpectrum};
use crate::modl::{scg_solve, SsrConfig};
use crate::sim::{ArrayGeometry, CfrSet, DirectionGrid};

/// Everything needed to run the selected estimators on one CFR set.
pub struct EstimatorBank<'a> {
    pub grid: DirectionGrid,
    pub geometry: ArrayGeometry,
    pub manifold: CoarrayManifold,
    pub projection: ProjectionMatrix,
    pub scg: SsrConfig,
    pub pipeline: Option<&'a TrainedPipeline>,
}

impl<'a> EstimatorBank<'a> {
    pub fn new(cfg: &ExperimentConfig, pipeline: Option<&'a TrainedPipeline>) -> Result<Self> {
        let grid = cfg.direction_grid()?;
        let geometry = cfg.array_geometry()?;
        let manifold = coarray_manifold(&grid, &geometry);
        let projection = projection(&manifold).unit_diagonal();
        Ok(Self {
            grid,
            geometry,
            manifold,
            projection,
            scg: cfg.scg_baseline.clone(),
            pipeline,
        })
    }

    fn pipeline(&self) -> Result<&TrainedPipeline> {
        self.pipeline
            .ok_or_else(|| Error::Config("moddnn requested without trained models".into()))
    }

    /// Full-grid spectrum of one estimator; MoD-DNN is zero outside the
    /// selected subregion.
    pub fn spectrum(&self, kind: EstimatorKind, cfr: &CfrSet) -> Result<SpatialSpectrum> {
        let cov = sample_covariance(cfr)?;
        match kind {
            EstimatorKind::Dbf => dbf_spectrum(&cov, &self.grid, &self.geometry),
            EstimatorKind::Music => music_spectrum(&cov, 1, &self.grid, &self.geometry),
            EstimatorKind::Cdbf => coarray_dbf(&vectorize_covariance(&cov), &self.manifold),
            EstimatorKind::Scg => {
                let eta0 = coarray_dbf(&vectorize_covariance(&cov), &self.manifold)?.normalized();
                let zero = SpatialSpectrum::new(vec![0.0; self.grid.len()], self.grid.clone())?;
                scg_solve(&eta0, &zero, &self.projection, &self.scg).map(|(s, _)| s)
            }
            EstimatorKind::Moddnn => {
                let p = self.pipeline()?;
                let est = p.estimate(cfr)?;
                p.embed(est.region, &est.spectrum)
            }
        }
    }

    pub fn estimate(&self, kind: EstimatorKind, cfr: &CfrSet) -> Result<f64> {
        match kind {
            EstimatorKind::Moddnn => Ok(self.pipeline()?.estimate(cfr)?.aoa_deg),
            _ => pick_aoa(&self.spectrum(kind, cfr)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub angle_index: usize,
    pub aoa_deg: f64,
    pub slot: usize,
    pub estimate_deg: f64,
}

impl ErrorRecord {
    pub fn error(&self) -> f64 {
        self.estimate_deg - self.aoa_deg
    }
}

/// Errors of each estimator over the samples, in estimator order.
pub fn evaluate_samples(
    bank: &EstimatorBank<'_>,
    estimators: &[EstimatorKind],
    samples: &[&Sample],
) -> Result<Vec<Vec<ErrorRecord>>> {
    let per_sample: Vec<Vec<ErrorRecord>> = samples
        .par_iter()
        .map(|s| {
            estimators
                .iter()
                .map(|&e| {
                    Ok(ErrorRecord {
                        angle_index: s.angle_index,
                        aoa_deg: s.aoa_deg,
                        slot: s.slot,
                        estimate_deg: bank.estimate(e, &s.cfr)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..estimators.len())
        .map(|j| per_sample.iter().map(|r| r[j]).collect())
        .collect())
}
