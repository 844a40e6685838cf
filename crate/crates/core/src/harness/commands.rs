//! The CLI verbs as library functions.

use std::path::Path;

use super::config::{EstimatorKind, ExperimentConfig, SceneSpec};
use super::dataset::{base_profile, load_dataset, write_datasets, Dataset, Manifest, Sample};
use super::evaluate::{evaluate_samples, EstimatorBank, ErrorRecord};
use super::metrics::*;
use super::pipeline::{model_dir, train_pipeline, TrainedPipeline, TrainingLog};
use crate::codec::write_text;
use crate::error::{Error, Result};
use crate::estimators::SpatialSpectrum;
use crate::rng::{derive_seed, tag};
use crate::sim::{generate_cfr, scale_profile, SourceScene};

pub const LOSS_FILE: &str = "loss.csv";
pub const RMSE_SNR_FILE: &str = "rmse_vs_snr.csv";
pub const RMSE_RHO_FILE: &str = "rmse_vs_rho.csv";
pub const SPECTRA_FILE: &str = "spectra.csv";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const CDF_FILE: &str = "cdf.csv";
pub const BOXPLOT_FILE: &str = "boxplot.csv";
pub const ERRORS_FILE: &str = "errors.csv";

/// Every report file with its header.
pub const REPORT_FILES: [(&str, &[&str]); 6] = [
    (RMSE_SNR_FILE, RMSE_SNR_HEADER),
    (RMSE_RHO_FILE, RMSE_RHO_HEADER),
    (SPECTRA_FILE, SPECTRA_HEADER),
    (CDF_FILE, CDF_HEADER),
    (BOXPLOT_FILE, BOXPLOT_HEADER),
    (ERRORS_FILE, ERRORS_HEADER),
];

pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    write_datasets(cfg, out)
}

fn check_dataset(cfg: &ExperimentConfig, ds: &Dataset) -> Result<()> {
    let grid = cfg.direction_grid()?;
    let m = cfg.geometry.num_elements;
    let k = cfg.waveform.num_subcarriers;
    let bad = ds.samples.iter().any(|s| {
        s.angle_index >= grid.len()
            || grid.angle(s.angle_index) != s.aoa_deg
            || s.cfr.num_elements() != m
            || s.cfr.num_subcarriers() != k
    });
    if bad || ds.train_slots != cfg.train_slots() {
        return Err(Error::Config(format!(
            "dataset rho {} snr {} dB was generated for a different grid or array",
            ds.rho, ds.snr_db
        )));
    }
    Ok(())
}

fn load_checked(cfg: &ExperimentConfig, out: &Path, manifest: &Manifest, rho: f64, snr: f64) -> Result<Dataset> {
    let ds = load_dataset(out, manifest, rho, snr)?;
    check_dataset(cfg, &ds)?;
    Ok(ds)
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn push_loss_rows(table: &mut CsvTable, model: &str, batches: &[Vec<f64>]) -> Result<()> {
    for (epoch, (loss, sd)) in loss_sd_curve(batches)?.into_iter().enumerate() {
        table.push(vec![model.to_string(), epoch.to_string(), fmt(loss), fmt(sd)])?;
    }
    Ok(())
}

/// Train one pipeline per impairment degree of the sweep on its training
/// split at the training SNR.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<(f64, TrainingLog)>> {
    cfg.validate()?;
    let manifest = Manifest::load(out)?;
    for &rho in &cfg.rho_sweep {
        manifest.entry(rho, cfg.train_snr_db)?;
    }
    let mut loss = CsvTable::new(LOSS_HEADER);
    let mut logs = Vec::new();
    for &rho in &cfg.rho_sweep {
        let ds = load_checked(cfg, out, &manifest, rho, cfg.train_snr_db)?;
        let train: Vec<&Sample> = ds.train().collect();
        let (pipeline, log) = train_pipeline(cfg, &train)?;
        pipeline.save(&model_dir(out, rho))?;
        let prefix = format!("rho{rho:.2}");
        push_loss_rows(&mut loss, &format!("{prefix}/autoencoder"), &log.autoencoder)?;
        for (p, batches) in log.calibrators.iter().enumerate() {
            push_loss_rows(&mut loss, &format!("{prefix}/calibrator{p}"), batches)?;
        }
        logs.push((rho, log));
    }
    write_text(&out.join(LOSS_FILE), &loss.to_csv())?;
    Ok(logs)
}

/// Per-estimator errors on one validation split.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub rho: f64,
    pub snr_db: f64,
    pub errors: Vec<(EstimatorKind, Vec<ErrorRecord>)>,
}

impl SplitResult {
    pub fn rmse(&self, e: EstimatorKind) -> Option<f64> {
        let (_, recs) = self.errors.iter().find(|(k, _)| *k == e)?;
        rmse(&recs.iter().map(ErrorRecord::error).collect::<Vec<_>>()).ok()
    }
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    pub rho_sweep: Vec<SplitResult>,
    pub snr_sweep: Vec<SplitResult>,
    /// Split of the main experiment: main `rho` at the training SNR.
    pub main: SplitResult,
    pub spectra: Vec<(EstimatorKind, SpatialSpectrum)>,
    pub rmse_vs_snr: CsvTable,
    pub rmse_vs_rho: CsvTable,
    pub spectra_csv: CsvTable,
    pub cdf: CsvTable,
    pub boxplot: CsvTable,
    pub errors_csv: CsvTable,
}

impl MetricReport {
    pub fn write(&self, out: &Path) -> Result<()> {
        for (file, table) in [
            (RMSE_SNR_FILE, &self.rmse_vs_snr),
            (RMSE_RHO_FILE, &self.rmse_vs_rho),
            (SPECTRA_FILE, &self.spectra_csv),
            (CDF_FILE, &self.cdf),
            (BOXPLOT_FILE, &self.boxplot),
            (ERRORS_FILE, &self.errors_csv),
        ] {
            write_text(&out.join(file), &table.to_csv())?;
        }
        Ok(())
    }
}

fn load_pipelines(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<(f64, Option<TrainedPipeline>)>> {
    cfg.rho_sweep
        .iter()
        .map(|&rho| {
            let p = if cfg.wants(EstimatorKind::Moddnn) {
                Some(TrainedPipeline::load(cfg, &model_dir(out, rho))?)
            } else {
                None
            };
            Ok((rho, p))
        })
        .collect()
}

fn pipeline_for(pipelines: &[(f64, Option<TrainedPipeline>)], rho: f64) -> Option<&TrainedPipeline> {
    pipelines.iter().find(|(r, _)| *r == rho).and_then(|(_, p)| p.as_ref())
}

fn evaluate_split(cfg: &ExperimentConfig, ds: &Dataset, pipeline: Option<&TrainedPipeline>) -> Result<SplitResult> {
    let bank = EstimatorBank::new(cfg, pipeline)?;
    let val: Vec<&Sample> = ds.validation().collect();
    let errs = evaluate_samples(&bank, &cfg.estimators, &val)?;
    Ok(SplitResult {
        rho: ds.rho,
        snr_db: ds.snr_db,
        errors: cfg.estimators.iter().copied().zip(errs).collect(),
    })
}

/// Unit-max spectra of every selected estimator on one scene.
pub fn scene_spectra(
    cfg: &ExperimentConfig,
    scene: &SceneSpec,
    pipeline: Option<&TrainedPipeline>,
) -> Result<Vec<(EstimatorKind, SpatialSpectrum)>> {
    let grid = cfg.direction_grid()?;
    if !grid.contains(scene.aoa_deg) {
        return Err(Error::Config(format!("scene angle {} is not on the grid", scene.aoa_deg)));
    }
    let profile = scale_profile(&base_profile(cfg)?, cfg.rho)?;
    let cfr = generate_cfr(
        &SourceScene::single(scene.aoa_deg, scene.snr_db),
        &cfg.array_geometry()?,
        &cfg.waveform,
        Some(&profile),
        derive_seed(cfg.seed, &[tag("spectrum")]),
    )?;
    let bank = EstimatorBank::new(cfg, pipeline)?;
    cfg.estimators
        .iter()
        .map(|&e| Ok((e, bank.spectrum(e, &cfr)?.normalized())))
        .collect()
}

fn spectra_table(spectra: &[(EstimatorKind, SpatialSpectrum)]) -> Result<CsvTable> {
    let mut t = CsvTable::new(SPECTRA_HEADER);
    for (e, s) in spectra {
        for (a, v) in s.grid.angles().iter().zip(&s.values) {
            t.push(vec![fmt(*a), e.to_string(), fmt(*v)])?;
        }
    }
    Ok(t)
}

fn rmse_table(header: &'static [&'static str], splits: &[SplitResult], key: impl Fn(&SplitResult) -> f64) -> Result<CsvTable> {
    let mut t = CsvTable::new(header);
    for s in splits {
        for (e, recs) in &s.errors {
            let r = rmse(&recs.iter().map(ErrorRecord::error).collect::<Vec<_>>())?;
            t.push(vec![fmt(key(s)), e.to_string(), fmt(r)])?;
        }
    }
    Ok(t)
}

pub fn build_report(
    cfg: &ExperimentConfig,
    rho_sweep: Vec<SplitResult>,
    snr_sweep: Vec<SplitResult>,
    spectra: Vec<(EstimatorKind, SpatialSpectrum)>,
) -> Result<MetricReport> {
    let main = rho_sweep
        .iter()
        .find(|s| s.rho == cfg.rho && s.snr_db == cfg.train_snr_db)
        .cloned()
        .ok_or_else(|| Error::Config("main split missing from the impairment sweep".into()))?;
    let partition = crate::beamformer::SubregionPartition::uniform(&cfg.direction_grid()?, cfg.num_subregions)?;

    let mut cdf = CsvTable::new(CDF_HEADER);
    let mut boxplot = CsvTable::new(BOXPLOT_HEADER);
    let mut errors_csv = CsvTable::new(ERRORS_HEADER);
    for (e, recs) in &main.errors {
        let errs: Vec<f64> = recs.iter().map(ErrorRecord::error).collect();
        for (pct, v) in cdf_points(&errs)? {
            cdf.push(vec![e.to_string(), pct.to_string(), fmt(v)])?;
        }
        for r in recs {
            errors_csv.push(vec![
                e.to_string(),
                fmt(r.aoa_deg),
                r.slot.to_string(),
                fmt(r.estimate_deg),
                fmt(r.error()),
            ])?;
        }
    }
    for p in 0..partition.num_subregions() {
        for (e, recs) in &main.errors {
            let errs: Vec<f64> = recs
                .iter()
                .filter(|r| partition.region_of_index(r.angle_index) == p)
                .map(ErrorRecord::error)
                .collect();
            if errs.is_empty() {
                continue;
            }
            let b = box_summary(&errs)?;
            boxplot.push(vec![
                p.to_string(),
                e.to_string(),
                fmt(b.q1),
                fmt(b.median),
                fmt(b.q3),
                fmt(b.whisker_lo),
                fmt(b.whisker_hi),
            ])?;
        }
    }
    Ok(MetricReport {
        rmse_vs_snr: rmse_table(RMSE_SNR_HEADER, &snr_sweep, |s| s.snr_db)?,
        rmse_vs_rho: rmse_table(RMSE_RHO_HEADER, &rho_sweep, |s| s.rho)?,
        spectra_csv: spectra_table(&spectra)?,
        cdf,
        boxplot,
        errors_csv,
        rho_sweep,
        snr_sweep,
        main,
        spectra,
    })
}

/// Evaluate every selected estimator on the validation splits and write the
/// report files. Checkpoints and datasets are checked before any estimate.
pub fn cmd_evaluate(cfg: &ExperimentConfig, out: &Path) -> Result<MetricReport> {
    cfg.validate()?;
    let manifest = Manifest::load(out)?;
    for (rho, snr) in cfg.dataset_keys() {
        manifest.entry(rho, snr)?;
    }
    let pipelines = load_pipelines(cfg, out)?;

    let mut rho_sweep = Vec::new();
    for &rho in &cfg.rho_sweep {
        let ds = load_checked(cfg, out, &manifest, rho, cfg.train_snr_db)?;
        rho_sweep.push(evaluate_split(cfg, &ds, pipeline_for(&pipelines, rho))?);
    }
    let mut snr_sweep = Vec::new();
    for &snr in &cfg.snr_sweep_db {
        let cached = rho_sweep.iter().find(|s| s.rho == cfg.rho && s.snr_db == snr).cloned();
        let split = match cached {
            Some(s) => s,
            None => {
                let ds = load_checked(cfg, out, &manifest, cfg.rho, snr)?;
                evaluate_split(cfg, &ds, pipeline_for(&pipelines, cfg.rho))?
            }
        };
        snr_sweep.push(split);
    }
    let spectra = scene_spectra(cfg, &cfg.spectrum_scene, pipeline_for(&pipelines, cfg.rho))?;
    let report = build_report(cfg, rho_sweep, snr_sweep, spectra)?;
    report.write(out)?;
    Ok(report)
}

/// Spectra of one scene, written as `spectrum.csv`.
pub fn cmd_spectrum(cfg: &ExperimentConfig, out: &Path, scene: &SceneSpec) -> Result<Vec<(EstimatorKind, SpatialSpectrum)>> {
    cfg.validate()?;
    let pipeline = if cfg.wants(EstimatorKind::Moddnn) {
        Some(TrainedPipeline::load(cfg, &model_dir(out, cfg.rho))?)
    } else {
        None
    };
    let spectra = scene_spectra(cfg, scene, pipeline.as_ref())?;
    write_text(&out.join(SPECTRUM_FILE), &spectra_table(&spectra)?.to_csv())?;
    Ok(spectra)
}
