use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::beamformer::AeHyper;
use crate::codec::read_text;
use crate::error::{Error, Result};
use crate::modl::{ModlHyper, SsrConfig};
use crate::sim::{ArrayGeometry, DirectionGrid, SynthParams, WaveformConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Dbf,
    Music,
    Cdbf,
    Scg,
    Moddnn,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Dbf,
        EstimatorKind::Music,
        EstimatorKind::Cdbf,
        EstimatorKind::Scg,
        EstimatorKind::Moddnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Dbf => "dbf",
            EstimatorKind::Music => "music",
            EstimatorKind::Cdbf => "cdbf",
            EstimatorKind::Scg => "scg",
            EstimatorKind::Moddnn => "moddnn",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown estimator '{s}' (known: dbf, music, cdbf, scg, moddnn)")))
    }
}

/// Parse a comma-separated estimator list.
pub fn parse_estimators(list: &str) -> Result<Vec<EstimatorKind>> {
    let mut out: Vec<EstimatorKind> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Config("estimator list is empty".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub num_elements: usize,
    pub carrier_hz: f64,
    /// Element spacing in wavelengths.
    pub spacing_wavelengths: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub aoa_deg: f64,
    /// `None` for a noiseless scene.
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub grid: GridSpec,
    pub geometry: GeometrySpec,
    pub waveform: WaveformConfig,
    pub impairment: SynthParams,
    /// Impairment degree of the main experiment.
    pub rho: f64,
    pub rho_sweep: Vec<f64>,
    pub train_snr_db: f64,
    pub snr_sweep_db: Vec<f64>,
    pub slots_per_angle: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub num_subregions: usize,
    /// Grid points added on both sides of each subregion for its calibrator.
    pub region_margin: usize,
    pub estimators: Vec<EstimatorKind>,
    pub spectrum_scene: SceneSpec,
    pub autoencoder: AeHyper,
    pub modl: ModlHyper,
    pub ssr: SsrConfig,
    /// Solver settings of the untrained SCG baseline.
    pub scg_baseline: SsrConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "desk-scale".into(),
            grid: GridSpec {
                start_deg: -60.0,
                stop_deg: 60.0,
                step_deg: 1.0,
            },
            geometry: GeometrySpec {
                num_elements: 4,
                carrier_hz: crate::sim::DEFAULT_CARRIER_HZ,
                spacing_wavelengths: 0.5,
            },
            waveform: WaveformConfig::default(),
            impairment: SynthParams::default(),
            rho: 1.0,
            rho_sweep: vec![0.0, 0.5, 1.0],
            train_snr_db: 10.0,
            snr_sweep_db: vec![0.0, 10.0, 20.0],
            slots_per_angle: 50,
            train_fraction: 0.8,
            validation_fraction: 0.2,
            num_subregions: 4,
            region_margin: 4,
            estimators: EstimatorKind::ALL.to_vec(),
            spectrum_scene: SceneSpec {
                aoa_deg: -15.0,
                snr_db: None,
            },
            autoencoder: AeHyper::default(),
            modl: ModlHyper {
                final_gain_init: 0.1,
                ..ModlHyper::default()
            },
            ssr: SsrConfig {
                mu: 0.0,
                ..SsrConfig::default()
            },
            scg_baseline: SsrConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 2024,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if (self.train_fraction + self.validation_fraction - 1.0).abs() > 1e-9
            || !(0.0..=1.0).contains(&self.train_fraction)
        {
            return bad(format!(
                "train/validation fractions {} + {} must sum to 1",
                self.train_fraction, self.validation_fraction
            ));
        }
        if self.slots_per_angle == 0 || self.train_slots() == 0 || self.train_slots() >= self.slots_per_angle {
            return bad(format!(
                "{} slots with train fraction {} leave an empty split",
                self.slots_per_angle, self.train_fraction
            ));
        }
        for &r in self.rho_sweep.iter().chain(std::iter::once(&self.rho)) {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("impairment degree {r} outside [0, 1]"));
            }
        }
        if !self.rho_sweep.contains(&self.rho) {
            return bad(format!("main rho {} must be part of rho_sweep", self.rho));
        }
        if self.estimators.is_empty() {
            return bad("estimator list is empty".into());
        }
        if self.num_subregions == 0 {
            return bad("num_subregions must be positive".into());
        }
        let grid = self.direction_grid()?;
        if !grid.contains(self.spectrum_scene.aoa_deg) {
            return bad(format!("spectrum scene aoa {} is not on the grid", self.spectrum_scene.aoa_deg));
        }
        if self.num_subregions > grid.len() {
            return bad("more subregions than grid points".into());
        }
        self.array_geometry()?;
        self.waveform.validate()?;
        self.ssr.validate()?;
        self.scg_baseline.validate()?;
        Ok(())
    }

    pub fn train_slots(&self) -> usize {
        (self.slots_per_angle as f64 * self.train_fraction).round() as usize
    }

    pub fn direction_grid(&self) -> Result<DirectionGrid> {
        DirectionGrid::uniform(self.grid.start_deg, self.grid.stop_deg, self.grid.step_deg)
    }

    pub fn array_geometry(&self) -> Result<ArrayGeometry> {
        let g = &self.geometry;
        let lambda = crate::sim::SPEED_OF_LIGHT / g.carrier_hz;
        ArrayGeometry::new(g.num_elements, g.spacing_wavelengths * lambda, g.carrier_hz)
    }

    /// Every `(rho, snr)` pair that needs a dataset.
    pub fn dataset_keys(&self) -> Vec<(f64, f64)> {
        let mut keys: Vec<(f64, f64)> = self.rho_sweep.iter().map(|&r| (r, self.train_snr_db)).collect();
        for &s in &self.snr_sweep_db {
            if !keys.contains(&(self.rho, s)) {
                keys.push((self.rho, s));
            }
        }
        keys
    }

    pub fn wants(&self, e: EstimatorKind) -> bool {
        self.estimators.contains(&e)
    }
}
