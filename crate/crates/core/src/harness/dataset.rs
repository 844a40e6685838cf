//! Seeded CFR datasets and their manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::codec::{decode_cfr_from, encode_cfr, encode_profile, read_text, write_text};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tag};
use crate::sim::{generate_cfr, scale_profile, synth_profile, CfrSet, ImpairmentProfile, SourceScene};

pub const DATA_DIR: &str = "data";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROFILE_FILE: &str = "profile.txt";

const DATASET_FORMAT: &str = "aoa-dataset";
const MANIFEST_FORMAT: &str = "aoa-manifest";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub angle_index: usize,
    pub slot: usize,
    pub aoa_deg: f64,
    pub cfr: CfrSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rho: f64,
    pub snr_db: f64,
    pub train_slots: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn train(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.slot < self.train_slots)
    }

    pub fn validation(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.slot >= self.train_slots)
    }

    pub fn counts_per_angle(&self, num_angles: usize) -> Vec<usize> {
        let mut counts = vec![0; num_angles];
        for s in &self.samples {
            counts[s.angle_index] += 1;
        }
        counts
    }
}

pub fn dataset_file_name(rho: f64, snr_db: f64) -> String {
    format!("rho{rho:.2}_snr{snr_db}.txt")
}

/// Unscaled impairment profile of the experiment.
pub fn base_profile(cfg: &ExperimentConfig) -> Result<ImpairmentProfile> {
    let grid = cfg.direction_grid()?;
    synth_profile(&cfg.impairment, &grid, cfg.geometry.num_elements, cfg.waveform.num_subcarriers)
}

/// Per-sample seed. Independent of `rho` and SNR, so every dataset sees the
/// same source phases and noise draws up to scaling.
pub fn sample_seed(root: u64, angle_index: usize, slot: usize) -> u64 {
    derive_seed(root, &[tag("sample"), angle_index as u64, slot as u64])
}

pub fn generate_dataset(cfg: &ExperimentConfig, base: &ImpairmentProfile, rho: f64, snr_db: f64) -> Result<Dataset> {
    let grid = cfg.direction_grid()?;
    let geom = cfg.array_geometry()?;
    let profile = scale_profile(base, rho)?;
    let mut samples = Vec::with_capacity(grid.len() * cfg.slots_per_angle);
    for (l, &aoa) in grid.angles().iter().enumerate() {
        let scene = SourceScene::single(aoa, Some(snr_db));
        for slot in 0..cfg.slots_per_angle {
            let cfr = generate_cfr(&scene, &geom, &cfg.waveform, Some(&profile), sample_seed(cfg.seed, l, slot))?;
            samples.push(Sample {
                angle_index: l,
                slot,
                aoa_deg: aoa,
                cfr,
            });
        }
    }
    Ok(Dataset {
        rho,
        snr_db,
        train_slots: cfg.train_slots(),
        samples,
    })
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    rho: f64,
    snr_db: f64,
    train_slots: usize,
    num_samples: usize,
}

#[derive(Serialize, Deserialize)]
struct SampleLabel {
    angle_index: usize,
    slot: usize,
    aoa_deg: f64,
}

/// Header line, then per sample a label line followed by its CFR record.
pub fn encode_dataset(ds: &Dataset) -> String {
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        version: VERSION,
        rho: ds.rho,
        snr_db: ds.snr_db,
        train_slots: ds.train_slots,
        num_samples: ds.samples.len(),
    };
    let mut out = serde_json::to_string(&header).expect("header serialises");
    out.push('\n');
    for s in &ds.samples {
        let label = SampleLabel {
            angle_index: s.angle_index,
            slot: s.slot,
            aoa_deg: s.aoa_deg,
        };
        out.push_str(&serde_json::to_string(&label).expect("label serialises"));
        out.push('\n');
        out.push_str(&encode_cfr(&s.cfr));
    }
    out
}

pub fn decode_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))?;
    let hdr: DatasetHeader = serde_json::from_str(header).map_err(|e| Error::Parse(format!("dataset header: {e}")))?;
    if hdr.format != DATASET_FORMAT || hdr.version != VERSION {
        return Err(Error::Parse(format!("unsupported dataset format {} v{}", hdr.format, hdr.version)));
    }
    let mut samples = Vec::with_capacity(hdr.num_samples);
    for i in 0..hdr.num_samples {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("dataset ends after {i} of {} samples", hdr.num_samples)))?;
        let label: SampleLabel =
            serde_json::from_str(line).map_err(|e| Error::Parse(format!("sample {i} label: {e}")))?;
        let cfr = decode_cfr_from(&mut lines)?;
        samples.push(Sample {
            angle_index: label.angle_index,
            slot: label.slot,
            aoa_deg: label.aoa_deg,
            cfr,
        });
    }
    if lines.next().is_some() {
        return Err(Error::Parse("trailing data after last sample".into()));
    }
    Ok(Dataset {
        rho: hdr.rho,
        snr_db: hdr.snr_db,
        train_slots: hdr.train_slots,
        samples,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub file: String,
    pub rho: f64,
    pub snr_db: f64,
    /// Set for datasets generated without impairment.
    pub unimpaired: bool,
    pub num_samples: usize,
    pub train_slots: usize,
    pub counts_per_angle: Vec<usize>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config_sha256: String,
    pub profile_sha256: String,
    pub datasets: Vec<DatasetEntry>,
    /// Hash over the config, profile and dataset hashes.
    pub manifest_sha256: String,
}

impl Manifest {
    pub fn entry(&self, rho: f64, snr_db: f64) -> Result<&DatasetEntry> {
        self.datasets
            .iter()
            .find(|d| d.rho == rho && d.snr_db == snr_db)
            .ok_or_else(|| Error::Config(format!("manifest has no dataset for rho {rho}, snr {snr_db} dB")))
    }

    pub fn load(out: &Path) -> Result<Self> {
        let path = out.join(MANIFEST_FILE);
        serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

fn manifest_digest(config_sha: &str, profile_sha: &str, datasets: &[DatasetEntry]) -> String {
    let mut h = Sha256::new();
    h.update(config_sha.as_bytes());
    h.update(profile_sha.as_bytes());
    for d in datasets {
        h.update(d.file.as_bytes());
        h.update(d.sha256.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn dataset_path(out: &Path, rho: f64, snr_db: f64) -> PathBuf {
    out.join(DATA_DIR).join(dataset_file_name(rho, snr_db))
}

/// Generate every dataset the config needs and write them with a manifest.
pub fn write_datasets(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let num_angles = cfg.direction_grid()?.len();
    let base = base_profile(cfg)?;
    let profile_text = encode_profile(&base);
    write_text(&out.join(DATA_DIR).join(PROFILE_FILE), &profile_text)?;
    let mut datasets = Vec::new();
    for (rho, snr) in cfg.dataset_keys() {
        let ds = generate_dataset(cfg, &base, rho, snr)?;
        let text = encode_dataset(&ds);
        let file = dataset_file_name(rho, snr);
        write_text(&dataset_path(out, rho, snr), &text)?;
        datasets.push(DatasetEntry {
            file,
            rho,
            snr_db: snr,
            unimpaired: rho == 0.0,
            num_samples: ds.samples.len(),
            train_slots: ds.train_slots,
            counts_per_angle: ds.counts_per_angle(num_angles),
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    let config_sha256 = sha256_hex(cfg.to_json().as_bytes());
    let profile_sha256 = sha256_hex(profile_text.as_bytes());
    let manifest_sha256 = manifest_digest(&config_sha256, &profile_sha256, &datasets);
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: VERSION,
        seed: cfg.seed,
        config_sha256,
        profile_sha256,
        datasets,
        manifest_sha256,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    text.push('\n');
    write_text(&out.join(MANIFEST_FILE), &text)?;
    Ok(manifest)
}

/// Read one dataset back, checking its hash against the manifest.
pub fn load_dataset(out: &Path, manifest: &Manifest, rho: f64, snr_db: f64) -> Result<Dataset> {
    let entry = manifest.entry(rho, snr_db)?;
    let path = out.join(DATA_DIR).join(&entry.file);
    let text = read_text(&path)?;
    if sha256_hex(text.as_bytes()) != entry.sha256 {
        return Err(Error::Parse(format!("{} does not match its manifest hash", path.display())));
    }
    decode_dataset(&text)
}
