use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aoa_core::harness::config::SceneSpec;
use aoa_core::harness::selftest::run_selftest;
use aoa_core::harness::{cmd_evaluate, cmd_generate, cmd_spectrum, cmd_train, parse_estimators, ExperimentConfig};
use aoa_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aoa", version, about = "Angle-of-arrival experiments on simulated CSI")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated estimators: dbf,music,cdbf,scg,moddnn.
    #[arg(long)]
    estimators: Option<String>,
}

#[derive(Subcommand)]
enum Verb {
    /// Simulate datasets and write the manifest.
    Generate(Common),
    /// Train autoencoders and calibrators for every impairment degree.
    Train(Common),
    /// Write RMSE, CDF, boxplot, error and spectrum reports.
    Evaluate(Common),
    /// Dump normalised spectra of one scene.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Source angle in degrees.
        #[arg(long, allow_hyphen_values = true)]
        aoa: Option<f64>,
        /// SNR in dB; noiseless when omitted.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn resolve(c: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(list) = &c.estimators {
        cfg.estimators = parse_estimators(list)?;
    }
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.verb {
        Verb::Generate(c) => {
            let (cfg, out) = resolve(&c)?;
            let m = cmd_generate(&cfg, &out)?;
            for d in &m.datasets {
                println!("{} {} samples {}", d.file, d.num_samples, d.sha256);
            }
            println!("manifest {}", m.manifest_sha256);
        }
        Verb::Train(c) => {
            let (cfg, out) = resolve(&c)?;
            for (rho, log) in cmd_train(&cfg, &out)? {
                let last = |b: &[Vec<f64>]| b.last().map(|e| e.iter().sum::<f64>() / e.len() as f64).unwrap_or(f64::NAN);
                let cal: Vec<String> = log.calibrators.iter().map(|c| format!("{:.4}", last(c))).collect();
                println!("rho {rho}: autoencoder {:.5}, calibrators [{}]", last(&log.autoencoder), cal.join(", "));
            }
        }
        Verb::Evaluate(c) => {
            let (cfg, out) = resolve(&c)?;
            let report = cmd_evaluate(&cfg, &out)?;
            print_rmse("rho", &report.rho_sweep, |s| s.rho, &cfg);
            print_rmse("snr_db", &report.snr_sweep, |s| s.snr_db, &cfg);
            println!("reports written to {}", display(&out));
        }
        Verb::Spectrum { common, aoa, snr } => {
            let (cfg, out) = resolve(&common)?;
            let scene = SceneSpec {
                aoa_deg: aoa.unwrap_or(cfg.spectrum_scene.aoa_deg),
                snr_db: snr.or(if aoa.is_some() { None } else { cfg.spectrum_scene.snr_db }),
            };
            for (e, s) in cmd_spectrum(&cfg, &out, &scene)? {
                let peak = aoa_core::estimators::pick_aoa(&s)?;
                println!("{e}: peak {peak} deg");
            }
        }
        Verb::Selftest => {
            let mut ok = true;
            for c in run_selftest()? {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn print_rmse(
    key: &str,
    splits: &[aoa_core::harness::commands::SplitResult],
    k: impl Fn(&aoa_core::harness::commands::SplitResult) -> f64,
    cfg: &ExperimentConfig,
) {
    for s in splits {
        let cols: Vec<String> = cfg
            .estimators
            .iter()
            .map(|&e| format!("{e} {:.3}", s.rmse(e).unwrap_or(f64::NAN)))
            .collect();
        println!("{key} {}: {}", k(s), cols.join(", "));
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
