//! Quick invariant checks run by the `selftest` verb.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::coarray::{coarray_dbf, coarray_manifold, projection, vectorize_covariance};
use crate::error::Result;
use crate::estimators::{dbf_spectrum, music_spectrum, pick_aoa, sample_covariance, CovarianceMatrix};
use crate::modl::{batch_gradient, direct_solve, scg_core, CalibratorParams, ModlSample, OneHotLabel, SolverAdjoint, SsrConfig};
use crate::rng::{stream, tag};
use crate::sim::{generate_cfr, steering_vector, ArrayGeometry, DirectionGrid, SourceScene, WaveformConfig, DEFAULT_CARRIER_HZ};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, limit: f64) -> Check {
    Check {
        name,
        passed: value < limit,
        detail: format!("{value:.3e} (limit {limit:.0e})"),
    }
}

fn steering() -> Result<Check> {
    let geom = ArrayGeometry::half_wavelength(4, DEFAULT_CARRIER_HZ)?;
    let grid = DirectionGrid::uniform(-60.0, 60.0, 1.0)?;
    let mut worst: f64 = 0.0;
    for &t in grid.angles() {
        let a = steering_vector(t, &geom)?;
        let b = steering_vector(-t, &geom)?;
        for (x, y) in a.iter().zip(b.iter()) {
            worst = worst.max((x.norm() - 1.0).abs()).max((x.conj() - y).norm());
        }
    }
    Ok(check("steering unit modulus and symmetry", worst, 1e-12))
}

fn music_exact() -> Result<Check> {
    let geom = ArrayGeometry::half_wavelength(4, DEFAULT_CARRIER_HZ)?;
    let grid = DirectionGrid::uniform(-60.0, 60.0, 1.0)?;
    let wave = WaveformConfig::default();
    let mut worst: f64 = 0.0;
    for (l, &t) in grid.angles().iter().enumerate() {
        let cfr = generate_cfr(&SourceScene::single(t, None), &geom, &wave, None, l as u64)?;
        let est = pick_aoa(&music_spectrum(&sample_covariance(&cfr)?, 1, &grid, &geom)?)?;
        worst = worst.max((est - t).abs());
    }
    Ok(check("noiseless MUSIC grid error", worst, 1e-9))
}

fn coarray_identity() -> Result<Check> {
    let geom = ArrayGeometry::half_wavelength(4, DEFAULT_CARRIER_HZ)?;
    let grid = DirectionGrid::uniform(-60.0, 60.0, 1.0)?;
    let ca = coarray_manifold(&grid, &geom);
    let mut rng = stream(0, &[tag("selftest-coarray")]);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x = DMatrix::from_fn(4, 4, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let cov = CovarianceMatrix {
            r: &x + x.adjoint(),
            num_snapshots: 1,
        };
        let a = coarray_dbf(&vectorize_covariance(&cov), &ca)?;
        let b = dbf_spectrum(&cov, &grid, &geom)?;
        for (u, v) in a.values.iter().zip(&b.values) {
            worst = worst.max((u - v).abs());
        }
    }
    Ok(check("coarray DBF equals element DBF", worst, 1e-10))
}

fn cg_direct() -> Result<Check> {
    let geom = ArrayGeometry::half_wavelength(4, DEFAULT_CARRIER_HZ)?;
    let grid = DirectionGrid::uniform(-60.0, 60.0, 1.0)?;
    let p = projection(&coarray_manifold(&grid, &geom)).unit_diagonal();
    let cfg = SsrConfig {
        mu: 0.0,
        ..SsrConfig::default()
    };
    let mut rng = stream(0, &[tag("selftest-cg")]);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let b: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = scg_core(&p.p, &b, &cfg)?.eta;
        let want = direct_solve(&p.p, cfg.lambda, &b)?;
        let num: f64 = x.iter().zip(&want).map(|(a, w)| (a - w).powi(2)).sum::<f64>().sqrt();
        let den: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    Ok(check("CG against dense solve", worst, 1e-8))
}

/// Central differences of the unrolled loss against its analytic gradient,
/// for a handful of first-layer weights.
fn unrolled_gradient() -> Result<Check> {
    let geom = ArrayGeometry::half_wavelength(4, DEFAULT_CARRIER_HZ)?;
    let grid = DirectionGrid::uniform(-15.0, 15.0, 2.0)?;
    let p = projection(&coarray_manifold(&grid, &geom)).unit_diagonal();
    let cfg = SsrConfig {
        mu: 0.0,
        cg_tol: 0.0,
        iterations: 2,
        ..SsrConfig::default()
    };
    let mut rng = stream(0, &[tag("selftest-fd")]);
    let samples: Vec<ModlSample> = (0..3)
        .map(|i| {
            Ok(ModlSample {
                eta0: (0..grid.len()).map(|_| rng.random_range(0.0..1.0)).collect(),
                label: OneHotLabel::new(4 * i + 1, grid.len())?,
            })
        })
        .collect::<Result<_>>()?;
    let batch: Vec<&ModlSample> = samples.iter().collect();
    let adjoint = SolverAdjoint::new(&p.p, cfg.lambda)?;
    let mut params = CalibratorParams::init(&[2, 1], 3, cfg.iterations, 5)?;
    let analytic = batch_gradient(&mut params.clone(), &batch, &p.p, &adjoint, &cfg)?.grads[0].clone();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.convs[0].weight.len() {
        let w0 = params.convs[0].weight[i];
        params.convs[0].weight[i] = w0 + h;
        let up = batch_gradient(&mut params.clone(), &batch, &p.p, &adjoint, &cfg)?.loss;
        params.convs[0].weight[i] = w0 - h;
        let down = batch_gradient(&mut params.clone(), &batch, &p.p, &adjoint, &cfg)?.loss;
        params.convs[0].weight[i] = w0;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - analytic[i]).abs() / analytic[i].abs().max(fd.abs()).max(1e-6));
    }
    Ok(check("unrolled gradient against finite differences", worst, 1e-3))
}

pub fn run_selftest() -> Result<Vec<Check>> {
    Ok(vec![steering()?, music_exact()?, coarray_identity()?, cg_direct()?, unrolled_gradient()?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for c in run_selftest().unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
