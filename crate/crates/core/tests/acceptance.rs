//! Acceptance criteria 1-10. Each test writes one PASS/FAIL line to stderr.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use aoa_core::beamformer::SubregionPartition;
use aoa_core::coarray::{coarray_dbf, coarray_manifold, hpbw, projection, vectorize_covariance};
use aoa_core::estimators::{music_spectrum, pick_aoa, sample_covariance, CovarianceMatrix};
use aoa_core::harness::commands::{cmd_evaluate, cmd_generate, cmd_spectrum, cmd_train, scene_spectra, REPORT_FILES};
use aoa_core::harness::config::{EstimatorKind, ExperimentConfig, GridSpec, SceneSpec};
use aoa_core::harness::dataset::{base_profile, generate_dataset, Dataset, Sample};
use aoa_core::harness::evaluate::{evaluate_samples, EstimatorBank};
use aoa_core::harness::metrics::{validate_csv, LOSS_HEADER};
use aoa_core::harness::pipeline::{train_pipeline, TrainedPipeline};
use aoa_core::modl::*;
use aoa_core::nn::*;
use aoa_core::rng::stream;
use aoa_core::sim::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("CRITERION {n:>2}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn note(text: &str) {
    let _ = std::io::stderr().write_all(format!("             {text}\n").as_bytes());
}

fn desk_grid() -> DirectionGrid {
    DirectionGrid::uniform(-60.0, 60.0, 1.0).unwrap()
}

fn half_wave() -> ArrayGeometry {
    ArrayGeometry::half_wavelength(4, DEFAULT_CARRIER_HZ).unwrap()
}

/// Independent steering oracle for d = lambda/2.
fn steering_oracle(theta_deg: f64, m: usize) -> Vec<Complex64> {
    let s = theta_deg.to_radians().sin();
    (0..m).map(|i| Complex64::from_polar(1.0, std::f64::consts::PI * i as f64 * s)).collect()
}

#[test]
fn criterion_01_steering_structure() {
    let t0 = Instant::now();
    let grid = desk_grid();
    let a = manifold(&grid, &half_wave());
    let mut modulus: f64 = 0.0;
    let mut symmetry: f64 = 0.0;
    let mut oracle: f64 = 0.0;
    for l in 0..grid.len() {
        let want = steering_oracle(grid.angle(l), 4);
        let mirror = grid.len() - 1 - l;
        for m in 0..4 {
            modulus = modulus.max((a[(m, l)].norm() - 1.0).abs());
            symmetry = symmetry.max((a[(m, mirror)] - a[(m, l)].conj()).norm());
            oracle = oracle.max((a[(m, l)] - want[m]).norm());
        }
    }
    let broadside = steering_vector(0.0, &half_wave()).unwrap();
    let ones = broadside.iter().all(|z| *z == Complex64::new(1.0, 0.0));
    let dt = t0.elapsed();
    let pass = modulus < 1e-12 && symmetry < 1e-12 && oracle < 1e-12 && ones && dt < Duration::from_secs(1);
    report(
        1,
        pass,
        &format!("modulus dev {modulus:.1e}, symmetry dev {symmetry:.1e}, oracle dev {oracle:.1e}, a(0)=1 {ones}, {dt:.2?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_music_exactness() {
    let t0 = Instant::now();
    let grid = desk_grid();
    let geom = half_wave();
    let mut misses = Vec::new();
    for (l, &theta) in grid.angles().iter().enumerate() {
        let cfr = generate_cfr(&SourceScene::single(theta, None), &geom, &WaveformConfig::default(), None, 1000 + l as u64).unwrap();
        let est = pick_aoa(&music_spectrum(&sample_covariance(&cfr).unwrap(), 1, &grid, &geom).unwrap()).unwrap();
        if est != theta {
            misses.push((theta, est));
        }
    }
    let dt = t0.elapsed();
    let pass = misses.is_empty() && dt < Duration::from_secs(10);
    report(2, pass, &format!("{} of {} angles off-grid-exact, {dt:.2?}", misses.len(), grid.len()));
    assert!(pass, "{misses:?}");
}

#[test]
fn criterion_03_coarray_identity() {
    let t0 = Instant::now();
    let grid = desk_grid();
    let ca = coarray_manifold(&grid, &half_wave());
    let oracle: Vec<Vec<Complex64>> = grid.angles().iter().map(|&t| steering_oracle(t, 4)).collect();
    let mut rng = stream(3, &[0]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = DMatrix::from_fn(4, 4, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let r = &x + x.adjoint();
        let cov = CovarianceMatrix { r: r.clone(), num_snapshots: 1 };
        let spec = coarray_dbf(&vectorize_covariance(&cov), &ca).unwrap();
        for (l, a) in oracle.iter().enumerate() {
            let mut q = Complex64::new(0.0, 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    q += a[i].conj() * r[(i, j)] * a[j];
                }
            }
            worst = worst.max((spec.values[l] - q.re).abs()).max(q.im.abs());
        }
    }
    let dt = t0.elapsed();
    let pass = worst < 1e-10 && dt < Duration::from_secs(5);
    report(3, pass, &format!("max |A~^H vec(R) - a^H R a| = {worst:.2e} over 100 matrices, {dt:.2?}"));
    assert!(pass);
}

#[test]
fn criterion_04_cg_matches_dense_solve() {
    let t0 = Instant::now();
    let cfg = SsrConfig { mu: 0.0, ..SsrConfig::default() };
    let mut rng = stream(4, &[0]);
    let mut instances: Vec<DMatrix<f64>> = Vec::new();
    for step in [6.0, 4.0, 3.0, 2.0, 1.5, 1.0, 0.8, 0.6, 0.5, 0.4] {
        let grid = DirectionGrid::uniform(-60.0, 60.0, step).unwrap();
        let p = projection(&coarray_manifold(&grid, &half_wave())).unit_diagonal();
        for _ in 0..5 {
            instances.push(p.p.clone());
        }
    }
    while instances.len() < 100 {
        let l = rng.random_range(10..=301);
        let rank = rng.random_range(1..=8);
        let x = DMatrix::from_fn(l, rank, |_, _| rng.random_range(-1.0..1.0));
        instances.push(&x * x.transpose());
    }
    let (mut worst_res, mut worst_sol, mut max_l): (f64, f64, usize) = (0.0, 0.0, 0);
    for p in &instances {
        let l = p.nrows();
        max_l = max_l.max(l);
        let b: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eta = scg_core(p, &b, &cfg).unwrap().eta;
        let a = p + DMatrix::identity(l, l) * cfg.lambda;
        let bb = DVector::from_column_slice(&b);
        let e = DVector::from_column_slice(&eta);
        let direct = a.clone().lu().solve(&bb).unwrap();
        worst_res = worst_res.max((&a * &e - &bb).norm() / bb.norm());
        worst_sol = worst_sol.max((&e - &direct).norm() / direct.norm());
    }
    let dt = t0.elapsed();
    let pass = worst_res < 1e-8 && worst_sol < 1e-8 && max_l <= 301 && dt < Duration::from_secs(30);
    report(
        4,
        pass,
        &format!("100 instances, L <= {max_l}: residual {worst_res:.1e}, distance to LU solution {worst_sol:.1e}, {dt:.2?}"),
    );
    assert!(pass);
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let num: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let den: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

fn central(mut f: impl FnMut(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of `x -> <r, op(x)>` by central differences.
fn fd_vec(x: &[f64], h: f64, mut loss: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            central(
                |d| {
                    let mut xx = x.to_vec();
                    xx[i] += d;
                    loss(&xx)
                },
                h,
            )
        })
        .collect()
}

fn nn_op_errors() -> Vec<(&'static str, f64)> {
    let mut rng = stream(5, &[0]);
    let mut rand_vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let h = 1e-6;
    let mut out = Vec::new();

    let (b, ci, co, l, w) = (2, 2, 3, 9, 4);
    let mut conv = Conv1d::zeros(ci, co, w);
    conv.weight = rand_vec(ci * co * w);
    let x = Tensor::from_vec(b, ci, l, rand_vec(b * ci * l)).unwrap();
    let r = rand_vec(b * co * l);
    let (gx, gw) = conv.backward(&x, &Tensor::from_vec(b, co, l, r.clone()).unwrap()).unwrap();
    let nx = fd_vec(&x.data, h, |v| dot(&r, &conv.forward(&Tensor::from_vec(b, ci, l, v.to_vec()).unwrap()).unwrap().data));
    let nw = fd_vec(&conv.weight, h, |v| {
        let mut c = conv.clone();
        c.weight = v.to_vec();
        dot(&r, &c.forward(&x).unwrap().data)
    });
    out.push(("conv1d input", rel_err(&gx.data, &nx)));
    out.push(("conv1d weight", rel_err(&gw, &nw)));

    let mut bn = BatchNorm1d::new(ci, 1);
    bn.gamma = rand_vec(ci);
    bn.beta = rand_vec(ci);
    let rb = rand_vec(b * ci * l);
    let (_, cache) = bn.clone().forward_train(&x, 0).unwrap();
    let (gx, gg, gb) = bn.backward(&cache, &Tensor::from_vec(b, ci, l, rb.clone()).unwrap()).unwrap();
    let bn_loss = |bn: &BatchNorm1d, v: &[f64]| {
        let (y, _) = bn.clone().forward_train(&Tensor::from_vec(b, ci, l, v.to_vec()).unwrap(), 0).unwrap();
        dot(&rb, &y.data)
    };
    out.push(("batchnorm input", rel_err(&gx.data, &fd_vec(&x.data, h, |v| bn_loss(&bn, v)))));
    out.push((
        "batchnorm gamma",
        rel_err(&gg, &fd_vec(&bn.gamma, h, |v| {
            let mut c = bn.clone();
            c.gamma = v.to_vec();
            bn_loss(&c, &x.data)
        })),
    ));
    out.push((
        "batchnorm beta",
        rel_err(&gb, &fd_vec(&bn.beta, h, |v| {
            let mut c = bn.clone();
            c.beta = v.to_vec();
            bn_loss(&c, &x.data)
        })),
    ));

    let v = rand_vec(20);
    let r = rand_vec(20);
    out.push(("relu", rel_err(&relu_backward(&v, &r), &fd_vec(&v, h, |u| dot(&r, &relu_forward(u))))));
    out.push(("tanh", rel_err(&tanh_backward(&tanh_forward(&v), &r), &fd_vec(&v, h, |u| dot(&r, &tanh_forward(u))))));

    let (inp, outp, batch) = (5, 3, 4);
    let mut dense = Dense::zeros(inp, outp);
    dense.weight = rand_vec(inp * outp);
    dense.bias = rand_vec(outp);
    let xd = rand_vec(inp * batch);
    let rd = rand_vec(outp * batch);
    let (gx, gw, gb) = dense.backward(&xd, &rd, batch).unwrap();
    out.push(("dense input", rel_err(&gx, &fd_vec(&xd, h, |u| dot(&rd, &dense.forward(u, batch).unwrap())))));
    out.push((
        "dense weight",
        rel_err(&gw, &fd_vec(&dense.weight, h, |u| {
            let mut d = dense.clone();
            d.weight = u.to_vec();
            dot(&rd, &d.forward(&xd, batch).unwrap())
        })),
    ));
    out.push((
        "dense bias",
        rel_err(&gb, &fd_vec(&dense.bias, h, |u| {
            let mut d = dense.clone();
            d.bias = u.to_vec();
            dot(&rd, &d.forward(&xd, batch).unwrap())
        })),
    ));

    let target = rand_vec(12);
    let pred = rand_vec(12);
    let (_, g) = mse_loss(&pred, &target).unwrap();
    out.push(("mse", rel_err(&g, &fd_vec(&pred, h, |u| mse_loss(u, &target).unwrap().0))));
    out
}

fn unrolled_error(data_term: DataTerm) -> f64 {
    let geom = half_wave();
    let grid = DirectionGrid::uniform(-15.0, 15.0, 2.0).unwrap();
    assert_eq!(grid.len(), 16);
    let p = projection(&coarray_manifold(&grid, &geom)).unit_diagonal();
    let base = ExperimentConfig::default().ssr;
    let cfg = SsrConfig { iterations: 2, data_term, ..base };
    let mut rng = stream(6, &[0]);
    let samples: Vec<ModlSample> = (0..4)
        .map(|i| ModlSample {
            eta0: (0..16).map(|_| rng.random_range(0.0..1.0)).collect(),
            label: OneHotLabel::new(3 * i + 2, 16).unwrap(),
        })
        .collect();
    let batch: Vec<&ModlSample> = samples.iter().collect();
    let adjoint = SolverAdjoint::new(&p.p, cfg.lambda).unwrap();
    let params = CalibratorParams::init(&DEFAULT_KERNELS, DEFAULT_KERNEL_WIDTH, cfg.iterations, 21).unwrap();
    let loss = |q: &CalibratorParams| batch_gradient(&mut q.clone(), &batch, &p.p, &adjoint, &cfg).unwrap().loss;
    let analytic: Vec<f64> = batch_gradient(&mut params.clone(), &batch, &p.p, &adjoint, &cfg)
        .unwrap()
        .grads
        .concat();
    let h = 1e-5;
    let mut numeric = Vec::with_capacity(analytic.len());
    for layer in 0..params.convs.len() {
        for i in 0..params.convs[layer].weight.len() {
            numeric.push(central(
                |d| {
                    let mut q = params.clone();
                    q.convs[layer].weight[i] += d;
                    loss(&q)
                },
                h,
            ));
        }
        for i in 0..params.norms[layer].gamma.len() {
            numeric.push(central(
                |d| {
                    let mut q = params.clone();
                    q.norms[layer].gamma[i] += d;
                    loss(&q)
                },
                h,
            ));
        }
        for i in 0..params.norms[layer].beta.len() {
            numeric.push(central(
                |d| {
                    let mut q = params.clone();
                    q.norms[layer].beta[i] += d;
                    loss(&q)
                },
                h,
            ));
        }
    }
    rel_err(&analytic, &numeric)
}

#[test]
fn criterion_05_gradient_fidelity() {
    let t0 = Instant::now();
    let mut errors = nn_op_errors();
    errors.push(("unrolled modl, observed data term", unrolled_error(DataTerm::Observed)));
    errors.push(("unrolled modl, previous-iterate data term", unrolled_error(DataTerm::PreviousIterate)));
    let dt = t0.elapsed();
    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let pass = worst < 1e-3 && dt < Duration::from_secs(60);
    report(5, pass, &format!("{} checks, worst relative error {worst:.1e}, {dt:.2?}", errors.len()));
    for (name, e) in &errors {
        note(&format!("{name}: {e:.1e}"));
    }
    assert!(pass);
}

/// Desk-scale experiment shared by criteria 6-9.
struct Desk {
    cfg: ExperimentConfig,
    pipelines: Vec<(f64, TrainedPipeline)>,
    /// `(rho, snr, estimator) -> rmse` on validation splits.
    rmse: BTreeMap<(String, String, EstimatorKind), f64>,
    /// Wall time to train and evaluate at the main `rho`.
    main_seconds: f64,
    total_seconds: f64,
}

fn key(rho: f64, snr: f64, e: EstimatorKind) -> (String, String, EstimatorKind) {
    (format!("{rho}"), format!("{snr}"), e)
}

fn rmse_of(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

fn validation_rmse(cfg: &ExperimentConfig, ds: &Dataset, pipeline: &TrainedPipeline, estimators: &[EstimatorKind]) -> Vec<f64> {
    let bank = EstimatorBank::new(cfg, Some(pipeline)).unwrap();
    let val: Vec<&Sample> = ds.validation().collect();
    evaluate_samples(&bank, estimators, &val)
        .unwrap()
        .iter()
        .map(|recs| rmse_of(&recs.iter().map(|r| r.estimate_deg - r.aoa_deg).collect::<Vec<_>>()))
        .collect()
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let start = Instant::now();
        let cfg = ExperimentConfig::default();
        let base = base_profile(&cfg).unwrap();
        let both = [EstimatorKind::Music, EstimatorKind::Moddnn];
        let mut rmse = BTreeMap::new();
        let mut pipelines = Vec::new();
        let mut main_seconds = 0.0;
        for &rho in &cfg.rho_sweep {
            let t = Instant::now();
            let ds = generate_dataset(&cfg, &base, rho, cfg.train_snr_db).unwrap();
            let train: Vec<&Sample> = ds.train().collect();
            let (pipeline, _) = train_pipeline(&cfg, &train).unwrap();
            let r = validation_rmse(&cfg, &ds, &pipeline, &both);
            for (e, v) in both.iter().zip(r) {
                rmse.insert(key(rho, cfg.train_snr_db, *e), v);
            }
            if rho == cfg.rho {
                main_seconds = t.elapsed().as_secs_f64();
            }
            pipelines.push((rho, pipeline));
        }
        let main = &pipelines.iter().find(|(r, _)| *r == cfg.rho).unwrap().1;
        for &snr in &cfg.snr_sweep_db {
            if snr == cfg.train_snr_db {
                continue;
            }
            let ds = generate_dataset(&cfg, &base, cfg.rho, snr).unwrap();
            for (e, v) in both.iter().zip(validation_rmse(&cfg, &ds, main, &both)) {
                rmse.insert(key(cfg.rho, snr, *e), v);
            }
        }
        Desk {
            cfg,
            pipelines,
            rmse,
            main_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_06_beamwidth() {
    let d = desk();
    let cfg = &d.cfg;
    let main = &d.pipelines.iter().find(|(r, _)| *r == cfg.rho).unwrap().1;
    let scene = SceneSpec { aoa_deg: -15.0, snr_db: None };
    let cfg_cdbf = ExperimentConfig { estimators: vec![EstimatorKind::Cdbf], ..cfg.clone() };
    let cdbf = &scene_spectra(&cfg_cdbf, &scene, None).unwrap()[0].1;
    let cdbf_width = hpbw(cdbf).unwrap();

    let profile = scale_profile(&base_profile(cfg).unwrap(), cfg.rho).unwrap();
    let cfr = generate_cfr(&SourceScene::single(-15.0, None), &half_wave(), &cfg.waveform, Some(&profile), 77).unwrap();
    let est = main.estimate(&cfr).unwrap();
    let scg_width = hpbw(&est.spectrum).unwrap();
    let ratio = cdbf_width / scg_width;

    // same scene without impairment at a full-wavelength spacing
    let lambda = SPEED_OF_LIGHT / cfg.geometry.carrier_hz;
    let wide = ArrayGeometry::new(4, lambda, cfg.geometry.carrier_hz).unwrap();
    let grid = desk_grid();
    let clean = generate_cfr(&SourceScene::single(-15.0, None), &wide, &cfg.waveform, None, 77).unwrap();
    let wide_width = hpbw(
        &coarray_dbf(&vectorize_covariance(&sample_covariance(&clean).unwrap()), &coarray_manifold(&grid, &wide)).unwrap(),
    )
    .unwrap();

    // the narrowing ratio is the gating requirement; the absolute widths are reported
    let pass = ratio >= 6.0;
    report(
        6,
        pass,
        &format!("coarray DBF {cdbf_width:.2} deg, trained output {scg_width:.2} deg, ratio {ratio:.1}x (need >= 6), estimate {} deg", est.aoa_deg),
    );
    let verdict = |ok: bool| if ok { "met" } else { "not met" };
    note(&format!("trained output HPBW < 2 deg: {} ({scg_width:.2} deg)", verdict(scg_width < 2.0)));
    note(&format!(
        "coarray DBF 13.4 +/- 2 deg at d = lambda/2: {} ({cdbf_width:.2} deg)",
        verdict((cdbf_width - 13.4).abs() <= 2.0)
    ));
    note(&format!(
        "coarray DBF 13.4 +/- 2 deg at d = lambda, unimpaired: {} ({wide_width:.2} deg)",
        verdict((wide_width - 13.4).abs() <= 2.0)
    ));
    assert!(pass);
}

#[test]
fn criterion_07_impairment_robustness() {
    let d = desk();
    let snr = d.cfg.train_snr_db;
    let music: Vec<f64> = d.cfg.rho_sweep.iter().map(|&r| d.rmse[&key(r, snr, EstimatorKind::Music)]).collect();
    let modd: Vec<f64> = d.cfg.rho_sweep.iter().map(|&r| d.rmse[&key(r, snr, EstimatorKind::Moddnn)]).collect();
    let nondecreasing = music.windows(2).all(|w| w[1] >= w[0]);
    let music_ratio = music.last().unwrap() / music.first().unwrap();
    let mod_spread = modd.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / modd.iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = nondecreasing && music_ratio >= 2.0 && mod_spread < 2.0;
    report(
        7,
        pass,
        &format!(
            "rho {:?}: MUSIC {:.3?} (x{music_ratio:.2}, need >= 2, nondecreasing {nondecreasing}), MoD-DNN {:.3?} (spread x{mod_spread:.2}, need < 2)",
            d.cfg.rho_sweep, music, modd
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_accuracy_band() {
    let d = desk();
    let (rho, snr) = (d.cfg.rho, d.cfg.train_snr_db);
    let modd = d.rmse[&key(rho, snr, EstimatorKind::Moddnn)];
    let music = d.rmse[&key(rho, snr, EstimatorKind::Music)];
    let budget = 30.0 * 60.0;
    let pass = modd <= 1.0 && modd < music && d.main_seconds <= budget;
    report(
        8,
        pass,
        &format!(
            "rho {rho}, {snr} dB: MoD-DNN RMSE {modd:.3} deg (need <= 1 and < MUSIC {music:.3}), train+eval {:.0} s (budget {budget:.0} s)",
            d.main_seconds
        ),
    );
    note(&format!("whole shared fixture: {:.0} s", d.total_seconds));
    assert!(pass);
}

#[test]
fn criterion_09_snr_trend() {
    let d = desk();
    let rho = d.cfg.rho;
    let lo = d.rmse[&key(rho, 0.0, EstimatorKind::Moddnn)];
    let hi = d.rmse[&key(rho, 20.0, EstimatorKind::Moddnn)];
    let pass = hi < lo;
    report(9, pass, &format!("MoD-DNN RMSE {lo:.3} deg at 0 dB, {hi:.3} deg at 20 dB"));
    assert!(pass);
}

fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        grid: GridSpec { start_deg: -20.0, stop_deg: 20.0, step_deg: 5.0 },
        rho_sweep: vec![0.0, 1.0],
        snr_sweep_db: vec![0.0, 10.0],
        slots_per_angle: 5,
        num_subregions: 2,
        region_margin: 1,
        spectrum_scene: SceneSpec { aoa_deg: -15.0, snr_db: None },
        output_dir: "out".into(),
        ..ExperimentConfig::default()
    };
    cfg.autoencoder.epochs = 2;
    cfg.modl.epochs = 2;
    cfg.modl.batch_size = 8;
    cfg
}

fn run_all(out: &Path) {
    let cfg = tiny_config();
    cmd_generate(&cfg, out).unwrap();
    cmd_train(&cfg, out).unwrap();
    cmd_evaluate(&cfg, out).unwrap();
    cmd_spectrum(&cfg, out, &cfg.spectrum_scene).unwrap();
}

fn files_under(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_10_determinism() {
    let t0 = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all(a.path());
    run_all(b.path());
    let fa = files_under(a.path());
    let fb = files_under(b.path());
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let checkpoints = fa.keys().filter(|k| k.ends_with(".json") && k.starts_with("models")).count();
    let mut schema_ok = validate_csv(std::str::from_utf8(&fa["loss.csv"]).unwrap(), LOSS_HEADER).is_ok();
    for (file, header) in REPORT_FILES {
        schema_ok &= validate_csv(std::str::from_utf8(&fa[file]).unwrap(), header).map(|n| n > 0).unwrap_or(false);
    }
    let pass = differing.is_empty() && fa.len() == fb.len() && checkpoints == 6 && schema_ok;
    report(
        10,
        pass,
        &format!(
            "{} files compared ({checkpoints} checkpoints), {} differ, schemas valid {schema_ok}, {:.1?}",
            fa.len(),
            differing.len(),
            t0.elapsed()
        ),
    );
    for k in &differing { note(&format!("differs: {k}")); }
    assert!(pass, "differing: {differing:?}");
}

#[test]
fn partition_of_the_desk_grid() {
    let part = SubregionPartition::uniform(&desk_grid(), 4).unwrap();
    let ranges: Vec<_> = (0..4).map(|p| part.range(p)).collect();
    assert_eq!(ranges, vec![0..30, 30..60, 60..90, 90..121]);
}
