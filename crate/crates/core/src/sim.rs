//! Synthetic uplink CSI for a uniform linear array.
//!
//! The generator follows the narrowband CFR model: for every subcarrier `k`
//! the array snapshot is `h(k) = sum_l gamma_k(theta_l) .* a(theta_l) s_l(k) + n(k)`,
//! where `gamma` is an optional per-antenna, per-subcarrier, per-angle gain
//! table. Ranges are carried for completeness but do not enter the
//! narrowband response.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default carrier of the simulated gNodeB (4.85 GHz).
pub const DEFAULT_CARRIER_HZ: f64 = 4.85e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub num_elements: usize,
    pub spacing_m: f64,
    pub carrier_hz: f64,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, spacing_m: f64, carrier_hz: f64) -> Result<Self> {
        let geom = Self {
            num_elements,
            spacing_m,
            carrier_hz,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Half-wavelength ULA at the given carrier.
    pub fn half_wavelength(num_elements: usize, carrier_hz: f64) -> Result<Self> {
        Self::new(num_elements, SPEED_OF_LIGHT / carrier_hz / 2.0, carrier_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_elements < 2 {
            return Err(Error::Config(format!(
                "array needs at least 2 elements, got {}",
                self.num_elements
            )));
        }
        if !(self.spacing_m > 0.0 && self.spacing_m.is_finite()) {
            return Err(Error::Config(format!("spacing must be > 0, got {}", self.spacing_m)));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::Config(format!("carrier must be > 0, got {}", self.carrier_hz)));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// True when the spacing exceeds half a wavelength (grating lobes possible).
    pub fn aliasing_risk(&self) -> bool {
        self.spacing_m > self.wavelength() / 2.0 * (1.0 + 1e-12)
    }

    /// Same array with every spacing perturbed by `delta_m`.
    pub fn with_spacing_offset(&self, delta_m: f64) -> Result<Self> {
        Self::new(self.num_elements, self.spacing_m + delta_m, self.carrier_hz)
    }
}

/// Uniform, strictly increasing set of candidate directions in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionGrid {
    angles: Vec<f64>,
    spacing: f64,
}

impl DirectionGrid {
    /// Grid `start, start + step, ..., stop` (stop included when it lands on the lattice).
    pub fn uniform(start_deg: f64, stop_deg: f64, step_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0) || !(stop_deg >= start_deg) {
            return Err(Error::Config(format!(
                "bad grid [{start_deg}:{step_deg}:{stop_deg}]"
            )));
        }
        let count = ((stop_deg - start_deg) / step_deg + 1e-9).floor() as usize + 1;
        let angles = (0..count).map(|i| start_deg + i as f64 * step_deg).collect();
        Self::from_angles(angles)
    }

    pub fn from_angles(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::Config("empty direction grid".into()));
        }
        if angles.iter().any(|a| !(a.abs() < 90.0)) {
            return Err(Error::Domain("grid angles must lie inside (-90, 90) degrees".into()));
        }
        let spacing = if angles.len() > 1 { angles[1] - angles[0] } else { 0.0 };
        for w in angles.windows(2) {
            let step = w[1] - w[0];
            if !(step > 0.0) {
                return Err(Error::Config("grid must be strictly increasing".into()));
            }
            if (step - spacing).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "grid spacing not uniform: {step} vs {spacing}"
                )));
            }
        }
        Ok(Self { angles, spacing })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn angle(&self, index: usize) -> f64 {
        self.angles[index]
    }

    pub fn first(&self) -> f64 {
        self.angles[0]
    }

    pub fn last(&self) -> f64 {
        self.angles[self.angles.len() - 1]
    }

    pub fn contains(&self, angle_deg: f64) -> bool {
        let tol = 1e-9 + self.spacing * 1e-6;
        angle_deg >= self.first() - tol && angle_deg <= self.last() + tol
    }

    /// Index of the grid point nearest to `angle_deg` (ties go to the lower index).
    pub fn nearest_index(&self, angle_deg: f64) -> usize {
        if self.angles.len() == 1 {
            return 0;
        }
        let pos = ((angle_deg - self.first()) / self.spacing).round();
        pos.clamp(0.0, (self.angles.len() - 1) as f64) as usize
    }

    /// Index of `angle_deg` if it sits on the grid.
    pub fn index_of(&self, angle_deg: f64) -> Option<usize> {
        let idx = self.nearest_index(angle_deg);
        let tol = 1e-9_f64.max(self.spacing * 1e-6);
        ((self.angles[idx] - angle_deg).abs() <= tol).then_some(idx)
    }

    /// Contiguous sub-grid `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.angles.len() {
            return Err(Error::Shape(format!(
                "slice [{start}, {end}) out of grid of length {}",
                self.angles.len()
            )));
        }
        Ok(Self {
            angles: self.angles[start..end].to_vec(),
            spacing: self.spacing,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    pub num_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub snapshots: usize,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            num_subcarriers: 16,
            subcarrier_spacing_hz: 30e3,
            snapshots: 1,
        }
    }
}

impl WaveformConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_subcarriers == 0 || self.snapshots == 0 {
            return Err(Error::Config("subcarrier and snapshot counts must be >= 1".into()));
        }
        if !(self.subcarrier_spacing_hz > 0.0) {
            return Err(Error::Config("subcarrier spacing must be > 0".into()));
        }
        Ok(())
    }

    /// Occupied bandwidth is below a tenth of the carrier.
    pub fn is_narrowband(&self, carrier_hz: f64) -> bool {
        self.num_subcarriers as f64 * self.subcarrier_spacing_hz / carrier_hz < 0.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub aoa_deg: f64,
    pub power: f64,
    /// Inert under the narrowband model.
    #[serde(default)]
    pub range_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScene {
    pub sources: Vec<Source>,
    /// Per-element SNR in dB; `None` means noiseless.
    pub snr_db: Option<f64>,
}

impl SourceScene {
    pub fn single(aoa_deg: f64, snr_db: Option<f64>) -> Self {
        Self {
            sources: vec![Source {
                aoa_deg,
                power: 1.0,
                range_m: 10.0,
            }],
            snr_db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Config("scene needs at least one source".into()));
        }
        for s in &self.sources {
            if !(s.power > 0.0) {
                return Err(Error::Config(format!("source power must be > 0, got {}", s.power)));
            }
            if !(s.aoa_deg.abs() < 90.0) {
                return Err(Error::Domain(format!("aoa {} outside (-90, 90)", s.aoa_deg)));
            }
        }
        Ok(())
    }

    pub fn total_power(&self) -> f64 {
        self.sources.iter().map(|s| s.power).sum()
    }

    /// Noise variance per complex sample.
    pub fn noise_variance(&self) -> f64 {
        match self.snr_db {
            Some(snr) => self.total_power() / 10f64.powf(snr / 10.0),
            None => 0.0,
        }
    }
}

/// Complex gain table `gamma_{m,k}(theta_l)` over a direction grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentProfile {
    pub grid: DirectionGrid,
    pub num_elements: usize,
    pub num_subcarriers: usize,
    /// Layout: `[(l * K + k) * M + m]`.
    pub gains: Vec<Complex64>,
    pub phase_only: bool,
    pub description: String,
}

impl ImpairmentProfile {
    pub fn identity(grid: DirectionGrid, num_elements: usize, num_subcarriers: usize) -> Self {
        let n = grid.len() * num_elements * num_subcarriers;
        Self {
            grid,
            num_elements,
            num_subcarriers,
            gains: vec![Complex64::new(1.0, 0.0); n],
            phase_only: true,
            description: "identity".into(),
        }
    }

    /// Build from per-(m, k, l) phases in degrees.
    pub fn from_phases(
        grid: DirectionGrid,
        num_elements: usize,
        num_subcarriers: usize,
        phase_deg: impl Fn(usize, usize, usize) -> f64,
        description: impl Into<String>,
    ) -> Self {
        let mut p = Self::identity(grid, num_elements, num_subcarriers);
        for l in 0..p.grid.len() {
            for k in 0..num_subcarriers {
                for m in 0..num_elements {
                    let i = p.offset(m, k, l);
                    p.gains[i] = Complex64::from_polar(1.0, phase_deg(m, k, l).to_radians());
                }
            }
        }
        p.description = description.into();
        p
    }

    fn offset(&self, m: usize, k: usize, l: usize) -> usize {
        (l * self.num_subcarriers + k) * self.num_elements + m
    }

    pub fn num_angles(&self) -> usize {
        self.grid.len()
    }

    pub fn gain(&self, m: usize, k: usize, l: usize) -> Complex64 {
        self.gains[self.offset(m, k, l)]
    }

    pub fn set_gain(&mut self, m: usize, k: usize, l: usize, g: Complex64) {
        let i = self.offset(m, k, l);
        self.gains[i] = g;
    }

    /// Gain vector `gamma_k(theta_l)` over antennas.
    pub fn response(&self, k: usize, l: usize) -> &[Complex64] {
        let start = self.offset(0, k, l);
        &self.gains[start..start + self.num_elements]
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.grid.len() * self.num_elements * self.num_subcarriers;
        if self.gains.len() != expected {
            return Err(Error::Shape(format!(
                "profile holds {} gains, expected {expected}",
                self.gains.len()
            )));
        }
        if self.phase_only {
            if let Some(g) = self.gains.iter().find(|g| (g.norm() - 1.0).abs() > 1e-9) {
                return Err(Error::Domain(format!(
                    "phase-only profile has non-unit gain {g}"
                )));
            }
        }
        Ok(())
    }
}

/// Coupling / gain-phase / position error model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalImpairment {
    pub coupling: DMatrix<Complex64>,
    pub gain_phase: Vec<Complex64>,
    pub position_error_m: f64,
}

impl ClassicalImpairment {
    pub fn none(num_elements: usize) -> Self {
        Self {
            coupling: DMatrix::identity(num_elements, num_elements),
            gain_phase: vec![Complex64::new(1.0, 0.0); num_elements],
            position_error_m: 0.0,
        }
    }

    /// Symmetric Toeplitz coupling from its first column (`first[0]` must be 1).
    pub fn toeplitz_coupling(first: &[Complex64]) -> DMatrix<Complex64> {
        let n = first.len();
        DMatrix::from_fn(n, n, |i, j| first[i.abs_diff(j)])
    }

    pub fn validate(&self, num_elements: usize) -> Result<()> {
        let c = &self.coupling;
        if c.nrows() != num_elements || c.ncols() != num_elements {
            return Err(Error::Shape(format!(
                "coupling is {}x{}, array has {num_elements} elements",
                c.nrows(),
                c.ncols()
            )));
        }
        if self.gain_phase.len() != num_elements {
            return Err(Error::Shape("gain/phase vector length mismatch".into()));
        }
        for i in 0..num_elements {
            if (c[(i, i)] - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
                return Err(Error::Domain("coupling diagonal must be 1".into()));
            }
            for j in 0..num_elements {
                if i > 0 && j > 0 && (c[(i, j)] - c[(i - 1, j - 1)]).norm() > 1e-12 {
                    return Err(Error::Domain("coupling matrix is not Toeplitz".into()));
                }
            }
        }
        Ok(())
    }
}

/// Channel frequency response of one scene realization, `M x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CfrSet {
    pub h: DMatrix<Complex64>,
    pub geometry: ArrayGeometry,
    pub waveform: WaveformConfig,
    pub seed: u64,
}

impl CfrSet {
    pub fn num_elements(&self) -> usize {
        self.h.nrows()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.h.ncols()
    }

    pub fn snapshot(&self, k: usize) -> DVector<Complex64> {
        self.h.column(k).into_owned()
    }

    pub fn validate(&self) -> Result<()> {
        if self.h.nrows() != self.geometry.num_elements {
            return Err(Error::Shape("CFR rows differ from array size".into()));
        }
        if self.h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("non-finite CFR entry".into()));
        }
        Ok(())
    }
}

/// Steering vector with element `m` equal to `exp(+j 2 pi f0 m d sin(theta) / c)`.
pub fn steering_vector(theta_deg: f64, geom: &ArrayGeometry) -> Result<DVector<Complex64>> {
    if !(theta_deg.abs() < 90.0) {
        return Err(Error::Domain(format!(
            "steering angle {theta_deg} must satisfy |theta| < 90"
        )));
    }
    let phase = 2.0 * std::f64::consts::PI * geom.carrier_hz * geom.spacing_m
        * theta_deg.to_radians().sin()
        / SPEED_OF_LIGHT;
    Ok(DVector::from_fn(geom.num_elements, |m, _| {
        Complex64::from_polar(1.0, phase * m as f64)
    }))
}

/// `M x L` array manifold over the grid.
pub fn manifold(grid: &DirectionGrid, geom: &ArrayGeometry) -> DMatrix<Complex64> {
    let mut a = DMatrix::zeros(geom.num_elements, grid.len());
    for (l, &theta) in grid.angles().iter().enumerate() {
        // grid angles are validated to lie inside (-90, 90)
        let col = steering_vector(theta, geom).expect("grid angle inside (-90, 90)");
        a.set_column(l, &col);
    }
    a
}

/// Shared synthesis core: symbols first (source-major, then subcarrier), then noise.
fn synthesize(
    scene: &SourceScene,
    geom: &ArrayGeometry,
    wave: &WaveformConfig,
    seed: u64,
    response: impl Fn(usize, usize) -> Result<DVector<Complex64>>,
) -> Result<CfrSet> {
    scene.validate()?;
    geom.validate()?;
    wave.validate()?;
    let m_count = geom.num_elements;
    let k_count = wave.num_subcarriers;
    let mut rng = rng::stream(seed, &[rng::tag("cfr")]);
    let mut h = DMatrix::<Complex64>::zeros(m_count, k_count);
    for (src_idx, src) in scene.sources.iter().enumerate() {
        let amp = src.power.sqrt();
        for k in 0..k_count {
            let phi: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            let symbol = Complex64::from_polar(amp, phi);
            let resp = response(src_idx, k)?;
            for m in 0..m_count {
                h[(m, k)] += resp[m] * symbol;
            }
        }
    }
    let sigma2 = scene.noise_variance();
    if sigma2 > 0.0 {
        let scale = (sigma2 / 2.0).sqrt();
        for k in 0..k_count {
            for m in 0..m_count {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                h[(m, k)] += Complex64::new(re * scale, im * scale);
            }
        }
    }
    Ok(CfrSet {
        h,
        geometry: *geom,
        waveform: *wave,
        seed,
    })
}

/// Generate one CFR realization, optionally through an angular-dependent gain table.
pub fn generate_cfr(
    scene: &SourceScene,
    geom: &ArrayGeometry,
    wave: &WaveformConfig,
    profile: Option<&ImpairmentProfile>,
    seed: u64,
) -> Result<CfrSet> {
    let mut grid_index = Vec::with_capacity(scene.sources.len());
    if let Some(p) = profile {
        p.validate()?;
        if p.num_elements != geom.num_elements || p.num_subcarriers != wave.num_subcarriers {
            return Err(Error::Shape(format!(
                "profile is {}x{} (MxK), scene needs {}x{}",
                p.num_elements, p.num_subcarriers, geom.num_elements, wave.num_subcarriers
            )));
        }
        for s in &scene.sources {
            let idx = p.grid.index_of(s.aoa_deg).ok_or_else(|| {
                Error::Domain(format!("source aoa {} is not on the profile grid", s.aoa_deg))
            })?;
            grid_index.push(idx);
        }
    }
    let steering: Vec<DVector<Complex64>> = scene
        .sources
        .iter()
        .map(|s| steering_vector(s.aoa_deg, geom))
        .collect::<Result<_>>()?;
    synthesize(scene, geom, wave, seed, |src, k| {
        let a = &steering[src];
        Ok(match profile {
            Some(p) => {
                let g = p.response(k, grid_index[src]);
                DVector::from_fn(a.len(), |m, _| g[m] * a[m])
            }
            None => a.clone(),
        })
    })
}

/// Generate one CFR realization under the coupling / gain-phase / position model:
/// `h = C Gamma A(theta, d + delta_d) s + n`.
pub fn apply_classical_impairment(
    scene: &SourceScene,
    geom: &ArrayGeometry,
    wave: &WaveformConfig,
    imp: &ClassicalImpairment,
    seed: u64,
) -> Result<CfrSet> {
    imp.validate(geom.num_elements)?;
    let perturbed = geom.with_spacing_offset(imp.position_error_m)?;
    let gamma = DMatrix::from_diagonal(&DVector::from_vec(imp.gain_phase.clone()));
    let transfer = &imp.coupling * gamma;
    let responses: Vec<DVector<Complex64>> = scene
        .sources
        .iter()
        .map(|s| steering_vector(s.aoa_deg, &perturbed).map(|a| &transfer * a))
        .collect::<Result<_>>()?;
    let mut cfr = synthesize(scene, geom, wave, seed, |src, _| Ok(responses[src].clone()))?;
    cfr.geometry = *geom;
    Ok(cfr)
}

/// Scale the impairment degree: phases by `rho`, magnitudes geometrically (`|g|^rho`).
pub fn scale_profile(profile: &ImpairmentProfile, rho: f64) -> Result<ImpairmentProfile> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho must lie in [0, 1], got {rho}")));
    }
    let mut out = profile.clone();
    for g in out.gains.iter_mut() {
        let (mag, phase) = g.to_polar();
        let mag = if profile.phase_only { 1.0 } else { mag.powf(rho) };
        *g = Complex64::from_polar(mag, phase * rho);
    }
    out.description = format!("{} (rho={rho})", profile.description);
    Ok(out)
}

/// Parameters of the synthetic angular-dependent phase-error generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Bound on |phase error| inside the central region, degrees.
    pub max_inner_error_deg: f64,
    /// Growth of the phase error outside the central region, degrees per degree.
    pub outer_slope: f64,
    /// Central region `(lo, hi)` in degrees.
    pub inner_bounds_deg: (f64, f64),
    /// Fraction of the inner error shared by all subcarriers, in [0, 1].
    pub smoothness: f64,
    /// Peak amplitude ripple in dB; 0 keeps the profile phase-only.
    #[serde(default)]
    pub amplitude_ripple_db: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            max_inner_error_deg: 20.0,
            outer_slope: 0.5,
            inner_bounds_deg: (-30.0, 30.0),
            smoothness: 0.8,
            amplitude_ripple_db: 0.0,
            seed: 2024,
        }
    }
}

/// Period (degrees) of the slowest harmonic of the inner error curves.
const SYNTH_PERIOD_DEG: f64 = 120.0;
const SYNTH_HARMONICS: usize = 2;

/// Smooth random curve bounded by 1 in magnitude.
#[derive(Debug, Clone)]
struct Wiggle {
    coef: [f64; SYNTH_HARMONICS],
    phase: [f64; SYNTH_HARMONICS],
}

impl Wiggle {
    fn draw(rng: &mut impl Rng) -> Self {
        let mut coef = [0.0; SYNTH_HARMONICS];
        let mut phase = [0.0; SYNTH_HARMONICS];
        for j in 0..SYNTH_HARMONICS {
            coef[j] = rng.random_range(-1.0..1.0) / (j + 1) as f64;
            phase[j] = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        }
        let norm: f64 = coef.iter().map(|c| c.abs()).sum::<f64>().max(1e-12);
        // normalise so the peak bound is reached by the coefficient sum
        coef.iter_mut().for_each(|c| *c /= norm);
        Self { coef, phase }
    }

    fn eval(&self, theta_deg: f64) -> f64 {
        (0..SYNTH_HARMONICS)
            .map(|j| {
                let w = 2.0 * std::f64::consts::PI * (j + 1) as f64 / SYNTH_PERIOD_DEG;
                self.coef[j] * (w * theta_deg + self.phase[j]).sin()
            })
            .sum()
    }
}

impl SynthParams {
    /// Upper bound on |d psi / d theta| (degrees per degree) of generated curves.
    pub fn slope_bound(&self) -> f64 {
        let w_max = 2.0 * std::f64::consts::PI * SYNTH_HARMONICS as f64 / SYNTH_PERIOD_DEG;
        self.max_inner_error_deg * w_max + self.outer_slope.abs()
    }
}

/// Synthesize an angular-dependent phase-error profile.
///
/// Antenna 0 is the reference and stays error-free. For every other antenna
/// the phase error is `max_inner * (s * g_m(theta) + (1 - s) * g_{m,k}(theta))`
/// inside the central region, where `g` are smooth curves bounded by one, and
/// additionally ramps with a per-antenna slope beyond the region edges.
pub fn synth_profile(
    params: &SynthParams,
    grid: &DirectionGrid,
    num_elements: usize,
    num_subcarriers: usize,
) -> Result<ImpairmentProfile> {
    if !(params.max_inner_error_deg >= 0.0) {
        return Err(Error::Config("max_inner_error_deg must be >= 0".into()));
    }
    if !(0.0..=1.0).contains(&params.smoothness) {
        return Err(Error::Config("smoothness must lie in [0, 1]".into()));
    }
    let (lo, hi) = params.inner_bounds_deg;
    let mut rng = rng::stream(params.seed, &[rng::tag("profile")]);
    let shared: Vec<Wiggle> = (0..num_elements).map(|_| Wiggle::draw(&mut rng)).collect();
    let per_k: Vec<Vec<Wiggle>> = (0..num_elements)
        .map(|_| (0..num_subcarriers).map(|_| Wiggle::draw(&mut rng)).collect())
        .collect();
    let slopes: Vec<(f64, f64)> = (0..num_elements)
        .map(|_| {
            let mut s = || {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * params.outer_slope * rng.random_range(0.5..=1.0)
            };
            (s(), s())
        })
        .collect();
    let ripple: Vec<Wiggle> = (0..num_elements).map(|_| Wiggle::draw(&mut rng)).collect();

    let s = params.smoothness;
    let phase = |m: usize, k: usize, theta: f64| -> f64 {
        if m == 0 {
            return 0.0;
        }
        let inner = params.max_inner_error_deg
            * (s * shared[m].eval(theta) + (1.0 - s) * per_k[m][k].eval(theta));
        let outer = slopes[m].0 * (lo - theta).max(0.0) + slopes[m].1 * (theta - hi).max(0.0);
        inner + outer
    };
    let mut profile = ImpairmentProfile::identity(grid.clone(), num_elements, num_subcarriers);
    let phase_only = params.amplitude_ripple_db == 0.0;
    for (l, &theta) in grid.angles().iter().enumerate() {
        for k in 0..num_subcarriers {
            for m in 0..num_elements {
                let mag = if phase_only || m == 0 {
                    1.0
                } else {
                    10f64.powf(params.amplitude_ripple_db * ripple[m].eval(theta) / 20.0)
                };
                profile.set_gain(m, k, l, Complex64::from_polar(mag, phase(m, k, theta).to_radians()));
            }
        }
    }
    profile.phase_only = phase_only;
    profile.description = format!(
        "synthetic: inner<={} deg, slope {} deg/deg, smoothness {}, seed {}",
        params.max_inner_error_deg, params.outer_slope, params.smoothness, params.seed
    );
    Ok(profile)
}

/// Phase errors `psi_m(theta_l)` in degrees, antenna 0 as reference.
/// Layout: `[k][m][l]`.
pub fn phase_error_curves(profile: &ImpairmentProfile, geom: &ArrayGeometry) -> Vec<Vec<Vec<f64>>> {
    let grid = &profile.grid;
    let steering: Vec<DVector<Complex64>> = grid
        .angles()
        .iter()
        .map(|&t| steering_vector(t, geom).expect("grid angle inside (-90, 90)"))
        .collect();
    (0..profile.num_subcarriers)
        .map(|k| {
            (0..profile.num_elements)
                .map(|m| {
                    (0..grid.len())
                        .map(|l| {
                            let a = &steering[l];
                            let g = profile.response(k, l);
                            // measured phase difference minus the ideal path difference
                            let measured = (g[m] * a[m]) * (g[0] * a[0]).conj();
                            let ideal = a[m] * a[0].conj();
                            (measured * ideal.conj()).arg().to_degrees()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}
