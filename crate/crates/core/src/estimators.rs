//! Classical grid estimators: sample covariance, DBF, MUSIC and argmax picking.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sim::{manifold, ArrayGeometry, CfrSet, DirectionGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub r: DMatrix<Complex64>,
    pub num_snapshots: usize,
}

impl CovarianceMatrix {
    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn identity(m: usize) -> Self {
        Self {
            r: DMatrix::identity(m, m),
            num_snapshots: 1,
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            r: self.r.map(|z| z * alpha),
            num_snapshots: self.num_snapshots,
        }
    }

    /// Relative Hermitian defect `||R - R^H||_F / ||R||_F`.
    pub fn hermitian_defect(&self) -> f64 {
        let diff = (&self.r - self.r.adjoint()).norm();
        diff / self.r.norm().max(f64::MIN_POSITIVE)
    }
}

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: DMatrix<Complex64>,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let lambda = DMatrix::from_diagonal(&DVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&v| Complex64::new(v, 0.0)),
        ));
        &self.vectors * lambda * self.vectors.adjoint()
    }
}

pub fn hermitian_eigen(r: &DMatrix<Complex64>) -> Result<HermitianEigen> {
    if !r.is_square() {
        return Err(Error::Shape(format!("eigen input is {}x{}", r.nrows(), r.ncols())));
    }
    let n = r.nrows();
    // symmetrise so tiny round-off asymmetry cannot leak into the solver
    let sym = (r + r.adjoint()).map(|z| z * 0.5);
    let eig = sym.clone().try_symmetric_eigen(1e-15, 10_000).ok_or_else(|| {
        Error::Numerical(format!(
            "Hermitian eigensolver did not converge (n={n}, ||R||_F={:.3e})",
            sym.norm()
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEigen { values, vectors })
}

/// Sum (not mean) of `h(k) h(k)^H` over subcarriers.
pub fn sample_covariance(cfr: &CfrSet) -> Result<CovarianceMatrix> {
    covariance_from_snapshots(&cfr.h)
}

pub fn covariance_from_snapshots(h: &DMatrix<Complex64>) -> Result<CovarianceMatrix> {
    if h.ncols() == 0 || h.nrows() == 0 {
        return Err(Error::Shape("empty CFR set".into()));
    }
    let mut r = h * h.adjoint();
    // exact Hermitian symmetry
    for i in 0..r.nrows() {
        r[(i, i)].im = 0.0;
        for j in 0..i {
            r[(j, i)] = r[(i, j)].conj();
        }
    }
    Ok(CovarianceMatrix {
        r,
        num_snapshots: h.ncols(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpectrum {
    pub values: Vec<f64>,
    pub grid: DirectionGrid,
}

impl SpatialSpectrum {
    pub fn new(values: Vec<f64>, grid: DirectionGrid) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "spectrum has {} values for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { values, grid })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copy scaled to unit peak (unchanged when the peak is not positive).
    pub fn normalized(&self) -> Self {
        let peak = self.max();
        let values = if peak > 0.0 {
            self.values.iter().map(|v| v / peak).collect()
        } else {
            self.values.clone()
        };
        Self {
            values,
            grid: self.grid.clone(),
        }
    }

    /// Two-column CSV `angle_deg,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle_deg,value\n");
        for (a, v) in self.grid.angles().iter().zip(&self.values) {
            out.push_str(&format!("{a},{v:e}\n"));
        }
        out
    }
}

/// Conventional beamformer `a^H R a` on every grid angle.
pub fn dbf_spectrum(
    cov: &CovarianceMatrix,
    grid: &DirectionGrid,
    geom: &ArrayGeometry,
) -> Result<SpatialSpectrum> {
    check_dim(cov, geom)?;
    let a = manifold(grid, geom);
    let ra = &cov.r * &a;
    let values = (0..grid.len())
        .map(|l| {
            let v = a.column(l).dotc(&ra.column(l));
            debug_assert!(v.im.abs() <= 1e-9 * (1.0 + v.re.abs()));
            v.re
        })
        .collect();
    SpatialSpectrum::new(values, grid.clone())
}

/// MUSIC pseudo-spectrum `1 / (a^H U_N U_N^H a)`.
pub fn music_spectrum(
    cov: &CovarianceMatrix,
    num_sources: usize,
    grid: &DirectionGrid,
    geom: &ArrayGeometry,
) -> Result<SpatialSpectrum> {
    check_dim(cov, geom)?;
    let m = cov.dim();
    if num_sources == 0 || num_sources >= m {
        return Err(Error::Domain(format!(
            "MUSIC needs 1 <= num_sources < {m}, got {num_sources}"
        )));
    }
    let eig = hermitian_eigen(&cov.r)?;
    let noise = eig.vectors.columns(0, m - num_sources);
    let a = manifold(grid, geom);
    let proj = noise.adjoint() * &a;
    // an exact null would be an infinite peak; keep the spectrum finite
    let floor = f64::EPSILON * m as f64;
    let values = (0..grid.len())
        .map(|l| 1.0 / proj.column(l).norm_squared().max(floor))
        .collect();
    SpatialSpectrum::new(values, grid.clone())
}

fn check_dim(cov: &CovarianceMatrix, geom: &ArrayGeometry) -> Result<()> {
    if cov.dim() != geom.num_elements || !cov.r.is_square() {
        return Err(Error::Shape(format!(
            "covariance is {}x{}, array has {} elements",
            cov.r.nrows(),
            cov.r.ncols(),
            geom.num_elements
        )));
    }
    Ok(())
}

/// Grid index of the global maximum; ties resolve to the smallest angle.
pub fn pick_index(spec: &SpatialSpectrum) -> Result<usize> {
    if spec.values.is_empty() {
        return Err(Error::Shape("empty spectrum".into()));
    }
    if spec.values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN in spectrum".into()));
    }
    let mut best = 0;
    for (i, &v) in spec.values.iter().enumerate().skip(1) {
        if v > spec.values[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn pick_aoa(spec: &SpatialSpectrum) -> Result<f64> {
    pick_index(spec).map(|i| spec.grid.angle(i))
}
