//! Coarray signal model: `y = vec(R) = A~ eta + sigma^2 e~`, the coarray
//! manifold `A~`, its projection `P = A~^H A~` and the coarray beamformer
//! `eta^ = A~^H y`.
//!
//! Stacking is column-major throughout: `y[j * M + i] = R[i, j]`, so the
//! column of `A~` for direction `theta` is `vec(a a^H) = conj(a) (x) a`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::estimators::{CovarianceMatrix, SpatialSpectrum};
use crate::sim::{manifold, ArrayGeometry, DirectionGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct CoarraySignal {
    pub y: DVector<Complex64>,
    pub num_elements: usize,
}

pub fn vectorize_covariance(cov: &CovarianceMatrix) -> CoarraySignal {
    // nalgebra stores matrices column-major, which is exactly the stacking order
    CoarraySignal {
        y: DVector::from_column_slice(cov.r.as_slice()),
        num_elements: cov.dim(),
    }
}

impl CoarraySignal {
    pub fn devectorize(&self) -> CovarianceMatrix {
        let m = self.num_elements;
        CovarianceMatrix {
            r: DMatrix::from_column_slice(m, m, self.y.as_slice()),
            num_snapshots: 0,
        }
    }

    /// Largest violation of `y[i*M + j] = conj(y[j*M + i])`.
    pub fn conjugate_pair_defect(&self) -> f64 {
        let m = self.num_elements;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                worst = worst.max((self.y[i * m + j] - self.y[j * m + i].conj()).norm());
            }
        }
        worst
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            y: self.y.map(|z| z * alpha),
            num_elements: self.num_elements,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarrayManifold {
    /// `M^2 x L`.
    pub matrix: DMatrix<Complex64>,
    pub grid: DirectionGrid,
    pub num_elements: usize,
}

pub fn coarray_manifold(grid: &DirectionGrid, geom: &ArrayGeometry) -> CoarrayManifold {
    let a = manifold(grid, geom);
    let m = geom.num_elements;
    let mut matrix = DMatrix::zeros(m * m, grid.len());
    for l in 0..grid.len() {
        let col = a.column(l);
        for j in 0..m {
            for i in 0..m {
                matrix[(j * m + i, l)] = col[i] * col[j].conj();
            }
        }
    }
    CoarrayManifold {
        matrix,
        grid: grid.clone(),
        num_elements: m,
    }
}

impl CoarrayManifold {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,re,im\n");
        for c in 0..self.matrix.ncols() {
            for r in 0..self.matrix.nrows() {
                let z = self.matrix[(r, c)];
                out.push_str(&format!("{r},{c},{:e},{:e}\n", z.re, z.im));
            }
        }
        out
    }
}

/// Real symmetric `L x L` projection `P = A~^H A~`; entries are `|a_i^H a_j|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    pub p: DMatrix<f64>,
    pub grid: DirectionGrid,
}

pub fn projection(manifold: &CoarrayManifold) -> ProjectionMatrix {
    let g = manifold.matrix.adjoint() * &manifold.matrix;
    let l = g.nrows();
    let mut p = DMatrix::zeros(l, l);
    for j in 0..l {
        for i in 0..l {
            // imaginary part vanishes analytically: a_i^H a_j a_j^H a_i = |a_i^H a_j|^2
            debug_assert!(g[(i, j)].im.abs() < 1e-9 * (1.0 + g[(i, j)].re.abs()));
            p[(i, j)] = 0.5 * (g[(i, j)].re + g[(j, i)].re);
        }
    }
    ProjectionMatrix {
        p,
        grid: manifold.grid.clone(),
    }
}

impl ProjectionMatrix {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// Copy rescaled to unit diagonal (divides by `M^2`).
    pub fn unit_diagonal(&self) -> Self {
        let d = self.p[(0, 0)];
        Self {
            p: self.p.map(|v| v / d),
            grid: self.grid.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,value\n");
        for c in 0..self.p.ncols() {
            for r in 0..self.p.nrows() {
                out.push_str(&format!("{r},{c},{:e}\n", self.p[(r, c)]));
            }
        }
        out
    }
}

/// Coarray beamformer `Re(A~^H y)`.
pub fn coarray_dbf(y: &CoarraySignal, manifold: &CoarrayManifold) -> Result<SpatialSpectrum> {
    if y.y.len() != manifold.matrix.nrows() {
        return Err(Error::Shape(format!(
            "coarray signal has {} entries, manifold expects {}",
            y.y.len(),
            manifold.matrix.nrows()
        )));
    }
    let eta = manifold.matrix.adjoint() * &y.y;
    let values = eta.iter().map(|z| z.re).collect();
    SpatialSpectrum::new(values, manifold.grid.clone())
}

/// Width between the half-power crossings around the global peak, with
/// linear interpolation between grid points.
pub fn hpbw(spec: &SpatialSpectrum) -> Result<f64> {
    let v = &spec.values;
    let peak_idx = crate::estimators::pick_index(spec)?;
    let half = v[peak_idx] / 2.0;
    if !(v[peak_idx] > 0.0) {
        return Err(Error::Domain("spectrum peak is not positive".into()));
    }
    let step = spec.grid.spacing();
    let angle = |i: usize| spec.grid.angle(i);

    let mut left = None;
    for i in (0..peak_idx).rev() {
        if v[i] < half {
            let t = (half - v[i]) / (v[i + 1] - v[i]);
            left = Some(angle(i) + t * step);
            break;
        }
    }
    let mut right = None;
    for i in peak_idx + 1..v.len() {
        if v[i] < half {
            let t = (v[i - 1] - half) / (v[i - 1] - v[i]);
            right = Some(angle(i - 1) + t * step);
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::Domain(
            "half-power crossing not found inside the grid".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{steering_vector, DEFAULT_CARRIER_HZ};
    use approx::assert_abs_diff_eq;

    fn geom(m: usize) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(m, DEFAULT_CARRIER_HZ).unwrap()
    }

    #[test]
    fn vectorize_identity() {
        let y = vectorize_covariance(&CovarianceMatrix::identity(2));
        let want = [1.0, 0.0, 0.0, 1.0];
        for (z, w) in y.y.iter().zip(want) {
            assert_eq!(*z, Complex64::new(w, 0.0));
        }
        assert_eq!(y.devectorize().r, CovarianceMatrix::identity(2).r);
    }

    #[test]
    fn vectorize_rank_one_is_kronecker() {
        let a = steering_vector(21.0, &geom(3)).unwrap();
        let cov = CovarianceMatrix {
            r: &a * a.adjoint(),
            num_snapshots: 1,
        };
        let y = vectorize_covariance(&cov);
        let kron = a.conjugate().kronecker(&a);
        assert!((y.y - kron).norm() < 1e-12);
    }

    #[test]
    fn manifold_column_properties() {
        let g = geom(4);
        let grid = DirectionGrid::from_angles(vec![-30.0, 0.0, 30.0]).unwrap();
        let ca = coarray_manifold(&grid, &g);
        assert!(ca.matrix.column(1).iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        for l in 0..3 {
            assert_abs_diff_eq!(ca.matrix.column(l).norm(), 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn manifold_matches_outer_product() {
        let g = geom(3);
        let grid = DirectionGrid::from_angles(vec![17.0]).unwrap();
        let ca = coarray_manifold(&grid, &g);
        let a = steering_vector(17.0, &g).unwrap();
        let outer = &a * a.adjoint();
        let vec = DVector::from_column_slice(outer.as_slice());
        assert!((ca.matrix.column(0) - vec).norm() < 1e-12);
    }

    #[test]
    fn projection_diagonal_and_dirichlet() {
        let g = geom(4);
        let grid = DirectionGrid::uniform(-60.0, 60.0, 7.0).unwrap();
        let p = projection(&coarray_manifold(&grid, &g));
        let single = projection(&coarray_manifold(&DirectionGrid::from_angles(vec![5.0]).unwrap(), &g));
        assert_abs_diff_eq!(single.p[(0, 0)], 16.0, epsilon = 1e-12);
        let u = |t: f64| std::f64::consts::PI * t.to_radians().sin();
        for i in 0..grid.len() {
            assert_abs_diff_eq!(p.p[(i, i)], 16.0, epsilon = 1e-12);
            for j in 0..grid.len() {
                // closed form |sum_m exp(j m (u_j - u_i))|^2
                let dphi = u(grid.angle(j)) - u(grid.angle(i));
                let s: Complex64 = (0..4).map(|m| Complex64::from_polar(1.0, m as f64 * dphi)).sum();
                assert_abs_diff_eq!(p.p[(i, j)], s.norm_sqr(), epsilon = 1e-10);
                assert!(p.p[(i, j)] >= 0.0);
            }
        }
    }

    #[test]
    fn coarray_dbf_identity_flat() {
        let g = geom(4);
        let grid = DirectionGrid::uniform(-60.0, 60.0, 1.0).unwrap();
        let ca = coarray_manifold(&grid, &g);
        let y = vectorize_covariance(&CovarianceMatrix::identity(4));
        let spec = coarray_dbf(&y, &ca).unwrap();
        assert!(spec.values.iter().all(|v| (v - 4.0).abs() < 1e-12));
        let short = CoarraySignal {
            y: DVector::zeros(9),
            num_elements: 3,
        };
        assert!(coarray_dbf(&short, &ca).is_err());
    }

    #[test]
    fn hpbw_triangle() {
        let grid = DirectionGrid::uniform(-10.0, 10.0, 1.0).unwrap();
        // triangle with peak 1 at 0 deg and base half-width 4 deg -> half power at +-2
        let values = grid.angles().iter().map(|a| (1.0 - a.abs() / 4.0).max(0.0)).collect();
        let spec = SpatialSpectrum::new(values, grid.clone()).unwrap();
        assert_abs_diff_eq!(hpbw(&spec).unwrap(), 4.0, epsilon = 1e-12);
        let edge = SpatialSpectrum::new(grid.angles().iter().map(|a| a + 11.0).collect(), grid).unwrap();
        assert!(hpbw(&edge).is_err());
    }
}
