//! Unit-sphere maps and symmetric positive definite matrix functions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalue floor for matrix logarithms near singular configurations.
pub const SPD_EPS: f64 = 1e-10;

const UNIT_TOL: f64 = 1e-9;
const TANGENT_TOL: f64 = 1e-6;
const ANTIPODAL_TOL: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-9;

/// A point on the sphere S^d, stored as a unit vector in R^(d+1).
#[derive(Clone, Debug, PartialEq)]
pub struct UnitVector(DVector<f64>);

impl UnitVector {
    /// Wraps `v`, which must already have unit norm.
    pub fn new(v: DVector<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnit(n));
        }
        Ok(UnitVector(v))
    }

    /// Normalizes `v`. Fails on zero or non-finite input.
    pub fn normalize(v: DVector<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(Error::NotUnit(n));
        }
        Ok(UnitVector(v / n))
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        Self::normalize(DVector::from_column_slice(v))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn neg(&self) -> Self {
        UnitVector(-&self.0)
    }
}

fn same_len(x: &UnitVector, y: &DVector<f64>) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "sphere point",
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Geodesic distance `arccos(xᵀy)` with the dot product clamped to [-1, 1].
pub fn sphere_distance(x: &UnitVector, y: &UnitVector) -> f64 {
    x.0.dot(&y.0).clamp(-1.0, 1.0).acos()
}

/// Logarithmic map: the tangent vector at `x` pointing along the geodesic to
/// `y`, with length equal to the geodesic distance.
pub fn sphere_log(x: &UnitVector, y: &UnitVector) -> Result<DVector<f64>> {
    same_len(x, &y.0)?;
    let c = x.0.dot(&y.0).clamp(-1.0, 1.0);
    if c <= -1.0 + ANTIPODAL_TOL {
        return Err(Error::AntipodalPoints);
    }
    let perp = &y.0 - &x.0 * c;
    let s = perp.norm();
    if s == 0.0 {
        return Ok(DVector::zeros(x.len()));
    }
    // atan2 keeps full precision for nearby points where acos does not
    let d = s.atan2(c);
    Ok(perp * (d / s))
}

/// Exponential map: follows the geodesic from `x` with initial velocity `u`.
pub fn sphere_exp(x: &UnitVector, u: &DVector<f64>) -> Result<UnitVector> {
    same_len(x, u)?;
    let off = x.0.dot(u).abs();
    if off > TANGENT_TOL {
        return Err(Error::NotTangent(off));
    }
    let n = u.norm();
    if n < 1e-15 {
        return UnitVector::normalize(&x.0 + u);
    }
    let y = &x.0 * n.cos() + u * (n.sin() / n);
    UnitVector::normalize(y)
}

/// Symmetric positive definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        let min = SymmetricEigen::new(m.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::NotSpd(format!("minimum eigenvalue {min:e}")));
        }
        Ok(SpdMatrix(m))
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix(DMatrix::identity(n, n))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `M^(-1/2)` through the symmetric eigendecomposition.
    pub fn inv_sqrt(&self) -> DMatrix<f64> {
        map_eigenvalues(&self.0, |l| 1.0 / l.sqrt())
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotSpd(format!("matrix is {}x{}", m.nrows(), m.ncols())));
    }
    let asym = (m - m.transpose()).abs().max();
    let scale = m.abs().max().max(1.0);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSpd(format!("asymmetry {asym:e}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entry".into()));
    }
    Ok(())
}

/// `V f(Λ) Vᵀ` for a symmetric matrix.
pub(crate) fn map_eigenvalues(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    v * d * v.transpose()
}

/// Matrix logarithm of a symmetric PSD matrix, with a regularization flag.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixLog {
    pub value: DMatrix<f64>,
    /// True when the smallest eigenvalue fell below [`SPD_EPS`] and the
    /// matrix was shifted by `SPD_EPS · I` before taking the logarithm.
    pub regularized: bool,
}

/// Logarithm of a symmetric positive semi-definite matrix. Eigenvalues below
/// [`SPD_EPS`] trigger a `SPD_EPS · I` shift; clearly negative eigenvalues are
/// rejected.
pub fn psd_log(m: &DMatrix<f64>) -> Result<MatrixLog> {
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    if min < -1e-9 * scale {
        return Err(Error::NotSpd(format!("negative eigenvalue {min:e}")));
    }
    let regularized = min < SPD_EPS;
    let shift = if regularized { SPD_EPS } else { 0.0 };
    let v = &eig.eigenvalues;
    let logs = v.map(|l| (l.max(0.0) + shift).ln());
    let value = &eig.eigenvectors * DMatrix::from_diagonal(&logs) * eig.eigenvectors.transpose();
    Ok(MatrixLog { value, regularized })
}

/// Matrix logarithm of an SPD matrix.
pub fn spd_log(m: &SpdMatrix) -> Result<MatrixLog> {
    psd_log(&m.0)
}

/// Matrix exponential of a symmetric matrix (inverse of [`spd_log`]).
pub fn sym_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    map_eigenvalues(m, f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_2, PI};

    fn uv(v: &[f64]) -> UnitVector {
        UnitVector::from_slice(v).unwrap()
    }

    #[test]
    fn distance_basics() {
        let x = uv(&[1.0, 0.0, 0.0]);
        let y = uv(&[0.0, 1.0, 0.0]);
        assert_eq!(sphere_distance(&x, &x), 0.0);
        assert!((sphere_distance(&x, &y) - FRAC_PI_2).abs() < 1e-15);
        assert!((sphere_distance(&x, &x.neg()) - PI).abs() < 1e-15);
    }

    #[test]
    fn log_basics() {
        let x = uv(&[1.0, 0.0, 0.0]);
        let y = uv(&[0.0, 1.0, 0.0]);
        assert_eq!(sphere_log(&x, &x).unwrap().norm(), 0.0);
        let l = sphere_log(&x, &y).unwrap();
        assert!((l - DVector::from_column_slice(&[0.0, FRAC_PI_2, 0.0])).norm() < 1e-15);
        assert!(matches!(sphere_log(&x, &x.neg()), Err(Error::AntipodalPoints)));
    }

    #[test]
    fn exp_basics() {
        let x = uv(&[1.0, 0.0, 0.0]);
        assert_eq!(sphere_exp(&x, &DVector::zeros(3)).unwrap(), x);
        let y = sphere_exp(&x, &DVector::from_column_slice(&[0.0, FRAC_PI_2, 0.0])).unwrap();
        assert!((y.as_vector() - DVector::from_column_slice(&[0.0, 1.0, 0.0])).norm() < 1e-15);
        assert!(matches!(
            sphere_exp(&x, &DVector::from_column_slice(&[0.1, 0.2, 0.0])),
            Err(Error::NotTangent(_))
        ));
    }

    #[test]
    fn unit_vector_validation() {
        assert!(UnitVector::new(DVector::from_column_slice(&[1.0, 1.0])).is_err());
        assert!(UnitVector::normalize(DVector::zeros(2)).is_err());
        assert!(UnitVector::new(DVector::from_column_slice(&[0.6, 0.8])).is_ok());
    }

    #[test]
    fn planar_circle_works() {
        let x = uv(&[1.0, 0.0]);
        let y = uv(&[0.0, -1.0]);
        let l = sphere_log(&x, &y).unwrap();
        assert!((l - DVector::from_column_slice(&[0.0, -FRAC_PI_2])).norm() < 1e-15);
    }

    #[test]
    fn log_of_identity_and_diagonal() {
        let l = spd_log(&SpdMatrix::identity(3)).unwrap();
        assert!(l.value.abs().max() < 1e-15);
        assert!(!l.regularized);
        let m = SpdMatrix::new(DMatrix::from_diagonal(&DVector::from_column_slice(&[E, E * E]))).unwrap();
        let l = spd_log(&m).unwrap().value;
        let expected = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 2.0]));
        assert!((l - expected).abs().max() < 1e-14);
    }

    #[test]
    fn whitened_identity_has_zero_log() {
        let m = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0])).unwrap();
        let w = m.inv_sqrt();
        let x = &w * m.as_matrix() * &w;
        assert!(psd_log(&x).unwrap().value.abs().max() < 1e-9);
    }

    #[test]
    fn near_singular_is_regularized() {
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 0.0]));
        let l = psd_log(&m).unwrap();
        assert!(l.regularized);
        assert!((l.value[(1, 1)] - SPD_EPS.ln()).abs() < 1e-12);
        assert!(psd_log(&DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -1.0]))).is_err());
    }

    #[test]
    fn spd_rejects_bad_input() {
        assert!(SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err());
    }
}
