//! Velocity manipulability ellipsoids and the scalar metrics derived from
//! them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::chain::KinematicChain;
use crate::error::{Error, Result};
use crate::geom::UnitVector;

/// Diagonal joint weighting `W = diag(qdot_max) / max(qdot_max)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointWeight(DVector<f64>);

impl JointWeight {
    pub fn from_speed_limits(limits: &[f64]) -> Result<Self> {
        if limits.is_empty() || limits.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "joint speed limits must be positive".into(),
            ));
        }
        let max = limits.iter().copied().fold(0.0, f64::max);
        Ok(JointWeight(DVector::from_iterator(
            limits.len(),
            limits.iter().map(|v| v / max),
        )))
    }

    pub fn identity(n: usize) -> Self {
        JointWeight(DVector::from_element(n, 1.0))
    }

    pub fn diagonal(&self) -> &DVector<f64> {
        &self.0
    }

    /// `J W Wᵀ Jᵀ`.
    pub fn weighted_gram(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        let mut jw = j.clone();
        for (mut col, w) in jw.column_iter_mut().zip(self.0.iter()) {
            col *= *w;
        }
        &jw * jw.transpose()
    }
}

/// Velocity manipulability ellipsoid with its cached eigendecomposition.
/// Eigenvalues are sorted in decreasing order.
#[derive(Clone, Debug)]
pub struct ManipulabilityEllipsoid {
    matrix: DMatrix<f64>,
    center: DVector<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl ManipulabilityEllipsoid {
    pub fn new(matrix: DMatrix<f64>, center: DVector<f64>) -> Self {
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        ManipulabilityEllipsoid {
            matrix,
            center,
            eigenvalues,
            eigenvectors,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Semi-axis lengths `√λᵢ`.
    pub fn semi_axes(&self) -> DVector<f64> {
        self.eigenvalues.map(|l| l.max(0.0).sqrt())
    }

    pub fn projection(&self, u: &UnitVector) -> f64 {
        directional_projection(&self.matrix, u)
    }

    pub fn index(&self) -> Result<f64> {
        manipulability_index(&self.matrix)
    }

    pub fn record(&self) -> EllipsoidRecord {
        let n = self.eigenvalues.len();
        EllipsoidRecord {
            center: self.center.iter().copied().collect(),
            eigenvalues: self.eigenvalues.iter().copied().collect(),
            eigenvectors: (0..n)
                .map(|c| self.eigenvectors.column(c).iter().copied().collect())
                .collect(),
        }
    }
}

/// Plain export form of an ellipsoid. `eigenvectors[i]` belongs to
/// `eigenvalues[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidRecord {
    pub center: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
}

/// `M = JJᵀ` (or `JWWᵀJᵀ` when `weighted`) at the effective end-effector.
pub fn velocity_manipulability(
    chain: &KinematicChain,
    q: &DVector<f64>,
    weighted: bool,
) -> Result<ManipulabilityEllipsoid> {
    let state = chain.state(q)?;
    let j = state.jacobian();
    let w = if weighted {
        JointWeight::from_speed_limits(chain.qdot_limits())?
    } else {
        JointWeight::identity(chain.dof())
    };
    Ok(ManipulabilityEllipsoid::new(
        w.weighted_gram(&j),
        state.effector_pose().position(),
    ))
}

/// `α = √(uᵀMu)`, the ellipsoid extent along `u`.
pub fn directional_projection(m: &DMatrix<f64>, u: &UnitVector) -> f64 {
    let u = u.as_vector();
    (u.transpose() * m * u)[(0, 0)].max(0.0).sqrt()
}

/// `√det(M)`. Slightly negative determinants from round-off are clamped to
/// zero; anything below `-1e-12` is reported.
pub fn manipulability_index(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::InvalidArgument("manipulability matrix must be square".into()));
    }
    let det = m.determinant();
    if det < -1e-12 {
        return Err(Error::NotSpd(format!("negative determinant {det:e}")));
    }
    Ok(det.max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpactProxy {
    /// Weighted directional manipulability along the task direction (m/s per
    /// unit normalized joint speed).
    pub alpha: f64,
    /// False when no tool was attached and the bare flange was used.
    pub tool_attached: bool,
}

/// Pre-impact tool-head speed proxy: the weighted ellipsoid of the
/// tool-extended chain projected on the task direction `n`.
pub fn impact_velocity_proxy(
    chain: &KinematicChain,
    q: &DVector<f64>,
    n: &UnitVector,
) -> Result<ImpactProxy> {
    if n.len() != chain.workspace_dim() {
        return Err(Error::DimensionMismatch {
            what: "task direction",
            expected: chain.workspace_dim(),
            got: n.len(),
        });
    }
    let e = velocity_manipulability(chain, q, true)?;
    Ok(ImpactProxy {
        alpha: e.projection(n),
        tool_attached: chain.tool().is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Pose;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn straight_planar_arm() {
        let c = KinematicChain::preset("planar3").unwrap();
        let e = velocity_manipulability(&c, &dv(&[0.0; 3]), false).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 14.0]);
        assert!((e.matrix() - expected).abs().max() < 1e-12);
        let x = UnitVector::from_slice(&[1.0, 0.0]).unwrap();
        let y = UnitVector::from_slice(&[0.0, 1.0]).unwrap();
        assert!(e.projection(&x) < 1e-12);
        assert!((e.projection(&y) - 14f64.sqrt()).abs() < 1e-12);
        assert!(e.index().unwrap() < 1e-6);
    }

    #[test]
    fn panda_weights() {
        let c = KinematicChain::preset("spatial7").unwrap();
        let w = JointWeight::from_speed_limits(c.qdot_limits()).unwrap();
        for i in 0..4 {
            assert!((w.diagonal()[i] - 2.175 / 2.61).abs() < 1e-12);
        }
        for i in 4..7 {
            assert_eq!(w.diagonal()[i], 1.0);
        }
    }

    #[test]
    fn unit_weights_match_unweighted() {
        let c = KinematicChain::preset("planar3").unwrap();
        let q = dv(&[0.3, -0.5, 1.1]);
        let a = velocity_manipulability(&c, &q, false).unwrap();
        let b = velocity_manipulability(&c, &q, true).unwrap();
        assert!((a.matrix() - b.matrix()).abs().max() < 1e-15);
    }

    #[test]
    fn index_and_projection_on_simple_matrices() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert!((manipulability_index(&i3).unwrap() - 1.0).abs() < 1e-15);
        let d = DMatrix::from_diagonal(&dv(&[4.0, 9.0]));
        assert!((manipulability_index(&d).unwrap() - 6.0).abs() < 1e-12);
        let u = UnitVector::from_slice(&[0.3, -0.4, 0.5]).unwrap();
        assert!((directional_projection(&i3, &u) - 1.0).abs() < 1e-15);
        let neg = DMatrix::from_diagonal(&dv(&[1.0, -1.0]));
        assert!(manipulability_index(&neg).is_err());
    }

    #[test]
    fn top_eigenvector_gives_largest_projection() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let e = ManipulabilityEllipsoid::new(m, dv(&[0.0, 0.0]));
        let top = UnitVector::new(e.eigenvectors().column(0).into_owned()).unwrap();
        assert!((e.projection(&top) - e.eigenvalues()[0].sqrt()).abs() < 1e-12);
        assert!(e.eigenvalues()[0] >= e.eigenvalues()[1]);
    }

    #[test]
    fn proxy_flags_missing_tool() {
        let c = KinematicChain::preset("planar3").unwrap();
        let n = UnitVector::from_slice(&[0.0, 1.0]).unwrap();
        let p = impact_velocity_proxy(&c, &dv(&[0.2, 0.4, 0.1]), &n).unwrap();
        assert!(!p.tool_attached);
        assert!(p.alpha > 0.0);
    }

    #[test]
    fn sliding_the_grip_along_the_tool_keeps_the_tool_direction_projection() {
        let c = KinematicChain::preset("planar3").unwrap();
        let q = dv(&[0.3, -0.5, 0.8]);
        let flange = c.flange_pose(&q).unwrap();
        let d = flange.axis(0);
        let theta = d[1].atan2(d[0]);
        let at = |s: f64| {
            let p = flange.position() + &d * s;
            Pose::planar(p[0], p[1], theta)
        };
        let head = at(0.8);
        let a = c.attach_tool(&at(0.0), &head, 0).unwrap();
        let b = c.attach_tool(&at(0.3), &head, 0).unwrap();
        let ma = velocity_manipulability(&a, &q, true).unwrap();
        let mb = velocity_manipulability(&b, &q, true).unwrap();
        let along = UnitVector::new(d.clone()).unwrap();
        assert!((ma.projection(&along) - mb.projection(&along)).abs() < 1e-12);
        let across = UnitVector::from_slice(&[-d[1], d[0]]).unwrap();
        assert!((ma.projection(&across) - mb.projection(&across)).abs() > 1e-3);
    }
}
