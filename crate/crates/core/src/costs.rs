//! Task cost terms. Each term evaluates to a value, its gradient with respect
//! to the joint configuration at one timestep, and a positive semi-definite
//! Hessian approximation.
//!
//! Squared-residual terms use Gauss–Newton Hessians `2w JᵣᵀJᵣ`. The
//! manipulability terms have analytic gradients (through the closed-form
//! Jacobian derivative) and a Hessian obtained by differencing that gradient,
//! symmetrized and projected onto the PSD cone.

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};

use crate::chain::{KinematicChain, KinematicState};
use crate::error::{Error, Result};
use crate::geom::{psd_log, sphere_log, SpdMatrix, UnitVector, SPD_EPS};
use crate::manip::JointWeight;

/// Step used when differencing analytic gradients into Hessians.
const HESSIAN_FD_STEP: f64 = 1e-5;

/// Timesteps at which a term is active.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    /// The tool pick-up timestep t′.
    Pick,
    /// The final timestep T.
    Final,
    /// Every timestep.
    All,
    Steps(Vec<usize>),
}

/// Horizon information needed to resolve a [`Schedule`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timeline {
    pub pick: usize,
    pub horizon: usize,
}

impl Schedule {
    pub fn is_active(&self, t: usize, timeline: Timeline) -> bool {
        match self {
            Schedule::Pick => t == timeline.pick,
            Schedule::Final => t == timeline.horizon,
            Schedule::All => t <= timeline.horizon,
            Schedule::Steps(steps) => steps.contains(&t),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostKind {
    /// `(R_gripperᵀ·h)²`: gripper axis `gripper_axis` (local index, 1 = y)
    /// perpendicular to the handle axis `h`.
    Orientation {
        handle_axis: UnitVector,
        gripper_axis: usize,
    },
    /// `‖f(q) − f_d‖²` on the effective end-effector.
    Position { target: DVector<f64> },
    /// `‖Log_{v_h}(v_r)‖²` where `v_r` is local axis `effector_axis` of the
    /// effective end-effector frame.
    Direction {
        desired: UnitVector,
        effector_axis: usize,
    },
    /// Squared excess beyond the joint limits.
    JointLimit,
    /// `(nᵀM̃n)⁻¹`.
    ManDirectional { direction: UnitVector },
    /// `det(M̃)⁻²`.
    ManDeterminant,
    /// `‖log(M_d^{-1/2} M̃ M_d^{-1/2})‖²_F`.
    ManTracking { desired: SpdMatrix },
}

impl CostKind {
    pub fn label(&self) -> &'static str {
        match self {
            CostKind::Orientation { .. } => "orientation",
            CostKind::Position { .. } => "position",
            CostKind::Direction { .. } => "direction",
            CostKind::JointLimit => "joint_limit",
            CostKind::ManDirectional { .. } => "man_directional",
            CostKind::ManDeterminant => "man_determinant",
            CostKind::ManTracking { .. } => "man_tracking",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostTerm {
    pub kind: CostKind,
    pub weight: f64,
    pub schedule: Schedule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostEvaluation {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    /// Set when a manipulability term hit its singularity cap or needed a
    /// regularized matrix logarithm.
    pub singular: bool,
}

impl CostEvaluation {
    pub fn zero(n: usize) -> Self {
        CostEvaluation {
            value: 0.0,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
            singular: false,
        }
    }

    pub fn accumulate(&mut self, other: &CostEvaluation) {
        self.value += other.value;
        self.grad += &other.grad;
        self.hess += &other.hess;
        self.singular |= other.singular;
    }

    fn gauss_newton(weight: f64, residual: &DVector<f64>, jac: &DMatrix<f64>) -> Self {
        CostEvaluation {
            value: weight * residual.norm_squared(),
            grad: jac.transpose() * residual * (2.0 * weight),
            hess: jac.transpose() * jac * (2.0 * weight),
            singular: false,
        }
    }
}

impl CostTerm {
    pub fn new(kind: CostKind, weight: f64, schedule: Schedule) -> Self {
        CostTerm {
            kind,
            weight,
            schedule,
        }
    }

    pub fn label(&self) -> &'static str {
        self.kind.label()
    }

    pub fn validate(&self, chain: &KinematicChain) -> Result<()> {
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return Err(Error::validation(
                self.label(),
                "weight must be finite and non-negative",
            ));
        }
        let w = chain.workspace_dim();
        let check = |n: usize, what: &'static str| -> Result<()> {
            if n != w {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: w,
                    got: n,
                });
            }
            Ok(())
        };
        match &self.kind {
            CostKind::Orientation {
                handle_axis,
                gripper_axis,
            } => {
                check(handle_axis.len(), "handle axis")?;
                if *gripper_axis >= w {
                    return Err(Error::validation("gripper_axis", "axis index out of range"));
                }
            }
            CostKind::Position { target } => check(target.len(), "position target")?,
            CostKind::Direction {
                desired,
                effector_axis,
            } => {
                check(desired.len(), "desired direction")?;
                if *effector_axis >= w {
                    return Err(Error::validation("effector_axis", "axis index out of range"));
                }
            }
            CostKind::JointLimit | CostKind::ManDeterminant => {}
            CostKind::ManDirectional { direction } => check(direction.len(), "manipulability direction")?,
            CostKind::ManTracking { desired } => check(desired.dim(), "desired ellipsoid")?,
        }
        Ok(())
    }

    /// Scheduled evaluation: zero at inactive timesteps.
    pub fn evaluate(
        &self,
        chain: &KinematicChain,
        q: &DVector<f64>,
        t: usize,
        timeline: Timeline,
    ) -> Result<CostEvaluation> {
        if !self.schedule.is_active(t, timeline) {
            if q.len() != chain.dof() {
                return Err(Error::DimensionMismatch {
                    what: "joint vector",
                    expected: chain.dof(),
                    got: q.len(),
                });
            }
            return Ok(CostEvaluation::zero(chain.dof()));
        }
        self.evaluate_unscheduled(chain, q)
    }

    /// Scheduled value only, skipping derivatives. Returns the value and the
    /// singularity flag.
    pub fn value(
        &self,
        chain: &KinematicChain,
        q: &DVector<f64>,
        t: usize,
        timeline: Timeline,
    ) -> Result<(f64, bool)> {
        if !self.schedule.is_active(t, timeline) {
            return Ok((0.0, false));
        }
        let w = self.weight;
        match &self.kind {
            CostKind::ManDirectional { direction } => {
                check_len(direction.as_vector(), chain.workspace_dim(), "manipulability direction")?;
                man_directional_value_grad(chain, q, direction, w).map(|(v, _, s)| (v, s))
            }
            CostKind::ManDeterminant => man_determinant_value_grad(chain, q, w).map(|(v, _, s)| (v, s)),
            CostKind::ManTracking { desired } => {
                let e = cost_man_tracking_value(chain, q, desired, w)?;
                Ok(e)
            }
            _ => self.evaluate_unscheduled(chain, q).map(|e| (e.value, e.singular)),
        }
    }

    /// Evaluation ignoring the schedule.
    pub fn evaluate_unscheduled(&self, chain: &KinematicChain, q: &DVector<f64>) -> Result<CostEvaluation> {
        let w = self.weight;
        let mut eval = match &self.kind {
            CostKind::Orientation {
                handle_axis,
                gripper_axis,
            } => cost_orientation(chain, q, handle_axis, *gripper_axis, w)?,
            CostKind::Position { target } => cost_position(chain, q, target, w)?,
            CostKind::Direction {
                desired,
                effector_axis,
            } => cost_direction(chain, q, desired, *effector_axis, w)?,
            CostKind::JointLimit => cost_joint_limit(q, chain.q_limits(), w)?,
            CostKind::ManDirectional { direction } => cost_man_directional(chain, q, direction, w)?,
            CostKind::ManDeterminant => cost_man_determinant(chain, q, w)?,
            CostKind::ManTracking { desired } => cost_man_tracking(chain, q, desired, w)?,
        };
        eval.hess = psd_floor(&eval.hess);
        Ok(eval)
    }
}

/// Sum of all terms active at `t`. The control cost is handled by the OCP.
pub fn assemble_stage_cost(
    terms: &[CostTerm],
    chain: &KinematicChain,
    q: &DVector<f64>,
    t: usize,
    timeline: Timeline,
) -> Result<CostEvaluation> {
    let mut total = CostEvaluation::zero(q.len());
    for term in terms {
        total.accumulate(&term.evaluate(chain, q, t, timeline)?);
    }
    Ok(total)
}

/// Symmetrizes and clamps negative eigenvalues to zero.
pub fn psd_floor(h: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (h + h.transpose()) * 0.5;
    if sym.nrows() == 0 {
        return sym;
    }
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|l| *l >= 0.0) {
        return sym;
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0)));
    let out = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

fn truncate(v: &Vector3<f64>, w: usize) -> DVector<f64> {
    DVector::from_iterator(w, v.iter().copied().take(w))
}

fn local_axis(rotation: &nalgebra::UnitQuaternion<f64>, axis: usize) -> Vector3<f64> {
    rotation * Vector3::ith(axis, 1.0)
}

fn check_len(v: &DVector<f64>, expected: usize, what: &'static str) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// Grasp orientation: `w·e²` with `e = (R_gripper e_axis)ᵀ h`, evaluated on
/// the gripper frame (never the tool).
pub fn cost_orientation(
    chain: &KinematicChain,
    q: &DVector<f64>,
    handle_axis: &UnitVector,
    gripper_axis: usize,
    weight: f64,
) -> Result<CostEvaluation> {
    let state = chain.state(q)?;
    let w = chain.workspace_dim();
    check_len(handle_axis.as_vector(), w, "handle axis")?;
    let g3 = local_axis(&state.flange.rotation, gripper_axis);
    let g = truncate(&g3, w);
    let h = handle_axis.as_vector();
    let e = g.dot(h);
    let de = state.direction_jacobian(&g3).transpose() * h;
    Ok(CostEvaluation::gauss_newton(
        weight,
        &DVector::from_element(1, e),
        &DMatrix::from_row_slice(1, de.len(), de.as_slice()),
    ))
}

/// Target reaching: `w‖f(q) − f_d‖²`.
pub fn cost_position(
    chain: &KinematicChain,
    q: &DVector<f64>,
    target: &DVector<f64>,
    weight: f64,
) -> Result<CostEvaluation> {
    let state = chain.state(q)?;
    check_len(target, chain.workspace_dim(), "position target")?;
    let r = state.effector_pose().position() - target;
    Ok(CostEvaluation::gauss_newton(weight, &r, &state.jacobian()))
}

/// `d/sin d` and its derivative with respect to `cos d`.
fn log_scale(d: f64) -> (f64, f64) {
    if d < 1e-4 {
        let d2 = d * d;
        (1.0 + d2 / 6.0, -1.0 / 3.0 - 2.0 * d2 / 15.0)
    } else {
        let (s, c) = d.sin_cos();
        let f = d / s;
        (f, (c * f - 1.0) / (s * s))
    }
}

/// Final hitting direction: `w‖Log_{v_h}(v_r)‖²` on the sphere.
pub fn cost_direction(
    chain: &KinematicChain,
    q: &DVector<f64>,
    desired: &UnitVector,
    effector_axis: usize,
    weight: f64,
) -> Result<CostEvaluation> {
    let state = chain.state(q)?;
    let w = chain.workspace_dim();
    check_len(desired.as_vector(), w, "desired direction")?;
    let v3 = local_axis(&state.effector.rotation, effector_axis);
    let y = UnitVector::normalize(truncate(&v3, w))?;
    let e = sphere_log(desired, &y)?;

    let vh = desired.as_vector();
    let y = y.as_vector();
    let c = vh.dot(y).clamp(-1.0, 1.0);
    let proj = DMatrix::<f64>::identity(w, w) - vh * vh.transpose();
    let py = &proj * y;
    let d = py.norm().atan2(c);
    let (f, df) = log_scale(d);
    // e = f(c)·P·y
    let de_dy = &proj * f + &py * vh.transpose() * df;
    let jac = de_dy * state.direction_jacobian(&v3);
    Ok(CostEvaluation::gauss_newton(weight, &e, &jac))
}

/// Joint-limit penalty `‖q_L − q‖²_Λ`: only joints at or beyond a limit are
/// active, and `q_L` is the violated bound.
pub fn cost_joint_limit(q: &DVector<f64>, limits: &[(f64, f64)], weight: f64) -> Result<CostEvaluation> {
    check_len(q, limits.len(), "joint vector")?;
    let n = q.len();
    let mut residual = DVector::zeros(n);
    let mut active = DVector::zeros(n);
    for (i, (lo, hi)) in limits.iter().enumerate() {
        if q[i] >= *hi {
            residual[i] = q[i] - hi;
            active[i] = 1.0;
        } else if q[i] <= *lo {
            residual[i] = q[i] - lo;
            active[i] = 1.0;
        }
    }
    Ok(CostEvaluation {
        value: weight * residual.norm_squared(),
        grad: &residual * (2.0 * weight),
        hess: DMatrix::from_diagonal(&(active * (2.0 * weight))),
        singular: false,
    })
}

/// Quantities shared by the manipulability costs at one configuration.
struct ManipulabilityTerms {
    /// `J W`.
    jw: DMatrix<f64>,
    /// `∂J/∂q_k · W` per joint.
    djw: Vec<DMatrix<f64>>,
}

impl ManipulabilityTerms {
    fn new(chain: &KinematicChain, state: &KinematicState) -> Result<Self> {
        let weight = JointWeight::from_speed_limits(chain.qdot_limits())?;
        let scale = |m: DMatrix<f64>| {
            let mut m = m;
            for (mut col, w) in m.column_iter_mut().zip(weight.diagonal().iter()) {
                col *= *w;
            }
            m
        };
        Ok(ManipulabilityTerms {
            jw: scale(state.jacobian()),
            djw: state.jacobian_derivatives().into_iter().map(scale).collect(),
        })
    }

    fn gram(&self) -> DMatrix<f64> {
        &self.jw * self.jw.transpose()
    }

    /// `∂M̃/∂q_k`.
    fn gram_derivative(&self, k: usize) -> DMatrix<f64> {
        let a = &self.djw[k] * self.jw.transpose();
        &a + a.transpose()
    }
}

/// Value and analytic gradient of a manipulability cost.
type ValueGrad = (f64, DVector<f64>, bool);

fn with_fd_hessian(
    chain: &KinematicChain,
    q: &DVector<f64>,
    f: impl Fn(&KinematicChain, &DVector<f64>) -> Result<ValueGrad>,
) -> Result<CostEvaluation> {
    let (value, grad, singular) = f(chain, q)?;
    let n = q.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut qp = q.clone();
    for k in 0..n {
        qp[k] = q[k] + HESSIAN_FD_STEP;
        let (_, gp, _) = f(chain, &qp)?;
        qp[k] = q[k] - HESSIAN_FD_STEP;
        let (_, gm, _) = f(chain, &qp)?;
        qp[k] = q[k];
        hess.set_column(k, &((gp - gm) / (2.0 * HESSIAN_FD_STEP)));
    }
    Ok(CostEvaluation {
        value,
        grad,
        hess: (&hess + hess.transpose()) * 0.5,
        singular,
    })
}

fn man_directional_value_grad(
    chain: &KinematicChain,
    q: &DVector<f64>,
    n: &UnitVector,
    weight: f64,
) -> Result<ValueGrad> {
    let state = chain.state(q)?;
    let terms = ManipulabilityTerms::new(chain, &state)?;
    let n = n.as_vector();
    let jwt_n = terms.jw.transpose() * n;
    let s = jwt_n.norm_squared();
    if s < SPD_EPS {
        return Ok((weight / SPD_EPS, DVector::zeros(q.len()), true));
    }
    let grad = DVector::from_iterator(
        q.len(),
        terms.djw.iter().map(|djw| {
            let ds = 2.0 * (djw.transpose() * n).dot(&jwt_n);
            -weight * ds / (s * s)
        }),
    );
    Ok((weight / s, grad, false))
}

/// Directional manipulability: `w·(nᵀM̃n)⁻¹ = w‖WᵀJᵀn‖⁻²`.
pub fn cost_man_directional(
    chain: &KinematicChain,
    q: &DVector<f64>,
    direction: &UnitVector,
    weight: f64,
) -> Result<CostEvaluation> {
    check_len(direction.as_vector(), chain.workspace_dim(), "manipulability direction")?;
    with_fd_hessian(chain, q, |c, q| man_directional_value_grad(c, q, direction, weight))
}

fn man_determinant_value_grad(chain: &KinematicChain, q: &DVector<f64>, weight: f64) -> Result<ValueGrad> {
    let state = chain.state(q)?;
    let terms = ManipulabilityTerms::new(chain, &state)?;
    let m = terms.gram();
    let det = m.determinant();
    if det < SPD_EPS {
        return Ok((weight / (SPD_EPS * SPD_EPS), DVector::zeros(q.len()), true));
    }
    let m_inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("manipulability matrix".into()))?;
    let value = weight / (det * det);
    let grad = DVector::from_iterator(
        q.len(),
        (0..q.len()).map(|k| {
            let trace = (&m_inv * terms.gram_derivative(k)).trace();
            -2.0 * value * trace
        }),
    );
    Ok((value, grad, false))
}

/// Volume ("common metric"): `w·det(M̃)⁻²`.
pub fn cost_man_determinant(chain: &KinematicChain, q: &DVector<f64>, weight: f64) -> Result<CostEvaluation> {
    with_fd_hessian(chain, q, |c, q| man_determinant_value_grad(c, q, weight))
}

fn man_tracking_value_grad(
    chain: &KinematicChain,
    q: &DVector<f64>,
    whitening: &DMatrix<f64>,
    weight: f64,
) -> Result<ValueGrad> {
    let state = chain.state(q)?;
    let terms = ManipulabilityTerms::new(chain, &state)?;
    let x = whitening * terms.gram() * whitening;
    let x = (&x + x.transpose()) * 0.5;
    let log = psd_log(&x)?;
    let value = weight * log.value.norm_squared();
    let shift = if log.regularized { SPD_EPS } else { 0.0 };
    let n = x.nrows();
    let x_inv = (&x + DMatrix::identity(n, n) * shift)
        .try_inverse()
        .ok_or_else(|| Error::Singular("whitened manipulability".into()))?;
    let l_xinv = &log.value * x_inv;
    let grad = DVector::from_iterator(
        q.len(),
        (0..q.len()).map(|k| {
            let dx = whitening * terms.gram_derivative(k) * whitening;
            2.0 * weight * (&l_xinv * dx).trace()
        }),
    );
    Ok((value, grad, log.regularized))
}

/// Desired-ellipsoid tracking: `w‖log(M_d^{-1/2} M̃ M_d^{-1/2})‖²_F`.
pub fn cost_man_tracking(
    chain: &KinematicChain,
    q: &DVector<f64>,
    desired: &SpdMatrix,
    weight: f64,
) -> Result<CostEvaluation> {
    if desired.dim() != chain.workspace_dim() {
        return Err(Error::DimensionMismatch {
            what: "desired ellipsoid",
            expected: chain.workspace_dim(),
            got: desired.dim(),
        });
    }
    let whitening = desired.inv_sqrt();
    with_fd_hessian(chain, q, |c, q| {
        man_tracking_value_grad(c, q, &whitening, weight)
    })
}

fn cost_man_tracking_value(
    chain: &KinematicChain,
    q: &DVector<f64>,
    desired: &SpdMatrix,
    weight: f64,
) -> Result<(f64, bool)> {
    if desired.dim() != chain.workspace_dim() {
        return Err(Error::DimensionMismatch {
            what: "desired ellipsoid",
            expected: chain.workspace_dim(),
            got: desired.dim(),
        });
    }
    let state = chain.state(q)?;
    let terms = ManipulabilityTerms::new(chain, &state)?;
    let whitening = desired.inv_sqrt();
    let x = &whitening * terms.gram() * &whitening;
    let log = psd_log(&((&x + x.transpose()) * 0.5))?;
    Ok((weight * log.value.norm_squared(), log.regularized))
}

/// Affine-invariant squared distance `‖log(A^{-1/2} B A^{-1/2})‖²_F`.
pub fn spd_distance_squared(a: &SpdMatrix, b: &DMatrix<f64>) -> Result<f64> {
    let w = a.inv_sqrt();
    let x = &w * b * &w;
    Ok(psd_log(&((&x + x.transpose()) * 0.5))?.value.norm_squared())
}

/// `R·diag(major, minor, …)·Rᵀ` with the first column of `R` equal to `n`.
pub fn make_desired_ellipsoid(n: &UnitVector, major: f64, minor: f64) -> Result<SpdMatrix> {
    if !(major > minor && minor > 0.0) {
        return Err(Error::InvalidArgument(
            "desired ellipsoid needs major > minor > 0".into(),
        ));
    }
    let n = n.as_vector();
    let d = n.len();
    // Gram–Schmidt from n and the standard basis
    let mut basis: Vec<DVector<f64>> = vec![n.clone()];
    for i in 0..d {
        if basis.len() == d {
            break;
        }
        let mut v = DVector::from_fn(d, |r, _| if r == i { 1.0 } else { 0.0 });
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.push(v / norm);
        }
    }
    let r = DMatrix::from_columns(&basis);
    let mut diag = DVector::from_element(d, minor);
    diag[0] = major;
    let m = &r * DMatrix::from_diagonal(&diag) * r.transpose();
    SpdMatrix::new((&m + m.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Pose;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn uv(v: &[f64]) -> UnitVector {
        UnitVector::from_slice(v).unwrap()
    }

    fn planar() -> KinematicChain {
        KinematicChain::preset("planar3").unwrap()
    }

    #[test]
    fn orientation_values() {
        let c = planar();
        // at q = 0 the gripper y-axis is world y
        let q = dv(&[0.0; 3]);
        let perp = cost_orientation(&c, &q, &uv(&[1.0, 0.0]), 1, 10.0).unwrap();
        assert!(perp.value.abs() < 1e-20);
        let par = cost_orientation(&c, &q, &uv(&[0.0, 1.0]), 1, 10.0).unwrap();
        assert!((par.value - 10.0).abs() < 1e-12);
        let diag = cost_orientation(&c, &q, &uv(&[1.0, 1.0]), 1, 10.0).unwrap();
        assert!((diag.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn orientation_is_scheduled_at_pick() {
        let term = CostTerm::new(
            CostKind::Orientation {
                handle_axis: uv(&[0.0, 1.0]),
                gripper_axis: 1,
            },
            10.0,
            Schedule::Pick,
        );
        let tl = Timeline { pick: 5, horizon: 10 };
        let q = dv(&[0.0; 3]);
        assert_eq!(term.evaluate(&planar(), &q, 4, tl).unwrap(), CostEvaluation::zero(3));
        assert!((term.evaluate(&planar(), &q, 5, tl).unwrap().value - 10.0).abs() < 1e-12);
    }

    #[test]
    fn position_values() {
        let c = planar();
        let q = dv(&[0.0; 3]);
        assert!(cost_position(&c, &q, &dv(&[3.0, 0.0]), 100.0).unwrap().value < 1e-20);
        let e = cost_position(&c, &q, &dv(&[3.0, 1.0]), 100.0).unwrap();
        assert!((e.value - 100.0).abs() < 1e-10);
        // 2 w Jᵀ(f - f_d) with f - f_d = (0, -1), J = [[0,0,0],[3,2,1]]
        assert!((e.grad - dv(&[-600.0, -400.0, -200.0])).norm() < 1e-9);
    }

    #[test]
    fn direction_values() {
        let c = planar();
        let q = dv(&[0.0; 3]);
        // effector x-axis is world x at q = 0
        let same = cost_direction(&c, &q, &uv(&[1.0, 0.0]), 0, 10.0).unwrap();
        assert!(same.value < 1e-20);
        let orth = cost_direction(&c, &q, &uv(&[0.0, 1.0]), 0, 10.0).unwrap();
        assert!((orth.value - 10.0 * FRAC_PI_2 * FRAC_PI_2).abs() < 1e-12);
        assert!(matches!(
            cost_direction(&c, &q, &uv(&[-1.0, 0.0]), 0, 10.0),
            Err(Error::AntipodalPoints)
        ));
    }

    #[test]
    fn joint_limit_values() {
        let limits = vec![(-1.0, 1.0); 3];
        let inside = cost_joint_limit(&dv(&[0.0, 0.5, -0.5]), &limits, 1.0).unwrap();
        assert_eq!(inside.value, 0.0);
        let over = cost_joint_limit(&dv(&[1.1, 0.0, 0.0]), &limits, 1.0).unwrap();
        assert!((over.value - 0.01).abs() < 1e-12);
        let both = cost_joint_limit(&dv(&[1.2, -1.3, 0.0]), &limits, 1.0).unwrap();
        assert!((both.value - (0.04 + 0.09)).abs() < 1e-12);
        assert_eq!(both.hess[(2, 2)], 0.0);
        assert_eq!(both.hess[(0, 0)], 2.0);
    }

    #[test]
    fn man_directional_values() {
        let c = planar();
        let e = cost_man_directional(&c, &dv(&[0.0; 3]), &uv(&[0.0, 1.0]), 1.0).unwrap();
        assert!((e.value - 1.0 / 14.0).abs() < 1e-12);
        assert!(!e.singular);
        // straight arm has no reach along x
        let s = cost_man_directional(&c, &dv(&[0.0; 3]), &uv(&[1.0, 0.0]), 1.0).unwrap();
        assert!(s.singular);
        assert!((s.value - 1.0 / SPD_EPS).abs() < 1.0);
    }

    #[test]
    fn man_determinant_matches_index() {
        let c = planar();
        let q = dv(&[0.3, 0.9, -0.4]);
        let e = cost_man_determinant(&c, &q, 2.0).unwrap();
        let m = crate::manip::velocity_manipulability(&c, &q, true).unwrap();
        let idx = m.index().unwrap();
        assert!((e.value - 2.0 / idx.powi(4)).abs() < 1e-9 * e.value);
    }

    #[test]
    fn man_tracking_zero_at_desired() {
        let c = planar();
        let q = dv(&[0.3, 0.9, -0.4]);
        let m = crate::manip::velocity_manipulability(&c, &q, true).unwrap();
        let desired = SpdMatrix::new(m.matrix().clone()).unwrap();
        let e = cost_man_tracking(&c, &q, &desired, 3.0).unwrap();
        assert!(e.value < 1e-18);
        assert!(e.grad.norm() < 1e-8);
    }

    #[test]
    fn tracking_diagonal_case() {
        let md = SpdMatrix::identity(2);
        let e2 = std::f64::consts::E.powi(2);
        let m = DMatrix::from_diagonal(&dv(&[e2, e2]));
        assert!((spd_distance_squared(&md, &m).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn desired_ellipsoid_layout() {
        let m = make_desired_ellipsoid(&uv(&[1.0, 0.0, 0.0]), 4.0, 1.0).unwrap();
        let expected = DMatrix::from_diagonal(&dv(&[4.0, 1.0, 1.0]));
        assert!((m.as_matrix() - expected).abs().max() < 1e-12);
        let n = uv(&[1.0, 1.0]);
        let m = make_desired_ellipsoid(&n, 9.0, 0.25).unwrap();
        let alpha = crate::manip::directional_projection(m.as_matrix(), &n);
        assert!((alpha - 3.0).abs() < 1e-12);
        assert!(make_desired_ellipsoid(&n, 1.0, 2.0).is_err());
    }

    #[test]
    fn empty_stage_is_zero() {
        let tl = Timeline { pick: 5, horizon: 10 };
        let e = assemble_stage_cost(&[], &planar(), &dv(&[0.1, 0.2, 0.3]), 3, tl).unwrap();
        assert_eq!(e, CostEvaluation::zero(3));
    }

    #[test]
    fn direction_with_tool_uses_tool_axis() {
        let c = planar();
        let q = dv(&[0.0; 3]);
        // tool rotated 90° relative to the gripper
        let ext = c
            .attach_tool(&Pose::planar(3.0, 0.0, 0.0), &Pose::planar(3.0, 0.5, FRAC_PI_2), 0)
            .unwrap();
        let e = cost_direction(&ext, &q, &uv(&[0.0, 1.0]), 0, 1.0).unwrap();
        assert!(e.value < 1e-20);
        let e = cost_direction(&ext, &q, &uv(&[1.0, 1.0]), 0, 1.0).unwrap();
        assert!((e.value - FRAC_PI_4 * FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn psd_floor_clamps() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let f = psd_floor(&h);
        assert!((f[(1, 1)]).abs() < 1e-15 && (f[(0, 0)] - 1.0).abs() < 1e-15);
    }
}
