//! Consensus ADMM around the regularized iLQR subproblem: projections,
//! dual updates, residuals and the outer loop.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::costs::Timeline;
use crate::error::{Error, Result};
use crate::manip::{self, EllipsoidRecord};
use crate::ocp::{
    self, line_search, linearize, rollout, unstack, BoundChains, Regularization, TaskModel, Trajectory,
};
use crate::geom::UnitVector;

/// Smallest accepted half extent of an oriented box (m).
pub const MIN_HALF_EXTENT: f64 = 5e-4;

/// Points violating a bound by at most this much (relative, floored at 1)
/// count as feasible and are returned unchanged by the projections.
pub const FEASIBILITY_TOL: f64 = 1e-12;

fn slack(bound: f64) -> f64 {
    FEASIBILITY_TOL * bound.abs().max(1.0)
}

/// Componentwise clip of `v` to `[lower, upper]`.
pub fn project_box(v: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i].max(lower[i]).min(upper[i]))
}

/// Projection onto the slab `l ≤ aᵀx ≤ u`.
pub fn project_affine(x: &DVector<f64>, a: &DVector<f64>, lower: f64, upper: f64) -> Result<DVector<f64>> {
    let nn = a.norm_squared();
    if !(nn > 0.0) {
        return Err(Error::InvalidArgument("halfspace normal must be non-zero".into()));
    }
    if a.len() != x.len() {
        return Err(Error::DimensionMismatch {
            what: "halfspace normal",
            expected: x.len(),
            got: a.len(),
        });
    }
    let v = a.dot(x);
    Ok(if v > upper + slack(upper) {
        x - a * ((v - upper) / nn)
    } else if v < lower - slack(lower) {
        x - a * ((v - lower) / nn)
    } else {
        x.clone()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrientedBox {
    center: DVector<f64>,
    rotation: DMatrix<f64>,
    half_extents: DVector<f64>,
}

impl OrientedBox {
    /// `rotation` columns are the box axes in the world frame.
    pub fn new(center: DVector<f64>, rotation: DMatrix<f64>, half_extents: DVector<f64>) -> Result<Self> {
        let n = center.len();
        if rotation.nrows() != n || rotation.ncols() != n || half_extents.len() != n {
            return Err(Error::DimensionMismatch {
                what: "oriented box",
                expected: n,
                got: half_extents.len(),
            });
        }
        let err = (rotation.transpose() * &rotation - DMatrix::identity(n, n)).abs().max();
        if err > 1e-9 {
            return Err(Error::NotOrthonormal);
        }
        if half_extents.iter().any(|h| !(*h >= MIN_HALF_EXTENT) || !h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "box half extents must be at least {MIN_HALF_EXTENT} m"
            )));
        }
        Ok(OrientedBox {
            center,
            rotation,
            half_extents,
        })
    }

    pub fn axis_aligned(center: DVector<f64>, half_extents: DVector<f64>) -> Result<Self> {
        let n = center.len();
        Self::new(center, DMatrix::identity(n, n), half_extents)
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn half_extents(&self) -> &DVector<f64> {
        &self.half_extents
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn to_local(&self, p: &DVector<f64>) -> DVector<f64> {
        self.rotation.transpose() * (p - &self.center)
    }

    pub fn contains(&self, p: &DVector<f64>, tol: f64) -> bool {
        let l = self.to_local(p);
        l.iter().zip(self.half_extents.iter()).all(|(v, h)| v.abs() <= h + tol)
    }

    /// Euclidean distance from `p` to the box (zero inside).
    pub fn distance(&self, p: &DVector<f64>) -> f64 {
        (project_oriented_box(p, self) - p).norm()
    }

    /// World corners, in binary order of the local sign pattern.
    pub fn corners(&self) -> Vec<DVector<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                let local = DVector::from_fn(n, |i, _| {
                    if mask >> i & 1 == 1 {
                        self.half_extents[i]
                    } else {
                        -self.half_extents[i]
                    }
                });
                &self.center + &self.rotation * local
            })
            .collect()
    }
}

/// Clip in the box frame, then rotate back. Points inside (within
/// [`FEASIBILITY_TOL`]) are returned unchanged.
pub fn project_oriented_box(p: &DVector<f64>, b: &OrientedBox) -> DVector<f64> {
    let local = b.to_local(p);
    if local.iter().zip(b.half_extents.iter()).all(|(v, h)| v.abs() <= h + slack(*h)) {
        return p.clone();
    }
    let clipped = project_box(&local, &(-&b.half_extents), &b.half_extents);
    &b.center + &b.rotation * clipped
}

/// `l ≤ aᵀp_t ≤ u` on the position block at `step`.
#[derive(Clone, Debug, PartialEq)]
pub struct Halfspace {
    pub normal: DVector<f64>,
    pub lower: f64,
    pub upper: f64,
    pub step: usize,
}

/// Sizes needed to address blocks of the stacked state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateLayout {
    pub dof: usize,
    pub workspace_dim: usize,
    pub horizon: usize,
}

impl StateLayout {
    pub fn state_dim(&self) -> usize {
        self.dof + self.workspace_dim
    }

    pub fn state_len(&self) -> usize {
        self.state_dim() * (self.horizon + 1)
    }

    pub fn control_len(&self) -> usize {
        self.dof * self.horizon
    }

    /// Offset of `p_t` in the stacked state.
    pub fn p_offset(&self, t: usize) -> usize {
        t * self.state_dim() + self.dof
    }
}

pub trait Projection {
    fn project_state(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn project_controls(&self, u: &DVector<f64>) -> Result<DVector<f64>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    pub layout: StateLayout,
    /// Per-joint control bounds applied at every step.
    pub control_lower: DVector<f64>,
    pub control_upper: DVector<f64>,
    pub via_box: Option<OrientedBox>,
    pub via_step: usize,
    pub halfspaces: Vec<Halfspace>,
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<()> {
        let d = self.layout.dof;
        if self.control_lower.len() != d || self.control_upper.len() != d {
            return Err(Error::DimensionMismatch {
                what: "control bounds",
                expected: d,
                got: self.control_lower.len(),
            });
        }
        if self.control_lower.iter().zip(self.control_upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::validation("control_bounds_rad_per_s", "lower bound must be below upper bound"));
        }
        if let Some(b) = &self.via_box {
            if b.dim() != self.layout.workspace_dim {
                return Err(Error::DimensionMismatch {
                    what: "via box",
                    expected: self.layout.workspace_dim,
                    got: b.dim(),
                });
            }
        }
        if self.via_step > self.layout.horizon {
            return Err(Error::validation("t_pick_step", "beyond the horizon"));
        }
        for h in &self.halfspaces {
            if h.normal.len() != self.layout.workspace_dim {
                return Err(Error::DimensionMismatch {
                    what: "halfspace normal",
                    expected: self.layout.workspace_dim,
                    got: h.normal.len(),
                });
            }
            if !(h.normal.norm() > 0.0) || !(h.lower <= h.upper) || h.step > self.layout.horizon {
                return Err(Error::validation("halfspaces", "needs a non-zero normal, lower ≤ upper and a step within the horizon"));
            }
        }
        Ok(())
    }

    /// 1 on the stacked-state components touched by a state constraint.
    pub fn state_mask(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.layout.state_len());
        let w = self.layout.workspace_dim;
        if self.via_box.is_some() {
            m.rows_mut(self.layout.p_offset(self.via_step), w).fill(1.0);
        }
        for h in &self.halfspaces {
            let off = self.layout.p_offset(h.step);
            for i in 0..w {
                if h.normal[i] != 0.0 {
                    m[off + i] = 1.0;
                }
            }
        }
        m
    }

    /// Aggregate norm of the control-box violation.
    pub fn control_violation(&self, u: &DVector<f64>) -> Result<f64> {
        Ok((self.project_controls(u)? - u).norm())
    }
}

impl Projection for ConstraintSet {
    /// Box at the via step, then each halfspace in order.
    fn project_state(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.layout.state_len() {
            return Err(Error::DimensionMismatch {
                what: "stacked state",
                expected: self.layout.state_len(),
                got: x.len(),
            });
        }
        let w = self.layout.workspace_dim;
        let mut z = x.clone();
        if let Some(b) = &self.via_box {
            let off = self.layout.p_offset(self.via_step);
            let p = z.rows(off, w).into_owned();
            z.rows_mut(off, w).copy_from(&project_oriented_box(&p, b));
        }
        for h in &self.halfspaces {
            let off = self.layout.p_offset(h.step);
            let p = z.rows(off, w).into_owned();
            z.rows_mut(off, w)
                .copy_from(&project_affine(&p, &h.normal, h.lower, h.upper)?);
        }
        Ok(z)
    }

    fn project_controls(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.layout.control_len() {
            return Err(Error::DimensionMismatch {
                what: "stacked controls",
                expected: self.layout.control_len(),
                got: u.len(),
            });
        }
        let d = self.layout.dof;
        Ok(DVector::from_fn(u.len(), |i, _| {
            u[i].max(self.control_lower[i % d]).min(self.control_upper[i % d])
        }))
    }
}

/// Box constraint on a plain decision vector with no controls.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Projection for VectorBox {
    fn project_state(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(project_box(x, &self.lower, &self.upper))
    }

    fn project_controls(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(u.clone())
    }
}

/// `z_x = Π_x(x̂ + λ_x)`, `z_u = Π_u(û + λ_u)`.
pub fn z_update(
    x_hat: &DVector<f64>,
    u_hat: &DVector<f64>,
    lambda_x: &DVector<f64>,
    lambda_u: &DVector<f64>,
    constraints: &impl Projection,
) -> Result<(DVector<f64>, DVector<f64>)> {
    Ok((
        constraints.project_state(&(x_hat + lambda_x))?,
        constraints.project_controls(&(u_hat + lambda_u))?,
    ))
}

pub fn dual_update(lambda: &DVector<f64>, x_hat: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
    lambda + x_hat - z
}

/// Squared-norm primal and dual residuals.
pub fn residuals(
    x_hat: &DVector<f64>,
    u_hat: &DVector<f64>,
    z_x: &DVector<f64>,
    z_u: &DVector<f64>,
    z_x_prev: &DVector<f64>,
    z_u_prev: &DVector<f64>,
) -> (f64, f64) {
    let r_p = (u_hat - z_u).norm_squared() + (x_hat - z_x).norm_squared();
    let r_d = (z_x_prev - z_x).norm_squared() + (z_u_prev - z_u).norm_squared();
    (r_p, r_d)
}

/// Record of one inner (smooth) solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InnerRecord {
    /// Objective after each inner iteration.
    pub costs: Vec<f64>,
    /// Accepted step per inner iteration (0 = no progress).
    pub alphas: Vec<f64>,
}

impl InnerRecord {
    pub fn iterations(&self) -> usize {
        self.costs.len()
    }
}

/// The smooth half of the splitting: minimizes its objective plus the
/// penalty towards `(x_r, u_r)` and keeps the result as the new nominal.
pub trait Subproblem {
    fn state(&self) -> DVector<f64>;
    fn controls(&self) -> DVector<f64>;
    fn solve(&mut self, x_r: &DVector<f64>, u_r: &DVector<f64>) -> Result<InnerRecord>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmmSettings {
    pub max_iters: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings {
            max_iters: 20,
            primal_tol: 1e-4,
            dual_tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterRecord {
    pub iteration: usize,
    pub inner: InnerRecord,
    pub r_p: f64,
    pub r_d: f64,
}

#[derive(Clone, Debug)]
pub struct AdmmOutcome {
    pub z_x: DVector<f64>,
    pub z_u: DVector<f64>,
    pub lambda_x: DVector<f64>,
    pub lambda_u: DVector<f64>,
    pub history: Vec<OuterRecord>,
    pub converged: bool,
    /// Set when the subproblem or a projection failed.
    pub abort: Option<String>,
}

/// Outer loop. Consensus and dual variables start at zero.
pub fn run_admm(
    sub: &mut impl Subproblem,
    constraints: &impl Projection,
    settings: &AdmmSettings,
) -> AdmmOutcome {
    let nx = sub.state().len();
    let nu = sub.controls().len();
    let mut out = AdmmOutcome {
        z_x: DVector::zeros(nx),
        z_u: DVector::zeros(nu),
        lambda_x: DVector::zeros(nx),
        lambda_u: DVector::zeros(nu),
        history: Vec::new(),
        converged: false,
        abort: None,
    };
    for k in 0..settings.max_iters {
        let x_r = &out.z_x - &out.lambda_x;
        let u_r = &out.z_u - &out.lambda_u;
        let inner = match sub.solve(&x_r, &u_r) {
            Ok(r) => r,
            Err(e) => {
                out.abort = Some(e.to_string());
                break;
            }
        };
        let x_hat = sub.state();
        let u_hat = sub.controls();
        let (z_x, z_u) = match z_update(&x_hat, &u_hat, &out.lambda_x, &out.lambda_u, constraints) {
            Ok(z) => z,
            Err(e) => {
                out.abort = Some(e.to_string());
                break;
            }
        };
        out.lambda_x = dual_update(&out.lambda_x, &x_hat, &z_x);
        out.lambda_u = dual_update(&out.lambda_u, &u_hat, &z_u);
        let (r_p, r_d) = residuals(&x_hat, &u_hat, &z_x, &z_u, &out.z_x, &out.z_u);
        out.z_x = z_x;
        out.z_u = z_u;
        out.history.push(OuterRecord {
            iteration: k,
            inner,
            r_p,
            r_d,
        });
        if r_p <= settings.primal_tol && r_d <= settings.dual_tol {
            out.converged = true;
            break;
        }
    }
    out
}

/// `min (x − target)²` with penalty `ρ‖x − x_r‖²`, solved in closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarQuadratic {
    pub target: f64,
    pub rho: f64,
    pub x: f64,
}

impl Subproblem for ScalarQuadratic {
    fn state(&self) -> DVector<f64> {
        DVector::from_element(1, self.x)
    }

    fn controls(&self) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn solve(&mut self, x_r: &DVector<f64>, _u_r: &DVector<f64>) -> Result<InnerRecord> {
        self.x = (self.target + self.rho * x_r[0]) / (1.0 + self.rho);
        Ok(InnerRecord {
            costs: vec![(self.x - self.target).powi(2)],
            alphas: vec![1.0],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerSettings {
    pub max_iters: usize,
    pub cost_threshold: f64,
    pub alpha_min: f64,
    pub printed_formula: bool,
}

impl Default for InnerSettings {
    fn default() -> Self {
        InnerSettings {
            max_iters: 10,
            cost_threshold: 1.0,
            alpha_min: ocp::ALPHA_MIN,
            printed_formula: false,
        }
    }
}

/// Regularized batch iLQR as the ADMM subproblem.
#[derive(Clone, Debug)]
pub struct IlqrSubproblem {
    pub model: TaskModel,
    pub q0: DVector<f64>,
    pub traj: Trajectory,
    /// Diagonal of `Q_r`.
    pub q_r: DVector<f64>,
    /// Diagonal of `R_r`.
    pub r_r: DVector<f64>,
    /// Diagonal of `R` over all steps.
    pub r: DVector<f64>,
    pub settings: InnerSettings,
    pub chains: BoundChains,
}

impl IlqrSubproblem {
    /// Starts from zero controls.
    pub fn new(
        model: TaskModel,
        q0: DVector<f64>,
        horizon: usize,
        dt: f64,
        q_r: DVector<f64>,
        r_r: DVector<f64>,
        settings: InnerSettings,
    ) -> Result<Self> {
        let d = model.chain.dof();
        let traj = rollout(&model.chain, &q0, &vec![DVector::zeros(d); horizon], dt)?;
        let r = DVector::from_fn(d * horizon, |i, _| model.control_weight[i % d]);
        let chains = model.bind(&traj.states[model.timeline.pick].q)?;
        Ok(IlqrSubproblem {
            model,
            q0,
            traj,
            q_r,
            r_r,
            r,
            settings,
            chains,
        })
    }
}

impl Subproblem for IlqrSubproblem {
    fn state(&self) -> DVector<f64> {
        self.traj.stacked_states()
    }

    fn controls(&self) -> DVector<f64> {
        self.traj.stacked_controls()
    }

    fn solve(&mut self, x_r: &DVector<f64>, u_r: &DVector<f64>) -> Result<InnerRecord> {
        let pick = self.model.timeline.pick;
        self.chains = self.model.bind(&self.traj.states[pick].q)?;
        let reg = Regularization {
            q_r: self.q_r.clone(),
            r_r: self.r_r.clone(),
            x_r: x_r.clone(),
            u_r: u_r.clone(),
        };
        let d = self.traj.dof();
        let dt = self.traj.dt;
        let mut cost = self.model.objective(&self.chains, &self.traj, &reg)?;
        let mut record = InnerRecord::default();
        loop {
            let lin = linearize(&self.chains.bare, &self.traj)?;
            let expansion = self.model.expand(&self.chains, &self.traj)?;
            let x_hat = self.traj.stacked_states();
            let u_hat = self.traj.stacked_controls();
            let du = ocp::ilqr_step(
                &lin,
                &expansion,
                &reg,
                &self.r,
                &x_hat,
                &u_hat,
                self.settings.printed_formula,
            )?;
            let (model, chains, q0) = (&self.model, &self.chains, &self.q0);
            let ls = line_search(
                |u| {
                    let tr = rollout(&chains.bare, q0, &unstack(u, d), dt)?;
                    let c = model.objective(chains, &tr, &reg)?;
                    Ok((c, tr))
                },
                cost,
                &u_hat,
                &du,
                self.settings.alpha_min,
            )?;
            record.alphas.push(ls.alpha);
            let progressed = ls.progressed();
            if let Some((_, tr)) = ls.accepted {
                self.traj = tr;
                cost = ls.cost;
            }
            record.costs.push(cost);
            if !progressed || record.iterations() >= self.settings.max_iters || cost <= self.settings.cost_threshold {
                break;
            }
        }
        Ok(record)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolveStatus {
    Converged,
    IterationCap,
    Aborted(String),
}

impl SolveStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::IterationCap => "iteration_cap",
            SolveStatus::Aborted(_) => "aborted",
        }
    }
}

/// Diagnostics of the manipulability at the final step, on the chain in
/// effect there (the tool-extended chain when a tool is used).
#[derive(Clone, Debug, PartialEq)]
pub struct FinalManipulability {
    pub ellipsoid: EllipsoidRecord,
    /// Directional projection along the task direction.
    pub alpha: f64,
    /// `√det` of the weighted manipulability matrix.
    pub index: f64,
    pub tool_attached: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintReport {
    /// Distance of the nominal via position to the box (0 inside).
    pub via_distance: Option<f64>,
    /// Via consensus copy inside the box (tolerance 1e-12).
    pub via_consensus_feasible: Option<bool>,
    /// Aggregate norm of the control-box violation of the nominal controls.
    pub control_violation: f64,
    /// Consensus controls within bounds.
    pub controls_consensus_feasible: bool,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub name: String,
    pub status: SolveStatus,
    pub trajectory: Trajectory,
    pub z_u: DVector<f64>,
    pub z_x: DVector<f64>,
    pub history: Vec<OuterRecord>,
    pub task_cost: f64,
    pub control_cost: f64,
    pub cost_breakdown: Vec<(String, f64)>,
    /// Initial per-term totals at the zero-control trajectory.
    pub initial_breakdown: Vec<(String, f64)>,
    pub constraints: ConstraintReport,
    pub final_position_error: Option<f64>,
    pub manipulability: Option<FinalManipulability>,
    /// Any manipulability term hit its singularity guard at the final
    /// trajectory.
    pub singular: bool,
    pub elapsed: Duration,
}

impl SolveReport {
    pub fn outer_iterations(&self) -> usize {
        self.history.len()
    }

    pub fn final_residuals(&self) -> Option<(f64, f64)> {
        self.history.last().map(|h| (h.r_p, h.r_d))
    }
}

/// A fully assembled problem ready for [`solve_problem`].
#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub model: TaskModel,
    pub q0: DVector<f64>,
    pub horizon: usize,
    pub dt: f64,
    pub constraints: ConstraintSet,
    pub admm: AdmmSettings,
    pub inner: InnerSettings,
    /// Scalar weights of the penalty on constrained states and on controls.
    pub state_penalty: f64,
    pub control_penalty: f64,
    pub final_position: Option<DVector<f64>>,
    /// Direction along which α is reported.
    pub task_direction: Option<UnitVector>,
}

impl Problem {
    pub fn timeline(&self) -> Timeline {
        self.model.timeline
    }
}

/// Runs the full ADMM-iLQR pipeline.
pub fn solve_problem(problem: &Problem) -> Result<SolveReport> {
    let started = Instant::now();
    problem.constraints.validate()?;
    let q_r = problem.constraints.state_mask() * problem.state_penalty;
    let r_r = DVector::from_element(problem.constraints.layout.control_len(), problem.control_penalty);
    let mut sub = IlqrSubproblem::new(
        problem.model.clone(),
        problem.q0.clone(),
        problem.horizon,
        problem.dt,
        q_r,
        r_r,
        problem.inner.clone(),
    )?;
    let initial_breakdown = problem.model.cost_breakdown(&sub.chains, &sub.traj)?;
    let outcome = run_admm(&mut sub, &problem.constraints, &problem.admm);
    let status = match (&outcome.abort, outcome.converged) {
        (Some(msg), _) => SolveStatus::Aborted(msg.clone()),
        (None, true) => SolveStatus::Converged,
        (None, false) => SolveStatus::IterationCap,
    };
    let traj = sub.traj.clone();
    let chains = problem.model.bind(&traj.states[problem.model.timeline.pick].q)?;
    let layout = problem.constraints.layout;

    let via_distance = problem
        .constraints
        .via_box
        .as_ref()
        .map(|b| b.distance(&traj.states[problem.constraints.via_step].p));
    let via_consensus_feasible = problem.constraints.via_box.as_ref().map(|b| {
        let off = layout.p_offset(problem.constraints.via_step);
        b.contains(&outcome.z_x.rows(off, layout.workspace_dim).into_owned(), 1e-12)
    });
    let u = traj.stacked_controls();
    let constraints = ConstraintReport {
        via_distance,
        via_consensus_feasible,
        control_violation: problem.constraints.control_violation(&u)?,
        controls_consensus_feasible: problem.constraints.control_violation(&outcome.z_u)? <= 1e-12,
    };

    let horizon = problem.horizon;
    let final_chain = chains.at(horizon);
    let q_t = &traj.states[horizon].q;
    let final_position_error = match &problem.final_position {
        Some(target) => Some((final_chain.forward_kinematics(q_t)?.position() - target).norm()),
        None => None,
    };
    let manipulability = match &problem.task_direction {
        Some(n) => {
            let e = manip::velocity_manipulability(final_chain, q_t, true)?;
            Some(FinalManipulability {
                ellipsoid: e.record(),
                alpha: e.projection(n),
                index: e.index()?,
                tool_attached: final_chain.tool().is_some(),
            })
        }
        None => None,
    };
    let expansion_singular = problem
        .model
        .costs
        .iter()
        .map(|term| term.value(final_chain, q_t, horizon, problem.model.timeline))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .any(|(_, s)| *s);
    Ok(SolveReport {
        name: problem.name.clone(),
        status,
        task_cost: problem.model.task_cost(&chains, &traj)?,
        control_cost: problem.model.control_cost(&traj),
        cost_breakdown: problem.model.cost_breakdown(&chains, &traj)?,
        initial_breakdown,
        constraints,
        final_position_error,
        manipulability,
        singular: expansion_singular,
        trajectory: traj,
        z_u: outcome.z_u,
        z_x: outcome.z_x,
        history: outcome.history,
        elapsed: started.elapsed(),
    })
}
