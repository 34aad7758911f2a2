//! Single-integrator optimal control problem in batch form: rollout,
//! linearization, the regularized iLQR step and the backtracking line search.
//!
//! The state at each timestep is `x_t = {q_t, p_t}` where `p_t` is the
//! gripper position of the bare chain. States are stacked `x_0 … x_T` and
//! controls `u_0 … u_{T−1}`.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};

use crate::admm::{project_oriented_box, OrientedBox};
use crate::chain::{KinematicChain, Pose};
use crate::costs::{CostEvaluation, CostTerm, Timeline};
use crate::error::{Error, Result};

/// Smallest line-search step before giving up.
pub const ALPHA_MIN: f64 = 1.0 / 1024.0;

#[derive(Clone, Debug, PartialEq)]
pub struct OcpState {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<OcpState>,
    pub controls: Vec<DVector<f64>>,
    pub dt: f64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn dof(&self) -> usize {
        self.states[0].q.len()
    }

    /// Per-timestep state size `D + workspace_dim`.
    pub fn state_dim(&self) -> usize {
        self.states[0].q.len() + self.states[0].p.len()
    }

    pub fn stacked_states(&self) -> DVector<f64> {
        let nx = self.state_dim();
        let mut x = DVector::zeros(nx * self.states.len());
        for (t, s) in self.states.iter().enumerate() {
            let d = s.q.len();
            x.rows_mut(t * nx, d).copy_from(&s.q);
            x.rows_mut(t * nx + d, s.p.len()).copy_from(&s.p);
        }
        x
    }

    pub fn stacked_controls(&self) -> DVector<f64> {
        stack(&self.controls)
    }
}

pub fn stack(blocks: &[DVector<f64>]) -> DVector<f64> {
    let n: usize = blocks.iter().map(|b| b.len()).sum();
    DVector::from_iterator(n, blocks.iter().flat_map(|b| b.iter().copied()))
}

pub fn unstack(v: &DVector<f64>, block: usize) -> Vec<DVector<f64>> {
    if block == 0 {
        return Vec::new();
    }
    v.as_slice()
        .chunks(block)
        .map(DVector::from_column_slice)
        .collect()
}

/// Integrates `q_{t+1} = q_t + u_t·dt` and records the gripper position.
pub fn rollout(chain: &KinematicChain, q0: &DVector<f64>, controls: &[DVector<f64>], dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let mut q = q0.clone();
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(OcpState {
        p: chain.flange_pose(&q)?.position(),
        q: q.clone(),
    });
    for (t, u) in controls.iter().enumerate() {
        if u.len() != q.len() {
            return Err(Error::DimensionMismatch {
                what: "control vector",
                expected: q.len(),
                got: u.len(),
            });
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("control at step {t}")));
        }
        q += u * dt;
        states.push(OcpState {
            p: chain.flange_pose(&q)?.position(),
            q: q.clone(),
        });
    }
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
        dt,
    })
}

#[derive(Clone, Debug)]
pub struct LinearizedSystem {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    /// `∂x/∂u`, `(T+1)·nx × T·D`, with `Δx_0 = 0`.
    pub s_u: DMatrix<f64>,
    pub state_dim: usize,
    pub control_dim: usize,
}

/// Stacked transfer matrices `x = S_x x_0 + S_u u` for a time-varying linear
/// system with `T = a.len()` steps.
pub fn transfer_matrices(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidArgument("A and B sequences must have equal, non-zero length".into()));
    }
    let nx = a[0].nrows();
    let nu = b[0].ncols();
    let n = a.len();
    let mut s_x = DMatrix::zeros((n + 1) * nx, nx);
    let mut s_u = DMatrix::zeros((n + 1) * nx, n * nu);
    s_x.view_mut((0, 0), (nx, nx)).fill_with_identity();
    for t in 0..n {
        let prev_x = s_x.view((t * nx, 0), (nx, nx)).into_owned();
        s_x.view_mut(((t + 1) * nx, 0), (nx, nx)).copy_from(&(&a[t] * prev_x));
        if t > 0 {
            let prev_u = s_u.view((t * nx, 0), (nx, t * nu)).into_owned();
            s_u.view_mut(((t + 1) * nx, 0), (nx, t * nu))
                .copy_from(&(&a[t] * prev_u));
        }
        s_u.view_mut(((t + 1) * nx, t * nu), (nx, nu)).copy_from(&b[t]);
    }
    Ok((s_x, s_u))
}

/// `A_t = [[I, 0], [J(q_{t+1}), 0]]`, `B_t = [I·dt; J(q_{t+1})·dt]` on the bare
/// chain.
pub fn linearize(chain: &KinematicChain, traj: &Trajectory) -> Result<LinearizedSystem> {
    let d = traj.dof();
    let nx = traj.state_dim();
    let dt = traj.dt;
    let bare = chain.without_tool();
    let mut a = Vec::with_capacity(traj.horizon());
    let mut b = Vec::with_capacity(traj.horizon());
    for t in 0..traj.horizon() {
        let j = bare.state(&traj.states[t + 1].q)?.flange_jacobian();
        let mut at = DMatrix::zeros(nx, nx);
        at.view_mut((0, 0), (d, d)).fill_with_identity();
        at.view_mut((d, 0), (nx - d, d)).copy_from(&j);
        let mut bt = DMatrix::zeros(nx, d);
        bt.view_mut((0, 0), (d, d)).fill_with_identity();
        bt.view_mut((d, 0), (nx - d, d)).copy_from(&j);
        a.push(at);
        b.push(bt * dt);
    }
    let (_, s_u) = transfer_matrices(&a, &b)?;
    Ok(LinearizedSystem {
        a,
        b,
        s_u,
        state_dim: nx,
        control_dim: d,
    })
}

/// Exact minimizer of `‖x − x_d‖²_Q + ‖u‖²_R` with `x = S_x x1 + S_u u`.
pub fn batch_lqr(
    s_u: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x_d: &DVector<f64>,
    x1: &DVector<f64>,
    s_x: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let normal = s_u.transpose() * q * s_u + r;
    let rhs = s_u.transpose() * q * (x_d - s_x * x1);
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::Singular("batch LQR normal matrix".into()))?;
    Ok(chol.solve(&rhs))
}

/// Per-timestep quadratic expansion of the task cost in `q` (the `p` block
/// of the expansion is always zero).
#[derive(Clone, Debug)]
pub struct CostExpansion {
    pub stages: Vec<CostEvaluation>,
}

impl CostExpansion {
    pub fn value(&self) -> f64 {
        self.stages.iter().map(|s| s.value).sum()
    }

    pub fn any_singular(&self) -> bool {
        self.stages.iter().any(|s| s.singular)
    }
}

/// Diagonal penalty data of one regularized subproblem, all stacked like the
/// trajectory.
#[derive(Clone, Debug)]
pub struct Regularization {
    /// Diagonal of `Q_r`, `(T+1)·nx`.
    pub q_r: DVector<f64>,
    /// Diagonal of `R_r`, `T·D`.
    pub r_r: DVector<f64>,
    pub x_r: DVector<f64>,
    pub u_r: DVector<f64>,
}

/// Solves for the control update `Δu` of one regularized iLQR iteration:
///
/// `(S_uᵀ(½K + Q_r)S_u + R + R_r) Δu = −½S_uᵀk − R·û + S_uᵀQ_rΔx_r + R_rΔu_r`
///
/// with `Δx_r = x_r − x̂` and `Δu_r = u_r − û`. `printed_formula` drops the
/// `−R·û` term.
#[allow(clippy::too_many_arguments)]
pub fn ilqr_step(
    lin: &LinearizedSystem,
    expansion: &CostExpansion,
    reg: &Regularization,
    r: &DVector<f64>,
    x_hat: &DVector<f64>,
    u_hat: &DVector<f64>,
    printed_formula: bool,
) -> Result<DVector<f64>> {
    let nx = lin.state_dim;
    let d = lin.control_dim;
    let n = lin.s_u.ncols();
    let steps = lin.s_u.nrows() / nx;
    if expansion.stages.len() != steps || reg.q_r.len() != steps * nx || u_hat.len() != n {
        return Err(Error::DimensionMismatch {
            what: "iLQR step inputs",
            expected: steps,
            got: expansion.stages.len(),
        });
    }
    let mut h = DMatrix::from_diagonal(&(r + &reg.r_r));
    let mut g = reg.r_r.component_mul(&(&reg.u_r - u_hat));
    if !printed_formula {
        g -= r.component_mul(u_hat);
    }
    let dx_r = &reg.x_r - x_hat;
    for t in 1..steps {
        let stage = &expansion.stages[t];
        let qr = reg.q_r.rows(t * nx, nx);
        let has_cost = stage.grad.iter().any(|v| *v != 0.0) || stage.hess.iter().any(|v| *v != 0.0);
        let has_reg = qr.iter().any(|v| *v != 0.0);
        if !has_cost && !has_reg {
            continue;
        }
        let cols = t * d;
        let s = lin.s_u.view((t * nx, 0), (nx, cols));
        let mut w = DMatrix::from_diagonal(&qr.into_owned());
        w.view_mut((0, 0), (d, d)).add_assign(&(&stage.hess * 0.5));
        let mut lin_term = qr.component_mul(&dx_r.rows(t * nx, nx));
        lin_term.rows_mut(0, d).add_assign(&(&stage.grad * -0.5));
        h.view_mut((0, 0), (cols, cols))
            .add_assign(&(s.transpose() * &w * s));
        g.rows_mut(0, cols).add_assign(&(s.transpose() * lin_term));
    }
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::NotSpd("regularized iLQR normal matrix".into()))?;
    Ok(chol.solve(&g))
}


/// Result of the backtracking line search.
#[derive(Clone, Debug)]
pub struct LineSearch<C> {
    /// Accepted step, or 0 when no step improved the cost.
    pub alpha: f64,
    pub cost: f64,
    /// Accepted controls and candidate, `None` when `alpha == 0`.
    pub accepted: Option<(DVector<f64>, C)>,
}

impl<C> LineSearch<C> {
    pub fn progressed(&self) -> bool {
        self.accepted.is_some()
    }
}

/// Halves `α` from 1 while the candidate cost is strictly greater than
/// `current_cost` and `α > α_min`. Candidates with a non-finite cost or an
/// undefined direction error count as worse.
pub fn line_search<C>(
    mut cost_fn: impl FnMut(&DVector<f64>) -> Result<(f64, C)>,
    current_cost: f64,
    u_hat: &DVector<f64>,
    du: &DVector<f64>,
    alpha_min: f64,
) -> Result<LineSearch<C>> {
    if du.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("search direction".into()));
    }
    let mut alpha = 1.0;
    loop {
        let u = u_hat + du * alpha;
        let candidate = match cost_fn(&u) {
            Ok(c) => Some(c),
            Err(Error::NonFinite(_) | Error::AntipodalPoints) => None,
            Err(e) => return Err(e),
        };
        if let Some((cost, c)) = candidate {
            if cost.is_finite() && cost <= current_cost {
                return Ok(LineSearch {
                    alpha,
                    cost,
                    accepted: Some((u, c)),
                });
            }
        }
        if alpha <= alpha_min {
            return Ok(LineSearch {
                alpha: 0.0,
                cost: current_cost,
                accepted: None,
            });
        }
        alpha *= 0.5;
    }
}

/// Tool handed over at the pick-up step: the world pose of its head when the
/// gripper closes.
#[derive(Clone, Debug, PartialEq)]
pub struct ToolSpec {
    pub head_pose: Pose,
    /// Graspable handle segment. The grip point is the gripper position
    /// projected onto it; without it the raw gripper position is used.
    pub handle: Option<OrientedBox>,
}

impl ToolSpec {
    /// Grip frame for a gripper pose at the pick-up step.
    pub fn grip_pose(&self, gripper: &Pose) -> Result<Pose> {
        match &self.handle {
            Some(b) => {
                let p = project_oriented_box(&gripper.position(), b);
                Pose::new(p.as_slice(), &gripper.rotation())
            }
            None => Ok(gripper.clone()),
        }
    }
}

/// Everything needed to evaluate the task cost of a trajectory.
#[derive(Clone, Debug)]
pub struct TaskModel {
    /// Bare chain (no tool).
    pub chain: KinematicChain,
    pub tool: Option<ToolSpec>,
    pub costs: Vec<CostTerm>,
    pub timeline: Timeline,
    /// Diagonal of the per-step control weight `R`, length D.
    pub control_weight: DVector<f64>,
}

/// Chains in effect before and after the pick-up step.
#[derive(Clone, Debug)]
pub struct BoundChains {
    pub bare: KinematicChain,
    pub extended: KinematicChain,
    pub pick: usize,
}

impl BoundChains {
    pub fn at(&self, t: usize) -> &KinematicChain {
        if t <= self.pick {
            &self.bare
        } else {
            &self.extended
        }
    }
}

impl TaskModel {
    /// Attaches the tool from the gripper pose at `q_pick`.
    pub fn bind(&self, q_pick: &DVector<f64>) -> Result<BoundChains> {
        let bare = self.chain.without_tool();
        let extended = match &self.tool {
            Some(tool) => {
                let grip = tool.grip_pose(&bare.flange_pose(q_pick)?)?;
                bare.attach_tool(&grip, &tool.head_pose, self.timeline.pick)?
            }
            None => bare.clone(),
        };
        Ok(BoundChains {
            bare,
            extended,
            pick: self.timeline.pick,
        })
    }

    pub fn expand(&self, chains: &BoundChains, traj: &Trajectory) -> Result<CostExpansion> {
        let stages = traj
            .states
            .iter()
            .enumerate()
            .map(|(t, s)| crate::costs::assemble_stage_cost(&self.costs, chains.at(t), &s.q, t, self.timeline))
            .collect::<Result<Vec<_>>>()?;
        Ok(CostExpansion { stages })
    }

    /// `Σ_t c_t(q_t)`.
    pub fn task_cost(&self, chains: &BoundChains, traj: &Trajectory) -> Result<f64> {
        let mut total = 0.0;
        for (t, s) in traj.states.iter().enumerate() {
            for term in &self.costs {
                total += term.value(chains.at(t), &s.q, t, self.timeline)?.0;
            }
        }
        Ok(total)
    }

    /// Per-term totals over the trajectory, in term order.
    pub fn cost_breakdown(&self, chains: &BoundChains, traj: &Trajectory) -> Result<Vec<(String, f64)>> {
        self.costs
            .iter()
            .map(|term| {
                let mut v = 0.0;
                for (t, s) in traj.states.iter().enumerate() {
                    v += term.value(chains.at(t), &s.q, t, self.timeline)?.0;
                }
                Ok((term.label().to_string(), v))
            })
            .collect()
    }

    pub fn control_cost(&self, traj: &Trajectory) -> f64 {
        traj.controls
            .iter()
            .map(|u| u.component_mul(u).dot(&self.control_weight))
            .sum()
    }

    /// Task cost + control cost + the ADMM penalty terms.
    pub fn objective(&self, chains: &BoundChains, traj: &Trajectory, reg: &Regularization) -> Result<f64> {
        let ex = traj.stacked_states() - &reg.x_r;
        let eu = traj.stacked_controls() - &reg.u_r;
        let total = self.task_cost(chains, traj)?
            + self.control_cost(traj)
            + ex.component_mul(&ex).dot(&reg.q_r)
            + eu.component_mul(&eu).dot(&reg.r_r);
        if !total.is_finite() {
            return Err(Error::NonFinite("objective".into()));
        }
        Ok(total)
    }
}
