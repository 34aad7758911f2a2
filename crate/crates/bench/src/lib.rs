//! Shared fixtures for the benchmarks.

use affordance::ocp::{linearize, rollout};
use affordance::{KinematicChain, Problem, Result};
use nalgebra::{DMatrix, DVector};

/// Inputs to one batch LQR solve at the planar preset size.
pub struct LqrFixture {
    pub s_u: DMatrix<f64>,
    pub s_x: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub x_d: DVector<f64>,
    pub x1: DVector<f64>,
}

pub fn lqr_fixture(horizon: usize) -> Result<LqrFixture> {
    let chain = KinematicChain::preset("planar3")?;
    let q0 = DVector::from_vec(vec![0.6, 0.4, 0.3]);
    let controls: Vec<DVector<f64>> = (0..horizon)
        .map(|t| DVector::from_element(3, (t as f64 * 0.1).sin()))
        .collect();
    let traj = rollout(&chain, &q0, &controls, 0.01)?;
    let lin = linearize(&chain, &traj)?;
    let n = lin.s_u.nrows();
    let m = lin.s_u.ncols();
    Ok(LqrFixture {
        s_u: lin.s_u,
        s_x: DMatrix::zeros(n, lin.state_dim),
        q: DMatrix::identity(n, n) * 10.0,
        r: DMatrix::identity(m, m) * 1e-3,
        x_d: traj.stacked_states(),
        x1: DVector::zeros(lin.state_dim),
    })
}

/// A preset with the outer loop cut to `iters` iterations.
pub fn short_problem(name: &str, iters: usize) -> Result<Problem> {
    let mut s = affordance::scenario::preset(name)?;
    s.solver.admm_max_iters = iters;
    s.build()
}
