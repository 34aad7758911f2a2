use affordance::export::{history_csv, trajectory_csv};
use affordance::scenario::preset;
use affordance::{randomize_targets, solve_problem, SolveStatus};

#[test]
fn pickplace_attaches_tool_and_reports_every_step() {
    let s = randomize_targets(&preset("fig4-pickplace").unwrap(), 2).unwrap();
    let problem = s.build().unwrap();
    let r = solve_problem(&problem).unwrap();
    assert!(!matches!(r.status, SolveStatus::Aborted(_)));
    let m = r.manipulability.as_ref().unwrap();
    assert!(m.tool_attached);
    assert!(m.alpha > 0.0 && m.index > 0.0);
    assert_eq!(trajectory_csv(&r).lines().count(), problem.horizon + 2);
    assert_eq!(history_csv(&r).lines().count(), r.outer_iterations() + 1);
    assert!(r.constraints.controls_consensus_feasible);
    assert_eq!(r.constraints.via_consensus_feasible, Some(true));
}

#[test]
fn hammer_sim_keeps_consensus_controls_within_franka_limits() {
    let problem = preset("hammer-sim").unwrap().build().unwrap();
    let r = solve_problem(&problem).unwrap();
    assert!(!matches!(r.status, SolveStatus::Aborted(_)), "{:?}", r.status);
    let lo = &problem.constraints.control_lower;
    let hi = &problem.constraints.control_upper;
    let d = lo.len();
    for (i, u) in r.z_u.iter().enumerate() {
        assert!(*u >= lo[i % d] && *u <= hi[i % d]);
    }
    assert!(r.final_position_error.unwrap() < 0.05, "{:?}", r.final_position_error);
}

#[test]
fn printed_step_formula_still_solves() {
    let mut s = preset("fig3a-1").unwrap();
    s.solver.printed_step_formula = true;
    let problem = s.build().unwrap();
    let r = solve_problem(&problem).unwrap();
    assert!(!matches!(r.status, SolveStatus::Aborted(_)));
    assert_eq!(r.constraints.via_consensus_feasible, Some(true));
}

#[test]
fn objective_never_increases_inside_an_inner_solve() {
    let problem = preset("fig3a-3").unwrap().build().unwrap();
    let r = solve_problem(&problem).unwrap();
    for h in &r.history {
        for w in h.inner.costs.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "iteration {}: {:?}", h.iteration, h.inner.costs);
        }
    }
}
