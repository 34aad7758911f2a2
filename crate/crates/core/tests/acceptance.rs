//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use affordance::admm::{run_admm, AdmmSettings, ScalarQuadratic, VectorBox};
use affordance::checks::{gradient_suite, geometry_suite, lqr_suite, projection_suite, SuiteResult};
use affordance::export::{history_csv, report_json, trajectory_csv};
use affordance::ocp::{linearize, rollout};
use affordance::oracle::OracleConfig;
use affordance::scenario::preset;
use affordance::{randomize_targets, solve_problem, KinematicChain, ManipulabilityMode, Problem, SolveReport, SolveStatus};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

type Criterion = fn() -> Result<Outcome, String>;

fn solve(problem: &Problem) -> Result<SolveReport, String> {
    let r = solve_problem(problem).map_err(|e| e.to_string())?;
    if let SolveStatus::Aborted(msg) = &r.status {
        return Err(format!("{}: aborted: {msg}", problem.name));
    }
    Ok(r)
}

fn build(name: &str) -> Result<Problem, String> {
    preset(name).and_then(|s| s.build()).map_err(|e| e.to_string())
}

fn suite(result: affordance::Result<SuiteResult>, budget: Option<Duration>, started: Instant) -> Result<Outcome, String> {
    let r = result.map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let in_time = budget.is_none_or(|b| elapsed < b);
    Ok(outcome(
        r.passed && in_time,
        format!("{} ({:.2} s)", r.line(), elapsed.as_secs_f64()),
    ))
}

fn via_range() -> Result<Outcome, String> {
    let problem = build("fig3a-1")?;
    let started = Instant::now();
    let r = solve(&problem)?;
    let elapsed = started.elapsed();

    let pick = problem.timeline().pick;
    let layout = problem.constraints.layout;
    let w = layout.workspace_dim;
    let off = layout.p_offset(pick);
    let z_p = r.z_x.rows(off, w).into_owned();
    let b = problem.constraints.via_box.as_ref().ok_or("fig3a-1 has no via box")?;
    let local = b.to_local(&z_p);
    let exact = local.iter().zip(b.half_extents().iter()).all(|(l, h)| l.abs() <= *h);
    let (r_p, _) = r.final_residuals().ok_or("no iterations")?;
    let target = problem.final_position.as_ref().ok_or("no final target")?;
    let tip = (&r.trajectory.states[problem.horizon].p - target).norm();
    let ok = exact && r_p.sqrt() <= 1e-2 && tip < 1e-2 && elapsed < Duration::from_secs(60);
    Ok(outcome(
        ok,
        format!(
            "status={} consensus_in_box={exact} sqrt_r_p={:.2e} tip_error={tip:.2e} runtime={:.2} s",
            r.status.label(),
            r_p.sqrt(),
            elapsed.as_secs_f64()
        ),
    ))
}

fn variants() -> Result<Outcome, String> {
    let mut ok = true;
    let mut parts = Vec::new();
    for v in 1..=4 {
        let problem = build(&format!("fig3a-{v}"))?;
        let r = solve(&problem)?;
        let mut worst: f64 = 0.0;
        for ((name, fin), (_, init)) in r.cost_breakdown.iter().zip(&r.initial_breakdown) {
            if name.starts_with("orientation") || name.starts_with("direction") {
                let ratio = fin / init.max(f64::MIN_POSITIVE);
                worst = worst.max(ratio);
                ok &= ratio < 1e-2;
            }
        }
        parts.push(format!("v{v}:{}/{:.1e}", r.status.label(), worst));
    }
    Ok(outcome(ok, format!("final/initial {}", parts.join(" "))))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn manipulability_comparison() -> Result<Outcome, String> {
    let base = preset("fig4-pickplace").map_err(|e| e.to_string())?;
    let alpha = |mode: ManipulabilityMode, seed: u64| -> Result<f64, String> {
        let s = randomize_targets(&base, seed).map_err(|e| e.to_string())?.with_mode(mode);
        let r = solve(&s.build().map_err(|e| e.to_string())?)?;
        Ok(r.manipulability.ok_or("no final manipulability")?.alpha)
    };
    let mut dir = Vec::new();
    let mut none = Vec::new();
    for seed in 0..10 {
        dir.push(alpha(ManipulabilityMode::Directional, seed)?);
        none.push(alpha(ManipulabilityMode::None, seed)?);
    }
    let wins = dir.iter().zip(&none).filter(|(d, n)| d > n).count();
    let ratio = median(&mut dir) / median(&mut none);
    Ok(outcome(
        wins >= 8 && ratio >= 1.1,
        format!("directional>none in {wins}/10 seeds, median ratio {ratio:.3}"),
    ))
}

fn lqr() -> Result<Outcome, String> {
    let started = Instant::now();
    let cfg = OracleConfig {
        trials: 50,
        ..OracleConfig::default()
    };
    suite(lqr_suite(&cfg), Some(Duration::from_secs(5)), started)
}

fn gradients() -> Result<Outcome, String> {
    let started = Instant::now();
    let cfg = OracleConfig {
        trials: 50,
        ..OracleConfig::default()
    };
    suite(gradient_suite(&cfg), Some(Duration::from_secs(30)), started)
}

fn projections() -> Result<Outcome, String> {
    let started = Instant::now();
    suite(projection_suite(&OracleConfig::default()), None, started)
}

fn geometry() -> Result<Outcome, String> {
    let started = Instant::now();
    suite(geometry_suite(&OracleConfig::default()), None, started)
}

fn convex_toy() -> Result<Outcome, String> {
    let mut sub = ScalarQuadratic {
        target: 3.0,
        rho: 50.0,
        x: 0.0,
    };
    let bounds = VectorBox {
        lower: DVector::from_element(1, f64::NEG_INFINITY),
        upper: DVector::from_element(1, 1.0),
    };
    let settings = AdmmSettings {
        max_iters: 50,
        primal_tol: 1e-4,
        dual_tol: 1e-4,
    };
    let out = run_admm(&mut sub, &bounds, &settings);
    let last = out.history.last().ok_or("no iterations")?;
    let ok = out.converged && (sub.x - 1.0).abs() <= 1e-3 && last.r_p <= 1e-4 && last.r_d <= 1e-4;
    Ok(outcome(
        ok,
        format!(
            "x={:.6} iterations={} r_p={:.1e} r_d={:.1e}",
            sub.x,
            out.history.len(),
            last.r_p,
            last.r_d
        ),
    ))
}

fn linearization() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let chains = [
        KinematicChain::preset("planar3").map_err(|e| e.to_string())?,
        KinematicChain::preset("spatial7").map_err(|e| e.to_string())?,
    ];
    let mut worst = f64::INFINITY;
    for i in 0..20 {
        let chain = &chains[i % 2];
        let d = chain.dof();
        let horizon = rng.random_range(5..=30);
        let dt = 0.05;
        let q0 = DVector::from_fn(d, |_, _| rng.random_range(-1.5..1.5));
        let controls: Vec<DVector<f64>> = (0..horizon)
            .map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let du: Vec<DVector<f64>> = (0..horizon)
            .map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let nominal = rollout(chain, &q0, &controls, dt).map_err(|e| e.to_string())?;
        let s_u = linearize(chain, &nominal).map_err(|e| e.to_string())?.s_u;
        let x0 = nominal.stacked_states();
        let du_stacked = affordance::ocp::stack(&du);
        let remainder = |h: f64| -> Result<f64, String> {
            let shifted: Vec<DVector<f64>> = controls.iter().zip(&du).map(|(u, v)| u + v * h).collect();
            let x = rollout(chain, &q0, &shifted, dt).map_err(|e| e.to_string())?.stacked_states();
            Ok((x - &x0 - &s_u * (&du_stacked * h)).norm())
        };
        let ratio = remainder(0.5)? / remainder(0.25)?;
        worst = worst.min(ratio);
    }
    Ok(outcome(worst >= 3.5, format!("min remainder ratio {worst:.3} over 20 trajectories")))
}

fn artifacts(problem: &Problem) -> Result<Vec<String>, String> {
    let r = solve(problem)?;
    Ok(vec![
        trajectory_csv(&r),
        history_csv(&r),
        report_json(&r).map_err(|e| e.to_string())?,
    ])
}

fn determinism() -> Result<Outcome, String> {
    let s = randomize_targets(&preset("fig4-pickplace").map_err(|e| e.to_string())?, 7).map_err(|e| e.to_string())?;
    let mut ok = true;
    for problem in [build("fig3a-4")?, s.build().map_err(|e| e.to_string())?] {
        ok &= artifacts(&problem)? == artifacts(&problem)?;
    }
    Ok(outcome(ok, "fig3a-4 and fig4-pickplace seed 7, two runs each"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("via range reproduction", via_range),
        ("four via range variants", variants),
        ("manipulability comparison", manipulability_comparison),
        ("batch LQR vs DP", lqr),
        ("cost gradients vs FD", gradients),
        ("projections vs grid", projections),
        ("geometry roundtrips", geometry),
        ("convex toy", convex_toy),
        ("linearization remainder", linearization),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        failed += usize::from(!o.passed);
        println!(
            "{} {:>2} {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
