//! Self-check suites comparing the solver building blocks against the
//! brute-force oracles.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::admm::{project_affine, project_box, project_oriented_box, OrientedBox};
use crate::chain::{KinematicChain, Pose};
use crate::costs::{make_desired_ellipsoid, CostEvaluation, CostKind, CostTerm, Schedule};
use crate::error::Result;
use crate::geom::{sphere_distance, sphere_exp, sphere_log, spd_log, sym_exp, SpdMatrix, UnitVector};
use crate::ocp::{batch_lqr, transfer_matrices};
use crate::oracle::{dp_lqr, fd_gradient, grid_project, LqProblem, OracleConfig};

pub const GRADIENT_TOL: f64 = 1e-4;
pub const LQR_TOL: f64 = 1e-8;
pub const SPHERE_TOL: f64 = 1e-9;
pub const SPD_TOL: f64 = 1e-8;
pub const PROJECTION_INSTANCES: usize = 100;
pub const SPHERE_PAIRS: usize = 1000;
pub const SPD_MATRICES: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Largest observed error in the suite's own metric.
    pub max_error: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl SuiteResult {
    pub fn line(&self) -> String {
        format!(
            "{} {:<10} cases={:<5} max_error={:.3e} tol={:.0e}{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_error,
            self.tolerance,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!("  ({})", self.detail)
            }
        )
    }
}

/// Signature of a cost evaluator under test.
pub type GradientEvaluator<'a> = dyn Fn(&CostTerm, &KinematicChain, &DVector<f64>) -> Result<CostEvaluation> + 'a;

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> UnitVector {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 0.1 && norm <= 1.0 {
            return UnitVector::normalize(v).expect("non-zero");
        }
    }
}

fn random_q(rng: &mut ChaCha8Rng, chain: &KinematicChain, margin: f64) -> DVector<f64> {
    DVector::from_iterator(
        chain.dof(),
        chain
            .q_limits()
            .iter()
            .map(|(lo, hi)| {
                let (lo, hi) = if lo.is_finite() && hi.is_finite() {
                    (lo - margin, hi + margin)
                } else {
                    (-PI, PI)
                };
                rng.random_range(lo..hi)
            }),
    )
}

fn gradient_fixtures() -> Result<Vec<KinematicChain>> {
    let planar = KinematicChain::preset("planar3")?;
    let spatial = KinematicChain::preset("spatial7")?;
    let q_p = DVector::from_column_slice(&[0.3, 0.4, 0.5]);
    let grip_p = planar.flange_pose(&q_p)?;
    let head_p = Pose::planar(
        grip_p.position()[0] + 0.4,
        grip_p.position()[1] + 0.1,
        0.3,
    );
    let q_s = DVector::from_column_slice(&[0.1, -0.5, 0.2, -2.0, 0.1, 1.6, 0.7]);
    let grip_s = spatial.flange_pose(&q_s)?;
    let mut head_iso = *grip_s.isometry();
    head_iso.translation.vector += nalgebra::Vector3::new(0.05, 0.2, -0.03);
    Ok(vec![
        planar.attach_tool(&grip_p, &head_p, 1)?,
        spatial.attach_tool(&grip_s, &Pose::spatial(head_iso), 1)?,
        planar,
        spatial,
    ])
}

fn random_terms(rng: &mut ChaCha8Rng, chain: &KinematicChain) -> Result<Vec<CostTerm>> {
    let w = chain.workspace_dim();
    let s = Schedule::All;
    let target = DVector::from_fn(w, |_, _| rng.random_range(-0.5..0.5));
    let n = random_unit(rng, w);
    Ok(vec![
        CostTerm::new(
            CostKind::Orientation {
                handle_axis: random_unit(rng, w),
                gripper_axis: 1,
            },
            10.0,
            s.clone(),
        ),
        CostTerm::new(CostKind::Position { target }, 100.0, s.clone()),
        CostTerm::new(
            CostKind::Direction {
                desired: random_unit(rng, w),
                effector_axis: 0,
            },
            10.0,
            s.clone(),
        ),
        CostTerm::new(CostKind::JointLimit, 100.0, s.clone()),
        CostTerm::new(CostKind::ManDirectional { direction: n.clone() }, 1.0, s.clone()),
        CostTerm::new(CostKind::ManDeterminant, 0.1, s.clone()),
        CostTerm::new(
            CostKind::ManTracking {
                desired: make_desired_ellipsoid(&n, 2.0, 0.5)?,
            },
            1.0,
            s,
        ),
    ])
}

/// `‖g − g_fd‖∞ / max(‖g_fd‖∞, 1e-6)`.
pub fn gradient_error(grad: &DVector<f64>, fd: &DVector<f64>) -> f64 {
    (grad - fd).amax() / fd.amax().max(1e-6)
}

/// Gradients of every cost kind against central differences of the value,
/// on planar and spatial chains with and without a tool.
pub fn gradient_suite(config: &OracleConfig) -> Result<SuiteResult> {
    gradient_suite_with(config, &|term, chain, q| term.evaluate_unscheduled(chain, q))
}

pub fn gradient_suite_with(config: &OracleConfig, evaluator: &GradientEvaluator) -> Result<SuiteResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut worst: (f64, String) = (0.0, String::new());
    let mut cases = 0;
    for chain in gradient_fixtures()? {
        for _ in 0..config.trials {
            let terms = random_terms(&mut rng, &chain)?;
            let q = random_q(&mut rng, &chain, 0.3);
            for term in &terms {
                // away from the antipode the direction cost is smooth
                if let CostKind::Direction { desired, .. } = &term.kind {
                    let v = chain.forward_kinematics(&q)?.axis(0);
                    if desired.as_vector().dot(&v) < -0.99 {
                        continue;
                    }
                }
                let eval = evaluator(term, &chain, &q)?;
                let fd = fd_gradient(
                    |x| term.evaluate_unscheduled(&chain, x).map_or(f64::NAN, |e| e.value),
                    &q,
                    config.fd_step,
                )?;
                let err = gradient_error(&eval.grad, &fd);
                cases += 1;
                if err > worst.0 || err.is_nan() {
                    worst = (err, format!("{} on {}", term.label(), chain.name()));
                }
            }
        }
    }
    Ok(SuiteResult {
        name: "gradient",
        passed: worst.0 < GRADIENT_TOL,
        cases,
        max_error: worst.0,
        tolerance: GRADIENT_TOL,
        detail: if worst.1.is_empty() {
            String::new()
        } else {
            format!("worst: {}", worst.1)
        },
    })
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n, 1.0);
    &a * a.transpose() + DMatrix::identity(n, n) * floor
}

/// A random LQ instance: state and control dimensions up to 3, horizon up to 10.
pub fn random_lq_problem(rng: &mut ChaCha8Rng) -> LqProblem {
    let nx = rng.random_range(1..=3);
    let nu = rng.random_range(1..=3);
    let n = rng.random_range(1..=10);
    LqProblem {
        a: (0..n)
            .map(|_| DMatrix::identity(nx, nx) + random_matrix(rng, nx, nx, 0.3))
            .collect(),
        b: (0..n).map(|_| random_matrix(rng, nx, nu, 1.0)).collect(),
        q: (0..=n).map(|_| random_spd(rng, nx, 0.1)).collect(),
        r: (0..n).map(|_| random_spd(rng, nu, 0.1)).collect(),
        x_d: (0..=n).map(|_| DVector::from_fn(nx, |_, _| rng.random_range(-1.0..1.0))).collect(),
        x0: DVector::from_fn(nx, |_, _| rng.random_range(-1.0..1.0)),
    }
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut m = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        m.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    m
}

/// Largest absolute control difference between the batch solution and the
/// Riccati recursion on one instance.
pub fn lqr_discrepancy(p: &LqProblem) -> Result<f64> {
    let (s_x, s_u) = transfer_matrices(&p.a, &p.b)?;
    let x_d = DVector::from_iterator(
        p.x_d.iter().map(|v| v.len()).sum(),
        p.x_d.iter().flat_map(|v| v.iter().copied()),
    );
    let batch = batch_lqr(&s_u, &block_diag(&p.q), &block_diag(&p.r), &x_d, &p.x0, &s_x)?;
    let dp = dp_lqr(p)?;
    let nu = p.b[0].ncols();
    let mut worst: f64 = 0.0;
    for (t, u) in dp.iter().enumerate() {
        worst = worst.max((batch.rows(t * nu, nu) - u).amax());
    }
    Ok(worst)
}

pub fn lqr_suite(config: &OracleConfig) -> Result<SuiteResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..config.trials {
        worst = worst.max(lqr_discrepancy(&random_lq_problem(&mut rng))?);
    }
    Ok(SuiteResult {
        name: "lqr",
        passed: worst < LQR_TOL,
        cases: config.trials,
        max_error: worst,
        tolerance: LQR_TOL,
        detail: String::new(),
    })
}

/// Outcome of one projection instance checked against the grid oracle.
#[derive(Clone, Copy, Debug)]
struct ProjectionCheck {
    idempotent: bool,
    feasible: bool,
    /// `‖x − Π(x)‖ − ‖x − g*‖`, positive when the grid found something closer.
    excess: f64,
}

fn check_projection(
    x: &DVector<f64>,
    projected: &DVector<f64>,
    reprojected: &DVector<f64>,
    feasible: &dyn Fn(&[f64]) -> bool,
    bounds: &[(f64, f64)],
    resolution: f64,
) -> Result<ProjectionCheck> {
    let grid = grid_project(x.as_slice(), feasible, bounds, resolution)?;
    Ok(ProjectionCheck {
        idempotent: projected == reprojected,
        feasible: feasible(projected.as_slice()),
        excess: (x - projected).norm() - (x - &grid).norm(),
    })
}

/// Box, slab and oriented-box projections in the plane: exact idempotence,
/// feasibility, and no feasible grid point closer than the projection by
/// more than the grid diagonal.
pub fn projection_suite(config: &OracleConfig) -> Result<SuiteResult> {
    config.validate()?;
    let res = config.grid_resolution;
    let slack = res * 2f64.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut record = |name: &str, c: ProjectionCheck| {
        worst = worst.max(c.excess);
        if !c.idempotent || !c.feasible || c.excess > slack {
            failures.push(format!("{name}: {c:?}"));
        }
    };
    for _ in 0..PROJECTION_INSTANCES {
        // axis-aligned box
        let lo = DVector::from_fn(2, |_, _| rng.random_range(-0.5..0.0));
        let hi = &lo + DVector::from_fn(2, |_, _| rng.random_range(0.05..0.5));
        let x = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let p = project_box(&x, &lo, &hi);
        let pp = project_box(&p, &lo, &hi);
        let inside = |v: &[f64]| (0..2).all(|i| v[i] >= lo[i] && v[i] <= hi[i]);
        let bounds = [(lo[0], hi[0]), (lo[1], hi[1])];
        record("box", check_projection(&x, &p, &pp, &inside, &bounds, res)?);

        // slab l ≤ aᵀx ≤ u, point within 0.25 of the origin
        let a = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)) + DVector::from_element(2, 0.1);
        let l = rng.random_range(-0.2..0.0);
        let u = l + rng.random_range(0.0..0.2);
        let x = DVector::from_fn(2, |_, _| rng.random_range(-0.25..0.25));
        let p = project_affine(&x, &a, l, u)?;
        let pp = project_affine(&p, &a, l, u)?;
        let tol = 1e-12;
        let in_slab = |v: &[f64]| {
            let s = a[0] * v[0] + a[1] * v[1];
            s >= l - tol && s <= u + tol
        };
        let bounds = [(x[0] - 0.6, x[0] + 0.6), (x[1] - 0.6, x[1] + 0.6)];
        record("affine", check_projection(&x, &p, &pp, &in_slab, &bounds, res)?);

        // oriented box
        let th: f64 = rng.random_range(-PI..PI);
        let (s, c) = th.sin_cos();
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let half = DVector::from_fn(2, |_, _| rng.random_range(0.01..0.3));
        let center = DVector::from_fn(2, |_, _| rng.random_range(-0.5..0.5));
        let b = OrientedBox::new(center.clone(), rot.clone(), half.clone())?;
        let x = &center + DVector::from_fn(2, |_, _| rng.random_range(-0.8..0.8));
        let p = project_oriented_box(&x, &b);
        let pp = project_oriented_box(&p, &b);
        let in_box = |v: &[f64]| {
            let (dx, dy) = (v[0] - center[0], v[1] - center[1]);
            let lx = c * dx + s * dy;
            let ly = -s * dx + c * dy;
            lx.abs() <= half[0] + tol && ly.abs() <= half[1] + tol
        };
        let ex = c.abs() * half[0] + s.abs() * half[1];
        let ey = s.abs() * half[0] + c.abs() * half[1];
        let bounds = [(center[0] - ex, center[0] + ex), (center[1] - ey, center[1] + ey)];
        record("oriented_box", check_projection(&x, &p, &pp, &in_box, &bounds, res)?);
    }
    Ok(SuiteResult {
        name: "projection",
        passed: failures.is_empty(),
        cases: 3 * PROJECTION_INSTANCES,
        max_error: worst.max(0.0),
        tolerance: slack,
        detail: failures.first().cloned().unwrap_or_default(),
    })
}

/// Sphere Exp∘Log and SPD exp∘log round trips.
pub fn geometry_suite(config: &OracleConfig) -> Result<SuiteResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sphere: f64 = 0.0;
    let mut pairs = 0;
    while pairs < SPHERE_PAIRS {
        let x = random_unit(&mut rng, 3);
        let y = random_unit(&mut rng, 3);
        if sphere_distance(&x, &y) >= PI - 1e-3 {
            continue;
        }
        let back = sphere_exp(&x, &sphere_log(&x, &y)?)?;
        sphere = sphere.max((back.as_vector() - y.as_vector()).norm());
        pairs += 1;
    }
    let mut spd: f64 = 0.0;
    for _ in 0..SPD_MATRICES {
        let n = rng.random_range(2..=3);
        let m = random_spd(&mut rng, n, 0.05);
        let log = spd_log(&SpdMatrix::new(m.clone())?)?;
        spd = spd.max((sym_exp(&log.value) - &m).norm());
    }
    let passed = sphere < SPHERE_TOL && spd < SPD_TOL;
    Ok(SuiteResult {
        name: "geometry",
        passed,
        cases: SPHERE_PAIRS + SPD_MATRICES,
        max_error: sphere.max(spd),
        tolerance: SPHERE_TOL,
        detail: format!("sphere {sphere:.3e} (tol {SPHERE_TOL:.0e}), spd {spd:.3e} (tol {SPD_TOL:.0e})"),
    })
}

pub const SUITE_NAMES: [&str; 4] = ["gradient", "lqr", "projection", "geometry"];

pub fn run_suite(name: &str, config: &OracleConfig) -> Result<SuiteResult> {
    match name {
        "gradient" => gradient_suite(config),
        "lqr" => lqr_suite(config),
        "projection" => projection_suite(config),
        "geometry" => geometry_suite(config),
        _ => Err(crate::error::Error::InvalidArgument(format!("unknown suite `{name}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> OracleConfig {
        OracleConfig {
            trials: 3,
            grid_resolution: 1e-2,
            ..OracleConfig::default()
        }
    }

    #[test]
    fn lqr_agrees() {
        let r = lqr_suite(&quick()).unwrap();
        assert!(r.passed, "{}", r.line());
    }

    #[test]
    fn biased_gradient_is_caught() {
        let r = gradient_suite_with(&quick(), &|term, chain, q| {
            let mut e = term.evaluate_unscheduled(chain, q)?;
            e.grad *= 1.01;
            Ok(e)
        })
        .unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn suite_line_format() {
        let r = lqr_suite(&quick()).unwrap();
        assert!(r.line().starts_with("PASS lqr"));
        assert!(r.line().contains("max_error="));
    }
}
