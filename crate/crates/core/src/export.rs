//! Output files: trajectory and history tables, JSON reports, ellipsoid
//! records and planar SVG snapshots.
//!
//! Tables use a fixed header and `{:.16e}` numbers (17 significant digits).
//! `report.json` holds no timing so that reruns are byte-identical; timing
//! goes to a separate document.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::admm::{Problem, SolveReport};
use crate::chain::KinematicChain;
use crate::error::{Error, Result};
use crate::manip::{velocity_manipulability, EllipsoidRecord};

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes through a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let io = |e: std::io::Error| Error::InvalidArgument(format!("{}: {e}", path.display()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn trajectory_header(dof: usize, workspace_dim: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..dof).map(|i| format!("q_{i}")));
    cols.extend(["p_x", "p_y", "p_z"].iter().take(workspace_dim).map(|s| s.to_string()));
    cols.extend((0..dof).map(|i| format!("u_{i}")));
    cols.join(",")
}

/// One row per timestep `0..=T`; the last row carries zero controls.
pub fn trajectory_csv(report: &SolveReport) -> String {
    let traj = &report.trajectory;
    let d = traj.dof();
    let w = traj.state_dim() - d;
    let mut out = trajectory_header(d, w);
    out.push('\n');
    let zero = DVector::zeros(d);
    for (t, s) in traj.states.iter().enumerate() {
        let u = traj.controls.get(t).unwrap_or(&zero);
        let mut row = vec![t.to_string()];
        row.extend(s.q.iter().map(|v| num(*v)));
        row.extend(s.p.iter().map(|v| num(*v)));
        row.extend(u.iter().map(|v| num(*v)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub const HISTORY_HEADER: &str = "iteration,r_p,r_d,inner_iterations,objective";

/// Residuals and the last inner objective per outer iteration.
pub fn history_csv(report: &SolveReport) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for h in &report.history {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            h.iteration,
            num(h.r_p),
            num(h.r_d),
            h.inner.iterations(),
            num(h.inner.costs.last().copied().unwrap_or(f64::NAN))
        );
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct CostRow {
    pub term: String,
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationRow {
    pub iteration: usize,
    pub r_p: f64,
    pub r_d: f64,
    pub inner_objective: Vec<f64>,
    pub inner_alpha: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportDoc {
    pub name: String,
    pub status: String,
    pub abort_reason: Option<String>,
    pub outer_iterations: usize,
    pub final_r_p: Option<f64>,
    pub final_r_d: Option<f64>,
    pub task_cost: f64,
    pub control_cost: f64,
    pub costs: Vec<CostRow>,
    pub final_position_error_m: Option<f64>,
    pub via_distance_m: Option<f64>,
    pub via_consensus_feasible: Option<bool>,
    pub control_violation_rad_per_s: f64,
    pub controls_consensus_feasible: bool,
    pub alpha_t: Option<f64>,
    pub manipulability_index_t: Option<f64>,
    pub tool_attached_t: Option<bool>,
    pub singular: bool,
    pub history: Vec<IterationRow>,
}

impl ReportDoc {
    pub fn new(report: &SolveReport) -> Self {
        let costs = report
            .cost_breakdown
            .iter()
            .zip(&report.initial_breakdown)
            .map(|((term, fin), (_, init))| CostRow {
                term: term.clone(),
                initial: *init,
                final_value: *fin,
            })
            .collect();
        let abort_reason = match &report.status {
            crate::admm::SolveStatus::Aborted(msg) => Some(msg.clone()),
            _ => None,
        };
        let m = report.manipulability.as_ref();
        ReportDoc {
            name: report.name.clone(),
            status: report.status.label().to_string(),
            abort_reason,
            outer_iterations: report.outer_iterations(),
            final_r_p: report.final_residuals().map(|r| r.0),
            final_r_d: report.final_residuals().map(|r| r.1),
            task_cost: report.task_cost,
            control_cost: report.control_cost,
            costs,
            final_position_error_m: report.final_position_error,
            via_distance_m: report.constraints.via_distance,
            via_consensus_feasible: report.constraints.via_consensus_feasible,
            control_violation_rad_per_s: report.constraints.control_violation,
            controls_consensus_feasible: report.constraints.controls_consensus_feasible,
            alpha_t: m.map(|m| m.alpha),
            manipulability_index_t: m.map(|m| m.index),
            tool_attached_t: m.map(|m| m.tool_attached),
            singular: report.singular,
            history: report
                .history
                .iter()
                .map(|h| IterationRow {
                    iteration: h.iteration,
                    r_p: h.r_p,
                    r_d: h.r_d,
                    inner_objective: h.inner.costs.clone(),
                    inner_alpha: h.inner.alphas.clone(),
                })
                .collect(),
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::NonFinite(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn report_json(report: &SolveReport) -> Result<String> {
    to_json(&ReportDoc::new(report))
}

#[derive(Serialize)]
struct TimingDoc<'a> {
    name: &'a str,
    elapsed_s: f64,
}

pub fn timing_json(report: &SolveReport) -> Result<String> {
    to_json(&TimingDoc {
        name: &report.name,
        elapsed_s: report.elapsed.as_secs_f64(),
    })
}

/// Weighted velocity ellipsoid at `T`, if the solve got that far.
pub fn final_ellipsoid(report: &SolveReport) -> Option<&EllipsoidRecord> {
    report.manipulability.as_ref().map(|m| &m.ellipsoid)
}

pub fn ellipsoid_json(record: &EllipsoidRecord) -> Result<String> {
    to_json(record)
}

/// One cell of a mode × seed comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub mode: String,
    pub seed: u64,
    /// `None` when the cell failed.
    pub alpha: Option<f64>,
    pub status: String,
}

pub const COMPARE_HEADER: &str = "mode,seed,alpha_t,status";

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = format!("{COMPARE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.mode,
            r.seed,
            r.alpha.map(num).unwrap_or_default(),
            r.status
        );
    }
    out
}

fn chain_points(chain: &KinematicChain, q: &DVector<f64>) -> Result<Vec<(f64, f64)>> {
    let s = chain.state(q)?;
    let mut pts: Vec<(f64, f64)> = s.origins.iter().map(|o| (o.x, o.y)).collect();
    pts.push((s.flange.translation.vector.x, s.flange.translation.vector.y));
    if chain.tool().is_some() {
        pts.push((s.effector.translation.vector.x, s.effector.translation.vector.y));
    }
    Ok(pts)
}

/// Planar snapshot plot: arm at `0`, `t′` and `T`, the grasp range, the
/// target and the manipulability ellipse at `T`. Planar chains only.
pub fn plot_svg(problem: &Problem, report: &SolveReport) -> Result<String> {
    if problem.model.chain.workspace_dim() != 2 {
        return Err(Error::InvalidArgument("plots are available for planar chains only".into()));
    }
    let traj = &report.trajectory;
    let pick = problem.timeline().pick;
    let chains = problem.model.bind(&traj.states[pick].q)?;
    let scale = 100.0;
    let reach = problem.model.chain.reach() + 1.0;
    let size = 2.0 * reach * scale;
    let px = |x: f64| (x + reach) * scale;
    let py = |y: f64| (reach - y) * scale;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{size:.0}" viewBox="0 0 {size:.0} {size:.0}">"#
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    if let Some(b) = &problem.constraints.via_box {
        let pts: Vec<String> = {
            let c = b.corners();
            // corners come in binary order; reorder to walk the outline
            [0, 1, 3, 2]
                .iter()
                .map(|&i| format!("{:.2},{:.2}", px(c[i][0]), py(c[i][1])))
                .collect()
        };
        let _ = writeln!(
            svg,
            r##"<polygon points="{}" fill="#f4b942" fill-opacity="0.5" stroke="#b07d12"/>"##,
            pts.join(" ")
        );
    }
    if let Some(t) = &problem.final_position {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="#d62728" stroke-width="2"/>"##,
            px(t[0]),
            py(t[1])
        );
    }
    for (t, color) in [(0, "#9e9e9e"), (pick, "#1f77b4"), (problem.horizon, "#2ca02c")] {
        let pts = chain_points(chains.at(t), &traj.states[t].q)?;
        let line: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="4" stroke-linejoin="round"/>"#,
            line.join(" ")
        );
        for (x, y) in &pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(*x), py(*y));
        }
    }
    let e = velocity_manipulability(chains.at(problem.horizon), &traj.states[problem.horizon].q, true)?;
    let axes = e.semi_axes();
    let v = e.eigenvectors();
    let angle = -v[(1, 0)].atan2(v[(0, 0)]).to_degrees();
    let c = e.center();
    let _ = writeln!(
        svg,
        r##"<ellipse cx="{:.2}" cy="{:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({angle:.3} {:.2} {:.2})" fill="#9467bd" fill-opacity="0.25" stroke="#9467bd"/>"##,
        px(c[0]),
        py(c[1]),
        axes[0] * scale,
        axes[1] * scale,
        px(c[0]),
        py(c[1])
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(trajectory_header(3, 2), "t,q_0,q_1,q_2,p_x,p_y,u_0,u_1,u_2");
        assert_eq!(trajectory_header(1, 3), "t,q_0,p_x,p_y,p_z,u_0");
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("affordance-export-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.txt");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn compare_blank_alpha_for_failed_cell() {
        let rows = vec![CompareRow {
            mode: "none".into(),
            seed: 3,
            alpha: None,
            status: "aborted".into(),
        }];
        assert_eq!(compare_csv(&rows), "mode,seed,alpha_t,status\nnone,3,,aborted\n");
    }
}
