//! Scenario documents (TOML), built-in presets and seeded target placement.
//!
//! Keys carry their units (`_m`, `_rad`, `_s`, `_rad_per_s`). Unknown keys
//! are rejected.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};

use nalgebra::{DMatrix, DVector, Isometry3, Rotation3, Translation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admm::{AdmmSettings, ConstraintSet, Halfspace, InnerSettings, OrientedBox, Problem, StateLayout};
use crate::chain::{KinematicChain, Pose};
use crate::costs::{make_desired_ellipsoid, CostKind, CostTerm, Schedule, Timeline};
use crate::error::{Error, Result};
use crate::geom::{SpdMatrix, UnitVector};
use crate::ocp::{TaskModel, ToolSpec};

/// Rejection-sampling budget of [`randomize_targets`].
pub const MAX_PLACEMENT_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub chain: ChainSpec,
    pub horizon_steps: usize,
    pub dt_s: f64,
    pub t_pick_step: usize,
    pub q0_rad: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    pub constraints: ConstraintSpec,
    #[serde(default)]
    pub targets: TargetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<ToolDoc>,
    #[serde(default)]
    pub manipulability: ManipulabilitySpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub randomize: Option<RandomizeSpec>,
    #[serde(default, rename = "cost")]
    pub costs: Vec<CostSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub preset: String,
    /// Planar chains only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_lengths_m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_limits_rad: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qdot_limits_rad_per_s: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub center_m: Vec<f64>,
    /// `[yaw]` for planar chains, `[roll, pitch, yaw]` otherwise.
    pub rpy_rad: Vec<f64>,
    pub half_extents_m: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfspaceSpec {
    pub normal: Vec<f64>,
    pub lower_m: f64,
    pub upper_m: f64,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    /// Per-joint `[lower, upper]`.
    pub control_bounds_rad_per_s: Vec<[f64; 2]>,
    /// Grasp range, active at `t_pick_step`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via_box: Option<BoxSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub halfspaces: Vec<HalfspaceSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_position_m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_direction: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handle_axis: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolDoc {
    /// Tool head pose in the world while the tool waits to be picked up.
    pub head_position_m: Vec<f64>,
    pub head_rpy_rad: Vec<f64>,
    /// Local axis of the head frame used as its hitting direction.
    #[serde(default)]
    pub direction_axis: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManipulabilityMode {
    #[default]
    None,
    Directional,
    Determinant,
    Tracking,
}

impl ManipulabilityMode {
    pub const ALL: [ManipulabilityMode; 4] = [
        ManipulabilityMode::None,
        ManipulabilityMode::Directional,
        ManipulabilityMode::Determinant,
        ManipulabilityMode::Tracking,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ManipulabilityMode::None => "none",
            ManipulabilityMode::Directional => "directional",
            ManipulabilityMode::Determinant => "determinant",
            ManipulabilityMode::Tracking => "tracking",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::validation("manipulability.mode", format!("unknown mode `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManipulabilitySpec {
    #[serde(default)]
    pub mode: ManipulabilityMode,
    #[serde(default = "default_man_weight")]
    pub weight: f64,
    /// Task direction `n`; falls back to the hitting direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    /// Eigenvalues of the desired ellipsoid along and across `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub major: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minor: Option<f64>,
    /// Explicit desired ellipsoid (row-major), overrides major/minor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired_matrix: Option<Vec<Vec<f64>>>,
}

fn default_man_weight() -> f64 {
    1.0
}

impl Default for ManipulabilitySpec {
    fn default() -> Self {
        ManipulabilitySpec {
            mode: ManipulabilityMode::None,
            weight: default_man_weight(),
            direction: None,
            major: None,
            minor: None,
            desired_matrix: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub admm_max_iters: usize,
    pub ilqr_max_iters: usize,
    pub cost_threshold: f64,
    pub primal_tol: f64,
    pub dual_tol: f64,
    /// Diagonal of `Q_r` on constrained state components.
    pub state_penalty: f64,
    /// Diagonal of `R_r`.
    pub control_penalty: f64,
    /// Diagonal of `R`.
    pub control_weight: f64,
    pub min_step: f64,
    /// Use the step formula exactly as printed (without the `R·û` term).
    pub printed_step_formula: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            admm_max_iters: 20,
            ilqr_max_iters: 10,
            cost_threshold: 1.0,
            primal_tol: 1e-4,
            dual_tol: 1e-4,
            state_penalty: 10.0,
            control_penalty: 1e-3,
            control_weight: 1e-5,
            min_step: crate::ocp::ALPHA_MIN,
            printed_step_formula: false,
        }
    }
}

/// Regions for seeded placement of the grasp range (the tool moves with it)
/// and the final target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizeSpec {
    pub via_center_min_m: Vec<f64>,
    pub via_center_max_m: Vec<f64>,
    pub target_min_m: Vec<f64>,
    pub target_max_m: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKindName {
    Orientation,
    Position,
    Direction,
    JointLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedSchedule {
    Pick,
    Final,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Named(NamedSchedule),
    Steps(Vec<usize>),
}

impl ScheduleSpec {
    fn to_schedule(&self) -> Schedule {
        match self {
            ScheduleSpec::Named(NamedSchedule::Pick) => Schedule::Pick,
            ScheduleSpec::Named(NamedSchedule::Final) => Schedule::Final,
            ScheduleSpec::Named(NamedSchedule::All) => Schedule::All,
            ScheduleSpec::Steps(s) => Schedule::Steps(s.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub kind: CostKindName,
    pub weight: f64,
    pub schedule: ScheduleSpec,
}

fn unit(v: &[f64], field: &str) -> Result<UnitVector> {
    UnitVector::from_slice(v).map_err(|_| Error::validation(field, "must be a non-zero finite vector"))
}

fn rotation_from_rpy(rpy: &[f64], dim: usize, field: &str) -> Result<DMatrix<f64>> {
    match (dim, rpy.len()) {
        (2, 1) => {
            let (s, c) = rpy[0].sin_cos();
            Ok(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
        }
        (3, 3) => {
            let r = Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]);
            Ok(DMatrix::from_fn(3, 3, |i, j| r[(i, j)]))
        }
        _ => Err(Error::validation(
            field,
            format!("expected {} angle(s) for a {dim}-D workspace", if dim == 2 { 1 } else { 3 }),
        )),
    }
}

fn pose_from(position: &[f64], rpy: &[f64], dim: usize, field: &str) -> Result<Pose> {
    if position.len() != dim {
        return Err(Error::validation(field, format!("position needs {dim} entries")));
    }
    match dim {
        2 => {
            rotation_from_rpy(rpy, 2, field)?;
            Ok(Pose::planar(position[0], position[1], rpy[0]))
        }
        _ => {
            rotation_from_rpy(rpy, 3, field)?;
            Ok(Pose::spatial(Isometry3::from_parts(
                Translation3::new(position[0], position[1], position[2]),
                UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
            )))
        }
    }
}

fn finite(v: &[f64], field: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation(field, "values must be finite"));
    }
    Ok(())
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn build_chain(&self) -> Result<KinematicChain> {
        let mut chain = match &self.chain.link_lengths_m {
            Some(lengths) => {
                if !KinematicChain::preset(&self.chain.preset)?.is_planar() {
                    return Err(Error::validation("chain.link_lengths_m", "only planar chains take link lengths"));
                }
                let mut c = KinematicChain::planar(lengths.clone())?;
                let base = KinematicChain::preset(&self.chain.preset)?;
                if base.dof() == c.dof() {
                    c = c.with_qdot_limits(base.qdot_limits().to_vec())?;
                }
                c
            }
            None => KinematicChain::preset(&self.chain.preset)?,
        };
        if let Some(limits) = &self.chain.q_limits_rad {
            chain = chain.with_q_limits(limits.iter().map(|l| (l[0], l[1])).collect())?;
        }
        if let Some(limits) = &self.chain.qdot_limits_rad_per_s {
            chain = chain.with_qdot_limits(limits.clone())?;
        }
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        self.build().map(|_| ())
    }

    /// Task direction for manipulability: explicit direction, else the
    /// hitting direction.
    pub fn task_direction(&self) -> Option<&Vec<f64>> {
        self.manipulability
            .direction
            .as_ref()
            .or(self.targets.hit_direction.as_ref())
    }

    /// Validates and assembles the runtime problem.
    pub fn build(&self) -> Result<Problem> {
        let chain = self.build_chain()?;
        let d = chain.dof();
        let w = chain.workspace_dim();
        let horizon = self.horizon_steps;
        if horizon < 2 {
            return Err(Error::validation("horizon_steps", "must be at least 2"));
        }
        if !(self.dt_s > 0.0) || !self.dt_s.is_finite() {
            return Err(Error::validation("dt_s", "must be positive"));
        }
        if self.t_pick_step == 0 || self.t_pick_step >= horizon {
            return Err(Error::validation("t_pick_step", "must lie strictly between 0 and horizon_steps"));
        }
        if self.q0_rad.len() != d {
            return Err(Error::validation("q0_rad", format!("expected {d} joint angles")));
        }
        finite(&self.q0_rad, "q0_rad")?;

        let s = &self.solver;
        for (name, v) in [
            ("solver.cost_threshold", s.cost_threshold),
            ("solver.primal_tol", s.primal_tol),
            ("solver.dual_tol", s.dual_tol),
            ("solver.state_penalty", s.state_penalty),
            ("solver.control_penalty", s.control_penalty),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(name, "must be finite and non-negative"));
            }
        }
        if !(s.control_weight > 0.0) || !s.control_weight.is_finite() {
            return Err(Error::validation("solver.control_weight", "must be positive"));
        }
        if !(s.min_step > 0.0 && s.min_step <= 1.0) {
            return Err(Error::validation("solver.min_step", "must lie in (0, 1]"));
        }
        if s.admm_max_iters == 0 || s.ilqr_max_iters == 0 {
            return Err(Error::validation("solver", "iteration caps must be positive"));
        }

        let timeline = Timeline {
            pick: self.t_pick_step,
            horizon,
        };
        let final_position = match &self.targets.final_position_m {
            Some(p) => {
                if p.len() != w {
                    return Err(Error::validation("targets.final_position_m", format!("needs {w} entries")));
                }
                finite(p, "targets.final_position_m")?;
                Some(DVector::from_column_slice(p))
            }
            None => None,
        };
        let effector_axis = self.tool.as_ref().map_or(0, |t| t.direction_axis);
        if effector_axis >= w {
            return Err(Error::validation("tool.direction_axis", "axis index out of range"));
        }

        let mut costs = Vec::new();
        for (i, c) in self.costs.iter().enumerate() {
            let field = format!("cost[{i}]");
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(Error::validation(field, "weight must be finite and non-negative"));
            }
            if let ScheduleSpec::Steps(steps) = &c.schedule {
                if steps.iter().any(|t| *t > horizon) {
                    return Err(Error::validation(field, "scheduled step beyond the horizon"));
                }
            }
            let kind = match c.kind {
                CostKindName::Orientation => {
                    let h = self
                        .targets
                        .handle_axis
                        .as_ref()
                        .ok_or_else(|| Error::validation(&field, "orientation cost needs targets.handle_axis"))?;
                    CostKind::Orientation {
                        handle_axis: unit(h, "targets.handle_axis")?,
                        gripper_axis: 1,
                    }
                }
                CostKindName::Position => CostKind::Position {
                    target: final_position
                        .clone()
                        .ok_or_else(|| Error::validation(&field, "position cost needs targets.final_position_m"))?,
                },
                CostKindName::Direction => {
                    let v = self
                        .targets
                        .hit_direction
                        .as_ref()
                        .ok_or_else(|| Error::validation(&field, "direction cost needs targets.hit_direction"))?;
                    CostKind::Direction {
                        desired: unit(v, "targets.hit_direction")?,
                        effector_axis,
                    }
                }
                CostKindName::JointLimit => CostKind::JointLimit,
            };
            let term = CostTerm::new(kind, c.weight, c.schedule.to_schedule());
            term.validate(&chain).map_err(|e| Error::validation(&field, e.to_string()))?;
            costs.push(term);
        }

        let task_direction = match self.task_direction() {
            Some(v) => {
                let n = unit(v, "manipulability.direction")?;
                if n.len() != w {
                    return Err(Error::validation("manipulability.direction", format!("needs {w} entries")));
                }
                Some(n)
            }
            None => None,
        };
        let m = &self.manipulability;
        if !(m.weight >= 0.0) || !m.weight.is_finite() {
            return Err(Error::validation("manipulability.weight", "must be finite and non-negative"));
        }
        let man_kind = match m.mode {
            ManipulabilityMode::None => None,
            ManipulabilityMode::Directional => Some(CostKind::ManDirectional {
                direction: task_direction
                    .clone()
                    .ok_or_else(|| Error::validation("manipulability.direction", "directional mode needs a direction"))?,
            }),
            ManipulabilityMode::Determinant => Some(CostKind::ManDeterminant),
            ManipulabilityMode::Tracking => {
                let desired = match &m.desired_matrix {
                    Some(rows) => {
                        if rows.len() != w || rows.iter().any(|r| r.len() != w) {
                            return Err(Error::validation("manipulability.desired_matrix", format!("needs {w}x{w} entries")));
                        }
                        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                        SpdMatrix::new(DMatrix::from_row_slice(w, w, &flat))
                            .map_err(|e| Error::validation("manipulability.desired_matrix", e.to_string()))?
                    }
                    None => {
                        let n = task_direction.clone().ok_or_else(|| {
                            Error::validation("manipulability.direction", "tracking mode needs a direction or a matrix")
                        })?;
                        let (major, minor) = m.major.zip(m.minor).ok_or_else(|| {
                            Error::validation("manipulability", "tracking mode needs major and minor")
                        })?;
                        make_desired_ellipsoid(&n, major, minor)
                            .map_err(|e| Error::validation("manipulability", e.to_string()))?
                    }
                };
                Some(CostKind::ManTracking { desired })
            }
        };
        if let Some(kind) = man_kind {
            costs.push(CostTerm::new(kind, m.weight, Schedule::Final));
        }

        let tool = match &self.tool {
            Some(t) => {
                finite(&t.head_position_m, "tool.head_position_m")?;
                Some(ToolSpec {
                    head_pose: pose_from(&t.head_position_m, &t.head_rpy_rad, w, "tool")?,
                    handle: None,
                })
            }
            None => None,
        };

        let cs = &self.constraints;
        if cs.control_bounds_rad_per_s.len() != d {
            return Err(Error::validation("constraints.control_bounds_rad_per_s", format!("expected {d} pairs")));
        }
        let via_box = match &cs.via_box {
            Some(b) => {
                if b.center_m.len() != w || b.half_extents_m.len() != w {
                    return Err(Error::validation("constraints.via_box", format!("needs {w}-D center and half extents")));
                }
                finite(&b.center_m, "constraints.via_box.center_m")?;
                let rot = rotation_from_rpy(&b.rpy_rad, w, "constraints.via_box.rpy_rad")?;
                Some(
                    OrientedBox::new(
                        DVector::from_column_slice(&b.center_m),
                        rot,
                        DVector::from_column_slice(&b.half_extents_m),
                    )
                    .map_err(|e| Error::validation("constraints.via_box", e.to_string()))?,
                )
            }
            None => None,
        };
        let tool = tool.map(|t| ToolSpec {
            handle: via_box.clone(),
            ..t
        });
        let halfspaces = cs
            .halfspaces
            .iter()
            .map(|h| Halfspace {
                normal: DVector::from_column_slice(&h.normal),
                lower: h.lower_m,
                upper: h.upper_m,
                step: h.step,
            })
            .collect();
        let constraints = ConstraintSet {
            layout: StateLayout {
                dof: d,
                workspace_dim: w,
                horizon,
            },
            control_lower: DVector::from_iterator(d, cs.control_bounds_rad_per_s.iter().map(|b| b[0])),
            control_upper: DVector::from_iterator(d, cs.control_bounds_rad_per_s.iter().map(|b| b[1])),
            via_box,
            via_step: self.t_pick_step,
            halfspaces,
        };
        constraints
            .validate()
            .map_err(|e| Error::validation("constraints", e.to_string()))?;

        if let Some(r) = &self.randomize {
            for (name, v) in [
                ("randomize.via_center_min_m", &r.via_center_min_m),
                ("randomize.via_center_max_m", &r.via_center_max_m),
                ("randomize.target_min_m", &r.target_min_m),
                ("randomize.target_max_m", &r.target_max_m),
            ] {
                if v.len() != w {
                    return Err(Error::validation(name, format!("needs {w} entries")));
                }
            }
            let ordered = |lo: &[f64], hi: &[f64]| lo.iter().zip(hi).all(|(a, b)| a <= b);
            if !ordered(&r.via_center_min_m, &r.via_center_max_m) || !ordered(&r.target_min_m, &r.target_max_m) {
                return Err(Error::validation("randomize", "min corner must not exceed max corner"));
            }
        }

        Ok(Problem {
            name: self.name.clone(),
            model: TaskModel {
                chain,
                tool,
                costs,
                timeline,
                control_weight: DVector::from_element(d, s.control_weight),
            },
            q0: DVector::from_column_slice(&self.q0_rad),
            horizon,
            dt: self.dt_s,
            constraints,
            admm: AdmmSettings {
                max_iters: s.admm_max_iters,
                primal_tol: s.primal_tol,
                dual_tol: s.dual_tol,
            },
            inner: InnerSettings {
                max_iters: s.ilqr_max_iters,
                cost_threshold: s.cost_threshold,
                alpha_min: s.min_step,
                printed_formula: s.printed_step_formula,
            },
            state_penalty: s.state_penalty,
            control_penalty: s.control_penalty,
            final_position,
            task_direction,
        })
    }

    pub fn with_mode(mut self, mode: ManipulabilityMode) -> Self {
        self.manipulability.mode = mode;
        self
    }
}

/// Places the grasp range (and the tool with it) and the final target
/// uniformly in their regions, rejecting placements beyond the chain reach.
pub fn randomize_targets(scenario: &Scenario, seed: u64) -> Result<Scenario> {
    let region = scenario
        .randomize
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("scenario `{}` has no randomize region", scenario.name)))?;
    let chain = scenario.build_chain()?;
    let reach = chain.reach();
    // distance from the first joint axis origin
    let origin = chain.state(&DVector::zeros(chain.dof()))?.origins[0];
    let origin: Vec<f64> = origin.iter().take(chain.workspace_dim()).copied().collect();
    let within = |p: &[f64]| p.iter().zip(&origin).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= reach;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = |lo: &[f64], hi: &[f64]| -> Vec<f64> {
        lo.iter()
            .zip(hi)
            .map(|(a, b)| if a < b { rng.random_range(*a..*b) } else { *a })
            .collect()
    };
    let mut out = scenario.clone();
    out.seed = seed;
    let mut placed = None;
    for _ in 0..MAX_PLACEMENT_SAMPLES {
        let center = sample(&region.via_center_min_m, &region.via_center_max_m);
        let target = sample(&region.target_min_m, &region.target_max_m);
        if within(&center) && within(&target) {
            placed = Some((center, target));
            break;
        }
    }
    let (center, target) = placed.ok_or(Error::Unreachable(MAX_PLACEMENT_SAMPLES))?;
    if let Some(b) = out.constraints.via_box.as_mut() {
        if let Some(tool) = out.tool.as_mut() {
            for ((h, c), old) in tool.head_position_m.iter_mut().zip(&center).zip(&b.center_m) {
                *h += c - old;
            }
        }
        b.center_m = center;
    }
    out.targets.final_position_m = Some(target);
    Ok(out)
}

fn bounds(v: &[f64]) -> Vec<[f64; 2]> {
    v.iter().map(|b| [-b, *b]).collect()
}

fn cost(kind: CostKindName, weight: f64, schedule: NamedSchedule) -> CostSpec {
    CostSpec {
        kind,
        weight,
        schedule: ScheduleSpec::Named(schedule),
    }
}

fn fig3a(variant: usize) -> Scenario {
    let mut costs = vec![cost(CostKindName::Position, 1e2, NamedSchedule::Final)];
    if variant == 3 || variant == 4 {
        costs.push(cost(CostKindName::Orientation, 1e2, NamedSchedule::Pick));
    }
    if variant == 2 || variant == 4 {
        costs.push(cost(CostKindName::Direction, 1e2, NamedSchedule::Final));
    }
    Scenario {
        name: format!("fig3a-{variant}"),
        chain: ChainSpec {
            preset: "planar3".into(),
            link_lengths_m: None,
            q_limits_rad: None,
            qdot_limits_rad_per_s: None,
        },
        horizon_steps: 100,
        dt_s: 0.01,
        t_pick_step: 50,
        q0_rad: vec![0.6, 0.4, 0.3],
        seed: 0,
        constraints: ConstraintSpec {
            control_bounds_rad_per_s: bounds(&[4.0; 3]),
            via_box: Some(BoxSpec {
                center_m: vec![1.4, 1.2],
                rpy_rad: vec![FRAC_PI_6],
                half_extents_m: vec![0.7, 0.1],
            }),
            halfspaces: vec![],
        },
        targets: TargetSpec {
            final_position_m: Some(vec![0.8, 2.4]),
            hit_direction: Some(vec![0.6, 0.8]),
            handle_axis: Some(vec![FRAC_PI_6.cos(), FRAC_PI_6.sin()]),
        },
        tool: None,
        manipulability: ManipulabilitySpec::default(),
        solver: SolverSpec {
            state_penalty: 10.0,
            control_penalty: 1e-3,
            control_weight: 1e-5,
            ..SolverSpec::default()
        },
        randomize: None,
        costs,
    }
}

fn fig4_pickplace() -> Scenario {
    let th: f64 = 1.2;
    let (center, handle) = ([2.0, 0.9], [th.cos(), th.sin()]);
    Scenario {
        name: "fig4-pickplace".into(),
        chain: ChainSpec {
            preset: "planar3".into(),
            link_lengths_m: None,
            q_limits_rad: None,
            qdot_limits_rad_per_s: None,
        },
        horizon_steps: 100,
        dt_s: 0.01,
        t_pick_step: 50,
        q0_rad: vec![-0.2, 0.8, 0.6],
        seed: 0,
        constraints: ConstraintSpec {
            control_bounds_rad_per_s: bounds(&[4.0; 3]),
            via_box: Some(BoxSpec {
                center_m: center.to_vec(),
                rpy_rad: vec![th],
                half_extents_m: vec![0.3, 0.02],
            }),
            halfspaces: vec![],
        },
        targets: TargetSpec {
            final_position_m: Some(vec![0.6, 2.0]),
            hit_direction: None,
            handle_axis: Some(handle.to_vec()),
        },
        // head 0.3 m beyond the far end of the handle
        tool: Some(ToolDoc {
            head_position_m: vec![center[0] + 0.6 * handle[0], center[1] + 0.6 * handle[1]],
            head_rpy_rad: vec![th],
            direction_axis: 0,
        }),
        manipulability: ManipulabilitySpec {
            mode: ManipulabilityMode::Directional,
            weight: 1.0,
            direction: Some(vec![0.0, -1.0]),
            major: Some(4.0),
            minor: Some(0.25),
            desired_matrix: None,
        },
        solver: SolverSpec {
            state_penalty: 0.1,
            control_penalty: 1e-2,
            control_weight: 1e-5,
            ..SolverSpec::default()
        },
        randomize: Some(RandomizeSpec {
            via_center_min_m: vec![1.85, 0.75],
            via_center_max_m: vec![2.15, 1.05],
            target_min_m: vec![0.3, 1.7],
            target_max_m: vec![0.9, 2.3],
        }),
        costs: vec![
            cost(CostKindName::Orientation, 1e1, NamedSchedule::Pick),
            cost(CostKindName::Position, 1e2, NamedSchedule::Final),
            cost(CostKindName::JointLimit, 1e2, NamedSchedule::All),
        ],
    }
}

const PANDA_READY: [f64; 7] = [0.0, -FRAC_PI_4, 0.0, -3.0 * FRAC_PI_4, 0.0, FRAC_PI_2, FRAC_PI_4];

fn spatial7_range() -> Scenario {
    Scenario {
        name: "spatial7-range".into(),
        chain: ChainSpec {
            preset: "spatial7".into(),
            link_lengths_m: None,
            q_limits_rad: None,
            qdot_limits_rad_per_s: None,
        },
        horizon_steps: 100,
        dt_s: 0.06,
        t_pick_step: 50,
        q0_rad: PANDA_READY.to_vec(),
        seed: 0,
        constraints: ConstraintSpec {
            control_bounds_rad_per_s: bounds(&[3.0; 7]),
            via_box: Some(BoxSpec {
                center_m: vec![0.4, 0.8, 0.5],
                rpy_rad: vec![0.0, 0.0, 0.0],
                half_extents_m: vec![0.5, 0.5, 0.5],
            }),
            halfspaces: vec![],
        },
        targets: TargetSpec {
            final_position_m: Some(vec![0.5, -0.3, 0.3]),
            hit_direction: None,
            handle_axis: Some(vec![0.0, 1.0, 0.0]),
        },
        tool: None,
        manipulability: ManipulabilitySpec::default(),
        solver: SolverSpec {
            state_penalty: 1.0,
            control_penalty: 1e-3,
            control_weight: 1e-5,
            ..SolverSpec::default()
        },
        randomize: None,
        costs: vec![
            cost(CostKindName::Position, 1e1, NamedSchedule::Final),
            cost(CostKindName::Orientation, 1e0, NamedSchedule::Pick),
        ],
    }
}

fn hammer_sim() -> Scenario {
    let limits = [2.175, 2.175, 2.175, 2.175, 2.61, 2.61, 2.61];
    Scenario {
        name: "hammer-sim".into(),
        chain: ChainSpec {
            preset: "spatial7".into(),
            link_lengths_m: None,
            q_limits_rad: None,
            qdot_limits_rad_per_s: None,
        },
        horizon_steps: 100,
        dt_s: 0.06,
        t_pick_step: 50,
        q0_rad: PANDA_READY.to_vec(),
        seed: 0,
        constraints: ConstraintSpec {
            control_bounds_rad_per_s: bounds(&limits),
            // handle segment 50–230 mm from the head, 1 mm thick
            via_box: Some(BoxSpec {
                center_m: vec![0.5, -0.16, 0.2],
                rpy_rad: vec![0.0, 0.0, FRAC_PI_2],
                half_extents_m: vec![0.09, 5e-4, 5e-4],
            }),
            halfspaces: vec![],
        },
        targets: TargetSpec {
            final_position_m: Some(vec![0.45, 0.25, 0.25]),
            hit_direction: Some(vec![0.0, 0.0, -1.0]),
            handle_axis: Some(vec![0.0, 1.0, 0.0]),
        },
        tool: Some(ToolDoc {
            head_position_m: vec![0.5, -0.3, 0.2],
            head_rpy_rad: vec![0.0, 0.0, 0.0],
            direction_axis: 0,
        }),
        manipulability: ManipulabilitySpec {
            mode: ManipulabilityMode::Directional,
            weight: 0.1,
            direction: Some(vec![0.0, 0.0, -1.0]),
            major: Some(1.0),
            minor: Some(0.05),
            desired_matrix: None,
        },
        solver: SolverSpec {
            state_penalty: 0.1,
            control_penalty: 1e-3,
            control_weight: 1e-5,
            ..SolverSpec::default()
        },
        randomize: Some(RandomizeSpec {
            via_center_min_m: vec![0.4, -0.3, 0.15],
            via_center_max_m: vec![0.6, -0.1, 0.25],
            target_min_m: vec![0.35, 0.15, 0.2],
            target_max_m: vec![0.55, 0.35, 0.3],
        }),
        costs: vec![
            cost(CostKindName::Orientation, 1e1, NamedSchedule::Pick),
            cost(CostKindName::Position, 1e2, NamedSchedule::Final),
            cost(CostKindName::Direction, 1e1, NamedSchedule::Final),
            cost(CostKindName::JointLimit, 1e2, NamedSchedule::All),
        ],
    }
}

/// Built-in scenarios. Solver parameters, weights and limits are the published
/// ones; initial configurations, box placements and targets are approximate
/// and chosen here.
pub const PRESET_NAMES: [&str; 7] = [
    "fig3a-1",
    "fig3a-2",
    "fig3a-3",
    "fig3a-4",
    "fig4-pickplace",
    "spatial7-range",
    "hammer-sim",
];

pub fn builtin_presets() -> Vec<Scenario> {
    PRESET_NAMES.iter().map(|n| preset(n).expect("built-in preset")).collect()
}

pub fn preset(name: &str) -> Result<Scenario> {
    match name {
        "fig3a-1" => Ok(fig3a(1)),
        "fig3a-2" => Ok(fig3a(2)),
        "fig3a-3" => Ok(fig3a(3)),
        "fig3a-4" => Ok(fig3a(4)),
        "fig4-pickplace" => Ok(fig4_pickplace()),
        "spatial7-range" => Ok(spatial7_range()),
        "hammer-sim" => Ok(hammer_sim()),
        _ => Err(Error::UnknownPreset(name.to_string())),
    }
}

/// Loads a scenario document, or a preset when `source` is `preset:<name>`.
pub fn load_scenario(source: &str) -> Result<Scenario> {
    if let Some(name) = source.strip_prefix("preset:") {
        return preset(name.trim());
    }
    Scenario::from_toml(source)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        assert!(builtin_presets().len() >= 6);
        for s in builtin_presets() {
            s.validate().unwrap();
            let text = s.to_toml().unwrap();
            assert_eq!(Scenario::from_toml(&text).unwrap(), s, "{}", s.name);
        }
    }

    #[test]
    fn fig3a_parameters() {
        let s = preset("fig3a-1").unwrap();
        assert_eq!(s.dt_s, 0.01);
        assert_eq!(s.horizon_steps, 100);
        assert_eq!(s.t_pick_step, 50);
        let b = s.constraints.via_box.as_ref().unwrap();
        assert_eq!(b.half_extents_m, vec![0.7, 0.1]);
    }

    #[test]
    fn spatial_velocity_limits() {
        let c = preset("hammer-sim").unwrap().build_chain().unwrap();
        assert_eq!(c.qdot_limits(), &[2.175, 2.175, 2.175, 2.175, 2.61, 2.61, 2.61]);
    }

    #[test]
    fn pick_at_horizon_is_rejected() {
        let mut s = preset("fig3a-1").unwrap();
        s.t_pick_step = s.horizon_steps;
        match s.validate() {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "t_pick_step"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn minimal_document_gets_defaults() {
        let text = r#"
name = "tiny"
horizon_steps = 10
dt_s = 0.01
t_pick_step = 5
q0_rad = [0.1, 0.2, 0.3]

[chain]
preset = "planar3"

[constraints]
control_bounds_rad_per_s = [[-4.0, 4.0], [-4.0, 4.0], [-4.0, 4.0]]
"#;
        let s = Scenario::from_toml(text).unwrap();
        assert_eq!(s.solver, SolverSpec::default());
        assert_eq!(s.manipulability.mode, ManipulabilityMode::None);
        assert!(s.costs.is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = preset("fig3a-1").unwrap().to_toml().unwrap() + "\nbogus = 1\n";
        assert!(matches!(Scenario::from_toml(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn randomization_is_deterministic_and_distinct() {
        let s = preset("fig4-pickplace").unwrap();
        let a = randomize_targets(&s, 3).unwrap();
        assert_eq!(a, randomize_targets(&s, 3).unwrap());
        let targets: Vec<_> = (0..10)
            .map(|k| randomize_targets(&s, k).unwrap().targets.final_position_m.unwrap())
            .collect();
        for i in 0..10 {
            assert!(targets[i].iter().map(|v| v * v).sum::<f64>().sqrt() <= 3.0);
            for j in 0..i {
                assert_ne!(targets[i], targets[j]);
            }
        }
        assert!(randomize_targets(&preset("fig3a-1").unwrap(), 0).is_err());
    }

    #[test]
    fn unreachable_region_errors() {
        let mut s = preset("fig4-pickplace").unwrap();
        let r = s.randomize.as_mut().unwrap();
        r.target_min_m = vec![10.0, 10.0];
        r.target_max_m = vec![11.0, 11.0];
        assert!(matches!(randomize_targets(&s, 0), Err(Error::Unreachable(1000))));
    }
}
