//! Trajectory optimization for dynamic tool use with redundant manipulators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod chain;
pub mod checks;
pub mod costs;
pub mod error;
pub mod export;
pub mod geom;
pub mod manip;
pub mod ocp;
pub mod oracle;
pub mod scenario;

pub use chain::{DhLink, KinematicChain, KinematicState, Pose, ToolAttachment};
pub use costs::{CostEvaluation, CostKind, CostTerm, Schedule, Timeline};
pub use error::{Error, Result};
pub use geom::{SpdMatrix, UnitVector};
pub use manip::{EllipsoidRecord, JointWeight, ManipulabilityEllipsoid};
pub use ocp::{OcpState, TaskModel, ToolSpec, Trajectory};
pub use admm::{solve_problem, AdmmSettings, ConstraintSet, InnerSettings, OrientedBox, Problem, SolveReport, SolveStatus};
pub use scenario::{builtin_presets, load_scenario, randomize_targets, ManipulabilityMode, Scenario};
