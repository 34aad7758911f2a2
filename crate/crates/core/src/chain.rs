//! Serial kinematic chains: forward kinematics, geometric Jacobians and
//! rigid tool attachment.
//!
//! Planar and spatial chains share one implementation. A planar chain lives
//! in the world xy-plane with every joint axis along +z; its workspace
//! quantities are the first two coordinates of the spatial ones.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{
    DMatrix, DVector, Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3,
};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Rigid pose of a frame in the world, either planar or spatial.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    iso: Isometry3<f64>,
    planar: bool,
}

impl Pose {
    /// Builds a pose from a position (2 or 3 entries) and a rotation matrix of
    /// matching size. The rotation must be orthonormal with determinant +1.
    pub fn new(position: &[f64], rotation: &DMatrix<f64>) -> Result<Self> {
        let dim = position.len();
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!(
                "pose position must have 2 or 3 entries, got {dim}"
            )));
        }
        if rotation.nrows() != dim || rotation.ncols() != dim {
            return Err(Error::DimensionMismatch {
                what: "pose rotation",
                expected: dim,
                got: rotation.nrows(),
            });
        }
        check_rotation(rotation)?;
        if dim == 2 {
            let theta = rotation[(1, 0)].atan2(rotation[(0, 0)]);
            Ok(Pose::planar(position[0], position[1], theta))
        } else {
            let m = Matrix3::from_iterator(rotation.iter().copied());
            let rot = Rotation3::from_matrix_unchecked(m);
            Ok(Pose {
                iso: Isometry3::from_parts(
                    Translation3::new(position[0], position[1], position[2]),
                    UnitQuaternion::from_rotation_matrix(&rot),
                ),
                planar: false,
            })
        }
    }

    pub fn planar(x: f64, y: f64, theta: f64) -> Self {
        Pose {
            iso: Isometry3::from_parts(
                Translation3::new(x, y, 0.0),
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta),
            ),
            planar: true,
        }
    }

    pub fn spatial(iso: Isometry3<f64>) -> Self {
        Pose { iso, planar: false }
    }

    pub(crate) fn from_isometry(iso: Isometry3<f64>, planar: bool) -> Self {
        Pose { iso, planar }
    }

    pub fn is_planar(&self) -> bool {
        self.planar
    }

    pub fn dim(&self) -> usize {
        if self.planar {
            2
        } else {
            3
        }
    }

    pub fn isometry(&self) -> &Isometry3<f64> {
        &self.iso
    }

    pub fn position(&self) -> DVector<f64> {
        let t = self.iso.translation.vector;
        DVector::from_iterator(self.dim(), t.iter().copied().take(self.dim()))
    }

    pub fn rotation(&self) -> DMatrix<f64> {
        let r = self.iso.rotation.to_rotation_matrix().into_inner();
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| r[(i, j)])
    }

    /// Column `axis` of the rotation, i.e. the world direction of a local axis.
    pub fn axis(&self, axis: usize) -> DVector<f64> {
        let r = self.rotation();
        r.column(axis).into_owned()
    }
}

fn check_rotation(r: &DMatrix<f64>) -> Result<()> {
    let n = r.nrows();
    let gram = r.transpose() * r;
    let err = (gram - DMatrix::<f64>::identity(n, n)).abs().max();
    if err > ORTHONORMAL_TOL || (r.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal);
    }
    Ok(())
}

/// One link in modified (proximal) Denavit–Hartenberg form:
/// `Rx(alpha) * Tx(a) * Rz(theta + offset) * Tz(d)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhLink {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl DhLink {
    pub const fn new(a: f64, alpha: f64, d: f64) -> Self {
        DhLink {
            a,
            alpha,
            d,
            theta_offset: 0.0,
        }
    }

    fn before_joint(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha),
        ) * Isometry3::translation(self.a, 0.0, 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChainGeometry {
    /// Revolute joints about +z, each followed by a link of the given length
    /// along the rotated x-axis.
    Planar { link_lengths: Vec<f64> },
    /// Revolute joints described by modified DH links, followed by a fixed
    /// flange transform.
    Spatial {
        links: Vec<DhLink>,
        flange: Isometry3<f64>,
    },
}

/// Tool rigidly fixed to the flange.
#[derive(Clone, Debug, PartialEq)]
pub struct ToolAttachment {
    /// Transform from the gripper (flange) frame to the tool-head frame.
    pub grip_to_tip: Isometry3<f64>,
    /// Timestep at which the tool was grasped.
    pub attach_step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinematicChain {
    name: String,
    geometry: ChainGeometry,
    q_limits: Vec<(f64, f64)>,
    qdot_limits: Vec<f64>,
    tool: Option<ToolAttachment>,
}

/// Everything derived from one joint configuration.
#[derive(Clone, Debug)]
pub struct KinematicState {
    /// Joint axes in the world frame.
    pub axes: Vec<Vector3<f64>>,
    /// A point on each joint axis in the world frame.
    pub origins: Vec<Vector3<f64>>,
    /// Gripper (flange) frame.
    pub flange: Isometry3<f64>,
    /// Effective end-effector frame: tool head when a tool is attached.
    pub effector: Isometry3<f64>,
    planar: bool,
}

impl KinematicState {
    fn workspace_dim(&self) -> usize {
        if self.planar {
            2
        } else {
            3
        }
    }

    /// 3×D matrix with columns `axis_k × (point - origin_k)`.
    fn point_jacobian3(&self, point: &Vector3<f64>) -> DMatrix<f64> {
        let n = self.axes.len();
        let mut j = DMatrix::zeros(3, n);
        for k in 0..n {
            let col = self.axes[k].cross(&(point - self.origins[k]));
            j.fixed_view_mut::<3, 1>(0, k).copy_from(&col);
        }
        j
    }

    /// Positional Jacobian of the effective end-effector (workspace-dim × D).
    pub fn jacobian(&self) -> DMatrix<f64> {
        let j3 = self.point_jacobian3(&self.effector.translation.vector);
        j3.rows(0, self.workspace_dim()).into_owned()
    }

    /// Positional Jacobian of the flange (workspace-dim × D).
    pub fn flange_jacobian(&self) -> DMatrix<f64> {
        let j3 = self.point_jacobian3(&self.flange.translation.vector);
        j3.rows(0, self.workspace_dim()).into_owned()
    }

    /// Derivative of a world-frame direction rigidly attached to the distal
    /// body: columns `axis_k × v`, truncated to the workspace dimension.
    pub fn direction_jacobian(&self, v: &Vector3<f64>) -> DMatrix<f64> {
        let n = self.axes.len();
        let w = self.workspace_dim();
        let mut j = DMatrix::zeros(w, n);
        for k in 0..n {
            let col = self.axes[k].cross(v);
            for r in 0..w {
                j[(r, k)] = col[r];
            }
        }
        j
    }

    /// Partial derivatives `∂J/∂q_k` of the positional effector Jacobian, one
    /// workspace-dim × D matrix per joint.
    ///
    /// For revolute chains column `i` is `z_i × (p - o_i)`, and
    /// `∂J_i/∂q_k = z_min(i,k) × J_max(i,k)`.
    pub fn jacobian_derivatives(&self) -> Vec<DMatrix<f64>> {
        let n = self.axes.len();
        let w = self.workspace_dim();
        let j3 = self.point_jacobian3(&self.effector.translation.vector);
        (0..n)
            .map(|k| {
                let mut dj = DMatrix::zeros(w, n);
                for i in 0..n {
                    let (lo, hi) = if k <= i { (k, i) } else { (i, k) };
                    let col = self.axes[lo].cross(&j3.fixed_view::<3, 1>(0, hi).into_owned());
                    for r in 0..w {
                        dj[(r, i)] = col[r];
                    }
                }
                dj
            })
            .collect()
    }

    pub fn effector_pose(&self) -> Pose {
        Pose::from_isometry(self.effector, self.planar)
    }

    pub fn flange_pose(&self) -> Pose {
        Pose::from_isometry(self.flange, self.planar)
    }
}

impl KinematicChain {
    pub fn new(
        name: impl Into<String>,
        geometry: ChainGeometry,
        q_limits: Vec<(f64, f64)>,
        qdot_limits: Vec<f64>,
    ) -> Result<Self> {
        let dof = match &geometry {
            ChainGeometry::Planar { link_lengths } => {
                if link_lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                    return Err(Error::validation("link_lengths_m", "lengths must be positive"));
                }
                link_lengths.len()
            }
            ChainGeometry::Spatial { links, .. } => links.len(),
        };
        if dof == 0 {
            return Err(Error::validation("chain", "at least one joint is required"));
        }
        if q_limits.len() != dof {
            return Err(Error::DimensionMismatch {
                what: "joint limits",
                expected: dof,
                got: q_limits.len(),
            });
        }
        if qdot_limits.len() != dof {
            return Err(Error::DimensionMismatch {
                what: "joint speed limits",
                expected: dof,
                got: qdot_limits.len(),
            });
        }
        if let Some(i) = q_limits.iter().position(|(lo, hi)| !(lo < hi)) {
            return Err(Error::validation(
                "q_limits_rad",
                format!("joint {i}: lower limit must be below upper limit"),
            ));
        }
        if let Some(i) = qdot_limits.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::validation(
                "qdot_limits_rad_per_s",
                format!("joint {i}: speed limit must be positive"),
            ));
        }
        Ok(KinematicChain {
            name: name.into(),
            geometry,
            q_limits,
            qdot_limits,
            tool: None,
        })
    }

    /// Planar chain with the given link lengths, joint limits of ±π and unit
    /// speed limits.
    pub fn planar(link_lengths: Vec<f64>) -> Result<Self> {
        let n = link_lengths.len();
        Self::new(
            format!("planar{n}"),
            ChainGeometry::Planar { link_lengths },
            vec![(-PI, PI); n],
            vec![1.0; n],
        )
    }

    /// Looks up a named preset: `planar3` or `spatial7`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "planar3" => Self::new(
                "planar3",
                ChainGeometry::Planar {
                    link_lengths: vec![1.0; 3],
                },
                vec![(-PI, PI); 3],
                vec![4.0; 3],
            ),
            "spatial7" => Self::spatial7(),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["planar3", "spatial7"]
    }

    /// Redundant 7-axis arm approximating a Franka Emika Panda with its hand.
    fn spatial7() -> Result<Self> {
        let links = vec![
            DhLink::new(0.0, 0.0, 0.333),
            DhLink::new(0.0, -FRAC_PI_2, 0.0),
            DhLink::new(0.0, FRAC_PI_2, 0.316),
            DhLink::new(0.0825, FRAC_PI_2, 0.0),
            DhLink::new(-0.0825, -FRAC_PI_2, 0.384),
            DhLink::new(0.0, FRAC_PI_2, 0.0),
            DhLink::new(0.088, FRAC_PI_2, 0.0),
        ];
        // flange (0.107 m) followed by the hand, rotated -45° about z
        let flange = Isometry3::translation(0.0, 0.0, 0.107)
            * Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -FRAC_PI_4),
            )
            * Isometry3::translation(0.0, 0.0, 0.1034);
        let lower = [-2.8973, -1.7628, -2.8973, -3.0718, -2.8973, -0.0175, -2.8973];
        let upper = [2.8973, 1.7628, 2.8973, -0.0698, 2.8973, 3.7525, 2.8973];
        Self::new(
            "spatial7",
            ChainGeometry::Spatial { links, flange },
            lower.iter().copied().zip(upper.iter().copied()).collect(),
            vec![2.1750, 2.1750, 2.1750, 2.1750, 2.610, 2.610, 2.610],
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn geometry(&self) -> &ChainGeometry {
        &self.geometry
    }

    pub fn dof(&self) -> usize {
        self.q_limits.len()
    }

    pub fn is_planar(&self) -> bool {
        matches!(self.geometry, ChainGeometry::Planar { .. })
    }

    pub fn workspace_dim(&self) -> usize {
        if self.is_planar() {
            2
        } else {
            3
        }
    }

    pub fn q_limits(&self) -> &[(f64, f64)] {
        &self.q_limits
    }

    pub fn qdot_limits(&self) -> &[f64] {
        &self.qdot_limits
    }

    pub fn tool(&self) -> Option<&ToolAttachment> {
        self.tool.as_ref()
    }

    pub fn with_q_limits(mut self, q_limits: Vec<(f64, f64)>) -> Result<Self> {
        self = Self::new(self.name, self.geometry, q_limits, self.qdot_limits)?;
        Ok(self)
    }

    pub fn with_qdot_limits(self, qdot_limits: Vec<f64>) -> Result<Self> {
        let tool = self.tool.clone();
        let mut c = Self::new(self.name, self.geometry, self.q_limits, qdot_limits)?;
        c.tool = tool;
        Ok(c)
    }

    pub fn with_tool(&self, tool: ToolAttachment) -> Self {
        let mut c = self.clone();
        c.tool = Some(tool);
        c
    }

    pub fn without_tool(&self) -> Self {
        let mut c = self.clone();
        c.tool = None;
        c
    }

    /// Sum of link reach, an upper bound on the flange distance from the base
    /// (planar) or from the first joint axis origin (spatial).
    pub fn reach(&self) -> f64 {
        match &self.geometry {
            ChainGeometry::Planar { link_lengths } => link_lengths.iter().sum(),
            ChainGeometry::Spatial { links, flange } => {
                links.iter().map(|l| l.a.abs() + l.d.abs()).sum::<f64>()
                    + flange.translation.vector.norm()
            }
        }
    }

    fn check_q(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                what: "joint vector",
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Joint axes, origins, flange and effector frames at `q`.
    pub fn state(&self, q: &DVector<f64>) -> Result<KinematicState> {
        self.check_q(q)?;
        let n = self.dof();
        let mut axes = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        let mut frame = Isometry3::identity();
        let flange = match &self.geometry {
            ChainGeometry::Planar { link_lengths } => {
                for (qi, l) in q.iter().zip(link_lengths) {
                    frame *= rot_z(*qi);
                    axes.push(Vector3::z());
                    origins.push(frame.translation.vector);
                    frame *= Isometry3::translation(*l, 0.0, 0.0);
                }
                frame
            }
            ChainGeometry::Spatial { links, flange } => {
                for (qi, link) in q.iter().zip(links) {
                    frame = frame
                        * link.before_joint()
                        * rot_z(qi + link.theta_offset)
                        * Isometry3::translation(0.0, 0.0, link.d);
                    axes.push(frame.rotation * Vector3::z());
                    origins.push(frame.translation.vector);
                }
                frame * flange
            }
        };
        let effector = match &self.tool {
            Some(tool) => flange * tool.grip_to_tip,
            None => flange,
        };
        Ok(KinematicState {
            axes,
            origins,
            flange,
            effector,
            planar: self.is_planar(),
        })
    }

    /// Pose of the effective end-effector (tool head when a tool is attached).
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Result<Pose> {
        Ok(self.state(q)?.effector_pose())
    }

    /// Pose of the gripper frame, ignoring any attached tool.
    pub fn flange_pose(&self, q: &DVector<f64>) -> Result<Pose> {
        Ok(self.state(q)?.flange_pose())
    }

    /// Positional Jacobian of the effective end-effector.
    pub fn jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.state(q)?.jacobian())
    }

    /// 6×D geometric Jacobian of the effective end-effector: linear rows
    /// first, then angular rows. Spatial chains only.
    pub fn full_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        if self.is_planar() {
            return Err(Error::InvalidArgument(
                "the 6-row Jacobian is only defined for spatial chains".into(),
            ));
        }
        let s = self.state(q)?;
        let n = self.dof();
        let lin = s.point_jacobian3(&s.effector.translation.vector);
        let mut j = DMatrix::zeros(6, n);
        j.rows_mut(0, 3).copy_from(&lin);
        for k in 0..n {
            j.fixed_view_mut::<3, 1>(3, k).copy_from(&s.axes[k]);
        }
        Ok(j)
    }

    /// Returns a copy of this chain extended by the tool grasped at
    /// `grip_pose`, whose head sits at `tool_head_pose` (both in the world
    /// frame at the grasp instant).
    pub fn attach_tool(&self, grip_pose: &Pose, tool_head_pose: &Pose, t_attach: usize) -> Result<Self> {
        let dim = self.workspace_dim();
        for pose in [grip_pose, tool_head_pose] {
            if pose.dim() != dim {
                return Err(Error::DimensionMismatch {
                    what: "tool pose",
                    expected: dim,
                    got: pose.dim(),
                });
            }
            check_rotation(&pose.rotation())?;
        }
        let grip_to_tip = grip_pose.isometry().inverse() * tool_head_pose.isometry();
        Ok(self.with_tool(ToolAttachment {
            grip_to_tip,
            attach_step: t_attach,
        }))
    }
}

fn rot_z(angle: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::identity(),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn straight_planar_arm_along_x() {
        let c = KinematicChain::preset("planar3").unwrap();
        let p = c.forward_kinematics(&dv(&[0.0, 0.0, 0.0])).unwrap().position();
        assert!((p[0] - 3.0).abs() < 1e-12 && p[1].abs() < 1e-12);
        let p = c.forward_kinematics(&dv(&[FRAC_PI_2, 0.0, 0.0])).unwrap().position();
        assert!(p[0].abs() < 1e-12 && (p[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn straight_arm_jacobian() {
        let c = KinematicChain::preset("planar3").unwrap();
        let j = c.jacobian(&dv(&[0.0; 3])).unwrap();
        let expected = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 3.0, 2.0, 1.0]);
        assert!((j - expected).abs().max() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let c = KinematicChain::preset("planar3").unwrap();
        assert!(matches!(
            c.forward_kinematics(&dv(&[0.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(c.jacobian(&dv(&[0.0; 4])).is_err());
    }

    #[test]
    fn rejects_bad_limits() {
        let g = ChainGeometry::Planar {
            link_lengths: vec![1.0],
        };
        assert!(KinematicChain::new("x", g.clone(), vec![(1.0, 0.0)], vec![1.0]).is_err());
        assert!(KinematicChain::new("x", g.clone(), vec![(0.0, 1.0)], vec![0.0]).is_err());
        assert!(KinematicChain::new("x", g, vec![], vec![]).is_err());
        assert!(KinematicChain::preset("nope").is_err());
    }

    #[test]
    fn identical_grip_and_head_is_identity_tool() {
        let c = KinematicChain::preset("planar3").unwrap();
        let g = Pose::planar(0.3, 1.2, 0.4);
        let ext = c.attach_tool(&g, &g, 10).unwrap();
        let t = ext.tool().unwrap();
        assert!(t.grip_to_tip.translation.vector.norm() < 1e-12);
        assert!(t.grip_to_tip.rotation.angle() < 1e-12);
        assert!(c.tool().is_none());
    }

    #[test]
    fn tool_offset_in_grip_frame() {
        let c = KinematicChain::preset("planar3").unwrap();
        let ext = c
            .attach_tool(&Pose::planar(1.0, 1.0, 0.0), &Pose::planar(1.2, 1.0, 0.0), 5)
            .unwrap();
        let t = ext.tool().unwrap().grip_to_tip.translation.vector;
        assert!((t - Vector3::new(0.2, 0.0, 0.0)).norm() < 1e-12);

        // grip rotated by +90° about z, head 0.2 m along world y
        let ext = c
            .attach_tool(
                &Pose::planar(1.0, 1.0, FRAC_PI_2),
                &Pose::planar(1.0, 1.2, FRAC_PI_2),
                5,
            )
            .unwrap();
        let t = ext.tool().unwrap().grip_to_tip.translation.vector;
        assert!((t - Vector3::new(0.2, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn pose_rejects_non_orthonormal() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(Pose::new(&[0.0, 0.0], &r), Err(Error::NotOrthonormal)));
        let reflect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(Pose::new(&[0.0, 0.0], &reflect).is_err());
    }

    #[test]
    fn full_jacobian_has_axis_rows() {
        let c = KinematicChain::preset("spatial7").unwrap();
        let q = dv(&[0.1, -0.3, 0.2, -1.8, 0.1, 1.5, 0.7]);
        let j = c.full_jacobian(&q).unwrap();
        let jp = c.jacobian(&q).unwrap();
        assert_eq!(j.shape(), (6, 7));
        assert!((j.rows(0, 3) - jp).abs().max() < 1e-12);
        // first joint axis is the world z-axis
        assert!((j[(5, 0)] - 1.0).abs() < 1e-12);
        assert!(KinematicChain::preset("planar3")
            .unwrap()
            .full_jacobian(&dv(&[0.0; 3]))
            .is_err());
    }

    #[test]
    fn panda_home_pose_is_plausible() {
        let c = KinematicChain::preset("spatial7").unwrap();
        let q = dv(&[0.0, -FRAC_PI_4, 0.0, -3.0 * FRAC_PI_4, 0.0, FRAC_PI_2, FRAC_PI_4]);
        let p = c.forward_kinematics(&q).unwrap().position();
        // the usual "ready" pose puts the hand about 0.3 m in front, 0.48 m up
        assert!((p[0] - 0.307).abs() < 0.01, "{p}");
        assert!(p[1].abs() < 1e-6);
        assert!((p[2] - 0.487).abs() < 0.02, "{p}");
    }
}
