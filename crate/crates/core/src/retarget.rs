//! Hand keypoints to robot joint values, and placement of the robot so its
//! wrist frame coincides with the human wrist frame.
//!
//! Dexterous hands take one joint per keypoint triplet: the flexion is
//! `sign * (pi - angle(a - b, c - b)) + offset`, so a straight finger maps to
//! zero. Grippers take a single aperture from the distance between two
//! fingertips. Joints that neither rule determines come from [`ArmDefaults`].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    build_hand_frame, build_robot_frame, frame_to_transform, GeometryError, HandFrame, HomogeneousMatrix, RobotFrame,
};
use crate::hand::{mano, FrameRecord, HandKeypoints, NUM_KEYPOINTS};
use crate::robot::{marker_positions, JointConfig, RobotError, RobotModel};

/// Minimum distance between triplet points, in meters.
pub const TRIPLET_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetargetError {
    #[error("degenerate triplet {triplet:?} for joint {joint:?}: coincident keypoints")]
    DegenerateTriplet { joint: String, triplet: [usize; 3] },
    #[error("joint {0:?} is assigned more than once")]
    ConflictingAssignment(String),
    #[error("joint {0:?} has neither a retargeted value nor a default")]
    IncompleteConfig(String),
    #[error("invalid retarget configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Robot(#[from] RobotError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetargetMode {
    Gripper,
    Dexterous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerMappingEntry {
    pub joint: String,
    pub triplet: [usize; 3],
    #[serde(default = "one")]
    pub sign: f64,
    #[serde(default)]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

pub type FingerMapping = Vec<FingerMappingEntry>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTarget {
    pub joint: String,
    pub closed: f64,
    pub open: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperCalibration {
    #[serde(default = "default_tip_a")]
    pub tip_a: usize,
    #[serde(default = "default_tip_b")]
    pub tip_b: usize,
    #[serde(default = "default_d_min")]
    pub d_min: f64,
    #[serde(default = "default_d_max")]
    pub d_max: f64,
    pub joint_targets: Vec<JointTarget>,
}

fn default_tip_a() -> usize {
    mano::THUMB_TIP
}
fn default_tip_b() -> usize {
    mano::INDEX_TIP
}
fn default_d_min() -> f64 {
    0.02
}
fn default_d_max() -> f64 {
    0.10
}

impl GripperCalibration {
    pub fn with_targets(joint_targets: Vec<JointTarget>) -> Self {
        GripperCalibration {
            tip_a: default_tip_a(),
            tip_b: default_tip_b(),
            d_min: default_d_min(),
            d_max: default_d_max(),
            joint_targets,
        }
    }
}

/// Fixed values for joints the hand does not determine.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArmDefaults(pub JointConfig);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerLinks {
    pub wrist: String,
    pub middle: String,
    pub ring: String,
}

/// Per-embodiment retargeting configuration (the `*.retarget.json` files).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetConfig {
    pub mode: RetargetMode,
    #[serde(default)]
    pub finger_mapping: FingerMapping,
    #[serde(default)]
    pub gripper: Option<GripperCalibration>,
    #[serde(default)]
    pub arm_defaults: ArmDefaults,
    pub marker_links: MarkerLinks,
}

impl RetargetConfig {
    pub fn from_json(text: &str) -> Result<Self, RetargetError> {
        serde_json::from_str(text).map_err(|e| RetargetError::Config(e.to_string()))
    }

    /// Joints this configuration retargets from keypoints.
    pub fn mapped_joints(&self) -> Vec<&str> {
        match self.mode {
            RetargetMode::Dexterous => self.finger_mapping.iter().map(|e| e.joint.as_str()).collect(),
            RetargetMode::Gripper => self
                .gripper
                .iter()
                .flat_map(|g| g.joint_targets.iter().map(|t| t.joint.as_str()))
                .collect(),
        }
    }

    /// Checks the configuration against a model: names resolve, triplets are
    /// consecutive MANO keypoints, calibration is sane, and mapped joints plus
    /// defaults cover every movable joint exactly once.
    pub fn validate(&self, model: &RobotModel) -> Result<(), RetargetError> {
        let cfg_err = |m: String| Err(RetargetError::Config(m));
        match self.mode {
            RetargetMode::Dexterous => {
                if self.finger_mapping.is_empty() {
                    return cfg_err("dexterous mode needs a finger_mapping".into());
                }
                for e in &self.finger_mapping {
                    let [a, b, c] = e.triplet;
                    if !mano::is_consecutive_triplet((a, b, c)) {
                        return cfg_err(format!("triplet {:?} for {:?} is not three consecutive keypoints of one finger", e.triplet, e.joint));
                    }
                    if e.sign != 1.0 && e.sign != -1.0 {
                        return cfg_err(format!("sign for {:?} must be +1 or -1", e.joint));
                    }
                    if !e.offset.is_finite() {
                        return cfg_err(format!("offset for {:?} must be finite", e.joint));
                    }
                }
            }
            RetargetMode::Gripper => {
                let Some(g) = &self.gripper else {
                    return cfg_err("gripper mode needs a gripper calibration".into());
                };
                if g.tip_a >= NUM_KEYPOINTS || g.tip_b >= NUM_KEYPOINTS || g.tip_a == g.tip_b {
                    return cfg_err("gripper tips must be two distinct keypoint indices".into());
                }
                if !(0.0 <= g.d_min && g.d_min < g.d_max) {
                    return cfg_err(format!("gripper needs 0 <= d_min < d_max, got {} / {}", g.d_min, g.d_max));
                }
                for t in &g.joint_targets {
                    let lim = model
                        .joint(&t.joint)
                        .and_then(|j| j.limits)
                        .ok_or_else(|| RetargetError::Config(format!("gripper joint {:?} is not a movable joint", t.joint)))?;
                    if !lim.contains(t.closed) || !lim.contains(t.open) {
                        return cfg_err(format!("gripper targets for {:?} fall outside its limits", t.joint));
                    }
                }
            }
        }
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for name in self.mapped_joints() {
            if owner.insert(name, "mapping").is_some() {
                return Err(RetargetError::ConflictingAssignment(name.to_string()));
            }
        }
        for (name, _) in self.arm_defaults.0.iter() {
            if owner.insert(name, "defaults").is_some() {
                return Err(RetargetError::ConflictingAssignment(name.to_string()));
            }
        }
        for name in owner.keys() {
            if !model.joint(name).is_some_and(|j| j.is_movable()) {
                return cfg_err(format!("joint {name:?} is not a movable joint of {}", model.name));
            }
        }
        if let Some(missing) = model.movable_joints().find(|j| !owner.contains_key(j.name.as_str())) {
            return Err(RetargetError::IncompleteConfig(missing.name.clone()));
        }
        for link in [&self.marker_links.wrist, &self.marker_links.middle, &self.marker_links.ring] {
            if model.link(link).is_none() {
                return Err(RobotError::UnknownLink(link.clone()).into());
            }
        }
        Ok(())
    }
}

/// Angle at `b` between `a - b` and `c - b`, in `[0, pi]`.
pub fn triplet_angle(a: crate::geometry::Vec3, b: crate::geometry::Vec3, c: crate::geometry::Vec3) -> Option<f64> {
    if a.distance(b) <= TRIPLET_EPS || c.distance(b) <= TRIPLET_EPS || a.distance(c) <= TRIPLET_EPS {
        return None;
    }
    (a - b).angle_to(c - b)
}

/// One clamped joint value per mapping entry.
pub fn finger_joint_angles(
    keypoints: &HandKeypoints,
    mapping: &[FingerMappingEntry],
    model: &RobotModel,
) -> Result<JointConfig, RetargetError> {
    let p = &keypoints.points_3d;
    let mut out = JointConfig::new();
    for e in mapping {
        let [a, b, c] = e.triplet;
        if a.max(b).max(c) >= NUM_KEYPOINTS {
            return Err(RetargetError::Config(format!("triplet {:?} out of range", e.triplet)));
        }
        let raw = triplet_angle(p[a], p[b], p[c])
            .ok_or_else(|| RetargetError::DegenerateTriplet { joint: e.joint.clone(), triplet: e.triplet })?;
        let lim = model
            .joint(&e.joint)
            .and_then(|j| j.limits)
            .ok_or_else(|| RetargetError::Config(format!("{:?} is not a movable joint", e.joint)))?;
        let value = lim.clamp(e.sign * (PI - raw) + e.offset);
        if out.insert(e.joint.clone(), value).is_some() {
            return Err(RetargetError::ConflictingAssignment(e.joint.clone()));
        }
    }
    Ok(out)
}

/// Normalized opening in `[0, 1]` from fingertip distance, and the
/// interpolated gripper joint values.
pub fn gripper_aperture(keypoints: &HandKeypoints, calib: &GripperCalibration) -> (f64, JointConfig) {
    let p = &keypoints.points_3d;
    let d = p[calib.tip_a].distance(p[calib.tip_b]);
    let aperture = ((d - calib.d_min) / (calib.d_max - calib.d_min)).clamp(0.0, 1.0);
    let joints = calib
        .joint_targets
        .iter()
        .map(|t| (t.joint.clone(), t.closed + (t.open - t.closed) * aperture))
        .collect();
    (aperture, joints)
}

/// Union of disjoint partial assignments and the defaults, clamped to limits.
pub fn assemble_config(partials: &[JointConfig], defaults: &ArmDefaults, model: &RobotModel) -> Result<JointConfig, RetargetError> {
    let mut out = JointConfig::new();
    for (name, v) in partials.iter().flat_map(|p| p.iter()).chain(defaults.0.iter()) {
        if out.insert(name, v).is_some() {
            return Err(RetargetError::ConflictingAssignment(name.to_string()));
        }
    }
    if let Some((name, _)) = out.iter().find(|(n, _)| !model.joint(n).is_some_and(|j| j.is_movable())) {
        return Err(RobotError::UnknownJoint(name.to_string()).into());
    }
    if let Some(missing) = model.movable_joints().find(|j| out.get(&j.name).is_none()) {
        return Err(RetargetError::IncompleteConfig(missing.name.clone()));
    }
    Ok(model.clamp_config(&out))
}

/// Placement of the robot root that brings the robot's marker frame onto the
/// hand frame: `T_hand * T_robot^-1`.
///
/// `keypoints` must be in the world frame. The robot frame is measured with
/// the root at identity.
pub fn anchor_robot(
    keypoints: &HandKeypoints,
    model: &RobotModel,
    config: &JointConfig,
    markers: &MarkerLinks,
) -> Result<(HomogeneousMatrix, HandFrame, RobotFrame), RetargetError> {
    let hand_frame = build_hand_frame(keypoints)?;
    let pts = marker_positions(model, config, &[&markers.wrist, &markers.middle, &markers.ring])?;
    let robot_frame = build_robot_frame(pts[0], pts[1], pts[2])?;
    let base_pose = frame_to_transform(&hand_frame).compose(&frame_to_transform(&robot_frame).inverse());
    Ok((base_pose, hand_frame, robot_frame))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetResult {
    pub config: JointConfig,
    /// World placement of the robot root.
    pub base_pose: HomogeneousMatrix,
    pub hand_frame: HandFrame,
    /// Robot marker frame with the root at identity.
    pub robot_frame: RobotFrame,
    /// Gripper mode only.
    pub aperture: Option<f64>,
}

/// Full retargeting of one record. Camera-frame keypoints are first moved to
/// the world frame through the record's extrinsics.
pub fn retarget_frame(record: &FrameRecord, model: &RobotModel, cfg: &RetargetConfig) -> Result<RetargetResult, RetargetError> {
    let keypoints = record.world_keypoints();
    retarget_keypoints(&keypoints, model, cfg)
}

/// [`retarget_frame`] on keypoints already in the world frame.
pub fn retarget_keypoints(keypoints: &HandKeypoints, model: &RobotModel, cfg: &RetargetConfig) -> Result<RetargetResult, RetargetError> {
    let (partial, aperture) = match cfg.mode {
        RetargetMode::Dexterous => (finger_joint_angles(keypoints, &cfg.finger_mapping, model)?, None),
        RetargetMode::Gripper => {
            let calib = cfg
                .gripper
                .as_ref()
                .ok_or_else(|| RetargetError::Config("gripper mode needs a gripper calibration".into()))?;
            let (a, joints) = gripper_aperture(keypoints, calib);
            (joints, Some(a))
        }
    };
    let config = assemble_config(&[partial], &cfg.arm_defaults, model)?;
    let (base_pose, hand_frame, robot_frame) = anchor_robot(keypoints, model, &config, &cfg.marker_links)?;
    Ok(RetargetResult { config, base_pose, hand_frame, robot_frame, aperture })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::{RotationMatrix, Vec3};
    use crate::hand::HandPreset;
    use crate::robot::{forward_kinematics, FkOptions, Limits};
    use crate::synth::synth_hand;

    fn hand_with(points: &[(usize, Vec3)]) -> HandKeypoints {
        let mut k = HandKeypoints::default();
        for (i, p) in points {
            k.points_3d[*i] = *p;
        }
        k
    }

    fn planar_with_limits(lower: f64, upper: f64) -> RobotModel {
        let xml = fixtures::PLANAR_2LINK_URDF
            .replacen("lower=\"-3.141592653589793\" upper=\"3.141592653589793\"", &format!("lower=\"{lower}\" upper=\"{upper}\""), 1);
        crate::robot::parse_robot_description(&xml).unwrap()
    }

    fn entry(joint: &str, triplet: [usize; 3]) -> FingerMappingEntry {
        FingerMappingEntry { joint: joint.into(), triplet, sign: 1.0, offset: 0.0 }
    }

    #[test]
    fn straight_and_right_angle() {
        let model = fixtures::planar_2link();
        let straight = hand_with(&[(5, Vec3::ZERO), (6, Vec3::X), (7, Vec3::new(2.0, 0.0, 0.0))]);
        let out = finger_joint_angles(&straight, &[entry("j1", [5, 6, 7])], &model).unwrap();
        assert!(out.get("j1").unwrap().abs() < 1e-9);
        let bent = hand_with(&[(5, Vec3::ZERO), (6, Vec3::X), (7, Vec3::new(1.0, 1.0, 0.0))]);
        let out = finger_joint_angles(&bent, &[entry("j1", [5, 6, 7])], &model).unwrap();
        assert!((out.get("j1").unwrap() - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn flexion_clamps_to_limits() {
        let model = planar_with_limits(0.0, 1.0);
        // raw angle 2.0 at b -> flexion pi - 2.0 = 1.1416 -> clamped to 1.0
        let c = Vec3::new(1.0 - 2f64.cos(), 2f64.sin(), 0.0);
        let k = hand_with(&[(5, Vec3::ZERO), (6, Vec3::X), (7, c)]);
        let raw = (Vec3::ZERO - Vec3::X).angle_to(c - Vec3::X).unwrap();
        assert!((raw - 2.0).abs() < 1e-12);
        let out = finger_joint_angles(&k, &[entry("j1", [5, 6, 7])], &model).unwrap();
        assert_eq!(out.get("j1"), Some(1.0));
    }

    #[test]
    fn sign_and_offset() {
        let model = fixtures::planar_2link();
        let bent = hand_with(&[(5, Vec3::ZERO), (6, Vec3::X), (7, Vec3::new(1.0, 1.0, 0.0))]);
        let e = FingerMappingEntry { joint: "j1".into(), triplet: [5, 6, 7], sign: -1.0, offset: 0.25 };
        let out = finger_joint_angles(&bent, &[e], &model).unwrap();
        assert!((out.get("j1").unwrap() - (0.25 - PI / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn coincident_triplet() {
        let model = fixtures::planar_2link();
        let k = hand_with(&[(5, Vec3::ZERO), (6, Vec3::ZERO), (7, Vec3::X)]);
        assert!(matches!(
            finger_joint_angles(&k, &[entry("j1", [5, 6, 7])], &model),
            Err(RetargetError::DegenerateTriplet { .. })
        ));
    }

    fn calib() -> GripperCalibration {
        GripperCalibration::with_targets(vec![JointTarget { joint: "finger".into(), closed: 0.0, open: 0.04 }])
    }

    fn tips(d: f64) -> HandKeypoints {
        hand_with(&[(4, Vec3::new(0.1, 0.2, 0.3)), (8, Vec3::new(0.1 + d, 0.2, 0.3))])
    }

    #[test]
    fn aperture_examples() {
        let (a, j) = gripper_aperture(&tips(0.06), &calib());
        assert!((a - 0.5).abs() < 1e-12);
        assert!((j.get("finger").unwrap() - 0.02).abs() < 1e-12);
        assert_eq!(gripper_aperture(&tips(0.01), &calib()).0, 0.0);
        assert_eq!(gripper_aperture(&tips(0.5), &calib()).0, 1.0);
    }

    #[test]
    fn assemble_examples() {
        let model = fixtures::planar_2link();
        let defaults = ArmDefaults([("j1", 0.1), ("j2", 0.2)].into_iter().collect());
        assert_eq!(assemble_config(&[], &defaults, &model).unwrap(), defaults.0);

        let p: JointConfig = [("j1", 0.3)].into_iter().collect();
        let only_j2 = ArmDefaults([("j2", 0.2)].into_iter().collect());
        assert!(matches!(
            assemble_config(&[p.clone(), p.clone()], &only_j2, &model),
            Err(RetargetError::ConflictingAssignment(n)) if n == "j1"
        ));
        assert!(matches!(
            assemble_config(&[p], &ArmDefaults::default(), &model),
            Err(RetargetError::IncompleteConfig(n)) if n == "j2"
        ));
        let wild: JointConfig = [("j1", 9.0)].into_iter().collect();
        let out = assemble_config(&[wild], &only_j2, &model).unwrap();
        assert_eq!(out.get("j1"), Some(PI));
    }

    #[test]
    fn anchor_identity_and_translation() {
        let model = fixtures::planar_2link();
        let cfg: JointConfig = [("j1", 0.0), ("j2", 0.0)].into_iter().collect();
        // straight arm: base_link, link2 and end_link are collinear
        let markers = MarkerLinks { wrist: "base_link".into(), middle: "link2".into(), ring: "end_link".into() };
        let hand = hand_with(&[(0, Vec3::ZERO), (9, Vec3::X), (13, Vec3::Y)]);
        assert!(matches!(
            anchor_robot(&hand, &model, &cfg, &markers),
            Err(RetargetError::Geometry(GeometryError::DegenerateRobotPose))
        ));
        let bent: JointConfig = [("j1", 0.0), ("j2", PI / 2.0)].into_iter().collect();
        // markers at (0,0,0), (1,0,0), (1,1,0)
        let (base, hf, rf) = anchor_robot(
            &hand_with(&[(0, Vec3::ZERO), (9, Vec3::X), (13, Vec3::new(1.0, 1.0, 0.0))]),
            &model,
            &bent,
            &markers,
        )
        .unwrap();
        assert_eq!(hf, rf);
        assert!(base.max_abs_diff(&HomogeneousMatrix::IDENTITY) < 1e-12);

        // hand at origin with identity axes, robot wrist at (1,0,0) with identity axes
        let hand = HandFrame { x_axis: Vec3::X, y_axis: Vec3::Y, z_axis: Vec3::Z, origin: Vec3::ZERO };
        let robot = RobotFrame { origin: Vec3::X, ..hand };
        let base = frame_to_transform(&hand).compose(&frame_to_transform(&robot).inverse());
        assert!(base.max_abs_diff(&HomogeneousMatrix::from_translation(Vec3::new(-1.0, 0.0, 0.0))) < 1e-15);
    }

    fn placed_wrist_error(model: &RobotModel, cfg: &RetargetConfig, preset: HandPreset, seed: u64) -> f64 {
        let rec = synth_hand(seed, preset);
        let res = retarget_frame(&rec, model, cfg).unwrap();
        let poses = forward_kinematics(model, &res.config, FkOptions::default()).unwrap();
        let placed = res.base_pose.compose(&poses[&cfg.marker_links.wrist]).translation;
        placed.distance(rec.world_keypoints().wrist())
    }

    #[test]
    fn placed_wrist_coincides() {
        let (dex, dcfg) = (fixtures::dexhand_4f(), fixtures::dexhand_retarget());
        let (grip, gcfg) = (fixtures::gripper_2f(), fixtures::gripper_retarget());
        assert!(placed_wrist_error(&dex, &dcfg, HandPreset::OpenPalm, 42) < 1e-9);
        assert!(placed_wrist_error(&grip, &gcfg, HandPreset::OpenPalm, 42) < 1e-9);
    }

    #[test]
    fn fixture_configs_validate() {
        fixtures::dexhand_retarget().validate(&fixtures::dexhand_4f()).unwrap();
        fixtures::gripper_retarget().validate(&fixtures::gripper_2f()).unwrap();
        let mut broken = fixtures::gripper_retarget();
        broken.arm_defaults.0 .0.remove("wrist_2");
        assert!(matches!(
            broken.validate(&fixtures::gripper_2f()),
            Err(RetargetError::IncompleteConfig(n)) if n == "wrist_2"
        ));
        let mut bad_triplet = fixtures::dexhand_retarget();
        bad_triplet.finger_mapping[0].triplet = [0, 5, 7];
        assert!(matches!(bad_triplet.validate(&fixtures::dexhand_4f()), Err(RetargetError::Config(_))));
    }

    #[test]
    fn gripper_presets() {
        let (grip, gcfg) = (fixtures::gripper_2f(), fixtures::gripper_retarget());
        let pinch = retarget_frame(&synth_hand(42, HandPreset::Pinch), &grip, &gcfg).unwrap();
        assert_eq!(pinch.aperture, Some(0.0));
        assert_eq!(pinch.config.get("finger_left_joint"), Some(0.0));
        let open = retarget_frame(&synth_hand(42, HandPreset::OpenPalm), &grip, &gcfg).unwrap();
        assert_eq!(open.aperture, Some(1.0));
        assert_eq!(open.config.get("finger_left_joint"), Some(0.04));
    }

    #[test]
    fn fist_saturates_dexhand() {
        let (dex, dcfg) = (fixtures::dexhand_4f(), fixtures::dexhand_retarget());
        let rec = synth_hand(42, HandPreset::Fist);
        let res = retarget_frame(&rec, &dex, &dcfg).unwrap();
        for e in &dcfg.finger_mapping {
            let Limits { upper, .. } = dex.joint(&e.joint).unwrap().limits.unwrap();
            assert_eq!(res.config.get(&e.joint), Some(upper), "{}", e.joint);
        }
        assert_eq!(res.aperture, None);
    }

    #[test]
    fn deterministic() {
        let (dex, dcfg) = (fixtures::dexhand_4f(), fixtures::dexhand_retarget());
        let rec = synth_hand(5, HandPreset::Random);
        assert_eq!(retarget_frame(&rec, &dex, &dcfg).unwrap(), retarget_frame(&rec, &dex, &dcfg).unwrap());
    }

    #[test]
    fn rigid_motion_leaves_angles() {
        let (dex, dcfg) = (fixtures::dexhand_4f(), fixtures::dexhand_retarget());
        let k = synth_hand(8, HandPreset::Random).world_keypoints();
        let r = RotationMatrix::from_rpy(0.4, -1.1, 2.0);
        let moved = k.map_points(|p| r.mul_vec(p) + Vec3::new(3.0, -2.0, 0.5));
        let a = finger_joint_angles(&k, &dcfg.finger_mapping, &dex).unwrap();
        let b = finger_joint_angles(&moved, &dcfg.finger_mapping, &dex).unwrap();
        for (name, v) in a.iter() {
            assert!((v - b.get(name).unwrap()).abs() < 1e-9);
        }
    }
}
