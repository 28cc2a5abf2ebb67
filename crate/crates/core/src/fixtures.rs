//! Bundled robot descriptions and retarget configurations.
//!
//! * `gripper_2f`: six-revolute arm with a two-finger parallel gripper.
//! * `dexhand_4f`: four-finger hand with 16 revolute joints.
//! * `planar_2link`: planar test arm with unit link lengths.
//! * `six_pairs`: embedding fixture for six image pairs, scores 23.7 to 32.6.

use crate::retarget::RetargetConfig;
use crate::robot::{parse_robot_description, RobotModel};

pub const GRIPPER_2F_URDF: &str = include_str!("../fixtures/gripper_2f.urdf");
pub const DEXHAND_4F_URDF: &str = include_str!("../fixtures/dexhand_4f.urdf");
pub const PLANAR_2LINK_URDF: &str = include_str!("../fixtures/planar_2link.urdf");
pub const GRIPPER_2F_RETARGET: &str = include_str!("../fixtures/gripper_2f.retarget.json");
pub const DEXHAND_4F_RETARGET: &str = include_str!("../fixtures/dexhand_4f.retarget.json");
pub const SIX_PAIRS_EMBEDDINGS: &str = include_str!("../fixtures/six_pairs.embeddings.json");

pub fn gripper_2f() -> RobotModel {
    parse_robot_description(GRIPPER_2F_URDF).expect("bundled gripper_2f.urdf parses")
}

pub fn dexhand_4f() -> RobotModel {
    parse_robot_description(DEXHAND_4F_URDF).expect("bundled dexhand_4f.urdf parses")
}

pub fn planar_2link() -> RobotModel {
    parse_robot_description(PLANAR_2LINK_URDF).expect("bundled planar_2link.urdf parses")
}

pub fn gripper_retarget() -> RetargetConfig {
    RetargetConfig::from_json(GRIPPER_2F_RETARGET).expect("bundled gripper retarget config parses")
}

pub fn dexhand_retarget() -> RetargetConfig {
    RetargetConfig::from_json(DEXHAND_4F_RETARGET).expect("bundled dexhand retarget config parses")
}

pub fn six_pairs() -> crate::metric::EmbeddingFixture {
    crate::metric::EmbeddingFixture::from_json(SIX_PAIRS_EMBEDDINGS).expect("bundled embedding fixture parses")
}

/// Looks up a bundled `(urdf, retarget json)` pair by embodiment name.
pub fn builtin(name: &str) -> Option<(&'static str, &'static str)> {
    match name {
        "gripper" | "gripper_2f" => Some((GRIPPER_2F_URDF, GRIPPER_2F_RETARGET)),
        "dexhand" | "dexhand_4f" => Some((DEXHAND_4F_URDF, DEXHAND_4F_RETARGET)),
        _ => None,
    }
}
