//! Turns egocentric hand frames into robot frames.
//!
//! A frame record (21 hand keypoints plus camera parameters) is retargeted to
//! a robot joint configuration, the robot is placed on the hand and rendered
//! from the original camera, and the rendering is pasted over the inpainted
//! background. [`pipeline`] runs this over whole datasets; [`metric`] scores
//! the result from precomputed image and text embeddings.
//!
//! ```
//! use ego2robot::hand::HandPreset;
//! use ego2robot::pipeline::{render_robot, PipelineConfig, PipelineEnv};
//! use ego2robot::render::LightSettings;
//! use ego2robot::synth::synth_hand;
//!
//! let env = PipelineEnv::new(PipelineConfig::default()).unwrap();
//! let record = synth_hand(2, HandPreset::Pinch);
//! let robot = render_robot(&record, &env.embodiments["gripper"], &LightSettings::default()).unwrap();
//! assert!(robot.overlay.mask_count() > 0);
//! assert!(robot.aperture.unwrap() < 0.2);
//! ```
//!
//! The guide in `book/` walks through each stage.

pub mod composite;
pub mod dataset;
pub mod fixtures;
pub mod geometry;
pub mod hand;
pub mod metric;
pub mod pipeline;
pub mod render;
pub mod retarget;
pub mod robot;
pub mod synth;
pub mod validation;
