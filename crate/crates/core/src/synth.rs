//! Deterministic synthetic hands, used as ML-free fixtures for the whole
//! pipeline.
//!
//! A hand is built in a local frame (x along the middle finger, y toward the
//! thumb, z out of the back of the hand), then posed in front of the camera.
//! Finger joints bend about a single axis per finger, so the angle between
//! consecutive bones equals the preset's flexion value exactly.
//!
//! Preset contracts: `open_palm` keeps thumb tip and index tip at least
//! 0.08 m apart, `pinch` at most 0.02 m.

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{CameraPose, RotationMatrix, Vec3};
use crate::hand::{CameraIntrinsics, FrameRecord, HandKeypoints, HandPreset, Handedness, KeypointFrame, NUM_KEYPOINTS};

pub const DEFAULT_SIZE: u32 = 256;

/// Flexion (radians) per joint for the four long fingers, MCP/PIP/DIP.
#[derive(Debug, Clone, Copy)]
struct FingerPose {
    flex: [[f64; 3]; 4],
    thumb_flex: [f64; 3],
}

/// MCP positions (m) in the local hand frame for index, middle, ring, pinky.
const MCP: [[f64; 3]; 4] = [
    [0.090, 0.026, 0.0],
    [0.095, 0.0, 0.0],
    [0.088, -0.020, 0.0],
    [0.078, -0.038, 0.0],
];
/// Proximal, middle, distal bone lengths (m).
const BONES: [[f64; 3]; 4] = [
    [0.045, 0.027, 0.022],
    [0.050, 0.031, 0.024],
    [0.047, 0.030, 0.023],
    [0.036, 0.022, 0.020],
];
const THUMB_BASE: [f64; 3] = [0.024, 0.024, -0.008];
const THUMB_BONES: [f64; 3] = [0.040, 0.032, 0.026];

fn preset_pose(preset: HandPreset, rng: &mut ChaCha8Rng) -> FingerPose {
    match preset {
        HandPreset::OpenPalm => FingerPose { flex: [[0.0; 3]; 4], thumb_flex: [0.10, 0.10, 0.05] },
        HandPreset::Pinch => FingerPose {
            flex: [[0.50, 0.70, 0.40], [0.30, 0.40, 0.30], [0.35, 0.45, 0.30], [0.40, 0.50, 0.30]],
            thumb_flex: [0.0; 3],
        },
        HandPreset::Fist => FingerPose { flex: [[1.60, 1.90, 1.40]; 4], thumb_flex: [0.60, 1.10, 1.10] },
        HandPreset::Random => {
            let mut flex = [[0.0; 3]; 4];
            for f in flex.iter_mut() {
                *f = [rng.gen_range(0.0..1.4), rng.gen_range(0.0..1.6), rng.gen_range(0.0..1.1)];
            }
            FingerPose {
                flex,
                thumb_flex: [rng.gen_range(0.0..0.6), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
            }
        }
    }
}

/// Lays out a bent chain starting at `base` with rest direction `dir`,
/// bending toward the palm (-z local) about `z x dir`.
fn chain(base: Vec3, dir: Vec3, bones: [f64; 3], flex: [f64; 3], first_bend: f64) -> [Vec3; 3] {
    let axis = Vec3::Z.cross(dir).normalized().expect("finger direction is not vertical");
    let mut out = [Vec3::ZERO; 3];
    let mut p = base;
    let mut angle = first_bend;
    for i in 0..3 {
        angle += flex[i];
        let d = RotationMatrix::from_axis_angle(axis, angle).mul_vec(dir);
        p = p + d * bones[i];
        out[i] = p;
    }
    out
}

/// Local-frame keypoints for a pose.
fn local_keypoints(pose: &FingerPose, preset: HandPreset, scale: f64) -> [Vec3; NUM_KEYPOINTS] {
    let mut k = [Vec3::ZERO; NUM_KEYPOINTS];
    for f in 0..4 {
        let mcp = Vec3::from_array(MCP[f]) * scale;
        let dir = mcp.normalized().unwrap();
        let bones = BONES[f].map(|b| b * scale);
        // segments: MCP->PIP bends by flex[0], PIP->DIP by flex[1], DIP->tip by flex[2]
        let pts = chain(mcp, dir, bones, pose.flex[f], 0.0);
        let base = 5 + 4 * f;
        k[base] = mcp;
        k[base + 1] = pts[0];
        k[base + 2] = pts[1];
        k[base + 3] = pts[2];
    }
    let cmc = Vec3::from_array(THUMB_BASE) * scale;
    k[1] = cmc;
    if preset == HandPreset::Pinch {
        // thumb tip meets the index tip
        let tip = k[8] + Vec3::new(0.004, 0.005, -0.006) * scale;
        let span = tip - cmc;
        let bulge = Vec3::new(0.0, 0.6, -0.8) * (0.012 * scale);
        k[2] = cmc + span * 0.42 + bulge;
        k[3] = cmc + span * 0.75 + bulge * 0.6;
        k[4] = tip;
    } else {
        let dir = Vec3::new(0.55, 1.0, -0.15).normalized().unwrap();
        let bones = THUMB_BONES.map(|b| b * scale);
        let flex = [0.0, pose.thumb_flex[1], pose.thumb_flex[2]];
        let pts = chain(cmc, dir, bones, flex, pose.thumb_flex[0]);
        k[2] = pts[0];
        k[3] = pts[1];
        k[4] = pts[2];
    }
    k
}

pub fn synth_intrinsics(width: u32, height: u32) -> CameraIntrinsics {
    let s = width.min(height) as f64 / DEFAULT_SIZE as f64;
    CameraIntrinsics {
        fx: 220.0 * s,
        fy: 220.0 * s,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
    }
}

/// Synthetic 256x256 frame record; see [`synth_hand_sized`].
pub fn synth_hand(seed: u64, preset: HandPreset) -> FrameRecord {
    synth_hand_sized(seed, preset, DEFAULT_SIZE, DEFAULT_SIZE)
}

/// Deterministic synthetic right hand in camera-frame coordinates, with
/// projected 2D keypoints. Same `(seed, preset, size)` gives an identical record.
pub fn synth_hand_sized(seed: u64, preset: HandPreset, width: u32, height: u32) -> FrameRecord {
    let tag = match preset {
        HandPreset::OpenPalm => 0x01,
        HandPreset::Pinch => 0x02,
        HandPreset::Fist => 0x03,
        HandPreset::Random => 0x04,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag);
    let pose = preset_pose(preset, &mut rng);
    let scale = rng.gen_range(0.92..1.08);
    let local = local_keypoints(&pose, preset, scale);

    // fingers point up the image, back of the hand faces the camera
    let base = RotationMatrix::from_columns(Vec3::new(0.0, -1.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, -1.0));
    let jitter = RotationMatrix::from_rpy(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
    let rot = jitter.mul(&base);
    let wrist = Vec3::new(rng.gen_range(-0.03..0.03), rng.gen_range(0.08..0.11), rng.gen_range(0.42..0.50));

    let mut points_3d = [Vec3::ZERO; NUM_KEYPOINTS];
    for (dst, p) in points_3d.iter_mut().zip(local.iter()) {
        *dst = rot.mul_vec(*p) + wrist;
    }
    let intrinsics = synth_intrinsics(width, height);
    let mut points_2d = [[0.0; 2]; NUM_KEYPOINTS];
    for (dst, p) in points_2d.iter_mut().zip(points_3d.iter()) {
        *dst = [intrinsics.fx * p.x / p.z + intrinsics.cx, intrinsics.fy * p.y / p.z + intrinsics.cy];
    }

    let extrinsics = CameraPose::new(
        Vec3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(1.0..1.4)),
        RotationMatrix::from_rpy(
            std::f64::consts::PI + rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        ),
    );

    let stem = format!("synth_{seed}_{preset}");
    FrameRecord {
        frame_id: stem.clone(),
        source_video: format!("synth_{preset}"),
        source_index: seed,
        image_path: format!("images/{stem}.png"),
        mask_path: format!("masks/{stem}.png"),
        background_path: format!("backgrounds/{stem}.png"),
        keypoints: HandKeypoints {
            points_3d,
            points_2d: Some(points_2d),
            frame: KeypointFrame::Camera,
            handedness: Handedness::Right,
            confidence: 0.95,
        },
        intrinsics,
        extrinsics,
        action_label: Some(
            match preset {
                HandPreset::OpenPalm => "waving a hand",
                HandPreset::Pinch => "picking up a small object",
                HandPreset::Fist => "holding a handle",
                HandPreset::Random => "manipulating an object",
            }
            .to_string(),
        ),
    }
}

/// Frame image, hand mask and the hand-free background for a synthetic record.
#[derive(Debug, Clone)]
pub struct SynthImages {
    pub image: RgbImage,
    pub mask: GrayImage,
    pub background: RgbImage,
}

/// Bone pairs drawn as capsules.
const BONE_PAIRS: [(usize, usize); 20] = [
    (0, 1), (1, 2), (2, 3), (3, 4),
    (0, 5), (5, 6), (6, 7), (7, 8),
    (0, 9), (9, 10), (10, 11), (11, 12),
    (0, 13), (13, 14), (14, 15), (15, 16),
    (0, 17), (17, 18), (18, 19), (19, 20),
];

fn background(width: u32, height: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB6C0_FFEE);
    let base = [rng.gen_range(90.0..170.0), rng.gen_range(90.0..170.0), rng.gen_range(90.0..170.0)];
    let stripe = rng.gen_range(12.0..40.0);
    let tilt: f64 = rng.gen_range(-1.0..1.0);
    RgbImage::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let band = if (((xf + tilt * yf) / stripe).floor() as i64).rem_euclid(2) == 0 { 12.0 } else { -12.0 };
        let grad = 40.0 * yf / height as f64;
        let px = base.map(|c| (c + band + grad).clamp(0.0, 255.0) as u8);
        Rgb(px)
    })
}

fn draw_capsule(mask: &mut GrayImage, a: [f64; 2], b: [f64; 2], radius: f64) {
    let (w, h) = (mask.width() as f64, mask.height() as f64);
    let x0 = (a[0].min(b[0]) - radius).floor().max(0.0);
    let x1 = (a[0].max(b[0]) + radius).ceil().min(w - 1.0);
    let y0 = (a[1].min(b[1]) - radius).floor().max(0.0);
    let y1 = (a[1].max(b[1]) + radius).ceil().min(h - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    for y in y0 as u32..=y1 as u32 {
        for x in x0 as u32..=x1 as u32 {
            let p = [x as f64 + 0.5 - a[0], y as f64 + 0.5 - a[1]];
            let t = if len2 > 0.0 { ((p[0] * d[0] + p[1] * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let q = [p[0] - t * d[0], p[1] - t * d[1]];
            if q[0] * q[0] + q[1] * q[1] <= radius * radius {
                mask.put_pixel(x, y, Luma([255]));
            }
        }
    }
}

/// Renders a flat cartoon hand-and-forearm over a striped background.
pub fn synth_images(record: &FrameRecord) -> SynthImages {
    let intr = &record.intrinsics;
    let (w, h) = (intr.width, intr.height);
    let bg = background(w, h, record.source_index ^ (record.frame_id.len() as u64) << 32);
    let mut mask = GrayImage::new(w, h);
    let k = &record.keypoints;
    let pts2 = k.points_2d.unwrap_or_else(|| {
        let mut out = [[0.0; 2]; NUM_KEYPOINTS];
        for (dst, p) in out.iter_mut().zip(k.points_3d.iter()) {
            let pc = match k.frame {
                KeypointFrame::Camera => *p,
                KeypointFrame::World => record.extrinsics.world_to_camera(*p),
            };
            *dst = [intr.fx * pc.x / pc.z + intr.cx, intr.fy * pc.y / pc.z + intr.cy];
        }
        out
    });
    let depth = match k.frame {
        KeypointFrame::Camera => k.points_3d[0].z,
        KeypointFrame::World => record.extrinsics.world_to_camera(k.points_3d[0]).z,
    }
    .max(0.05);
    let px_per_m = intr.fx / depth;
    for (a, b) in BONE_PAIRS {
        draw_capsule(&mut mask, pts2[a], pts2[b], 0.009 * px_per_m);
    }
    // palm fill and forearm running out of the bottom edge
    for (a, b) in [(5, 17), (1, 17), (2, 13), (5, 13), (1, 9)] {
        draw_capsule(&mut mask, pts2[a], pts2[b], 0.014 * px_per_m);
    }
    let wrist = pts2[0];
    let away = [wrist[0] - pts2[9][0], wrist[1] - pts2[9][1]];
    let n = (away[0] * away[0] + away[1] * away[1]).sqrt().max(1e-9);
    let far = [wrist[0] + away[0] / n * 2.0 * h as f64, wrist[1] + away[1] / n * 2.0 * h as f64];
    draw_capsule(&mut mask, wrist, far, 0.025 * px_per_m);

    let mut image = bg.clone();
    for (x, y, m) in mask.enumerate_pixels() {
        if m[0] == 255 {
            let shade = 0.85 + 0.15 * ((x + 2 * y) % 7) as f64 / 6.0;
            let skin = [224.0, 172.0, 140.0].map(|c: f64| (c * shade) as u8);
            image.put_pixel(x, y, Rgb(skin));
        }
    }
    SynthImages { image, mask, background: bg }
}
