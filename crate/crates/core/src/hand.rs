//! Per-frame perception records: MANO keypoints, camera parameters and the
//! paths of the frame, hand mask and inpainted background.
//!
//! The on-disk form is one JSON document per frame (see [`parse_frame_record`]).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{build_hand_frame, CameraPose, RotationMatrix, Vec3};
use crate::validation::{IssueCode, ValidationReport};

pub const NUM_KEYPOINTS: usize = 21;

/// MANO keypoint indices.
pub mod mano {
    pub const WRIST: usize = 0;
    pub const THUMB: [usize; 4] = [1, 2, 3, 4];
    pub const INDEX: [usize; 4] = [5, 6, 7, 8];
    pub const MIDDLE: [usize; 4] = [9, 10, 11, 12];
    pub const RING: [usize; 4] = [13, 14, 15, 16];
    pub const PINKY: [usize; 4] = [17, 18, 19, 20];
    pub const THUMB_TIP: usize = 4;
    pub const INDEX_TIP: usize = 8;
    pub const FINGERS: [[usize; 4]; 5] = [THUMB, INDEX, MIDDLE, RING, PINKY];

    /// Keypoint indices `(a, b, c)` that are consecutive along one finger
    /// chain (the wrist counts as the root of every chain).
    pub fn is_consecutive_triplet(t: (usize, usize, usize)) -> bool {
        FINGERS.iter().any(|f| {
            let chain = [super::mano::WRIST, f[0], f[1], f[2], f[3]];
            chain.windows(3).any(|w| (w[0], w[1], w[2]) == t)
        })
    }
}

/// Default minimum detection confidence below which the pipeline skips a frame.
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("malformed frame record: {0}")]
    Parse(String),
    #[error("frame record schema violation: {0}")]
    Schema(String),
    #[error("record {0} is not a left hand")]
    NotLeftHand(String),
    #[error("unknown hand preset {0:?} (expected open_palm, pinch, fist or random)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    #[default]
    Right,
}

/// Which frame the 3D keypoints are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeypointFrame {
    #[default]
    Camera,
    World,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandKeypoints {
    pub points_3d: [Vec3; NUM_KEYPOINTS],
    pub points_2d: Option<[[f64; 2]; NUM_KEYPOINTS]>,
    pub frame: KeypointFrame,
    pub handedness: Handedness,
    pub confidence: f64,
}

impl Default for HandKeypoints {
    fn default() -> Self {
        HandKeypoints {
            points_3d: [Vec3::ZERO; NUM_KEYPOINTS],
            points_2d: None,
            frame: KeypointFrame::World,
            handedness: Handedness::Right,
            confidence: 1.0,
        }
    }
}

impl HandKeypoints {
    pub fn wrist(&self) -> Vec3 {
        self.points_3d[mano::WRIST]
    }

    /// Returns a copy with every 3D point mapped through `f`.
    pub fn map_points(&self, f: impl Fn(Vec3) -> Vec3) -> HandKeypoints {
        let mut out = self.clone();
        for p in out.points_3d.iter_mut() {
            *p = f(*p);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn check(&self) -> Result<(), RecordError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(RecordError::Schema("intrinsics positivity: fx and fy must be > 0".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RecordError::Schema("intrinsics positivity: width and height must be > 0".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(RecordError::Schema("intrinsics principal point outside the image".into()));
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: String,
    pub source_video: String,
    pub source_index: u64,
    pub image_path: String,
    pub mask_path: String,
    pub background_path: String,
    pub keypoints: HandKeypoints,
    pub intrinsics: CameraIntrinsics,
    /// Camera-to-world pose of the real camera.
    pub extrinsics: CameraPose,
    pub action_label: Option<String>,
}

impl FrameRecord {
    /// Keypoints expressed in the world frame, converting from the camera
    /// frame through the extrinsics when needed.
    pub fn world_keypoints(&self) -> HandKeypoints {
        match self.keypoints.frame {
            KeypointFrame::World => self.keypoints.clone(),
            KeypointFrame::Camera => {
                let mut k = self.keypoints.map_points(|p| self.extrinsics.camera_to_world(p));
                k.frame = KeypointFrame::World;
                k
            }
        }
    }
}

/// Whether unknown fields in a record document are an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    Strict,
    #[default]
    Lenient,
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsDoc {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
struct ExtrinsicsDoc {
    position: [f64; 3],
    rotation: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FrameRecordDoc {
    frame_id: String,
    source_video: String,
    source_index: u64,
    image: String,
    hand_mask: String,
    background: String,
    keypoints_3d: Vec<Vec<f64>>,
    #[serde(default)]
    keypoints_2d: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    keypoint_frame: KeypointFrame,
    handedness: Handedness,
    #[serde(default)]
    confidence: Option<f64>,
    intrinsics: IntrinsicsDoc,
    extrinsics: ExtrinsicsDoc,
    #[serde(default)]
    action_label: Option<String>,
}

const RECORD_FIELDS: [&str; 14] = [
    "frame_id",
    "source_video",
    "source_index",
    "image",
    "hand_mask",
    "background",
    "keypoints_3d",
    "keypoints_2d",
    "keypoint_frame",
    "handedness",
    "confidence",
    "intrinsics",
    "extrinsics",
    "action_label",
];

const REQUIRED_FIELDS: [&str; 10] = [
    "frame_id",
    "source_video",
    "source_index",
    "image",
    "hand_mask",
    "background",
    "keypoints_3d",
    "handedness",
    "intrinsics",
    "extrinsics",
];

/// Parses one frame record document.
pub fn parse_frame_record(bytes: &[u8], mode: ParseMode) -> Result<FrameRecord, RecordError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| RecordError::Parse(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| RecordError::Parse("top level is not a JSON object".into()))?;
    for field in REQUIRED_FIELDS {
        if !obj.contains_key(field) {
            return Err(RecordError::Schema(format!("missing required field `{field}`")));
        }
    }
    if mode == ParseMode::Strict {
        let known: BTreeSet<&str> = RECORD_FIELDS.into_iter().collect();
        if let Some(unknown) = obj.keys().find(|k| !known.contains(k.as_str())) {
            return Err(RecordError::Schema(format!("unknown field `{unknown}`")));
        }
    }
    let doc: FrameRecordDoc = serde_json::from_value(value).map_err(|e| RecordError::Schema(e.to_string()))?;
    record_from_doc(doc)
}

fn record_from_doc(doc: FrameRecordDoc) -> Result<FrameRecord, RecordError> {
    if doc.keypoints_3d.len() != NUM_KEYPOINTS || doc.keypoints_3d.iter().any(|p| p.len() != 3) {
        return Err(RecordError::Schema(format!(
            "keypoints arity: keypoints_3d must be {NUM_KEYPOINTS}x3"
        )));
    }
    let mut points_3d = [Vec3::ZERO; NUM_KEYPOINTS];
    for (dst, src) in points_3d.iter_mut().zip(&doc.keypoints_3d) {
        *dst = Vec3::new(src[0], src[1], src[2]);
    }
    let points_2d = match doc.keypoints_2d {
        None => None,
        Some(pts) => {
            if pts.len() != NUM_KEYPOINTS || pts.iter().any(|p| p.len() != 2) {
                return Err(RecordError::Schema(format!(
                    "keypoints arity: keypoints_2d must be {NUM_KEYPOINTS}x2"
                )));
            }
            let mut out = [[0.0; 2]; NUM_KEYPOINTS];
            for (dst, src) in out.iter_mut().zip(&pts) {
                *dst = [src[0], src[1]];
            }
            Some(out)
        }
    };
    let confidence = doc.confidence.unwrap_or(1.0);
    if !(0.0..=1.0).contains(&confidence) {
        return Err(RecordError::Schema("confidence must lie in [0, 1]".into()));
    }
    let intrinsics = CameraIntrinsics {
        fx: doc.intrinsics.fx,
        fy: doc.intrinsics.fy,
        cx: doc.intrinsics.cx,
        cy: doc.intrinsics.cy,
        width: doc.intrinsics.width,
        height: doc.intrinsics.height,
    };
    intrinsics.check()?;
    let rot: [f64; 9] = doc
        .extrinsics
        .rotation
        .try_into()
        .map_err(|_| RecordError::Schema("extrinsics rotation must have 9 entries".into()))?;
    let orientation = RotationMatrix::from_row_major(rot);
    if !orientation.is_rotation(1e-6) {
        return Err(RecordError::Schema("extrinsics rotation is not orthonormal".into()));
    }
    let position = Vec3::from_array(doc.extrinsics.position);
    if !position.is_finite() {
        return Err(RecordError::Schema("extrinsics position must be finite".into()));
    }
    Ok(FrameRecord {
        frame_id: doc.frame_id,
        source_video: doc.source_video,
        source_index: doc.source_index,
        image_path: doc.image,
        mask_path: doc.hand_mask,
        background_path: doc.background,
        keypoints: HandKeypoints {
            points_3d,
            points_2d,
            frame: doc.keypoint_frame,
            handedness: doc.handedness,
            confidence,
        },
        intrinsics,
        extrinsics: CameraPose::new(position, orientation),
        action_label: doc.action_label,
    })
}

/// Serializes a record in the interchange format, fields in schema order.
pub fn serialize_frame_record(record: &FrameRecord) -> Vec<u8> {
    let k = &record.keypoints;
    let doc = FrameRecordDoc {
        frame_id: record.frame_id.clone(),
        source_video: record.source_video.clone(),
        source_index: record.source_index,
        image: record.image_path.clone(),
        hand_mask: record.mask_path.clone(),
        background: record.background_path.clone(),
        keypoints_3d: k.points_3d.iter().map(|p| p.to_array().to_vec()).collect(),
        keypoints_2d: k.points_2d.map(|pts| pts.iter().map(|p| p.to_vec()).collect()),
        keypoint_frame: k.frame,
        handedness: k.handedness,
        confidence: Some(k.confidence),
        intrinsics: IntrinsicsDoc {
            fx: record.intrinsics.fx,
            fy: record.intrinsics.fy,
            cx: record.intrinsics.cx,
            cy: record.intrinsics.cy,
            width: record.intrinsics.width,
            height: record.intrinsics.height,
        },
        extrinsics: ExtrinsicsDoc {
            position: record.extrinsics.position.to_array(),
            rotation: record.extrinsics.orientation.to_row_major().to_vec(),
        },
        action_label: record.action_label.clone(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("record documents always serialize");
    out.push(b'\n');
    out
}

/// Pixel dimensions of the files a record points at, when known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameImageDims {
    pub image: (u32, u32),
    pub mask: (u32, u32),
    pub background: (u32, u32),
}

/// Pure checks on a parsed record; nothing is read from disk.
pub fn validate_frame(record: &FrameRecord) -> ValidationReport {
    validate_frame_with(record, None)
}

/// [`validate_frame`] plus size checks against the referenced images.
pub fn validate_frame_with(record: &FrameRecord, dims: Option<&FrameImageDims>) -> ValidationReport {
    let mut report = ValidationReport::new();
    let k = &record.keypoints;
    if build_hand_frame(k).is_err() {
        report.push(
            IssueCode::DegenerateHand,
            "wrist, middle MCP and ring MCP keypoints are collinear or coincident",
        );
    }
    if let Some(pts) = &k.points_2d {
        for (i, [u, v]) in pts.iter().enumerate() {
            if !record.intrinsics.contains(*u, *v) {
                report.push(
                    IssueCode::KeypointOutOfImage,
                    format!("2D keypoint {i} at ({u}, {v}) lies outside the image"),
                );
            }
        }
    }
    if let Some(d) = dims {
        let intr = (record.intrinsics.width, record.intrinsics.height);
        if d.mask != d.image {
            report.push(
                IssueCode::MaskSizeMismatch,
                format!("mask is {}x{} but image is {}x{}", d.mask.0, d.mask.1, d.image.0, d.image.1),
            );
        }
        if d.image != intr || d.background != intr {
            report.push(
                IssueCode::ImageSizeMismatch,
                format!(
                    "image {}x{} / background {}x{} disagree with intrinsics {}x{}",
                    d.image.0, d.image.1, d.background.0, d.background.1, intr.0, intr.1
                ),
            );
        }
    }
    report
}

/// Mirrors a left hand into a right hand: 3D x negated, 2D u reflected about
/// the image center (`u' = width - u`, continuous pixel coordinates).
pub fn mirror_left_hand(record: &FrameRecord) -> Result<FrameRecord, RecordError> {
    if record.keypoints.handedness != Handedness::Left {
        return Err(RecordError::NotLeftHand(record.frame_id.clone()));
    }
    Ok(mirror_unchecked(record, Handedness::Right))
}

pub(crate) fn mirror_unchecked(record: &FrameRecord, handedness: Handedness) -> FrameRecord {
    let mut out = record.clone();
    let k = &mut out.keypoints;
    for p in k.points_3d.iter_mut() {
        p.x = -p.x;
    }
    let w = record.intrinsics.width as f64;
    if let Some(pts) = k.points_2d.as_mut() {
        for p in pts.iter_mut() {
            p[0] = w - p[0];
        }
    }
    k.handedness = handedness;
    out
}

/// Named synthetic hand poses. See [`crate::synth::synth_hand`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HandPreset {
    OpenPalm,
    Pinch,
    Fist,
    Random,
}

impl HandPreset {
    pub const ALL: [HandPreset; 4] = [HandPreset::OpenPalm, HandPreset::Pinch, HandPreset::Fist, HandPreset::Random];

    pub fn name(self) -> &'static str {
        match self {
            HandPreset::OpenPalm => "open_palm",
            HandPreset::Pinch => "pinch",
            HandPreset::Fist => "fist",
            HandPreset::Random => "random",
        }
    }
}

impl fmt::Display for HandPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for HandPreset {
    type Err = RecordError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HandPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| RecordError::UnknownPreset(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_hand;

    fn minimal_doc() -> Value {
        let kp: Vec<Vec<f64>> = (0..21)
            .map(|i| {
                let i = i as f64;
                vec![0.01 * i, 0.002 * i * i, 0.5]
            })
            .collect();
        serde_json::json!({
            "frame_id": "v0_000001",
            "source_video": "v0",
            "source_index": 1,
            "image": "images/a.png",
            "hand_mask": "masks/a.png",
            "background": "backgrounds/a.png",
            "keypoints_3d": kp,
            "keypoint_frame": "camera",
            "handedness": "right",
            "intrinsics": {"fx": 500.0, "fy": 500.0, "cx": 320.0, "cy": 240.0, "width": 640, "height": 480},
            "extrinsics": {"position": [0.0, 0.0, 0.0], "rotation": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]},
        })
    }

    fn parse_value(v: &Value, mode: ParseMode) -> Result<FrameRecord, RecordError> {
        parse_frame_record(&serde_json::to_vec(v).unwrap(), mode)
    }

    #[test]
    fn minimal_record_defaults_confidence() {
        let r = parse_value(&minimal_doc(), ParseMode::Strict).unwrap();
        assert_eq!(r.keypoints.confidence, 1.0);
        assert_eq!(r.keypoints.points_2d, None);
        assert_eq!(r.action_label, None);
        assert_eq!(r.mask_path, "masks/a.png");
    }

    #[test]
    fn wrong_keypoint_arity() {
        let mut v = minimal_doc();
        v["keypoints_3d"].as_array_mut().unwrap().pop();
        match parse_value(&v, ParseMode::Lenient) {
            Err(RecordError::Schema(m)) => assert!(m.contains("keypoints arity"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
        let mut v = minimal_doc();
        v["keypoints_3d"][3] = serde_json::json!([1.0, 2.0]);
        assert!(matches!(parse_value(&v, ParseMode::Lenient), Err(RecordError::Schema(_))));
    }

    #[test]
    fn negative_focal_length() {
        let mut v = minimal_doc();
        v["intrinsics"]["fx"] = serde_json::json!(-1.0);
        match parse_value(&v, ParseMode::Lenient) {
            Err(RecordError::Schema(m)) => assert!(m.contains("intrinsics positivity"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_missing() {
        assert!(matches!(parse_frame_record(b"{not json", ParseMode::Lenient), Err(RecordError::Parse(_))));
        let mut v = minimal_doc();
        v.as_object_mut().unwrap().remove("hand_mask");
        assert!(matches!(parse_value(&v, ParseMode::Lenient), Err(RecordError::Schema(_))));
    }

    #[test]
    fn unknown_fields_strict_vs_lenient() {
        let mut v = minimal_doc();
        v["extra"] = serde_json::json!(1);
        assert!(matches!(parse_value(&v, ParseMode::Strict), Err(RecordError::Schema(_))));
        assert!(parse_value(&v, ParseMode::Lenient).is_ok());
    }

    #[test]
    fn healthy_synthetic_record_validates() {
        for preset in HandPreset::ALL {
            let r = synth_hand(7, preset);
            let report = validate_frame(&r);
            assert!(report.ok, "{preset}: {report}");
        }
    }

    #[test]
    fn collinear_keypoints_flagged() {
        let mut r = synth_hand(1, HandPreset::OpenPalm);
        let w = r.keypoints.points_3d[0];
        r.keypoints.points_3d[9] = w + Vec3::new(0.1, 0.0, 0.0);
        r.keypoints.points_3d[13] = w + Vec3::new(0.05, 0.0, 0.0);
        assert!(validate_frame(&r).has(IssueCode::DegenerateHand));
    }

    #[test]
    fn out_of_image_wrist_flagged() {
        let mut r = synth_hand(1, HandPreset::OpenPalm);
        r.keypoints.points_2d.as_mut().unwrap()[0] = [-5.0, 10.0];
        let report = validate_frame(&r);
        assert!(!report.ok);
        assert!(report.has(IssueCode::KeypointOutOfImage));
    }

    #[test]
    fn mask_size_mismatch_flagged() {
        let r = synth_hand(1, HandPreset::OpenPalm);
        let (w, h) = (r.intrinsics.width, r.intrinsics.height);
        let dims = FrameImageDims { image: (w, h), mask: (w, h - 1), background: (w, h) };
        assert!(validate_frame_with(&r, Some(&dims)).has(IssueCode::MaskSizeMismatch));
        let dims = FrameImageDims { image: (w, h), mask: (w, h), background: (w, h) };
        assert!(validate_frame_with(&r, Some(&dims)).ok);
    }

    #[test]
    fn mirror_examples() {
        let mut r = synth_hand(3, HandPreset::OpenPalm);
        r.keypoints.handedness = Handedness::Left;
        r.intrinsics.width = 640;
        r.intrinsics.cx = 320.0;
        r.keypoints.points_3d[0] = Vec3::new(0.1, 0.0, 0.5);
        r.keypoints.points_2d.as_mut().unwrap()[0] = [100.0, 50.0];
        let m = mirror_left_hand(&r).unwrap();
        assert_eq!(m.keypoints.points_3d[0], Vec3::new(-0.1, 0.0, 0.5));
        assert_eq!(m.keypoints.points_2d.unwrap()[0], [540.0, 50.0]);
        assert_eq!(m.keypoints.handedness, Handedness::Right);
        assert!(matches!(mirror_left_hand(&m), Err(RecordError::NotLeftHand(_))));
    }

    #[test]
    fn mirror_twice_restores_coordinates() {
        let mut r = synth_hand(11, HandPreset::Random);
        r.keypoints.handedness = Handedness::Left;
        let once = mirror_left_hand(&r).unwrap();
        let mut again_in = once.clone();
        again_in.keypoints.handedness = Handedness::Left;
        let twice = mirror_left_hand(&again_in).unwrap();
        for (a, b) in twice.keypoints.points_3d.iter().zip(&r.keypoints.points_3d) {
            assert!(a.max_abs_diff(*b) < 1e-12);
        }
        for (a, b) in twice.keypoints.points_2d.unwrap().iter().zip(&r.keypoints.points_2d.unwrap()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && a[1] == b[1]);
        }
        assert!(validate_frame(&once).ok);
    }

    #[test]
    fn camera_keypoints_canonicalize_to_world() {
        let r = synth_hand(5, HandPreset::Pinch);
        assert_eq!(r.keypoints.frame, KeypointFrame::Camera);
        let w = r.world_keypoints();
        assert_eq!(w.frame, KeypointFrame::World);
        for (pw, pc) in w.points_3d.iter().zip(&r.keypoints.points_3d) {
            let back = r.extrinsics.world_to_camera(*pw);
            assert!(back.max_abs_diff(*pc) < 1e-12);
        }
    }

    #[test]
    fn consecutive_triplets() {
        assert!(mano::is_consecutive_triplet((0, 5, 6)));
        assert!(mano::is_consecutive_triplet((2, 3, 4)));
        assert!(!mano::is_consecutive_triplet((4, 5, 6)));
        assert!(!mano::is_consecutive_triplet((5, 7, 8)));
    }

    #[test]
    fn preset_names() {
        assert_eq!("pinch".parse::<HandPreset>().unwrap(), HandPreset::Pinch);
        assert!(matches!("claw".parse::<HandPreset>(), Err(RecordError::UnknownPreset(_))));
    }
}
