//! Batch augmentation: input manifest in, dataset layout out.
//!
//! Per frame: keypoints to the camera frame, mirror left hands, retarget,
//! place the robot on the wrist frame, remap the camera into the robot's
//! frame, rasterize, align the wrist in pixel space and paste over the
//! inpainted background.
//!
//! Frames run on a worker pool; a single writer journals finished rows to
//! `manifest.partial.jsonl`. The final `manifest.jsonl` is sorted, and every
//! random choice is derived from `(seed, frame_id)`, so the output bytes do
//! not depend on the worker count or scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composite::{alignment_offset, cutmix, load_sprites, paste, shifted_mask, BBox, PixelOffset, Sprite};
use crate::dataset::{
    self, assign_embodiment, encode_png, hash64, parse_manifest, stem_for, verify_row, write_record, AugmentMethod,
    AugmentedRecord, DatasetError, FrameArtifacts, LayoutPaths, ManifestRow, RowStatus, WriteMode,
};
use crate::fixtures;
use crate::geometry::{remap_camera, CameraPose, GeometryError, HomogeneousMatrix, Vec3};
use crate::hand::{
    mirror_unchecked, parse_frame_record, validate_frame_with, FrameImageDims, FrameRecord, Handedness, KeypointFrame,
    ParseMode, DEFAULT_MIN_CONFIDENCE,
};
use crate::render::{project, randomize_light, rasterize, LightSettings, MeshLibrary, Overlay, RobotScene};
use crate::retarget::{retarget_keypoints, RetargetConfig, RetargetError};
use crate::robot::{parse_robot_description, JointConfig, RobotModel};
use crate::validation::IssueCode;

pub const JOURNAL_FILE: &str = "manifest.partial.jsonl";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";
pub const BUILTIN_PREFIX: &str = "builtin:";
/// Bounding-box margin around the 2D keypoints for CutMix, as a fraction of
/// the box size.
pub const CUTMIX_MARGIN: f64 = 0.15;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("output {0} already holds a run; pass resume to continue it")]
    OutputExists(PathBuf),
    #[error("input manifest lists frame {0:?} more than once")]
    DuplicateInput(String),
    #[error("run interrupted after {0} frames")]
    Interrupted(usize),
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightingMode {
    #[default]
    Fixed,
    Random,
}

impl std::str::FromStr for LightingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixed" => Ok(LightingMode::Fixed),
            "random" => Ok(LightingMode::Random),
            _ => Err(format!("lighting must be fixed or random, got {s:?}")),
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Robot description and retarget config of one embodiment. Either may be a
/// path (relative to the config file) or `builtin:NAME`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbodimentSpec {
    pub robot: String,
    pub retarget: String,
    #[serde(default = "one")]
    pub weight: f64,
}

impl EmbodimentSpec {
    pub fn builtin(name: &str, weight: f64) -> EmbodimentSpec {
        EmbodimentSpec { robot: format!("{BUILTIN_PREFIX}{name}"), retarget: format!("{BUILTIN_PREFIX}{name}"), weight }
    }
}

fn default_workers() -> usize {
    1
}
fn default_min_confidence() -> f64 {
    DEFAULT_MIN_CONFIDENCE
}
fn yes() -> bool {
    true
}
fn default_embodiments() -> BTreeMap<String, EmbodimentSpec> {
    BTreeMap::from([("gripper".to_string(), EmbodimentSpec::builtin("gripper", 1.0))])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_embodiments")]
    pub embodiments: BTreeMap<String, EmbodimentSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lighting: LightingMode,
    #[serde(default)]
    pub cutmix: bool,
    #[serde(default)]
    pub sprite_dir: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub strict: bool,
    #[serde(default = "default_min_confidence")]
    pub min_confidence: f64,
    /// Apply the wrist pixel alignment before pasting.
    #[serde(default = "yes")]
    pub alignment: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn resolve_path(base: &Path, p: &str) -> String {
    if p.starts_with(BUILTIN_PREFIX) || Path::new(p).is_absolute() {
        p.to_string()
    } else {
        base.join(p).to_string_lossy().into_owned()
    }
}

impl PipelineConfig {
    /// Loads a config file; relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for spec in cfg.embodiments.values_mut() {
            spec.robot = resolve_path(base, &spec.robot);
            spec.retarget = resolve_path(base, &spec.retarget);
        }
        if let Some(d) = &cfg.sprite_dir {
            cfg.sprite_dir = Some(base.join(d));
        }
        if let Some(o) = &cfg.output {
            cfg.output = Some(base.join(o));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.embodiments.is_empty() {
            return err("at least one embodiment is required");
        }
        if self.workers == 0 {
            return err("workers must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return err("min_confidence must lie in [0, 1]");
        }
        if self.embodiments.values().any(|e| !(e.weight.is_finite() && e.weight > 0.0)) {
            return err("embodiment weights must be positive");
        }
        if self.cutmix && self.sprite_dir.is_none() {
            return err("cutmix needs sprite_dir");
        }
        Ok(())
    }

    /// Mix as `(name, weight)` in name order.
    pub fn mix(&self) -> Vec<(String, f64)> {
        self.embodiments.iter().map(|(k, v)| (k.clone(), v.weight)).collect()
    }
}

/// A loaded embodiment, ready for rendering.
#[derive(Debug, Clone)]
pub struct Embodiment {
    pub name: String,
    pub model: RobotModel,
    pub retarget: RetargetConfig,
    pub scene: RobotScene,
}

impl Embodiment {
    pub fn load(name: &str, spec: &EmbodimentSpec) -> Result<Embodiment, PipelineError> {
        let cfg_err = |m: String| PipelineError::Config(format!("embodiment {name:?}: {m}"));
        let builtin = |s: &str| {
            s.strip_prefix(BUILTIN_PREFIX)
                .map(|n| fixtures::builtin(n).ok_or_else(|| cfg_err(format!("unknown builtin {n:?}"))))
        };
        let (urdf, mesh_dir) = match builtin(&spec.robot) {
            Some(b) => (b?.0.to_string(), PathBuf::from(".")),
            None => {
                let p = Path::new(&spec.robot);
                let text = std::fs::read_to_string(p).map_err(|e| io_error(p, e))?;
                (text, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
        };
        let retarget_text = match builtin(&spec.retarget) {
            Some(b) => b?.1.to_string(),
            None => {
                let p = Path::new(&spec.retarget);
                std::fs::read_to_string(p).map_err(|e| io_error(p, e))?
            }
        };
        let model = parse_robot_description(&urdf).map_err(|e| cfg_err(e.to_string()))?;
        let retarget = RetargetConfig::from_json(&retarget_text).map_err(|e| cfg_err(e.to_string()))?;
        retarget.validate(&model).map_err(|e| cfg_err(e.to_string()))?;
        let meshes = MeshLibrary::load_for(&model, &mesh_dir).map_err(|e| cfg_err(e.to_string()))?;
        let scene = RobotScene::new(&model, &meshes).map_err(|e| cfg_err(e.to_string()))?;
        Ok(Embodiment { name: name.to_string(), model, retarget, scene })
    }
}

/// Everything a worker needs; immutable and shared.
#[derive(Debug, Clone)]
pub struct PipelineEnv {
    pub config: PipelineConfig,
    pub embodiments: BTreeMap<String, Embodiment>,
    pub mix: Vec<(String, f64)>,
    pub sprites: Vec<Sprite>,
}

impl PipelineEnv {
    pub fn new(config: PipelineConfig) -> Result<PipelineEnv, PipelineError> {
        config.validate()?;
        let embodiments = config
            .embodiments
            .iter()
            .map(|(name, spec)| Ok((name.clone(), Embodiment::load(name, spec)?)))
            .collect::<Result<_, PipelineError>>()?;
        let sprites = match (&config.cutmix, &config.sprite_dir) {
            (true, Some(dir)) => load_sprites(dir).map_err(|e| PipelineError::Config(e.to_string()))?,
            _ => Vec::new(),
        };
        Ok(PipelineEnv { mix: config.mix(), embodiments, sprites, config })
    }
}

/// Why a frame produced no output.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameOutcome {
    Skipped(String),
    Failed(String),
}

impl FrameOutcome {
    fn skip(code: &str) -> FrameOutcome {
        FrameOutcome::Skipped(code.to_string())
    }

    fn fail(code: &str) -> FrameOutcome {
        FrameOutcome::Failed(code.to_string())
    }

    pub fn status(&self) -> RowStatus {
        match self {
            FrameOutcome::Skipped(r) => RowStatus::Skipped(r.clone()),
            FrameOutcome::Failed(r) => RowStatus::Failed(r.clone()),
        }
    }
}

fn retarget_outcome(e: &RetargetError) -> FrameOutcome {
    match e {
        RetargetError::DegenerateTriplet { .. } => FrameOutcome::skip("DEGENERATE_TRIPLET"),
        RetargetError::Geometry(GeometryError::DegenerateHand) => FrameOutcome::skip("DEGENERATE_HAND"),
        RetargetError::Geometry(GeometryError::DegenerateRobotPose) => FrameOutcome::skip("DEGENERATE_ROBOT"),
        _ => FrameOutcome::fail("RETARGET_ERROR"),
    }
}

/// Rendered robot for one record, before compositing.
#[derive(Debug, Clone)]
pub struct RenderedRobot {
    pub overlay: Overlay,
    pub config: JointConfig,
    /// Robot root in the world frame.
    pub base_pose: HomogeneousMatrix,
    /// Rendering camera in the robot frame.
    pub cam_sim: CameraPose,
    /// Robot wrist marker projected into the (unmirrored) frame.
    pub projected_wrist: [f64; 2],
    pub aperture: Option<f64>,
    pub mirrored: bool,
}

/// Retargets and renders one record with one embodiment.
pub fn render_robot(record: &FrameRecord, emb: &Embodiment, light: &LightSettings) -> Result<RenderedRobot, FrameOutcome> {
    let mut cam_record = record.clone();
    if record.keypoints.frame == KeypointFrame::World {
        cam_record.keypoints = record.keypoints.map_points(|p| record.extrinsics.world_to_camera(p));
        cam_record.keypoints.frame = KeypointFrame::Camera;
    }
    let mirrored = cam_record.keypoints.handedness == Handedness::Left;
    if mirrored {
        cam_record = mirror_unchecked(&cam_record, Handedness::Right);
    }
    // retarget in the camera frame: the remapped camera does not depend on
    // which world frame the hand is expressed in
    let r = retarget_keypoints(&cam_record.keypoints, &emb.model, &emb.retarget).map_err(|e| retarget_outcome(&e))?;
    let hand_t = r.hand_frame.to_transform();
    let robot_t = r.robot_frame.to_transform();
    let cam_sim = remap_camera(&CameraPose::default(), &hand_t, &robot_t);
    let mut overlay = rasterize(&emb.scene, &emb.model, &r.config, &HomogeneousMatrix::IDENTITY, &record.intrinsics, &cam_sim, light)
        .map_err(|_| FrameOutcome::fail("RENDER_ERROR"))?;
    let wrist = project(&record.intrinsics, &cam_sim, r.robot_frame.origin).map_err(|_| FrameOutcome::skip("BEHIND_CAMERA"))?;
    let mut projected_wrist = [wrist.u, wrist.v];
    if mirrored {
        flip_horizontal(&mut overlay);
        projected_wrist[0] = record.intrinsics.width as f64 - projected_wrist[0];
    }
    Ok(RenderedRobot {
        overlay,
        config: r.config,
        base_pose: record.extrinsics.to_transform().compose(&r.base_pose),
        cam_sim,
        projected_wrist,
        aperture: r.aperture,
        mirrored,
    })
}

fn flip_horizontal(o: &mut Overlay) {
    image::imageops::flip_horizontal_in_place(&mut o.rgb);
    image::imageops::flip_horizontal_in_place(&mut o.mask);
    let w = o.width() as usize;
    for row in o.depth.chunks_mut(w) {
        row.reverse();
    }
}

/// Detected wrist pixel of a record: its 2D keypoint, or the projection of
/// the 3D wrist.
pub fn hand_wrist_pixel(record: &FrameRecord) -> Option<[f64; 2]> {
    if let Some(p) = &record.keypoints.points_2d {
        return Some(p[0]);
    }
    let w = record.keypoints.points_3d[0];
    let world = match record.keypoints.frame {
        KeypointFrame::World => w,
        KeypointFrame::Camera => record.extrinsics.camera_to_world(w),
    };
    project(&record.intrinsics, &record.extrinsics, world).ok().map(|p| [p.u, p.v])
}

fn hand_points_2d(record: &FrameRecord) -> Vec<[f64; 2]> {
    if let Some(p) = &record.keypoints.points_2d {
        return p.to_vec();
    }
    record
        .world_keypoints()
        .points_3d
        .iter()
        .filter_map(|p| project(&record.intrinsics, &record.extrinsics, *p).ok().map(|q| [q.u, q.v]))
        .collect()
}

/// Light for a frame under the configured mode.
pub fn frame_light(config: &PipelineConfig, frame_id: &str) -> LightSettings {
    match config.lighting {
        LightingMode::Fixed => LightSettings::default(),
        LightingMode::Random => randomize_light(hash64(config.seed ^ 0x4C49_4748_5421, frame_id)),
    }
}

/// Input record plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct InputFrame {
    pub record: FrameRecord,
    pub base_dir: PathBuf,
}

/// Output of one augmented frame, not yet written.
#[derive(Debug, Clone)]
pub struct AugmentedFrame {
    pub record: AugmentedRecord,
    pub image: RgbImage,
    pub mask: image::GrayImage,
    pub background_bytes: Vec<u8>,
}

/// Runs every per-frame stage except writing.
pub fn augment_frame(input: &InputFrame, env: &PipelineEnv) -> Result<AugmentedFrame, FrameOutcome> {
    let record = &input.record;
    let cfg = &env.config;
    if record.keypoints.confidence < cfg.min_confidence {
        return Err(FrameOutcome::skip(IssueCode::LowConfidence.as_str()));
    }
    let read = |rel: &str| {
        let p = input.base_dir.join(rel);
        std::fs::read(&p).map_err(|e| {
            log::warn!("{}: cannot read {}: {e}", record.frame_id, p.display());
            FrameOutcome::fail("IO_ERROR")
        })
    };
    let dims_of = |rel: &str| image::image_dimensions(input.base_dir.join(rel)).map_err(|_| FrameOutcome::fail("IO_ERROR"));
    let background_bytes = read(&record.background_path)?;
    let background = image::load_from_memory(&background_bytes).map_err(|_| FrameOutcome::fail("BAD_IMAGE"))?.to_rgb8();
    let dims = FrameImageDims {
        image: dims_of(&record.image_path)?,
        mask: dims_of(&record.mask_path)?,
        background: background.dimensions(),
    };
    let report = validate_frame_with(record, Some(&dims));
    for code in [IssueCode::DegenerateHand, IssueCode::ImageSizeMismatch, IssueCode::MaskSizeMismatch] {
        if report.has(code) {
            return Err(FrameOutcome::skip(code.as_str()));
        }
    }
    if cfg.strict {
        if let Some(issue) = report.issues.first() {
            return Err(FrameOutcome::skip(issue.code.as_str()));
        }
    }

    let embodiment = assign_embodiment(&record.frame_id, &env.mix, cfg.seed).map_err(|_| FrameOutcome::fail("CONFIG_ERROR"))?;
    let emb = &env.embodiments[embodiment];
    let layout = LayoutPaths::for_stem(&stem_for(&record.source_video, record.source_index));
    let hand_wrist = hand_wrist_pixel(record).ok_or_else(|| FrameOutcome::skip("BEHIND_CAMERA"))?;

    let mut out = AugmentedRecord {
        frame_id: record.frame_id.clone(),
        source_video: record.source_video.clone(),
        source_index: record.source_index,
        source_image: record.image_path.clone(),
        augmented_image_path: layout.image,
        robot_mask_path: layout.mask,
        background_path: layout.background,
        embodiment: embodiment.to_string(),
        method: AugmentMethod::Render,
        joint_config: JointConfig::new(),
        base_pose: HomogeneousMatrix::IDENTITY,
        cam_pose: HomogeneousMatrix::IDENTITY,
        real_cam_pose: record.extrinsics.to_transform(),
        alignment_offset: PixelOffset::ZERO,
        wrist_residual_px: 0.0,
        aperture: None,
        mirrored: false,
        light: None,
        action_label: record.action_label.clone(),
    };

    if cfg.cutmix {
        let bbox = BBox::around(&hand_points_2d(record), CUTMIX_MARGIN, background.width(), background.height())
            .ok_or_else(|| FrameOutcome::skip("NO_HAND_BOX"))?;
        let pick = hash64(cfg.seed ^ 0x5350_5249_5445, &record.frame_id) % env.sprites.len() as u64;
        let (image, mask) =
            cutmix(&background, &env.sprites[pick as usize], &bbox).map_err(|_| FrameOutcome::skip("NO_HAND_BOX"))?;
        out.method = AugmentMethod::Cutmix;
        return Ok(AugmentedFrame { record: out, image, mask, background_bytes });
    }

    let light = frame_light(cfg, &record.frame_id);
    let rendered = render_robot(record, emb, &light)?;
    let offset = if cfg.alignment {
        let o = alignment_offset(hand_wrist, rendered.projected_wrist);
        let (w, h) = (background.width() as i64, background.height() as i64);
        PixelOffset::new(o.du.clamp(-w, w), o.dv.clamp(-h, h))
    } else {
        PixelOffset::ZERO
    };
    let image = paste(&background, &rendered.overlay, offset).map_err(|_| FrameOutcome::skip("IMAGE_SIZE_MISMATCH"))?;
    let mask = shifted_mask(&rendered.overlay, offset);
    if !mask.as_raw().contains(&255) {
        return Err(FrameOutcome::skip("ROBOT_OUT_OF_VIEW"));
    }
    let residual = [
        hand_wrist[0] - (rendered.projected_wrist[0] + offset.du as f64),
        hand_wrist[1] - (rendered.projected_wrist[1] + offset.dv as f64),
    ];
    out.joint_config = rendered.config;
    out.base_pose = rendered.base_pose;
    out.cam_pose = rendered.cam_sim.to_transform();
    out.alignment_offset = offset;
    out.wrist_residual_px = (residual[0] * residual[0] + residual[1] * residual[1]).sqrt();
    out.aperture = rendered.aperture;
    out.mirrored = rendered.mirrored;
    out.light = Some(light);
    Ok(AugmentedFrame { record: out, image, mask, background_bytes })
}

/// Augments and writes one frame, turning every per-frame problem into a row.
pub fn process_frame(input: &InputFrame, env: &PipelineEnv, root: &Path, mode: WriteMode) -> ManifestRow {
    match augment_frame(input, env) {
        Err(outcome) => ManifestRow::not_written(&input.record.frame_id, outcome.status()),
        Ok(frame) => {
            let artifacts = FrameArtifacts {
                image_png: encode_png(&frame.image),
                mask_png: encode_png(&frame.mask),
                background: frame.background_bytes,
            };
            write_record(root, &frame.record, &artifacts, mode).unwrap_or_else(|e| {
                log::warn!("{}: {e}", input.record.frame_id);
                let code = match e {
                    DatasetError::DuplicateFrame { .. } => "DUPLICATE_FRAME",
                    _ => "IO_ERROR",
                };
                ManifestRow::not_written(&input.record.frame_id, RowStatus::Failed(code.into()))
            })
        }
    }
}

/// Reads an input manifest: one record path per line, relative to the
/// manifest's directory. Blank lines and `#` comments are ignored. Records
/// that fail to parse become failed rows keyed by `path:<line>`.
pub fn read_input_manifest(path: &Path, mode: ParseMode) -> Result<(Vec<InputFrame>, Vec<ManifestRow>), PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut frames = Vec::new();
    let mut failed = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let rec_path = base.join(line);
        let parsed = std::fs::read(&rec_path)
            .map_err(|e| e.to_string())
            .and_then(|b| parse_frame_record(&b, mode).map_err(|e| e.to_string()));
        match parsed {
            Ok(record) => frames.push(InputFrame {
                record,
                base_dir: rec_path.parent().map(Path::to_path_buf).unwrap_or_default(),
            }),
            Err(e) => {
                log::warn!("{line}: {e}");
                failed.push(ManifestRow::not_written(format!("path:{line}"), RowStatus::Failed("PARSE_ERROR".into())));
            }
        }
    }
    Ok((frames, failed))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub total: usize,
    pub ok: usize,
    pub skipped: BTreeMap<String, usize>,
    pub failed: BTreeMap<String, usize>,
    /// Rows carried over from an earlier run after their digests verified.
    pub reused: usize,
    pub wall_seconds: f64,
    pub frames_per_second: f64,
}

impl RunStats {
    pub fn from_rows(rows: &[ManifestRow]) -> RunStats {
        let mut s = RunStats { total: rows.len(), ..RunStats::default() };
        for r in rows {
            match &r.status {
                RowStatus::Ok => s.ok += 1,
                RowStatus::Skipped(why) => *s.skipped.entry(why.clone()).or_default() += 1,
                RowStatus::Failed(why) => *s.failed.entry(why.clone()).or_default() += 1,
            }
        }
        s
    }

    pub fn skipped_total(&self) -> usize {
        self.skipped.values().sum()
    }

    pub fn failed_total(&self) -> usize {
        self.failed.values().sum()
    }
}

impl std::fmt::Display for RunStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} frames: {} ok, {} skipped, {} failed ({} reused) in {:.2} s, {:.1} frames/s",
            self.total,
            self.ok,
            self.skipped_total(),
            self.failed_total(),
            self.reused,
            self.wall_seconds,
            self.frames_per_second
        )?;
        for (why, n) in self.skipped.iter().chain(&self.failed) {
            write!(f, "\n  {why}: {n}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Reuse verified rows from an earlier, possibly interrupted, run.
    pub resume: bool,
    /// Stop after this many frames have been processed, leaving the journal
    /// behind as an interrupted run would.
    pub stop_after: Option<usize>,
}

fn read_previous_rows(root: &Path) -> Result<Vec<ManifestRow>, PipelineError> {
    let mut rows = Vec::new();
    for name in [dataset::MANIFEST_FILE, JOURNAL_FILE] {
        let p = root.join(name);
        if let Ok(text) = std::fs::read_to_string(&p) {
            // a torn last line from a killed run is ignored
            let complete: String = text.split_inclusive('\n').filter(|l| l.ends_with('\n')).collect();
            match parse_manifest(&complete) {
                Ok(r) => rows.extend(r),
                Err(e) => log::warn!("{}: {e}; ignoring it", p.display()),
            }
        }
    }
    Ok(rows)
}

/// Runs the whole batch and writes `manifest.jsonl` under `root`.
pub fn run_batch(
    frames: Vec<InputFrame>,
    mut rows: Vec<ManifestRow>,
    env: &PipelineEnv,
    root: &Path,
    opts: &RunOptions,
) -> Result<(Vec<ManifestRow>, RunStats), PipelineError> {
    let start = Instant::now();
    std::fs::create_dir_all(root).map_err(|e| io_error(root, e))?;
    let journal_path = root.join(JOURNAL_FILE);
    let has_previous = root.join(dataset::MANIFEST_FILE).exists() || journal_path.exists();
    if has_previous && !opts.resume {
        return Err(PipelineError::OutputExists(root.to_path_buf()));
    }

    // one row per frame id; later stems that collide with earlier ones fail
    let mut frames = frames;
    frames.sort_by(|a, b| a.record.frame_id.cmp(&b.record.frame_id));
    let mut ids = BTreeSet::new();
    for r in &rows {
        ids.insert(r.frame_id.clone());
    }
    let mut stems = BTreeSet::new();
    let mut tasks = Vec::with_capacity(frames.len());
    for f in frames {
        if !ids.insert(f.record.frame_id.clone()) {
            return Err(PipelineError::DuplicateInput(f.record.frame_id));
        }
        if !stems.insert(stem_for(&f.record.source_video, f.record.source_index)) {
            rows.push(ManifestRow::not_written(&f.record.frame_id, RowStatus::Failed("DUPLICATE_STEM".into())));
            continue;
        }
        tasks.push(f);
    }

    let mut reused = 0;
    if opts.resume {
        let previous: BTreeMap<String, ManifestRow> =
            read_previous_rows(root)?.into_iter().map(|r| (r.frame_id.clone(), r)).collect();
        tasks.retain(|f| match previous.get(&f.record.frame_id) {
            Some(row) if row.status == RowStatus::Ok && verify_row(root, row) => {
                rows.push(row.clone());
                reused += 1;
                false
            }
            Some(row) if matches!(row.status, RowStatus::Skipped(_)) => {
                rows.push(row.clone());
                reused += 1;
                false
            }
            _ => true,
        });
    }

    let journal = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&journal_path)
        .map_err(|e| io_error(&journal_path, e))?;
    // rows already trusted are journaled too, so a second interruption loses nothing
    let carried: Vec<ManifestRow> = rows.clone();
    let (tx, rx) = mpsc::channel::<ManifestRow>();
    let writer = std::thread::spawn(move || -> std::io::Result<Vec<ManifestRow>> {
        let mut journal = std::io::BufWriter::new(journal);
        for r in &carried {
            journal.write_all(r.to_json_line().as_bytes())?;
        }
        journal.flush()?;
        let mut done = Vec::new();
        for row in rx {
            journal.write_all(row.to_json_line().as_bytes())?;
            journal.flush()?;
            done.push(row);
        }
        Ok(done)
    });

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(env.config.workers)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let started = AtomicUsize::new(0);
    let limit = opts.stop_after.unwrap_or(usize::MAX);
    let mode = if opts.resume { WriteMode::Overwrite } else { WriteMode::CreateNew };
    pool.install(|| {
        tasks.par_iter().for_each_with(tx, |tx, f| {
            if started.fetch_add(1, Ordering::SeqCst) >= limit {
                return;
            }
            let row = process_frame(f, env, root, mode);
            let _ = tx.send(row);
        })
    });
    let done = writer
        .join()
        .expect("journal writer does not panic")
        .map_err(|e| io_error(&journal_path, e))?;
    if opts.stop_after.is_some_and(|n| n < tasks.len()) {
        return Err(PipelineError::Interrupted(done.len()));
    }
    rows.extend(done);
    rows.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    dataset::write_manifest(root, &rows)?;
    let resolved = serde_json::to_vec_pretty(&env.config).expect("configs always serialize");
    dataset::write_atomic(&root.join(RESOLVED_CONFIG_FILE), &resolved)?;
    std::fs::remove_file(&journal_path).map_err(|e| io_error(&journal_path, e))?;

    let mut stats = RunStats::from_rows(&rows);
    stats.reused = reused;
    stats.wall_seconds = start.elapsed().as_secs_f64();
    let processed = (stats.total - reused) as f64;
    stats.frames_per_second = if stats.wall_seconds > 0.0 { processed / stats.wall_seconds } else { 0.0 };
    Ok((rows, stats))
}

/// [`run_batch`] over an input manifest file.
pub fn run_manifest(
    input_manifest: &Path,
    env: &PipelineEnv,
    root: &Path,
    opts: &RunOptions,
) -> Result<(Vec<ManifestRow>, RunStats), PipelineError> {
    let mode = if env.config.strict { ParseMode::Strict } else { ParseMode::Lenient };
    let (frames, failed) = read_input_manifest(input_manifest, mode)?;
    run_batch(frames, failed, env, root, opts)
}

/// Writes `count` synthetic records (seeds `seed..seed+count`, presets in
/// rotation) with their images under `dir`, plus `manifest.txt` listing them.
pub fn write_synthetic_inputs(dir: &Path, count: u64, seed: u64, size: u32) -> Result<PathBuf, PipelineError> {
    use crate::hand::{serialize_frame_record, HandPreset};
    use crate::synth::{synth_hand_sized, synth_images};
    let presets = [HandPreset::OpenPalm, HandPreset::Pinch, HandPreset::Fist, HandPreset::Random];
    let mut listing = String::new();
    for i in 0..count {
        let s = seed + i;
        let rec = synth_hand_sized(s, presets[(s % presets.len() as u64) as usize], size, size);
        let imgs = synth_images(&rec);
        for (rel, bytes) in [
            (&rec.image_path, encode_png(&imgs.image)),
            (&rec.mask_path, encode_png(&imgs.mask)),
            (&rec.background_path, encode_png(&imgs.background)),
        ] {
            dataset::write_atomic(&dir.join(rel), &bytes)?;
        }
        let name = format!("{}.json", rec.frame_id);
        dataset::write_atomic(&dir.join(&name), &serialize_frame_record(&rec))?;
        listing += &name;
        listing.push('\n');
    }
    let manifest = dir.join("manifest.txt");
    dataset::write_atomic(&manifest, listing.as_bytes())?;
    Ok(manifest)
}

/// World position of the robot wrist marker when the robot root sits at
/// `base_pose`.
pub fn placed_wrist(emb: &Embodiment, config: &JointConfig, base_pose: &HomogeneousMatrix) -> Option<Vec3> {
    let p = crate::robot::marker_positions(&emb.model, config, &[&emb.retarget.marker_links.wrist]).ok()?;
    Some(base_pose.transform_point(p[0]))
}
