//! Keyframe sampling, embodiment mixing and the on-disk dataset layout.
//!
//! ```text
//! root/
//!   images/{stem}.png        composited frame
//!   masks/{stem}.png         robot mask in the composited frame
//!   backgrounds/{stem}.png   byte copy of the inpainted input background
//!   meta/{stem}.json         AugmentedRecord
//!   manifest.jsonl           one row per input frame, sorted by frame_id
//! ```
//!
//! `stem` is `{source_video}_{source_index:06}`.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::Hasher;
use std::io::Write;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::composite::PixelOffset;
use crate::geometry::HomogeneousMatrix;
use crate::render::LightSettings;
use crate::robot::JointConfig;
use crate::validation::{IssueCode, ValidationReport};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const LAYOUT_DIRS: [&str; 4] = ["images", "masks", "backgrounds", "meta"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("frame {frame_id:?} already written (stem {stem})")]
    DuplicateFrame { frame_id: String, stem: String },
    #[error("embodiment mix is empty")]
    EmptyMix,
    #[error("invalid mix weight {weight} for {embodiment:?}")]
    InvalidWeight { embodiment: String, weight: f64 },
    #[error("bad metadata in {path}: {message}")]
    BadMetadata { path: PathBuf, message: String },
    #[error("bad manifest line {line}: {message}")]
    BadManifest { line: usize, message: String },
    #[error("unsafe output path {0:?}")]
    UnsafePath(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Endpoint-inclusive uniform sampling of `k` indices out of `video_length`.
/// Shorter videos yield all their frames.
pub fn sample_keyframes(video_length: u64, k: u64) -> Vec<u64> {
    if video_length == 0 || k == 0 {
        return Vec::new();
    }
    if video_length < k {
        return (0..video_length).collect();
    }
    if k == 1 {
        return vec![0];
    }
    (0..k).map(|j| (j as u128 * (video_length - 1) as u128 / (k - 1) as u128) as u64).collect()
}

/// 64-bit hash of `(seed, frame_id)`: FNV-1a followed by a SplitMix64
/// finalizer so nearby ids spread over the whole range.
pub fn hash64(seed: u64, frame_id: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&seed.to_le_bytes());
    h.write(frame_id.as_bytes());
    let mut z = h.finish();
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Picks an embodiment for a frame. Depends only on `(seed, frame_id)` and the
/// mix, never on processing order.
pub fn assign_embodiment<'a>(frame_id: &str, mix: &'a [(String, f64)], seed: u64) -> Result<&'a str, DatasetError> {
    if mix.is_empty() {
        return Err(DatasetError::EmptyMix);
    }
    for (name, w) in mix {
        if !(w.is_finite() && *w > 0.0) {
            return Err(DatasetError::InvalidWeight { embodiment: name.clone(), weight: *w });
        }
    }
    let total: f64 = mix.iter().map(|(_, w)| w).sum();
    let u = (hash64(seed, frame_id) >> 11) as f64 / (1u64 << 53) as f64 * total;
    let mut acc = 0.0;
    for (name, w) in mix {
        acc += w;
        if u < acc {
            return Ok(name);
        }
    }
    Ok(&mix[mix.len() - 1].0)
}

/// FNV-1a 64 of `bytes`, as 16 lowercase hex digits.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

pub fn digest_file(path: &Path) -> Result<String, DatasetError> {
    Ok(digest_bytes(&std::fs::read(path).map_err(io_err(path))?))
}

pub fn stem_for(source_video: &str, source_index: u64) -> String {
    format!("{source_video}_{source_index:06}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutPaths {
    pub image: String,
    pub mask: String,
    pub background: String,
    pub meta: String,
}

impl LayoutPaths {
    pub fn for_stem(stem: &str) -> LayoutPaths {
        LayoutPaths {
            image: format!("images/{stem}.png"),
            mask: format!("masks/{stem}.png"),
            background: format!("backgrounds/{stem}.png"),
            meta: format!("meta/{stem}.json"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMethod {
    Render,
    Cutmix,
}

/// Metadata of one output frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub frame_id: String,
    pub source_video: String,
    pub source_index: u64,
    pub source_image: String,
    pub augmented_image_path: String,
    pub robot_mask_path: String,
    pub background_path: String,
    pub embodiment: String,
    pub method: AugmentMethod,
    pub joint_config: JointConfig,
    /// Robot root in the world frame.
    pub base_pose: HomogeneousMatrix,
    /// Camera used for rendering (camera-to-world), in the simulator frame.
    pub cam_pose: HomogeneousMatrix,
    /// Camera of the input record (camera-to-world).
    pub real_cam_pose: HomogeneousMatrix,
    pub alignment_offset: PixelOffset,
    /// Wrist pixel distance left after the offset was applied.
    pub wrist_residual_px: f64,
    pub aperture: Option<f64>,
    pub mirrored: bool,
    pub light: Option<LightSettings>,
    pub action_label: Option<String>,
}

impl AugmentedRecord {
    pub fn stem(&self) -> String {
        stem_for(&self.source_video, self.source_index)
    }

    pub fn layout(&self) -> LayoutPaths {
        LayoutPaths::for_stem(&self.stem())
    }
}

/// Encoded output files of one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameArtifacts {
    pub image_png: Vec<u8>,
    pub mask_png: Vec<u8>,
    pub background: Vec<u8>,
}

pub fn encode_png<I>(img: &I) -> Vec<u8>
where
    I: image::GenericImageView,
    I::Pixel: image::PixelWithColorType,
    [<I::Pixel as image::Pixel>::Subpixel]: image::EncodableLayout,
    I: std::ops::Deref<Target = [<I::Pixel as image::Pixel>::Subpixel]>,
{
    use image::EncodableLayout;
    let mut out = Vec::new();
    let enc = image::codecs::png::PngEncoder::new(&mut out);
    image::ImageEncoder::write_image(
        enc,
        img.as_bytes(),
        img.width(),
        img.height(),
        <I::Pixel as image::PixelWithColorType>::COLOR_TYPE.into(),
    )
    .expect("in-memory PNG encoding cannot fail");
    out
}

/// Row status: `ok`, `skipped(REASON)` or `failed(REASON)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RowStatus {
    Ok,
    Skipped(String),
    Failed(String),
}

impl RowStatus {
    pub fn reason(&self) -> Option<&str> {
        match self {
            RowStatus::Ok => None,
            RowStatus::Skipped(r) | RowStatus::Failed(r) => Some(r),
        }
    }
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowStatus::Ok => f.write_str("ok"),
            RowStatus::Skipped(r) => write!(f, "skipped({r})"),
            RowStatus::Failed(r) => write!(f, "failed({r})"),
        }
    }
}

impl std::str::FromStr for RowStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "ok" {
            return Ok(RowStatus::Ok);
        }
        let inner = |prefix: &str| s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')')).map(str::to_string);
        if let Some(r) = inner("skipped(") {
            Ok(RowStatus::Skipped(r))
        } else if let Some(r) = inner("failed(") {
            Ok(RowStatus::Failed(r))
        } else {
            Err(format!("unknown status {s:?}"))
        }
    }
}

impl Serialize for RowStatus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RowStatus {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactDigests {
    pub image: String,
    pub mask: String,
    pub background: String,
    pub meta: String,
}

/// One manifest line. Paths are relative to the dataset root; they and the
/// digests are null for skipped and failed frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub frame_id: String,
    pub status: RowStatus,
    pub image: Option<String>,
    pub mask: Option<String>,
    pub background: Option<String>,
    pub meta: Option<String>,
    pub digest: Option<ArtifactDigests>,
}

impl ManifestRow {
    pub fn not_written(frame_id: impl Into<String>, status: RowStatus) -> ManifestRow {
        ManifestRow { frame_id: frame_id.into(), status, image: None, mask: None, background: None, meta: None, digest: None }
    }

    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("manifest rows always serialize");
        s.push('\n');
        s
    }
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename, so the
/// final name only ever holds complete content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WriteMode {
    /// Refuse to replace an existing frame.
    #[default]
    CreateNew,
    /// Replace whatever is stored under the frame's stem.
    Overwrite,
}

fn checked_join(root: &Path, rel: &str) -> Result<PathBuf, DatasetError> {
    let p = Path::new(rel);
    if rel.is_empty() || p.is_absolute() || p.components().any(|c| !matches!(c, std::path::Component::Normal(_))) {
        return Err(DatasetError::UnsafePath(rel.to_string()));
    }
    Ok(root.join(p))
}

/// Writes one frame's files and returns its manifest row. The metadata file
/// is written last, so its presence means the other files are complete.
pub fn write_record(
    root: &Path,
    record: &AugmentedRecord,
    artifacts: &FrameArtifacts,
    mode: WriteMode,
) -> Result<ManifestRow, DatasetError> {
    let layout = record.layout();
    let meta_path = checked_join(root, &layout.meta)?;
    if mode == WriteMode::CreateNew && meta_path.exists() {
        return Err(DatasetError::DuplicateFrame { frame_id: record.frame_id.clone(), stem: record.stem() });
    }
    let mut meta = serde_json::to_vec_pretty(record).expect("records always serialize");
    meta.push(b'\n');
    let files: [(&str, &[u8]); 3] = [
        (&record.augmented_image_path, &artifacts.image_png),
        (&record.robot_mask_path, &artifacts.mask_png),
        (&record.background_path, &artifacts.background),
    ];
    for (rel, bytes) in files {
        write_atomic(&checked_join(root, rel)?, bytes)?;
    }
    write_atomic(&meta_path, &meta)?;
    Ok(ManifestRow {
        frame_id: record.frame_id.clone(),
        status: RowStatus::Ok,
        image: Some(record.augmented_image_path.clone()),
        mask: Some(record.robot_mask_path.clone()),
        background: Some(record.background_path.clone()),
        meta: Some(layout.meta),
        digest: Some(ArtifactDigests {
            image: digest_bytes(&artifacts.image_png),
            mask: digest_bytes(&artifacts.mask_png),
            background: digest_bytes(&artifacts.background),
            meta: digest_bytes(&meta),
        }),
    })
}

/// Reads a metadata document given its path relative to `root`.
pub fn read_record(root: &Path, meta_rel: &str) -> Result<AugmentedRecord, DatasetError> {
    let path = checked_join(root, meta_rel)?;
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    serde_json::from_slice(&bytes).map_err(|e| DatasetError::BadMetadata { path, message: e.to_string() })
}

/// True when every file of an `ok` row exists and matches its digest.
pub fn verify_row(root: &Path, row: &ManifestRow) -> bool {
    let (Some(d), Some(i), Some(m), Some(b), Some(t)) = (&row.digest, &row.image, &row.mask, &row.background, &row.meta)
    else {
        return false;
    };
    [(i, &d.image), (m, &d.mask), (b, &d.background), (t, &d.meta)].iter().all(|(rel, want)| {
        checked_join(root, rel).ok().and_then(|p| digest_file(&p).ok()).as_deref() == Some(want.as_str())
    })
}

/// Manifest bytes: rows sorted by frame_id, one JSON object per line.
pub fn manifest_bytes(rows: &[ManifestRow]) -> Vec<u8> {
    let mut sorted: Vec<&ManifestRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    sorted.iter().flat_map(|r| r.to_json_line().into_bytes()).collect()
}

pub fn write_manifest(root: &Path, rows: &[ManifestRow]) -> Result<(), DatasetError> {
    write_atomic(&root.join(MANIFEST_FILE), &manifest_bytes(rows))
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>, DatasetError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| DatasetError::BadManifest { line: n + 1, message: e.to_string() }))
        .collect()
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestRow>, DatasetError> {
    let path = root.join(MANIFEST_FILE);
    parse_manifest(&std::fs::read_to_string(&path).map_err(io_err(&path))?)
}

/// Read-only integrity check of a written dataset.
pub fn validate_dataset(root: &Path) -> ValidationReport {
    let mut report = ValidationReport::new();
    let rows = match read_manifest(root) {
        Ok(rows) => rows,
        Err(e) => {
            report.push(IssueCode::BadManifest, e.to_string());
            return report;
        }
    };
    if rows.windows(2).any(|w| w[0].frame_id > w[1].frame_id) {
        report.push(IssueCode::BadManifest, "rows are not sorted by frame_id");
    }
    let mut seen = BTreeSet::new();
    for row in &rows {
        let id = &row.frame_id;
        if !seen.insert(id.as_str()) {
            report.push(IssueCode::DuplicateFrame, format!("{id}: appears more than once"));
        }
        if row.status != RowStatus::Ok {
            continue;
        }
        let (Some(d), Some(i), Some(m), Some(b), Some(t)) = (&row.digest, &row.image, &row.mask, &row.background, &row.meta)
        else {
            report.push(IssueCode::BadManifest, format!("{id}: ok row without paths or digests"));
            continue;
        };
        let mut all_present = true;
        for (rel, want) in [(i, &d.image), (m, &d.mask), (b, &d.background), (t, &d.meta)] {
            let path = match checked_join(root, rel) {
                Ok(p) => p,
                Err(e) => {
                    report.push(IssueCode::BadManifest, format!("{id}: {e}"));
                    all_present = false;
                    continue;
                }
            };
            match std::fs::read(&path) {
                Err(_) => {
                    report.push(IssueCode::MissingFile, format!("{id}: {rel} is missing"));
                    all_present = false;
                }
                Ok(bytes) => {
                    let got = digest_bytes(&bytes);
                    if &got != want {
                        report.push(IssueCode::DigestMismatch, format!("{id}: {rel} digest {got}, manifest says {want}"));
                    }
                }
            }
        }
        if !all_present {
            continue;
        }
        match read_record(root, t) {
            Ok(rec) if rec.frame_id != *id => {
                report.push(IssueCode::BadMetadata, format!("{id}: metadata belongs to {:?}", rec.frame_id))
            }
            Ok(_) => {}
            Err(e) => report.push(IssueCode::BadMetadata, format!("{id}: {e}")),
        }
        let dims = |rel: &str| checked_join(root, rel).ok().and_then(|p| image::image_dimensions(p).ok());
        match (dims(i), dims(m)) {
            (Some(a), Some(b)) if a != b => {
                report.push(IssueCode::MaskSizeMismatch, format!("{id}: image {a:?}, mask {b:?}"))
            }
            (Some(_), Some(_)) => {}
            _ => report.push(IssueCode::BadMetadata, format!("{id}: image or mask is not a readable PNG")),
        }
    }
    report
}
