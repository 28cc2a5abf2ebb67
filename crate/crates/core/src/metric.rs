//! Prompt-to-image similarity scoring over precomputed embeddings.
//!
//! Scores are `100 * cosine`. Embeddings come from a fixture file; nothing
//! here runs a model.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCORE_SCALE: &str = "100 x cosine similarity";
pub const HUMAN_PREFIX: &str = "A human is ";
pub const ROBOT_PREFIX: &str = "A robotic arm is ";

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("action phrase is empty")]
    EmptyAction,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector norm is zero or not finite")]
    ZeroVector,
    #[error("bad fixture: {0}")]
    BadFixture(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub action: String,
    pub human_prompt: String,
    pub robot_prompt: String,
}

pub fn render_prompts(action: &str) -> Result<PromptPair, MetricError> {
    if action.trim().is_empty() {
        return Err(MetricError::EmptyAction);
    }
    Ok(PromptPair {
        action: action.to_string(),
        human_prompt: format!("{HUMAN_PREFIX}{action}"),
        robot_prompt: format!("{ROBOT_PREFIX}{action}"),
    })
}

/// `100 * cos(img, txt)`.
pub fn cosine_score(img: &[f64], txt: &[f64]) -> Result<f64, MetricError> {
    if img.len() != txt.len() {
        return Err(MetricError::DimensionMismatch { left: img.len(), right: txt.len() });
    }
    let dot: f64 = img.iter().zip(txt).map(|(a, b)| a * b).sum();
    let na2: f64 = img.iter().map(|a| a * a).sum();
    let nb2: f64 = txt.iter().map(|b| b * b).sum();
    if !(na2 > 1e-24 && nb2 > 1e-24 && na2.is_finite() && nb2.is_finite()) {
        return Err(MetricError::ZeroVector);
    }
    // one square root keeps identical vectors at exactly 100
    Ok((100.0 * (dot / (na2 * nb2).sqrt())).clamp(-100.0, 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    ImageOri,
    ImageAug,
    TextHuman,
    TextRobot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingEntry {
    pub id: String,
    pub kind: EmbeddingKind,
    pub action: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingFixture {
    pub model: String,
    pub dim: usize,
    pub entries: Vec<EmbeddingEntry>,
}

impl EmbeddingFixture {
    /// Parses and checks that every vector is finite and `dim` long.
    pub fn from_json(text: &str) -> Result<EmbeddingFixture, MetricError> {
        let f: EmbeddingFixture = serde_json::from_str(text).map_err(|e| MetricError::BadFixture(e.to_string()))?;
        if f.dim == 0 {
            return Err(MetricError::BadFixture("dim must be positive".into()));
        }
        for e in &f.entries {
            if e.vector.len() != f.dim {
                return Err(MetricError::DimensionMismatch { left: e.vector.len(), right: f.dim });
            }
            if e.vector.iter().any(|v| !v.is_finite()) {
                return Err(MetricError::BadFixture(format!("{}: non-finite component", e.id)));
            }
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<EmbeddingFixture, MetricError> {
        EmbeddingFixture::from_json(&std::fs::read_to_string(path)?)
    }

    /// Samples with both images present, each with the text embeddings of its
    /// action. Sorted by sample id.
    pub fn pairs(&self) -> Result<Vec<ScorePair<'_>>, MetricError> {
        let mut text: BTreeMap<(EmbeddingKind, &str), &[f64]> = BTreeMap::new();
        let mut images: BTreeMap<&str, (Option<&EmbeddingEntry>, Option<&EmbeddingEntry>)> = BTreeMap::new();
        for e in &self.entries {
            match e.kind {
                EmbeddingKind::TextHuman | EmbeddingKind::TextRobot => {
                    if text.insert((e.kind, &e.action), &e.vector).is_some() {
                        return Err(MetricError::BadFixture(format!("duplicate {:?} text for {:?}", e.kind, e.action)));
                    }
                }
                EmbeddingKind::ImageOri | EmbeddingKind::ImageAug => {
                    let slot = images.entry(&e.id).or_default();
                    let target = if e.kind == EmbeddingKind::ImageOri { &mut slot.0 } else { &mut slot.1 };
                    if target.replace(e).is_some() {
                        return Err(MetricError::BadFixture(format!("duplicate {:?} image for {}", e.kind, e.id)));
                    }
                }
            }
        }
        let mut out = Vec::new();
        for (id, pair) in images {
            let (Some(ori), Some(aug)) = pair else {
                return Err(MetricError::BadFixture(format!("sample {id} needs both image_ori and image_aug")));
            };
            if ori.action != aug.action {
                return Err(MetricError::BadFixture(format!("sample {id} has two different actions")));
            }
            let lookup = |kind| {
                text.get(&(kind, ori.action.as_str()))
                    .copied()
                    .ok_or_else(|| MetricError::BadFixture(format!("no {kind:?} text for action {:?}", ori.action)))
            };
            out.push(ScorePair {
                sample_id: id,
                action: &ori.action,
                ori_img: &ori.vector,
                aug_img: &aug.vector,
                human_txt: lookup(EmbeddingKind::TextHuman)?,
                robot_txt: lookup(EmbeddingKind::TextRobot)?,
            });
        }
        Ok(out)
    }
}

/// Inputs of one report row.
#[derive(Debug, Clone, Copy)]
pub struct ScorePair<'a> {
    pub sample_id: &'a str,
    pub action: &'a str,
    pub ori_img: &'a [f64],
    pub aug_img: &'a [f64],
    pub human_txt: &'a [f64],
    pub robot_txt: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sample_id: String,
    pub action: String,
    pub score_ori: f64,
    pub score_aug: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSummary {
    pub action: String,
    pub samples: usize,
    pub mean_ori: f64,
    pub mean_aug: f64,
    pub mean_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub scale: String,
    pub model: Option<String>,
    pub rows: Vec<ReportRow>,
    pub per_action: Vec<ActionSummary>,
    pub mean_delta: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Scores every pair: original image against the human prompt, augmented
/// image against the robot prompt. Rows are sorted by sample id, summaries
/// by action.
pub fn build_report(pairs: &[ScorePair<'_>]) -> Result<SimilarityReport, MetricError> {
    let mut rows = pairs
        .iter()
        .map(|p| {
            let score_ori = cosine_score(p.ori_img, p.human_txt)?;
            let score_aug = cosine_score(p.aug_img, p.robot_txt)?;
            Ok(ReportRow {
                sample_id: p.sample_id.to_string(),
                action: p.action.to_string(),
                score_ori,
                score_aug,
                delta: score_aug - score_ori,
            })
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    rows.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let mut by_action: BTreeMap<&str, Vec<&ReportRow>> = BTreeMap::new();
    for r in &rows {
        by_action.entry(&r.action).or_default().push(r);
    }
    let per_action = by_action
        .into_iter()
        .map(|(action, rs)| ActionSummary {
            action: action.to_string(),
            samples: rs.len(),
            mean_ori: mean(rs.iter().map(|r| r.score_ori)),
            mean_aug: mean(rs.iter().map(|r| r.score_aug)),
            mean_delta: mean(rs.iter().map(|r| r.delta)),
        })
        .collect();
    let mean_delta = mean(rows.iter().map(|r| r.delta));
    Ok(SimilarityReport { scale: SCORE_SCALE.to_string(), model: None, rows, per_action, mean_delta })
}

/// Report for every sample in a fixture.
pub fn report_for_fixture(fixture: &EmbeddingFixture) -> Result<SimilarityReport, MetricError> {
    let mut report = build_report(&fixture.pairs()?)?;
    report.model = Some(fixture.model.clone());
    Ok(report)
}

impl SimilarityReport {
    /// Per-row CSV with scores at four decimals.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sample_id", "action", "score_ori", "score_aug", "delta"]).expect("writing to memory");
        for r in &self.rows {
            w.write_record([
                r.sample_id.clone(),
                r.action.clone(),
                format!("{:.4}", r.score_ori),
                format!("{:.4}", r.score_aug),
                format!("{:+.4}", r.delta),
            ])
            .expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing memory")).expect("csv of utf-8 fields")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize") + "\n"
    }

    /// Plain-text table with one decimal, as printed by the CLI.
    pub fn to_table(&self) -> String {
        let mut s = format!("scores: {}\n", self.scale);
        s += &format!("{:<10} {:>6} {:>6} {:>6}  action\n", "sample", "ori", "aug", "delta");
        for r in &self.rows {
            s += &format!("{:<10} {:>6.1} {:>6.1} {:>+6.1}  {}\n", r.sample_id, r.score_ori, r.score_aug, r.delta, r.action);
        }
        s += &format!("mean delta {:+.2}\n", self.mean_delta);
        s
    }
}
