//! Files shaped like the perception adapters' output: frame records with
//! their mask and background PNGs, and embedding fixtures.

use std::path::Path;

use ego2robot::dataset::{encode_png, read_manifest, read_record, validate_dataset, RowStatus};
use ego2robot::hand::{
    mirror_left_hand, parse_frame_record, serialize_frame_record, validate_frame, FrameRecord, Handedness, HandPreset,
    ParseMode,
};
use ego2robot::metric::{cosine_score, render_prompts, report_for_fixture, EmbeddingFixture, MetricError};
use ego2robot::pipeline::{run_manifest, PipelineConfig, PipelineEnv, RunOptions};
use ego2robot::synth::{synth_hand, synth_images};
use image::imageops::flip_horizontal;

fn left_hand(seed: u64) -> FrameRecord {
    let mut r = synth_hand(seed, HandPreset::OpenPalm);
    r.keypoints.handedness = Handedness::Left;
    let mut left = mirror_left_hand(&r).unwrap();
    left.keypoints.handedness = Handedness::Left;
    left.frame_id = format!("left_{seed}");
    left.source_video = "clip_left".into();
    left
}

/// Writes a record and its three images the way an adapter lays them out.
fn emit(dir: &Path, rec: &FrameRecord, flip: bool) -> String {
    let imgs = synth_images(rec);
    let (image, mask, bg) = if flip {
        (flip_horizontal(&imgs.image), flip_horizontal(&imgs.mask), flip_horizontal(&imgs.background))
    } else {
        (imgs.image, imgs.mask, imgs.background)
    };
    for (rel, bytes) in [
        (&rec.image_path, encode_png(&image)),
        (&rec.mask_path, encode_png(&mask)),
        (&rec.background_path, encode_png(&bg)),
    ] {
        let p = dir.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, bytes).unwrap();
    }
    let name = format!("{}.json", rec.frame_id);
    std::fs::write(dir.join(&name), serialize_frame_record(rec)).unwrap();
    name
}

#[test]
fn adapter_records_parse_strictly_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    for rec in [synth_hand(1, HandPreset::Pinch), left_hand(2)] {
        let name = emit(dir.path(), &rec, false);
        let parsed = parse_frame_record(&std::fs::read(dir.path().join(name)).unwrap(), ParseMode::Strict).unwrap();
        assert_eq!(parsed, rec);
        assert!(validate_frame(&parsed).issues.is_empty(), "{:?}", validate_frame(&parsed));
    }
    let left = left_hand(2);
    let right = mirror_left_hand(&left).unwrap();
    assert!(validate_frame(&right).issues.is_empty());
}

#[test]
fn left_hand_and_missing_hand_go_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = dir.path().join("in");
    let left = left_hand(4);
    let mut none = synth_hand(5, HandPreset::Fist);
    // an adapter that finds no hand still emits the frame, with confidence 0
    none.keypoints.confidence = 0.0;
    let listing = [emit(&inputs, &left, true), emit(&inputs, &none, false)].join("\n");
    std::fs::write(inputs.join("manifest.txt"), listing).unwrap();

    let env = PipelineEnv::new(PipelineConfig { strict: true, ..PipelineConfig::default() }).unwrap();
    let out = dir.path().join("out");
    let (rows, stats) = run_manifest(&inputs.join("manifest.txt"), &env, &out, &RunOptions::default()).unwrap();
    assert_eq!((stats.total, stats.ok), (2, 1));
    let by_id = |id: &str| rows.iter().find(|r| r.frame_id == id).unwrap();
    assert_eq!(by_id(&none.frame_id).status, RowStatus::Skipped("LOW_CONFIDENCE".into()));

    let row = by_id(&left.frame_id);
    assert_eq!(row.status, RowStatus::Ok);
    let meta = read_record(&out, row.meta.as_deref().unwrap()).unwrap();
    assert!(meta.mirrored);
    assert!(meta.wrist_residual_px <= std::f64::consts::FRAC_1_SQRT_2 + 1e-9, "{}", meta.wrist_residual_px);
    assert!(validate_dataset(&out).issues.is_empty());
    assert_eq!(read_manifest(&out).unwrap(), rows);
}

fn small_fixture(dim: usize, vectors: &[(&str, &str, &str, Vec<f64>)]) -> String {
    let entries: Vec<serde_json::Value> = vectors
        .iter()
        .map(|(id, kind, action, v)| serde_json::json!({"id": id, "kind": kind, "action": action, "vector": v}))
        .collect();
    serde_json::json!({"model": "test", "dim": dim, "entries": entries}).to_string()
}

#[test]
fn embedding_fixture_contract() {
    let action = "opening a drawer";
    let prompts = render_prompts(action).unwrap();
    assert_eq!(prompts.human_prompt, "A human is opening a drawer");
    assert_eq!(prompts.robot_prompt, "A robotic arm is opening a drawer");

    // the same image embedded twice scores the same against both prompts
    let img = vec![0.2, 0.9, -0.4];
    let text = small_fixture(
        3,
        &[
            ("s1", "image_ori", action, img.clone()),
            ("s1", "image_aug", action, img.clone()),
            ("t_h", "text_human", action, vec![0.1, 1.0, 0.0]),
            ("t_r", "text_robot", action, vec![0.1, 1.0, 0.0]),
        ],
    );
    let report = report_for_fixture(&EmbeddingFixture::from_json(&text).unwrap()).unwrap();
    assert_eq!(report.rows[0].delta, 0.0);
    assert_eq!(report.rows[0].score_ori, cosine_score(&img, &[0.1, 1.0, 0.0]).unwrap());

    let bad = small_fixture(4, &[("s1", "image_ori", action, img)]);
    assert!(matches!(EmbeddingFixture::from_json(&bad), Err(MetricError::DimensionMismatch { left: 3, right: 4 })));
}
