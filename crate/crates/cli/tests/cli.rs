use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ego2robot"));
    c.env("RUST_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = run(&["synth", "--count", "10", "--seed", "1", "--output", d.to_str().unwrap()]);
        assert!(o.status.success());
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.len(), 10 * 4 + 1);
    assert_eq!(ta, tb);
}

#[test]
fn sample_frames_prints_stride_two() {
    let o = run(&["sample-frames", "--length", "31", "--k", "16"]);
    assert!(o.status.success());
    let expect: Vec<String> = (0..16).map(|j| (2 * j).to_string()).collect();
    assert_eq!(stdout(&o).trim(), expect.join(" "));
}

#[test]
fn evaluate_reports_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let json = dir.path().join("r.json");
    let f = fixture("six_pairs.embeddings.json");
    let o = run(&["evaluate", "--fixture", f.to_str().unwrap(), "--csv", csv.to_str().unwrap(), "--json", json.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    let deltas: Vec<&str> = text.lines().filter(|l| l.starts_with("img")).map(|l| l.split_whitespace().nth(3).unwrap()).collect();
    assert_eq!(deltas, ["+2.0", "+5.2", "+1.1", "+0.3", "+1.2", "+2.3"]);
    assert!(std::fs::read_to_string(csv).unwrap().starts_with("sample_id,action,score_ori,score_aug,delta\n"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["sample-frames"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["augment", "--input-manifest", "x", "--output", "y", "--embodiment", "tentacle"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["augment", "--input-manifest", "/nonexistent/manifest.txt", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn augment_validate_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = dir.path().join("in");
    let out = dir.path().join("out");
    assert!(run(&["synth", "--count", "6", "--seed", "3", "--output", inputs.to_str().unwrap(), "--size", "128"]).status.success());
    let manifest = inputs.join("manifest.txt");
    let args = ["augment", "--input-manifest", manifest.to_str().unwrap(), "--output", out.to_str().unwrap(), "--mix", "gripper=1,dexhand=1", "--workers", "2"];
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("6 frames: 6 ok"));
    assert_eq!(run(&["validate", "--dataset", out.to_str().unwrap()]).status.code(), Some(0));

    // rerunning into a finished output needs --resume, which then reuses everything
    assert_eq!(run(&args).status.code(), Some(1));
    let mut resumed = args.to_vec();
    resumed.push("--resume");
    let o = run(&resumed);
    assert!(stdout(&o).contains("(6 reused)"), "{}", stdout(&o));

    let mask = std::fs::read_dir(out.join("masks")).unwrap().next().unwrap().unwrap().path();
    std::fs::remove_file(mask).unwrap();
    let o = run(&["validate", "--dataset", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("MISSING_FILE"));
}

#[test]
fn retarget_and_preview() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = dir.path().join("in");
    assert!(run(&["synth", "--count", "1", "--seed", "41", "--output", inputs.to_str().unwrap()]).status.success());
    let record = inputs.join("synth_41_pinch.json");
    let o = run(&["retarget", "--record", record.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["aperture"].as_f64().unwrap() < 0.05);
    assert_eq!(v["base_pose"].as_array().unwrap().len(), 16);

    let preview = dir.path().join("preview");
    let o = run(&["render-preview", "--record", record.to_str().unwrap(), "--output", preview.to_str().unwrap(), "--embodiment", "dexhand"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for suffix in ["rgb", "mask", "depth", "composite"] {
        assert!(preview.join(format!("synth_41_pinch_{suffix}.png")).exists(), "{suffix}");
    }
    assert_eq!(run(&["validate", "--record", record.to_str().unwrap()]).status.code(), Some(0));
}
