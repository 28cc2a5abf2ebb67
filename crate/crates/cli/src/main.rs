use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ego2robot::composite::{alignment_offset, paste};
use ego2robot::dataset::{encode_png, sample_keyframes, validate_dataset, write_atomic};
use ego2robot::hand::{parse_frame_record, validate_frame, FrameRecord, ParseMode};
use ego2robot::metric::{report_for_fixture, EmbeddingFixture};
use ego2robot::pipeline::{
    frame_light, hand_wrist_pixel, render_robot, run_manifest, write_synthetic_inputs, EmbodimentSpec, LightingMode,
    PipelineConfig, PipelineEnv, PipelineError, RunOptions,
};
use ego2robot::retarget::retarget_frame;

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_INVALID: u8 = 3;

#[derive(Parser)]
#[command(name = "ego2robot", version, about = "Turn egocentric hand frames into robot frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Augment every frame of an input manifest into a dataset.
    Augment(AugmentArgs),
    /// Retarget one record and print the result as JSON.
    Retarget(SingleArgs),
    /// Render one record and write overlay and composite PNGs.
    RenderPreview {
        #[command(flatten)]
        single: SingleArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score an embedding fixture and print the similarity report.
    Evaluate {
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check a written dataset, or a single input record.
    Validate {
        #[arg(long, conflicts_with = "record", required_unless_present = "record")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Write synthetic input records, images and an input manifest.
    Synth {
        #[arg(long)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 256)]
        size: u32,
    },
    /// Print the keyframe indices sampled from a video.
    SampleFrames {
        #[arg(long)]
        length: u64,
        #[arg(long, default_value_t = 16)]
        k: u64,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use a single embodiment: a config entry or a builtin (gripper, dexhand).
    #[arg(long, conflicts_with = "mix")]
    embodiment: Option<String>,
    /// Weighted embodiments, e.g. `gripper=0.5,dexhand=0.5`.
    #[arg(long)]
    mix: Option<String>,
    #[arg(long)]
    lighting: Option<LightingMode>,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    min_confidence: Option<f64>,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    input_manifest: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    cutmix: bool,
    #[arg(long)]
    sprite_dir: Option<PathBuf>,
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct SingleArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    record: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    fn io(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_IO, message: message.into() }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Failure {
        let code = match e {
            PipelineError::Config(_) | PipelineError::OutputExists(_) | PipelineError::DuplicateInput(_) => EXIT_USAGE,
            _ => EXIT_IO,
        };
        Failure { code, message: e.to_string() }
    }
}

fn embodiment_spec(cfg: &PipelineConfig, name: &str, weight: f64) -> Result<EmbodimentSpec, Failure> {
    if let Some(spec) = cfg.embodiments.get(name) {
        return Ok(EmbodimentSpec { weight, ..spec.clone() });
    }
    if ego2robot::fixtures::builtin(name).is_some() {
        return Ok(EmbodimentSpec::builtin(name, weight));
    }
    Err(Failure::usage(format!("unknown embodiment {name:?}")))
}

fn parse_mix(cfg: &PipelineConfig, mix: &str) -> Result<BTreeMap<String, EmbodimentSpec>, Failure> {
    let mut out = BTreeMap::new();
    for part in mix.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, weight) = match part.split_once('=') {
            Some((n, w)) => (n.trim(), w.trim().parse::<f64>().map_err(|_| Failure::usage(format!("bad weight in {part:?}")))?),
            None => (part, 1.0),
        };
        out.insert(name.to_string(), embodiment_spec(cfg, name, weight)?);
    }
    if out.is_empty() {
        return Err(Failure::usage("--mix names no embodiment"));
    }
    Ok(out)
}

fn load_config(args: &ConfigArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(name) = &args.embodiment {
        cfg.embodiments = BTreeMap::from([(name.clone(), embodiment_spec(&cfg, name, 1.0)?)]);
    }
    if let Some(mix) = &args.mix {
        cfg.embodiments = parse_mix(&cfg, mix)?;
    }
    if let Some(l) = args.lighting {
        cfg.lighting = l;
    }
    if args.strict {
        cfg.strict = true;
    }
    if let Some(c) = args.min_confidence {
        cfg.min_confidence = c;
    }
    Ok(cfg)
}

fn read_record(path: &Path, strict: bool) -> Result<FrameRecord, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
    parse_frame_record(&bytes, mode).map_err(|e| Failure { code: EXIT_INVALID, message: format!("{}: {e}", path.display()) })
}

fn augment(args: AugmentArgs) -> Result<u8, Failure> {
    let mut cfg = load_config(&args.config)?;
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if args.cutmix {
        cfg.cutmix = true;
    }
    if let Some(d) = args.sprite_dir {
        cfg.sprite_dir = Some(d);
    }
    if let Some(o) = args.output {
        cfg.output = Some(o);
    }
    let root = cfg.output.clone().ok_or_else(|| Failure::usage("--output is required when the config has none"))?;
    let env = PipelineEnv::new(cfg)?;
    let opts = RunOptions { resume: args.resume, stop_after: None };
    let (_, stats) = run_manifest(&args.input_manifest, &env, &root, &opts)?;
    println!("{stats}");
    Ok(if stats.failed_total() > 0 { EXIT_INVALID } else { 0 })
}

fn first_embodiment(env: &PipelineEnv) -> &ego2robot::pipeline::Embodiment {
    env.embodiments.values().next().expect("config validation requires one embodiment")
}

fn retarget(args: SingleArgs) -> Result<u8, Failure> {
    let env = PipelineEnv::new(load_config(&args.config)?)?;
    let record = read_record(&args.record, env.config.strict)?;
    let emb = first_embodiment(&env);
    let result = retarget_frame(&record, &emb.model, &emb.retarget).map_err(|e| Failure { code: EXIT_INVALID, message: e.to_string() })?;
    println!("{}", serde_json::to_string_pretty(&result).expect("results serialize"));
    Ok(0)
}

fn render_preview(args: SingleArgs, output: PathBuf) -> Result<u8, Failure> {
    let env = PipelineEnv::new(load_config(&args.config)?)?;
    let record = read_record(&args.record, env.config.strict)?;
    let emb = first_embodiment(&env);
    let light = frame_light(&env.config, &record.frame_id);
    let rendered = render_robot(&record, emb, &light)
        .map_err(|o| Failure { code: EXIT_INVALID, message: format!("{}: {:?}", record.frame_id, o.status()) })?;
    std::fs::create_dir_all(&output).map_err(|e| Failure::io(format!("{}: {e}", output.display())))?;
    let stem = &record.frame_id;
    let mut written = rendered.overlay.save_pngs(&output, stem).map_err(|e| Failure::io(e.to_string()))?;
    let base = args.record.parent().unwrap_or(Path::new("."));
    if let Ok(bg) = image::open(base.join(&record.background_path)) {
        let offset = match hand_wrist_pixel(&record) {
            Some(w) if env.config.alignment => alignment_offset(w, rendered.projected_wrist),
            _ => Default::default(),
        };
        if let Ok(img) = paste(&bg.to_rgb8(), &rendered.overlay, offset) {
            let p = output.join(format!("{stem}_composite.png"));
            write_atomic(&p, &encode_png(&img)).map_err(|e| Failure::io(e.to_string()))?;
            written.push(p);
        }
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(0)
}

fn evaluate(fixture: &Path, csv: Option<PathBuf>, json: Option<PathBuf>) -> Result<u8, Failure> {
    let f = EmbeddingFixture::load(fixture).map_err(|e| Failure { code: EXIT_INVALID, message: e.to_string() })?;
    let report = report_for_fixture(&f).map_err(|e| Failure { code: EXIT_INVALID, message: e.to_string() })?;
    print!("{}", report.to_table());
    for (path, text) in [(csv, report.to_csv()), (json, report.to_json())] {
        if let Some(p) = path {
            write_atomic(&p, text.as_bytes()).map_err(|e| Failure::io(e.to_string()))?;
        }
    }
    Ok(0)
}

fn validate(dataset: Option<PathBuf>, record: Option<PathBuf>) -> Result<u8, Failure> {
    let report = match (dataset, record) {
        (Some(root), _) => validate_dataset(&root),
        (None, Some(path)) => validate_frame(&read_record(&path, true)?),
        (None, None) => return Err(Failure::usage("pass --dataset or --record")),
    };
    println!("{report}");
    Ok(if report.ok { 0 } else { EXIT_INVALID })
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Augment(a) => augment(a),
        Command::Retarget(a) => retarget(a),
        Command::RenderPreview { single, output } => render_preview(single, output),
        Command::Evaluate { fixture, csv, json } => evaluate(&fixture, csv, json),
        Command::Validate { dataset, record } => validate(dataset, record),
        Command::Synth { count, seed, output, size } => {
            if size < 16 {
                return Err(Failure::usage("--size must be at least 16"));
            }
            let manifest = write_synthetic_inputs(&output, count, seed, size)?;
            println!("{}", manifest.display());
            Ok(0)
        }
        Command::SampleFrames { length, k } => {
            let idx: Vec<String> = sample_keyframes(length, k).iter().map(u64::to_string).collect();
            println!("{}", idx.join(" "));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
