use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lesionseg::data::{write_synthetic, Dataset, SplitSpec};
use lesionseg::gradcheck::{run_suite, GradCheckConfig};
use lesionseg::model::{checkpoint, profile, ModelConfig, Variant};
use lesionseg::objectives::write_metrics_jsonl;
use lesionseg::train::{checkpoint_split, evaluate, predict, select, train_with, DatasetSource, SplitKind, TrainConfig};
use lesionseg::{Error, Result};

#[derive(Parser)]
#[command(name = "lesionseg", version, about = "Skin-lesion segmentation: train, evaluate, predict, profile")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from scratch; every flag overrides its config key.
    Train(TrainArgs),
    /// Per-image DSC/IoU of a checkpoint as JSONL, summary row last.
    Evaluate(EvaluateArgs),
    /// Write binary mask and overlay PNGs for each matching image.
    Predict(PredictArgs),
    /// Per-layer parameter and FLOP counts as CSV.
    Profile(ProfileArgs),
    /// Finite-difference gradient checks; exits nonzero on any failure.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic image/mask dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// JSON training configuration (missing keys take their defaults).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: default, smoke or overfit.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory with images/ and masks/ (replaces the configured dataset).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Split preset (isic2018, ph2) for the training dataset.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory with images/ and masks/.
    #[arg(long)]
    dataset: PathBuf,
    /// train, test or all.
    #[arg(long, default_value = "test")]
    split: SplitKind,
    /// Split preset overriding the checkpoint's stored split.
    #[arg(long, conflicts_with_all = ["train_count", "test_count"])]
    split_preset: Option<String>,
    #[arg(long, requires = "test_count")]
    train_count: Option<usize>,
    #[arg(long, requires = "train_count")]
    test_count: Option<usize>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// JSONL destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Glob pattern, e.g. 'data/images/*.jpg'.
    #[arg(long)]
    images: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long, default_value = "full")]
    variant: Variant,
    /// Input size as HxW.
    #[arg(long, default_value = "192x256", value_parser = parse_size)]
    input: (usize, usize),
    #[arg(long, default_value_t = 16)]
    base_channels: usize,
    /// Only the totals and the comparison rows.
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Run only the checks whose name contains this string.
    #[arg(long)]
    module: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image size as HxW.
    #[arg(long, default_value = "192x256", value_parser = parse_size)]
    size: (usize, usize),
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad size '{s}': {e}"));
    Ok((parse(h)?, parse(w)?))
}

/// Reference params (millions) and GFLOPs per variant at 192×256.
const REPORTED: [(Variant, f64, f64); 4] = [
    (Variant::Full, 8.00, 2.09),
    (Variant::NoAttention, 7.60, 1.82),
    (Variant::NoVss, 7.92, 0.33),
    (Variant::Plain, 7.52, 0.06),
];

fn run_train(a: TrainArgs) -> Result<()> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => TrainConfig::from_json_file(path)?,
        (None, Some(name)) => TrainConfig::preset(name)?,
        (None, None) => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(path) = a.dataset {
        cfg.dataset = DatasetSource::Dir { path };
    }
    if let Some(v) = a.variant {
        cfg.model.variant = v;
    }
    if let Some(name) = &a.split {
        cfg.split = SplitSpec::preset(name)?;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if a.max_iterations.is_some() {
        cfg.max_iterations = a.max_iterations;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    if let Some(bs) = a.batch_size {
        cfg.batch_size = bs;
    }
    if let Some(out) = a.out {
        cfg.out_dir = out;
    }
    let outcome = train_with(&cfg, |row| {
        eprintln!(
            "epoch {:>4}  loss {:.5}  dsc {:.4}  iou {:.4}  lr {:.3e}",
            row.epoch, row.train_loss, row.test_dsc, row.test_iou, row.lr
        );
    })?;
    println!(
        "{}",
        serde_json::json!({
            "out_dir": outcome.out_dir,
            "epochs": outcome.epochs.len(),
            "steps": outcome.step_losses.len(),
            "best_dsc": outcome.best_dsc,
        })
    );
    Ok(())
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    let net = checkpoint::load::<f32>(&a.checkpoint)?;
    let target = (net.config.input_height, net.config.input_width);
    let dataset = Dataset::load_dir(&a.dataset, target)?;
    let mut spec = match (&a.split_preset, a.train_count, a.test_count) {
        (Some(name), _, _) => Some(SplitSpec::preset(name)?),
        (None, Some(tr), Some(te)) => Some(SplitSpec::new(tr, te)),
        _ => checkpoint_split(&a.checkpoint)?,
    };
    if let (Some(s), Some(seed)) = (spec.as_mut(), a.split_seed) {
        s.seed = seed;
    }
    let indices = select(dataset.len(), a.split, spec.as_ref())?;
    let (records, summary) = evaluate(&net, &dataset, &indices, a.batch_size)?;
    match &a.out {
        Some(path) => {
            let f = File::create(path).map_err(|e| Error::io(path, e))?;
            write_metrics_jsonl(BufWriter::new(f), &records, &summary).map_err(|e| Error::io(path, e))?;
            eprintln!(
                "{} images  mean dsc {:.4}  mean iou {:.4}",
                summary.images, summary.mean_dsc, summary.mean_iou
            );
        }
        None => write_metrics_jsonl(io::stdout().lock(), &records, &summary).map_err(|e| Error::io("<stdout>", e))?,
    }
    Ok(())
}

/// Returns the number of inputs that failed.
fn run_predict(a: PredictArgs) -> Result<usize> {
    let paths = glob::glob(&a.images).map_err(|e| Error::Usage(format!("bad glob '{}': {e}", a.images)))?;
    let mut images = Vec::new();
    for p in paths {
        images.push(p.map_err(|e| { let path = e.path().to_path_buf(); Error::io(path, e.into()) })?);
    }
    if images.is_empty() {
        return Err(Error::Usage(format!("no files match '{}'", a.images)));
    }
    let net = checkpoint::load::<f32>(&a.checkpoint)?;
    let mut failed = 0;
    for p in predict(&net, &images, &a.out)? {
        match p.result {
            Ok((mask, _)) => println!("{} -> {}", p.input.display(), mask.display()),
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e}", p.input.display());
            }
        }
    }
    Ok(failed)
}

fn run_profile(a: ProfileArgs) -> Result<()> {
    let cfg = ModelConfig {
        input_height: a.input.0,
        input_width: a.input.1,
        base_channels: a.base_channels,
        ..ModelConfig::default()
    }
    .with_variant(a.variant);
    let p = profile(&cfg)?;
    let mut out = io::stdout().lock();
    let w = |out: &mut io::StdoutLock, s: String| writeln!(out, "{s}").map_err(|e| Error::io("<stdout>", e));
    if !a.summary {
        write!(out, "{}", p.to_csv()).map_err(|e| Error::io("<stdout>", e))?;
    }
    w(&mut out, format!("total,{},{}", p.total_params(), p.total_flops()))?;
    w(&mut out, String::new())?;
    w(&mut out, "source,variant,input,params_m,gflops,note".into())?;
    w(
        &mut out,
        format!(
            "measured,{},{}x{},{:.2},{:.2},",
            a.variant,
            a.input.0,
            a.input.1,
            p.total_params() as f64 / 1e6,
            p.total_flops() as f64 / 1e9
        ),
    )?;
    let (_, params, gflops) = REPORTED.iter().find(|r| r.0 == a.variant).expect("every variant is listed");
    let note = if a.variant == Variant::Plain {
        "paper-reported; FLOP figure not reproducible by direct counting"
    } else {
        "paper-reported; FLOP convention unstated"
    };
    w(&mut out, format!("paper-reported,{},192x256,{params:.2},{gflops:.2},{note}", a.variant))
}

fn run_gradcheck(a: GradcheckArgs) -> Result<bool> {
    let results = run_suite(a.module.as_deref(), &GradCheckConfig::default())?;
    let mut ok = true;
    for r in &results {
        ok &= r.passed;
        println!(
            "{:<24} {}  max rel error {:.2e} (tol {:.0e}) over {} elements, worst {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.max_rel_error,
            r.tolerance,
            r.checked,
            r.worst
        );
    }
    Ok(ok)
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let ids = write_synthetic(&a.out, a.count, a.seed, a.size)?;
    println!("wrote {} pairs to {}", ids.len(), a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run_train(a).map(|_| true),
        Command::Evaluate(a) => run_evaluate(a).map(|_| true),
        Command::Predict(a) => run_predict(a).map(|failed| failed == 0),
        Command::Profile(a) => run_profile(a).map(|_| true),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Synth(a) => run_synth(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
