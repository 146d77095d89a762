//! `odbench` command line. Every failure prints `ERROR <category>: <message>`
//! to stderr; the exit code is 0 on success, 2 for file I/O and decode
//! failures, 1 for everything else (including usage errors).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{pgd_attack, AttackConfig, TargetAssignment, ToyDetectorModel};
use crate::bench::{
    emit_plot_data, image_distances, load_manifest, parse_report_json, render_report, run, ReportFormat,
    ResizePolicy, DISTANCE_METRICS,
};
use crate::data::{load_image, resize_bilinear, ImageBuffer};
use crate::error::{Category, Error, Result};
use crate::mix::{compose, load_spec, verify};
use crate::perceptual::{aggregate, lpips_distance, LayerWeights, PerceptualFeatureSet};
use crate::util::{fixed, write_file};

/// Side length of the toy detector input.
pub const TOY_SIZE: u32 = 32;
const TOY_ANCHORS: usize = 4;
const TOY_CLASSES: usize = 3;

#[derive(Debug, Parser)]
#[command(name = "odbench", version, about = "Adversarial-attack benchmark for object detectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate every condition of a run manifest and write report.{csv,md,json} and plotdata.csv.
    Eval(EvalArgs),
    /// Compare two image trees pairwise (L1, L2, L_inf, PSNR, SSIM and optionally LPIPS).
    Perceptual(PerceptualArgs),
    /// Assign each source image to one mixture component and write the mixture manifest.
    Compose(ComposeArgs),
    /// Run PGD against a seeded toy detector and write the images and loss trace.
    AttackToy(AttackToyArgs),
    /// Re-render a stored report.json.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the manifest's IoU threshold, in (0, 1).
    #[arg(long = "iou-thr")]
    pub iou_thr: Option<f64>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PerceptualArgs {
    /// Directory of clean images.
    #[arg(long)]
    pub clean: PathBuf,
    /// Directory of adversarial images, mirroring --clean by relative path and stem.
    #[arg(long)]
    pub adv: PathBuf,
    /// Directory with clean/ and adv/ subdirectories of <stem>.pfeat files for LPIPS.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// PFW layer weights for LPIPS (default: all ones).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Directory for perceptual.csv and perceptual_summary.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Mixture spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Shuffle seed; overrides the seed in the mixture file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for mixture.csv and mixture.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Also hard-link (or copy) the assigned files into <out>/<component>/.
    #[arg(long)]
    pub materialize: bool,
}

#[derive(Debug, Args)]
pub struct AttackToyArgs {
    /// Seed for the toy model, the clean image and the labels.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// L_inf budget in [0, 1] pixel units (8/255 is about 0.0314).
    #[arg(long, default_value_t = 8.0 / 255.0)]
    pub eps: f64,
    /// PGD iterations.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Step size (default: 2.5 * eps / steps).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Pull predictions toward shifted class labels instead of away from the true ones.
    #[arg(long)]
    pub targeted: bool,
    /// Clean image to attack, resized to the toy input size (default: seeded noise).
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Stored report.json.
    pub report: PathBuf,
    /// csv, markdown or json.
    #[arg(long, default_value = "markdown")]
    pub format: String,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code_for(category: &str) -> i32 {
    match category {
        "io" | "decode" => Category::Io.exit_code(),
        _ => Category::Validation.exit_code(),
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    let mut manifest = load_manifest(&args.manifest)?;
    if let Some(thr) = args.iou_thr {
        manifest.set_iou_threshold(thr)?;
    }
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::Argument("--workers must be at least 1".into()));
    }
    let report = run(&manifest, workers)?;
    for format in [ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::Json] {
        write_file(&args.out.join(format.file_name()), render_report(&report, format)?)?;
    }
    write_file(&args.out.join("plotdata.csv"), emit_plot_data(&report))?;
    let mut code = 0;
    for f in &report.failures {
        eprintln!("ERROR {}: [{}/{}] {}", f.category, f.attack, f.model, f.message);
        code = code.max(exit_code_for(&f.category));
    }
    Ok(code)
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Image files under `root`, keyed by relative path without extension.
fn image_tree(root: &Path) -> Result<BTreeMap<PathBuf, PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, PathBuf>) -> Result<()> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
                continue;
            }
            let is_image = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
            if is_image {
                let rel = path.strip_prefix(root).unwrap_or(&path).with_extension("");
                out.insert(rel, path);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out)?;
    Ok(out)
}

fn cmd_perceptual(args: &PerceptualArgs) -> Result<i32> {
    let clean = image_tree(&args.clean)?;
    let adv = image_tree(&args.adv)?;
    let unmatched: Vec<PathBuf> = clean
        .iter()
        .filter(|(k, _)| !adv.contains_key(*k))
        .chain(adv.iter().filter(|(k, _)| !clean.contains_key(*k)))
        .map(|(_, p)| p.clone())
        .collect();
    if !unmatched.is_empty() {
        let list: Vec<String> = unmatched.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::Validation(format!("unmatched files: {}", list.join(", "))));
    }
    if clean.is_empty() {
        return Err(Error::Validation(format!("no images under {}", args.clean.display())));
    }
    let weights = args.weights.as_deref().map(LayerWeights::read).transpose()?;

    let with_lpips = args.features.is_some();
    let metrics: Vec<&str> = DISTANCE_METRICS
        .iter()
        .copied()
        .filter(|m| with_lpips || *m != "lpips")
        .collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); metrics.len()];
    let mut csv = format!("image,{}\n", metrics.join(","));
    for (key, clean_path) in &clean {
        let a = load_image(clean_path)?;
        let b = load_image(&adv[key])?;
        let mut values = image_distances(&a, &b, ResizePolicy::NativeLinf)?.to_vec();
        if let Some(dir) = &args.features {
            let name = key.with_extension("pfeat");
            let fa = PerceptualFeatureSet::read(&dir.join("clean").join(&name))?;
            let fb = PerceptualFeatureSet::read(&dir.join("adv").join(&name))?;
            let w = weights.clone().unwrap_or_else(|| LayerWeights::uniform(&fa));
            values.push(lpips_distance(&fa, &fb, &w)?);
        }
        let cells: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
        csv.push_str(&format!("{},{}\n", key.display(), cells.join(",")));
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v);
        }
    }

    let mut summary = BTreeMap::new();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (name, col) in metrics.iter().zip(&columns) {
        let stats = aggregate(col)?;
        let _ = writeln!(out, "{name}\t{stats}");
        summary.insert(*name, stats);
    }
    if let Some(dir) = &args.out {
        write_file(&dir.join("perceptual.csv"), csv)?;
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| Error::Argument(format!("cannot serialize summary: {e}")))?;
        write_file(&dir.join("perceptual_summary.json"), json + "\n")?;
    }
    Ok(0)
}

fn cmd_compose(args: &ComposeArgs) -> Result<i32> {
    let spec = load_spec(&args.spec)?;
    let seed = args
        .seed
        .or(spec.seed)
        .ok_or_else(|| Error::Argument("no seed: pass --seed or set \"seed\" in the mixture file".into()))?;
    let manifest = compose(&spec, seed)?;
    let violations = verify(&manifest, &spec);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::Integrity(list.join("; ")));
    }
    manifest.write(&args.out)?;
    if args.materialize {
        manifest.materialize(&args.out)?;
    }
    for (tag, count) in &manifest.counts {
        println!("{tag}\t{count}");
    }
    Ok(0)
}

fn cmd_attack_toy(args: &AttackToyArgs) -> Result<i32> {
    let model = ToyDetectorModel::seeded(TOY_SIZE as usize, TOY_SIZE as usize, TOY_ANCHORS, TOY_CLASSES, args.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(1));
    let clean = match &args.clean {
        Some(path) => resize_bilinear(&load_image(path)?, TOY_SIZE, TOY_SIZE)?,
        None => {
            use rand::Rng;
            let pixels = (0..model.input_len()).map(|_| rng.random::<u8>()).collect();
            ImageBuffer::new(TOY_SIZE, TOY_SIZE, pixels)?
        }
    };
    let targets = TargetAssignment::random(TOY_ANCHORS, TOY_CLASSES, &mut rng);
    let mut config = AttackConfig::pgd(args.eps, args.steps);
    if let Some(alpha) = args.alpha {
        config.step_size = alpha;
    }
    if args.targeted {
        config = config.targeted(targets.shifted_classes(TOY_CLASSES));
    }
    let result = pgd_attack(&model, &clean.to_unit(), &targets, &config)?;
    let adversarial = ImageBuffer::from_unit(TOY_SIZE, TOY_SIZE, &result.x_star)?;

    clean.save_png(&args.out.join("clean.png"))?;
    adversarial.save_png(&args.out.join("adversarial.png"))?;
    write_file(&args.out.join("loss_trace.csv"), result.trace_csv())?;

    let int_linf = clean
        .pixels()
        .iter()
        .zip(adversarial.pixels())
        .map(|(a, b)| a.abs_diff(*b))
        .max()
        .unwrap_or(0);
    let first = result.loss_trace.first().map_or(f64::NAN, |t| t.objective);
    println!("objective\t{} -> {}", fixed(first, 6), fixed(result.final_objective(), 6));
    println!("linf\t{} ({int_linf}/255)", fixed(result.achieved_linf, 6));
    Ok(0)
}

fn cmd_render(args: &RenderArgs) -> Result<i32> {
    let format: ReportFormat = args.format.parse()?;
    let text = std::fs::read_to_string(&args.report).map_err(|e| Error::io(&args.report, e))?;
    let report = parse_report_json(&text)?;
    let bytes = render_report(&report, format)?;
    match &args.out {
        Some(path) => write_file(path, bytes)?,
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    Ok(0)
}

pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Perceptual(a) => cmd_perceptual(a),
        Command::Compose(a) => cmd_compose(a),
        Command::AttackToy(a) => cmd_attack_toy(a),
        Command::Render(a) => cmd_render(a),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            eprintln!("ERROR usage: {}", first.trim_start_matches("error: "));
            eprintln!("{}", text.lines().skip(1).collect::<Vec<_>>().join("\n"));
            return 1;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            let category = e.category();
            eprintln!("ERROR {category}: {e}");
            category.exit_code()
        }
    }
}
