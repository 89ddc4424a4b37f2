//! Command-line front end.
//!
//! Exit codes: 0 on success (including `--help`), 1 on a usage error, 2 when
//! an input file or value cannot be processed.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use pave_forge_core::boxes::{box_loss, BBox, LossKind};
use pave_forge_core::gan::{
    adversarial_loss, cycle_consistency_loss, total_cyclegan_objective, CyclePair, ScoreBatch, DEFAULT_LAMBDA_CYC,
};
use pave_forge_core::metrics::{evaluate, peak_flops, ApMethod, BlockKind, BlockSpec, EvalReport, DEFAULT_IOU_THRESHOLD};
use pave_forge_core::pyramid::{make_weight_map, WeightMap, DEFAULT_FEATHER_SIGMA, DEFAULT_LEVELS};
use pave_forge_core::scharr::{compute_gradients, extract_feature_mask, DEFAULT_MASK_QUANTILE, DEFAULT_SALIENCE_THRESHOLD};
use pave_forge_core::{Image, Shape};
use serde::Serialize;

use crate::blocks::{checksum, BlockInstance};
use crate::formats::{
    parse_detections, parse_ground_truths, parse_scores, read_text, Manifest, MaskMode, PipelineConfig, Ratios,
    YoloLabel, MANIFEST_FILE,
};
use crate::io::{load_image, save_image};
use crate::pipeline::{feature_rect, fuse_onto, rect_mask, run_augment, score_image};
use crate::split::{materialize, split_dataset};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "pave-forge", version, about = "Pavement-damage augmentation and detection-math toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score an image's gradient salience and report its feature rectangle.
    Salience(SalienceArgs),
    /// Fuse a damage image onto a background with a multiband blend.
    Fuse(FuseArgs),
    /// Evaluate CycleGAN adversarial, cycle-consistency and total losses.
    GanLoss(GanLossArgs),
    /// Run one seeded attention block and print its cost.
    Block(BlockArgs),
    /// Box regression loss and its gradient for one prediction.
    Boxloss(BoxLossArgs),
    /// Precision, recall, AP and mAP for a detection file against ground truth.
    Eval(EvalArgs),
    /// Build a labelled, split dataset from a config file.
    Augment(AugmentArgs),
    /// Re-split an existing augmentation output directory.
    Split(SplitArgs),
    /// Time the attention blocks and report achieved and peak FLOP rates.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SalienceArgs {
    /// Input image (PNG, PPM or PGM).
    #[arg(long)]
    image: PathBuf,
    /// Minimum normalised mean gradient magnitude to pass.
    #[arg(long, default_value_t = DEFAULT_SALIENCE_THRESHOLD)]
    threshold: f64,
    /// Magnitude quantile a pixel must reach to join the feature mask.
    #[arg(long, default_value_t = DEFAULT_MASK_QUANTILE)]
    quantile: f64,
    /// Write the feature mask as a black/white PNG.
    #[arg(long)]
    mask_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FuseArgs {
    /// Damage (foreground) image.
    #[arg(long)]
    foreground: PathBuf,
    /// Background image, resized to the foreground's size.
    #[arg(long)]
    background: PathBuf,
    /// Output image path; the format follows the extension.
    #[arg(long)]
    out: PathBuf,
    /// Pyramid levels (capped by the image size).
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    levels: usize,
    /// Feathering sigma of the weight map, in pixels.
    #[arg(long, default_value_t = DEFAULT_FEATHER_SIGMA)]
    sigma: f64,
    /// Magnitude quantile defining the feature rectangle.
    #[arg(long, default_value_t = DEFAULT_MASK_QUANTILE)]
    quantile: f64,
    /// `feature` blends the feature rectangle; `full` keeps the whole foreground.
    #[arg(long, default_value = "feature")]
    mask_mode: String,
    /// Class id written in the printed label line.
    #[arg(long, default_value_t = 0)]
    class: u32,
}

#[derive(Args, Debug)]
struct GanLossArgs {
    /// Scores of the discriminator on domain Y, under [real] and [fake] headers.
    #[arg(long)]
    scores: PathBuf,
    /// Scores of the discriminator on domain X, same format.
    #[arg(long)]
    scores_x: Option<PathBuf>,
    /// Image from domain X.
    #[arg(long, requires = "x_rec")]
    x: Option<PathBuf>,
    /// Its reconstruction F(G(x)).
    #[arg(long, requires = "x")]
    x_rec: Option<PathBuf>,
    /// Image from domain Y.
    #[arg(long, requires = "y_rec")]
    y: Option<PathBuf>,
    /// Its reconstruction G(F(y)).
    #[arg(long, requires = "y")]
    y_rec: Option<PathBuf>,
    /// Weight of the cycle-consistency term.
    #[arg(long, default_value_t = DEFAULT_LAMBDA_CYC)]
    lambda: f64,
}

#[derive(Args, Debug)]
struct BlockArgs {
    /// cbam, se, aspp or asse.
    #[arg(long)]
    kind: String,
    /// Input shape as N,C,H,W.
    #[arg(long)]
    shape: String,
    /// Seed for the input and parameters.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bottleneck reduction (default gcd(C, 16)).
    #[arg(long)]
    reduction: Option<usize>,
}

#[derive(Args, Debug)]
struct BoxLossArgs {
    /// Predicted box as x1,y1,x2,y2.
    #[arg(long, allow_hyphen_values = true)]
    pred: String,
    /// Ground-truth box as x1,y1,x2,y2.
    #[arg(long, allow_hyphen_values = true)]
    gt: String,
    /// iou, ciou or eiou.
    #[arg(long, default_value = "ciou")]
    kind: String,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Detections: `image_id class conf x1 y1 x2 y2` per line.
    #[arg(long)]
    dets: PathBuf,
    /// Ground truth: `image_id class x1 y1 x2 y2` per line.
    #[arg(long)]
    gts: PathBuf,
    /// IoU needed for a match.
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    iou: f64,
    /// True-negative count (e.g. damage-free images with no detections); enables accuracy.
    #[arg(long)]
    tn: Option<u64>,
    /// Use 11-point interpolated AP instead of the all-point area.
    #[arg(long)]
    eleven_point: bool,
    /// Write the JSON report here instead of after the text report on stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Pipeline config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Output directory of a previous augment run (holds manifest.tsv).
    #[arg(long)]
    dir: PathBuf,
    /// train,test,val ratios.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    ratios: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Block to time; all four when omitted.
    #[arg(long)]
    kind: Option<String>,
    /// Input shape as N,C,H,W.
    #[arg(long, default_value = "1,32,32,32")]
    shape: String,
    /// Timed forward passes per block.
    #[arg(long, default_value_t = 5)]
    iters: u32,
    /// Cores for the peak figure (defaults to the available parallelism).
    #[arg(long)]
    cores: Option<u64>,
    /// Clock speed in GHz for the peak figure.
    #[arg(long, default_value_t = 3.0)]
    clock_ghz: f64,
    /// Floating-point operations per core per cycle.
    #[arg(long, default_value_t = 16)]
    ops_per_cycle: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let mut out = String::new();
    match dispatch(cli.command, &mut out) {
        Ok(()) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e) => {
            print!("{out}");
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}

fn dispatch(command: Command, out: &mut String) -> Result<()> {
    match command {
        Command::Salience(a) => salience(a, out),
        Command::Fuse(a) => fuse_cmd(a, out),
        Command::GanLoss(a) => gan_loss(a, out),
        Command::Block(a) => block(a, out),
        Command::Boxloss(a) => boxloss(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Augment(a) => augment(a, out),
        Command::Split(a) => split(a, out),
        Command::Bench(a) => bench(a, out),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, n: usize, what: &str) -> Result<Vec<T>> {
    let v: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow!("bad {what} `{s}`"))?;
    if v.len() != n {
        bail!("{what} needs {n} comma-separated values, got `{s}`");
    }
    Ok(v)
}

fn parse_shape(s: &str) -> Result<Shape> {
    let v = parse_list::<usize>(s, 4, "shape")?;
    Ok(Shape::new(v[0], v[1], v[2], v[3]))
}

fn parse_box(s: &str) -> Result<BBox> {
    let v = parse_list::<f64>(s, 4, "box")?;
    Ok(BBox::new(v[0], v[1], v[2], v[3])?)
}

fn block_spec(kind: &str, shape: &str, reduction: Option<usize>) -> Result<BlockSpec> {
    let kind: BlockKind = kind.parse()?;
    let mut spec = BlockSpec::new(kind, parse_shape(shape)?)?;
    if let Some(r) = reduction {
        spec.reduction = r;
        spec.validate()?;
    }
    Ok(spec)
}

fn salience(a: SalienceArgs, out: &mut String) -> Result<()> {
    let image = load_image(&a.image)?;
    let report = score_image(&image, a.threshold).with_context(|| format!("{}", a.image.display()))?;
    let field = compute_gradients(&image.to_grayscale())?;
    let mask = extract_feature_mask(&field, a.quantile)?;
    writeln!(out, "image: {}", a.image.display())?;
    writeln!(out, "score: {:.6}", report.score)?;
    writeln!(out, "threshold: {}", report.threshold)?;
    writeln!(out, "passed: {}", report.passed)?;
    match mask.bounds {
        Some(r) => writeln!(out, "bounds: top {} left {} bottom {} right {}", r.top, r.left, r.bottom, r.right)?,
        None => writeln!(out, "bounds: none (no gradient features)")?,
    }
    if let Some(path) = a.mask_out {
        let values = mask.mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        save_image(&path, &Image::new(mask.mask.height(), mask.mask.width(), 1, values)?)?;
        writeln!(out, "mask: {}", path.display())?;
    }
    Ok(())
}

fn fuse_cmd(a: FuseArgs, out: &mut String) -> Result<()> {
    let mode: MaskMode = a.mask_mode.parse()?;
    let fg = load_image(&a.foreground)?;
    let bg = load_image(&a.background)?;
    let (h, w) = (fg.height(), fg.width());
    let rect = feature_rect(&fg, a.quantile)
        .with_context(|| format!("{}", a.foreground.display()))?
        .ok_or_else(|| anyhow!("{}: no gradient features to fuse", a.foreground.display()))?;
    let weight = match mode {
        MaskMode::Feature => make_weight_map(&rect_mask(h, w, &rect)?, a.sigma)?,
        MaskMode::Full => WeightMap::uniform(h, w, 1.0)?,
    };
    let fused = fuse_onto(&fg, &bg, &weight, a.levels)?;
    save_image(&a.out, &fused)?;
    let label = YoloLabel::from_pixel_box(
        a.class,
        rect.left as f64,
        rect.top as f64,
        (rect.right + 1) as f64,
        (rect.bottom + 1) as f64,
        w,
        h,
    );
    writeln!(out, "wrote {} ({}x{}x{})", a.out.display(), h, w, fused.channels())?;
    writeln!(out, "label: {label}")?;
    Ok(())
}

fn score_batch(path: &Path) -> Result<ScoreBatch> {
    let (real, fake) = parse_scores(&read_text(path)?).with_context(|| format!("{}", path.display()))?;
    ScoreBatch::new(real, fake).with_context(|| format!("{}", path.display()))
}

fn cycle_term(x: &Path, x_rec: &Path) -> Result<(pave_forge_core::Tensor, pave_forge_core::Tensor)> {
    let (a, b) = (load_image(x)?, load_image(x_rec)?);
    if !a.same_dims(&b) {
        bail!("{} and {} differ in size or channels", x.display(), x_rec.display());
    }
    Ok((a.to_tensor(), b.to_tensor()))
}

fn gan_loss(a: GanLossArgs, out: &mut String) -> Result<()> {
    let adv_y = adversarial_loss(&score_batch(&a.scores)?);
    writeln!(out, "adversarial (D_Y): {adv_y:.6}")?;
    let adv_x = a.scores_x.as_deref().map(score_batch).transpose()?.map(|b| adversarial_loss(&b));
    if let Some(v) = adv_x {
        writeln!(out, "adversarial (D_X): {v:.6}")?;
    }
    let cyc = match (&a.x, &a.x_rec, &a.y, &a.y_rec) {
        (Some(x), Some(xr), Some(y), Some(yr)) => {
            let (x, xr) = cycle_term(x, xr)?;
            let (y, yr) = cycle_term(y, yr)?;
            let l = cycle_consistency_loss(&CyclePair::new(&x, &xr)?, &CyclePair::new(&y, &yr)?);
            writeln!(out, "cycle consistency: {l:.6}")?;
            Some(l)
        }
        (None, None, None, None) => None,
        _ => bail!("cycle loss needs all of --x, --x-rec, --y, --y-rec"),
    };
    if let (Some(ax), Some(c)) = (adv_x, cyc) {
        let total = total_cyclegan_objective(adv_y, ax, c, a.lambda)?;
        writeln!(out, "total (lambda {}): {total:.6}", a.lambda)?;
    }
    Ok(())
}

fn block(a: BlockArgs, out: &mut String) -> Result<()> {
    let spec = block_spec(&a.kind, &a.shape, a.reduction)?;
    let inst = BlockInstance::seeded(spec, a.seed)?;
    let y = inst.forward()?;
    let cost = inst.cost()?;
    writeln!(out, "block: {}", spec.kind)?;
    writeln!(out, "input: {}", spec.input)?;
    writeln!(out, "output: {}", y.shape())?;
    writeln!(out, "checksum: {:.12}", checksum(&y))?;
    writeln!(out, "params: {}", cost.params)?;
    writeln!(
        out,
        "flops: {} (conv {}, dense {}, elementwise {})",
        cost.flops(),
        cost.conv_flops,
        cost.dense_flops,
        cost.elementwise_flops
    )?;
    Ok(())
}

fn boxloss(a: BoxLossArgs, out: &mut String) -> Result<()> {
    let kind: LossKind = a.kind.parse()?;
    let (p, g) = (parse_box(&a.pred)?, parse_box(&a.gt)?);
    let l = box_loss(kind, &p, &g);
    let [dx1, dy1, dx2, dy2] = l.gradient;
    writeln!(out, "loss: {:.9}", l.value)?;
    writeln!(out, "gradient: x1 {dx1:.9} y1 {dy1:.9} x2 {dx2:.9} y2 {dy2:.9}")?;
    Ok(())
}

#[derive(Serialize)]
struct JsonClass {
    class_id: u32,
    ap: Option<f64>,
    ground_truths: usize,
    detections: usize,
    tp: usize,
    fp: usize,
    fn_: usize,
}

#[derive(Serialize)]
struct JsonReport {
    iou_threshold: f64,
    interpolation: &'static str,
    map: f64,
    precision: f64,
    recall: f64,
    accuracy: Option<f64>,
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: Option<u64>,
    classes: Vec<JsonClass>,
    warnings: Vec<String>,
}

impl From<&EvalReport> for JsonReport {
    fn from(r: &EvalReport) -> Self {
        Self {
            iou_threshold: r.iou_threshold,
            interpolation: match r.method {
                ApMethod::AllPoint => "all-point",
                ApMethod::ElevenPoint => "11-point",
            },
            map: r.map,
            precision: r.precision,
            recall: r.recall,
            accuracy: r.accuracy,
            tp: r.tp,
            fp: r.fp,
            fn_: r.fn_,
            tn: r.tn,
            classes: r
                .classes
                .iter()
                .map(|c| JsonClass {
                    class_id: c.class_id,
                    ap: c.ap,
                    ground_truths: c.ground_truths,
                    detections: c.detections,
                    tp: c.tp,
                    fp: c.fp,
                    fn_: c.fn_,
                })
                .collect(),
            warnings: r.warnings.iter().map(ToString::to_string).collect(),
        }
    }
}

fn eval(a: EvalArgs, out: &mut String) -> Result<()> {
    let dets = parse_detections(&read_text(&a.dets)?).with_context(|| format!("{}", a.dets.display()))?;
    let gts = parse_ground_truths(&read_text(&a.gts)?).with_context(|| format!("{}", a.gts.display()))?;
    let method = if a.eleven_point {
        ApMethod::ElevenPoint
    } else {
        ApMethod::AllPoint
    };
    let r = evaluate(&dets, &gts, a.iou, method, a.tn)?;
    writeln!(out, "class  AP        GT    dets  TP    FP    FN")?;
    for c in &r.classes {
        let ap = c.ap.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        writeln!(
            out,
            "{:<6} {:<9} {:<5} {:<5} {:<5} {:<5} {}",
            c.class_id, ap, c.ground_truths, c.detections, c.tp, c.fp, c.fn_
        )?;
    }
    let label = if a.eleven_point { "11-point" } else { "all-point" };
    writeln!(out, "mAP@{} ({label}): {:.6}", a.iou, r.map)?;
    writeln!(out, "precision: {:.6}", r.precision)?;
    writeln!(out, "recall: {:.6}", r.recall)?;
    if let Some(acc) = r.accuracy {
        writeln!(out, "accuracy: {acc:.6}")?;
    }
    for w in &r.warnings {
        writeln!(out, "warning: {w}")?;
    }
    let json = serde_json::to_string_pretty(&JsonReport::from(&r))?;
    match a.report {
        Some(path) => {
            std::fs::write(&path, json + "\n").with_context(|| format!("cannot write {}", path.display()))?;
            writeln!(out, "report: {}", path.display())?;
        }
        None => writeln!(out, "\n{json}")?,
    }
    Ok(())
}

fn augment(a: AugmentArgs, out: &mut String) -> Result<()> {
    let cfg = PipelineConfig::from_file(&a.config)?;
    let outcome = run_augment(&cfg)?;
    for s in outcome.excluded() {
        writeln!(out, "excluded {} (score {:.6} < {})", s.name, s.report.score, s.report.threshold)?;
    }
    for w in &outcome.split_warnings {
        writeln!(out, "warning: {w}")?;
    }
    summarize(&outcome.manifest, &cfg.output_dir, out)
}

fn summarize(m: &Manifest, dir: &Path, out: &mut String) -> Result<()> {
    use crate::formats::Split;
    let count = |s: Split| m.records.iter().filter(|r| r.split == Some(s)).count();
    writeln!(
        out,
        "{} images: train {}, test {}, val {}",
        m.records.len(),
        count(Split::Train),
        count(Split::Test),
        count(Split::Val)
    )?;
    writeln!(out, "manifest: {}", dir.join(MANIFEST_FILE).display())?;
    Ok(())
}

fn split(a: SplitArgs, out: &mut String) -> Result<()> {
    let ratios: Ratios = a.ratios.parse()?;
    let path = a.dir.join(MANIFEST_FILE);
    let mut m = Manifest::read(&path)?;
    for w in split_dataset(&mut m, &ratios, a.seed) {
        writeln!(out, "warning: {w}")?;
    }
    materialize(&a.dir, &mut m)?;
    m.write(&path)?;
    summarize(&m, &a.dir, out)
}

fn bench(a: BenchArgs, out: &mut String) -> Result<()> {
    let kinds = match &a.kind {
        Some(k) => vec![k.parse::<BlockKind>()?],
        None => BlockKind::ALL.to_vec(),
    };
    if a.iters == 0 {
        bail!("--iters must be at least 1");
    }
    let cores = a
        .cores
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get() as u64));
    for kind in kinds {
        let spec = block_spec(kind.name(), &a.shape, None)?;
        let inst = BlockInstance::seeded(spec, a.seed)?;
        let flops = inst.cost()?.flops();
        let start = Instant::now();
        for _ in 0..a.iters {
            std::hint::black_box(inst.forward()?);
        }
        let secs = start.elapsed().as_secs_f64() / a.iters as f64;
        writeln!(
            out,
            "{:<5} {}  {:>10.3} ms/pass  {:>14} FLOPs  {:>8.3} GFLOP/s",
            kind.name(),
            spec.input,
            secs * 1e3,
            flops,
            flops as f64 / secs.max(1e-12) / 1e9
        )?;
    }
    let peak = peak_flops(cores, a.clock_ghz * 1e9, a.ops_per_cycle);
    writeln!(
        out,
        "peak = cores x clock x ops/cycle = {cores} x {} GHz x {} = {:.3} GFLOP/s",
        a.clock_ghz,
        a.ops_per_cycle,
        peak / 1e9
    )?;
    Ok(())
}
