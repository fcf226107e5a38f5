use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hiwin_core::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use hiwin_core::encoder::{load_features, save_features, EncoderKind, EncoderSpec, Origin, DEFAULT_CHANNELS};
use hiwin_core::hiwin_attn::{AttnParams, HiwinConfig};
use hiwin_core::image_io::{load_ppm, resize_to_patch_multiple, save_ppm, synth_corpus, Image, PATCH};
use hiwin_core::numerics::pca_rgb;
use hiwin_core::pipeline::{image_isp, run_pipeline, PipelineConfig, PipelineOutput, Projector};
use hiwin_core::token_org::{flatten, index_map_text, save_tokens};
use hiwin_core::vdim::{pretrain_vdim, DownsamplerParams, TrainConfig, VdimParams};
use hiwin_core::{Error, Result};

mod selftest;

#[derive(Parser)]
#[command(name = "hiwin", version, about = "Inverse semantic pyramids and hierarchical window attention")]
struct Cli {
    /// Seed for every random initialization.
    #[arg(long, global = true, env = "HIWIN_SEED", default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the upsampling and downsampler weights on the MLR loss.
    PretrainVdim(PretrainArgs),
    /// Write the three pyramid levels of one image as ISPF files.
    BuildIsp(BuildIspArgs),
    /// Compress an image into tokens with one of the projectors.
    Compress(CompressArgs),
    /// Full run with the hiwin projector; prints layout, grid and token count.
    Pipeline(PipelineArgs),
    /// Render a feature file as a PCA false-color PPM.
    Visualize(VisualizeArgs),
    /// Run the built-in oracle and gradient checks.
    Selftest,
}

#[derive(clap::Args)]
struct PretrainArgs {
    /// Directory of .ppm images, or "synthetic".
    #[arg(long)]
    corpus: String,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Feature channels of the synthetic encoder.
    #[arg(long, default_value_t = DEFAULT_CHANNELS)]
    channels: usize,
    /// Images in the synthetic corpus.
    #[arg(long, default_value_t = 32)]
    corpus_size: usize,
    /// Side of the synthetic images.
    #[arg(long, default_value_t = 112)]
    image_size: usize,
    /// Also write the "step loss" lines to this file.
    #[arg(long)]
    loss_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ModelArgs {
    #[arg(long)]
    image: PathBuf,
    /// Checkpoint; freshly initialized weights are used when omitted.
    #[arg(long)]
    ckpt: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BuildIspArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Level-0 features from a file instead of the synthetic encoder.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Levels are written to `<prefix>_l0.ispf` .. `<prefix>_l2.ispf`.
    #[arg(long)]
    out_prefix: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjectorArg {
    Hiwin,
    Mlp,
    Resampler,
}

#[derive(clap::Args)]
struct CompressArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = ProjectorArg::Hiwin)]
    projector: ProjectorArg,
    /// Output TOKS file.
    #[arg(long)]
    out: PathBuf,
    /// Index map path; defaults to `<out>.index.txt`.
    #[arg(long)]
    index_out: Option<PathBuf>,
    /// Worker threads for per-slice work.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(clap::Args)]
struct PipelineArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Output TOKS file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(clap::Args)]
struct VisualizeArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::PretrainVdim(a) => pretrain(a, cli.seed),
        Command::BuildIsp(a) => build_isp(a, cli.seed),
        Command::Compress(a) => compress(a, cli.seed),
        Command::Pipeline(a) => pipeline(a, cli.seed),
        Command::Visualize(a) => visualize(a),
        Command::Selftest => return selftest::run(cli.seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 4 } else { 3 })
        }
    }
}

fn load_corpus(spec: &str, count: usize, size: usize, seed: u64) -> Result<Vec<Image>> {
    if spec == "synthetic" {
        return Ok(synth_corpus(seed, count, size));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(spec)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no .ppm files in {spec}")));
    }
    paths.iter().map(|p| Ok(load_ppm(p)?)).collect()
}

fn pretrain(a: PretrainArgs, seed: u64) -> Result<()> {
    let corpus = load_corpus(&a.corpus, a.corpus_size, a.image_size, seed)?;
    let encoder = EncoderSpec::synthetic(a.channels, seed);
    let mut vdim = VdimParams::init(seed);
    let mut down = DownsamplerParams::init(a.channels);
    let config = TrainConfig { steps: a.steps, lr: a.lr, batch: a.batch, seed };
    let report = pretrain_vdim(&corpus, &encoder, &mut vdim, &mut down, &config)?;
    let lines: String = report.loss_curve.iter().enumerate().map(|(k, l)| format!("{k} {l}\n")).collect();
    print!("{lines}");
    if let Some(path) = &a.loss_out {
        fs::write(path, &lines)?;
    }
    eprintln!(
        "loss {:.6} -> {:.6} ({:.3}x)",
        report.initial_loss,
        report.final_loss,
        report.final_loss / report.initial_loss
    );
    let attn = AttnParams::init(&HiwinConfig::default(), a.channels, seed)?;
    save_checkpoint(&Checkpoint { vdim, down, attn: Some(attn) }, &a.out)
}

/// Checkpoint from `--ckpt`, or fresh weights at the default width.
fn model(path: Option<&Path>, seed: u64) -> Result<(VdimParams, AttnParams, usize)> {
    let hiwin = HiwinConfig::default();
    match path {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            let c = ck.channels();
            let attn = match ck.attn {
                Some(a) => a,
                None => AttnParams::init(&hiwin, c, seed)?,
            };
            Ok((ck.vdim, attn, c))
        }
        None => Ok((VdimParams::init(seed), AttnParams::init(&hiwin, DEFAULT_CHANNELS, seed)?, DEFAULT_CHANNELS)),
    }
}

fn build_isp(a: BuildIspArgs, seed: u64) -> Result<()> {
    let (vdim, _, c) = model(a.model.ckpt.as_deref(), seed)?;
    let image = resize_to_patch_multiple(&load_ppm(&a.model.image)?, PATCH)?;
    let encoder = match &a.features {
        Some(path) => {
            let channels = load_features(path)?.channels();
            EncoderSpec { kind: EncoderKind::FileBacked(path.clone()), patch: PATCH, channels, seed }
        }
        None => EncoderSpec::synthetic(c, seed),
    };
    let isp = image_isp(&image, &encoder, &vdim, Origin::Overview)?;
    for level in &isp.levels {
        let path = format!("{}_l{}.ispf", a.out_prefix, level.level);
        save_features(level, &path)?;
        println!("{path}: {}x{}x{}", level.width(), level.height(), level.channels());
    }
    Ok(())
}

fn run(model_args: &ModelArgs, projector: Projector, threads: usize, seed: u64) -> Result<PipelineOutput> {
    let (vdim, attn, c) = model(model_args.ckpt.as_deref(), seed)?;
    let image = load_ppm(&model_args.image)?;
    let config = PipelineConfig {
        encoder: EncoderSpec::synthetic(c, seed),
        projector,
        threads,
        seed,
        ..PipelineConfig::default()
    };
    run_pipeline(&image, &vdim, &attn, &config)
}

fn compress(a: CompressArgs, seed: u64) -> Result<()> {
    let projector = match a.projector {
        ProjectorArg::Hiwin => Projector::Hiwin,
        ProjectorArg::Mlp => Projector::Mlp,
        ProjectorArg::Resampler => Projector::Resampler,
    };
    let out = run(&a.model, projector, a.threads, seed)?;
    save_tokens(&out.tokens, &a.out)?;
    let index_path = a.index_out.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".index.txt");
        p.into()
    });
    fs::write(&index_path, index_map_text(&flatten(&out.tokens)))?;
    println!("tokens: {}", out.token_count());
    Ok(())
}

fn pipeline(a: PipelineArgs, seed: u64) -> Result<()> {
    let out = run(&a.model, Projector::Hiwin, a.threads, seed)?;
    save_tokens(&out.tokens, &a.out)?;
    println!("layout: {}x{}", out.layout.cols, out.layout.rows);
    let slice_grids = &out.grids[1..];
    if slice_grids.windows(2).all(|w| w[0] == w[1]) {
        println!("grid: {}x{}", slice_grids[0].0, slice_grids[0].1);
    } else {
        let list: Vec<String> = slice_grids.iter().map(|g| format!("{}x{}", g.0, g.1)).collect();
        println!("grid: {}", list.join(" "));
    }
    println!("overview grid: {}x{}", out.grids[0].0, out.grids[0].1);
    println!("tokens: {}", out.token_count());
    Ok(())
}

fn visualize(a: VisualizeArgs) -> Result<()> {
    let map = load_features(&a.features)?;
    let rgb = pca_rgb(&map.data)?;
    save_ppm(&Image::from_tensor(rgb)?, &a.out)?;
    println!("{}: {}x{}", a.out.display(), map.width(), map.height());
    Ok(())
}
