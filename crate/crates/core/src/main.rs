use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use drivesplat::io::{
    load_frame_index, load_scene, load_segments, save_frame_index, save_mask, save_ppm, save_segments,
    write_synth_scene,
};
use drivesplat::photo::LossWeights;
use drivesplat::pipeline::{build_frames, fuse_scene, metrics_table, parse_ego_offset, render_view, warp_eval};
use drivesplat::synth::{SynthScene, SynthSpec};
use drivesplat::{Error, Raster, Result};

#[derive(Parser)]
#[command(name = "drivesplat", version, about = "Feed-forward 4D Gaussian scenes for driving sequences")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the seed of a synthetic spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a synthetic scene manifest and its rasters.
    Synth {
        /// JSON scene spec; the built-in scene when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Builds per-frame Gaussians with instance flow applied.
    Build {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aligns and fuses adjacent frames into time segments.
    Fuse {
        #[arg(long)]
        scene: PathBuf,
        /// Directory written by `build`; frames are rebuilt when omitted.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Renders one camera at time t.
    Render {
        #[arg(long)]
        segments: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        time: f64,
        /// Camera id; the first rig camera when omitted.
        #[arg(long)]
        camera: Option<String>,
        /// Ego-frame displacement, e.g. "dy=1.0".
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        ego_offset: String,
        /// Background "r,g,b" in [0, 1]; the scene background when omitted.
        #[arg(long)]
        background: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Warps a source frame into a target frame and scores the result.
    WarpEval {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        target: f64,
        #[arg(long, allow_negative_numbers = true)]
        source: f64,
        /// JSON loss weights; defaults when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        camera: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR and SSIM of every image in --gt against its namesake in --pred.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
}

fn parse_background(text: &str) -> Result<[f64; 3]> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidRequest(format!("background {text:?} is not r,g,b")))?;
    match values[..] {
        [r, g, b] if values.iter().all(|v| (0.0..=1.0).contains(v)) => Ok([r, g, b]),
        _ => Err(Error::InvalidRequest(format!("background {text:?} is not r,g,b in [0, 1]"))),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidRequest("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidRequest(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth { spec, out } => {
            let mut spec: SynthSpec = match spec {
                Some(path) => read_json(&path)?,
                None => SynthSpec::default(),
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let scene = SynthScene::new(&spec)?;
            let manifest = write_synth_scene(&scene, &out)?;
            println!("manifest={}", manifest.display());
        }
        Command::Build { scene, out } => {
            let scene = load_scene(&scene)?;
            let frames = build_frames(&scene)?;
            save_frame_index(&out, &frames)?;
            let kernels: usize = frames.iter().map(|f| f.gaussians.len()).sum();
            println!("frames={} kernels={kernels}", frames.len());
        }
        Command::Fuse { scene, frames, out } => {
            let scene = load_scene(&scene)?;
            let prebuilt = frames.as_deref().map(load_frame_index).transpose()?;
            let fused = fuse_scene(&scene, prebuilt.as_deref())?;
            for (s, v) in fused.velocities.iter().enumerate() {
                for (id, (vel, source)) in v {
                    info!("segment {s} instance {id}: v = ({:.4}, {:.4}, {:.4}) from {source:?}", vel.x, vel.y, vel.z);
                }
            }
            save_segments(&out, &fused.scene, &scene.manifest.cameras, scene.background)?;
            println!("builds={} segments={}", fused.builds, fused.scene.segments().len());
        }
        Command::Render { segments, time, camera, ego_offset, background, out } => {
            let (scene, stored) = load_segments(&segments)?;
            let offset = parse_ego_offset(&ego_offset)?;
            let background = background.as_deref().map(parse_background).transpose()?.unwrap_or(stored);
            let camera = match camera {
                Some(c) => c,
                None => scene.rig.cameras()[0].id.clone(),
            };
            let output = render_view(&scene, time, &camera, &offset, background, cli.threads)?;
            info!(
                "{} kernels visible, {} culled, {} singular",
                output.stats.visible, output.stats.culled, output.stats.singular
            );
            save_ppm(&out, &output.rgb)?;
        }
        Command::WarpEval { scene, target, source, weights, camera, out } => {
            let scene = load_scene(&scene)?;
            let weights: LossWeights = match weights {
                Some(path) => read_json(&path)?,
                None => LossWeights::default(),
            };
            let camera = match camera {
                Some(c) => c,
                None => scene.rig.cameras()[0].id.clone(),
            };
            let (result, loss) = warp_eval(&scene, target, source, &camera, &weights)?;
            save_ppm(&out.join("warped.ppm"), &result.warped)?;
            let mask: Vec<u32> = result.mask.data().iter().map(|&m| m as u32).collect();
            save_mask(&out.join("mask.i32"), &Raster::from_vec(result.mask.width(), result.mask.height(), 1, mask)?)?;
            let table = format!("term,value\nl1,{:.9}\nssim,{:.9}\ncombined,{:.9}\n", loss.l1, loss.ssim, loss.combined);
            std::fs::write(out.join("loss.csv"), &table).map_err(|e| Error::io(&out, e))?;
            print!("{table}");
        }
        Command::Metrics { pred, gt } => print!("{}", metrics_table(&pred, &gt)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
