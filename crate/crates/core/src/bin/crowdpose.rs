use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crowdpose::config::{EvalTask, PipelineConfig};
use crowdpose::pipeline;
use crowdpose::synth::{write_synth, SynthConfig};
use crowdpose::Error;

#[derive(Parser)]
#[command(name = "crowdpose", version, about = "Crowded-scene video pose post-processing")]
struct Cli {
    /// TOML pipeline config; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Kp,
    Det,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse multi-scale / flipped heatmaps per detection and decode poses.
    Fuse {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory relative heatmap paths resolve against (default: the detections file's).
        #[arg(long)]
        heatmap_root: Option<PathBuf>,
    },
    /// Cross-model box fusion followed by Set NMS (or plain NMS).
    Detnms {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iou: Option<f64>,
        /// Plain NMS: no same-proposal exemption.
        #[arg(long)]
        plain: bool,
    },
    /// OKS-based pose NMS per frame.
    Posenms {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        oks: Option<f64>,
        #[arg(long)]
        min_score: Option<f64>,
    },
    /// Assign track ids to poses or detections.
    Track {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sim_threshold: Option<f64>,
        #[arg(long)]
        iou_weight: Option<f64>,
    },
    /// Flow-based temporal smoothing of tracked poses.
    Smooth {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        /// Neighbor instance score needed to smooth.
        #[arg(long)]
        smooth_conf: Option<f64>,
        #[arg(long)]
        passes: Option<usize>,
        /// Write the per-joint flow as JSON Lines.
        #[arg(long)]
        flow_dump: Option<PathBuf>,
    },
    /// Keypoint or box evaluation.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum)]
        task: Option<Task>,
        /// JSON object mapping video name to weight.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Report path; printed to stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Draw poses over frames as PPM images.
    Overlay {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        video: Option<String>,
    },
    /// Write a synthetic crossing-people video with ground truth and heatmaps.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        persons: usize,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        #[arg(long)]
        no_heatmaps: bool,
    },
    /// Run the configured stages end to end.
    Run {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> crowdpose::Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Fuse {
            detections,
            out,
            heatmap_root,
        } => {
            let n = pipeline::run_fuse(&detections, heatmap_root.as_deref(), &out, &cfg.heatmap, &cfg.skeleton)?;
            log::info!("decoded {n} poses");
        }
        Command::Detnms {
            detections,
            out,
            iou,
            plain,
        } => {
            if let Some(t) = iou {
                cfg.detection.nms_iou = t;
            }
            if plain {
                cfg.detection.set_nms = false;
            }
            cfg.validate()?;
            let n = pipeline::run_detpost(&detections, &out, &cfg.detection)?;
            log::info!("kept {n} boxes");
        }
        Command::Posenms {
            poses,
            out,
            oks,
            min_score,
        } => {
            if let Some(t) = oks {
                cfg.pose_nms.oks_threshold = t;
            }
            if let Some(s) = min_score {
                cfg.pose_nms.min_score = s;
            }
            cfg.validate()?;
            let n = pipeline::run_posenms(&poses, &out, &cfg)?;
            log::info!("kept {n} poses");
        }
        Command::Track {
            detections,
            out,
            sim_threshold,
            iou_weight,
        } => {
            if let Some(t) = sim_threshold {
                cfg.tracking.sim_threshold = t;
            }
            if let Some(w) = iou_weight {
                cfg.tracking.iou_weight = w;
            }
            cfg.validate()?;
            pipeline::run_track(&detections, &out, &cfg.tracking)?;
        }
        Command::Smooth {
            poses,
            frames,
            out,
            alpha,
            smooth_conf,
            passes,
            flow_dump,
        } => {
            let s = &mut cfg.smoothing;
            if let Some(a) = alpha {
                s.smoothing.alpha = a;
            }
            if let Some(c) = smooth_conf {
                s.smoothing.confidence_threshold = c;
            }
            if let Some(p) = passes {
                s.passes = p;
            }
            cfg.validate()?;
            pipeline::run_smooth(&poses, &frames, &out, &cfg.smoothing, flow_dump.as_deref())?;
        }
        Command::Eval {
            pred,
            gt,
            task,
            weights,
            report,
        } => {
            if let Some(t) = task {
                cfg.eval.task = match t {
                    Task::Kp => EvalTask::Kp,
                    Task::Det => EvalTask::Det,
                };
            }
            let weights = weights.or_else(|| cfg.paths.weights.clone());
            let r = pipeline::run_eval(&pred, &gt, report.as_deref(), &cfg, weights.as_deref())?;
            if report.is_none() {
                print!("{}", pipeline::report_json(&r));
            }
        }
        Command::Overlay {
            poses,
            frames,
            out,
            video,
        } => {
            let n = pipeline::run_overlay(&poses, &frames, &out, &cfg.skeleton, video.as_deref())?;
            log::info!("wrote {n} frames");
        }
        Command::Synth {
            out,
            persons,
            frames,
            no_heatmaps,
        } => {
            let mut sc = SynthConfig::crossing(cfg.seed, persons, frames);
            if no_heatmaps {
                sc.heatmaps = None;
            }
            let paths = write_synth(&out, &sc)?;
            println!("{}", paths.config.display());
        }
        Command::Run { out_dir } => {
            if let Some(d) = out_dir {
                cfg.paths.out_dir = Some(d);
            }
            let summary = pipeline::run_pipeline(&cfg)?;
            if let Some(r) = summary.report {
                print!("{}", pipeline::report_json(&r));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<Error>().map_or(4, Error::exit_code);
            eprintln!("error: {e}");
            ExitCode::from(code as u8)
        }
    }
}
