use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use sed_forge::annotations::read_annotations;
use sed_forge::cache::{read_probabilities, Matrix};
use sed_forge::config::ExperimentConfig;
use sed_forge::manifest::Manifest;
use sed_forge::model::Model;
use sed_forge::pipeline::{self, in_stage, StageResult};
use sed_forge::plot;
use sed_forge::wav::read_wav;
use sed_forge_core::detect::binarize;
use sed_forge_core::synth::build_target_matrix;

#[derive(Parser)]
#[command(name = "sed-forge", version, about = "Polyphonic sound event detection with CRNNs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment configuration (TOML); defaults apply without it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset manifest (TOML).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the builtin synthetic dataset and its manifest.
    Synth,
    /// Extract normalized log-mel features for every fold.
    Extract,
    /// Train one fold and write its model.
    Train {
        #[arg(long)]
        fold: Option<u32>,
        /// Model path; defaults to <out-dir>/model.sfm.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from <out-dir>/checkpoint.ckpt if present.
        #[arg(long)]
        resume: bool,
    },
    /// Run a model on audio files, or on a fold's test recordings.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        fold: Option<u32>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Also write PNG plots.
        #[arg(long)]
        plots: bool,
        audio: Vec<PathBuf>,
    },
    /// Score stored predictions against the manifest.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Full experiment: extract, train, detect and evaluate every fold.
    Run,
    /// Train and evaluate the CRNN, CNN and RNN variants side by side.
    Compare,
    /// Render gradient-ascent input patterns of convolutional units.
    Visualize {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated layer:map selectors; all maps of the first conv layer by default.
        #[arg(long)]
        units: Option<String>,
        #[arg(long, default_value_t = 40)]
        frames: usize,
    },
    /// Render a stored matrix (probabilities, features, patterns) as PNG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Reference annotations drawn above probabilities.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Adds the binarized roll below probabilities.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

struct Session {
    cfg: ExperimentConfig,
    manifest: Option<PathBuf>,
    out_dir: Option<PathBuf>,
}

impl Session {
    fn load(common: &Common) -> StageResult<Self> {
        in_stage("config", || {
            let mut cfg = match &common.config {
                Some(p) => ExperimentConfig::read(p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            Ok(Self {
                manifest: common.manifest.clone().or_else(|| cfg.manifest.clone()),
                out_dir: common.out_dir.clone().or_else(|| cfg.out_dir.clone()),
                cfg,
            })
        })
    }

    fn out_dir(&self) -> StageResult<&Path> {
        in_stage("config", || self.out_dir.as_deref().ok_or_else(|| anyhow!("--out-dir is required")))
    }

    fn manifest(&self) -> StageResult<Manifest> {
        in_stage("manifest", || {
            let p = self.manifest.as_deref().ok_or_else(|| anyhow!("--manifest is required"))?;
            Ok(Manifest::read(p)?)
        })
    }

    fn fold(&self, m: &Manifest, fold: Option<u32>) -> StageResult<u32> {
        in_stage("manifest", || match fold {
            Some(f) => Ok(f),
            None => pipeline::selected_folds(&self.cfg, m)
                .first()
                .copied()
                .ok_or_else(|| anyhow!("manifest has no recordings")),
        })
    }
}

fn execute(cli: Cli) -> StageResult<()> {
    let ctx = Session::load(&cli.common)?;
    match cli.command {
        Command::Synth => {
            let out = ctx.out_dir()?;
            let m = pipeline::synth(&ctx.cfg, out)?;
            println!("wrote {} recordings to {}", m.recordings.len(), out.display());
        }
        Command::Extract => {
            let m = ctx.manifest()?;
            let n = pipeline::extract(&ctx.cfg, &m, ctx.out_dir()?)?;
            println!("wrote {n} feature files");
        }
        Command::Train { fold, out, resume } => {
            let m = ctx.manifest()?;
            let fold = ctx.fold(&m, fold)?;
            let dir = ctx.out_dir()?;
            let data = in_stage("extract", || pipeline::load_fold(&ctx.cfg, &m, fold))?;
            in_stage("train", || {
                std::fs::create_dir_all(dir)?;
                let (model, log) =
                    pipeline::train_fold(&ctx.cfg, &m.classes, &data, Some(&dir.join("checkpoint.ckpt")), resume)?;
                let path = out.unwrap_or_else(|| dir.join("model.sfm"));
                model.save(&path)?;
                std::fs::write(dir.join("train_log.tsv"), log.to_text())?;
                println!(
                    "fold {fold}: {} epochs, best epoch {}, model {}",
                    log.epochs.len(),
                    log.best_epoch.map_or("none".into(), |b| b.to_string()),
                    path.display()
                );
                Ok(())
            })?;
        }
        Command::Detect {
            model,
            fold,
            threshold,
            plots,
            audio,
        } => {
            let dir = ctx.out_dir()?;
            let model = in_stage("detect", || Ok(Model::load(&model)?))?;
            let threshold = threshold.unwrap_or(ctx.cfg.eval.threshold);
            let inputs: Vec<(String, PathBuf, Option<PathBuf>)> = if audio.is_empty() {
                let m = ctx.manifest()?;
                let fold = ctx.fold(&m, fold)?;
                pipeline::test_entries(&m, fold)
                    .into_iter()
                    .map(|e| (e.id.clone(), e.audio.clone(), Some(e.annotations.clone())))
                    .collect()
            } else {
                audio
                    .iter()
                    .map(|p| {
                        let stem = p.file_stem().map_or("input".into(), |s| s.to_string_lossy().into_owned());
                        (stem, p.clone(), None)
                    })
                    .collect()
            };
            in_stage("detect", || {
                if inputs.is_empty() {
                    bail!("nothing to detect");
                }
                for (id, path, ann) in &inputs {
                    let clip = read_wav(path)?;
                    let scores = pipeline::score_audio(&model, &clip).with_context(|| id.clone())?;
                    let reference = match (ann, &scores) {
                        (Some(a), pipeline::Scores::Frames(p)) => {
                            Some(build_target_matrix(&read_annotations(a)?, &model.classes, p.frames, p.hop_seconds)?)
                        }
                        _ => None,
                    };
                    pipeline::write_detection(dir, id, &model.classes, &scores, threshold, reference.as_ref(), plots)?;
                }
                println!("wrote detections for {} recordings to {}", inputs.len(), dir.display());
                Ok(())
            })?;
        }
        Command::Eval { predictions } => {
            let m = ctx.manifest()?;
            let r = pipeline::evaluate_predictions(&ctx.cfg, &m, &predictions, ctx.out_dir()?)?;
            print!("{}", r.to_text());
        }
        Command::Run => {
            let m = ctx.manifest()?;
            let r = pipeline::run_experiment(&ctx.cfg, &m, ctx.out_dir()?)?;
            print!("{}", r.to_text());
        }
        Command::Compare => {
            let m = ctx.manifest()?;
            let r = pipeline::compare_architectures(&ctx.cfg, &m, ctx.out_dir()?)?;
            print!("{}", r.to_text());
        }
        Command::Visualize { model, units, frames } => {
            let dir = ctx.out_dir()?;
            let (model, units) = in_stage("visualize", || {
                let model = Model::load(&model)?;
                let units = match units {
                    Some(u) => pipeline::parse_units(&u)?,
                    None => pipeline::default_units(&model.network),
                };
                Ok((model, units))
            })?;
            for u in pipeline::visualize_filters(&model, &units, frames, ctx.cfg.seed, dir)? {
                println!(
                    "{}:{} activation {:.6} -> {:.6} ({})",
                    u.layer,
                    u.map,
                    u.result.initial_activation,
                    u.result.final_activation,
                    u.image.display()
                );
            }
        }
        Command::Plot {
            input,
            output,
            annotations,
            threshold,
        } => in_stage("plot", || {
            let m = Matrix::read(&input)?;
            let img = if m.header.get("kind").map(String::as_str) == Some("probabilities") {
                let probs = read_probabilities(&input)?;
                let reference = annotations
                    .map(|a| -> anyhow::Result<_> {
                        Ok(build_target_matrix(&read_annotations(&a)?, &probs.classes, probs.frames, probs.hop_seconds)?)
                    })
                    .transpose()?;
                let k = probs.classes.len();
                let mut panels = Vec::new();
                if let Some(r) = &reference {
                    let v: Vec<f32> = r.activity().iter().map(|&x| x as f32).collect();
                    panels.push(plot::render(&v, k, r.frames(), Some((0.0, 1.0)), 4));
                }
                panels.push(plot::render(&probs.values, k, probs.frames, Some((0.0, 1.0)), 4));
                if let Some(c) = threshold {
                    let roll = binarize(&probs, c)?;
                    let v: Vec<f32> = roll.activity().iter().map(|&x| x as f32).collect();
                    panels.push(plot::render(&v, k, roll.frames(), Some((0.0, 1.0)), 4));
                }
                plot::stack(&panels)
            } else {
                plot::render(&m.values, m.rows, m.cols, None, 4)
            };
            plot::save_png(&img, &output)?;
            Ok(())
        })?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sed-forge: {e}");
            ExitCode::FAILURE
        }
    }
}
