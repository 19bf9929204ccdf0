//! Experiment stages and their composition.
//!
//! Output layout of [`run_experiment`]:
//!
//! ```text
//! <out>/report.txt
//! <out>/fold<f>/model.sfm
//! <out>/fold<f>/checkpoint.ckpt
//! <out>/fold<f>/train_log.tsv
//! <out>/fold<f>/predictions/<id>.txt        frame mode: detected events
//! <out>/fold<f>/predictions/<id>.prob.sfm   frame mode: probabilities
//! <out>/fold<f>/predictions/<id>.scores.sfm tagging mode: chunk scores
//! <out>/fold<f>/predictions/plots/<id>.png  with `eval.plots`
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use sed_forge_core::detect::{self, ActivityProbabilities};
use sed_forge_core::features::{compute_norm_stats, AudioClip, FeatureConfig, FeatureMatrix, MelFilterbank, NormStats};
use sed_forge_core::metrics::{
    eer, error_rate_from_stats, f1_from_stats, legacy_f1, one_second_frames, roll_stats, SceneItem, SegmentStats,
};
use sed_forge_core::nn::{input_gradient_ascent, AscentResult, LayerSpec, Network, ASCENT_STEPS, ASCENT_STEP_SIZE};
use sed_forge_core::synth::{build_target_matrix, builtin_event_bank, generate_dataset, synthesize_mixture, EventRoll};
use sed_forge_core::train::{Recording, TrainLog, Trainer};

use crate::annotations::{read_annotations, write_annotations};
use crate::cache::{write_features, write_probabilities, Matrix};
use crate::config::{ExperimentConfig, LayerConfig, Mode};
use crate::manifest::{Entry, Manifest, Split};
use crate::model::{load_checkpoint, save_checkpoint, storable_stats, Model};
use crate::plot;
use crate::report::Report;
use crate::wav::{read_wav, write_wav};

/// Error tagged with the pipeline stage that produced it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {:#}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

pub type StageResult<T> = Result<T, StageError>;

pub fn in_stage<T>(stage: &'static str, f: impl FnOnce() -> anyhow::Result<T>) -> StageResult<T> {
    f().map_err(|error| StageError { stage, error })
}

fn create_dir(p: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("cannot create {}", p.display()))
}

/// Generates the builtin synthetic dataset into `out_dir` and returns its manifest.
pub fn synth(cfg: &ExperimentConfig, out_dir: &Path) -> StageResult<Manifest> {
    in_stage("synth", || {
        let library = builtin_event_bank(cfg.seed, &cfg.bank_config())?;
        let plan = generate_dataset(&library, &cfg.synth_config())?;
        let (audio_dir, ann_dir) = (out_dir.join("audio"), out_dir.join("annotations"));
        create_dir(&audio_dir)?;
        create_dir(&ann_dir)?;
        let mut recordings = Vec::new();
        for m in &plan.mixtures {
            let (clip, events) = synthesize_mixture(&library, &m.recipe)?;
            let audio = audio_dir.join(format!("{}.wav", m.id));
            let annotations = ann_dir.join(format!("{}.txt", m.id));
            write_wav(&audio, &clip)?;
            write_annotations(&annotations, &events)?;
            recordings.push(Entry {
                id: m.id.clone(),
                audio,
                annotations,
                partition: m.partition.into(),
                scene: "synthetic".into(),
                fold: 0,
            });
        }
        let manifest = Manifest {
            classes: library.class_names(),
            recordings,
        };
        manifest.write(&out_dir.join("manifest.toml"))?;
        Ok(manifest)
    })
}

/// Raw (unnormalized) features and frame targets of one manifest entry.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub scene: String,
    pub features: FeatureMatrix,
    pub targets: EventRoll,
}

fn extract_clip(fc: &FeatureConfig, bank: &MelFilterbank, clip: &AudioClip) -> anyhow::Result<FeatureMatrix> {
    Ok(fc.extract(clip, bank)?)
}

pub fn prepare(entry: &Entry, classes: &[String], fc: &FeatureConfig, bank: &MelFilterbank) -> anyhow::Result<Prepared> {
    let clip = read_wav(&entry.audio)?;
    let features = extract_clip(fc, bank, &clip).with_context(|| format!("recording '{}'", entry.id))?;
    let events = read_annotations(&entry.annotations)?;
    let targets = build_target_matrix(&events, classes, features.frames, features.hop_seconds)
        .with_context(|| format!("annotations of '{}'", entry.id))?;
    Ok(Prepared {
        id: entry.id.clone(),
        scene: entry.scene.clone(),
        features,
        targets,
    })
}

/// Normalized data of one fold.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub fold: u32,
    pub norm: NormStats,
    /// Ids whose features produced `norm`.
    pub norm_sources: Vec<String>,
    pub train: Vec<Recording>,
    pub validation: Vec<Recording>,
    pub test: Vec<Prepared>,
}

/// Extracts features for one fold. Normalization statistics come from the
/// fold's training partition only.
pub fn load_fold(cfg: &ExperimentConfig, manifest: &Manifest, fold: u32) -> anyhow::Result<FoldData> {
    let split = manifest.fold(fold).map_err(|e| anyhow!(e))?;
    split.check_isolation().map_err(|e| anyhow!(e))?;
    if split.train.is_empty() || split.validation.is_empty() {
        bail!("fold {fold} needs non-empty train and validation partitions");
    }
    let fc = cfg.feature_config();
    let bank = fc.filterbank()?;
    let load = |entries: &[&Entry]| -> anyhow::Result<Vec<Prepared>> {
        entries.iter().map(|e| prepare(e, &manifest.classes, &fc, &bank)).collect()
    };
    let (train, validation, test) = (load(&split.train)?, load(&split.validation)?, load(&split.test)?);
    let raw: Vec<FeatureMatrix> = train.iter().map(|p| p.features.clone()).collect();
    let norm = storable_stats(&compute_norm_stats(&raw)?);
    let normalize = |items: Vec<Prepared>| -> anyhow::Result<Vec<Prepared>> {
        items
            .into_iter()
            .map(|mut p| {
                p.features = norm.normalize(&p.features)?;
                Ok(p)
            })
            .collect()
    };
    let to_recordings = |items: Vec<Prepared>| -> Vec<Recording> {
        items
            .into_iter()
            .map(|p| Recording {
                features: p.features,
                targets: p.targets,
            })
            .collect()
    };
    let norm_sources = train.iter().map(|p| p.id.clone()).collect();
    Ok(FoldData {
        fold,
        norm_sources,
        train: to_recordings(normalize(train)?),
        validation: to_recordings(normalize(validation)?),
        test: normalize(test)?,
        norm,
    })
}

/// Writes normalized features and the normalization statistics of each fold.
pub fn extract(cfg: &ExperimentConfig, manifest: &Manifest, out_dir: &Path) -> StageResult<usize> {
    in_stage("extract", || {
        let mut written = 0;
        for fold in selected_folds(cfg, manifest) {
            let data = load_fold(cfg, manifest, fold)?;
            let dir = out_dir.join(format!("fold{fold}")).join("features");
            create_dir(&dir)?;
            let id = crate::cache::norm_stats_id(&data.norm);
            let split = manifest.fold(fold).map_err(|e| anyhow!(e))?;
            let ids = split.train.iter().chain(&split.validation).map(|e| e.id.clone());
            let feats = data.train.iter().chain(&data.validation).map(|r| &r.features);
            for (name, f) in ids.zip(feats).chain(data.test.iter().map(|p| (p.id.clone(), &p.features))) {
                write_features(&dir.join(format!("{name}.sfm")), f, Some(&id))?;
                written += 1;
            }
            let bands = data.norm.bands();
            let mut header = BTreeMap::new();
            header.insert("kind".to_string(), "norm".to_string());
            header.insert("stats_id".to_string(), id);
            header.insert("sources".to_string(), data.norm_sources.join(","));
            Matrix {
                header,
                rows: 2,
                cols: bands,
                values: data.norm.mean.iter().chain(&data.norm.std).map(|&v| v as f32).collect(),
            }
            .write(&dir.join("norm.sfm"))?;
        }
        Ok(written)
    })
}

pub fn selected_folds(cfg: &ExperimentConfig, manifest: &Manifest) -> Vec<u32> {
    if cfg.folds.is_empty() {
        manifest.folds()
    } else {
        cfg.folds.clone()
    }
}

/// Frames per tagging chunk at the configured hop.
pub fn chunk_frames(cfg: &ExperimentConfig) -> anyhow::Result<usize> {
    let hop = cfg.feature_config().hop_seconds()?;
    Ok(((cfg.eval.chunk_seconds / hop).round() as usize).max(1))
}

/// Trains one fold. With a checkpoint path the trainer state is saved after
/// every epoch and, when `resume` is set and the file exists, restored first.
pub fn train_fold(
    cfg: &ExperimentConfig,
    classes: &[String],
    data: &FoldData,
    checkpoint: Option<&Path>,
    resume: bool,
) -> anyhow::Result<(Model, TrainLog)> {
    let spec = cfg.network_spec(classes.len())?;
    let mut tc = cfg.train_config();
    if cfg.mode == Mode::Tagging {
        tc.sequence_length = chunk_frames(cfg)?;
    }
    let mut trainer = match checkpoint {
        Some(p) if resume && p.exists() => {
            let t = load_checkpoint(p)?;
            if t.network.spec() != &spec || t.config != tc {
                bail!("checkpoint {} was written for a different configuration", p.display());
            }
            t
        }
        _ => Trainer::new(Network::new(&spec)?, tc.clone())?,
    };
    while !trainer.is_finished() {
        let epoch = trainer.epoch;
        trainer
            .run_epoch(&data.train, &data.validation)
            .with_context(|| format!("fold {} epoch {epoch}", data.fold))?;
        if let Some(p) = checkpoint {
            save_checkpoint(p, &trainer)?;
        }
    }
    let (network, log) = trainer.finish();
    Ok((
        Model {
            network,
            classes: classes.to_vec(),
            features: cfg.feature_config(),
            sequence_length: tc.sequence_length,
            norm: data.norm.clone(),
        },
        log,
    ))
}

/// Network output for one recording.
#[derive(Debug, Clone, PartialEq)]
pub enum Scores {
    Frames(ActivityProbabilities),
    /// One row of class scores per chunk.
    Chunks { chunk_frames: usize, hop_seconds: f64, scores: Vec<Vec<f32>> },
}

/// Runs a model on features already normalized with its statistics.
pub fn score_features(model: &Model, features: &FeatureMatrix) -> anyhow::Result<Scores> {
    if model.network.spec().is_tagging() {
        Ok(Scores::Chunks {
            chunk_frames: model.sequence_length,
            hop_seconds: features.hop_seconds,
            scores: detect::predict_chunks(&model.network, features, &model.classes, model.sequence_length)?,
        })
    } else {
        Ok(Scores::Frames(detect::predict(
            &model.network,
            features,
            &model.classes,
            model.sequence_length,
        )?))
    }
}

/// Extracts, normalizes and scores raw audio.
pub fn score_audio(model: &Model, clip: &AudioClip) -> anyhow::Result<Scores> {
    let bank = model.features.filterbank()?;
    let raw = extract_clip(&model.features, &bank, clip)?;
    score_features(model, &model.norm.normalize(&raw)?)
}

/// Chunk scores in the probability matrix layout (classes x chunks).
pub fn chunk_matrix(classes: &[String], chunk_frames: usize, hop: f64, scores: &[Vec<f32>]) -> ActivityProbabilities {
    let n = scores.len();
    let mut values = vec![0.0; classes.len() * n];
    for (c, row) in scores.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            values[k * n + c] = v;
        }
    }
    ActivityProbabilities {
        classes: classes.to_vec(),
        frames: n,
        hop_seconds: chunk_frames as f64 * hop,
        values,
    }
}

/// Inverse of [`chunk_matrix`].
pub fn chunk_rows(m: &ActivityProbabilities) -> Vec<Vec<f32>> {
    (0..m.frames)
        .map(|c| (0..m.classes.len()).map(|k| m.get(k, c)).collect())
        .collect()
}

/// Writes the artifacts of one scored recording and returns the binarized roll in frame mode.
pub fn write_detection(
    dir: &Path,
    id: &str,
    classes: &[String],
    scores: &Scores,
    threshold: f64,
    reference: Option<&EventRoll>,
    plots: bool,
) -> anyhow::Result<Option<EventRoll>> {
    create_dir(dir)?;
    match scores {
        Scores::Frames(probs) => {
            let det = detect::detect(probs, threshold)?;
            write_annotations(&dir.join(format!("{id}.txt")), &det.events)?;
            write_probabilities(&dir.join(format!("{id}.prob.sfm")), probs)?;
            if plots {
                let plot_dir = dir.join("plots");
                create_dir(&plot_dir)?;
                save_roll_plot(&plot_dir.join(format!("{id}.png")), probs, &det.roll, reference)?;
            }
            Ok(Some(det.roll))
        }
        Scores::Chunks {
            chunk_frames,
            hop_seconds,
            scores,
        } => {
            let m = chunk_matrix(classes, *chunk_frames, *hop_seconds, scores);
            write_probabilities(&dir.join(format!("{id}.scores.sfm")), &m)?;
            Ok(None)
        }
    }
}

fn roll_values(roll: &EventRoll) -> Vec<f32> {
    roll.activity().iter().map(|&v| v as f32).collect()
}

/// Reference roll (if any), predicted roll and probabilities, top to bottom.
pub fn save_roll_plot(
    path: &Path,
    probs: &ActivityProbabilities,
    prediction: &EventRoll,
    reference: Option<&EventRoll>,
) -> anyhow::Result<()> {
    let k = probs.classes.len();
    let scale = 4;
    let mut panels = Vec::new();
    if let Some(r) = reference {
        panels.push(plot::render(&roll_values(r), k, r.frames(), Some((0.0, 1.0)), scale));
    }
    panels.push(plot::render(&roll_values(prediction), k, prediction.frames(), Some((0.0, 1.0)), scale));
    panels.push(plot::render(&probs.values, k, probs.frames, Some((0.0, 1.0)), scale));
    plot::save_png(&plot::stack(&panels), path)?;
    Ok(())
}

/// Segment statistics at frame and one-second resolution.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameStats {
    pub frame: SegmentStats,
    pub second: SegmentStats,
}

impl std::ops::AddAssign for FrameStats {
    fn add_assign(&mut self, o: Self) {
        self.frame += o.frame;
        self.second += o.second;
    }
}

pub fn frame_stats(reference: &EventRoll, prediction: &EventRoll) -> anyhow::Result<FrameStats> {
    Ok(FrameStats {
        frame: roll_stats(reference, prediction, 1)?,
        second: roll_stats(reference, prediction, one_second_frames(reference.hop_seconds()))?,
    })
}

fn filled(reference: &EventRoll, value: u8) -> anyhow::Result<EventRoll> {
    Ok(EventRoll::from_activity(
        reference.classes().to_vec(),
        reference.frames(),
        reference.hop_seconds(),
        vec![value; reference.activity().len()],
    )?)
}

fn push_frame_metrics(report: &mut Report, scope: &str, s: &FrameStats) {
    for (res, st) in [("frame", &s.frame), ("1sec", &s.second)] {
        let pr = f1_from_stats(st);
        report.metric(scope, format!("f1_{res}"), Some(pr.f1));
        report.metric(scope, format!("precision_{res}"), Some(pr.precision));
        report.metric(scope, format!("recall_{res}"), Some(pr.recall));
        report.metric(scope, format!("er_{res}"), error_rate_from_stats(st).ok());
    }
}

fn push_stats(report: &mut Report, scope: &str, s: &FrameStats) {
    report.stat(scope, "frame", s.frame);
    report.stat(scope, "1sec", s.second);
}

/// Evaluation inputs of one test recording.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub fold: u32,
    pub id: String,
    pub scene: String,
    pub reference: EventRoll,
    pub outcome: Outcome,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Roll(EventRoll),
    Chunks(Vec<Vec<f32>>, usize),
}

/// Builds the metric sections shared by `run` and `eval`.
pub fn assemble_report(report: &mut Report, items: &[Evaluated], folds: &[u32]) -> anyhow::Result<()> {
    let frame_mode = items.iter().all(|i| matches!(i.outcome, Outcome::Roll(_)));
    if frame_mode {
        let mut pooled = FrameStats::default();
        let mut silent = FrameStats::default();
        let mut active = FrameStats::default();
        let mut per_fold: BTreeMap<u32, FrameStats> = folds.iter().map(|&f| (f, FrameStats::default())).collect();
        for it in items {
            let Outcome::Roll(pred) = &it.outcome else { unreachable!() };
            let s = frame_stats(&it.reference, pred)?;
            *per_fold.entry(it.fold).or_default() += s;
            pooled += s;
            silent += frame_stats(&it.reference, &filled(&it.reference, 0)?)?;
            active += frame_stats(&it.reference, &filled(&it.reference, 1)?)?;
        }
        push_frame_metrics(report, "pooled", &pooled);
        let scene_items: Vec<SceneItem<'_>> = items
            .iter()
            .map(|it| SceneItem {
                scene: &it.scene,
                reference: &it.reference,
                prediction: match &it.outcome {
                    Outcome::Roll(r) => r,
                    Outcome::Chunks(..) => unreachable!(),
                },
            })
            .collect();
        let second = items.first().map_or(1, |i| one_second_frames(i.reference.hop_seconds()));
        report.metric("pooled", "legacy_f1_1sec", legacy_f1(&scene_items, second).ok());
        for (f, s) in &per_fold {
            push_frame_metrics(report, &format!("fold{f}"), s);
        }
        push_frame_metrics(report, "all_silent", &silent);
        push_frame_metrics(report, "all_active", &active);
        push_stats(report, "pooled", &pooled);
        for (f, s) in &per_fold {
            push_stats(report, &format!("fold{f}"), s);
        }
    } else {
        let mut labels = Vec::new();
        let mut scores = Vec::new();
        for it in items {
            let Outcome::Chunks(s, chunk) = &it.outcome else {
                bail!("cannot mix frame and chunk outputs in one report");
            };
            let l = it.reference.chunk_labels(*chunk);
            if l.len() != s.len() {
                bail!("'{}': {} chunk labels for {} score rows", it.id, l.len(), s.len());
            }
            labels.extend(l);
            scores.extend(s.iter().map(|r| r.iter().map(|&v| v as f64).collect::<Vec<_>>()));
        }
        report.entry("chunks", labels.len());
        match eer(&labels, &scores) {
            Ok(r) => {
                report.metric("pooled", "eer_mean", Some(r.mean));
                let classes = items.first().map(|i| i.reference.classes().to_vec()).unwrap_or_default();
                for (name, v) in classes.iter().zip(&r.per_class) {
                    report.metric("pooled", format!("eer_{name}"), *v);
                }
            }
            Err(sed_forge_core::Error::UndefinedMetric(_)) => report.metric("pooled", "eer_mean", None),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn base_report(cfg: &ExperimentConfig, manifest: &Manifest, folds: &[u32]) -> Report {
    let mut r = Report::default();
    r.entry("mode", format!("{:?}", cfg.mode).to_lowercase());
    r.entry("seed", cfg.seed);
    r.entry("classes", manifest.classes.join(","));
    r.entry(
        "folds",
        folds.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
    );
    r.entry("threshold", format!("{:?}", cfg.eval.threshold));
    r
}

/// extract -> train -> detect -> eval for every selected fold, then one report
/// whose pooled metrics come from statistics summed over all folds.
pub fn run_experiment(cfg: &ExperimentConfig, manifest: &Manifest, out_dir: &Path) -> StageResult<Report> {
    let folds = selected_folds(cfg, manifest);
    in_stage("setup", || {
        create_dir(out_dir)?;
        if folds.is_empty() {
            bail!("manifest has no recordings");
        }
        Ok(())
    })?;
    let mut report = base_report(cfg, manifest, &folds);
    let mut items = Vec::new();
    for &fold in &folds {
        let dir = out_dir.join(format!("fold{fold}"));
        let data = in_stage("extract", || {
            let d = load_fold(cfg, manifest, fold)?;
            if d.test.is_empty() {
                bail!("fold {fold} has no test recordings");
            }
            Ok(d)
        })?;
        report.entry(format!("fold{fold}.train"), data.train.len());
        report.entry(format!("fold{fold}.validation"), data.validation.len());
        report.entry(format!("fold{fold}.test"), data.test.len());
        report.entry(format!("fold{fold}.norm_sources"), data.norm_sources.join(","));
        let model = in_stage("train", || {
            create_dir(&dir)?;
            let (model, log) = train_fold(cfg, &manifest.classes, &data, Some(&dir.join("checkpoint.ckpt")), false)?;
            model.save(&dir.join("model.sfm"))?;
            std::fs::write(dir.join("train_log.tsv"), log.to_text())?;
            report.entry(format!("fold{fold}.epochs"), log.epochs.len());
            report.entry(
                format!("fold{fold}.best_epoch"),
                log.best_epoch.map_or("none".into(), |b| b.to_string()),
            );
            report.entry(format!("fold{fold}.stats_id"), model.stats_id());
            Ok(model)
        })?;
        for p in &data.test {
            let item = in_stage("detect", || {
                let scores = score_features(&model, &p.features)?;
                let roll = write_detection(
                    &dir.join("predictions"),
                    &p.id,
                    &manifest.classes,
                    &scores,
                    cfg.eval.threshold,
                    Some(&p.targets),
                    cfg.eval.plots,
                )?;
                let outcome = match (roll, scores) {
                    (Some(r), _) => Outcome::Roll(r),
                    (None, Scores::Chunks { chunk_frames, scores, .. }) => Outcome::Chunks(scores, chunk_frames),
                    (None, Scores::Frames(_)) => unreachable!(),
                };
                Ok(Evaluated {
                    fold,
                    id: p.id.clone(),
                    scene: p.scene.clone(),
                    reference: p.targets.clone(),
                    outcome,
                })
            })?;
            items.push(item);
        }
    }
    in_stage("eval", || {
        assemble_report(&mut report, &items, &folds)?;
        report.write(&out_dir.join("report.txt"))?;
        Ok(())
    })?;
    Ok(report)
}

/// Evaluates stored predictions of `run`/`detect` against the manifest.
/// `predictions` holds `fold<f>/predictions/<id>.*` or `<id>.*` directly.
pub fn evaluate_predictions(
    cfg: &ExperimentConfig,
    manifest: &Manifest,
    predictions: &Path,
    out_dir: &Path,
) -> StageResult<Report> {
    in_stage("eval", || {
        let folds = selected_folds(cfg, manifest);
        let fc = cfg.feature_config();
        let hop = fc.hop_seconds()?;
        let framing = fc.framing()?;
        let mut items = Vec::new();
        for &fold in &folds {
            let split = manifest.fold(fold).map_err(|e| anyhow!(e))?;
            for e in &split.test {
                let nested = predictions.join(format!("fold{fold}")).join("predictions");
                let dir = if nested.is_dir() { nested } else { predictions.to_path_buf() };
                let clip = read_wav(&e.audio)?;
                let samples = if clip.sample_rate == fc.sample_rate {
                    clip.samples.len()
                } else {
                    clip.resample_linear(fc.sample_rate)?.samples.len()
                };
                let frames = framing.frame_count(samples);
                let reference = build_target_matrix(&read_annotations(&e.annotations)?, &manifest.classes, frames, hop)?;
                let outcome = match cfg.mode {
                    Mode::Frame => {
                        let events = read_annotations(&dir.join(format!("{}.txt", e.id)))?;
                        Outcome::Roll(build_target_matrix(&events, &manifest.classes, frames, hop)?)
                    }
                    Mode::Tagging => {
                        let m = crate::cache::read_probabilities(&dir.join(format!("{}.scores.sfm", e.id)))?;
                        let chunk = (m.hop_seconds / hop).round() as usize;
                        Outcome::Chunks(chunk_rows(&m), chunk)
                    }
                };
                items.push(Evaluated {
                    fold,
                    id: e.id.clone(),
                    scene: e.scene.clone(),
                    reference,
                    outcome,
                });
            }
        }
        if items.is_empty() {
            bail!("no test recordings to evaluate");
        }
        let mut report = base_report(cfg, manifest, &folds);
        assemble_report(&mut report, &items, &folds)?;
        create_dir(out_dir)?;
        report.write(&out_dir.join("report.txt"))?;
        Ok(report)
    })
}

/// Hidden layers of the architecture variants: the configured CRNN, the
/// CNN without recurrent layers and the RNN without convolutional layers.
pub fn architecture_variants(cfg: &ExperimentConfig, classes: usize) -> anyhow::Result<Vec<(&'static str, Vec<LayerConfig>)>> {
    let spec = cfg.network_spec(classes)?;
    let hidden = |s: &sed_forge_core::nn::NetworkSpec| -> Vec<LayerConfig> {
        s.layers[..s.layers.len() - 1].iter().map(LayerConfig::from).collect()
    };
    Ok(vec![
        ("crnn", hidden(&spec)),
        ("cnn", hidden(&spec.without_recurrent())),
        ("rnn", hidden(&spec.without_conv())),
    ])
}

/// Trains and evaluates each variant under `out_dir/<variant>` and tabulates
/// their pooled metrics side by side.
pub fn compare_architectures(cfg: &ExperimentConfig, manifest: &Manifest, out_dir: &Path) -> StageResult<Report> {
    let variants = in_stage("compare", || architecture_variants(cfg, manifest.classes.len()))?;
    let folds = selected_folds(cfg, manifest);
    let mut out = base_report(cfg, manifest, &folds);
    let keys: &[&str] = match cfg.mode {
        Mode::Frame => &["f1_frame", "f1_1sec", "er_frame", "er_1sec"],
        Mode::Tagging => &["eer_mean"],
    };
    let mut baseline = None;
    for (name, layers) in variants {
        let spec_layers: Vec<LayerSpec> = layers.iter().map(LayerSpec::from).collect();
        out.entry(
            format!("{name}.conv_layers"),
            spec_layers.iter().filter(|l| l.is_conv()).count(),
        );
        out.entry(
            format!("{name}.recurrent_layers"),
            spec_layers.iter().filter(|l| l.is_recurrent()).count(),
        );
        let mut vcfg = cfg.clone();
        vcfg.network.layers = layers;
        let r = run_experiment(&vcfg, manifest, &out_dir.join(name))?;
        for k in keys {
            out.metric(name, *k, r.get("pooled", k));
        }
        if baseline.is_none() && cfg.mode == Mode::Frame {
            baseline = Some(r);
        }
    }
    if let Some(b) = baseline {
        for k in keys {
            out.metric("all_silent", *k, b.get("all_silent", k));
        }
    }
    in_stage("compare", || {
        out.write(&out_dir.join("comparison.txt"))?;
        Ok(())
    })?;
    Ok(out)
}

/// One visualized unit.
#[derive(Debug, Clone)]
pub struct UnitPattern {
    pub layer: usize,
    pub map: usize,
    pub image: PathBuf,
    pub result: AscentResult<f64>,
}

/// All maps of the first convolutional layer.
pub fn default_units(net: &Network<f32>) -> Vec<(usize, usize)> {
    net.spec()
        .layers
        .iter()
        .enumerate()
        .find_map(|(i, l)| match l {
            LayerSpec::Conv { maps, .. } => Some((0..*maps).map(|m| (i, m)).collect()),
            _ => None,
        })
        .unwrap_or_default()
}

/// Gradient-ascent input patterns for the selected `(layer, map)` units,
/// written as PNG plus a numeric matrix.
pub fn visualize_filters(
    model: &Model,
    units: &[(usize, usize)],
    frames: usize,
    seed: u64,
    out_dir: &Path,
) -> StageResult<Vec<UnitPattern>> {
    in_stage("visualize", || {
        if units.is_empty() {
            bail!("no units selected");
        }
        create_dir(out_dir)?;
        let net = model.network.cast::<f64>();
        let bands = net.spec().input_bands;
        let mut out = Vec::new();
        for &(layer, map) in units {
            let result = input_gradient_ascent(&net, layer, map, frames, ASCENT_STEPS, ASCENT_STEP_SIZE, seed)
                .with_context(|| format!("unit {layer}:{map}"))?;
            let values: Vec<f32> = result.pattern.data().iter().map(|&v| v as f32).collect();
            let stem = format!("unit_l{layer}_m{map}");
            let image = out_dir.join(format!("{stem}.png"));
            plot::save_png(&plot::render(&values, bands, frames, None, 4), &image)?;
            let mut header = BTreeMap::new();
            header.insert("kind".to_string(), "pattern".to_string());
            header.insert("initial".to_string(), format!("{:?}", result.initial_activation));
            header.insert("final".to_string(), format!("{:?}", result.final_activation));
            Matrix {
                header,
                rows: bands,
                cols: frames,
                values,
            }
            .write(&out_dir.join(format!("{stem}.sfm")))?;
            out.push(UnitPattern {
                layer,
                map,
                image,
                result,
            });
        }
        Ok(out)
    })
}

/// Parses `layer:map` selectors separated by commas.
pub fn parse_units(text: &str) -> anyhow::Result<Vec<(usize, usize)>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let (l, m) = s
                .trim()
                .split_once(':')
                .ok_or_else(|| anyhow!("unit selector '{s}' is not layer:map"))?;
            Ok((l.parse()?, m.parse()?))
        })
        .collect()
}

/// Test entries of a fold, used by `detect` without explicit inputs.
pub fn test_entries(manifest: &Manifest, fold: u32) -> Vec<&Entry> {
    manifest
        .recordings
        .iter()
        .filter(|e| e.fold == fold && e.partition == Split::Test)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_selectors() {
        assert_eq!(parse_units("0:1, 2:3").unwrap(), vec![(0, 1), (2, 3)]);
        assert!(parse_units("0-1").is_err());
        assert!(parse_units("a:1").is_err());
    }

    #[test]
    fn chunk_matrix_roundtrip() {
        let classes = vec!["a".to_string(), "b".to_string()];
        let rows = vec![vec![0.1, 0.9], vec![0.4, 0.2], vec![0.7, 0.3]];
        let m = chunk_matrix(&classes, 200, 0.02, &rows);
        assert_eq!(m.frames, 3);
        assert!((m.hop_seconds - 4.0).abs() < 1e-12);
        assert_eq!(chunk_rows(&m), rows);
    }

    #[test]
    fn variants_strip_layers() {
        let cfg = ExperimentConfig::default();
        let v = architecture_variants(&cfg, 3).unwrap();
        let count = |layers: &[LayerConfig], conv: bool| {
            layers
                .iter()
                .filter(|l| {
                    if conv {
                        matches!(l, LayerConfig::Conv { .. })
                    } else {
                        matches!(l, LayerConfig::Gru { .. })
                    }
                })
                .count()
        };
        assert_eq!(v[0].0, "crnn");
        assert_eq!((count(&v[1].1, true), count(&v[1].1, false)), (3, 0));
        assert_eq!((count(&v[2].1, true), count(&v[2].1, false)), (0, 1));
    }

    #[test]
    fn stage_tag_in_message() {
        let e = in_stage::<()>("train", || bail!("boom")).unwrap_err();
        assert_eq!(e.to_string(), "[train] boom");
    }
}
