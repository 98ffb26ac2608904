//! Resolved run specifications and their execution.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use probfuse::distributions::{GaussianDiag, PredictionSet};
use probfuse::camera::WeakPerspCamera;
use probfuse::metrics::{
    evaluate, mesh_to_ply, per_vertex_uncertainty, uncertainty_from_params, Combination, EvalConfig, MetricsReport,
    SubsetSummary,
};
use probfuse::predictor::{
    load_checkpoint, load_weights, predict_all, save_checkpoint, save_weights, NetConfig, PredictorNet, TrainConfig,
    TrainData, TrainState,
};
use probfuse::rng::substream;
use probfuse::synth::{
    generate_benchmark, read_dataset, summarize, write_dataset, AugmentationConfig, BenchmarkSpec, CorruptMode,
    DatasetHeader, GenerationConfig, PoseSource, SyntheticSample,
};
use probfuse::{
    generate_toy_model, load_model, model_sha256, save_model, BodyModel, GlobalRotation, PoseParams, ShapeParams,
    ToyModelSpec,
};
use serde::{Deserialize, Serialize};

use crate::args::{Cli, Command, EvaluateArgs, GenDataArgs, GenModelArgs, PredictArgs, TrainArgs, UncertaintyArgs};
use crate::config::{set, FileConfig};
use crate::manifest::{beside, RunManifest};
use crate::plot;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum RunSpec {
    GenModel(GenModelSpec),
    GenData(GenDataSpec),
    Train(TrainSpec),
    Predict(PredictSpec),
    Evaluate(EvaluateSpec),
    Uncertainty(UncertaintySpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenModelSpec {
    pub out: PathBuf,
    pub seed: u64,
    pub vertices: usize,
    pub joints: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseSpec {
    pub std: f64,
    pub bank: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenDataSpec {
    pub model: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub subjects: usize,
    pub views: usize,
    pub corrupt: CorruptMode,
    pub generation: GenerationConfig,
    pub augmentation: AugmentationConfig,
    pub poses: PoseSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSpec {
    pub model: PathBuf,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub log: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub generation: GenerationConfig,
    pub augmentation: AugmentationConfig,
    pub poses: PoseSpec,
    pub network: NetConfig,
    pub training: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictSpec {
    pub weights: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateSpec {
    pub model: PathBuf,
    pub data: PathBuf,
    pub predictions: PathBuf,
    pub group_sizes: Vec<usize>,
    pub combinations: Vec<Combination>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintySpec {
    pub model: PathBuf,
    pub predictions: PathBuf,
    pub index: usize,
    pub samples: usize,
    pub seed: u64,
    pub zero_variance: bool,
    pub out: PathBuf,
}

impl RunSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            RunSpec::GenModel(s) => vec![s.seed],
            RunSpec::GenData(s) => vec![s.seed],
            RunSpec::Train(s) => vec![s.training.seed],
            RunSpec::Predict(_) => vec![],
            RunSpec::Evaluate(s) => vec![s.seed],
            RunSpec::Uncertainty(s) => vec![s.seed],
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            RunSpec::GenModel(_) => vec![],
            RunSpec::GenData(s) => [Some(s.model.clone()), s.poses.bank.clone()].into_iter().flatten().collect(),
            RunSpec::Train(s) => [Some(s.model.clone()), s.data.clone(), s.resume.clone(), s.poses.bank.clone()]
                .into_iter()
                .flatten()
                .collect(),
            RunSpec::Predict(s) => vec![s.weights.clone(), s.data.clone()],
            RunSpec::Evaluate(s) => vec![s.model.clone(), s.data.clone(), s.predictions.clone()],
            RunSpec::Uncertainty(s) => vec![s.model.clone(), s.predictions.clone()],
        }
    }

    pub fn outputs(&self) -> Vec<PathBuf> {
        match self {
            RunSpec::GenModel(s) => vec![s.out.clone()],
            RunSpec::GenData(s) => vec![s.out.clone()],
            RunSpec::Train(s) => [Some(s.out.clone()), Some(s.log.clone()), s.checkpoint.clone()].into_iter().flatten().collect(),
            RunSpec::Predict(s) => vec![s.out.clone()],
            RunSpec::Evaluate(s) => evaluate_outputs(s),
            RunSpec::Uncertainty(s) => vec![s.out.clone()],
        }
    }

    fn manifest_path(&self) -> PathBuf {
        match self {
            RunSpec::GenModel(s) => beside(&s.out),
            RunSpec::GenData(s) => beside(&s.out),
            RunSpec::Train(s) => beside(&s.out),
            RunSpec::Predict(s) => beside(&s.out),
            RunSpec::Evaluate(s) => s.out_dir.join("manifest.json"),
            RunSpec::Uncertainty(s) => beside(&s.out),
        }
    }
}

pub fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let spec = match cli.command {
        Command::GenModel(a) => resolve_gen_model(a, &file)?,
        Command::GenData(a) => resolve_gen_data(a, &file)?,
        Command::Train(a) => resolve_train(a, &file)?,
        Command::Predict(a) => resolve_predict(a)?,
        Command::Evaluate(a) => resolve_evaluate(a, &file)?,
        Command::Uncertainty(a) => resolve_uncertainty(a, &file)?,
        Command::Replay { manifest } => RunManifest::read(&manifest)?.run,
    };
    execute(spec)
}

fn execute(spec: RunSpec) -> anyhow::Result<()> {
    RunManifest::new(spec.clone()).write(&spec.manifest_path())?;
    match spec {
        RunSpec::GenModel(s) => gen_model(&s),
        RunSpec::GenData(s) => gen_data(&s),
        RunSpec::Train(s) => train(&s),
        RunSpec::Predict(s) => predict(&s),
        RunSpec::Evaluate(s) => evaluate_cmd(&s),
        RunSpec::Uncertainty(s) => uncertainty(&s),
    }
}

fn abs(p: &Path) -> anyhow::Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}

fn resolve_poses(file: &FileConfig, std: Option<f64>, bank: Option<&Path>) -> anyhow::Result<PoseSpec> {
    let mut s = PoseSpec { std: file.poses.std.unwrap_or(0.3), bank: file.poses.bank.clone() };
    set(&mut s.std, std);
    if let Some(b) = bank {
        s.bank = Some(b.to_path_buf());
    }
    s.bank = s.bank.as_deref().map(abs).transpose()?;
    ensure!(s.std >= 0.0 && s.std.is_finite(), "pose std must be finite and non-negative, got {}", s.std);
    Ok(s)
}

impl PoseSpec {
    fn source(&self, model: &BodyModel) -> anyhow::Result<PoseSource> {
        match &self.bank {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading pose bank {}", p.display()))?;
                Ok(PoseSource::from_text(&text, model.pose_dim())?)
            }
            None => Ok(PoseSource::Procedural { std: self.std }),
        }
    }
}

fn resolve_gen_model(a: GenModelArgs, file: &FileConfig) -> anyhow::Result<RunSpec> {
    let d = ToyModelSpec::default();
    Ok(RunSpec::GenModel(GenModelSpec {
        out: abs(&a.out)?,
        seed: file.seed(a.seed),
        vertices: a.vertices.or(file.toy_model.vertices).unwrap_or(d.vertices),
        joints: a.joints.or(file.toy_model.joints).unwrap_or(d.joints),
    }))
}

fn resolve_gen_data(a: GenDataArgs, file: &FileConfig) -> anyhow::Result<RunSpec> {
    let generation = file.generation(&a.generation);
    let augmentation = file.augmentation(&a.augmentation);
    generation.validate()?;
    augmentation.validate()?;
    Ok(RunSpec::GenData(GenDataSpec {
        model: abs(&a.model)?,
        out: abs(&a.out)?,
        seed: file.seed(a.seed),
        subjects: a.subjects.or(file.benchmark.subjects).unwrap_or(200),
        views: a.views.or(file.benchmark.views).unwrap_or(4),
        corrupt: a.corrupt.or(file.benchmark.corrupt).unwrap_or(CorruptMode::Both),
        generation,
        augmentation,
        poses: resolve_poses(file, a.generation.pose_std, a.generation.pose_bank.as_deref())?,
    }))
}

fn resolve_train(a: TrainArgs, file: &FileConfig) -> anyhow::Result<RunSpec> {
    let model = abs(&a.model)?;
    let m = load_model(&model).with_context(|| format!("loading model {}", model.display()))?;
    let generation = file.generation(&a.generation);
    let augmentation = file.augmentation(&a.augmentation);
    generation.validate()?;
    augmentation.validate()?;
    let data = a.data.as_deref().map(abs).transpose()?;
    let input_size = match &data {
        Some(p) => probfuse::synth::DatasetReader::open(p)
            .with_context(|| format!("opening dataset {}", p.display()))?
            .header()
            .width,
        None => generation.image_size,
    };
    let mut network = file.network.clone();
    network.input_size = input_size;
    network.num_keypoints = m.num_keypoints();
    network.pose_dim = m.pose_dim();
    network.num_betas = m.num_betas();
    set(&mut network.pool_factor, a.pool_factor);
    set(&mut network.channels, a.channels);
    set(&mut network.hidden, a.hidden);
    network.validate()?;
    let mut training = file.training.clone();
    training.seed = file.seed(a.seed);
    set(&mut training.epochs, a.epochs);
    set(&mut training.batch_size, a.batch_size);
    set(&mut training.batches_per_epoch, a.batches_per_epoch);
    set(&mut training.learning_rate, a.lr);
    set(&mut training.reproj_samples, a.reproj_samples);
    set(&mut training.weights.glob, a.lambda_glob);
    set(&mut training.weights.reproj, a.lambda_2d);
    training.validate()?;
    let out = abs(&a.out)?;
    let log = match a.log {
        Some(p) => abs(&p)?,
        None => {
            let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
            name.push(".loss.csv");
            out.with_file_name(name)
        }
    };
    Ok(RunSpec::Train(TrainSpec {
        model,
        out,
        data,
        log,
        checkpoint: a.checkpoint.as_deref().map(abs).transpose()?,
        resume: a.resume.as_deref().map(abs).transpose()?,
        generation,
        augmentation,
        poses: resolve_poses(file, a.generation.pose_std, a.generation.pose_bank.as_deref())?,
        network,
        training,
    }))
}

fn resolve_predict(a: PredictArgs) -> anyhow::Result<RunSpec> {
    Ok(RunSpec::Predict(PredictSpec { weights: abs(&a.weights)?, data: abs(&a.data)?, out: abs(&a.out)? }))
}

fn resolve_evaluate(a: EvaluateArgs, file: &FileConfig) -> anyhow::Result<RunSpec> {
    let mut group_sizes = a.group_size.or(file.evaluate.group_sizes.clone()).unwrap_or(vec![1, 2, 4]);
    group_sizes.sort_unstable();
    group_sizes.dedup();
    ensure!(!group_sizes.is_empty() && group_sizes[0] > 0, "group sizes must be positive");
    let mut combinations = Vec::new();
    for c in a.combine.or(file.evaluate.combinations.clone()).unwrap_or(vec![Combination::Pc, Combination::Mean, Combination::Single])
    {
        if !combinations.contains(&c) {
            combinations.push(c);
        }
    }
    ensure!(!combinations.is_empty(), "no combination requested");
    Ok(RunSpec::Evaluate(EvaluateSpec {
        model: abs(&a.model)?,
        data: abs(&a.data)?,
        predictions: abs(&a.predictions)?,
        group_sizes,
        combinations,
        seed: file.seed(a.seed),
        out_dir: abs(&a.out_dir)?,
    }))
}

fn resolve_uncertainty(a: UncertaintyArgs, file: &FileConfig) -> anyhow::Result<RunSpec> {
    let samples = a.samples.or(file.uncertainty.samples).unwrap_or(100);
    ensure!(samples > 0, "--samples must be positive");
    Ok(RunSpec::Uncertainty(UncertaintySpec {
        model: abs(&a.model)?,
        predictions: abs(&a.predictions)?,
        index: a.index,
        samples,
        seed: file.seed(a.seed),
        zero_variance: a.zero_variance,
        out: abs(&a.out)?,
    }))
}

fn read_model(path: &Path) -> anyhow::Result<BodyModel> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

/// Loads a dataset and checks it was generated from `model`.
fn read_matching_dataset(path: &Path, model: &BodyModel) -> anyhow::Result<(DatasetHeader, Vec<SyntheticSample>)> {
    let (header, samples) = read_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?;
    ensure!(
        header.model_sha256 == model_sha256(model)?,
        "dataset {} was generated from a different body model",
        path.display()
    );
    Ok((header, samples))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn gen_model(s: &GenModelSpec) -> anyhow::Result<()> {
    let model = generate_toy_model(&ToyModelSpec { seed: s.seed, vertices: s.vertices, joints: s.joints })?;
    save_model(&model, &s.out).with_context(|| format!("writing {}", s.out.display()))?;
    println!(
        "model {}: {} vertices, {} joints, {} keypoints, {} shape coefficients, sha256 {}",
        s.out.display(),
        model.num_vertices(),
        model.num_joints(),
        model.num_keypoints(),
        model.num_betas(),
        model_sha256(&model)?
    );
    Ok(())
}

fn gen_data(s: &GenDataSpec) -> anyhow::Result<()> {
    let model = read_model(&s.model)?;
    let source = s.poses.source(&model)?;
    let spec = BenchmarkSpec { num_subjects: s.subjects, poses_per_subject: s.views, corrupt: s.corrupt, seed: s.seed };
    let samples = generate_benchmark(&model, &source, &s.generation, &s.augmentation, &spec)?;
    let header = DatasetHeader {
        seed: s.seed,
        generation: s.generation,
        augmentation: s.augmentation,
        corrupt: s.corrupt,
        num_subjects: s.subjects,
        poses_per_subject: s.views,
        width: s.generation.image_size,
        height: s.generation.image_size,
        num_keypoints: model.num_keypoints(),
        pose_dim: model.pose_dim(),
        num_betas: model.num_betas(),
        model_sha256: model_sha256(&model)?,
    };
    write_dataset(&s.out, &header, &samples).with_context(|| format!("writing {}", s.out.display()))?;
    let sum = summarize(&samples, model.meta().lr_pairs.len());
    println!("samples {} ({} corrupted)", sum.samples, sum.corrupted);
    println!("mean silhouette coverage {:.4}", sum.mean_silhouette_coverage);
    println!("mean visible joints {:.2} of {}", sum.mean_visible_joints, model.num_keypoints());
    if sum.corrupted > 0 {
        let a = &s.augmentation;
        println!("augmentation incidence among corrupted samples (observed / configured):");
        for (name, obs, cfg) in [
            ("body-part occlusion", sum.body_part_occlusion, a.body_part_occlusion_prob),
            ("half-image occlusion", sum.half_image_occlusion, a.half_image_occlusion_prob),
            ("occlusion box", sum.occlusion_box, a.occlusion_box_prob),
            ("left/right swap per pair", sum.joint_lr_swap, a.joint_lr_swap_prob),
            ("joint removal per joint", sum.joint_removal, a.joint_removal_prob),
        ] {
            println!("  {name:<26} {obs:.4} / {cfg:.4}");
        }
    }
    Ok(())
}

fn write_loss_log(path: &Path, state: &TrainState) -> anyhow::Result<()> {
    let mut s = String::from("epoch,total,nll,glob,reproj\n");
    for l in &state.log {
        s += &format!("{},{},{},{},{}\n", l.epoch, l.total, l.nll, l.glob, l.reproj);
    }
    write_file(path, s.as_bytes())
}

fn train(s: &TrainSpec) -> anyhow::Result<()> {
    let model = read_model(&s.model)?;
    let fixed = s.data.as_deref().map(|p| read_matching_dataset(p, &model)).transpose()?;
    let source = s.poses.source(&model)?;
    let data = match &fixed {
        Some((_, samples)) => TrainData::Fixed(samples),
        None => TrainData::Stream { source: &source, generation: &s.generation, augmentation: &s.augmentation },
    };
    let mut state = match &s.resume {
        Some(p) => {
            let mut st = load_checkpoint(p).with_context(|| format!("loading checkpoint {}", p.display()))?;
            ensure!(st.net.config() == &s.network, "checkpoint {} has a different network configuration", p.display());
            let mut expected = s.training.clone();
            expected.epochs = st.config.epochs;
            ensure!(st.config == expected, "checkpoint {} was trained with a different configuration", p.display());
            st.config.epochs = s.training.epochs;
            st
        }
        None => TrainState::new(PredictorNet::new(s.network.clone(), s.training.seed)?, s.training.clone())?,
    };
    eprintln!(
        "training {} parameters for {} epochs (starting at epoch {})",
        state.net.num_params(),
        state.config.epochs,
        state.epochs_done()
    );
    let started = std::time::Instant::now();
    probfuse::predictor::train_with(&mut state, &model, data, &mut |st| {
        let l = st.log.last().expect("an epoch was logged");
        eprintln!(
            "epoch {:>4}/{}  total {:.4}  nll {:.4}  glob {:.4}  reproj {:.4}  ({:.0}s)",
            l.epoch + 1,
            st.config.epochs,
            l.total,
            l.nll,
            l.glob,
            l.reproj,
            started.elapsed().as_secs_f64()
        );
        write_loss_log(&s.log, st).map_err(|e| probfuse::Error::Io(std::io::Error::other(format!("{e:#}"))))?;
        if let Some(p) = &s.checkpoint {
            save_checkpoint(st, p)?;
        }
        Ok(())
    })?;
    write_loss_log(&s.log, &state)?;
    save_weights(&state.net, &s.out).with_context(|| format!("writing {}", s.out.display()))?;
    println!("weights {} after {} epochs", s.out.display(), state.epochs_done());
    Ok(())
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub index: usize,
    pub subject: u32,
    pub view: u32,
    pub corrupted: bool,
    pub pose_mean: Vec<f64>,
    pub pose_var: Vec<f64>,
    pub shape_mean: Vec<f64>,
    pub shape_var: Vec<f64>,
    pub global: [f64; 3],
    /// Weak-perspective `[s, tx, ty]`.
    pub camera: [f64; 3],
}

impl PredictionRecord {
    fn to_prediction(&self) -> anyhow::Result<PredictionSet> {
        Ok(PredictionSet {
            pose: GaussianDiag::new(self.pose_mean.clone(), self.pose_var.clone())?,
            shape: GaussianDiag::new(self.shape_mean.clone(), self.shape_var.clone())?,
            global: self.global,
            camera: WeakPerspCamera::new(self.camera[0], self.camera[1], self.camera[2])?,
        })
    }
}

fn read_predictions(path: &Path) -> anyhow::Result<Vec<PredictionRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading predictions {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: PredictionRecord =
            serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), n + 1))?;
        ensure!(r.index == out.len(), "{} line {}: expected index {}, found {}", path.display(), n + 1, out.len(), r.index);
        out.push(r);
    }
    Ok(out)
}

fn predict(s: &PredictSpec) -> anyhow::Result<()> {
    let net = load_weights(&s.weights, None).with_context(|| format!("loading weights {}", s.weights.display()))?;
    let (header, samples) = read_dataset(&s.data).with_context(|| format!("loading dataset {}", s.data.display()))?;
    let c = net.config();
    if header.width != c.input_size || header.height != c.input_size || header.num_keypoints != c.num_keypoints {
        bail!(
            "weights expect {}x{} proxies with {} keypoints but the dataset has {}x{} with {}",
            c.input_size,
            c.input_size,
            c.num_keypoints,
            header.width,
            header.height,
            header.num_keypoints
        );
    }
    let preds = predict_all(&net, samples.iter().map(|s| &s.proxy))?;
    let mut out = Vec::new();
    for (i, (sample, p)) in samples.iter().zip(&preds).enumerate() {
        let r = PredictionRecord {
            index: i,
            subject: sample.subject,
            view: sample.view,
            corrupted: sample.corrupted,
            pose_mean: p.pose.mean().to_vec(),
            pose_var: p.pose.var().to_vec(),
            shape_mean: p.shape.mean().to_vec(),
            shape_var: p.shape.var().to_vec(),
            global: p.global,
            camera: [p.camera.scale, p.camera.tx, p.camera.ty],
        };
        serde_json::to_writer(&mut out, &r)?;
        out.push(b'\n');
    }
    write_file(&s.out, &out)?;
    println!("{} predictions written to {}", preds.len(), s.out.display());
    Ok(())
}

fn samples_csv_name(c: Combination, n: usize) -> String {
    format!("samples_{}_n{n}.csv", c.name())
}

fn evaluate_outputs(s: &EvaluateSpec) -> Vec<PathBuf> {
    let mut names = vec!["sweep.csv".to_string(), "sweep.txt".into(), "report.json".into()];
    names.extend(["sweep.svg".to_string(), "sorted_pve_t_sc.svg".into()]);
    for &n in &s.group_sizes {
        for &c in &s.combinations {
            names.push(samples_csv_name(c, n));
        }
    }
    names.into_iter().map(|n| s.out_dir.join(n)).collect()
}

/// Aggregates of one evaluation, without the per-sample rows.
#[derive(Serialize)]
struct ReportSummary<'a> {
    group_size: usize,
    combination: Combination,
    groups: usize,
    all: &'a SubsetSummary,
    clean: &'a SubsetSummary,
    corrupted: &'a SubsetSummary,
}

fn evaluate_cmd(s: &EvaluateSpec) -> anyhow::Result<()> {
    let model = read_model(&s.model)?;
    let (_, samples) = read_matching_dataset(&s.data, &model)?;
    let records = read_predictions(&s.predictions)?;
    ensure!(
        records.len() == samples.len(),
        "{} holds {} predictions but the dataset has {} samples",
        s.predictions.display(),
        records.len(),
        samples.len()
    );
    let preds = records.iter().map(PredictionRecord::to_prediction).collect::<anyhow::Result<Vec<_>>>()?;
    std::fs::create_dir_all(&s.out_dir).with_context(|| format!("creating {}", s.out_dir.display()))?;

    let mut reports: Vec<(usize, MetricsReport)> = Vec::new();
    let mut single: Option<MetricsReport> = None;
    for &n in &s.group_sizes {
        for &c in &s.combinations {
            // singles do not depend on the group size
            let report = match (c, &single) {
                (Combination::Single, Some(r)) => MetricsReport { config: EvalConfig { group_size: n, ..r.config }, ..r.clone() },
                _ => evaluate(&samples, &preds, &model, &EvalConfig { group_size: n, combination: c, seed: s.seed })?,
            };
            if c == Combination::Single {
                single = Some(report.clone());
            }
            write_file(&s.out_dir.join(samples_csv_name(c, n)), report.to_csv().as_bytes())?;
            reports.push((n, report));
        }
    }

    let mut csv = String::from("group_size,combination,subset,count,mpjpe_mm,mpjpe_sc_mm,mpjpe_pa_mm,pve_t_sc_mm\n");
    let mut txt = format!(
        "{:>5}  {:<11}  {:<9}  {:>6}  {:>10}  {:>10}  {:>10}  {:>10}\n",
        "N", "combination", "subset", "count", "MPJPE", "MPJPE-SC", "MPJPE-PA", "PVE-T-SC"
    );
    for (n, r) in &reports {
        for (subset, sum) in [("all", &r.all), ("clean", &r.clean), ("corrupted", &r.corrupted)] {
            if sum.count == 0 {
                continue;
            }
            let name = r.config.combination.name();
            csv += &format!(
                "{n},{name},{subset},{},{:.6},{:.6},{:.6},{:.6}\n",
                sum.count, sum.mpjpe, sum.mpjpe_sc, sum.mpjpe_pa, sum.pve_t_sc
            );
            txt += &format!(
                "{n:>5}  {name:<11}  {subset:<9}  {:>6}  {:>10.2}  {:>10.2}  {:>10.2}  {:>10.2}\n",
                sum.count, sum.mpjpe, sum.mpjpe_sc, sum.mpjpe_pa, sum.pve_t_sc
            );
        }
    }
    txt += "errors in mm\n";
    write_file(&s.out_dir.join("sweep.csv"), csv.as_bytes())?;
    write_file(&s.out_dir.join("sweep.txt"), txt.as_bytes())?;
    let summaries: Vec<ReportSummary> = reports
        .iter()
        .map(|(n, r)| ReportSummary {
            group_size: *n,
            combination: r.config.combination,
            groups: r.groups,
            all: &r.all,
            clean: &r.clean,
            corrupted: &r.corrupted,
        })
        .collect();
    write_file(&s.out_dir.join("report.json"), (serde_json::to_string_pretty(&summaries)? + "\n").as_bytes())?;

    let series: Vec<plot::Series> = s
        .combinations
        .iter()
        .map(|&c| plot::Series {
            name: c.name().to_string(),
            points: reports
                .iter()
                .filter(|(_, r)| r.config.combination == c)
                .map(|(n, r)| (*n as f64, r.all.pve_t_sc))
                .collect(),
        })
        .collect();
    plot::line_chart(&s.out_dir.join("sweep.svg"), "Mean PVE-T-SC vs maximum group size", "maximum group size N", "PVE-T-SC (mm)", &series)?;
    let largest = *s.group_sizes.last().expect("non-empty");
    let curves: Vec<plot::Series> = reports
        .iter()
        .filter(|(n, _)| *n == largest)
        .map(|(_, r)| {
            let mut v: Vec<f64> = r.samples.iter().map(|x| x.pve_t_sc).collect();
            v.sort_by(f64::total_cmp);
            plot::Series {
                name: r.config.combination.name().to_string(),
                points: v.iter().enumerate().map(|(i, &e)| (i as f64, e)).collect(),
            }
        })
        .collect();
    plot::line_chart(
        &s.out_dir.join("sorted_pve_t_sc.svg"),
        &format!("Sorted per-sample PVE-T-SC (N = {largest})"),
        "sample rank",
        "PVE-T-SC (mm)",
        &curves,
    )?;
    std::io::stdout().write_all(txt.as_bytes())?;
    Ok(())
}

fn uncertainty(s: &UncertaintySpec) -> anyhow::Result<()> {
    let model = read_model(&s.model)?;
    let records = read_predictions(&s.predictions)?;
    let Some(r) = records.get(s.index) else {
        bail!("prediction index {} out of range ({} predictions)", s.index, records.len());
    };
    let mut rng = substream(s.seed, "uncertainty", s.index as u64);
    let values = if s.zero_variance {
        let (zp, zs) = (vec![0.0; r.pose_var.len()], vec![0.0; r.shape_var.len()]);
        let global = GlobalRotation(r.global);
        uncertainty_from_params(&model, (&r.pose_mean, &zp), (&r.shape_mean, &zs), &global, s.samples, &mut rng)?
    } else {
        per_vertex_uncertainty(&r.to_prediction()?, &model, s.samples, &mut rng)?
    };
    let mesh = model.forward(&PoseParams(r.pose_mean.clone()), &ShapeParams(r.shape_mean.clone()), &GlobalRotation(r.global))?;
    write_file(&s.out, mesh_to_ply(&mesh, &values, "uncertainty_cm")?.as_bytes())?;
    let max = values.iter().copied().fold(0.0, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    println!("per-vertex uncertainty over {} samples: mean {mean:.3} cm, max {max:.3} cm -> {}", s.samples, s.out.display());
    Ok(())
}
