//! Synthetic training and evaluation data: random bodies rendered to
//! silhouettes and 2D joints, optionally corrupted to mimic detector
//! failures.

mod dataset;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::body_model::{BodyModel, GlobalRotation, PoseParams, ShapeParams, VertexMesh};
use crate::camera::{pixel_of, rasterize_into, threshold_detections, Mask, PerspCamera, ProxyRepresentation};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::rotation::{axis_angle_from_matrix, mat_mul, rodrigues};

pub use dataset::{read_dataset, write_dataset, DatasetHeader, DatasetReader, DATASET_FORMAT_VERSION};

/// Camera re-draws allowed before generation gives up.
pub const MAX_ATTEMPTS: usize = 10;

/// Minimum vertex depth (m) in front of the camera for an accepted draw,
/// before adding the vertex-noise half-width.
pub const NEAR_PLANE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub body_part_occlusion_prob: f64,
    pub joint_lr_swap_prob: f64,
    pub half_image_occlusion_prob: f64,
    pub joint_removal_prob: f64,
    /// Pixels; noise is uniform in `[-r, r]` per coordinate.
    pub joint_noise_range: f64,
    /// Meters; noise is uniform in `[-r, r]` per coordinate.
    pub vertex_noise_range: f64,
    pub occlusion_box_prob: f64,
    /// Pixels (square side).
    pub occlusion_box_size: usize,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            body_part_occlusion_prob: 0.1,
            joint_lr_swap_prob: 0.1,
            half_image_occlusion_prob: 0.05,
            joint_removal_prob: 0.1,
            joint_noise_range: 8.0,
            vertex_noise_range: 0.01,
            occlusion_box_prob: 0.5,
            occlusion_box_size: 48,
        }
    }
}

impl AugmentationConfig {
    /// All probabilities and ranges zero.
    pub fn disabled() -> Self {
        Self {
            body_part_occlusion_prob: 0.0,
            joint_lr_swap_prob: 0.0,
            half_image_occlusion_prob: 0.0,
            joint_removal_prob: 0.0,
            joint_noise_range: 0.0,
            vertex_noise_range: 0.0,
            occlusion_box_prob: 0.0,
            occlusion_box_size: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("body_part_occlusion_prob", self.body_part_occlusion_prob),
            ("joint_lr_swap_prob", self.joint_lr_swap_prob),
            ("half_image_occlusion_prob", self.half_image_occlusion_prob),
            ("joint_removal_prob", self.joint_removal_prob),
            ("occlusion_box_prob", self.occlusion_box_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        for (name, r) in [("joint_noise_range", self.joint_noise_range), ("vertex_noise_range", self.vertex_noise_range)] {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::Config(format!("{name} must be a finite non-negative half-width, got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub shape_mean: f64,
    pub shape_var: f64,
    /// Shape coefficients are redrawn until `|β_i| ≤ shape_limit`.
    pub shape_limit: f64,
    /// Meters.
    pub cam_translation_mean: [f64; 3],
    /// Per-axis variances, m².
    pub cam_translation_var: [f64; 3],
    /// Pixels.
    pub focal: f64,
    /// Square proxy side in pixels.
    pub image_size: usize,
    pub confidence_threshold: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            shape_mean: 0.0,
            shape_var: 2.25,
            shape_limit: 6.0,
            cam_translation_mean: [0.0, -0.2, 2.5],
            cam_translation_var: [0.05, 0.05, 0.25],
            focal: 300.0,
            image_size: 256,
            confidence_threshold: 0.025,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.shape_var, self.shape_limit, self.focal]
            .into_iter()
            .chain(self.cam_translation_var)
            .all(|v| v > 0.0 && v.is_finite());
        if !positive {
            return Err(Error::Config("variances, shape limit and focal length must be positive".into()));
        }
        if self.image_size < 8 {
            return Err(Error::Config(format!("image size {} is too small", self.image_size)));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Config("confidence threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptMode {
    Off,
    On,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageHalf {
    Top,
    Bottom,
    Left,
    Right,
}

/// Which corruptions fired for a sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub vertex_noise: bool,
    pub occluded_part: Option<u16>,
    pub half_image: Option<ImageHalf>,
    /// Top-left corner `(x, y)`.
    pub occlusion_box: Option<[usize; 2]>,
    /// Indices into the model's left/right pair list.
    pub swapped_pairs: Vec<usize>,
    pub removed_joints: Vec<usize>,
    pub joint_noise: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    /// Silhouette, input joints (heatmap centers) and visibility ω.
    pub proxy: ProxyRepresentation,
    pub pose: PoseParams,
    pub shape: ShapeParams,
    pub global: GlobalRotation,
    pub camera: PerspCamera,
    /// Uncorrupted projected keypoints in pixels.
    pub target_joints: Vec<[f64; 2]>,
    pub corrupted: bool,
    pub augmentation: AugmentationRecord,
    pub subject: u32,
    pub view: u32,
}

impl SyntheticSample {
    pub fn visibility(&self) -> &[bool] {
        &self.proxy.visible
    }
}

/// `β ~ N(mean, var·I)`, each coefficient truncated to `|β_i| ≤ limit` by
/// rejection.
pub fn sample_shape(rng: &mut ChaCha8Rng, cfg: &GenerationConfig, num_betas: usize) -> ShapeParams {
    let std = cfg.shape_var.sqrt();
    ShapeParams(
        (0..num_betas)
            .map(|_| loop {
                let z: f64 = rng.sample(StandardNormal);
                let b = cfg.shape_mean + std * z;
                if b.abs() <= cfg.shape_limit {
                    break b;
                }
            })
            .collect(),
    )
}

pub fn sample_camera(rng: &mut ChaCha8Rng, cfg: &GenerationConfig) -> Result<PerspCamera> {
    let mut t = [0.0; 3];
    for (c, tc) in t.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        *tc = cfg.cam_translation_mean[c] + cfg.cam_translation_var[c].sqrt() * z;
    }
    if !(t[2] > 0.0) {
        return Err(Error::BehindCamera { index: 0, depth: t[2] });
    }
    PerspCamera::new(cfg.focal, cfg.image_size, cfg.image_size, t)
}

/// Symmetric per-component limit (radians) for procedurally drawn joint
/// rotations, by joint index in the 24-joint layout.
fn joint_limit(j: usize) -> f64 {
    match j {
        3 | 6 | 9 | 7 | 8 | 22 | 23 => 0.4,
        10 | 11 | 13 | 14 => 0.3,
        12 | 15 => 0.5,
        1 | 2 => 0.8,
        20 | 21 => 0.6,
        _ => 1.0,
    }
}

/// Yaw placing the subject's front, back, left or right towards the camera.
pub fn view_yaw(view: u32) -> f64 {
    // the camera looks along +z and the rest-pose body faces +z, so the
    // front view needs a half turn
    let yaw = std::f64::consts::PI + std::f64::consts::FRAC_PI_2 * (view % 4) as f64;
    wrap_angle(yaw)
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let w = a.rem_euclid(tau);
    if w > std::f64::consts::PI {
        w - tau
    } else {
        w
    }
}

/// Small tilt and yaw jitter composed with a yaw, returned as a canonical
/// axis-angle vector.
fn jittered_yaw(rng: &mut ChaCha8Rng, yaw: f64, jitter: f64) -> GlobalRotation {
    let mut n = || -> f64 { rng.sample::<f64, _>(StandardNormal) * jitter };
    let (pitch, dyaw, roll) = (n(), n(), n());
    let r = mat_mul(&rodrigues(&[0.0, wrap_angle(yaw + dyaw), 0.0]), &rodrigues(&[pitch, 0.0, roll]));
    GlobalRotation(axis_angle_from_matrix(&r))
}

/// Bank of poses (θ with γ) to draw training and evaluation bodies from.
#[derive(Debug, Clone, PartialEq)]
pub enum PoseSource {
    /// Per-joint Gaussian axis-angle components with standard deviation
    /// `std`, clamped to joint-specific limits.
    Procedural { std: f64 },
    Bank(Vec<(GlobalRotation, PoseParams)>),
}

impl Default for PoseSource {
    fn default() -> Self {
        PoseSource::Procedural { std: 0.3 }
    }
}

impl PoseSource {
    /// Parses a bank: one pose per non-empty line, whitespace-separated
    /// numbers `γx γy γz θ_1 … θ_P`. Lines starting with `#` are comments.
    pub fn from_text(text: &str, pose_dim: usize) -> Result<Self> {
        let mut bank = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Format(format!("pose bank line {}: {e}", n + 1))))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != 3 + pose_dim {
                return Err(Error::Format(format!(
                    "pose bank line {}: expected {} numbers, found {}",
                    n + 1,
                    3 + pose_dim,
                    vals.len()
                )));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("pose bank line {}: non-finite value", n + 1)));
            }
            let canon = |v: &[f64]| axis_angle_from_matrix(&rodrigues(&[v[0], v[1], v[2]]));
            let global = GlobalRotation(canon(&vals[..3]));
            let pose = PoseParams(vals[3..].chunks_exact(3).flat_map(canon).collect());
            bank.push((global, pose));
        }
        if bank.is_empty() {
            return Err(Error::Format("pose bank is empty".into()));
        }
        Ok(PoseSource::Bank(bank))
    }

    /// Draws `(θ, γ)`. With `view` set, γ becomes the canonical view
    /// rotation with a little jitter; otherwise procedural γ has uniform yaw.
    pub fn sample(&self, model: &BodyModel, rng: &mut ChaCha8Rng, view: Option<u32>) -> Result<(PoseParams, GlobalRotation)> {
        let (pose, global) = match self {
            PoseSource::Procedural { std } => {
                let mut theta = Vec::with_capacity(model.pose_dim());
                for j in 1..model.num_joints() {
                    let lim = joint_limit(j);
                    for _ in 0..3 {
                        let z: f64 = rng.sample(StandardNormal);
                        theta.push((std * z).clamp(-lim, lim));
                    }
                }
                let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                (PoseParams(theta), jittered_yaw(rng, yaw, 0.1))
            }
            PoseSource::Bank(bank) => {
                let (g, p) = &bank[rng.random_range(0..bank.len())];
                Error::check_dim("pose bank entry", model.pose_dim(), p.0.len())?;
                (p.clone(), *g)
            }
        };
        let global = match view {
            Some(v) => jittered_yaw(rng, view_yaw(v), 0.05),
            None => global,
        };
        Ok((pose, global))
    }
}

/// Clean rendering of one labelled body.
#[derive(Debug, Clone)]
struct CleanRender {
    mesh: VertexMesh,
    camera: PerspCamera,
    pixels: Vec<[f64; 2]>,
    silhouette: Mask,
    target_joints: Vec<[f64; 2]>,
}

/// Renders the labels under a freshly drawn camera. Cameras closer than
/// `min_depth` to any vertex are redrawn so later vertex noise cannot push
/// the mesh behind the image plane.
fn render_clean(
    model: &BodyModel,
    labels: (&PoseParams, &ShapeParams, &GlobalRotation),
    cfg: &GenerationConfig,
    min_depth: f64,
    rng: &mut ChaCha8Rng,
) -> Result<CleanRender> {
    let (pose, shape, global) = labels;
    let mesh = model.forward(pose, shape, global)?;
    let keypoints = model.keypoints(pose, shape, global)?;
    let mut reason = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let camera = match sample_camera(rng, cfg) {
            Ok(c) => c,
            Err(e) => {
                reason = e.to_string();
                continue;
            }
        };
        let tz = camera.translation[2];
        if let Some((index, v)) = mesh.vertices.iter().enumerate().find(|(_, v)| v[2] + tz < min_depth) {
            reason = Error::BehindCamera { index, depth: v[2] + tz }.to_string();
            continue;
        }
        let (pixels, target_joints) = match (camera.project(&mesh.vertices), camera.project(&keypoints)) {
            (Ok(p), Ok(j)) => (p, j),
            (Err(e), _) | (_, Err(e)) => {
                reason = e.to_string();
                continue;
            }
        };
        let mut silhouette = Mask::new(camera.width, camera.height);
        rasterize_into(&mut silhouette, &pixels, mesh.triangles.iter().copied());
        if silhouette.count() == 0 {
            reason = "empty silhouette".into();
            continue;
        }
        return Ok(CleanRender { mesh, camera, pixels, silhouette, target_joints });
    }
    Err(Error::Generation { attempts: MAX_ATTEMPTS, reason })
}

/// Pixels covered by triangles of the given parts (a triangle belongs to
/// the part of its first vertex) and pixels covered by any other triangle.
fn part_coverage(model: &BodyModel, pixels: &[[f64; 2]], parts: &[u16], w: usize, h: usize) -> (Mask, Mask) {
    let labels = model.part_labels();
    let (mut inside, mut outside) = (Mask::new(w, h), Mask::new(w, h));
    let tris = model.triangles();
    rasterize_into(&mut inside, pixels, tris.iter().copied().filter(|t| parts.contains(&labels[t[0] as usize])));
    rasterize_into(&mut outside, pixels, tris.iter().copied().filter(|t| !parts.contains(&labels[t[0] as usize])));
    (inside, outside)
}

/// Clears silhouette pixels covered only by triangles of `parts`; returns
/// the full coverage of those parts.
pub fn occlude_body_parts(silhouette: &mut Mask, model: &BodyModel, pixels: &[[f64; 2]], parts: &[u16]) -> Mask {
    let (inside, outside) = part_coverage(model, pixels, parts, silhouette.width, silhouette.height);
    for ((s, i), o) in silhouette.data.iter_mut().zip(&inside.data).zip(&outside.data) {
        if *i && !*o {
            *s = false;
        }
    }
    inside
}

/// Exchanges left/right joint coordinates and visibilities for each pair
/// with probability `prob`; returns the swapped pair indices.
pub fn swap_lr_joints(
    joints: &mut [[f64; 2]],
    visible: &mut [bool],
    pairs: &[[usize; 2]],
    prob: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut swapped = Vec::new();
    for (k, &[a, b]) in pairs.iter().enumerate() {
        if rng.random::<f64>() < prob {
            joints.swap(a, b);
            visible.swap(a, b);
            swapped.push(k);
        }
    }
    swapped
}

fn fill_rect(mask: &mut Mask, x0: usize, y0: usize, x1: usize, y1: usize) {
    for y in y0..y1.min(mask.height) {
        for x in x0..x1.min(mask.width) {
            mask.set(x, y, true);
        }
    }
}

fn corrupt(
    model: &BodyModel,
    clean: &CleanRender,
    cfg: &GenerationConfig,
    aug: &AugmentationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Mask, Vec<[f64; 2]>, Vec<bool>, AugmentationRecord)> {
    let (w, h) = (clean.camera.width, clean.camera.height);
    let mut record = AugmentationRecord::default();
    // silhouette pixels hidden by an occluder; joints there become invisible
    let mut occluder = Mask::new(w, h);

    let mut pixels = clean.pixels.clone();
    let mut silhouette = clean.silhouette.clone();
    if aug.vertex_noise_range > 0.0 {
        let r = aug.vertex_noise_range;
        let noisy: Vec<[f64; 3]> = clean
            .mesh
            .vertices
            .iter()
            .map(|v| [v[0] + rng.random_range(-r..=r), v[1] + rng.random_range(-r..=r), v[2] + rng.random_range(-r..=r)])
            .collect();
        pixels = clean.camera.project(&noisy)?;
        silhouette = Mask::new(w, h);
        rasterize_into(&mut silhouette, &pixels, model.triangles().iter().copied());
        record.vertex_noise = true;
    }
    if rng.random::<f64>() < aug.body_part_occlusion_prob && model.num_parts() > 0 {
        let part = rng.random_range(0..model.num_parts()) as u16;
        let covered = occlude_body_parts(&mut silhouette, model, &pixels, &[part]);
        occluder.data.iter_mut().zip(&covered.data).for_each(|(o, c)| *o |= *c);
        record.occluded_part = Some(part);
    }
    if rng.random::<f64>() < aug.half_image_occlusion_prob {
        let half = [ImageHalf::Top, ImageHalf::Bottom, ImageHalf::Left, ImageHalf::Right][rng.random_range(0..4)];
        let (x0, y0, x1, y1) = match half {
            ImageHalf::Top => (0, 0, w, h / 2),
            ImageHalf::Bottom => (0, h / 2, w, h),
            ImageHalf::Left => (0, 0, w / 2, h),
            ImageHalf::Right => (w / 2, 0, w, h),
        };
        fill_rect(&mut occluder, x0, y0, x1, y1);
        record.half_image = Some(half);
    }
    if rng.random::<f64>() < aug.occlusion_box_prob && aug.occlusion_box_size > 0 {
        let s = aug.occlusion_box_size.min(w).min(h);
        let (x, y) = (rng.random_range(0..=w - s), rng.random_range(0..=h - s));
        fill_rect(&mut occluder, x, y, x + s, y + s);
        record.occlusion_box = Some([x, y]);
    }
    silhouette.data.iter_mut().zip(&occluder.data).for_each(|(s, o)| *s &= !*o);

    let l = clean.target_joints.len();
    let mut joints = clean.target_joints.clone();
    // visibility is re-derived from final positions below; the swap only
    // needs to carry the coordinates
    let mut in_frame: Vec<bool> = joints.iter().map(|p| pixel_of(*p, w, h).is_some()).collect();
    record.swapped_pairs = swap_lr_joints(&mut joints, &mut in_frame, &model.meta().lr_pairs, aug.joint_lr_swap_prob, rng);
    let mut removed = vec![false; l];
    for (i, r) in removed.iter_mut().enumerate() {
        if rng.random::<f64>() < aug.joint_removal_prob {
            *r = true;
            record.removed_joints.push(i);
        }
    }
    if aug.joint_noise_range > 0.0 {
        let r = aug.joint_noise_range;
        for p in joints.iter_mut() {
            p[0] += rng.random_range(-r..=r);
            p[1] += rng.random_range(-r..=r);
        }
        record.joint_noise = true;
    }
    let confidences: Vec<f64> = joints
        .iter()
        .zip(&removed)
        .map(|(p, &gone)| match pixel_of(*p, w, h) {
            Some((x, y)) if !gone && !occluder.get(x, y) => 1.0,
            _ => 0.0,
        })
        .collect();
    let visible = threshold_detections(&confidences, cfg.confidence_threshold);
    Ok((silhouette, joints, visible, record))
}

fn assemble(
    model: &BodyModel,
    labels: (PoseParams, ShapeParams, GlobalRotation),
    clean: &CleanRender,
    cfg: &GenerationConfig,
    aug: Option<(&AugmentationConfig, &mut ChaCha8Rng)>,
) -> Result<SyntheticSample> {
    let (silhouette, joints, visible, augmentation, corrupted) = match aug {
        Some((aug, rng)) => {
            let (s, j, v, r) = corrupt(model, clean, cfg, aug, rng)?;
            (s, j, v, r, true)
        }
        None => {
            let visible = vec![true; clean.target_joints.len()];
            (clean.silhouette.clone(), clean.target_joints.clone(), visible, AugmentationRecord::default(), false)
        }
    };
    let (pose, shape, global) = labels;
    Ok(SyntheticSample {
        proxy: ProxyRepresentation::new(silhouette, joints, visible)?,
        pose,
        shape,
        global,
        camera: clean.camera,
        target_joints: clean.target_joints.clone(),
        corrupted,
        augmentation,
        subject: 0,
        view: 0,
    })
}

/// One random sample: pose from `source`, shape, camera, render, then the
/// augmentation suite when `corrupt` is set.
pub fn generate_sample(
    model: &BodyModel,
    source: &PoseSource,
    cfg: &GenerationConfig,
    aug: &AugmentationConfig,
    rng: &mut ChaCha8Rng,
    corrupt: bool,
) -> Result<SyntheticSample> {
    let (pose, global) = source.sample(model, rng, None)?;
    let shape = sample_shape(rng, cfg, model.num_betas());
    let clean = render_clean(model, (&pose, &shape, &global), cfg, NEAR_PLANE + aug.vertex_noise_range, rng)?;
    assemble(model, (pose, shape, global), &clean, cfg, corrupt.then_some((aug, rng)))
}

/// Corrupted training sample `index` of the stream for `seed`.
pub fn training_sample(
    model: &BodyModel,
    source: &PoseSource,
    cfg: &GenerationConfig,
    aug: &AugmentationConfig,
    seed: u64,
    index: u64,
) -> Result<SyntheticSample> {
    generate_sample(model, source, cfg, aug, &mut substream(seed, "train-sample", index), true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub num_subjects: usize,
    pub poses_per_subject: usize,
    pub corrupt: CorruptMode,
    pub seed: u64,
}

/// Evaluation set: per subject one shape, per view a pose with the
/// canonical front/back/left/right rotation cycling with the view index.
/// With [`CorruptMode::Both`] each view yields a clean sample followed by
/// a corrupted copy sharing labels and camera.
pub fn generate_benchmark(
    model: &BodyModel,
    source: &PoseSource,
    cfg: &GenerationConfig,
    aug: &AugmentationConfig,
    spec: &BenchmarkSpec,
) -> Result<Vec<SyntheticSample>> {
    cfg.validate()?;
    aug.validate()?;
    let mut out = Vec::new();
    for s in 0..spec.num_subjects {
        let shape = sample_shape(&mut substream(spec.seed, "subject-shape", s as u64), cfg, model.num_betas());
        for v in 0..spec.poses_per_subject {
            let idx = (s * spec.poses_per_subject + v) as u64;
            let (pose, global) = source.sample(model, &mut substream(spec.seed, "view-pose", idx), Some(v as u32))?;
            let near = NEAR_PLANE + aug.vertex_noise_range;
            let clean = render_clean(model, (&pose, &shape, &global), cfg, near, &mut substream(spec.seed, "view-camera", idx))?;
            let labels = (pose, shape.clone(), global);
            let mut push = |mut sample: SyntheticSample| {
                sample.subject = s as u32;
                sample.view = v as u32;
                out.push(sample);
            };
            if spec.corrupt != CorruptMode::On {
                push(assemble(model, labels.clone(), &clean, cfg, None)?);
            }
            if spec.corrupt != CorruptMode::Off {
                let mut rng = substream(spec.seed, "view-augment", idx);
                push(assemble(model, labels, &clean, cfg, Some((aug, &mut rng)))?);
            }
        }
    }
    Ok(out)
}

/// Incidence of each augmentation over a set of samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AugmentationSummary {
    pub samples: usize,
    pub corrupted: usize,
    pub mean_silhouette_coverage: f64,
    pub body_part_occlusion: f64,
    pub half_image_occlusion: f64,
    pub occlusion_box: f64,
    /// Fraction of left/right pairs swapped.
    pub joint_lr_swap: f64,
    /// Fraction of joints removed.
    pub joint_removal: f64,
    pub mean_visible_joints: f64,
}

pub fn summarize(samples: &[SyntheticSample], num_pairs: usize) -> AugmentationSummary {
    let n = samples.len().max(1) as f64;
    let corrupted: Vec<&SyntheticSample> = samples.iter().filter(|s| s.corrupted).collect();
    let c = corrupted.len().max(1) as f64;
    let frac = |f: &dyn Fn(&SyntheticSample) -> bool| corrupted.iter().filter(|s| f(s)).count() as f64 / c;
    let joints = samples.first().map_or(1, |s| s.proxy.num_joints()).max(1) as f64;
    AugmentationSummary {
        samples: samples.len(),
        corrupted: corrupted.len(),
        mean_silhouette_coverage: samples.iter().map(|s| s.proxy.silhouette.coverage()).sum::<f64>() / n,
        body_part_occlusion: frac(&|s| s.augmentation.occluded_part.is_some()),
        half_image_occlusion: frac(&|s| s.augmentation.half_image.is_some()),
        occlusion_box: frac(&|s| s.augmentation.occlusion_box.is_some()),
        joint_lr_swap: corrupted.iter().map(|s| s.augmentation.swapped_pairs.len()).sum::<usize>() as f64
            / (c * num_pairs.max(1) as f64),
        joint_removal: corrupted.iter().map(|s| s.augmentation.removed_joints.len()).sum::<usize>() as f64 / (c * joints),
        mean_visible_joints: samples.iter().map(|s| s.visibility().iter().filter(|&&v| v).count()).sum::<usize>() as f64
            / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::{generate_toy_model, ToyModelSpec};
    use crate::camera::rasterize_silhouette;

    fn toy() -> BodyModel {
        generate_toy_model(&ToyModelSpec { seed: 2, vertices: 300, joints: 24 }).unwrap()
    }

    fn sample_with(aug: &AugmentationConfig, corrupt: bool, index: u64) -> SyntheticSample {
        let m = toy();
        let mut rng = substream(9, "test", index);
        generate_sample(&m, &PoseSource::default(), &GenerationConfig::default(), aug, &mut rng, corrupt).unwrap()
    }

    #[test]
    fn clean_sample_matches_rasterizer_and_in_frame_visibility() {
        let m = toy();
        for i in 0..5 {
            let s = sample_with(&AugmentationConfig::default(), false, i);
            let mesh = m.forward(&s.pose, &s.shape, &s.global).unwrap();
            let sil = rasterize_silhouette(&mesh.vertices, &mesh.triangles, &s.camera).unwrap();
            assert_eq!(sil, s.proxy.silhouette);
            for (p, v) in s.target_joints.iter().zip(s.visibility()) {
                assert_eq!(*v, pixel_of(*p, 256, 256).is_some());
            }
            assert!(!s.corrupted);
        }
    }

    #[test]
    fn disabled_augmentation_equals_clean() {
        for i in 0..5 {
            let clean = sample_with(&AugmentationConfig::disabled(), false, i);
            let mut corrupted = sample_with(&AugmentationConfig::disabled(), true, i);
            assert!(corrupted.corrupted);
            corrupted.corrupted = false;
            assert_eq!(clean, corrupted);
        }
    }

    #[test]
    fn full_removal_hides_every_joint() {
        let aug = AugmentationConfig { joint_removal_prob: 1.0, ..AugmentationConfig::default() };
        let s = sample_with(&aug, true, 3);
        assert!(s.visibility().iter().all(|v| !v));
        assert!(s.proxy.heatmaps().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn truncated_shape_samples() {
        let cfg = GenerationConfig::default();
        let mut rng = substream(1, "shape", 0);
        let a = sample_shape(&mut rng, &cfg, 10);
        assert_eq!(a, sample_shape(&mut substream(1, "shape", 0), &cfg, 10));
        for _ in 0..2000 {
            assert!(sample_shape(&mut rng, &cfg, 10).0.iter().all(|b| b.abs() <= 6.0));
        }
    }

    #[test]
    fn swap_twice_is_identity_and_zero_prob_is_noop() {
        let pairs = [[0, 1], [2, 3]];
        let joints = vec![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]];
        let vis = vec![true, false, true, true];
        let (mut j, mut v) = (joints.clone(), vis.clone());
        let s1 = swap_lr_joints(&mut j, &mut v, &pairs, 0.5, &mut substream(4, "swap", 0));
        let s2 = swap_lr_joints(&mut j, &mut v, &pairs, 0.5, &mut substream(4, "swap", 0));
        assert_eq!(s1, s2);
        assert_eq!((j, v), (joints.clone(), vis.clone()));
        let (mut j, mut v) = (joints.clone(), vis.clone());
        assert!(swap_lr_joints(&mut j, &mut v, &pairs, 0.0, &mut substream(4, "swap", 1)).is_empty());
        assert_eq!(j, joints);
    }

    #[test]
    fn pose_bank_parsing() {
        let m = toy();
        let p = m.pose_dim();
        let mut line = vec!["0.0 3.0 0.0".to_string()];
        line.extend((0..p).map(|i| format!("{}", 0.01 * i as f64)));
        let text = format!("# comment\n{}\n", line.join(" "));
        let src = PoseSource::from_text(&text, p).unwrap();
        let (pose, global) = src.sample(&m, &mut substream(0, "bank", 0), None).unwrap();
        assert_eq!(pose.0.len(), p);
        assert!((global.0[1] - 3.0).abs() < 1e-9);
        assert!(PoseSource::from_text("1 2 3", p).is_err());
        assert!(PoseSource::from_text("", p).is_err());
    }

    #[test]
    fn benchmark_layout_and_determinism() {
        let m = toy();
        let spec = BenchmarkSpec { num_subjects: 2, poses_per_subject: 4, corrupt: CorruptMode::Both, seed: 5 };
        let a = generate_benchmark(&m, &PoseSource::default(), &GenerationConfig::default(), &AugmentationConfig::default(), &spec)
            .unwrap();
        assert_eq!(a.len(), 16);
        assert_eq!(a[0].subject, 0);
        assert_eq!(a[15].subject, 1);
        assert!(!a[0].corrupted && a[1].corrupted);
        assert_eq!(a[0].shape, a[7].shape);
        assert_eq!(a[0].camera, a[1].camera);
        let b = generate_benchmark(&m, &PoseSource::default(), &GenerationConfig::default(), &AugmentationConfig::default(), &spec)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn view_rotations_face_the_camera() {
        let front = view_yaw(0);
        assert!((front.abs() - std::f64::consts::PI).abs() < 1e-12);
        assert!((view_yaw(1) + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
