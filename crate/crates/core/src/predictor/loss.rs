//! Training losses over raw network outputs, generic over [`Real`] so the
//! same code is evaluated on `f64` and differentiated on the tape.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::net::LOG_CLAMP;
use crate::autodiff::{Real, Tape};
use crate::body_model::BodyModel;
use crate::camera::project_weak;
use crate::distributions::{nll_terms, sample_reparam};
use crate::error::{Error, Result};
use crate::rotation::{frobenius_sq, rodrigues};
use crate::synth::SyntheticSample;

/// Decoded head: variances and scale pass through `exp` of a clamped raw value.
#[derive(Debug, Clone)]
pub struct HeadOutputs<T> {
    pub pose_mean: Vec<T>,
    pub pose_var: Vec<T>,
    pub shape_mean: Vec<T>,
    pub shape_var: Vec<T>,
    pub global: [T; 3],
    /// `[s, tx, ty]`.
    pub camera: [T; 3],
}

impl<T: Real> HeadOutputs<T> {
    pub fn decode(raw: &[T], pose_dim: usize, num_betas: usize) -> Result<Self> {
        let (p, k) = (pose_dim, num_betas);
        Error::check_dim("raw head output", 2 * p + 2 * k + 6, raw.len())?;
        let pos = |x: T| x.clamp(-LOG_CLAMP, LOG_CLAMP).exp();
        let g = 2 * p + 2 * k;
        Ok(Self {
            pose_mean: raw[..p].to_vec(),
            pose_var: raw[p..2 * p].iter().map(|&x| pos(x)).collect(),
            shape_mean: raw[2 * p..2 * p + k].to_vec(),
            shape_var: raw[2 * p + k..g].iter().map(|&x| pos(x)).collect(),
            global: [raw[g], raw[g + 1], raw[g + 2]],
            camera: [pos(raw[g + 3]), raw[g + 4], raw[g + 5]],
        })
    }
}

/// Labels of one training example in the units the losses use.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTarget {
    pub pose: Vec<f64>,
    pub shape: Vec<f64>,
    pub global: [f64; 3],
    /// Target keypoints in normalized image coordinates `(p − W/2)/(W/2)`.
    pub joints: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

impl TrainTarget {
    pub fn from_sample(sample: &SyntheticSample) -> Self {
        let (hw, hh) = (sample.proxy.width() as f64 / 2.0, sample.proxy.height() as f64 / 2.0);
        Self {
            pose: sample.pose.0.clone(),
            shape: sample.shape.0.clone(),
            global: sample.global.0,
            joints: sample.target_joints.iter().map(|p| [(p[0] - hw) / hw, (p[1] - hh) / hh]).collect(),
            visible: sample.visibility().to_vec(),
        }
    }
}

/// Frozen standard-normal noise for the reprojection samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprojNoise {
    pub pose: Vec<Vec<f64>>,
    pub shape: Vec<Vec<f64>>,
}

impl ReprojNoise {
    pub fn draw<R: Rng>(rng: &mut R, samples: usize, pose_dim: usize, num_betas: usize) -> Self {
        let mut pose = Vec::with_capacity(samples);
        let mut shape = Vec::with_capacity(samples);
        for _ in 0..samples {
            pose.push((0..pose_dim).map(|_| rng.sample(StandardNormal)).collect());
            shape.push((0..num_betas).map(|_| rng.sample(StandardNormal)).collect());
        }
        Self { pose, shape }
    }

    pub fn len(&self) -> usize {
        self.pose.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pose.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub glob: f64,
    pub reproj: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { glob: 1.0, reproj: 0.01 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts<T> {
    pub nll: T,
    pub glob: T,
    pub reproj: T,
    pub total: T,
}

impl<T: Real> LossParts<T> {
    pub fn values(&self) -> LossParts<f64> {
        LossParts { nll: self.nll.value(), glob: self.glob.value(), reproj: self.reproj.value(), total: self.total.value() }
    }
}

/// `‖R(γ) − R(γ̂)‖²_F`.
pub fn loss_glob<T: Real>(pred: &[T; 3], target: &[f64; 3]) -> T {
    let r = rodrigues(&target.map(T::cst));
    frobenius_sq(&r, &rodrigues(pred))
}

/// Pose and shape NLL in the "∝" form.
pub fn loss_nll<T: Real>(head: &HeadOutputs<T>, target: &TrainTarget) -> Result<T> {
    Error::check_dim("pose target", head.pose_mean.len(), target.pose.len())?;
    Error::check_dim("shape target", head.shape_mean.len(), target.shape.len())?;
    Ok(nll_terms(&head.pose_mean, &head.pose_var, &target.pose)
        + nll_terms(&head.shape_mean, &head.shape_var, &target.shape))
}

/// Masked squared reprojection error of keypoints regressed from
/// reparameterized samples, averaged over the samples.
pub fn loss_reproj<T: Real>(
    model: &BodyModel,
    head: &HeadOutputs<T>,
    target: &TrainTarget,
    noise: &ReprojNoise,
) -> Result<T> {
    let l = model.num_keypoints();
    Error::check_dim("target joints", l, target.joints.len())?;
    Error::check_dim("visibility", l, target.visible.len())?;
    if noise.is_empty() {
        return Err(Error::Config("reprojection needs at least one sample".into()));
    }
    if !target.visible.iter().any(|&v| v) {
        return Ok(T::zero());
    }
    let [s, tx, ty] = head.camera;
    let mut acc = T::zero();
    for (eps_pose, eps_shape) in noise.pose.iter().zip(&noise.shape) {
        let pose = sample_reparam(&head.pose_mean, &head.pose_var, eps_pose)?;
        let shape = sample_reparam(&head.shape_mean, &head.shape_var, eps_shape)?;
        let joints = model.keypoints_generic(&pose, &shape, &head.global)?;
        let projected = project_weak(&joints, s, tx, ty);
        for ((p, t), &vis) in projected.iter().zip(&target.joints).zip(&target.visible) {
            if vis {
                acc = acc + (p[0] - t[0]).sq() + (p[1] - t[1]).sq();
            }
        }
    }
    Ok(acc / noise.len() as f64)
}

/// `L_NLL + λ_glob·L_glob + λ_2D·L_2D`. The reprojection term is skipped
/// entirely when its weight is zero.
pub fn loss_total<T: Real>(
    model: &BodyModel,
    head: &HeadOutputs<T>,
    target: &TrainTarget,
    weights: &LossWeights,
    noise: &ReprojNoise,
) -> Result<LossParts<T>> {
    let nll = loss_nll(head, target)?;
    let glob = loss_glob(&head.global, &target.global);
    let reproj = if weights.reproj == 0.0 { T::zero() } else { loss_reproj(model, head, target, noise)? };
    let total = nll + glob * weights.glob + reproj * weights.reproj;
    Ok(LossParts { nll, glob, reproj, total })
}

/// Loss of one example and its gradient with respect to the raw head outputs.
pub fn raw_loss_and_grad(
    model: &BodyModel,
    raw: &[f64],
    target: &TrainTarget,
    weights: &LossWeights,
    noise: &ReprojNoise,
) -> Result<(LossParts<f64>, Vec<f64>)> {
    let tape = Tape::with_capacity(if weights.reproj == 0.0 { 4096 } else { 16384 * noise.len() });
    let vars = tape.vars(raw);
    let head = HeadOutputs::decode(&vars, model.pose_dim(), model.num_betas())?;
    let parts = loss_total(model, &head, target, weights, noise)?;
    let grad = tape.gradient(parts.total)?.wrt_all(&vars);
    Ok((parts.values(), grad))
}
