//! Diagonal Gaussians, reparameterized sampling, the Gaussian NLL and
//! product-of-Gaussians shape fusion.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::camera::WeakPerspCamera;
use crate::error::{Error, Result};

/// Precisions below this are raised to it during fusion.
pub const PRECISION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDiag {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl GaussianDiag {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        Error::check_dim("variances", mean.len(), var.len())?;
        if let Some((i, v)) = var.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Distribution(format!("variance {i} must be positive and finite, got {v}")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Distribution("non-finite mean".into()));
        }
        Ok(Self { mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn std(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.sqrt()).collect()
    }

    /// `μ + σ⊙ε`.
    pub fn sample(&self, noise: &[f64]) -> Result<Vec<f64>> {
        sample_reparam(&self.mean, &self.var, noise)
    }

    pub fn nll(&self, target: &[f64]) -> Result<f64> {
        Error::check_dim("target", self.dim(), target.len())?;
        Ok(nll_terms(&self.mean, &self.var, target))
    }
}

/// Reparameterized draw `μ + sqrt(σ²)⊙ε`, differentiable in `μ` and `σ²`.
pub fn sample_reparam<T: Real>(mean: &[T], var: &[T], noise: &[f64]) -> Result<Vec<T>> {
    Error::check_dim("variances", mean.len(), var.len())?;
    Error::check_dim("noise", mean.len(), noise.len())?;
    Ok(mean
        .iter()
        .zip(var)
        .zip(noise)
        .map(|((&m, &v), &e)| if e == 0.0 { m } else { m + v.sqrt() * e })
        .collect())
}

/// `Σ_i log(2π σ²_i) + (t_i − μ_i)²/σ²_i`, without the factor ½.
pub fn nll_terms<T: Real>(mean: &[T], var: &[T], target: &[f64]) -> T {
    let two_pi = 2.0 * std::f64::consts::PI;
    mean.iter().zip(var).zip(target).fold(T::zero(), |acc, ((&m, &v), &t)| {
        acc + (v * two_pi).ln() + (m - t).sq() / v
    })
}

/// Product of diagonal Gaussians under a flat prior: precision-weighted
/// mean and harmonic-sum variance.
pub fn fuse_shapes(dists: &[GaussianDiag]) -> Result<GaussianDiag> {
    let first = dists.first().ok_or_else(|| Error::Distribution("cannot fuse an empty list".into()))?;
    let d = first.dim();
    let mut precision = vec![0.0; d];
    let mut weighted = vec![0.0; d];
    for g in dists {
        Error::check_dim("fused distribution", d, g.dim())?;
        for i in 0..d {
            let p = (1.0 / g.var[i]).max(PRECISION_FLOOR);
            precision[i] += p;
            weighted[i] += p * g.mean[i];
        }
    }
    if dists.len() == 1 {
        return Ok(first.clone());
    }
    let mean = weighted.iter().zip(&precision).map(|(w, p)| w / p).collect();
    let var = precision.iter().map(|p| 1.0 / p).collect();
    GaussianDiag::new(mean, var)
}

/// Arithmetic mean of the distribution means (the heuristic baseline).
pub fn mean_of_means(dists: &[GaussianDiag]) -> Result<Vec<f64>> {
    let first = dists.first().ok_or_else(|| Error::Distribution("cannot average an empty list".into()))?;
    let mut out = vec![0.0; first.dim()];
    for g in dists {
        Error::check_dim("averaged distribution", first.dim(), g.dim())?;
        out.iter_mut().zip(&g.mean).for_each(|(o, m)| *o += m);
    }
    let n = dists.len() as f64;
    Ok(out.into_iter().map(|x| x / n).collect())
}

/// One network output `Y = {μθ, σ²θ, μβ, σ²β, γ, c}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub pose: GaussianDiag,
    pub shape: GaussianDiag,
    pub global: [f64; 3],
    pub camera: WeakPerspCamera,
}

impl PredictionSet {
    /// Flat layout `[μθ | σ²θ | μβ | σ²β | γ | s, tx, ty]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.pose.dim() + 2 * self.shape.dim() + 6);
        v.extend_from_slice(self.pose.mean());
        v.extend_from_slice(self.pose.var());
        v.extend_from_slice(self.shape.mean());
        v.extend_from_slice(self.shape.var());
        v.extend_from_slice(&self.global);
        v.extend_from_slice(&[self.camera.scale, self.camera.tx, self.camera.ty]);
        v
    }

    pub fn from_slice(v: &[f64], pose_dim: usize, shape_dim: usize) -> Result<Self> {
        Error::check_dim("prediction vector", 2 * pose_dim + 2 * shape_dim + 6, v.len())?;
        let (pm, rest) = v.split_at(pose_dim);
        let (pv, rest) = rest.split_at(pose_dim);
        let (sm, rest) = rest.split_at(shape_dim);
        let (sv, rest) = rest.split_at(shape_dim);
        Ok(Self {
            pose: GaussianDiag::new(pm.to_vec(), pv.to_vec())?,
            shape: GaussianDiag::new(sm.to_vec(), sv.to_vec())?,
            global: [rest[0], rest[1], rest[2]],
            camera: WeakPerspCamera::new(rest[3], rest[4], rest[5])?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(m: &[f64], v: &[f64]) -> GaussianDiag {
        GaussianDiag::new(m.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn fusion_examples() {
        let a = g(&[1.0, -2.0], &[4.0, 0.5]);
        assert_eq!(fuse_shapes(std::slice::from_ref(&a)).unwrap(), a);
        let f = fuse_shapes(&[g(&[1.0], &[4.0]), g(&[1.0], &[4.0])]).unwrap();
        assert_eq!((f.mean()[0], f.var()[0]), (1.0, 2.0));
        let f = fuse_shapes(&[g(&[1.0], &[0.25]), g(&[3.0], &[1.0])]).unwrap();
        assert!((f.mean()[0] - 1.4).abs() < 1e-15 && (f.var()[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn fusion_errors() {
        assert!(fuse_shapes(&[]).is_err());
        assert!(fuse_shapes(&[g(&[1.0], &[1.0]), g(&[1.0, 2.0], &[1.0, 1.0])]).is_err());
        assert!(GaussianDiag::new(vec![0.0], vec![0.0]).is_err());
        assert!(GaussianDiag::new(vec![0.0], vec![-1.0]).is_err());
    }

    #[test]
    fn reparam_examples() {
        let d = g(&[0.5, -1.0], &[4.0, 4.0]);
        assert_eq!(d.sample(&[0.0, 0.0]).unwrap(), vec![0.5, -1.0]);
        assert_eq!(d.sample(&[1.0, 1.0]).unwrap(), vec![2.5, 1.0]);
        assert!(d.sample(&[1.0]).is_err());
    }

    #[test]
    fn nll_examples() {
        let tau = 2.0 * std::f64::consts::PI;
        let d = g(&[0.3, 0.7, -1.0], &[1.0 / tau; 3]);
        assert!(d.nll(&[0.3, 0.7, -1.0]).unwrap().abs() < 1e-14);
        let d = g(&[0.0; 4], &[1.0; 4]);
        assert!((d.nll(&[0.0; 4]).unwrap() - 4.0 * tau.ln()).abs() < 1e-14);
        let d = g(&[0.0], &[2.0]);
        let v = d.nll(&[2.0]).unwrap();
        assert!((v - ((4.0 * std::f64::consts::PI).ln() + 2.0)).abs() < 1e-14);
        assert!((v - 4.5310).abs() < 1e-4);
    }

    #[test]
    fn prediction_vector_round_trip() {
        let p = PredictionSet {
            pose: g(&[0.1, 0.2, 0.3], &[1.0, 2.0, 3.0]),
            shape: g(&[-1.0, 1.0], &[0.5, 0.25]),
            global: [0.0, 3.0, 0.1],
            camera: WeakPerspCamera::new(0.9, 0.01, -0.02).unwrap(),
        };
        let v = p.to_vec();
        assert_eq!(v.len(), 2 * 3 + 2 * 2 + 6);
        assert_eq!(PredictionSet::from_slice(&v, 3, 2).unwrap(), p);
    }
}
