//! Evaluation metrics: MPJPE with scale or Procrustes alignment, T-pose
//! vertex error, Monte-Carlo vertex uncertainty, group splitting, girth
//! measurements and the grouped evaluation protocol.

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::body_model::{BodyModel, GlobalRotation, MeasurementDef, PoseParams, ShapeParams, VertexMesh};
use crate::distributions::{fuse_shapes, mean_of_means, sample_reparam, PredictionSet};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::synth::SyntheticSample;

/// Keypoints averaged to form the root (left and right hip).
pub const ROOT_KEYPOINTS: [usize; 2] = [11, 12];

const M_TO_MM: f64 = 1000.0;
const M_TO_CM: f64 = 100.0;

type P3 = [f64; 3];

fn dist(a: &P3, b: &P3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn mean_dist(a: &[P3], b: &[P3]) -> f64 {
    a.iter().zip(b).map(|(p, q)| dist(p, q)).sum::<f64>() / a.len() as f64
}

fn check_pair(a: &[P3], b: &[P3]) -> Result<()> {
    Error::check_dim("point sets", b.len(), a.len())?;
    if a.is_empty() {
        return Err(Error::Degenerate("empty point set".into()));
    }
    Ok(())
}

fn translate(points: &[P3], by: P3) -> Vec<P3> {
    points.iter().map(|p| [p[0] - by[0], p[1] - by[1], p[2] - by[2]]).collect()
}

fn centroid(points: &[P3]) -> P3 {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        (0..3).for_each(|k| c[k] += p[k] / n);
    }
    c
}

/// Root point: mean of the hip keypoints, or the first point when the set
/// has fewer keypoints than the hip indices need.
pub fn root_of(joints: &[P3]) -> P3 {
    if joints.len() > ROOT_KEYPOINTS[1] {
        centroid(&[joints[ROOT_KEYPOINTS[0]], joints[ROOT_KEYPOINTS[1]]])
    } else {
        joints[0]
    }
}

pub fn root_center(joints: &[P3]) -> Vec<P3> {
    translate(joints, root_of(joints))
}

/// Mean per-joint position error in mm after root-centering both skeletons.
pub fn mpjpe(pred: &[P3], gt: &[P3]) -> Result<f64> {
    check_pair(pred, gt)?;
    Ok(M_TO_MM * mean_dist(&root_center(pred), &root_center(gt)))
}

/// Least-squares scalar `s* = Σ pred·gt / Σ pred·pred`.
pub fn optimal_scale(pred: &[P3], gt: &[P3]) -> Result<f64> {
    check_pair(pred, gt)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        for k in 0..3 {
            num += p[k] * g[k];
            den += p[k] * p[k];
        }
    }
    if den <= 0.0 {
        return Err(Error::Degenerate("prediction is all zeros".into()));
    }
    Ok(num / den)
}

/// Scales root-centered predictions by the least-squares optimal scalar.
pub fn scale_correct(pred: &[P3], gt: &[P3]) -> Result<Vec<P3>> {
    let s = optimal_scale(pred, gt)?;
    Ok(pred.iter().map(|p| p.map(|x| s * x)).collect())
}

/// Iterations of the mean-distance refinement used by the aligned MPJPE
/// variants.
const REFINE_STEPS: usize = 1000;

/// Refinement stops once a step gains less than this relative amount.
const REFINE_TOL: f64 = 1e-13;

/// Distances below this get a capped weight during refinement.
const REFINE_FLOOR: f64 = 1e-12;

/// Root-centered MPJPE in mm after the scale minimizing the mean per-joint
/// distance.
///
/// The search starts from the better of `s = 1` and the least-squares
/// scalar and then runs reweighted least squares, a majorize-minimize
/// scheme whose accepted steps never increase the mean distance. Starting
/// from `s = 1` guarantees `MPJPE-SC ≤ MPJPE`. The scale is kept
/// non-negative.
pub fn mpjpe_sc(pred: &[P3], gt: &[P3]) -> Result<f64> {
    let (_, total) = sc_fit(pred, gt)?;
    Ok(M_TO_MM * total / pred.len() as f64)
}

/// Scale behind [`mpjpe_sc`] and the summed distance it achieves.
fn sc_fit(pred: &[P3], gt: &[P3]) -> Result<(f64, f64)> {
    check_pair(pred, gt)?;
    let (p, g) = (root_center(pred), root_center(gt));
    let cost = |s: f64| p.iter().zip(&g).map(|(a, b)| dist(&a.map(|x| s * x), b)).sum::<f64>();
    let (mut s, mut best) = (1.0, cost(1.0));
    // a negative scale would be a point reflection
    let ls = optimal_scale(&p, &g)?.max(0.0);
    if cost(ls) < best {
        (s, best) = (ls, cost(ls));
    }
    for _ in 0..REFINE_STEPS {
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in p.iter().zip(&g) {
            let w = 1.0 / dist(&a.map(|x| s * x), b).max(REFINE_FLOOR);
            num += w * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]);
            den += w * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
        }
        let next = (num / den).max(0.0);
        let c = cost(next);
        if !(c < best) {
            break;
        }
        let done = best - c <= REFINE_TOL * best;
        (s, best) = (next, c);
        if done {
            break;
        }
    }
    Ok((s, best))
}

/// Similarity transform `x ↦ s·R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub rotation: [[f64; 3]; 3],
    pub scale: f64,
    pub translation: P3,
}

impl Similarity {
    pub fn apply(&self, p: &P3) -> P3 {
        let r = &self.rotation;
        std::array::from_fn(|i| {
            self.scale * (r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2]) + self.translation[i]
        })
    }
}

/// Optimal similarity transform mapping `pred` onto `gt` (Umeyama), with
/// the rotation restricted to det +1.
pub fn procrustes_align(pred: &[P3], gt: &[P3]) -> Result<(Similarity, Vec<P3>)> {
    check_pair(pred, gt)?;
    let sim = weighted_procrustes(pred, gt, &vec![1.0; pred.len()])?;
    let aligned = pred.iter().map(|x| sim.apply(x)).collect();
    Ok((sim, aligned))
}

/// Similarity minimizing `Σ w_i ‖s·R·p_i + t − g_i‖²`.
fn weighted_procrustes(pred: &[P3], gt: &[P3], w: &[f64]) -> Result<Similarity> {
    if pred.len() < 3 {
        return Err(Error::Degenerate("Procrustes needs at least 3 points".into()));
    }
    let total: f64 = w.iter().sum();
    let wmean = |pts: &[P3]| -> P3 {
        let mut c = [0.0; 3];
        for (p, &wi) in pts.iter().zip(w) {
            (0..3).for_each(|k| c[k] += wi * p[k] / total);
        }
        c
    };
    let (mp, mg) = (wmean(pred), wmean(gt));
    let (p, g) = (translate(pred, mp), translate(gt, mg));
    let mut cov = Matrix3::<f64>::zeros();
    let mut var_p = 0.0;
    for ((a, b), &wi) in p.iter().zip(&g).zip(w) {
        let (va, vb) = (Vector3::from(*a), Vector3::from(*b));
        cov += wi * vb * va.transpose() / total;
        var_p += wi * va.norm_squared() / total;
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let sv = svd.singular_values;
    // rank < 2 means the points are collinear (or coincide)
    if var_p <= 0.0 || sv[1] <= 1e-12 * sv[0].max(1e-300) {
        return Err(Error::Degenerate("points are collinear or coincident".into()));
    }
    let mut d = Matrix3::<f64>::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * vt;
    let scale = (sv[0] * d[(0, 0)] + sv[1] * d[(1, 1)] + sv[2] * d[(2, 2)]) / var_p;
    let t = Vector3::from(mg) - scale * r * Vector3::from(mp);
    Ok(Similarity {
        rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
        scale,
        translation: [t[0], t[1], t[2]],
    })
}

/// MPJPE in mm after the similarity transform minimizing the mean per-joint
/// distance.
///
/// Candidates are the least-squares Procrustes solution and the transform
/// behind [`mpjpe_sc`]; the better one is refined by reweighted Procrustes
/// steps that never increase the mean distance. Because the scale-only
/// alignment is a candidate, `MPJPE-PA ≤ MPJPE-SC` holds by construction.
pub fn mpjpe_pa(pred: &[P3], gt: &[P3]) -> Result<f64> {
    check_pair(pred, gt)?;
    let cost = |t: &Similarity| pred.iter().zip(gt).map(|(a, b)| dist(&t.apply(a), b)).sum::<f64>();
    let (ls, _) = procrustes_align(pred, gt)?;
    let (mut sim, mut best) = (ls, cost(&ls));
    let (rp, rg) = (root_of(pred), root_of(gt));
    let (sc_scale, _) = sc_fit(pred, gt)?;
    let sc = Similarity {
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        scale: sc_scale,
        translation: std::array::from_fn(|k| rg[k] - sc_scale * rp[k]),
    };
    if cost(&sc) < best {
        (sim, best) = (sc, cost(&sc));
    }
    for _ in 0..REFINE_STEPS {
        let w: Vec<f64> = pred.iter().zip(gt).map(|(a, b)| 1.0 / dist(&sim.apply(a), b).max(REFINE_FLOOR)).collect();
        let Ok(next) = weighted_procrustes(pred, gt, &w) else { break };
        let c = cost(&next);
        if !(c < best) {
            break;
        }
        let done = best - c <= REFINE_TOL * best;
        (sim, best) = (next, c);
        if done {
            break;
        }
    }
    Ok(M_TO_MM * best / pred.len() as f64)
}

/// Mean per-vertex error in mm after centroid-centering both meshes and
/// applying the least-squares scale to the prediction.
pub fn pve_sc(pred: &[P3], gt: &[P3]) -> Result<f64> {
    check_pair(pred, gt)?;
    let (p, g) = (translate(pred, centroid(pred)), translate(gt, centroid(gt)));
    Ok(M_TO_MM * mean_dist(&scale_correct(&p, &g)?, &g))
}

/// PVE-T-SC between the neutral-pose meshes of two shapes.
pub fn pve_t_sc(pred: &ShapeParams, gt: &ShapeParams, model: &BodyModel) -> Result<f64> {
    let p = model.neutral_pose_mesh(pred)?;
    let g = model.neutral_pose_mesh(gt)?;
    pve_sc(&p.vertices, &g.vertices)
}

/// Average distance (cm) of each vertex from its mean location over `n`
/// meshes drawn from the predicted pose and shape distributions.
pub fn per_vertex_uncertainty(pred: &PredictionSet, model: &BodyModel, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let pose = (pred.pose.mean(), pred.pose.var());
    let shape = (pred.shape.mean(), pred.shape.var());
    uncertainty_from_params(model, pose, shape, &GlobalRotation(pred.global), n, rng)
}

/// [`per_vertex_uncertainty`] on raw `(mean, variance)` pairs; zero
/// variances are allowed and give exactly zero spread.
pub fn uncertainty_from_params(
    model: &BodyModel,
    pose: (&[f64], &[f64]),
    shape: (&[f64], &[f64]),
    global: &GlobalRotation,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Config("uncertainty needs at least one sample".into()));
    }
    if pose.1.iter().chain(shape.1).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Distribution("variances must be finite and non-negative".into()));
    }
    let mut meshes = Vec::with_capacity(n);
    for _ in 0..n {
        let eps_pose: Vec<f64> = (0..pose.0.len()).map(|_| rng.sample(StandardNormal)).collect();
        let eps_shape: Vec<f64> = (0..shape.0.len()).map(|_| rng.sample(StandardNormal)).collect();
        let theta = PoseParams(sample_reparam(pose.0, pose.1, &eps_pose)?);
        let beta = ShapeParams(sample_reparam(shape.0, shape.1, &eps_shape)?);
        meshes.push(model.forward(&theta, &beta, global)?.vertices);
    }
    let mut out = vec![0.0; model.num_vertices()];
    for (i, o) in out.iter_mut().enumerate() {
        // offsets from the first draw keep identical draws exactly at zero
        let base = meshes[0][i];
        let mut mean = base;
        for m in &meshes {
            (0..3).for_each(|k| mean[k] += (m[i][k] - base[k]) / n as f64);
        }
        *o = M_TO_CM * meshes.iter().map(|m| dist(&m[i], &mean)).sum::<f64>() / n as f64;
    }
    Ok(out)
}

/// Shuffles `indices` and chunks them into groups of at most `n`.
pub fn split_groups(indices: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::Config("group size must be at least 1".into()));
    }
    let mut v = indices.to_vec();
    v.shuffle(rng);
    Ok(v.chunks(n).map(|c| c.to_vec()).collect())
}

/// Andrew's monotone chain; returns the hull counter-clockwise.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for q in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(*q);
        }
        hull.pop();
    }
    hull
}

pub fn polygon_perimeter(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 2 {
        return 0.0;
    }
    (0..poly.len())
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        })
        .sum()
}

/// Intersection points of a measurement plane with the triangles of its
/// parts, in 2D plane coordinates.
pub fn slice_points(model: &BodyModel, def: &MeasurementDef, mesh: &VertexMesh) -> Vec<[f64; 2]> {
    let a = model.measurement_anchor(def, mesh);
    let n = Vector3::from(def.normal).normalize();
    let helper = if n[0].abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    let labels = model.part_labels();
    let to2d = |p: Vector3<f64>| [p.dot(&e1), p.dot(&e2)];
    let mut out = Vec::new();
    for t in mesh.triangles.iter() {
        if !def.parts.contains(&labels[t[0] as usize]) {
            continue;
        }
        let pts: Vec<Vector3<f64>> = t.iter().map(|&i| Vector3::from(mesh.vertices[i as usize]) - Vector3::from(a)).collect();
        let d: Vec<f64> = pts.iter().map(|p| p.dot(&n)).collect();
        for k in 0..3 {
            let (i, j) = (k, (k + 1) % 3);
            if d[i] == 0.0 {
                out.push(to2d(pts[i]));
            }
            if d[i] * d[j] < 0.0 {
                let s = d[i] / (d[i] - d[j]);
                out.push(to2d(pts[i] + (pts[j] - pts[i]) * s));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    /// Girths in cm, in model order.
    pub girths: Vec<(String, f64)>,
    /// Height of the unscaled neutral mesh in m.
    pub predicted_height: f64,
    pub true_height: f64,
    /// `true_height / predicted_height`, applied to every girth.
    pub scale: f64,
}

/// Girths of the neutral-pose mesh, rescaled so its height matches
/// `true_height` (m).
pub fn measure_and_normalize(shape: &ShapeParams, model: &BodyModel, true_height: f64) -> Result<MeasurementSet> {
    if !(true_height > 0.0) {
        return Err(Error::Config(format!("true height must be positive, got {true_height}")));
    }
    let mesh = model.neutral_pose_mesh(shape)?;
    let predicted_height = mesh.height();
    if !(predicted_height > 0.0) {
        return Err(Error::Degenerate("predicted mesh has no height".into()));
    }
    let scale = true_height / predicted_height;
    let girths = model
        .meta()
        .measurements
        .iter()
        .map(|def| {
            let g = polygon_perimeter(&convex_hull(&slice_points(model, def, &mesh)));
            (def.name.clone(), M_TO_CM * scale * g)
        })
        .collect();
    Ok(MeasurementSet { girths, predicted_height, true_height, scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Combination {
    /// Probabilistic product-of-Gaussians fusion.
    Pc,
    /// Arithmetic mean of the shape means.
    Mean,
    /// Each input on its own.
    Single,
}

impl Combination {
    pub fn name(self) -> &'static str {
        match self {
            Combination::Pc => "pc",
            Combination::Mean => "mean",
            Combination::Single => "single",
        }
    }
}

impl std::str::FromStr for Combination {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pc" => Ok(Combination::Pc),
            "mean" => Ok(Combination::Mean),
            "single" => Ok(Combination::Single),
            _ => Err(Error::Config(format!("unknown combination {s:?} (expected pc, mean or single)"))),
        }
    }
}

/// Combined shape estimate for a group of predictions.
pub fn combine_shapes(preds: &[&PredictionSet], how: Combination) -> Result<Vec<f64>> {
    let dists: Vec<_> = preds.iter().map(|p| p.shape.clone()).collect();
    match how {
        Combination::Pc => Ok(fuse_shapes(&dists)?.mean().to_vec()),
        Combination::Mean => mean_of_means(&dists),
        Combination::Single => {
            if dists.len() != 1 {
                return Err(Error::Config("single combination takes one prediction".into()));
            }
            Ok(dists[0].mean().to_vec())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub group_size: usize,
    pub combination: Combination,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub index: usize,
    pub subject: u32,
    pub view: u32,
    pub corrupted: bool,
    pub group: usize,
    pub mpjpe: f64,
    pub mpjpe_sc: f64,
    pub mpjpe_pa: f64,
    pub pve_t_sc: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub count: usize,
    pub mpjpe: f64,
    pub mpjpe_sc: f64,
    pub mpjpe_pa: f64,
    pub pve_t_sc: f64,
}

impl SubsetSummary {
    fn of<'a>(rows: impl Iterator<Item = &'a SampleMetrics>) -> Self {
        let mut s = SubsetSummary::default();
        for r in rows {
            s.count += 1;
            s.mpjpe += r.mpjpe;
            s.mpjpe_sc += r.mpjpe_sc;
            s.mpjpe_pa += r.mpjpe_pa;
            s.pve_t_sc += r.pve_t_sc;
        }
        if s.count > 0 {
            let n = s.count as f64;
            s.mpjpe /= n;
            s.mpjpe_sc /= n;
            s.mpjpe_pa /= n;
            s.pve_t_sc /= n;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: EvalConfig,
    pub groups: usize,
    pub all: SubsetSummary,
    pub clean: SubsetSummary,
    pub corrupted: SubsetSummary,
    pub samples: Vec<SampleMetrics>,
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,subject,view,corrupted,group,mpjpe_mm,mpjpe_sc_mm,mpjpe_pa_mm,pve_t_sc_mm\n");
        for r in &self.samples {
            s += &format!(
                "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                r.index, r.subject, r.view, r.corrupted as u8, r.group, r.mpjpe, r.mpjpe_sc, r.mpjpe_pa, r.pve_t_sc
            );
        }
        s
    }
}

/// Groups samples of the same subject and corruption state into groups of
/// at most `group_size` (singletons for [`Combination::Single`]), combines
/// the shape predictions per group and scores every sample.
pub fn evaluate(
    samples: &[SyntheticSample],
    preds: &[PredictionSet],
    model: &BodyModel,
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    Error::check_dim("predictions", samples.len(), preds.len())?;
    if samples.is_empty() {
        return Err(Error::Config("nothing to evaluate".into()));
    }
    if let Some(p) = preds.first() {
        Error::check_dim("predicted pose dimension", model.pose_dim(), p.pose.dim())?;
        Error::check_dim("predicted shape dimension", model.num_betas(), p.shape.dim())?;
    }
    let size = if cfg.combination == Combination::Single { 1 } else { cfg.group_size };
    let mut keys: Vec<(u32, bool)> = samples.iter().map(|s| (s.subject, s.corrupted)).collect();
    keys.sort();
    keys.dedup();
    let mut groups = Vec::new();
    for (k, key) in keys.iter().enumerate() {
        let members: Vec<usize> = (0..samples.len()).filter(|&i| (samples[i].subject, samples[i].corrupted) == *key).collect();
        groups.extend(split_groups(&members, size, &mut substream(cfg.seed, "eval-groups", k as u64))?);
    }
    let mut rows = Vec::with_capacity(samples.len());
    for (g, members) in groups.iter().enumerate() {
        let group_preds: Vec<&PredictionSet> = members.iter().map(|&i| &preds[i]).collect();
        let shape = ShapeParams(combine_shapes(&group_preds, if size == 1 { Combination::Single } else { cfg.combination })?);
        let gt_shape = &samples[members[0]].shape;
        let pve = pve_t_sc(&shape, gt_shape, model)?;
        for &i in members {
            let (s, p) = (&samples[i], &preds[i]);
            let pred_joints = model.keypoints(&PoseParams(p.pose.mean().to_vec()), &shape, &GlobalRotation(p.global))?;
            let gt_joints = model.keypoints(&s.pose, &s.shape, &s.global)?;
            rows.push(SampleMetrics {
                index: i,
                subject: s.subject,
                view: s.view,
                corrupted: s.corrupted,
                group: g,
                mpjpe: mpjpe(&pred_joints, &gt_joints)?,
                mpjpe_sc: mpjpe_sc(&pred_joints, &gt_joints)?,
                mpjpe_pa: mpjpe_pa(&pred_joints, &gt_joints)?,
                pve_t_sc: pve,
            });
        }
    }
    rows.sort_by_key(|r| r.index);
    Ok(MetricsReport {
        config: *cfg,
        groups: groups.len(),
        all: SubsetSummary::of(rows.iter()),
        clean: SubsetSummary::of(rows.iter().filter(|r| !r.corrupted)),
        corrupted: SubsetSummary::of(rows.iter().filter(|r| r.corrupted)),
        samples: rows,
    })
}

/// Writes a mesh with a per-vertex scalar as ASCII PLY.
pub fn mesh_to_ply(mesh: &VertexMesh, values: &[f64], name: &str) -> Result<String> {
    Error::check_dim("per-vertex values", mesh.vertices.len(), values.len())?;
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty float {name}\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    for (v, x) in mesh.vertices.iter().zip(values) {
        s += &format!("{} {} {} {}\n", v[0], v[1], v[2], x);
    }
    for t in mesh.triangles.iter() {
        s += &format!("3 {} {} {}\n", t[0], t[1], t[2]);
    }
    Ok(s)
}
