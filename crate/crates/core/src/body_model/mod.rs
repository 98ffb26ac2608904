//! Parametric body model: shape blendshapes, forward kinematics, linear
//! blend skinning and linear joint regression.
//!
//! All evaluation paths are generic over [`Real`] so the same code runs on
//! plain `f64` and on the autodiff tape.

mod io;
mod toy;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::rotation::{add3, mat_mul, mat_vec, rodrigues, sub3, Mat3, Vec3};

pub use io::{load_model, model_from_bytes, model_sha256, model_to_bytes, save_model, MODEL_FORMAT_VERSION};
pub use toy::{generate_toy_model, ToyModelSpec, DEFAULT_JOINTS, DEFAULT_KEYPOINTS, DEFAULT_VERTICES};

const SUM_TOL: f64 = 1e-6;

/// β: PCA shape coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams(pub Vec<f64>);

/// θ: axis-angle rotation per non-root skeleton joint, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseParams(pub Vec<f64>);

/// γ: axis-angle rotation of the root joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalRotation(pub [f64; 3]);

impl ShapeParams {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn unit(n: usize, k: usize) -> Self {
        let mut b = vec![0.0; n];
        b[k] = 1.0;
        Self(b)
    }
}

impl PoseParams {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn joint(&self, j: usize) -> [f64; 3] {
        let k = 3 * (j - 1);
        [self.0[k], self.0[k + 1], self.0[k + 2]]
    }
}

impl GlobalRotation {
    pub const IDENTITY: Self = GlobalRotation([0.0; 3]);
}

/// Posed mesh: vertices in meters plus the model's triangle list.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Arc<Vec<[u32; 3]>>,
}

impl VertexMesh {
    pub fn empty() -> Self {
        Self { vertices: Vec::new(), triangles: Arc::new(Vec::new()) }
    }

    /// Extent along the vertical (y) axis.
    pub fn height(&self) -> f64 {
        let (lo, hi) = self
            .vertices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[1]), hi.max(v[1])));
        if self.vertices.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for c in 0..3 {
                lo[c] = lo[c].min(v[c]);
                hi[c] = hi[c].max(v[c]);
            }
        }
        (lo, hi)
    }
}

/// Girth measurement: a plane anchored at a regressed point, restricted to
/// some body parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementDef {
    pub name: String,
    /// Sparse vertex weights (sum 1) locating a point on the plane.
    pub anchor: Vec<(u32, f64)>,
    pub normal: [f64; 3],
    pub parts: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub joint_names: Vec<String>,
    pub keypoint_names: Vec<String>,
    pub part_names: Vec<String>,
    /// Skeleton joint each regressed keypoint belongs to.
    pub keypoint_joints: Vec<usize>,
    /// Left/right keypoint pairs.
    pub lr_pairs: Vec<[usize; 2]>,
    pub measurements: Vec<MeasurementDef>,
}

/// Raw arrays of a body model, validated by [`BodyModel::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct BodyModelParts {
    pub template: Vec<[f64; 3]>,
    /// `[V][3][K]` row-major.
    pub shape_basis: Vec<f64>,
    pub num_betas: usize,
    pub triangles: Vec<[u32; 3]>,
    /// `[V][J]` row-major.
    pub skinning_weights: Vec<f64>,
    pub parents: Vec<Option<usize>>,
    /// `[J][V]`: rest joint pivots from the shaped template.
    pub skeleton_regressor: Vec<f64>,
    /// `[L][V]`: output keypoints from the posed mesh.
    pub joint_regressor: Vec<f64>,
    pub part_labels: Vec<u16>,
    pub meta: ModelMeta,
}

#[derive(Debug, Clone)]
struct KeypointTerm {
    joint: usize,
    weight: f64,
    rest: [f64; 3],
    /// `[3][K]`
    basis: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Cache {
    skin: Vec<Vec<(u32, f64)>>,
    joint_template: Vec<[f64; 3]>,
    /// `[J][3][K]`
    joint_shape: Vec<f64>,
    keypoints: Vec<Vec<KeypointTerm>>,
}

/// Immutable after construction; share freely across threads.
#[derive(Debug, Clone)]
pub struct BodyModel {
    parts: BodyModelParts,
    triangles: Arc<Vec<[u32; 3]>>,
    cache: Cache,
}

impl PartialEq for BodyModel {
    fn eq(&self, other: &Self) -> bool {
        self.parts == other.parts
    }
}

impl BodyModel {
    pub fn new(parts: BodyModelParts) -> Result<Self> {
        validate(&parts)?;
        let cache = build_cache(&parts);
        let triangles = Arc::new(parts.triangles.clone());
        Ok(Self { parts, triangles, cache })
    }

    pub fn parts(&self) -> &BodyModelParts {
        &self.parts
    }

    pub fn num_vertices(&self) -> usize {
        self.parts.template.len()
    }

    pub fn num_joints(&self) -> usize {
        self.parts.parents.len()
    }

    pub fn num_keypoints(&self) -> usize {
        self.parts.meta.keypoint_names.len()
    }

    pub fn num_betas(&self) -> usize {
        self.parts.num_betas
    }

    /// Length of θ: three per non-root joint.
    pub fn pose_dim(&self) -> usize {
        3 * (self.num_joints() - 1)
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parts.parents
    }

    pub fn part_labels(&self) -> &[u16] {
        &self.parts.part_labels
    }

    pub fn num_parts(&self) -> usize {
        self.parts.meta.part_names.len()
    }

    pub fn triangles(&self) -> &Arc<Vec<[u32; 3]>> {
        &self.triangles
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.parts.meta
    }

    pub fn template(&self) -> &[[f64; 3]] {
        &self.parts.template
    }

    pub fn skinning_weight(&self, v: usize, j: usize) -> f64 {
        self.parts.skinning_weights[v * self.num_joints() + j]
    }

    /// Joints whose rotation (directly or through an ancestor) moves joint `j`.
    pub fn ancestors(&self, j: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.parts.parents[j];
        while let Some(p) = cur {
            out.push(p);
            cur = self.parts.parents[p];
        }
        out
    }

    fn check_params(&self, pose: usize, shape: usize) -> Result<()> {
        Error::check_dim("pose parameters", self.pose_dim(), pose)?;
        Error::check_dim("shape parameters", self.num_betas(), shape)
    }

    /// Rest-pose joint pivots for shape `β`.
    pub fn rest_joints<T: Real>(&self, shape: &[T]) -> Vec<Vec3<T>> {
        let k = self.num_betas();
        self.cache
            .joint_template
            .iter()
            .enumerate()
            .map(|(j, jt)| {
                let mut p = [T::cst(jt[0]), T::cst(jt[1]), T::cst(jt[2])];
                for (c, pc) in p.iter_mut().enumerate() {
                    let row = &self.cache.joint_shape[(j * 3 + c) * k..(j * 3 + c + 1) * k];
                    for (b, &s) in shape.iter().zip(row) {
                        if s != 0.0 {
                            *pc = *pc + *b * s;
                        }
                    }
                }
                p
            })
            .collect()
    }

    /// Per-joint skinning transforms `x ↦ A·x + b` mapping rest-pose shaped
    /// points to posed points.
    pub fn skinning_transforms<T: Real>(
        &self,
        pose: &[T],
        shape: &[T],
        global: &[T; 3],
    ) -> Result<Vec<(Mat3<T>, Vec3<T>)>> {
        self.check_params(pose.len(), shape.len())?;
        let rest = self.rest_joints(shape);
        let n = self.num_joints();
        // b_j = t_j - R_j·J_j, accumulated as b_p + (R_p - R_j)·J_j so that
        // the rest pose gives exactly zero offsets
        let mut out: Vec<(Mat3<T>, Vec3<T>)> = Vec::with_capacity(n);
        for j in 0..n {
            match self.parts.parents[j] {
                None => {
                    let r = rodrigues(global);
                    let b = sub3(&rest[j], &mat_vec(&r, &rest[j]));
                    out.push((r, b));
                }
                Some(p) => {
                    let local = rodrigues(&[pose[3 * (j - 1)], pose[3 * (j - 1) + 1], pose[3 * (j - 1) + 2]]);
                    let (rp, bp) = out[p];
                    let r = mat_mul(&rp, &local);
                    let mut diff = rp;
                    for (drow, rrow) in diff.iter_mut().zip(&r) {
                        for (d, x) in drow.iter_mut().zip(rrow) {
                            *d = *d - *x;
                        }
                    }
                    out.push((r, add3(&bp, &mat_vec(&diff, &rest[j]))));
                }
            }
        }
        Ok(out)
    }

    /// Shaped rest-pose vertices `T + S·β`.
    pub fn shaped_vertices<T: Real>(&self, shape: &[T]) -> Vec<Vec3<T>> {
        let k = self.num_betas();
        let basis = &self.parts.shape_basis;
        self.parts
            .template
            .iter()
            .enumerate()
            .map(|(v, t)| {
                let mut p = [T::cst(t[0]), T::cst(t[1]), T::cst(t[2])];
                for (c, pc) in p.iter_mut().enumerate() {
                    let row = &basis[(v * 3 + c) * k..(v * 3 + c + 1) * k];
                    for (b, &s) in shape.iter().zip(row) {
                        *pc = *pc + *b * s;
                    }
                }
                p
            })
            .collect()
    }

    /// Posed vertices, generic over the scalar type.
    pub fn vertices_generic<T: Real>(&self, pose: &[T], shape: &[T], global: &[T; 3]) -> Result<Vec<Vec3<T>>> {
        let transforms = self.skinning_transforms(pose, shape, global)?;
        let shaped = self.shaped_vertices(shape);
        Ok(shaped
            .iter()
            .zip(&self.cache.skin)
            .map(|(v, weights)| {
                // v + Σ w·((A − I)·v + b): exact at the rest pose
                let mut out = *v;
                for &(j, w) in weights {
                    let (a, b) = &transforms[j as usize];
                    let d = add3(&sub3(&mat_vec(a, v), v), b);
                    for c in 0..3 {
                        out[c] = out[c] + d[c] * w;
                    }
                }
                out
            })
            .collect())
    }

    /// Regressed keypoints of the posed mesh without materializing it.
    ///
    /// Skinning and regression are both linear in the shaped vertices, so
    /// `𝒥·LBS(v)` collapses to per-(keypoint, joint) aggregates of the
    /// template and shape basis. Equal to `regress_joints(forward(..))` up
    /// to rounding.
    pub fn keypoints_generic<T: Real>(&self, pose: &[T], shape: &[T], global: &[T; 3]) -> Result<Vec<Vec3<T>>> {
        let transforms = self.skinning_transforms(pose, shape, global)?;
        let k = self.num_betas();
        Ok(self
            .cache
            .keypoints
            .iter()
            .map(|terms| {
                let mut out = [T::zero(); 3];
                for term in terms {
                    let mut m = [T::cst(term.rest[0]), T::cst(term.rest[1]), T::cst(term.rest[2])];
                    for (c, mc) in m.iter_mut().enumerate() {
                        for (b, &s) in shape.iter().zip(&term.basis[c * k..(c + 1) * k]) {
                            if s != 0.0 {
                                *mc = *mc + *b * s;
                            }
                        }
                    }
                    let (a, b) = &transforms[term.joint];
                    let am = mat_vec(a, &m);
                    for c in 0..3 {
                        out[c] = out[c] + am[c] + b[c] * term.weight;
                    }
                }
                out
            })
            .collect())
    }

    pub fn forward(&self, pose: &PoseParams, shape: &ShapeParams, global: &GlobalRotation) -> Result<VertexMesh> {
        let vertices = self.vertices_generic(&pose.0, &shape.0, &global.0)?;
        Ok(VertexMesh { vertices, triangles: Arc::clone(&self.triangles) })
    }

    /// `θ = 0, γ = 0`.
    pub fn neutral_pose_mesh(&self, shape: &ShapeParams) -> Result<VertexMesh> {
        self.forward(&PoseParams::zeros(self.pose_dim()), shape, &GlobalRotation::IDENTITY)
    }

    /// `J3D = 𝒥·V`.
    pub fn regress_joints(&self, mesh: &VertexMesh) -> Result<Vec<[f64; 3]>> {
        let v = self.num_vertices();
        Error::check_dim("mesh vertices", v, mesh.vertices.len())?;
        Ok(self
            .parts
            .joint_regressor
            .chunks_exact(v)
            .map(|row| {
                let mut p = [0.0; 3];
                for (w, x) in row.iter().zip(&mesh.vertices) {
                    if *w != 0.0 {
                        for c in 0..3 {
                            p[c] += w * x[c];
                        }
                    }
                }
                p
            })
            .collect())
    }

    /// Keypoints for `(θ, β, γ)` through the aggregated fast path.
    pub fn keypoints(&self, pose: &PoseParams, shape: &ShapeParams, global: &GlobalRotation) -> Result<Vec<[f64; 3]>> {
        self.keypoints_generic(&pose.0, &shape.0, &global.0)
    }

    /// Anchor point of a measurement plane on a mesh.
    pub fn measurement_anchor(&self, def: &MeasurementDef, mesh: &VertexMesh) -> [f64; 3] {
        let mut p = [0.0; 3];
        for &(v, w) in &def.anchor {
            for c in 0..3 {
                p[c] += w * mesh.vertices[v as usize][c];
            }
        }
        p
    }
}

fn validate(p: &BodyModelParts) -> Result<()> {
    let v = p.template.len();
    let j = p.parents.len();
    let k = p.num_betas;
    let l = p.meta.keypoint_names.len();
    let bad = |m: String| Err(Error::InvalidModel(m));
    if v == 0 || j == 0 {
        return bad("empty model".into());
    }
    Error::check_dim("shape basis", v * 3 * k, p.shape_basis.len())?;
    Error::check_dim("skinning weights", v * j, p.skinning_weights.len())?;
    Error::check_dim("skeleton regressor", j * v, p.skeleton_regressor.len())?;
    Error::check_dim("joint regressor", l * v, p.joint_regressor.len())?;
    Error::check_dim("part labels", v, p.part_labels.len())?;
    Error::check_dim("keypoint joints", l, p.meta.keypoint_joints.len())?;
    Error::check_dim("joint names", j, p.meta.joint_names.len())?;
    if !p.template.iter().flatten().chain(&p.shape_basis).all(|x| x.is_finite()) {
        return bad("non-finite template or shape basis".into());
    }
    let roots = p.parents.iter().filter(|x| x.is_none()).count();
    if roots != 1 || p.parents[0].is_some() {
        return bad(format!("kinematic tree needs exactly one root at index 0, found {roots}"));
    }
    for (i, par) in p.parents.iter().enumerate() {
        if let Some(q) = par {
            // parent-before-child ordering rules out cycles
            if *q >= i {
                return bad(format!("joint {i} has parent {q} not preceding it"));
            }
        }
    }
    for (name, rows, width) in [
        ("skinning weights", &p.skinning_weights, j),
        ("skeleton regressor", &p.skeleton_regressor, v),
        ("joint regressor", &p.joint_regressor, v),
    ] {
        for (r, row) in rows.chunks_exact(width).enumerate() {
            if row.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return bad(format!("{name} row {r} has negative or non-finite entries"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > SUM_TOL {
                return bad(format!("{name} row {r} sums to {s}"));
            }
        }
    }
    if p.triangles.iter().flatten().any(|&i| i as usize >= v) {
        return bad("triangle index out of range".into());
    }
    let parts = p.meta.part_names.len();
    if p.part_labels.iter().any(|&x| x as usize >= parts) {
        return bad("part label out of range".into());
    }
    if p.meta.keypoint_joints.iter().any(|&x| x >= j) {
        return bad("keypoint joint out of range".into());
    }
    if p.meta.lr_pairs.iter().flatten().any(|&x| x >= l) {
        return bad("left/right pair out of range".into());
    }
    Ok(())
}

fn build_cache(p: &BodyModelParts) -> Cache {
    let v = p.template.len();
    let j = p.parents.len();
    let k = p.num_betas;
    let skin: Vec<Vec<(u32, f64)>> = p
        .skinning_weights
        .chunks_exact(j)
        .map(|row| row.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(i, w)| (i as u32, *w)).collect())
        .collect();

    let mut joint_template = vec![[0.0; 3]; j];
    let mut joint_shape = vec![0.0; j * 3 * k];
    for (ji, row) in p.skeleton_regressor.chunks_exact(v).enumerate() {
        for (vi, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for c in 0..3 {
                joint_template[ji][c] += w * p.template[vi][c];
                for b in 0..k {
                    joint_shape[(ji * 3 + c) * k + b] += w * p.shape_basis[(vi * 3 + c) * k + b];
                }
            }
        }
    }

    let keypoints = p
        .joint_regressor
        .chunks_exact(v)
        .map(|row| {
            let mut terms: Vec<KeypointTerm> = Vec::new();
            for ji in 0..j {
                let mut term = KeypointTerm { joint: ji, weight: 0.0, rest: [0.0; 3], basis: vec![0.0; 3 * k] };
                for (vi, &r) in row.iter().enumerate() {
                    let w = r * p.skinning_weights[vi * j + ji];
                    if w == 0.0 {
                        continue;
                    }
                    term.weight += w;
                    for c in 0..3 {
                        term.rest[c] += w * p.template[vi][c];
                        for b in 0..k {
                            term.basis[c * k + b] += w * p.shape_basis[(vi * 3 + c) * k + b];
                        }
                    }
                }
                if term.weight != 0.0 {
                    terms.push(term);
                }
            }
            terms
        })
        .collect();
    Cache { skin, joint_template, joint_shape, keypoints }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::{mat_vec, rodrigues};

    fn toy() -> BodyModel {
        generate_toy_model(&ToyModelSpec { seed: 3, vertices: 300, joints: 24 }).unwrap()
    }

    #[test]
    fn neutral_pose_reproduces_template() {
        let m = toy();
        let mesh = m.neutral_pose_mesh(&ShapeParams::zeros(m.num_betas())).unwrap();
        assert_eq!(mesh.vertices, m.template());
    }

    #[test]
    fn first_shape_direction_is_added_linearly() {
        let m = toy();
        let mesh = m.neutral_pose_mesh(&ShapeParams::unit(m.num_betas(), 0)).unwrap();
        let k = m.num_betas();
        for (v, p) in mesh.vertices.iter().enumerate() {
            for c in 0..3 {
                let expect = m.template()[v][c] + m.parts().shape_basis[(v * 3 + c) * k];
                assert!((p[c] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn half_turn_about_vertical_rotates_about_root() {
        let m = toy();
        let beta = ShapeParams::zeros(m.num_betas());
        let neutral = m.neutral_pose_mesh(&beta).unwrap();
        let turned = m
            .forward(&PoseParams::zeros(m.pose_dim()), &beta, &GlobalRotation([0.0, std::f64::consts::PI, 0.0]))
            .unwrap();
        let root = m.rest_joints(&beta.0)[0];
        let r = rodrigues(&[0.0, std::f64::consts::PI, 0.0]);
        for (a, b) in neutral.vertices.iter().zip(&turned.vertices) {
            let local = [a[0] - root[0], a[1] - root[1], a[2] - root[2]];
            let rot = mat_vec(&r, &local);
            for c in 0..3 {
                assert!((rot[c] + root[c] - b[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_hot_and_uniform_regressor_rows() {
        let m = toy();
        let mesh = m.neutral_pose_mesh(&ShapeParams::zeros(m.num_betas())).unwrap();
        let mut parts = m.parts().clone();
        let v = m.num_vertices();
        parts.joint_regressor.iter_mut().for_each(|x| *x = 0.0);
        parts.joint_regressor[7] = 1.0;
        for x in &mut parts.joint_regressor[v..2 * v] {
            *x = 1.0 / v as f64;
        }
        for row in 2..m.num_keypoints() {
            parts.joint_regressor[row * v] = 1.0;
        }
        let m2 = BodyModel::new(parts).unwrap();
        let j = m2.regress_joints(&mesh).unwrap();
        assert_eq!(j[0], mesh.vertices[7]);
        let mut centroid = [0.0; 3];
        for p in &mesh.vertices {
            for c in 0..3 {
                centroid[c] += p[c] / v as f64;
            }
        }
        for c in 0..3 {
            assert!((j[1][c] - centroid[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn keypoint_fast_path_matches_mesh_regression() {
        let m = toy();
        let pose = PoseParams((0..m.pose_dim()).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.05).collect());
        let shape = ShapeParams((0..m.num_betas()).map(|i| (i as f64 - 4.0) * 0.4).collect());
        let global = GlobalRotation([0.2, -1.1, 0.3]);
        let mesh = m.forward(&pose, &shape, &global).unwrap();
        let slow = m.regress_joints(&mesh).unwrap();
        let fast = m.keypoints(&pose, &shape, &global).unwrap();
        for (a, b) in slow.iter().zip(&fast) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = toy();
        let e = m.forward(&PoseParams::zeros(3), &ShapeParams::zeros(m.num_betas()), &GlobalRotation::IDENTITY);
        assert!(matches!(e, Err(Error::Dimension { .. })));
        assert!(m.regress_joints(&VertexMesh::empty()).is_err());
    }

    #[test]
    fn invalid_parts_are_rejected() {
        let m = toy();
        let mut p = m.parts().clone();
        p.skinning_weights[0] += 0.1;
        assert!(matches!(BodyModel::new(p), Err(Error::InvalidModel(_))));
        let mut p = m.parts().clone();
        p.parents[3] = Some(5);
        assert!(BodyModel::new(p).is_err());
        let mut p = m.parts().clone();
        p.parents[1] = None;
        assert!(BodyModel::new(p).is_err());
    }
}
