//! Procedural humanoid used in place of licensed body-model assets.
//!
//! The body is five tubular chains (torso+head, two arms, two legs) built
//! from elliptical vertex rings along polylines through a 24-joint
//! skeleton in a T-pose (y up, subject facing +z, subject's left at +x).
//! Smaller skeletons keep a prefix of the joint list; geometry attached to
//! dropped joints is skinned to the nearest surviving ancestor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BodyModel, BodyModelParts, MeasurementDef, ModelMeta};
use crate::error::{Error, Result};

pub const DEFAULT_VERTICES: usize = 600;
pub const DEFAULT_JOINTS: usize = 24;
pub const DEFAULT_KEYPOINTS: usize = 17;
pub const NUM_BETAS: usize = 10;

const MIN_VERTICES: usize = 50;
const MIN_JOINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyModelSpec {
    pub seed: u64,
    pub vertices: usize,
    pub joints: usize,
}

impl Default for ToyModelSpec {
    fn default() -> Self {
        Self { seed: 0, vertices: DEFAULT_VERTICES, joints: DEFAULT_JOINTS }
    }
}

const JOINT_NAMES: [&str; 24] = [
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee", "spine2", "left_ankle",
    "right_ankle", "spine3", "left_foot", "right_foot", "neck", "left_collar", "right_collar", "head",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "left_hand", "right_hand",
];

const PARENTS: [i32; 24] = [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21];

const KEYPOINT_NAMES: [&str; 17] = [
    "nose", "left_eye", "right_eye", "left_ear", "right_ear", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hip", "right_hip", "left_knee",
    "right_knee", "left_ankle", "right_ankle",
];

const KEYPOINT_JOINTS: [usize; 17] = [15, 15, 15, 15, 15, 16, 17, 18, 19, 20, 21, 1, 2, 4, 5, 7, 8];

const LR_PAIRS: [[usize; 2]; 6] = [[5, 6], [7, 8], [9, 10], [11, 12], [13, 14], [15, 16]];

const FACE_TARGETS: [[f64; 3]; 5] = [
    [0.0, 0.955, 0.115],
    [0.035, 0.985, 0.095],
    [-0.035, 0.985, 0.095],
    [0.095, 0.965, 0.0],
    [-0.095, 0.965, 0.0],
];

const PART_NAMES: [&str; 10] = [
    "torso", "head", "left_upper_arm", "left_forearm", "right_upper_arm", "right_forearm",
    "left_thigh", "left_calf", "right_thigh", "right_calf",
];
const TORSO: u16 = 0;
const HEAD: u16 = 1;

#[derive(Clone, Copy)]
struct ChainPoint {
    pos: [f64; 3],
    /// Radii along the ring frame axes (u, v).
    radii: [f64; 2],
    joint: Option<usize>,
}

const fn cp(pos: [f64; 3], radii: [f64; 2], joint: i32) -> ChainPoint {
    ChainPoint { pos, radii, joint: if joint < 0 { None } else { Some(joint as usize) } }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ChainKind {
    Torso,
    Arm { left: bool },
    Leg { left: bool },
}

fn torso_chain() -> Vec<ChainPoint> {
    vec![
        cp([0.0, 0.08, 0.0], [0.13, 0.085], -1),
        cp([0.0, 0.25, 0.0], [0.165, 0.105], 0),
        cp([0.0, 0.37, -0.005], [0.145, 0.095], 3),
        cp([0.0, 0.49, 0.0], [0.15, 0.10], 6),
        cp([0.0, 0.58, 0.0], [0.165, 0.105], 9),
        cp([0.0, 0.70, 0.0], [0.15, 0.095], -1),
        cp([0.0, 0.78, 0.0], [0.055, 0.055], 12),
        cp([0.0, 0.86, 0.01], [0.075, 0.085], 15),
        cp([0.0, 0.96, 0.015], [0.095, 0.105], -1),
        cp([0.0, 1.05, 0.01], [0.035, 0.04], -1),
    ]
}

fn arm_chain(left: bool) -> Vec<ChainPoint> {
    let s = if left { 1.0 } else { -1.0 };
    let j = |l: i32, r: i32| if left { l } else { r };
    vec![
        cp([s * 0.07, 0.70, -0.01], [0.06, 0.06], j(13, 14)),
        cp([s * 0.19, 0.71, -0.01], [0.055, 0.055], j(16, 17)),
        cp([s * 0.46, 0.71, -0.02], [0.042, 0.042], j(18, 19)),
        cp([s * 0.71, 0.71, -0.01], [0.028, 0.032], j(20, 21)),
        cp([s * 0.80, 0.71, -0.01], [0.018, 0.042], j(22, 23)),
        cp([s * 0.89, 0.71, -0.01], [0.012, 0.03], -1),
    ]
}

fn leg_chain(left: bool) -> Vec<ChainPoint> {
    let s = if left { 1.0 } else { -1.0 };
    let j = |l: i32, r: i32| if left { l } else { r };
    vec![
        cp([s * 0.09, 0.17, 0.0], [0.085, 0.085], j(1, 2)),
        cp([s * 0.10, -0.22, 0.01], [0.055, 0.055], j(4, 5)),
        cp([s * 0.10, -0.60, -0.02], [0.04, 0.04], j(7, 8)),
        cp([s * 0.105, -0.64, 0.0], [0.042, 0.035], -1),
        cp([s * 0.11, -0.65, 0.10], [0.045, 0.025], j(10, 11)),
        cp([s * 0.11, -0.65, 0.16], [0.035, 0.015], -1),
    ]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = norm(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

struct Chain {
    kind: ChainKind,
    points: Vec<ChainPoint>,
    arcs: Vec<f64>,
    tangents: Vec<[f64; 3]>,
}

impl Chain {
    fn new(kind: ChainKind, points: Vec<ChainPoint>) -> Self {
        let mut arcs = vec![0.0];
        for w in points.windows(2) {
            arcs.push(arcs.last().unwrap() + norm(sub(w[1].pos, w[0].pos)));
        }
        let n = points.len();
        let tangents = (0..n)
            .map(|i| {
                let a = points[i.saturating_sub(1)].pos;
                let b = points[(i + 1).min(n - 1)].pos;
                normalize(sub(b, a))
            })
            .collect();
        Self { kind, points, arcs, tangents }
    }

    fn length(&self) -> f64 {
        *self.arcs.last().unwrap()
    }

    fn joint_arc(&self, j: usize) -> Option<f64> {
        self.points.iter().zip(&self.arcs).find(|(p, _)| p.joint == Some(j)).map(|(_, a)| *a)
    }

    /// Center, tangent and radii at arc length `a`.
    fn sample(&self, a: f64) -> ([f64; 3], [f64; 3], [f64; 2]) {
        let n = self.points.len();
        let mut i = 0;
        while i + 2 < n && self.arcs[i + 1] < a {
            i += 1;
        }
        let span = self.arcs[i + 1] - self.arcs[i];
        let t = ((a - self.arcs[i]) / span).clamp(0.0, 1.0);
        let (p, q) = (&self.points[i], &self.points[i + 1]);
        let center = lerp3(p.pos, q.pos, t);
        let tangent = normalize(lerp3(self.tangents[i], self.tangents[i + 1], t));
        let radii = [p.radii[0] + (q.radii[0] - p.radii[0]) * t, p.radii[1] + (q.radii[1] - p.radii[1]) * t];
        (center, tangent, radii)
    }

    /// (arc, driver before, driver after) for each joint on the chain.
    fn transitions(&self) -> Vec<(f64, usize, usize)> {
        let joints: Vec<(f64, usize)> =
            self.points.iter().zip(&self.arcs).filter_map(|(p, a)| p.joint.map(|j| (*a, j))).collect();
        let mut out = Vec::with_capacity(joints.len());
        for (k, &(a, j)) in joints.iter().enumerate() {
            let before = if k == 0 {
                let p = PARENTS[j];
                if p < 0 {
                    j
                } else {
                    p as usize
                }
            } else {
                joints[k - 1].1
            };
            out.push((a, before, j));
        }
        out
    }

    fn part(&self, a: f64) -> u16 {
        match self.kind {
            ChainKind::Torso => {
                if a < self.joint_arc(12).unwrap_or(f64::INFINITY) {
                    TORSO
                } else {
                    HEAD
                }
            }
            ChainKind::Arm { left } => {
                let elbow = self.joint_arc(if left { 18 } else { 19 }).unwrap();
                match (left, a < elbow) {
                    (true, true) => 2,
                    (true, false) => 3,
                    (false, true) => 4,
                    (false, false) => 5,
                }
            }
            ChainKind::Leg { left } => {
                let knee = self.joint_arc(if left { 4 } else { 5 }).unwrap();
                match (left, a < knee) {
                    (true, true) => 6,
                    (true, false) => 7,
                    (false, true) => 8,
                    (false, false) => 9,
                }
            }
        }
    }

    /// Skinning weights (over the full 24-joint skeleton) at arc `a`.
    fn skin(&self, a: f64) -> Vec<(usize, f64)> {
        let tr = self.transitions();
        for (k, &(ak, before, after)) in tr.iter().enumerate() {
            let mut gap = f64::INFINITY;
            if k > 0 {
                gap = gap.min(ak - tr[k - 1].0);
            }
            if k + 1 < tr.len() {
                gap = gap.min(tr[k + 1].0 - ak);
            }
            let delta = 0.035_f64.min(0.45 * gap);
            if (a - ak).abs() < delta && before != after {
                let t = (a - (ak - delta)) / (2.0 * delta);
                let s = t * t * (3.0 - 2.0 * t);
                return vec![(before, 1.0 - s), (after, s)];
            }
        }
        match tr.iter().rev().find(|(ak, _, _)| *ak <= a) {
            Some(&(_, _, after)) => vec![(after, 1.0)],
            None => vec![(tr[0].1, 1.0)],
        }
    }
}

#[derive(Clone)]
struct VertexInfo {
    chain: usize,
    center: [f64; 3],
    radial: [f64; 3],
    part: u16,
    skin: Vec<(usize, f64)>,
}

struct Layout {
    positions: Vec<[f64; 3]>,
    info: Vec<VertexInfo>,
    triangles: Vec<[u32; 3]>,
    /// per chain: (ring arcs, first vertex index of each ring)
    rings: Vec<(Vec<f64>, Vec<usize>)>,
    ring_size: usize,
}

fn jitter_chain(points: &mut [ChainPoint], rng: &mut ChaCha8Rng) {
    for p in points.iter_mut() {
        for c in 0..3 {
            p.pos[c] += rng.random_range(-0.004..0.004);
        }
        let f = 1.0 + rng.random_range(-0.04..0.04);
        p.radii = [p.radii[0] * f, p.radii[1] * f];
    }
}

fn build_chains(seed: u64) -> Vec<Chain> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut defs = vec![
        (ChainKind::Torso, torso_chain()),
        (ChainKind::Arm { left: true }, arm_chain(true)),
        (ChainKind::Arm { left: false }, arm_chain(false)),
        (ChainKind::Leg { left: true }, leg_chain(true)),
        (ChainKind::Leg { left: false }, leg_chain(false)),
    ];
    for (_, pts) in defs.iter_mut() {
        jitter_chain(pts, &mut rng);
    }
    defs.into_iter().map(|(k, p)| Chain::new(k, p)).collect()
}

fn ring_size_for(vertices: usize) -> usize {
    ((vertices as f64 / 9.0).sqrt().round() as usize).clamp(3, 16)
}

fn layout(chains: &[Chain], vertices: usize) -> Layout {
    let s = ring_size_for(vertices);
    let apexes = 2 * chains.len();
    let ring_budget = (vertices - apexes) / s;
    let extra = vertices - apexes - ring_budget * s;

    // largest-remainder allocation proportional to chain length, at least 2 rings each
    let total: f64 = chains.iter().map(Chain::length).sum();
    let spare = ring_budget - 2 * chains.len();
    let quotas: Vec<f64> = chains.iter().map(|c| spare as f64 * c.length() / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| 2 + q.floor() as usize).collect();
    let mut left = ring_budget - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..chains.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }

    let mut positions = Vec::with_capacity(vertices);
    let mut info = Vec::with_capacity(vertices);
    let mut triangles = Vec::new();
    let mut rings = Vec::new();
    let mut caps: Vec<usize> = Vec::new();

    for (ci, chain) in chains.iter().enumerate() {
        let n = counts[ci];
        let arcs: Vec<f64> = (0..n).map(|i| chain.length() * i as f64 / (n - 1) as f64).collect();
        let mut starts = Vec::with_capacity(n);
        let mut frames = Vec::with_capacity(n);
        let (_, t0, _) = chain.sample(0.0);
        let helper = if dot(t0, [0.0, 0.0, 1.0]).abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
        let mut u = normalize(cross(helper, t0));
        for &a in &arcs {
            let (center, t, radii) = chain.sample(a);
            // parallel transport of the ring frame
            u = normalize(sub(u, [t[0] * dot(u, t), t[1] * dot(u, t), t[2] * dot(u, t)]));
            let v = cross(t, u);
            frames.push((center, t, radii));
            starts.push(positions.len());
            let skin = chain.skin(a);
            let part = chain.part(a);
            for i in 0..s {
                let phi = std::f64::consts::TAU * i as f64 / s as f64;
                let (c, sn) = (phi.cos(), phi.sin());
                let radial = [
                    radii[0] * c * u[0] + radii[1] * sn * v[0],
                    radii[0] * c * u[1] + radii[1] * sn * v[1],
                    radii[0] * c * u[2] + radii[1] * sn * v[2],
                ];
                positions.push([center[0] + radial[0], center[1] + radial[1], center[2] + radial[2]]);
                info.push(VertexInfo { chain: ci, center, radial, part, skin: skin.clone() });
            }
        }
        for r in 0..n - 1 {
            for i in 0..s {
                let a = (starts[r] + i) as u32;
                let b = (starts[r] + (i + 1) % s) as u32;
                let c = (starts[r + 1] + i) as u32;
                let d = (starts[r + 1] + (i + 1) % s) as u32;
                triangles.push([a, b, d]);
                triangles.push([a, d, c]);
            }
        }
        for (end, ring) in [(false, 0), (true, n - 1)] {
            let (center, t, radii) = frames[ring];
            let off = 0.4 * 0.5 * (radii[0] + radii[1]) * if end { 1.0 } else { -1.0 };
            let apex = positions.len() as u32;
            positions.push([center[0] + t[0] * off, center[1] + t[1] * off, center[2] + t[2] * off]);
            let vi = &info[starts[ring]];
            info.push(VertexInfo {
                chain: ci,
                center,
                radial: [t[0] * off, t[1] * off, t[2] * off],
                part: vi.part,
                skin: vi.skin.clone(),
            });
            for i in 0..s {
                let a = (starts[ring] + i) as u32;
                let b = (starts[ring] + (i + 1) % s) as u32;
                caps.push(triangles.len());
                triangles.push(if end { [apex, a, b] } else { [apex, b, a] });
            }
        }
        rings.push((arcs, starts));
    }

    // top up to the exact vertex count by splitting cap triangles at their centroids
    for k in 0..extra {
        let ti = caps[k * (caps.len() / extra.max(1)).max(1) % caps.len()];
        let [a, b, c] = triangles[ti];
        let idx = [a as usize, b as usize, c as usize];
        let mut pos = [0.0; 3];
        let mut center = [0.0; 3];
        let mut radial = [0.0; 3];
        let mut skin: Vec<(usize, f64)> = Vec::new();
        for &i in &idx {
            for d in 0..3 {
                pos[d] += positions[i][d] / 3.0;
                center[d] += info[i].center[d] / 3.0;
                radial[d] += info[i].radial[d] / 3.0;
            }
            for &(j, w) in &info[i].skin {
                match skin.iter_mut().find(|(jj, _)| *jj == j) {
                    Some(e) => e.1 += w / 3.0,
                    None => skin.push((j, w / 3.0)),
                }
            }
        }
        let n = positions.len() as u32;
        positions.push(pos);
        info.push(VertexInfo { chain: info[idx[0]].chain, center, radial, part: info[idx[0]].part, skin });
        triangles[ti] = [a, b, n];
        triangles.push([b, c, n]);
        triangles.push([c, a, n]);
    }
    debug_assert_eq!(positions.len(), vertices);
    Layout { positions, info, triangles, rings, ring_size: s }
}

/// Regressor row locating anatomical joint `j` from the two rings bracketing it.
fn joint_row(chains: &[Chain], lay: &Layout, j: usize, nv: usize) -> Vec<f64> {
    let mut row = vec![0.0; nv];
    for (ci, chain) in chains.iter().enumerate() {
        let Some(aj) = chain.joint_arc(j) else { continue };
        let (arcs, starts) = &lay.rings[ci];
        let mut i = 0;
        while i + 2 < arcs.len() && arcs[i + 1] < aj {
            i += 1;
        }
        let alpha = ((aj - arcs[i]) / (arcs[i + 1] - arcs[i])).clamp(0.0, 1.0);
        let s = lay.ring_size as f64;
        for k in 0..lay.ring_size {
            row[starts[i] + k] += (1.0 - alpha) / s;
            row[starts[i + 1] + k] += alpha / s;
        }
        return row;
    }
    unreachable!("joint {j} is not on any chain")
}

fn nearest_row(lay: &Layout, target: [f64; 3], part: u16, nv: usize) -> Vec<f64> {
    let mut cand: Vec<(f64, usize)> = lay
        .positions
        .iter()
        .enumerate()
        .filter(|(i, _)| lay.info[*i].part == part)
        .map(|(i, p)| (norm(sub(*p, target)), i))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(3);
    let inv: Vec<f64> = cand.iter().map(|(d, _)| 1.0 / (d + 1e-3)).collect();
    let total: f64 = inv.iter().sum();
    let mut row = vec![0.0; nv];
    for ((_, i), w) in cand.iter().zip(&inv) {
        row[*i] += w / total;
    }
    row
}

fn shape_directions(lay: &Layout, chains: &[Chain]) -> Vec<Vec<f64>> {
    let y0 = lay.positions.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let bump = |y: f64, c: f64, w: f64| (-((y - c) / w).powi(2)).exp();
    let head_center = [0.0, 0.95, 0.015];
    let mut dirs: Vec<Vec<f64>> = (0..NUM_BETAS).map(|_| Vec::with_capacity(lay.positions.len() * 3)).collect();
    for (p, vi) in lay.positions.iter().zip(&lay.info) {
        let kind = chains[vi.chain].kind;
        let is_arm = matches!(kind, ChainKind::Arm { .. });
        let is_leg = matches!(kind, ChainKind::Leg { .. });
        let torso_body = kind == ChainKind::Torso && vi.part == TORSO;
        let r = vi.radial;
        let rn = norm(r).max(1e-9);
        let zero = [0.0; 3];
        let scaled = |v: [f64; 3], f: f64| [v[0] * f, v[1] * f, v[2] * f];
        let d: [[f64; 3]; NUM_BETAS] = [
            [0.0, p[1] - y0, 0.0],
            r,
            if torso_body { scaled(r, bump(p[1], 0.40, 0.09) * (0.3 + (r[2] / rn).max(0.0))) } else { zero },
            if is_arm { [p[0] - 0.07 * p[0].signum(), 0.0, 0.0] } else { zero },
            [0.0, p[1].min(0.17) - y0, 0.0],
            if is_arm { zero } else { [p[0] * bump(p[1], 0.15, 0.14), 0.0, 0.0] },
            if torso_body { [0.0, 0.0, r[2] * bump(p[1], 0.60, 0.08)] } else { zero },
            if is_arm { r } else { zero },
            if is_leg { scaled(r, if vi.part == 6 || vi.part == 8 { 1.0 } else { 0.5 }) } else { zero },
            if vi.part == HEAD { sub(*p, head_center) } else { zero },
        ];
        for (k, dk) in d.iter().enumerate() {
            dirs[k].extend_from_slice(dk);
        }
        let _ = vi.center;
    }
    // Gram-Schmidt, then scale to a decaying RMS per-vertex displacement
    let nv = lay.positions.len() as f64;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(NUM_BETAS);
    for (k, mut d) in dirs.into_iter().enumerate() {
        for b in &basis {
            let proj: f64 = d.iter().zip(b).map(|(x, y)| x * y).sum();
            d.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let d: Vec<f64> = if n > 1e-9 {
            d.iter().map(|x| x / n).collect()
        } else {
            // degenerate at tiny resolutions; fall back to a uniform vertical shift
            let mut e = vec![0.0; d.len()];
            (0..d.len() / 3).for_each(|v| e[3 * v + 1] = 1.0 / nv.sqrt());
            e
        };
        let _ = k;
        basis.push(d);
    }
    basis
        .into_iter()
        .enumerate()
        .map(|(k, b)| {
            let rms = 0.03 * 0.85_f64.powi(k as i32);
            b.into_iter().map(|x| x * rms * nv.sqrt()).collect()
        })
        .collect()
}

/// Deterministic humanoid for a given seed, vertex count and joint count.
pub fn generate_toy_model(spec: &ToyModelSpec) -> Result<BodyModel> {
    if spec.vertices < MIN_VERTICES {
        return Err(Error::Config(format!("vertex count must be at least {MIN_VERTICES}, got {}", spec.vertices)));
    }
    if !(MIN_JOINTS..=JOINT_NAMES.len()).contains(&spec.joints) {
        return Err(Error::Config(format!(
            "joint count must be in {MIN_JOINTS}..={}, got {}",
            JOINT_NAMES.len(),
            spec.joints
        )));
    }
    let chains = build_chains(spec.seed);
    let lay = layout(&chains, spec.vertices);
    let nv = lay.positions.len();
    let nj = spec.joints;

    // surviving ancestor for every anatomical joint
    let remap = |mut j: usize| {
        while j >= nj {
            j = PARENTS[j] as usize;
        }
        j
    };

    let mut skinning_weights = vec![0.0; nv * nj];
    for (v, vi) in lay.info.iter().enumerate() {
        let total: f64 = vi.skin.iter().map(|(_, w)| w).sum();
        for &(j, w) in &vi.skin {
            skinning_weights[v * nj + remap(j)] += w / total;
        }
    }

    let anatomical: Vec<Vec<f64>> = (0..JOINT_NAMES.len()).map(|j| joint_row(&chains, &lay, j, nv)).collect();
    let skeleton_regressor: Vec<f64> = anatomical[..nj].iter().flatten().copied().collect();

    let mut joint_regressor = Vec::with_capacity(DEFAULT_KEYPOINTS * nv);
    for (k, &j) in KEYPOINT_JOINTS.iter().enumerate() {
        let row = if k < FACE_TARGETS.len() {
            nearest_row(&lay, FACE_TARGETS[k], HEAD, nv)
        } else {
            anatomical[j].clone()
        };
        joint_regressor.extend(row);
    }

    let basis = shape_directions(&lay, &chains);
    let mut shape_basis = vec![0.0; nv * 3 * NUM_BETAS];
    for (k, b) in basis.iter().enumerate() {
        for (i, x) in b.iter().enumerate() {
            shape_basis[i * NUM_BETAS + k] = *x;
        }
    }

    let sparse = |row: &[f64]| -> Vec<(u32, f64)> {
        row.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(i, w)| (i as u32, *w)).collect()
    };
    let mix = |parts: &[(usize, f64)]| -> Vec<(u32, f64)> {
        let mut row = vec![0.0; nv];
        for &(j, w) in parts {
            row.iter_mut().zip(&anatomical[j]).for_each(|(r, a)| *r += w * a);
        }
        sparse(&row)
    };
    let measurements = vec![
        MeasurementDef { name: "chest".into(), anchor: mix(&[(9, 1.0)]), normal: [0.0, 1.0, 0.0], parts: vec![TORSO] },
        MeasurementDef { name: "stomach".into(), anchor: mix(&[(3, 1.0)]), normal: [0.0, 1.0, 0.0], parts: vec![TORSO] },
        MeasurementDef {
            name: "hips".into(),
            anchor: mix(&[(1, 0.5), (2, 0.5)]),
            normal: [0.0, 1.0, 0.0],
            parts: vec![TORSO, 6, 8],
        },
        MeasurementDef {
            name: "biceps".into(),
            anchor: mix(&[(16, 0.5), (18, 0.5)]),
            normal: [1.0, 0.0, 0.0],
            parts: vec![2],
        },
        MeasurementDef {
            name: "forearm".into(),
            anchor: mix(&[(18, 0.5), (20, 0.5)]),
            normal: [1.0, 0.0, 0.0],
            parts: vec![3],
        },
        MeasurementDef {
            name: "thigh".into(),
            anchor: mix(&[(1, 0.67), (4, 0.33)]),
            normal: [0.0, 1.0, 0.0],
            parts: vec![6],
        },
    ];

    let meta = ModelMeta {
        joint_names: JOINT_NAMES[..nj].iter().map(|s| s.to_string()).collect(),
        keypoint_names: KEYPOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        part_names: PART_NAMES.iter().map(|s| s.to_string()).collect(),
        keypoint_joints: KEYPOINT_JOINTS.iter().map(|&j| remap(j)).collect(),
        lr_pairs: LR_PAIRS.to_vec(),
        measurements,
    };
    BodyModel::new(BodyModelParts {
        template: lay.positions,
        shape_basis,
        num_betas: NUM_BETAS,
        triangles: lay.triangles,
        skinning_weights,
        parents: PARENTS[..nj].iter().map(|&p| if p < 0 { None } else { Some(p as usize) }).collect(),
        skeleton_regressor,
        joint_regressor,
        part_labels: lay.info.iter().map(|v| v.part).collect(),
        meta,
    })
}
