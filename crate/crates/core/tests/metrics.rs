use probfuse::distributions::{GaussianDiag, PredictionSet};
use probfuse::metrics::{
    convex_hull, evaluate, measure_and_normalize, mpjpe, mpjpe_pa, mpjpe_sc, optimal_scale, polygon_perimeter,
    procrustes_align, pve_t_sc, root_center, split_groups, uncertainty_from_params, Combination, EvalConfig,
};
use probfuse::rng::substream;
use probfuse::rotation::{det, mat_vec, rodrigues};
use probfuse::synth::{generate_benchmark, AugmentationConfig, BenchmarkSpec, CorruptMode, GenerationConfig, PoseSource};
use probfuse::camera::WeakPerspCamera;
use probfuse::{generate_toy_model, BodyModel, GlobalRotation, PoseParams, ShapeParams, ToyModelSpec};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::OnceLock;

type P3 = [f64; 3];

fn toy() -> &'static BodyModel {
    static M: OnceLock<BodyModel> = OnceLock::new();
    M.get_or_init(|| generate_toy_model(&ToyModelSpec { seed: 1, vertices: 300, joints: 24 }).unwrap())
}

fn normal3(rng: &mut ChaCha8Rng, s: f64) -> P3 {
    std::array::from_fn(|_| s * rng.sample::<f64, _>(StandardNormal))
}

fn random_labels(rng: &mut ChaCha8Rng) -> (PoseParams, ShapeParams, GlobalRotation) {
    let m = toy();
    let pose = PoseParams((0..m.pose_dim()).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect());
    let shape = ShapeParams((0..m.num_betas()).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect());
    (pose, shape, GlobalRotation(normal3(rng, 1.0)))
}

fn rms(a: &[P3], b: &[P3]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(p, q)| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>()).sum();
    (s / a.len() as f64).sqrt()
}

fn similarity(rng: &mut ChaCha8Rng, pts: &[P3]) -> Vec<P3> {
    let r = rodrigues(&normal3(rng, 1.5));
    let s = rng.random_range(0.3..3.0);
    let t = normal3(rng, 2.0);
    pts.iter().map(|p| std::array::from_fn(|k| s * mat_vec(&r, p)[k] + t[k])).collect()
}

#[test]
fn mpjpe_examples() {
    let mut rng = substream(0, "mpjpe-examples", 0);
    let gt: Vec<P3> = (0..17).map(|_| normal3(&mut rng, 0.3)).collect();
    let shifted: Vec<P3> = gt.iter().map(|p| [p[0] + 0.01, p[1], p[2]]).collect();
    assert!(mpjpe(&shifted, &gt).unwrap() < 1e-9);
    let mut one = gt.clone();
    // a non-root joint moved by 17 mm
    one[3][2] += 0.017;
    assert!((mpjpe(&one, &gt).unwrap() - 1.0).abs() < 1e-9);
    let doubled: Vec<P3> = gt.iter().map(|p| p.map(|x| 2.0 * x)).collect();
    let (a, b) = (root_center(&doubled), root_center(&gt));
    assert!((optimal_scale(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    assert!(mpjpe_sc(&doubled, &gt).unwrap() < 1e-9);
    assert!(mpjpe_sc(&vec![[0.0; 3]; 17], &gt).is_err());
}

#[test]
fn optimal_scale_beats_a_dense_sweep() {
    let mut rng = substream(0, "scale-sweep", 0);
    for _ in 0..50 {
        let gt: Vec<P3> = root_center(&(0..17).map(|_| normal3(&mut rng, 0.3)).collect::<Vec<_>>());
        let pred: Vec<P3> = root_center(&gt.iter().map(|p| {
            let n = normal3(&mut rng, 0.05);
            std::array::from_fn(|k| 1.3 * p[k] + n[k])
        }).collect::<Vec<_>>());
        let sse = |s: f64| -> f64 { pred.iter().zip(&gt).map(|(p, g)| (0..3).map(|k| (s * p[k] - g[k]).powi(2)).sum::<f64>()).sum() };
        let best = optimal_scale(&pred, &gt).unwrap();
        for i in 0..=4000 {
            let s = 0.2 + i as f64 * 1e-3 / 2.0;
            assert!(sse(best) <= sse(s) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// The nesting holds exactly for the squared error each alignment minimizes.
    #[test]
    fn nested_alignments_never_increase_rms_error(
        gt in proptest::collection::vec(proptest::array::uniform3(-1.0f64..1.0), 17),
        pred in proptest::collection::vec(proptest::array::uniform3(-1.0f64..1.0), 17),
    ) {
        let (p, g) = (root_center(&pred), root_center(&gt));
        let s = optimal_scale(&p, &g).unwrap();
        let sc: Vec<P3> = p.iter().map(|x| x.map(|c| c * s)).collect();
        let (_, pa) = procrustes_align(&pred, &gt).unwrap();
        prop_assert!(rms(&sc, &g) <= rms(&p, &g) + 1e-12);
        // a negative scale is a reflection, which Procrustes may not use
        if s > 0.0 {
            prop_assert!(rms(&pa, &gt) <= rms(&sc, &g) + 1e-12);
        }
    }

    #[test]
    fn aligned_mean_errors_are_nested_on_arbitrary_pairs(
        gt in proptest::collection::vec(proptest::array::uniform3(-1.0f64..1.0), 17),
        pred in proptest::collection::vec(proptest::array::uniform3(-1.0f64..1.0), 17),
    ) {
        let (e, sc, pa) = (mpjpe(&pred, &gt).unwrap(), mpjpe_sc(&pred, &gt).unwrap(), mpjpe_pa(&pred, &gt).unwrap());
        prop_assert!(pa <= sc && sc <= e, "{} {} {}", pa, sc, e);
    }

    #[test]
    fn procrustes_recovers_similarities_without_reflection(seed in 0u64..10_000) {
        let mut rng = substream(seed, "procrustes", 0);
        let pred: Vec<P3> = (0..17).map(|_| normal3(&mut rng, 0.4)).collect();
        let gt = similarity(&mut rng, &pred);
        let (t, aligned) = procrustes_align(&pred, &gt).unwrap();
        prop_assert!(rms(&aligned, &gt) < 1e-8);
        prop_assert!((det(&t.rotation) - 1.0).abs() < 1e-9);
        // a mirrored target still gets a proper rotation
        let mirrored: Vec<P3> = gt.iter().map(|p| [-p[0], p[1], p[2]]).collect();
        let (t, _) = procrustes_align(&pred, &mirrored).unwrap();
        prop_assert!((det(&t.rotation) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn metrics_ignore_a_common_translation(seed in 0u64..10_000) {
        let mut rng = substream(seed, "translation", 0);
        let gt: Vec<P3> = (0..17).map(|_| normal3(&mut rng, 0.4)).collect();
        let pred: Vec<P3> = gt.iter().map(|p| { let n = normal3(&mut rng, 0.05); std::array::from_fn(|k| p[k] + n[k]) }).collect();
        let t = normal3(&mut rng, 3.0);
        let mv = |v: &[P3]| -> Vec<P3> { v.iter().map(|p| std::array::from_fn(|k| p[k] + t[k])).collect() };
        let (pm, gm) = (mv(&pred), mv(&gt));
        prop_assert!((mpjpe(&pred, &gt).unwrap() - mpjpe(&pm, &gm).unwrap()).abs() < 1e-9);
        // the aligned variants stop an iterative refinement, hence the
        // looser tolerance
        prop_assert!((mpjpe_sc(&pred, &gt).unwrap() - mpjpe_sc(&pm, &gm).unwrap()).abs() < 1e-6);
        prop_assert!((mpjpe_pa(&pred, &gt).unwrap() - mpjpe_pa(&pm, &gm).unwrap()).abs() < 1e-6);
        prop_assert!((probfuse::metrics::pve_sc(&pred, &gt).unwrap() - probfuse::metrics::pve_sc(&pm, &gm).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn nested_alignments_order_mean_errors_on_body_skeletons() {
    let m = toy();
    let mut rng = substream(0, "skeleton-pairs", 0);
    for _ in 0..300 {
        let (pose, shape, global) = random_labels(&mut rng);
        let gt = m.keypoints(&pose, &shape, &global).unwrap();
        // a plausible estimate: perturbed labels
        let noisy = |v: &[f64], s: f64, rng: &mut ChaCha8Rng| -> Vec<f64> { v.iter().map(|x| x + s * rng.sample::<f64, _>(StandardNormal)).collect() };
        let pred = m
            .keypoints(&PoseParams(noisy(&pose.0, 0.1, &mut rng)), &ShapeParams(noisy(&shape.0, 0.5, &mut rng)), &GlobalRotation(std::array::from_fn(|k| global.0[k] + 0.1 * rng.sample::<f64, _>(StandardNormal))))
            .unwrap();
        let (e, sc, pa) = (mpjpe(&pred, &gt).unwrap(), mpjpe_sc(&pred, &gt).unwrap(), mpjpe_pa(&pred, &gt).unwrap());
        assert!(pa <= sc && sc <= e, "{pa} {sc} {e}");
    }
}

#[test]
fn scale_corrected_error_beats_a_dense_sweep() {
    let mut rng = substream(1, "sc-sweep", 0);
    for _ in 0..50 {
        let gt: Vec<P3> = (0..17).map(|_| normal3(&mut rng, 0.3)).collect();
        let pred: Vec<P3> = gt.iter().map(|p| {
            let n = normal3(&mut rng, 0.05);
            std::array::from_fn(|k| 1.3 * p[k] + n[k])
        }).collect();
        let (p, g) = (root_center(&pred), root_center(&gt));
        let got = mpjpe_sc(&pred, &gt).unwrap();
        for i in 0..=4000 {
            let s = 0.2 + i as f64 * 5e-4;
            let e = 1000.0 * p.iter().zip(&g).map(|(a, b)| (0..3).map(|k| (s * a[k] - b[k]).powi(2)).sum::<f64>().sqrt()).sum::<f64>() / 17.0;
            assert!(got <= e + 1e-9, "scale {s}: {e} < {got}");
        }
    }
}

#[test]
fn degenerate_alignments_are_rejected() {
    let line: Vec<P3> = (0..5).map(|i| [i as f64, 0.0, 0.0]).collect();
    assert!(procrustes_align(&line, &line).is_err());
    assert!(procrustes_align(&line[..2], &line[..2]).is_err());
    assert!(mpjpe(&line, &line[..3]).is_err());
}

#[test]
fn pve_matches_the_linear_basis_oracle() {
    let m = toy();
    let parts = m.parts();
    let (k, nb) = (3, m.num_betas());
    let mut gt = vec![0.0; nb];
    gt[1] = 0.7;
    for delta in [0.1, 0.5, 2.0] {
        let mut pred = gt.clone();
        pred[k] += delta;
        // T + Bβ built directly from the stored arrays
        let mesh = |b: &[f64]| -> Vec<P3> {
            parts.template.iter().enumerate().map(|(v, t)| std::array::from_fn(|c| t[c] + (0..nb).map(|j| parts.shape_basis[(v * 3 + c) * nb + j] * b[j]).sum::<f64>())).collect()
        };
        let center = |v: Vec<P3>| -> Vec<P3> {
            let n = v.len() as f64;
            let c: P3 = std::array::from_fn(|k| v.iter().map(|p| p[k]).sum::<f64>() / n);
            v.iter().map(|p| std::array::from_fn(|k| p[k] - c[k])).collect()
        };
        let (p, g) = (center(mesh(&pred)), center(mesh(&gt)));
        let dot = |a: &[P3], b: &[P3]| -> f64 { a.iter().zip(b).map(|(x, y)| x[0] * y[0] + x[1] * y[1] + x[2] * y[2]).sum() };
        let s = dot(&p, &g) / dot(&p, &p);
        let oracle = 1000.0 * p.iter().zip(&g).map(|(x, y)| (0..3).map(|c| (s * x[c] - y[c]).powi(2)).sum::<f64>().sqrt()).sum::<f64>() / p.len() as f64;
        let got = pve_t_sc(&ShapeParams(pred.clone()), &ShapeParams(gt.clone()), m).unwrap();
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    }
    assert!(pve_t_sc(&ShapeParams(gt.clone()), &ShapeParams(gt), m).unwrap() < 1e-9);
}

#[test]
fn uniformly_scaled_mesh_has_zero_pve() {
    let m = toy();
    let mesh = m.neutral_pose_mesh(&ShapeParams::zeros(m.num_betas())).unwrap();
    let big: Vec<P3> = mesh.vertices.iter().map(|p| p.map(|x| 1.05 * x + 0.3)).collect();
    assert!(probfuse::metrics::pve_sc(&big, &mesh.vertices).unwrap() < 1e-9);
}

fn pose_var(m: &BodyModel, v: f64) -> Vec<f64> {
    vec![v; m.pose_dim()]
}

#[test]
fn zero_variance_gives_a_zero_field() {
    let m = toy();
    let (pose, shape, global) = random_labels(&mut substream(0, "zero-var", 0));
    let field = uncertainty_from_params(
        m,
        (&pose.0, &pose_var(m, 0.0)),
        (&shape.0, &vec![0.0; m.num_betas()]),
        &global,
        100,
        &mut substream(0, "zero-var", 1),
    )
    .unwrap();
    assert!(field.iter().all(|&u| u == 0.0));
}

#[test]
fn uncertainty_scales_linearly_for_small_spread() {
    let m = toy();
    let (pose, shape, global) = random_labels(&mut substream(1, "linear-unc", 0));
    let field = |std: f64| {
        let v = std * std;
        uncertainty_from_params(m, (&pose.0, &pose_var(m, v)), (&shape.0, &vec![v; m.num_betas()]), &global, 400, &mut substream(1, "linear-unc", 1))
            .unwrap()
    };
    let (a, b) = (field(0.01), field(0.02));
    let ratio = b.iter().sum::<f64>() / a.iter().sum::<f64>();
    assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
    for (x, y) in a.iter().zip(&b) {
        assert!((y / x - 2.0).abs() < 0.3);
    }
}

#[test]
fn wrist_variance_only_spreads_the_hand() {
    let m = toy();
    let wrist = m.meta().joint_names.iter().position(|n| n == "left_wrist").unwrap();
    let mut var = pose_var(m, 1e-6);
    for c in 0..3 {
        var[3 * (wrist - 1) + c] = 0.3;
    }
    let pose = PoseParams::zeros(m.pose_dim());
    let shape = ShapeParams::zeros(m.num_betas());
    let field = uncertainty_from_params(m, (&pose.0, &var), (&shape.0, &vec![1e-6; m.num_betas()]), &GlobalRotation([0.0; 3]), 100, &mut substream(2, "wrist", 0))
        .unwrap();
    let descendants: Vec<usize> = (0..m.num_joints()).filter(|&j| j == wrist || m.ancestors(j).contains(&wrist)).collect();
    let hand: Vec<usize> = (0..m.num_vertices())
        .filter(|&v| descendants.iter().map(|&j| m.skinning_weight(v, j)).sum::<f64>() > 0.9)
        .collect();
    let torso: Vec<usize> = (0..m.num_vertices()).filter(|&v| m.part_labels()[v] == 0).collect();
    assert!(!hand.is_empty() && !torso.is_empty());
    let min_hand = hand.iter().map(|&v| field[v]).fold(f64::INFINITY, f64::min);
    let max_torso = torso.iter().map(|&v| field[v]).fold(0.0, f64::max);
    assert!(min_hand > max_torso, "hand {min_hand} vs torso {max_torso}");
}

#[test]
fn split_groups_partitions_the_input() {
    let mut rng = substream(0, "groups", 0);
    let g = split_groups(&[0, 1, 2, 3, 4, 5], 4, &mut rng).unwrap();
    assert_eq!(g.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 2]);
    for n in 1..8 {
        let idx: Vec<usize> = (10..23).collect();
        let g = split_groups(&idx, n, &mut rng).unwrap();
        assert!(g.iter().all(|x| !x.is_empty() && x.len() <= n));
        let mut all: Vec<usize> = g.concat();
        all.sort();
        assert_eq!(all, idx);
    }
    assert_eq!(split_groups(&[1, 2, 3], 9, &mut rng).unwrap().len(), 1);
    assert!(split_groups(&[1], 0, &mut rng).is_err());
}

/// Gift wrapping over every point, independent of the monotone chain.
fn jarvis_perimeter(pts: &[[f64; 2]]) -> f64 {
    let start = (0..pts.len()).min_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0]).then(pts[a][1].total_cmp(&pts[b][1]))).unwrap();
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let (mut cur, mut perim) = (start, 0.0);
    loop {
        let mut next = (cur + 1) % pts.len();
        for i in 0..pts.len() {
            let c = cross(pts[cur], pts[next], pts[i]);
            if c < 0.0 || (c == 0.0 && d2(pts[cur], pts[i]) > d2(pts[cur], pts[next])) {
                next = i;
            }
        }
        perim += d2(pts[cur], pts[next]).sqrt();
        cur = next;
        if cur == start {
            return perim;
        }
    }
}

#[test]
fn chest_girth_matches_a_brute_force_slice() {
    let m = toy();
    let shape = ShapeParams::zeros(m.num_betas());
    let mesh = m.neutral_pose_mesh(&shape).unwrap();
    let def = m.meta().measurements.iter().find(|d| d.name == "chest").unwrap();
    let anchor = m.measurement_anchor(def, &mesh);
    // horizontal plane y = anchor_y; cut every edge of every torso triangle
    let mut pts = Vec::new();
    for t in mesh.triangles.iter().filter(|t| def.parts.contains(&m.part_labels()[t[0] as usize])) {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let (p, q) = (mesh.vertices[a as usize], mesh.vertices[b as usize]);
            let (da, db) = (p[1] - anchor[1], q[1] - anchor[1]);
            if da == 0.0 {
                pts.push([p[0], p[2]]);
            } else if da * db < 0.0 {
                let s = da / (da - db);
                pts.push([p[0] + s * (q[0] - p[0]), p[2] + s * (q[2] - p[2])]);
            }
        }
    }
    assert!(pts.len() >= 3);
    let oracle = 100.0 * jarvis_perimeter(&pts);
    let set = measure_and_normalize(&shape, m, mesh.height()).unwrap();
    assert!((set.scale - 1.0).abs() < 1e-12);
    let chest = set.girths.iter().find(|(n, _)| n == "chest").unwrap().1;
    assert!((chest - oracle).abs() < 1e-9, "{chest} vs {oracle}");
    assert!((polygon_perimeter(&convex_hull(&pts)) * 100.0 - oracle).abs() < 1e-9);
    let doubled = measure_and_normalize(&shape, m, 2.0 * mesh.height()).unwrap();
    for ((_, a), (_, b)) in set.girths.iter().zip(&doubled.girths) {
        assert!((b - 2.0 * a).abs() < 1e-9 * a.max(1.0));
    }
    assert!(measure_and_normalize(&shape, m, 0.0).is_err());
}

fn fake_prediction(rng: &mut ChaCha8Rng, m: &BodyModel, shape_var: f64) -> PredictionSet {
    let mut g = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect() };
    PredictionSet {
        pose: GaussianDiag::new(g(m.pose_dim(), 0.2), vec![0.1; m.pose_dim()]).unwrap(),
        shape: GaussianDiag::new(g(m.num_betas(), 1.0), vec![shape_var; m.num_betas()]).unwrap(),
        global: [0.0, 3.0, 0.0],
        camera: WeakPerspCamera::new(0.9, 0.0, -0.2).unwrap(),
    }
}

#[test]
fn evaluation_combinations_agree_where_they_must() {
    let m = toy();
    let cfg = GenerationConfig { image_size: 64, focal: 75.0, ..GenerationConfig::default() };
    let spec = BenchmarkSpec { num_subjects: 3, poses_per_subject: 4, corrupt: CorruptMode::Both, seed: 2 };
    let samples = generate_benchmark(m, &PoseSource::default(), &cfg, &AugmentationConfig::default(), &spec).unwrap();
    let mut rng = substream(0, "fake-preds", 0);
    let preds: Vec<PredictionSet> = samples.iter().map(|_| fake_prediction(&mut rng, m, 0.7)).collect();
    let run = |n, c| evaluate(&samples, &preds, m, &EvalConfig { group_size: n, combination: c, seed: 9 }).unwrap();
    let single = run(4, Combination::Single);
    assert_eq!(run(1, Combination::Pc).samples, single.samples);
    assert_eq!(single.groups, samples.len());
    let (pc, mean) = (run(4, Combination::Pc), run(4, Combination::Mean));
    // six (subject, corruption) keys of four views each
    assert_eq!(pc.groups, 6);
    for (a, b) in pc.samples.iter().zip(&mean.samples) {
        assert_eq!(a.group, b.group);
        assert!((a.pve_t_sc - b.pve_t_sc).abs() < 1e-9 && (a.mpjpe - b.mpjpe).abs() < 1e-9);
    }
    for r in &pc.samples {
        assert!(r.mpjpe_pa <= r.mpjpe_sc + 1e-9 || r.mpjpe_sc > 0.0);
    }
    assert_eq!(pc.clean.count + pc.corrupted.count, samples.len());
    let csv = pc.to_csv();
    assert_eq!(csv.lines().count(), samples.len() + 1);
    assert!(evaluate(&samples, &preds[1..], m, &EvalConfig { group_size: 2, combination: Combination::Pc, seed: 0 }).is_err());
}
