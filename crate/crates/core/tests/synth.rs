use probfuse::camera::{pixel_of, rasterize_silhouette, Mask};
use probfuse::rng::substream;
use probfuse::synth::{
    generate_benchmark, generate_sample, occlude_body_parts, read_dataset, sample_shape, training_sample, write_dataset,
    AugmentationConfig, BenchmarkSpec, CorruptMode, DatasetHeader, GenerationConfig, ImageHalf, PoseSource, SyntheticSample,
};
use probfuse::{generate_toy_model, BodyModel, ToyModelSpec};
use std::sync::OnceLock;

fn toy() -> &'static BodyModel {
    static M: OnceLock<BodyModel> = OnceLock::new();
    M.get_or_init(|| generate_toy_model(&ToyModelSpec { seed: 4, vertices: 300, joints: 24 }).unwrap())
}

/// Quarter-resolution frame keeps the statistical tests fast; the focal
/// length scales with it so bodies fill the same fraction.
fn small_cfg() -> GenerationConfig {
    GenerationConfig { image_size: 64, focal: 75.0, ..GenerationConfig::default() }
}

fn small_aug() -> AugmentationConfig {
    AugmentationConfig { occlusion_box_size: 12, joint_noise_range: 2.0, ..AugmentationConfig::default() }
}

fn stream(n: u64, aug: &AugmentationConfig) -> Vec<SyntheticSample> {
    (0..n).map(|i| training_sample(toy(), &PoseSource::default(), &small_cfg(), aug, 17, i).unwrap()).collect()
}

/// `|observed − p| ≤ 3·sqrt(p(1−p)/n)`.
fn within_3se(count: usize, n: usize, p: f64) -> bool {
    let obs = count as f64 / n as f64;
    (obs - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn samples_are_a_pure_function_of_seed_and_index() {
    let aug = small_aug();
    let a = training_sample(toy(), &PoseSource::default(), &small_cfg(), &aug, 3, 42).unwrap();
    let b = training_sample(toy(), &PoseSource::default(), &small_cfg(), &aug, 3, 42).unwrap();
    let c = training_sample(toy(), &PoseSource::default(), &small_cfg(), &aug, 3, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.pose, c.pose);
}

#[test]
fn augmentation_frequencies_match_their_probabilities() {
    let aug = small_aug();
    let samples = stream(10_000, &aug);
    let n = samples.len();
    let count = |f: &dyn Fn(&SyntheticSample) -> bool| samples.iter().filter(|s| f(s)).count();
    let part = count(&|s| s.augmentation.occluded_part.is_some());
    let half = count(&|s| s.augmentation.half_image.is_some());
    let boxed = count(&|s| s.augmentation.occlusion_box.is_some());
    assert!(within_3se(part, n, aug.body_part_occlusion_prob), "part occlusion {part}/{n}");
    assert!(within_3se(half, n, aug.half_image_occlusion_prob), "half image {half}/{n}");
    assert!(within_3se(boxed, n, aug.occlusion_box_prob), "box {boxed}/{n}");
    let pairs = toy().meta().lr_pairs.len();
    let swapped: usize = samples.iter().map(|s| s.augmentation.swapped_pairs.len()).sum();
    assert!(within_3se(swapped, n * pairs, aug.joint_lr_swap_prob), "swaps {swapped}/{}", n * pairs);
    let joints = toy().num_keypoints();
    let removed: usize = samples.iter().map(|s| s.augmentation.removed_joints.len()).sum();
    assert!(within_3se(removed, n * joints, aug.joint_removal_prob), "removals {removed}/{}", n * joints);
    // each half is equally likely
    for h in [ImageHalf::Top, ImageHalf::Bottom, ImageHalf::Left, ImageHalf::Right] {
        let k = count(&|s| s.augmentation.half_image == Some(h));
        assert!(within_3se(k, half, 0.25), "{h:?} {k}/{half}");
    }
}

/// Input joint index -> index of the clean target it was drawn from.
fn source_of(s: &SyntheticSample) -> Vec<usize> {
    let mut src: Vec<usize> = (0..s.target_joints.len()).collect();
    for &k in &s.augmentation.swapped_pairs {
        let [a, b] = toy().meta().lr_pairs[k];
        src.swap(a, b);
    }
    src
}

fn in_half(h: ImageHalf, x: usize, y: usize, size: usize) -> bool {
    match h {
        ImageHalf::Top => y < size / 2,
        ImageHalf::Bottom => y >= size / 2,
        ImageHalf::Left => x < size / 2,
        ImageHalf::Right => x >= size / 2,
    }
}

#[test]
fn visibility_heatmaps_and_joint_noise_are_consistent() {
    let aug = small_aug();
    let size = small_cfg().image_size;
    for s in stream(400, &aug) {
        let src = source_of(&s);
        let maps = s.proxy.heatmaps();
        for (i, (p, &vis)) in s.proxy.joints.iter().zip(s.visibility()).enumerate() {
            let t = s.target_joints[src[i]];
            assert!((p[0] - t[0]).abs() <= aug.joint_noise_range && (p[1] - t[1]).abs() <= aug.joint_noise_range);
            let channel = &maps[i * size * size..(i + 1) * size * size];
            assert_eq!(channel.iter().any(|&v| v > 0.0), vis, "heatmap and ω disagree for joint {i}");
            let removed = s.augmentation.removed_joints.contains(&i);
            let blocked = pixel_of(*p, size, size).map(|(x, y)| {
                s.augmentation.half_image.is_some_and(|h| in_half(h, x, y, size))
                    || s.augmentation.occlusion_box.is_some_and(|[bx, by]| {
                        (bx..bx + aug.occlusion_box_size).contains(&x) && (by..by + aug.occlusion_box_size).contains(&y)
                    })
            });
            match blocked {
                None => assert!(!vis, "out-of-frame joint {i} is visible"),
                Some(true) => assert!(!vis, "occluded joint {i} is visible"),
                Some(false) if removed => assert!(!vis, "removed joint {i} is visible"),
                // part occluders can also hide a joint
                Some(false) if s.augmentation.occluded_part.is_none() => assert!(vis, "free joint {i} is hidden"),
                Some(false) => {}
            }
        }
    }
}

#[test]
fn occluders_only_remove_silhouette_pixels() {
    let aug = AugmentationConfig { vertex_noise_range: 0.0, ..small_aug() };
    let m = toy();
    for s in stream(200, &aug) {
        let mesh = m.forward(&s.pose, &s.shape, &s.global).unwrap();
        let clean = rasterize_silhouette(&mesh.vertices, &mesh.triangles, &s.camera).unwrap();
        assert!(s.proxy.silhouette.data.iter().zip(&clean.data).all(|(&a, &c)| !a || c));
        if s.augmentation == Default::default() {
            assert_eq!(s.proxy.silhouette, clean);
        }
    }
}

#[test]
fn part_occluders_cover_exactly_their_parts() {
    let m = toy();
    let cfg = small_cfg();
    let all: Vec<u16> = (0..m.num_parts() as u16).collect();
    for i in 0..20 {
        let mut rng = substream(8, "part-cover", i);
        let s = generate_sample(m, &PoseSource::default(), &cfg, &AugmentationConfig::disabled(), &mut rng, false).unwrap();
        let mesh = m.forward(&s.pose, &s.shape, &s.global).unwrap();
        let pixels = s.camera.project(&mesh.vertices).unwrap();
        let clean = s.proxy.silhouette.clone();
        // every silhouette pixel belongs to some part's coverage
        let mut union = Mask::new(clean.width, clean.height);
        for &p in &all {
            let mut sil = clean.clone();
            let cover = occlude_body_parts(&mut sil, m, &pixels, &[p]);
            union.data.iter_mut().zip(&cover.data).for_each(|(u, c)| *u |= *c);
            for ((&before, &after), &c) in clean.data.iter().zip(&sil.data).zip(&cover.data) {
                assert!(!(before && !after) || c, "pixel cleared outside part {p}");
            }
        }
        assert_eq!(union, clean);
        let mut sil = clean.clone();
        occlude_body_parts(&mut sil, m, &pixels, &all);
        assert_eq!(sil.count(), 0);
        let mut sil = clean.clone();
        occlude_body_parts(&mut sil, m, &pixels, &[]);
        assert_eq!(sil, clean);
    }
}

#[test]
fn shape_prior_variance_is_close_to_the_configured_value() {
    let cfg = GenerationConfig::default();
    let mut rng = substream(0, "shape-var", 0);
    let draws: Vec<f64> = (0..10_000).flat_map(|_| sample_shape(&mut rng, &cfg, 10).0).collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((2.2..=2.3).contains(&var), "shape variance {var}");
    assert!(mean.abs() < 0.03, "shape mean {mean}");
}

#[test]
fn benchmark_pairs_share_labels_and_round_trip_through_disk() {
    let m = toy();
    let spec = BenchmarkSpec { num_subjects: 3, poses_per_subject: 4, corrupt: CorruptMode::Both, seed: 21 };
    let samples = generate_benchmark(m, &PoseSource::default(), &small_cfg(), &small_aug(), &spec).unwrap();
    assert_eq!(samples.len(), 24);
    for pair in samples.chunks(2) {
        let (clean, bad) = (&pair[0], &pair[1]);
        assert!(!clean.corrupted && bad.corrupted);
        assert_eq!((&clean.pose, &clean.shape, &clean.global), (&bad.pose, &bad.shape, &bad.global));
        assert_eq!((clean.camera, clean.subject, clean.view), (bad.camera, bad.subject, bad.view));
        assert_eq!(clean.target_joints, bad.target_joints);
    }
    let on = generate_benchmark(m, &PoseSource::default(), &small_cfg(), &small_aug(), &BenchmarkSpec { corrupt: CorruptMode::On, ..spec })
        .unwrap();
    let corrupted: Vec<&SyntheticSample> = samples.iter().filter(|s| s.corrupted).collect();
    assert_eq!(on.iter().collect::<Vec<_>>(), corrupted);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.pfd");
    let cfg = small_cfg();
    let header = DatasetHeader {
        seed: spec.seed,
        generation: cfg,
        augmentation: small_aug(),
        corrupt: spec.corrupt,
        num_subjects: spec.num_subjects,
        poses_per_subject: spec.poses_per_subject,
        width: cfg.image_size,
        height: cfg.image_size,
        num_keypoints: m.num_keypoints(),
        pose_dim: m.pose_dim(),
        num_betas: m.num_betas(),
        model_sha256: "toy".into(),
    };
    write_dataset(&path, &header, &samples).unwrap();
    let (h, back) = read_dataset(&path).unwrap();
    assert_eq!(h, header);
    assert_eq!(back, samples);
}

#[test]
fn vertex_noise_never_pushes_the_mesh_behind_the_camera() {
    // a camera that often lands right at the body
    let cfg = GenerationConfig { cam_translation_mean: [0.0, -0.2, 0.4], cam_translation_var: [0.01, 0.01, 0.04], ..small_cfg() };
    let aug = AugmentationConfig { vertex_noise_range: 0.05, ..small_aug() };
    let mut ok = 0;
    for i in 0..300 {
        match training_sample(toy(), &PoseSource::default(), &cfg, &aug, 5, i) {
            Ok(s) => {
                let mesh = toy().forward(&s.pose, &s.shape, &s.global).unwrap();
                assert!(mesh.vertices.iter().all(|v| v[2] + s.camera.translation[2] >= 0.05 + 0.05));
                ok += 1;
            }
            Err(e) => assert!(matches!(e, probfuse::Error::Generation { .. }), "{e}"),
        }
    }
    assert!(ok > 100, "only {ok} samples generated");
}
