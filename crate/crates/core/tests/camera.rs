use probfuse::camera::{joints_to_heatmaps, pixel_of, rasterize_pixels, Mask, ProxyRepresentation, WeakPerspCamera, HEATMAP_SIGMA};
use probfuse::rng::substream;
use proptest::prelude::*;
use rand::Rng;

const SUB: i64 = 8;

/// Exact integer point-in-triangle on a 1/8-pixel lattice, scanning every
/// pixel and every triangle.
fn brute_force(verts: &[[i64; 2]], tris: &[[u32; 3]], w: usize, h: usize) -> Mask {
    let mut m = Mask::new(w, h);
    let cross = |o: [i64; 2], a: [i64; 2], b: [i64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    for y in 0..h {
        for x in 0..w {
            let p = [x as i64 * SUB, y as i64 * SUB];
            let hit = tris.iter().any(|t| {
                let [a, b, c] = t.map(|i| verts[i as usize]);
                let area = cross(a, b, c);
                if area == 0 {
                    return false;
                }
                let s = area.signum();
                [cross(a, b, p), cross(b, c, p), cross(c, a, p)].iter().all(|&e| e * s >= 0)
            });
            m.set(x, y, hit);
        }
    }
    m
}

fn random_mesh(seed: u64, w: usize, h: usize) -> (Vec<[i64; 2]>, Vec<[u32; 3]>) {
    let mut rng = substream(seed, "raster-mesh", 0);
    let margin = 6 * SUB;
    let verts: Vec<[i64; 2]> = (0..30)
        .map(|_| [rng.random_range(-margin..(w as i64 * SUB + margin)), rng.random_range(-margin..(h as i64 * SUB + margin))])
        .collect();
    let mut tris: Vec<[u32; 3]> = (0..20).map(|_| std::array::from_fn(|_| rng.random_range(0..30u32))).collect();
    tris.push([0, 0, 1]);
    tris.push([2, 3, 4]);
    (verts, tris)
}

fn to_pixels(verts: &[[i64; 2]]) -> Vec<[f64; 2]> {
    verts.iter().map(|v| [v[0] as f64 / SUB as f64, v[1] as f64 / SUB as f64]).collect()
}

#[test]
fn rasterizer_matches_brute_force_on_random_meshes() {
    for seed in 0..40 {
        let (w, h) = (37, 29);
        let (mut verts, tris) = random_mesh(seed, w, h);
        for v in verts.iter_mut().take(5).skip(2) {
            // exact pixel centers exercise the inclusive edges
            *v = [(v[0] / SUB) * SUB, (v[1] / SUB) * SUB];
        }
        let got = rasterize_pixels(&to_pixels(&verts), &tris, w, h);
        assert_eq!(got, brute_force(&verts, &tris, w, h), "seed {seed}");
    }
}

#[test]
fn coverage_ignores_winding_and_triangle_order() {
    for seed in 0..20 {
        let (verts, tris) = random_mesh(seed, 32, 32);
        let px = to_pixels(&verts);
        let base = rasterize_pixels(&px, &tris, 32, 32);
        let flipped: Vec<[u32; 3]> = tris.iter().rev().map(|t| [t[0], t[2], t[1]]).collect();
        assert_eq!(rasterize_pixels(&px, &flipped, 32, 32), base);
    }
}

#[test]
fn mask_bits_round_trip() {
    let (verts, tris) = random_mesh(3, 19, 13);
    let m = rasterize_pixels(&to_pixels(&verts), &tris, 19, 13);
    assert_eq!(Mask::from_bits(19, 13, &m.to_bits()).unwrap(), m);
    assert!(Mask::from_bits(19, 13, &[0u8; 3]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weak_projection_commutes_with_translation(
        pts in proptest::collection::vec(proptest::array::uniform3(-2.0f64..2.0), 1..20),
        s in 0.1f64..3.0,
        t in proptest::array::uniform3(-1.0f64..1.0),
        c in proptest::array::uniform2(-1.0f64..1.0),
    ) {
        let cam = WeakPerspCamera::new(s, c[0], c[1]).unwrap();
        let moved: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect();
        let shifted = WeakPerspCamera::new(s, c[0] + s * t[0], c[1] + s * t[1]).unwrap();
        for (a, b) in cam.project(&moved).iter().zip(shifted.project(&pts)) {
            prop_assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn heatmap_peaks_at_the_rounded_joint_pixel(x in -3.0f64..35.0, y in -3.0f64..27.0) {
        let (w, h) = (32, 24);
        let maps = joints_to_heatmaps(&[[x, y], [x, y]], &[true, false], w, h, HEATMAP_SIGMA).unwrap();
        let (first, second) = maps.split_at(w * h);
        prop_assert!(second.iter().all(|&v| v == 0.0));
        match pixel_of([x, y], w, h) {
            Some((px, py)) => {
                prop_assert_eq!(first[py * w + px], 1.0);
                prop_assert!(first.iter().all(|&v| v <= 1.0));
            }
            None => prop_assert!(first.iter().all(|&v| v == 0.0)),
        }
    }
}

#[test]
fn pooled_proxy_matches_dense_average() {
    let (verts, tris) = random_mesh(11, 32, 32);
    let sil = rasterize_pixels(&to_pixels(&verts), &tris, 32, 32);
    let joints = vec![[5.2, 7.7], [30.4, 2.0], [40.0, 3.0], [16.0, 16.0]];
    let proxy = ProxyRepresentation::new(sil.clone(), joints, vec![true, true, true, false]).unwrap();
    // out-of-frame joints become invisible
    assert_eq!(proxy.visible, vec![true, true, false, false]);
    let f = 4;
    let pooled = proxy.pooled(f).unwrap();
    let dense = proxy.heatmaps();
    let (pw, ph) = (8, 8);
    for ch in 0..proxy.channels() {
        for py in 0..ph {
            for px in 0..pw {
                let mut sum = 0.0;
                for y in py * f..(py + 1) * f {
                    for x in px * f..(px + 1) * f {
                        sum += if ch == 0 { sil.get(x, y) as u8 as f64 } else { dense[(ch - 1) * 1024 + y * 32 + x] };
                    }
                }
                let got = pooled[ch * pw * ph + py * pw + px] as f64;
                assert!((got - sum / 16.0).abs() < 1e-6, "channel {ch} at ({px}, {py})");
            }
        }
    }
    assert!(proxy.pooled(3).is_err());
}
