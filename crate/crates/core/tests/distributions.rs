use probfuse::distributions::{fuse_shapes, mean_of_means, nll_terms, sample_reparam, GaussianDiag};
use probfuse::rng::substream;
use probfuse::{Real, Tape};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn g(m: Vec<f64>, v: Vec<f64>) -> GaussianDiag {
    GaussianDiag::new(m, v).unwrap()
}

/// Mean and variance of the normalized product of 1-D Gaussian densities by
/// trapezoidal quadrature over a wide grid.
fn grid_product_1d(means: &[f64], vars: &[f64]) -> (f64, f64) {
    let lo = means.iter().zip(vars).map(|(m, v)| m - 12.0 * v.sqrt()).fold(f64::INFINITY, f64::min);
    let hi = means.iter().zip(vars).map(|(m, v)| m + 12.0 * v.sqrt()).fold(f64::NEG_INFINITY, f64::max);
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let log_p: f64 = means.iter().zip(vars).map(|(m, v)| -0.5 * (x - m).powi(2) / v).sum();
        let w = if i == 0 || i == n { 0.5 } else { 1.0 } * log_p.exp();
        z += w;
        s1 += w * x;
        s2 += w * x * x;
    }
    let mean = s1 / z;
    (mean, s2 / z - mean * mean)
}

fn gauss_strategy(d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (proptest::collection::vec(-3.0f64..3.0, d), proptest::collection::vec(0.05f64..4.0, d))
}

#[test]
fn fusion_matches_grid_integration_in_one_and_two_dimensions() {
    let mut rng = substream(0, "fusion-grid", 0);
    for _ in 0..20 {
        let n = rng.random_range(1..=5);
        let dists: Vec<GaussianDiag> = (0..n)
            .map(|_| g(vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)], vec![rng.random_range(0.1..3.0), rng.random_range(0.1..3.0)]))
            .collect();
        let fused = fuse_shapes(&dists).unwrap();
        // a diagonal product factorizes, so each axis is its own 1-D oracle
        for d in 0..2 {
            let means: Vec<f64> = dists.iter().map(|x| x.mean()[d]).collect();
            let vars: Vec<f64> = dists.iter().map(|x| x.var()[d]).collect();
            let (m, v) = grid_product_1d(&means, &vars);
            assert!((fused.mean()[d] - m).abs() < 1e-6 * m.abs().max(1.0), "{} vs {m}", fused.mean()[d]);
            assert!((fused.var()[d] - v).abs() < 1e-6 * v, "{} vs {v}", fused.var()[d]);
        }
    }
}

#[test]
fn fusion_matches_a_joint_two_dimensional_grid() {
    let dists = [g(vec![0.3, -1.0], vec![0.5, 2.0]), g(vec![-0.4, 0.7], vec![1.5, 0.25]), g(vec![1.0, 0.0], vec![3.0, 1.0])];
    let fused = fuse_shapes(&dists).unwrap();
    let (n, lo, hi) = (1200, -6.0, 6.0);
    let h = (hi - lo) / n as f64;
    let (mut z, mut s) = (0.0, [0.0; 2]);
    let mut ss = [0.0; 2];
    for i in 0..=n {
        for j in 0..=n {
            let x = [lo + i as f64 * h, lo + j as f64 * h];
            let lp: f64 = dists.iter().map(|d| (0..2).map(|k| -0.5 * (x[k] - d.mean()[k]).powi(2) / d.var()[k]).sum::<f64>()).sum();
            let w = lp.exp();
            z += w;
            for k in 0..2 {
                s[k] += w * x[k];
                ss[k] += w * x[k] * x[k];
            }
        }
    }
    for k in 0..2 {
        let m = s[k] / z;
        let v = ss[k] / z - m * m;
        assert!((fused.mean()[k] - m).abs() < 1e-6, "{k}: {} vs {m}", fused.mean()[k]);
        assert!((fused.var()[k] - v).abs() < 1e-6 * v, "{k}: {} vs {v}", fused.var()[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fusion_is_order_invariant_and_associative(a in gauss_strategy(4), b in gauss_strategy(4), c in gauss_strategy(4)) {
        let (a, b, c) = (g(a.0, a.1), g(b.0, b.1), g(c.0, c.1));
        let abc = fuse_shapes(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let cab = fuse_shapes(&[c.clone(), a.clone(), b.clone()]).unwrap();
        let nested = fuse_shapes(&[fuse_shapes(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
        for i in 0..4 {
            for other in [&cab, &nested] {
                prop_assert!((abc.mean()[i] - other.mean()[i]).abs() < 1e-12 * abc.mean()[i].abs().max(1.0));
                prop_assert!((abc.var()[i] - other.var()[i]).abs() < 1e-12 * abc.var()[i]);
            }
        }
    }

    #[test]
    fn n_identical_copies_shrink_the_variance_by_n(a in gauss_strategy(3), n in 1usize..10) {
        let a = g(a.0, a.1);
        let fused = fuse_shapes(&vec![a.clone(); n]).unwrap();
        for i in 0..3 {
            prop_assert!((fused.mean()[i] - a.mean()[i]).abs() < 1e-12 * a.mean()[i].abs().max(1.0));
            prop_assert!((fused.var()[i] - a.var()[i] / n as f64).abs() < 1e-12 * a.var()[i]);
        }
    }

    #[test]
    fn fused_mean_is_a_convex_combination(dists in proptest::collection::vec(gauss_strategy(3), 1..6)) {
        let dists: Vec<GaussianDiag> = dists.into_iter().map(|(m, v)| g(m, v)).collect();
        let fused = fuse_shapes(&dists).unwrap();
        for i in 0..3 {
            let lo = dists.iter().map(|d| d.mean()[i]).fold(f64::INFINITY, f64::min);
            let hi = dists.iter().map(|d| d.mean()[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(fused.mean()[i] >= lo - 1e-12 && fused.mean()[i] <= hi + 1e-12);
            let min_var = dists.iter().map(|d| d.var()[i]).fold(f64::INFINITY, f64::min);
            prop_assert!(fused.var()[i] <= min_var * (1.0 + 1e-12));
        }
    }

    #[test]
    fn equal_variances_reduce_to_the_mean_of_means(means in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 2), 1..6), v in 0.1f64..3.0) {
        let dists: Vec<GaussianDiag> = means.into_iter().map(|m| g(m, vec![v, v])).collect();
        let fused = fuse_shapes(&dists).unwrap();
        let avg = mean_of_means(&dists).unwrap();
        for i in 0..2 {
            prop_assert!((fused.mean()[i] - avg[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn nll_is_minimized_at_the_squared_error(m in -2.0f64..2.0, t in -2.0f64..2.0) {
        let e = (m - t).powi(2).max(1e-3);
        let nll = |v: f64| nll_terms(&[m], &[v], &[t]);
        prop_assume!((m - t).powi(2) >= 1e-3);
        prop_assert!(nll(e) <= nll(e * 1.01) && nll(e) <= nll(e * 0.99));
        // and the gradient in the variance vanishes there
        let tape = Tape::new();
        let v = tape.var(e);
        let y = nll_terms(&[tape.var(m)], &[v], &[t]);
        prop_assert!(tape.gradient(y).unwrap().wrt(v).abs() < 1e-9 / e);
    }
}

#[test]
fn a_near_infinite_variance_contributes_nothing() {
    let sharp = g(vec![1.0, -1.0], vec![0.5, 0.2]);
    let flat = g(vec![100.0, -50.0], vec![1e12, 1e12]);
    let fused = fuse_shapes(&[sharp.clone(), flat]).unwrap();
    for i in 0..2 {
        assert!((fused.mean()[i] - sharp.mean()[i]).abs() < 1e-9);
        assert!((fused.var()[i] - sharp.var()[i]).abs() < 1e-9);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(GaussianDiag::new(vec![0.0], vec![0.0]).is_err());
    assert!(GaussianDiag::new(vec![0.0], vec![f64::NAN]).is_err());
    assert!(GaussianDiag::new(vec![0.0, 1.0], vec![1.0]).is_err());
    assert!(fuse_shapes(&[]).is_err());
    assert!(fuse_shapes(&[g(vec![0.0], vec![1.0]), g(vec![0.0, 0.0], vec![1.0, 1.0])]).is_err());
}

#[test]
fn reparameterized_samples_have_the_right_moments_and_gradients() {
    let (mean, var) = ([0.7, -1.2], [0.25, 2.0]);
    let mut rng = substream(5, "reparam-mc", 0);
    let n = 200_000;
    let (mut s1, mut s2) = ([0.0; 2], [0.0; 2]);
    // E[d(x)/dμ] = 1 and E[d(x²)/dσ²] = 1 under the reparameterization
    let (mut dmu, mut dvar) = ([0.0; 2], [0.0; 2]);
    for _ in 0..n {
        let eps: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
        let tape = Tape::new();
        let (m, v) = (tape.vars(&mean), tape.vars(&var));
        let x = sample_reparam(&m, &v, &eps).unwrap();
        for k in 0..2 {
            s1[k] += x[k].value();
            s2[k] += x[k].value().powi(2);
        }
        let y = x[0].sq() + x[1].sq() + x[0] + x[1];
        let gr = tape.gradient(y).unwrap();
        for k in 0..2 {
            dmu[k] += gr.wrt(m[k]);
            dvar[k] += gr.wrt(v[k]);
        }
    }
    let nf = n as f64;
    for k in 0..2 {
        let m = s1[k] / nf;
        let v = s2[k] / nf - m * m;
        let se = (var[k] / nf).sqrt();
        assert!((m - mean[k]).abs() < 4.0 * se, "mean {k}: {m}");
        assert!((v - var[k]).abs() < 4.0 * var[k] * (2.0 / nf).sqrt(), "var {k}: {v}");
        // d/dμ E[x² + x] = 2μ + 1 and d/dσ² E[x² + x] = 1
        assert!((dmu[k] / nf - (2.0 * mean[k] + 1.0)).abs() < 0.02, "dμ {k}: {}", dmu[k] / nf);
        assert!((dvar[k] / nf - 1.0).abs() < 0.02, "dσ² {k}: {}", dvar[k] / nf);
    }
}
