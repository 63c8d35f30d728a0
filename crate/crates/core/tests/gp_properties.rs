use lilo_core::gp::{FitConfig, Kernel, PosteriorModel};
use lilo_core::{Matrix, PairwiseGp, RegressionGp};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += ((a[i] - a[j]) * (b[i] - b[j])).signum();
        }
    }
    s / (n * (n - 1) / 2) as f64
}

/// Items in `[0,1]^2`, utility `-(x - c)²`, `n_pairs` random comparisons.
fn quadratic_problem(m: usize, n_pairs: usize, seed: u64) -> (Matrix, Vec<(usize, usize)>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = Matrix::from_fn(m, 2, |_, _| rng.random());
    let truth: Vec<f64> = (0..m).map(|i| -(items[(i, 0)] - 0.4).powi(2) - (items[(i, 1)] - 0.7).powi(2)).collect();
    let comps = (0..n_pairs)
        .map(|_| {
            let i = rng.random_range(0..m);
            let mut j = rng.random_range(0..m - 1);
            if j >= i {
                j += 1;
            }
            if truth[i] >= truth[j] {
                (i, j)
            } else {
                (j, i)
            }
        })
        .collect();
    (items, comps, truth)
}

#[test]
fn all_comparisons_on_a_line_give_the_exact_order() {
    let items = Matrix::from_fn(10, 1, |i, _| i as f64 / 9.0);
    let comps: Vec<(usize, usize)> = (0..10).flat_map(|i| ((i + 1)..10).map(move |j| (j, i))).collect();
    assert_eq!(comps.len(), 45);
    let gp = PairwiseGp::fit(&items, &comps, &FitConfig::default()).unwrap();
    let mean = gp.posterior(&items).unwrap().mean;
    let order: Vec<f64> = (0..10).map(|i| i as f64).collect();
    assert_eq!(kendall_tau(&mean, &order), 1.0);
}

#[test]
fn pairwise_recovers_ranking_of_twelve_points() {
    let (items, comps, truth) = quadratic_problem(12, 40, 2);
    let gp = PairwiseGp::fit(&items, &comps, &FitConfig::default()).unwrap();
    let mean = gp.posterior(&items).unwrap().mean;
    assert!(kendall_tau(&mean, &truth) >= 0.8);
}

#[test]
fn map_fit_improves_on_every_start() {
    let (items, comps, _) = quadratic_problem(10, 25, 5);
    let gp = PairwiseGp::fit(&items, &comps, &FitConfig::default()).unwrap();
    let d = gp.diagnostics().unwrap();
    for s in d.start_values.iter().flatten() {
        assert!(d.final_value <= *s + 1e-9);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Matrix::from_fn(15, 3, |_, _| rng.random());
    let u: Vec<f64> = (0..15).map(|i| x.row(i).iter().map(|v| v * v).sum()).collect();
    let reg = RegressionGp::fit(&x, &u, &FitConfig::default()).unwrap();
    let d = reg.diagnostics().unwrap();
    assert!(d.start_values.iter().flatten().all(|s| d.final_value <= *s + 1e-9));
}

#[test]
fn duplicated_comparison_sharpens_preference() {
    let items = Matrix::from_rows(&[[0.2, 0.2], [0.8, 0.6], [0.5, 0.9]]).unwrap();
    let kernel = Kernel::rbf_ard(vec![0.4, 0.4], 1.0).unwrap();
    let once = PairwiseGp::with_kernel(&items, &[(0, 1), (1, 2)], kernel.clone()).unwrap();
    let twice = PairwiseGp::with_kernel(&items, &[(0, 1), (0, 1), (1, 2)], kernel).unwrap();
    let gap = |gp: &PairwiseGp| {
        let m = gp.laplace_mode();
        m[0] - m[1]
    };
    assert!(gap(&twice) > gap(&once));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pairwise_invariant_to_item_order(seed in 0u64..1000) {
        let (items, comps, _) = quadratic_problem(7, 12, seed);
        let kernel = Kernel::rbf_ard(vec![0.35, 0.5], 1.3).unwrap();
        let gp = PairwiseGp::with_kernel(&items, &comps, kernel.clone()).unwrap();
        let perm = [3usize, 6, 0, 5, 1, 4, 2];
        let mut inv = [0usize; 7];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let items_p = items.select_rows(&perm);
        let comps_p: Vec<_> = comps.iter().map(|&(w, l)| (inv[w], inv[l])).collect();
        let gp_p = PairwiseGp::with_kernel(&items_p, &comps_p, kernel).unwrap();
        let q = Matrix::from_rows(&[[0.1, 0.9], [0.5, 0.5], [0.95, 0.05]]).unwrap();
        let (a, b) = (gp.posterior(&q).unwrap(), gp_p.posterior(&q).unwrap());
        for i in 0..3 {
            prop_assert!((a.mean[i] - b.mean[i]).abs() < 1e-7);
            prop_assert!((a.covariance[(i, i)] - b.covariance[(i, i)]).abs() < 1e-7);
        }
    }

    #[test]
    fn regression_invariant_to_row_order(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(6, 2, |_, _| rng.random());
        let u: Vec<f64> = (0..6).map(|_| rng.random()).collect();
        let k = Kernel::rbf_ard(vec![0.3, 0.7], 0.9).unwrap();
        let perm = [4usize, 1, 5, 0, 3, 2];
        let a = RegressionGp::with_hyperparameters(&x, &u, k.clone(), 1e-3).unwrap();
        let up: Vec<f64> = perm.iter().map(|&i| u[i]).collect();
        let b = RegressionGp::with_hyperparameters(&x.select_rows(&perm), &up, k, 1e-3).unwrap();
        let q = [0.3, 0.4];
        let (ma, va) = a.mean_var(&q).unwrap();
        let (mb, vb) = b.mean_var(&q).unwrap();
        prop_assert!((ma - mb).abs() < 1e-9 && (va - vb).abs() < 1e-9);
    }

    #[test]
    fn regression_ranking_survives_affine_targets(seed in 0u64..200, scale in 0.1f64..50.0, shift in -10.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(8, 2, |_, _| rng.random());
        let u: Vec<f64> = (0..8).map(|i| (4.0 * x[(i, 0)]).sin() + x[(i, 1)]).collect();
        let us: Vec<f64> = u.iter().map(|v| scale * v + shift).collect();
        let cfg = FitConfig::default().with_seed(seed);
        let a = RegressionGp::fit(&x, &u, &cfg).unwrap();
        let b = RegressionGp::fit(&x, &us, &cfg).unwrap();
        let q = Matrix::from_fn(10, 2, |_, _| rng.random());
        let ma = a.posterior(&q).unwrap().mean;
        let mb = b.posterior(&q).unwrap().mean;
        for i in 0..10 {
            prop_assert!((scale * ma[i] + shift - mb[i]).abs() < 1e-5 * scale.max(1.0));
        }
    }
}
