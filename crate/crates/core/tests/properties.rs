use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sparse_hinf::ellipsoid::{membership, sample_boundary, schur_constraint, EllipsoidRegion};
use sparse_hinf::experiments::sigma_d;
use sparse_hinf::greedy::{apply_update, candidate_is_pd, RankTwoUpdate};
use sparse_hinf::io;
use sparse_hinf::l1::{stopping_ratio, truncate, update_weights, StopNorm};
use sparse_hinf::linalg::{lambda_min, spectral_norm, symmetrize};
use sparse_hinf::lti::{hinf_norm, hinf_norm_grid, log_grid, ClosedLoopSystem, FeedbackGain};

fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = normal(rng, d, d);
    symmetrize(&(&a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.2))
}

fn region(seed: u64, m: usize, n: usize) -> EllipsoidRegion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EllipsoidRegion::new(normal(&mut rng, m, n), spd(&mut rng, n), spd(&mut rng, m), 1.0)
        .unwrap()
        .allowing_theta_above_one(true)
}

/// Gain `F_o + s R^{1/2} U Z^{-1/2}` with `sigma_max(U) = 1`, so it lies on
/// the boundary of the region shrunk by `s^2`.
fn gain_at(reg: &EllipsoidRegion, seed: u64, s: f64) -> FeedbackGain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let u = normal(&mut rng, reg.m(), reg.n());
    let u = &u / spectral_norm(&u);
    sample_boundary(reg, s * s, &u).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shrinking_nests_regions(seed in any::<u64>(), m in 1usize..5, n in 1usize..5,
                               s in 0.05f64..1.0, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let reg = region(seed, m, n);
        let f = gain_at(&reg, seed, s);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        if membership(&reg, &f, lo, 0.0).unwrap() {
            prop_assert!(membership(&reg, &f, hi, 0.0).unwrap());
        }
        prop_assert!(membership(&reg, &f, s * s * 1.01, 0.0).unwrap());
        prop_assert!(!membership(&reg, &f, s * s * 0.99, 0.0).unwrap());
    }

    #[test]
    fn schur_form_agrees_with_membership(seed in any::<u64>(), m in 1usize..5, n in 1usize..5,
                                         s in 0.05f64..2.0, theta in 0.05f64..1.0) {
        let reg = region(seed, m, n);
        let f = gain_at(&reg, seed, s);
        let slack = reg.slack_min_eig(&f, theta).unwrap();
        let schur = lambda_min(&schur_constraint(&reg, &f, theta).unwrap());
        prop_assume!(slack.abs() > 1e-6);
        prop_assert_eq!(slack > 0.0, schur > 0.0);
    }

    #[test]
    fn woodbury_matches_dense_inverse(seed in any::<u64>(), m in 1usize..6, n in 1usize..6, scale in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = spd(&mut rng, m + n);
        let einv = e.clone().try_inverse().unwrap();
        let (i, j) = (rng.gen_range(0..m), rng.gen_range(0..n));
        let upd = RankTwoUpdate::new(i, j, scale * rng.sample::<f64, _>(StandardNormal), m, n).unwrap();
        prop_assume!(upd.value != 0.0);
        let updated = &e + upd.dense_delta(m + n);
        let pd = lambda_min(&updated) > 0.0;
        prop_assume!(lambda_min(&updated).abs() > 1e-8);
        prop_assert_eq!(candidate_is_pd(&einv, &upd), pd);
        if pd {
            let direct = updated.try_inverse().unwrap();
            let fast = apply_update(&einv, &upd).unwrap();
            prop_assert!((&fast - &direct).norm() <= 1e-8 * direct.norm());
        }
    }

    #[test]
    fn truncation_stays_inside(seed in any::<u64>(), m in 1usize..5, n in 1usize..5,
                               s in 0.1f64..0.99, threshold in 0.0f64..1.0) {
        let reg = region(seed, m, n);
        let f = gain_at(&reg, seed, s);
        let (g, restored) = truncate(&f, threshold, &reg, 1.0, 1e-10).unwrap();
        prop_assert!(membership(&reg, &g, 1.0, 1e-10).unwrap());
        for (a, b) in g.0.iter().zip(f.0.iter()) {
            prop_assert!(*a == *b || (*a == 0.0 && b.abs() < threshold));
        }
        prop_assert!(restored <= f.0.iter().filter(|x| x.abs() < threshold && **x != 0.0).count());
    }

    #[test]
    fn weights_and_stopping_ratio(seed in any::<u64>(), m in 1usize..5, n in 1usize..5, zeta in 1e-4f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = FeedbackGain(normal(&mut rng, m, n));
        let w = update_weights(&f, zeta);
        prop_assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0 / zeta));
        for norm in [StopNorm::Spectral, StopNorm::Frobenius] {
            prop_assert_eq!(stopping_ratio(&f, &f, norm), 0.0);
            let g = FeedbackGain(&f.0 * 2.0);
            prop_assert!((stopping_ratio(&g, &f, norm) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_never_exceeds_bisection(seed in any::<u64>(), n in 1usize..6, p in 1usize..4, q in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = normal(&mut rng, n, n);
        let shift = a.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let a = a - DMatrix::identity(n, n) * (shift + 0.1);
        let cl = ClosedLoopSystem::new(a, normal(&mut rng, n, q), normal(&mut rng, p, n), normal(&mut rng, p, q)).unwrap();
        let h = hinf_norm(&cl, 1e-9).unwrap().value;
        let g = hinf_norm_grid(&cl, &log_grid(1e-3, 1e3, 400));
        prop_assert!(g <= h * (1.0 + 1e-9));

        let t = DMatrix::identity(n, n) + normal(&mut rng, n, n) * 0.1;
        prop_assume!(t.clone().try_inverse().is_some());
        let ht = hinf_norm(&cl.similarity(&t).unwrap(), 1e-9).unwrap().value;
        prop_assert!((ht - h).abs() <= 1e-6 * h);
    }

    #[test]
    fn density_is_a_percentage(nnz in 1usize..500, extra in 0usize..500) {
        let d = sigma_d(nnz, nnz + extra);
        prop_assert!(d > 0.0 && d <= 100.0);
    }

    #[test]
    fn matrix_text_round_trips(seed in any::<u64>(), r in 1usize..6, c in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = normal(&mut rng, r, c);
        prop_assert_eq!(&io::parse_matrix_json(&io::matrix_to_json(&m)).unwrap(), &m);
        prop_assert_eq!(&io::parse_matrix_csv(&io::matrix_to_csv(&m)).unwrap(), &m);
    }
}
