//! Covariance-path invariants: agreement of the direct, Woodbury-system,
//! and incremental-update routes, and drift control along update chains.

use bbem_core::data::Dataset;
use bbem_core::posterior::{
    build_posterior, expected_rss, update_posterior, PosteriorMoments, PrecisionDiag,
};
use bbem_core::rng::stream_rng;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn random_problem(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, &[0xBEEF]);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Dataset::new(x, y).unwrap()
}

fn oracle_v(ds: &Dataset, prec: &PrecisionDiag, weights: Option<&[f64]>) -> DMatrix<f64> {
    let p = ds.p();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..ds.n() {
        let wi = weights.map_or(1.0, |w| w[i]);
        for j in 0..p {
            for k in 0..p {
                a[(j, k)] += wi * ds.x[(i, j)] * ds.x[(i, k)];
            }
        }
    }
    for j in 0..p {
        a[(j, j)] += 1.0 / prec.d()[j];
    }
    a.try_inverse().unwrap()
}

fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn smw_direct_agreement_across_regimes() {
    let mut rng = stream_rng(99, &[0x10]);
    for trial in 0..60u64 {
        let (n, p) = match trial % 3 {
            0 => (rng.random_range(3..12), rng.random_range(12..30)), // n < p
            1 => {
                let k = rng.random_range(5..20);
                (k, k)
            }
            _ => (rng.random_range(12..40), rng.random_range(2..12)), // n > p
        };
        let ds = random_problem(n, p, 1000 + trial);
        let gamma: Vec<u8> = (0..p).map(|_| rng.random_range(0..=1) as u8).collect();
        let prec = PrecisionDiag::from_gamma(&gamma, 0.01, 100.0).unwrap();
        let post = build_posterior(&ds, &prec, None).unwrap();
        let oracle = oracle_v(&ds, &prec, None);
        assert!(
            rel_frob(&post.v, &oracle) <= 1e-8,
            "trial {} (n={}, p={}): {}",
            trial,
            n,
            p,
            rel_frob(&post.v, &oracle)
        );
    }
}

#[test]
fn woodbury_chain_stays_within_tolerance() {
    // 200 incremental updates with the budgeted rebuilds in effect
    let (n, p) = (50, 50);
    let ds = random_problem(n, p, 7);
    let mut rng = stream_rng(7, &[0x20]);
    let mut gamma: Vec<u8> = (0..p).map(|_| rng.random_range(0..=1) as u8).collect();
    let mut prec = PrecisionDiag::from_gamma(&gamma, 0.01, 100.0).unwrap();
    let mut post = build_posterior(&ds, &prec, None).unwrap();
    for step in 0..200 {
        let flips = rng.random_range(1..=3usize);
        let mut gamma_new = gamma.clone();
        for _ in 0..flips {
            let j = rng.random_range(0..p);
            gamma_new[j] ^= 1;
        }
        let prec_new = PrecisionDiag::from_gamma(&gamma_new, 0.01, 100.0).unwrap();
        post = update_posterior(&post, &prec.flips_to(&prec_new), &ds, &prec_new, None).unwrap();
        gamma = gamma_new;
        prec = prec_new;
        let fresh = build_posterior(&ds, &prec, None).unwrap();
        let err = rel_frob(&post.v, &fresh.v);
        assert!(err <= 1e-7, "step {}: drift {}", step, err);
    }
}

#[test]
fn v_stays_spd_and_symmetric_along_chain() {
    let ds = random_problem(20, 15, 3);
    let mut rng = stream_rng(3, &[0x30]);
    let mut gamma = vec![0u8; 15];
    let mut prec = PrecisionDiag::from_gamma(&gamma, 0.05, 80.0).unwrap();
    let mut post = build_posterior(&ds, &prec, None).unwrap();
    for _ in 0..60 {
        let j = rng.random_range(0..15);
        gamma[j] ^= 1;
        let prec_new = PrecisionDiag::from_gamma(&gamma, 0.05, 80.0).unwrap();
        post = update_posterior(&post, &prec.flips_to(&prec_new), &ds, &prec_new, None).unwrap();
        prec = prec_new;
        let sym_gap = (&post.v - post.v.transpose()).abs().max();
        assert!(sym_gap <= 1e-10 * post.v.abs().max());
        assert!(Cholesky::new(post.v.clone()).is_some());
    }
}

#[test]
fn expected_rss_nonnegative_and_classical_at_sigma_zero() {
    let mut rng = stream_rng(11, &[0x40]);
    for trial in 0..40u64 {
        let n = rng.random_range(4..25);
        let p = rng.random_range(1..10);
        let ds = random_problem(n, p, 500 + trial);
        let gamma: Vec<u8> = (0..p).map(|_| rng.random_range(0..=1) as u8).collect();
        let prec = PrecisionDiag::from_gamma(&gamma, 0.01, 100.0).unwrap();
        let post = build_posterior(&ds, &prec, None).unwrap();
        let sigma2 = rng.random_range(0.0..4.0);
        let erss = expected_rss(&ds, &post, sigma2, None);
        assert!(erss >= 0.0);
        let classical = expected_rss(&ds, &post, 0.0, None);
        let resid = &ds.y - &ds.x * &post.m;
        assert!((classical - resid.dot(&resid)).abs() <= 1e-10 * classical.max(1.0));
        assert!(erss >= classical - 1e-12);
    }
}

#[test]
fn weighted_chain_matches_weighted_rebuild() {
    let ds = random_problem(25, 30, 17);
    let mut rng = stream_rng(17, &[0x50]);
    let w: Vec<f64> = (0..25).map(|_| rng.random_range(0.1..3.0)).collect();
    let mut gamma: Vec<u8> = (0..30).map(|_| rng.random_range(0..=1) as u8).collect();
    let mut prec = PrecisionDiag::from_gamma(&gamma, 0.01, 100.0).unwrap();
    let mut post = build_posterior(&ds, &prec, Some(&w)).unwrap();
    for _ in 0..40 {
        let j = rng.random_range(0..30);
        gamma[j] ^= 1;
        let prec_new = PrecisionDiag::from_gamma(&gamma, 0.01, 100.0).unwrap();
        post =
            update_posterior(&post, &prec.flips_to(&prec_new), &ds, &prec_new, Some(&w)).unwrap();
        prec = prec_new;
    }
    let fresh = build_posterior(&ds, &prec, Some(&w)).unwrap();
    assert!(rel_frob(&post.v, &fresh.v) <= 1e-7);
    let m_gap = (&post.m - &fresh.m).abs().max() / fresh.m.abs().max().max(1e-12);
    assert!(m_gap <= 1e-6, "m drift {}", m_gap);
}

#[test]
fn moments_invariant_holds_after_every_operation() {
    // V must satisfy its defining equation within 1e-8 relative Frobenius
    fn check(ds: &Dataset, prec: &PrecisionDiag, post: &PosteriorMoments) {
        let oracle = oracle_v(ds, prec, None);
        assert!(rel_frob(&post.v, &oracle) <= 1e-8);
    }
    let ds = random_problem(18, 9, 23);
    let mut rng = stream_rng(23, &[0x60]);
    let mut gamma = vec![1u8; 9];
    let mut prec = PrecisionDiag::from_gamma(&gamma, 0.02, 90.0).unwrap();
    let mut post = build_posterior(&ds, &prec, None).unwrap();
    check(&ds, &prec, &post);
    for _ in 0..10 {
        let j = rng.random_range(0..9);
        gamma[j] ^= 1;
        let prec_new = PrecisionDiag::from_gamma(&gamma, 0.02, 90.0).unwrap();
        post = update_posterior(&post, &prec.flips_to(&prec_new), &ds, &prec_new, None).unwrap();
        prec = prec_new;
        check(&ds, &prec, &post);
    }
}
