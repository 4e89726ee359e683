//! Gaussian posterior moments of the regression coefficients given the
//! inclusion vector, noise variance, and optional observation weights.
//!
//! The unscaled covariance is V = (X' W X + D^{-1})^{-1} and the mean is
//! m = V X' W y, where D is the diagonal of per-coefficient prior variance
//! scales. Three computation paths are provided:
//!
//! * direct p x p factorization when p <= n,
//! * a Sherman-Morrison-Woodbury pass through an n x n system when p > n,
//! * a rank-l Woodbury refresh when only a few diagonal entries of D change
//!   between iterations, with a budgeted fallback to a full rebuild so
//!   floating-point drift cannot accumulate along long update chains.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Diagonal of per-coefficient prior variance scales: d_j = v1 when the
/// j-th variable is included, v0 otherwise. Its reciprocal enters the
/// posterior precision.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionDiag {
    d: Vec<f64>,
    v0: f64,
    v1: f64,
}

impl PrecisionDiag {
    pub fn from_gamma(gamma: &[u8], v0: f64, v1: f64) -> Result<Self> {
        if !(v0 > 0.0 && v1 > v0) {
            return Err(Error::InvalidParam(format!(
                "need v1 > v0 > 0, got v0={} v1={}",
                v0, v1
            )));
        }
        let d = gamma
            .iter()
            .map(|&g| if g == 1 { v1 } else { v0 })
            .collect();
        Ok(PrecisionDiag { d, v0, v1 })
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn v1(&self) -> f64 {
        self.v1
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// The flips needed to move from `self` to `other`.
    pub fn flips_to(&self, other: &PrecisionDiag) -> Vec<DiagFlip> {
        self.d
            .iter()
            .zip(other.d.iter())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(index, (&old_d, &new_d))| DiagFlip {
                index,
                old_d,
                new_d,
            })
            .collect()
    }
}

/// One changed diagonal entry: index plus old and new prior variance scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagFlip {
    pub index: usize,
    pub old_d: f64,
    pub new_d: f64,
}

/// Posterior mean and unscaled covariance of the coefficients. The actual
/// coefficient covariance is sigma^2 V.
#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    pub m: DVector<f64>,
    pub v: DMatrix<f64>,
    /// Flipped-index count accumulated since the last full factorization.
    pub flips_since_refactor: usize,
    /// Incremental updates applied since the last full factorization.
    updates_since_refactor: usize,
    /// Whether the most recent operation fell back to a full rebuild.
    rebuilt: bool,
}

impl PosteriorMoments {
    /// True when the last `update_posterior` call performed a full rebuild
    /// instead of an incremental refresh.
    pub fn was_rebuilt(&self) -> bool {
        self.rebuilt
    }
}

/// Flip budget before a full re-factorization is forced: cumulative flips
/// above min(n, p)/2, or 50 incremental updates, whichever comes first.
pub fn refresh_budget(n: usize, p: usize) -> usize {
    n.min(p) / 2
}

const MAX_UPDATES_BETWEEN_REBUILDS: usize = 50;

fn validate_weights(n: usize, weights: Option<&[f64]>) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} rows",
                w.len(),
                n
            )));
        }
        if w.iter().any(|&wi| !(wi > 0.0) || !wi.is_finite()) {
            return Err(Error::InvalidParam(
                "observation weights must be strictly positive".into(),
            ));
        }
    }
    Ok(())
}

/// X' diag(w) y, with w = 1 when absent.
pub(crate) fn weighted_xty(ds: &Dataset, weights: Option<&[f64]>) -> DVector<f64> {
    match weights {
        None => ds.x.tr_mul(&ds.y),
        Some(w) => {
            let wy = DVector::from_iterator(ds.n(), ds.y.iter().zip(w).map(|(yi, wi)| yi * wi));
            ds.x.tr_mul(&wy)
        }
    }
}

/// X' diag(w) X, with w = 1 when absent.
pub(crate) fn weighted_gram(ds: &Dataset, weights: Option<&[f64]>) -> DMatrix<f64> {
    match weights {
        None => ds.x.tr_mul(&ds.x),
        Some(w) => {
            let mut z = ds.x.clone();
            for (i, mut row) in z.row_iter_mut().enumerate() {
                row *= w[i].sqrt();
            }
            z.tr_mul(&z)
        }
    }
}

fn symmetrize(v: &mut DMatrix<f64>) {
    let p = v.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let avg = 0.5 * (v[(i, j)] + v[(j, i)]);
            v[(i, j)] = avg;
            v[(j, i)] = avg;
        }
    }
}

/// Compute the posterior moments from scratch. When p > n the inversion is
/// routed through an n x n Woodbury system; both paths agree to 1e-8.
pub fn build_posterior(
    ds: &Dataset,
    prec: &PrecisionDiag,
    weights: Option<&[f64]>,
) -> Result<PosteriorMoments> {
    let (n, p) = (ds.n(), ds.p());
    if prec.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "precision diagonal has {} entries for {} columns",
            prec.len(),
            p
        )));
    }
    validate_weights(n, weights)?;

    let xty = weighted_xty(ds, weights);
    let v = if p <= n {
        let mut a = weighted_gram(ds, weights);
        for j in 0..p {
            a[(j, j)] += 1.0 / prec.d[j];
        }
        let chol = Cholesky::new(a).ok_or_else(|| {
            Error::Factorization("posterior precision is not positive definite".into())
        })?;
        let mut v = chol.inverse();
        symmetrize(&mut v);
        v
    } else {
        // V = D - D Z' (I + Z D Z')^{-1} Z D with Z the sqrt(w)-scaled rows.
        let mut z = ds.x.clone();
        if let Some(w) = weights {
            for (i, mut row) in z.row_iter_mut().enumerate() {
                row *= w[i].sqrt();
            }
        }
        let mut b = z.clone(); // Z D
        for (j, mut col) in b.column_iter_mut().enumerate() {
            col *= prec.d[j];
        }
        let mut g = &b * z.transpose();
        for i in 0..n {
            g[(i, i)] += 1.0;
        }
        let chol = Cholesky::new(g).ok_or_else(|| {
            Error::Factorization("inner Woodbury system is not positive definite".into())
        })?;
        let c = chol.solve(&b);
        let mut v = b.tr_mul(&c);
        v.neg_mut();
        for j in 0..p {
            v[(j, j)] += prec.d[j];
        }
        symmetrize(&mut v);
        v
    };

    let m = &v * &xty;
    Ok(PosteriorMoments {
        m,
        v,
        flips_since_refactor: 0,
        updates_since_refactor: 0,
        rebuilt: true,
    })
}

/// Refresh the moments after a set of diagonal flips via a rank-l Woodbury
/// update. Falls back to [`build_posterior`] when the flip budget is
/// exhausted or the inner l x l system cannot be solved.
pub fn update_posterior(
    prev: &PosteriorMoments,
    flips: &[DiagFlip],
    ds: &Dataset,
    prec_new: &PrecisionDiag,
    weights: Option<&[f64]>,
) -> Result<PosteriorMoments> {
    if flips.is_empty() {
        return Ok(prev.clone());
    }
    let (n, p) = (ds.n(), ds.p());
    let l = flips.len();

    let over_budget = prev.flips_since_refactor + l > refresh_budget(n, p)
        || prev.updates_since_refactor + 1 > MAX_UPDATES_BETWEEN_REBUILDS;
    if over_budget {
        return build_posterior(ds, prec_new, weights);
    }

    // inner = A^{-1} + U' V U, where A holds the changes to D^{-1}.
    let mut vu = DMatrix::zeros(p, l);
    for (a, f) in flips.iter().enumerate() {
        vu.set_column(a, &prev.v.column(f.index));
    }
    let mut inner = DMatrix::zeros(l, l);
    for (a, fa) in flips.iter().enumerate() {
        for (b, fb) in flips.iter().enumerate() {
            inner[(a, b)] = prev.v[(fa.index, fb.index)];
        }
        let delta = 1.0 / fa.new_d - 1.0 / fa.old_d;
        if delta == 0.0 {
            return Err(Error::InvalidParam(format!(
                "flip at index {} does not change the diagonal",
                fa.index
            )));
        }
        inner[(a, a)] += 1.0 / delta;
    }

    let lu = inner.lu();
    let solved = lu.solve(&vu.transpose());
    let v_new = match solved {
        Some(s) => {
            let mut v = &prev.v - &vu * s;
            symmetrize(&mut v);
            v
        }
        None => {
            log::warn!("inner {l}x{l} Woodbury system singular; rebuilding posterior");
            return build_posterior(ds, prec_new, weights);
        }
    };
    if v_new.diagonal().iter().any(|&d| !(d > 0.0)) {
        log::warn!("incremental update lost positive definiteness; rebuilding posterior");
        return build_posterior(ds, prec_new, weights);
    }

    let xty = weighted_xty(ds, weights);
    let m = &v_new * &xty;
    Ok(PosteriorMoments {
        m,
        v: v_new,
        flips_since_refactor: prev.flips_since_refactor + l,
        updates_since_refactor: prev.updates_since_refactor + 1,
        rebuilt: false,
    })
}

/// Expected (weighted) residual sum of squares under the coefficient
/// posterior: sigma^2 tr(diag(w) X V X') + (y - Xm)' diag(w) (y - Xm).
/// The trace is accumulated row by row; the n x n product is never formed.
pub fn expected_rss(
    ds: &Dataset,
    moments: &PosteriorMoments,
    sigma2: f64,
    weights: Option<&[f64]>,
) -> f64 {
    let xv = &ds.x * &moments.v;
    let xm = &ds.x * &moments.m;
    let mut trace = 0.0;
    let mut rss = 0.0;
    for i in 0..ds.n() {
        let wi = weights.map_or(1.0, |w| w[i]);
        trace += wi * xv.row(i).dot(&ds.x.row(i));
        let r = ds.y[i] - xm[i];
        rss += wi * r * r;
    }
    sigma2 * trace + rss
}

/// Per-coefficient posterior second moments e_j = sigma^2 V_jj + m_j^2.
pub fn second_moments(moments: &PosteriorMoments, sigma2: f64) -> Vec<f64> {
    moments
        .m
        .iter()
        .zip(moments.v.diagonal().iter())
        .map(|(&mj, &vjj)| sigma2 * vjj + mj * mj)
        .collect()
}

/// Timing comparison of the rank-l incremental refresh against a full
/// rebuild on a seeded random problem.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct UpdateBench {
    pub n: usize,
    pub p: usize,
    pub flips: usize,
    pub trials: usize,
    pub median_build_ms: f64,
    pub median_update_ms: f64,
    pub speedup: f64,
    /// Largest relative Frobenius gap between the incremental and rebuilt
    /// covariance across trials.
    pub max_rel_error: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Time `trials` rank-`flips` refreshes against full rebuilds. `flips` must
/// stay within the refresh budget so the incremental path is actually
/// exercised.
pub fn bench_update(n: usize, p: usize, flips: usize, trials: usize, seed: u64) -> Result<UpdateBench> {
    use rand::Rng;
    use rand_distr::StandardNormal;

    if flips == 0 || flips > refresh_budget(n, p) {
        return Err(Error::InvalidParam(format!(
            "flips must lie in 1..={} for n={}, p={}",
            refresh_budget(n, p),
            n,
            p
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParam("need at least one trial".into()));
    }
    let mut rng = crate::rng::stream_rng(seed, &[crate::rng::streams::BENCH]);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let ds = Dataset::new(x, y)?;
    let gamma: Vec<u8> = (0..p).map(|_| rng.random_range(0..=1) as u8).collect();
    let prec = PrecisionDiag::from_gamma(&gamma, 0.01, 100.0)?;
    let base = build_posterior(&ds, &prec, None)?;

    let mut build_times = Vec::with_capacity(trials);
    let mut update_times = Vec::with_capacity(trials);
    let mut max_rel_error: f64 = 0.0;
    for _ in 0..trials {
        let mut flipped = std::collections::BTreeSet::new();
        while flipped.len() < flips {
            flipped.insert(rng.random_range(0..p));
        }
        let mut gamma_new = gamma.clone();
        for &j in &flipped {
            gamma_new[j] ^= 1;
        }
        let prec_new = PrecisionDiag::from_gamma(&gamma_new, 0.01, 100.0)?;
        let flip_set = prec.flips_to(&prec_new);

        let t0 = std::time::Instant::now();
        let updated = update_posterior(&base, &flip_set, &ds, &prec_new, None)?;
        update_times.push(t0.elapsed().as_secs_f64() * 1e3);

        let t1 = std::time::Instant::now();
        let rebuilt = build_posterior(&ds, &prec_new, None)?;
        build_times.push(t1.elapsed().as_secs_f64() * 1e3);

        let err = (&updated.v - &rebuilt.v).norm() / rebuilt.v.norm();
        max_rel_error = max_rel_error.max(err);
    }
    let median_build_ms = median(build_times);
    let median_update_ms = median(update_times);
    Ok(UpdateBench {
        n,
        p,
        flips,
        trials,
        median_build_ms,
        median_update_ms,
        speedup: median_build_ms / median_update_ms,
        max_rel_error,
    })
}
