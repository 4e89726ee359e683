//! EM algorithm returning the MAP inclusion vector for sparse linear
//! regression under a continuous spike-and-slab prior.
//!
//! The coefficients are latent: each E-step computes their Gaussian
//! posterior moments, and the M-step updates the inclusion vector gamma by
//! thresholding posterior second moments at `r`, then the noise variance
//! and the inclusion probability in closed form. Iteration stops once gamma
//! is unchanged for `k0` consecutive iterations.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::posterior::{
    build_posterior, expected_rss, second_moments, update_posterior, weighted_gram, weighted_xty,
    PosteriorMoments, PrecisionDiag,
};

/// Prior configuration: spike/slab variance scales, Beta(a0, b0) prior on
/// the inclusion probability, and an inverse-gamma prior on the noise
/// variance with shape nu/2 and scale nu*lambda/2.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HyperParams {
    pub v0: f64,
    pub v1: f64,
    pub a0: f64,
    pub b0: f64,
    pub nu: f64,
    pub lambda: f64,
}

impl HyperParams {
    /// Noninformative defaults with the given spike variance scale:
    /// v1 = 100, a0 = b0 = 1.1, nu = lambda = 1.
    pub fn with_v0(v0: f64) -> Self {
        HyperParams {
            v0,
            v1: 100.0,
            a0: 1.1,
            b0: 1.1,
            nu: 1.0,
            lambda: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0 && self.v1 > self.v0) {
            return Err(Error::InvalidParam(format!(
                "v0 must be < v1 and both positive (v0={}, v1={})",
                self.v0, self.v1
            )));
        }
        for (name, value) in [
            ("a0", self.a0),
            ("b0", self.b0),
            ("nu", self.nu),
            ("lambda", self.lambda),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "{} must be positive, got {}",
                    name, value
                )));
            }
        }
        Ok(())
    }

    /// Same hyper-parameters with a different spike variance scale.
    pub fn at_v0(&self, v0: f64) -> Self {
        HyperParams { v0, ..*self }
    }
}

/// Starting point for the inclusion vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaInit {
    AllOnes,
    AllZeros,
    Explicit(Vec<u8>),
}

impl GammaInit {
    fn materialize(&self, p: usize) -> Result<Vec<u8>> {
        match self {
            GammaInit::AllOnes => Ok(vec![1; p]),
            GammaInit::AllZeros => Ok(vec![0; p]),
            GammaInit::Explicit(g) => {
                if g.len() != p {
                    return Err(Error::DimensionMismatch(format!(
                        "gamma_init has {} entries for p={}",
                        g.len(),
                        p
                    )));
                }
                if g.iter().any(|&v| v > 1) {
                    return Err(Error::InvalidParam("gamma_init entries must be 0/1".into()));
                }
                Ok(g.clone())
            }
        }
    }
}

/// Iteration controls and initial state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop once gamma is unchanged for this many consecutive iterations.
    pub k0: usize,
    pub theta_init: f64,
    pub sigma2_init: f64,
    pub gamma_init: GammaInit,
    /// Reserved for randomized initialization schemes; unused by the
    /// deterministic ones above.
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 100,
            k0: 3,
            theta_init: 0.5,
            sigma2_init: 1.0,
            gamma_init: GammaInit::AllOnes,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.k0 == 0 || self.k0 > self.max_iter {
            return Err(Error::InvalidParam(format!(
                "need 1 <= k0 <= max_iter, got k0={} max_iter={}",
                self.k0, self.max_iter
            )));
        }
        if !(self.theta_init > 0.0 && self.theta_init < 1.0) {
            return Err(Error::InvalidParam(format!(
                "theta_init must lie in (0,1), got {}",
                self.theta_init
            )));
        }
        if !(self.sigma2_init > 0.0) {
            return Err(Error::InvalidParam(format!(
                "sigma2_init must be positive, got {}",
                self.sigma2_init
            )));
        }
        Ok(())
    }
}

/// Current parameter block (gamma, sigma^2, theta).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmState {
    pub gamma: Vec<u8>,
    pub sigma2: f64,
    pub theta: f64,
    pub iter: usize,
}

/// One trace entry per iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterRecord {
    /// Number of gamma entries that changed this iteration.
    pub flips: usize,
    pub sigma2: f64,
    pub theta: f64,
    /// Observed-data log-posterior (up to an additive constant).
    pub log_post: f64,
    /// Whether the E-step fell back to a full posterior rebuild.
    pub rebuilt: bool,
}

/// Output of [`run_em`].
#[derive(Debug, Clone)]
pub struct EmResult {
    pub gamma: Vec<u8>,
    /// Posterior mean of the coefficients at exit.
    pub m: Vec<f64>,
    pub state: EmState,
    pub converged: bool,
    pub trace: Vec<IterRecord>,
}

/// Inclusion threshold r = sigma^2 (log(v1/v0) - 2 log(theta/(1-theta)))
/// / (1/v0 - 1/v1). May be negative, in which case every variable passes.
pub fn threshold_r(state: &EmState, hp: &HyperParams) -> f64 {
    let log_ratio = (hp.v1 / hp.v0).ln();
    let log_odds = (state.theta / (1.0 - state.theta)).ln();
    state.sigma2 * (log_ratio - 2.0 * log_odds) / (1.0 / hp.v0 - 1.0 / hp.v1)
}

/// gamma_j = 1 iff e2_j > r (strict); ties resolve to exclusion.
pub fn update_gamma(e2: &[f64], r: f64) -> Vec<u8> {
    e2.iter().map(|&e| u8::from(e > r)).collect()
}

/// Noise variance update: (E[rss] + sum_j e2_j / d_j + nu*lambda) / (n+p+nu),
/// with d taken at the freshly updated gamma.
pub fn update_sigma2(
    erss: f64,
    e2: &[f64],
    prec_new: &PrecisionDiag,
    n: usize,
    hp: &HyperParams,
) -> f64 {
    let p = e2.len() as f64;
    let scaled: f64 = e2.iter().zip(prec_new.d()).map(|(&e, &d)| e / d).sum();
    (erss + scaled + hp.nu * hp.lambda) / (n as f64 + p + hp.nu)
}

const THETA_EPS: f64 = 1e-12;

/// Inclusion probability update (sum gamma + a0 - 1) / (p + a0 + b0 - 2),
/// clamped into (0,1) only if user-supplied a0, b0 <= 1 push it outside.
pub fn update_theta(gamma: &[u8], hp: &HyperParams) -> f64 {
    let p = gamma.len() as f64;
    let s: f64 = gamma.iter().map(|&g| g as f64).sum();
    let theta = (s + hp.a0 - 1.0) / (p + hp.a0 + hp.b0 - 2.0);
    theta.clamp(THETA_EPS, 1.0 - THETA_EPS)
}

/// Cached quantities for evaluating the observed-data log-posterior within
/// a run without re-deriving data products each iteration.
struct LogPostCtx<'a> {
    ds: &'a Dataset,
    /// X' W X, cached when p <= n.
    gram: Option<DMatrix<f64>>,
    /// sqrt(w)-scaled design, cached when p > n.
    z: Option<DMatrix<f64>>,
    /// sqrt(w)-scaled response when p > n.
    y_scaled: Option<DVector<f64>>,
    xty: DVector<f64>,
    ywy: f64,
    sum_log_w: f64,
}

impl<'a> LogPostCtx<'a> {
    fn new(ds: &'a Dataset, weights: Option<&'a [f64]>) -> Self {
        let (n, p) = (ds.n(), ds.p());
        let xty = weighted_xty(ds, weights);
        let ywy = match weights {
            None => ds.y.dot(&ds.y),
            Some(w) => ds.y.iter().zip(w).map(|(yi, wi)| wi * yi * yi).sum(),
        };
        let sum_log_w = weights.map_or(0.0, |w| w.iter().map(|wi| wi.ln()).sum());
        if p <= n {
            LogPostCtx {
                ds,
                gram: Some(weighted_gram(ds, weights)),
                z: None,
                y_scaled: None,
                xty,
                ywy,
                sum_log_w,
            }
        } else {
            let mut z = ds.x.clone();
            let mut ys = ds.y.clone();
            if let Some(w) = weights {
                for (i, mut row) in z.row_iter_mut().enumerate() {
                    let s = w[i].sqrt();
                    row *= s;
                    ys[i] *= s;
                }
            }
            LogPostCtx {
                ds,
                gram: None,
                z: Some(z),
                y_scaled: Some(ys),
                xty,
                ywy,
                sum_log_w,
            }
        }
    }

    /// log det(X D X' + W^{-1}) and y'(X D X' + W^{-1})^{-1} y, computed
    /// from a fresh factorization at the given diagonal.
    fn marginal_parts(&self, d: &[f64]) -> Result<(f64, f64)> {
        let n = self.ds.n();
        if let Some(gram) = &self.gram {
            // det identity: det(X D X' + W^{-1}) = det(D) det(M) / det(W)
            // with M = X'WX + D^{-1}; quadratic form via y'Wy - xty' M^{-1} xty.
            let p = self.ds.p();
            let mut big_m = gram.clone();
            for j in 0..p {
                big_m[(j, j)] += 1.0 / d[j];
            }
            let chol = Cholesky::new(big_m).ok_or_else(|| {
                Error::Factorization("posterior precision not positive definite".into())
            })?;
            let log_det_m = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let sum_log_d: f64 = d.iter().map(|dj| dj.ln()).sum();
            let log_det = sum_log_d + log_det_m - self.sum_log_w;
            let sol = chol.solve(&self.xty);
            let quad = self.ywy - self.xty.dot(&sol);
            Ok((log_det, quad))
        } else {
            let z = self.z.as_ref().unwrap();
            let ys = self.y_scaled.as_ref().unwrap();
            let mut b = z.clone();
            for (j, mut col) in b.column_iter_mut().enumerate() {
                col *= d[j];
            }
            let mut g = &b * z.transpose();
            for i in 0..n {
                g[(i, i)] += 1.0;
            }
            let chol = Cholesky::new(g).ok_or_else(|| {
                Error::Factorization("marginal covariance not positive definite".into())
            })?;
            let log_det_g =
                2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let log_det = log_det_g - self.sum_log_w;
            let sol = chol.solve(ys);
            let quad = ys.dot(&sol);
            Ok((log_det, quad))
        }
    }

    fn log_posterior(&self, gamma: &[u8], sigma2: f64, theta: f64, hp: &HyperParams) -> Result<f64> {
        let n = self.ds.n() as f64;
        let p = gamma.len() as f64;
        let d: Vec<f64> = gamma
            .iter()
            .map(|&g| if g == 1 { hp.v1 } else { hp.v0 })
            .collect();
        let (log_det, quad) = self.marginal_parts(&d)?;
        let s: f64 = gamma.iter().map(|&g| g as f64).sum();
        let log_lik = -0.5 * n * (2.0 * std::f64::consts::PI * sigma2).ln()
            - 0.5 * log_det
            - quad / (2.0 * sigma2);
        let log_prior_gamma = s * theta.ln() + (p - s) * (1.0 - theta).ln();
        let log_prior_theta = (hp.a0 - 1.0) * theta.ln() + (hp.b0 - 1.0) * (1.0 - theta).ln();
        // inverse-gamma kernel parametrized so the sigma^2 M-step is its
        // exact conditional maximizer
        let log_prior_sigma2 = -0.5 * hp.nu * sigma2.ln() - hp.nu * hp.lambda / (2.0 * sigma2);
        Ok(log_lik + log_prior_gamma + log_prior_theta + log_prior_sigma2)
    }
}

/// Observed-data log-posterior of (gamma, sigma^2, theta) with the
/// coefficients integrated out, up to an additive constant. Computed from a
/// fresh factorization, independent of any incremental update chain.
pub fn log_posterior(
    ds: &Dataset,
    gamma: &[u8],
    sigma2: f64,
    theta: f64,
    hp: &HyperParams,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let ctx = LogPostCtx::new(ds, weights);
    ctx.log_posterior(gamma, sigma2, theta, hp)
}

/// Run the EM iteration to convergence or `max_iter`.
///
/// Per iteration: threshold the posterior second moments from the previous
/// E-step at `r` (using the previous sigma^2 and theta), update sigma^2 with
/// the new inclusion diagonal, update theta, then refresh the posterior
/// moments — incrementally when few entries flipped. Non-convergence is
/// reported through `converged`, not as an error.
pub fn run_em(
    ds: &Dataset,
    hp: &HyperParams,
    cfg: &EmConfig,
    weights: Option<&[f64]>,
) -> Result<EmResult> {
    hp.validate()?;
    cfg.validate()?;
    let (n, p) = (ds.n(), ds.p());
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} rows",
                w.len(),
                n
            )));
        }
    }

    let mut gamma = cfg.gamma_init.materialize(p)?;
    let mut sigma2 = cfg.sigma2_init;
    let mut theta = cfg.theta_init;
    let mut prec = PrecisionDiag::from_gamma(&gamma, hp.v0, hp.v1)?;
    let mut post = build_posterior(ds, &prec, weights)?;
    let mut e2 = second_moments(&post, sigma2);
    let mut erss = expected_rss(ds, &post, sigma2, weights);

    let ctx = LogPostCtx::new(ds, weights);
    let mut trace = Vec::new();
    let mut stable = 0usize;
    let mut converged = false;
    let mut iter = 0usize;

    for t in 1..=cfg.max_iter {
        iter = t;
        let state = EmState {
            gamma: gamma.clone(),
            sigma2,
            theta,
            iter: t - 1,
        };
        let r = threshold_r(&state, hp);
        let new_gamma = update_gamma(&e2, r);
        let prec_new = PrecisionDiag::from_gamma(&new_gamma, hp.v0, hp.v1)?;
        let flips = prec.flips_to(&prec_new);
        sigma2 = update_sigma2(erss, &e2, &prec_new, n, hp);
        theta = update_theta(&new_gamma, hp);

        post = update_posterior(&post, &flips, ds, &prec_new, weights)?;
        e2 = second_moments(&post, sigma2);
        erss = expected_rss(ds, &post, sigma2, weights);

        let log_post = ctx.log_posterior(&new_gamma, sigma2, theta, hp)?;
        trace.push(IterRecord {
            flips: flips.len(),
            sigma2,
            theta,
            log_post,
            rebuilt: post.was_rebuilt(),
        });

        gamma = new_gamma;
        prec = prec_new;

        if flips.is_empty() {
            stable += 1;
        } else {
            stable = 0;
        }
        if stable >= cfg.k0 - 1 && t >= cfg.k0 {
            converged = true;
            break;
        }
    }

    Ok(EmResult {
        gamma: gamma.clone(),
        m: post.m.as_slice().to_vec(),
        state: EmState {
            gamma,
            sigma2,
            theta,
            iter,
        },
        converged,
        trace,
    })
}

/// Posterior moments at a fixed state, exposed for callers that need the
/// covariance as well as the mean (e.g. diagnostics).
pub fn moments_at(
    ds: &Dataset,
    gamma: &[u8],
    hp: &HyperParams,
    weights: Option<&[f64]>,
) -> Result<PosteriorMoments> {
    let prec = PrecisionDiag::from_gamma(gamma, hp.v0, hp.v1)?;
    build_posterior(ds, &prec, weights)
}
