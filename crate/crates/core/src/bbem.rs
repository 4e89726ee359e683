//! Bayesian-bootstrap ensemble of EM runs.
//!
//! Each replicate draws a subset of variables (weighted by marginal effect),
//! draws Dirichlet(1,...,1) observation weights, runs the EM algorithm on
//! the restricted, reweighted problem, and scatters the selected inclusion
//! vector back to full length. Selection frequencies are averaged across
//! replicates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Standardization};
use crate::em::{run_em, EmConfig, HyperParams};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};

/// How the Dirichlet observation weights are scaled before the weighted fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScale {
    /// Multiply by n so weights average 1; identity weights reproduce the
    /// unweighted fit exactly. The default.
    SumToN,
    /// Leave the raw simplex draw, summing to 1.
    SumToOne,
}

/// Ensemble controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of bootstrap replicates (K).
    pub replicates: usize,
    /// Variables drawn into each replicate (L).
    pub subset_size: usize,
    pub seed: u64,
    pub weight_scale: WeightScale,
    /// Test hook: replace Dirichlet draws with unit weights so a single
    /// full-subset replicate reproduces the plain EM fit exactly.
    pub unit_weights: bool,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, subset_size: usize, seed: u64) -> Self {
        BootstrapConfig {
            replicates,
            subset_size,
            seed,
            weight_scale: WeightScale::SumToN,
            unit_weights: false,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParam("need at least one replicate".into()));
        }
        if self.subset_size == 0 || self.subset_size > p {
            return Err(Error::InvalidParam(format!(
                "subset size must lie in 1..={}, got {}",
                p, self.subset_size
            )));
        }
        Ok(())
    }
}

/// Outcome of one bootstrap replicate, scattered back to length p.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub subset: Vec<usize>,
    pub gamma: Vec<u8>,
    pub m: Vec<f64>,
    pub converged: bool,
    /// True when the replicate's linear algebra failed; it then contributes
    /// an all-zero vote.
    pub failed: bool,
}

/// Aggregated ensemble output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleResult {
    /// Selection frequency per variable: fraction of replicates that
    /// included it.
    pub phi: Vec<f64>,
    /// Average posterior mean, zero-filled outside each replicate's subset.
    pub m_bar: Vec<f64>,
    pub replicates: Vec<ReplicateRecord>,
    pub failures: usize,
}

/// Variable weights proportional to |x_j'y| / x_j'x_j — the magnitude of the
/// univariate regression slope — normalized to sum to one.
pub fn marginal_weights(ds: &Dataset) -> Result<Vec<f64>> {
    let mut weights = Vec::with_capacity(ds.p());
    for j in 0..ds.p() {
        let col = ds.x.column(j);
        let denom = col.dot(&col);
        if denom <= 0.0 {
            return Err(Error::ZeroNormColumn(j));
        }
        weights.push((col.dot(&ds.y)).abs() / denom);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        // response orthogonal to every column; fall back to uniform
        let u = 1.0 / ds.p() as f64;
        return Ok(vec![u; ds.p()]);
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(weights)
}

/// One Dirichlet(1,...,1) draw of length n: normalized unit-rate
/// exponentials, strictly positive and summing to one.
pub fn draw_dirichlet_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1).max(f64::MIN_POSITIVE)).collect();
    let total: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
    w
}

/// Draw `l` distinct indices without replacement, proportional to `pi`,
/// renormalizing over the remaining indices after each draw. The returned
/// indices are sorted ascending.
pub fn sample_subset<R: Rng + ?Sized>(pi: &[f64], l: usize, rng: &mut R) -> Result<Vec<usize>> {
    let mut avail: Vec<(usize, f64)> = pi
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(j, &w)| (j, w))
        .collect();
    if avail.len() < l {
        return Err(Error::TooFewPositiveWeights {
            requested: l,
            available: avail.len(),
        });
    }
    let mut chosen = Vec::with_capacity(l);
    for _ in 0..l {
        let total: f64 = avail.iter().map(|(_, w)| w).sum();
        let mut u = rng.random_range(0.0..total);
        let mut pick = avail.len() - 1;
        for (pos, (_, w)) in avail.iter().enumerate() {
            if u < *w {
                pick = pos;
                break;
            }
            u -= w;
        }
        chosen.push(avail.remove(pick).0);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

fn replicate_weights<R: Rng + ?Sized>(n: usize, cfg: &BootstrapConfig, rng: &mut R) -> Vec<f64> {
    if cfg.unit_weights {
        return vec![1.0; n];
    }
    let mut w = draw_dirichlet_weights(n, rng);
    if cfg.weight_scale == WeightScale::SumToN {
        for v in w.iter_mut() {
            *v *= n as f64;
        }
    }
    w
}

/// Run the full ensemble. Replicate k draws from an RNG stream keyed by
/// `(seed, k)`, so results do not depend on execution order or thread count.
/// Linear-algebra failures inside a replicate are recorded as all-zero votes
/// rather than aborting the run.
pub fn run_bbem(
    ds: &Dataset,
    hp: &HyperParams,
    em_cfg: &EmConfig,
    cfg: &BootstrapConfig,
) -> Result<EnsembleResult> {
    hp.validate()?;
    em_cfg.validate()?;
    cfg.validate(ds.p())?;
    let (n, p) = (ds.n(), ds.p());
    let pi = marginal_weights(ds)?;
    let positive = pi.iter().filter(|&&w| w > 0.0).count();
    if positive < cfg.subset_size {
        return Err(Error::TooFewPositiveWeights {
            requested: cfg.subset_size,
            available: positive,
        });
    }

    let replicates: Vec<ReplicateRecord> = (0..cfg.replicates)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(cfg.seed, &[streams::REPLICATE, k as u64]);
            let subset = match sample_subset(&pi, cfg.subset_size, &mut rng) {
                Ok(s) => s,
                Err(_) => {
                    return ReplicateRecord {
                        subset: Vec::new(),
                        gamma: vec![0; p],
                        m: vec![0.0; p],
                        converged: false,
                        failed: true,
                    }
                }
            };
            let w = replicate_weights(n, cfg, &mut rng);
            let sub = ds.select_columns(&subset);
            match run_em(&sub, hp, em_cfg, Some(&w)) {
                Ok(fit) => {
                    let mut gamma = vec![0u8; p];
                    let mut m = vec![0.0; p];
                    for (local, &j) in subset.iter().enumerate() {
                        gamma[j] = fit.gamma[local];
                        m[j] = fit.m[local];
                    }
                    ReplicateRecord {
                        subset,
                        gamma,
                        m,
                        converged: fit.converged,
                        failed: false,
                    }
                }
                Err(err) => {
                    log::warn!("replicate {k} failed: {err}");
                    ReplicateRecord {
                        subset,
                        gamma: vec![0; p],
                        m: vec![0.0; p],
                        converged: false,
                        failed: true,
                    }
                }
            }
        })
        .collect();

    let k = cfg.replicates as f64;
    let mut phi = vec![0.0; p];
    let mut m_bar = vec![0.0; p];
    for rec in &replicates {
        for j in 0..p {
            phi[j] += rec.gamma[j] as f64;
            m_bar[j] += rec.m[j];
        }
    }
    for j in 0..p {
        phi[j] /= k;
        m_bar[j] /= k;
    }
    let failures = replicates.iter().filter(|r| r.failed).count();
    Ok(EnsembleResult {
        phi,
        m_bar,
        replicates,
        failures,
    })
}

impl EnsembleResult {
    /// Variables whose selection frequency reaches `threshold`.
    pub fn selected(&self, threshold: f64) -> Vec<u8> {
        self.phi.iter().map(|&f| u8::from(f >= threshold)).collect()
    }
}

/// Prediction with the element-wise product rule: X_new (m_bar ⊙ phi),
/// un-centering the response when standardization metadata is supplied.
/// `x_new` must already be on the training feature scale.
pub fn predict(
    x_new: &DMatrix<f64>,
    m_bar: &[f64],
    phi: &[f64],
    standardization: Option<&Standardization>,
) -> Result<DVector<f64>> {
    if m_bar.len() != x_new.ncols() || phi.len() != x_new.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "x_new has {} columns, m_bar {} and phi {}",
            x_new.ncols(),
            m_bar.len(),
            phi.len()
        )));
    }
    let coef = DVector::from_iterator(
        m_bar.len(),
        m_bar.iter().zip(phi).map(|(&m, &f)| m * f),
    );
    let mut pred = x_new * coef;
    if let Some(st) = standardization {
        for v in pred.iter_mut() {
            *v += st.y_mean;
        }
    }
    Ok(pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_correlated, gen_tibshirani};
    use crate::rng::stream_rng;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn marginal_weights_identity_design() {
        let x = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![2.0, -1.0]);
        let ds = Dataset::new(x, y).unwrap();
        let pi = marginal_weights(&ds).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn marginal_weights_orthogonal_response() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        // first column orthogonal to y
        let ds = Dataset::new(x, y).unwrap();
        let pi = marginal_weights(&ds).unwrap();
        assert_eq!(pi[0], 0.0);
        assert!((pi[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marginal_weights_match_slope_oracle() {
        // |x_j'y| / x_j'x_j is the magnitude of the univariate OLS slope
        let sim = gen_tibshirani(20, 1.0, 3).unwrap();
        let ds = &sim.dataset;
        let pi = marginal_weights(ds).unwrap();
        let mut slopes = Vec::new();
        for j in 0..ds.p() {
            let col = ds.x.column(j);
            slopes.push((col.dot(&ds.y) / col.dot(&col)).abs());
        }
        let total: f64 = slopes.iter().sum();
        for j in 0..ds.p() {
            assert!((pi[j] - slopes[j] / total).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_norm_column_is_error() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let ds = Dataset::new(x, y).unwrap();
        assert!(matches!(
            marginal_weights(&ds),
            Err(Error::ZeroNormColumn(1))
        ));
    }

    #[test]
    fn dirichlet_simplex_membership() {
        let mut rng = stream_rng(5, &[1]);
        assert_eq!(draw_dirichlet_weights(1, &mut rng), vec![1.0]);
        for _ in 0..50 {
            let w = draw_dirichlet_weights(7, &mut rng);
            let total: f64 = w.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn dirichlet_marginal_mean() {
        // Dirichlet(1,...,1) marginal mean is 1/n
        let mut rng = stream_rng(11, &[2]);
        let reps = 100_000;
        let mut acc = 0.0;
        for _ in 0..reps {
            acc += draw_dirichlet_weights(5, &mut rng)[0];
        }
        let mean = acc / reps as f64;
        assert!((mean - 0.2).abs() < 0.005, "mean {}", mean);
    }

    #[test]
    fn subset_full_draw_and_point_mass() {
        let mut rng = stream_rng(3, &[4]);
        let pi = vec![0.5, 0.2, 0.3];
        let all = sample_subset(&pi, 3, &mut rng).unwrap();
        assert_eq!(all, vec![0, 1, 2]);

        let point = vec![1.0, 0.0, 0.0];
        let got = sample_subset(&point, 1, &mut rng).unwrap();
        assert_eq!(got, vec![0]);

        assert!(sample_subset(&point, 2, &mut rng).is_err());
    }

    #[test]
    fn subset_frequency_matches_weights() {
        let pi = vec![0.7, 0.2, 0.1];
        let mut rng = stream_rng(17, &[6]);
        let reps = 100_000;
        let mut count0 = 0usize;
        for _ in 0..reps {
            if sample_subset(&pi, 1, &mut rng).unwrap()[0] == 0 {
                count0 += 1;
            }
        }
        let freq = count0 as f64 / reps as f64;
        assert!((freq - 0.7).abs() < 0.01, "freq {}", freq);
    }

    #[test]
    fn phi_is_pure_bookkeeping() {
        let sim = gen_correlated(30, 21).unwrap();
        let hp = HyperParams::with_v0(0.01);
        let cfg = BootstrapConfig::new(25, 10, 99);
        let res = run_bbem(&sim.dataset, &hp, &EmConfig::default(), &cfg).unwrap();
        for j in 0..sim.dataset.p() {
            let count = res
                .replicates
                .iter()
                .filter(|r| r.gamma[j] == 1)
                .count();
            assert_eq!(res.phi[j], count as f64 / 25.0);
        }
    }

    #[test]
    fn subset_discipline() {
        let sim = gen_correlated(25, 8).unwrap();
        let hp = HyperParams::with_v0(0.01);
        let cfg = BootstrapConfig::new(10, 7, 5);
        let res = run_bbem(&sim.dataset, &hp, &EmConfig::default(), &cfg).unwrap();
        for rec in &res.replicates {
            assert_eq!(rec.subset.len(), 7);
            for j in 0..sim.dataset.p() {
                if !rec.subset.contains(&j) {
                    assert_eq!(rec.gamma[j], 0);
                    assert_eq!(rec.m[j], 0.0);
                }
            }
        }
    }

    #[test]
    fn degenerate_ensemble_equals_plain_em() {
        // unit weights, full subset, one replicate
        let sim = gen_tibshirani(40, 2.0, 12).unwrap();
        let hp = HyperParams::with_v0(0.01);
        let em_cfg = EmConfig::default();
        let mut cfg = BootstrapConfig::new(1, sim.dataset.p(), 3);
        cfg.unit_weights = true;
        let ens = run_bbem(&sim.dataset, &hp, &em_cfg, &cfg).unwrap();
        let plain = run_em(&sim.dataset, &hp, &em_cfg, None).unwrap();
        let phi_as_gamma: Vec<u8> = ens.phi.iter().map(|&f| f as u8).collect();
        assert_eq!(phi_as_gamma, plain.gamma);
        assert_eq!(ens.m_bar, plain.m);
    }

    #[test]
    fn run_is_deterministic() {
        let sim = gen_correlated(30, 2).unwrap();
        let hp = HyperParams::with_v0(0.005);
        let cfg = BootstrapConfig::new(20, 15, 31);
        let a = run_bbem(&sim.dataset, &hp, &EmConfig::default(), &cfg).unwrap();
        let b = run_bbem(&sim.dataset, &hp, &EmConfig::default(), &cfg).unwrap();
        assert_eq!(a.phi, b.phi);
        assert_eq!(a.m_bar, b.m_bar);
    }

    #[test]
    fn predict_cases() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let got = predict(&x, &[3.0, 1.0], &[1.0, 0.5], None).unwrap();
        assert!((got[0] - 4.0).abs() < 1e-12);

        // phi all ones reduces to X m_bar
        let ones = predict(&x, &[3.0, 1.0], &[1.0, 1.0], None).unwrap();
        assert!((ones[0] - 5.0).abs() < 1e-12);

        // phi all zeros gives the response mean after un-centering
        let st = Standardization {
            x_mean: vec![0.0, 0.0],
            x_scale: vec![1.0, 1.0],
            y_mean: 7.5,
        };
        let zeros = predict(&x, &[3.0, 1.0], &[0.0, 0.0], Some(&st)).unwrap();
        assert!((zeros[0] - 7.5).abs() < 1e-12);
    }

    #[test]
    fn predict_dimension_mismatch() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(predict(&x, &[3.0], &[1.0, 0.5], None).is_err());
    }
}
