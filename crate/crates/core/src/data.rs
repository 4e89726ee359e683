//! Dataset loading, standardization, and synthetic regression designs.
//!
//! Three generators cover the benchmark designs used by the experiment
//! harness: an 8-variable autoregressive design, a 40-variable grouped
//! design with within-group correlation 0.9, and a large-p design with
//! autoregressive correlation 0.6. All generators are pure functions of
//! their arguments, including the seed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};

/// Per-column transforms recorded when a dataset is standardized, sufficient
/// to undo the transform or to apply it to new rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardization {
    /// Mean of each original feature column.
    pub x_mean: Vec<f64>,
    /// Sample standard deviation (ddof = 1) of each original feature column.
    pub x_scale: Vec<f64>,
    /// Mean of the original response.
    pub y_mean: f64,
}

impl Standardization {
    /// Apply the recorded feature transform to new rows (training scale).
    pub fn transform_features(&self, x_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_raw.ncols() != self.x_mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} columns, got {}",
                self.x_mean.len(),
                x_raw.ncols()
            )));
        }
        let mut out = x_raw.clone();
        for j in 0..out.ncols() {
            let mu = self.x_mean[j];
            let s = self.x_scale[j];
            for v in out.column_mut(j).iter_mut() {
                *v = (*v - mu) / s;
            }
        }
        Ok(out)
    }
}

/// A regression problem: response `y` and design matrix `x` with `n` rows
/// and `p` feature columns.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Option<Vec<String>>,
    pub standardization: Option<Standardization>,
}

impl Dataset {
    /// Build a dataset from raw parts, rejecting empty or non-finite input.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidParam("empty design matrix".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "y has {} entries but x has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("non-finite entry in data".into()));
        }
        Ok(Dataset {
            x,
            y,
            column_names: None,
            standardization: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    fn column_name(&self, j: usize) -> String {
        match &self.column_names {
            Some(names) => names[j].clone(),
            None => format!("x{}", j + 1),
        }
    }

    /// Center and scale every feature column to sample standard deviation 1
    /// (ddof = 1) and center the response, recording the transforms.
    /// Constant columns are an error.
    pub fn standardize(mut self) -> Result<Self> {
        let n = self.n();
        if n < 2 {
            return Err(Error::InvalidParam(
                "standardization needs at least 2 rows".into(),
            ));
        }
        let mut x_mean = Vec::with_capacity(self.p());
        let mut x_scale = Vec::with_capacity(self.p());
        for j in 0..self.p() {
            let col = self.x.column(j);
            let mu = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mu) * (v - mu)).sum();
            let sd = (ss / (n as f64 - 1.0)).sqrt();
            if sd <= 0.0 || !sd.is_finite() {
                return Err(Error::ConstantColumn(self.column_name(j)));
            }
            x_mean.push(mu);
            x_scale.push(sd);
        }
        for j in 0..self.p() {
            let mu = x_mean[j];
            let s = x_scale[j];
            for v in self.x.column_mut(j).iter_mut() {
                *v = (*v - mu) / s;
            }
        }
        let y_mean = self.y.sum() / n as f64;
        for v in self.y.iter_mut() {
            *v -= y_mean;
        }
        self.standardization = Some(Standardization {
            x_mean,
            x_scale,
            y_mean,
        });
        Ok(self)
    }

    /// Undo [`standardize`](Self::standardize), restoring the original scale.
    pub fn unstandardize(mut self) -> Self {
        if let Some(st) = self.standardization.take() {
            for j in 0..self.p() {
                let mu = st.x_mean[j];
                let s = st.x_scale[j];
                for v in self.x.column_mut(j).iter_mut() {
                    *v = *v * s + mu;
                }
            }
            for v in self.y.iter_mut() {
                *v += st.y_mean;
            }
        }
        self
    }

    /// Dataset restricted to the given feature columns (same response).
    pub fn select_columns(&self, idx: &[usize]) -> Dataset {
        let x = self.x.select_columns(idx.iter());
        let column_names = self
            .column_names
            .as_ref()
            .map(|names| idx.iter().map(|&j| names[j].clone()).collect());
        let standardization = self.standardization.as_ref().map(|st| Standardization {
            x_mean: idx.iter().map(|&j| st.x_mean[j]).collect(),
            x_scale: idx.iter().map(|&j| st.x_scale[j]).collect(),
            y_mean: st.y_mean,
        });
        Dataset {
            x,
            y: self.y.clone(),
            column_names,
            standardization,
        }
    }

    /// Rows of the dataset at `idx`, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let x = self.x.select_rows(idx.iter());
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        Dataset {
            x,
            y,
            column_names: self.column_names.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// Write the dataset as a CSV with header and a trailing `y` column,
    /// mirroring the format accepted by [`load_csv`].
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let wrap = |e: std::io::Error| Error::Io {
            path: "<writer>".into(),
            source: e,
        };
        let mut header: Vec<String> = (0..self.p()).map(|j| self.column_name(j)).collect();
        header.push("y".into());
        writeln!(out, "{}", header.join(",")).map_err(wrap)?;
        for i in 0..self.n() {
            let mut cells: Vec<String> = (0..self.p()).map(|j| self.x[(i, j)].to_string()).collect();
            cells.push(self.y[i].to_string());
            writeln!(out, "{}", cells.join(",")).map_err(wrap)?;
        }
        Ok(())
    }
}

/// Load a delimiter-separated file with a header row. The `response` column
/// (by name, or 0-based index if no name matches) becomes `y`; all remaining
/// columns must be numeric and become features.
pub fn load_csv<P: AsRef<Path>>(path: P, response: &str, standardize: bool) -> Result<Dataset> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: path_str.clone(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => Error::Csv(e.to_string()),
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.to_string())
        .collect();

    let response_idx = match headers.iter().position(|h| h == response) {
        Some(i) => i,
        None => match response.parse::<usize>() {
            Ok(i) if i < headers.len() => i,
            _ => return Err(Error::ResponseMissing(response.to_string())),
        },
    };

    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != response_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(Error::Csv(format!(
                "row {} has {} fields, expected {}",
                row_idx + 1,
                record.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (col_idx, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                column: headers[col_idx].clone(),
                row: row_idx + 1,
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonNumeric {
                    column: headers[col_idx].clone(),
                    row: row_idx + 1,
                    value: cell.to_string(),
                });
            }
            if col_idx == response_idx {
                ys.push(value);
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }

    let n = rows.len();
    let p = rows[0].len();
    if p == 0 {
        return Err(Error::Csv("no feature columns".into()));
    }
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let y = DVector::from_vec(ys);
    let mut ds = Dataset::new(x, y)?;
    ds.column_names = Some(feature_names);
    if standardize {
        ds = ds.standardize()?;
    }
    Ok(ds)
}

/// Which synthetic design to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Tibshirani,
    Correlated,
    LargeP,
}

impl std::fmt::Display for DesignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DesignKind::Tibshirani => "tibshirani",
            DesignKind::Correlated => "correlated",
            DesignKind::LargeP => "large_p",
        };
        f.write_str(s)
    }
}

/// Fully specified synthetic experiment design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimDesign {
    pub kind: DesignKind,
    pub n: usize,
    pub p: usize,
    /// Noise standard deviation.
    pub sigma: f64,
    pub seed: u64,
}

impl SimDesign {
    pub fn tibshirani(n: usize, sigma: f64, seed: u64) -> Self {
        SimDesign {
            kind: DesignKind::Tibshirani,
            n,
            p: 8,
            sigma,
            seed,
        }
    }

    /// The grouped design fixes p=40 and sigma=6.
    pub fn correlated(n: usize, seed: u64) -> Self {
        SimDesign {
            kind: DesignKind::Correlated,
            n,
            p: 40,
            sigma: 6.0,
            seed,
        }
    }

    /// The large-p design; noise variance is 3, so sigma = sqrt(3).
    pub fn large_p(n: usize, p: Option<usize>, seed: u64) -> Self {
        SimDesign {
            kind: DesignKind::LargeP,
            n,
            p: p.unwrap_or(1000),
            sigma: 3f64.sqrt(),
            seed,
        }
    }
}

/// True coefficients and inclusion indicators behind a synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta: Vec<f64>,
    pub gamma: Vec<u8>,
}

impl GroundTruth {
    fn from_beta(beta: Vec<f64>) -> Self {
        let gamma = beta.iter().map(|&b| u8::from(b != 0.0)).collect();
        GroundTruth { beta, gamma }
    }

    /// Indices of the nonzero coefficients.
    pub fn signal_indices(&self) -> Vec<usize> {
        self.gamma
            .iter()
            .enumerate()
            .filter(|(_, &g)| g == 1)
            .map(|(j, _)| j)
            .collect()
    }
}

/// A generated dataset together with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParam(format!("n must be >= 2, got {}", n)));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParam(format!(
            "sigma must be positive, got {}",
            sigma
        )));
    }
    Ok(())
}

/// Fill a row with an AR(1) Gaussian: x_j = rho x_{j-1} + sqrt(1-rho^2) z_j.
/// Each marginal is standard normal and corr(x_i, x_j) = rho^{|i-j|} exactly.
fn ar1_row<R: Rng>(rng: &mut R, rho: f64, out: &mut [f64]) {
    let scale = (1.0 - rho * rho).sqrt();
    let mut prev: f64 = rng.sample(StandardNormal);
    out[0] = prev;
    for v in out.iter_mut().skip(1) {
        let z: f64 = rng.sample(StandardNormal);
        prev = rho * prev + scale * z;
        *v = prev;
    }
}

fn respond<R: Rng>(rng: &mut R, x: &DMatrix<f64>, beta: &[f64], sigma: f64) -> DVector<f64> {
    let b = DVector::from_column_slice(beta);
    let mut y = x * b;
    for v in y.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += sigma * e;
    }
    y
}

/// 8-variable benchmark: columns standard normal with corr 0.5^{|i-j|},
/// signals beta = (3, 1.5, 0, 0, 2, 0, 0, 0).
pub fn gen_tibshirani(n: usize, sigma: f64, seed: u64) -> Result<SyntheticData> {
    check_n(n)?;
    check_sigma(sigma)?;
    let p = 8;
    let beta = vec![3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0];
    let mut rng = stream_rng(seed, &[streams::DATASET]);
    let mut x = DMatrix::zeros(n, p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        ar1_row(&mut rng, 0.5, &mut row);
        for j in 0..p {
            x[(i, j)] = row[j];
        }
    }
    let mut noise_rng = stream_rng(seed, &[streams::NOISE]);
    let y = respond(&mut noise_rng, &x, &beta, sigma);
    Ok(SyntheticData {
        dataset: Dataset::new(x, y)?,
        truth: GroundTruth::from_beta(beta),
    })
}

/// 40-variable grouped design: two signal blocks {1,2,3} and {4,5,6} with
/// within-block correlation 0.9 and zero correlation elsewhere; the noise
/// columns 7..40 are independent standard normals. sigma is fixed at 6.
pub fn gen_correlated(n: usize, seed: u64) -> Result<SyntheticData> {
    check_n(n)?;
    let p = 40;
    let sigma = 6.0;
    let mut beta = vec![0.0; p];
    beta[..6].copy_from_slice(&[3.0, 3.0, -2.0, 3.0, 3.0, -2.0]);
    let shared = 0.9f64.sqrt();
    let own = 0.1f64.sqrt();
    let mut rng = stream_rng(seed, &[streams::DATASET]);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let u1: f64 = rng.sample(StandardNormal);
        let u2: f64 = rng.sample(StandardNormal);
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            x[(i, j)] = match j {
                0..=2 => shared * u1 + own * z,
                3..=5 => shared * u2 + own * z,
                _ => z,
            };
        }
    }
    let mut noise_rng = stream_rng(seed, &[streams::NOISE]);
    let y = respond(&mut noise_rng, &x, &beta, sigma);
    Ok(SyntheticData {
        dataset: Dataset::new(x, y)?,
        truth: GroundTruth::from_beta(beta),
    })
}

/// Large-p design: AR(1) columns with corr 0.6^{|i-j|}, beta = (1, 2, 3, 0, ...),
/// noise variance 3. Generation is O(np) via the AR recursion.
pub fn gen_large_p(n: usize, p: usize, seed: u64) -> Result<SyntheticData> {
    check_n(n)?;
    if p < 3 {
        return Err(Error::InvalidParam(format!("p must be >= 3, got {}", p)));
    }
    let sigma = 3f64.sqrt();
    let mut beta = vec![0.0; p];
    beta[..3].copy_from_slice(&[1.0, 2.0, 3.0]);
    let mut rng = stream_rng(seed, &[streams::DATASET]);
    let mut x = DMatrix::zeros(n, p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        ar1_row(&mut rng, 0.6, &mut row);
        for j in 0..p {
            x[(i, j)] = row[j];
        }
    }
    let mut noise_rng = stream_rng(seed, &[streams::NOISE]);
    let y = respond(&mut noise_rng, &x, &beta, sigma);
    Ok(SyntheticData {
        dataset: Dataset::new(x, y)?,
        truth: GroundTruth::from_beta(beta),
    })
}

/// Generate the dataset described by a [`SimDesign`].
pub fn generate(design: &SimDesign) -> Result<SyntheticData> {
    match design.kind {
        DesignKind::Tibshirani => gen_tibshirani(design.n, design.sigma, design.seed),
        DesignKind::Correlated => gen_correlated(design.n, design.seed),
        DesignKind::LargeP => gen_large_p(design.n, design.p, design.seed),
    }
}
