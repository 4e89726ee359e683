//! Command-line interface: fit, ensemble, path, tune, simulate, and bench
//! workflows with reproducible seeds and machine-readable artifacts.

mod manifest;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use std::fmt;
use std::path::PathBuf;

use bbem_core::bbem::{run_bbem, BootstrapConfig, WeightScale};
use bbem_core::data::{self, Dataset, SimDesign};
use bbem_core::em::{run_em, EmConfig, GammaInit, HyperParams, IterRecord};
use bbem_core::experiments::{run_experiment, ExperimentSpec, Method, Tuner};
use bbem_core::posterior::{bench_update, refresh_budget};
use bbem_core::tuning::{
    selection_path, tune_bic, tune_cv, EngineConfig, GridScale, TuneResult, V0Grid,
};

use manifest::{OutDir, RunManifest};

/// Argument errors detected after parsing; mapped to exit code 1.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Parser)]
#[command(
    name = "bbem",
    version,
    about = "Spike-and-slab EM variable selection with Bayesian bootstrap ensembles"
)]
struct Cli {
    /// Cap worker threads used for replicates, grid points, and folds.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single EM fit on a CSV dataset.
    Fit(FitArgs),
    /// Bayesian-bootstrap ensemble fit on a CSV dataset.
    Ensemble(EnsembleArgs),
    /// Selection-frequency path across a v0 grid.
    Path(PathArgs),
    /// Tune v0 by BIC or cross-validated RMSE.
    Tune(TuneArgs),
    /// Re-run the benchmark simulation studies.
    Simulate(SimulateArgs),
    /// Time incremental posterior updates against full rebuilds.
    Bench(BenchArgs),
}

#[derive(Args, Serialize)]
struct InputOpts {
    /// CSV file with a header row; all non-response columns must be numeric.
    #[arg(long)]
    input: PathBuf,
    /// Response column name, or 0-based index if no header matches.
    #[arg(long)]
    response: String,
    /// Center and scale features and center the response before fitting.
    #[arg(long)]
    standardize: bool,
}

impl InputOpts {
    fn load(&self) -> Result<Dataset> {
        data::load_csv(&self.input, &self.response, self.standardize)
            .with_context(|| format!("loading {}", self.input.display()))
    }
}

#[derive(Args, Serialize)]
struct PriorOpts {
    /// Spike prior variance scale.
    #[arg(long, default_value_t = 0.01)]
    v0: f64,
    /// Slab prior variance scale.
    #[arg(long, default_value_t = 100.0)]
    v1: f64,
    #[arg(long, default_value_t = 1.1)]
    a0: f64,
    #[arg(long, default_value_t = 1.1)]
    b0: f64,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

impl PriorOpts {
    fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0) {
            return Err(usage("v0 must be positive"));
        }
        if self.v0 >= self.v1 {
            return Err(usage("v0 must be < v1"));
        }
        for (name, v) in [
            ("a0", self.a0),
            ("b0", self.b0),
            ("nu", self.nu),
            ("lambda", self.lambda),
        ] {
            if !(v > 0.0) {
                return Err(usage(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    fn hyper_params(&self) -> HyperParams {
        HyperParams {
            v0: self.v0,
            v1: self.v1,
            a0: self.a0,
            b0: self.b0,
            nu: self.nu,
            lambda: self.lambda,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum GammaInitArg {
    Ones,
    Zeros,
}

#[derive(Args, Serialize)]
struct EmOpts {
    /// Initial inclusion probability; defaults to 1/2, or sqrt(n)/p when p > n.
    #[arg(long)]
    theta0: Option<f64>,
    /// Initial noise variance (sigma^2).
    #[arg(long, default_value_t = 1.0)]
    sigma0: f64,
    #[arg(long, value_enum, default_value_t = GammaInitArg::Ones)]
    gamma_init: GammaInitArg,
    /// Stop once gamma is unchanged for this many iterations.
    #[arg(long, default_value_t = 3)]
    k0: usize,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

impl EmOpts {
    fn validate(&self) -> Result<()> {
        if let Some(t) = self.theta0 {
            if !(t > 0.0 && t < 1.0) {
                return Err(usage("theta0 must lie strictly inside (0,1)"));
            }
        }
        if !(self.sigma0 > 0.0) {
            return Err(usage("sigma0 must be positive"));
        }
        if self.k0 == 0 || self.k0 > self.max_iter {
            return Err(usage("need 1 <= k0 <= max-iter"));
        }
        Ok(())
    }

    fn resolve(&self, n: usize, p: usize, seed: u64) -> EmConfig {
        let theta_init = self
            .theta0
            .unwrap_or_else(|| ExperimentSpec::default_theta_init(n, p));
        EmConfig {
            max_iter: self.max_iter,
            k0: self.k0,
            theta_init,
            sigma2_init: self.sigma0,
            gamma_init: match self.gamma_init {
                GammaInitArg::Ones => GammaInit::AllOnes,
                GammaInitArg::Zeros => GammaInit::AllZeros,
            },
            seed,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    prior: PriorOpts,
    #[command(flatten)]
    em: EmOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for manifest.json and result.json.
    #[arg(long, default_value = "bbem-out")]
    out: PathBuf,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    prior: PriorOpts,
    #[command(flatten)]
    em: EmOpts,
    /// Bootstrap replicates.
    #[arg(long = "K", default_value_t = 100)]
    replicates: usize,
    /// Variables per bootstrap subset; defaults to min(p, ceil(n/2)).
    #[arg(long = "L")]
    subset_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = WeightScaleArg::SumToN)]
    weight_scale: WeightScaleArg,
    /// Selection-frequency threshold for the reported model.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bbem-out")]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
enum WeightScaleArg {
    /// Scale Dirichlet weights by n (mean weight 1).
    SumToN,
    /// Keep the raw simplex draw.
    SumTo1,
}

impl From<WeightScaleArg> for WeightScale {
    fn from(w: WeightScaleArg) -> Self {
        match w {
            WeightScaleArg::SumToN => WeightScale::SumToN,
            WeightScaleArg::SumTo1 => WeightScale::SumToOne,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum EngineArg {
    Em,
    Bbem,
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    prior: PriorOpts,
    #[command(flatten)]
    em: EmOpts,
    /// Grid spec: comma-separated values, or log:LO:HI:COUNT with base-10
    /// exponents, or lin:LO:HI:COUNT.
    #[arg(long, default_value = "log:-4:0:13")]
    grid: String,
    #[arg(long, value_enum, default_value_t = EngineArg::Bbem)]
    engine: EngineArg,
    #[arg(long = "K", default_value_t = 100)]
    replicates: usize,
    #[arg(long = "L")]
    subset_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = WeightScaleArg::SumToN)]
    weight_scale: WeightScaleArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bbem-out")]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TunerArg {
    Bic,
    Cv,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    prior: PriorOpts,
    #[command(flatten)]
    em: EmOpts,
    #[arg(long, value_enum)]
    tuner: TunerArg,
    /// Grid spec; defaults to the standard CV grid, or a wider log grid
    /// for BIC.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, value_enum, default_value_t = EngineArg::Em)]
    engine: EngineArg,
    #[arg(long = "K", default_value_t = 100)]
    replicates: usize,
    #[arg(long = "L")]
    subset_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = WeightScaleArg::SumToN)]
    weight_scale: WeightScaleArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bbem-out")]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum DesignArg {
    Tibshirani,
    Correlated,
    LargeP,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    design: DesignArg,
    /// Sample size; defaults to 40 (tibshirani), 50 (correlated), 100 (large_p).
    #[arg(long)]
    n: Option<usize>,
    /// Feature count; only adjustable for large_p.
    #[arg(long)]
    p: Option<usize>,
    /// Noise standard deviation; only adjustable for tibshirani.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Em)]
    method: MethodArg,
    #[arg(long, value_enum, default_value_t = TunerSimArg::Cv)]
    tuner: TunerSimArg,
    /// Spike variance for --tuner fixed.
    #[arg(long)]
    v0: Option<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long = "K")]
    replicates: Option<usize>,
    #[arg(long = "L")]
    subset_size: Option<usize>,
    /// Starting inclusion vector for the EM runs.
    #[arg(long, value_enum, default_value_t = GammaInitArg::Zeros)]
    gamma_init: GammaInitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bbem-out")]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum MethodArg {
    Em,
    Bbem,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TunerSimArg {
    Fixed,
    Bic,
    Cv,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    p: usize,
    /// Flipped indices per incremental update.
    #[arg(long, default_value_t = 5)]
    flips: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bbem-out")]
    out: PathBuf,
}

fn parse_grid(spec: &str) -> Result<V0Grid> {
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [one] => {
            let values: Vec<f64> = one
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| usage(format!("cannot parse grid values '{spec}'")))?;
            V0Grid::from_values(values, GridScale::Linear)
        }
        ["log", lo, hi, count] => {
            let lo: f64 = lo.parse().map_err(|_| usage("bad log grid bound"))?;
            let hi: f64 = hi.parse().map_err(|_| usage("bad log grid bound"))?;
            let count: usize = count.parse().map_err(|_| usage("bad log grid count"))?;
            V0Grid::log10(lo, hi, count)
        }
        ["lin", lo, hi, count] => {
            let lo: f64 = lo.parse().map_err(|_| usage("bad linear grid bound"))?;
            let hi: f64 = hi.parse().map_err(|_| usage("bad linear grid bound"))?;
            let count: usize = count.parse().map_err(|_| usage("bad linear grid count"))?;
            if count < 2 || !(hi > lo) {
                return Err(usage("linear grid needs hi > lo and count >= 2"));
            }
            let step = (hi - lo) / (count - 1) as f64;
            V0Grid::from_values(
                (0..count).map(|i| lo + i as f64 * step).collect(),
                GridScale::Linear,
            )
        }
        _ => return Err(usage(format!("unrecognized grid spec '{spec}'"))),
    };
    grid.map_err(|e| usage(e.to_string()))
}

fn default_subset_size(n: usize, p: usize) -> usize {
    p.min(n.div_ceil(2)).max(1)
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return 1;
        }
        // ignore failure when a pool already exists (e.g. under test)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }

    match run(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            if err.downcast_ref::<UsageError>().is_some() {
                eprintln!("error: {err}");
                1
            } else {
                eprintln!("error: {err:#}");
                2
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Ensemble(args) => cmd_ensemble(args),
        Command::Path(args) => cmd_path(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn selected_names(ds: &Dataset, gamma: &[u8]) -> Vec<String> {
    gamma
        .iter()
        .enumerate()
        .filter(|(_, &g)| g == 1)
        .map(|(j, _)| match &ds.column_names {
            Some(names) => names[j].clone(),
            None => format!("x{}", j + 1),
        })
        .collect()
}

#[derive(Serialize)]
struct FitOutput {
    gamma: Vec<u8>,
    m: Vec<f64>,
    converged: bool,
    iterations: usize,
    sigma2: f64,
    theta: f64,
    selected: Vec<String>,
    trace: Vec<IterRecord>,
    standardization: Option<bbem_core::data::Standardization>,
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    args.prior.validate()?;
    args.em.validate()?;
    let ds = args.input.load()?;
    let hp = args.prior.hyper_params();
    let em_cfg = args.em.resolve(ds.n(), ds.p(), args.seed);

    let fit = run_em(&ds, &hp, &em_cfg, None)?;

    let out = OutDir::create(&args.out)?;
    let config = json!({
        "input": args.input.input.display().to_string(),
        "response": args.input.response,
        "standardize": args.input.standardize,
        "hyper_params": hp,
        "em": em_cfg,
        "seed": args.seed,
    });
    let manifest =
        RunManifest::new("fit", config, args.seed).with_input(&args.input.input)?;
    out.write_manifest(&manifest)?;
    let output = FitOutput {
        selected: selected_names(&ds, &fit.gamma),
        gamma: fit.gamma,
        m: fit.m,
        converged: fit.converged,
        iterations: fit.state.iter,
        sigma2: fit.state.sigma2,
        theta: fit.state.theta,
        trace: fit.trace,
        standardization: ds.standardization.clone(),
    };
    out.write_json("result.json", &output)?;
    println!(
        "fit: selected {}/{} variables (converged: {}, iterations: {}) -> {}",
        output.gamma.iter().filter(|&&g| g == 1).count(),
        output.gamma.len(),
        output.converged,
        output.iterations,
        out.path().display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ReplicateSummary {
    subset: Vec<usize>,
    selected: Vec<usize>,
    converged: bool,
    failed: bool,
}

#[derive(Serialize)]
struct EnsembleOutput {
    phi: Vec<f64>,
    m_bar: Vec<f64>,
    threshold: f64,
    selected: Vec<String>,
    gamma: Vec<u8>,
    failures: usize,
    replicates: Vec<ReplicateSummary>,
    standardization: Option<bbem_core::data::Standardization>,
}

fn cmd_ensemble(args: EnsembleArgs) -> Result<()> {
    args.prior.validate()?;
    args.em.validate()?;
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(usage("threshold must lie in [0,1]"));
    }
    if args.replicates == 0 {
        return Err(usage("K must be at least 1"));
    }
    let ds = args.input.load()?;
    let subset_size = args
        .subset_size
        .unwrap_or_else(|| default_subset_size(ds.n(), ds.p()));
    if subset_size == 0 || subset_size > ds.p() {
        return Err(usage(format!("L must lie in 1..={}", ds.p())));
    }
    let hp = args.prior.hyper_params();
    let em_cfg = args.em.resolve(ds.n(), ds.p(), args.seed);
    let boot = BootstrapConfig {
        replicates: args.replicates,
        subset_size,
        seed: args.seed,
        weight_scale: args.weight_scale.into(),
        unit_weights: false,
    };

    let ens = run_bbem(&ds, &hp, &em_cfg, &boot)?;

    let out = OutDir::create(&args.out)?;
    let config = json!({
        "input": args.input.input.display().to_string(),
        "response": args.input.response,
        "standardize": args.input.standardize,
        "hyper_params": hp,
        "em": em_cfg,
        "bootstrap": boot,
        "threshold": args.threshold,
        "seed": args.seed,
    });
    let manifest =
        RunManifest::new("ensemble", config, args.seed).with_input(&args.input.input)?;
    out.write_manifest(&manifest)?;

    let gamma = ens.selected(args.threshold);
    let output = EnsembleOutput {
        selected: selected_names(&ds, &gamma),
        gamma,
        phi: ens.phi.clone(),
        m_bar: ens.m_bar.clone(),
        threshold: args.threshold,
        failures: ens.failures,
        replicates: ens
            .replicates
            .iter()
            .map(|r| ReplicateSummary {
                subset: r.subset.clone(),
                selected: r
                    .gamma
                    .iter()
                    .enumerate()
                    .filter(|(_, &g)| g == 1)
                    .map(|(j, _)| j)
                    .collect(),
                converged: r.converged,
                failed: r.failed,
            })
            .collect(),
        standardization: ds.standardization.clone(),
    };
    out.write_json("result.json", &output)?;
    println!(
        "ensemble: {} replicates, {} variables at phi >= {} ({} failures) -> {}",
        args.replicates,
        output.gamma.iter().filter(|&&g| g == 1).count(),
        args.threshold,
        ens.failures,
        out.path().display()
    );
    Ok(())
}

fn engine_config(
    engine: EngineArg,
    em_cfg: EmConfig,
    replicates: usize,
    subset_size: Option<usize>,
    weight_scale: WeightScaleArg,
    n: usize,
    p: usize,
    seed: u64,
) -> EngineConfig {
    match engine {
        EngineArg::Em => EngineConfig::Em { em: em_cfg },
        EngineArg::Bbem => EngineConfig::Bbem {
            em: em_cfg,
            bootstrap: BootstrapConfig {
                replicates,
                subset_size: subset_size.unwrap_or_else(|| default_subset_size(n, p)),
                seed,
                weight_scale: weight_scale.into(),
                unit_weights: false,
            },
        },
    }
}

fn cmd_path(args: PathArgs) -> Result<()> {
    args.prior.validate()?;
    args.em.validate()?;
    let grid = parse_grid(&args.grid)?;
    if args.replicates == 0 {
        return Err(usage("K must be at least 1"));
    }
    let ds = args.input.load()?;
    let hp = args.prior.hyper_params();
    let em_cfg = args.em.resolve(ds.n(), ds.p(), args.seed);
    let engine = engine_config(
        args.engine,
        em_cfg,
        args.replicates,
        args.subset_size,
        args.weight_scale,
        ds.n(),
        ds.p(),
        args.seed,
    );

    let path = selection_path(&ds, &hp, &grid, &engine)?;

    let out = OutDir::create(&args.out)?;
    let config = json!({
        "input": args.input.input.display().to_string(),
        "response": args.input.response,
        "standardize": args.input.standardize,
        "hyper_params": hp,
        "engine": engine,
        "grid": grid,
        "seed": args.seed,
    });
    let manifest =
        RunManifest::new("path", config, args.seed).with_input(&args.input.input)?;
    out.write_manifest(&manifest)?;
    out.write_text("path.csv", &path.to_csv())?;
    out.write_json("result.json", &path)?;
    println!(
        "path: {} grid points x {} variables ({} engine) -> {}",
        grid.values.len(),
        ds.p(),
        path.engine,
        out.path().display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TuneOutput {
    tuner: TunerArg,
    folds: Option<usize>,
    #[serde(flatten)]
    result: TuneResult,
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    args.prior.validate()?;
    args.em.validate()?;
    if args.tuner == TunerArg::Cv && args.folds < 2 {
        return Err(usage("cross-validation needs --folds >= 2"));
    }
    let grid = match &args.grid {
        Some(s) => parse_grid(s)?,
        None => match args.tuner {
            TunerArg::Cv => V0Grid::default_cv(),
            TunerArg::Bic => V0Grid::default_bic(),
        },
    };
    let ds = args.input.load()?;
    let hp = args.prior.hyper_params();
    let em_cfg = args.em.resolve(ds.n(), ds.p(), args.seed);
    let engine = engine_config(
        args.engine,
        em_cfg,
        args.replicates,
        args.subset_size,
        args.weight_scale,
        ds.n(),
        ds.p(),
        args.seed,
    );

    let result = match args.tuner {
        TunerArg::Bic => tune_bic(&ds, &hp, &grid, &engine)?,
        TunerArg::Cv => tune_cv(&ds, &hp, &grid, args.folds, args.seed, &engine)?,
    };

    let out = OutDir::create(&args.out)?;
    let config = json!({
        "input": args.input.input.display().to_string(),
        "response": args.input.response,
        "standardize": args.input.standardize,
        "hyper_params": hp,
        "engine": engine,
        "grid": grid,
        "tuner": args.tuner,
        "folds": if args.tuner == TunerArg::Cv { Some(args.folds) } else { None },
        "seed": args.seed,
    });
    let manifest =
        RunManifest::new("tune", config, args.seed).with_input(&args.input.input)?;
    out.write_manifest(&manifest)?;
    let output = TuneOutput {
        tuner: args.tuner,
        folds: (args.tuner == TunerArg::Cv).then_some(args.folds),
        result,
    };
    out.write_json("result.json", &output)?;
    println!(
        "tune: best v0 = {} (score {:.6}) over {} grid points -> {}",
        output.result.best_v0,
        output.result.best_score,
        grid.values.len(),
        out.path().display()
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    if args.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    if args.tuner == TunerSimArg::Fixed && args.v0.is_none() {
        return Err(usage("--tuner fixed requires --v0"));
    }
    if let Some(v0) = args.v0 {
        if !(v0 > 0.0 && v0 < 100.0) {
            return Err(usage("v0 must be positive and below v1=100"));
        }
    }
    let design = match args.design {
        DesignArg::Tibshirani => {
            if args.p.is_some() {
                return Err(usage("p is fixed at 8 for the tibshirani design"));
            }
            SimDesign::tibshirani(args.n.unwrap_or(40), args.sigma.unwrap_or(3.0), 0)
        }
        DesignArg::Correlated => {
            if args.p.is_some() {
                return Err(usage("p is fixed at 40 for the correlated design"));
            }
            if args.sigma.is_some() {
                return Err(usage("sigma is fixed at 6 for the correlated design"));
            }
            SimDesign::correlated(args.n.unwrap_or(50), 0)
        }
        DesignArg::LargeP => {
            if args.sigma.is_some() {
                return Err(usage("noise variance is fixed at 3 for the large_p design"));
            }
            SimDesign::large_p(args.n.unwrap_or(100), args.p, 0)
        }
    };
    let grid = args.grid.as_deref().map(parse_grid).transpose()?;

    let spec = ExperimentSpec {
        design,
        replicates: args.reps,
        method: match args.method {
            MethodArg::Em => Method::Em,
            MethodArg::Bbem => Method::Bbem,
        },
        tuner: match args.tuner {
            TunerSimArg::Fixed => Tuner::Fixed,
            TunerSimArg::Bic => Tuner::Bic,
            TunerSimArg::Cv => Tuner::Cv,
        },
        v0: args.v0,
        seed: args.seed,
        grid,
        ensemble_replicates: args.replicates,
        subset_size: args.subset_size,
        gamma_init: match args.gamma_init {
            GammaInitArg::Ones => GammaInit::AllOnes,
            GammaInitArg::Zeros => GammaInit::AllZeros,
        },
    };

    let table = run_experiment(&spec)?;

    let out = OutDir::create(&args.out)?;
    let manifest = RunManifest::new(
        "simulate",
        serde_json::to_value(&spec).context("serializing experiment spec")?,
        args.seed,
    );
    out.write_manifest(&manifest)?;
    out.write_json("result.json", &table)?;
    out.write_text("table.csv", &table.to_csv())?;
    out.write_text("table.txt", &table.to_text())?;
    println!(
        "simulate: {} x {} ({}, {}) signal-selected mean {:.2}, noise-selected mean {:.2} -> {}",
        table.design,
        table.replicates,
        table.method,
        table.tuner,
        table.signal_selected_mean,
        table.noise_selected_mean,
        out.path().display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    if args.n < 2 || args.p < 2 {
        return Err(usage("bench needs n >= 2 and p >= 2"));
    }
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let budget = refresh_budget(args.n, args.p);
    if args.flips == 0 || args.flips > budget {
        return Err(usage(format!(
            "--flips must lie in 1..={} (the refresh budget for n={}, p={})",
            budget, args.n, args.p
        )));
    }

    let output = bench_update(args.n, args.p, args.flips, args.trials, args.seed)?;

    let out = OutDir::create(&args.out)?;
    let config = json!({
        "n": args.n,
        "p": args.p,
        "flips": args.flips,
        "trials": args.trials,
        "seed": args.seed,
    });
    let manifest = RunManifest::new("bench", config, args.seed);
    out.write_manifest(&manifest)?;
    out.write_json("result.json", &output)?;
    println!(
        "bench: incremental {:.3} ms vs rebuild {:.3} ms ({:.1}x, max rel err {:.2e}) -> {}",
        output.median_update_ms,
        output.median_build_ms,
        output.speedup,
        output.max_rel_error,
        out.path().display()
    );
    Ok(())
}
