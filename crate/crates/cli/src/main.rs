//! `ralasso` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use serde::Serialize;
use serde_json::{json, Map, Value};

use ralasso::io::{read_dataset, read_features, read_scenario, read_table_file};
use ralasso::loss::residuals;
use ralasso::optimizer::composite_gradient_descent;
use ralasso::regression::{estimate_sigma2_cv, predict};
use ralasso::report::{format_f64, sorted_residuals_csv, to_json_string, Provenance};
use ralasso::robust_mean::{choose_alpha, min_sample_size, ra_mean_with_alpha, robust_covariance};
use ralasso::simulation::{
    generate_validation, log_space, run_scenario, tune_cv, tune_grid, CvLoss, GridPoint, Method,
};
use ralasso::{Dataset, Error, FitConfig, GammaU};

const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(name = "ralasso", version, about = "Robust sparse regression with the RA-Lasso")]
struct Cli {
    /// Master seed; the RML_SEED environment variable takes precedence.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel commands (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a penalized estimator to a dataset CSV (`y` first).
    Fit(FitArgs),
    /// Apply a fitted coefficient vector to a feature CSV.
    Predict(PredictArgs),
    /// RA-mean of one column.
    Mean(MeanArgs),
    /// Entrywise robust second-moment matrix of all columns.
    Cov(CovArgs),
    /// Cross-validated noise variance estimate.
    Sigma2(Sigma2Args),
    /// Tune (λ, α) by K-fold CV on a dataset or by validation sets of a scenario.
    Tune(TuneArgs),
    /// Run a simulation scenario and write the summary tables.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Lasso,
    RLasso,
    RaLasso,
    CatoniLasso,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Lasso => Method::Lasso,
            MethodArg::RLasso => Method::RLasso,
            MethodArg::RaLasso => Method::RaLasso,
            MethodArg::CatoniLasso => Method::CatoniLasso,
        }
    }
}

#[derive(Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum CvLossArg {
    Absolute,
    Squared,
}

#[derive(Args, Serialize)]
struct SolverArgs {
    /// L1-ball radius of the side constraint.
    #[arg(long, default_value_t = 1e6)]
    rho: f64,
    /// Fixed curvature γ_u (default: estimated from the design).
    #[arg(long)]
    gamma_u: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Objective-decrease stopping threshold.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

impl SolverArgs {
    fn config(&self, lambda: f64) -> FitConfig {
        FitConfig {
            lambda,
            rho: self.rho,
            gamma_u: self.gamma_u.map_or(GammaU::Auto, GammaU::Fixed),
            max_iters: self.max_iters,
            tol: self.tol,
            beta0: None,
        }
    }
}

#[derive(Args, Serialize)]
struct FitArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    lambda: f64,
    /// Robustification parameter (ra-lasso, catoni-lasso).
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Result JSON (default: stdout).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write the sorted training residuals as CSV.
    #[arg(long)]
    residuals: Option<PathBuf>,
    data: PathBuf,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    /// JSON file with a `beta` array, such as the output of `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Feature CSV; a leading `y` column is ignored.
    features: PathBuf,
}

#[derive(Args, Serialize)]
struct MeanArgs {
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Upper bound on the standard deviation.
    #[arg(long, default_value_t = 1.0)]
    v: f64,
    /// Fixed α instead of the calibrated value.
    #[arg(long)]
    alpha: Option<f64>,
    /// Column to use when the file has several.
    #[arg(long)]
    column: Option<String>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    samples: PathBuf,
}

#[derive(Args, Serialize)]
struct CovArgs {
    /// Confidence parameter (default: max(p, 2)^-3).
    #[arg(long)]
    delta: Option<f64>,
    /// Dispersion bound shared by all entries (default: per-entry plug-in).
    #[arg(long)]
    v: Option<f64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    data: PathBuf,
}

#[derive(Args, Serialize)]
struct Sigma2Args {
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, short)]
    output: Option<PathBuf>,
    data: PathBuf,
}

#[derive(Args, Serialize)]
struct TuneArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Dataset CSV for K-fold cross-validation.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    data: Option<PathBuf>,
    /// Scenario JSON; tunes on its validation datasets.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Comma-separated λ grid (default: scenario grid, or 15 log-spaced values for CV).
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Comma-separated α grid.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, value_enum, default_value = "absolute")]
    cv_loss: CvLossArg,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    scenario: PathBuf,
    /// Table-layout CSV report.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON report (stdout when neither output is given).
    #[arg(long)]
    json: Option<PathBuf>,
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::Shape(_)
        | Error::DegenerateDesign(_)
        | Error::Parse { .. }
        | Error::Scenario(_)
        | Error::Io(_) => 2,
        Error::Calibration { .. } | Error::RankDeficient { .. } | Error::DegenerateGain { .. } => 3,
        Error::Divergence { .. } => 4,
        Error::Replication { source, .. } => exit_code(source),
    }
}

type CmdResult = Result<(), Failure>;

fn write_out(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| input_error(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn flags<T: Serialize>(args: &T) -> Map<String, Value> {
    match serde_json::to_value(args) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>, Failure> {
    match std::env::var("RML_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| input_error(format!("RML_SEED must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(flag),
    }
}

fn with_provenance(prov: &Provenance, body: Value) -> Result<String, Failure> {
    let mut doc = Map::new();
    doc.insert(
        "provenance".into(),
        serde_json::to_value(prov).expect("provenance serializes"),
    );
    if let Value::Object(m) = body {
        doc.extend(m);
    }
    let mut s = to_json_string(&Value::Object(doc))?;
    s.push('\n');
    Ok(s)
}

fn fit_point(method: MethodArg, lambda: f64, alpha: Option<f64>) -> Result<GridPoint, Failure> {
    let method = Method::from(method);
    if method.uses_alpha() && alpha.is_none() {
        return Err(input_error(format!("--alpha is required for {}", method.name())));
    }
    Ok(GridPoint {
        lambda,
        alpha: if method.uses_alpha() { alpha } else { None },
    })
}

fn cmd_fit(a: &FitArgs, seed: u64) -> CmdResult {
    let data = read_dataset(&a.data)?;
    let method = Method::from(a.method);
    let point = fit_point(a.method, a.lambda, a.alpha)?;
    let spec = method.loss(&data, point.alpha)?.expect("penalized method");
    let fit = composite_gradient_descent(&spec, data.x(), data.y(), &a.solver.config(a.lambda))?;
    if !fit.converged {
        eprintln!(
            "warning: no convergence after {} iterations (last objective {})",
            fit.iterations,
            fit.objective_trace.last().copied().unwrap_or(f64::NAN)
        );
    }
    let prov = Provenance::new("fit", seed, flags(a));
    let body = json!({
        "method": method.name(),
        "lambda": a.lambda,
        "alpha": point.alpha,
        "beta": fit.beta.to_vec(),
        "objective_trace": fit.objective_trace,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "gamma_u": fit.gamma_u,
    });
    write_out(a.output.as_deref(), &with_provenance(&prov, body)?)?;
    if let Some(path) = &a.residuals {
        let r = residuals(data.x(), data.y(), fit.beta.view())?;
        write_out(
            Some(path),
            &sorted_residuals_csv(r.as_slice().expect("contiguous"), &prov),
        )?;
    }
    Ok(())
}

fn cmd_predict(a: &PredictArgs, seed: u64) -> CmdResult {
    let text = fs::read_to_string(&a.fit).map_err(|e| input_error(format!("cannot read {}: {e}", a.fit.display())))?;
    let doc: Value =
        serde_json::from_str(&text).map_err(|e| input_error(format!("{}: invalid JSON: {e}", a.fit.display())))?;
    let beta: Vec<f64> = doc
        .get("beta")
        .and_then(|b| serde_json::from_value(b.clone()).ok())
        .ok_or_else(|| input_error(format!("{}: missing numeric `beta` array", a.fit.display())))?;
    let x = read_features(&a.features)?;
    let pred = predict(Array1::from(beta).view(), x.view())?;
    let prov = Provenance::new("predict", seed, flags(a));
    let mut out = prov.csv_header();
    out.push_str("prediction\n");
    for v in pred.iter() {
        out.push_str(&format_f64(*v));
        out.push('\n');
    }
    write_out(a.output.as_deref(), &out)
}

fn cmd_mean(a: &MeanArgs, seed: u64) -> CmdResult {
    let table = read_table_file(&a.samples)?;
    let col = match &a.column {
        Some(name) => table
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| input_error(format!("no column `{name}` in {}", a.samples.display())))?,
        None if table.headers.len() == 1 => 0,
        None => return Err(input_error("several columns present; choose one with --column")),
    };
    let samples = table.values.column(col).to_owned();
    let n = samples.len();
    let choice = choose_alpha(n, a.delta, a.v)?;
    let alpha = match a.alpha {
        Some(al) => al,
        None if !choice.applicable => {
            return Err(Error::Calibration {
                ratio: (1.0 / a.delta).ln() / n as f64,
                required_n: min_sample_size(a.delta),
            }
            .into())
        }
        None => choice.alpha,
    };
    let estimate = ra_mean_with_alpha(samples.view(), alpha, None)?;
    let prov = Provenance::new("mean", seed, flags(a));
    let body = json!({
        "estimate": estimate,
        "alpha": alpha,
        "n": n,
        "delta": a.delta,
        "v": a.v,
        "radius": choice.radius,
        "applicable": choice.applicable,
    });
    write_out(a.output.as_deref(), &with_provenance(&prov, body)?)
}

fn rows(m: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn cmd_cov(a: &CovArgs, seed: u64) -> CmdResult {
    let table = read_table_file(&a.data)?;
    let cov = robust_covariance(table.values.view(), a.delta, a.v)?;
    let prov = Provenance::new("cov", seed, flags(a));
    let body = json!({
        "columns": table.headers,
        "sigma_hat": rows(&cov.sigma_hat),
        "delta": cov.delta_used,
        "v": rows(&cov.v_used),
        "radius": rows(&cov.radius),
        "applicable": true,
    });
    write_out(a.output.as_deref(), &with_provenance(&prov, body)?)
}

fn cmd_sigma2(a: &Sigma2Args, seed: u64) -> CmdResult {
    let data = read_dataset(&a.data)?;
    let method = Method::from(a.method);
    let point = fit_point(a.method, a.lambda, a.alpha)?;
    let cfg = a.solver.config(a.lambda);
    let est = estimate_sigma2_cv(&data, a.k, seed, |train: &Dataset| {
        let spec = method.loss(train, point.alpha)?.expect("penalized method");
        Ok(composite_gradient_descent(&spec, train.x(), train.y(), &cfg)?.beta)
    })?;
    let prov = Provenance::new("sigma2", seed, flags(a));
    let body = json!({
        "sigma2_hat": est.sigma2_hat,
        "folds": est.folds,
        "per_fold": est.per_fold,
        "method": method.name(),
        "lambda": a.lambda,
        "alpha": point.alpha,
    });
    write_out(a.output.as_deref(), &with_provenance(&prov, body)?)
}

fn grid_points(method: Method, lambdas: &[f64], alphas: &[f64]) -> Result<Vec<GridPoint>, Failure> {
    if lambdas.is_empty() {
        return Err(input_error("λ grid is empty"));
    }
    if method.uses_alpha() && alphas.is_empty() {
        return Err(input_error("α grid is empty"));
    }
    let mut out = Vec::new();
    if method.uses_alpha() {
        for &al in alphas {
            out.extend(lambdas.iter().map(|&l| GridPoint {
                lambda: l,
                alpha: Some(al),
            }));
        }
    } else {
        out.extend(lambdas.iter().map(|&l| GridPoint { lambda: l, alpha: None }));
    }
    Ok(out)
}

fn cmd_tune(a: &TuneArgs, seed: Option<u64>) -> CmdResult {
    let method = Method::from(a.method);
    let (outcome, grid, seed) = if let Some(path) = &a.scenario {
        let mut sc = read_scenario(path)?;
        if let Some(s) = seed {
            sc.seed = s;
        }
        let lambdas = a.lambdas.clone().unwrap_or_else(|| sc.grid.lambda.clone());
        let alphas = a.alphas.clone().unwrap_or_else(|| sc.grid.alpha.clone());
        let grid = grid_points(method, &lambdas, &alphas)?;
        let cfg = FitConfig {
            rho: a.solver.rho,
            ..sc.solver.fit_config()
        };
        let out = tune_grid(
            |v| generate_validation(&sc, v),
            &sc.beta_star,
            method,
            &grid,
            sc.grid.n_validation,
            &cfg,
        )?;
        (out, grid, sc.seed)
    } else {
        let path = a.data.as_ref().expect("clap enforces --data or --scenario");
        let data = read_dataset(path)?;
        let seed = seed.unwrap_or(DEFAULT_SEED);
        let lambdas = match &a.lambdas {
            Some(l) => l.clone(),
            None => {
                let rate = ((data.p().max(2) as f64).ln() / data.n() as f64).sqrt();
                log_space(0.01 * rate, 3.0 * rate, 15)
            }
        };
        let alphas = a
            .alphas
            .clone()
            .unwrap_or_else(|| ralasso::simulation::DEFAULT_ALPHAS.to_vec());
        let grid = grid_points(method, &lambdas, &alphas)?;
        let loss = match a.cv_loss {
            CvLossArg::Absolute => CvLoss::Absolute,
            CvLossArg::Squared => CvLoss::Squared,
        };
        let out = tune_cv(&data, method, &grid, a.k, loss, seed, &a.solver.config(0.0))?;
        (out, grid, seed)
    };
    let prov = Provenance::new("tune", seed, flags(a));
    let body = json!({
        "method": method.name(),
        "best": { "lambda": outcome.best.lambda, "alpha": outcome.best.alpha },
        "grid": grid.iter().map(|g| json!({"lambda": g.lambda, "alpha": g.alpha})).collect::<Vec<_>>(),
        "scores": outcome.scores,
    });
    write_out(a.output.as_deref(), &with_provenance(&prov, body)?)
}

fn cmd_simulate(a: &SimulateArgs, seed: Option<u64>) -> CmdResult {
    let mut sc = read_scenario(&a.scenario)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    let report = run_scenario(&sc)?;
    let prov = Provenance::new("simulate", sc.seed, flags(a));
    if let Some(p) = &a.csv {
        write_out(Some(p), &report.to_csv(&prov))?;
    }
    if a.json.is_some() || a.csv.is_none() {
        let mut text = report.to_json(&prov)?;
        text.push('\n');
        write_out(a.json.as_deref(), &text)?;
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    let seed = resolve_seed(cli.seed)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(input_error("--workers must be at least 1"));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| input_error(format!("cannot start worker pool: {e}")))?;
    let fixed = seed.unwrap_or(DEFAULT_SEED);
    pool.install(|| match &cli.command {
        Command::Fit(a) => cmd_fit(a, fixed),
        Command::Predict(a) => cmd_predict(a, fixed),
        Command::Mean(a) => cmd_mean(a, fixed),
        Command::Cov(a) => cmd_cov(a, fixed),
        Command::Sigma2(a) => cmd_sigma2(a, fixed),
        Command::Tune(a) => cmd_tune(a, seed),
        Command::Simulate(a) => cmd_simulate(a, seed),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
