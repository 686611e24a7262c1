//! Simulation harness: data generators, error laws, accuracy metrics,
//! relative gains, tuning and scenario execution.
//!
//! Covariates are i.i.d. `N(0, I_p)`. Responses follow either the additive
//! model `y = Xβ* + ε` or the heteroscedastic model
//! `y_i = x_iᵀβ* + c⁻¹(x_iᵀβ*)² ε_i` with `c = √3‖β*‖²`.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::loss::LossSpec;
use crate::optimizer::{composite_gradient_descent, gram_spectral_norm, FitConfig, GammaU, GAMMA_MARGIN};
use crate::regression::{complement, fit_oracle, kfold_partition, r_lasso_loss, Dataset};
use crate::rng::{stream_rng, Stream};
use crate::stats::pairwise_sum;

/// Selection threshold for FP/FN counting.
pub const ZERO_TOL: f64 = 1e-8;

const WEIBULL_SHAPE: f64 = 0.3;
const WEIBULL_SCALE: f64 = 0.5;

/// Centered noise distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorLaw {
    /// `N(0, 4)`.
    #[serde(alias = "normal", alias = "n04")]
    Normal04,
    /// `2·t₃`.
    #[serde(alias = "2t3", alias = "t3")]
    TwoT3,
    /// `0.5·N(−1, 4) + 0.5·N(8, 1)`, centered.
    #[serde(alias = "mixn")]
    MixN,
    /// `exp(1 + 1.2Z)`, centered.
    #[serde(alias = "lognormal")]
    LogNormal,
    /// Weibull with shape 0.3 and scale 0.5, centered.
    Weibull,
    /// Identically zero; noiseless runs for testing.
    Zero,
}

impl ErrorLaw {
    pub const STUDY_LAWS: [ErrorLaw; 5] = [
        ErrorLaw::Normal04,
        ErrorLaw::TwoT3,
        ErrorLaw::MixN,
        ErrorLaw::LogNormal,
        ErrorLaw::Weibull,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ErrorLaw::Normal04 => "N(0,4)",
            ErrorLaw::TwoT3 => "2t3",
            ErrorLaw::MixN => "MixN",
            ErrorLaw::LogNormal => "LogNormal",
            ErrorLaw::Weibull => "Weibull",
            ErrorLaw::Zero => "zero",
        }
    }

    /// Mean of the uncentered law, subtracted from every draw.
    pub fn centering(&self) -> f64 {
        match self {
            ErrorLaw::Normal04 | ErrorLaw::TwoT3 | ErrorLaw::Zero => 0.0,
            ErrorLaw::MixN => (8.0 - 1.0) / 2.0,
            ErrorLaw::LogNormal => 1.72f64.exp(),
            ErrorLaw::Weibull => WEIBULL_SCALE * statrs::function::gamma::gamma(1.0 + 1.0 / WEIBULL_SHAPE),
        }
    }

    /// Variance of the law.
    pub fn variance(&self) -> f64 {
        use statrs::function::gamma::gamma;
        match self {
            ErrorLaw::Normal04 => 4.0,
            ErrorLaw::TwoT3 => 12.0,
            ErrorLaw::MixN => 0.5 * (4.0 + 1.0) + 0.5 * (-1.0 - 3.5f64).powi(2) + 0.5 * (8.0 - 3.5f64).powi(2),
            ErrorLaw::LogNormal => (1.44f64.exp() - 1.0) * 3.44f64.exp(),
            ErrorLaw::Weibull => {
                let g1 = gamma(1.0 + 1.0 / WEIBULL_SHAPE);
                let g2 = gamma(1.0 + 2.0 / WEIBULL_SHAPE);
                WEIBULL_SCALE * WEIBULL_SCALE * (g2 - g1 * g1)
            }
            ErrorLaw::Zero => 0.0,
        }
    }

    /// One centered draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ErrorLaw::Normal04 => 2.0 * normal(rng),
            ErrorLaw::TwoT3 => {
                let z = normal(rng);
                let chi2: f64 = (0..3).map(|_| normal(rng).powi(2)).sum();
                2.0 * z / (chi2 / 3.0).sqrt()
            }
            ErrorLaw::MixN => {
                let raw = if rng.random::<f64>() < 0.5 {
                    -1.0 + 2.0 * normal(rng)
                } else {
                    8.0 + normal(rng)
                };
                raw - self.centering()
            }
            ErrorLaw::LogNormal => (1.0 + 1.2 * normal(rng)).exp() - self.centering(),
            ErrorLaw::Weibull => {
                // inverse CDF on u ∈ (0, 1]
                let u = 1.0 - rng.random::<f64>();
                WEIBULL_SCALE * (-u.ln()).powf(1.0 / WEIBULL_SHAPE) - self.centering()
            }
            ErrorLaw::Zero => 0.0,
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// One centered error draw from `law`.
pub fn sample_error<R: Rng + ?Sized>(law: ErrorLaw, rng: &mut R) -> f64 {
    law.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Homoscedastic,
    Heteroscedastic,
}

/// Estimators compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Lasso,
    RLasso,
    RaLasso,
    CatoniLasso,
    Oracle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Lasso => "lasso",
            Method::RLasso => "r-lasso",
            Method::RaLasso => "ra-lasso",
            Method::CatoniLasso => "catoni-lasso",
            Method::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "lasso" => Ok(Method::Lasso),
            "r-lasso" => Ok(Method::RLasso),
            "ra-lasso" => Ok(Method::RaLasso),
            "catoni-lasso" => Ok(Method::CatoniLasso),
            "oracle" => Ok(Method::Oracle),
            other => invalid(format!(
                "unknown method `{other}` (expected lasso, r-lasso, ra-lasso, catoni-lasso or oracle)"
            )),
        }
    }

    pub fn uses_alpha(&self) -> bool {
        matches!(self, Method::RaLasso | Method::CatoniLasso)
    }

    pub fn is_penalized(&self) -> bool {
        !matches!(self, Method::Oracle)
    }

    /// Loss for this method on `data` (`None` for the oracle).
    pub fn loss(&self, data: &Dataset, alpha: Option<f64>) -> Result<Option<LossSpec>> {
        let need_alpha = || alpha.ok_or_else(|| Error::InvalidArgument(format!("{} needs alpha", self.name())));
        Ok(Some(match self {
            Method::Lasso => LossSpec::square(),
            Method::RLasso => r_lasso_loss(data)?,
            Method::RaLasso => LossSpec::ra_quadratic(need_alpha()?)?,
            Method::CatoniLasso => LossSpec::catoni(need_alpha()?)?,
            Method::Oracle => return Ok(None),
        }))
    }
}

/// A candidate tuning pair. `alpha` is `None` for methods without one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub alpha: Option<f64>,
}

impl GridPoint {
    /// Ordering used to break ties: smaller λ first, then smaller α.
    fn tie_order(&self, other: &GridPoint) -> std::cmp::Ordering {
        self.lambda
            .total_cmp(&other.lambda)
            .then_with(|| match (self.alpha, other.alpha) {
                (Some(a), Some(b)) => a.total_cmp(&b),
                (a, b) => a.is_some().cmp(&b.is_some()),
            })
    }
}

/// Candidate λ and α values and the number of validation datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub lambda: Vec<f64>,
    pub alpha: Vec<f64>,
    pub n_validation: usize,
}

/// Default λ multipliers of `√(log p / n)`: 15 log-spaced points.
pub const DEFAULT_LAMBDA_FACTORS: (f64, f64, usize) = (0.01, 3.0, 15);
pub const DEFAULT_ALPHAS: [f64; 7] = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0];
pub const DEFAULT_N_VALIDATION: usize = 100;

/// `count` log-spaced points between `lo` and `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

impl TuningGrid {
    /// λ ∈ 15 log-spaced points in `[0.01, 3]·√(log p / n)` times
    /// `noise_scale`; α from [`DEFAULT_ALPHAS`].
    pub fn default_for(n: usize, p: usize, noise_scale: f64) -> Self {
        let rate = ((p.max(2) as f64).ln() / n as f64).sqrt() * noise_scale;
        let (lo, hi, count) = DEFAULT_LAMBDA_FACTORS;
        TuningGrid {
            lambda: log_space(lo * rate, hi * rate, count),
            alpha: DEFAULT_ALPHAS.to_vec(),
            n_validation: DEFAULT_N_VALIDATION,
        }
    }

    /// Grid points relevant to `method`.
    pub fn points(&self, method: Method) -> Vec<GridPoint> {
        if method.uses_alpha() {
            self.alpha
                .iter()
                .flat_map(|&a| {
                    self.lambda.iter().map(move |&l| GridPoint {
                        lambda: l,
                        alpha: Some(a),
                    })
                })
                .collect()
        } else {
            self.lambda
                .iter()
                .map(|&l| GridPoint { lambda: l, alpha: None })
                .collect()
        }
    }
}

/// Objective-decrease tolerance for simulation fits. Looser than the
/// library default: tens of thousands of fits per scenario, and the
/// estimation error moves by well under 1e-2 beyond this point.
pub const SIMULATION_TOL: f64 = 1e-7;

/// Iteration cap for simulation fits. The smoothed-LAD loss has curvature
/// `1/δ`, so its steps are short and small-λ fits need tens of thousands
/// of iterations.
pub const SIMULATION_MAX_ITERS: usize = 100_000;

/// Solver settings shared by every fit of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iters: usize,
    pub rho: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = FitConfig::default();
        SolverSettings {
            tol: SIMULATION_TOL,
            max_iters: SIMULATION_MAX_ITERS,
            rho: d.rho,
        }
    }
}

impl SolverSettings {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            tol: self.tol,
            max_iters: self.max_iters,
            rho: self.rho,
            ..FitConfig::default()
        }
    }
}

/// A fully seeded simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: Model,
    pub error: ErrorLaw,
    pub n: usize,
    pub p: usize,
    pub beta_star: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub grid: TuningGrid,
    pub methods: Vec<Method>,
    pub solver: SolverSettings,
}

impl Scenario {
    /// The full-scale design: n = 100, p = 400, first 20 coefficients 3.
    pub fn default_design(model: Model, error: ErrorLaw, seed: u64) -> Self {
        let (n, p) = (100, 400);
        let beta_star = default_beta_star(p, 20, 3.0);
        Scenario {
            model,
            error,
            n,
            p,
            grid: TuningGrid::default_for(n, p, default_noise_scale(&beta_star)),
            beta_star,
            replications: 100,
            seed,
            methods: vec![Method::Lasso, Method::RLasso, Method::RaLasso, Method::Oracle],
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Scenario(format!("field `{field}`: {msg}")));
        if self.n == 0 {
            return bad("n", "must be >= 1".into());
        }
        if self.p == 0 {
            return bad("p", "must be >= 1".into());
        }
        if self.beta_star.len() != self.p {
            return bad(
                "beta_star",
                format!("has length {} but p = {}", self.beta_star.len(), self.p),
            );
        }
        if self.beta_star.iter().any(|b| !b.is_finite()) {
            return bad("beta_star", "entries must be finite".into());
        }
        if self.replications == 0 {
            return bad("replications", "must be >= 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods", "must not be empty".into());
        }
        if self.methods.iter().any(Method::is_penalized) {
            if self.grid.lambda.is_empty() {
                return bad("grid.lambda", "must not be empty".into());
            }
            if self.grid.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return bad("grid.lambda", "values must be finite and >= 0".into());
            }
        }
        if self.methods.iter().any(Method::uses_alpha) {
            if self.grid.alpha.is_empty() {
                return bad("grid.alpha", "must not be empty".into());
            }
            if self.grid.alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                return bad("grid.alpha", "values must be finite and > 0".into());
            }
        }
        if self.grid.n_validation == 0 && self.needs_tuning() {
            return bad(
                "grid.n_validation",
                "must be >= 1 when the grid has several points".into(),
            );
        }
        if self.methods.contains(&Method::Oracle) && self.support().len() > self.n {
            return bad("beta_star", format!("support larger than n = {}", self.n));
        }
        let s = &self.solver;
        if !(s.tol.is_finite() && s.tol > 0.0) {
            return bad("tol", "must be > 0".into());
        }
        if s.max_iters == 0 {
            return bad("max_iters", "must be >= 1".into());
        }
        if !(s.rho > 0.0) {
            return bad("rho", "must be > 0".into());
        }
        Ok(())
    }

    fn needs_tuning(&self) -> bool {
        self.methods
            .iter()
            .filter(|m| m.is_penalized())
            .any(|&m| self.grid.points(m).len() > 1)
    }

    pub fn support(&self) -> Vec<usize> {
        support_of(&self.beta_star)
    }

    /// `c = √3‖β*‖²`.
    pub fn hetero_constant(&self) -> f64 {
        hetero_constant(&self.beta_star)
    }
}

/// First `s` entries equal to `value`, the rest zero.
pub fn default_beta_star(p: usize, s: usize, value: f64) -> Vec<f64> {
    (0..p).map(|j| if j < s { value } else { 0.0 }).collect()
}

/// Scale used to anchor the default λ grid: `1 + ‖β*‖₂ / √s`, so that the
/// grid follows the magnitude of the responses.
pub fn default_noise_scale(beta_star: &[f64]) -> f64 {
    let s = support_of(beta_star).len().max(1) as f64;
    let norm = beta_star.iter().map(|b| b * b).sum::<f64>().sqrt();
    1.0 + norm / s.sqrt()
}

pub fn support_of(beta: &[f64]) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect()
}

pub fn hetero_constant(beta_star: &[f64]) -> f64 {
    3f64.sqrt() * beta_star.iter().map(|b| b * b).sum::<f64>()
}

/// Dataset for replication `replication_index` of `scenario`.
pub fn generate(scenario: &Scenario, replication_index: usize) -> Result<Dataset> {
    generate_from_stream(scenario, Stream::Replication, replication_index)
}

/// Independent validation dataset `index` of `scenario`.
pub fn generate_validation(scenario: &Scenario, index: usize) -> Result<Dataset> {
    generate_from_stream(scenario, Stream::Validation, index)
}

fn generate_from_stream(scenario: &Scenario, purpose: Stream, index: usize) -> Result<Dataset> {
    let mut rng = stream_rng(scenario.seed, purpose, index as u64);
    let (n, p) = (scenario.n, scenario.p);
    if scenario.beta_star.len() != p {
        return Err(Error::Shape(format!(
            "beta_star has length {} but p = {p}",
            scenario.beta_star.len()
        )));
    }
    let x = Array2::from_shape_simple_fn((n, p), || normal(&mut rng));
    let eps: Vec<f64> = (0..n).map(|_| scenario.error.sample(&mut rng)).collect();
    let beta = Array1::from(scenario.beta_star.clone());
    let signal = x.dot(&beta);
    let y = match scenario.model {
        Model::Homoscedastic => &signal + &Array1::from(eps),
        Model::Heteroscedastic => {
            let c = scenario.hetero_constant();
            Array1::from_shape_fn(n, |i| {
                let s = signal[i];
                if c > 0.0 {
                    s + s * s / c * eps[i]
                } else {
                    s
                }
            })
        }
    };
    Dataset::new(x, y)
}

/// Accuracy of one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub l2: f64,
    pub l1: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// L2 and L1 estimation error plus false positives/negatives, counting
/// `|β̂_j| > zero_tol` as selected.
pub fn compute_metrics(beta_hat: &[f64], beta_star: &[f64], zero_tol: f64) -> Result<Metrics> {
    if beta_hat.len() != beta_star.len() {
        return Err(Error::Shape(format!(
            "estimate has length {} but truth has length {}",
            beta_hat.len(),
            beta_star.len()
        )));
    }
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (&b, &t) in beta_hat.iter().zip(beta_star) {
        let d = b - t;
        sq += d * d;
        abs += d.abs();
        let selected = b.abs() > zero_tol;
        if selected && t == 0.0 {
            fp += 1;
        }
        if !selected && t != 0.0 {
            fn_ += 1;
        }
    }
    Ok(Metrics {
        l2: sq.sqrt(),
        l1: abs,
        fp,
        fn_,
    })
}

/// `(err_method − err_oracle) / (err_ra − err_oracle)`.
pub fn relative_gain(err_method: f64, err_ra: f64, err_oracle: f64) -> Result<f64> {
    let denom = err_ra - err_oracle;
    if !(denom > 0.0) || !err_method.is_finite() {
        return Err(Error::DegenerateGain { err_ra, err_oracle });
    }
    Ok((err_method - err_oracle) / denom)
}

/// Fit `method` at `point`. `support` is used by the oracle only.
pub fn fit_method(
    method: Method,
    data: &Dataset,
    point: GridPoint,
    cfg: &FitConfig,
    support: &[usize],
) -> Result<Array1<f64>> {
    match method.loss(data, point.alpha)? {
        None => fit_oracle(data, support),
        Some(spec) => Ok(composite_gradient_descent(&spec, data.x(), data.y(), &cfg.with_lambda(point.lambda))?.beta),
    }
}

/// Fits at every grid point on one dataset, warm-starting along decreasing
/// λ for each α. Returned in the order of `grid`.
pub(crate) fn fit_grid(
    method: Method,
    data: &Dataset,
    grid: &[GridPoint],
    cfg: &FitConfig,
) -> Result<Vec<Array1<f64>>> {
    let gram = gram_spectral_norm(data.x())?;
    // group by α, each group walked from the largest λ down
    let mut groups: BTreeMap<Option<u64>, Vec<usize>> = BTreeMap::new();
    for (k, pt) in grid.iter().enumerate() {
        groups.entry(pt.alpha.map(f64::to_bits)).or_default().push(k);
    }
    let mut out: Vec<Option<Array1<f64>>> = vec![None; grid.len()];
    for (_, mut idx) in groups {
        idx.sort_by(|&a, &b| grid[b].lambda.total_cmp(&grid[a].lambda));
        let spec = match method.loss(data, grid[idx[0]].alpha)? {
            Some(s) => s,
            None => return invalid("grid fitting needs a penalized method"),
        };
        let gamma = spec.curvature_bound() * gram * (1.0 + GAMMA_MARGIN);
        let mut warm: Option<Array1<f64>> = None;
        for k in idx {
            let fit_cfg = FitConfig {
                lambda: grid[k].lambda,
                gamma_u: GammaU::Fixed(gamma),
                beta0: warm.take(),
                ..cfg.clone()
            };
            let fit = composite_gradient_descent(&spec, data.x(), data.y(), &fit_cfg)?;
            warm = Some(fit.beta.clone());
            out[k] = Some(fit.beta);
        }
    }
    Ok(out.into_iter().map(|b| b.expect("every grid point fitted")).collect())
}

/// Outcome of a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: GridPoint,
    /// Criterion at each grid point, in grid order.
    pub scores: Vec<f64>,
}

fn select_best(grid: &[GridPoint], scores: &[f64]) -> Result<GridPoint> {
    let mut best: Option<usize> = None;
    for k in 0..grid.len() {
        if scores[k].is_nan() {
            continue;
        }
        best = Some(match best {
            None => k,
            Some(b) => {
                let ord = scores[k]
                    .total_cmp(&scores[b])
                    .then_with(|| grid[k].tie_order(&grid[b]));
                if ord.is_lt() {
                    k
                } else {
                    b
                }
            }
        });
    }
    best.map(|k| grid[k])
        .ok_or_else(|| Error::InvalidArgument("no grid point produced a finite score".into()))
}

/// Grid search minimizing the mean `‖β̂ − β*‖₂` over validation datasets
/// produced by `generate(0..n_validation)`. Ties go to the smaller λ, then
/// the smaller α.
pub fn tune_grid<G>(
    generate: G,
    beta_star: &[f64],
    method: Method,
    grid: &[GridPoint],
    n_validation: usize,
    cfg: &FitConfig,
) -> Result<TuneOutcome>
where
    G: Fn(usize) -> Result<Dataset> + Sync,
{
    if grid.is_empty() {
        return invalid("tuning grid is empty");
    }
    if grid.len() == 1 {
        return Ok(TuneOutcome {
            best: grid[0],
            scores: vec![f64::NAN],
        });
    }
    let datasets: Vec<Dataset> = (0..n_validation)
        .into_par_iter()
        .map(&generate)
        .collect::<Result<_>>()?;
    tune_on_datasets(&datasets, beta_star, method, grid, cfg)
}

/// [`tune_grid`] on pre-generated validation datasets.
pub fn tune_on_datasets(
    datasets: &[Dataset],
    beta_star: &[f64],
    method: Method,
    grid: &[GridPoint],
    cfg: &FitConfig,
) -> Result<TuneOutcome> {
    if grid.is_empty() {
        return invalid("tuning grid is empty");
    }
    if datasets.is_empty() {
        return invalid("no validation datasets");
    }
    let per_dataset: Vec<Vec<f64>> = datasets
        .par_iter()
        .map(|d| {
            fit_grid(method, d, grid, cfg)?
                .iter()
                .map(|b| compute_metrics(b.as_slice().expect("contiguous"), beta_star, ZERO_TOL).map(|m| m.l2))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = (0..grid.len())
        .map(|k| {
            let col: Vec<f64> = per_dataset.iter().map(|v| v[k]).collect();
            pairwise_sum(&col) / col.len() as f64
        })
        .collect();
    Ok(TuneOutcome {
        best: select_best(grid, &scores)?,
        scores,
    })
}

/// Held-out prediction loss for cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvLoss {
    Absolute,
    Squared,
}

/// K-fold cross-validation over `grid`: the point minimizing the mean over
/// folds of the held-out mean prediction loss.
pub fn tune_cv(
    data: &Dataset,
    method: Method,
    grid: &[GridPoint],
    k: usize,
    loss: CvLoss,
    seed: u64,
    cfg: &FitConfig,
) -> Result<TuneOutcome> {
    if grid.is_empty() {
        return invalid("tuning grid is empty");
    }
    if !method.is_penalized() {
        return invalid("cross-validation needs a penalized method");
    }
    let folds = kfold_partition(data.n(), k, seed)?;
    if grid.len() == 1 {
        return Ok(TuneOutcome {
            best: grid[0],
            scores: vec![f64::NAN],
        });
    }
    let n = data.n();
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|fold| {
            let train = data.select(&complement(n, fold));
            let test = data.select(fold);
            let fits = fit_grid(method, &train, grid, cfg)?;
            Ok(fits
                .iter()
                .map(|beta| {
                    let pred = test.x().dot(beta);
                    let errs: Vec<f64> = test
                        .y()
                        .iter()
                        .zip(pred.iter())
                        .map(|(y, f)| match loss {
                            CvLoss::Absolute => (y - f).abs(),
                            CvLoss::Squared => (y - f).powi(2),
                        })
                        .collect();
                    pairwise_sum(&errs) / errs.len() as f64
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = (0..grid.len())
        .map(|g| {
            let mut col: Vec<f64> = per_fold.iter().map(|v| v[g]).collect();
            col.sort_by(f64::total_cmp);
            pairwise_sum(&col) / col.len() as f64
        })
        .collect();
    Ok(TuneOutcome {
        best: select_best(grid, &scores)?,
        scores,
    })
}

/// Mean accuracy of one method over all replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub tuned: Option<GridPoint>,
    pub l2: f64,
    pub l1: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

/// Relative gain of RA-Lasso with respect to `versus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSummary {
    pub versus: Method,
    pub l2: Option<f64>,
    pub l1: Option<f64>,
}

/// Aggregated results of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: Scenario,
    pub methods: Vec<MethodSummary>,
    pub gains: Vec<GainSummary>,
    /// Per-replication metrics, `per_replication[r][m]` for `methods[m]`.
    #[serde(skip)]
    pub per_replication: Vec<Vec<Metrics>>,
}

impl MetricsReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == method)
    }

    pub fn gain(&self, versus: Method) -> Option<&GainSummary> {
        self.gains.iter().find(|g| g.versus == versus)
    }
}

/// Tune every penalized method, then fit all methods on each replication.
///
/// Work is spread over the current rayon pool; every random draw comes
/// from a stream fixed by `(seed, purpose, index)` and aggregation runs in
/// index order, so results do not depend on the number of threads.
pub fn run_scenario(scenario: &Scenario) -> Result<MetricsReport> {
    scenario.validate()?;
    let cfg = scenario.solver.fit_config();
    let support = scenario.support();

    let needs_validation = scenario.needs_tuning();
    let validation: Vec<Dataset> = if needs_validation {
        (0..scenario.grid.n_validation)
            .into_par_iter()
            .map(|v| generate_validation(scenario, v))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut tuned: Vec<(Method, Option<GridPoint>)> = Vec::new();
    for &method in &scenario.methods {
        if !method.is_penalized() {
            tuned.push((method, None));
            continue;
        }
        let grid = scenario.grid.points(method);
        let best = if grid.len() == 1 {
            grid[0]
        } else {
            tune_on_datasets(&validation, &scenario.beta_star, method, &grid, &cfg)?.best
        };
        tuned.push((method, Some(best)));
    }

    let per_replication: Vec<Vec<Metrics>> = (0..scenario.replications)
        .into_par_iter()
        .map(|r| {
            let wrap = |e: Error| Error::Replication {
                replication: r,
                seed: scenario.seed,
                source: Box::new(e),
            };
            let data = generate(scenario, r).map_err(wrap)?;
            tuned
                .iter()
                .map(|&(method, point)| {
                    let point = point.unwrap_or(GridPoint {
                        lambda: 0.0,
                        alpha: None,
                    });
                    let beta = fit_method(method, &data, point, &cfg, &support).map_err(wrap)?;
                    compute_metrics(beta.as_slice().expect("contiguous"), &scenario.beta_star, ZERO_TOL)
                })
                .collect::<Result<Vec<Metrics>>>()
        })
        .collect::<Result<_>>()?;

    let mean_of = |m: usize, f: &dyn Fn(&Metrics) -> f64| {
        let vals: Vec<f64> = per_replication.iter().map(|row| f(&row[m])).collect();
        pairwise_sum(&vals) / vals.len() as f64
    };
    let methods: Vec<MethodSummary> = tuned
        .iter()
        .enumerate()
        .map(|(m, &(method, point))| MethodSummary {
            method,
            tuned: point,
            l2: mean_of(m, &|x| x.l2),
            l1: mean_of(m, &|x| x.l1),
            fp: mean_of(m, &|x| x.fp as f64),
            fn_: mean_of(m, &|x| x.fn_ as f64),
        })
        .collect();

    let find = |m: Method| methods.iter().find(|s| s.method == m);
    let mut gains = Vec::new();
    if let (Some(ra), Some(oracle)) = (find(Method::RaLasso), find(Method::Oracle)) {
        for versus in [Method::Lasso, Method::RLasso, Method::CatoniLasso] {
            if let Some(other) = find(versus) {
                gains.push(GainSummary {
                    versus,
                    l2: relative_gain(other.l2, ra.l2, oracle.l2).ok(),
                    l1: relative_gain(other.l1, ra.l1, oracle.l1).ok(),
                });
            }
        }
    }

    Ok(MetricsReport {
        scenario: scenario.clone(),
        methods,
        gains,
        per_replication,
    })
}
