//! Seeded Monte-Carlo replication: the eight benchmark models, MSE curves
//! over a grid of sample sizes, log-log rate fits, and simulation checks of
//! the histogram risk identities.
//!
//! Replication `r` at size `n` of model `i` draws from a `ChaCha8Rng` seeded
//! with [`derive_seed`]. Replications run in parallel and are reduced in a
//! fixed order, so the report does not depend on the worker count.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cr::{lpo_risk, theta_hat_cr, CrConfig};
use crate::efficiency::{one_step, optimal_variance, DeltaPlugIn};
use crate::error::{Error, Result};
use crate::estimate::Method;
use crate::fmt::sig;
use crate::histogram::theta_hat_min;
use crate::mixture::{MixtureParams, PValueSample};
use crate::partition::{counts, MomentSet, Partition};
use crate::shape::{theta_hat_langaas, theta_hat_oracle, theta_hat_storey};

/// Sample sizes of the full benchmark study.
pub const PAPER_GRID: [usize; 7] = [5000, 7000, 9000, 10000, 12000, 14000, 15000];

/// Smaller grid for quick runs.
pub const DESK_GRID: [usize; 4] = [1000, 2000, 4000, 8000];

pub const DEFAULT_REPS: usize = 100;

/// `(label, s, theta, delta)` for the eight benchmark models.
pub const MODEL_TABLE: [(&str, f64, f64, f64); 8] = [
    ("a1", 3.0, 0.6, 0.3),
    ("b1", 3.0, 0.8, 0.3),
    ("c1", 1.4, 0.7, 0.3),
    ("d1", 1.4, 0.9, 0.3),
    ("a2", 3.0, 0.6, 0.0),
    ("b2", 3.0, 0.8, 0.0),
    ("c2", 1.4, 0.7, 0.0),
    ("d2", 1.4, 0.9, 0.0),
];

/// Seed index used by parameter sets outside the table.
const CUSTOM_INDEX: u64 = 8;
/// Seed index of the lemma checks.
const LEMMA_INDEX: u64 = 15;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `r` at size `n` for model `model_index`.
///
/// The triple is packed as `model_index << 60 | n << 24 | r`, xored with
/// `splitmix64(base_seed)` and passed through the splitmix64 finalizer.
/// Every step is a bijection on `u64`, so distinct triples get distinct
/// seeds as long as `model_index < 16`, `n < 2^36` and `r < 2^24`.
pub fn derive_seed(base_seed: u64, model_index: u64, n: u64, r: u64) -> u64 {
    debug_assert!(model_index < 16 && n < (1 << 36) && r < (1 << 24));
    let key = (model_index << 60) | (n << 24) | r;
    splitmix64(key ^ splitmix64(base_seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    label: &'static str,
    index: u64,
    params: MixtureParams,
}

impl ModelSpec {
    pub fn from_label(label: &str) -> Result<Self> {
        let (i, &(name, s, theta, delta)) = MODEL_TABLE
            .iter()
            .enumerate()
            .find(|(_, m)| m.0 == label)
            .ok_or_else(|| Error::Config(format!("unknown model label '{label}' (expected a1..d1 or a2..d2)")))?;
        Ok(Self { label: name, index: i as u64, params: MixtureParams::new(theta, delta, s)? })
    }

    /// Parameters equal to a table entry take that entry's label and seeds.
    pub fn from_params(params: MixtureParams) -> Self {
        let hit = MODEL_TABLE.iter().enumerate().find(|(_, &(_, s, t, d))| {
            s == params.shape() && t == params.theta() && d == params.delta()
        });
        match hit {
            Some((i, &(name, ..))) => Self { label: name, index: i as u64, params },
            None => Self { label: "custom", index: CUSTOM_INDEX, params },
        }
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn params(&self) -> &MixtureParams {
        &self.params
    }
}

/// Tuning of the estimators inside a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSettings {
    /// Cells of the regular partition used by the minimum-height estimator.
    pub hist_cells: usize,
    pub cr: CrConfig,
    pub storey_lambda: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self { hist_cells: 8, cr: CrConfig { right_anchored: true, ..CrConfig::default() }, storey_lambda: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub base_seed: u64,
    pub estimators: BTreeSet<Method>,
    pub settings: EstimatorSettings,
}

impl SimConfig {
    pub fn new(model: ModelSpec, n_grid: Vec<usize>, reps: usize, base_seed: u64, estimators: &[Method]) -> Self {
        Self {
            model,
            n_grid,
            reps,
            base_seed,
            estimators: estimators.iter().copied().collect(),
            settings: EstimatorSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.reps >= 1 << 24 {
            return Err(Error::Config(format!("reps = {} must lie in 1..2^24", self.reps)));
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("the n grid is empty".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("the n grid must be strictly ascending".into()));
        }
        if self.n_grid[0] == 0 || *self.n_grid.last().unwrap() >= 1 << 36 {
            return Err(Error::Config("sample sizes must lie in 1..2^36".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators requested".into()));
        }
        Partition::regular(self.settings.hist_cells)?;
        Ok(())
    }
}

/// Monte-Carlo summary of one estimator at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub estimator: Method,
    pub n: usize,
    /// `None` when every replication failed.
    pub mse: Option<f64>,
    /// Population variance (divisor = number of successful replications).
    pub variance: Option<f64>,
    pub bias: Option<f64>,
    pub successes: usize,
    pub failures: usize,
}

/// OLS fit of `log mse` on `log n` for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub estimator: Method,
    /// `None` with fewer than two usable cells.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub model: ModelSpec,
    pub reps: usize,
    /// Ordered by estimator, then `n`.
    pub cells: Vec<CellResult>,
    pub fits: Vec<RateFit>,
    pub ref_slope: f64,
    /// `log(theta (1/delta - theta))`; `None` when `delta = 0`.
    pub ref_intercept: Option<f64>,
}

pub const CSV_HEADER: &str = "model,estimator,n,mse,variance,bias,slope,intercept,ref_slope,ref_intercept";

impl SimReport {
    pub fn cell(&self, estimator: Method, n: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.estimator == estimator && c.n == n)
    }

    pub fn fit(&self, estimator: Method) -> Option<&RateFit> {
        self.fits.iter().find(|f| f.estimator == estimator)
    }

    /// One row per (estimator, n); missing values are empty fields.
    pub fn to_csv(&self, digits: usize) -> String {
        let num = |x: Option<f64>| x.map(|v| sig(v, digits)).unwrap_or_default();
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            let fit = self.fit(c.estimator).expect("every estimator has a fit entry");
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                self.model.label(),
                c.estimator,
                c.n,
                num(c.mse),
                num(c.variance),
                num(c.bias),
                num(fit.slope),
                num(fit.intercept),
                sig(self.ref_slope, digits),
                num(self.ref_intercept),
            )
            .unwrap();
        }
        out
    }

    /// Fixed-width table of the rate fits, one line per estimator.
    pub fn summary(&self, digits: usize) -> String {
        let num = |x: Option<f64>| x.map(|v| sig(v, digits)).unwrap_or_else(|| "-".into());
        let mut out = format!(
            "model {} (theta={}, delta={}, s={}), reps={}\n",
            self.model.label(),
            sig(self.model.params().theta(), digits),
            sig(self.model.params().delta(), digits),
            sig(self.model.params().shape(), digits),
            self.reps
        );
        writeln!(out, "{:<10} {:>14} {:>14} {:>10} {:>14} {:>9}", "estimator", "slope", "intercept", "ref_slope", "ref_intercept", "failures")
            .unwrap();
        for f in &self.fits {
            let failures: usize = self.cells.iter().filter(|c| c.estimator == f.estimator).map(|c| c.failures).sum();
            writeln!(
                out,
                "{:<10} {:>14} {:>14} {:>10} {:>14} {:>9}",
                f.estimator.as_str(),
                num(f.slope),
                num(f.intercept),
                sig(self.ref_slope, digits),
                num(self.ref_intercept),
                failures
            )
            .unwrap();
        }
        out
    }
}

/// Ordinary least squares of `log mse` on `log n`.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Config("a log-log fit needs at least two points".into()));
    }
    if let Some(&(_, m)) = points.iter().find(|(_, m)| !(*m > 0.0)) {
        return Err(Error::NonPositiveMse(m));
    }
    if let Some(&(n, _)) = points.iter().find(|(n, _)| !(*n > 0.0)) {
        return Err(Error::Config(format!("sample size {n} must be positive")));
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("a log-log fit needs at least two distinct sample sizes".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn run_estimator(method: Method, sample: &PValueSample, params: &MixtureParams, settings: &EstimatorSettings) -> Result<f64> {
    let est = match method {
        Method::Hist => theta_hat_min(sample, &Partition::regular(settings.hist_cells)?),
        Method::Cr => theta_hat_cr(sample, &settings.cr)?,
        Method::Storey => theta_hat_storey(sample, settings.storey_lambda)?,
        Method::Langaas => theta_hat_langaas(sample)?,
        Method::Oracle => theta_hat_oracle(sample, params.delta())?,
        Method::OneStep => {
            let pilot = theta_hat_cr(sample, &settings.cr)?.theta_hat;
            let mesh = 1.0 / (sample.n() as f64).sqrt();
            let init = if pilot.is_finite() { pilot.clamp(mesh, 1.0 - mesh) } else { 0.5 };
            one_step(sample, init, DeltaPlugIn::CrossFit(settings.cr))?
        }
    };
    Ok(est.theta_hat)
}

fn summarize(estimator: Method, n: usize, theta: f64, values: &[Option<f64>]) -> CellResult {
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    let failures = values.len() - ok.len();
    if ok.is_empty() {
        return CellResult { estimator, n, mse: None, variance: None, bias: None, successes: 0, failures };
    }
    let k = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / k;
    let variance = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    let mse = ok.iter().map(|v| (v - theta).powi(2)).sum::<f64>() / k;
    CellResult {
        estimator,
        n,
        mse: Some(mse),
        variance: Some(variance),
        bias: Some(mean - theta),
        successes: ok.len(),
        failures,
    }
}

/// Runs the study on the current rayon pool.
pub fn run_simulation(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let params = *config.model.params();
    let methods: Vec<Method> = config.estimators.iter().copied().collect();
    let jobs: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.reps).map(move |r| (n, r)))
        .collect();

    // outcomes[j][e]: estimate of method e on replication j
    let outcomes: Vec<Vec<Option<f64>>> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let seed = derive_seed(config.base_seed, config.model.index(), n as u64, r as u64);
            let sample = params.sample(n, seed).expect("validated n >= 1");
            methods
                .iter()
                .map(|&m| run_estimator(m, &sample, &params, &config.settings).ok().filter(|v| v.is_finite()))
                .collect()
        })
        .collect();

    let theta = params.theta();
    let mut cells = Vec::with_capacity(methods.len() * config.n_grid.len());
    let mut fits = Vec::with_capacity(methods.len());
    for (e, &method) in methods.iter().enumerate() {
        let mut points = Vec::new();
        for (i, &n) in config.n_grid.iter().enumerate() {
            let slice = &outcomes[i * config.reps..(i + 1) * config.reps];
            let values: Vec<Option<f64>> = slice.iter().map(|row| row[e]).collect();
            let cell = summarize(method, n, theta, &values);
            if let Some(m) = cell.mse.filter(|&m| m > 0.0) {
                points.push((n as f64, m));
            }
            cells.push(cell);
        }
        let fit = loglog_fit(&points).ok();
        fits.push(RateFit { estimator: method, slope: fit.map(|f| f.0), intercept: fit.map(|f| f.1) });
    }

    let ref_intercept = match optimal_variance(theta, params.delta())? {
        v if v.is_finite() => Some(v.ln()),
        _ => None,
    };
    Ok(SimReport { model: config.model, reps: config.reps, cells, fits, ref_slope: -1.0, ref_intercept })
}

/// Runs the study on a dedicated pool of `jobs` threads (all cores when `None`).
pub fn run_simulation_with_jobs(config: &SimConfig, jobs: Option<usize>) -> Result<SimReport> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_simulation(config))
}

/// Data-generating law for the lemma checks. `Uniform` is the `theta = 1`
/// case, which [`MixtureParams`] excludes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truth {
    Uniform,
    Mixture(MixtureParams),
}

impl Truth {
    fn sample(&self, n: usize, seed: u64) -> PValueSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Truth::Uniform => PValueSample::new((0..n).map(|_| rng.random::<f64>()).collect()).expect("uniform draws lie in [0, 1)"),
            Truth::Mixture(p) => p.sample_with(n, &mut rng),
        }
    }

    fn moments(&self, partition: &Partition) -> Result<MomentSet> {
        let orders = crate::partition::STANDARD_ORDERS;
        match self {
            Truth::Uniform => MomentSet::from_alpha(partition, partition.widths(), &orders),
            Truth::Mixture(p) => MomentSet::from_params(partition, p, &orders),
        }
    }

    /// `||g||_2^2`.
    pub fn l2_norm_sq(&self) -> f64 {
        match self {
            Truth::Uniform => 1.0,
            Truth::Mixture(p) => p.mixture_l2_norm_sq(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Check {
    /// Mean of `||g_hat_I - g_I||^2` over the replications.
    pub empirical: f64,
    /// `(s11 - s21) / n` from the true cell probabilities.
    pub exact: f64,
    /// Standard error of `empirical`.
    pub std_error: f64,
}

/// Mean squared L2 distance between the histogram and the projection of
/// `g` on the partition, against its exact expectation.
pub fn lemma1_check(partition: &Partition, truth: Truth, n: usize, reps: usize, seed: u64) -> Result<Lemma1Check> {
    if n == 0 || reps < 2 {
        return Err(Error::Config("lemma check needs n >= 1 and reps >= 2".into()));
    }
    let ms = truth.moments(partition)?;
    let alpha = ms.alpha().to_vec();
    let widths = partition.widths();
    let nf = n as f64;
    let draws: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let sample = truth.sample(n, derive_seed(seed, LEMMA_INDEX, n as u64, r as u64));
            let c = counts(&sample, partition);
            c.counts()
                .iter()
                .zip(&alpha)
                .zip(&widths)
                .map(|((&nk, a), w)| (nk as f64 / nf - a).powi(2) / w)
                .sum()
        })
        .collect();
    let (mean, var) = mean_and_var(&draws);
    Ok(Lemma1Check {
        empirical: mean,
        exact: (ms.s(1, 1)? - ms.s(2, 1)?) / nf,
        std_error: (var / reps as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma2Check {
    /// Sample variance of `sqrt(n) (L_hat_p - L)` over the replications.
    pub empirical_var: f64,
    /// `4 (s32 - s21^2)`.
    pub target: f64,
    /// Largest deviation, over replications, of
    /// `sqrt(n)(L_hat_p - L) - sqrt(n)(R_hat_p - R)` from `(s11 - s21)/sqrt(n)`.
    pub max_identity_error: f64,
}

/// Variance of the centered, rescaled leave-p-out criterion
/// `L_hat_p = R_hat_p + ||g||^2` around `L = ||g||^2 - s21`.
pub fn lemma2_check(partition: &Partition, truth: Truth, p: usize, n: usize, reps: usize, seed: u64) -> Result<Lemma2Check> {
    if n < 2 || reps < 2 {
        return Err(Error::Config("lemma check needs n >= 2 and reps >= 2".into()));
    }
    if p < 1 || p >= n {
        return Err(Error::PRange { p, n, max: n - 1 });
    }
    let ms = truth.moments(partition)?;
    let (s11, s21, s32) = (ms.s(1, 1)?, ms.s(2, 1)?, ms.s(3, 2)?);
    let norm = truth.l2_norm_sq();
    let l_true = norm - s21;
    let nf = n as f64;
    let root = nf.sqrt();
    let r_true = -s21 + (s11 - s21) / nf;
    let shift = (s11 - s21) / root;

    let draws: Vec<Result<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let sample = truth.sample(n, derive_seed(seed, LEMMA_INDEX, n as u64, r as u64));
            let r_hat = lpo_risk(&counts(&sample, partition), partition, p)?;
            let l_scaled = root * (r_hat + norm - l_true);
            let r_scaled = root * (r_hat - r_true);
            Ok((l_scaled, (l_scaled - r_scaled - shift).abs()))
        })
        .collect();
    let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
    let scaled: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let (_, var) = mean_and_var(&scaled);
    Ok(Lemma2Check {
        empirical_var: var,
        target: 4.0 * (s32 - s21 * s21),
        max_identity_error: draws.iter().map(|d| d.1).fold(0.0, f64::max),
    })
}

/// Mean and unbiased variance.
fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var)
}
