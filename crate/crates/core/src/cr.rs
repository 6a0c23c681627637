//! Partition selection by leave-p-out risk estimation, and the resulting
//! estimator of theta: the empirical height of the selected flat interval.
//!
//! For each partition `I` in a dyadic collection the leave-p-out risk
//!
//! ```text
//! R_p(I) = (2n - p) / ((n-1)(n-p)) * sum_k n_k / (n |I_k|)
//!        - n (n-p+1) / ((n-1)(n-p)) * sum_k (n_k / n)^2 / |I_k|
//! ```
//!
//! is evaluated at the `p` minimizing its mean squared error, with the MSE
//! computed exactly under the multinomial law with plug-in cell
//! probabilities. The partition with the smallest risk is kept, preferring
//! the widest merged cell `[lambda, mu]` among ties.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::{EstimateResult, Method, Trace};
use crate::mixture::PValueSample;
use crate::partition::{enumerate_collection, CrParams, DyadicCounts, HistogramCounts, MomentSet, Partition};

/// Relative tolerance under which two risks (or two MSE values) count as tied.
const TIE_TOL: f64 = 1e-12;

fn check_p(p: usize, n: usize) -> Result<()> {
    if n < 2 || p < 1 || p > n - 1 {
        return Err(Error::PRange { p, n, max: n.saturating_sub(1) });
    }
    Ok(())
}

/// Coefficients `(a, b)` with `R_p = a * sum n_k/(n w_k) - b * sum (n_k/n)^2 / w_k`.
fn lpo_coefficients(n: usize, p: usize) -> (f64, f64) {
    let n = n as f64;
    let p = p as f64;
    let denom = (n - 1.0) * (n - p);
    ((2.0 * n - p) / denom, n * (n - p + 1.0) / denom)
}

/// Leave-p-out estimate of the histogram risk `E[||g_hat||^2 - 2 <g_hat, g>]`.
pub fn lpo_risk(counts: &HistogramCounts, partition: &Partition, p: usize) -> Result<f64> {
    let n = counts.n() as usize;
    check_p(p, n)?;
    if counts.counts().len() != partition.num_cells() {
        return Err(Error::InvalidPartition("counts do not match the partition".into()));
    }
    let (a, b) = lpo_coefficients(n, p);
    let nf = n as f64;
    let (lin, quad) = counts
        .counts()
        .iter()
        .zip(partition.widths())
        .fold((0.0, 0.0), |(lin, quad), (&c, w)| {
            let frac = c as f64 / nf;
            (lin + frac / w, quad + frac * frac / w)
        });
    Ok(a * lin - b * quad)
}

/// Exact mean squared error of `R_p(I)` around `R(I) = -s21 + (s11 - s21)/n`
/// when the counts are multinomial(n, alpha), as a function of `p`.
///
/// Writing `R_p = a X - b Y` with `X = sum c_k n_k`, `Y = sum d_k n_k^2`,
/// `c_k = 1/(n w_k)`, `d_k = 1/(n^2 w_k)`, the MSE is
/// `a^2 Var X - 2ab Cov(X,Y) + b^2 Var Y + bias^2`. The (co)variances come
/// from the multinomial factorial moments up to order four, rearranged so
/// that every leading-order term is a centered sum (no cancellation between
/// terms of order `n^4`).
#[derive(Debug, Clone)]
pub struct LpoMse {
    n: usize,
    var_x: f64,
    cov_xy: f64,
    var_y: f64,
    s11: f64,
    s21: f64,
}

impl LpoMse {
    pub fn new(widths: &[f64], alpha: &[f64], n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::PRange { p: 1, n, max: n.saturating_sub(1) });
        }
        if widths.len() != alpha.len() {
            return Err(Error::InvalidPartition("alpha does not match the partition".into()));
        }
        let nf = n as f64;
        let c: Vec<f64> = widths.iter().map(|w| 1.0 / (nf * w)).collect();
        let d: Vec<f64> = widths.iter().map(|w| 1.0 / (nf * nf * w)).collect();
        let dot = |f: &dyn Fn(usize) -> f64| (0..alpha.len()).map(|k| alpha[k] * f(k)).sum::<f64>();

        let cm = dot(&|k| c[k]);
        let q = dot(&|k| d[k]);
        let pm = dot(&|k| d[k] * alpha[k]);

        let var_x = nf * dot(&|k| (c[k] - cm).powi(2));
        let v1 = dot(&|k| (d[k] * alpha[k] - pm).powi(2));
        let c2 = dot(&|k| (d[k] * alpha[k] - pm) * (d[k] - q));
        let v3 = dot(&|k| (d[k] - q).powi(2));
        let var_y = 4.0 * nf * (nf - 1.0) * (nf - 2.0) * v1
            + 2.0 * nf * (nf - 1.0) * pm * (q - pm)
            + 6.0 * nf * (nf - 1.0) * c2
            + nf * v3;
        let cov_xy = 2.0 * nf * (nf - 1.0) * dot(&|k| (c[k] - cm) * (d[k] * alpha[k] - pm))
            + nf * dot(&|k| (c[k] - cm) * (d[k] - q));

        let s11 = dot(&|k| 1.0 / widths[k]);
        let s21 = dot(&|k| alpha[k] / widths[k]);
        Ok(Self { n, var_x, cov_xy, var_y, s11, s21 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `R(I)`, the target of the risk estimate.
    pub fn risk(&self) -> f64 {
        -self.s21 + (self.s11 - self.s21) / self.n as f64
    }

    pub fn mse(&self, p: usize) -> Result<f64> {
        check_p(p, self.n)?;
        Ok(self.mse_unchecked(p))
    }

    fn mse_unchecked(&self, p: usize) -> f64 {
        let (a, b) = lpo_coefficients(self.n, p);
        let nf = self.n as f64;
        let pf = p as f64;
        // E[R_p] - R(I) in closed form
        let bias = (self.s11 - self.s21) * pf / (nf * (nf - pf));
        let var = a * a * self.var_x - 2.0 * a * b * self.cov_xy + b * b * self.var_y;
        var.max(0.0) + bias * bias
    }

    /// Exhaustive argmin over `p in 1..n`, smallest `p` on ties.
    pub fn argmin(&self) -> usize {
        let mut best_p = 1;
        let mut best = self.mse_unchecked(1);
        for p in 2..self.n {
            let v = self.mse_unchecked(p);
            if v < best * (1.0 - TIE_TOL) {
                best = v;
                best_p = p;
            }
        }
        best_p
    }
}

/// MSE of the leave-p-out risk under multinomial(n, alpha) with `alpha` taken from `alpha_hat`.
pub fn analytic_mse(p: usize, partition: &Partition, alpha_hat: &MomentSet, n: usize) -> Result<f64> {
    LpoMse::new(&partition.widths(), alpha_hat.alpha(), n)?.mse(p)
}

/// Plug-in choice of `p` for one partition.
pub fn select_p(counts: &HistogramCounts, partition: &Partition) -> Result<usize> {
    let n = counts.n() as usize;
    let ms = MomentSet::from_counts(counts, partition, &[])?;
    Ok(LpoMse::new(&partition.widths(), ms.alpha(), n)?.argmin())
}

/// How the leave-p-out size is chosen for each partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMode {
    /// Per-partition argmin of the plug-in MSE.
    Auto,
    /// The same `p` everywhere; `None` means `floor(n / 10)`.
    Fixed(Option<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrConfig {
    pub m_min: u32,
    pub m_max: u32,
    pub right_anchored: bool,
    pub p_mode: PMode,
}

impl Default for CrConfig {
    fn default() -> Self {
        Self { m_min: 2, m_max: 5, right_anchored: false, p_mode: PMode::Auto }
    }
}

/// Leave-p-out risk of one partition at its chosen `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub partition: CrParams,
    pub p: usize,
    pub r_hat_p: f64,
    /// Whether the plug-in moments satisfy the non-degeneracy condition.
    pub condition_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorTrace {
    pub risks: Vec<RiskEstimate>,
    /// Index into `risks` of the selected partition.
    pub chosen: usize,
    /// Number of observations in the closed interval `[lambda_hat, mu_hat]`.
    pub flat_count: u64,
}

impl SelectorTrace {
    pub fn selected(&self) -> &RiskEstimate {
        &self.risks[self.chosen]
    }

    pub fn lambda_hat(&self) -> f64 {
        self.selected().partition.lambda()
    }

    pub fn mu_hat(&self) -> f64 {
        self.selected().partition.mu()
    }

    pub fn m_hat(&self) -> u32 {
        self.selected().partition.m
    }

    pub fn p_hat(&self) -> usize {
        self.selected().p
    }
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Whether `cand` beats `best`: lower risk, then wider `[lambda, mu]`,
/// then smaller `M`, then smaller `lambda`.
fn better(cand: &RiskEstimate, best: &RiskEstimate) -> bool {
    if !tied(cand.r_hat_p, best.r_hat_p) {
        return cand.r_hat_p < best.r_hat_p;
    }
    let (c, b) = (cand.partition, best.partition);
    let (cw, bw) = (c.width(), b.width());
    if cw != bw {
        return cw > bw;
    }
    if c.m != b.m {
        return c.m < b.m;
    }
    c.lambda() < b.lambda()
}

/// Index of the winning entry under [`better`]; `None` on an empty slice.
pub fn select_partition(risks: &[RiskEstimate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in risks.iter().enumerate() {
        match best {
            Some(b) if !better(r, &risks[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

fn evaluate(dyadic: &DyadicCounts, params: CrParams, n: usize, p_mode: PMode) -> Result<RiskEstimate> {
    let partition = Partition::cr(params.m, params.k, params.l)?;
    let counts = dyadic.for_cr(params);
    let ms = MomentSet::from_counts(&counts, &partition, &crate::partition::STANDARD_ORDERS)?;
    let p = match p_mode {
        PMode::Auto => LpoMse::new(&partition.widths(), ms.alpha(), n)?.argmin(),
        PMode::Fixed(Some(p)) => p,
        PMode::Fixed(None) => (n / 10).clamp(1, n - 1),
    };
    let r_hat_p = lpo_risk(&counts, &partition, p)?;
    let condition_ok = crate::partition::technical_condition(&ms)?;
    Ok(RiskEstimate { partition: params, p, r_hat_p, condition_ok })
}

/// Runs the full selection over the collection and returns
/// `#{X_i in [lambda_hat, mu_hat]} / (n (mu_hat - lambda_hat))`, unclamped.
pub fn theta_hat_cr(sample: &PValueSample, config: &CrConfig) -> Result<EstimateResult> {
    let n = sample.n();
    if n < 2 {
        return Err(Error::InvalidSample("the selector needs at least two observations".into()));
    }
    if let PMode::Fixed(Some(p)) = config.p_mode {
        check_p(p, n)?;
    }
    let collection = enumerate_collection(config.m_min, config.m_max, config.right_anchored)?;
    if collection.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let dyadic = DyadicCounts::new(sample, config.m_max);
    let risks = collection
        .par_iter()
        .map(|part| evaluate(&dyadic, part.cr_params().expect("collection partitions are parameterized"), n, config.p_mode))
        .collect::<Result<Vec<_>>>()?;
    let chosen = select_partition(&risks).ok_or(Error::EmptyCollection)?;

    let sel = risks[chosen].partition;
    let (lo, hi) = (sel.lambda(), sel.mu());
    let flat_count = sample.values().iter().filter(|&&x| x >= lo && x <= hi).count() as u64;
    let theta_hat = flat_count as f64 / (n as f64 * (hi - lo));
    Ok(EstimateResult {
        theta_hat,
        method: Method::Cr,
        trace: Trace::Cr(Box::new(SelectorTrace { risks, chosen, flat_count })),
    })
}
