//! Comparator estimators: Grenander-based (Langaas), Storey's threshold
//! estimator and the oracle efficient estimator.

use crate::error::{Error, Result};
use crate::estimate::{EstimateResult, Method, Trace};
use crate::mixture::PValueSample;

/// Grenander estimator of a nonincreasing density: the left derivative of
/// the least concave majorant of the empirical cdf.
///
/// `slopes[i]` is the density on `(knots[i], knots[i + 1]]`. P-values equal
/// to zero are kept as a point mass `atom` at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct GrenanderFit {
    pub knots: Vec<f64>,
    pub slopes: Vec<f64>,
    pub atom: f64,
}

impl GrenanderFit {
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.knots[0] {
            return self.slopes.first().copied().unwrap_or(0.0);
        }
        // segment i covers (knots[i], knots[i+1]]
        let i = self.knots.partition_point(|&k| k < x).saturating_sub(1);
        self.slopes[i.min(self.slopes.len() - 1)]
    }

    /// Value of the majorant (cdf estimate) at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = self.atom;
        for (w, s) in self.knots.windows(2).zip(&self.slopes) {
            if x >= w[1] {
                acc += s * (w[1] - w[0]);
            } else {
                if x > w[0] {
                    acc += s * (x - w[0]);
                }
                break;
            }
        }
        acc
    }

    pub fn mass(&self) -> f64 {
        self.atom + self.knots.windows(2).zip(&self.slopes).map(|(w, s)| s * (w[1] - w[0])).sum::<f64>()
    }
}

/// Vertices of the empirical cdf: `(0, F(0))`, `(x, F(x))` at each distinct
/// observation, and `(1, 1)`.
pub(crate) fn ecdf_points(sample: &PValueSample) -> Vec<(f64, f64)> {
    let xs = sample.sorted();
    let n = xs.len() as f64;
    let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for (i, &x) in xs.iter().enumerate() {
        let y = (i + 1) as f64 / n;
        match pts.last_mut() {
            Some(last) if last.0 == x => last.1 = y,
            _ => pts.push((x, y)),
        }
    }
    if pts.last().unwrap().0 < 1.0 {
        pts.push((1.0, 1.0));
    }
    pts
}

/// Whether `b` lies on or below the chord from `a` to `c`, with collinearity
/// decided up to rounding.
fn not_above(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let (u, v) = ((b.0 - a.0, b.1 - a.1), (c.0 - a.0, c.1 - a.1));
    let cross = u.0 * v.1 - u.1 * v.0;
    let scale = (u.0.abs() + u.1.abs()) * (v.0.abs() + v.1.abs());
    cross >= -1e-12 * scale
}

pub fn grenander(sample: &PValueSample) -> GrenanderFit {
    let pts = ecdf_points(sample);
    let atom = pts[0].1;
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for &p in &pts {
        // drop vertices on or below the chord from their left neighbour to p
        while hull.len() >= 2 && not_above(hull[hull.len() - 2], hull[hull.len() - 1], p) {
            hull.pop();
        }
        hull.push(p);
    }
    let knots = hull.iter().map(|p| p.0).collect();
    let slopes = hull.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    GrenanderFit { knots, slopes, atom }
}

/// Grenander density read at the largest p-value, i.e. the slope of the
/// majorant segment ending there.
pub fn theta_hat_langaas(sample: &PValueSample) -> Result<EstimateResult> {
    let fit = grenander(sample);
    let x_max = sample.values().iter().copied().fold(0.0, f64::max);
    if x_max == 0.0 {
        return Err(Error::InvalidSample("all p-values are zero".into()));
    }
    let j = fit.knots.iter().position(|&k| k == x_max).expect("the largest observation is a hull vertex");
    Ok(EstimateResult {
        theta_hat: fit.slopes[j - 1],
        method: Method::Langaas,
        trace: Trace::Langaas { x_max },
    })
}

fn count_tail(sample: &PValueSample, threshold: f64, closed: bool) -> usize {
    sample.values().iter().filter(|&&x| if closed { x >= threshold } else { x > threshold }).count()
}

/// `#{X_i > lambda} / (n (1 - lambda))`.
pub fn theta_hat_storey(sample: &PValueSample, lambda: f64) -> Result<EstimateResult> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::OutOfRange { name: "lambda", value: lambda, range: "(0, 1)" });
    }
    let k = count_tail(sample, lambda, false);
    Ok(EstimateResult {
        theta_hat: k as f64 / (sample.n() as f64 * (1.0 - lambda)),
        method: Method::Storey,
        trace: Trace::Storey { lambda },
    })
}

/// Mean of `(1/delta) 1{X_i in [1 - delta, 1]}`, the estimator whose
/// influence function is the efficient one.
///
/// The width is computed as `1 - (1 - delta)` so that the result agrees bit
/// for bit with `theta_hat_storey(sample, 1 - delta)` whenever no
/// observation sits exactly on the threshold.
pub fn theta_hat_oracle(sample: &PValueSample, delta: f64) -> Result<EstimateResult> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::OutOfRange { name: "delta", value: delta, range: "(0, 1)" });
    }
    let lambda = 1.0 - delta;
    let k = count_tail(sample, lambda, true);
    Ok(EstimateResult {
        theta_hat: k as f64 / (sample.n() as f64 * (1.0 - lambda)),
        method: Method::Oracle,
        trace: Trace::Oracle { delta },
    })
}
