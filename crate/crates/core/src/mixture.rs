//! The two-component p-value mixture `g(x) = theta + (1 - theta) f(x)` with
//! the alternative density
//!
//! ```text
//! f(x) = s / (1 - delta) * (1 - x / (1 - delta))^(s - 1)   on [0, 1 - delta]
//! ```
//!
//! and zero on `(1 - delta, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureParams {
    theta: f64,
    delta: f64,
    shape: f64,
}

impl MixtureParams {
    pub fn new(theta: f64, delta: f64, shape: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParams(format!("theta = {theta} must lie in (0, 1)")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParams(format!("delta = {delta} must lie in [0, 1)")));
        }
        if !(shape > 1.0 && shape.is_finite()) {
            return Err(Error::InvalidParams(format!("shape s = {shape} must be > 1")));
        }
        Ok(Self { theta, delta, shape })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// Right end of the support of `f`.
    pub fn support_end(&self) -> f64 {
        1.0 - self.delta
    }

    pub fn alt_density(&self, x: f64) -> Result<f64> {
        check_unit("alt_density", x)?;
        Ok(self.alt_density_unchecked(x))
    }

    pub(crate) fn alt_density_unchecked(&self, x: f64) -> f64 {
        let end = self.support_end();
        if x > end {
            return 0.0;
        }
        self.shape / end * (1.0 - x / end).max(0.0).powf(self.shape - 1.0)
    }

    pub fn mixture_density(&self, x: f64) -> Result<f64> {
        check_unit("mixture_density", x)?;
        Ok(self.mixture_density_unchecked(x))
    }

    pub(crate) fn mixture_density_unchecked(&self, x: f64) -> f64 {
        self.theta + (1.0 - self.theta) * self.alt_density_unchecked(x)
    }

    /// Cdf of the alternative component.
    pub fn alt_cdf(&self, x: f64) -> Result<f64> {
        check_unit("alt_cdf", x)?;
        Ok(self.alt_cdf_unchecked(x))
    }

    pub(crate) fn alt_cdf_unchecked(&self, x: f64) -> f64 {
        let end = self.support_end();
        if x >= end {
            1.0
        } else {
            1.0 - (1.0 - x / end).powf(self.shape)
        }
    }

    /// `G(x) = theta x + (1 - theta) F(x)`.
    pub fn mixture_cdf(&self, x: f64) -> Result<f64> {
        check_unit("mixture_cdf", x)?;
        Ok(self.mixture_cdf_unchecked(x))
    }

    pub(crate) fn mixture_cdf_unchecked(&self, x: f64) -> f64 {
        self.theta * x + (1.0 - self.theta) * self.alt_cdf_unchecked(x)
    }

    /// Inverse of the alternative cdf, `u in [0, 1)` maps onto `[0, 1 - delta)`.
    pub fn alt_quantile(&self, u: f64) -> f64 {
        self.support_end() * (1.0 - (1.0 - u).powf(1.0 / self.shape))
    }

    /// Closed form of `||g||_2^2`.
    pub fn mixture_l2_norm_sq(&self) -> f64 {
        let t = self.theta;
        let s = self.shape;
        let f_sq = s * s / (self.support_end() * (2.0 * s - 1.0));
        t * t + 2.0 * t * (1.0 - t) + (1.0 - t) * (1.0 - t) * f_sq
    }

    /// Draws `n` iid p-values, deterministic in `(n, self, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<PValueSample> {
        if n == 0 {
            return Err(Error::InvalidSample("sample size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.sample_with(n, &mut rng))
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PValueSample {
        let values = (0..n)
            .map(|_| {
                let null = rng.random::<f64>() < self.theta;
                let u = rng.random::<f64>();
                if null {
                    u
                } else {
                    self.alt_quantile(u)
                }
            })
            .collect();
        PValueSample { values }
    }
}

fn check_unit(what: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain { what, value: x })
    }
}

/// A nonempty vector of p-values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueSample {
    values: Vec<f64>,
}

impl PValueSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSample("sample is empty".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidSample(format!("value {v} at index {i} is outside [0, 1]")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Splits into `values[..at]` and `values[at..]`; `None` if either side would be empty.
    pub fn split_at(&self, at: usize) -> Option<(PValueSample, PValueSample)> {
        if at == 0 || at >= self.values.len() {
            return None;
        }
        let (a, b) = self.values.split_at(at);
        Some((PValueSample { values: a.to_vec() }, PValueSample { values: b.to_vec() }))
    }

    /// Ascending copy of the values.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

const MEMBERSHIP_TOL: f64 = 1e-6;

/// Checks whether a gridded function belongs to the class of continuous,
/// nonincreasing densities that are positive on `[0, 1 - delta)` and vanish
/// on `[1 - delta, 1]`.
///
/// The grid must be sorted by `x`, start at 0 and end at 1.
pub fn class_membership_check(grid: &[(f64, f64)], delta: f64) -> Result<bool> {
    if grid.len() < 2 {
        return Err(Error::MalformedGrid("need at least two grid points".into()));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::OutOfRange { name: "delta", value: delta, range: "[0, 1)" });
    }
    for (i, &(x, y)) in grid.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::MalformedGrid(format!("abscissa {x} at index {i} is outside [0, 1]")));
        }
        if !y.is_finite() {
            return Err(Error::MalformedGrid(format!("value at index {i} is not finite")));
        }
        if i > 0 && x <= grid[i - 1].0 {
            return Err(Error::MalformedGrid(format!("abscissae not strictly increasing at index {i}")));
        }
    }
    if grid[0].0 != 0.0 || grid[grid.len() - 1].0 != 1.0 {
        return Err(Error::MalformedGrid("grid must cover [0, 1]".into()));
    }

    let end = 1.0 - delta;
    let edge = 1e-12;
    let nonincreasing = grid.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12);
    let positive_before = grid.iter().filter(|(x, _)| *x < end - edge).all(|(_, y)| *y > 0.0);
    let zero_after = grid.iter().filter(|(x, _)| *x >= end - edge).all(|(_, y)| y.abs() <= 1e-12);
    let mass: f64 = grid.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();

    Ok(nonincreasing && positive_before && zero_after && (mass - 1.0).abs() < MEMBERSHIP_TOL)
}
