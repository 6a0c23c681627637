//! Fixed-partition histogram density and the minimum-cell estimator.

use crate::estimate::{EstimateResult, Method, Trace};
use crate::mixture::PValueSample;
use crate::partition::{counts, Partition};

/// Piecewise-constant density on a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDensity {
    partition: Partition,
    heights: Vec<f64>,
}

impl StepDensity {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.heights[self.partition.cell_of(x)]
    }

    pub fn mass(&self) -> f64 {
        self.heights.iter().zip(self.partition.widths()).map(|(h, w)| h * w).sum()
    }
}

/// `g_hat(x) = n_k / (n |I_k|)` on cell `k`.
pub fn histogram_density(sample: &PValueSample, partition: &Partition) -> StepDensity {
    let c = counts(sample, partition);
    let n = sample.n() as f64;
    let heights = c
        .counts()
        .iter()
        .zip(partition.widths())
        .map(|(&nk, w)| nk as f64 / (n * w))
        .collect();
    StepDensity { partition: partition.clone(), heights }
}

/// Minimum height of the histogram. Ties go to the smallest cell index;
/// the trace reports that index one-based.
pub fn theta_hat_min(sample: &PValueSample, partition: &Partition) -> EstimateResult {
    let density = histogram_density(sample, partition);
    let (cell, &theta_hat) = density
        .heights()
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, &f64)>, (i, h)| match best {
            Some((_, b)) if *h >= *b => best,
            _ => Some((i, h)),
        })
        .expect("a partition has at least one cell");
    EstimateResult {
        theta_hat,
        method: Method::Hist,
        trace: Trace::Histogram { k_hat: cell + 1, cells: partition.num_cells() },
    }
}
