//! Efficient score, information and influence function for theta when the
//! alternative density vanishes on `[1 - delta, 1]`, and the cross-fitted
//! one-step estimator built on a plug-in score.

use crate::cr::{theta_hat_cr, CrConfig, SelectorTrace};
use crate::error::{Error, Result};
use crate::estimate::{EstimateResult, Method, Trace};
use crate::mixture::PValueSample;

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange { name: "theta", value: theta, range: "(0, 1)" })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::OutOfRange { name: "delta", value: delta, range: "[0, 1)" })
    }
}

fn check_args(x: f64, theta: f64, delta: f64) -> Result<()> {
    check_theta(theta)?;
    check_delta(delta)?;
    if delta == 0.0 {
        return Err(Error::ZeroInformation);
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain { what: "efficient score", value: x });
    }
    Ok(())
}

/// `1/theta - 1{x < 1 - delta} / (theta (1 - theta delta))`.
pub fn efficient_score(x: f64, theta: f64, delta: f64) -> Result<f64> {
    check_args(x, theta, delta)?;
    Ok(score_unchecked(x, theta, delta))
}

fn score_unchecked(x: f64, theta: f64, delta: f64) -> f64 {
    let base = 1.0 / theta;
    if x < 1.0 - delta {
        base - 1.0 / (theta * (1.0 - theta * delta))
    } else {
        base
    }
}

/// `delta / (theta (1 - theta delta))`; zero when `delta = 0`.
pub fn efficient_information(theta: f64, delta: f64) -> Result<f64> {
    check_theta(theta)?;
    check_delta(delta)?;
    Ok(delta / (theta * (1.0 - theta * delta)))
}

/// `(1/delta) 1{x >= 1 - delta} - theta`.
pub fn efficient_influence(x: f64, theta: f64, delta: f64) -> Result<f64> {
    check_args(x, theta, delta)?;
    Ok(if x >= 1.0 - delta { 1.0 / delta - theta } else { -theta })
}

/// Lower bound `theta (1/delta - theta)` on the asymptotic quadratic risk of
/// `sqrt(n)(theta_hat - theta)`; infinite when `delta = 0`.
pub fn optimal_variance(theta: f64, delta: f64) -> Result<f64> {
    check_theta(theta)?;
    check_delta(delta)?;
    if delta == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(theta * (1.0 / delta - theta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyQuantities {
    pub theta: f64,
    pub delta: f64,
    pub information: f64,
}

impl EfficiencyQuantities {
    pub fn new(theta: f64, delta: f64) -> Result<Self> {
        check_args(0.0, theta, delta)?;
        Ok(Self { theta, delta, information: efficient_information(theta, delta)? })
    }

    pub fn score(&self, x: f64) -> f64 {
        score_unchecked(x, self.theta, self.delta)
    }

    pub fn influence(&self, x: f64) -> f64 {
        if x >= 1.0 - self.delta {
            1.0 / self.delta - self.theta
        } else {
            -self.theta
        }
    }

    pub fn optimal_variance(&self) -> f64 {
        self.theta * (1.0 / self.delta - self.theta)
    }
}

/// Plug-in estimate of `delta` from a right-anchored selection.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaEstimate {
    pub delta: f64,
    pub lambda_hat: f64,
    pub m_hat: u32,
    /// The first cell is not significantly denser than the selected flat
    /// cell, so the data show no alternative component to locate.
    pub low_confidence: bool,
    pub selector: SelectorTrace,
}

/// `delta_hat = 1 - lambda_hat` from the right-anchored collection (the
/// `right_anchored` field of `config` is overridden).
pub fn delta_hat(sample: &PValueSample, config: &CrConfig) -> Result<DeltaEstimate> {
    let cfg = CrConfig { right_anchored: true, ..*config };
    let est = theta_hat_cr(sample, &cfg)?;
    let Trace::Cr(trace) = est.trace else {
        unreachable!("the selector always returns its own trace")
    };
    let sel = trace.selected().partition;
    let n = sample.n() as f64;
    let first_width = 1.0 / sel.m as f64;
    let first = sample.values().iter().filter(|&&x| x < first_width).count() as f64;
    let first_height = first / (n * first_width);
    let flat_height = est.theta_hat;
    let se = (first_height / (n * first_width) + flat_height / (n * sel.width())).sqrt();
    Ok(DeltaEstimate {
        delta: 1.0 - sel.lambda(),
        lambda_hat: sel.lambda(),
        m_hat: sel.m,
        low_confidence: !(first_height - flat_height > 2.0 * se),
        selector: *trace,
    })
}

/// Source of `delta` in the plug-in score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaPlugIn {
    /// Same known (or externally estimated) value for both folds.
    Fixed(f64),
    /// Re-estimated on each half and applied to the other half.
    CrossFit(CrConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneStepTrace {
    pub theta_init: f64,
    /// `theta_init` rounded to the grid of mesh `n^{-1/2}`.
    pub theta_grid: f64,
    /// Delta used to score the first half (estimated on the second half when cross-fitting).
    pub delta_first: f64,
    /// Delta used to score the second half.
    pub delta_second: f64,
    pub score_sum: f64,
    pub score_sq_sum: f64,
    /// A fold had all its points on one side of its threshold; `theta_init` was returned.
    pub fallback: bool,
}

/// One Newton-Raphson step from `theta_init` on the estimated score
/// equation, with the score for each half of the sample built from the
/// other half:
///
/// ```text
/// theta_tilde = theta_grid + sum_i l_i(X_i) / sum_i l_i(X_i)^2
/// ```
///
/// The plus sign follows from `E[d l / d theta] = -E[l^2]`.
pub fn one_step(sample: &PValueSample, theta_init: f64, delta: DeltaPlugIn) -> Result<EstimateResult> {
    let n = sample.n();
    if n < 4 {
        return Err(Error::InvalidSample("the one-step estimator needs at least four observations".into()));
    }
    check_theta(theta_init)?;
    let root = (n as f64).sqrt();
    let mesh = 1.0 / root;
    let theta_grid = ((theta_init * root).round() * mesh).clamp(mesh, 1.0 - mesh);

    let m = n / 2;
    let (first, second) = sample.split_at(m).expect("n >= 4 leaves both halves nonempty");
    let (delta_first, delta_second) = match delta {
        DeltaPlugIn::Fixed(d) => {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::OutOfRange { name: "delta", value: d, range: "(0, 1)" });
            }
            (d, d)
        }
        DeltaPlugIn::CrossFit(cfg) => (delta_hat(&second, &cfg)?.delta, delta_hat(&first, &cfg)?.delta),
    };

    let mut score_sum = 0.0;
    let mut score_sq_sum = 0.0;
    let mut degenerate = false;
    for (fold, d) in [(&first, delta_first), (&second, delta_second)] {
        let threshold = 1.0 - d;
        let above = fold.values().iter().filter(|&&x| x >= threshold).count();
        if above == 0 || above == fold.n() {
            degenerate = true;
        }
        for &x in fold.values() {
            let l = score_unchecked(x, theta_grid, d);
            score_sum += l;
            score_sq_sum += l * l;
        }
    }

    let theta_hat = if degenerate { theta_init } else { theta_grid + score_sum / score_sq_sum };
    Ok(EstimateResult {
        theta_hat,
        method: Method::OneStep,
        trace: Trace::OneStep(OneStepTrace {
            theta_init,
            theta_grid,
            delta_first,
            delta_second,
            score_sum,
            score_sq_sum,
            fallback: degenerate,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::theta_hat_min;
    use crate::mixture::MixtureParams;
    use crate::partition::Partition;
    use crate::quadrature::{integrate_pieces, TOLERANCE};

    const A1: (f64, f64) = (0.6, 0.3);

    #[test]
    fn score_values() {
        let (t, d) = A1;
        assert!((efficient_score(0.9, t, d).unwrap() - 1.0 / 0.6).abs() < 1e-12);
        let low = efficient_score(0.2, t, d).unwrap();
        assert!((low - (1.0 / 0.6 - 1.0 / 0.492)).abs() < 1e-12);
        assert!((low - -0.365854).abs() < 1e-6);
        assert!((0.82 * low + 0.18 / 0.6).abs() < 1e-12);
        assert_eq!(efficient_score(0.2, t, 0.0), Err(Error::ZeroInformation));
        assert!(efficient_score(1.2, t, d).is_err());
        assert!(efficient_score(0.2, 1.0, d).is_err());
    }

    #[test]
    fn information_values() {
        let (t, d) = A1;
        let info = efficient_information(t, d).unwrap();
        assert!((info - 0.609756).abs() < 1e-6);
        assert!((1.0 / info - 1.64).abs() < 1e-12);
        assert_eq!(efficient_information(t, 0.0).unwrap(), 0.0);
        assert!(efficient_information(t, 1e-9).unwrap() < 1e-8);
    }

    #[test]
    fn influence_values() {
        let (t, d) = A1;
        let hi = efficient_influence(0.9, t, d).unwrap();
        assert!((hi - 2.733333).abs() < 1e-6);
        assert!((efficient_influence(0.2, t, d).unwrap() + 0.6).abs() < 1e-12);
        let info = efficient_information(t, d).unwrap();
        for x in [0.2, 0.9] {
            let ratio = efficient_score(x, t, d).unwrap() / info;
            assert!((efficient_influence(x, t, d).unwrap() - ratio).abs() < 1e-12);
        }
        assert_eq!(efficient_influence(0.9, t, 0.0), Err(Error::ZeroInformation));
    }

    #[test]
    fn variance_values() {
        assert!((optimal_variance(0.6, 0.3).unwrap() - 1.64).abs() < 1e-12);
        assert!((optimal_variance(0.8, 0.3).unwrap() - 2.026667).abs() < 1e-6);
        assert_eq!(optimal_variance(0.6, 0.0).unwrap(), f64::INFINITY);
        // Storey oracle variance theta (1/(1 - lambda) - theta) at lambda = 1 - delta
        let lambda: f64 = 0.7;
        assert!((optimal_variance(0.6, 0.3).unwrap() - 0.6 * (1.0 / (1.0 - lambda) - 0.6)).abs() < 1e-12);
        assert!(optimal_variance(0.6, 1.0).is_err());
    }

    #[test]
    fn score_moments_under_the_mixture() {
        for &t in &[0.3, 0.6, 0.9] {
            for &d in &[0.1, 0.3, 0.5] {
                for &s in &[1.4, 3.0] {
                    let p = MixtureParams::new(t, d, s).unwrap();
                    let q = EfficiencyQuantities::new(t, d).unwrap();
                    let g = |x: f64| p.mixture_density_unchecked(x);
                    let brk = [1.0 - d];
                    let m1 = integrate_pieces(&|x| q.score(x) * g(x), 0.0, 1.0, &brk, TOLERANCE).unwrap();
                    let m2 = integrate_pieces(&|x| q.score(x).powi(2) * g(x), 0.0, 1.0, &brk, TOLERANCE).unwrap();
                    let i1 = integrate_pieces(&|x| q.influence(x) * g(x), 0.0, 1.0, &brk, TOLERANCE).unwrap();
                    let i2 = integrate_pieces(&|x| q.influence(x).powi(2) * g(x), 0.0, 1.0, &brk, TOLERANCE).unwrap();
                    assert!(m1.abs() < 1e-8);
                    assert!((m2 - q.information).abs() < 1e-8);
                    assert!(i1.abs() < 1e-8);
                    assert!((i2 - q.optimal_variance()).abs() < 1e-8);
                    assert!((q.optimal_variance() * q.information - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn delta_hat_on_model_a1() {
        // f vanishes smoothly at 0.7, so at n = 1e4 the risk still prefers
        // merging part of [0.5, 0.7] into the flat cell
        let p = MixtureParams::new(0.6, 0.3, 3.0).unwrap();
        let cfg = CrConfig { m_min: 3, m_max: 5, ..CrConfig::default() };
        let mut deltas = Vec::new();
        for seed in 0..20 {
            let d = delta_hat(&p.sample(10_000, seed).unwrap(), &cfg).unwrap();
            assert!(!d.low_confidence);
            assert_eq!((d.delta * d.m_hat as f64).fract(), 0.0);
            deltas.push(d.delta);
        }
        deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = deltas[10];
        assert!((0.3..=0.5).contains(&median), "{deltas:?}");
        assert!(deltas.iter().all(|&d| (0.2..=0.55).contains(&d)), "{deltas:?}");
    }

    #[test]
    fn delta_hat_on_uniform_data_is_flagged() {
        let near_uniform = MixtureParams::new(1.0 - 1e-12, 0.3, 3.0).unwrap();
        let s = near_uniform.sample(10_000, 32).unwrap();
        let d = delta_hat(&s, &CrConfig::default()).unwrap();
        assert!(d.low_confidence);
        assert!(d.delta > 0.0 && d.delta < 1.0);
    }

    #[test]
    fn zero_score_sum_returns_the_start() {
        // score is 2 above 0.5 and -2/3 below, one point above balances three
        // below; n = 16 puts theta = 0.5 on the 1/4 grid
        let fold = [0.1, 0.9, 0.2, 0.3, 0.15, 0.95, 0.25, 0.35];
        let s = PValueSample::new(fold.iter().chain(&fold).copied().collect()).unwrap();
        let r = one_step(&s, 0.5, DeltaPlugIn::Fixed(0.5)).unwrap();
        let Trace::OneStep(t) = &r.trace else { panic!() };
        assert!(!t.fallback);
        assert!(t.score_sum.abs() < 1e-12);
        assert!((r.theta_hat - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fold_falls_back() {
        let s = PValueSample::new(vec![0.1, 0.2, 0.3, 0.4, 0.9, 0.95]).unwrap();
        let r = one_step(&s, 0.55, DeltaPlugIn::Fixed(0.3)).unwrap();
        let Trace::OneStep(t) = &r.trace else { panic!() };
        assert!(t.fallback);
        assert_eq!(r.theta_hat, 0.55);
        assert!(one_step(&s, 1.2, DeltaPlugIn::Fixed(0.3)).is_err());
        assert!(one_step(&s, 0.5, DeltaPlugIn::Fixed(0.0)).is_err());
        let tiny = PValueSample::new(vec![0.1, 0.9, 0.5]).unwrap();
        assert!(one_step(&tiny, 0.5, DeltaPlugIn::Fixed(0.3)).is_err());
    }

    #[test]
    fn one_step_beats_the_histogram_pilot_half_the_time() {
        let p = MixtureParams::new(0.6, 0.3, 3.0).unwrap();
        let part = Partition::regular(8).unwrap();
        let wins = (0..100)
            .filter(|&r| {
                let s = p.sample(10_000, 500 + r).unwrap();
                let pilot = theta_hat_min(&s, &part).theta_hat;
                let step = one_step(&s, 0.6, DeltaPlugIn::Fixed(0.3)).unwrap().theta_hat;
                (step - 0.6).abs() < (pilot - 0.6).abs()
            })
            .count();
        assert!(wins >= 50, "{wins}");
    }

    #[test]
    fn one_step_variance_near_the_bound() {
        let p = MixtureParams::new(0.6, 0.3, 3.0).unwrap();
        let n = 10_000;
        let est: Vec<f64> = (0..200)
            .map(|r| one_step(&p.sample(n, 900 + r).unwrap(), 0.6, DeltaPlugIn::Fixed(0.3)).unwrap().theta_hat)
            .collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let var = est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64;
        assert!((n as f64 * var / 1.64 - 1.0).abs() < 0.25, "{}", n as f64 * var);
    }

    #[test]
    fn cross_fit_runs() {
        let p = MixtureParams::new(0.6, 0.3, 3.0).unwrap();
        let s = p.sample(4_000, 7).unwrap();
        let r = one_step(&s, 0.6, DeltaPlugIn::CrossFit(CrConfig::default())).unwrap();
        let Trace::OneStep(t) = &r.trace else { panic!() };
        assert!(t.delta_first > 0.0 && t.delta_second > 0.0);
        assert!((r.theta_hat - 0.6).abs() < 0.15);
    }
}
