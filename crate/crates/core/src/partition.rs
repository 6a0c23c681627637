//! Partitions of `[0, 1]`, histogram counts and the cell moments
//! `s_ij = sum_k alpha_k^i / |I_k|^j`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mixture::{MixtureParams, PValueSample};
use crate::quadrature::{integrate, integrate_pieces, TOLERANCE};

/// Largest dyadic exponent accepted for collections.
pub const MAX_EXPONENT: u32 = 16;

/// Parameterization `(M, lambda = k/M, mu = l/M)` of a partition whose cells
/// all have width `1/M` except the single merged cell `[k/M, l/M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CrParams {
    pub m: u32,
    pub k: u32,
    pub l: u32,
}

impl CrParams {
    pub fn lambda(&self) -> f64 {
        self.k as f64 / self.m as f64
    }

    pub fn mu(&self) -> f64 {
        self.l as f64 / self.m as f64
    }

    pub fn width(&self) -> f64 {
        (self.l - self.k) as f64 / self.m as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    breakpoints: Vec<f64>,
    cr: Option<CrParams>,
}

impl Partition {
    /// Breakpoints must strictly increase from 0 to 1.
    pub fn new(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidPartition("need at least the breakpoints 0 and 1".into()));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(Error::InvalidPartition("breakpoints must start at 0 and end at 1".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPartition("breakpoints must be strictly increasing".into()));
        }
        Ok(Self { breakpoints, cr: None })
    }

    pub fn trivial() -> Self {
        Self { breakpoints: vec![0.0, 1.0], cr: None }
    }

    /// `d` cells of equal width.
    pub fn regular(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidPartition("a regular partition needs at least one cell".into()));
        }
        let mut b: Vec<f64> = (0..d).map(|i| i as f64 / d as f64).collect();
        b.push(1.0);
        Ok(Self { breakpoints: b, cr: None })
    }

    /// The partition with regular cells of width `1/m` except the merged cell `[k/m, l/m)`.
    pub fn cr(m: u32, k: u32, l: u32) -> Result<Self> {
        if !m.is_power_of_two() || m < 2 || m > 1 << MAX_EXPONENT {
            return Err(Error::InvalidPartition(format!("M = {m} must be a power of two in [2, 2^16]")));
        }
        if !(k + 2 <= l && l <= m) {
            return Err(Error::InvalidPartition(format!("need 2 <= k + 2 <= l <= M, got k={k}, l={l}, M={m}")));
        }
        let mf = m as f64;
        let breakpoints = (0..=k).chain(l..=m).map(|i| i as f64 / mf).collect();
        Ok(Self { breakpoints, cr: Some(CrParams { m, k, l }) })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn cr_params(&self) -> Option<CrParams> {
        self.cr
    }

    pub fn num_cells(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn widths(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Cell index of `x` under the half-open convention `[a, b)`, with the last cell closed.
    pub fn cell_of(&self, x: f64) -> usize {
        let interior = &self.breakpoints[1..self.breakpoints.len() - 1];
        interior.partition_point(|&b| b <= x)
    }
}

/// Enumerates the union over `m_min <= m <= m_max` of the partitions with `M = 2^m`.
///
/// The full collection holds every `(k, l)` with `2 <= k + 2 <= l <= M`;
/// the right-anchored one fixes `l = M` and runs `k` over `1..=M-2`.
pub fn enumerate_collection(m_min: u32, m_max: u32, right_anchored: bool) -> Result<Vec<Partition>> {
    if m_min < 1 || m_min > m_max || m_max > MAX_EXPONENT {
        return Err(Error::InvalidCollection { m_min, m_max });
    }
    let mut out = Vec::new();
    for e in m_min..=m_max {
        let m = 1u32 << e;
        if right_anchored {
            for k in 1..=m.saturating_sub(2) {
                out.push(Partition::cr(m, k, m)?);
            }
        } else {
            for l in 2..=m {
                for k in 0..=l - 2 {
                    out.push(Partition::cr(m, k, l)?);
                }
            }
        }
    }
    Ok(out)
}

/// Whether `fine` subdivides `coarse`: every breakpoint of `coarse` is one of `fine`.
pub fn is_subdivision(fine: &Partition, coarse: &Partition) -> bool {
    coarse
        .breakpoints
        .iter()
        .all(|b| fine.breakpoints.iter().any(|a| (a - b).abs() <= 1e-12))
}

/// The partition `(N, ceil(N lambda*)/N, floor(N mu*)/N)` with `N = 2^m_max`
/// whose merged cell is the largest dyadic interval inside `[lambda*, mu*]`.
pub fn flat_region_partition(m_max: u32, lambda_star: f64, mu_star: f64) -> Result<Partition> {
    let n = 1u32 << m_max;
    let k = (n as f64 * lambda_star).ceil() as u32;
    let l = (n as f64 * mu_star).floor() as u32;
    Partition::cr(n, k, l)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramCounts {
    counts: Vec<u64>,
    n: u64,
}

impl HistogramCounts {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let n = counts.iter().sum();
        Self { counts, n }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }
}

pub fn counts(sample: &PValueSample, partition: &Partition) -> HistogramCounts {
    let mut c = vec![0u64; partition.num_cells()];
    for &x in sample.values() {
        c[partition.cell_of(x)] += 1;
    }
    HistogramCounts::from_counts(c)
}

/// Counts on the regular grid of `2^exponent` cells, from which the counts
/// of any coarser dyadic partition follow by summation.
#[derive(Debug, Clone)]
pub struct DyadicCounts {
    exponent: u32,
    prefix: Vec<u64>,
}

impl DyadicCounts {
    pub fn new(sample: &PValueSample, exponent: u32) -> Self {
        let m = 1usize << exponent;
        let mut fine = vec![0u64; m];
        for &x in sample.values() {
            // exact for dyadic boundaries, matching `Partition::cell_of`
            let i = ((x * m as f64).floor() as usize).min(m - 1);
            fine[i] += 1;
        }
        let mut prefix = Vec::with_capacity(m + 1);
        prefix.push(0);
        let mut acc = 0;
        for c in fine {
            acc += c;
            prefix.push(acc);
        }
        Self { exponent, prefix }
    }

    pub fn n(&self) -> u64 {
        *self.prefix.last().unwrap()
    }

    /// Count of the interval `[a/M, b/M)` (closed at 1).
    pub fn range(&self, m: u32, a: u32, b: u32) -> u64 {
        let scale = (1u32 << self.exponent) / m;
        self.prefix[(b * scale) as usize] - self.prefix[(a * scale) as usize]
    }

    /// Counts of a CR partition with `M <= 2^exponent`.
    pub fn for_cr(&self, p: CrParams) -> HistogramCounts {
        let mut c = Vec::with_capacity((p.m - (p.l - p.k) + 1) as usize);
        for i in 0..p.k {
            c.push(self.range(p.m, i, i + 1));
        }
        c.push(self.range(p.m, p.k, p.l));
        for i in p.l..p.m {
            c.push(self.range(p.m, i, i + 1));
        }
        HistogramCounts { counts: c, n: self.n() }
    }
}

/// The moment orders used by the selector and the technical condition.
pub const STANDARD_ORDERS: [(u32, u32); 4] = [(1, 1), (2, 1), (2, 2), (3, 2)];

/// Cell probabilities `alpha_k` and the moments `s_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    alpha: Vec<f64>,
    s: BTreeMap<(u32, u32), f64>,
}

impl MomentSet {
    pub fn from_alpha(partition: &Partition, alpha: Vec<f64>, orders: &[(u32, u32)]) -> Result<Self> {
        if alpha.len() != partition.num_cells() {
            return Err(Error::InvalidPartition(format!(
                "{} cell probabilities for {} cells",
                alpha.len(),
                partition.num_cells()
            )));
        }
        let widths = partition.widths();
        let s = orders
            .iter()
            .map(|&(i, j)| {
                let v = alpha
                    .iter()
                    .zip(&widths)
                    .map(|(a, w)| a.powi(i as i32) / w.powi(j as i32))
                    .sum::<f64>();
                ((i, j), v)
            })
            .collect();
        Ok(Self { alpha, s })
    }

    /// Empirical moments from `alpha_k = n_k / n`.
    pub fn from_counts(counts: &HistogramCounts, partition: &Partition, orders: &[(u32, u32)]) -> Result<Self> {
        let n = counts.n() as f64;
        let alpha = counts.counts().iter().map(|&c| c as f64 / n).collect();
        Self::from_alpha(partition, alpha, orders)
    }

    /// Cell probabilities from cdf differences.
    pub fn from_cdf<F: Fn(f64) -> f64>(partition: &Partition, cdf: F, orders: &[(u32, u32)]) -> Result<Self> {
        let alpha = partition.breakpoints().windows(2).map(|w| cdf(w[1]) - cdf(w[0])).collect();
        Self::from_alpha(partition, alpha, orders)
    }

    /// Cell probabilities by adaptive quadrature of `g` over each cell.
    pub fn from_density<F: Fn(f64) -> f64>(partition: &Partition, g: F, orders: &[(u32, u32)]) -> Result<Self> {
        let alpha = partition
            .breakpoints()
            .windows(2)
            .map(|w| integrate(&g, w[0], w[1], TOLERANCE))
            .collect::<Result<Vec<_>>>()?;
        Self::from_alpha(partition, alpha, orders)
    }

    /// Exact cell probabilities under the mixture.
    pub fn from_params(partition: &Partition, params: &MixtureParams, orders: &[(u32, u32)]) -> Result<Self> {
        Self::from_cdf(partition, |x| params.mixture_cdf_unchecked(x), orders)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn s(&self, i: u32, j: u32) -> Result<f64> {
        self.s.get(&(i, j)).copied().ok_or(Error::MissingMoment { i, j })
    }

    /// `sigma_I^2 = s_32 - s_21^2`.
    pub fn sigma_sq(&self) -> Result<f64> {
        Ok(self.s(3, 2)? - self.s(2, 1)?.powi(2))
    }

    #[cfg(test)]
    pub(crate) fn from_raw(s: BTreeMap<(u32, u32), f64>) -> Self {
        Self { alpha: Vec::new(), s }
    }
}

const NONZERO_TOL: f64 = 1e-12;

/// The two expressions whose non-vanishing is required of every partition:
/// `8 s11 s21 - 2 s11^2 + 8 s32 - 10 s21^2 - 4 s22` and `s21 - s22 - s32 + 3 s11`.
pub fn condition_expressions(ms: &MomentSet) -> Result<(f64, f64)> {
    let s11 = ms.s(1, 1)?;
    let s21 = ms.s(2, 1)?;
    let s22 = ms.s(2, 2)?;
    let s32 = ms.s(3, 2)?;
    let first = 8.0 * s11 * s21 - 2.0 * s11 * s11 + 8.0 * s32 - 10.0 * s21 * s21 - 4.0 * s22;
    let second = s21 - s22 - s32 + 3.0 * s11;
    Ok((first, second))
}

pub fn technical_condition(ms: &MomentSet) -> Result<bool> {
    let (a, b) = condition_expressions(ms)?;
    Ok(a.abs() > NONZERO_TOL && b.abs() > NONZERO_TOL)
}

/// `L(I) = ||g - g_I||_2^2 = ||g||_2^2 - s_21`, everything by quadrature of `g`.
pub fn bias_l<F: Fn(f64) -> f64>(partition: &Partition, g: F) -> Result<f64> {
    let norm = integrate_pieces(&|x| g(x).powi(2), 0.0, 1.0, partition.breakpoints(), TOLERANCE)?;
    let ms = MomentSet::from_density(partition, &g, &[(2, 1)])?;
    Ok((norm - ms.s(2, 1)?).max(0.0))
}

/// Closed-form `L(I)` for the parametric mixture.
pub fn bias_l_exact(partition: &Partition, params: &MixtureParams) -> Result<f64> {
    let ms = MomentSet::from_params(partition, params, &[(2, 1)])?;
    Ok((params.mixture_l2_norm_sq() - ms.s(2, 1)?).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn halves() -> Partition {
        Partition::regular(2).unwrap()
    }

    #[test]
    fn collection_sizes() {
        assert_eq!(enumerate_collection(1, 1, false).unwrap(), vec![Partition::cr(2, 0, 2).unwrap()]);
        assert_eq!(enumerate_collection(1, 1, false).unwrap()[0].num_cells(), 1);
        assert_eq!(enumerate_collection(2, 2, false).unwrap().len(), 6);
        let ra = enumerate_collection(2, 2, true).unwrap();
        assert_eq!(ra.len(), 2);
        assert_eq!(ra[0].cr_params().unwrap().k, 1);
        assert_eq!(ra[1].cr_params().unwrap().k, 2);
        for e in 1..=6 {
            let m = 1usize << e;
            assert_eq!(enumerate_collection(e, e, false).unwrap().len(), m * (m - 1) / 2);
            assert_eq!(enumerate_collection(e, e, true).unwrap().len(), m - 2);
        }
        assert!(enumerate_collection(0, 2, false).is_err());
        assert!(enumerate_collection(3, 2, false).is_err());
        assert!(enumerate_collection(2, 17, false).is_err());
    }

    #[test]
    fn cr_cells_have_expected_widths() {
        for p in enumerate_collection(1, 5, false).unwrap() {
            let cr = p.cr_params().unwrap();
            let w = p.widths();
            let merged = w.iter().filter(|&&x| (x - cr.width()).abs() < 1e-15).count();
            let regular = w.iter().filter(|&&x| (x - 1.0 / cr.m as f64).abs() < 1e-15).count();
            assert_eq!(w.len(), (cr.m - (cr.l - cr.k) + 1) as usize);
            assert_eq!(merged, 1);
            assert_eq!(regular, w.len() - 1);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_invalid_partitions() {
        assert!(Partition::new(vec![0.0, 0.5]).is_err());
        assert!(Partition::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(Partition::cr(6, 0, 2).is_err());
        assert!(Partition::cr(8, 3, 4).is_err());
        assert!(Partition::cr(8, 3, 9).is_err());
        assert!(Partition::regular(0).is_err());
    }

    #[test]
    fn counting() {
        let s = PValueSample::new(vec![0.1, 0.2, 0.6, 0.9]).unwrap();
        assert_eq!(counts(&s, &halves()).counts(), &[2, 2]);
        let s = PValueSample::new(vec![0.1]).unwrap();
        assert_eq!(counts(&s, &halves()).counts(), &[1, 0]);
        let s = PValueSample::new(vec![0.5, 1.0, 0.0]).unwrap();
        assert_eq!(counts(&s, &halves()).counts(), &[1, 2]);
    }

    #[test]
    fn dyadic_counts_match_direct_counts() {
        let p = MixtureParams::new(0.6, 0.3, 3.0).unwrap();
        let mut values = p.sample(2000, 9).unwrap().values().to_vec();
        values.extend([0.0, 0.25, 0.5, 0.75, 1.0, 0.125]);
        let s = PValueSample::new(values).unwrap();
        let dy = DyadicCounts::new(&s, 5);
        for part in enumerate_collection(1, 5, false).unwrap() {
            assert_eq!(dy.for_cr(part.cr_params().unwrap()), counts(&s, &part));
        }
    }

    #[test]
    fn uniform_moments() {
        let reg4 = Partition::regular(4).unwrap();
        let ms = MomentSet::from_density(&reg4, |_| 1.0, &STANDARD_ORDERS).unwrap();
        assert!((ms.s(1, 1).unwrap() - 4.0).abs() < 1e-12);
        assert!((ms.s(2, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((ms.s(3, 2).unwrap() - 1.0).abs() < 1e-12);
        assert!((ms.s(2, 2).unwrap() - 4.0).abs() < 1e-12);
        assert!(ms.sigma_sq().unwrap().abs() < 1e-12);
        let odd = Partition::new(vec![0.0, 0.1, 0.35, 0.9, 1.0]).unwrap();
        let ms = MomentSet::from_density(&odd, |_| 1.0, &[(2, 1)]).unwrap();
        assert!((ms.s(2, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(ms.s(1, 1), Err(Error::MissingMoment { i: 1, j: 1 })));
    }

    #[test]
    fn density_and_cdf_moments_agree() {
        let p = MixtureParams::new(0.7, 0.3, 1.4).unwrap();
        let part = Partition::cr(16, 5, 13).unwrap();
        let a = MomentSet::from_params(&part, &p, &STANDARD_ORDERS).unwrap();
        let b = MomentSet::from_density(&part, |x| p.mixture_density_unchecked(x), &STANDARD_ORDERS).unwrap();
        for &(i, j) in &STANDARD_ORDERS {
            assert!((a.s(i, j).unwrap() - b.s(i, j).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn technical_condition_cases() {
        let reg4 = Partition::regular(4).unwrap();
        let ms = MomentSet::from_density(&reg4, |_| 1.0, &STANDARD_ORDERS).unwrap();
        let (a, b) = condition_expressions(&ms).unwrap();
        assert!((a - -18.0).abs() < 1e-10 && (b - 8.0).abs() < 1e-10);
        assert!(technical_condition(&ms).unwrap());

        let zeros = MomentSet::from_raw(STANDARD_ORDERS.iter().map(|&o| (o, 0.0)).collect());
        assert!(!technical_condition(&zeros).unwrap());

        let trivial = MomentSet::from_density(&Partition::trivial(), |_| 1.0, &STANDARD_ORDERS).unwrap();
        let (a, _) = condition_expressions(&trivial).unwrap();
        assert!(a.abs() < 1e-12);
        assert!(!technical_condition(&trivial).unwrap());

        let partial = MomentSet::from_density(&reg4, |_| 1.0, &[(1, 1)]).unwrap();
        assert!(technical_condition(&partial).is_err());
    }

    #[test]
    fn subdivision_relation() {
        let r8 = Partition::regular(8).unwrap();
        let r4 = Partition::regular(4).unwrap();
        assert!(is_subdivision(&r4, &r4));
        assert!(is_subdivision(&r8, &r4));
        assert!(!is_subdivision(&r4, &r8));
        let thirds = Partition::regular(3).unwrap();
        assert!(!is_subdivision(&halves(), &thirds));
        assert!(!is_subdivision(&thirds, &halves()));
    }

    #[test]
    fn subdivision_is_a_partial_order_on_the_collection() {
        let all = enumerate_collection(1, 3, false).unwrap();
        for a in &all {
            for b in &all {
                if is_subdivision(a, b) && is_subdivision(b, a) {
                    assert_eq!(a.breakpoints(), b.breakpoints());
                }
                for c in &all {
                    if is_subdivision(a, b) && is_subdivision(b, c) {
                        assert!(is_subdivision(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn bias_values() {
        let uni = |_: f64| 1.0;
        assert!(bias_l(&Partition::regular(5).unwrap(), uni).unwrap().abs() < 1e-12);
        let p = MixtureParams::new(0.6, 0.3, 3.0).unwrap();
        let g = |x: f64| p.mixture_density_unchecked(x);
        let l_trivial = bias_l(&Partition::trivial(), g).unwrap();
        assert!((l_trivial - (p.mixture_l2_norm_sq() - 1.0)).abs() < 1e-8);
        let part = Partition::cr(8, 2, 6).unwrap();
        assert!((bias_l(&part, g).unwrap() - bias_l_exact(&part, &p).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn bias_ordering_against_flat_region_partition() {
        let p = MixtureParams::new(0.6, 0.3, 3.0).unwrap();
        let reference = flat_region_partition(4, 0.7, 1.0).unwrap();
        assert_eq!(reference.cr_params(), Some(CrParams { m: 16, k: 12, l: 16 }));
        let l_ref = bias_l_exact(&reference, &p).unwrap();
        let mut subdivisions = 0;
        for part in enumerate_collection(1, 4, false).unwrap() {
            let l = bias_l_exact(&part, &p).unwrap();
            if is_subdivision(&part, &reference) {
                subdivisions += 1;
                assert!((l - l_ref).abs() < 1e-8);
            } else {
                assert!(l > l_ref, "{:?}", part.cr_params());
            }
        }
        assert!(subdivisions >= 2);
    }

    #[test]
    fn empirical_moments_converge() {
        let p = MixtureParams::new(0.6, 0.3, 3.0).unwrap();
        let part = Partition::regular(8).unwrap();
        let truth = MomentSet::from_params(&part, &p, &STANDARD_ORDERS).unwrap();
        let n = 10_000;
        let s = p.sample(n, 77).unwrap();
        let est = MomentSet::from_counts(&counts(&s, &part), &part, &STANDARD_ORDERS).unwrap();
        // delta method: var(s21_hat) ~ 4 sigma_I^2 / n
        let se = (4.0 * truth.sigma_sq().unwrap() / n as f64).sqrt();
        assert!((est.s(2, 1).unwrap() - truth.s(2, 1).unwrap()).abs() < 3.0 * se);
    }
}
