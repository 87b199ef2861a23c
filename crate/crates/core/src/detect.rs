//! Detectors: Kolmogorov-Smirnov statistics and tests, threshold detectors,
//! the distinguishing-game advantage estimator, and the advantage bound.

use rand::Rng;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::seed::{self, derive_seed};

/// Terms kept in the Kolmogorov series.
const SERIES_TERMS: usize = 100;
/// A series term below this (relative to the running sum) ends the loop.
const SERIES_TOL: f64 = 1e-10;

/// Outcome of a single test. `threshold_or_pvalue` holds the p-value for
/// two-sample tests and `tau` for threshold detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorVerdict {
    pub statistic: f64,
    pub threshold_or_pvalue: f64,
    pub rejected: bool,
}

impl DetectorVerdict {
    pub fn from_pvalue(statistic: f64, p_value: f64, significance: f64) -> Self {
        DetectorVerdict {
            statistic,
            threshold_or_pvalue: p_value,
            rejected: p_value < significance,
        }
    }

    pub fn from_threshold(statistic: f64, tau: f64) -> Self {
        DetectorVerdict {
            statistic,
            threshold_or_pvalue: tau,
            rejected: statistic > tau,
        }
    }
}

/// `sup_x |F_K(x) - F(x)|` for the empirical cdf of `values` (ascending).
///
/// Both one-sided gaps are taken at every observation, which gives the exact
/// supremum for a continuous reference and handles ties.
pub fn ks_one_sample(values: &[f64], reference_cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("KS statistic of an empty sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(invalid("KS statistic of a sample containing NaN"));
    }
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("KS one-sample input must be sorted ascending"));
    }
    let k = values.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let f = reference_cdf(x);
        sup = sup.max((i + 1) as f64 / k - f).max(f - i as f64 / k);
    }
    Ok(sup.clamp(0.0, 1.0))
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form of the cdf, fast for small lambda.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for j in 1..=SERIES_TERMS {
            let odd = (2 * j - 1) as f64;
            let term = (c * odd * odd).exp();
            sum += term;
            if term <= SERIES_TOL * sum {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for j in 1..=SERIES_TERMS {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * lambda * lambda).exp();
            sum += if j % 2 == 1 { term } else { -term };
            if term <= SERIES_TOL * sum.abs() {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Two-sample KS statistic and its asymptotic p-value with effective size
/// `n m / (n + m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("KS two-sample test needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(invalid("KS two-sample input contains NaN"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        // Step past every copy of the smallest remaining value in both samples.
        let x = a[i].min(b[j]);
        while i < n && a[i] == x {
            i += 1;
        }
        while j < m && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let effective = (n as f64 * m as f64 / (n + m) as f64).sqrt();
    Ok((d, kolmogorov_survival(effective * d)))
}

/// `Phi(D) = 1[KS(D; nu) > tau]` against a reference cdf.
pub fn ks_threshold_detector<F>(tau: f64, reference_cdf: F) -> Result<impl Fn(&[f64]) -> bool + Sync>
where
    F: Fn(f64) -> f64 + Sync,
{
    if !(tau >= 0.0) {
        return Err(invalid(format!("threshold {tau} must be non-negative")));
    }
    Ok(move |sample: &[f64]| {
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        ks_one_sample(&sorted, &reference_cdf).is_ok_and(|ks| ks > tau)
    })
}

/// Result of the distinguishing game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvantageEstimate {
    /// `|correct / trials - 1/2|`.
    pub value: f64,
    pub trials: usize,
    pub correct: usize,
    pub standard_error: f64,
}

impl AdvantageEstimate {
    pub fn from_counts(correct: usize, trials: usize) -> Self {
        let p = correct as f64 / trials as f64;
        AdvantageEstimate {
            value: (p - 0.5).abs(),
            trials,
            correct,
            standard_error: (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }
}

/// Plays the game `trials` times: a fair coin `H` picks `nu` (`H = 1`) or
/// `mu` (`H = 0`), the matching generator draws a dataset, and the detector
/// scores a hit when its output equals `H`. Trial `t` uses the seed derived
/// from `(seed, t)`, so the estimate does not depend on scheduling.
pub fn estimate_advantage<D, GM, GN, P>(
    gen_mu: GM,
    gen_nu: GN,
    detector: P,
    trials: usize,
    seed: u64,
) -> Result<AdvantageEstimate>
where
    GM: Fn(&mut seed::Rng) -> D + Sync,
    GN: Fn(&mut seed::Rng) -> D + Sync,
    P: Fn(&D) -> bool + Sync,
{
    if trials == 0 {
        return Err(invalid("advantage estimation needs at least one trial"));
    }
    let correct = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = seed::rng(derive_seed(seed, &[t as u64]));
            let from_nu = rng.random::<bool>();
            let sample = if from_nu { gen_nu(&mut rng) } else { gen_mu(&mut rng) };
            detector(&sample) == from_nu
        })
        .count();
    Ok(AdvantageEstimate::from_counts(correct, trials))
}

/// `4 K! ((1 + tv) / K)^K`, evaluated in log space.
pub fn theorem1_second_term(k: u64, tv: f64) -> f64 {
    let kf = k as f64;
    (4f64.ln() + ln_factorial(k) + kf * ((1.0 + tv) / kf).ln()).exp()
}

fn ln_factorial(k: u64) -> f64 {
    // Direct summation is more accurate than the Lanczos series for small K.
    if k <= 256 {
        (2..=k).map(|i| (i as f64).ln()).sum()
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

/// Upper bound on the advantage of a KS threshold detector:
/// `K^(1/s) W / C^(1/s) + 4 K! ((1 + tv) / K)^K`.
pub fn theorem1_bound(wasserstein: f64, k: u64, s_const: f64, c_const: f64, tv: f64) -> Result<f64> {
    if k == 0 {
        return Err(invalid("K must be at least 1"));
    }
    if !(s_const > 0.0 && s_const.is_finite()) || !(c_const > 0.0 && c_const.is_finite()) {
        return Err(invalid("constants s and C must be positive and finite"));
    }
    if !(0.0..=1.0).contains(&tv) {
        return Err(invalid(format!("total variation {tv} outside [0, 1]")));
    }
    if !(wasserstein >= 0.0 && wasserstein.is_finite()) {
        return Err(invalid(format!("Wasserstein distance {wasserstein} must be finite and >= 0")));
    }
    let first = ((k as f64).ln() / s_const - c_const.ln() / s_const).exp() * wasserstein;
    Ok(first + theorem1_second_term(k, tv))
}

/// Verdicts on the key feature: the marginal, then the `s = 1` and `s = 0`
/// conditionals. A conditional is `None` when either side has no records in
/// that group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Battery {
    pub marginal: Option<DetectorVerdict>,
    pub s1: Option<DetectorVerdict>,
    pub s0: Option<DetectorVerdict>,
}

impl Battery {
    pub fn verdicts(&self) -> [Option<DetectorVerdict>; 3] {
        [self.marginal, self.s1, self.s0]
    }
}

pub fn run_detector_battery(
    disclosed: &Dataset,
    reference: &Dataset,
    key_feature: usize,
    significance: f64,
) -> Result<Battery> {
    if key_feature >= disclosed.dim() || key_feature >= reference.dim() {
        return Err(invalid(format!("key feature {key_feature} out of range")));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(invalid(format!("significance {significance} outside (0, 1)")));
    }
    let column = |data: &Dataset, group: Option<usize>| -> Vec<f64> {
        data.records()
            .iter()
            .filter(|r| group.is_none_or(|s| r.sensitive == s))
            .map(|r| r.features[key_feature])
            .collect()
    };
    let test = |group: Option<usize>| -> Result<Option<DetectorVerdict>> {
        let (a, b) = (column(disclosed, group), column(reference, group));
        if a.is_empty() || b.is_empty() {
            return Ok(None);
        }
        let (stat, p) = ks_two_sample(&a, &b)?;
        Ok(Some(DetectorVerdict::from_pvalue(stat, p, significance)))
    };
    Ok(Battery {
        marginal: test(None)?,
        s1: test(Some(1))?,
        s0: test(Some(0))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;

    fn uniform(x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }

    #[test]
    fn one_sample_examples() {
        assert_eq!(ks_one_sample(&[0.5], uniform).unwrap(), 0.5);
        let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        assert!((ks_one_sample(&grid, uniform).unwrap() - 0.1).abs() < 1e-12);
        assert!(ks_one_sample(&[], uniform).is_err());
        assert!(ks_one_sample(&[0.3, 0.1], uniform).is_err());
        // ties: two copies of 0.5 jump from 0 to 1
        assert_eq!(ks_one_sample(&[0.5, 0.5], uniform).unwrap(), 0.5);
    }

    #[test]
    fn two_sample_examples() {
        let (d, p) = ks_two_sample(&[0.1, 0.4, 0.4], &[0.4, 0.1, 0.4]).unwrap();
        assert_eq!((d, p), (0.0, 1.0));
        assert_eq!(ks_two_sample(&[0.0, 0.0], &[1.0, 1.0]).unwrap().0, 1.0);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn kolmogorov_branches_agree() {
        // The theta and alternating forms meet continuously at the switch.
        let below = kolmogorov_survival(1.18 - 1e-9);
        let above = kolmogorov_survival(1.18 + 1e-9);
        assert!((below - above).abs() < 1e-8);
        // Classic critical value.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        assert!(kolmogorov_survival(10.0) < 1e-80);
    }

    #[test]
    fn threshold_detector() {
        let always = ks_threshold_detector(0.0, uniform).unwrap();
        assert!(always(&[0.2, 0.7]));
        let never = ks_threshold_detector(1.0, uniform).unwrap();
        assert!(!never(&[0.0, 0.0]));
        assert!(ks_threshold_detector(-0.1, uniform).is_err());
    }

    #[test]
    fn bound_substitution() {
        assert!((theorem1_bound(0.0, 1, 1.0, 1.0, 0.0).unwrap() - 4.0).abs() < 1e-15);
        assert!(theorem1_bound(0.0, 0, 1.0, 1.0, 0.0).is_err());
        assert!(theorem1_bound(0.0, 3, 1.0, 1.0, 1.5).is_err());
        assert!(theorem1_bound(-1.0, 3, 1.0, 1.0, 0.0).is_err());
        assert!(theorem1_second_term(1_000_000, 1.0).is_finite());
    }

    #[test]
    fn battery_undefined_slice() {
        let rows = |s: &[usize]| {
            Dataset::new(
                s.iter().enumerate().map(|(i, &s)| Record::new(vec![i as f64], s, 0)).collect(),
                2,
            )
            .unwrap()
        };
        let d = rows(&[0, 1, 0, 1]);
        let b = run_detector_battery(&d, &d, 0, 0.05).unwrap();
        for v in b.verdicts() {
            let v = v.unwrap();
            assert_eq!((v.statistic, v.threshold_or_pvalue, v.rejected), (0.0, 1.0, false));
        }
        let only_ones = rows(&[1, 1, 1]);
        let b = run_detector_battery(&d, &only_ones, 0, 0.05).unwrap();
        assert!(b.s0.is_none() && b.s1.is_some());
        assert!(run_detector_battery(&d, &d, 1, 0.05).is_err());
    }
}
