//! Demographic parity, the fair-looking per-bin sample counts, and total
//! variation between bin distributions.

use std::collections::BTreeMap;

use crate::data::{BinLabel, BinSpec, Dataset, MEASURE_TOL};
use crate::error::{invalid, Error, Result};

/// A probability distribution over (sensitive, decision) bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinDistribution {
    probabilities: BTreeMap<BinLabel, f64>,
}

impl BinDistribution {
    pub fn new(probabilities: BTreeMap<BinLabel, f64>) -> Result<Self> {
        if probabilities.values().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("bin probabilities must lie in [0, 1]"));
        }
        let total: f64 = probabilities.values().sum();
        if (total - 1.0).abs() > MEASURE_TOL {
            return Err(invalid(format!("bin probabilities sum to {total}, not 1")));
        }
        Ok(BinDistribution { probabilities })
    }

    /// Empirical bin frequencies of a dataset (every label present).
    pub fn of_dataset(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(invalid("empty dataset"));
        }
        let n = data.len() as f64;
        let probabilities = data
            .bin_members()
            .iter()
            .enumerate()
            .map(|(b, members)| (BinLabel::from_index(b), members.len() as f64 / n))
            .collect();
        Ok(BinDistribution { probabilities })
    }

    /// Normalized counts of a bin spec.
    pub fn of_spec(spec: &BinSpec) -> Result<Self> {
        let total = spec.total();
        if total == 0 {
            return Err(invalid("bin spec is empty"));
        }
        let probabilities = spec
            .iter()
            .map(|(label, k)| (label, k as f64 / total as f64))
            .collect();
        Ok(BinDistribution { probabilities })
    }

    pub fn get(&self, label: BinLabel) -> f64 {
        self.probabilities.get(&label).copied().unwrap_or(0.0)
    }

    pub fn probabilities(&self) -> &BTreeMap<BinLabel, f64> {
        &self.probabilities
    }
}

/// Half the L1 distance between two distributions on the same labels.
pub fn total_variation(a: &BinDistribution, b: &BinDistribution) -> Result<f64> {
    if !a.probabilities.keys().eq(b.probabilities.keys()) {
        return Err(invalid("bin distributions have different label sets"));
    }
    let l1: f64 = a
        .probabilities
        .values()
        .zip(b.probabilities.values())
        .map(|(p, q)| (p - q).abs())
        .sum();
    Ok((0.5 * l1).min(1.0))
}

/// Demographic parity gap: the spread (max minus min) of the positive-decision
/// rate across sensitive groups; for binary `s` this is
/// `|P(y=1|s=1) - P(y=1|s=0)|`.
pub fn demographic_parity(data: &Dataset) -> Result<f64> {
    dp_from(data.num_sensitive_classes(), data.records().iter().map(|r| (r.sensitive, r.decision)))
}

/// Demographic parity of the records selected by `indices` (each counted once
/// per occurrence, unweighted).
pub fn demographic_parity_of(data: &Dataset, indices: &[usize]) -> Result<f64> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(invalid(format!("index {bad} out of range for {} records", data.len())));
    }
    dp_from(
        data.num_sensitive_classes(),
        indices.iter().map(|&i| {
            let r = data.record(i);
            (r.sensitive, r.decision)
        }),
    )
}

fn dp_from(groups: usize, pairs: impl Iterator<Item = (usize, u8)>) -> Result<f64> {
    let mut total = vec![0u64; groups];
    let mut positive = vec![0u64; groups];
    for (s, y) in pairs {
        total[s] += 1;
        positive[s] += u64::from(y);
    }
    if let Some(s) = total.iter().position(|&t| t == 0) {
        return Err(Error::UndefinedMetric(format!(
            "demographic parity needs every sensitive group; group s={s} is empty"
        )));
    }
    let rates: Vec<f64> = positive
        .iter()
        .zip(&total)
        .map(|(&p, &t)| p as f64 / t as f64)
        .collect();
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// Per-bin counts that make a sample look fair:
/// `k(s,1) = ceil(p_s K alpha)` and `k(s,0) = ceil(p_s K (1 - alpha))`.
///
/// Products that land within floating-point noise of an integer are treated as
/// that integer before taking the ceiling, so `0.5 * 200 * 0.6` gives 60.
/// The spec's total may exceed `K` by the ceiling slack.
pub fn target_bin_counts(k: u64, alpha: f64, group_probability: &[f64]) -> Result<BinSpec> {
    if k == 0 {
        return Err(invalid("K must be at least 1"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    if group_probability.is_empty()
        || group_probability.iter().any(|p| !(0.0..=1.0).contains(p))
    {
        return Err(invalid("group probabilities must be in [0, 1]"));
    }
    let total: f64 = group_probability.iter().sum();
    if (total - 1.0).abs() > MEASURE_TOL {
        return Err(invalid(format!("group probabilities sum to {total}, not 1")));
    }
    let mut counts = Vec::with_capacity(2 * group_probability.len());
    for &p in group_probability {
        counts.push(guarded_ceil(p * k as f64 * (1.0 - alpha)));
        counts.push(guarded_ceil(p * k as f64 * alpha));
    }
    BinSpec::from_dense(counts)
}

fn guarded_ceil(x: f64) -> u64 {
    (x - 1e-9 * x.max(1.0)).ceil().max(0.0) as u64
}
