//! Bootstrap-type approximation: solve on random subsets, average the
//! per-round measures, and map the average back onto the bin counts.

use rand::seq::index;

use super::{capped_rescale, stealth_measure, StealthPlan};
use crate::data::{BinSpec, Dataset, WeightedMeasure};
use crate::error::{invalid, Error, Result};
use crate::seed::{self, derive_seed};
use crate::transport::{largest_remainder, transport_units, GroundCost, MAX_ARCS};

/// Resolution (units of total mass) used for the exact cost of the averaged
/// measure, whose weights are not on a small rational grid.
const OBJECTIVE_RESOLUTION: u64 = 1 << 32;

/// Per-round counts `k'` with total `round(K N' / N)`, split across bins by
/// largest remainder of `k(s,y) N' / N`.
fn round_spec(spec: &BinSpec, subset: usize, n: usize) -> Result<BinSpec> {
    let k = spec.total();
    let target = ((k as f64) * subset as f64 / n as f64).round() as u64;
    let shares: Vec<f64> = spec.dense().iter().map(|&kb| kb as f64).collect();
    let counts = if k == 0 {
        vec![0; shares.len()]
    } else {
        largest_remainder(&shares, target).into_iter().map(|c| c as u64).collect()
    };
    BinSpec::from_dense(counts)
}

/// Averages `rounds` stealth measures, each solved on a uniform random subset
/// of `subset_size` records with proportionally scaled bin counts.
///
/// The average is rescaled inside every bin to the full counts `k(s,y)` with
/// weights capped at one, so the plan stays in `P(k)` unless too few records
/// of a bin were ever drawn. With `subset_size == N` every round solves the
/// full problem and the result equals [`stealth_measure`].
pub fn bootstrap_stealth_measure(
    data: &Dataset,
    spec: &BinSpec,
    cost: &GroundCost,
    subset_size: usize,
    rounds: usize,
    seed: u64,
) -> Result<StealthPlan> {
    let n = data.len();
    if subset_size == 0 || subset_size > n {
        return Err(invalid(format!("subset size {subset_size} outside 1..={n}")));
    }
    if rounds == 0 {
        return Err(invalid("bootstrap needs at least one round"));
    }
    spec.check_feasible(data)?;
    if subset_size == n {
        // Every round sees the same problem.
        return stealth_measure(data, spec, cost);
    }

    let sub_spec = round_spec(spec, subset_size, n)?;
    let mut sum = vec![0.0; n];
    let mut objectives = 0.0;
    for round in 0..rounds {
        let mut rng = seed::rng(derive_seed(seed, &[round as u64]));
        let mut picked = index::sample(&mut rng, n, subset_size).into_vec();
        picked.sort_unstable();
        let sub = data.subset(&picked)?;
        let deficits = sub_spec.deficits(&sub);
        if !deficits.is_empty() {
            return Err(Error::InfeasibleRound { round, bins: deficits });
        }
        let plan = stealth_measure(&sub, &sub_spec, cost)?;
        for (&i, &w) in picked.iter().zip(plan.measure.weights()) {
            sum[i] += w;
        }
        objectives += plan.objective;
    }

    let mut weights = vec![0.0; n];
    for (b, members) in data.bin_members().iter().enumerate() {
        let avg: Vec<f64> = members.iter().map(|&i| sum[i] / rounds as f64).collect();
        let kb = spec.dense()[b] as f64;
        let support = avg.iter().filter(|&&w| w > 0.0).count() as f64;
        let scaled = if kb == 0.0 {
            vec![0.0; avg.len()]
        } else if support >= kb {
            capped_rescale(&avg, kb)
        } else {
            // Not enough drawn records to carry k(s,y) at weight <= 1.
            avg.iter().map(|&w| if w > 0.0 { 1.0 } else { 0.0 }).collect()
        };
        for (&i, w) in members.iter().zip(scaled) {
            weights[i] = w;
        }
    }
    let measure = WeightedMeasure::new(weights)?;
    let k = measure.total_mass();

    let (objective, exact) = if n * n <= MAX_ARCS && k > 0.0 {
        let points = cost.embed_all(data);
        let units_mu = largest_remainder(measure.weights(), OBJECTIVE_RESOLUTION);
        let units_nu = largest_remainder(&vec![1.0; n], OBJECTIVE_RESOLUTION);
        let c = transport_units(&points, &units_mu, &points, &units_nu, cost.kind)?;
        (c / OBJECTIVE_RESOLUTION as f64 * k, true)
    } else {
        // Each round's cost is at mass K'; scale the mean to mass K.
        let k_round = sub_spec.total().max(1) as f64;
        (objectives / rounds as f64 * k / k_round, false)
    };
    Ok(StealthPlan {
        measure,
        bin_spec: Some(spec.clone()),
        objective,
        objective_per_unit: if k > 0.0 { objective / k } else { 0.0 },
        scaled_by: subset_size as u64,
        objective_exact: exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, GeneratorConfig};
    use crate::transport::CostKind;

    #[test]
    fn round_counts_are_consistent() {
        let spec = BinSpec::from_dense(vec![40, 60, 40, 60]).unwrap();
        let s = round_spec(&spec, 100, 400).unwrap();
        assert_eq!(s.dense(), &[10, 15, 10, 15]);
        let spec = BinSpec::from_dense(vec![3, 3, 3, 3]).unwrap();
        let s = round_spec(&spec, 10, 40).unwrap();
        assert_eq!(s.total(), 3);
    }

    #[test]
    fn full_subset_is_exact_solve() {
        let data = generate(&GeneratorConfig {
            n: 60,
            seed: 3,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let spec = crate::fairness::target_bin_counts(12, 0.6, &[0.5, 0.5]).unwrap();
        let cost = GroundCost::new(CostKind::SquaredEuclidean);
        let exact = stealth_measure(&data, &spec, &cost).unwrap();
        let boot = bootstrap_stealth_measure(&data, &spec, &cost, 60, 1, 9).unwrap();
        assert_eq!(exact, boot);
        assert!(bootstrap_stealth_measure(&data, &spec, &cost, 61, 1, 9).is_err());
        assert!(bootstrap_stealth_measure(&data, &spec, &cost, 30, 0, 9).is_err());
    }

    #[test]
    fn subset_rounds_keep_bin_masses() {
        let data = generate(&GeneratorConfig {
            n: 120,
            seed: 4,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let spec = crate::fairness::target_bin_counts(24, 0.6, &[0.5, 0.5]).unwrap();
        let cost = GroundCost::new(CostKind::SquaredEuclidean);
        let plan = bootstrap_stealth_measure(&data, &spec, &cost, 60, 5, 1).unwrap();
        plan.check(&data, 1e-9).unwrap();
        assert!(plan.objective_exact);
        let exact = stealth_measure(&data, &spec, &cost).unwrap();
        assert!(plan.objective >= exact.objective - 1e-9);
    }

    #[test]
    fn infeasible_round_is_reported() {
        // Two records carry bin (1,1); a round that draws neither fails.
        let mut recs: Vec<_> = (0..18).map(|i| crate::data::Record::new(vec![i as f64], 0, 0)).collect();
        recs.push(crate::data::Record::new(vec![0.5], 1, 1));
        recs.push(crate::data::Record::new(vec![1.5], 1, 1));
        let data = Dataset::new(recs, 2).unwrap();
        let spec = BinSpec::from_dense(vec![2, 0, 0, 2]).unwrap();
        let cost = GroundCost::new(CostKind::SquaredEuclidean);
        match bootstrap_stealth_measure(&data, &spec, &cost, 10, 20, 2) {
            Err(Error::InfeasibleRound { bins, .. }) => assert_eq!(bins[0].label.index(), 3),
            other => panic!("{other:?}"),
        }
    }
}
