//! One runner per acceptance criterion. Each returns an [`Outcome`]; the
//! topic test files assert on it and the `acceptance` target prints it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stealth_core::detect::{
    estimate_advantage, kolmogorov_survival, ks_one_sample, ks_threshold_detector, ks_two_sample, theorem1_bound,
    theorem1_second_term,
};
use stealth_core::experiment::{run_experiment, summarize, ExperimentConfig, Method, SummaryRow};
use stealth_core::fairness::target_bin_counts;
use stealth_core::flow::{max_flow_value, solve_min_cost_flow_with, PivotRule};
use stealth_core::stealth::{
    bootstrap_stealth_measure, case_control_sample, quantitative_stealth_measure, quantitative_stealth_measure_with,
    sample_objective, stealth_measure, QuantitativeOptions,
};
use stealth_core::synthetic::{generate, GeneratorConfig};
use stealth_core::transport::empirical_wd;
use stealth_core::{BinSpec, CostKind, Dataset, Error, FlowNetwork, GroundCost, Record};

use super::bound_table::BOUND_ORACLE;
use super::{assignment_brute_force, quantitative_lp, transport_ssp};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }

    pub fn assert(&self) {
        assert!(self.pass, "{}", self.detail);
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// ---------------------------------------------------------------- 1

fn find(summary: &[SummaryRow], alpha: f64, method: Method) -> &SummaryRow {
    summary
        .iter()
        .find(|s| (s.alpha - alpha).abs() < 1e-12 && s.method == method)
        .expect("summary row present")
}

/// Desk-scale synthetic sweep: N=1000, d=1, b=0.2, K=200, 50 repetitions.
/// The ground cost includes the sensitive attribute as a coordinate; without
/// it the attacker trades mass across groups and the conditional tests fire.
pub fn synthetic_sweep() -> Outcome {
    let cfg = ExperimentConfig {
        n: 1000,
        d: 1,
        b: 0.2,
        holdout: 200,
        k: 200,
        alphas: vec![0.4, 0.6, 0.8],
        methods: vec![Method::Stealth, Method::CaseControl],
        repetitions: 50,
        significance: 0.05,
        compute_wd: false,
        include_sensitive: true,
        seed: 2019,
        ..ExperimentConfig::default()
    };
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("experiment failed: {e}")),
    };
    let summary = summarize(&report).expect("nonempty");
    let rate = |s: &SummaryRow, t: usize| s.rejection[t].map_or(f64::NAN, |r| r.rate);

    let stealth6 = find(&summary, 0.6, Method::Stealth);
    let dp = stealth6.dp.map_or(f64::NAN, |m| m.mean);
    let a = dp < 0.1;
    let rates6: Vec<f64> = (0..3).map(|t| rate(stealth6, t)).collect();
    let b = rates6.iter().all(|r| (0.0..=0.15).contains(r));
    let mut c = true;
    let mut c_detail = Vec::new();
    for alpha in [0.4, 0.8] {
        let st = find(&summary, alpha, Method::Stealth);
        let cc = find(&summary, alpha, Method::CaseControl);
        let wins = (1..3).any(|t| rate(cc, t) > rate(st, t));
        c &= wins;
        c_detail.push(format!(
            "a={alpha}: cc s1/s0 {:.2}/{:.2} vs stealth {:.2}/{:.2}",
            rate(cc, 1),
            rate(cc, 2),
            rate(st, 1),
            rate(st, 2)
        ));
    }
    Outcome::new(
        a && b && c,
        format!(
            "cost on (x, s); (a) mean DP {dp:.4} < 0.1: {a}; (b) stealth a=0.6 rates {:.3}/{:.3}/{:.3} in [0,0.15]: {b}; (c) {}: {c}; infeasible rows {}",
            rates6[0],
            rates6[1],
            rates6[2],
            c_detail.join("; "),
            report.infeasible_rows()
        ),
    )
}

// ---------------------------------------------------------------- 2

/// Every vector of `parts` integers in `0..=cap` summing to `total`.
fn compositions(total: i64, parts: usize, cap: i64) -> Vec<Vec<i64>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 0..=cap.min(total) {
        for mut rest in compositions(total - first, parts - 1, cap) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Minimum of `W(mu, nu)` over the scaled lattice `mu_i = a_i / N` of `P(k)`.
pub fn lattice_brute_force(data: &Dataset, spec: &BinSpec) -> f64 {
    let n = data.len();
    let k: i64 = spec.total() as i64;
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| sq_dist(&data.record(i).features, &data.record(j).features)).collect())
        .collect();
    let members = data.bin_members();
    let per_bin: Vec<Vec<Vec<i64>>> = members
        .iter()
        .zip(spec.dense())
        .map(|(m, &kb)| compositions(n as i64 * kb as i64, m.len(), n as i64))
        .collect();
    let mut best = f64::INFINITY;
    let mut choice = vec![0usize; per_bin.len()];
    loop {
        let mut supply = vec![0i64; n];
        for (b, &c) in choice.iter().enumerate() {
            for (&i, &a) in members[b].iter().zip(&per_bin[b][c]) {
                supply[i] = a;
            }
        }
        best = best.min(transport_ssp(&cost, &supply, &vec![k; n]) / n as f64);
        let mut b = 0;
        loop {
            if b == choice.len() {
                return best;
            }
            choice[b] += 1;
            if choice[b] < per_bin[b].len() {
                break;
            }
            choice[b] = 0;
            b += 1;
        }
    }
}

pub fn random_lattice_instance(rng: &mut ChaCha8Rng) -> (Dataset, BinSpec) {
    let n = rng.random_range(2..=8);
    let d = rng.random_range(1..=2);
    let recs: Vec<Record> = (0..n)
        .map(|_| {
            let x = (0..d).map(|_| rng.random::<f64>()).collect();
            Record::new(x, rng.random_range(0..2), rng.random_range(0..=1))
        })
        .collect();
    let data = Dataset::new(recs, 2).unwrap();
    let sizes: Vec<u64> = data.bin_members().iter().map(|m| m.len() as u64).collect();
    let k = rng.random_range(1..=4.min(n));
    let mut counts = vec![0u64; 4];
    for _ in 0..k {
        let open: Vec<usize> = (0..4).filter(|&b| counts[b] < sizes[b]).collect();
        counts[open[rng.random_range(0..open.len())]] += 1;
    }
    (data, BinSpec::from_dense(counts).unwrap())
}

pub fn stealth_lattice_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cost = GroundCost::new(CostKind::SquaredEuclidean);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let (data, spec) = random_lattice_instance(&mut rng);
        let plan = match stealth_measure(&data, &spec, &cost) {
            Ok(p) => p,
            Err(e) => return Outcome::new(false, format!("case {case}: {e}")),
        };
        if plan.check(&data, 1e-9).is_err() {
            return Outcome::new(false, format!("case {case}: plan leaves P(k)"));
        }
        let brute = lattice_brute_force(&data, &spec);
        worst = worst.max((plan.objective - brute).abs());
    }
    Outcome::new(worst <= 1e-9, format!("200 instances, max |stealth - brute force| = {worst:.2e} (tol 1e-9)"))
}

// ---------------------------------------------------------------- 3

pub fn transport_permutation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(1..=3);
        let kind = if rng.random::<bool>() { CostKind::SquaredEuclidean } else { CostKind::Euclidean };
        let mut set = || {
            let recs = (0..n)
                .map(|_| Record::new((0..d).map(|_| rng.random::<f64>()).collect(), 0, 0))
                .collect();
            Dataset::new(recs, 1).unwrap()
        };
        let (a, b) = (set(), set());
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| kind.eval(&a.record(i).features, &b.record(j).features)).collect())
            .collect();
        let brute = assignment_brute_force(&cost) / n as f64;
        let got = empirical_wd(&a, &b, &GroundCost::new(kind)).unwrap();
        worst = worst.max((got - brute).abs());
    }
    Outcome::new(worst <= 1e-9, format!("200 pairs, max |empirical_wd - permutation| = {worst:.2e} (tol 1e-9)"))
}

// ---------------------------------------------------------------- 4

pub fn random_network(rng: &mut ChaCha8Rng) -> FlowNetwork {
    let n = rng.random_range(2..=6);
    let m = rng.random_range(0..=7);
    let mut net = FlowNetwork::new(n, 0, n - 1);
    for _ in 0..m {
        let u = rng.random_range(0..n);
        let mut v = rng.random_range(0..n);
        while v == u {
            v = rng.random_range(0..n);
        }
        net.add_arc(u, v, rng.random_range(0..=3), rng.random_range(-3..=5) as f64);
    }
    net
}

/// Every integral flow within capacities and conserving at inner nodes, as
/// (net outflow of source, cost).
pub fn enumerate_flows(net: &FlowNetwork) -> Vec<(i64, f64)> {
    let m = net.arcs.len();
    let mut flow = vec![0i64; m];
    let mut out = Vec::new();
    loop {
        let mut excess = vec![0i64; net.node_count];
        for (a, &f) in net.arcs.iter().zip(&flow) {
            excess[a.from] += f;
            excess[a.to] -= f;
        }
        let inner_ok = (0..net.node_count)
            .filter(|&v| v != net.source && v != net.sink)
            .all(|v| excess[v] == 0);
        if inner_ok && excess[net.source] == -excess[net.sink] {
            let cost = net.arcs.iter().zip(&flow).map(|(a, &f)| a.cost * f as f64).sum();
            out.push((excess[net.source], cost));
        }
        let mut i = 0;
        loop {
            if i == m {
                return out;
            }
            if flow[i] < net.arcs[i].capacity {
                flow[i] += 1;
                break;
            }
            flow[i] = 0;
            i += 1;
        }
    }
}

/// Solver vs enumeration on 500 networks, both pivot rules, every demand
/// 0..=4; certificates (feasibility and complementary slackness) checked on
/// every feasible solve.
pub fn flow_enumeration_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut feasible = 0;
    for case in 0..500 {
        let net = random_network(&mut rng);
        let flows = enumerate_flows(&net);
        let best_max = flows.iter().map(|f| f.0).max().unwrap();
        if max_flow_value(&net) != best_max {
            return Outcome::new(false, format!("case {case}: max flow mismatch"));
        }
        for demand in 0..=4 {
            let best = flows
                .iter()
                .filter(|f| f.0 == demand)
                .map(|f| f.1)
                .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.min(c))));
            for rule in [PivotRule::LowestIndex, PivotRule::BlockSearch] {
                match (best, solve_min_cost_flow_with(&net, demand, rule)) {
                    (Some(c), Ok(sol)) => {
                        if (sol.total_cost - c).abs() >= 1e-9 {
                            return Outcome::new(false, format!("case {case} demand {demand} {rule:?}: cost"));
                        }
                        if let Err(e) = sol.verify(&net, demand) {
                            return Outcome::new(false, format!("case {case} demand {demand} {rule:?}: {e}"));
                        }
                        feasible += 1;
                    }
                    (None, Err(Error::InfeasibleFlow { max_flow, .. })) if max_flow == best_max => {}
                    (b, r) => {
                        return Outcome::new(false, format!("case {case} demand {demand}: oracle {b:?}, solver {r:?}"))
                    }
                }
            }
        }
    }
    Outcome::new(
        true,
        format!("500 networks, {feasible} feasible solves match enumeration within 1e-9 with slackness certified"),
    )
}

// ---------------------------------------------------------------- 5

pub fn dominance() -> Outcome {
    let cost = GroundCost::new(CostKind::SquaredEuclidean);
    let mut margins = Vec::new();
    for inst in 0..20u64 {
        let data = generate(&GeneratorConfig {
            n: 400,
            seed: 100 + inst,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let spec = target_bin_counts(100, 0.6, &[0.5, 0.5]).unwrap();
        let stealth = stealth_measure(&data, &spec, &cost).unwrap().objective;
        let mut total = 0.0;
        for draw in 0..50 {
            let z = case_control_sample(&data, &spec, inst * 1000 + draw).unwrap();
            total += sample_objective(&data, &z.indices, &cost).unwrap();
        }
        let cc = total / 50.0;
        if !(stealth < cc) {
            return Outcome::new(false, format!("instance {inst}: stealth {stealth} >= case-control mean {cc}"));
        }
        margins.push(cc - stealth);
    }
    let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Outcome::new(true, format!("20/20 instances stealth < case-control mean; smallest margin {min:.4}"))
}

// ---------------------------------------------------------------- 6

/// Null rejection rates at 0.05 over 1000 seeds of the one-sample test
/// (K = 200 against Uniform[0,1]) and the two-sample test (200 vs 200).
pub fn null_rejection_rates() -> (f64, f64) {
    let (mut one, mut two) = (0, 0);
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        let (_, p) = ks_two_sample(&a, &b).unwrap();
        two += usize::from(p < 0.05);
        a.sort_by(f64::total_cmp);
        let d = ks_one_sample(&a, |x| x.clamp(0.0, 1.0)).unwrap();
        one += usize::from(kolmogorov_survival(200f64.sqrt() * d) < 0.05);
    }
    (one as f64 / 1000.0, two as f64 / 1000.0)
}

pub fn ks_calibration() -> Outcome {
    let (one, two) = null_rejection_rates();
    let ok = (0.03..=0.08).contains(&one) && (0.03..=0.08).contains(&two);
    Outcome::new(ok, format!("null rejection at 0.05: one-sample {one:.3}, two-sample {two:.3} (need [0.03, 0.08])"))
}

// ---------------------------------------------------------------- 7

pub fn advantage_sanity() -> Outcome {
    let gen = |rng: &mut stealth_core::seed::Rng| (0..50).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
    let phi = ks_threshold_detector(0.15, |x: f64| x.clamp(0.0, 1.0)).unwrap();
    let same = estimate_advantage(gen, gen, |d: &Vec<f64>| phi(d), 2000, 7).unwrap();
    let gen_mu = |rng: &mut stealth_core::seed::Rng| (0..50).map(|_| 2.0 + rng.random::<f64>()).collect::<Vec<_>>();
    let perfect = estimate_advantage(gen_mu, gen, |d: &Vec<f64>| d[0] < 1.5, 2000, 9).unwrap();
    let ok = same.value <= 3.0 * same.standard_error && perfect.value == 0.5;
    Outcome::new(
        ok,
        format!(
            "same generators: value {:.4} <= 3 SE {:.4}; perfect separator: value {}",
            same.value,
            3.0 * same.standard_error,
            perfect.value
        ),
    )
}

// ---------------------------------------------------------------- 8

pub fn bound_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for &(w, k, s, c, tv, expect) in BOUND_ORACLE {
        let got = theorem1_bound(w, k, s, c, tv).unwrap();
        worst = worst.max((got - expect).abs() / expect.abs());
    }
    let has_200 = BOUND_ORACLE.iter().any(|p| p.1 == 200);
    let mut monotone = true;
    for tv in [0.0, 0.1, 0.5, 1.0] {
        for k in 3..=600 {
            let (a, b) = (theorem1_second_term(k, tv), theorem1_second_term(k + 1, tv));
            monotone &= if a >= f64::MIN_POSITIVE { b < a } else { b <= a };
        }
    }
    Outcome::new(
        worst <= 1e-12 && has_200 && monotone,
        format!(
            "{} grid points (K=200 included: {has_200}), max rel err {worst:.2e} (tol 1e-12); second term decreasing for K>=3: {monotone}",
            BOUND_ORACLE.len()
        ),
    )
}

// ---------------------------------------------------------------- 9

/// Uses alpha = 0.8 so the exact optimum is well away from zero.
pub fn bootstrap_consistency() -> Outcome {
    let cost = GroundCost::new(CostKind::SquaredEuclidean);
    let data = generate(&GeneratorConfig {
        n: 400,
        seed: 77,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let spec = target_bin_counts(100, 0.8, &[0.5, 0.5]).unwrap();
    let exact = stealth_measure(&data, &spec, &cost).unwrap();
    let boot = match bootstrap_stealth_measure(&data, &spec, &cost, 100, 30, 5) {
        Ok(p) => p,
        Err(e) => return Outcome::new(false, format!("bootstrap failed: {e}")),
    };
    let rel = (boot.objective - exact.objective).abs() / exact.objective;
    let full = bootstrap_stealth_measure(&data, &spec, &cost, 400, 1, 5).unwrap();
    let identical = full == exact;
    Outcome::new(
        rel <= 0.10 && identical,
        format!(
            "exact {:.6}, bootstrap {:.6} (rel {rel:.3}, tol 0.10); subset=N bit-identical: {identical}",
            exact.objective, boot.objective
        ),
    )
}

// ---------------------------------------------------------------- 10

pub fn quantitative_admm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cost = GroundCost::new(CostKind::SquaredEuclidean).with_mask(vec![0]);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 50 {
        let n = rng.random_range(3..=6);
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        let k = rng.random_range(1..n) as u64;
        let gamma = rng.random_range(0.2..0.8);
        let eps = rng.random_range(0.02..0.2);
        let Some(lp) = quantitative_lp(&x, &s, &y, k as f64, gamma, eps, true) else {
            continue;
        };
        if lp < 1e-9 {
            continue;
        }
        let data = Dataset::new((0..n).map(|i| Record::new(vec![x[i], s[i]], 0, y[i])).collect(), 1).unwrap();
        match quantitative_stealth_measure_with(&data, k, 1, gamma, eps, &cost, &QuantitativeOptions::default()) {
            Ok(rep) if rep.band_violation <= 1e-6 => {
                worst = worst.max((rep.plan.objective - lp).abs() / lp);
            }
            Ok(rep) => return Outcome::new(false, format!("band violated by {}", rep.band_violation)),
            Err(e) => return Outcome::new(false, format!("instance {checked}: {e}")),
        }
        checked += 1;
    }
    // Non-binding band: the reference itself.
    let data = Dataset::new(
        (0..6).map(|i| Record::new(vec![i as f64 / 5.0, (i % 3) as f64 / 2.0], 0, (i % 2) as u8)).collect(),
        1,
    )
    .unwrap();
    let plan = quantitative_stealth_measure(&data, 3, 1, 0.5, 10.0, &cost).unwrap();
    let uniform = plan.measure.weights().iter().all(|&w| w == 0.5) && plan.objective == 0.0;
    Outcome::new(
        worst <= 1e-4 && uniform,
        format!("50 binding instances, max rel err vs LP {worst:.2e} (tol 1e-4); non-binding returns nu exactly: {uniform}"),
    )
}
