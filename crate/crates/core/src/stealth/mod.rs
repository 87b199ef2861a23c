//! The attacker side: the stealthily biased measure and concrete draws.
//!
//! Layout of the flow network built here (`B` bins, `N` records):
//!
//! ```text
//! node 0                 supersource
//! nodes 1..=B            one node per (s, y) bin, in BinLabel::index order
//! nodes B+1..=B+N        l_i, one per record
//! nodes B+N+1..=B+2N     r_j, one per record
//! node  B+2N+1           supersink
//! ```
//!
//! Capacities are multiplied by `N` so that the uniform reference mass
//! `K/N` per record becomes the integer `K` and every flow is integral:
//! source to bin `N k(s,y)`, bin to `l_i` `N`, `l_i` to `r_j` `N K` with cost
//! `d(x_i, x_j)`, `r_j` to sink `K`. The demand is `N K` and
//! `mu_i = flow(bin -> l_i) / N`.

mod bootstrap;
mod quantitative;

use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::data::{BinSpec, Dataset, WeightedMeasure};
use crate::error::{invalid, Result};
use crate::flow::{solve_with_dense_block, DenseBlock, FlowNetwork};
use crate::seed;
use crate::transport::{transport_units, GroundCost, MAX_ARCS};

pub use bootstrap::bootstrap_stealth_measure;
pub use quantitative::{
    quantitative_stealth_measure, quantitative_stealth_measure_with, QuantitativeOptions, QuantitativeReport,
};

/// Cheapest transport arcs per reference record in the first simplex round.
const SEED_ARCS: usize = 16;

/// An optimal (or, for the bootstrap, approximate) biased measure.
#[derive(Debug, Clone, PartialEq)]
pub struct StealthPlan {
    /// `mu` over the records of the dataset it was solved on.
    pub measure: WeightedMeasure,
    /// The per-bin counts `mu` satisfies; `None` for the quantitative
    /// variant, which constrains means instead of counts.
    pub bin_spec: Option<BinSpec>,
    /// `W(mu, nu)` with both measures at total mass `K`.
    pub objective: f64,
    /// `W(mu / K, nu / K)`, the same cost per unit of mass.
    pub objective_per_unit: f64,
    /// The factor `N` applied to all capacities.
    pub scaled_by: u64,
    /// False when `objective` is an estimate rather than an exact transport
    /// cost of `measure` (large bootstrap runs).
    pub objective_exact: bool,
}

impl StealthPlan {
    pub fn sample_size(&self) -> f64 {
        self.measure.total_mass()
    }

    /// Checks total mass, per-bin masses against the spec (within `tol`) and
    /// the `[0, 1]` weight bounds.
    pub fn check(&self, data: &Dataset, tol: f64) -> Result<()> {
        if self.measure.len() != data.len() {
            return Err(invalid(format!(
                "plan has {} weights for {} records",
                self.measure.len(),
                data.len()
            )));
        }
        self.measure.check_invariants()?;
        if let Some(spec) = &self.bin_spec {
            for (b, (&mass, &k)) in self.measure.bin_masses(data).iter().zip(spec.dense()).enumerate() {
                if (mass - k as f64).abs() > tol {
                    return Err(invalid(format!("bin {b} has mass {mass}, spec requires {k}")));
                }
            }
        }
        Ok(())
    }
}

/// A concrete disclosed subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleDraw {
    /// Selected record indices, ascending and distinct.
    pub indices: Vec<usize>,
    pub seed: u64,
}

impl SampleDraw {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn subset(&self, data: &Dataset) -> Result<Dataset> {
        data.subset(&self.indices)
    }
}

struct Layout {
    bins: usize,
    n: usize,
}

impl Layout {
    fn bin(&self, b: usize) -> usize {
        1 + b
    }
    fn left(&self, i: usize) -> usize {
        1 + self.bins + i
    }
    fn right(&self, j: usize) -> usize {
        1 + self.bins + self.n + j
    }
    fn sink(&self) -> usize {
        1 + self.bins + 2 * self.n
    }
}

/// Source and bin arcs; returns the network and, per record, the index of
/// its `bin -> l_i` arc.
fn base_network(data: &Dataset, spec: &BinSpec, lay: &Layout) -> (FlowNetwork, Vec<usize>) {
    let n = data.len();
    let k = spec.total() as i64;
    let mut net = FlowNetwork::with_capacity(lay.sink() + 1, 0, lay.sink(), lay.bins + 2 * n);
    for (b, &kb) in spec.dense().iter().enumerate() {
        net.add_arc(0, lay.bin(b), n as i64 * kb as i64, 0.0);
    }
    let unit_arcs = (0..n)
        .map(|i| net.add_arc(lay.bin(data.bin_of(i).index()), lay.left(i), n as i64, 0.0))
        .collect();
    for j in 0..n {
        net.add_arc(lay.right(j), lay.sink(), k, 0.0);
    }
    (net, unit_arcs)
}

/// The full scaled network, with every `l_i -> r_j` arc explicit (left-major,
/// placed between the unit arcs and the sink arcs).
pub fn build_stealth_network(data: &Dataset, spec: &BinSpec, cost: &GroundCost) -> Result<FlowNetwork> {
    spec.check_feasible(data)?;
    cost.validate(data.dim())?;
    let n = data.len();
    let lay = Layout {
        bins: spec.dense().len(),
        n,
    };
    let (base, _) = base_network(data, spec, &lay);
    let k = spec.total() as i64;
    let points = cost.embed_all(data);
    let mut net = FlowNetwork::with_capacity(base.node_count, base.source, base.sink, lay.bins + n * n + 2 * n);
    net.arcs.extend_from_slice(&base.arcs[..lay.bins + n]);
    for i in 0..n {
        for j in 0..n {
            net.add_arc(lay.left(i), lay.right(j), n as i64 * k, cost.kind.eval(&points[i], &points[j]));
        }
    }
    net.arcs.extend_from_slice(&base.arcs[lay.bins + n..]);
    Ok(net)
}

/// Solves for the measure in `P(k)` closest to the uniform reference.
pub fn stealth_measure(data: &Dataset, spec: &BinSpec, cost: &GroundCost) -> Result<StealthPlan> {
    spec.check_feasible(data)?;
    cost.validate(data.dim())?;
    let n = data.len();
    if n * n > MAX_ARCS {
        return Err(crate::Error::TooLarge {
            arcs: n * n,
            limit: MAX_ARCS,
        });
    }
    let k = spec.total();
    let lay = Layout {
        bins: spec.dense().len(),
        n,
    };
    let (base, unit_arcs) = base_network(data, spec, &lay);
    let demand = n as i64 * k as i64;

    let points = cost.embed_all(data);
    let left: Vec<usize> = (0..n).map(|i| lay.left(i)).collect();
    let right: Vec<usize> = (0..n).map(|j| lay.right(j)).collect();
    let arc_cost = |a: usize, b: usize| cost.kind.eval(&points[a], &points[b]);
    let block = DenseBlock {
        left: &left,
        right: &right,
        capacity: demand,
        cost: &arc_cost,
    };
    let solved = solve_with_dense_block(&base, &block, demand, SEED_ARCS)?;
    let flows = &solved.solution.arc_flows;
    let weights = unit_arcs.iter().map(|&e| flows[e] as f64 / n as f64).collect();
    let total = solved.solution.total_cost;
    Ok(StealthPlan {
        measure: WeightedMeasure::new(weights)?,
        bin_spec: Some(spec.clone()),
        objective: total / n as f64,
        objective_per_unit: if k == 0 { 0.0 } else { total / (n as f64 * k as f64) },
        scaled_by: n as u64,
        objective_exact: true,
    })
}

/// Exact `W(Z, nu)` between the disclosed subset (unit mass per selected
/// record) and the uniform reference with the same total mass.
pub fn sample_objective(data: &Dataset, indices: &[usize], cost: &GroundCost) -> Result<f64> {
    cost.validate(data.dim())?;
    let n = data.len();
    if indices.is_empty() {
        return Ok(0.0);
    }
    let k = indices.len() as i64;
    let mut units_a = vec![0i64; n];
    for &i in indices {
        if i >= n {
            return Err(invalid(format!("index {i} out of range")));
        }
        units_a[i] += n as i64;
    }
    let points = cost.embed_all(data);
    Ok(transport_units(&points, &units_a, &points, &vec![k; n], cost.kind)? / n as f64)
}

/// Draws exactly `k(s, y)` records per bin with inclusion probability
/// `mu_i` by systematic sampling inside each bin. A plan without a bin spec
/// (quantitative variant) is drawn as one stratum of size `round(sum mu)`.
pub fn draw_sample(data: &Dataset, plan: &StealthPlan, seed: u64) -> Result<SampleDraw> {
    if plan.measure.len() != data.len() {
        return Err(invalid("plan does not match dataset size"));
    }
    let strata: Vec<(Vec<usize>, usize)> = match &plan.bin_spec {
        Some(spec) => {
            spec.check_feasible(data)?;
            data.bin_members()
                .into_iter()
                .zip(spec.dense())
                .map(|(members, &k)| (members, k as usize))
                .collect()
        }
        None => {
            let total = plan.measure.total_mass();
            if (total - total.round()).abs() > 1e-6 {
                return Err(invalid(format!("plan mass {total} is not an integer")));
            }
            vec![((0..data.len()).collect(), total.round() as usize)]
        }
    };
    let mut rng = seed::rng(seed);
    let mut indices = Vec::new();
    for (members, k) in strata {
        if k == 0 {
            continue;
        }
        let mu: Vec<f64> = members.iter().map(|&i| plan.measure.weights()[i]).collect();
        let p = capped_rescale(&mu, k as f64);
        for pos in systematic(&p, k, rng.random::<f64>()) {
            indices.push(members[pos]);
        }
    }
    indices.sort_unstable();
    Ok(SampleDraw { indices, seed })
}

/// Rescales nonnegative `w` to sum to `target` with every entry capped at 1
/// (water filling). Uniform if `w` is all zero. Needs `target <= w.len()`.
pub(crate) fn capped_rescale(w: &[f64], target: f64) -> Vec<f64> {
    let n = w.len();
    if target >= n as f64 {
        return vec![1.0; n];
    }
    let base: Vec<f64> = if w.iter().sum::<f64>() > 0.0 {
        w.to_vec()
    } else {
        vec![1.0; n]
    };
    let mut capped = vec![false; n];
    loop {
        let fixed = capped.iter().filter(|&&c| c).count() as f64;
        let free: f64 = base.iter().zip(&capped).filter(|(_, &c)| !c).map(|(x, _)| x).sum();
        let scale = (target - fixed) / free;
        let mut changed = false;
        for i in 0..n {
            if !capped[i] && base[i] * scale > 1.0 {
                capped[i] = true;
                changed = true;
            }
        }
        if !changed {
            return (0..n)
                .map(|i| if capped[i] { 1.0 } else { base[i] * scale })
                .collect();
        }
    }
}

/// Positions picked by systematic sampling with start `u` in `[0, 1)` on
/// probabilities `p` (sum `k`, each at most 1). Rounding collisions move to
/// the next unpicked position, so exactly `k` distinct positions return.
fn systematic(p: &[f64], k: usize, u: f64) -> Vec<usize> {
    let n = p.len();
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &x in p {
        acc += x;
        cum.push(acc);
    }
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(k);
    let mut i = 0;
    for m in 0..k {
        let point = u + m as f64;
        while i + 1 < n && cum[i] <= point {
            i += 1;
        }
        let mut pick = i;
        while taken[pick] {
            pick = (pick + 1) % n;
        }
        taken[pick] = true;
        out.push(pick);
    }
    out
}

/// Uniform `k(s, y)`-subset of every bin.
pub fn case_control_sample(data: &Dataset, spec: &BinSpec, seed: u64) -> Result<SampleDraw> {
    spec.check_feasible(data)?;
    let mut rng = seed::rng(seed);
    let mut indices = Vec::with_capacity(spec.total() as usize);
    for (b, members) in data.bin_members().iter().enumerate() {
        let k = spec.dense()[b] as usize;
        indices.extend(index::sample(&mut rng, members.len(), k).into_iter().map(|p| members[p]));
    }
    indices.sort_unstable();
    Ok(SampleDraw { indices, seed })
}

/// Uniform `k`-subset of the whole dataset, ignoring bins.
pub fn random_sample(data: &Dataset, k: usize, seed: u64) -> Result<SampleDraw> {
    if k > data.len() {
        return Err(invalid(format!("cannot draw {k} of {} records", data.len())));
    }
    let mut rng = seed::rng(seed);
    let mut indices = index::sample(&mut rng, data.len(), k).into_vec();
    indices.sort_unstable();
    Ok(SampleDraw { indices, seed })
}

pub fn write_plan_csv<W: Write>(writer: W, plan: &StealthPlan) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["index", "mu"])?;
    for (i, mu) in plan.measure.weights().iter().enumerate() {
        w.write_record([i.to_string(), mu.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_draw_csv<W: Write>(writer: W, draw: &SampleDraw) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["index"])?;
    for i in &draw.indices {
        w.write_record([i.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_plan(path: impl AsRef<Path>, plan: &StealthPlan) -> Result<()> {
    write_plan_csv(std::fs::File::create(path)?, plan)
}

pub fn save_draw(path: impl AsRef<Path>, draw: &SampleDraw) -> Result<()> {
    write_draw_csv(std::fs::File::create(path)?, draw)
}
