//! Exact Wasserstein (earth mover) cost between weighted point sets, computed
//! as a min-cost flow on the dense bipartite network.
//!
//! Masses are turned into integer capacities by scaling with a common
//! denominator, so the flow solver stays exact and integral.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record};
use crate::error::{invalid, Error, Result};
use crate::flow::{solve_with_dense_block, DenseBlock, FlowNetwork};

/// Dense instances above this many arcs are refused.
pub const MAX_ARCS: usize = 50_000_000;

/// Cheapest coupling arcs per target point handed to the first simplex round.
const SEED_ARCS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    #[default]
    SquaredEuclidean,
    Euclidean,
}

impl CostKind {
    #[inline]
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        match self {
            CostKind::SquaredEuclidean => sq,
            CostKind::Euclidean => sq.sqrt(),
        }
    }
}

impl std::str::FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_euclidean" | "sqeuclidean" => Ok(CostKind::SquaredEuclidean),
            "euclidean" => Ok(CostKind::Euclidean),
            other => Err(invalid(format!("unknown ground cost `{other}`"))),
        }
    }
}

/// Ground dissimilarity between records.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundCost {
    pub kind: CostKind,
    /// Feature indices to compare; `None` uses every feature.
    pub feature_mask: Option<Vec<usize>>,
    /// Append the sensitive code as an extra coordinate.
    pub include_sensitive: bool,
}

impl GroundCost {
    pub fn new(kind: CostKind) -> Self {
        GroundCost {
            kind,
            ..GroundCost::default()
        }
    }

    pub fn with_mask(mut self, mask: Vec<usize>) -> Self {
        self.feature_mask = Some(mask);
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if let Some(mask) = &self.feature_mask {
            if mask.is_empty() && !self.include_sensitive {
                return Err(invalid("feature mask selects nothing"));
            }
            if let Some(&bad) = mask.iter().find(|&&j| j >= dim) {
                return Err(invalid(format!("feature mask index {bad} >= dimension {dim}")));
            }
        }
        Ok(())
    }

    /// Dissimilarity of two raw feature vectors (the mask applies).
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.feature_mask {
            None => self.kind.eval(a, b),
            Some(mask) => {
                let pa: Vec<f64> = mask.iter().map(|&j| a[j]).collect();
                let pb: Vec<f64> = mask.iter().map(|&j| b[j]).collect();
                self.kind.eval(&pa, &pb)
            }
        }
    }

    /// The coordinates of `record` the cost compares.
    pub fn embed(&self, record: &Record) -> Vec<f64> {
        let mut p = match &self.feature_mask {
            None => record.features.clone(),
            Some(mask) => mask.iter().map(|&j| record.features[j]).collect(),
        };
        if self.include_sensitive {
            p.push(record.sensitive as f64);
        }
        p
    }

    pub fn embed_all(&self, data: &Dataset) -> Vec<Vec<f64>> {
        data.records().iter().map(|r| self.embed(r)).collect()
    }
}

fn check_points(points: &[Vec<f64>], what: &str) -> Result<usize> {
    let d = points
        .first()
        .ok_or_else(|| invalid(format!("{what} is empty")))?
        .len();
    if points.iter().any(|p| p.len() != d) {
        return Err(invalid(format!("{what} mixes dimensions")));
    }
    Ok(d)
}

/// Minimum of `sum cost(a_i, b_j) * flow_ij` over integral couplings of the
/// unit counts `units_a` and `units_b` (which must have equal totals).
/// Points are already embedded; `kind` compares them directly.
pub fn transport_units(
    points_a: &[Vec<f64>],
    units_a: &[i64],
    points_b: &[Vec<f64>],
    units_b: &[i64],
    kind: CostKind,
) -> Result<f64> {
    if points_a.len() != units_a.len() || points_b.len() != units_b.len() {
        return Err(invalid("points and masses differ in length"));
    }
    let da = check_points(points_a, "first point set")?;
    let db = check_points(points_b, "second point set")?;
    if da != db {
        return Err(invalid(format!("dimension mismatch: {da} vs {db}")));
    }
    if units_a.iter().chain(units_b).any(|&u| u < 0) {
        return Err(invalid("negative mass"));
    }
    let total_a: i64 = units_a.iter().sum();
    let total_b: i64 = units_b.iter().sum();
    if total_a != total_b {
        return Err(invalid(format!("mass mismatch: {total_a} vs {total_b} units")));
    }

    let left: Vec<usize> = (0..units_a.len()).filter(|&i| units_a[i] > 0).collect();
    let right: Vec<usize> = (0..units_b.len()).filter(|&j| units_b[j] > 0).collect();
    let arcs = left.len() * right.len() + left.len() + right.len();
    if arcs > MAX_ARCS {
        return Err(Error::TooLarge {
            arcs,
            limit: MAX_ARCS,
        });
    }
    if total_a == 0 {
        return Ok(0.0);
    }

    let (nl, nr) = (left.len(), right.len());
    let sink = nl + nr + 1;
    let mut base = FlowNetwork::with_capacity(nl + nr + 2, 0, sink, nl + nr);
    for (k, &i) in left.iter().enumerate() {
        base.add_arc(0, 1 + k, units_a[i], 0.0);
    }
    for (l, &j) in right.iter().enumerate() {
        base.add_arc(1 + nl + l, sink, units_b[j], 0.0);
    }
    let lnodes: Vec<usize> = (1..=nl).collect();
    let rnodes: Vec<usize> = (nl + 1..=nl + nr).collect();
    let cost = |a: usize, b: usize| kind.eval(&points_a[left[a]], &points_b[right[b]]);
    // Node supplies already bound every coupling arc, so one shared
    // capacity equal to the total is exact.
    let block = DenseBlock {
        left: &lnodes,
        right: &rnodes,
        capacity: total_a,
        cost: &cost,
    };
    Ok(solve_with_dense_block(&base, &block, total_a, SEED_ARCS)?.solution.total_cost)
}

/// Wasserstein cost between two weighted point sets under `cost`.
///
/// Masses must be rational with a moderate common denominator (e.g. `1/n`,
/// `K/N`); they are scaled to exact integer capacities. Use
/// [`transport_cost_quantized`] for arbitrary real masses.
pub fn transport_cost(
    points_a: &[Vec<f64>],
    mass_a: &[f64],
    points_b: &[Vec<f64>],
    mass_b: &[f64],
    cost: &GroundCost,
) -> Result<f64> {
    check_masses(mass_a, mass_b)?;
    let denom = mass_a
        .iter()
        .chain(mass_b)
        .try_fold(1u64, |acc, &m| lcm_checked(acc, rational_denominator(m)?))
        .ok_or_else(|| {
            invalid("masses are not rationals with a small common denominator; use the quantized transport")
        })?;
    let scale = denom as f64;
    let units = |ms: &[f64]| -> Vec<i64> { ms.iter().map(|&m| (m * scale).round() as i64).collect() };
    let (ua, ub) = (units(mass_a), units(mass_b));
    let (pa, pb) = (masked(points_a, cost)?, masked(points_b, cost)?);
    Ok(transport_units(&pa, &ua, &pb, &ub, cost.kind)? / scale)
}

/// Wasserstein cost with each side's masses rounded (largest remainder) onto
/// a grid of `resolution` units of total mass. The error is at most about
/// `max_cost * total_mass * n / resolution`.
pub fn transport_cost_quantized(
    points_a: &[Vec<f64>],
    mass_a: &[f64],
    points_b: &[Vec<f64>],
    mass_b: &[f64],
    cost: &GroundCost,
    resolution: u64,
) -> Result<f64> {
    let total = check_masses(mass_a, mass_b)?;
    if resolution == 0 || resolution > 1 << 50 {
        return Err(invalid("resolution out of range"));
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    let ua = largest_remainder(mass_a, resolution);
    let ub = largest_remainder(mass_b, resolution);
    let (pa, pb) = (masked(points_a, cost)?, masked(points_b, cost)?);
    Ok(transport_units(&pa, &ua, &pb, &ub, cost.kind)? / resolution as f64 * total)
}

/// Wasserstein cost between the empirical (uniform) measures of two samples.
pub fn empirical_wd(sample_a: &Dataset, sample_b: &Dataset, cost: &GroundCost) -> Result<f64> {
    if sample_a.dim() != sample_b.dim() {
        return Err(invalid(format!(
            "dimension mismatch: {} vs {}",
            sample_a.dim(),
            sample_b.dim()
        )));
    }
    cost.validate(sample_a.dim())?;
    let (n, m) = (sample_a.len() as u64, sample_b.len() as u64);
    let l = lcm_checked(n, m).ok_or_else(|| invalid("sample sizes too large"))?;
    let ua = vec![(l / n) as i64; n as usize];
    let ub = vec![(l / m) as i64; m as usize];
    let (pa, pb) = (cost.embed_all(sample_a), cost.embed_all(sample_b));
    Ok(transport_units(&pa, &ua, &pb, &ub, cost.kind)? / l as f64)
}

fn masked(points: &[Vec<f64>], cost: &GroundCost) -> Result<Vec<Vec<f64>>> {
    let d = check_points(points, "point set")?;
    cost.validate(d)?;
    Ok(match &cost.feature_mask {
        None => points.to_vec(),
        Some(mask) => points.iter().map(|p| mask.iter().map(|&j| p[j]).collect()).collect(),
    })
}

fn check_masses(mass_a: &[f64], mass_b: &[f64]) -> Result<f64> {
    if mass_a.is_empty() || mass_b.is_empty() {
        return Err(invalid("empty mass vector"));
    }
    if mass_a.iter().chain(mass_b).any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(invalid("masses must be finite and nonnegative"));
    }
    let (ta, tb): (f64, f64) = (mass_a.iter().sum(), mass_b.iter().sum());
    if (ta - tb).abs() > 1e-9 * (1.0 + ta.abs().max(tb.abs())) {
        return Err(invalid(format!("mass mismatch: {ta} vs {tb}")));
    }
    Ok(ta)
}

/// Integer units per entry summing exactly to `resolution`.
pub(crate) fn largest_remainder(masses: &[f64], resolution: u64) -> Vec<i64> {
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return vec![0; masses.len()];
    }
    let exact: Vec<f64> = masses.iter().map(|m| m / total * resolution as f64).collect();
    let mut units: Vec<i64> = exact.iter().map(|x| x.floor() as i64).collect();
    let assigned: i64 = units.iter().sum();
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = resolution as i64 - assigned;
    for &i in order.iter().take(missing.max(0) as usize) {
        units[i] += 1;
    }
    units
}

const MAX_DENOMINATOR: u64 = 1_000_000_000;
const MAX_COMMON_DENOMINATOR: u64 = 1 << 40;

/// Smallest `q <= MAX_DENOMINATOR` with `m * q` integral to within 1e-9
/// relative, found via continued fractions.
fn rational_denominator(m: f64) -> Option<u64> {
    let tol = 1e-9 * m.abs().max(1.0) * 1e-3;
    let (mut h0, mut h1) = (0f64, 1f64);
    let (mut k0, mut k1) = (1f64, 0f64);
    let mut x = m;
    for _ in 0..64 {
        let a = x.floor();
        let (h2, k2) = (a * h1 + h0, a * k1 + k0);
        if k2 > MAX_DENOMINATOR as f64 {
            return None;
        }
        if (h2 / k2 - m).abs() <= tol {
            return Some(k2 as u64);
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = x - a;
        if frac <= 0.0 {
            return None;
        }
        x = 1.0 / frac;
    }
    None
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm_checked(a: u64, b: u64) -> Option<u64> {
    let l = (a / gcd(a, b)).checked_mul(b)?;
    (l <= MAX_COMMON_DENOMINATOR).then_some(l)
}
