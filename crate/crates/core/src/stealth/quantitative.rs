//! Quantitative biasing: the sensitive attribute is a real-valued feature and
//! the disclosed measure must keep its conditional mean inside a band around
//! `gamma` within every decision category:
//!
//! ```text
//! | sum_{i: y_i = y} (s_i - gamma) mu_i |  <=  eps * sum_{i: y_i = y} mu_i
//! ```
//!
//! together with `sum mu = K` and `0 <= mu_i <= 1`. The objective is again
//! `W(mu, nu)`.
//!
//! Solved by ADMM on the split `w = B mu`, where each row pair of `B` maps
//! `mu` to `(g_y, h_y)`, the two sides of the constraint above. The `w`-update
//! projects onto the planar wedges `|g| <= eps h`. The `mu`-update minimizes
//! transport cost plus the quadratic penalty over the transport polytope with
//! away-step Frank-Wolfe; its linear minimization oracle is a min-cost flow
//! whose source arcs carry the penalty gradient as cost.
//!
//! Every few iterations, and once the residuals are small, the atoms collected
//! by Frank-Wolfe seed a restricted master LP over their convex hull with the
//! band as side constraints. Pricing against its duals is one more min-cost
//! flow; when no atom has negative reduced cost the master solution is optimal
//! and is returned instead of the ADMM iterate.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use super::{StealthPlan, SEED_ARCS};
use crate::data::{Dataset, WeightedMeasure};
use crate::error::{invalid, Error, Result};
use crate::flow::{solve_with_dense_block, DenseBlock, FlowNetwork};
use crate::transport::{largest_remainder, transport_units, GroundCost};

#[derive(Debug, Clone, PartialEq)]
pub struct QuantitativeOptions {
    pub rho: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iterations: usize,
    /// Frank-Wolfe iterations allowed per `mu`-update.
    pub inner_iterations: usize,
    /// Allowed band violation relative to the category mass.
    pub band_tol: f64,
}

impl Default for QuantitativeOptions {
    fn default() -> Self {
        QuantitativeOptions {
            rho: 1.0,
            abs_tol: 1e-6,
            rel_tol: 1e-4,
            max_iterations: 500,
            inner_iterations: 2000,
            band_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuantitativeReport {
    pub plan: StealthPlan,
    /// ADMM iterations run; 0 when the reference already satisfies the band.
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Largest `max(0, |g_y| - eps h_y) / h_y` over categories.
    pub band_violation: f64,
}

/// Quantitative stealth measure with default ADMM settings.
pub fn quantitative_stealth_measure(
    data: &Dataset,
    k: u64,
    sensitive_feature: usize,
    target_mean: f64,
    tolerance: f64,
    cost: &GroundCost,
) -> Result<StealthPlan> {
    quantitative_stealth_measure_with(
        data,
        k,
        sensitive_feature,
        target_mean,
        tolerance,
        cost,
        &QuantitativeOptions::default(),
    )
    .map(|r| r.plan)
}

/// Constraint rows: for each nonempty decision category, coefficients of
/// `g_y` and of `h_y` over the records.
struct Band {
    rows: Vec<(Vec<usize>, Vec<f64>)>,
    eps: f64,
}

impl Band {
    fn dim(&self) -> usize {
        2 * self.rows.len()
    }

    fn apply(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for (members, coef) in &self.rows {
            out.push(members.iter().zip(coef).map(|(&i, c)| c * mu[i]).sum());
            out.push(members.iter().map(|&i| mu[i]).sum());
        }
        out
    }

    /// `B^T w` as a dense vector over `n` records.
    fn adjoint(&self, w: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (r, (members, coef)) in self.rows.iter().enumerate() {
            for (&i, c) in members.iter().zip(coef) {
                out[i] += c * w[2 * r] + w[2 * r + 1];
            }
        }
        out
    }

    fn project(&self, w: &[f64]) -> Vec<f64> {
        w.chunks(2)
            .flat_map(|p| {
                let (g, h) = project_wedge(p[0], p[1], self.eps);
                [g, h]
            })
            .collect()
    }

    fn violation(&self, bmu: &[f64]) -> f64 {
        bmu.chunks(2)
            .map(|p| {
                let excess = (p[0].abs() - self.eps * p[1]).max(0.0);
                if p[1] > 0.0 {
                    excess / p[1]
                } else {
                    excess
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Euclidean projection of `(g, h)` onto `{ |g| <= eps h }`.
fn project_wedge(g: f64, h: f64, eps: f64) -> (f64, f64) {
    if g.abs() <= eps * h {
        return (g, h);
    }
    // Nearest point on the boundary ray (eps * sign(g), 1), or the apex.
    let sign = if g >= 0.0 { 1.0 } else { -1.0 };
    let norm = (eps * eps + 1.0).sqrt();
    let (eg, eh) = (sign * eps / norm, 1.0 / norm);
    let t = (g * eg + h * eh).max(0.0);
    (t * eg, t * eh)
}

#[derive(Debug, Clone)]
struct Atom {
    mu: Vec<f64>,
    cost: f64,
    bmu: Vec<f64>,
}

struct Oracle<'a> {
    n: usize,
    k: u64,
    points: &'a [Vec<f64>],
    cost: &'a GroundCost,
    band: &'a Band,
}

impl Oracle<'_> {
    /// Vertex of the transport polytope minimizing
    /// `sum_i lin_i mu_i + sum_ij d_ij pi_ij`.
    fn minimize(&self, lin: &[f64]) -> Result<Atom> {
        let n = self.n;
        let k = self.k as i64;
        let sink = 2 * n + 1;
        let mut base = FlowNetwork::with_capacity(sink + 1, 0, sink, 2 * n);
        for (i, &c) in lin.iter().enumerate() {
            base.add_arc(0, 1 + i, n as i64, c);
        }
        for j in 0..n {
            base.add_arc(1 + n + j, sink, k, 0.0);
        }
        let left: Vec<usize> = (1..=n).collect();
        let right: Vec<usize> = (n + 1..=2 * n).collect();
        let d = |a: usize, b: usize| self.cost.kind.eval(&self.points[a], &self.points[b]);
        let demand = n as i64 * k;
        let block = DenseBlock {
            left: &left,
            right: &right,
            capacity: demand,
            cost: &d,
        };
        let sol = solve_with_dense_block(&base, &block, demand, SEED_ARCS)?;
        let flows = &sol.solution.arc_flows;
        let mu: Vec<f64> = flows[..n].iter().map(|&f| f as f64 / n as f64).collect();
        let transport: f64 = sol.network.arcs[2 * n..]
            .iter()
            .zip(&flows[2 * n..])
            .map(|(a, &f)| a.cost * f as f64)
            .sum();
        let bmu = self.band.apply(&mu);
        Ok(Atom {
            mu,
            cost: transport / n as f64,
            bmu,
        })
    }
}

/// Convex combination of atoms with cached aggregates.
struct ActiveSet {
    atoms: Vec<Atom>,
    weights: Vec<f64>,
    cost: f64,
    bmu: Vec<f64>,
}

impl ActiveSet {
    fn single(atom: Atom) -> Self {
        ActiveSet {
            cost: atom.cost,
            bmu: atom.bmu.clone(),
            atoms: vec![atom],
            weights: vec![1.0],
        }
    }

    fn refresh(&mut self) {
        self.cost = 0.0;
        self.bmu.iter_mut().for_each(|v| *v = 0.0);
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            self.cost += w * a.cost;
            for (acc, v) in self.bmu.iter_mut().zip(&a.bmu) {
                *acc += w * v;
            }
        }
    }

    fn insert(&mut self, atom: Atom) -> usize {
        if let Some(p) = self.atoms.iter().position(|a| a.mu == atom.mu) {
            return p;
        }
        self.atoms.push(atom);
        self.weights.push(0.0);
        self.atoms.len() - 1
    }

    fn prune(&mut self) {
        let mut i = 0;
        while i < self.atoms.len() {
            if self.weights[i] <= 0.0 {
                self.atoms.swap_remove(i);
                self.weights.swap_remove(i);
            } else {
                i += 1;
            }
        }
    }

    fn mu(&self) -> Vec<f64> {
        let n = self.atoms[0].mu.len();
        let mut mu = vec![0.0; n];
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            for (m, v) in mu.iter_mut().zip(&a.mu) {
                *m += w * v;
            }
        }
        mu
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Away-step Frank-Wolfe on `cost(x) + rho/2 |B mu(x) - t|^2`.
fn penalized_update(
    set: &mut ActiveSet,
    oracle: &Oracle,
    t: &[f64],
    rho: f64,
    max_iter: usize,
) -> Result<()> {
    let n = oracle.n;
    for _ in 0..max_iter {
        let r: Vec<f64> = set.bmu.iter().zip(t).map(|(a, b)| a - b).collect();
        let lin_of = |a: &Atom| a.cost + rho * dot(&r, &a.bmu);
        let lin_x = set.cost + rho * dot(&r, &set.bmu);

        let grad_mu: Vec<f64> = oracle.band.adjoint(&r, n).into_iter().map(|v| rho * v).collect();
        let s = oracle.minimize(&grad_mu)?;
        let gap = lin_x - lin_of(&s);
        if gap <= 1e-12 * (1.0 + lin_x.abs()) {
            break;
        }
        let (away, away_lin) = set
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (i, lin_of(a)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("active set is never empty");
        let away_gap = away_lin - lin_x;

        let (d_cost, d_bmu, gamma_max, toward) = if gap >= away_gap {
            let d_bmu: Vec<f64> = s.bmu.iter().zip(&set.bmu).map(|(a, b)| a - b).collect();
            (s.cost - set.cost, d_bmu, 1.0, true)
        } else {
            let a = &set.atoms[away];
            let d_bmu: Vec<f64> = set.bmu.iter().zip(&a.bmu).map(|(x, y)| x - y).collect();
            let w = set.weights[away];
            (set.cost - a.cost, d_bmu, w / (1.0 - w), false)
        };
        let slope = d_cost + rho * dot(&r, &d_bmu);
        let curvature = rho * dot(&d_bmu, &d_bmu);
        let gamma = if curvature > 0.0 {
            (-slope / curvature).clamp(0.0, gamma_max)
        } else if slope < 0.0 {
            gamma_max
        } else {
            0.0
        };
        if gamma <= 0.0 {
            break;
        }

        if toward {
            let si = set.insert(s);
            for w in &mut set.weights {
                *w *= 1.0 - gamma;
            }
            set.weights[si] += gamma;
        } else {
            for w in &mut set.weights {
                *w *= 1.0 + gamma;
            }
            set.weights[away] -= gamma;
            if gamma >= gamma_max {
                set.weights[away] = 0.0;
            }
        }
        let total: f64 = set.weights.iter().map(|w| w.max(0.0)).sum();
        for w in &mut set.weights {
            *w = w.max(0.0) / total;
        }
        set.prune();
        set.refresh();
    }
    Ok(())
}

/// Iterations between polishing attempts.
const POLISH_EVERY: usize = 10;
/// Column-generation rounds per polishing attempt.
const POLISH_ROUNDS: usize = 50;

/// Band rows of an atom as `(g - eps h, g + eps h)` per category; the first
/// must be `<= 0` and the second `>= 0`.
fn band_sides(band: &Band, bmu: &[f64]) -> Vec<(f64, f64)> {
    bmu.chunks(2)
        .map(|p| (p[0] - band.eps * p[1], p[0] + band.eps * p[1]))
        .collect()
}

/// Optimal convex weights of `atoms` under the band, if any exist.
fn master_primal(band: &Band, atoms: &[Atom]) -> Option<Vec<f64>> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = atoms.iter().map(|a| lp.add_var(a.cost, (0.0, f64::INFINITY))).collect();
    let ones: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    let sides: Vec<_> = atoms.iter().map(|a| band_sides(band, &a.bmu)).collect();
    for r in 0..band.rows.len() {
        let upper: Vec<_> = vars.iter().zip(&sides).map(|(&v, sd)| (v, sd[r].0)).collect();
        let lower: Vec<_> = vars.iter().zip(&sides).map(|(&v, sd)| (v, sd[r].1)).collect();
        lp.add_constraint(upper.as_slice(), ComparisonOp::Le, 0.0);
        lp.add_constraint(lower.as_slice(), ComparisonOp::Ge, 0.0);
    }
    let sol = lp.solve().ok()?;
    Some(vars.iter().map(|&v| sol.var_value(v).max(0.0)).collect())
}

/// Dual of the restricted master: `(theta, p, q)` maximizing `theta` subject
/// to `cost_a + sum_r p_r U_ra - q_r L_ra >= theta` for every atom.
fn master_dual(band: &Band, atoms: &[Atom]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let rows = band.rows.len();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let theta = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    let p: Vec<_> = (0..rows).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let q: Vec<_> = (0..rows).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    for a in atoms {
        let mut expr = vec![(theta, 1.0)];
        for (r, (up, lo)) in band_sides(band, &a.bmu).into_iter().enumerate() {
            expr.push((p[r], -up));
            expr.push((q[r], lo));
        }
        lp.add_constraint(expr.as_slice(), ComparisonOp::Le, a.cost);
    }
    let sol = lp.solve().ok()?;
    Some((
        *sol.var_value(theta),
        p.iter().map(|&v| *sol.var_value(v)).collect(),
        q.iter().map(|&v| *sol.var_value(v)).collect(),
    ))
}

/// Column generation over the transport polytope, started from the ADMM
/// atoms. Returns the optimal `mu` once pricing finds no improving vertex.
fn polish(set: &ActiveSet, oracle: &Oracle) -> Result<Option<Vec<f64>>> {
    let band = oracle.band;
    let mut atoms = set.atoms.clone();
    for _ in 0..POLISH_ROUNDS {
        let Some(lambda) = master_primal(band, &atoms) else {
            return Ok(None);
        };
        let Some((theta, p, q)) = master_dual(band, &atoms) else {
            return Ok(None);
        };
        let mut lin = vec![0.0; oracle.n];
        for (r, (members, coef)) in band.rows.iter().enumerate() {
            for (&i, c) in members.iter().zip(coef) {
                lin[i] = p[r] * (c - band.eps) - q[r] * (c + band.eps);
            }
        }
        let s = oracle.minimize(&lin)?;
        let reduced = s.cost + dot(&lin, &s.mu) - theta;
        if reduced >= -1e-10 * (1.0 + theta.abs()) || atoms.iter().any(|a| a.mu == s.mu) {
            let mut mu = vec![0.0; oracle.n];
            for (a, &l) in atoms.iter().zip(&lambda) {
                for (m, v) in mu.iter_mut().zip(&a.mu) {
                    *m += l * v;
                }
            }
            return Ok(Some(mu));
        }
        atoms.push(s);
    }
    Ok(None)
}

/// Checks that some `mu` with `sum mu = K`, `0 <= mu <= 1` meets the band.
fn band_feasible(band: &Band, n: usize, k: u64) -> bool {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let all: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(all.as_slice(), ComparisonOp::Eq, k as f64);
    for (members, coef) in &band.rows {
        let upper: Vec<_> = members.iter().zip(coef).map(|(&i, c)| (vars[i], c - band.eps)).collect();
        let lower: Vec<_> = members.iter().zip(coef).map(|(&i, c)| (vars[i], c + band.eps)).collect();
        lp.add_constraint(upper.as_slice(), ComparisonOp::Le, 0.0);
        lp.add_constraint(lower.as_slice(), ComparisonOp::Ge, 0.0);
    }
    lp.solve().is_ok()
}

fn finish(data: &Dataset, points: &[Vec<f64>], mu: Vec<f64>, cost: &GroundCost) -> Result<StealthPlan> {
    const RESOLUTION: u64 = 1 << 32;
    let n = data.len();
    let measure = WeightedMeasure::new(mu.iter().map(|&m| m.clamp(0.0, 1.0)).collect())?;
    let k = measure.total_mass();
    let objective = if k > 0.0 {
        let ua = largest_remainder(measure.weights(), RESOLUTION);
        let ub = largest_remainder(&vec![1.0; n], RESOLUTION);
        transport_units(points, &ua, points, &ub, cost.kind)? / RESOLUTION as f64 * k
    } else {
        0.0
    };
    Ok(StealthPlan {
        measure,
        bin_spec: None,
        objective,
        objective_per_unit: if k > 0.0 { objective / k } else { 0.0 },
        scaled_by: n as u64,
        objective_exact: true,
    })
}

/// Quantitative stealth measure with explicit ADMM settings and diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn quantitative_stealth_measure_with(
    data: &Dataset,
    k: u64,
    sensitive_feature: usize,
    target_mean: f64,
    tolerance: f64,
    cost: &GroundCost,
    opts: &QuantitativeOptions,
) -> Result<QuantitativeReport> {
    let n = data.len();
    if sensitive_feature >= data.dim() {
        return Err(invalid(format!(
            "sensitive feature {sensitive_feature} >= dimension {}",
            data.dim()
        )));
    }
    if !(tolerance > 0.0 && tolerance.is_finite()) || !target_mean.is_finite() {
        return Err(invalid("tolerance must be positive and target mean finite"));
    }
    if k == 0 || k as usize > n {
        return Err(invalid(format!("K = {k} outside 1..={n}")));
    }
    if !(opts.rho > 0.0) || opts.max_iterations == 0 {
        return Err(invalid("ADMM needs rho > 0 and at least one iteration"));
    }
    cost.validate(data.dim())?;

    let mut rows = Vec::new();
    for y in 0..=1u8 {
        let members: Vec<usize> = (0..n).filter(|&i| data.record(i).decision == y).collect();
        if !members.is_empty() {
            let coef = members
                .iter()
                .map(|&i| data.record(i).features[sensitive_feature] - target_mean)
                .collect();
            rows.push((members, coef));
        }
    }
    let band = Band { rows, eps: tolerance };
    let points = cost.embed_all(data);

    let nu = vec![k as f64 / n as f64; n];
    let nu_violation = band.violation(&band.apply(&nu));
    if nu_violation <= opts.band_tol {
        let plan = StealthPlan {
            measure: WeightedMeasure::new(nu)?,
            bin_spec: None,
            objective: 0.0,
            objective_per_unit: 0.0,
            scaled_by: n as u64,
            objective_exact: true,
        };
        return Ok(QuantitativeReport {
            plan,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            band_violation: nu_violation,
        });
    }
    if !band_feasible(&band, n, k) {
        return Err(Error::InfeasibleBand(format!(
            "no measure of mass {k} keeps the conditional means within {tolerance} of {target_mean}"
        )));
    }

    let oracle = Oracle {
        n,
        k,
        points: &points,
        cost,
        band: &band,
    };
    let rho = opts.rho;
    let p = band.dim();
    let mut set = ActiveSet::single(oracle.minimize(&vec![0.0; n])?);
    let mut z = band.project(&set.bmu);
    let mut u = vec![0.0; p];
    let (mut r_pri, mut r_dual) = (f64::INFINITY, f64::INFINITY);
    for it in 1..=opts.max_iterations {
        let t: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a - b).collect();
        penalized_update(&mut set, &oracle, &t, rho, opts.inner_iterations)?;
        let bmu = set.bmu.clone();
        let z_prev = z;
        let shifted: Vec<f64> = bmu.iter().zip(&u).map(|(a, b)| a + b).collect();
        z = band.project(&shifted);
        for i in 0..p {
            u[i] += bmu[i] - z[i];
        }
        let diff: Vec<f64> = bmu.iter().zip(&z).map(|(a, b)| a - b).collect();
        let dz: Vec<f64> = z.iter().zip(&z_prev).map(|(a, b)| a - b).collect();
        r_pri = norm(&diff);
        r_dual = rho * norm(&band.adjoint(&dz, n));
        let eps_pri = (p as f64).sqrt() * opts.abs_tol + opts.rel_tol * norm(&bmu).max(norm(&z));
        let scaled_u: Vec<f64> = u.iter().map(|v| rho * v).collect();
        let eps_dual = (n as f64).sqrt() * opts.abs_tol + opts.rel_tol * norm(&band.adjoint(&scaled_u, n));
        let violation = band.violation(&bmu);
        log::debug!("admm {it}: primal {r_pri:.3e} dual {r_dual:.3e} band {violation:.3e}");
        let converged = r_pri <= eps_pri && r_dual <= eps_dual && violation <= opts.band_tol;
        let polished = if converged || it % POLISH_EVERY == 0 {
            polish(&set, &oracle)?.filter(|mu| band.violation(&band.apply(mu)) <= opts.band_tol)
        } else {
            None
        };
        if converged || polished.is_some() {
            let mu = polished.unwrap_or_else(|| set.mu());
            let violation = band.violation(&band.apply(&mu));
            let plan = finish(data, &points, mu, cost)?;
            return Ok(QuantitativeReport {
                plan,
                iterations: it,
                primal_residual: r_pri,
                dual_residual: r_dual,
                band_violation: violation,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        primal_residual: r_pri,
        dual_residual: r_dual,
    })
}
