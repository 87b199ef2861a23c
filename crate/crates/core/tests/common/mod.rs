//! Independent oracles shared by the integration tests. None of them touch
//! the crate's flow solver.
#![allow(dead_code)]

pub mod bound_table;
pub mod criteria;

use minilp::{ComparisonOp, OptimizationDirection, Problem};

/// Optimal value of the quantitative-band problem as one LP over the
/// coupling: variables `pi_ij >= 0`, `mu_i = sum_j pi_ij <= 1`,
/// `sum_i pi_ij = K/N`, and per decision category
/// `|sum (s_i - gamma) mu_i| <= eps sum mu_i`. `None` when infeasible.
pub fn quantitative_lp(
    points: &[f64],
    s: &[f64],
    y: &[u8],
    k: f64,
    gamma: f64,
    eps: f64,
    squared: bool,
) -> Option<f64> {
    let n = points.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut pi = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let d = (points[i] - points[j]).abs();
            pi.push(lp.add_var(if squared { d * d } else { d }, (0.0, f64::INFINITY)));
        }
    }
    for i in 0..n {
        let row: Vec<_> = (0..n).map(|j| (pi[i * n + j], 1.0)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Le, 1.0);
    }
    for j in 0..n {
        let col: Vec<_> = (0..n).map(|i| (pi[i * n + j], 1.0)).collect();
        lp.add_constraint(col.as_slice(), ComparisonOp::Eq, k / n as f64);
    }
    for cat in 0..=1u8 {
        let members: Vec<usize> = (0..n).filter(|&i| y[i] == cat).collect();
        if members.is_empty() {
            continue;
        }
        let mut up = Vec::new();
        let mut lo = Vec::new();
        for &i in &members {
            for j in 0..n {
                up.push((pi[i * n + j], s[i] - gamma - eps));
                lo.push((pi[i * n + j], s[i] - gamma + eps));
            }
        }
        lp.add_constraint(up.as_slice(), ComparisonOp::Le, 0.0);
        lp.add_constraint(lo.as_slice(), ComparisonOp::Ge, 0.0);
    }
    lp.solve().ok().map(|sol| sol.objective())
}

/// Minimum of `sum_i cost[i][perm(i)]` over all permutations, by Heap's
/// algorithm.
pub fn assignment_brute_force(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |p: &[usize]| (0..n).map(|i| cost[i][p[i]]).sum::<f64>();
    let mut best = eval(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Transportation problem `min sum c_ij x_ij` with integer row supplies and
/// column demands (equal totals), by successive shortest paths with
/// Bellman-Ford on the residual graph.
pub fn transport_ssp(cost: &[Vec<f64>], supply: &[i64], demand: &[i64]) -> f64 {
    let (n, m) = (supply.len(), demand.len());
    // nodes: 0 source, 1..=n rows, n+1..=n+m cols, n+m+1 sink
    let size = n + m + 2;
    let sink = size - 1;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut cap: Vec<i64> = Vec::new();
    let mut w: Vec<f64> = Vec::new();
    let mut add = |u: usize, v: usize, c: i64, cost: f64| {
        edges.extend([(u, v), (v, u)]);
        cap.extend([c, 0]);
        w.extend([cost, -cost]);
    };
    for i in 0..n {
        add(0, 1 + i, supply[i], 0.0);
    }
    for i in 0..n {
        for j in 0..m {
            add(1 + i, 1 + n + j, i64::MAX / 4, cost[i][j]);
        }
    }
    for j in 0..m {
        add(1 + n + j, sink, demand[j], 0.0);
    }
    let mut total = 0.0;
    loop {
        let mut dist = vec![f64::INFINITY; size];
        let mut prev = vec![usize::MAX; size];
        dist[0] = 0.0;
        for _ in 0..size {
            let mut changed = false;
            for (e, &(u, v)) in edges.iter().enumerate() {
                if cap[e] > 0 && dist[u] + w[e] < dist[v] - 1e-12 {
                    dist[v] = dist[u] + w[e];
                    prev[v] = e;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if !dist[sink].is_finite() {
            return total;
        }
        let mut push = i64::MAX;
        let mut v = sink;
        while v != 0 {
            let e = prev[v];
            push = push.min(cap[e]);
            v = edges[e].0;
        }
        let mut v = sink;
        while v != 0 {
            let e = prev[v];
            cap[e] -= push;
            cap[e ^ 1] += push;
            total += push as f64 * w[e];
            v = edges[e].0;
        }
    }
}
