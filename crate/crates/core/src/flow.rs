//! Exact minimum-cost flow on capacitated directed graphs with integer
//! capacities and real costs.
//!
//! The solver is a primal network simplex over a strongly feasible spanning
//! tree (the leaving arc is the last blocking arc met when walking the pivot
//! cycle in flow direction starting at the join node). That leaving rule alone
//! guarantees termination under any entering rule, so both the strict
//! lowest-index rule and the faster block search are offered. Optimality is
//! certified by the returned node potentials.

use std::collections::VecDeque;

use crate::error::{invalid, Error, Result};

/// Absolute slack allowed on the complementary slackness certificate.
pub const SLACKNESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub capacity: i64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    pub node_count: usize,
    pub arcs: Vec<Arc>,
    pub source: usize,
    pub sink: usize,
}

impl FlowNetwork {
    pub fn new(node_count: usize, source: usize, sink: usize) -> Self {
        FlowNetwork {
            node_count,
            arcs: Vec::new(),
            source,
            sink,
        }
    }

    pub fn with_capacity(node_count: usize, source: usize, sink: usize, arcs: usize) -> Self {
        FlowNetwork {
            node_count,
            arcs: Vec::with_capacity(arcs),
            source,
            sink,
        }
    }

    /// Appends an arc and returns its index.
    pub fn add_arc(&mut self, from: usize, to: usize, capacity: i64, cost: f64) -> usize {
        self.arcs.push(Arc {
            from,
            to,
            capacity,
            cost,
        });
        self.arcs.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.source >= self.node_count || self.sink >= self.node_count {
            return Err(invalid("source or sink out of range"));
        }
        if self.source == self.sink {
            return Err(invalid("source and sink coincide"));
        }
        if self.node_count > u32::MAX as usize - 1 {
            return Err(invalid("too many nodes"));
        }
        for (i, a) in self.arcs.iter().enumerate() {
            if a.from >= self.node_count || a.to >= self.node_count {
                return Err(invalid(format!("arc {i} references a missing node")));
            }
            if a.capacity < 0 {
                return Err(invalid(format!("arc {i} has negative capacity")));
            }
            if !a.cost.is_finite() {
                return Err(invalid(format!("arc {i} has a non-finite cost")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    pub arc_flows: Vec<i64>,
    pub total_cost: f64,
    /// Node potentials. The reduced cost of arc `(u, v)` is
    /// `cost + potentials[u] - potentials[v]`.
    pub potentials: Vec<f64>,
}

impl FlowSolution {
    pub fn reduced_cost(&self, arc: &Arc) -> f64 {
        arc.cost + self.potentials[arc.from] - self.potentials[arc.to]
    }

    /// Checks capacity bounds, conservation, the cost identity and
    /// complementary slackness against `network` and `demand`.
    pub fn verify(&self, network: &FlowNetwork, demand: i64) -> std::result::Result<(), String> {
        if self.arc_flows.len() != network.arcs.len() {
            return Err("flow vector length mismatch".into());
        }
        let mut excess = vec![0i64; network.node_count];
        let mut cost = 0.0;
        for (i, (a, &f)) in network.arcs.iter().zip(&self.arc_flows).enumerate() {
            if f < 0 || f > a.capacity {
                return Err(format!("arc {i} flow {f} outside [0, {}]", a.capacity));
            }
            excess[a.from] -= f;
            excess[a.to] += f;
            cost += a.cost * f as f64;
            let rc = self.reduced_cost(a);
            if f < a.capacity && rc < -SLACKNESS_TOL {
                return Err(format!("arc {i} unsaturated with reduced cost {rc}"));
            }
            if f > 0 && rc > SLACKNESS_TOL {
                return Err(format!("arc {i} carries flow with reduced cost {rc}"));
            }
        }
        for (v, &e) in excess.iter().enumerate() {
            let want = if v == network.source {
                -demand
            } else if v == network.sink {
                demand
            } else {
                0
            };
            if e != want {
                return Err(format!("node {v} has excess {e}, expected {want}"));
            }
        }
        if (cost - self.total_cost).abs() > 1e-9 * (1.0 + self.total_cost.abs()) {
            return Err(format!("total cost {} but arcs sum to {cost}", self.total_cost));
        }
        Ok(())
    }
}

/// Entering-arc selection for the network simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PivotRule {
    /// Lowest-index arc with negative reduced cost (Bland).
    LowestIndex,
    /// Most negative reduced cost within cyclic blocks of about `sqrt(m)` arcs.
    #[default]
    BlockSearch,
}

/// Solves min-cost flow of value `demand` from `network.source` to
/// `network.sink` with the default pivot rule.
pub fn solve_min_cost_flow(network: &FlowNetwork, demand: i64) -> Result<FlowSolution> {
    solve_min_cost_flow_with(network, demand, PivotRule::default())
}

pub fn solve_min_cost_flow_with(
    network: &FlowNetwork,
    demand: i64,
    rule: PivotRule,
) -> Result<FlowSolution> {
    network.validate()?;
    if demand < 0 {
        return Err(invalid("demand must be nonnegative"));
    }
    let max_flow = max_flow_value(network);
    if max_flow < demand {
        return Err(Error::InfeasibleFlow { demand, max_flow });
    }
    let mut spx = Simplex::new(network, demand, 0.0);
    spx.run(rule);
    if spx.artificial_flow() != 0 {
        // Unreachable when the max-flow check passed.
        return Err(Error::InfeasibleFlow { demand, max_flow });
    }
    Ok(spx.into_solution(network))
}

const STATE_UPPER: i8 = -1;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;
const NONE: u32 = u32::MAX;

struct Simplex {
    node_num: usize,
    arc_num: usize,
    source: Vec<u32>,
    target: Vec<u32>,
    cap: Vec<i64>,
    cost: Vec<f64>,
    flow: Vec<i64>,
    state: Vec<i8>,

    pi: Vec<f64>,
    parent: Vec<u32>,
    pred: Vec<u32>,
    pred_dir: Vec<i8>,
    thread: Vec<u32>,
    rev_thread: Vec<u32>,
    succ_num: Vec<u32>,
    last_succ: Vec<u32>,
    dirty_revs: Vec<u32>,

    eps: f64,
    block_size: usize,
    next_arc: usize,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: i64,
}

impl Simplex {
    /// `cost_bound` raises the magnitude used for the artificial cost and the
    /// pricing tolerance, for arcs that will be added later.
    fn new(network: &FlowNetwork, demand: i64, cost_bound: f64) -> Self {
        let n = network.node_count;
        let m = network.arcs.len();
        let all = m + n;
        let root = n;

        let mut source = Vec::with_capacity(all);
        let mut target = Vec::with_capacity(all);
        let mut cap = Vec::with_capacity(all);
        let mut cost = Vec::with_capacity(all);
        let mut max_abs_cost: f64 = cost_bound.abs();
        for a in &network.arcs {
            source.push(a.from as u32);
            target.push(a.to as u32);
            cap.push(a.capacity);
            cost.push(a.cost);
            max_abs_cost = max_abs_cost.max(a.cost.abs());
        }
        let art_cost = (max_abs_cost + 1.0) * (n as f64 + 1.0);

        let mut supply = vec![0i64; n];
        supply[network.source] += demand;
        supply[network.sink] -= demand;

        let mut spx = Simplex {
            node_num: n,
            arc_num: m,
            source,
            target,
            cap,
            cost,
            flow: vec![0; all],
            state: vec![STATE_LOWER; all],
            pi: vec![0.0; n + 1],
            parent: vec![NONE; n + 1],
            pred: vec![NONE; n + 1],
            pred_dir: vec![0; n + 1],
            thread: vec![0; n + 1],
            rev_thread: vec![0; n + 1],
            succ_num: vec![0; n + 1],
            last_succ: vec![0; n + 1],
            dirty_revs: Vec::new(),
            eps: 1e-11 * (1.0 + max_abs_cost),
            block_size: ((m as f64).sqrt() as usize).max(10),
            next_arc: 0,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0,
        };

        // Initial basis: a star of artificial arcs around the root.
        spx.thread[root] = 0;
        spx.rev_thread[0] = root as u32;
        spx.succ_num[root] = (n + 1) as u32;
        spx.last_succ[root] = (n - 1) as u32;
        for u in 0..n {
            let e = m + u;
            spx.parent[u] = root as u32;
            spx.pred[u] = e as u32;
            spx.thread[u] = (u + 1) as u32;
            spx.rev_thread[u + 1] = u as u32;
            spx.succ_num[u] = 1;
            spx.last_succ[u] = u as u32;
            spx.cap.push(i64::MAX);
            spx.state[e] = STATE_TREE;
            if supply[u] >= 0 {
                spx.pred_dir[u] = DIR_UP;
                spx.pi[u] = 0.0;
                spx.source.push(u as u32);
                spx.target.push(root as u32);
                spx.flow[e] = supply[u];
                spx.cost.push(0.0);
            } else {
                spx.pred_dir[u] = DIR_DOWN;
                spx.pi[u] = art_cost;
                spx.source.push(root as u32);
                spx.target.push(u as u32);
                spx.flow[e] = -supply[u];
                spx.cost.push(art_cost);
            }
        }
        spx
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        self.state[e] as f64
            * (self.cost[e] + self.pi[self.source[e] as usize] - self.pi[self.target[e] as usize])
    }

    fn find_entering_lowest(&mut self) -> bool {
        for e in 0..self.arc_num {
            if self.reduced(e) < -self.eps {
                self.in_arc = e;
                return true;
            }
        }
        false
    }

    fn find_entering_block(&mut self) -> bool {
        let m = self.arc_num;
        if m == 0 {
            return false;
        }
        let mut min = -self.eps;
        let mut found = false;
        let mut cnt = self.block_size;
        let start = self.next_arc;
        let mut e = start;
        for _ in 0..m {
            let c = self.reduced(e);
            if c < min {
                min = c;
                self.in_arc = e;
                found = true;
            }
            e += 1;
            if e == m {
                e = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if found {
                    self.next_arc = e;
                    return true;
                }
                cnt = self.block_size;
            }
        }
        if found {
            self.next_arc = e;
        }
        found
    }

    fn find_join_node(&mut self) {
        let mut u = self.source[self.in_arc] as usize;
        let mut v = self.target[self.in_arc] as usize;
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u] as usize;
            } else {
                v = self.parent[v] as usize;
            }
        }
        self.join = u;
    }

    /// Returns whether the leaving arc differs from the entering one.
    fn find_leaving_arc(&mut self) -> bool {
        let in_arc = self.in_arc;
        let (first, second) = if self.state[in_arc] == STATE_LOWER {
            (self.source[in_arc] as usize, self.target[in_arc] as usize)
        } else {
            (self.target[in_arc] as usize, self.source[in_arc] as usize)
        };
        self.delta = self.cap[in_arc];
        let mut result = 0;

        let mut u = first;
        while u != self.join {
            let e = self.pred[u] as usize;
            let d = if self.pred_dir[u] == DIR_DOWN {
                residual(self.cap[e], self.flow[e])
            } else {
                self.flow[e]
            };
            if d < self.delta {
                self.delta = d;
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u] as usize;
        }
        let mut u = second;
        while u != self.join {
            let e = self.pred[u] as usize;
            let d = if self.pred_dir[u] == DIR_UP {
                residual(self.cap[e], self.flow[e])
            } else {
                self.flow[e]
            };
            if d <= self.delta {
                self.delta = d;
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u] as usize;
        }

        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self, change: bool) {
        let in_arc = self.in_arc;
        if self.delta > 0 {
            let val = self.state[in_arc] as i64 * self.delta;
            self.flow[in_arc] += val;
            let mut u = self.source[in_arc] as usize;
            while u != self.join {
                let e = self.pred[u] as usize;
                self.flow[e] -= self.pred_dir[u] as i64 * val;
                u = self.parent[u] as usize;
            }
            let mut u = self.target[in_arc] as usize;
            while u != self.join {
                let e = self.pred[u] as usize;
                self.flow[e] += self.pred_dir[u] as i64 * val;
                u = self.parent[u] as usize;
            }
        }
        if change {
            self.state[in_arc] = STATE_TREE;
            let out = self.pred[self.u_out] as usize;
            self.state[out] = if self.flow[out] == 0 {
                STATE_LOWER
            } else {
                STATE_UPPER
            };
        } else {
            self.state[in_arc] = -self.state[in_arc];
        }
    }

    fn update_tree_structure(&mut self) {
        let (u_in, v_in, u_out, join, in_arc) = (self.u_in, self.v_in, self.u_out, self.join, self.in_arc);
        let old_rev_thread = self.rev_thread[u_out] as usize;
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out] as usize;
        let v_out = self.parent[u_out] as usize;

        if u_in == u_out {
            self.parent[u_in] = v_in as u32;
            self.pred[u_in] = in_arc as u32;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] as usize {
                DIR_UP
            } else {
                DIR_DOWN
            };
            if self.thread[v_in] as usize != u_out {
                let mut after = self.thread[old_last_succ] as usize;
                self.thread[old_rev_thread] = after as u32;
                self.rev_thread[after] = old_rev_thread as u32;
                after = self.thread[v_in] as usize;
                self.thread[v_in] = u_out as u32;
                self.rev_thread[u_out] = v_in as u32;
                self.thread[old_last_succ] = after as u32;
                self.rev_thread[after] = old_last_succ as u32;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ] as usize
            } else {
                self.thread[v_in] as usize
            };

            // Re-hang the stem u_in -> ... -> u_out under v_in, fixing the
            // thread as we go.
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in] as usize;
            let mut after = self.thread[last] as usize;
            self.thread[v_in] = u_in as u32;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in as u32);
            while stem != u_out {
                let next_stem = self.parent[stem] as usize;
                self.thread[last] = next_stem as u32;
                self.dirty_revs.push(last as u32);

                let before = self.rev_thread[stem] as usize;
                self.thread[before] = after as u32;
                self.rev_thread[after] = before as u32;

                self.parent[stem] = par_stem as u32;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem] as usize
                } else {
                    self.last_succ[stem] as usize
                };
                after = self.thread[last] as usize;
            }
            self.parent[u_out] = par_stem as u32;
            self.thread[last] = thread_continue as u32;
            self.rev_thread[thread_continue] = last as u32;
            self.last_succ[u_out] = last as u32;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after as u32;
                self.rev_thread[after] = old_rev_thread as u32;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k] as usize;
                let t = self.thread[u] as usize;
                self.rev_thread[t] = u as u32;
            }

            let mut tmp_sc: i64 = 0;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u] as usize;
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc += self.succ_num[u] as i64 - self.succ_num[p] as i64;
                self.succ_num[u] = tmp_sc as u32;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc as u32;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] as usize {
                DIR_UP
            } else {
                DIR_DOWN
            };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] as usize == v_in {
            join as u32
        } else {
            NONE
        };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in as u32;
        while u != NONE && self.last_succ[u as usize] as usize == v_in {
            self.last_succ[u as usize] = last_succ_out;
            u = self.parent[u as usize];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out as u32;
            while u != up_limit_out && self.last_succ[u as usize] as usize == old_last_succ {
                self.last_succ[u as usize] = old_rev_thread as u32;
                u = self.parent[u as usize];
            }
        } else if last_succ_out as usize != old_last_succ {
            let mut u = v_out as u32;
            while u != up_limit_out && self.last_succ[u as usize] as usize == old_last_succ {
                self.last_succ[u as usize] = last_succ_out;
                u = self.parent[u as usize];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u] as usize;
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u] as usize;
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let c = self.cost[self.in_arc];
        let sigma = self.pi[self.v_in] - self.pi[u_in] - if self.pred_dir[u_in] == DIR_UP { c } else { -c };
        let end = self.thread[self.last_succ[u_in] as usize] as usize;
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u] as usize;
        }
    }

    /// Recomputes all potentials from the tree, discarding accumulated
    /// rounding from incremental updates.
    fn refresh_potentials(&mut self) {
        let root = self.node_num;
        self.pi[root] = 0.0;
        let mut u = self.thread[root] as usize;
        while u != root {
            let p = self.parent[u] as usize;
            let e = self.pred[u] as usize;
            self.pi[u] = if self.pred_dir[u] == DIR_UP {
                self.pi[p] - self.cost[e]
            } else {
                self.pi[p] + self.cost[e]
            };
            u = self.thread[u] as usize;
        }
    }

    fn run(&mut self, rule: PivotRule) {
        if self.node_num == 0 {
            return;
        }
        let mut pivots: usize = 0;
        loop {
            let found = match rule {
                PivotRule::LowestIndex => self.find_entering_lowest(),
                PivotRule::BlockSearch => self.find_entering_block(),
            };
            if !found {
                // Confirm against exact potentials before declaring optimality.
                self.refresh_potentials();
                let again = match rule {
                    PivotRule::LowestIndex => self.find_entering_lowest(),
                    PivotRule::BlockSearch => self.find_entering_block(),
                };
                if !again {
                    log::trace!("network simplex finished after {pivots} pivots");
                    break;
                }
            }
            self.find_join_node();
            let change = self.find_leaving_arc();
            self.change_flow(change);
            if change {
                self.update_tree_structure();
                self.update_potential();
            }
            pivots += 1;
            if pivots.is_multiple_of(4 * self.node_num + 64) {
                self.refresh_potentials();
            }
        }
    }

    /// Inserts real arcs as nonbasic at zero flow; the current basis stays
    /// primal feasible, so `run` resumes from it.
    fn add_arcs(&mut self, arcs: &[Arc]) {
        let m = self.arc_num;
        let k = arcs.len();
        self.source.splice(m..m, arcs.iter().map(|a| a.from as u32));
        self.target.splice(m..m, arcs.iter().map(|a| a.to as u32));
        self.cap.splice(m..m, arcs.iter().map(|a| a.capacity));
        self.cost.splice(m..m, arcs.iter().map(|a| a.cost));
        self.flow.splice(m..m, std::iter::repeat_n(0, k));
        self.state.splice(m..m, std::iter::repeat_n(STATE_LOWER, k));
        for p in &mut self.pred {
            if *p != NONE && *p as usize >= m {
                *p += k as u32;
            }
        }
        self.arc_num += k;
        self.block_size = ((self.arc_num as f64).sqrt() as usize).max(10);
        self.next_arc = m;
    }

    fn artificial_flow(&self) -> i64 {
        self.flow[self.arc_num..].iter().sum()
    }

    fn into_solution(mut self, network: &FlowNetwork) -> FlowSolution {
        self.refresh_potentials();
        self.flow.truncate(self.arc_num);
        let total_cost = network
            .arcs
            .iter()
            .zip(&self.flow)
            .map(|(a, &f)| a.cost * f as f64)
            .sum();
        self.pi.truncate(self.node_num);
        FlowSolution {
            arc_flows: self.flow,
            total_cost,
            potentials: self.pi,
        }
    }
}

/// A complete bipartite set of arcs `left[a] -> right[b]` with one shared
/// capacity and costs evaluated on demand as `cost(a, b)`.
pub struct DenseBlock<'a> {
    pub left: &'a [usize],
    pub right: &'a [usize],
    pub capacity: i64,
    pub cost: &'a (dyn Fn(usize, usize) -> f64 + Sync),
}

impl DenseBlock<'_> {
    fn arc(&self, a: usize, b: usize) -> Arc {
        Arc {
            from: self.left[a],
            to: self.right[b],
            capacity: self.capacity,
            cost: (self.cost)(a, b),
        }
    }

    /// The block as explicit arcs, left-major.
    pub fn materialize(&self) -> Vec<Arc> {
        let mut arcs = Vec::with_capacity(self.left.len() * self.right.len());
        for a in 0..self.left.len() {
            for b in 0..self.right.len() {
                arcs.push(self.arc(a, b));
            }
        }
        arcs
    }
}

/// Result of [`solve_with_dense_block`]: the optimal flow on the sparse
/// network actually handed to the simplex (base arcs first, then the block
/// arcs that were generated). Every block arc left out prices out
/// nonnegatively against `solution.potentials`, so the flow is optimal for
/// the full network.
#[derive(Debug, Clone)]
pub struct SparseSolution {
    pub network: FlowNetwork,
    pub solution: FlowSolution,
    pub rounds: usize,
}

/// Min-cost flow on `base` plus a dense block of arcs, solved by column
/// generation: start from the `seed` cheapest block arcs into each right
/// node, then repeatedly add every block arc whose reduced cost is negative
/// (at most `seed` per right node per round) and resume the simplex from the
/// current basis.
pub fn solve_with_dense_block(
    base: &FlowNetwork,
    block: &DenseBlock,
    demand: i64,
    seed: usize,
) -> Result<SparseSolution> {
    base.validate()?;
    if demand < 0 {
        return Err(invalid("demand must be nonnegative"));
    }
    let (nl, nr) = (block.left.len(), block.right.len());
    if block
        .left
        .iter()
        .chain(block.right)
        .any(|&v| v >= base.node_count)
    {
        return Err(invalid("dense block refers to a missing node"));
    }
    if block.capacity < 0 {
        return Err(invalid("negative capacity in dense block"));
    }
    let seed = seed.max(1).min(nl.max(1));

    // Column b of the block: (cost, a) pairs; cheapest `seed` per column.
    let mut present = vec![false; nl * nr];
    let mut initial: Vec<Arc> = Vec::with_capacity(nr * seed);
    let mut bound: f64 = 0.0;
    let mut column: Vec<(f64, usize)> = Vec::with_capacity(nl);
    for b in 0..nr {
        column.clear();
        column.extend((0..nl).map(|a| ((block.cost)(a, b), a)));
        for &(c, _) in &column {
            if !c.is_finite() {
                return Err(invalid("non-finite arc cost"));
            }
            bound = bound.max(c.abs());
        }
        if column.len() > seed {
            column.select_nth_unstable_by(seed - 1, |x, y| x.0.total_cmp(&y.0));
            column.truncate(seed);
        }
        for &(_, a) in &column {
            present[a * nr + b] = true;
            initial.push(block.arc(a, b));
        }
    }

    let mut sparse = base.clone();
    sparse.arcs.extend_from_slice(&initial);
    let mut spx = Simplex::new(&sparse, demand, bound);
    let mut rounds = 0;
    let mut candidates: Vec<(f64, usize)> = Vec::new();
    loop {
        rounds += 1;
        spx.run(PivotRule::BlockSearch);
        spx.refresh_potentials();
        let mut added: Vec<Arc> = Vec::new();
        for b in 0..nr {
            let pv = spx.pi[block.right[b]];
            candidates.clear();
            for a in 0..nl {
                if present[a * nr + b] {
                    continue;
                }
                let rc = (block.cost)(a, b) + spx.pi[block.left[a]] - pv;
                if rc < -spx.eps {
                    candidates.push((rc, a));
                }
            }
            if candidates.len() > seed {
                candidates.select_nth_unstable_by(seed - 1, |x, y| x.0.total_cmp(&y.0));
                candidates.truncate(seed);
            }
            for &(_, a) in &candidates {
                present[a * nr + b] = true;
                added.push(block.arc(a, b));
            }
        }
        log::debug!("column generation round {rounds}: {} arcs added", added.len());
        if added.is_empty() {
            break;
        }
        sparse.arcs.extend_from_slice(&added);
        spx.add_arcs(&added);
    }

    if spx.artificial_flow() != 0 {
        let mut full = base.clone();
        full.arcs.extend(block.materialize());
        let max_flow = max_flow_value(&full);
        if max_flow < demand {
            return Err(Error::InfeasibleFlow { demand, max_flow });
        }
        // The artificial cost was not large enough to expel artificial flow;
        // fall back to the explicit network.
        let solution = solve_min_cost_flow(&full, demand)?;
        return Ok(SparseSolution {
            network: full,
            solution,
            rounds,
        });
    }
    let solution = spx.into_solution(&sparse);
    Ok(SparseSolution {
        network: sparse,
        solution,
        rounds,
    })
}

#[inline]
fn residual(cap: i64, flow: i64) -> i64 {
    if cap == i64::MAX {
        i64::MAX
    } else {
        cap - flow
    }
}

/// Value of a maximum `source -> sink` flow (Dinic's algorithm).
pub fn max_flow_value(network: &FlowNetwork) -> i64 {
    let n = network.node_count;
    if network.source >= n || network.sink >= n || network.source == network.sink {
        return 0;
    }
    // Residual graph in CSR form; arc 2k is forward, 2k+1 its reverse.
    let m = network.arcs.len();
    let mut to = vec![0u32; 2 * m];
    let mut res = vec![0i64; 2 * m];
    let mut degree = vec![0u32; n + 1];
    for (k, a) in network.arcs.iter().enumerate() {
        to[2 * k] = a.to as u32;
        res[2 * k] = a.capacity;
        to[2 * k + 1] = a.from as u32;
        degree[a.from] += 1;
        degree[a.to] += 1;
    }
    let mut start = vec![0usize; n + 1];
    for v in 0..n {
        start[v + 1] = start[v] + degree[v] as usize;
    }
    let mut fill = start.clone();
    let mut adj = vec![0u32; 2 * m];
    for (k, a) in network.arcs.iter().enumerate() {
        adj[fill[a.from]] = (2 * k) as u32;
        fill[a.from] += 1;
        adj[fill[a.to]] = (2 * k + 1) as u32;
        fill[a.to] += 1;
    }

    let (s, t) = (network.source, network.sink);
    let mut level = vec![-1i32; n];
    let mut iter = vec![0usize; n];
    let mut total: i64 = 0;
    loop {
        level.iter_mut().for_each(|l| *l = -1);
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &e in &adj[start[v]..start[v + 1]] {
                let w = to[e as usize] as usize;
                if res[e as usize] > 0 && level[w] < 0 {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        if level[t] < 0 {
            return total;
        }
        iter.copy_from_slice(&start[..n]);
        loop {
            let pushed = augment(s, t, i64::MAX, &adj, &start, &to, &mut res, &level, &mut iter);
            if pushed == 0 {
                break;
            }
            total = total.saturating_add(pushed);
        }
    }
}

/// Iterative blocking-flow DFS from `s`; returns the amount pushed on one path.
#[allow(clippy::too_many_arguments)]
fn augment(
    s: usize,
    t: usize,
    limit: i64,
    adj: &[u32],
    start: &[usize],
    to: &[u32],
    res: &mut [i64],
    level: &[i32],
    iter: &mut [usize],
) -> i64 {
    let mut path: Vec<u32> = Vec::new();
    let mut v = s;
    loop {
        if v == t {
            let f = path.iter().fold(limit, |acc, &e| acc.min(res[e as usize]));
            for &e in &path {
                res[e as usize] -= f;
                res[(e ^ 1) as usize] = res[(e ^ 1) as usize].saturating_add(f);
            }
            return f;
        }
        let mut advanced = false;
        while iter[v] < start[v + 1] {
            let e = adj[iter[v]] as usize;
            let w = to[e] as usize;
            if res[e] > 0 && level[w] == level[v] + 1 {
                path.push(e as u32);
                v = w;
                advanced = true;
                break;
            }
            iter[v] += 1;
        }
        if !advanced {
            if v == s {
                return 0;
            }
            // Dead end: retreat and skip the arc that led here.
            let e = path.pop().unwrap() as usize;
            v = to[e ^ 1] as usize;
            iter[v] += 1;
        }
    }
}
