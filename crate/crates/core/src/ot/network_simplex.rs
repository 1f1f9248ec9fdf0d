//! Primal network simplex for the balanced transportation problem.
//!
//! The tree bookkeeping (thread/rev-thread lists, successor counts, last
//! successors) follows the classic LEMON layout: an artificial root joined to
//! every node, a strongly feasible spanning tree and a block-search pivot
//! rule. Supplies are integral (source `i` ships `n_q / g`, sink `j` receives
//! `n_p / g` with `g = gcd(n_p, n_q)`), so flows are exact and the only
//! floating point quantities are costs and potentials.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i64 = 1;
const DIR_DOWN: i64 = -1;
const INF: i64 = i64::MAX;

/// Reduced costs above `-EPS` (costs normalised to max 1) count as optimal.
const EPS: f64 = 1e-12;

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

struct Solver {
    node_num: usize,
    arc_num: usize,
    source: Vec<usize>,
    target: Vec<usize>,
    cost: Vec<f64>,
    supply: Vec<i64>,
    flow: Vec<i64>,
    pi: Vec<f64>,

    parent: Vec<isize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i64>,
    state: Vec<i8>,
    dirty_revs: Vec<usize>,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: i64,

    block_size: usize,
    next_arc: usize,
}

impl Solver {
    fn new(cost: ArrayView2<'_, f64>) -> Self {
        let (n_p, n_q) = cost.dim();
        let g = gcd(n_p, n_q);
        let (out, inc) = ((n_q / g) as i64, (n_p / g) as i64);
        let node_num = n_p + n_q;
        let arc_num = n_p * n_q;
        let all_arc_num = arc_num + node_num;

        let max_cost = cost.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
        let scale = if max_cost > 0.0 { 1.0 / max_cost } else { 1.0 };

        let mut source = Vec::with_capacity(all_arc_num);
        let mut target = Vec::with_capacity(all_arc_num);
        let mut arc_cost = Vec::with_capacity(all_arc_num);
        for i in 0..n_p {
            for j in 0..n_q {
                source.push(i);
                target.push(n_p + j);
                arc_cost.push(cost[[i, j]] * scale);
            }
        }
        source.resize(all_arc_num, 0);
        target.resize(all_arc_num, 0);
        arc_cost.resize(all_arc_num, 0.0);

        let mut supply = vec![out; n_p];
        supply.extend(std::iter::repeat_n(-inc, n_q));
        supply.push(0);

        let root = node_num;
        let art_cost = (1.0 + 1.0) * node_num as f64;

        let mut s = Solver {
            node_num,
            arc_num,
            source,
            target,
            cost: arc_cost,
            supply,
            flow: vec![0; all_arc_num],
            pi: vec![0.0; node_num + 1],
            parent: vec![-1; node_num + 1],
            pred: vec![0; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![0; node_num + 1],
            last_succ: vec![0; node_num + 1],
            pred_dir: vec![0; node_num + 1],
            state: vec![STATE_LOWER; all_arc_num],
            dirty_revs: Vec::new(),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0,
            block_size: ((arc_num as f64).sqrt() as usize).max(10),
            next_arc: 0,
        };

        s.parent[root] = -1;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = node_num + 1;
        s.last_succ[root] = root - 1;
        s.pi[root] = 0.0;

        for u in 0..node_num {
            let e = arc_num + u;
            s.parent[u] = root as isize;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            if s.supply[u] >= 0 {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.source[e] = u;
                s.target[e] = root;
                s.flow[e] = s.supply[u];
                s.cost[e] = 0.0;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art_cost;
                s.source[e] = root;
                s.target[e] = u;
                s.flow[e] = -s.supply[u];
                s.cost[e] = art_cost;
            }
        }
        s
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        f64::from(self.state[e]) * (self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]])
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut min = -EPS;
        let mut found = false;
        let mut cnt = self.block_size;
        let search = self.arc_num;
        let start = self.next_arc;
        for e in (start..search).chain(0..start) {
            let c = self.reduced(e);
            if c < min {
                min = c;
                self.in_arc = e;
                found = true;
            }
            cnt -= 1;
            if cnt == 0 {
                if found {
                    self.next_arc = e + 1;
                    if self.next_arc == search {
                        self.next_arc = 0;
                    }
                    return true;
                }
                cnt = self.block_size;
            }
        }
        if found {
            self.next_arc = start;
        }
        found
    }

    fn find_join_node(&mut self) {
        let mut u = self.source[self.in_arc];
        let mut v = self.target[self.in_arc];
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u] as usize;
            } else {
                v = self.parent[v] as usize;
            }
        }
        self.join = u;
    }

    /// Every arc is uncapacitated, so the entering arc is always at its lower
    /// bound and the cycle is oriented source -> target.
    fn find_leaving_arc(&mut self) -> bool {
        let first = self.source[self.in_arc];
        let second = self.target[self.in_arc];
        self.delta = INF;
        let mut result = 0;

        let mut u = first;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_DOWN { INF } else { self.flow[e] };
            if d < self.delta {
                self.delta = d;
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u] as usize;
        }

        let mut u = second;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_UP { INF } else { self.flow[e] };
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

    fn change_flow(&mut self) {
        let val = self.delta;
        if val > 0 {
            self.flow[self.in_arc] += val;
            let mut u = self.source[self.in_arc];
            while u != self.join {
                self.flow[self.pred[u]] -= self.pred_dir[u] * val;
                u = self.parent[u] as usize;
            }
            let mut u = self.target[self.in_arc];
            while u != self.join {
                self.flow[self.pred[u]] += self.pred_dir[u] * val;
                u = self.parent[u] as usize;
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        // Uncapacitated arcs can only leave at their lower bound.
        self.state[self.pred[self.u_out]] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let in_arc = self.in_arc;
        let join = self.join;

        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out] as usize;

        if u_in == u_out {
            self.parent[u_in] = v_in as isize;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] { DIR_UP } else { DIR_DOWN };

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // Re-hang the stem nodes between u_in and u_out.
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem] as usize;
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem as isize;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem as isize;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for i in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[i];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u] as usize;
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] { DIR_UP } else { DIR_DOWN };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out: isize = if self.last_succ[join] == v_in { join as isize } else { -1 };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in as isize;
        while u != -1 && self.last_succ[u as usize] == v_in {
            self.last_succ[u as usize] = last_succ_out;
            u = self.parent[u as usize];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out as isize;
            while u != up_limit_out && self.last_succ[u as usize] == old_last_succ {
                self.last_succ[u as usize] = old_rev_thread;
                u = self.parent[u as usize];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out as isize;
            while u != up_limit_out && self.last_succ[u as usize] == old_last_succ {
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
        let sigma = self.pi[self.v_in] - self.pi[u_in]
            - self.pred_dir[u_in] as f64 * self.cost[self.in_arc];
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn run(&mut self, max_pivots: usize) -> Result<()> {
        let mut pivots = 0usize;
        while self.find_entering_arc() {
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::Solver(format!(
                    "no convergence after {max_pivots} pivots"
                )));
            }
            self.find_join_node();
            if !self.find_leaving_arc() || self.delta == INF {
                return Err(Error::Solver("unbounded pivot cycle".into()));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
        }
        let residual: i64 = (self.arc_num..self.arc_num + self.node_num)
            .map(|e| self.flow[e])
            .sum();
        if residual != 0 {
            return Err(Error::Solver(format!(
                "artificial arcs still carry {residual} units"
            )));
        }
        Ok(())
    }
}

/// Optimal plan for uniform marginals `1/n_p` (rows) and `1/n_q` (columns).
pub(crate) fn solve_uniform(cost: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (n_p, n_q) = cost.dim();
    let mut solver = Solver::new(cost);
    // Generous cap; the strongly feasible tree rules out cycling in exact
    // arithmetic, so hitting it means potentials have drifted badly.
    let max_pivots = 1000 * (n_p + n_q) * (n_p + n_q) + 10_000;
    solver.run(max_pivots)?;

    let g = gcd(n_p, n_q);
    let unit = g as f64 / (n_p as f64 * n_q as f64);
    let mut plan = Array2::zeros((n_p, n_q));
    for (e, &f) in solver.flow[..solver.arc_num].iter().enumerate() {
        if f != 0 {
            plan[[e / n_q, e % n_q]] = f as f64 * unit;
        }
    }
    Ok(plan)
}
