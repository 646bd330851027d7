//! Primal network simplex for the transportation problem.
//!
//! Supply nodes `0..m`, demand nodes `m..m+n`, and an artificial root joined
//! to every node by a big-M arc that forms the initial spanning tree. The
//! leaving-arc rule keeps the tree strongly feasible, which rules out
//! cycling on degenerate pivots, and entering arcs are priced in blocks of
//! about `sqrt(arcs)`.

use super::transport::CostMatrix;
use crate::error::{Error, Result};

pub(crate) struct Solution {
    /// Row-major `m x n` optimal flows.
    pub flows: Vec<f64>,
    /// Node potentials; reduced cost of `i -> j` is `C_ij + pi_i - pi_{m+j}`.
    #[allow(dead_code)]
    pub potentials: Vec<f64>,
}

struct Simplex<'a> {
    cost: &'a CostMatrix,
    m: usize,
    n: usize,
    root: usize,
    art_cost: f64,
    /// Artificial arc `m*n + k` points `k -> root` when true.
    art_up: Vec<bool>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// `pred[u]` is directed `u -> parent[u]`.
    up: Vec<bool>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl Simplex<'_> {
    #[inline]
    fn real_arcs(&self) -> usize {
        self.m * self.n
    }

    #[inline]
    fn endpoints(&self, e: usize) -> (usize, usize) {
        if e < self.real_arcs() {
            (e / self.n, self.m + e % self.n)
        } else {
            let k = e - self.real_arcs();
            if self.art_up[k] {
                (k, self.root)
            } else {
                (self.root, k)
            }
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.real_arcs() {
            self.cost.data()[e]
        } else {
            self.art_cost
        }
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        let (s, t) = self.endpoints(e);
        self.arc_cost(e) + self.pi[s] - self.pi[t]
    }

    fn join(&self, mut a: usize, mut b: usize) -> usize {
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        a
    }

    fn pivot(&mut self, entering: usize) -> Result<()> {
        let (first, second) = self.endpoints(entering);
        let join = self.join(first, second);

        let mut delta = f64::INFINITY;
        let mut leaving_node = None;
        let mut on_first = true;
        let mut u = first;
        while u != join {
            if self.up[u] && self.flow[self.pred[u]] < delta {
                delta = self.flow[self.pred[u]];
                leaving_node = Some(u);
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if !self.up[u] && self.flow[self.pred[u]] <= delta {
                delta = self.flow[self.pred[u]];
                leaving_node = Some(u);
                on_first = false;
            }
            u = self.parent[u];
        }
        let Some(u_out) = leaving_node else {
            return Err(Error::InvalidInput("transport problem is unbounded".into()));
        };

        if delta > 0.0 {
            self.flow[entering] += delta;
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                if self.up[u] {
                    self.flow[e] -= delta;
                } else {
                    self.flow[e] += delta;
                }
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                let e = self.pred[u];
                if self.up[u] {
                    self.flow[e] += delta;
                } else {
                    self.flow[e] -= delta;
                }
                u = self.parent[u];
            }
        }

        let leaving = self.pred[u_out];
        self.flow[leaving] = 0.0;
        let p = self.parent[u_out];
        for node in [u_out, p] {
            let list = &mut self.adj[node];
            let at = list
                .iter()
                .position(|&e| e == leaving)
                .expect("tree arc in adjacency");
            list.swap_remove(at);
        }
        self.in_tree[leaving] = false;
        self.in_tree[entering] = true;
        self.adj[first].push(entering);
        self.adj[second].push(entering);

        // The subtree cut off below u_out hangs from the entering endpoint
        // on its side; rebuild parent, depth and potentials there.
        let (start, anchor) = if on_first {
            (first, second)
        } else {
            (second, first)
        };
        self.hang(start, anchor, entering);
        Ok(())
    }

    fn hang(&mut self, start: usize, anchor: usize, via: usize) {
        let mut stack = vec![(start, anchor, via)];
        while let Some((u, p, e)) = stack.pop() {
            self.parent[u] = p;
            self.pred[u] = e;
            self.depth[u] = self.depth[p] + 1;
            let (s, _) = self.endpoints(e);
            self.up[u] = s == u;
            let c = self.arc_cost(e);
            self.pi[u] = if self.up[u] {
                self.pi[p] - c
            } else {
                self.pi[p] + c
            };
            for k in 0..self.adj[u].len() {
                let f = self.adj[u][k];
                if f == e {
                    continue;
                }
                let (a, b) = self.endpoints(f);
                let child = if a == u { b } else { a };
                stack.push((child, u, f));
            }
        }
    }
}

/// `max_iter` scales the pivot budget: `max_iter * (arcs + nodes)` pivots.
pub(crate) fn solve(cost: &CostMatrix, a: &[f64], b: &[f64], max_iter: usize) -> Result<Solution> {
    let (m, n) = (cost.rows(), cost.cols());
    let nodes = m + n + 1;
    let root = m + n;
    let max_abs = cost.data().iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let art_cost = (max_abs + 1.0) * nodes as f64;
    let arcs = m * n + m + n;

    let mut sx = Simplex {
        cost,
        m,
        n,
        root,
        art_cost,
        art_up: vec![false; m + n],
        flow: vec![0.0; arcs],
        in_tree: vec![false; arcs],
        parent: vec![root; nodes],
        pred: vec![usize::MAX; nodes],
        up: vec![false; nodes],
        depth: vec![1; nodes],
        pi: vec![0.0; nodes],
        adj: vec![Vec::new(); nodes],
    };
    sx.depth[root] = 0;
    for k in 0..m + n {
        let supply = if k < m { a[k] } else { -b[k - m] };
        let e = m * n + k;
        sx.art_up[k] = supply >= 0.0;
        sx.flow[e] = supply.abs();
        sx.in_tree[e] = true;
        sx.pred[k] = e;
        sx.up[k] = supply >= 0.0;
        sx.pi[k] = if supply >= 0.0 { -art_cost } else { art_cost };
        sx.adj[k].push(e);
        sx.adj[root].push(e);
    }

    let eps = 1e-12 * art_cost;
    let block = ((arcs as f64).sqrt() as usize).max(10);
    let budget = max_iter.saturating_mul(arcs + nodes).max(1000);
    let mut next = 0usize;
    let mut pivots = 0usize;
    loop {
        let mut best = -eps;
        let mut entering = None;
        let mut counted = 0;
        let mut e = next;
        for _ in 0..arcs {
            if !sx.in_tree[e] {
                let rc = sx.reduced(e);
                if rc < best {
                    best = rc;
                    entering = Some(e);
                }
            }
            e += 1;
            if e == arcs {
                e = 0;
            }
            counted += 1;
            if counted == block {
                if entering.is_some() {
                    break;
                }
                counted = 0;
            }
        }
        next = e;
        let Some(entering) = entering else { break };
        sx.pivot(entering)?;
        pivots += 1;
        if pivots > budget {
            return Err(Error::NonConvergence(format!(
                "network simplex exceeded {budget} pivots"
            )));
        }
    }

    let mut flows = sx.flow;
    flows.truncate(m * n);
    let mut potentials = sx.pi;
    potentials.truncate(m + n);
    Ok(Solution { flows, potentials })
}
