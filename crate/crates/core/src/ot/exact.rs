//! Exact discrete optimal transport via the transportation simplex (MODI).
//!
//! The basis is a spanning tree of the bipartite graph rows + columns with
//! `n + m - 1` cells. Each pivot prices the non-basic cells with the dual
//! potentials of the tree, lets the most negative one enter, and pushes flow
//! around the unique cycle it closes. Ties are broken by lowest row-major
//! index. After a long run of degenerate pivots the entering rule falls back
//! to Bland's first-negative rule, which cannot cycle.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2};

use super::{check_costs, check_dims, CostMatrix, DiscreteDistribution, TransportPlan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OtSolution {
    pub value: f64,
    pub plan: TransportPlan,
}

/// Minimum of `sum_ij c_ij pi_ij` over couplings `pi` of `p` and `q`.
pub fn solve_exact(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    c: &CostMatrix,
) -> Result<OtSolution> {
    solve_slices(p.weights(), q.weights(), c.view())
}

/// `OT(p, q; d^r)^(1/r)` for a matrix `d` of ground distances.
pub fn wasserstein(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    d: &CostMatrix,
    r: f64,
) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "Wasserstein order must be >= 1, got {r}"
        )));
    }
    let sol = solve_exact(p, q, &d.powf(r)?)?;
    Ok(sol.value.powf(1.0 / r))
}

pub(crate) fn solve_slices(p: &[f64], q: &[f64], c: ArrayView2<'_, f64>) -> Result<OtSolution> {
    let mut ws = SimplexWorkspace::default();
    let value = solve_value(&mut ws, p, q, c)?;
    let flow = Array2::from_shape_vec(c.dim(), ws.flow).expect("flow is n x m");
    Ok(OtSolution {
        value,
        plan: TransportPlan::new(flow, p, q),
    })
}

/// Optimal value only; the optimal flow is left in `ws.flow` (row-major).
pub(crate) fn solve_value(
    ws: &mut SimplexWorkspace,
    p: &[f64],
    q: &[f64],
    c: ArrayView2<'_, f64>,
) -> Result<f64> {
    check_dims(p, q, c)?;
    check_costs(c)?;
    let mut simplex = TransportSimplex::start(ws, p, q, c);
    simplex.run()?;
    Ok(c.iter().zip(&ws.flow).map(|(a, b)| a * b).sum())
}

/// Buffers reused across solves of many small problems.
#[derive(Debug, Default)]
pub(crate) struct SimplexWorkspace {
    flow: Vec<f64>,
    basic: Vec<bool>,
    /// Basic cells as row-major indices.
    cells: Vec<usize>,
    supply: Vec<f64>,
    demand: Vec<f64>,
    adj: Vec<Vec<(usize, usize)>>,
    pot: Vec<f64>,
    seen: Vec<bool>,
    via: Vec<usize>,
    prev: Vec<usize>,
    queue: VecDeque<usize>,
    cycle: Vec<usize>,
}

struct TransportSimplex<'w, 'c> {
    ws: &'w mut SimplexWorkspace,
    c: ArrayView2<'c, f64>,
    n: usize,
    m: usize,
    eps: f64,
}

impl<'w, 'c> TransportSimplex<'w, 'c> {
    /// Northwest-corner start. Ties between an exhausted row and column
    /// advance the column, leaving a zero-flow basic cell so the basis stays
    /// a spanning tree.
    fn start(ws: &'w mut SimplexWorkspace, p: &[f64], q: &[f64], c: ArrayView2<'c, f64>) -> Self {
        let (n, m) = c.dim();
        ws.flow.clear();
        ws.flow.resize(n * m, 0.0);
        ws.basic.clear();
        ws.basic.resize(n * m, false);
        ws.cells.clear();
        ws.supply.clear();
        ws.supply.extend_from_slice(p);
        ws.demand.clear();
        ws.demand.extend_from_slice(q);
        let (mut i, mut j) = (0, 0);
        loop {
            let last = i == n - 1 && j == m - 1;
            let x = if last {
                ws.supply[i]
            } else {
                ws.supply[i].min(ws.demand[j])
            }
            .max(0.0);
            ws.flow[i * m + j] = x;
            ws.basic[i * m + j] = true;
            ws.cells.push(i * m + j);
            if last {
                break;
            }
            let row_done = ws.supply[i] < ws.demand[j];
            ws.supply[i] -= x;
            ws.demand[j] -= x;
            if j == m - 1 || (row_done && i < n - 1) {
                i += 1;
            } else {
                j += 1;
            }
        }
        let cmax = c.iter().copied().fold(0.0, f64::max);
        TransportSimplex {
            ws,
            c,
            n,
            m,
            eps: 1e-13 * cmax.max(1.0),
        }
    }

    fn cost(&self, cell: usize) -> f64 {
        self.c[[cell / self.m, cell % self.m]]
    }

    fn run(&mut self) -> Result<()> {
        let limit = 1000 + 50 * self.n * self.m;
        let nodes = self.n + self.m;
        if self.ws.adj.len() < nodes {
            self.ws.adj.resize_with(nodes, Vec::new);
        }
        self.ws.pot.resize(nodes, 0.0);
        let mut degenerate_streak = 0;
        for _ in 0..limit {
            self.tree_adjacency();
            self.potentials();
            let bland = degenerate_streak > self.n * self.m;
            let Some(entering) = self.entering(bland) else {
                return Ok(());
            };
            self.find_cycle(entering);
            // cycle[0] is the entering cell (+), then signs alternate
            let cycle = &self.ws.cycle;
            let mut theta = f64::INFINITY;
            let mut leaving = usize::MAX;
            for &cell in cycle.iter().skip(1).step_by(2) {
                let f = self.ws.flow[cell];
                if f < theta || (f == theta && cell < leaving) {
                    theta = f;
                    leaving = cell;
                }
            }
            degenerate_streak = if theta == 0.0 {
                degenerate_streak + 1
            } else {
                0
            };
            for (k, &cell) in cycle.iter().enumerate() {
                if k % 2 == 0 {
                    self.ws.flow[cell] += theta;
                } else {
                    self.ws.flow[cell] -= theta;
                }
            }
            self.ws.flow[leaving] = 0.0;
            self.ws.basic[leaving] = false;
            self.ws.basic[entering] = true;
            let slot = self
                .ws
                .cells
                .iter()
                .position(|&x| x == leaving)
                .expect("leaving cell is basic");
            self.ws.cells[slot] = entering;
        }
        Err(Error::PivotLimit(limit))
    }

    fn tree_adjacency(&mut self) {
        let (n, m) = (self.n, self.m);
        let ws = &mut *self.ws;
        ws.adj[..n + m].iter_mut().for_each(Vec::clear);
        for &cell in &ws.cells {
            let (i, j) = (cell / m, cell % m);
            ws.adj[i].push((n + j, cell));
            ws.adj[n + j].push((i, cell));
        }
    }

    /// Row potential `u_i` at index `i`, column potential `v_j` at `n + j`,
    /// with `u_i + v_j = c_ij` on basic cells and `u_0 = 0`.
    fn potentials(&mut self) {
        let nodes = self.n + self.m;
        self.ws.seen.clear();
        self.ws.seen.resize(nodes, false);
        self.ws.queue.clear();
        self.ws.queue.push_back(0);
        self.ws.pot[0] = 0.0;
        self.ws.seen[0] = true;
        while let Some(a) = self.ws.queue.pop_front() {
            for k in 0..self.ws.adj[a].len() {
                let (b, cell) = self.ws.adj[a][k];
                if !self.ws.seen[b] {
                    self.ws.seen[b] = true;
                    self.ws.pot[b] = self.cost(cell) - self.ws.pot[a];
                    self.ws.queue.push_back(b);
                }
            }
        }
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let mut best = None;
        let mut best_rc = -self.eps;
        for i in 0..self.n {
            for j in 0..self.m {
                let cell = i * self.m + j;
                if self.ws.basic[cell] {
                    continue;
                }
                let rc = self.c[[i, j]] - self.ws.pot[i] - self.ws.pot[self.n + j];
                if rc < best_rc {
                    if bland {
                        return Some(cell);
                    }
                    best_rc = rc;
                    best = Some(cell);
                }
            }
        }
        best
    }

    /// Fills `ws.cycle` with the cycle closed by `entering`: the entering
    /// cell followed by the tree path from its column back to its row.
    fn find_cycle(&mut self, entering: usize) {
        let nodes = self.n + self.m;
        let (ei, ej) = (entering / self.m, entering % self.m);
        let ws = &mut *self.ws;
        ws.seen.clear();
        ws.seen.resize(nodes, false);
        ws.via.resize(nodes, usize::MAX);
        ws.prev.resize(nodes, usize::MAX);
        ws.queue.clear();
        ws.queue.push_back(ei);
        ws.seen[ei] = true;
        let target = self.n + ej;
        while let Some(a) = ws.queue.pop_front() {
            if a == target {
                break;
            }
            for &(b, cell) in &ws.adj[a] {
                if !ws.seen[b] {
                    ws.seen[b] = true;
                    ws.prev[b] = a;
                    ws.via[b] = cell;
                    ws.queue.push_back(b);
                }
            }
        }
        ws.cycle.clear();
        ws.cycle.push(entering);
        let mut node = target;
        while node != ei {
            ws.cycle.push(ws.via[node]);
            node = ws.prev[node];
        }
    }
}
