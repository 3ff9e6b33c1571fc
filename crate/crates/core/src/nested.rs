//! Nested distance between scenario trees and its entropic regularization.
//!
//! Both quantities come from the same backward recursion. The terminal cost
//! is the `l_r` distance between full scenario paths. At every earlier stage
//! and for every pair of nodes `(a, b)`, the cost is the transport value
//! between the children laws of `a` and `b`, priced with the `r`-th power of
//! the next-stage costs, and then taken to the power `1/r`. Because only the
//! history up to `t` matters, `c_t` is stored as a table over pairs of
//! stage-`t` nodes.
//!
//! With exact subproblems the result is the nested distance `ND_r`. With
//! Sinkhorn subproblems (each using `gamma = max(block) / divisor`) it is the
//! entropic nested distance `END_r`, an upper bound on `ND_r`.

use std::ops::Range;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ot::entropic::{reg_ot_slices, reg_ot_values, Block, SinkhornWorkspace};
use crate::ot::exact::{solve_slices, solve_value, SimplexWorkspace};
use crate::ot::{wasserstein, CostMatrix, RegOtConfig, TransportPlan};
use crate::tree::{NodeId, ScenarioTree};

/// Stages with at least this many node pairs are solved in parallel.
const PARALLEL_PAIRS: usize = 2048;
/// Pairs per parallel work item.
const PARALLEL_CHUNK: usize = 256;

/// Ground metric `||x - y||_r` on paths, also the transport order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundMetric {
    r: f64,
}

impl GroundMetric {
    pub fn new(r: f64) -> Result<Self> {
        if !(r >= 1.0 && r.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "order r must be >= 1, got {r}"
            )));
        }
        Ok(GroundMetric { r })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    #[inline]
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let r = self.r;
        if r == 1.0 {
            x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
        } else if r == 2.0 {
            x.iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        } else {
            x.iter()
                .zip(y)
                .map(|(a, b)| (a - b).abs().powf(r))
                .sum::<f64>()
                .powf(1.0 / r)
        }
    }

    fn pow(&self, x: f64) -> f64 {
        if self.r == 1.0 {
            x
        } else if self.r == 2.0 {
            x * x
        } else {
            x.powf(self.r)
        }
    }

    fn root(&self, x: f64) -> f64 {
        if self.r == 1.0 {
            x
        } else if self.r == 2.0 {
            x.sqrt()
        } else {
            x.powf(1.0 / self.r)
        }
    }
}

/// Subproblem solver used at every step of the recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solver {
    Exact,
    Entropic(RegOtConfig),
}

impl Solver {
    fn solve(&self, p: &[f64], q: &[f64], c: ArrayView2<'_, f64>) -> Result<(f64, TransportPlan)> {
        match self {
            Solver::Exact => solve_slices(p, q, c).map(|s| (s.value, s.plan)),
            Solver::Entropic(cfg) => reg_ot_slices(p, q, c, cfg).map(|s| (s.value, s.plan)),
        }
    }

    /// Values of independent subproblems written to `out` in order; on
    /// failure, the lowest failing index and its error.
    fn values(
        &self,
        ws: &mut Workspace,
        blocks: &[Block<'_>],
        out: &mut Vec<f64>,
    ) -> std::result::Result<(), (usize, Error)> {
        match self {
            Solver::Exact => {
                out.clear();
                for (k, b) in blocks.iter().enumerate() {
                    let value = ArrayView2::from_shape((b.p.len(), b.q.len()), b.c)
                        .map_err(|_| Error::DimensionMismatch("cost block shape".into()))
                        .and_then(|c| solve_value(&mut ws.simplex, b.p, b.q, c))
                        .map_err(|e| (k, e))?;
                    out.push(value);
                }
                Ok(())
            }
            Solver::Entropic(cfg) => reg_ot_values(&mut ws.sinkhorn, blocks, cfg, out),
        }
    }
}

/// Per-thread scratch space reused across subproblems.
#[derive(Default)]
struct Workspace {
    simplex: SimplexWorkspace,
    sinkhorn: SinkhornWorkspace,
    block: Vec<f64>,
}

/// Children of every stage-`t` node: positions in stage `t + 1` and
/// conditional probabilities.
fn stage_children(tree: &ScenarioTree, t: usize) -> Vec<(Vec<usize>, Vec<f64>)> {
    (0..tree.stage_len(t))
        .map(|a| tree.child_block(t, a).unzip())
        .collect()
}

/// `c_t` for every stage, indexed by (X node, Y node) at that stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCostTable {
    /// `costs[t - 1]` is the stage-`t` table.
    pub costs: Vec<Array2<f64>>,
    /// Row labels of each stage table (X node ids, ascending).
    pub x_nodes: Vec<Vec<NodeId>>,
    /// Column labels of each stage table (Y node ids, ascending).
    pub y_nodes: Vec<Vec<NodeId>>,
}

impl StageCostTable {
    pub fn stage(&self, t: usize) -> &Array2<f64> {
        &self.costs[t - 1]
    }

    /// `c_t(a, b)` looked up by node ids.
    pub fn get(&self, t: usize, x_node: NodeId, y_node: NodeId) -> Option<f64> {
        let i = self.x_nodes[t - 1].binary_search(&x_node).ok()?;
        let j = self.y_nodes[t - 1].binary_search(&y_node).ok()?;
        Some(self.costs[t - 1][[i, j]])
    }
}

#[derive(Debug, Clone)]
pub struct NdResult {
    pub value: f64,
    pub stage_costs: StageCostTable,
    pub top_plan: TransportPlan,
    pub subproblem_count: usize,
    pub wall_time: Duration,
}

fn check_compatible(x: &ScenarioTree, y: &ScenarioTree) -> Result<()> {
    if x.depth() != y.depth() {
        return Err(Error::StructureMismatch(format!(
            "depths differ ({} vs {})",
            x.depth(),
            y.depth()
        )));
    }
    if x.value_dim() != y.value_dim() {
        return Err(Error::StructureMismatch(format!(
            "value dimensions differ ({} vs {})",
            x.value_dim(),
            y.value_dim()
        )));
    }
    Ok(())
}

fn leaf_path_costs(x: &ScenarioTree, y: &ScenarioTree, metric: GroundMetric) -> Array2<f64> {
    let width = x.depth() * x.value_dim();
    let (xs, ys) = (x.flat_leaf_paths(), y.flat_leaf_paths());
    let (nx, ny) = (xs.len() / width, ys.len() / width);
    let mut costs = Vec::with_capacity(nx * ny);
    for a in xs.chunks_exact(width) {
        costs.extend(ys.chunks_exact(width).map(|b| metric.distance(a, b)));
    }
    Array2::from_shape_vec((nx, ny), costs).expect("one cost per path pair")
}

/// Distances between every pair of full scenario paths (leaf order).
pub fn path_cost_matrix(x: &ScenarioTree, y: &ScenarioTree, r: f64) -> Result<CostMatrix> {
    check_compatible(x, y)?;
    let metric = GroundMetric::new(r)?;
    CostMatrix::new(leaf_path_costs(x, y, metric))
}

/// Exact optimal transport between the two path laws under the path metric.
pub fn wasserstein_paths(x: &ScenarioTree, y: &ScenarioTree, r: f64) -> Result<f64> {
    let d = path_cost_matrix(x, y, r)?;
    wasserstein(
        &x.path_law().distribution(),
        &y.path_law().distribution(),
        &d,
        r,
    )
}

pub fn nested_distance(x: &ScenarioTree, y: &ScenarioTree, r: f64) -> Result<NdResult> {
    nested_distance_with(x, y, r, &Solver::Exact)
}

pub fn entropic_nested_distance(
    x: &ScenarioTree,
    y: &ScenarioTree,
    r: f64,
    cfg: &RegOtConfig,
) -> Result<NdResult> {
    nested_distance_with(x, y, r, &Solver::Entropic(*cfg))
}

pub fn nested_distance_with(
    x: &ScenarioTree,
    y: &ScenarioTree,
    r: f64,
    solver: &Solver,
) -> Result<NdResult> {
    let start = Instant::now();
    check_compatible(x, y)?;
    let metric = GroundMetric::new(r)?;
    let depth = x.depth();

    let mut costs = vec![Array2::zeros((0, 0)); depth];
    costs[depth - 1] = leaf_path_costs(x, y, metric);
    let mut subproblem_count = 0;

    for t in (1..depth).rev() {
        let next_pow = costs[t].mapv(|c| metric.pow(c));
        let next_pow = next_pow.as_slice().expect("fresh array is contiguous");
        let next_ny = y.stage_len(t + 1);
        let (nx, ny) = (x.stage_len(t), y.stage_len(t));
        subproblem_count += nx * ny;
        let x_children = stage_children(x, t);
        let y_children = stage_children(y, t);
        let subproblem_err = |k: usize, e: Error| Error::Subproblem {
            stage: t,
            x_node: x.stage_nodes(t).nth(k / ny).map_or(k / ny, |n| n.id),
            y_node: y.stage_nodes(t).nth(k % ny).map_or(k % ny, |n| n.id),
            source: Box::new(e),
        };
        // cost blocks of pairs `range`, concatenated row-major into `buf`
        let fill_blocks = |buf: &mut Vec<f64>, range: Range<usize>| {
            buf.clear();
            for k in range {
                let (rows, _) = &x_children[k / ny];
                let (cols, _) = &y_children[k % ny];
                for &i in rows {
                    let row = &next_pow[i * next_ny..(i + 1) * next_ny];
                    buf.extend(cols.iter().map(|&j| row[j]));
                }
            }
        };
        let solve_range = |ws: &mut Workspace, range: Range<usize>| -> Result<Vec<f64>> {
            let mut buf = std::mem::take(&mut ws.block);
            fill_blocks(&mut buf, range.clone());
            let mut offset = 0;
            let blocks: Vec<Block<'_>> = range
                .clone()
                .map(|k| {
                    let p = &x_children[k / ny].1;
                    let q = &y_children[k % ny].1;
                    let c = &buf[offset..offset + p.len() * q.len()];
                    offset += c.len();
                    Block { p, q, c }
                })
                .collect();
            let mut values = Vec::with_capacity(blocks.len());
            let solved = solver.values(ws, &blocks, &mut values);
            drop(blocks);
            ws.block = buf;
            solved.map_err(|(k, e)| subproblem_err(range.start + k, e))?;
            for v in &mut values {
                *v = metric.root(*v);
            }
            Ok(values)
        };
        let pairs = nx * ny;
        let values: Vec<f64> = if pairs >= PARALLEL_PAIRS {
            let chunks: Vec<Range<usize>> = (0..pairs)
                .step_by(PARALLEL_CHUNK)
                .map(|lo| lo..(lo + PARALLEL_CHUNK).min(pairs))
                .collect();
            let parts = chunks
                .into_par_iter()
                .map_init(Workspace::default, solve_range)
                .collect::<Result<Vec<_>>>()?;
            parts.concat()
        } else {
            solve_range(&mut Workspace::default(), 0..pairs)?
        };
        costs[t - 1] = Array2::from_shape_vec((nx, ny), values).expect("one value per pair");
    }

    // both roots are point masses, so the final problem is 1x1
    let top_cost = costs[0].mapv(|c| metric.pow(c));
    let (top_value, top_plan) = solver.solve(&[1.0], &[1.0], top_cost.view())?;
    subproblem_count += 1;

    let labels = |tree: &ScenarioTree| -> Vec<Vec<NodeId>> {
        (1..=depth)
            .map(|t| tree.stage_nodes(t).map(|n| n.id).collect())
            .collect()
    };
    Ok(NdResult {
        value: metric.root(top_value),
        stage_costs: StageCostTable {
            costs,
            x_nodes: labels(x),
            y_nodes: labels(y),
        },
        top_plan,
        subproblem_count,
        wall_time: start.elapsed(),
    })
}
