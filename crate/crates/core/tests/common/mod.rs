//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's solvers except where a test needs
//! the public regularized solver as the subproblem oracle of a recursion.

#![allow(dead_code)]

use std::collections::HashMap;

use ndarray::Array2;
use nested_distance::ot::{reg_ot, solve_exact};
use nested_distance::tree::NodeId;
use nested_distance::{
    generate, CostMatrix, DiscreteDistribution, GenSpec, RegOtConfig, ScenarioTree,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly positive weights normalized to one.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn random_costs(rng: &mut ChaCha8Rng, n: usize, m: usize, max: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..max))
}

pub struct Instance {
    pub p: DiscreteDistribution,
    pub q: DiscreteDistribution,
    pub c: CostMatrix,
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, max_cost: f64) -> Instance {
    Instance {
        p: DiscreteDistribution::new(random_weights(rng, n)).unwrap(),
        q: DiscreteDistribution::new(random_weights(rng, m)).unwrap(),
        c: CostMatrix::new(random_costs(rng, n, m, max_cost)).unwrap(),
    }
}

pub fn random_tree(seed: u64, depth: usize, max_children: usize, value_dim: usize) -> ScenarioTree {
    let spec = GenSpec {
        depth,
        max_children,
        value_dim,
        seed,
        increment_scale: 1.0,
    };
    generate(&spec).unwrap()
}

/// Calls `visit` with every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(
        start: usize,
        n: usize,
        k: usize,
        cur: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        for e in start..n {
            if n - e < k - cur.len() {
                break;
            }
            cur.push(e);
            rec(e + 1, n, k, cur, visit);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), visit);
}

/// Flow on the edges of a spanning tree of the bipartite graph, found by
/// repeatedly clearing a node of degree one. `None` if the edge set has a
/// cycle (then some node stays with degree > 1 and the leftover system is
/// not triangular).
fn tree_flow(p: &[f64], q: &[f64], edges: &[(usize, usize)]) -> Option<Vec<f64>> {
    let n = p.len();
    let mut supply: Vec<f64> = p.iter().chain(q).copied().collect();
    let mut alive = vec![true; edges.len()];
    let mut flow = vec![0.0; edges.len()];
    for _ in 0..edges.len() {
        let mut degree = vec![0usize; supply.len()];
        for (k, &(i, j)) in edges.iter().enumerate() {
            if alive[k] {
                degree[i] += 1;
                degree[n + j] += 1;
            }
        }
        let (k, leaf) = edges.iter().enumerate().find_map(|(k, &(i, j))| {
            if !alive[k] {
                None
            } else if degree[i] == 1 {
                Some((k, i))
            } else if degree[n + j] == 1 {
                Some((k, n + j))
            } else {
                None
            }
        })?;
        let (i, j) = edges[k];
        let other = if leaf == i { n + j } else { i };
        flow[k] = supply[leaf];
        supply[other] -= supply[leaf];
        supply[leaf] = 0.0;
        alive[k] = false;
    }
    Some(flow)
}

/// Minimum transport cost by enumerating every basis of the transportation
/// polytope: each set of `n + m - 1` cells forming a spanning tree of the
/// bipartite row/column graph fixes a unique flow; the feasible ones are the
/// vertices, and the optimum is attained at a vertex.
pub fn oracle_exact(p: &[f64], q: &[f64], c: &Array2<f64>) -> (f64, Array2<f64>) {
    let (n, m) = (p.len(), q.len());
    assert!(n + m <= 8, "instance too large for enumeration");
    assert_eq!(c.dim(), (n, m));
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let mut best = (f64::INFINITY, Array2::zeros((n, m)));
    for_each_subset(cells.len(), n + m - 1, &mut |subset| {
        let edges: Vec<(usize, usize)> = subset.iter().map(|&k| cells[k]).collect();
        let Some(flow) = tree_flow(p, q, &edges) else {
            return;
        };
        if flow.iter().any(|&f| f < -1e-12) {
            return;
        }
        let cost: f64 = edges
            .iter()
            .zip(&flow)
            .map(|(&(i, j), f)| c[[i, j]] * f)
            .sum();
        if cost < best.0 {
            let mut plan = Array2::zeros((n, m));
            for (&(i, j), &f) in edges.iter().zip(&flow) {
                plan[[i, j]] = f.max(0.0);
            }
            best = (cost, plan);
        }
    });
    best
}

/// Tree structure rebuilt from the raw node list: children in ascending id
/// and the concatenated root-to-node value path of every node.
struct Structure {
    children: HashMap<NodeId, Vec<(NodeId, f64)>>,
    paths: HashMap<NodeId, Vec<f64>>,
    root: NodeId,
}

impl Structure {
    fn of(tree: &ScenarioTree) -> Self {
        let mut nodes: Vec<_> = tree.nodes().to_vec();
        nodes.sort_by_key(|n| (n.stage, n.id));
        let mut children: HashMap<NodeId, Vec<(NodeId, f64)>> = HashMap::new();
        let mut paths: HashMap<NodeId, Vec<f64>> = HashMap::new();
        let mut root = None;
        for node in &nodes {
            let mut path = match node.parent {
                Some(pid) => {
                    children
                        .entry(pid)
                        .or_default()
                        .push((node.id, node.cond_prob));
                    paths[&pid].clone()
                }
                None => {
                    root = Some(node.id);
                    Vec::new()
                }
            };
            path.extend(&node.value);
            paths.insert(node.id, path);
        }
        for kids in children.values_mut() {
            kids.sort_by_key(|&(id, _)| id);
        }
        Structure {
            children,
            paths,
            root: root.expect("tree has a root"),
        }
    }
}

fn lr_distance(x: &[f64], y: &[f64], r: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs().powf(r))
        .sum::<f64>()
        .powf(1.0 / r)
}

/// Backward recursion evaluated top-down: the cost of a node pair is the
/// transport value between their children laws under the children's costs
/// raised to `r`, then rooted; leaf pairs cost the path distance.
fn recurse(
    x: &Structure,
    y: &Structure,
    a: NodeId,
    b: NodeId,
    r: f64,
    ot: &mut impl FnMut(&[f64], &[f64], &Array2<f64>) -> f64,
) -> f64 {
    match (x.children.get(&a), y.children.get(&b)) {
        (Some(ka), Some(kb)) => {
            let mut c = Array2::zeros((ka.len(), kb.len()));
            for (i, &(ca, _)) in ka.iter().enumerate() {
                for (j, &(cb, _)) in kb.iter().enumerate() {
                    c[[i, j]] = recurse(x, y, ca, cb, r, ot).powf(r);
                }
            }
            let p: Vec<f64> = ka.iter().map(|&(_, w)| w).collect();
            let q: Vec<f64> = kb.iter().map(|&(_, w)| w).collect();
            ot(&p, &q, &c).powf(1.0 / r)
        }
        (None, None) => lr_distance(&x.paths[&a], &y.paths[&b], r),
        _ => panic!("trees of different depth"),
    }
}

/// Nested distance with every subproblem solved by basis enumeration.
pub fn oracle_nd(x: &ScenarioTree, y: &ScenarioTree, r: f64) -> f64 {
    let (sx, sy) = (Structure::of(x), Structure::of(y));
    recurse(&sx, &sy, sx.root, sy.root, r, &mut |p, q, c| {
        oracle_exact(p, q, c).0
    })
}

/// Nested distance with every subproblem solved by the public exact solver,
/// for trees whose blocks are too large to enumerate.
pub fn recursion_nd(x: &ScenarioTree, y: &ScenarioTree, r: f64) -> f64 {
    let (sx, sy) = (Structure::of(x), Structure::of(y));
    recurse(&sx, &sy, sx.root, sy.root, r, &mut |p, q, c| {
        let p = DiscreteDistribution::new(p.to_vec()).unwrap();
        let q = DiscreteDistribution::new(q.to_vec()).unwrap();
        let c = CostMatrix::new(c.clone()).unwrap();
        solve_exact(&p, &q, &c).unwrap().value
    })
}

/// Entropic nested distance with every subproblem solved by the public
/// regularized solver on its own cost block.
pub fn oracle_end(x: &ScenarioTree, y: &ScenarioTree, r: f64, cfg: &RegOtConfig) -> f64 {
    let (sx, sy) = (Structure::of(x), Structure::of(y));
    recurse(&sx, &sy, sx.root, sy.root, r, &mut |p, q, c| {
        let p = DiscreteDistribution::new(p.to_vec()).unwrap();
        let q = DiscreteDistribution::new(q.to_vec()).unwrap();
        let c = CostMatrix::new(c.clone()).unwrap();
        reg_ot(&p, &q, &c, cfg).unwrap().value
    })
}

/// Number of (X node, Y node) pairs at the same stage where both have
/// children.
pub fn non_leaf_pairs(x: &ScenarioTree, y: &ScenarioTree) -> usize {
    (1..x.depth())
        .map(|t| x.stage_len(t) * y.stage_len(t))
        .sum()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
