//! Scenario trees: finite, discrete-time stochastic processes stored as rooted
//! trees whose edges carry conditional transition probabilities.
//!
//! Stages are numbered `1..=depth`. The root sits at stage 1 and every leaf
//! sits at stage `depth`, so all scenarios have the same length. A
//! [`ScenarioTree`] can only be obtained through a validating constructor,
//! which makes every other operation in this module infallible with respect
//! to tree structure.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ot::DiscreteDistribution;

/// Absolute tolerance on probability sums.
pub const PROB_TOL: f64 = 1e-12;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: NodeId,
    pub stage: usize,
    pub parent: Option<NodeId>,
    pub value: Vec<f64>,
    /// Probability of this node given its parent; 1 for the root.
    pub cond_prob: f64,
}

impl Node {
    pub fn root(id: NodeId, value: Vec<f64>) -> Self {
        Node {
            id,
            stage: 1,
            parent: None,
            value,
            cond_prob: 1.0,
        }
    }

    pub fn child(id: NodeId, parent: &Node, value: Vec<f64>, cond_prob: f64) -> Self {
        Node {
            id,
            stage: parent.stage + 1,
            parent: Some(parent.id),
            value,
            cond_prob,
        }
    }
}

/// A broken structural invariant, reported with the offending node ids.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ZeroDepth,
    ZeroValueDim,
    Empty,
    DuplicateId(NodeId),
    RootCount(usize),
    RootStage {
        id: NodeId,
        stage: usize,
    },
    RootProb {
        id: NodeId,
        cond_prob: f64,
    },
    StageOutOfRange {
        id: NodeId,
        stage: usize,
    },
    UnknownParent {
        id: NodeId,
        parent: NodeId,
    },
    ParentStage {
        id: NodeId,
        stage: usize,
        parent: NodeId,
        parent_stage: usize,
    },
    CondProbRange {
        id: NodeId,
        cond_prob: f64,
    },
    ValueLength {
        id: NodeId,
        len: usize,
        expected: usize,
    },
    NonFiniteValue {
        id: NodeId,
    },
    ChildrenProbSum {
        parent: NodeId,
        sum: f64,
    },
    EarlyLeaf {
        id: NodeId,
        stage: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroDepth => write!(f, "depth must be at least 1"),
            Violation::ZeroValueDim => write!(f, "value_dim must be at least 1"),
            Violation::Empty => write!(f, "tree has no nodes"),
            Violation::DuplicateId(id) => write!(f, "node id {id} appears more than once"),
            Violation::RootCount(n) => write!(f, "expected exactly one root, found {n}"),
            Violation::RootStage { id, stage } => {
                write!(f, "root node {id} is at stage {stage}, expected 1")
            }
            Violation::RootProb { id, cond_prob } => {
                write!(f, "root node {id} has cond_prob {cond_prob}, expected 1")
            }
            Violation::StageOutOfRange { id, stage } => {
                write!(f, "node {id} has stage {stage} outside 1..=depth")
            }
            Violation::UnknownParent { id, parent } => {
                write!(f, "node {id} references unknown parent {parent}")
            }
            Violation::ParentStage {
                id,
                stage,
                parent,
                parent_stage,
            } => write!(
                f,
                "node {id} at stage {stage} has parent {parent} at stage {parent_stage}"
            ),
            Violation::CondProbRange { id, cond_prob } => {
                write!(f, "node {id} has cond_prob {cond_prob} outside (0, 1]")
            }
            Violation::ValueLength { id, len, expected } => {
                write!(
                    f,
                    "node {id} has a value of length {len}, expected {expected}"
                )
            }
            Violation::NonFiniteValue { id } => write!(f, "node {id} has a non-finite value"),
            Violation::ChildrenProbSum { parent, sum } => {
                write!(
                    f,
                    "children probabilities of node {parent} sum to {sum} != 1"
                )
            }
            Violation::EarlyLeaf { id, stage } => {
                write!(f, "leaf {id} is at stage {stage}, before the final stage")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error("malformed JSON: {0}")]
    Syntax(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid tree: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("node {0} has no children")]
    NoChildren(NodeId),
    #[error("invalid generator settings: {0}")]
    InvalidGenSpec(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Checks every structural invariant of a candidate tree and returns all
/// violations found. An empty list means the parts form a valid tree.
pub fn validate(depth: usize, value_dim: usize, nodes: &[Node]) -> Vec<Violation> {
    let mut out = Vec::new();
    if depth == 0 {
        out.push(Violation::ZeroDepth);
    }
    if value_dim == 0 {
        out.push(Violation::ZeroValueDim);
    }
    if nodes.is_empty() {
        out.push(Violation::Empty);
        return out;
    }

    let mut by_id: HashMap<NodeId, &Node> = HashMap::with_capacity(nodes.len());
    for node in nodes {
        if by_id.insert(node.id, node).is_some() {
            out.push(Violation::DuplicateId(node.id));
        }
    }

    let roots: Vec<&Node> = nodes.iter().filter(|n| n.parent.is_none()).collect();
    if roots.len() != 1 {
        out.push(Violation::RootCount(roots.len()));
    }
    for root in &roots {
        if root.stage != 1 {
            out.push(Violation::RootStage {
                id: root.id,
                stage: root.stage,
            });
        }
        if root.cond_prob != 1.0 {
            out.push(Violation::RootProb {
                id: root.id,
                cond_prob: root.cond_prob,
            });
        }
    }

    let mut child_sums: HashMap<NodeId, f64> = HashMap::new();
    for node in nodes {
        if node.stage == 0 || node.stage > depth {
            out.push(Violation::StageOutOfRange {
                id: node.id,
                stage: node.stage,
            });
        }
        if !(node.cond_prob > 0.0 && node.cond_prob <= 1.0) {
            out.push(Violation::CondProbRange {
                id: node.id,
                cond_prob: node.cond_prob,
            });
        }
        if node.value.len() != value_dim {
            out.push(Violation::ValueLength {
                id: node.id,
                len: node.value.len(),
                expected: value_dim,
            });
        }
        if node.value.iter().any(|v| !v.is_finite()) {
            out.push(Violation::NonFiniteValue { id: node.id });
        }
        if let Some(pid) = node.parent {
            match by_id.get(&pid) {
                None => out.push(Violation::UnknownParent {
                    id: node.id,
                    parent: pid,
                }),
                Some(parent) => {
                    if parent.stage + 1 != node.stage {
                        out.push(Violation::ParentStage {
                            id: node.id,
                            stage: node.stage,
                            parent: pid,
                            parent_stage: parent.stage,
                        });
                    }
                    *child_sums.entry(pid).or_insert(0.0) += node.cond_prob;
                }
            }
        }
    }

    let mut parents: Vec<_> = child_sums.into_iter().collect();
    parents.sort_by_key(|&(id, _)| id);
    for (parent, sum) in parents {
        if (sum - 1.0).abs() > PROB_TOL {
            out.push(Violation::ChildrenProbSum { parent, sum });
        }
    }

    let has_children: std::collections::HashSet<NodeId> =
        nodes.iter().filter_map(|n| n.parent).collect();
    let mut early: Vec<&Node> = nodes
        .iter()
        .filter(|n| !has_children.contains(&n.id) && n.stage < depth)
        .collect();
    early.sort_by_key(|n| n.id);
    for leaf in early {
        out.push(Violation::EarlyLeaf {
            id: leaf.id,
            stage: leaf.stage,
        });
    }
    out
}

/// A validated scenario tree. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ScenarioTree {
    depth: usize,
    value_dim: usize,
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    children: Vec<Vec<usize>>,
    stages: Vec<Vec<usize>>,
    stage_pos: Vec<usize>,
}

impl PartialEq for ScenarioTree {
    fn eq(&self, other: &Self) -> bool {
        self.depth == other.depth && self.value_dim == other.value_dim && self.nodes == other.nodes
    }
}

impl ScenarioTree {
    pub fn new(depth: usize, value_dim: usize, mut nodes: Vec<Node>) -> Result<Self, TreeError> {
        let violations = validate(depth, value_dim, &nodes);
        if !violations.is_empty() {
            return Err(TreeError::Invalid(violations));
        }
        nodes.sort_by_key(|n| n.id);
        let index: HashMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut children = vec![Vec::new(); nodes.len()];
        let mut stages = vec![Vec::new(); depth];
        let mut stage_pos = vec![0; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            if let Some(pid) = node.parent {
                children[index[&pid]].push(i);
            }
            stage_pos[i] = stages[node.stage - 1].len();
            stages[node.stage - 1].push(i);
        }
        Ok(ScenarioTree {
            depth,
            value_dim,
            nodes,
            index,
            children,
            stages,
            stage_pos,
        })
    }

    /// A single scenario: one node per stage, each with probability 1.
    pub fn chain(values: &[Vec<f64>]) -> Result<Self, TreeError> {
        let value_dim = values.first().map_or(0, Vec::len);
        let nodes = values
            .iter()
            .enumerate()
            .map(|(i, v)| Node {
                id: i,
                stage: i + 1,
                parent: i.checked_sub(1),
                value: v.clone(),
                cond_prob: 1.0,
            })
            .collect();
        ScenarioTree::new(values.len(), value_dim, nodes)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn root(&self) -> &Node {
        &self.nodes[self.stages[0][0]]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> + '_ {
        self.stages[self.depth - 1]
            .iter()
            .map(move |&i| &self.nodes[i])
    }

    pub fn leaf_count(&self) -> usize {
        self.stages[self.depth - 1].len()
    }

    /// Nodes at `stage` (1-based) in ascending id order.
    pub fn stage_nodes(&self, stage: usize) -> impl Iterator<Item = &Node> + '_ {
        self.stages[stage - 1].iter().map(move |&i| &self.nodes[i])
    }

    pub fn stage_len(&self, stage: usize) -> usize {
        self.stages[stage - 1].len()
    }

    /// Always empty: construction already rejected invalid trees.
    pub fn validate(&self) -> Vec<Violation> {
        validate(self.depth, self.value_dim, &self.nodes)
    }

    /// Position of every child of the `pos`-th node at `stage` within the
    /// node list of `stage + 1`, in ascending id order, with its probability.
    pub(crate) fn child_block(
        &self,
        stage: usize,
        pos: usize,
    ) -> impl Iterator<Item = (usize, f64)> + '_ {
        let idx = self.stages[stage - 1][pos];
        self.children[idx]
            .iter()
            .map(move |&c| (self.stage_pos[c], self.nodes[c].cond_prob))
    }

    /// Conditional law of the next stage given that the process is at `id`.
    pub fn children_distribution(&self, id: NodeId) -> Result<DiscreteDistribution, TreeError> {
        let &idx = self.index.get(&id).ok_or(TreeError::UnknownNode(id))?;
        let kids = &self.children[idx];
        if kids.is_empty() {
            return Err(TreeError::NoChildren(id));
        }
        let support = kids.iter().map(|&c| self.nodes[c].id).collect();
        let weights = kids.iter().map(|&c| self.nodes[c].cond_prob).collect();
        Ok(DiscreteDistribution::with_support(support, weights)
            .expect("validated tree has normalized children"))
    }

    /// Concatenated values along the root-to-node path, and its probability.
    fn path_to(&self, mut idx: usize) -> (Vec<f64>, f64) {
        let mut chunks = Vec::with_capacity(self.nodes[idx].stage);
        let mut prob = 1.0;
        loop {
            let node = &self.nodes[idx];
            chunks.push(node.value.as_slice());
            prob *= node.cond_prob;
            match node.parent {
                Some(pid) => idx = self.index[&pid],
                None => break,
            }
        }
        (chunks.into_iter().rev().flatten().copied().collect(), prob)
    }

    /// Every root-to-leaf path concatenated into one buffer, in the leaf
    /// order of [`ScenarioTree::path_law`], built stage by stage.
    pub(crate) fn flat_leaf_paths(&self) -> Vec<f64> {
        let d = self.value_dim;
        let mut prefixes = self.nodes[self.stages[0][0]].value.clone();
        for t in 1..self.depth {
            let (old, new) = (t * d, (t + 1) * d);
            let mut next = vec![0.0; self.stages[t].len() * new];
            for (pos, &idx) in self.stages[t - 1].iter().enumerate() {
                let prefix = &prefixes[pos * old..(pos + 1) * old];
                for &c in &self.children[idx] {
                    let at = self.stage_pos[c] * new;
                    next[at..at + old].copy_from_slice(prefix);
                    next[at + old..at + new].copy_from_slice(&self.nodes[c].value);
                }
            }
            prefixes = next;
        }
        prefixes
    }

    /// Law of the whole process: one entry per leaf in ascending leaf id.
    pub fn path_law(&self) -> PathLaw {
        let paths = self.stages[self.depth - 1]
            .iter()
            .map(|&i| {
                let (values, prob) = self.path_to(i);
                ScenarioPath {
                    leaf: self.nodes[i].id,
                    values,
                    prob,
                }
            })
            .collect();
        PathLaw { paths }
    }

    /// Copy of the tree with every node value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> ScenarioTree {
        let mut out = self.clone();
        for node in &mut out.nodes {
            node.value.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPath {
    pub leaf: NodeId,
    /// Stage values concatenated, length `depth * value_dim`.
    pub values: Vec<f64>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathLaw {
    pub paths: Vec<ScenarioPath>,
}

impl PathLaw {
    pub fn distribution(&self) -> DiscreteDistribution {
        DiscreteDistribution::with_support(
            self.paths.iter().map(|p| p.leaf).collect(),
            self.paths.iter().map(|p| p.prob).collect(),
        )
        .expect("path probabilities of a valid tree are normalized")
    }
}

/// Settings for the forward random tree generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub depth: usize,
    pub max_children: usize,
    pub value_dim: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian increment added at each stage.
    pub increment_scale: f64,
}

impl GenSpec {
    pub fn new(depth: usize, max_children: usize, seed: u64) -> Self {
        GenSpec {
            depth,
            max_children,
            value_dim: 1,
            seed,
            increment_scale: 1.0,
        }
    }
}

/// Grows a random tree stage by stage. Each node draws its number of
/// children uniformly in `1..=max_children`; a child's value is its parent's
/// value plus an independent Gaussian increment, and sibling probabilities
/// are independent uniform draws normalized to sum to one. The root value is
/// itself one increment away from the origin.
pub fn generate(spec: &GenSpec) -> Result<ScenarioTree, TreeError> {
    if spec.depth == 0 || spec.max_children == 0 || spec.value_dim == 0 {
        return Err(TreeError::InvalidGenSpec(
            "depth, max_children and value_dim must be positive".into(),
        ));
    }
    if !(spec.increment_scale > 0.0 && spec.increment_scale.is_finite()) {
        return Err(TreeError::InvalidGenSpec(
            "increment_scale must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let increment = |rng: &mut ChaCha8Rng, base: &[f64]| -> Vec<f64> {
        base.iter()
            .map(|b| b + spec.increment_scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    let origin = vec![0.0; spec.value_dim];
    let mut nodes = vec![Node::root(0, increment(&mut rng, &origin))];
    let mut frontier = vec![0usize];
    for _ in 1..spec.depth {
        let mut next = Vec::new();
        for &parent_idx in &frontier {
            let k = rng.random_range(1..=spec.max_children);
            let raw: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Open01)).collect();
            let total: f64 = raw.iter().sum();
            for w in raw {
                let parent = &nodes[parent_idx];
                let value = increment(&mut rng, &parent.value);
                let child = Node::child(nodes.len(), parent, value, w / total);
                next.push(nodes.len());
                nodes.push(child);
            }
        }
        frontier = next;
    }
    ScenarioTree::new(spec.depth, spec.value_dim, nodes)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    depth: usize,
    value_dim: usize,
    nodes: Vec<Node>,
}

/// Parses the JSON tree format and validates the result.
pub fn parse_tree(bytes: &[u8]) -> Result<ScenarioTree, TreeError> {
    let file: TreeFile = serde_json::from_slice(bytes).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => TreeError::Schema(e.to_string()),
        _ => TreeError::Syntax(e.to_string()),
    })?;
    ScenarioTree::new(file.depth, file.value_dim, file.nodes)
}

/// Canonical JSON: fixed field order, nodes sorted by id, floats printed
/// with shortest round-trip representation.
pub fn serialize_tree(tree: &ScenarioTree) -> String {
    let file = TreeFile {
        depth: tree.depth,
        value_dim: tree.value_dim,
        nodes: tree.nodes.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("tree is always serializable");
    s.push('\n');
    s
}

/// Two three-stage trees with identical path laws up to `eps` but different
/// information flow. In `early`, a move of `+eps`/`-eps` at stage 2 reveals
/// whether the price jumps to `2a` or drops to 0 at stage 3. In `late`, stage
/// 2 is flat at `a` and the jump is revealed only at stage 3.
pub fn early_vs_late_information(a: f64, eps: f64) -> (ScenarioTree, ScenarioTree) {
    let root = Node::root(0, vec![a]);
    let up = Node::child(1, &root, vec![a + eps], 0.5);
    let down = Node::child(2, &root, vec![a - eps], 0.5);
    let up_leaf = Node::child(3, &up, vec![2.0 * a], 1.0);
    let down_leaf = Node::child(4, &down, vec![0.0], 1.0);
    let early = ScenarioTree::new(3, 1, vec![root, up, down, up_leaf, down_leaf])
        .expect("fixture is valid");

    let root = Node::root(0, vec![a]);
    let mid = Node::child(1, &root, vec![a], 1.0);
    let hi = Node::child(2, &mid, vec![2.0 * a], 0.5);
    let lo = Node::child(3, &mid, vec![0.0], 0.5);
    let late = ScenarioTree::new(3, 1, vec![root, mid, hi, lo]).expect("fixture is valid");
    (early, late)
}
