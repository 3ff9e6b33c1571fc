//! Export of regularized transport plans and their thresholded edge sets,
//! used to inspect how diffuse a plan is as `gamma` varies.
//!
//! An edge `(i, j)` is kept at threshold `theta` when `pi_ij >= theta * p_i`,
//! i.e. when at least a fraction `theta` of source point `i`'s mass moves to
//! target `j`.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nested::{path_cost_matrix, GroundMetric};
use crate::ot::{sinkhorn, CostMatrix, DiscreteDistribution, SinkhornConfig, SinkhornResult};
use crate::tree::ScenarioTree;

/// A transport instance ready for plan export.
#[derive(Debug, Clone)]
pub struct PlanInstance {
    pub p: DiscreteDistribution,
    pub q: DiscreteDistribution,
    pub cost: CostMatrix,
}

impl PlanInstance {
    /// Uniform empirical measures on two point clouds with cost `||x - y||_r^r`.
    pub fn from_clouds(source: &[Vec<f64>], target: &[Vec<f64>], r: f64) -> Result<Self> {
        let metric = GroundMetric::new(r)?;
        let dim = source.first().map_or(0, Vec::len);
        if source.iter().chain(target).any(|pt| pt.len() != dim) {
            return Err(Error::DimensionMismatch(
                "points have differing dimensions".into(),
            ));
        }
        let cost = Array2::from_shape_fn((source.len(), target.len()), |(i, j)| {
            metric.distance(&source[i], &target[j]).powf(r)
        });
        Ok(PlanInstance {
            p: DiscreteDistribution::uniform(source.len())?,
            q: DiscreteDistribution::uniform(target.len())?,
            cost: CostMatrix::new(cost)?,
        })
    }

    /// Path laws of two trees with cost `d(x, y)^r` between full paths.
    pub fn from_trees(x: &ScenarioTree, y: &ScenarioTree, r: f64) -> Result<Self> {
        Ok(PlanInstance {
            p: x.path_law().distribution(),
            q: y.path_law().distribution(),
            cost: path_cost_matrix(x, y, r)?.powf(r)?,
        })
    }

    pub fn solve(&self, cfg: &SinkhornConfig) -> Result<SinkhornResult> {
        sinkhorn(&self.p, &self.q, &self.cost, cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub threshold: f64,
    pub i: usize,
    pub j: usize,
    pub mass: f64,
    /// `mass / p_i`.
    pub fraction: f64,
}

pub fn plan_entries(plan: &Array2<f64>) -> Vec<PlanEntry> {
    plan.indexed_iter()
        .map(|((i, j), &mass)| PlanEntry { i, j, mass })
        .collect()
}

/// Edges carrying at least `theta * p_i` for each threshold, in threshold
/// order then row-major order.
pub fn threshold_edges(plan: &Array2<f64>, p: &[f64], thresholds: &[f64]) -> Vec<Edge> {
    let mut out = Vec::new();
    for &threshold in thresholds {
        for ((i, j), &mass) in plan.indexed_iter() {
            if mass >= threshold * p[i] {
                out.push(Edge {
                    threshold,
                    i,
                    j,
                    mass,
                    fraction: mass / p[i],
                });
            }
        }
    }
    out
}

/// Reads a point cloud: a CSV with a header line and one point per row.
pub fn read_point_cloud(path: &Path) -> Result<Vec<Vec<f64>>> {
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(wrap)?;
    reader
        .deserialize::<Vec<f64>>()
        .collect::<Result<_, _>>()
        .map_err(wrap)
}

pub fn write_point_cloud(path: &Path, points: &[Vec<f64>]) -> Result<()> {
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    let dim = points.first().map_or(0, Vec::len);
    w.write_record((0..dim).map(|k| format!("x{k}")))
        .map_err(wrap)?;
    for pt in points {
        w.serialize(pt).map_err(wrap)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_records<T: Serialize>(path: &Path, header: &[&str], records: &[T]) -> Result<()> {
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(wrap)?;
    w.write_record(header).map_err(wrap)?;
    for rec in records {
        w.serialize(rec).map_err(wrap)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    r.deserialize().collect::<Result<_, _>>().map_err(wrap)
}

/// Long-format plan: header `i,j,mass`, row-major.
pub fn write_plan_csv(path: &Path, plan: &Array2<f64>) -> Result<()> {
    write_records(path, &["i", "j", "mass"], &plan_entries(plan))
}

pub fn read_plan_csv(path: &Path) -> Result<Vec<PlanEntry>> {
    read_records(path)
}

/// Header `threshold,i,j,mass,fraction`.
pub fn write_edges_csv(path: &Path, edges: &[Edge]) -> Result<()> {
    write_records(path, &["threshold", "i", "j", "mass", "fraction"], edges)
}

pub fn read_edges_csv(path: &Path) -> Result<Vec<Edge>> {
    read_records(path)
}
