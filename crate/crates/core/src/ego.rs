//! k-hop ego-graph extraction, hub truncation and mini-batch assembly.
//!
//! Slot order inside an ego-graph is canonical: the center sits in slot 0 and
//! the remaining nodes follow in ascending original index. Edges are read
//! ignoring direction, so every extracted adjacency is symmetric.

use std::collections::VecDeque;

use ndarray::{Array2, Array3, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DenseEgoGraph, SparseNetwork};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgoConfig {
    /// Neighborhood radius `k`.
    pub hops: usize,
    /// Truncation size `M`.
    pub max_nodes: usize,
}

impl Default for EgoConfig {
    fn default() -> Self {
        Self { hops: 1, max_nodes: 32 }
    }
}

impl EgoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hops < 1 {
            return Err(Error::Config("ego.hops must be >= 1".into()));
        }
        if self.max_nodes < 2 {
            return Err(Error::Config("ego.max_nodes must be >= 2".into()));
        }
        Ok(())
    }
}

/// Nodes within `hops` undirected steps of `v`, center first, rest ascending.
pub fn ego_nodes(net: &SparseNetwork, v: usize, hops: usize) -> Result<Vec<usize>> {
    if v >= net.num_nodes() {
        return Err(Error::contract(format!(
            "node {v} out of range for {} nodes",
            net.num_nodes()
        )));
    }
    let mut dist = vec![usize::MAX; net.num_nodes()];
    dist[v] = 0;
    let mut queue = VecDeque::from([v]);
    let mut ball = Vec::new();
    while let Some(u) = queue.pop_front() {
        if dist[u] == hops {
            continue;
        }
        for &w in net.neighbors(u) {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                ball.push(w);
                queue.push_back(w);
            }
        }
    }
    ball.sort_unstable();
    let mut nodes = Vec::with_capacity(ball.len() + 1);
    nodes.push(v);
    nodes.extend(ball);
    Ok(nodes)
}

/// Induced dense subgraph on `nodes`; slot 0 is the center.
pub fn induced(net: &SparseNetwork, nodes: &[usize]) -> DenseEgoGraph {
    let n = nodes.len();
    let a = Array2::from_shape_fn((n, n), |(i, j)| {
        if i != j && net.linked(nodes[i], nodes[j]) {
            1.0
        } else {
            0.0
        }
    });
    DenseEgoGraph {
        x: net.features().select(Axis(0), nodes),
        a,
        mask: vec![true; n],
        center: 0,
        node_ids: nodes.iter().map(|&u| Some(u)).collect(),
    }
}

/// The `k`-hop ego-graph of `v`.
pub fn extract_ego(net: &SparseNetwork, v: usize, hops: usize) -> Result<DenseEgoGraph> {
    let nodes = ego_nodes(net, v, hops)?;
    Ok(induced(net, &nodes))
}

/// Keeps the center plus `m - 1` uniformly chosen other nodes when the
/// ego-graph is larger than `m`, and re-induces the edges.
///
/// Expects an unpadded ego-graph.
pub fn truncate(ego: &DenseEgoGraph, m: usize, rng: &mut Rng) -> DenseEgoGraph {
    let n = ego.n();
    let m = m.max(1);
    if n <= m {
        return ego.clone();
    }
    let others: Vec<usize> = (0..n).filter(|&i| i != ego.center).collect();
    let mut picked: Vec<usize> = index::sample(rng, others.len(), m - 1)
        .into_iter()
        .map(|k| others[k])
        .collect();
    // keep the canonical order: center, then ascending original index
    picked.sort_unstable_by_key(|&i| (ego.node_ids[i], i));
    let mut keep = vec![ego.center];
    keep.extend(picked);
    DenseEgoGraph {
        x: ego.x.select(Axis(0), &keep),
        a: ego.a.select(Axis(0), &keep).select(Axis(1), &keep),
        mask: vec![true; keep.len()],
        center: 0,
        node_ids: keep.iter().map(|&i| ego.node_ids[i]).collect(),
    }
}

/// Extract-then-truncate, the unit sampled during training and scoring.
pub fn sample_ego(net: &SparseNetwork, v: usize, cfg: &EgoConfig, rng: &mut Rng) -> Result<DenseEgoGraph> {
    let ego = extract_ego(net, v, cfg.hops)?;
    Ok(truncate(&ego, cfg.max_nodes, rng))
}

/// Zero-padded stack of ego-graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoBatch {
    /// `B × N_max × F`.
    pub x: Array3<f64>,
    /// `B × N_max × N_max`.
    pub a: Array3<f64>,
    /// `B × N_max`.
    pub mask: Vec<Vec<bool>>,
    pub centers: Vec<usize>,
    pub node_ids: Vec<Vec<Option<usize>>>,
}

impl EgoBatch {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Slot count shared by every slice.
    pub fn width(&self) -> usize {
        self.x.shape()[1]
    }

    /// Slice `b` as a padded ego-graph.
    pub fn slice(&self, b: usize) -> DenseEgoGraph {
        DenseEgoGraph {
            x: self.x.index_axis(Axis(0), b).to_owned(),
            a: self.a.index_axis(Axis(0), b).to_owned(),
            mask: self.mask[b].clone(),
            center: self.centers[b],
            node_ids: self.node_ids[b].clone(),
        }
    }

    /// Padded slices.
    pub fn slices(&self) -> Vec<DenseEgoGraph> {
        (0..self.len()).map(|b| self.slice(b)).collect()
    }

    /// Inverse of [`build_batch`] for unpadded inputs.
    pub fn unbatch(&self) -> Vec<DenseEgoGraph> {
        (0..self.len()).map(|b| self.slice(b).strip_padding()).collect()
    }
}

/// Pads every ego-graph to the largest real node count and stacks them.
pub fn build_batch(egos: &[DenseEgoGraph]) -> Result<EgoBatch> {
    let Some(first) = egos.first() else {
        return Err(Error::contract("cannot batch zero ego-graphs"));
    };
    let f = first.f();
    if let Some(bad) = egos.iter().find(|g| g.f() != f) {
        return Err(Error::shape(format!("{f} features"), format!("{} features", bad.f())));
    }
    let egos: Vec<DenseEgoGraph> = egos.iter().map(DenseEgoGraph::strip_padding).collect();
    let width = egos.iter().map(DenseEgoGraph::n).max().unwrap_or(0);
    let b = egos.len();
    let mut x = Array3::zeros((b, width, f));
    let mut a = Array3::zeros((b, width, width));
    let mut mask = Vec::with_capacity(b);
    let mut centers = Vec::with_capacity(b);
    let mut node_ids = Vec::with_capacity(b);
    for (k, g) in egos.iter().enumerate() {
        let p = g.pad_to(width);
        x.index_axis_mut(Axis(0), k).assign(&p.x);
        a.index_axis_mut(Axis(0), k).assign(&p.a);
        mask.push(p.mask);
        centers.push(p.center);
        node_ids.push(p.node_ids);
    }
    Ok(EgoBatch {
        x,
        a,
        mask,
        centers,
        node_ids,
    })
}
