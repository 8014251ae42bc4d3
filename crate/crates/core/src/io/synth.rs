//! Synthetic attributed networks with planted outliers.
//!
//! The backbone is a stochastic block model; features are drawn around a
//! per-block mean. Two kinds of outliers are planted, in the style of common
//! graph outlier benchmarks:
//!
//! * contextual: a node's features are pushed `feature_shift` standard
//!   deviations further out along its own deviation from the block mean;
//! * structural: groups of `clique_size` nodes are wired into cliques.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseNetwork;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_nodes: usize,
    pub num_features: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub contextual_fraction: f64,
    pub structural_fraction: f64,
    pub clique_size: usize,
    pub feature_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_nodes: 500,
            num_features: 8,
            blocks: 4,
            p_in: 0.09,
            p_out: 0.004,
            contextual_fraction: 0.025,
            structural_fraction: 0.025,
            clique_size: 5,
            feature_shift: 30.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn counts(&self) -> (usize, usize) {
        let n = self.num_nodes as f64;
        let contextual = (self.contextual_fraction * n).round() as usize;
        let structural = (self.structural_fraction * n).round() as usize;
        (contextual, structural)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_nodes < 2 || self.num_features == 0 {
            return bad("synthetic networks need at least 2 nodes and 1 feature".into());
        }
        if self.blocks == 0 || self.blocks > self.num_nodes {
            return bad(format!("blocks = {} must lie in [1, num_nodes]", self.blocks));
        }
        for p in [self.p_in, self.p_out] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("edge probability {p} outside [0, 1]"));
            }
        }
        if self.p_in <= self.p_out {
            return bad(format!("p_in ({}) must exceed p_out ({})", self.p_in, self.p_out));
        }
        for fr in [self.contextual_fraction, self.structural_fraction] {
            if !(0.0..=0.5).contains(&fr) {
                return bad(format!("anomaly fraction {fr} outside [0, 0.5]"));
            }
        }
        if !(self.feature_shift >= 0.0 && self.feature_shift.is_finite()) {
            return bad(format!("feature_shift {} must be nonnegative", self.feature_shift));
        }
        let (_, structural) = self.counts();
        if structural > 0 && (self.clique_size < 2 || self.clique_size > structural) {
            return bad(format!(
                "clique_size {} is infeasible for {structural} structural outliers",
                self.clique_size
            ));
        }
        Ok(())
    }
}

/// A generated network with what was planted in it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthNetwork {
    pub net: SparseNetwork,
    /// Block of every node.
    pub block: Vec<usize>,
    /// `blocks × F` feature means.
    pub block_means: Array2<f64>,
    pub contextual: Vec<usize>,
    pub cliques: Vec<Vec<usize>>,
}

/// Generates a labeled network; fully determined by `cfg`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthNetwork> {
    cfg.validate()?;
    let (n, f, k) = (cfg.num_nodes, cfg.num_features, cfg.blocks);
    let block: Vec<usize> = (0..n).map(|i| i * k / n).collect();

    let mut rng = rng::stream(cfg.seed, &[1]);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if block[i] == block[j] { cfg.p_in } else { cfg.p_out };
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }

    let mut rng = rng::stream(cfg.seed, &[2]);
    let block_means = Array2::from_shape_simple_fn((k, f), || rng.sample::<f64, _>(StandardNormal));
    let mut features = Array2::from_shape_fn((n, f), |(i, c)| block_means[[block[i], c]]);
    features += &Array2::from_shape_simple_fn((n, f), || rng.sample::<f64, _>(StandardNormal));

    let (n_ctx, n_str) = cfg.counts();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(cfg.seed, &[3]));
    let mut contextual = order[..n_ctx].to_vec();
    contextual.sort_unstable();
    let num_cliques = if n_str > 0 { n_str / cfg.clique_size } else { 0 };
    let mut cliques: Vec<Vec<usize>> = order[n_ctx..n_ctx + num_cliques * cfg.clique_size]
        .chunks(cfg.clique_size)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_unstable();
            c
        })
        .collect();
    cliques.sort();

    for &v in &contextual {
        let mean = block_means.row(block[v]);
        let mut dev = &features.row(v) - &mean;
        let norm = dev.dot(&dev).sqrt();
        if norm > 0.0 {
            dev /= norm;
        } else {
            dev.fill(0.0);
            dev[0] = 1.0;
        }
        features.row_mut(v).scaled_add(cfg.feature_shift, &dev);
    }
    for clique in &cliques {
        for (a, &u) in clique.iter().enumerate() {
            for &v in &clique[a + 1..] {
                edges.push((u, v));
            }
        }
    }

    let mut labels = vec![false; n];
    for &v in contextual.iter().chain(cliques.iter().flatten()) {
        labels[v] = true;
    }
    let net = SparseNetwork::new(edges, features, Some(labels), false)?;
    Ok(SynthNetwork {
        net,
        block,
        block_means,
        contextual,
        cliques,
    })
}

impl SynthNetwork {
    /// Distance of every node's features from its block mean.
    pub fn deviation_norms(&self) -> Vec<f64> {
        self.net
            .features()
            .axis_iter(Axis(0))
            .zip(&self.block)
            .map(|(row, b)| {
                let d = &row - &self.block_means.row(*b);
                d.dot(&d).sqrt()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_anomalies_without_fractions() {
        let cfg = SynthConfig {
            num_nodes: 60,
            contextual_fraction: 0.0,
            structural_fraction: 0.0,
            ..SynthConfig::default()
        };
        let s = generate_synthetic(&cfg).unwrap();
        assert!(s.net.labels().unwrap().iter().all(|l| !l));
        assert!(s.contextual.is_empty() && s.cliques.is_empty());
    }

    #[test]
    fn planted_structure() {
        let cfg = SynthConfig {
            num_nodes: 200,
            contextual_fraction: 0.05,
            structural_fraction: 0.05,
            clique_size: 5,
            ..SynthConfig::default()
        };
        let s = generate_synthetic(&cfg).unwrap();
        assert_eq!(s.contextual.len(), 10);
        assert_eq!(s.cliques.len(), 2);
        for c in &s.cliques {
            for &u in c {
                for &v in c {
                    assert!(u == v || s.net.linked(u, v));
                }
            }
        }
        let dev = s.deviation_norms();
        assert!(s.contextual.iter().all(|&v| dev[v] > cfg.feature_shift / 2.0));
        let labels = s.net.labels().unwrap();
        assert_eq!(labels.iter().filter(|l| **l).count(), 20);
        assert_eq!(generate_synthetic(&cfg).unwrap(), s);
    }

    #[test]
    fn infeasible_cliques_are_rejected() {
        let cfg = SynthConfig {
            num_nodes: 100,
            structural_fraction: 0.02,
            clique_size: 5,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        let cfg = SynthConfig {
            p_in: 0.01,
            p_out: 0.02,
            ..SynthConfig::default()
        };
        assert!(generate_synthetic(&cfg).is_err());
    }
}
