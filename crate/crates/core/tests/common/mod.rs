//! Helpers shared by the integration tests.

#![allow(dead_code)]

use egodiff::graph::{DenseEgoGraph, SparseNetwork};
use egodiff::rng::Rng;
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

/// Symmetric binary adjacency with independent edges.
pub fn random_adjacency(n: usize, p: f64, rng: &mut Rng) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                a[[i, j]] = 1.0;
                a[[j, i]] = 1.0;
            }
        }
    }
    a
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

pub fn random_graph(n: usize, f: usize, p: f64, rng: &mut Rng) -> DenseEgoGraph {
    let a = random_adjacency(n, p, rng);
    let x = gaussian(n, f, rng);
    DenseEgoGraph::new(x, a, 0).unwrap()
}

/// Erdős–Rényi network with Gaussian features and optional random labels.
pub fn random_network(n: usize, f: usize, p: f64, labeled: bool, rng: &mut Rng) -> SparseNetwork {
    let a = random_adjacency(n, p, rng);
    let edges = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| a[[i, j]] == 1.0)
        .collect();
    let x = gaussian(n, f, rng);
    let labels = labeled.then(|| (0..n).map(|_| rng.random_bool(0.2)).collect());
    SparseNetwork::new(edges, x, labels, false).unwrap()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]].powi(2))
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = (t * t + 1.0).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}
