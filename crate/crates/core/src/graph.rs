//! Graph containers and the spectral quantities computed on them.
//!
//! [`SparseNetwork`] holds the full attributed network as an edge list plus a
//! feature matrix. [`DenseEgoGraph`] is the small dense `(X, A)` pair that the
//! diffusion model, the solvers and the scorer operate on.
//!
//! The normalized Laplacian uses the pseudoinverse of the degree matrix,
//! `L = D^{+/2} (D - A) D^{+/2}`, so isolated nodes contribute zero rows and
//! columns instead of dividing by zero. The Dirichlet energy `Tr XᵀLX`
//! normalized by `‖X‖²` is then bounded by the spectral radius of `L`,
//! which never exceeds 2.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Degrees below this are treated as zero by the pseudoinverse.
pub const DEGREE_EPS: f64 = 1e-12;

/// An attributed network `(V, E, X)` with optional binary outlier labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseNetwork {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Array2<f64>,
    labels: Option<Vec<bool>>,
    directed: bool,
    // undirected neighbor lists, sorted ascending
    neighbors: Vec<Vec<usize>>,
}

impl SparseNetwork {
    /// Validates and canonicalizes the edge list.
    ///
    /// Self-loops are dropped and duplicate pairs collapsed. For undirected
    /// networks `(u, v)` and `(v, u)` are the same edge and are stored once
    /// as `(min, max)`.
    pub fn new(
        edges: Vec<(usize, usize)>,
        features: Array2<f64>,
        labels: Option<Vec<bool>>,
        directed: bool,
    ) -> Result<Self> {
        let num_nodes = features.nrows();
        if let Some(&(u, v)) = edges.iter().find(|(u, v)| *u >= num_nodes || *v >= num_nodes) {
            return Err(Error::contract(format!(
                "edge ({u}, {v}) out of range for {num_nodes} nodes"
            )));
        }
        if let Some(l) = &labels {
            if l.len() != num_nodes {
                return Err(Error::shape(
                    format!("{num_nodes} labels"),
                    format!("{} labels", l.len()),
                ));
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: "network features".into(),
            });
        }

        let mut edges: Vec<(usize, usize)> = edges
            .into_iter()
            .filter(|(u, v)| u != v)
            .map(|(u, v)| if directed || u < v { (u, v) } else { (v, u) })
            .collect();
        edges.sort_unstable();
        edges.dedup();

        let mut neighbors = vec![Vec::new(); num_nodes];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }

        Ok(Self {
            num_nodes,
            edges,
            features,
            labels,
            directed,
            neighbors,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    /// Canonical edge list (sorted, deduplicated, no self-loops).
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Neighbors of `v` ignoring edge direction, ascending.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    /// Whether `u` and `v` are linked in either direction.
    pub fn linked(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Same topology and labels with a replaced feature matrix.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.dim() != self.features.dim() {
            return Err(Error::shape(
                format!("{:?}", self.features.dim()),
                format!("{:?}", features.dim()),
            ));
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }
}

/// A dense ego-graph, possibly padded with masked-out slots.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseEgoGraph {
    /// Node features, `N × F`.
    pub x: Array2<f64>,
    /// Adjacency, `N × N`.
    pub a: Array2<f64>,
    /// `true` for real nodes, `false` for padding.
    pub mask: Vec<bool>,
    /// Slot of the ego node.
    pub center: usize,
    /// Original network index of each slot (`None` for padding).
    pub node_ids: Vec<Option<usize>>,
}

impl DenseEgoGraph {
    /// Builds an unpadded graph and checks the invariants.
    pub fn new(x: Array2<f64>, a: Array2<f64>, center: usize) -> Result<Self> {
        let n = x.nrows();
        let g = Self {
            mask: vec![true; n],
            node_ids: (0..n).map(Some).collect(),
            x,
            a,
            center,
        };
        g.validate()?;
        Ok(g)
    }

    /// Slot count including padding.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn f(&self) -> usize {
        self.x.ncols()
    }

    pub fn real_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Checks symmetry, zero diagonal and zeroed padding.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.a.dim() != (n, n) {
            return Err(Error::shape(format!("({n}, {n})"), format!("{:?}", self.a.dim())));
        }
        if self.mask.len() != n || self.node_ids.len() != n {
            return Err(Error::shape(
                format!("mask of length {n}"),
                format!("{}", self.mask.len()),
            ));
        }
        if self.center >= n || !self.mask[self.center] {
            return Err(Error::contract("center slot must be a real node"));
        }
        for i in 0..n {
            if self.a[[i, i]] != 0.0 {
                return Err(Error::contract(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                if self.a[[i, j]] != self.a[[j, i]] {
                    return Err(Error::contract(format!("adjacency asymmetric at ({i}, {j})")));
                }
            }
            if !self.mask[i] && (self.x.row(i).iter().any(|v| *v != 0.0) || self.a.row(i).iter().any(|v| *v != 0.0)) {
                return Err(Error::contract(format!("padded slot {i} is not zero")));
            }
        }
        Ok(())
    }

    /// Adds masked-out slots at the end until there are `n` slots.
    pub fn pad_to(&self, n: usize) -> Self {
        let cur = self.n();
        assert!(n >= cur, "cannot pad {cur} slots down to {n}");
        let mut x = Array2::zeros((n, self.f()));
        x.slice_mut(ndarray::s![..cur, ..]).assign(&self.x);
        let mut a = Array2::zeros((n, n));
        a.slice_mut(ndarray::s![..cur, ..cur]).assign(&self.a);
        let mut mask = self.mask.clone();
        mask.resize(n, false);
        let mut node_ids = self.node_ids.clone();
        node_ids.resize(n, None);
        Self {
            x,
            a,
            mask,
            center: self.center,
            node_ids,
        }
    }

    /// Drops padding slots.
    pub fn strip_padding(&self) -> Self {
        let keep: Vec<usize> = (0..self.n()).filter(|&i| self.mask[i]).collect();
        let center = keep.iter().position(|&i| i == self.center).unwrap_or(0);
        Self {
            x: self.x.select(Axis(0), &keep),
            a: self.a.select(Axis(0), &keep).select(Axis(1), &keep),
            mask: vec![true; keep.len()],
            center,
            node_ids: keep.iter().map(|&i| self.node_ids[i]).collect(),
        }
    }
}

/// Normalized Laplacian with the degree vector it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    pub l: Array2<f64>,
    pub deg: Array1<f64>,
}

impl Laplacian {
    /// Largest eigenvalue by power iteration on the PSD matrix `L`.
    pub fn spectral_radius(&self) -> f64 {
        let n = self.l.nrows();
        if n == 0 {
            return 0.0;
        }
        // deterministic, non-degenerate start vector
        let mut v = Array1::from_shape_fn(n, |i| 1.0 + (i as f64 * 0.618_033_988_7).fract());
        let mut lambda = 0.0;
        for _ in 0..1000 {
            let w = self.l.dot(&v);
            let norm = w.dot(&w).sqrt();
            if norm < 1e-300 {
                return 0.0;
            }
            let next = v.dot(&w) / v.dot(&v);
            v = w / norm;
            if (next - lambda).abs() < 1e-13 {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda
    }
}

fn check_square(a: &ArrayView2<f64>) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::shape("square matrix", format!("({r}, {c})")));
    }
    Ok(r)
}

/// `max(A, Aᵀ)` with the diagonal cleared.
pub fn symmetrize(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { a[[i, j]].max(a[[j, i]]) })
}

/// Thresholds a continuous adjacency to `{0, 1}`, keeping the diagonal zero.
pub fn binarize(a: &Array2<f64>, threshold: f64) -> Array2<f64> {
    let n = a.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| if i != j && a[[i, j]] > threshold { 1.0 } else { 0.0 })
}

/// `L = D^{+/2} (D - A) D^{+/2}` for a symmetric binary adjacency.
///
/// Rows and columns of masked-out slots are ignored (treated as zero).
pub fn normalized_laplacian(a: &Array2<f64>, mask: &[bool]) -> Result<Laplacian> {
    let n = check_square(&a.view())?;
    if mask.len() != n {
        return Err(Error::shape(format!("mask of length {n}"), mask.len()));
    }
    for i in 0..n {
        for j in 0..n {
            let v = a[[i, j]];
            if v != 0.0 && v != 1.0 {
                return Err(Error::contract(format!(
                    "adjacency entry ({i}, {j}) = {v} is not binary"
                )));
            }
            if v != a[[j, i]] {
                return Err(Error::contract(format!("adjacency asymmetric at ({i}, {j})")));
            }
        }
        if a[[i, i]] != 0.0 {
            return Err(Error::contract(format!("self-loop at {i}")));
        }
    }

    let live = |i: usize, j: usize| mask[i] && mask[j];
    let deg = Array1::from_shape_fn(n, |i| (0..n).filter(|&j| live(i, j)).map(|j| a[[i, j]]).sum::<f64>());
    let inv_sqrt = deg.mapv(|d| if d < DEGREE_EPS { 0.0 } else { d.sqrt().recip() });
    let l = Array2::from_shape_fn((n, n), |(i, j)| {
        if !live(i, j) {
            return 0.0;
        }
        let dmat = if i == j { deg[i] } else { 0.0 };
        inv_sqrt[i] * (dmat - a[[i, j]]) * inv_sqrt[j]
    });
    Ok(Laplacian { l, deg })
}

/// Dirichlet energy `Tr XᵀLX`.
pub fn dirichlet_energy(x: &Array2<f64>, lap: &Laplacian) -> Result<f64> {
    let n = lap.l.nrows();
    if x.nrows() != n {
        return Err(Error::shape(format!("{n} feature rows"), x.nrows()));
    }
    let lx = lap.l.dot(x);
    Ok((x * &lx).sum().max(0.0))
}

/// Dirichlet energy as the sum over undirected edges of
/// `‖x_i/√d_i − x_j/√d_j‖²`. Equal to [`dirichlet_energy`] for the Laplacian
/// built from the same adjacency.
pub fn dirichlet_energy_edges(x: &Array2<f64>, a: &Array2<f64>, mask: &[bool]) -> Result<f64> {
    let n = check_square(&a.view())?;
    if x.nrows() != n || mask.len() != n {
        return Err(Error::shape(format!("{n} rows"), x.nrows()));
    }
    let live = |i: usize, j: usize| mask[i] && mask[j] && a[[i, j]] != 0.0;
    let deg: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| live(i, j)).map(|j| a[[i, j]]).sum())
        .collect();
    let scale = |d: f64| if d < DEGREE_EPS { 0.0 } else { d.sqrt().recip() };
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            if !live(i, j) {
                continue;
            }
            let (si, sj) = (scale(deg[i]), scale(deg[j]));
            total += x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(xi, xj)| (xi * si - xj * sj).powi(2))
                .sum::<f64>();
        }
    }
    Ok(total)
}

/// Squared Frobenius norm over real rows.
pub fn masked_sq_norm(x: &Array2<f64>, mask: &[bool]) -> f64 {
    x.outer_iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(row, _)| row.dot(&row))
        .sum()
}

/// `E(X, L) / ‖X‖²` for a binary adjacency, using real rows only.
///
/// Returns [`Error::Normalization`] when every real feature is zero.
pub fn normalized_energy_of(x: &Array2<f64>, a: &Array2<f64>, mask: &[bool]) -> Result<f64> {
    let norm = masked_sq_norm(x, mask);
    if norm == 0.0 {
        return Err(Error::Normalization);
    }
    let lap = normalized_laplacian(a, mask)?;
    let mut xm = x.clone();
    for (mut row, m) in xm.outer_iter_mut().zip(mask) {
        if !m {
            row.fill(0.0);
        }
    }
    let e = dirichlet_energy(&xm, &lap)?;
    // rounding can push an exact 2.0 a hair over
    Ok((e / norm).clamp(0.0, 2.0))
}

/// Normalized Dirichlet energy of an ego-graph with binary adjacency.
pub fn normalized_energy(g: &DenseEgoGraph) -> Result<f64> {
    normalized_energy_of(&g.x, &g.a, &g.mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn k2() -> Array2<f64> {
        array![[0.0, 1.0], [1.0, 0.0]]
    }

    fn p3() -> Array2<f64> {
        array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]
    }

    #[test]
    fn laplacian_of_single_edge() {
        let lap = normalized_laplacian(&k2(), &[true, true]).unwrap();
        assert_eq!(lap.l, array![[1.0, -1.0], [-1.0, 1.0]]);
        assert_eq!(lap.deg, array![1.0, 1.0]);
    }

    #[test]
    fn laplacian_of_empty_graph_is_zero() {
        let lap = normalized_laplacian(&Array2::zeros((3, 3)), &[true; 3]).unwrap();
        assert!(lap.l.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn laplacian_of_path() {
        let lap = normalized_laplacian(&p3(), &[true; 3]).unwrap();
        let h = -(0.5f64).sqrt();
        for (i, j, want) in [(0, 1, h), (1, 2, h), (0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (0, 2, 0.0)] {
            assert!((lap.l[[i, j]] - want).abs() < 1e-15, "({i},{j})");
            assert!((lap.l[[j, i]] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn laplacian_rejects_bad_input() {
        let directed = array![[0.0, 1.0], [0.0, 0.0]];
        assert!(matches!(
            normalized_laplacian(&directed, &[true, true]),
            Err(Error::Contract(_))
        ));
        let weighted = array![[0.0, 0.5], [0.5, 0.0]];
        assert!(matches!(
            normalized_laplacian(&weighted, &[true, true]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn energies_on_small_graphs() {
        let lap = normalized_laplacian(&k2(), &[true, true]).unwrap();
        assert_eq!(dirichlet_energy(&array![[1.0], [1.0]], &lap).unwrap(), 0.0);
        assert!((dirichlet_energy(&array![[1.0], [-1.0]], &lap).unwrap() - 4.0).abs() < 1e-12);

        let x = array![[1.0], [0.0], [1.0]];
        let lap = normalized_laplacian(&p3(), &[true; 3]).unwrap();
        assert!((dirichlet_energy(&x, &lap).unwrap() - 2.0).abs() < 1e-12);
        assert!((dirichlet_energy_edges(&x, &p3(), &[true; 3]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_energy_values() {
        let g = DenseEgoGraph::new(array![[1.0], [-1.0]], k2(), 0).unwrap();
        assert!((normalized_energy(&g).unwrap() - 2.0).abs() < 1e-12);
        let g = DenseEgoGraph::new(array![[1.0], [0.0], [1.0]], p3(), 1).unwrap();
        assert!((normalized_energy(&g).unwrap() - 1.0).abs() < 1e-12);
        let triangle = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let g = DenseEgoGraph::new(array![[3.0, -2.0], [3.0, -2.0], [3.0, -2.0]], triangle, 0).unwrap();
        assert!(normalized_energy(&g).unwrap().abs() < 1e-12);
        // on irregular graphs the null space is D^{1/2}·1, not the constants
        let s = 2f64.sqrt();
        let g = DenseEgoGraph::new(array![[1.0], [s], [1.0]], p3(), 0).unwrap();
        assert!(normalized_energy(&g).unwrap().abs() < 1e-12);
    }

    #[test]
    fn zero_features_cannot_be_normalized() {
        let g = DenseEgoGraph::new(Array2::zeros((2, 3)), k2(), 0).unwrap();
        assert!(matches!(normalized_energy(&g), Err(Error::Normalization)));
    }

    #[test]
    fn padding_does_not_change_energy() {
        let g = DenseEgoGraph::new(array![[1.0], [0.0], [1.0]], p3(), 1).unwrap();
        let padded = g.pad_to(6);
        padded.validate().unwrap();
        assert_eq!(normalized_energy(&g).unwrap(), normalized_energy(&padded).unwrap());
        assert_eq!(padded.strip_padding(), g);
    }

    #[test]
    fn symmetrize_examples() {
        let s = symmetrize(&array![[0.0, 1.0], [0.0, 0.0]]);
        assert_eq!(s, k2());
        assert_eq!(symmetrize(&p3()), p3());
        let s = symmetrize(&array![[1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(s, k2());
    }

    #[test]
    fn spectral_radius_of_bipartite_graph_is_two() {
        let lap = normalized_laplacian(&k2(), &[true, true]).unwrap();
        assert!((lap.spectral_radius() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn network_canonicalizes_edges() {
        let net = SparseNetwork::new(vec![(1, 0), (0, 1), (2, 2), (1, 2)], Array2::zeros((3, 1)), None, false).unwrap();
        assert_eq!(net.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(net.neighbors(1), &[0, 2]);
        assert!(SparseNetwork::new(vec![(0, 3)], Array2::zeros((3, 1)), None, false).is_err());
    }
}
