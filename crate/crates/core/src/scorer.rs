//! Node anomaly scores from ego-graph reconstructions.
//!
//! For each node the ego-graph is corrupted to `K` interior times
//! `τᵢ = i·T/(K+1)` with the transition kernel, denoised `S` times per level,
//! and compared with the original. The score is
//! `Σᵢ Σⱼ γ(τᵢ)·d(G, Ĝ⁽ʲ⁾(τᵢ))`.

use std::cmp::Ordering;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ego::{sample_ego, EgoConfig};
use crate::error::{Error, Result};
use crate::graph::{binarize, normalized_energy_of, DenseEgoGraph, SparseNetwork};
use crate::model::ScoreModel;
use crate::rng::{self, Rng};
use crate::sde::VpSde;
use crate::solver::{integrate_reverse, GraphState, Noise, ScoreFn, SolverConfig, SolverKind};

// rng stream tags
const EGO: u64 = 11;
const RECON: u64 = 12;
const PROFILE: u64 = 13;

/// Time weight `γ(τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    Snr,
    SqrtSnr,
    None,
}

impl Penalty {
    pub fn weight(self, sde: &VpSde, tau: f64) -> Result<f64> {
        Ok(match self {
            Self::Snr => sde.snr(tau)?,
            Self::SqrtSnr => sde.snr(tau)?.sqrt(),
            Self::None => 1.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dissimilarity {
    /// Size-normalized Frobenius distance of adjacency and features.
    Matrix,
    /// Absolute shift of the normalized Dirichlet energy.
    Energy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub levels: usize,
    pub samples_per_level: usize,
    pub alpha: f64,
    pub penalty: Penalty,
    pub dissimilarity: Dissimilarity,
    pub solver: SolverConfig,
    pub binarize_threshold: f64,
    pub seed: u64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            samples_per_level: 3,
            alpha: 0.5,
            penalty: Penalty::Snr,
            dissimilarity: Dissimilarity::Matrix,
            solver: SolverConfig::default(),
            binarize_threshold: 0.5,
            seed: 0,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.samples_per_level == 0 {
            return Err(Error::Config("levels and samples_per_level must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} must lie in [0, 1]", self.alpha)));
        }
        if !self.binarize_threshold.is_finite() {
            return Err(Error::Config("binarize_threshold must be finite".into()));
        }
        self.solver.validate()
    }
}

/// Interior grid `τᵢ = i·T/(K+1)`, `i = 1..K`.
pub fn reconstruction_levels(k: usize, t_max: f64) -> Vec<f64> {
    (1..=k).map(|i| i as f64 * t_max / (k + 1) as f64).collect()
}

/// Corrupts `ego` to time `tau` in one shot and integrates back to 0.
pub fn reconstruct(
    ego: &DenseEgoGraph,
    tau: f64,
    score: &dyn ScoreFn,
    sde: &VpSde,
    solver: &SolverConfig,
    rng: &mut Rng,
) -> Result<GraphState> {
    let px = sde.perturb_features(&ego.x, &ego.mask, tau, rng)?;
    let pa = sde.perturb_adjacency(&ego.a, &ego.mask, tau, rng)?;
    let start = GraphState {
        x: px.noisy,
        a: pa.noisy,
        mask: ego.mask.clone(),
    };
    integrate_reverse(&start, tau, score, sde, solver, Noise::On, rng)
}

fn real_sq_diff(a: &Array2<f64>, b: &Array2<f64>, mask: &[bool], pairs: bool) -> f64 {
    let mut total = 0.0;
    for ((i, j), v) in a.indexed_iter() {
        let live = if pairs { mask[i] && mask[j] } else { mask[i] };
        if live {
            total += (v - b[[i, j]]).powi(2);
        }
    }
    total
}

/// Per-component reconstruction errors `‖X̂−X‖_F/(N·F)` and `‖Â−A‖_F/N²`
/// over real slots.
pub fn reconstruction_errors(g: &DenseEgoGraph, x_hat: &Array2<f64>, a_hat: &Array2<f64>) -> Result<(f64, f64)> {
    if x_hat.dim() != g.x.dim() || a_hat.dim() != g.a.dim() {
        return Err(Error::shape(
            format!("{:?} and {:?}", g.x.dim(), g.a.dim()),
            format!("{:?} and {:?}", x_hat.dim(), a_hat.dim()),
        ));
    }
    let n = g.real_count() as f64;
    let f = g.f() as f64;
    let ex = real_sq_diff(&g.x, x_hat, &g.mask, false).sqrt() / (n * f).max(1.0);
    let ea = real_sq_diff(&g.a, a_hat, &g.mask, true).sqrt() / (n * n).max(1.0);
    Ok((ex, ea))
}

/// `(1−α)·‖A−Â‖_F/N² + α·‖X−X̂‖_F/(N·F)` over real slots, `Â` continuous.
pub fn matrix_distance(g: &DenseEgoGraph, x_hat: &Array2<f64>, a_hat: &Array2<f64>, alpha: f64) -> Result<f64> {
    let (ex, ea) = reconstruction_errors(g, x_hat, a_hat)?;
    Ok((1.0 - alpha) * ea + alpha * ex)
}

/// Normalized energies of an original/reconstruction pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyShift {
    pub original: f64,
    pub reconstructed: f64,
    /// The original features are all zero; its energy is taken as 0.
    pub zero_original: bool,
    /// The reconstructed features are all zero; its energy is taken as 0.
    pub zero_reconstruction: bool,
    /// The binarized reconstruction has no edges.
    pub edgeless_reconstruction: bool,
}

impl EnergyShift {
    pub fn shift(&self) -> f64 {
        (self.original - self.reconstructed).abs()
    }

    /// `original − reconstructed`.
    pub fn signed(&self) -> f64 {
        self.original - self.reconstructed
    }
}

fn energy_or_zero(x: &Array2<f64>, a: &Array2<f64>, mask: &[bool]) -> Result<(f64, bool)> {
    match normalized_energy_of(x, a, mask) {
        Ok(e) => Ok((e, false)),
        Err(Error::Normalization) => Ok((0.0, true)),
        Err(e) => Err(e),
    }
}

/// Energy shift `|ℰ(X,L)/‖X‖² − ℰ(X̂,L̂)/‖X̂‖²|`; `a_hat_bin` must already be
/// binary. Degenerate all-zero feature matrices contribute energy 0 and are
/// flagged.
pub fn energy_shift(g: &DenseEgoGraph, x_hat: &Array2<f64>, a_hat_bin: &Array2<f64>) -> Result<EnergyShift> {
    let (original, zero_original) = energy_or_zero(&g.x, &g.a, &g.mask)?;
    let (reconstructed, zero_reconstruction) = energy_or_zero(x_hat, a_hat_bin, &g.mask)?;
    Ok(EnergyShift {
        original,
        reconstructed,
        zero_original,
        zero_reconstruction,
        edgeless_reconstruction: a_hat_bin.iter().all(|v| *v == 0.0),
    })
}

/// `Σ γ(τ)·d` over `(τ, d)` terms.
pub fn aggregate(terms: impl IntoIterator<Item = (f64, f64)>, penalty: Penalty, sde: &VpSde) -> Result<f64> {
    let mut total = 0.0;
    for (tau, d) in terms {
        total += penalty.weight(sde, tau)? * d;
    }
    Ok(total)
}

/// One `(node, τᵢ, sample j)` reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct TermRecord {
    pub node: usize,
    pub level: usize,
    pub tau: f64,
    pub sample: usize,
    pub dissimilarity: f64,
    pub error_x: f64,
    pub error_a: f64,
    pub energy: EnergyShift,
}

/// Scores of a set of nodes with the full breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    /// Scored node ids, ascending.
    pub nodes: Vec<usize>,
    /// Score of `nodes[k]`.
    pub scores: Vec<f64>,
    /// Terms ordered by node, then level, then sample.
    pub records: Vec<TermRecord>,
}

impl ScoreReport {
    /// Node ids by descending score, ties broken by ascending id.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by(|&i, &j| match self.scores[j].partial_cmp(&self.scores[i]) {
            Some(Ordering::Equal) | None => self.nodes[i].cmp(&self.nodes[j]),
            Some(o) => o,
        });
        order.into_iter().map(|k| self.nodes[k]).collect()
    }

    /// Records whose reconstruction (or original) had all-zero features or no
    /// edges after binarization.
    pub fn flagged(&self) -> impl Iterator<Item = &TermRecord> {
        self.records
            .iter()
            .filter(|r| r.energy.zero_original || r.energy.zero_reconstruction || r.energy.edgeless_reconstruction)
    }
}

/// The ego-graph a node is scored on; truncation is seeded per node.
pub fn scoring_ego(net: &SparseNetwork, v: usize, ego: &EgoConfig, seed: u64) -> Result<DenseEgoGraph> {
    sample_ego(net, v, ego, &mut rng::stream(seed, &[EGO, v as u64]))
}

fn score_term(
    g: &DenseEgoGraph,
    node: usize,
    level: usize,
    tau: f64,
    sample: usize,
    score: &dyn ScoreFn,
    sde: &VpSde,
    cfg: &ScoringConfig,
) -> Result<TermRecord> {
    let mut rng = rng::stream(cfg.seed, &[RECON, node as u64, level as u64, sample as u64]);
    let rec = reconstruct(g, tau, score, sde, &cfg.solver, &mut rng).map_err(|e| Error::AtNode {
        node,
        tau,
        source: Box::new(e),
    })?;
    let (error_x, error_a) = reconstruction_errors(g, &rec.x, &rec.a)?;
    let energy = energy_shift(g, &rec.x, &binarize(&rec.a, cfg.binarize_threshold))?;
    let dissimilarity = match cfg.dissimilarity {
        Dissimilarity::Matrix => (1.0 - cfg.alpha) * error_a + cfg.alpha * error_x,
        Dissimilarity::Energy => energy.shift(),
    };
    Ok(TermRecord {
        node,
        level,
        tau,
        sample,
        dissimilarity,
        error_x,
        error_a,
        energy,
    })
}

/// Scores `nodes` (all nodes when `None`) of a standardized network.
///
/// Every `(node, level, sample)` triple draws from its own rng stream, so the
/// result does not depend on how the work is scheduled.
pub fn score_nodes(
    net: &SparseNetwork,
    nodes: Option<&[usize]>,
    model: &ScoreModel,
    ego: &EgoConfig,
    cfg: &ScoringConfig,
) -> Result<ScoreReport> {
    cfg.validate()?;
    if net.num_features() != model.num_features {
        return Err(Error::shape(
            format!("{} features (checkpoint)", model.num_features),
            format!("{} features (network)", net.num_features()),
        ));
    }
    let mut nodes: Vec<usize> = match nodes {
        Some(ns) => ns.to_vec(),
        None => (0..net.num_nodes()).collect(),
    };
    nodes.sort_unstable();
    nodes.dedup();
    let taus = reconstruction_levels(cfg.levels, model.sde.t_max);
    let egos = nodes
        .par_iter()
        .map(|&v| scoring_ego(net, v, ego, cfg.seed))
        .collect::<Result<Vec<_>>>()?;

    let triples: Vec<(usize, usize, usize)> = (0..nodes.len())
        .flat_map(|k| (0..cfg.levels).flat_map(move |i| (0..cfg.samples_per_level).map(move |j| (k, i, j))))
        .collect();
    let records = triples
        .par_iter()
        .map(|&(k, i, j)| score_term(&egos[k], nodes[k], i, taus[i], j, model, &model.sde, cfg))
        .collect::<Result<Vec<_>>>()?;

    let per_node = cfg.levels * cfg.samples_per_level;
    let scores = records
        .chunks(per_node)
        .map(|rs| aggregate(rs.iter().map(|r| (r.tau, r.dissimilarity)), cfg.penalty, &model.sde))
        .collect::<Result<Vec<_>>>()?;
    if let Some(k) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            location: format!("score of node {}", nodes[k]),
        });
    }
    Ok(ScoreReport { nodes, scores, records })
}

/// Scores every node.
pub fn score_all(net: &SparseNetwork, model: &ScoreModel, ego: &EgoConfig, cfg: &ScoringConfig) -> Result<ScoreReport> {
    score_nodes(net, None, model, ego, cfg)
}

/// One row of the solver comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub solver: SolverKind,
    pub tau: f64,
    pub error_x: f64,
    pub error_a: f64,
}

/// Mean `error_X(τ)` and `error_A(τ)` over `nodes` for each solver and level.
///
/// All solvers see the same corrupted graphs: the forward noise for a
/// `(node, τ)` pair comes from a stream that does not depend on the solver.
pub fn solver_error_profile(
    net: &SparseNetwork,
    nodes: &[usize],
    model: &ScoreModel,
    ego: &EgoConfig,
    kinds: &[SolverKind],
    taus: &[f64],
    base: &SolverConfig,
    seed: u64,
) -> Result<Vec<ProfileRow>> {
    if nodes.is_empty() {
        return Err(Error::contract("solver profile needs at least one node"));
    }
    let egos = nodes
        .iter()
        .map(|&v| scoring_ego(net, v, ego, seed))
        .collect::<Result<Vec<_>>>()?;
    let sde = &model.sde;
    let mut rows = Vec::with_capacity(kinds.len() * taus.len());
    for &kind in kinds {
        let solver = SolverConfig { kind, ..*base };
        solver.validate()?;
        for (i, &tau) in taus.iter().enumerate() {
            let errs = egos
                .par_iter()
                .zip(nodes)
                .map(|(g, &v)| {
                    let mut fwd = rng::stream(seed, &[PROFILE, v as u64, i as u64]);
                    let px = sde.perturb_features(&g.x, &g.mask, tau, &mut fwd)?;
                    let pa = sde.perturb_adjacency(&g.a, &g.mask, tau, &mut fwd)?;
                    let start = GraphState {
                        x: px.noisy,
                        a: pa.noisy,
                        mask: g.mask.clone(),
                    };
                    let mut rev = rng::stream(seed, &[PROFILE, v as u64, i as u64, kind as u64 + 1]);
                    let rec =
                        integrate_reverse(&start, tau, model, sde, &solver, Noise::On, &mut rev).map_err(|e| {
                            Error::AtNode {
                                node: v,
                                tau,
                                source: Box::new(e),
                            }
                        })?;
                    reconstruction_errors(g, &rec.x, &rec.a)
                })
                .collect::<Result<Vec<_>>>()?;
            let m = errs.len() as f64;
            rows.push(ProfileRow {
                solver: kind,
                tau,
                error_x: errs.iter().map(|e| e.0).sum::<f64>() / m,
                error_a: errs.iter().map(|e| e.1).sum::<f64>() / m,
            });
        }
    }
    Ok(rows)
}

/// One point of the energy histograms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub node: usize,
    pub tau: f64,
    pub sample: usize,
    pub energy_orig: f64,
    pub energy_recon: f64,
    /// `energy_orig − energy_recon`.
    pub energy_diff: f64,
}

/// Original and reconstructed normalized energies for every
/// `(node, τ, sample)` of `nodes`.
pub fn energy_histogram_data(
    net: &SparseNetwork,
    nodes: &[usize],
    model: &ScoreModel,
    ego: &EgoConfig,
    cfg: &ScoringConfig,
) -> Result<Vec<EnergyRecord>> {
    let report = score_nodes(net, Some(nodes), model, ego, cfg)?;
    Ok(report
        .records
        .iter()
        .map(|r| EnergyRecord {
            node: r.node,
            tau: r.tau,
            sample: r.sample,
            energy_orig: r.energy.original,
            energy_recon: r.energy.reconstructed,
            energy_diff: r.energy.signed(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::ZeroScore;
    use ndarray::array;

    fn k2(x: Array2<f64>) -> DenseEgoGraph {
        DenseEgoGraph::new(x, array![[0.0, 1.0], [1.0, 0.0]], 0).unwrap()
    }

    #[test]
    fn levels() {
        let l = reconstruction_levels(4, 1.0);
        let want = [0.2, 0.4, 0.6, 0.8];
        assert!(l.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(reconstruction_levels(1, 1.0), vec![0.5]);
        assert!(reconstruction_levels(9, 2.0).iter().all(|t| *t > 0.0 && *t < 2.0));
    }

    #[test]
    fn matrix_distance_examples() {
        let g = k2(array![[1.0], [0.0]]);
        assert_eq!(matrix_distance(&g, &g.x, &g.a, 0.3).unwrap(), 0.0);
        let d = matrix_distance(&g, &array![[0.0], [0.0]], &Array2::zeros((2, 2)), 0.5).unwrap();
        let want = 0.5 * (2f64.sqrt() / 4.0) + 0.5 * 0.5;
        assert!((d - want).abs() < 1e-15);
        assert!((want - 0.42678).abs() < 1e-5);
        let x_hat = array![[0.25], [2.0]];
        let only_x = matrix_distance(&g, &x_hat, &Array2::zeros((2, 2)), 1.0).unwrap();
        let (ex, _) = reconstruction_errors(&g, &x_hat, &g.a).unwrap();
        assert_eq!(only_x, ex);
        assert!(matrix_distance(&g, &array![[0.0]], &g.a, 0.5).is_err());
    }

    #[test]
    fn padding_is_ignored_by_distances() {
        let g = k2(array![[1.0, 2.0], [0.5, -1.0]]);
        let x_hat = array![[0.0, 2.0], [1.5, -1.0]];
        let a_hat = array![[0.0, 0.4], [0.4, 0.0]];
        let d = matrix_distance(&g, &x_hat, &a_hat, 0.5).unwrap();
        let p = g.pad_to(4);
        let mut px = Array2::zeros((4, 2));
        px.slice_mut(ndarray::s![..2, ..]).assign(&x_hat);
        px[[3, 0]] = 9.0;
        let mut pa = Array2::zeros((4, 4));
        pa.slice_mut(ndarray::s![..2, ..2]).assign(&a_hat);
        pa[[2, 3]] = 5.0;
        assert_eq!(matrix_distance(&p, &px, &pa, 0.5).unwrap(), d);
    }

    #[test]
    fn energy_shift_examples() {
        let g = k2(array![[1.0], [-1.0]]);
        let same = energy_shift(&g, &g.x, &g.a).unwrap();
        assert_eq!(same.shift(), 0.0);
        let dropped = energy_shift(&g, &g.x, &Array2::zeros((2, 2))).unwrap();
        assert!((dropped.shift() - 2.0).abs() < 1e-12);
        assert!(dropped.edgeless_reconstruction);
        let zero = energy_shift(&g, &Array2::zeros((2, 1)), &g.a).unwrap();
        assert!(zero.zero_reconstruction);
        assert_eq!(zero.reconstructed, 0.0);
    }

    #[test]
    fn aggregation() {
        let sde = VpSde::default();
        let taus = reconstruction_levels(4, 1.0);
        let terms: Vec<(f64, f64)> = taus.iter().flat_map(|t| [(*t, 1.0); 3]).collect();
        assert_eq!(aggregate(terms.clone(), Penalty::None, &sde).unwrap(), 12.0);
        let want: f64 = taus.iter().map(|t| 3.0 * sde.snr(*t).unwrap()).sum();
        assert!((aggregate(terms.clone(), Penalty::Snr, &sde).unwrap() - want).abs() < 1e-12);
        assert!(want > 12.0);
        let sq: f64 = taus.iter().map(|t| 3.0 * sde.snr(*t).unwrap().sqrt()).sum();
        assert!((aggregate(terms, Penalty::SqrtSnr, &sde).unwrap() - sq).abs() < 1e-12);
        assert_eq!(aggregate([(0.5, 0.7)], Penalty::None, &sde).unwrap(), 0.7);
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        let report = ScoreReport {
            nodes: vec![0, 1, 2, 3],
            scores: vec![0.5, 2.0, 0.5, 3.0],
            records: vec![],
        };
        assert_eq!(report.ranking(), vec![3, 1, 0, 2]);
    }

    #[test]
    fn reconstruction_is_seeded_and_masked() {
        let sde = VpSde::default();
        let g = k2(array![[1.0, 0.0], [0.0, 1.0]]).pad_to(3);
        let cfg = SolverConfig::default();
        let a = reconstruct(&g, 0.4, &ZeroScore, &sde, &cfg, &mut rng::stream(1, &[])).unwrap();
        let b = reconstruct(&g, 0.4, &ZeroScore, &sde, &cfg, &mut rng::stream(1, &[])).unwrap();
        assert_eq!(a, b);
        assert!(a.x.row(2).iter().chain(a.a.row(2).iter()).all(|v| *v == 0.0));
    }
}
