//! Node anomaly detection in attributed networks by reconstructing ego-graphs
//! with a score-based diffusion model.
//!
//! Every node of a network induces a small ego-graph. A pair of score
//! networks learns the distribution of these ego-graphs under a
//! variance-preserving diffusion. To score a node, its ego-graph is noised to
//! several intermediate times, denoised back by integrating the reverse-time
//! system, and compared with the original. Ego-graphs the model cannot
//! reconstruct well rank as anomalous.
//!
//! Module map:
//!
//! | module | role |
//! |--------|------|
//! | [`graph`] | network and ego-graph types, normalized Laplacian, Dirichlet energy |
//! | [`ego`] | k-hop extraction, hub truncation, padded batches |
//! | [`sde`] | VP schedule, transition moments, perturbation, DSM targets |
//! | [`model`] | GCN / GMH score networks with exact gradients, checkpoints |
//! | [`train`] | feature scaling, DSM steps, Adam, hyperparameter trials |
//! | [`solver`] | reverse-time integrators and the Langevin corrector |
//! | [`scorer`] | reconstruction operator, dissimilarities, node scores |
//! | [`metrics`] | ROC-AUC, average precision, Recall@k |
//! | [`io`] | graph bundles, synthetic networks, CSV reports |
//!
//! The `book/` directory next to the workspace walks through each of these
//! with runnable snippets.

// `!(x > 0.0)` is the idiom here for rejecting NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod autodiff;
pub mod ego;
pub mod error;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scorer;
pub mod sde;
pub mod solver;
pub mod train;

pub use error::{Error, Result};

// Compile and run the book's code blocks as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/diffusion.md")]
    mod diffusion {}
    #[doc = include_str!("../../../book/src/score-networks.md")]
    mod score_networks {}
    #[doc = include_str!("../../../book/src/reconstruction.md")]
    mod reconstruction {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
}
