//! Prediction-preserving adversarial attacks on post-hoc GNN explanations.
//!
//! The crate bundles everything needed to study how fragile edge-based
//! explanations of a node classifier are under small structure perturbations
//! that leave the classifier's predictions intact:
//!
//! - [`graph`]: dense attributed graphs, adjacency normalization, edge-flip
//!   perturbations (relaxed and discrete), top-k mask binarization.
//! - [`datagen`]: synthetic motif benchmarks with ground-truth explanation
//!   masks (house / circle shapes planted in noisy subgraphs).
//! - [`gcn`]: the victim two-layer GCN, its training loop, and exact
//!   reverse-mode gradients with respect to (relaxed) adjacency entries.
//! - [`explainers`]: the parameterized edge-scoring explainer that the attack
//!   targets, plus gradient, perturbation-mask, and random transfer targets.
//! - [`attack`]: the relaxed attack objective, projected gradient ascent with
//!   budget projection by bisection, Bernoulli discretization, and the two
//!   random baselines.
//! - [`metrics`]: explanation accuracy (Jaccard), cosine stability, and
//!   prediction-change metrics.
//! - [`harness`]: seeded end-to-end experiments, transfer studies, sensitivity
//!   sweeps, and group analyses with CSV/JSON persistence.
//!
//! See the `examples/` directory for one runnable entry point per capability;
//! the `gxattack` binary exposes the same workflows as subcommands.

pub mod attack;
pub mod datagen;
pub mod explainers;
pub mod gcn;
pub mod graph;
pub mod harness;
pub mod metrics;

mod error;
mod util;

pub use error::{GxError, Result};
