//! Dense attributed graphs and the structure-perturbation primitives shared by
//! the classifier, the explainers, and the attack.
//!
//! Graphs are undirected: adjacency matrices are symmetric with a zero
//! diagonal, and every perturbation keeps that shape by construction (callers
//! work on the upper triangle and mirror).

use std::collections::{BTreeSet, VecDeque};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{GxError, Result};

/// An undirected attributed graph: binary adjacency, real node features,
/// integer node labels in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    pub n: usize,
    /// Binary (0.0/1.0), symmetric, zero diagonal; stored dense as `f64` so it
    /// can be fed to matrix products directly.
    pub adjacency: Array2<f64>,
    /// `n x d` feature matrix.
    pub features: Array2<f64>,
    /// Node labels, each `< num_classes`.
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl AttributedGraph {
    pub fn new(
        adjacency: Array2<f64>,
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(GxError::ShapeMismatch {
                expected: format!("{n}x{n} adjacency"),
                got: format!("{}x{}", adjacency.nrows(), adjacency.ncols()),
            });
        }
        if features.nrows() != n || labels.len() != n {
            return Err(GxError::ShapeMismatch {
                expected: format!("{n} feature rows and labels"),
                got: format!("{} rows, {} labels", features.nrows(), labels.len()),
            });
        }
        check_symmetric_zero_diag(&adjacency)?;
        for (v, &label) in labels.iter().enumerate() {
            if label >= num_classes {
                return Err(GxError::InvalidConfig(format!(
                    "label {label} of node {v} exceeds class count {num_classes}"
                )));
            }
        }
        Ok(AttributedGraph {
            n,
            adjacency,
            features,
            labels,
            num_classes,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Present edges as sorted upper-triangle pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        upper_triangle_edges(&self.adjacency)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency.row(v).iter().filter(|&&x| x != 0.0).count()
    }

    /// Replaces the adjacency, revalidating shape invariants.
    pub fn with_adjacency(&self, adjacency: Array2<f64>) -> Result<Self> {
        AttributedGraph::new(
            adjacency,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GraphJson {
            n: self.n,
            d: self.feature_dim(),
            c: self.num_classes,
            edges: self.edges(),
            features: crate::util::to_rows(&self.features),
            labels: self.labels.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphJson = serde_json::from_str(text)?;
        let mut adjacency = Array2::zeros((doc.n, doc.n));
        for &(i, j) in &doc.edges {
            if i >= doc.n || j >= doc.n || i >= j {
                return Err(GxError::InvalidConfig(format!(
                    "edge ({i},{j}) invalid for n={}",
                    doc.n
                )));
            }
            adjacency[[i, j]] = 1.0;
            adjacency[[j, i]] = 1.0;
        }
        let features = crate::util::from_rows(&doc.features).ok_or(GxError::ShapeMismatch {
            expected: format!("{}x{} features", doc.n, doc.d),
            got: "ragged feature rows".into(),
        })?;
        if features.ncols() != doc.d {
            return Err(GxError::ShapeMismatch {
                expected: format!("feature dim {}", doc.d),
                got: format!("{}", features.ncols()),
            });
        }
        AttributedGraph::new(adjacency, features, doc.labels, doc.c)
    }
}

/// On-disk graph document: `n`, `d`, `C`, sorted `i<j` edge list, row-major
/// features, labels. Round-trips bit-exactly through `serde_json`.
#[derive(Debug, Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    d: usize,
    #[serde(rename = "C")]
    c: usize,
    edges: Vec<(usize, usize)>,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

/// Real-valued per-edge scores emitted by an explainer.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeImportanceMatrix {
    pub scores: Array2<f64>,
    pub symmetric: bool,
}

impl EdgeImportanceMatrix {
    pub fn new(scores: Array2<f64>, symmetric: bool) -> Result<Self> {
        if scores.iter().any(|x| !x.is_finite()) {
            return Err(GxError::NonFiniteLoss {
                context: "edge importance matrix".into(),
                value: f64::NAN,
            });
        }
        if symmetric {
            check_symmetric(&scores)?;
        }
        Ok(EdgeImportanceMatrix { scores, symmetric })
    }

    pub fn zeros(n: usize) -> Self {
        EdgeImportanceMatrix {
            scores: Array2::zeros((n, n)),
            symmetric: true,
        }
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }
}

/// Relaxed edge-flip probabilities: symmetric, zero diagonal, entries in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDistribution {
    pub probs: Array2<f64>,
}

impl PerturbationDistribution {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        check_symmetric_zero_diag(&probs)?;
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(GxError::InvalidConfig(
                "perturbation probabilities must lie in [0,1]".into(),
            ));
        }
        Ok(PerturbationDistribution { probs })
    }

    pub fn zeros(n: usize) -> Self {
        PerturbationDistribution {
            probs: Array2::zeros((n, n)),
        }
    }

    /// Sum of upper-triangle entries: the expected number of undirected flips.
    pub fn expected_flips(&self) -> f64 {
        let n = self.probs.nrows();
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                total += self.probs[[i, j]];
            }
        }
        total
    }
}

fn check_symmetric(m: &Array2<f64>) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if m[[i, j]] != m[[j, i]] {
                return Err(GxError::Asymmetric {
                    i,
                    j,
                    a: m[[i, j]],
                    b: m[[j, i]],
                });
            }
        }
    }
    Ok(())
}

fn check_symmetric_zero_diag(m: &Array2<f64>) -> Result<()> {
    check_symmetric(m)?;
    for i in 0..m.nrows() {
        if m[[i, i]] != 0.0 {
            return Err(GxError::InvalidConfig(format!(
                "diagonal entry ({i},{i}) must be zero, got {}",
                m[[i, i]]
            )));
        }
    }
    Ok(())
}

/// Upper-triangle nonzero entries of a symmetric matrix, sorted.
pub fn upper_triangle_edges(m: &Array2<f64>) -> Vec<(usize, usize)> {
    let n = m.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if m[[i, j]] != 0.0 {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Symmetric normalization `D^{-1/2} (A + I) D^{-1/2}` with degrees
/// `d_i = 1 + sum_j A_ij`.
///
/// Accepts relaxed adjacencies (entries in [0,1]); fractional entries
/// contribute fractionally to the degrees, which is the continuous extension
/// used throughout the attack.
pub fn normalize_adjacency(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut dinv = vec![0.0; n];
    for i in 0..n {
        let deg = 1.0 + a.row(i).sum();
        dinv[i] = 1.0 / deg.sqrt();
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let s = if i == j { a[[i, j]] + 1.0 } else { a[[i, j]] };
            if s != 0.0 {
                out[[i, j]] = s * dinv[i] * dinv[j];
            }
        }
    }
    out
}

/// Relaxed flip: `A + P*(1 - 2A)` entrywise, so mass moves away from the
/// current edge state in both directions.
pub fn apply_perturbation_relaxed(a: &Array2<f64>, p: &PerturbationDistribution) -> Result<Array2<f64>> {
    if a.dim() != p.probs.dim() {
        return Err(GxError::ShapeMismatch {
            expected: format!("{:?}", a.dim()),
            got: format!("{:?}", p.probs.dim()),
        });
    }
    let mut out = a.clone();
    ndarray::Zip::from(&mut out).and(&p.probs).for_each(|a, &p| {
        *a += p * (1.0 - 2.0 * *a);
    });
    Ok(out)
}

/// Discrete flip: edges toggled exactly where `p = 1`.
pub fn apply_perturbation_discrete(a: &Array2<f64>, p: &Array2<f64>) -> Result<Array2<f64>> {
    if a.dim() != p.dim() {
        return Err(GxError::ShapeMismatch {
            expected: format!("{:?}", a.dim()),
            got: format!("{:?}", p.dim()),
        });
    }
    check_symmetric_zero_diag(p)?;
    let mut out = a.clone();
    ndarray::Zip::from(&mut out).and(p).for_each(|a, &p| {
        *a += p * (1.0 - 2.0 * *a);
    });
    Ok(out)
}

/// Marks the `ceil(k_fraction * |candidates|)` highest-scoring candidate edges.
///
/// Candidates are the edges present in the graph under evaluation; ties break
/// by lexicographic `(i, j)` order so the mask is deterministic. An empty
/// candidate set yields the all-zero mask.
pub fn topk_binarize(
    m: &EdgeImportanceMatrix,
    k_fraction: f64,
    candidates: &[(usize, usize)],
) -> Array2<f64> {
    let n = m.n();
    let mut out = Array2::zeros((n, n));
    if candidates.is_empty() || k_fraction <= 0.0 {
        return out;
    }
    let k = ((k_fraction * candidates.len() as f64).ceil() as usize).min(candidates.len());
    let mut ranked: Vec<(usize, usize)> = candidates.to_vec();
    ranked.sort_by(|&(ai, aj), &(bi, bj)| {
        m.scores[[bi, bj]]
            .partial_cmp(&m.scores[[ai, aj]])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((ai, aj).cmp(&(bi, bj)))
    });
    for &(i, j) in ranked.iter().take(k) {
        out[[i, j]] = 1.0;
        out[[j, i]] = 1.0;
    }
    out
}

/// Closed BFS neighborhood of radius `hops` around `v`, plus every edge among
/// those nodes. Nodes and edges come back sorted.
pub fn computation_subgraph(
    graph: &AttributedGraph,
    v: usize,
    hops: usize,
) -> Result<(Vec<usize>, Vec<(usize, usize)>)> {
    if v >= graph.n {
        return Err(GxError::NodeOutOfRange { node: v, n: graph.n });
    }
    let mut seen = BTreeSet::new();
    seen.insert(v);
    let mut queue = VecDeque::new();
    queue.push_back((v, 0usize));
    while let Some((u, depth)) = queue.pop_front() {
        if depth == hops {
            continue;
        }
        for w in 0..graph.n {
            if graph.adjacency[[u, w]] != 0.0 && seen.insert(w) {
                queue.push_back((w, depth + 1));
            }
        }
    }
    let nodes: Vec<usize> = seen.into_iter().collect();
    let mut edges = Vec::new();
    for (a, &i) in nodes.iter().enumerate() {
        for &j in nodes.iter().skip(a + 1) {
            if graph.adjacency[[i, j]] != 0.0 {
                edges.push((i, j));
            }
        }
    }
    Ok((nodes, edges))
}
