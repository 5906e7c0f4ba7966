//! The victim classifier: a two-layer GCN with a softmax head, trained
//! full-batch with Adam, plus exact reverse-mode gradients with respect to the
//! (possibly relaxed) adjacency.
//!
//! The adjacency gradient treats an undirected pair as one variable: entry
//! `(i, j)` of the returned matrix is the derivative of the loss when both
//! mirrored entries move together, which is the quantity the attack ascends
//! on. Finite-difference checks therefore also probe symmetric pairs.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GxError, Result};
use crate::graph::{normalize_adjacency, AttributedGraph};
use crate::util::{from_rows, to_rows, Adam};

/// Weights of the two propagation layers.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl GcnParams {
    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.ncols()
    }

    /// Glorot-uniform initialization, deterministic in the seed.
    pub fn init(d: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Array2::from_shape_fn((fan_in, fan_out), |_| rng.random::<f64>() * 2.0 * bound - bound)
        };
        GcnParams {
            w1: glorot(d, hidden),
            w2: glorot(hidden, classes),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GcnCheckpoint {
            w1: to_rows(&self.w1),
            w2: to_rows(&self.w2),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GcnCheckpoint = serde_json::from_str(text)?;
        let w1 = from_rows(&doc.w1).ok_or_else(|| GxError::InvalidConfig("ragged W1".into()))?;
        let w2 = from_rows(&doc.w2).ok_or_else(|| GxError::InvalidConfig("ragged W2".into()))?;
        if w1.ncols() != w2.nrows() {
            return Err(GxError::ShapeMismatch {
                expected: format!("W2 rows = {}", w1.ncols()),
                got: format!("{}", w2.nrows()),
            });
        }
        Ok(GcnParams { w1, w2 })
    }
}

/// Serialization order is fixed: W1 then W2.
#[derive(Serialize, Deserialize)]
struct GcnCheckpoint {
    w1: Vec<Vec<f64>>,
    w2: Vec<Vec<f64>>,
}

/// Victim training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            weight_decay: 1e-5,
            epochs: 300,
            hidden: 32,
            seed: 0,
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let total = row.sum();
        row.mapv_inplace(|e| e / total);
    }
    out
}

/// Full forward pass on an already-normalized adjacency: `softmax(At relu(At X W1) W2)`.
pub fn forward(params: &GcnParams, a_tilde: &Array2<f64>, x: &Array2<f64>) -> Result<Array2<f64>> {
    if a_tilde.ncols() != x.nrows() || x.ncols() != params.w1.nrows() {
        return Err(GxError::ShapeMismatch {
            expected: format!("A {0}x{0}, X {0}x{1}", a_tilde.nrows(), params.w1.nrows()),
            got: format!("A {:?}, X {:?}", a_tilde.dim(), x.dim()),
        });
    }
    let h1 = (a_tilde.dot(x).dot(&params.w1)).mapv(|u| u.max(0.0));
    let z = a_tilde.dot(&h1).dot(&params.w2);
    Ok(softmax_rows(&z))
}

/// Forward from a raw (possibly relaxed) adjacency; normalization included.
pub fn forward_on_adjacency(
    params: &GcnParams,
    a: &Array2<f64>,
    x: &Array2<f64>,
) -> Result<Array2<f64>> {
    forward(params, &normalize_adjacency(a), x)
}

/// Cached intermediates of one forward pass from a raw adjacency.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub a_tilde: Array2<f64>,
    /// Inverse square-root degrees of `a + I`.
    pub dinv: Array1<f64>,
    pub u1: Array2<f64>,
    pub h1: Array2<f64>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
}

pub fn forward_trace(params: &GcnParams, a: &Array2<f64>, x: &Array2<f64>) -> ForwardTrace {
    let n = a.nrows();
    let mut dinv = Array1::zeros(n);
    for i in 0..n {
        dinv[i] = 1.0 / (1.0 + a.row(i).sum()).sqrt();
    }
    let mut a_tilde = a.clone();
    for i in 0..n {
        a_tilde[[i, i]] += 1.0;
    }
    for i in 0..n {
        for j in 0..n {
            a_tilde[[i, j]] *= dinv[i] * dinv[j];
        }
    }
    let u1 = a_tilde.dot(x).dot(&params.w1);
    let h1 = u1.mapv(|u| u.max(0.0));
    let logits = a_tilde.dot(&h1).dot(&params.w2);
    let probs = softmax_rows(&logits);
    ForwardTrace {
        a_tilde,
        dinv,
        u1,
        h1,
        logits,
        probs,
    }
}

/// Hidden post-ReLU embeddings `relu(At X W1)` on a raw adjacency; the node
/// representations the parameterized explainer scores edges with.
pub fn hidden_embeddings(params: &GcnParams, a: &Array2<f64>, x: &Array2<f64>) -> Array2<f64> {
    forward_trace(params, a, x).h1
}

/// Backward through the symmetric normalization.
///
/// `s` must be the pre-normalization matrix plus identity (`a + I`), `dinv`
/// its inverse square-root row degrees, and `g_atilde` the loss gradient with
/// respect to the normalized matrix. Returns the gradient with respect to
/// each raw entry treated independently, including the degree dependence.
pub(crate) fn normalize_backward(
    s: &Array2<f64>,
    dinv: &Array1<f64>,
    g_atilde: &Array2<f64>,
) -> Array2<f64> {
    let n = s.nrows();
    // r_p = dinv_p^3 * sum_j (G_pj + G_jp) S_pj dinv_j
    let mut r = Array1::zeros(n);
    for p in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            let spj = s[[p, j]];
            if spj != 0.0 {
                acc += (g_atilde[[p, j]] + g_atilde[[j, p]]) * spj * dinv[j];
            }
        }
        r[p] = acc * dinv[p].powi(3);
    }
    let mut out = Array2::zeros((n, n));
    for p in 0..n {
        for q in 0..n {
            out[[p, q]] = g_atilde[[p, q]] * dinv[p] * dinv[q] - 0.5 * r[p];
        }
    }
    out
}

/// Reverse-mode derivative of the full GCN with respect to the raw relaxed
/// adjacency, given the upstream gradient on the logits.
///
/// Entry `(i, j)` (for `i != j`) is the derivative with respect to the
/// undirected pair, i.e. the sum of both mirrored independent-entry
/// derivatives; the diagonal is zeroed (self-loops are frozen).
pub fn grad_wrt_adjacency(
    params: &GcnParams,
    a: &Array2<f64>,
    x: &Array2<f64>,
    upstream_logits: &Array2<f64>,
) -> Array2<f64> {
    let trace = forward_trace(params, a, x);
    let g_atilde = adjacency_cotangent(params, x, &trace, upstream_logits, None);
    finish_adjacency_grad(a, &trace, &g_atilde)
}

/// Same as [`grad_wrt_adjacency`] but with an extra gradient flowing into the
/// hidden embeddings (used when an explainer consumes them downstream).
pub fn grad_wrt_adjacency_with_hidden(
    params: &GcnParams,
    a: &Array2<f64>,
    x: &Array2<f64>,
    trace: &ForwardTrace,
    upstream_logits: &Array2<f64>,
    upstream_hidden: Option<&Array2<f64>>,
) -> Array2<f64> {
    let g_atilde = adjacency_cotangent(params, x, trace, upstream_logits, upstream_hidden);
    finish_adjacency_grad(a, trace, &g_atilde)
}

/// Converts an upstream gradient on softmax outputs into one on logits via the
/// softmax Jacobian, row by row.
pub fn logit_grad_from_prob_grad(probs: &Array2<f64>, g_probs: &Array2<f64>) -> Array2<f64> {
    let mut g_logits = Array2::zeros(probs.dim());
    for i in 0..probs.nrows() {
        let y = probs.row(i);
        let g = g_probs.row(i);
        let dot: f64 = y.iter().zip(g.iter()).map(|(&y, &g)| y * g).sum();
        for k in 0..probs.ncols() {
            g_logits[[i, k]] = y[k] * (g[k] - dot);
        }
    }
    g_logits
}

fn adjacency_cotangent(
    params: &GcnParams,
    x: &Array2<f64>,
    trace: &ForwardTrace,
    upstream_logits: &Array2<f64>,
    upstream_hidden: Option<&Array2<f64>>,
) -> Array2<f64> {
    // logits = At H1 W2, H1 = relu(At X W1)
    let g_m2 = upstream_logits.dot(&params.w2.t());
    let mut g_atilde = g_m2.dot(&trace.h1.t());
    let mut g_h1 = trace.a_tilde.t().dot(&g_m2);
    if let Some(gh) = upstream_hidden {
        g_h1 += gh;
    }
    let relu_mask = trace.u1.mapv(|u| if u > 0.0 { 1.0 } else { 0.0 });
    let g_u1 = &g_h1 * &relu_mask;
    let g_m1 = g_u1.dot(&params.w1.t());
    g_atilde += &g_m1.dot(&x.t());
    g_atilde
}

fn finish_adjacency_grad(
    a: &Array2<f64>,
    trace: &ForwardTrace,
    g_atilde: &Array2<f64>,
) -> Array2<f64> {
    let n = a.nrows();
    let mut s = a.clone();
    for i in 0..n {
        s[[i, i]] += 1.0;
    }
    let g_ind = normalize_backward(&s, &trace.dinv, g_atilde);
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[[i, j]] = g_ind[[i, j]] + g_ind[[j, i]];
            }
        }
    }
    out
}

/// Mean cross-entropy of predictions against integer labels, with the
/// gradient on logits.
fn ce_loss_and_logit_grad(probs: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = probs.nrows() as f64;
    let mut loss = 0.0;
    let mut g = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        loss -= probs[[i, y]].max(1e-12).ln();
        g[[i, y]] -= 1.0;
    }
    g.mapv_inplace(|v| v / n);
    (loss / n, g)
}

/// Full-batch Adam training; deterministic in `cfg.seed`. Zero epochs return
/// the initialization unchanged.
pub fn train(graph: &AttributedGraph, cfg: &TrainConfig) -> Result<GcnParams> {
    train_with_trace(graph, cfg).map(|(p, _)| p)
}

/// Like [`train`] but also returns the per-epoch loss trace.
pub fn train_with_trace(
    graph: &AttributedGraph,
    cfg: &TrainConfig,
) -> Result<(GcnParams, Vec<f64>)> {
    if cfg.learning_rate <= 0.0 || cfg.hidden == 0 {
        return Err(GxError::InvalidConfig(
            "learning rate and hidden dimension must be positive".into(),
        ));
    }
    let mut params = GcnParams::init(graph.feature_dim(), cfg.hidden, graph.num_classes, cfg.seed);
    let a_tilde = normalize_adjacency(&graph.adjacency);
    let x = &graph.features;
    let mut opt = Adam::new(
        cfg.learning_rate,
        cfg.weight_decay,
        &[params.w1.dim(), params.w2.dim()],
    );
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let m1 = a_tilde.dot(x);
        let u1 = m1.dot(&params.w1);
        let h1 = u1.mapv(|u| u.max(0.0));
        let m2 = a_tilde.dot(&h1);
        let z = m2.dot(&params.w2);
        let probs = softmax_rows(&z);
        let (loss, g_z) = ce_loss_and_logit_grad(&probs, &graph.labels);
        if !loss.is_finite() {
            return Err(GxError::NonFiniteLoss {
                context: format!("gcn training epoch {epoch}"),
                value: loss,
            });
        }
        losses.push(loss);
        let g_w2 = m2.t().dot(&g_z);
        let g_m2 = g_z.dot(&params.w2.t());
        let g_h1 = a_tilde.t().dot(&g_m2);
        let relu_mask = u1.mapv(|u| if u > 0.0 { 1.0 } else { 0.0 });
        let g_u1 = &g_h1 * &relu_mask;
        let g_w1 = m1.t().dot(&g_u1);
        opt.step(&mut [&mut params.w1, &mut params.w2], &[g_w1, g_w2]);
    }
    Ok((params, losses))
}

/// Argmax labels and their probabilities; ties resolve to the lowest class.
pub fn predict(params: &GcnParams, graph: &AttributedGraph) -> Result<(Vec<usize>, Vec<f64>)> {
    let probs = forward_on_adjacency(params, &graph.adjacency, &graph.features)?;
    Ok(predict_from_probs(&probs))
}

pub fn predict_from_probs(probs: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let mut labels = Vec::with_capacity(probs.nrows());
    let mut confidence = Vec::with_capacity(probs.nrows());
    for row in probs.rows() {
        let mut best = 0;
        for (k, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = k;
            }
        }
        labels.push(best);
        confidence.push(row[best]);
    }
    (labels, confidence)
}

/// Fraction of nodes whose prediction matches the dataset label.
pub fn accuracy(params: &GcnParams, graph: &AttributedGraph) -> Result<f64> {
    let (labels, _) = predict(params, graph)?;
    let hits = labels
        .iter()
        .zip(&graph.labels)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / graph.n.max(1) as f64)
}

/// Exact local view of one node's receptive field.
///
/// Holds the induced subgraph on the closed 2-hop neighborhood together with
/// each member's count of unmasked edges leaving the set, so that masked
/// forward passes and adjacency gradients for the center row match the
/// full-graph computation exactly while staying O(|S|^2).
#[derive(Debug, Clone)]
pub struct SubgraphView {
    pub nodes: Vec<usize>,
    pub center: usize,
    /// Index of the center inside `nodes`.
    pub center_local: usize,
    /// Induced binary adjacency among `nodes`.
    pub a_local: Array2<f64>,
    /// Per-member count of edges to nodes outside the view (never masked).
    pub ext_degree: Array1<f64>,
    pub x_local: Array2<f64>,
    /// Present edges among `nodes`, in local indices, `i < j`.
    pub local_edges: Vec<(usize, usize)>,
}

impl SubgraphView {
    pub fn build(graph: &AttributedGraph, v: usize, hops: usize) -> Result<Self> {
        let (nodes, _) = crate::graph::computation_subgraph(graph, v, hops)?;
        let s = nodes.len();
        let mut a_local = Array2::zeros((s, s));
        let mut ext_degree = Array1::zeros(s);
        for (ai, &i) in nodes.iter().enumerate() {
            let mut inside = 0.0;
            for (aj, &j) in nodes.iter().enumerate() {
                if graph.adjacency[[i, j]] != 0.0 {
                    a_local[[ai, aj]] = 1.0;
                    inside += 1.0;
                }
            }
            ext_degree[ai] = graph.adjacency.row(i).sum() - inside;
        }
        let mut x_local = Array2::zeros((s, graph.feature_dim()));
        for (ai, &i) in nodes.iter().enumerate() {
            x_local.row_mut(ai).assign(&graph.features.row(i));
        }
        let mut local_edges = Vec::new();
        for i in 0..s {
            for j in (i + 1)..s {
                if a_local[[i, j]] != 0.0 {
                    local_edges.push((i, j));
                }
            }
        }
        let center_local = nodes.iter().position(|&u| u == v).expect("center in view");
        Ok(SubgraphView {
            nodes,
            center: v,
            center_local,
            a_local,
            ext_degree,
            x_local,
            local_edges,
        })
    }

    /// Candidate edges in global indices.
    pub fn global_edges(&self) -> Vec<(usize, usize)> {
        self.local_edges
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (self.nodes[i], self.nodes[j]);
                if a < b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect()
    }

    fn masked_trace(&self, params: &GcnParams, edge_weights: &[f64]) -> MaskedTrace {
        let s = self.nodes.len();
        let mut a_masked = self.a_local.clone();
        for (&(i, j), &w) in self.local_edges.iter().zip(edge_weights) {
            a_masked[[i, j]] = w;
            a_masked[[j, i]] = w;
        }
        let mut dinv = Array1::zeros(s);
        for i in 0..s {
            let d = 1.0 + a_masked.row(i).sum() + self.ext_degree[i];
            dinv[i] = 1.0 / d.sqrt();
        }
        let mut a_tilde = a_masked.clone();
        for i in 0..s {
            a_tilde[[i, i]] += 1.0;
        }
        for i in 0..s {
            for j in 0..s {
                a_tilde[[i, j]] *= dinv[i] * dinv[j];
            }
        }
        let u1 = a_tilde.dot(&self.x_local).dot(&params.w1);
        let h1 = u1.mapv(|u| u.max(0.0));
        let logits = a_tilde.dot(&h1).dot(&params.w2);
        let probs = softmax_rows(&logits);
        MaskedTrace {
            a_masked,
            dinv,
            a_tilde,
            u1,
            h1,
            probs,
        }
    }

    /// Probability row of the center under per-candidate-edge weights
    /// (in `local_edges` order; weight 1 reproduces the unmasked graph).
    pub fn masked_center_probs(&self, params: &GcnParams, edge_weights: &[f64]) -> Array1<f64> {
        self.masked_trace(params, edge_weights)
            .probs
            .row(self.center_local)
            .to_owned()
    }

    /// Center probability row plus the loss gradient with respect to each
    /// candidate-edge weight, given the upstream gradient on the center's
    /// logits. Exact for the center row despite the truncated view.
    pub fn masked_center_grad(
        &self,
        params: &GcnParams,
        edge_weights: &[f64],
        upstream_center_logits: &Array1<f64>,
    ) -> (Array1<f64>, Vec<f64>) {
        let s = self.nodes.len();
        let trace = self.masked_trace(params, edge_weights);
        let mut g_z = Array2::zeros((s, params.num_classes()));
        g_z.row_mut(self.center_local).assign(upstream_center_logits);

        let g_m2 = g_z.dot(&params.w2.t());
        let mut g_atilde = g_m2.dot(&trace.h1.t());
        let g_h1 = trace.a_tilde.t().dot(&g_m2);
        let relu_mask = trace.u1.mapv(|u| if u > 0.0 { 1.0 } else { 0.0 });
        let g_u1 = &g_h1 * &relu_mask;
        let g_m1 = g_u1.dot(&params.w1.t());
        g_atilde += &g_m1.dot(&self.x_local.t());

        let mut s_masked = trace.a_masked.clone();
        for i in 0..s {
            s_masked[[i, i]] += 1.0;
        }
        let g_ind = normalize_backward(&s_masked, &trace.dinv, &g_atilde);
        let grads = self
            .local_edges
            .iter()
            .map(|&(i, j)| g_ind[[i, j]] + g_ind[[j, i]])
            .collect();
        (trace.probs.row(self.center_local).to_owned(), grads)
    }
}

struct MaskedTrace {
    a_masked: Array2<f64>,
    dinv: Array1<f64>,
    a_tilde: Array2<f64>,
    u1: Array2<f64>,
    h1: Array2<f64>,
    probs: Array2<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_graph(n: usize, d: usize, p: f64, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(p) {
                    a[[i, j]] = 1.0;
                    a[[j, i]] = 1.0;
                }
            }
        }
        let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0);
        (a, x)
    }

    fn random_params(d: usize, h: usize, c: usize, seed: u64) -> GcnParams {
        GcnParams::init(d, h, c, seed)
    }

    #[test]
    fn zero_weights_give_uniform_rows() {
        let (a, x) = random_graph(5, 3, 0.5, 1);
        let params = GcnParams {
            w1: Array2::zeros((3, 4)),
            w2: Array2::zeros((4, 2)),
        };
        let y = forward_on_adjacency(&params, &a, &x).unwrap();
        for row in y.rows() {
            for &p in row.iter() {
                assert!((p - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_node_reduces_to_mlp() {
        let a = array![[0.0]];
        let x = array![[0.7, -0.2]];
        let params = random_params(2, 3, 2, 5);
        let y = forward_on_adjacency(&params, &a, &x).unwrap();
        // Atilde = [[1]] so the graph structure drops out entirely.
        let h = x.dot(&params.w1).mapv(|u| u.max(0.0));
        let z = h.dot(&params.w2);
        let expect = softmax_rows(&z);
        for (a, b) in y.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        // Independent scalar-loop evaluation of softmax(At relu(At X W1) W2).
        let (a, x) = random_graph(5, 3, 0.6, 42);
        let params = random_params(3, 4, 2, 43);
        let n = 5;
        let mut deg = vec![0.0; n];
        for i in 0..n {
            deg[i] = 1.0 + (0..n).map(|j| a[[i, j]]).sum::<f64>();
        }
        let mut at = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let s = a[[i, j]] + if i == j { 1.0 } else { 0.0 };
                at[i][j] = s / (deg[i] * deg[j]).sqrt();
            }
        }
        let h = params.w1.ncols();
        let mut h1 = vec![vec![0.0; h]; n];
        for i in 0..n {
            for k in 0..h {
                let mut acc = 0.0;
                for j in 0..n {
                    for f in 0..3 {
                        acc += at[i][j] * x[[j, f]] * params.w1[[f, k]];
                    }
                }
                h1[i][k] = acc.max(0.0);
            }
        }
        let c = 2;
        let mut z = vec![vec![0.0; c]; n];
        for i in 0..n {
            for k in 0..c {
                let mut acc = 0.0;
                for j in 0..n {
                    for f in 0..h {
                        acc += at[i][j] * h1[j][f] * params.w2[[f, k]];
                    }
                }
                z[i][k] = acc;
            }
        }
        let y = forward_on_adjacency(&params, &a, &x).unwrap();
        for i in 0..n {
            let m = z[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = z[i].iter().map(|&v| (v - m).exp()).collect();
            let tot: f64 = exps.iter().sum();
            for k in 0..c {
                assert!((y[[i, k]] - exps[k] / tot).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = array![[1e4, -1e4, 3.0], [0.0, 0.0, 0.0], [-700.0, 700.0, 0.1]];
        let y = softmax_rows(&logits);
        for row in y.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    /// Central finite differences over symmetric pairs, matching the pair
    /// convention of `grad_wrt_adjacency`.
    fn fd_pair_grad(
        params: &GcnParams,
        a: &Array2<f64>,
        x: &Array2<f64>,
        upstream: &Array2<f64>,
        i: usize,
        j: usize,
        h: f64,
    ) -> f64 {
        let eval = |a: &Array2<f64>| -> f64 {
            let trace = forward_trace(params, a, x);
            (&trace.logits * upstream).sum()
        };
        let mut ap = a.clone();
        ap[[i, j]] += h;
        ap[[j, i]] += h;
        let mut am = a.clone();
        am[[i, j]] -= h;
        am[[j, i]] -= h;
        (eval(&ap) - eval(&am)) / (2.0 * h)
    }

    #[test]
    fn adjacency_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut probes = 0;
        for inst in 0..12 {
            let n = 6;
            let (mut a, x) = random_graph(n, 3, 0.5, 100 + inst);
            // Mix in fractional entries so the relaxed regime is covered.
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random_bool(0.3) {
                        let v: f64 = rng.random::<f64>() * 0.8 + 0.1;
                        a[[i, j]] = v;
                        a[[j, i]] = v;
                    }
                }
            }
            let params = random_params(3, 4, 2, 200 + inst);
            let upstream = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>() * 2.0 - 1.0);
            let grad = grad_wrt_adjacency(&params, &a, &x, &upstream);
            for _ in 0..10 {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                let fd = fd_pair_grad(&params, &a, &x, &upstream, i, j, 1e-4);
                let an = grad[[i, j]];
                let denom = fd.abs().max(1e-8);
                assert!(
                    ((an - fd).abs() / denom) < 1e-4 || (an - fd).abs() < 1e-8,
                    "instance {inst} entry ({i},{j}): analytic {an} vs fd {fd}"
                );
                probes += 1;
            }
        }
        assert!(probes >= 100, "need at least 100 probes, got {probes}");
    }

    #[test]
    fn adjacency_gradient_degree_material_entry() {
        // Probe an absent edge at a low-degree node, where the flip changes
        // the degrees substantially; the degree path must be captured.
        let a = array![
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0]
        ];
        let x = array![[0.4, -1.0], [0.3, 0.2], [-0.7, 0.9], [1.2, 0.1]];
        let params = random_params(2, 3, 2, 77);
        let upstream = array![
            [0.3, -0.4],
            [0.1, 0.9],
            [-0.2, 0.5],
            [0.7, -0.6]
        ];
        let grad = grad_wrt_adjacency(&params, &a, &x, &upstream);
        let fd = fd_pair_grad(&params, &a, &x, &upstream, 0, 3, 1e-4);
        assert!(((grad[[0, 3]] - fd).abs() / fd.abs().max(1e-8)) < 1e-4);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient_and_symmetry() {
        let (a, x) = random_graph(6, 3, 0.4, 17);
        let params = random_params(3, 4, 2, 18);
        let zero = grad_wrt_adjacency(&params, &a, &x, &Array2::zeros((6, 2)));
        assert!(zero.iter().all(|&g| g == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let upstream = Array2::from_shape_fn((6, 2), |_| rng.random::<f64>() - 0.5);
        let grad = grad_wrt_adjacency(&params, &a, &x, &upstream);
        for i in 0..6 {
            assert_eq!(grad[[i, i]], 0.0);
            for j in 0..6 {
                assert!((grad[[i, j]] - grad[[j, i]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn prob_upstream_conversion_matches_fd() {
        let (a, x) = random_graph(6, 3, 0.5, 23);
        let params = random_params(3, 4, 2, 24);
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let g_probs = Array2::from_shape_fn((6, 2), |_| rng.random::<f64>() - 0.5);
        let trace = forward_trace(&params, &a, &x);
        let g_logits = logit_grad_from_prob_grad(&trace.probs, &g_probs);
        let grad = grad_wrt_adjacency(&params, &a, &x, &g_logits);
        let eval = |a: &Array2<f64>| (&forward_trace(&params, a, &x).probs * &g_probs).sum();
        let (i, j) = (0, 3);
        let h = 1e-4;
        let mut ap = a.clone();
        ap[[i, j]] += h;
        ap[[j, i]] += h;
        let mut am = a.clone();
        am[[i, j]] -= h;
        am[[j, i]] -= h;
        let fd = (eval(&ap) - eval(&am)) / (2.0 * h);
        assert!(((grad[[i, j]] - fd).abs() / fd.abs().max(1e-8)) < 1e-3);
    }

    #[test]
    fn training_fits_separable_features_on_edgeless_graph() {
        let n = 20;
        let a = Array2::zeros((n, n));
        let mut x = Array2::zeros((n, 2));
        let mut labels = Vec::new();
        for i in 0..n {
            let y = i % 2;
            x[[i, 0]] = if y == 1 { 2.0 } else { -2.0 };
            x[[i, 1]] = 0.3;
            labels.push(y);
        }
        let g = AttributedGraph::new(a, x, labels, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            hidden: 8,
            ..TrainConfig::default()
        };
        let params = train(&g, &cfg).unwrap();
        assert!((accuracy(&params, &g).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (a, x) = random_graph(5, 3, 0.5, 31);
        let g = AttributedGraph::new(a, x, vec![0, 1, 0, 1, 0], 2).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            seed: 4,
            ..TrainConfig::default()
        };
        let params = train(&g, &cfg).unwrap();
        let init = GcnParams::init(3, cfg.hidden, 2, 4);
        assert_eq!(params, init);
    }

    #[test]
    fn predict_tie_breaks_to_lowest_class() {
        let probs = array![[0.5, 0.5], [0.01, 0.99]];
        let (labels, conf) = predict_from_probs(&probs);
        assert_eq!(labels, vec![0, 1]);
        assert!((conf[0] - 0.5).abs() < 1e-12);
        assert!((conf[1] - 0.99).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let params = random_params(4, 3, 2, 55);
        let text = params.to_json().unwrap();
        let back = GcnParams::from_json(&text).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn subgraph_view_matches_full_graph_forward_and_grad() {
        // A 9-node graph where node 0's 2-hop view is a strict subset, so the
        // external-degree bookkeeping actually matters.
        let n = 9;
        let edges = [
            (0, 1),
            (0, 2),
            (1, 3),
            (2, 4),
            (3, 5),
            (4, 6),
            (5, 7),
            (6, 8),
            (3, 4),
        ];
        let mut a = Array2::zeros((n, n));
        for &(i, j) in &edges {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let x = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>() - 0.5);
        let g = AttributedGraph::new(a.clone(), x.clone(), vec![0; n], 2).unwrap();
        let params = random_params(3, 4, 2, 62);

        let view = SubgraphView::build(&g, 0, 2).unwrap();
        assert_eq!(view.nodes, vec![0, 1, 2, 3, 4]);
        let weights = vec![1.0; view.local_edges.len()];
        let row = view.masked_center_probs(&params, &weights);
        let full = forward_on_adjacency(&params, &a, &x).unwrap();
        for k in 0..2 {
            assert!(
                (row[k] - full[[0, k]]).abs() < 1e-12,
                "class {k}: {} vs {}",
                row[k],
                full[[0, k]]
            );
        }

        // Masked gradient against full-graph finite differences: scale one
        // in-view edge's weight and compare d(sum upstream * logits_center).
        let upstream = array![0.8, -0.3];
        let (_, grads) = view.masked_center_grad(&params, &weights, &upstream);
        for (eidx, &(li, lj)) in view.local_edges.iter().enumerate() {
            let (gi, gj) = (view.nodes[li], view.nodes[lj]);
            let h = 1e-5;
            let eval = |w: f64| {
                let mut am = a.clone();
                am[[gi, gj]] = w;
                am[[gj, gi]] = w;
                let trace = forward_trace(&params, &am, &x);
                trace.logits[[0, 0]] * upstream[0] + trace.logits[[0, 1]] * upstream[1]
            };
            let fd = (eval(1.0 + h) - eval(1.0 - h)) / (2.0 * h);
            assert!(
                (grads[eidx] - fd).abs() / fd.abs().max(1e-8) < 1e-4,
                "edge ({gi},{gj}): {} vs fd {}",
                grads[eidx],
                fd
            );
        }
    }
}
