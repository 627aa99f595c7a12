//! Multi-graph attention.
//!
//! Node level: for each reference graph and head `k`, node `i` attends over
//! `N_i ∪ {i}` with additive scores `leaky_relu(a_src·W_k d_i + a_dst·W_k d_j)`,
//! and its head output is `sigmoid(Σ_j α_ij W_k d_j)`. Head outputs are
//! concatenated into `z_i^φ`.
//!
//! Graph level: each graph gets one scalar `w^φ = mean_i q·tanh(W z_i^φ + b)`;
//! `β = softmax(w)` over graphs and `z_i = Σ_φ β^φ z_i^φ` feeds a linear softmax
//! classifier.
//!
//! The projections `W_k` are shared by all graphs; the scoring vectors are per
//! graph and head.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, sigmoid, slice1, slice1_mut, slice2, slice2_mut, Parameters};
use crate::refgraph::{GraphKind, ReferenceGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgatConfig {
    pub heads: usize,
    /// Width of the graph-level scoring layer.
    pub attention_dim: usize,
    pub leaky_slope: f64,
}

impl Default for MgatConfig {
    fn default() -> Self {
        MgatConfig {
            heads: 4,
            attention_dim: 64,
            leaky_slope: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgatParams {
    pub head_maps: Vec<Array2<f64>>,
    /// Indexed `graph * heads + head`.
    pub src_scores: Vec<Array1<f64>>,
    pub dst_scores: Vec<Array1<f64>>,
    pub graph_w: Array2<f64>,
    pub graph_b: Array1<f64>,
    pub graph_q: Array1<f64>,
    pub classifier: Array2<f64>,
    pub classifier_bias: Array1<f64>,
}

impl MgatParams {
    pub fn zeros_like(&self) -> Self {
        let z1 = |a: &Array1<f64>| Array1::zeros(a.raw_dim());
        let z2 = |a: &Array2<f64>| Array2::zeros(a.raw_dim());
        MgatParams {
            head_maps: self.head_maps.iter().map(z2).collect(),
            src_scores: self.src_scores.iter().map(z1).collect(),
            dst_scores: self.dst_scores.iter().map(z1).collect(),
            graph_w: z2(&self.graph_w),
            graph_b: z1(&self.graph_b),
            graph_q: z1(&self.graph_q),
            classifier: z2(&self.classifier),
            classifier_bias: z1(&self.classifier_bias),
        }
    }
}

impl Parameters for MgatParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = self.head_maps.iter().map(slice2).collect();
        v.extend(self.src_scores.iter().map(slice1));
        v.extend(self.dst_scores.iter().map(slice1));
        v.extend([
            slice2(&self.graph_w),
            slice1(&self.graph_b),
            slice1(&self.graph_q),
            slice2(&self.classifier),
            slice1(&self.classifier_bias),
        ]);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.head_maps.iter_mut().map(slice2_mut).collect();
        v.extend(self.src_scores.iter_mut().map(slice1_mut));
        v.extend(self.dst_scores.iter_mut().map(slice1_mut));
        v.extend([
            slice2_mut(&mut self.graph_w),
            slice1_mut(&mut self.graph_b),
            slice1_mut(&mut self.graph_q),
            slice2_mut(&mut self.classifier),
            slice1_mut(&mut self.classifier_bias),
        ]);
        v
    }
}

/// Node-level output of one graph.
#[derive(Debug, Clone)]
pub struct NodeAttention {
    /// `N × (heads · head_dim)`.
    pub z: Array2<f64>,
    /// Per head, per node: `(neighbor, α)` over `N_i ∪ {i}`.
    pub alpha: Vec<Vec<Vec<(usize, f64)>>>,
    pre: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct MgatForward {
    projections: Vec<Array2<f64>>,
    pub per_graph: Vec<NodeAttention>,
    graph_hidden: Vec<Array2<f64>>,
    pub graph_scores: Vec<f64>,
    pub beta: Vec<f64>,
    pub fused: Array2<f64>,
    pub probs: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mgat {
    pub config: MgatConfig,
    pub graphs: Vec<GraphKind>,
    pub params: MgatParams,
}

/// Neighborhood in attention order: the node itself first, then its graph
/// neighbors ascending.
pub fn neighborhood(graph: &ReferenceGraph, i: usize) -> Vec<usize> {
    std::iter::once(i)
        .chain(graph.neighbors(i).iter().copied().filter(|&j| j != i))
        .collect()
}

impl Mgat {
    pub fn new<R: Rng>(
        config: MgatConfig,
        graphs: Vec<GraphKind>,
        input_dim: usize,
        num_relations: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if config.heads == 0 || !input_dim.is_multiple_of(config.heads) {
            return Err(Error::Argument(format!(
                "input dim {input_dim} is not divisible into {} heads",
                config.heads
            )));
        }
        if graphs.is_empty() {
            return Err(Error::Argument("graph attention needs at least one graph".into()));
        }
        let k = config.heads;
        let dh = input_dim / k;
        let out = dh * k;
        let score_bound = (1.0 / dh as f64).sqrt();
        let params = MgatParams {
            head_maps: (0..k).map(|_| nn::xavier(rng, dh, input_dim)).collect(),
            src_scores: (0..graphs.len() * k)
                .map(|_| nn::uniform_vec(rng, dh, score_bound))
                .collect(),
            dst_scores: (0..graphs.len() * k)
                .map(|_| nn::uniform_vec(rng, dh, score_bound))
                .collect(),
            graph_w: nn::xavier(rng, config.attention_dim, out),
            graph_b: Array1::zeros(config.attention_dim),
            graph_q: nn::uniform_vec(rng, config.attention_dim, (1.0 / config.attention_dim as f64).sqrt()),
            classifier: nn::xavier(rng, num_relations, out),
            classifier_bias: Array1::zeros(num_relations),
        };
        Ok(Mgat {
            config,
            graphs,
            params,
        })
    }

    pub fn heads(&self) -> usize {
        self.config.heads
    }

    pub fn head_dim(&self) -> usize {
        self.params.head_maps[0].nrows()
    }

    fn project(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        self.params.head_maps.iter().map(|w| x.dot(&w.t())).collect()
    }

    fn node_attention_projected(
        &self,
        slot: usize,
        graph: &ReferenceGraph,
        projections: &[Array2<f64>],
    ) -> NodeAttention {
        let n = graph.num_nodes();
        let k_heads = self.heads();
        let dh = self.head_dim();
        let slope = self.config.leaky_slope;
        let mut z = Array2::zeros((n, k_heads * dh));
        let mut alpha = Vec::with_capacity(k_heads);
        let mut pre = Vec::with_capacity(k_heads);
        let neighborhoods: Vec<Vec<usize>> = (0..n).map(|i| neighborhood(graph, i)).collect();
        for (k, proj) in projections.iter().enumerate() {
            let src = proj.dot(&self.params.src_scores[slot * k_heads + k]);
            let dst = proj.dot(&self.params.dst_scores[slot * k_heads + k]);
            let mut head_alpha = Vec::with_capacity(n);
            let mut head_pre = Vec::with_capacity(n);
            for (i, nb) in neighborhoods.iter().enumerate() {
                let raw: Vec<f64> = nb.iter().map(|&j| src[i] + dst[j]).collect();
                let scores: Vec<f64> = raw.iter().map(|&e| nn::leaky_relu(e, slope)).collect();
                let a = nn::softmax_slice(&scores);
                let mut u = Array1::zeros(dh);
                for (&j, &aij) in nb.iter().zip(&a) {
                    u.scaled_add(aij, &proj.row(j));
                }
                z.slice_mut(s![i, k * dh..(k + 1) * dh])
                    .assign(&u.mapv(sigmoid));
                head_alpha.push(nb.iter().copied().zip(a).collect());
                head_pre.push(raw);
            }
            alpha.push(head_alpha);
            pre.push(head_pre);
        }
        NodeAttention { z, alpha, pre }
    }

    /// Node-level attention of the graph in slot `slot` over node features `x`
    /// (one row per node).
    pub fn node_attention(&self, slot: usize, graph: &ReferenceGraph, x: &Array2<f64>) -> NodeAttention {
        self.node_attention_projected(slot, graph, &self.project(x))
    }

    fn graph_hidden(&self, z: &Array2<f64>) -> Array2<f64> {
        (z.dot(&self.params.graph_w.t()) + &self.params.graph_b).mapv(f64::tanh)
    }

    /// Fuses per-graph embeddings; returns `(z, β, w)`.
    pub fn graph_attention(&self, per_graph: &[Array2<f64>]) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
        let scores: Vec<f64> = per_graph
            .iter()
            .map(|z| {
                let t = self.graph_hidden(z);
                t.dot(&self.params.graph_q).mean().unwrap_or(0.0)
            })
            .collect();
        let beta = nn::softmax_slice(&scores);
        let mut fused = Array2::zeros(per_graph[0].raw_dim());
        for (z, b) in per_graph.iter().zip(&beta) {
            fused.scaled_add(*b, z);
        }
        (fused, beta, scores)
    }

    /// Row-wise relation distributions from fused embeddings.
    pub fn predict_m(&self, fused: &Array2<f64>) -> Array2<f64> {
        let mut logits = fused.dot(&self.params.classifier.t()) + &self.params.classifier_bias;
        for mut row in logits.rows_mut() {
            let p = nn::softmax(row.view());
            row.assign(&p);
        }
        logits
    }

    /// `graphs[slot]` must be the graph of kind `self.graphs[slot]`.
    pub fn forward(&self, graphs: &[&ReferenceGraph], x: &Array2<f64>) -> MgatForward {
        assert_eq!(graphs.len(), self.graphs.len(), "one graph per slot");
        let projections = self.project(x);
        let per_graph: Vec<NodeAttention> = graphs
            .iter()
            .enumerate()
            .map(|(slot, g)| self.node_attention_projected(slot, g, &projections))
            .collect();
        let graph_hidden: Vec<Array2<f64>> = per_graph.iter().map(|na| self.graph_hidden(&na.z)).collect();
        let graph_scores: Vec<f64> = graph_hidden
            .iter()
            .map(|t| t.dot(&self.params.graph_q).mean().unwrap_or(0.0))
            .collect();
        let beta = nn::softmax_slice(&graph_scores);
        let mut fused = Array2::zeros(per_graph[0].z.raw_dim());
        for (na, b) in per_graph.iter().zip(&beta) {
            fused.scaled_add(*b, &na.z);
        }
        let probs = self.predict_m(&fused);
        MgatForward {
            projections,
            per_graph,
            graph_hidden,
            graph_scores,
            beta,
            fused,
            probs,
        }
    }

    /// Mean cross-entropy over `labels` (`(node, class)` pairs) and gradients
    /// w.r.t. every parameter and the node features.
    pub fn loss_and_grad(
        &self,
        graphs: &[&ReferenceGraph],
        x: &Array2<f64>,
        labels: &[(usize, usize)],
        grads: &mut MgatParams,
    ) -> (f64, Array2<f64>) {
        grads.fill_zero();
        let fw = self.forward(graphs, x);
        let n = x.nrows();
        let mut dx = Array2::zeros(x.raw_dim());
        if labels.is_empty() {
            return (0.0, dx);
        }
        let loss = loss_m(&fw.probs, labels);
        let scale = 1.0 / labels.len() as f64;
        let mut dlogits = Array2::zeros(fw.probs.raw_dim());
        for &(i, gold) in labels {
            let mut row = dlogits.row_mut(i);
            row += &(&fw.probs.row(i) * scale);
            row[gold] -= scale;
        }
        grads.classifier += &dlogits.t().dot(&fw.fused);
        grads.classifier_bias += &dlogits.sum_axis(Axis(0));
        let d_fused = dlogits.dot(&self.params.classifier);

        let d_beta: Vec<f64> = fw
            .per_graph
            .iter()
            .map(|na| (&d_fused * &na.z).sum())
            .collect();
        let d_scores = nn::softmax_backward(&fw.beta, &d_beta);

        let k_heads = self.heads();
        let dh = self.head_dim();
        let slope = self.config.leaky_slope;
        let mut d_proj: Vec<Array2<f64>> = fw.projections.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        for (slot, na) in fw.per_graph.iter().enumerate() {
            let mut dz = &d_fused * fw.beta[slot];
            // graph-level scoring
            let t = &fw.graph_hidden[slot];
            let c = d_scores[slot] / n as f64;
            grads.graph_q.scaled_add(c, &t.sum_axis(Axis(0)));
            let mut d_pre = t.mapv(|v| 1.0 - v * v);
            d_pre *= &self.params.graph_q.view().insert_axis(Axis(0));
            d_pre *= c;
            grads.graph_w += &d_pre.t().dot(&na.z);
            grads.graph_b += &d_pre.sum_axis(Axis(0));
            dz += &d_pre.dot(&self.params.graph_w);

            // node-level heads
            for k in 0..k_heads {
                let proj = &fw.projections[k];
                let idx = slot * k_heads + k;
                let h = na.z.slice(s![.., k * dh..(k + 1) * dh]);
                let du = &dz.slice(s![.., k * dh..(k + 1) * dh]) * &h.mapv(|v| v * (1.0 - v));
                let mut d_src = vec![0.0; n];
                let mut d_dst = vec![0.0; n];
                for i in 0..n {
                    let nb = &na.alpha[k][i];
                    let du_i = du.row(i);
                    let d_alpha: Vec<f64> = nb.iter().map(|&(j, _)| du_i.dot(&proj.row(j))).collect();
                    let a: Vec<f64> = nb.iter().map(|&(_, a)| a).collect();
                    let d_e = nn::softmax_backward(&a, &d_alpha);
                    for ((&(j, aij), de), &raw) in nb.iter().zip(&d_e).zip(&na.pre[k][i]) {
                        d_proj[k].row_mut(j).scaled_add(aij, &du_i);
                        let dr = if raw > 0.0 { *de } else { *de * slope };
                        d_src[i] += dr;
                        d_dst[j] += dr;
                    }
                }
                let d_src = Array1::from(d_src);
                let d_dst = Array1::from(d_dst);
                grads.src_scores[idx] += &proj.t().dot(&d_src);
                grads.dst_scores[idx] += &proj.t().dot(&d_dst);
                nn::add_outer(&mut d_proj[k], d_src.view(), self.params.src_scores[idx].view());
                nn::add_outer(&mut d_proj[k], d_dst.view(), self.params.dst_scores[idx].view());
            }
        }
        for (k, dp) in d_proj.iter().enumerate() {
            grads.head_maps[k] += &dp.t().dot(x);
            dx += &dp.dot(&self.params.head_maps[k]);
        }
        (loss, dx)
    }
}

/// Mean cross-entropy of the rows of `probs` selected by `labels`.
pub fn loss_m(probs: &Array2<f64>, labels: &[(usize, usize)]) -> f64 {
    let rows: Vec<(ArrayView1<f64>, usize)> = labels.iter().map(|&(i, g)| (probs.row(i), g)).collect();
    nn::mean_cross_entropy(rows.iter().map(|(r, g)| (r.as_slice().expect("row-major"), *g)))
}
