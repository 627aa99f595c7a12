//! Test-only oracles shared by the integration suites. Nothing here calls into
//! the code paths it checks beyond the public forward/loss functions.

#![allow(dead_code)]

use std::collections::BTreeSet;

use mrefg::corpus::{Sample, Span};
use mrefg::encoder::{Encoder, EncoderConfig, EncoderVocabs, PreparedSample};
use mrefg::mgat::{Mgat, MgatConfig};
use mrefg::nn::Parameters;
use mrefg::refgraph::{GraphKind, ReferenceGraph};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Relative error with a small floor so exact zeros on both sides count as a match.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Central finite difference of `loss` w.r.t. every scalar of `params`,
/// compared against `analytic`. Returns the largest relative error and the
/// index where it occurred.
pub fn max_fd_error<P, F>(params: &P, analytic: &P, mut loss: F) -> (f64, usize)
where
    P: Parameters + Clone,
    F: FnMut(&P) -> f64,
{
    let flat = analytic.flatten();
    let mut worst = (0.0, 0);
    let mut probe = params.clone();
    for k in 0..flat.len() {
        let orig = *probe.scalar_mut(k);
        *probe.scalar_mut(k) = orig + FD_STEP;
        let up = loss(&probe);
        *probe.scalar_mut(k) = orig - FD_STEP;
        let down = loss(&probe);
        *probe.scalar_mut(k) = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let e = rel_err(flat[k], numeric);
        if e > worst.0 {
            worst = (e, k);
        }
    }
    worst
}

pub fn toy_sample(id: &str, words: &[&str], subj: Span, obj: Span, rel: &str) -> Sample {
    let n = words.len();
    Sample {
        id: id.into(),
        tokens: words.iter().map(|w| w.to_string()).collect(),
        pos: (0..n).map(|i| if i % 3 == 1 { "VBD".into() } else { "NN".into() }).collect(),
        ner: (0..n).map(|i| if i % 2 == 0 { "PERSON".into() } else { "O".into() }).collect(),
        subj,
        obj,
        relation: Some(rel.into()),
    }
}

/// Five labeled samples and a small encoder (model dim 8) over them.
pub fn tiny_encoder(seed: u64) -> (Encoder, Vec<(PreparedSample, usize)>) {
    let samples = vec![
        toy_sample("a", &["x", "met", "y"], Span::new(0, 0), Span::new(2, 2), "r1"),
        toy_sample("b", &["p", "q", "saw", "the", "z"], Span::new(0, 1), Span::new(4, 4), "r2"),
        toy_sample("c", &["z", "x"], Span::new(0, 0), Span::new(1, 1), "r1"),
        toy_sample("d", &["y", "the", "met", "q", "p", "x"], Span::new(5, 5), Span::new(0, 0), "r3"),
        toy_sample("e", &["k"], Span::new(0, 0), Span::new(0, 0), "r2"),
    ];
    let cfg = EncoderConfig {
        word_dim: 4,
        pos_dim: 2,
        ner_dim: 2,
        position_dim: 2,
        hidden: 4,
        max_offset: 3,
        dropout: 0.0,
        fine_tune_words: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut enc = Encoder::new(cfg, EncoderVocabs::build(&samples), 4, None, &mut rng).unwrap();
    // nonzero biases so their gradients are exercised away from zero
    for t in enc.params.tensors_mut() {
        for v in t.iter_mut() {
            if *v == 0.0 {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
    }
    enc.params.word.row_mut(0).fill(0.0);
    let golds = [1, 2, 1, 3, 2];
    let prepared = samples
        .iter()
        .zip(golds)
        .map(|(s, g)| (enc.prepare(s), g))
        .collect();
    (enc, prepared)
}

/// Path graph 0-1-2-3-4 over five nodes.
pub fn path_graph(kind: GraphKind, n: usize) -> ReferenceGraph {
    ReferenceGraph::from_edges(kind, n, (0..n - 1).map(|i| (i, i + 1, 1.0)))
}

pub fn random_graph<R: Rng>(rng: &mut R, kind: GraphKind, n: usize, p: f64) -> ReferenceGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    ReferenceGraph::from_edges(kind, n, edges)
}

pub fn random_features<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, dim), |_| rng.gen_range(-1.0..1.0))
}

/// Five-node, dim-8, two-head model over three different graphs.
pub fn tiny_mgat(seed: u64) -> (Mgat, Vec<ReferenceGraph>, Array2<f64>, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = MgatConfig {
        heads: 2,
        attention_dim: 4,
        leaky_slope: 0.2,
    };
    let mut m = Mgat::new(cfg, GraphKind::ALL.to_vec(), 8, 3, &mut rng).unwrap();
    for t in m.params.tensors_mut() {
        for v in t.iter_mut() {
            if *v == 0.0 {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
    }
    let graphs = vec![
        path_graph(GraphKind::Entity, 5),
        ReferenceGraph::from_edges(GraphKind::Verb, 5, [(0, 2, 1.0), (0, 3, 1.0), (1, 4, 1.0)]),
        ReferenceGraph::from_edges(GraphKind::Semantic, 5, [(0, 1, 1.0), (0, 4, 1.0), (2, 3, 1.0), (3, 4, 1.0)]),
    ];
    let x = random_features(&mut rng, 5, 8);
    let labels = vec![(0, 1), (2, 0), (3, 2)];
    (m, graphs, x, labels)
}

pub fn pair(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

pub fn set_of(g: &ReferenceGraph) -> BTreeSet<(usize, usize)> {
    g.edge_set()
}
