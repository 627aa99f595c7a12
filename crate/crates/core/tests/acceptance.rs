//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each, and
//! exits non-zero if any failed.
//!
//! `MREFG_ACCEPTANCE=1,4,10` restricts the run to the listed criteria.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::Instant;

use common::*;
use mrefg::corpus::{build_relation_vocab, split_corpus, RelationVocab, Sample};
use mrefg::encoder::EncoderConfig;
use mrefg::evaluation::score;
use mrefg::mgat::{loss_m, Mgat, MgatConfig};
use mrefg::nn::Parameters;
use mrefg::refgraph::{GraphConfig, GraphKind, GraphSet, ReferenceGraph};
use mrefg::synthgen::{generate, SynthCorpus, SynthSpec};
use mrefg::trainer::{run_semi_supervised, Mode, RunOutcome, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- oracles

fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for k in 0..a.len() {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Sentence vectors clustered by relation: a random unit centroid per relation
/// plus isotropic noise.
fn clustered_embeddings(samples: &[&Sample], relations: &[String], dim: usize, noise: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroids: BTreeMap<&str, Vec<f64>> = relations
        .iter()
        .map(|r| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            (r.as_str(), v.into_iter().map(|x| x / n).collect())
        })
        .collect();
    samples
        .iter()
        .map(|s| {
            let c = &centroids[s.relation.as_deref().expect("synthetic samples are labeled")];
            c.iter().map(|x| x + noise * rng.gen_range(-1.0..1.0)).collect()
        })
        .collect()
}

fn id_pairs(g: &ReferenceGraph, gs: &GraphSet) -> BTreeSet<(String, String)> {
    g.edge_set()
        .into_iter()
        .map(|(i, j)| (gs.nodes.id(i).to_string(), gs.nodes.id(j).to_string()))
        .collect()
}

/// The synthetic corpus, its split, and the gold-bearing samples in graph
/// node order.
struct GraphFixture {
    corpus: SynthCorpus,
    labeled: Vec<Sample>,
    unlabeled: Vec<Sample>,
}

fn graph_fixture(seed: u64, per_relation: usize, labeled_frac: f64) -> GraphFixture {
    let spec = SynthSpec::with_sizes(4, per_relation, 3, 4, 0.35, 0.1, seed);
    let corpus = generate(&spec).expect("valid spec");
    let mut order: Vec<Sample> = corpus.samples.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5));
    let n_labeled = (labeled_frac * order.len() as f64).round() as usize;
    let unlabeled = order.split_off(n_labeled);
    GraphFixture {
        corpus,
        labeled: order,
        unlabeled,
    }
}

fn node_order<'a>(gs: &GraphSet, samples: &'a [Sample]) -> Vec<&'a Sample> {
    let by_id: BTreeMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    gs.nodes.ids().iter().map(|id| by_id[id.as_str()]).collect()
}

// ------------------------------------------------------------- criteria

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let delta = 0.9;
    let cfg = GraphConfig {
        delta,
        max_degree: None,
        adjacency_window: 0,
    };
    let mut mismatches = Vec::new();
    let mut edge_total = [0usize; 3];
    for seed in 0..30u64 {
        let fx = graph_fixture(seed, 50, 0.3);
        let gs = GraphSet::new(&fx.labeled, &fx.unlabeled, &cfg).unwrap();
        let ordered = node_order(&gs, &fx.corpus.samples);
        let relations: Vec<String> = (0..4).map(|r| format!("rel_{r}")).collect();
        let emb = clustered_embeddings(&ordered, &relations, 8, 0.35, seed);
        let gs = gs.with_semantic(&emb);

        // Eqs. 1-2 from the generator's construction records
        let labeled_ids: HashSet<&str> = fx.labeled.iter().map(|s| s.id.as_str()).collect();
        let want_entity = fx.corpus.entity_pairs(&labeled_ids);
        let want_verb = fx.corpus.verb_pairs(&labeled_ids);
        // semantic rule by exhaustive pairwise scan
        let n = ordered.len();
        let mut want_semantic = BTreeSet::new();
        for i in 0..n {
            for j in i + 1..n {
                let any_labeled = labeled_ids.contains(ordered[i].id.as_str()) || labeled_ids.contains(ordered[j].id.as_str());
                if any_labeled && brute_cosine(&emb[i], &emb[j]) > delta {
                    want_semantic.insert((ordered[i].id.clone(), ordered[j].id.clone()));
                }
            }
        }
        // Eqs. 1-2 by exhaustive pairwise scan over the extracted signatures
        let es = gs.entity_signatures();
        let vs = gs.verb_signatures();
        let mut scan_entity = BTreeSet::new();
        let mut scan_verb = BTreeSet::new();
        for i in 0..n {
            for j in i + 1..n {
                if !(gs.nodes.is_labeled(i) || gs.nodes.is_labeled(j)) {
                    continue;
                }
                let (a, b) = (&es[i], &es[j]);
                if a.adjacent
                    && b.adjacent
                    && (a.ner_types == b.ner_types || a.entity_tokens.intersection(&b.entity_tokens).next().is_some())
                {
                    scan_entity.insert((gs.nodes.id(i).to_string(), gs.nodes.id(j).to_string()));
                }
                if let (Some(p), Some(q)) = (&vs[i].phrase, &vs[j].phrase) {
                    if p == q {
                        scan_verb.insert((gs.nodes.id(i).to_string(), gs.nodes.id(j).to_string()));
                    }
                }
            }
        }
        let got_entity = id_pairs(&gs.entity, &gs);
        let got_verb = id_pairs(&gs.verb, &gs);
        let got_semantic = id_pairs(&gs.semantic, &gs);
        for (name, got, want) in [
            ("entity/generator", &got_entity, &want_entity),
            ("entity/scan", &got_entity, &scan_entity),
            ("verb/generator", &got_verb, &want_verb),
            ("verb/scan", &got_verb, &scan_verb),
            ("semantics/scan", &got_semantic, &want_semantic),
        ] {
            if got != want {
                mismatches.push(format!("seed {seed} {name}: {} vs {}", got.len(), want.len()));
            }
        }
        edge_total[0] += got_entity.len();
        edge_total[1] += got_verb.len();
        edge_total[2] += got_semantic.len();
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches.is_empty() && secs < 60.0 && edge_total.iter().all(|&e| e > 0),
        format!(
            "30 corpora x 200 samples; edges entity {} verb {} semantics {}; {} mismatches{}; {secs:.1}s",
            edge_total[0],
            edge_total[1],
            edge_total[2],
            mismatches.len(),
            mismatches.first().map_or(String::new(), |m| format!(" (first: {m})"))
        ),
    )
}

fn criterion_2() -> Outcome {
    let cfg = GraphConfig {
        delta: 0.9,
        max_degree: Some(6),
        adjacency_window: 0,
    };
    let relations: Vec<String> = (0..4).map(|r| format!("rel_{r}")).collect();
    let mut failures = Vec::new();
    let mut promoted_total = 0;
    for seed in 0..20u64 {
        let fx = graph_fixture(100 + seed, 40, 0.2);
        let before = GraphSet::new(&fx.labeled, &fx.unlabeled, &cfg).unwrap();
        let ordered = node_order(&before, &fx.corpus.samples);
        let e0 = clustered_embeddings(&ordered, &relations, 8, 0.35, seed);
        let before = before.with_semantic(&e0);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = (0.1 * fx.unlabeled.len() as f64).ceil() as usize;
        let promoted: Vec<String> = fx
            .unlabeled
            .choose_multiple(&mut rng, k)
            .map(|s| s.id.clone())
            .collect();
        promoted_total += promoted.len();
        // embeddings move between iterations
        let e1: Vec<Vec<f64>> = e0
            .iter()
            .map(|v| v.iter().map(|x| x + 0.1 * rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let updated = before.update(&promoted, &e1).unwrap();

        let promoted_set: HashSet<&str> = promoted.iter().map(String::as_str).collect();
        let (moved, rest): (Vec<Sample>, Vec<Sample>) = fx
            .unlabeled
            .iter()
            .cloned()
            .partition(|s| promoted_set.contains(s.id.as_str()));
        let labeled: Vec<Sample> = fx.labeled.iter().cloned().chain(moved).collect();
        let rebuilt = GraphSet::new(&labeled, &rest, &cfg).unwrap().with_semantic(&e1);
        for kind in GraphKind::ALL {
            let a: Vec<_> = updated.graph(kind).edges().collect();
            let b: Vec<_> = rebuilt.graph(kind).edges().collect();
            if a != b {
                failures.push(format!("seed {seed} {kind}: {} vs {} edges", a.len(), b.len()));
            }
        }
        if updated.nodes != rebuilt.nodes {
            failures.push(format!("seed {seed}: node labels differ"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "20 seeds, {promoted_total} promotions, all three graphs; {} mismatches{}",
            failures.len(),
            failures.first().map_or(String::new(), |m| format!(" (first: {m})"))
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst_alpha: f64 = 0.0;
    let mut worst_beta: f64 = 0.0;
    let mut checked = 0usize;
    for trial in 0..40 {
        let n = rng.gen_range(1..=100);
        let p = rng.gen_range(0.0..0.2);
        let graphs: Vec<ReferenceGraph> = GraphKind::ALL
            .iter()
            .map(|&k| random_graph(&mut rng, k, n, p))
            .collect();
        let x = random_features(&mut rng, n, 16);
        let cfg = MgatConfig {
            heads: 4,
            attention_dim: 8,
            leaky_slope: 0.2,
        };
        let mut init = ChaCha8Rng::seed_from_u64(trial);
        let m = Mgat::new(cfg, GraphKind::ALL.to_vec(), 16, 5, &mut init).unwrap();
        let refs: Vec<&ReferenceGraph> = graphs.iter().collect();
        let fw = m.forward(&refs, &x);
        for na in &fw.per_graph {
            for head in &na.alpha {
                for row in head {
                    let s: f64 = row.iter().map(|(_, a)| a).sum();
                    worst_alpha = worst_alpha.max((s - 1.0).abs());
                    checked += 1;
                }
            }
        }
        worst_beta = worst_beta.max((fw.beta.iter().sum::<f64>() - 1.0).abs());
    }
    outcome(
        worst_alpha <= 1e-6 && worst_beta <= 1e-10,
        format!("{checked} node softmaxes, max |sum-1| {worst_alpha:.2e}; max |sum(beta)-1| {worst_beta:.2e} over M=3"),
    )
}

fn criterion_4() -> Outcome {
    use rand_chacha::ChaCha8Rng as R;
    let start = Instant::now();
    let (enc, data) = tiny_encoder(11);
    let batch: Vec<_> = data.iter().map(|(p, g)| (p, *g)).collect();
    let mut g = enc.params.zeros_like();
    enc.loss_and_grad::<R>(&batch, None, &mut g);
    let mut probe = enc.clone();
    let (err_p, _) = max_fd_error(&enc.params, &g, |p| {
        probe.params = p.clone();
        probe.loss(&batch)
    });

    let (m, graphs, x, labels) = tiny_mgat(12);
    let refs: Vec<_> = graphs.iter().collect();
    let mut gm = m.params.zeros_like();
    m.loss_and_grad(&refs, &x, &labels, &mut gm);
    let mut probe = m.clone();
    let (err_m, _) = max_fd_error(&m.params, &gm, |p| {
        probe.params = p.clone();
        loss_m(&probe.forward(&refs, &x).probs, &labels)
    });
    let secs = start.elapsed().as_secs_f64();
    outcome(
        err_p < 1e-4 && err_m < 1e-4 && secs < 30.0,
        format!(
            "L_P over {} scalars max rel err {err_p:.2e}; L_M over {} scalars (5 nodes, dim {}, K={}) max rel err {err_m:.2e}; {secs:.1}s",
            enc.params.num_scalars(),
            m.params.num_scalars(),
            x.ncols(),
            m.heads()
        ),
    )
}

fn criterion_5() -> Outcome {
    let n = 5;
    let graph = path_graph(GraphKind::Verb, n);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let x = random_features(&mut rng, n, 8);
    let cfg = MgatConfig {
        heads: 2,
        attention_dim: 4,
        leaky_slope: 0.2,
    };
    let m = Mgat::new(cfg, vec![GraphKind::Verb], 8, 3, &mut rng).unwrap();
    let na = m.node_attention(0, &graph, &x);

    // dense recomputation, index by index
    let k_heads = 2;
    let dh = 4;
    let mut adj = [[false; 5]; 5];
    for i in 0..n {
        adj[i][i] = true;
        if i + 1 < n {
            adj[i][i + 1] = true;
            adj[i + 1][i] = true;
        }
    }
    let mut worst: f64 = 0.0;
    for k in 0..k_heads {
        let w = &m.params.head_maps[k];
        let a_src = &m.params.src_scores[k];
        let a_dst = &m.params.dst_scores[k];
        let mut proj = [[0.0; 4]; 5];
        for i in 0..n {
            for r in 0..dh {
                let mut acc = 0.0;
                for c in 0..8 {
                    acc += w[[r, c]] * x[[i, c]];
                }
                proj[i][r] = acc;
            }
        }
        for i in 0..n {
            let mut e = [f64::NEG_INFINITY; 5];
            for j in 0..n {
                if adj[i][j] {
                    let mut s = 0.0;
                    for r in 0..dh {
                        s += a_src[r] * proj[i][r] + a_dst[r] * proj[j][r];
                    }
                    e[j] = if s > 0.0 { s } else { 0.2 * s };
                }
            }
            let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut alpha = [0.0; 5];
            let mut z = 0.0;
            for j in 0..n {
                if adj[i][j] {
                    alpha[j] = (e[j] - max).exp();
                    z += alpha[j];
                }
            }
            for a in alpha.iter_mut() {
                *a /= z;
            }
            for &(j, a) in &na.alpha[k][i] {
                worst = worst.max((a - alpha[j]).abs());
            }
            let listed: BTreeSet<usize> = na.alpha[k][i].iter().map(|&(j, _)| j).collect();
            let expected: BTreeSet<usize> = (0..n).filter(|&j| adj[i][j]).collect();
            if listed != expected {
                return outcome(false, format!("node {i} head {k}: neighborhood {listed:?} vs {expected:?}"));
            }
            for r in 0..dh {
                let mut u = 0.0;
                for j in 0..n {
                    u += alpha[j] * proj[j][r];
                }
                let h = 1.0 / (1.0 + (-u).exp());
                worst = worst.max((na.z[[i, k * dh + r]] - h).abs());
            }
        }
    }
    outcome(worst <= 1e-10, format!("5-node path, K=2; max abs deviation {worst:.2e}"))
}

fn tiny_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        encoder: EncoderConfig {
            word_dim: 8,
            pos_dim: 2,
            ner_dim: 2,
            position_dim: 2,
            hidden: 8,
            max_offset: 10,
            dropout: 0.0,
            fine_tune_words: true,
        },
        mgat: MgatConfig {
            heads: 2,
            attention_dim: 8,
            leaky_slope: 0.2,
        },
        init_epochs: 5,
        epochs_p: 2,
        epochs_m: 5,
        lr_p: 1e-2,
        lr_m: 1e-2,
        batch_size: 8,
        max_iters: 10,
        patience: 10,
        seed,
        ..TrainConfig::default()
    }
}

fn criterion_6() -> Outcome {
    let mut problems = Vec::new();
    let mut iterations = 0;
    for seed in 0..3u64 {
        let corpus = generate(&SynthSpec::with_sizes(4, 25, 3, 4, 0.3, 0.1, 600 + seed)).unwrap();
        let vocab = build_relation_vocab(&corpus.samples);
        let split = split_corpus(&corpus.samples, 0.2, 0.5, seed).unwrap();
        assert_eq!(split.unlabeled.len(), 50);
        let out = run_semi_supervised(&split, &vocab, None, &tiny_train_config(seed)).unwrap();
        let all: BTreeSet<String> = split.labeled.iter().chain(&split.unlabeled).map(|s| s.id.clone()).collect();
        let mut labeled: BTreeSet<String> = split.labeled.iter().map(|s| s.id.clone()).collect();
        let mut unlabeled: BTreeSet<String> = split.unlabeled.iter().map(|s| s.id.clone()).collect();
        let mut ever = HashSet::new();
        for r in out.history.iterations.iter().skip(1) {
            iterations += 1;
            let quota = (0.1 * r.pool as f64).ceil() as usize;
            if r.pool != unlabeled.len() {
                problems.push(format!("seed {seed} it {}: pool {} but {} unlabeled", r.iteration, r.pool, unlabeled.len()));
            }
            if r.selected.len() != quota.min(r.agreeing) {
                problems.push(format!(
                    "seed {seed} it {}: selected {} with quota {quota} and {} agreeing",
                    r.iteration,
                    r.selected.len(),
                    r.agreeing
                ));
            }
            for a in &r.selected {
                if !ever.insert(a.id.clone()) {
                    problems.push(format!("seed {seed}: {} selected twice", a.id));
                }
                if !unlabeled.remove(&a.id) {
                    problems.push(format!("seed {seed}: {} was not in the unlabeled pool", a.id));
                }
                labeled.insert(a.id.clone());
            }
            let union: BTreeSet<String> = labeled.union(&unlabeled).cloned().collect();
            if !labeled.is_disjoint(&unlabeled) || union != all {
                problems.push(format!("seed {seed} it {}: partition broken", r.iteration));
            }
            if r.labeled != labeled.len() || r.unlabeled != unlabeled.len() {
                problems.push(format!("seed {seed} it {}: recorded sizes disagree", r.iteration));
            }
        }
    }
    outcome(
        problems.is_empty() && iterations > 0,
        format!(
            "N_U=50, 3 seeds, {iterations} iterations; {} violations{}",
            problems.len(),
            problems.first().map_or(String::new(), |p| format!(" (first: {p})"))
        ),
    )
}

/// Configuration shared by the semi-supervised lift and ablation runs.
fn lift_config(seed: u64, graphs: Vec<GraphKind>) -> TrainConfig {
    TrainConfig {
        graphs,
        encoder: EncoderConfig {
            word_dim: 16,
            pos_dim: 4,
            ner_dim: 4,
            position_dim: 4,
            hidden: 16,
            max_offset: 20,
            dropout: 0.2,
            fine_tune_words: true,
        },
        mgat: MgatConfig {
            heads: 4,
            attention_dim: 16,
            leaky_slope: 0.2,
        },
        lr_p: 5e-3,
        lr_m: 1e-2,
        init_epochs: 100,
        epochs_p: 5,
        epochs_m: 30,
        batch_size: 16,
        max_iters: 10,
        patience: 10,
        unfreeze_encoder: true,
        seed,
        ..TrainConfig::default()
    }
}

const LIFT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn lift_run(seed: u64, graphs: Vec<GraphKind>) -> RunOutcome {
    let corpus = generate(&SynthSpec::with_sizes(6, 100, 8, 16, 0.4, 0.1, 1000 + seed)).unwrap();
    let vocab = build_relation_vocab(&corpus.samples);
    let split = split_corpus(&corpus.samples, 0.1, 0.5, seed).unwrap();
    run_semi_supervised(&split, &vocab, None, &lift_config(seed, graphs)).unwrap()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn criteria_7_8(run7: bool, run8: bool) -> Vec<(usize, Outcome)> {
    let start = Instant::now();
    let full: Vec<RunOutcome> = LIFT_SEEDS.iter().map(|&s| lift_run(s, GraphKind::ALL.to_vec())).collect();
    let full_secs = start.elapsed().as_secs_f64();
    let full_f1: Vec<f64> = full.iter().map(|o| 100.0 * o.test_f1().unwrap()).collect();
    let base_f1: Vec<f64> = full
        .iter()
        .map(|o| 100.0 * o.history.iterations[0].test.as_ref().unwrap().f1)
        .collect();
    let mut out = Vec::new();
    if run7 {
        // the baseline is an independent supervised run, checked against the
        // runner's own iteration 0
        let sup: Vec<f64> = LIFT_SEEDS
            .iter()
            .map(|&s| {
                let corpus = generate(&SynthSpec::with_sizes(6, 100, 8, 16, 0.4, 0.1, 1000 + s)).unwrap();
                let vocab = build_relation_vocab(&corpus.samples);
                let split = split_corpus(&corpus.samples, 0.1, 0.5, s).unwrap();
                let cfg = TrainConfig {
                    mode: Mode::Supervised,
                    ..lift_config(s, GraphKind::ALL.to_vec())
                };
                100.0 * run_semi_supervised(&split, &vocab, None, &cfg).unwrap().test_f1().unwrap()
            })
            .collect();
        let lift = mean(&full_f1) - mean(&sup);
        let consistent = sup == base_f1;
        out.push((
            7,
            outcome(
                lift >= 3.0 && full_secs < 900.0 && consistent,
                format!(
                    "MRefG mean F1 {:.2} vs supervised {:.2} (lift {lift:+.2}, need >= 3); per seed {:?} vs {:?}; loop runtime {full_secs:.0}s; baseline equals the runner's iteration 0: {consistent}",
                    mean(&full_f1),
                    mean(&sup),
                    full_f1.iter().map(|f| (f * 10.0).round() / 10.0).collect::<Vec<_>>(),
                    sup.iter().map(|f| (f * 10.0).round() / 10.0).collect::<Vec<_>>()
                ),
            ),
        ));
    }
    if run8 {
        let mut pass = true;
        let mut parts = vec![format!("three graphs {:.2}", mean(&full_f1))];
        for kind in GraphKind::ALL {
            let f: Vec<f64> = LIFT_SEEDS
                .iter()
                .map(|&s| 100.0 * lift_run(s, vec![kind]).test_f1().unwrap())
                .collect();
            let m = mean(&f);
            pass &= m <= mean(&full_f1) + 0.5;
            parts.push(format!("{kind} only {m:.2}"));
        }
        out.push((8, outcome(pass, format!("mean test F1 over 5 seeds: {}", parts.join(", ")))));
    }
    out
}

fn criterion_9() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for seed in 0..3u64 {
        let corpus = generate(&SynthSpec::with_sizes(6, 40, 4, 6, 0.3, 0.1, 900 + seed)).unwrap();
        let vocab = build_relation_vocab(&corpus.samples);
        let split = split_corpus(&corpus.samples, 0.3, 0.0, seed).unwrap();
        let run = |mode| {
            let cfg = TrainConfig {
                mode,
                ..tiny_train_config(seed)
            };
            100.0 * run_semi_supervised(&split, &vocab, None, &cfg).unwrap().test_f1().unwrap()
        };
        let (semi, sup) = (run(Mode::Mrefg), run(Mode::Supervised));
        worst = worst.max((semi - sup).abs());
        detail.push(format!("{semi:.2}/{sup:.2}"));
    }
    outcome(
        worst <= 0.5,
        format!("unlabeled fraction 0, 3 seeds, runner/supervised F1 {}; max gap {worst:.3}", detail.join(" ")),
    )
}

/// Micro P/R/F1 from a full confusion matrix, `no_relation` excluded.
fn confusion_oracle(pred: &[usize], gold: &[usize], classes: usize) -> (f64, f64, f64) {
    let mut m = vec![vec![0usize; classes]; classes];
    for (&p, &g) in pred.iter().zip(gold) {
        m[g][p] += 1;
    }
    let tp: usize = (1..classes).map(|c| m[c][c]).sum();
    let predicted: usize = (0..classes).map(|g| (1..classes).map(|p| m[g][p]).sum::<usize>()).sum();
    let actual: usize = (1..classes).map(|g| m[g].iter().sum::<usize>()).sum();
    let p = if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 };
    let r = if actual > 0 { tp as f64 / actual as f64 } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

fn criterion_10() -> Outcome {
    let vocab = RelationVocab::from_labels(["a", "b", "c"]);
    // (pred, gold, hand-counted tp, fp, fn)
    let fixtures: [(&[usize], &[usize], usize, usize, usize); 5] = [
        (&[1, 2, 3, 1], &[1, 2, 3, 1], 4, 0, 0),
        (&[0, 0, 0], &[1, 2, 3], 0, 0, 3),
        (&[1, 1, 2, 3, 0, 0], &[1, 1, 2, 0, 3, 2], 3, 1, 2),
        (&[2, 2, 2, 2, 0], &[1, 2, 3, 0, 0], 1, 3, 2),
        (&[3, 1, 0, 2, 2, 1, 0], &[3, 2, 1, 2, 0, 1, 0], 3, 2, 2),
    ];
    let mut bad = Vec::new();
    for (n, (pred, gold, tp, fp, fn_)) in fixtures.iter().enumerate() {
        let m = score(pred, gold, &vocab).unwrap();
        let hp = if tp + fp > 0 { *tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let hr = if tp + fn_ > 0 { *tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        let hf = if hp + hr > 0.0 { 2.0 * hp * hr / (hp + hr) } else { 0.0 };
        let oracle = confusion_oracle(pred, gold, vocab.len());
        let t = m.totals();
        if (m.precision, m.recall, m.f1) != (hp, hr, hf) || oracle != (hp, hr, hf) || (t.tp, t.fp, t.fn_) != (*tp, *fp, *fn_) {
            bad.push(format!(
                "fixture {n}: got ({}, {}, {}) want ({hp}, {hr}, {hf})",
                m.precision, m.recall, m.f1
            ));
        }
    }
    outcome(bad.is_empty(), format!("5 fixtures, exact equality; {}", if bad.is_empty() { "all match".into() } else { bad.join("; ") }))
}

const NAMES: [&str; 10] = [
    "graph-rule oracle",
    "incremental-update equivalence",
    "attention normalization",
    "gradient fidelity",
    "dense-oracle equivalence",
    "loop bookkeeping",
    "semi-supervised lift",
    "ablation direction",
    "degenerate equivalence",
    "metric oracle",
];

fn main() {
    // a name filter from `cargo test <filter>` that does not target this suite
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance criterion".contains(f.as_str())) {
        return;
    }
    let selected: Option<BTreeSet<usize>> = std::env::var("MREFG_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let wanted = |n: usize| selected.as_ref().is_none_or(|s| s.contains(&n));

    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let singles: [(usize, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (9, criterion_9),
        (10, criterion_10),
    ];
    for (n, f) in singles {
        if wanted(n) {
            let r = f();
            print_line(n, &r);
            results.push((n, r));
        }
    }
    if wanted(7) || wanted(8) {
        for (n, r) in criteria_7_8(wanted(7), wanted(8)) {
            print_line(n, &r);
            results.push((n, r));
        }
    }
    let failed: Vec<usize> = results.iter().filter(|(_, r)| !r.pass).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

fn print_line(n: usize, r: &Outcome) {
    println!(
        "criterion {n:>2} [{}] {}: {}",
        if r.pass { "PASS" } else { "FAIL" },
        NAMES[n - 1],
        r.detail
    );
}
