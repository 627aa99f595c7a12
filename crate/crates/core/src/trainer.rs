//! The semi-supervised loop: alternate the prediction-module and graph-attention
//! losses, intersect the two modules' predictions on the unlabeled pool,
//! promote the most confident agreeing samples and update the graphs.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSplit, RelationVocab, Sample};
use crate::encoder::{Encoder, EncoderConfig, EncoderParams, EncoderVocabs, PreparedSample};
use crate::error::{Error, Result};
use crate::evaluation::{score, Metrics};
use crate::features::EmbeddingTable;
use crate::mgat::{Mgat, MgatConfig, MgatParams};
use crate::nn::{self, clip_grad_norm, Adam, Parameters};
use crate::refgraph::{GraphConfig, GraphKind, GraphSet, ReferenceGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Both modules; a sample is promoted only when they agree.
    Mrefg,
    /// The prediction module alone, ranked by its own confidence.
    SelfTraining,
    /// The initial supervised pass only.
    Supervised,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Mrefg => "mrefg",
            Mode::SelfTraining => "self-training",
            Mode::Supervised => "supervised",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mrefg" => Ok(Mode::Mrefg),
            "self-training" | "self_training" => Ok(Mode::SelfTraining),
            "supervised" => Ok(Mode::Supervised),
            other => Err(Error::Argument(format!("unknown training mode {other:?}"))),
        }
    }
}

/// What the selection fraction is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectBase {
    /// The unlabeled pool left at the start of each iteration.
    Remaining,
    /// The unlabeled pool before the first iteration.
    Original,
}

impl fmt::Display for SelectBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectBase::Remaining => "remaining",
            SelectBase::Original => "original",
        })
    }
}

impl FromStr for SelectBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remaining" => Ok(SelectBase::Remaining),
            "original" => Ok(SelectBase::Original),
            other => Err(Error::Argument(format!("unknown selection base {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub graphs: Vec<GraphKind>,
    pub graph: GraphConfig,
    pub encoder: EncoderConfig,
    pub mgat: MgatConfig,
    pub lr_p: f64,
    pub lr_m: f64,
    /// Epochs of the initial supervised pass.
    pub init_epochs: usize,
    /// Epochs of L_P per round.
    pub epochs_p: usize,
    /// Full-batch steps of L_M per round.
    pub epochs_m: usize,
    pub batch_size: usize,
    pub max_iters: usize,
    pub patience: usize,
    pub select_frac: f64,
    pub select_base: SelectBase,
    /// Let the graph-attention loss update the encoder as well.
    pub unfreeze_encoder: bool,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Mrefg,
            graphs: GraphKind::ALL.to_vec(),
            graph: GraphConfig::default(),
            encoder: EncoderConfig::default(),
            mgat: MgatConfig::default(),
            lr_p: 1e-3,
            lr_m: 5e-3,
            init_epochs: 10,
            epochs_p: 10,
            epochs_m: 10,
            batch_size: 32,
            max_iters: 10,
            patience: 3,
            select_frac: 0.1,
            select_base: SelectBase::Remaining,
            unfreeze_encoder: false,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.graph.validate()?;
        if self.graphs.is_empty() {
            return Err(Error::Argument("at least one graph must be enabled".into()));
        }
        if !(0.0..=1.0).contains(&self.select_frac) {
            return Err(Error::Argument(format!(
                "select_frac must lie in [0, 1], got {}",
                self.select_frac
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be positive".into()));
        }
        if !(self.lr_p > 0.0 && self.lr_m > 0.0) {
            return Err(Error::Argument("learning rates must be positive".into()));
        }
        if self.mgat.heads == 0 || !self.encoder.model_dim().is_multiple_of(self.mgat.heads) {
            return Err(Error::Argument(format!(
                "sentence embedding dim {} is not divisible into {} heads",
                self.encoder.model_dim(),
                self.mgat.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPair {
    pub id: String,
    pub p: Vec<f64>,
    pub m: Vec<f64>,
    pub agree: bool,
    pub score: f64,
}

impl PredictionPair {
    pub fn new(id: impl Into<String>, p: Vec<f64>, m: Vec<f64>) -> Self {
        let (ap, am) = (nn::argmax(&p), nn::argmax(&m));
        let score = (p[ap] * m[am]).max(0.0).sqrt();
        PredictionPair {
            id: id.into(),
            agree: ap == am,
            score,
            p,
            m,
        }
    }

    pub fn label(&self) -> usize {
        nn::argmax(&self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub id: String,
    pub label: String,
    pub score: f64,
}

/// Agreeing pairs sorted by score (descending, ties by id ascending), cut at
/// `ceil(fraction * pool_size)`.
pub fn select_augmentation(
    pairs: &[PredictionPair],
    fraction: f64,
    pool_size: usize,
    vocab: &RelationVocab,
) -> Vec<Augmentation> {
    let quota = (fraction * pool_size as f64).ceil() as usize;
    let mut agreeing: Vec<&PredictionPair> = pairs.iter().filter(|p| p.agree).collect();
    agreeing.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    agreeing
        .into_iter()
        .take(quota)
        .map(|p| Augmentation {
            id: p.id.clone(),
            label: vocab.label(p.label()).to_string(),
            score: p.score,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Labeled pool size after this iteration's augmentation.
    pub labeled: usize,
    pub unlabeled: usize,
    /// Unlabeled pool size when predictions were made.
    pub pool: usize,
    pub agreeing: usize,
    pub selected: Vec<Augmentation>,
    pub augmentation_precision: Option<f64>,
    pub dev: Option<Metrics>,
    pub test: Option<Metrics>,
    pub beta: BTreeMap<GraphKind, f64>,
    pub edges: BTreeMap<GraphKind, usize>,
    pub loss_p: f64,
    pub loss_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub iterations: Vec<IterationRecord>,
}

impl TrainHistory {
    /// One JSON record per line.
    pub fn to_jsonl(&self) -> String {
        self.iterations
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let iterations = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    line: n + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<IterationRecord>>>()?;
        if iterations.windows(2).any(|w| w[0].iteration >= w[1].iteration) {
            return Err(Error::Parse {
                line: 0,
                message: "iterations are not strictly increasing".into(),
            });
        }
        Ok(TrainHistory { iterations })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Encoder and graph-attention states of the best-dev iteration.
    pub encoder: Encoder,
    pub mgat: Option<Mgat>,
    pub best_iteration: usize,
    pub history: TrainHistory,
}

impl RunOutcome {
    pub fn best(&self) -> &IterationRecord {
        self.history
            .iterations
            .iter()
            .find(|r| r.iteration == self.best_iteration)
            .expect("best iteration is recorded")
    }

    pub fn test_f1(&self) -> Option<f64> {
        self.best().test.as_ref().map(|m| m.f1)
    }
}

fn gold_index(vocab: &RelationVocab, s: &Sample) -> Result<usize> {
    let label = s.relation.as_deref().ok_or_else(|| Error::Validation {
        id: s.id.clone(),
        message: "sample has no relation".into(),
    })?;
    vocab.index_of(label).ok_or_else(|| Error::Validation {
        id: s.id.clone(),
        message: format!("relation {label:?} is not in the vocabulary"),
    })
}

/// Prediction-module labels for `samples`.
pub fn predict(encoder: &Encoder, samples: &[Sample]) -> Vec<usize> {
    samples
        .iter()
        .map(|s| nn::argmax(&encoder.predict_p(&encoder.encode(&encoder.prepare(s)))))
        .collect()
}

/// Scores the prediction module on `samples`; `None` on an empty set.
pub fn evaluate(encoder: &Encoder, samples: &[Sample], vocab: &RelationVocab) -> Result<Option<Metrics>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let gold = samples
        .iter()
        .map(|s| gold_index(vocab, s))
        .collect::<Result<Vec<_>>>()?;
    score(&predict(encoder, samples), &gold, vocab).map(Some)
}

fn ensure_finite(what: &str, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!("{what} became {loss}")))
    }
}

/// Encoder, graph-attention module and their optimizers.
pub struct Models {
    pub encoder: Encoder,
    pub mgat: Mgat,
    enc_opt: Adam,
    enc_grads: EncoderParams,
    mgat_opt: Adam,
    mgat_grads: MgatParams,
}

impl Models {
    pub fn new<R: Rng>(
        cfg: &TrainConfig,
        vocabs: EncoderVocabs,
        num_relations: usize,
        pretrained: Option<&EmbeddingTable>,
        rng: &mut R,
    ) -> Result<Self> {
        let encoder = Encoder::new(cfg.encoder.clone(), vocabs, num_relations, pretrained, rng)?;
        // separate stream, so the encoder's trajectory does not depend on
        // which graphs are enabled
        let mut mgat_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let mgat = Mgat::new(
            cfg.mgat.clone(),
            cfg.graphs.clone(),
            cfg.encoder.model_dim(),
            num_relations,
            &mut mgat_rng,
        )?;
        Ok(Models {
            enc_grads: encoder.params.zeros_like(),
            mgat_grads: mgat.params.zeros_like(),
            enc_opt: Adam::new(cfg.lr_p),
            mgat_opt: Adam::new(cfg.lr_m),
            encoder,
            mgat,
        })
    }

    /// One epoch of L_P over shuffled minibatches; returns the mean batch loss.
    pub fn epoch_p<R: Rng>(
        &mut self,
        data: &[(PreparedSample, usize)],
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&PreparedSample, usize)> = chunk.iter().map(|&i| (&data[i].0, data[i].1)).collect();
            let loss = self.encoder.loss_and_grad(&batch, Some(&mut *rng), &mut self.enc_grads);
            ensure_finite("prediction loss", loss)?;
            clip_grad_norm(&mut self.enc_grads, cfg.clip_norm);
            self.enc_opt.step(&mut self.encoder.params, &self.enc_grads);
            total += loss;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    pub fn embed(&self, nodes: &[PreparedSample]) -> Array2<f64> {
        let d = self.encoder.config.model_dim();
        let mut x = Array2::zeros((nodes.len(), d));
        for (mut row, s) in x.rows_mut().into_iter().zip(nodes) {
            row.assign(&self.encoder.encode(s));
        }
        x
    }

    /// One full-batch step of L_M on the labeled nodes. With
    /// `unfreeze_encoder`, the gradient on the node features is pushed into
    /// the encoder as well.
    pub fn step_m(
        &mut self,
        graphs: &[&ReferenceGraph],
        nodes: &[PreparedSample],
        x: &Array2<f64>,
        labels: &[(usize, usize)],
        cfg: &TrainConfig,
    ) -> Result<f64> {
        let (loss, dx) = self.mgat.loss_and_grad(graphs, x, labels, &mut self.mgat_grads);
        ensure_finite("graph-attention loss", loss)?;
        clip_grad_norm(&mut self.mgat_grads, cfg.clip_norm);
        self.mgat_opt.step(&mut self.mgat.params, &self.mgat_grads);
        if cfg.unfreeze_encoder {
            self.enc_grads.fill_zero();
            for (i, row) in dx.rows().into_iter().enumerate() {
                if row.iter().any(|&v| v != 0.0) {
                    let cache = self.encoder.forward(&nodes[i]);
                    self.encoder.backward(&cache, &row.to_owned(), &mut self.enc_grads);
                }
            }
            clip_grad_norm(&mut self.enc_grads, cfg.clip_norm);
            self.enc_opt.step(&mut self.encoder.params, &self.enc_grads);
        }
        Ok(loss)
    }
}

/// Losses reported by one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundLosses {
    pub loss_p: f64,
    pub loss_m: f64,
}

/// `epochs_p` epochs of L_P on the labeled samples, then `epochs_m` steps of
/// L_M on the labeled nodes over embeddings recomputed after L_P. Returns the
/// final node embeddings along with the losses.
pub fn train_round<R: Rng>(
    models: &mut Models,
    graph_set: &GraphSet,
    nodes: &[PreparedSample],
    labels: &[(usize, usize)],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(RoundLosses, Array2<f64>)> {
    let data: Vec<(PreparedSample, usize)> = labels.iter().map(|&(i, c)| (nodes[i].clone(), c)).collect();
    let mut loss_p = 0.0;
    for _ in 0..cfg.epochs_p {
        loss_p = models.epoch_p(&data, cfg, rng)?;
    }
    let graphs: Vec<&ReferenceGraph> = models.mgat.graphs.iter().map(|&k| graph_set.graph(k)).collect();
    let mut x = models.embed(nodes);
    let mut loss_m = f64::NAN;
    for _ in 0..cfg.epochs_m {
        loss_m = models.step_m(&graphs, nodes, &x, labels, cfg)?;
        if cfg.unfreeze_encoder {
            x = models.embed(nodes);
        }
    }
    if cfg.epochs_m == 0 {
        loss_m = crate::mgat::loss_m(&models.mgat.forward(&graphs, &x).probs, labels);
    }
    Ok((RoundLosses { loss_p, loss_m }, x))
}

fn rows_as_vecs(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Initial supervised pass with best-dev snapshotting. Returns the loss of the
/// last epoch.
fn supervised_pass<R: Rng>(
    models: &mut Models,
    data: &[(PreparedSample, usize)],
    dev: &[Sample],
    vocab: &RelationVocab,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut best: Option<(f64, EncoderParams)> = None;
    let mut loss = 0.0;
    for epoch in 0..cfg.init_epochs {
        loss = models.epoch_p(data, cfg, rng)?;
        if let Some(m) = evaluate(&models.encoder, dev, vocab)? {
            log::debug!("supervised epoch {epoch}: loss {loss:.4}, dev F1 {:.4}", m.f1);
            if best.as_ref().is_none_or(|(f, _)| m.f1 > *f) {
                best = Some((m.f1, models.encoder.params.clone()));
            }
        }
    }
    if let Some((_, params)) = best {
        models.encoder.params = params;
    }
    Ok(loss)
}

/// Full pipeline on a prepared split: supervised pass, graph construction, and
/// up to `max_iters` rounds of train / predict / select / promote / update.
pub fn run_semi_supervised(
    split: &CorpusSplit,
    vocab: &RelationVocab,
    pretrained: Option<&EmbeddingTable>,
    cfg: &TrainConfig,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocabs = EncoderVocabs::build(split.labeled.iter().chain(&split.unlabeled));
    let mut models = Models::new(cfg, vocabs, vocab.len(), pretrained, &mut rng)?;

    let labeled_data = split
        .labeled
        .iter()
        .map(|s| Ok((models.encoder.prepare(s), gold_index(vocab, s)?)))
        .collect::<Result<Vec<_>>>()?;
    let loss_p = supervised_pass(&mut models, &labeled_data, &split.dev, vocab, cfg, &mut rng)?;

    let mut history = TrainHistory::default();
    history.iterations.push(IterationRecord {
        iteration: 0,
        labeled: split.labeled.len(),
        unlabeled: split.unlabeled.len(),
        pool: split.unlabeled.len(),
        agreeing: 0,
        selected: Vec::new(),
        augmentation_precision: None,
        dev: evaluate(&models.encoder, &split.dev, vocab)?,
        test: evaluate(&models.encoder, &split.test, vocab)?,
        beta: BTreeMap::new(),
        edges: BTreeMap::new(),
        loss_p,
        loss_m: None,
    });
    let mut best_dev = history.iterations[0].dev.as_ref().map_or(f64::NEG_INFINITY, |m| m.f1);
    let mut best = (0, models.encoder.clone(), None::<Mgat>);

    if cfg.mode == Mode::Supervised || split.unlabeled.is_empty() || cfg.max_iters == 0 {
        return Ok(RunOutcome {
            encoder: best.1,
            mgat: best.2,
            best_iteration: 0,
            history,
        });
    }

    let mut graph_set = GraphSet::new(&split.labeled, &split.unlabeled, &cfg.graph)?;
    let by_id: BTreeMap<&str, &Sample> = split
        .labeled
        .iter()
        .chain(&split.unlabeled)
        .map(|s| (s.id.as_str(), s))
        .collect();
    let nodes: Vec<PreparedSample> = graph_set
        .nodes
        .ids()
        .iter()
        .map(|id| models.encoder.prepare(by_id[id.as_str()]))
        .collect();
    let mut labels: Vec<Option<usize>> = graph_set
        .nodes
        .ids()
        .iter()
        .map(|id| by_id[id.as_str()].relation.as_deref().and_then(|l| vocab.index_of(l)))
        .collect();
    for (i, l) in labels.iter_mut().enumerate() {
        if !graph_set.nodes.is_labeled(i) {
            *l = None;
        }
    }
    graph_set = graph_set.with_semantic(&rows_as_vecs(&models.embed(&nodes)));

    let original_pool = split.unlabeled.len();
    let mut selected_ever: HashSet<String> = HashSet::new();
    let mut stale = 0;
    for iteration in 1..=cfg.max_iters {
        let labeled_pairs: Vec<(usize, usize)> = labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|c| (i, c)))
            .collect();
        let (losses, x) = train_round(&mut models, &graph_set, &nodes, &labeled_pairs, cfg, &mut rng)?;

        let unlabeled_idx: Vec<usize> = (0..nodes.len()).filter(|&i| labels[i].is_none()).collect();
        let graphs: Vec<&ReferenceGraph> = models.mgat.graphs.iter().map(|&k| graph_set.graph(k)).collect();
        let fw = models.mgat.forward(&graphs, &x);
        let pairs: Vec<PredictionPair> = unlabeled_idx
            .iter()
            .map(|&i| {
                let p = models.encoder.predict_p(&x.row(i).to_owned());
                let m = match cfg.mode {
                    Mode::SelfTraining => p.clone(),
                    _ => fw.probs.row(i).to_vec(),
                };
                PredictionPair::new(graph_set.nodes.id(i), p, m)
            })
            .collect();
        let pool_base = match cfg.select_base {
            SelectBase::Remaining => unlabeled_idx.len(),
            SelectBase::Original => original_pool,
        };
        let selected = select_augmentation(&pairs, cfg.select_frac, pool_base, vocab);
        let agreeing = pairs.iter().filter(|p| p.agree).count();
        for a in &selected {
            if !selected_ever.insert(a.id.clone()) {
                return Err(Error::Argument(format!("{} selected twice", a.id)));
            }
            let i = graph_set.nodes.index_of(&a.id).expect("pool member");
            labels[i] = vocab.index_of(&a.label);
        }
        let ids: Vec<&str> = selected.iter().map(|a| a.id.as_str()).collect();
        graph_set = graph_set.update(&ids, &rows_as_vecs(&x))?;

        let record = IterationRecord {
            iteration,
            labeled: graph_set.nodes.labeled_count(),
            unlabeled: nodes.len() - graph_set.nodes.labeled_count(),
            pool: unlabeled_idx.len(),
            agreeing,
            augmentation_precision: split
                .hidden_gold
                .precision(selected.iter().map(|a| (a.id.as_str(), a.label.as_str()))),
            selected,
            dev: evaluate(&models.encoder, &split.dev, vocab)?,
            test: evaluate(&models.encoder, &split.test, vocab)?,
            beta: models.mgat.graphs.iter().copied().zip(fw.beta.iter().copied()).collect(),
            edges: cfg.graphs.iter().map(|&k| (k, graph_set.graph(k).num_edges())).collect(),
            loss_p: losses.loss_p,
            loss_m: Some(losses.loss_m),
        };
        log::info!(
            "iteration {iteration}: labeled {}, selected {}/{} agreeing, dev F1 {}",
            record.labeled,
            record.selected.len(),
            record.agreeing,
            record.dev.as_ref().map_or("NA".into(), |m| format!("{:.4}", m.f1))
        );
        let dev_f1 = record.dev.as_ref().map_or(f64::NEG_INFINITY, |m| m.f1);
        let exhausted = record.unlabeled == 0;
        history.iterations.push(record);
        if dev_f1 > best_dev {
            best_dev = dev_f1;
            best = (iteration, models.encoder.clone(), Some(models.mgat.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        if exhausted || stale >= cfg.patience {
            break;
        }
    }
    Ok(RunOutcome {
        encoder: best.1,
        mgat: best.2,
        best_iteration: best.0,
        history,
    })
}
