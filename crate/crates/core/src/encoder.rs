//! Prediction module: a position-aware bidirectional GRU sentence encoder with
//! attention pooling and a softmax relation classifier.
//!
//! Each token is represented by the concatenation of its word, POS, NER and two
//! relative-position embeddings (offset to the subject and to the object). The
//! pooled vector `d` is the sentence embedding consumed by the reference graphs
//! and the graph attention module.

use std::collections::{BTreeSet, HashMap};

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::features::EmbeddingTable;
use crate::nn::{self, add_outer, sigmoid, slice1, slice1_mut, slice2, slice2_mut, Parameters};

pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub ner_dim: usize,
    pub position_dim: usize,
    pub hidden: usize,
    pub max_offset: usize,
    pub dropout: f64,
    pub fine_tune_words: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            word_dim: 300,
            pos_dim: 30,
            ner_dim: 30,
            position_dim: 30,
            hidden: 200,
            max_offset: 100,
            dropout: 0.5,
            fine_tune_words: true,
        }
    }
}

impl EncoderConfig {
    pub fn input_dim(&self) -> usize {
        self.word_dim + self.pos_dim + self.ner_dim + 2 * self.position_dim
    }

    /// Dimension of the sentence embedding.
    pub fn model_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.word_dim == 0 {
            return Err(Error::Argument("hidden and word_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Argument(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// String-to-index vocabulary; index 0 is reserved for unknown entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(items: Vec<String>) -> Self {
        let index = items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Vocab { items, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.items
    }
}

impl Vocab {
    pub fn build<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = entries.into_iter().map(Into::into).collect();
        let items: Vec<String> = std::iter::once(UNK.to_string())
            .chain(set.into_iter().filter(|s| s != UNK))
            .collect();
        Vocab::from(items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, s: &str) -> usize {
        self.index.get(s).copied().unwrap_or(0)
    }

    pub fn item(&self, i: usize) -> &str {
        &self.items[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderVocabs {
    pub words: Vocab,
    pub pos: Vocab,
    pub ner: Vocab,
}

impl EncoderVocabs {
    pub fn build<'a, I>(samples: I) -> Self
    where
        I: IntoIterator<Item = &'a Sample> + Clone,
    {
        let all = samples.clone().into_iter();
        EncoderVocabs {
            words: Vocab::build(all.flat_map(|s| s.tokens.iter().map(|t| t.to_lowercase()))),
            pos: Vocab::build(samples.clone().into_iter().flat_map(|s| s.pos.iter().cloned())),
            ner: Vocab::build(samples.into_iter().flat_map(|s| s.ner.iter().cloned())),
        }
    }
}

/// Index form of a sample, ready for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub words: Vec<usize>,
    pub pos: Vec<usize>,
    pub ner: Vec<usize>,
    pub subj_offset: Vec<usize>,
    pub obj_offset: Vec<usize>,
}

impl PreparedSample {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub wz: Array2<f64>,
    pub wr: Array2<f64>,
    pub wn: Array2<f64>,
    pub uz: Array2<f64>,
    pub ur: Array2<f64>,
    pub un: Array2<f64>,
    pub bz: Array1<f64>,
    pub br: Array1<f64>,
    pub bn: Array1<f64>,
    pub bhn: Array1<f64>,
}

impl GruParams {
    fn init<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        GruParams {
            wz: nn::xavier(rng, hidden, input),
            wr: nn::xavier(rng, hidden, input),
            wn: nn::xavier(rng, hidden, input),
            uz: nn::xavier(rng, hidden, hidden),
            ur: nn::xavier(rng, hidden, hidden),
            un: nn::xavier(rng, hidden, hidden),
            bz: Array1::zeros(hidden),
            br: Array1::zeros(hidden),
            bn: Array1::zeros(hidden),
            bhn: Array1::zeros(hidden),
        }
    }

    fn zeros_like(&self) -> Self {
        GruParams {
            wz: Array2::zeros(self.wz.raw_dim()),
            wr: Array2::zeros(self.wr.raw_dim()),
            wn: Array2::zeros(self.wn.raw_dim()),
            uz: Array2::zeros(self.uz.raw_dim()),
            ur: Array2::zeros(self.ur.raw_dim()),
            un: Array2::zeros(self.un.raw_dim()),
            bz: Array1::zeros(self.bz.raw_dim()),
            br: Array1::zeros(self.br.raw_dim()),
            bn: Array1::zeros(self.bn.raw_dim()),
            bhn: Array1::zeros(self.bhn.raw_dim()),
        }
    }

    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            slice2(&self.wz),
            slice2(&self.wr),
            slice2(&self.wn),
            slice2(&self.uz),
            slice2(&self.ur),
            slice2(&self.un),
            slice1(&self.bz),
            slice1(&self.br),
            slice1(&self.bn),
            slice1(&self.bhn),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            slice2_mut(&mut self.wz),
            slice2_mut(&mut self.wr),
            slice2_mut(&mut self.wn),
            slice2_mut(&mut self.uz),
            slice2_mut(&mut self.ur),
            slice2_mut(&mut self.un),
            slice1_mut(&mut self.bz),
            slice1_mut(&mut self.br),
            slice1_mut(&mut self.bn),
            slice1_mut(&mut self.bhn),
        ]
    }
}

struct GruStep {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    z: Array1<f64>,
    r: Array1<f64>,
    n: Array1<f64>,
    hn: Array1<f64>,
}

impl GruParams {
    fn step(&self, x: Array1<f64>, h_prev: Array1<f64>) -> (Array1<f64>, GruStep) {
        let z = (self.wz.dot(&x) + self.uz.dot(&h_prev) + &self.bz).mapv(sigmoid);
        let r = (self.wr.dot(&x) + self.ur.dot(&h_prev) + &self.br).mapv(sigmoid);
        let hn = self.un.dot(&h_prev) + &self.bhn;
        let n = (self.wn.dot(&x) + &self.bn + &r * &hn).mapv(f64::tanh);
        let h = &n + &(&z * &(&h_prev - &n));
        (
            h,
            GruStep {
                x,
                h_prev,
                z,
                r,
                n,
                hn,
            },
        )
    }

    /// Accumulates parameter gradients; returns `(dx, dh_prev)`.
    fn step_backward(
        &self,
        c: &GruStep,
        dh: &Array1<f64>,
        g: &mut GruParams,
    ) -> (Array1<f64>, Array1<f64>) {
        let dn = dh * &c.z.mapv(|z| 1.0 - z);
        let dz = dh * &(&c.h_prev - &c.n);
        let mut dh_prev = dh * &c.z;
        let dan = &dn * &c.n.mapv(|n| 1.0 - n * n);
        let dr = &dan * &c.hn;
        let dhn = &dan * &c.r;
        let daz = &dz * &c.z.mapv(|z| z * (1.0 - z));
        let dar = &dr * &c.r.mapv(|r| r * (1.0 - r));

        add_outer(&mut g.wz, daz.view(), c.x.view());
        add_outer(&mut g.uz, daz.view(), c.h_prev.view());
        g.bz += &daz;
        add_outer(&mut g.wr, dar.view(), c.x.view());
        add_outer(&mut g.ur, dar.view(), c.h_prev.view());
        g.br += &dar;
        add_outer(&mut g.wn, dan.view(), c.x.view());
        g.bn += &dan;
        add_outer(&mut g.un, dhn.view(), c.h_prev.view());
        g.bhn += &dhn;

        let dx = self.wz.t().dot(&daz) + self.wr.t().dot(&dar) + self.wn.t().dot(&dan);
        dh_prev += &self.uz.t().dot(&daz);
        dh_prev += &self.ur.t().dot(&dar);
        dh_prev += &self.un.t().dot(&dhn);
        (dx, dh_prev)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub word: Array2<f64>,
    pub pos: Array2<f64>,
    pub ner: Array2<f64>,
    pub subj_position: Array2<f64>,
    pub obj_position: Array2<f64>,
    pub forward: GruParams,
    pub backward: GruParams,
    pub attention: Array1<f64>,
    pub classifier: Array2<f64>,
    pub classifier_bias: Array1<f64>,
}

impl EncoderParams {
    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            word: Array2::zeros(self.word.raw_dim()),
            pos: Array2::zeros(self.pos.raw_dim()),
            ner: Array2::zeros(self.ner.raw_dim()),
            subj_position: Array2::zeros(self.subj_position.raw_dim()),
            obj_position: Array2::zeros(self.obj_position.raw_dim()),
            forward: self.forward.zeros_like(),
            backward: self.backward.zeros_like(),
            attention: Array1::zeros(self.attention.raw_dim()),
            classifier: Array2::zeros(self.classifier.raw_dim()),
            classifier_bias: Array1::zeros(self.classifier_bias.raw_dim()),
        }
    }
}

impl Parameters for EncoderParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = vec![
            slice2(&self.word),
            slice2(&self.pos),
            slice2(&self.ner),
            slice2(&self.subj_position),
            slice2(&self.obj_position),
        ];
        v.extend(self.forward.tensors());
        v.extend(self.backward.tensors());
        v.extend([
            slice1(&self.attention),
            slice2(&self.classifier),
            slice1(&self.classifier_bias),
        ]);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![
            slice2_mut(&mut self.word),
            slice2_mut(&mut self.pos),
            slice2_mut(&mut self.ner),
            slice2_mut(&mut self.subj_position),
            slice2_mut(&mut self.obj_position),
        ];
        v.extend(self.forward.tensors_mut());
        v.extend(self.backward.tensors_mut());
        v.extend([
            slice1_mut(&mut self.attention),
            slice2_mut(&mut self.classifier),
            slice1_mut(&mut self.classifier_bias),
        ]);
        v
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub struct EncoderCache {
    input: PreparedSample,
    fwd: Vec<GruStep>,
    bwd: Vec<GruStep>,
    states: Vec<Array1<f64>>,
    pub attention: Vec<f64>,
    pub embedding: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub vocabs: EncoderVocabs,
    pub params: EncoderParams,
}

impl Encoder {
    pub fn new<R: Rng>(
        config: EncoderConfig,
        vocabs: EncoderVocabs,
        num_relations: usize,
        pretrained: Option<&EmbeddingTable>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(t) = pretrained {
            if t.dim() != config.word_dim {
                return Err(Error::Argument(format!(
                    "pretrained vectors have dim {}, encoder expects {}",
                    t.dim(),
                    config.word_dim
                )));
            }
        }
        let mut word = nn::xavier(rng, vocabs.words.len(), config.word_dim);
        word.row_mut(0).fill(0.0);
        if let Some(t) = pretrained {
            for i in 1..vocabs.words.len() {
                if let Some(v) = t.get(vocabs.words.item(i)) {
                    word.row_mut(i).assign(&ArrayView1::from(v));
                }
            }
        }
        let positions = 2 * config.max_offset + 1;
        let input = config.input_dim();
        let h = config.hidden;
        let params = EncoderParams {
            word,
            pos: nn::xavier(rng, vocabs.pos.len(), config.pos_dim),
            ner: nn::xavier(rng, vocabs.ner.len(), config.ner_dim),
            subj_position: nn::xavier(rng, positions, config.position_dim),
            obj_position: nn::xavier(rng, positions, config.position_dim),
            forward: GruParams::init(rng, input, h),
            backward: GruParams::init(rng, input, h),
            attention: nn::uniform_vec(rng, 2 * h, (1.0 / (2 * h) as f64).sqrt()),
            classifier: nn::xavier(rng, num_relations, 2 * h),
            classifier_bias: Array1::zeros(num_relations),
        };
        Ok(Encoder {
            config,
            vocabs,
            params,
        })
    }

    pub fn num_relations(&self) -> usize {
        self.params.classifier_bias.len()
    }

    pub fn prepare(&self, sample: &Sample) -> PreparedSample {
        let clip = |off: i64| {
            let m = self.config.max_offset as i64;
            (off.clamp(-m, m) + m) as usize
        };
        let n = sample.len();
        PreparedSample {
            words: sample
                .tokens
                .iter()
                .map(|t| self.vocabs.words.get(&t.to_lowercase()))
                .collect(),
            pos: sample.pos.iter().map(|t| self.vocabs.pos.get(t)).collect(),
            ner: sample.ner.iter().map(|t| self.vocabs.ner.get(t)).collect(),
            subj_offset: (0..n).map(|i| clip(sample.subj.offset(i))).collect(),
            obj_offset: (0..n).map(|i| clip(sample.obj.offset(i))).collect(),
        }
    }

    fn token_input(&self, s: &PreparedSample, t: usize) -> Array1<f64> {
        let p = &self.params;
        let mut x = Array1::zeros(self.config.input_dim());
        let mut at = 0;
        for row in [
            p.word.row(s.words[t]),
            p.pos.row(s.pos[t]),
            p.ner.row(s.ner[t]),
            p.subj_position.row(s.subj_offset[t]),
            p.obj_position.row(s.obj_offset[t]),
        ] {
            x.slice_mut(s![at..at + row.len()]).assign(&row);
            at += row.len();
        }
        x
    }

    pub fn forward(&self, s: &PreparedSample) -> EncoderCache {
        let n = s.len();
        let h = self.config.hidden;
        let mut fwd = Vec::with_capacity(n);
        let mut prev = Array1::zeros(h);
        let mut fwd_states = Vec::with_capacity(n);
        for t in 0..n {
            let (next, step) = self.params.forward.step(self.token_input(s, t), prev);
            fwd_states.push(next.clone());
            fwd.push(step);
            prev = next;
        }
        let mut bwd = Vec::with_capacity(n);
        let mut bwd_states = vec![Array1::zeros(h); n];
        let mut prev = Array1::zeros(h);
        for t in (0..n).rev() {
            let (next, step) = self.params.backward.step(self.token_input(s, t), prev);
            bwd_states[t] = next.clone();
            bwd.push(step);
            prev = next;
        }
        let states: Vec<Array1<f64>> = fwd_states
            .into_iter()
            .zip(bwd_states)
            .map(|(f, b)| ndarray::concatenate![ndarray::Axis(0), f, b])
            .collect();
        let scores: Vec<f64> = states.iter().map(|st| self.params.attention.dot(st)).collect();
        let attention = nn::softmax_slice(&scores);
        let mut embedding = Array1::zeros(2 * h);
        for (a, st) in attention.iter().zip(&states) {
            embedding.scaled_add(*a, st);
        }
        EncoderCache {
            input: s.clone(),
            fwd,
            bwd,
            states,
            attention,
            embedding,
        }
    }

    /// Sentence embedding `d`.
    pub fn encode(&self, s: &PreparedSample) -> Array1<f64> {
        self.forward(s).embedding
    }

    pub fn encode_batch(&self, batch: &[PreparedSample]) -> Vec<Array1<f64>> {
        batch.iter().map(|s| self.encode(s)).collect()
    }

    pub fn logits(&self, embedding: &Array1<f64>) -> Array1<f64> {
        self.params.classifier.dot(embedding) + &self.params.classifier_bias
    }

    /// Relation distribution from a sentence embedding.
    pub fn predict_p(&self, embedding: &Array1<f64>) -> Vec<f64> {
        nn::softmax(self.logits(embedding).view()).to_vec()
    }

    /// Backpropagates `d_embedding` (gradient w.r.t. `d`) through the encoder.
    pub fn backward(&self, cache: &EncoderCache, d_embedding: &Array1<f64>, g: &mut EncoderParams) {
        let n = cache.states.len();
        let h = self.config.hidden;
        let p = &self.params;
        // attention pooling
        let d_alpha: Vec<f64> = cache.states.iter().map(|st| d_embedding.dot(st)).collect();
        let d_scores = nn::softmax_backward(&cache.attention, &d_alpha);
        let mut d_states: Vec<Array1<f64>> = Vec::with_capacity(n);
        for t in 0..n {
            let mut ds = d_embedding * cache.attention[t];
            ds.scaled_add(d_scores[t], &p.attention);
            g.attention.scaled_add(d_scores[t], &cache.states[t]);
            d_states.push(ds);
        }
        let mut dx: Vec<Array1<f64>> = vec![Array1::zeros(self.config.input_dim()); n];
        // forward direction, reverse time
        let mut carry = Array1::zeros(h);
        for t in (0..n).rev() {
            let dh = &d_states[t].slice(s![..h]) + &carry;
            let (dxt, dprev) = p.forward.step_backward(&cache.fwd[t], &dh, &mut g.forward);
            dx[t] += &dxt;
            carry = dprev;
        }
        // backward direction: bwd[k] processed token n-1-k
        let mut carry = Array1::zeros(h);
        for k in (0..n).rev() {
            let t = n - 1 - k;
            let dh = &d_states[t].slice(s![h..]) + &carry;
            let (dxt, dprev) = p.backward.step_backward(&cache.bwd[k], &dh, &mut g.backward);
            dx[t] += &dxt;
            carry = dprev;
        }
        let s = &cache.input;
        let c = &self.config;
        for (t, dxt) in dx.iter().enumerate() {
            let mut at = 0;
            let pieces = [
                (s.words[t], c.word_dim),
                (s.pos[t], c.pos_dim),
                (s.ner[t], c.ner_dim),
                (s.subj_offset[t], c.position_dim),
                (s.obj_offset[t], c.position_dim),
            ];
            for (k, (row, dim)) in pieces.into_iter().enumerate() {
                let part = dxt.slice(s![at..at + dim]);
                at += dim;
                let table = match k {
                    0 => {
                        if !c.fine_tune_words || row == 0 {
                            continue;
                        }
                        &mut g.word
                    }
                    1 => &mut g.pos,
                    2 => &mut g.ner,
                    3 => &mut g.subj_position,
                    _ => &mut g.obj_position,
                };
                table.row_mut(row).scaled_add(1.0, &part);
            }
        }
    }

    /// Mean cross-entropy of the classifier over `batch` and its gradient.
    ///
    /// Dropout on the sentence embedding is applied when `dropout_rng` is given
    /// and the configured rate is positive.
    pub fn loss_and_grad<R: Rng>(
        &self,
        batch: &[(&PreparedSample, usize)],
        mut dropout_rng: Option<&mut R>,
        grads: &mut EncoderParams,
    ) -> f64 {
        grads.fill_zero();
        if batch.is_empty() {
            return 0.0;
        }
        let scale = 1.0 / batch.len() as f64;
        let rate = self.config.dropout;
        let mut loss = 0.0;
        for &(sample, gold) in batch {
            let cache = self.forward(sample);
            let mask: Option<Array1<f64>> = match dropout_rng.as_deref_mut() {
                Some(rng) if rate > 0.0 => Some(Array1::from_shape_fn(cache.embedding.len(), |_| {
                    if rng.gen::<f64>() < rate {
                        0.0
                    } else {
                        1.0 / (1.0 - rate)
                    }
                })),
                _ => None,
            };
            let d = match &mask {
                Some(m) => &cache.embedding * m,
                None => cache.embedding.clone(),
            };
            let probs = nn::softmax(self.logits(&d).view());
            loss += nn::neg_log(probs[gold]) * scale;
            let mut dlogits = probs;
            dlogits[gold] -= 1.0;
            dlogits *= scale;
            add_outer(&mut grads.classifier, dlogits.view(), d.view());
            grads.classifier_bias += &dlogits;
            let mut dd = self.params.classifier.t().dot(&dlogits);
            if let Some(m) = &mask {
                dd *= m;
            }
            self.backward(&cache, &dd, grads);
        }
        loss
    }

    /// Mean cross-entropy without dropout.
    pub fn loss(&self, batch: &[(&PreparedSample, usize)]) -> f64 {
        let probs: Vec<(Vec<f64>, usize)> = batch
            .iter()
            .map(|&(s, gold)| (self.predict_p(&self.encode(s)), gold))
            .collect();
        loss_p(probs.iter().map(|(p, g)| (p.as_slice(), *g)))
    }
}

/// Mean cross-entropy of predicted distributions against gold indices.
pub fn loss_p<'a, I>(rows: I) -> f64
where
    I: IntoIterator<Item = (&'a [f64], usize)>,
{
    nn::mean_cross_entropy(rows)
}
