//! Synthetic relation corpora with a known lexical structure.
//!
//! Every relation owns a verb-phrase lexicon and subject/object entity
//! lexicons whose words carry fixed NER types. Sentences come in two shapes:
//! adjacent entities with no verb between them, and separated entities joined
//! by one of the relation's verb phrases (optionally inflected, optionally
//! passive). A `noise_rate` fraction of separated samples borrow a verb phrase
//! from another relation.
//!
//! Alongside the samples the generator reports, from its own construction
//! records, every pair of samples that the entity and verb rules link.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Sample, Span};
use crate::error::{Error, Result};
use crate::features::lemmatize;

const NER_TYPES: [&str; 6] = ["PERSON", "ORGANIZATION", "LOCATION", "TITLE", "DATE", "MISC"];
const PARTICLES: [&str; 7] = ["into", "with", "from", "by", "for", "on", "at"];
const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "m", "p", "t", "v", "z", "br", "gl", "tr", "sn"];
const VOWELS: [&str; 4] = ["a", "o", "u", "i"];
const CODAS: [&str; 6] = ["nk", "rt", "mp", "st", "lk", "rn"];
const NOUN_CONSONANTS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v"];
const NOUN_VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const PRE_FILLERS: [(&str, &str); 5] = [
    ("the", "DT"),
    ("reports", "NNS"),
    ("yesterday", "NN"),
    ("officials", "NNS"),
    ("new", "JJ"),
];
const POST_FILLERS: [(&str, &str); 6] = [
    ("said", "VBD"),
    ("in", "IN"),
    ("the", "DT"),
    ("city", "NN"),
    ("today", "NN"),
    ("again", "RB"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbEntry {
    pub lemma: String,
    pub particle: Option<String>,
}

impl VerbEntry {
    /// The normalized phrase the verb rule compares.
    pub fn phrase(&self) -> String {
        match &self.particle {
            Some(p) => format!("{} {}", self.lemma, p),
            None => self.lemma.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityEntry {
    pub token: String,
    pub ner: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationLexicon {
    pub name: String,
    pub verbs: Vec<VerbEntry>,
    pub subjects: Vec<EntityEntry>,
    pub objects: Vec<EntityEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub relations: Vec<RelationLexicon>,
    pub samples_per_relation: usize,
    pub adjacency_prob: f64,
    pub noise_rate: f64,
    pub seed: u64,
}

fn candidate_lemma(i: usize) -> String {
    let o = ONSETS[i % ONSETS.len()];
    let v = VOWELS[(i / ONSETS.len()) % VOWELS.len()];
    let c = CODAS[(i / (ONSETS.len() * VOWELS.len())) % CODAS.len()];
    format!("{o}{v}{c}")
}

fn verb_forms(lemma: &str) -> [String; 4] {
    [
        lemma.to_string(),
        format!("{lemma}s"),
        format!("{lemma}ed"),
        format!("{lemma}ing"),
    ]
}

/// The first `n` invented verb lemmas whose inflections all normalize back to
/// the lemma (real irregular verbs such as "born" are skipped).
pub fn verb_lemmas(n: usize) -> Vec<String> {
    let space = ONSETS.len() * VOWELS.len() * CODAS.len();
    let out: Vec<String> = (0..space)
        .map(candidate_lemma)
        .filter(|l| verb_forms(l).iter().all(|f| &lemmatize(f) == l))
        .take(n)
        .collect();
    assert!(out.len() == n, "only {} invented verbs available", out.len());
    out
}

fn noun(i: usize) -> String {
    let n = NOUN_CONSONANTS.len();
    let m = NOUN_VOWELS.len();
    format!(
        "{}{}{}{}",
        NOUN_CONSONANTS[i % n],
        NOUN_VOWELS[(i / n) % m],
        NOUN_CONSONANTS[(i / (n * m)) % n],
        NOUN_VOWELS[(i / (n * m * n)) % m]
    )
}

impl SynthSpec {
    /// Builds disjoint lexicons of the given sizes.
    pub fn with_sizes(
        num_relations: usize,
        samples_per_relation: usize,
        verbs_per_relation: usize,
        entities_per_relation: usize,
        adjacency_prob: f64,
        noise_rate: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1e71_c0de);
        let mut relations = Vec::with_capacity(num_relations);
        let lemmas = verb_lemmas(num_relations * verbs_per_relation);
        let mut verb_idx = 0;
        let mut noun_idx = 0;
        for r in 0..num_relations {
            let verbs = (0..verbs_per_relation)
                .map(|_| {
                    let lemma = lemmas[verb_idx].clone();
                    verb_idx += 1;
                    let particle = rng
                        .gen_bool(0.6)
                        .then(|| PARTICLES.choose(&mut rng).expect("nonempty").to_string());
                    VerbEntry { lemma, particle }
                })
                .collect();
            let mut entities = |offset: usize| -> Vec<EntityEntry> {
                (0..entities_per_relation)
                    .map(|_| {
                        let token = noun(noun_idx);
                        noun_idx += 1;
                        let t = (r + offset + rng.gen_range(0..2)) % NER_TYPES.len();
                        EntityEntry {
                            token,
                            ner: NER_TYPES[t].to_string(),
                        }
                    })
                    .collect()
            };
            let subjects = entities(0);
            let objects = entities(2);
            relations.push(RelationLexicon {
                name: format!("rel_{r}"),
                verbs,
                subjects,
                objects,
            });
        }
        SynthSpec {
            relations,
            samples_per_relation,
            adjacency_prob,
            noise_rate,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.relations.is_empty() {
            return Err(Error::Argument("no relations in synthetic spec".into()));
        }
        for r in &self.relations {
            if r.verbs.is_empty() || r.subjects.is_empty() || r.objects.is_empty() {
                return Err(Error::Argument(format!("empty lexicon for relation {}", r.name)));
            }
        }
        for (name, p) in [("adjacency_prob", self.adjacency_prob), ("noise_rate", self.noise_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Argument(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        let mut seen = HashSet::new();
        for r in &self.relations {
            for w in r
                .verbs
                .iter()
                .map(|v| v.lemma.as_str())
                .chain(r.subjects.iter().map(|e| e.token.as_str()))
                .chain(r.objects.iter().map(|e| e.token.as_str()))
            {
                if !seen.insert(w) {
                    return Err(Error::Argument(format!("lexicon entry {w:?} is shared")));
                }
            }
        }
        Ok(())
    }
}

/// What the generator put into one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthRecord {
    pub relation: usize,
    pub adjacent: bool,
    pub ner_types: BTreeSet<String>,
    pub entity_tokens: BTreeSet<String>,
    pub verb_phrase: Option<String>,
    pub noisy: bool,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub samples: Vec<Sample>,
    pub records: Vec<SynthRecord>,
}

struct Builder {
    tokens: Vec<String>,
    pos: Vec<String>,
    ner: Vec<String>,
}

impl Builder {
    fn push(&mut self, token: &str, pos: &str, ner: &str) -> usize {
        self.tokens.push(token.to_string());
        self.pos.push(pos.to_string());
        self.ner.push(ner.to_string());
        self.tokens.len() - 1
    }

    fn fillers<R: Rng>(&mut self, rng: &mut R, pool: &[(&str, &str)], max: usize) {
        for _ in 0..rng.gen_range(0..=max) {
            let (w, t) = pool.choose(rng).expect("nonempty");
            self.push(w, t, "O");
        }
    }

    /// Verb phrase in one of several surface forms.
    fn verb<R: Rng>(&mut self, rng: &mut R, v: &VerbEntry) {
        match rng.gen_range(0..5) {
            0 | 1 => {
                self.push(&format!("{}ed", v.lemma), "VBD", "O");
            }
            2 => {
                self.push(&format!("{}s", v.lemma), "VBZ", "O");
            }
            3 => {
                self.push("is", "VBZ", "O");
                self.push(&format!("{}ing", v.lemma), "VBG", "O");
            }
            _ => {
                self.push("was", "VBD", "O");
                self.push(&format!("{}ed", v.lemma), "VBN", "O");
            }
        }
        if let Some(p) = &v.particle {
            self.push(p, "IN", "O");
        }
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let num_rel = spec.relations.len();
    let mut samples = Vec::new();
    let mut records = Vec::new();
    for k in 0..spec.samples_per_relation * num_rel {
        let r = k % num_rel;
        let lex = &spec.relations[r];
        let subj = lex.subjects.choose(&mut rng).expect("validated");
        let obj = lex.objects.choose(&mut rng).expect("validated");
        let adjacent = rng.gen_bool(spec.adjacency_prob);
        let subj_first = rng.gen_bool(if adjacent { 0.7 } else { 0.8 });
        let mut b = Builder {
            tokens: Vec::new(),
            pos: Vec::new(),
            ner: Vec::new(),
        };
        b.fillers(&mut rng, &PRE_FILLERS, 2);
        let (first, second) = if subj_first { (subj, obj) } else { (obj, subj) };
        let first_at = b.push(&first.token, "NNP", &first.ner);
        let mut verb_phrase = None;
        let mut noisy = false;
        if !adjacent {
            let source = if num_rel > 1 && rng.gen_bool(spec.noise_rate) {
                noisy = true;
                let other = (r + rng.gen_range(1..num_rel)) % num_rel;
                &spec.relations[other]
            } else {
                lex
            };
            let v = source.verbs.choose(&mut rng).expect("validated");
            b.verb(&mut rng, v);
            if rng.gen_bool(0.5) {
                b.push("the", "DT", "O");
            }
            verb_phrase = Some(v.phrase());
        }
        let second_at = b.push(&second.token, "NNP", &second.ner);
        b.fillers(&mut rng, &POST_FILLERS, 3);
        let (s_at, o_at) = if subj_first {
            (first_at, second_at)
        } else {
            (second_at, first_at)
        };
        samples.push(Sample {
            id: format!("syn-{k:05}"),
            tokens: b.tokens,
            pos: b.pos,
            ner: b.ner,
            subj: Span::new(s_at, s_at),
            obj: Span::new(o_at, o_at),
            relation: Some(lex.name.clone()),
        });
        records.push(SynthRecord {
            relation: r,
            adjacent,
            ner_types: [subj.ner.clone(), obj.ner.clone()].into_iter().collect(),
            entity_tokens: [subj.token.clone(), obj.token.clone()].into_iter().collect(),
            verb_phrase,
            noisy,
        });
    }
    Ok(SynthCorpus { samples, records })
}

impl SynthCorpus {
    fn declared_pairs<F>(&self, labeled: &HashSet<&str>, linked: F) -> BTreeSet<(String, String)>
    where
        F: Fn(&SynthRecord, &SynthRecord) -> bool,
    {
        let mut out = BTreeSet::new();
        for a in 0..self.samples.len() {
            for b in a + 1..self.samples.len() {
                let (ia, ib) = (&self.samples[a].id, &self.samples[b].id);
                if !labeled.contains(ia.as_str()) && !labeled.contains(ib.as_str()) {
                    continue;
                }
                if linked(&self.records[a], &self.records[b]) {
                    let pair = if ia < ib { (ia.clone(), ib.clone()) } else { (ib.clone(), ia.clone()) };
                    out.insert(pair);
                }
            }
        }
        out
    }

    /// Entity-rule pairs with at least one endpoint in `labeled`.
    pub fn entity_pairs(&self, labeled: &HashSet<&str>) -> BTreeSet<(String, String)> {
        self.declared_pairs(labeled, |a, b| {
            a.adjacent
                && b.adjacent
                && (a.ner_types == b.ner_types || !a.entity_tokens.is_disjoint(&b.entity_tokens))
        })
    }

    /// Verb-rule pairs with at least one endpoint in `labeled`.
    pub fn verb_pairs(&self, labeled: &HashSet<&str>) -> BTreeSet<(String, String)> {
        self.declared_pairs(labeled, |a, b| {
            matches!((&a.verb_phrase, &b.verb_phrase), (Some(x), Some(y)) if x == y)
        })
    }

    /// Ground-truth edge list in the reference-graph export format, treating
    /// every sample as labeled.
    pub fn edge_list(&self) -> String {
        let all: HashSet<&str> = self.samples.iter().map(|s| s.id.as_str()).collect();
        let mut out = String::new();
        for (kind, pairs) in [("entity", self.entity_pairs(&all)), ("verb", self.verb_pairs(&all))] {
            for (a, b) in pairs {
                let _ = writeln!(out, "{kind}\t{a}\t{b}\t1");
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::corpus::write_corpus(&dir.join("corpus.jsonl"), &self.samples)?;
        let edges = dir.join("edges.tsv");
        std::fs::write(&edges, self.edge_list()).map_err(|e| Error::io(&edges, e))
    }
}
