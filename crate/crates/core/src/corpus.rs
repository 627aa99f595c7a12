//! Relation-mention corpora: loading, validation, splitting and the relation vocabulary.
//!
//! Records are one JSON object per line using TACRED field names
//! (`token`/`tokens`, `subj_start`, `subj_end`, `obj_start`, `obj_end`,
//! `stanford_pos`, `stanford_ner`, `relation`). A compact `subj: [s, e]` /
//! `obj: [s, e]` form is accepted as well. A missing or null `relation` marks an
//! unlabeled record.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NO_RELATION: &str = "no_relation";

/// Inclusive token interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.start <= idx && idx <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    /// Signed distance from `idx` to the span, zero inside it.
    pub fn offset(&self, idx: usize) -> i64 {
        if idx < self.start {
            idx as i64 - self.start as i64
        } else if idx > self.end {
            idx as i64 - self.end as i64
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    pub ner: Vec<String>,
    pub subj: Span,
    pub obj: Span,
    pub relation: Option<String>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Validation {
            id: self.id.clone(),
            message,
        };
        let n = self.tokens.len();
        if n == 0 {
            return Err(fail("empty token list".into()));
        }
        if self.pos.len() != n || self.ner.len() != n {
            return Err(fail(format!(
                "tag length mismatch: {} tokens, {} pos, {} ner",
                n,
                self.pos.len(),
                self.ner.len()
            )));
        }
        for (name, span) in [("subject", &self.subj), ("object", &self.obj)] {
            if span.start > span.end || span.end >= n {
                return Err(fail(format!(
                    "{name} span [{}, {}] out of bounds for {n} tokens",
                    span.start, span.end
                )));
            }
        }
        if self.subj.overlaps(&self.obj) {
            return Err(fail("subject and object spans overlap".into()));
        }
        Ok(())
    }

    /// Copy with the relation label removed.
    pub fn unlabeled(&self) -> Sample {
        Sample {
            relation: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<String>,
    #[serde(alias = "token")]
    tokens: Vec<String>,
    #[serde(default)]
    subj_start: Option<usize>,
    #[serde(default)]
    subj_end: Option<usize>,
    #[serde(default)]
    obj_start: Option<usize>,
    #[serde(default)]
    obj_end: Option<usize>,
    #[serde(default)]
    subj: Option<[usize; 2]>,
    #[serde(default)]
    obj: Option<[usize; 2]>,
    #[serde(default, alias = "pos")]
    stanford_pos: Option<Vec<String>>,
    #[serde(default, alias = "ner")]
    stanford_ner: Option<Vec<String>>,
    #[serde(default)]
    relation: Option<String>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    token: &'a [String],
    subj_start: usize,
    subj_end: usize,
    obj_start: usize,
    obj_end: usize,
    stanford_pos: &'a [String],
    stanford_ner: &'a [String],
    relation: Option<&'a str>,
}

fn span_from(
    compact: Option<[usize; 2]>,
    start: Option<usize>,
    end: Option<usize>,
    what: &str,
    line: usize,
) -> Result<Span> {
    match (compact, start, end) {
        (Some([s, e]), _, _) => Ok(Span::new(s, e)),
        (None, Some(s), Some(e)) => Ok(Span::new(s, e)),
        _ => Err(Error::Parse {
            line,
            message: format!("missing {what} span"),
        }),
    }
}

/// Parse one JSONL record. `line` is 1-based and used for error messages and
/// as the fallback id.
pub fn parse_record(text: &str, line: usize) -> Result<Sample> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    let subj = span_from(raw.subj, raw.subj_start, raw.subj_end, "subject", line)?;
    let obj = span_from(raw.obj, raw.obj_start, raw.obj_end, "object", line)?;
    let n = raw.tokens.len();
    let sample = Sample {
        id: raw.id.unwrap_or_else(|| format!("line-{line}")),
        pos: raw.stanford_pos.unwrap_or_else(|| vec!["X".into(); n]),
        ner: raw.stanford_ner.unwrap_or_else(|| vec!["O".into(); n]),
        tokens: raw.tokens,
        subj,
        obj,
        relation: raw.relation,
    };
    sample.validate()?;
    Ok(sample)
}

pub fn parse_corpus(text: &str) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample = parse_record(line, i + 1)?;
        if !seen.insert(sample.id.clone()) {
            return Err(Error::Validation {
                id: sample.id,
                message: format!("duplicate id on line {}", i + 1),
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Sample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| Error::io(path, e))?);
        text.push('\n');
    }
    parse_corpus(&text)
}

pub fn to_jsonl(samples: &[Sample]) -> String {
    let mut out = String::new();
    for s in samples {
        let rec = OutRecord {
            id: &s.id,
            token: &s.tokens,
            subj_start: s.subj.start,
            subj_end: s.subj.end,
            obj_start: s.obj.start,
            obj_end: s.obj.end,
            stanford_pos: &s.pos,
            stanford_ner: &s.ner,
            relation: s.relation.as_deref(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: &Path, samples: &[Sample]) -> Result<()> {
    fs::write(path, to_jsonl(samples)).map_err(|e| Error::io(path, e))
}

/// Ordered relation labels; index 0 is always `no_relation`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct RelationVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for RelationVocab {
    fn from(labels: Vec<String>) -> Self {
        RelationVocab::from_labels(labels)
    }
}

impl From<RelationVocab> for Vec<String> {
    fn from(v: RelationVocab) -> Self {
        v.labels
    }
}

impl RelationVocab {
    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let rest: BTreeSet<String> = labels
            .into_iter()
            .map(Into::into)
            .filter(|l| l != NO_RELATION)
            .collect();
        let labels: Vec<String> = std::iter::once(NO_RELATION.to_string())
            .chain(rest)
            .collect();
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        RelationVocab { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn no_relation(&self) -> usize {
        0
    }
}

pub fn build_relation_vocab(samples: &[Sample]) -> RelationVocab {
    RelationVocab::from_labels(samples.iter().filter_map(|s| s.relation.clone()))
}

/// Gold labels of the unlabeled pool, kept apart from the training path.
/// Only aggregate diagnostics are exposed.
#[derive(Debug, Clone, Default)]
pub struct HiddenGold {
    labels: HashMap<String, String>,
}

impl HiddenGold {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Fraction of `(id, label)` assignments that match the hidden gold, `None`
    /// if nothing could be checked.
    pub fn precision<'a, I>(&self, assignments: I) -> Option<f64>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut checked = 0usize;
        let mut correct = 0usize;
        for (id, label) in assignments {
            if let Some(gold) = self.labels.get(id) {
                checked += 1;
                if gold == label {
                    correct += 1;
                }
            }
        }
        (checked > 0).then(|| correct as f64 / checked as f64)
    }
}

#[derive(Debug, Clone, Default)]
pub struct CorpusSplit {
    pub labeled: Vec<Sample>,
    pub unlabeled: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub test: Vec<Sample>,
    pub hidden_gold: HiddenGold,
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&f) || f.is_nan() {
        return Err(Error::Argument(format!("{name} must lie in [0, 1], got {f}")));
    }
    Ok(())
}

fn hide(samples: Vec<Sample>) -> (Vec<Sample>, HiddenGold) {
    let mut gold = HiddenGold::default();
    let hidden = samples
        .into_iter()
        .map(|s| {
            if let Some(r) = &s.relation {
                gold.labels.insert(s.id.clone(), r.clone());
            }
            s.unlabeled()
        })
        .collect();
    (hidden, gold)
}

fn shuffled(samples: &[Sample], seed: u64) -> Vec<Sample> {
    let mut order: Vec<&Sample> = samples.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order.into_iter().cloned().collect()
}

/// Partition `samples` into labeled / unlabeled / dev / test.
///
/// `round(labeled_frac * N)` samples become labeled, `round(unlabeled_frac * N)`
/// unlabeled, and the remainder is halved into dev (first half) and test.
/// Samples drawn into the labeled set must carry a label.
pub fn split_corpus(
    samples: &[Sample],
    labeled_frac: f64,
    unlabeled_frac: f64,
    seed: u64,
) -> Result<CorpusSplit> {
    check_fraction("labeled_frac", labeled_frac)?;
    check_fraction("unlabeled_frac", unlabeled_frac)?;
    if labeled_frac + unlabeled_frac > 1.0 + 1e-12 {
        return Err(Error::Argument(format!(
            "labeled_frac + unlabeled_frac = {} exceeds 1",
            labeled_frac + unlabeled_frac
        )));
    }
    let n = samples.len();
    let n_labeled = (labeled_frac * n as f64).round() as usize;
    let n_unlabeled = ((unlabeled_frac * n as f64).round() as usize).min(n - n_labeled);
    let mut order = shuffled(samples, seed);
    let rest = order.split_off(n_labeled + n_unlabeled);
    let unlabeled = order.split_off(n_labeled);
    let labeled = order;
    if let Some(s) = labeled.iter().find(|s| s.relation.is_none()) {
        return Err(Error::Validation {
            id: s.id.clone(),
            message: "sample drawn into the labeled set has no relation".into(),
        });
    }
    let mut dev = rest;
    let test = dev.split_off(dev.len() / 2);
    let (unlabeled, hidden_gold) = hide(unlabeled);
    Ok(CorpusSplit {
        labeled,
        unlabeled,
        dev,
        test,
        hidden_gold,
    })
}

/// Split a training file into labeled and unlabeled parts while dev and test
/// come from their own files.
pub fn split_with_eval(
    train: &[Sample],
    dev: Vec<Sample>,
    test: Vec<Sample>,
    labeled_frac: f64,
    unlabeled_frac: f64,
    seed: u64,
) -> Result<CorpusSplit> {
    let inner = split_corpus(train, labeled_frac, unlabeled_frac, seed)?;
    let split = CorpusSplit {
        dev,
        test,
        ..inner
    };
    split.check_disjoint()?;
    Ok(split)
}

impl CorpusSplit {
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in self
            .labeled
            .iter()
            .chain(&self.unlabeled)
            .chain(&self.dev)
            .chain(&self.test)
        {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Validation {
                    id: s.id.clone(),
                    message: "id appears in more than one split".into(),
                });
            }
        }
        Ok(())
    }

    /// Id lists per split, in split order.
    pub fn manifest(&self) -> BTreeMap<&'static str, Vec<String>> {
        let ids = |v: &[Sample]| v.iter().map(|s| s.id.clone()).collect();
        BTreeMap::from([
            ("labeled", ids(&self.labeled)),
            ("unlabeled", ids(&self.unlabeled)),
            ("dev", ids(&self.dev)),
            ("test", ids(&self.test)),
        ])
    }

    /// Writes one `<split>.ids` file per split into `dir`.
    pub fn write_manifest(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, ids) in self.manifest() {
            let path = dir.join(format!("{name}.ids"));
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            for id in ids {
                writeln!(f, "{id}").map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, rel: Option<&str>) -> Sample {
        Sample {
            id: id.into(),
            tokens: vec!["a".into(), "b".into(), "c".into()],
            pos: vec!["NN".into(); 3],
            ner: vec!["O".into(); 3],
            subj: Span::new(0, 0),
            obj: Span::new(2, 2),
            relation: rel.map(Into::into),
        }
    }

    #[test]
    fn minimal_record() {
        let s = parse_record(
            r#"{"tokens":["a","b"],"subj":[0,0],"obj":[1,1],"relation":"r1"}"#,
            1,
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.relation.as_deref(), Some("r1"));
        assert_eq!(s.id, "line-1");
    }

    #[test]
    fn tacred_field_names() {
        let s = parse_record(
            r#"{"id":"x9","token":["He","met","her"],"subj_start":0,"subj_end":0,"obj_start":2,"obj_end":2,"stanford_pos":["PRP","VBD","PRP"],"stanford_ner":["O","O","O"],"relation":null}"#,
            4,
        )
        .unwrap();
        assert_eq!(s.id, "x9");
        assert_eq!(s.relation, None);
        assert_eq!(s.pos[1], "VBD");
    }

    #[test]
    fn out_of_bounds_span_names_sample() {
        let err = parse_record(
            r#"{"id":"bad","tokens":["a","b"],"subj":[0,0],"obj":[5,5],"relation":"r1"}"#,
            3,
        )
        .unwrap_err();
        match err {
            Error::Validation { id, .. } => assert_eq!(id, "bad"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = "{\"tokens\":[\"a\",\"b\"],\"subj\":[0,0],\"obj\":[1,1]}\n{not json\n";
        match parse_corpus(text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overlapping_spans_rejected() {
        let mut s = sample("o", Some("r"));
        s.obj = Span::new(0, 1);
        assert!(s.validate().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = to_jsonl(&[sample("a", None), sample("a", None)]);
        assert!(matches!(
            parse_corpus(&text),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn split_counts_follow_fractions() {
        let samples: Vec<_> = (0..100).map(|i| sample(&format!("s{i:03}"), Some("r"))).collect();
        let split = split_corpus(&samples, 0.10, 0.50, 7).unwrap();
        assert_eq!(split.labeled.len(), 10);
        assert_eq!(split.unlabeled.len(), 50);
        assert_eq!(split.dev.len() + split.test.len(), 40);
        assert!(split.unlabeled.iter().all(|s| s.relation.is_none()));
        assert_eq!(split.hidden_gold.len(), 50);
        split.check_disjoint().unwrap();
    }

    #[test]
    fn degenerate_all_labeled() {
        let samples: Vec<_> = (0..20).map(|i| sample(&format!("s{i}"), Some("r"))).collect();
        let split = split_corpus(&samples, 1.0, 0.0, 1).unwrap();
        assert_eq!(split.labeled.len(), 20);
        assert!(split.unlabeled.is_empty());
        assert!(split.dev.is_empty() && split.test.is_empty());
    }

    #[test]
    fn split_is_deterministic() {
        let samples: Vec<_> = (0..50).map(|i| sample(&format!("s{i}"), Some("r"))).collect();
        let a = split_corpus(&samples, 0.2, 0.5, 11).unwrap();
        let b = split_corpus(&samples, 0.2, 0.5, 11).unwrap();
        assert_eq!(a.manifest(), b.manifest());
        let c = split_corpus(&samples, 0.2, 0.5, 12).unwrap();
        assert_ne!(a.manifest(), c.manifest());
    }

    #[test]
    fn bad_fractions() {
        let samples = vec![sample("a", Some("r"))];
        assert!(matches!(
            split_corpus(&samples, 1.5, 0.0, 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            split_corpus(&samples, -0.1, 0.0, 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            split_corpus(&samples, 0.7, 0.7, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn vocab_always_has_no_relation() {
        let v = build_relation_vocab(&[sample("a", Some(NO_RELATION)), sample("b", Some(NO_RELATION))]);
        assert_eq!(v.len(), 1);
        let v = build_relation_vocab(&[
            sample("a", Some("r2")),
            sample("b", Some("r1")),
            sample("c", Some(NO_RELATION)),
        ]);
        assert_eq!(v.labels(), &["no_relation", "r1", "r2"]);
        assert_eq!(v.index_of("r2"), Some(2));
    }

    #[test]
    fn hidden_gold_precision() {
        let samples: Vec<_> = (0..10).map(|i| sample(&format!("s{i}"), Some("r"))).collect();
        let split = split_corpus(&samples, 0.0, 1.0, 3).unwrap();
        let ids: Vec<String> = split.unlabeled.iter().map(|s| s.id.clone()).collect();
        let p = split
            .hidden_gold
            .precision(ids.iter().take(4).map(|id| (id.as_str(), "r")));
        assert_eq!(p, Some(1.0));
        assert_eq!(split.hidden_gold.precision([("zzz", "r")]), None);
    }
}
