//! Lexical signatures used by the entity and verb reference graphs, plus the
//! pretrained word-vector table.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use crate::corpus::{Sample, Span};
use crate::error::{Error, Result};

const IRREGULAR_VERBS: &str = include_str!("../resources/irregular_verbs.txt");
const AUXILIARIES: [&str; 3] = ["be", "have", "do"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySignature {
    pub adjacent: bool,
    pub ner_types: BTreeSet<String>,
    pub entity_tokens: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbSignature {
    pub phrase: Option<String>,
}

/// Token indices strictly between the two entity spans.
pub fn gap(subj: &Span, obj: &Span) -> std::ops::Range<usize> {
    if subj.end < obj.start {
        subj.end + 1..obj.start
    } else if obj.end < subj.start {
        obj.end + 1..subj.start
    } else {
        0..0
    }
}

/// `window` is the number of intervening tokens still counted as adjacent (0 =
/// strictly contiguous spans).
pub fn entity_signature(sample: &Sample, window: usize) -> EntitySignature {
    let between = gap(&sample.subj, &sample.obj).len();
    // head word of a span is its last token
    let ner_types = [sample.subj.end, sample.obj.end]
        .into_iter()
        .map(|i| sample.ner[i].clone())
        .collect();
    let entity_tokens = [sample.subj, sample.obj]
        .iter()
        .flat_map(|span| span.start..=span.end)
        .map(|i| sample.tokens[i].to_lowercase())
        .collect();
    EntitySignature {
        adjacent: between <= window,
        ner_types,
        entity_tokens,
    }
}

pub fn is_verb_tag(tag: &str) -> bool {
    tag.starts_with("VB") || tag == "VERB" || tag == "AUX"
}

pub fn is_particle_tag(tag: &str) -> bool {
    matches!(tag, "RP" | "IN" | "TO" | "ADP" | "PART")
}

/// First verb run between the entities, with leading auxiliaries dropped when a
/// main verb follows, plus one trailing particle or preposition.
pub fn verb_signature(sample: &Sample) -> VerbSignature {
    let between = gap(&sample.subj, &sample.obj);
    let Some(first) = between.clone().find(|&i| is_verb_tag(&sample.pos[i])) else {
        return VerbSignature { phrase: None };
    };
    let mut end = first;
    while end + 1 < between.end && is_verb_tag(&sample.pos[end + 1]) {
        end += 1;
    }
    let mut words: Vec<String> = (first..=end)
        .map(|i| lemmatize(&sample.tokens[i]))
        .collect();
    let aux = words
        .iter()
        .take_while(|w| AUXILIARIES.contains(&w.as_str()))
        .count();
    if aux < words.len() {
        words.drain(..aux);
    }
    if end + 1 < between.end && is_particle_tag(&sample.pos[end + 1]) {
        words.push(sample.tokens[end + 1].to_lowercase());
    }
    VerbSignature {
        phrase: Some(words.join(" ")),
    }
}

fn irregular_map() -> &'static HashMap<&'static str, &'static str> {
    static MAP: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    MAP.get_or_init(|| {
        IRREGULAR_VERBS
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .filter_map(|l| {
                let mut parts = l.split_whitespace();
                Some((parts.next()?, parts.next()?))
            })
            .collect()
    })
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn undouble(stem: &str) -> &str {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && !is_vowel(b[n - 1]) && !b"lsfzd".contains(&b[n - 1]) {
        &stem[..n - 1]
    } else {
        stem
    }
}

/// Deterministic suffix-stripping normalizer. Distinct inflections of a regular
/// verb map to the same stem; the stem is not always a dictionary lemma.
pub fn lemmatize(word: &str) -> String {
    let w = word.to_lowercase();
    if let Some(lemma) = irregular_map().get(w.as_str()) {
        return (*lemma).to_string();
    }
    let stem: String = if w.len() > 4 && (w.ends_with("ies") || w.ends_with("ied")) {
        format!("{}y", &w[..w.len() - 3])
    } else if w.len() > 5 && w.ends_with("ing") {
        undouble(&w[..w.len() - 3]).to_string()
    } else if w.len() > 4 && w.ends_with("ed") {
        undouble(&w[..w.len() - 2]).to_string()
    } else if w.len() > 4
        && w.ends_with("es")
        && ["sh", "ch", "ss", "zz", "x"].iter().any(|s| w[..w.len() - 2].ends_with(s))
    {
        w[..w.len() - 2].to_string()
    } else if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") {
        w[..w.len() - 1].to_string()
    } else {
        w.clone()
    };
    let b = stem.as_bytes();
    let n = b.len();
    if n > 3 && b[n - 1] == b'e' && !is_vowel(b[n - 2]) {
        stem[..n - 1].to_string()
    } else {
        stem
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Argument(format!(
                "vector of length {} in a table of dim {}",
                vector.len(),
                self.dim
            )));
        }
        self.vectors.insert(token.into(), vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Unknown tokens map to the zero vector.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        self.get(token)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.dim])
    }

    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let mut table = EmbeddingTable::new(dim);
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if values.len() != dim {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {dim} components, found {}", values.len()),
                });
            }
            table.vectors.insert(token.to_string(), values);
        }
        Ok(table)
    }
}

pub fn load_embeddings(path: &Path, dim: usize) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::parse(&text, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tagged(words: &[(&str, &str, &str)], subj: Span, obj: Span) -> Sample {
        Sample {
            id: "t".into(),
            tokens: words.iter().map(|w| w.0.to_string()).collect(),
            pos: words.iter().map(|w| w.1.to_string()).collect(),
            ner: words.iter().map(|w| w.2.to_string()).collect(),
            subj,
            obj,
            relation: None,
        }
    }

    #[test]
    fn contiguous_entities_are_adjacent() {
        let s = tagged(
            &[
                ("The", "DT", "O"),
                ("ride-on", "JJ", "O"),
                ("boat", "NN", "O"),
                ("tiller", "NN", "O"),
                ("was", "VBD", "O"),
                ("developed", "VBN", "O"),
            ],
            Span::new(2, 2),
            Span::new(3, 3),
        );
        let sig = entity_signature(&s, 0);
        assert!(sig.adjacent);
        assert!(sig.entity_tokens.contains("boat") && sig.entity_tokens.contains("tiller"));
        assert_eq!(verb_signature(&s).phrase, None);
    }

    #[test]
    fn gap_of_two_is_not_adjacent() {
        let s = tagged(&[("a", "NN", "O"); 5], Span::new(0, 0), Span::new(3, 3));
        assert!(!entity_signature(&s, 0).adjacent);
        assert!(entity_signature(&s, 2).adjacent);
    }

    #[test]
    fn ner_set_from_span_heads() {
        let s = tagged(
            &[
                ("Rep.", "NNP", "TITLE"),
                ("Paul", "NNP", "PERSON"),
                ("Gillmor", "NNP", "PERSON"),
            ],
            Span::new(0, 0),
            Span::new(1, 2),
        );
        let sig = entity_signature(&s, 0);
        let want: BTreeSet<String> = ["PERSON", "TITLE"].iter().map(|s| s.to_string()).collect();
        assert_eq!(sig.ner_types, want);
        assert_eq!(sig.entity_tokens.len(), 3);
    }

    #[test]
    fn fell_into() {
        let s = tagged(
            &[
                ("The", "DT", "O"),
                ("mice", "NNS", "O"),
                ("fell", "VBD", "O"),
                ("into", "IN", "O"),
                ("the", "DT", "O"),
                ("trap", "NN", "O"),
            ],
            Span::new(1, 1),
            Span::new(5, 5),
        );
        assert_eq!(verb_signature(&s).phrase.as_deref(), Some("fall into"));
    }

    #[test]
    fn passive_auxiliary_dropped() {
        let s = tagged(
            &[
                ("X", "NNP", "O"),
                ("was", "VBD", "O"),
                ("put", "VBN", "O"),
                ("into", "IN", "O"),
                ("Y", "NNP", "O"),
            ],
            Span::new(0, 0),
            Span::new(4, 4),
        );
        assert_eq!(verb_signature(&s).phrase.as_deref(), Some("put into"));
    }

    #[test]
    fn object_first_and_bare_auxiliary() {
        let s = tagged(
            &[
                ("Y", "NNP", "O"),
                ("is", "VBZ", "O"),
                ("near", "IN", "O"),
                ("X", "NNP", "O"),
            ],
            Span::new(3, 3),
            Span::new(0, 0),
        );
        assert_eq!(verb_signature(&s).phrase.as_deref(), Some("be near"));
    }

    #[test]
    fn verbs_outside_the_gap_ignored() {
        let s = tagged(
            &[
                ("said", "VBD", "O"),
                ("X", "NNP", "O"),
                ("and", "CC", "O"),
                ("Y", "NNP", "O"),
                ("left", "VBD", "O"),
            ],
            Span::new(1, 1),
            Span::new(3, 3),
        );
        assert_eq!(verb_signature(&s).phrase, None);
    }

    #[test]
    fn regular_inflections_share_a_stem() {
        for forms in [
            ["develop", "develops", "developed", "developing"],
            ["provide", "provides", "provided", "providing"],
            ["stop", "stops", "stopped", "stopping"],
            ["carry", "carries", "carried", "carrying"],
            ["fall", "falls", "fell", "falling"],
            ["push", "pushes", "pushed", "pushing"],
        ] {
            let stems: BTreeSet<String> = forms.iter().map(|f| lemmatize(f)).collect();
            assert_eq!(stems.len(), 1, "{forms:?} -> {stems:?}");
        }
        assert_eq!(lemmatize("Found"), "find");
    }

    #[test]
    fn embeddings_parse_and_oov() {
        let t = EmbeddingTable::parse("a 1 0 0 0\nb 0 1 0 0\nc 0.5 0.5 0.5 0.5\n", 4).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.lookup("zzz-not-present"), vec![0.0; 4]);
        assert_eq!(t.lookup("c"), vec![0.5; 4]);
    }

    #[test]
    fn embeddings_dim_mismatch() {
        match EmbeddingTable::parse("a 1 0 0 0\nb 0 1 0\n", 4) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
