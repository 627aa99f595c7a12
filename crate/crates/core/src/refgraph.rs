//! Entity, verb and semantics reference graphs over labeled and unlabeled samples.
//!
//! Nodes are indexed by sorted sample id, so every builder is independent of the
//! order in which samples are supplied. Every stored edge has at least one
//! labeled endpoint.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::features::{entity_signature, verb_signature, EntitySignature, VerbSignature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Entity,
    Verb,
    #[serde(rename = "semantics")]
    Semantic,
}

impl GraphKind {
    pub const ALL: [GraphKind; 3] = [GraphKind::Entity, GraphKind::Verb, GraphKind::Semantic];

    pub fn name(self) -> &'static str {
        match self {
            GraphKind::Entity => "entity",
            GraphKind::Verb => "verb",
            GraphKind::Semantic => "semantics",
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "entity" => Ok(GraphKind::Entity),
            "verb" => Ok(GraphKind::Verb),
            "semantics" | "semantic" => Ok(GraphKind::Semantic),
            other => Err(Error::Argument(format!("unknown graph kind {other:?}"))),
        }
    }
}

/// Parse a comma-separated list such as `entity,verb,semantics`.
pub fn parse_graph_list(s: &str) -> Result<Vec<GraphKind>> {
    let kinds: BTreeSet<GraphKind> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if kinds.is_empty() {
        return Err(Error::Argument("at least one graph must be enabled".into()));
    }
    Ok(kinds.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub delta: f64,
    /// Semantic-graph degree cap; `None` disables it.
    pub max_degree: Option<usize>,
    pub adjacency_window: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            delta: 0.9,
            max_degree: Some(50),
            adjacency_window: 0,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Argument(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if self.max_degree == Some(0) {
            return Err(Error::Argument("max_degree must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sorted node ids with a labeled flag per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    labeled: Vec<bool>,
}

impl NodeSet {
    pub fn new<'a, L, U>(labeled: L, unlabeled: U) -> Self
    where
        L: IntoIterator<Item = &'a str>,
        U: IntoIterator<Item = &'a str>,
    {
        let mut entries: Vec<(String, bool)> = labeled
            .into_iter()
            .map(|id| (id.to_string(), true))
            .chain(unlabeled.into_iter().map(|id| (id.to_string(), false)))
            .collect();
        entries.sort();
        entries.dedup_by(|a, b| a.0 == b.0);
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (id.clone(), i))
            .collect();
        let (ids, labeled) = entries.into_iter().unzip();
        NodeSet { ids, index, labeled }
    }

    pub fn from_samples(labeled: &[Sample], unlabeled: &[Sample]) -> Self {
        NodeSet::new(
            labeled.iter().map(|s| s.id.as_str()),
            unlabeled.iter().map(|s| s.id.as_str()),
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.labeled[i]
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled.iter().filter(|&&l| l).count()
    }

    fn promote(&mut self, i: usize) {
        self.labeled[i] = true;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGraph {
    kind: GraphKind,
    edges: BTreeMap<(usize, usize), f64>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl ReferenceGraph {
    pub fn empty(kind: GraphKind, num_nodes: usize) -> Self {
        ReferenceGraph {
            kind,
            edges: BTreeMap::new(),
            adjacency: vec![BTreeSet::new(); num_nodes],
        }
    }

    /// Builds a graph from raw `(i, j, score)` triples; self-pairs are dropped
    /// and duplicates collapse.
    pub fn from_edges<I>(kind: GraphKind, num_nodes: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut g = ReferenceGraph::empty(kind, num_nodes);
        for (i, j, score) in edges {
            g.insert(i, j, score);
        }
        g
    }

    fn insert(&mut self, i: usize, j: usize, score: f64) {
        if i == j {
            return;
        }
        let key = (i.min(j), i.max(j));
        self.edges.insert(key, score);
        self.adjacency[i].insert(j);
        self.adjacency[j].insert(i);
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.adjacency[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains_key(&(i.min(j), i.max(j)))
    }

    /// Unordered pairs with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.edges.iter().map(|(&k, &v)| (k, v))
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges.keys().copied().collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).max().unwrap_or(0)
    }

    /// Checks the structural invariants against `nodes`.
    pub fn check(&self, nodes: &NodeSet) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(format!("{} graph: {m}", self.kind)));
        if self.adjacency.len() != nodes.len() {
            return bad("node count mismatch".into());
        }
        let mut degree_sum = 0;
        for &(i, j) in self.edges.keys() {
            if i >= j {
                return bad(format!("edge ({i}, {j}) not normalized"));
            }
            if !nodes.is_labeled(i) && !nodes.is_labeled(j) {
                return bad(format!(
                    "edge {} - {} joins two unlabeled nodes",
                    nodes.id(i),
                    nodes.id(j)
                ));
            }
            if !self.adjacency[i].contains(&j) || !self.adjacency[j].contains(&i) {
                return bad(format!("edge ({i}, {j}) missing from adjacency"));
            }
        }
        for adj in &self.adjacency {
            degree_sum += adj.len();
        }
        if degree_sum != 2 * self.edges.len() {
            return bad("adjacency inconsistent with edge set".into());
        }
        Ok(())
    }
}

fn entity_match(a: &EntitySignature, b: &EntitySignature) -> bool {
    a.adjacent
        && b.adjacent
        && (a.ner_types == b.ner_types || !a.entity_tokens.is_disjoint(&b.entity_tokens))
}

/// Inverted indices over the lexical signatures so candidate partners of a node
/// are found without scanning the whole pool.
#[derive(Debug, Clone, Default, PartialEq)]
struct LexicalIndex {
    by_ner: HashMap<BTreeSet<String>, Vec<usize>>,
    by_token: HashMap<String, Vec<usize>>,
    by_verb: HashMap<String, Vec<usize>>,
}

impl LexicalIndex {
    fn new(entity: &[EntitySignature], verb: &[VerbSignature]) -> Self {
        let mut idx = LexicalIndex::default();
        for (i, sig) in entity.iter().enumerate() {
            if !sig.adjacent {
                continue;
            }
            idx.by_ner.entry(sig.ner_types.clone()).or_default().push(i);
            for t in &sig.entity_tokens {
                idx.by_token.entry(t.clone()).or_default().push(i);
            }
        }
        for (i, sig) in verb.iter().enumerate() {
            if let Some(p) = &sig.phrase {
                idx.by_verb.entry(p.clone()).or_default().push(i);
            }
        }
        idx
    }

    fn entity_partners(&self, sig: &EntitySignature) -> BTreeSet<usize> {
        if !sig.adjacent {
            return BTreeSet::new();
        }
        let mut out: BTreeSet<usize> = self
            .by_ner
            .get(&sig.ner_types)
            .into_iter()
            .flatten()
            .copied()
            .collect();
        for t in &sig.entity_tokens {
            out.extend(self.by_token.get(t).into_iter().flatten().copied());
        }
        out
    }

    fn verb_partners(&self, sig: &VerbSignature) -> &[usize] {
        sig.phrase
            .as_ref()
            .and_then(|p| self.by_verb.get(p))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

pub fn build_entity_graph(nodes: &NodeSet, sigs: &[EntitySignature]) -> ReferenceGraph {
    let index = LexicalIndex::new(sigs, &[]);
    let mut g = ReferenceGraph::empty(GraphKind::Entity, nodes.len());
    for i in (0..nodes.len()).filter(|&i| nodes.is_labeled(i)) {
        for j in index.entity_partners(&sigs[i]) {
            debug_assert!(entity_match(&sigs[i], &sigs[j]));
            g.insert(i, j, 1.0);
        }
    }
    g
}

pub fn build_verb_graph(nodes: &NodeSet, sigs: &[VerbSignature]) -> ReferenceGraph {
    let index = LexicalIndex::new(&[], sigs);
    let mut g = ReferenceGraph::empty(GraphKind::Verb, nodes.len());
    for i in (0..nodes.len()).filter(|&i| nodes.is_labeled(i)) {
        for &j in index.verb_partners(&sigs[i]) {
            g.insert(i, j, 1.0);
        }
    }
    g
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Edge `(i, j)` iff `i` is labeled and the cosine of their embeddings exceeds
/// `delta`. With a degree cap, candidate edges are admitted greedily in order
/// of decreasing similarity (ties by node index) while both endpoints have
/// room.
pub fn build_semantic_graph(
    nodes: &NodeSet,
    embeddings: &[Vec<f64>],
    cfg: &GraphConfig,
) -> ReferenceGraph {
    assert_eq!(embeddings.len(), nodes.len(), "one embedding per node");
    let unit: Vec<Option<Vec<f64>>> = embeddings
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                log::warn!("node {} has a zero-norm embedding; no semantic edges", nodes.id(i));
                None
            } else {
                Some(v.iter().map(|x| x / norm).collect())
            }
        })
        .collect();
    let mut candidates = Vec::new();
    for i in 0..nodes.len() {
        let (true, Some(ui)) = (nodes.is_labeled(i), &unit[i]) else {
            continue;
        };
        for (j, uj) in unit.iter().enumerate() {
            // labeled-labeled pairs are visited once, from the smaller index
            if j == i || (nodes.is_labeled(j) && j < i) {
                continue;
            }
            let Some(uj) = uj else { continue };
            let sim: f64 = ui.iter().zip(uj).map(|(a, b)| a * b).sum();
            if sim > cfg.delta {
                candidates.push((i.min(j), i.max(j), sim));
            }
        }
    }
    let Some(cap) = cfg.max_degree else {
        return ReferenceGraph::from_edges(GraphKind::Semantic, nodes.len(), candidates);
    };
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut g = ReferenceGraph::empty(GraphKind::Semantic, nodes.len());
    for (i, j, sim) in candidates {
        if g.adjacency[i].len() < cap && g.adjacency[j].len() < cap {
            g.insert(i, j, sim);
        }
    }
    g
}

/// The three reference graphs together with the node set and the lexical
/// signatures they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSet {
    pub nodes: NodeSet,
    pub entity: ReferenceGraph,
    pub verb: ReferenceGraph,
    pub semantic: ReferenceGraph,
    entity_sigs: Vec<EntitySignature>,
    verb_sigs: Vec<VerbSignature>,
    index: LexicalIndex,
    cfg: GraphConfig,
}

impl GraphSet {
    /// Builds the lexical graphs; the semantic graph starts empty until
    /// embeddings are supplied.
    pub fn new(labeled: &[Sample], unlabeled: &[Sample], cfg: &GraphConfig) -> Result<Self> {
        cfg.validate()?;
        let nodes = NodeSet::from_samples(labeled, unlabeled);
        let by_id: HashMap<&str, &Sample> = labeled
            .iter()
            .chain(unlabeled)
            .map(|s| (s.id.as_str(), s))
            .collect();
        let ordered: Vec<&Sample> = nodes.ids().iter().map(|id| by_id[id.as_str()]).collect();
        let entity_sigs: Vec<_> = ordered
            .iter()
            .map(|s| entity_signature(s, cfg.adjacency_window))
            .collect();
        let verb_sigs: Vec<_> = ordered.iter().map(|s| verb_signature(s)).collect();
        let entity = build_entity_graph(&nodes, &entity_sigs);
        let verb = build_verb_graph(&nodes, &verb_sigs);
        let semantic = ReferenceGraph::empty(GraphKind::Semantic, nodes.len());
        let index = LexicalIndex::new(&entity_sigs, &verb_sigs);
        Ok(GraphSet {
            nodes,
            entity,
            verb,
            semantic,
            entity_sigs,
            verb_sigs,
            index,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &GraphConfig {
        &self.cfg
    }

    pub fn graph(&self, kind: GraphKind) -> &ReferenceGraph {
        match kind {
            GraphKind::Entity => &self.entity,
            GraphKind::Verb => &self.verb,
            GraphKind::Semantic => &self.semantic,
        }
    }

    pub fn entity_signatures(&self) -> &[EntitySignature] {
        &self.entity_sigs
    }

    pub fn verb_signatures(&self) -> &[VerbSignature] {
        &self.verb_sigs
    }

    /// Replaces the semantic graph using node-aligned embeddings.
    pub fn with_semantic(&self, embeddings: &[Vec<f64>]) -> GraphSet {
        GraphSet {
            semantic: build_semantic_graph(&self.nodes, embeddings, &self.cfg),
            ..self.clone()
        }
    }

    /// Promotes `newly_labeled` ids to labeled nodes and returns the updated
    /// graphs. Lexical edges for the promoted nodes are added incrementally and
    /// never removed; the semantic graph is re-derived under `embeddings`, which
    /// drops every edge that no longer clears the threshold.
    pub fn update<S: AsRef<str>>(
        &self,
        newly_labeled: &[S],
        embeddings: &[Vec<f64>],
    ) -> Result<GraphSet> {
        let mut next = self.clone();
        let mut promoted = Vec::new();
        for id in newly_labeled {
            let id = id.as_ref();
            let i = next
                .nodes
                .index_of(id)
                .ok_or_else(|| Error::Argument(format!("{id} is not a graph node")))?;
            if next.nodes.is_labeled(i) {
                return Err(Error::Argument(format!("{id} is already labeled")));
            }
            next.nodes.promote(i);
            promoted.push(i);
        }
        for &u in &promoted {
            for j in next.index.entity_partners(&next.entity_sigs[u]) {
                next.entity.insert(u, j, 1.0);
            }
            for &j in next.index.verb_partners(&next.verb_sigs[u]) {
                next.verb.insert(u, j, 1.0);
            }
        }
        next.semantic = build_semantic_graph(&next.nodes, embeddings, &next.cfg);
        Ok(next)
    }

    pub fn edge_counts(&self) -> BTreeMap<GraphKind, usize> {
        GraphKind::ALL
            .iter()
            .map(|&k| (k, self.graph(k).num_edges()))
            .collect()
    }

    /// One `kind\tid_i\tid_j\tscore` line per edge, sorted by kind then ids.
    pub fn edge_list(&self, kinds: &[GraphKind]) -> String {
        let mut out = String::new();
        let mut kinds = kinds.to_vec();
        kinds.sort_by_key(|k| k.name());
        for kind in kinds {
            for ((i, j), score) in self.graph(kind).edges() {
                let score = match kind {
                    GraphKind::Semantic => format!("{score:.6}"),
                    _ => "1".to_string(),
                };
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    kind,
                    self.nodes.id(i),
                    self.nodes.id(j),
                    score
                ));
            }
        }
        out
    }
}
