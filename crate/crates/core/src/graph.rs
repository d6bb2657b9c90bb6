//! Linguistic graphs, the seed knowledge base, and phrase lookup.
//!
//! A corpus is a JSON Lines file with one graph per line; a seed knowledge
//! base is a three-column TSV of `head<TAB>relation<TAB>tail`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphType {
    Eventuality,
    Discourse,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphNode {
    pub index: usize,
    pub word: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub label: String,
}

/// One incident edge seen from a node, in either direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub neighbor: usize,
    pub edge: usize,
    /// The edge points from this node to `neighbor`.
    pub outgoing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinguisticGraph {
    pub id: String,
    pub gtype: GraphType,
    pub freq: u64,
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    // Sorted by (neighbor, incoming before outgoing, label) so traversals
    // never depend on the order edges were listed in the record.
    adjacency: Vec<Vec<Incidence>>,
}

impl LinguisticGraph {
    pub fn new(
        id: impl Into<String>,
        gtype: GraphType,
        freq: u64,
        words: Vec<String>,
        edges: Vec<GraphEdge>,
    ) -> Result<Self> {
        let id = id.into();
        let invalid = |msg: String| Error::InvalidGraph {
            id: id.clone(),
            msg,
        };
        if words.is_empty() {
            return Err(invalid("graph has no nodes".into()));
        }
        if freq == 0 {
            return Err(invalid("freq must be at least 1".into()));
        }
        let mut nodes = Vec::with_capacity(words.len());
        for (index, word) in words.into_iter().enumerate() {
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(invalid(format!("node {index}: invalid word {word:?}")));
            }
            nodes.push(GraphNode {
                index,
                word: word.to_lowercase(),
            });
        }
        let n = nodes.len();
        let mut seen = HashSet::new();
        for e in &edges {
            if e.src >= n || e.dst >= n {
                return Err(invalid(format!(
                    "edge {}->{} ({}) references a node outside 0..{n}",
                    e.src, e.dst, e.label
                )));
            }
            if e.src == e.dst {
                return Err(invalid(format!("self-loop on node {}", e.src)));
            }
            if e.label.is_empty() {
                return Err(invalid(format!(
                    "edge {}->{} has an empty label",
                    e.src, e.dst
                )));
            }
            if !seen.insert((e.src, e.dst, e.label.as_str())) {
                return Err(invalid(format!(
                    "duplicate edge {}->{} ({})",
                    e.src, e.dst, e.label
                )));
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.src].push(Incidence {
                neighbor: e.dst,
                edge: i,
                outgoing: true,
            });
            adjacency[e.dst].push(Incidence {
                neighbor: e.src,
                edge: i,
                outgoing: false,
            });
        }
        for list in &mut adjacency {
            list.sort_by(|a, b| {
                (a.neighbor, a.outgoing, &edges[a.edge].label).cmp(&(
                    b.neighbor,
                    b.outgoing,
                    &edges[b.edge].label,
                ))
            });
        }

        let graph = LinguisticGraph {
            id,
            gtype,
            freq,
            nodes,
            edges,
            adjacency,
        };
        if !graph.is_connected() {
            return Err(Error::InvalidGraph {
                id: graph.id,
                msg: "graph is not weakly connected".into(),
            });
        }
        Ok(graph)
    }

    /// Convenience constructor: an eventuality graph with frequency 1.
    pub fn from_parts(id: &str, words: &[&str], edges: &[(usize, usize, &str)]) -> Result<Self> {
        Self::new(
            id,
            GraphType::Eventuality,
            1,
            words.iter().map(|w| w.to_string()).collect(),
            edges
                .iter()
                .map(|&(src, dst, label)| GraphEdge {
                    src,
                    dst,
                    label: label.to_string(),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn word(&self, index: usize) -> &str {
        &self.nodes[index].word
    }

    pub fn incident(&self, index: usize) -> &[Incidence] {
        &self.adjacency[index]
    }

    /// Distinct neighbors of a node, ascending.
    pub fn neighbors(&self, index: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.adjacency[index].iter().map(|a| a.neighbor).collect();
        out.dedup();
        out
    }

    pub fn has_edge(&self, src: usize, dst: usize, label: &str) -> bool {
        self.adjacency[src]
            .iter()
            .any(|a| a.outgoing && a.neighbor == dst && self.edges[a.edge].label == label)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for a in &self.adjacency[u] {
                if !seen[a.neighbor] {
                    seen[a.neighbor] = true;
                    count += 1;
                    queue.push_back(a.neighbor);
                }
            }
        }
        count == self.len()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphRecord {
    id: String,
    #[serde(rename = "type")]
    gtype: GraphType,
    freq: u64,
    nodes: Vec<NodeRecord>,
    edges: Vec<GraphEdge>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    i: usize,
    w: String,
}

impl LinguisticGraph {
    /// Serializes the graph as one corpus record (no trailing newline).
    pub fn to_json_line(&self) -> String {
        let record = GraphRecord {
            id: self.id.clone(),
            gtype: self.gtype,
            freq: self.freq,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    i: n.index,
                    w: n.word.clone(),
                })
                .collect(),
            edges: self.edges.clone(),
        };
        serde_json::to_string(&record).expect("graph records always serialize")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphCorpus {
    graphs: Vec<LinguisticGraph>,
    by_id: HashMap<String, usize>,
    // word -> ascending indices of graphs containing it
    postings: HashMap<String, Vec<usize>>,
}

impl GraphCorpus {
    pub fn new(graphs: Vec<LinguisticGraph>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(graphs.len());
        let mut postings: HashMap<String, Vec<usize>> = HashMap::new();
        for (gi, g) in graphs.iter().enumerate() {
            if by_id.insert(g.id.clone(), gi).is_some() {
                return Err(Error::InvalidGraph {
                    id: g.id.clone(),
                    msg: "duplicate graph id".into(),
                });
            }
            for node in &g.nodes {
                let list = postings.entry(node.word.clone()).or_default();
                if list.last() != Some(&gi) {
                    list.push(gi);
                }
            }
        }
        Ok(GraphCorpus {
            graphs,
            by_id,
            postings,
        })
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut graphs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: GraphRecord = serde_json::from_str(line)
                .map_err(|e| Error::parse(source_name, lineno + 1, e.to_string()))?;
            for (pos, node) in record.nodes.iter().enumerate() {
                if node.i != pos {
                    return Err(Error::InvalidGraph {
                        id: record.id,
                        msg: format!("node at position {pos} has index {}", node.i),
                    });
                }
            }
            let words = record.nodes.into_iter().map(|n| n.w).collect();
            graphs.push(LinguisticGraph::new(
                record.id,
                record.gtype,
                record.freq,
                words,
                record.edges,
            )?);
        }
        Self::new(graphs)
    }

    pub fn graphs(&self) -> &[LinguisticGraph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&LinguisticGraph> {
        self.by_id.get(id).map(|&i| &self.graphs[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Indices of graphs containing at least one of `words`, ascending.
    pub fn graphs_with_any<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        let set: BTreeSet<usize> = words
            .into_iter()
            .filter_map(|w| self.postings.get(w))
            .flatten()
            .copied()
            .collect();
        set.into_iter().collect()
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<GraphCorpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GraphCorpus::parse(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SeedTuple {
    pub head: Vec<String>,
    pub relation: String,
    pub tail: Vec<String>,
}

impl SeedTuple {
    pub fn new(head: &str, relation: &str, tail: &str) -> Self {
        SeedTuple {
            head: split_phrase(head),
            relation: relation.to_string(),
            tail: split_phrase(tail),
        }
    }

    pub fn head_text(&self) -> String {
        self.head.join(" ")
    }

    pub fn tail_text(&self) -> String {
        self.tail.join(" ")
    }
}

impl fmt::Display for SeedTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {})",
            self.head_text(),
            self.relation,
            self.tail_text()
        )
    }
}

/// Lowercased whitespace-separated words of a phrase.
pub fn split_phrase(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeedKb {
    tuples: Vec<SeedTuple>,
    relation_sizes: BTreeMap<String, usize>,
}

impl SeedKb {
    /// Builds a KB, dropping duplicate tuples (first occurrence wins).
    pub fn new(tuples: impl IntoIterator<Item = SeedTuple>) -> Self {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut relation_sizes = BTreeMap::new();
        for t in tuples {
            if seen.insert(t.clone()) {
                *relation_sizes.entry(t.relation.clone()).or_insert(0) += 1;
                kept.push(t);
            }
        }
        SeedKb {
            tuples: kept,
            relation_sizes,
        }
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut tuples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let err = |msg: &str| Error::parse(source_name, lineno + 1, msg);
            if fields.len() != 3 {
                return Err(err(&format!(
                    "expected 3 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            let tuple = SeedTuple::new(fields[0], fields[1].trim(), fields[2]);
            if tuple.head.is_empty() {
                return Err(err("empty head"));
            }
            if tuple.relation.is_empty() {
                return Err(err("empty relation"));
            }
            if tuple.tail.is_empty() {
                return Err(err("empty tail"));
            }
            tuples.push(tuple);
        }
        Ok(Self::new(tuples))
    }

    pub fn tuples(&self) -> &[SeedTuple] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.relation_sizes.keys().map(String::as_str)
    }

    pub fn relation_sizes(&self) -> &BTreeMap<String, usize> {
        &self.relation_sizes
    }

    pub fn relation_size(&self, relation: &str) -> usize {
        self.relation_sizes.get(relation).copied().unwrap_or(0)
    }

    pub fn by_relation<'a>(&'a self, relation: &'a str) -> impl Iterator<Item = &'a SeedTuple> {
        self.tuples.iter().filter(move |t| t.relation == relation)
    }
}

pub fn load_seed_kb(path: impl AsRef<Path>) -> Result<SeedKb> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SeedKb::parse(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhraseMatch {
    /// Node index of every phrase word, in phrase order.
    Unique(Vec<usize>),
    Ambiguous,
    Missing,
}

/// Finds each phrase word among the graph's nodes by exact word identity.
///
/// A word occurring more than once anywhere (in the graph, or in the phrase
/// itself) makes the match ambiguous; that check runs before coverage.
pub fn locate_phrase<S: AsRef<str>>(graph: &LinguisticGraph, phrase: &[S]) -> PhraseMatch {
    let mut distinct = HashSet::new();
    if !phrase.iter().all(|w| distinct.insert(w.as_ref())) {
        return PhraseMatch::Ambiguous;
    }
    let mut positions = Vec::with_capacity(phrase.len());
    let mut missing = false;
    for word in phrase {
        let mut hits = graph.nodes.iter().filter(|n| n.word == word.as_ref());
        match (hits.next(), hits.next()) {
            (Some(_), Some(_)) => return PhraseMatch::Ambiguous,
            (Some(n), None) => positions.push(n.index),
            (None, _) => missing = true,
        }
    }
    if missing {
        PhraseMatch::Missing
    } else {
        PhraseMatch::Unique(positions)
    }
}
