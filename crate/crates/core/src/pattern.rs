//! Pattern extraction from a matched (seed tuple, graph) pair.
//!
//! A pattern has three parts: a tree over the head words, a tree over the
//! tail words, and the shortest path joining the two. Head and tail words
//! become wildcard slots; words on the joining path become literal anchors.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{locate_phrase, LinguisticGraph, PhraseMatch, SeedTuple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotRole {
    HeadSlot,
    InternalLiteral,
    TailSlot,
}

impl SlotRole {
    fn prefix(self) -> char {
        match self {
            SlotRole::HeadSlot => 'H',
            SlotRole::InternalLiteral => 'I',
            SlotRole::TailSlot => 'T',
        }
    }
}

/// `H0`, `I2`, `T1`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotId {
    pub role: SlotRole,
    pub index: usize,
}

impl SlotId {
    pub fn head(index: usize) -> Self {
        SlotId {
            role: SlotRole::HeadSlot,
            index,
        }
    }

    pub fn tail(index: usize) -> Self {
        SlotId {
            role: SlotRole::TailSlot,
            index,
        }
    }

    pub fn internal(index: usize) -> Self {
        SlotId {
            role: SlotRole::InternalLiteral,
            index,
        }
    }
}

impl fmt::Display for SlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.role.prefix(), self.index)
    }
}

impl FromStr for SlotId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("invalid slot id {s:?}"));
        let mut chars = s.chars();
        let role = match chars.next() {
            Some('H') => SlotRole::HeadSlot,
            Some('I') => SlotRole::InternalLiteral,
            Some('T') => SlotRole::TailSlot,
            _ => return Err(bad()),
        };
        let digits = chars.as_str();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        Ok(SlotId {
            role,
            index: digits.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternNode {
    pub slot: SlotId,
    /// Present iff the slot is an internal literal.
    pub literal: Option<String>,
}

impl PatternNode {
    pub fn role(&self) -> SlotRole {
        self.slot.role
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternEdge {
    pub src: SlotId,
    pub dst: SlotId,
    pub label: String,
}

/// Serialized form of a pattern; equal keys mean structurally equal patterns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatternKey(String);

impl PatternKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for PatternKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for PatternKey {
    type Err = Error;

    /// Accepts only well-formed keys (they must parse back into a pattern).
    fn from_str(s: &str) -> Result<Self> {
        Pattern::from_key("", &PatternKey(s.to_string()))?;
        Ok(PatternKey(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub relation: String,
    nodes: Vec<PatternNode>,
    edges: Vec<PatternEdge>,
}

impl Pattern {
    /// Validates the structural invariants and stores nodes and edges in
    /// canonical order.
    pub fn new(
        relation: impl Into<String>,
        mut nodes: Vec<PatternNode>,
        mut edges: Vec<PatternEdge>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::Invalid(format!("malformed pattern: {msg}")));
        nodes.sort_by_key(|n| n.slot);
        if nodes.windows(2).any(|w| w[0].slot == w[1].slot) {
            return bad("duplicate slot id".into());
        }
        for node in &nodes {
            let literal_ok = match node.role() {
                SlotRole::InternalLiteral => node.literal.as_deref().is_some_and(|w| !w.is_empty()),
                _ => node.literal.is_none(),
            };
            if !literal_ok {
                return bad(format!("slot {} has a misplaced literal", node.slot));
            }
        }
        let count = |role| nodes.iter().filter(|n| n.role() == role).count();
        let (heads, internals, tails) = (
            count(SlotRole::HeadSlot),
            count(SlotRole::InternalLiteral),
            count(SlotRole::TailSlot),
        );
        if heads == 0 || tails == 0 {
            return bad("needs at least one head and one tail slot".into());
        }
        // Slots of each role are numbered 0..k.
        for role in [
            SlotRole::HeadSlot,
            SlotRole::InternalLiteral,
            SlotRole::TailSlot,
        ] {
            let ids: Vec<usize> = nodes
                .iter()
                .filter(|n| n.role() == role)
                .map(|n| n.slot.index)
                .collect();
            if ids.iter().enumerate().any(|(i, &id)| i != id) {
                return bad(format!(
                    "{} slots are not numbered contiguously",
                    role.prefix()
                ));
            }
        }
        let pos = |s: &SlotId| nodes.binary_search_by_key(s, |n| n.slot).ok();
        for e in &edges {
            if e.src == e.dst
                || pos(&e.src).is_none()
                || pos(&e.dst).is_none()
                || e.label.is_empty()
            {
                return bad(format!("bad edge {}-{}->{}", e.src, e.label, e.dst));
            }
        }
        edges.sort_by(|a, b| edge_sort_key(a).cmp(&edge_sort_key(b)));
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate edge".into());
        }

        let within = |role| {
            edges
                .iter()
                .filter(|e| e.src.role == role && e.dst.role == role)
                .count()
        };
        let spans = |role: SlotRole, k: usize| {
            // union-find over the slots of one role using only intra-role edges
            let mut parent: Vec<usize> = (0..k).collect();
            fn find(p: &mut [usize], x: usize) -> usize {
                if p[x] != x {
                    let r = find(p, p[x]);
                    p[x] = r;
                }
                p[x]
            }
            for e in edges
                .iter()
                .filter(|e| e.src.role == role && e.dst.role == role)
            {
                let (a, b) = (
                    find(&mut parent, e.src.index),
                    find(&mut parent, e.dst.index),
                );
                parent[a] = b;
            }
            let root = find(&mut parent, 0);
            (0..k).all(|x| find(&mut parent, x) == root)
        };
        if within(SlotRole::HeadSlot) != heads - 1
            || within(SlotRole::TailSlot) != tails - 1
            || !spans(SlotRole::HeadSlot, heads)
            || !spans(SlotRole::TailSlot, tails)
        {
            return bad("head and tail structures must be trees".into());
        }
        // Internal literals form the chain H* - I0 - I1 - ... - T*.
        if edges.len() != (heads - 1) + (tails - 1) + internals + 1 {
            return bad("unexpected edge count".into());
        }
        let touches = |e: &PatternEdge, a: SlotId, b: SlotRole| {
            (e.src == a && e.dst.role == b) || (e.dst == a && e.src.role == b)
        };
        let links = |a: SlotId, b: SlotId| {
            edges
                .iter()
                .filter(|e| (e.src == a && e.dst == b) || (e.src == b && e.dst == a))
                .count()
        };
        if internals == 0 {
            let bridges = edges.iter().filter(|e| e.src.role != e.dst.role).count();
            if bridges != 1 {
                return bad("head and tail must be joined by exactly one edge".into());
            }
        } else {
            let first = SlotId::internal(0);
            let last = SlotId::internal(internals - 1);
            let to_head = edges
                .iter()
                .filter(|e| touches(e, first, SlotRole::HeadSlot))
                .count();
            let to_tail = edges
                .iter()
                .filter(|e| touches(e, last, SlotRole::TailSlot))
                .count();
            let chained =
                (1..internals).all(|k| links(SlotId::internal(k - 1), SlotId::internal(k)) == 1);
            let stray = edges.iter().any(|e| {
                let (a, b) = (e.src.role, e.dst.role);
                (a == SlotRole::HeadSlot && b == SlotRole::TailSlot)
                    || (a == SlotRole::TailSlot && b == SlotRole::HeadSlot)
            });
            if to_head != 1 || to_tail != 1 || !chained || stray {
                return bad("internal literals must form the head-to-tail path".into());
            }
        }
        let pattern = Pattern {
            relation: relation.into(),
            nodes,
            edges,
        };
        if !pattern.is_connected() {
            return bad("pattern is not connected".into());
        }
        Ok(pattern)
    }

    pub fn nodes(&self) -> &[PatternNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[PatternEdge] {
        &self.edges
    }

    /// Number of edges; the pattern length used in scoring.
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn node(&self, slot: SlotId) -> Option<&PatternNode> {
        self.nodes
            .binary_search_by_key(&slot, |n| n.slot)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn slots(&self, role: SlotRole) -> impl Iterator<Item = SlotId> + '_ {
        self.nodes
            .iter()
            .filter(move |n| n.role() == role)
            .map(|n| n.slot)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let idx = |s: SlotId| self.nodes.binary_search_by_key(&s, |n| n.slot).unwrap();
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            let su = self.nodes[u].slot;
            for e in &self.edges {
                let other = if e.src == su {
                    e.dst
                } else if e.dst == su {
                    e.src
                } else {
                    continue;
                };
                let v = idx(other);
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Renders the canonical key: `H0|..|I0=word|..|T0|..;src-label->dst;...`.
    pub fn canonicalize(&self) -> PatternKey {
        let mut out = String::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if i > 0 {
                out.push('|');
            }
            out.push_str(&node.slot.to_string());
            if let Some(word) = &node.literal {
                out.push('=');
                out.push_str(&escape(word));
            }
        }
        for e in &self.edges {
            out.push(';');
            out.push_str(&format!("{}-{}->{}", e.src, escape(&e.label), e.dst));
        }
        PatternKey(out)
    }

    pub fn from_key(relation: &str, key: &PatternKey) -> Result<Self> {
        let bad = || Error::Invalid(format!("malformed pattern key {:?}", key.0));
        let mut segments = key.0.split(';');
        let node_segment = segments.next().ok_or_else(bad)?;
        let mut nodes = Vec::new();
        for token in node_segment.split('|') {
            let (slot, literal) = match token.split_once('=') {
                Some((slot, word)) => (slot, Some(unescape(word).ok_or_else(bad)?)),
                None => (token, None),
            };
            nodes.push(PatternNode {
                slot: slot.parse().map_err(|_| bad())?,
                literal,
            });
        }
        let mut edges = Vec::new();
        for segment in segments {
            let (src, rest) = segment.split_once('-').ok_or_else(bad)?;
            let (label, dst) = rest.rsplit_once("->").ok_or_else(bad)?;
            edges.push(PatternEdge {
                src: src.parse().map_err(|_| bad())?,
                dst: dst.parse().map_err(|_| bad())?,
                label: unescape(label).ok_or_else(bad)?,
            });
        }
        let pattern = Pattern::new(relation, nodes, edges)?;
        if pattern.canonicalize() != *key {
            return Err(bad());
        }
        Ok(pattern)
    }
}

fn edge_sort_key(e: &PatternEdge) -> (String, &str, String) {
    (e.src.to_string(), e.label.as_str(), e.dst.to_string())
}

pub fn canonicalize(pattern: &Pattern) -> PatternKey {
    pattern.canonicalize()
}

// Characters that would collide with the key grammar or the TSV/CSV columns
// the key is stored in.
fn needs_escape(c: char) -> bool {
    matches!(c, '%' | '|' | ';' | ',' | ' ' | '\t' | '\n' | '\r')
}

fn escape(s: &str) -> String {
    if !s.chars().any(needs_escape) {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len() + 4);
    for c in s.chars() {
        if needs_escape(c) {
            out.push_str(&format!("%{:02X}", c as u32));
        } else {
            out.push(c);
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '%' {
            let hex: String = chars.by_ref().take(2).collect();
            let code = u32::from_str_radix(&hex, 16).ok()?;
            let decoded = char::from_u32(code).filter(|&d| needs_escape(d))?;
            out.push(decoded);
        } else if needs_escape(c) {
            return None;
        } else {
            out.push(c);
        }
    }
    Some(out)
}

/// A connected set of graph nodes plus the tree edges that connect them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substructure {
    /// Node indices in phrase order.
    pub nodes: Vec<usize>,
    /// Graph edge indices, in discovery order.
    pub edges: Vec<usize>,
}

/// BFS from the first phrase node that may only step onto other phrase
/// nodes. Returns `None` when some phrase node is unreachable that way.
pub fn extract_head_structure(
    graph: &LinguisticGraph,
    positions: &[usize],
) -> Option<Substructure> {
    let &start = positions.first()?;
    let mut allowed = vec![false; graph.len()];
    for &p in positions {
        *allowed.get_mut(p)? = true;
    }
    let mut visited = vec![false; graph.len()];
    visited[start] = true;
    let mut edges = Vec::with_capacity(positions.len().saturating_sub(1));
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for inc in graph.incident(u) {
            let v = inc.neighbor;
            if allowed[v] && !visited[v] {
                visited[v] = true;
                edges.push(inc.edge);
                queue.push_back(v);
            }
        }
    }
    if positions.iter().all(|&p| visited[p]) {
        Some(Substructure {
            nodes: positions.to_vec(),
            edges,
        })
    } else {
        None
    }
}

/// Shortest path between two disjoint substructures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InternalPath {
    /// Full node sequence: head attachment, interior nodes, tail attachment.
    pub nodes: Vec<usize>,
    /// Graph edge indices along `nodes`.
    pub edges: Vec<usize>,
}

impl InternalPath {
    pub fn interior(&self) -> &[usize] {
        &self.nodes[1..self.nodes.len() - 1]
    }
}

/// Shortest undirected path from the head structure to the tail structure,
/// each collapsed to a single node. Among equally short paths the
/// lexicographically least node-index sequence wins.
pub fn extract_internal_path(
    graph: &LinguisticGraph,
    head: &Substructure,
    tail: &Substructure,
) -> Option<InternalPath> {
    let n = graph.len();
    let mut in_head = vec![false; n];
    for &h in &head.nodes {
        in_head[h] = true;
    }
    if tail.nodes.iter().any(|&t| in_head[t]) || tail.nodes.is_empty() {
        return None;
    }

    // Multi-source BFS distances to the tail structure.
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for &t in &tail.nodes {
        dist[t] = 0;
        queue.push_back(t);
    }
    while let Some(u) = queue.pop_front() {
        for inc in graph.incident(u) {
            if dist[inc.neighbor] == usize::MAX {
                dist[inc.neighbor] = dist[u] + 1;
                queue.push_back(inc.neighbor);
            }
        }
    }

    let best = head.nodes.iter().map(|&h| dist[h]).min()?;
    if best == usize::MAX {
        return None;
    }
    let mut current = head
        .nodes
        .iter()
        .copied()
        .filter(|&h| dist[h] == best)
        .min()?;
    let mut nodes = vec![current];
    let mut edges = Vec::with_capacity(best);
    while dist[current] > 0 {
        // Incidences are sorted by neighbor, so the first hit is the least
        // index and, among parallel edges, the first in canonical order.
        let step = graph
            .incident(current)
            .iter()
            .find(|inc| dist[inc.neighbor] == dist[current] - 1)?;
        edges.push(step.edge);
        nodes.push(step.neighbor);
        current = step.neighbor;
    }
    Some(InternalPath { nodes, edges })
}

/// Why a (tuple, graph) pair produced no pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Discard {
    Ambiguous,
    Missing,
    Overlap,
    Disconnected,
}

impl Discard {
    pub const ALL: [Discard; 4] = [
        Discard::Ambiguous,
        Discard::Missing,
        Discard::Overlap,
        Discard::Disconnected,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Discard::Ambiguous => "ambiguous",
            Discard::Missing => "missing",
            Discard::Overlap => "overlap",
            Discard::Disconnected => "disconnected",
        }
    }
}

pub fn try_extract_pattern(tuple: &SeedTuple, graph: &LinguisticGraph) -> Result<Pattern, Discard> {
    let head = locate_phrase(graph, &tuple.head);
    let tail = locate_phrase(graph, &tuple.tail);
    let (head_pos, tail_pos) = match (head, tail) {
        (PhraseMatch::Unique(h), PhraseMatch::Unique(t)) => (h, t),
        (PhraseMatch::Ambiguous, _) | (_, PhraseMatch::Ambiguous) => {
            return Err(Discard::Ambiguous)
        }
        _ => return Err(Discard::Missing),
    };
    if head_pos.iter().any(|p| tail_pos.contains(p)) {
        return Err(Discard::Overlap);
    }
    let head_struct = extract_head_structure(graph, &head_pos).ok_or(Discard::Disconnected)?;
    let tail_struct = extract_head_structure(graph, &tail_pos).ok_or(Discard::Disconnected)?;
    let path =
        extract_internal_path(graph, &head_struct, &tail_struct).ok_or(Discard::Disconnected)?;
    Ok(compose(
        graph,
        &tuple.relation,
        &head_struct,
        &path,
        &tail_struct,
    ))
}

pub fn extract_pattern(tuple: &SeedTuple, graph: &LinguisticGraph) -> Option<Pattern> {
    try_extract_pattern(tuple, graph).ok()
}

fn compose(
    graph: &LinguisticGraph,
    relation: &str,
    head: &Substructure,
    path: &InternalPath,
    tail: &Substructure,
) -> Pattern {
    let mut slot_of = vec![None; graph.len()];
    let mut nodes = Vec::new();
    for (k, &h) in head.nodes.iter().enumerate() {
        slot_of[h] = Some(SlotId::head(k));
        nodes.push(PatternNode {
            slot: SlotId::head(k),
            literal: None,
        });
    }
    for (k, &i) in path.interior().iter().enumerate() {
        slot_of[i] = Some(SlotId::internal(k));
        nodes.push(PatternNode {
            slot: SlotId::internal(k),
            literal: Some(graph.word(i).to_string()),
        });
    }
    for (k, &t) in tail.nodes.iter().enumerate() {
        slot_of[t] = Some(SlotId::tail(k));
        nodes.push(PatternNode {
            slot: SlotId::tail(k),
            literal: None,
        });
    }
    let edges = head
        .edges
        .iter()
        .chain(&path.edges)
        .chain(&tail.edges)
        .map(|&ei| {
            let e = &graph.edges()[ei];
            PatternEdge {
                src: slot_of[e.src].expect("edge endpoint inside pattern"),
                dst: slot_of[e.dst].expect("edge endpoint inside pattern"),
                label: e.label.clone(),
            }
        })
        .collect();
    Pattern::new(relation, nodes, edges).expect("extracted structures always form a valid pattern")
}
