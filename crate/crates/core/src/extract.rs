//! Applying selected patterns to a corpus to collect candidate tuples.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{split_phrase, GraphCorpus, LinguisticGraph};
use crate::pattern::{Pattern, PatternKey, SlotId, SlotRole};

/// An injective embedding of a pattern's slots into one graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Match {
    pub graph_id: String,
    pub assignment: BTreeMap<SlotId, usize>,
}

impl Match {
    /// Graph nodes assigned to slots of `role`, ascending by node index.
    pub fn nodes(&self, role: SlotRole) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .assignment
            .iter()
            .filter(|(s, _)| s.role == role)
            .map(|(_, &n)| n)
            .collect();
        out.sort_unstable();
        out
    }

    /// Checks every match invariant against the pattern and graph.
    pub fn is_valid(&self, pattern: &Pattern, graph: &LinguisticGraph) -> bool {
        let mut used = BTreeSet::new();
        for node in pattern.nodes() {
            let Some(&n) = self.assignment.get(&node.slot) else {
                return false;
            };
            if n >= graph.len() || !used.insert(n) {
                return false;
            }
            if let Some(word) = &node.literal {
                if graph.word(n) != word {
                    return false;
                }
            }
        }
        self.assignment.len() == pattern.nodes().len()
            && pattern
                .edges()
                .iter()
                .all(|e| graph.has_edge(self.assignment[&e.src], self.assignment[&e.dst], &e.label))
    }
}

/// Enumerates every embedding of `pattern` in `graph`.
///
/// Slots are bound in breadth-first order over the pattern; graph nodes are
/// tried in ascending index, so the output order is deterministic.
pub fn match_pattern(pattern: &Pattern, graph: &LinguisticGraph) -> Vec<Match> {
    let nodes = pattern.nodes();
    let index_of = |s: SlotId| nodes.iter().position(|n| n.slot == s).unwrap();

    // BFS order over the pattern, remembering for each slot one already
    // ordered neighbor to draw candidates from.
    let mut order = vec![0];
    let mut anchor = vec![None; nodes.len()];
    let mut placed = vec![false; nodes.len()];
    placed[0] = true;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for e in pattern.edges() {
            let (a, b) = (index_of(e.src), index_of(e.dst));
            let v = if a == u {
                b
            } else if b == u {
                a
            } else {
                continue;
            };
            if !placed[v] {
                placed[v] = true;
                anchor[v] = Some(u);
                order.push(v);
                queue.push_back(v);
            }
        }
    }
    // Constraints checked when a slot is bound: edges to earlier slots.
    let mut rank = vec![0; nodes.len()];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }
    let mut checks: Vec<Vec<(usize, usize, &str)>> = vec![Vec::new(); nodes.len()];
    for e in pattern.edges() {
        let (a, b) = (index_of(e.src), index_of(e.dst));
        let later = if rank[a] > rank[b] { a } else { b };
        checks[later].push((a, b, e.label.as_str()));
    }

    let mut search = Search {
        pattern,
        graph,
        order: &order,
        anchor: &anchor,
        checks: &checks,
        binding: vec![usize::MAX; nodes.len()],
        used: vec![false; graph.len()],
        out: Vec::new(),
    };
    search.extend(0);
    search.out
}

struct Search<'a> {
    pattern: &'a Pattern,
    graph: &'a LinguisticGraph,
    order: &'a [usize],
    anchor: &'a [Option<usize>],
    checks: &'a [Vec<(usize, usize, &'a str)>],
    binding: Vec<usize>,
    used: Vec<bool>,
    out: Vec<Match>,
}

impl Search<'_> {
    fn extend(&mut self, depth: usize) {
        if depth == self.order.len() {
            let assignment = self
                .pattern
                .nodes()
                .iter()
                .zip(&self.binding)
                .map(|(n, &g)| (n.slot, g))
                .collect();
            self.out.push(Match {
                graph_id: self.graph.id.clone(),
                assignment,
            });
            return;
        }
        let slot = self.order[depth];
        let candidates = match self.anchor[slot] {
            Some(a) => self.graph.neighbors(self.binding[a]),
            None => (0..self.graph.len()).collect(),
        };
        for g in candidates {
            if self.used[g] {
                continue;
            }
            if let Some(word) = &self.pattern.nodes()[slot].literal {
                if self.graph.word(g) != word {
                    continue;
                }
            }
            self.binding[slot] = g;
            let fits = self.checks[slot]
                .iter()
                .all(|&(a, b, label)| self.graph.has_edge(self.binding[a], self.binding[b], label));
            if fits {
                self.used[g] = true;
                self.extend(depth + 1);
                self.used[g] = false;
            }
            self.binding[slot] = usize::MAX;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CandidateTuple {
    pub head: Vec<String>,
    pub relation: String,
    pub tail: Vec<String>,
    pub pattern_key: PatternKey,
}

impl CandidateTuple {
    fn from_match(pattern: &Pattern, key: &PatternKey, graph: &LinguisticGraph, m: &Match) -> Self {
        let words = |role| {
            m.nodes(role)
                .into_iter()
                .map(|n| graph.word(n).to_string())
                .collect()
        };
        CandidateTuple {
            head: words(SlotRole::HeadSlot),
            relation: pattern.relation.clone(),
            tail: words(SlotRole::TailSlot),
            pattern_key: key.clone(),
        }
    }

    pub fn head_text(&self) -> String {
        self.head.join(" ")
    }

    pub fn tail_text(&self) -> String {
        self.tail.join(" ")
    }
}

/// Runs every pattern over every graph. Output follows corpus order, then
/// pattern order, then match order; graphs are processed in parallel on the
/// current rayon pool.
pub fn extract_knowledge(
    patterns: &[Pattern],
    corpus: &GraphCorpus,
) -> Vec<(CandidateTuple, String)> {
    if patterns.is_empty() {
        return Vec::new();
    }
    let keys: Vec<PatternKey> = patterns.iter().map(Pattern::canonicalize).collect();
    corpus
        .graphs()
        .par_iter()
        .flat_map_iter(|graph| {
            let mut found = Vec::new();
            for (pattern, key) in patterns.iter().zip(&keys) {
                for m in match_pattern(pattern, graph) {
                    found.push((
                        CandidateTuple::from_match(pattern, key, graph, &m),
                        graph.id.clone(),
                    ));
                }
            }
            found
        })
        .collect()
}

/// A candidate tuple together with everything that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    pub head: Vec<String>,
    pub relation: String,
    pub tail: Vec<String>,
    /// (graph id, pattern key) pairs.
    pub supports: BTreeSet<(String, PatternKey)>,
}

impl SupportSet {
    pub fn head_text(&self) -> String {
        self.head.join(" ")
    }

    pub fn tail_text(&self) -> String {
        self.tail.join(" ")
    }

    /// Distinct supporting graph ids, sorted.
    pub fn graph_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.supports.iter().map(|(g, _)| g.as_str()).collect();
        ids.dedup();
        ids
    }

    pub fn pattern_keys(&self) -> Vec<&PatternKey> {
        let set: BTreeSet<&PatternKey> = self.supports.iter().map(|(_, k)| k).collect();
        set.into_iter().collect()
    }
}

pub fn aggregate_support(
    raw: impl IntoIterator<Item = (CandidateTuple, String)>,
) -> Vec<SupportSet> {
    let mut groups: BTreeMap<(String, String, String), SupportSet> = BTreeMap::new();
    for (tuple, graph_id) in raw {
        let id = (tuple.relation.clone(), tuple.head_text(), tuple.tail_text());
        groups
            .entry(id)
            .or_insert_with(|| SupportSet {
                head: tuple.head.clone(),
                relation: tuple.relation.clone(),
                tail: tuple.tail.clone(),
                supports: BTreeSet::new(),
            })
            .supports
            .insert((graph_id, tuple.pattern_key));
    }
    groups.into_values().collect()
}

/// One row of a knowledge file:
/// `head<TAB>relation<TAB>tail<TAB>support_count<TAB>pattern_keys<TAB>score`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeRow {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub support_count: usize,
    pub pattern_keys: Vec<PatternKey>,
    pub score: Option<f64>,
}

impl KnowledgeRow {
    pub fn from_support(set: &SupportSet) -> Self {
        KnowledgeRow {
            head: set.head_text(),
            relation: set.relation.clone(),
            tail: set.tail_text(),
            support_count: set.graph_ids().len(),
            pattern_keys: set.pattern_keys().into_iter().cloned().collect(),
            score: None,
        }
    }

    pub fn identity(&self) -> (&str, &str, &str) {
        (&self.head, &self.relation, &self.tail)
    }
}

pub fn format_knowledge_rows(rows: &[KnowledgeRow]) -> String {
    let mut out = String::new();
    for row in rows {
        let keys: Vec<&str> = row.pattern_keys.iter().map(PatternKey::as_str).collect();
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t",
            row.head,
            row.relation,
            row.tail,
            row.support_count,
            keys.join(",")
        );
        if let Some(score) = row.score {
            let _ = write!(out, "{score}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_knowledge_rows(text: &str, source_name: &str) -> Result<Vec<KnowledgeRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(source_name, lineno + 1, msg);
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", f.len())));
        }
        let head = split_phrase(f[0]).join(" ");
        let tail = split_phrase(f[2]).join(" ");
        if head.is_empty() || tail.is_empty() || f[1].is_empty() {
            return Err(err("empty head, relation or tail".into()));
        }
        let support_count = f[3]
            .parse()
            .map_err(|_| err(format!("bad support count {:?}", f[3])))?;
        let pattern_keys = f[4]
            .split(',')
            .filter(|k| !k.is_empty())
            .map(|k| k.parse().map_err(|e: Error| err(e.to_string())))
            .collect::<Result<Vec<PatternKey>>>()?;
        let score = match f[5] {
            "" => None,
            v => Some(
                v.parse::<f64>()
                    .ok()
                    .filter(|s| s.is_finite())
                    .ok_or_else(|| err(format!("bad score {v:?}")))?,
            ),
        };
        rows.push(KnowledgeRow {
            head,
            relation: f[1].to_string(),
            tail,
            support_count,
            pattern_keys,
            score,
        });
    }
    Ok(rows)
}

/// Recovers the supporting graphs of knowledge rows by re-applying the
/// patterns they list. Returned sets line up with `rows`.
pub fn resolve_supports(rows: &[KnowledgeRow], corpus: &GraphCorpus) -> Result<Vec<SupportSet>> {
    let mut wanted: BTreeSet<(&str, &PatternKey)> = BTreeSet::new();
    for row in rows {
        for key in &row.pattern_keys {
            wanted.insert((&row.relation, key));
        }
    }
    let patterns = wanted
        .into_iter()
        .map(|(relation, key)| Pattern::from_key(relation, key))
        .collect::<Result<Vec<_>>>()?;
    let mut by_identity: HashMap<(String, String, String), SupportSet> =
        aggregate_support(extract_knowledge(&patterns, corpus))
            .into_iter()
            .map(|s| ((s.head_text(), s.relation.clone(), s.tail_text()), s))
            .collect();
    rows.iter()
        .map(|row| {
            let id = (row.head.clone(), row.relation.clone(), row.tail.clone());
            let mut set = by_identity.remove(&id).ok_or_else(|| {
                Error::Invalid(format!(
                    "candidate ({}, {}, {}) has no support in the corpus",
                    row.head, row.relation, row.tail
                ))
            })?;
            set.supports.retain(|(_, k)| row.pattern_keys.contains(k));
            Ok(set)
        })
        .collect()
}
