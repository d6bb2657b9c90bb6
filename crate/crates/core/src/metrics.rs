//! Quantity and novelty statistics, and annotation sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::extract::SupportSet;
use crate::graph::SeedKb;
use crate::ranker::AnnotatedExample;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoveltyReport {
    pub novel_t: f64,
    pub novel_c: f64,
    pub novel_tuples: usize,
    pub tuple_count: usize,
    pub novel_concepts: usize,
    pub concept_count: usize,
    pub vocab_count: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl NoveltyReport {
    /// `key=value` lines; rates to 4 decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tuple_count={}", self.tuple_count);
        let _ = writeln!(out, "novel_tuples={}", self.novel_tuples);
        let _ = writeln!(out, "novel_t={:.4}", self.novel_t);
        let _ = writeln!(out, "concept_count={}", self.concept_count);
        let _ = writeln!(out, "novel_concepts={}", self.novel_concepts);
        let _ = writeln!(out, "novel_c={:.4}", self.novel_c);
        let _ = writeln!(out, "vocab_count={}", self.vocab_count);
        out
    }

    pub fn to_json(&self) -> String {
        let rounded = NoveltyReport {
            novel_t: (self.novel_t * 1e4).round() / 1e4,
            novel_c: (self.novel_c * 1e4).round() / 1e4,
            ..self.clone()
        };
        let mut out = serde_json::to_string(&rounded).expect("report serializes");
        out.push('\n');
        out
    }
}

/// Novelty of distinct candidate triples `(head, relation, tail)` against
/// the seed knowledge by exact string match. Concepts pool heads and tails.
pub fn novelty<'a>(
    candidates: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    seed: &SeedKb,
) -> NoveltyReport {
    let seed_triples: BTreeSet<(String, &str, String)> = seed
        .tuples()
        .iter()
        .map(|t| (t.head_text(), t.relation.as_str(), t.tail_text()))
        .collect();
    let seed_concepts: BTreeSet<String> = seed
        .tuples()
        .iter()
        .flat_map(|t| [t.head_text(), t.tail_text()])
        .collect();

    let triples: BTreeSet<(&str, &str, &str)> = candidates.into_iter().collect();
    let novel_tuples = triples
        .iter()
        .filter(|(h, r, t)| !seed_triples.contains(&(h.to_string(), *r, t.to_string())))
        .count();
    let concepts: BTreeSet<&str> = triples.iter().flat_map(|(h, _, t)| [*h, *t]).collect();
    let novel_concepts = concepts
        .iter()
        .filter(|c| !seed_concepts.contains(**c))
        .count();
    let vocab: BTreeSet<&str> = concepts.iter().flat_map(|c| c.split_whitespace()).collect();

    NoveltyReport {
        novel_t: ratio(novel_tuples, triples.len()),
        novel_c: ratio(novel_concepts, concepts.len()),
        novel_tuples,
        tuple_count: triples.len(),
        novel_concepts,
        concept_count: concepts.len(),
        vocab_count: vocab.len(),
    }
}

/// Up to `per_relation` candidates per relation, drawn uniformly without
/// replacement. Output is grouped by relation and sorted within a group;
/// the label column is left blank.
pub fn sample_for_annotation(
    candidates: &[SupportSet],
    per_relation: usize,
    seed: u64,
) -> Vec<AnnotatedExample> {
    let mut by_relation: BTreeMap<&str, Vec<&SupportSet>> = BTreeMap::new();
    for c in candidates {
        by_relation.entry(c.relation.as_str()).or_default().push(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for group in by_relation.values_mut() {
        group.sort_by_cached_key(|c| (c.head_text(), c.tail_text()));
        group.dedup_by(|a, b| a.head == b.head && a.tail == b.tail);
        let mut picked: Vec<usize> = if group.len() <= per_relation {
            (0..group.len()).collect()
        } else {
            index::sample(&mut rng, group.len(), per_relation).into_vec()
        };
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| {
            let c = group[i];
            AnnotatedExample {
                tuple: crate::graph::SeedTuple {
                    head: c.head.clone(),
                    relation: c.relation.clone(),
                    tail: c.tail.clone(),
                },
                label: None,
                graph_ids: c.graph_ids().into_iter().map(String::from).collect(),
            }
        }));
    }
    out
}
