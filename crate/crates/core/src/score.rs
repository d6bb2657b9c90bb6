//! Pattern counting, plausibility scoring and threshold selection.
//!
//! For a pattern `P` observed for relation `r`:
//!
//! ```text
//! U(P|r) = (C(P|r) / sqrt|C^r|) / sum_r' (C(P|r') / sqrt|C^r'|)
//! F(P|r) = C(P|r) * L(P) * U(P|r)
//! P(P|r) = F(P|r) / sum_{P' of r} F(P'|r)
//! ```
//!
//! where `C(P|r)` counts extractions of `P` from seed tuples of `r`,
//! `|C^r|` is the number of seed tuples of `r` and `L(P)` is the pattern's
//! edge count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::pattern::{Pattern, PatternKey};

/// Default selection threshold; patterns must score strictly above it.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatternStats {
    // key -> relation -> count
    counts: BTreeMap<PatternKey, BTreeMap<String, u64>>,
    lengths: BTreeMap<PatternKey, usize>,
    relation_sizes: BTreeMap<String, usize>,
}

impl PatternStats {
    pub fn new(relation_sizes: BTreeMap<String, usize>) -> Self {
        PatternStats {
            relation_sizes,
            ..Default::default()
        }
    }

    pub fn accumulate(&mut self, pattern: &Pattern) -> Result<()> {
        self.record(&pattern.relation, pattern.canonicalize(), pattern.len(), 1)
    }

    /// Adds `count` observations of `key` for `relation`.
    pub fn record(
        &mut self,
        relation: &str,
        key: PatternKey,
        length: usize,
        count: u64,
    ) -> Result<()> {
        if length == 0 {
            return Err(Error::Invalid(format!("pattern `{key}` has length 0")));
        }
        if self.relation_size(relation) == 0 {
            return Err(Error::Invalid(format!(
                "relation `{relation}` has no seed tuples but a pattern was observed for it"
            )));
        }
        match self.lengths.get(&key) {
            Some(&existing) if existing != length => {
                return Err(Error::LengthConflict {
                    key: key.into_string(),
                    existing,
                    new: length,
                })
            }
            Some(_) => {}
            None => {
                self.lengths.insert(key.clone(), length);
            }
        }
        *self
            .counts
            .entry(key)
            .or_default()
            .entry(relation.to_string())
            .or_insert(0) += count;
        Ok(())
    }

    /// Folds another partial result into this one. Order-independent.
    pub fn merge(&mut self, other: PatternStats) -> Result<()> {
        for (relation, size) in other.relation_sizes {
            self.relation_sizes.entry(relation).or_insert(size);
        }
        for (key, per_relation) in other.counts {
            let length = other.lengths[&key];
            for (relation, count) in per_relation {
                self.record(&relation, key.clone(), length, count)?;
            }
        }
        Ok(())
    }

    pub fn count(&self, key: &PatternKey, relation: &str) -> u64 {
        self.counts
            .get(key)
            .and_then(|m| m.get(relation))
            .copied()
            .unwrap_or(0)
    }

    pub fn length(&self, key: &PatternKey) -> Option<usize> {
        self.lengths.get(key).copied()
    }

    pub fn relation_size(&self, relation: &str) -> usize {
        self.relation_sizes.get(relation).copied().unwrap_or(0)
    }

    pub fn relation_sizes(&self) -> &BTreeMap<String, usize> {
        &self.relation_sizes
    }

    /// Relations with at least one observed pattern.
    pub fn observed_relations(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .counts
            .values()
            .flat_map(|m| m.keys().cloned())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn keys_for(&self, relation: &str) -> impl Iterator<Item = &PatternKey> + '_ {
        let relation = relation.to_string();
        self.counts
            .iter()
            .filter(move |(_, m)| m.contains_key(&relation))
            .map(|(k, _)| k)
    }

    /// Number of distinct (pattern, relation) pairs observed.
    pub fn distinct_patterns(&self) -> usize {
        self.counts.values().map(BTreeMap::len).sum()
    }

    fn weighted(&self, relation: &str, count: u64) -> f64 {
        count as f64 / (self.relation_size(relation) as f64).sqrt()
    }

    /// Share of the pattern's size-normalized occurrences that belong to
    /// `relation`. Zero when the pattern was never seen for `relation`.
    pub fn uniqueness(&self, key: &PatternKey, relation: &str) -> f64 {
        let Some(per_relation) = self.counts.get(key) else {
            return 0.0;
        };
        let own = match per_relation.get(relation) {
            Some(&c) if c > 0 => self.weighted(relation, c),
            _ => return 0.0,
        };
        let total: f64 = per_relation.iter().map(|(r, &c)| self.weighted(r, c)).sum();
        own / total
    }

    /// Scores every pattern observed for `relation`, ordered by key.
    pub fn plausibility(&self, relation: &str) -> Vec<ScoredPattern> {
        let mut scored: Vec<ScoredPattern> = self
            .keys_for(relation)
            .map(|key| {
                let count = self.count(key, relation);
                let length = self.lengths[key];
                let uniqueness = self.uniqueness(key, relation);
                ScoredPattern {
                    key: key.clone(),
                    relation: relation.to_string(),
                    count,
                    length,
                    uniqueness,
                    raw_score: count as f64 * length as f64 * uniqueness,
                    plausibility: 0.0,
                }
            })
            .collect();
        let total: f64 = scored.iter().map(|s| s.raw_score).sum();
        if total > 0.0 {
            for s in &mut scored {
                s.plausibility = s.raw_score / total;
            }
        }
        scored
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPattern {
    pub key: PatternKey,
    pub relation: String,
    pub count: u64,
    pub length: usize,
    pub uniqueness: f64,
    pub raw_score: f64,
    pub plausibility: f64,
}

/// Keeps patterns scoring strictly above `threshold`, best first; ties are
/// broken by key.
pub fn select_patterns(scored: &[ScoredPattern], threshold: f64) -> Vec<ScoredPattern> {
    let mut kept: Vec<ScoredPattern> = scored
        .iter()
        .filter(|s| s.plausibility > threshold)
        .cloned()
        .collect();
    kept.sort_by(|a, b| {
        b.plausibility
            .total_cmp(&a.plausibility)
            .then_with(|| a.key.cmp(&b.key))
    });
    kept
}

/// One row of a pattern file: `relation<TAB>key<TAB>plausibility`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternRow {
    pub relation: String,
    pub key: PatternKey,
    pub plausibility: Option<f64>,
}

pub fn parse_pattern_rows(text: &str, source_name: &str) -> Result<Vec<PatternRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(source_name, lineno + 1, msg);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        }
        if fields[0].is_empty() {
            return Err(err("empty relation".into()));
        }
        let key: PatternKey = fields[1].parse().map_err(|e: Error| err(e.to_string()))?;
        let plausibility = match fields[2] {
            "" => None,
            v => Some(
                v.parse::<f64>()
                    .ok()
                    .filter(|p| p.is_finite())
                    .ok_or_else(|| err(format!("bad plausibility {v:?}")))?,
            ),
        };
        rows.push(PatternRow {
            relation: fields[0].to_string(),
            key,
            plausibility,
        });
    }
    Ok(rows)
}

pub fn format_pattern_rows(rows: &[PatternRow]) -> String {
    let mut out = String::new();
    for row in rows {
        let _ = write!(out, "{}\t{}\t", row.relation, row.key);
        if let Some(p) = row.plausibility {
            let _ = write!(out, "{p}");
        }
        out.push('\n');
    }
    out
}

/// Rebuilds counts from an unscored pattern file, where each row is one
/// observation.
pub fn stats_from_rows(
    rows: &[PatternRow],
    relation_sizes: BTreeMap<String, usize>,
) -> Result<PatternStats> {
    let mut stats = PatternStats::new(relation_sizes);
    for row in rows {
        let length = Pattern::from_key(&row.relation, &row.key)?.len();
        stats.record(&row.relation, row.key.clone(), length, 1)?;
    }
    Ok(stats)
}
