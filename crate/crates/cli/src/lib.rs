//! Stage-per-command driver for the `graphkb` binary.
//!
//! Every stage reads its inputs from and writes its outputs to the output
//! directory under fixed names:
//!
//! | command             | reads                             | writes                                   |
//! |---------------------|-----------------------------------|------------------------------------------|
//! | `extract-patterns`  | corpus, seed KB                   | `patterns.tsv`, `pattern_summary.txt`    |
//! | `select-patterns`   | `patterns.tsv`, seed KB           | `patterns.scored.tsv`                    |
//! | `extract-knowledge` | `patterns.scored.tsv`, corpus     | `knowledge.tsv`                          |
//! | `sample-annotations`| `knowledge.tsv`, corpus           | `annotations.sample.tsv`                 |
//! | `train-ranker`      | annotations, corpus               | checkpoint (`ranker.json`)               |
//! | `rank`              | `knowledge.tsv`, corpus, checkpoint | `knowledge.ranked.tsv`, `knowledge.top.tsv` |
//! | `stats`             | `knowledge.tsv`, seed KB          | `stats.txt`, `stats.json`                |
//!
//! All inputs are loaded and validated and all outputs computed before the
//! first byte is written.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use graphkb::extract::{
    aggregate_support, extract_knowledge, format_knowledge_rows, parse_knowledge_rows,
    resolve_supports, KnowledgeRow,
};
use graphkb::metrics::{novelty, sample_for_annotation};
use graphkb::pattern::{try_extract_pattern, Discard};
use graphkb::ranker::{
    format_annotations, load_checkpoint, parse_annotations, rank_knowledge, save_checkpoint,
    top_percent_count, train,
};
use graphkb::score::{
    format_pattern_rows, parse_pattern_rows, select_patterns, stats_from_rows, PatternRow,
};
use graphkb::{load_corpus, load_seed_kb, GraphCorpus, Pattern, SeedKb};
use log::{info, warn};
use rayon::prelude::*;

pub use config::{Overrides, PipelineConfig};

pub const PATTERNS: &str = "patterns.tsv";
pub const PATTERN_SUMMARY: &str = "pattern_summary.txt";
pub const SCORED_PATTERNS: &str = "patterns.scored.tsv";
pub const KNOWLEDGE: &str = "knowledge.tsv";
pub const RANKED: &str = "knowledge.ranked.tsv";
pub const TOP: &str = "knowledge.top.tsv";
pub const SAMPLE: &str = "annotations.sample.tsv";
pub const STATS_TEXT: &str = "stats.txt";
pub const STATS_JSON: &str = "stats.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{}: {}", .0.display(), .1)]
    Io(PathBuf, #[source] io::Error),
    #[error(transparent)]
    Core(#[from] graphkb::Error),
}

impl CliError {
    /// 1 for invalid input, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(..) => 2,
            CliError::Core(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "graphkb",
    version,
    about = "Mine relation-typed knowledge tuples from linguistic graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Extract one pattern per (seed tuple, graph) pair
    ExtractPatterns,
    /// Score patterns per relation and keep those above the threshold
    SelectPatterns,
    /// Apply the selected patterns to the corpus
    ExtractKnowledge,
    /// Draw a per-relation sample of candidates for labeling
    SampleAnnotations,
    /// Train one plausibility classifier per relation
    TrainRanker,
    /// Score and sort the candidates
    Rank,
    /// Report quantity and novelty of the candidates
    Stats,
}

/// Parses the configuration and runs `command` on a pool of
/// `workers` threads.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let config = PipelineConfig::resolve(&cli.flags)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::ExtractPatterns => extract_patterns(&config),
        Command::SelectPatterns => select(&config),
        Command::ExtractKnowledge => extract(&config),
        Command::SampleAnnotations => sample(&config),
        Command::TrainRanker => train_ranker(&config),
        Command::Rank => rank(&config),
        Command::Stats => stats(&config),
    })
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Writes every file or none: all contents are ready before this is called.
fn write_all(outputs: &[(PathBuf, String)]) -> Result<(), CliError> {
    for (path, _) in outputs {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
        }
    }
    for (path, text) in outputs {
        fs::write(path, text).map_err(|e| CliError::Io(path.clone(), e))?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn print(text: &str) {
    let _ = io::stdout().lock().write_all(text.as_bytes());
}

fn load_inputs(config: &PipelineConfig) -> Result<(GraphCorpus, SeedKb), CliError> {
    let corpus = load_corpus(config.corpus_path()?)?;
    let seed = load_seed_kb(config.seed_kb_path()?)?;
    Ok((corpus, seed))
}

/// Outcome of running every seed tuple against every graph.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ExtractionSummary {
    pub pairs: usize,
    pub patterns: usize,
    pub discards: BTreeMap<&'static str, usize>,
    /// relation -> (observations, distinct keys)
    pub per_relation: BTreeMap<String, (usize, usize)>,
}

impl ExtractionSummary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "pairs={}", self.pairs);
        let _ = writeln!(out, "patterns={}", self.patterns);
        for cause in Discard::ALL {
            let _ = writeln!(
                out,
                "discarded.{}={}",
                cause.name(),
                self.discards.get(cause.name()).unwrap_or(&0)
            );
        }
        for (relation, (seen, distinct)) in &self.per_relation {
            let _ = writeln!(out, "relation.{relation}.patterns={seen}");
            let _ = writeln!(out, "relation.{relation}.distinct={distinct}");
        }
        out
    }
}

/// Extracts a pattern from every (seed tuple, graph) pair. Graphs sharing no
/// word with a tuple are counted as missing without being visited.
pub fn mine_patterns(corpus: &GraphCorpus, seed: &SeedKb) -> (Vec<PatternRow>, ExtractionSummary) {
    let per_tuple: Vec<(Vec<Pattern>, Vec<Discard>, usize)> = seed
        .tuples()
        .par_iter()
        .map(|tuple| {
            let words = tuple.head.iter().chain(&tuple.tail).map(String::as_str);
            let candidates = corpus.graphs_with_any(words);
            let mut patterns = Vec::new();
            let mut discards = Vec::new();
            for &g in &candidates {
                match try_extract_pattern(tuple, &corpus.graphs()[g]) {
                    Ok(p) => patterns.push(p),
                    Err(d) => discards.push(d),
                }
            }
            (patterns, discards, corpus.len() - candidates.len())
        })
        .collect();

    let mut summary = ExtractionSummary {
        pairs: seed.len() * corpus.len(),
        ..ExtractionSummary::default()
    };
    for cause in Discard::ALL {
        summary.discards.insert(cause.name(), 0);
    }
    let mut rows = Vec::new();
    for (patterns, discards, unseen) in per_tuple {
        *summary.discards.get_mut(Discard::Missing.name()).unwrap() += unseen;
        for d in discards {
            *summary.discards.get_mut(d.name()).unwrap() += 1;
        }
        for p in patterns {
            rows.push(PatternRow {
                key: p.canonicalize(),
                relation: p.relation,
                plausibility: None,
            });
        }
    }
    rows.sort_by(|a, b| a.relation.cmp(&b.relation).then_with(|| a.key.cmp(&b.key)));
    summary.patterns = rows.len();
    for group in rows.chunk_by(|a, b| a.relation == b.relation) {
        let distinct = group.chunk_by(|a, b| a.key == b.key).count();
        summary
            .per_relation
            .insert(group[0].relation.clone(), (group.len(), distinct));
    }
    (rows, summary)
}

fn extract_patterns(config: &PipelineConfig) -> Result<(), CliError> {
    let (corpus, seed) = load_inputs(config)?;
    let (rows, summary) = mine_patterns(&corpus, &seed);
    let text = summary.to_text();
    write_all(&[
        (config.stage_file(PATTERNS), format_pattern_rows(&rows)),
        (config.stage_file(PATTERN_SUMMARY), text.clone()),
    ])?;
    print(&text);
    Ok(())
}

/// Scores every relation with seed tuples and keeps patterns above the
/// threshold; output is grouped by relation.
pub fn score_patterns(
    rows: &[PatternRow],
    seed: &SeedKb,
    threshold: f64,
) -> Result<Vec<PatternRow>, CliError> {
    let stats = stats_from_rows(rows, seed.relation_sizes().clone())?;
    let mut out = Vec::new();
    for relation in seed.relation_sizes().keys() {
        let kept = select_patterns(&stats.plausibility(relation), threshold);
        if kept.is_empty() {
            info!("relation `{relation}`: no pattern above {threshold}");
        }
        out.extend(kept.into_iter().map(|s| PatternRow {
            relation: s.relation,
            key: s.key,
            plausibility: Some(s.plausibility),
        }));
    }
    Ok(out)
}

fn select(config: &PipelineConfig) -> Result<(), CliError> {
    let seed = load_seed_kb(config.seed_kb_path()?)?;
    let path = config.stage_file(PATTERNS);
    let rows = parse_pattern_rows(&read(&path)?, &path.display().to_string())?;
    let scored = score_patterns(&rows, &seed, config.threshold)?;
    write_all(&[(
        config.stage_file(SCORED_PATTERNS),
        format_pattern_rows(&scored),
    )])
}

pub fn knowledge_from_patterns(
    rows: &[PatternRow],
    corpus: &GraphCorpus,
) -> Result<Vec<KnowledgeRow>, CliError> {
    let patterns = rows
        .iter()
        .map(|r| Pattern::from_key(&r.relation, &r.key))
        .collect::<Result<Vec<_>, _>>()?;
    let sets = aggregate_support(extract_knowledge(&patterns, corpus));
    Ok(sets.iter().map(KnowledgeRow::from_support).collect())
}

fn extract(config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = load_corpus(config.corpus_path()?)?;
    let path = config.stage_file(SCORED_PATTERNS);
    let rows = parse_pattern_rows(&read(&path)?, &path.display().to_string())?;
    if let Some(row) = rows.iter().find(|r| r.plausibility.is_none()) {
        return Err(CliError::Invalid(format!(
            "{}: pattern {} has no score; run select-patterns first",
            path.display(),
            row.key
        )));
    }
    let knowledge = knowledge_from_patterns(&rows, &corpus)?;
    info!("{} candidate tuples", knowledge.len());
    write_all(&[(
        config.stage_file(KNOWLEDGE),
        format_knowledge_rows(&knowledge),
    )])
}

fn load_knowledge(config: &PipelineConfig) -> Result<Vec<KnowledgeRow>, CliError> {
    let path = config.stage_file(KNOWLEDGE);
    Ok(parse_knowledge_rows(
        &read(&path)?,
        &path.display().to_string(),
    )?)
}

fn sample(config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = load_corpus(config.corpus_path()?)?;
    let rows = load_knowledge(config)?;
    let sets = resolve_supports(&rows, &corpus)?;
    let picked = sample_for_annotation(&sets, config.per_relation, config.seed);
    write_all(&[(config.stage_file(SAMPLE), format_annotations(&picked))])
}

fn train_ranker(config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = load_corpus(config.corpus_path()?)?;
    let path = config.annotations_path()?;
    let dataset = parse_annotations(&read(path)?, &path.display().to_string())?;
    let (ranker, log) = train(&dataset, &corpus, &config.ranker_config())?;
    let mut report = String::new();
    for (relation, losses) in &log {
        for (epoch, loss) in losses.iter().enumerate() {
            let _ = writeln!(report, "{relation}\tepoch {}\tloss {loss:.6}", epoch + 1);
        }
    }
    let checkpoint = config.checkpoint_path();
    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    save_checkpoint(&ranker, &checkpoint)?;
    print(&report);
    Ok(())
}

/// Scored rows sorted by score, plus the top-percent slice.
pub fn rank_rows(
    rows: &[KnowledgeRow],
    corpus: &GraphCorpus,
    ranker: &graphkb::ranker::Ranker,
    top_percent: f64,
) -> Result<(Vec<KnowledgeRow>, usize), CliError> {
    let sets = resolve_supports(rows, corpus)?;
    let ranked: Vec<KnowledgeRow> = rank_knowledge(&sets, corpus, ranker)
        .into_iter()
        .map(|r| KnowledgeRow {
            score: Some(r.score),
            ..KnowledgeRow::from_support(&r.candidate)
        })
        .collect();
    let top = top_percent_count(ranked.len(), top_percent);
    Ok((ranked, top))
}

fn rank(config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = load_corpus(config.corpus_path()?)?;
    let rows = load_knowledge(config)?;
    let ranker = load_checkpoint(config.checkpoint_path())?;
    for relation in rows
        .iter()
        .map(|r| r.relation.as_str())
        .collect::<std::collections::BTreeSet<_>>()
    {
        if !ranker.relations.contains_key(relation) {
            warn!("checkpoint has no classifier for `{relation}`");
        }
    }
    let (ranked, top) = rank_rows(&rows, &corpus, &ranker, config.top_percent)?;
    write_all(&[
        (config.stage_file(RANKED), format_knowledge_rows(&ranked)),
        (
            config.stage_file(TOP),
            format_knowledge_rows(&ranked[..top]),
        ),
    ])
}

fn stats(config: &PipelineConfig) -> Result<(), CliError> {
    let seed = load_seed_kb(config.seed_kb_path()?)?;
    let rows = load_knowledge(config)?;
    let report = novelty(rows.iter().map(|r| r.identity()), &seed);
    let text = report.to_text();
    write_all(&[
        (config.stage_file(STATS_TEXT), text.clone()),
        (config.stage_file(STATS_JSON), report.to_json()),
    ])?;
    print(&text);
    Ok(())
}
