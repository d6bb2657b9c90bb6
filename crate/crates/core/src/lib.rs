//! Mining relation-typed knowledge tuples from corpora of labeled
//! linguistic graphs.
//!
//! The pipeline runs in four stages: [`pattern`] extraction from seed
//! tuples, [`score`]-based pattern selection, corpus-wide application of
//! the selected patterns ([`extract`]), and plausibility ranking of the
//! resulting candidates ([`ranker`]). [`metrics`] reports quantity and
//! novelty of the output.

pub mod error;
pub mod extract;
pub mod graph;
pub mod metrics;
pub mod pattern;
pub mod ranker;
pub mod score;

pub use error::{Error, Result};
pub use graph::{
    load_corpus, load_seed_kb, locate_phrase, GraphCorpus, LinguisticGraph, PhraseMatch, SeedKb,
    SeedTuple,
};
pub use pattern::{extract_pattern, Pattern, PatternKey};
