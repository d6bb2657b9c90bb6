//! Multi-instance plausibility ranking of candidate tuples.
//!
//! Each (tuple, supporting graph) pair is scored by a small network, and a
//! tuple's score is the mean over its supporting graphs. One classifier is
//! trained per relation with plain SGD on binary cross-entropy.

mod checkpoint;
mod data;
mod model;

use std::collections::BTreeMap;

use log::warn;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::SupportSet;
use crate::graph::{GraphCorpus, LinguisticGraph, SeedTuple};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use data::{
    check_graph_ids, format_annotations, parse_annotations, AnnotatedExample, Bag, Instance,
};
pub use model::{sigmoid, EncoderLayer, Forward, RankerParams};

use model::{backward, bag_loss, forward, Gradients};

/// Token to row mapping; row 0 is `<UNK>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab(BTreeMap<String, usize>);

impl Vocab {
    pub const UNK: &'static str = "<UNK>";
    pub const UNK_ID: usize = 0;

    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut sorted: Vec<&str> = words.into_iter().filter(|w| *w != Self::UNK).collect();
        sorted.sort_unstable();
        sorted.dedup();
        let mut map = BTreeMap::new();
        map.insert(Self::UNK.to_string(), Self::UNK_ID);
        for (i, w) in sorted.into_iter().enumerate() {
            map.insert(w.to_string(), i + 1);
        }
        Vocab(map)
    }

    pub fn id(&self, word: &str) -> usize {
        self.0.get(word).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn is_valid(&self) -> bool {
        let mut ids: Vec<usize> = self.0.values().copied().collect();
        ids.sort_unstable();
        self.0.get(Self::UNK) == Some(&Self::UNK_ID)
            && ids.iter().enumerate().all(|(i, &id)| i == id)
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from_words([])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerConfig {
    pub embed_dim: usize,
    pub encoder_layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub rng_seed: u64,
    /// Add sinusoidal word-order encodings to the embeddings.
    #[serde(default)]
    pub positional: bool,
    pub vocab: Vocab,
}

impl Default for RankerConfig {
    fn default() -> Self {
        RankerConfig {
            embed_dim: 32,
            encoder_layers: 1,
            learning_rate: 0.1,
            epochs: 50,
            rng_seed: 0,
            positional: false,
            vocab: Vocab::default(),
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 {
            return Err(Error::Invalid(
                "embedding dimension must be at least 2".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("learning rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Invalid("epochs must be positive".into()));
        }
        if !self.vocab.is_valid() {
            return Err(Error::Invalid(
                "vocabulary must contain <UNK> at row 0 and dense ids".into(),
            ));
        }
        Ok(())
    }
}

/// Per-relation classifiers sharing one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranker {
    pub config: RankerConfig,
    pub relations: BTreeMap<String, RankerParams>,
}

/// Contextual embeddings of every word in the graph.
pub fn encode_tokens(
    graph: &LinguisticGraph,
    params: &RankerParams,
    config: &RankerConfig,
) -> Array2<f64> {
    let tokens: Vec<usize> = graph
        .nodes()
        .iter()
        .map(|n| config.vocab.id(&n.word))
        .collect();
    model::encode(params, model::embed(params, &tokens, config.positional))
}

/// Attention weights per node (aligned with `self ∪ neighbors`, ascending)
/// and the attended representations.
pub struct GraphAttention {
    pub weights: Vec<Vec<f64>>,
    pub attended: Array2<f64>,
}

pub fn graph_attention(
    e: &Array2<f64>,
    graph: &LinguisticGraph,
    params: &RankerParams,
) -> GraphAttention {
    let hoods: Vec<Vec<usize>> = (0..graph.len())
        .map(|i| {
            let mut h = graph.neighbors(i);
            h.push(i);
            h.sort_unstable();
            h
        })
        .collect();
    let (weights, attended) = model::attend(params, e, &hoods);
    GraphAttention { weights, attended }
}

pub fn predict_instance(inst: &Instance, params: &RankerParams, config: &RankerConfig) -> f64 {
    sigmoid(forward(params, config, inst).logit)
}

/// Instance score f(k|g); `None` when the graph lacks every head word or
/// every tail word.
pub fn predict_plausibility(
    tuple: &SeedTuple,
    graph: &LinguisticGraph,
    params: &RankerParams,
    config: &RankerConfig,
) -> Option<f64> {
    Instance::from_words(tuple, graph, &config.vocab)
        .map(|inst| predict_instance(&inst, params, config))
}

/// Mean instance score over the supporting graphs; 0 when none can be
/// scored.
pub fn tuple_score(
    tuple: &SeedTuple,
    supports: &[&LinguisticGraph],
    params: &RankerParams,
    config: &RankerConfig,
) -> f64 {
    let scores: Vec<f64> = supports
        .iter()
        .filter_map(|g| {
            let s = predict_plausibility(tuple, g, params, config);
            if s.is_none() {
                warn!(
                    "skipping graph `{}` for {tuple}: head or tail words absent",
                    g.id
                );
            }
            s
        })
        .collect();
    if scores.is_empty() {
        warn!("no scorable supporting graph for {tuple}; scoring 0");
        return 0.0;
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// Bag loss and its gradient with respect to every parameter.
fn bag_gradients(params: &RankerParams, config: &RankerConfig, bag: &Bag) -> (f64, Gradients) {
    let passes: Vec<Forward> = bag
        .instances
        .iter()
        .map(|inst| forward(params, config, inst))
        .collect();
    let logits: Vec<f64> = passes.iter().map(|f| f.logit).collect();
    let (loss, d_logits) = bag_loss(&logits, bag.label);
    let mut grads = Gradients::zeros(params.dim(), params.layers.len());
    for ((inst, fwd), &dz) in bag.instances.iter().zip(&passes).zip(&d_logits) {
        backward(params, inst, fwd, dz, &mut grads);
    }
    (loss, grads)
}

pub fn bag_loss_value(params: &RankerParams, config: &RankerConfig, bag: &Bag) -> f64 {
    let logits: Vec<f64> = bag
        .instances
        .iter()
        .map(|inst| forward(params, config, inst).logit)
        .collect();
    bag_loss(&logits, bag.label).0
}

pub fn bag_score(params: &RankerParams, config: &RankerConfig, bag: &Bag) -> f64 {
    let total: f64 = bag
        .instances
        .iter()
        .map(|i| predict_instance(i, params, config))
        .sum();
    total / bag.instances.len() as f64
}

/// Analytic loss gradient laid out like [`RankerParams::values`].
pub fn analytic_gradient(params: &RankerParams, config: &RankerConfig, bag: &Bag) -> Vec<f64> {
    bag_gradients(params, config, bag)
        .1
        .dense_values(params.vocab_size())
}

/// Largest relative difference between the analytic gradient and central
/// finite differences (step 1e-4) over every parameter. Differences are
/// measured relative to `max(|analytic|, |numeric|, 1e-6)`.
pub fn gradient_check(params: &RankerParams, bag: &Bag, config: &RankerConfig) -> f64 {
    const STEP: f64 = 1e-4;
    let analytic = analytic_gradient(params, config, bag);
    let base = params.values();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let mut shifted = base.clone();
        shifted[k] = base[k] + STEP;
        probe.set_values(&shifted);
        let up = bag_loss_value(&probe, config, bag);
        shifted[k] = base[k] - STEP;
        probe.set_values(&shifted);
        let down = bag_loss_value(&probe, config, bag);
        let numeric = (up - down) / (2.0 * STEP);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// Builds the bag for an annotated example, skipping graphs that cannot be
/// pooled. `None` when no graph survives or the example is unlabeled.
pub fn make_bag(example: &AnnotatedExample, corpus: &GraphCorpus, vocab: &Vocab) -> Option<Bag> {
    let label = example.label?;
    let instances: Vec<Instance> = example
        .graph_ids
        .iter()
        .filter_map(|id| {
            let graph = corpus.get(id)?;
            let inst = Instance::from_words(&example.tuple, graph, vocab);
            if inst.is_none() {
                warn!(
                    "skipping graph `{id}` for {}: head or tail words absent",
                    example.tuple
                );
            }
            inst
        })
        .collect();
    if instances.is_empty() {
        warn!("dropping {}: no usable supporting graph", example.tuple);
        return None;
    }
    Some(Bag { instances, label })
}

/// Vocabulary over every word of every graph referenced by `dataset`.
pub fn build_vocab(dataset: &[AnnotatedExample], corpus: &GraphCorpus) -> Vocab {
    Vocab::from_words(
        dataset
            .iter()
            .flat_map(|ex| &ex.graph_ids)
            .filter_map(|id| corpus.get(id))
            .flat_map(|g| g.nodes().iter().map(|n| n.word.as_str())),
    )
}

/// Mean training loss per epoch, per relation.
pub type TrainingLog = BTreeMap<String, Vec<f64>>;

fn relation_seed(seed: u64, relation: &str) -> u64 {
    // FNV-1a, stable across platforms and releases
    let mut h: u64 = 0xcbf29ce484222325;
    for b in relation.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    seed ^ h
}

/// Trains one classifier per relation. `config.vocab` is replaced by the
/// vocabulary of the graphs the dataset references.
pub fn train(
    dataset: &[AnnotatedExample],
    corpus: &GraphCorpus,
    config: &RankerConfig,
) -> Result<(Ranker, TrainingLog)> {
    if dataset.is_empty() {
        return Err(Error::Invalid("annotation dataset is empty".into()));
    }
    if let Some(ex) = dataset.iter().find(|ex| ex.label.is_none()) {
        return Err(Error::Invalid(format!(
            "annotation for {} has no label",
            ex.tuple
        )));
    }
    check_graph_ids(dataset, corpus)?;
    let mut config = config.clone();
    config.vocab = build_vocab(dataset, corpus);
    config.validate()?;

    let mut by_relation: BTreeMap<&str, Vec<Bag>> = BTreeMap::new();
    for ex in dataset {
        if let Some(bag) = make_bag(ex, corpus, &config.vocab) {
            by_relation
                .entry(ex.tuple.relation.as_str())
                .or_default()
                .push(bag);
        }
    }
    let mut relations = BTreeMap::new();
    let mut log = TrainingLog::new();
    for (relation, bags) in by_relation {
        let (params, losses) = train_relation(relation, &bags, &config, |_, _| {})?;
        relations.insert(relation.to_string(), params);
        log.insert(relation.to_string(), losses);
    }
    Ok((Ranker { config, relations }, log))
}

/// SGD over one relation's bags. `on_epoch` sees (epoch, mean loss).
pub fn train_relation(
    relation: &str,
    bags: &[Bag],
    config: &RankerConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(RankerParams, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(relation_seed(config.rng_seed, relation));
    let mut params = RankerParams::random(config, &mut rng);
    let mut order: Vec<usize> = (0..bags.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grads) = bag_gradients(&params, config, &bags[i]);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    relation: relation.to_string(),
                    epoch,
                    example: i,
                });
            }
            total += loss;
            params.apply(&grads, -config.learning_rate);
        }
        let mean = if bags.is_empty() {
            0.0
        } else {
            total / bags.len() as f64
        };
        on_epoch(epoch, mean);
        losses.push(mean);
    }
    if !params.is_finite() {
        return Err(Error::NonFiniteLoss {
            relation: relation.to_string(),
            epoch: config.epochs,
            example: 0,
        });
    }
    Ok((params, losses))
}

/// Fraction of bags whose mean score falls on the labeled side of 0.5.
pub fn accuracy(params: &RankerParams, config: &RankerConfig, bags: &[Bag]) -> f64 {
    if bags.is_empty() {
        return 0.0;
    }
    let correct = bags
        .iter()
        .filter(|b| (bag_score(params, config, b) > 0.5) == b.label)
        .count();
    correct as f64 / bags.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub candidate: SupportSet,
    pub score: f64,
}

/// Scores every candidate and sorts by (score descending, head, relation,
/// tail). Candidates of relations without a trained classifier score 0.
pub fn rank_knowledge(
    candidates: &[SupportSet],
    corpus: &GraphCorpus,
    ranker: &Ranker,
) -> Vec<RankedCandidate> {
    for relation in candidates
        .iter()
        .map(|c| c.relation.as_str())
        .collect::<std::collections::BTreeSet<_>>()
    {
        if !ranker.relations.contains_key(relation) {
            warn!("no trained classifier for relation `{relation}`; its candidates score 0");
        }
    }
    let mut ranked: Vec<RankedCandidate> = candidates
        .par_iter()
        .map(|c| {
            let score = match ranker.relations.get(&c.relation) {
                Some(params) => {
                    let tuple = SeedTuple {
                        head: c.head.clone(),
                        relation: c.relation.clone(),
                        tail: c.tail.clone(),
                    };
                    let graphs: Vec<&LinguisticGraph> = c
                        .graph_ids()
                        .into_iter()
                        .filter_map(|id| corpus.get(id))
                        .collect();
                    tuple_score(&tuple, &graphs, params, &ranker.config)
                }
                None => 0.0,
            };
            RankedCandidate {
                candidate: c.clone(),
                score,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.candidate.head_text().cmp(&b.candidate.head_text()))
            .then_with(|| a.candidate.relation.cmp(&b.candidate.relation))
            .then_with(|| a.candidate.tail_text().cmp(&b.candidate.tail_text()))
    });
    ranked
}

/// Number of items in the top `percent`% of `len` (rounded up).
pub fn top_percent_count(len: usize, percent: f64) -> usize {
    let exact = len as f64 * percent / 100.0;
    // absorb representation error such as 10 * 10.0 / 100.0 landing above 1
    ((exact - 1e-9).ceil().max(0.0) as usize).min(len)
}
