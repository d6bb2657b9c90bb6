//! Fixtures, random generators and brute-force oracles shared by the
//! integration tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use graphkb::extract::Match;
use graphkb::graph::GraphType;
use graphkb::pattern::{Pattern, SlotId};
use graphkb::ranker::AnnotatedExample;
use graphkb::{GraphCorpus, LinguisticGraph, SeedTuple};
use rand::seq::SliceRandom;
use rand::Rng;

pub struct RoundTrip {
    pub tuple: SeedTuple,
    pub graph: LinguisticGraph,
    pub internal: usize,
}

fn rt(
    rel: &str,
    head: &str,
    tail: &str,
    internal: usize,
    words: &[&str],
    edges: &[(usize, usize, &str)],
) -> RoundTrip {
    RoundTrip {
        tuple: SeedTuple::new(head, rel, tail),
        graph: LinguisticGraph::from_parts(&format!("{head}/{tail}"), words, edges).unwrap(),
        internal,
    }
}

/// Hand-built (tuple, graph) pairs with 1-3 word phrases and 0-2 internal
/// nodes; phrases list their words in node order.
pub fn round_trip_fixtures() -> Vec<RoundTrip> {
    vec![
        rt(
            "CapableOf",
            "human",
            "have",
            0,
            &["human", "have", "something"],
            &[(1, 0, "nsubj"), (1, 2, "dobj")],
        ),
        rt(
            "UsedFor",
            "knife",
            "cut",
            1,
            &["knife", "use", "cut"],
            &[(1, 0, "nsubjpass"), (1, 2, "advcl")],
        ),
        rt(
            "CapableOf",
            "dog",
            "ball",
            2,
            &["dog", "like", "to", "play", "ball"],
            &[
                (1, 0, "nsubj"),
                (1, 3, "xcomp"),
                (3, 2, "mark"),
                (3, 4, "dobj"),
            ],
        ),
        rt(
            "CapableOf",
            "young man",
            "run",
            0,
            &["young", "man", "run"],
            &[(1, 0, "amod"), (2, 1, "nsubj")],
        ),
        rt(
            "CapableOf",
            "cat",
            "chase small mouse",
            0,
            &["cat", "chase", "small", "mouse"],
            &[(1, 0, "nsubj"), (1, 3, "dobj"), (3, 2, "amod")],
        ),
        rt(
            "HasProperty",
            "big red ball",
            "roll",
            0,
            &["the", "big", "red", "ball", "roll"],
            &[
                (3, 0, "det"),
                (3, 1, "amod"),
                (3, 2, "amod"),
                (4, 3, "nsubj"),
            ],
        ),
        rt(
            "AtLocation",
            "ice cream",
            "freezer door",
            1,
            &["ice", "cream", "store", "in", "freezer", "door"],
            &[
                (1, 0, "compound"),
                (2, 1, "nsubjpass"),
                (2, 5, "nmod"),
                (5, 3, "case"),
                (5, 4, "compound"),
            ],
        ),
        rt(
            "Desires",
            "student",
            "school",
            2,
            &["student", "want", "go", "school"],
            &[(1, 0, "nsubj"), (1, 2, "xcomp"), (2, 3, "dobj")],
        ),
        rt(
            "CapableOf",
            "sharp knife",
            "cut bread",
            1,
            &["sharp", "knife", "help", "chef", "cut", "bread"],
            &[
                (1, 0, "amod"),
                (2, 1, "nsubj"),
                (2, 3, "dobj"),
                (2, 4, "xcomp"),
                (4, 5, "dobj"),
            ],
        ),
        rt(
            "Causes",
            "rain",
            "cloud",
            2,
            &["rain", "fall", "because", "cloud", "form"],
            &[
                (1, 0, "nsubj"),
                (4, 3, "nsubj"),
                (1, 4, "Reason"),
                (4, 2, "mark"),
            ],
        ),
        rt(
            "AtLocation",
            "fish",
            "water",
            1,
            &["fish", "live", "in", "water"],
            &[(1, 0, "nsubj"), (1, 3, "nmod"), (3, 2, "case")],
        ),
        rt(
            "ReceivesAction",
            "apple",
            "eat",
            0,
            &["eat", "apple"],
            &[(0, 1, "dobj")],
        ),
        rt(
            "Desires",
            "man",
            "buy new car",
            1,
            &["man", "want", "buy", "new", "car"],
            &[
                (1, 0, "nsubj"),
                (1, 2, "xcomp"),
                (2, 4, "dobj"),
                (4, 3, "amod"),
            ],
        ),
        rt(
            "AtLocation",
            "old wooden chair",
            "window",
            1,
            &["old", "wooden", "chair", "stand", "near", "window"],
            &[
                (2, 0, "amod"),
                (2, 1, "amod"),
                (3, 2, "nsubj"),
                (3, 5, "nmod"),
                (5, 4, "case"),
            ],
        ),
        rt(
            "AtLocation",
            "tall tree",
            "forest",
            1,
            &["tall", "tree", "grow", "in", "forest"],
            &[
                (1, 0, "amod"),
                (2, 1, "nsubj"),
                (2, 4, "nmod"),
                (4, 3, "case"),
            ],
        ),
        rt(
            "CapableOf",
            "child",
            "toy",
            2,
            &["child", "like", "play", "with", "toy"],
            &[
                (1, 0, "nsubj"),
                (1, 2, "xcomp"),
                (2, 4, "nmod"),
                (4, 3, "case"),
            ],
        ),
        rt(
            "HasProperty",
            "water",
            "high temperature",
            1,
            &["water", "boil", "at", "high", "temperature"],
            &[
                (1, 0, "nsubj"),
                (1, 4, "nmod"),
                (4, 2, "case"),
                (4, 3, "amod"),
            ],
        ),
        rt(
            "MotivatedByGoal",
            "people",
            "swim",
            1,
            &["people", "go", "to", "beach", "swim"],
            &[
                (1, 0, "nsubj"),
                (1, 3, "nmod"),
                (3, 2, "case"),
                (1, 4, "advcl"),
            ],
        ),
        rt(
            "Causes",
            "hot coffee",
            "wake sleepy person",
            0,
            &["hot", "coffee", "wake", "sleepy", "person"],
            &[
                (1, 0, "amod"),
                (2, 1, "nsubj"),
                (2, 4, "dobj"),
                (4, 3, "amod"),
            ],
        ),
        rt(
            "UsedFor",
            "key",
            "open door",
            1,
            &["key", "use", "open", "door"],
            &[(1, 0, "nsubjpass"), (1, 2, "advcl"), (2, 3, "dobj")],
        ),
        rt(
            "AtLocation",
            "mouse",
            "bed",
            1,
            &["mouse", "hide", "under", "bed"],
            &[(1, 0, "nsubj"), (1, 3, "nmod"), (3, 2, "case")],
        ),
    ]
}

const LABELS: [&str; 3] = ["a", "b", "c"];

/// Random weakly connected graph: a random spanning tree plus extra edges,
/// random directions and labels, words drawn from `vocab`.
pub fn random_graph(
    rng: &mut impl Rng,
    id: &str,
    max_nodes: usize,
    vocab: &[&str],
    labels: usize,
) -> LinguisticGraph {
    let n = rng.random_range(1..=max_nodes);
    let words: Vec<String> = (0..n)
        .map(|_| vocab[rng.random_range(0..vocab.len())].to_string())
        .collect();
    let mut edges: BTreeSet<(usize, usize, String)> = BTreeSet::new();
    let mut add = |rng: &mut dyn rand::RngCore, a: usize, b: usize| {
        let label = LABELS[rng.random_range(0..labels)].to_string();
        if rng.random_bool(0.5) {
            edges.insert((a, b, label));
        } else {
            edges.insert((b, a, label));
        }
    };
    for v in 1..n {
        let u = rng.random_range(0..v);
        add(rng, u, v);
    }
    if n > 1 {
        for _ in 0..rng.random_range(0..=n) {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                add(rng, a, b);
            }
        }
    }
    let edges = edges
        .into_iter()
        .map(|(src, dst, label)| graphkb::graph::GraphEdge { src, dst, label })
        .collect();
    LinguisticGraph::new(id, GraphType::Eventuality, 1, words, edges).unwrap()
}

/// Graph with pairwise distinct words `w0, w1, ...`.
pub fn random_distinct_graph(rng: &mut impl Rng, id: &str, max_nodes: usize) -> LinguisticGraph {
    let g = random_graph(rng, id, max_nodes, &["x"], LABELS.len());
    let words = (0..g.len()).map(|i| format!("w{i}")).collect();
    LinguisticGraph::new(id, GraphType::Eventuality, 1, words, g.edges().to_vec()).unwrap()
}

/// Undirected BFS distances from `sources`.
pub fn bfs(graph: &LinguisticGraph, sources: &[usize]) -> Vec<Option<usize>> {
    let mut dist = vec![None; graph.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = Some(0);
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        for v in graph.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(dist[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Shortest undirected distance between any node of `a` and any of `b`,
/// taken over all pairs.
pub fn pairwise_distance(graph: &LinguisticGraph, a: &[usize], b: &[usize]) -> Option<usize> {
    a.iter()
        .flat_map(|&x| {
            let d = bfs(graph, &[x]);
            b.iter().filter_map(move |&y| d[y]).collect::<Vec<_>>()
        })
        .min()
}

fn connects(nodes: &[usize], edges: &[(usize, usize)]) -> bool {
    let Some(&start) = nodes.first() else {
        return true;
    };
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        for &(a, b) in edges {
            for (x, y) in [(a, b), (b, a)] {
                if x == u && seen.insert(y) {
                    stack.push(y);
                }
            }
        }
    }
    nodes.iter().all(|n| seen.contains(n))
}

/// Smallest edge set of the graph restricted to `positions` that connects
/// all of them, by exhaustive subset enumeration. `None` when no subset
/// connects them.
pub fn brute_force_min_connecting(graph: &LinguisticGraph, positions: &[usize]) -> Option<usize> {
    let inside: BTreeSet<usize> = positions.iter().copied().collect();
    let candidates: Vec<(usize, usize)> = graph
        .edges()
        .iter()
        .filter(|e| inside.contains(&e.src) && inside.contains(&e.dst))
        .map(|e| (e.src, e.dst))
        .collect();
    let mut best: Option<usize> = None;
    for mask in 0u64..(1u64 << candidates.len()) {
        let size = mask.count_ones() as usize;
        if best.is_some_and(|b| size >= b) {
            continue;
        }
        let chosen: Vec<(usize, usize)> = (0..candidates.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| candidates[i])
            .collect();
        if connects(positions, &chosen) {
            best = Some(size);
        }
    }
    best
}

/// Whether the given graph edges connect every position while touching
/// only positions.
pub fn edges_connect(graph: &LinguisticGraph, positions: &[usize], edges: &[usize]) -> bool {
    let inside: BTreeSet<usize> = positions.iter().copied().collect();
    let pairs: Vec<(usize, usize)> = edges
        .iter()
        .map(|&e| (graph.edges()[e].src, graph.edges()[e].dst))
        .collect();
    pairs
        .iter()
        .all(|(a, b)| inside.contains(a) && inside.contains(b))
        && connects(positions, &pairs)
}

/// Random non-empty disjoint position sets of at most `max` nodes each.
pub fn random_positions(
    rng: &mut impl Rng,
    n: usize,
    max: usize,
) -> Option<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let h = rng.random_range(1..=max.min(n - 1));
    let t = rng.random_range(1..=max.min(n - h));
    let mut head = order[..h].to_vec();
    let mut tail = order[h..h + t].to_vec();
    head.sort_unstable();
    tail.sort_unstable();
    Some((head, tail))
}

/// Every injective slot assignment satisfying literals and edges.
pub fn brute_force_matches(
    pattern: &Pattern,
    graph: &LinguisticGraph,
) -> BTreeSet<BTreeMap<SlotId, usize>> {
    let slots: Vec<SlotId> = pattern.nodes().iter().map(|n| n.slot).collect();
    let mut out = BTreeSet::new();
    let mut current = vec![0usize; slots.len()];
    fn rec(
        depth: usize,
        slots: &[SlotId],
        current: &mut Vec<usize>,
        pattern: &Pattern,
        graph: &LinguisticGraph,
        out: &mut BTreeSet<BTreeMap<SlotId, usize>>,
    ) {
        if depth == slots.len() {
            let assignment: BTreeMap<SlotId, usize> =
                slots.iter().copied().zip(current.iter().copied()).collect();
            let literal_ok = pattern.nodes().iter().all(|n| {
                n.literal
                    .as_ref()
                    .is_none_or(|w| graph.word(assignment[&n.slot]) == w)
            });
            let edges_ok = pattern
                .edges()
                .iter()
                .all(|e| graph.has_edge(assignment[&e.src], assignment[&e.dst], &e.label));
            if literal_ok && edges_ok {
                out.insert(assignment);
            }
            return;
        }
        for v in 0..graph.len() {
            if current[..depth].contains(&v) {
                continue;
            }
            current[depth] = v;
            rec(depth + 1, slots, current, pattern, graph, out);
        }
    }
    rec(0, &slots, &mut current, pattern, graph, &mut out);
    out
}

pub fn assignments(matches: &[Match]) -> BTreeSet<BTreeMap<SlotId, usize>> {
    matches.iter().map(|m| m.assignment.clone()).collect()
}

/// A pattern with at most `max_slots` slots, extracted from a random graph.
pub fn random_pattern(rng: &mut impl Rng, vocab: &[&str], max_slots: usize) -> Pattern {
    loop {
        let g = random_graph(rng, "source", 6, vocab, 2);
        let Some((head, tail)) = random_positions(rng, g.len(), 2) else {
            continue;
        };
        let phrase = |pos: &[usize]| pos.iter().map(|&p| g.word(p)).collect::<Vec<_>>().join(" ");
        let tuple = SeedTuple::new(&phrase(&head), "R", &phrase(&tail));
        if let Some(p) = graphkb::extract_pattern(&tuple, &g) {
            if p.nodes().len() <= max_slots {
                return p;
            }
        }
    }
}

/// Separable training data: a positive tuple's tail carries the modifier
/// `good`, a negative one's carries `bad`. One graph per tuple.
pub fn marker_fixture(n: usize) -> (GraphCorpus, Vec<AnnotatedExample>) {
    const HEADS: [&str; 10] = [
        "pen", "cup", "rope", "saw", "lamp", "brush", "spoon", "hammer", "bag", "net",
    ];
    const TAILS: [&str; 10] = [
        "write", "drink", "climb", "cut", "read", "paint", "stir", "build", "carry", "catch",
    ];
    let mut graphs = Vec::with_capacity(n);
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i % 2 == 0;
        let head = HEADS[(i / 2) % HEADS.len()];
        let tail = TAILS[(i / 2 + i / 20) % TAILS.len()];
        let marker = if positive { "good" } else { "bad" };
        let id = format!("m{i:03}");
        let g = LinguisticGraph::from_parts(
            &id,
            &[head, "use", tail, marker],
            &[(1, 0, "nsubjpass"), (1, 2, "advcl"), (2, 3, "advmod")],
        )
        .unwrap();
        graphs.push(g);
        examples.push(AnnotatedExample {
            tuple: SeedTuple::new(head, "UsedFor", tail),
            label: Some(positive),
            graph_ids: vec![id],
        });
    }
    (GraphCorpus::new(graphs).unwrap(), examples)
}

/// `H0 - I0 - ... - T0` with the given literals; every edge points away
/// from the head and carries `label`.
pub fn chain_pattern(relation: &str, literals: &[&str], label: &str) -> Pattern {
    use graphkb::pattern::{PatternEdge, PatternNode};
    let mut slots = vec![SlotId::head(0)];
    slots.extend((0..literals.len()).map(SlotId::internal));
    slots.push(SlotId::tail(0));
    let nodes = slots
        .iter()
        .map(|&slot| PatternNode {
            slot,
            literal: (slot.role == graphkb::pattern::SlotRole::InternalLiteral)
                .then(|| literals[slot.index].to_string()),
        })
        .collect();
    let edges = slots
        .windows(2)
        .map(|w| PatternEdge {
            src: w[0],
            dst: w[1],
            label: label.to_string(),
        })
        .collect();
    Pattern::new(relation, nodes, edges).unwrap()
}

/// Raw tables behind a randomized stats fixture.
pub struct StatsFixture {
    pub sizes: BTreeMap<String, usize>,
    /// (relation, key) -> count
    pub counts: BTreeMap<(String, String), u64>,
    /// key -> edge count
    pub lengths: BTreeMap<String, usize>,
}

pub fn random_stats_fixture(rng: &mut impl Rng) -> StatsFixture {
    let relations: Vec<String> = (0..rng.random_range(1..=3))
        .map(|i| format!("R{i}"))
        .collect();
    let sizes = relations
        .iter()
        .map(|r| (r.clone(), rng.random_range(1..=12)))
        .collect();
    let mut lengths = BTreeMap::new();
    for k in 0..rng.random_range(2..=8) {
        let literals: Vec<String> = (0..rng.random_range(0..=2))
            .map(|i| format!("w{k}x{i}"))
            .collect();
        let refs: Vec<&str> = literals.iter().map(String::as_str).collect();
        let key = chain_pattern("R", &refs, &format!("l{k}")).canonicalize();
        lengths.insert(key.as_str().to_string(), refs.len() + 1);
    }
    let mut counts = BTreeMap::new();
    for r in &relations {
        for key in lengths.keys() {
            if rng.random_bool(0.6) {
                counts.insert((r.clone(), key.clone()), rng.random_range(1..=20));
            }
        }
        if !counts.keys().any(|(rel, _)| rel == r) {
            let key = lengths.keys().next().unwrap().clone();
            counts.insert((r.clone(), key), rng.random_range(1..=20));
        }
    }
    StatsFixture {
        sizes,
        counts,
        lengths,
    }
}

impl StatsFixture {
    /// Straight-line evaluation of the plausibility formula for one
    /// relation, keyed by pattern key.
    pub fn oracle(&self, relation: &str) -> BTreeMap<String, f64> {
        let weight = |r: &str, key: &str| {
            let c = *self
                .counts
                .get(&(r.to_string(), key.to_string()))
                .unwrap_or(&0) as f64;
            c / (self.sizes[r] as f64).sqrt()
        };
        let mut raw = BTreeMap::new();
        for ((r, key), &c) in &self.counts {
            if r != relation {
                continue;
            }
            let denom: f64 = self.sizes.keys().map(|r2| weight(r2, key)).sum();
            let u = weight(relation, key) / denom;
            raw.insert(key.clone(), c as f64 * self.lengths[key] as f64 * u);
        }
        let total: f64 = raw.values().sum();
        raw.into_iter().map(|(k, f)| (k, f / total)).collect()
    }
}
