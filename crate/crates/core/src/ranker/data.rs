use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{GraphCorpus, GraphType, LinguisticGraph, SeedTuple};

use super::Vocab;

/// One annotation row: `head<TAB>relation<TAB>tail<TAB>label<TAB>graph_ids`.
/// The label is blank in freshly sampled files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedExample {
    pub tuple: SeedTuple,
    pub label: Option<bool>,
    pub graph_ids: Vec<String>,
}

pub fn parse_annotations(text: &str, source_name: &str) -> Result<Vec<AnnotatedExample>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(source_name, lineno + 1, msg);
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", f.len())));
        }
        let tuple = SeedTuple::new(f[0], f[1].trim(), f[2]);
        if tuple.head.is_empty() || tuple.tail.is_empty() || tuple.relation.is_empty() {
            return Err(err("empty head, relation or tail".into()));
        }
        let label = match f[3].trim() {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => return Err(err(format!("label must be 0 or 1, found {other:?}"))),
        };
        let graph_ids: Vec<String> = f[4]
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if graph_ids.is_empty() {
            return Err(err("no supporting graph ids".into()));
        }
        out.push(AnnotatedExample {
            tuple,
            label,
            graph_ids,
        });
    }
    Ok(out)
}

pub fn format_annotations(rows: &[AnnotatedExample]) -> String {
    let mut out = String::new();
    for row in rows {
        let label = match row.label {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            row.tuple.head_text(),
            row.tuple.relation,
            row.tuple.tail_text(),
            label,
            row.graph_ids.join(",")
        );
    }
    out
}

/// Fails with every graph id that does not resolve in `corpus`.
pub fn check_graph_ids(rows: &[AnnotatedExample], corpus: &GraphCorpus) -> Result<()> {
    let missing: BTreeSet<&str> = rows
        .iter()
        .flat_map(|r| &r.graph_ids)
        .filter(|id| corpus.get(id).is_none())
        .map(String::as_str)
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::UnknownGraphs(
            missing.into_iter().map(String::from).collect(),
        ))
    }
}

/// A (tuple, graph) pair prepared for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub tokens: Vec<usize>,
    /// Per node: itself plus its graph neighbors, ascending.
    pub neighborhoods: Vec<Vec<usize>>,
    pub head_nodes: Vec<usize>,
    pub tail_nodes: Vec<usize>,
    pub o_fre: f64,
    pub o_type: f64,
}

impl Instance {
    pub fn from_positions(
        graph: &LinguisticGraph,
        vocab: &Vocab,
        head_nodes: Vec<usize>,
        tail_nodes: Vec<usize>,
    ) -> Option<Self> {
        if head_nodes.is_empty() || tail_nodes.is_empty() {
            return None;
        }
        let neighborhoods = (0..graph.len())
            .map(|i| {
                let mut hood = graph.neighbors(i);
                let at = hood.binary_search(&i).unwrap_err();
                hood.insert(at, i);
                hood
            })
            .collect();
        Some(Instance {
            tokens: graph.nodes().iter().map(|n| vocab.id(&n.word)).collect(),
            neighborhoods,
            head_nodes,
            tail_nodes,
            o_fre: (1.0 + graph.freq as f64).ln(),
            o_type: match graph.gtype {
                GraphType::Eventuality => 1.0,
                GraphType::Discourse => 0.0,
            },
        })
    }

    /// Head and tail nodes are those whose word appears in the tuple's head
    /// or tail phrase. `None` when either side has no word in the graph.
    pub fn from_words(tuple: &SeedTuple, graph: &LinguisticGraph, vocab: &Vocab) -> Option<Self> {
        let pick = |phrase: &[String]| -> Vec<usize> {
            graph
                .nodes()
                .iter()
                .filter(|n| phrase.contains(&n.word))
                .map(|n| n.index)
                .collect()
        };
        Self::from_positions(graph, vocab, pick(&tuple.head), pick(&tuple.tail))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A tuple's bag of instances with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub instances: Vec<Instance>,
    pub label: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotation_rows() {
        let text = "song\tUsedFor\tsing\t1\tg1,g2\nsong\tUsedFor\tdance\t\tg3\n";
        let rows = parse_annotations(text, "a").unwrap();
        assert_eq!(rows[0].label, Some(true));
        assert_eq!(rows[0].graph_ids, vec!["g1", "g2"]);
        assert_eq!(rows[1].label, None);
        assert_eq!(format_annotations(&rows), text);
        assert!(parse_annotations("a\tR\tb\t2\tg1\n", "a").is_err());
        assert!(parse_annotations("a\tR\tb\t1\t\n", "a").is_err());
    }

    #[test]
    fn unknown_ids_listed() {
        let corpus =
            GraphCorpus::new(vec![LinguisticGraph::from_parts("g1", &["a"], &[]).unwrap()])
                .unwrap();
        let rows = parse_annotations("a\tR\tb\t1\tg1,g9,g7\n", "a").unwrap();
        match check_graph_ids(&rows, &corpus).unwrap_err() {
            Error::UnknownGraphs(ids) => assert_eq!(ids, vec!["g7", "g9"]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn instance_features() {
        let g = LinguisticGraph::from_parts(
            "g",
            &["human", "have", "something"],
            &[(1, 0, "nsubj"), (1, 2, "dobj")],
        )
        .unwrap();
        let vocab = Vocab::from_words(["human", "have"]);
        let inst = Instance::from_words(&SeedTuple::new("human", "CapableOf", "have"), &g, &vocab)
            .unwrap();
        assert_eq!(inst.head_nodes, vec![0]);
        assert_eq!(inst.tail_nodes, vec![1]);
        assert_eq!(inst.neighborhoods[1], vec![0, 1, 2]);
        assert_eq!(inst.neighborhoods[0], vec![0, 1]);
        assert_eq!(inst.tokens[2], Vocab::UNK_ID);
        assert!((inst.o_fre - 2f64.ln()).abs() < 1e-15);
        assert_eq!(inst.o_type, 1.0);
        assert!(
            Instance::from_words(&SeedTuple::new("dog", "CapableOf", "have"), &g, &vocab).is_none()
        );
    }
}
