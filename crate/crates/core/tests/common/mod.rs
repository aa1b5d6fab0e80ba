#![allow(dead_code)]

use kgformer_core::{seeded_rng, KnowledgeGraph};
use rand::Rng;

pub fn graph(text: &str) -> KnowledgeGraph {
    KnowledgeGraph::ingest_lines(text.lines()).unwrap().0
}

/// `a0 -next-> a1 -next-> ... -> a(n-1) -next-> a0`.
pub fn cycle_graph(n: usize) -> KnowledgeGraph {
    let text: String = (0..n)
        .map(|i| format!("a{i}\tnext\ta{}\n", (i + 1) % n))
        .collect();
    graph(&text)
}

/// Uniform random triples over `entities` x `relations` x `entities`,
/// self-loops excluded. Duplicates collapse, so the triple count may be lower.
pub fn random_graph(entities: usize, relations: usize, triples: usize, seed: u64) -> KnowledgeGraph {
    let mut rng = seeded_rng(seed);
    let mut text = String::new();
    for _ in 0..triples {
        let s = rng.gen_range(0..entities);
        let mut o = rng.gen_range(0..entities);
        while o == s {
            o = rng.gen_range(0..entities);
        }
        let r = rng.gen_range(0..relations);
        text.push_str(&format!("e{s}\tr{r}\te{o}\n"));
    }
    graph(&text)
}

/// Two in-triples and two out-triples around `e`.
pub fn star_graph() -> KnowledgeGraph {
    graph("e1\tr1\te\ne2\tr2\te\ne\tr3\te3\ne\tr4\te4\n")
}

pub mod oracles;

/// Golden linker corpus: a 30-term dictionary and 10 documents.
pub fn golden_corpus() -> (kgformer_core::linker::TermDictionary, Vec<&'static str>) {
    let mut labels: Vec<&str> = Vec::new();
    let mut dict = kgformer_core::linker::TermDictionary::new();
    for line in include_str!("../data/terms.tsv").lines() {
        let (term, label) = line.split_once('\t').unwrap();
        let id = labels.iter().position(|l| *l == label).unwrap_or_else(|| {
            labels.push(label);
            labels.len() - 1
        });
        dict.insert(term, kgformer_core::EntityId(id as u32)).unwrap();
    }
    let docs = include_str!("../data/docs.txt").split("===\n").collect();
    (dict, docs)
}
