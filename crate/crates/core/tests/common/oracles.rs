//! Brute-force reference implementations used to cross-check the library.

use std::collections::BTreeSet;

use kgformer_core::linker::{normalize, TermDictionary};
use kgformer_core::{EmbeddingTable, KnowledgeGraph, Norm, RelationId, EntityId, TrainingSample, Triple};

/// Rebuilds the triple set of a sample from node ids and adjacency alone,
/// checking the structural invariants on the way.
pub fn reconstruct(sample: &TrainingSample) -> Result<BTreeSet<Triple>, String> {
    let n = sample.len();
    let n_e = sample.entity_count();
    let a = sample.adjacency_rows();
    let ones: usize = a.iter().flatten().map(|&x| x as usize).sum();
    let rel_nodes: Vec<usize> = (0..n).filter(|&i| sample.node_ids[i] >= n_e).collect();
    let t = rel_nodes.len();
    if ones != 2 * t {
        return Err(format!("{ones} adjacency ones for {t} relation nodes"));
    }
    if (0..n).any(|i| a[i][i] != 0) {
        return Err("non-zero trace".into());
    }
    let entities: BTreeSet<usize> =
        sample.node_ids.iter().copied().filter(|&id| id < n_e).collect();
    if entities.len() + t != n {
        return Err(format!("N={n} but {} entities and {t} triples", entities.len()));
    }
    let mut triples = BTreeSet::new();
    for &j in &rel_nodes {
        let subj: Vec<usize> = (0..n).filter(|&i| a[i][j] == 1).collect();
        let obj: Vec<usize> = (0..n).filter(|&k| a[j][k] == 1).collect();
        if subj.len() != 1 || obj.len() != 1 {
            return Err(format!("relation node {j} has {} in / {} out", subj.len(), obj.len()));
        }
        let (s, o) = (sample.node_ids[subj[0]], sample.node_ids[obj[0]]);
        if s >= n_e || o >= n_e {
            return Err(format!("relation node {j} links a non-entity"));
        }
        triples.insert(Triple {
            subject: EntityId(s as u32),
            relation: RelationId((sample.node_ids[j] - n_e) as u32),
            object: EntityId(o as u32),
        });
    }
    Ok(triples)
}

pub fn energy(s: &[f64], r: &[f64], o: &[f64], norm: Norm) -> f64 {
    let diffs = s.iter().zip(r).zip(o).map(|((s, r), o)| s + r - o);
    match norm {
        Norm::L1 => diffs.map(f64::abs).sum(),
        Norm::L2 => diffs.map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// Mean-tie rank of the true head (`head = true`) or tail among all entities.
pub fn rank(table: &EmbeddingTable, g: &KnowledgeGraph, t: Triple, head: bool, filtered: bool, norm: Norm) -> f64 {
    let r = table.row(g.relation_row(t.relation));
    let score = |e: usize| {
        if head {
            energy(table.row(e), r, table.row(t.object.index()), norm)
        } else {
            energy(table.row(t.subject.index()), r, table.row(e), norm)
        }
    };
    let truth = if head { t.subject } else { t.object }.index();
    let target = score(truth);
    let (mut better, mut ties) = (0.0, 0.0);
    for e in 0..g.entity_count() {
        if e == truth {
            continue;
        }
        let candidate = if head {
            Triple { subject: EntityId(e as u32), ..t }
        } else {
            Triple { object: EntityId(e as u32), ..t }
        };
        if filtered && g.triples().contains(&candidate) {
            continue;
        }
        let s = score(e);
        if s < target {
            better += 1.0;
        } else if s == target {
            ties += 1.0;
        }
    }
    1.0 + better + ties / 2.0
}

/// `(start, end, normalized term)` spans by trying every substring: at each
/// start the longest dictionary hit wins, spans shorter than `min_len` are
/// dropped and the scan moves on by one character.
pub fn link(text: &str, dict: &TermDictionary, min_len: usize) -> Vec<(usize, usize, EntityId)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let mut best = None;
        if !chars[i].is_whitespace() {
            for j in i + 1..=chars.len() {
                if chars[i..j].contains(&'\n') {
                    break;
                }
                if chars[j - 1].is_whitespace() {
                    continue;
                }
                let window: String = chars[i..j].iter().collect();
                if let Some(e) = dict.get(&normalize(&window)) {
                    best = Some((j, e));
                }
            }
        }
        match best {
            Some((j, e)) if j - i >= min_len => {
                out.push((i, j, e));
                i = j;
            }
            _ => i += 1,
        }
    }
    out
}
