//! Link-prediction ranking metrics (MR, MRR, Hits@k) over an embedding table.
//!
//! Each test triple is ranked twice, once replacing the head and once the
//! tail, against every entity by ascending translation energy. Ties count
//! half: `rank = 1 + better + ties / 2`.

use alloc::vec::Vec;

use crate::embedding::{EmbeddingTable, Norm};
use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, Triple};
use crate::transe::energy_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Setting {
    Raw,
    #[default]
    Filtered,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Raw => "raw",
            Setting::Filtered => "filtered",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rank {
    /// Mean-tie rank.
    pub rank: f64,
    pub optimistic: usize,
    pub pessimistic: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleRank {
    pub triple: Triple,
    pub head: Rank,
    pub tail: Rank,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    pub setting: Setting,
    pub mr: f64,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub optimistic_mr: f64,
    pub pessimistic_mr: f64,
    pub ranks: Vec<TripleRank>,
}

impl RankingReport {
    pub fn hits(&self, k: usize) -> f64 {
        hits_at(&self.all_ranks(), k)
    }

    fn all_ranks(&self) -> Vec<f64> {
        self.ranks
            .iter()
            .flat_map(|r| [r.head.rank, r.tail.rank])
            .collect()
    }
}

/// Sums in ascending order so aggregates do not depend on test-set order.
fn ordered_mean(mut values: Vec<f64>) -> f64 {
    let n = values.len() as f64;
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / n
}

fn hits_at(ranks: &[f64], k: usize) -> f64 {
    ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / ranks.len() as f64
}

pub fn link_prediction(
    table: &EmbeddingTable,
    g: &KnowledgeGraph,
    test: &[Triple],
    setting: Setting,
    norm: Norm,
) -> Result<RankingReport> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if table.rows() != g.vocab_size() {
        return Err(Error::Shape(alloc::format!(
            "table has {} rows, vocabulary has {}",
            table.rows(),
            g.vocab_size()
        )));
    }
    for t in test {
        g.check_ids(t)?;
    }
    let ranks: Vec<TripleRank> = test
        .iter()
        .map(|&t| TripleRank {
            triple: t,
            head: rank_side(table, g, t, true, setting, norm),
            tail: rank_side(table, g, t, false, setting, norm),
        })
        .collect();

    let all: Vec<f64> = ranks.iter().flat_map(|r| [r.head.rank, r.tail.rank]).collect();
    let optimistic: Vec<f64> = ranks
        .iter()
        .flat_map(|r| [r.head.optimistic as f64, r.tail.optimistic as f64])
        .collect();
    let pessimistic: Vec<f64> = ranks
        .iter()
        .flat_map(|r| [r.head.pessimistic as f64, r.tail.pessimistic as f64])
        .collect();
    Ok(RankingReport {
        setting,
        mr: ordered_mean(all.clone()),
        mrr: ordered_mean(all.iter().map(|r| 1.0 / r).collect()),
        hits1: hits_at(&all, 1),
        hits3: hits_at(&all, 3),
        hits10: hits_at(&all, 10),
        optimistic_mr: ordered_mean(optimistic),
        pessimistic_mr: ordered_mean(pessimistic),
        ranks,
    })
}

fn rank_side(
    table: &EmbeddingTable,
    g: &KnowledgeGraph,
    t: Triple,
    head: bool,
    setting: Setting,
    norm: Norm,
) -> Rank {
    let r = table.row(g.relation_row(t.relation));
    let score = |e: usize| {
        if head {
            energy_unchecked(table.row(e), r, table.row(t.object.index()), norm)
        } else {
            energy_unchecked(table.row(t.subject.index()), r, table.row(e), norm)
        }
    };
    let truth = if head { t.subject } else { t.object };
    let target = score(truth.index());
    let mut better = 0usize;
    let mut ties = 0usize;
    for e in 0..g.entity_count() {
        if e == truth.index() {
            continue;
        }
        if setting == Setting::Filtered {
            let candidate = if head {
                Triple { subject: EntityId(e as u32), ..t }
            } else {
                Triple { object: EntityId(e as u32), ..t }
            };
            if g.contains_unchecked(&candidate) {
                continue;
            }
        }
        let s = score(e);
        if s < target {
            better += 1;
        } else if s == target {
            ties += 1;
        }
    }
    Rank {
        rank: 1.0 + better as f64 + ties as f64 / 2.0,
        optimistic: 1 + better,
        pessimistic: 1 + better + ties,
    }
}
