use alloc::vec;
use alloc::vec::Vec;

use super::encoder::forward;
use super::params::ModelParams;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph};
use crate::sampler::{convert, sample_ego_seeded, Fanout};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportMode {
    /// The embedding matrix as-is.
    Base,
    /// Per entity, the mean encoder output over `k_samples` ego samples
    /// centered on it. Relation rows average the outputs of every relation
    /// node seen in those samples.
    EncodedMean { k_samples: usize, fanout: Fanout, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct Export {
    pub table: EmbeddingTable,
    /// Entities without triples, exported as their embedding row.
    pub isolated_fallbacks: usize,
    /// Relations never met in any sample, exported as their embedding row.
    pub unseen_relations: usize,
}

/// Seed of the `draw`-th ego sample around `entity` in encoded-mean export.
pub fn draw_seed(base: u64, entity: usize, draw: usize) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = base
        ^ (entity as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (draw as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn export_embeddings(params: &ModelParams, g: &KnowledgeGraph, mode: ExportMode) -> Result<Export> {
    if params.entity_count != g.entity_count() || params.relation_count != g.relation_count() {
        return Err(Error::Shape(alloc::format!(
            "model vocabulary {}+{} does not match graph {}+{}",
            params.entity_count,
            params.relation_count,
            g.entity_count(),
            g.relation_count()
        )));
    }
    let base = params.embedding_table();
    let (k_samples, fanout, seed) = match mode {
        ExportMode::Base => {
            return Ok(Export {
                table: base,
                isolated_fallbacks: 0,
                unseen_relations: 0,
            })
        }
        ExportMode::EncodedMean { k_samples, fanout, seed } => (k_samples, fanout, seed),
    };
    if k_samples == 0 {
        return Err(Error::InvalidArgument("k_samples must be at least 1".into()));
    }
    let d = params.arch.dim;
    let n_e = g.entity_count();
    let mut table = base.clone();
    let mut rel_sum = vec![0.0; g.relation_count() * d];
    let mut rel_count = vec![0usize; g.relation_count()];
    let mut isolated_fallbacks = 0;

    for e in 0..n_e {
        let center = EntityId(e as u32);
        if g.degree(center) == 0 {
            isolated_fallbacks += 1;
            continue;
        }
        let mut sum = vec![0.0; d];
        for draw in 0..k_samples {
            let sub = sample_ego_seeded(g, center, fanout, draw_seed(seed, e, draw))?;
            let sample = convert(&sub);
            let out = forward(params, &sample)?.output;
            let pos = sample
                .node_ids
                .iter()
                .position(|&id| id == e)
                .expect("center is in its own sample");
            for (s, v) in sum.iter_mut().zip(out.row(pos)) {
                *s += v;
            }
            for (i, &id) in sample.node_ids.iter().enumerate() {
                if id >= n_e {
                    let r = id - n_e;
                    rel_count[r] += 1;
                    for (s, v) in rel_sum[r * d..(r + 1) * d].iter_mut().zip(out.row(i)) {
                        *s += v;
                    }
                }
            }
        }
        for (t, s) in table.row_mut(e).iter_mut().zip(&sum) {
            *t = s / k_samples as f64;
        }
    }
    let mut unseen_relations = 0;
    for (r, &count) in rel_count.iter().enumerate() {
        if count == 0 {
            unseen_relations += 1;
            continue;
        }
        let row: Vec<f64> = rel_sum[r * d..(r + 1) * d].iter().map(|s| s / count as f64).collect();
        table.row_mut(n_e + r).copy_from_slice(&row);
    }
    Ok(Export {
        table,
        isolated_fallbacks,
        unseen_relations,
    })
}
