use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::encoder::BoundParams;
use super::loss::{margin_loss_on, rows_touched, NegativeMode};
use super::params::{Architecture, ModelParams};
use crate::embedding::{EmbeddingTable, Norm};
use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph};
use crate::numerics::{Gradients, Tape};
use crate::sampler::{convert, corrupt, sample_ego, Fanout};

#[derive(Debug, Clone, PartialEq)]
pub struct KgfConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    /// Feed-forward width; `4 * dim` when unset.
    pub ff_dim: Option<usize>,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Ego samples per SGD step.
    pub batch_size: usize,
    pub seed: u64,
    pub negative_mode: NegativeMode,
    pub fanout: Fanout,
    pub norm: Norm,
}

impl Default for KgfConfig {
    fn default() -> Self {
        KgfConfig {
            layers: 4,
            heads: 4,
            dim: 16,
            ff_dim: None,
            margin: 1.0,
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 128,
            seed: 0,
            negative_mode: NegativeMode::Substitute,
            fanout: Fanout::default(),
            norm: Norm::L1,
        }
    }
}

impl KgfConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            dim: self.dim,
            heads: self.heads,
            layers: self.layers,
            ff_dim: self.ff_dim.unwrap_or(4 * self.dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture().validate()?;
        if !(self.margin > 0.0) {
            return Err(Error::InvalidArgument("margin must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if self.fanout.k_in + self.fanout.k_out == 0 {
            return Err(Error::InvalidArgument("k_in + k_out must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Training {
    pub params: ModelParams,
    /// Mean per-sample loss, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    /// Samples dropped because some triple had no valid corruption.
    pub skipped_samples: usize,
}

pub fn train(g: &KnowledgeGraph, cfg: &KgfConfig, init: Option<&EmbeddingTable>) -> Result<Training> {
    train_with(g, cfg, init, |_, _| {})
}

/// Trains with mean-over-batch margin loss and plain SGD. An epoch visits
/// every entity with at least one triple once as an ego-sample center, in
/// shuffled order. `on_epoch(epoch, mean_loss)` fires after each epoch.
pub fn train_with<F>(
    g: &KnowledgeGraph,
    cfg: &KgfConfig,
    init: Option<&EmbeddingTable>,
    mut on_epoch: F,
) -> Result<Training>
where
    F: FnMut(usize, f64),
{
    cfg.validate()?;
    if g.triples().is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut rng = crate::seeded_rng(cfg.seed);
    let mut params = ModelParams::init(
        g.entity_count(),
        g.relation_count(),
        cfg.architecture(),
        init,
        &mut rng,
    )?;
    let mut centers: Vec<EntityId> = (0..g.entity_count() as u32)
        .map(EntityId)
        .filter(|&e| g.degree(e) > 0)
        .collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut skipped_samples = 0;

    for epoch in 0..cfg.epochs {
        centers.shuffle(&mut rng);
        let mut total = 0.0;
        let mut counted = 0usize;
        for batch in centers.chunks(cfg.batch_size) {
            let mut acc = ModelParams::zeros(params.entity_count, params.relation_count, params.arch)?;
            let mut in_batch = 0usize;
            for &center in batch {
                let sub = sample_ego(g, center, cfg.fanout, &mut rng)?;
                let sample = convert(&sub);
                let negatives: Result<Vec<_>> = (0..sample.triple_count())
                    .map(|k| corrupt(&sample, g, k, &mut rng))
                    .collect();
                let Ok(negatives) = negatives else {
                    skipped_samples += 1;
                    continue;
                };
                let mut tape = Tape::new();
                let bound = BoundParams::bind_rows(&mut tape, &params, &rows_touched(&sample, &negatives))?;
                let loss = margin_loss_on(
                    &mut tape,
                    &bound,
                    &sample,
                    &negatives,
                    cfg.margin,
                    cfg.norm,
                    cfg.negative_mode,
                )?;
                total += tape.value(loss).item();
                counted += 1;
                in_batch += 1;
                let grads = tape.backward(loss)?;
                accumulate(&grads, &bound, &mut acc);
            }
            if in_batch == 0 {
                continue;
            }
            let step = cfg.learning_rate / in_batch as f64;
            for (p, gr) in params.tensors_mut().into_iter().zip(acc.tensors()) {
                for (v, d) in p.data_mut().iter_mut().zip(gr.data()) {
                    *v -= step * d;
                }
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite(alloc::format!("parameters diverged in epoch {epoch}")));
        }
        let mean = if counted > 0 { total / counted as f64 } else { 0.0 };
        epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(Training {
        params,
        epoch_losses,
        skipped_samples,
    })
}

/// Adds the gradients of one tape into `acc`, scattering compact embedding
/// rows back to their vocabulary rows.
pub(crate) fn accumulate(grads: &Gradients, bound: &BoundParams, acc: &mut ModelParams) {
    if let Some(gt) = grads.get(bound.table) {
        match &bound.rows {
            None => acc.embeddings.add_assign(gt),
            Some(rows) => {
                for (k, &r) in rows.iter().enumerate() {
                    for (a, b) in acc.embeddings.row_mut(r).iter_mut().zip(gt.row(k)) {
                        *a += b;
                    }
                }
            }
        }
    }
    for (lv, lp) in bound.layers.iter().zip(acc.layers.iter_mut()) {
        for (var, t) in lv.all().into_iter().zip(lp.tensors_mut()) {
            if let Some(gv) = grads.get(var) {
                t.add_assign(gv);
            }
        }
    }
}
