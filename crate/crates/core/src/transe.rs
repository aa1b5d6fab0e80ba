//! TransE baseline: `s + r ≈ o` with a margin ranking loss.
//!
//! Produces the embedding table that initializes the KG-Transformer and
//! serves as the comparison point in link prediction.

use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::embedding::{EmbeddingTable, Norm};
use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triple};
use crate::sampler::corrupt_triple;

/// `||s + r - o||` under `norm`.
pub fn transe_energy(s: &[f64], r: &[f64], o: &[f64], norm: Norm) -> Result<f64> {
    if s.len() != r.len() || r.len() != o.len() {
        return Err(Error::Shape(alloc::format!(
            "energy over dims {}, {}, {}",
            s.len(),
            r.len(),
            o.len()
        )));
    }
    Ok(energy_unchecked(s, r, o, norm))
}

pub(crate) fn energy_unchecked(s: &[f64], r: &[f64], o: &[f64], norm: Norm) -> f64 {
    let diffs = s.iter().zip(r).zip(o).map(|((a, b), c)| a + b - c);
    match norm {
        Norm::L1 => diffs.map(f64::abs).sum(),
        Norm::L2 => sqrt(diffs.map(|v| v * v).sum()),
    }
}

/// Gradient of the energy with respect to `s + r - o`.
fn energy_grad(diff: &[f64], energy: f64, norm: Norm, out: &mut [f64]) {
    match norm {
        Norm::L1 => {
            for (g, &d) in out.iter_mut().zip(diff) {
                *g = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
        }
        Norm::L2 => {
            for (g, &d) in out.iter_mut().zip(diff) {
                *g = if energy > 0.0 { d / energy } else { 0.0 };
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransEConfig {
    pub dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub norm: Norm,
    pub seed: u64,
}

impl Default for TransEConfig {
    fn default() -> Self {
        TransEConfig {
            dim: 100,
            margin: 1.0,
            learning_rate: 0.01,
            epochs: 1000,
            batch_size: 128,
            norm: Norm::L1,
            seed: 0,
        }
    }
}

impl TransEConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::InvalidArgument("margin must be positive".into()));
        }
        if self.dim == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("dim and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TransETraining {
    pub table: EmbeddingTable,
    /// Mean hinge loss per scored triple, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    /// Triples skipped because no valid corruption was found.
    pub skipped: usize,
}

/// Uniform `[-6/sqrt(d), 6/sqrt(d)]` initialization over the whole vocabulary.
pub fn init_table<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> EmbeddingTable {
    let bound = 6.0 / sqrt(dim as f64);
    let data = (0..rows * dim).map(|_| rng.gen_range(-bound..=bound)).collect();
    EmbeddingTable::new(rows, dim, data).expect("finite init")
}

fn normalize_entities(table: &mut EmbeddingTable, n_e: usize) {
    for e in 0..n_e {
        let row = table.row_mut(e);
        let norm = sqrt(row.iter().map(|v| v * v).sum());
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

/// Minimizes `sum max(d(t) - d(t') + margin, 0)` by plain SGD over shuffled
/// minibatches. Gradients are summed over the batch, so the learning rate is
/// a per-triple step. Entity rows are renormalized to unit L2 norm after
/// every epoch.
pub fn train_transe(g: &KnowledgeGraph, cfg: &TransEConfig) -> Result<TransETraining> {
    cfg.validate()?;
    if g.triples().is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut rng = crate::seeded_rng(cfg.seed);
    let n_e = g.entity_count();
    let d = cfg.dim;
    let mut table = init_table(g.vocab_size(), d, &mut rng);
    let mut order: Vec<usize> = (0..g.triples().len()).collect();
    let mut grad = EmbeddingTable::zeros(g.vocab_size(), d);
    let mut touched: Vec<usize> = Vec::new();
    let mut diff = vec![0.0; d];
    let mut diff_neg = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut skipped = 0;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut scored = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            for &ti in batch {
                let pos = g.triples()[ti];
                let Ok(c) = corrupt_triple(pos, g, &mut rng) else {
                    skipped += 1;
                    continue;
                };
                let neg = c.apply(pos);
                scored += 1;
                let e_pos = energy_of(&table, pos, n_e, &mut diff, cfg.norm);
                let e_neg = energy_of(&table, neg, n_e, &mut diff_neg, cfg.norm);
                let loss = e_pos - e_neg + cfg.margin;
                if loss <= 0.0 {
                    continue;
                }
                epoch_loss += loss;
                energy_grad(&diff, e_pos, cfg.norm, &mut dir);
                push_grad(&mut grad, &mut touched, pos, n_e, &dir, 1.0);
                energy_grad(&diff_neg, e_neg, cfg.norm, &mut dir);
                push_grad(&mut grad, &mut touched, neg, n_e, &dir, -1.0);
            }
            touched.sort_unstable();
            touched.dedup();
            for &row in &touched {
                let (p, gr) = (table.row_mut(row), grad.row(row));
                for (v, gv) in p.iter_mut().zip(gr) {
                    *v -= cfg.learning_rate * gv;
                }
                grad.row_mut(row).iter_mut().for_each(|v| *v = 0.0);
            }
            touched.clear();
        }
        normalize_entities(&mut table, n_e);
        epoch_losses.push(if scored > 0 { epoch_loss / scored as f64 } else { 0.0 });
    }
    if !table.data().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("TransE parameters diverged".into()));
    }
    Ok(TransETraining {
        table,
        epoch_losses,
        skipped,
    })
}

fn energy_of(table: &EmbeddingTable, t: Triple, n_e: usize, diff: &mut [f64], norm: Norm) -> f64 {
    let s = table.row(t.subject.index());
    let r = table.row(n_e + t.relation.index());
    let o = table.row(t.object.index());
    for (k, x) in diff.iter_mut().enumerate() {
        *x = s[k] + r[k] - o[k];
    }
    match norm {
        Norm::L1 => diff.iter().map(|v| v.abs()).sum(),
        Norm::L2 => sqrt(diff.iter().map(|v| v * v).sum()),
    }
}

fn push_grad(
    grad: &mut EmbeddingTable,
    touched: &mut Vec<usize>,
    t: Triple,
    n_e: usize,
    dir: &[f64],
    sign: f64,
) {
    let rows = [
        (t.subject.index(), sign),
        (n_e + t.relation.index(), sign),
        (t.object.index(), -sign),
    ];
    for (row, s) in rows {
        for (gv, dv) in grad.row_mut(row).iter_mut().zip(dir) {
            *gv += s * dv;
        }
        touched.push(row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::String;

    #[test]
    fn energy_examples() {
        assert_eq!(transe_energy(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], Norm::L1), Ok(0.0));
        for norm in [Norm::L1, Norm::L2] {
            assert_eq!(transe_energy(&[0.0; 3], &[0.0; 3], &[0.0; 3], norm), Ok(0.0));
        }
        assert_eq!(transe_energy(&[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], Norm::L1), Ok(1.0));
        assert_eq!(transe_energy(&[3.0, 0.0], &[0.0, 4.0], &[0.0, 0.0], Norm::L2), Ok(5.0));
        assert!(transe_energy(&[1.0], &[1.0, 2.0], &[0.0], Norm::L1).is_err());
    }

    fn cycle(n: usize) -> KnowledgeGraph {
        let mut text = String::new();
        for i in 0..n {
            text.push_str(&format!("a{i}\tnext\ta{}\n", (i + 1) % n));
        }
        KnowledgeGraph::ingest_lines(text.lines()).unwrap().0
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let g = cycle(10);
        let cfg = TransEConfig { dim: 8, epochs: 0, seed: 5, ..Default::default() };
        let trained = train_transe(&g, &cfg).unwrap();
        let init = init_table(g.vocab_size(), 8, &mut crate::seeded_rng(5));
        assert_eq!(trained.table, init);
        assert!(trained.epoch_losses.is_empty());
    }

    #[test]
    fn seeded_training_is_bitwise_reproducible() {
        let g = cycle(12);
        let cfg = TransEConfig { dim: 8, epochs: 20, seed: 9, ..Default::default() };
        let a = train_transe(&g, &cfg).unwrap();
        let b = train_transe(&g, &cfg).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn losses_nonnegative_and_entities_unit_norm() {
        let g = cycle(15);
        for norm in [Norm::L1, Norm::L2] {
            let cfg = TransEConfig { dim: 8, epochs: 30, norm, seed: 2, ..Default::default() };
            let t = train_transe(&g, &cfg).unwrap();
            assert!(t.epoch_losses.iter().all(|l| l.is_finite() && *l >= 0.0));
            for e in 0..g.entity_count() {
                let n: f64 = t.table.row(e).iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let g = cycle(3);
        assert!(train_transe(&g, &TransEConfig { margin: 0.0, ..Default::default() }).is_err());
        assert!(train_transe(&g, &TransEConfig { dim: 0, ..Default::default() }).is_err());
        assert!(train_transe(&KnowledgeGraph::default(), &TransEConfig::default()).is_err());
    }
}
