use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;
use rand::Rng;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::transe::init_table;

/// Encoder shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
}

impl Architecture {
    pub fn new(dim: usize, heads: usize, layers: usize) -> Architecture {
        Architecture {
            dim,
            heads,
            layers,
            ff_dim: 4 * dim,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.layers == 0 || self.ff_dim == 0 {
            return Err(Error::InvalidArgument(
                "dim, heads, layers and ff_dim must be at least 1".into(),
            ));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "heads ({}) must divide dim ({})",
                self.heads, self.dim
            )));
        }
        Ok(())
    }
}

/// Per-head projections, each `dim x dim / heads`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub query: Tensor,
    pub key: Tensor,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub heads: Vec<HeadParams>,
    /// `dim x dim` projection after head concatenation.
    pub output: Tensor,
    pub attn_norm_gain: Tensor,
    pub attn_norm_bias: Tensor,
    pub ff_in: Tensor,
    pub ff_in_bias: Tensor,
    pub ff_out: Tensor,
    pub ff_out_bias: Tensor,
    pub ff_norm_gain: Tensor,
    pub ff_norm_bias: Tensor,
}

impl LayerParams {
    fn zeros(arch: &Architecture) -> LayerParams {
        let (d, dh, f) = (arch.dim, arch.head_dim(), arch.ff_dim);
        LayerParams {
            heads: (0..arch.heads)
                .map(|_| HeadParams {
                    query: Tensor::zeros(&[d, dh]),
                    key: Tensor::zeros(&[d, dh]),
                    value: Tensor::zeros(&[d, dh]),
                })
                .collect(),
            output: Tensor::zeros(&[d, d]),
            attn_norm_gain: Tensor::zeros(&[d]),
            attn_norm_bias: Tensor::zeros(&[d]),
            ff_in: Tensor::zeros(&[d, f]),
            ff_in_bias: Tensor::zeros(&[f]),
            ff_out: Tensor::zeros(&[f, d]),
            ff_out_bias: Tensor::zeros(&[d]),
            ff_norm_gain: Tensor::zeros(&[d]),
            ff_norm_bias: Tensor::zeros(&[d]),
        }
    }

    /// Tensors in declaration order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(3 * self.heads.len() + 9);
        for h in &self.heads {
            out.extend([&h.query, &h.key, &h.value]);
        }
        out.extend([
            &self.output,
            &self.attn_norm_gain,
            &self.attn_norm_bias,
            &self.ff_in,
            &self.ff_in_bias,
            &self.ff_out,
            &self.ff_out_bias,
            &self.ff_norm_gain,
            &self.ff_norm_bias,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(3 * self.heads.len() + 9);
        for h in &mut self.heads {
            out.extend([&mut h.query, &mut h.key, &mut h.value]);
        }
        out.extend([
            &mut self.output,
            &mut self.attn_norm_gain,
            &mut self.attn_norm_bias,
            &mut self.ff_in,
            &mut self.ff_in_bias,
            &mut self.ff_out,
            &mut self.ff_out_bias,
            &mut self.ff_norm_gain,
            &mut self.ff_norm_bias,
        ]);
        out
    }
}

/// Embedding matrix over the whole vocabulary plus the encoder stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub entity_count: usize,
    pub relation_count: usize,
    pub arch: Architecture,
    /// `(n_e + n_r) x dim`.
    pub embeddings: Tensor,
    pub layers: Vec<LayerParams>,
}

fn xavier<R: Rng + ?Sized>(t: &mut Tensor, rng: &mut R) {
    let s = t.shape();
    let bound = sqrt(6.0 / (s[0] + s[1]) as f64);
    t.data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-bound..=bound));
}

impl ModelParams {
    pub fn zeros(entity_count: usize, relation_count: usize, arch: Architecture) -> Result<ModelParams> {
        arch.validate()?;
        Ok(ModelParams {
            entity_count,
            relation_count,
            arch,
            embeddings: Tensor::zeros(&[entity_count + relation_count, arch.dim]),
            layers: (0..arch.layers).map(|_| LayerParams::zeros(&arch)).collect(),
        })
    }

    /// Random initialization. Projection matrices are Xavier-uniform,
    /// layer-norm gains one, biases zero. The embedding matrix is copied from
    /// `init` when given and drawn like a TransE table otherwise.
    pub fn init<R: Rng + ?Sized>(
        entity_count: usize,
        relation_count: usize,
        arch: Architecture,
        init: Option<&EmbeddingTable>,
        rng: &mut R,
    ) -> Result<ModelParams> {
        let mut p = ModelParams::zeros(entity_count, relation_count, arch)?;
        let vocab = entity_count + relation_count;
        p.embeddings = match init {
            Some(table) => {
                if table.rows() != vocab || table.dim() != arch.dim {
                    return Err(Error::Shape(format!(
                        "init table is {} x {}, model needs {} x {}",
                        table.rows(),
                        table.dim(),
                        vocab,
                        arch.dim
                    )));
                }
                table.to_tensor()
            }
            None => init_table(vocab, arch.dim, rng).to_tensor(),
        };
        for layer in &mut p.layers {
            for h in &mut layer.heads {
                xavier(&mut h.query, rng);
                xavier(&mut h.key, rng);
                xavier(&mut h.value, rng);
            }
            xavier(&mut layer.output, rng);
            xavier(&mut layer.ff_in, rng);
            xavier(&mut layer.ff_out, rng);
            layer.attn_norm_gain = Tensor::vector(vec![1.0; arch.dim]);
            layer.ff_norm_gain = Tensor::vector(vec![1.0; arch.dim]);
        }
        Ok(p)
    }

    pub fn vocab_size(&self) -> usize {
        self.entity_count + self.relation_count
    }

    /// All tensors in declaration order: embeddings, then each layer.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embeddings];
        for l in &self.layers {
            out.extend(l.tensors());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embeddings];
        for l in &mut self.layers {
            out.extend(l.tensors_mut());
        }
        out
    }

    pub fn embedding_table(&self) -> EmbeddingTable {
        EmbeddingTable::from_tensor(&self.embeddings).expect("embedding matrix")
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}
