//! Adjacency-masked Transformer encoder.
//!
//! Per layer and head, node `i` attends to itself and to every node `j` with
//! an edge `j -> i`. Scores are scaled by `1/sqrt(dim/heads)` before the
//! masked softmax. Heads are concatenated and projected, then follow the
//! residual + layer norm, a ReLU feed-forward, and a second residual + layer
//! norm.

use alloc::vec::Vec;

use libm::sqrt;

use super::params::{Architecture, LayerParams, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::sampler::TrainingSample;

#[derive(Debug, Clone)]
pub struct HeadVars {
    pub query: Var,
    pub key: Var,
    pub value: Var,
}

#[derive(Debug, Clone)]
pub struct LayerVars {
    pub heads: Vec<HeadVars>,
    pub output: Var,
    pub attn_norm_gain: Var,
    pub attn_norm_bias: Var,
    pub ff_in: Var,
    pub ff_in_bias: Var,
    pub ff_out: Var,
    pub ff_out_bias: Var,
    pub ff_norm_gain: Var,
    pub ff_norm_bias: Var,
}

impl LayerVars {
    pub fn bind(tape: &mut Tape, p: &LayerParams) -> LayerVars {
        LayerVars {
            heads: p
                .heads
                .iter()
                .map(|h| HeadVars {
                    query: tape.leaf(h.query.clone()),
                    key: tape.leaf(h.key.clone()),
                    value: tape.leaf(h.value.clone()),
                })
                .collect(),
            output: tape.leaf(p.output.clone()),
            attn_norm_gain: tape.leaf(p.attn_norm_gain.clone()),
            attn_norm_bias: tape.leaf(p.attn_norm_bias.clone()),
            ff_in: tape.leaf(p.ff_in.clone()),
            ff_in_bias: tape.leaf(p.ff_in_bias.clone()),
            ff_out: tape.leaf(p.ff_out.clone()),
            ff_out_bias: tape.leaf(p.ff_out_bias.clone()),
            ff_norm_gain: tape.leaf(p.ff_norm_gain.clone()),
            ff_norm_bias: tape.leaf(p.ff_norm_bias.clone()),
        }
    }

    /// Vars in the same order as [`LayerParams::tensors`].
    pub fn all(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for h in &self.heads {
            out.extend([h.query, h.key, h.value]);
        }
        out.extend([
            self.output,
            self.attn_norm_gain,
            self.attn_norm_bias,
            self.ff_in,
            self.ff_in_bias,
            self.ff_out,
            self.ff_out_bias,
            self.ff_norm_gain,
            self.ff_norm_bias,
        ]);
        out
    }
}

/// Model parameters recorded on a tape.
///
/// The embedding leaf is either the full vocabulary matrix or a compact copy
/// of only the rows a sample touches; `rows` maps vocabulary ids into it.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub arch: Architecture,
    pub vocab_size: usize,
    pub table: Var,
    /// Sorted vocabulary rows held by `table`; `None` when it is the full matrix.
    pub rows: Option<Vec<usize>>,
    pub layers: Vec<LayerVars>,
}

impl BoundParams {
    pub fn bind_full(tape: &mut Tape, params: &ModelParams) -> BoundParams {
        let table = tape.leaf(params.embeddings.clone());
        BoundParams {
            arch: params.arch,
            vocab_size: params.vocab_size(),
            table,
            rows: None,
            layers: params.layers.iter().map(|l| LayerVars::bind(tape, l)).collect(),
        }
    }

    /// Reassembles bound parameters from leaves created in
    /// [`ModelParams::tensors`] order, e.g. by a gradient check.
    pub fn from_vars(params: &ModelParams, vars: &[Var]) -> Result<BoundParams> {
        let per_layer = 3 * params.arch.heads + 9;
        if vars.len() != 1 + params.arch.layers * per_layer {
            return Err(Error::Shape(alloc::format!(
                "{} vars for {} parameter tensors",
                vars.len(),
                1 + params.arch.layers * per_layer
            )));
        }
        let layers = vars[1..]
            .chunks(per_layer)
            .map(|c| {
                let h = params.arch.heads;
                let rest = &c[3 * h..];
                LayerVars {
                    heads: c[..3 * h]
                        .chunks(3)
                        .map(|q| HeadVars { query: q[0], key: q[1], value: q[2] })
                        .collect(),
                    output: rest[0],
                    attn_norm_gain: rest[1],
                    attn_norm_bias: rest[2],
                    ff_in: rest[3],
                    ff_in_bias: rest[4],
                    ff_out: rest[5],
                    ff_out_bias: rest[6],
                    ff_norm_gain: rest[7],
                    ff_norm_bias: rest[8],
                }
            })
            .collect();
        Ok(BoundParams {
            arch: params.arch,
            vocab_size: params.vocab_size(),
            table: vars[0],
            rows: None,
            layers,
        })
    }

    /// Binds only the listed vocabulary rows of the embedding matrix.
    pub fn bind_rows(tape: &mut Tape, params: &ModelParams, rows: &[usize]) -> Result<BoundParams> {
        let mut rows = rows.to_vec();
        rows.sort_unstable();
        rows.dedup();
        let d = params.arch.dim;
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in &rows {
            check_row(r, params.vocab_size())?;
            data.extend_from_slice(params.embeddings.row(r));
        }
        let table = tape.leaf(Tensor::matrix(rows.len(), d, data)?);
        Ok(BoundParams {
            arch: params.arch,
            vocab_size: params.vocab_size(),
            table,
            rows: Some(rows),
            layers: params.layers.iter().map(|l| LayerVars::bind(tape, l)).collect(),
        })
    }

    /// Positions in `table` of the given vocabulary rows.
    pub fn lookup(&self, vocab_rows: &[usize]) -> Result<Vec<usize>> {
        vocab_rows
            .iter()
            .map(|&r| {
                check_row(r, self.vocab_size)?;
                match &self.rows {
                    None => Ok(r),
                    Some(rows) => rows
                        .binary_search(&r)
                        .map_err(|_| Error::IdOutOfRange { kind: "bound row", id: r, count: rows.len() }),
                }
            })
            .collect()
    }

    /// Gathers the input embeddings of a sample.
    pub fn embed(&self, tape: &mut Tape, sample: &TrainingSample) -> Result<Var> {
        let idx = self.lookup(&sample.node_ids)?;
        tape.gather_rows(self.table, &idx)
    }
}

fn check_row(r: usize, vocab: usize) -> Result<()> {
    if r >= vocab {
        return Err(Error::IdOutOfRange {
            kind: "vocabulary",
            id: r,
            count: vocab,
        });
    }
    Ok(())
}

/// Handles to the encoder's output and intermediate values on a tape.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// `N x dim`.
    pub output: Var,
    /// `[layer][head]` attention weights, each `N x N`.
    pub attention: Vec<Vec<Var>>,
    /// Per layer, the hidden state after the attention sublayer.
    pub attended: Vec<Var>,
}

/// Runs the encoder stack over `inputs` (`N x dim`).
pub fn encode(tape: &mut Tape, bound: &BoundParams, inputs: Var, mask: &[bool]) -> Result<Encoded> {
    let n = tape.value(inputs).rows();
    if mask.len() != n * n {
        return Err(Error::Shape(alloc::format!("mask has {} entries for {n} nodes", mask.len())));
    }
    let scale = 1.0 / sqrt(bound.arch.head_dim() as f64);
    let mut x = inputs;
    let mut attention = Vec::with_capacity(bound.layers.len());
    let mut attended = Vec::with_capacity(bound.layers.len());
    for layer in &bound.layers {
        let mut head_outputs = Vec::with_capacity(layer.heads.len());
        let mut weights = Vec::with_capacity(layer.heads.len());
        for h in &layer.heads {
            let q = tape.matmul(x, h.query)?;
            let k = tape.matmul(x, h.key)?;
            let v = tape.matmul(x, h.value)?;
            let kt = tape.transpose(k)?;
            let scores = tape.matmul(q, kt)?;
            let scores = tape.scale(scores, scale);
            let alpha = tape.masked_softmax(scores, mask)?;
            head_outputs.push(tape.matmul(alpha, v)?);
            weights.push(alpha);
        }
        let heads = tape.concat_cols(&head_outputs)?;
        let projected = tape.matmul(heads, layer.output)?;
        let residual = tape.add(x, projected)?;
        let h1 = affine_norm(tape, residual, layer.attn_norm_gain, layer.attn_norm_bias)?;

        let ff = tape.matmul(h1, layer.ff_in)?;
        let ff = tape.add_row(ff, layer.ff_in_bias)?;
        let ff = tape.relu(ff);
        let ff = tape.matmul(ff, layer.ff_out)?;
        let ff = tape.add_row(ff, layer.ff_out_bias)?;
        let residual = tape.add(h1, ff)?;
        x = affine_norm(tape, residual, layer.ff_norm_gain, layer.ff_norm_bias)?;

        attention.push(weights);
        attended.push(h1);
    }
    Ok(Encoded {
        output: x,
        attention,
        attended,
    })
}

fn affine_norm(tape: &mut Tape, x: Var, gain: Var, bias: Var) -> Result<Var> {
    let normed = tape.layer_norm(x);
    let scaled = tape.mul_row(normed, gain)?;
    tape.add_row(scaled, bias)
}

/// Gathers the sample's embeddings and encodes them.
pub fn encode_sample(tape: &mut Tape, bound: &BoundParams, sample: &TrainingSample) -> Result<Encoded> {
    let inputs = bound.embed(tape, sample)?;
    encode(tape, bound, inputs, &sample.attention_mask())
}

/// Concrete encoder values for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub output: Tensor,
    pub attention: Vec<Vec<Tensor>>,
    pub attended: Vec<Tensor>,
}

fn collect(tape: &Tape, enc: &Encoded) -> Forward {
    Forward {
        output: tape.value(enc.output).clone(),
        attention: enc
            .attention
            .iter()
            .map(|l| l.iter().map(|&a| tape.value(a).clone()).collect())
            .collect(),
        attended: enc.attended.iter().map(|&a| tape.value(a).clone()).collect(),
    }
}

/// Encodes a sample with embeddings looked up from the parameter matrix.
pub fn forward(params: &ModelParams, sample: &TrainingSample) -> Result<Forward> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind_rows(&mut tape, params, &sample.node_ids)?;
    let enc = encode_sample(&mut tape, &bound, sample)?;
    Ok(collect(&tape, &enc))
}

/// Encodes explicit input rows (`N x dim`) under the sample's adjacency.
pub fn forward_inputs(params: &ModelParams, inputs: &Tensor, sample: &TrainingSample) -> Result<Forward> {
    if inputs.shape() != [sample.len(), params.arch.dim] {
        return Err(Error::Shape(alloc::format!(
            "inputs {:?} for {} nodes of width {}",
            inputs.shape(),
            sample.len(),
            params.arch.dim
        )));
    }
    let mut tape = Tape::new();
    let bound = BoundParams::bind_rows(&mut tape, params, &[])?;
    let x = tape.leaf(inputs.clone());
    let enc = encode(&mut tape, &bound, x, &sample.attention_mask())?;
    Ok(collect(&tape, &enc))
}
