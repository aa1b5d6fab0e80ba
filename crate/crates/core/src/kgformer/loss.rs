//! Triple restoration and the margin objective over encoder outputs.

use alloc::vec::Vec;

use super::encoder::{encode_sample, BoundParams, Encoded};
use super::params::ModelParams;
use crate::embedding::Norm;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::sampler::{convert_triples, Corruption, Side, TrainingSample};

/// How the corrupted side of a negative triple is embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativeMode {
    /// Replace the corrupted side's encoder output with the replacement
    /// entity's embedding row.
    #[default]
    Substitute,
    /// Rebuild the sample with the corrupted triple and encode it again.
    Reencode,
}

/// One hinge term: `max(pos - neg + margin, 0)`.
pub fn margin_term(pos: f64, neg: f64, margin: f64) -> f64 {
    (pos - neg + margin).max(0.0)
}

/// Row `k` is `(X[p_s], X[p_r], X[p_o])` for position row `P_k`.
pub fn restore_triples<'a>(
    output: &'a Tensor,
    positions: &[[usize; 3]],
) -> Result<Vec<[&'a [f64]; 3]>> {
    let n = output.rows();
    positions
        .iter()
        .map(|row| {
            if let Some(&bad) = row.iter().find(|&&p| p >= n) {
                return Err(Error::IdOutOfRange {
                    kind: "position",
                    id: bad,
                    count: n,
                });
            }
            Ok([output.row(row[0]), output.row(row[1]), output.row(row[2])])
        })
        .collect()
}

fn energies(tape: &mut Tape, s: Var, r: Var, o: Var, norm: Norm) -> Result<Var> {
    let sr = tape.add(s, r)?;
    let diff = tape.sub(sr, o)?;
    Ok(match norm {
        Norm::L1 => tape.l1_norm(diff),
        Norm::L2 => tape.l2_norm(diff),
    })
}

/// Vocabulary rows a loss evaluation reads: the sample's nodes plus every
/// replacement entity.
pub fn rows_touched(sample: &TrainingSample, negatives: &[Corruption]) -> Vec<usize> {
    let mut rows = sample.node_ids.clone();
    rows.extend(negatives.iter().map(|c| c.replacement.index()));
    rows
}

/// Energies of the positive triples and of their negatives, each `[T]`.
pub fn energy_pair(
    tape: &mut Tape,
    bound: &BoundParams,
    sample: &TrainingSample,
    negatives: &[Corruption],
    norm: Norm,
    mode: NegativeMode,
) -> Result<(Var, Var, Encoded)> {
    let t = sample.triple_count();
    if negatives.len() != t {
        return Err(Error::Shape(alloc::format!(
            "{} negatives for {t} triples",
            negatives.len()
        )));
    }
    let enc = encode_sample(tape, bound, sample)?;
    let out = enc.output;
    let n = sample.len();
    let col = |i: usize| sample.positions.iter().map(|p| p[i]).collect::<Vec<_>>();
    let (ps, pr, po) = (col(0), col(1), col(2));
    let s = tape.gather_rows(out, &ps)?;
    let r = tape.gather_rows(out, &pr)?;
    let o = tape.gather_rows(out, &po)?;
    let pos = energies(tape, s, r, o, norm)?;

    let neg = match mode {
        NegativeMode::Substitute => {
            let ids: Vec<usize> = negatives.iter().map(|c| c.replacement.index()).collect();
            let repl_idx = bound.lookup(&ids)?;
            let repl = tape.gather_rows(bound.table, &repl_idx)?;
            let stacked = tape.concat_rows(&[out, repl])?;
            let mut ns = ps.clone();
            let mut no = po.clone();
            for (k, c) in negatives.iter().enumerate() {
                match c.side {
                    Side::Head => ns[k] = n + k,
                    Side::Tail => no[k] = n + k,
                }
            }
            let s_neg = tape.gather_rows(stacked, &ns)?;
            let o_neg = tape.gather_rows(stacked, &no)?;
            energies(tape, s_neg, r, o_neg, norm)?
        }
        NegativeMode::Reencode => {
            let triples = sample.triples();
            let mut diffs = Vec::with_capacity(t);
            for (k, c) in negatives.iter().enumerate() {
                let mut corrupted = triples.clone();
                corrupted[k] = c.apply(triples[k]);
                let cs = convert_triples(&corrupted, sample.entity_count());
                let ce = encode_sample(tape, bound, &cs)?;
                let [a, b, z] = cs.positions[k];
                let sk = tape.gather_rows(ce.output, &[a])?;
                let rk = tape.gather_rows(ce.output, &[b])?;
                let ok = tape.gather_rows(ce.output, &[z])?;
                let sr = tape.add(sk, rk)?;
                diffs.push(tape.sub(sr, ok)?);
            }
            let diff = tape.concat_rows(&diffs)?;
            match norm {
                Norm::L1 => tape.l1_norm(diff),
                Norm::L2 => tape.l2_norm(diff),
            }
        }
    };
    Ok((pos, neg, enc))
}

/// Records `sum_t max(d(t) - d(f(t)) + margin, 0)` and returns its handle.
pub fn margin_loss_on(
    tape: &mut Tape,
    bound: &BoundParams,
    sample: &TrainingSample,
    negatives: &[Corruption],
    margin: f64,
    norm: Norm,
    mode: NegativeMode,
) -> Result<Var> {
    let (pos, neg, _) = energy_pair(tape, bound, sample, negatives, norm, mode)?;
    let gap = tape.sub(pos, neg)?;
    let shifted = tape.add_scalar(gap, margin);
    let hinge = tape.relu(shifted);
    Ok(tape.sum(hinge))
}

pub fn margin_loss(
    params: &ModelParams,
    sample: &TrainingSample,
    negatives: &[Corruption],
    margin: f64,
    norm: Norm,
    mode: NegativeMode,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind_rows(&mut tape, params, &rows_touched(sample, negatives))?;
    let loss = margin_loss_on(&mut tape, &bound, sample, negatives, margin, norm, mode)?;
    Ok(tape.value(loss).item())
}
