use alloc::format;
use alloc::vec::Vec;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(parameter index, element index)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if tape.value(out).numel() != 1 {
        return Err(Error::Shape("grad_check needs a scalar function".into()));
    }
    Ok((tape, vars, out))
}

fn probe<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, _, out) = evaluate(f, params)?;
    let v = tape.value(out).item();
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("f = {v} at a probe point")));
    }
    Ok(v)
}

/// Max elementwise relative error between the tape gradient of `f` and
/// `(f(x + eps) - f(x - eps)) / (2 eps)`, with denominator
/// `max(|a|, |b|, 1e-8)`.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let (tape, vars, out) = evaluate(&f, params)?;
    if !tape.value(out).item().is_finite() {
        return Err(Error::NonFinite("f at the base point".into()));
    }
    let grads = tape.backward(out)?;
    drop(tape);

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe_params: Vec<Tensor> = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for ei in 0..params[pi].numel() {
            let base = params[pi].data()[ei];
            probe_params[pi].data_mut()[ei] = base + eps;
            let plus = probe(&f, &probe_params)?;
            probe_params[pi].data_mut()[ei] = base - eps;
            let minus = probe(&f, &probe_params)?;
            probe_params[pi].data_mut()[ei] = base;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.map_or(0.0, |g| g.data()[ei]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (pi, ei);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
