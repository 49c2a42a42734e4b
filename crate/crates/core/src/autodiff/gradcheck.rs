//! Central finite-difference gradient checking.
//!
//! The numerical side only ever evaluates forward values on fresh tapes, so
//! it shares nothing with the backward rules it checks.

use alloc::vec::Vec;

use super::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn merge(self, other: Self) -> Self {
        Self {
            max_rel_err: self.max_rel_err.max(other.max_rel_err),
            max_abs_err: self.max_abs_err.max(other.max_abs_err),
            checked: self.checked + other.checked,
        }
    }
}

/// Relative error with a floor: `|a − n| / max(|a|, |n|, 1e-2·gmax, 1e-8)`
/// where `gmax` is the largest analytic magnitude of the whole gradient.
/// The floor keeps near-zero components from dominating the maximum.
pub fn relative_error(analytic: f64, numeric: f64, gmax: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-2 * gmax).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares `d f / d inputs` from the tape against central differences with
/// step `h`. `f` must build a scalar from the given leaves.
pub fn check<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            tape.grad(v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| alloc::vec![0.0; t.numel()])
        })
        .collect();
    let gmax = analytic
        .iter()
        .flatten()
        .fold(0.0f64, |m, &x| m.max(x.abs()));

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.constant(x.clone())).collect();
        let out = f(&mut t, &vs)?;
        Ok(t.value(out).data()[0])
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        checked: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        for e in 0..input.numel() {
            let orig = input.data()[e];
            work[ti].data_mut()[e] = orig + h;
            let plus = eval(&work)?;
            work[ti].data_mut()[e] = orig - h;
            let minus = eval(&work)?;
            work[ti].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[ti][e];
            report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
            report.max_rel_err = report.max_rel_err.max(relative_error(a, numeric, gmax));
            report.checked += 1;
        }
    }
    Ok(report)
}
