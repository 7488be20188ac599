use alloc::format;
use alloc::vec::Vec;

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Compares the tape's analytic gradient of a scalar-valued `f` against
/// central finite differences at `point`.
///
/// Returns the maximum over every input entry of
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, point: &[Matrix], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::Domain {
            op: "grad_check",
            detail: format!("step {h} outside [1e-6, 1e-3]"),
        });
    }
    let mut tape = Tape::new();
    let inputs: Vec<Var> = point.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &inputs)?;
    check_finite(&tape)?;
    tape.backward(out)?;
    let analytic: Vec<Matrix> = inputs
        .iter()
        .zip(point)
        .map(|(&v, m)| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols()))
        })
        .collect();

    let eval = |p: &[Matrix]| -> Result<f64> {
        let mut t = Tape::new();
        let vars: Vec<Var> = p.iter().map(|m| t.leaf(m.clone())).collect();
        let out = f(&mut t, &vars)?;
        check_finite(&t)?;
        Ok(t.scalar(out))
    };

    let mut worst = 0.0f64;
    let mut probe: Vec<Matrix> = point.to_vec();
    for (k, m) in point.iter().enumerate() {
        for idx in 0..m.as_slice().len() {
            let x0 = m.as_slice()[idx];
            probe[k].as_mut_slice()[idx] = x0 + h;
            let plus = eval(&probe)?;
            probe[k].as_mut_slice()[idx] = x0 - h;
            let minus = eval(&probe)?;
            probe[k].as_mut_slice()[idx] = x0;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[k].as_slice()[idx];
            if !a.is_finite() {
                return Err(Error::Numerical {
                    op: "grad_check",
                    detail: format!("non-finite analytic gradient at input {k} entry {idx}"),
                });
            }
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst)
}

fn check_finite(tape: &Tape) -> Result<()> {
    match tape.first_non_finite() {
        Some((v, op)) => Err(Error::Numerical {
            op,
            detail: format!("non-finite value at node {}", v.index()),
        }),
        None => Ok(()),
    }
}
