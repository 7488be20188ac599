//! Randomised finite-difference checks for every primitive in [`PRIMITIVES`].
//!
//! Each case reduces the primitive's output to a scalar through a random
//! weighting, so every output entry contributes to the checked gradient.

use alloc::vec::Vec;

use rand::Rng;

use super::{grad_check, Axis, Tape, Var, PRIMITIVES};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const FD_STEP: f64 = 1e-5;

fn rand_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

fn weighted_sum(t: &mut Tape, v: Var, w: &Matrix) -> Result<Var> {
    let w = t.constant(w.clone());
    let p = t.hadamard(v, w)?;
    t.sum(p)
}

/// Runs one randomised finite-difference check of the named primitive and
/// returns its max relative error. For `constant_view` the returned value is
/// the largest gradient magnitude leaking through the detached branch, which
/// must be exactly zero.
pub fn check_primitive<R: Rng + ?Sized>(name: &str, rng: &mut R) -> Result<f64> {
    let r = rng.gen_range(2..=5);
    let c = rng.gen_range(2..=5);
    let x = rand_matrix(rng, r, c, -2.0, 2.0);
    let w = rand_matrix(rng, r, c, -1.0, 1.0);
    let h = FD_STEP;
    match name {
        "matmul" => {
            let k = rng.gen_range(2..=5);
            let y = rand_matrix(rng, c, k, -2.0, 2.0);
            let wk = rand_matrix(rng, r, k, -1.0, 1.0);
            grad_check(
                |t, v| {
                    let p = t.matmul(v[0], v[1])?;
                    weighted_sum(t, p, &wk)
                },
                &[x, y],
                h,
            )
        }
        "transpose" => {
            let wt = w.transpose();
            grad_check(
                |t, v| {
                    let p = t.transpose(v[0])?;
                    weighted_sum(t, p, &wt)
                },
                &[x],
                h,
            )
        }
        "add" | "sub" | "hadamard" => {
            let y = rand_matrix(rng, r, c, -2.0, 2.0);
            grad_check(
                |t, v| {
                    let p = match name {
                        "add" => t.add(v[0], v[1])?,
                        "sub" => t.sub(v[0], v[1])?,
                        _ => t.hadamard(v[0], v[1])?,
                    };
                    weighted_sum(t, p, &w)
                },
                &[x, y],
                h,
            )
        }
        "scalar_mul" => {
            let s = rng.gen_range(-2.0..2.0);
            grad_check(
                |t, v| {
                    let p = t.scalar_mul(v[0], s)?;
                    weighted_sum(t, p, &w)
                },
                &[x],
                h,
            )
        }
        "row_softmax" => {
            let mask: Vec<bool> = (0..r * c).map(|_| rng.gen_bool(0.7)).collect();
            let masked = rng.gen_bool(0.5);
            grad_check(
                |t, v| {
                    let p = if masked {
                        t.row_softmax_masked(v[0], mask.clone())?
                    } else {
                        t.row_softmax(v[0])?
                    };
                    weighted_sum(t, p, &w)
                },
                &[x],
                h,
            )
        }
        "row_sum" => {
            let wr = rand_matrix(rng, r, 1, -1.0, 1.0);
            grad_check(
                |t, v| {
                    let p = t.row_sum(v[0])?;
                    weighted_sum(t, p, &wr)
                },
                &[x],
                h,
            )
        }
        "col_sum" => {
            let wc = rand_matrix(rng, 1, c, -1.0, 1.0);
            grad_check(
                |t, v| {
                    let p = t.col_sum(v[0])?;
                    weighted_sum(t, p, &wc)
                },
                &[x],
                h,
            )
        }
        "broadcast_div" => {
            let axis = if rng.gen_bool(0.5) { Axis::Rows } else { Axis::Cols };
            let d = match axis {
                Axis::Rows => rand_matrix(rng, r, 1, 0.5, 2.5),
                Axis::Cols => rand_matrix(rng, 1, c, 0.5, 2.5),
            };
            grad_check(
                |t, v| {
                    let p = t.broadcast_div(v[0], v[1], axis)?;
                    weighted_sum(t, p, &w)
                },
                &[x, d],
                h,
            )
        }
        "exp" => grad_check(
            |t, v| {
                let p = t.exp(v[0])?;
                weighted_sum(t, p, &w)
            },
            &[x],
            h,
        ),
        "log" => {
            let xp = rand_matrix(rng, r, c, 0.5, 2.5);
            grad_check(
                |t, v| {
                    let p = t.log(v[0])?;
                    weighted_sum(t, p, &w)
                },
                &[xp],
                h,
            )
        }
        "relu_hinge" => {
            // keep entries away from the kink so the central difference is valid
            let xk = x.map(|v| if v.abs() < 1e-3 { v + 0.01 } else { v });
            grad_check(
                |t, v| {
                    let p = t.relu_hinge(v[0])?;
                    weighted_sum(t, p, &w)
                },
                &[xk],
                h,
            )
        }
        "l2_norm_sq" => {
            let s = rng.gen_range(-2.0..2.0);
            grad_check(
                |t, v| {
                    let p = t.l2_norm_sq(v[0])?;
                    t.scalar_mul(p, s)
                },
                &[x],
                h,
            )
        }
        "cosine_similarity" => {
            let q = rng.gen_range(1..=4);
            let y = rand_matrix(rng, q, c, -2.0, 2.0);
            let wq = rand_matrix(rng, r, q, -1.0, 1.0);
            grad_check(
                |t, v| {
                    let p = t.cosine_similarity(v[0], v[1])?;
                    weighted_sum(t, p, &wq)
                },
                &[x, y],
                h,
            )
        }
        "mask_assign" => {
            let rows: Vec<bool> = (0..r).map(|_| rng.gen_bool(0.3)).collect();
            let cols: Vec<bool> = (0..c).map(|_| rng.gen_bool(0.3)).collect();
            grad_check(
                |t, v| {
                    let p = t.mask_assign(v[0], rows.clone(), cols.clone())?;
                    weighted_sum(t, p, &w)
                },
                &[x],
                h,
            )
        }
        "constant_view" => {
            let mut t = Tape::new();
            let v = t.leaf(x);
            let d = t.constant_view(v)?;
            let out = weighted_sum(&mut t, d, &w)?;
            t.backward(out)?;
            Ok(t.grad(v).map_or(0.0, |g| {
                g.as_slice().iter().fold(0.0, |m, x| f64::max(m, x.abs()))
            }))
        }
        "gather_rows" => {
            let n = rng.gen_range(1..=6);
            let index: Vec<Option<usize>> = (0..n)
                .map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(0..r)))
                .collect();
            let wn = rand_matrix(rng, n, c, -1.0, 1.0);
            grad_check(
                |t, v| {
                    let p = t.gather_rows(v[0], index.clone())?;
                    weighted_sum(t, p, &wn)
                },
                &[x],
                h,
            )
        }
        "softmax_cross_entropy" => {
            let targets: Vec<Option<usize>> = (0..r)
                .map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(0..c)))
                .collect();
            let wr = rand_matrix(rng, r, 1, -1.0, 1.0);
            grad_check(
                |t, v| {
                    let p = t.softmax_cross_entropy(v[0], targets.clone())?;
                    weighted_sum(t, p, &wr)
                },
                &[x],
                h,
            )
        }
        other => Err(Error::InvalidArgument {
            op: "check_primitive",
            detail: alloc::format!("unknown primitive {other}"),
        }),
    }
}

/// Worst error over `trials` random checks of every primitive, in
/// [`PRIMITIVES`] order.
pub fn check_all_primitives<R: Rng + ?Sized>(
    trials: usize,
    rng: &mut R,
) -> Result<Vec<(&'static str, f64)>> {
    PRIMITIVES
        .iter()
        .map(|&name| {
            let mut worst = 0.0f64;
            for _ in 0..trials {
                worst = worst.max(check_primitive(name, rng)?);
            }
            Ok((name, worst))
        })
        .collect()
}
