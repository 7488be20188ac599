//! Differentiable projection of a nonnegative matrix onto a hard
//! semi-doubly-stochastic matrix.
//!
//! Each pass normalises rows, then columns, then zeroes every row and column
//! whose spread `max - min` is below `delta`. Zeroed lines stay zero for the
//! rest of the run. After `iters` passes the soft matrix `S` is rounded by a
//! greedy descending-value matching, and the hard result is attached to the
//! tape with a straight-through residual so its gradient is that of `S`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::augment::TransformMatrix;
use crate::autodiff::{Axis, Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornConfig {
    /// Rows or columns with `max - min < delta` are zeroed.
    pub delta: f64,
    pub iters: usize,
    /// Round to a hard matrix and pass gradients straight through. When false
    /// the projection output is the soft matrix itself.
    pub hard: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            delta: 1e-2,
            iters: 20,
            hard: true,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || self.iters == 0 {
            return Err(Error::InvalidArgument {
                op: "sinkhorn_config",
                detail: format!("delta {} iters {}", self.delta, self.iters),
            });
        }
        Ok(())
    }
}

/// Rows and columns zeroed so far.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZeroMask {
    pub rows: Vec<bool>,
    pub cols: Vec<bool>,
}

impl ZeroMask {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            rows: vec![false; n],
            cols: vec![false; m],
        }
    }

    pub fn count(&self) -> usize {
        self.rows.iter().chain(&self.cols).filter(|&&z| z).count()
    }

    /// Whether every line zeroed in `earlier` is also zeroed here.
    pub fn contains(&self, earlier: &ZeroMask) -> bool {
        let sub = |a: &[bool], b: &[bool]| a.iter().zip(b).all(|(&e, &l)| !e || l);
        sub(&earlier.rows, &self.rows) && sub(&earlier.cols, &self.cols)
    }
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    hi - lo
}

fn check_nonnegative(m: &Matrix, op: &'static str) -> Result<()> {
    if let Some(v) = m.as_slice().iter().find(|&&v| v < 0.0 || v.is_nan()) {
        return Err(Error::Domain {
            op,
            detail: format!("entry {v} is not nonnegative"),
        });
    }
    Ok(())
}

/// One row normalisation, column normalisation and uniformity sweep.
/// Row and column decisions are taken on the same post-normalisation state.
pub fn normalize_pass(tape: &mut Tape, s: Var, cfg: &SinkhornConfig, zeroed: &mut ZeroMask) -> Result<Var> {
    check_nonnegative(tape.value(s), "normalize_pass")?;
    let rs = tape.row_sum(s)?;
    let by_row = tape.broadcast_div(s, rs, Axis::Rows)?;
    let cs = tape.col_sum(by_row)?;
    let by_col = tape.broadcast_div(by_row, cs, Axis::Cols)?;

    let value = tape.value(by_col);
    let (n, m) = value.shape();
    let mut fresh = false;
    let row_flags: Vec<bool> = (0..n)
        .map(|i| spread(value.row(i).iter().copied()) < cfg.delta)
        .collect();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for i in 0..n {
        for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(value.row(i)) {
            *l = l.min(v);
            *h = h.max(v);
        }
    }
    let col_flags: Vec<bool> = lo.iter().zip(&hi).map(|(l, h)| h - l < cfg.delta).collect();
    for (z, f) in zeroed.rows.iter_mut().zip(row_flags).chain(zeroed.cols.iter_mut().zip(col_flags)) {
        if f && !*z {
            *z = true;
            fresh = true;
        }
    }
    if !fresh {
        return Ok(by_col);
    }
    tape.mask_assign(by_col, zeroed.rows.clone(), zeroed.cols.clone())
}

/// Greedy matching: visit entries in descending value (ties by smaller row,
/// then smaller column) and accept each whose row and column are still free,
/// not zeroed and whose value is positive.
pub fn greedy_round(s: &Matrix, zeroed: &ZeroMask) -> TransformMatrix {
    let n = s.rows();
    let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for i in (0..n).filter(|&i| !zeroed.rows[i]) {
        for (j, &v) in s.row(i).iter().enumerate() {
            if v > 0.0 && !zeroed.cols[j] {
                entries.push((v, i, j));
            }
        }
    }
    entries.sort_unstable_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut targets = vec![None; n];
    let mut col_used = vec![false; s.cols()];
    let mut placed = 0;
    for (_, i, j) in entries {
        if targets[i].is_none() && !col_used[j] {
            targets[i] = Some(j);
            col_used[j] = true;
            placed += 1;
            if placed == n {
                break;
            }
        }
    }
    TransformMatrix::from_targets(targets).expect("greedy matching is injective")
}

#[derive(Clone, Debug)]
pub struct Projection {
    /// Soft matrix `S` after the final pass.
    pub soft: Var,
    /// Straight-through node: forward value equals `hard`, gradient is that
    /// of `soft`. Equal to `soft` when rounding is disabled.
    pub out: Var,
    pub hard: TransformMatrix,
    pub zeroed: ZeroMask,
}

pub fn project(tape: &mut Tape, a: Var, cfg: &SinkhornConfig) -> Result<Projection> {
    cfg.validate()?;
    let (n, m) = tape.value(a).shape();
    if n != m {
        return Err(Error::Dimension {
            op: "project",
            lhs: (n, m),
            rhs: (m, n),
        });
    }
    check_nonnegative(tape.value(a), "project")?;
    let mut zeroed = ZeroMask::new(n, n);
    let mut s = a;
    for iter in 0..cfg.iters {
        s = normalize_pass(tape, s, cfg, &mut zeroed)?;
        if !tape.value(s).is_finite() {
            return Err(Error::Numerical {
                op: "project",
                detail: format!("non-finite value at iteration {}", iter + 1),
            });
        }
    }
    let hard = greedy_round(tape.value(s), &zeroed);
    let out = if cfg.hard {
        straight_through(tape, s, &hard)?
    } else {
        s
    };
    Ok(Projection {
        soft: s,
        out,
        hard,
        zeroed,
    })
}

/// `(hard - soft).detach() + soft`, with the forward value snapped to `hard`
/// so it is exactly 0/1 despite rounding in the subtraction.
pub fn straight_through(tape: &mut Tape, soft: Var, hard: &TransformMatrix) -> Result<Var> {
    let dense = hard.to_dense();
    let h = tape.constant(dense.clone());
    let residual = tape.sub(h, soft)?;
    let detached = tape.constant_view(residual)?;
    let out = tape.add(detached, soft)?;
    tape.overwrite_value(out, dense);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::validate;
    use crate::autodiff::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent plain-loop reference of the normalisation passes.
    fn reference(a: &Matrix, delta: f64, iters: usize) -> Matrix {
        let n = a.rows();
        let mut s: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
        let mut zr = vec![false; n];
        let mut zc = vec![false; n];
        for _ in 0..iters {
            for row in s.iter_mut() {
                let t: f64 = row.iter().sum();
                if t > 1e-12 {
                    row.iter_mut().for_each(|v| *v /= t);
                }
            }
            for j in 0..n {
                let t: f64 = (0..n).map(|i| s[i][j]).sum();
                if t > 1e-12 {
                    (0..n).for_each(|i| s[i][j] /= t);
                }
            }
            for i in 0..n {
                let hi = s[i].iter().cloned().fold(f64::MIN, f64::max);
                let lo = s[i].iter().cloned().fold(f64::MAX, f64::min);
                zr[i] |= hi - lo < delta;
            }
            for j in 0..n {
                let hi = (0..n).map(|i| s[i][j]).fold(f64::MIN, f64::max);
                let lo = (0..n).map(|i| s[i][j]).fold(f64::MAX, f64::min);
                zc[j] |= hi - lo < delta;
            }
            for i in 0..n {
                for j in 0..n {
                    if zr[i] || zc[j] {
                        s[i][j] = 0.0;
                    }
                }
            }
        }
        Matrix::from_fn(n, n, |i, j| s[i][j])
    }

    fn run(a: Matrix, delta: f64, iters: usize) -> (Matrix, TransformMatrix) {
        let mut t = Tape::new();
        let v = t.leaf(a);
        let cfg = SinkhornConfig { delta, iters, hard: true };
        let p = project(&mut t, v, &cfg).unwrap();
        (t.value(p.soft).clone(), p.hard)
    }

    #[test]
    fn two_by_two_converges_and_rounds_to_identity() {
        let a = Matrix::from_rows(&[&[0.9, 0.1], &[0.1, 0.9]]);
        let (s, _) = run(a.clone(), 0.0, 20);
        for sum in s.row_sums().into_iter().chain(s.col_sums()) {
            assert!((sum - 1.0).abs() < 1e-3);
        }
        let (_, hard) = run(a, 1e-3, 20);
        assert_eq!(hard, TransformMatrix::identity(2));
    }

    #[test]
    fn uniform_input_is_fully_zeroed() {
        let (s, hard) = run(Matrix::filled(3, 3, 1.0 / 3.0), 1e-2, 1);
        assert_eq!(s, Matrix::zeros(3, 3));
        assert_eq!(hard, TransformMatrix::zeros(3));
        let (_, hard) = run(Matrix::filled(4, 4, 0.25), 1e-2, 20);
        assert_eq!(hard, TransformMatrix::zeros(4));
    }

    #[test]
    fn identity_is_a_fixed_point() {
        let (s, hard) = run(Matrix::identity(5), 1e-2, 20);
        assert_eq!(s, Matrix::identity(5));
        assert_eq!(hard, TransformMatrix::identity(5));
    }

    #[test]
    fn identity_straight_through_gradient_matches_soft() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::identity(4));
        let p = project(&mut t, a, &SinkhornConfig::default()).unwrap();
        let out_sum = t.sum(p.out).unwrap();
        t.backward(out_sum).unwrap();
        let g_out = t.grad(a).unwrap().clone();
        let soft_sum = t.sum(p.soft).unwrap();
        t.backward(soft_sum).unwrap();
        assert_eq!(&g_out, t.grad(a).unwrap());
        assert_eq!(t.value(p.out), &Matrix::identity(4));
    }

    #[test]
    fn positive_input_without_threshold_gives_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let a = Matrix::from_fn(6, 6, |_, _| rng.gen_range(0.01..1.0));
            let (_, hard) = run(a, 0.0, 20);
            assert_eq!(hard.placed(), 6);
        }
    }

    #[test]
    fn tape_passes_match_reference_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.gen_range(2..12);
            let delta = [0.0, 1e-3, 1e-2, 0.05][rng.gen_range(0..4)];
            let a = Matrix::from_fn(n, n, |_, _| {
                if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..1.0) }
            });
            let (s, _) = run(a.clone(), delta, 7);
            assert!(s.max_abs_diff(&reference(&a, delta, 7)) < 1e-12);
        }
    }

    #[test]
    fn zeroing_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = SinkhornConfig { delta: 0.02, iters: 1, hard: false };
        for _ in 0..100 {
            let n = rng.gen_range(2..15);
            let mut t = Tape::new();
            let mut s = t.leaf(Matrix::from_fn(n, n, |_, _| rng.gen_range(0.0..1.0)));
            let mut mask = ZeroMask::new(n, n);
            for _ in 0..20 {
                let before = mask.clone();
                s = normalize_pass(&mut t, s, &cfg, &mut mask).unwrap();
                assert!(mask.contains(&before));
                let v = t.value(s);
                for i in (0..n).filter(|&i| mask.rows[i]) {
                    assert!(v.row(i).iter().all(|&x| x == 0.0));
                }
            }
        }
    }

    #[test]
    fn hard_output_is_always_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let n = rng.gen_range(2..30);
            let delta = [0.0, 1e-3, 1e-2][rng.gen_range(0..3)];
            let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(0.0..1.0));
            let mut t = Tape::new();
            let v = t.leaf(a);
            let p = project(&mut t, v, &SinkhornConfig { delta, iters: 20, hard: true }).unwrap();
            assert!(validate(&p.hard.to_dense()).is_ok());
            assert_eq!(t.value(p.out), &p.hard.to_dense());
        }
    }

    #[test]
    fn soft_path_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = SinkhornConfig { delta: 0.0, iters: 10, hard: false };
        for _ in 0..10 {
            let a = Matrix::from_fn(5, 5, |_, _| rng.gen_range(0.1..1.0));
            let w = Matrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
            let err = grad_check(
                |t, v| {
                    let p = project(t, v[0], &cfg)?;
                    let w = t.constant(w.clone());
                    let prod = t.hadamard(p.out, w)?;
                    t.sum(prod)
                },
                &[a],
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{err}");
        }
    }

    #[test]
    fn rejects_negative_entries() {
        let mut t = Tape::new();
        let v = t.leaf(Matrix::from_rows(&[&[1.0, -0.1], &[0.0, 1.0]]));
        assert!(matches!(
            project(&mut t, v, &SinkhornConfig::default()),
            Err(Error::Domain { .. })
        ));
    }
}
