//! Finite-difference checks of the composite losses, run on small random
//! instances. Primitive checks live in [`crate::autodiff::checks`].

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::checks::FD_STEP;
use crate::autodiff::{grad_check, Tape, Var};
use crate::data::{ItemId, Slot};
use crate::error::{Error, Result};
use crate::generator::GeneratorVars;
use crate::matrix::Matrix;
use crate::objectives::{diversity_loss, infonce, seq_ndcg, semantic_loss, Agreement, ObjectiveConfig, RelevanceProfile};
use crate::recommender::{encode, next_item_loss, BackboneParams, BackboneVars};
use crate::sinkhorn::{project, SinkhornConfig};

pub const COMPOSITES: &[&str] = &[
    "diversity",
    "seq_ndcg_soft",
    "semantic",
    "infonce",
    "sinkhorn_soft",
    "generator_soft",
    "encode",
    "next_item",
];

fn rand_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

fn weighted_sum(t: &mut Tape, v: Var, w: &Matrix) -> Result<Var> {
    let w = t.constant(w.clone());
    let p = t.hadamard(v, w)?;
    t.sum(p)
}

fn backbone_vars(t: &mut Tape, v: &[Var]) -> Result<BackboneVars> {
    BackboneVars::from_parts(t, [v[0], v[1], v[2], v[3], v[4]])
}

fn backbone_point(p: BackboneParams) -> [Matrix; 5] {
    [p.emb, p.pos, p.wq, p.wk, p.wv]
}

/// Max relative error of one random instance of the named composite.
pub fn check_composite<R: Rng + ?Sized>(name: &str, rng: &mut R) -> Result<f64> {
    let h = FD_STEP;
    match name {
        "diversity" => {
            let n = rng.gen_range(2..=6);
            let a = rand_matrix(rng, n, n, 0.0, 1.0);
            let b = rand_matrix(rng, n, n, 0.0, 1.0);
            // keep the hinge active so the check is not trivially zero
            let dist: f64 = a.zip_map(&b, |x, y| (x - y) * (x - y)).sum();
            let cfg = ObjectiveConfig { epsilon: dist + 1.0, ..Default::default() };
            grad_check(|t, v| diversity_loss(t, v[0], v[1], &cfg), &[a, b], h)
        }
        "seq_ndcg_soft" => {
            let s_len = rng.gen_range(1..=6);
            let n = s_len + rng.gen_range(0..=3);
            let profile = RelevanceProfile::new(s_len, n, 0.1)?;
            let m = rand_matrix(rng, n, n, 0.0, 1.0);
            grad_check(|t, v| seq_ndcg(t, v[0], &profile), &[m], h)
        }
        "semantic" => {
            let s_len = rng.gen_range(2..=6);
            let n = s_len + rng.gen_range(0..=2);
            let profile = RelevanceProfile::new(s_len, n, 0.5)?;
            // small entries keep both hinges active
            let a = rand_matrix(rng, n, n, 0.0, 0.2);
            let b = rand_matrix(rng, n, n, 0.0, 0.2);
            grad_check(|t, v| Ok(semantic_loss(t, v[0], v[1], &profile)?.loss), &[a, b], h)
        }
        "infonce" => {
            let b = rng.gen_range(2..=5);
            let d = rng.gen_range(2..=5);
            let x = rand_matrix(rng, b, d, -2.0, 2.0);
            let y = rand_matrix(rng, b, d, -2.0, 2.0);
            let tau = rng.gen_range(0.2..1.0);
            let dir = if rng.gen_bool(0.5) { Agreement::Maximize } else { Agreement::Minimize };
            grad_check(|t, v| infonce(t, v[0], v[1], tau, dir), &[x, y], h)
        }
        "sinkhorn_soft" => {
            let n = rng.gen_range(2..=6);
            let a = rand_matrix(rng, n, n, 0.1, 1.0);
            let w = rand_matrix(rng, n, n, -1.0, 1.0);
            let cfg = SinkhornConfig { delta: 0.0, iters: rng.gen_range(1..=10), hard: false };
            grad_check(
                |t, v| {
                    let p = project(t, v[0], &cfg)?;
                    weighted_sum(t, p.out, &w)
                },
                &[a],
                h,
            )
        }
        "generator_soft" => {
            // full soft path on a length-6 padded sequence: generator blocks
            // -> attention -> Sinkhorn -> diversity + semantic loss
            let (s_len, n, d, dp) = (4, 6, 4, 3);
            let emb = rand_matrix(rng, n, d, -1.0, 1.0);
            let b = 1.0 / libm::sqrt(dp as f64);
            let point = [
                rand_matrix(rng, d, dp, -b, b),
                rand_matrix(rng, dp, dp, -b, b),
                rand_matrix(rng, dp, dp, -b, b),
                rand_matrix(rng, dp, dp, -b, b),
                rand_matrix(rng, dp, dp, -b, b),
            ];
            let profile = RelevanceProfile::new(s_len, n, 0.5)?;
            let sink = SinkhornConfig { delta: 0.0, iters: 5, hard: false };
            let obj = ObjectiveConfig { epsilon: 50.0, ..Default::default() };
            grad_check(
                |t, v| {
                    let vars = GeneratorVars { w: v[0], wq: [v[1], v[3]], wk: [v[2], v[4]] };
                    let e = t.constant(emb.clone());
                    let soft = crate::generator::transition_matrices(t, e, &vars)?;
                    let p0 = project(t, soft[0], &sink)?;
                    let p1 = project(t, soft[1], &sink)?;
                    let div = diversity_loss(t, p0.out, p1.out, &obj)?;
                    let sem = semantic_loss(t, p0.out, p1.out, &profile)?;
                    let sem = t.scalar_mul(sem.loss, 10.0)?;
                    t.add(div, sem)
                },
                &point,
                h,
            )
        }
        "encode" => {
            let params = BackboneParams::init(6, 8, 4, rng);
            let len = rng.gen_range(1..=6);
            let mut slots: Vec<Slot> = Vec::with_capacity(len + 1);
            for _ in 0..len {
                let item = ItemId(rng.gen_range(0..6));
                slots.push(rng.gen_bool(0.8).then_some(item));
            }
            slots.push(Some(ItemId(rng.gen_range(0..6))));
            grad_check(
                |t, v| {
                    let p = backbone_vars(t, v)?;
                    let r = encode(t, &p, &slots)?;
                    t.l2_norm_sq(r)
                },
                &backbone_point(params),
                h,
            )
        }
        "next_item" => {
            let params = BackboneParams::init(8, 8, 4, rng);
            let seqs: Vec<Vec<ItemId>> = (0..rng.gen_range(1..=3))
                .map(|_| (0..rng.gen_range(2..=6)).map(|_| ItemId(rng.gen_range(0..8))).collect())
                .collect();
            grad_check(
                |t, v| {
                    let p = backbone_vars(t, v)?;
                    let refs: Vec<&[ItemId]> = seqs.iter().map(Vec::as_slice).collect();
                    next_item_loss(t, &p, &refs)
                },
                &backbone_point(params),
                h,
            )
        }
        other => Err(Error::InvalidArgument {
            op: "check_composite",
            detail: format!("unknown composite {other}"),
        }),
    }
}

/// Worst error over `trials` random instances of every composite, in
/// [`COMPOSITES`] order.
pub fn check_all_composites<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Result<Vec<(&'static str, f64)>> {
    COMPOSITES
        .iter()
        .map(|&name| {
            let mut worst = 0.0f64;
            for _ in 0..trials {
                worst = worst.max(check_composite(name, rng)?);
            }
            Ok((name, worst))
        })
        .collect()
}
