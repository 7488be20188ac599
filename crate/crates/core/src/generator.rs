//! Per-user generator of two transform matrices.
//!
//! The padded sequence's item embeddings are projected by a shared matrix and
//! fed to two independent single-head attention maps. Each map is a
//! row-stochastic transition matrix (`a[i][j]`: probability of moving source
//! item `i` to position `j`), which Semi-Sinkhorn turns into a hard matrix.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::augment::{apply, AugmentedView};
use crate::autodiff::{Tape, Var};
use crate::data::PaddedSequence;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::sinkhorn::{project, Projection, SinkhornConfig};

pub const DEFAULT_PROJECTION_DIM: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    /// `d x d'` shared projection.
    pub w: Matrix,
    /// Per-view query weights, `d' x d'`.
    pub wq: [Matrix; 2],
    /// Per-view key weights, `d' x d'`.
    pub wk: [Matrix; 2],
}

impl GeneratorParams {
    /// All blocks uniform in `(-1/sqrt(d'), 1/sqrt(d'))`, with each view's
    /// key weights starting equal to its query weights. The logits are then a
    /// positive semi-definite form, so attention starts self-dominant and the
    /// rounded views start near the identity.
    pub fn init<R: Rng + ?Sized>(d: usize, d_prime: usize, rng: &mut R) -> Self {
        let b = 1.0 / libm::sqrt(d_prime as f64);
        let mut m = |r, c| Matrix::uniform(r, c, b, rng);
        let w = m(d, d_prime);
        let wq = [m(d_prime, d_prime), m(d_prime, d_prime)];
        Self { w, wk: wq.clone(), wq }
    }

    /// Like [`Self::init`] but with independently drawn key weights.
    pub fn init_untied<R: Rng + ?Sized>(d: usize, d_prime: usize, rng: &mut R) -> Self {
        let b = 1.0 / libm::sqrt(d_prime as f64);
        let mut m = |r, c| Matrix::uniform(r, c, b, rng);
        Self {
            w: m(d, d_prime),
            wq: [m(d_prime, d_prime), m(d_prime, d_prime)],
            wk: [m(d_prime, d_prime), m(d_prime, d_prime)],
        }
    }

    pub fn d(&self) -> usize {
        self.w.rows()
    }

    pub fn d_prime(&self) -> usize {
        self.w.cols()
    }

    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let names = ["generator.w", "generator.wq1", "generator.wk1", "generator.wq2", "generator.wk2"];
        let mats = [&self.w, &self.wq[0], &self.wk[0], &self.wq[1], &self.wk[1]];
        names.iter().map(|s| String::from(*s)).zip(mats).collect()
    }

    pub fn blocks_mut(&mut self) -> [&mut Matrix; 5] {
        let [q1, q2] = &mut self.wq;
        let [k1, k2] = &mut self.wk;
        [&mut self.w, q1, k1, q2, k2]
    }

    /// Records every block as a differentiable leaf.
    pub fn register(&self, tape: &mut Tape) -> GeneratorVars {
        GeneratorVars {
            w: tape.leaf(self.w.clone()),
            wq: [tape.leaf(self.wq[0].clone()), tape.leaf(self.wq[1].clone())],
            wk: [tape.leaf(self.wk[0].clone()), tape.leaf(self.wk[1].clone())],
        }
    }
}

/// Tape handles of [`GeneratorParams`], in `blocks_mut` order via [`Self::all`].
#[derive(Clone, Copy, Debug)]
pub struct GeneratorVars {
    pub w: Var,
    pub wq: [Var; 2],
    pub wk: [Var; 2],
}

impl GeneratorVars {
    pub fn all(&self) -> [Var; 5] {
        [self.w, self.wq[0], self.wk[0], self.wq[1], self.wk[1]]
    }
}

/// `a_z = row_softmax((h wq_z)(h wk_z)^T / sqrt(d'))` with `h = emb * w`.
pub fn transition_matrices(tape: &mut Tape, emb: Var, p: &GeneratorVars) -> Result<[Var; 2]> {
    let (_, d) = tape.value(emb).shape();
    let w = tape.value(p.w);
    if d != w.rows() {
        return Err(Error::Dimension {
            op: "transition_matrices",
            lhs: tape.value(emb).shape(),
            rhs: w.shape(),
        });
    }
    let scale = 1.0 / libm::sqrt(w.cols() as f64);
    let h = tape.matmul(emb, p.w)?;
    let mut out = [h; 2];
    for z in 0..2 {
        let q = tape.matmul(h, p.wq[z])?;
        let k = tape.matmul(h, p.wk[z])?;
        let kt = tape.transpose(k)?;
        let logits = tape.matmul(q, kt)?;
        let scaled = tape.scalar_mul(logits, scale)?;
        out[z] = tape.row_softmax(scaled)?;
    }
    Ok(out)
}

/// Both views of one padded sequence.
#[derive(Clone, Debug)]
pub struct ViewPair {
    /// Row-stochastic attention maps.
    pub soft: [Var; 2],
    pub projections: [Projection; 2],
    pub views: [AugmentedView; 2],
    /// Detached item embeddings of the padded sequence the views were built from.
    pub emb: Var,
}

impl ViewPair {
    /// Straight-through matrix nodes.
    pub fn outs(&self) -> [Var; 2] {
        [self.projections[0].out, self.projections[1].out]
    }
}

/// Generates and projects both transform matrices for `s`. `emb` holds the
/// recommender's embeddings of `s`'s items; it is detached here so generator
/// losses never reach the embedding table.
pub fn generate_views(
    tape: &mut Tape,
    s: &PaddedSequence,
    emb: Var,
    p: &GeneratorVars,
    sink: &SinkhornConfig,
) -> Result<ViewPair> {
    let rows = tape.value(emb).rows();
    if rows != s.len() {
        return Err(Error::Dimension {
            op: "generate_views",
            lhs: tape.value(emb).shape(),
            rhs: (s.len(), 1),
        });
    }
    let emb = tape.constant_view(emb)?;
    let soft = transition_matrices(tape, emb, p)?;
    let p0 = project(tape, soft[0], sink)?;
    let p1 = project(tape, soft[1], sink)?;
    let views = [apply(&p0.hard, s)?, apply(&p1.hard, s)?];
    Ok(ViewPair {
        soft,
        projections: [p0, p1],
        views,
        emb,
    })
}
