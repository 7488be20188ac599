//! Generator objectives (diversity, sequence-aware NDCG floor, adversarial
//! InfoNCE) and the recommender's contrastive agreement loss.

use alloc::format;
use alloc::vec::Vec;

use crate::augment::TransformMatrix;
use crate::autodiff::{Axis, Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveConfig {
    /// Diversity threshold on `||m1 - m2||^2`.
    pub epsilon: f64,
    /// Perturbation budget: fraction of most recent items the worst-case
    /// reference is allowed to destroy.
    pub gamma: f64,
    /// InfoNCE temperature.
    pub tau: f64,
    pub lambda_div: f64,
    pub lambda_ndcg: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            epsilon: 20.0,
            gamma: 0.1,
            tau: 0.5,
            lambda_div: 1.0,
            lambda_ndcg: 1.0,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon > 0.0
            && self.gamma > 0.0
            && self.gamma <= 1.0
            && self.tau > 0.0
            && self.lambda_div >= 0.0
            && self.lambda_ndcg >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument {
                op: "objective_config",
                detail: format!("{self:?}"),
            })
        }
    }
}

/// Position-based relevance of a padded sequence with `s_len` original items
/// and `n` rows in total. Original item `i` (0-based) has relevance `i + 1`;
/// pad rows have 0. View position `j` is discounted by
/// `1 / log2(n - j + 1)`, so the last position counts most.
///
/// `idcg` is the DCG of the identity on the unpadded prefix, so the identity
/// on the padded sequence scores exactly 1. Moving original items into the
/// trailing pad slots earns larger discounts and can score above 1.
#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceProfile {
    pub rel: Vec<f64>,
    pub discount: Vec<f64>,
    /// DCG of the identity on the unpadded prefix.
    pub idcg: f64,
    /// NDCG of the worst case allowed by the budget.
    pub ndcg_star: f64,
    pub s_len: usize,
}

impl RelevanceProfile {
    pub fn new(s_len: usize, n: usize, gamma: f64) -> Result<Self> {
        if s_len == 0 || n < s_len {
            return Err(Error::Domain {
                op: "relevance_profile",
                detail: format!("prefix {s_len} of {n}"),
            });
        }
        let rel: Vec<f64> = (0..n)
            .map(|i| if i < s_len { (i + 1) as f64 } else { 0.0 })
            .collect();
        let discount: Vec<f64> = (0..n)
            .map(|j| 1.0 / libm::log2((n - j + 1) as f64))
            .collect();
        let idcg = (0..s_len).map(|i| rel[i] * discount[i]).sum();
        let mut profile = Self {
            rel,
            discount,
            idcg,
            ndcg_star: 0.0,
            s_len,
        };
        profile.ndcg_star = profile.worst_case(gamma);
        Ok(profile)
    }

    pub fn n(&self) -> usize {
        self.rel.len()
    }

    /// Number of most recent items zeroed in the worst case.
    pub fn budget(s_len: usize, gamma: f64) -> usize {
        let c = libm::floor(gamma * s_len as f64) as usize;
        c.max(1).min(s_len)
    }

    /// NDCG of the identity placement once the `budget` most recent items
    /// lose their relevance.
    pub fn worst_case(&self, gamma: f64) -> f64 {
        let c = Self::budget(self.s_len, gamma);
        let kept: f64 = (0..self.s_len - c).map(|i| self.rel[i] * self.discount[i]).sum();
        kept / self.idcg
    }

    /// `W[i][j] = rel_i * discount_j`; NDCG is `sum(m ∘ W) / idcg`.
    pub fn gain_matrix(&self) -> Matrix {
        let n = self.n();
        Matrix::from_fn(n, n, |i, j| self.rel[i] * self.discount[j])
    }

    /// NDCG of a hard matrix.
    pub fn ndcg(&self, m: &TransformMatrix) -> f64 {
        m.entries()
            .map(|(i, j)| self.rel[i] * self.discount[j])
            .sum::<f64>()
            / self.idcg
    }
}

/// Sequence-aware NDCG of a (soft or straight-through) matrix node.
pub fn seq_ndcg(tape: &mut Tape, m: Var, profile: &RelevanceProfile) -> Result<Var> {
    let n = profile.n();
    if tape.value(m).shape() != (n, n) {
        return Err(Error::Dimension {
            op: "seq_ndcg",
            lhs: tape.value(m).shape(),
            rhs: (n, n),
        });
    }
    if !(profile.idcg > 0.0) {
        return Err(Error::Domain {
            op: "seq_ndcg",
            detail: format!("idcg {}", profile.idcg),
        });
    }
    let w = tape.constant(profile.gain_matrix());
    let g = tape.hadamard(m, w)?;
    let dcg = tape.sum(g)?;
    // dividing last keeps the identity at exactly 1
    let idcg = scalar(tape, profile.idcg);
    tape.broadcast_div(dcg, idcg, Axis::Rows)
}

fn scalar(tape: &mut Tape, v: f64) -> Var {
    tape.constant(Matrix::filled(1, 1, v))
}

/// `max(0, epsilon - ||m1 - m2||^2)`.
pub fn diversity_loss(tape: &mut Tape, m1: Var, m2: Var, cfg: &ObjectiveConfig) -> Result<Var> {
    let diff = tape.sub(m1, m2)?;
    let sq = tape.l2_norm_sq(diff)?;
    let eps = scalar(tape, cfg.epsilon);
    let gap = tape.sub(eps, sq)?;
    tape.relu_hinge(gap)
}

/// Semantic-invariance loss of one view pair, with its two hinge terms.
#[derive(Clone, Copy, Debug)]
pub struct SemanticTerms {
    pub loss: Var,
    pub hinges: [Var; 2],
    pub ndcg: [Var; 2],
}

/// `sum_z max(0, NDCG* - NDCG(m_z))`.
pub fn semantic_loss(tape: &mut Tape, m1: Var, m2: Var, profile: &RelevanceProfile) -> Result<SemanticTerms> {
    let star = scalar(tape, profile.ndcg_star);
    let mut hinges = [star; 2];
    let mut ndcg = [star; 2];
    for (z, m) in [m1, m2].into_iter().enumerate() {
        ndcg[z] = seq_ndcg(tape, m, profile)?;
        let gap = tape.sub(star, ndcg[z])?;
        hinges[z] = tape.relu_hinge(gap)?;
    }
    let loss = tape.add(hinges[0], hinges[1])?;
    Ok(SemanticTerms { loss, hinges, ndcg })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Agreement {
    /// Standard contrastive loss `mean(-log ratio)`; minimising it pulls the
    /// two views of a user together.
    Maximize,
    /// `mean(+log ratio)`; minimising it pushes the views apart.
    Minimize,
}

/// InfoNCE over a batch of `B` anchor/positive rows with cosine similarity.
/// Anchor `u`'s denominator runs over every positive in the batch, its own
/// included, so each anchor sees `B - 1` negatives.
pub fn infonce(tape: &mut Tape, anchors: Var, positives: Var, tau: f64, direction: Agreement) -> Result<Var> {
    let b = tape.value(anchors).rows();
    if b < 2 || tape.value(positives).rows() != b {
        return Err(Error::Dimension {
            op: "infonce",
            lhs: tape.value(anchors).shape(),
            rhs: tape.value(positives).shape(),
        });
    }
    let sim = tape.cosine_similarity(anchors, positives)?;
    let logits = tape.scalar_mul(sim, 1.0 / tau)?;
    let nll = tape.softmax_cross_entropy(logits, (0..b).map(Some).collect())?;
    let total = tape.sum(nll)?;
    let sign = match direction {
        Agreement::Maximize => 1.0,
        Agreement::Minimize => -1.0,
    };
    tape.scalar_mul(total, sign / b as f64)
}

/// Batch-level pieces of the generator objective.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorLossParts {
    /// InfoNCE in the [`Agreement::Minimize`] direction.
    pub info: Var,
    pub div: Var,
    pub ndcg: Var,
}

/// `info + lambda_div * div + lambda_ndcg * ndcg`.
pub fn joint_generator_loss(tape: &mut Tape, parts: &GeneratorLossParts, cfg: &ObjectiveConfig) -> Result<Var> {
    let div = tape.scalar_mul(parts.div, cfg.lambda_div)?;
    let ndcg = tape.scalar_mul(parts.ndcg, cfg.lambda_ndcg)?;
    let s = tape.add(parts.info, div)?;
    tape.add(s, ndcg)
}

/// Stacks `1 x d` rows into a `k x d` node.
pub fn stack_rows(tape: &mut Tape, rows: &[Var]) -> Result<Var> {
    let k = rows.len();
    let mut acc: Option<Var> = None;
    for (u, &r) in rows.iter().enumerate() {
        let mut e = Matrix::zeros(k, 1);
        e[(u, 0)] = 1.0;
        let e = tape.constant(e);
        let placed = tape.matmul(e, r)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, placed)?,
            None => placed,
        });
    }
    acc.ok_or(Error::EmptyView)
}

/// Mean of `1 x 1` nodes.
pub fn mean(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let mut acc = *terms.first().ok_or(Error::EmptyView)?;
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    tape.scalar_mul(acc, 1.0 / terms.len() as f64)
}
