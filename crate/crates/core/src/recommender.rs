//! Single-block, single-head causal self-attention backbone with tied output
//! embeddings, plus full-ranking evaluation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::data::{ItemId, Slot};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::objectives::{infonce, stack_rows, Agreement};

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneParams {
    /// `|V| x d`; also the output layer.
    pub emb: Matrix,
    /// `positions x d`, indexed by distance from the most recent item.
    pub pos: Matrix,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
}

impl BackboneParams {
    pub fn init<R: Rng + ?Sized>(vocab: usize, positions: usize, d: usize, rng: &mut R) -> Self {
        let b = 1.0 / libm::sqrt(d as f64);
        Self {
            emb: Matrix::uniform(vocab, d, b, rng),
            pos: Matrix::uniform(positions, d, b, rng),
            wq: Matrix::uniform(d, d, b, rng),
            wk: Matrix::uniform(d, d, b, rng),
            wv: Matrix::uniform(d, d, b, rng),
        }
    }

    pub fn vocab(&self) -> usize {
        self.emb.rows()
    }

    pub fn d(&self) -> usize {
        self.emb.cols()
    }

    pub fn positions(&self) -> usize {
        self.pos.rows()
    }

    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let names = ["backbone.emb", "backbone.pos", "backbone.wq", "backbone.wk", "backbone.wv"];
        let mats = [&self.emb, &self.pos, &self.wq, &self.wk, &self.wv];
        names.iter().map(|s| String::from(*s)).zip(mats).collect()
    }

    pub fn blocks_mut(&mut self) -> [&mut Matrix; 5] {
        [&mut self.emb, &mut self.pos, &mut self.wq, &mut self.wk, &mut self.wv]
    }

    /// Records the parameters on `tape`, as leaves when `trainable`.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> BackboneVars {
        let mut put = |m: &Matrix| {
            if trainable {
                tape.leaf(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        let (emb, pos, wq, wk, wv) = (put(&self.emb), put(&self.pos), put(&self.wq), put(&self.wk), put(&self.wv));
        let emb_t = tape.transpose(emb).expect("transpose never fails");
        BackboneVars {
            emb,
            pos,
            wq,
            wk,
            wv,
            emb_t,
            scale: 1.0 / libm::sqrt(self.d() as f64),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BackboneVars {
    pub emb: Var,
    pub pos: Var,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    emb_t: Var,
    scale: f64,
}

impl BackboneVars {
    /// Handles over already-recorded `[emb, pos, wq, wk, wv]` nodes.
    pub fn from_parts(tape: &mut Tape, vars: [Var; 5]) -> Result<Self> {
        let d = tape.value(vars[0]).cols();
        let emb_t = tape.transpose(vars[0])?;
        let [emb, pos, wq, wk, wv] = vars;
        Ok(Self {
            emb,
            pos,
            wq,
            wk,
            wv,
            emb_t,
            scale: 1.0 / libm::sqrt(d as f64),
        })
    }

    pub fn all(&self) -> [Var; 5] {
        [self.emb, self.pos, self.wq, self.wk, self.wv]
    }
}

fn last_present(present: &[bool]) -> Result<usize> {
    present.iter().rposition(|&p| p).ok_or(Error::EmptyView)
}

fn with_positions(tape: &mut Tape, p: &BackboneVars, x: Var, present: &[bool]) -> Result<(Var, usize)> {
    let n = present.len();
    if tape.value(x).rows() != n {
        return Err(Error::Dimension {
            op: "hidden_states",
            lhs: tape.value(x).shape(),
            rhs: (n, tape.value(p.emb).cols()),
        });
    }
    let last = last_present(present)?;
    if last >= tape.value(p.pos).rows() {
        return Err(Error::InvalidArgument {
            op: "hidden_states",
            detail: format!("length {} exceeds {} positions", last + 1, tape.value(p.pos).rows()),
        });
    }
    let pos_index = (0..n).map(|j| present[j].then(|| last - j)).collect();
    let pos = tape.gather_rows(p.pos, pos_index)?;
    Ok((tape.add(x, pos)?, last))
}

/// Attention output `x_rows + A (x wv)` for the query rows `x_rows` of `x`.
fn attend(tape: &mut Tape, p: &BackboneVars, x: Var, x_rows: Var, mask: Vec<bool>) -> Result<Var> {
    let q = tape.matmul(x_rows, p.wq)?;
    let k = tape.matmul(x, p.wk)?;
    let v = tape.matmul(x, p.wv)?;
    let kt = tape.transpose(k)?;
    let logits = tape.matmul(q, kt)?;
    let logits = tape.scalar_mul(logits, p.scale)?;
    let a = tape.row_softmax_masked(logits, mask)?;
    let av = tape.matmul(a, v)?;
    tape.add(x_rows, av)
}

/// Hidden states `x + A (x wv)` for embedded rows `x` (`n x d`), where
/// `A` is causal attention restricted to present positions.
pub fn hidden_states(tape: &mut Tape, p: &BackboneVars, x: Var, present: &[bool]) -> Result<Var> {
    let (x, _) = with_positions(tape, p, x, present)?;
    let n = present.len();
    let mut mask = vec![false; n * n];
    for i in (0..n).filter(|&i| present[i]) {
        for j in 0..=i {
            mask[i * n + j] = present[j];
        }
    }
    attend(tape, p, x, x, mask)
}

/// Row of [`hidden_states`] at the last present position, computed without
/// the other rows.
pub fn last_hidden(tape: &mut Tape, p: &BackboneVars, x: Var, present: &[bool]) -> Result<Var> {
    let (x, last) = with_positions(tape, p, x, present)?;
    let row = tape.gather_rows(x, vec![Some(last)])?;
    let mask = present.iter().enumerate().map(|(j, &on)| on && j <= last).collect();
    attend(tape, p, x, row, mask)
}

/// Representation of a slot sequence: hidden state at the last item.
pub fn encode(tape: &mut Tape, p: &BackboneVars, slots: &[Slot]) -> Result<Var> {
    let present: Vec<bool> = slots.iter().map(Option::is_some).collect();
    let x = tape.gather_rows(p.emb, slots.iter().map(|s| s.map(ItemId::index)).collect())?;
    last_hidden(tape, p, x, &present)
}

/// Representation of a view given as a (straight-through) matrix node `m`
/// over the embeddings `emb_star` of the padded sequence: the view's rows
/// are `m^T emb_star`.
pub fn encode_matrix_view(
    tape: &mut Tape,
    p: &BackboneVars,
    m: Var,
    emb_star: Var,
    present: &[bool],
) -> Result<Var> {
    let mt = tape.transpose(m)?;
    let x = tape.matmul(mt, emb_star)?;
    last_hidden(tape, p, x, present)
}

/// Mean next-item cross-entropy over every position of every sequence,
/// scored against the whole vocabulary. Sequences shorter than 2 add no
/// terms; with no terms at all the loss is a constant 0.
pub fn next_item_loss(tape: &mut Tape, p: &BackboneVars, seqs: &[&[ItemId]]) -> Result<Var> {
    let mut total: Option<Var> = None;
    let mut count = 0usize;
    for s in seqs.iter().filter(|s| s.len() >= 2) {
        let n = s.len() - 1;
        let x = tape.gather_rows(p.emb, s[..n].iter().map(|i| Some(i.index())).collect())?;
        let h = hidden_states(tape, p, x, &vec![true; n])?;
        let logits = tape.matmul(h, p.emb_t)?;
        let nll = tape.softmax_cross_entropy(logits, s[1..].iter().map(|i| Some(i.index())).collect())?;
        let sum = tape.sum(nll)?;
        total = Some(match total {
            Some(t) => tape.add(t, sum)?,
            None => sum,
        });
        count += n;
    }
    match total {
        Some(t) => tape.scalar_mul(t, 1.0 / count as f64),
        None => Ok(tape.constant(Matrix::zeros(1, 1))),
    }
}

/// Contrastive agreement between the two views of every user.
pub fn ssl_loss(tape: &mut Tape, p: &BackboneVars, views: &[[&[Slot]; 2]], tau: f64) -> Result<Var> {
    let mut sides: [Vec<Var>; 2] = [Vec::new(), Vec::new()];
    for pair in views {
        for z in 0..2 {
            sides[z].push(encode(tape, p, pair[z])?);
        }
    }
    let a = stack_rows(tape, &sides[0])?;
    let b = stack_rows(tape, &sides[1])?;
    infonce(tape, a, b, tau, Agreement::Maximize)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingResult {
    /// One score per vocabulary item.
    pub scores: Vec<f64>,
    pub target: ItemId,
    /// 1-based; ties go to the smaller item id.
    pub rank: usize,
}

pub fn rank_of(scores: &[f64], target: ItemId) -> usize {
    let t = target.index();
    let st = scores[t];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > st || (s == st && i < t))
        .count()
}

/// Scores every item for the next position after `history`.
pub fn score(params: &BackboneParams, history: &[ItemId]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let p = params.register(&mut tape, false);
    score_on(&mut tape, &p, history)
}

fn score_on(tape: &mut Tape, p: &BackboneVars, history: &[ItemId]) -> Result<Vec<f64>> {
    let mark = tape.len();
    let slots: Vec<Slot> = history.iter().copied().map(Some).collect();
    let rep = encode(tape, p, &slots)?;
    let out = tape.matmul(rep, p.emb_t)?;
    let scores = tape.value(out).as_slice().to_vec();
    tape.truncate(mark);
    Ok(scores)
}

pub fn rank_cases(params: &BackboneParams, cases: &[(&[ItemId], ItemId)]) -> Result<Vec<RankingResult>> {
    let mut tape = Tape::new();
    let p = params.register(&mut tape, false);
    cases
        .iter()
        .map(|&(history, target)| {
            let scores = score_on(&mut tape, &p, history)?;
            if target.index() >= scores.len() {
                return Err(Error::InvalidArgument {
                    op: "rank_cases",
                    detail: format!("target {} outside vocabulary {}", target.0, scores.len()),
                });
            }
            let rank = rank_of(&scores, target);
            Ok(RankingResult { scores, target, rank })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RankMetrics {
    pub hr10: f64,
    pub hr20: f64,
    pub ndcg10: f64,
    pub ndcg20: f64,
}

/// `(HR@k, NDCG@k)` over 1-based ranks.
pub fn hit_and_ndcg(ranks: &[usize], k: usize) -> (f64, f64) {
    if ranks.is_empty() {
        return (0.0, 0.0);
    }
    let mut hits = 0.0;
    let mut gain = 0.0;
    for &r in ranks.iter().filter(|&&r| r <= k) {
        hits += 1.0;
        gain += 1.0 / libm::log2((r + 1) as f64);
    }
    let n = ranks.len() as f64;
    (hits / n, gain / n)
}

impl RankMetrics {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        let (hr10, ndcg10) = hit_and_ndcg(ranks, 10);
        let (hr20, ndcg20) = hit_and_ndcg(ranks, 20);
        Self {
            hr10,
            hr20,
            ndcg10,
            ndcg20,
        }
    }
}

pub fn evaluate(params: &BackboneParams, cases: &[(&[ItemId], ItemId)]) -> Result<RankMetrics> {
    let ranks: Vec<usize> = rank_cases(params, cases)?.iter().map(|r| r.rank).collect();
    Ok(RankMetrics::from_ranks(&ranks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn items(v: &[u32]) -> Vec<ItemId> {
        v.iter().copied().map(ItemId).collect()
    }

    fn rep(params: &BackboneParams, slots: &[Slot]) -> Matrix {
        let mut t = Tape::new();
        let p = params.register(&mut t, false);
        let r = encode(&mut t, &p, slots).unwrap();
        t.value(r).clone()
    }

    #[test]
    fn sentinel_tail_is_ignored() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = BackboneParams::init(20, 10, 8, &mut rng);
        let base: Vec<Slot> = items(&[3, 7, 1, 9]).into_iter().map(Some).collect();
        let mut tail = base.clone();
        tail.extend([None, None, None]);
        assert_eq!(rep(&params, &base), rep(&params, &base));
        assert!(rep(&params, &base).max_abs_diff(&rep(&params, &tail)) < 1e-15);
    }

    #[test]
    fn last_hidden_matches_full_hidden_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = BackboneParams::init(20, 12, 8, &mut rng);
        let slots = [Some(ItemId(2)), None, Some(ItemId(5)), Some(ItemId(2)), None, Some(ItemId(11)), None];
        let present: Vec<bool> = slots.iter().map(Option::is_some).collect();
        let mut t = Tape::new();
        let p = params.register(&mut t, false);
        let x = t.gather_rows(p.emb, slots.iter().map(|s| s.map(ItemId::index)).collect()).unwrap();
        let full = hidden_states(&mut t, &p, x, &present).unwrap();
        let last = last_hidden(&mut t, &p, x, &present).unwrap();
        assert_eq!(t.value(full).row(5), t.value(last).row(0));
    }

    #[test]
    fn all_sentinel_view_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = BackboneParams::init(20, 10, 8, &mut rng);
        let mut t = Tape::new();
        let p = params.register(&mut t, false);
        assert!(matches!(encode(&mut t, &p, &[None, None]), Err(Error::EmptyView)));
    }

    #[test]
    fn hidden_states_are_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = BackboneParams::init(30, 10, 8, &mut rng);
        let hidden = |s: &[u32]| {
            let mut t = Tape::new();
            let p = params.register(&mut t, false);
            let x = t.gather_rows(p.emb, s.iter().map(|&i| Some(i as usize)).collect()).unwrap();
            // distances to the end change with length, so compare at fixed length
            let h = hidden_states(&mut t, &p, x, &vec![true; s.len()]).unwrap();
            t.value(h).clone()
        };
        let a = hidden(&[1, 2, 3, 4, 5, 6]);
        let b = hidden(&[1, 2, 3, 20, 21, 6]);
        for r in 0..3 {
            assert_eq!(a.row(r), b.row(r));
        }
        assert_ne!(a.row(3), b.row(3));
    }

    #[test]
    fn encode_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let params = BackboneParams::init(6, 6, 4, &mut rng);
            let slots = [Some(ItemId(1)), Some(ItemId(4)), None, Some(ItemId(1)), Some(ItemId(0))];
            let point = [params.emb, params.pos, params.wq, params.wk, params.wv];
            let err = grad_check(
                |t, v| {
                    let p = BackboneVars::from_parts(t, [v[0], v[1], v[2], v[3], v[4]])?;
                    let r = encode(t, &p, &slots)?;
                    t.l2_norm_sq(r)
                },
                &point,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{err}");
        }
    }

    #[test]
    fn untrained_loss_near_log_vocab() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = BackboneParams::init(100, 20, 8, &mut rng);
        params.emb = Matrix::zeros(100, 8);
        let mut t = Tape::new();
        let p = params.register(&mut t, true);
        let s = items(&[1, 2, 3, 4, 5]);
        let l = next_item_loss(&mut t, &p, &[&s]).unwrap();
        assert!((t.scalar(l) - 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_item_sequences_add_no_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = BackboneParams::init(10, 10, 4, &mut rng);
        let mut t = Tape::new();
        let p = params.register(&mut t, true);
        let (a, b) = (items(&[1, 2, 3]), items(&[4]));
        let both = next_item_loss(&mut t, &p, &[&a, &b]).unwrap();
        let one = next_item_loss(&mut t, &p, &[&a]).unwrap();
        assert_eq!(t.scalar(both), t.scalar(one));
        let none = next_item_loss(&mut t, &p, &[&b]).unwrap();
        assert_eq!(t.scalar(none), 0.0);
    }

    #[test]
    fn ssl_reaches_embeddings_and_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = BackboneParams::init(20, 10, 8, &mut rng);
        let mut t = Tape::new();
        let p = params.register(&mut t, true);
        let seqs: Vec<Vec<Slot>> = (0..4)
            .map(|u| (0..5).map(|i| Some(ItemId((u * 5 + i) % 20))).collect())
            .collect();
        let pairs: Vec<[&[Slot]; 2]> = seqs.iter().map(|s| [s.as_slice(), s.as_slice()]).collect();
        let l = ssl_loss(&mut t, &p, &pairs, 0.5).unwrap();
        assert!(t.scalar(l) < 4f64.ln());
        t.backward(l).unwrap();
        for v in p.all() {
            assert!(t.grad(v).unwrap().as_slice().iter().any(|&g| g != 0.0));
        }
    }

    #[test]
    fn rank_ties_go_to_smaller_ids() {
        let scores = [0.5, 0.9, 0.5, 0.1, 0.5];
        assert_eq!(rank_of(&scores, ItemId(1)), 1);
        assert_eq!(rank_of(&scores, ItemId(0)), 2);
        assert_eq!(rank_of(&scores, ItemId(2)), 3);
        assert_eq!(rank_of(&scores, ItemId(4)), 4);
        assert_eq!(rank_of(&scores, ItemId(3)), 5);
    }

    #[test]
    fn metric_boundaries() {
        let m = RankMetrics::from_ranks(&[1; 7]);
        assert_eq!((m.hr10, m.ndcg10), (1.0, 1.0));
        let m = RankMetrics::from_ranks(&[11; 7]);
        assert_eq!((m.hr10, m.ndcg10, m.hr20), (0.0, 0.0, 1.0));
        assert!((m.ndcg20 - 1.0 / 12f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn untrained_model_is_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut hr = Vec::new();
        for _ in 0..4 {
            let params = BackboneParams::init(200, 20, 8, &mut rng);
            let histories: Vec<Vec<ItemId>> = (0..500)
                .map(|_| (0..8).map(|_| ItemId(rng.gen_range(0..200))).collect())
                .collect();
            let targets: Vec<ItemId> = (0..500).map(|_| ItemId(rng.gen_range(0..200))).collect();
            let cases: Vec<(&[ItemId], ItemId)> =
                histories.iter().map(Vec::as_slice).zip(targets.iter().copied()).collect();
            hr.push(evaluate(&params, &cases).unwrap().hr10);
        }
        let mean = hr.iter().sum::<f64>() / hr.len() as f64;
        assert!((mean - 0.05).abs() < 0.02, "{hr:?}");
    }
}
