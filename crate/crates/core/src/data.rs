//! Items, user histories, leave-one-out splits, noise injection, padding and
//! the synthetic Markov data generator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense item index in `[0, vocab)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemId(pub u32);

impl ItemId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One position of a view: an item, or `None` for the empty sentinel.
pub type Slot = Option<ItemId>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const DEFAULT_MAX_LEN: usize = 50;
pub const DEFAULT_MIN_INTERACTIONS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionSequence {
    pub user: UserId,
    pub items: Vec<ItemId>,
    /// Nondecreasing when present; parallel to `items`.
    pub timestamps: Option<Vec<i64>>,
}

impl InteractionSequence {
    pub fn new(user: UserId, items: Vec<ItemId>) -> Self {
        Self {
            user,
            items,
            timestamps: None,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// A sequence followed by `k` fresh items that do not occur in it.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedSequence {
    pub base: InteractionSequence,
    pub pad_items: Vec<ItemId>,
}

impl PaddedSequence {
    /// Total length `|s| + k`.
    pub fn len(&self) -> usize {
        self.base.len() + self.pad_items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn prefix_len(&self) -> usize {
        self.base.len()
    }

    pub fn item(&self, i: usize) -> ItemId {
        let p = self.base.len();
        if i < p {
            self.base.items[i]
        } else {
            self.pad_items[i - p]
        }
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.base.items.iter().chain(&self.pad_items).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserSplit {
    pub user: UserId,
    pub train: Vec<ItemId>,
    pub valid: ItemId,
    pub test: ItemId,
}

impl UserSplit {
    /// History used to predict the test item: `train ∥ valid`, keeping the
    /// most recent `max_len` items.
    pub fn test_input(&self, max_len: usize) -> Vec<ItemId> {
        let mut seq = self.train.clone();
        seq.push(self.valid);
        let skip = seq.len().saturating_sub(max_len);
        seq.split_off(skip)
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DatasetSplit {
    pub users: Vec<UserSplit>,
}

/// Last item to test, second-to-last to validation, the rest (most recent
/// `max_len`) to training.
pub fn leave_one_out_split(seqs: &[InteractionSequence], max_len: usize) -> Result<DatasetSplit> {
    let users = seqs
        .iter()
        .map(|s| {
            let n = s.items.len();
            if n < 3 {
                return Err(Error::SequenceTooShort(s.user));
            }
            let prefix = &s.items[..n - 2];
            let start = prefix.len().saturating_sub(max_len);
            Ok(UserSplit {
                user: s.user,
                train: prefix[start..].to_vec(),
                valid: s.items[n - 2],
                test: s.items[n - 1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetSplit { users })
}

fn membership(items: &[ItemId], vocab: usize) -> Vec<bool> {
    let mut seen = vec![false; vocab];
    for it in items {
        if it.index() < vocab {
            seen[it.index()] = true;
        }
    }
    seen
}

fn complement(items: &[ItemId], vocab: usize) -> Vec<ItemId> {
    membership(items, vocab)
        .into_iter()
        .enumerate()
        .filter(|(_, present)| !present)
        .map(|(i, _)| ItemId(i as u32))
        .collect()
}

/// Number of noisy positions: `ratio * n` rounded half up.
pub fn noise_count(ratio: f64, n: usize) -> usize {
    (libm::floor(ratio * n as f64 + 0.5) as usize).min(n)
}

/// Replaces exactly [`noise_count`] positions, chosen uniformly without
/// replacement, by items drawn uniformly from outside the sequence.
pub fn inject_noise<R: Rng + ?Sized>(
    seq: &InteractionSequence,
    ratio: f64,
    vocab: usize,
    rng: &mut R,
) -> Result<InteractionSequence> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Domain {
            op: "inject_noise",
            detail: format!("ratio {ratio} outside [0, 1]"),
        });
    }
    let count = noise_count(ratio, seq.len());
    let mut out = seq.clone();
    if count == 0 {
        return Ok(out);
    }
    let pool = complement(&seq.items, vocab);
    if pool.is_empty() {
        return Err(Error::Exhausted {
            op: "inject_noise",
            needed: 1,
            available: 0,
        });
    }
    for pos in index::sample(rng, seq.len(), count).into_iter() {
        out.items[pos] = pool[rng.gen_range(0..pool.len())];
    }
    Ok(out)
}

/// Appends `k` distinct items absent from `seq`, drawn uniformly.
pub fn pad_sequence<R: Rng + ?Sized>(
    seq: &InteractionSequence,
    k: usize,
    vocab: usize,
    rng: &mut R,
) -> Result<PaddedSequence> {
    let pool = complement(&seq.items, vocab);
    if pool.len() < k {
        return Err(Error::Exhausted {
            op: "pad_sequence",
            needed: k,
            available: pool.len(),
        });
    }
    let pad_items = index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    Ok(PaddedSequence {
        base: seq.clone(),
        pad_items,
    })
}

/// Parameters of the synthetic Markov dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Markov order, 1 or 2.
    pub order: usize,
    /// Number of likely successors per context.
    pub successors: usize,
    /// Probability mass shared evenly by the likely successors; the rest is
    /// spread uniformly over the whole vocabulary.
    pub successor_mass: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            users: 500,
            vocab: 300,
            min_len: 10,
            max_len: 30,
            order: 1,
            successors: 3,
            successor_mass: 0.8,
        }
    }
}

/// Sparse random transition table. First-order tables are stored; for the
/// second order the successors of a context are re-derived from a hash.
#[derive(Clone, Debug)]
pub struct MarkovTable {
    order: usize,
    vocab: usize,
    seed: u64,
    mass: f64,
    successors: usize,
    first_order: Vec<Vec<ItemId>>,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl MarkovTable {
    pub fn new(cfg: &SyntheticConfig, seed: u64) -> Result<Self> {
        if cfg.vocab < 20 {
            return Err(Error::InvalidArgument {
                op: "generate_synthetic",
                detail: format!("vocab {} below minimum 20", cfg.vocab),
            });
        }
        if !(1..=2).contains(&cfg.order) {
            return Err(Error::InvalidArgument {
                op: "generate_synthetic",
                detail: format!("order {} not in {{1, 2}}", cfg.order),
            });
        }
        if cfg.successors == 0 || cfg.successors > cfg.vocab || !(0.0..=1.0).contains(&cfg.successor_mass) {
            return Err(Error::InvalidArgument {
                op: "generate_synthetic",
                detail: format!(
                    "{} successors with mass {}",
                    cfg.successors, cfg.successor_mass
                ),
            });
        }
        let mut table = Self {
            order: cfg.order,
            vocab: cfg.vocab,
            seed,
            mass: cfg.successor_mass,
            successors: cfg.successors,
            first_order: Vec::new(),
        };
        if cfg.order == 1 {
            table.first_order = (0..cfg.vocab as u64)
                .map(|v| table.derive(mix(v)))
                .collect();
        }
        Ok(table)
    }

    fn derive(&self, key: u64) -> Vec<ItemId> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ key);
        index::sample(&mut rng, self.vocab, self.successors)
            .into_iter()
            .map(|i| ItemId(i as u32))
            .collect()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Likely successors of the trailing `order` items of `context`.
    pub fn successors(&self, context: &[ItemId]) -> Vec<ItemId> {
        let last = context[context.len() - 1];
        if self.order == 1 || context.len() < 2 {
            if self.order == 1 {
                return self.first_order[last.index()].clone();
            }
            return self.derive(mix(last.0 as u64) ^ 0xA5A5);
        }
        let prev = context[context.len() - 2];
        self.derive(mix(((prev.0 as u64) << 32) | last.0 as u64))
    }

    pub fn next_item<R: Rng + ?Sized>(&self, context: &[ItemId], rng: &mut R) -> ItemId {
        if rng.gen_bool(self.mass) {
            let succ = self.successors(context);
            succ[rng.gen_range(0..succ.len())]
        } else {
            ItemId(rng.gen_range(0..self.vocab as u32))
        }
    }
}

/// Samples `cfg.users` sequences with lengths uniform in
/// `[cfg.min_len, cfg.max_len]` from a random sparse Markov chain.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<Vec<InteractionSequence>> {
    if cfg.min_len < DEFAULT_MIN_INTERACTIONS || cfg.max_len < cfg.min_len {
        return Err(Error::InvalidArgument {
            op: "generate_synthetic",
            detail: format!("length range ({}, {})", cfg.min_len, cfg.max_len),
        });
    }
    let table = MarkovTable::new(cfg, mix(seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs = (0..cfg.users)
        .map(|u| {
            let len = rng.gen_range(cfg.min_len..=cfg.max_len);
            let mut items = Vec::with_capacity(len);
            items.push(ItemId(rng.gen_range(0..cfg.vocab as u32)));
            while items.len() < len {
                let next = table.next_item(&items, &mut rng);
                items.push(next);
            }
            InteractionSequence {
                user: UserId(u as u32),
                timestamps: Some((0..len as i64).collect()),
                items,
            }
        })
        .collect();
    Ok(seqs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[u32]) -> Vec<ItemId> {
        v.iter().map(|&i| ItemId(i)).collect()
    }

    fn seq(v: &[u32]) -> InteractionSequence {
        InteractionSequence::new(UserId(0), ids(v))
    }

    #[test]
    fn split_five() {
        let s = leave_one_out_split(&[seq(&[0, 1, 2, 3, 4])], 50).unwrap();
        assert_eq!(s.users[0].train, ids(&[0, 1, 2]));
        assert_eq!(s.users[0].valid, ItemId(3));
        assert_eq!(s.users[0].test, ItemId(4));
    }

    #[test]
    fn split_truncates_training_prefix() {
        let items: Vec<u32> = (0..60).collect();
        let s = leave_one_out_split(&[seq(&items)], 50).unwrap();
        assert_eq!(s.users[0].train, ids(&(8..58).collect::<Vec<_>>()));
    }

    #[test]
    fn split_minimal_and_too_short() {
        let s = leave_one_out_split(&[seq(&[7, 8, 9])], 50).unwrap();
        assert_eq!(s.users[0].train, ids(&[7]));
        let mut short = seq(&[1, 2]);
        short.user = UserId(42);
        assert_eq!(
            leave_one_out_split(&[short], 50).unwrap_err(),
            Error::SequenceTooShort(UserId(42))
        );
    }

    #[test]
    fn noise_zero_ratio_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = seq(&[1, 2, 3, 4]);
        assert_eq!(inject_noise(&s, 0.0, 50, &mut rng).unwrap(), s);
    }

    #[test]
    fn noise_replaces_exact_count_with_fresh_items() {
        let s = seq(&(0..10).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy = inject_noise(&s, 0.2, 100, &mut rng).unwrap();
        let changed: Vec<_> = (0..10).filter(|&i| noisy.items[i] != s.items[i]).collect();
        assert_eq!(changed.len(), 2);
        for i in changed {
            assert!(!s.items.contains(&noisy.items[i]));
        }
        let again = inject_noise(&s, 0.2, 100, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(noisy, again);
    }

    #[test]
    fn noise_rounds_half_up() {
        assert_eq!(noise_count(0.25, 10), 3);
        assert_eq!(noise_count(0.1, 4), 0);
        assert_eq!(noise_count(0.5, 5), 3);
    }

    #[test]
    fn noise_without_candidates_fails() {
        let s = seq(&(0..20).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            inject_noise(&s, 0.5, 20, &mut rng),
            Err(Error::Exhausted { .. })
        ));
    }

    #[test]
    fn pad_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = seq(&[0, 1]);
        assert_eq!(pad_sequence(&s, 0, 26, &mut rng).unwrap().len(), 2);
        let p = pad_sequence(&s, 3, 26, &mut rng).unwrap();
        assert_eq!(p.len(), 5);
        assert!(p.pad_items.iter().all(|it| !s.items.contains(it)));
        let mut all = pad_sequence(&s, 24, 26, &mut rng).unwrap().pad_items;
        all.sort();
        assert_eq!(all, ids(&(2..26).collect::<Vec<_>>()));
        assert!(matches!(
            pad_sequence(&s, 25, 26, &mut rng),
            Err(Error::Exhausted { .. })
        ));
    }

    #[test]
    fn synthetic_shape_and_preconditions() {
        let cfg = SyntheticConfig {
            users: 100,
            vocab: 200,
            min_len: 10,
            max_len: 30,
            ..Default::default()
        };
        let seqs = generate_synthetic(&cfg, 11).unwrap();
        assert_eq!(seqs.len(), 100);
        assert!(seqs.iter().all(|s| (10..=30).contains(&s.len())));
        assert!(seqs.iter().flat_map(|s| &s.items).all(|i| i.index() < 200));
        assert_eq!(seqs, generate_synthetic(&cfg, 11).unwrap());

        let small = SyntheticConfig { vocab: 10, ..cfg.clone() };
        assert!(generate_synthetic(&small, 1).is_err());
        let short = SyntheticConfig { min_len: 4, ..cfg };
        assert!(generate_synthetic(&short, 1).is_err());
    }

    #[test]
    fn planted_successors_carry_their_mass() {
        // Monte-Carlo estimate over the table's own transition rule.
        let cfg = SyntheticConfig {
            vocab: 200,
            ..Default::default()
        };
        let table = MarkovTable::new(&cfg, 99).unwrap();
        let ctx = [ItemId(17)];
        let succ = table.successors(&ctx);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = vec![0usize; cfg.vocab];
        let draws = 100_000;
        for _ in 0..draws {
            counts[table.next_item(&ctx, &mut rng).index()] += 1;
        }
        for s in succ {
            let freq = counts[s.index()] as f64 / draws as f64;
            assert!((freq - 0.8 / 3.0).abs() < 0.02, "{freq}");
        }
    }

    #[test]
    fn second_order_context_is_deterministic() {
        let cfg = SyntheticConfig {
            order: 2,
            ..Default::default()
        };
        let table = MarkovTable::new(&cfg, 5).unwrap();
        let a = table.successors(&[ItemId(3), ItemId(4)]);
        assert_eq!(a, table.successors(&[ItemId(9), ItemId(3), ItemId(4)]));
        assert_eq!(a.len(), 3);
        assert!(generate_synthetic(&cfg, 2).is_ok());
    }

    proptest! {
        #[test]
        fn split_roundtrip(len in 3usize..80, max_len in 1usize..60) {
            let items: Vec<u32> = (0..len as u32).collect();
            let s = leave_one_out_split(&[seq(&items)], max_len).unwrap();
            let u = &s.users[0];
            let mut joined = u.train.clone();
            joined.push(u.valid);
            joined.push(u.test);
            let keep = (len - 2).min(max_len) + 2;
            prop_assert_eq!(joined, ids(&items[len - keep..]));
        }

        #[test]
        fn noise_touches_exact_count(len in 1usize..40, ratio in 0.0f64..=1.0, seed: u64) {
            let s = seq(&(0..len as u32).collect::<Vec<_>>());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy = inject_noise(&s, ratio, 200, &mut rng).unwrap();
            let changed = (0..len).filter(|&i| noisy.items[i] != s.items[i]).count();
            prop_assert_eq!(changed, noise_count(ratio, len));
        }
    }
}
