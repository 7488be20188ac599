//! One optimisation step of each player.
//!
//! The generator step builds both views of every user in the batch and
//! minimises `info + lambda_div * div + lambda_ndcg * ndcg` with the backbone
//! frozen. The recommender step regenerates views with the generator frozen
//! and minimises `rec + beta * ssl` over the backbone. Baselines swap the
//! generator for random static augmentations or drop the SSL term.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::augment::{
    apply, matrix_for_crop, matrix_for_insert, matrix_for_mask, matrix_for_reorder, matrix_for_substitute,
    AugmentedView, TransformMatrix,
};
use crate::autodiff::{Tape, Var};
use crate::data::{pad_sequence, InteractionSequence, ItemId, PaddedSequence, Slot, UserSplit};
use crate::error::{Error, Result};
use crate::generator::{generate_views, GeneratorParams};
use crate::matrix::Matrix;
use crate::objectives::{
    diversity_loss, infonce, joint_generator_loss, mean, semantic_loss, stack_rows, Agreement, GeneratorLossParts,
    ObjectiveConfig, RelevanceProfile,
};
use crate::optim::Momentum;
use crate::recommender::{encode_matrix_view, next_item_loss, ssl_loss, BackboneParams};
use crate::sinkhorn::SinkhornConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StaticAug {
    Crop,
    Mask,
    Reorder,
    Insert,
    Substitute,
}

impl StaticAug {
    pub const ALL: [StaticAug; 5] = [Self::Crop, Self::Mask, Self::Reorder, Self::Insert, Self::Substitute];

    pub fn name(self) -> &'static str {
        match self {
            Self::Crop => "crop",
            Self::Mask => "mask",
            Self::Reorder => "reorder",
            Self::Insert => "insert",
            Self::Substitute => "substitute",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Next-item loss only.
    Backbone,
    Static(StaticAug),
    Adaptive,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Self::Backbone,
        Self::Static(StaticAug::Crop),
        Self::Static(StaticAug::Mask),
        Self::Static(StaticAug::Reorder),
        Self::Static(StaticAug::Insert),
        Self::Static(StaticAug::Substitute),
        Self::Adaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Backbone => "backbone",
            Self::Static(s) => s.name(),
            Self::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Random static augmentation of `s` with budget `gamma`: crops keep
/// `max(1, floor((1 - gamma)|s|))` items; the other operations touch
/// `max(1, floor(gamma |s|))` positions (insert and substitute at most `k`).
pub fn static_matrix<R: Rng + ?Sized>(kind: StaticAug, s: &PaddedSequence, gamma: f64, rng: &mut R) -> Result<TransformMatrix> {
    let (n, s_len) = (s.len(), s.prefix_len());
    if s_len == 0 {
        return Err(Error::EmptyView);
    }
    let c = RelevanceProfile::budget(s_len, gamma);
    let pads = n - s_len;
    match kind {
        StaticAug::Crop => {
            let keep = (libm::floor((1.0 - gamma) * s_len as f64) as usize).max(1);
            let start = rng.gen_range(0..=s_len - keep);
            matrix_for_crop(n, s_len, start, keep)
        }
        StaticAug::Mask => {
            let positions = index::sample(rng, s_len, c).into_vec();
            matrix_for_mask(n, s_len, &positions)
        }
        StaticAug::Reorder => {
            let start = rng.gen_range(0..=s_len - c);
            let mut perm: Vec<usize> = (0..c).collect();
            for i in (1..c).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            matrix_for_reorder(n, s_len, start, &perm)
        }
        StaticAug::Insert => {
            let c = c.min(pads);
            let slots = index::sample(rng, s_len + c, c).into_vec();
            matrix_for_insert(n, s_len, &slots)
        }
        StaticAug::Substitute => {
            let c = c.min(pads);
            let positions = index::sample(rng, s_len, c).into_vec();
            let mapping: Vec<(usize, usize)> = positions.into_iter().enumerate().map(|(t, p)| (p, s_len + t)).collect();
            matrix_for_substitute(n, s_len, &mapping)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub d: usize,
    pub d_prime: usize,
    /// Pad items appended before augmentation.
    pub k: usize,
    pub max_len: usize,
    pub sinkhorn: SinkhornConfig,
    pub objective: ObjectiveConfig,
    pub beta: f64,
    pub lr_generator: f64,
    pub lr_recommender: f64,
    pub momentum: f64,
    pub clip: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: crate::recommender::DEFAULT_DIM,
            d_prime: crate::generator::DEFAULT_PROJECTION_DIM,
            k: 3,
            max_len: crate::data::DEFAULT_MAX_LEN,
            sinkhorn: SinkhornConfig::default(),
            objective: ObjectiveConfig::default(),
            beta: crate::recommender::DEFAULT_BETA,
            lr_generator: 1e-3,
            lr_recommender: 1e-3,
            momentum: 0.9,
            clip: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.sinkhorn.validate()?;
        self.objective.validate()?;
        let ok = self.d > 0
            && self.d_prime > 0
            && self.max_len >= 2
            && self.beta >= 0.0
            && self.lr_generator >= 0.0
            && self.lr_recommender >= 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.clip.map_or(true, |c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument {
                op: "model_config",
                detail: format!("{self:?}"),
            })
        }
    }
}

/// Loss values of one generator step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeneratorStats {
    /// Minimise-agreement InfoNCE; 0 when fewer than two users had two
    /// non-empty views.
    pub l_info: f64,
    pub l_div: f64,
    pub l_ndcg: f64,
    pub hinge_zero: usize,
    pub hinge_total: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RecommenderStats {
    pub l_rec: f64,
    /// 0 when the method has no SSL term or too few usable view pairs.
    pub l_ssl: f64,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub backbone: BackboneParams,
    pub generator: GeneratorParams,
    opt_backbone: Momentum,
    opt_generator: Momentum,
}

fn check_finite(phase: &'static str, name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical {
            op: phase,
            detail: format!("{name} = {v}"),
        })
    }
}

fn grads<'a>(tape: &'a Tape, vars: &[Var]) -> Vec<Option<&'a Matrix>> {
    vars.iter().map(|&v| tape.grad(v)).collect()
}

impl Model {
    pub fn init<R: Rng + ?Sized>(cfg: ModelConfig, vocab: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            backbone: BackboneParams::init(vocab, cfg.max_len + cfg.k, cfg.d, rng),
            generator: GeneratorParams::init(cfg.d, cfg.d_prime, rng),
            opt_backbone: Momentum::new(cfg.lr_recommender, cfg.momentum, cfg.clip),
            opt_generator: Momentum::new(cfg.lr_generator, cfg.momentum, cfg.clip),
            cfg,
        })
    }

    /// Rebuilds a model from stored parameters with fresh optimiser state.
    pub fn from_parts(cfg: ModelConfig, backbone: BackboneParams, generator: GeneratorParams) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            opt_backbone: Momentum::new(cfg.lr_recommender, cfg.momentum, cfg.clip),
            opt_generator: Momentum::new(cfg.lr_generator, cfg.momentum, cfg.clip),
            backbone,
            generator,
            cfg,
        })
    }

    pub fn vocab(&self) -> usize {
        self.backbone.vocab()
    }

    pub fn pad<R: Rng + ?Sized>(&self, user: &UserSplit, rng: &mut R) -> Result<PaddedSequence> {
        let seq = InteractionSequence::new(user.user, user.train.clone());
        pad_sequence(&seq, self.cfg.k, self.vocab(), rng)
    }

    /// Hard views of `s` under the current generator.
    pub fn adaptive_views(&self, s: &PaddedSequence) -> Result<[AugmentedView; 2]> {
        Ok(self.adaptive_views_batch(core::slice::from_ref(s))?.remove(0))
    }

    pub fn adaptive_views_batch(&self, batch: &[PaddedSequence]) -> Result<Vec<[AugmentedView; 2]>> {
        let mut tape = Tape::new();
        let vars = self.generator.register(&mut tape);
        let table = tape.constant(self.backbone.emb.clone());
        let mark = tape.len();
        batch
            .iter()
            .map(|s| {
                let emb = tape.gather_rows(table, s.items().map(|i| Some(i.index())).collect())?;
                let vp = generate_views(&mut tape, s, emb, &vars, &self.cfg.sinkhorn)?;
                tape.truncate(mark);
                Ok(vp.views)
            })
            .collect()
    }

    /// Two augmented views for `method`, or `None` for the plain backbone.
    pub fn views<R: Rng + ?Sized>(&self, s: &PaddedSequence, method: Method, rng: &mut R) -> Result<Option<[AugmentedView; 2]>> {
        match method {
            Method::Backbone => Ok(None),
            Method::Adaptive => self.adaptive_views(s).map(Some),
            Method::Static(kind) => {
                let gamma = self.cfg.objective.gamma;
                let a = static_matrix(kind, s, gamma, rng)?;
                let b = static_matrix(kind, s, gamma, rng)?;
                Ok(Some([apply(&a, s)?, apply(&b, s)?]))
            }
        }
    }

    /// Generator update on `batch` with the backbone frozen.
    pub fn generator_step(&mut self, batch: &[PaddedSequence]) -> Result<GeneratorStats> {
        let cfg = self.cfg;
        let mut tape = Tape::new();
        let gvars = self.generator.register(&mut tape);
        let bvars = self.backbone.register(&mut tape, false);
        let table = bvars.emb;
        let mut divs = Vec::with_capacity(batch.len());
        let mut sems = Vec::with_capacity(batch.len());
        let mut reps: [Vec<Var>; 2] = [Vec::new(), Vec::new()];
        let mut stats = GeneratorStats::default();
        for s in batch {
            let emb = tape.gather_rows(table, s.items().map(|i| Some(i.index())).collect())?;
            let vp = generate_views(&mut tape, s, emb, &gvars, &cfg.sinkhorn)?;
            let [m1, m2] = vp.outs();
            divs.push(diversity_loss(&mut tape, m1, m2, &cfg.objective)?);
            let profile = RelevanceProfile::new(s.prefix_len(), s.len(), cfg.objective.gamma)?;
            let sem = semantic_loss(&mut tape, m1, m2, &profile)?;
            for h in sem.hinges {
                stats.hinge_total += 1;
                if tape.scalar(h) == 0.0 {
                    stats.hinge_zero += 1;
                }
            }
            sems.push(sem.loss);
            let present = [vp.views[0].present(), vp.views[1].present()];
            if present.iter().all(|p| p.contains(&true)) {
                for z in 0..2 {
                    let r = encode_matrix_view(&mut tape, &bvars, vp.outs()[z], vp.emb, &present[z])?;
                    reps[z].push(r);
                }
            }
        }
        let div = mean(&mut tape, &divs)?;
        let ndcg = mean(&mut tape, &sems)?;
        let info = if reps[0].len() >= 2 {
            let a = stack_rows(&mut tape, &reps[0])?;
            let b = stack_rows(&mut tape, &reps[1])?;
            infonce(&mut tape, a, b, cfg.objective.tau, Agreement::Minimize)?
        } else {
            tape.constant(Matrix::zeros(1, 1))
        };
        stats.l_info = check_finite("generator", "l_info", tape.scalar(info))?;
        stats.l_div = check_finite("generator", "l_div", tape.scalar(div))?;
        stats.l_ndcg = check_finite("generator", "l_ndcg", tape.scalar(ndcg))?;
        let loss = joint_generator_loss(&mut tape, &GeneratorLossParts { info, div, ndcg }, &cfg.objective)?;
        tape.backward(loss)?;
        let vars = gvars.all();
        let g = grads(&tape, &vars);
        if let Some(bad) = g.iter().flatten().find(|m| !m.is_finite()) {
            return Err(Error::Numerical {
                op: "generator",
                detail: format!("non-finite gradient {:?}", bad.shape()),
            });
        }
        self.opt_generator.step(&mut self.generator.blocks_mut(), &g)?;
        Ok(stats)
    }

    /// Backbone update on `batch` with the generator frozen.
    pub fn recommender_step<R: Rng + ?Sized>(&mut self, batch: &[PaddedSequence], method: Method, rng: &mut R) -> Result<RecommenderStats> {
        let cfg = self.cfg;
        let mut pairs: Vec<[Vec<Slot>; 2]> = Vec::new();
        if cfg.beta > 0.0 {
            let views: Vec<[AugmentedView; 2]> = match method {
                Method::Backbone => Vec::new(),
                Method::Adaptive => self.adaptive_views_batch(batch)?,
                Method::Static(_) => batch
                    .iter()
                    .map(|s| Ok(self.views(s, method, rng)?.expect("static method has views")))
                    .collect::<Result<_>>()?,
            };
            for [a, b] in views {
                if a.items.iter().any(Option::is_some) && b.items.iter().any(Option::is_some) {
                    pairs.push([a.items, b.items]);
                }
            }
        }
        let mut tape = Tape::new();
        let bvars = self.backbone.register(&mut tape, true);
        let seqs: Vec<&[ItemId]> = batch.iter().map(|s| s.base.items.as_slice()).collect();
        let rec = next_item_loss(&mut tape, &bvars, &seqs)?;
        let mut stats = RecommenderStats {
            l_rec: check_finite("recommender", "l_rec", tape.scalar(rec))?,
            l_ssl: 0.0,
        };
        let mut loss = rec;
        if pairs.len() >= 2 {
            let refs: Vec<[&[Slot]; 2]> = pairs.iter().map(|[a, b]| [a.as_slice(), b.as_slice()]).collect();
            let ssl = ssl_loss(&mut tape, &bvars, &refs, cfg.objective.tau)?;
            stats.l_ssl = check_finite("recommender", "l_ssl", tape.scalar(ssl))?;
            let weighted = tape.scalar_mul(ssl, cfg.beta)?;
            loss = tape.add(rec, weighted)?;
        }
        tape.backward(loss)?;
        let vars = bvars.all();
        let g = grads(&tape, &vars);
        if let Some(bad) = g.iter().flatten().find(|m| !m.is_finite()) {
            return Err(Error::Numerical {
                op: "recommender",
                detail: format!("non-finite gradient {:?}", bad.shape()),
            });
        }
        self.opt_backbone.step(&mut self.backbone.blocks_mut(), &g)?;
        Ok(stats)
    }
}

/// Users whose sequence is too short for `k` fresh pads are rejected up
/// front rather than mid-epoch.
pub fn check_vocab(users: &[UserSplit], vocab: usize, k: usize) -> Result<()> {
    for u in users {
        let mut seen = vec![false; vocab];
        let mut distinct = 0;
        for it in &u.train {
            if it.index() >= vocab {
                return Err(Error::InvalidArgument {
                    op: "check_vocab",
                    detail: format!("item {} outside vocabulary {vocab}", it.0),
                });
            }
            if !seen[it.index()] {
                seen[it.index()] = true;
                distinct += 1;
            }
        }
        if vocab - distinct < k {
            return Err(Error::Exhausted {
                op: "check_vocab",
                needed: k,
                available: vocab - distinct,
            });
        }
    }
    Ok(())
}
