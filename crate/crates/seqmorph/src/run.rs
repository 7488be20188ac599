//! Training, evaluation, the noise sweep and the matrix inspection commands.
//!
//! Randomness is split into ChaCha8 streams of the run seed: stream 0
//! initialises parameters, stream 1 drives training (shuffling, padding,
//! static augmentations), stream 2 injects noise and stream 3 pads sequences
//! for inspection commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqmorph_core::augment::{classify, AugmentationProfile, TransformMatrix};
use seqmorph_core::data::{
    generate_synthetic, inject_noise, leave_one_out_split, InteractionSequence, ItemId, Slot, UserSplit,
};
use seqmorph_core::objectives::RelevanceProfile;
use seqmorph_core::recommender::{evaluate, RankMetrics};
use seqmorph_core::training::{check_vocab, GeneratorStats, Method, Model, RecommenderStats};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dump::{average, coordinates, pgm, MatrixDump};
use crate::report::{write_csv, EpochReport, LossRow, MetricRow, SweepRow, TimingRow};
use crate::tsv::{self, Dataset};

pub const STREAM_INIT: u64 = 0;
pub const STREAM_TRAIN: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_INSPECT: u64 = 3;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match cfg.data.source.as_str() {
        "tsv" => tsv::read(Path::new(&cfg.data.path), cfg.data.min_interactions)
            .with_context(|| format!("loading {}", cfg.data.path)),
        _ => {
            let seqs = generate_synthetic(&cfg.data.synthetic(), cfg.data.seed).context("generating synthetic data")?;
            Ok(Dataset::from_dense(seqs, cfg.data.vocab))
        }
    }
}

/// Leave-one-out split with `ratio` of every training prefix replaced by noise.
pub fn prepare_users(cfg: &RunConfig, data: &Dataset, ratio: f64) -> Result<Vec<UserSplit>> {
    let mut users = leave_one_out_split(&data.sequences, cfg.model.max_len)?.users;
    let mut rng = stream(cfg.seed, STREAM_NOISE);
    for u in &mut users {
        let seq = InteractionSequence::new(u.user, std::mem::take(&mut u.train));
        u.train = inject_noise(&seq, ratio, data.vocab(), &mut rng)?.items;
    }
    check_vocab(&users, data.vocab(), cfg.model.k)?;
    Ok(users)
}

fn valid_cases(users: &[UserSplit]) -> Vec<(&[ItemId], ItemId)> {
    users.iter().map(|u| (u.train.as_slice(), u.valid)).collect()
}

pub fn test_metrics(model: &Model, users: &[UserSplit], max_len: usize) -> Result<RankMetrics> {
    let inputs: Vec<Vec<ItemId>> = users.iter().map(|u| u.test_input(max_len)).collect();
    let cases: Vec<(&[ItemId], ItemId)> = inputs.iter().zip(users).map(|(i, u)| (i.as_slice(), u.test)).collect();
    Ok(evaluate(&model.backbone, &cases)?)
}

/// A finished run: the best-validation model and everything reported.
pub struct Fitted {
    pub model: Model,
    pub best_epoch: usize,
    pub test: RankMetrics,
    pub reports: Vec<EpochReport>,
    /// Hinge counts of the generator's last epoch.
    pub last_hinges: (usize, usize),
}

fn add_generator(row: &mut LossRow, g: &GeneratorStats, hinges: &mut (usize, usize)) {
    row.l_info_gen += g.l_info;
    row.l_div += g.l_div;
    row.l_ndcg += g.l_ndcg;
    hinges.0 += g.hinge_zero;
    hinges.1 += g.hinge_total;
}

fn add_recommender(row: &mut LossRow, r: &RecommenderStats) {
    row.l_rec += r.l_rec;
    row.l_ssl += r.l_ssl;
}

/// Trains on `ratio`-noised data. Epoch 0 is the untrained model; the
/// returned model is the one with the best validation HR@10 (earliest on
/// ties).
pub fn fit(cfg: &RunConfig, data: &Dataset, ratio: f64) -> Result<Fitted> {
    let method = cfg.method()?;
    let users = prepare_users(cfg, data, ratio)?;
    let mut model = Model::init(cfg.model_config(), data.vocab(), &mut stream(cfg.seed, STREAM_INIT))?;
    let mut rng = stream(cfg.seed, STREAM_TRAIN);
    let valid = valid_cases(&users);

    let t0 = Instant::now();
    let v0 = evaluate(&model.backbone, &valid)?;
    let mut reports = vec![EpochReport {
        losses: LossRow::default(),
        valid: v0,
        timing: TimingRow {
            epoch: 0,
            generator_s: 0.0,
            recommender_s: 0.0,
            eval_s: t0.elapsed().as_secs_f64(),
        },
    }];
    let mut best = (v0.hr10, 0, model.backbone.clone(), model.generator.clone());
    let mut last_hinges = (0, 0);
    let mut order: Vec<usize> = (0..users.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut row = LossRow {
            epoch,
            ..Default::default()
        };
        let mut hinges = (0, 0);
        let (mut gen_s, mut rec_s) = (0.0, 0.0);
        let batches = order.chunks(cfg.batch_size).count();
        let warm = epoch <= cfg.warmup_epochs;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let where_ = |phase: &str| format!("phase {phase}, epoch {epoch}, batch {b}");
            let batch = chunk
                .iter()
                .map(|&i| model.pad(&users[i], &mut rng))
                .collect::<seqmorph_core::Result<Vec<_>>>()
                .with_context(|| where_("padding"))?;
            if method == Method::Adaptive {
                let t = Instant::now();
                let g = model.generator_step(&batch).with_context(|| where_("G"))?;
                gen_s += t.elapsed().as_secs_f64();
                add_generator(&mut row, &g, &mut hinges);
            }
            if !(warm && method == Method::Adaptive) {
                let t = Instant::now();
                let r = model
                    .recommender_step(&batch, method, &mut rng)
                    .with_context(|| where_("R"))?;
                rec_s += t.elapsed().as_secs_f64();
                add_recommender(&mut row, &r);
            }
        }
        let nb = batches as f64;
        for v in [&mut row.l_info_gen, &mut row.l_div, &mut row.l_ndcg, &mut row.l_rec, &mut row.l_ssl] {
            *v /= nb;
        }
        row.hinge_zero_frac = if hinges.1 > 0 { hinges.0 as f64 / hinges.1 as f64 } else { 0.0 };
        last_hinges = hinges;

        let t = Instant::now();
        let v = evaluate(&model.backbone, &valid)?;
        if v.hr10 > best.0 {
            best = (v.hr10, epoch, model.backbone.clone(), model.generator.clone());
        }
        reports.push(EpochReport {
            losses: row,
            valid: v,
            timing: TimingRow {
                epoch,
                generator_s: gen_s,
                recommender_s: rec_s,
                eval_s: t.elapsed().as_secs_f64(),
            },
        });
    }

    let (_, best_epoch, backbone, generator) = best;
    let model = Model::from_parts(cfg.model_config(), backbone, generator)?;
    let test = test_metrics(&model, &users, cfg.model.max_len)?;
    Ok(Fitted {
        model,
        best_epoch,
        test,
        reports,
        last_hinges,
    })
}

pub fn checkpoint_of(cfg: &RunConfig, fitted: &Fitted, ratio: f64) -> Checkpoint {
    let mut cfg = cfg.clone();
    cfg.noise_ratio = ratio;
    let mut ck = Checkpoint::new(&fitted.model.backbone, &fitted.model.generator);
    ck.meta.insert("config".into(), cfg.to_toml().into());
    ck.meta.insert("epoch".into(), fitted.best_epoch.into());
    ck
}

/// Writes `config.toml`, `losses.csv`, `metrics.csv`, `timing.csv` and
/// `best.ckpt` under `out`.
pub fn write_run(cfg: &RunConfig, fitted: &Fitted, ratio: f64, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ck = checkpoint_of(cfg, fitted, ratio);
    fs::write(out.join("config.toml"), ck.meta["config"].as_str().expect("config string"))?;
    let losses: Vec<LossRow> = fitted.reports.iter().skip(1).map(|r| r.losses.clone()).collect();
    write_csv(&out.join("losses.csv"), &losses)?;
    let mut metrics: Vec<MetricRow> = fitted
        .reports
        .iter()
        .enumerate()
        .map(|(e, r)| MetricRow::new("valid", e, &r.valid))
        .collect();
    metrics.push(MetricRow::new("test", fitted.best_epoch, &fitted.test));
    write_csv(&out.join("metrics.csv"), &metrics)?;
    let timing: Vec<TimingRow> = fitted.reports.iter().map(|r| r.timing.clone()).collect();
    write_csv(&out.join("timing.csv"), &timing)?;
    ck.save(&out.join("best.ckpt"))?;
    Ok(())
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<Fitted> {
    let data = load_dataset(cfg)?;
    let fitted = fit(cfg, &data, cfg.noise_ratio)?;
    write_run(cfg, &fitted, cfg.noise_ratio, out)?;
    Ok(fitted)
}

/// A checkpoint with the config it was trained under.
pub struct Loaded {
    pub cfg: RunConfig,
    pub ratio: f64,
    pub model: Model,
    pub data: Dataset,
    pub users: Vec<UserSplit>,
}

pub fn load_checkpoint(path: &Path) -> Result<Loaded> {
    let ck = Checkpoint::load(path)?;
    let text = ck
        .meta
        .get("config")
        .and_then(|v| v.as_str())
        .context("checkpoint has no embedded config")?;
    let cfg = RunConfig::from_toml(text)?;
    let ratio = cfg.noise_ratio;
    let model = Model::from_parts(cfg.model_config(), ck.backbone()?, ck.generator()?)?;
    let data = load_dataset(&cfg)?;
    if data.vocab() != model.vocab() {
        bail!("checkpoint vocabulary {} does not match data ({})", model.vocab(), data.vocab());
    }
    let users = prepare_users(&cfg, &data, ratio)?;
    Ok(Loaded {
        cfg,
        ratio,
        model,
        data,
        users,
    })
}

pub fn eval(path: &Path) -> Result<(RankMetrics, RankMetrics)> {
    let l = load_checkpoint(path)?;
    let valid = evaluate(&l.model.backbone, &valid_cases(&l.users))?;
    let test = test_metrics(&l.model, &l.users, l.cfg.model.max_len)?;
    Ok((valid, test))
}

/// Fresh training for every method x ratio x seed; `sweep.csv` is rewritten
/// after each cell.
pub fn sweep_noise(cfg: &RunConfig, out: &Path, mut progress: impl FnMut(&SweepRow)) -> Result<Vec<SweepRow>> {
    fs::create_dir_all(out)?;
    let data = load_dataset(cfg)?;
    let mut rows = Vec::new();
    for method in cfg.sweep_methods()? {
        for &ratio in &cfg.noise_ratios {
            for &seed in &cfg.sweep_seeds {
                let mut cell = cfg.clone();
                cell.seed = seed;
                cell.method = method.name().into();
                let f = fit(&cell, &data, ratio)
                    .with_context(|| format!("sweep cell {} ratio {ratio} seed {seed}", method.name()))?;
                let row = SweepRow {
                    method: method.name().into(),
                    ratio,
                    seed,
                    hr10: f.test.hr10,
                    hr20: f.test.hr20,
                    ndcg10: f.test.ndcg10,
                    ndcg20: f.test.ndcg20,
                };
                progress(&row);
                rows.push(row);
                write_csv(&out.join("sweep.csv"), &rows)?;
            }
        }
    }
    Ok(rows)
}

/// Hard matrices of view `view` (0 or 1) for every user whose training prefix
/// has exactly `len` items.
pub fn cohort_matrices(l: &Loaded, len: usize, view: usize) -> Result<Vec<TransformMatrix>> {
    if view > 1 {
        bail!("view must be 0 or 1, got {view}");
    }
    let mut rng = stream(l.cfg.seed, STREAM_INSPECT);
    let mut out = Vec::new();
    for u in l.users.iter().filter(|u| u.train.len() == len) {
        let s = l.model.pad(u, &mut rng)?;
        let [a, b] = l.model.adaptive_views(&s)?;
        out.push(if view == 0 { a.matrix } else { b.matrix });
    }
    if out.is_empty() {
        bail!("empty cohort: no user has a training prefix of length {len}");
    }
    Ok(out)
}

pub fn dump_matrices(path: &Path, len: usize, view: usize, out: &Path) -> Result<MatrixDump> {
    let l = load_checkpoint(path)?;
    let mats = cohort_matrices(&l, len, view)?;
    let dump = average(&mats, len)?;
    fs::create_dir_all(out)?;
    fs::write(out.join(format!("matrix_len{len}_view{}.pgm", view + 1)), pgm(&dump.mean))?;
    fs::write(out.join(format!("matrix_len{len}_view{}.txt", view + 1)), coordinates(&dump))?;
    Ok(dump)
}

pub struct CaseView {
    pub items: Vec<Slot>,
    pub ndcg: f64,
    pub profile: AugmentationProfile,
}

pub struct CaseStudy {
    pub user: String,
    pub padded: Vec<ItemId>,
    pub s_len: usize,
    pub ndcg_star: f64,
    pub views: [CaseView; 2],
}

pub fn case_study(path: &Path, user: &str) -> Result<CaseStudy> {
    let l = load_checkpoint(path)?;
    let idx = l.data.user_index(user).with_context(|| format!("unknown user {user:?}"))?;
    let u = &l.users[idx];
    let s = l.model.pad(u, &mut stream(l.cfg.seed, STREAM_INSPECT))?;
    let profile = RelevanceProfile::new(s.prefix_len(), s.len(), l.cfg.objective.gamma)?;
    let views = l.model.adaptive_views(&s)?.map(|v| CaseView {
        ndcg: profile.ndcg(&v.matrix),
        profile: classify(&v.matrix, s.prefix_len()),
        items: v.items,
    });
    Ok(CaseStudy {
        user: user.into(),
        padded: s.items().collect(),
        s_len: s.prefix_len(),
        ndcg_star: profile.ndcg_star,
        views,
    })
}

impl CaseStudy {
    pub fn render(&self, data: Option<&Dataset>) -> String {
        let name = |i: ItemId| data.map_or_else(|| i.to_string(), |d| d.item_ids[i.index()].clone());
        let slot = |s: &Slot| s.map_or_else(|| "_".to_string(), name);
        let mut out = format!("user {}\n", self.user);
        let padded: Vec<String> = self.padded.iter().map(|&i| name(i)).collect();
        out += &format!("s* ({} original + {} pad): {}\n", self.s_len, self.padded.len() - self.s_len, padded.join(" "));
        out += &format!("NDCG* {:.4}\n", self.ndcg_star);
        for (z, v) in self.views.iter().enumerate() {
            let items: Vec<String> = v.items.iter().map(slot).collect();
            out += &format!(
                "view {}: {}\n  NDCG {:.4} masked {} reordered {} introduced {}\n",
                z + 1,
                items.join(" "),
                v.ndcg,
                v.profile.masked,
                v.profile.reordered,
                v.profile.introduced
            );
        }
        out
    }
}

pub fn default_out(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(&cfg.out)
}
