//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when any
//! criterion fails.

use std::time::{Duration, Instant};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqmorph::config::RunConfig;
use seqmorph::gradcheck;
use seqmorph::report::{write_csv, SweepRow};
use seqmorph::run::{self, Fitted};
use seqmorph_core::augment::{
    apply, matrix_for_crop, matrix_for_insert, matrix_for_mask, matrix_for_reorder, matrix_for_substitute,
    TransformMatrix,
};
use seqmorph_core::autodiff::Tape;
use seqmorph_core::data::{InteractionSequence, ItemId, PaddedSequence, Slot, UserId};
use seqmorph_core::generator::{transition_matrices, GeneratorParams};
use seqmorph_core::objectives::{diversity_loss, infonce, semantic_loss, seq_ndcg, Agreement, ObjectiveConfig, RelevanceProfile};
use seqmorph_core::sinkhorn::{project, SinkhornConfig};
use seqmorph_core::training::Method;
use seqmorph_core::Matrix;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn within(limit: Duration, start: Instant, detail: String) -> Outcome {
    let took = start.elapsed();
    if took > limit {
        Err(format!("{detail}; took {took:.1?}, limit {limit:?}"))
    } else {
        Ok(format!("{detail}; {took:.1?}"))
    }
}

/// Entries in {0, 1} and every row and column sum in {0, 1}, checked from
/// the dense matrix alone.
fn is_hard_semi_ds(m: &Matrix) -> bool {
    let n = m.rows();
    let entries_ok = m.as_slice().iter().all(|&v| v == 0.0 || v == 1.0);
    let rows_ok = (0..n).all(|i| {
        let s: f64 = m.row(i).iter().sum();
        s == 0.0 || s == 1.0
    });
    let cols_ok = (0..n).all(|j| {
        let s: f64 = (0..n).map(|i| m[(i, j)]).sum();
        s == 0.0 || s == 1.0
    });
    entries_ok && rows_ok && cols_ok
}

fn c1_hardness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let deltas = [0.0, 1e-3, 1e-2];
    for trial in 0..10_000 {
        let n = r.gen_range(2..=50);
        let delta = deltas[trial % 3];
        let a = Matrix::from_fn(n, n, |_, _| if r.gen_bool(0.1) { 0.0 } else { r.gen_range(0.0..1.0) });
        let mut t = Tape::new();
        let v = t.leaf(a);
        let cfg = SinkhornConfig { delta, iters: 20, hard: true };
        let p = project(&mut t, v, &cfg).map_err(|e| e.to_string())?;
        if !is_hard_semi_ds(t.value(p.out)) || !is_hard_semi_ds(&p.hard.to_dense()) {
            return Err(format!("trial {trial} (n={n}, delta={delta}) is not hard semi-doubly-stochastic"));
        }
    }
    within(Duration::from_secs(60), start, "10000 projections exact".into())
}

fn c2_convergence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(102);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = r.gen_range(2..=30);
        let a = Matrix::from_fn(n, n, |_, _| r.gen_range(0.01..1.0));
        let mut t = Tape::new();
        let v = t.leaf(a);
        let cfg = SinkhornConfig { delta: 0.0, iters: 50, hard: false };
        let p = project(&mut t, v, &cfg).map_err(|e| e.to_string())?;
        let s = t.value(p.soft);
        for x in s.row_sums().into_iter().chain(s.col_sums()) {
            worst = worst.max((x - 1.0).abs());
        }
    }
    if worst > 1e-3 {
        return Err(format!("worst line-sum deviation {worst:.3e}"));
    }
    within(Duration::from_secs(60), start, format!("worst deviation {worst:.2e}"))
}

fn padded(r: &mut ChaCha8Rng) -> PaddedSequence {
    let s_len = r.gen_range(1..=20);
    let k = r.gen_range(0..=5);
    let picks = index::sample(r, 500, s_len + k).into_vec();
    PaddedSequence {
        base: InteractionSequence::new(UserId(0), picks[..s_len].iter().map(|&i| ItemId(i as u32)).collect()),
        pad_items: picks[s_len..].iter().map(|&i| ItemId(i as u32)).collect(),
    }
}

fn sentinel_fill(mut v: Vec<Slot>, n: usize) -> Vec<Slot> {
    v.resize(n, None);
    v
}

fn c3_augmentation_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(103);
    let mut cases = 0;
    for op in ["crop", "mask", "reorder", "insert", "substitute"] {
        for case in 0..1000 {
            let s = padded(&mut r);
            let (n, l) = (s.len(), s.prefix_len());
            let orig: Vec<ItemId> = s.base.items.clone();
            let pads: Vec<ItemId> = s.pad_items.clone();
            let (m, direct): (seqmorph_core::Result<TransformMatrix>, Vec<Slot>) = match op {
                "crop" => {
                    let len = r.gen_range(1..=l);
                    let st = r.gen_range(0..=l - len);
                    let direct = orig[st..st + len].iter().map(|&i| Some(i)).collect();
                    (matrix_for_crop(n, l, st, len), direct)
                }
                "mask" => {
                    let c = r.gen_range(0..=l);
                    let pos = index::sample(&mut r, l, c).into_vec();
                    let direct = (0..l).filter(|p| !pos.contains(p)).map(|p| Some(orig[p])).collect();
                    (matrix_for_mask(n, l, &pos), direct)
                }
                "reorder" => {
                    let w = r.gen_range(1..=l);
                    let st = r.gen_range(0..=l - w);
                    let mut perm: Vec<usize> = (0..w).collect();
                    for i in (1..w).rev() {
                        perm.swap(i, r.gen_range(0..=i));
                    }
                    let mut direct: Vec<Slot> = orig.iter().map(|&i| Some(i)).collect();
                    for (t, &p) in perm.iter().enumerate() {
                        direct[st + p] = Some(orig[st + t]);
                    }
                    (matrix_for_reorder(n, l, st, &perm), direct)
                }
                "insert" => {
                    let c = r.gen_range(0..=pads.len());
                    let slots = index::sample(&mut r, n, c).into_vec();
                    let mut direct: Vec<Slot> = vec![None; n];
                    for (t, &slot) in slots.iter().enumerate() {
                        direct[slot] = Some(pads[t]);
                    }
                    let mut rest = orig.iter();
                    for d in direct.iter_mut().filter(|d| d.is_none()) {
                        *d = rest.next().copied();
                    }
                    (matrix_for_insert(n, l, &slots), direct)
                }
                _ => {
                    let c = r.gen_range(0..=pads.len().min(l));
                    let pos = index::sample(&mut r, l, c).into_vec();
                    let mut direct: Vec<Slot> = orig.iter().map(|&i| Some(i)).collect();
                    let mapping: Vec<(usize, usize)> = pos
                        .iter()
                        .enumerate()
                        .map(|(t, &p)| {
                            direct[p] = Some(pads[t]);
                            (p, l + t)
                        })
                        .collect();
                    (matrix_for_substitute(n, l, &mapping), direct)
                }
            };
            let m = m.map_err(|e| format!("{op} case {case}: {e}"))?;
            let direct = sentinel_fill(direct, n);
            let view = apply(&m, &s).map_err(|e| e.to_string())?;
            if view.items != direct {
                return Err(format!("{op} case {case}: matrix {:?} vs direct {:?}", view.items, direct));
            }
            cases += 1;
        }
    }
    within(Duration::from_secs(30), start, format!("{cases} cases identical"))
}

fn c4_gradients() -> Outcome {
    let start = Instant::now();
    let lines = gradcheck::run(20, false, &mut rng(104)).map_err(|e| e.to_string())?;
    let failed: Vec<String> = lines
        .iter()
        .filter(|l| !l.passed())
        .map(|l| format!("{} {:.2e}", l.name, l.worst))
        .collect();
    if !failed.is_empty() {
        return Err(format!("above 1e-4: {}", failed.join(", ")));
    }
    let worst = lines.iter().map(|l| l.worst).fold(0.0, f64::max);
    within(
        Duration::from_secs(300),
        start,
        format!("{} items x 20 instances, worst {worst:.2e}", lines.len()),
    )
}

/// DCG recomputed from scratch: read the placement back to front and
/// discount the item at reading rank `r` by `1 / log2(r + 1)`.
fn brute_dcg(targets: &[Option<usize>], s_len: usize) -> f64 {
    let n = targets.len();
    let mut at = vec![None; n];
    for (i, t) in targets.iter().enumerate() {
        if let Some(j) = t {
            at[*j] = Some(i);
        }
    }
    (1..=n)
        .filter_map(|rank| at[n - rank].filter(|&i| i < s_len).map(|i| (i + 1) as f64 / ((rank + 1) as f64).log2()))
        .sum()
}

/// DCG of the identity on the unpadded prefix of an `n`-row sequence.
fn brute_idcg(s_len: usize, n: usize) -> f64 {
    let identity: Vec<Option<usize>> = (0..n).map(|i| (i < s_len).then_some(i)).collect();
    brute_dcg(&identity, s_len)
}

fn node_ndcg(m: &Matrix, p: &RelevanceProfile) -> f64 {
    let mut t = Tape::new();
    let v = t.constant(m.clone());
    let r = seq_ndcg(&mut t, v, p).expect("ndcg");
    t.scalar(r)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn c5_ndcg_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut count = 0;
    for n in 1..=7 {
        let p = RelevanceProfile::new(n, n, 0.1).map_err(|e| e.to_string())?;
        for perm in permutations(n) {
            let targets: Vec<Option<usize>> = perm.into_iter().map(Some).collect();
            let m = TransformMatrix::from_targets(targets.clone()).map_err(|e| e.to_string())?;
            worst = worst.max((node_ndcg(&m.to_dense(), &p) - brute_dcg(&targets, n) / brute_idcg(n, n)).abs());
            count += 1;
        }
    }
    // soft semi-DS matrices: convex mixtures of partial permutations sharing
    // the same empty rows and columns
    let mut r = rng(105);
    for _ in 0..1000 {
        let s_len = r.gen_range(1..=8);
        let n = s_len + r.gen_range(0..=3);
        let p = RelevanceProfile::new(s_len, n, 0.1).map_err(|e| e.to_string())?;
        let live = r.gen_range(1..=n);
        let rows = index::sample(&mut r, n, live).into_vec();
        let cols = index::sample(&mut r, n, live).into_vec();
        let parts = r.gen_range(1..=4);
        let mut weights: Vec<f64> = (0..parts).map(|_| r.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let mut dense = Matrix::zeros(n, n);
        let mut expect = 0.0;
        for w in &weights {
            let mut order = cols.clone();
            for i in (1..live).rev() {
                order.swap(i, r.gen_range(0..=i));
            }
            let mut targets = vec![None; n];
            for (&i, &j) in rows.iter().zip(&order) {
                targets[i] = Some(j);
                dense[(i, j)] += w;
            }
            expect += w * brute_dcg(&targets, s_len);
        }
        worst = worst.max((node_ndcg(&dense, &p) - expect / brute_idcg(s_len, n)).abs());
        count += 1;
    }
    if worst > 1e-12 {
        return Err(format!("oracle mismatch {worst:.3e}"));
    }
    let p3 = RelevanceProfile::new(3, 3, 0.1).map_err(|e| e.to_string())?;
    let padded = RelevanceProfile::new(3, 6, 0.1).map_err(|e| e.to_string())?;
    if node_ndcg(&Matrix::identity(3), &p3) != 1.0 || node_ndcg(&Matrix::identity(6), &padded) != 1.0 {
        return Err("identity NDCG is not exactly 1".into());
    }
    let rev = TransformMatrix::from_targets(vec![Some(2), Some(1), Some(0)]).map_err(|e| e.to_string())?;
    let rev_v = node_ndcg(&rev.to_dense(), &p3);
    let worst_case = RelevanceProfile::new(4, 4, 0.5).map_err(|e| e.to_string())?.ndcg_star;
    if (rev_v - 0.7900).abs() > 1e-4 || (worst_case - 0.1954).abs() > 1e-4 {
        return Err(format!("reversal {rev_v:.4}, worst case {worst_case:.4}"));
    }
    within(
        Duration::from_secs(60),
        start,
        format!("{count} matrices, max error {worst:.1e}; reversal {rev_v:.4}, NDCG* {worst_case:.4}"),
    )
}

fn c6_spot_values() -> Outcome {
    let cfg = ObjectiveConfig::default();
    let mut t = Tape::new();
    let a = t.constant(Matrix::identity(5));
    let div = diversity_loss(&mut t, a, a, &cfg).map_err(|e| e.to_string())?;
    let div = t.scalar(div);
    let anchors = t.constant(Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]));
    let info = infonce(&mut t, anchors, anchors, 1.0, Agreement::Maximize).map_err(|e| e.to_string())?;
    let info = t.scalar(info);
    let mut worst_uniform = 0.0f64;
    for b in 2..=8 {
        let same = t.constant(Matrix::filled(b, 3, 0.7));
        let u = infonce(&mut t, same, same, 0.37, Agreement::Maximize).map_err(|e| e.to_string())?;
        worst_uniform = worst_uniform.max((t.scalar(u) - (b as f64).ln()).abs());
    }
    if div != 20.0 {
        return Err(format!("diversity on identical matrices {div}"));
    }
    if (info - 0.3133).abs() > 1e-4 {
        return Err(format!("InfoNCE spot value {info:.6}"));
    }
    if worst_uniform > 1e-9 {
        return Err(format!("uniform InfoNCE off log B by {worst_uniform:.2e}"));
    }
    Ok(format!("div {div}, InfoNCE {info:.4}, uniform error {worst_uniform:.1e}"))
}

/// Gradient w.r.t. the Sinkhorn input of `loss(m_out)` versus the gradient of
/// `<g, S>` where `g = dloss/dm` evaluated at the hard matrix and `S` is the
/// soft matrix of the same projection run without rounding.
fn c7_straight_through() -> Outcome {
    let mut r = rng(107);
    let mut worst = 0.0f64;
    let losses = ["weighted", "square", "ndcg", "semantic", "diversity"];
    for trial in 0..500 {
        let n = r.gen_range(2..=12);
        let a = Matrix::from_fn(n, n, |_, _| r.gen_range(0.0..1.0));
        let w = Matrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let other = Matrix::from_fn(n, n, |_, _| r.gen_range(0.0..1.0));
        let s_len = r.gen_range(1..=n);
        let profile = RelevanceProfile::new(s_len, n, 0.5).map_err(|e| e.to_string())?;
        let delta = [0.0, 1e-3, 1e-2][trial % 3];
        let kind = losses[trial % losses.len()];
        let obj = ObjectiveConfig { epsilon: 2.0 * n as f64, ..Default::default() };
        let loss = |t: &mut Tape, m| -> seqmorph_core::Result<_> {
            match kind {
                "weighted" => {
                    let c = t.constant(w.clone());
                    let p = t.hadamard(m, c)?;
                    t.sum(p)
                }
                "square" => {
                    let c = t.constant(w.clone());
                    let p = t.hadamard(m, c)?;
                    t.l2_norm_sq(p)
                }
                "ndcg" => seq_ndcg(t, m, &profile),
                "semantic" => {
                    let c = t.constant(Matrix::zeros(n, n));
                    Ok(semantic_loss(t, m, c, &profile)?.loss)
                }
                _ => {
                    let c = t.constant(other.clone());
                    diversity_loss(t, m, c, &obj)
                }
            }
        };

        let mut t1 = Tape::new();
        let x1 = t1.leaf(a.clone());
        let hard_cfg = SinkhornConfig { delta, iters: 20, hard: true };
        let p1 = project(&mut t1, x1, &hard_cfg).map_err(|e| e.to_string())?;
        let l1 = loss(&mut t1, p1.out).map_err(|e| e.to_string())?;
        t1.backward(l1).map_err(|e| e.to_string())?;
        let g_st = t1.grad(x1).cloned().unwrap_or_else(|| Matrix::zeros(n, n));

        let mut t0 = Tape::new();
        let h = t0.leaf(p1.hard.to_dense());
        let l0 = loss(&mut t0, h).map_err(|e| e.to_string())?;
        t0.backward(l0).map_err(|e| e.to_string())?;
        let upstream = t0.grad(h).cloned().unwrap_or_else(|| Matrix::zeros(n, n));

        let mut t2 = Tape::new();
        let x2 = t2.leaf(a);
        let soft_cfg = SinkhornConfig { hard: false, ..hard_cfg };
        let p2 = project(&mut t2, x2, &soft_cfg).map_err(|e| e.to_string())?;
        let u = t2.constant(upstream);
        let prod = t2.hadamard(p2.out, u).map_err(|e| e.to_string())?;
        let l2 = t2.sum(prod).map_err(|e| e.to_string())?;
        t2.backward(l2).map_err(|e| e.to_string())?;
        let g_soft = t2.grad(x2).cloned().unwrap_or_else(|| Matrix::zeros(n, n));
        worst = worst.max(g_st.max_abs_diff(&g_soft));
    }
    if worst > 1e-12 {
        return Err(format!("max entrywise difference {worst:.3e}"));
    }
    Ok(format!("500 instances over {} losses, max difference {worst:.1e}", losses.len()))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

struct Desk {
    rows: Vec<SweepRow>,
    /// Final-epoch hinge counts of the clean adaptive runs.
    clean_hinges: (usize, usize),
    took: Duration,
}

fn desk_config() -> RunConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.toml");
    RunConfig::load(Some(std::path::Path::new(path)), &[]).expect("desk config")
}

fn run_desk() -> Result<Desk, String> {
    let start = Instant::now();
    let cfg = desk_config();
    let data = run::load_dataset(&cfg).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let mut clean_hinges = (0, 0);
    for method in [Method::Backbone, Method::Adaptive] {
        for &ratio in &[0.0, 0.2, 0.4] {
            for seed in 1..=5u64 {
                let mut cell = cfg.clone();
                cell.seed = seed;
                cell.method = method.name().into();
                let f: Fitted = run::fit(&cell, &data, ratio).map_err(|e| format!("{e:#}"))?;
                if method == Method::Adaptive && ratio == 0.0 {
                    clean_hinges.0 += f.last_hinges.0;
                    clean_hinges.1 += f.last_hinges.1;
                }
                eprintln!("  desk {} ratio {ratio} seed {seed}: test HR@10 {:.4}", method.name(), f.test.hr10);
                rows.push(SweepRow {
                    method: method.name().into(),
                    ratio,
                    seed,
                    hr10: f.test.hr10,
                    hr20: f.test.hr20,
                    ndcg10: f.test.ndcg10,
                    ndcg20: f.test.ndcg20,
                });
            }
        }
    }
    let out = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("desk_sweep.csv");
    write_csv(&out, &rows).map_err(|e| e.to_string())?;
    Ok(Desk {
        rows,
        clean_hinges,
        took: start.elapsed(),
    })
}

fn median_hr(d: &Desk, method: &str, ratio: f64) -> f64 {
    median(d.rows.iter().filter(|r| r.method == method && r.ratio == ratio).map(|r| r.hr10).collect())
}

fn c8_robustness(d: &Result<Desk, String>) -> Outcome {
    let d = d.as_ref().map_err(Clone::clone)?;
    let m = |method, ratio| median_hr(d, method, ratio);
    let (b0, b2, b4) = (m("backbone", 0.0), m("backbone", 0.2), m("backbone", 0.4));
    let (a0, a2, a4) = (m("adaptive", 0.0), m("adaptive", 0.2), m("adaptive", 0.4));
    let drop = |x0: f64, x4: f64| (x0 - x4) / x0;
    let detail = format!(
        "median HR@10 backbone {b0:.4}/{b2:.4}/{b4:.4}, adaptive {a0:.4}/{a2:.4}/{a4:.4} at 0/0.2/0.4; \
         drop backbone {:.3}, adaptive {:.3}; {:.0?} (target 30 min)",
        drop(b0, b4),
        drop(a0, a4),
        d.took
    );
    let a_ok = a2 >= b2;
    let b_ok = drop(a0, a4) <= drop(b0, b4);
    match (a_ok, b_ok) {
        (true, true) => Ok(detail),
        (false, _) => Err(format!("(a) fails: {detail}")),
        (true, false) => Err(format!("(b) fails: {detail}")),
    }
}

fn c9_hinges(d: &Result<Desk, String>) -> Outcome {
    let d = d.as_ref().map_err(Clone::clone)?;
    let (zero, total) = d.clean_hinges;
    let frac = zero as f64 / total.max(1) as f64;
    let detail = format!("{zero}/{total} hinge terms zero in the final epoch ({:.1}%)", 100.0 * frac);
    if total > 0 && frac >= 0.9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Median wall time of generator + Sinkhorn forward and backward over a
/// batch of `b` sequences of length `l`.
fn generator_time(l: usize, b: usize, d: usize, reps: usize) -> Duration {
    let mut r = rng(110);
    let params = GeneratorParams::init(d, 16, &mut r);
    let cfg = SinkhornConfig { delta: 1e-4, iters: 20, hard: true };
    let profile = RelevanceProfile::new(l, l, 0.1).expect("profile");
    let obj = ObjectiveConfig::default();
    let embs: Vec<Matrix> = (0..b).map(|_| Matrix::from_fn(l, d, |_, _| r.gen_range(-0.5..0.5))).collect();
    let mut times: Vec<Duration> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            let mut t = Tape::new();
            let vars = params.register(&mut t);
            let mut terms = Vec::new();
            for e in &embs {
                let e = t.constant(e.clone());
                let [a1, a2] = transition_matrices(&mut t, e, &vars).expect("attention");
                let m1 = project(&mut t, a1, &cfg).expect("project").out;
                let m2 = project(&mut t, a2, &cfg).expect("project").out;
                let div = diversity_loss(&mut t, m1, m2, &obj).expect("div");
                let sem = semantic_loss(&mut t, m1, m2, &profile).expect("sem").loss;
                terms.push(t.add(div, sem).expect("add"));
            }
            let mut total = terms[0];
            for &x in &terms[1..] {
                total = t.add(total, x).expect("add");
            }
            t.backward(total).expect("backward");
            start.elapsed()
        })
        .collect();
    times.sort();
    times[reps / 2]
}

fn c10_complexity() -> Outcome {
    generator_time(24, 8, 32, 2);
    let short = generator_time(24, 64, 32, 7);
    let long = generator_time(48, 64, 32, 7);
    let ratio = long.as_secs_f64() / short.as_secs_f64();
    let detail = format!("L=24 {short:.1?}, L=48 {long:.1?}, ratio {ratio:.2}");
    if (3.0..=6.0).contains(&ratio) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = desk_config();
    cfg.epochs = 3;
    cfg.data.users = 120;
    cfg.noise_ratio = 0.2;
    let mut outs = Vec::new();
    for run_id in 0..2 {
        let out = dir.path().join(format!("run{run_id}"));
        run::train(&cfg, &out).map_err(|e| format!("{e:#}"))?;
        outs.push(out);
    }
    let mut checked = Vec::new();
    for file in ["losses.csv", "metrics.csv", "best.ckpt"] {
        let a = std::fs::read(outs[0].join(file)).map_err(|e| e.to_string())?;
        let b = std::fs::read(outs[1].join(file)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{file} differs between runs"));
        }
        checked.push(format!("{file} ({} bytes)", a.len()));
    }
    Ok(format!("identical: {}", checked.join(", ")))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("PASS [{id:>2}] {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name}: {d}");
            }
        }
    };
    report(1, "hardness invariant", c1_hardness());
    report(2, "sinkhorn convergence", c2_convergence());
    report(3, "augmentation oracle equivalence", c3_augmentation_oracle());
    report(4, "gradient checks", c4_gradients());
    report(5, "sequence-aware NDCG oracle", c5_ndcg_oracle());
    report(6, "loss spot values", c6_spot_values());
    report(7, "straight-through contract", c7_straight_through());
    let desk = run_desk();
    report(8, "desk-scale robustness trend", c8_robustness(&desk));
    report(9, "semantic hinge saturation", c9_hinges(&desk));
    report(10, "generator complexity", c10_complexity());
    report(11, "determinism", c11_determinism());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
