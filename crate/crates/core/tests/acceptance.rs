//! Acceptance suite. Runs every criterion in order and prints one
//! `PASS`/`FAIL` line per criterion; exits non-zero if any fail.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p bingear-core --test acceptance -- 1 2 3`.
//!
//! Criteria 7 and 8 need a MovieLens interaction log: set
//! `BINGEAR_MOVIELENS` or place it at `<workspace>/data/ml-100k.inter`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use bingear_core::distill::{DistillCache, RankingWeightParams};
use bingear_core::eval::{enrichment_analytic, enrichment_oracle, evaluate, evaluate_test, ndcg_at_k, recall_at_k};
use bingear_core::graph::build_normalized_adjacency;
use bingear_core::graph::prep::{read_interaction_log, split_per_user, subsample_top_degree};
use bingear_core::inference::bench::bench_scoring;
use bingear_core::inference::{dot_pm1_with, score_bitwise, BitwiseScorer, FusedScorer, Popcount, Scorer};
use bingear_core::propagation::{layer_weights, propagate};
use bingear_core::quantize::{build_binarized_tables, PackedBits};
use bingear_core::trainer::{
    init_base, sign_grad, train_student, train_teacher, Ablation, BatchKey, Objective, Quantizer, Terms, TrainStatus,
};
use bingear_core::{BinarizedModel, Dataset, LayerEmbeddings, Matrix, TeacherModel, TrainConfig};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, budget: Duration, detail: String) -> Outcome {
    let took = start.elapsed();
    ensure!(took <= budget, "{detail}; took {:.1} s, budget {:.0} s", took.as_secs_f64(), budget.as_secs_f64());
    Ok(format!("{detail}; {:.1} s", took.as_secs_f64()))
}

fn random_dataset(rng: &mut ChaCha8Rng, users: usize, items: usize, per_user: std::ops::RangeInclusive<usize>) -> Dataset {
    let all: Vec<u32> = (0..items as u32).collect();
    let train = (0..users)
        .map(|_| {
            let k = rng.random_range(per_user.clone()).min(items);
            let mut picked: Vec<u32> = all.choose_multiple(rng, k).copied().collect();
            picked.sort_unstable();
            picked
        })
        .collect();
    Dataset::new(users, items, train, vec![Vec::new(); users]).expect("valid random dataset")
}

fn layer_stack<T: bingear_core::Real>(ds: &Dataset, base: &Matrix<T>, num_layers: usize) -> LayerEmbeddings<T> {
    if num_layers == 0 {
        LayerEmbeddings::from_layers(vec![base.clone()], ds.num_users()).unwrap()
    } else {
        let adj = build_normalized_adjacency(ds).unwrap();
        propagate(base, &adj, num_layers).unwrap()
    }
}

// 1. bitwise score == inner product of fused reconstructions

fn bitwise_equivalence() -> Outcome {
    const PAIRS: usize = 100_000;
    const TOL: f64 = 1e-4;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let ds = random_dataset(&mut rng, 300, 700, 5..=40);
    let mut worst = 0.0f64;
    for dim in [64usize, 256] {
        let base = init_base(ds.num_nodes(), dim, 11);
        for num_layers in 0..=3 {
            let le = layer_stack(&ds, &base, num_layers);
            let table = build_binarized_tables(&le).unwrap();
            let w = layer_weights(num_layers);
            let fused = FusedScorer::from_table(&table, &w);
            for _ in 0..PAIRS {
                let u = rng.random_range(0..ds.num_users() as u32);
                let i = rng.random_range(0..ds.num_items() as u32);
                let bit = score_bitwise(u, i, &table, &w).unwrap();
                let fu = fused.vector(u as usize);
                let fi = fused.vector(ds.num_users() + i as usize);
                let float: f64 = fu.iter().zip(fi).map(|(a, b)| *a as f64 * *b as f64).sum();
                // relative to the summed segment magnitudes, so that totals
                // cancelling towards zero are not judged on their own size
                let scale: f64 = bit.segments.iter().map(|s| s.abs() as f64).sum::<f64>().max(f64::MIN_POSITIVE);
                let rel = (bit.total as f64 - float).abs() / scale;
                worst = worst.max(rel);
                ensure!(rel <= TOL, "d={dim} L={num_layers} ({u},{i}): bitwise {} vs float {float}", bit.total);
            }
        }
    }
    within(start, Duration::from_secs(30), format!("{} pairs, max relative error {worst:.2e}", 8 * PAIRS))
}

// 2. XNOR/popcount dot == integer dot

fn popcount_identity() -> Outcome {
    let start = Instant::now();
    let mut modes = vec![Popcount::Portable];
    if Popcount::detect() != Popcount::Portable {
        modes.push(Popcount::Hardware);
    }
    let int_dot = |a: &[i8], b: &[i8]| -> i64 { a.iter().zip(b).map(|(x, y)| (*x as i64) * (*y as i64)).sum() };
    let mut checked = 0u64;
    for dim in 1..=12usize {
        let vecs: Vec<Vec<i8>> = (0..1u32 << dim)
            .map(|m| (0..dim).map(|j| if m >> j & 1 == 1 { 1 } else { -1 }).collect())
            .collect();
        let packed: Vec<PackedBits> = vecs.iter().map(|v| PackedBits::from_pm1(v)).collect();
        for (a, pa) in vecs.iter().zip(&packed) {
            for (b, pb) in vecs.iter().zip(&packed) {
                let want = int_dot(a, b);
                for &mode in &modes {
                    ensure!(dot_pm1_with(pa.as_ref(), pb.as_ref(), mode).unwrap() == want, "d={dim} {a:?}.{b:?}");
                }
                checked += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for dim in [256usize, 100] {
        for _ in 0..10_000 {
            let a: Vec<i8> = (0..dim).map(|_| if rng.random() { 1 } else { -1 }).collect();
            let b: Vec<i8> = (0..dim).map(|_| if rng.random() { 1 } else { -1 }).collect();
            let (pa, pb) = (PackedBits::from_pm1(&a), PackedBits::from_pm1(&b));
            for &mode in &modes {
                ensure!(dot_pm1_with(pa.as_ref(), pb.as_ref(), mode).unwrap() == int_dot(&a, &b), "random d={dim}");
            }
            checked += 1;
        }
    }
    within(start, Duration::from_secs(10), format!("{checked} pairs exact, popcount modes {modes:?}"))
}

// 3. surrogate derivative == d/dphi erf(gamma * phi)

fn gradient_estimator() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for gamma in [0.5, 1.0, 2.0] {
        for k in -300..=300 {
            let phi = k as f64 / 100.0;
            let fd = (libm::erf(gamma * (phi + h)) - libm::erf(gamma * (phi - h))) / (2.0 * h);
            let err = (fd - sign_grad(phi, gamma)).abs();
            worst = worst.max(err);
            ensure!(err <= 1e-6, "gamma={gamma} phi={phi}: {} vs {fd}", sign_grad(phi, gamma));
        }
    }
    within(start, Duration::from_secs(1), format!("1803 points, max abs error {worst:.2e}"))
}

// 4. analytic gradient of the full smoothed student objective == finite differences

fn end_to_end_gradient() -> Outcome {
    const INSTANCES: usize = 24;
    const TOL: f64 = 1e-3;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    for inst in 0..INSTANCES {
        let users = rng.random_range(2..=4);
        let items = rng.random_range(3..=(10 - users).min(6));
        let ds = random_dataset(&mut rng, users, items, 1..=items - 1);
        let adj = build_normalized_adjacency(&ds).unwrap();
        let dim = rng.random_range(2..=8);
        let num_layers = inst % 3;
        let gamma = [0.5, 1.0, 2.0][inst % 3];
        let w = layer_weights(num_layers);
        let teacher_base = Matrix::from_fn(ds.num_nodes(), dim, |_, _| rng.random_range(-1.0f32..1.0));
        let teacher = layer_stack(&ds, &teacher_base, num_layers);
        let r = 2;
        let cache = DistillCache::build(&teacher, &ds, r, &w).unwrap();
        let objective = Objective {
            ds: &ds,
            adj: &adj,
            weights: &w,
            num_layers,
            quantizer: Quantizer::Erf { gamma },
            terms: Terms { bpr: true, id1: true, id2: true, synth: true },
            cache: Some(&cache),
            ranking: RankingWeightParams::default(),
            pseudo_positives: r,
            candidates: 3,
            mix_bound: 1.0,
            reg: 1e-3,
        };
        let pairs: Vec<(u32, u32)> = ds.train_edges().collect();
        let key = BatchKey { seed: inst as u64, epoch: 0, batch: 0 };
        let base = Matrix::from_fn(ds.num_nodes(), dim, |_, _| rng.random_range(-1.0f64..1.0));
        let mut grad = Matrix::zeros(ds.num_nodes(), dim);
        let terms = objective.evaluate(&base, &pairs, key, Some(&mut grad)).unwrap();
        ensure!(terms.bpr > 0.0 && terms.id1 > 0.0 && terms.id2 > 0.0, "instance {inst}: a loss term is inactive: {terms:?}");

        let h = 1e-6;
        let mut fd = vec![0.0; base.as_slice().len()];
        for (k, slot) in fd.iter_mut().enumerate() {
            let shifted = |delta: f64| {
                let mut b = base.clone();
                b.as_mut_slice()[k] += delta;
                objective.evaluate(&b, &pairs, key, None).unwrap().total
            };
            *slot = (shifted(h) - shifted(-h)) / (2.0 * h);
        }
        let diff: f64 = grad.as_slice().iter().zip(&fd).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|f| f * f).sum::<f64>().sqrt();
        let rel = diff / norm;
        worst = worst.max(rel);
        ensure!(rel <= TOL, "instance {inst} ({users}x{items}, d={dim}, L={num_layers}): relative error {rel:.3e}");
    }
    within(start, Duration::from_secs(60), format!("{INSTANCES} instances, max relative error {worst:.2e}"))
}

// 5. enrichment closed form == dense matrix power == propagation Jacobian

fn magnification_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut compared = 0;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let users = rng.random_range(2..=15);
        let items = rng.random_range(2..=30 - users);
        let ds = random_dataset(&mut rng, users, items, 1..=4);
        let n = ds.num_nodes();
        // propagating an identity base gives rows of A^l directly
        let eye = Matrix::from_fn(n, n, |r, c| if r == c { 1.0f64 } else { 0.0 });
        let adj = build_normalized_adjacency(&ds).unwrap();
        let layers = propagate(&eye, &adj, 3).unwrap();
        let d = 4;
        for u in 0..users {
            for x in 0..n {
                for l in 1..=3 {
                    let a = enrichment_analytic(&ds, u, x, l, d).unwrap();
                    let o = enrichment_oracle(&ds, u, x, l, d).unwrap();
                    let jac = d as f64 * layers.layer(l).get(u, x).abs();
                    let err = (a - o).abs().max((a - jac).abs());
                    worst = worst.max(err);
                    ensure!(err <= 1e-10, "u={u} x={x} l={l}: analytic {a} oracle {o} jacobian {jac}");
                    compared += 1;
                }
            }
        }
    }
    let path = Dataset::new(2, 1, vec![vec![0], vec![0]], vec![Vec::new(); 2]).unwrap();
    let v = enrichment_analytic(&path, 0, 1, 2, 4).unwrap();
    ensure!((v - 2.0).abs() <= 1e-10, "path graph gave {v}");
    ensure!((enrichment_oracle(&path, 0, 1, 2, 4).unwrap() - 2.0).abs() <= 1e-10, "path oracle");
    within(start, Duration::from_secs(30), format!("{compared} triples, max error {worst:.1e}, path graph 2.0"))
}

// 6. metrics against brute force; random scorer against hypergeometric expectation

struct TableScorer {
    users: usize,
    scores: Vec<Vec<f32>>,
}

impl Scorer for TableScorer {
    fn num_users(&self) -> usize {
        self.users
    }
    fn num_items(&self) -> usize {
        self.scores[0].len()
    }
    fn score_user(&self, u: u32, out: &mut [f32]) {
        out.copy_from_slice(&self.scores[u as usize]);
    }
}

fn brute_force(scores: &[f32], relevant: &[u32], exclude: &[u32], k: usize) -> (f64, f64) {
    let mut order: Vec<u32> = (0..scores.len() as u32).filter(|i| !exclude.contains(i)).collect();
    order.sort_by(|a, b| scores[*b as usize].total_cmp(&scores[*a as usize]).then(a.cmp(b)));
    let top = &order[..k.min(order.len())];
    let hits: Vec<usize> = (0..top.len()).filter(|p| relevant.contains(&top[*p])).collect();
    let recall = hits.len() as f64 / relevant.len() as f64;
    let dcg: f64 = hits.iter().map(|&p| 1.0 / (p as f64 + 2.0).log2()).sum();
    let idcg: f64 = (0..relevant.len().min(k)).map(|p| 1.0 / (p as f64 + 2.0).log2()).sum();
    (recall, dcg / idcg)
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for inst in 0..1000 {
        let users = rng.random_range(1..=6);
        let items = rng.random_range(5..=40);
        let ks = [1, rng.random_range(1..=items), 20];
        // coarse scores so that ties occur
        let scores: Vec<Vec<f32>> = (0..users).map(|_| (0..items).map(|_| rng.random_range(0..8) as f32).collect()).collect();
        let mut relevant = Vec::new();
        let mut exclude = Vec::new();
        for _ in 0..users {
            let mut perm: Vec<u32> = (0..items as u32).collect();
            perm.shuffle(&mut rng);
            let nr = rng.random_range(0..=items / 3);
            let ne = rng.random_range(0..=items / 3);
            let mut r = perm[..nr].to_vec();
            let mut e = perm[nr..nr + ne].to_vec();
            r.sort_unstable();
            e.sort_unstable();
            relevant.push(r);
            exclude.push(e);
        }
        let scorer = TableScorer { users, scores: scores.clone() };
        let report = evaluate(&scorer, &relevant, &exclude, &ks).unwrap();
        let evaluable: Vec<usize> = (0..users).filter(|&u| !relevant[u].is_empty()).collect();
        ensure!(report.users == evaluable.len(), "instance {inst}: user count");
        for (p, &k) in ks.iter().enumerate() {
            let (mut r, mut g) = (0.0, 0.0);
            for &u in &evaluable {
                let (ru, gu) = brute_force(&scores[u], &relevant[u], &exclude[u], k);
                r += ru;
                g += gu;
            }
            let n = evaluable.len().max(1) as f64;
            ensure!((report.recall[p] - r / n).abs() < 1e-12, "instance {inst} recall@{k}: {} vs {}", report.recall[p], r / n);
            ensure!((report.ndcg[p] - g / n).abs() < 1e-12, "instance {inst} ndcg@{k}: {} vs {}", report.ndcg[p], g / n);
        }
        for &u in &evaluable {
            let ranked: Vec<u32> = {
                let mut o: Vec<u32> = (0..items as u32).filter(|i| !exclude[u].contains(i)).collect();
                o.sort_by(|a, b| scores[u][*b as usize].total_cmp(&scores[u][*a as usize]).then(a.cmp(b)));
                o
            };
            let (r, g) = brute_force(&scores[u], &relevant[u], &exclude[u], ks[1]);
            ensure!((recall_at_k(&ranked, &relevant[u], ks[1]).unwrap() - r).abs() < 1e-12, "recall_at_k");
            ensure!((ndcg_at_k(&ranked, &relevant[u], ks[1]).unwrap() - g).abs() < 1e-12, "ndcg_at_k");
        }
    }

    // random scorer: hits per user are hypergeometric
    let (users, items, k) = (2000usize, 300usize, 20usize);
    let scores: Vec<Vec<f32>> = (0..users).map(|_| (0..items).map(|_| rng.random()).collect()).collect();
    let mut relevant = Vec::with_capacity(users);
    let mut exclude = Vec::with_capacity(users);
    for _ in 0..users {
        let mut perm: Vec<u32> = (0..items as u32).collect();
        perm.shuffle(&mut rng);
        let nr = rng.random_range(1..=30);
        let ne = rng.random_range(0..=50);
        let mut r = perm[..nr].to_vec();
        let mut e = perm[nr..nr + ne].to_vec();
        r.sort_unstable();
        e.sort_unstable();
        relevant.push(r);
        exclude.push(e);
    }
    let report = evaluate(&TableScorer { users, scores }, &relevant, &exclude, &[k]).unwrap();
    let (mut mean, mut var) = (0.0, 0.0);
    for u in 0..users {
        let n = (items - exclude[u].len()) as f64;
        let r = relevant[u].len() as f64;
        let kk = k as f64;
        mean += kk / n;
        var += kk * (r / n) * (1.0 - r / n) * (n - kk) / (n - 1.0) / (r * r);
    }
    mean /= users as f64;
    let sd = var.sqrt() / users as f64;
    let z = (report.recall[0] - mean) / sd;
    ensure!(z.abs() <= 3.0, "random scorer recall@{k} {} vs expected {mean} (z = {z:.2})", report.recall[0]);
    within(start, Duration::from_secs(30), format!("1000 instances exact; random scorer z = {z:.2}"))
}

// 7 and 8. desk-scale training

fn movielens_path() -> PathBuf {
    std::env::var_os("BINGEAR_MOVIELENS").map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k.inter")
    })
}

fn desk_dataset() -> Result<Dataset, String> {
    let path = movielens_path();
    let raw = read_interaction_log(&path).map_err(|e| {
        format!("cannot read MovieLens log at {} ({e}); set BINGEAR_MOVIELENS", path.display())
    })?;
    let (pairs, ids) = subsample_top_degree(&raw, 2000, 1500);
    split_per_user(&pairs, ids.users.len(), ids.items.len(), 0.2, 0).map_err(|e| e.to_string())
}

/// Converts a batch-scoped L2 coefficient (penalty on the rows of each
/// batch's triples, averaged over the batch) into the coefficient of a
/// whole-table penalty with the same expected per-step pull on each row.
fn per_table_reg(batch_reg: f64, num_nodes: usize) -> f64 {
    1.5 * batch_reg / num_nodes as f64
}

fn desk_config(ds: &Dataset, seed: u64, ablation: Ablation) -> TrainConfig {
    TrainConfig {
        dim: 64,
        num_layers: 2,
        batch_size: 2048,
        learning_rate: 1e-3,
        reg: per_table_reg(1e-4, ds.num_nodes()),
        ranking: RankingWeightParams::new(1.0, 0.1).unwrap(),
        candidates: 8,
        mix_bound: 1.0,
        pseudo_positives: 50,
        gamma: 1.0,
        epochs: 100,
        student_epochs: 40,
        eval_every: 10,
        patience: 3,
        validation_fraction: 0.05,
        seed,
        ablation,
        config_hash: 0,
        record_wall_time: false,
    }
}

const K: usize = 20;

fn teacher_recall(ds: &Dataset, t: &TeacherModel) -> f64 {
    let scorer = FusedScorer::from_layers(&t.embeddings, &t.weights);
    evaluate_test(&scorer, ds, &[K]).unwrap().recall[0]
}

fn student_recall(ds: &Dataset, m: &BinarizedModel) -> f64 {
    let scorer = BitwiseScorer::new(&m.table, &m.weights);
    evaluate_test(&scorer, ds, &[K]).unwrap().recall[0]
}

/// Expected Recall@K of a uniformly random ranking of each user's
/// non-train items.
fn random_recall(ds: &Dataset) -> f64 {
    let users: Vec<u32> = (0..ds.num_users() as u32).filter(|&u| !ds.test_items(u).is_empty()).collect();
    let total: f64 = users
        .iter()
        .map(|&u| (K as f64 / (ds.num_items() - ds.train_items(u).len()) as f64).min(1.0))
        .sum();
    total / users.len() as f64
}

struct SeedRun {
    teacher: TeacherModel,
    teacher_recall: f64,
    full_recall: f64,
    elapsed: Duration,
}

fn ensure_completed(what: &str, status: &TrainStatus) -> Result<(), String> {
    match status {
        TrainStatus::Completed { .. } => Ok(()),
        other => Err(format!("{what}: {other:?}")),
    }
}

fn run_seed(ds: &Dataset, seed: u64) -> Result<SeedRun, String> {
    let start = Instant::now();
    let cfg = desk_config(ds, seed, Ablation::default());
    let t = train_teacher(ds, &cfg).map_err(|e| e.to_string())?;
    ensure_completed("teacher", &t.status)?;
    let s = train_student(ds, &t.teacher, &cfg, None).map_err(|e| e.to_string())?;
    ensure_completed("student", &s.status)?;
    Ok(SeedRun {
        teacher_recall: teacher_recall(ds, &t.teacher),
        full_recall: student_recall(ds, &s.model),
        teacher: t.teacher,
        elapsed: start.elapsed(),
    })
}

static DESK: OnceLock<Result<(Dataset, SeedRun), String>> = OnceLock::new();

fn desk_seed0() -> Result<&'static (Dataset, SeedRun), String> {
    DESK.get_or_init(|| {
        let ds = desk_dataset()?;
        let run = run_seed(&ds, 0)?;
        Ok((ds, run))
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn desk_capability() -> Outcome {
    let (ds, run) = desk_seed0()?;
    let random = random_recall(ds);
    let ratio = run.full_recall / run.teacher_recall;
    let detail = format!(
        "{}x{} split, teacher R@20 {:.4} ({:.1}x random {random:.4}), student bitwise R@20 {:.4}, ratio {ratio:.3}",
        ds.num_users(),
        ds.num_items(),
        run.teacher_recall,
        run.teacher_recall / random,
        run.full_recall
    );
    ensure!(run.teacher_recall >= 5.0 * random, "{detail}: teacher below 5x random");
    ensure!(ratio >= 0.90, "{detail}: student below 0.90 of teacher");
    let took = run.elapsed;
    ensure!(took <= Duration::from_secs(30 * 60), "{detail}; took {:.0} s, budget 1800 s", took.as_secs_f64());
    Ok(format!("{detail}; {:.0} s", took.as_secs_f64()))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn ablation_direction() -> Outcome {
    let (ds, seed0) = desk_seed0()?;
    let start = Instant::now();
    let variants = [
        Ablation { disable_id2: true, ..Ablation::default() },
        Ablation { disable_synth_student: true, ..Ablation::default() },
    ];
    let mut full = vec![seed0.full_recall];
    let mut per_variant = vec![Vec::new(); variants.len()];
    for seed in 0..3u64 {
        let teacher = if seed == 0 {
            seed0.teacher.clone()
        } else {
            let run = run_seed(ds, seed)?;
            full.push(run.full_recall);
            run.teacher
        };
        for (v, ab) in variants.iter().enumerate() {
            let cfg = desk_config(ds, seed, *ab);
            let s = train_student(ds, &teacher, &cfg, None).map_err(|e| e.to_string())?;
            ensure_completed(&ab.label(), &s.status)?;
            per_variant[v].push(student_recall(ds, &s.model));
        }
    }
    let (fm, fs) = mean_std(&full);
    let mut detail = format!("full {fm:.4}±{fs:.4}");
    let mut beaten = Vec::new();
    for (ab, xs) in variants.iter().zip(&per_variant) {
        let (m, s) = mean_std(xs);
        detail.push_str(&format!(", {} {m:.4}±{s:.4}", ab.label()));
        if m - fm > fs.max(s) {
            beaten.push(ab.label());
        }
    }
    ensure!(beaten.is_empty(), "{detail}: {beaten:?} beat the full model by more than one std");
    let total = start.elapsed() + seed0.elapsed;
    ensure!(total <= Duration::from_secs(90 * 60), "{detail}; took {:.0} s, budget 5400 s", total.as_secs_f64());
    Ok(format!("{detail}; {:.0} s", total.as_secs_f64()))
}

// 9. serialized size ratio

fn compression_ratio() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let ds = random_dataset(&mut rng, 1000, 2000, 5..=30);
    let (dim, num_layers) = (256usize, 2usize);
    let le = layer_stack(&ds, &init_base(ds.num_nodes(), dim, 9), num_layers);
    let model = BinarizedModel {
        table: build_binarized_tables(&le).unwrap(),
        weights: layer_weights(num_layers),
        config_hash: 0,
        seed: 0,
    };
    let bytes = model.to_bytes().len();
    let full = 4 * ds.num_nodes() * dim;
    let measured = bytes as f64 / full as f64;
    let expected = ((num_layers + 1) * (32 + dim)) as f64 / (32 * dim) as f64;
    let detail = format!("{bytes} B vs {full} B full precision: {:.2}x smaller (expected {:.2}x)", 1.0 / measured, 1.0 / expected);
    ensure!((measured / expected - 1.0).abs() <= 0.05, "{detail}");
    within(start, Duration::from_secs(5), detail)
}

// 10. bitwise scoring beats float scoring

fn bitwise_speedup() -> Outcome {
    let start = Instant::now();
    let ds = desk_dataset()?;
    let (dim, num_layers) = (256usize, 2usize);
    let le = layer_stack(&ds, &init_base(ds.num_nodes(), dim, 10), num_layers);
    let model = BinarizedModel {
        table: build_binarized_tables(&le).unwrap(),
        weights: layer_weights(num_layers),
        config_hash: 0,
        seed: 0,
    };
    let report = bench_scoring(&model, ds.num_users(), 1, 10);
    let (bit, float) = (report.row("bitwise").unwrap(), report.row("float").unwrap());
    let detail = format!(
        "{} queries x {} items: bitwise {:.1} ms, float {:.1} ms, speedup {:.2}x",
        bit.queries,
        ds.num_items(),
        bit.wall_ms,
        float.wall_ms,
        report.speedup().unwrap()
    );
    ensure!(bit.wall_ms < float.wall_ms, "{detail}");
    within(start, Duration::from_secs(120), detail)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("bitwise equivalence", bitwise_equivalence),
        ("popcount identity", popcount_identity),
        ("gradient estimator", gradient_estimator),
        ("end-to-end gradient check", end_to_end_gradient),
        ("magnification identity", magnification_identity),
        ("metric oracles", metric_oracles),
        ("desk-scale capability", desk_capability),
        ("ablation direction", ablation_direction),
        ("compression ratio", compression_ratio),
        ("bitwise speedup", bitwise_speedup),
    ];
    // libtest-style flags (e.g. --nocapture) are accepted and ignored
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (idx, (name, run)) in criteria.iter().enumerate() {
        let n = idx + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
