//! Two-phase training: a full-precision teacher, then a binarized student
//! warm-started from it.

mod adam;
mod checkpoint;
mod log;
mod objective;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::distill::{DistillCache, PseudoPositiveSet, RankingWeightParams};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::graph::prep::split_per_user;
use crate::graph::{build_normalized_adjacency, Dataset, NormalizedAdjacency};
use crate::inference::{BitwiseScorer, FusedScorer, Scorer};
use crate::matrix::Matrix;
use crate::propagation::{layer_weights, LayerEmbeddings, LayerWeights};
use crate::quantize::{build_binarized_tables, BinarizedModel};
use crate::rng::{substream, substream_key};

pub use adam::Adam;
pub use checkpoint::{TeacherModel, TEACHER_MAGIC, TEACHER_VERSION};
pub use log::{MetricsRecord, Phase};
pub use objective::{
    bpr_pair_loss, sign_grad, BatchKey, Objective, ObjectiveTerms, Quantizer, Terms,
};

/// Cutoff used for validation and the metrics log.
pub const VALIDATION_K: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ablation {
    pub disable_id1: bool,
    pub disable_id2: bool,
    pub disable_synth_teacher: bool,
    pub disable_synth_student: bool,
}

impl Ablation {
    /// `"full"`, or `"w/o "` followed by the disabled parts.
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [
            (self.disable_id1, "ID1"),
            (self.disable_id2, "ID2"),
            (self.disable_synth_teacher, "synth (teacher)"),
            (self.disable_synth_student, "synth"),
        ]
        .into_iter()
        .filter_map(|(off, name)| off.then_some(name))
        .collect();
        if parts.is_empty() {
            "full".into()
        } else {
            format!("w/o {}", parts.join(", "))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub num_layers: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// L2 coefficient on the base table.
    pub reg: f64,
    pub ranking: RankingWeightParams,
    /// Candidate negatives per pair.
    pub candidates: usize,
    /// Upper bound of mix-up weights.
    pub mix_bound: f64,
    /// Pseudo-positives per user and layer.
    pub pseudo_positives: usize,
    /// Sharpness of the sign surrogate derivative.
    pub gamma: f64,
    pub epochs: usize,
    pub student_epochs: usize,
    /// Epochs between validation passes.
    pub eval_every: usize,
    /// Validation passes without improvement before stopping.
    pub patience: usize,
    /// Share of train edges held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
    pub ablation: Ablation,
    pub config_hash: u64,
    /// Include wall-clock seconds in metrics records.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            num_layers: 2,
            batch_size: 2048,
            learning_rate: 1e-3,
            reg: 1e-4,
            ranking: RankingWeightParams::default(),
            candidates: 8,
            mix_bound: 1.0,
            pseudo_positives: 50,
            gamma: 1.0,
            epochs: 300,
            student_epochs: 300,
            eval_every: 5,
            patience: 5,
            validation_fraction: 0.05,
            seed: 0,
            ablation: Ablation::default(),
            config_hash: 0,
            record_wall_time: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("num_layers", self.num_layers),
            ("batch_size", self.batch_size),
            ("candidates", self.candidates),
            ("pseudo_positives", self.pseudo_positives),
            ("eval_every", self.eval_every),
            ("patience", self.patience),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Contract(format!("{name} must be positive")));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Contract(format!("{name} must be positive")));
            }
        }
        if !(self.reg >= 0.0 && self.reg.is_finite()) {
            return Err(Error::Contract("reg must be non-negative".into()));
        }
        if !(self.mix_bound > 0.0 && self.mix_bound <= 1.0) {
            return Err(Error::Contract("mix_bound must lie in (0, 1]".into()));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return Err(Error::Contract("validation_fraction must lie in [0, 0.5)".into()));
        }
        RankingWeightParams::new(self.ranking.scale, self.ranking.decay)?;
        Ok(())
    }

    pub fn weights(&self) -> LayerWeights {
        layer_weights(self.num_layers)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainStatus {
    Completed { early_stopped: bool },
    /// A non-finite loss or gradient; the returned model is the last good one.
    Diverged { epoch: usize, message: String },
}

/// The graph actually trained on, plus the held-out validation edges stored
/// as its test lists.
pub struct TrainingSplit {
    pub ds: Dataset,
    pub adj: NormalizedAdjacency,
}

impl TrainingSplit {
    pub fn new(ds: &Dataset, cfg: &TrainConfig) -> Result<Self> {
        let edges: Vec<(u32, u32)> = ds.train_edges().collect();
        let key = substream_key(cfg.seed, "validation", &[]);
        let split = split_per_user(&edges, ds.num_users(), ds.num_items(), cfg.validation_fraction, key)?;
        let adj = build_normalized_adjacency(&split)?;
        Ok(Self { ds: split, adj })
    }

    pub fn has_validation(&self) -> bool {
        self.ds.num_test() > 0
    }
}

pub struct TeacherOutcome {
    pub teacher: TeacherModel,
    pub log: Vec<MetricsRecord>,
    pub status: TrainStatus,
    pub best_epoch: Option<usize>,
}

pub struct StudentOutcome {
    pub model: BinarizedModel,
    pub base: Matrix<f32>,
    pub cache: Option<DistillCache>,
    pub log: Vec<MetricsRecord>,
    pub status: TrainStatus,
    pub best_epoch: Option<usize>,
}

/// Base table drawn from `N(0, 0.1 / sqrt(d))`.
pub fn init_base(num_nodes: usize, dim: usize, seed: u64) -> Matrix<f32> {
    let normal = Normal::new(0.0f32, 0.1 / (dim as f32).sqrt()).expect("valid std");
    let mut rng = substream(seed, "init", &[]);
    Matrix::from_fn(num_nodes, dim, |_, _| normal.sample(&mut rng))
}

pub fn train_teacher(ds: &Dataset, cfg: &TrainConfig) -> Result<TeacherOutcome> {
    cfg.validate()?;
    let split = TrainingSplit::new(ds, cfg)?;
    let weights = cfg.weights();
    let objective = Objective {
        ds: &split.ds,
        adj: &split.adj,
        weights: &weights,
        num_layers: cfg.num_layers,
        quantizer: Quantizer::Identity,
        terms: Terms {
            bpr: true,
            id1: false,
            id2: false,
            synth: !cfg.ablation.disable_synth_teacher,
        },
        cache: None,
        ranking: cfg.ranking,
        pseudo_positives: cfg.pseudo_positives,
        candidates: cfg.candidates,
        mix_bound: cfg.mix_bound,
        reg: cfg.reg,
    };
    let base = init_base(ds.num_nodes(), cfg.dim, cfg.seed);
    let run = run_phase(&split, &objective, cfg, Phase::Teacher, base, cfg.epochs)?;
    let embeddings = propagate_f32(&run.base, &split.adj, cfg.num_layers)?;
    Ok(TeacherOutcome {
        teacher: TeacherModel {
            embeddings,
            weights,
            config_hash: cfg.config_hash,
            seed: cfg.seed,
        },
        log: run.log,
        status: run.status,
        best_epoch: run.best_epoch,
    })
}

/// Trains the binarized student from a teacher produced with the same
/// `seed` and split. `pseudo` reuses a previously extracted pseudo-positive
/// set instead of extracting one.
pub fn train_student(
    ds: &Dataset,
    teacher: &TeacherModel,
    cfg: &TrainConfig,
    pseudo: Option<PseudoPositiveSet>,
) -> Result<StudentOutcome> {
    cfg.validate()?;
    let te = &teacher.embeddings;
    if te.num_users() != ds.num_users() || te.num_items() != ds.num_items() || te.dim() != cfg.dim {
        return Err(Error::Contract("teacher does not match dataset or dimension".into()));
    }
    if te.num_layers() != cfg.num_layers {
        return Err(Error::Contract("teacher layer count differs from config".into()));
    }
    let split = TrainingSplit::new(ds, cfg)?;
    let weights = cfg.weights();
    let ab = cfg.ablation;
    let cache = if ab.disable_id1 && ab.disable_id2 {
        None
    } else {
        Some(match pseudo {
            Some(p) => DistillCache::with_pseudo(te, &split.ds, &weights, p)?,
            None => DistillCache::build(te, &split.ds, cfg.pseudo_positives, &weights)?,
        })
    };
    let objective = Objective {
        ds: &split.ds,
        adj: &split.adj,
        weights: &weights,
        num_layers: cfg.num_layers,
        quantizer: Quantizer::Sign { gamma: cfg.gamma },
        terms: Terms {
            bpr: true,
            id1: !ab.disable_id1,
            id2: !ab.disable_id2,
            synth: !ab.disable_synth_student,
        },
        cache: cache.as_ref(),
        ranking: cfg.ranking,
        pseudo_positives: cfg.pseudo_positives,
        candidates: cfg.candidates,
        mix_bound: cfg.mix_bound,
        reg: cfg.reg,
    };
    let run = run_phase(&split, &objective, cfg, Phase::Student, teacher.base().clone(), cfg.student_epochs)?;
    let layers = propagate_f32(&run.base, &split.adj, cfg.num_layers)?;
    let model = BinarizedModel {
        table: build_binarized_tables(&layers)?,
        weights,
        config_hash: cfg.config_hash,
        seed: cfg.seed,
    };
    Ok(StudentOutcome {
        model,
        base: run.base,
        cache,
        log: run.log,
        status: run.status,
        best_epoch: run.best_epoch,
    })
}

fn propagate_f32(base: &Matrix<f32>, adj: &NormalizedAdjacency, num_layers: usize) -> Result<LayerEmbeddings<f32>> {
    crate::propagation::propagate(base, adj, num_layers)
}

struct PhaseRun {
    base: Matrix<f32>,
    log: Vec<MetricsRecord>,
    status: TrainStatus,
    best_epoch: Option<usize>,
}

fn validation_recall(
    split: &TrainingSplit,
    objective: &Objective<'_>,
    phase: Phase,
    base: &Matrix<f32>,
) -> Result<(f64, f64)> {
    let layers = propagate_f32(base, &split.adj, objective.num_layers)?;
    let report = match phase {
        Phase::Teacher => {
            let s = FusedScorer::from_layers(&layers, objective.weights);
            validate_with(&s, split)?
        }
        Phase::Student => {
            let table = build_binarized_tables(&layers)?;
            validate_with(&BitwiseScorer::new(&table, objective.weights), split)?
        }
    };
    Ok(report)
}

fn validate_with<S: Scorer>(scorer: &S, split: &TrainingSplit) -> Result<(f64, f64)> {
    let r = evaluate(scorer, split.ds.test_lists(), split.ds.train_lists(), &[VALIDATION_K])?;
    Ok((r.recall[0], r.ndcg[0]))
}

fn run_phase(
    split: &TrainingSplit,
    objective: &Objective<'_>,
    cfg: &TrainConfig,
    phase: Phase,
    mut base: Matrix<f32>,
    epochs: usize,
) -> Result<PhaseRun> {
    let variant = match phase {
        Phase::Teacher if cfg.ablation.disable_synth_teacher => "w/o synth (teacher)".to_string(),
        Phase::Teacher => "full".to_string(),
        Phase::Student => Ablation {
            disable_synth_teacher: false,
            ..cfg.ablation
        }
        .label(),
    };
    let mut edges: Vec<(u32, u32)> = split.ds.train_edges().collect();
    let mut adam = Adam::new(base.as_slice().len(), cfg.learning_rate as f32);
    let mut grad = Matrix::zeros(base.rows(), base.cols());
    let phase_seed = substream_key(cfg.seed, phase.as_str(), &[]);
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Matrix<f32>)> = None;
    let mut since_best = 0usize;
    let mut last_good = base.clone();
    let mut status = TrainStatus::Completed { early_stopped: false };
    let start = Instant::now();

    'epochs: for epoch in 0..epochs {
        edges.sort_unstable();
        edges.shuffle(&mut substream(phase_seed, "shuffle", &[epoch as u64]));
        let mut sums = ObjectiveTerms::default();
        let mut batches = 0usize;
        for (b, chunk) in edges.chunks(cfg.batch_size).enumerate() {
            let key = BatchKey {
                seed: phase_seed,
                epoch: epoch as u64,
                batch: b as u64,
            };
            let terms = match objective.evaluate(&base, chunk, key, Some(&mut grad)) {
                Ok(t) if t.all_finite() => t,
                Ok(t) => {
                    let term = t.first_non_finite().unwrap_or("total");
                    status = diverged(epoch, format!("non-finite {term} loss"));
                    break 'epochs;
                }
                Err(Error::Numeric(msg)) => {
                    status = diverged(epoch, msg);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            adam.step(base.as_mut_slice(), grad.as_slice());
            sums.bpr += terms.bpr;
            sums.id1 += terms.id1;
            sums.id2 += terms.id2;
            sums.reg += terms.reg;
            sums.total += terms.total;
            batches += 1;
        }
        if !base.all_finite() {
            status = diverged(epoch, "non-finite embeddings after update".into());
            break;
        }
        last_good.as_mut_slice().copy_from_slice(base.as_slice());
        let n = batches.max(1) as f64;
        let means = ObjectiveTerms {
            bpr: sums.bpr / n,
            id1: sums.id1 / n,
            id2: sums.id2 / n,
            reg: sums.reg / n,
            total: sums.total / n,
        };

        let mut record = MetricsRecord {
            phase,
            variant: variant.clone(),
            epoch,
            terms: means,
            recall: None,
            ndcg: None,
            wall_s: cfg.record_wall_time.then(|| start.elapsed().as_secs_f64()),
        };
        let eval_now = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == epochs;
        let mut stop = false;
        if eval_now && split.has_validation() {
            let (recall, ndcg) = validation_recall(split, objective, phase, &base)?;
            record.recall = Some(recall);
            record.ndcg = Some(ndcg);
            if best.as_ref().is_none_or(|(r, _, _)| recall > *r) {
                best = Some((recall, epoch, base.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                stop = since_best >= cfg.patience;
            }
        }
        log.push(record);
        if stop {
            status = TrainStatus::Completed { early_stopped: true };
            break;
        }
    }

    let (base, best_epoch) = match best {
        Some((_, e, b)) => (b, Some(e)),
        None => (last_good, None),
    };
    Ok(PhaseRun {
        base,
        log,
        status,
        best_epoch,
    })
}

fn diverged(epoch: usize, message: String) -> TrainStatus {
    TrainStatus::Diverged { epoch, message }
}
