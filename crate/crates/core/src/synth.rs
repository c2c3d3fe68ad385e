//! Hard negative synthesis: candidate pooling, positive mix-up and layer-wise
//! hardest-candidate selection.
//!
//! The same routines run on full-precision layer embeddings and on the
//! `alpha * q` reconstructions of a binarized table; both are plain
//! [`LayerEmbeddings`] here.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::matrix::{dot, Real};
use crate::propagation::LayerEmbeddings;
use crate::quantize::BinarizedTable;
use crate::rng::{fnv1a, substream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    /// Candidate negatives drawn per positive pair.
    pub candidates: usize,
    /// Upper bound of the uniform mix-up weights, in `(0, 1]`.
    pub mix_bound: f64,
    pub rng_seed: u64,
}

impl SynthConfig {
    pub fn new(candidates: usize, mix_bound: f64, rng_seed: u64) -> Result<Self> {
        if candidates == 0 {
            return Err(Error::Contract("candidate count must be at least 1".into()));
        }
        if !(mix_bound > 0.0 && mix_bound <= 1.0) {
            return Err(Error::Contract(format!("mix bound {mix_bound} outside (0, 1]")));
        }
        Ok(Self {
            candidates,
            mix_bound,
            rng_seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidates {
    pub items: Vec<u32>,
    /// Fewer items were available than requested.
    pub exhausted: bool,
}

/// Draws `count` distinct items uniformly from `0..num_items` minus
/// `exclude` (sorted ascending). When no more than `count` items remain, all
/// of them are returned in ascending order.
pub fn draw_from_complement<R: Rng + ?Sized>(
    exclude: &[u32],
    num_items: usize,
    count: usize,
    rng: &mut R,
) -> Candidates {
    let available = num_items.saturating_sub(exclude.len());
    if available <= count {
        let items = complement(exclude, num_items);
        return Candidates {
            exhausted: items.len() < count,
            items,
        };
    }
    let mut items = Vec::with_capacity(count);
    if available * 4 >= num_items {
        while items.len() < count {
            let x = rng.random_range(0..num_items as u32);
            if exclude.binary_search(&x).is_err() && !items.contains(&x) {
                items.push(x);
            }
        }
    } else {
        let mut pool = complement(exclude, num_items);
        for k in 0..count {
            let j = rng.random_range(k..pool.len());
            pool.swap(k, j);
        }
        pool.truncate(count);
        items = pool;
    }
    Candidates {
        items,
        exhausted: false,
    }
}

fn complement(exclude: &[u32], num_items: usize) -> Vec<u32> {
    let mut skip = exclude.iter().peekable();
    (0..num_items as u32)
        .filter(|&i| {
            while skip.next_if(|&&x| x < i).is_some() {}
            skip.next_if_eq(&&i).is_none()
        })
        .collect()
}

pub fn draw_candidates<R: Rng + ?Sized>(ds: &Dataset, u: u32, count: usize, rng: &mut R) -> Candidates {
    draw_from_complement(ds.train_items(u), ds.num_items(), count, rng)
}

/// `beta * pos + (1 - beta) * neg`, element-wise.
pub fn mix<T: Real>(pos: &[T], neg: &[T], beta: &[T]) -> Vec<T> {
    pos.iter()
        .zip(neg)
        .zip(beta)
        .map(|((&p, &n), &b)| b * p + (T::one() - b) * n)
        .collect()
}

/// One mixed candidate at one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedCandidate<T> {
    pub source: u32,
    pub beta: Vec<T>,
    pub mixed: Vec<T>,
}

/// Mixed pool indexed `[candidate][layer]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedPool<T> {
    pub entries: Vec<Vec<MixedCandidate<T>>>,
}

/// Mixes the positive item into every candidate at every layer. Each weight
/// is drawn independently from `U(0, mix_bound)`, candidate-major, then
/// layer, then dimension.
pub fn mixup_candidates<T: Real, R: Rng + ?Sized>(
    space: &LayerEmbeddings<T>,
    positive: u32,
    candidates: &[u32],
    mix_bound: f64,
    rng: &mut R,
) -> MixedPool<T> {
    let d = space.dim();
    let entries = candidates
        .iter()
        .map(|&j| {
            (0..=space.num_layers())
                .map(|l| {
                    let beta: Vec<T> = (0..d)
                        .map(|_| T::from_f64(mix_bound * rng.random::<f64>()))
                        .collect();
                    let mixed = mix(space.item(positive, l), space.item(j, l), &beta);
                    MixedCandidate {
                        source: j,
                        beta,
                        mixed,
                    }
                })
                .collect()
        })
        .collect();
    MixedPool { entries }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesizedNegative<T> {
    /// Selected vector per layer.
    pub layers: Vec<Vec<T>>,
    /// Source item per layer.
    pub sources: Vec<u32>,
    /// Mix weights of the selected vector per layer.
    pub betas: Vec<Vec<T>>,
}

impl<T: Real> SynthesizedNegative<T> {
    /// Layer-major concatenation.
    pub fn concat(&self) -> Vec<T> {
        self.layers.concat()
    }

    /// Hash of the selected sources and mix weights.
    pub fn digest(&self) -> u64 {
        let src = self.sources.iter().flat_map(|s| s.to_le_bytes());
        let betas = self
            .betas
            .iter()
            .flatten()
            .flat_map(|b| b.to_f64_lossy().to_bits().to_le_bytes());
        fnv1a(src.chain(betas))
    }

    /// An unmixed real item, as used when synthesis is disabled.
    pub fn real_item(space: &LayerEmbeddings<T>, item: u32) -> Self {
        let l1 = space.num_layers() + 1;
        Self {
            layers: (0..l1).map(|l| space.item(item, l).to_vec()).collect(),
            sources: vec![item; l1],
            betas: vec![vec![T::zero(); space.dim()]; l1],
        }
    }
}

/// Per layer, keeps the pool entry with the largest inner product with the
/// user's vector at that layer. Ties go to the earliest entry.
pub fn synthesize_hard_negative<T: Real>(
    user_layers: &[&[T]],
    pool: &MixedPool<T>,
) -> Result<SynthesizedNegative<T>> {
    if pool.entries.is_empty() {
        return Err(Error::Contract("empty candidate pool".into()));
    }
    let num_layers = user_layers.len();
    let mut out = SynthesizedNegative {
        layers: Vec::with_capacity(num_layers),
        sources: Vec::with_capacity(num_layers),
        betas: Vec::with_capacity(num_layers),
    };
    for (l, eu) in user_layers.iter().enumerate() {
        let mut best: Option<(T, &MixedCandidate<T>)> = None;
        for cand in &pool.entries {
            let c = cand
                .get(l)
                .ok_or_else(|| Error::Contract(format!("pool has no layer {l}")))?;
            let s = dot(&c.mixed, eu);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, c));
            }
        }
        let (_, c) = best.expect("pool is non-empty");
        out.layers.push(c.mixed.clone());
        out.sources.push(c.source);
        out.betas.push(c.beta.clone());
    }
    Ok(out)
}

/// Draw, mix and select in one space. `None` when the user has interacted
/// with every item.
pub fn synthesize<T: Real, R: Rng + ?Sized>(
    space: &LayerEmbeddings<T>,
    ds: &Dataset,
    u: u32,
    i: u32,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<Option<SynthesizedNegative<T>>> {
    let cands = draw_candidates(ds, u, cfg.candidates, rng);
    if cands.items.is_empty() {
        return Ok(None);
    }
    let pool = mixup_candidates(space, i, &cands.items, cfg.mix_bound, rng);
    let user: Vec<&[T]> = (0..=space.num_layers()).map(|l| space.user(u, l)).collect();
    synthesize_hard_negative(&user, &pool).map(Some)
}

/// Negatives for one `(u, i)` pair in both spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct DualNegative {
    pub full: Option<SynthesizedNegative<f32>>,
    pub binarized: Option<SynthesizedNegative<f32>>,
}

/// Runs synthesis in the full-precision space and, when a student table is
/// given, in the space of its `alpha * q` reconstructions. The two runs use
/// separate substreams keyed by `(u, i, step)`.
pub fn synthesize_dual(
    ds: &Dataset,
    u: u32,
    i: u32,
    step: u64,
    teacher: &LayerEmbeddings<f32>,
    student: Option<&BinarizedTable>,
    cfg: &SynthConfig,
) -> Result<DualNegative> {
    let coords = [u as u64, i as u64, step];
    let mut rng = substream(cfg.rng_seed, "synth-full", &coords);
    let full = synthesize(teacher, ds, u, i, cfg, &mut rng)?;
    let binarized = match student {
        None => None,
        Some(t) => {
            let recon = LayerEmbeddings::from_layers(t.reconstruct_layers(), t.num_users())?;
            let mut rng = substream(cfg.rng_seed, "synth-binarized", &coords);
            synthesize(&recon, ds, u, i, cfg, &mut rng)?
        }
    };
    Ok(DualNegative { full, binarized })
}
