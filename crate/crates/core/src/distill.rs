//! Layer-wise ranking distillation from a full-precision teacher.

use std::io::{BufReader, Read, Write};

use rayon::prelude::*;

use crate::activation::{log_sigmoid, log_sigmoid_grad};
use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::inference::top_k;
use crate::matrix::{dot, Real};
use crate::propagation::{LayerEmbeddings, LayerWeights};

pub const PSEUDO_MAGIC: &[u8; 4] = b"BGPP";
pub const PSEUDO_VERSION: u16 = 1;

/// `w_k = scale * exp(-decay * k)` for 1-based rank `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankingWeightParams {
    pub scale: f64,
    pub decay: f64,
}

impl RankingWeightParams {
    /// `decay == 0` is accepted and gives flat weights.
    pub fn new(scale: f64, decay: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) || !(decay >= 0.0 && decay.is_finite()) {
            return Err(Error::Contract(format!(
                "ranking weights need scale > 0 and decay >= 0 (got {scale}, {decay})"
            )));
        }
        Ok(Self { scale, decay })
    }
}

impl Default for RankingWeightParams {
    fn default() -> Self {
        Self {
            scale: 1.0,
            decay: 0.1,
        }
    }
}

pub fn ranking_weight(k: usize, p: &RankingWeightParams) -> f64 {
    debug_assert!(k >= 1, "ranks are 1-based");
    p.scale * (-p.decay * k as f64).exp()
}

/// `w_l^2 <v_u, v_i>` at layer `l` for each item.
pub fn teacher_layer_scores<T: Real>(
    teacher: &LayerEmbeddings<T>,
    w: &LayerWeights,
    u: u32,
    items: &[u32],
    l: usize,
) -> Vec<T> {
    let w2 = w.squared::<T>()[l];
    let eu = teacher.user(u, l);
    items.iter().map(|&i| w2 * dot(eu, teacher.item(i, l))).collect()
}

/// Value and per-score partial derivatives of a ranked distillation loss.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillLoss<T> {
    pub value: T,
    /// Indexed like the input scores: `[layer][position]`.
    pub grads: Vec<Vec<T>>,
    /// No targets were available; the loss is zero.
    pub empty: bool,
}

/// `-(1 / norm) * sum_l sum_k w_k ln sigma(s_{l,k})` where `scores[l]` is
/// already in rank order (position 0 is rank 1).
pub fn ranked_log_sigmoid_loss<T: Real>(
    scores: &[Vec<T>],
    norm: usize,
    p: &RankingWeightParams,
) -> DistillLoss<T> {
    if norm == 0 || scores.iter().all(Vec::is_empty) {
        return DistillLoss {
            value: T::zero(),
            grads: scores.iter().map(|s| vec![T::zero(); s.len()]).collect(),
            empty: true,
        };
    }
    let inv = T::one() / T::from_f64(norm as f64);
    let mut value = T::zero();
    let grads = scores
        .iter()
        .map(|layer| {
            layer
                .iter()
                .enumerate()
                .map(|(pos, &s)| {
                    let wk = T::from_f64(ranking_weight(pos + 1, p));
                    value = value - inv * wk * log_sigmoid(s);
                    -inv * wk * log_sigmoid_grad(s)
                })
                .collect()
        })
        .collect();
    DistillLoss {
        value,
        grads,
        empty: false,
    }
}

/// Order of `items` by descending score, ties by ascending item id.
pub fn teacher_order(items: &[u32], scores: &[f32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(items[a].cmp(&items[b])));
    idx
}

/// Distillation over a user's interacted items. `teacher[l]` and `student[l]`
/// are layer-`l` scores aligned with `items`; the ranking is taken from the
/// teacher scores, so the input order does not matter. Gradients are
/// returned aligned with the input.
pub fn loss_id1<T: Real>(
    items: &[u32],
    teacher: &[Vec<f32>],
    student: &[Vec<T>],
    p: &RankingWeightParams,
) -> DistillLoss<T> {
    let orders: Vec<Vec<usize>> = teacher.iter().map(|t| teacher_order(items, t)).collect();
    let ranked: Vec<Vec<T>> = orders
        .iter()
        .zip(student)
        .map(|(ord, s)| ord.iter().map(|&k| s[k]).collect())
        .collect();
    let loss = ranked_log_sigmoid_loss(&ranked, items.len(), p);
    let mut grads = vec![vec![T::zero(); items.len()]; student.len()];
    for (l, ord) in orders.iter().enumerate() {
        for (pos, &k) in ord.iter().enumerate() {
            grads[l][k] = loss.grads[l][pos];
        }
    }
    DistillLoss { grads, ..loss }
}

/// Distillation over cached pseudo-positives; `student[l]` follows the
/// cached teacher order at layer `l`.
pub fn loss_id2<T: Real>(student: &[Vec<T>], p: &RankingWeightParams, r: usize) -> DistillLoss<T> {
    ranked_log_sigmoid_loss(student, r, p)
}

/// Per user and layer, the top-`R` non-interacted items by teacher layer
/// score.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudoPositiveSet {
    num_users: usize,
    num_layers: usize,
    r: usize,
    lists: Vec<Vec<u32>>,
    truncated: bool,
}

impl PseudoPositiveSet {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Some user had fewer than `R` non-interacted items.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn get(&self, u: u32, l: usize) -> &[u32] {
        &self.lists[u as usize * (self.num_layers + 1) + l]
    }

    /// Layout (little-endian): magic `BGPP`, version `u16`, `M`, `L`, `R` as
    /// `u32`, truncated flag `u8`, then for each user and layer a `u32`
    /// length followed by that many `u32` item ids.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(PSEUDO_MAGIC);
        buf.extend_from_slice(&PSEUDO_VERSION.to_le_bytes());
        for v in [self.num_users, self.num_layers, self.r] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.push(self.truncated as u8);
        for list in &self.lists {
            buf.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for &i in list {
                buf.extend_from_slice(&i.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(r).read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != PSEUDO_MAGIC {
            return Err(Error::Format("not a pseudo-positive sidecar".into()));
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
        if version != PSEUDO_VERSION {
            return Err(Error::Format(format!("unsupported sidecar version {version}")));
        }
        let num_users = cur.u32()? as usize;
        let num_layers = cur.u32()? as usize;
        let r = cur.u32()? as usize;
        let truncated = cur.take(1)?[0] != 0;
        let mut lists = Vec::with_capacity(num_users * (num_layers + 1));
        for _ in 0..num_users * (num_layers + 1) {
            let len = cur.u32()? as usize;
            if len > r {
                return Err(Error::Format(format!("list of {len} exceeds R = {r}")));
            }
            lists.push((0..len).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?);
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after sidecar body".into()));
        }
        Ok(Self {
            num_users,
            num_layers,
            r,
            lists,
            truncated,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Format("sidecar is truncated".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn extract_pseudo_positives(
    teacher: &LayerEmbeddings<f32>,
    ds: &Dataset,
    r: usize,
    w: &LayerWeights,
) -> Result<PseudoPositiveSet> {
    if r == 0 {
        return Err(Error::Contract("R must be at least 1".into()));
    }
    check_shapes(teacher, ds, w)?;
    let l1 = teacher.num_layers() + 1;
    let all_items: Vec<u32> = (0..ds.num_items() as u32).collect();
    let per_user: Vec<(Vec<Vec<u32>>, bool)> = (0..ds.num_users() as u32)
        .into_par_iter()
        .map(|u| {
            let mut truncated = false;
            let lists = (0..l1)
                .map(|l| {
                    let scores = teacher_layer_scores(teacher, w, u, &all_items, l);
                    let top = top_k(&scores, r, ds.train_items(u));
                    truncated |= top.truncated;
                    top.items
                })
                .collect();
            (lists, truncated)
        })
        .collect();
    let truncated = per_user.iter().any(|(_, t)| *t);
    Ok(PseudoPositiveSet {
        num_users: ds.num_users(),
        num_layers: teacher.num_layers(),
        r,
        lists: per_user.into_iter().flat_map(|(l, _)| l).collect(),
        truncated,
    })
}

fn check_shapes(teacher: &LayerEmbeddings<f32>, ds: &Dataset, w: &LayerWeights) -> Result<()> {
    if teacher.num_users() != ds.num_users() || teacher.num_items() != ds.num_items() {
        return Err(Error::Contract(format!(
            "teacher covers {}x{} nodes, dataset {}x{}",
            teacher.num_users(),
            teacher.num_items(),
            ds.num_users(),
            ds.num_items()
        )));
    }
    if w.len() != teacher.num_layers() + 1 {
        return Err(Error::Contract("one layer weight per layer required".into()));
    }
    Ok(())
}

/// Frozen teacher knowledge for the student phase: each user's interacted
/// items ranked by teacher layer score, and the pseudo-positive set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistillCache {
    num_layers: usize,
    interacted: Vec<Vec<u32>>,
    pseudo: PseudoPositiveSet,
}

impl DistillCache {
    pub fn build(teacher: &LayerEmbeddings<f32>, ds: &Dataset, r: usize, w: &LayerWeights) -> Result<Self> {
        let pseudo = extract_pseudo_positives(teacher, ds, r, w)?;
        Self::with_pseudo(teacher, ds, w, pseudo)
    }

    /// Builds the interacted-item rankings and attaches an existing
    /// pseudo-positive set.
    pub fn with_pseudo(
        teacher: &LayerEmbeddings<f32>,
        ds: &Dataset,
        w: &LayerWeights,
        pseudo: PseudoPositiveSet,
    ) -> Result<Self> {
        check_shapes(teacher, ds, w)?;
        if pseudo.num_users != ds.num_users() || pseudo.num_layers != teacher.num_layers() {
            return Err(Error::Contract("pseudo-positive set does not match the teacher".into()));
        }
        let l1 = teacher.num_layers() + 1;
        let interacted = (0..ds.num_users() as u32)
            .into_par_iter()
            .flat_map_iter(|u| {
                let items = ds.train_items(u);
                (0..l1).map(move |l| {
                    let scores = teacher_layer_scores(teacher, w, u, items, l);
                    teacher_order(items, &scores).into_iter().map(|k| items[k]).collect()
                })
            })
            .collect();
        Ok(Self {
            num_layers: teacher.num_layers(),
            interacted,
            pseudo,
        })
    }

    /// Interacted items of `u` in teacher rank order at layer `l`.
    pub fn ranked_interacted(&self, u: u32, l: usize) -> &[u32] {
        &self.interacted[u as usize * (self.num_layers + 1) + l]
    }

    pub fn pseudo_positives(&self) -> &PseudoPositiveSet {
        &self.pseudo
    }
}
