use rayon::prelude::*;

use crate::activation::{log_sigmoid, log_sigmoid_grad};
use crate::distill::{ranked_log_sigmoid_loss, DistillCache, RankingWeightParams};
use crate::error::{Error, Result};
use crate::graph::{Dataset, NormalizedAdjacency};
use crate::matrix::{axpy, dot, Matrix, Real};
use crate::propagation::{propagate, LayerEmbeddings, LayerWeights};
use crate::quantize::embedding_scaler;
use crate::rng::substream;
use crate::synth::{draw_candidates, synthesize, SynthConfig, SynthesizedNegative};

/// Surrogate for `sign` in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Quantizer {
    /// No binarization: the teacher path.
    Identity,
    /// `sign` forward, Gaussian surrogate derivative backward.
    Sign { gamma: f64 },
    /// `erf(gamma * v)` both ways; a smooth stand-in used for gradient checks.
    Erf { gamma: f64 },
}

impl Quantizer {
    fn value<T: Real>(self, v: T) -> T {
        match self {
            Quantizer::Identity => v,
            Quantizer::Sign { .. } => {
                if v >= T::zero() {
                    T::one()
                } else {
                    -T::one()
                }
            }
            Quantizer::Erf { gamma } => T::from_f64(libm::erf(gamma * v.to_f64_lossy())),
        }
    }

    fn derivative<T: Real>(self, v: T) -> T {
        match self {
            Quantizer::Identity => T::one(),
            Quantizer::Sign { gamma } | Quantizer::Erf { gamma } => {
                T::from_f64(sign_grad(v.to_f64_lossy(), gamma))
            }
        }
    }
}

/// `(2 gamma / sqrt(pi)) exp(-(gamma phi)^2)`: the derivative of
/// `erf(gamma phi)`, used in place of the derivative of `sign`.
pub fn sign_grad(phi: f64, gamma: f64) -> f64 {
    2.0 * gamma / std::f64::consts::PI.sqrt() * (-(gamma * phi).powi(2)).exp()
}

/// `-ln sigma(pos - neg)` with partials with respect to `pos` and `neg`.
pub fn bpr_pair_loss<T: Real>(pos: T, neg: T) -> (T, T, T) {
    let delta = pos - neg;
    let g = log_sigmoid_grad(delta);
    (-log_sigmoid(delta), -g, g)
}

/// Which objective terms are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    pub bpr: bool,
    pub id1: bool,
    pub id2: bool,
    pub synth: bool,
}

/// Objective term values for one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveTerms {
    pub bpr: f64,
    pub id1: f64,
    pub id2: f64,
    pub reg: f64,
    pub total: f64,
}

impl ObjectiveTerms {
    pub fn all_finite(&self) -> bool {
        [self.bpr, self.id1, self.id2, self.reg, self.total]
            .iter()
            .all(|x| x.is_finite())
    }

    /// Name of the first non-finite term.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("bpr", self.bpr),
            ("id1", self.id1),
            ("id2", self.id2),
            ("reg", self.reg),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Key of one batch's random substreams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchKey {
    pub seed: u64,
    pub epoch: u64,
    pub batch: u64,
}

/// Everything the loss needs besides the base table.
pub struct Objective<'a> {
    pub ds: &'a Dataset,
    pub adj: &'a NormalizedAdjacency,
    pub weights: &'a LayerWeights,
    pub num_layers: usize,
    pub quantizer: Quantizer,
    pub terms: Terms,
    pub cache: Option<&'a DistillCache>,
    pub ranking: RankingWeightParams,
    /// Normalizer of the pseudo-positive loss.
    pub pseudo_positives: usize,
    pub candidates: usize,
    pub mix_bound: f64,
    pub reg: f64,
}

struct PairOut<T> {
    loss: T,
    /// d loss / d (pos - neg), already divided by the batch size.
    g: T,
    neg: SynthesizedNegative<T>,
}

struct UserOut<T> {
    u: u32,
    id1: T,
    id2: T,
    /// `[layer][k]` partials for the ranked interacted / pseudo-positive lists.
    g1: Vec<Vec<T>>,
    g2: Vec<Vec<T>>,
}

impl Objective<'_> {
    /// Layer outputs of the forward pass and their reconstructions.
    pub fn forward<T: Real>(&self, base: &Matrix<T>) -> Result<(LayerEmbeddings<T>, LayerEmbeddings<T>)> {
        let layers = if self.num_layers == 0 {
            if !base.all_finite() {
                return Err(Error::Numeric("non-finite value in base embeddings".into()));
            }
            LayerEmbeddings::from_layers(vec![base.clone()], self.ds.num_users())?
        } else {
            propagate(base, self.adj, self.num_layers)?
        };
        let recon = match self.quantizer {
            Quantizer::Identity => layers.clone(),
            q => {
                let rec = layers
                    .layers()
                    .iter()
                    .map(|m| {
                        let mut out = Matrix::zeros(m.rows(), m.cols());
                        out.as_mut_slice()
                            .par_chunks_mut(m.cols().max(1))
                            .enumerate()
                            .for_each(|(x, dst)| {
                                let v = m.row(x);
                                let alpha = embedding_scaler(v);
                                for (o, &vj) in dst.iter_mut().zip(v) {
                                    *o = alpha * q.value(vj);
                                }
                            });
                        out
                    })
                    .collect();
                LayerEmbeddings::from_layers(rec, self.ds.num_users())?
            }
        };
        Ok((layers, recon))
    }

    /// Student (or teacher) score of `(u, i)`: `sum_l w_l^2 <r_u, r_i>`.
    pub fn score<T: Real>(&self, recon: &LayerEmbeddings<T>, u: u32, i: u32) -> T {
        let w2 = self.weights.squared::<T>();
        (0..=self.num_layers)
            .map(|l| w2[l] * dot(recon.user(u, l), recon.item(i, l)))
            .fold(T::zero(), |a, b| a + b)
    }

    /// Evaluates the batch objective; when `grad` is given, writes the
    /// gradient with respect to `base` into it (overwriting).
    pub fn evaluate<T: Real>(
        &self,
        base: &Matrix<T>,
        pairs: &[(u32, u32)],
        key: BatchKey,
        grad: Option<&mut Matrix<T>>,
    ) -> Result<ObjectiveTerms> {
        let (layers, recon) = self.forward(base)?;
        let l1 = self.num_layers + 1;
        let w2 = self.weights.squared::<T>();
        let want_grad = grad.is_some();
        let mut g_rec: Vec<Matrix<T>> = if want_grad {
            (0..l1).map(|_| Matrix::zeros(base.rows(), base.cols())).collect()
        } else {
            Vec::new()
        };
        let m = self.ds.num_users();
        let mut terms = ObjectiveTerms::default();

        if self.terms.bpr && !pairs.is_empty() {
            let inv_b = T::one() / T::from_f64(pairs.len() as f64);
            let outs: Vec<Option<PairOut<T>>> = pairs
                .par_iter()
                .enumerate()
                .map(|(k, &(u, i))| self.pair(&recon, &w2, u, i, key, k as u64, inv_b))
                .collect::<Result<_>>()?;
            let mut total = T::zero();
            for ((u, i), out) in pairs.iter().zip(&outs) {
                let Some(o) = out else { continue };
                total = total + o.loss;
                if !want_grad {
                    continue;
                }
                let (un, inode) = (*u as usize, m + *i as usize);
                for l in 0..l1 {
                    let c = o.g * w2[l];
                    let (ru, ri) = (recon.node(un, l), recon.node(inode, l));
                    let g = &mut g_rec[l];
                    let neg = &o.neg.layers[l];
                    let beta = &o.neg.betas[l];
                    for (t, dst) in g.row_mut(un).iter_mut().enumerate() {
                        *dst = *dst + c * (ri[t] - neg[t]);
                    }
                    for (t, dst) in g.row_mut(inode).iter_mut().enumerate() {
                        *dst = *dst + c * (T::one() - beta[t]) * ru[t];
                    }
                    let jn = m + o.neg.sources[l] as usize;
                    for (t, dst) in g.row_mut(jn).iter_mut().enumerate() {
                        *dst = *dst - c * (T::one() - beta[t]) * ru[t];
                    }
                }
            }
            terms.bpr = (total * inv_b).to_f64_lossy();
        }

        if (self.terms.id1 || self.terms.id2) && !pairs.is_empty() {
            let cache = self
                .cache
                .ok_or_else(|| Error::Contract("distillation terms need a teacher cache".into()))?;
            let mut users: Vec<u32> = pairs.iter().map(|p| p.0).collect();
            users.sort_unstable();
            users.dedup();
            let inv_u = T::one() / T::from_f64(users.len() as f64);
            let outs: Vec<UserOut<T>> = users
                .par_iter()
                .map(|&u| self.user_distill(&recon, &w2, cache, u))
                .collect();
            let (mut id1, mut id2) = (T::zero(), T::zero());
            for o in &outs {
                id1 = id1 + o.id1;
                id2 = id2 + o.id2;
                if !want_grad {
                    continue;
                }
                let un = o.u as usize;
                for l in 0..l1 {
                    let lists = [
                        (cache.ranked_interacted(o.u, l), &o.g1),
                        (cache.pseudo_positives().get(o.u, l), &o.g2),
                    ];
                    for (items, grads) in lists {
                        let Some(gl) = grads.get(l) else { continue };
                        for (&i, &gs) in items.iter().zip(gl) {
                            let c = gs * inv_u * w2[l];
                            let inode = m + i as usize;
                            let (ru, ri) = (recon.node(un, l), recon.node(inode, l));
                            let g = &mut g_rec[l];
                            axpy(g.row_mut(un), ri, c);
                            axpy(g.row_mut(inode), ru, c);
                        }
                    }
                }
            }
            terms.id1 = (id1 * inv_u).to_f64_lossy();
            terms.id2 = (id2 * inv_u).to_f64_lossy();
        }

        let lambda = T::from_f64(self.reg);
        terms.reg = (lambda * base.sum_squares()).to_f64_lossy();
        terms.total = terms.bpr + terms.id1 + terms.id2 + terms.reg;

        if let Some(grad) = grad {
            let out = self.backward(&layers, g_rec)?;
            *grad = out;
            grad.add_scaled(base, lambda + lambda);
            if !grad.all_finite() {
                let term = terms.first_non_finite().unwrap_or("backward pass");
                return Err(Error::Numeric(format!("non-finite gradient ({term})")));
            }
        }
        Ok(terms)
    }

    #[allow(clippy::too_many_arguments)]
    fn pair<T: Real>(
        &self,
        recon: &LayerEmbeddings<T>,
        w2: &[T],
        u: u32,
        i: u32,
        key: BatchKey,
        k: u64,
        inv_b: T,
    ) -> Result<Option<PairOut<T>>> {
        let mut rng = substream(key.seed, "negative", &[key.epoch, key.batch, k]);
        let neg = if self.terms.synth {
            let cfg = SynthConfig {
                candidates: self.candidates,
                mix_bound: self.mix_bound,
                rng_seed: key.seed,
            };
            synthesize(recon, self.ds, u, i, &cfg, &mut rng)?
        } else {
            draw_candidates(self.ds, u, 1, &mut rng)
                .items
                .first()
                .map(|&j| SynthesizedNegative::real_item(recon, j))
        };
        let Some(neg) = neg else { return Ok(None) };
        let mut pos = T::zero();
        let mut negs = T::zero();
        for l in 0..=self.num_layers {
            let ru = recon.user(u, l);
            pos = pos + w2[l] * dot(ru, recon.item(i, l));
            negs = negs + w2[l] * dot(ru, &neg.layers[l]);
        }
        let (loss, dpos, _) = bpr_pair_loss(pos, negs);
        Ok(Some(PairOut {
            loss,
            g: dpos * inv_b,
            neg,
        }))
    }

    fn user_distill<T: Real>(&self, recon: &LayerEmbeddings<T>, w2: &[T], cache: &DistillCache, u: u32) -> UserOut<T> {
        let l1 = self.num_layers + 1;
        let scores = |items: &[u32], l: usize| -> Vec<T> {
            let ru = recon.user(u, l);
            items.iter().map(|&i| w2[l] * dot(ru, recon.item(i, l))).collect()
        };
        let mut out = UserOut {
            u,
            id1: T::zero(),
            id2: T::zero(),
            g1: Vec::new(),
            g2: Vec::new(),
        };
        if self.terms.id1 {
            let s: Vec<Vec<T>> = (0..l1).map(|l| scores(cache.ranked_interacted(u, l), l)).collect();
            let n = cache.ranked_interacted(u, 0).len();
            let loss = ranked_log_sigmoid_loss(&s, n, &self.ranking);
            out.id1 = loss.value;
            out.g1 = loss.grads;
        }
        if self.terms.id2 {
            let pp = cache.pseudo_positives();
            let s: Vec<Vec<T>> = (0..l1).map(|l| scores(pp.get(u, l), l)).collect();
            let loss = ranked_log_sigmoid_loss(&s, self.pseudo_positives, &self.ranking);
            out.id2 = loss.value;
            out.g2 = loss.grads;
        }
        out
    }

    /// Maps gradients with respect to reconstructions back to the base table.
    fn backward<T: Real>(&self, layers: &LayerEmbeddings<T>, g_rec: Vec<Matrix<T>>) -> Result<Matrix<T>> {
        let q = self.quantizer;
        let d = layers.dim();
        let g_layers: Vec<Matrix<T>> = match q {
            Quantizer::Identity => g_rec,
            _ => g_rec
                .into_iter()
                .enumerate()
                .map(|(l, mut g)| {
                    let v = layers.layer(l);
                    let inv_d = T::one() / T::from_f64(d as f64);
                    g.as_mut_slice()
                        .par_chunks_mut(d.max(1))
                        .enumerate()
                        .for_each(|(x, gr)| {
                            if gr.iter().all(|&t| t == T::zero()) {
                                return;
                            }
                            let vx = v.row(x);
                            let alpha = embedding_scaler(vx);
                            // through alpha: (sum_j g_j q_j) * sign(v_k) / d
                            let s = gr
                                .iter()
                                .zip(vx)
                                .fold(T::zero(), |acc, (&gj, &vj)| acc + gj * q.value(vj));
                            for (gk, &vk) in gr.iter_mut().zip(vx) {
                                let sgn = if vk >= T::zero() { T::one() } else { -T::one() };
                                *gk = s * sgn * inv_d + alpha * q.derivative(vk) * *gk;
                            }
                        });
                    g
                })
                .collect(),
        };
        // base gradient = sum_l A^l G_l, by Horner's scheme
        let mut iter = g_layers.into_iter().rev();
        let mut acc = iter.next().expect("at least one layer");
        for g in iter {
            let mut next = Matrix::zeros(acc.rows(), acc.cols());
            self.adj.spmm(&acc, &mut next);
            next.add_scaled(&g, T::one());
            acc = next;
        }
        Ok(acc)
    }
}
