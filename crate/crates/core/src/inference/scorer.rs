use super::kernel::{pm1_dot, Popcount};
use crate::matrix::dot;
use crate::propagation::{fuse_full, LayerEmbeddings, LayerWeights};
use crate::quantize::BinarizedTable;

/// Scores one user against the whole item corpus.
pub trait Scorer: Sync {
    fn num_users(&self) -> usize;

    fn num_items(&self) -> usize;

    /// Fills `out[i]` with the score of item `i`; `out.len() == num_items()`.
    fn score_user(&self, u: u32, out: &mut [f32]);
}

/// XNOR/popcount scoring over a binarized table:
/// `sum_l w_l^2 * alpha_u * alpha_i * (2 * popcount(XNOR) - d)`.
pub struct BitwiseScorer<'a> {
    table: &'a BinarizedTable,
    w2: Vec<f32>,
    popcount: Popcount,
}

impl<'a> BitwiseScorer<'a> {
    pub fn new(table: &'a BinarizedTable, weights: &LayerWeights) -> Self {
        Self::with_popcount(table, weights, Popcount::detect())
    }

    pub fn with_popcount(table: &'a BinarizedTable, weights: &LayerWeights, popcount: Popcount) -> Self {
        assert_eq!(weights.len(), table.num_layers() + 1, "one weight per layer");
        Self {
            table,
            w2: weights.squared(),
            popcount,
        }
    }

    pub fn table(&self) -> &BinarizedTable {
        self.table
    }
}

impl Scorer for BitwiseScorer<'_> {
    fn num_users(&self) -> usize {
        self.table.num_users()
    }

    fn num_items(&self) -> usize {
        self.table.num_items()
    }

    fn score_user(&self, u: u32, out: &mut [f32]) {
        let t = self.table;
        assert_eq!(out.len(), t.num_items());
        let user = u as usize;
        let coef: Vec<f32> = self
            .w2
            .iter()
            .zip(t.node_scalers(user))
            .map(|(w2, a)| w2 * a)
            .collect();
        let args = ScanArgs {
            table: t,
            coef: &coef,
            user_words: t.node_words(user),
        };
        match self.popcount {
            #[cfg(target_arch = "x86_64")]
            Popcount::Hardware if std::arch::is_x86_feature_detected!("popcnt") => {
                // SAFETY: the popcnt feature was detected at runtime.
                unsafe { scan_popcnt(&args, out) }
            }
            Popcount::Hardware => scan::<true>(&args, out),
            Popcount::Portable => scan::<false>(&args, out),
        }
    }
}

struct ScanArgs<'a> {
    table: &'a BinarizedTable,
    coef: &'a [f32],
    user_words: &'a [u64],
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn scan_popcnt(args: &ScanArgs<'_>, out: &mut [f32]) {
    scan::<true>(args, out)
}

#[inline(always)]
fn scan<const HW: bool>(args: &ScanArgs<'_>, out: &mut [f32]) {
    let t = args.table;
    let (dim, wpr) = (t.dim(), t.words_per_row());
    let base = t.num_users();
    for (i, slot) in out.iter_mut().enumerate() {
        let node = base + i;
        let scalers = t.node_scalers(node);
        let words = t.node_words(node);
        let mut total = 0f32;
        for (l, &c) in args.coef.iter().enumerate() {
            let span = l * wpr..(l + 1) * wpr;
            let d = pm1_dot::<HW>(&args.user_words[span.clone()], &words[span], dim);
            total += c * scalers[l] * d as f32;
        }
        *slot = total;
    }
}

/// Dense inner-product scoring over fused `(L + 1) * d` vectors.
///
/// Built either from full-precision layers (teacher scores) or from the
/// `alpha * q` reconstructions of a binarized table (the float path of the
/// student).
pub struct FusedScorer {
    num_users: usize,
    num_items: usize,
    width: usize,
    fused: Vec<f32>,
}

impl FusedScorer {
    pub fn from_layers(le: &LayerEmbeddings<f32>, weights: &LayerWeights) -> Self {
        let width = (le.num_layers() + 1) * le.dim();
        let mut fused = Vec::with_capacity(le.num_nodes() * width);
        for x in 0..le.num_nodes() {
            fused.extend(fuse_full(le, weights, x));
        }
        Self {
            num_users: le.num_users(),
            num_items: le.num_items(),
            width,
            fused,
        }
    }

    pub fn from_table(table: &BinarizedTable, weights: &LayerWeights) -> Self {
        let width = (table.num_layers() + 1) * table.dim();
        let mut fused = Vec::with_capacity(table.num_nodes() * width);
        for x in 0..table.num_nodes() {
            for l in 0..=table.num_layers() {
                let w = weights.get(l);
                fused.extend(table.reconstruct(x, l).into_iter().map(|v| w * v));
            }
        }
        Self {
            num_users: table.num_users(),
            num_items: table.num_items(),
            width,
            fused,
        }
    }

    pub fn vector(&self, node: usize) -> &[f32] {
        &self.fused[node * self.width..(node + 1) * self.width]
    }
}

impl Scorer for FusedScorer {
    fn num_users(&self) -> usize {
        self.num_users
    }

    fn num_items(&self) -> usize {
        self.num_items
    }

    fn score_user(&self, u: u32, out: &mut [f32]) {
        assert_eq!(out.len(), self.num_items);
        let uv = self.vector(u as usize);
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = dot(uv, self.vector(self.num_users + i));
        }
    }
}
