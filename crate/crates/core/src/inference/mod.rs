//! Matching scores (float and XNOR/popcount forms), Top-K retrieval and
//! operation accounting.

pub mod bench;
mod kernel;
mod scorer;
mod topk;

use crate::error::{Error, Result};
use crate::matrix::{dot, Real};
use crate::propagation::LayerWeights;
use crate::quantize::BinarizedTable;

pub use kernel::{dot_pm1_bitwise, dot_pm1_with, hardware_available, popcount_portable, Popcount};
pub use scorer::{BitwiseScorer, FusedScorer, Scorer};
pub use topk::{top_k, top_k_for_user, TopK};

/// Per-layer segment scores and their sum.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreBreakdown {
    pub segments: Vec<f32>,
    pub total: f32,
}

pub fn score_bitwise(
    u: u32,
    i: u32,
    table: &BinarizedTable,
    w: &LayerWeights,
) -> Result<ScoreBreakdown> {
    if w.len() != table.num_layers() + 1 {
        return Err(Error::Contract(format!(
            "{} layer weights for {} layers",
            w.len(),
            table.num_layers() + 1
        )));
    }
    let (un, inode) = (table.user_node(u)?, table.item_node(i)?);
    let segments: Vec<f32> = (0..=table.num_layers())
        .map(|l| {
            let d = dot_pm1_bitwise(table.bits(un, l), table.bits(inode, l))
                .expect("rows of one table share a dim");
            let wl = w.get(l);
            wl * wl * table.scaler(un, l) * table.scaler(inode, l) * d as f32
        })
        .collect();
    let total = segments.iter().sum();
    Ok(ScoreBreakdown { segments, total })
}

/// Inner product of two fused vectors.
pub fn score_full<T: Real>(u_vec: &[T], i_vec: &[T]) -> Result<T> {
    if u_vec.len() != i_vec.len() {
        return Err(Error::Contract(format!(
            "fused lengths differ: {} vs {}",
            u_vec.len(),
            i_vec.len()
        )));
    }
    Ok(dot(u_vec, i_vec))
}

/// Operation counts for scoring every (user, item) pair once.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpCount {
    pub flop: u64,
    pub bop: u64,
}

/// Per pair and layer: one integer-to-float conversion, two multiplies by the
/// scaler/weight product, one accumulate (4 FLOPs); XNOR and popcount over
/// `d` bits (`2d` BOPs).
pub fn count_ops(num_users: u64, num_items: u64, num_layers: u64, dim: u64) -> OpCount {
    let pairs_layers = num_users * num_items * (num_layers + 1);
    OpCount {
        flop: 4 * pairs_layers,
        bop: 2 * pairs_layers * dim,
    }
}
