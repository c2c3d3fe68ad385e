//! Ranking metrics and the walk-based feature enrichment analysis.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{build_normalized_adjacency, Dataset};
use crate::inference::{top_k, Scorer};

pub const DEFAULT_KS: [usize; 5] = [20, 40, 60, 80, 100];

/// Longest walk length accepted by [`enrichment_analytic`].
pub const MAX_WALK: usize = 4;

/// Largest graph accepted by [`enrichment_oracle`].
pub const ORACLE_MAX_NODES: usize = 200;

/// `|top-K ∩ relevant| / |relevant|`; `None` when nothing is relevant.
/// `relevant` must be sorted.
pub fn recall_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    Some(hits(ranked, relevant, k) as f64 / relevant.len() as f64)
}

/// Binary-relevance NDCG with a `1 / log2(rank + 1)` discount, 1-based ranks.
pub fn ndcg_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(pos, _)| discount(pos))
        .sum();
    let ideal: f64 = (0..relevant.len().min(k)).map(discount).sum();
    Some(dcg / ideal)
}

#[inline]
fn discount(pos: usize) -> f64 {
    1.0 / ((pos + 2) as f64).log2()
}

fn hits(ranked: &[u32], relevant: &[u32], k: usize) -> usize {
    ranked.iter().take(k).filter(|i| relevant.binary_search(i).is_ok()).count()
}

/// Metrics averaged over evaluable users.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub users: usize,
}

impl MetricReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.recall[p])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.ndcg[p])
    }

    /// Columns `k,recall,ndcg,users`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,recall,ndcg,users\n");
        for (p, k) in self.ks.iter().enumerate() {
            out.push_str(&format!("{k},{:.6},{:.6},{}\n", self.recall[p], self.ndcg[p], self.users));
        }
        out
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6}  {:>9}  {:>9}", "K", "Recall", "NDCG")?;
        for (p, k) in self.ks.iter().enumerate() {
            writeln!(f, "{k:>6}  {:>9.4}  {:>9.4}", self.recall[p], self.ndcg[p])?;
        }
        write!(f, "users evaluated: {}", self.users)
    }
}

/// Ranks all items for every user with a non-empty `relevant` list,
/// skipping that user's `exclude` items, and averages Recall/NDCG at each K.
/// Per-user work runs in parallel; the reduction is in user order.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    relevant: &[Vec<u32>],
    exclude: &[Vec<u32>],
    ks: &[usize],
) -> Result<MetricReport> {
    if ks.is_empty() {
        return Err(Error::Contract("no cutoffs requested".into()));
    }
    let kmax = *ks.iter().max().unwrap();
    let users: Vec<usize> = (0..relevant.len().min(scorer.num_users()))
        .filter(|&u| !relevant[u].is_empty())
        .collect();
    let per_user: Vec<(Vec<f64>, Vec<f64>)> = users
        .par_iter()
        .map_init(
            || vec![0f32; scorer.num_items()],
            |scores, &u| {
                scorer.score_user(u as u32, scores);
                let ex = exclude.get(u).map_or(&[][..], Vec::as_slice);
                let ranked = top_k(scores, kmax, ex).items;
                let rel = &relevant[u];
                (
                    ks.iter().map(|&k| recall_at_k(&ranked, rel, k).unwrap()).collect(),
                    ks.iter().map(|&k| ndcg_at_k(&ranked, rel, k).unwrap()).collect(),
                )
            },
        )
        .collect();
    let n = per_user.len();
    let mut recall = vec![0.0; ks.len()];
    let mut ndcg = vec![0.0; ks.len()];
    for (r, g) in &per_user {
        for p in 0..ks.len() {
            recall[p] += r[p];
            ndcg[p] += g[p];
        }
    }
    if n > 0 {
        recall.iter_mut().chain(ndcg.iter_mut()).for_each(|x| *x /= n as f64);
    }
    Ok(MetricReport {
        ks: ks.to_vec(),
        recall,
        ndcg,
        users: n,
    })
}

/// Test-split evaluation: relevant = test items, train items excluded.
pub fn evaluate_test<S: Scorer + ?Sized>(scorer: &S, ds: &Dataset, ks: &[usize]) -> Result<MetricReport> {
    evaluate(scorer, ds.test_lists(), ds.train_lists(), ks)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnrichmentResult {
    pub user: usize,
    pub node: usize,
    pub layer: usize,
    pub analytic: f64,
    pub oracle: f64,
}

/// `d * sqrt(deg(u) / deg(x)) * sum over l-step walks x -> u of
/// prod_{k=1..l} 1 / deg(x_k)`, where `x_k` are the nodes visited after `x`
/// (`x_l = u`). Node ids cover users then items. Walks are enumerated
/// depth-first.
pub fn enrichment_analytic(ds: &Dataset, u: usize, x: usize, l: usize, d: usize) -> Result<f64> {
    check_nodes(ds, &[u, x])?;
    if l > MAX_WALK {
        return Err(Error::Capacity(format!("walk length {l} exceeds {MAX_WALK}")));
    }
    if l == 0 {
        return Ok(if u == x { d as f64 } else { 0.0 });
    }
    let (du, dx) = (ds.degree(u), ds.degree(x));
    if du == 0 || dx == 0 {
        return Ok(0.0);
    }
    let neighbours: Vec<Vec<usize>> = (0..ds.num_nodes()).map(|n| ds.neighbours(n)).collect();
    let walks = walk_sum(&neighbours, x, u, l);
    Ok(d as f64 * (du as f64 / dx as f64).sqrt() * walks)
}

fn walk_sum(neighbours: &[Vec<usize>], at: usize, target: usize, left: usize) -> f64 {
    if left == 0 {
        return if at == target { 1.0 } else { 0.0 };
    }
    neighbours[at]
        .iter()
        .map(|&next| walk_sum(neighbours, next, target, left - 1) / neighbours[next].len() as f64)
        .sum()
}

/// `d * |(A^l)[u, x]|` for the symmetric-normalized adjacency `A`, i.e. the
/// L1 norm of the Jacobian of node `u`'s layer-`l` embedding with respect to
/// node `x`'s base embedding. Dense, for graphs up to
/// [`ORACLE_MAX_NODES`] nodes.
pub fn enrichment_oracle(ds: &Dataset, u: usize, x: usize, l: usize, d: usize) -> Result<f64> {
    check_nodes(ds, &[u, x])?;
    let n = ds.num_nodes();
    if n > ORACLE_MAX_NODES {
        return Err(Error::Capacity(format!(
            "dense oracle limited to {ORACLE_MAX_NODES} nodes, graph has {n}"
        )));
    }
    let a = build_normalized_adjacency(ds)?.to_dense();
    // row u of A^l
    let mut row: Vec<f64> = (0..n).map(|c| if c == u { 1.0 } else { 0.0 }).collect();
    for _ in 0..l {
        row = (0..n).map(|c| (0..n).map(|k| row[k] * a[k][c]).sum()).collect();
    }
    Ok(d as f64 * row[x].abs())
}

pub fn enrichment(ds: &Dataset, u: usize, x: usize, l: usize, d: usize) -> Result<EnrichmentResult> {
    Ok(EnrichmentResult {
        user: u,
        node: x,
        layer: l,
        analytic: enrichment_analytic(ds, u, x, l, d)?,
        oracle: enrichment_oracle(ds, u, x, l, d)?,
    })
}

fn check_nodes(ds: &Dataset, nodes: &[usize]) -> Result<()> {
    match nodes.iter().find(|&&n| n >= ds.num_nodes()) {
        Some(n) => Err(Error::Lookup(format!("node {n} of {}", ds.num_nodes()))),
        None => Ok(()),
    }
}
