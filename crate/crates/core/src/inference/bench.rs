//! Full-corpus scoring benchmark: bitwise path vs float path on one model.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{count_ops, BitwiseScorer, FusedScorer, Scorer};
use crate::quantize::BinarizedModel;

pub const CSV_HEADER: &str = "scorer,queries,wall_ms,flop,bop";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub scorer: &'static str,
    pub queries: usize,
    /// Mean wall time of one pass over all queries.
    pub wall_ms: f64,
    pub flop: u64,
    pub bop: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub model_bytes: usize,
    /// Size of an equivalent single full-precision `f32` table, `4 (M + N) d`.
    pub full_precision_bytes: usize,
}

impl BenchReport {
    /// How many times smaller the serialized model is than the full-precision table.
    pub fn compression(&self) -> f64 {
        self.full_precision_bytes as f64 / self.model_bytes as f64
    }

    pub fn row(&self, scorer: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.scorer == scorer)
    }

    /// Float-path wall time over bitwise-path wall time.
    pub fn speedup(&self) -> Option<f64> {
        let (b, f) = (self.row("bitwise")?, self.row("float")?);
        (b.wall_ms > 0.0).then(|| f.wall_ms / b.wall_ms)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.3},{},{}", r.scorer, r.queries, r.wall_ms, r.flop, r.bop);
        }
        out
    }
}

/// Scores `queries` random users against every item with both scorers,
/// `repeat` times each, single-threaded. `queries == 0` yields no rows.
pub fn bench_scoring(model: &BinarizedModel, queries: usize, repeat: usize, seed: u64) -> BenchReport {
    let t = &model.table;
    let (m, n, l, d) = (t.num_users(), t.num_items(), t.num_layers(), t.dim());
    let report = |rows| BenchReport {
        rows,
        model_bytes: model.serialized_len(),
        full_precision_bytes: 4 * (m + n) * d,
    };
    if queries == 0 || m == 0 {
        return report(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users: Vec<u32> = (0..queries).map(|_| rng.random_range(0..m as u32)).collect();
    let repeat = repeat.max(1);

    let bitwise = BitwiseScorer::new(t, &model.weights);
    let float = FusedScorer::from_table(t, &model.weights);
    let ops = count_ops(queries as u64, n as u64, l as u64, d as u64);
    let float_flop = 2 * (queries * n * (l + 1) * d) as u64;

    let rows = vec![
        BenchRow {
            scorer: "bitwise",
            queries,
            wall_ms: time_passes(&bitwise, &users, repeat),
            flop: ops.flop,
            bop: ops.bop,
        },
        BenchRow {
            scorer: "float",
            queries,
            wall_ms: time_passes(&float, &users, repeat),
            flop: float_flop,
            bop: 0,
        },
    ];
    report(rows)
}

fn time_passes<S: Scorer>(scorer: &S, users: &[u32], repeat: usize) -> f64 {
    let mut scores = vec![0f32; scorer.num_items()];
    // warm-up pass
    for &u in users.iter().take(8) {
        scorer.score_user(u, &mut scores);
    }
    let start = Instant::now();
    for _ in 0..repeat {
        for &u in users {
            scorer.score_user(black_box(u), &mut scores);
            black_box(&scores);
        }
    }
    start.elapsed().as_secs_f64() * 1e3 / repeat as f64
}
