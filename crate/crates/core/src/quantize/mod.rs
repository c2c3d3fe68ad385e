//! Layer-wise 1-bit quantization.
//!
//! Every layer vector `v` of every node becomes a packed sign pattern `q` and
//! a scaler `alpha = ||v||_1 / d`, so that `v ≈ alpha * q`.

mod bits;
mod model_file;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};
use crate::propagation::LayerEmbeddings;

pub use bits::{pack_signs_into, sign_quantize, words_for, BitsRef, PackedBits};
pub use model_file::{BinarizedModel, MODEL_MAGIC, MODEL_VERSION};

/// Mean absolute value, accumulated in `f64`.
pub fn embedding_scaler<T: Real>(v: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    let sum: f64 = v.iter().map(|x| x.abs().to_f64_lossy()).sum();
    T::from_f64(sum / v.len() as f64)
}

/// Scalers and packed codes for every node and layer.
///
/// Storage is node-major: node `x`, layer `l` lives at row `x * (L + 1) + l`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarizedTable {
    num_users: usize,
    num_items: usize,
    num_layers: usize,
    dim: usize,
    scalers: Vec<f32>,
    words: Vec<u64>,
}

impl BinarizedTable {
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        num_layers: usize,
        dim: usize,
        scalers: Vec<f32>,
        words: Vec<u64>,
    ) -> Result<Self> {
        let rows = (num_users + num_items) * (num_layers + 1);
        if scalers.len() != rows || words.len() != rows * words_for(dim) {
            return Err(Error::Contract("binarized table size mismatch".into()));
        }
        if scalers.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Contract("scalers must be finite and non-negative".into()));
        }
        let table = Self {
            num_users,
            num_items,
            num_layers,
            dim,
            scalers,
            words,
        };
        for r in 0..rows {
            table.row_bits(r).check()?;
        }
        Ok(table)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// `L`; each node has `L + 1` segments.
    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words_per_row(&self) -> usize {
        words_for(self.dim)
    }

    pub fn scalers(&self) -> &[f32] {
        &self.scalers
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    fn row_index(&self, node: usize, l: usize) -> usize {
        node * (self.num_layers + 1) + l
    }

    #[inline]
    fn row_bits(&self, row: usize) -> BitsRef<'_> {
        let wpr = self.words_per_row();
        BitsRef {
            words: &self.words[row * wpr..(row + 1) * wpr],
            dim: self.dim,
        }
    }

    #[inline]
    pub fn scaler(&self, node: usize, l: usize) -> f32 {
        self.scalers[self.row_index(node, l)]
    }

    #[inline]
    pub fn bits(&self, node: usize, l: usize) -> BitsRef<'_> {
        self.row_bits(self.row_index(node, l))
    }

    /// All `L + 1` scalers of one node.
    #[inline]
    pub fn node_scalers(&self, node: usize) -> &[f32] {
        let s = node * (self.num_layers + 1);
        &self.scalers[s..s + self.num_layers + 1]
    }

    /// All `(L + 1) * words_per_row` words of one node, layer-major.
    #[inline]
    pub fn node_words(&self, node: usize) -> &[u64] {
        let span = (self.num_layers + 1) * self.words_per_row();
        &self.words[node * span..(node + 1) * span]
    }

    pub fn user_node(&self, u: u32) -> Result<usize> {
        if (u as usize) < self.num_users {
            Ok(u as usize)
        } else {
            Err(Error::Lookup(format!("user {u} (table has {})", self.num_users)))
        }
    }

    pub fn item_node(&self, i: u32) -> Result<usize> {
        if (i as usize) < self.num_items {
            Ok(self.num_users + i as usize)
        } else {
            Err(Error::Lookup(format!("item {i} (table has {})", self.num_items)))
        }
    }

    /// `alpha * q` for one node and layer.
    pub fn reconstruct(&self, node: usize, l: usize) -> Vec<f32> {
        let a = self.scaler(node, l);
        let bits = self.bits(node, l);
        (0..self.dim).map(|j| if bits.bit(j) { a } else { -a }).collect()
    }

    /// Dense `alpha * q` matrices, one per layer.
    pub fn reconstruct_layers(&self) -> Vec<Matrix<f32>> {
        (0..=self.num_layers)
            .map(|l| {
                let mut m = Matrix::zeros(self.num_nodes(), self.dim);
                for x in 0..self.num_nodes() {
                    m.row_mut(x).copy_from_slice(&self.reconstruct(x, l));
                }
                m
            })
            .collect()
    }
}

pub fn build_binarized_tables(le: &LayerEmbeddings<f32>) -> Result<BinarizedTable> {
    let (nodes, layers, dim) = (le.num_nodes(), le.num_layers() + 1, le.dim());
    let wpr = words_for(dim);
    if le.layers().iter().any(|m| !m.all_finite()) {
        return Err(Error::Numeric("non-finite layer embeddings".into()));
    }
    let mut scalers = vec![0f32; nodes * layers];
    let mut words = vec![0u64; nodes * layers * wpr];
    scalers
        .par_chunks_mut(layers)
        .zip(words.par_chunks_mut(layers * wpr.max(1)))
        .enumerate()
        .for_each(|(x, (sc, wd))| {
            for l in 0..layers {
                let v = le.node(x, l);
                sc[l] = embedding_scaler(v);
                pack_signs_into(v, &mut wd[l * wpr..(l + 1) * wpr]);
            }
        });
    BinarizedTable::from_parts(
        le.num_users(),
        le.num_items(),
        le.num_layers(),
        dim,
        scalers,
        words,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_node(layers: Vec<Vec<f32>>) -> LayerEmbeddings<f32> {
        let d = layers[0].len();
        LayerEmbeddings::from_layers(
            layers.into_iter().map(|v| Matrix::from_vec(1, d, v)).collect(),
            1,
        )
        .unwrap()
    }

    #[test]
    fn scaler_is_mean_abs() {
        assert!((embedding_scaler(&[-0.3f32, 0.7]) - 0.5).abs() < 1e-7);
        assert_eq!(embedding_scaler(&[0.0f32; 4]), 0.0);
    }

    #[test]
    fn scaler_matches_f64_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f32> = (0..256).map(|_| rng.random_range(-3.0..3.0)).collect();
        let oracle = v.iter().map(|&x| (x as f64).abs()).sum::<f64>() / 256.0;
        let got = embedding_scaler(&v) as f64;
        assert!((got - oracle).abs() / oracle < 1e-6);
    }

    #[test]
    fn scaler_scale_covariance() {
        let v = [0.25f32, -1.5, 3.0, -0.125];
        assert_eq!(embedding_scaler(&v.map(|x| x * 4.0)), 4.0 * embedding_scaler(&v));
        let c = 3.7f32;
        let lhs = embedding_scaler(&v.map(|x| x * c));
        let rhs = c * embedding_scaler(&v);
        assert!(((lhs - rhs) / rhs).abs() < 1e-6);
    }

    #[test]
    fn pm1_input_reconstructs_exactly() {
        let t = build_binarized_tables(&single_node(vec![vec![1.0, -1.0]])).unwrap();
        assert_eq!(t.scaler(0, 0), 1.0);
        assert_eq!(t.bits(0, 0).to_pm1(), vec![1, -1]);
        assert_eq!(t.reconstruct(0, 0), vec![1.0, -1.0]);

        let t = build_binarized_tables(&single_node(vec![vec![2.0; 4], vec![-2.0; 4]])).unwrap();
        assert_eq!(t.scaler(0, 0), 2.0);
        assert_eq!(t.reconstruct(0, 0), vec![2.0; 4]);
        assert_eq!(t.reconstruct(0, 1), vec![-2.0; 4]);
    }

    #[test]
    fn zero_vector_has_zero_scaler() {
        let t = build_binarized_tables(&single_node(vec![vec![0.0; 3], vec![1.0, 0.0, -1.0]])).unwrap();
        assert_eq!(t.scaler(0, 0), 0.0);
        assert!(t.scaler(0, 1) > 0.0);
    }

    #[test]
    fn l1_scaler_beats_probe_scalers() {
        // For a fixed sign pattern s, ||v - c s||_2 is minimized at c = mean|v|.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let nodes = 10;
        let layers: Vec<Matrix<f32>> = (0..3)
            .map(|_| Matrix::from_fn(nodes, 64, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let le = LayerEmbeddings::from_layers(layers, 4).unwrap();
        let t = build_binarized_tables(&le).unwrap();
        let err = |v: &[f32], c: f32, q: &[i8]| -> f64 {
            v.iter()
                .zip(q)
                .map(|(&x, &s)| ((x - c * s as f32) as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        for x in 0..nodes {
            for l in 0..3 {
                let v = le.node(x, l);
                let q = t.bits(x, l).to_pm1();
                let best = err(v, t.scaler(x, l), &q);
                for _ in 0..20 {
                    let c = rng.random_range(0.01f32..3.0);
                    assert!(best <= err(v, c, &q) + 1e-6);
                }
            }
        }
    }

    #[test]
    fn table_layout_and_lookup() {
        let layers = vec![
            Matrix::from_vec(3, 2, vec![1.0f32, -1.0, -2.0, 2.0, 0.5, 0.5]),
            Matrix::from_vec(3, 2, vec![-1.0f32, -1.0, 3.0, 1.0, 0.0, -4.0]),
        ];
        let le = LayerEmbeddings::from_layers(layers, 2).unwrap();
        let t = build_binarized_tables(&le).unwrap();
        assert_eq!((t.num_users(), t.num_items(), t.num_layers()), (2, 1, 1));
        assert_eq!(t.node_scalers(1), &[2.0, 2.0]);
        assert_eq!(t.bits(2, 1).to_pm1(), vec![1, -1]);
        assert_eq!(t.item_node(0).unwrap(), 2);
        assert!(matches!(t.item_node(1), Err(Error::Lookup(_))));
        assert!(matches!(t.user_node(2), Err(Error::Lookup(_))));
    }
}
