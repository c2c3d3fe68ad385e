//! Light graph convolution: `layer[l] = adjacency * layer[l - 1]`, with no
//! self-loops, feature transforms or nonlinearities.

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::matrix::{Matrix, Real};

/// Per-layer embeddings of every node, layers `0..=L`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerEmbeddings<T = f32> {
    layers: Vec<Matrix<T>>,
    num_users: usize,
}

impl<T: Real> LayerEmbeddings<T> {
    pub fn from_layers(layers: Vec<Matrix<T>>, num_users: usize) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::Contract("at least one layer is required".into()));
        };
        let shape = (first.rows(), first.cols());
        if layers.iter().any(|m| (m.rows(), m.cols()) != shape) || num_users > shape.0 {
            return Err(Error::Contract("inconsistent layer shapes".into()));
        }
        Ok(Self { layers, num_users })
    }

    /// Number of convolution layers `L` (there are `L + 1` matrices).
    pub fn num_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn num_nodes(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_nodes() - self.num_users
    }

    pub fn layer(&self, l: usize) -> &Matrix<T> {
        &self.layers[l]
    }

    pub fn layers(&self) -> &[Matrix<T>] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Matrix<T>> {
        self.layers
    }

    pub fn base(&self) -> &Matrix<T> {
        &self.layers[0]
    }

    #[inline]
    pub fn user(&self, u: u32, l: usize) -> &[T] {
        self.layers[l].row(u as usize)
    }

    #[inline]
    pub fn item(&self, i: u32, l: usize) -> &[T] {
        self.layers[l].row(self.num_users + i as usize)
    }

    #[inline]
    pub fn node(&self, x: usize, l: usize) -> &[T] {
        self.layers[l].row(x)
    }
}

pub fn propagate<T: Real>(
    base: &Matrix<T>,
    adj: &NormalizedAdjacency,
    num_layers: usize,
) -> Result<LayerEmbeddings<T>> {
    if num_layers == 0 {
        return Err(Error::Contract("propagation needs at least one layer".into()));
    }
    if base.rows() != adj.num_nodes() {
        return Err(Error::Contract(format!(
            "base table has {} rows for {} nodes",
            base.rows(),
            adj.num_nodes()
        )));
    }
    if !base.all_finite() {
        return Err(Error::Numeric("non-finite value in base embeddings".into()));
    }
    let mut layers = Vec::with_capacity(num_layers + 1);
    layers.push(base.clone());
    for l in 1..=num_layers {
        let mut next = Matrix::zeros(base.rows(), base.cols());
        adj.spmm(&layers[l - 1], &mut next);
        if !next.all_finite() {
            return Err(Error::Numeric(format!("non-finite value at layer {l}")));
        }
        layers.push(next);
    }
    Ok(LayerEmbeddings {
        layers,
        num_users: adj.num_users(),
    })
}

/// Per-layer weights for score fusion, `w_l = (l + 1) / sum_k (k + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights(Vec<f32>);

impl LayerWeights {
    pub fn from_vec(w: Vec<f32>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::Contract("layer weights must be positive and finite".into()));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn get(&self, l: usize) -> f32 {
        self.0[l]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `w_l^2` for every layer, in the requested precision.
    pub fn squared<T: Real>(&self) -> Vec<T> {
        self.0
            .iter()
            .map(|&w| T::from_f64(w as f64 * w as f64))
            .collect()
    }
}

pub fn layer_weights(num_layers: usize) -> LayerWeights {
    let total = ((num_layers + 1) * (num_layers + 2) / 2) as f64;
    LayerWeights(
        (0..=num_layers)
            .map(|l| ((l + 1) as f64 / total) as f32)
            .collect(),
    )
}

/// Concatenation of `w_l * v^{(l)}` over layers, layer-major.
pub fn fuse_full<T: Real>(le: &LayerEmbeddings<T>, w: &LayerWeights, node: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(le.layers.len() * le.dim());
    for (l, layer) in le.layers.iter().enumerate() {
        let wl = T::from_f64(w.get(l) as f64);
        out.extend(layer.row(node).iter().map(|&x| wl * x));
    }
    out
}
