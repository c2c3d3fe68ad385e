//! Binarized graph collaborative filtering.
//!
//! Full-precision light graph convolution produces per-layer embeddings; each
//! layer is then sign-quantized with an L1 scaler so that user/item matching
//! reduces to XNOR and popcount over packed `u64` words. A full-precision
//! teacher is trained first and distilled into the binarized student.

pub mod activation;
pub mod distill;
pub mod error;
pub mod eval;
pub mod graph;
pub mod inference;
pub mod matrix;
pub mod propagation;
pub mod quantize;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{Dataset, NormalizedAdjacency};
pub use matrix::{Matrix, Real};
pub use propagation::{LayerEmbeddings, LayerWeights};
pub use quantize::{BinarizedModel, BinarizedTable};
pub use trainer::{TeacherModel, TrainConfig};
