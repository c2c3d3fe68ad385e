use std::io::{BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::propagation::{LayerEmbeddings, LayerWeights};

pub const TEACHER_MAGIC: &[u8; 4] = b"BGTC";
pub const TEACHER_VERSION: u16 = 1;

/// A trained full-precision model: every layer output, so the student phase
/// does not need to re-propagate.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherModel {
    pub embeddings: LayerEmbeddings<f32>,
    pub weights: LayerWeights,
    pub config_hash: u64,
    pub seed: u64,
}

impl TeacherModel {
    pub fn base(&self) -> &Matrix<f32> {
        self.embeddings.base()
    }

    /// Layout (little-endian): magic `BGTC`, version `u16`, `M`, `N`, `L`,
    /// `d` as `u32`, config hash `u64`, seed `u64`, `L + 1` weights as `f32`,
    /// then the `L + 1` layer tables, row-major `f32`.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let e = &self.embeddings;
        let mut buf = Vec::new();
        buf.extend_from_slice(TEACHER_MAGIC);
        buf.extend_from_slice(&TEACHER_VERSION.to_le_bytes());
        for v in [e.num_users(), e.num_items(), e.num_layers(), e.dim()] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(&self.config_hash.to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        for &x in self.weights.as_slice() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for layer in e.layers() {
            for &x in layer.as_slice() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(r).read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(pos..pos + n)
                .ok_or_else(|| Error::Format("teacher checkpoint is truncated".into()))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != TEACHER_MAGIC {
            return Err(Error::Format("not a teacher checkpoint".into()));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != TEACHER_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        }
        let [m, n, l, d] = dims;
        let config_hash = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let f32s = |b: &[u8]| -> Vec<f32> {
            b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
        };
        let weights = f32s(take(4 * (l + 1))?);
        let rows = m + n;
        let mut layers = Vec::with_capacity(l + 1);
        for _ in 0..=l {
            layers.push(Matrix::from_vec(rows, d, f32s(take(4 * rows * d)?)));
        }
        if pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint body".into()));
        }
        let fmt = |e: Error| Error::Format(e.to_string());
        Ok(Self {
            embeddings: LayerEmbeddings::from_layers(layers, m).map_err(fmt)?,
            weights: LayerWeights::from_vec(weights).map_err(fmt)?,
            config_hash,
            seed,
        })
    }
}
