use std::io::{BufReader, Read, Write};

use super::{words_for, BinarizedTable};
use crate::error::{Error, Result};
use crate::propagation::LayerWeights;

pub const MODEL_MAGIC: &[u8; 4] = b"BGER";
pub const MODEL_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4 * 4 + 8 + 8;

/// A trained binarized model: the table, the fusion weights, and the
/// provenance of the run that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarizedModel {
    pub table: BinarizedTable,
    pub weights: LayerWeights,
    pub config_hash: u64,
    pub seed: u64,
}

impl BinarizedModel {
    /// Serialized size in bytes.
    pub fn serialized_len(&self) -> usize {
        let t = &self.table;
        let rows = t.num_nodes() * (t.num_layers() + 1);
        HEADER_LEN + 4 * self.weights.len() + rows * (4 + 8 * t.words_per_row())
    }

    /// Layout (little-endian): magic `BGER`, version `u16`, `M`, `N`, `L`, `d`
    /// as `u32`, config hash `u64`, seed `u64`, `L + 1` weights as `f32`, then
    /// per node: `L + 1` scalers (`f32`) followed by `(L + 1) * ceil(d / 64)`
    /// code words (`u64`).
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let t = &self.table;
        let mut buf = Vec::with_capacity(self.serialized_len());
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        for v in [t.num_users(), t.num_items(), t.num_layers(), t.dim()] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(&self.config_hash.to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        for &x in self.weights.as_slice() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for x in 0..t.num_nodes() {
            for &a in t.node_scalers(x) {
                buf.extend_from_slice(&a.to_le_bytes());
            }
            for &word in t.node_words(x) {
                buf.extend_from_slice(&word.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format(format!(
                "not a binarized model file (magic {:?})",
                String::from_utf8_lossy(&magic)
            )));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2).map_err(truncated)?;
        let version = u16::from_le_bytes(b2);
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let next_u32 = |r: &mut BufReader<R>| -> Result<usize> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(truncated)?;
            Ok(u32::from_le_bytes(b) as usize)
        };
        let num_users = next_u32(&mut r)?;
        let num_items = next_u32(&mut r)?;
        let num_layers = next_u32(&mut r)?;
        let dim = next_u32(&mut r)?;
        let config_hash = read_u64(&mut r)?;
        let seed = read_u64(&mut r)?;
        let weights = (0..=num_layers)
            .map(|_| read_f32(&mut r))
            .collect::<Result<Vec<_>>>()?;

        let nodes = num_users + num_items;
        let wpr = words_for(dim);
        let mut scalers = Vec::with_capacity(nodes * (num_layers + 1));
        let mut words = Vec::with_capacity(nodes * (num_layers + 1) * wpr);
        for _ in 0..nodes {
            for _ in 0..=num_layers {
                scalers.push(read_f32(&mut r)?);
            }
            for _ in 0..(num_layers + 1) * wpr {
                words.push(read_u64(&mut r)?);
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after model body".into()));
        }
        let table = BinarizedTable::from_parts(num_users, num_items, num_layers, dim, scalers, words)
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self {
            table,
            weights: LayerWeights::from_vec(weights).map_err(|e| Error::Format(e.to_string()))?,
            config_hash,
            seed,
        })
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("model file is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::propagation::{layer_weights, LayerEmbeddings};
    use crate::quantize::build_binarized_tables;
    use rand::{Rng, SeedableRng};

    fn model(d: usize, l: usize) -> BinarizedModel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(d as u64);
        let layers = (0..=l)
            .map(|_| Matrix::from_fn(7, d, |_, _| rng.random_range(-1.0f32..1.0)))
            .collect();
        let le = LayerEmbeddings::from_layers(layers, 3).unwrap();
        BinarizedModel {
            table: build_binarized_tables(&le).unwrap(),
            weights: layer_weights(l),
            config_hash: 0xfeed,
            seed: 9,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for (d, l) in [(1, 0), (63, 1), (64, 2), (100, 3), (256, 2)] {
            let m = model(d, l);
            let bytes = m.to_bytes();
            assert_eq!(bytes.len(), m.serialized_len());
            let back = BinarizedModel::read(&bytes[..]).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn corrupted_magic_and_truncation_are_format_errors() {
        let mut bytes = model(64, 1).to_bytes();
        let short = bytes[..bytes.len() - 3].to_vec();
        assert!(matches!(BinarizedModel::read(&short[..]), Err(Error::Format(_))));
        bytes[0] = b'Z';
        let err = BinarizedModel::read(&bytes[..]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("not a binarized model"));
    }
}
