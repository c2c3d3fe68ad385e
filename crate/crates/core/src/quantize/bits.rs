use crate::error::{Error, Result};
use crate::matrix::Real;

/// A packed `{-1, +1}^d` vector: bit `1` encodes `+1`, bit `0` encodes `-1`.
/// Bits beyond `dim` in the last word are always zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PackedBits {
    words: Vec<u64>,
    dim: usize,
}

/// Borrowed view of a packed row inside a larger table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitsRef<'a> {
    pub words: &'a [u64],
    pub dim: usize,
}

#[inline]
pub const fn words_for(dim: usize) -> usize {
    dim.div_ceil(64)
}

impl PackedBits {
    /// Packs a sign pattern; `true` is `+1`.
    pub fn from_bools(bits: &[bool]) -> Self {
        let mut words = vec![0u64; words_for(bits.len())];
        for (j, &b) in bits.iter().enumerate() {
            if b {
                words[j / 64] |= 1 << (j % 64);
            }
        }
        Self { words, dim: bits.len() }
    }

    /// Packs a `±1` vector. Panics on any other value.
    pub fn from_pm1(v: &[i8]) -> Self {
        let bools: Vec<bool> = v
            .iter()
            .map(|&x| match x {
                1 => true,
                -1 => false,
                other => panic!("not a ±1 value: {other}"),
            })
            .collect();
        Self::from_bools(&bools)
    }

    pub fn from_words(words: Vec<u64>, dim: usize) -> Result<Self> {
        let view = BitsRef { words: &words, dim };
        view.check()?;
        Ok(Self { words, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn as_ref(&self) -> BitsRef<'_> {
        BitsRef { words: &self.words, dim: self.dim }
    }

    pub fn to_pm1(&self) -> Vec<i8> {
        self.as_ref().to_pm1()
    }
}

impl BitsRef<'_> {
    #[inline]
    pub fn bit(&self, j: usize) -> bool {
        self.words[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn to_pm1(&self) -> Vec<i8> {
        (0..self.dim).map(|j| if self.bit(j) { 1 } else { -1 }).collect()
    }

    pub fn pad_bits(&self) -> usize {
        self.words.len() * 64 - self.dim
    }

    /// Verifies the word count and that pad bits are zero.
    pub fn check(&self) -> Result<()> {
        if self.words.len() != words_for(self.dim) {
            return Err(Error::Contract(format!(
                "{} words for dim {}",
                self.words.len(),
                self.dim
            )));
        }
        let rem = self.dim % 64;
        if rem != 0 && self.words[self.words.len() - 1] >> rem != 0 {
            return Err(Error::Contract("non-zero pad bits".into()));
        }
        Ok(())
    }
}

/// Writes the sign pattern of `v` into `out` (`v_j >= 0` maps to `+1`).
/// `out` must hold `words_for(v.len())` words.
#[inline]
pub fn pack_signs_into<T: Real>(v: &[T], out: &mut [u64]) {
    debug_assert_eq!(out.len(), words_for(v.len()));
    for (w, chunk) in out.iter_mut().zip(v.chunks(64)) {
        let mut word = 0u64;
        for (j, &x) in chunk.iter().enumerate() {
            word |= ((x >= T::zero()) as u64) << j;
        }
        *w = word;
    }
}

/// 1-bit sign quantization; zero maps to `+1`.
pub fn sign_quantize<T: Real>(v: &[T]) -> Result<PackedBits> {
    if let Some(j) = v.iter().position(|x| x.is_nan()) {
        return Err(Error::Numeric(format!("NaN at entry {j}")));
    }
    let mut words = vec![0u64; words_for(v.len())];
    pack_signs_into(v, &mut words);
    Ok(PackedBits { words, dim: v.len() })
}
