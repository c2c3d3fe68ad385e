//! XNOR/popcount kernels on packed `±1` codes.

use crate::error::{Error, Result};
use crate::quantize::BitsRef;

/// Which popcount implementation a kernel uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Popcount {
    /// The CPU instruction when available, otherwise [`Popcount::Portable`].
    Hardware,
    /// Branch-free SWAR bit counting.
    Portable,
}

impl Popcount {
    /// `Hardware` if this CPU has a popcount instruction.
    pub fn detect() -> Self {
        if hardware_available() {
            Popcount::Hardware
        } else {
            Popcount::Portable
        }
    }
}

pub fn hardware_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("popcnt")
    }
    #[cfg(target_arch = "aarch64")]
    {
        true
    }
    #[cfg(not(any(target_arch = "x86_64", target_arch = "aarch64")))]
    {
        false
    }
}

#[inline(always)]
pub fn popcount_portable(mut x: u64) -> u32 {
    x -= (x >> 1) & 0x5555_5555_5555_5555;
    x = (x & 0x3333_3333_3333_3333) + ((x >> 2) & 0x3333_3333_3333_3333);
    x = (x + (x >> 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    (x.wrapping_mul(0x0101_0101_0101_0101) >> 56) as u32
}

/// Counts matching bit positions (XNOR popcount) over `a` and `b`, including
/// pad positions.
#[inline(always)]
pub(crate) fn xnor_popcount<const HW: bool>(a: &[u64], b: &[u64]) -> u32 {
    let mut total = 0u32;
    for (&x, &y) in a.iter().zip(b) {
        let same = !(x ^ y);
        total += if HW { same.count_ones() } else { popcount_portable(same) };
    }
    total
}

/// `<a, b>` for `±1` vectors packed in `words.len() * 64 - pad` bits:
/// `2 * (popcount(XNOR) - pad) - dim`.
#[inline(always)]
pub(crate) fn pm1_dot<const HW: bool>(a: &[u64], b: &[u64], dim: usize) -> i32 {
    let pad = (a.len() * 64 - dim) as i32;
    2 * (xnor_popcount::<HW>(a, b) as i32 - pad) - dim as i32
}

/// Integer inner product of two packed `±1` vectors.
pub fn dot_pm1_bitwise(a: BitsRef<'_>, b: BitsRef<'_>) -> Result<i64> {
    dot_pm1_with(a, b, Popcount::detect())
}

pub fn dot_pm1_with(a: BitsRef<'_>, b: BitsRef<'_>, popcount: Popcount) -> Result<i64> {
    if a.dim != b.dim {
        return Err(Error::Contract(format!("dim mismatch: {} vs {}", a.dim, b.dim)));
    }
    a.check()?;
    b.check()?;
    Ok(match popcount {
        Popcount::Hardware => pm1_dot::<true>(a.words, b.words, a.dim),
        Popcount::Portable => pm1_dot::<false>(a.words, b.words, a.dim),
    } as i64)
}
