//! Fixed-point codec between real signals and ℓ-bit message words.
//!
//! A Qm.n value occupies [−2^(m−1), 2^(m−1)) at resolution 2^(−n),
//! embedded in the full ℓ-bit word as two's complement. Full-width
//! embedding keeps modular products sign-correct: the centered value of
//! a wrapped product equals the product of centered values whenever the
//! true product magnitude stays below 2^(ℓ−1). A product of two Qm.n
//! words carries 2n fraction bits; `rescale` shifts it back down with
//! floor semantics (truncation toward −∞).

use std::fmt;

use crate::params::Params;
use crate::words::{centered, embed, Word};

/// Fixed-point layout inside an ℓ-bit word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QFormat {
    /// Integer bits, sign included.
    pub int_bits: u32,
    /// Fraction bits.
    pub frac_bits: u32,
    /// Container word width.
    pub word_bits: u32,
}

impl QFormat {
    pub fn new(int_bits: u32, frac_bits: u32, word_bits: u32) -> Self {
        assert!(int_bits >= 1 && int_bits + frac_bits <= word_bits.div_ceil(2));
        Self { int_bits, frac_bits, word_bits }
    }

    pub fn from_params(p: &Params) -> Self {
        Self { int_bits: p.int_bits, frac_bits: p.frac_bits, word_bits: p.word_bits }
    }

    /// Smallest representable increment, 2^(−frac_bits).
    pub fn resolution(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Half-open representable range [−2^(m−1), 2^(m−1)).
    pub fn range(&self) -> (f64, f64) {
        let half = ((self.int_bits - 1) as f64).exp2();
        (-half, half)
    }
}

/// Value outside the representable Q range (or not finite).
#[derive(Clone, Debug, PartialEq)]
pub struct OutOfRange {
    pub value: f64,
    pub fmt: QFormat,
}

impl fmt::Display for OutOfRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi) = self.fmt.range();
        write!(
            f,
            "{} outside Q{}.{} range [{}, {})",
            self.value, self.fmt.int_bits, self.fmt.frac_bits, lo, hi
        )
    }
}

impl std::error::Error for OutOfRange {}

/// Encode a real value: round-half-away-from-zero to the grid, then
/// embed the scaled integer in the word as two's complement.
pub fn q_encode(value: f64, fmt: QFormat) -> Result<Word, OutOfRange> {
    if !value.is_finite() {
        return Err(OutOfRange { value, fmt });
    }
    let scaled = (value * (fmt.frac_bits as f64).exp2()).round();
    let limit = (1i128 << (fmt.int_bits + fmt.frac_bits - 1)) as f64;
    if !(-limit..limit).contains(&scaled) {
        return Err(OutOfRange { value, fmt });
    }
    Ok(embed(scaled as i128, fmt.word_bits))
}

/// Decode: centered word divided by 2^frac_bits. `frac_bits` is passed
/// explicitly because products carry twice the fraction bits until
/// rescaled.
pub fn q_decode(word: Word, frac_bits: u32, word_bits: u32) -> f64 {
    centered(word, word_bits) as f64 / (frac_bits as f64).exp2()
}

/// Arithmetic right shift of the centered value (floor toward −∞),
/// re-embedded as a word. This is the post-product exponent fix-up.
pub fn rescale(word: Word, shift: u32, word_bits: u32) -> Word {
    embed(centered(word, word_bits) >> shift, word_bits)
}

/// Word product mod 2^ℓ — the plaintext mirror of the homomorphic
/// product, bit for bit.
#[inline]
pub fn q_mul_plain(a: Word, b: Word, word_bits: u32) -> Word {
    a.wrapping_mul(b) & crate::words::word_mask(word_bits)
}

/// Word sum mod 2^ℓ — the plaintext mirror of the homomorphic sum.
#[inline]
pub fn q_add_plain(a: Word, b: Word, word_bits: u32) -> Word {
    a.wrapping_add(b) & crate::words::word_mask(word_bits)
}
