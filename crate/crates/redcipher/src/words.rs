//! Word arithmetic modulo 2^ℓ and the dense row-major matrix container
//! shared by keys, ciphers and the reference operation paths.
//!
//! All scheme arithmetic happens in Z_q with q = 2^ℓ, so reduction is a
//! mask and negative values live as two's-complement words.

/// A scheme word. Always kept reduced below 2^ℓ for the active width.
pub type Word = u64;

/// All-ones mask for an ℓ-bit word.
#[inline]
pub fn word_mask(word_bits: u32) -> Word {
    debug_assert!(word_bits >= 1 && word_bits <= 64);
    if word_bits == 64 {
        u64::MAX
    } else {
        (1u64 << word_bits) - 1
    }
}

/// Keep the ℓ least significant bits of `x`, i.e. reduce mod 2^ℓ.
#[inline]
pub fn truncate_word(x: Word, word_bits: u32) -> Word {
    x & word_mask(word_bits)
}

/// Map a reduced word to its centered representative in
/// [−2^(ℓ−1), 2^(ℓ−1)).
#[inline]
pub fn centered(x: Word, word_bits: u32) -> i128 {
    let x = i128::from(x);
    if x < (1i128 << (word_bits - 1)) {
        x
    } else {
        x - (1i128 << word_bits)
    }
}

/// Embed a signed integer as a reduced ℓ-bit word (two's complement).
#[inline]
pub fn embed(v: i128, word_bits: u32) -> Word {
    v.rem_euclid(1i128 << word_bits) as Word
}

/// Dense row-major matrix of words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Word>,
}

impl WordMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    /// Build from explicit row data; all rows must share one length.
    pub fn from_rows(rows: &[Vec<Word>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Word>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> Word {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, w: Word) {
        self.data[r * self.cols + c] = w;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[Word] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [Word] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn data(&self) -> &[Word] {
        &self.data
    }

    /// Element-wise map in place.
    pub fn map_in_place(&mut self, f: impl Fn(Word) -> Word) {
        for w in &mut self.data {
            *w = f(*w);
        }
    }
}
