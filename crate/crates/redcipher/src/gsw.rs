//! Cipher representations, the bit-level primitives behind them, and
//! encryption/decryption.
//!
//! A cipher is an N×N binary matrix C; its word form ("reduced cipher")
//! is C̃ = C·G with G = I_{n+1} ⊗ [2^0 … 2^(ℓ−1)]ᵀ, an N×(n+1) matrix of
//! reduced words. Because each row block of G collapses ℓ adjacent bit
//! columns into one word, storing C with ℓ bits packed per machine word
//! makes the two forms share one memory layout: block word c of row i of
//! C *is* C̃[i][c]. Conversions are therefore cheap revalidations, while
//! the two operation paths over the forms stay genuinely different.
//!
//! Decryption recovers μ from the first ℓ entries of C̃·s, peeling bits
//! from the most significant downward; every bit survives as long as the
//! per-entry noise stays below 2^(ℓ−2).

use rand::Rng;

use crate::hom::record_ops;
use crate::params::{PublicKey, SecretKey};
use crate::words::{centered, word_mask, Word, WordMatrix};

/// N×N binary cipher, stored with ℓ bits packed per word: entry (i, j)
/// is bit j mod ℓ of `blocks[i][j / ℓ]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cipher {
    blocks: WordMatrix,
    word_bits: u32,
}

/// N×(n+1) word-form cipher; entries are reduced below 2^ℓ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReducedCipher {
    words: WordMatrix,
    word_bits: u32,
}

impl Cipher {
    /// Bit-matrix row count N.
    #[inline]
    pub fn rows(&self) -> usize {
        self.blocks.rows()
    }

    /// Bit-matrix column count, also N.
    #[inline]
    pub fn bit_cols(&self) -> usize {
        self.blocks.cols() * self.word_bits as usize
    }

    #[inline]
    pub fn word_bits(&self) -> u32 {
        self.word_bits
    }

    /// Entry (i, j) of the binary matrix.
    #[inline]
    pub fn bit(&self, i: usize, j: usize) -> Word {
        let ell = self.word_bits as usize;
        (self.blocks.at(i, j / ell) >> (j % ell)) & 1
    }

    #[inline]
    pub(crate) fn block_words(&self) -> &WordMatrix {
        &self.blocks
    }

    /// Expand to a dense {0,1} word matrix (reference-path input).
    pub fn to_dense_bits(&self) -> WordMatrix {
        bit_decomp(&self.blocks, self.word_bits)
    }

    /// Pack a dense binary matrix; panics if any entry is not a bit.
    pub fn from_dense_bits(bits: &WordMatrix, word_bits: u32) -> Self {
        assert!(bits.data().iter().all(|&b| b <= 1), "matrix is not binary");
        Self { blocks: bit_decomp_inv(bits, word_bits), word_bits }
    }
}

impl ReducedCipher {
    pub fn zero(rows: usize, cols: usize, word_bits: u32) -> Self {
        Self { words: WordMatrix::zeros(rows, cols), word_bits }
    }

    /// Wrap a word matrix, reducing every entry below 2^ℓ.
    pub fn from_words(mut words: WordMatrix, word_bits: u32) -> Self {
        let mask = word_mask(word_bits);
        words.map_in_place(|w| w & mask);
        Self { words, word_bits }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.words.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.words.cols()
    }

    #[inline]
    pub fn word_bits(&self) -> u32 {
        self.word_bits
    }

    #[inline]
    pub fn words(&self) -> &WordMatrix {
        &self.words
    }

    #[inline]
    pub(crate) fn words_mut(&mut self) -> &mut WordMatrix {
        &mut self.words
    }
}

/// Word form of a cipher: C̃ = C·G. Shared packing makes this a copy of
/// the block words.
pub fn to_reduced(cipher: &Cipher) -> ReducedCipher {
    ReducedCipher {
        words: cipher.block_words().clone(),
        word_bits: cipher.word_bits(),
    }
}

/// Bit form of a word cipher; exact because every entry is below 2^ℓ.
pub fn to_full(ct: &ReducedCipher) -> Cipher {
    Cipher {
        blocks: ct.words().clone(),
        word_bits: ct.word_bits(),
    }
}

/// Reduce every entry of a word matrix mod 2^ℓ.
pub fn truncate(m: &WordMatrix, word_bits: u32) -> WordMatrix {
    let mask = word_mask(word_bits);
    let mut out = m.clone();
    out.map_in_place(|w| w & mask);
    record_ops(0, 0, (m.rows() * m.cols()) as u64);
    out
}

/// Expand each word column into ℓ bit columns, least significant first.
pub fn bit_decomp(m: &WordMatrix, word_bits: u32) -> WordMatrix {
    let ell = word_bits as usize;
    let mut out = WordMatrix::zeros(m.rows(), m.cols() * ell);
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let w = m.at(r, c);
            for k in 0..ell {
                out.set(r, c * ell + k, (w >> k) & 1);
            }
        }
    }
    record_ops(0, 0, (m.rows() * m.cols() * ell) as u64);
    out
}

/// Collapse each group of ℓ columns back into one word: the product with
/// the gadget matrix, done blockwise with shifts so G is never
/// materialized. Accepts non-binary inputs (carries are preserved mod 2^ℓ).
pub fn bit_decomp_inv(m: &WordMatrix, word_bits: u32) -> WordMatrix {
    let ell = word_bits as usize;
    assert_eq!(m.cols() % ell, 0, "column count must be a multiple of word_bits");
    let mask = word_mask(word_bits);
    let cols = m.cols() / ell;
    let mut out = WordMatrix::zeros(m.rows(), cols);
    let mut adds = 0u64;
    for r in 0..m.rows() {
        for c in 0..cols {
            let mut acc: Word = 0;
            for k in 0..ell {
                acc = acc.wrapping_add(m.at(r, c * ell + k) << k);
            }
            out.set(r, c, acc & mask);
            adds += word_bits as u64 - 1;
        }
    }
    record_ops(0, adds, (m.rows() * m.cols()) as u64);
    out
}

/// Re-binarize a word matrix while preserving its product with G·s:
/// bit_decomp(truncate(bit_decomp_inv(m))).
pub fn flatten(m: &WordMatrix, word_bits: u32) -> WordMatrix {
    bit_decomp(&truncate(&bit_decomp_inv(m, word_bits), word_bits), word_bits)
}

/// Expand a word vector against Gᵀ: output entry i·ℓ + k is c[i]·2^k,
/// generated with shifts only.
pub fn powers_of_2(c: &[Word], word_bits: u32) -> Vec<Word> {
    let mask = word_mask(word_bits);
    let mut out = Vec::with_capacity(c.len() * word_bits as usize);
    for &w in c {
        for k in 0..word_bits {
            out.push((w << k) & mask);
        }
    }
    record_ops(0, 0, c.len() as u64 * u64::from(word_bits));
    out
}

/// Encrypt in word form: C̃ = (μ·G + R·A) mod 2^ℓ with R uniform binary.
/// R·A is a masked row-add scan and μ·G a shift ladder, so the whole
/// encryption performs no word multiplications.
pub fn encrypt(pk: &PublicKey, mu: Word, rng: &mut impl Rng) -> ReducedCipher {
    let r = sample_binary_matrix(
        pk.params.cipher_rows(),
        pk.params.sample_count,
        rng,
    );
    encrypt_with_randomness(pk, mu, &r)
}

/// Uniform {0,1} matrix, one word per entry.
pub(crate) fn sample_binary_matrix(
    rows: usize,
    cols: usize,
    rng: &mut impl Rng,
) -> WordMatrix {
    let mut r = WordMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            r.set(i, j, u64::from(rng.gen::<bool>()));
        }
    }
    r
}

pub(crate) fn encrypt_with_randomness(
    pk: &PublicKey,
    mu: Word,
    r: &WordMatrix,
) -> ReducedCipher {
    let p = &pk.params;
    let ell = p.word_bits as usize;
    let mask = p.mask();
    let rows = p.cipher_rows();
    let cols = p.block_count();
    assert_eq!((r.rows(), r.cols()), (rows, p.sample_count));
    assert!(mu & !mask == 0, "message must be reduced");

    let mut words = WordMatrix::zeros(rows, cols);
    let mut adds = 0u64;
    // R·A: add public-key row j wherever R[i][j] is set.
    for i in 0..rows {
        for j in 0..p.sample_count {
            if r.at(i, j) == 1 {
                let out = words.row_mut(i);
                let src = pk.matrix.row(j);
                for c in 0..cols {
                    out[c] = out[c].wrapping_add(src[c]) & mask;
                }
                adds += cols as u64;
            }
        }
    }
    // μ·G: block b contributes μ≪k at row b·ℓ+k, column b.
    let shifted: Vec<Word> = (0..p.word_bits).map(|k| (mu << k) & mask).collect();
    for b in 0..cols {
        for k in 0..ell {
            let row = b * ell + k;
            let w = words.at(row, b).wrapping_add(shifted[k]) & mask;
            words.set(row, b, w);
            adds += 1;
        }
    }
    record_ops(
        0,
        adds,
        (rows * p.sample_count) as u64 + u64::from(p.word_bits - 1),
    );
    ReducedCipher { words, word_bits: p.word_bits }
}

/// Encrypt in bit form with the original recipe,
/// Flatten(μ·I_N + BitDecomp(R·A)); with shared randomness its word form
/// equals `encrypt`'s output, which cross-validates the representations.
pub fn encrypt_full(pk: &PublicKey, mu: Word, rng: &mut impl Rng) -> Cipher {
    let r = sample_binary_matrix(
        pk.params.cipher_rows(),
        pk.params.sample_count,
        rng,
    );
    encrypt_full_with_randomness(pk, mu, &r)
}

pub(crate) fn encrypt_full_with_randomness(
    pk: &PublicKey,
    mu: Word,
    r: &WordMatrix,
) -> Cipher {
    let p = &pk.params;
    let mask = p.mask();
    let rows = p.cipher_rows();
    assert!(mu & !mask == 0, "message must be reduced");

    // R·A as a plain word product (r entries are 0/1 words).
    let mut ra = WordMatrix::zeros(rows, p.block_count());
    let mut mults = 0u64;
    let mut adds = 0u64;
    for i in 0..rows {
        for c in 0..p.block_count() {
            let mut acc: Word = 0;
            for j in 0..p.sample_count {
                acc = acc.wrapping_add(r.at(i, j).wrapping_mul(pk.matrix.at(j, c)));
            }
            ra.set(i, c, acc & mask);
            mults += p.sample_count as u64;
            adds += p.sample_count as u64 - 1;
        }
    }
    record_ops(mults, adds, 0);

    let mut with_message = bit_decomp(&ra, p.word_bits);
    for i in 0..rows {
        let w = with_message.at(i, i).wrapping_add(mu);
        with_message.set(i, i, w);
    }
    record_ops(0, rows as u64, 0);

    let bits = flatten(&with_message, p.word_bits);
    Cipher::from_dense_bits(&bits, p.word_bits)
}

/// Recover the message bits from the first ℓ entries of C̃·s.
///
/// v[k] is μ·2^k plus noise; working from v[ℓ−1] down, the already-known
/// low bits are subtracted and the next bit read off the half-open
/// interval [2^(ℓ−2), 3·2^(ℓ−2)). Correct whenever every |noise| < 2^(ℓ−2).
pub fn mp_dec(v: &[Word], word_bits: u32) -> Word {
    let ell = word_bits as usize;
    assert!(v.len() >= ell, "need at least word_bits entries");
    let mask = word_mask(word_bits);
    let quarter = 1u64 << (word_bits - 2);
    let mut mu: Word = 0;
    for i in 0..ell {
        // Bits b_0..b_{i-1} of μ are known; remove their contribution.
        let mut r = v[ell - 1 - i];
        for j in 0..i {
            let bit = (mu >> j) & 1;
            if bit == 1 {
                r = r.wrapping_sub(1u64 << (ell - 1 - i + j));
            }
        }
        r &= mask;
        if r >= quarter && r < 3 * quarter {
            mu |= 1 << i;
        }
    }
    mu
}

/// Decrypt a word-form cipher: μ = MPDec((C̃·s) mod 2^ℓ), using only the
/// first ℓ rows of the product.
pub fn decrypt(sk: &SecretKey, ct: &ReducedCipher) -> Word {
    mp_dec(&decrypt_rows(sk, ct), sk.params.word_bits)
}

/// First ℓ entries of (C̃·s) mod 2^ℓ.
fn decrypt_rows(sk: &SecretKey, ct: &ReducedCipher) -> Vec<Word> {
    let p = &sk.params;
    let ell = p.word_bits as usize;
    let mask = p.mask();
    assert_eq!(ct.cols(), p.block_count(), "cipher does not match key");
    let mut out = Vec::with_capacity(ell);
    for k in 0..ell {
        let mut acc: Word = 0;
        let row = ct.words().row(k);
        for c in 0..p.block_count() {
            acc = acc.wrapping_add(row[c].wrapping_mul(sk.words[c]));
        }
        out.push(acc & mask);
    }
    record_ops(
        (ell * p.block_count()) as u64,
        (ell * (p.block_count() - 1)) as u64,
        0,
    );
    out
}

/// Diagnostic: largest |centered(w_k − μ·2^k)| over the first ℓ product
/// entries, given the known plaintext μ.
pub fn noise_of(sk: &SecretKey, ct: &ReducedCipher, mu: Word) -> u128 {
    let p = &sk.params;
    let mask = p.mask();
    decrypt_rows(sk, ct)
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let expected = (mu << k) & mask;
            centered(w.wrapping_sub(expected) & mask, p.word_bits).unsigned_abs()
        })
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{keygen, Params};
    use crate::words::truncate_word;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use crate::params::zero_noise_keypair as zero_noise_pair;

    fn tiny() -> Params {
        Params::new(1, 2, 3, 1, 1, 0).unwrap()
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate_word(11, 3), 3);
        assert_eq!(truncate_word(5, 3), 5);
        let m = WordMatrix::from_rows(&[vec![9, 2], vec![8, 7]]);
        assert_eq!(truncate(&m, 3), WordMatrix::from_rows(&[vec![1, 2], vec![0, 7]]));
    }

    #[test]
    fn bit_decomp_examples() {
        let m = WordMatrix::from_rows(&[vec![5]]);
        assert_eq!(bit_decomp(&m, 3), WordMatrix::from_rows(&[vec![1, 0, 1]]));
        let z = WordMatrix::from_rows(&[vec![0]]);
        assert_eq!(bit_decomp(&z, 3), WordMatrix::from_rows(&[vec![0, 0, 0]]));
        let two = WordMatrix::from_rows(&[vec![5, 2]]);
        assert_eq!(
            bit_decomp(&two, 3),
            WordMatrix::from_rows(&[vec![1, 0, 1, 0, 1, 0]])
        );
    }

    #[test]
    fn bit_decomp_inv_examples() {
        let m = WordMatrix::from_rows(&[vec![1, 0, 1]]);
        assert_eq!(bit_decomp_inv(&m, 3), WordMatrix::from_rows(&[vec![5]]));
        let m = WordMatrix::from_rows(&[vec![1, 1, 1]]);
        assert_eq!(bit_decomp_inv(&m, 3), WordMatrix::from_rows(&[vec![7]]));
    }

    #[test]
    fn flatten_examples() {
        let m = WordMatrix::from_rows(&[vec![3, 0, 0]]);
        assert_eq!(flatten(&m, 3), WordMatrix::from_rows(&[vec![1, 1, 0]]));
        let m = WordMatrix::from_rows(&[vec![1, 1, 1]]);
        assert_eq!(flatten(&m, 3), WordMatrix::from_rows(&[vec![1, 1, 1]]));
        // 2·4 = 8 wraps to zero: overflow past the word is discarded.
        let m = WordMatrix::from_rows(&[vec![0, 0, 2]]);
        assert_eq!(flatten(&m, 3), WordMatrix::from_rows(&[vec![0, 0, 0]]));
    }

    #[test]
    fn powers_of_2_examples() {
        assert_eq!(powers_of_2(&[1], 3), vec![1, 2, 4]);
        assert_eq!(powers_of_2(&[0, 0], 3), vec![0; 6]);
        assert_eq!(powers_of_2(&[3, 1], 3), vec![3, 6, 4, 1, 2, 4]);
    }

    #[test]
    fn encrypt_zero_randomness_message_three() {
        let p = tiny();
        let (_, pk) = zero_noise_pair(&p, 1);
        let r = WordMatrix::zeros(p.cipher_rows(), p.sample_count);
        let ct = encrypt_with_randomness(&pk, 3, &r);
        let expected = WordMatrix::from_rows(&[
            vec![3, 0],
            vec![6, 0],
            vec![4, 0],
            vec![0, 3],
            vec![0, 6],
            vec![0, 4],
        ]);
        assert_eq!(ct.words(), &expected);

        let zero = encrypt_with_randomness(&pk, 0, &r);
        assert!(zero.words().data().iter().all(|&w| w == 0));
    }

    #[test]
    fn full_and_reduced_encryption_agree() {
        let p = tiny();
        let (_, pk) = zero_noise_pair(&p, 2);
        let r = WordMatrix::zeros(p.cipher_rows(), p.sample_count);
        let full = encrypt_full_with_randomness(&pk, 3, &r);
        let red = encrypt_with_randomness(&pk, 3, &r);
        assert_eq!(to_reduced(&full), red);
        // Row 0 of the bit form spells 3 = [1,1,0] in block 0.
        assert_eq!(
            (0..6).map(|j| full.bit(0, j)).collect::<Vec<_>>(),
            vec![1, 1, 0, 0, 0, 0]
        );
        assert_eq!(
            (0..6).map(|j| full.bit(1, j)).collect::<Vec<_>>(),
            vec![0, 1, 1, 0, 0, 0]
        );
    }

    #[test]
    fn full_and_reduced_encryption_agree_random() {
        let p = Params::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (_, pk) = keygen(&p, &mut rng);
        for _ in 0..50 {
            let mu = rng.gen::<u64>() & p.mask();
            let r = sample_binary_matrix(p.cipher_rows(), p.sample_count, &mut rng);
            let full = encrypt_full_with_randomness(&pk, mu, &r);
            let red = encrypt_with_randomness(&pk, mu, &r);
            assert_eq!(to_reduced(&full), red);
        }
    }

    #[test]
    fn conversion_round_trips() {
        let p = Params::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (_, pk) = keygen(&p, &mut rng);
        for _ in 0..20 {
            let ct = encrypt(&pk, rng.gen::<u64>() & p.mask(), &mut rng);
            assert_eq!(to_reduced(&to_full(&ct)), ct);
            let full = to_full(&ct);
            assert_eq!(to_full(&to_reduced(&full)), full);
        }
        let zero = ReducedCipher::zero(p.cipher_rows(), p.block_count(), p.word_bits);
        assert!(to_full(&zero).block_words().data().iter().all(|&w| w == 0));
    }

    #[test]
    fn mp_dec_examples() {
        assert_eq!(mp_dec(&[3, 6, 4], 3), 3);
        assert_eq!(mp_dec(&[0, 0, 0], 3), 0);
        // One unit of noise on the top entry is absorbed.
        assert_eq!(mp_dec(&[3, 6, 5], 3), 3);
    }

    #[test]
    fn decrypt_zero_noise_example() {
        let p = tiny();
        let (sk, pk) = zero_noise_pair(&p, 3);
        let r = WordMatrix::zeros(p.cipher_rows(), p.sample_count);
        let ct = encrypt_with_randomness(&pk, 3, &r);
        assert_eq!(decrypt(&sk, &ct), 3);
        assert_eq!(noise_of(&sk, &ct, 3), 0);
    }

    #[test]
    fn decrypt_round_trip_demo_params() {
        let p = Params::demo();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (sk, pk) = keygen(&p, &mut rng);
        for _ in 0..200 {
            let mu = rng.gen::<u64>();
            let ct = encrypt(&pk, mu, &mut rng);
            assert_eq!(decrypt(&sk, &ct), mu);
        }
    }

    #[test]
    fn decrypt_zero_many_seeds() {
        let p = Params::toy();
        for seed in 0..50 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (sk, pk) = keygen(&p, &mut rng);
            let ct = encrypt(&pk, 0, &mut rng);
            assert_eq!(decrypt(&sk, &ct), 0, "seed {seed}");
        }
    }

    #[test]
    fn fresh_noise_bounded() {
        let p = Params::demo();
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let (sk, pk) = keygen(&p, &mut rng);
        let budget = u128::from(p.sample_count as u64 * p.noise_bound);
        for _ in 0..20 {
            let mu = rng.gen::<u64>();
            let ct = encrypt(&pk, mu, &mut rng);
            assert!(noise_of(&sk, &ct, mu) <= budget);
        }
    }

    proptest! {
        // b·G applied after bit decomposition reproduces plain truncation.
        #[test]
        fn lemma_decomp_inverse_is_truncation(
            rows in proptest::collection::vec(
                proptest::collection::vec(any::<u64>(), 4),
                1..4,
            )
        ) {
            let m = WordMatrix::from_rows(&rows);
            for ell in [3u32, 8, 64] {
                let round = bit_decomp_inv(&bit_decomp(&m, ell), ell);
                prop_assert_eq!(round, truncate(&m, ell));
            }
        }

        #[test]
        fn decomp_round_trip_on_reduced_words(words in proptest::collection::vec(any::<u64>(), 6)) {
            let reduced: Vec<Word> = words.iter().map(|w| w & word_mask(8)).collect();
            let m = WordMatrix::from_rows(&[reduced.clone()]);
            let round = bit_decomp_inv(&bit_decomp(&m, 8), 8);
            prop_assert_eq!(round.row(0), &reduced[..]);
        }

        #[test]
        fn mp_dec_tolerates_bounded_noise(mu in any::<u64>(), seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let v: Vec<Word> = (0..64)
                .map(|k| {
                    let noise = rng.gen_range(-(1i128 << 61)..(1i128 << 61));
                    (mu << k).wrapping_add(crate::words::embed(noise, 64))
                })
                .collect();
            prop_assert_eq!(mp_dec(&v, 64), mu);
        }
    }

    #[test]
    fn flatten_idempotent_on_binary() {
        let p = Params::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..20 {
            let bits = sample_binary_matrix(6, 16, &mut rng);
            assert_eq!(flatten(&bits, p.word_bits), bits);
        }
    }
}
