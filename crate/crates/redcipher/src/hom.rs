//! Homomorphic operations in both cipher representations, instrumented
//! with per-thread operation counters.
//!
//! The word-form path is the production route: sums are element-wise
//! word adds, products are masked row-add scans over the left operand's
//! bits, and scalar variants exploit the block-diagonal shape of the
//! scaled gadget matrix. None of them multiplies two words.
//!
//! The bit-form (`*_full`) path evaluates the original Flatten-based
//! formulas literally against a dense gadget matrix, structural zeros
//! included. It is the reference the word-form path is checked against,
//! and the word multiplications it performs are what the reduced form
//! removes.

use std::cell::Cell;
use std::fmt;

use crate::gsw::{bit_decomp, Cipher, ReducedCipher};
use crate::words::{word_mask, Word, WordMatrix};

/// Snapshot of the executing thread's operation tallies.
///
/// Conventions: `word_mults`/`word_adds` count u64 multiplies and adds on
/// cipher or key material (the plaintext fixed-point oracle is not
/// counted); `bit_ops` counts shifts, masks and bit selections, with
/// matrix-bit scans counted once per bit position examined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub word_mults: u64,
    pub word_adds: u64,
    pub bit_ops: u64,
}

impl OpCounters {
    pub const ZERO: Self = Self { word_mults: 0, word_adds: 0, bit_ops: 0 };

    /// Fold another scope's tallies into this one.
    pub fn merge(&mut self, other: Self) {
        self.word_mults += other.word_mults;
        self.word_adds += other.word_adds;
        self.bit_ops += other.bit_ops;
    }
}

thread_local! {
    static SCOPE: Cell<OpCounters> = const { Cell::new(OpCounters::ZERO) };
}

/// Current thread-scope tallies.
pub fn op_counters() -> OpCounters {
    SCOPE.get()
}

/// Clear the executing thread's tallies.
pub fn reset_counters() {
    SCOPE.set(OpCounters::ZERO);
}

/// Fold tallies collected on another thread into this scope.
pub fn merge_counters(other: OpCounters) {
    let mut c = SCOPE.get();
    c.merge(other);
    SCOPE.set(c);
}

#[inline]
pub(crate) fn record_ops(mults: u64, adds: u64, bits: u64) {
    let mut c = SCOPE.get();
    c.word_mults += mults;
    c.word_adds += adds;
    c.bit_ops += bits;
    SCOPE.set(c);
}

/// Shape mismatch between operands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DimensionMismatch {
    pub expected: (usize, usize),
    pub got: (usize, usize),
}

impl fmt::Display for DimensionMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dimension mismatch: expected {}x{}, got {}x{}",
            self.expected.0, self.expected.1, self.got.0, self.got.1
        )
    }
}

impl std::error::Error for DimensionMismatch {}

/// Word-form sum: element-wise addition mod 2^ℓ.
pub fn add(a: &ReducedCipher, b: &ReducedCipher) -> Result<ReducedCipher, DimensionMismatch> {
    if (a.rows(), a.cols()) != (b.rows(), b.cols()) || a.word_bits() != b.word_bits() {
        return Err(DimensionMismatch {
            expected: (a.rows(), a.cols()),
            got: (b.rows(), b.cols()),
        });
    }
    let mask = word_mask(a.word_bits());
    let mut out = a.clone();
    {
        let data = out.words_mut();
        for r in 0..b.rows() {
            let dst = data.row_mut(r);
            let src = b.words().row(r);
            for c in 0..src.len() {
                dst[c] = dst[c].wrapping_add(src[c]) & mask;
            }
        }
    }
    record_ops(0, (a.rows() * a.cols()) as u64, 0);
    Ok(out)
}

/// Word-form product: row i of the result sums the rows of `signal`
/// selected by the set bits of row i of `gain`. A masked-add scan; no
/// word multiplications.
///
/// The bit-form operand should be the gain cipher and the word-form
/// operand the signal: the product's noise scales with the *signal*
/// plaintext times the gain cipher's noise, and signal magnitudes are
/// bounded by the fixed-point format.
pub fn mul(gain: &Cipher, signal: &ReducedCipher) -> Result<ReducedCipher, DimensionMismatch> {
    if gain.bit_cols() != signal.rows() || gain.word_bits() != signal.word_bits() {
        return Err(DimensionMismatch {
            expected: (gain.bit_cols(), signal.cols()),
            got: (signal.rows(), signal.cols()),
        });
    }
    let ell = gain.word_bits() as usize;
    let mask = word_mask(gain.word_bits());
    let cols = signal.cols();
    let blocks = gain.block_words();
    let mut out = ReducedCipher::zero(gain.rows(), cols, gain.word_bits());
    let mut adds = 0u64;
    for i in 0..gain.rows() {
        let out_row = out.words_mut().row_mut(i);
        for b in 0..blocks.cols() {
            let mut w = blocks.at(i, b);
            let base = b * ell;
            while w != 0 {
                let k = w.trailing_zeros() as usize;
                w &= w - 1;
                let src = signal.words().row(base + k);
                for c in 0..cols {
                    out_row[c] = out_row[c].wrapping_add(src[c]) & mask;
                }
                adds += cols as u64;
            }
        }
    }
    record_ops(0, adds, (gain.rows() * gain.bit_cols()) as u64);
    Ok(out)
}

/// The nonzero block of the scaled gadget matrix:
/// [α, α≪1, …, α≪(ℓ−1)], each truncated. Exactly ℓ−1 shifts.
pub fn alpha_g(alpha: Word, word_bits: u32) -> Vec<Word> {
    let mask = word_mask(word_bits);
    let out = (0..word_bits).map(|k| (alpha << k) & mask).collect();
    record_ops(0, 0, u64::from(word_bits) - 1);
    out
}

/// Word-form scalar product: ([αG]^ℓ · C̃) mod 2^ℓ. [αG]^ℓ is block
/// diagonal with the bit rows of `alpha_g`, so each ℓ-row block of the
/// output mixes only the matching block of the input.
pub fn scalar_mul(alpha: Word, ct: &ReducedCipher) -> ReducedCipher {
    let ell = ct.word_bits() as usize;
    assert_eq!(ct.rows() % ell, 0, "row count must be a multiple of word_bits");
    let mask = word_mask(ct.word_bits());
    let cols = ct.cols();
    let blocks = ct.rows() / ell;
    let ag = alpha_g(alpha, ct.word_bits());
    let mut out = ReducedCipher::zero(ct.rows(), cols, ct.word_bits());
    let mut adds = 0u64;
    for b in 0..blocks {
        let base = b * ell;
        for r in 0..ell {
            let out_row = out.words_mut().row_mut(base + r);
            let mut w = ag[r];
            while w != 0 {
                let k = w.trailing_zeros() as usize;
                w &= w - 1;
                let src = ct.words().row(base + k);
                for c in 0..cols {
                    out_row[c] = out_row[c].wrapping_add(src[c]) & mask;
                }
                adds += cols as u64;
            }
        }
    }
    record_ops(0, adds, (blocks * ell * ell) as u64);
    out
}

/// Word-form scalar sum: (αG + C̃) mod 2^ℓ. Touches exactly the N
/// nonzero gadget positions.
pub fn scalar_add(alpha: Word, ct: &ReducedCipher) -> ReducedCipher {
    let ell = ct.word_bits() as usize;
    assert_eq!(ct.rows() % ell, 0, "row count must be a multiple of word_bits");
    let mask = word_mask(ct.word_bits());
    let blocks = ct.rows() / ell;
    assert!(blocks <= ct.cols(), "gadget blocks exceed cipher width");
    let ag = alpha_g(alpha, ct.word_bits());
    let mut out = ct.clone();
    for b in 0..blocks {
        for k in 0..ell {
            let row = b * ell + k;
            let w = out.words().at(row, b).wrapping_add(ag[k]) & mask;
            out.words_mut().set(row, b, w);
        }
    }
    record_ops(0, (blocks * ell) as u64, 0);
    out
}

/// Dense gadget matrix G = I_{blocks} ⊗ [1, 2, …, 2^(ℓ−1)]ᵀ.
fn gadget_dense(blocks: usize, word_bits: u32) -> WordMatrix {
    let ell = word_bits as usize;
    let mut g = WordMatrix::zeros(blocks * ell, blocks);
    for b in 0..blocks {
        for k in 0..ell {
            g.set(b * ell + k, b, 1u64 << k);
        }
    }
    g
}

/// Dense counted product, structural zeros included. Entries wrap mod
/// 2^64, which agrees with any later mod-2^ℓ truncation.
fn mat_mul_counted(a: &WordMatrix, b: &WordMatrix) -> WordMatrix {
    assert_eq!(a.cols(), b.rows());
    let mut out = WordMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        let out_row = out.row_mut(i);
        for k in 0..a.cols() {
            let aik = a.at(i, k);
            let src = b.row(k);
            for (o, &s) in out_row.iter_mut().zip(src) {
                *o = o.wrapping_add(aik.wrapping_mul(s));
            }
        }
    }
    record_ops(
        (a.rows() * a.cols() * b.cols()) as u64,
        (a.rows() * b.cols() * (a.cols() - 1)) as u64,
        0,
    );
    out
}

/// Literal Flatten over a dense word matrix: multiply by the dense
/// gadget matrix, truncate, re-decompose.
fn flatten_dense(m: &WordMatrix, word_bits: u32) -> WordMatrix {
    let ell = word_bits as usize;
    assert_eq!(m.cols() % ell, 0);
    let g = gadget_dense(m.cols() / ell, word_bits);
    let mask = word_mask(word_bits);
    let mut prod = mat_mul_counted(m, &g);
    prod.map_in_place(|w| w & mask);
    record_ops(0, 0, (prod.rows() * prod.cols()) as u64);
    bit_decomp(&prod, word_bits)
}

fn check_same_shape(a: &Cipher, b: &Cipher) -> Result<(), DimensionMismatch> {
    if a.rows() != b.rows() || a.bit_cols() != b.bit_cols() || a.word_bits() != b.word_bits() {
        return Err(DimensionMismatch {
            expected: (a.rows(), a.bit_cols()),
            got: (b.rows(), b.bit_cols()),
        });
    }
    Ok(())
}

/// Bit-form sum: Flatten(C₁ + C₂).
pub fn add_full(a: &Cipher, b: &Cipher) -> Result<Cipher, DimensionMismatch> {
    check_same_shape(a, b)?;
    let mut sum = a.to_dense_bits();
    let db = b.to_dense_bits();
    for r in 0..sum.rows() {
        let dst = sum.row_mut(r);
        for (d, &s) in dst.iter_mut().zip(db.row(r)) {
            *d = d.wrapping_add(s);
        }
    }
    record_ops(0, (sum.rows() * sum.cols()) as u64, 0);
    let bits = flatten_dense(&sum, a.word_bits());
    Ok(Cipher::from_dense_bits(&bits, a.word_bits()))
}

/// Bit-form product: Flatten(C₁ · C₂), dense.
pub fn mul_full(a: &Cipher, b: &Cipher) -> Result<Cipher, DimensionMismatch> {
    check_same_shape(a, b)?;
    let prod = mat_mul_counted(&a.to_dense_bits(), &b.to_dense_bits());
    let bits = flatten_dense(&prod, a.word_bits());
    Ok(Cipher::from_dense_bits(&bits, a.word_bits()))
}

/// Bit-form scalar product: Flatten(Flatten(αI_N) · C₂), both Flattens
/// evaluated literally.
pub fn scalar_mul_full(alpha: Word, ct: &Cipher) -> Cipher {
    let n = ct.rows();
    let mut alpha_eye = WordMatrix::zeros(n, n);
    for i in 0..n {
        alpha_eye.set(i, i, alpha);
    }
    let lhs_bits = flatten_dense(&alpha_eye, ct.word_bits());
    let prod = mat_mul_counted(&lhs_bits, &ct.to_dense_bits());
    let bits = flatten_dense(&prod, ct.word_bits());
    Cipher::from_dense_bits(&bits, ct.word_bits())
}

/// Bit-form scalar sum: Flatten(αI_N + C₂).
pub fn scalar_add_full(alpha: Word, ct: &Cipher) -> Cipher {
    let mut dense = ct.to_dense_bits();
    for i in 0..dense.rows() {
        let w = dense.at(i, i).wrapping_add(alpha);
        dense.set(i, i, w);
    }
    record_ops(0, dense.rows() as u64, 0);
    let bits = flatten_dense(&dense, ct.word_bits());
    Cipher::from_dense_bits(&bits, ct.word_bits())
}

/// Encrypted matrix–vector product: result[i] = Σ_j gains[i][j] · x[j],
/// accumulated with word-form sums. Noise grows additively across a row.
pub fn enc_mat_vec(
    gains: &[Vec<Cipher>],
    x: &[ReducedCipher],
) -> Result<Vec<ReducedCipher>, DimensionMismatch> {
    let mut out = Vec::with_capacity(gains.len());
    for row in gains {
        if row.len() != x.len() || row.is_empty() {
            return Err(DimensionMismatch {
                expected: (gains.len(), x.len()),
                got: (gains.len(), row.len()),
            });
        }
        let mut acc = mul(&row[0], &x[0])?;
        for (cipher, signal) in row.iter().zip(x).skip(1) {
            acc = add(&acc, &mul(cipher, signal)?)?;
        }
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsw::{decrypt, encrypt, to_full, to_reduced};
    use crate::params::{keygen, Params};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn toy_setup(seed: u64) -> (Params, crate::params::SecretKey, crate::params::PublicKey, ChaCha20Rng) {
        let p = Params::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (sk, pk) = keygen(&p, &mut rng);
        (p, sk, pk, rng)
    }

    #[test]
    fn alpha_g_examples() {
        assert_eq!(alpha_g(3, 3), vec![3, 6, 4]);
        assert_eq!(alpha_g(0, 3), vec![0, 0, 0]);
        assert_eq!(alpha_g(1, 4), vec![1, 2, 4, 8]);
    }

    #[test]
    fn alpha_g_counts_only_shifts() {
        reset_counters();
        let _ = alpha_g(3, 8);
        let c = op_counters();
        assert_eq!(c.word_mults, 0);
        assert_eq!(c.word_adds, 0);
        assert_eq!(c.bit_ops, 7);
    }

    #[test]
    fn add_identity_and_oracle() {
        let (p, sk, pk, mut rng) = toy_setup(1);
        let mask = p.mask();
        let zero = ReducedCipher::zero(p.cipher_rows(), p.block_count(), p.word_bits);
        for _ in 0..50 {
            let (m1, m2) = (rng.gen::<u64>() & mask, rng.gen::<u64>() & mask);
            let c1 = encrypt(&pk, m1, &mut rng);
            let c2 = encrypt(&pk, m2, &mut rng);
            let sum = add(&c1, &c2).unwrap();
            assert_eq!(decrypt(&sk, &sum), (m1.wrapping_add(m2)) & mask);
            assert_eq!(add(&c1, &zero).unwrap(), c1);
        }
    }

    #[test]
    fn mul_zero_noise_toy_example() {
        // 2 × 3 = 6 at ℓ = 3, keys with e = 0 and R = 0: exact everywhere.
        let p = Params::new(1, 2, 3, 1, 1, 0).unwrap();
        let (sk, pk) = crate::params::zero_noise_keypair(&p, 2);
        let r = WordMatrix::zeros(p.cipher_rows(), p.sample_count);
        let c1 = to_full(&crate::gsw::encrypt_with_randomness(&pk, 2, &r));
        let c2 = crate::gsw::encrypt_with_randomness(&pk, 3, &r);
        assert_eq!(decrypt(&sk, &mul(&c1, &c2).unwrap()), 6);
    }

    #[test]
    fn mul_oracle_demo_params() {
        // Signal operand bounded by the fixed-point magnitude keeps the
        // product noise far below the 2^62 budget.
        let p = Params::demo();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (sk, pk) = keygen(&p, &mut rng);
        for _ in 0..20 {
            let m1 = rng.gen::<u64>();
            let m2 = crate::words::embed(rng.gen_range(-(1i128 << 31)..(1i128 << 31)), 64);
            let c1 = to_full(&encrypt(&pk, m1, &mut rng));
            let c2 = encrypt(&pk, m2, &mut rng);
            let prod = mul(&c1, &c2).unwrap();
            assert_eq!(decrypt(&sk, &prod), m1.wrapping_mul(m2));
        }
    }

    #[test]
    fn mul_identity_message() {
        // Zero-noise encryption of 1 is a multiplicative identity on the
        // plaintext of any fresh cipher.
        let p = Params::toy();
        let (sk, pk) = crate::params::zero_noise_keypair(&p, 3);
        let r = WordMatrix::zeros(p.cipher_rows(), p.sample_count);
        let one = to_full(&crate::gsw::encrypt_with_randomness(&pk, 1, &r));
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = rng.gen::<u64>() & p.mask();
            let ct = encrypt(&pk, m, &mut rng);
            assert_eq!(decrypt(&sk, &mul(&one, &ct).unwrap()), m);
        }
    }

    #[test]
    fn scalar_ops_oracle() {
        let (p, sk, pk, mut rng) = toy_setup(4);
        let mask = p.mask();
        for _ in 0..50 {
            let m = rng.gen::<u64>() & mask;
            let alpha = rng.gen::<u64>() & mask;
            let ct = encrypt(&pk, m, &mut rng);
            assert_eq!(
                decrypt(&sk, &scalar_mul(alpha, &ct)),
                alpha.wrapping_mul(m) & mask
            );
            assert_eq!(
                decrypt(&sk, &scalar_add(alpha, &ct)),
                alpha.wrapping_add(m) & mask
            );
            assert_eq!(decrypt(&sk, &scalar_mul(1, &ct)), m);
            assert_eq!(decrypt(&sk, &scalar_mul(0, &ct)), 0);
            assert_eq!(scalar_add(0, &ct), ct);
        }
    }

    #[test]
    fn scalar_add_on_zero_encryption() {
        let p = Params::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (sk, pk) = keygen(&p, &mut rng);
        let r = WordMatrix::zeros(p.cipher_rows(), p.sample_count);
        let zero_ct = crate::gsw::encrypt_with_randomness(&pk, 0, &r);
        assert_eq!(decrypt(&sk, &scalar_add(5, &zero_ct)), 5);
    }

    #[test]
    fn full_path_equivalences() {
        let (p, _, pk, mut rng) = toy_setup(6);
        let mask = p.mask();
        for _ in 0..25 {
            let c1 = to_full(&encrypt(&pk, rng.gen::<u64>() & mask, &mut rng));
            let c2 = to_full(&encrypt(&pk, rng.gen::<u64>() & mask, &mut rng));
            let alpha = rng.gen::<u64>() & mask;

            let sum_full = add_full(&c1, &c2).unwrap();
            assert_eq!(
                to_reduced(&sum_full),
                add(&to_reduced(&c1), &to_reduced(&c2)).unwrap()
            );

            let prod_full = mul_full(&c1, &c2).unwrap();
            assert_eq!(to_reduced(&prod_full), mul(&c1, &to_reduced(&c2)).unwrap());

            let smul_full = scalar_mul_full(alpha, &c1);
            assert_eq!(to_reduced(&smul_full), scalar_mul(alpha, &to_reduced(&c1)));

            let sadd_full = scalar_add_full(alpha, &c1);
            assert_eq!(to_reduced(&sadd_full), scalar_add(alpha, &to_reduced(&c1)));
        }
    }

    #[test]
    fn reduced_path_multiplies_nothing() {
        let (p, _, pk, mut rng) = toy_setup(7);
        let mask = p.mask();
        let c1 = encrypt(&pk, rng.gen::<u64>() & mask, &mut rng);
        let c2 = encrypt(&pk, rng.gen::<u64>() & mask, &mut rng);
        let full = to_full(&c1);

        reset_counters();
        let _ = add(&c1, &c2).unwrap();
        assert_eq!(op_counters().word_mults, 0);
        assert_eq!(op_counters().word_adds, (p.cipher_rows() * p.block_count()) as u64);

        reset_counters();
        let _ = mul(&full, &c2).unwrap();
        assert_eq!(op_counters().word_mults, 0);

        reset_counters();
        let _ = scalar_mul(0xA5, &c1);
        assert_eq!(op_counters().word_mults, 0);

        reset_counters();
        let _ = scalar_add(0xA5, &c1);
        assert_eq!(op_counters().word_mults, 0);

        reset_counters();
        let _ = add_full(&full, &to_full(&c2)).unwrap();
        assert!(op_counters().word_mults > 0);
    }

    #[test]
    fn noise_grows_additively() {
        let p = Params::demo();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let (sk, pk) = keygen(&p, &mut rng);
        let budget = u128::from(p.sample_count as u64 * p.noise_bound);
        let m1 = rng.gen::<u64>();
        let m2 = rng.gen::<u64>();
        let c1 = encrypt(&pk, m1, &mut rng);
        let c2 = encrypt(&pk, m2, &mut rng);
        let sum = add(&c1, &c2).unwrap();
        assert!(noise_of_sum(&sk, &sum, m1, m2) <= 2 * budget);

        let alpha = rng.gen::<u64>();
        let sadd = scalar_add(alpha, &c1);
        assert!(
            crate::gsw::noise_of(&sk, &sadd, alpha.wrapping_add(m1)) <= budget
        );
    }

    fn noise_of_sum(
        sk: &crate::params::SecretKey,
        ct: &ReducedCipher,
        m1: u64,
        m2: u64,
    ) -> u128 {
        crate::gsw::noise_of(sk, ct, m1.wrapping_add(m2))
    }

    #[test]
    fn mul_noise_bound() {
        let p = Params::demo();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (sk, pk) = keygen(&p, &mut rng);
        let fresh = u128::from(p.sample_count as u64 * p.noise_bound);
        let n = p.cipher_rows() as u128;
        for _ in 0..5 {
            let m1 = rng.gen::<u64>();
            let m2 = rng.gen_range(0..1u64 << 31);
            let c1 = to_full(&encrypt(&pk, m1, &mut rng));
            let c2 = encrypt(&pk, m2, &mut rng);
            let prod = mul(&c1, &c2).unwrap();
            let bound = u128::from(m2) * fresh + n * fresh;
            assert!(crate::gsw::noise_of(&sk, &prod, m1.wrapping_mul(m2)) <= bound);
        }
    }

    #[test]
    fn scalar_mul_noise_bound() {
        let p = Params::demo();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let (sk, pk) = keygen(&p, &mut rng);
        let fresh = u128::from(p.sample_count as u64 * p.noise_bound);
        let n = p.cipher_rows() as u128;
        let m = rng.gen::<u64>();
        let alpha = rng.gen::<u64>();
        let ct = encrypt(&pk, m, &mut rng);
        let out = scalar_mul(alpha, &ct);
        assert!(crate::gsw::noise_of(&sk, &out, alpha.wrapping_mul(m)) <= n * fresh);
    }

    #[test]
    fn enc_mat_vec_oracle() {
        let (p, sk, pk, mut rng) = toy_setup(11);
        // 2x2 plaintext matrix times 2-vector, small entries.
        let a: Vec<Vec<u64>> = (0..2)
            .map(|_| (0..2).map(|_| rng.gen_range(0..4u64)).collect())
            .collect();
        let x: Vec<u64> = (0..2).map(|_| rng.gen_range(0..4u64)).collect();
        let enc_a: Vec<Vec<Cipher>> = a
            .iter()
            .map(|row| row.iter().map(|&v| to_full(&encrypt(&pk, v, &mut rng))).collect())
            .collect();
        let enc_x: Vec<ReducedCipher> =
            x.iter().map(|&v| encrypt(&pk, v, &mut rng)).collect();
        let out = enc_mat_vec(&enc_a, &enc_x).unwrap();
        for i in 0..2 {
            let expect = (a[i][0] * x[0] + a[i][1] * x[1]) & p.mask();
            assert_eq!(decrypt(&sk, &out[i]), expect);
        }

        // Zero-message ciphers decrypt to a zero vector.
        let zeros: Vec<ReducedCipher> = (0..2).map(|_| encrypt(&pk, 0, &mut rng)).collect();
        let out = enc_mat_vec(&enc_a, &zeros).unwrap();
        for ct in &out {
            assert_eq!(decrypt(&sk, ct), 0);
        }

        // 1x1 reduces to a single product.
        let single = enc_mat_vec(
            &[vec![enc_a[0][0].clone()]],
            std::slice::from_ref(&enc_x[0]),
        )
        .unwrap();
        assert_eq!(
            decrypt(&sk, &single[0]),
            decrypt(&sk, &mul(&enc_a[0][0], &enc_x[0]).unwrap())
        );
    }

    #[test]
    fn dimension_mismatch_detected() {
        let (p, _, pk, mut rng) = toy_setup(12);
        let small = Params::new(1, 2, 8, 1, 2, 1).unwrap();
        let (_, pk_small) = keygen(&small, &mut rng);
        let a = encrypt(&pk, 1, &mut rng);
        let b = encrypt(&pk_small, 1, &mut rng);
        assert!(add(&a, &b).is_err());
        assert!(mul(&to_full(&a), &b).is_err());
        let _ = p;
    }

    #[test]
    fn counter_scaling_linear_in_word_bits() {
        let mut adds = Vec::new();
        for ell in [8u32, 16, 32] {
            let p = Params::new(2, 3, ell, 1, 2, 1).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(13);
            let (_, pk) = keygen(&p, &mut rng);
            let c1 = encrypt(&pk, 5, &mut rng);
            let c2 = encrypt(&pk, 9, &mut rng);
            reset_counters();
            let _ = add(&c1, &c2).unwrap();
            adds.push(op_counters().word_adds as f64);
        }
        for pair in adds.windows(2) {
            let ratio = pair[1] / pair[0];
            assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
        }
    }
}
