//! Scheme parameters, key-pair generation and noise sampling.
//!
//! Dimensions follow the usual LWE layout: the secret is an
//! (n+1)-vector s = [1, −t], the public key an m×(n+1) matrix
//! A = [b | B] with b = B·tᵀ + e, so A·s = e stays small. Ciphers later
//! expand each word into ℓ bit rows, giving N = (n+1)·ℓ cipher rows.
//!
//! The modulus is fixed to q = 2^ℓ: reduction is plain word truncation
//! and negatives are two's-complement words. The noise distribution is
//! the centered bounded uniform on [−B, B]; that keeps a hard per-entry
//! bound m·B on fresh cipher noise, which the decoder tolerates as long
//! as it stays below 2^(ℓ−2).

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::words::{centered, embed, word_mask, Word, WordMatrix};

/// Magic prefix of exported key files.
pub const KEY_FILE_MAGIC: [u8; 4] = *b"RCKY";
/// Current key-file version byte.
pub const KEY_FILE_VERSION: u8 = 1;

/// Validated scheme parameters.
///
/// `q = 2^word_bits` is implicit; `cipher_rows()` gives N = (n+1)·ℓ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Params {
    /// Lattice dimension n (length of the secret part t).
    pub lattice_dim: usize,
    /// Number of public-key samples m (rows of A).
    pub sample_count: usize,
    /// Word width ℓ in bits; the modulus is 2^ℓ.
    pub word_bits: u32,
    /// Q-format integer bits (sign included).
    pub int_bits: u32,
    /// Q-format fraction bits.
    pub frac_bits: u32,
    /// Max absolute magnitude of fresh noise entries.
    pub noise_bound: u64,
}

/// Parameter validation failures, named after the violated constraint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParamsError {
    ZeroDimension,
    WordBitsOutOfRange,
    /// m_q + n_q must leave room for one full product in an ℓ-bit word.
    QFormatTooWide { int_bits: u32, frac_bits: u32, word_bits: u32 },
    /// m·B must stay below 2^(ℓ−2) so fresh ciphers decrypt.
    NoiseBoundTooLarge,
}

impl fmt::Display for ParamsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ZeroDimension => write!(f, "lattice_dim and sample_count must be >= 1"),
            Self::WordBitsOutOfRange => write!(f, "word_bits must lie in [2, 64]"),
            Self::QFormatTooWide { int_bits, frac_bits, word_bits } => write!(
                f,
                "m_q + n_q = {} exceeds ceil(word_bits/2) = {}; one product would overflow",
                int_bits + frac_bits,
                word_bits.div_ceil(2)
            ),
            Self::NoiseBoundTooLarge => {
                write!(f, "sample_count * noise_bound must stay below 2^(word_bits-2)")
            }
        }
    }
}

impl std::error::Error for ParamsError {}

impl Params {
    /// Validate and derive a parameter set.
    pub fn new(
        lattice_dim: usize,
        sample_count: usize,
        word_bits: u32,
        int_bits: u32,
        frac_bits: u32,
        noise_bound: u64,
    ) -> Result<Self, ParamsError> {
        if lattice_dim == 0 || sample_count == 0 || int_bits == 0 {
            return Err(ParamsError::ZeroDimension);
        }
        if !(2..=64).contains(&word_bits) {
            return Err(ParamsError::WordBitsOutOfRange);
        }
        if int_bits + frac_bits > word_bits.div_ceil(2) {
            return Err(ParamsError::QFormatTooWide { int_bits, frac_bits, word_bits });
        }
        if noise_bound > u64::from(u32::MAX)
            || u128::from(sample_count as u64) * u128::from(noise_bound)
                >= 1u128 << (word_bits - 2)
        {
            return Err(ParamsError::NoiseBoundTooLarge);
        }
        Ok(Self {
            lattice_dim,
            sample_count,
            word_bits,
            int_bits,
            frac_bits,
            noise_bound,
        })
    }

    /// The stock parameter set used by the pendulum demo:
    /// n = 7, m = 7, ℓ = 64, Q10.22, noise bound 15.
    pub fn demo() -> Self {
        Self::new(7, 7, 64, 10, 22, 15).expect("demo parameters are valid")
    }

    /// Small geometry for fast exhaustive testing: n = 2, m = 3, ℓ = 8.
    pub fn toy() -> Self {
        Self::new(2, 3, 8, 1, 2, 1).expect("toy parameters are valid")
    }

    /// Number of word columns, n + 1.
    #[inline]
    pub fn block_count(&self) -> usize {
        self.lattice_dim + 1
    }

    /// Cipher row count N = (n+1)·ℓ.
    #[inline]
    pub fn cipher_rows(&self) -> usize {
        self.block_count() * self.word_bits as usize
    }

    /// All-ones mask of the active word width.
    #[inline]
    pub fn mask(&self) -> Word {
        word_mask(self.word_bits)
    }

    /// Serialize the six little-endian u32 fields of the parameter block.
    pub fn write_block(&self, out: &mut Vec<u8>) {
        for v in [
            self.lattice_dim as u32,
            self.sample_count as u32,
            self.word_bits,
            self.int_bits,
            self.frac_bits,
            self.noise_bound as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    /// Parse and re-validate a parameter block.
    pub fn read_block(bytes: &[u8]) -> Result<Self, ParamsError> {
        if bytes.len() < 24 {
            return Err(ParamsError::ZeroDimension);
        }
        let mut f = [0u32; 6];
        for (i, v) in f.iter_mut().enumerate() {
            *v = u32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap());
        }
        Self::new(f[0] as usize, f[1] as usize, f[2], f[3], f[4], u64::from(f[5]))
    }
}

/// Secret key s = [1, −t] as reduced words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    pub params: Params,
    /// n+1 words; `words[0] == 1`.
    pub words: Vec<Word>,
}

/// Public key A = [b | B], an m×(n+1) word matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub params: Params,
    pub matrix: WordMatrix,
}

/// Draw the fresh-noise vector: m words, each the two's-complement
/// embedding of an integer uniform on [−noise_bound, +noise_bound].
pub fn sample_noise(params: &Params, rng: &mut impl Rng) -> Vec<Word> {
    let bound = params.noise_bound as i64;
    (0..params.sample_count)
        .map(|_| embed(i128::from(rng.gen_range(-bound..=bound)), params.word_bits))
        .collect()
}

/// Generate a key pair. Draw order is fixed (t, then B row-major, then e)
/// so a seeded generator reproduces keys exactly.
pub fn keygen(params: &Params, rng: &mut impl Rng) -> (SecretKey, PublicKey) {
    let mask = params.mask();
    let t: Vec<Word> = (0..params.lattice_dim).map(|_| rng.gen::<u64>() & mask).collect();
    let mut b_part = WordMatrix::zeros(params.sample_count, params.lattice_dim);
    for r in 0..params.sample_count {
        for c in 0..params.lattice_dim {
            b_part.set(r, c, rng.gen::<u64>() & mask);
        }
    }
    let e = sample_noise(params, rng);
    keygen_from_parts(params, &t, &b_part, &e)
}

/// Assemble a key pair from explicit components (deterministic tests).
pub(crate) fn keygen_from_parts(
    params: &Params,
    t: &[Word],
    b_part: &WordMatrix,
    e: &[Word],
) -> (SecretKey, PublicKey) {
    let mask = params.mask();
    let n = params.lattice_dim;
    let m = params.sample_count;
    assert_eq!(t.len(), n);
    assert_eq!((b_part.rows(), b_part.cols()), (m, n));
    assert_eq!(e.len(), m);

    let mut matrix = WordMatrix::zeros(m, n + 1);
    for r in 0..m {
        // b = B·tᵀ + e, wrapped mod 2^ℓ.
        let mut acc: Word = e[r];
        for c in 0..n {
            acc = acc.wrapping_add(b_part.at(r, c).wrapping_mul(t[c])) & mask;
        }
        matrix.set(r, 0, acc);
        for c in 0..n {
            matrix.set(r, c + 1, b_part.at(r, c));
        }
    }

    let mut words = Vec::with_capacity(n + 1);
    words.push(1);
    for &tc in t {
        words.push(0u64.wrapping_sub(tc) & mask);
    }

    (
        SecretKey { params: *params, words },
        PublicKey { params: *params, matrix },
    )
}

/// Key pair with random t and B but e forced to zero, for exact-value
/// tests.
#[cfg(test)]
pub(crate) fn zero_noise_keypair(
    params: &Params,
    seed: u64,
) -> (SecretKey, PublicKey) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mask = params.mask();
    let t: Vec<Word> = (0..params.lattice_dim).map(|_| rng.gen::<u64>() & mask).collect();
    let mut b = WordMatrix::zeros(params.sample_count, params.lattice_dim);
    for r in 0..params.sample_count {
        for c in 0..params.lattice_dim {
            b.set(r, c, rng.gen::<u64>() & mask);
        }
    }
    let e = vec![0; params.sample_count];
    keygen_from_parts(params, &t, &b, &e)
}

/// Largest |centered((A·s) mod q)| entry; equals max |e| by construction,
/// so a valid pair never exceeds `noise_bound`.
pub fn key_noise(sk: &SecretKey, pk: &PublicKey) -> u128 {
    let p = &sk.params;
    let mask = p.mask();
    let mut worst = 0u128;
    for r in 0..pk.matrix.rows() {
        let mut acc: Word = 0;
        for c in 0..p.block_count() {
            acc = acc.wrapping_add(pk.matrix.at(r, c).wrapping_mul(sk.words[c])) & mask;
        }
        worst = worst.max(centered(acc, p.word_bits).unsigned_abs());
    }
    worst
}

/// Key-file IO errors.
#[derive(Debug)]
pub enum KeyFileError {
    Io(io::Error),
    Malformed(&'static str),
    Params(ParamsError),
}

impl fmt::Display for KeyFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(e) => write!(f, "key file io: {e}"),
            Self::Malformed(what) => write!(f, "malformed key file: {what}"),
            Self::Params(e) => write!(f, "key file params: {e}"),
        }
    }
}

impl std::error::Error for KeyFileError {}

impl From<io::Error> for KeyFileError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

/// Serialize a key pair:
/// magic "RCKY", version byte, 6×u32 LE parameter block, then the secret
/// words and the public matrix row-major, every word as little-endian u64.
pub fn key_file_bytes(sk: &SecretKey, pk: &PublicKey) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&KEY_FILE_MAGIC);
    out.push(KEY_FILE_VERSION);
    sk.params.write_block(&mut out);
    for &w in &sk.words {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for &w in pk.matrix.data() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn write_key_file(path: &Path, sk: &SecretKey, pk: &PublicKey) -> Result<(), KeyFileError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&key_file_bytes(sk, pk))?;
    Ok(())
}

pub fn read_key_file(path: &Path) -> Result<(SecretKey, PublicKey), KeyFileError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_key_file(&bytes)
}

pub fn parse_key_file(bytes: &[u8]) -> Result<(SecretKey, PublicKey), KeyFileError> {
    if bytes.len() < 5 + 24 || bytes[0..4] != KEY_FILE_MAGIC {
        return Err(KeyFileError::Malformed("header"));
    }
    if bytes[4] != KEY_FILE_VERSION {
        return Err(KeyFileError::Malformed("version"));
    }
    let params = Params::read_block(&bytes[5..29]).map_err(KeyFileError::Params)?;
    let n1 = params.block_count();
    let m = params.sample_count;
    let want = 29 + 8 * (n1 + m * n1);
    if bytes.len() != want {
        return Err(KeyFileError::Malformed("length"));
    }
    let mut words = bytes[29..]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()));
    let sk_words: Vec<Word> = words.by_ref().take(n1).collect();
    let pk_words: Vec<Word> = words.collect();
    if sk_words.first() != Some(&1) {
        return Err(KeyFileError::Malformed("secret key leading word"));
    }
    let mask = params.mask();
    if sk_words.iter().chain(&pk_words).any(|&w| w & !mask != 0) {
        return Err(KeyFileError::Malformed("word exceeds modulus"));
    }
    Ok((
        SecretKey { params, words: sk_words },
        PublicKey { params, matrix: WordMatrix::from_vec(m, n1, pk_words) },
    ))
}

/// Hex SHA-256 of the exported key bytes; stable per (params, seed).
pub fn key_fingerprint(sk: &SecretKey, pk: &PublicKey) -> String {
    let digest = Sha256::digest(key_file_bytes(sk, pk));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn demo_params_derive() {
        let p = Params::demo();
        assert_eq!(p.cipher_rows(), 512);
        assert_eq!(p.block_count(), 8);
        assert_eq!(p.mask(), u64::MAX);
    }

    #[test]
    fn smallest_geometry() {
        let p = Params::new(1, 2, 3, 1, 1, 0).unwrap();
        assert_eq!(p.cipher_rows(), 6);
        assert_eq!(p.mask(), 7);
    }

    #[test]
    fn q_format_too_wide_rejected() {
        let err = Params::new(7, 7, 64, 40, 40, 15).unwrap_err();
        assert!(matches!(err, ParamsError::QFormatTooWide { .. }));
    }

    #[test]
    fn noise_bound_rejected() {
        let err = Params::new(2, 3, 8, 1, 2, 32).unwrap_err();
        assert_eq!(err, ParamsError::NoiseBoundTooLarge);
    }

    #[test]
    fn keygen_invariant_small() {
        let p = Params::new(1, 2, 3, 1, 1, 0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let (sk, pk) = keygen(&p, &mut rng);
        assert_eq!(sk.words[0], 1);
        assert!(key_noise(&sk, &pk) <= u128::from(p.noise_bound));
    }

    #[test]
    fn degenerate_key_zero_t_zero_e() {
        let p = Params::new(2, 3, 8, 1, 2, 1).unwrap();
        let t = vec![0, 0];
        let mut b = WordMatrix::zeros(3, 2);
        for r in 0..3 {
            for c in 0..2 {
                b.set(r, c, (r * 2 + c + 1) as u64);
            }
        }
        let e = vec![0, 0, 0];
        let (sk, pk) = keygen_from_parts(&p, &t, &b, &e);
        // b column equals e = 0 and A·s = b.
        for r in 0..3 {
            assert_eq!(pk.matrix.at(r, 0), 0);
        }
        assert_eq!(key_noise(&sk, &pk), 0);
    }

    #[test]
    fn keygen_invariant_many_seeds() {
        let p = Params::demo();
        for seed in 0..1000u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (sk, pk) = keygen(&p, &mut rng);
            assert!(
                key_noise(&sk, &pk) <= u128::from(p.noise_bound),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn keygen_deterministic() {
        let p = Params::demo();
        let (sk1, pk1) = keygen(&p, &mut ChaCha20Rng::seed_from_u64(7));
        let (sk2, pk2) = keygen(&p, &mut ChaCha20Rng::seed_from_u64(7));
        assert_eq!(sk1, sk2);
        assert_eq!(pk1.matrix, pk2.matrix);
        assert_eq!(key_fingerprint(&sk1, &pk1), key_fingerprint(&sk2, &pk2));
    }

    #[test]
    fn noise_sampler_bounds_and_mean() {
        let p = Params::new(7, 7, 64, 10, 22, 15).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let mut sum = 0i128;
        let draws = 100_000 / p.sample_count * p.sample_count;
        let mut seen = 0usize;
        while seen < draws {
            for w in sample_noise(&p, &mut rng) {
                let c = centered(w, p.word_bits);
                assert!(c.abs() <= 15);
                sum += c;
                seen += 1;
            }
        }
        let mean = sum as f64 / seen as f64;
        assert!(mean.abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn zero_noise_bound_samples_zero() {
        let p = Params::new(1, 2, 3, 1, 1, 0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert!(sample_noise(&p, &mut rng).iter().all(|&w| w == 0));
    }

    #[test]
    fn key_file_round_trip() {
        let p = Params::toy();
        let (sk, pk) = keygen(&p, &mut ChaCha20Rng::seed_from_u64(11));
        let bytes = key_file_bytes(&sk, &pk);
        let (sk2, pk2) = parse_key_file(&bytes).unwrap();
        assert_eq!(sk, sk2);
        assert_eq!(pk.matrix, pk2.matrix);
        assert!(parse_key_file(&bytes[..bytes.len() - 1]).is_err());
    }
}
