//! Two-party protocol between the plant-side adapter and the cipher-only
//! controller.
//!
//! The adapter owns the keys, the plant interface and the plaintext
//! gains. The controller receives encrypted gains once at startup and
//! from then on sees nothing but word-form ciphers: per tick it gets
//! fresh E(x̂), E(u), E(y), computes E(x̂⁺) and E(u⁺) with masked adds
//! only, and sends them back. The adapter decrypts, fixes the fixed-point
//! exponent with one right shift, applies the input, re-encrypts, and
//! the cycle repeats — so multiplicative depth resets to one every
//! sample.
//!
//! Wire format: frames are `"RCFR" | type byte | LE u32 payload length |
//! payload`. Word-form ciphers serialize as `(rows, cols)` LE u32 pairs
//! followed by the rows, every word little-endian u64 (narrower widths
//! zero-padded). All multi-cipher payloads are plain concatenations.

use std::fmt;
use std::io::{self, Read, Write};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::control::{GainSet, WordController};
use crate::fixed::{q_decode, q_encode, rescale, QFormat};
use crate::gsw::{decrypt, encrypt, noise_of, to_full, Cipher, ReducedCipher};
use crate::hom::{enc_mat_vec, op_counters, reset_counters, DimensionMismatch, OpCounters};
use crate::params::{keygen, Params, ParamsError, PublicKey, SecretKey};
use crate::words::{Word, WordMatrix};

/// Frame magic prefix.
pub const FRAME_MAGIC: [u8; 4] = *b"RCFR";

/// Frame discriminants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    /// Adapter → controller: parameter block.
    HelloParams = 0,
    /// Adapter → controller: encrypted gains plus initial E(x̂), E(u).
    EncGains = 1,
    /// Adapter → controller: fresh E(x̂), E(u), E(y) for one tick.
    SignalsToController = 2,
    /// Controller → adapter: E(x̂⁺), E(u⁺) before rescaling.
    ResultsToAdapter = 3,
    /// Adapter → controller: end of session.
    Shutdown = 4,
}

impl MsgType {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::HelloParams),
            1 => Some(Self::EncGains),
            2 => Some(Self::SignalsToController),
            3 => Some(Self::ResultsToAdapter),
            4 => Some(Self::Shutdown),
            _ => None,
        }
    }
}

/// One length-prefixed protocol message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

/// Protocol failures.
#[derive(Debug)]
pub enum ProtocolError {
    MalformedFrame(&'static str),
    ChannelClosed,
    /// A decrypted controller result disagreed with the plaintext twin
    /// (or exceeded the a-priori noise cap) in verification mode.
    NoiseBudgetExceeded { step: usize, detail: &'static str },
    /// A measured signal does not fit the fixed-point range.
    SignalOutOfRange,
    InvalidParams(ParamsError),
    Dimensions(DimensionMismatch),
    Io(io::Error),
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MalformedFrame(what) => write!(f, "malformed frame: {what}"),
            Self::ChannelClosed => write!(f, "channel closed"),
            Self::NoiseBudgetExceeded { step, detail } => {
                write!(f, "verification failed at step {step}: {detail}")
            }
            Self::SignalOutOfRange => write!(f, "measured signal outside fixed-point range"),
            Self::InvalidParams(e) => write!(f, "bad parameter block: {e}"),
            Self::Dimensions(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for ProtocolError {}

impl From<io::Error> for ProtocolError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Self::ChannelClosed
        } else {
            Self::Io(e)
        }
    }
}

impl From<DimensionMismatch> for ProtocolError {
    fn from(e: DimensionMismatch) -> Self {
        Self::Dimensions(e)
    }
}

impl From<ParamsError> for ProtocolError {
    fn from(e: ParamsError) -> Self {
        Self::InvalidParams(e)
    }
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Self { msg_type, payload }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + self.payload.len());
        out.extend_from_slice(&FRAME_MAGIC);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProtocolError> {
        if bytes.len() < 9 {
            return Err(ProtocolError::MalformedFrame("short header"));
        }
        if bytes[0..4] != FRAME_MAGIC {
            return Err(ProtocolError::MalformedFrame("bad magic"));
        }
        let msg_type = MsgType::from_byte(bytes[4])
            .ok_or(ProtocolError::MalformedFrame("unknown message type"))?;
        let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        if bytes.len() != 9 + len {
            return Err(ProtocolError::MalformedFrame("length mismatch"));
        }
        Ok(Self { msg_type, payload: bytes[9..].to_vec() })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), ProtocolError> {
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, ProtocolError> {
        let mut header = [0u8; 9];
        r.read_exact(&mut header)?;
        if header[0..4] != FRAME_MAGIC {
            return Err(ProtocolError::MalformedFrame("bad magic"));
        }
        let msg_type = MsgType::from_byte(header[4])
            .ok_or(ProtocolError::MalformedFrame("unknown message type"))?;
        let len = u32::from_le_bytes(header[5..9].try_into().unwrap()) as usize;
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)?;
        Ok(Self { msg_type, payload })
    }
}

/// Append one word-form cipher to a payload buffer.
pub fn serialize_cipher(ct: &ReducedCipher, out: &mut Vec<u8>) {
    out.extend_from_slice(&(ct.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(ct.cols() as u32).to_le_bytes());
    for &w in ct.words().data() {
        out.extend_from_slice(&w.to_le_bytes());
    }
}

/// Parse one cipher at `offset`, validating dimensions and word range
/// against the parameter set. Returns the cipher and the next offset.
pub fn deserialize_cipher(
    bytes: &[u8],
    offset: usize,
    params: &Params,
) -> Result<(ReducedCipher, usize), ProtocolError> {
    let header_end = offset + 8;
    if bytes.len() < header_end {
        return Err(ProtocolError::MalformedFrame("truncated cipher header"));
    }
    let rows = u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[offset + 4..header_end].try_into().unwrap()) as usize;
    if rows != params.cipher_rows() || cols != params.block_count() {
        return Err(ProtocolError::MalformedFrame("cipher dimensions"));
    }
    let body_end = header_end + rows * cols * 8;
    if bytes.len() < body_end {
        return Err(ProtocolError::MalformedFrame("truncated cipher body"));
    }
    let mask = params.mask();
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes[header_end..body_end].chunks_exact(8) {
        let w = u64::from_le_bytes(chunk.try_into().unwrap());
        if w & !mask != 0 {
            return Err(ProtocolError::MalformedFrame("cipher word exceeds modulus"));
        }
        data.push(w);
    }
    Ok((
        ReducedCipher::from_words(WordMatrix::from_vec(rows, cols, data), params.word_bits),
        body_end,
    ))
}

fn deserialize_ciphers(
    bytes: &[u8],
    count: usize,
    params: &Params,
) -> Result<Vec<ReducedCipher>, ProtocolError> {
    let mut out = Vec::with_capacity(count);
    let mut offset = 0;
    for _ in 0..count {
        let (ct, next) = deserialize_cipher(bytes, offset, params)?;
        out.push(ct);
        offset = next;
    }
    if offset != bytes.len() {
        return Err(ProtocolError::MalformedFrame("trailing bytes"));
    }
    Ok(out)
}

/// Signal counts per frame: the composite layout is 6 gain rows of 8
/// entries, signals are [x̂ (5) | u (1) | y (2)], results [x̂⁺ (5) | u⁺ (1)].
pub const GAIN_ROWS: usize = 6;
pub const GAIN_COLS: usize = 8;
pub const SIGNAL_COUNT: usize = 8;
pub const RESULT_COUNT: usize = 6;

/// Per-tick word trace kept by the adapter (the equivalence fixture).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepWords {
    pub xhat: [Word; 5],
    pub u: Word,
    pub y: [Word; 2],
}

/// Plant-side party: keys, plaintext gains, trace, and the running
/// fixed-point state words.
pub struct AdapterState {
    pub params: Params,
    fmt: QFormat,
    secret_key: SecretKey,
    public_key: PublicKey,
    twin: WordController,
    rng: ChaCha20Rng,
    verify: bool,
    xhat_words: [Word; 5],
    u_word: Word,
    last_y_words: Option<[Word; 2]>,
    steps_done: usize,
    /// Word-level trace, one entry per adapter step.
    pub trace: Vec<StepWords>,
}

impl AdapterState {
    pub fn xhat_words(&self) -> [Word; 5] {
        self.xhat_words
    }

    pub fn u_word(&self) -> Word {
        self.u_word
    }

    /// Decoded state estimate.
    pub fn xhat(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (o, w) in out.iter_mut().zip(self.xhat_words) {
            *o = q_decode(w, self.fmt.frac_bits, self.fmt.word_bits);
        }
        out
    }
}

/// Build the adapter: generate keys, encrypt the gain blocks row-major
/// in the 6×8 composite layout followed by initial E(x̂ = 0) and
/// E(u = 0), and emit the handshake frames.
pub fn adapter_init(
    params: &Params,
    gains: &GainSet,
    seed: u64,
    verify: bool,
) -> Result<(AdapterState, Frame, Frame), ProtocolError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (secret_key, public_key) = keygen(params, &mut rng);
    let twin = WordController::new(gains).map_err(|_| ProtocolError::SignalOutOfRange)?;

    let mut hello = Vec::new();
    params.write_block(&mut hello);

    let mut payload = Vec::new();
    for row in twin.gain_rows() {
        for &word in row {
            serialize_cipher(&encrypt(&public_key, word, &mut rng), &mut payload);
        }
    }
    for _ in 0..6 {
        serialize_cipher(&encrypt(&public_key, 0, &mut rng), &mut payload);
    }

    let adapter = AdapterState {
        params: *params,
        fmt: twin.fmt,
        secret_key,
        public_key,
        twin,
        rng,
        verify,
        xhat_words: [0; 5],
        u_word: 0,
        last_y_words: None,
        steps_done: 0,
        trace: Vec::new(),
    };
    Ok((
        adapter,
        Frame::new(MsgType::HelloParams, hello),
        Frame::new(MsgType::EncGains, payload),
    ))
}

impl AdapterState {
    /// A-priori cap on per-entry noise after one controller tick:
    /// eight products, each bounded by (signal magnitude + N) times the
    /// fresh-cipher noise m·B.
    fn noise_cap(&self) -> u128 {
        let fresh =
            u128::from(self.params.sample_count as u64) * u128::from(self.params.noise_bound);
        let signal_bound = 1u128 << (self.fmt.int_bits + self.fmt.frac_bits - 1);
        SIGNAL_COUNT as u128 * fresh * (signal_bound + self.params.cipher_rows() as u128)
    }

    /// One adapter tick: ingest the controller's results (if any),
    /// rescale, apply, then re-encrypt state and the fresh measurement.
    ///
    /// Returns the input to hold over the coming sample interval and the
    /// signals frame for the controller.
    pub fn adapter_step(
        &mut self,
        results: Option<&Frame>,
        y_measured: [f64; 2],
    ) -> Result<(f64, Frame), ProtocolError> {
        if let Some(frame) = results {
            if frame.msg_type != MsgType::ResultsToAdapter {
                return Err(ProtocolError::MalformedFrame("expected results frame"));
            }
            let ciphers = deserialize_ciphers(&frame.payload, RESULT_COUNT, &self.params)?;
            let mut raw = [0 as Word; RESULT_COUNT];
            for (r, ct) in raw.iter_mut().zip(&ciphers) {
                *r = decrypt(&self.secret_key, ct);
            }
            if self.verify {
                let prev_y = self
                    .last_y_words
                    .ok_or(ProtocolError::MalformedFrame("results before any signals"))?;
                let expected = self.twin.step_raw(&self.xhat_words, self.u_word, &prev_y);
                let cap = self.noise_cap();
                for (i, (&got, &want)) in raw.iter().zip(&expected).enumerate() {
                    if got != want {
                        return Err(ProtocolError::NoiseBudgetExceeded {
                            step: self.steps_done,
                            detail: "decrypted word disagrees with plaintext twin",
                        });
                    }
                    if noise_of(&self.secret_key, &ciphers[i], want) > cap {
                        return Err(ProtocolError::NoiseBudgetExceeded {
                            step: self.steps_done,
                            detail: "cipher noise exceeds the a-priori cap",
                        });
                    }
                }
            }
            let shift = self.fmt.frac_bits;
            for (w, r) in self.xhat_words.iter_mut().zip(&raw[..5]) {
                *w = rescale(*r, shift, self.fmt.word_bits);
            }
            self.u_word = rescale(raw[5], shift, self.fmt.word_bits);
        }

        let u_applied = q_decode(self.u_word, self.fmt.frac_bits, self.fmt.word_bits);
        let mut y_words = [0 as Word; 2];
        for (w, v) in y_words.iter_mut().zip(y_measured) {
            *w = q_encode(v, self.fmt).map_err(|_| ProtocolError::SignalOutOfRange)?;
        }

        let mut payload = Vec::new();
        for &w in &self.xhat_words {
            serialize_cipher(&encrypt(&self.public_key, w, &mut self.rng), &mut payload);
        }
        serialize_cipher(&encrypt(&self.public_key, self.u_word, &mut self.rng), &mut payload);
        for &w in &y_words {
            serialize_cipher(&encrypt(&self.public_key, w, &mut self.rng), &mut payload);
        }

        self.trace.push(StepWords { xhat: self.xhat_words, u: self.u_word, y: y_words });
        self.last_y_words = Some(y_words);
        self.steps_done += 1;
        Ok((u_applied, Frame::new(MsgType::SignalsToController, payload)))
    }
}

/// Remote party: holds the encrypted gains in bit form (converted once
/// on receipt) and the latest encrypted signals. Never touches plaintext
/// or key material.
pub struct ControllerSession {
    params: Option<Params>,
    gains: Option<Vec<Vec<Cipher>>>,
    signals: Option<Vec<ReducedCipher>>,
    closed: bool,
    /// Per-tick (counters, wall ns) measured around the homomorphic
    /// evaluation; counters are collected on the executing thread.
    pub step_stats: Vec<(OpCounters, u128)>,
}

impl Default for ControllerSession {
    fn default() -> Self {
        Self::new()
    }
}

impl ControllerSession {
    pub fn new() -> Self {
        Self { params: None, gains: None, signals: None, closed: false, step_stats: Vec::new() }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn gains_loaded(&self) -> bool {
        self.gains.is_some()
    }

    /// Handle one frame; signal frames produce a results frame.
    pub fn on_frame(&mut self, frame: &Frame) -> Result<Option<Frame>, ProtocolError> {
        match frame.msg_type {
            MsgType::HelloParams => {
                self.params = Some(Params::read_block(&frame.payload)?);
                Ok(None)
            }
            MsgType::EncGains => {
                let params = self.params.ok_or(ProtocolError::MalformedFrame(
                    "gains before parameter block",
                ))?;
                let ciphers = deserialize_ciphers(
                    &frame.payload,
                    GAIN_ROWS * GAIN_COLS + RESULT_COUNT,
                    &params,
                )?;
                let mut iter = ciphers.into_iter();
                let mut gains = Vec::with_capacity(GAIN_ROWS);
                for _ in 0..GAIN_ROWS {
                    gains.push((0..GAIN_COLS).map(|_| to_full(&iter.next().unwrap())).collect());
                }
                self.gains = Some(gains);
                // Initial E(x̂), E(u); a dummy E(y) pair is not sent, so
                // signals stay absent until the first signals frame.
                let _initial: Vec<ReducedCipher> = iter.collect();
                Ok(None)
            }
            MsgType::SignalsToController => {
                let params = self.params.ok_or(ProtocolError::MalformedFrame(
                    "signals before parameter block",
                ))?;
                let gains = self
                    .gains
                    .as_ref()
                    .ok_or(ProtocolError::MalformedFrame("signals before gains"))?;
                let signals = deserialize_ciphers(&frame.payload, SIGNAL_COUNT, &params)?;

                let before = op_counters();
                reset_counters();
                let started = Instant::now();
                let results = enc_mat_vec(gains, &signals)?;
                let elapsed = started.elapsed().as_nanos();
                let used = op_counters();
                self.step_stats.push((used, elapsed));
                crate::hom::merge_counters(before);

                self.signals = Some(signals);
                let mut payload = Vec::new();
                for ct in &results {
                    serialize_cipher(ct, &mut payload);
                }
                Ok(Some(Frame::new(MsgType::ResultsToAdapter, payload)))
            }
            MsgType::ResultsToAdapter => {
                Err(ProtocolError::MalformedFrame("controller received results frame"))
            }
            MsgType::Shutdown => {
                self.closed = true;
                Ok(None)
            }
        }
    }
}
