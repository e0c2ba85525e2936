//! Lattice homomorphic encryption with word-packed "reduced" ciphers,
//! driving an encrypted observer/state-feedback loop that stabilizes a
//! simulated inverted double pendulum.
//!
//! A message μ ∈ Z_{2^ℓ} encrypts to an N×N binary matrix; its word form
//! is the N×(n+1) matrix obtained by collapsing each ℓ bit columns into
//! one word against the gadget matrix. On the word form, homomorphic
//! sums are element-wise adds and homomorphic products are masked
//! row-add scans — no word multiplications anywhere on the cipher path,
//! which the built-in operation counters verify. A plant-side adapter
//! (keys, Q-format codec, one right shift per tick) closes the loop with
//! a controller that only ever touches ciphers.
//!
//! Start with the runnable examples, one per capability:
//!
//! ```text
//! cargo run --release --example encrypt_roundtrip    # keygen + enc/dec
//! cargo run --release --example homomorphic_ops      # the four ops + counters
//! cargo run --release --example reduced_vs_full      # both paths, op counts
//! cargo run --release --example q_format             # fixed-point codec
//! cargo run --release --example pendulum             # plant + f64 control
//! cargo run --release --example observer_design      # pole placement
//! cargo run --release --example encrypted_pendulum   # full encrypted loop
//! cargo run --release --example socket_loop          # same, over TCP
//! ```
//!
//! The `redcipher` binary exposes `keygen`, `bench`, `simulate` and
//! `selftest` subcommands over the same library.

pub mod cli;
pub mod control;
pub mod fixed;
pub mod gsw;
pub mod hom;
pub mod params;
pub mod plant;
pub mod protocol;
pub mod sim;
pub mod words;

pub use control::{char_poly, composite_gains, place_observer, GainSet, WordController};
pub use fixed::{q_decode, q_encode, rescale, QFormat};
pub use gsw::{
    bit_decomp, bit_decomp_inv, decrypt, encrypt, encrypt_full, flatten, mp_dec, noise_of,
    powers_of_2, to_full, to_reduced, truncate, Cipher, ReducedCipher,
};
pub use hom::{
    add, add_full, alpha_g, enc_mat_vec, mul, mul_full, op_counters, reset_counters,
    scalar_add, scalar_add_full, scalar_mul, scalar_mul_full, OpCounters,
};
pub use params::{keygen, sample_noise, Params, PublicKey, SecretKey};
pub use plant::{advance_sample, dynamics, linearize, rk4_step, LinearModel, PlantParams, PlantState};
pub use sim::{
    run_closed_loop, run_f64_loop, run_plain_loop, SimConfig, Transport, FEEDBACK_GAIN,
    INITIAL_STATE, OBSERVER_POLES,
};
pub use words::{Word, WordMatrix};
