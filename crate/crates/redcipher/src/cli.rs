//! Command implementations behind the `redcipher` binary: key
//! generation, operation benchmarks, closed-loop simulation and the
//! toy-parameter self test.
//!
//! Exit codes: 0 success, 2 usage, 3 verification failure, 4 io.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::fixed::{q_mul_plain, rescale};
use crate::gsw::{
    bit_decomp, bit_decomp_inv, decrypt, encrypt, flatten, to_full, to_reduced, truncate,
};
use crate::hom::{
    add, add_full, mul, mul_full, op_counters, reset_counters, scalar_add, scalar_add_full,
    scalar_mul, scalar_mul_full,
};
use crate::params::{key_fingerprint, keygen, write_key_file, Params};
use crate::protocol::ProtocolError;
use crate::sim::{
    run_closed_loop, BenchLog, BenchRow, SimConfig, SimError, Transport, SAMPLE_RATE_HZ,
};
use crate::words::{embed, WordMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Parser)]
#[command(
    name = "redcipher",
    version,
    about = "Word-packed GSW homomorphic encryption driving an encrypted pendulum controller",
    after_help = "CSV schemas:\n  \
        trajectory: t,theta1,dtheta1,theta2,dtheta2,T,u,xhat1..xhat5,y1,y2\n  \
        benchmark:  op,repr,n,ell,word_mults,word_adds,bit_ops,wall_ns"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair and write it to a key file.
    Keygen(KeygenArgs),
    /// Count word operations per homomorphic op and emit a benchmark CSV.
    Bench(BenchArgs),
    /// Run the encrypted closed-loop pendulum simulation.
    Simulate(SimulateArgs),
    /// Run the toy-parameter equivalence suite and report per property.
    Selftest,
}

#[derive(Args)]
struct KeygenArgs {
    /// Lattice dimension n.
    #[arg(long, default_value_t = 7)]
    n: usize,
    /// Public-key sample count m.
    #[arg(long, default_value_t = 7)]
    m: usize,
    /// Word width in bits (the modulus is 2^ell).
    #[arg(long, default_value_t = 64)]
    ell: u32,
    /// Fixed-point integer bits.
    #[arg(long, default_value_t = 10)]
    mq: u32,
    /// Fixed-point fraction bits.
    #[arg(long, default_value_t = 22)]
    nq: u32,
    /// Fresh-noise magnitude bound.
    #[arg(long, default_value_t = 15)]
    noise_bound: u64,
    /// RNG seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output key file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated ops: add,mul,scalar_add,scalar_mul.
    #[arg(long, default_value = "add,mul,scalar_add,scalar_mul")]
    ops: String,
    /// Comma-separated word widths to sweep.
    #[arg(long = "ell-sweep", default_value = "8,16,32")]
    ell_sweep: String,
    /// Representation: full, reduced or both.
    #[arg(long, default_value = "both")]
    repr: String,
    /// Lattice dimension for the sweep.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Sample count for the sweep.
    #[arg(long, default_value_t = 3)]
    m: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Config file with `key = value` lines
    /// (seed, duration_s, transport, substeps, noise_bound, verify).
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Run length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Frame transport: inproc or socket.
    #[arg(long)]
    transport: Option<String>,
    /// RK4 substeps per controller sample.
    #[arg(long)]
    substeps: Option<u32>,
    /// Fresh-noise magnitude bound.
    #[arg(long)]
    noise_bound: Option<u64>,
    /// Run the plaintext twin in lockstep and fail on any mismatch.
    #[arg(long, default_value_t = false)]
    verify: bool,
    /// Trajectory CSV output path.
    #[arg(long = "csv-out")]
    csv_out: Option<PathBuf>,
    /// Per-step benchmark CSV output path.
    #[arg(long = "bench-csv")]
    bench_csv: Option<PathBuf>,
}

/// Parse arguments and dispatch; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path with code 0.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Keygen(args) => cmd_keygen(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Selftest => cmd_selftest(),
    }
}

fn cmd_keygen(args: &KeygenArgs) -> i32 {
    let params = match Params::new(args.n, args.m, args.ell, args.mq, args.nq, args.noise_bound)
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
    let (sk, pk) = keygen(&params, &mut rng);
    if let Err(e) = write_key_file(&args.out, &sk, &pk) {
        eprintln!("error: {e}");
        return EXIT_IO;
    }
    println!(
        "params: n={} m={} ell={} mq={} nq={} noise_bound={}",
        params.lattice_dim,
        params.sample_count,
        params.word_bits,
        params.int_bits,
        params.frac_bits,
        params.noise_bound
    );
    println!(
        "key dims: secret {} words, public {}x{}; ciphers {}x{} words",
        params.block_count(),
        params.sample_count,
        params.block_count(),
        params.cipher_rows(),
        params.block_count()
    );
    println!("wrote {}", args.out.display());
    println!("fingerprint: sha256:{}", key_fingerprint(&sk, &pk));
    EXIT_OK
}

fn cmd_bench(args: &BenchArgs) -> i32 {
    let ops: Vec<&str> = args.ops.split(',').map(str::trim).collect();
    for op in &ops {
        if !["add", "mul", "scalar_add", "scalar_mul"].contains(op) {
            eprintln!("error: unknown op '{op}'");
            return EXIT_USAGE;
        }
    }
    let reprs: Vec<&str> = match args.repr.as_str() {
        "full" => vec!["full"],
        "reduced" => vec!["reduced"],
        "both" => vec!["reduced", "full"],
        other => {
            eprintln!("error: unknown repr '{other}'");
            return EXIT_USAGE;
        }
    };
    let mut ells = Vec::new();
    for part in args.ell_sweep.split(',') {
        match part.trim().parse::<u32>() {
            Ok(v) => ells.push(v),
            Err(_) => {
                eprintln!("error: bad ell '{part}'");
                return EXIT_USAGE;
            }
        }
    }

    let mut log = BenchLog::default();
    for &ell in &ells {
        let params = match Params::new(args.n, args.m, ell, 1, 1, 1) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("error: ell={ell}: {e}");
                return EXIT_USAGE;
            }
        };
        let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
        let (_, pk) = keygen(&params, &mut rng);
        let mask = params.mask();
        let c1 = encrypt(&pk, rng.gen::<u64>() & mask, &mut rng);
        let c2 = encrypt(&pk, rng.gen::<u64>() & mask, &mut rng);
        let (f1, f2) = (to_full(&c1), to_full(&c2));
        let alpha = rng.gen::<u64>() & mask;

        for repr in &reprs {
            for op in &ops {
                reset_counters();
                let started = Instant::now();
                match (*repr, *op) {
                    ("reduced", "add") => drop(add(&c1, &c2)),
                    ("reduced", "mul") => drop(mul(&f1, &c2)),
                    ("reduced", "scalar_add") => drop(scalar_add(alpha, &c1)),
                    ("reduced", "scalar_mul") => drop(scalar_mul(alpha, &c1)),
                    ("full", "add") => drop(add_full(&f1, &f2)),
                    ("full", "mul") => drop(mul_full(&f1, &f2)),
                    ("full", "scalar_add") => drop(scalar_add_full(alpha, &f1)),
                    ("full", "scalar_mul") => drop(scalar_mul_full(alpha, &f1)),
                    _ => unreachable!(),
                }
                let wall_ns = started.elapsed().as_nanos();
                log.rows.push(BenchRow {
                    op: (*op).into(),
                    repr: (*repr).into(),
                    lattice_dim: args.n,
                    word_bits: ell,
                    counters: op_counters(),
                    wall_ns,
                });
            }
        }
    }

    let csv = log.to_csv();
    match &args.csv {
        Some(path) => {
            if let Err(e) = fs::write(path, &csv) {
                eprintln!("error: write {}: {e}", path.display());
                return EXIT_IO;
            }
            println!("wrote {} rows to {}", log.rows.len(), path.display());
        }
        None => print!("{csv}"),
    }
    EXIT_OK
}

fn cmd_simulate(args: &SimulateArgs) -> i32 {
    let mut config = SimConfig::default();
    if let Some(path) = &args.config {
        if !path.exists() {
            eprintln!("error: config file {} does not exist", path.display());
            return EXIT_USAGE;
        }
        if let Err(e) = config.apply_file(path) {
            eprintln!("error: {e}");
            return match e {
                SimError::Io(_) => EXIT_IO,
                _ => EXIT_USAGE,
            };
        }
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(duration) = args.duration {
        config.duration_s = duration;
    }
    if let Some(transport) = &args.transport {
        match Transport::parse(transport) {
            Some(t) => config.transport = t,
            None => {
                eprintln!("error: unknown transport '{transport}'");
                return EXIT_USAGE;
            }
        }
    }
    if let Some(substeps) = args.substeps {
        config.substeps = substeps;
    }
    if let Some(noise_bound) = args.noise_bound {
        config.noise_bound = noise_bound;
    }
    config.verify |= args.verify;

    let started = Instant::now();
    let out = match run_closed_loop(&config) {
        Ok(out) => out,
        Err(SimError::Protocol(ProtocolError::NoiseBudgetExceeded { step, detail })) => {
            eprintln!("verification: FAIL at step {step}: {detail}");
            return EXIT_VERIFY;
        }
        Err(SimError::Io(e)) => {
            eprintln!("error: {e}");
            return EXIT_IO;
        }
        Err(SimError::Config(e)) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let elapsed = started.elapsed();

    let steps = out.trace.rows.len();
    println!(
        "simulated {steps} steps ({} s at {} Hz), transport {}, seed {}",
        config.duration_s, SAMPLE_RATE_HZ as u32, config.transport, config.seed
    );
    if let Some(last) = out.trace.rows.last() {
        println!(
            "final angles: theta1 = {:+.6} rad, theta2 = {:+.6} rad",
            last.state.theta1, last.state.theta2
        );
    }
    if !out.bench.rows.is_empty() {
        let total_ns: u128 = out.bench.rows.iter().map(|r| r.wall_ns).sum();
        let mults: u64 = out.bench.rows.iter().map(|r| r.counters.word_mults).sum();
        println!(
            "controller step: mean {:.3} ms, word multiplications total {}",
            total_ns as f64 / out.bench.rows.len() as f64 / 1e6,
            mults
        );
    }
    println!("wall time: {:.2} s", elapsed.as_secs_f64());
    if config.verify {
        println!("verification: PASS ({steps} steps word-exact against the plaintext twin)");
    }

    if let Some(path) = &args.csv_out {
        if let Err(e) = fs::write(path, out.trace.to_csv()) {
            eprintln!("error: write {}: {e}", path.display());
            return EXIT_IO;
        }
        println!("wrote trajectory CSV to {}", path.display());
    }
    if let Some(path) = &args.bench_csv {
        if let Err(e) = fs::write(path, out.bench.to_csv()) {
            eprintln!("error: write {}: {e}", path.display());
            return EXIT_IO;
        }
        println!("wrote benchmark CSV to {}", path.display());
    }
    EXIT_OK
}

fn cmd_selftest() -> i32 {
    let results = selftest_checks(false);
    let mut ok = true;
    for (name, passed) in &results {
        println!("{} {name}", if *passed { "PASS" } else { "FAIL" });
        ok &= passed;
    }
    if ok {
        println!("selftest: all {} properties hold", results.len());
        EXIT_OK
    } else {
        println!("selftest: FAILURES PRESENT");
        EXIT_VERIFY
    }
}

/// The toy-parameter property suite. `corrupt_flatten` injects a one-bit
/// fault into the bit-form sum so the equivalence check must trip (used
/// to prove the suite can fail).
pub(crate) fn selftest_checks(corrupt_flatten: bool) -> Vec<(&'static str, bool)> {
    let params = Params::toy();
    let mut rng = ChaCha20Rng::seed_from_u64(0xd1a6);
    let (sk, pk) = keygen(&params, &mut rng);
    let mask = params.mask();
    let mut results = Vec::new();

    let mut ok = true;
    for _ in 0..100 {
        let mu = rng.gen::<u64>() & mask;
        ok &= decrypt(&sk, &encrypt(&pk, mu, &mut rng)) == mu;
    }
    results.push(("encrypt/decrypt round trip (100 messages)", ok));

    let mut ok = true;
    for _ in 0..50 {
        let m = WordMatrix::from_rows(&[
            (0..4).map(|_| rng.gen::<u64>()).collect(),
            (0..4).map(|_| rng.gen::<u64>()).collect(),
        ]);
        ok &= bit_decomp_inv(&bit_decomp(&m, params.word_bits), params.word_bits)
            == truncate(&m, params.word_bits);
    }
    results.push(("bit decomposition inverts to truncation (50 matrices)", ok));

    let mut sum_ok = true;
    let mut prod_ok = true;
    let mut scalar_prod_ok = true;
    let mut scalar_sum_ok = true;
    for trial in 0..25 {
        let c1 = encrypt(&pk, rng.gen::<u64>() & mask, &mut rng);
        let c2 = encrypt(&pk, rng.gen::<u64>() & mask, &mut rng);
        let alpha = rng.gen::<u64>() & mask;
        let (f1, f2) = (to_full(&c1), to_full(&c2));

        let mut full_sum = to_reduced(&add_full(&f1, &f2).unwrap());
        if corrupt_flatten && trial == 0 {
            let w = full_sum.words().at(0, 0) ^ 1;
            full_sum.words_mut().set(0, 0, w);
        }
        sum_ok &= full_sum == add(&c1, &c2).unwrap();
        prod_ok &= to_reduced(&mul_full(&f1, &f2).unwrap()) == mul(&f1, &c2).unwrap();
        scalar_prod_ok &=
            to_reduced(&scalar_mul_full(alpha, &f1)) == scalar_mul(alpha, &c1);
        scalar_sum_ok &=
            to_reduced(&scalar_add_full(alpha, &f1)) == scalar_add(alpha, &c1);
    }
    results.push(("word-form sum equals bit-form sum (25 pairs)", sum_ok));
    results.push(("word-form product equals bit-form product (25 pairs)", prod_ok));
    results.push(("word-form scalar product equals bit-form (25 pairs)", scalar_prod_ok));
    results.push(("word-form scalar sum equals bit-form (25 pairs)", scalar_sum_ok));

    let mut ok = true;
    for _ in 0..20 {
        let bits = crate::gsw::sample_binary_matrix(6, 16, &mut rng);
        ok &= flatten(&bits, params.word_bits) == bits;
    }
    results.push(("flatten is idempotent on binary matrices", ok));

    let mut ok = true;
    for _ in 0..20 {
        let ct = encrypt(&pk, rng.gen::<u64>() & mask, &mut rng);
        ok &= to_reduced(&to_full(&ct)) == ct;
    }
    results.push(("representation conversions round-trip", ok));

    let mut ok = true;
    for _ in 0..1000 {
        let a = rng.gen_range(-(1i128 << 31)..(1i128 << 31));
        let b = rng.gen_range(-(1i128 << 31)..(1i128 << 31));
        let got = rescale(q_mul_plain(embed(a, 64), embed(b, 64), 64), 22, 64);
        ok &= got == embed((a * b) >> 22, 64);
    }
    results.push(("fixed-point product floors to the grid (1000 pairs)", ok));

    results
}
