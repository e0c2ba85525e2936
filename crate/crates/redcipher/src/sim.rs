//! Closed-loop simulation: the encrypted loop, its plaintext fixed-point
//! twin, and a double-precision reference loop, all sharing one plant
//! integrator and one latency convention.
//!
//! Timing per tick k: the adapter ingests the controller's previous
//! results (yielding x̂(k), u(k)), applies u(k) over the coming sample
//! interval, and ships E(x̂(k)), E(u(k)), E(y(k)); the controller's reply
//! is consumed at tick k+1. The input computed from tick-k data therefore
//! acts one sample later.

use std::fmt;
use std::fs;
use std::io;
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::thread::{self, JoinHandle};

use nalgebra::DMatrix;

use crate::control::{
    composite_gains, f64_composite_step, place_observer, ControlError, GainSet, WordController,
};
use crate::fixed::{q_decode, q_encode, rescale, QFormat};
use crate::hom::OpCounters;
use crate::params::{Params, ParamsError};
use crate::plant::{advance_sample, linearize, LinearModel, PlantParams, PlantState, SingularMass};
use crate::protocol::{
    adapter_init, ControllerSession, Frame, MsgType, ProtocolError,
};
use crate::words::Word;

/// Controller update rate (Hz) and period (s).
pub const SAMPLE_RATE_HZ: f64 = 100.0;
pub const SAMPLE_PERIOD: f64 = 0.01;

/// Stock state-feedback row for the demo pendulum. The row stabilizes
/// this plant realization (base torque [T, 0]ᵀ, k_m = +50) when applied
/// with inverted motor polarity, u = −K·x̂; `ControlRig` bakes the sign
/// into the composite gains.
pub const FEEDBACK_GAIN: [f64; 5] = [-12.6, -1.8, -9.8, -0.95, 0.015];

/// Observer pole set the demo gain L is placed at.
pub const OBSERVER_POLES: [f64; 5] = [0.7, 0.5, 0.8, 0.6, 0.85];

/// Perturbed initial condition the stabilization runs start from.
pub const INITIAL_STATE: PlantState = PlantState {
    theta1: 0.0289,
    dtheta1: 0.0669,
    theta2: 0.1156,
    dtheta2: 0.0049,
    torque: 0.0,
};

/// Which channel carries the frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transport {
    InProcess,
    Socket,
}

impl Transport {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inproc" | "in-process" | "inprocess" => Some(Self::InProcess),
            "socket" | "tcp" => Some(Self::Socket),
            _ => None,
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InProcess => write!(f, "inproc"),
            Self::Socket => write!(f, "socket"),
        }
    }
}

/// Run configuration; file values are overridden by CLI flags.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub transport: Transport,
    pub substeps: u32,
    pub noise_bound: u64,
    pub verify: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            duration_s: 10.0,
            transport: Transport::InProcess,
            substeps: 100,
            noise_bound: 15,
            verify: false,
        }
    }
}

/// Bad line in a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

impl SimConfig {
    /// Apply `key = value` lines ('#' starts a comment) on top of the
    /// current values. Unknown keys are rejected.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(ConfigError { line, message: "expected key = value".into() });
            };
            let (key, value) = (key.trim(), value.trim());
            let bad = |message: String| ConfigError { line, message };
            match key {
                "seed" => {
                    self.seed =
                        value.parse().map_err(|_| bad(format!("bad seed '{value}'")))?;
                }
                "duration_s" => {
                    self.duration_s =
                        value.parse().map_err(|_| bad(format!("bad duration '{value}'")))?;
                }
                "transport" => {
                    self.transport = Transport::parse(value)
                        .ok_or_else(|| bad(format!("unknown transport '{value}'")))?;
                }
                "substeps" => {
                    self.substeps =
                        value.parse().map_err(|_| bad(format!("bad substeps '{value}'")))?;
                }
                "noise_bound" => {
                    self.noise_bound =
                        value.parse().map_err(|_| bad(format!("bad noise bound '{value}'")))?;
                }
                "verify" => {
                    self.verify = match value {
                        "true" | "1" | "on" => true,
                        "false" | "0" | "off" => false,
                        _ => return Err(bad(format!("bad verify flag '{value}'"))),
                    };
                }
                other => return Err(bad(format!("unknown key '{other}'"))),
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), SimError> {
        let text = fs::read_to_string(path)?;
        self.apply_str(&text)?;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration_s * SAMPLE_RATE_HZ).round() as usize
    }
}

/// Anything that can end a simulation early.
#[derive(Debug)]
pub enum SimError {
    Config(ConfigError),
    Params(ParamsError),
    Control(ControlError),
    Plant(SingularMass),
    Protocol(ProtocolError),
    Io(io::Error),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e}"),
            Self::Params(e) => write!(f, "{e}"),
            Self::Control(e) => write!(f, "{e}"),
            Self::Plant(e) => write!(f, "{e}"),
            Self::Protocol(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for SimError {}

impl From<ConfigError> for SimError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<ParamsError> for SimError {
    fn from(e: ParamsError) -> Self {
        Self::Params(e)
    }
}

impl From<ControlError> for SimError {
    fn from(e: ControlError) -> Self {
        Self::Control(e)
    }
}

impl From<SingularMass> for SimError {
    fn from(e: SingularMass) -> Self {
        Self::Plant(e)
    }
}

impl From<ProtocolError> for SimError {
    fn from(e: ProtocolError) -> Self {
        Self::Protocol(e)
    }
}

impl From<io::Error> for SimError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

/// One sample of the closed loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub state: PlantState,
    pub u_applied: f64,
    pub xhat: [f64; 5],
    pub y: [f64; 2],
    /// Fixed-point words behind the decoded values (zero in the
    /// double-precision reference loop).
    pub xhat_words: [Word; 5],
    pub u_word: Word,
    pub y_words: [Word; 2],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceLog {
    pub rows: Vec<TraceRow>,
}

impl TraceLog {
    /// The trajectory CSV: t, state, applied input, state estimate and
    /// measurements.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "t,theta1,dtheta1,theta2,dtheta2,T,u,xhat1,xhat2,xhat3,xhat4,xhat5,y1,y2\n",
        );
        for r in &self.rows {
            let s = r.state;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.t,
                s.theta1,
                s.dtheta1,
                s.theta2,
                s.dtheta2,
                s.torque,
                r.u_applied,
                r.xhat[0],
                r.xhat[1],
                r.xhat[2],
                r.xhat[3],
                r.xhat[4],
                r.y[0],
                r.y[1],
            ));
        }
        out
    }

    /// Word-level equality with another trace (the exactness criterion).
    pub fn words_equal(&self, other: &TraceLog) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.xhat_words == b.xhat_words && a.u_word == b.u_word && a.y_words == b.y_words
            })
    }
}

/// One benchmark record.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub op: String,
    pub repr: String,
    pub lattice_dim: usize,
    pub word_bits: u32,
    pub counters: OpCounters,
    pub wall_ns: u128,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchLog {
    pub rows: Vec<BenchRow>,
}

impl BenchLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("op,repr,n,ell,word_mults,word_adds,bit_ops,wall_ns\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.op,
                r.repr,
                r.lattice_dim,
                r.word_bits,
                r.counters.word_mults,
                r.counters.word_adds,
                r.counters.bit_ops,
                r.wall_ns,
            ));
        }
        out
    }
}

/// Everything the loops share: validated parameters, the discrete model,
/// the placed observer gain, and the composite gain set.
pub struct ControlRig {
    pub params: Params,
    pub plant: PlantParams,
    pub model: LinearModel,
    pub observer_gain: DMatrix<f64>,
    pub feedback_gain: DMatrix<f64>,
    pub gains: GainSet,
}

impl ControlRig {
    pub fn build(noise_bound: u64) -> Result<Self, SimError> {
        let params = Params::new(7, 7, 64, 10, 22, noise_bound)?;
        let plant = PlantParams::demo();
        let model = linearize(&plant, SAMPLE_PERIOD)?;
        let observer_gain = place_observer(&model.a, &model.c, &OBSERVER_POLES)?;
        // Motor polarity: u = −K·x̂ (the delayed loop has spectral radius
        // 0.91 this way round and 1.50 the other).
        let feedback_gain = -DMatrix::from_row_slice(1, 5, &FEEDBACK_GAIN);
        let gains = composite_gains(
            &model,
            &observer_gain,
            &feedback_gain,
            QFormat::from_params(&params),
        )?;
        Ok(Self { params, plant, model, observer_gain, feedback_gain, gains })
    }
}

/// Output of the encrypted loop.
pub struct LoopOutput {
    pub trace: TraceLog,
    pub bench: BenchLog,
}

enum ControllerLink {
    Local(Box<ControllerSession>),
    Remote {
        stream: TcpStream,
        handle: JoinHandle<Result<ControllerSession, ProtocolError>>,
    },
}

impl ControllerLink {
    fn connect(transport: Transport) -> Result<Self, ProtocolError> {
        match transport {
            Transport::InProcess => Ok(Self::Local(Box::new(ControllerSession::new()))),
            Transport::Socket => {
                let listener = TcpListener::bind(("127.0.0.1", 0))?;
                let addr = listener.local_addr()?;
                let handle = thread::spawn(move || serve_controller(&listener));
                let stream = TcpStream::connect(addr)?;
                stream.set_nodelay(true)?;
                Ok(Self::Remote { stream, handle })
            }
        }
    }

    fn send(&mut self, frame: &Frame) -> Result<Option<Frame>, ProtocolError> {
        let expects_reply = frame.msg_type == MsgType::SignalsToController;
        match self {
            Self::Local(session) => session.on_frame(frame),
            Self::Remote { stream, .. } => {
                frame.write_to(stream)?;
                if expects_reply {
                    Ok(Some(Frame::read_from(stream)?))
                } else {
                    Ok(None)
                }
            }
        }
    }

    fn finish(self) -> Result<ControllerSession, ProtocolError> {
        match self {
            Self::Local(session) => Ok(*session),
            Self::Remote { stream, handle } => {
                drop(stream);
                handle.join().map_err(|_| ProtocolError::ChannelClosed)?
            }
        }
    }
}

/// Accept one adapter connection and answer frames until shutdown.
pub fn serve_controller(listener: &TcpListener) -> Result<ControllerSession, ProtocolError> {
    let (mut stream, _) = listener.accept()?;
    stream.set_nodelay(true)?;
    let mut session = ControllerSession::new();
    while !session.is_closed() {
        let frame = Frame::read_from(&mut stream)?;
        if let Some(reply) = session.on_frame(&frame)? {
            reply.write_to(&mut stream)?;
        }
    }
    Ok(session)
}

/// Run the encrypted loop: plant at 100 Hz, controller on ciphers only.
pub fn run_closed_loop(config: &SimConfig) -> Result<LoopOutput, SimError> {
    let rig = ControlRig::build(config.noise_bound)?;
    let (mut adapter, hello, enc_gains) =
        adapter_init(&rig.params, &rig.gains, config.seed, config.verify)?;
    let mut link = ControllerLink::connect(config.transport)?;
    link.send(&hello)?;
    link.send(&enc_gains)?;

    let mut state = INITIAL_STATE;
    let mut results: Option<Frame> = None;
    let mut trace = TraceLog::default();
    for k in 0..config.steps() {
        let y = state.outputs();
        let (u_applied, signals) = adapter.adapter_step(results.as_ref(), y)?;
        let words = *adapter.trace.last().expect("adapter_step records a row");
        trace.rows.push(TraceRow {
            t: k as f64 * SAMPLE_PERIOD,
            state,
            u_applied,
            xhat: adapter.xhat(),
            y,
            xhat_words: words.xhat,
            u_word: words.u,
            y_words: words.y,
        });
        let reply = link.send(&signals)?;
        results = Some(reply.ok_or(ProtocolError::ChannelClosed)?);
        state = advance_sample(&state, u_applied, SAMPLE_PERIOD, config.substeps, &rig.plant)?;
    }
    link.send(&Frame::new(MsgType::Shutdown, Vec::new()))?;
    let session = link.finish()?;

    let bench = BenchLog {
        rows: session
            .step_stats
            .iter()
            .map(|(counters, wall_ns)| BenchRow {
                op: "controller_step".into(),
                repr: "reduced".into(),
                lattice_dim: rig.params.lattice_dim,
                word_bits: rig.params.word_bits,
                counters: *counters,
                wall_ns: *wall_ns,
            })
            .collect(),
    };
    Ok(LoopOutput { trace, bench })
}

/// The unencrypted fixed-point twin: identical words, no ciphers.
pub fn run_plain_loop(config: &SimConfig) -> Result<TraceLog, SimError> {
    let rig = ControlRig::build(config.noise_bound)?;
    let twin = WordController::new(&rig.gains).map_err(ControlError::GainOutOfRange)?;
    let fmt = twin.fmt;

    let mut state = INITIAL_STATE;
    let mut xhat_words = [0 as Word; 5];
    let mut u_word: Word = 0;
    let mut pending: Option<[Word; 6]> = None;
    let mut trace = TraceLog::default();
    for k in 0..config.steps() {
        let y = state.outputs();
        if let Some(raw) = pending.take() {
            for (w, r) in xhat_words.iter_mut().zip(&raw[..5]) {
                *w = rescale(*r, fmt.frac_bits, fmt.word_bits);
            }
            u_word = rescale(raw[5], fmt.frac_bits, fmt.word_bits);
        }
        let u_applied = q_decode(u_word, fmt.frac_bits, fmt.word_bits);
        let mut y_words = [0 as Word; 2];
        for (w, v) in y_words.iter_mut().zip(y) {
            *w = q_encode(v, fmt).map_err(|_| ProtocolError::SignalOutOfRange)?;
        }
        let mut xhat = [0.0; 5];
        for (x, w) in xhat.iter_mut().zip(xhat_words) {
            *x = q_decode(w, fmt.frac_bits, fmt.word_bits);
        }
        trace.rows.push(TraceRow {
            t: k as f64 * SAMPLE_PERIOD,
            state,
            u_applied,
            xhat,
            y,
            xhat_words,
            u_word,
            y_words,
        });
        pending = Some(twin.step_raw(&xhat_words, u_word, &y_words));
        state = advance_sample(&state, u_applied, SAMPLE_PERIOD, config.substeps, &rig.plant)?;
    }
    Ok(trace)
}

/// The double-precision reference loop (composite gain form).
pub fn run_f64_loop(config: &SimConfig) -> Result<TraceLog, SimError> {
    let rig = ControlRig::build(config.noise_bound)?;
    let mut state = INITIAL_STATE;
    let mut xhat = [0.0; 5];
    let mut u = 0.0;
    let mut pending: Option<([f64; 5], f64)> = None;
    let mut trace = TraceLog::default();
    for k in 0..config.steps() {
        let y = state.outputs();
        if let Some((x_next, u_next)) = pending.take() {
            xhat = x_next;
            u = u_next;
        }
        trace.rows.push(TraceRow {
            t: k as f64 * SAMPLE_PERIOD,
            state,
            u_applied: u,
            xhat,
            y,
            xhat_words: [0; 5],
            u_word: 0,
            y_words: [0; 2],
        });
        pending = Some(f64_composite_step(&rig.gains, &xhat, u, &y));
        state = advance_sample(&state, u, SAMPLE_PERIOD, config.substeps, &rig.plant)?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let mut cfg = SimConfig::default();
        cfg.apply_str(
            "seed = 9\nduration_s = 2.5\ntransport = socket\n# comment\nsubsteps = 50\nnoise_bound = 7\nverify = true\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.duration_s, 2.5);
        assert_eq!(cfg.transport, Transport::Socket);
        assert_eq!(cfg.substeps, 50);
        assert_eq!(cfg.noise_bound, 7);
        assert!(cfg.verify);
        assert_eq!(cfg.steps(), 250);

        let err = cfg.apply_str("bogus = 1").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(cfg.apply_str("seed").is_err());
    }

    #[test]
    fn f64_loop_stabilizes() {
        let config = SimConfig { duration_s: 10.0, ..SimConfig::default() };
        let trace = run_f64_loop(&config).unwrap();
        assert_eq!(trace.rows.len(), 1000);
        for row in trace.rows.iter().filter(|r| r.t > 5.0) {
            assert!(
                row.state.theta1.abs() < 0.01 && row.state.theta2.abs() < 0.01,
                "t = {}: theta = ({}, {})",
                row.t,
                row.state.theta1,
                row.state.theta2
            );
        }
    }

    #[test]
    fn plain_loop_tracks_f64_loop() {
        let config = SimConfig { duration_s: 3.0, ..SimConfig::default() };
        let plain = run_plain_loop(&config).unwrap();
        let oracle = run_f64_loop(&config).unwrap();
        // Quantization error per signal stays within the a-priori bound
        // (step count)·2^(1+int_bits−frac_bits).
        let per_step = 2f64.powi(1 + 10 - 22);
        for (k, (p, o)) in plain.rows.iter().zip(&oracle.rows).enumerate() {
            let bound = (k + 1) as f64 * per_step;
            assert!(
                (p.u_applied - o.u_applied).abs() <= bound,
                "step {k}: {} vs {}",
                p.u_applied,
                o.u_applied
            );
            for i in 0..5 {
                assert!((p.xhat[i] - o.xhat[i]).abs() <= bound, "step {k} xhat{i}");
            }
        }
    }

    #[test]
    fn plain_loop_deterministic() {
        let config = SimConfig { duration_s: 1.0, ..SimConfig::default() };
        let a = run_plain_loop(&config).unwrap();
        let b = run_plain_loop(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn encrypted_loop_short_run_verified() {
        let config = SimConfig {
            duration_s: 0.3,
            verify: true,
            ..SimConfig::default()
        };
        let out = run_closed_loop(&config).unwrap();
        assert_eq!(out.trace.rows.len(), 30);
        assert_eq!(out.bench.rows.len(), 30);
        let plain = run_plain_loop(&config).unwrap();
        assert!(out.trace.words_equal(&plain));
        for row in &out.bench.rows {
            assert_eq!(row.counters.word_mults, 0);
        }
    }

    #[test]
    fn transports_agree() {
        let base = SimConfig { duration_s: 0.2, verify: false, ..SimConfig::default() };
        let inproc = run_closed_loop(&base).unwrap();
        let socket = run_closed_loop(&SimConfig { transport: Transport::Socket, ..base }).unwrap();
        assert_eq!(inproc.trace, socket.trace);
        assert_eq!(inproc.trace.to_csv(), socket.trace.to_csv());
    }
}
