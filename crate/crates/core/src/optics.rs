//! Photon states over `(arm ⊗ polarization)` modes and the elementary
//! optical elements that act on them.
//!
//! A [`PureState`] is a sparse complex amplitude vector keyed by
//! `(Mode, Polarization)`. Elements are modelled as exactly norm-preserving
//! maps on the full basis:
//!
//! * a rotator mixes the two polarizations within an arm,
//! * a polarizing beam splitter permutes `(arm, polarization)` pairs
//!   (H passes, V reflects — routings never change polarization),
//! * a blocker moves amplitude into a terminal sink mode, so absorbed
//!   probability stays readable off the same normalized state,
//! * a mirror is an identity marker whose location the pointer model in
//!   [`crate::weakmeas`] uses to attach displacements or phases.
//!
//! Stages compose these into the per-time-slice unitaries of a
//! [`CircuitModel`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::{Error, Result};

/// Photon polarization basis. Every splitter passes `H` and reflects `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::H, Polarization::V];
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::H => write!(f, "H"),
            Polarization::V => write!(f, "V"),
        }
    }
}

/// Spatial arm labels of the circuit, including terminal absorber sinks.
///
/// `S` is the source arm. `A` is the sender-side outer arm, `D` the inner
/// path on the right half. Inside each inner cycle the splitter diverts H
/// into the transmission channel `B` (through Bob's station) while V stays
/// on the sender-side inner arm `C`. The exit arms `F`, `G`, `J` feed
/// detectors `D0`, `D1`, `D3` respectively. `SinkBob(k)` absorbs whatever
/// Bob's blocker stops during inner cycle `k`; `SinkD3` is a spare dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    S,
    A,
    D,
    B,
    C,
    F,
    G,
    J,
    SinkBob(u16),
    SinkD3,
}

impl Mode {
    /// Sinks are terminal: no stage of a well-formed circuit moves
    /// amplitude out of them.
    pub fn is_sink(self) -> bool {
        matches!(self, Mode::SinkBob(_) | Mode::SinkD3)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::S => write!(f, "S"),
            Mode::A => write!(f, "A"),
            Mode::D => write!(f, "D"),
            Mode::B => write!(f, "B"),
            Mode::C => write!(f, "C"),
            Mode::F => write!(f, "F"),
            Mode::G => write!(f, "G"),
            Mode::J => write!(f, "J"),
            Mode::SinkBob(k) => write!(f, "SinkBob{k}"),
            Mode::SinkD3 => write!(f, "SinkD3"),
        }
    }
}

impl Serialize for Mode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Detectors at the exit arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Detector {
    D0,
    D1,
    D3,
}

impl Detector {
    pub const ALL: [Detector; 3] = [Detector::D0, Detector::D1, Detector::D3];

    /// The exit arm feeding this detector.
    pub fn arm(self) -> Mode {
        match self {
            Detector::D0 => Mode::F,
            Detector::D1 => Mode::G,
            Detector::D3 => Mode::J,
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Detector::D0 => write!(f, "D0"),
            Detector::D1 => write!(f, "D1"),
            Detector::D3 => write!(f, "D3"),
        }
    }
}

/// Oscillating-mirror identities used by the pointer model.
///
/// `MA` sits on arm `A`; `MB1` and `MB2` sit on Bob's channel arm `B`
/// during the first and second inner cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum MirrorId {
    MA,
    MB1,
    MB2,
}

impl fmt::Display for MirrorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MirrorId::MA => write!(f, "M_A"),
            MirrorId::MB1 => write!(f, "M_B1"),
            MirrorId::MB2 => write!(f, "M_B2"),
        }
    }
}

/// Global sign convention for polarization rotators.
///
/// `Standard` maps `V` to `-sin(theta)·H + cos(theta)·V`; `Flipped` negates
/// every rotation angle. Physical conclusions must not depend on the choice,
/// which the test suites verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotatorSign {
    Standard,
    Flipped,
}

impl RotatorSign {
    pub fn factor(self) -> f64 {
        match self {
            RotatorSign::Standard => 1.0,
            RotatorSign::Flipped => -1.0,
        }
    }
}

/// Sparse single-photon state: complex amplitude per `(Mode, Polarization)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PureState {
    amps: BTreeMap<(Mode, Polarization), Complex64>,
}

impl PureState {
    /// The zero vector.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Unit basis ket `|mode, pol⟩`.
    pub fn basis(mode: Mode, pol: Polarization) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert((mode, pol), Complex64::new(1.0, 0.0));
        Self { amps }
    }

    pub fn from_amplitudes<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = ((Mode, Polarization), Complex64)>,
    {
        let mut state = Self::zero();
        for ((mode, pol), amp) in entries {
            let cur = state.amplitude(mode, pol);
            state.set_amplitude(mode, pol, cur + amp);
        }
        state
    }

    pub fn amplitude(&self, mode: Mode, pol: Polarization) -> Complex64 {
        self.amps
            .get(&(mode, pol))
            .copied()
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    pub fn set_amplitude(&mut self, mode: Mode, pol: Polarization, amp: Complex64) {
        if amp.re == 0.0 && amp.im == 0.0 {
            self.amps.remove(&(mode, pol));
        } else {
            self.amps.insert((mode, pol), amp);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ((Mode, Polarization), Complex64)> + '_ {
        self.amps.iter().map(|(&k, &v)| (k, v))
    }

    /// Squared norm over all pairs, sinks included.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    /// Inner product `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amps
            .iter()
            .map(|(k, a)| a.conj() * other.amplitude(k.0, k.1))
            .sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for ((mode, pol), amp) in other.iter() {
            let cur = out.amplitude(mode, pol);
            out.set_amplitude(mode, pol, cur + amp);
        }
        out
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            amps: self.amps.iter().map(|(&k, &v)| (k, v * factor)).collect(),
        }
    }

    /// Probability of finding the photon in `mode`, either polarization.
    pub fn mode_probability(&self, mode: Mode) -> f64 {
        Polarization::BOTH
            .iter()
            .map(|&p| self.amplitude(mode, p).norm_sqr())
            .sum()
    }

    /// Total probability absorbed into sink modes.
    pub fn sink_probability(&self) -> f64 {
        self.amps
            .iter()
            .filter(|((mode, _), _)| mode.is_sink())
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Largest amplitude difference between two states over the union of
    /// their occupied pairs.
    pub fn max_amplitude_diff(&self, other: &Self) -> f64 {
        let keys: BTreeSet<_> = self.amps.keys().chain(other.amps.keys()).copied().collect();
        keys.into_iter()
            .map(|(m, p)| (self.amplitude(m, p) - other.amplitude(m, p)).norm())
            .fold(0.0, f64::max)
    }
}

/// Rotate polarization by `theta` on each listed mode.
///
/// On a listed mode the `(H, V)` amplitudes transform by
/// `[[cos θ, -sin θ], [sin θ, cos θ]]`; everything else is untouched.
/// Sinks are terminal and may not be rotated.
pub fn apply_rotator(state: &PureState, modes: &[Mode], theta: f64) -> Result<PureState> {
    if !theta.is_finite() {
        return Err(Error::Config(format!(
            "rotator angle must be finite, got {theta}"
        )));
    }
    let targets: BTreeSet<Mode> = modes.iter().copied().collect();
    for mode in &targets {
        if mode.is_sink() {
            return Err(Error::Config(format!(
                "cannot rotate terminal sink mode {mode}"
            )));
        }
    }
    let (s, c) = theta.sin_cos();
    let mut out = state.clone();
    for mode in targets {
        let h = state.amplitude(mode, Polarization::H);
        let v = state.amplitude(mode, Polarization::V);
        out.set_amplitude(mode, Polarization::H, h * c - v * s);
        out.set_amplitude(mode, Polarization::V, h * s + v * c);
    }
    Ok(out)
}

/// One routed pair of a polarizing beam splitter: `(mode, pol) -> mode`.
pub type PbsRouting = Vec<((Mode, Polarization), Mode)>;

type SwapPair = ((Mode, Polarization), (Mode, Polarization));

fn pbs_swap_pairs(routing: &PbsRouting) -> Result<Vec<SwapPair>> {
    let mut endpoints: BTreeSet<(Mode, Polarization)> = BTreeSet::new();
    let mut pairs = Vec::with_capacity(routing.len());
    for &((mode, pol), target) in routing {
        if mode.is_sink() || target.is_sink() {
            return Err(Error::Config(
                "splitter routings may not involve sink modes; use a blocker to absorb".into(),
            ));
        }
        let from = (mode, pol);
        let to = (target, pol);
        if from == to {
            if !endpoints.insert(from) {
                return Err(Error::Config(format!(
                    "routing is not injective: {mode}/{pol} appears in two entries"
                )));
            }
            continue;
        }
        for end in [from, to] {
            if !endpoints.insert(end) {
                return Err(Error::Config(format!(
                    "routing is not injective: {}/{} appears in two entries (this would break unitarity)",
                    end.0, end.1
                )));
            }
        }
        pairs.push((from, to));
    }
    Ok(pairs)
}

fn swap_basis_pairs(state: &PureState, pairs: &[SwapPair]) -> PureState {
    let mut out = state.clone();
    for &(from, to) in pairs {
        let a = state.amplitude(from.0, from.1);
        let b = state.amplitude(to.0, to.1);
        out.set_amplitude(to.0, to.1, a);
        out.set_amplitude(from.0, from.1, b);
    }
    out
}

/// Relocate amplitude at each routed `(mode, pol)` to `(target, pol)`.
///
/// The routing must be injective; it is realized as a basis permutation
/// (each routed pair is exchanged with its target slot), so the map is
/// exactly unitary on the full space. Unlisted pairs are untouched.
pub fn apply_pbs(state: &PureState, routing: &PbsRouting) -> Result<PureState> {
    let pairs = pbs_swap_pairs(routing)?;
    Ok(swap_basis_pairs(state, &pairs))
}

/// Absorb all amplitude (both polarizations) of `mode` into `sink`.
///
/// The sink provides exactly two sub-slots, one per polarization, so a
/// single blocker owns a sink exclusively; reusing an occupied sink is a
/// collision. Realized as a basis exchange, hence exactly norm-preserving.
pub fn apply_block(state: &PureState, modes: &[Mode], sink: Mode) -> Result<PureState> {
    if !sink.is_sink() {
        return Err(Error::Config(format!(
            "{sink} is not a designated sink mode"
        )));
    }
    let targets: BTreeSet<Mode> = modes.iter().copied().collect();
    if targets.len() > 1 {
        return Err(Error::Config(format!(
            "sink collision: {sink} has two sub-modes and cannot absorb {} modes",
            targets.len()
        )));
    }
    let Some(&mode) = targets.iter().next() else {
        return Ok(state.clone());
    };
    if mode.is_sink() {
        return Err(Error::Config(format!("cannot block sink mode {mode}")));
    }
    for pol in Polarization::BOTH {
        if state.amplitude(sink, pol).norm_sqr() > 0.0 {
            return Err(Error::Config(format!(
                "sink collision: sub-mode {sink}/{pol} already holds amplitude"
            )));
        }
    }
    let pairs: Vec<_> = Polarization::BOTH
        .iter()
        .map(|&p| ((mode, p), (sink, p)))
        .collect();
    Ok(swap_basis_pairs(state, &pairs))
}

/// An elementary element inside a stage.
#[derive(Debug, Clone)]
pub enum OpticalOp {
    Rotator {
        modes: Vec<Mode>,
        theta: f64,
    },
    Pbs {
        routing: PbsRouting,
    },
    Block {
        mode: Mode,
        sink: Mode,
    },
    /// Identity marker recording where a physical mirror sits; the pointer
    /// model attaches displacements or phases here.
    Mirror {
        id: MirrorId,
        mode: Mode,
    },
}

impl OpticalOp {
    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        match self {
            OpticalOp::Rotator { modes, theta } => apply_rotator(state, modes, *theta),
            OpticalOp::Pbs { routing } => apply_pbs(state, routing),
            OpticalOp::Block { mode, sink } => apply_block(state, &[*mode], *sink),
            OpticalOp::Mirror { .. } => Ok(state.clone()),
        }
    }

    /// Apply the inverse element. Blockers invert as the bare exchange so
    /// that amplitude can be pulled back out of the sink.
    pub fn apply_inverse(&self, state: &PureState) -> Result<PureState> {
        match self {
            OpticalOp::Rotator { modes, theta } => apply_rotator(state, modes, -theta),
            // A disjoint set of exchanges is an involution.
            OpticalOp::Pbs { routing } => apply_pbs(state, routing),
            OpticalOp::Block { mode, sink } => {
                let pairs: Vec<_> = Polarization::BOTH
                    .iter()
                    .map(|&p| ((*mode, p), (*sink, p)))
                    .collect();
                Ok(swap_basis_pairs(state, &pairs))
            }
            OpticalOp::Mirror { .. } => Ok(state.clone()),
        }
    }

    /// Unchecked unitary action, used when materializing stage matrices on
    /// arbitrary basis kets (occupancy guards do not apply there).
    fn apply_unchecked(&self, state: &PureState) -> Result<PureState> {
        match self {
            OpticalOp::Block { mode, sink } => {
                let pairs: Vec<_> = Polarization::BOTH
                    .iter()
                    .map(|&p| ((*mode, p), (*sink, p)))
                    .collect();
                Ok(swap_basis_pairs(state, &pairs))
            }
            other => other.apply(state),
        }
    }
}

/// The unitary `T(t_k -> t_{k+1})` of one time slice, as an ordered list of
/// elementary elements.
#[derive(Debug, Clone)]
pub struct StageUnitary {
    slice: usize,
    ops: Vec<OpticalOp>,
}

impl StageUnitary {
    pub fn new(slice: usize, ops: Vec<OpticalOp>) -> Self {
        Self { slice, ops }
    }

    /// Index `k` identifying `T(t_k -> t_{k+1})`.
    pub fn slice(&self) -> usize {
        self.slice
    }

    pub fn ops(&self) -> &[OpticalOp] {
        &self.ops
    }

    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        self.ops
            .iter()
            .try_fold(state.clone(), |s, op| op.apply(&s))
    }

    pub fn apply_inverse(&self, state: &PureState) -> Result<PureState> {
        self.ops
            .iter()
            .rev()
            .try_fold(state.clone(), |s, op| op.apply_inverse(&s))
    }

    /// Dense matrix of the stage over the given ordered mode list
    /// (basis order: `modes × [H, V]`, row-major).
    pub fn matrix(&self, modes: &[Mode]) -> Result<Vec<Vec<Complex64>>> {
        let dim = modes.len() * 2;
        let mut cols = Vec::with_capacity(dim);
        for &mode in modes {
            for pol in Polarization::BOTH {
                let mut state = PureState::basis(mode, pol);
                for op in &self.ops {
                    state = op.apply_unchecked(&state)?;
                }
                cols.push(state);
            }
        }
        let mut matrix = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
        for (j, col) in cols.iter().enumerate() {
            for (i, &mode) in modes.iter().enumerate() {
                for (pi, pol) in Polarization::BOTH.into_iter().enumerate() {
                    matrix[2 * i + pi][j] = col.amplitude(mode, pol);
                }
            }
        }
        Ok(matrix)
    }
}

/// A fully wired circuit: ordered stage unitaries for parameters
/// `(P, M, blocking)`, the source ket, and the circuit's closed mode set.
#[derive(Debug, Clone)]
pub struct CircuitModel {
    p: f64,
    m: u32,
    blocking: bool,
    sign: RotatorSign,
    stages: Vec<StageUnitary>,
    modes: Vec<Mode>,
    source: PureState,
}

impl CircuitModel {
    pub(crate) fn from_parts(
        p: f64,
        m: u32,
        blocking: bool,
        sign: RotatorSign,
        stages: Vec<StageUnitary>,
        modes: Vec<Mode>,
        source: PureState,
    ) -> Self {
        Self {
            p,
            m,
            blocking,
            sign,
            stages,
            modes,
            source,
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn blocking(&self) -> bool {
        self.blocking
    }

    pub fn sign(&self) -> RotatorSign {
        self.sign
    }

    pub fn stages(&self) -> &[StageUnitary] {
        &self.stages
    }

    /// Number of time slices `t_0 ..= t_n` (one more than stages).
    pub fn n_slices(&self) -> usize {
        self.stages.len() + 1
    }

    /// Ordered closed mode set of this circuit, sinks included.
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// The source ket `|S, H⟩`.
    pub fn source(&self) -> &PureState {
        &self.source
    }

    /// Spatial arms that can hold amplitude at a given time slice.
    pub fn arms_at_slice(&self, slice: usize) -> Vec<Mode> {
        let last = self.stages.len();
        match slice {
            0 => vec![Mode::S],
            1 => vec![Mode::A, Mode::D],
            s if s == last => vec![Mode::F, Mode::G, Mode::J],
            _ => vec![Mode::A, Mode::B, Mode::C],
        }
    }

    /// Apply all stages in order.
    pub fn propagate(&self, state: &PureState) -> Result<PureState> {
        self.stages
            .iter()
            .try_fold(state.clone(), |s, st| st.apply(&s))
    }

    /// Forward-evolve the source through the first `slice` stages.
    pub fn forward_state(&self, slice: usize) -> Result<PureState> {
        if slice >= self.n_slices() {
            return Err(Error::Usage(format!(
                "slice {slice} out of range for a circuit with {} slices",
                self.n_slices()
            )));
        }
        self.stages[..slice]
            .iter()
            .try_fold(self.source.clone(), |s, st| st.apply(&s))
    }

    /// Evolve a final-slice state backward to the given slice by applying
    /// stage inverses in reverse order.
    pub fn backward_state(&self, final_state: &PureState, slice: usize) -> Result<PureState> {
        if slice >= self.n_slices() {
            return Err(Error::Usage(format!(
                "slice {slice} out of range for a circuit with {} slices",
                self.n_slices()
            )));
        }
        self.stages[slice..]
            .iter()
            .rev()
            .try_fold(final_state.clone(), |s, st| st.apply_inverse(&s))
    }

    /// Stage index and arm of a mirror marker, if the circuit has one.
    pub fn mirror_site(&self, id: MirrorId) -> Option<(usize, Mode)> {
        for stage in &self.stages {
            for op in stage.ops() {
                if let OpticalOp::Mirror { id: mid, mode } = op {
                    if *mid == id {
                        return Some((stage.slice(), *mode));
                    }
                }
            }
        }
        None
    }
}

/// Probabilities read off a post-propagation state: one entry per detector
/// plus everything absorbed in sinks. Entries sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorProbabilities {
    pub d0: f64,
    pub d1: f64,
    pub d3: f64,
    pub lost: f64,
}

impl DetectorProbabilities {
    pub fn total(&self) -> f64 {
        self.d0 + self.d1 + self.d3 + self.lost
    }
}

/// Sequentially apply every stage of `circuit` to `state`.
///
/// The input is expected to be normalized; the output norm then equals one
/// to within [`crate::tol::NORM`].
pub fn propagate(state: &PureState, circuit: &CircuitModel) -> Result<PureState> {
    circuit.propagate(state)
}

/// Read detection probabilities off a propagated state.
pub fn detect_probabilities(state: &PureState) -> DetectorProbabilities {
    DetectorProbabilities {
        d0: state.mode_probability(Mode::F),
        d1: state.mode_probability(Mode::G),
        d3: state.mode_probability(Mode::J),
        lost: state.sink_probability(),
    }
}
