//! Circuit construction and detection statistics for the communication
//! protocol.
//!
//! The free parameter `P` is the probability that the photon enters the
//! inner interferometer (set by the first rotator), `M` is the number of
//! inner rotation cycles, and `blocking` is Bob's choice: he blocks his
//! channel to send `X = 0` and leaves it open to send `X = 1`.
//!
//! Closed forms used throughout, all conditioned on the infinite-cycle
//! limit where Zeno losses vanish:
//!
//! * raw conditionals — blocking: `(D0, D1, D3) = (1-P, P, 0)`;
//!   not blocking: `(1-P, 0, P)`;
//! * with the source prior `P_B = (1-P)/(2-P)` (chosen so post-selected
//!   blocking is exactly as likely as not), the normalized post-selected
//!   joints are `(D0,B) = (1-P)/2`, `(D1,B) = P/2`, `(D0,NB) = 1/2`,
//!   `(D1,NB) = 0`;
//! * total loss `P_L = P/(2-P)`, correct-outcome probability
//!   `P_c = (1+P)/2`, and `D0` accuracy `1/(2-P)`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Serialize;

use crate::optics::{
    detect_probabilities, CircuitModel, MirrorId, Mode, OpticalOp, Polarization, PureState,
    RotatorSign, StageUnitary,
};
use crate::{Error, Result};

/// Validated protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolParams {
    p: f64,
    m: u32,
    blocking: bool,
}

impl ProtocolParams {
    /// `p` is the inner-interferometer entry probability in `[0, 1]`,
    /// `m >= 1` the number of inner cycles.
    pub fn new(p: f64, m: u32, blocking: bool) -> Result<Self> {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!(
                "entry probability must lie in [0, 1], got {p}"
            )));
        }
        if m == 0 {
            return Err(Error::Config("at least one inner cycle is required".into()));
        }
        if m > u16::MAX as u32 {
            return Err(Error::Config(format!(
                "inner cycle count {m} is out of range"
            )));
        }
        Ok(Self { p, m, blocking })
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

    pub fn with_blocking(&self, blocking: bool) -> Self {
        Self { blocking, ..*self }
    }
}

/// Which conditioning a [`DetectionDistribution`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Conditioning {
    Raw,
    Postselected,
}

/// Detection probabilities for one blocking condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionDistribution {
    pub d0: f64,
    pub d1: f64,
    pub d3: f64,
    /// Probability absorbed by Bob's blocking devices.
    pub lost_to_bob: f64,
    pub conditioning: Conditioning,
}

impl DetectionDistribution {
    pub fn total(&self) -> f64 {
        self.d0 + self.d1 + self.d3 + self.lost_to_bob
    }
}

/// Closed-form post-selection summary at a given `P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PostselectionSummary {
    pub p: f64,
    /// Source prior for blocking, `P_B = (1-P)/(2-P)`.
    pub raw_blocking_prior: f64,
    /// Post-selection normalization `N = P_B + (1-P_B)(1-P)`.
    pub normalization: f64,
    pub joint_d0_blocking: f64,
    pub joint_d1_blocking: f64,
    pub joint_d0_not_blocking: f64,
    pub joint_d1_not_blocking: f64,
    /// Total loss probability `P_L = P/(2-P)`.
    pub loss_probability: f64,
    /// `1 - P_L`.
    pub postselect_probability: f64,
    /// Correct-outcome probability `P_c = (1+P)/2`.
    pub correct_probability: f64,
    /// Probability that a `D0` click means "not blocking", `1/(2-P)`.
    pub d0_accuracy: f64,
    /// Set when `P = 1`: the values are limits, post-selection of an open
    /// channel never succeeds there.
    pub degenerate: bool,
}

fn recombine() -> OpticalOp {
    OpticalOp::Pbs {
        routing: vec![
            ((Mode::B, Polarization::H), Mode::D),
            ((Mode::C, Polarization::V), Mode::D),
        ],
    }
}

fn inner_split() -> OpticalOp {
    OpticalOp::Pbs {
        routing: vec![
            ((Mode::D, Polarization::H), Mode::B),
            ((Mode::D, Polarization::V), Mode::C),
        ],
    }
}

fn exit_route() -> OpticalOp {
    OpticalOp::Pbs {
        routing: vec![
            ((Mode::A, Polarization::H), Mode::F),
            ((Mode::A, Polarization::V), Mode::F),
            ((Mode::D, Polarization::V), Mode::G),
            ((Mode::D, Polarization::H), Mode::J),
        ],
    }
}

/// Build the full circuit for the given parameters.
///
/// Stage `T(t_0 -> t_1)` rotates the source by `alpha` with
/// `sin²(alpha) = P` and splits H into arm `A`, V into arm `D`. Each of the
/// `M` inner stages rotates the inner path by `π/(2M)` and splits H into
/// Bob's channel arm `B` — absorbed into a per-stage sink when he blocks,
/// recombined at the next splitter when he does not. The final stage sends
/// `A` to `F`, the remaining inner V to `G`, and inner H to `J`.
pub fn build_circuit(params: &ProtocolParams) -> CircuitModel {
    build_circuit_with_sign(params, RotatorSign::Standard)
}

/// [`build_circuit`] with an explicit rotator sign convention, for checking
/// that physical conclusions are convention-independent.
pub fn build_circuit_with_sign(params: &ProtocolParams, sign: RotatorSign) -> CircuitModel {
    let m = params.m();
    let alpha = params.p().sqrt().asin() * sign.factor();
    let theta = PI / (2.0 * m as f64) * sign.factor();

    let mut stages = Vec::with_capacity(m as usize + 2);
    stages.push(StageUnitary::new(
        0,
        vec![
            OpticalOp::Rotator {
                modes: vec![Mode::S],
                theta: alpha,
            },
            OpticalOp::Pbs {
                routing: vec![
                    ((Mode::S, Polarization::H), Mode::A),
                    ((Mode::S, Polarization::V), Mode::D),
                ],
            },
        ],
    ));

    for k in 1..=m {
        let mut ops = Vec::new();
        if k == 1 {
            ops.push(OpticalOp::Mirror {
                id: MirrorId::MA,
                mode: Mode::A,
            });
        } else {
            ops.push(recombine());
        }
        ops.push(OpticalOp::Rotator {
            modes: vec![Mode::D],
            theta,
        });
        ops.push(inner_split());
        if params.blocking() {
            ops.push(OpticalOp::Block {
                mode: Mode::B,
                sink: Mode::SinkBob(k as u16),
            });
        }
        match k {
            1 => ops.push(OpticalOp::Mirror {
                id: MirrorId::MB1,
                mode: Mode::B,
            }),
            2 => ops.push(OpticalOp::Mirror {
                id: MirrorId::MB2,
                mode: Mode::B,
            }),
            _ => {}
        }
        stages.push(StageUnitary::new(k as usize, ops));
    }

    stages.push(StageUnitary::new(
        m as usize + 1,
        vec![recombine(), exit_route()],
    ));

    let mut modes = vec![
        Mode::S,
        Mode::A,
        Mode::D,
        Mode::B,
        Mode::C,
        Mode::F,
        Mode::G,
        Mode::J,
    ];
    modes.extend((1..=m).map(|k| Mode::SinkBob(k as u16)));
    modes.push(Mode::SinkD3);

    CircuitModel::from_parts(
        params.p(),
        m,
        params.blocking(),
        sign,
        stages,
        modes,
        PureState::basis(Mode::S, Polarization::H),
    )
}

/// Raw detection probabilities by full state propagation.
pub fn raw_probabilities(params: &ProtocolParams) -> DetectionDistribution {
    let circuit = build_circuit(params);
    let state = circuit
        .propagate(circuit.source())
        .expect("a freshly built circuit applies cleanly to its own source");
    let probs = detect_probabilities(&state);
    DetectionDistribution {
        d0: probs.d0,
        d1: probs.d1,
        d3: probs.d3,
        lost_to_bob: probs.lost,
        conditioning: Conditioning::Raw,
    }
}

/// Raw detection probabilities in the infinite-cycle limit, in closed form:
/// blocking gives `(1-P, P, 0)` over `(D0, D1, D3)`, not blocking
/// `(1-P, 0, P)`, with no blocker absorption in either case.
pub fn raw_probabilities_limit(p: f64, blocking: bool) -> Result<DetectionDistribution> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!(
            "entry probability must lie in [0, 1], got {p}"
        )));
    }
    let (d1, d3) = if blocking { (p, 0.0) } else { (0.0, p) };
    Ok(DetectionDistribution {
        d0: 1.0 - p,
        d1,
        d3,
        lost_to_bob: 0.0,
        conditioning: Conditioning::Raw,
    })
}

/// Closed-form post-selection summary at `p`, valid on `[0, 1]`; at
/// `p = 1` the values are limits and the summary is flagged degenerate.
pub fn postselected_summary(p: f64) -> Result<PostselectionSummary> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!(
            "entry probability must lie in [0, 1], got {p}"
        )));
    }
    let raw_blocking_prior = (1.0 - p) / (2.0 - p);
    let normalization = raw_blocking_prior + (1.0 - raw_blocking_prior) * (1.0 - p);
    let loss_probability = p / (2.0 - p);
    Ok(PostselectionSummary {
        p,
        raw_blocking_prior,
        normalization,
        joint_d0_blocking: (1.0 - p) / 2.0,
        joint_d1_blocking: p / 2.0,
        joint_d0_not_blocking: 0.5,
        joint_d1_not_blocking: 0.0,
        loss_probability,
        postselect_probability: 1.0 - loss_probability,
        correct_probability: (1.0 + p) / 2.0,
        d0_accuracy: 1.0 / (2.0 - p),
        degenerate: p == 1.0,
    })
}

/// One row of the closed-form parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub correct_probability: f64,
    pub d0_accuracy: f64,
    pub postselect_probability: f64,
}

/// Frozen header of the sweep CSV.
pub const SWEEP_CSV_HEADER: &str = "P,Pc,accD0,postselect_prob";

/// Closed-form sweep over a grid of `P` values in `[0, 1)`.
pub fn sweep(grid: &[f64]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid must be nonempty".into()));
    }
    grid.iter()
        .map(|&p| {
            if !p.is_finite() || !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "sweep grid values must lie in [0, 1), got {p}"
                )));
            }
            let summary = postselected_summary(p)?;
            Ok(SweepRow {
                p,
                correct_probability: summary.correct_probability,
                d0_accuracy: summary.d0_accuracy,
                postselect_probability: summary.postselect_probability,
            })
        })
        .collect()
}

/// Render sweep rows as CSV under [`SWEEP_CSV_HEADER`].
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        writeln!(
            out,
            "{},{},{},{}",
            row.p, row.correct_probability, row.d0_accuracy, row.postselect_probability
        )
        .expect("writing to a String cannot fail");
    }
    out
}
