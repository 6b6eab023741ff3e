//! Simulator and analysis library for counterfactual single-photon
//! communication through a chained polarizing interferometer.
//!
//! The device is one outer interferometer whose right half contains a series
//! of small polarization rotators and polarizing beam splitters. Every
//! splitter passes H and reflects V, and each inner splitter diverts the H
//! component into a transmission channel that the receiving party (Bob) may
//! block or leave open. Repeated gentle rotation plus the possibility of
//! absorption pins the polarization when the channel is blocked (the Zeno
//! regime) and lets it rotate freely to the loss detector when it is open,
//! so the exit port of the surviving photon encodes Bob's choice.
//!
//! The crate is organized by what each layer computes:
//!
//! * [`optics`] — sparse photon states over `(arm ⊗ polarization)` modes and
//!   the elementary norm-preserving elements (rotator, splitter, blocker,
//!   mirror marker), composed into per-time-slice stage unitaries.
//! * [`protocol`] — builds the full circuit for parameters `(P, M, blocking)`
//!   and provides detection statistics, both simulated and in closed form,
//!   raw and post-selected.
//! * [`histories`] — projector sequences, chain kets, and the consistency
//!   check that lets path statements be made about the post-selected photon.
//! * [`weakmeas`] — two-state-vector weak values and a transverse Gaussian
//!   pointer model for oscillating-mirror experiments, with spectral
//!   analysis of detector centroid time series.
//! * [`montecarlo`] — seeded stochastic rounds, bit transmission with retry,
//!   and empirical tables with confidence intervals.
//!
//! All state transformations are value-semantic and free of shared mutable
//! state; every random process is driven by an explicit seeded generator.

pub mod histories;
pub mod montecarlo;
pub mod optics;
pub mod protocol;
pub mod tol;
pub mod weakmeas;

/// Crate-wide error type.
///
/// The variants mirror how callers are expected to react: `Config` and
/// `Usage` indicate a bad request, `CapExceeded` a runaway stochastic loop,
/// and the remaining variants name analysis-specific refusals.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter or element wiring that cannot describe a valid circuit.
    #[error("configuration error: {0}")]
    Config(String),
    /// A structurally valid object used in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),
    /// Post-selection overlap vanishes, so no weak value exists.
    #[error("weak value undefined: {0}")]
    UndefinedWeakValue(String),
    /// Chain kets are not mutually orthogonal; probabilities are refused.
    #[error("cannot assign probabilities: {0}")]
    InconsistentFamily(String),
    /// A retry loop hit its configured cap.
    #[error("runtime cap exceeded: {0}")]
    CapExceeded(String),
}

pub type Result<T> = std::result::Result<T, Error>;
