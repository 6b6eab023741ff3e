//! Centralized numerical tolerances.
//!
//! Every comparison threshold used by the library and its test suites is
//! defined here. The state space is tiny (tens of basis amplitudes) and all
//! elements are exactly norm-preserving, so most checks sit close to f64
//! round-off rather than at algorithmic-convergence scales.

/// Norm conservation and closed-form equality after a handful of exact
/// operations. f64 carries ~16 significant digits; 1e-12 leaves four digits
/// of headroom for accumulated rounding across composed stages.
pub const NORM: f64 = 1e-12;

/// Gram off-diagonal bound for declaring a history family consistent.
/// The off-diagonals are analytically zero for the families treated here,
/// so the tolerance only absorbs floating-point residue.
pub const CONSISTENCY: f64 = 1e-10;

/// Squared-norm bound under which a chain ket counts as an exact zero.
/// Null chain kets arise from projections that empty the state outright,
/// so anything above round-off squared indicates a real contribution.
pub const EXACT_ZERO_WEIGHT: f64 = 1e-24;

/// Bound for finite-difference derivatives that must vanish identically.
pub const DERIVATIVE_NULL: f64 = 1e-10;

/// Squared overlap below which post-selection is treated as impossible
/// (weak values are refused rather than returned as noise ratios).
pub const ZERO_OVERLAP: f64 = 1e-30;

/// Relative error allowed in the Parseval identity for the DFT.
pub const PARSEVAL_REL: f64 = 1e-9;

/// Absolute spectral power floor. A probe bin must exceed this in addition
/// to the ratio threshold before a peak is called present, so that pure
/// round-off residue in an otherwise silent channel never registers.
pub const POWER_FLOOR: f64 = 1e-20;

/// How far a probe frequency may sit from an exact DFT bin, measured in
/// fractional bins, before peak detection refuses it.
pub const BIN_ALIGN: f64 = 1e-6;
