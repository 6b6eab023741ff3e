//! Consistent-histories machinery: time-indexed projectors, chain kets,
//! and the canonical path family for the two-cycle circuit.
//!
//! A history is one projector per time slice. Its chain ket is the source
//! ket pushed through the circuit with the history's projectors interleaved
//! between the stage unitaries; the chain ket's squared norm is the
//! history's weight. A family is consistent when all its chain kets are
//! mutually orthogonal, and only then may the weights be read (after
//! normalization) as probabilities of the corresponding event sequences.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::Serialize;

use crate::optics::{CircuitModel, Mode, Polarization, PureState};
use crate::{tol, Error, Result};

/// Polarization part of a projector: a basis state or the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PolSpec {
    H,
    V,
    Identity,
}

impl PolSpec {
    fn matches(self, pol: Polarization) -> bool {
        match self {
            PolSpec::H => pol == Polarization::H,
            PolSpec::V => pol == Polarization::V,
            PolSpec::Identity => true,
        }
    }
}

/// Projector onto a set of arms tensored with a polarization spec, tagged
/// with the time slice it acts at. Diagonal in the `(Mode, Polarization)`
/// basis, hence idempotent and Hermitian by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projector {
    slice: usize,
    arms: BTreeSet<Mode>,
    pol: PolSpec,
}

impl Projector {
    pub fn new(slice: usize, arms: impl IntoIterator<Item = Mode>, pol: PolSpec) -> Self {
        Self {
            slice,
            arms: arms.into_iter().collect(),
            pol,
        }
    }

    /// Single-arm projector, identity on polarization.
    pub fn arm(slice: usize, mode: Mode) -> Self {
        Self::new(slice, [mode], PolSpec::Identity)
    }

    pub fn slice(&self) -> usize {
        self.slice
    }

    pub fn arms(&self) -> impl Iterator<Item = Mode> + '_ {
        self.arms.iter().copied()
    }

    pub fn pol(&self) -> PolSpec {
        self.pol
    }

    /// Keep only the amplitudes inside the projector's subspace.
    pub fn apply(&self, state: &PureState) -> PureState {
        PureState::from_amplitudes(
            state
                .iter()
                .filter(|((mode, pol), _)| self.arms.contains(mode) && self.pol.matches(*pol)),
        )
    }

    /// Whether the subspaces of two projectors are disjoint.
    pub fn is_orthogonal_to(&self, other: &Self) -> bool {
        let pol_overlap = !matches!(
            (self.pol, other.pol),
            (PolSpec::H, PolSpec::V) | (PolSpec::V, PolSpec::H)
        );
        !pol_overlap || self.arms.is_disjoint(&other.arms)
    }

    fn label(&self) -> String {
        let arms: Vec<String> = self.arms.iter().map(|m| m.to_string()).collect();
        let pol = match self.pol {
            PolSpec::H => "H",
            PolSpec::V => "V",
            PolSpec::Identity => "I",
        };
        format!("{}:{}", arms.join("+"), pol)
    }
}

/// One projector per time slice, indices running `0..n_slices`.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    projectors: Vec<Projector>,
}

impl History {
    pub fn new(projectors: Vec<Projector>) -> Result<Self> {
        if projectors.is_empty() {
            return Err(Error::Usage(
                "a history needs at least one projector".into(),
            ));
        }
        for (k, proj) in projectors.iter().enumerate() {
            if proj.slice() != k {
                return Err(Error::Usage(format!(
                    "history projectors must cover consecutive slices; found slice {} at position {k}",
                    proj.slice()
                )));
            }
        }
        Ok(Self { projectors })
    }

    pub fn projectors(&self) -> &[Projector] {
        &self.projectors
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    /// Compact per-slice labels, e.g. `["S:H", "A:I", ...]`.
    pub fn labels(&self) -> Vec<String> {
        self.projectors.iter().map(Projector::label).collect()
    }
}

/// A chain ket and its weight `⟨K|K⟩`.
#[derive(Debug, Clone)]
pub struct ChainKet {
    pub vector: PureState,
    pub weight: f64,
}

/// Evaluate the chain ket of `history` through `circuit`:
/// `Π_n T(t_{n-1}→t_n) ... Π_1 T(t_0→t_1) Π_0 |source⟩`.
pub fn chain_ket(history: &History, circuit: &CircuitModel) -> Result<ChainKet> {
    if history.len() != circuit.n_slices() {
        return Err(Error::Usage(format!(
            "history has {} projectors but the circuit has {} time slices",
            history.len(),
            circuit.n_slices()
        )));
    }
    let mut state = history.projectors()[0].apply(circuit.source());
    for (stage, proj) in circuit.stages().iter().zip(&history.projectors()[1..]) {
        state = stage.apply(&state)?;
        state = proj.apply(&state);
    }
    let weight = state.norm_sqr();
    Ok(ChainKet {
        vector: state,
        weight,
    })
}

/// A family of histories sharing their initial and final projectors, with
/// mutually orthogonal alternatives at every intermediate slice.
#[derive(Debug, Clone)]
pub struct HistoryFamily {
    histories: Vec<History>,
}

impl HistoryFamily {
    pub fn new(histories: Vec<History>) -> Result<Self> {
        let Some(first) = histories.first() else {
            return Err(Error::Usage("a family needs at least one history".into()));
        };
        let slices = first.len();
        for hist in &histories {
            if hist.len() != slices {
                return Err(Error::Usage(
                    "histories in a family must share slice count".into(),
                ));
            }
            if hist.projectors()[0] != first.projectors()[0]
                || hist.projectors()[slices - 1] != first.projectors()[slices - 1]
            {
                return Err(Error::Usage(
                    "histories in a family must share initial and final projectors".into(),
                ));
            }
        }
        // Distinct alternatives offered at each slice must be orthogonal.
        for k in 0..slices {
            let mut slot: Vec<&Projector> = Vec::new();
            for hist in &histories {
                let proj = &hist.projectors()[k];
                if !slot.contains(&proj) {
                    slot.push(proj);
                }
            }
            for (i, a) in slot.iter().enumerate() {
                for b in &slot[i + 1..] {
                    if !a.is_orthogonal_to(b) {
                        return Err(Error::Config(format!(
                            "projectors {} and {} at slice {k} are not orthogonal",
                            a.label(),
                            b.label()
                        )));
                    }
                }
            }
        }
        Ok(Self { histories })
    }

    pub fn histories(&self) -> &[History] {
        &self.histories
    }

    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }
}

/// The canonical 18-history path family of the two-cycle circuit, asking
/// where the photon was on its way to a `D0` click: endpoints are the
/// H-polarized source and exit kets, with arm alternatives `{A, D}` at the
/// first slice and `{A, B, C}` at the two inner slices.
pub fn family_y(circuit: &CircuitModel) -> Result<HistoryFamily> {
    if circuit.m() != 2 {
        return Err(Error::Config(format!(
            "the path family needs the two-cycle circuit (inner arm slices at t2/t3), got m = {}",
            circuit.m()
        )));
    }
    if circuit.blocking() {
        return Err(Error::Config(
            "the path family analyses the open-channel circuit; build it with blocking off".into(),
        ));
    }
    let inner = [Mode::A, Mode::B, Mode::C];
    let mut histories = Vec::with_capacity(18);
    for &a1 in &[Mode::A, Mode::D] {
        for &a2 in &inner {
            for &a3 in &inner {
                histories.push(History::new(vec![
                    Projector::new(0, [Mode::S], PolSpec::H),
                    Projector::arm(1, a1),
                    Projector::arm(2, a2),
                    Projector::arm(3, a3),
                    Projector::new(4, [Mode::F], PolSpec::H),
                ])?);
            }
        }
    }
    HistoryFamily::new(histories)
}

/// Consistency verdict plus the full Gram matrix of chain-ket inner
/// products and the per-history weights (the Gram diagonal).
#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub consistent: bool,
    pub gram: Vec<Vec<Complex64>>,
    pub weights: Vec<f64>,
    pub max_off_diagonal: f64,
}

/// Compute the Gram matrix of all chain kets; the family is consistent when
/// every off-diagonal magnitude stays below [`tol::CONSISTENCY`].
pub fn check_consistency(
    family: &HistoryFamily,
    circuit: &CircuitModel,
) -> Result<ConsistencyReport> {
    let kets: Vec<ChainKet> = family
        .histories()
        .iter()
        .map(|h| chain_ket(h, circuit))
        .collect::<Result<_>>()?;
    let n = kets.len();
    let mut gram = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut max_off = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let entry = kets[i].vector.inner(&kets[j].vector);
            if i != j {
                max_off = max_off.max(entry.norm());
            }
            gram[i][j] = entry;
        }
    }
    Ok(ConsistencyReport {
        consistent: max_off < tol::CONSISTENCY,
        gram,
        weights: kets.iter().map(|k| k.weight).collect(),
        max_off_diagonal: max_off,
    })
}

/// Probabilities of the family's histories, conditioned on the shared
/// post-selected endpoint. Refused when the family is inconsistent.
pub fn history_probabilities(family: &HistoryFamily, circuit: &CircuitModel) -> Result<Vec<f64>> {
    let report = check_consistency(family, circuit)?;
    if !report.consistent {
        return Err(Error::InconsistentFamily(format!(
            "chain kets are not mutually orthogonal (max off-diagonal {:.3e})",
            report.max_off_diagonal
        )));
    }
    let total: f64 = report.weights.iter().sum();
    if total <= tol::ZERO_OVERLAP {
        return Err(Error::Usage(
            "family has zero total weight; the post-selected endpoint is unreachable".into(),
        ));
    }
    Ok(report.weights.iter().map(|w| w / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::RotatorSign;
    use crate::protocol::{build_circuit, build_circuit_with_sign, ProtocolParams};

    fn open_circuit(p: f64) -> CircuitModel {
        build_circuit(&ProtocolParams::new(p, 2, false).unwrap())
    }

    fn a_path_history() -> History {
        History::new(vec![
            Projector::new(0, [Mode::S], PolSpec::H),
            Projector::arm(1, Mode::A),
            Projector::arm(2, Mode::A),
            Projector::arm(3, Mode::A),
            Projector::new(4, [Mode::F], PolSpec::H),
        ])
        .unwrap()
    }

    #[test]
    fn family_has_eighteen_histories_with_shared_endpoints() {
        let circuit = open_circuit(0.5);
        let family = family_y(&circuit).unwrap();
        assert_eq!(family.len(), 18);
        let first = &family.histories()[0];
        for hist in family.histories() {
            assert_eq!(hist.projectors()[0], first.projectors()[0]);
            assert_eq!(hist.projectors()[4], first.projectors()[4]);
        }
    }

    #[test]
    fn family_requires_the_two_cycle_open_circuit() {
        let three = build_circuit(&ProtocolParams::new(0.5, 3, false).unwrap());
        assert!(matches!(family_y(&three), Err(Error::Config(_))));
        let blocked = build_circuit(&ProtocolParams::new(0.5, 2, true).unwrap());
        assert!(matches!(family_y(&blocked), Err(Error::Config(_))));
    }

    #[test]
    fn a_path_chain_ket_is_the_exit_ket_with_weight_one_minus_p() {
        for &p in &[0.0, 0.3, 2.0 / 3.0, 0.95] {
            let circuit = open_circuit(p);
            let ket = chain_ket(&a_path_history(), &circuit).unwrap();
            assert!((ket.weight - (1.0 - p)).abs() < 1e-12);
            // Proportional to |F, H⟩: no amplitude anywhere else.
            let off: f64 = ket
                .vector
                .iter()
                .filter(|((mode, pol), _)| !(*mode == Mode::F && *pol == Polarization::H))
                .map(|(_, a)| a.norm_sqr())
                .sum();
            assert!(off < 1e-30);
        }
        let ket = chain_ket(&a_path_history(), &open_circuit(2.0 / 3.0)).unwrap();
        assert!((ket.weight - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn inner_path_chain_ket_vanishes() {
        let circuit = open_circuit(0.4);
        let history = History::new(vec![
            Projector::new(0, [Mode::S], PolSpec::H),
            Projector::arm(1, Mode::D),
            Projector::arm(2, Mode::C),
            Projector::arm(3, Mode::C),
            Projector::new(4, [Mode::F], PolSpec::H),
        ])
        .unwrap();
        let ket = chain_ket(&history, &circuit).unwrap();
        assert!(ket.weight < tol::EXACT_ZERO_WEIGHT);
    }

    #[test]
    fn orthogonal_initial_projector_gives_zero_chain_ket() {
        let circuit = open_circuit(0.4);
        let history = History::new(vec![
            Projector::new(0, [Mode::S], PolSpec::V),
            Projector::arm(1, Mode::A),
            Projector::arm(2, Mode::A),
            Projector::arm(3, Mode::A),
            Projector::new(4, [Mode::F], PolSpec::H),
        ])
        .unwrap();
        assert!(chain_ket(&history, &circuit).unwrap().weight < tol::EXACT_ZERO_WEIGHT);
    }

    #[test]
    fn chain_ket_rejects_mismatched_slice_counts() {
        let circuit = build_circuit(&ProtocolParams::new(0.5, 3, false).unwrap());
        assert!(matches!(
            chain_ket(&a_path_history(), &circuit),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn exactly_one_history_survives_for_any_entry_probability() {
        for i in 0..=10 {
            let p = i as f64 / 10.0;
            let circuit = open_circuit(p);
            let family = family_y(&circuit).unwrap();
            let report = check_consistency(&family, &circuit).unwrap();
            let nonzero = report
                .weights
                .iter()
                .filter(|&&w| w > tol::EXACT_ZERO_WEIGHT)
                .count();
            if p < 1.0 {
                assert_eq!(nonzero, 1, "p = {p}");
            } else {
                assert_eq!(nonzero, 0);
            }
        }
    }

    #[test]
    fn family_is_consistent_and_only_the_a_path_has_weight() {
        let circuit = open_circuit(2.0 / 3.0);
        let family = family_y(&circuit).unwrap();
        let report = check_consistency(&family, &circuit).unwrap();
        assert!(report.consistent);
        assert!(report.max_off_diagonal < tol::CONSISTENCY);
        assert!((report.weights[0] - 1.0 / 3.0).abs() < 1e-12);
        for w in &report.weights[1..] {
            assert!(*w < tol::EXACT_ZERO_WEIGHT);
        }
    }

    #[test]
    fn single_history_family_is_trivially_consistent() {
        let circuit = open_circuit(0.5);
        let family = HistoryFamily::new(vec![a_path_history()]).unwrap();
        assert!(check_consistency(&family, &circuit).unwrap().consistent);
    }

    #[test]
    fn probabilities_put_everything_on_the_a_path() {
        for &p in &[0.0, 2.0 / 3.0, 0.9] {
            let circuit = open_circuit(p);
            let family = family_y(&circuit).unwrap();
            let probs = history_probabilities(&family, &circuit).unwrap();
            assert!((probs[0] - 1.0).abs() < 1e-12);
            for prob in &probs[1..] {
                assert!(*prob < 1e-12);
            }
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn which_path_family_without_late_resolution_is_refused() {
        // Distinguishing the inner arms at t2 but not at t3, post-selected
        // on the D1 exit, leaves interfering chain kets.
        let circuit = open_circuit(0.5);
        let mk = |mid: Mode| {
            History::new(vec![
                Projector::new(0, [Mode::S], PolSpec::H),
                Projector::arm(1, Mode::D),
                Projector::arm(2, mid),
                Projector::new(3, [Mode::A, Mode::B, Mode::C], PolSpec::Identity),
                Projector::new(4, [Mode::G], PolSpec::V),
            ])
            .unwrap()
        };
        let family = HistoryFamily::new(vec![mk(Mode::B), mk(Mode::C)]).unwrap();
        let report = check_consistency(&family, &circuit).unwrap();
        assert!(!report.consistent);
        assert!(matches!(
            history_probabilities(&family, &circuit),
            Err(Error::InconsistentFamily(_))
        ));
    }

    #[test]
    fn family_rejects_overlapping_slot_projectors() {
        let mk = |arms: Vec<Mode>| {
            History::new(vec![
                Projector::new(0, [Mode::S], PolSpec::H),
                Projector::new(1, arms, PolSpec::Identity),
                Projector::arm(2, Mode::A),
                Projector::arm(3, Mode::A),
                Projector::new(4, [Mode::F], PolSpec::H),
            ])
            .unwrap()
        };
        let result = HistoryFamily::new(vec![mk(vec![Mode::A, Mode::D]), mk(vec![Mode::D])]);
        assert!(matches!(result, Err(Error::Config(_))));
    }

    #[test]
    fn chain_kets_sum_to_the_projected_propagated_source() {
        for &p in &[0.1, 0.5, 0.8] {
            let circuit = open_circuit(p);
            let family = family_y(&circuit).unwrap();
            let summed = family
                .histories()
                .iter()
                .map(|h| chain_ket(h, &circuit).unwrap().vector)
                .fold(PureState::zero(), |acc, v| acc.add(&v));
            let propagated = circuit.propagate(circuit.source()).unwrap();
            let projected = Projector::new(4, [Mode::F], PolSpec::H).apply(&propagated);
            assert!(summed.max_amplitude_diff(&projected) < tol::NORM);
        }
    }

    #[test]
    fn projectors_are_idempotent_hermitian_and_slotwise_orthogonal() {
        let circuit = open_circuit(0.6);
        let family = family_y(&circuit).unwrap();
        let modes = circuit.modes();
        for hist in family.histories() {
            for proj in hist.projectors() {
                // Materialize the diagonal and check Q² = Q = Q†.
                for &mode in modes {
                    for pol in Polarization::BOTH {
                        let basis = PureState::basis(mode, pol);
                        let once = proj.apply(&basis);
                        let twice = proj.apply(&once);
                        assert!(once.max_amplitude_diff(&twice) < 1e-15);
                        let diag = once.amplitude(mode, pol);
                        assert!(diag.im.abs() < 1e-15);
                        assert!(diag.re == 0.0 || (diag.re - 1.0).abs() < 1e-15);
                    }
                }
            }
        }
        // Slot projectors at the middle slices are pairwise orthogonal.
        for slice in [1usize, 2, 3] {
            let mut seen: Vec<&Projector> = Vec::new();
            for hist in family.histories() {
                let proj = &hist.projectors()[slice];
                for prev in &seen {
                    if *prev != proj {
                        assert!(proj.is_orthogonal_to(prev));
                    }
                }
                seen.push(proj);
            }
        }
    }

    #[test]
    fn conclusions_are_invariant_under_the_rotator_sign_flip() {
        for sign in [RotatorSign::Standard, RotatorSign::Flipped] {
            let params = ProtocolParams::new(0.7, 2, false).unwrap();
            let circuit = build_circuit_with_sign(&params, sign);
            let family = family_y(&circuit).unwrap();
            let report = check_consistency(&family, &circuit).unwrap();
            assert!(report.consistent);
            let nonzero = report
                .weights
                .iter()
                .filter(|&&w| w > tol::EXACT_ZERO_WEIGHT)
                .count();
            assert_eq!(nonzero, 1);
            assert!((report.weights[0] - 0.3).abs() < 1e-12);
        }
    }
}
