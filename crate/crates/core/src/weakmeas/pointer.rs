//! Transverse-pointer companion to [`PureState`]: every amplitude component
//! carries the transverse displacement (in mm) accumulated from the mirrors
//! it has bounced off, and detector readings come from exact overlaps of the
//! correspondingly displaced Gaussian envelopes — no first-order expansion.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::optics::{CircuitModel, MirrorId, Mode, OpticalOp, Polarization, PureState};
use crate::{Error, Result};

/// What a mirror does to amplitude passing it during one evaluation.
#[derive(Debug, Clone, Copy)]
pub enum MirrorAction {
    /// Add a transverse displacement (mm) to the component's envelope.
    Displace(f64),
    /// Multiply the component's amplitude by `exp(i·phase)`.
    Phase(f64),
}

pub type MirrorActions = BTreeMap<MirrorId, MirrorAction>;

fn shift_key(shift: f64) -> u64 {
    // Collapse -0.0 onto +0.0 so merged components agree on the key.
    if shift == 0.0 {
        0.0f64.to_bits()
    } else {
        shift.to_bits()
    }
}

/// Sparse state over `(mode, polarization, displacement)` components.
#[derive(Debug, Clone, Default)]
pub struct PointerState {
    comps: BTreeMap<(Mode, Polarization, u64), Complex64>,
}

impl PointerState {
    pub fn from_pure(state: &PureState) -> Self {
        let mut out = Self::default();
        for ((mode, pol), amp) in state.iter() {
            out.push(mode, pol, 0.0, amp);
        }
        out
    }

    fn push(&mut self, mode: Mode, pol: Polarization, shift: f64, amp: Complex64) {
        if amp.re == 0.0 && amp.im == 0.0 {
            return;
        }
        let entry = self
            .comps
            .entry((mode, pol, shift_key(shift)))
            .or_insert_with(|| Complex64::new(0.0, 0.0));
        *entry += amp;
    }

    pub fn components(&self, mode: Mode) -> Vec<(Polarization, f64, Complex64)> {
        self.comps
            .iter()
            .filter(|((m, _, _), _)| *m == mode)
            .map(|(&(_, pol, bits), &amp)| (pol, f64::from_bits(bits), amp))
            .collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        // Components at distinct displacements are not orthogonal, but the
        // circuit only ever merges envelopes inside one arm, so the plain
        // sum still tracks the modal norm for diagnostics.
        self.comps.values().map(|a| a.norm_sqr()).sum()
    }

    fn apply_op(&self, op: &OpticalOp, actions: &MirrorActions) -> Result<Self> {
        let mut out = Self::default();
        match op {
            OpticalOp::Rotator { modes, theta } => {
                if !theta.is_finite() {
                    return Err(Error::Config(format!(
                        "rotator angle must be finite, got {theta}"
                    )));
                }
                let (s, c) = theta.sin_cos();
                // Group H/V pairs per (mode, shift) so envelopes mix exactly.
                let mut groups: BTreeMap<(Mode, u64), (Complex64, Complex64)> = BTreeMap::new();
                for (&(mode, pol, bits), &amp) in &self.comps {
                    if modes.contains(&mode) {
                        if mode.is_sink() {
                            return Err(Error::Config(format!(
                                "cannot rotate terminal sink mode {mode}"
                            )));
                        }
                        let entry = groups
                            .entry((mode, bits))
                            .or_insert((Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)));
                        match pol {
                            Polarization::H => entry.0 = amp,
                            Polarization::V => entry.1 = amp,
                        }
                    } else {
                        out.push(mode, pol, f64::from_bits(bits), amp);
                    }
                }
                for ((mode, bits), (h, v)) in groups {
                    let shift = f64::from_bits(bits);
                    out.push(mode, Polarization::H, shift, h * c - v * s);
                    out.push(mode, Polarization::V, shift, h * s + v * c);
                }
            }
            OpticalOp::Pbs { routing } => {
                let mut relabel: BTreeMap<(Mode, Polarization), (Mode, Polarization)> =
                    BTreeMap::new();
                for &((mode, pol), target) in routing {
                    relabel.insert((mode, pol), (target, pol));
                    relabel.insert((target, pol), (mode, pol));
                }
                for (&(mode, pol, bits), &amp) in &self.comps {
                    let (m2, p2) = relabel.get(&(mode, pol)).copied().unwrap_or((mode, pol));
                    out.push(m2, p2, f64::from_bits(bits), amp);
                }
            }
            OpticalOp::Block { mode, sink } => {
                for (&(m, pol, bits), &amp) in &self.comps {
                    if m == *sink {
                        return Err(Error::Config(format!(
                            "sink collision: {sink} already holds amplitude"
                        )));
                    }
                    let m2 = if m == *mode { *sink } else { m };
                    out.push(m2, pol, f64::from_bits(bits), amp);
                }
            }
            OpticalOp::Mirror { id, mode } => {
                let action = actions.get(id).copied();
                for (&(m, pol, bits), &amp) in &self.comps {
                    let shift = f64::from_bits(bits);
                    match action {
                        Some(MirrorAction::Displace(d)) if m == *mode => {
                            out.push(m, pol, shift + d, amp);
                        }
                        Some(MirrorAction::Phase(phi)) if m == *mode => {
                            out.push(m, pol, shift, amp * Complex64::from_polar(1.0, phi));
                        }
                        _ => out.push(m, pol, shift, amp),
                    }
                }
            }
        }
        Ok(out)
    }

    /// Run the source through all stages with the given mirror actions.
    pub fn propagate(circuit: &CircuitModel, actions: &MirrorActions) -> Result<Self> {
        let mut state = Self::from_pure(circuit.source());
        for stage in circuit.stages() {
            for op in stage.ops() {
                state = state.apply_op(op, actions)?;
            }
        }
        Ok(state)
    }

    /// Intensity and centroid (mm) of the light in `mode`, from exact
    /// pairwise overlaps of displaced Gaussian envelopes of RMS width
    /// `sigma_mm`. Zero intensity reads as centroid zero.
    pub fn intensity_and_centroid(&self, mode: Mode, sigma_mm: f64) -> (f64, f64) {
        let mut intensity = 0.0;
        let mut first_moment = 0.0;
        for pol in Polarization::BOTH {
            let comps: Vec<(f64, Complex64)> = self
                .components(mode)
                .into_iter()
                .filter(|(p, _, _)| *p == pol)
                .map(|(_, shift, amp)| (shift, amp))
                .collect();
            for (i, &(di, ai)) in comps.iter().enumerate() {
                for (j, &(dj, aj)) in comps.iter().enumerate().skip(i) {
                    let overlap = gaussian_overlap(di, dj, sigma_mm);
                    let cross = (ai * aj.conj()).re;
                    let weight = if i == j { 1.0 } else { 2.0 };
                    intensity += weight * cross * overlap;
                    first_moment += weight * cross * overlap * 0.5 * (di + dj);
                }
            }
        }
        if intensity <= 0.0 {
            (0.0, 0.0)
        } else {
            (intensity, first_moment / intensity)
        }
    }

    /// Projection of the light in `mode` onto the undisplaced envelope,
    /// one complex amplitude per polarization. This is the natural
    /// "amplitude at the detector" for finite-difference probes: any
    /// component that never left the reference envelope contributes fully.
    pub fn pointer_amplitudes(&self, mode: Mode, sigma_mm: f64) -> [Complex64; 2] {
        let mut out = [Complex64::new(0.0, 0.0); 2];
        for (pol, shift, amp) in self.components(mode) {
            let idx = match pol {
                Polarization::H => 0,
                Polarization::V => 1,
            };
            out[idx] += amp * gaussian_overlap(shift, 0.0, sigma_mm);
        }
        out
    }
}

/// `⟨G(x-a)|G(x-b)⟩` for normalized Gaussians of RMS intensity width
/// `sigma`: `exp(-(a-b)² / (8σ²))`.
fn gaussian_overlap(a: f64, b: f64, sigma: f64) -> f64 {
    let d = a - b;
    (-d * d / (8.0 * sigma * sigma)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{build_circuit, ProtocolParams};

    fn open_circuit(p: f64) -> CircuitModel {
        build_circuit(&ProtocolParams::new(p, 2, false).unwrap())
    }

    #[test]
    fn propagation_without_actions_matches_the_plain_state() {
        let circuit = open_circuit(0.6);
        let plain = circuit.propagate(circuit.source()).unwrap();
        let pointer = PointerState::propagate(&circuit, &MirrorActions::new()).unwrap();
        for &mode in circuit.modes() {
            for pol in Polarization::BOTH {
                let comps = pointer.components(mode);
                let amp: Complex64 = comps
                    .iter()
                    .filter(|(p, _, _)| *p == pol)
                    .map(|(_, _, a)| *a)
                    .sum();
                assert!((amp - plain.amplitude(mode, pol)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn displaced_single_component_centres_on_its_shift() {
        let circuit = open_circuit(0.5);
        let mut actions = MirrorActions::new();
        actions.insert(MirrorId::MA, MirrorAction::Displace(0.25));
        let state = PointerState::propagate(&circuit, &actions).unwrap();
        let (intensity, centroid) = state.intensity_and_centroid(Mode::F, 1.25);
        assert!((intensity - 0.5).abs() < 1e-12);
        assert!((centroid - 0.25).abs() < 1e-12);
    }

    #[test]
    fn centroid_of_an_empty_arm_is_zero() {
        let circuit = open_circuit(0.0);
        let state = PointerState::propagate(&circuit, &MirrorActions::new()).unwrap();
        let (intensity, centroid) = state.intensity_and_centroid(Mode::G, 1.25);
        assert_eq!(intensity, 0.0);
        assert_eq!(centroid, 0.0);
    }

    #[test]
    fn equal_and_opposite_components_average_between_their_shifts() {
        let mut state = PointerState::default();
        state.push(Mode::F, Polarization::H, 0.0, Complex64::new(0.5, 0.0));
        state.push(Mode::F, Polarization::H, 0.4, Complex64::new(0.5, 0.0));
        let sigma = 1.25;
        let (intensity, centroid) = state.intensity_and_centroid(Mode::F, sigma);
        let overlap = gaussian_overlap(0.4, 0.0, sigma);
        assert!((intensity - (0.5 + 0.5 * overlap)).abs() < 1e-12);
        assert!((centroid - 0.2).abs() < 1e-12);
    }

    #[test]
    fn phase_action_rotates_the_blocked_arm_amplitude_only() {
        let circuit = open_circuit(0.5);
        let mut actions = MirrorActions::new();
        actions.insert(MirrorId::MB1, MirrorAction::Phase(0.3));
        let state = PointerState::propagate(&circuit, &actions).unwrap();
        // The outer arm never sees Bob's mirrors.
        let [f_h, _] = state.pointer_amplitudes(Mode::F, 1.25);
        assert!((f_h.norm_sqr() - 0.5).abs() < 1e-12);
        assert!(f_h.im.abs() < 1e-15);
        // The leak to the D1 arm switches on with the phase.
        let [_, g_v] = state.pointer_amplitudes(Mode::G, 1.25);
        assert!(g_v.norm() > 1e-3);
    }
}
