//! Weak values and the oscillating-mirror experiment.
//!
//! The question "has the post-selected photon been near Bob's mirrors?" is
//! answered two ways. Analytically, [`weak_value`] evaluates the
//! two-state-vector expression `⟨φ|Π|ψ⟩ / ⟨φ|ψ⟩` from the forward-evolved
//! source and the backward-evolved post-selected state. Operationally,
//! [`simulate_dither`] vibrates mirrors at distinct frequencies, records
//! each detector's beam-centroid time series, and [`spectrum`] /
//! [`detect_peaks`] read off which mirror frequencies reach which detector —
//! a frequency missing from a detector's power spectrum means photons
//! arriving there never registered that mirror.
//!
//! The pointer model is exact: mirror displacements shift Gaussian beam
//! envelopes and detector centroids come from full overlap integrals, so
//! null results hold beyond first order in the dither amplitude.

mod pointer;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::histories::Projector;
use crate::montecarlo::SeedSpec;
use crate::optics::{CircuitModel, Detector, MirrorId};
use crate::{tol, Error, Result};

pub use pointer::{MirrorAction, MirrorActions, PointerState};

/// Oscillation of one mirror: `shift(t) = amplitude · sin(2π f t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DitherSpec {
    pub mirror: MirrorId,
    pub frequency_hz: f64,
    pub amplitude_mm: f64,
}

impl DitherSpec {
    pub fn new(mirror: MirrorId, frequency_hz: f64, amplitude_mm: f64) -> Result<Self> {
        if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
            return Err(Error::Config(format!(
                "dither frequency must be positive, got {frequency_hz}"
            )));
        }
        if !(amplitude_mm.is_finite() && amplitude_mm >= 0.0) {
            return Err(Error::Config(format!(
                "dither amplitude must be non-negative, got {amplitude_mm}"
            )));
        }
        Ok(Self {
            mirror,
            frequency_hz,
            amplitude_mm,
        })
    }
}

/// Transverse Gaussian beam. The quoted diameter is the 4σ intensity width,
/// so `sigma = diameter / 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamModel {
    pub diameter_mm: f64,
}

impl BeamModel {
    pub fn new(diameter_mm: f64) -> Result<Self> {
        if !(diameter_mm.is_finite() && diameter_mm > 0.0) {
            return Err(Error::Config(format!(
                "beam diameter must be positive, got {diameter_mm}"
            )));
        }
        Ok(Self { diameter_mm })
    }

    pub fn sigma_mm(&self) -> f64 {
        self.diameter_mm / 4.0
    }
}

/// Per-detector centroid time series (mm) at a fixed sample rate.
#[derive(Debug, Clone, Serialize)]
pub struct TimeSeries {
    pub rate_hz: f64,
    pub duration_s: f64,
    pub time_s: Vec<f64>,
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    pub d3: Vec<f64>,
    /// Soft diagnostics, e.g. a dither amplitude large enough to strain the
    /// weak-coupling reading.
    pub warnings: Vec<String>,
}

impl TimeSeries {
    pub fn samples(&self, detector: Detector) -> &[f64] {
        match detector {
            Detector::D0 => &self.d0,
            Detector::D1 => &self.d1,
            Detector::D3 => &self.d3,
        }
    }

    pub fn len(&self) -> usize {
        self.time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_s.is_empty()
    }
}

/// One-sided power spectra of the three detector series.
#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    /// Bin frequencies, spaced by `1 / duration`.
    pub freq_hz: Vec<f64>,
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    pub d3: Vec<f64>,
}

impl Spectrum {
    pub fn power(&self, detector: Detector) -> &[f64] {
        match detector {
            Detector::D0 => &self.d0,
            Detector::D1 => &self.d1,
            Detector::D3 => &self.d3,
        }
    }
}

/// Verdict for one probe frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakReading {
    pub frequency_hz: f64,
    pub present: bool,
    pub power: f64,
    pub threshold: f64,
}

/// Weak value `⟨φ(t_k)|Π|ψ(t_k)⟩ / ⟨φ(t_k)|ψ(t_k)⟩` of `projector` at its
/// slice, pre-selected on the circuit source and post-selected on the
/// subspace of `final_projector` (which must sit at the last slice).
///
/// `|ψ⟩` is the source evolved forward to the slice; `|φ⟩` is the projected
/// final state evolved backward to it. Vanishing post-selection overlap is
/// an error: no weak value exists there.
pub fn weak_value(
    projector: &Projector,
    circuit: &CircuitModel,
    final_projector: &Projector,
) -> Result<Complex64> {
    let last = circuit.n_slices() - 1;
    if final_projector.slice() != last {
        return Err(Error::Usage(format!(
            "post-selection projector must sit at the final slice {last}, got {}",
            final_projector.slice()
        )));
    }
    let slice = projector.slice();
    if slice > last {
        return Err(Error::Usage(format!(
            "projector slice {slice} out of range for a circuit with {} slices",
            circuit.n_slices()
        )));
    }
    let final_state = circuit.propagate(circuit.source())?;
    let postselected = final_projector.apply(&final_state);
    if postselected.norm_sqr() <= tol::ZERO_OVERLAP {
        return Err(Error::UndefinedWeakValue(
            "post-selection overlap is zero for this circuit".into(),
        ));
    }
    let forward = circuit.forward_state(slice)?;
    let backward = circuit.backward_state(&postselected, slice)?;
    let denom = backward.inner(&forward);
    if denom.norm_sqr() <= tol::ZERO_OVERLAP {
        return Err(Error::UndefinedWeakValue(
            "forward and backward states do not overlap at this slice".into(),
        ));
    }
    let numer = backward.inner(&projector.apply(&forward));
    Ok(numer / denom)
}

/// Dither-amplitude-to-beam ratio above which [`simulate_dither`] records a
/// weak-coupling warning.
pub const WEAKNESS_RATIO: f64 = 0.05;

/// Simulate the dithered-mirror run: at each sample time every listed
/// mirror displaces the amplitude passing it by `amplitude · sin(2π f t)`,
/// and each detector records the centroid of the coherent sum of displaced
/// Gaussian envelopes. Optional white Gaussian noise of RMS `noise_rms_mm`
/// is added per sample, driven by `seed`.
pub fn simulate_dither(
    circuit: &CircuitModel,
    dithers: &[DitherSpec],
    beam: &BeamModel,
    rate_hz: f64,
    duration_s: f64,
    noise_rms_mm: f64,
    seed: SeedSpec,
) -> Result<TimeSeries> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) || !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::Config(
            "sample rate and duration must be positive".into(),
        ));
    }
    let samples_f = rate_hz * duration_s;
    let n = samples_f.round();
    if (samples_f - n).abs() > 1e-9 || n < 1.0 {
        return Err(Error::Config(format!(
            "rate × duration must be a whole number of samples, got {samples_f}"
        )));
    }
    let n = n as usize;
    if !(noise_rms_mm.is_finite() && noise_rms_mm >= 0.0) {
        return Err(Error::Config("noise RMS must be non-negative".into()));
    }
    let mut max_freq = 0.0f64;
    let mut warnings = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for dither in dithers {
        if !seen.insert(dither.mirror) {
            return Err(Error::Config(format!(
                "mirror {} is listed twice in the dither set",
                dither.mirror
            )));
        }
        if circuit.mirror_site(dither.mirror).is_none() {
            return Err(Error::Config(format!(
                "circuit has no mirror {}; it only exists in the first two inner cycles",
                dither.mirror
            )));
        }
        max_freq = max_freq.max(dither.frequency_hz);
        if dither.amplitude_mm / beam.diameter_mm > WEAKNESS_RATIO {
            warnings.push(format!(
                "dither of {} is {:.3} of the beam diameter; weak-coupling readings degrade above {WEAKNESS_RATIO}",
                dither.mirror,
                dither.amplitude_mm / beam.diameter_mm
            ));
        }
    }
    if rate_hz <= 2.0 * max_freq {
        return Err(Error::Config(format!(
            "sample rate {rate_hz} Hz aliases a {max_freq} Hz dither; need rate > twice the highest frequency"
        )));
    }

    let sigma = beam.sigma_mm();
    let mut rng = seed.rng();
    let mut series = TimeSeries {
        rate_hz,
        duration_s,
        time_s: Vec::with_capacity(n),
        d0: Vec::with_capacity(n),
        d1: Vec::with_capacity(n),
        d3: Vec::with_capacity(n),
        warnings,
    };
    for i in 0..n {
        let t = i as f64 / rate_hz;
        let mut actions = MirrorActions::new();
        for dither in dithers {
            let shift =
                dither.amplitude_mm * (2.0 * std::f64::consts::PI * dither.frequency_hz * t).sin();
            actions.insert(dither.mirror, MirrorAction::Displace(shift));
        }
        let state = PointerState::propagate(circuit, &actions)?;
        series.time_s.push(t);
        for (detector, out) in [
            (Detector::D0, &mut series.d0),
            (Detector::D1, &mut series.d1),
            (Detector::D3, &mut series.d3),
        ] {
            let (_, centroid) = state.intensity_and_centroid(detector.arm(), sigma);
            let noise: f64 = if noise_rms_mm > 0.0 {
                noise_rms_mm * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            out.push(centroid + noise);
        }
    }
    Ok(series)
}

/// One-sided DFT power spectrum (`|X_k|²`) of each detector series.
pub fn spectrum(series: &TimeSeries) -> Spectrum {
    let n = series.len();
    assert!(n > 0, "cannot take the spectrum of an empty series");
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let half = n / 2;
    let transform = |samples: &[f64]| -> Vec<f64> {
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft.process(&mut buf);
        buf[..=half].iter().map(|x| x.norm_sqr()).collect()
    };
    let df = series.rate_hz / n as f64;
    Spectrum {
        freq_hz: (0..=half).map(|k| k as f64 * df).collect(),
        d0: transform(&series.d0),
        d1: transform(&series.d1),
        d3: transform(&series.d3),
    }
}

/// Classify each probe frequency as present or absent in one detector's
/// spectrum. A probe is present when its bin power exceeds
/// `threshold_ratio ×` the median power over all non-probe bins (with an
/// absolute floor of [`tol::POWER_FLOOR`] so round-off residue in a silent
/// channel never registers). Probe frequencies must be bin-aligned.
pub fn detect_peaks(
    spec: &Spectrum,
    detector: Detector,
    probe_freqs: &[f64],
    threshold_ratio: f64,
) -> Result<Vec<PeakReading>> {
    if probe_freqs.is_empty() {
        return Ok(Vec::new());
    }
    if spec.freq_hz.len() < 2 {
        return Err(Error::Usage(
            "spectrum is too short for peak detection".into(),
        ));
    }
    if !(threshold_ratio.is_finite() && threshold_ratio > 0.0) {
        return Err(Error::Config("threshold ratio must be positive".into()));
    }
    let df = spec.freq_hz[1] - spec.freq_hz[0];
    let mut bins = Vec::with_capacity(probe_freqs.len());
    for &f in probe_freqs {
        let k = f / df;
        let rounded = k.round();
        if (k - rounded).abs() > tol::BIN_ALIGN || rounded < 0.0 {
            return Err(Error::Config(format!(
                "probe frequency {f} Hz is not bin-aligned (bin spacing {df} Hz); adjust the duration so that frequency × duration is an integer"
            )));
        }
        let bin = rounded as usize;
        if bin >= spec.freq_hz.len() {
            return Err(Error::Config(format!(
                "probe frequency {f} Hz exceeds the spectral range"
            )));
        }
        bins.push(bin);
    }
    let power = spec.power(detector);
    let mut off_probe: Vec<f64> = power
        .iter()
        .enumerate()
        .filter(|(i, _)| !bins.contains(i))
        .map(|(_, &p)| p)
        .collect();
    off_probe.sort_by(|a, b| a.partial_cmp(b).expect("powers are finite"));
    let median = if off_probe.is_empty() {
        0.0
    } else {
        let mid = off_probe.len() / 2;
        if off_probe.len().is_multiple_of(2) {
            0.5 * (off_probe[mid - 1] + off_probe[mid])
        } else {
            off_probe[mid]
        }
    };
    Ok(probe_freqs
        .iter()
        .zip(&bins)
        .map(|(&f, &bin)| {
            let threshold = (threshold_ratio * median).max(tol::POWER_FLOOR);
            PeakReading {
                frequency_hz: f,
                present: power[bin] > threshold,
                power: power[bin],
                threshold,
            }
        })
        .collect())
}

/// Kind of perturbation a sensitivity probe applies at a mirror.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PerturbationKind {
    /// Multiply the passing amplitude by `exp(iε)`.
    Phase,
    /// Displace the passing envelope by `ε` mm.
    Displacement,
}

/// A small perturbation applied at one mirror for finite differencing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityProbe {
    pub mirror: MirrorId,
    pub kind: PerturbationKind,
    /// Central finite-difference step.
    pub step: f64,
}

impl SensitivityProbe {
    pub const DEFAULT_STEP: f64 = 1e-6;

    pub fn new(mirror: MirrorId, kind: PerturbationKind) -> Self {
        Self {
            mirror,
            kind,
            step: Self::DEFAULT_STEP,
        }
    }

    pub fn with_step(self, step: f64) -> Self {
        Self { step, ..self }
    }
}

/// Finite-difference response of one detector to a mirror perturbation:
/// magnitudes of the first and second derivatives of the detector's pointer
/// amplitude vector and of its centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub detector: Detector,
    pub amplitude_first: f64,
    pub amplitude_second: f64,
    pub centroid_first: f64,
    pub centroid_second: f64,
}

fn perturbed_observables(
    circuit: &CircuitModel,
    beam: &BeamModel,
    probe: &SensitivityProbe,
    detector: Detector,
    epsilon: f64,
) -> Result<([Complex64; 2], f64)> {
    let mut actions = MirrorActions::new();
    let action = match probe.kind {
        PerturbationKind::Phase => MirrorAction::Phase(epsilon),
        PerturbationKind::Displacement => MirrorAction::Displace(epsilon),
    };
    actions.insert(probe.mirror, action);
    let state = PointerState::propagate(circuit, &actions)?;
    let arm = detector.arm();
    let amps = state.pointer_amplitudes(arm, beam.sigma_mm());
    let (_, centroid) = state.intensity_and_centroid(arm, beam.sigma_mm());
    Ok((amps, centroid))
}

/// Central finite differences of one detector's response to `probe`.
pub fn detector_sensitivity(
    circuit: &CircuitModel,
    beam: &BeamModel,
    probe: &SensitivityProbe,
    detector: Detector,
) -> Result<SensitivityReport> {
    if !(probe.step.is_finite() && probe.step > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {}",
            probe.step
        )));
    }
    if circuit.mirror_site(probe.mirror).is_none() {
        return Err(Error::Config(format!(
            "circuit has no mirror {}",
            probe.mirror
        )));
    }
    let h = probe.step;
    let (a_minus, c_minus) = perturbed_observables(circuit, beam, probe, detector, -h)?;
    let (a_zero, c_zero) = perturbed_observables(circuit, beam, probe, detector, 0.0)?;
    let (a_plus, c_plus) = perturbed_observables(circuit, beam, probe, detector, h)?;

    let norm2 = |v: [Complex64; 2]| (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let first = [
        (a_plus[0] - a_minus[0]) / (2.0 * h),
        (a_plus[1] - a_minus[1]) / (2.0 * h),
    ];
    let second = [
        (a_plus[0] - 2.0 * a_zero[0] + a_minus[0]) / (h * h),
        (a_plus[1] - 2.0 * a_zero[1] + a_minus[1]) / (h * h),
    ];
    Ok(SensitivityReport {
        detector,
        amplitude_first: norm2(first),
        amplitude_second: norm2(second),
        centroid_first: ((c_plus - c_minus) / (2.0 * h)).abs(),
        centroid_second: ((c_plus - 2.0 * c_zero + c_minus) / (h * h)).abs(),
    })
}

/// [`detector_sensitivity`] at `D0` for a perturbation on Bob's channel:
/// the quantity that must vanish (to all probed orders) for the photon to
/// count as never having been to Bob.
pub fn bob_sensitivity(
    circuit: &CircuitModel,
    beam: &BeamModel,
    probe: &SensitivityProbe,
) -> Result<SensitivityReport> {
    if probe.mirror == MirrorId::MA {
        return Err(Error::Usage(
            "bob_sensitivity probes Bob's mirrors; use detector_sensitivity for M_A".into(),
        ));
    }
    detector_sensitivity(circuit, beam, probe, Detector::D0)
}
