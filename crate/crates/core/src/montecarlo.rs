//! Stochastic rounds of the protocol: seeded sampling of detector outcomes,
//! bit transmission with retry until post-selection succeeds, the
//! fire-the-experimenters scenario, and empirical tables with confidence
//! intervals.
//!
//! Sampling defaults to the infinite-cycle closed-form distributions; a
//! finite-cycle sampler backed by full state propagation is available for
//! studying Zeno losses. All randomness flows through [`SeedSpec`], which
//! pins both a seed and a stream id so that partitioned runs stay
//! reproducible and merge order-independently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::protocol::{build_circuit, raw_probabilities_limit, ProtocolParams};
use crate::{Error, Result};

/// Outcome of one photon: a detector click or absorption by Bob's blocker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RoundOutcome {
    D0,
    D1,
    D3,
    AbsorbedByBob,
}

/// Reproducibility contract: identical `(seed, stream, parameters)` yield
/// identical outcome sequences across runs and platforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeedSpec {
    pub seed: u64,
    pub stream: u64,
}

impl SeedSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Default retry cap for [`transmit_bit`].
pub const DEFAULT_ATTEMPT_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy)]
struct OutcomeDistribution {
    d0: f64,
    d1: f64,
    d3: f64,
}

impl OutcomeDistribution {
    fn sample(&self, rng: &mut impl Rng) -> RoundOutcome {
        let u: f64 = rng.random();
        if u < self.d0 {
            RoundOutcome::D0
        } else if u < self.d0 + self.d1 {
            RoundOutcome::D1
        } else if u < self.d0 + self.d1 + self.d3 {
            RoundOutcome::D3
        } else {
            RoundOutcome::AbsorbedByBob
        }
    }
}

/// Precomputed outcome distributions for both of Bob's choices at one `P`.
#[derive(Debug, Clone, Copy)]
pub struct Sampler {
    p: f64,
    blocked: OutcomeDistribution,
    open: OutcomeDistribution,
}

impl Sampler {
    /// Closed-form infinite-cycle distributions.
    pub fn infinite_limit(p: f64) -> Result<Self> {
        let blocked = raw_probabilities_limit(p, true)?;
        let open = raw_probabilities_limit(p, false)?;
        Ok(Self {
            p,
            blocked: OutcomeDistribution {
                d0: blocked.d0,
                d1: blocked.d1,
                d3: blocked.d3,
            },
            open: OutcomeDistribution {
                d0: open.d0,
                d1: open.d1,
                d3: open.d3,
            },
        })
    }

    /// Distributions obtained by propagating the finite `m`-cycle circuit.
    pub fn finite(p: f64, m: u32) -> Result<Self> {
        let mut dists = [OutcomeDistribution {
            d0: 0.0,
            d1: 0.0,
            d3: 0.0,
        }; 2];
        for (slot, blocking) in dists.iter_mut().zip([true, false]) {
            let params = ProtocolParams::new(p, m, blocking)?;
            let circuit = build_circuit(&params);
            let state = circuit
                .propagate(circuit.source())
                .expect("a freshly built circuit applies cleanly to its own source");
            let probs = crate::optics::detect_probabilities(&state);
            *slot = OutcomeDistribution {
                d0: probs.d0,
                d1: probs.d1,
                d3: probs.d3,
            };
        }
        Ok(Self {
            p,
            blocked: dists[0],
            open: dists[1],
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Source prior for blocking that balances the post-selected stream,
    /// `P_B = (1-P)/(2-P)`.
    pub fn blocking_prior(&self) -> f64 {
        (1.0 - self.p) / (2.0 - self.p)
    }

    pub fn sample(&self, blocking: bool, rng: &mut impl Rng) -> RoundOutcome {
        if blocking {
            self.blocked.sample(rng)
        } else {
            self.open.sample(rng)
        }
    }
}

/// One photon through the finite-cycle circuit described by `params`.
///
/// Builds and propagates the circuit on each call; use a [`Sampler`] for
/// bulk sampling.
pub fn run_round(params: &ProtocolParams, rng: &mut impl Rng) -> RoundOutcome {
    Sampler::finite(params.p(), params.m())
        .expect("validated params always yield a sampler")
        .sample(params.blocking(), rng)
}

/// Result of transmitting one bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BitTransmission {
    pub estimate: u8,
    pub attempts: u64,
    pub d3_losses: u64,
    pub absorbed_losses: u64,
}

/// Repeat rounds until a `D0` or `D1` click. Bob blocks for bit `0` and
/// opens for bit `1`; the receiver estimates `1` from `D0` and `0` from
/// `D1` (an open-channel click at `D1` is impossible, so `D1` identifies
/// blocking uniquely).
pub fn transmit_bit(
    sampler: &Sampler,
    bit: u8,
    rng: &mut impl Rng,
    attempt_cap: u64,
) -> Result<BitTransmission> {
    if bit > 1 {
        return Err(Error::Usage(format!("bits must be 0 or 1, got {bit}")));
    }
    let blocking = bit == 0;
    let mut d3_losses = 0;
    let mut absorbed_losses = 0;
    for attempt in 1..=attempt_cap {
        match sampler.sample(blocking, rng) {
            RoundOutcome::D0 => {
                return Ok(BitTransmission {
                    estimate: 1,
                    attempts: attempt,
                    d3_losses,
                    absorbed_losses,
                })
            }
            RoundOutcome::D1 => {
                return Ok(BitTransmission {
                    estimate: 0,
                    attempts: attempt,
                    d3_losses,
                    absorbed_losses,
                })
            }
            RoundOutcome::D3 => d3_losses += 1,
            RoundOutcome::AbsorbedByBob => absorbed_losses += 1,
        }
    }
    Err(Error::CapExceeded(format!(
        "no successful round after {attempt_cap} attempts (entry probability {} is close to one)",
        sampler.p()
    )))
}

/// Aggregate statistics of a transmitted message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransmissionStats {
    pub bits_sent: u64,
    pub bits_correct: u64,
    pub accuracy: f64,
    pub total_rounds: u64,
    pub rounds_lost: u64,
    pub d0_count: u64,
    pub d1_count: u64,
    pub d3_count: u64,
    pub absorbed_count: u64,
}

/// Transmit every bit of `bits` with retry-until-success.
pub fn transmit_message(
    sampler: &Sampler,
    bits: &[u8],
    rng: &mut impl Rng,
    attempt_cap: u64,
) -> Result<TransmissionStats> {
    if bits.is_empty() {
        return Err(Error::Usage("message must contain at least one bit".into()));
    }
    let mut stats = TransmissionStats {
        bits_sent: 0,
        bits_correct: 0,
        accuracy: 0.0,
        total_rounds: 0,
        rounds_lost: 0,
        d0_count: 0,
        d1_count: 0,
        d3_count: 0,
        absorbed_count: 0,
    };
    for &bit in bits {
        let sent = transmit_bit(sampler, bit, rng, attempt_cap)?;
        stats.bits_sent += 1;
        if sent.estimate == bit {
            stats.bits_correct += 1;
        }
        stats.total_rounds += sent.attempts;
        stats.rounds_lost += sent.d3_losses + sent.absorbed_losses;
        stats.d3_count += sent.d3_losses;
        stats.absorbed_count += sent.absorbed_losses;
        match sent.estimate {
            1 => stats.d0_count += 1,
            _ => stats.d1_count += 1,
        }
    }
    stats.accuracy = stats.bits_correct as f64 / stats.bits_sent as f64;
    Ok(stats)
}

/// Outcome of one fire-on-failure scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectorRun {
    /// Pairs of experimenters consumed, including the winning pair.
    pub pairs_used: u64,
    /// Bit accuracy of the winning pair; `None` for an empty message.
    pub winning_accuracy: Option<f64>,
}

/// The fire-on-failure scenario: each pair of experimenters must push a
/// fresh `message_len`-bit message through single-shot rounds, one photon
/// per bit, and is replaced the moment any photon is lost. Message bits are
/// drawn with the balanced-source prior `P_B`, under which a round fails
/// with probability `P_L = P/(2-P)` — one half at `P = 2/3`, making the
/// expected head count `2^message_len`.
pub fn lab_director(
    sampler: &Sampler,
    message_len: u32,
    rng: &mut impl Rng,
    pair_cap: u64,
) -> Result<DirectorRun> {
    let prior = sampler.blocking_prior();
    for pair in 1..=pair_cap {
        let mut correct = 0u32;
        let mut survived = true;
        for _ in 0..message_len {
            let bit: u8 = if rng.random::<f64>() < prior { 0 } else { 1 };
            match sampler.sample(bit == 0, rng) {
                RoundOutcome::D0 => {
                    if bit == 1 {
                        correct += 1;
                    }
                }
                RoundOutcome::D1 => {
                    if bit == 0 {
                        correct += 1;
                    }
                }
                RoundOutcome::D3 | RoundOutcome::AbsorbedByBob => {
                    survived = false;
                    break;
                }
            }
        }
        if survived {
            return Ok(DirectorRun {
                pairs_used: pair,
                winning_accuracy: (message_len > 0).then(|| correct as f64 / message_len as f64),
            });
        }
    }
    Err(Error::CapExceeded(format!(
        "no pair completed a {message_len}-bit message within {pair_cap} pairs"
    )))
}

/// Aggregate of repeated [`lab_director`] scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectorStats {
    pub repetitions: u64,
    pub mean_pairs: f64,
    pub min_pairs: u64,
    pub max_pairs: u64,
    pub mean_winning_accuracy: f64,
}

pub fn director_study(
    sampler: &Sampler,
    message_len: u32,
    repetitions: u64,
    rng: &mut impl Rng,
    pair_cap: u64,
) -> Result<DirectorStats> {
    if repetitions == 0 {
        return Err(Error::Usage("at least one repetition is required".into()));
    }
    let mut total_pairs = 0u64;
    let mut min_pairs = u64::MAX;
    let mut max_pairs = 0u64;
    let mut accuracy_sum = 0.0;
    let mut accuracy_count = 0u64;
    for _ in 0..repetitions {
        let run = lab_director(sampler, message_len, rng, pair_cap)?;
        total_pairs += run.pairs_used;
        min_pairs = min_pairs.min(run.pairs_used);
        max_pairs = max_pairs.max(run.pairs_used);
        if let Some(acc) = run.winning_accuracy {
            accuracy_sum += acc;
            accuracy_count += 1;
        }
    }
    Ok(DirectorStats {
        repetitions,
        mean_pairs: total_pairs as f64 / repetitions as f64,
        min_pairs,
        max_pairs,
        mean_winning_accuracy: if accuracy_count > 0 {
            accuracy_sum / accuracy_count as f64
        } else {
            1.0
        },
    })
}

/// An exactly balanced message of `len` bits in seeded random order.
pub fn balanced_message(len: u32, rng: &mut impl Rng) -> Vec<u8> {
    let mut bits: Vec<u8> = (0..len).map(|i| (i % 2) as u8).collect();
    for i in (1..bits.len()).rev() {
        let j = rng.random_range(0..=i);
        bits.swap(i, j);
    }
    bits
}

/// A frequency with its Wilson 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreqEstimate {
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

impl FreqEstimate {
    fn new(successes: u64, trials: u64) -> Self {
        let (lower, upper) = wilson_interval(successes, trials);
        Self {
            successes,
            trials,
            p_hat: if trials > 0 {
                successes as f64 / trials as f64
            } else {
                0.0
            },
            lower,
            upper,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Empirical frequencies for one blocking condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutcomeFreqs {
    pub d0: FreqEstimate,
    pub d1: FreqEstimate,
    pub d3: FreqEstimate,
    pub absorbed: FreqEstimate,
}

/// Post-selected joint frequencies (denominator: post-selected rounds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PostselectedFreqs {
    pub d0_blocking: FreqEstimate,
    pub d1_blocking: FreqEstimate,
    pub d0_not_blocking: FreqEstimate,
    pub d1_not_blocking: FreqEstimate,
}

/// Empirical raw and post-selected tables with Wilson intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalTables {
    pub rounds: u64,
    pub prior_blocking: f64,
    pub raw_blocking: OutcomeFreqs,
    pub raw_not_blocking: OutcomeFreqs,
    pub postselected: PostselectedFreqs,
    /// Fraction of post-selected rounds whose estimate matched the bit.
    pub correct: FreqEstimate,
    /// Fraction of all rounds lost to `D3` or absorption.
    pub loss: FreqEstimate,
}

/// Sample `n_rounds` photons with blocking drawn from the balanced-source
/// prior and tabulate raw and post-selected frequencies.
pub fn empirical_tables(
    sampler: &Sampler,
    n_rounds: u64,
    rng: &mut impl Rng,
) -> Result<EmpiricalTables> {
    if n_rounds < 1000 {
        return Err(Error::Usage(format!(
            "at least 1000 rounds are needed for stable tables, got {n_rounds}"
        )));
    }
    if sampler.p() >= 1.0 {
        return Err(Error::Usage(
            "empirical tables are degenerate at unit entry probability".into(),
        ));
    }
    let prior = sampler.blocking_prior();
    // counts[blocking][outcome]
    let mut counts = [[0u64; 4]; 2];
    for _ in 0..n_rounds {
        let blocking = rng.random::<f64>() < prior;
        let outcome = sampler.sample(blocking, rng);
        let idx = match outcome {
            RoundOutcome::D0 => 0,
            RoundOutcome::D1 => 1,
            RoundOutcome::D3 => 2,
            RoundOutcome::AbsorbedByBob => 3,
        };
        counts[blocking as usize][idx] += 1;
    }
    let col = |blocking: bool| -> OutcomeFreqs {
        let c = counts[blocking as usize];
        let n = c.iter().sum();
        OutcomeFreqs {
            d0: FreqEstimate::new(c[0], n),
            d1: FreqEstimate::new(c[1], n),
            d3: FreqEstimate::new(c[2], n),
            absorbed: FreqEstimate::new(c[3], n),
        }
    };
    let postselected_n = counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
    // Correct estimates: D1 under blocking, D0 under not blocking.
    let correct = counts[1][1] + counts[0][0];
    let lost = counts[0][2] + counts[0][3] + counts[1][2] + counts[1][3];
    Ok(EmpiricalTables {
        rounds: n_rounds,
        prior_blocking: prior,
        raw_blocking: col(true),
        raw_not_blocking: col(false),
        postselected: PostselectedFreqs {
            d0_blocking: FreqEstimate::new(counts[1][0], postselected_n),
            d1_blocking: FreqEstimate::new(counts[1][1], postselected_n),
            d0_not_blocking: FreqEstimate::new(counts[0][0], postselected_n),
            d1_not_blocking: FreqEstimate::new(counts[0][1], postselected_n),
        },
        correct: FreqEstimate::new(correct, postselected_n),
        loss: FreqEstimate::new(lost, n_rounds),
    })
}
