//! `cfsim` — command-line front end for the interferometer simulator.
//!
//! Every subcommand writes plain CSV or JSON so figures can be reproduced
//! with external plotting, and identical flags plus an identical seed
//! always produce byte-identical output files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use cfsim_core::histories::{check_consistency, family_y, history_probabilities};
use cfsim_core::montecarlo::{
    balanced_message, director_study, empirical_tables, transmit_message, Sampler, SeedSpec,
    DEFAULT_ATTEMPT_CAP,
};
use cfsim_core::optics::{Detector, MirrorId};
use cfsim_core::protocol::{
    build_circuit, postselected_summary, raw_probabilities, raw_probabilities_limit, sweep,
    sweep_csv, ProtocolParams,
};
use cfsim_core::weakmeas::{detect_peaks, simulate_dither, spectrum, BeamModel, DitherSpec};
use cfsim_core::Error as CoreError;

/// Default frequencies (Hz) of the three dithered mirrors.
const DITHER_FREQS: [(MirrorId, f64); 3] = [
    (MirrorId::MA, 30.0),
    (MirrorId::MB1, 40.0),
    (MirrorId::MB2, 50.0),
];

#[derive(Parser)]
#[command(
    name = "cfsim",
    version,
    about = "Single-photon simulator for a chained polarizing interferometer communication protocol",
    after_help = "Exit codes: 0 success, 2 configuration error, 3 runtime cap exceeded."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DetectorArg {
    D0,
    D1,
    D3,
}

impl From<DetectorArg> for Detector {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::D0 => Detector::D0,
            DetectorArg::D1 => Detector::D1,
            DetectorArg::D3 => Detector::D3,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Analytic (and optionally empirical) detection tables at one P.
    Tables {
        /// Probability of the photon entering the inner interferometer.
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Add empirical tables sampled with the given seed.
        #[arg(long)]
        empirical: bool,
        /// Rounds for the empirical tables.
        #[arg(long, default_value_t = 100_000)]
        rounds: u64,
        /// Inner cycle count for empirical sampling (omit for the
        /// infinite-cycle limit).
        #[arg(long)]
        m: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Closed-form sweep of success figures over a grid of P values.
    Sweep {
        /// Grid as start:stop:step, all inside [0, 1).
        #[arg(long, default_value = "0:0.95:0.05")]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Chain-ket weights and the consistency verdict of the path family.
    Histories {
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Inner cycle count; the path family requires 2.
        #[arg(long, default_value_t = 2)]
        m: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dithered-mirror run: centroid time series, spectra, peak verdicts.
    Weak {
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 2)]
        m: u32,
        /// Dither amplitude of Alice's mirror, mm.
        #[arg(long, default_value_t = 0.01)]
        amp_a: f64,
        /// Dither amplitude of Bob's first mirror, mm.
        #[arg(long, default_value_t = 0.01)]
        amp_b1: f64,
        /// Dither amplitude of Bob's second mirror, mm.
        #[arg(long, default_value_t = 0.01)]
        amp_b2: f64,
        /// Sample rate, Hz.
        #[arg(long, default_value_t = 1000.0)]
        rate: f64,
        /// Record length, s.
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        /// Beam diameter, mm.
        #[arg(long, default_value_t = 5.0)]
        beam: f64,
        /// Centroid noise RMS, mm.
        #[arg(long, default_value_t = 0.001)]
        noise_rms: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Detector whose spectrum is scanned for the probe peaks.
        #[arg(long, value_enum, default_value_t = DetectorArg::D0)]
        detector: DetectorArg,
        /// Peak-to-median power ratio that counts as present.
        #[arg(long, default_value_t = 10.0)]
        threshold: f64,
        /// Output directory for timeseries.csv, spectrum.csv, peaks.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Transmit a message with retry-until-postselection.
    Transmit {
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Inner cycle count for sampling (omit for the infinite-cycle
        /// limit).
        #[arg(long)]
        m: Option<u32>,
        /// Length of the balanced random message to generate.
        #[arg(long, default_value_t = 1000)]
        len: u32,
        /// Explicit message bits, e.g. 0110; overrides --len.
        #[arg(long)]
        message: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fire-on-failure scenario statistics.
    Director {
        #[arg(long, default_value_t = 2.0 / 3.0)]
        p: f64,
        /// Inner cycle count for sampling (omit for the infinite-cycle
        /// limit).
        #[arg(long)]
        m: Option<u32>,
        /// Bits each pair must deliver without losing a photon.
        #[arg(long, default_value_t = 10)]
        len: u32,
        /// Scenario repetitions.
        #[arg(long, default_value_t = 1000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("cfsim: {err}");
            match err {
                AppError::Core(CoreError::CapExceeded(_)) => ExitCode::from(3),
                AppError::Core(_) => ExitCode::from(2),
                AppError::Io(_) => ExitCode::from(1),
            }
        }
    }
}

#[derive(Debug)]
enum AppError {
    Core(CoreError),
    Io(std::io::Error),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Core(e) => write!(f, "{e}"),
            AppError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        AppError::Core(e)
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e)
    }
}

fn config_err(msg: impl Into<String>) -> AppError {
    AppError::Core(CoreError::Config(msg.into()))
}

fn write_output(out: Option<&Path>, content: &str) -> Result<(), AppError> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            fs::write(path, content)?;
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

fn run(command: Command) -> Result<(), AppError> {
    match command {
        Command::Tables {
            p,
            empirical,
            rounds,
            m,
            seed,
            out,
            format,
        } => cmd_tables(p, empirical, rounds, m, seed, out.as_deref(), format),
        Command::Sweep { grid, out, format } => cmd_sweep(&grid, out.as_deref(), format),
        Command::Histories { p, m, out } => cmd_histories(p, m, out.as_deref()),
        Command::Weak {
            p,
            m,
            amp_a,
            amp_b1,
            amp_b2,
            rate,
            duration,
            beam,
            noise_rms,
            seed,
            detector,
            threshold,
            out,
        } => cmd_weak(
            p,
            m,
            amp_a,
            amp_b1,
            amp_b2,
            rate,
            duration,
            beam,
            noise_rms,
            seed,
            detector.into(),
            threshold,
            &out,
        ),
        Command::Transmit {
            p,
            m,
            len,
            message,
            seed,
            out,
        } => cmd_transmit(p, m, len, message.as_deref(), seed, out.as_deref()),
        Command::Director {
            p,
            m,
            len,
            reps,
            seed,
            out,
        } => cmd_director(p, m, len, reps, seed, out.as_deref()),
    }
}

fn sampler_for(p: f64, m: Option<u32>) -> Result<Sampler, AppError> {
    Ok(match m {
        Some(m) => Sampler::finite(p, m)?,
        None => Sampler::infinite_limit(p)?,
    })
}

fn cmd_tables(
    p: f64,
    empirical: bool,
    rounds: u64,
    m: Option<u32>,
    seed: u64,
    out: Option<&Path>,
    format: Format,
) -> Result<(), AppError> {
    let summary = postselected_summary(p)?;
    let blocked = raw_probabilities_limit(p, true)?;
    let open = raw_probabilities_limit(p, false)?;

    let mut rows: Vec<(String, f64)> = vec![
        ("p".into(), p),
        ("raw_d0_blocking".into(), blocked.d0),
        ("raw_d1_blocking".into(), blocked.d1),
        ("raw_d3_blocking".into(), blocked.d3),
        ("raw_d0_not_blocking".into(), open.d0),
        ("raw_d1_not_blocking".into(), open.d1),
        ("raw_d3_not_blocking".into(), open.d3),
        ("postsel_d0_blocking".into(), summary.joint_d0_blocking),
        ("postsel_d1_blocking".into(), summary.joint_d1_blocking),
        (
            "postsel_d0_not_blocking".into(),
            summary.joint_d0_not_blocking,
        ),
        (
            "postsel_d1_not_blocking".into(),
            summary.joint_d1_not_blocking,
        ),
        ("raw_blocking_prior".into(), summary.raw_blocking_prior),
        ("normalization".into(), summary.normalization),
        ("loss_probability".into(), summary.loss_probability),
        (
            "postselect_probability".into(),
            summary.postselect_probability,
        ),
        ("correct_probability".into(), summary.correct_probability),
        ("d0_accuracy".into(), summary.d0_accuracy),
    ];
    if let Some(m) = m {
        let params = ProtocolParams::new(p, m, true)?;
        let sim_blocked = raw_probabilities(&params);
        let sim_open = raw_probabilities(&params.with_blocking(false));
        rows.push((format!("sim_m{m}_d0_blocking"), sim_blocked.d0));
        rows.push((format!("sim_m{m}_d1_blocking"), sim_blocked.d1));
        rows.push((format!("sim_m{m}_lost_blocking"), sim_blocked.lost_to_bob));
        rows.push((format!("sim_m{m}_d0_not_blocking"), sim_open.d0));
        rows.push((format!("sim_m{m}_d3_not_blocking"), sim_open.d3));
    }

    let empirical_tables_data = if empirical {
        let sampler = sampler_for(p, m)?;
        let mut rng = SeedSpec::new(seed, 0).rng();
        Some(empirical_tables(&sampler, rounds, &mut rng)?)
    } else {
        None
    };

    match format {
        Format::Csv => {
            let mut csv = String::from("quantity,value\n");
            for (name, value) in &rows {
                writeln!(csv, "{name},{value}").expect("writing to a String cannot fail");
            }
            if let Some(tables) = &empirical_tables_data {
                let mut emp: Vec<(String, f64)> = vec![
                    ("emp_rounds".into(), tables.rounds as f64),
                    ("emp_prior_blocking".into(), tables.prior_blocking),
                ];
                for (label, freqs) in [
                    ("blocking", &tables.raw_blocking),
                    ("not_blocking", &tables.raw_not_blocking),
                ] {
                    for (det, est) in [
                        ("d0", freqs.d0),
                        ("d1", freqs.d1),
                        ("d3", freqs.d3),
                        ("absorbed", freqs.absorbed),
                    ] {
                        emp.push((format!("emp_raw_{det}_{label}"), est.p_hat));
                        emp.push((format!("emp_raw_{det}_{label}_lo"), est.lower));
                        emp.push((format!("emp_raw_{det}_{label}_hi"), est.upper));
                    }
                }
                for (name, est) in [
                    ("emp_postsel_d0_blocking", tables.postselected.d0_blocking),
                    ("emp_postsel_d1_blocking", tables.postselected.d1_blocking),
                    (
                        "emp_postsel_d0_not_blocking",
                        tables.postselected.d0_not_blocking,
                    ),
                    (
                        "emp_postsel_d1_not_blocking",
                        tables.postselected.d1_not_blocking,
                    ),
                    ("emp_correct", tables.correct),
                    ("emp_loss", tables.loss),
                ] {
                    emp.push((name.into(), est.p_hat));
                    emp.push((format!("{name}_lo"), est.lower));
                    emp.push((format!("{name}_hi"), est.upper));
                }
                for (name, value) in emp {
                    writeln!(csv, "{name},{value}").expect("writing to a String cannot fail");
                }
            }
            write_output(out, &csv)?;
        }
        Format::Json => {
            let mut doc = json!({
                "analytic": rows
                    .iter()
                    .map(|(name, value)| (name.clone(), json!(value)))
                    .collect::<serde_json::Map<String, serde_json::Value>>()
            });
            if let Some(tables) = &empirical_tables_data {
                doc["empirical"] = serde_json::to_value(tables).expect("tables serialize");
            }
            let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
            text.push('\n');
            write_output(out, &text)?;
        }
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, AppError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(config_err(format!(
            "grid must be start:stop:step, got {spec}"
        )));
    }
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| config_err(format!("grid component {s} is not a number")))
    };
    let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    if !step.is_finite() || step <= 0.0 || !start.is_finite() || !stop.is_finite() {
        return Err(config_err("grid step must be positive and bounds finite"));
    }
    let mut grid = Vec::new();
    let mut i = 0u32;
    loop {
        let p = start + step * i as f64;
        if p > stop + 1e-12 {
            break;
        }
        grid.push(p);
        i += 1;
    }
    if grid.is_empty() {
        return Err(config_err("grid is empty"));
    }
    Ok(grid)
}

fn cmd_sweep(grid_spec: &str, out: Option<&Path>, format: Format) -> Result<(), AppError> {
    let grid = parse_grid(grid_spec)?;
    let rows = sweep(&grid)?;
    match format {
        Format::Csv => write_output(out, &sweep_csv(&rows))?,
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&rows).expect("sweep rows serialize");
            text.push('\n');
            write_output(out, &text)?;
        }
    }
    Ok(())
}

fn cmd_histories(p: f64, m: u32, out: Option<&Path>) -> Result<(), AppError> {
    if m != 2 {
        return Err(config_err(format!(
            "the path family requires --m 2, got {m}"
        )));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(config_err(format!(
            "histories need an entry probability in [0, 1), got {p}"
        )));
    }
    let params = ProtocolParams::new(p, m, false)?;
    let circuit = build_circuit(&params);
    let family = family_y(&circuit)?;
    let report = check_consistency(&family, &circuit)?;
    let probabilities = history_probabilities(&family, &circuit)?;
    let nonzero = report
        .weights
        .iter()
        .filter(|&&w| w > cfsim_core::tol::EXACT_ZERO_WEIGHT)
        .count();
    let histories: Vec<serde_json::Value> = family
        .histories()
        .iter()
        .zip(report.weights.iter().zip(&probabilities))
        .enumerate()
        .map(|(index, (hist, (&weight, &probability)))| {
            json!({
                "index": index,
                "projectors": hist.labels(),
                "weight": weight,
                "probability": probability,
            })
        })
        .collect();
    let gram: Vec<Vec<[f64; 2]>> = report
        .gram
        .iter()
        .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
        .collect();
    let doc = json!({
        "p": p,
        "m": m,
        "histories": histories,
        "consistent": report.consistent,
        "max_off_diagonal": report.max_off_diagonal,
        "nonzero_histories": nonzero,
        "a_path_weight": report.weights[0],
        "a_path_probability": probabilities[0],
        "gram": gram,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    write_output(out, &text)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_weak(
    p: f64,
    m: u32,
    amp_a: f64,
    amp_b1: f64,
    amp_b2: f64,
    rate: f64,
    duration: f64,
    beam_diameter: f64,
    noise_rms: f64,
    seed: u64,
    detector: Detector,
    threshold: f64,
    out: &Path,
) -> Result<(), AppError> {
    let params = ProtocolParams::new(p, m, false)?;
    let circuit = build_circuit(&params);
    let beam = BeamModel::new(beam_diameter)?;
    let amps = [amp_a, amp_b1, amp_b2];
    let mut dithers = Vec::new();
    for ((mirror, freq), amp) in DITHER_FREQS.into_iter().zip(amps) {
        if amp > 0.0 {
            dithers.push(DitherSpec::new(mirror, freq, amp)?);
        }
    }
    let series = simulate_dither(
        &circuit,
        &dithers,
        &beam,
        rate,
        duration,
        noise_rms,
        SeedSpec::new(seed, 0),
    )?;
    for warning in &series.warnings {
        eprintln!("cfsim: warning: {warning}");
    }
    let spec = spectrum(&series);
    let probes: Vec<f64> = DITHER_FREQS.iter().map(|&(_, f)| f).collect();
    let peaks = detect_peaks(&spec, detector, &probes, threshold)?;

    fs::create_dir_all(out)?;

    let mut ts_csv = String::from("t,centroid_D0,centroid_D1,centroid_D3\n");
    for i in 0..series.len() {
        writeln!(
            ts_csv,
            "{},{},{},{}",
            series.time_s[i], series.d0[i], series.d1[i], series.d3[i]
        )
        .expect("writing to a String cannot fail");
    }
    fs::write(out.join("timeseries.csv"), ts_csv)?;

    let mut sp_csv = String::from("freq_hz,power_D0,power_D1,power_D3\n");
    for i in 0..spec.freq_hz.len() {
        writeln!(
            sp_csv,
            "{},{},{},{}",
            spec.freq_hz[i], spec.d0[i], spec.d1[i], spec.d3[i]
        )
        .expect("writing to a String cannot fail");
    }
    fs::write(out.join("spectrum.csv"), sp_csv)?;

    let peak_map: serde_json::Map<String, serde_json::Value> = peaks
        .iter()
        .map(|r| {
            (
                format!("{}", r.frequency_hz),
                serde_json::Value::String(if r.present {
                    "present".into()
                } else {
                    "absent".into()
                }),
            )
        })
        .collect();
    let doc = json!({
        "detector": format!("{detector}"),
        "threshold_ratio": threshold,
        "peaks": peak_map,
        "readings": peaks,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    fs::write(out.join("peaks.json"), text)?;
    Ok(())
}

fn parse_message(message: &str) -> Result<Vec<u8>, AppError> {
    message
        .chars()
        .map(|c| match c {
            '0' => Ok(0u8),
            '1' => Ok(1u8),
            other => Err(config_err(format!(
                "message may contain only 0 and 1, got {other}"
            ))),
        })
        .collect()
}

fn cmd_transmit(
    p: f64,
    m: Option<u32>,
    len: u32,
    message: Option<&str>,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let sampler = sampler_for(p, m)?;
    let mut rng = SeedSpec::new(seed, 0).rng();
    let bits = match message {
        Some(text) => parse_message(text)?,
        None => balanced_message(len, &mut rng),
    };
    let stats = transmit_message(&sampler, &bits, &mut rng, DEFAULT_ATTEMPT_CAP)?;
    let doc = json!({
        "p": p,
        "m": m,
        "seed": seed,
        "stats": stats,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    write_output(out, &text)?;
    Ok(())
}

fn cmd_director(
    p: f64,
    m: Option<u32>,
    len: u32,
    reps: u64,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let sampler = sampler_for(p, m)?;
    let mut rng = SeedSpec::new(seed, 0).rng();
    let stats = director_study(&sampler, len, reps, &mut rng, 100_000_000)?;
    let doc = json!({
        "p": p,
        "message_len": len,
        "seed": seed,
        "stats": stats,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    write_output(out, &text)?;
    Ok(())
}
