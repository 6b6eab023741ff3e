//! End-to-end checks of the `cfsim` binary: output content, byte-level
//! reproducibility, and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cfsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 output")
}

fn json_stdout(out: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout_str(out)).expect("json output")
}

fn json_file(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).expect("file exists")).expect("json file")
}

#[test]
fn tables_reports_the_postselected_joint_at_two_thirds() {
    let out = cfsim(&["tables", "--p", "0.6667", "--format", "json"]);
    assert!(out.status.success());
    let doc = json_stdout(&out);
    let joint = doc["analytic"]["postsel_d0_blocking"].as_f64().unwrap();
    assert!((joint - (1.0 - 0.6667) / 2.0).abs() < 1e-9);
    let acc = doc["analytic"]["d0_accuracy"].as_f64().unwrap();
    assert!((acc - 1.0 / (2.0 - 0.6667)).abs() < 1e-9);
}

#[test]
fn tables_at_zero_entry_probability_is_degenerate() {
    let out = cfsim(&["tables", "--p", "0", "--format", "json"]);
    assert!(out.status.success());
    let doc = json_stdout(&out);
    assert_eq!(doc["analytic"]["raw_d0_blocking"].as_f64().unwrap(), 1.0);
    assert_eq!(
        doc["analytic"]["raw_d0_not_blocking"].as_f64().unwrap(),
        1.0
    );
}

#[test]
fn empirical_tables_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = cfsim(&[
            "tables",
            "--p",
            "0.5",
            "--empirical",
            "--rounds",
            "100000",
            "--seed",
            "7",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let bytes_a = fs::read(&a).unwrap();
    let bytes_b = fs::read(&b).unwrap();
    assert!(!bytes_a.is_empty());
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn sweep_default_grid_has_twenty_closed_form_rows() {
    let out = cfsim(&["sweep"]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("P,Pc,accD0,postselect_prob"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 20);
    for row in &rows {
        let (p, pc, acc, post) = (row[0], row[1], row[2], row[3]);
        assert!((pc - (1.0 + p) / 2.0).abs() < 1e-12);
        assert!((acc - 1.0 / (2.0 - p)).abs() < 1e-12);
        assert!((post - 2.0 * (1.0 - p) / (2.0 - p)).abs() < 1e-12);
    }
    let half = &rows[10];
    assert_eq!(half[0], 0.5);
    assert!((half[1] - 0.75).abs() < 1e-12);
    assert!((half[3] - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn sweep_rejects_malformed_grids() {
    assert_eq!(cfsim(&["sweep", "--grid", "oops"]).status.code(), Some(2));
    assert_eq!(
        cfsim(&["sweep", "--grid", "0:1:0.1"]).status.code(),
        Some(2)
    );
}

#[test]
fn histories_verdict_is_consistent_with_one_surviving_path() {
    let out = cfsim(&["histories"]);
    assert!(out.status.success());
    let doc = json_stdout(&out);
    assert_eq!(doc["consistent"], serde_json::json!(true));
    assert_eq!(doc["nonzero_histories"].as_u64(), Some(1));
    assert_eq!(doc["histories"].as_array().unwrap().len(), 18);

    let out = cfsim(&["histories", "--p", "0.6667"]);
    let doc = json_stdout(&out);
    let weight = doc["a_path_weight"].as_f64().unwrap();
    assert!((weight - (1.0 - 0.6667)).abs() < 1e-9);

    let out = cfsim(&["histories", "--p", "0.9"]);
    let doc = json_stdout(&out);
    assert!((doc["a_path_probability"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn histories_requires_the_two_cycle_circuit() {
    assert_eq!(cfsim(&["histories", "--m", "3"]).status.code(), Some(2));
}

#[test]
fn weak_defaults_show_only_the_alice_peak_at_d0() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("weak");
    let out = cfsim(&["weak", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());

    let peaks = json_file(&out_dir.join("peaks.json"));
    assert_eq!(peaks["peaks"]["30"], serde_json::json!("present"));
    assert_eq!(peaks["peaks"]["40"], serde_json::json!("absent"));
    assert_eq!(peaks["peaks"]["50"], serde_json::json!("absent"));

    let ts = fs::read_to_string(out_dir.join("timeseries.csv")).unwrap();
    let mut lines = ts.lines();
    assert_eq!(lines.next(), Some("t,centroid_D0,centroid_D1,centroid_D3"));
    assert_eq!(lines.count(), 2000);

    let spec = fs::read_to_string(out_dir.join("spectrum.csv")).unwrap();
    assert!(spec.starts_with("freq_hz,power_D0,power_D1,power_D3"));
}

#[test]
fn weak_without_the_alice_dither_shows_no_d0_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("weak");
    let out = cfsim(&["weak", "--amp-a", "0", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let peaks = json_file(&out_dir.join("peaks.json"));
    assert_eq!(peaks["peaks"]["30"], serde_json::json!("absent"));
    assert_eq!(peaks["peaks"]["40"], serde_json::json!("absent"));
    assert_eq!(peaks["peaks"]["50"], serde_json::json!("absent"));
}

#[test]
fn weak_at_the_loss_detector_shows_both_channel_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("weak");
    let out = cfsim(&[
        "weak",
        "--detector",
        "d3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let peaks = json_file(&out_dir.join("peaks.json"));
    assert_eq!(peaks["peaks"]["40"], serde_json::json!("present"));
    assert_eq!(peaks["peaks"]["50"], serde_json::json!("present"));
}

#[test]
fn weak_rejects_aliasing_rates() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("weak");
    let out = cfsim(&[
        "weak",
        "--rate",
        "80",
        "--duration",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn transmit_reaches_the_postselected_accuracy() {
    let out = cfsim(&["transmit", "--p", "0.6667", "--len", "10000", "--seed", "2"]);
    assert!(out.status.success());
    let doc = json_stdout(&out);
    let accuracy = doc["stats"]["accuracy"].as_f64().unwrap();
    let expected = (1.0 + 0.6667) / 2.0;
    assert!((accuracy - expected).abs() < 0.012, "accuracy {accuracy}");
}

#[test]
fn transmit_at_zero_entry_probability_carries_no_information() {
    let out = cfsim(&["transmit", "--p", "0", "--len", "10000", "--seed", "3"]);
    assert!(out.status.success());
    let doc = json_stdout(&out);
    // A balanced message decodes at exactly one half: blocked bits are
    // always misread and open bits always read correctly.
    assert_eq!(doc["stats"]["accuracy"].as_f64().unwrap(), 0.5);
}

#[test]
fn transmit_validates_messages() {
    assert_eq!(
        cfsim(&["transmit", "--message", "0121"]).status.code(),
        Some(2)
    );
}

#[test]
fn director_consumes_about_a_thousand_pairs() {
    let out = cfsim(&[
        "director", "--p", "0.6667", "--len", "10", "--reps", "1000", "--seed", "1",
    ]);
    assert!(out.status.success());
    let doc = json_stdout(&out);
    let mean_pairs = doc["stats"]["mean_pairs"].as_f64().unwrap();
    assert!(
        (922.0..=1126.0).contains(&mean_pairs),
        "mean pairs {mean_pairs}"
    );
    assert!(doc["stats"]["mean_winning_accuracy"].as_f64().unwrap() > 0.80);
}

#[test]
fn invalid_probabilities_exit_with_the_config_code() {
    assert_eq!(cfsim(&["tables", "--p", "1.5"]).status.code(), Some(2));
    assert_eq!(cfsim(&["histories", "--p", "1"]).status.code(), Some(2));
}

#[test]
fn exhausted_retry_caps_exit_with_the_runtime_code() {
    let out = cfsim(&["transmit", "--p", "1", "--message", "1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn subcommand_outputs_are_deterministic_across_runs() {
    for args in [
        vec!["sweep"],
        vec!["histories", "--p", "0.25"],
        vec!["transmit", "--p", "0.5", "--len", "200", "--seed", "11"],
        vec![
            "director", "--p", "0.5", "--len", "4", "--reps", "50", "--seed", "5",
        ],
    ] {
        let first = cfsim(&args);
        let second = cfsim(&args);
        assert!(first.status.success());
        assert_eq!(first.stdout, second.stdout, "args {args:?}");
    }
}

#[test]
fn weak_output_files_are_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    for out_dir in [&first, &second] {
        let out = cfsim(&["weak", "--seed", "9", "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success());
    }
    for name in ["timeseries.csv", "spectrum.csv", "peaks.json"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn tables_csv_parses_back_with_probabilities_in_range() {
    let out = cfsim(&[
        "tables",
        "--p",
        "0.5",
        "--empirical",
        "--rounds",
        "20000",
        "--seed",
        "4",
    ]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("quantity,value"));
    for line in lines {
        let (name, value) = line.split_once(',').expect("two fields");
        let value: f64 = value.parse().expect("numeric value");
        if name != "emp_rounds" {
            assert!((0.0..=1.0).contains(&value), "{name} = {value}");
        }
    }
}
