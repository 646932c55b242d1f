use std::path::Path;
use std::process::{Command, Output};

use ndna_core::fixtures::{synth_trajectory, SynthKind, SynthParams};
use ndna_core::format::{read_trajectory, write_trajectory};
use ndna_core::report::to_json;
use ndna_core::score::{assemble_profile, ScoreConfig, WeightScheme};
use serde_json::Value;

fn ndna(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ndna")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn synthesized_line_analyzes_to_flat_profile() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("l.ndna");
    let args = [
        "synth", "line", "--layers", "16", "--step", "0.25", "--dim", "8", "--seed", "7", "--out",
    ];
    let synth = ndna(&[&args[..], &[path(&file)]].concat());
    assert!(synth.status.success());

    let out = ndna(&["analyze", path(&file)]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["path_length"], 3.75);
    assert!(report["kappa"].as_array().unwrap().iter().all(|k| k == 0.0));
}

#[test]
fn analyze_matches_library_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("toy.ndna");
    assert!(
        ndna(&["synth", "toy", "--seed", "3", "--layers", "6", "--out", path(&file)])
            .status
            .success()
    );
    let (traj, grads) = read_trajectory(&file).unwrap();

    let cfg = ScoreConfig {
        weights: WeightScheme::Ramp,
        ..ScoreConfig::default()
    };
    let expected = to_json(&assemble_profile(&traj, grads.as_ref(), &cfg).unwrap()).unwrap();
    let out = ndna(&["analyze", path(&file), "--weights", "ramp"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), expected + "\n");

    let sink = dir.path().join("report.json");
    assert!(
        ndna(&["analyze", path(&file), "--weights", "ramp", "--out", path(&sink)])
            .status
            .success()
    );
    let written = std::fs::read_to_string(&sink).unwrap();
    assert_eq!(
        written,
        to_json(&assemble_profile(&traj, grads.as_ref(), &cfg).unwrap()).unwrap()
    );
}

#[test]
fn merging_a_file_with_itself_is_fused() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a.ndna");
    let t = synth_trajectory(SynthKind::Helix, &SynthParams::default(), 1).unwrap();
    write_trajectory(&t, None, &file).unwrap();

    let report = json(&ndna(&["merge", path(&file), path(&file), "--alpha", "0.3"]));
    assert_eq!(report["dominance"], "fused");
    assert_eq!(report["delta_l_a"], 0.0);
    assert_eq!(report["delta_l_b"], 0.0);
    assert!(report["delta_kappa"].as_array().unwrap().iter().all(|k| k == 0.0));
}

#[test]
fn missing_file_exits_two_without_data() {
    let out = ndna(&["analyze", "definitely-missing.ndna"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(ndna(&[]).status.code(), Some(1));
    assert_eq!(
        ndna(&["analyze", "x.ndna", "--plot", "--format", "csv"]).status.code(),
        Some(1)
    );
    assert_eq!(ndna(&["topology", "x.ndna", "--max-dim", "2"]).status.code(), Some(1));
    assert_eq!(
        ndna(&["compare", "a", "b", "--probs-a", "p.json"]).status.code(),
        Some(1)
    );
}

#[test]
fn unknown_synth_kind_is_a_precondition_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ndna(&["synth", "spiral", "--out", path(&dir.path().join("s.ndna"))]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn csv_and_plot_outputs_are_tabular() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.ndna");
    assert!(ndna(&["synth", "circle", "--out", path(&file)]).status.success());

    for extra in [&["--format", "csv"][..], &["--plot"][..]] {
        let out = ndna(&[&["analyze", path(&file)][..], extra].concat());
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        let widths: Vec<usize> = text.lines().map(|l| l.split(',').count()).collect();
        assert!(widths.len() > 2 && widths.iter().all(|&w| w == widths[0]), "{text}");
    }

    let collapse = ndna(&["collapse", path(&file), "--format", "csv"]);
    let text = String::from_utf8(collapse.stdout).unwrap();
    assert!(text.starts_with("key,value\n"));
    assert!(text.lines().any(|l| l == "verdict,healthy"), "{text}");
}

#[test]
fn topology_gate_against_itself_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("h.ndna");
    assert!(ndna(&["synth", "helix", "--dim", "3", "--out", path(&file)])
        .status
        .success());
    let report = json(&ndna(&["topology", path(&file), "--against", path(&file)]));
    assert_eq!(report["bottleneck"][0]["distance"], 0.0);
    assert_eq!(report["bottleneck"][1]["distance"], 0.0);
    assert_eq!(report["stability"]["verdict"], "stable");
    assert!(report.get("sheaf").is_none());

    let no_tokens = ndna(&["topology", path(&file), "--patches", "2"]);
    assert_eq!(no_tokens.status.code(), Some(4));
}

#[test]
fn output_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("n.ndna");
    assert!(ndna(&["synth", "noisy_line", "--seed", "9", "--out", path(&file)])
        .status
        .success());
    let a = ndna(&["topology", path(&file)]).stdout;
    let b = ndna(&["topology", path(&file)]).stdout;
    assert_eq!(a, b);
}
