// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use privcause::data::{load_pairs_file, normalize, synth_anm, write_pairs_file, Shape};
use privcause::report::{format_float, parse_json_report, HEADER};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privcause"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn infer_non_private_synthetic() {
    let o = run(&[
        "infer",
        "--synthetic",
        "cubic",
        "--score",
        "hsic",
        "--lambda",
        "0.001",
        "--seed",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("decision: X->Y"), "{text}");
    assert!(text.contains("margin:"));
}

#[test]
fn infer_private_kendall_reports_utility() {
    let o = run(&[
        "infer",
        "--epsilon",
        "1",
        "--target",
        "test",
        "--score",
        "kendall",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("predicted utility:"), "{text}");
    assert!(text.contains("noise scale: 0.016000"), "{text}");
    assert!(!text.contains("s_xy"));
}

#[test]
fn infer_abstain_exit_code() {
    // tiny ε makes the stability test fail almost surely
    let o = run(&[
        "infer",
        "--epsilon",
        "0.001",
        "--target",
        "train",
        "--score",
        "spearman",
        "--lambda",
        "0.01",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("decision: abstain"));
}

#[test]
fn missing_file_is_an_error() {
    let o = run(&["infer", "--pairs-file", "/no/such/pairs.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/pairs.txt"));
}

#[test]
fn sweep_json_parses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rows.json");
    let o = run(&[
        "sweep",
        "--score",
        "kendall,hsic",
        "--epsilon",
        "0.5,2",
        "--lambda",
        "0.1",
        "--trials",
        "2",
        "--samples",
        "60",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rows = parse_json_report(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 3);
    for row in &rows {
        assert_eq!(row.len(), HEADER.len());
    }
}

#[test]
fn sweep_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let outputs: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .map(|threads| {
            let path = dir.path().join(format!("sweep-{threads}.csv"));
            let o = run(&[
                "sweep",
                "--score",
                "spearman,hsic",
                "--epsilon",
                "1",
                "--lambda",
                "0.01,0.1",
                "--trials",
                "3",
                "--samples",
                "80",
                "--seed",
                "42",
                "--threads",
                threads,
                "--out",
                path.to_str().unwrap(),
            ]);
            assert_eq!(o.status.code(), Some(0));
            fs::read(&path).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert!(String::from_utf8_lossy(&outputs[0]).starts_with(&HEADER.join(",")));
}

/// Decimal spellings a report could use for a sample value.
fn spellings(v: f64) -> Vec<String> {
    vec![format_float(v), format!("{v}"), format!("{v:.6}")]
}

fn scan_for_values(report: &str, values: &[f64]) -> Vec<String> {
    values
        .iter()
        .filter(|v| v.abs() != 1.0 && **v != 0.0)
        .flat_map(|&v| spellings(v))
        .filter(|s| s.len() > 4 && report.contains(s.as_str()))
        .collect()
}

fn write_fixture(dir: &Path) -> std::path::PathBuf {
    let data = synth_anm(Shape::Cubic, 120, 0.3, 5).unwrap();
    // move away from [-1, 1] so raw and normalized spellings differ
    let mut raw = data.clone();
    raw.x.iter_mut().for_each(|v| *v = *v * 3.7 + 11.0);
    raw.y.iter_mut().for_each(|v| *v = *v * 0.9 - 4.0);
    let path = dir.join("fixture.txt");
    write_pairs_file(&raw, &path).unwrap();
    path
}

#[test]
fn private_reports_contain_no_sample_values() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = write_fixture(dir.path());
    let raw = load_pairs_file(&pairs).unwrap();
    let norm = normalize(&raw).unwrap();
    let mut values: Vec<f64> = raw.x.iter().chain(&raw.y).copied().collect();
    values.extend(norm.x.iter().chain(&norm.y));

    for (target, score, format) in [
        ("test", "kendall,hsic", "csv"),
        ("train", "spearman,hsic,iqr", "json"),
        ("both", "kendall,hsic", "csv"),
        ("test", "iqr", "json"),
    ] {
        let out = dir.path().join(format!("private-{target}.{format}"));
        let o = run(&[
            "sweep",
            "--pairs-file",
            pairs.to_str().unwrap(),
            "--epsilon",
            "0.5,1",
            "--lambda",
            "0.1",
            "--trials",
            "3",
            "--target",
            target,
            "--score",
            score,
            "--format",
            format,
            "--out",
            out.to_str().unwrap(),
        ]);
        // 2 = every trial abstained, still a valid report
        assert!(
            matches!(o.status.code(), Some(0 | 2)),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        let report = fs::read_to_string(&out).unwrap();
        let leaks = scan_for_values(&report, &values);
        assert!(leaks.is_empty(), "{target}/{score}: {leaks:?}");

        let o = run(&[
            "infer",
            "--pairs-file",
            pairs.to_str().unwrap(),
            "--epsilon",
            "1",
            "--target",
            target,
            "--score",
            score.split(',').next().unwrap(),
        ]);
        assert!(scan_for_values(&stdout(&o), &values).is_empty());
    }

    // the scanner does catch a leak
    let leaky = format!("x,{}\n", format_float(raw.x[3]));
    assert!(!scan_for_values(&leaky, &values).is_empty());
}

#[test]
fn verify_commands() {
    let o = run(&["verify-utility", "--gamma", "0,1", "--sigma", "1", "--draws", "200000"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("formula,gamma,sigma,closed_form,monte_carlo,gap,std_error,pass"));
    assert!(text.contains("0.7240904"));

    let o = run(&[
        "verify-sensitivity",
        "--m",
        "10",
        "--instances",
        "5",
        "--grid-points",
        "10",
        "--n",
        "30",
        "--lambda",
        "0.5",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 4);
}

#[test]
fn pairs_dir_sweep() {
    let dir = tempfile::tempdir().unwrap();
    for (i, truth) in ["->", "<-"].iter().enumerate() {
        let data = synth_anm(Shape::Sigmoid, 60, 0.2, i as u64).unwrap();
        let data = if *truth == "<-" { data.swapped() } else { data };
        write_pairs_file(&data, &dir.path().join(format!("pair{i:04}.txt"))).unwrap();
        fs::write(dir.path().join(format!("pair{i:04}.truth")), truth).unwrap();
    }
    let o = run(&["sweep", "--pairs-dir", dir.path().to_str().unwrap(), "--trials", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("pair0000") && text.contains("pair0001"));
    assert!(!text.contains("error"));
}
