use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use pnl_cli::commands::{
    EVAL_JSON, GROUND_TRUTH_JSON, OBSERVATIONS_CSV, OUTPUTS_CSV, REPORT_JSON, SEPARATOR_JSON,
    SOURCES_CSV, TRACE_CSV,
};
use pnl_cli::csvio::{read_block, write_block};
use pnl_cli::report::read_json;
use pnl_cli::{Evaluation, RunReport, EXIT_BAD_INPUT, EXIT_IO};
use pnl_core::{Role, SignalBlock};
use serde_json::Value;
use tempfile::TempDir;

const LINEAR_CONFIG: &str = r#"{
  "scenario": {
    "seed": 3, "n": 2, "t": 2000,
    "sources": [{"kind": "uniform"}, {"kind": "uniform"}],
    "distortions": [{"family": "identity"}, {"family": "identity"}]
  },
  "train": {"freeze_compensators": true, "restarts": 1}
}"#;

const PNL_CONFIG: &str = r#"{
  "scenario": {
    "seed": 5, "n": 2, "t": 800,
    "sources": [{"kind": "uniform"}, {"kind": "laplace"}],
    "distortions": [{"family": "cubic", "c": 0.3}, {"family": "scaled_tanh", "a": 0.5}]
  },
  "train": {"max_outer_iters": 15, "restarts": 2}
}"#;

fn pnl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnl"))
        .args(args)
        .env("PNL_LOG", "quiet")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn generate(dir: &Path, config: &Path, out: &str, seed: &str) -> PathBuf {
    let out_dir = dir.join(out);
    let o = pnl(&[
        "generate",
        "--config",
        s(config),
        "--seed",
        seed,
        "--out-dir",
        s(&out_dir),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out_dir
}

fn schema_check(schema: &str, doc: &Path) {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../schemas")
        .join(schema);
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let value: Value = serde_json::from_str(&std::fs::read_to_string(doc).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(&value)
        .map(|e| e.to_string())
        .collect();
    assert!(
        errors.is_empty(),
        "{} violates {schema:?}: {errors:?}",
        doc.display()
    );
}

#[test]
fn generate_is_byte_identical_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), PNL_CONFIG);
    let a = generate(dir.path(), &config, "a", "11");
    let b = generate(dir.path(), &config, "b", "11");
    let c = generate(dir.path(), &config, "c", "12");
    for f in [SOURCES_CSV, OBSERVATIONS_CSV, GROUND_TRUTH_JSON] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        std::fs::read(a.join(OBSERVATIONS_CSV)).unwrap(),
        std::fs::read(c.join(OBSERVATIONS_CSV)).unwrap()
    );
    schema_check("ground_truth.schema.json", &a.join(GROUND_TRUTH_JSON));
    schema_check("config.schema.json", &config);
}

#[test]
fn generated_csv_reads_back_exactly() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), PNL_CONFIG);
    let out = generate(dir.path(), &config, "data", "5");
    let sc: pnl_core::datagen::Scenario = serde_json::from_value(
        serde_json::from_str::<Value>(PNL_CONFIG).unwrap()["scenario"].clone(),
    )
    .unwrap();
    let (_, sources, observations) = pnl_core::datagen::build(&sc).unwrap();
    assert_eq!(
        read_block(&out.join(SOURCES_CSV), Role::Source).unwrap(),
        sources
    );
    assert_eq!(
        read_block(&out.join(OBSERVATIONS_CSV), Role::Observation).unwrap(),
        observations
    );
}

#[test]
fn separate_recovers_a_linear_mixture() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), LINEAR_CONFIG);
    let data = generate(dir.path(), &config, "data", "3");
    let out = dir.path().join("run");
    let o = pnl(&[
        "separate",
        s(&data.join(OBSERVATIONS_CSV)),
        "--config",
        s(&config),
        "--truth",
        s(&data.join(SOURCES_CSV)),
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("amari="), "{stdout}");

    let report: RunReport = read_json(&out.join(REPORT_JSON)).unwrap();
    let eval = report.evaluation.unwrap();
    assert!(eval.amari < 0.05, "amari {}", eval.amari);
    assert_eq!(report.trace.len(), report.iterations + 1);
    assert!(report.trace.windows(2).all(|w| w[1].total <= w[0].total));
    assert!(out.join(TRACE_CSV).exists());

    schema_check("run_report.schema.json", &out.join(REPORT_JSON));
    schema_check("separator.schema.json", &out.join(SEPARATOR_JSON));

    let eval_dir = dir.path().join("eval");
    let o = pnl(&[
        "evaluate",
        s(&out.join(OUTPUTS_CSV)),
        s(&data.join(SOURCES_CSV)),
        "--out-dir",
        s(&eval_dir),
    ]);
    assert!(o.status.success());
    let standalone: Evaluation = read_json(&eval_dir.join(EVAL_JSON)).unwrap();
    assert_eq!(standalone, eval);
    schema_check("eval.schema.json", &eval_dir.join(EVAL_JSON));
}

#[test]
fn separate_twice_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), PNL_CONFIG);
    let data = generate(dir.path(), &config, "data", "5");
    let runs: Vec<PathBuf> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = pnl(&[
                "separate",
                s(&data.join(OBSERVATIONS_CSV)),
                "--config",
                s(&config),
                "--out-dir",
                s(&out),
            ]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            out
        })
        .collect();
    for f in [OUTPUTS_CSV, SEPARATOR_JSON, TRACE_CSV] {
        assert_eq!(
            std::fs::read(runs[0].join(f)).unwrap(),
            std::fs::read(runs[1].join(f)).unwrap(),
            "{f}"
        );
    }
    let report: RunReport = read_json(&runs[0].join(REPORT_JSON)).unwrap();
    assert!(report.evaluation.is_none());
}

#[test]
fn missing_input_exits_with_io_code_and_names_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.csv");
    let o = pnl(&["separate", s(&missing), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(EXIT_IO));
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert!(stderr.contains("nope.csv"), "{stderr}");
}

#[test]
fn bad_config_exits_with_input_code_and_line() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "{\n  \"train\": {\n    \"w_step\": \"fast\"\n  }\n}\n",
    );
    let o = pnl(&[
        "generate",
        "--config",
        s(&config),
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_BAD_INPUT));
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert!(stderr.contains("config.json:3"), "{stderr}");

    let config = write_config(dir.path(), r#"{"train": {"restarts": 0}}"#);
    let o = pnl(&[
        "generate",
        "--config",
        s(&config),
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_BAD_INPUT));
}

#[test]
fn malformed_csv_reports_its_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("obs.csv");
    std::fs::write(&path, "ch1,ch2\n1.0,2.0\n3.0,abc\n").unwrap();
    let o = pnl(&["separate", s(&path), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(EXIT_BAD_INPUT));
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert!(stderr.contains("obs.csv:3"), "{stderr}");
}

fn signals() -> SignalBlock {
    let t = 600;
    let data = Array2::from_shape_fn((2, t), |(c, i)| {
        let u = i as f64 / t as f64;
        if c == 0 {
            (2.0 * std::f64::consts::PI * 7.0 * u).sin()
        } else {
            2.0 * ((13.0 * u) % 1.0) - 1.0
        }
    });
    SignalBlock::new(data, Role::Source).unwrap()
}

fn evaluate(dir: &Path, outputs: &SignalBlock) -> (Evaluation, PathBuf) {
    let (y, src) = (dir.join("outputs.csv"), dir.join("sources.csv"));
    write_block(&y, outputs).unwrap();
    write_block(&src, &signals()).unwrap();
    let o = pnl(&["evaluate", s(&y), s(&src), "--out-dir", s(dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (
        read_json(&dir.join(EVAL_JSON)).unwrap(),
        dir.join(EVAL_JSON),
    )
}

#[test]
fn evaluate_perfect_and_ambiguous_outputs() {
    let dir = TempDir::new().unwrap();
    let (same, _) = evaluate(dir.path(), &signals());
    assert_eq!(same.amari, 0.0);
    assert!(same.sir_db.iter().all(|&v| v == 150.0), "{:?}", same.sir_db);

    let src = signals();
    let swapped = Array2::from_shape_fn((2, src.samples()), |(c, t)| -3.0 * src.data()[[1 - c, t]]);
    let (eval, _) = evaluate(
        dir.path(),
        &SignalBlock::new(swapped, Role::Output).unwrap(),
    );
    assert!(eval.amari < 1e-12, "{}", eval.amari);
    assert_eq!(eval.permutation, vec![1, 0]);
    assert!(eval.sir_db.iter().all(|&v| v > 140.0));
}

#[test]
fn evaluate_matches_golden_report() {
    let dir = TempDir::new().unwrap();
    let src = signals();
    let mixed = Array2::from_shape_fn((2, src.samples()), |(c, t)| {
        let (a, b) = (src.data()[[0, t]], src.data()[[1, t]]);
        if c == 0 {
            0.2 * a - 1.5 * b
        } else {
            2.0 * a + 0.1 * b
        }
    });
    let (_, path) = evaluate(dir.path(), &SignalBlock::new(mixed, Role::Output).unwrap());
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/eval.json");
    let golden: Value =
        serde_json::from_str(&std::fs::read_to_string(golden_path).unwrap()).unwrap();
    let actual: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_close(&actual, &golden, "$");
}

fn assert_close(a: &Value, b: &Value, at: &str) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{at}: {x} vs {y}");
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{at}");
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                assert_close(u, v, &format!("{at}[{i}]"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(
                x.keys().collect::<Vec<_>>(),
                y.keys().collect::<Vec<_>>(),
                "{at}"
            );
            for (k, u) in x {
                assert_close(u, &y[k], &format!("{at}.{k}"));
            }
        }
        _ => assert_eq!(a, b, "{at}"),
    }
}
