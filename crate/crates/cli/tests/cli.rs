use std::path::PathBuf;
use std::process::{Command, Output};

use cardtune::registry::save_registry;
use cardtune_testkit::fixtures::{fixtures, two_neighbor_registry};
use serde_json::Value;

fn cardtune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cardtune"))
        .args(args)
        .env_remove(cardtune::oracle::API_URL_ENV)
        .env_remove(cardtune::encoder::EMBED_URL_ENV)
        .output()
        .unwrap()
}

fn card(name: &str) -> String {
    fixtures()
        .join("cards")
        .join(format!("{name}.json"))
        .display()
        .to_string()
}

fn registry_dir() -> PathBuf {
    fixtures().join("registry")
}

#[test]
fn validate_reports_ok_on_stderr() {
    let out = cardtune(&["validate", &card("coco")]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).lines().any(|l| l == "ok"));
}

#[test]
fn validate_flags_a_bad_card() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"name": "x", "input_type": "audio", "label_space": ["a"], "task_description": "", "eval_metrics": ["acc"]}"#).unwrap();
    let out = cardtune(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("input_type"));
}

#[test]
fn compose_matches_golden_bytes() {
    for (data, model, file) in cardtune_testkit::fixtures::SCENARIOS {
        let out = cardtune(&["compose", "--data", &card(data), "--model", &card(model)]);
        assert_eq!(out.status.code(), Some(0));
        let golden = std::fs::read(fixtures().join("prompts").join(file)).unwrap();
        assert_eq!(out.stdout, golden, "{file}");
    }
}

#[test]
fn recommend_blends_the_two_neighbor_registry() {
    let reg = registry_dir();
    let args = [
        "recommend",
        "--data",
        &card("new"),
        "--model",
        &card("vit"),
        "--registry",
        reg.to_str().unwrap(),
        "--backend",
        "mock",
    ];
    let out = cardtune(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let lr = doc["config"]["learning_rate"].as_f64().unwrap();
    assert!((lr - 3.981e-5).abs() < 5e-9, "{lr}");
    assert_eq!(doc["config"]["epochs"], 70);
    assert_eq!(doc["source"], "transfer");
    // stdout is a deterministic function of the inputs
    assert_eq!(cardtune(&args).stdout, out.stdout);
}

#[test]
fn recommend_without_neighbors_asks_the_backend() {
    let out = cardtune(&["recommend", "--data", &card("coco"), "--model", &card("detector")]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["source"], "backend");
}

#[test]
fn tune_applies_requests_and_reports_unsatisfiable_ones() {
    let ok = cardtune(&[
        "tune",
        "--data",
        &card("nq"),
        "--model",
        &card("dpr"),
        "--request",
        "fps >= 10",
    ]);
    assert_eq!(ok.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(doc["rounds"].as_array().unwrap().len(), 2);
    assert_eq!(doc["predicted_log"]["entries"].as_array().unwrap().len(), 12);
    assert_eq!(doc["rounds"][1]["constraints"][0]["metric"], "fps");

    let bad = cardtune(&[
        "tune",
        "--data",
        &card("nq"),
        "--model",
        &card("dpr"),
        "--request",
        "val_metric >= 0.99",
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(bad.stdout.is_empty());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("all_candidates_filtered"));
}

#[test]
fn io_and_backend_failures_exit_3() {
    let missing = cardtune(&["compose", "--data", "/nonexistent.json", "--model", &card("vit")]);
    assert_eq!(missing.status.code(), Some(3));
    let http = cardtune(&[
        "recommend",
        "--data",
        &card("coco"),
        "--model",
        &card("detector"),
        "--backend",
        "http",
    ]);
    assert_eq!(http.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    save_registry(&two_neighbor_registry(), dir.path()).unwrap();
    std::fs::write(dir.path().join("registry.sha256"), "0000\n").unwrap();
    let corrupt = cardtune(&[
        "recommend",
        "--data",
        &card("new"),
        "--model",
        &card("vit"),
        "--registry",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(corrupt.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(cardtune(&["recommend", "--data", &card("new")]).status.code(), Some(2));
    assert_eq!(
        cardtune(&[
            "tune",
            "--data",
            &card("nq"),
            "--model",
            &card("dpr"),
            "--backend",
            "gpt"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn bench_writes_table_and_results() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("bench.json");
    let out = cardtune(&[
        "bench",
        "--seeds",
        "2",
        "--n-known",
        "2",
        "--results",
        results.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("recommended"));
    let report: Value = serde_json::from_slice(&std::fs::read(&results).unwrap()).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 2);
    assert_eq!(report["n_known"], 2);
}

#[test]
fn serve_answers_health_checks() {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::process::Stdio;

    let mut child = Command::new(env!("CARGO_BIN_EXE_cardtune"))
        .args(["serve", "--port", "0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap().to_string();

    let mut stream = std::net::TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "GET /v1/health HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.ends_with(r#"{"status":"ok"}"#), "{response}");
}
