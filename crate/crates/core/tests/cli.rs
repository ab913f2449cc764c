//! The command-line binary: exit codes, sweep/calibrate/report output, and
//! parity with the HTTP endpoint.

use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use gated_rag::config::ServiceConfig;
use gated_rag::eval::read_results_csv;
use gated_rag::Assistant;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gated-rag"));
    c.env("RUST_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Writes the fixtures and an offline config; returns the config path.
fn workspace(dir: &Path) -> String {
    let o = run(&["fixtures", dir.join("fx").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = dir.join("cfg.toml");
    std::fs::write(&cfg, format!("data_dir = {:?}\noffline = true\n", dir.join("data"))).unwrap();
    cfg.to_str().unwrap().to_string()
}

#[test]
fn invalid_flag_values_are_usage_errors() {
    for args in [
        &["--retrieval-k", "0", "sweep"][..],
        &["--retrieval-k", "many", "sweep"],
        &["--reasoning-level", "extreme", "ask", "q"],
        &["--temperature", "hot", "ask", "q"],
        &["--temperature", "9", "ask", "q"],
        &["--workers", "0", "sweep"],
        &["frobnicate"],
        &["ask"],
    ] {
        let o = run(args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn runtime_failures_exit_one() {
    let o = run(&["--config", "/nonexistent/cfg.toml", "ask", "q"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
    let o = run(&["calibrate", "/nonexistent/scores.csv"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn sweep_calibrate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path());
    let corpus = dir.path().join("fx/corpus");
    let o = run(&["--config", &cfg, "ingest", "--corpus", corpus.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["ingested"].as_u64().unwrap() > 30);

    let csv = dir.path().join("runs.csv");
    let questions = dir.path().join("fx/questions.jsonl");
    let o = run(&[
        "--config",
        &cfg,
        "--knowledge-model",
        "o3",
        "--reasoning-level",
        "high",
        "--retrieval-k",
        "7",
        "sweep",
        "--questions",
        questions.to_str().unwrap(),
        "--limit",
        "2",
        "--timing",
        "simulated",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_results_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows
        .iter()
        .all(|r| r.retrieval_k == 7 && r.knowledge_model == "o3" && !r.failed));

    // Same seed, same bytes.
    let again = dir.path().join("again.csv");
    let o = run(&[
        "--config",
        &cfg,
        "--knowledge-model",
        "o3",
        "--reasoning-level",
        "high",
        "--retrieval-k",
        "7",
        "sweep",
        "--questions",
        questions.to_str().unwrap(),
        "--limit",
        "2",
        "--timing",
        "simulated",
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&again).unwrap());

    let o = run(&[
        "--config",
        &cfg,
        "calibrate",
        dir.path().join("fx/calibration.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cal: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(cal["post"]["ece"].as_f64().unwrap() < cal["pre"]["ece"].as_f64().unwrap());

    let o = run(&["--config", &cfg, "report", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rep["runs"], 2);
    assert_eq!(rep["efficiency"].as_object().unwrap().len(), 1);
    assert!(!rep["pareto"]["front"].as_array().unwrap().is_empty());
    assert!(!rep["trend"]["points"].as_array().unwrap().is_empty());

    let o = run(&["--config", &cfg, "report", csv.to_str().unwrap(), "--sense", "sideways"]);
    assert_eq!(code(&o), 1);
}

#[tokio::test]
async fn cli_and_endpoint_answer_alike() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path());
    let corpus = dir.path().join("fx/corpus");
    assert_eq!(
        code(&run(&[
            "--config",
            &cfg,
            "ingest",
            "--corpus",
            corpus.to_str().unwrap()
        ])),
        0
    );

    let question = "What 3-dB bandwidth do lithium niobate modulators reach?";
    let o = run(&["--config", &cfg, "ask", question]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut from_cli: Value = serde_json::from_slice(&o.stdout).unwrap();

    let service_cfg = ServiceConfig::load(Path::new(&cfg)).unwrap();
    let app = gated_rag::service::router(Arc::new(Assistant::open(&service_cfg, None).unwrap()));
    let body = serde_json::json!({ "question": question }).to_string();
    let req = Request::post("/ask")
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.status().is_success());
    let mut from_http: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();

    for v in [&mut from_cli, &mut from_http] {
        v.as_object_mut().unwrap().remove("session_id");
    }
    assert_eq!(from_cli, from_http);
    assert_eq!(from_cli["abstained"], false);
}
