use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coq_forge::stub::{StubBehavior, StubServer};
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_coq-forge");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("COQ_FORGE_API_KEY", "test-key")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(p: &Path) -> usize {
    std::fs::read_to_string(p).unwrap().lines().count()
}

fn client_file(dir: &Path, endpoint: &str) -> PathBuf {
    let path = dir.join("client.json");
    let cfg = json!({"endpoint": endpoint, "requests_per_minute": 0, "retry_backoff_ms": 1, "max_retries": 1});
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn ingest_three_records() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.json");
    let out = dir.path().join("corpus.jsonl");
    std::fs::write(
        &raw,
        json!([
            {"dialogue": [{"id": "Patients", "Sentence": "咳嗽"}, {"id": "Doctor", "Sentence": "几天了？"}]},
            {"dialogue": [{"id": "Patients", "Sentence": "发烧"}, {"id": "Doctor", "Sentence": "多喝水"}]},
            {"dialogue": [{"id": "Patients", "Sentence": "头疼"}, {"id": "Doctor", "Sentence": "量血压"}]}
        ])
        .to_string(),
    )
    .unwrap();
    let o = run(&["ingest", "--format", "meddg", "--in", s(&raw), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(lines(&out), 3);
    assert!(o.stdout.is_empty());
    let diag: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!((diag["kept"].as_u64(), diag["skipped"].as_u64()), (Some(3), Some(0)));
}

#[test]
fn unknown_format_is_a_usage_error() {
    let o = run(&["ingest", "--format", "medqa", "--in", "x", "--out", "y"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for name in ["native", "meddg", "meddialog_cn", "imcs_v2", "chip_mdcfnpc"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn empty_input_succeeds_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("empty.json");
    let out = dir.path().join("out.jsonl");
    std::fs::write(&raw, "").unwrap();
    let o = run(&["ingest", "--format", "meddg", "--in", s(&raw), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(lines(&out), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("WARN"));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["clean", "--in", s(&dir.path().join("nope.jsonl")), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_flag_is_a_usage_error() {
    assert_eq!(run(&["clean", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn clean_report_lists_rule_hits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("clean.jsonl");
    let report = dir.path().join("r.json");
    let o = run(&[
        "clean", "--rules", "default", "--in", s(&fixture("noise_exemplars.jsonl")),
        "--out", s(&out), "--report", s(&report),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let hits = r["rule_hits"].as_object().unwrap();
    assert_eq!(hits.len(), 52);
    assert!(hits["image_tag"].as_u64().unwrap() >= 1);
}

#[test]
fn eval_prints_eight_metric_columns() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("p.jsonl");
    let refs = dir.path().join("r.jsonl");
    let report = dir.path().join("eval.json");
    std::fs::write(&pred, "{\"id\":\"1\",\"prediction\":\"咳嗽几天了？\"}\n{\"id\":\"2\",\"prediction\":\"多喝水\"}\n").unwrap();
    std::fs::write(&refs, "{\"id\":\"1\",\"target\":\"咳嗽多久了？\"}\n{\"id\":\"2\",\"target\":\"注意休息\"}\n").unwrap();
    let o = run(&[
        "eval", "--pred", s(&pred), "--ref", s(&refs), "--tokenizer", "char",
        "--pqa-variant", "paper", "--report", s(&report),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    let header = table.lines().find(|l| l.starts_with("Dataset")).unwrap();
    let metrics: Vec<_> = header.split_whitespace().skip(2).collect();
    assert_eq!(metrics, ["BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "R-1", "R-2", "R-L", "PQA"]);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["pqa_variant"], "paper_verbatim");

    let o = run(&["eval", "--pred", s(&pred), "--ref", s(&refs), "--pqa-variant", "other"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn polish_without_api_key_fails_before_any_request() {
    let stub = StubServer::start(StubBehavior::Echo).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let client = client_file(dir.path(), &stub.endpoint());
    let o = Command::new(BIN)
        .args([
            "polish", "--in", s(&fixture("noise_exemplars.jsonl")),
            "--out", s(&dir.path().join("p.jsonl")), "--client", s(&client),
        ])
        .env_remove("COQ_FORGE_API_KEY")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("COQ_FORGE_API_KEY"));
    assert_eq!(stub.request_count(), 0);
}

#[test]
fn polish_fatal_error_exits_three() {
    let stub = StubServer::start(StubBehavior::Status(403)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let client = client_file(dir.path(), &stub.endpoint());
    let o = run(&[
        "polish", "--in", s(&fixture("noise_exemplars.jsonl")),
        "--out", s(&dir.path().join("p.jsonl")), "--client", s(&client),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn generate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = dir.path().join("ctx.jsonl");
    std::fs::write(&ctx, "{\"id\":\"a#1\",\"input\":\"病人：咳嗽\\n医生：\"}\n{\"id\":\"b#1\",\"input\":\"病人：头疼\\n医生：\"}\n").unwrap();
    let out = dir.path().join("pred.jsonl");

    let ok = StubServer::start(StubBehavior::Digest("答：".into())).unwrap();
    let client = client_file(dir.path(), &ok.endpoint());
    let o = run(&["generate", "--contexts", s(&ctx), "--out", s(&out), "--client", s(&client)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&out), 2);
    for r in ok.requests() {
        assert_eq!(r.body["top_p"], 0.75);
        assert_eq!(r.body["temperature"], 0.95);
    }

    let down = StubServer::start(StubBehavior::Status(500)).unwrap();
    let client = client_file(dir.path(), &down.endpoint());
    let o = run(&["generate", "--contexts", s(&ctx), "--out", s(&out), "--client", s(&client)]);
    assert_eq!(o.status.code(), Some(3));
    for line in std::fs::read_to_string(&out).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["failed"], true);
    }
}

fn pipeline_config(dir: &Path, out: &str, client: Option<Value>, template: Option<&Path>) -> PathBuf {
    let mut cfg = json!({
        "input": s(&fixture("demo_meddg.json")),
        "format": "meddg",
        "output_dir": out,
        "seed": 1,
        "workers": 2,
    });
    match client {
        Some(c) => cfg["client"] = c,
        None => cfg["skip_polish"] = json!(true),
    }
    if let Some(t) = template {
        cfg["template"] = json!(s(t));
    }
    let path = dir.join(format!("{out}.json"));
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn inline_client(stub: &StubServer) -> Value {
    json!({"endpoint": stub.endpoint(), "requests_per_minute": 0, "max_in_flight": 8})
}

#[test]
fn pipeline_on_demo_fixture_is_deterministic() {
    let stub = StubServer::start(StubBehavior::Digest("建议：".into())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = pipeline_config(dir.path(), "run", Some(inline_client(&stub)), None);
    let o = run(&["pipeline", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let out = dir.path().join("run");
    let stats: Value = serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["question_fraction"], 0.462);
    assert_eq!(lines(&out.join("train.jsonl")), 500);

    // Run reports are left out: their cache-hit counters change once the
    // cache is warm.
    let names = ["corpus.jsonl", "cleaned.jsonl", "polished.jsonl", "train.jsonl", "stats.json", "serialize_report.json"];
    let first: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(out.join(n)).unwrap()).collect();
    let sent = stub.request_count();
    let o = run(&["pipeline", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0));
    let second: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(out.join(n)).unwrap()).collect();
    for (i, n) in names.iter().enumerate() {
        assert!(first[i] == second[i], "rerun changed {n}");
    }
    assert_eq!(stub.request_count(), sent, "rerun should be served from the cache");
}

#[test]
fn skip_polish_matches_a_no_op_stub() {
    let dir = tempfile::tempdir().unwrap();
    let template = dir.path().join("identity.txt");
    std::fs::write(&template, "{history}\n<<<{answer}").unwrap();
    let stub = StubServer::start(StubBehavior::AfterMarker("<<<".into())).unwrap();

    let full = pipeline_config(dir.path(), "full", Some(inline_client(&stub)), Some(&template));
    let skip = pipeline_config(dir.path(), "skip", None, None);
    assert_eq!(run(&["pipeline", "--config", s(&full)]).status.code(), Some(0));
    assert_eq!(run(&["pipeline", "--config", s(&skip)]).status.code(), Some(0));
    assert!(stub.request_count() > 0);
    for name in ["corpus.jsonl", "cleaned.jsonl", "polished.jsonl", "train.jsonl", "stats.json", "serialize_report.json"] {
        let a = std::fs::read(dir.path().join("full").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("skip").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn pipeline_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, json!({"input": "missing.json", "skip_polish": true}).to_string()).unwrap();
    assert_eq!(run(&["pipeline", "--config", s(&cfg)]).status.code(), Some(2));

    std::fs::write(&cfg, json!({"input": s(&fixture("demo_meddg.json")), "unknown_key": 1}).to_string()).unwrap();
    assert_eq!(run(&["pipeline", "--config", s(&cfg)]).status.code(), Some(2));

    // Polishing requested without a client.
    std::fs::write(&cfg, json!({"input": s(&fixture("demo_meddg.json")), "format": "meddg"}).to_string()).unwrap();
    assert_eq!(run(&["pipeline", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn stage_commands_compose() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let steps: Vec<Vec<String>> = vec![
        vec!["ingest", "--format", "meddg", "--in", s(&fixture("demo_meddg.json")), "--out", s(&p("c.jsonl"))],
        vec!["clean", "--in", s(&p("c.jsonl")), "--out", s(&p("k.jsonl"))],
        vec![
            "serialize", "--in", s(&p("k.jsonl")), "--out", s(&p("t.jsonl")),
            "--contexts", s(&p("ctx.jsonl")), "--references", s(&p("ref.jsonl")),
            "--report", s(&p("ser.json")),
        ],
        vec!["stats", "--in", s(&p("k.jsonl")), "--report", s(&p("stats.json"))],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for args in &steps {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(lines(&p("t.jsonl")), 500);
    assert_eq!(lines(&p("ctx.jsonl")), 500);
    assert_eq!(lines(&p("ref.jsonl")), 500);

    // Scoring the references against themselves.
    let pred = std::fs::read_to_string(p("ref.jsonl")).unwrap().replace("\"target\"", "\"prediction\"");
    std::fs::write(p("pred.jsonl"), pred).unwrap();
    let o = run(&["eval", "--pred", s(&p("pred.jsonl")), "--ref", s(&p("ref.jsonl")), "--pqa-variant", "conventional"]);
    assert_eq!(o.status.code(), Some(0));
    let row = String::from_utf8(o.stdout).unwrap();
    let row = row.lines().last().unwrap().to_string();
    assert!(row.ends_with("1.0000"), "{row}");

    // Without --report, stats go to standard output.
    let o = run(&["stats", "--in", s(&p("k.jsonl"))]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n_question_turns"], 231);
}
