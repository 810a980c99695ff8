//! The command line and the HTTP service must agree byte for byte, up to
//! whitespace, on every request.

use std::path::PathBuf;
use std::process::Command;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::Value;
use tower::ServiceExt;

use platalloc_cli::api::{CurveResponse, SimulateResponse, SolveResponse, TablesResponse};
use platalloc_cli::http::{router, StreamEvent};

struct CliOutput {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str], env: &[(&str, &str)]) -> CliOutput {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_platalloc"));
    for (key, _) in std::env::vars() {
        if key.starts_with("PLATALLOC_") {
            cmd.env_remove(key);
        }
    }
    let out = cmd.args(args).envs(env.iter().copied()).output().expect("binary runs");
    CliOutput {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

struct HttpOutput {
    status: StatusCode,
    content_type: String,
    body: String,
    cors: Option<String>,
}

async fn http(method: &str, uri: &str, body: Option<String>) -> HttpOutput {
    let mut req = Request::builder().method(method).uri(uri).header("origin", "http://localhost:5173");
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let resp = router().oneshot(req.body(body.map(Body::from).unwrap_or_default()).unwrap()).await.unwrap();
    let header = |name: &str| resp.headers().get(name).map(|v| v.to_str().unwrap().to_string());
    let content_type = header("content-type").unwrap_or_default();
    let cors = header("access-control-allow-origin");
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    HttpOutput { status, content_type, body: String::from_utf8(bytes.to_vec()).unwrap(), cors }
}

fn squeeze(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

async fn assert_parity(args: &[&str], uri: &str) -> String {
    let c = cli(args, &[]);
    assert_eq!(c.code, 0, "{args:?}: {}", c.stderr);
    let h = http("GET", uri, None).await;
    assert_eq!(h.status, StatusCode::OK, "{uri}: {}", h.body);
    assert_eq!(squeeze(&c.stdout), squeeze(&h.body), "{args:?} vs {uri}");
    c.stdout
}

#[tokio::test]
async fn solve_parity() {
    let out = assert_parity(&["solve", "--case", "unrestricted", "--mode", "cc"], "/solve?case=unrestricted&mode=cc").await;
    let doc: SolveResponse = serde_json::from_str(&out).unwrap();
    assert_eq!(doc.plan.p[1], [0.414214, 0.292893, 0.292893]);

    let out = assert_parity(
        &["solve", "--case", "fixed_r1_r2", "--r1", "0.3333", "--r2", "0.3333", "--mode", "cc", "--n", "92"],
        "/solve?case=fixed_r1_r2&r1=0.3333&r2=0.3333&mode=cc&n=92",
    )
    .await;
    let doc: SolveResponse = serde_json::from_str(&out).unwrap();
    for (a, b) in doc.plan.p[1].iter().zip([0.414214, 0.292893, 0.292893]) {
        assert!((a - b).abs() < 5e-4, "{:?}", doc.plan.p[1]);
    }
    assert!(doc.variances.is_some());

    let out = assert_parity(
        &["solve", "--case", "fixed_r1", "--r1", "0.25", "--mode", "ncc", "--target-se", "0.2"],
        "/solve?case=fixed_r1&r1=0.25&mode=ncc&target_se=0.2",
    )
    .await;
    let doc: SolveResponse = serde_json::from_str(&out).unwrap();
    assert!(doc.variance_gap < 1e-10);
    // Re-serializing the parsed document gives the same JSON.
    assert_eq!(serde_json::to_value(&doc).unwrap(), serde_json::from_str::<Value>(&out).unwrap());
}

#[tokio::test]
async fn curve_parity() {
    let out = assert_parity(
        &["curve", "--r1", "0.25", "--mode", "both", "--grid", "200"],
        "/curve?r1=0.25&mode=both&grid=200",
    )
    .await;
    let doc: CurveResponse = serde_json::from_str(&out).unwrap();
    assert_eq!(doc.rows.len(), 400);
    assert_eq!(serde_json::to_value(&doc).unwrap(), serde_json::from_str::<Value>(&out).unwrap());

    let csv = assert_parity(
        &["--format", "csv", "curve", "--r1", "0.25", "--grid", "5"],
        "/curve?r1=0.25&grid=5&format=csv",
    )
    .await;
    assert_eq!(csv.lines().count(), 11);
}

#[tokio::test]
async fn tables_parity() {
    let r1 = (1.0f64 / 3.0).to_string();
    let r2 = (4.0f64 / 9.0).to_string();
    let args = ["tables", "--case", "fixed_r1_r2", "--r1", &r1, "--r2", &r2, "--n", "92"];
    let uri = format!("/tables?case=fixed_r1_r2&r1={r1}&r2={r2}&n=92");
    let out = assert_parity(&args, &uri).await;
    let doc: TablesResponse = serde_json::from_str(&out).unwrap();
    assert_eq!(doc.tables[1].counts.arm_row(0), [16, 17, 10]);
    assert_eq!(doc.tables[2].counts.arm_row(1), [16, 8, 0]);

    let mut csv_args = vec!["--format", "csv"];
    csv_args.extend(args);
    let csv = assert_parity(&csv_args, &format!("{uri}&format=csv")).await;
    assert!(csv.contains("optimal,arm1,16,8,0,24\n"));
    let h = http("GET", &format!("{uri}&format=csv"), None).await;
    assert!(h.content_type.starts_with("text/csv"));
}

fn request_file(name: &str, body: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("platalloc-{}-{name}.json", std::process::id()));
    std::fs::write(&path, body).unwrap();
    path
}

const SIMULATION: &str = r#"{
  "allocation": {"source": "solved", "case": "fixed_r1_r2", "r1": 0.25, "r2": 0.75, "n": 92},
  "mu0": 4.94, "theta": [0.72, 0.72], "reps": 1000, "seed": 7
}"#;

#[tokio::test]
async fn simulate_parity_and_reproducibility() {
    let path = request_file("simulate", SIMULATION);
    let c = cli(&["simulate", "--request", path.to_str().unwrap()], &[]);
    assert_eq!(c.code, 0, "{}", c.stderr);
    let first = http("POST", "/simulate", Some(SIMULATION.into())).await;
    let second = http("POST", "/simulate", Some(SIMULATION.into())).await;
    assert_eq!(first.status, StatusCode::OK, "{}", first.body);
    assert_eq!(first.body, second.body);
    assert_eq!(squeeze(&c.stdout), squeeze(&first.body));
    let doc: SimulateResponse = serde_json::from_str(&first.body).unwrap();
    assert_eq!(doc.summary.seed, 7);
    assert!(doc.summary.arms.iter().all(|a| a.mc_se > 0.0));

    // The flag form of the same request.
    let flags = cli(
        &[
            "--seed", "7", "simulate", "--case", "fixed_r1_r2", "--r1", "0.25", "--r2", "0.75", "--n", "92", "--mu0",
            "4.94", "--theta", "0.72,0.72", "--reps", "1000",
        ],
        &[],
    );
    assert_eq!(flags.code, 0, "{}", flags.stderr);
    let a: SimulateResponse = serde_json::from_str(&flags.stdout).unwrap();
    assert_eq!(a.summary, doc.summary);
    std::fs::remove_file(path).ok();
}

#[tokio::test]
async fn simulate_streams_progress() {
    let h = http("POST", "/simulate?stream=true", Some(SIMULATION.into())).await;
    assert_eq!(h.status, StatusCode::OK);
    assert_eq!(h.content_type, "application/x-ndjson");
    let events: Vec<StreamEvent> = h.body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(matches!(events[0], StreamEvent::Progress { .. }));
    let plain = http("POST", "/simulate", Some(SIMULATION.into())).await;
    match events.last().unwrap() {
        StreamEvent::Result(r) => assert_eq!(r, &serde_json::from_str::<SimulateResponse>(&plain.body).unwrap()),
        other => panic!("unexpected final event {other:?}"),
    }
}

#[tokio::test]
async fn errors_match_and_carry_status() {
    // Missing r1 is a malformed request.
    let c = cli(&["solve", "--case", "fixed_r1"], &[]);
    assert_eq!(c.code, 2);
    let h = http("GET", "/solve?case=fixed_r1", None).await;
    assert_eq!(h.status, StatusCode::BAD_REQUEST);
    assert_eq!(squeeze(&c.stderr), squeeze(&h.body));
    assert!(c.stdout.is_empty());

    // Unparsable values are malformed requests too.
    let h = http("GET", "/solve?case=fixed_r1&r1=abc", None).await;
    assert_eq!(h.status, StatusCode::BAD_REQUEST);
    assert_eq!(serde_json::from_str::<Value>(&h.body).unwrap()["error"]["kind"], "invalid_request");
    let c = cli(&["solve", "--r1", "abc"], &[]);
    assert_eq!(c.code, 2);
    assert!(serde_json::from_str::<Value>(&c.stderr).is_ok(), "{}", c.stderr);

    let h = http("GET", "/curve?r1=0.25&grid=1", None).await;
    assert_eq!(h.status, StatusCode::BAD_REQUEST);

    let over = SIMULATION.replace("\"reps\": 1000", "\"reps\": 1000001");
    assert_eq!(http("POST", "/simulate", Some(over)).await.status, StatusCode::BAD_REQUEST);
    assert_eq!(http("POST", "/simulate", Some("{".into())).await.status, StatusCode::BAD_REQUEST);

    // A well-formed design that cannot be analysed: arm 2 never shares a
    // period with the control arm.
    let body = r#"{"allocation": {"source": "counts", "counts": {"control": [10, 10, 0], "arm1": [10, 10, 0], "arm2": [0, 0, 10]}}, "theta": [0, 0], "reps": 100}"#;
    let h = http("POST", "/simulate", Some(body.into())).await;
    assert_eq!(h.status, StatusCode::UNPROCESSABLE_ENTITY, "{}", h.body);
    let path = request_file("unanalysable", body);
    let c = cli(&["simulate", "--request", path.to_str().unwrap()], &[]);
    assert_eq!(c.code, 3);
    assert_eq!(squeeze(&c.stderr), squeeze(&h.body));
    std::fs::remove_file(path).ok();

    assert_eq!(http("GET", "/nowhere", None).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn responses_allow_any_origin() {
    let h = http("GET", "/solve", None).await;
    assert_eq!(h.status, StatusCode::OK);
    assert_eq!(h.content_type, "application/json");
    assert_eq!(h.cors.as_deref(), Some("*"));
}

#[test]
fn flags_override_environment() {
    let from_env = cli(&["solve"], &[("PLATALLOC_MODE", "ncc")]);
    let doc: SolveResponse = serde_json::from_str(&from_env.stdout).unwrap();
    assert_eq!(serde_json::to_value(doc.request.mode).unwrap(), "ncc");
    let from_flag = cli(&["solve", "--mode", "cc"], &[("PLATALLOC_MODE", "ncc")]);
    let doc: SolveResponse = serde_json::from_str(&from_flag.stdout).unwrap();
    assert_eq!(serde_json::to_value(doc.request.mode).unwrap(), "cc");
}

#[test]
fn out_flag_writes_a_file() {
    let path = std::env::temp_dir().join(format!("platalloc-{}-out.csv", std::process::id()));
    let c = cli(&["--format", "csv", "--out", path.to_str().unwrap(), "curve", "--r1", "0.3", "--grid", "2"], &[]);
    assert_eq!(c.code, 0, "{}", c.stderr);
    assert!(c.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("mode,r2,p02,p12,p22,max_var,ratio_vs_separate,regime\n"));
    std::fs::remove_file(path).ok();
}
