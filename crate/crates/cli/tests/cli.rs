use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skintone"))
}

fn scales() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/scales")
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.env_remove("RUST_BACKTRACE").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn simulate(study: &str, n: usize, seed: u64, out: &Path) {
    run(bin()
        .args(["simulate", "--study", study, "--n", &n.to_string(), "--seed", &seed.to_string(), "--scales"])
        .arg(scales())
        .arg("--out")
        .arg(out));
}

#[test]
fn convert_mid_gray() {
    let text = stdout(&run(bin().args(["convert", "--rgb", "118,118,118"])));
    assert!(text.contains("L*=49.6370 a*=0.0000 b*=0.0000"), "{text}");
    let json: Value =
        serde_json::from_slice(&run(bin().args(["convert", "--hex", "#767676", "--json"])).stdout).unwrap();
    assert_eq!(json["rgb"]["g"], 118);
    assert!((json["lab"]["L"].as_f64().unwrap() - 49.637).abs() < 1e-3);
}

#[test]
fn convert_lab_round_trip() {
    let json: Value =
        serde_json::from_slice(&run(bin().args(["convert", "--lab", "60,-5.5,20", "--json"])).stdout).unwrap();
    let back: Value =
        serde_json::from_slice(&run(bin().args(["convert", "--hex", json["hex"].as_str().unwrap(), "--json"])).stdout)
            .unwrap();
    assert!((back["lab"]["L"].as_f64().unwrap() - 60.0).abs() < 0.5);
}

#[test]
fn convert_rejects_bad_input() {
    let out = bin().args(["convert", "--rgb", "1,2"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().args(["convert", "--hex", "#zzzzzz"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn build_scale_from_synthetic_corpus() {
    let text = stdout(&run(bin().args(["build-scale", "--synthetic", "800", "--seed", "4", "--k", "6"])));
    let scale: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(scale["scale_id"], "cst");
    let swatches = scale["swatches"].as_array().unwrap();
    assert_eq!(swatches.len(), 6);
    assert_eq!(swatches[0]["L"], 70.0);
    assert_eq!(swatches[5]["L"], 20.0);
    let again = stdout(&run(bin().args(["build-scale", "--synthetic", "800", "--seed", "4", "--k", "6"])));
    assert_eq!(text, again);
}

#[test]
fn study1_simulate_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    simulate("1", 150, 3, &data);
    let report = dir.path().join("report");
    let out = run(bin()
        .arg("analyze-study1")
        .arg("--measurements")
        .arg(data.join("measurements.csv"))
        .arg("--demographics")
        .arg(data.join("demographics.csv"))
        .arg("--ratings")
        .arg(data.join("ratings.jsonl"))
        .arg("--scales")
        .arg(scales())
        .arg("--out")
        .arg(&report));
    assert!(stdout(&out).contains("wrote"));
    for f in ["table1.csv", "table1.txt", "table2.csv", "table3.csv", "summary.json", "stepwise.csv"] {
        assert!(report.join(f).exists(), "{f} missing");
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(report.join("summary.json")).unwrap()).unwrap();
    assert!(summary.is_object());
}

#[test]
fn study2_simulate_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    simulate("2", 60, 3, &data);
    let report = dir.path().join("report");
    run(bin()
        .arg("analyze-study2")
        .arg("--stimuli")
        .arg(data.join("stimuli.csv"))
        .arg("--measurements")
        .arg(data.join("measurements.csv"))
        .arg("--demographics")
        .arg(data.join("demographics.csv"))
        .arg("--ratings")
        .arg(data.join("ratings.jsonl"))
        .arg("--scales")
        .arg(scales())
        .arg("--out")
        .arg(&report)
        .args(["--format", "csv"]));
    for f in ["table2.csv", "table3.csv", "accuracy.csv"] {
        assert!(report.join(f).exists(), "{f} missing");
    }
    assert!(!report.join("table3.txt").exists());
}

#[test]
fn simulation_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    simulate("1", 40, 11, &a);
    simulate("1", 40, 11, &b);
    simulate("1", 40, 12, &c);
    for f in ["measurements.csv", "demographics.csv", "ratings.jsonl"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(std::fs::read(a.join("ratings.jsonl")).unwrap(), std::fs::read(c.join("ratings.jsonl")).unwrap());
}

#[test]
fn print_config_round_trips_through_config_flag() {
    let dir = tempfile::tempdir().unwrap();
    let config = stdout(&run(bin()
        .args(["simulate", "--study", "2", "--n", "30", "--seed", "5", "--print-config", "--scales"])
        .arg(scales())
        .arg("--out")
        .arg(dir.path())));
    let path = dir.path().join("sim.json");
    std::fs::write(&path, &config).unwrap();
    let again = stdout(&run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(&path)
        .arg("--print-config")
        .arg("--scales")
        .arg(scales())
        .arg("--out")
        .arg(dir.path())));
    assert_eq!(config, again);
}

struct Server(std::process::Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http(addr: &str, method: &str, path: &str, body: &str) -> (u16, Value) {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let status = raw[9..12].parse().unwrap();
    let (_, payload) = raw.split_once("\r\n\r\n").unwrap();
    (status, serde_json::from_str(payload).unwrap())
}

#[test]
fn serve_answers_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = bin()
        .arg("serve")
        .arg("--scales")
        .arg(scales())
        .arg("--store")
        .arg(dir.path().join("store.jsonl"))
        .args(["--addr", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let _server = Server(child);
    let addr = line.trim().strip_prefix("listening on http://").unwrap().to_string();

    let (status, scales) = http(&addr, "GET", "/scales", "");
    assert_eq!(status, 200);
    assert_eq!(scales["scales"].as_array().unwrap().len(), 3);
    let (status, plan) = http(&addr, "POST", "/sessions", r#"{"rater_id":"R1","study":1,"seed":2}"#);
    assert_eq!(status, 201);
    let (status, task) = http(&addr, "GET", &format!("/sessions/{}/next", plan["session_id"].as_str().unwrap()), "");
    assert_eq!(status, 200);
    assert_eq!(task["position"], 1);
    let (status, err) = http(&addr, "POST", "/sessions", r#"{"rater_id":"R1","study":2}"#);
    assert_eq!((status, err["error"].as_str()), (503, Some("missing_assets")));
}
