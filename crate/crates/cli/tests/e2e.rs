use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use pathmark_core::ingest::{model_id_for, sha256_hex};
use pathmark_core::model::to_json_pretty;
use pathmark_core::synth::{ecore_corpus, labeled_corpus, EcoreShape};
use serde_json::Value;

const N: usize = 30;

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    index: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let corpus = root.join("corpus");
        std::fs::create_dir_all(&corpus).unwrap();
        for (id, m) in ecore_corpus(11, N, &EcoreShape::default()) {
            std::fs::write(corpus.join(format!("{id}.json")), to_json_pretty(&m)).unwrap();
        }
        let index = root.join("idx");
        let f = Fixture { _dir: dir, root, index };
        let out = f.run(&["index", "--type", "ecore", corpus.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        f
    }

    fn cmd(&self, args: &[&str]) -> Command {
        let mut c = Command::new(env!("CARGO_BIN_EXE_pathmark"));
        c.arg("--index").arg(&self.index).args(args).env_remove("PATHMARK_INDEX");
        c
    }

    fn run(&self, args: &[&str]) -> Output {
        self.cmd(args).output().unwrap()
    }

    fn json(&self, args: &[&str]) -> Value {
        let mut full = vec!["--format", "json"];
        full.extend_from_slice(args);
        let out = self.run(&full);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    }

    fn path(&self, rel: &str) -> String {
        self.root.join(rel).to_str().unwrap().to_string()
    }
}

fn first_model_file(dir: &Path) -> PathBuf {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files.remove(0)
}

#[test]
fn index_then_stats_and_search() {
    let f = Fixture::new();
    let stats = f.json(&["stats"]);
    assert_eq!(stats["models"], N as u64);
    assert_eq!(stats["model_types"][0]["model_type"], "ecore");
    assert_eq!(stats["model_types"][0]["t"], N as u64);

    let query = first_model_file(&f.root.join("corpus"));
    let bytes = std::fs::read(&query).unwrap();
    let own_id = model_id_for(&query, &sha256_hex(&bytes));
    let out = f.run(&["search", "--type", "ecore", "--max", "10", query.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0].split_whitespace().collect::<Vec<_>>(), ["rank", "id", "score"]);
    assert!(lines.len() - 1 <= 10 && lines.len() > 1);
    assert!(lines[1].contains(&own_id));

    let v = f.json(&["search", "--max", "3", "--explain", query.to_str().unwrap()]);
    assert_eq!(v["results"][0]["id"], own_id.as_str());
    assert!(v["results"].as_array().unwrap().len() <= 3);
    assert!(v["results"][0]["matched_paths"].is_array());

    let out = f.run(&["--format", "csv", "search", "--max", "2", query.to_str().unwrap()]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next(), Some("rank,id,score"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn reindexing_skips_known_models() {
    let f = Fixture::new();
    let v = f.json(&["index", "--type", "ecore", &f.path("corpus")]);
    assert_eq!(v["indexed"], 0);
    assert_eq!(f.json(&["stats"])["models"], N as u64);
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    let query = first_model_file(&f.root.join("corpus"));
    let q = query.to_str().unwrap();
    assert_eq!(f.run(&["search", "--type", "nope", q]).status.code(), Some(1));
    assert_eq!(f.run(&["search", "/does/not/exist.json"]).status.code(), Some(1));
    assert_eq!(f.run(&["stats", "--bogus"]).status.code(), Some(1));
    assert_eq!(f.run(&["--help"]).status.code(), Some(0));
    let missing = Command::new(env!("CARGO_BIN_EXE_pathmark"))
        .args(["--index", &f.path("nothing-here"), "stats"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("does not contain an index"));
    std::fs::write(f.root.join("broken.json"), "{").unwrap();
    let out = f.run(&["search", &f.path("broken.json")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn eval_pipeline_is_reproducible() {
    let f = Fixture::new();
    let a = f.json(&["eval", "mutate", "--type", "ecore", "--out", &f.path("qa"), "--seed", "5", "--limit", "10"]);
    f.json(&["eval", "mutate", "--type", "ecore", "--out", &f.path("qb"), "--seed", "5", "--limit", "10"]);
    let n = a["queries"].as_u64().unwrap();
    assert!(n > 0);
    let mut names: Vec<String> = std::fs::read_dir(f.root.join("qa"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len() as u64, n + 1);
    for name in &names {
        let x = std::fs::read(f.root.join("qa").join(name)).unwrap();
        let y = std::fs::read(f.root.join("qb").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }

    let mrr = |engine: &str| {
        let out = f.run(&["--format", "json", "eval", "mrr", "--queries", &f.path("qa"), "--engine", engine]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let first = mrr("mar");
    assert_eq!(first, mrr("mar"));
    let report: Value = serde_json::from_slice(&first).unwrap();
    for key in ["engine", "query_set", "corpus_hash", "queries", "mrr", "histogram", "not_found", "ranks"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    assert_eq!(report["engine"], "mar");
    assert_eq!(report["queries"], n);
    let m = report["mrr"].as_f64().unwrap();
    assert!(m > 0.0 && m <= 1.0);
    let text: Value = serde_json::from_slice(&mrr("text")).unwrap();
    assert_eq!(text["engine"], "text");

    let out = f.run(&["--format", "csv", "eval", "bench", "--type", "ecore", "--queries", &f.path("qa"), "--sizes", "10,30"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next(), Some("index_size,bucket,phase,mean_ms,max_ms"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 4);
}

#[test]
fn classify_with_labels() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    let (models, labels) = labeled_corpus(3, 6);
    let mut csv = String::from("model_id,label\n");
    for (id, m) in &models {
        let path = corpus.join(format!("{id}.json"));
        let bytes = to_json_pretty(m);
        std::fs::write(&path, &bytes).unwrap();
        csv.push_str(&format!("{},{}\n", model_id_for(&path, &sha256_hex(bytes.as_bytes())), labels.labels[id]));
    }
    let labels_path = dir.path().join("labels.csv");
    std::fs::write(&labels_path, csv).unwrap();
    let index = dir.path().join("idx");
    let bin = env!("CARGO_BIN_EXE_pathmark");
    let out = Command::new(bin)
        .args(["--index", index.to_str().unwrap(), "index", "--type", "ecore", corpus.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());

    let (id, m) = &models[0];
    let query = dir.path().join("query.json");
    std::fs::write(&query, to_json_pretty(m)).unwrap();
    let out = Command::new(bin)
        .args(["--index", index.to_str().unwrap(), "--format", "json", "classify", "--type", "ecore", "-k", "1"])
        .arg("--labels")
        .arg(&labels_path)
        .arg(&query)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["label"], labels.labels[id].as_str());
    assert_eq!(v["neighbors"].as_array().unwrap().len(), 1);
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn serve_answers_http() {
    let f = Fixture::new();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let listen = format!("127.0.0.1:{port}");
    let mut child = f
        .cmd(&["serve", "--listen", &listen])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let started = Instant::now();
    let mut resp = None;
    while started.elapsed() < Duration::from_secs(20) {
        if let Some(r) = http_get(port, "/stats") {
            resp = Some(r);
            break;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    let missing = http_get(port, "/model/none");
    child.kill().unwrap();
    child.wait().unwrap();
    let resp = resp.expect("server came up");
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    let body = &resp[resp.find("\r\n\r\n").unwrap() + 4..];
    let v: Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["models"], N as u64);
    assert!(missing.unwrap().starts_with("HTTP/1.1 404"));
}
