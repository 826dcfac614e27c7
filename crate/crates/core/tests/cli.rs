use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use infomax::cli::formats::{read_scores, read_similarity, write_embeddings, SelectionFile};
use infomax::EmbeddingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;
use tempfile::TempDir;

fn infomax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infomax")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    emb: PathBuf,
    scores: PathBuf,
}

fn fixture(n: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let dim = 8;
    let data = (0..n * dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    let emb = dir.path().join("emb.bin");
    write_embeddings(&emb, &EmbeddingMatrix::new(n, dim, data).unwrap()).unwrap();
    let mut text = String::from("index,score\n");
    for i in 0..n {
        text.push_str(&format!("{i},{}\n", rng.random::<f64>() * 10.0));
    }
    let scores = dir.path().join("scores.csv");
    std::fs::write(&scores, text).unwrap();
    Fixture { dir, emb, scores }
}

fn stderr_line(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn ratio_selects_rounded_count() {
    let f = fixture(100);
    let out = f.dir.path().join("sel.json");
    let o = infomax(&[
        "select",
        "--embeddings",
        s(&f.emb),
        "--scores",
        s(&f.scores),
        "--ratio",
        "0.1",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr_line(&o));
    let sel = SelectionFile::read(&out).unwrap();
    assert_eq!(sel.selected.len(), 10);
    assert!(sel.selected.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(sel.trace.len(), 20);
    assert_eq!(sel.params["budget_resolved"], 10);
}

#[test]
fn ratio_out_of_range_is_input_error() {
    let f = fixture(100);
    let out = f.dir.path().join("sel.json");
    let o = infomax(&[
        "select",
        "--embeddings",
        s(&f.emb),
        "--scores",
        s(&f.scores),
        "--ratio",
        "1.5",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_line(&o);
    assert!(err.starts_with("error kind=input msg=\""), "{err}");
    assert_eq!(err.lines().count(), 1);
    assert!(!out.exists());
}

#[test]
fn ratio_and_budget_are_exclusive() {
    let f = fixture(20);
    let out = f.dir.path().join("sel.json");
    let o = infomax(&[
        "select",
        "--embeddings",
        s(&f.emb),
        "--scores",
        s(&f.scores),
        "--ratio",
        "0.5",
        "--budget",
        "3",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_over_limit_is_capacity_error() {
    let f = fixture(30);
    let o = infomax(&[
        "oracle",
        "--scores",
        s(&f.scores),
        "--similarity",
        "/nonexistent.csv",
        "--budget",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr_line(&o).contains("kind=capacity"));
}

#[test]
fn missing_and_malformed_files_are_io_or_format_errors() {
    let f = fixture(10);
    let out = f.dir.path().join("sel.json");
    let o = infomax(&[
        "select",
        "--embeddings",
        "/nonexistent.bin",
        "--scores",
        s(&f.scores),
        "--budget",
        "2",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_line(&o).contains("kind=io"));

    let bad = f.dir.path().join("bad.bin");
    std::fs::write(&bad, b"EMB2\x01\x00\x00\x00").unwrap();
    let o = infomax(&[
        "select",
        "--embeddings",
        s(&bad),
        "--scores",
        s(&f.scores),
        "--budget",
        "2",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_line(&o).contains("kind=format"));
}

#[test]
fn knn_score_oracle_and_eval_round_trip() {
    let f = fixture(12);
    let p = |name: &str| f.dir.path().join(name);

    let o = infomax(&["knn", "--embeddings", s(&f.emb), "--k", "3", "--out", s(&p("k.csv"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr_line(&o));
    let k = read_similarity(&p("k.csv"), 12).unwrap();
    assert!(k.is_symmetric());
    assert!((0..12).all(|i| k.row(i).0.len() >= 3));

    let o = infomax(&[
        "score",
        "ssp",
        "--embeddings",
        s(&f.emb),
        "--clusters",
        "3",
        "--seed",
        "1",
        "--out",
        s(&p("ssp.csv")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr_line(&o));
    let ssp = read_scores(&p("ssp.csv")).unwrap();
    assert_eq!(ssp.len(), 12);
    assert!(ssp.values().iter().all(|&v| v >= 0.0));

    let o = infomax(&[
        "oracle",
        "--scores",
        s(&f.scores),
        "--similarity",
        s(&p("k.csv")),
        "--budget",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr_line(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["selected"].as_array().unwrap().len(), 4);

    let o = infomax(&[
        "select",
        "--embeddings",
        s(&f.emb),
        "--scores",
        s(&f.scores),
        "--budget",
        "4",
        "--k",
        "3",
        "--out",
        s(&p("sel.json")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr_line(&o));
    let sel = SelectionFile::read(&p("sel.json")).unwrap();
    let optimum = v["objective"].as_f64().unwrap();
    assert!(sel.objective <= optimum + 1e-12);

    let o = infomax(&[
        "eval",
        "--selection",
        s(&p("sel.json")),
        "--embeddings",
        s(&f.emb),
        "--scores",
        s(&f.scores),
        "--out",
        s(&p("report.json")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr_line(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(p("report.json")).unwrap()).unwrap();
    assert!((report["objective"].as_f64().unwrap() - sel.objective).abs() < 1e-12);
    assert!(report["coverage_mean"].as_f64().unwrap() >= 0.0);
    let hist = std::fs::read_to_string(p("report.json.histogram.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("bin,lo,hi,count"));
    let total: u64 = lines
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 4);
}

#[test]
fn every_baseline_writes_a_selection() {
    let f = fixture(40);
    for method in ["random", "top_score", "k_center", "moderate", "ccs", "d2_greedy"] {
        let out = f.dir.path().join(format!("{method}.json"));
        let o = infomax(&[
            "baseline",
            "--method",
            method,
            "--seed",
            "3",
            "--embeddings",
            s(&f.emb),
            "--scores",
            s(&f.scores),
            "--budget",
            "7",
            "--out",
            s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{method}: {}", stderr_line(&o));
        let sel = SelectionFile::read(&out).unwrap();
        assert_eq!(sel.selected.len(), 7, "{method}");
    }
}

#[test]
fn unknown_baseline_is_input_error() {
    let f = fixture(10);
    let out = f.dir.path().join("x.json");
    let o = infomax(&[
        "baseline",
        "--method",
        "nope",
        "--scores",
        s(&f.scores),
        "--budget",
        "2",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
