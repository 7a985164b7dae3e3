use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use batchmesh::fixtures::corpus;
use batchmesh::io::write_poly;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_batchmesh"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("BATCHMESH_")) {
        c.env_remove(k);
    }
    c
}

fn square(dir: &Path) -> PathBuf {
    let f = corpus().into_iter().find(|f| f.name == "square-coarse").unwrap();
    let p = dir.join("square.poly");
    std::fs::write(&p, write_poly(&f.pslg)).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn refines_to_zero_bad_area() {
    let dir = tempfile::tempdir().unwrap();
    let input = square(dir.path());
    let out = dir.path().join("out");
    let svg = dir.path().join("out.svg");
    let r = run(&[path(&input), "-o", path(&out), "--theta", "20", "--svg", path(&svg)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("bad area      0.0000%"), "{stdout}");
    let node = std::fs::read_to_string(out.with_extension("node")).unwrap();
    let ele = std::fs::read_to_string(out.with_extension("ele")).unwrap();
    let (pts, _) = batchmesh::io::read_node(&node).unwrap();
    assert!(!batchmesh::io::read_ele(&ele, 1, pts.len()).unwrap().is_empty());
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn disabling_a_rule_changes_the_batch_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let input = square(dir.path());
    let batches = |extra: &[&str], name: &str| {
        let m = dir.path().join(name);
        let o = dir.path().join("o");
        let mut args = vec![path(&input), "-o", path(&o), "--metrics", path(&m)];
        args.extend_from_slice(extra);
        assert!(run(&args).status.success());
        let text = std::fs::read_to_string(&m).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert!(!lines.is_empty());
        lines.len()
    };
    assert_ne!(batches(&[], "all.json"), batches(&["--no-rule4"], "no4.json"));
}

#[test]
fn missing_input_is_an_input_error() {
    let r = run(&["/nonexistent/input.poly"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn out_of_range_theta_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = square(dir.path());
    assert_eq!(run(&[path(&input), "--theta", "75"]).status.code(), Some(2));
}

#[test]
fn seeded_sequential_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = square(dir.path());
    let mesh = |name: &str| {
        let out = dir.path().join(name);
        let r = run(&[path(&input), "-o", path(&out), "--execution", "sequential", "--seed", "7"]);
        assert!(r.status.success());
        (std::fs::read(out.with_extension("node")).unwrap(), std::fs::read(out.with_extension("ele")).unwrap())
    };
    assert_eq!(mesh("a"), mesh("b"));
}

#[test]
fn bench_on_empty_directory_prints_header() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&["bench", path(dir.path())]);
    assert!(r.status.success());
    assert!(!r.stdout.is_empty());
}
