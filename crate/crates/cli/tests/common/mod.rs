#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn lexgraph<S: AsRef<str>>(args: &[S]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv =
        std::iter::once("lexgraph".to_owned()).chain(args.iter().map(|a| a.as_ref().to_owned()));
    let code = lexgraph_cli::run(argv, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).expect("utf-8 stdout"),
        stderr: String::from_utf8(err).expect("utf-8 stderr"),
    }
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/golden")
}

pub fn golden_config() -> String {
    golden_dir().join("lexgraph.toml").display().to_string()
}

pub fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Builds the golden graph into `dir` and returns its path.
pub fn build_golden(dir: &Path) -> PathBuf {
    let graph = dir.join("graph.json");
    let out = lexgraph(&[
        "--config",
        &golden_config(),
        "--graph",
        &path_str(&graph),
        "build",
    ]);
    assert_eq!(out.code, 0, "build failed: {}", out.stderr);
    graph
}

pub fn read_jsonl(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
