#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cpsdre_cli::TIMING_FIELDS;
use serde_json::Value;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_cpsdre")
}

pub fn cpsdre(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

/// Writes `config` (with `output_dir` set to `out`) into `dir/config.json`.
pub fn write_config(dir: &Path, mut config: Value, out: &Path) -> PathBuf {
    config["output_dir"] = Value::String(out.to_string_lossy().into_owned());
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

/// The shipped config file with its output directory replaced.
pub fn shipped_config(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn strip_json(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for key in TIMING_FIELDS {
                map.remove(*key);
            }
            for (_, child) in map.iter_mut() {
                strip_json(child);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(strip_json),
        _ => {}
    }
}

/// Drops timing columns from a delimited table.
fn strip_table(text: &str, sep: char) -> String {
    let mut drop: Vec<usize> = Vec::new();
    let mut out = String::new();
    for line in text.lines() {
        let cells: Vec<&str> = line.split(sep).collect();
        if drop.is_empty() && cells.iter().any(|c| TIMING_FIELDS.contains(&c.trim())) {
            drop = cells
                .iter()
                .enumerate()
                .filter(|(_, c)| TIMING_FIELDS.contains(&c.trim()))
                .map(|(i, _)| i)
                .collect();
        }
        let kept: Vec<&str> = cells
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, c)| *c)
            .collect();
        out.push_str(&kept.join(&sep.to_string()));
        out.push('\n');
    }
    out
}

/// File name -> contents with timing fields removed.
pub fn normalized_artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let bytes = std::fs::read(&path).unwrap();
        let content = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let mut v: Value = serde_json::from_slice(&bytes).unwrap();
                strip_json(&mut v);
                serde_json::to_vec(&v).unwrap()
            }
            Some("csv") if name.starts_with("report") => strip_table(&String::from_utf8(bytes).unwrap(), ',').into_bytes(),
            Some("md") => strip_table(&String::from_utf8(bytes).unwrap(), '|').into_bytes(),
            _ => bytes,
        };
        out.insert(name, content);
    }
    out
}

/// Names of files whose normalized contents differ (or exist on one side).
pub fn differing(a: &Path, b: &Path) -> Vec<String> {
    let (x, y) = (normalized_artifacts(a), normalized_artifacts(b));
    let mut names: Vec<String> = x.keys().chain(y.keys()).cloned().collect();
    names.sort();
    names.dedup();
    names.into_iter().filter(|n| x.get(n) != y.get(n)).collect()
}
