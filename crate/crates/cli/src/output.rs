//! Artifact writing and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Record of one command invocation, written as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    /// Input role to path as given on the command line.
    pub inputs: BTreeMap<String, String>,
    pub platform: Option<String>,
    pub options: BTreeMap<String, serde_json::Value>,
    /// Wall-clock milliseconds per stage in execution order.
    pub timings_ms: Vec<(String, f64)>,
    pub artifacts: Vec<String>,
}

/// Hash of the command, its options and the bytes of every input file.
/// Paths are left out so moving inputs around keeps the hash.
pub fn config_hash(
    command: &str,
    options: &BTreeMap<String, serde_json::Value>,
    inputs: &BTreeMap<String, String>,
    platform: Option<&str>,
) -> Result<String> {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(serde_json::to_string(options).expect("options serialize").as_bytes());
    let files = inputs.iter().map(|(k, v)| (k.as_str(), v.as_str())).chain(platform.map(|p| ("platform", p)));
    for (role, path) in files {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(stage_for(role), Path::new(path), e))?;
        h.update([0]);
        h.update(role.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn stage_for(role: &str) -> &'static str {
    match role {
        "platform" => "platform",
        "design" => "design",
        "depths" => "depths",
        "input" => "tensor",
        _ => "network",
    }
}

/// Writes artifacts under one directory, tagging each with the config hash.
pub struct OutDir {
    dir: PathBuf,
    hash: String,
    written: Vec<String>,
    timings: Vec<(String, f64)>,
    started: Option<(String, Instant)>,
}

impl OutDir {
    pub fn create(dir: &Path, hash: String) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io("output", dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), hash, written: Vec::new(), timings: Vec::new(), started: None })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Close the running stage, if any, and start timing `name`.
    pub fn stage(&mut self, name: &str) {
        self.end_stage();
        self.started = Some((name.to_string(), Instant::now()));
    }

    pub fn end_stage(&mut self) {
        if let Some((n, t)) = self.started.take() {
            self.timings.push((n, t.elapsed().as_secs_f64() * 1e3));
        }
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, data).map_err(|e| CliError::new("output", crate::error::ExitKind::Failure, format!("{}: {e}", p.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Pretty JSON object with a `config_hash` field added.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value).expect("artifact serializes");
        if let serde_json::Value::Object(m) = &mut v {
            let mut tagged = serde_json::Map::new();
            tagged.insert("config_hash".into(), self.hash.clone().into());
            tagged.extend(std::mem::take(m));
            v = serde_json::Value::Object(tagged);
        }
        let mut text = serde_json::to_string_pretty(&v).expect("artifact serializes");
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    /// CSV with a `# config <hash>` first line.
    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<()> {
        let mut buf = format!("# config {}\n", self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in rows {
                w.serialize(r).expect("csv row serializes");
            }
            w.flush().expect("in-memory write");
        }
        self.bytes(name, &buf)
    }

    pub fn finish(mut self, manifest: RunManifest) -> Result<()> {
        self.end_stage();
        let mut m = manifest;
        m.timings_ms = std::mem::take(&mut self.timings);
        m.artifacts = self.written.clone();
        let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        text.push('\n');
        let p = self.path("manifest.json");
        std::fs::write(&p, text).map_err(|e| CliError::io("output", &p, e))
    }
}

/// Read a CSV written by [`OutDir::csv`], skipping the hash line.
pub fn read_csv_records(text: &str) -> Vec<csv::StringRecord> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes()).records().map_while(|r| r.ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        k: u32,
        v: f64,
    }

    #[test]
    fn artifacts_carry_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(dir.path(), "feed".into()).unwrap();
        out.json("a.json", &serde_json::json!({"x": 1})).unwrap();
        out.csv("b.csv", &[Row { k: 0, v: 1.5 }, Row { k: 1, v: 2.0 }]).unwrap();
        let a = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
        assert!(a.find("config_hash").unwrap() < a.find("\"x\"").unwrap());
        let b = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
        assert!(b.starts_with("# config feed\nk,v\n0,1.5\n"));
        assert_eq!(read_csv_records(&b).len(), 2);
    }

    #[test]
    fn hash_depends_on_content_not_path() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        std::fs::write(&a, "x").unwrap();
        std::fs::write(&b, "x").unwrap();
        let opts = BTreeMap::new();
        let h = |p: &Path| {
            let inputs = BTreeMap::from([("network".to_string(), p.display().to_string())]);
            config_hash("flow", &opts, &inputs, None).unwrap()
        };
        assert_eq!(h(&a), h(&b));
        std::fs::write(&b, "y").unwrap();
        assert_ne!(h(&a), h(&b));
    }
}
