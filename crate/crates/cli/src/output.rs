//! Write-once CSV artifacts and the per-subcommand JSON-lines manifest.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};
use crate::CliError;

/// Shortest round-trip float text.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

/// SHA-256 over `blob <len>\0<bytes>`, the object-id form used by
/// sha256 git repositories.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

fn write_new(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut f = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path, e))
}

pub struct RunOutput<'a> {
    dir: PathBuf,
    subcommand: &'static str,
    config: &'a ExperimentConfig,
    records: Vec<Value>,
}

impl<'a> RunOutput<'a> {
    pub fn new(config: &'a ExperimentConfig, subcommand: &'static str) -> Result<Self, CliError> {
        let dir = config.out.clone();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let manifest = dir.join(format!("{subcommand}.manifest.jsonl"));
        if manifest.exists() {
            return Err(CliError::io(
                &manifest,
                std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    "output directory already holds this run",
                ),
            ));
        }
        Ok(Self {
            dir,
            subcommand,
            config,
            records: Vec::new(),
        })
    }

    /// Writes `name` with a header row and records it; `extra` is merged into
    /// the artifact's manifest record.
    pub fn csv<I>(
        &mut self,
        name: &str,
        header: &[&str],
        rows: I,
        extra: Value,
    ) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::io(&path, std::io::Error::other(e));
        w.write_record(header).map_err(csv_err)?;
        let mut count = 0usize;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(&row).map_err(csv_err)?;
            count += 1;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::io(&path, std::io::Error::other(e.to_string())))?;
        write_new(&path, &bytes)?;

        let mut rec = self.base_record();
        rec.insert("artifact".into(), json!(name));
        rec.insert("rows".into(), json!(count));
        rec.insert("columns".into(), json!(header));
        rec.insert("sha256".into(), json!(hex(&Sha256::digest(&bytes))));
        rec.insert("content_hash".into(), json!(blob_hash(&bytes)));
        if let Value::Object(extra) = extra {
            rec.extend(extra);
        }
        self.records.push(Value::Object(rec));
        log::info!("wrote {} ({count} rows)", path.display());
        Ok(path)
    }

    fn base_record(&self) -> Map<String, Value> {
        let c = self.config;
        let echo: Map<String, Value> = c
            .entries()
            .map(|(k, v, o)| {
                (
                    k.to_string(),
                    json!({ "value": v, "origin": o.to_string() }),
                )
            })
            .collect();
        let coef = c.coefficient();
        let (lo, hi) = coef.sigma_bounds().unzip();
        let mut rec = Map::new();
        rec.insert("subcommand".into(), json!(self.subcommand));
        rec.insert("config_hash".into(), json!(c.hash()));
        rec.insert("config".into(), Value::Object(echo));
        rec.insert("seed".into(), json!(c.seed));
        rec.insert("experiment".into(), json!(c.experiment));
        rec.insert(
            "versions".into(),
            json!({
                "jumpgauss-core": jumpgauss_core::VERSION,
                "jumpgauss-cli": env!("CARGO_PKG_VERSION"),
            }),
        );
        rec.insert(
            "rng".into(),
            json!({
                "generator": "ChaCha8",
                "key": "sha256(\"jumpgauss/stream/v1\" | seed | experiment_id | path | purpose)",
                "experiment_id": jumpgauss_core::sampling::experiment_id(&c.experiment),
            }),
        );
        rec.insert(
            "coefficient".into(),
            json!({ "preset": c.coefficient, "sigma_lower": lo, "sigma_upper": hi }),
        );
        rec
    }

    /// Writes `<subcommand>.manifest.jsonl`, one record per artifact.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let path = self.dir.join(format!("{}.manifest.jsonl", self.subcommand));
        let mut body = String::new();
        for r in &self.records {
            body.push_str(&r.to_string());
            body.push('\n');
        }
        write_new(&path, body.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;

    #[test]
    fn float_text_round_trips() {
        for x in [
            0.1,
            1.2649110640673517e-3,
            -2.5,
            0.0,
            1e300,
            f64::MIN_POSITIVE,
        ] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.1), "1e-1");
    }

    #[test]
    fn blob_hash_of_empty_input() {
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn artifacts_are_write_once() {
        let dir = tempfile::tempdir().unwrap();
        let o = Overrides {
            out: Some(dir.path().to_path_buf()),
            ..Overrides::default()
        };
        let cfg = ExperimentConfig::load(None, &o, "eta").unwrap();
        let mut out = RunOutput::new(&cfg, "eta").unwrap();
        out.csv("a.csv", &["x"], vec![vec!["1".to_string()]], Value::Null)
            .unwrap();
        assert!(matches!(
            out.csv("a.csv", &["x"], Vec::new(), Value::Null),
            Err(CliError::Io { .. })
        ));
        let manifest = out.finish().unwrap();
        let text = fs::read_to_string(manifest).unwrap();
        let rec: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(rec["artifact"], "a.csv");
        assert_eq!(rec["rows"], 1);
        assert_eq!(rec["config"]["out"]["origin"], "flag");
        assert!(matches!(
            RunOutput::new(&cfg, "eta"),
            Err(CliError::Io { .. })
        ));
    }
}
