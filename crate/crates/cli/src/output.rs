//! Artifact writing. Every file carries the configuration fingerprint and the
//! seed: CSVs on a leading `#` line, JSON under a `provenance` key.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use serde_json::{json, Value};

use crate::config::{Format, RunConfig};
use crate::CliError;

pub struct Sink {
    dir: PathBuf,
    fingerprint: String,
    seed: u64,
    csv: bool,
    json: bool,
}

impl Sink {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = cfg.outputs.dir.clone();
        fs::create_dir_all(&dir).map_err(|e| CliError::config(format!("output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            fingerprint: cfg.fingerprint(),
            seed: cfg.sim_or_default().seed,
            csv: cfg.wants(Format::Csv),
            json: cfg.wants(Format::Json),
        })
    }

    pub fn wants_csv(&self) -> bool {
        self.csv
    }

    pub fn provenance(&self) -> Value {
        json!({ "config_sha256": self.fingerprint, "seed": self.seed })
    }

    fn write(&self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
    }

    /// Writes `name` if CSV output is enabled and returns its file name
    /// (relative to the output directory) for cross-referencing from JSON.
    pub fn csv(&self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<Option<String>, CliError> {
        if !self.csv {
            return Ok(None);
        }
        let mut body = format!("# config_sha256={} seed={}\n{header}\n", self.fingerprint, self.seed);
        for r in rows {
            writeln!(body, "{r}").expect("writing to a String cannot fail");
        }
        self.write(name, &body)?;
        Ok(Some(name.to_string()))
    }

    /// Adds the provenance block, writes `name` if JSON output is enabled and
    /// returns the augmented document.
    pub fn json(&self, name: &str, mut doc: Value) -> Result<Value, CliError> {
        if let Value::Object(m) = &mut doc {
            m.insert("provenance".into(), self.provenance());
        }
        if self.json {
            let text = serde_json::to_string_pretty(&doc).expect("JSON values serialise") + "\n";
            self.write(name, &text)?;
        }
        Ok(doc)
    }

    pub fn config(&self, cfg: &RunConfig) -> Result<(), CliError> {
        self.write("config.json", &cfg.to_pretty_json())
    }
}
