//! Machine-readable results: a JSON bundle and its CSV twin.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Record {
    pub metric: String,
    pub value: f64,
    pub dims: Vec<usize>,
    pub seeds: Vec<u64>,
    pub samples: usize,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportBundle {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: std::collections::BTreeMap<String, String>,
    pub records: Vec<Record>,
    /// Command-specific structured output.
    pub details: Value,
}

impl ReportBundle {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_owned(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            config: cfg.entries(),
            records: Vec::new(),
            details: Value::Null,
        }
    }

    pub fn push(&mut self, metric: &str, value: f64, dims: &[usize], seeds: &[u64], samples: usize) {
        self.records.push(Record {
            metric: metric.to_owned(),
            value,
            dims: dims.to_vec(),
            seeds: seeds.to_vec(),
            samples,
            config_hash: self.config_hash.clone(),
            seed: self.seed,
        });
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.records.iter().find(|r| r.metric == name).map(|r| r.value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value", "dims", "seeds", "samples", "config_hash", "seed"])
            .map_err(|e| Error::format("csv", e.to_string()))?;
        let join = |v: Vec<String>| v.join("x");
        for r in &self.records {
            w.write_record([
                r.metric.clone(),
                r.value.to_string(),
                join(r.dims.iter().map(ToString::to_string).collect()),
                r.seeds.iter().map(ToString::to_string).collect::<Vec<_>>().join(";"),
                r.samples.to_string(),
                r.config_hash.clone(),
                r.seed.to_string(),
            ])
            .map_err(|e| Error::format("csv", e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format("csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Writes `path` as JSON and a `.csv` sibling.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        std::fs::write(path.with_extension("csv"), self.to_csv()?)?;
        Ok(())
    }
}
