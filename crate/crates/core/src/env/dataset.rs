//! Logged bandit data and its CSV + JSON-sidecar serialization.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EnvConfig;
use crate::error::{Error, Result};
use crate::timefeat::Timestamp;

/// One logged interaction `(x, t, a, r, pi_0(a|x,t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedRecord {
    pub x: Vec<f64>,
    pub t: Timestamp,
    pub a: usize,
    pub r: f64,
    pub pscore: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Last logged timestamp `T`; records satisfy `0 <= t <= T`.
    pub horizon: Timestamp,
    pub n_actions: usize,
    pub context_dim: usize,
    /// Generating environment, when the data is synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
}

/// An immutable, validated collection of logged records.
#[derive(Debug, Clone)]
pub struct LoggedDataset {
    records: Vec<LoggedRecord>,
    meta: DatasetMeta,
}

impl LoggedDataset {
    pub fn new(records: Vec<LoggedRecord>, meta: DatasetMeta) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InsufficientData(
                "a logged dataset needs at least one record".into(),
            ));
        }
        for (i, rec) in records.iter().enumerate() {
            if !(rec.pscore > 0.0 && rec.pscore <= 1.0) {
                return Err(Error::config(format!(
                    "record {i}: propensity {} outside (0, 1] (common support)",
                    rec.pscore
                )));
            }
            if rec.t < 0 || rec.t > meta.horizon {
                return Err(Error::config(format!(
                    "record {i}: timestamp {} outside [0, {}]",
                    rec.t, meta.horizon
                )));
            }
            if rec.a >= meta.n_actions {
                return Err(Error::config(format!(
                    "record {i}: action {} >= {}",
                    rec.a, meta.n_actions
                )));
            }
            if rec.x.len() != meta.context_dim {
                return Err(Error::config(format!(
                    "record {i}: context has {} dims, expected {}",
                    rec.x.len(),
                    meta.context_dim
                )));
            }
            if !rec.r.is_finite() || rec.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("record {i}: non-finite value")));
            }
        }
        Ok(Self { records, meta })
    }

    pub fn records(&self) -> &[LoggedRecord] {
        &self.records
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_actions(&self) -> usize {
        self.meta.n_actions
    }

    pub fn context_dim(&self) -> usize {
        self.meta.context_dim
    }

    pub fn horizon(&self) -> Timestamp {
        self.meta.horizon
    }

    /// Records with `lo <= t < hi`, or `None` if there are none.
    pub fn subset(&self, keep: impl Fn(&LoggedRecord) -> bool) -> Option<LoggedDataset> {
        let records: Vec<_> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        if records.is_empty() {
            return None;
        }
        Some(Self {
            records,
            meta: self.meta.clone(),
        })
    }

    /// Same records with every propensity multiplied by `factor`.
    pub fn with_scaled_propensities(&self, factor: f64) -> Result<LoggedDataset> {
        let records = self
            .records
            .iter()
            .map(|r| LoggedRecord {
                pscore: r.pscore * factor,
                ..r.clone()
            })
            .collect();
        Self::new(records, self.meta.clone())
    }

    /// Write `path` as CSV (`t,x_0..x_{d-1},a,r,pscore`) and the metadata to
    /// the sidecar returned by [`sidecar_path`].
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        let mut header = vec!["t".to_string()];
        header.extend((0..self.meta.context_dim).map(|d| format!("x_{d}")));
        header.extend(["a", "r", "pscore"].map(String::from));
        w.write_record(&header)?;
        for rec in &self.records {
            let mut row = vec![rec.t.to_string()];
            row.extend(rec.x.iter().map(|v| v.to_string()));
            row.push(rec.a.to_string());
            row.push(rec.r.to_string());
            row.push(rec.pscore.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        let mut side = BufWriter::new(File::create(sidecar_path(path))?);
        serde_json::to_writer_pretty(&mut side, &self.meta)?;
        side.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<LoggedDataset> {
        let meta: DatasetMeta =
            serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
        let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
        let d = meta.context_dim;
        let bad = |i: usize, what: &str| {
            Error::config(format!("{}: row {i}: bad {what}", path.display()))
        };
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            if row.len() != d + 4 {
                return Err(bad(i, "column count"));
            }
            let num = |j: usize| row[j].parse::<f64>().map_err(|_| bad(i, "number"));
            records.push(LoggedRecord {
                t: row[0].parse().map_err(|_| bad(i, "timestamp"))?,
                x: (1..=d).map(num).collect::<Result<_>>()?,
                a: row[d + 1].parse().map_err(|_| bad(i, "action"))?,
                r: num(d + 2)?,
                pscore: num(d + 3)?,
            });
        }
        Self::new(records, meta)
    }
}

/// `data.csv` -> `data.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}
