//! CSV reports. Wall times go to their own file so that every other report
//! is a pure function of config and seed.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use seqmorph_core::recommender::RankMetrics;

use crate::error::FormatError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub l_info_gen: f64,
    pub l_div: f64,
    pub l_ndcg: f64,
    pub l_rec: f64,
    pub l_ssl: f64,
    pub hinge_zero_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// `valid` or `test`.
    pub split: String,
    pub epoch: usize,
    #[serde(rename = "HR@10")]
    pub hr10: f64,
    #[serde(rename = "HR@20")]
    pub hr20: f64,
    #[serde(rename = "NDCG@10")]
    pub ndcg10: f64,
    #[serde(rename = "NDCG@20")]
    pub ndcg20: f64,
}

impl MetricRow {
    pub fn new(split: &str, epoch: usize, m: &RankMetrics) -> Self {
        Self {
            split: split.into(),
            epoch,
            hr10: m.hr10,
            hr20: m.hr20,
            ndcg10: m.ndcg10,
            ndcg20: m.ndcg20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub epoch: usize,
    pub generator_s: f64,
    pub recommender_s: f64,
    pub eval_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub ratio: f64,
    pub seed: u64,
    #[serde(rename = "HR@10")]
    pub hr10: f64,
    #[serde(rename = "HR@20")]
    pub hr20: f64,
    #[serde(rename = "NDCG@10")]
    pub ndcg10: f64,
    #[serde(rename = "NDCG@20")]
    pub ndcg20: f64,
}

/// One epoch of training, as reported.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub losses: LossRow,
    pub valid: RankMetrics,
    pub timing: TimingRow,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), FormatError> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, FormatError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(FormatError::from)).collect()
}
