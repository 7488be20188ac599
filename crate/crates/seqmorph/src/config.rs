//! Run configuration: a TOML file with one table per component, plus
//! `key=value` overrides addressed by dotted paths.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use seqmorph_core::data::SyntheticConfig;
use seqmorph_core::objectives::ObjectiveConfig;
use seqmorph_core::sinkhorn::SinkhornConfig;
use seqmorph_core::training::{Method, ModelConfig};

use crate::error::FormatError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Leading epochs that update the generator only.
    pub warmup_epochs: usize,
    /// `backbone`, `crop`, `mask`, `reorder`, `insert`, `substitute` or `adaptive`.
    pub method: String,
    /// Fraction of every training prefix replaced by noise in `train`.
    pub noise_ratio: f64,
    pub out: String,
    pub noise_ratios: Vec<f64>,
    pub sweep_seeds: Vec<u64>,
    pub sweep_methods: Vec<String>,
    pub data: DataConfig,
    pub model: ModelSection,
    pub sinkhorn: SinkhornSection,
    pub objective: ObjectiveSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 100,
            batch_size: 64,
            warmup_epochs: 0,
            method: "adaptive".into(),
            noise_ratio: 0.0,
            out: "runs/default".into(),
            noise_ratios: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            sweep_seeds: vec![1, 2, 3, 4, 5],
            sweep_methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            data: DataConfig::default(),
            model: ModelSection::default(),
            sinkhorn: SinkhornSection::default(),
            objective: ObjectiveSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `synthetic` or `tsv`.
    pub source: String,
    pub path: String,
    pub min_interactions: usize,
    pub seed: u64,
    pub users: usize,
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub order: usize,
    pub successors: usize,
    pub successor_mass: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SyntheticConfig::default();
        Self {
            source: "synthetic".into(),
            path: String::new(),
            min_interactions: seqmorph_core::data::DEFAULT_MIN_INTERACTIONS,
            seed: 1,
            users: s.users,
            vocab: s.vocab,
            min_len: s.min_len,
            max_len: s.max_len,
            order: s.order,
            successors: s.successors,
            successor_mass: s.successor_mass,
        }
    }
}

impl DataConfig {
    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            users: self.users,
            vocab: self.vocab,
            min_len: self.min_len,
            max_len: self.max_len,
            order: self.order,
            successors: self.successors,
            successor_mass: self.successor_mass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub d_prime: usize,
    pub k: usize,
    pub max_len: usize,
    pub beta: f64,
    pub lr_generator: f64,
    pub lr_recommender: f64,
    pub momentum: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            d: m.d,
            d_prime: m.d_prime,
            k: m.k,
            max_len: m.max_len,
            beta: m.beta,
            lr_generator: m.lr_generator,
            lr_recommender: m.lr_recommender,
            momentum: m.momentum,
            clip: m.clip,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinkhornSection {
    pub delta: f64,
    pub iters: usize,
    pub hard: bool,
}

impl Default for SinkhornSection {
    fn default() -> Self {
        let s = SinkhornConfig::default();
        Self {
            delta: s.delta,
            iters: s.iters,
            hard: s.hard,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSection {
    pub epsilon: f64,
    pub gamma: f64,
    pub tau: f64,
    pub lambda_div: f64,
    pub lambda_ndcg: f64,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        let o = ObjectiveConfig::default();
        Self {
            epsilon: o.epsilon,
            gamma: o.gamma,
            tau: o.tau,
            lambda_div: o.lambda_div,
            lambda_ndcg: o.lambda_ndcg,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, FormatError> {
        let cfg: Self = toml::from_str(text).map_err(|e| FormatError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serialises")
    }

    /// Reads `path` (or the defaults when `None`) and applies `overrides`,
    /// each of the form `section.key=value` or `key=value`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, FormatError> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| FormatError::io(p, e))?,
            None => String::new(),
        };
        let mut value: toml::Table = toml::from_str(&text).map_err(|e| FormatError::Config(e.to_string()))?;
        for o in overrides {
            set_override(&mut value, o)?;
        }
        let cfg: Self = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| FormatError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn method(&self) -> Result<Method, FormatError> {
        parse_method(&self.method)
    }

    pub fn sweep_methods(&self) -> Result<Vec<Method>, FormatError> {
        self.sweep_methods.iter().map(|m| parse_method(m)).collect()
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            d: m.d,
            d_prime: m.d_prime,
            k: m.k,
            max_len: m.max_len,
            sinkhorn: SinkhornConfig {
                delta: self.sinkhorn.delta,
                iters: self.sinkhorn.iters,
                hard: self.sinkhorn.hard,
            },
            objective: ObjectiveConfig {
                epsilon: self.objective.epsilon,
                gamma: self.objective.gamma,
                tau: self.objective.tau,
                lambda_div: self.objective.lambda_div,
                lambda_ndcg: self.objective.lambda_ndcg,
            },
            beta: m.beta,
            lr_generator: m.lr_generator,
            lr_recommender: m.lr_recommender,
            momentum: m.momentum,
            clip: m.clip,
        }
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        self.model_config().validate().map_err(|e| FormatError::Config(e.to_string()))?;
        self.method()?;
        self.sweep_methods()?;
        if self.batch_size < 2 {
            return Err(FormatError::Config(format!("batch_size {} must be at least 2", self.batch_size)));
        }
        if !(0.0..=1.0).contains(&self.noise_ratio) {
            return Err(FormatError::Config(format!("noise_ratio {} outside [0, 1]", self.noise_ratio)));
        }
        if let Some(r) = self.noise_ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(FormatError::Config(format!("noise ratio {r} outside [0, 1]")));
        }
        match self.data.source.as_str() {
            "synthetic" => Ok(()),
            "tsv" if !self.data.path.is_empty() => Ok(()),
            "tsv" => Err(FormatError::Config("data.source = \"tsv\" needs data.path".into())),
            other => Err(FormatError::Config(format!("unknown data source {other:?}"))),
        }
    }
}

fn parse_method(name: &str) -> Result<Method, FormatError> {
    Method::parse(name).ok_or_else(|| FormatError::Config(format!("unknown method {name:?}")))
}

/// Applies one `dotted.key=value` override. Values are parsed as TOML and
/// fall back to plain strings.
pub fn set_override(table: &mut toml::Table, spec: &str) -> Result<(), FormatError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| FormatError::Config(format!("override {spec:?} is not key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| FormatError::Config(format!("{p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
