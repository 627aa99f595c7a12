//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are the
//! snake_case names listed in [`RunConfig::KEYS`]; a later assignment of the
//! same key wins, which is how command-line overrides are applied.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::refgraph::parse_graph_list;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Training corpus; split into labeled / unlabeled / dev / test unless
    /// `dev` and `test` files are given.
    pub corpus: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Word vectors in whitespace-separated text format.
    pub embeddings: Option<PathBuf>,
    pub labeled_frac: f64,
    pub unlabeled_frac: f64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            corpus: None,
            dev: None,
            test: None,
            embeddings: None,
            labeled_frac: 0.1,
            unlabeled_frac: 0.5,
            out: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Argument(format!("{key} = {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Argument(format!("{key} = {value:?}: expected true or false"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or("none".into(), |p| p.display().to_string())
}

impl RunConfig {
    pub const KEYS: [&'static str; 36] = [
        "corpus",
        "dev",
        "test",
        "embeddings",
        "out",
        "labeled_frac",
        "unlabeled_frac",
        "mode",
        "graphs",
        "delta",
        "max_degree",
        "adjacency_window",
        "word_dim",
        "pos_dim",
        "ner_dim",
        "position_dim",
        "hidden",
        "max_offset",
        "dropout",
        "fine_tune_words",
        "heads",
        "attention_dim",
        "leaky_slope",
        "lr_p",
        "lr_m",
        "init_epochs",
        "epochs_p",
        "epochs_m",
        "batch_size",
        "max_iters",
        "patience",
        "select_frac",
        "select_base",
        "unfreeze_encoder",
        "clip_norm",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let t = &mut self.train;
        match key.trim() {
            "corpus" => self.corpus = opt_path(v),
            "dev" => self.dev = opt_path(v),
            "test" => self.test = opt_path(v),
            "embeddings" => self.embeddings = opt_path(v),
            "out" => self.out = opt_path(v),
            "labeled_frac" => self.labeled_frac = parse_num(key, v)?,
            "unlabeled_frac" => self.unlabeled_frac = parse_num(key, v)?,
            "mode" => t.mode = v.parse()?,
            "graphs" => t.graphs = parse_graph_list(v)?,
            "delta" => t.graph.delta = parse_num(key, v)?,
            "max_degree" => {
                t.graph.max_degree = match v {
                    "none" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "adjacency_window" => t.graph.adjacency_window = parse_num(key, v)?,
            "word_dim" => t.encoder.word_dim = parse_num(key, v)?,
            "pos_dim" => t.encoder.pos_dim = parse_num(key, v)?,
            "ner_dim" => t.encoder.ner_dim = parse_num(key, v)?,
            "position_dim" => t.encoder.position_dim = parse_num(key, v)?,
            "hidden" => t.encoder.hidden = parse_num(key, v)?,
            "max_offset" => t.encoder.max_offset = parse_num(key, v)?,
            "dropout" => t.encoder.dropout = parse_num(key, v)?,
            "fine_tune_words" => t.encoder.fine_tune_words = parse_bool(key, v)?,
            "heads" => t.mgat.heads = parse_num(key, v)?,
            "attention_dim" => t.mgat.attention_dim = parse_num(key, v)?,
            "leaky_slope" => t.mgat.leaky_slope = parse_num(key, v)?,
            "lr_p" => t.lr_p = parse_num(key, v)?,
            "lr_m" => t.lr_m = parse_num(key, v)?,
            "init_epochs" => t.init_epochs = parse_num(key, v)?,
            "epochs_p" => t.epochs_p = parse_num(key, v)?,
            "epochs_m" => t.epochs_m = parse_num(key, v)?,
            "batch_size" => t.batch_size = parse_num(key, v)?,
            "max_iters" => t.max_iters = parse_num(key, v)?,
            "patience" => t.patience = parse_num(key, v)?,
            "select_frac" => t.select_frac = parse_num(key, v)?,
            "select_base" => t.select_base = v.parse()?,
            "unfreeze_encoder" => t.unfreeze_encoder = parse_bool(key, v)?,
            "clip_norm" => t.clip_norm = parse_num(key, v)?,
            "seed" => t.seed = parse_num(key, v)?,
            other => return Err(Error::Argument(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        Some(match key {
            "corpus" => show_path(&self.corpus),
            "dev" => show_path(&self.dev),
            "test" => show_path(&self.test),
            "embeddings" => show_path(&self.embeddings),
            "out" => show_path(&self.out),
            "labeled_frac" => self.labeled_frac.to_string(),
            "unlabeled_frac" => self.unlabeled_frac.to_string(),
            "mode" => t.mode.to_string(),
            "graphs" => t.graphs.iter().map(|g| g.name()).collect::<Vec<_>>().join(","),
            "delta" => t.graph.delta.to_string(),
            "max_degree" => t.graph.max_degree.map_or("none".into(), |d| d.to_string()),
            "adjacency_window" => t.graph.adjacency_window.to_string(),
            "word_dim" => t.encoder.word_dim.to_string(),
            "pos_dim" => t.encoder.pos_dim.to_string(),
            "ner_dim" => t.encoder.ner_dim.to_string(),
            "position_dim" => t.encoder.position_dim.to_string(),
            "hidden" => t.encoder.hidden.to_string(),
            "max_offset" => t.encoder.max_offset.to_string(),
            "dropout" => t.encoder.dropout.to_string(),
            "fine_tune_words" => t.encoder.fine_tune_words.to_string(),
            "heads" => t.mgat.heads.to_string(),
            "attention_dim" => t.mgat.attention_dim.to_string(),
            "leaky_slope" => t.mgat.leaky_slope.to_string(),
            "lr_p" => t.lr_p.to_string(),
            "lr_m" => t.lr_m.to_string(),
            "init_epochs" => t.init_epochs.to_string(),
            "epochs_p" => t.epochs_p.to_string(),
            "epochs_m" => t.epochs_m.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "max_iters" => t.max_iters.to_string(),
            "patience" => t.patience.to_string(),
            "select_frac" => t.select_frac.to_string(),
            "select_base" => t.select_base.to_string(),
            "unfreeze_encoder" => t.unfreeze_encoder.to_string(),
            "clip_norm" => t.clip_norm.to_string(),
            "seed" => t.seed.to_string(),
            _ => return None,
        })
    }

    /// Applies `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected key = value, found {line:?}"),
            })?;
            self.set(key, value).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key in canonical order, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        for (k, v) in [("labeled_frac", self.labeled_frac), ("unlabeled_frac", self.unlabeled_frac)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Argument(format!("{k} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}
