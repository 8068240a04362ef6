//! `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory of the config file. Every key is optional;
//! unset keys keep their library defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bookqa_core::harness::{ExperimentConfig, RetrievalMethod};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub books: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub artificial: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub external_scores: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub experiment: ExperimentConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("{key}: cannot parse {value:?}: {e}"))
}

pub fn parse_retrieval(value: &str) -> Result<RetrievalMethod, String> {
    match value {
        "bm25f" => Ok(RetrievalMethod::Bm25f),
        "external" => Ok(RetrievalMethod::External),
        _ => Err(format!("retrieval must be bm25f or external, got {value:?}")),
    }
}

impl RunConfig {
    /// Reads a config file. Errors carry the file name and line.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|(line, m)| CliError::config(format!("{}:{line}: {m}", path.display())))
    }

    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, (usize, String)> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or((i + 1, format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(first) = seen.insert(key.to_string(), i + 1) {
                return Err((i + 1, format!("{key} already set on line {first}")));
            }
            cfg.set(key, value, base).map_err(|m| (i + 1, m))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), String> {
        let path = || Some(base.join(value));
        let e = &mut self.experiment;
        match key {
            "books" => self.paths.books = path(),
            "questions" => self.paths.questions = path(),
            "artificial" => self.paths.artificial = path(),
            "embeddings" => self.paths.embeddings = path(),
            "index" => self.paths.index = path(),
            "external_scores" => self.paths.external_scores = path(),
            "output" => self.paths.output = path(),
            "seed" => e.seed = parse(key, value)?,
            "folds" => e.folds = parse(key, value)?,
            "trials" => e.trials = parse(key, value)?,
            "retrieval" => e.retrieval = parse_retrieval(value)?,
            "hops" => e.hops = parse(key, value)?,
            "context_sentences" => e.context_sentences = parse(key, value)?,
            "pretrain" => e.pretrain_enabled = parse(key, value)?,
            "pretrain_fraction" => e.pretrain_fraction = parse(key, value)?,
            "pretrain_epochs" => e.pretrain.epochs = parse(key, value)?,
            "sgns.dim" => e.embeddings.dim = parse(key, value)?,
            "sgns.window" => e.embeddings.window = parse(key, value)?,
            "sgns.negatives" => e.embeddings.negatives = parse(key, value)?,
            "sgns.epochs" => e.embeddings.epochs = parse(key, value)?,
            "sgns.lr" => e.embeddings.initial_lr = parse(key, value)?,
            "sgns.min_count" => e.embeddings.min_count = parse(key, value)?,
            "sgns.subsample" => e.embeddings.subsample_t = parse(key, value)?,
            "bm25.k1" => e.bm25.k1 = parse(key, value)?,
            "bm25.b_text" => e.bm25.b_text = parse(key, value)?,
            "bm25.b_char" => e.bm25.b_char = parse(key, value)?,
            "bm25.w_text" => e.bm25.w_text = parse(key, value)?,
            "bm25.w_char" => e.bm25.w_char = parse(key, value)?,
            "train.epochs" => e.finetune.epochs = parse(key, value)?,
            "train.batch_size" => e.finetune.batch_size = parse(key, value)?,
            "train.lr" => e.finetune.initial_lr = parse(key, value)?,
            "train.lr_decay" => e.finetune.lr_decay = parse(key, value)?,
            "train.lr_decay_period" => e.finetune.lr_decay_period = parse(key, value)?,
            "pretrain.batch_size" => e.pretrain.batch_size = parse(key, value)?,
            "pretrain.lr" => e.pretrain.initial_lr = parse(key, value)?,
            "pretrain.lr_decay" => e.pretrain.lr_decay = parse(key, value)?,
            "pretrain.lr_decay_period" => e.pretrain.lr_decay_period = parse(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// The path for `what`, or a config error naming the key to set.
    pub fn require<'a>(&self, path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
        let p = path.as_deref().ok_or_else(|| CliError::config(format!("no {key} path: set {key} in the config or pass --{}", key.replace('_', "-"))))?;
        if !p.exists() {
            return Err(CliError::config(format!("{key} path {} does not exist", p.display())));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: &[&str] = &[
        "books",
        "questions",
        "artificial",
        "embeddings",
        "index",
        "external_scores",
        "output",
        "seed",
        "folds",
        "trials",
        "retrieval",
        "hops",
        "context_sentences",
        "pretrain",
        "pretrain_fraction",
        "pretrain_epochs",
        "sgns.dim",
        "sgns.window",
        "sgns.negatives",
        "sgns.epochs",
        "sgns.lr",
        "sgns.min_count",
        "sgns.subsample",
        "bm25.k1",
        "bm25.b_text",
        "bm25.b_char",
        "bm25.w_text",
        "bm25.w_char",
        "train.epochs",
        "train.batch_size",
        "train.lr",
        "train.lr_decay",
        "train.lr_decay_period",
        "pretrain.batch_size",
        "pretrain.lr",
        "pretrain.lr_decay",
        "pretrain.lr_decay_period",
    ];

    #[test]
    fn parses_keys_and_resolves_paths() {
        let text = "# run\nbooks = data/books\nseed = 9\nretrieval = external\nsgns.dim = 50\ntrain.batch_size=8\npretrain = false\n";
        let cfg = RunConfig::parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.paths.books, Some(PathBuf::from("/cfg/data/books")));
        assert_eq!(cfg.experiment.seed, 9);
        assert_eq!(cfg.experiment.retrieval, RetrievalMethod::External);
        assert_eq!(cfg.experiment.embeddings.dim, 50);
        assert_eq!(cfg.experiment.finetune.batch_size, 8);
        assert!(!cfg.experiment.pretrain_enabled);
    }

    #[test]
    fn absolute_paths_stay_put() {
        let cfg = RunConfig::parse("output = /tmp/x", Path::new("/cfg")).unwrap();
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/x"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(RunConfig::parse("\nseed = x", Path::new(".")).unwrap_err().0, 2);
        assert!(RunConfig::parse("nonsense", Path::new(".")).unwrap_err().1.contains("key = value"));
        assert!(RunConfig::parse("colour = red", Path::new(".")).unwrap_err().1.contains("unknown key"));
        assert!(RunConfig::parse("seed = 1\nseed = 2", Path::new(".")).unwrap_err().1.contains("line 1"));
    }

    #[test]
    fn every_listed_key_is_accepted() {
        for key in KEYS {
            let value = match *key {
                "retrieval" => "bm25f",
                "pretrain" => "true",
                k if k.ends_with("period") => "2",
                k if k.contains("lr") || k.contains("fraction") || k.starts_with("bm25") || k.contains("subsample") => "0.5",
                k if KEYS[..7].contains(&k) => "some/path",
                _ => "3",
            };
            let mut cfg = RunConfig::default();
            cfg.set(key, value, Path::new(".")).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
