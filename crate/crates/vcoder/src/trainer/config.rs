//! Run configuration: a flat `key = value` file, every field defaulted,
//! unknown keys rejected, all violations reported at once. The resolved
//! config is echoed into every artifact a run produces.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::IncidenceMode;
use crate::nn::Activation;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// Which printed form of the exploration decay to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpsilonFormula {
    /// `eps_end + (eps_start - eps_end) * exp(-t * decay)`: starts at
    /// `eps_start`, converges to `eps_end`.
    Standard,
    /// `(eps_start + (eps_end - eps_start)) * exp(-t * decay)`, which
    /// collapses to `eps_end * exp(-t * decay)`.
    Literal,
}

impl EpsilonFormula {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standard" => Some(EpsilonFormula::Standard),
            "literal" => Some(EpsilonFormula::Literal),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EpsilonFormula::Standard => "standard",
            EpsilonFormula::Literal => "literal",
        }
    }
}

/// Every knob of a run. Serialized verbatim into checkpoints and echoed
/// as `# key = value` lines at the top of every CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay: f64,
    pub epochs_per_round: usize,
    pub rounds: usize,
    pub seed: u64,
    pub incidence_mode: IncidenceMode,
    pub epsilon_formula: EpsilonFormula,
    pub hidden_activation: Activation,
    pub min_split_samples: u64,
    /// Entity/relation embedding dimension for link prediction.
    pub lp_dim: usize,
    pub lp_learning_rate: f64,
    pub lp_batch_size: usize,
    pub lp_epochs: usize,
    /// Negatives sampled per positive per side (head and tail).
    pub lp_negatives: usize,
    pub lp_weight_decay: f64,
    /// Top-k entities per unit in disclosure reports.
    pub disclosure_top_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 16,
            learning_rate: 0.001,
            batch_size: 32,
            weight_decay: 0.001,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay: 1e-4,
            epochs_per_round: 20,
            rounds: 0,
            seed: 42,
            incidence_mode: IncidenceMode::RoleAgnostic,
            epsilon_formula: EpsilonFormula::Standard,
            hidden_activation: Activation::Sigmoid,
            min_split_samples: 10,
            lp_dim: 32,
            lp_learning_rate: 0.05,
            lp_batch_size: 128,
            lp_epochs: 50,
            lp_negatives: 1,
            lp_weight_decay: 0.0,
            disclosure_top_k: 5,
        }
    }
}

impl TrainConfig {
    /// Parses a `key = value` file on top of the defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<TrainConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Parses config text. Lines are `key = value`; blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<TrainConfig, ConfigError> {
        let mut cfg = TrainConfig::default();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!("line {}: expected key = value, got {line:?}", i + 1));
                continue;
            };
            let key = key.trim();
            let value = value.trim();
            if let Err(e) = cfg.set(key, value) {
                errors.push(format!("line {}: {e}", i + 1));
            }
        }
        errors.extend(cfg.violations());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("{key}: cannot parse {value:?}"))
        }
        match key {
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "epsilon_start" => self.epsilon_start = num(key, value)?,
            "epsilon_end" => self.epsilon_end = num(key, value)?,
            "epsilon_decay" => self.epsilon_decay = num(key, value)?,
            "epochs_per_round" => self.epochs_per_round = num(key, value)?,
            "rounds" => self.rounds = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "incidence_mode" => {
                self.incidence_mode = IncidenceMode::parse(value).ok_or_else(|| {
                    format!("incidence_mode: expected role_agnostic | head_only | directional, got {value:?}")
                })?
            }
            "epsilon_formula" => {
                self.epsilon_formula = EpsilonFormula::parse(value).ok_or_else(|| {
                    format!("epsilon_formula: expected standard | literal, got {value:?}")
                })?
            }
            "hidden_activation" => {
                self.hidden_activation = Activation::parse(value).ok_or_else(|| {
                    format!("hidden_activation: expected sigmoid | identity, got {value:?}")
                })?
            }
            "min_split_samples" => self.min_split_samples = num(key, value)?,
            "lp_dim" => self.lp_dim = num(key, value)?,
            "lp_learning_rate" => self.lp_learning_rate = num(key, value)?,
            "lp_batch_size" => self.lp_batch_size = num(key, value)?,
            "lp_epochs" => self.lp_epochs = num(key, value)?,
            "lp_negatives" => self.lp_negatives = num(key, value)?,
            "lp_weight_decay" => self.lp_weight_decay = num(key, value)?,
            "disclosure_top_k" => self.disclosure_top_k = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                v.push(msg.to_string());
            }
        };
        check(self.hidden_dim >= 1, "hidden_dim must be >= 1");
        check(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning_rate must be positive and finite",
        );
        check(self.batch_size >= 1, "batch_size must be >= 1");
        check(
            self.weight_decay >= 0.0 && self.weight_decay.is_finite(),
            "weight_decay must be >= 0",
        );
        check(
            (0.0..=1.0).contains(&self.epsilon_start),
            "epsilon_start must be in [0, 1]",
        );
        check(
            (0.0..=1.0).contains(&self.epsilon_end),
            "epsilon_end must be in [0, 1]",
        );
        check(
            self.epsilon_end <= self.epsilon_start,
            "epsilon_end must not exceed epsilon_start",
        );
        check(
            self.epsilon_decay >= 0.0 && self.epsilon_decay.is_finite(),
            "epsilon_decay must be >= 0",
        );
        check(self.min_split_samples >= 2, "min_split_samples must be >= 2");
        check(self.lp_dim >= 1, "lp_dim must be >= 1");
        check(
            self.lp_learning_rate > 0.0 && self.lp_learning_rate.is_finite(),
            "lp_learning_rate must be positive and finite",
        );
        check(self.lp_batch_size >= 1, "lp_batch_size must be >= 1");
        check(self.lp_negatives >= 1, "lp_negatives must be >= 1");
        check(
            self.lp_weight_decay >= 0.0 && self.lp_weight_decay.is_finite(),
            "lp_weight_decay must be >= 0",
        );
        v
    }

    /// All fields as `(key, value)` pairs in file order, for echoing.
    pub fn echo_entries(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("hidden_dim", self.hidden_dim.to_string());
        m.insert("learning_rate", self.learning_rate.to_string());
        m.insert("batch_size", self.batch_size.to_string());
        m.insert("weight_decay", self.weight_decay.to_string());
        m.insert("epsilon_start", self.epsilon_start.to_string());
        m.insert("epsilon_end", self.epsilon_end.to_string());
        m.insert("epsilon_decay", self.epsilon_decay.to_string());
        m.insert("epochs_per_round", self.epochs_per_round.to_string());
        m.insert("rounds", self.rounds.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("incidence_mode", self.incidence_mode.as_str().to_string());
        m.insert("epsilon_formula", self.epsilon_formula.as_str().to_string());
        m.insert(
            "hidden_activation",
            self.hidden_activation.as_str().to_string(),
        );
        m.insert("min_split_samples", self.min_split_samples.to_string());
        m.insert("lp_dim", self.lp_dim.to_string());
        m.insert("lp_learning_rate", self.lp_learning_rate.to_string());
        m.insert("lp_batch_size", self.lp_batch_size.to_string());
        m.insert("lp_epochs", self.lp_epochs.to_string());
        m.insert("lp_negatives", self.lp_negatives.to_string());
        m.insert("lp_weight_decay", self.lp_weight_decay.to_string());
        m.insert("disclosure_top_k", self.disclosure_top_k.to_string());
        m
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.echo_entries() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_yields_all_defaults() {
        let cfg = TrainConfig::parse("").unwrap();
        assert_eq!(cfg, TrainConfig::default());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = TrainConfig::parse("# a comment\n\nhidden_dim = 32\n").unwrap();
        assert_eq!(cfg.hidden_dim, 32);
    }

    #[test]
    fn negative_learning_rate_is_rejected() {
        assert!(matches!(
            TrainConfig::parse("learning_rate = -1"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn paper_sweep_epsilon_decay_values_are_accepted() {
        for v in ["1e-4", "1e-5", "1e-6"] {
            let cfg = TrainConfig::parse(&format!("epsilon_decay = {v}")).unwrap();
            assert_eq!(cfg.epsilon_decay, v.parse::<f64>().unwrap());
        }
    }

    #[test]
    fn unknown_keys_are_rejected_and_all_violations_reported() {
        let err = TrainConfig::parse("bogus = 1\nlearning_rate = 0\nbatch_size = 0\n");
        match err {
            Err(ConfigError::Invalid(list)) => {
                assert_eq!(list.len(), 3, "{list:?}");
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn display_round_trips_through_parse() {
        let mut cfg = TrainConfig::default();
        cfg.hidden_dim = 8;
        cfg.epsilon_decay = 0.02;
        cfg.incidence_mode = IncidenceMode::Directional;
        let reparsed = TrainConfig::parse(&cfg.to_string()).unwrap();
        assert_eq!(cfg, reparsed);
    }
}
