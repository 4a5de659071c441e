//! Flat dotted-key run configuration.
//!
//! Every tunable of the pipeline lives in one [`RunConfig`], overridable from
//! a key-value file (`key = value` lines, `#` comments) and `--set key=value`
//! flags. [`RunConfig::dump`] prints the effective configuration in the same
//! format it parses, so `print-config > run.cfg` reproduces a run exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::SynthConfig;
use crate::metrics::RougeVariant;
use crate::nn::{InitTrainConfig, ModelConfig};
use crate::ppo::PpoConfig;
use crate::preference::RmTrainConfig;

use super::HarnessError;

/// Everything a pipeline run depends on besides the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Global seed; every stage derives its own stream from it.
    pub seed: u64,
    pub synth_num_examples: usize,
    pub synth_max_history_turns: usize,
    pub embed_dim: usize,
    pub embed_hash_seed: u64,
    /// Retrieval depth l.
    pub top_l: usize,
    /// Weight of recent-context tokens in the extractive generator.
    pub context_weight: f64,
    /// ROUGE flavor behind m_G and m_q.
    pub rouge: RougeVariant,
    pub model: ModelConfig,
    pub init: InitTrainConfig,
    /// Sampling temperature for the q_s candidate during pair building.
    pub pairs_temperature: f64,
    /// Minimum chosen-rejected value gap for a pair to be kept; near-ties
    /// carry more metric noise than preference signal.
    pub pairs_min_margin: f64,
    pub rm: RmTrainConfig,
    /// Fraction of preference pairs (grouped by dialogue) used for training.
    pub rm_train_frac: f64,
    pub ppo: PpoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            synth_num_examples: 500,
            synth_max_history_turns: 3,
            embed_dim: crate::embedding::DEFAULT_DIM,
            embed_hash_seed: crate::embedding::DEFAULT_HASH_SEED,
            top_l: 5,
            context_weight: crate::gensim::DEFAULT_CONTEXT_WEIGHT,
            rouge: RougeVariant::RougeL,
            model: ModelConfig::default(),
            init: InitTrainConfig::default(),
            pairs_temperature: 1.2,
            pairs_min_margin: 0.2,
            rm: RmTrainConfig::default(),
            rm_train_frac: 0.8,
            ppo: PpoConfig::default(),
        }
    }
}

/// Dotted keys in dump order. `set` and `get` must both cover every entry;
/// the round-trip test keeps the three in sync.
pub const KEYS: [&str; 38] = [
    "seed",
    "synth.num_examples",
    "synth.max_history_turns",
    "embed.dim",
    "embed.hash_seed",
    "retrieval.top_l",
    "generator.context_weight",
    "metrics.rouge",
    "model.embed_dim",
    "model.hidden_dim",
    "model.attn_dim",
    "model.max_len",
    "init.epochs",
    "init.lr",
    "init.batch_size",
    "init.grad_clip",
    "pairs.temperature",
    "pairs.min_margin",
    "rm.epochs",
    "rm.lr",
    "rm.batch_size",
    "rm.grad_clip",
    "rm.train_frac",
    "ppo.lambda1",
    "ppo.lambda2",
    "ppo.lambda3",
    "ppo.mu",
    "ppo.eta",
    "ppo.gamma",
    "ppo.clip",
    "ppo.epochs",
    "ppo.batch_size",
    "ppo.lr",
    "ppo.value_lr",
    "ppo.grad_clip",
    "ppo.temperature",
    "ppo.total_steps",
    "ppo.checkpoint_every",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T, HarnessError> {
    value.trim().parse().map_err(|_| {
        HarnessError::Validation(format!("{key}: expected {what}, got `{}`", value.trim()))
    })
}

impl RunConfig {
    /// Sets one dotted key from its string value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        match key {
            "seed" => self.seed = parse(key, value, "an unsigned integer")?,
            "synth.num_examples" => {
                self.synth_num_examples = parse(key, value, "an unsigned integer")?
            }
            "synth.max_history_turns" => {
                self.synth_max_history_turns = parse(key, value, "an unsigned integer")?
            }
            "embed.dim" => self.embed_dim = parse(key, value, "an unsigned integer")?,
            "embed.hash_seed" => self.embed_hash_seed = parse(key, value, "an unsigned integer")?,
            "retrieval.top_l" => self.top_l = parse(key, value, "an unsigned integer")?,
            "generator.context_weight" => self.context_weight = parse(key, value, "a number")?,
            "metrics.rouge" => {
                let variant: RougeVariant = value
                    .trim()
                    .parse()
                    .map_err(|e: String| HarnessError::Validation(format!("{key}: {e}")))?;
                self.rouge = variant;
                self.ppo.rouge = variant;
            }
            "model.embed_dim" => self.model.embed_dim = parse(key, value, "an unsigned integer")?,
            "model.hidden_dim" => self.model.hidden_dim = parse(key, value, "an unsigned integer")?,
            "model.attn_dim" => self.model.attn_dim = parse(key, value, "an unsigned integer")?,
            "model.max_len" => self.model.max_len = parse(key, value, "an unsigned integer")?,
            "init.epochs" => self.init.epochs = parse(key, value, "an unsigned integer")?,
            "init.lr" => self.init.lr = parse(key, value, "a number")?,
            "init.batch_size" => self.init.batch_size = parse(key, value, "an unsigned integer")?,
            "init.grad_clip" => self.init.grad_clip = parse(key, value, "a number")?,
            "pairs.temperature" => self.pairs_temperature = parse(key, value, "a number")?,
            "pairs.min_margin" => self.pairs_min_margin = parse(key, value, "a number")?,
            "rm.epochs" => self.rm.epochs = parse(key, value, "an unsigned integer")?,
            "rm.lr" => self.rm.lr = parse(key, value, "a number")?,
            "rm.batch_size" => self.rm.batch_size = parse(key, value, "an unsigned integer")?,
            "rm.grad_clip" => self.rm.grad_clip = parse(key, value, "a number")?,
            "rm.train_frac" => self.rm_train_frac = parse(key, value, "a number")?,
            "ppo.lambda1" => self.ppo.lambda[0] = parse(key, value, "a number")?,
            "ppo.lambda2" => self.ppo.lambda[1] = parse(key, value, "a number")?,
            "ppo.lambda3" => self.ppo.lambda[2] = parse(key, value, "a number")?,
            "ppo.mu" => self.ppo.mu = parse(key, value, "a number")?,
            "ppo.eta" => self.ppo.eta = parse(key, value, "a number")?,
            "ppo.gamma" => self.ppo.gamma = parse(key, value, "a number")?,
            "ppo.clip" => self.ppo.clip = parse(key, value, "a number")?,
            "ppo.epochs" => self.ppo.epochs = parse(key, value, "an unsigned integer")?,
            "ppo.batch_size" => self.ppo.batch_size = parse(key, value, "an unsigned integer")?,
            "ppo.lr" => self.ppo.lr = parse(key, value, "a number")?,
            "ppo.value_lr" => self.ppo.value_lr = parse(key, value, "a number")?,
            "ppo.grad_clip" => self.ppo.grad_clip = parse(key, value, "a number")?,
            "ppo.temperature" => self.ppo.temperature = parse(key, value, "a number")?,
            "ppo.total_steps" => self.ppo.total_steps = parse(key, value, "an unsigned integer")?,
            "ppo.checkpoint_every" => {
                self.ppo.checkpoint_every = parse(key, value, "an unsigned integer")?
            }
            other => {
                return Err(HarnessError::Validation(format!(
                    "unknown config key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Current value of one dotted key, in the notation `set` accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let value = match key {
            "seed" => self.seed.to_string(),
            "synth.num_examples" => self.synth_num_examples.to_string(),
            "synth.max_history_turns" => self.synth_max_history_turns.to_string(),
            "embed.dim" => self.embed_dim.to_string(),
            "embed.hash_seed" => self.embed_hash_seed.to_string(),
            "retrieval.top_l" => self.top_l.to_string(),
            "generator.context_weight" => self.context_weight.to_string(),
            "metrics.rouge" => self.rouge.to_string(),
            "model.embed_dim" => self.model.embed_dim.to_string(),
            "model.hidden_dim" => self.model.hidden_dim.to_string(),
            "model.attn_dim" => self.model.attn_dim.to_string(),
            "model.max_len" => self.model.max_len.to_string(),
            "init.epochs" => self.init.epochs.to_string(),
            "init.lr" => self.init.lr.to_string(),
            "init.batch_size" => self.init.batch_size.to_string(),
            "init.grad_clip" => self.init.grad_clip.to_string(),
            "pairs.temperature" => self.pairs_temperature.to_string(),
            "pairs.min_margin" => self.pairs_min_margin.to_string(),
            "rm.epochs" => self.rm.epochs.to_string(),
            "rm.lr" => self.rm.lr.to_string(),
            "rm.batch_size" => self.rm.batch_size.to_string(),
            "rm.grad_clip" => self.rm.grad_clip.to_string(),
            "rm.train_frac" => self.rm_train_frac.to_string(),
            "ppo.lambda1" => self.ppo.lambda[0].to_string(),
            "ppo.lambda2" => self.ppo.lambda[1].to_string(),
            "ppo.lambda3" => self.ppo.lambda[2].to_string(),
            "ppo.mu" => self.ppo.mu.to_string(),
            "ppo.eta" => self.ppo.eta.to_string(),
            "ppo.gamma" => self.ppo.gamma.to_string(),
            "ppo.clip" => self.ppo.clip.to_string(),
            "ppo.epochs" => self.ppo.epochs.to_string(),
            "ppo.batch_size" => self.ppo.batch_size.to_string(),
            "ppo.lr" => self.ppo.lr.to_string(),
            "ppo.value_lr" => self.ppo.value_lr.to_string(),
            "ppo.grad_clip" => self.ppo.grad_clip.to_string(),
            "ppo.temperature" => self.ppo.temperature.to_string(),
            "ppo.total_steps" => self.ppo.total_steps.to_string(),
            "ppo.checkpoint_every" => self.ppo.checkpoint_every.to_string(),
            _ => return None,
        };
        Some(value)
    }

    /// Applies a `key = value` config file; lines starting with `#` and blank
    /// lines are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| {
            HarnessError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply_assignment(line).map_err(|e| {
                HarnessError::Validation(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
        }
        Ok(())
    }

    /// Applies one `key=value` override (the `--set` flag).
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<(), HarnessError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            HarnessError::Validation(format!("expected key=value, got `{assignment}`"))
        })?;
        self.set(key.trim(), value)
    }

    /// The effective configuration in the file format `apply_file` reads.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.get(key).expect("every registered key readable");
            writeln!(out, "{key} = {value}").expect("string write");
        }
        out
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            num_examples: self.synth_num_examples,
            max_history_turns: self.synth_max_history_turns,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |msg: String| HarnessError::Validation(msg);
        self.synth_config()
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.model.validate().map_err(invalid)?;
        self.init.validate().map_err(invalid)?;
        self.rm.validate().map_err(invalid)?;
        self.ppo.validate().map_err(invalid)?;
        if self.embed_dim == 0 {
            return Err(invalid("embed.dim must be positive".into()));
        }
        if self.top_l == 0 {
            return Err(invalid("retrieval.top_l must be positive".into()));
        }
        if !(self.context_weight >= 0.0 && self.context_weight.is_finite()) {
            return Err(invalid(
                "generator.context_weight must be a finite non-negative number".into(),
            ));
        }
        if !(self.pairs_temperature > 0.0) {
            return Err(invalid("pairs.temperature must be positive".into()));
        }
        if !(self.pairs_min_margin >= 0.0 && self.pairs_min_margin.is_finite()) {
            return Err(invalid(
                "pairs.min_margin must be a finite non-negative number".into(),
            ));
        }
        if !(self.rm_train_frac > 0.0 && self.rm_train_frac < 1.0) {
            return Err(invalid(
                "rm.train_frac must lie strictly between 0 and 1".into(),
            ));
        }
        debug_assert_eq!(self.rouge, self.ppo.rouge, "rouge settings drifted");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_dump_covers_every_key() {
        let config = RunConfig::default();
        config.validate().unwrap();
        let dump = config.dump();
        assert_eq!(dump.lines().count(), KEYS.len());
        for key in KEYS {
            assert!(
                dump.lines().any(|l| l.starts_with(&format!("{key} = "))),
                "{key} missing from dump"
            );
        }
    }

    #[test]
    fn dump_round_trips_through_the_parser() {
        let mut config = RunConfig::default();
        config.set("ppo.lr", "0.000141").unwrap();
        config.set("metrics.rouge", "rouge1").unwrap();
        config.set("rm.train_frac", "0.75").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, config.dump()).unwrap();
        let mut reparsed = RunConfig::default();
        reparsed.apply_file(&path).unwrap();
        assert_eq!(reparsed, config);
        assert_eq!(reparsed.dump(), config.dump());
    }

    #[test]
    fn every_key_is_settable_to_its_own_value() {
        let mut config = RunConfig::default();
        for key in KEYS {
            let value = config.get(key).unwrap();
            config
                .set(key, &value)
                .unwrap_or_else(|e| panic!("{key}: {e}"));
        }
        assert_eq!(config, RunConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_validation_errors() {
        let mut config = RunConfig::default();
        let err = config.set("nope.key", "1").unwrap_err();
        assert!(err.to_string().contains("unknown config key"));
        let err = config.set("ppo.lr", "fast").unwrap_err();
        assert!(err.to_string().contains("ppo.lr"));
        let err = config.apply_assignment("just-a-key").unwrap_err();
        assert!(err.to_string().contains("key=value"));
    }

    #[test]
    fn config_file_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "# fine\nseed = 7\nmystery = 3\n").unwrap();
        let mut config = RunConfig::default();
        let err = config.apply_file(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.cfg:3"), "{msg}");
        assert!(msg.contains("unknown config key"), "{msg}");
        // the earlier valid line already applied
        assert_eq!(config.seed, 7);
    }

    #[test]
    fn rouge_key_keeps_scorer_and_ppo_in_sync() {
        let mut config = RunConfig::default();
        config.set("metrics.rouge", "rouge2").unwrap();
        assert_eq!(config.rouge, RougeVariant::Rouge2);
        assert_eq!(config.ppo.rouge, RougeVariant::Rouge2);
    }

    #[test]
    fn validation_rejects_out_of_range_values() {
        let mut config = RunConfig::default();
        config.set("rm.train_frac", "1.0").unwrap();
        assert!(config.validate().is_err());
        let mut config = RunConfig::default();
        config.set("retrieval.top_l", "0").unwrap();
        assert!(config.validate().is_err());
        let mut config = RunConfig::default();
        config.set("ppo.gamma", "1.5").unwrap();
        assert!(config.validate().is_err());
    }
}
