//! Flat key=value configuration. CLI flags override file values; the env
//! var CAL_SEED is the seed default when neither is given. Unknown keys are
//! rejected.

use crate::CliError;
use cal_core::features::FeatureConfig;
use cal_core::labeling::SynthConfig;
use cal_core::nn::{LayerKind, ModelConfig, TrainConfig};
use std::path::PathBuf;

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub feature: FeatureConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub profile_path: Option<PathBuf>,
    pub seed: u64,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            feature: FeatureConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            profile_path: None,
            seed: 42,
        }
    }
}

impl CliConfig {
    /// Load defaults, then the optional config file, then CLI overrides.
    /// Seed precedence: --seed flag > config file > CAL_SEED > 42.
    pub fn resolve(
        config_file: Option<&PathBuf>,
        seed_flag: Option<u64>,
        layer_flag: Option<&str>,
        folds_flag: Option<usize>,
    ) -> Result<CliConfig, CliError> {
        let mut cfg = CliConfig::default();
        let mut seed_from_file = None;
        if let Ok(env_seed) = std::env::var("CAL_SEED") {
            let parsed = env_seed
                .parse::<u64>()
                .map_err(|_| CliError::user(format!("CAL_SEED is not an integer: {env_seed}")))?;
            cfg.apply_seed(parsed);
        }
        if let Some(path) = config_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::user(format!("cannot read config {}: {e}", path.display())))?;
            seed_from_file = cfg.apply_file(&text)?;
        }
        if let Some(seed) = seed_from_file {
            cfg.apply_seed(seed);
        }
        if let Some(seed) = seed_flag {
            cfg.apply_seed(seed);
        }
        if let Some(layer) = layer_flag {
            cfg.model.layer_kind = parse_layer(layer)?;
        }
        if let Some(folds) = folds_flag {
            cfg.train.folds = folds;
        }
        Ok(cfg)
    }

    fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.feature.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
        self.synth.seed = seed;
    }

    /// Apply `key=value` lines; `#` starts a comment. Returns the seed from
    /// the file, if present, so precedence can be resolved by the caller.
    fn apply_file(&mut self, text: &str) -> Result<Option<u64>, CliError> {
        let mut seed = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::user(format!("config line {}: missing '='", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            self.apply_key(key, value)
                .map_err(|msg| CliError::user(format!("config line {}: {msg}", lineno + 1)))?;
            if key == "seed" {
                seed = Some(value.parse::<u64>().unwrap());
            }
        }
        Ok(seed)
    }

    fn apply_key(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, String> {
            value.parse::<T>().map_err(|_| format!("invalid value {value:?} for {key}"))
        }
        fn boolean(value: &str, key: &str) -> Result<bool, String> {
            match value {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(format!("invalid boolean {value:?} for {key}")),
            }
        }
        fn dims(value: &str, key: &str) -> Result<Vec<usize>, String> {
            value.split(',').map(|v| num::<usize>(v.trim(), key)).collect()
        }
        match key {
            "seed" => {
                let _ = num::<u64>(value, key)?;
            }
            "profile" => self.profile_path = Some(PathBuf::from(value)),
            "feature.type" => self.feature.enable_type = boolean(value, key)?,
            "feature.walk" => self.feature.enable_walk = boolean(value, key)?,
            "feature.text" => self.feature.enable_text = boolean(value, key)?,
            "feature.metrics" => self.feature.enable_metrics = boolean(value, key)?,
            "feature.edge" => {
                let v = boolean(value, key)?;
                self.feature.enable_edge_features = v;
                self.model.use_edge_features = v;
            }
            "feature.walk_dim" => self.feature.walk_dim = num(value, key)?,
            "feature.text_dim" => self.feature.text_dim = num(value, key)?,
            "feature.walk.p" => self.feature.walk.p = num(value, key)?,
            "feature.walk.q" => self.feature.walk.q = num(value, key)?,
            "feature.walk.length" => self.feature.walk.walk_length = num(value, key)?,
            "feature.walk.per_node" => self.feature.walk.walks_per_node = num(value, key)?,
            "feature.skipgram.window" => self.feature.skipgram.window = num(value, key)?,
            "feature.skipgram.negatives" => self.feature.skipgram.negatives = num(value, key)?,
            "feature.skipgram.epochs" => self.feature.skipgram.epochs = num(value, key)?,
            "feature.skipgram.lr" => self.feature.skipgram.learning_rate = num(value, key)?,
            "model.layer" => self.model.layer_kind = parse_layer(value).map_err(|e| e.to_string())?,
            "model.layers" => self.model.gnn_layers = num(value, key)?,
            "model.hidden_dims" => self.model.hidden_dims = dims(value, key)?,
            "model.head_dims" => self.model.head_dims = dims(value, key)?,
            "model.dropout" => self.model.dropout = num(value, key)?,
            "model.heads" => self.model.attention_heads = num(value, key)?,
            "model.threshold" => self.model.threshold = num(value, key)?,
            "train.folds" => self.train.folds = num(value, key)?,
            "train.max_epochs" => self.train.max_epochs = num(value, key)?,
            "train.lr" => self.train.learning_rate = num(value, key)?,
            "train.weight_decay" => self.train.weight_decay = num(value, key)?,
            "train.scheduler_factor" => self.train.scheduler_factor = num(value, key)?,
            "train.scheduler_patience" => self.train.scheduler_patience = num(value, key)?,
            "train.early_stop_patience" => self.train.early_stop_patience = num(value, key)?,
            "synth.programs" => self.synth.programs = num(value, key)?,
            "synth.functions_min" => self.synth.functions_min = num(value, key)?,
            "synth.functions_max" => self.synth.functions_max = num(value, key)?,
            "synth.depth_min" => self.synth.chain_depth_min = num(value, key)?,
            "synth.depth_max" => self.synth.chain_depth_max = num(value, key)?,
            "synth.crypto_fraction" => self.synth.crypto_fraction = num(value, key)?,
            "synth.global_prob" => self.synth.global_prob = num(value, key)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn load_profile(&self) -> Result<cal_core::labeling::CryptoProfile, CliError> {
        match &self.profile_path {
            None => Ok(cal_core::labeling::CryptoProfile::openssl_default()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::user(format!("cannot read profile {}: {e}", path.display()))
                })?;
                cal_core::labeling::CryptoProfile::parse(&text)
                    .map_err(|e| CliError::user(format!("bad profile: {e}")))
            }
        }
    }
}

pub fn parse_layer(s: &str) -> Result<LayerKind, CliError> {
    match s {
        "gated" => Ok(LayerKind::Gated),
        "gat" => Ok(LayerKind::Gat),
        _ => Err(CliError::user(format!("unknown layer kind {s:?} (expected gated or gat)"))),
    }
}
