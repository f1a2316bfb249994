//! JSON run configuration. Every section is optional; unknown keys are errors.

use std::path::{Path, PathBuf};

use paramfactor::encoder::FeaturizerConfig;
use paramfactor::synth::SynthConfig;
use paramfactor::train::TrainConfig;
use paramfactor::Family;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dims: Dims,
    pub family: FamilyName,
    pub featurizer: Featurizer,
    pub train: Train,
    pub synth: Synth,
    pub partition: Partition,
    pub predict: Predict,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dims: Dims::default(),
            family: FamilyName::Diagonal,
            featurizer: Featurizer::default(),
            train: Train::default(),
            synth: Synth::default(),
            partition: Partition::default(),
            predict: Predict::default(),
            paths: Paths::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Diagonal,
    LowRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dims {
    pub h: usize,
    /// Token embedding width; must match precomputed embeddings if used.
    pub e: usize,
    /// Padded class count; `null` uses the widest task schema.
    pub c: Option<usize>,
    /// Covariance rank for the low-rank family.
    pub k: usize,
    pub hidden: Vec<usize>,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            h: 8,
            e: 16,
            c: None,
            k: 2,
            hidden: vec![32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Featurizer {
    pub ngram_orders: Vec<usize>,
    pub window: usize,
    pub hash_seed: u64,
}

impl Default for Featurizer {
    fn default() -> Self {
        let d = FeaturizerConfig::default();
        Self {
            ngram_orders: d.ngram_orders.into_iter().collect(),
            window: d.window,
            hash_seed: d.hash_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Train {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub mc_samples: usize,
    pub patience: usize,
    pub validation_every: u64,
    pub max_steps: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub freeze_factor: bool,
    pub clip_norm: Option<f64>,
}

impl Default for Train {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            mc_samples: d.mc_samples,
            patience: d.patience,
            validation_every: d.validation_every,
            max_steps: d.max_steps,
            adam_beta1: d.adam_beta1,
            adam_beta2: d.adam_beta2,
            adam_eps: d.adam_eps,
            freeze_factor: d.freeze_factor,
            clip_norm: d.clip_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Synth {
    pub n_tasks: usize,
    pub n_langs: usize,
    pub class_counts: Vec<usize>,
    pub examples_per_cell: usize,
    pub sentence_length: usize,
    pub generator_hidden: Vec<usize>,
    pub head_scale: f64,
    pub feature_noise_std: f64,
}

impl Default for Synth {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            n_tasks: d.n_tasks,
            n_langs: d.n_langs,
            class_counts: d.class_counts,
            examples_per_cell: d.examples_per_cell,
            sentence_length: d.sentence_length,
            generator_hidden: d.generator_hidden,
            head_scale: d.head_scale,
            feature_noise_std: d.feature_noise_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Partition {
    pub hold_out_fraction: f64,
}

impl Default for Partition {
    fn default() -> Self {
        Self {
            hold_out_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Predict {
    pub bma_samples: usize,
}

impl Default for Predict {
    fn default() -> Self {
        Self {
            bma_samples: paramfactor::predict::DEFAULT_BMA_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Grid manifest; defaults to `<out>/grid.tsv` as written by `synth`.
    pub manifest: Option<PathBuf>,
    /// Language feature file for the NS baseline.
    pub features: Option<PathBuf>,
    /// Fixed partition file; otherwise one is drawn and saved by `train`.
    pub partition: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            manifest: None,
            features: None,
            partition: None,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Makes relative paths relative to the config file's directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.out);
        for p in [
            &mut self.paths.manifest,
            &mut self.paths.features,
            &mut self.paths.partition,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.train_config().validate().map_err(|e| e.to_string())?;
        self.synth_config().validate().map_err(|e| e.to_string())?;
        if self.dims.h == 0 || self.dims.e == 0 {
            return Err("dims.h and dims.e must be >= 1".into());
        }
        if self.family == FamilyName::LowRank && !(1..=self.dims.h).contains(&self.dims.k) {
            return Err(format!("dims.k = {} must lie in 1..=h", self.dims.k));
        }
        if self.predict.bma_samples == 0 {
            return Err("predict.bma_samples must be >= 1".into());
        }
        let f = self.partition.hold_out_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(format!(
                "partition.hold_out_fraction = {f} must lie in (0, 1)"
            ));
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        match self.family {
            FamilyName::Diagonal => Family::Diagonal,
            FamilyName::LowRank => Family::LowRank { k: self.dims.k },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            mc_samples: t.mc_samples,
            patience: t.patience,
            validation_every: t.validation_every,
            max_steps: t.max_steps,
            seed: self.seed,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            freeze_factor: t.freeze_factor,
            clip_norm: t.clip_norm,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            n_tasks: s.n_tasks,
            n_langs: s.n_langs,
            h: self.dims.h,
            e: self.dims.e,
            class_counts: s.class_counts.clone(),
            examples_per_cell: s.examples_per_cell,
            sentence_length: s.sentence_length,
            seed: self.seed,
            generator_hidden: s.generator_hidden.clone(),
            head_scale: s.head_scale,
            feature_noise_std: s.feature_noise_std,
        }
    }

    pub fn featurizer_config(&self) -> FeaturizerConfig {
        FeaturizerConfig {
            dim: self.dims.e,
            ngram_orders: self.featurizer.ngram_orders.iter().copied().collect(),
            window: self.featurizer.window,
            hash_seed: self.featurizer.hash_seed,
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.paths
            .manifest
            .clone()
            .unwrap_or_else(|| self.paths.out.join("grid.tsv"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
