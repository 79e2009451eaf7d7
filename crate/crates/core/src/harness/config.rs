// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::baselm::LMConfig;
use crate::corpus::TwoHopConfig;
use crate::metrics::FeatureScope;
use crate::sae::{Ablation, SAEConfig};
use crate::steer::{PairingPolicy, PositionPolicy, ProbeConfig, SwapVariant};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Task {
    #[default]
    #[serde(rename = "1hop")]
    OneHop,
    #[serde(rename = "2hop")]
    TwoHop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneHopCorpus {
    pub n_profiles: usize,
    /// Biography renderings per profile in the LM corpus.
    pub bio_variants: usize,
}

impl Default for OneHopCorpus {
    fn default() -> Self {
        OneHopCorpus {
            n_profiles: 200,
            bio_variants: 5,
        }
    }
}

/// SAE hyperparameters; widths and the seed are filled in per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaeSettings {
    pub n_free: usize,
    /// Free-bank width for the 2-hop SAEs.
    pub twohop_n_free: usize,
    pub value_hidden: usize,
    pub lambda_recon: f64,
    pub lambda_sparse: f64,
    pub lambda_align: f64,
    pub lambda_ortho: f64,
    pub lambda_value: f64,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default)]
    pub sparse_full_code: bool,
}

impl Default for SaeSettings {
    fn default() -> Self {
        let c = SAEConfig::new(0, 512, 0, 0);
        SaeSettings {
            n_free: c.n_free,
            twohop_n_free: 2048,
            value_hidden: c.value_hidden,
            lambda_recon: c.lambda_recon,
            lambda_sparse: c.lambda_sparse,
            lambda_align: c.lambda_align,
            lambda_ortho: c.lambda_ortho,
            lambda_value: c.lambda_value,
            stage1_epochs: c.stage1_epochs,
            stage2_epochs: c.stage2_epochs,
            batch_size: c.batch_size,
            lr: c.lr,
            sparse_full_code: c.sparse_full_code,
        }
    }
}

impl SaeSettings {
    pub fn to_config(&self, d: usize, n_rel: usize, vocab_size: usize, seed: u64, ablation: Ablation) -> SAEConfig {
        SAEConfig {
            d,
            n_free: self.n_free,
            n_rel,
            vocab_size,
            value_hidden: self.value_hidden,
            lambda_recon: self.lambda_recon,
            lambda_sparse: self.lambda_sparse,
            lambda_align: self.lambda_align,
            lambda_ortho: self.lambda_ortho,
            lambda_value: self.lambda_value,
            stage1_epochs: self.stage1_epochs,
            stage2_epochs: self.stage2_epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed,
            ablation,
            sparse_full_code: self.sparse_full_code,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapSettings {
    pub alphas: Vec<f64>,
    pub pairing: PairingPolicy,
    pub positions: PositionPolicy,
    pub variant: SwapVariant,
    /// Persons sampled for 1-hop swap trials.
    pub n_subjects: usize,
    /// Chain questions sampled for 2-hop swap trials.
    pub n_chains: usize,
    pub max_new_tokens: usize,
}

impl Default for SwapSettings {
    fn default() -> Self {
        SwapSettings {
            alphas: vec![0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0],
            pairing: PairingPolicy::All,
            positions: PositionPolicy::PromptEndAndGenerated,
            variant: SwapVariant::Additive,
            n_subjects: 20,
            n_chains: 200,
            max_new_tokens: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrokSettings {
    /// LM epochs between checkpoints.
    pub checkpoint_every: usize,
    /// Stage-2 epochs for each checkpoint's SAE snapshot.
    pub snapshot_stage2_epochs: usize,
    /// Use the full stage-2 budget instead.
    pub full_budget: bool,
    pub threshold: f64,
}

impl Default for GrokSettings {
    fn default() -> Self {
        GrokSettings {
            checkpoint_every: 10,
            snapshot_stage2_epochs: 100,
            full_budget: false,
            threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSettings {
    pub top_k: usize,
    /// Scope for the concept-slot SAE's fragmentation profile.
    pub aligned_scope: FeatureScope,
    /// Scope for the stage-1-only SAE's fragmentation profile.
    pub traditional_scope: FeatureScope,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            top_k: 2,
            aligned_scope: FeatureScope::ConceptSlots,
            traditional_scope: FeatureScope::FullCode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub task: Task,
    pub seed: u64,
    /// Default output directory when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Layers to sweep.
    pub layers: Vec<usize>,
    /// Layer used for ablations and the fragmentation contrast.
    pub sae_layer: usize,
    /// Layer of the 2-hop LM read by the step-wise SAEs.
    pub twohop_layer: usize,
    pub ablations: Vec<Ablation>,
    pub one_hop: OneHopCorpus,
    pub two_hop: TwoHopConfig,
    /// `vocab_size` is ignored; it is fixed by the generated corpus.
    pub lm: LMConfig,
    /// LM settings for the 2-hop task.
    pub twohop_lm: LMConfig,
    pub sae: SaeSettings,
    pub swap: SwapSettings,
    pub probe: ProbeConfig,
    pub grok: GrokSettings,
    pub metrics: MetricSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let lm = LMConfig {
            d_model: 128,
            n_layers: 4,
            n_heads: 4,
            d_ff: 256,
            max_seq_len: 80,
            warmup_steps: 100,
            peak_lr: 2e-3,
            max_steps: 3000,
            ..LMConfig::default()
        };
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            task: Task::OneHop,
            seed: 1,
            out_dir: None,
            layers: vec![0, 1, 2, 3],
            sae_layer: 2,
            twohop_layer: 3,
            ablations: Ablation::ALL.to_vec(),
            one_hop: OneHopCorpus::default(),
            two_hop: TwoHopConfig::default(),
            twohop_lm: LMConfig {
                n_layers: 6,
                max_seq_len: 96,
                max_steps: 4000,
                ..lm.clone()
            },
            lm,
            sae: SaeSettings::default(),
            swap: SwapSettings::default(),
            probe: ProbeConfig::default(),
            grok: GrokSettings::default(),
            metrics: MetricSettings::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for (name, lm) in [("lm", &self.lm), ("twohop_lm", &self.twohop_lm)] {
            if lm.n_layers == 0 || lm.d_model == 0 || lm.n_heads == 0 || lm.d_model % lm.n_heads != 0 {
                return Err(invalid(format!("{name}: d_model must be a positive multiple of n_heads")));
            }
            if lm.max_steps == 0 || lm.batch_size == 0 {
                return Err(invalid(format!("{name}: max_steps and batch_size must be positive")));
            }
        }
        if self.layers.is_empty() {
            return Err(invalid("layers is empty"));
        }
        for &l in self.layers.iter().chain([&self.sae_layer]) {
            if l >= self.lm.n_layers {
                return Err(invalid(format!("layer {l} outside 0..{}", self.lm.n_layers)));
            }
        }
        if self.twohop_layer >= self.twohop_lm.n_layers {
            return Err(invalid("twohop_layer outside the 2-hop model"));
        }
        let mut ls = self.layers.clone();
        ls.sort_unstable();
        ls.dedup();
        if ls.len() != self.layers.len() {
            return Err(invalid("duplicate layer in layers"));
        }
        if self.one_hop.n_profiles == 0 || self.one_hop.bio_variants > 5 {
            return Err(invalid("one_hop: n_profiles > 0 and bio_variants <= 5"));
        }
        if self.sae.n_free == 0 || self.sae.twohop_n_free == 0 || self.sae.batch_size == 0 || !(self.sae.lr > 0.0) {
            return Err(invalid("sae: n_free, batch_size and lr must be positive"));
        }
        if self.swap.alphas.is_empty() || self.swap.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(invalid("swap.alphas must be non-empty, finite and non-negative"));
        }
        if self.swap.max_new_tokens == 0 || self.swap.n_subjects == 0 || self.swap.n_chains == 0 {
            return Err(invalid("swap: max_new_tokens, n_subjects and n_chains must be positive"));
        }
        if self.grok.checkpoint_every == 0 || !(0.0..=1.0).contains(&self.grok.threshold) {
            return Err(invalid("grok: checkpoint_every > 0 and threshold in [0, 1]"));
        }
        if self.metrics.top_k == 0 {
            return Err(invalid("metrics.top_k must be positive"));
        }
        Ok(())
    }
}
