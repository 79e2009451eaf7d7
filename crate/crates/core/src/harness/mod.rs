// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment orchestration: configuration, run directories, the 1-hop and
//! 2-hop pipelines, and report emission.
//!
//! A run directory holds everything needed to repeat a run:
//!
//! ```text
//! config.toml      resolved configuration
//! seeds.json       root seed and every derived stream seed
//! manifest.json    sha256 of each dataset and checkpoint, plus the
//!                  command that emits each report
//! data/ lm/ acts/ sae/ metrics/ swap/ ablate/ twohop/ grok/ report/
//! ```
//!
//! Datasets and checkpoints are write-once: writing different bytes to an
//! existing artifact is an error.

mod config;
mod onehop;
mod report;
mod twohop;

pub use config::{ExperimentConfig, GrokSettings, MetricSettings, OneHopCorpus, SaeSettings, SwapSettings, Task, SCHEMA_VERSION};
pub use onehop::{
    collect_acts, datagen, evaluate_layer, evaluate_lm, load_lm_stage, run_ablation_suite, run_layer_sweep, run_swap, swap_sweep,
    traditional_contrast, traditional_sae, train_layer_sae, train_lm_stage, AblationRow, AblationTable, FragmentationContrast, LayerSweep,
    LmReport, MetricsReport, OneHopData,
};
pub use report::{emit_reports, parse_csv, ReportIndex};
pub use twohop::{
    first_crossing, run_grok_tracker, run_twohop_eval, train_twohop_lm, twohop_data, GrokPoint, GrokTrace, TwoHopData, TwoHopReport,
    GROK_CURVES,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselm::LmError;
use crate::corpus::CorpusError;
use crate::rng::derive_seed;
use crate::sae::SaeError;
use crate::steer::SteerError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("missing artifact {0}; run the stage that produces it first")]
    Missing(PathBuf),
    #[error("refusing to overwrite {0} with different contents")]
    Immutable(PathBuf),
    #[error("no activations for layer {0}")]
    MissingLayer(usize),
    #[error("config: {0}")]
    ConfigParse(#[from] toml::de::Error),
    #[error("config: {0}")]
    ConfigWrite(#[from] toml::ser::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Sae(#[from] SaeError),
    #[error(transparent)]
    Steer(#[from] SteerError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    /// Process exit code: 2 for bad input, 3 for a diverged or aborted run,
    /// 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_)
            | HarnessError::ConfigParse(_)
            | HarnessError::MissingLayer(_)
            | HarnessError::Missing(_)
            | HarnessError::Immutable(_) => 2,
            HarnessError::Lm(LmError::Config(_) | LmError::SequenceTooLong { .. })
            | HarnessError::Sae(SaeError::Config(_) | SaeError::Dim { .. } | SaeError::MissingLabels(_))
            | HarnessError::Corpus(
                CorpusError::Config(_)
                | CorpusError::NameCapacity { .. }
                | CorpusError::ChainCapacity { .. }
                | CorpusError::UnknownRelation(_)
                | CorpusError::EmptyList(_),
            )
            | HarnessError::Steer(SteerError::Alpha(_) | SteerError::Slot { .. } | SteerError::FreeSlot(_)) => 2,
            HarnessError::Lm(LmError::Divergence { .. })
            | HarnessError::Sae(SaeError::Divergence { .. })
            | HarnessError::Steer(SteerError::Lm(LmError::Divergence { .. })) => 3,
            _ => 1,
        }
    }
}

// ---------------------------------------------------------------------------
// Seeds

/// Per-consumer seeds, all derived from the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub root: u64,
    pub corpus: u64,
    pub lm: u64,
    /// Shared by every layer and ablation arm so they see one data order.
    pub sae: u64,
    pub swap: u64,
    pub twohop_corpus: u64,
    pub twohop_lm: u64,
}

impl Seeds {
    pub fn derive(root: u64) -> Self {
        Seeds {
            root,
            corpus: derive_seed(root, "harness/corpus"),
            lm: derive_seed(root, "harness/lm"),
            sae: derive_seed(root, "harness/sae"),
            swap: derive_seed(root, "harness/swap"),
            twohop_corpus: derive_seed(root, "harness/twohop-corpus"),
            twohop_lm: derive_seed(root, "harness/twohop-lm"),
        }
    }
}

// ---------------------------------------------------------------------------
// Run directory

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Relative path -> sha256 hex.
    pub checksums: BTreeMap<String, String>,
    /// Report file -> CLI verb that writes it.
    pub emitted_by: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunDir {
    /// Create (or re-enter) a run directory for `config`. An existing
    /// directory must hold the same resolved config.
    pub fn create(root: &Path, config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        fs::create_dir_all(root)?;
        let text = config.to_toml()?;
        let cfg_path = root.join("config.toml");
        if cfg_path.exists() {
            let old = ExperimentConfig::from_toml(&fs::read_to_string(&cfg_path)?)?;
            if old != config {
                return Err(HarnessError::Immutable(cfg_path));
            }
        } else {
            fs::write(&cfg_path, text)?;
        }
        let seeds = Seeds::derive(config.seed);
        let run = RunDir {
            root: root.to_path_buf(),
            config,
            seeds,
        };
        run.write_json("seeds.json", &run.seeds)?;
        if !root.join("manifest.json").exists() {
            run.write_json("manifest.json", &Manifest::default())?;
        }
        Ok(run)
    }

    /// Open a directory written by [`RunDir::create`].
    pub fn open(root: &Path) -> Result<Self> {
        let cfg_path = root.join("config.toml");
        if !cfg_path.exists() {
            return Err(HarnessError::Missing(cfg_path));
        }
        let config = ExperimentConfig::from_toml(&fs::read_to_string(&cfg_path)?)?;
        config.validate()?;
        let seeds = Seeds::derive(config.seed);
        Ok(RunDir {
            root: root.to_path_buf(),
            config,
            seeds,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    fn ensure_parent(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    /// Write-once artifact, recorded in the manifest.
    pub fn write_artifact(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.ensure_parent(rel)?;
        if p.exists() {
            if fs::read(&p)? != bytes {
                return Err(HarnessError::Immutable(p));
            }
        } else {
            fs::write(&p, bytes)?;
        }
        self.update_manifest(|m| {
            m.checksums.insert(rel.to_string(), sha256_hex(bytes));
        })
    }

    /// Write-once artifact produced by a function that writes to a path.
    pub fn write_artifact_with(&self, rel: &str, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let p = self.ensure_parent(rel)?;
        let tmp = p.with_extension("partial");
        f(&tmp)?;
        let bytes = fs::read(&tmp)?;
        fs::remove_file(&tmp)?;
        self.write_artifact(rel, &bytes)
    }

    /// Derived output (metrics, CSV, SVG); freely regenerated.
    pub fn write_output(&self, rel: &str, text: &str, verb: &str) -> Result<()> {
        let p = self.ensure_parent(rel)?;
        fs::write(p, text)?;
        self.update_manifest(|m| {
            m.emitted_by.insert(rel.to_string(), verb.to_string());
        })
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let p = self.ensure_parent(rel)?;
        fs::write(p, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T> {
        let p = self.path(rel);
        if !p.exists() {
            return Err(HarnessError::Missing(p));
        }
        Ok(serde_json::from_str(&fs::read_to_string(p)?)?)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        if self.exists("manifest.json") {
            self.read_json("manifest.json")
        } else {
            Ok(Manifest::default())
        }
    }

    fn update_manifest(&self, f: impl FnOnce(&mut Manifest)) -> Result<()> {
        let mut m = self.manifest()?;
        f(&mut m);
        self.write_json("manifest.json", &m)
    }

    /// Check every recorded checksum against the files on disk.
    pub fn verify_checksums(&self) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for (rel, sum) in self.manifest()?.checksums {
            match fs::read(self.path(&rel)) {
                Ok(bytes) if sha256_hex(&bytes) == sum => {}
                _ => bad.push(rel),
            }
        }
        Ok(bad)
    }

    /// Input file for a stage, or a [`HarnessError::Missing`] naming it.
    pub fn require(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(HarnessError::Missing(p))
        }
    }
}

// ---------------------------------------------------------------------------
// CSV helpers shared by the stages

/// Full-precision float cell; `{}` on f64 round-trips exactly.
pub(crate) fn cell(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn csv_line<I: IntoIterator<Item = String>>(cells: I) -> String {
    let mut s = cells.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}
