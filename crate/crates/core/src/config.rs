//! Experiment configuration: one JSON document fully determines a run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::ClassifierConfig;
use crate::error::{Error, Result};
use crate::evaluation::LofoConfig;
use crate::interrogation::ScanConfig;
use crate::sim::channel::ChannelParams;
use crate::sim::trajectory::CohortProfile;
use crate::svm::SvmParams;
use crate::topology::FRUIT_COUNT;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    /// Loaded fruits, occupying ordinals 1..=fruits.
    pub fruits: u16,
    pub days: u16,
    pub cycles_per_day: u16,
    pub profile: CohortProfile,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            fruits: FRUIT_COUNT,
            days: 7,
            cycles_per_day: 4,
            profile: CohortProfile::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Moving-average window, in cycles.
    pub window: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { window: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub top_k_a: usize,
    pub top_k_bc: usize,
    /// Recompute the AUC ranking inside each cross-validation fold.
    pub per_fold: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            top_k_a: 5,
            top_k_bc: 10,
            per_fold: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalTolerances {
    /// Switching-day forgiveness, in days.
    pub day_tolerance: u16,
    /// Relative hardness dead-band around each threshold.
    pub sh_band: f64,
}

impl Default for EvalTolerances {
    fn default() -> Self {
        EvalTolerances {
            day_tolerance: 1,
            sh_band: 0.05,
        }
    }
}

/// Everything one run needs. A run is a pure function of this value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub cohort: CohortConfig,
    pub channel: ChannelParams,
    pub scan: ScanConfig,
    pub pipeline: PipelineConfig,
    pub selection: SelectionConfig,
    pub svm: SvmParams,
    pub classifier: ClassifierConfig,
    pub evaluation: EvalTolerances,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cohort.fruits == 0 || self.cohort.fruits > FRUIT_COUNT {
            return Err(Error::Config(format!(
                "cohort holds {} fruits, trolley capacity is 1..={FRUIT_COUNT}",
                self.cohort.fruits
            )));
        }
        if self.cohort.days == 0 {
            return Err(Error::Config("cohort needs at least one day".into()));
        }
        if self.cohort.cycles_per_day == 0 {
            return Err(Error::Config("cohort needs at least one cycle per day".into()));
        }
        if self.pipeline.window == 0 {
            return Err(Error::Config("moving-average window must be >= 1".into()));
        }
        if self.selection.top_k_a == 0 || self.selection.top_k_bc == 0 {
            return Err(Error::Config("feature selection must keep at least one feature".into()));
        }
        if !(0.0..=1.0).contains(&self.evaluation.sh_band) {
            return Err(Error::Config(format!(
                "hardness dead-band {} outside [0, 1]",
                self.evaluation.sh_band
            )));
        }
        self.channel.validate()?;
        self.scan.validate()?;
        self.svm.validate()?;
        Ok(())
    }

    /// Canonical serialized form; embedded in output bundles.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form, for provenance stamps.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lofo(&self) -> LofoConfig {
        LofoConfig {
            top_k_a: self.selection.top_k_a,
            top_k_bc: self.selection.top_k_bc,
            per_fold_selection: self.selection.per_fold,
            svm: self.svm.clone(),
            classifier: self.classifier.clone(),
        }
    }
}
