//! The single JSON run configuration and its `--set key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use dftc::baseline::CostWeights;
use dftc::dataset::{AugmentationConfig, GenConfig, DEFAULT_H, DEFAULT_STEPS};
use dftc::eval::EvalConfig;
use dftc::nn::{Arch, TrainConfig};
use dftc::observability::{self, GramianConfig, ProbePolicy};
use dftc::Plant;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub plant: Plant,
    pub weights: CostWeights,
    pub gramian: GramianSection,
    pub dataset: DatasetSection,
    pub dftc: Arch,
    pub fnn: Arch,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            plant: Plant::default(),
            weights: CostWeights::default(),
            gramian: GramianSection::default(),
            dataset: DatasetSection::default(),
            dftc: Arch::dftc(),
            fnn: Arch::fnn(),
            train: TrainConfig::desk(),
            eval: EvalConfig::default(),
            paths: Paths::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GramianSection {
    pub epsilon: f64,
    pub horizon: f64,
    pub step: f64,
    /// Number of base points drawn from the initial-state box.
    pub base_points: usize,
    pub probe_policy: ProbePolicy,
    /// Additional sensor subsets (1-based indices) ranked after the
    /// standard seven.
    pub extra_configs: Vec<Vec<usize>>,
}

impl Default for GramianSection {
    fn default() -> Self {
        GramianSection {
            epsilon: observability::DEFAULT_EPSILON,
            horizon: observability::DEFAULT_HORIZON,
            step: observability::DEFAULT_STEP,
            base_points: observability::DEFAULT_BASE_POINTS,
            probe_policy: ProbePolicy::ZeroInput,
            extra_configs: Vec::new(),
        }
    }
}

impl GramianSection {
    pub fn build(&self, seed: u64) -> GramianConfig {
        GramianConfig {
            epsilon: self.epsilon,
            horizon: self.horizon,
            step: self.step,
            probe_policy: self.probe_policy,
            ..GramianConfig::sampled(seed, self.base_points)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n_traj: usize,
    pub h: f64,
    pub steps: usize,
    pub augmentation: AugmentationConfig,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            n_traj: 300,
            h: DEFAULT_H,
            steps: DEFAULT_STEPS,
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl DatasetSection {
    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            h: self.h,
            steps: self.steps,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Directory every command reads from and writes to.
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { out: "out".into() }
    }
}

impl Paths {
    pub fn gain(&self) -> PathBuf {
        self.out.join("gain.json")
    }
    pub fn ranking(&self) -> PathBuf {
        self.out.join("ranking.csv")
    }
    pub fn generated(&self) -> PathBuf {
        self.out.join("generated.csv")
    }
    pub fn augmented(&self) -> PathBuf {
        self.out.join("augmented.csv")
    }
    pub fn dataset(&self) -> PathBuf {
        self.out.join("dataset.csv")
    }
    pub fn model(&self, kind: &str) -> PathBuf {
        self.out.join(format!("{kind}_model.json"))
    }
    pub fn curve(&self, kind: &str) -> PathBuf {
        self.out.join(format!("{kind}_curve.csv"))
    }
    pub fn timing(&self) -> PathBuf {
        self.out.join("timing.json")
    }
}

/// Reads the config (or starts from defaults), applies `--set` overrides on
/// the JSON tree, then deserializes so overrides are checked like the file.
pub fn load(path: Option<&Path>, sets: &[String]) -> anyhow::Result<RunConfig> {
    let mut tree = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", p.display()))?
        }
        None => serde_json::to_value(RunConfig::default())?,
    };
    for s in sets {
        apply_override(&mut tree, s)?;
    }
    serde_json::from_value(tree).context("invalid configuration")
}

/// `a.b.c=v`; `v` is parsed as JSON when possible and kept as a string
/// otherwise.
pub fn apply_override(tree: &mut Value, assignment: &str) -> anyhow::Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("--set expects key=value, got {assignment:?}"))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        bail!("--set key {key:?} is malformed");
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    for part in key.split('.') {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                bail!("--set {key}: {part:?} is inside a non-object value");
            }
        }
        node = node
            .as_object_mut()
            .expect("object checked above")
            .entry(part)
            .or_insert(Value::Null);
    }
    *node = value;
    Ok(())
}
