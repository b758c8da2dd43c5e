//! Experiment configuration: a TOML file with dataset, task, model,
//! training and eval sections, every field optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use srcid::data::{PhantomParams, PreprocessParams};
use srcid::eval::{Group, SiVariant};
use srcid::model::NetworkSpec;
use srcid::training::TrainConfig;
use srcid::{MixtureSettings, TaskKind};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    #[default]
    Phantom,
    Nifti,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    /// Phantom directory written by `generate-phantom`, or a NIfTI
    /// manifest. A phantom is generated in memory when absent.
    pub path: Option<PathBuf>,
    /// `(height, width)` after crop/pad; the phantom size or 200x200 when
    /// unset.
    pub image_size: Option<[usize; 2]>,
    /// Train, validation and test patient counts (phantom only; a manifest
    /// carries its own split).
    pub split: [usize; 3],
    pub split_seed: u64,
    pub phantom: PhantomParams,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Phantom,
            path: None,
            image_size: None,
            split: [20, 4, 6],
            split_seed: 0,
            phantom: PhantomParams::default(),
        }
    }
}

impl DatasetSection {
    pub fn preprocess(&self) -> PreprocessParams {
        let [h, w] = self.image_size.unwrap_or([200, 200]);
        PreprocessParams {
            size: (h, w),
            ..PreprocessParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Scored label groups; every foreground class on its own when empty.
    pub groups: Vec<Group>,
    pub lambdas: Vec<f64>,
    /// Held-out samples per reconstruction arm.
    pub test_samples: usize,
    /// `(N, N~)` pairs for the source-count ablation, two mixtures each.
    pub ablation_settings: Vec<[usize; 2]>,
    pub variants: Vec<SiVariant>,
    pub overlap_pairs: usize,
    pub overlap_bins: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            groups: vec![],
            lambdas: vec![0.1, 0.5, 0.9],
            test_samples: 32,
            ablation_settings: vec![[3, 2], [5, 3], [7, 4]],
            variants: vec![SiVariant::Csi],
            overlap_pairs: 1000,
            overlap_bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed. When set it replaces every section seed.
    pub seed: Option<u64>,
    pub dataset: DatasetSection,
    pub task: TaskKind,
    pub model: NetworkSpec,
    /// Pretraining and reconstruction-arm budget.
    pub training: TrainConfig,
    /// Fine-tuning budget; the training section when absent.
    pub finetune: Option<TrainConfig>,
    pub eval: EvalSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub labeled_budget: Option<usize>,
    pub mixup: bool,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // relative data paths are taken from the config's directory
        if let Some(p) = &cfg.dataset.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                cfg.dataset.path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    /// Applies overrides and fills derived defaults; the result is what
    /// gets persisted with each run.
    pub fn resolve(mut self, o: &Overrides) -> Self {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if let Some(root) = self.seed {
            self.dataset.phantom.seed = root;
            self.dataset.split_seed = root;
            self.model.seed = root;
            self.training.seed = root;
            if let Some(f) = &mut self.finetune {
                f.seed = root;
            }
        }
        let mut ft = self.finetune.take().unwrap_or_else(|| self.training.clone());
        if o.labeled_budget.is_some() {
            ft.labeled_budget = o.labeled_budget;
        }
        if o.mixup {
            ft.mixup = true;
        }
        self.finetune = Some(ft);
        if self.dataset.image_size.is_none() {
            let p = &self.dataset.phantom;
            self.dataset.image_size = Some(match self.dataset.kind {
                DatasetKind::Phantom if self.dataset.path.is_none() => [p.size, p.size],
                _ => [200, 200],
            });
        }
        self
    }

    pub fn finetune_config(&self) -> &TrainConfig {
        self.finetune.as_ref().unwrap_or(&self.training)
    }

    /// Cross-field checks, run before any data is loaded or trained on.
    pub fn validate(&self) -> CliResult<()> {
        let d = &self.dataset;
        match d.kind {
            DatasetKind::Phantom => {
                if d.path.is_none() {
                    d.phantom.validate()?;
                    let total: usize = d.split.iter().sum();
                    if total > d.phantom.n_patients {
                        return Err(field(
                            "dataset.split",
                            format!("{total} patients requested, phantom has {}", d.phantom.n_patients),
                        ));
                    }
                    let budget = self.finetune_config().labeled_budget.unwrap_or(0);
                    if budget > d.split[0] {
                        return Err(field(
                            "finetune.labeled_budget",
                            format!("{budget} exceeds the {} training patients", d.split[0]),
                        ));
                    }
                }
                if d.split[0] == 0 || d.split[1] == 0 || d.split[2] == 0 {
                    return Err(field("dataset.split", "every split needs at least one patient"));
                }
            }
            DatasetKind::Nifti => {
                if d.path.is_none() {
                    return Err(field("dataset.path", "a NIfTI dataset needs a manifest path"));
                }
            }
        }
        if let Some(p) = &d.path {
            if !p.exists() {
                return Err(field("dataset.path", format!("{} does not exist", p.display())));
            }
        }
        self.task.validate()?;
        let [h, w] = d.image_size.unwrap_or([200, 200]);
        self.model.validate()?;
        self.model.check_input_size(h, w)?;
        self.training.validate()?;
        self.finetune_config().validate()?;
        let e = &self.eval;
        if let Some(l) = e.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(field("eval.lambdas", format!("{l} outside [0, 1]")));
        }
        for &[n, k] in &e.ablation_settings {
            MixtureSettings::new(n, k, 2)
                .map_err(|err| field("eval.ablation_settings", format!("({n}, {k}): {err}")))?;
        }
        if e.overlap_bins == 0 {
            return Err(field("eval.overlap_bins", "need at least one bin"));
        }
        if e.test_samples == 0 {
            return Err(field("eval.test_samples", "need at least one sample"));
        }
        if d.kind == DatasetKind::Phantom && d.path.is_none() {
            let classes = d.phantom.classes as u8;
            for g in &e.groups {
                if let Some(l) = g.labels.iter().find(|&&l| l >= classes) {
                    return Err(field("eval.groups", format!("group {} uses undeclared label {l}", g.name)));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Runtime(format!("cannot serialize config: {e}")))
    }
}

fn field(name: &str, reason: impl Into<String>) -> CliError {
    CliError::Core(srcid::Error::config(name, reason))
}
