//! JSON dataset manifest for real (NIfTI) data.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::dataset::{prepare_patient, Dataset, PreprocessParams, Split};
use crate::data::nifti::{load_labels, load_volume};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Image files relative to the manifest root, in modality order.
    pub images: Vec<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    pub split: SplitKind,
    #[serde(default)]
    pub labeled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub seed: u64,
    pub modalities: Vec<String>,
    pub class_names: Vec<String>,
    pub patients: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if m.root.is_relative() {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            m.root = base.join(&m.root);
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for p in &self.patients {
            if !seen.insert(&p.id) {
                return Err(Error::Schema(format!(
                    "patient {} listed twice; splits must be disjoint",
                    p.id
                )));
            }
            if p.labeled && p.labels.is_none() {
                return Err(Error::Schema(format!("labeled patient {} has no label file", p.id)));
            }
            if p.images.is_empty() {
                return Err(Error::Schema(format!("patient {} lists no images", p.id)));
            }
        }
        if self.modalities.is_empty() {
            return Err(Error::Schema("manifest declares no modalities".into()));
        }
        Ok(())
    }

    /// Loads and preprocesses every patient; the split follows the manifest.
    pub fn load_dataset<S: Scalar>(&self, pre: &PreprocessParams) -> Result<(Dataset<S>, Split)> {
        let mut patients = Vec::with_capacity(self.patients.len());
        let mut split = Split {
            train: vec![],
            val: vec![],
            test: vec![],
            seed: self.seed,
        };
        for (i, entry) in self.patients.iter().enumerate() {
            let paths: Vec<PathBuf> = entry.images.iter().map(|p| self.root.join(p)).collect();
            let volume = load_volume::<S>(&paths, &entry.id, &self.modalities)?;
            let labels = match (&entry.labels, entry.labeled) {
                (Some(l), true) => Some(load_labels(&self.root.join(l))?),
                _ => None,
            };
            patients.push(prepare_patient(&volume, labels.as_ref(), pre)?);
            match entry.split {
                SplitKind::Train => split.train.push(i),
                SplitKind::Val => split.val.push(i),
                SplitKind::Test => split.test.push(i),
            }
        }
        Ok((
            Dataset {
                patients,
                modality_names: self.modalities.clone(),
                class_names: self.class_names.clone(),
            },
            split,
        ))
    }
}
