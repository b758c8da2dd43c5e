//! Preprocessed in-memory datasets and train/validation/test splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::augment::{augment, AugmentParams};
use crate::data::phantom::PhantomPatient;
use crate::data::volume::{
    crop_or_pad, crop_or_pad_labels, extract_slices, foreground_normalize, volume_mask, LabelVolume,
    Volume,
};
use crate::error::{Error, Result};
use crate::grid::{Image, LabelMap};
use crate::scalar::Scalar;
use crate::seed;
use crate::types::{MultiModalSlice, SegmentationSample, SourceRef};

/// How raw volumes are turned into network-ready slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessParams {
    /// Target in-plane size `(height, width)`.
    pub size: (usize, usize),
    /// Raw-intensity threshold for the brain mask.
    pub mask_threshold: f64,
    /// Minimum mask coverage for proxy sampling.
    pub min_proxy_coverage: f64,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self {
            size: (200, 200),
            mask_threshold: crate::data::volume::DEFAULT_MASK_THRESHOLD,
            min_proxy_coverage: crate::data::volume::MIN_PROXY_COVERAGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patient<S> {
    pub id: String,
    pub slices: Vec<MultiModalSlice<S>>,
    pub labels: Option<Vec<LabelMap>>,
}

impl<S: Scalar> Patient<S> {
    pub fn eligible(&self) -> impl Iterator<Item = &MultiModalSlice<S>> {
        self.slices.iter().filter(|s| s.proxy_eligible)
    }

    pub fn eligible_count(&self) -> usize {
        self.eligible().count()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }
}

/// Crop/pad, mask, normalize and slice one patient.
pub fn prepare_patient<S: Scalar>(
    volume: &Volume<S>,
    labels: Option<&LabelVolume>,
    params: &PreprocessParams,
) -> Result<Patient<S>> {
    let cropped = crop_or_pad(volume, params.size);
    let labels = labels.map(|l| crop_or_pad_labels(l, params.size));
    let mask = volume_mask(&cropped, params.mask_threshold);
    let normalized = foreground_normalize(&cropped, &mask)?;
    let pairs = extract_slices(&normalized, &mask, labels.as_ref(), params.min_proxy_coverage)?;
    let has_labels = labels.is_some();
    let (slices, label_maps): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(Patient {
        id: volume.patient_id.clone(),
        slices,
        labels: if has_labels {
            Some(label_maps.into_iter().map(|l| l.expect("labels present")).collect())
        } else {
            None
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub patients: Vec<Patient<S>>,
    pub modality_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl<S: Scalar> Dataset<S> {
    pub fn from_phantom(
        phantom: &[PhantomPatient<S>],
        class_names: Vec<String>,
        params: &PreprocessParams,
    ) -> Result<Self> {
        let first = phantom
            .first()
            .ok_or_else(|| Error::Data("empty phantom dataset".into()))?;
        let patients = phantom
            .iter()
            .map(|p| prepare_patient(&p.volume, Some(&p.labels), params))
            .collect::<Result<_>>()?;
        Ok(Self {
            patients,
            modality_names: first.volume.modality_names.clone(),
            class_names,
        })
    }

    pub fn modalities(&self) -> usize {
        self.modality_names.len()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn image_size(&self) -> Option<(usize, usize)> {
        self.patients
            .first()
            .and_then(|p| p.slices.first())
            .map(|s| s.size())
    }

    /// Patients at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            patients: indices.iter().map(|&i| self.patients[i].clone()).collect(),
            modality_names: self.modality_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn patient(&self, id: &str) -> Option<&Patient<S>> {
        self.patients.iter().find(|p| p.id == id)
    }

    pub fn slice(&self, patient_id: &str, slice_index: usize) -> Option<&MultiModalSlice<S>> {
        self.patient(patient_id)
            .and_then(|p| p.slices.iter().find(|s| s.slice_index == slice_index))
    }

    /// Every proxy-eligible slice, in patient then slice order.
    pub fn eligible_slices(&self) -> Vec<&MultiModalSlice<S>> {
        self.patients.iter().flat_map(|p| p.eligible()).collect()
    }

    /// Segmentation samples for every slice of every labeled patient.
    pub fn segmentation_samples(&self) -> Vec<SegmentationSample<S>> {
        let mut out = Vec::new();
        for p in &self.patients {
            if let Some(labels) = &p.labels {
                for (s, l) in p.slices.iter().zip(labels) {
                    out.push(SegmentationSample {
                        image: s.pixels.clone(),
                        target: crate::types::SegTarget::Hard(l.clone()),
                        class_names: self.class_names.clone(),
                    });
                }
            }
        }
        out
    }

    /// Resolves a provenance entry back to the image that was mixed.
    pub fn resolve(&self, r: &SourceRef, augment_params: &AugmentParams) -> Result<Image<S>> {
        match r {
            SourceRef::Slice {
                patient_id,
                slice_index,
                augment_seed,
            } => {
                let s = self.slice(patient_id, *slice_index).ok_or_else(|| {
                    Error::Data(format!("unknown source {patient_id}/{slice_index}"))
                })?;
                Ok(match augment_seed {
                    Some(seed) => {
                        let mut rng = seed::rng(*seed);
                        augment(s, None, augment_params, &mut rng).0.pixels
                    }
                    None => s.pixels.clone(),
                })
            }
            SourceRef::Noise { seed } => {
                let (h, w) = self
                    .image_size()
                    .ok_or_else(|| Error::Data("empty dataset".into()))?;
                Ok(crate::ssltasks::gaussian_noise(h, w, self.modalities(), *seed))
            }
        }
    }
}

/// Patient indices for each split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl Split {
    /// Random disjoint split of `n` patients; leftover patients are unused.
    pub fn random(n: usize, counts: (usize, usize, usize), seed: u64) -> Result<Self> {
        let (a, b, c) = counts;
        if a + b + c > n {
            return Err(Error::config(
                "dataset.split",
                format!("split {a}+{b}+{c} exceeds {n} patients"),
            ));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut seed::rng_for(seed, &[seed::tag("split")]));
        Ok(Self {
            train: idx[..a].to_vec(),
            val: idx[a..a + b].to_vec(),
            test: idx[a + b..a + b + c].to_vec(),
            seed,
        })
    }

    pub fn is_disjoint(&self) -> bool {
        let mut all: Vec<usize> = self
            .train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .copied()
            .collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == n
    }
}
