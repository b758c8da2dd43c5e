//! Proxy-task sample construction.

pub mod corrupt;
pub mod mixing;
pub mod mixup;

pub use corrupt::{
    bezier, bezier_intensity_shift, cells, inpaint_corrupt, inpaint_with, intensity_shift_with,
    pixel_shuffle_corrupt, superres_corrupt, superres_image,
};
pub use mixing::{
    assign_sources, gaussian_noise, make_ambiguous_sample, make_ambiguous_sample_with,
    make_si_sample, overlap_admissible, sample_plan, sample_si, sample_weights, SourceImage,
    SourceStrategy, WeightDraw,
};
pub use mixup::{mixup, mixup_lambda, mixup_with, DEFAULT_MIXUP_ALPHA};

use rand::seq::SliceRandom;

use crate::data::augment::{augment, AugmentParams};
use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;
use crate::types::{TaskKind, TrainingSample};

/// Number of distinct training pairs from `n_images` images with pools of
/// `n_sources`: pool choice times target choice within the pool.
pub fn combination_count(n_images: u64, n_sources: u64) -> u128 {
    if n_sources > n_images {
        return 0;
    }
    let k = n_sources.min(n_images - n_sources) as u128;
    let n = n_images as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c * n_sources as u128
}

/// Default minimum mask intersection (pixels) between target and sources.
pub const DEFAULT_MIN_OVERLAP: usize = 1;

/// Deterministic proxy sample stream over a training dataset. Sample
/// `(epoch, index)` depends only on the root seed, never on call order.
#[derive(Debug, Clone)]
pub struct ProxySampler<'a, S> {
    pub dataset: &'a Dataset<S>,
    pub task: TaskKind,
    pub augment: AugmentParams,
    pub min_overlap: usize,
    pub seed: u64,
    eligible: Vec<(usize, usize)>,
}

impl<'a, S: Scalar> ProxySampler<'a, S> {
    pub fn new(dataset: &'a Dataset<S>, task: TaskKind, augment: AugmentParams, seed: u64) -> Result<Self> {
        task.validate()?;
        let eligible: Vec<(usize, usize)> = dataset
            .patients
            .iter()
            .enumerate()
            .flat_map(|(p, pat)| {
                pat.slices
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.proxy_eligible)
                    .map(move |(i, _)| (p, i))
            })
            .collect();
        if eligible.is_empty() {
            return Err(Error::Sampling("no proxy-eligible slices in training data".into()));
        }
        Ok(Self {
            dataset,
            task,
            augment,
            min_overlap: DEFAULT_MIN_OVERLAP,
            seed,
            eligible,
        })
    }

    pub fn eligible_count(&self) -> usize {
        self.eligible.len()
    }

    /// Slice visited at `index` in `epoch` (a per-epoch permutation).
    fn slice_at(&self, epoch: usize, index: usize) -> (usize, usize) {
        let mut order: Vec<usize> = (0..self.eligible.len()).collect();
        order.shuffle(&mut seed::rng_for(self.seed, &[seed::tag("order"), epoch as u64]));
        self.eligible[order[index % order.len()]]
    }

    pub fn sample(&self, epoch: usize, index: usize) -> Result<TrainingSample<S>> {
        let strategy = match self.task {
            TaskKind::Csi(_) => Some(SourceStrategy::CrossPatient),
            TaskKind::Wsi(_) => Some(SourceStrategy::WithinPatient),
            TaskKind::Dsi(_) => Some(SourceStrategy::Denoising),
            _ => None,
        };
        if let (Some(strategy), Some(settings)) = (strategy, self.task.mixture()) {
            let mut rng = seed::rng_for(self.seed, &[seed::tag("si"), epoch as u64, index as u64]);
            return sample_si(
                strategy,
                &settings,
                self.dataset,
                Some(&self.augment),
                self.min_overlap,
                &mut rng,
            );
        }
        let (p, i) = self.slice_at(epoch, index);
        let original = &self.dataset.patients[p].slices[i];
        let mut rng = seed::rng(seed::sample_seed(self.seed, &original.patient_id, original.slice_index, epoch));
        let (slice, _) = augment(original, None, &self.augment, &mut rng);
        match &self.task {
            TaskKind::Inpaint(spec) => inpaint_corrupt(&slice, spec, &mut rng),
            TaskKind::PixelShuffle(spec) => pixel_shuffle_corrupt(&slice, spec, &mut rng),
            TaskKind::SuperRes(spec) => superres_corrupt(&slice, spec),
            TaskKind::IntensityShift => Ok(bezier_intensity_shift(&slice, None, &mut rng)),
            _ => unreachable!("mixture tasks handled above"),
        }
    }
}
