//! Diagnostic experiments: the noise sweep on ambiguous mixtures, the
//! source-count ablation, transfer comparisons and brain-mask overlap.

use serde::{Deserialize, Serialize};

use super::metrics::{combined_class_dice, foreground_groups, jaccard, mean_std, DiceResult, Group};
use crate::data::augment::{augment, AugmentParams};
use crate::data::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::grid::Image;
use crate::model::{Network, NetworkSpec};
use crate::scalar::Scalar;
use crate::seed::{self, Rng};
use crate::ssltasks::{assign_sources, make_ambiguous_sample, SourceStrategy};
use crate::training::{
    finetune, predict_dataset, pretrain, proxy_spec, proxy_validation_set, train_reconstruction,
    reconstruction_loss_grad, FinetuneInit, RunRecord, TrainConfig,
};
use crate::types::{MixtureSettings, TaskKind, TrainingSample};
use rand::Rng as _;

/// Patient-disjoint train / validation / test datasets.
#[derive(Debug, Clone)]
pub struct DataSplits<S> {
    pub train: Dataset<S>,
    pub val: Dataset<S>,
    pub test: Dataset<S>,
}

impl<S: Scalar> DataSplits<S> {
    pub fn new(ds: &Dataset<S>, split: &Split) -> Self {
        Self {
            train: ds.subset(&split.train),
            val: ds.subset(&split.val),
            test: ds.subset(&split.test),
        }
    }
}

/// Training budget and architecture shared by every arm of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmBudget {
    pub train: TrainConfig,
    pub spec: NetworkSpec,
    /// Held-out samples scored per arm.
    pub test_samples: usize,
}

/// What a reconstruction arm is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReconArm {
    /// One mixture of two cross-patient slices, the second blended with
    /// noise at level `lambda`.
    Ambiguous { lambda: f64 },
    Proxy { task: TaskKind },
}

/// Ambiguous sample `index` of `epoch` drawn from `ds`.
pub fn ambiguous_sample<S: Scalar>(
    ds: &Dataset<S>,
    lambda: f64,
    aug: Option<&AugmentParams>,
    root: u64,
    epoch: usize,
    index: usize,
) -> Result<TrainingSample<S>> {
    let mut rng = seed::rng_for(root, &[seed::tag("ambiguous"), epoch as u64, index as u64]);
    let src = assign_sources(SourceStrategy::CrossPatient, ds, 2, aug, &mut rng)?;
    make_ambiguous_sample(&src[0], &src[1], lambda, &mut rng)
}

fn arm_samples<S: Scalar>(arm: &ReconArm, ds: &Dataset<S>, n: usize, root: u64) -> Result<Vec<TrainingSample<S>>> {
    match arm {
        ReconArm::Ambiguous { lambda } => (0..n)
            .map(|i| ambiguous_sample(ds, *lambda, None, root, 0, i))
            .collect(),
        ReconArm::Proxy { task } => proxy_validation_set(task, ds, n, root),
    }
}

#[derive(Debug, Clone)]
pub struct ArmResult<S> {
    pub arm: ReconArm,
    /// Held-out reconstruction loss per test sample.
    pub errors: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub record: RunRecord,
    pub network: Network<S>,
    /// First test sample: `(input, prediction, target)`.
    pub example: (Image<S>, Image<S>, Image<S>),
}

/// Trains one arm and scores it on held-out samples from the test split.
pub fn reconstruction_arm<S: Scalar>(splits: &DataSplits<S>, arm: ReconArm, budget: &ArmBudget) -> Result<ArmResult<S>> {
    let t = splits.train.modalities();
    let spec = match arm {
        ReconArm::Ambiguous { lambda } => {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::config("experiment.lambda", format!("{lambda} outside [0, 1]")));
            }
            NetworkSpec {
                in_channels: t,
                out_channels: t,
                ..budget.spec.clone()
            }
        }
        ReconArm::Proxy { task } => {
            task.validate()?;
            proxy_spec(&task, t, &budget.spec)
        }
    };
    let seed = budget.train.seed;
    let val = arm_samples(&arm, &splits.val, budget.train.val_samples, seed::derive(seed, &[seed::tag("val")]))?;
    let test = arm_samples(&arm, &splits.test, budget.test_samples, seed::derive(seed, &[seed::tag("test")]))?;
    let train_root = seed::derive(seed, &[seed::tag("train")]);
    let run = match arm {
        ReconArm::Ambiguous { lambda } => train_reconstruction(
            &budget.train,
            &spec,
            |e, i| ambiguous_sample(&splits.train, lambda, Some(&budget.train.augment), train_root, e, i),
            &val,
        )?,
        ReconArm::Proxy { task } => {
            let sampler = crate::ssltasks::ProxySampler::new(&splits.train, task, budget.train.augment.clone(), train_root)?;
            train_reconstruction(&budget.train, &spec, |e, i| sampler.sample(e, i), &val)?
        }
    };
    let mut errors = Vec::with_capacity(test.len());
    let mut example = None;
    for s in &test {
        let y = run.network.forward_image(&s.input)?;
        errors.push(reconstruction_loss_grad(y.as_slice(), s.target.as_slice())?.0);
        if example.is_none() {
            example = Some((s.input.clone(), y, s.target.clone()));
        }
    }
    let (mean, std) = mean_std(&errors);
    Ok(ArmResult {
        arm,
        errors,
        mean,
        std,
        record: run.record,
        network: run.network,
        example: example.ok_or_else(|| Error::Data("no test samples".into()))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub error_mean: f64,
    pub error_std: f64,
    pub n: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct SolvabilityOutput<S> {
    pub rows: Vec<LambdaRow>,
    /// Per lambda, `(input, prediction, target)` for the first test sample.
    pub panels: Vec<(f64, (Image<S>, Image<S>, Image<S>))>,
}

/// Held-out error of the target reconstruction on ambiguous mixtures for
/// each noise level, under an identical budget per level.
pub fn solvability_experiment<S: Scalar>(
    splits: &DataSplits<S>,
    lambdas: &[f64],
    budget: &ArmBudget,
) -> Result<SolvabilityOutput<S>> {
    if let Some(bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::config("experiment.lambdas", format!("{bad} outside [0, 1]")));
    }
    let mut rows = Vec::new();
    let mut panels = Vec::new();
    for &lambda in lambdas {
        let r = reconstruction_arm(splits, ReconArm::Ambiguous { lambda }, budget)?;
        rows.push(LambdaRow {
            lambda,
            error_mean: r.mean,
            error_std: r.std,
            n: r.errors.len(),
            best_epoch: r.record.best_epoch,
        });
        panels.push((lambda, r.example));
    }
    Ok(SolvabilityOutput { rows, panels })
}

/// Per-patient Dice of `net` on the labeled patients of `ds`.
pub fn evaluate_segmentation<S: Scalar>(net: &Network<S>, ds: &Dataset<S>, groups: &[Group]) -> Result<DiceResult> {
    let (preds, gts) = predict_dataset(net, ds)?;
    if preds.is_empty() {
        return Err(Error::Data("no labeled patients to evaluate".into()));
    }
    combined_class_dice(&preds, &gts, groups, ds.classes())
}

/// Pretraining and fine-tuning budgets for transfer experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferBudget {
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub spec: NetworkSpec,
}

#[derive(Debug, Clone)]
pub struct TransferResult {
    pub pretrained: DiceResult,
    pub baseline: DiceResult,
    pub pretrain_record: RunRecord,
    pub pretrained_record: RunRecord,
    pub baseline_record: RunRecord,
}

/// Pretrains on `task`, then fine-tunes from the pretrained body and from
/// scratch with identical budgets, scoring both on the test split.
pub fn transfer_experiment<S: Scalar>(
    splits: &DataSplits<S>,
    task: &TaskKind,
    budget: &TransferBudget,
    groups: &[Group],
) -> Result<TransferResult> {
    let pre = pretrain(&budget.pretrain, task, &splits.train, &splits.val, &budget.spec)?;
    let with = finetune(
        &budget.finetune,
        &splits.train,
        &splits.val,
        &FinetuneInit::Pretrained(pre.checkpoint),
        &budget.spec,
    )?;
    let without = finetune(&budget.finetune, &splits.train, &splits.val, &FinetuneInit::Random, &budget.spec)?;
    Ok(TransferResult {
        pretrained: evaluate_segmentation(&with.network, &splits.test, groups)?,
        baseline: evaluate_segmentation(&without.network, &splits.test, groups)?,
        pretrain_record: pre.record,
        pretrained_record: with.record,
        baseline_record: without.record,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiVariant {
    Csi,
    Wsi,
    Dsi,
}

impl SiVariant {
    pub fn task(self, settings: MixtureSettings) -> TaskKind {
        match self {
            SiVariant::Csi => TaskKind::Csi(settings),
            SiVariant::Wsi => TaskKind::Wsi(settings),
            SiVariant::Dsi => TaskKind::Dsi(settings),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: SiVariant,
    pub n_pool: usize,
    pub n_per_mixture: usize,
    pub dice_mean: f64,
    pub dice_std: f64,
}

/// Downstream Dice for each `(N, N~)` pair (two mixtures) and variant.
/// Every pair is validated before any training starts.
pub fn sources_ablation<S: Scalar>(
    splits: &DataSplits<S>,
    settings: &[(usize, usize)],
    variants: &[SiVariant],
    budget: &TransferBudget,
) -> Result<Vec<AblationRow>> {
    let parsed: Vec<MixtureSettings> = settings
        .iter()
        .map(|&(n, k)| MixtureSettings::new(n, k, 2))
        .collect::<Result<_>>()?;
    let groups = foreground_groups(&splits.train.class_names);
    let mut rows = Vec::new();
    for &variant in variants {
        for s in &parsed {
            let task = variant.task(*s);
            let pre = pretrain(&budget.pretrain, &task, &splits.train, &splits.val, &budget.spec)?;
            let ft = finetune(
                &budget.finetune,
                &splits.train,
                &splits.val,
                &FinetuneInit::Pretrained(pre.checkpoint),
                &budget.spec,
            )?;
            let r = evaluate_segmentation(&ft.network, &splits.test, &groups)?;
            let per_patient: Vec<f64> = (0..r.n_images())
                .map(|i| {
                    let k = r.class_names.len();
                    r.scores[i * k..i * k + groups.len()].iter().sum::<f64>() / groups.len() as f64
                })
                .collect();
            let (m, sd) = mean_std(&per_patient);
            rows.push(AblationRow {
                variant,
                n_pool: s.n_pool,
                n_per_mixture: s.n_per_mixture,
                dice_mean: m,
                dice_std: sd,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapHistogram {
    /// `bins + 1` edges spanning `(0, 1]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Pairs with no overlap, excluded from `counts`.
    pub zero_count: usize,
    pub values: Vec<f64>,
}

/// Brain-mask Jaccard similarity of `n_pairs` augmented slice pairs from
/// distinct patients.
pub fn overlap_distribution<S: Scalar>(
    ds: &Dataset<S>,
    n_pairs: usize,
    bins: usize,
    aug: &AugmentParams,
    rng: &mut Rng,
) -> Result<OverlapHistogram> {
    if bins == 0 {
        return Err(Error::config("experiment.bins", "at least one bin is required"));
    }
    let mut values = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let src = assign_sources(SourceStrategy::CrossPatient, ds, 2, None, rng)?;
        let a = augment(&src[0].slice, None, aug, &mut seed::rng(rng.random())).0;
        let b = augment(&src[1].slice, None, aug, &mut seed::rng(rng.random())).0;
        values.push(jaccard(&a.brain_mask, &b.brain_mask)?);
    }
    Ok(histogram(values, bins))
}

/// Bins values in `(0, 1]` into equal-width bins; zeros are counted apart.
pub fn histogram(values: Vec<f64>, bins: usize) -> OverlapHistogram {
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    let mut zero_count = 0;
    for &v in &values {
        if v <= 0.0 {
            zero_count += 1;
        } else {
            let b = ((v * bins as f64).ceil() as usize).clamp(1, bins) - 1;
            counts[b] += 1;
        }
    }
    OverlapHistogram {
        edges,
        counts,
        zero_count,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_separates_zeros() {
        let h = histogram(vec![0.0, 0.05, 0.1, 0.55, 1.0, 0.0], 10);
        assert_eq!(h.zero_count, 2);
        assert_eq!(h.counts, vec![2, 0, 0, 0, 0, 1, 0, 0, 0, 1]);
    }
}
