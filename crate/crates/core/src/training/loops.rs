//! Pretraining on proxy tasks and fine-tuning for segmentation.

use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;

use super::config::TrainConfig;
use super::loss::{label_target, reconstruction_loss_grad, segmentation_loss_grad};
use super::optim::{clip_grad_norm, poly_lr, EarlyStopping, Goal, Sgd, Verdict};
use super::record::{EpochRecord, RunRecord, StopReason};
use crate::data::augment::{augment, AugmentParams};
use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::metrics::{combined_class_dice, foreground_groups};
use crate::grid::{Image, LabelMap};
use crate::model::{build_network, swap_head, to_tensor, Checkpoint, Grads, HeadMeta, Network, NetworkSpec, Tensor, TrainState};
use crate::scalar::Scalar;
use crate::seed;
use crate::ssltasks::{mixup, ProxySampler};
use crate::types::{SegTarget, SegmentationSample, TaskKind, TrainingSample};

/// Best network, the optimizer moments at the end of training, and history.
struct LoopResult<S> {
    best: Network<S>,
    moments: Grads<S>,
    record: RunRecord,
}

fn run_loop<S: Scalar>(
    config: &TrainConfig,
    mut net: Network<S>,
    goal: Goal,
    mut batch: impl FnMut(&Network<S>, usize, usize, &mut Grads<S>) -> Result<f64>,
    mut validate: impl FnMut(&Network<S>) -> Result<f64>,
) -> Result<LoopResult<S>> {
    let start = Instant::now();
    let mut opt = Sgd::new(&net, config.momentum, config.weight_decay);
    let mut stopper = EarlyStopping::new(config.early_stop_patience, goal);
    let mut best = net.clone();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    for epoch in 0..config.epochs_max {
        let lr = poly_lr(epoch, config.epochs_max, config.initial_lr);
        let mut total = 0.0;
        for it in 0..config.iterations_per_epoch {
            let mut grads = net.zero_grads();
            let loss = batch(&net, epoch, it, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Degenerate(format!("non-finite training loss at epoch {epoch}")));
            }
            if config.grad_clip > 0.0 {
                clip_grad_norm(&mut grads, config.grad_clip);
            }
            opt.step(&mut net, &grads, lr);
            total += loss;
        }
        let val = validate(&net)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / config.iterations_per_epoch as f64,
            val_metric: val,
            lr,
        });
        match stopper.update(epoch, val) {
            Verdict::Improved => best = net.clone(),
            Verdict::Stop => {
                stop_reason = StopReason::EarlyStopping;
                break;
            }
            Verdict::Continue => {}
        }
    }
    Ok(LoopResult {
        best,
        moments: opt.velocity,
        record: RunRecord {
            epochs,
            best_epoch: stopper.best_epoch,
            best_metric: stopper.best.unwrap_or(f64::NAN),
            stop_reason,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        },
    })
}

fn scale_into<S: Scalar>(t: &mut Tensor<S>, k: f64) {
    let k = S::of(k);
    t.data.iter_mut().for_each(|v| *v *= k);
}

/// Loss on one proxy sample; accumulates `weight`-scaled gradients.
pub fn proxy_step<S: Scalar>(net: &Network<S>, s: &TrainingSample<S>, weight: f64, grads: &mut Grads<S>) -> Result<f64> {
    let (y, cache) = net.forward_train(&to_tensor(&s.input))?;
    let target = to_tensor(&s.target);
    let (loss, g) = reconstruction_loss_grad(&y.data, &target.data)?;
    let mut dy = Tensor { data: g, ..y };
    scale_into(&mut dy, weight);
    net.backward(&cache, &dy, grads);
    Ok(loss)
}

/// Mean reconstruction loss of `net` on fixed samples.
pub fn proxy_loss<S: Scalar>(net: &Network<S>, samples: &[TrainingSample<S>]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let y = net.forward(&to_tensor(&s.input))?;
        total += reconstruction_loss_grad(&y.data, &to_tensor(&s.target).data)?.0;
    }
    Ok(total / samples.len() as f64)
}

/// Fixed validation samples: no augmentation, seed derived from `seed`.
pub fn proxy_validation_set<S: Scalar>(
    task: &TaskKind,
    val: &Dataset<S>,
    n: usize,
    seed: u64,
) -> Result<Vec<TrainingSample<S>>> {
    let sampler = ProxySampler::new(val, *task, AugmentParams::none(), seed::derive(seed, &[seed::tag("val")]))?;
    (0..n).map(|i| sampler.sample(0, i)).collect()
}

/// A trained reconstruction network with its optimizer moments and history.
pub struct ReconstructionRun<S> {
    pub network: Network<S>,
    pub moments: Grads<S>,
    pub record: RunRecord,
}

/// Trains a reconstruction network on the sample stream `sample(epoch,
/// index)`, early-stopping on the mean loss over `val_set`.
pub fn train_reconstruction<S: Scalar>(
    config: &TrainConfig,
    spec: &NetworkSpec,
    sample: impl Fn(usize, usize) -> Result<TrainingSample<S>>,
    val_set: &[TrainingSample<S>],
) -> Result<ReconstructionRun<S>> {
    config.validate()?;
    if val_set.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }
    let net = build_network::<S>(spec)?;
    let bs = config.batch_size;
    let result = run_loop(
        config,
        net,
        Goal::Minimize,
        |net, epoch, it, grads| {
            let mut total = 0.0;
            for b in 0..bs {
                let s = sample(epoch, it * bs + b)?;
                total += proxy_step(net, &s, 1.0 / bs as f64, grads)?;
            }
            Ok(total / bs as f64)
        },
        |net| proxy_loss(net, val_set),
    )?;
    Ok(ReconstructionRun {
        network: result.best,
        moments: result.moments,
        record: result.record,
    })
}

pub struct PretrainOutput<S> {
    pub network: Network<S>,
    pub checkpoint: Checkpoint,
    pub record: RunRecord,
}

/// Network spec for `task` on data with `modalities` channels.
pub fn proxy_spec(task: &TaskKind, modalities: usize, spec: &NetworkSpec) -> NetworkSpec {
    NetworkSpec {
        in_channels: task.input_channels(modalities),
        out_channels: modalities,
        ..spec.clone()
    }
}

/// Trains on `task` with the network's channel counts set from the task and
/// the dataset's modality count. The best-validation network is returned.
pub fn pretrain<S: Scalar>(
    config: &TrainConfig,
    task: &TaskKind,
    train: &Dataset<S>,
    val: &Dataset<S>,
    spec: &NetworkSpec,
) -> Result<PretrainOutput<S>> {
    config.validate()?;
    task.validate()?;
    let spec = proxy_spec(task, train.modalities(), spec);
    let (h, w) = train
        .image_size()
        .ok_or_else(|| Error::Data("empty training set".into()))?;
    spec.check_input_size(h, w)?;
    let sampler = ProxySampler::new(
        train,
        *task,
        config.augment.clone(),
        seed::derive(config.seed, &[seed::tag("pretrain")]),
    )?;
    let val_set = proxy_validation_set(task, val, config.val_samples, config.seed)?;
    let swap_root = seed::derive(config.seed, &[seed::tag("swap")]);
    let run = train_reconstruction(
        config,
        &spec,
        |epoch, index| {
            let s = sampler.sample(epoch, index)?;
            // Mixture order carries no information; present both orders.
            if s.mixtures() == 2
                && seed::rng_for(swap_root, &[epoch as u64, index as u64]).random_bool(0.5)
            {
                return s.swap_mixtures(0, 1);
            }
            Ok(s)
        },
        &val_set,
    )?;
    let checkpoint = Checkpoint::from_network(
        &run.network,
        HeadMeta {
            task: task.name().into(),
            in_channels: spec.in_channels,
            out_channels: spec.out_channels,
        },
        TrainState {
            epoch: run.record.best_epoch,
            seed: config.seed,
            best_metric: Some(run.record.best_metric),
        },
        Some(&run.moments),
    );
    Ok(PretrainOutput {
        network: run.network,
        checkpoint,
        record: run.record,
    })
}

/// How the segmentation network starts.
#[derive(Debug, Clone, PartialEq)]
pub enum FinetuneInit {
    /// Kaiming initialization (the baseline arm).
    Random,
    /// Pretrained body with fresh input and output heads.
    Pretrained(Checkpoint),
    /// Continue a trained segmentation model from the initial learning rate.
    Restart(Checkpoint),
}

/// Indices (into `pool`) of `budget` labeled patients, chosen by `seed`.
pub fn select_labeled(pool: usize, budget: usize, seed: u64) -> Result<Vec<usize>> {
    if budget > pool {
        return Err(Error::config(
            "training.labeled_budget",
            format!("budget {budget} exceeds the {pool} labeled patients available"),
        ));
    }
    if budget == 0 {
        return Err(Error::config("training.labeled_budget", "budget must be at least 1"));
    }
    let mut rng = seed::rng_for(seed, &[seed::tag("labeled")]);
    let mut chosen = sample_indices(&mut rng, pool, budget).into_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Per-pixel argmax of channel-last class scores.
pub fn argmax_labels<S: Scalar>(scores: &Image<S>) -> LabelMap {
    let (h, w, c) = scores.shape();
    let data = scores
        .as_slice()
        .chunks_exact(c)
        .map(|px| {
            let mut best = 0;
            for k in 1..c {
                if px[k] > px[best] {
                    best = k;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::from_vec(h, w, data).expect("shape matches")
}

pub fn predict_labels<S: Scalar>(net: &Network<S>, image: &Image<S>) -> Result<LabelMap> {
    Ok(argmax_labels(&net.forward_image(image)?))
}

/// Predicted and reference label stacks for every labeled patient.
pub fn predict_dataset<S: Scalar>(net: &Network<S>, ds: &Dataset<S>) -> Result<(Vec<Vec<LabelMap>>, Vec<Vec<LabelMap>>)> {
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for p in &ds.patients {
        if let Some(labels) = &p.labels {
            preds.push(p.slices.iter().map(|s| predict_labels(net, &s.pixels)).collect::<Result<_>>()?);
            gts.push(labels.clone());
        }
    }
    Ok((preds, gts))
}

/// Mean over foreground classes of the per-patient volume Dice.
pub fn mean_foreground_dice<S: Scalar>(net: &Network<S>, ds: &Dataset<S>) -> Result<f64> {
    let (preds, gts) = predict_dataset(net, ds)?;
    if preds.is_empty() {
        return Err(Error::Data("validation set has no labeled patients".into()));
    }
    let groups = foreground_groups(&ds.class_names);
    let r = combined_class_dice(&preds, &gts, &groups, ds.classes())?;
    Ok(r.mean[..groups.len()].iter().sum::<f64>() / groups.len() as f64)
}

pub struct FinetuneOutput<S> {
    pub network: Network<S>,
    pub record: RunRecord,
    /// Ids of the labeled patients trained on.
    pub labeled: Vec<String>,
}

/// Loss on one segmentation sample; accumulates `weight`-scaled gradients.
pub fn segmentation_step<S: Scalar>(
    net: &Network<S>,
    s: &SegmentationSample<S>,
    weight: f64,
    grads: &mut Grads<S>,
) -> Result<f64> {
    let (y, cache) = net.forward_train(&to_tensor(&s.image))?;
    let target = match &s.target {
        SegTarget::Hard(l) => label_target::<S>(l, s.classes())?,
        SegTarget::Soft(p) => to_tensor(p),
    };
    let (loss, mut dy) = segmentation_loss_grad(&y, &target)?;
    scale_into(&mut dy, weight);
    net.backward(&cache, &dy, grads);
    Ok(loss)
}

pub fn finetune<S: Scalar>(
    config: &TrainConfig,
    train: &Dataset<S>,
    val: &Dataset<S>,
    init: &FinetuneInit,
    spec: &NetworkSpec,
) -> Result<FinetuneOutput<S>> {
    config.validate()?;
    let (t, c) = (train.modalities(), train.classes());
    let pool: Vec<usize> = (0..train.len()).filter(|&i| train.patients[i].is_labeled()).collect();
    let budget = config.labeled_budget.unwrap_or(pool.len());
    let chosen: Vec<usize> = select_labeled(pool.len(), budget, config.seed)?
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let spec = NetworkSpec {
        in_channels: t,
        out_channels: c,
        ..spec.clone()
    };
    let head_seed = seed::derive(config.seed, &[seed::tag("head")]);
    let net = match init {
        FinetuneInit::Random => build_network::<S>(&NetworkSpec {
            seed: head_seed,
            ..spec.clone()
        })?,
        FinetuneInit::Pretrained(ck) => swap_head::<S>(ck, t, c, head_seed)?,
        FinetuneInit::Restart(ck) => {
            let net = ck.to_network::<S>()?;
            if (net.spec.in_channels, net.spec.out_channels) != (t, c) {
                return Err(Error::config(
                    "checkpoint",
                    "restart needs a segmentation checkpoint with matching channels",
                ));
            }
            net
        }
    };
    let (h, w) = train
        .image_size()
        .ok_or_else(|| Error::Data("empty training set".into()))?;
    net.spec.check_input_size(h, w)?;
    let slices: Vec<(usize, usize)> = chosen
        .iter()
        .flat_map(|&p| (0..train.patients[p].slices.len()).map(move |s| (p, s)))
        .collect();
    if slices.is_empty() {
        return Err(Error::Data("labeled patients contribute no slices".into()));
    }
    let root = seed::derive(config.seed, &[seed::tag("finetune")]);
    let draw = |rng: &mut seed::Rng| -> SegmentationSample<S> {
        let (p, s) = slices[rng.random_range(0..slices.len())];
        let pat = &train.patients[p];
        let labels = pat.labels.as_ref().expect("labeled")[s].clone();
        let (aug, l) = augment(&pat.slices[s], Some(&labels), &config.augment, rng);
        SegmentationSample {
            image: aug.pixels,
            target: SegTarget::Hard(l.expect("labels passed")),
            class_names: train.class_names.clone(),
        }
    };
    let bs = config.batch_size;
    let result = run_loop(
        config,
        net,
        Goal::Maximize,
        |net, epoch, it, grads| {
            let mut total = 0.0;
            for b in 0..bs {
                let mut rng = seed::rng_for(root, &[epoch as u64, it as u64, b as u64]);
                let mut sample = draw(&mut rng);
                if config.mixup {
                    let partner = draw(&mut rng);
                    sample = mixup(&sample, &partner, config.mixup_alpha, &mut rng)?;
                }
                total += segmentation_step(net, &sample, 1.0 / bs as f64, grads)?;
            }
            Ok(total / bs as f64)
        },
        |net| mean_foreground_dice(net, val),
    )?;
    Ok(FinetuneOutput {
        network: result.best,
        record: result.record,
        labeled: chosen.iter().map(|&i| train.patients[i].id.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_selection() {
        let a = select_labeled(30, 5, 4).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, select_labeled(30, 5, 4).unwrap());
        assert!(select_labeled(4, 5, 0).unwrap_err().is_config());
    }

    #[test]
    fn argmax_picks_largest_score() {
        let s = Image::from_vec(1, 2, 3, vec![0.1, 0.5, 0.2, 2.0, -1.0, 1.9]).unwrap();
        assert_eq!(argmax_labels(&s).as_slice(), &[1, 0]);
    }
}
