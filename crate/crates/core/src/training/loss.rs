//! Reconstruction and segmentation losses with their gradients.

use crate::error::{Error, Result};
use crate::grid::{Image, LabelMap};
use crate::model::Tensor;
use crate::scalar::Scalar;
use crate::types::one_hot;

/// Additive smoothing in the soft Dice ratio.
pub const DICE_SMOOTH: f64 = 1.0;

/// `mean|d| + sqrt(mean d^2)` with `d = pred - target`, and its gradient
/// with respect to `pred`. The root term contributes no gradient at `d = 0`.
pub fn reconstruction_loss_grad<S: Scalar>(pred: &[S], target: &[S]) -> Result<(f64, Vec<S>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Domain(format!(
            "prediction has {} values, target {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let (mut l1, mut l2) = (0.0, 0.0);
    for (&p, &t) in pred.iter().zip(target) {
        let d = (p - t).as_f64();
        l1 += d.abs();
        l2 += d * d;
    }
    let rms = (l2 / n).sqrt();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = (p - t).as_f64();
            let g1 = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            let g2 = if rms > 0.0 { d / rms } else { 0.0 };
            S::of((g1 + g2) / n)
        })
        .collect();
    Ok((l1 / n + rms, grad))
}

pub fn reconstruction_loss<S: Scalar>(pred: &Image<S>, target: &Image<S>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Domain(format!(
            "prediction shape {:?} differs from target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    reconstruction_loss_grad(pred.as_slice(), target.as_slice()).map(|(l, _)| l)
}

/// Channel-wise softmax of a `C x H x W` score tensor.
pub fn softmax<S: Scalar>(scores: &Tensor<S>) -> Tensor<S> {
    let (c, hw) = (scores.c, scores.plane());
    let mut out = scores.clone();
    for p in 0..hw {
        let mx = (0..c).map(|k| scores.data[k * hw + p].as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = (0..c).map(|k| (scores.data[k * hw + p].as_f64() - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        for k in 0..c {
            out.data[k * hw + p] = S::of(e[k] / z);
        }
    }
    out
}

/// Cross-entropy plus soft Dice against a per-pixel class distribution
/// (`C x H x W`, channel-major), with the gradient with respect to the
/// scores. Dice averages the foreground classes (all classes when `C = 1`).
pub fn segmentation_loss_grad<S: Scalar>(scores: &Tensor<S>, target: &Tensor<S>) -> Result<(f64, Tensor<S>)> {
    if (scores.c, scores.h, scores.w) != (target.c, target.h, target.w) {
        return Err(Error::Domain("score and target shapes differ".into()));
    }
    let (c, hw) = (scores.c, scores.plane());
    let p = softmax(scores);
    let pf: Vec<f64> = p.data.iter().map(|v| v.as_f64()).collect();
    let yf: Vec<f64> = target.data.iter().map(|v| v.as_f64()).collect();
    let n = hw as f64;

    let mut ce = 0.0;
    for (&pv, &yv) in pf.iter().zip(&yf) {
        if yv > 0.0 {
            ce -= yv * pv.max(1e-300).ln();
        }
    }
    ce /= n;

    let classes: Vec<usize> = if c > 1 { (1..c).collect() } else { vec![0] };
    let k = classes.len() as f64;
    let mut dice_sum = 0.0;
    // Gradient of the Dice term with respect to probabilities.
    let mut gp = vec![0.0; c * hw];
    for &cl in &classes {
        let (pc, yc) = (&pf[cl * hw..(cl + 1) * hw], &yf[cl * hw..(cl + 1) * hw]);
        let inter: f64 = pc.iter().zip(yc).map(|(a, b)| a * b).sum();
        let union: f64 = pc.iter().sum::<f64>() + yc.iter().sum::<f64>();
        let num = 2.0 * inter + DICE_SMOOTH;
        let den = union + DICE_SMOOTH;
        dice_sum += num / den;
        for i in 0..hw {
            gp[cl * hw + i] = -(2.0 * yc[i] * den - num) / (den * den) / k;
        }
    }
    let dice_loss = 1.0 - dice_sum / k;

    let mut grad = Tensor::zeros(c, scores.h, scores.w);
    for i in 0..hw {
        let ysum: f64 = (0..c).map(|q| yf[q * hw + i]).sum();
        let dot: f64 = (0..c).map(|q| pf[q * hw + i] * gp[q * hw + i]).sum();
        for q in 0..c {
            let j = q * hw + i;
            let g_ce = (pf[j] * ysum - yf[j]) / n;
            let g_dice = pf[j] * (gp[j] - dot);
            grad.data[j] = S::of(g_ce + g_dice);
        }
    }
    Ok((ce + dice_loss, grad))
}

/// Channel-major one-hot target, rejecting labels outside `0..classes`.
pub fn label_target<S: Scalar>(labels: &LabelMap, classes: usize) -> Result<Tensor<S>> {
    if labels.max_label() as usize >= classes {
        return Err(Error::Domain(format!(
            "label {} outside declared {classes} classes",
            labels.max_label()
        )));
    }
    Ok(crate::model::to_tensor(&one_hot::<S>(labels, classes)))
}

/// Loss on channel-last scores against hard labels.
pub fn segmentation_loss<S: Scalar>(scores: &Image<S>, labels: &LabelMap) -> Result<f64> {
    let target = label_target::<S>(labels, scores.channels())?;
    segmentation_loss_grad(&crate::model::to_tensor(scores), &target).map(|(l, _)| l)
}

/// Loss on channel-last scores against a channel-last soft distribution.
pub fn segmentation_loss_soft<S: Scalar>(scores: &Image<S>, dist: &Image<S>) -> Result<f64> {
    segmentation_loss_grad(&crate::model::to_tensor(scores), &crate::model::to_tensor(dist)).map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstruction_closed_forms() {
        let t = Image::from_fn(3, 3, 2, |y, x, c| (y * x + c) as f64);
        assert_eq!(reconstruction_loss(&t, &t).unwrap(), 0.0);
        let p = t.map(|v| v + 1.0);
        assert!((reconstruction_loss(&p, &t).unwrap() - 2.0).abs() < 1e-12);
        assert!(reconstruction_loss(&p, &Image::zeros(3, 3, 1)).is_err());
    }

    #[test]
    fn uniform_two_class_cross_entropy() {
        let scores = Tensor::zeros(2, 2, 2);
        let labels = LabelMap::from_vec(2, 2, vec![0, 1, 0, 1]).unwrap();
        let target = label_target::<f64>(&labels, 2).unwrap();
        let (total, _) = segmentation_loss_grad(&scores, &target).unwrap();
        // Dice with p = 0.5 on a class covering half the pixels.
        let dice = (2.0 * 1.0 + DICE_SMOOTH) / (2.0 + 2.0 + DICE_SMOOTH);
        assert!((total - (std::f64::consts::LN_2 + 1.0 - dice)).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_has_near_zero_loss() {
        let labels = LabelMap::from_vec(2, 2, vec![0, 1, 2, 1]).unwrap();
        let target = label_target::<f64>(&labels, 3).unwrap();
        let scores = Tensor {
            c: 3,
            h: 2,
            w: 2,
            data: target.data.iter().map(|v| v * 60.0).collect(),
        };
        let (l, _) = segmentation_loss_grad(&scores, &target).unwrap();
        assert!(l.abs() < 1e-12, "{l}");
    }

    #[test]
    fn undeclared_label_is_rejected() {
        let labels = LabelMap::from_vec(1, 2, vec![0, 3]).unwrap();
        assert!(matches!(label_target::<f32>(&labels, 3), Err(Error::Domain(_))));
    }
}
