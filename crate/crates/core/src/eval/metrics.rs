//! Overlap metrics on binary masks and label maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LabelMap, Mask};

/// `2|A n B| / (|A| + |B|)` over boolean vectors; 1 when both are empty.
pub fn dice_flat(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut total) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += usize::from(x && y);
        total += usize::from(x) + usize::from(y);
    }
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

/// `|A n B| / |A u B|` over boolean vectors; 1 when both are empty.
pub fn jaccard_flat(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn check(a: &Mask, b: &Mask) -> Result<()> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::Domain("mask shapes differ".into()));
    }
    Ok(())
}

pub fn dice(pred: &Mask, gt: &Mask) -> Result<f64> {
    check(pred, gt)?;
    Ok(dice_flat(pred.as_slice(), gt.as_slice()))
}

pub fn jaccard(a: &Mask, b: &Mask) -> Result<f64> {
    check(a, b)?;
    Ok(jaccard_flat(a.as_slice(), b.as_slice()))
}

/// An evaluation class: the union of one or more raw label values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub labels: Vec<u8>,
}

/// Per-image, per-group Dice with summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceResult {
    pub class_names: Vec<String>,
    /// Row-major `n_images x n_classes`.
    pub scores: Vec<f64>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (`n - 1`); zero for a single image.
    pub std: Vec<f64>,
}

impl DiceResult {
    pub fn from_scores(class_names: Vec<String>, scores: Vec<f64>) -> Self {
        let k = class_names.len();
        let n = if k == 0 { 0 } else { scores.len() / k };
        let mut mean = vec![0.0; k];
        let mut std = vec![0.0; k];
        for c in 0..k {
            let col: Vec<f64> = (0..n).map(|i| scores[i * k + c]).collect();
            let (m, s) = mean_std(&col);
            mean[c] = m;
            std[c] = s;
        }
        Self {
            class_names,
            scores,
            mean,
            std,
        }
    }

    pub fn n_images(&self) -> usize {
        self.scores.len().checked_div(self.class_names.len()).unwrap_or(0)
    }

    /// Scores of one class across images.
    pub fn column(&self, class: &str) -> Option<Vec<f64>> {
        let k = self.class_names.len();
        let c = self.class_names.iter().position(|n| n == class)?;
        Some((0..self.n_images()).map(|i| self.scores[i * k + c]).collect())
    }
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, s)
}

pub const ALL_GROUP: &str = "All";

/// Dice per group on each image, plus an `All` column computed on the
/// concatenation of the groups' binary maps. Each image may be a stack of
/// slices (a volume); its maps are concatenated first.
pub fn combined_class_dice(
    preds: &[Vec<LabelMap>],
    gts: &[Vec<LabelMap>],
    groups: &[Group],
    n_classes: usize,
) -> Result<DiceResult> {
    for g in groups {
        if let Some(&bad) = g.labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::config(
                "eval.groups",
                format!("group {} references unknown class {bad}", g.name),
            ));
        }
    }
    if preds.len() != gts.len() {
        return Err(Error::Domain("prediction and ground-truth counts differ".into()));
    }
    let mut names: Vec<String> = groups.iter().map(|g| g.name.clone()).collect();
    let with_all = groups.len() > 1;
    if with_all {
        names.push(ALL_GROUP.into());
    }
    let mut scores = Vec::new();
    for (p, t) in preds.iter().zip(gts) {
        if p.len() != t.len() {
            return Err(Error::Domain("slice counts differ".into()));
        }
        let (mut all_p, mut all_t) = (Vec::new(), Vec::new());
        for g in groups {
            let mut mp = Vec::new();
            let mut mt = Vec::new();
            for (ps, ts) in p.iter().zip(t) {
                if (ps.height(), ps.width()) != (ts.height(), ts.width()) {
                    return Err(Error::Domain("label map shapes differ".into()));
                }
                mp.extend(ps.as_slice().iter().map(|l| g.labels.contains(l)));
                mt.extend(ts.as_slice().iter().map(|l| g.labels.contains(l)));
            }
            scores.push(dice_flat(&mp, &mt));
            all_p.extend(mp);
            all_t.extend(mt);
        }
        if with_all {
            scores.push(dice_flat(&all_p, &all_t));
        }
    }
    Ok(DiceResult::from_scores(names, scores))
}

/// One group per foreground class.
pub fn foreground_groups(class_names: &[String]) -> Vec<Group> {
    class_names
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, n)| Group {
            name: n.clone(),
            labels: vec![i as u8],
        })
        .collect()
}
