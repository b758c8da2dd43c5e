//! Paired two-sided t-test.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::metrics::DiceResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    pub mean_diff: f64,
    /// `NaN` when the differences have zero spread.
    pub t: f64,
    pub dof: usize,
    pub p: f64,
    /// Zero-variance differences; `p` is then 1 (no difference) or 0.
    pub degenerate: bool,
}

/// Two-sided survival probability `P(|T| >= |t|)` for Student's t with
/// `dof` degrees of freedom.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(dof / 2.0, 0.5, dof / (dof + t * t)).clamp(0.0, 1.0)
}

/// Test on the differences `a - b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Domain("a paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let dof = n - 1;
    if sd == 0.0 {
        return Ok(TTest {
            n,
            mean_diff: mean,
            t: f64::NAN,
            dof,
            p: if mean == 0.0 { 1.0 } else { 0.0 },
            degenerate: true,
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    Ok(TTest {
        n,
        mean_diff: mean,
        t,
        dof,
        p: t_two_sided_p(t, dof as f64),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AHigher,
    BHigher,
    Equal,
}

/// Per-class paired comparison of two methods scored on the same images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub class_names: Vec<String>,
    pub a: DiceResult,
    pub b: DiceResult,
    pub tests: Vec<TTest>,
    pub direction: Vec<Direction>,
}

pub fn compare(a: &DiceResult, b: &DiceResult) -> Result<ComparisonReport> {
    if a.class_names != b.class_names {
        return Err(Error::Domain("reports cover different classes".into()));
    }
    if a.n_images() != b.n_images() {
        return Err(Error::Domain("reports cover different image counts".into()));
    }
    let mut tests = Vec::new();
    let mut direction = Vec::new();
    for c in &a.class_names {
        let (x, y) = (a.column(c).expect("class"), b.column(c).expect("class"));
        let t = paired_ttest(&x, &y)?;
        direction.push(if t.mean_diff > 0.0 {
            Direction::AHigher
        } else if t.mean_diff < 0.0 {
            Direction::BHigher
        } else {
            Direction::Equal
        });
        tests.push(t);
    }
    Ok(ComparisonReport {
        class_names: a.class_names.clone(),
        a: a.clone(),
        b: b.clone(),
        tests,
        direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differences_one_two_three() {
        let r = paired_ttest(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert!((r.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!((r.p - 0.0742).abs() < 1e-3, "{}", r.p);
        let s = paired_ttest(&[0.0; 3], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.t, -r.t);
        assert_eq!(s.p, r.p);
    }

    #[test]
    fn degenerate_cases() {
        let same = paired_ttest(&[0.5, 0.7], &[0.5, 0.7]).unwrap();
        assert!(same.degenerate && same.p == 1.0);
        let shifted = paired_ttest(&[2.0, 3.0], &[1.0, 2.0]).unwrap();
        assert!(shifted.degenerate && shifted.p == 0.0);
        assert!(paired_ttest(&[1.0], &[2.0]).is_err());
        assert!(paired_ttest(&[1.0, 2.0], &[2.0]).is_err());
    }
}
