//! Mixup of labeled segmentation samples.

use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::Rng;
use crate::types::{SegTarget, SegmentationSample};

pub const DEFAULT_MIXUP_ALPHA: f64 = 0.2;

/// `lambda * a + (1 - lambda) * b` for images and label distributions.
pub fn mixup_with<S: Scalar>(
    a: &SegmentationSample<S>,
    b: &SegmentationSample<S>,
    lambda: f64,
) -> Result<SegmentationSample<S>> {
    if a.image.shape() != b.image.shape() {
        return Err(Error::Domain("mixup samples differ in shape".into()));
    }
    if a.class_names != b.class_names {
        return Err(Error::Domain("mixup samples differ in class set".into()));
    }
    if lambda == 1.0 {
        return Ok(a.clone());
    }
    if lambda == 0.0 {
        return Ok(b.clone());
    }
    let l = S::of(lambda);
    let mut image = a.image.map(|v| v * l);
    image.add_scaled(&b.image, S::of(1.0 - lambda))?;
    let mut dist = a.distribution().map(|v| v * l);
    dist.add_scaled(&b.distribution(), S::of(1.0 - lambda))?;
    Ok(SegmentationSample {
        image,
        target: SegTarget::Soft(dist),
        class_names: a.class_names.clone(),
    })
}

/// Draws `lambda ~ Beta(alpha, alpha)`.
pub fn mixup_lambda(alpha: f64, rng: &mut Rng) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config("training.mixup_alpha", format!("alpha must be positive, got {alpha}")));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::config("training.mixup_alpha", e.to_string()))?;
    Ok(beta.sample(rng))
}

pub fn mixup<S: Scalar>(
    a: &SegmentationSample<S>,
    b: &SegmentationSample<S>,
    alpha: f64,
    rng: &mut Rng,
) -> Result<SegmentationSample<S>> {
    let lambda = mixup_lambda(alpha, rng)?;
    mixup_with(a, b, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Image, LabelMap};

    fn sample(v: f64, label: u8) -> SegmentationSample<f64> {
        SegmentationSample::new(
            Image::from_vec(1, 1, 1, vec![v]).unwrap(),
            LabelMap::from_vec(1, 1, vec![label]).unwrap(),
            vec!["bg".into(), "fg".into()],
        )
        .unwrap()
    }

    #[test]
    fn endpoints_and_half() {
        let (a, b) = (sample(0.0, 0), sample(2.0, 1));
        assert_eq!(mixup_with(&a, &b, 1.0).unwrap(), a);
        assert_eq!(mixup_with(&a, &b, 0.0).unwrap(), b);
        let m = mixup_with(&a, &b, 0.5).unwrap();
        assert_eq!(m.image.as_slice(), &[1.0]);
        assert_eq!(m.distribution().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn alpha_must_be_positive() {
        let mut rng = crate::seed::rng(0);
        let (a, b) = (sample(0.0, 0), sample(2.0, 1));
        assert!(mixup(&a, &b, 0.0, &mut rng).unwrap_err().is_config());
        assert!(mixup(&a, &b, -1.0, &mut rng).unwrap_err().is_config());
        assert!(mixup(&a, &b, DEFAULT_MIXUP_ALPHA, &mut rng).is_ok());
    }
}
