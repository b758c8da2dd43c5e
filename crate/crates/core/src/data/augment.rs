//! Random spatial augmentation: rotation, scaling, flips and elastic
//! deformation, applied identically to every channel, the brain mask and
//! optional labels.
//!
//! The transform is expressed as a backward map from output pixel to source
//! coordinate. Image channels are sampled bilinearly, masks and labels by
//! nearest neighbour; coordinates outside the frame clamp to the border.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::grid::{Image, LabelMap, Mask};
use crate::scalar::Scalar;
use crate::seed::Rng;
use crate::types::MultiModalSlice;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentParams {
    pub rotation_prob: f64,
    /// Maximum absolute rotation in degrees.
    pub rotation_deg: f64,
    pub scale_prob: f64,
    pub scale: (f64, f64),
    /// Flip probability, per axis.
    pub flip_prob: f64,
    pub elastic_prob: f64,
    /// Displacement magnitude in pixels.
    pub elastic_alpha: f64,
    /// Smoothing of the displacement field in pixels.
    pub elastic_sigma: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            rotation_prob: 0.2,
            rotation_deg: 15.0,
            scale_prob: 0.2,
            scale: (0.9, 1.1),
            flip_prob: 0.5,
            elastic_prob: 0.2,
            elastic_alpha: 2.0,
            elastic_sigma: 4.0,
        }
    }
}

impl AugmentParams {
    /// Every probability zero: augmentation is the identity.
    pub fn none() -> Self {
        Self {
            rotation_prob: 0.0,
            scale_prob: 0.0,
            flip_prob: 0.0,
            elastic_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation_prob == 0.0
            && self.scale_prob == 0.0
            && self.flip_prob == 0.0
            && self.elastic_prob == 0.0
    }
}

/// Dense displacement field `(dy, dx)` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    pub dy: Vec<f64>,
    pub dx: Vec<f64>,
}

/// A concrete spatial transform.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpatialTransform {
    /// Counter-clockwise as displayed (rows growing downwards), radians.
    pub rotation: f64,
    pub scale: f64,
    pub flip_x: bool,
    pub flip_y: bool,
    pub elastic: Option<Displacement>,
}

impl SpatialTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            ..Self::default()
        }
    }

    pub fn sample(params: &AugmentParams, height: usize, width: usize, rng: &mut Rng) -> Self {
        let mut t = Self::identity();
        if rng.random::<f64>() < params.rotation_prob {
            let max = params.rotation_deg.to_radians();
            t.rotation = rng.random_range(-max..=max);
        }
        if rng.random::<f64>() < params.scale_prob {
            t.scale = rng.random_range(params.scale.0..=params.scale.1);
        }
        t.flip_x = rng.random::<f64>() < params.flip_prob;
        t.flip_y = rng.random::<f64>() < params.flip_prob;
        if rng.random::<f64>() < params.elastic_prob && params.elastic_alpha > 0.0 {
            t.elastic = Some(elastic_field(
                height,
                width,
                params.elastic_alpha,
                params.elastic_sigma,
                rng,
            ));
        }
        t
    }

    /// Source coordinate `(y, x)` for output pixel `(y, x)`.
    fn source(&self, y: usize, x: usize, height: usize, width: usize) -> (f64, f64) {
        let cy = (height as f64 - 1.0) / 2.0;
        let cx = (width as f64 - 1.0) / 2.0;
        let mut py = y as f64;
        let mut px = x as f64;
        if let Some(field) = &self.elastic {
            let i = y * width + x;
            py += field.dy[i];
            px += field.dx[i];
        }
        let (ry, rx) = (py - cy, px - cx);
        // Inverse rotation then inverse scaling.
        let (s, c) = self.rotation.sin_cos();
        let mut sy = (c * ry + s * rx) / self.scale + cy;
        let mut sx = (-s * ry + c * rx) / self.scale + cx;
        if self.flip_y {
            sy = height as f64 - 1.0 - sy;
        }
        if self.flip_x {
            sx = width as f64 - 1.0 - sx;
        }
        (snap(sy), snap(sx))
    }

    pub fn apply_image<S: Scalar>(&self, img: &Image<S>) -> Image<S> {
        let (h, w, t) = img.shape();
        let mut out = Image::zeros(h, w, t);
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = self.source(y, x, h, w);
                let (y0, y1, fy) = bilinear_axis(sy, h);
                let (x0, x1, fx) = bilinear_axis(sx, w);
                let fy = S::of(fy);
                let fx = S::of(fx);
                let one = S::one();
                for c in 0..t {
                    let top = img.get(y0, x0, c) * (one - fx) + img.get(y0, x1, c) * fx;
                    let bot = img.get(y1, x0, c) * (one - fx) + img.get(y1, x1, c) * fx;
                    out.set(y, x, c, top * (one - fy) + bot * fy);
                }
            }
        }
        out
    }

    fn nearest(&self, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
        let (sy, sx) = self.source(y, x, h, w);
        (clamp_round(sy, h), clamp_round(sx, w))
    }

    pub fn apply_mask(&self, m: &Mask) -> Mask {
        let (h, w) = (m.height(), m.width());
        Mask::from_fn(h, w, |y, x| {
            let (sy, sx) = self.nearest(y, x, h, w);
            m.get(sy, sx)
        })
    }

    pub fn apply_labels(&self, l: &LabelMap) -> LabelMap {
        let (h, w) = (l.height(), l.width());
        let mut out = LabelMap::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = self.nearest(y, x, h, w);
                out.set(y, x, l.get(sy, sx));
            }
        }
        out
    }
}

/// Removes floating point dust so that exact grid mappings stay exact.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

fn bilinear_axis(v: f64, n: usize) -> (usize, usize, f64) {
    let max = (n - 1) as f64;
    let v = v.clamp(0.0, max);
    let lo = v.floor();
    let f = v - lo;
    let lo = lo as usize;
    (lo, (lo + 1).min(n - 1), f)
}

fn clamp_round(v: f64, n: usize) -> usize {
    v.round().clamp(0.0, (n - 1) as f64) as usize
}

fn elastic_field(h: usize, w: usize, alpha: f64, sigma: f64, rng: &mut Rng) -> Displacement {
    let mut draw = || -> Vec<f64> {
        let raw: Vec<f64> = (0..h * w).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let mut smooth = gaussian_blur(&raw, h, w, sigma);
        let peak = smooth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            for v in &mut smooth {
                *v *= alpha / peak;
            }
        }
        smooth
    };
    let dy = draw();
    let dx = draw();
    Displacement { dy, dx }
}

fn gaussian_blur(src: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let pass = |input: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let off = k as isize - radius;
                    let (yy, xx) = if horizontal {
                        (y as isize, (x as isize + off).clamp(0, w as isize - 1))
                    } else {
                        ((y as isize + off).clamp(0, h as isize - 1), x as isize)
                    };
                    acc += kv * input[yy as usize * w + xx as usize];
                }
                out[y * w + x] = acc;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

/// Applies one random transform to the slice (pixels and brain mask) and
/// optional labels.
pub fn augment<S: Scalar>(
    slice: &MultiModalSlice<S>,
    labels: Option<&LabelMap>,
    params: &AugmentParams,
    rng: &mut Rng,
) -> (MultiModalSlice<S>, Option<LabelMap>) {
    if params.is_identity() {
        return (slice.clone(), labels.cloned());
    }
    let (h, w) = slice.size();
    let t = SpatialTransform::sample(params, h, w, rng);
    apply_transform(&t, slice, labels)
}

pub fn apply_transform<S: Scalar>(
    t: &SpatialTransform,
    slice: &MultiModalSlice<S>,
    labels: Option<&LabelMap>,
) -> (MultiModalSlice<S>, Option<LabelMap>) {
    let out = MultiModalSlice {
        pixels: t.apply_image(&slice.pixels),
        brain_mask: t.apply_mask(&slice.brain_mask),
        patient_id: slice.patient_id.clone(),
        slice_index: slice.slice_index,
        proxy_eligible: slice.proxy_eligible,
    };
    (out, labels.map(|l| t.apply_labels(l)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn pattern() -> MultiModalSlice<f64> {
        let img = Image::from_fn(4, 4, 1, |y, x, _| (y * 4 + x) as f64);
        let mask = Mask::from_fn(4, 4, |y, x| y == 0 || x == 3);
        MultiModalSlice::new(img, mask, "p", 0).unwrap()
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let s = pattern();
        let labels = LabelMap::from_vec(4, 4, (0..16).map(|i| (i % 3) as u8).collect()).unwrap();
        let mut rng = seed::rng(1);
        let (a, l) = augment(&s, Some(&labels), &AugmentParams::none(), &mut rng);
        assert_eq!(a, s);
        assert_eq!(l.unwrap(), labels);
    }

    #[test]
    fn double_horizontal_flip_is_identity() {
        let s = pattern();
        let t = SpatialTransform {
            flip_x: true,
            ..SpatialTransform::identity()
        };
        let (once, _) = apply_transform(&t, &s, None);
        assert_ne!(once.pixels, s.pixels);
        assert_eq!(once.pixels.get(0, 0, 0), 3.0);
        let (twice, _) = apply_transform(&t, &once, None);
        assert_eq!(twice, s);
    }

    #[test]
    fn quarter_turn_on_4x4() {
        // Counter-clockwise as displayed: the top row becomes the left column,
        // read bottom to top.
        let s = pattern();
        let t = SpatialTransform {
            rotation: std::f64::consts::FRAC_PI_2,
            ..SpatialTransform::identity()
        };
        let (r, _) = apply_transform(&t, &s, None);
        let expected = [
            [3.0, 7.0, 11.0, 15.0],
            [2.0, 6.0, 10.0, 14.0],
            [1.0, 5.0, 9.0, 13.0],
            [0.0, 4.0, 8.0, 12.0],
        ];
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(r.pixels.get(y, x, 0), expected[y][x], "({y},{x})");
            }
        }
        // Mask follows the same mapping: top row + right column -> left column + top row.
        let m = &r.brain_mask;
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(m.get(y, x), x == 0 || y == 0);
            }
        }
    }

    #[test]
    fn labels_keep_their_value_set() {
        let labels =
            LabelMap::from_vec(4, 4, vec![0, 0, 1, 1, 0, 2, 2, 1, 0, 2, 2, 1, 0, 0, 1, 1]).unwrap();
        let s = pattern();
        let params = AugmentParams {
            rotation_prob: 1.0,
            scale_prob: 1.0,
            flip_prob: 0.5,
            elastic_prob: 1.0,
            ..AugmentParams::default()
        };
        for k in 0..50 {
            let mut rng = seed::rng(k);
            let (_, l) = augment(&s, Some(&labels), &params, &mut rng);
            let set = l.unwrap().label_set();
            assert!(set.iter().all(|v| [0, 1, 2].contains(v)));
        }
    }
}
