use std::collections::HashSet;

use proptest::prelude::*;
use srcid::eval::{dice_flat, jaccard_flat, paired_ttest, t_two_sided_p};
use srcid::seed::rng_for;
use srcid::ssltasks::mixing::moments;
use srcid::ssltasks::{
    bezier, cells, gaussian_noise, inpaint_corrupt, intensity_shift_with, make_si_sample,
    pixel_shuffle_corrupt, sample_plan, sample_weights, superres_corrupt, SourceImage,
};
use srcid::{validate_mixture_plan, CorruptionSpec, Image, Mask, MixtureSettings, MultiModalSlice, SourceRef};
use statrs::function::gamma::ln_gamma;

fn image(h: usize, w: usize, t: usize, vals: &[f64]) -> Image<f64> {
    Image::from_fn(h, w, t, |y, x, c| vals[((y * w + x) * t + c) % vals.len()])
}

fn slice(img: Image<f64>) -> MultiModalSlice<f64> {
    let (h, w, _) = img.shape();
    MultiModalSlice::new(img, Mask::full(h, w), "p", 0).unwrap()
}

const SETTINGS: [(usize, usize, usize); 5] = [(1, 1, 1), (3, 2, 2), (5, 3, 2), (7, 4, 2), (4, 2, 3)];

#[test]
fn sampled_plans_always_validate() {
    for (n, k, m) in SETTINGS {
        let s = MixtureSettings::new(n, k, m).unwrap();
        for seed in 0..10_000u64 {
            let plan = sample_plan(&s, &mut rng_for(seed, &[n as u64])).unwrap();
            let v = validate_mixture_plan(&plan);
            assert!(v.is_empty(), "seed {seed}, settings {s:?}: {v:?}");
        }
    }
}

proptest! {
    #[test]
    fn mixtures_stay_within_source_range_and_remix(
        setting in 0usize..SETTINGS.len(),
        seed in any::<u64>(),
        vals in prop::collection::vec(-5.0f64..5.0, 16..64),
        t in 1usize..3,
    ) {
        let (n, k, m) = SETTINGS[setting];
        let plan = sample_plan(&MixtureSettings::new(n, k, m).unwrap(), &mut rng_for(seed, &[])).unwrap();
        let sources: Vec<SourceImage<f64>> = (0..n)
            .map(|i| {
                let shifted: Vec<f64> = vals.iter().map(|v| v * (i as f64 + 1.0).sqrt() - i as f64).collect();
                let mut s = slice(image(4, 5, t, &shifted));
                s.slice_index = i;
                SourceImage { origin: s.source_ref(), slice: s }
            })
            .collect();
        let sample = make_si_sample(&sources, &plan).unwrap();
        for (r, row) in plan.weights.iter().enumerate() {
            for y in 0..4 {
                for x in 0..5 {
                    for c in 0..t {
                        let used: Vec<f64> = row
                            .iter()
                            .zip(&sources)
                            .filter(|(w, _)| **w > 0.0)
                            .map(|(_, s)| s.slice.pixels.get(y, x, c))
                            .collect();
                        let lo = used.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = used.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let v = sample.input.get(y, x, r * t + c);
                        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "{v} outside [{lo}, {hi}]");
                    }
                }
            }
        }
        prop_assert_eq!(&sample.target, &sources[0].slice.pixels);
        let remixed = sample
            .remix(|r: &SourceRef| Ok(sources.iter().find(|s| &s.origin == r).unwrap().slice.pixels.clone()))
            .unwrap();
        for (a, b) in remixed.as_slice().iter().zip(sample.input.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn inpaint_keeps_or_zeroes_whole_cells(
        h in 3usize..12, w in 3usize..12, t in 1usize..3,
        gh in 1usize..4, gw in 1usize..4, gamma in 0.0f64..=1.0, seed in any::<u64>(),
        vals in prop::collection::vec(0.5f64..5.0, 8..32),
    ) {
        let img = image(h, w, t, &vals);
        let spec = CorruptionSpec::new((gh.min(h), gw.min(w)), gamma).unwrap();
        let s = inpaint_corrupt(&slice(img.clone()), &spec, &mut rng_for(seed, &[])).unwrap();
        prop_assert_eq!(s.input.shape(), img.shape());
        prop_assert_eq!(&s.target, &img);
        for (y0, x0, ch, cw) in cells(h, w, spec.grid) {
            let zeroed = s.input.get(y0, x0, 0) == 0.0;
            for y in y0..y0 + ch {
                for x in x0..x0 + cw {
                    for c in 0..t {
                        let want = if zeroed { 0.0 } else { img.get(y, x, c) };
                        prop_assert_eq!(s.input.get(y, x, c), want);
                    }
                }
            }
        }
    }

    #[test]
    fn pixel_shuffle_preserves_cell_contents(
        h in 2usize..12, w in 2usize..12, t in 1usize..3,
        k in 1usize..4, gamma in 0.0f64..=1.0, seed in any::<u64>(),
        vals in prop::collection::vec(-3.0f64..3.0, 8..40),
    ) {
        let k = k.min(h).min(w);
        let img = image(h, w, t, &vals);
        let spec = CorruptionSpec::new((k, k), gamma).unwrap();
        let s = pixel_shuffle_corrupt(&slice(img.clone()), &spec, &mut rng_for(seed, &[])).unwrap();
        prop_assert_eq!(&s.target, &img);
        for (y0, x0, ch, cw) in cells(h, w, spec.grid) {
            for c in 0..t {
                let collect = |im: &Image<f64>| {
                    let mut v: Vec<f64> = (y0..y0 + ch)
                        .flat_map(|y| (x0..x0 + cw).map(move |x| (y, x)))
                        .map(|(y, x)| im.get(y, x, c))
                        .collect();
                    v.sort_by(f64::total_cmp);
                    v
                };
                prop_assert_eq!(collect(&s.input), collect(&img));
            }
        }
        let none = CorruptionSpec::new((k, k), 0.0).unwrap();
        let id = pixel_shuffle_corrupt(&slice(img.clone()), &none, &mut rng_for(seed, &[])).unwrap();
        prop_assert_eq!(&id.input, &img);
    }

    #[test]
    fn superres_and_intensity_shift_keep_shape_and_target(
        h in 2usize..10, w in 2usize..10, t in 1usize..3, g in 1usize..4,
        p in prop::array::uniform4(0.0f64..1.0),
        vals in prop::collection::vec(-3.0f64..3.0, 8..40),
    ) {
        let img = image(h, w, t, &vals);
        let spec = CorruptionSpec::new((g.min(h), g.min(w)), 1.0).unwrap();
        let s = superres_corrupt(&slice(img.clone()), &spec).unwrap();
        prop_assert_eq!(s.input.shape(), img.shape());
        prop_assert_eq!(&s.target, &img);
        let one = CorruptionSpec::new((1, 1), 1.0).unwrap();
        prop_assert_eq!(&superres_corrupt(&slice(img.clone()), &one).unwrap().input, &img);
        let shifted = intensity_shift_with(&img, &Mask::full(h, w), p);
        prop_assert_eq!(shifted.shape(), img.shape());
        prop_assert_eq!(bezier(0.0, p), p[0]);
        prop_assert_eq!(bezier(1.0, p), p[3]);
    }

    #[test]
    fn dice_and_jaccard_match_set_counting(bits in prop::collection::vec(any::<(bool, bool)>(), 64)) {
        let a: Vec<bool> = bits.iter().map(|b| b.0).collect();
        let b: Vec<bool> = bits.iter().map(|b| b.1).collect();
        let sa: HashSet<usize> = (0..64).filter(|&i| a[i]).collect();
        let sb: HashSet<usize> = (0..64).filter(|&i| b[i]).collect();
        let inter = sa.intersection(&sb).count() as f64;
        let union = sa.union(&sb).count() as f64;
        let d = if sa.is_empty() && sb.is_empty() { 1.0 } else { 2.0 * inter / (sa.len() + sb.len()) as f64 };
        let j = if union == 0.0 { 1.0 } else { inter / union };
        prop_assert_eq!(dice_flat(&a, &b), d);
        prop_assert_eq!(jaccard_flat(&a, &b), j);
        let jj = jaccard_flat(&a, &b);
        prop_assert!((dice_flat(&a, &b) - 2.0 * jj / (1.0 + jj)).abs() < 1e-12);
    }
}

/// Two-sided tail from Simpson integration of the Student-t density.
fn t_tail_by_integration(t: f64, dof: f64) -> f64 {
    let log_c = ln_gamma((dof + 1.0) / 2.0) - ln_gamma(dof / 2.0) - 0.5 * (dof * std::f64::consts::PI).ln();
    let pdf = |x: f64| (log_c - (dof + 1.0) / 2.0 * (1.0 + x * x / dof).ln()).exp();
    let n = 20_000;
    let b = t.abs();
    let h = b / n as f64;
    let mut s = pdf(0.0) + pdf(b);
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

#[test]
fn t_distribution_matches_numerical_integration() {
    let mut rng = rng_for(7, &[]);
    use rand::Rng as _;
    for _ in 0..100 {
        let dof = rng.random_range(1..30) as f64;
        let t = rng.random_range(-6.0..6.0);
        let p = t_two_sided_p(t, dof);
        let q = t_tail_by_integration(t, dof);
        assert!((p - q).abs() < 1e-6, "t {t}, dof {dof}: {p} vs {q}");
    }
    let r = paired_ttest(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
    assert!((r.p - t_tail_by_integration(r.t, 2.0)).abs() < 1e-6);
}

#[test]
fn flat_dirichlet_weights_have_uniform_mean() {
    let mut rng = rng_for(3, &[]);
    let draws = 20_000;
    let mut sums = [0.0; 3];
    for _ in 0..draws {
        let w = sample_weights(3, &mut rng).unwrap().weights;
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (s, v) in sums.iter_mut().zip(&w) {
            *s += v;
        }
    }
    for s in sums {
        // sd of one weight is sqrt(1/18); 4 standard errors
        assert!((s / draws as f64 - 1.0 / 3.0).abs() < 4.0 * (1.0f64 / 18.0 / draws as f64).sqrt());
    }
}

#[test]
fn noise_source_has_unit_moments() {
    for seed in 0..5 {
        let (m, v) = moments(&gaussian_noise::<f64>(64, 64, 1, seed));
        assert!(m.abs() < 0.02, "{m}");
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }
}

#[test]
fn inpaint_keep_rate_follows_gamma() {
    let img = Image::from_fn(32, 32, 1, |_, _, _| 1.0);
    let spec = CorruptionSpec::new((4, 4), 0.3).unwrap();
    let mut rng = rng_for(11, &[]);
    let (mut kept, mut total) = (0usize, 0usize);
    for _ in 0..200 {
        let s = inpaint_corrupt(&slice(img.clone()), &spec, &mut rng).unwrap();
        for (y0, x0, _, _) in cells(32, 32, spec.grid) {
            kept += usize::from(s.input.get(y0, x0, 0) != 0.0);
            total += 1;
        }
    }
    let p = kept as f64 / total as f64;
    let se = (0.3 * 0.7 / total as f64).sqrt();
    assert!((p - 0.3).abs() < 4.0 * se, "{p}");
}
