//! Source identification samples: weight draws, source assignment, overlap
//! screening and mixing.

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::data::augment::{augment, AugmentParams};
use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grid::{Image, Mask};
use crate::scalar::Scalar;
use crate::seed::{self, Rng};
use crate::types::{
    validate_mixture_plan, MixturePlan, MixtureSettings, MultiModalSlice, Provenance, SourceRef,
    TrainingSample,
};

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDraw {
    pub weights: Vec<f64>,
    /// First output of the generator after the draw, identifying its state.
    pub rng_tag: u64,
}

/// Flat Dirichlet draw over `n` components (uniform on the simplex).
pub fn sample_weights(n: usize, rng: &mut Rng) -> Result<WeightDraw> {
    if n == 0 {
        return Err(Error::Domain("cannot draw weights for zero sources".into()));
    }
    let weights = if n == 1 {
        vec![1.0]
    } else {
        loop {
            let e: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut *rng)).collect();
            let total: f64 = e.iter().sum();
            // Exact zeros would drop a source from its row.
            if total > 0.0 && e.iter().all(|&v| v > 0.0) {
                break e.into_iter().map(|v| v / total).collect();
            }
        }
    };
    let rng_tag = rng.random();
    Ok(WeightDraw { weights, rng_tag })
}

/// Random plan: target in column 0 of every row; the other columns are
/// partitioned across rows without reuse.
pub fn sample_plan(settings: &MixtureSettings, rng: &mut Rng) -> Result<MixturePlan> {
    settings.validate()?;
    let k = settings.n_per_mixture - 1;
    let mut weights = vec![vec![0.0; settings.n_pool]; settings.m_mixtures];
    for (m, row) in weights.iter_mut().enumerate() {
        let draw = sample_weights(settings.n_per_mixture, rng)?;
        row[0] = draw.weights[0];
        for j in 0..k {
            row[1 + m * k + j] = draw.weights[1 + j];
        }
    }
    Ok(MixturePlan {
        n_pool: settings.n_pool,
        n_per_mixture: settings.n_per_mixture,
        m_mixtures: settings.m_mixtures,
        weights,
        target_index: 0,
    })
}

/// Unit Gaussian noise image regenerated deterministically from `seed`.
pub fn gaussian_noise<S: Scalar>(height: usize, width: usize, channels: usize, seed: u64) -> Image<S> {
    let mut rng = seed::rng(seed);
    Image::from_fn(height, width, channels, |_, _, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        S::of(v)
    })
}

/// A source image ready for mixing together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceImage<S> {
    pub slice: MultiModalSlice<S>,
    pub origin: SourceRef,
}

/// Which slices feed the non-target sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceStrategy {
    /// One slice from each of `n` distinct patients.
    CrossPatient,
    /// `n` distinct slices of one patient.
    WithinPatient,
    /// Target slice plus unit Gaussian noise sources.
    Denoising,
}

fn augmented<S: Scalar>(
    s: &MultiModalSlice<S>,
    aug: Option<&AugmentParams>,
    rng: &mut Rng,
) -> SourceImage<S> {
    match aug {
        Some(params) if !params.is_identity() => {
            let aseed: u64 = rng.random();
            let (slice, _) = augment(s, None, params, &mut seed::rng(aseed));
            SourceImage {
                slice,
                origin: SourceRef::Slice {
                    patient_id: s.patient_id.clone(),
                    slice_index: s.slice_index,
                    augment_seed: Some(aseed),
                },
            }
        }
        _ => SourceImage {
            slice: s.clone(),
            origin: s.source_ref(),
        },
    }
}

/// Picks `n` sources; the first is the target.
pub fn assign_sources<S: Scalar>(
    strategy: SourceStrategy,
    dataset: &Dataset<S>,
    n: usize,
    aug: Option<&AugmentParams>,
    rng: &mut Rng,
) -> Result<Vec<SourceImage<S>>> {
    if n == 0 {
        return Err(Error::Sampling("need at least one source".into()));
    }
    let eligible: Vec<usize> = dataset
        .patients
        .iter()
        .enumerate()
        .filter(|(_, p)| p.eligible_count() > 0)
        .map(|(i, _)| i)
        .collect();
    let pick_slice = |pi: usize, rng: &mut Rng| -> &MultiModalSlice<S> {
        let slices: Vec<&MultiModalSlice<S>> = dataset.patients[pi].eligible().collect();
        slices[rng.random_range(0..slices.len())]
    };
    match strategy {
        SourceStrategy::CrossPatient => {
            if eligible.len() < n {
                return Err(Error::Sampling(format!(
                    "cross-patient mixing needs {n} patients, dataset has {}",
                    eligible.len()
                )));
            }
            let chosen = sample_indices(rng, eligible.len(), n).into_vec();
            let mut out = Vec::with_capacity(n);
            for c in chosen {
                let s = pick_slice(eligible[c], rng);
                out.push(augmented(s, aug, rng));
            }
            Ok(out)
        }
        SourceStrategy::WithinPatient => {
            let rich: Vec<usize> = eligible
                .iter()
                .copied()
                .filter(|&i| dataset.patients[i].eligible_count() >= n)
                .collect();
            if rich.is_empty() {
                return Err(Error::Sampling(format!(
                    "within-patient mixing needs a patient with {n} eligible slices"
                )));
            }
            let pi = rich[rng.random_range(0..rich.len())];
            let slices: Vec<&MultiModalSlice<S>> = dataset.patients[pi].eligible().collect();
            let chosen = sample_indices(rng, slices.len(), n).into_vec();
            Ok(chosen
                .into_iter()
                .map(|c| augmented(slices[c], aug, rng))
                .collect())
        }
        SourceStrategy::Denoising => {
            if eligible.is_empty() {
                return Err(Error::Sampling("no proxy-eligible slices".into()));
            }
            let pi = eligible[rng.random_range(0..eligible.len())];
            let target = augmented(pick_slice(pi, rng), aug, rng);
            let (h, w) = target.slice.size();
            let t = target.slice.modalities();
            let mut out = vec![target];
            for k in 1..n {
                let nseed: u64 = rng.random();
                out.push(SourceImage {
                    slice: MultiModalSlice {
                        pixels: gaussian_noise(h, w, t, nseed),
                        brain_mask: Mask::full(h, w),
                        patient_id: format!("noise-{nseed:016x}"),
                        slice_index: k,
                        proxy_eligible: true,
                    },
                    origin: SourceRef::Noise { seed: nseed },
                });
            }
            Ok(out)
        }
    }
}

/// True when every source sharing a mixture with the target overlaps the
/// target's brain mask in at least `min_overlap` pixels.
pub fn overlap_admissible<S: Scalar>(
    sources: &[MultiModalSlice<S>],
    plan: &MixturePlan,
    min_overlap: usize,
) -> bool {
    let Some(target) = sources.get(plan.target_index) else {
        return false;
    };
    plan.weights.iter().all(|row| {
        row.iter().enumerate().all(|(c, &w)| {
            c == plan.target_index
                || w == 0.0
                || sources
                    .get(c)
                    .is_some_and(|s| s.brain_mask.intersection(&target.brain_mask) >= min_overlap)
        })
    })
}

/// Mixes `sources` per `plan`: mixture `m` is `sum_n weights[m][n] * source_n`,
/// identically for every channel. The target is source 0.
pub fn make_si_sample<S: Scalar>(sources: &[SourceImage<S>], plan: &MixturePlan) -> Result<TrainingSample<S>> {
    let structural: Vec<String> = validate_mixture_plan(plan)
        .iter()
        .filter(|v| v.is_structural())
        .map(ToString::to_string)
        .collect();
    if !structural.is_empty() {
        return Err(Error::Domain(format!("invalid plan: {}", structural.join("; "))));
    }
    if sources.len() != plan.n_pool {
        return Err(Error::Domain(format!(
            "plan pools {} sources, got {}",
            plan.n_pool,
            sources.len()
        )));
    }
    let shape = sources[0].slice.pixels.shape();
    if sources.iter().any(|s| s.slice.pixels.shape() != shape) {
        return Err(Error::Domain("sources differ in shape or modality count".into()));
    }
    let (h, w, t) = shape;
    let mut blocks = Vec::with_capacity(plan.m_mixtures);
    for row in &plan.weights {
        let mut mix = Image::zeros(h, w, t);
        for (src, &wt) in sources.iter().zip(row) {
            if wt != 0.0 {
                mix.add_scaled(&src.slice.pixels, S::of(wt))?;
            }
        }
        blocks.push(mix);
    }
    let refs: Vec<&Image<S>> = blocks.iter().collect();
    Ok(TrainingSample {
        input: Image::concat_channels(&refs)?,
        target: sources[plan.target_index].slice.pixels.clone(),
        provenance: Provenance {
            sources: sources.iter().map(|s| s.origin.clone()).collect(),
            weights: plan.weights.clone(),
        },
    })
}

/// Single-mixture sample `x = w s1 + (1 - w) s2'` with
/// `s2' = (1 - lambda) s2 + lambda * noise`, for explicit `w` and noise seed.
pub fn make_ambiguous_sample_with<S: Scalar>(
    s1: &SourceImage<S>,
    s2: &SourceImage<S>,
    lambda: f64,
    w: f64,
    noise_seed: u64,
) -> Result<TrainingSample<S>> {
    if !(0.0..=1.0).contains(&lambda) || !(0.0..=1.0).contains(&w) {
        return Err(Error::Domain("lambda and w must lie in [0, 1]".into()));
    }
    if s1.slice.pixels.shape() != s2.slice.pixels.shape() {
        return Err(Error::Domain("sources differ in shape".into()));
    }
    let (h, wd, t) = s1.slice.pixels.shape();
    let mut sources = vec![s1.clone(), s2.clone()];
    let mut row = vec![w, (1.0 - w) * (1.0 - lambda)];
    if lambda > 0.0 {
        sources.push(SourceImage {
            slice: MultiModalSlice {
                pixels: gaussian_noise(h, wd, t, noise_seed),
                brain_mask: Mask::full(h, wd),
                patient_id: format!("noise-{noise_seed:016x}"),
                slice_index: 0,
                proxy_eligible: true,
            },
            origin: SourceRef::Noise { seed: noise_seed },
        });
        row.push((1.0 - w) * lambda);
    }
    let mut input = Image::zeros(h, wd, t);
    for (src, &wt) in sources.iter().zip(&row) {
        if wt != 0.0 {
            input.add_scaled(&src.slice.pixels, S::of(wt))?;
        }
    }
    Ok(TrainingSample {
        input,
        target: s1.slice.pixels.clone(),
        provenance: Provenance {
            sources: sources.into_iter().map(|s| s.origin).collect(),
            weights: vec![row],
        },
    })
}

/// [`make_ambiguous_sample_with`] with `w ~ U[0, 1]` and fresh noise.
pub fn make_ambiguous_sample<S: Scalar>(
    s1: &SourceImage<S>,
    s2: &SourceImage<S>,
    lambda: f64,
    rng: &mut Rng,
) -> Result<TrainingSample<S>> {
    let w: f64 = rng.random();
    let noise_seed: u64 = rng.random();
    make_ambiguous_sample_with(s1, s2, lambda, w, noise_seed)
}

/// Noise moments `(mean, variance)` of an image, over all values.
pub fn moments<S: Scalar>(img: &Image<S>) -> (f64, f64) {
    let n = img.as_slice().len() as f64;
    let mean = img.as_slice().iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = img
        .as_slice()
        .iter()
        .map(|v| (v.as_f64() - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean, var)
}

/// Retry budget for finding an admissible (overlapping) set of sources.
pub const MAX_OVERLAP_ATTEMPTS: usize = 100;

/// Draws sources and a plan until the overlap rule holds, then mixes.
pub fn sample_si<S: Scalar>(
    strategy: SourceStrategy,
    settings: &MixtureSettings,
    dataset: &Dataset<S>,
    aug: Option<&AugmentParams>,
    min_overlap: usize,
    rng: &mut Rng,
) -> Result<TrainingSample<S>> {
    for _ in 0..MAX_OVERLAP_ATTEMPTS {
        let sources = assign_sources(strategy, dataset, settings.n_pool, aug, rng)?;
        let plan = sample_plan(settings, rng)?;
        let slices: Vec<MultiModalSlice<S>> = sources.iter().map(|s| s.slice.clone()).collect();
        if overlap_admissible(&slices, &plan, min_overlap) {
            return make_si_sample(&sources, &plan);
        }
    }
    Err(Error::Sampling(format!(
        "no overlapping source set found in {MAX_OVERLAP_ATTEMPTS} attempts"
    )))
}
