//! Synthetic brain-like phantoms with lesion labels.
//!
//! Each patient is a rotated ellipsoid "brain" with an inner tissue
//! compartment, a dark central cavity, smooth per-channel texture and one or
//! more ellipsoidal lesions placed fully inside the brain. Labels are
//! 0 = background, 1 = brain tissue, 2 = lesion and, when four classes are
//! requested, 3 = lesion core nested inside a lesion.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::volume::{LabelVolume, Volume};
use crate::error::{Error, Result};
use crate::grid::LabelMap;
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LesionParams {
    /// Inclusive range of lesion count per patient.
    pub count: (usize, usize),
    /// In-plane lesion radius range, as a fraction of the image size.
    pub radius: (f64, f64),
    /// Accepted lesion fraction: lesion voxels over brain voxels.
    pub area_fraction: (f64, f64),
    /// Per-lesion contrast range: the fraction of the gap between the
    /// surrounding tissue level and the full lesion level.
    pub contrast: (f64, f64),
}

impl Default for LesionParams {
    fn default() -> Self {
        Self {
            count: (1, 3),
            radius: (0.06, 0.12),
            area_fraction: (0.01, 0.08),
            contrast: (0.3, 0.7),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomParams {
    pub n_patients: usize,
    /// In-plane size (square).
    pub size: usize,
    /// Axial slices per patient.
    pub depth: usize,
    pub modalities: usize,
    /// 3 (background, brain, lesion) or 4 (adds a nested lesion core).
    pub classes: usize,
    pub lesion: LesionParams,
    /// Peak amplitude of each fine folding wave; 0 disables folds.
    pub fold_amplitude: f64,
    /// Standard deviation of the per-voxel Gaussian noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            n_patients: 30,
            size: 64,
            depth: 8,
            modalities: 2,
            classes: 3,
            lesion: LesionParams::default(),
            fold_amplitude: 0.1,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

/// Smallest brain semi-axis relative to the image size.
const MIN_BRAIN_AXIS: f64 = 0.22;
const MAX_LESION_ATTEMPTS: usize = 400;

impl PhantomParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::config("n_patients", "need at least one patient"));
        }
        if self.size < 8 {
            return Err(Error::config("size", "phantom images must be at least 8x8"));
        }
        if !(self.fold_amplitude >= 0.0 && self.fold_amplitude <= 1.0) {
            return Err(Error::config("fold_amplitude", "must lie in [0, 1]"));
        }
        if self.depth == 0 || self.modalities == 0 {
            return Err(Error::config("depth", "depth and modalities must be positive"));
        }
        if !(3..=4).contains(&self.classes) {
            return Err(Error::config("classes", "phantoms support 3 or 4 classes"));
        }
        let l = &self.lesion;
        if l.count.0 == 0 || l.count.0 > l.count.1 {
            return Err(Error::config("lesion.count", "need 1 <= min <= max"));
        }
        if !(l.radius.0 > 0.0 && l.radius.0 <= l.radius.1) {
            return Err(Error::config("lesion.radius", "need 0 < min <= max"));
        }
        if l.radius.1 >= MIN_BRAIN_AXIS * 0.8 {
            return Err(Error::config(
                "lesion.radius",
                format!(
                    "max radius {} cannot fit inside the smallest brain (semi-axis {MIN_BRAIN_AXIS})",
                    l.radius.1
                ),
            ));
        }
        if (l.radius.0 * self.size as f64) < 1.0 {
            return Err(Error::config("lesion.radius", "lesions smaller than one pixel"));
        }
        let (lo, hi) = l.area_fraction;
        if !(0.0..1.0).contains(&lo) || !(lo < hi && hi <= 1.0) {
            return Err(Error::config("lesion.area_fraction", "need 0 <= lo < hi <= 1"));
        }
        let (lo, hi) = l.contrast;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(Error::config("lesion.contrast", "need 0 < lo <= hi <= 1"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("noise_std", "must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["background", "brain", "lesion"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        if self.classes == 4 {
            names.push("lesion_core".into());
        }
        names
    }

    pub fn modality_names(&self) -> Vec<String> {
        (0..self.modalities).map(|t| format!("m{t}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomPatient<S> {
    pub volume: Volume<S>,
    pub labels: LabelVolume,
}

/// Rotated ellipse test in normalized coordinates.
#[derive(Debug, Clone, Copy)]
struct Ellipsoid {
    cy: f64,
    cx: f64,
    cz: f64,
    ay: f64,
    ax: f64,
    az: f64,
    cos: f64,
    sin: f64,
}

impl Ellipsoid {
    fn value(&self, y: f64, x: f64, z: f64) -> f64 {
        let dy = y - self.cy;
        let dx = x - self.cx;
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        let w = (z - self.cz) / self.az;
        (u / self.ax).powi(2) + (v / self.ay).powi(2) + w * w
    }

    fn contains(&self, y: f64, x: f64, z: f64) -> bool {
        self.value(y, x, z) <= 1.0
    }

    fn scaled(&self, f: f64) -> Ellipsoid {
        Ellipsoid {
            ay: self.ay * f,
            ax: self.ax * f,
            az: self.az * f,
            ..*self
        }
    }
}

/// Low-frequency cosine texture.
struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    /// Patient-specific folding pattern, 3 to 6 cycles across the image.
    fn folds(rng: &mut seed::Rng, size: f64, amplitude: f64) -> Self {
        let waves = (0..8)
            .map(|_| {
                let f = rng.random_range(3.0..6.0) / size;
                let angle = rng.random_range(0.0..std::f64::consts::PI);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let amp = amplitude * rng.random_range(0.5..1.0);
                (f * angle.sin(), f * angle.cos(), phase, amp)
            })
            .collect();
        Self { waves }
    }

    fn sample(rng: &mut seed::Rng, size: f64) -> Self {
        let waves = (0..4)
            .map(|_| {
                let fy = rng.random_range(-3.0..3.0) / size;
                let fx = rng.random_range(-3.0..3.0) / size;
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let amp = rng.random_range(0.03..0.09);
                (fy, fx, phase, amp)
            })
            .collect();
        Self { waves }
    }

    fn at(&self, y: f64, x: f64, z: f64) -> f64 {
        self.waves
            .iter()
            .map(|&(fy, fx, ph, a)| a * (std::f64::consts::TAU * (fy * y + fx * x) + ph + 0.3 * z).cos())
            .sum()
    }
}

/// Base intensities `(outer tissue, inner tissue, cavity, lesion, core)` for channel `t`.
fn channel_levels(t: usize, rng: &mut seed::Rng) -> [f64; 5] {
    let base = match t {
        0 => [0.55, 0.80, 0.20, 0.30, 0.12],
        1 => [0.60, 0.42, 0.15, 1.00, 0.70],
        _ => [
            rng.random_range(0.3..0.7),
            rng.random_range(0.3..0.9),
            rng.random_range(0.1..0.25),
            rng.random_range(0.8..1.1),
            rng.random_range(0.1..0.5),
        ],
    };
    let gain = rng.random_range(0.85..1.15);
    base.map(|v| v * gain)
}

struct Lesion {
    shape: Ellipsoid,
    contrast: f64,
}

fn sample_brain(rng: &mut seed::Rng, size: f64, depth: usize) -> Ellipsoid {
    let zc = (depth as f64 - 1.0) / 2.0;
    Ellipsoid {
        cy: size / 2.0 + rng.random_range(-0.14..0.14) * size,
        cx: size / 2.0 + rng.random_range(-0.14..0.14) * size,
        cz: zc + rng.random_range(-0.1..0.1) * depth as f64,
        ay: rng.random_range(0.26..0.42) * size,
        ax: rng.random_range(MIN_BRAIN_AXIS..0.38) * size,
        az: rng.random_range(0.65..0.85) * depth as f64,
        cos: 0.0,
        sin: 0.0,
    }
    .rotated(rng.random_range(-0.6..0.6))
}

impl Ellipsoid {
    fn rotated(mut self, angle: f64) -> Self {
        self.cos = angle.cos();
        self.sin = angle.sin();
        self
    }
}

fn voxel_centre(i: usize) -> f64 {
    i as f64 + 0.5
}

fn place_lesions(
    rng: &mut seed::Rng,
    params: &PhantomParams,
    brain: &Ellipsoid,
    brain_voxels: &[bool],
) -> Result<Vec<Lesion>> {
    let size = params.size as f64;
    let n = params.size;
    let brain_count = brain_voxels.iter().filter(|&&b| b).count();
    let l = &params.lesion;
    for _ in 0..MAX_LESION_ATTEMPTS {
        let count = rng.random_range(l.count.0..=l.count.1);
        let mut lesions = Vec::with_capacity(count);
        let mut lesion_voxels = vec![false; brain_voxels.len()];
        let mut ok = true;
        for _ in 0..count {
            let r = rng.random_range(l.radius.0..=l.radius.1) * size;
            let shape = Ellipsoid {
                cy: brain.cy + rng.random_range(-0.6..0.6) * brain.ay,
                cx: brain.cx + rng.random_range(-0.6..0.6) * brain.ax,
                cz: brain.cz + rng.random_range(-0.4..0.4) * brain.az,
                ay: r * rng.random_range(0.7..1.0),
                ax: r * rng.random_range(0.7..1.0),
                az: (r / size * params.depth as f64 * 2.0).max(0.8),
                cos: 0.0,
                sin: 0.0,
            }
            .rotated(rng.random_range(0.0..std::f64::consts::PI));
            let mut inside = true;
            let mut any = false;
            for z in 0..params.depth {
                for y in 0..n {
                    for x in 0..n {
                        if shape.contains(voxel_centre(y), voxel_centre(x), z as f64) {
                            let i = (z * n + y) * n + x;
                            if !brain_voxels[i] {
                                inside = false;
                            }
                            lesion_voxels[i] = true;
                            any = true;
                        }
                    }
                }
            }
            if !inside || !any {
                ok = false;
                break;
            }
            let contrast = rng.random_range(l.contrast.0..=l.contrast.1);
            lesions.push(Lesion { shape, contrast });
        }
        if !ok {
            continue;
        }
        let frac = lesion_voxels.iter().filter(|&&b| b).count() as f64 / brain_count as f64;
        if frac >= l.area_fraction.0 && frac <= l.area_fraction.1 {
            return Ok(lesions);
        }
    }
    Err(Error::config(
        "lesion",
        format!(
            "could not place lesions with radius {:?} and fraction {:?} inside the brain",
            l.radius, l.area_fraction
        ),
    ))
}

fn generate_patient<S: Scalar>(params: &PhantomParams, index: usize) -> Result<PhantomPatient<S>> {
    let mut rng = seed::rng_for(params.seed, &[seed::tag("phantom"), index as u64]);
    let n = params.size;
    let size = n as f64;
    let brain = sample_brain(&mut rng, size, params.depth);
    let inner = Ellipsoid {
        ay: brain.ay * rng.random_range(0.55..0.7),
        ax: brain.ax * rng.random_range(0.55..0.7),
        ..brain
    }
    .rotated(brain.sin.asin() + rng.random_range(-0.3..0.3));
    let cavity = Ellipsoid {
        ay: brain.ay * rng.random_range(0.12..0.2),
        ax: brain.ax * rng.random_range(0.08..0.14),
        cx: brain.cx + rng.random_range(-0.05..0.05) * size,
        ..brain
    };

    let mut brain_voxels = vec![false; n * n * params.depth];
    for z in 0..params.depth {
        for y in 0..n {
            for x in 0..n {
                brain_voxels[(z * n + y) * n + x] =
                    brain.contains(voxel_centre(y), voxel_centre(x), z as f64);
            }
        }
    }
    if !brain_voxels.iter().any(|&b| b) {
        return Err(Error::config("depth", "phantom brain does not intersect any slice"));
    }
    let lesions = place_lesions(&mut rng, params, &brain, &brain_voxels)?;

    let levels: Vec<[f64; 5]> = (0..params.modalities)
        .map(|t| channel_levels(t, &mut rng))
        .collect();
    let textures: Vec<Texture> = (0..params.modalities)
        .map(|_| Texture::sample(&mut rng, size))
        .collect();
    // shared across channels, like anatomy
    let folds = Texture::folds(&mut rng, size, params.fold_amplitude);

    let t_count = params.modalities;
    let mut voxels = vec![S::zero(); n * n * params.depth * t_count];
    let mut label_slices = Vec::with_capacity(params.depth);
    for z in 0..params.depth {
        let zf = z as f64;
        let mut labels = LabelMap::zeros(n, n);
        for y in 0..n {
            for x in 0..n {
                let i = (z * n + y) * n + x;
                if !brain_voxels[i] {
                    continue;
                }
                let (py, px) = (voxel_centre(y), voxel_centre(x));
                let mut region = if cavity.contains(py, px, zf) {
                    2
                } else if inner.contains(py, px, zf) {
                    1
                } else {
                    0
                };
                let tissue = region;
                let mut label = 1u8;
                let mut contrast = 1.0;
                for lesion in &lesions {
                    if lesion.shape.contains(py, px, zf) {
                        label = label.max(2);
                        region = 3;
                        contrast = lesion.contrast;
                        if params.classes == 4 && lesion.shape.scaled(0.5).contains(py, px, zf) {
                            label = 3;
                            region = 4;
                        }
                    }
                }
                labels.set(y, x, label);
                for t in 0..t_count {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let base = levels[t][tissue];
                    let level = base + contrast * (levels[t][region] - base);
                    let v = level + textures[t].at(py, px, zf) + folds.at(py, px, zf) + params.noise_std * noise;
                    voxels[i * t_count + t] = S::of(v.max(0.05));
                }
            }
        }
        label_slices.push(labels);
    }

    let volume = Volume::new(
        n,
        n,
        params.depth,
        voxels,
        format!("phantom{index:03}"),
        params.modality_names(),
    )?;
    Ok(PhantomPatient {
        volume,
        labels: LabelVolume {
            slices: label_slices,
        },
    })
}

/// Generates `params.n_patients` phantoms; identical parameters give
/// bit-identical output.
pub fn generate_phantom_dataset<S: Scalar>(params: &PhantomParams) -> Result<Vec<PhantomPatient<S>>> {
    params.validate()?;
    (0..params.n_patients)
        .map(|i| generate_patient(params, i))
        .collect()
}
