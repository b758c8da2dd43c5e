//! 3D multi-modal volumes and their preprocessing.

use crate::error::{Error, Result};
use crate::grid::{Image, LabelMap, Mask};
use crate::scalar::Scalar;
use crate::types::MultiModalSlice;

/// Default threshold on raw intensities: anything nonzero is foreground.
pub const DEFAULT_MASK_THRESHOLD: f64 = 1e-6;

/// Minimum brain-mask coverage for a slice to be used in proxy sampling.
pub const MIN_PROXY_COVERAGE: f64 = 0.01;

/// Voxel grid `height x width x depth x modalities`. Storage is slice-major:
/// each axial slice is one contiguous channel-last image.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<S> {
    height: usize,
    width: usize,
    depth: usize,
    modalities: usize,
    voxels: Vec<S>,
    pub spacing: [f64; 3],
    pub patient_id: String,
    pub modality_names: Vec<String>,
}

impl<S: Scalar> Volume<S> {
    pub fn new(
        height: usize,
        width: usize,
        depth: usize,
        voxels: Vec<S>,
        patient_id: impl Into<String>,
        modality_names: Vec<String>,
    ) -> Result<Self> {
        let modalities = modality_names.len();
        if depth == 0 || modalities == 0 {
            return Err(Error::Domain("volume needs Z >= 1 and at least one modality".into()));
        }
        let mut names = modality_names.clone();
        names.sort();
        names.dedup();
        if names.len() != modalities {
            return Err(Error::Schema("modality names must be unique".into()));
        }
        if voxels.len() != height * width * depth * modalities {
            return Err(Error::Domain(format!(
                "volume buffer has {} values, expected {height}x{width}x{depth}x{modalities}",
                voxels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            depth,
            modalities,
            voxels,
            spacing: [1.0; 3],
            patient_id: patient_id.into(),
            modality_names,
        })
    }

    /// Stacks axial slices, all of the same shape.
    pub fn from_slices(
        slices: &[Image<S>],
        patient_id: impl Into<String>,
        modality_names: Vec<String>,
    ) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::Domain("volume needs at least one slice".into()))?;
        let (h, w, t) = first.shape();
        if t != modality_names.len() || slices.iter().any(|s| s.shape() != (h, w, t)) {
            return Err(Error::Domain("slice shapes disagree".into()));
        }
        let voxels = slices.iter().flat_map(|s| s.as_slice().iter().copied()).collect();
        Self::new(h, w, slices.len(), voxels, patient_id, modality_names)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn modalities(&self) -> usize {
        self.modalities
    }

    pub fn as_slice(&self) -> &[S] {
        &self.voxels
    }

    fn slice_len(&self) -> usize {
        self.height * self.width * self.modalities
    }

    /// Axial slice `z` as a channel-last image.
    pub fn slice(&self, z: usize) -> Image<S> {
        let n = self.slice_len();
        Image::from_vec(
            self.height,
            self.width,
            self.modalities,
            self.voxels[z * n..(z + 1) * n].to_vec(),
        )
        .expect("slice length is consistent")
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, z: usize, t: usize) -> S {
        self.voxels[((z * self.height + y) * self.width + x) * self.modalities + t]
    }

    /// Same geometry and metadata, different voxel values.
    fn with_voxels(&self, height: usize, width: usize, voxels: Vec<S>) -> Self {
        Self {
            height,
            width,
            depth: self.depth,
            modalities: self.modalities,
            voxels,
            spacing: self.spacing,
            patient_id: self.patient_id.clone(),
            modality_names: self.modality_names.clone(),
        }
    }
}

/// Binary mask over a whole volume, slice-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumeMask {
    pub slices: Vec<Mask>,
}

impl VolumeMask {
    pub fn count(&self) -> usize {
        self.slices.iter().map(Mask::count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.iter().all(Mask::is_empty)
    }

    pub fn depth(&self) -> usize {
        self.slices.len()
    }
}

/// Integer labels over a volume, slice-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    pub slices: Vec<LabelMap>,
}

impl LabelVolume {
    pub fn depth(&self) -> usize {
        self.slices.len()
    }

    pub fn count(&self, pred: impl Fn(u8) -> bool) -> usize {
        self.slices
            .iter()
            .map(|s| s.as_slice().iter().filter(|&&l| pred(l)).count())
            .sum()
    }
}

/// Offset of the source window for a centred crop (positive) or pad
/// (negative) from `from` to `to` along one axis.
fn centre_offset(from: usize, to: usize) -> isize {
    (from as isize - to as isize).div_euclid(2)
}

fn resample_plane<T: Copy>(
    src: &[T],
    h: usize,
    w: usize,
    chans: usize,
    size: (usize, usize),
    fill: T,
) -> Vec<T> {
    let (oh, ow) = size;
    let dy = centre_offset(h, oh);
    let dx = centre_offset(w, ow);
    let mut out = vec![fill; oh * ow * chans];
    for y in 0..oh {
        let sy = y as isize + dy;
        if sy < 0 || sy >= h as isize {
            continue;
        }
        for x in 0..ow {
            let sx = x as isize + dx;
            if sx < 0 || sx >= w as isize {
                continue;
            }
            let s = (sy as usize * w + sx as usize) * chans;
            let d = (y * ow + x) * chans;
            out[d..d + chans].copy_from_slice(&src[s..s + chans]);
        }
    }
    out
}

/// Centre crop and/or zero-pad every slice to `size = (height, width)`.
/// Odd differences put the extra row/column at the end.
pub fn crop_or_pad<S: Scalar>(volume: &Volume<S>, size: (usize, usize)) -> Volume<S> {
    let n = volume.slice_len();
    let mut voxels = Vec::with_capacity(size.0 * size.1 * volume.modalities * volume.depth);
    for z in 0..volume.depth {
        voxels.extend(resample_plane(
            &volume.voxels[z * n..(z + 1) * n],
            volume.height,
            volume.width,
            volume.modalities,
            size,
            S::zero(),
        ));
    }
    volume.with_voxels(size.0, size.1, voxels)
}

/// Label counterpart of [`crop_or_pad`]; pads with background (0).
pub fn crop_or_pad_labels(labels: &LabelVolume, size: (usize, usize)) -> LabelVolume {
    LabelVolume {
        slices: labels
            .slices
            .iter()
            .map(|s| {
                let data = resample_plane(s.as_slice(), s.height(), s.width(), 1, size, 0u8);
                LabelMap::from_vec(size.0, size.1, data).expect("shape is consistent")
            })
            .collect(),
    }
}

/// Pixels where the largest absolute intensity over channels exceeds `tau`.
pub fn brain_mask_threshold<S: Scalar>(pixels: &Image<S>, tau: f64) -> Mask {
    Mask::from_fn(pixels.height(), pixels.width(), |y, x| {
        pixels
            .pixel(y, x)
            .iter()
            .any(|v| v.as_f64().abs() > tau)
    })
}

pub fn volume_mask<S: Scalar>(volume: &Volume<S>, tau: f64) -> VolumeMask {
    VolumeMask {
        slices: (0..volume.depth)
            .map(|z| brain_mask_threshold(&volume.slice(z), tau))
            .collect(),
    }
}

/// Per-channel z-scoring over the foreground using the population standard
/// deviation. Background voxels become exactly zero.
pub fn foreground_normalize<S: Scalar>(volume: &Volume<S>, mask: &VolumeMask) -> Result<Volume<S>> {
    if mask.depth() != volume.depth
        || mask
            .slices
            .iter()
            .any(|m| m.height() != volume.height || m.width() != volume.width)
    {
        return Err(Error::Domain("mask geometry differs from volume".into()));
    }
    let count = mask.count();
    if count == 0 {
        return Err(Error::Degenerate("empty foreground mask".into()));
    }
    let t = volume.modalities;
    let plane = volume.height * volume.width;
    let mut sum = vec![0.0f64; t];
    let mut sq = vec![0.0f64; t];
    // two-pass for accuracy
    for (z, m) in mask.slices.iter().enumerate() {
        for (p, &on) in m.as_slice().iter().enumerate() {
            if on {
                let base = (z * plane + p) * t;
                for c in 0..t {
                    sum[c] += volume.voxels[base + c].as_f64();
                }
            }
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    for (z, m) in mask.slices.iter().enumerate() {
        for (p, &on) in m.as_slice().iter().enumerate() {
            if on {
                let base = (z * plane + p) * t;
                for c in 0..t {
                    let d = volume.voxels[base + c].as_f64() - mean[c];
                    sq[c] += d * d;
                }
            }
        }
    }
    let std: Vec<f64> = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
    if let Some(c) = std.iter().position(|&s| !(s > 1e-12)) {
        return Err(Error::Degenerate(format!(
            "zero-variance foreground in channel {c}"
        )));
    }
    let mut voxels = vec![S::zero(); volume.voxels.len()];
    for (z, m) in mask.slices.iter().enumerate() {
        for (p, &on) in m.as_slice().iter().enumerate() {
            if on {
                let base = (z * plane + p) * t;
                for c in 0..t {
                    let v = (volume.voxels[base + c].as_f64() - mean[c]) / std[c];
                    voxels[base + c] = S::of(v);
                }
            }
        }
    }
    Ok(volume.with_voxels(volume.height, volume.width, voxels))
}

/// One slice per axial index. Slices whose mask covers less than
/// `min_coverage` of the frame are marked ineligible for proxy sampling.
pub fn extract_slices<S: Scalar>(
    volume: &Volume<S>,
    mask: &VolumeMask,
    labels: Option<&LabelVolume>,
    min_coverage: f64,
) -> Result<Vec<(MultiModalSlice<S>, Option<LabelMap>)>> {
    if mask.depth() != volume.depth {
        return Err(Error::Domain("mask depth differs from volume".into()));
    }
    if let Some(l) = labels {
        if l.depth() != volume.depth {
            return Err(Error::Domain("label depth differs from volume".into()));
        }
    }
    (0..volume.depth)
        .map(|z| {
            let m = mask.slices[z].clone();
            let eligible = !m.is_empty() && m.coverage() >= min_coverage;
            let mut s = MultiModalSlice::new(volume.slice(z), m, volume.patient_id.clone(), z)?;
            s.proxy_eligible = eligible;
            Ok((s, labels.map(|l| l.slices[z].clone())))
        })
        .collect()
}
