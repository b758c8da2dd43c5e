//! Domain types shared by the data, task, training and evaluation modules.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Image, LabelMap, Mask};
use crate::scalar::Scalar;

/// Tolerance on mixture row sums.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// One 2D training image with all of its modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalSlice<S> {
    pub pixels: Image<S>,
    pub brain_mask: Mask,
    pub patient_id: String,
    pub slice_index: usize,
    /// False when the brain mask is too small for proxy-task sampling.
    pub proxy_eligible: bool,
}

impl<S: Scalar> MultiModalSlice<S> {
    pub fn new(
        pixels: Image<S>,
        brain_mask: Mask,
        patient_id: impl Into<String>,
        slice_index: usize,
    ) -> Result<Self> {
        if pixels.height() != brain_mask.height() || pixels.width() != brain_mask.width() {
            return Err(Error::Domain("brain mask shape differs from pixel grid".into()));
        }
        let proxy_eligible = !brain_mask.is_empty();
        Ok(Self {
            pixels,
            brain_mask,
            patient_id: patient_id.into(),
            slice_index,
            proxy_eligible,
        })
    }

    pub fn modalities(&self) -> usize {
        self.pixels.channels()
    }

    pub fn size(&self) -> (usize, usize) {
        (self.pixels.height(), self.pixels.width())
    }

    pub fn source_ref(&self) -> SourceRef {
        SourceRef::Slice {
            patient_id: self.patient_id.clone(),
            slice_index: self.slice_index,
            augment_seed: None,
        }
    }
}

/// Mixing configuration: `m_mixtures` rows over a pool of `n_pool` sources,
/// each row combining `n_per_mixture` of them. Source 0 is the target and
/// appears in every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePlan {
    pub n_pool: usize,
    pub n_per_mixture: usize,
    pub m_mixtures: usize,
    /// `m_mixtures x n_pool`, row-major by mixture.
    pub weights: Vec<Vec<f64>>,
    pub target_index: usize,
}

impl MixturePlan {
    /// Pool size required when non-target sources are never reused.
    pub fn required_pool(m_mixtures: usize, n_per_mixture: usize) -> usize {
        m_mixtures * n_per_mixture.saturating_sub(1) + 1
    }
}

/// A broken [`MixturePlan`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyPlan,
    PoolTooSmall { n_pool: usize, n_per_mixture: usize },
    TargetIndex(usize),
    Shape { rows: usize, cols: Vec<usize> },
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    NonzeroCount { row: usize, count: usize },
    TargetMissing { row: usize },
    SourceReused { col: usize, rows: Vec<usize> },
}

impl Violation {
    /// Shape, range and row-sum violations make mixing itself meaningless;
    /// the remaining ones describe plans the sampler would never emit.
    pub fn is_structural(&self) -> bool {
        matches!(
            self,
            Violation::EmptyPlan
                | Violation::TargetIndex(_)
                | Violation::Shape { .. }
                | Violation::EntryOutOfRange { .. }
                | Violation::RowSum { .. }
        )
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPlan => write!(f, "plan needs at least one mixture and one source"),
            Violation::PoolTooSmall {
                n_pool,
                n_per_mixture,
            } => write!(f, "pool of {n_pool} smaller than {n_per_mixture} sources per mixture"),
            Violation::TargetIndex(i) => write!(f, "target index {i} must be 0"),
            Violation::Shape { rows, cols } => {
                write!(f, "weight matrix shape {rows} x {cols:?} does not match plan")
            }
            Violation::EntryOutOfRange { row, col, value } => {
                write!(f, "weight ({row},{col}) = {value} outside [0,1]")
            }
            Violation::RowSum { row, sum } => write!(f, "row sum ≠ 1 (row {row} sums to {sum})"),
            Violation::NonzeroCount { row, count } => {
                write!(f, "row {row} has {count} nonzero weights")
            }
            Violation::TargetMissing { row } => write!(f, "target absent from row {row}"),
            Violation::SourceReused { col, rows } => {
                write!(f, "source {col} reused in rows {rows:?}")
            }
        }
    }
}

/// Checks every [`MixturePlan`] invariant; an empty list means the plan is valid.
pub fn validate_mixture_plan(plan: &MixturePlan) -> Vec<Violation> {
    let mut out = Vec::new();
    if plan.m_mixtures == 0 || plan.n_per_mixture == 0 || plan.n_pool == 0 {
        out.push(Violation::EmptyPlan);
    }
    if plan.n_pool < plan.n_per_mixture {
        out.push(Violation::PoolTooSmall {
            n_pool: plan.n_pool,
            n_per_mixture: plan.n_per_mixture,
        });
    }
    if plan.target_index != 0 {
        out.push(Violation::TargetIndex(plan.target_index));
    }
    let cols: Vec<usize> = plan.weights.iter().map(Vec::len).collect();
    if plan.weights.len() != plan.m_mixtures || cols.iter().any(|&c| c != plan.n_pool) {
        out.push(Violation::Shape {
            rows: plan.weights.len(),
            cols,
        });
        return out;
    }

    let mut users: Vec<Vec<usize>> = vec![Vec::new(); plan.n_pool];
    for (r, row) in plan.weights.iter().enumerate() {
        let mut nonzero = 0;
        for (c, &w) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&w) {
                out.push(Violation::EntryOutOfRange {
                    row: r,
                    col: c,
                    value: w,
                });
            }
            if w != 0.0 {
                nonzero += 1;
                users[c].push(r);
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            out.push(Violation::RowSum { row: r, sum });
        }
        if nonzero != plan.n_per_mixture {
            out.push(Violation::NonzeroCount {
                row: r,
                count: nonzero,
            });
        }
        if plan.target_index < row.len() && row[plan.target_index] == 0.0 {
            out.push(Violation::TargetMissing { row: r });
        }
    }
    for (c, rows) in users.into_iter().enumerate() {
        if c != plan.target_index && rows.len() > 1 {
            out.push(Violation::SourceReused { col: c, rows });
        }
    }
    out
}

/// Mixture-based proxy task settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureSettings {
    pub n_pool: usize,
    pub n_per_mixture: usize,
    pub m_mixtures: usize,
}

impl MixtureSettings {
    pub fn new(n_pool: usize, n_per_mixture: usize, m_mixtures: usize) -> Result<Self> {
        let s = Self {
            n_pool,
            n_per_mixture,
            m_mixtures,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_mixture == 0 || self.m_mixtures == 0 {
            return Err(Error::config(
                "task.mixture",
                "need at least one mixture and one source per mixture",
            ));
        }
        let want = MixturePlan::required_pool(self.m_mixtures, self.n_per_mixture);
        if self.n_pool != want {
            return Err(Error::config(
                "task.mixture.n_pool",
                format!(
                    "N = {} violates N = M(Ñ-1)+1 = {want} for M = {}, Ñ = {}",
                    self.n_pool, self.m_mixtures, self.n_per_mixture
                ),
            ));
        }
        Ok(())
    }
}

impl Default for MixtureSettings {
    /// Five pooled sources, three per mixture, two mixtures.
    fn default() -> Self {
        Self {
            n_pool: 5,
            n_per_mixture: 3,
            m_mixtures: 2,
        }
    }
}

/// Grid corruption parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Cell size `(height, width)` in pixels.
    pub grid: (usize, usize),
    pub gamma: f64,
    /// Fixed Bezier points; sampled per call when absent.
    #[serde(default)]
    pub bezier: Option<[f64; 4]>,
}

impl CorruptionSpec {
    pub fn new(grid: (usize, usize), gamma: f64) -> Result<Self> {
        let s = Self {
            grid,
            gamma,
            bezier: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(Error::config("task.grid", "grid cells must be at least 1x1"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("task.gamma", "gamma must lie in [0, 1]"));
        }
        if let Some(p) = self.bezier {
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::config("task.bezier", "control points must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            grid: (8, 8),
            gamma: 0.5,
            bezier: None,
        }
    }
}

/// Proxy task selector with its parameter record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    /// Cross-patient source identification.
    Csi(MixtureSettings),
    /// Within-patient source identification.
    Wsi(MixtureSettings),
    /// Denoising source identification: non-target sources are noise.
    Dsi(MixtureSettings),
    Inpaint(CorruptionSpec),
    PixelShuffle(CorruptionSpec),
    SuperRes(CorruptionSpec),
    IntensityShift,
}

impl Default for TaskKind {
    fn default() -> Self {
        TaskKind::Csi(MixtureSettings::default())
    }
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Csi(_) => "csi",
            TaskKind::Wsi(_) => "wsi",
            TaskKind::Dsi(_) => "dsi",
            TaskKind::Inpaint(_) => "inpaint",
            TaskKind::PixelShuffle(_) => "pixel_shuffle",
            TaskKind::SuperRes(_) => "super_res",
            TaskKind::IntensityShift => "intensity_shift",
        }
    }

    pub fn mixture(&self) -> Option<MixtureSettings> {
        match self {
            TaskKind::Csi(m) | TaskKind::Wsi(m) | TaskKind::Dsi(m) => Some(*m),
            _ => None,
        }
    }

    /// Network input channels for `modalities` image channels.
    pub fn input_channels(&self, modalities: usize) -> usize {
        match self.mixture() {
            Some(m) => m.m_mixtures * modalities,
            None => modalities,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TaskKind::Csi(m) | TaskKind::Wsi(m) | TaskKind::Dsi(m) => m.validate(),
            TaskKind::Inpaint(c) | TaskKind::SuperRes(c) => c.validate(),
            TaskKind::PixelShuffle(c) => {
                c.validate()?;
                if c.grid.0 != c.grid.1 {
                    return Err(Error::config(
                        "task.grid",
                        "pixel shuffle needs square cells",
                    ));
                }
                Ok(())
            }
            TaskKind::IntensityShift => Ok(()),
        }
    }
}

/// Where one mixed source came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceRef {
    Slice {
        patient_id: String,
        slice_index: usize,
        /// Seed of the spatial augmentation applied before mixing.
        #[serde(default)]
        augment_seed: Option<u64>,
    },
    /// Unit Gaussian noise regenerated from `seed`.
    Noise { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Pool in plan column order; the target comes first.
    pub sources: Vec<SourceRef>,
    /// Mixture rows over `sources`; empty for corruption tasks.
    pub weights: Vec<Vec<f64>>,
}

/// Proxy-task input/target pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample<S> {
    pub input: Image<S>,
    pub target: Image<S>,
    pub provenance: Provenance,
}

impl<S: Scalar> TrainingSample<S> {
    pub fn mixtures(&self) -> usize {
        self.input.channels() / self.target.channels().max(1)
    }

    /// Exchanges mixture blocks `a` and `b` of the input; the target is untouched.
    pub fn swap_mixtures(&self, a: usize, b: usize) -> Result<Self> {
        let t = self.target.channels();
        let m = self.mixtures();
        if a >= m || b >= m {
            return Err(Error::Domain(format!("mixture index out of range 0..{m}")));
        }
        let mut blocks: Vec<Image<S>> = (0..m)
            .map(|i| self.input.channel_range(i * t, t))
            .collect::<Result<_>>()?;
        blocks.swap(a, b);
        let refs: Vec<&Image<S>> = blocks.iter().collect();
        let mut provenance = self.provenance.clone();
        if provenance.weights.len() == m {
            provenance.weights.swap(a, b);
        }
        Ok(Self {
            input: Image::concat_channels(&refs)?,
            target: self.target.clone(),
            provenance,
        })
    }

    /// Rebuilds the mixed input from the recorded provenance, resolving each
    /// source through `lookup`.
    pub fn remix(&self, mut lookup: impl FnMut(&SourceRef) -> Result<Image<S>>) -> Result<Image<S>> {
        let sources: Vec<Image<S>> = self
            .provenance
            .sources
            .iter()
            .map(&mut lookup)
            .collect::<Result<_>>()?;
        let first = sources
            .first()
            .ok_or_else(|| Error::Domain("provenance lists no sources".into()))?;
        let (h, w, t) = first.shape();
        let mut blocks = Vec::with_capacity(self.provenance.weights.len());
        for row in &self.provenance.weights {
            let mut mix = Image::zeros(h, w, t);
            for (src, &wt) in sources.iter().zip(row) {
                if wt != 0.0 {
                    mix.add_scaled(src, S::of(wt))?;
                }
            }
            blocks.push(mix);
        }
        let refs: Vec<&Image<S>> = blocks.iter().collect();
        Image::concat_channels(&refs)
    }
}

/// Label target of a segmentation sample.
#[derive(Debug, Clone, PartialEq)]
pub enum SegTarget<S> {
    Hard(LabelMap),
    /// Per-pixel class distribution, `H x W x C`.
    Soft(Image<S>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationSample<S> {
    pub image: Image<S>,
    pub target: SegTarget<S>,
    pub class_names: Vec<String>,
}

impl<S: Scalar> SegmentationSample<S> {
    pub fn new(image: Image<S>, labels: LabelMap, class_names: Vec<String>) -> Result<Self> {
        if labels.height() != image.height() || labels.width() != image.width() {
            return Err(Error::Domain("label map shape differs from image".into()));
        }
        if class_names.is_empty() {
            return Err(Error::Domain("at least one class is required".into()));
        }
        if labels.max_label() as usize >= class_names.len() {
            return Err(Error::Domain(format!(
                "label {} outside declared {} classes",
                labels.max_label(),
                class_names.len()
            )));
        }
        Ok(Self {
            image,
            target: SegTarget::Hard(labels),
            class_names,
        })
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Option<&LabelMap> {
        match &self.target {
            SegTarget::Hard(l) => Some(l),
            SegTarget::Soft(_) => None,
        }
    }

    /// Target as a per-pixel class distribution (one-hot for hard labels).
    pub fn distribution(&self) -> Image<S> {
        match &self.target {
            SegTarget::Soft(p) => p.clone(),
            SegTarget::Hard(l) => one_hot(l, self.classes()),
        }
    }
}

pub fn one_hot<S: Scalar>(labels: &LabelMap, classes: usize) -> Image<S> {
    Image::from_fn(labels.height(), labels.width(), classes, |y, x, c| {
        if labels.get(y, x) as usize == c {
            S::one()
        } else {
            S::zero()
        }
    })
}
