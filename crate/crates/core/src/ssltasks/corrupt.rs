//! Baseline corruption tasks on a grid of cells.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::grid::{Image, Mask};
use crate::scalar::Scalar;
use crate::seed::Rng;
use crate::types::{CorruptionSpec, MultiModalSlice, Provenance, TrainingSample};

/// A rectangular cell `(y0, x0, height, width)`.
pub type Cell = (usize, usize, usize, usize);

/// Row-major cells tiling an `h x w` image; ragged cells on the far edges
/// are included.
pub fn cells(h: usize, w: usize, grid: (usize, usize)) -> Vec<Cell> {
    let (gh, gw) = grid;
    let mut out = Vec::new();
    for y0 in (0..h).step_by(gh.max(1)) {
        for x0 in (0..w).step_by(gw.max(1)) {
            out.push((y0, x0, gh.min(h - y0), gw.min(w - x0)));
        }
    }
    out
}

fn check_grid<S: Scalar>(img: &Image<S>, grid: (usize, usize)) -> Result<()> {
    if grid.0 == 0 || grid.1 == 0 {
        return Err(Error::config("task.grid", "grid cells must be at least 1x1"));
    }
    if grid.0 > img.height() || grid.1 > img.width() {
        return Err(Error::Domain(format!(
            "grid {:?} exceeds image {}x{}",
            grid,
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

fn sample_from<S: Scalar>(slice: &MultiModalSlice<S>, input: Image<S>) -> TrainingSample<S> {
    TrainingSample {
        input,
        target: slice.pixels.clone(),
        provenance: Provenance {
            sources: vec![slice.source_ref()],
            weights: vec![vec![1.0]],
        },
    }
}

/// Zeroes every cell whose `keep` flag is false, across all channels.
pub fn inpaint_with<S: Scalar>(img: &Image<S>, grid: (usize, usize), keep: &[bool]) -> Result<Image<S>> {
    check_grid(img, grid)?;
    let cs = cells(img.height(), img.width(), grid);
    if keep.len() != cs.len() {
        return Err(Error::Domain(format!("{} cell draws for {} cells", keep.len(), cs.len())));
    }
    let mut out = img.clone();
    for (&(y0, x0, ch, cw), &k) in cs.iter().zip(keep) {
        if !k {
            for y in y0..y0 + ch {
                for x in x0..x0 + cw {
                    out.pixel_mut(y, x).iter_mut().for_each(|v| *v = S::zero());
                }
            }
        }
    }
    Ok(out)
}

/// Each cell survives with probability `gamma`.
pub fn inpaint_corrupt<S: Scalar>(
    slice: &MultiModalSlice<S>,
    spec: &CorruptionSpec,
    rng: &mut Rng,
) -> Result<TrainingSample<S>> {
    let n = cells(slice.pixels.height(), slice.pixels.width(), spec.grid).len();
    let keep: Vec<bool> = (0..n).map(|_| rng.random_bool(spec.gamma)).collect();
    Ok(sample_from(slice, inpaint_with(&slice.pixels, spec.grid, &keep)?))
}

/// Replaces one `k x k` cell at `(y0, x0)` by `P cell Q`: output row `i`
/// reads row `rows[i]`, output column `j` reads column `cols[j]`.
pub fn permute_cell<S: Scalar>(img: &mut Image<S>, y0: usize, x0: usize, rows: &[usize], cols: &[usize]) {
    let (k, t) = (rows.len(), img.channels());
    let mut block = Vec::with_capacity(k * cols.len() * t);
    for &r in rows {
        for &c in cols {
            block.extend_from_slice(img.pixel(y0 + r, x0 + c));
        }
    }
    let mut it = block.chunks_exact(t);
    for i in 0..k {
        for j in 0..cols.len() {
            img.pixel_mut(y0 + i, x0 + j).copy_from_slice(it.next().expect("block size"));
        }
    }
}

/// Shuffles rows and columns of each full square cell with probability
/// `gamma`, one permutation pair per cell shared by all channels. Ragged
/// edge cells are left alone.
pub fn pixel_shuffle_corrupt<S: Scalar>(
    slice: &MultiModalSlice<S>,
    spec: &CorruptionSpec,
    rng: &mut Rng,
) -> Result<TrainingSample<S>> {
    if spec.grid.0 != spec.grid.1 {
        return Err(Error::config(
            "task.grid",
            format!("pixel shuffle needs square cells, got {:?}", spec.grid),
        ));
    }
    check_grid(&slice.pixels, spec.grid)?;
    let k = spec.grid.0;
    let mut out = slice.pixels.clone();
    for (y0, x0, ch, cw) in cells(out.height(), out.width(), spec.grid) {
        if ch != k || cw != k {
            continue;
        }
        if rng.random_bool(spec.gamma) {
            let mut rows: Vec<usize> = (0..k).collect();
            let mut cols: Vec<usize> = (0..k).collect();
            rows.shuffle(rng);
            cols.shuffle(rng);
            permute_cell(&mut out, y0, x0, &rows, &cols);
        }
    }
    Ok(sample_from(slice, out))
}

/// Zero-based centre of a cell of size `h x w`.
pub fn cell_center(h: usize, w: usize) -> (usize, usize) {
    (h.div_ceil(2) - 1, w.div_ceil(2) - 1)
}

/// Fills every cell with its centre value.
pub fn superres_image<S: Scalar>(img: &Image<S>, grid: (usize, usize)) -> Result<Image<S>> {
    check_grid(img, grid)?;
    let mut out = img.clone();
    for (y0, x0, ch, cw) in cells(img.height(), img.width(), grid) {
        let (cy, cx) = cell_center(ch, cw);
        let v = img.pixel(y0 + cy, x0 + cx).to_vec();
        for y in y0..y0 + ch {
            for x in x0..x0 + cw {
                out.pixel_mut(y, x).copy_from_slice(&v);
            }
        }
    }
    Ok(out)
}

pub fn superres_corrupt<S: Scalar>(slice: &MultiModalSlice<S>, spec: &CorruptionSpec) -> Result<TrainingSample<S>> {
    Ok(sample_from(slice, superres_image(&slice.pixels, spec.grid)?))
}

/// Cubic Bezier in Bernstein form.
pub fn bezier(v: f64, p: [f64; 4]) -> f64 {
    let u = 1.0 - v;
    u * u * u * p[0] + 3.0 * v * u * u * p[1] + 3.0 * v * v * u * p[2] + v * v * v * p[3]
}

/// Maps each channel's foreground through the curve after min-max rescaling
/// to `[0, 1]`, then undoes the rescale. Background pixels are unchanged;
/// an empty mask means the whole frame. A constant channel maps to `p[0]`
/// in rescaled units, which the inverse rescale sends back to the constant.
pub fn intensity_shift_with<S: Scalar>(img: &Image<S>, mask: &Mask, p: [f64; 4]) -> Image<S> {
    let full;
    let mask = if mask.is_empty() {
        full = Mask::full(img.height(), img.width());
        &full
    } else {
        mask
    };
    let t = img.channels();
    let mut out = img.clone();
    for c in 0..t {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, &m) in mask.as_slice().iter().enumerate() {
            if m {
                let v = img.as_slice()[i * t + c].as_f64();
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let range = hi - lo;
        for (i, &m) in mask.as_slice().iter().enumerate() {
            if m {
                let v = img.as_slice()[i * t + c].as_f64();
                let unit = if range > 0.0 { (v - lo) / range } else { 0.0 };
                let mapped = if range > 0.0 { bezier(unit, p) } else { p[0] };
                out.as_mut_slice()[i * t + c] = S::of(lo + mapped * range);
            }
        }
    }
    out
}

/// Control points are `spec.bezier` when set, otherwise drawn per call.
pub fn bezier_intensity_shift<S: Scalar>(
    slice: &MultiModalSlice<S>,
    spec: Option<&CorruptionSpec>,
    rng: &mut Rng,
) -> TrainingSample<S> {
    let p = match spec.and_then(|s| s.bezier) {
        Some(p) => p,
        None => [rng.random(), rng.random(), rng.random(), rng.random()],
    };
    sample_from(slice, intensity_shift_with(&slice.pixels, &slice.brain_mask, p))
}
