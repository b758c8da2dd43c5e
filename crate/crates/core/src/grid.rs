//! Dense 2D grids: multi-channel images, binary masks and label maps.
//!
//! All grids are row-major with `y` as the row index. Images are stored
//! channel-last, so the value of channel `c` at `(y, x)` lives at
//! `(y * width + x) * channels + c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Multi-channel image, `height x width x channels`, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<S> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<S>,
}

impl<S: Scalar> Image<S> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![S::zero(); height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Domain(format!(
                "image buffer has {} values, expected {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(y, x, c)` at every position.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> S,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> S {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: S) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    /// All channel values at one pixel.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[S] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [S] {
        let start = (y * self.width + x) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Copies one channel into a planar `height * width` buffer.
    pub fn channel(&self, c: usize) -> Vec<S> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Channel-wise concatenation; all images must share spatial size.
    pub fn concat_channels(parts: &[&Image<S>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Domain("cannot concatenate zero images".into()))?;
        let (h, w) = (first.height, first.width);
        if parts.iter().any(|p| p.height != h || p.width != w) {
            return Err(Error::Domain("spatial size mismatch in concatenation".into()));
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(h * w * channels);
        for p in 0..h * w {
            for part in parts {
                let c = part.channels;
                data.extend_from_slice(&part.data[p * c..(p + 1) * c]);
            }
        }
        Ok(Self {
            height: h,
            width: w,
            channels,
            data,
        })
    }

    /// Extracts channels `start..start + count`.
    pub fn channel_range(&self, start: usize, count: usize) -> Result<Self> {
        if start + count > self.channels {
            return Err(Error::Domain(format!(
                "channel range {start}..{} exceeds {} channels",
                start + count,
                self.channels
            )));
        }
        let mut data = Vec::with_capacity(self.pixels() * count);
        for p in 0..self.pixels() {
            let base = p * self.channels + start;
            data.extend_from_slice(&self.data[base..base + count]);
        }
        Ok(Self {
            height: self.height,
            width: self.width,
            channels: count,
            data,
        })
    }

    pub fn same_shape(&self, other: &Image<S>) -> bool {
        self.shape() == other.shape()
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<T: Scalar>(&self) -> Image<T> {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| T::of(v.as_f64())).collect(),
        }
    }

    /// Accumulates `weight * other` into `self`.
    pub fn add_scaled(&mut self, other: &Image<S>, weight: S) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Domain("shape mismatch in weighted sum".into()));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += weight * b;
        }
        Ok(())
    }
}

/// Binary mask, `height x width`, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Domain(format!(
                "mask buffer has {} values, expected {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn coverage(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.data.len() as f64
        }
    }

    /// Number of pixels set in both masks.
    pub fn intersection(&self, other: &Mask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn union_count(&self, other: &Mask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a || b)
            .count()
    }

    pub fn or(&self, other: &Mask) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        }
    }
}

/// Integer class labels, `height x width`, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Domain(format!(
                "label buffer has {} values, expected {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn max_label(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Binary mask of pixels whose label is in `classes`.
    pub fn select(&self, classes: &[u8]) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|l| classes.contains(l)).collect(),
        }
    }

    /// Sorted set of label values present.
    pub fn label_set(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.data {
            seen[l as usize] = true;
        }
        (0..=255u8).filter(|&l| seen[l as usize]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_last_indexing() {
        let img = Image::<f32>::from_fn(2, 3, 2, |y, x, c| (y * 100 + x * 10 + c) as f32);
        assert_eq!(img.get(1, 2, 1), 121.0);
        assert_eq!(img.pixel(1, 0), &[100.0, 101.0]);
        assert_eq!(img.channel(1), vec![1., 11., 21., 101., 111., 121.]);
    }

    #[test]
    fn concat_then_split_channels() {
        let a = Image::<f64>::from_fn(2, 2, 1, |y, x, _| (y * 2 + x) as f64);
        let b = Image::<f64>::from_fn(2, 2, 2, |y, x, c| -((y * 2 + x) as f64) - c as f64);
        let ab = Image::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(ab.channels(), 3);
        assert_eq!(ab.channel_range(0, 1).unwrap(), a);
        assert_eq!(ab.channel_range(1, 2).unwrap(), b);
    }

    #[test]
    fn mask_counts() {
        let a = Mask::from_vec(2, 2, vec![true, true, false, false]).unwrap();
        let b = Mask::from_vec(2, 2, vec![true, false, true, false]).unwrap();
        assert_eq!(a.intersection(&b), 1);
        assert_eq!(a.union_count(&b), 3);
        assert_eq!(a.or(&b).count(), 3);
    }

    #[test]
    fn label_selection() {
        let l = LabelMap::from_vec(1, 4, vec![0, 1, 2, 2]).unwrap();
        assert_eq!(l.select(&[1, 2]).count(), 3);
        assert_eq!(l.label_set(), vec![0, 1, 2]);
    }
}
