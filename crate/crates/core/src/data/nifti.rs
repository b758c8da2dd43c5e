//! Minimal NIfTI-1 reader and writer (`.nii` and `.nii.gz`, single file).
//!
//! Only what the preprocessing pipeline needs: the dimension block, the
//! datatype, voxel spacing, the data offset and the intensity scaling.
//! Voxel `(i, j, k, t)` maps to image column `i`, row `j`, slice `k` and
//! modality `t`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::data::volume::Volume;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const HEADER_SIZE: usize = 348;
const DATA_OFFSET: usize = 352;

/// Decoded image grid in NIfTI axis order `(x, y, z, t)`, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiImage {
    pub dims: [usize; 4],
    pub spacing: [f64; 3],
    pub data: Vec<f64>,
}

impl NiftiImage {
    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize, t: usize) -> f64 {
        let [nx, ny, nz, _] = self.dims;
        self.data[((t * nz + z) * ny + y) * nx + x]
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn parse<B: ByteOrder>(bytes: &[u8]) -> Result<NiftiImage> {
    let dim: Vec<i16> = (0..8).map(|i| B::read_i16(&bytes[40 + 2 * i..])).collect();
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::Format(format!("invalid dim[0] = {ndim}")));
    }
    if ndim > 4 && dim[5..=ndim as usize].iter().any(|&d| d > 1) {
        return Err(Error::Format("more than four dimensions are not supported".into()));
    }
    let mut dims = [1usize; 4];
    for (i, d) in dims.iter_mut().enumerate().take((ndim as usize).min(4)) {
        let v = dim[i + 1];
        if v < 1 {
            return Err(Error::Format(format!("invalid dim[{}] = {v}", i + 1)));
        }
        *d = v as usize;
    }
    let datatype = B::read_i16(&bytes[70..]);
    let pixdim: Vec<f32> = (0..8).map(|i| B::read_f32(&bytes[76 + 4 * i..])).collect();
    let vox_offset = B::read_f32(&bytes[108..]) as usize;
    let slope = B::read_f32(&bytes[112..]) as f64;
    let inter = B::read_f32(&bytes[116..]) as f64;
    let magic = &bytes[344..348];
    if magic != b"n+1\0" {
        return Err(Error::Format("only single-file NIfTI-1 (n+1) is supported".into()));
    }

    let n: usize = dims.iter().product();
    let (width, decode): (usize, fn(&[u8]) -> f64) = match datatype {
        2 => (1, |b| b[0] as f64),
        256 => (1, |b| b[0] as i8 as f64),
        4 => (2, |b| B::read_i16(b) as f64),
        512 => (2, |b| B::read_u16(b) as f64),
        8 => (4, |b| B::read_i32(b) as f64),
        768 => (4, |b| B::read_u32(b) as f64),
        16 => (4, |b| B::read_f32(b) as f64),
        64 => (8, |b| B::read_f64(b)),
        other => return Err(Error::Format(format!("unsupported NIfTI datatype {other}"))),
    };
    let start = vox_offset.max(HEADER_SIZE);
    let end = start + n * width;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "truncated data: need {end} bytes, have {}",
            bytes.len()
        )));
    }
    let (slope, inter) = if slope == 0.0 || !slope.is_finite() {
        (1.0, 0.0)
    } else {
        (slope, inter)
    };
    let data = bytes[start..end]
        .chunks_exact(width)
        .map(|c| decode(c) * slope + inter)
        .collect();
    let spacing = [1, 2, 3].map(|i| {
        let v = pixdim[i].abs() as f64;
        if v > 0.0 && v.is_finite() {
            v
        } else {
            1.0
        }
    });
    Ok(NiftiImage {
        dims,
        spacing,
        data,
    })
}

pub fn read_nifti(path: &Path) -> Result<NiftiImage> {
    let bytes = read_all(path)?;
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Format(format!("{}: file shorter than a NIfTI header", path.display())));
    }
    if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        parse::<LittleEndian>(&bytes)
    } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        parse::<BigEndian>(&bytes)
    } else {
        Err(Error::Format(format!("{}: not a NIfTI-1 file", path.display())))
    }
}

/// Writes a little-endian float32 NIfTI-1 file; gzip when the name ends in `.gz`.
pub fn write_nifti(path: &Path, img: &NiftiImage) -> Result<()> {
    let mut header = vec![0u8; DATA_OFFSET];
    LittleEndian::write_i32(&mut header[0..], HEADER_SIZE as i32);
    let ndim = if img.dims[3] > 1 { 4 } else { 3 };
    LittleEndian::write_i16(&mut header[40..], ndim);
    for (i, &d) in img.dims.iter().enumerate() {
        LittleEndian::write_i16(&mut header[42 + 2 * i..], d as i16);
    }
    for i in 4..7 {
        LittleEndian::write_i16(&mut header[42 + 2 * i..], 1);
    }
    LittleEndian::write_i16(&mut header[70..], 16);
    LittleEndian::write_i16(&mut header[72..], 32);
    LittleEndian::write_f32(&mut header[76..], 1.0);
    for (i, &s) in img.spacing.iter().enumerate() {
        LittleEndian::write_f32(&mut header[80 + 4 * i..], s as f32);
    }
    LittleEndian::write_f32(&mut header[108..], DATA_OFFSET as f32);
    LittleEndian::write_f32(&mut header[112..], 1.0);
    header[344..348].copy_from_slice(b"n+1\0");
    let mut bytes = header;
    bytes.reserve(img.data.len() * 4);
    for &v in &img.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let gz = path.extension().is_some_and(|e| e == "gz");
    let write = || -> std::io::Result<()> {
        let file = File::create(path)?;
        if gz {
            let mut enc = GzEncoder::new(file, Compression::fast());
            enc.write_all(&bytes)?;
            enc.finish()?;
        } else {
            let mut file = file;
            file.write_all(&bytes)?;
        }
        Ok(())
    };
    write().map_err(|e| Error::io(path, e))
}

/// Loads one patient from per-modality files (3D files contribute one
/// modality, 4D files one per volume along the fourth axis).
pub fn load_volume<S: Scalar>(
    paths: &[PathBuf],
    patient_id: &str,
    modality_names: &[String],
) -> Result<Volume<S>> {
    let images: Vec<NiftiImage> = paths.iter().map(|p| read_nifti(p)).collect::<Result<_>>()?;
    let first = images
        .first()
        .ok_or_else(|| Error::Schema(format!("patient {patient_id} lists no image files")))?;
    let [nx, ny, nz, _] = first.dims;
    if images.iter().any(|i| i.dims[..3] != first.dims[..3]) {
        return Err(Error::Schema(format!(
            "patient {patient_id}: modality files have different grids"
        )));
    }
    let t_total: usize = images.iter().map(|i| i.dims[3]).sum();
    if t_total != modality_names.len() {
        return Err(Error::Schema(format!(
            "patient {patient_id}: found {t_total} modalities, manifest declares {}",
            modality_names.len()
        )));
    }
    let mut voxels = Vec::with_capacity(nx * ny * nz * t_total);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                for img in &images {
                    for t in 0..img.dims[3] {
                        voxels.push(S::of(img.get(x, y, z, t)));
                    }
                }
            }
        }
    }
    let mut v = Volume::new(ny, nx, nz, voxels, patient_id, modality_names.to_vec())?;
    v.spacing = first.spacing;
    Ok(v)
}

/// Loads a label file as integer classes.
pub fn load_labels(path: &Path) -> Result<crate::data::volume::LabelVolume> {
    let img = read_nifti(path)?;
    let [nx, ny, nz, nt] = img.dims;
    if nt != 1 {
        return Err(Error::Schema(format!("{}: label file must be 3D", path.display())));
    }
    let mut slices = Vec::with_capacity(nz);
    for z in 0..nz {
        let mut data = Vec::with_capacity(nx * ny);
        for y in 0..ny {
            for x in 0..nx {
                let v = img.get(x, y, z, 0);
                if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                    return Err(Error::Schema(format!(
                        "{}: label value {v} is not a class index",
                        path.display()
                    )));
                }
                data.push(v as u8);
            }
        }
        slices.push(crate::grid::LabelMap::from_vec(ny, nx, data)?);
    }
    Ok(crate::data::volume::LabelVolume { slices })
}
