//! On-disk phantom datasets: one raw little-endian f32 array per patient
//! for images and one for labels, plus a `dataset.json` sidecar.
//!
//! Image arrays are laid out slice-major then row-major with channels last
//! (`z, y, x, t`); label arrays are `z, y, x` with class indices stored as
//! floats.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::phantom::{PhantomParams, PhantomPatient};
use crate::data::volume::{LabelVolume, Volume};
use crate::error::{Error, Result};
use crate::grid::LabelMap;
use crate::scalar::Scalar;

pub const SIDECAR: &str = "dataset.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientFiles {
    pub id: String,
    pub image: String,
    pub labels: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    /// `[height, width, depth, modalities]`.
    pub shape: [usize; 4],
    pub dtype: String,
    pub layout: String,
    pub modality_names: Vec<String>,
    pub class_names: Vec<String>,
    pub seed: u64,
    pub params: PhantomParams,
    pub patients: Vec<PatientFiles>,
}

fn write_f32(path: &Path, values: impl Iterator<Item = f32>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(f32::to_le_bytes).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Format(format!(
            "{}: {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn save_phantom<S: Scalar>(
    dir: &Path,
    params: &PhantomParams,
    patients: &[PhantomPatient<S>],
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(patients.len());
    for p in patients {
        let id = p.volume.patient_id.clone();
        let image = format!("{id}_image.f32");
        let labels = format!("{id}_labels.f32");
        write_f32(
            &dir.join(&image),
            p.volume.as_slice().iter().map(|v| v.as_f64() as f32),
        )?;
        write_f32(
            &dir.join(&labels),
            p.labels
                .slices
                .iter()
                .flat_map(|s| s.as_slice().iter().map(|&l| l as f32)),
        )?;
        files.push(PatientFiles { id, image, labels });
    }
    let sidecar = Sidecar {
        format_version: FORMAT_VERSION,
        shape: [params.size, params.size, params.depth, params.modalities],
        dtype: "float32-le".into(),
        layout: "z,y,x,t".into(),
        modality_names: params.modality_names(),
        class_names: params.class_names(),
        seed: params.seed,
        params: params.clone(),
        patients: files,
    };
    let path = dir.join(SIDECAR);
    std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&path, e))
}

pub fn load_phantom<S: Scalar>(dir: &Path) -> Result<(Sidecar, Vec<PhantomPatient<S>>)> {
    let path = dir.join(SIDECAR);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    if sidecar.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset format version {}",
            sidecar.format_version
        )));
    }
    let [h, w, z, t] = sidecar.shape;
    let mut patients = Vec::with_capacity(sidecar.patients.len());
    for f in &sidecar.patients {
        let voxels = read_f32(&dir.join(&f.image), h * w * z * t)?;
        let volume = Volume::new(
            h,
            w,
            z,
            voxels.into_iter().map(|v| S::of(v as f64)).collect(),
            f.id.clone(),
            sidecar.modality_names.clone(),
        )?;
        let raw = read_f32(&dir.join(&f.labels), h * w * z)?;
        let slices = raw
            .chunks_exact(h * w)
            .map(|c| LabelMap::from_vec(h, w, c.iter().map(|&v| v as u8).collect()))
            .collect::<Result<_>>()?;
        patients.push(PhantomPatient {
            volume,
            labels: LabelVolume { slices },
        });
    }
    Ok((sidecar, patients))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::phantom::generate_phantom_dataset;

    #[test]
    fn save_then_load_preserves_f32_data() {
        let params = PhantomParams {
            n_patients: 2,
            size: 16,
            depth: 3,
            lesion: crate::data::phantom::LesionParams {
                radius: (0.1, 0.15),
                area_fraction: (0.005, 0.3),
                ..Default::default()
            },
            ..PhantomParams::default()
        };
        let data = generate_phantom_dataset::<f32>(&params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_phantom(dir.path(), &params, &data).unwrap();
        let (sidecar, back) = load_phantom::<f32>(dir.path()).unwrap();
        assert_eq!(sidecar.params, params);
        assert_eq!(back, data);
    }
}
