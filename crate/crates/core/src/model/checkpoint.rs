//! Checkpoint container.
//!
//! Layout: the 8-byte magic `SRCIDCKP`, a little-endian `u32` format
//! version, a little-endian `u64` byte length followed by a UTF-8 JSON
//! metadata block, then every parameter tensor as little-endian `f32` in
//! registry order (the order of `meta.parameters`). When
//! `meta.has_moments` is set, optimizer momentum buffers follow in the
//! same order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{build_network, Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"SRCIDCKP";
pub const FORMAT_VERSION: u32 = 1;

/// What the heads were trained for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadMeta {
    pub task: String,
    pub in_channels: usize,
    pub out_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    /// Root seed; every generator state is derived from it and the epoch.
    pub seed: u64,
    pub best_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub spec: NetworkSpec,
    pub head: HeadMeta,
    pub state: TrainState,
    pub parameters: Vec<ParamInfo>,
    pub has_moments: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: Vec<Vec<f32>>,
    pub moments: Option<Vec<Vec<f32>>>,
}

fn to_f32<S: Scalar>(v: &[S]) -> Vec<f32> {
    v.iter().map(|x| x.as_f64() as f32).collect()
}

impl Checkpoint {
    pub fn from_network<S: Scalar>(
        net: &Network<S>,
        head: HeadMeta,
        state: TrainState,
        moments: Option<&[Vec<S>]>,
    ) -> Self {
        Self {
            meta: CheckpointMeta {
                format_version: FORMAT_VERSION,
                spec: net.spec.clone(),
                head,
                state,
                parameters: net
                    .params
                    .iter()
                    .map(|p| ParamInfo {
                        name: p.name.clone(),
                        shape: p.shape.clone(),
                    })
                    .collect(),
                has_moments: moments.is_some(),
            },
            params: net.params.iter().map(|p| to_f32(&p.value)).collect(),
            moments: moments.map(|m| m.iter().map(|v| to_f32(v)).collect()),
        }
    }

    /// Rebuilds the network, checking every tensor against the spec.
    pub fn to_network<S: Scalar>(&self) -> Result<Network<S>> {
        let mut net = build_network::<S>(&self.meta.spec).map_err(|e| Error::Format(e.to_string()))?;
        for (p, info) in net.params.iter().zip(&self.meta.parameters) {
            if p.name != info.name || p.shape != info.shape {
                return Err(Error::Format(format!(
                    "checkpoint tensor {} {:?} does not match spec tensor {} {:?}",
                    info.name, info.shape, p.name, p.shape
                )));
            }
        }
        let values = self
            .meta
            .parameters
            .iter()
            .zip(&self.params)
            .map(|(i, v)| (i.name.clone(), v.iter().map(|&x| S::of(x as f64)).collect()))
            .collect();
        net.load_values(values)?;
        Ok(net)
    }

    pub fn moments<S: Scalar>(&self) -> Option<Vec<Vec<S>>> {
        self.moments
            .as_ref()
            .map(|m| m.iter().map(|v| v.iter().map(|&x| S::of(x as f64)).collect()).collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.params.iter().map(Vec::len).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.iter().chain(self.moments.iter().flatten()) {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("corrupt checkpoint: {m}"));
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let json = bytes.get(20..20 + len).ok_or_else(|| bad("truncated metadata"))?;
        let meta: CheckpointMeta =
            serde_json::from_slice(json).map_err(|e| bad(&format!("metadata: {e}")))?;
        let sizes: Vec<usize> = meta.parameters.iter().map(|p| p.shape.iter().product()).collect();
        let total: usize = sizes.iter().sum::<usize>() * if meta.has_moments { 2 } else { 1 };
        let payload = &bytes[20 + len..];
        if payload.len() != total * 4 {
            return Err(bad(&format!("payload is {} bytes, expected {}", payload.len(), total * 4)));
        }
        let mut floats = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let mut take = || -> Vec<Vec<f32>> {
            sizes.iter().map(|&n| floats.by_ref().take(n).collect()).collect()
        };
        let params = take();
        let moments = meta.has_moments.then(take);
        Ok(Self { meta, params, moments })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Loads the checkpoint's network and replaces its heads.
pub fn swap_head<S: Scalar>(checkpoint: &Checkpoint, new_in: usize, new_out: usize, seed: u64) -> Result<Network<S>> {
    if new_in == 0 || new_out == 0 {
        return Err(Error::config("model", "head channel counts must be positive"));
    }
    checkpoint.to_network::<S>()?.swap_head(new_in, new_out, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::is_head;

    fn ckpt() -> Checkpoint {
        let spec = NetworkSpec {
            in_channels: 4,
            out_channels: 2,
            depth: 1,
            base_width: 2,
            ..NetworkSpec::default()
        };
        let net = build_network::<f32>(&spec).unwrap();
        let moments = net.zero_grads();
        Checkpoint::from_network(
            &net,
            HeadMeta {
                task: "csi".into(),
                in_channels: 4,
                out_channels: 2,
            },
            TrainState {
                epoch: 3,
                seed: 1,
                best_metric: Some(0.5),
            },
            Some(&moments),
        )
    }

    #[test]
    fn bytes_round_trip() {
        let c = ckpt();
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap(), c);
    }

    #[test]
    fn corruption_is_a_format_error() {
        let mut b = ckpt().to_bytes().unwrap();
        b.pop();
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::Format(_))));
        assert!(matches!(Checkpoint::from_bytes(b"nonsense"), Err(Error::Format(_))));
    }

    #[test]
    fn swap_keeps_body() {
        let c = ckpt();
        let before = c.to_network::<f32>().unwrap();
        let after = swap_head::<f32>(&c, 2, 3, 99).unwrap();
        assert_eq!(before.param_hash(|n| !is_head(n)), after.param_hash(|n| !is_head(n)));
        assert_ne!(before.param_hash(is_head), after.param_hash(is_head));
        assert_eq!(after.spec.in_channels, 2);
    }
}
