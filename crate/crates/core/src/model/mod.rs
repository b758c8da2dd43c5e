//! Encoder-decoder backbone with swappable heads and checkpoints.

pub mod checkpoint;
pub mod layers;
pub mod network;

pub use checkpoint::{swap_head, Checkpoint, CheckpointMeta, HeadMeta, ParamInfo, TrainState};
pub use layers::Tensor;
pub use network::{
    build_network, is_head, kaiming, parameter_count, to_image, to_tensor, Cache, Grads, Network,
    NetworkSpec, NormKind, Nonlinearity, Param,
};
