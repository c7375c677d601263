//! Pre-norm GPT-2 style transformer over patch tokens, with per-tensor
//! freezing, weight containers and a hand-written reverse pass.

mod config;
mod container;
mod model;
mod optim;
mod store;

pub use config::{BackboneConfig, IoConfig, ModelConfig, Pooling};
pub use container::{
    decode_container, decode_tensors, encode_container, load_weights, save_weights, ContainerManifest, RawTensor,
    TensorEntry, BLOB_FILE, MANIFEST_FILE,
};
pub use model::{apply_head, backward, forward, forward_train, predict, AttentionMode, Cache, ForwardTrace, LN_EPS};
pub use optim::{backward_and_step, loss_and_grad, sample_loss, Adam, Sample, Target};
pub use store::{
    init_random, is_block_core, mix_weights, quantize, BlockParams, FreezeMask, MixMode, ParameterStore, Tensor,
};
