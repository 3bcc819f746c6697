//! Bidirectional transformer encoder over shot tokens: pre-RMSNorm blocks
//! of multi-head self-attention with rotary positions followed by a gated
//! SiLU feed-forward network.

mod checkpoint;
mod forward;
mod params;
mod rope;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{encode, encode_graph, BoundParams};
pub use params::{init_params, EncoderConfig, LayerParams, ModelParams};
pub use rope::rope_rotate;
