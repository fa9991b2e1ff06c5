//! Minimal tensor and layer engine: direct-loop convolutions, an LSTM,
//! dense/pool/dropout layers, a softmax/cross-entropy head and RMSprop.
//! Everything is f64 and deterministic under explicit seeds.

mod checkpoint;
mod conv;
mod dense;
mod dropout;
mod layer;
mod loss;
mod lstm;
mod network;
mod optim;
mod pool;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointLayer, CHECKPOINT_MAGIC};
pub use conv::{Conv2d, Conv3d};
pub use dense::{Dense, Flatten, Relu};
pub use dropout::{dropout_forward, Dropout};
pub use layer::{Layer, LayerKind, Mode};
pub use loss::{softmax_cross_entropy, SoftmaxXent};
pub use lstm::Lstm;
pub use network::{argmax, Network};
pub use optim::RmsProp;
pub use pool::MaxPool;
pub use tensor::Tensor;
