//! A small fixed-architecture segmenter with hand-written reverse mode,
//! AdamW, full training and head-only fine-tuning.

pub mod checkpoint;
mod conv;
mod net;
mod optim;
mod tensor;
mod train;
pub mod upsample;

pub use conv::Conv2d;
pub use net::{
    downsample_labels, Forward, ForwardCache, Gradients, SegNet, ARCHITECTURE, BACKBONE_TENSORS,
    NUM_TENSORS,
};
pub use optim::AdamW;
pub use tensor::Tensor;
pub use train::{finetune, train, validation_miou, EpochLog, TrainConfig, TrainLog, Trained};
