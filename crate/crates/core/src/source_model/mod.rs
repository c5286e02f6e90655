//! The detection network: three feed-forward modality encoders, a
//! two-layer transformer fusion module over the three encodings, and a
//! two-layer classifier. Gradients are computed by hand-written reverse
//! mode.

mod backward;
mod checkpoint;
mod forward;
mod loss;
mod optim;
mod params;
mod pretrain;
pub mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use forward::{forward, forward_features, ForwardTrace};
pub use loss::{
    cross_entropy, entropy, loss_and_gradients, loss_gradients, AlignSpec, GradientSet,
    LossBreakdown, LossSpec, PROB_FLOOR,
};
pub use optim::{Adam, AdamConfig};
pub use params::{
    init_model, AdaptableMask, Attention, Classifier, Encoder, FusionLayer, LayerNorm, Linear,
    ModelConfig, ModelParams,
};
pub use pretrain::{pretrain, EpochStats, PretrainConfig};
pub use tensor::Tensor;

pub(crate) use forward::argmax;
pub(crate) use loss::entropy_unchecked;
