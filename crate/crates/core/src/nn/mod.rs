//! Small 1-D convolutional autoencoders with hand-written backpropagation.

mod activation;
mod adam;
pub mod gradcheck;
mod io;
mod layers;
mod model;
mod train;

pub use activation::{af, af_derivative, af_forward, Activation};
pub use adam::{AdamHyper, AdamState};
pub use io::{load_model, model_from_json, model_to_json, save_model, MODEL_VERSION};
pub use layers::{
    conv1d_backward, conv1d_forward, upsample_backward, upsample_forward, LayerKind, LayerSpec,
};
pub use model::{
    build_model, default_layers, ArchConfig, CompanderModel, Gradients, LayerParams, Normalization,
    Role, TrainingMeta, DEFAULT_SOURCE_GAIN,
};
pub use train::{loss_floor_cl, train_destination, train_source, StopReason, TrainConfig, TrainReport};
