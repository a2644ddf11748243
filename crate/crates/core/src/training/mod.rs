//! Classifier backends and the fine-tuning loop.

mod backend;
mod model;
mod optimizer;
mod reference_cnn;
mod trainer;
mod weights;

pub use backend::{
    load_backend, predict_scores, BackendSpec, BackwardPass, ClassScores, ClassifierBackend, Gradients, ParamGroup,
    ParamTensor,
};
pub use model::{decode_rgb, ModelMetadata, TrainedModel, MODEL_METADATA_FILE, WEIGHTS_FILE};
pub use optimizer::{AdamWParams, Optimizer};
pub use reference_cnn::ReferenceCnn;
pub use trainer::{
    fine_tune, fine_tune_observed, EpochRecord, FineTuneOutcome, LoadedSample, TrainConfig, TrainingHistory,
};
pub use weights::{load_exact, load_matching, save_weights, WeightFile};

pub(crate) use backend::fit_resolution;

