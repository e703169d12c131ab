//! Pre-training of the one-step chunk generator: demonstrations, the
//! average-velocity objective and generation.

mod dataset;
mod model;
mod normalize;
mod objective;
mod train;

pub use dataset::{
    collect_demonstrations, CollectConfig, Dataset, DemoPair, ExpertFactory, ScenarioEntry,
    DATASET_FORMAT_VERSION,
};
pub use model::{MeanFlowConfig, MeanFlowNet, MeanFlowSpec, MEANFLOW_CHECKPOINT_KIND};
pub use normalize::{Normalizer, STATE_CLIP};
pub use objective::{
    interpolant, meanflow_loss, meanflow_loss_with, meanflow_target, regression_loss, sample_times,
    P_EQUAL_TIMES,
};
pub use train::{generation_mse, pretrain, train_meanflow, TrainConfig};
