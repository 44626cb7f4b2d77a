//! Forward noising, masked training objective, training loop and samplers.

pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use loss::{dsm_loss, dsm_loss_graph, loss_and_grads, masked_dsm_loss, LossBatch, LossGraph};
pub use model::{analytic_gaussian_score, eps_to_score, EpsModel, GaussianOracle};
pub use sampler::{impute, impute_encoded, sample, sample_encoded, CHUNK_ROWS};
pub use schedule::{build_vp_schedule, forward_perturb, perturb_value, NoiseSchedule};
pub use train::{delete_incomplete_rows, mean_impute, train, train_encoded, PreprocessMode, TrainConfig, TrainedModel};
