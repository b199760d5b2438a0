//! Rate-distortion training.

pub mod config;
pub mod data;
pub mod loss;
pub mod trainer;

pub use config::TrainConfig;
pub use data::{Sample, Sampler, TrainData};
pub use loss::{mse, rd_loss, rd_loss_grad, rd_loss_var};
pub use trainer::{
    checkpoint_name, fit_index_tables, initial_model, objective, train_ladder, train_run, LadderOutput, LossStats, MetricRow,
    RunSummary,
};
