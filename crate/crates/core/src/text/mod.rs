//! Text classifiers over note embeddings and the concat baseline.

mod concat;
mod embedding;
mod mlp;

pub use concat::{train_concat_baseline, Column, TabularEncoder};
pub use embedding::{sidecar_path, EmbeddingMatrix, MAGIC};
pub use mlp::{
    cross_fitted_proba, fit_mlp, fold_assignment, train_fixed_epochs, train_mlp, MlpFit,
    MlpGradient, MlpModel, MlpTrainConfig, Optimizer,
};
