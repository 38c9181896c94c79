//! Evaluation harness: exact KNN retrieval, downstream classifiers, AUC,
//! unseen-population splitting and feature-importance overlap.

mod forest;
mod knn;
mod linear;
mod report;
mod split;

pub use forest::{
    importance_overlap, top_quartile, train_rf, ForestConfig, ForestModel,
};
pub use knn::KnnIndex;
pub use linear::{auc, logreg_loss, train_logreg, LogRegConfig, LogRegModel};
pub use report::{kfold_indices, write_eval_csv, EvalRow};
pub use split::{title_overlap, unseen_split};
