//! Pearson correlation matrices, K-means clustering, attention-based
//! modulation scores and parameter ablation.

pub mod correlation;
pub mod kmeans;
pub mod modulation;

pub use correlation::{correlation_matrix, correlation_matrix_lenient, pearson, CorrelationMatrix};
pub use kmeans::{kmeans, kmeans_best_of, KMeansResult};
pub use modulation::{
    ablation_effect, ablation_with_train_mean, modulation_report, modulation_scores, ModulationReport,
    ParameterEffect, Replacement, SURROGATE_LABEL,
};
