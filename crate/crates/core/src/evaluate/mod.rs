//! Similarity, privacy and utility metrics for a synthetic table against
//! the real one.

mod association;
mod classifiers;
mod privacy;
mod report;
mod stats;
mod utility;

pub use association::{correlation_ratio, diff_corr, pearson, theils_u, AssociationMatrix};
pub use classifiers::{builtin_plugins, ClassifierPlugin, DecisionTree, LogisticRegression};
pub use privacy::{
    dcr, nearest_two, nndr, nndr_ratio, DistancePair, DistanceSpace, PairValues, PrivacyReport,
    PRIVACY_PERCENTILE,
};
pub use report::{
    similarity, ColumnSeries, ColumnWasserstein, EvaluateOptions, EvaluationReport,
    SimilarityReport,
};
pub use stats::{aligned_frequencies, ecdf_points, jsd, percentile, wasserstein_1d};
pub use utility::{
    binary_auc, macro_auc, macro_f1, ml_utility, FeatureEncoder, ModelUtility, Scores,
    UtilityReport,
};
