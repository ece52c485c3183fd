//! Exact SHAP attributions for boosted-tree models and their triad aggregates.

pub mod groups;
pub mod oracle;
pub mod treeshap;

pub use groups::{dependence_table, group_shap, ols_attributions, GroupContribution};
pub use oracle::{shapley_oracle, ORACLE_MAX_FEATURES};
pub use treeshap::{expected_value, tree_shap, tree_shap_row, ShapMatrix};
