//! Correlations, partial correlations, dependency matrices, pruned dependency
//! networks and their bootstrap stability.

mod adn;
mod bootstrap;
mod correlation;
mod dependency;
mod table;

pub use adn::{build_adn, edge_order, AdnGraph, Edge, Prune};
pub use bootstrap::{bootstrap, sample_rows, BootstrapConfig, BootstrapReport, BootstrapRow, MAX_SKIPPED_FRACTION};
pub use correlation::{
    partial, partial_correlation, pearson, pearson_pair, CorrelationMatrix, DEFAULT_MIN_SAMPLES, DEGENERACY_EPS,
};
pub use dependency::{complete_submatrix, dependency_matrix, dependency_values, DependencyMatrix};
pub use table::{encode_party, Exclusions, NumericTable, PARTY_COLUMNS};
