//! Statistics over metric tables and masks: hierarchical aggregation, removal
//! minima, class neighbourhood matrices and bootstrap rankings.

mod aggregate;
mod neighborhood;
mod ranking;

pub use aggregate::{
    aggregate_hierarchical, aggregate_removal, subject_scores, AggregationResult, ClassCell, SubjectClassCell,
    SubjectScore,
};
pub use neighborhood::{adjacency_counts, neighborhood_matrix, NeighborhoodMatrix, DISPLAY_THRESHOLD};
pub use ranking::{
    average_ranks, bootstrap_ranking, MethodRanking, RankFrequency, RankingConfig, RankingResult,
    DEFAULT_BOOTSTRAP_SAMPLES,
};
