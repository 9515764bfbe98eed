//! Routine mining: symbol sequences, Sequitur grammars, shuffle-based
//! significance, routine networks and clustering of users by routine
//! similarity.

mod cluster;
mod network;
mod sequence;
mod sequitur;
mod significance;

pub use cluster::{agglomerative_cluster, complete_linkage, jaccard, jaccard_matrix, silhouette, Dendrogram, Merge};
pub use network::{edge_changes, routine_network, unordered, CategoryPair, EdgeChange, RoutineNetwork, UserRoutines};
pub use sequence::{count_occurrences, match_positions, Alphabet, SymbolSequence};
pub use sequitur::{compression_ratio, sequitur, Grammar, GrammarSymbol};
pub use significance::{score_routines, significant_routines, user_seed, z_score, RoutineScore, DEFAULT_SHUFFLES, Z_THRESHOLD};
