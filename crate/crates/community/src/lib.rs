//! Hashtag co-occurrence analysis: graph construction, betweenness and
//! clustering coefficients, greedy modularity communities, and sunburst
//! breakdowns by drug type or place.

mod communities;
mod error;
mod graph;
mod sunburst;

pub use communities::{detect_communities, modularity, CommunityPartition, DEFAULT_MAX_NODES_PER_CLUSTER};
pub use error::{CommunityError, Result};
pub use graph::{betweenness, build_graph, clustering_coefficient, HashtagGraph};
pub use sunburst::{
    sunburst_export, sunburst_from_counts, Grouping, Lexicon, SunburstNode, DRUG_TAXONOMY, OTHER_GROUP,
    PLACE_LEXICON,
};
