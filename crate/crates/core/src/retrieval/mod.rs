//! Binary codes, exact Hamming-space search and retrieval metrics.

mod metrics;
mod packed;
mod rank;

pub use metrics::{
    mean_average_precision, precision_at, radius_metrics, LabelRelevance, MapReport, RadiusReport,
    Relevance,
};
pub use packed::{binarize_and_pack, hamming, hamming_words, Code, PackedCodes, CODES_MAGIC, CODES_VERSION};
pub use rank::{hamming_radius_retrieve, rank_all, rank_database, Hit, RankedResult};
