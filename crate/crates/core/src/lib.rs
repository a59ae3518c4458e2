//! Structure-based search over typed object-graph models.
//!
//! Models are turned into bags of paths ([`graph`]), normalized
//! ([`normalize`]), stored in a prefix-split inverted index ([`index`]) and
//! ranked against example-model queries with an adapted Okapi BM25
//! ([`scorer`]).

pub mod classifier;
pub mod eval;
pub mod graph;
pub mod index;
pub mod ingest;
pub mod model;
pub mod normalize;
pub mod pipeline;
pub mod scorer;
pub mod synth;
