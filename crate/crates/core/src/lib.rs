//! Training and evaluation engine for a heterogeneous-information-network
//! recommender.
//!
//! The pipeline: a typed graph ([`hin`]) is turned into per-aspect user and
//! item graphs through meta-path commuting matrices ([`metapath`]). A GCN
//! whose layer weights are shared between the user and item graph of each
//! aspect embeds both sides; user interests are the element-wise products of
//! the embeddings and are crossed pairwise inside and across aspects in the
//! style of a factorization machine ([`model`]). Parameters are learned with a
//! BPR objective and Adam ([`training`]) and ranked with the sampled
//! leave-one-out HR@N / NDCG@N protocol ([`eval`]).

pub mod binio;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod hin;
pub mod metapath;
pub mod model;
pub mod nnmath;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
