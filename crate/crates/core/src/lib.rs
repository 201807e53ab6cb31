//! Trend prediction from generated queries.
//!
//! Posts are turned into search-style queries by a pluggable generator,
//! aggregated per time window, and ranked by creator authority plus
//! weighted engagement. A Poisson burst detector over organic search volume
//! serves as the baseline, and a tabular Mix-Policy DPO trainer with a
//! Recall@K retraining trigger covers continual alignment of the generator.

pub mod burst;
pub mod domain;
pub mod eval;
pub mod jsonl;
pub mod mixdpo;
pub mod pipeline;
pub mod querygen;
pub mod scoring;
pub mod simgen;
