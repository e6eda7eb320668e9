//! Detection of scam tokens and rug-pull liquidity pools from
//! constant-product DEX event logs.
//!
//! The crate is organised as a batch pipeline:
//!
//! * [`model`] shared identifiers, exact amounts, records and labels
//! * [`amm`] the constant-product pool state machine
//! * [`ingest`] file loading, validation and the indexed [`ingest::DataStore`]
//! * [`scenario`] deterministic synthetic markets with planted scam campaigns
//! * [`features`] the 40 per-token behavioural features
//! * [`classifier`] random forest, cross validation and metrics
//! * [`association`] label seeding, guilt-by-association expansion,
//!   verification and collusion-address detection
//! * [`impact`] rug-pull profiling, profit accounting and market statistics
//! * [`pipeline`] end-to-end orchestration and report writing

pub mod amm;
pub mod association;
pub mod classifier;
pub mod features;
pub mod impact;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod scenario;
