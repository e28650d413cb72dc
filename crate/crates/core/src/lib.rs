//! Market-basket mining toolkit.
//!
//! The pipeline runs raw receipts through binarization ([`ingest`]),
//! target-driven instance and attribute elimination ([`reduction`]),
//! Apriori rule mining with a confidence gate ([`rules`]), model-tree
//! sales forecasting ([`forecast`]) and k-means clustering plus forecast
//! accuracy bookkeeping ([`analysis`]). [`pipeline`] wires the stages
//! together and [`synth`] produces seeded test data with planted rules.

pub mod analysis;
pub mod error;
pub mod forecast;
pub mod ingest;
pub mod pipeline;
pub mod reduction;
pub mod rules;
pub mod store;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
