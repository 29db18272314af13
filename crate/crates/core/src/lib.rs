//! Column generation for ranked-list discrete choice models.
//!
//! The crate estimates a distribution over consumer types (a preference list
//! plus a purchase capacity) from transaction data. Columns are priced by an
//! exact labeling algorithm, and either a maximum-likelihood (EM) master or an
//! ℓ1-error LP master weights them. Synthetic generators, evaluation metrics
//! and assortment optimization round out the toolkit.

pub mod lp;
pub mod error;
pub mod model;
pub mod pricing;
pub mod oracle;
pub mod io;
pub mod em;
pub mod l1;
pub mod cg;
pub mod datagen;
pub mod metrics;
pub mod assortment;

pub use error::{Error, Result};
pub use model::{
    ChoiceModel, ConsumerType, DistinctMarket, MarketRow, ProductId, ProductSet, Transaction,
    TransactionLog,
};
pub use oracle::{brute_force_glop, OracleConfig};
pub use pricing::{
    solve_pricing, solve_pricing_heuristic, PricedTransaction, PricingInstance, PricingResult,
};
