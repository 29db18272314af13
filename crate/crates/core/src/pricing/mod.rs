//! Pricing subproblem: find the consumer type collecting the largest total
//! reward over a set of signed-reward transactions.
//!
//! [`solve_pricing`] runs the exact labeling algorithm; [`solve_pricing_heuristic`]
//! caps labels per bucket. The label primitives live in [`label`] and are
//! public so they can be tested in isolation.

pub mod label;
mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConsumerType, ProductSet, Transaction, MAX_PRODUCTS};

pub use label::{Label, PricingContext};
pub use solver::{replay, DominanceMode, LabelingSolver, PricingConfig, QueueOrder};

/// One reward-carrying row of a pricing instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricedTransaction {
    pub offer: ProductSet,
    pub bundle: ProductSet,
    pub mu: f64,
}

/// Input to the pricing problem.
///
/// Construction drops zero-reward rows and merges rows with an identical
/// (offer, bundle) pair by summing their rewards, since both have the same
/// compatibility pattern for every consumer type.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PricingInstance {
    n: usize,
    eta_max: u8,
    q: Option<usize>,
    transactions: Vec<PricedTransaction>,
}

impl PricingInstance {
    pub fn new(
        n: usize,
        eta_max: usize,
        q: Option<usize>,
        rows: impl IntoIterator<Item = PricedTransaction>,
    ) -> Result<Self> {
        if n == 0 || n > MAX_PRODUCTS {
            return Err(Error::invalid(format!("universe size {n} outside 1..={MAX_PRODUCTS}")));
        }
        if eta_max == 0 || eta_max > n {
            return Err(Error::invalid(format!("eta_max {eta_max} outside 1..={n}")));
        }
        if q == Some(0) {
            return Err(Error::invalid("list-length cap q must be positive"));
        }
        let universe = ProductSet::universe(n);
        let mut merged: Vec<PricedTransaction> = Vec::new();
        let mut index = std::collections::HashMap::new();
        for row in rows {
            if !row.mu.is_finite() {
                return Err(Error::invalid(format!("non-finite reward {}", row.mu)));
            }
            Transaction::new(row.offer, row.bundle)?;
            if !row.offer.is_subset(universe) {
                return Err(Error::invalid(format!(
                    "offer {:?} references products beyond n = {n}",
                    row.offer
                )));
            }
            match index.get(&(row.offer, row.bundle)) {
                Some(&i) => {
                    let t: &mut PricedTransaction = &mut merged[i];
                    t.mu += row.mu;
                }
                None => {
                    index.insert((row.offer, row.bundle), merged.len());
                    merged.push(row);
                }
            }
        }
        merged.retain(|t| t.mu != 0.0);
        Ok(PricingInstance { n, eta_max: eta_max as u8, q: q.map(|q| q.min(n)), transactions: merged })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eta_max(&self) -> usize {
        self.eta_max as usize
    }

    pub fn q(&self) -> Option<usize> {
        self.q
    }

    pub fn transactions(&self) -> &[PricedTransaction] {
        &self.transactions
    }

    /// Total reward collected by a consumer type, by direct replay.
    pub fn profit_of(&self, c: &ConsumerType) -> f64 {
        self.transactions
            .iter()
            .filter(|t| c.purchase_outcome(t.offer) == t.bundle)
            .map(|t| t.mu)
            .sum()
    }
}

impl<'de> Deserialize<'de> for PricingInstance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            eta_max: Option<usize>,
            #[serde(default)]
            q: Option<usize>,
            transactions: Vec<PricedTransaction>,
        }
        let raw = Raw::deserialize(d)?;
        PricingInstance::new(raw.n, raw.eta_max.unwrap_or(raw.n), raw.q, raw.transactions)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PricingResult {
    pub best_type: ConsumerType,
    pub best_profit: f64,
    pub labels_generated: u64,
    pub labels_dominated: u64,
    pub labels_bounded: u64,
    pub wall_time: f64,
    /// True when the time limit stopped the search before it was exhaustive.
    pub timed_out: bool,
}

/// Exact labeling algorithm with default settings.
pub fn solve_pricing(inst: &PricingInstance, lb_seed: Option<f64>) -> Result<PricingResult> {
    LabelingSolver::new(inst, PricingConfig::default()).solve(lb_seed)
}

/// Bucket-pruned heuristic: at most `bucket_cap` labels are expanded per
/// (last product, list length, capacity) bucket.
pub fn solve_pricing_heuristic(inst: &PricingInstance, bucket_cap: usize) -> Result<PricingResult> {
    if bucket_cap == 0 {
        return Err(Error::invalid("bucket_cap must be at least 1"));
    }
    let cfg = PricingConfig { bucket_cap: Some(bucket_cap), ..PricingConfig::default() };
    LabelingSolver::new(inst, cfg).solve(None)
}
