//! Brute-force pricing by enumerating every consumer type.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{ConsumerType, ProductId, ProductSet};
use crate::pricing::{PricingInstance, PricingResult};

/// Hard ceiling on the universe size the oracle accepts.
pub const ORACLE_MAX_N: usize = 9;

#[derive(Clone, Copy, Debug)]
pub struct OracleConfig {
    pub n_limit: usize,
    /// Overrides the instance's capacity cap when set.
    pub eta_max: Option<usize>,
    /// Overrides the instance's list-length cap when set.
    pub q: Option<usize>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { n_limit: 8, eta_max: None, q: None }
    }
}

struct Search<'a> {
    bundles: Vec<ProductSet>,
    mus: Vec<f64>,
    touches: Vec<Vec<usize>>,
    n: usize,
    max_len: usize,
    eta: u8,
    bought: Vec<ProductSet>,
    count: Vec<u8>,
    sigma: Vec<ProductId>,
    used: ProductSet,
    profit: f64,
    best: &'a mut (f64, u8, Vec<ProductId>),
    visited: u64,
}

impl Search<'_> {
    fn dfs(&mut self) {
        if self.sigma.len() >= self.eta as usize {
            self.visited += 1;
            if self.profit > self.best.0 {
                *self.best = (self.profit, self.eta, self.sigma.clone());
            }
        }
        if self.sigma.len() == self.max_len {
            return;
        }
        for j in 1..=self.n as ProductId {
            if self.used.contains(j) {
                continue;
            }
            let saved_profit = self.profit;
            let mut changed = Vec::new();
            for &t in &self.touches[j as usize] {
                if self.count[t] < self.eta {
                    let was = self.bought[t] == self.bundles[t];
                    self.bought[t].insert(j);
                    self.count[t] += 1;
                    let now = self.bought[t] == self.bundles[t];
                    if was != now {
                        self.profit += if now { self.mus[t] } else { -self.mus[t] };
                    }
                    changed.push(t);
                }
            }
            self.used.insert(j);
            self.sigma.push(j);
            self.dfs();
            self.sigma.pop();
            self.used.remove(j);
            for t in changed {
                self.bought[t].remove(j);
                self.count[t] -= 1;
            }
            self.profit = saved_profit;
        }
    }
}

/// Exhaustive search over all duplicate-free lists and capacities. Ties go to
/// the lexicographically smallest `(η, σ)`, with the passive type first.
pub fn brute_force_glop(inst: &PricingInstance, cfg: OracleConfig) -> Result<PricingResult> {
    let start = Instant::now();
    let limit = cfg.n_limit.min(ORACLE_MAX_N);
    if inst.n() > limit {
        return Err(Error::invalid(format!(
            "oracle limited to n <= {limit}, instance has n = {}",
            inst.n()
        )));
    }
    let n = inst.n();
    let eta_max = cfg.eta_max.unwrap_or(inst.eta_max()).min(n);
    let max_len = cfg.q.or(inst.q()).unwrap_or(n).min(n);
    let rows = inst.transactions();
    let mut touches = vec![Vec::new(); n + 1];
    for (t, r) in rows.iter().enumerate() {
        for j in r.offer.iter() {
            touches[j as usize].push(t);
        }
    }
    let passive: f64 = rows.iter().filter(|r| r.bundle.is_empty()).map(|r| r.mu).sum();
    let mut best = (passive, 0u8, Vec::new());
    let mut visited = 1;
    for eta in 1..=eta_max as u8 {
        if eta as usize > max_len {
            break;
        }
        let mut s = Search {
            bundles: rows.iter().map(|r| r.bundle).collect(),
            mus: rows.iter().map(|r| r.mu).collect(),
            touches: touches.clone(),
            n,
            max_len,
            eta,
            bought: vec![ProductSet::EMPTY; rows.len()],
            count: vec![0; rows.len()],
            sigma: Vec::new(),
            used: ProductSet::EMPTY,
            profit: passive,
            best: &mut best,
            visited: 0,
        };
        s.dfs();
        visited += s.visited;
    }
    let (_, eta, sigma) = best;
    let best_type = ConsumerType::new(sigma, eta)?;
    Ok(PricingResult {
        best_profit: inst.profit_of(&best_type),
        best_type,
        labels_generated: visited,
        labels_dominated: 0,
        labels_bounded: 0,
        wall_time: start.elapsed().as_secs_f64(),
        timed_out: false,
    })
}
