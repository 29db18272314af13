//! Expected revenue, exact assortment optimization by enumeration, and the
//! Monte Carlo revenue evaluator for probit populations.
//!
//! Revenues are indexed by product: `r[j - 1]` is the unit revenue of `j`.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::datagen::{family_rng, Family, ProbitConsumer, ProbitParams, Stream};
use crate::error::{Error, Result};
use crate::model::{ChoiceModel, ProductId, ProductSet, MAX_PRODUCTS};

/// Largest universe `optimize_assortment` will enumerate.
pub const ASSORTMENT_MAX_N: usize = 20;

pub fn check_revenues(r: &[f64], n: usize) -> Result<()> {
    if r.len() != n {
        return Err(Error::invalid(format!("expected {n} revenues, got {}", r.len())));
    }
    if let Some(v) = r.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("revenue {v} is negative or not finite")));
    }
    Ok(())
}

fn bundle_revenue(bundle: ProductSet, r: &[f64]) -> f64 {
    bundle.iter().map(|j| r[j as usize - 1]).sum()
}

/// `Σ_c x_c Σ_{j ∈ π(c, S)} r_j`.
///
/// Panics if a purchased product has no revenue entry.
pub fn expected_revenue(model: &ChoiceModel, s: ProductSet, r: &[f64]) -> f64 {
    model.iter().map(|(c, x)| x * bundle_revenue(c.purchase_outcome(s), r)).sum()
}

/// Orders candidates: higher value first, then smaller size, then lexicographic.
fn better(a: &(ProductSet, f64), b: &(ProductSet, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then(a.0.len().cmp(&b.0.len()))
        .then(a.0.lex_cmp(b.0))
}

/// Revenue-maximizing non-empty assortment over products `1..=n`.
pub fn optimize_assortment(model: &ChoiceModel, r: &[f64], n: usize) -> Result<(ProductSet, f64)> {
    if n == 0 || n > ASSORTMENT_MAX_N {
        return Err(Error::invalid(format!("assortment enumeration needs 1 <= n <= {ASSORTMENT_MAX_N}, got {n}")));
    }
    check_revenues(r, n)?;
    if model.max_product() > n {
        return Err(Error::invalid(format!("model references product {} beyond n = {n}", model.max_product())));
    }
    let best = (1u64..1 << n)
        .into_par_iter()
        .map(|bits| {
            let s = ProductSet::from_bits(bits);
            (s, expected_revenue(model, s, r))
        })
        .min_by(better)
        .expect("at least one subset");
    Ok(best)
}

/// Ground-truth revenue of the estimated model's optimal assortment over the
/// ground truth's own optimum. Equal to 1 when both are 0.
pub fn aao_ratio(estimated: &ChoiceModel, truth: &ChoiceModel, r: &[f64], n: usize) -> Result<f64> {
    let (s_est, _) = optimize_assortment(estimated, r, n)?;
    let (_, rho_t) = optimize_assortment(truth, r, n)?;
    let rho_e = expected_revenue(truth, s_est, r);
    Ok(if rho_t > 0.0 { rho_e / rho_t } else { 1.0 })
}

/// A persisted evaluation base of simulated consumers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbitPopulation {
    n: usize,
    consumers: Vec<ProbitConsumer>,
}

impl ProbitPopulation {
    /// Checks that every ranking is a permutation of `0..=n` and `q ≤ n`.
    pub fn new(n: usize, consumers: Vec<ProbitConsumer>) -> Result<Self> {
        if n == 0 || n > MAX_PRODUCTS {
            return Err(Error::invalid(format!("universe size {n} out of range")));
        }
        for (i, c) in consumers.iter().enumerate() {
            let mut seen = vec![false; n + 1];
            let ok = c.ranking.len() == n + 1
                && c.ranking.iter().all(|&j| (j as usize) <= n && !std::mem::replace(&mut seen[j as usize], true));
            if !ok {
                return Err(Error::data(format!("consumer {i}: ranking is not a permutation of 0..={n}")));
            }
            if c.q > n {
                return Err(Error::data(format!("consumer {i}: quantity {} exceeds n = {n}", c.q)));
            }
        }
        Ok(ProbitPopulation { n, consumers })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn consumers(&self) -> &[ProbitConsumer] {
        &self.consumers
    }

    pub fn len(&self) -> usize {
        self.consumers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.consumers.is_empty()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for c in &self.consumers {
            serde_json::to_writer(&mut w, c)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a population; `n` is inferred from the first ranking.
    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let mut consumers = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let c: ProbitConsumer = serde_json::from_str(&line)
                .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))?;
            consumers.push(c);
        }
        let n = consumers.first().map_or(0, |c| c.ranking.len().saturating_sub(1));
        Self::new(n, consumers)
    }
}

/// Samples `m` consumers from the probit utility model.
pub fn build_probit_population(params: &ProbitParams, m: usize, seed: u64) -> Result<ProbitPopulation> {
    let mut rng = family_rng(Family::MultipurchaseProbit, seed, Stream::Population);
    let consumers = (0..m).map(|_| params.sample_consumer(&mut rng)).collect();
    ProbitPopulation::new(params.n(), consumers)
}

/// Samples `m` consumers from a ranked-list model: a type `(σ, η)` becomes
/// the ranking σ, then the outside option, then the remaining products in a
/// uniformly random order, with quantity η.
pub fn population_from_model(model: &ChoiceModel, n: usize, m: usize, seed: u64) -> Result<ProbitPopulation> {
    if model.max_product() > n {
        return Err(Error::invalid(format!("model references product {} beyond n = {n}", model.max_product())));
    }
    let mut rng = family_rng(Family::MultipurchaseProbit, seed, Stream::Population);
    let pick = WeightedIndex::new(model.probs()).map_err(|e| Error::invalid(e.to_string()))?;
    let consumers = (0..m)
        .map(|_| {
            let c = &model.types()[pick.sample(&mut rng)];
            let mut tail: Vec<ProductId> = (1..=n as ProductId).filter(|j| !c.sigma().contains(j)).collect();
            tail.shuffle(&mut rng);
            let mut ranking = c.sigma().to_vec();
            ranking.push(0);
            ranking.extend(tail);
            ProbitConsumer { ranking, q: c.eta() as usize }
        })
        .collect();
    ProbitPopulation::new(n, consumers)
}

/// Products a consumer buys from `s`: scan the ranking, stop at the outside
/// option or after `q` purchases.
pub fn simulate_purchase(c: &ProbitConsumer, s: ProductSet) -> ProductSet {
    let mut bought = ProductSet::EMPTY;
    let mut count = 0;
    for &j in &c.ranking {
        if j == 0 || count == c.q {
            break;
        }
        if s.contains(j) {
            bought.insert(j);
            count += 1;
        }
    }
    bought
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RevenueEstimate {
    pub mean: f64,
    /// Sample variance of per-consumer revenue.
    pub variance: f64,
    pub consumers: usize,
}

impl RevenueEstimate {
    pub fn std_error(&self) -> f64 {
        (self.variance / self.consumers as f64).sqrt()
    }
}

pub fn simulate_revenue_stats(pop: &ProbitPopulation, s: ProductSet, r: &[f64]) -> Result<RevenueEstimate> {
    check_revenues(r, pop.n())?;
    if pop.is_empty() {
        return Err(Error::invalid("empty population"));
    }
    let samples: Vec<f64> = pop.consumers().iter().map(|c| bundle_revenue(simulate_purchase(c, s), r)).collect();
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let variance = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok(RevenueEstimate { mean, variance, consumers: samples.len() })
}

/// Mean revenue per consumer when `s` is offered.
pub fn simulate_revenue(pop: &ProbitPopulation, s: ProductSet, r: &[f64]) -> Result<f64> {
    Ok(simulate_revenue_stats(pop, s, r)?.mean)
}
