//! Maximum-likelihood restricted master solved by expectation-maximization.
//!
//! Identical transactions are aggregated into weighted rows; the likelihood
//! and all updates are exactly those of the per-transaction formulation.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{ConsumerType, ProductSet, Transaction, TransactionLog};
use crate::pricing::{PricedTransaction, PricingInstance};

#[derive(Clone, Copy, Debug)]
pub struct EmConfig {
    /// Stop once an iteration improves the log-likelihood by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Significance level of the likelihood-ratio test.
    pub alpha: f64,
    /// Margin a column profit must exceed `|T|` by to count as improving.
    pub improvement_tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { tol: 1e-8, max_iter: 2000, alpha: 0.05, improvement_tol: 1e-6 }
    }
}

/// Critical value of the χ² distribution with one degree of freedom.
pub fn chi2_critical(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    let chi = ChiSquared::new(1.0).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(chi.inverse_cdf(1.0 - alpha))
}

/// The `n` single-product types, the passive type, and one type reproducing
/// each observed multi-product bundle, so every transaction is covered.
pub fn initial_columns(log: &TransactionLog, n: usize) -> Result<Vec<ConsumerType>> {
    if n == 0 {
        return Err(Error::invalid("empty product universe"));
    }
    let mut cols: Vec<ConsumerType> =
        (1..=n as u8).map(|j| ConsumerType::new(vec![j], 1)).collect::<Result<_>>()?;
    cols.push(ConsumerType::passive());
    let bundles: BTreeSet<ProductSet> =
        log.transactions.iter().map(|t| t.bundle).filter(|b| b.len() >= 2).collect();
    for b in bundles {
        cols.push(ConsumerType::new(b.to_vec(), b.len() as u8)?);
    }
    Ok(cols)
}

#[derive(Clone, Debug, Serialize)]
pub struct EmTrace {
    pub iter: usize,
    pub loglik: f64,
    pub columns: usize,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmDuals {
    /// `1 / y` for each distinct row.
    pub mu: Vec<f64>,
    /// Number of transactions behind each distinct row.
    pub counts: Vec<f64>,
    /// `|T|`: a column improves the likelihood iff its profit exceeds this.
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum AcceptOutcome {
    Accepted { lr: f64 },
    /// Profit does not exceed `|T|`.
    NotImproving,
    /// Likelihood-ratio test failed; the state was rolled back.
    NotSignificant { lr: f64 },
}

#[derive(Clone, Debug)]
pub struct EmState {
    rows: Vec<Transaction>,
    counts: Vec<f64>,
    total: f64,
    columns: Vec<ConsumerType>,
    compat: Vec<Vec<u32>>,
    x: Vec<f64>,
    y: Vec<f64>,
    loglik: f64,
    iterations: usize,
    /// Log-likelihood after each iteration of the most recent solve.
    trace: Vec<f64>,
}

impl EmState {
    /// Builds the master with uniform weights over `columns`.
    pub fn new(log: &TransactionLog, columns: Vec<ConsumerType>) -> Result<Self> {
        if log.is_empty() {
            return Err(Error::invalid("empty transaction log"));
        }
        if columns.is_empty() {
            return Err(Error::invalid("EM master needs at least one column"));
        }
        let mut index: HashMap<Transaction, usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for t in &log.transactions {
            let i = *index.entry(*t).or_insert_with(|| {
                rows.push(*t);
                counts.push(0.0);
                rows.len() - 1
            });
            counts[i] += 1.0;
        }
        let k = columns.len() as f64;
        let mut state = EmState {
            total: log.len() as f64,
            compat: Vec::new(),
            x: vec![1.0 / k; columns.len()],
            y: vec![0.0; rows.len()],
            rows,
            counts,
            columns: Vec::new(),
            loglik: f64::NEG_INFINITY,
            iterations: 0,
            trace: Vec::new(),
        };
        for c in columns {
            if state.columns.contains(&c) {
                return Err(Error::invalid(format!("duplicate column {c:?}")));
            }
            state.compat.push(state.compat_rows(&c));
            state.columns.push(c);
        }
        state.update_y()?;
        Ok(state)
    }

    fn compat_rows(&self, c: &ConsumerType) -> Vec<u32> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, t)| c.is_compatible(t))
            .map(|(i, _)| i as u32)
            .collect()
    }

    fn update_y(&mut self) -> Result<()> {
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for (rows, &x) in self.compat.iter().zip(&self.x) {
            for &m in rows {
                self.y[m as usize] += x;
            }
        }
        if let Some(row) = self.y.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Coverage { row });
        }
        self.loglik = self.y.iter().zip(&self.counts).map(|(y, c)| c * y.ln()).sum();
        Ok(())
    }

    pub fn columns(&self) -> &[ConsumerType] {
        &self.columns
    }

    pub fn probs(&self) -> &[f64] {
        &self.x
    }

    /// Predicted probability of each distinct row.
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn rows(&self) -> &[Transaction] {
        &self.rows
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn num_transactions(&self) -> f64 {
        self.total
    }

    /// Runs EM until the log-likelihood gain drops below `tol` or `max_iter`
    /// iterations have been made.
    pub fn em_solve(&mut self, tol: f64, max_iter: usize) -> Result<()> {
        self.update_y()?;
        self.trace.clear();
        self.iterations = 0;
        let mut ratio = vec![0.0; self.rows.len()];
        while self.iterations < max_iter {
            let before = self.loglik;
            for ((r, c), y) in ratio.iter_mut().zip(&self.counts).zip(&self.y) {
                *r = c / y;
            }
            for (x, rows) in self.x.iter_mut().zip(&self.compat) {
                let s: f64 = rows.iter().map(|&m| ratio[m as usize]).sum();
                *x *= s / self.total;
            }
            let sum: f64 = self.x.iter().sum();
            self.x.iter_mut().for_each(|x| *x /= sum);
            self.update_y()?;
            self.iterations += 1;
            self.trace.push(self.loglik);
            if self.loglik - before < tol {
                break;
            }
        }
        Ok(())
    }

    pub fn duals(&self) -> EmDuals {
        EmDuals {
            mu: self.y.iter().map(|y| 1.0 / y).collect(),
            counts: self.counts.clone(),
            threshold: self.total,
        }
    }

    /// Pricing instance whose profit for a type equals `Σ_t a_tc μ_t`.
    pub fn pricing_instance(&self, n: usize, eta_max: usize, q: Option<usize>) -> Result<PricingInstance> {
        let rows = self.rows.iter().zip(&self.y).zip(&self.counts).map(|((t, y), c)| {
            PricedTransaction { offer: t.offer, bundle: t.bundle, mu: c / y }
        });
        PricingInstance::new(n, eta_max, q, rows)
    }

    /// `Σ_t a_tc μ_t` for an arbitrary type.
    pub fn column_profit(&self, c: &ConsumerType) -> f64 {
        self.compat_rows(c)
            .into_iter()
            .map(|m| self.counts[m as usize] / self.y[m as usize])
            .sum()
    }

    fn push_column(&mut self, c: ConsumerType) {
        let k = self.columns.len() as f64;
        self.x.iter_mut().for_each(|x| *x *= k / (k + 1.0));
        self.x.push(1.0 / (k + 1.0));
        self.compat.push(self.compat_rows(&c));
        self.columns.push(c);
    }

    /// Adds `candidate` if it improves the likelihood and the improvement is
    /// statistically significant; otherwise leaves the state unchanged.
    pub fn accept_column(
        &mut self,
        candidate: &ConsumerType,
        profit: f64,
        cfg: &EmConfig,
    ) -> Result<AcceptOutcome> {
        if profit <= self.total + cfg.improvement_tol {
            return Ok(AcceptOutcome::NotImproving);
        }
        if self.columns.contains(candidate) {
            return Ok(AcceptOutcome::NotSignificant { lr: 0.0 });
        }
        let critical = chi2_critical(cfg.alpha)?;
        let before = self.loglik;
        let backup = self.clone();
        self.push_column(candidate.clone());
        self.em_solve(cfg.tol, cfg.max_iter)?;
        let lr = 2.0 * (self.loglik - before);
        if lr >= critical {
            Ok(AcceptOutcome::Accepted { lr })
        } else {
            *self = backup;
            Ok(AcceptOutcome::NotSignificant { lr })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(offer: &[u8], bundle: &[u8]) -> Transaction {
        Transaction::new(offer.iter().copied().collect(), bundle.iter().copied().collect()).unwrap()
    }

    fn ct(sigma: &[u8], eta: u8) -> ConsumerType {
        ConsumerType::new(sigma.to_vec(), eta).unwrap()
    }

    #[test]
    fn critical_value_at_five_percent() {
        assert!((chi2_critical(0.05).unwrap() - 3.841458820694124).abs() < 1e-9);
        assert!(chi2_critical(0.0).is_err());
    }

    #[test]
    fn initial_columns_examples() {
        let log = TransactionLog::new(vec![tx(&[1, 2], &[1]), tx(&[2, 3], &[3])], 0);
        let cols = initial_columns(&log, 3).unwrap();
        assert_eq!(cols.len(), 4);
        assert!(cols.contains(&ConsumerType::passive()));

        let log = TransactionLog::new(vec![tx(&[2, 5, 6], &[2, 5])], 0);
        let cols = initial_columns(&log, 6).unwrap();
        let cover = ct(&[2, 5], 2);
        assert!(cols.contains(&cover));
        assert!(cover.is_compatible(&log.transactions[0]));

        assert!(initial_columns(&log, 0).is_err());
    }

    #[test]
    fn single_covering_column_converges_immediately() {
        let log = TransactionLog::new(vec![tx(&[1], &[1]); 4], 0);
        let mut st = EmState::new(&log, vec![ct(&[1], 1)]).unwrap();
        st.em_solve(1e-8, 2000).unwrap();
        assert_eq!(st.probs(), &[1.0]);
        assert_eq!(st.loglik(), 0.0);
        assert_eq!(st.iterations(), 1);
    }

    #[test]
    fn disjoint_support_splits_evenly() {
        let mut txs = vec![tx(&[1], &[1]); 5];
        txs.extend(vec![tx(&[1], &[]); 5]);
        let log = TransactionLog::new(txs, 0);
        let mut st = EmState::new(&log, vec![ct(&[1], 1), ConsumerType::passive()]).unwrap();
        st.x = vec![0.9, 0.1];
        st.em_solve(1e-12, 2000).unwrap();
        assert!((st.probs()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coverage_violation_is_reported() {
        let log = TransactionLog::new(vec![tx(&[1], &[1])], 0);
        let err = EmState::new(&log, vec![ConsumerType::passive()]).unwrap_err();
        assert!(matches!(err, Error::Coverage { row: 0 }));
    }

    #[test]
    fn duals_are_reciprocals() {
        let log = TransactionLog::new(vec![tx(&[1], &[1]), tx(&[1], &[])], 0);
        let mut st = EmState::new(&log, vec![ct(&[1], 1), ConsumerType::passive()]).unwrap();
        st.em_solve(1e-10, 2000).unwrap();
        let d = st.duals();
        assert_eq!(d.threshold, 2.0);
        for (mu, y) in d.mu.iter().zip(st.y()) {
            assert_eq!(*mu, 1.0 / y);
        }
    }

    #[test]
    fn acceptance_rules() {
        // Truth: half buy 1 over 2, half buy 2 over 1. Singletons explain it only partly.
        let mut txs = vec![tx(&[1, 2], &[1]); 10];
        txs.extend(vec![tx(&[1, 2], &[2]); 10]);
        txs.extend(vec![tx(&[2], &[2]); 20]);
        let log = TransactionLog::new(txs, 0);
        let cfg = EmConfig::default();
        let mut st = EmState::new(&log, vec![ct(&[1], 1), ct(&[2], 1), ConsumerType::passive()]).unwrap();
        st.em_solve(cfg.tol, cfg.max_iter).unwrap();

        let total = st.num_transactions();
        assert_eq!(st.accept_column(&ct(&[1, 2], 1), total, &cfg).unwrap(), AcceptOutcome::NotImproving);
        let dup = ct(&[2], 1);
        let p = st.column_profit(&dup);
        assert!(matches!(
            st.accept_column(&dup, p.max(total + 1.0), &cfg).unwrap(),
            AcceptOutcome::NotSignificant { lr } if lr == 0.0
        ));

        let missing = ct(&[1, 2], 1);
        let p = st.column_profit(&missing);
        assert!(p > total);
        match st.accept_column(&missing, p, &cfg).unwrap() {
            AcceptOutcome::Accepted { lr } => assert!(lr > 3.841),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(st.columns().len(), 4);
    }
}
