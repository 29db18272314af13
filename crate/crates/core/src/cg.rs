//! Column-generation driver for both masters.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::em::{initial_columns, AcceptOutcome, EmConfig, EmState, EmTrace};
use crate::error::{Error, Result};
use crate::l1::L1Master;
use crate::model::{empirical_probabilities, estimate_arrival_rate, ChoiceModel, ConsumerType, TransactionLog};
use crate::pricing::{LabelingSolver, PricingConfig, PricingInstance, PricingResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Master {
    Em,
    L1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    LrFailed,
    TimeLimit,
    ColumnCap,
}

#[derive(Clone, Debug)]
pub struct CgConfig {
    pub master: Master,
    /// Largest capacity priced; defaults to `n`.
    pub eta_max: Option<usize>,
    pub q: Option<usize>,
    /// Bucket caps tried in order before exact pricing (ℓ1 master).
    pub heuristic_caps: Vec<usize>,
    /// EM master: seed the exact pricer's lower bound with cap-2 heuristic pricing.
    pub use_heuristic_lb_seed: bool,
    pub time_limit: Option<Duration>,
    pub max_columns: Option<usize>,
    pub em: EmConfig,
    /// ℓ1 master: reduced cost a column must exceed to be added.
    pub rc_tol: f64,
    /// Columns with weight below this are dropped from the returned model.
    pub prune_below: f64,
    /// Record one trace entry per iteration.
    pub trace: bool,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            master: Master::L1,
            eta_max: None,
            q: None,
            heuristic_caps: vec![2, 5],
            use_heuristic_lb_seed: true,
            time_limit: None,
            max_columns: None,
            em: EmConfig::default(),
            rc_tol: 1e-6,
            prune_below: 1e-10,
            trace: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CgReport {
    pub iterations: usize,
    pub columns_added: usize,
    pub final_objective: f64,
    /// Master objective after each solve (ℓ1 error or log-likelihood).
    pub objective_trace: Vec<f64>,
    pub heuristic_calls: usize,
    pub exact_calls: usize,
    pub wall_time: f64,
    pub termination: Termination,
    /// Best exact pricing value on the final duals (reduced cost for ℓ1, profit for EM).
    pub last_pricing_value: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub em_trace: Vec<EmTrace>,
}

struct Clock {
    start: Instant,
    limit: Option<Duration>,
}

impl Clock {
    fn remaining(&self) -> Option<Duration> {
        self.limit.map(|l| l.saturating_sub(self.start.elapsed()))
    }

    fn expired(&self) -> bool {
        self.remaining().is_some_and(|r| r.is_zero())
    }
}

fn price(inst: &PricingInstance, cap: Option<usize>, seed: Option<f64>, clock: &Clock) -> Result<PricingResult> {
    let cfg = PricingConfig { bucket_cap: cap, time_limit: clock.remaining(), ..PricingConfig::default() };
    LabelingSolver::new(inst, cfg).solve(seed)
}

fn finish_model(columns: &[ConsumerType], x: &[f64], lambda: f64, prune: f64) -> Result<ChoiceModel> {
    let kept = columns.iter().cloned().zip(x.iter().copied()).filter(|(_, w)| *w >= prune);
    ChoiceModel::from_weights(kept, lambda)
}

/// Result of a run that keeps the final master for inspection.
pub struct Outcome<M> {
    pub master: M,
    pub model: ChoiceModel,
    pub report: CgReport,
}

/// Checks inputs; returns the effective `eta_max` and the arrival rate.
fn prepare(log: &TransactionLog, n: usize, cfg: &CgConfig) -> Result<(usize, f64)> {
    if log.is_empty() {
        return Err(Error::invalid("empty transaction log"));
    }
    if log.max_product() > n {
        return Err(Error::invalid(format!("log references product {} beyond n = {n}", log.max_product())));
    }
    let eta_max = cfg.eta_max.unwrap_or(n).min(n);
    if eta_max == 0 {
        return Err(Error::invalid("eta_max must be at least 1"));
    }
    if cfg.heuristic_caps.contains(&0) {
        return Err(Error::invalid("heuristic caps must be at least 1"));
    }
    Ok((eta_max, estimate_arrival_rate(log)?))
}

/// Estimates a ranked-list choice model from `log` over products `1..=n`.
pub fn run_estimation(log: &TransactionLog, n: usize, cfg: &CgConfig) -> Result<(ChoiceModel, CgReport)> {
    match cfg.master {
        Master::L1 => estimate_l1(log, n, cfg).map(|o| (o.model, o.report)),
        Master::Em => estimate_em(log, n, cfg).map(|o| (o.model, o.report)),
    }
}

/// ℓ1 column generation; `cfg.master` is ignored.
pub fn estimate_l1(log: &TransactionLog, n: usize, cfg: &CgConfig) -> Result<Outcome<L1Master>> {
    let (eta_max, lambda) = prepare(log, n, cfg)?;
    run_l1(log, n, eta_max, lambda, cfg)
}

/// Maximum-likelihood column generation; `cfg.master` is ignored.
pub fn estimate_em(log: &TransactionLog, n: usize, cfg: &CgConfig) -> Result<Outcome<EmState>> {
    let (eta_max, lambda) = prepare(log, n, cfg)?;
    run_em(log, n, eta_max, lambda, cfg)
}

fn run_l1(log: &TransactionLog, n: usize, eta_max: usize, lambda: f64, cfg: &CgConfig) -> Result<Outcome<L1Master>> {
    let clock = Clock { start: Instant::now(), limit: cfg.time_limit };
    let mut master = L1Master::new(empirical_probabilities(log)?)?;
    let mut report = CgReport {
        iterations: 0,
        columns_added: 0,
        final_objective: f64::NAN,
        objective_trace: Vec::new(),
        heuristic_calls: 0,
        exact_calls: 0,
        wall_time: 0.0,
        termination: Termination::Converged,
        last_pricing_value: None,
        em_trace: Vec::new(),
    };
    loop {
        let sol = master.solve()?;
        let gamma = sol.gamma;
        report.final_objective = sol.objective;
        report.objective_trace.push(sol.objective);
        report.iterations += 1;
        if clock.expired() {
            report.termination = Termination::TimeLimit;
            break;
        }
        if cfg.max_columns.is_some_and(|m| master.columns().len() >= m) {
            report.termination = Termination::ColumnCap;
            break;
        }
        let inst = master.pricing_instance(n, eta_max, cfg.q)?;
        if inst.transactions().is_empty() {
            // All duals vanish: only the convexity dual can make a column attractive.
            report.last_pricing_value = Some(gamma);
            if gamma > cfg.rc_tol {
                return Err(Error::invalid("degenerate duals: improving column without rewards"));
            }
            break;
        }
        let mut chosen = None;
        for &cap in &cfg.heuristic_caps {
            report.heuristic_calls += 1;
            let res = price(&inst, Some(cap), None, &clock)?;
            if res.best_profit + gamma > cfg.rc_tol && !master.columns().contains(&res.best_type) {
                chosen = Some(res.best_type);
                break;
            }
        }
        if chosen.is_none() {
            report.exact_calls += 1;
            let res = price(&inst, None, None, &clock)?;
            report.last_pricing_value = Some(res.best_profit + gamma);
            if res.timed_out {
                report.termination = Termination::TimeLimit;
                break;
            }
            if res.best_profit + gamma > cfg.rc_tol && !master.columns().contains(&res.best_type) {
                chosen = Some(res.best_type);
            }
        }
        match chosen {
            Some(c) => {
                master.add_column(c)?;
                report.columns_added += 1;
            }
            None => {
                report.termination = Termination::Converged;
                break;
            }
        }
    }
    let sol = master.solution().expect("solved at least once");
    let model = finish_model(master.columns(), &sol.x, lambda, cfg.prune_below)?;
    report.wall_time = clock.start.elapsed().as_secs_f64();
    Ok(Outcome { master, model, report })
}

fn run_em(log: &TransactionLog, n: usize, eta_max: usize, lambda: f64, cfg: &CgConfig) -> Result<Outcome<EmState>> {
    let clock = Clock { start: Instant::now(), limit: cfg.time_limit };
    let cols: Vec<ConsumerType> = initial_columns(log, n)?
        .into_iter()
        .filter(|c| (c.eta() as usize) <= eta_max)
        .collect();
    let mut state = EmState::new(log, cols)?;
    state.em_solve(cfg.em.tol, cfg.em.max_iter)?;
    let mut report = CgReport {
        iterations: 0,
        columns_added: 0,
        final_objective: state.loglik(),
        objective_trace: vec![state.loglik()],
        heuristic_calls: 0,
        exact_calls: 0,
        wall_time: 0.0,
        termination: Termination::Converged,
        last_pricing_value: None,
        em_trace: Vec::new(),
    };
    let threshold = state.num_transactions();
    loop {
        report.iterations += 1;
        if clock.expired() {
            report.termination = Termination::TimeLimit;
            break;
        }
        if cfg.max_columns.is_some_and(|m| state.columns().len() >= m) {
            report.termination = Termination::ColumnCap;
            break;
        }
        let inst = state.pricing_instance(n, eta_max, cfg.q)?;
        let seed = if cfg.use_heuristic_lb_seed {
            report.heuristic_calls += 1;
            Some(price(&inst, Some(2), None, &clock)?.best_profit)
        } else {
            None
        };
        report.exact_calls += 1;
        let res = price(&inst, None, seed, &clock)?;
        report.last_pricing_value = Some(res.best_profit);
        if res.timed_out {
            report.termination = Termination::TimeLimit;
            break;
        }
        if res.best_profit <= threshold + cfg.em.improvement_tol {
            report.termination = Termination::Converged;
            break;
        }
        let outcome = state.accept_column(&res.best_type, res.best_profit, &cfg.em)?;
        let accepted = matches!(outcome, AcceptOutcome::Accepted { .. });
        if cfg.trace {
            report.em_trace.push(EmTrace {
                iter: report.iterations,
                loglik: state.loglik(),
                columns: state.columns().len(),
                accepted,
            });
        }
        if !accepted {
            report.termination = Termination::LrFailed;
            break;
        }
        report.columns_added += 1;
        report.objective_trace.push(state.loglik());
        report.final_objective = state.loglik();
    }
    let model = finish_model(state.columns(), state.probs(), lambda, cfg.prune_below)?;
    report.wall_time = clock.start.elapsed().as_secs_f64();
    Ok(Outcome { master: state, model, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ProductSet, Transaction};

    fn tx(offer: &[u8], bundle: &[u8]) -> Transaction {
        Transaction::new(offer.iter().copied().collect(), bundle.iter().copied().collect()).unwrap()
    }

    #[test]
    fn single_type_log_is_recovered_by_both_masters() {
        let txs: Vec<_> = [[1u8, 2], [1, 3], [1, 2]]
            .iter()
            .flat_map(|o| vec![tx(o, &[1]); 5])
            .collect();
        let log = TransactionLog::new(txs, 0);
        for master in [Master::L1, Master::Em] {
            let cfg = CgConfig { master, ..CgConfig::default() };
            let (model, report) = run_estimation(&log, 3, &cfg).unwrap();
            let p = model.predicted_probability([1].into(), [1, 2, 3].into());
            assert!((p - 1.0).abs() < 1e-6, "{master:?}: {p}");
            if master == Master::L1 {
                assert!(report.final_objective < 1e-9);
            }
        }
    }

    #[test]
    fn passive_log_yields_passive_model() {
        let log = TransactionLog::new(vec![tx(&[1, 2], &[]); 6], 2);
        for master in [Master::L1, Master::Em] {
            let cfg = CgConfig { master, ..CgConfig::default() };
            let (model, _) = run_estimation(&log, 2, &cfg).unwrap();
            assert_eq!(model.types(), &[ConsumerType::passive()]);
            assert!((model.lambda() - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn column_cap_stops_early() {
        let log = TransactionLog::new(vec![tx(&[1, 2], &[2]), tx(&[1, 2], &[1])], 0);
        let cfg = CgConfig { max_columns: Some(1), ..CgConfig::default() };
        let (_, report) = run_estimation(&log, 2, &cfg).unwrap();
        assert_eq!(report.termination, Termination::ColumnCap);
        assert_eq!(report.columns_added, 0);
        let _ = ProductSet::EMPTY;
    }
}
