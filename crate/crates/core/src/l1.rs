//! ℓ1-error restricted master:
//!
//! ```text
//! min Σ_m (ε⁺_m + ε⁻_m)
//! s.t. Σ_c a_mc x_c + ε⁺_m − ε⁻_m = v_m   for every distinct row m
//!      Σ_c x_c = 1
//!      x, ε⁺, ε⁻ ≥ 0
//! ```
//!
//! Variables are laid out as `ε⁺` (one per row), `ε⁻` (one per row), then
//! type columns in insertion order. The passive type is always column 0.

use crate::error::{Error, Result};
use crate::lp::{DenseSimplex, LpSolver, SparseColumn};
use crate::model::{ConsumerType, DistinctMarket};
use crate::pricing::{PricedTransaction, PricingInstance};

#[derive(Clone, Debug, PartialEq)]
pub struct L1Solution {
    pub x: Vec<f64>,
    pub eps_plus: Vec<f64>,
    pub eps_minus: Vec<f64>,
    pub objective: f64,
    /// Row duals.
    pub mu: Vec<f64>,
    /// Dual of the convexity row.
    pub gamma: f64,
}

pub struct L1Master<S: LpSolver = DenseSimplex> {
    market: DistinctMarket,
    lp: S,
    columns: Vec<ConsumerType>,
    solution: Option<L1Solution>,
}

impl L1Master<DenseSimplex> {
    pub fn new(market: DistinctMarket) -> Result<Self> {
        let mut rhs: Vec<f64> = market.rows().iter().map(|r| r.prob).collect();
        rhs.push(1.0);
        Self::with_solver(market, DenseSimplex::new(rhs))
    }
}

impl<S: LpSolver> L1Master<S> {
    /// Uses `lp`, which must be an empty problem with one row per market row
    /// plus the convexity row, and seeds it with the passive type.
    pub fn with_solver(market: DistinctMarket, mut lp: S) -> Result<Self> {
        let m = market.len();
        if m == 0 {
            return Err(Error::invalid("empty market"));
        }
        if lp.num_rows() != m + 1 || lp.num_cols() != 0 {
            return Err(Error::invalid("LP must be empty with one row per market row plus one"));
        }
        for r in 0..m {
            lp.add_column(SparseColumn::new(vec![(r, 1.0)]), 1.0);
        }
        for r in 0..m {
            lp.add_column(SparseColumn::new(vec![(r, -1.0)]), 1.0);
        }
        let mut master = L1Master { market, lp, columns: Vec::new(), solution: None };
        let passive = ConsumerType::passive();
        let pidx = master.lp.num_cols();
        master.add_column(passive)?;
        // Feasible start: the passive type takes all mass and ε absorbs the misfit.
        let basis = master
            .market
            .rows()
            .iter()
            .enumerate()
            .map(|(r, row)| if row.bundle.is_empty() { m + r } else { r })
            .chain(std::iter::once(pidx))
            .collect();
        master.lp.set_basis(basis);
        Ok(master)
    }

    pub fn market(&self) -> &DistinctMarket {
        &self.market
    }

    pub fn columns(&self) -> &[ConsumerType] {
        &self.columns
    }

    pub fn solution(&self) -> Option<&L1Solution> {
        self.solution.as_ref()
    }

    pub fn lp(&self) -> &S {
        &self.lp
    }

    /// Appends a type column. Returns false if it is already present.
    pub fn add_column(&mut self, c: ConsumerType) -> Result<bool> {
        if self.columns.contains(&c) {
            return Ok(false);
        }
        let m = self.market.len();
        let mut entries: Vec<(usize, f64)> = self
            .market
            .rows()
            .iter()
            .enumerate()
            .filter(|(_, r)| c.is_compatible(&r.transaction()))
            .map(|(i, _)| (i, 1.0))
            .collect();
        entries.push((m, 1.0));
        self.lp.add_column(SparseColumn::new(entries), 0.0);
        self.columns.push(c);
        Ok(true)
    }

    pub fn solve(&mut self) -> Result<&L1Solution> {
        let sol = self.lp.solve()?;
        let m = self.market.len();
        let x = sol.x[2 * m..].to_vec();
        let solution = L1Solution {
            eps_plus: sol.x[..m].to_vec(),
            eps_minus: sol.x[m..2 * m].to_vec(),
            x,
            objective: sol.objective,
            mu: sol.duals[..m].to_vec(),
            gamma: sol.duals[m],
        };
        self.solution = Some(solution);
        Ok(self.solution.as_ref().unwrap())
    }

    /// `γ + Σ_m a_mc μ_m`; positive values mark improving columns.
    pub fn reduced_cost(&self, c: &ConsumerType) -> Result<f64> {
        let sol = self.solution.as_ref().ok_or_else(|| Error::invalid("master not solved"))?;
        Ok(sol.gamma
            + self
                .market
                .rows()
                .iter()
                .zip(&sol.mu)
                .filter(|(r, _)| c.is_compatible(&r.transaction()))
                .map(|(_, mu)| mu)
                .sum::<f64>())
    }

    /// Pricing instance with the current row duals as rewards.
    pub fn pricing_instance(&self, n: usize, eta_max: usize, q: Option<usize>) -> Result<PricingInstance> {
        let sol = self.solution.as_ref().ok_or_else(|| Error::invalid("master not solved"))?;
        let rows = self
            .market
            .rows()
            .iter()
            .zip(&sol.mu)
            .map(|(r, &mu)| PricedTransaction { offer: r.offer, bundle: r.bundle, mu });
        PricingInstance::new(n, eta_max, q, rows)
    }
}
