//! Fixtures shared by the benchmarks: pricing instances built from the duals
//! of a converged EM master on generated multi-purchase data.

use choicecg::datagen::{generate, Family, GenSpec};
use choicecg::em::{initial_columns, EmState};
use choicecg::{PricingInstance, Result};

/// Pricing instance on EM duals for a ranked-list instance with `n` products,
/// `periods` periods of 50 arrivals and capacity cap `eta_max`.
pub fn em_pricing_instance(n: usize, periods: usize, eta_max: usize, seed: u64) -> Result<PricingInstance> {
    let spec = GenSpec { n, eta_max: 3, periods, ..GenSpec::new(Family::MultipurchaseRankedlist, seed) };
    let g = generate(&spec)?;
    let log = &g.instance.train;
    let mut st = EmState::new(log, initial_columns(log, n)?)?;
    st.em_solve(1e-8, 2000)?;
    st.pricing_instance(n, eta_max, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_has_rows() {
        let inst = em_pricing_instance(10, 30, 2, 0).unwrap();
        assert_eq!(inst.n(), 10);
        assert!(!inst.transactions().is_empty());
    }
}
