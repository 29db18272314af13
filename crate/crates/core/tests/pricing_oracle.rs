use choicecg::oracle::{brute_force_glop, OracleConfig};
use choicecg::pricing::{
    replay, DominanceMode, LabelingSolver, PricedTransaction, PricingConfig, PricingContext,
    PricingInstance, QueueOrder,
};
use choicecg::{ProductSet, ConsumerType};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(seed: u64, n: usize, rows: usize, eta_max: usize, q: Option<usize>) -> PricingInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..rows {
        let mut offer = ProductSet::EMPTY;
        while offer.is_empty() {
            for j in 1..=n as u8 {
                if rng.random_bool(0.5) {
                    offer.insert(j);
                }
            }
        }
        let size = rng.random_range(0..=offer.len().min(eta_max));
        let mut items = offer.to_vec();
        let mut bundle = ProductSet::EMPTY;
        for _ in 0..size {
            let k = rng.random_range(0..items.len());
            bundle.insert(items.swap_remove(k));
        }
        out.push(PricedTransaction { offer, bundle, mu: rng.random_range(-1.0..1.0) });
    }
    PricingInstance::new(n, eta_max, q, out).unwrap()
}

fn oracle(inst: &PricingInstance) -> f64 {
    brute_force_glop(inst, OracleConfig::default()).unwrap().best_profit
}

fn dp(inst: &PricingInstance, cfg: PricingConfig) -> f64 {
    let res = LabelingSolver::new(inst, cfg).solve(None).unwrap();
    assert!((inst.profit_of(&res.best_type) - res.best_profit).abs() < 1e-12);
    res.best_profit
}

#[test]
fn dp_matches_oracle_on_seeded_instances() {
    for seed in 0..300u64 {
        let n = 2 + (seed % 6) as usize;
        let eta = 1 + (seed % 3) as usize;
        let eta = eta.min(n);
        let q = if seed % 2 == 0 { Some(2) } else { None };
        let inst = random_instance(seed, n, 1 + (seed % 30) as usize, eta, q);
        if inst.transactions().is_empty() {
            continue;
        }
        let want = oracle(&inst);
        let got = dp(&inst, PricingConfig::default());
        assert!((want - got).abs() < 1e-9, "seed {seed}: oracle {want} dp {got}");
    }
}

#[test]
fn dominance_off_and_queue_orders_agree() {
    for seed in 1000..1100u64 {
        let inst = random_instance(seed, 5, 12, 3, None);
        if inst.transactions().is_empty() {
            continue;
        }
        let want = oracle(&inst);
        for (dominance, queue) in [
            (DominanceMode::Off, QueueOrder::BestFirst),
            (DominanceMode::General, QueueOrder::Fifo),
            (DominanceMode::General, QueueOrder::Lifo),
        ] {
            let cfg = PricingConfig { dominance, queue, ..PricingConfig::default() };
            let got = dp(&inst, cfg);
            assert!((want - got).abs() < 1e-9, "seed {seed} {dominance:?} {queue:?}");
        }
    }
}

#[test]
fn heuristic_never_beats_exact() {
    for seed in 2000..2100u64 {
        let inst = random_instance(seed, 6, 20, 2, None);
        if inst.transactions().is_empty() {
            continue;
        }
        let exact = dp(&inst, PricingConfig::default());
        for cap in [1, 2, 5] {
            let cfg = PricingConfig { bucket_cap: Some(cap), ..PricingConfig::default() };
            assert!(dp(&inst, cfg) <= exact + 1e-12);
        }
        let unbounded = PricingConfig { bucket_cap: Some(usize::MAX), ..PricingConfig::default() };
        assert!((dp(&inst, unbounded) - exact).abs() < 1e-12);
    }
}

#[test]
fn seeded_lower_bound_keeps_optimum() {
    for seed in 3000..3050u64 {
        let inst = random_instance(seed, 5, 15, 2, None);
        if inst.transactions().is_empty() {
            continue;
        }
        let want = oracle(&inst);
        let heur = choicecg::solve_pricing_heuristic(&inst, 2).unwrap().best_profit;
        let res = LabelingSolver::new(&inst, PricingConfig::default()).solve(Some(heur)).unwrap();
        assert!((res.best_profit - want).abs() < 1e-9);
    }
}

#[test]
fn oracle_is_permutation_invariant_and_q_n_equals_unset() {
    for seed in 4000..4040u64 {
        let inst = random_instance(seed, 4, 10, 2, None);
        if inst.transactions().is_empty() {
            continue;
        }
        let mut rows = inst.transactions().to_vec();
        rows.reverse();
        let rev = PricingInstance::new(4, 2, None, rows.clone()).unwrap();
        assert!((oracle(&inst) - oracle(&rev)).abs() < 1e-12);
        let capped = PricingInstance::new(4, 2, Some(4), rows).unwrap();
        assert!((oracle(&inst) - oracle(&capped)).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accelerations_never_change_the_optimum(seed in 0u64..1_000_000, n in 2usize..6, rows in 1usize..20, eta in 1usize..4) {
        let eta = eta.min(n);
        let inst = random_instance(seed, n, rows, eta, None);
        prop_assume!(!inst.transactions().is_empty());
        let base = dp(&inst, PricingConfig { completion_bounds: false, unreachable: false, ..PricingConfig::default() });
        for (cb, up) in [(true, false), (false, true), (true, true)] {
            let got = dp(&inst, PricingConfig { completion_bounds: cb, unreachable: up, ..PricingConfig::default() });
            prop_assert!((got - base).abs() < 1e-9);
        }
    }

    #[test]
    fn single_purchase_profit_only_dominance_is_exact(seed in 0u64..1_000_000, n in 2usize..7, rows in 1usize..25) {
        let inst = random_instance(seed, n, rows, 1, None);
        prop_assume!(!inst.transactions().is_empty());
        let general = dp(&inst, PricingConfig::default());
        let simple = dp(&inst, PricingConfig { dominance: DominanceMode::ProfitOnly, ..PricingConfig::default() });
        prop_assert!((general - simple).abs() < 1e-9);
    }

    #[test]
    fn limited_list_results_respect_cap(seed in 0u64..1_000_000, n in 2usize..7, rows in 1usize..20, q in 1usize..4) {
        let inst = random_instance(seed, n, rows, 1, Some(q));
        prop_assume!(!inst.transactions().is_empty());
        let res = LabelingSolver::new(&inst, PricingConfig::default()).solve(None).unwrap();
        prop_assert!(res.best_type.sigma().len() <= q);
        prop_assert!((res.best_profit - oracle(&inst)).abs() < 1e-9);
    }

    #[test]
    fn replay_is_consistent_and_unreachable_is_monotone(seed in 0u64..1_000_000, n in 2usize..7, rows in 1usize..20, eta in 1usize..4) {
        let eta = eta.min(n);
        let inst = random_instance(seed, n, rows, eta, None);
        prop_assume!(!inst.transactions().is_empty());
        let ctx = PricingContext::new(&inst, true);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for root_eta in 1..=eta as u8 {
            // Random walk through allowed extensions.
            let mut sigma = Vec::new();
            let mut label = ctx.init_labels().into_iter().find(|l| l.eta == root_eta).unwrap();
            loop {
                let cands = label.candidates(ctx.universe()).to_vec();
                if cands.is_empty() {
                    break;
                }
                let j = cands[rng.random_range(0..cands.len())];
                let next = ctx.extend(&label, j).unwrap();
                prop_assert!(label.unreachable.is_subset(next.unreachable));
                prop_assert!(next.visited.intersection(next.unreachable).is_empty());
                prop_assert_eq!(next.len, next.visited.len());
                sigma.push(j);
                label = next;
                let c = ConsumerType::new(sigma.clone(), root_eta).unwrap();
                prop_assert!((label.profit - inst.profit_of(&c)).abs() < 1e-9);
            }
            let chain = replay(&ctx, &sigma, root_eta).unwrap();
            prop_assert_eq!(&chain.last().unwrap().kappa, &label.kappa);
            prop_assert_eq!(chain.last().unwrap().profit, label.profit);
        }
    }
}
