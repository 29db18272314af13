//! Prediction-error metrics: SRMSE against a ground-truth model, HRMSE and
//! MRMSE against an out-of-sample log.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ChoiceModel, ProductSet, TransactionLog};

/// Largest universe SRMSE will enumerate.
pub const SRMSE_MAX_N: usize = 12;

/// `|{B ⊆ S : |B| ≤ eta}|` for `|S| = s`.
pub fn bundle_space_size(s: usize, eta: usize) -> u64 {
    let mut c = 1u64;
    let mut total = 1u64;
    for i in 1..=eta.min(s) {
        c = c * (s - i + 1) as u64 / i as u64;
        total += c;
    }
    total
}

/// Sum of `(p − q)²` over bundles of size at most `eta`, where `p` and `q` are
/// sorted sparse distributions (absent bundles have probability 0).
fn squared_gap(p: &[(ProductSet, f64)], q: &[(ProductSet, f64)], eta: usize) -> f64 {
    let mut merged: BTreeMap<ProductSet, f64> = BTreeMap::new();
    for &(b, x) in p {
        *merged.entry(b).or_insert(0.0) += x;
    }
    for &(b, x) in q {
        *merged.entry(b).or_insert(0.0) -= x;
    }
    merged.into_iter().filter(|(b, _)| b.len() <= eta).map(|(_, d)| d * d).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrmseOptions {
    /// Bundle-size cap; defaults to the larger capacity of the two models.
    pub eta: Option<usize>,
    /// Also count the empty offer (whose only bundle is ∅).
    pub include_empty_offer: bool,
}

impl Default for SrmseOptions {
    fn default() -> Self {
        SrmseOptions { eta: None, include_empty_offer: false }
    }
}

/// SRMSE over every non-empty offer `S ⊆ {1..n}`.
pub fn srmse(model: &ChoiceModel, truth: &ChoiceModel, n: usize) -> Result<f64> {
    srmse_with(model, truth, n, SrmseOptions::default())
}

pub fn srmse_with(model: &ChoiceModel, truth: &ChoiceModel, n: usize, opts: SrmseOptions) -> Result<f64> {
    if n == 0 || n > SRMSE_MAX_N {
        return Err(Error::invalid(format!("SRMSE enumerates all offers and needs 1 <= n <= {SRMSE_MAX_N}, got {n}")));
    }
    let eta = opts.eta.unwrap_or_else(|| model.max_eta().max(truth.max_eta()));
    let first = if opts.include_empty_offer { 0u64 } else { 1 };
    // Collected in offer order and summed serially so results do not depend
    // on thread scheduling.
    let terms: Vec<(f64, f64)> = (first..1u64 << n)
        .into_par_iter()
        .map(|bits| {
            let s = ProductSet::from_bits(bits);
            let gap = squared_gap(&model.bundle_distribution(s), &truth.bundle_distribution(s), eta);
            (gap, bundle_space_size(s.len(), eta) as f64)
        })
        .collect();
    let (num, den) = terms.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok((num / den).sqrt())
}

fn check_test(test: &TransactionLog) -> Result<()> {
    if test.is_empty() {
        return Err(Error::invalid("empty test log"));
    }
    Ok(())
}

/// HRMSE with the bundle cap set to the largest observed bundle.
pub fn hrmse(model: &ChoiceModel, test: &TransactionLog) -> Result<f64> {
    hrmse_with(model, test, None)
}

pub fn hrmse_with(model: &ChoiceModel, test: &TransactionLog, eta: Option<usize>) -> Result<f64> {
    check_test(test)?;
    let eta = eta.unwrap_or_else(|| test.max_bundle_size());
    let mut cache: HashMap<ProductSet, Vec<(ProductSet, f64)>> = HashMap::new();
    let (mut num, mut den) = (0.0, 0.0);
    for t in &test.transactions {
        let dist = cache.entry(t.offer).or_insert_with(|| model.bundle_distribution(t.offer));
        num += squared_gap(dist, &[(t.bundle, 1.0)], eta);
        den += bundle_space_size(t.offer.len(), eta) as f64;
    }
    Ok((num / den).sqrt())
}

/// MRMSE: error of the per-product marginal purchase probabilities.
pub fn mrmse(model: &ChoiceModel, test: &TransactionLog) -> Result<f64> {
    check_test(test)?;
    let mut cache: HashMap<ProductSet, Vec<f64>> = HashMap::new();
    let (mut num, mut den) = (0.0, 0.0);
    for t in &test.transactions {
        let marg = cache.entry(t.offer).or_insert_with(|| model.marginal_purchase(t.offer));
        for j in t.offer.iter() {
            let observed = if t.bundle.contains(j) { 1.0 } else { 0.0 };
            num += (observed - marg[j as usize]).powi(2);
        }
        den += t.offer.len() as f64;
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConsumerType, Transaction};
    use proptest::prelude::*;

    fn ct(sigma: &[u8], eta: u8) -> ConsumerType {
        ConsumerType::new(sigma.to_vec(), eta).unwrap()
    }

    fn point(c: ConsumerType) -> ChoiceModel {
        ChoiceModel::new(vec![c], vec![1.0], 1.0).unwrap()
    }

    fn tx(offer: &[u8], bundle: &[u8]) -> Transaction {
        Transaction::new(offer.iter().copied().collect(), bundle.iter().copied().collect()).unwrap()
    }

    #[test]
    fn bundle_space_sizes() {
        assert_eq!(bundle_space_size(0, 3), 1);
        assert_eq!(bundle_space_size(4, 1), 5);
        assert_eq!(bundle_space_size(4, 2), 11);
        assert_eq!(bundle_space_size(4, 9), 16);
        assert_eq!(bundle_space_size(12, 12), 4096);
    }

    #[test]
    fn srmse_hand_case_and_identity() {
        let buyer = point(ct(&[1], 1));
        let passive = point(ConsumerType::passive());
        assert!((srmse(&passive, &buyer, 1).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(srmse(&buyer, &buyer, 1).unwrap(), 0.0);
        // The empty offer adds one bundle with no error.
        let opts = SrmseOptions { include_empty_offer: true, ..SrmseOptions::default() };
        assert!((srmse_with(&passive, &buyer, 1, opts).unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(srmse(&buyer, &buyer, 13).is_err());
    }

    #[test]
    fn hrmse_hand_cases() {
        let test = TransactionLog::new(vec![tx(&[1, 2], &[1]), tx(&[2], &[2])], 0);
        assert_eq!(hrmse(&point(ct(&[1, 2], 1)), &test).unwrap(), 0.0);
        // Passive model: each row has one miss on the observed bundle and one
        // on ∅, over 3 + 2 bundles.
        let got = hrmse(&point(ConsumerType::passive()), &test).unwrap();
        assert!((got - (4.0f64 / 5.0).sqrt()).abs() < 1e-15);
        assert!(hrmse(&point(ConsumerType::passive()), &TransactionLog::new(vec![], 0)).is_err());
    }

    #[test]
    fn mrmse_hand_case() {
        let m = ChoiceModel::new(vec![ct(&[1], 1), ConsumerType::passive()], vec![0.5, 0.5], 1.0).unwrap();
        let test = TransactionLog::new(vec![tx(&[1, 2], &[1])], 0);
        assert!((mrmse(&m, &test).unwrap() - (0.125f64).sqrt()).abs() < 1e-12);
        let doubled = TransactionLog::new(vec![tx(&[1, 2], &[1]); 2], 0);
        assert_eq!(mrmse(&m, &test).unwrap(), mrmse(&m, &doubled).unwrap());
    }

    #[test]
    fn single_purchase_srmse_matches_classical_form() {
        let truth = ChoiceModel::new(vec![ct(&[2, 1], 1), ct(&[3], 1)], vec![0.3, 0.7], 1.0).unwrap();
        let model = ChoiceModel::new(vec![ct(&[1, 2, 3], 1), ConsumerType::passive()], vec![0.6, 0.4], 1.0).unwrap();
        // Classical: over offers, over the offered products plus no-purchase.
        let (mut num, mut den) = (0.0, 0.0);
        for bits in 1u64..8 {
            let s = ProductSet::from_bits(bits);
            let options = std::iter::once(ProductSet::EMPTY).chain(s.iter().map(|j| ProductSet::EMPTY.with(j)));
            for b in options {
                num += (model.predicted_probability(b, s) - truth.predicted_probability(b, s)).powi(2);
                den += 1.0;
            }
        }
        assert!((srmse(&model, &truth, 3).unwrap() - (num / den).sqrt()).abs() < 1e-14);
    }

    fn arb_model() -> impl Strategy<Value = ChoiceModel> {
        let ty = (Just((1..=4).collect::<Vec<u8>>()).prop_shuffle(), 1usize..=4, 0u8..=3)
            .prop_map(|(p, len, eta)| {
                let eta = eta.min(len as u8);
                if eta == 0 { ConsumerType::passive() } else { ConsumerType::new(p[..len].to_vec(), eta).unwrap() }
            });
        proptest::collection::vec((ty, 0.01f64..1.0), 1..5)
            .prop_map(|w| ChoiceModel::from_weights(w, 1.0).unwrap())
    }

    proptest! {
        #[test]
        fn metrics_are_nonnegative_and_mixing_toward_truth_helps(
            model in arb_model(),
            truth in arb_model(),
            w in 0.0f64..1.0,
        ) {
            let d0 = srmse(&model, &truth, 4).unwrap();
            prop_assert!(d0 >= 0.0);
            prop_assert_eq!(srmse(&truth, &truth, 4).unwrap(), 0.0);
            let mixed = ChoiceModel::from_weights(
                model.iter().map(|(c, x)| (c.clone(), (1.0 - w) * x))
                    .chain(truth.iter().map(|(c, x)| (c.clone(), w * x))),
                1.0,
            ).unwrap();
            // Bundle probabilities are affine in w, so the error scales by 1 − w.
            prop_assert!((srmse(&mixed, &truth, 4).unwrap() - (1.0 - w) * d0).abs() < 1e-9);
            for bits in 1u64..16 {
                let s = ProductSet::from_bits(bits);
                let total: f64 = model.bundle_distribution(s).iter().map(|(_, p)| p).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn test_metrics_are_permutation_invariant(model in arb_model(), truth in arb_model(), seed in 0u64..1000) {
            use rand::{SeedableRng, seq::SliceRandom};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut txs = Vec::new();
            for bits in 1u64..16 {
                let s = ProductSet::from_bits(bits);
                for (c, _) in truth.iter() {
                    txs.push(Transaction::new(s, c.purchase_outcome(s)).unwrap());
                }
            }
            let log = TransactionLog::new(txs.clone(), 0);
            txs.shuffle(&mut rng);
            let shuffled = TransactionLog::new(txs, 0);
            prop_assert!((hrmse(&model, &log).unwrap() - hrmse(&model, &shuffled).unwrap()).abs() < 1e-12);
            prop_assert!((mrmse(&model, &log).unwrap() - mrmse(&model, &shuffled).unwrap()).abs() < 1e-12);
            prop_assert!(hrmse(&model, &log).unwrap() >= 0.0);
        }
    }
}
