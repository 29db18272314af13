//! Seeded synthetic instance generators.
//!
//! Every random draw comes from ChaCha8 (`rand_chacha`), seeded with the
//! user seed and switched to a stream derived from the family and the purpose
//! of the draw (ground truth, train log, test log, revenues, probit
//! parameters). Train and test logs are therefore independent, and changing
//! one does not shift the other.

use std::path::Path;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, Instance};
use crate::model::{ChoiceModel, ConsumerType, ProductId, ProductSet, Transaction, TransactionLog, MAX_PRODUCTS};
use crate::pricing::{PricedTransaction, PricingInstance};

/// Rate of the intended-quantity law `P(q) ∝ exp(rate·q)`.
pub const QUANTITY_RATE: f64 = 0.6;
pub const Q_MAX: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SingleRandom,
    SingleStructured,
    MultipurchaseRankedlist,
    LimitedList,
    MultipurchaseProbit,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::SingleRandom,
        Family::SingleStructured,
        Family::MultipurchaseRankedlist,
        Family::LimitedList,
        Family::MultipurchaseProbit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::SingleRandom => "single_random",
            Family::SingleStructured => "single_structured",
            Family::MultipurchaseRankedlist => "multipurchase_rankedlist",
            Family::LimitedList => "limited_list",
            Family::MultipurchaseProbit => "multipurchase_probit",
        }
    }

    fn index(self) -> u64 {
        Family::ALL.iter().position(|&f| f == self).unwrap() as u64
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown family {s:?}")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `Published` restricts parameters to the published grids; `Custom` only checks
/// that they make sense.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Published,
    Custom,
}

/// Purpose of a random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Truth = 0,
    Train = 1,
    Test = 2,
    Revenues = 3,
    Params = 4,
    Population = 5,
}

/// The generator for `(family, seed, stream)`.
pub fn family_rng(family: Family, seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(family.index() << 8 | stream as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub family: Family,
    pub scale: Scale,
    pub n: usize,
    /// Number of ground-truth types (including the passive type where the family has one).
    pub k: usize,
    /// Probability of the passive type.
    pub p1: f64,
    pub eta_max: usize,
    pub periods: usize,
    pub arrivals_per_period: usize,
    /// Limited list: deletion probability.
    pub pd: f64,
    /// Limited list: number of swap attempts.
    pub swaps: usize,
    /// Total transaction count for families without periods (limited list, probit).
    pub transactions: usize,
    /// Limited list: keep only consideration intervals of at least 8 products.
    pub strong_substitution: bool,
    /// Probability that a period has an arrival; sets the ground truth's λ.
    pub arrival_prob: f64,
    pub seed: u64,
}

impl GenSpec {
    /// Published-grid defaults for `family`.
    pub fn new(family: Family, seed: u64) -> Self {
        let base = GenSpec {
            family,
            scale: Scale::Published,
            n: 10,
            k: 10,
            p1: 0.5,
            eta_max: 1,
            periods: 30,
            arrivals_per_period: 10,
            pd: 0.0,
            swaps: 1,
            transactions: 0,
            strong_substitution: false,
            arrival_prob: 1.0,
            seed,
        };
        match family {
            Family::SingleRandom => base,
            Family::SingleStructured => GenSpec { n: 15, ..base },
            Family::MultipurchaseRankedlist => GenSpec { k: 25, eta_max: 3, arrivals_per_period: 50, ..base },
            Family::LimitedList => GenSpec { n: 20, k: 100, transactions: 5000, ..base },
            Family::MultipurchaseProbit => GenSpec { eta_max: Q_MAX, transactions: 1000, ..base },
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("{}: {what}", self.family)));
        if self.n == 0 || self.n > MAX_PRODUCTS {
            return bad("n out of range");
        }
        if !(0.0..=1.0).contains(&self.p1) {
            return bad("p1 must lie in [0, 1]");
        }
        if !(self.arrival_prob > 0.0 && self.arrival_prob <= 1.0) {
            return bad("arrival probability must lie in (0, 1]");
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(0.0..1.0).contains(&self.pd) {
            return bad("pd must lie in [0, 1)");
        }
        let periodic = matches!(
            self.family,
            Family::SingleRandom | Family::SingleStructured | Family::MultipurchaseRankedlist
        );
        if periodic && (self.periods == 0 || self.arrivals_per_period == 0) {
            return bad("periods and arrivals per period must be positive");
        }
        if !periodic && self.transactions < 2 {
            return bad("need at least 2 transactions");
        }
        if self.family == Family::SingleStructured && self.n != 15 {
            return bad("structured instances have 5 items x 3 price levels = 15 products");
        }
        if self.family == Family::MultipurchaseRankedlist && !(1..=self.n).contains(&self.eta_max) {
            return bad("eta_max must lie in 1..=n");
        }
        if self.scale == Scale::Custom {
            return Ok(());
        }
        const PERIODS: [usize; 5] = [30, 75, 150, 300, 600];
        let ok = match self.family {
            Family::SingleRandom | Family::SingleStructured => {
                (self.family == Family::SingleStructured || self.n == 10)
                    && [0.2, 0.5, 0.9].contains(&self.p1)
                    && [10, 100].contains(&self.k)
                    && PERIODS.contains(&self.periods)
                    && self.arrivals_per_period == 10
            }
            Family::MultipurchaseRankedlist => {
                [10, 15].contains(&self.n)
                    && [0.2, 0.5, 0.8].contains(&self.p1)
                    && [25, 50, 100].contains(&self.k)
                    && (2..=5).contains(&self.eta_max)
                    && PERIODS.contains(&self.periods)
                    && self.arrivals_per_period == 50
            }
            Family::LimitedList => {
                let grid = self.n == 20
                    && [100, 500].contains(&self.k)
                    && [0.0, 0.25].contains(&self.pd)
                    && [1, 2, 4].contains(&self.swaps)
                    && [5000, 10000].contains(&self.transactions);
                grid && (!self.strong_substitution
                    || (self.pd == 0.25 && self.swaps == 4 && self.transactions == 10000))
            }
            Family::MultipurchaseProbit => {
                [5, 10, 15, 20, 25, 30].contains(&self.n) && self.transactions == 1000
            }
        };
        if ok {
            Ok(())
        } else {
            bad("parameters outside the published grid (use custom scale)")
        }
    }
}

/// Per-product parameters of the probit family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbitParams {
    /// Deterministic utilities, index `j - 1` for product `j`.
    pub v: Vec<f64>,
    /// Price sensitivities (non-positive).
    pub beta: Vec<f64>,
    /// Prices, which double as unit revenues.
    pub revenue: Vec<f64>,
}

/// One simulated probit consumer: products and the outside option (0) in
/// decreasing utility order, plus the intended quantity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbitConsumer {
    pub ranking: Vec<ProductId>,
    pub q: usize,
}

impl ProbitConsumer {
    /// The equivalent ranked-list type: products ranked above the outside
    /// option, capacity `min(q, |σ|)`.
    pub fn consumer_type(&self) -> ConsumerType {
        let sigma: Vec<ProductId> = self.ranking.iter().copied().take_while(|&j| j != 0).collect();
        let eta = self.q.min(sigma.len());
        if eta == 0 {
            return ConsumerType::passive();
        }
        ConsumerType::new(sigma, eta as u8).expect("ranking is a permutation")
    }
}

/// Normalized `exp(QUANTITY_RATE·q)` on `0..=Q_MAX`.
pub fn quantity_pmf() -> [f64; Q_MAX + 1] {
    let mut w = [0.0; Q_MAX + 1];
    for (q, wq) in w.iter_mut().enumerate() {
        *wq = (QUANTITY_RATE * q as f64).exp();
    }
    let z: f64 = w.iter().sum();
    w.map(|x| x / z)
}

impl ProbitParams {
    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn sample<R: Rng>(n: usize, rng: &mut R) -> Self {
        let std = Normal::new(0.0, 1.0).unwrap();
        let v = (0..n).map(|_| 3.0 + std.sample(rng)).collect();
        let revenue = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        let beta = (0..n).map(|_| -f64::abs(std.sample(rng))).collect();
        ProbitParams { v, beta, revenue }
    }

    /// Draws one consumer. Utilities are `V_j − β_j·r_j + ε_j` with a standard
    /// normal outside option; ties are broken by product index.
    pub fn sample_consumer<R: Rng>(&self, rng: &mut R) -> ProbitConsumer {
        let std = Normal::new(0.0, 1.0).unwrap();
        let mut util: Vec<(f64, ProductId)> = Vec::with_capacity(self.n() + 1);
        util.push((std.sample(rng), 0));
        for j in 0..self.n() {
            let u = self.v[j] - self.beta[j] * self.revenue[j] + std.sample(rng);
            util.push((u, j as ProductId + 1));
        }
        util.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let pmf = WeightedIndex::new(quantity_pmf()).unwrap();
        ProbitConsumer { ranking: util.into_iter().map(|(_, j)| j).collect(), q: pmf.sample(rng) }
    }
}

/// A generated instance plus family-specific extras.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub spec: GenSpec,
    pub instance: Instance,
    pub probit: Option<ProbitParams>,
}

/// File recording the generator settings next to the instance.
pub const SPEC_FILE: &str = "generator.json";

impl Generated {
    /// Writes the instance files, the generator settings and, for the probit
    /// family, the product parameters.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.instance.write(dir)?;
        io::write_json(&dir.join(SPEC_FILE), &self.spec)?;
        if let Some(p) = &self.probit {
            io::write_json(&dir.join(io::PROBIT_FILE), p)?;
        }
        Ok(())
    }
}

/// Dispatches on `spec.family`.
pub fn generate(spec: &GenSpec) -> Result<Generated> {
    spec.check()?;
    match spec.family {
        Family::SingleRandom => gen_single_random(spec),
        Family::SingleStructured => gen_single_structured(spec),
        Family::MultipurchaseRankedlist => gen_multipurchase_rankedlist(spec),
        Family::LimitedList => gen_limited_list(spec),
        Family::MultipurchaseProbit => gen_multipurchase_probit(spec),
    }
}

fn expect_family(spec: &GenSpec, family: Family) -> Result<()> {
    if spec.family != family {
        return Err(Error::invalid(format!("spec is for {}, not {family}", spec.family)));
    }
    spec.check()
}

/// `⌈0.3·t⌉`.
pub fn test_size(t: usize) -> usize {
    (3 * t).div_ceil(10)
}

fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<ProductId> {
    let mut p: Vec<ProductId> = (1..=n as ProductId).collect();
    p.shuffle(rng);
    p
}

/// Passive type with `p1` plus `others` with uniform weights scaled to `1 − p1`.
fn truth_with_passive<R: Rng>(others: Vec<ConsumerType>, p1: f64, lambda: f64, rng: &mut R) -> Result<ChoiceModel> {
    let raw: Vec<f64> = others.iter().map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let rest = if others.is_empty() { 0.0 } else { 1.0 - p1 };
    let passive_weight = if others.is_empty() { 1.0 } else { p1 };
    let weighted = std::iter::once((ConsumerType::passive(), passive_weight))
        .chain(others.into_iter().zip(raw.into_iter().map(|w| rest * w / total)));
    ChoiceModel::from_weights(weighted, lambda)
}

fn uniform_offer<R: Rng>(n: usize, lo: usize, hi: usize, rng: &mut R) -> ProductSet {
    let size = rng.random_range(lo..=hi);
    index::sample(rng, n, size).into_iter().map(|i| i as ProductId + 1).collect()
}

struct Sampler<'a> {
    model: &'a ChoiceModel,
    pick: WeightedIndex<f64>,
    no_arrival: Option<Geometric>,
}

impl<'a> Sampler<'a> {
    fn new(model: &'a ChoiceModel) -> Self {
        let p = model.lambda();
        Sampler {
            model,
            pick: WeightedIndex::new(model.probs()).expect("probabilities sum to 1"),
            no_arrival: (p < 1.0).then(|| Geometric::new(p).unwrap()),
        }
    }

    fn transaction<R: Rng>(&self, offer: ProductSet, rng: &mut R) -> Transaction {
        let c = &self.model.types()[self.pick.sample(rng)];
        Transaction::new(offer, c.purchase_outcome(offer)).expect("choice lies in the offer")
    }

    fn idle<R: Rng>(&self, rng: &mut R) -> usize {
        self.no_arrival.map_or(0, |g| g.sample(rng) as usize)
    }
}

/// Periodic families: one offer per period, several arrivals per offer.
fn periodic_logs(
    spec: &GenSpec,
    truth: &ChoiceModel,
    mut offer: impl FnMut(&mut ChaCha8Rng) -> ProductSet,
) -> (TransactionLog, TransactionLog) {
    let sampler = Sampler::new(truth);
    let mut rng = family_rng(spec.family, spec.seed, Stream::Train);
    let mut train = Vec::with_capacity(spec.periods * spec.arrivals_per_period);
    let mut idle = 0;
    for _ in 0..spec.periods {
        let s = offer(&mut rng);
        for _ in 0..spec.arrivals_per_period {
            idle += sampler.idle(&mut rng);
            train.push(sampler.transaction(s, &mut rng));
        }
    }
    let want = test_size(train.len());
    let mut rng = family_rng(spec.family, spec.seed, Stream::Test);
    let mut test = Vec::with_capacity(want);
    while test.len() < want {
        let s = offer(&mut rng);
        for _ in 0..spec.arrivals_per_period.min(want - test.len()) {
            test.push(sampler.transaction(s, &mut rng));
        }
    }
    (TransactionLog::new(train, idle), TransactionLog::new(test, 0))
}

fn unit_revenues(spec: &GenSpec) -> Vec<f64> {
    let mut rng = family_rng(spec.family, spec.seed, Stream::Revenues);
    (0..spec.n).map(|_| rng.random_range(1.0..5.0)).collect()
}

/// Passive type plus `k − 1` uniformly random full permutations, single purchase.
/// Offers have a uniform size in `[3, 6]` (clipped to `n`) and are uniform given the size.
pub fn gen_single_random(spec: &GenSpec) -> Result<Generated> {
    expect_family(spec, Family::SingleRandom)?;
    let n = spec.n;
    let mut rng = family_rng(spec.family, spec.seed, Stream::Truth);
    let others = (1..spec.k)
        .map(|_| ConsumerType::new(random_permutation(n, &mut rng), 1))
        .collect::<Result<Vec<_>>>()?;
    let truth = truth_with_passive(others, spec.p1, spec.arrival_prob, &mut rng)?;
    let (lo, hi) = (3.min(n), 6.min(n));
    let (train, test) = periodic_logs(spec, &truth, |r| uniform_offer(n, lo, hi, r));
    Ok(Generated {
        spec: spec.clone(),
        instance: Instance { n, train, test: Some(test), ground_truth: Some(truth), revenues: None },
        probit: None,
    })
}

pub const STRUCTURED_ITEMS: usize = 5;
pub const STRUCTURED_LEVELS: usize = 3;

/// Product id of `item` (0-based) at price `level` (0 is cheapest).
pub fn structured_product(item: usize, level: usize) -> ProductId {
    (item * STRUCTURED_LEVELS + level + 1) as ProductId
}

/// A uniform permutation of all 15 products subject to cheaper levels of an
/// item preceding pricier ones, truncated to a uniform length in `1..=15`.
fn structured_list<R: Rng>(rng: &mut R) -> Vec<ProductId> {
    let mut slots: Vec<usize> = (0..STRUCTURED_ITEMS).flat_map(|i| [i; STRUCTURED_LEVELS]).collect();
    slots.shuffle(rng);
    let mut next_level = [0usize; STRUCTURED_ITEMS];
    let full: Vec<ProductId> = slots
        .into_iter()
        .map(|i| {
            let l = next_level[i];
            next_level[i] += 1;
            structured_product(i, l)
        })
        .collect();
    let len = rng.random_range(1..=full.len());
    full[..len].to_vec()
}

pub fn gen_single_structured(spec: &GenSpec) -> Result<Generated> {
    expect_family(spec, Family::SingleStructured)?;
    let mut rng = family_rng(spec.family, spec.seed, Stream::Truth);
    let others = (1..spec.k)
        .map(|_| ConsumerType::new(structured_list(&mut rng), 1))
        .collect::<Result<Vec<_>>>()?;
    let truth = truth_with_passive(others, spec.p1, spec.arrival_prob, &mut rng)?;
    let offer = |r: &mut ChaCha8Rng| -> ProductSet {
        let size = r.random_range(3..=5);
        index::sample(r, STRUCTURED_ITEMS, size)
            .into_iter()
            .map(|i| structured_product(i, r.random_range(0..STRUCTURED_LEVELS)))
            .collect()
    };
    let (train, test) = periodic_logs(spec, &truth, offer);
    Ok(Generated {
        spec: spec.clone(),
        instance: Instance { n: spec.n, train, test: Some(test), ground_truth: Some(truth), revenues: None },
        probit: None,
    })
}

/// Passive type plus `k − 1` random lists. Each list is a uniform permutation
/// of the products and the outside option, cut at the outside option; its
/// capacity is uniform in `1..=min(eta_max, |σ|)`. Empty lists merge into the
/// passive type. Offers have size in `[5, 10]` (clipped to `n`).
pub fn gen_multipurchase_rankedlist(spec: &GenSpec) -> Result<Generated> {
    expect_family(spec, Family::MultipurchaseRankedlist)?;
    let n = spec.n;
    let mut rng = family_rng(spec.family, spec.seed, Stream::Truth);
    let others = (1..spec.k)
        .map(|_| {
            let mut full: Vec<ProductId> = (0..=n as ProductId).collect();
            full.shuffle(&mut rng);
            let sigma: Vec<ProductId> = full.into_iter().take_while(|&j| j != 0).collect();
            if sigma.is_empty() {
                return Ok(ConsumerType::passive());
            }
            let eta = rng.random_range(1..=spec.eta_max.min(sigma.len()));
            ConsumerType::new(sigma, eta as u8)
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = truth_with_passive(others, spec.p1, spec.arrival_prob, &mut rng)?;
    let (lo, hi) = (5.min(n), 10.min(n));
    let (train, test) = periodic_logs(spec, &truth, |r| uniform_offer(n, lo, hi, r));
    Ok(Generated {
        spec: spec.clone(),
        instance: Instance { n, train, test: Some(test), ground_truth: Some(truth), revenues: Some(unit_revenues(spec)) },
        probit: None,
    })
}

/// Applies `swaps` attempts, each swapping a uniformly chosen adjacent pair
/// with probability one half. Returns the positions swapped.
pub fn adjacent_swaps<R: Rng>(list: &mut [ProductId], swaps: usize, rng: &mut R) -> Vec<usize> {
    let mut events = Vec::new();
    for _ in 0..swaps {
        if list.len() >= 2 && rng.random_bool(0.5) {
            let pos = rng.random_range(0..list.len() - 1);
            list.swap(pos, pos + 1);
            events.push(pos);
        }
    }
    events
}

/// A consideration interval `[i, j]` of quality-ordered products (`i`
/// uniform in `1..=n`, then `j` uniform in `i..=n`) with independent
/// deletions and adjacent swaps. Intervals shorter than `min_len` are redrawn.
/// Returns the interval and the list.
pub fn limited_list<R: Rng>(
    n: usize,
    pd: f64,
    swaps: usize,
    min_len: usize,
    rng: &mut R,
) -> ((ProductId, ProductId), Vec<ProductId>) {
    assert!(min_len <= n, "interval length {min_len} exceeds n = {n}");
    let (i, j) = loop {
        let i = rng.random_range(1..=n as ProductId);
        let j = rng.random_range(i..=n as ProductId);
        if (j - i) as usize + 1 >= min_len {
            break (i, j);
        }
    };
    let mut list: Vec<ProductId> = (i..=j).filter(|_| pd == 0.0 || !rng.random_bool(pd)).collect();
    adjacent_swaps(&mut list, swaps, rng);
    ((i, j), list)
}

/// Minimum interval length in the strong-substitution variant.
pub const STRONG_MIN_LEN: usize = 8;

/// `k` limited lists with uniform normalized weights; one uniform random
/// offer (each product with probability 1/2) per transaction. A list emptied
/// by deletions becomes the passive type.
pub fn gen_limited_list(spec: &GenSpec) -> Result<Generated> {
    expect_family(spec, Family::LimitedList)?;
    let n = spec.n;
    if spec.strong_substitution && n < STRONG_MIN_LEN {
        return Err(Error::invalid("strong substitution needs n >= 8"));
    }
    let mut rng = family_rng(spec.family, spec.seed, Stream::Truth);
    let mut weighted = Vec::with_capacity(spec.k);
    for _ in 0..spec.k {
        let min_len = if spec.strong_substitution { STRONG_MIN_LEN } else { 1 };
        let (_, list) = limited_list(n, spec.pd, spec.swaps, min_len, &mut rng);
        let c = if list.is_empty() { ConsumerType::passive() } else { ConsumerType::new(list, 1)? };
        weighted.push((c, rng.random::<f64>()));
    }
    let truth = ChoiceModel::from_weights(weighted, spec.arrival_prob)?;
    let sampler = Sampler::new(&truth);
    let offer = |r: &mut ChaCha8Rng| loop {
        let s: ProductSet = (1..=n as ProductId).filter(|_| r.random_bool(0.5)).collect();
        if !s.is_empty() {
            break s;
        }
    };
    let draw = |count: usize, stream: Stream, idle: &mut usize| {
        let mut r = family_rng(spec.family, spec.seed, stream);
        (0..count)
            .map(|_| {
                *idle += sampler.idle(&mut r);
                let s = offer(&mut r);
                sampler.transaction(s, &mut r)
            })
            .collect::<Vec<_>>()
    };
    let mut idle = 0;
    let train = draw(spec.transactions, Stream::Train, &mut idle);
    let test = draw(test_size(spec.transactions), Stream::Test, &mut 0);
    Ok(Generated {
        spec: spec.clone(),
        instance: Instance {
            n,
            train: TransactionLog::new(train, idle),
            test: Some(TransactionLog::new(test, 0)),
            ground_truth: Some(truth),
            revenues: Some(unit_revenues(spec)),
        },
        probit: None,
    })
}

/// Offer size range `[⌈n/3⌉, ⌊2n/3⌋]`, at least 2 for `n = 5`.
pub fn probit_offer_range(n: usize) -> (usize, usize) {
    let lo = n.div_ceil(3).max(if n == 5 { 2 } else { 1 });
    let hi = (2 * n / 3).max(lo).min(n);
    (lo, hi)
}

/// Fresh probit consumers per transaction. The ground truth is the
/// ranked-list mixture of the training consumers (each with weight 1/T), so
/// every training transaction replays exactly under it. `transactions` is
/// split 80/20 into train and test.
pub fn gen_multipurchase_probit(spec: &GenSpec) -> Result<Generated> {
    expect_family(spec, Family::MultipurchaseProbit)?;
    let n = spec.n;
    let params = ProbitParams::sample(n, &mut family_rng(spec.family, spec.seed, Stream::Params));
    let (lo, hi) = probit_offer_range(n);
    let n_test = spec.transactions.div_ceil(5);
    let n_train = spec.transactions - n_test;
    let geometric = (spec.arrival_prob < 1.0).then(|| Geometric::new(spec.arrival_prob).unwrap());
    let draw = |count: usize, stream: Stream, idle: &mut usize| {
        let mut r = family_rng(spec.family, spec.seed, stream);
        (0..count)
            .map(|_| {
                *idle += geometric.map_or(0, |g| g.sample(&mut r) as usize);
                let s = uniform_offer(n, lo, hi, &mut r);
                let c = params.sample_consumer(&mut r).consumer_type();
                let t = Transaction::new(s, c.purchase_outcome(s)).expect("choice lies in the offer");
                (c, t)
            })
            .collect::<Vec<_>>()
    };
    let mut idle = 0;
    let train = draw(n_train, Stream::Train, &mut idle);
    let test = draw(n_test, Stream::Test, &mut 0);
    let w = 1.0 / n_train as f64;
    let truth = ChoiceModel::from_weights(train.iter().map(|(c, _)| (c.clone(), w)), spec.arrival_prob)?;
    Ok(Generated {
        spec: spec.clone(),
        instance: Instance {
            n,
            train: TransactionLog::new(train.into_iter().map(|(_, t)| t).collect(), idle),
            test: Some(TransactionLog::new(test.into_iter().map(|(_, t)| t).collect(), 0)),
            ground_truth: Some(truth),
            revenues: Some(params.revenue.clone()),
        },
        probit: Some(params),
    })
}

/// Random pricing instance: non-empty uniform offers, bundles of size at
/// most `eta_max` drawn from the offer, rewards uniform in `[−1, 1)`.
pub fn random_pricing_instance(seed: u64, n: usize, rows: usize, eta_max: usize, q: Option<usize>) -> Result<PricingInstance> {
    if n == 0 || n > MAX_PRODUCTS {
        return Err(Error::invalid(format!("universe size {n} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let offer = loop {
            let s: ProductSet = (1..=n as ProductId).filter(|_| rng.random_bool(0.5)).collect();
            if !s.is_empty() {
                break s;
            }
        };
        let size = rng.random_range(0..=offer.len().min(eta_max));
        let bundle = index::sample(&mut rng, offer.len(), size)
            .into_iter()
            .map(|i| offer.to_vec()[i])
            .collect();
        out.push(PricedTransaction { offer, bundle, mu: rng.random_range(-1.0..1.0) });
    }
    PricingInstance::new(n, eta_max, q, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn custom(family: Family, seed: u64) -> GenSpec {
        GenSpec { scale: Scale::Custom, ..GenSpec::new(family, seed) }
    }

    fn replays(g: &Generated) -> bool {
        let truth = g.instance.ground_truth.as_ref().unwrap();
        g.instance
            .train
            .transactions
            .iter()
            .all(|t| truth.iter().any(|(c, x)| x > 0.0 && c.is_compatible(t)))
    }

    #[test]
    fn every_family_is_deterministic_and_replays() {
        for family in Family::ALL {
            let mut spec = GenSpec::new(family, 7);
            if family == Family::LimitedList {
                spec.transactions = 5000;
            }
            let a = generate(&spec).unwrap();
            let b = generate(&spec).unwrap();
            assert_eq!(a, b, "{family}");
            assert!(replays(&a), "{family}");
            let truth = a.instance.ground_truth.as_ref().unwrap();
            assert!((truth.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let other = generate(&GenSpec { seed: 8, ..spec }).unwrap();
            assert_ne!(a.instance.train, other.instance.train);
        }
    }

    #[test]
    fn published_grid_is_enforced() {
        let spec = GenSpec { n: 6, ..GenSpec::new(Family::SingleRandom, 1) };
        assert!(generate(&spec).is_err());
        assert!(generate(&GenSpec { scale: Scale::Custom, ..spec }).is_ok());
        let spec = GenSpec { p1: 0.3, ..GenSpec::new(Family::SingleRandom, 1) };
        assert!(generate(&spec).is_err());
        assert!(gen_single_random(&GenSpec::new(Family::LimitedList, 1)).is_err());
        assert!("nope".parse::<Family>().is_err());
        assert_eq!("limited_list".parse::<Family>().unwrap(), Family::LimitedList);
    }

    #[test]
    fn single_random_shapes() {
        let spec = GenSpec { periods: 600, p1: 0.9, ..GenSpec::new(Family::SingleRandom, 3) };
        let g = generate(&spec).unwrap();
        let train = &g.instance.train;
        assert_eq!(train.len(), 6000);
        assert_eq!(g.instance.test.as_ref().unwrap().len(), 1800);
        assert!(train.transactions.iter().all(|t| (3..=6).contains(&t.offer.len()) && t.bundle.len() <= 1));
        let frac = train.no_purchase_periods() as f64 / train.len() as f64;
        assert!((frac - 0.9).abs() < 0.03, "{frac}");
    }

    #[test]
    fn structured_lists_respect_price_order() {
        let spec = GenSpec { k: 100, ..GenSpec::new(Family::SingleStructured, 5) };
        let g = generate(&spec).unwrap();
        for c in g.instance.ground_truth.as_ref().unwrap().types() {
            for item in 0..STRUCTURED_ITEMS {
                let pos: Vec<_> = (0..STRUCTURED_LEVELS)
                    .map(|l| c.sigma().iter().position(|&j| j == structured_product(item, l)))
                    .collect();
                // A level appears only if all cheaper levels precede it.
                for l in 1..STRUCTURED_LEVELS {
                    if let Some(p) = pos[l] {
                        assert!(pos[l - 1].is_some_and(|q| q < p));
                    }
                }
            }
        }
        for t in &g.instance.train.transactions {
            let items: Vec<_> = t.offer.iter().map(|j| (j as usize - 1) / STRUCTURED_LEVELS).collect();
            let mut dedup = items.clone();
            dedup.dedup();
            assert_eq!(items, dedup);
            assert!((3..=5).contains(&items.len()));
        }
    }

    #[test]
    fn structured_truncation_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 15];
        let draws = 10_000;
        for _ in 0..draws {
            counts[structured_list(&mut rng).len() - 1] += 1;
        }
        let e = draws as f64 / 15.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 0.999 quantile of chi-squared with 14 degrees of freedom.
        assert!(chi2 < 36.12, "{chi2}");
    }

    #[test]
    fn multipurchase_counts_and_revenues() {
        let spec = GenSpec { eta_max: 4, ..GenSpec::new(Family::MultipurchaseRankedlist, 2) };
        let g = generate(&spec).unwrap();
        assert_eq!(g.instance.train.len(), 50 * 30);
        assert!(g.instance.train.max_bundle_size() <= 4);
        assert!(g.instance.train.transactions.iter().all(|t| (5..=10).contains(&t.offer.len())));
        assert!(g.instance.revenues.as_ref().unwrap().iter().all(|r| (1.0..=5.0).contains(r)));
        assert!(g.instance.ground_truth.as_ref().unwrap().max_eta() <= 4);
    }

    #[test]
    fn limited_list_without_perturbation_is_the_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let ((i, j), list) = limited_list(20, 0.0, 0, 1, &mut rng);
            assert_eq!(list, (i..=j).collect::<Vec<_>>());
        }
    }

    #[test]
    fn swaps_move_one_position_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let mut list: Vec<ProductId> = (1..=12).collect();
            let events = adjacent_swaps(&mut list, 4, &mut rng);
            assert!(events.len() <= 4);
            let mut replay: Vec<ProductId> = (1..=12).collect();
            for pos in events {
                let before = replay.clone();
                replay.swap(pos, pos + 1);
                let moved = before.iter().zip(&replay).filter(|(a, b)| a != b).count();
                assert_eq!(moved, 2);
            }
            assert_eq!(replay, list);
        }
    }

    #[test]
    fn limited_list_offers_and_strong_variant() {
        let spec = GenSpec { transactions: 5000, ..GenSpec::new(Family::LimitedList, 4) };
        let g = generate(&spec).unwrap();
        let mean = g.instance.train.transactions.iter().map(|t| t.offer.len()).sum::<usize>() as f64 / 5000.0;
        assert!((mean - 10.0).abs() < 0.2, "{mean}");
        assert_eq!(g.instance.test.as_ref().unwrap().len(), 1500);
        let strong = GenSpec {
            k: 100,
            pd: 0.25,
            swaps: 4,
            transactions: 10000,
            strong_substitution: true,
            ..GenSpec::new(Family::LimitedList, 4)
        };
        assert!(generate(&strong).is_ok());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let ((i, j), list) = limited_list(20, 0.25, 4, STRONG_MIN_LEN, &mut rng);
            assert!((j - i) as usize + 1 >= STRONG_MIN_LEN);
            assert!(list.iter().all(|p| (i..=j).contains(p)));
        }
    }

    #[test]
    fn probit_family() {
        for n in [5, 10, 30] {
            let spec = GenSpec { n, ..GenSpec::new(Family::MultipurchaseProbit, 9) };
            let g = generate(&spec).unwrap();
            assert_eq!(g.instance.train.len(), 800);
            assert_eq!(g.instance.test.as_ref().unwrap().len(), 200);
            assert!(g.instance.train.max_bundle_size() <= Q_MAX);
            let (lo, hi) = probit_offer_range(n);
            assert!(lo >= 2 && lo <= hi);
            assert!(g.instance.train.transactions.iter().all(|t| (lo..=hi).contains(&t.offer.len())));
            let p = g.probit.as_ref().unwrap();
            assert_eq!(g.instance.revenues.as_ref(), Some(&p.revenue));
            assert!(p.beta.iter().all(|b| *b <= 0.0));
        }
    }

    #[test]
    fn quantity_law() {
        let pmf = quantity_pmf();
        let want = [0.16281, 0.29666, 0.54054];
        for (p, w) in pmf.iter().zip(want) {
            assert!((p - w).abs() < 1e-5);
        }
    }

    #[test]
    fn probit_consumer_type_stops_at_outside_option() {
        let c = ProbitConsumer { ranking: vec![3, 1, 0, 2], q: 2 };
        assert_eq!(c.consumer_type(), ConsumerType::new(vec![3, 1], 2).unwrap());
        let c = ProbitConsumer { ranking: vec![3, 0, 1, 2], q: 2 };
        assert_eq!(c.consumer_type(), ConsumerType::new(vec![3], 1).unwrap());
        let c = ProbitConsumer { ranking: vec![0, 3, 1, 2], q: 2 };
        assert!(c.consumer_type().is_passive());
        let c = ProbitConsumer { ranking: vec![3, 1, 2, 0], q: 0 };
        assert!(c.consumer_type().is_passive());
    }

    #[test]
    fn idle_periods_follow_arrival_probability() {
        let spec = GenSpec { arrival_prob: 0.8, periods: 300, ..custom(Family::SingleRandom, 1) };
        let g = generate(&spec).unwrap();
        let lam = crate::model::estimate_arrival_rate(&g.instance.train).unwrap();
        assert!((lam - 0.8).abs() < 0.02, "{lam}");
        assert_eq!(g.instance.ground_truth.unwrap().lambda(), 0.8);
    }

    #[test]
    fn random_pricing_instances_are_valid() {
        for seed in 0..50 {
            let inst = random_pricing_instance(seed, 5, 20, 2, Some(3)).unwrap();
            assert!(inst.transactions().iter().all(|t| t.bundle.len() <= 2 && t.bundle.is_subset(t.offer)));
            assert_eq!(inst, random_pricing_instance(seed, 5, 20, 2, Some(3)).unwrap());
        }
    }
}
