//! Problem data model: products, transactions, consumer types and choice models.
//!
//! Products are 1-based indices. In memory every offer and bundle is a
//! [`ProductSet`] bitset, which makes the canonical (sorted, duplicate-free)
//! form the only representable one. Index 0 never appears in memory; it only
//! shows up in serialized preference lists as the no-purchase cutoff.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// 1-based product index.
pub type ProductId = u8;

/// Largest supported universe size.
pub const MAX_PRODUCTS: usize = 64;

/// Set of products encoded as a 64-bit mask (bit `j - 1` is product `j`).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ProductSet(u64);

impl ProductSet {
    pub const EMPTY: ProductSet = ProductSet(0);

    /// All products `1..=n`.
    pub fn universe(n: usize) -> Self {
        assert!(n <= MAX_PRODUCTS, "universe of {n} products exceeds {MAX_PRODUCTS}");
        if n == MAX_PRODUCTS {
            ProductSet(u64::MAX)
        } else {
            ProductSet((1u64 << n) - 1)
        }
    }

    pub const fn from_bits(bits: u64) -> Self {
        ProductSet(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    /// Builds a set from product ids, rejecting 0, out-of-range ids and duplicates.
    pub fn try_from_ids(ids: &[u64]) -> Result<Self> {
        let mut set = ProductSet::EMPTY;
        for &id in ids {
            if id == 0 || id as usize > MAX_PRODUCTS {
                return Err(Error::data(format!("product id {id} outside 1..={MAX_PRODUCTS}")));
            }
            let j = id as ProductId;
            if set.contains(j) {
                return Err(Error::data(format!("product id {id} repeated")));
            }
            set.insert(j);
        }
        Ok(set)
    }

    #[inline]
    pub fn contains(self, j: ProductId) -> bool {
        j >= 1 && (self.0 >> (j - 1)) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, j: ProductId) {
        debug_assert!(j >= 1 && j as usize <= MAX_PRODUCTS);
        self.0 |= 1u64 << (j - 1);
    }

    #[inline]
    pub fn with(self, j: ProductId) -> Self {
        let mut s = self;
        s.insert(j);
        s
    }

    #[inline]
    pub fn remove(&mut self, j: ProductId) {
        self.0 &= !(1u64 << (j - 1));
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn is_subset(self, other: ProductSet) -> bool {
        self.0 & !other.0 == 0
    }

    #[inline]
    pub fn union(self, other: ProductSet) -> Self {
        ProductSet(self.0 | other.0)
    }

    #[inline]
    pub fn intersection(self, other: ProductSet) -> Self {
        ProductSet(self.0 & other.0)
    }

    #[inline]
    pub fn difference(self, other: ProductSet) -> Self {
        ProductSet(self.0 & !other.0)
    }

    /// Largest product id in the set, if any.
    pub fn max_id(self) -> Option<ProductId> {
        if self.0 == 0 {
            None
        } else {
            Some((64 - self.0.leading_zeros()) as ProductId)
        }
    }

    /// Products in increasing order.
    pub fn iter(self) -> impl Iterator<Item = ProductId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let tz = bits.trailing_zeros();
                bits &= bits - 1;
                Some((tz + 1) as ProductId)
            }
        })
    }

    pub fn to_vec(self) -> Vec<ProductId> {
        self.iter().collect()
    }

    /// Lexicographic order on the sorted id lists.
    pub fn lex_cmp(self, other: ProductSet) -> std::cmp::Ordering {
        self.iter().cmp(other.iter())
    }
}

impl FromIterator<ProductId> for ProductSet {
    fn from_iter<I: IntoIterator<Item = ProductId>>(iter: I) -> Self {
        let mut s = ProductSet::EMPTY;
        for j in iter {
            s.insert(j);
        }
        s
    }
}

impl<const N: usize> From<[ProductId; N]> for ProductSet {
    fn from(ids: [ProductId; N]) -> Self {
        ids.into_iter().collect()
    }
}

impl fmt::Debug for ProductSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for ProductSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ProductSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let ids = Vec::<u64>::deserialize(deserializer)?;
        ProductSet::try_from_ids(&ids).map_err(serde::de::Error::custom)
    }
}

/// One arrival period with its offer set and purchased bundle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Transaction {
    pub offer: ProductSet,
    pub bundle: ProductSet,
}

impl Transaction {
    pub fn new(offer: ProductSet, bundle: ProductSet) -> Result<Self> {
        if offer.is_empty() {
            return Err(Error::data("transaction offer set is empty"));
        }
        if !bundle.is_subset(offer) {
            return Err(Error::data(format!(
                "bundle {bundle:?} is not contained in offer {offer:?}"
            )));
        }
        Ok(Transaction { offer, bundle })
    }

    /// Offered but not purchased products.
    pub fn rest(&self) -> ProductSet {
        self.offer.difference(self.bundle)
    }
}

impl<'de> Deserialize<'de> for Transaction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            offer: ProductSet,
            bundle: ProductSet,
        }
        let raw = Raw::deserialize(deserializer)?;
        Transaction::new(raw.offer, raw.bundle).map_err(serde::de::Error::custom)
    }
}

/// Transactions of a horizon plus the count of periods without an arrival.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransactionLog {
    pub transactions: Vec<Transaction>,
    pub no_arrival_periods: usize,
}

impl TransactionLog {
    pub fn new(transactions: Vec<Transaction>, no_arrival_periods: usize) -> Self {
        TransactionLog { transactions, no_arrival_periods }
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    /// Periods with a purchase.
    pub fn purchase_periods(&self) -> usize {
        self.transactions.iter().filter(|t| !t.bundle.is_empty()).count()
    }

    /// Periods with an arrival but no purchase.
    pub fn no_purchase_periods(&self) -> usize {
        self.transactions.iter().filter(|t| t.bundle.is_empty()).count()
    }

    /// Largest product id referenced by any offer.
    pub fn max_product(&self) -> usize {
        self.transactions
            .iter()
            .filter_map(|t| t.offer.max_id())
            .max()
            .map_or(0, usize::from)
    }

    pub fn max_bundle_size(&self) -> usize {
        self.transactions.iter().map(|t| t.bundle.len()).max().unwrap_or(0)
    }
}

/// Ranked preference list plus purchase capacity.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConsumerType {
    sigma: Vec<ProductId>,
    eta: u8,
}

impl ConsumerType {
    /// Validates elementarity and capacity. An empty list is always the
    /// passive consumer, whatever capacity was requested.
    pub fn new(sigma: Vec<ProductId>, eta: u8) -> Result<Self> {
        if sigma.is_empty() {
            return Ok(Self::passive());
        }
        let mut seen = ProductSet::EMPTY;
        for &j in &sigma {
            if j == 0 || j as usize > MAX_PRODUCTS {
                return Err(Error::invalid(format!("product id {j} outside 1..={MAX_PRODUCTS}")));
            }
            if seen.contains(j) {
                return Err(Error::invalid(format!("product {j} repeated in preference list")));
            }
            seen.insert(j);
        }
        if eta == 0 {
            return Err(Error::invalid("non-empty preference list needs capacity >= 1"));
        }
        Ok(ConsumerType { sigma, eta })
    }

    pub fn passive() -> Self {
        ConsumerType { sigma: Vec::new(), eta: 0 }
    }

    pub fn sigma(&self) -> &[ProductId] {
        &self.sigma
    }

    pub fn eta(&self) -> u8 {
        self.eta
    }

    pub fn is_passive(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn products(&self) -> ProductSet {
        self.sigma.iter().copied().collect()
    }

    /// Bundle bought when facing `offer`: the first `eta` listed products
    /// that are on offer.
    pub fn purchase_outcome(&self, offer: ProductSet) -> ProductSet {
        choose(&self.sigma, self.eta, offer)
    }

    pub fn is_compatible(&self, t: &Transaction) -> bool {
        self.purchase_outcome(t.offer) == t.bundle
    }
}

impl fmt::Debug for ConsumerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}, eta={})", self.sigma, self.eta)
    }
}

impl Serialize for ConsumerType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("ConsumerType", 2)?;
        st.serialize_field("sigma", self.sigma())?;
        st.serialize_field("eta", &self.eta())?;
        st.end()
    }
}

/// The choice rule on a raw list: the first `eta` products of `sigma` that are in `offer`.
pub fn choose(sigma: &[ProductId], eta: u8, offer: ProductSet) -> ProductSet {
    let mut bought = ProductSet::EMPTY;
    let mut remaining = eta;
    for &j in sigma {
        if remaining == 0 {
            break;
        }
        if offer.contains(j) {
            bought.insert(j);
            remaining -= 1;
        }
    }
    bought
}

pub fn purchase_outcome(c: &ConsumerType, offer: ProductSet) -> ProductSet {
    c.purchase_outcome(offer)
}

pub fn is_compatible(c: &ConsumerType, t: &Transaction) -> bool {
    c.is_compatible(t)
}

/// Probability mass function over consumer types plus an arrival rate.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceModel {
    types: Vec<ConsumerType>,
    probs: Vec<f64>,
    lambda: f64,
}

impl ChoiceModel {
    pub fn new(types: Vec<ConsumerType>, probs: Vec<f64>, lambda: f64) -> Result<Self> {
        if types.len() != probs.len() {
            return Err(Error::invalid("types and probabilities differ in length"));
        }
        if types.is_empty() {
            return Err(Error::invalid("choice model has no consumer types"));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::invalid(format!("arrival rate {lambda} outside (0, 1]")));
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid(format!("negative or non-finite probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        let mut seen = HashSet::with_capacity(types.len());
        for c in &types {
            if !seen.insert(c) {
                return Err(Error::invalid(format!("duplicate consumer type {c:?}")));
            }
        }
        Ok(ChoiceModel { types, probs, lambda })
    }

    /// Merges duplicate types, drops zero-weight entries and renormalizes.
    pub fn from_weights(
        weighted: impl IntoIterator<Item = (ConsumerType, f64)>,
        lambda: f64,
    ) -> Result<Self> {
        let mut merged: BTreeMap<ConsumerType, f64> = BTreeMap::new();
        let mut order = Vec::new();
        for (c, w) in weighted {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!("invalid weight {w}")));
            }
            match merged.get_mut(&c) {
                Some(acc) => *acc += w,
                None => {
                    order.push(c.clone());
                    merged.insert(c, w);
                }
            }
        }
        let total: f64 = merged.values().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights sum to zero"));
        }
        let (types, probs): (Vec<_>, Vec<_>) = order
            .into_iter()
            .filter_map(|c| {
                let w = merged[&c];
                (w > 0.0).then(|| (c, w / total))
            })
            .unzip();
        ChoiceModel::new(types, probs, lambda)
    }

    pub fn types(&self) -> &[ConsumerType] {
        &self.types
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ConsumerType, f64)> {
        self.types.iter().zip(self.probs.iter().copied())
    }

    pub fn max_eta(&self) -> usize {
        self.types.iter().map(|c| c.eta() as usize).max().unwrap_or(0)
    }

    /// Largest product id appearing in any preference list.
    pub fn max_product(&self) -> usize {
        self.types
            .iter()
            .flat_map(|c| c.sigma().iter().copied())
            .max()
            .map_or(0, usize::from)
    }

    /// Probability that `bundle` is bought when `offer` is displayed.
    pub fn predicted_probability(&self, bundle: ProductSet, offer: ProductSet) -> f64 {
        self.iter()
            .filter(|(c, _)| c.purchase_outcome(offer) == bundle)
            .map(|(_, x)| x)
            .sum()
    }

    /// Full predicted distribution over bundles for one offer, sorted by bundle.
    pub fn bundle_distribution(&self, offer: ProductSet) -> Vec<(ProductSet, f64)> {
        let mut dist: BTreeMap<ProductSet, f64> = BTreeMap::new();
        for (c, x) in self.iter() {
            *dist.entry(c.purchase_outcome(offer)).or_insert(0.0) += x;
        }
        dist.into_iter().collect()
    }

    /// Marginal probability that each offered product is bought, indexed by
    /// product id (entry 0 unused).
    pub fn marginal_purchase(&self, offer: ProductSet) -> Vec<f64> {
        let mut marg = vec![0.0; offer.max_id().map_or(1, |m| m as usize + 1)];
        for (c, x) in self.iter() {
            for j in c.purchase_outcome(offer).iter() {
                marg[j as usize] += x;
            }
        }
        marg
    }
}

/// One distinct (offer, bundle) pair with its empirical frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarketRow {
    pub offer: ProductSet,
    pub bundle: ProductSet,
    pub prob: f64,
    pub count: usize,
}

impl MarketRow {
    pub fn transaction(&self) -> Transaction {
        Transaction { offer: self.offer, bundle: self.bundle }
    }
}

/// Distinct transactions of a log with their empirical probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct DistinctMarket {
    rows: Vec<MarketRow>,
}

impl DistinctMarket {
    /// Builds a market from explicit rows. Probabilities of each offer must
    /// sum to one; zero-probability rows are allowed here so fitting problems
    /// can include bundles that were never observed.
    pub fn from_rows(rows: Vec<MarketRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("market has no rows"));
        }
        let mut sums: BTreeMap<ProductSet, f64> = BTreeMap::new();
        let mut seen = HashSet::new();
        for r in &rows {
            Transaction::new(r.offer, r.bundle)?;
            if !(r.prob >= 0.0) {
                return Err(Error::invalid(format!("negative probability {}", r.prob)));
            }
            if !seen.insert((r.offer, r.bundle)) {
                return Err(Error::invalid(format!("duplicate market row {:?}/{:?}", r.bundle, r.offer)));
            }
            *sums.entry(r.offer).or_insert(0.0) += r.prob;
        }
        if let Some((offer, s)) = sums.iter().find(|(_, s)| (**s - 1.0).abs() > 1e-9) {
            return Err(Error::invalid(format!("probabilities for offer {offer:?} sum to {s}")));
        }
        Ok(DistinctMarket { rows })
    }

    pub fn rows(&self) -> &[MarketRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, offer: ProductSet, bundle: ProductSet) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.offer == offer && r.bundle == bundle)
            .map(|r| r.prob)
    }
}

/// Counts each distinct (offer, bundle) pair and divides by the offer's count.
pub fn empirical_probabilities(log: &TransactionLog) -> Result<DistinctMarket> {
    if log.is_empty() {
        return Err(Error::invalid("empty transaction log"));
    }
    let mut pair_counts: BTreeMap<(ProductSet, ProductSet), usize> = BTreeMap::new();
    let mut offer_counts: BTreeMap<ProductSet, usize> = BTreeMap::new();
    for t in &log.transactions {
        *pair_counts.entry((t.offer, t.bundle)).or_insert(0) += 1;
        *offer_counts.entry(t.offer).or_insert(0) += 1;
    }
    let rows = pair_counts
        .into_iter()
        .map(|((offer, bundle), count)| MarketRow {
            offer,
            bundle,
            prob: count as f64 / offer_counts[&offer] as f64,
            count,
        })
        .collect();
    Ok(DistinctMarket { rows })
}

/// Maximum-likelihood arrival probability: arrivals over all periods.
pub fn estimate_arrival_rate(log: &TransactionLog) -> Result<f64> {
    let arrivals = log.purchase_periods() + log.no_purchase_periods();
    if arrivals == 0 {
        return Err(Error::invalid("log contains no arrival periods"));
    }
    Ok(arrivals as f64 / (arrivals + log.no_arrival_periods) as f64)
}
