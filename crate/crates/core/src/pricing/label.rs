//! Labels and the per-label operations of the labeling algorithm.
//!
//! A label is a partial preference list under a fixed capacity. For every
//! transaction `t` it tracks a status `κ_t`:
//!
//! * `-1`: closed. Its contribution can no longer change.
//! * `0 ≤ κ_t < |B_t|`: open. `κ_t` bundle products have been listed and no
//!   other offered product has.
//! * `κ_t ≥ |B_t|`: collected. The reward is included in `p` but is lost
//!   if a non-bundle product of the offer is listed later.

use crate::model::{ProductId, ProductSet};

use super::PricingInstance;

/// Tolerance used for profit comparisons between labels.
pub const PROFIT_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Label {
    /// Last product appended, `None` for a root.
    pub last: Option<ProductId>,
    pub visited: ProductSet,
    pub eta: u8,
    pub profit: f64,
    pub kappa: Vec<i8>,
    pub len: usize,
    pub unreachable: ProductSet,
    pub pred: Option<usize>,
    /// Completion bound, filled in by [`PricingContext::refresh`].
    pub bound: f64,
}

impl Label {
    /// Products that may still be appended.
    pub fn candidates(&self, universe: ProductSet) -> ProductSet {
        universe.difference(self.visited).difference(self.unreachable)
    }

    /// `N(L) ∪ U(L)`.
    pub fn signature(&self) -> ProductSet {
        self.visited.union(self.unreachable)
    }
}

#[derive(Clone, Copy, Debug)]
struct Row {
    bundle: ProductSet,
    rest: ProductSet,
    b: i8,
    mu: f64,
}

/// Precomputed per-instance data shared by every label operation.
#[derive(Clone, Debug)]
pub struct PricingContext {
    rows: Vec<Row>,
    /// For each product, the transactions whose offer contains it, flagged
    /// with whether it lies in the bundle.
    touches: Vec<Vec<(u32, bool)>>,
    universe: ProductSet,
    eta_max: u8,
    q: Option<usize>,
    use_unreachable: bool,
}

impl PricingContext {
    pub fn new(inst: &PricingInstance, use_unreachable: bool) -> Self {
        let rows: Vec<Row> = inst
            .transactions()
            .iter()
            .map(|t| Row {
                bundle: t.bundle,
                rest: t.offer.difference(t.bundle),
                b: t.bundle.len() as i8,
                mu: t.mu,
            })
            .collect();
        let mut touches = vec![Vec::new(); inst.n() + 1];
        for (i, t) in inst.transactions().iter().enumerate() {
            for j in t.offer.iter() {
                touches[j as usize].push((i as u32, t.bundle.contains(j)));
            }
        }
        PricingContext {
            rows,
            touches,
            universe: ProductSet::universe(inst.n()),
            eta_max: inst.eta_max() as u8,
            q: inst.q(),
            use_unreachable,
        }
    }

    pub fn universe(&self) -> ProductSet {
        self.universe
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn q(&self) -> Option<usize> {
        self.q
    }

    pub fn mu(&self, t: usize) -> f64 {
        self.rows[t].mu
    }

    /// One root per capacity `1..=eta_max`, each encoding the empty list.
    pub fn init_labels(&self) -> Vec<Label> {
        let p0: f64 = self.rows.iter().filter(|r| r.b == 0).map(|r| r.mu).sum();
        (1..=self.eta_max)
            .map(|eta| {
                let kappa = self
                    .rows
                    .iter()
                    .map(|r| if r.b <= eta as i8 { 0 } else { -1 })
                    .collect();
                let mut l = Label {
                    last: None,
                    visited: ProductSet::EMPTY,
                    eta,
                    profit: p0,
                    kappa,
                    len: 0,
                    unreachable: ProductSet::EMPTY,
                    pred: None,
                    bound: p0,
                };
                self.refresh(&mut l);
                l
            })
            .collect()
    }

    /// Appends `j` to `l`, updating statuses and profit, then recomputes the
    /// unreachable set and the completion bound. `pred` is left for the caller.
    pub fn extend(&self, l: &Label, j: ProductId) -> Option<Label> {
        if j == 0
            || !self.universe.contains(j)
            || l.visited.contains(j)
            || l.unreachable.contains(j)
            || self.q.is_some_and(|q| l.len >= q)
        {
            return None;
        }
        let mut kappa = l.kappa.clone();
        let mut profit = l.profit;
        let eta = l.eta as i8;
        for &(t, in_bundle) in &self.touches[j as usize] {
            let t = t as usize;
            let k = kappa[t];
            if k < 0 {
                continue;
            }
            let row = &self.rows[t];
            if !in_bundle {
                if k >= row.b {
                    profit -= row.mu;
                }
                kappa[t] = -1;
            } else {
                let k = k + 1;
                if k == row.b {
                    profit += row.mu;
                }
                kappa[t] = if k == eta { -1 } else { k };
            }
        }
        let mut next = Label {
            last: Some(j),
            visited: l.visited.with(j),
            eta: l.eta,
            profit,
            kappa,
            len: l.len + 1,
            unreachable: l.unreachable,
            pred: None,
            bound: profit,
        };
        self.refresh(&mut next);
        Some(next)
    }

    /// Recomputes `U(L)` and the completion bound from the statuses.
    ///
    /// A product stays reachable while it can still complete an open bundle,
    /// or still close a negative-reward transaction that is open or collected.
    pub fn refresh(&self, l: &mut Label) {
        let mut reach = ProductSet::EMPTY;
        let mut bound = l.profit;
        for (row, &k) in self.rows.iter().zip(&l.kappa) {
            if k < 0 {
                continue;
            }
            if k < row.b {
                reach = reach.union(row.bundle);
                if row.mu > 0.0 {
                    bound += row.mu;
                }
            } else if row.mu < 0.0 {
                bound -= row.mu;
            }
            if row.mu < 0.0 {
                reach = reach.union(row.rest);
            }
        }
        l.bound = bound;
        if self.use_unreachable {
            l.unreachable = self.universe.difference(l.visited).difference(reach);
        }
    }

    /// Upper bound on the profit of any completion of `l`.
    pub fn completion_bound(&self, l: &Label) -> f64 {
        l.bound
    }

    /// True iff no completion of `l` can beat `lb`.
    pub fn completion_bound_prune(&self, l: &Label, lb: f64) -> bool {
        l.bound <= lb
    }

    /// Largest amount by which some common completion can favour `lp` over
    /// `l` on transaction `t`.
    fn advantage(&self, t: usize, l: &Label, lp: &Label) -> f64 {
        let row = &self.rows[t];
        let (k, kp, b) = (l.kappa[t], lp.kappa[t], row.b);
        if k == kp && l.eta == lp.eta {
            return 0.0;
        }
        let open = |x: i8| x >= 0 && x < b;
        let collected = |x: i8| x >= b && x >= 0;
        if row.mu > 0.0 {
            let m = row.mu;
            if open(kp) {
                if collected(k) {
                    2.0 * m
                } else if k == -1 {
                    m
                } else if k != kp || (l.eta > b as u8 && lp.eta == b as u8) {
                    m
                } else {
                    0.0
                }
            } else if kp == -1 && collected(k) {
                m
            } else {
                0.0
            }
        } else {
            let m = -row.mu;
            if open(k) {
                if collected(kp) {
                    2.0 * m
                } else if kp == -1 {
                    m
                } else if k > kp || (k == kp && l.eta == b as u8 && lp.eta > b as u8) {
                    m
                } else {
                    0.0
                }
            } else if k == -1 && collected(kp) {
                m
            } else {
                0.0
            }
        }
    }

    /// True iff every completion of `lp` is matched by the same completion of
    /// `l`. With `check_sets == false` the visited/unreachable inclusion is
    /// skipped, which is only valid when `eta_max == 1`.
    pub fn dominates_with(&self, l: &Label, lp: &Label, check_sets: bool) -> bool {
        if l.profit < lp.profit - PROFIT_EPS {
            return false;
        }
        if self.q.is_some() && l.len > lp.len {
            return false;
        }
        if check_sets && !l.signature().is_subset(lp.signature()) {
            return false;
        }
        let mut slack = l.profit - lp.profit + PROFIT_EPS;
        for t in 0..self.rows.len() {
            slack -= self.advantage(t, l, lp);
            if slack < 0.0 {
                return false;
            }
        }
        true
    }

    /// General dominance test.
    pub fn dominates(&self, l: &Label, lp: &Label) -> bool {
        self.dominates_with(l, lp, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::PricedTransaction;

    fn row(offer: &[u8], bundle: &[u8], mu: f64) -> PricedTransaction {
        PricedTransaction {
            offer: offer.iter().copied().collect(),
            bundle: bundle.iter().copied().collect(),
            mu,
        }
    }

    fn ctx(n: usize, eta: usize, rows: &[PricedTransaction]) -> PricingContext {
        PricingContext::new(&PricingInstance::new(n, eta, None, rows.iter().copied()).unwrap(), true)
    }

    #[test]
    fn root_initialization() {
        let rows = [row(&[1], &[], 0.5), row(&[1, 2, 3], &[1, 2, 3], 1.0)];
        let c = ctx(3, 3, &rows);
        let roots = c.init_labels();
        assert_eq!(roots.len(), 3);
        assert_eq!(roots[1].eta, 2);
        assert_eq!(roots[1].profit, 0.5);
        assert_eq!(roots[1].kappa, vec![0, -1]);
        assert_eq!(roots[2].kappa, vec![0, 0]);
        assert_eq!(roots[2].profit, 0.5);

        let c = ctx(2, 1, &[row(&[1, 2], &[1], 1.0)]);
        assert_eq!(c.init_labels()[0].profit, 0.0);
    }

    #[test]
    fn extension_hand_traces() {
        // Unreachable marking off so losing extensions can be traced too.
        let inst = PricingInstance::new(2, 1, None, [row(&[1, 2], &[1], 2.0)]).unwrap();
        let c = PricingContext::new(&inst, false);
        let root = &c.init_labels()[0];
        let l1 = c.extend(root, 1).unwrap();
        assert_eq!((l1.profit, l1.kappa[0]), (2.0, -1));
        let l2 = c.extend(root, 2).unwrap();
        assert_eq!((l2.profit, l2.kappa[0]), (0.0, -1));

        let inst = PricingInstance::new(2, 2, None, [row(&[1, 2], &[1], 2.0)]).unwrap();
        let c = PricingContext::new(&inst, false);
        let root = &c.init_labels()[1];
        let l1 = c.extend(root, 1).unwrap();
        assert_eq!((l1.profit, l1.kappa[0]), (2.0, 1));
        let l12 = c.extend(&l1, 2).unwrap();
        assert_eq!((l12.profit, l12.kappa[0]), (0.0, -1));
    }

    #[test]
    fn forbidden_extensions_are_rejected() {
        let c = ctx(3, 1, &[row(&[1, 2], &[1], 1.0)]);
        let root = &c.init_labels()[0];
        assert!(root.unreachable.contains(3));
        assert!(c.extend(root, 3).is_none());
        let l1 = c.extend(root, 1).unwrap();
        assert!(c.extend(&l1, 1).is_none());
        assert!(c.extend(root, 4).is_none());
    }

    #[test]
    fn unreachable_products() {
        let c = ctx(3, 2, &[row(&[1, 2], &[1, 2], 1.0)]);
        let root = &c.init_labels()[1];
        assert!(root.unreachable.contains(3));
        assert!(!root.unreachable.contains(1));
        let l1 = c.extend(root, 1).unwrap();
        let l12 = c.extend(&l1, 2).unwrap();
        // Collected and closed by capacity: nothing can change any more.
        assert_eq!(l12.unreachable, [3].into());
        assert_eq!(l12.candidates(c.universe()), ProductSet::EMPTY);
    }

    #[test]
    fn open_negative_transaction_keeps_rest_reachable() {
        // Listing 3 first closes the negative transaction before 1 collects the positive one.
        let c = ctx(3, 1, &[row(&[1, 2], &[1], 1.0), row(&[1, 3], &[1], -1.0)]);
        let root = &c.init_labels()[0];
        assert!(!root.unreachable.contains(3));
        let l3 = c.extend(root, 3).unwrap();
        let l31 = c.extend(&l3, 1).unwrap();
        assert_eq!(l31.profit, 1.0);
    }

    #[test]
    fn completion_bound_examples() {
        let c = ctx(2, 1, &[row(&[1], &[1], 3.0)]);
        let root = &c.init_labels()[0];
        assert_eq!(c.completion_bound(root), 3.0);
        assert!(!c.completion_bound_prune(root, 2.0));
        assert!(c.completion_bound_prune(root, 3.0));

        let c = ctx(2, 2, &[row(&[1, 2], &[], -1.0)]);
        let mut root = c.init_labels()[0].clone();
        root.profit = 0.0;
        c.refresh(&mut root);
        assert_eq!(root.bound, 1.0);
        assert!(!c.completion_bound_prune(&root, 0.5));
    }

    #[test]
    fn dominance_examples() {
        let c = ctx(3, 2, &[row(&[1, 2, 3], &[1], 1.0)]);
        let root = &c.init_labels()[0];
        assert!(c.dominates(root, root));
        let l1 = c.extend(root, 1).unwrap();
        // l1 collected and closed; root still open and can still collect.
        assert!(c.dominates(&l1, &l1));
        assert!(!c.dominates(root, &l1));
    }

    #[test]
    fn capacity_alone_does_not_dominate() {
        // Only capacity 2 collects this bundle; the capacity-2 root must survive.
        let c = ctx(2, 2, &[row(&[1, 2], &[1, 2], 1.0)]);
        let roots = c.init_labels();
        assert!(!c.dominates(&roots[1], &c.extend(&roots[1], 1).unwrap()));
        let r2 = &roots[1];
        let child = c.extend(r2, 1).unwrap();
        assert!(!c.dominates(r2, &child));
    }
}
