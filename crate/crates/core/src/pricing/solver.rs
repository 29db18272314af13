use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::{ConsumerType, ProductId, ProductSet};

use super::label::{Label, PricingContext, PROFIT_EPS};
use super::{PricingInstance, PricingResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueueOrder {
    /// Largest completion bound first.
    BestFirst,
    Fifo,
    Lifo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DominanceMode {
    Off,
    General,
    /// Profit-only test for single-purchase instances (`eta_max == 1`).
    ProfitOnly,
}

#[derive(Clone, Debug)]
pub struct PricingConfig {
    pub completion_bounds: bool,
    pub unreachable: bool,
    pub dominance: DominanceMode,
    pub queue: QueueOrder,
    /// Heuristic mode: labels expanded per (last, length, capacity) bucket.
    pub bucket_cap: Option<usize>,
    pub time_limit: Option<Duration>,
}

impl Default for PricingConfig {
    fn default() -> Self {
        PricingConfig {
            completion_bounds: true,
            unreachable: true,
            dominance: DominanceMode::General,
            queue: QueueOrder::BestFirst,
            bucket_cap: None,
            time_limit: None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct QueueEntry {
    bound: f64,
    seq: u64,
    idx: usize,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum Queue {
    Heap(BinaryHeap<QueueEntry>),
    Deque(VecDeque<QueueEntry>, bool),
}

impl Queue {
    fn push(&mut self, e: QueueEntry) {
        match self {
            Queue::Heap(h) => h.push(e),
            Queue::Deque(d, _) => d.push_back(e),
        }
    }

    fn pop(&mut self) -> Option<QueueEntry> {
        match self {
            Queue::Heap(h) => h.pop(),
            Queue::Deque(d, lifo) => {
                if *lifo {
                    d.pop_back()
                } else {
                    d.pop_front()
                }
            }
        }
    }
}

/// Processed labels indexed by `N ∪ U`.
#[derive(Default)]
struct DominanceStore {
    by_sig: HashMap<u64, Vec<usize>>,
}

impl DominanceStore {
    fn insert(&mut self, sig: ProductSet, idx: usize) {
        self.by_sig.entry(sig.bits()).or_default().push(idx);
    }

    /// Calls `f` on stored labels whose signature is a subset of `sig` (or on
    /// all labels when `all` is set) until it returns true.
    fn any(&self, sig: ProductSet, all: bool, mut f: impl FnMut(usize) -> bool) -> bool {
        let bits = sig.bits();
        let submasks = 1u128 << sig.len();
        if all || submasks > self.by_sig.len() as u128 {
            for (&key, idxs) in &self.by_sig {
                if (all || key & !bits == 0) && idxs.iter().any(|&i| f(i)) {
                    return true;
                }
            }
            false
        } else {
            let mut sub = bits;
            loop {
                if let Some(idxs) = self.by_sig.get(&sub) {
                    if idxs.iter().any(|&i| f(i)) {
                        return true;
                    }
                }
                if sub == 0 {
                    return false;
                }
                sub = (sub - 1) & bits;
            }
        }
    }
}

/// Labeling algorithm over one pricing instance.
pub struct LabelingSolver<'a> {
    inst: &'a PricingInstance,
    ctx: PricingContext,
    cfg: PricingConfig,
}

impl<'a> LabelingSolver<'a> {
    pub fn new(inst: &'a PricingInstance, cfg: PricingConfig) -> Self {
        let ctx = PricingContext::new(inst, cfg.unreachable);
        LabelingSolver { inst, ctx, cfg }
    }

    pub fn context(&self) -> &PricingContext {
        &self.ctx
    }

    pub fn solve(&self, lb_seed: Option<f64>) -> Result<PricingResult> {
        let start = Instant::now();
        if self.inst.transactions().is_empty() {
            return Err(Error::invalid("pricing instance has no transactions with non-zero reward"));
        }
        if self.cfg.dominance == DominanceMode::ProfitOnly && self.inst.eta_max() != 1 {
            return Err(Error::invalid("profit-only dominance requires eta_max = 1"));
        }
        let ctx = &self.ctx;
        let universe = ctx.universe();
        let mut arena: Vec<Label> = Vec::new();
        let mut queue = match self.cfg.queue {
            QueueOrder::BestFirst => Queue::Heap(BinaryHeap::new()),
            QueueOrder::Fifo => Queue::Deque(VecDeque::new(), false),
            QueueOrder::Lifo => Queue::Deque(VecDeque::new(), true),
        };
        let mut store = DominanceStore::default();
        let mut buckets: HashMap<(ProductId, usize, u8), usize> = HashMap::new();
        let mut seq = 0u64;
        let mut best_idx = 0usize;
        let mut best = f64::NEG_INFINITY;
        let mut generated = 0u64;
        let mut dominated = 0u64;
        let mut bounded = 0u64;
        let mut timed_out = false;
        let cb = self.cfg.completion_bounds;
        // A seed only prunes strictly below itself: its type is not returned.
        let seed = lb_seed.unwrap_or(f64::NEG_INFINITY);
        let hopeless = |bound: f64, best: f64| cb && (bound <= best || bound < seed - PROFIT_EPS);
        let can_extend = |l: &Label| {
            !l.candidates(universe).is_empty() && ctx.q().is_none_or(|q| l.len < q)
        };

        for root in ctx.init_labels() {
            generated += 1;
            let idx = arena.len();
            if root.profit > best + PROFIT_EPS || best == f64::NEG_INFINITY {
                best = root.profit;
                best_idx = idx;
            }
            arena.push(root);
        }
        for idx in 0..arena.len() {
            if hopeless(arena[idx].bound, best) || !can_extend(&arena[idx]) {
                bounded += 1;
                continue;
            }
            queue.push(QueueEntry { bound: arena[idx].bound, seq, idx });
            seq += 1;
        }

        let mut pops = 0u64;
        while let Some(entry) = queue.pop() {
            pops += 1;
            if pops % 256 == 0 {
                if let Some(limit) = self.cfg.time_limit {
                    if start.elapsed() >= limit {
                        timed_out = true;
                        break;
                    }
                }
            }
            let idx = entry.idx;
            if hopeless(arena[idx].bound, best) {
                bounded += 1;
                arena[idx].kappa = Vec::new();
                if matches!(queue, Queue::Heap(_)) {
                    // Every remaining label has a bound no larger than this one.
                    while let Some(e) = queue.pop() {
                        bounded += 1;
                        arena[e.idx].kappa = Vec::new();
                    }
                    break;
                }
                continue;
            }
            if let Some(cap) = self.cfg.bucket_cap {
                let l = &arena[idx];
                if let Some(last) = l.last {
                    let count = buckets.entry((last, l.len, l.eta)).or_insert(0);
                    if *count >= cap {
                        arena[idx].kappa = Vec::new();
                        continue;
                    }
                    *count += 1;
                }
            }
            if self.cfg.dominance != DominanceMode::Off {
                let check_sets = self.cfg.dominance == DominanceMode::General;
                let lp = &arena[idx];
                let hit = store.any(lp.signature(), !check_sets, |other| {
                    ctx.dominates_with(&arena[other], lp, check_sets)
                });
                if hit {
                    dominated += 1;
                    arena[idx].kappa = Vec::new();
                    continue;
                }
                store.insert(arena[idx].signature(), idx);
            }
            let parent = &arena[idx];
            let mut children = Vec::new();
            for j in parent.candidates(universe).iter() {
                if let Some(mut child) = ctx.extend(parent, j) {
                    child.pred = Some(idx);
                    children.push(child);
                }
            }
            if self.cfg.dominance == DominanceMode::Off {
                arena[idx].kappa = Vec::new();
            }
            for child in children {
                generated += 1;
                let cidx = arena.len();
                if child.profit > best + PROFIT_EPS {
                    best = child.profit;
                    best_idx = cidx;
                }
                let keep = !hopeless(child.bound, best) && can_extend(&child);
                let bound = child.bound;
                arena.push(child);
                if keep {
                    queue.push(QueueEntry { bound, seq, idx: cidx });
                    seq += 1;
                } else {
                    bounded += 1;
                    arena[cidx].kappa = Vec::new();
                }
            }
        }

        let best_type = self.reconstruct(&arena, best_idx)?;
        let best_profit = self.inst.profit_of(&best_type);
        Ok(PricingResult {
            best_type,
            best_profit,
            labels_generated: generated,
            labels_dominated: dominated,
            labels_bounded: bounded,
            wall_time: start.elapsed().as_secs_f64(),
            timed_out,
        })
    }

    fn reconstruct(&self, arena: &[Label], mut idx: usize) -> Result<ConsumerType> {
        let eta = arena[idx].eta;
        let mut sigma = Vec::new();
        loop {
            let l = &arena[idx];
            if let Some(j) = l.last {
                sigma.push(j);
            }
            match l.pred {
                Some(p) => idx = p,
                None => break,
            }
        }
        sigma.reverse();
        let eta = eta.min(sigma.len() as u8);
        ConsumerType::new(sigma, eta)
    }
}

/// Replays a preference list from the root with the given capacity, returning
/// every intermediate label.
pub fn replay(ctx: &PricingContext, sigma: &[ProductId], eta: u8) -> Option<Vec<Label>> {
    let root = ctx.init_labels().into_iter().find(|l| l.eta == eta)?;
    let mut chain = vec![root];
    for &j in sigma {
        let next = ctx.extend(chain.last()?, j)?;
        chain.push(next);
    }
    Some(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::{PricedTransaction, PricingInstance};

    fn row(offer: &[u8], bundle: &[u8], mu: f64) -> PricedTransaction {
        PricedTransaction {
            offer: offer.iter().copied().collect(),
            bundle: bundle.iter().copied().collect(),
            mu,
        }
    }

    fn solve(inst: &PricingInstance, cfg: PricingConfig) -> PricingResult {
        LabelingSolver::new(inst, cfg).solve(None).unwrap()
    }

    #[test]
    fn open_negative_transaction_counterexample() {
        // Optimum lists 3 before 1 to shut out the negative transaction.
        let inst = PricingInstance::new(
            3,
            1,
            None,
            [row(&[1, 2], &[1], 1.0), row(&[1, 3], &[1], -1.0)],
        )
        .unwrap();
        let res = solve(&inst, PricingConfig::default());
        assert_eq!(res.best_profit, 1.0);
        assert_eq!(res.best_type.sigma(), &[3, 1]);
    }

    #[test]
    fn larger_capacity_root_does_not_hide_optimum() {
        let inst = PricingInstance::new(2, 2, None, [row(&[1, 2], &[1, 2], 1.0)]).unwrap();
        assert_eq!(solve(&inst, PricingConfig::default()).best_profit, 1.0);

        let inst = PricingInstance::new(
            3,
            3,
            None,
            [row(&[1, 2, 3], &[1, 2], 1.0), row(&[3], &[3], 1.0)],
        )
        .unwrap();
        let res = solve(&inst, PricingConfig::default());
        assert_eq!(res.best_profit, 2.0);
        assert_eq!(res.best_type.eta(), 2);
    }

    #[test]
    fn queue_orders_agree() {
        let inst = PricingInstance::new(
            4,
            2,
            None,
            [
                row(&[1, 2, 3], &[1, 2], 0.7),
                row(&[2, 4], &[4], 0.4),
                row(&[1, 4], &[], -0.3),
                row(&[3, 4], &[3, 4], 0.5),
            ],
        )
        .unwrap();
        let base = solve(&inst, PricingConfig::default()).best_profit;
        for queue in [QueueOrder::Fifo, QueueOrder::Lifo] {
            let cfg = PricingConfig { queue, ..PricingConfig::default() };
            assert!((solve(&inst, cfg).best_profit - base).abs() < 1e-12);
        }
    }

    #[test]
    fn limited_list_cap_is_respected() {
        let inst = PricingInstance::new(
            3,
            1,
            Some(1),
            [row(&[1], &[1], 1.0), row(&[2], &[2], 1.0), row(&[3], &[3], 1.0)],
        )
        .unwrap();
        let res = solve(&inst, PricingConfig::default());
        assert_eq!(res.best_profit, 1.0);
        assert_eq!(res.best_type.sigma().len(), 1);
    }

    #[test]
    fn profit_only_dominance_needs_single_purchase() {
        let inst = PricingInstance::new(2, 2, None, [row(&[1], &[1], 1.0)]).unwrap();
        let cfg = PricingConfig { dominance: DominanceMode::ProfitOnly, ..PricingConfig::default() };
        assert!(LabelingSolver::new(&inst, cfg).solve(None).is_err());
    }

    #[test]
    fn seed_above_optimum_keeps_exactness() {
        let inst = PricingInstance::new(2, 1, None, [row(&[1, 2], &[2], 1.0)]).unwrap();
        let res = LabelingSolver::new(&inst, PricingConfig::default()).solve(Some(1.0)).unwrap();
        assert_eq!(res.best_profit, 1.0);
    }

    #[test]
    fn replay_reproduces_profit() {
        let inst = PricingInstance::new(
            3,
            2,
            None,
            [row(&[1, 2, 3], &[1, 3], 1.5), row(&[2, 3], &[3], -0.5)],
        )
        .unwrap();
        let ctx = PricingContext::new(&inst, true);
        let chain = replay(&ctx, &[1, 3], 2).unwrap();
        assert_eq!(chain.last().unwrap().profit, 1.0);
        assert_eq!(inst.profit_of(&ConsumerType::new(vec![1, 3], 2).unwrap()), 1.0);
    }
}
