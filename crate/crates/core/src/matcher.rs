//! Counting-based predicate index.
//!
//! Equality predicates are hashed by `(attribute, value)`; every other
//! predicate sits in a per-attribute candidate list and is evaluated on
//! lookup. Matching walks the expanded event's pairs once, credits each
//! satisfied `(subscription, predicate ordinal)` at most once, and reports
//! the subscriptions whose credited count reaches their arity.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::model::{evaluate_predicate, Op, Pair, Predicate, StageRecord, Subscription, Term};
use crate::pipeline::{admissible_under, ExpandedEvent, PrecisionConfig};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatcherError {
    #[error("subscription {0} is already registered")]
    DuplicateSubscription(String),
}

type Slot = u32;

/// `cell` numbers a (subscription, predicate ordinal) pair across the index.
#[derive(Clone, Copy, Debug)]
struct Posting {
    slot: Slot,
    cell: u32,
    /// The subscription carries a precision other than the index default.
    custom: bool,
}

#[derive(Clone, Debug)]
struct RangePosting {
    posting: Posting,
    predicate: Predicate,
}

#[derive(Clone, Debug)]
struct Registered {
    subscription: Subscription,
    precision: PrecisionConfig,
    /// First cell; predicate `k` owns cell `base + k`.
    base: u32,
}

/// A subscription that matched, with the stage records of the pairs that
/// satisfied its predicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubMatch {
    pub sub_id: String,
    pub subscriber: String,
    pub trace: Vec<StageRecord>,
}

#[derive(Clone, Debug)]
pub struct PredicateIndex {
    eq_index: HashMap<Pair, Vec<Posting>>,
    attr_index: HashMap<Term, Vec<RangePosting>>,
    /// Indexed by slot; removed subscriptions leave `None`.
    subs: Vec<Option<Registered>>,
    slots: HashMap<String, Slot>,
    next_cell: u32,
    default_precision: PrecisionConfig,
    current_year: i32,
}

/// Per-thread counters reused across lookups. A stamp equal to the current
/// epoch marks an entry as written by this lookup, so nothing is cleared
/// between calls and a lookup only pays for the postings it touches.
#[derive(Default)]
struct Scratch {
    epoch: u32,
    slots: Vec<SlotTally>,
    cells: Vec<CellTally>,
    touched: Vec<Slot>,
}

#[derive(Clone, Copy, Default)]
struct SlotTally {
    stamp: u32,
    count: u32,
}

/// (pair index, derivation index) that first satisfied the cell.
#[derive(Clone, Copy, Default)]
struct CellTally {
    stamp: u32,
    pair: u32,
    route: u32,
}

impl Scratch {
    fn begin(&mut self, slots: usize, cells: usize) {
        if self.epoch == u32::MAX {
            self.slots.iter_mut().for_each(|x| x.stamp = 0);
            self.cells.iter_mut().for_each(|x| x.stamp = 0);
            self.epoch = 0;
        }
        self.epoch += 1;
        if self.slots.len() < slots {
            self.slots.resize(slots, SlotTally::default());
        }
        if self.cells.len() < cells {
            self.cells.resize(cells, CellTally::default());
        }
        self.touched.clear();
    }
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::default();
}

impl PredicateIndex {
    pub fn new(current_year: i32) -> Self {
        Self::with_default_precision(current_year, PrecisionConfig::semantic())
    }

    /// `default_precision` applies to subscriptions that carry none.
    pub fn with_default_precision(current_year: i32, default_precision: PrecisionConfig) -> Self {
        PredicateIndex {
            eq_index: HashMap::new(),
            attr_index: HashMap::new(),
            subs: Vec::new(),
            slots: HashMap::new(),
            next_cell: 0,
            default_precision,
            current_year,
        }
    }

    pub fn current_year(&self) -> i32 {
        self.current_year
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains(&self, sub_id: &str) -> bool {
        self.slots.contains_key(sub_id)
    }

    fn registered(&self, slot: Slot) -> &Registered {
        self.subs[slot as usize].as_ref().expect("postings of removed subscriptions are purged")
    }

    pub fn get(&self, sub_id: &str) -> Option<&Subscription> {
        self.slots.get(sub_id).map(|s| &self.registered(*s).subscription)
    }

    pub fn arity(&self, sub_id: &str) -> Option<usize> {
        self.get(sub_id).map(|s| s.predicates.len())
    }

    /// Registered subscriptions in registration order.
    pub fn subscriptions(&self) -> Vec<&Subscription> {
        self.subs.iter().flatten().map(|r| &r.subscription).collect()
    }

    /// Number of postings across both indexes; equals the total predicate
    /// count of the registered subscriptions.
    pub fn posting_count(&self) -> usize {
        self.eq_index.values().map(Vec::len).sum::<usize>() + self.attr_index.values().map(Vec::len).sum::<usize>()
    }

    /// Indexes `s`, which should already be synonym-normalized.
    pub fn add_subscription(&mut self, s: Subscription) -> Result<String, MatcherError> {
        if self.slots.contains_key(&s.sub_id) {
            return Err(MatcherError::DuplicateSubscription(s.sub_id));
        }
        let slot = Slot::try_from(self.subs.len()).expect("slot space exhausted");
        let base = self.next_cell;
        let arity = u32::try_from(s.predicates.len()).expect("arity fits u32");
        self.next_cell = base.checked_add(arity).expect("cell space exhausted");
        let precision = s.precision.unwrap_or(self.default_precision);
        let custom = precision != self.default_precision;
        for (ordinal, p) in s.predicates.iter().enumerate() {
            let posting = Posting { slot, cell: base + ordinal as u32, custom };
            if p.op() == Op::Eq {
                self.eq_index
                    .entry(Pair::new(p.attribute().clone(), p.value().clone()))
                    .or_default()
                    .push(posting);
            } else {
                self.attr_index
                    .entry(p.attribute().clone())
                    .or_default()
                    .push(RangePosting { posting, predicate: p.clone() });
            }
        }
        let id = s.sub_id.clone();
        self.slots.insert(id.clone(), slot);
        self.subs.push(Some(Registered { subscription: s, precision, base }));
        Ok(id)
    }

    /// Purges every posting of `sub_id`. The id may be registered again
    /// afterwards.
    pub fn remove_subscription(&mut self, sub_id: &str) -> bool {
        let Some(slot) = self.slots.remove(sub_id) else { return false };
        let reg = self.subs[slot as usize].take().expect("slot registered");
        for p in &reg.subscription.predicates {
            if p.op() == Op::Eq {
                let key = Pair::new(p.attribute().clone(), p.value().clone());
                if let Some(list) = self.eq_index.get_mut(&key) {
                    list.retain(|e| e.slot != slot);
                    if list.is_empty() {
                        self.eq_index.remove(&key);
                    }
                }
            } else if let Some(list) = self.attr_index.get_mut(p.attribute()) {
                list.retain(|e| e.posting.slot != slot);
                if list.is_empty() {
                    self.attr_index.remove(p.attribute());
                }
            }
        }
        true
    }

    /// Subscriptions satisfied by the expanded event, in registration order.
    pub fn match_event(&self, x: &ExpandedEvent) -> Vec<SubMatch> {
        SCRATCH.with(|scratch| self.match_with(&mut scratch.borrow_mut(), x))
    }

    /// Counts credits into `s`; afterwards `s.touched` holds, in slot order,
    /// every subscription with at least one satisfied predicate.
    fn tally(&self, s: &mut Scratch, x: &ExpandedEvent) {
        s.begin(self.subs.len(), self.next_cell as usize);
        let epoch = s.epoch;
        for (i, dp) in x.pairs().iter().enumerate() {
            let route_under = |precision: &PrecisionConfig| {
                dp.derivations.iter().position(|d| admissible_under(d, precision)).map(|r| r as u32)
            };
            let default_route = route_under(&self.default_precision);
            let mut credit = |p: Posting| {
                let cell = &mut s.cells[p.cell as usize];
                if cell.stamp == epoch {
                    return;
                }
                let route = if p.custom { route_under(&self.registered(p.slot).precision) } else { default_route };
                let Some(route) = route else { return };
                *cell = CellTally { stamp: epoch, pair: i as u32, route };
                let slot = &mut s.slots[p.slot as usize];
                if slot.stamp != epoch {
                    *slot = SlotTally { stamp: epoch, count: 0 };
                    s.touched.push(p.slot);
                }
                slot.count += 1;
            };
            if let Some(postings) = self.eq_index.get(&dp.pair) {
                for p in postings {
                    credit(*p);
                }
            }
            if let Some(postings) = self.attr_index.get(&dp.pair.attribute) {
                for p in postings {
                    if p.predicate.holds_for(&dp.pair.value, self.current_year) {
                        credit(p.posting);
                    }
                }
            }
        }

        s.touched.sort_unstable();
    }

    fn complete<'a>(&'a self, s: &'a Scratch) -> impl Iterator<Item = &'a Registered> + 'a {
        s.touched.iter().map(|&slot| (slot, self.registered(slot))).filter_map(|(slot, reg)| {
            (s.slots[slot as usize].count as usize == reg.subscription.predicates.len()).then_some(reg)
        })
    }

    fn match_with(&self, s: &mut Scratch, x: &ExpandedEvent) -> Vec<SubMatch> {
        self.tally(s, x);
        let mut matched = Vec::new();
        for reg in self.complete(s) {
            let arity = reg.subscription.predicates.len();
            let mut trace: Vec<StageRecord> = Vec::new();
            for cell in reg.base as usize..reg.base as usize + arity {
                let CellTally { pair, route, .. } = s.cells[cell];
                for rec in &x.pairs()[pair as usize].derivations[route as usize].provenance {
                    if !trace.contains(rec) {
                        trace.push(rec.clone());
                    }
                }
            }
            let sub = &reg.subscription;
            matched.push(SubMatch { sub_id: sub.sub_id.clone(), subscriber: sub.subscriber.clone(), trace });
        }
        matched
    }

    pub fn matching_ids(&self, x: &ExpandedEvent) -> BTreeSet<String> {
        SCRATCH.with(|scratch| {
            let mut s = scratch.borrow_mut();
            self.tally(&mut s, x);
            self.complete(&s).map(|reg| reg.subscription.sub_id.clone()).collect()
        })
    }

    /// Brute-force check against this index's own subscriptions.
    pub fn oracle(&self, x: &ExpandedEvent) -> BTreeSet<String> {
        let subs: Vec<Subscription> = self.subscriptions().into_iter().cloned().collect();
        oracle_match(&subs, x, &self.default_precision, self.current_year)
    }
}

/// Nested-loop reference matcher: no indexes, same satisfaction rule.
pub fn oracle_match(
    subs: &[Subscription],
    x: &ExpandedEvent,
    default_precision: &PrecisionConfig,
    current_year: i32,
) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for s in subs {
        let precision = s.precision.unwrap_or(*default_precision);
        let satisfied = s.predicates.iter().all(|p| {
            x.pairs().iter().any(|dp| {
                evaluate_predicate(p, &dp.pair, current_year)
                    && dp
                        .derivations
                        .iter()
                        .any(|d| admissible_under(d, &precision))
            })
        });
        if satisfied {
            out.insert(s.sub_id.clone());
        }
    }
    out
}
