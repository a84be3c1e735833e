//! Directly-follows graph with bounded memory via lossy counting.
//!
//! Every directly-follows pair formed within a case is one counted item. The
//! stream of items is split into buckets of width `w = ceil(1/epsilon)`; at
//! each bucket boundary pairs with `count + delta <= bucket` are evicted.
//! Stored counts undercount the true frequency by at most `epsilon * N`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::event::Event;

pub type Pair = (String, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DfgEntry {
    pub count: u64,
    /// Maximum undercount at insertion time.
    pub delta: u64,
}

/// One weighted edge of a DFG snapshot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DfgEdge {
    pub from: String,
    pub to: String,
    pub count: u64,
}

#[derive(Debug, Clone)]
pub struct DfgCounter {
    epsilon: f64,
    width: u64,
    items_seen: u64,
    entries: HashMap<Pair, DfgEntry>,
    last_activity: HashMap<String, String>,
}

impl DfgCounter {
    /// # Panics
    /// If `epsilon` is not in (0, 1).
    pub fn new(epsilon: f64) -> Self {
        assert!(
            epsilon > 0.0 && epsilon < 1.0,
            "epsilon must be in (0,1), got {epsilon}"
        );
        Self {
            epsilon,
            width: (1.0 / epsilon).ceil() as u64,
            items_seen: 0,
            entries: HashMap::new(),
            last_activity: HashMap::new(),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn bucket_width(&self) -> u64 {
        self.width
    }

    pub fn items_seen(&self) -> u64 {
        self.items_seen
    }

    fn current_bucket(&self) -> u64 {
        self.items_seen.div_ceil(self.width).max(1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn open_cases(&self) -> usize {
        self.last_activity.len()
    }

    pub fn entry(&self, from: &str, to: &str) -> Option<DfgEntry> {
        self.entries
            .get(&(from.to_string(), to.to_string()))
            .copied()
    }

    pub fn observe(&mut self, event: &Event) {
        let prev = self
            .last_activity
            .insert(event.case_id.clone(), event.activity.clone());
        if let Some(prev) = prev {
            self.count_pair(prev, event.activity.clone());
        }
    }

    /// Counts one pair directly, bypassing case bookkeeping.
    pub fn count_pair(&mut self, from: String, to: String) {
        self.items_seen += 1;
        let bucket = self.current_bucket();
        self.entries
            .entry((from, to))
            .and_modify(|e| e.count += 1)
            .or_insert(DfgEntry {
                count: 1,
                delta: bucket - 1,
            });
        if self.items_seen.is_multiple_of(self.width) {
            self.entries.retain(|_, e| e.count + e.delta > bucket);
        }
    }

    /// Drops the per-case predecessor; called when a case leaves the
    /// engine's trace store.
    pub fn forget_case(&mut self, case_id: &str) {
        self.last_activity.remove(case_id);
    }

    /// Surviving pairs sorted lexicographically by pair.
    pub fn snapshot(&self) -> Vec<DfgEdge> {
        let mut edges: Vec<DfgEdge> = self
            .entries
            .iter()
            .map(|((from, to), e)| DfgEdge {
                from: from.clone(),
                to: to.clone(),
                count: e.count,
            })
            .collect();
        edges.sort();
        edges
    }

    /// Generous space bound `(1/eps) * ln(eps*N + 1) + 1/eps + 1` used by
    /// the memory instrumentation.
    pub fn entry_bound(&self) -> usize {
        let inv = 1.0 / self.epsilon;
        (inv * (self.epsilon * self.items_seen as f64 + 1.0).ln() + inv + 1.0).ceil() as usize
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use proptest::prelude::*;

    use super::*;

    fn ev(case: &str, act: &str) -> Event {
        Event::new(case, act, 0)
    }

    #[test]
    fn first_pair_of_case() {
        let mut d = DfgCounter::new(0.001);
        d.observe(&ev("c1", "A"));
        assert_eq!(d.items_seen(), 0);
        assert!(d.is_empty());
        d.observe(&ev("c1", "B"));
        assert_eq!(d.entry("A", "B").unwrap().count, 1);
    }

    #[test]
    fn pairs_do_not_cross_cases() {
        let mut d = DfgCounter::new(0.001);
        d.observe(&ev("c1", "A"));
        d.observe(&ev("c2", "B"));
        assert!(d.is_empty());
    }

    #[test]
    fn singleton_evicted_at_first_boundary() {
        // w = 10: the pair counted as item 1 has count 1, delta 0 and is
        // dropped when item 10 closes bucket 1 (1 + 0 <= 1).
        let mut d = DfgCounter::new(0.1);
        assert_eq!(d.bucket_width(), 10);
        d.count_pair("X".into(), "Y".into());
        for _ in 2..10 {
            d.count_pair("A".into(), "B".into());
        }
        assert!(d.entry("X", "Y").is_some());
        d.count_pair("A".into(), "B".into());
        assert_eq!(d.items_seen(), 10);
        assert!(d.entry("X", "Y").is_none());
        assert_eq!(d.entry("A", "B").unwrap().count, 9);
    }

    #[test]
    fn pair_in_every_item_never_evicted() {
        let mut d = DfgCounter::new(0.1);
        for _ in 0..1_000 {
            d.count_pair("A".into(), "B".into());
        }
        assert_eq!(d.entry("A", "B").unwrap().count, 1_000);
    }

    #[test]
    fn empty_snapshot() {
        assert!(DfgCounter::new(0.01).snapshot().is_empty());
    }

    #[test]
    fn snapshot_is_sorted_and_exact_below_first_boundary() {
        let mut d = DfgCounter::new(0.001);
        let mut exact: HashMap<(String, String), u64> = HashMap::new();
        let acts = ["A", "B", "C", "D"];
        let mut prev: HashMap<usize, &str> = HashMap::new();
        for i in 0..900usize {
            let case = i % 13;
            let act = acts[(i * 7 + i / 3) % 4];
            d.observe(&ev(&format!("c{case}"), act));
            if let Some(p) = prev.insert(case, act) {
                *exact.entry((p.to_string(), act.to_string())).or_default() += 1;
            }
        }
        assert!(d.epsilon() * (d.items_seen() as f64) < 1.0);
        let snap = d.snapshot();
        let mut sorted = snap.clone();
        sorted.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
        assert_eq!(snap, sorted);
        assert_eq!(snap.len(), exact.len());
        for e in snap {
            assert_eq!(exact[&(e.from, e.to)], e.count);
        }
    }

    #[test]
    fn forget_case_stops_pairing() {
        let mut d = DfgCounter::new(0.01);
        d.observe(&ev("c1", "A"));
        d.forget_case("c1");
        assert_eq!(d.open_cases(), 0);
        d.observe(&ev("c1", "B"));
        assert!(d.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn counts_within_error_bound(
            eps in prop::sample::select(vec![0.01, 0.02, 0.05, 0.1]),
            items in prop::collection::vec((0u8..12, 0u8..12), 1..3_000),
        ) {
            let mut d = DfgCounter::new(eps);
            let mut exact: HashMap<(String, String), u64> = HashMap::new();
            for (a, b) in &items {
                let p = (format!("a{a}"), format!("a{b}"));
                *exact.entry(p.clone()).or_default() += 1;
                d.count_pair(p.0, p.1);
            }
            let n = d.items_seen() as f64;
            let stored: HashMap<_, _> = d.snapshot().into_iter()
                .map(|e| ((e.from, e.to), e.count)).collect();
            for (pair, &f) in &exact {
                match stored.get(pair) {
                    Some(&c) => {
                        prop_assert!(c <= f);
                        prop_assert!(c as f64 >= f as f64 - eps * n);
                    }
                    None => prop_assert!((f as f64) <= eps * n),
                }
            }
            prop_assert!(d.len() <= d.entry_bound());
        }
    }
}
