//! Per-case event store (`Trace_Dict`).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;

use crate::event::Event;

#[derive(Debug, Clone, Default)]
pub struct CaseState {
    events: Vec<(String, BTreeMap<String, f64>)>,
    last_seq: u64,
    pub observed_points: BTreeSet<String>,
}

impl CaseState {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_activity(&self) -> Option<&str> {
        self.events.last().map(|(a, _)| a.as_str())
    }

    /// Attributes of all events up to and including the latest occurrence
    /// of `activity`, later values overwriting earlier ones.
    pub fn features_through(&self, activity: &str) -> BTreeMap<String, f64> {
        let Some(end) = self.events.iter().rposition(|(a, _)| a == activity) else {
            return BTreeMap::new();
        };
        let mut out = BTreeMap::new();
        for (_, attrs) in &self.events[..=end] {
            out.extend(attrs.iter().map(|(k, v)| (k.clone(), *v)));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TraceDict {
    cases: HashMap<String, CaseState>,
    max_open: usize,
    evictions: u64,
}

impl TraceDict {
    pub fn new(max_open: usize) -> Self {
        Self {
            cases: HashMap::new(),
            max_open: max_open.max(1),
            evictions: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.max_open
    }

    pub fn lru_evictions(&self) -> u64 {
        self.evictions
    }

    pub fn get(&self, case_id: &str) -> Option<&CaseState> {
        self.cases.get(case_id)
    }

    pub fn get_mut(&mut self, case_id: &str) -> Option<&mut CaseState> {
        self.cases.get_mut(case_id)
    }

    /// Appends `event` to its case. Returns the case's previous activity
    /// and, if the store overflowed, the id of the case evicted to make room.
    pub fn record(&mut self, event: &Event) -> (Option<String>, Option<String>) {
        let mut evicted = None;
        if !self.cases.contains_key(&event.case_id) && self.cases.len() >= self.max_open {
            evicted = self.evict_lru();
        }
        let case = self.cases.entry(event.case_id.clone()).or_default();
        let prev = case.last_activity().map(str::to_string);
        case.events
            .push((event.activity.clone(), event.attributes.clone()));
        case.last_seq = event.seq;
        (prev, evicted)
    }

    /// Ids of cases whose latest activity is in `sinks`, sorted.
    pub fn ended_in(&self, sinks: &BTreeSet<String>) -> Vec<String> {
        let mut ids: Vec<String> = self
            .cases
            .iter()
            .filter(|(_, c)| c.last_activity().is_some_and(|a| sinks.contains(a)))
            .map(|(id, _)| id.clone())
            .collect();
        ids.sort();
        ids
    }

    pub fn remove(&mut self, case_id: &str) -> Option<CaseState> {
        self.cases.remove(case_id)
    }

    fn evict_lru(&mut self) -> Option<String> {
        let victim = self
            .cases
            .iter()
            .min_by(|a, b| a.1.last_seq.cmp(&b.1.last_seq).then_with(|| a.0.cmp(b.0)))
            .map(|(id, _)| id.clone())?;
        warn!("trace store full, evicting least recently updated case {victim}");
        self.cases.remove(&victim);
        self.evictions += 1;
        Some(victim)
    }
}

/// Merged attributes of `case_id` through `point_id`; empty with a warning
/// when the case is unknown.
pub fn collect_features(
    traces: &TraceDict,
    case_id: &str,
    point_id: &str,
) -> BTreeMap<String, f64> {
    match traces.get(case_id) {
        Some(case) => case.features_through(point_id),
        None => {
            warn!("no trace for case {case_id}");
            BTreeMap::new()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_attributes_up_to_point() {
        let mut t = TraceDict::new(10);
        t.record(&Event::new("c1", "Apply", 0).with_attr("amount_loan", 90_000.0));
        t.record(&Event::new("c1", "Check", 1).with_attr("age", 40.0));
        t.record(&Event::new("c1", "Normal", 2).with_attr("late", 1.0));
        let f = collect_features(&t, "c1", "Check");
        assert_eq!(f.len(), 2);
        assert_eq!(f["amount_loan"], 90_000.0);
        assert_eq!(f["age"], 40.0);
    }

    #[test]
    fn case_without_attributes() {
        let mut t = TraceDict::new(10);
        t.record(&Event::new("c1", "A", 0));
        assert!(collect_features(&t, "c1", "A").is_empty());
    }

    #[test]
    fn latest_write_wins() {
        let mut t = TraceDict::new(10);
        t.record(&Event::new("c1", "A", 0).with_attr("x", 5.0));
        t.record(&Event::new("c1", "B", 1).with_attr("x", 7.0));
        assert_eq!(collect_features(&t, "c1", "B")["x"], 7.0);
        assert_eq!(collect_features(&t, "c1", "A")["x"], 5.0);
    }

    #[test]
    fn unknown_case_gives_empty_map() {
        let t = TraceDict::new(10);
        assert!(collect_features(&t, "nope", "A").is_empty());
    }

    #[test]
    fn record_returns_previous_activity() {
        let mut t = TraceDict::new(10);
        assert_eq!(t.record(&Event::new("c1", "A", 0)).0, None);
        assert_eq!(t.record(&Event::new("c1", "B", 1)).0.as_deref(), Some("A"));
    }

    #[test]
    fn overflow_evicts_least_recently_updated() {
        let mut t = TraceDict::new(2);
        t.record(&Event::new("a", "X", 0));
        t.record(&Event::new("b", "X", 1));
        t.record(&Event::new("a", "Y", 2));
        let (_, evicted) = t.record(&Event::new("c", "X", 3));
        assert_eq!(evicted.as_deref(), Some("b"));
        assert_eq!(t.len(), 2);
        assert_eq!(t.lru_evictions(), 1);
    }
}
