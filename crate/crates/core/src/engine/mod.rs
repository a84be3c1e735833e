//! End-to-end online decision mining.

mod monitor;
mod trace;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use log::{debug, info};
use serde::Serialize;

pub use monitor::{
    DriftNotification, FitReason, Model, MonitorState, RemineEntry, Scored, Trigger,
};
pub use trace::{collect_features, CaseState, TraceDict};

use crate::cart::TrainingInstance;
use crate::config::EngineConfig;
use crate::control_flow::{diff, DecisionPoint, HeuristicsNet, StructuralChange};
use crate::dfg::DfgCounter;
use crate::error::Result;
use crate::event::Event;
use crate::report::{PointReport, RunReport};

/// One monitored decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracySample {
    pub seq: u64,
    pub point_id: String,
    pub correct: bool,
    pub running_accuracy: f64,
}

/// Instrumented engine state size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Footprint {
    pub open_cases: usize,
    /// Bounded by twice the open-case limit: open cases plus recently
    /// completed ones.
    pub dfg_open_cases: usize,
    pub window_instances: usize,
    pub buffered_instances: usize,
    pub dfg_entries: usize,
    pub adwin_buckets: usize,
}

/// Limits the [`Footprint`] fields must stay within.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FootprintBounds {
    pub open_cases: usize,
    pub window_instances: usize,
    pub buffered_instances: usize,
    pub dfg_entries: usize,
    pub adwin_buckets: usize,
}

impl Footprint {
    pub fn within(&self, b: &FootprintBounds) -> bool {
        self.open_cases <= b.open_cases
            && self.dfg_open_cases <= 2 * b.open_cases
            && self.window_instances <= b.window_instances
            && self.buffered_instances <= b.buffered_instances
            && self.dfg_entries <= b.dfg_entries
            && self.adwin_buckets <= b.adwin_buckets
    }
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    dfg: DfgCounter,
    net: HeuristicsNet,
    points: BTreeMap<String, DecisionPoint>,
    sinks: BTreeSet<String>,
    traces: TraceDict,
    windows: BTreeMap<String, VecDeque<TrainingInstance>>,
    dms: BTreeMap<String, MonitorState>,
    /// Decisions seen at activities not (yet) registered as points, kept
    /// until initial mining.
    prereg: BTreeMap<String, VecDeque<TrainingInstance>>,
    /// Recently completed cases whose last activity the DFG still keeps, so
    /// a premature completion does not lose the next directly-follows pair.
    recently_completed: VecDeque<String>,
    completed_cases: usize,
    initial_mining_done: bool,
    events_seen: u64,
    notifications: Vec<DriftNotification>,
    accuracy: Vec<AccuracySample>,
    notification_count: u64,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            dfg: DfgCounter::new(config.epsilon),
            net: HeuristicsNet::default(),
            points: BTreeMap::new(),
            sinks: BTreeSet::new(),
            traces: TraceDict::new(config.max_open_cases),
            windows: BTreeMap::new(),
            dms: BTreeMap::new(),
            prereg: BTreeMap::new(),
            recently_completed: VecDeque::new(),
            completed_cases: 0,
            initial_mining_done: false,
            events_seen: 0,
            notifications: Vec::new(),
            accuracy: Vec::new(),
            notification_count: 0,
            config,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn dfg(&self) -> &DfgCounter {
        &self.dfg
    }

    pub fn net(&self) -> &HeuristicsNet {
        &self.net
    }

    pub fn decision_points(&self) -> &BTreeMap<String, DecisionPoint> {
        &self.points
    }

    pub fn monitor_state(&self, point_id: &str) -> Option<&MonitorState> {
        self.dms.get(point_id)
    }

    pub fn window(&self, point_id: &str) -> Option<&VecDeque<TrainingInstance>> {
        self.windows.get(point_id)
    }

    pub fn traces(&self) -> &TraceDict {
        &self.traces
    }

    pub fn events_seen(&self) -> u64 {
        self.events_seen
    }

    pub fn completed_cases(&self) -> usize {
        self.completed_cases
    }

    pub fn initial_mining_done(&self) -> bool {
        self.initial_mining_done
    }

    pub fn notifications(&self) -> &[DriftNotification] {
        &self.notifications
    }

    /// Notifications emitted so far, including those not retained.
    pub fn notification_count(&self) -> u64 {
        self.notification_count
    }

    pub fn accuracy_series(&self) -> &[AccuracySample] {
        &self.accuracy
    }

    /// Feeds one event through the pipeline and returns the drift
    /// notifications it caused.
    pub fn process_event(&mut self, event: &Event) -> Vec<DriftNotification> {
        let mut out = Vec::new();
        self.events_seen += 1;

        self.dfg.observe(event);
        if self
            .events_seen
            .is_multiple_of(self.config.net_stride as u64)
        {
            self.refresh_structure(event, &mut out);
        }

        let (prev, evicted) = self.traces.record(event);
        if let Some(victim) = evicted {
            self.dfg.forget_case(&victim);
        }

        let mut decided = None;
        if let Some(prev) = prev {
            decided = self.collect_decision(&prev, event);
        }

        if !self.initial_mining_done && self.completed_cases >= self.config.grace {
            self.initial_mining(event);
        } else if self.initial_mining_done {
            if let Some(point_id) = decided {
                self.monitor_point(&point_id, event, &mut out);
            }
        }

        if self.sinks.contains(&event.activity) {
            self.complete_case(&event.case_id);
        }

        self.notification_count += out.len() as u64;
        if self.config.keep_history {
            self.notifications.extend(out.iter().cloned());
        }
        out
    }

    fn complete_case(&mut self, case_id: &str) {
        self.traces.remove(case_id);
        self.completed_cases += 1;
        self.recently_completed.push_back(case_id.to_string());
        while self.recently_completed.len() > self.config.max_open_cases {
            let old = self.recently_completed.pop_front().expect("non-empty");
            if self.traces.get(&old).is_none() {
                self.dfg.forget_case(&old);
            }
        }
    }

    /// Stores the decision taken after `prev` by `event`, if `prev` splits.
    /// Returns the point id when it is registered.
    fn collect_decision(&mut self, prev: &str, event: &Event) -> Option<String> {
        let registered = self
            .points
            .get(prev)
            .is_some_and(|p| p.classes.contains(&event.activity));
        if !registered && self.initial_mining_done {
            return None;
        }
        let case = self.traces.get_mut(&event.case_id)?;
        case.observed_points.insert(prev.to_string());
        let features = case.features_through(prev);
        let instance = TrainingInstance::new(features, event.activity.clone(), event.seq);
        if registered {
            let ws = self.dms.get(prev).map_or(self.config.grace, |s| s.ws);
            let window = self.windows.entry(prev.to_string()).or_default();
            window.push_back(instance);
            while window.len() > ws {
                window.pop_front();
            }
            Some(prev.to_string())
        } else {
            let buf = self.prereg.entry(prev.to_string()).or_default();
            buf.push_back(instance);
            while buf.len() > self.config.grace {
                buf.pop_front();
            }
            None
        }
    }

    fn refresh_structure(&mut self, event: &Event, out: &mut Vec<DriftNotification>) {
        let net = HeuristicsNet::mine(&self.dfg.snapshot(), self.config.dep_threshold);
        if net.structural_hash() == self.net.structural_hash() {
            return;
        }
        let new_points = net.decision_points();
        let change = diff(&self.points, &new_points);
        self.sinks = net.sinks();
        self.net = net;
        // Cases that ended before their last activity was known as a sink.
        for id in self.traces.ended_in(&self.sinks) {
            self.complete_case(&id);
        }
        if !change.is_empty() {
            info!(
                "structure changed at seq {}: +{} -{} ~{}",
                event.seq,
                change.added_points.len(),
                change.removed_points.len(),
                change.class_changed_points.len()
            );
            self.apply_change(change, event, out);
        }
        self.points = new_points;
    }

    fn apply_change(
        &mut self,
        change: StructuralChange,
        event: &Event,
        out: &mut Vec<DriftNotification>,
    ) {
        let cfg = &self.config;
        for p in change.added_points {
            let mut window = VecDeque::new();
            let mut st = MonitorState::new(p.clone(), cfg.grace, cfg.grace, cfg);
            if self.initial_mining_done {
                st.added_later = true;
            } else if let Some(buf) = self.prereg.remove(&p.id) {
                window.extend(buf.into_iter().filter(|i| p.classes.contains(&i.label)));
            }
            self.windows.insert(p.id.clone(), window);
            self.dms.insert(p.id.clone(), st);
        }
        for p in change.removed_points {
            self.windows.remove(&p.id);
            if let Some(st) = self.dms.remove(&p.id) {
                if let Some(model) = st.model {
                    out.push(DriftNotification {
                        seq: event.seq,
                        case_id: event.case_id.clone(),
                        point_id: p.id.clone(),
                        trigger: Trigger::StructuralRemoved,
                        old_rules: model.rules_text,
                        new_rules: String::new(),
                        adwin_window: 0,
                    });
                }
            }
        }
        for c in change.class_changed_points {
            let id = c.point.id.clone();
            let Some(st) = self.dms.get_mut(&id) else {
                continue;
            };
            st.point = c.point.clone();
            if st.model.is_some() {
                if let Some(w) = self.windows.get_mut(&id) {
                    st.restart(w, self.config.grace);
                }
            } else if !self.initial_mining_done {
                if let Some(w) = self.windows.get_mut(&id) {
                    w.retain(|i| c.new_classes.contains(&i.label));
                }
            }
        }
    }

    fn initial_mining(&mut self, event: &Event) {
        info!(
            "initial rule mining after {} completed cases at seq {}",
            self.completed_cases, event.seq
        );
        self.initial_mining_done = true;
        self.prereg.clear();
        for (id, st) in self.dms.iter_mut() {
            let window = &self.windows[id];
            if !st.fit_initial(window, &self.config, event.seq, &event.case_id) {
                st.first_fit_at = self.config.min_mine_instances;
            }
        }
    }

    fn monitor_point(&mut self, point_id: &str, event: &Event, out: &mut Vec<DriftNotification>) {
        let cfg = &self.config;
        let (Some(st), Some(window)) = (self.dms.get_mut(point_id), self.windows.get_mut(point_id))
        else {
            return;
        };
        if st.model.is_none() {
            if window.len() >= st.first_fit_at
                && st.fit_initial(window, cfg, event.seq, &event.case_id)
            {
                debug!("first model for {point_id} at seq {}", event.seq);
                if st.added_later {
                    let model = st.model.as_ref().expect("just fitted");
                    out.push(DriftNotification {
                        seq: event.seq,
                        case_id: event.case_id.clone(),
                        point_id: point_id.to_string(),
                        trigger: Trigger::StructuralAdded,
                        old_rules: String::new(),
                        new_rules: model.rules_text.clone(),
                        adwin_window: window.len(),
                    });
                }
            }
            return;
        }
        let instance = window.back().expect("decision just stored").clone();
        let Some(scored) = st.monitor(&instance, window, cfg, &event.case_id) else {
            return;
        };
        if cfg.keep_history {
            self.accuracy.push(AccuracySample {
                seq: event.seq,
                point_id: point_id.to_string(),
                correct: scored.correct,
                running_accuracy: scored.running_accuracy,
            });
        }
        if let Some(n) = scored.notification {
            info!("drift at {} (seq {}): {}", n.point_id, n.seq, n.trigger);
            out.push(n);
        }
    }

    pub fn footprint(&self) -> Footprint {
        Footprint {
            open_cases: self.traces.len(),
            dfg_open_cases: self.dfg.open_cases(),
            window_instances: self.windows.values().map(VecDeque::len).sum(),
            buffered_instances: self.prereg.values().map(VecDeque::len).sum(),
            dfg_entries: self.dfg.len(),
            adwin_buckets: self.dms.values().map(MonitorState::detector_buckets).sum(),
        }
    }

    pub fn footprint_bounds(&self) -> FootprintBounds {
        let activities = self.net.nodes().len().max(1);
        FootprintBounds {
            open_cases: self.config.max_open_cases,
            window_instances: self.dms.values().map(|s| s.ws).sum(),
            buffered_instances: if self.initial_mining_done {
                0
            } else {
                activities.max(self.prereg.len()) * self.config.grace
            },
            dfg_entries: self.dfg.entry_bound(),
            adwin_buckets: self
                .dms
                .values()
                .map(MonitorState::detector_bucket_bound)
                .sum(),
        }
    }

    pub fn report(&self) -> RunReport {
        let points = self
            .points
            .values()
            .map(|p| {
                let st = self.dms.get(&p.id);
                let model = st.and_then(|s| s.model.as_ref());
                PointReport {
                    id: p.id.clone(),
                    classes: p.classes.iter().cloned().collect(),
                    rules: model.map(|m| m.rules_text.clone()),
                    trained_on: model.map(|m| m.trained_on),
                    trained_at: model.map(|m| m.seq),
                    window_size: st.map_or(0, |s| s.ws),
                    overall_accuracy: st.and_then(MonitorState::overall_accuracy),
                    remine_log: st.map(|s| s.remine_log.clone()).unwrap_or_default(),
                }
            })
            .collect();
        RunReport {
            events: self.events_seen,
            completed_cases: self.completed_cases,
            points,
            notifications: self.notifications.clone(),
            accuracy: self.accuracy.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{Scenario, ScenarioKind};

    fn run(kind: ScenarioKind, cases: usize) -> (Engine, Vec<DriftNotification>) {
        let mut sc = Scenario::new(kind);
        sc.n_cases = cases;
        sc.drift_at = cases / 2;
        let mut engine = Engine::new(EngineConfig::default()).unwrap();
        let mut notes = Vec::new();
        for e in sc.stream() {
            notes.extend(engine.process_event(&e));
        }
        (engine, notes)
    }

    #[test]
    fn fresh_engine_reports_nothing() {
        let engine = Engine::new(EngineConfig::default()).unwrap();
        let r = engine.report();
        assert!(r.points.is_empty());
        assert!(r.notifications.is_empty());
        assert!(r.accuracy.is_empty());
    }

    #[test]
    fn linear_process_has_no_points() {
        let mut engine = Engine::new(EngineConfig::default()).unwrap();
        let mut seq = 0;
        for c in 0..500 {
            for a in ["A", "B", "C"] {
                let n = engine
                    .process_event(&Event::new(format!("c{c}"), a, seq).with_attr("x", c as f64));
                assert!(n.is_empty());
                seq += 1;
            }
        }
        assert!(engine.decision_points().is_empty());
        assert!(engine.initial_mining_done());
        assert!(engine.traces().is_empty());
    }

    #[test]
    fn baseline_mines_one_point_without_drift() {
        let (engine, notes) = run(ScenarioKind::Baseline, 1_000);
        assert_eq!(engine.decision_points().len(), 1);
        assert!(notes.is_empty(), "{notes:?}");
        let st = engine.monitor_state(crate::synth::CHECK_DATA).unwrap();
        assert!(st.overall_accuracy().unwrap() > 0.95);
        assert_eq!(engine.accuracy_series().len() as u64, st.total_scored);
    }

    #[test]
    fn windows_never_exceed_ws() {
        let mut sc = Scenario::new(ScenarioKind::Sd1);
        sc.n_cases = 2_000;
        sc.drift_at = 1_000;
        let mut engine = Engine::new(EngineConfig::default()).unwrap();
        for e in sc.stream() {
            engine.process_event(&e);
            for (id, w) in &engine.windows {
                assert!(w.len() <= engine.dms[id].ws);
            }
        }
    }

    #[test]
    fn interleaved_cases_recover_from_premature_sinks() {
        let mut sc = Scenario::new(ScenarioKind::Sd1);
        sc.n_cases = 3_000;
        sc.drift_at = 2_999;
        sc.interleave = 25;
        let mut engine = Engine::new(EngineConfig::default()).unwrap();
        for e in sc.stream() {
            engine.process_event(&e);
        }
        let sinks: Vec<String> = engine.net().sinks().into_iter().collect();
        assert_eq!(sinks, [crate::synth::INFORM]);
        assert!(engine.traces().len() <= 25);
        assert_eq!(engine.decision_points().len(), 1);
    }

    #[test]
    fn new_attribute_remines_at_first_post_drift_decision() {
        let (engine, notes) = run(ScenarioKind::Sd2, 1_200);
        let first = notes
            .iter()
            .find(|n| matches!(n.trigger, Trigger::NewAttribute(_)))
            .expect("new attribute notification");
        assert_eq!(crate::synth::case_index(&first.case_id), Some(600));
        assert!(first.new_rules.contains("income") || engine.report().points[0].rules.is_some());
    }
}
