//! Per-decision-point monitoring and remining.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::adwin::Adwin;
use crate::cart::{DecisionTree, RuleSet, TrainingInstance};
use crate::config::{AdwinInput, AverageScope, EngineConfig};
use crate::control_flow::DecisionPoint;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trigger {
    NewAttribute(String),
    Accuracy,
    Frequency(String),
    Data(String),
    StructuralAdded,
    StructuralClassChange,
    StructuralRemoved,
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::NewAttribute(a) => write!(f, "new-attribute:{a}"),
            Trigger::Accuracy => f.write_str("accuracy"),
            Trigger::Frequency(c) => write!(f, "frequency:{c}"),
            Trigger::Data(a) => write!(f, "data:{a}"),
            Trigger::StructuralAdded => f.write_str("structural-added"),
            Trigger::StructuralClassChange => f.write_str("structural-class-change"),
            Trigger::StructuralRemoved => f.write_str("structural-removed"),
        }
    }
}

impl Serialize for Trigger {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftNotification {
    pub seq: u64,
    pub case_id: String,
    pub point_id: String,
    pub trigger: Trigger,
    pub old_rules: String,
    pub new_rules: String,
    pub adwin_window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub tree: DecisionTree,
    pub rules: RuleSet,
    pub rules_text: String,
    pub trained_on: usize,
    pub seq: u64,
}

impl Model {
    fn fit(window: &VecDeque<TrainingInstance>, cfg: &EngineConfig, seq: u64) -> Option<Self> {
        let data: Vec<TrainingInstance> = window.iter().cloned().collect();
        let tree = DecisionTree::fit(&data, &cfg.tree)?;
        let rules = tree.rules();
        Some(Self {
            rules_text: rules.to_text(),
            rules,
            trained_on: data.len(),
            tree,
            seq,
        })
    }
}

/// Why a model was (re)fitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitReason {
    Initial,
    Drift(Trigger),
}

impl fmt::Display for FitReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitReason::Initial => f.write_str("initial"),
            FitReason::Drift(t) => t.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemineEntry {
    pub seq: u64,
    pub case_id: String,
    #[serde(serialize_with = "display")]
    pub reason: FitReason,
    pub trained_on: usize,
    pub rules: RuleSet,
}

fn display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Outcome of scoring one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub correct: bool,
    pub running_accuracy: f64,
    pub notification: Option<DriftNotification>,
}

/// Monitoring record of one decision point.
#[derive(Debug, Clone)]
pub struct MonitorState {
    pub point: DecisionPoint,
    pub model: Option<Model>,
    pub drift_flag: bool,
    pending_trigger: Option<Trigger>,
    detection_window: Option<usize>,
    /// Capacity of the point's training window.
    pub ws: usize,
    /// Instances required before the first model is fitted.
    pub first_fit_at: usize,
    /// Registered by a structural change after initial mining.
    pub added_later: bool,
    /// Window size the pending remine waits for.
    remine_min: Option<usize>,
    acc_sum: f64,
    acc_n: u64,
    class_counts: BTreeMap<String, u64>,
    class_total: u64,
    attr_sums: BTreeMap<String, f64>,
    attr_ns: BTreeMap<String, u64>,
    adwin_acc: Adwin,
    adwin_class: BTreeMap<String, Adwin>,
    adwin_attr: BTreeMap<String, Adwin>,
    attr_scale: BTreeMap<String, (f64, f64)>,
    /// Range seen so far for attributes whose scale is not settled yet.
    attr_range: BTreeMap<String, (f64, f64, usize)>,
    pub known_attributes: BTreeSet<String>,
    pub remine_log: Vec<RemineEntry>,
    pub total_correct: u64,
    pub total_scored: u64,
}

impl MonitorState {
    pub fn new(point: DecisionPoint, ws: usize, first_fit_at: usize, cfg: &EngineConfig) -> Self {
        Self {
            point,
            model: None,
            drift_flag: false,
            pending_trigger: None,
            detection_window: None,
            ws,
            first_fit_at,
            added_later: false,
            remine_min: None,
            acc_sum: 0.0,
            acc_n: 0,
            class_counts: BTreeMap::new(),
            class_total: 0,
            attr_sums: BTreeMap::new(),
            attr_ns: BTreeMap::new(),
            adwin_acc: Adwin::new(cfg.delta_accuracy),
            adwin_class: BTreeMap::new(),
            adwin_attr: BTreeMap::new(),
            attr_scale: BTreeMap::new(),
            attr_range: BTreeMap::new(),
            known_attributes: BTreeSet::new(),
            remine_log: Vec::new(),
            total_correct: 0,
            total_scored: 0,
        }
    }

    pub fn pending_trigger(&self) -> Option<&Trigger> {
        self.pending_trigger.as_ref()
    }

    /// Running accuracy over the current averaging span.
    pub fn running_accuracy(&self) -> Option<f64> {
        (self.acc_n > 0).then(|| self.acc_sum / self.acc_n as f64)
    }

    pub fn overall_accuracy(&self) -> Option<f64> {
        (self.total_scored > 0).then(|| self.total_correct as f64 / self.total_scored as f64)
    }

    pub fn detector_buckets(&self) -> usize {
        self.detectors().map(Adwin::bucket_count).sum()
    }

    pub fn detector_bucket_bound(&self) -> usize {
        self.detectors().map(Adwin::bucket_bound).sum()
    }

    fn detectors(&self) -> impl Iterator<Item = &Adwin> {
        std::iter::once(&self.adwin_acc)
            .chain(self.adwin_class.values())
            .chain(self.adwin_attr.values())
    }

    /// Marks the point for remining; the first trigger is kept until the
    /// remine happens.
    pub fn flag(&mut self, trigger: Trigger) {
        self.drift_flag = true;
        if self.pending_trigger.is_none() {
            self.pending_trigger = Some(trigger);
        }
    }

    /// Restarts the point after its classes changed: the window is emptied
    /// and the remine waits until `needed` new decisions are collected.
    pub fn restart(&mut self, window: &mut VecDeque<TrainingInstance>, needed: usize) {
        window.clear();
        self.ws = self.ws.max(needed);
        self.remine_min = Some(needed);
        self.drift_flag = true;
        self.pending_trigger = Some(Trigger::StructuralClassChange);
        self.detection_window = None;
    }

    fn set_ws(
        &mut self,
        detector_window: usize,
        window: &mut VecDeque<TrainingInstance>,
        cfg: &EngineConfig,
    ) {
        let floor = self.remine_min.unwrap_or(0).max(cfg.min_mine_instances);
        self.ws = detector_window.clamp(floor, cfg.max_window);
        while window.len() > self.ws {
            window.pop_front();
        }
    }

    /// Fits the first model of this point from `window`.
    pub fn fit_initial(
        &mut self,
        window: &VecDeque<TrainingInstance>,
        cfg: &EngineConfig,
        seq: u64,
        case_id: &str,
    ) -> bool {
        let Some(model) = Model::fit(window, cfg, seq) else {
            return false;
        };
        self.install(model, window, cfg, FitReason::Initial, case_id);
        true
    }

    fn install(
        &mut self,
        model: Model,
        window: &VecDeque<TrainingInstance>,
        cfg: &EngineConfig,
        reason: FitReason,
        case_id: &str,
    ) {
        for inst in window {
            for attr in inst.features.keys() {
                self.known_attributes.insert(attr.clone());
            }
        }
        for inst in window {
            for (attr, &v) in &inst.features {
                if !self.attr_scale.contains_key(attr) {
                    self.widen_range(attr, v);
                }
            }
        }
        let pending: Vec<String> = self.attr_range.keys().cloned().collect();
        for attr in pending {
            self.settle_scale(&attr, cfg.min_mine_instances);
        }

        self.adwin_acc = Adwin::new(cfg.delta_accuracy);
        self.adwin_class = self
            .point
            .classes
            .iter()
            .map(|c| (c.clone(), Adwin::new(cfg.delta_frequency)))
            .collect();
        self.adwin_attr = self
            .attr_scale
            .keys()
            .map(|a| (a.clone(), Adwin::new(cfg.delta_data)))
            .collect();
        if cfg.average_scope == AverageScope::SinceRemine {
            self.acc_sum = 0.0;
            self.acc_n = 0;
            self.class_counts.clear();
            self.class_total = 0;
            self.attr_sums.clear();
            self.attr_ns.clear();
        }
        self.seed_averages(window);
        self.drift_flag = false;
        self.pending_trigger = None;
        self.detection_window = None;
        self.remine_min = None;
        if cfg.keep_history {
            self.remine_log.push(RemineEntry {
                seq: model.seq,
                case_id: case_id.to_string(),
                reason,
                trained_on: model.trained_on,
                rules: model.rules.clone(),
            });
        }
        self.model = Some(model);
    }

    /// Starts the frequency and attribute averages from the training
    /// window so the first monitored values are not dominated by noise.
    /// Accumulators that are already running are left alone.
    fn seed_averages(&mut self, window: &VecDeque<TrainingInstance>) {
        let seed_classes = self.class_total == 0;
        let fresh: BTreeSet<String> = self
            .known_attributes
            .iter()
            .filter(|a| !self.attr_ns.contains_key(*a))
            .cloned()
            .collect();
        for inst in window {
            if seed_classes {
                *self.class_counts.entry(inst.label.clone()).or_default() += 1;
                self.class_total += 1;
            }
            for (attr, v) in inst.features.iter().filter(|(a, _)| fresh.contains(*a)) {
                *self.attr_sums.entry(attr.clone()).or_default() += v;
                *self.attr_ns.entry(attr.clone()).or_default() += 1;
            }
        }
    }

    fn widen_range(&mut self, attr: &str, v: f64) {
        let r = self.attr_range.entry(attr.to_string()).or_insert((
            f64::INFINITY,
            f64::NEG_INFINITY,
            0,
        ));
        r.0 = r.0.min(v);
        r.1 = r.1.max(v);
        r.2 += 1;
    }

    /// Fixes the normalisation of `attr` once `min_n` values spanning a
    /// non-empty range were seen. Returns whether it was fixed now.
    fn settle_scale(&mut self, attr: &str, min_n: usize) -> bool {
        match self.attr_range.get(attr) {
            Some(&(lo, hi, n)) if n >= min_n && hi > lo => {
                self.attr_range.remove(attr);
                self.attr_scale.insert(attr.to_string(), (lo, hi - lo));
                true
            }
            _ => false,
        }
    }

    fn normalized(&self, attr: &str, v: f64) -> f64 {
        let (lo, width) = self.attr_scale[attr];
        (v - lo) / width
    }

    /// Scores `instance` against the current model, updates the drift
    /// detectors and remines from `window` when drift is flagged.
    ///
    /// `instance` must already be the newest element of `window`. Returns
    /// `None` when the point has no model yet.
    pub fn monitor(
        &mut self,
        instance: &TrainingInstance,
        window: &mut VecDeque<TrainingInstance>,
        cfg: &EngineConfig,
        case_id: &str,
    ) -> Option<Scored> {
        self.model.as_ref()?;

        if let Some(attr) = instance
            .features
            .keys()
            .find(|a| !self.known_attributes.contains(*a))
        {
            self.flag(Trigger::NewAttribute(attr.clone()));
        }

        let model = self.model.as_ref().expect("checked above");
        let correct = model.tree.predict(&instance.features).class == instance.label;
        let hit = if correct { 1.0 } else { 0.0 };
        self.acc_sum += hit;
        self.acc_n += 1;
        self.total_scored += 1;
        self.total_correct += u64::from(correct);
        let running_accuracy = self.acc_sum / self.acc_n as f64;

        *self.class_counts.entry(instance.label.clone()).or_default() += 1;
        self.class_total += 1;
        for (attr, &v) in &instance.features {
            *self.attr_sums.entry(attr.clone()).or_default() += v;
            *self.attr_ns.entry(attr.clone()).or_default() += 1;
            if self.known_attributes.contains(attr) && !self.attr_scale.contains_key(attr) {
                self.widen_range(attr, v);
                if self.settle_scale(attr, cfg.min_mine_instances) {
                    self.adwin_attr
                        .insert(attr.clone(), Adwin::new(cfg.delta_data));
                }
            }
        }

        let raw = cfg.adwin_input == AdwinInput::Raw;
        let mut fired: Option<(Trigger, usize)> = None;
        let mut note = |t: Trigger, w: usize| {
            if fired.is_none() {
                fired = Some((t, w));
            }
        };
        let signal = if raw { hit } else { running_accuracy };
        if self.adwin_acc.add(signal).unwrap_or(false) {
            note(Trigger::Accuracy, self.adwin_acc.window_size());
        }
        for (class, det) in self.adwin_class.iter_mut() {
            let signal = if raw {
                if *class == instance.label {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.class_counts.get(class).copied().unwrap_or(0) as f64 / self.class_total as f64
            };
            if det.add(signal).unwrap_or(false) {
                note(Trigger::Frequency(class.clone()), det.window_size());
            }
        }
        let attr_signals: Vec<(String, f64)> = self
            .adwin_attr
            .keys()
            .filter_map(|attr| {
                let v = *instance.features.get(attr)?;
                let x = if raw {
                    v
                } else {
                    self.attr_sums[attr] / self.attr_ns[attr] as f64
                };
                Some((attr.clone(), self.normalized(attr, x)))
            })
            .collect();
        for (attr, x) in attr_signals {
            let det = self.adwin_attr.get_mut(&attr).expect("detector exists");
            if det.add(x).unwrap_or(false) {
                note(Trigger::Data(attr), det.window_size());
            }
        }
        if let Some((trigger, w)) = fired {
            self.flag(trigger);
            self.detection_window = Some(w);
            self.set_ws(w, window, cfg);
        }

        let needed = self.remine_min.unwrap_or(cfg.min_mine_instances);
        let notification = if self.drift_flag && window.len() >= needed {
            self.remine(window, cfg, instance.seq, case_id)
        } else {
            None
        };
        Some(Scored {
            correct,
            running_accuracy,
            notification,
        })
    }

    /// Refits from `window` and emits the drift notification for the
    /// pending trigger.
    pub fn remine(
        &mut self,
        window: &VecDeque<TrainingInstance>,
        cfg: &EngineConfig,
        seq: u64,
        case_id: &str,
    ) -> Option<DriftNotification> {
        let model = Model::fit(window, cfg, seq)?;
        let trigger = self.pending_trigger.clone().unwrap_or(Trigger::Accuracy);
        let adwin_window = self.detection_window.unwrap_or(self.ws);
        let old_rules = self
            .model
            .as_ref()
            .map(|m| m.rules_text.clone())
            .unwrap_or_default();
        let new_rules = model.rules_text.clone();
        self.install(
            model,
            window,
            cfg,
            FitReason::Drift(trigger.clone()),
            case_id,
        );
        Some(DriftNotification {
            seq,
            case_id: case_id.to_string(),
            point_id: self.point.id.clone(),
            trigger,
            old_rules,
            new_rules,
            adwin_window,
        })
    }
}
