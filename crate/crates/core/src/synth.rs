//! Seeded generator for the loan-application drift scenarios.
//!
//! Every case runs `Apply -> Check application data -> <check> -> Overall
//! Assessment -> Inform Customer`; the check is chosen by the scenario's
//! ground-truth rule. From case `drift_at` on the rule (and, for `sd4`, the
//! process) changes:
//!
//! | kind     | before                         | after                                   |
//! |----------|--------------------------------|-----------------------------------------|
//! | baseline | amount <= 80 000 -> Normal     | unchanged                               |
//! | sd1      | amount <= 80 000 -> Normal     | amount <= 50 000 -> Normal              |
//! | sd2      | amount <= 80 000 -> Normal     | ... AND income > 3 000, income logged   |
//! | sd3      | amount <= 70 000 -> Normal     | Simple below 30 000, Normal up to 70 000|
//! | sd4      | amount <= 80 000 -> Normal     | letter split after the assessment       |
//!
//! Attribute ranges (uniform, integer valued): amount_loan 10 000..=120 000,
//! income 1 000..=6 000, age 18..=75, risk_level 0..=6.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::event::Event;

pub const APPLY: &str = "Apply";
pub const CHECK_DATA: &str = "Check application data";
pub const NORMAL: &str = "Normal Check";
pub const EXTENSIVE: &str = "Extensive Check";
pub const SIMPLE: &str = "Simple Check";
pub const ASSESSMENT: &str = "Overall Assessment";
pub const ACCEPT: &str = "Write Acceptance Letter";
pub const REJECT: &str = "Write Rejection Letter";
pub const INFORM: &str = "Inform Customer";

pub const AMOUNT: &str = "amount_loan";
pub const INCOME: &str = "income";
pub const AGE: &str = "age";
pub const RISK: &str = "risk_level";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Baseline,
    Sd1,
    Sd2,
    Sd3,
    Sd4,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Baseline,
        ScenarioKind::Sd1,
        ScenarioKind::Sd2,
        ScenarioKind::Sd3,
        ScenarioKind::Sd4,
    ];

    fn attribute_columns(self) -> &'static [&'static str] {
        match self {
            ScenarioKind::Sd2 => &[AMOUNT, AGE, INCOME],
            ScenarioKind::Sd4 => &[AMOUNT, AGE, RISK],
            _ => &[AMOUNT, AGE],
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Baseline => "baseline",
            ScenarioKind::Sd1 => "sd1",
            ScenarioKind::Sd2 => "sd2",
            ScenarioKind::Sd3 => "sd3",
            ScenarioKind::Sd4 => "sd4",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub n_cases: usize,
    pub drift_at: usize,
    pub seed: u64,
    /// Probability of replacing a branch label by another class.
    pub noise: f64,
    /// Number of cases open at once; events are emitted round-robin.
    pub interleave: usize,
}

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            n_cases: 5_000,
            drift_at: 2_500,
            seed: 42,
            noise: 0.0,
            interleave: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cases == 0 {
            return Err(Error::Config("instances must be positive".into()));
        }
        if self.drift_at >= self.n_cases {
            return Err(Error::Config(format!(
                "drift-at ({}) must be below the number of instances ({})",
                self.drift_at, self.n_cases
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config("noise must be in [0,1]".into()));
        }
        if self.interleave == 0 {
            return Err(Error::Config("interleave must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_post_drift(&self, case_index: usize) -> bool {
        self.kind != ScenarioKind::Baseline && case_index >= self.drift_at
    }

    /// Draws the attributes of one case.
    pub fn sample_attributes<R: Rng>(
        &self,
        case_index: usize,
        rng: &mut R,
    ) -> BTreeMap<String, f64> {
        let mut a = BTreeMap::new();
        a.insert(
            AMOUNT.to_string(),
            f64::from(rng.gen_range(10_000..=120_000u32)),
        );
        a.insert(AGE.to_string(), f64::from(rng.gen_range(18..=75u32)));
        let post = self.is_post_drift(case_index);
        if post && self.kind == ScenarioKind::Sd2 {
            a.insert(
                INCOME.to_string(),
                f64::from(rng.gen_range(1_000..=6_000u32)),
            );
        }
        if post && self.kind == ScenarioKind::Sd4 {
            a.insert(RISK.to_string(), f64::from(rng.gen_range(0..=6u32)));
        }
        a
    }

    /// Ground-truth class per decision point for a case with `attrs`.
    pub fn oracle_label(
        &self,
        case_index: usize,
        attrs: &BTreeMap<String, f64>,
    ) -> BTreeMap<&'static str, &'static str> {
        let get = |k: &str| attrs.get(k).copied();
        let amount = get(AMOUNT).unwrap_or(0.0);
        let post = self.is_post_drift(case_index);
        let mut out = BTreeMap::new();
        let check = match (self.kind, post) {
            (ScenarioKind::Sd1, true) => {
                if amount <= 50_000.0 {
                    NORMAL
                } else {
                    EXTENSIVE
                }
            }
            (ScenarioKind::Sd2, true) => {
                if amount <= 80_000.0 && get(INCOME).unwrap_or(0.0) > 3_000.0 {
                    NORMAL
                } else {
                    EXTENSIVE
                }
            }
            (ScenarioKind::Sd3, false) => {
                if amount <= 70_000.0 {
                    NORMAL
                } else {
                    EXTENSIVE
                }
            }
            (ScenarioKind::Sd3, true) => {
                if amount <= 30_000.0 {
                    SIMPLE
                } else if amount <= 70_000.0 {
                    NORMAL
                } else {
                    EXTENSIVE
                }
            }
            _ => {
                if amount <= 80_000.0 {
                    NORMAL
                } else {
                    EXTENSIVE
                }
            }
        };
        out.insert(CHECK_DATA, check);
        if self.kind == ScenarioKind::Sd4 && post {
            let risk = get(RISK).unwrap_or(f64::INFINITY);
            let accept = (risk < 4.0 && amount < 80_000.0) || (risk <= 1.0 && amount >= 80_000.0);
            out.insert(ASSESSMENT, if accept { ACCEPT } else { REJECT });
        }
        out
    }

    fn classes_at(&self, point: &str, case_index: usize) -> &'static [&'static str] {
        match point {
            ASSESSMENT => &[ACCEPT, REJECT],
            _ if self.kind == ScenarioKind::Sd3 && self.is_post_drift(case_index) => {
                &[SIMPLE, NORMAL, EXTENSIVE]
            }
            _ => &[NORMAL, EXTENSIVE],
        }
    }

    fn case_events<R: Rng>(
        &self,
        idx: usize,
        rng: &mut R,
    ) -> VecDeque<(&'static str, Vec<(&'static str, f64)>)> {
        let attrs = self.sample_attributes(idx, rng);
        let mut labels = self.oracle_label(idx, &attrs);
        if self.noise > 0.0 {
            for (point, label) in labels.iter_mut() {
                if rng.gen_bool(self.noise) {
                    let others: Vec<&'static str> = self
                        .classes_at(point, idx)
                        .iter()
                        .copied()
                        .filter(|c| c != label)
                        .collect();
                    *label = others[rng.gen_range(0..others.len())];
                }
            }
        }
        let val = |k: &'static str| attrs.get(k).map(|&v| (k, v));
        let mut ev = VecDeque::new();
        ev.push_back((APPLY, val(AGE).into_iter().collect()));
        ev.push_back((
            CHECK_DATA,
            [val(AMOUNT), val(INCOME)].into_iter().flatten().collect(),
        ));
        ev.push_back((labels[CHECK_DATA], Vec::new()));
        ev.push_back((ASSESSMENT, val(RISK).into_iter().collect()));
        if let Some(letter) = labels.get(ASSESSMENT) {
            ev.push_back((letter, Vec::new()));
        }
        ev.push_back((INFORM, Vec::new()));
        ev
    }

    /// Lazily generated event stream.
    pub fn stream(&self) -> ScenarioStream<'_> {
        ScenarioStream {
            scenario: self,
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            slots: VecDeque::new(),
            next_case: 0,
            seq: 0,
        }
    }

    pub fn events(&self) -> Vec<Event> {
        self.stream().collect()
    }

    pub fn header(&self) -> Vec<&'static str> {
        let mut h = vec!["case_id", "activity"];
        h.extend_from_slice(self.kind.attribute_columns());
        h
    }

    /// Writes the log in the ingest CSV schema; returns the event count.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<u64> {
        self.validate()?;
        let mut w = csv::Writer::from_writer(out);
        let header = self.header();
        w.write_record(&header)?;
        let mut n = 0;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for ev in self.stream() {
            row.clear();
            row.push(ev.case_id);
            row.push(ev.activity);
            for col in &header[2..] {
                row.push(
                    ev.attributes
                        .get(*col)
                        .map(|v| v.to_string())
                        .unwrap_or_default(),
                );
            }
            w.write_record(&row)?;
            n += 1;
        }
        w.flush()?;
        Ok(n)
    }

    pub fn truth(&self) -> Truth {
        let before = match self.kind {
            ScenarioKind::Sd3 => vec![Phase::check(70_000)],
            _ => vec![Phase::check(80_000)],
        };
        let after = match self.kind {
            ScenarioKind::Baseline => Vec::new(),
            ScenarioKind::Sd1 => vec![Phase::check(50_000)],
            ScenarioKind::Sd2 => vec![PhaseRule {
                point: CHECK_DATA,
                rules: vec![
                    format!("IF {AMOUNT} <= 80000 AND {INCOME} > 3000 THEN {NORMAL}"),
                    format!("ELSE {EXTENSIVE}"),
                ],
            }],
            ScenarioKind::Sd3 => vec![PhaseRule {
                point: CHECK_DATA,
                rules: vec![
                    format!("IF {AMOUNT} <= 30000 THEN {SIMPLE}"),
                    format!("IF {AMOUNT} > 30000 AND {AMOUNT} <= 70000 THEN {NORMAL}"),
                    format!("IF {AMOUNT} > 70000 THEN {EXTENSIVE}"),
                ],
            }],
            ScenarioKind::Sd4 => vec![
                Phase::check(80_000),
                PhaseRule {
                    point: ASSESSMENT,
                    rules: vec![
                        format!("IF {RISK} < 4 AND {AMOUNT} < 80000 THEN {ACCEPT}"),
                        format!("ELSE IF {RISK} <= 1 AND {AMOUNT} >= 80000 THEN {ACCEPT}"),
                        format!("ELSE {REJECT}"),
                    ],
                },
            ],
        };
        let mut phases = vec![TruthPhase {
            from_case: 0,
            to_case: if after.is_empty() {
                self.n_cases - 1
            } else {
                self.drift_at - 1
            },
            points: before,
        }];
        if !after.is_empty() {
            phases.push(TruthPhase {
                from_case: self.drift_at,
                to_case: self.n_cases - 1,
                points: after,
            });
        }
        Truth {
            scenario: self.clone(),
            phases,
        }
    }
}

pub fn case_id(index: usize) -> String {
    format!("case-{index}")
}

pub fn case_index(id: &str) -> Option<usize> {
    id.strip_prefix("case-")?.parse().ok()
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseRule {
    pub point: &'static str,
    pub rules: Vec<String>,
}

struct Phase;

impl Phase {
    fn check(threshold: u32) -> PhaseRule {
        PhaseRule {
            point: CHECK_DATA,
            rules: vec![
                format!("IF {AMOUNT} <= {threshold} THEN {NORMAL}"),
                format!("ELSE {EXTENSIVE}"),
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TruthPhase {
    pub from_case: usize,
    pub to_case: usize,
    pub points: Vec<PhaseRule>,
}

/// Sidecar describing the generating rules per phase.
#[derive(Debug, Clone, Serialize)]
pub struct Truth {
    pub scenario: Scenario,
    pub phases: Vec<TruthPhase>,
}

type PendingCase = (usize, VecDeque<(&'static str, Vec<(&'static str, f64)>)>);

pub struct ScenarioStream<'a> {
    scenario: &'a Scenario,
    rng: ChaCha8Rng,
    slots: VecDeque<PendingCase>,
    next_case: usize,
    seq: u64,
}

impl Iterator for ScenarioStream<'_> {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        let width = self.scenario.interleave.max(1);
        while self.slots.len() < width && self.next_case < self.scenario.n_cases {
            let idx = self.next_case;
            self.next_case += 1;
            let events = self.scenario.case_events(idx, &mut self.rng);
            self.slots.push_back((idx, events));
        }
        let (idx, mut pending) = self.slots.pop_front()?;
        let (activity, attrs) = pending.pop_front().expect("case with no events");
        if !pending.is_empty() {
            self.slots.push_back((idx, pending));
        }
        let mut ev = Event::new(case_id(idx), activity, self.seq);
        self.seq += 1;
        for (k, v) in attrs {
            ev.attributes.insert(k.to_string(), v);
        }
        Some(ev)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::cart::{DecisionTree, TrainingInstance, TreeConfig};
    use crate::replay::EventReader;

    fn attrs(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn oracle_examples() {
        let sd1 = Scenario::new(ScenarioKind::Sd1);
        assert_eq!(
            sd1.oracle_label(100, &attrs(&[(AMOUNT, 90_000.0)]))[CHECK_DATA],
            EXTENSIVE
        );
        assert_eq!(
            sd1.oracle_label(3_000, &attrs(&[(AMOUNT, 60_000.0)]))[CHECK_DATA],
            EXTENSIVE
        );
        assert_eq!(
            sd1.oracle_label(2_499, &attrs(&[(AMOUNT, 60_000.0)]))[CHECK_DATA],
            NORMAL
        );
        let sd3 = Scenario::new(ScenarioKind::Sd3);
        assert_eq!(
            sd3.oracle_label(3_000, &attrs(&[(AMOUNT, 10_000.0)]))[CHECK_DATA],
            SIMPLE
        );
        let sd4 = Scenario::new(ScenarioKind::Sd4);
        let post = sd4.oracle_label(3_000, &attrs(&[(AMOUNT, 90_000.0), (RISK, 1.0)]));
        assert_eq!(post[ASSESSMENT], ACCEPT);
        let post = sd4.oracle_label(3_000, &attrs(&[(AMOUNT, 90_000.0), (RISK, 2.0)]));
        assert_eq!(post[ASSESSMENT], REJECT);
        assert!(!sd4
            .oracle_label(10, &attrs(&[(AMOUNT, 1.0)]))
            .contains_key(ASSESSMENT));
    }

    fn cases(s: &Scenario) -> BTreeMap<usize, Vec<Event>> {
        let mut out: BTreeMap<usize, Vec<Event>> = BTreeMap::new();
        for ev in s.stream() {
            out.entry(case_index(&ev.case_id).unwrap())
                .or_default()
                .push(ev);
        }
        out
    }

    fn merged(evs: &[Event]) -> BTreeMap<String, f64> {
        evs.iter().flat_map(|e| e.attributes.clone()).collect()
    }

    #[test]
    fn sd1_labels_switch_at_drift() {
        let s = Scenario::new(ScenarioKind::Sd1);
        let cs = cases(&s);
        assert_eq!(cs.len(), 5_000);
        for (&i, evs) in &cs {
            let truth = s.oracle_label(i, &merged(evs));
            assert_eq!(evs[2].activity, truth[CHECK_DATA], "case {i}");
        }
        let a = merged(&cs[&2_499])[AMOUNT];
        let expect = if a <= 80_000.0 { NORMAL } else { EXTENSIVE };
        assert_eq!(cs[&2_499][2].activity, expect);
        let a = merged(&cs[&2_500])[AMOUNT];
        let expect = if a <= 50_000.0 { NORMAL } else { EXTENSIVE };
        assert_eq!(cs[&2_500][2].activity, expect);
    }

    #[test]
    fn sd4_risk_only_after_drift() {
        let s = Scenario::new(ScenarioKind::Sd4);
        for (i, evs) in cases(&s) {
            let has_risk = evs.iter().any(|e| e.attributes.contains_key(RISK));
            let has_letter = evs
                .iter()
                .any(|e| e.activity == ACCEPT || e.activity == REJECT);
            assert_eq!(has_risk, i >= 2_500);
            assert_eq!(has_letter, i >= 2_500);
        }
    }

    #[test]
    fn sd2_income_only_after_drift() {
        let s = Scenario::new(ScenarioKind::Sd2);
        for (i, evs) in cases(&s) {
            assert_eq!(merged(&evs).contains_key(INCOME), i >= 2_500);
        }
    }

    #[test]
    fn baseline_is_separable() {
        let s = Scenario::new(ScenarioKind::Baseline);
        let data: Vec<TrainingInstance> = cases(&s)
            .into_iter()
            .skip(700)
            .take(200)
            .map(|(_, evs)| TrainingInstance::new(merged(&evs[..2]), evs[2].activity.clone(), 0))
            .collect();
        let tree = DecisionTree::fit(&data, &TreeConfig::default()).unwrap();
        assert_eq!(tree.training_accuracy(&data), 1.0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let s = Scenario::new(ScenarioKind::Sd3);
        let mut a = Vec::new();
        let mut b = Vec::new();
        s.write_csv(&mut a).unwrap();
        s.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        s.clone().with_seed(7).write_csv(&mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trips_through_reader() {
        let mut s = Scenario::new(ScenarioKind::Sd2);
        s.n_cases = 300;
        s.drift_at = 150;
        let mut buf = Vec::new();
        let n = s.write_csv(&mut buf).unwrap();
        let read: Vec<Event> = EventReader::new(buf.as_slice(), b',').unwrap().collect();
        assert_eq!(read.len() as u64, n);
        assert_eq!(read, s.events());
    }

    #[test]
    fn interleaving_keeps_per_case_order() {
        let mut s = Scenario::new(ScenarioKind::Sd4);
        s.interleave = 7;
        let seq = cases(&Scenario::new(ScenarioKind::Sd4));
        let inter = cases(&s);
        assert_eq!(seq.len(), inter.len());
        for (i, evs) in &inter {
            let acts: Vec<_> = evs.iter().map(|e| &e.activity).collect();
            let expect: Vec<_> = seq[i].iter().map(|e| &e.activity).collect();
            assert_eq!(acts, expect);
        }
        let first: BTreeSet<_> = s.stream().take(7).map(|e| e.case_id).collect();
        assert_eq!(first.len(), 7);
    }

    #[test]
    fn noise_flips_some_labels() {
        let mut s = Scenario::new(ScenarioKind::Baseline);
        s.noise = 0.1;
        let flipped = cases(&s)
            .iter()
            .filter(|(i, evs)| s.oracle_label(**i, &merged(evs))[CHECK_DATA] != evs[2].activity)
            .count();
        assert!((350..650).contains(&flipped), "{flipped}");
    }

    #[test]
    fn rejects_bad_scenarios() {
        assert!("bogus".parse::<ScenarioKind>().is_err());
        assert_eq!("SD3".parse::<ScenarioKind>().unwrap(), ScenarioKind::Sd3);
        let mut s = Scenario::new(ScenarioKind::Sd1);
        s.drift_at = 5_000;
        assert!(s.validate().is_err());
    }
}
