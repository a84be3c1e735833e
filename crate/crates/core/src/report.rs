//! Run reports and their on-disk formats.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::control_flow::hex;
use crate::engine::{AccuracySample, DriftNotification, RemineEntry};
use crate::error::{Error, Result};

pub const RULES_FILE: &str = "rules.txt";
pub const DRIFT_EVENTS_FILE: &str = "drift_events.csv";
pub const ACCURACY_FILE: &str = "accuracy_series.csv";
pub const POINTS_FILE: &str = "decision_points.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointReport {
    pub id: String,
    pub classes: Vec<String>,
    pub rules: Option<String>,
    pub trained_on: Option<usize>,
    pub trained_at: Option<u64>,
    pub window_size: usize,
    pub overall_accuracy: Option<f64>,
    pub remine_log: Vec<RemineEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub events: u64,
    pub completed_cases: usize,
    pub points: Vec<PointReport>,
    pub notifications: Vec<DriftNotification>,
    pub accuracy: Vec<AccuracySample>,
}

/// First 12 hex digits of the SHA-256 of `text`; empty for empty text.
pub fn rule_hash(text: &str) -> String {
    if text.is_empty() {
        return String::new();
    }
    let digest = Sha256::digest(text.as_bytes());
    hex(&digest)[..12].to_string()
}

impl RunReport {
    pub fn point(&self, id: &str) -> Option<&PointReport> {
        self.points.iter().find(|p| p.id == id)
    }

    pub fn rules_text(&self) -> String {
        let mut s = String::new();
        for p in &self.points {
            let _ = writeln!(s, "## DP {} -> {{{}}}", p.id, p.classes.join(", "));
            match (&p.rules, p.trained_on, p.trained_at) {
                (Some(rules), Some(n), Some(seq)) => {
                    s.push_str(rules);
                    let _ = writeln!(s, "trained_on={n} at seq={seq}");
                }
                _ => s.push_str("no model\n"),
            }
            s.push('\n');
        }
        s
    }

    pub fn drift_events_csv(&self) -> String {
        let mut s = String::from("seq,dp_id,trigger,adwin_window,old_rule_hash,new_rule_hash\n");
        for n in &self.notifications {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                n.seq,
                csv_field(&n.point_id),
                csv_field(&n.trigger.to_string()),
                n.adwin_window,
                rule_hash(&n.old_rules),
                rule_hash(&n.new_rules)
            );
        }
        s
    }

    pub fn accuracy_series_csv(&self) -> String {
        let mut s = String::from("seq,dp_id,running_accuracy\n");
        for a in &self.accuracy {
            let _ = writeln!(
                s,
                "{},{},{:.6}",
                a.seq,
                csv_field(&a.point_id),
                a.running_accuracy
            );
        }
        s
    }

    pub fn decision_points_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Entry<'a> {
            id: &'a str,
            classes: &'a [String],
            trained_on: Option<usize>,
            trained_at: Option<u64>,
            window_size: usize,
            overall_accuracy: Option<f64>,
            remine_log: &'a [RemineEntry],
        }
        let entries: Vec<Entry<'_>> = self
            .points
            .iter()
            .map(|p| Entry {
                id: &p.id,
                classes: &p.classes,
                trained_on: p.trained_on,
                trained_at: p.trained_at,
                window_size: p.window_size,
                overall_accuracy: p.overall_accuracy,
                remine_log: &p.remine_log,
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&entries)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes the four report files into `dir`, creating it if needed.
    /// `banner` is prepended to the rules file as a comment line.
    pub fn write_dir(&self, dir: &Path, banner: Option<&str>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| Error::Open {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut rules = String::new();
        if let Some(b) = banner {
            let _ = writeln!(rules, "# {b}");
        }
        rules.push_str(&self.rules_text());
        fs::write(dir.join(RULES_FILE), rules)?;
        fs::write(dir.join(DRIFT_EVENTS_FILE), self.drift_events_csv())?;
        fs::write(dir.join(ACCURACY_FILE), self.accuracy_series_csv())?;
        fs::write(dir.join(POINTS_FILE), self.decision_points_json()?)?;
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
