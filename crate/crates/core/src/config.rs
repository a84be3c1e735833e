use serde::{Deserialize, Serialize};

use crate::cart::TreeConfig;
use crate::error::{Error, Result};

/// What the drift detectors are fed on each monitored decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdwinInput {
    /// Running averages of accuracy, branch frequency and attribute values.
    #[default]
    Average,
    /// The per-decision observation itself.
    Raw,
}

/// Span over which the running averages are accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AverageScope {
    /// Since monitoring of the point began; only the detectors restart on
    /// a remine.
    SinceStart,
    /// Accumulators are cleared on every remine.
    #[default]
    SinceRemine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Completed cases observed before the first rule mining.
    pub grace: usize,
    pub epsilon: f64,
    pub dep_threshold: f64,
    pub net_stride: usize,
    pub delta_accuracy: f64,
    pub delta_frequency: f64,
    pub delta_data: f64,
    pub adwin_input: AdwinInput,
    pub average_scope: AverageScope,
    pub min_mine_instances: usize,
    pub max_window: usize,
    pub max_open_cases: usize,
    pub tree: TreeConfig,
    /// Keep every notification and accuracy sample for reporting. Turn off
    /// for unbounded streams.
    pub keep_history: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            grace: 200,
            epsilon: 0.001,
            dep_threshold: 0.9,
            net_stride: 100,
            delta_accuracy: 0.002,
            delta_frequency: 0.002,
            delta_data: 0.002,
            adwin_input: AdwinInput::Average,
            average_scope: AverageScope::SinceRemine,
            min_mine_instances: 30,
            max_window: 10_000,
            max_open_cases: 10_000,
            tree: TreeConfig::default(),
            keep_history: true,
        }
    }
}

impl EngineConfig {
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta_accuracy = delta;
        self.delta_frequency = delta;
        self.delta_data = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.grace == 0 {
            return bad("grace must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must be in (0,1), got {}", self.epsilon));
        }
        if !(self.dep_threshold > -1.0 && self.dep_threshold <= 1.0) {
            return bad(format!(
                "dep-threshold must be in (-1,1], got {}",
                self.dep_threshold
            ));
        }
        if self.net_stride == 0 {
            return bad("net-stride must be at least 1".into());
        }
        for (name, d) in [
            ("accuracy", self.delta_accuracy),
            ("frequency", self.delta_frequency),
            ("data", self.delta_data),
        ] {
            if !(d > 0.0 && d < 1.0) {
                return bad(format!("{name} delta must be in (0,1), got {d}"));
            }
        }
        if self.min_mine_instances == 0 {
            return bad("min-mine must be at least 1".into());
        }
        if self.max_window < self.min_mine_instances || self.max_window < self.grace {
            return bad("max window must hold at least max(grace, min-mine) instances".into());
        }
        if self.max_open_cases == 0 {
            return bad("max open cases must be at least 1".into());
        }
        if self.tree.min_leaf == 0 || self.tree.max_depth == 0 {
            return bad("tree min_leaf and max_depth must be positive".into());
        }
        if self.tree.min_gain.is_nan() || self.tree.min_gain < 0.0 {
            return bad("tree min_gain must be non-negative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = EngineConfig::default();
        c.validate().unwrap();
        assert_eq!(c.grace, 200);
        assert_eq!(c.epsilon, 0.001);
        assert_eq!(c.dep_threshold, 0.9);
        assert_eq!(c.net_stride, 100);
        assert_eq!(c.delta_accuracy, 0.002);
        assert_eq!(c.min_mine_instances, 30);
        assert_eq!(c.adwin_input, AdwinInput::Average);
    }

    #[test]
    fn rejects_out_of_range() {
        let cases = [
            EngineConfig {
                grace: 0,
                ..Default::default()
            },
            EngineConfig {
                epsilon: 1.5,
                ..Default::default()
            },
            EngineConfig {
                net_stride: 0,
                ..Default::default()
            },
            EngineConfig::default().with_delta(0.0),
            EngineConfig {
                min_mine_instances: 0,
                ..Default::default()
            },
        ];
        for c in cases {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }
}
