//! Online decision mining over process event streams.
//!
//! The engine consumes an ordered stream of process events, maintains a
//! lossy-counted directly-follows graph, mines a heuristics net from it to
//! find decision points, learns a CART tree per decision point and keeps
//! watching each point for decision drift (prediction accuracy, branching
//! frequency, attribute values and newly appearing attributes). When drift
//! is detected the affected rules are remined from an adaptively sized
//! window of recent decisions.
//!
//! ```no_run
//! use driftmine::{Engine, EngineConfig, replay::EventReader};
//!
//! let reader = EventReader::from_path("sd1.csv", b',').unwrap();
//! let mut engine = Engine::new(EngineConfig::default()).unwrap();
//! for event in reader {
//!     for note in engine.process_event(&event) {
//!         println!("{} {} {}", note.seq, note.point_id, note.trigger);
//!     }
//! }
//! print!("{}", engine.report().rules_text());
//! ```

pub mod adwin;
pub mod cart;
pub mod config;
pub mod control_flow;
pub mod dfg;
pub mod engine;
pub mod error;
pub mod event;
pub mod replay;
pub mod report;
pub mod synth;

pub use adwin::Adwin;
pub use cart::{DecisionTree, RuleSet, TrainingInstance, TreeConfig};
pub use config::{AdwinInput, AverageScope, EngineConfig};
pub use control_flow::{DecisionPoint, HeuristicsNet, StructuralChange};
pub use dfg::DfgCounter;
pub use engine::{DriftNotification, Engine, MonitorState, Trigger};
pub use error::{Error, Result};
pub use event::{Event, EventQueue};
pub use report::RunReport;
