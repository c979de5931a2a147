//! Deterministic shared-control simulator for a 7-DoF assistive arm.
//!
//! Classic cardinal mode switching and adaptive DoF mapping (AI-suggested
//! combined-DoF input mappings) run against the same scene, intent engine and
//! simulated operators, so the two can be benchmarked tick for tick.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod cue;
pub mod geometry;
pub mod intent;
pub mod protocol;
pub mod runner;
pub mod scene;
pub mod sim_user;
pub mod telemetry;

pub use nalgebra;
pub use control::{
    advance, apply_input, classic_mapping, trigger_perspective_change, ActiveMapping, Adopter, Buttons,
    ControlError, ControllerConfig, Event, InputFrame, InputSource, MappingSource, Session, SessionState, Variant,
};
pub use geometry::{
    goal_twist, integrate, orthonormalize_pair, weighted_normalize, GeometryError, Pose, Twist, WeightedMetric,
    WorkspaceLimits,
};
pub use intent::{IntentConfig, IntentDistribution, MappingSuggestion, ViewModel};
pub use runner::{run_headless, RunOutcome, DEFAULT_TICKS_MAX};
pub use scene::{builtin_scenario, load_scenario, Phase, Scenario, ScenarioError, TaskState, World};
pub use sim_user::{SimUser, UserKind, UserPolicy};
pub use telemetry::{compare, summarize, Metrics, Report, SessionLog, TickRecord};
