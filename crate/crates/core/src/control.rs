//! Shared-control session: classic mode switching and the suggestion
//! adoption policies, plus the per-tick session step.
//!
//! The active mapping only ever changes through an explicit user button
//! (mode cycle, request, accept) or, in the idle variant, the idle timer.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{integrate, GeometryError, Pose, Twist, WeightedMetric};
use crate::intent::{
    change_perspective, nudge_log_weights, perspective_yaw_deg, score_with, sense, suggest,
    IntentConfig, IntentContext, IntentDistribution, MappingSuggestion,
};
use crate::scene::{step_world, GraspTolerance, Phase, Scenario, TaskState, World, WorldEvent};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("invalid classic mode {0}, expected 1..=4")]
    InvalidMode(u8),
    #[error("session already finished")]
    SessionFinished,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Classic,
    AdmcRequest,
    AdmcIdle,
    AdmcContinuous,
    AdmcThreshold,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Classic,
        Variant::AdmcRequest,
        Variant::AdmcIdle,
        Variant::AdmcContinuous,
        Variant::AdmcThreshold,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Classic => "classic",
            Variant::AdmcRequest => "admc_request",
            Variant::AdmcIdle => "admc_idle",
            Variant::AdmcContinuous => "admc_continuous",
            Variant::AdmcThreshold => "admc_threshold",
        }
    }

    /// Variants that re-run the intent engine on every tick.
    pub fn suggests_every_tick(self) -> bool {
        matches!(self, Variant::AdmcContinuous | Variant::AdmcThreshold)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown mode {s:?}; expected one of classic, admc_request, admc_idle, admc_continuous, admc_threshold"
                )
            })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Buttons {
    pub mode_switch: bool,
    pub accept: bool,
    pub request: bool,
    pub estop: bool,
}

impl Buttons {
    pub fn any(&self) -> bool {
        self.mode_switch || self.accept || self.request || self.estop
    }

    pub fn or(self, o: Buttons) -> Buttons {
        Buttons {
            mode_switch: self.mode_switch || o.mode_switch,
            accept: self.accept || o.accept,
            request: self.request || o.request,
            estop: self.estop || o.estop,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    #[default]
    Human,
    Simulated,
}

/// One sample of the low-DoF input device: two axes plus edge-triggered buttons.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InputFrame {
    pub axes: [f64; 2],
    #[serde(default)]
    pub buttons: Buttons,
    #[serde(default)]
    pub source: InputSource,
}

impl InputFrame {
    pub fn idle() -> Self {
        InputFrame::default()
    }

    pub fn axes(a: f64, b: f64) -> Self {
        InputFrame {
            axes: [a, b],
            ..Default::default()
        }
    }

    pub fn is_idle(&self) -> bool {
        self.axes == [0.0, 0.0] && !self.buttons.any()
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if self.axes.iter().all(|a| a.is_finite() && (-1.0..=1.0).contains(a)) {
            Ok(())
        } else {
            Err(ControlError::InvalidInput(format!(
                "axes {:?} must lie in [-1, 1]",
                self.axes
            )))
        }
    }

    /// Merge a later frame into this one: latest axes win, button edges accumulate.
    pub fn coalesce(self, later: InputFrame) -> InputFrame {
        InputFrame {
            axes: later.axes,
            buttons: self.buttons.or(later.buttons),
            source: later.source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MappingSource {
    ClassicMode { mode: u8 },
    Suggestion { epoch: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveMapping {
    pub columns: Vec<Twist>,
    pub source: MappingSource,
    pub since_tick: u64,
}

impl ActiveMapping {
    pub fn rank1(&self) -> &Twist {
        &self.columns[0]
    }

    /// Length of the projection of a unit twist onto the mapping's span.
    pub fn alignment(&self, direction: &Twist, metric: &WeightedMetric) -> f64 {
        self.columns
            .iter()
            .map(|c| metric.dot(direction, c).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Cardinal mapping for classic mode `k`:
/// 1 = (x, y), 2 = (z, roll), 3 = (pitch, yaw), 4 = (gripper).
pub fn classic_mapping(k: u8, metric: &WeightedMetric) -> Result<ActiveMapping, ControlError> {
    let rot = 1.0 / metric.lambda_rot;
    let columns = match k {
        1 => vec![Twist::linear(1.0, 0.0, 0.0), Twist::linear(0.0, 1.0, 0.0)],
        2 => vec![Twist::linear(0.0, 0.0, 1.0), Twist::angular(rot, 0.0, 0.0)],
        3 => vec![Twist::angular(0.0, rot, 0.0), Twist::angular(0.0, 0.0, rot)],
        4 => vec![Twist::aperture(1.0 / metric.lambda_grip)],
        _ => return Err(ControlError::InvalidMode(k)),
    };
    Ok(ActiveMapping {
        columns,
        source: MappingSource::ClassicMode { mode: k },
        since_tick: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub variant: Variant,
    /// seconds
    pub idle_timeout: f64,
    /// degrees
    pub threshold_angle: f64,
    /// m/s at full deflection along a unit column
    pub speed_scale: f64,
    pub metric: WeightedMetric,
    pub intent: IntentConfig,
    pub grasp: GraspTolerance,
    /// Seconds of missing or weak intent before the gripper turns to look again.
    pub perspective_stall: f64,
    pub low_confidence: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            variant: Variant::Classic,
            idle_timeout: 5.0,
            threshold_angle: 30.0,
            speed_scale: 0.15,
            metric: WeightedMetric::default(),
            intent: IntentConfig::default(),
            grasp: GraspTolerance::default(),
            perspective_stall: 2.0,
            low_confidence: 0.55,
        }
    }
}

impl ControllerConfig {
    pub fn with_variant(variant: Variant) -> Self {
        ControllerConfig {
            variant,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.idle_timeout > 0.0) {
            return Err(ControlError::InvalidConfig("idle_timeout must be > 0".into()));
        }
        if !(self.threshold_angle > 0.0 && self.threshold_angle < 180.0) {
            return Err(ControlError::InvalidConfig(
                "threshold_angle must be in (0, 180)".into(),
            ));
        }
        if !(self.speed_scale > 0.0) {
            return Err(ControlError::InvalidConfig("speed_scale must be > 0".into()));
        }
        if !(self.metric.lambda_rot > 0.0 && self.metric.lambda_grip > 0.0) {
            return Err(ControlError::InvalidConfig("metric weights must be > 0".into()));
        }
        if !(self.intent.temperature > 0.0) {
            return Err(ControlError::InvalidConfig("temperature must be > 0".into()));
        }
        self.intent
            .view
            .validate()
            .map_err(|e| ControlError::InvalidConfig(e.to_string()))
    }

    /// Ticks of inactivity that trigger idle adoption.
    pub fn idle_ticks(&self, dt: f64) -> u64 {
        seconds_to_ticks(self.idle_timeout, dt)
    }

    pub fn stall_ticks(&self, dt: f64) -> u64 {
        seconds_to_ticks(self.perspective_stall, dt)
    }
}

fn seconds_to_ticks(seconds: f64, dt: f64) -> u64 {
    (seconds / dt - 1e-9).ceil().max(1.0) as u64
}

pub fn apply_input(mapping: &ActiveMapping, input: &InputFrame, config: &ControllerConfig) -> Twist {
    if input.buttons.estop {
        return Twist::zero();
    }
    mapping
        .columns
        .iter()
        .zip(input.axes)
        .filter(|(_, a)| *a != 0.0)
        .fold(Twist::zero(), |acc, (c, a)| acc + c.scale(a))
        .scale(config.speed_scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adopter {
    User,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Event {
    SuggestionUpdated {
        epoch: u64,
        top_candidate_id: String,
        confidence: f64,
    },
    MappingAdopted {
        by: Adopter,
        epoch: u64,
    },
    ModeCycled {
        mode: u8,
    },
    PerspectiveChanged {
        attempt: u32,
        yaw_deg: f64,
        requested: bool,
    },
    PhaseChanged {
        from: Phase,
        to: Phase,
    },
    TaskDone {
        sim_time_s: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub tick: u64,
    pub gripper: Pose,
    pub task: TaskState,
    pub world: World,
    pub mapping: ActiveMapping,
    pub pending_suggestion: Option<MappingSuggestion>,
    /// Whether the pending suggestion is shown to the user this tick.
    pub pending_exposed: bool,
    pub dist: Option<IntentDistribution>,
    /// Accumulated confidence nudges, as log-weights per candidate.
    pub intent_bias: BTreeMap<String, f64>,
    pub idle_ticks: u64,
    pub stall_ticks: u64,
    pub switch_count_user: u64,
    pub switch_count_auto: u64,
    pub perspective_attempts: u32,
    pub last_epoch: u64,
    pub rng_seed: u64,
    pub last_twist: Twist,
}

impl SessionState {
    pub fn new(scenario: &Scenario, config: &ControllerConfig) -> Result<Self, ControlError> {
        config.validate()?;
        Ok(SessionState {
            tick: 0,
            gripper: scenario.start_pose.clone(),
            task: TaskState::start(scenario),
            world: World::from_scenario(scenario),
            mapping: classic_mapping(1, &config.metric)?,
            pending_suggestion: None,
            pending_exposed: false,
            dist: None,
            intent_bias: BTreeMap::new(),
            idle_ticks: 0,
            stall_ticks: 0,
            switch_count_user: 0,
            switch_count_auto: 0,
            perspective_attempts: 0,
            last_epoch: 0,
            rng_seed: scenario.seed,
            last_twist: Twist::zero(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.task.phase == Phase::Done
    }

    pub fn sim_time(&self, dt: f64) -> f64 {
        self.tick as f64 * dt
    }

    pub fn exposed_suggestion(&self) -> Option<&MappingSuggestion> {
        self.pending_suggestion.as_ref().filter(|_| self.pending_exposed)
    }

    fn intent_context<'a>(&'a self, scenario: &'a Scenario, config: &'a ControllerConfig) -> IntentContext<'a> {
        IntentContext {
            world: &self.world,
            limits: &scenario.limits,
            metric: &config.metric,
            tolerance: &config.grasp,
            config: &config.intent,
        }
    }

    /// Re-run sensing and scoring, folding in accumulated nudges. With
    /// `with_suggestion`, also produce a fresh pending suggestion.
    fn refresh_intent(&mut self, scenario: &Scenario, config: &ControllerConfig, with_suggestion: bool) {
        let candidates = sense(&self.gripper, &self.world, self.task.phase, &config.intent);
        self.dist = score_with(&candidates, &config.intent)
            .ok()
            .map(|d| d.reweighted(&self.intent_bias));
        self.pending_suggestion = None;
        self.pending_exposed = false;
        if !with_suggestion {
            return;
        }
        let Some(dist) = &self.dist else { return };
        let ctx = self.intent_context(scenario, config);
        if let Some(s) = suggest(&self.gripper, &self.task, dist, self.last_epoch, &ctx) {
            self.last_epoch = s.epoch;
            self.pending_suggestion = Some(s);
        }
    }

    fn adopt(&mut self, by: Adopter, events: &mut Vec<Event>) {
        let Some(s) = self.pending_suggestion.take() else { return };
        self.pending_exposed = false;
        self.mapping = ActiveMapping {
            columns: s.ranked,
            source: MappingSource::Suggestion { epoch: s.epoch },
            since_tick: self.tick,
        };
        match by {
            Adopter::User => self.switch_count_user += 1,
            Adopter::Auto => self.switch_count_auto += 1,
        }
        events.push(Event::MappingAdopted { by, epoch: s.epoch });
    }

    /// Angle in degrees between the active rank-1 and a suggestion's rank-1.
    pub fn suggestion_angle_deg(&self, s: &MappingSuggestion, metric: &WeightedMetric) -> f64 {
        metric.cos_angle(self.mapping.rank1(), &s.ranked[0]).acos().to_degrees()
    }

    fn same_as_mapping(&self, s: &MappingSuggestion, metric: &WeightedMetric) -> bool {
        s.ranked.len() == self.mapping.columns.len()
            && s
                .ranked
                .iter()
                .zip(&self.mapping.columns)
                .all(|(a, b)| metric.cos_angle(a, b) > 1.0 - 1e-12)
    }
}

/// Rotate the gripper in place and look again. Without an explicit request
/// this only fires once intent has been missing or weak for the stall period.
pub fn trigger_perspective_change(
    state: &SessionState,
    scenario: &Scenario,
    config: &ControllerConfig,
    requested: bool,
) -> (SessionState, Vec<Event>) {
    let mut s = state.clone();
    if s.is_done() || (!requested && s.stall_ticks < config.stall_ticks(scenario.tick_dt)) {
        return (s, Vec::new());
    }
    let attempt = s.perspective_attempts;
    s.gripper = change_perspective(&s.gripper, attempt);
    s.perspective_attempts += 1;
    s.stall_ticks = 0;
    let mut events = vec![Event::PerspectiveChanged {
        attempt,
        yaw_deg: perspective_yaw_deg(attempt),
        requested,
    }];
    match config.variant {
        Variant::Classic => {}
        v if v.suggests_every_tick() => {
            s.refresh_intent(scenario, config, true);
            expose(&mut s, config, &mut events);
        }
        _ => s.refresh_intent(scenario, config, false),
    }
    (s, events)
}

fn expose(s: &mut SessionState, config: &ControllerConfig, events: &mut Vec<Event>) {
    s.pending_exposed = match (&s.pending_suggestion, config.variant) {
        (None, _) | (_, Variant::Classic) => false,
        (Some(p), Variant::AdmcThreshold) => {
            s.suggestion_angle_deg(p, &config.metric) > config.threshold_angle
        }
        (Some(_), _) => true,
    };
    if let Some(p) = s.exposed_suggestion() {
        events.push(Event::SuggestionUpdated {
            epoch: p.epoch,
            top_candidate_id: p.top_candidate_id.clone(),
            confidence: p.confidence,
        });
    }
}

/// One control tick. Pure in `(state, input, scenario, config)`.
pub fn advance(
    state: &SessionState,
    input: &InputFrame,
    scenario: &Scenario,
    config: &ControllerConfig,
) -> Result<(SessionState, Vec<Event>), ControlError> {
    if state.is_done() {
        return Err(ControlError::SessionFinished);
    }
    input.validate()?;
    let dt = scenario.tick_dt;
    let variant = config.variant;
    let buttons = input.buttons;
    let mut s = state.clone();
    let mut events = Vec::new();

    // 1. intent and suggestion
    let idle_due = variant == Variant::AdmcIdle && s.idle_ticks >= config.idle_ticks(dt);
    let requested = variant == Variant::AdmcRequest && buttons.request;
    if variant.suggests_every_tick() || idle_due || requested {
        s.refresh_intent(scenario, config, true);
        expose(&mut s, config, &mut events);
    } else if variant != Variant::Classic {
        s.refresh_intent(scenario, config, false);
    }

    if variant.suggests_every_tick() && !buttons.estop {
        let weak = s
            .pending_suggestion
            .as_ref()
            .is_none_or(|p| p.confidence < config.low_confidence);
        s.stall_ticks = if weak { s.stall_ticks + 1 } else { 0 };
        if s.stall_ticks >= config.stall_ticks(dt) {
            let (next, mut ev) = trigger_perspective_change(&s, scenario, config, false);
            s = next;
            events.append(&mut ev);
        }
    }

    // 2. adoption
    match variant {
        Variant::Classic => {
            if buttons.mode_switch {
                let mode = match s.mapping.source {
                    MappingSource::ClassicMode { mode } => mode % 4 + 1,
                    MappingSource::Suggestion { .. } => 1,
                };
                s.mapping = classic_mapping(mode, &config.metric)?;
                s.mapping.since_tick = s.tick;
                s.switch_count_user += 1;
                events.push(Event::ModeCycled { mode });
            }
        }
        Variant::AdmcRequest => {
            if requested {
                s.adopt(Adopter::User, &mut events);
            }
        }
        Variant::AdmcIdle => {
            if idle_due {
                let fresh = s
                    .pending_suggestion
                    .as_ref()
                    .is_some_and(|p| !s.same_as_mapping(p, &config.metric));
                if fresh {
                    s.adopt(Adopter::Auto, &mut events);
                }
                s.idle_ticks = 0;
            }
        }
        Variant::AdmcContinuous => {
            if buttons.accept {
                s.adopt(Adopter::User, &mut events);
            }
        }
        Variant::AdmcThreshold => {
            if buttons.accept && s.pending_exposed {
                s.adopt(Adopter::User, &mut events);
            }
        }
    }
    if !variant.suggests_every_tick() {
        // On-demand suggestions live for one tick only.
        s.pending_suggestion = None;
        s.pending_exposed = false;
    }

    // 3. motion and confidence nudging
    let twist = apply_input(&s.mapping, input, config);
    if input.axes != [0.0, 0.0] && !buttons.estop {
        if let Some(dist) = &s.dist {
            if let Some(w) = nudge_log_weights(dist, &twist, &s.gripper, &s.world, config.intent.eta) {
                for (id, v) in &w {
                    *s.intent_bias.entry(id.clone()).or_insert(0.0) += v;
                }
                s.dist = Some(dist.reweighted(&w));
            }
        }
    }

    // 4. integrate
    s.gripper = integrate(&s.gripper, &twist, dt, &scenario.limits)?;

    // 5. world
    let (task, world, world_events) = step_world(&s.task, &s.world, &s.gripper, &scenario.limits, &config.grasp);
    s.task = task;
    s.world = world;
    for e in world_events {
        if let WorldEvent::PhaseChanged { from, to } = e {
            s.intent_bias.clear();
            s.stall_ticks = 0;
            events.push(Event::PhaseChanged { from, to });
            if to == Phase::Done {
                events.push(Event::TaskDone {
                    sim_time_s: s.sim_time(dt),
                });
            }
        }
    }

    // 6. idle bookkeeping
    s.idle_ticks = if input.is_idle() { s.idle_ticks + 1 } else { 0 };

    s.last_twist = twist;
    s.tick += 1;
    Ok((s, events))
}

/// Owning wrapper around a scenario, a config and the evolving state.
#[derive(Debug, Clone)]
pub struct Session {
    pub scenario: Scenario,
    pub config: ControllerConfig,
    pub state: SessionState,
}

impl Session {
    pub fn new(scenario: Scenario, config: ControllerConfig) -> Result<Self, ControlError> {
        let state = SessionState::new(&scenario, &config)?;
        Ok(Session {
            scenario,
            config,
            state,
        })
    }

    pub fn advance(&mut self, input: &InputFrame) -> Result<Vec<Event>, ControlError> {
        let (next, events) = advance(&self.state, input, &self.scenario, &self.config)?;
        self.state = next;
        Ok(events)
    }

    pub fn request_perspective_change(&mut self) -> Vec<Event> {
        let (next, events) = trigger_perspective_change(&self.state, &self.scenario, &self.config, true);
        self.state = next;
        events
    }

    pub fn dt(&self) -> f64 {
        self.scenario.tick_dt
    }
}
