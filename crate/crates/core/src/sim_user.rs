//! Scripted operators used for headless benchmarking.
//!
//! The greedy user always pushes the axes along the projection of the ideal
//! direction onto the active mapping, and reaches for a button when the
//! mapping stops being useful.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::{ControllerConfig, InputFrame, InputSource, MappingSource, SessionState, Variant};
use crate::geometry::{goal_twist, Twist};
use crate::intent::close_direction;
use crate::scene::{Phase, Scenario};

/// Axis magnitudes below this are treated as "not worth moving".
pub const AXIS_DEADBAND: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserKind {
    Greedy,
    #[serde(alias = "noisy")]
    NoisyGreedy,
}

impl fmt::Display for UserKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UserKind::Greedy => "greedy",
            UserKind::NoisyGreedy => "noisy",
        })
    }
}

impl FromStr for UserKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(UserKind::Greedy),
            "noisy" | "noisy_greedy" => Ok(UserKind::NoisyGreedy),
            _ => Err(format!("unknown user {s:?}; expected greedy or noisy")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UserPolicy {
    pub kind: UserKind,
    pub accept_margin: f64,
    /// Ticks a button wish must persist before the press happens.
    pub reaction_delay: u32,
    pub noise_sigma: f64,
    pub switch_gain_threshold: f64,
}

impl Default for UserPolicy {
    fn default() -> Self {
        UserPolicy {
            kind: UserKind::Greedy,
            accept_margin: 0.05,
            reaction_delay: 4,
            noise_sigma: 0.1,
            switch_gain_threshold: 0.2,
        }
    }
}

impl UserPolicy {
    pub fn new(kind: UserKind) -> Self {
        UserPolicy {
            kind,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wish {
    ModeSwitch,
    Accept,
    Request,
    /// Hold still so the idle timer fires.
    Wait,
}

/// Ideal unit direction for the current task step, or `None` at the subgoal.
pub fn ideal_direction(state: &SessionState, config: &ControllerConfig) -> Option<Twist> {
    let task = &state.task;
    let metric = &config.metric;
    if task.phase == Phase::Grasp {
        let aligned = state
            .world
            .object(&task.active_object_id)
            .is_some_and(|o| config.grasp.aligned(&state.gripper, &o.position, &o.orientation));
        if aligned {
            return Some(close_direction(metric));
        }
    }
    if task.phase == Phase::Done {
        return None;
    }
    goal_twist(&state.gripper, &task.subgoal, metric).ok()
}

/// Raw projections of `u` onto the active mapping columns.
pub fn projections(state: &SessionState, u: &Twist, config: &ControllerConfig) -> Vec<f64> {
    state
        .mapping
        .columns
        .iter()
        .map(|c| config.metric.dot(u, c))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimUser {
    pub policy: UserPolicy,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    wish: Option<Wish>,
    wish_ticks: u32,
    last_source: Option<MappingSource>,
    settled_alignment: Option<f64>,
}

impl SimUser {
    pub fn new(policy: UserPolicy, seed: u64) -> Self {
        let sigma = if policy.noise_sigma.is_finite() && policy.noise_sigma > 0.0 {
            policy.noise_sigma
        } else {
            0.0
        };
        SimUser {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise: Normal::new(0.0, sigma).expect("sigma is finite and non-negative"),
            wish: None,
            wish_ticks: 0,
            last_source: None,
            settled_alignment: None,
        }
    }

    /// Choose the next input frame for a running session.
    pub fn decide(&mut self, state: &SessionState, _scenario: &Scenario, config: &ControllerConfig) -> InputFrame {
        let mut frame = InputFrame {
            source: InputSource::Simulated,
            ..Default::default()
        };
        let Some(u) = ideal_direction(state, config) else {
            self.wish = None;
            return frame;
        };
        let proj = projections(state, &u, config);
        let alignment = proj.iter().map(|p| p * p).sum::<f64>().sqrt();

        if self.last_source != Some(state.mapping.source) {
            self.last_source = Some(state.mapping.source);
            self.settled_alignment = match state.mapping.source {
                MappingSource::Suggestion { .. } => Some(alignment),
                MappingSource::ClassicMode { .. } => None,
            };
        }

        let wish = self.wish_for(state, config, &u, alignment);
        if wish.is_some() && wish == self.wish {
            self.wish_ticks += 1;
        } else {
            self.wish = wish;
            self.wish_ticks = u32::from(wish.is_some());
        }
        let ready = wish.is_some() && self.wish_ticks > self.policy.reaction_delay;

        match wish {
            Some(Wish::Wait) if ready => return frame,
            Some(w) if ready => {
                match w {
                    Wish::ModeSwitch => frame.buttons.mode_switch = true,
                    Wish::Accept => frame.buttons.accept = true,
                    Wish::Request => frame.buttons.request = true,
                    Wish::Wait => unreachable!(),
                }
                self.wish = None;
                self.wish_ticks = 0;
                // The mapping changes before this frame's axes are applied.
                return frame;
            }
            _ => {}
        }

        for (axis, p) in frame.axes.iter_mut().zip(&proj) {
            let mut a = p.clamp(-1.0, 1.0);
            if a.abs() < AXIS_DEADBAND {
                a = 0.0;
            }
            if self.policy.kind == UserKind::NoisyGreedy {
                a = (a + self.noise.sample(&mut self.rng)).clamp(-1.0, 1.0);
            }
            *axis = a;
        }
        frame
    }

    fn wish_for(&self, state: &SessionState, config: &ControllerConfig, u: &Twist, alignment: f64) -> Option<Wish> {
        let margin = self.policy.accept_margin;
        match config.variant {
            Variant::Classic => (alignment < self.policy.switch_gain_threshold).then_some(Wish::ModeSwitch),
            Variant::AdmcContinuous | Variant::AdmcThreshold => {
                let pending = state.exposed_suggestion()?;
                let cos = config.metric.cos_angle(&pending.ranked[0], u);
                (cos > alignment + margin).then_some(Wish::Accept)
            }
            Variant::AdmcRequest | Variant::AdmcIdle => {
                let bar = self.settled_alignment.unwrap_or(1.0).min(1.0) - margin;
                if alignment >= bar {
                    return None;
                }
                Some(if config.variant == Variant::AdmcRequest {
                    Wish::Request
                } else {
                    Wish::Wait
                })
            }
        }
    }
}
