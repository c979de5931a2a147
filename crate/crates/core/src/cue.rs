//! Legibility cues: arrows, ghost previews, the DoF indicator bar and
//! vibrotactile direction patterns for a 3×3 actuator grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControllerConfig, SessionState};
use crate::geometry::{integrate, Pose, Twist};
use crate::scene::Scenario;

pub const GHOST_SAMPLES: usize = 10;
pub const GHOST_HORIZON_S: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CueError {
    #[error("direction must be a unit vector, got norm {0}")]
    InvalidDirection(f64),
    #[error("malformed vibration pattern: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrowKind {
    Current,
    Suggested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrowCue {
    pub anchor: Pose,
    pub direction: Twist,
    pub kind: ArrowKind,
    /// Translation part, drawn as a straight arrow.
    pub straight: [f64; 3],
    /// Rotation part, drawn as a curved arrow about this axis.
    pub curved: [f64; 3],
}

impl ArrowCue {
    pub fn new(anchor: &Pose, direction: Twist, kind: ArrowKind) -> Self {
        ArrowCue {
            anchor: anchor.clone(),
            direction,
            kind,
            straight: direction.linear.into(),
            curved: direction.angular.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhostCue {
    pub samples: Vec<Pose>,
}

/// Lamp intensities in the order x, y, z, roll, pitch, yaw, gripper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofIndicatorState {
    pub levels: [f64; 7],
}

impl DofIndicatorState {
    pub const LABELS: [&'static str; 7] = ["x", "y", "z", "roll", "pitch", "yaw", "gripper"];

    pub fn lit(&self) -> Vec<&'static str> {
        Self::LABELS
            .iter()
            .zip(self.levels)
            .filter(|(_, l)| *l > 1e-9)
            .map(|(n, _)| *n)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueSet {
    pub current: ArrowCue,
    pub suggested: Option<ArrowCue>,
    pub ghost: Option<GhostCue>,
    pub dof_indicator: DofIndicatorState,
}

pub fn ghost_preview(start: &Pose, direction: &Twist, scenario: &Scenario, config: &ControllerConfig) -> GhostCue {
    let step = GHOST_HORIZON_S / (GHOST_SAMPLES - 1) as f64;
    let twist = direction.scale(config.speed_scale);
    let mut samples = Vec::with_capacity(GHOST_SAMPLES);
    samples.push(start.clone());
    for _ in 1..GHOST_SAMPLES {
        let last = samples.last().expect("non-empty");
        let next = integrate(last, &twist, step, &scenario.limits).unwrap_or_else(|_| last.clone());
        samples.push(next);
    }
    GhostCue { samples }
}

/// Cues for the current tick. Only an exposed suggestion produces a
/// suggested arrow or ghost.
pub fn make_cues(state: &SessionState, scenario: &Scenario, config: &ControllerConfig) -> CueSet {
    let metric = &config.metric;
    let current = ArrowCue::new(&state.gripper, *state.mapping.rank1(), ArrowKind::Current);
    let exposed = state.exposed_suggestion();
    let suggested = exposed.map(|s| ArrowCue::new(&state.gripper, s.ranked[0], ArrowKind::Suggested));
    let ghost = exposed.map(|s| ghost_preview(&state.gripper, &s.ranked[0], scenario, config));
    let mut levels = [0.0f64; 7];
    for col in &state.mapping.columns {
        for (l, c) in levels.iter_mut().zip(metric.weighted_components(col)) {
            *l = l.max(c.abs().min(1.0));
        }
    }
    CueSet {
        current,
        suggested,
        ghost,
        dof_indicator: DofIndicatorState { levels },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VibroMode {
    /// Discrete pulses; level encoded as the number of sweeps.
    Rabbit,
    /// Overlapping activations; level encoded as intensity.
    Atm,
    /// Rabbit sweeps whose intensity also carries the level.
    Dual,
}

impl VibroMode {
    pub const ALL: [VibroMode; 3] = [VibroMode::Rabbit, VibroMode::Atm, VibroMode::Dual];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Octant {
    East,
    NorthEast,
    North,
    NorthWest,
    West,
    SouthWest,
    South,
    SouthEast,
}

impl Octant {
    pub const ALL: [Octant; 8] = [
        Octant::East,
        Octant::NorthEast,
        Octant::North,
        Octant::NorthWest,
        Octant::West,
        Octant::SouthWest,
        Octant::South,
        Octant::SouthEast,
    ];

    /// Counter-clockwise from East, in degrees.
    pub fn azimuth_deg(self) -> f64 {
        45.0 * self as u8 as f64
    }

    /// Nearest octant for a horizontal direction; North when it has none.
    pub fn from_horizontal(x: f64, y: f64) -> Octant {
        if x.hypot(y) < 1e-9 {
            return Octant::North;
        }
        let k = (y.atan2(x) / std::f64::consts::FRAC_PI_4).round().rem_euclid(8.0) as usize;
        Octant::ALL[k]
    }

    /// Actuator sweep across the grid (index = row * 3 + col, row 0 at the far/north edge).
    pub fn line(self) -> [u8; 3] {
        match self {
            Octant::East => [3, 4, 5],
            Octant::NorthEast => [6, 4, 2],
            Octant::North => [7, 4, 1],
            Octant::NorthWest => [8, 4, 0],
            Octant::West => [5, 4, 3],
            Octant::SouthWest => [2, 4, 6],
            Octant::South => [1, 4, 7],
            Octant::SouthEast => [0, 4, 8],
        }
    }

    pub fn from_line(first: u8, last: u8) -> Option<Octant> {
        Octant::ALL
            .into_iter()
            .find(|o| o.line()[0] == first && o.line()[2] == last)
    }
}

/// Vertical gradient bucket: 1 = down, 2 = level, 3 = up.
pub fn gradient_level(z: f64) -> u8 {
    if z < -1.0 / 3.0 {
        1
    } else if z > 1.0 / 3.0 {
        3
    } else {
        2
    }
}

pub const LEVEL_AMPLITUDES: [f64; 3] = [0.33, 0.66, 1.0];

fn level_from_amplitude(a: f64) -> Option<u8> {
    LEVEL_AMPLITUDES
        .iter()
        .position(|l| (l - a).abs() < 1e-9)
        .map(|i| i as u8 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VibroTiming {
    pub pulse_ms: u32,
    pub pulse_gap_ms: u32,
    pub sweep_gap_ms: u32,
    pub atm_duration_ms: u32,
    pub atm_onset_ms: u32,
}

impl Default for VibroTiming {
    fn default() -> Self {
        VibroTiming {
            pulse_ms: 60,
            pulse_gap_ms: 40,
            sweep_gap_ms: 200,
            atm_duration_ms: 120,
            atm_onset_ms: 60,
        }
    }
}

pub const MAX_PATTERN_MS: u32 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibroFrame {
    pub actuator: u8,
    pub start_ms: u32,
    pub duration_ms: u32,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VibroPattern {
    pub mode: VibroMode,
    pub frames: Vec<VibroFrame>,
}

impl VibroPattern {
    pub fn total_ms(&self) -> u32 {
        self.frames
            .iter()
            .map(|f| f.start_ms + f.duration_ms)
            .max()
            .unwrap_or(0)
    }

    /// Frames as a bare JSON array, the format consumed by actuator drivers.
    pub fn frames_json(&self) -> String {
        serde_json::to_string(&self.frames).expect("frames serialize")
    }
}

/// Vibro pattern for the translational part of a twist, or `None` when it
/// has no translation.
pub fn encode_twist(direction: &Twist, mode: VibroMode) -> Option<VibroPattern> {
    let v = direction.linear;
    let n = v.norm();
    if n < 1e-9 {
        return None;
    }
    encode_direction((v / n).into(), mode).ok()
}

pub fn encode_direction(direction: [f64; 3], mode: VibroMode) -> Result<VibroPattern, CueError> {
    encode_direction_with(direction, mode, &VibroTiming::default())
}

pub fn encode_direction_with(direction: [f64; 3], mode: VibroMode, t: &VibroTiming) -> Result<VibroPattern, CueError> {
    let [x, y, z] = direction;
    let norm = (x * x + y * y + z * z).sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
        return Err(CueError::InvalidDirection(norm));
    }
    let octant = Octant::from_horizontal(x, y);
    let level = gradient_level(z);
    let line = octant.line();
    let amp = LEVEL_AMPLITUDES[level as usize - 1];
    let mut frames = Vec::new();
    match mode {
        VibroMode::Atm => {
            for (i, a) in line.into_iter().enumerate() {
                frames.push(VibroFrame {
                    actuator: a,
                    start_ms: i as u32 * t.atm_onset_ms,
                    duration_ms: t.atm_duration_ms,
                    amplitude: amp,
                });
            }
        }
        VibroMode::Rabbit | VibroMode::Dual => {
            let amplitude = if mode == VibroMode::Dual { amp } else { 1.0 };
            let sweep = 3 * t.pulse_ms + 2 * t.pulse_gap_ms;
            for r in 0..u32::from(level) {
                let base = r * (sweep + t.sweep_gap_ms);
                for (i, a) in line.into_iter().enumerate() {
                    frames.push(VibroFrame {
                        actuator: a,
                        start_ms: base + i as u32 * (t.pulse_ms + t.pulse_gap_ms),
                        duration_ms: t.pulse_ms,
                        amplitude,
                    });
                }
            }
        }
    }
    let pattern = VibroPattern { mode, frames };
    if pattern.total_ms() > MAX_PATTERN_MS {
        return Err(CueError::Malformed(format!(
            "pattern lasts {} ms, limit is {MAX_PATTERN_MS}",
            pattern.total_ms()
        )));
    }
    Ok(pattern)
}

pub fn decode_pattern(pattern: &VibroPattern) -> Result<(Octant, u8), CueError> {
    decode_pattern_with(pattern, &VibroTiming::default())
}

pub fn decode_pattern_with(pattern: &VibroPattern, t: &VibroTiming) -> Result<(Octant, u8), CueError> {
    let frames = &pattern.frames;
    if frames.is_empty() || !frames.len().is_multiple_of(3) {
        return Err(CueError::Malformed(format!("{} frames is not a whole number of sweeps", frames.len())));
    }
    if frames.windows(2).any(|w| w[0].start_ms > w[1].start_ms) {
        return Err(CueError::Malformed("frames are not time-sorted".into()));
    }
    let sweeps: Vec<&[VibroFrame]> = frames.chunks(3).collect();
    let line = [sweeps[0][0].actuator, sweeps[0][1].actuator, sweeps[0][2].actuator];
    let octant = Octant::from_line(line[0], line[2])
        .filter(|o| o.line() == line)
        .ok_or_else(|| CueError::Malformed(format!("actuators {line:?} are not a grid line")))?;
    if sweeps
        .iter()
        .any(|s| s.iter().map(|f| f.actuator).ne(line.iter().copied()))
    {
        return Err(CueError::Malformed("sweeps use different lines".into()));
    }
    let amplitude = frames[0].amplitude;
    if frames.iter().any(|f| f.amplitude != amplitude) {
        return Err(CueError::Malformed("amplitude varies within the pattern".into()));
    }
    let amp_level = level_from_amplitude(amplitude);
    let count = sweeps.len() as u8;
    let level = match pattern.mode {
        VibroMode::Atm => {
            if count != 1 || frames.iter().any(|f| f.duration_ms != t.atm_duration_ms) {
                return Err(CueError::Malformed("atm pattern must be one sweep of long activations".into()));
            }
            amp_level.ok_or_else(|| CueError::Malformed(format!("amplitude {amplitude} is not a level")))?
        }
        VibroMode::Rabbit | VibroMode::Dual => {
            if frames.iter().any(|f| f.duration_ms != t.pulse_ms) {
                return Err(CueError::Malformed("pulse duration mismatch".into()));
            }
            if pattern.mode == VibroMode::Rabbit && amplitude != 1.0 {
                return Err(CueError::Malformed("rabbit pulses run at full amplitude".into()));
            }
            if pattern.mode == VibroMode::Dual && amp_level != Some(count) {
                return Err(CueError::Malformed("pulse count and intensity disagree".into()));
            }
            count
        }
    };
    if !(1..=3).contains(&level) {
        return Err(CueError::Malformed(format!("level {level} out of range")));
    }
    Ok((octant, level))
}
