//! JSON messages exchanged over the `shared-dof.v1` WebSocket subprotocol.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ActiveMapping, Buttons, ControllerConfig, Event, InputFrame, InputSource, Session};
use crate::cue::{encode_twist, make_cues, CueSet, VibroMode, VibroPattern};
use crate::geometry::Pose;
use crate::intent::MappingSuggestion;
use crate::scene::{builtin_scenario, load_scenario, Phase, Scenario, ScenarioError, SceneObject, TargetZone};
use crate::telemetry::Metrics;

pub const PROTOCOL_VERSION: u32 = 1;
pub const SUBPROTOCOL: &str = "shared-dof.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    /// Name of a built-in scenario.
    Named(String),
    Inline(Box<Scenario>),
}

impl ScenarioRef {
    pub fn resolve(&self) -> Result<Scenario, ScenarioError> {
        match self {
            ScenarioRef::Named(name) => {
                let text = builtin_scenario(name)
                    .ok_or_else(|| ScenarioError::Validation(format!("unknown scenario {name:?}")))?;
                load_scenario(text)
            }
            ScenarioRef::Inline(s) => {
                s.validate()?;
                Ok((**s).clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        protocol_version: u32,
    },
    CreateSession {
        scenario: ScenarioRef,
        #[serde(default)]
        config: ControllerConfig,
    },
    Input {
        #[serde(default)]
        session_id: Option<String>,
        axes: [f64; 2],
        #[serde(default)]
        buttons: Buttons,
    },
    PerspectiveRequest {
        #[serde(default)]
        session_id: Option<String>,
    },
    Pause {
        #[serde(default)]
        session_id: Option<String>,
    },
    Resume {
        #[serde(default)]
        session_id: Option<String>,
    },
}

impl ClientMessage {
    pub const TYPES: [&'static str; 6] = [
        "hello",
        "create_session",
        "input",
        "perspective_request",
        "pause",
        "resume",
    ];

    pub fn input_frame(axes: [f64; 2], buttons: Buttons) -> InputFrame {
        InputFrame {
            axes,
            buttons,
            source: InputSource::Human,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: String,
    pub scenario: String,
    pub config: ControllerConfig,
    pub tick_rate_hz: f64,
}

/// Metrics accumulated since the session started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveMetrics {
    pub sim_time_s: f64,
    pub user_switches: u64,
    pub auto_switches: u64,
    pub path_length_m: f64,
    pub idle_time_s: f64,
    pub perspective_changes: u64,
    pub completion_time_s: Option<f64>,
}

impl LiveMetrics {
    pub fn from_metrics(m: &Metrics, sim_time_s: f64) -> Self {
        LiveMetrics {
            sim_time_s,
            user_switches: m.user_switches,
            auto_switches: m.auto_switches,
            path_length_m: m.path_length_m,
            idle_time_s: m.idle_time_s,
            perspective_changes: m.perspective_changes,
            completion_time_s: m.completion_time_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub session_id: String,
    pub tick: u64,
    pub pose: Pose,
    pub objects: Vec<SceneObject>,
    pub zones: Vec<TargetZone>,
    pub phase: Phase,
    pub mapping: ActiveMapping,
    pub exposed_suggestion: Option<MappingSuggestion>,
    pub cues: CueSet,
    /// Dual-mode pattern for the suggested direction when one is shown,
    /// otherwise for the active one.
    pub vibro: Option<VibroPattern>,
    pub metrics_so_far: LiveMetrics,
    pub paused: bool,
}

impl StateMessage {
    pub fn capture(session_id: &str, session: &Session, metrics: &Metrics, paused: bool) -> Self {
        let st = &session.state;
        let cues = make_cues(st, &session.scenario, &session.config);
        StateMessage {
            session_id: session_id.to_string(),
            tick: st.tick,
            pose: st.gripper.clone(),
            objects: st.world.objects.clone(),
            zones: st.world.zones.clone(),
            phase: st.task.phase,
            mapping: st.mapping.clone(),
            exposed_suggestion: st.exposed_suggestion().cloned(),
            vibro: encode_twist(&cues.suggested.as_ref().unwrap_or(&cues.current).direction, VibroMode::Dual),
            cues,
            metrics_so_far: LiveMetrics::from_metrics(metrics, st.sim_time(session.dt())),
            paused,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Unsupported protocol version.
    Version,
    /// Unrecognised `type` field.
    UnknownType,
    /// Malformed or out-of-order message; the connection is closed.
    Protocol,
    /// Session message sent before `create_session`.
    NoSession,
    /// Rejected scenario or controller config.
    InvalidSession,
    /// Input rejected by the controller, e.g. axes out of range.
    InvalidInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        protocol_version: u32,
    },
    SessionCreated {
        session_id: String,
        descriptor: SessionDescriptor,
    },
    State(Box<StateMessage>),
    Event {
        session_id: String,
        tick: u64,
        event: Event,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session_id: Option<String>,
        code: ErrorCode,
        message: String,
    },
    Bye {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session_id: Option<String>,
        reason: String,
    },
}

impl ServerMessage {
    pub fn error(session_id: Option<&str>, code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            session_id: session_id.map(str::to_string),
            code,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("malformed message: {0}")]
    Malformed(String),
}

impl ProtocolError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ProtocolError::UnknownType(_) => ErrorCode::UnknownType,
            ProtocolError::Malformed(_) => ErrorCode::Protocol,
        }
    }
}

/// Parse a client text frame, separating unknown types from malformed ones.
pub fn parse_client(text: &str) -> Result<ClientMessage, ProtocolError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let kind = value
        .get("type")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| ProtocolError::Malformed("missing string field \"type\"".into()))?;
    if !ClientMessage::TYPES.contains(&kind) {
        return Err(ProtocolError::UnknownType(kind.to_string()));
    }
    serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Variant;

    #[test]
    fn parse_hello() {
        assert_eq!(
            parse_client(r#"{"type":"hello","protocol_version":1}"#),
            Ok(ClientMessage::Hello { protocol_version: 1 })
        );
    }

    #[test]
    fn unknown_vs_malformed() {
        assert_eq!(
            parse_client(r#"{"type":"teleport"}"#),
            Err(ProtocolError::UnknownType("teleport".into()))
        );
        assert!(matches!(parse_client("{not json"), Err(ProtocolError::Malformed(_))));
        assert!(matches!(parse_client(r#"{"axes":[0,0]}"#), Err(ProtocolError::Malformed(_))));
        assert!(matches!(
            parse_client(r#"{"type":"input","axes":"left"}"#),
            Err(ProtocolError::Malformed(_))
        ));
    }

    #[test]
    fn create_session_partial_config() {
        let m = parse_client(
            r#"{"type":"create_session","scenario":"canonical","config":{"variant":"admc_idle","idle_timeout":2.0}}"#,
        )
        .unwrap();
        let ClientMessage::CreateSession { scenario, config } = m else {
            panic!("wrong variant")
        };
        assert_eq!(scenario, ScenarioRef::Named("canonical".into()));
        assert_eq!(config.variant, Variant::AdmcIdle);
        assert_eq!(config.idle_timeout, 2.0);
        assert_eq!(config.threshold_angle, 30.0);
        assert_eq!(scenario.resolve().unwrap().name, "canonical");
    }

    #[test]
    fn input_buttons_default() {
        let m = parse_client(r#"{"type":"input","axes":[0.5,-1]}"#).unwrap();
        assert_eq!(
            m,
            ClientMessage::Input {
                session_id: None,
                axes: [0.5, -1.0],
                buttons: Buttons::default()
            }
        );
    }

    #[test]
    fn server_messages_are_tagged() {
        let e = ServerMessage::error(None, ErrorCode::Version, "nope");
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["type"], "error");
        assert_eq!(v["code"], "version");
        assert!(v.get("session_id").is_none());
        let ev = ServerMessage::Event {
            session_id: "s1".into(),
            tick: 3,
            event: Event::ModeCycled { mode: 2 },
        };
        let v: serde_json::Value = serde_json::from_str(&ev.to_json()).unwrap();
        assert_eq!(v["type"], "event");
        assert_eq!(v["event"]["type"], "ModeCycled");
    }

    #[test]
    fn unknown_builtin_scenario() {
        assert!(ScenarioRef::Named("nowhere".into()).resolve().is_err());
    }
}
