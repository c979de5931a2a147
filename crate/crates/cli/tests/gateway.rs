use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use shared_dof_cli::server::{serve, ServeOptions};
use shared_dof_core::control::{ControllerConfig, Session, Variant};
use shared_dof_core::protocol::{StateMessage, SUBPROTOCOL};
use shared_dof_core::sim_user::{SimUser, UserKind, UserPolicy};
use shared_dof_core::{load_scenario, run_headless, scene};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::client::IntoClientRequest;
use tokio_tungstenite::tungstenite::http::HeaderValue;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

async fn start(tick_rate_hz: f64, idle_timeout: Duration) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, ServeOptions { tick_rate_hz, idle_timeout }));
    addr
}

async fn fast_server() -> SocketAddr {
    start(500.0, Duration::from_secs(30)).await
}

struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    protocol: Option<String>,
}

impl Client {
    async fn connect(addr: SocketAddr) -> Client {
        let mut req = format!("ws://{addr}/session").into_client_request().unwrap();
        req.headers_mut()
            .insert("Sec-WebSocket-Protocol", HeaderValue::from_static(SUBPROTOCOL));
        let (ws, resp) = tokio_tungstenite::connect_async_with_config(req, None, true).await.unwrap();
        let protocol = resp
            .headers()
            .get("Sec-WebSocket-Protocol")
            .map(|v| v.to_str().unwrap().to_string());
        Client { ws, protocol }
    }

    async fn greeted(addr: SocketAddr) -> Client {
        let mut c = Client::connect(addr).await;
        c.send(json!({"type": "hello", "protocol_version": 1})).await;
        assert_eq!(c.recv().await.unwrap()["type"], "hello");
        c
    }

    async fn send(&mut self, v: Value) {
        self.ws.send(Message::text(v.to_string())).await.unwrap();
    }

    /// Next text message, or `None` once the server closes.
    async fn recv(&mut self) -> Option<Value> {
        loop {
            let msg = tokio::time::timeout(Duration::from_secs(10), self.ws.next())
                .await
                .expect("server went quiet");
            match msg {
                Some(Ok(Message::Text(t))) => return Some(serde_json::from_str(t.as_str()).unwrap()),
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return None,
                Some(Ok(_)) => continue,
            }
        }
    }

    async fn recv_type(&mut self, kind: &str) -> Value {
        loop {
            let v = self.recv().await.expect("connection closed");
            if v["type"] == kind {
                return v;
            }
        }
    }

    async fn create(&mut self, scenario: &str, variant: Variant) -> String {
        let config = serde_json::to_value(ControllerConfig::with_variant(variant)).unwrap();
        self.send(json!({"type": "create_session", "scenario": scenario, "config": config}))
            .await;
        let created = self.recv_type("session_created").await;
        created["session_id"].as_str().unwrap().to_string()
    }
}

#[tokio::test]
async fn subprotocol_is_echoed() {
    let addr = fast_server().await;
    let c = Client::connect(addr).await;
    assert_eq!(c.protocol.as_deref(), Some(SUBPROTOCOL));
}

#[tokio::test]
async fn wrong_version_is_rejected() {
    let addr = fast_server().await;
    let mut c = Client::connect(addr).await;
    c.send(json!({"type": "hello", "protocol_version": 99})).await;
    let err = c.recv().await.unwrap();
    assert_eq!(err["type"], "error");
    assert_eq!(err["code"], "version");
    assert!(c.recv().await.is_none());
}

#[tokio::test]
async fn hello_must_come_first() {
    let addr = fast_server().await;
    let mut c = Client::connect(addr).await;
    c.send(json!({"type": "input", "axes": [0, 0]})).await;
    assert_eq!(c.recv().await.unwrap()["code"], "protocol");
    assert!(c.recv().await.is_none());
}

#[tokio::test]
async fn unknown_type_keeps_connection() {
    let addr = fast_server().await;
    let mut c = Client::greeted(addr).await;
    c.send(json!({"type": "teleport"})).await;
    assert_eq!(c.recv().await.unwrap()["code"], "unknown_type");
    c.send(json!({"type": "input", "axes": [0.1, 0]})).await;
    let err = c.recv().await.unwrap();
    assert_eq!(err["code"], "no_session");
}

#[tokio::test]
async fn malformed_closes() {
    let addr = fast_server().await;
    let mut c = Client::greeted(addr).await;
    c.ws.send(Message::text("{\"type\": ")).await.unwrap();
    assert_eq!(c.recv().await.unwrap()["code"], "protocol");
    assert!(c.recv().await.is_none());
}

#[tokio::test]
async fn invalid_session_and_input() {
    let addr = fast_server().await;
    let mut c = Client::greeted(addr).await;
    c.send(json!({"type": "create_session", "scenario": "atlantis"})).await;
    assert_eq!(c.recv().await.unwrap()["code"], "invalid_session");
    let sid = c.create("canonical", Variant::Classic).await;
    c.send(json!({"type": "input", "axes": [3.0, 0]})).await;
    assert_eq!(c.recv_type("error").await["code"], "invalid_input");
    c.send(json!({"type": "pause", "session_id": "s-other"})).await;
    assert_eq!(c.recv_type("error").await["code"], "no_session");
    c.send(json!({"type": "create_session", "scenario": "canonical"})).await;
    let err = c.recv_type("error").await;
    assert_eq!(err["code"], "invalid_session");
    assert_eq!(err["session_id"], sid.as_str());
}

#[tokio::test]
async fn idle_variant_adopts_once_without_input() {
    let addr = fast_server().await;
    let mut c = Client::greeted(addr).await;
    let sid = c.create("canonical", Variant::AdmcIdle).await;
    let mut adoptions = Vec::new();
    loop {
        let v = c.recv().await.unwrap();
        if v["type"] == "event" && v["event"]["type"] == "MappingAdopted" {
            assert_eq!(v["session_id"], sid.as_str());
            assert_eq!(v["event"]["by"], "auto");
            adoptions.push(v["tick"].as_u64().unwrap());
        }
        if v["type"] == "state" && v["tick"].as_u64().unwrap() >= 300 {
            break;
        }
    }
    assert_eq!(adoptions, vec![100]);
}

#[tokio::test]
async fn concurrent_sessions_are_isolated() {
    let addr = fast_server().await;
    let mut a = Client::greeted(addr).await;
    let mut b = Client::greeted(addr).await;
    let sa = a.create("canonical", Variant::AdmcIdle).await;
    let sb = b.create("canonical", Variant::AdmcIdle).await;
    assert_ne!(sa, sb);
    let mut streams = Vec::new();
    for c in [&mut a, &mut b] {
        let mut states = Vec::new();
        while states.len() < 120 {
            let mut v = c.recv_type("state").await;
            v.as_object_mut().unwrap().remove("session_id");
            states.push(v);
        }
        streams.push(states);
    }
    assert_eq!(streams[0], streams[1]);
}

#[tokio::test]
async fn served_run_matches_headless() {
    let addr = start(40.0, Duration::from_secs(30)).await;
    let scenario = load_scenario(scene::CANONICAL_SCENARIO).unwrap();
    let cfg = ControllerConfig::with_variant(Variant::AdmcContinuous);
    let policy = UserPolicy::new(UserKind::NoisyGreedy);
    let headless = run_headless(&scenario, &cfg, policy, 3, 10_000).unwrap();
    assert!(headless.success());

    let mut c = Client::greeted(addr).await;
    c.create("canonical", Variant::AdmcContinuous).await;
    let initial: StateMessage = serde_json::from_value(c.recv_type("state").await).unwrap();
    assert_eq!(initial.tick, 0);

    let mut local = Session::new(scenario.clone(), cfg).unwrap();
    let mut user = SimUser::new(policy, 3);
    let mut events = Vec::new();
    while !local.state.is_done() {
        let f = user.decide(&local.state, &scenario, &cfg);
        c.send(json!({"type": "input", "axes": f.axes, "buttons": f.buttons}))
            .await;
        local.advance(&f).unwrap();
        let state = loop {
            let v = c.recv().await.expect("closed early");
            match v["type"].as_str().unwrap() {
                "event" => events.push((v["tick"].as_u64().unwrap(), v["event"].clone())),
                "state" => break v,
                other => panic!("unexpected {other}"),
            }
        };
        // Compare as JSON: decoding a quaternion renormalizes it.
        let tick = state["tick"].as_u64().unwrap();
        let rec = &headless.log.records[tick as usize - 1];
        assert_eq!(tick, local.state.tick);
        assert_eq!(state["pose"], serde_json::to_value(&rec.gripper).unwrap());
        assert_eq!(state["mapping"], serde_json::to_value(&local.state.mapping).unwrap());
        assert_eq!(state["phase"], serde_json::to_value(rec.phase).unwrap());
    }
    assert_eq!(c.recv().await.unwrap()["reason"], "done");
    let logged: Vec<(u64, Value)> = headless
        .log
        .records
        .iter()
        .flat_map(|r| r.events.iter().map(move |e| (r.tick, serde_json::to_value(e).unwrap())))
        .collect();
    assert_eq!(events, logged);
}

#[tokio::test]
async fn pause_freezes_and_resume_continues() {
    let addr = fast_server().await;
    let mut c = Client::greeted(addr).await;
    c.create("canonical", Variant::Classic).await;
    for _ in 0..5 {
        c.recv_type("state").await;
    }
    c.send(json!({"type": "pause"})).await;
    let paused = loop {
        let v = c.recv_type("state").await;
        if v["paused"] == true {
            break v;
        }
    };
    let quiet = tokio::time::timeout(Duration::from_millis(150), c.ws.next()).await;
    assert!(quiet.is_err(), "no messages while paused");
    c.send(json!({"type": "resume"})).await;
    let resumed = c.recv_type("state").await;
    assert_eq!(resumed["paused"], false);
    assert_eq!(resumed["tick"], paused["tick"]);
    let next = c.recv_type("state").await;
    assert_eq!(next["tick"].as_u64(), paused["tick"].as_u64().map(|t| t + 1));
}

#[tokio::test]
async fn perspective_request_changes_view_only() {
    let addr = fast_server().await;
    let mut c = Client::greeted(addr).await;
    c.create("deadlock", Variant::AdmcRequest).await;
    let before = c.recv_type("state").await;
    c.send(json!({"type": "perspective_request"})).await;
    let ev = loop {
        let v = c.recv_type("event").await;
        if v["event"]["type"] == "PerspectiveChanged" {
            break v;
        }
    };
    assert_eq!(ev["event"]["requested"], true);
    assert_eq!(ev["event"]["attempt"], 0);
    let after = c.recv_type("state").await;
    assert_eq!(after["pose"]["position"], before["pose"]["position"]);
    assert_eq!(after["metrics_so_far"]["perspective_changes"], 1);
}

#[tokio::test]
async fn idle_connection_is_closed() {
    let addr = start(20.0, Duration::from_millis(200)).await;
    let mut c = Client::greeted(addr).await;
    let bye = c.recv().await.unwrap();
    assert_eq!(bye["type"], "bye");
    assert_eq!(bye["reason"], "idle");
    assert!(c.recv().await.is_none());
}
