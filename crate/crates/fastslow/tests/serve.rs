use std::io::Write;
use std::net::TcpStream;
use std::time::{Duration, Instant};

use fastslow::serve::{start, OwnedPilot, ServeOptions, ServerHandle};
use fastslow::Error;
use fastslow_core::slow::{LlmBackend, MemoryBank, SlowConfig, SlowDirector, SlowSystem, StubBackend};
use fastslow_core::trainer::Baseline;
use fastslow_core::ScenarioConfig;
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{connect, Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

const INSTRUCTION: &str = "I'm in a hurry to get to work, I want to drive faster";

fn server(baseline: Baseline, seed: u64, speed: f64) -> ServerHandle {
    let backend: Box<dyn LlmBackend + Send> = Box::new(StubBackend);
    let system = SlowSystem::new(backend, MemoryBank::with_capacity(16), SlowConfig::default());
    let options = ServeOptions { port: 0, speed, seed, ..Default::default() };
    start(OwnedPilot::Baseline(baseline), ScenarioConfig::two_way(0), SlowDirector::new(system, None), options).unwrap()
}

fn client(h: &ServerHandle) -> Client {
    let (ws, _) = connect(h.url()).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    }
    ws
}

fn next(ws: &mut Client) -> Value {
    loop {
        match ws.read().expect("message") {
            Message::Text(t) => return serde_json::from_str(&t).unwrap(),
            Message::Close(_) => panic!("closed"),
            _ => {}
        }
    }
}

fn send(ws: &mut Client, kind: &str, payload: Value) {
    let msg = json!({"v": "v1", "session": "", "seq": 0, "type": kind, "payload": payload});
    ws.send(Message::text(msg.to_string())).unwrap();
}

/// Read until `pred` holds, failing after `limit` messages.
fn until(ws: &mut Client, limit: usize, pred: impl Fn(&Value) -> bool) -> Value {
    for _ in 0..limit {
        let m = next(ws);
        if pred(&m) {
            return m;
        }
    }
    panic!("condition not met within {limit} messages");
}

#[test]
fn joining_client_gets_a_snapshot_then_increasing_sequence_numbers() {
    let h = server(Baseline::KeepLane, 1, 50.0);
    let mut ws = client(&h);
    let first = next(&mut ws);
    assert_eq!(first["v"], "v1");
    assert_eq!(first["type"], "state");
    assert_eq!(first["payload"]["frame"], "snapshot");
    assert_eq!(first["session"], h.hub.session());
    let mut seq = first["seq"].as_u64().unwrap();
    let mut kinds = std::collections::BTreeSet::new();
    for _ in 0..150 {
        let m = next(&mut ws);
        let s = m["seq"].as_u64().unwrap();
        assert!(s > seq, "{s} after {seq}");
        seq = s;
        kinds.insert(m["type"].as_str().unwrap().to_string());
        if m["type"] == "state" {
            assert!(m["payload"]["vehicles"].as_array().unwrap().iter().any(|v| v["is_ego"] == true));
        }
    }
    assert!(kinds.contains("state") && kinds.contains("metrics"), "{kinds:?}");
    h.stop().unwrap();
}

#[test]
fn instruction_yields_a_directive_within_two_decisions() {
    let h = server(Baseline::KeepLane, 2, 50.0);
    let mut ws = client(&h);
    next(&mut ws);
    send(&mut ws, "instruction", json!({"text": INSTRUCTION}));
    let echo = until(&mut ws, 500, |m| m["type"] == "instruction");
    assert_eq!(echo["payload"]["text"], INSTRUCTION);
    let mut decisions = 0;
    loop {
        let m = next(&mut ws);
        if m["type"] == "directive" {
            assert_eq!(m["payload"]["source"], "llm");
            assert_eq!(m["payload"]["directive"]["speed_intent"], 1);
            assert_eq!(m["payload"]["instruction"], INSTRUCTION);
            break;
        }
        if m["type"] == "state" && m["payload"]["frame"] == "decision" {
            decisions += 1;
            assert!(decisions <= 2, "no directive after {decisions} decisions");
        }
    }
    h.stop().unwrap();
}

/// Tick frames of the episode started by a reset to `seed`.
fn episode_after_reset(h: &ServerHandle, seed: u64, frames: usize) -> Vec<Value> {
    let mut ws = client(h);
    next(&mut ws);
    send(&mut ws, "control", json!({"command": "reset", "seed": seed}));
    let start =
        until(&mut ws, 2000, |m| m["type"] == "state" && m["payload"]["seed"] == seed && m["payload"]["tick"] == 0);
    let episode = start["payload"]["episode"].clone();
    let mut out = vec![start["payload"]["vehicles"].clone()];
    while out.len() < frames {
        let m = next(&mut ws);
        if m["type"] == "state" {
            assert_eq!(m["payload"]["episode"], episode);
            out.push(json!([m["payload"]["tick"], m["payload"]["vehicles"], m["payload"]["reward"]]));
        }
    }
    out
}

#[test]
fn reset_with_a_seed_is_reproducible() {
    let a = server(Baseline::Random, 3, 200.0);
    let first = episode_after_reset(&a, 1000, 60);
    a.stop().unwrap();
    let b = server(Baseline::Random, 9, 200.0);
    let second = episode_after_reset(&b, 1000, 60);
    b.stop().unwrap();
    assert_eq!(first, second);
}

#[test]
fn pause_stops_the_stream_and_resume_restarts_it() {
    let h = server(Baseline::KeepLane, 4, 50.0);
    let mut ws = client(&h);
    next(&mut ws);
    send(&mut ws, "control", json!({"command": "pause"}));
    let paused = until(&mut ws, 500, |m| m["type"] == "state" && m["payload"]["paused"] == true);
    let tick = paused["payload"]["tick"].clone();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_millis(300))).unwrap();
    }
    assert!(ws.read().is_err(), "messages while paused");
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    }
    send(&mut ws, "control", json!({"command": "resume"}));
    let resumed = until(&mut ws, 50, |m| m["type"] == "state" && m["payload"]["paused"] == false);
    assert_eq!(resumed["payload"]["tick"], tick);
    until(&mut ws, 50, |m| m["type"] == "state" && m["payload"]["tick"].as_u64() > tick.as_u64());
    h.stop().unwrap();
}

#[test]
fn misbehaving_clients_do_not_disturb_others() {
    let h = server(Baseline::KeepLane, 5, 50.0);
    let mut good = client(&h);
    next(&mut good);

    let mut bad = client(&h);
    bad.send(Message::text("not json")).unwrap();
    bad.send(Message::text(
        json!({"v": "v9", "session": "", "seq": 0, "type": "instruction", "payload": {"text": "x"}}).to_string(),
    ))
    .unwrap();
    bad.send(Message::text(json!({"v": "v1", "session": "", "seq": 0, "type": "metrics", "payload": {}}).to_string()))
        .unwrap();
    bad.send(Message::binary(vec![0xff, 0x00])).unwrap();
    drop(bad);

    let mut raw = TcpStream::connect(h.addr).unwrap();
    raw.write_all(b"GET / HTTP/1.0\r\n\r\ngarbage").unwrap();
    drop(raw);

    let mut seq = 0;
    for _ in 0..100 {
        let m = next(&mut good);
        let s = m["seq"].as_u64().unwrap();
        assert!(s > seq);
        seq = s;
        assert_ne!(m["type"], "instruction", "a rejected message was acted on");
    }
    let deadline = Instant::now() + Duration::from_secs(5);
    while h.hub.clients() != 1 {
        assert!(Instant::now() < deadline, "{} clients registered", h.hub.clients());
        std::thread::sleep(Duration::from_millis(20));
    }
    h.stop().unwrap();
}

#[test]
fn a_taken_port_is_reported() {
    let h = server(Baseline::KeepLane, 6, 1.0);
    let backend: Box<dyn LlmBackend + Send> = Box::new(StubBackend);
    let system = SlowSystem::new(backend, MemoryBank::with_capacity(4), SlowConfig::default());
    let options = ServeOptions { port: h.addr.port(), ..Default::default() };
    let err = start(
        OwnedPilot::Baseline(Baseline::KeepLane),
        ScenarioConfig::highway(0),
        SlowDirector::new(system, None),
        options,
    )
    .err()
    .unwrap();
    assert!(matches!(err, Error::Serve(ref m) if m.contains("in use")), "{err}");
    h.stop().unwrap();
}
