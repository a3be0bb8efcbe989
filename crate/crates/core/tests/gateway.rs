use std::collections::HashMap;
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use fan_core::pipeline::{gateway_serve, PipelineConfig, Processor, SceneSource, ServeHandle};
use fan_core::providers::{scenarios, CameraModel, Scene};
use serde_json::Value;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn start() -> ServeHandle {
    let scene = Scene::new(scenarios::stationary(0, 0.1)).unwrap();
    let source = SceneSource::new(scene, CameraModel::default(), true);
    let processor = Processor::new(PipelineConfig::default(), Vec::new(), 0).unwrap();
    gateway_serve(Box::new(source), processor, "127.0.0.1:0").unwrap()
}

fn connect(addr: SocketAddr) -> Client {
    let (ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    }
    ws
}

fn next(ws: &mut Client) -> (String, Value) {
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => {
                let v = serde_json::from_str(t.as_str()).unwrap();
                return (t.to_string(), v);
            }
            _ => continue,
        }
    }
}

fn next_frame(ws: &mut Client) -> (String, Value) {
    loop {
        let (t, v) = next(ws);
        if v["type"] == "frame" {
            return (t, v);
        }
    }
}

#[test]
fn port_zero_binds_and_streams_frames() {
    let handle = start();
    assert_ne!(handle.local_addr().port(), 0);
    let mut ws = connect(handle.local_addr());
    let (_, f) = next_frame(&mut ws);
    assert_eq!(f["width"], 160);
    assert_eq!(f["height"], 120);
    assert_eq!(f["status"], "SEARCHING");
    assert!(!f["png"].as_str().unwrap().is_empty());
    handle.shutdown();
}

#[test]
fn click_annotates_within_two_frames() {
    let handle = start();
    let mut ws = connect(handle.local_addr());
    let (_, f) = next_frame(&mut ws);
    let before = f["seq"].as_u64().unwrap();
    ws.send(Message::text(r#"{"type":"click","x":80,"y":60,"label":"robot"}"#)).unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        assert!(Instant::now() < deadline, "no annotation");
        let (_, f) = next_frame(&mut ws);
        let seq = f["seq"].as_u64().unwrap();
        if let Some(a) = f["annotations"].as_array().and_then(|a| a.first()) {
            assert_eq!(a["label"], "robot");
            let b: Vec<u64> = a["bbox"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
            assert!(b[0] <= 80 && 80 < b[0] + b[2] && b[1] <= 60 && 60 < b[1] + b[3], "{b:?}");
            assert_eq!(f["status"], "ACTIVE");
            assert!(seq - before <= 2, "annotation at seq {seq}, click after {before}");
            break;
        }
    }
    handle.shutdown();
}

#[test]
fn malformed_messages_get_bad_message() {
    let handle = start();
    let mut ws = connect(handle.local_addr());
    for bad in ["not json", r#"{"type":"wave"}"#, r#"{"type":"click","x":1}"#] {
        ws.send(Message::text(bad)).unwrap();
        loop {
            let (_, v) = next(&mut ws);
            if v["type"] == "error" {
                assert_eq!(v["code"], "BAD_MESSAGE", "{bad}");
                break;
            }
        }
    }
    ws.send(Message::text(r#"{"type":"click","x":500,"y":0,"label":"a"}"#)).unwrap();
    loop {
        let (_, v) = next(&mut ws);
        if v["type"] == "error" {
            assert_eq!(v["code"], "OUT_OF_BOUNDS");
            break;
        }
    }
    // the session survives bad input
    next_frame(&mut ws);
    handle.shutdown();
}

#[test]
fn clients_receive_identical_broadcasts() {
    let handle = start();
    let mut a = connect(handle.local_addr());
    let mut b = connect(handle.local_addr());
    let mut seen: HashMap<u64, String> = HashMap::new();
    for _ in 0..5 {
        let (t, v) = next_frame(&mut a);
        seen.insert(v["seq"].as_u64().unwrap(), t);
    }
    let mut matched = 0;
    for _ in 0..10 {
        let (t, v) = next_frame(&mut b);
        if let Some(other) = seen.get(&v["seq"].as_u64().unwrap()) {
            assert_eq!(other, &t);
            matched += 1;
        }
    }
    assert!(matched >= 3, "only {matched} shared frames");
    handle.shutdown();
}
