//! JSON messages exchanged with console clients over websocket text frames.

use serde::{Deserialize, Serialize};

use super::engine::{Annotation, Command, PipelineStatus};
use super::timing::TimingSummary;
use crate::redetection::RecoveryMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame {
        seq: u64,
        width: u32,
        height: u32,
        /// Base64 PNG visualization.
        png: String,
        annotations: Vec<Annotation>,
        status: PipelineStatus,
        timings: TimingSummary,
    },
    Error {
        code: ErrorCode,
        detail: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadMessage,
    OutOfBounds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Click { x: u32, y: u32, label: String },
    Box { x: u32, y: u32, w: u32, h: u32, label: String },
    SetMode { mode: RecoveryMode },
    Redetect {},
    SetAlpha { alpha: f32 },
}

/// Why a client message was refused; sent back as an error message.
#[derive(Clone, Debug, PartialEq)]
pub struct Rejection {
    pub code: ErrorCode,
    pub detail: String,
}

impl Rejection {
    fn new(code: ErrorCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }

    pub fn into_message(self) -> ServerMessage {
        ServerMessage::Error {
            code: self.code,
            detail: self.detail,
        }
    }
}

impl ServerMessage {
    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        Self::Error {
            code,
            detail: detail.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, Rejection> {
        serde_json::from_str(text).map_err(|e| Rejection::new(ErrorCode::BadMessage, e.to_string()))
    }

    /// Checks coordinates and values against a `width` x `height` frame and
    /// converts to a pipeline command.
    pub fn into_command(self, width: u32, height: u32) -> Result<Command, Rejection> {
        let oob = |detail: String| Rejection::new(ErrorCode::OutOfBounds, detail);
        Ok(match self {
            ClientMessage::Click { x, y, label } => {
                if x >= width || y >= height {
                    return Err(oob(format!("click ({x}, {y}) outside {width}x{height}")));
                }
                Command::Click {
                    x: x as usize,
                    y: y as usize,
                    label,
                }
            }
            ClientMessage::Box { x, y, w, h, label } => {
                if w == 0 || h == 0 {
                    return Err(oob("box must have positive area".into()));
                }
                if x as u64 + w as u64 > width as u64 || y as u64 + h as u64 > height as u64 {
                    return Err(oob(format!("box ({x}, {y}, {w}, {h}) exceeds {width}x{height}")));
                }
                Command::Box {
                    x: x as usize,
                    y: y as usize,
                    w: w as usize,
                    h: h as usize,
                    label,
                }
            }
            ClientMessage::SetMode { mode } => Command::SetMode(mode),
            ClientMessage::Redetect {} => Command::Redetect,
            ClientMessage::SetAlpha { alpha } => {
                if !(-1.0..=1.0).contains(&alpha) {
                    return Err(oob(format!("alpha {alpha} outside [-1, 1]")));
                }
                Command::SetAlpha(alpha)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_round_trip() {
        let cases = [
            r#"{"type":"click","x":3,"y":4,"label":"car"}"#,
            r#"{"type":"box","x":1,"y":2,"w":3,"h":4,"label":"car"}"#,
            r#"{"type":"set_mode","mode":"TRACKER_ONLY"}"#,
            r#"{"type":"set_mode","mode":"HUMAN"}"#,
            r#"{"type":"set_mode","mode":"AUTOMATIC"}"#,
            r#"{"type":"redetect"}"#,
            r#"{"type":"set_alpha","alpha":0.5}"#,
        ];
        for c in cases {
            let m = ClientMessage::parse(c).unwrap();
            assert_eq!(serde_json::to_string(&m).unwrap(), c);
        }
    }

    #[test]
    fn malformed_is_bad_message() {
        for bad in ["{", r#"{"type":"wave"}"#, r#"{"type":"click","x":-1,"y":0,"label":"a"}"#, r#"{"type":"redetect","extra":1}"#] {
            assert_eq!(ClientMessage::parse(bad).unwrap_err().code, ErrorCode::BadMessage, "{bad}");
        }
    }

    #[test]
    fn bounds() {
        let click = ClientMessage::Click { x: 10, y: 0, label: "a".into() };
        assert_eq!(click.into_command(10, 10).unwrap_err().code, ErrorCode::OutOfBounds);
        let b = ClientMessage::Box { x: 5, y: 5, w: 5, h: 5, label: "a".into() };
        assert!(b.into_command(10, 10).is_ok());
        let b = ClientMessage::Box { x: 5, y: 5, w: 0, h: 5, label: "a".into() };
        assert!(b.into_command(10, 10).is_err());
        assert!(ClientMessage::SetAlpha { alpha: 1.5 }.into_command(1, 1).is_err());
    }

    #[test]
    fn server_message_shape() {
        let e = ServerMessage::error(ErrorCode::BadMessage, "nope").to_json();
        assert_eq!(e, r#"{"type":"error","code":"BAD_MESSAGE","detail":"nope"}"#);
        let f = ServerMessage::Frame {
            seq: 7,
            width: 4,
            height: 3,
            png: String::new(),
            annotations: vec![Annotation { label: "car".into(), score: 0.5, bbox: [1, 2, 3, 4] }],
            status: PipelineStatus::Lost,
            timings: TimingSummary::default(),
        };
        let v: serde_json::Value = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(v["type"], "frame");
        assert_eq!(v["status"], "LOST");
        assert_eq!(v["annotations"][0]["bbox"], serde_json::json!([1, 2, 3, 4]));
        assert_eq!(serde_json::from_value::<ServerMessage>(v).unwrap(), f);
    }
}

#[cfg(test)]
mod schema {
    use super::*;
    use serde_json::Value;

    fn defs() -> Value {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/protocol.schema.json");
        let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        v["$defs"].clone()
    }

    fn tags(defs: &Value, union: &str) -> Vec<String> {
        defs[union]["oneOf"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| {
                let name = r["$ref"].as_str().unwrap().rsplit('/').next().unwrap();
                defs[name]["properties"]["type"]["const"].as_str().unwrap().to_string()
            })
            .collect()
    }

    // every property an instance carries must be declared, with required keys present
    fn conforms(defs: &Value, def: &str, v: &Value) {
        let d = &defs[def];
        let obj = v.as_object().unwrap();
        for k in d["required"].as_array().unwrap() {
            assert!(obj.contains_key(k.as_str().unwrap()), "{def}: missing {k}");
        }
        for k in obj.keys() {
            assert!(d["properties"].get(k).is_some(), "{def}: undeclared {k}");
        }
    }

    #[test]
    fn schema_matches_messages() {
        let defs = defs();
        assert_eq!(tags(&defs, "client"), ["click", "box", "set_mode", "redetect", "set_alpha"]);
        assert_eq!(tags(&defs, "server"), ["frame", "error"]);
        let samples = [
            ClientMessage::Click { x: 1, y: 2, label: "a".into() },
            ClientMessage::Box { x: 1, y: 2, w: 3, h: 4, label: "a".into() },
            ClientMessage::SetMode { mode: RecoveryMode::Human },
            ClientMessage::Redetect {},
            ClientMessage::SetAlpha { alpha: 0.2 },
        ];
        for m in samples {
            let v = serde_json::to_value(&m).unwrap();
            conforms(&defs, v["type"].as_str().unwrap(), &v);
        }
        let frame = ServerMessage::Frame {
            seq: 1,
            width: 2,
            height: 2,
            png: String::new(),
            annotations: vec![Annotation { label: "a".into(), score: 1.0, bbox: [0, 0, 1, 1] }],
            status: PipelineStatus::Active,
            timings: TimingSummary::default(),
        };
        let v = serde_json::to_value(&frame).unwrap();
        conforms(&defs, "frame", &v);
        conforms(&defs, "annotation", &v["annotations"][0]);
        conforms(&defs, "timings", &v["timings"]);
        let e = serde_json::to_value(ServerMessage::error(ErrorCode::OutOfBounds, "x")).unwrap();
        conforms(&defs, "error", &e);
        assert!(defs["error"]["properties"]["code"]["enum"].as_array().unwrap().contains(&e["code"]));
    }
}
