//! Session wire protocol, version 1.
//!
//! Every message is one JSON object in a websocket text frame, tagged by a
//! `type` field. Server frames carry a `seq` that starts at 0 on each
//! connection and increases by one per frame. A client opens with
//! `{"type": "hello", "proto": 1}`; the server answers with its own hello
//! (seq 0), the active spec, then a state frame every control period.

use std::collections::BTreeMap;

use langnav_core::assistants::{ActiveSpec, ImportanceRatings, PipelineEvent, Stage};
use langnav_core::dsl::{CostTerm, ParameterSet};
use langnav_core::world::{Human, RobotState, Vec2};
use serde::{Deserialize, Serialize};

pub const PROTO_VERSION: u32 = 1;

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Hello(HelloFrame),
    State(StateFrame),
    Spec(SpecFrame),
    PipelineEvent(PipelineEventMsg),
    Error(ErrorMsg),
}

/// A server message with its per-connection sequence number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub seq: u64,
    #[serde(flatten)]
    pub msg: ServerMsg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloFrame {
    pub proto: u32,
    pub scenario: String,
    /// Control period [s].
    pub period: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Paused,
    GoalReached,
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    /// Simulation time [s].
    pub t: f64,
    pub robot: RobotState,
    pub humans: Vec<Human>,
    /// Positions of the selected plan.
    pub plan: Vec<Vec2>,
    pub reference_path: Vec<Vec2>,
    pub goal: Vec2,
    pub run_state: RunState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecFrame {
    pub version: u64,
    pub digest: String,
    pub terms: Vec<CostTerm>,
    pub weights: BTreeMap<String, f64>,
    pub ratings: ImportanceRatings,
    pub params: ParameterSet,
    pub provenance: String,
}

impl SpecFrame {
    pub fn from_active(active: &ActiveSpec) -> Self {
        let spec = &active.spec;
        SpecFrame {
            version: active.version,
            digest: spec.digest(),
            terms: spec.terms().to_vec(),
            weights: spec.weights().clone(),
            ratings: active.ratings.clone(),
            params: spec.params().clone(),
            provenance: spec.provenance().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEventMsg {
    pub query_index: u64,
    pub stage: Stage,
    pub detail: String,
    pub elapsed: f64,
}

impl From<PipelineEvent> for PipelineEventMsg {
    fn from(e: PipelineEvent) -> Self {
        PipelineEventMsg {
            query_index: e.query_index,
            stage: e.stage,
            detail: e.detail,
            elapsed: e.elapsed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMsg {
    pub message: String,
}

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    Hello { proto: u32 },
    Query { text: String },
    SceneDescription { text: String },
    Control(ControlMsg),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ControlMsg {
    Pause,
    Resume,
    Reset,
    /// Builtin scenario name or path to a scenario file.
    LoadScenario {
        scenario: String,
    },
}

impl ClientMsg {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client messages serialize")
    }
}

impl Frame {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server frames serialize")
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_are_tagged_and_flat() {
        let f = Frame {
            seq: 4,
            msg: ServerMsg::Error(ErrorMsg {
                message: "x".into(),
            }),
        };
        let json = f.to_json();
        assert_eq!(json, r#"{"seq":4,"type":"error","message":"x"}"#);
        assert_eq!(Frame::parse(&json).unwrap(), f);
    }

    #[test]
    fn client_messages_parse() {
        assert_eq!(
            ClientMsg::parse(r#"{"type":"hello","proto":1}"#).unwrap(),
            ClientMsg::Hello { proto: 1 }
        );
        assert_eq!(
            ClientMsg::parse(r#"{"type":"query","text":"Be faster."}"#).unwrap(),
            ClientMsg::Query {
                text: "Be faster.".into()
            }
        );
        assert_eq!(
            ClientMsg::parse(r#"{"type":"control","action":"load_scenario","scenario":"open"}"#)
                .unwrap(),
            ClientMsg::Control(ControlMsg::LoadScenario {
                scenario: "open".into()
            })
        );
        assert!(ClientMsg::parse(r#"{"type":"query"}"#).is_err());
        assert!(ClientMsg::parse("not json").is_err());
        let m = ClientMsg::SceneDescription {
            text: "a hall".into(),
        };
        assert_eq!(ClientMsg::parse(&m.to_json()).unwrap(), m);
    }
}
