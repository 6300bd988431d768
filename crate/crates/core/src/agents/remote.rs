//! Remote agents: one HTTP POST per trial carrying the full trial view and
//! feedback history, answered with a key choice.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Agent, AgentError, HistoryEntry, Observation};
use crate::render::render_trial;

pub const DEFAULT_REMOTE_TIMEOUT_S: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemoteError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed reply: {0}")]
    Protocol(String),
}

/// Request body sent to a remote agent for each trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialPayload {
    pub session_id: String,
    pub trial_index: usize,
    pub key_cards: [[u8; 4]; 4],
    pub stimulus: [u8; 4],
    pub svg: String,
    pub history: Vec<HistoryEntry>,
}

impl From<&Observation> for TrialPayload {
    fn from(obs: &Observation) -> Self {
        TrialPayload {
            session_id: obs.session_id.clone(),
            trial_index: obs.trial_index,
            key_cards: obs.key_cards.map(|c| c.to_array()),
            stimulus: obs.stimulus.to_array(),
            svg: render_trial(&obs.key_cards, &obs.stimulus),
            history: obs.history.clone(),
        }
    }
}

/// Extracts a key choice from a reply body.
///
/// A JSON object `{"choice": k}` is always accepted. In lenient mode any
/// other text yields its first digit in `1..=4`.
pub fn parse_reply(body: &str, strict: bool) -> Result<u8, RemoteError> {
    if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(body) {
        if let Some(v) = map.get("choice") {
            let k = match v {
                serde_json::Value::Number(n) => n.as_u64(),
                serde_json::Value::String(s) => s.trim().parse::<u64>().ok(),
                _ => None,
            };
            return match k {
                Some(k @ 1..=4) => Ok(k as u8),
                _ => Err(RemoteError::Protocol(format!("choice {v} not in 1-4"))),
            };
        }
        if strict {
            return Err(RemoteError::Protocol("reply object has no `choice`".into()));
        }
    } else if strict {
        return Err(RemoteError::Protocol("reply is not a JSON object".into()));
    }
    body.chars()
        .find(|c| ('1'..='4').contains(c))
        .map(|c| c as u8 - b'0')
        .ok_or_else(|| RemoteError::Protocol(format!("no choice 1-4 in reply {body:?}")))
}

/// Delivers one payload and returns the raw reply body.
pub trait Transport {
    fn round_trip(&mut self, payload: &TrialPayload) -> Result<String, RemoteError>;
}

pub struct HttpTransport {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        HttpTransport {
            endpoint: endpoint.to_string(),
            agent,
        }
    }
}

impl Transport for HttpTransport {
    fn round_trip(&mut self, payload: &TrialPayload) -> Result<String, RemoteError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(payload)
            .map_err(|e| RemoteError::Transport(e.to_string()))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| RemoteError::Transport(e.to_string()))
    }
}

pub struct RemoteAgent<T: Transport> {
    transport: T,
    strict: bool,
}

impl<T: Transport> RemoteAgent<T> {
    pub fn new(transport: T, strict: bool) -> Self {
        RemoteAgent { transport, strict }
    }

    pub fn remote_round_trip(&mut self, payload: &TrialPayload) -> Result<u8, RemoteError> {
        let body = self.transport.round_trip(payload)?;
        parse_reply(&body, self.strict)
    }
}

impl<T: Transport> Agent for RemoteAgent<T> {
    fn choose(&mut self, obs: &Observation) -> Result<u8, AgentError> {
        Ok(self.remote_round_trip(&TrialPayload::from(obs))?)
    }

    fn name(&self) -> String {
        "remote".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{Card, KEY_CARDS};

    #[test]
    fn lenient_extraction() {
        assert_eq!(parse_reply("3", false), Ok(3));
        assert_eq!(parse_reply("I choose card 2 because the colors match", false), Ok(2));
        assert_eq!(parse_reply("card 0 or 7, no: 4", false), Ok(4));
        assert_eq!(parse_reply(r#"{"choice": 1}"#, false), Ok(1));
        assert_eq!(parse_reply(r#"{"choice": "2"}"#, false), Ok(2));
        assert!(parse_reply("no idea", false).is_err());
        assert!(parse_reply(r#"{"choice": 5}"#, false).is_err());
    }

    #[test]
    fn strict_requires_json_choice() {
        assert_eq!(parse_reply(r#"{"choice":4}"#, true), Ok(4));
        assert!(parse_reply("3", true).is_err());
        assert!(parse_reply(r#"{"answer":3}"#, true).is_err());
    }

    struct Echo(&'static str);
    impl Transport for Echo {
        fn round_trip(&mut self, _p: &TrialPayload) -> Result<String, RemoteError> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn payload_has_no_rule_information() {
        let obs = Observation {
            session_id: "s".into(),
            trial_index: 2,
            key_cards: KEY_CARDS,
            stimulus: Card::new(1, 0, 3, 2).unwrap(),
            history: vec![
                HistoryEntry { choice: Some(1), correct: false },
                HistoryEntry { choice: None, correct: false },
            ],
            block_feedback_reset: false,
        };
        let v = serde_json::to_value(TrialPayload::from(&obs)).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in ["rule", "active_rule", "block_index", "streak", "schedule"] {
            assert!(!keys.contains(&k));
        }
        assert_eq!(v["stimulus"], serde_json::json!([1, 0, 3, 2]));
        assert_eq!(v["history"][1]["choice"], serde_json::Value::Null);
        let mut agent = RemoteAgent::new(Echo("3"), false);
        assert_eq!(agent.choose(&obs), Ok(3));
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        // port 9 on localhost: nothing listens there in the test sandbox
        let mut t = HttpTransport::new("http://127.0.0.1:9/agent", Duration::from_millis(500));
        let obs = Observation {
            session_id: "s".into(),
            trial_index: 0,
            key_cards: KEY_CARDS,
            stimulus: Card::new(0, 1, 2, 3).unwrap(),
            history: vec![],
            block_feedback_reset: false,
        };
        let err = t.round_trip(&TrialPayload::from(&obs)).unwrap_err();
        assert!(matches!(err, RemoteError::Transport(_)));
    }
}
