//! Wire format: one JSON object per line, discriminated by `type`.

use std::collections::BTreeMap;
use std::fmt;

use kineverse::artmodel::{Constraint, Definition, ModelError, Operation, Path, Placement};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_ENDPOINT: &str = "127.0.0.1:7310";

/// Placement of an applied operation, `"append"`, `{"before": tag}` or
/// `{"replace": tag}` on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WirePlacement {
    Append,
    Before(String),
    Replace(String),
}

impl From<WirePlacement> for Placement {
    fn from(p: WirePlacement) -> Self {
        match p {
            WirePlacement::Append => Placement::Append,
            WirePlacement::Before(t) => Placement::Before(t),
            WirePlacement::Replace(t) => Placement::Replace(t),
        }
    }
}

impl From<Placement> for WirePlacement {
    fn from(p: Placement) -> Self {
        match p {
            Placement::Append => WirePlacement::Append,
            Placement::Before(t) => WirePlacement::Before(t),
            Placement::Replace(t) => WirePlacement::Replace(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    UnknownTag,
    DuplicateTag,
    UnknownPath,
    BadMessage,
    /// The operation was well-formed but the model rejected it.
    InvalidOperation,
    VersionMismatch,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<&ModelError> for ErrorCode {
    fn from(e: &ModelError) -> Self {
        match e.root() {
            ModelError::UnknownTag(_) => ErrorCode::UnknownTag,
            ModelError::DuplicateTag(_) => ErrorCode::DuplicateTag,
            ModelError::UnknownPath(_) => ErrorCode::UnknownPath,
            _ => ErrorCode::InvalidOperation,
        }
    }
}

/// Changed definitions of one revision, restricted to a subscription.
/// `None` marks a removed definition or constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Update {
    pub revision: u64,
    pub changed_paths: Vec<Path>,
    pub defs: BTreeMap<Path, Option<Definition>>,
    pub constraints_changed: BTreeMap<String, Option<Constraint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WireMessage {
    Hello {
        version: u32,
    },
    Subscribe {
        paths: Vec<Path>,
    },
    Apply {
        request_id: u64,
        placement: WirePlacement,
        tag: String,
        op: Operation,
    },
    Update(Update),
    Ack {
        request_id: u64,
        revision: u64,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        request_id: Option<u64>,
        code: ErrorCode,
        message: String,
    },
}

impl WireMessage {
    /// Serialized form without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        let mut de = serde_json::Deserializer::from_str(line);
        de.disable_recursion_limit();
        let de = serde_stacker::Deserializer::new(&mut de);
        let msg = WireMessage::deserialize(de)?;
        Ok(msg)
    }
}

/// Whether a subscription to `subscribed` covers `path` (equal or below it).
pub fn covers(subscribed: &[Path], path: &Path) -> bool {
    subscribed.iter().any(|s| path.starts_with(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use kineverse::artmodel::path;

    #[test]
    fn round_trips() {
        let msgs = [
            WireMessage::Hello { version: 1 },
            WireMessage::Subscribe {
                paths: vec![path("garage.door")],
            },
            WireMessage::Ack {
                request_id: 3,
                revision: 7,
            },
            WireMessage::Error {
                request_id: None,
                code: ErrorCode::BadMessage,
                message: "x".into(),
            },
        ];
        for m in msgs {
            let line = m.to_line();
            assert!(!line.contains('\n'));
            assert_eq!(WireMessage::from_line(&line).unwrap(), m);
        }
    }

    #[test]
    fn placement_wire_form() {
        assert_eq!(serde_json::to_string(&WirePlacement::Append).unwrap(), r#""append""#);
        assert_eq!(
            serde_json::to_string(&WirePlacement::Before("t".into())).unwrap(),
            r#"{"before":"t"}"#
        );
    }

    #[test]
    fn subscription_prefixes() {
        let subs = [path("robot.arm")];
        assert!(covers(&subs, &path("robot.arm")));
        assert!(covers(&subs, &path("robot.arm.link1")));
        assert!(!covers(&subs, &path("robot.armrest")));
        assert!(!covers(&subs, &path("robot")));
    }

    #[test]
    fn rejects_unknown_type() {
        assert!(WireMessage::from_line(r#"{"type":"nope"}"#).is_err());
        assert!(WireMessage::from_line("not json").is_err());
    }
}
