use serde::Serialize;
use serde_json::Value;

use super::LoadError;
use crate::artmodel::{HistoryEntry, Operation, OperationHistory};
use crate::symexpr::json::parse_json;

pub const KMODEL_VERSION: u64 = 1;

fn format_err(path: impl Into<String>, message: impl Into<String>) -> LoadError {
    LoadError::Format {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Serialize)]
struct DocOut<'a> {
    version: u64,
    history: Vec<EntryOut<'a>>,
}

#[derive(Serialize)]
struct EntryOut<'a> {
    tag: &'a str,
    kind: &'static str,
    args: Value,
}

fn doc_out(history: &OperationHistory) -> DocOut<'_> {
    let history = history
        .entries()
        .iter()
        .map(|e| {
            let mut v = serde_json::to_value(&e.op).expect("operations serialize");
            EntryOut {
                tag: &e.tag,
                kind: e.op.kind(),
                args: v["args"].take(),
            }
        })
        .collect();
    DocOut {
        version: KMODEL_VERSION,
        history,
    }
}

pub fn history_to_json(history: &OperationHistory) -> Value {
    serde_json::to_value(doc_out(history)).expect("JSON values serialize")
}

/// Compact kmodel text with keys in document order (`version`, `history`;
/// `tag`, `kind`, `args`).
pub fn save_kmodel(history: &OperationHistory) -> String {
    serde_json::to_string(&doc_out(history)).expect("JSON values serialize")
}

pub fn history_from_json(doc: &Value) -> Result<OperationHistory, LoadError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| format_err("/", "document must be an object"))?;
    match obj.get("version").and_then(Value::as_u64) {
        Some(KMODEL_VERSION) => {}
        Some(v) => return Err(format_err("/version", format!("unsupported version {v}"))),
        None => return Err(format_err("/version", "missing integer version")),
    }
    let list = obj
        .get("history")
        .and_then(Value::as_array)
        .ok_or_else(|| format_err("/history", "expected an array"))?;
    let mut entries = Vec::with_capacity(list.len());
    for (i, item) in list.iter().enumerate() {
        let at = format!("/history/{i}");
        let tag = item
            .get("tag")
            .and_then(Value::as_str)
            .ok_or_else(|| format_err(format!("{at}/tag"), "expected a string"))?;
        let kind = item
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| format_err(format!("{at}/kind"), "expected an operation kind"))?;
        let empty = Value::Object(Default::default());
        let args = item.get("args").unwrap_or(&empty);
        let op = operation_from_parts(kind, args, &format!("{at}/args"))
            .map_err(|e| match e {
                LoadError::Format { path, message } if path.is_empty() => format_err(format!("{at}/kind"), message),
                e => e,
            })?;
        entries.push(HistoryEntry {
            tag: tag.to_string(),
            op,
        });
    }
    OperationHistory::from_entries(entries).map_err(|e| format_err("/history", e.to_string()))
}

fn args_of<T: serde::de::DeserializeOwned>(args: &Value, at: &str) -> Result<T, LoadError> {
    serde_path_to_error::deserialize(args).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            at.to_string()
        } else {
            format!("{at}/{}", inner.replace(['.', '['], "/").replace(']', ""))
        };
        format_err(path, e.into_inner().to_string())
    })
}

fn operation_from_parts(kind: &str, args: &Value, at: &str) -> Result<Operation, LoadError> {
    Ok(match kind {
        "create_body" => Operation::CreateBody(args_of(args, at)?),
        "connect_joint" => Operation::ConnectJoint(args_of(args, at)?),
        "attach_diff_drive" => Operation::AttachDiffDrive(args_of(args, at)?),
        "attach_garage_door" => Operation::AttachGarageDoor(args_of(args, at)?),
        "add_constraint" => Operation::AddConstraint(args_of(args, at)?),
        "define" => Operation::Define(args_of(args, at)?),
        "attach_shape" => Operation::AttachShape(args_of(args, at)?),
        other => return Err(format_err("", format!("unknown operation kind `{other}`"))),
    })
}

pub fn load_kmodel(text: &str) -> Result<OperationHistory, LoadError> {
    let doc = parse_json(text).map_err(|e| format_err("/", e.to_string()))?;
    history_from_json(&doc)
}
