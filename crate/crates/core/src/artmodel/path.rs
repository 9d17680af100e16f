use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Dot-separated name of a model entry, e.g. `kitchen.drawer.handle`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid path `{0}`: segments must match [A-Za-z0-9_]+")]
pub struct InvalidPath(pub String);

fn valid_segment(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Path {
    pub fn new(text: &str) -> Result<Self, InvalidPath> {
        if text.split('.').all(valid_segment) {
            Ok(Path(text.to_string()))
        } else {
            Err(InvalidPath(text.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }

    pub fn len(&self) -> usize {
        self.segments().count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn join(&self, segment: &str) -> Result<Self, InvalidPath> {
        Path::new(&format!("{}.{segment}", self.0))
    }

    pub fn parent(&self) -> Option<Path> {
        self.0.rfind('.').map(|i| Path(self.0[..i].to_string()))
    }

    pub fn last(&self) -> &str {
        self.0.rsplit('.').next().unwrap_or(&self.0)
    }

    /// Segment-wise prefix test: `a.b` is a prefix of `a.b.c` but not of `a.bc`.
    pub fn starts_with(&self, prefix: &Path) -> bool {
        self.0 == prefix.0
            || (self.0.starts_with(&prefix.0) && self.0.as_bytes().get(prefix.0.len()) == Some(&b'.'))
    }
}

/// Replaces characters outside `[A-Za-z0-9_]` by `_` so arbitrary names
/// (e.g. URDF link names) can be used as path segments.
pub fn sanitize_segment(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Path({})", self.0)
    }
}

impl FromStr for Path {
    type Err = InvalidPath;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Path::new(s)
    }
}

impl Serialize for Path {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Path {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Path::new(&s).map_err(serde::de::Error::custom)
    }
}
