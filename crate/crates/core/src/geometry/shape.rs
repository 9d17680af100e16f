use serde::{Deserialize, Serialize};

use crate::artmodel::Path;

/// Primitive collision shape in its local frame. Capsules run along local z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere { r: f64 },
    Box { half_extents: [f64; 3] },
    Capsule { r: f64, half_length: f64 },
}

impl Shape {
    pub fn is_valid(&self) -> bool {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Shape::Sphere { r } => pos(r),
            Shape::Box { half_extents } => half_extents.iter().all(|h| pos(*h)),
            Shape::Capsule { r, half_length } => pos(r) && pos(half_length),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Shape::Sphere { .. } => "sphere",
            Shape::Box { .. } => "box",
            Shape::Capsule { .. } => "capsule",
        }
    }
}

/// A shape rigidly attached to a model frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeAttachment {
    pub path: Path,
    pub shape: Shape,
    pub local_pose: [[f64; 4]; 4],
}

pub const IDENTITY_POSE: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

/// Constant transform translating by `(x, y, z)`.
pub fn translation_pose(x: f64, y: f64, z: f64) -> [[f64; 4]; 4] {
    let mut m = IDENTITY_POSE;
    m[0][3] = x;
    m[1][3] = y;
    m[2][3] = z;
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_form() {
        let s: Shape = serde_json::from_str(r#"{"sphere":{"r":0.05}}"#).unwrap();
        assert_eq!(s, Shape::Sphere { r: 0.05 });
        assert!(s.is_valid());
        assert!(!Shape::Box { half_extents: [1.0, 0.0, 1.0] }.is_valid());
    }
}
