//! Collision shapes, closest-point queries and symbolic contact points.

mod query;
mod shape;

pub use query::{
    closest_points, closest_points_at, contact_entries, contact_expr, frame_pose, ContactQueryResult, GeometryError,
    Pose,
};
pub use shape::{translation_pose, Shape, ShapeAttachment, IDENTITY_POSE};
