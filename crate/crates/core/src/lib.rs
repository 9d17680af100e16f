//! Articulated structures (robots and objects alike) modeled as constrained
//! symbolic expressions.
//!
//! * [`symexpr`]: expressions, differentiation, extended gradients.
//! * [`artmodel`]: models, constraints and tagged operation histories.
//! * [`geometry`]: primitive shapes and contact queries.
//! * [`loaders`]: URDF import and kmodel persistence.
//! * [`estimation`]: EKF over configuration space from observed frame poses.
//! * [`control`]: QP velocity controllers for grasped and pushed objects.
//! * [`scenes`]: robot and object fixtures, ready-made rollout scenarios.

pub mod artmodel;
pub mod control;
pub mod estimation;
pub mod geometry;
pub mod loaders;
pub mod scenes;
pub mod symexpr;
