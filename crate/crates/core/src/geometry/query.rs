use nalgebra::{Matrix3, Matrix4, Vector3};
use thiserror::Error;

use super::{Shape, ShapeAttachment};
use crate::artmodel::{ArticulationModel, ModelError, Path};
use crate::symexpr::{Assignment, EvalError, ExtExpr, ExtMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("no closest-point query for {0} and {1}")]
    UnsupportedPair(&'static str, &'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Closest points between two attached shapes.
///
/// `p` lies on the first shape, `r` on the second, and `n` points from `p`
/// toward `r`. `p_local` and `r_local` are the same points expressed in the
/// owning frames of the two attachments, ready for [`contact_expr`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactQueryResult {
    pub p: Vector3<f64>,
    pub r: Vector3<f64>,
    pub n: Vector3<f64>,
    pub distance: f64,
    pub p_local: Vector3<f64>,
    pub r_local: Vector3<f64>,
}

/// Rigid pose as rotation and translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rot: Matrix3<f64>,
    pub pos: Vector3<f64>,
}

impl Pose {
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        Self {
            rot: m.fixed_view::<3, 3>(0, 0).into_owned(),
            pos: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    pub fn apply(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.rot * local + self.pos
    }

    pub fn inverse_apply(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rot.transpose() * (world - self.pos)
    }

    fn compose(&self, m: &[[f64; 4]; 4]) -> Pose {
        let local = Pose::from_matrix(&Matrix4::from_fn(|r, c| m[r][c]));
        Pose {
            rot: self.rot * local.rot,
            pos: self.apply(&local.pos),
        }
    }
}

/// Numeric world pose of a frame path.
pub fn frame_pose(model: &ArticulationModel, path: &Path, q: &Assignment) -> Result<Pose, GeometryError> {
    let m = model.fk(path)?.evaluate(q)?;
    Ok(Pose::from_matrix(&Matrix4::from_fn(|r, c| m[(r, c)])))
}

struct Placed<'a> {
    shape: &'a Shape,
    frame: Pose,
    pose: Pose,
}

/// Raw pair result in world coordinates: point on a, point on b, normal a→b, distance.
type Raw = (Vector3<f64>, Vector3<f64>, Vector3<f64>, f64);

fn sphere_sphere(ca: Vector3<f64>, ra: f64, cb: Vector3<f64>, rb: f64, fallback: Vector3<f64>) -> Raw {
    let d = cb - ca;
    let len = d.norm();
    let n = if len > 1e-12 { d / len } else { fallback };
    (ca + ra * n, cb - rb * n, n, len - ra - rb)
}

fn segment_closest(a: Vector3<f64>, b: Vector3<f64>, x: Vector3<f64>) -> Vector3<f64> {
    let ab = b - a;
    let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    a + t * ab
}

fn capsule_ends(pose: &Pose, half_length: f64) -> (Vector3<f64>, Vector3<f64>) {
    let axis = Vector3::new(0.0, 0.0, half_length);
    (pose.apply(&-axis), pose.apply(&axis))
}

/// Sphere (center `c`, radius `r`) against a box; the normal points from the
/// box toward the sphere.
fn box_sphere(bx: &Pose, half: &[f64; 3], c: Vector3<f64>, r: f64) -> Raw {
    let local = bx.inverse_apply(&c);
    let h = Vector3::from_column_slice(half);
    let clamped = local.zip_map(&h, |v, e| v.clamp(-e, e));
    let d = local - clamped;
    let len = d.norm();
    if len > 1e-12 {
        let n = bx.rot * (d / len);
        let on_box = bx.apply(&clamped);
        return (on_box, c - r * n, n, len - r);
    }
    // center inside: push out through the nearest face
    let (mut axis, mut depth) = (0, f64::INFINITY);
    for i in 0..3 {
        let di = h[i] - local[i].abs();
        if di < depth {
            depth = di;
            axis = i;
        }
    }
    let sign = if local[axis] >= 0.0 { 1.0 } else { -1.0 };
    let mut face = local;
    face[axis] = sign * h[axis];
    let mut nl = Vector3::zeros();
    nl[axis] = sign;
    let n = bx.rot * nl;
    (bx.apply(&face), c - r * n, n, -(depth + r))
}

const CAPSULE_PROBES: usize = 9;

/// Pairs in canonical order (sphere < capsule < box); normal points a→b.
fn raw_query(a: &Placed, b: &Placed) -> Result<Raw, GeometryError> {
    let fallback = a.frame.rot * Vector3::x();
    let flip = |(p, r, n, d): Raw| (r, p, -n, d);
    Ok(match (*a.shape, *b.shape) {
        (Shape::Sphere { r: ra }, Shape::Sphere { r: rb }) => sphere_sphere(a.pose.pos, ra, b.pose.pos, rb, fallback),
        (Shape::Sphere { r: ra }, Shape::Capsule { r: rb, half_length }) => {
            let (e0, e1) = capsule_ends(&b.pose, half_length);
            let c = segment_closest(e0, e1, a.pose.pos);
            sphere_sphere(a.pose.pos, ra, c, rb, fallback)
        }
        (Shape::Sphere { r }, Shape::Box { half_extents }) => flip(box_sphere(&b.pose, &half_extents, a.pose.pos, r)),
        (Shape::Capsule { r, half_length }, Shape::Box { half_extents }) => {
            flip(capsule_box_probes(&b.pose, &half_extents, &a.pose, r, half_length))
        }
        (sa, sb) => return Err(GeometryError::UnsupportedPair(sa.kind(), sb.kind())),
    })
}

fn capsule_box_probes(bx: &Pose, half: &[f64; 3], cap: &Pose, r: f64, half_length: f64) -> Raw {
    let (e0, e1) = capsule_ends(cap, half_length);
    (0..CAPSULE_PROBES)
        .map(|i| {
            let t = i as f64 / (CAPSULE_PROBES - 1) as f64;
            box_sphere(bx, half, e0 + t * (e1 - e0), r)
        })
        .min_by(|x, y| x.3.total_cmp(&y.3))
        .expect("at least one probe")
}

/// Closest points between `a` and `b` at configuration `q`.
///
/// Supported pairs are sphere with sphere, box or capsule, and capsule with
/// box (the capsule axis is sampled with nine sphere probes). Swapping the
/// arguments swaps `p` and `r` and negates `n`. Concentric shapes fall back
/// to the +x axis of the first shape's frame.
pub fn closest_points(
    a: &ShapeAttachment,
    b: &ShapeAttachment,
    q: &Assignment,
    model: &ArticulationModel,
) -> Result<ContactQueryResult, GeometryError> {
    let fa = frame_pose(model, &a.path, q)?;
    let fb = frame_pose(model, &b.path, q)?;
    closest_points_at(a, fa, b, fb)
}

/// [`closest_points`] with the owning frame poses already evaluated.
pub fn closest_points_at(
    a: &ShapeAttachment,
    frame_a: Pose,
    b: &ShapeAttachment,
    frame_b: Pose,
) -> Result<ContactQueryResult, GeometryError> {
    let pa = Placed {
        shape: &a.shape,
        frame: frame_a,
        pose: frame_a.compose(&a.local_pose),
    };
    let pb = Placed {
        shape: &b.shape,
        frame: frame_b,
        pose: frame_b.compose(&b.local_pose),
    };
    // canonical argument order keeps swapped queries exactly antisymmetric
    let swap = canonical_rank(&b.shape) < canonical_rank(&a.shape);
    let (p, r, n, distance) = if swap {
        let (p, r, n, d) = raw_query(&pb, &pa)?;
        (r, p, -n, d)
    } else {
        raw_query(&pa, &pb)?
    };
    let out = ContactQueryResult {
        p,
        r,
        n,
        distance,
        p_local: frame_a.inverse_apply(&p),
        r_local: frame_b.inverse_apply(&r),
    };
    Ok(out)
}

fn canonical_rank(s: &Shape) -> u8 {
    match s {
        Shape::Sphere { .. } => 0,
        Shape::Capsule { .. } => 1,
        Shape::Box { .. } => 2,
    }
}

/// World position of `local_point` (given in the frame of `path`) as a 3×1
/// extended matrix. Its Jacobian inherits the frame's extended gradients.
pub fn contact_expr(model: &ArticulationModel, path: &Path, local_point: [f64; 3]) -> Result<ExtMatrix, ModelError> {
    Ok(model.fk(path)?.transform_point(local_point)?)
}

/// Entries of [`contact_expr`] as a fixed array.
pub fn contact_entries(model: &ArticulationModel, path: &Path, local_point: [f64; 3]) -> Result<[ExtExpr; 3], ModelError> {
    let m = contact_expr(model, path, local_point)?;
    Ok([m.get(0, 0).clone(), m.get(1, 0).clone(), m.get(2, 0).clone()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{translation_pose, IDENTITY_POSE};

    fn placed(shape: Shape, at: [f64; 3]) -> (ShapeAttachment, Pose) {
        let att = ShapeAttachment {
            path: crate::artmodel::path("w"),
            shape,
            local_pose: IDENTITY_POSE,
        };
        let pose = Pose {
            rot: Matrix3::identity(),
            pos: Vector3::from(at),
        };
        (att, pose)
    }

    fn query(a: Shape, pa: [f64; 3], b: Shape, pb: [f64; 3]) -> ContactQueryResult {
        let (a, fa) = placed(a, pa);
        let (b, fb) = placed(b, pb);
        closest_points_at(&a, fa, &b, fb).unwrap()
    }

    #[test]
    fn unit_spheres_along_x() {
        let s = Shape::Sphere { r: 1.0 };
        let c = query(s, [0.0; 3], s, [3.0, 0.0, 0.0]);
        assert!((c.distance - 1.0).abs() < 1e-12);
        assert!((c.n - Vector3::x()).norm() < 1e-12);
        assert!((c.p - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((c.r - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn sphere_resting_on_box_top() {
        let c = query(
            Shape::Sphere { r: 0.1 },
            [0.0, 0.0, 0.6],
            Shape::Box { half_extents: [0.5; 3] },
            [0.0; 3],
        );
        assert!(c.distance.abs() < 1e-12);
        assert!((c.r - Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-12);
        assert!((c.n + Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn concentric_spheres_use_fallback() {
        let s = Shape::Sphere { r: 0.5 };
        let c = query(s, [1.0, 1.0, 1.0], s, [1.0, 1.0, 1.0]);
        assert!(c.distance < 0.0);
        assert_eq!(c.n, Vector3::x());
    }

    #[test]
    fn sphere_inside_box_penetrates_through_nearest_face() {
        let c = query(
            Shape::Box { half_extents: [1.0, 1.0, 1.0] },
            [0.0; 3],
            Shape::Sphere { r: 0.2 },
            [0.0, 0.9, 0.0],
        );
        assert!((c.distance + 0.3).abs() < 1e-12);
        assert!((c.n - Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn capsule_over_box_uses_lowest_probe() {
        let mut cap = placed(Shape::Capsule { r: 0.1, half_length: 0.5 }, [0.0, 0.0, 2.0]);
        cap.0.local_pose = translation_pose(0.0, 0.0, 0.0);
        let (bx, fb) = placed(Shape::Box { half_extents: [0.5; 3] }, [0.0; 3]);
        let c = closest_points_at(&cap.0, cap.1, &bx, fb).unwrap();
        // lower capsule end at z = 1.5, radius 0.1, box top at 0.5
        assert!((c.distance - 0.9).abs() < 1e-12);
        assert!((c.n + Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn unsupported_pairs_are_rejected() {
        let (a, fa) = placed(Shape::Box { half_extents: [1.0; 3] }, [0.0; 3]);
        let (b, fb) = placed(Shape::Box { half_extents: [1.0; 3] }, [5.0, 0.0, 0.0]);
        assert_eq!(
            closest_points_at(&a, fa, &b, fb),
            Err(GeometryError::UnsupportedPair("box", "box"))
        );
    }
}
