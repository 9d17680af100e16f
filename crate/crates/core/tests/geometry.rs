use kineverse::artmodel::*;
use kineverse::geometry::*;
use kineverse::symexpr::{jacobian, Assignment, Variable};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn joint(kind: JointKind, parent: &str, child: &str, var: &str, axis: [f64; 3], origin: [[f64; 4]; 4]) -> Operation {
    Operation::ConnectJoint(ConnectJoint {
        kind,
        parent: path(parent),
        child: path(child),
        origin,
        axis,
        var: Some(var.into()),
        limits: Some([-3.0, 3.0]),
        vel_limit: None,
        mimic: None,
    })
}

fn body(name: &str) -> Operation {
    Operation::CreateBody(CreateBody {
        name: path(name),
        pose: PoseRef::Literal(IDENTITY_POSE),
    })
}

fn chain() -> ArticulationModel {
    let mut tm = TaggedModel::new();
    tm.apply("w", body("w"), Placement::Append).unwrap();
    tm.apply("a", joint(JointKind::Revolute, "w", "l1", "q1", [0.0, 0.0, 1.0], translation_pose(0.0, 0.0, 0.3)), Placement::Append)
        .unwrap();
    tm.apply("b", joint(JointKind::Revolute, "l1", "l2", "q2", [0.0, 1.0, 0.0], translation_pose(0.5, 0.0, 0.0)), Placement::Append)
        .unwrap();
    tm.apply("c", joint(JointKind::Prismatic, "l2", "l3", "q3", [1.0, 0.0, 0.0], translation_pose(0.4, 0.0, 0.0)), Placement::Append)
        .unwrap();
    tm.into_model()
}

fn shape_strategy() -> impl Strategy<Value = Shape> {
    prop_oneof![
        (0.05..0.5f64).prop_map(|r| Shape::Sphere { r }),
        (0.05..0.5f64, 0.05..0.5f64, 0.05..0.5f64).prop_map(|(a, b, c)| Shape::Box { half_extents: [a, b, c] }),
        (0.05..0.3f64, 0.05..0.5f64).prop_map(|(r, h)| Shape::Capsule { r, half_length: h }),
    ]
}

fn pose_strategy() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-2.0..2.0f64), prop::array::uniform3(-3.2..3.2f64)).prop_map(|(p, rpy)| Pose {
        rot: *Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]).matrix(),
        pos: Vector3::from(p),
    })
}

fn attach(shape: Shape) -> ShapeAttachment {
    ShapeAttachment {
        path: path("w"),
        shape,
        local_pose: IDENTITY_POSE,
    }
}

fn supported(a: &Shape, b: &Shape) -> bool {
    !matches!(
        (a, b),
        (Shape::Box { .. }, Shape::Box { .. }) | (Shape::Capsule { .. }, Shape::Capsule { .. })
    )
}

proptest! {
    #[test]
    fn swap_is_antisymmetric(sa in shape_strategy(), sb in shape_strategy(), pa in pose_strategy(), pb in pose_strategy()) {
        prop_assume!(supported(&sa, &sb));
        let (a, b) = (attach(sa), attach(sb));
        let ab = closest_points_at(&a, pa, &b, pb).unwrap();
        let ba = closest_points_at(&b, pb, &a, pa).unwrap();
        prop_assert!((ab.p - ba.r).norm() <= 1e-9);
        prop_assert!((ab.r - ba.p).norm() <= 1e-9);
        prop_assert!((ab.n + ba.n).norm() <= 1e-9);
        prop_assert!((ab.distance - ba.distance).abs() <= 1e-9);
        prop_assert!((ab.n.norm() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn separated_points_are_joined_by_the_normal(sa in shape_strategy(), sb in shape_strategy(), pa in pose_strategy(), pb in pose_strategy()) {
        prop_assume!(supported(&sa, &sb));
        let c = closest_points_at(&attach(sa), pa, &attach(sb), pb).unwrap();
        prop_assume!(c.distance > 0.0);
        prop_assert!((c.p + c.distance * c.n - c.r).norm() <= 1e-6);
    }

    #[test]
    fn moving_along_normal_grows_distance(sa in shape_strategy(), sb in shape_strategy(), pa in pose_strategy(), pb in pose_strategy()) {
        prop_assume!(supported(&sa, &sb));
        let (a, b) = (attach(sa), attach(sb));
        let c = closest_points_at(&a, pa, &b, pb).unwrap();
        prop_assume!(c.distance > 0.01);
        let eps = 1e-4;
        let moved = Pose { rot: pb.rot, pos: pb.pos + eps * c.n };
        let d = closest_points_at(&a, pa, &b, moved).unwrap();
        prop_assert!(((d.distance - c.distance) - eps).abs() <= 0.05 * eps,
            "grew by {} instead of {eps}", d.distance - c.distance);
    }
}

#[test]
fn query_through_model_frames() {
    let m = chain();
    let q = Assignment::from_pairs([("q1", 0.0), ("q2", 0.0), ("q3", 0.0)]);
    let tip = ShapeAttachment {
        path: path("l3"),
        shape: Shape::Sphere { r: 0.05 },
        local_pose: IDENTITY_POSE,
    };
    let wall = ShapeAttachment {
        path: path("w"),
        shape: Shape::Box { half_extents: [0.1, 1.0, 1.0] },
        local_pose: translation_pose(1.5, 0.0, 0.0),
    };
    let c = closest_points(&tip, &wall, &q, &m).unwrap();
    // tip sphere centered at x = 0.9, wall face at x = 1.4
    assert!((c.distance - 0.45).abs() < 1e-12);
    assert!((c.n - Vector3::x()).norm() < 1e-12);
    assert!((c.p_local - Vector3::new(0.05, 0.0, 0.0)).norm() < 1e-12);
    assert!((c.r_local - Vector3::new(1.4, 0.0, 0.3)).norm() < 1e-12);

    let mut lost = tip.clone();
    lost.path = path("nowhere");
    assert!(matches!(
        closest_points(&lost, &wall, &q, &m),
        Err(GeometryError::Model(ModelError::UnknownPath(_)))
    ));
}

#[test]
fn contact_expr_examples() {
    let mut tm = TaggedModel::new();
    tm.apply("w", body("w"), Placement::Append).unwrap();
    tm.apply("s", joint(JointKind::Prismatic, "w", "s", "z", [0.0, 0.0, 1.0], IDENTITY_POSE), Placement::Append)
        .unwrap();
    let m = tm.model();
    let e = contact_expr(m, &path("w"), [1.0, 2.0, 3.0]).unwrap();
    let consts: Vec<_> = e.entries().iter().map(|x| x.expr().as_const()).collect();
    assert_eq!(consts, [Some(1.0), Some(2.0), Some(3.0)]);

    let rows = contact_entries(m, &path("s"), [0.0; 3]).unwrap();
    let j = jacobian(&rows, &[Variable::new("z")]).evaluate(&Assignment::from_pairs([("z", 0.2)])).unwrap();
    assert_eq!(j.as_slice(), &[0.0, 0.0, 1.0]);
    assert!(matches!(contact_expr(m, &path("zz"), [0.0; 3]), Err(ModelError::UnknownPath(_))));
}

#[test]
fn diff_drive_contact_has_wheel_columns() {
    let mut tm = TaggedModel::new();
    tm.apply("base", body("base"), Placement::Append).unwrap();
    let drive = AttachDiffDrive {
        base: path("base"),
        wheel_radius: 0.1,
        axle_half_width: 0.25,
        x: "x".into(),
        y: "y".into(),
        theta: "th".into(),
        left_wheel: "lw".into(),
        right_wheel: "rw".into(),
        wheel_vel_limit: None,
    };
    tm.apply("drive", Operation::AttachDiffDrive(drive), Placement::Append).unwrap();
    let rows = contact_entries(tm.model(), &path("base"), [0.5, 0.0, 0.0]).unwrap();
    let j = jacobian(&rows, &[Variable::new("lw"), Variable::new("rw")])
        .evaluate(&Assignment::from_pairs([("x", 0.0), ("y", 0.0), ("th", 0.0)]))
        .unwrap();
    // forward speed r/2 per wheel; yaw rate ∓r/2L swings the point 0.5 ahead sideways
    let want = [0.05, 0.05, -0.1, 0.1, 0.0, 0.0];
    for (got, want) in j.transpose().as_slice().iter().zip(want) {
        assert!((got - want).abs() < 1e-12, "{j}");
    }
}

#[test]
fn contact_jacobian_matches_finite_differences() {
    let m = chain();
    let vars: Vec<Variable> = ["q1", "q2", "q3"].iter().map(|v| Variable::new(v)).collect();
    let local = [0.1, -0.2, 0.05];
    let rows = contact_entries(&m, &path("l3"), local).unwrap();
    let jac = jacobian(&rows, &vars);
    let world = |q: &[f64]| {
        let a: Assignment = vars.iter().cloned().zip(q.iter().copied()).collect();
        let pose = frame_pose(&m, &path("l3"), &a).unwrap();
        pose.apply(&Vector3::from(local))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a: Assignment = vars.iter().cloned().zip(q.iter().copied()).collect();
        let j = jac.evaluate(&a).unwrap();
        let h = 1e-6;
        for c in 0..3 {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[c] += h;
            qm[c] -= h;
            let fd = (world(&qp) - world(&qm)) / (2.0 * h);
            for r in 0..3 {
                assert!((j[(r, c)] - fd[r]).abs() <= 1e-5, "entry ({r},{c}) at {q:?}");
            }
        }
    }
}
