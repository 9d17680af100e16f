use super::*;
use crate::artmodel::{path, ConnectJoint, CreateBody, JointKind, Operation, Placement, PoseRef, TaggedModel};
use crate::geometry::IDENTITY_POSE;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn slider(kind: JointKind, axis: [f64; 3], limits: Option<[f64; 2]>) -> ArticulationModel {
    slider_tagged(kind, axis, limits).into_model()
}

fn slider_tagged(kind: JointKind, axis: [f64; 3], limits: Option<[f64; 2]>) -> TaggedModel {
    let mut tm = TaggedModel::new();
    let body = Operation::CreateBody(CreateBody {
        name: path("w"),
        pose: PoseRef::Literal(IDENTITY_POSE),
    });
    tm.apply("w", body, Placement::Append).unwrap();
    let j = ConnectJoint {
        kind,
        parent: path("w"),
        child: path("s"),
        origin: IDENTITY_POSE,
        axis,
        var: Some("q".into()),
        limits,
        vel_limit: None,
        mimic: None,
    };
    tm.apply("j", Operation::ConnectJoint(j), Placement::Append).unwrap();
    tm
}

fn prismatic_z() -> (ArticulationModel, ObservationModel) {
    let m = slider(JointKind::Prismatic, [0.0, 0.0, 1.0], Some([0.0, 2.0]));
    let obs = build_observation_model(&m, &[path("s")]).unwrap();
    (m, obs)
}

fn v1(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

#[test]
fn prismatic_frame_keeps_one_entry() {
    let (_, obs) = prismatic_z();
    assert_eq!(obs.dim(), 1);
    assert_eq!(obs.entry_index().get(&(path("s"), 2, 3)), Some(&0));
    assert_eq!(obs.state_vars(), &[Variable::new("q")]);
    let m = slider(JointKind::Prismatic, [0.0, 0.0, 1.0], Some([0.0, 2.0]));
    assert_eq!(
        build_observation_model(&m, &[path("w")]).unwrap_err(),
        EstimationError::NoSymbolicEntries
    );
}

#[test]
fn revolute_frame_keeps_rotation_entries() {
    let m = slider(JointKind::Revolute, [0.0, 0.0, 1.0], Some([-1.0, 1.0]));
    let obs = build_observation_model(&m, &[path("s")]).unwrap();
    let kept: Vec<_> = obs.entry_index().keys().map(|(_, r, c)| (*r, *c)).collect();
    assert_eq!(kept, [(0, 0), (0, 1), (1, 0), (1, 1)]);
}

#[test]
fn init_from_bounds_or_defaults() {
    let (m, obs) = prismatic_z();
    let st = init_state(&m, &obs).unwrap();
    assert_eq!(st.q[0], 1.0);
    assert_eq!(st.sigma[(0, 0)], 1.0);
    let free = slider(JointKind::Continuous, [0.0, 0.0, 1.0], None);
    let obs = build_observation_model(&free, &[path("s")]).unwrap();
    let st = init_state(&free, &obs).unwrap();
    assert_eq!(st.q[0], 0.0);
    assert!((st.sigma[(0, 0)] - std::f64::consts::PI.powi(2)).abs() < 1e-15);
}

#[test]
fn state_dependent_bound_is_rejected() {
    let mut tm = slider_tagged(JointKind::Continuous, [0.0, 0.0, 1.0], None);
    let add = Operation::AddConstraint(crate::artmodel::AddConstraint {
        name: "bad".into(),
        lb: -ScalarExpr::symbol("k"),
        ub: ScalarExpr::symbol("k"),
        expr: ScalarExpr::symbol("q"),
    });
    tm.apply("bad", add, Placement::Append).unwrap();
    let obs = build_observation_model(tm.model(), &[path("s")]).unwrap();
    assert_eq!(
        init_state(tm.model(), &obs).unwrap_err(),
        EstimationError::NonConstantBound(Variable::new("q"))
    );
}

#[test]
fn bootstrap_examples() {
    let (m, obs) = prismatic_z();
    let st = init_state(&m, &obs).unwrap();
    let same = bootstrap(&st, &obs.eval_h(&st.q).unwrap(), &obs, 10).unwrap();
    assert_eq!(same.q, st.q);
    let moved = bootstrap(&st, &v1(0.3), &obs, 10).unwrap();
    assert!((moved.q[0] - 0.3).abs() <= 1e-3);
    assert_eq!(moved.sigma, st.sigma);
    let clamped = bootstrap(&st, &v1(5.0), &obs, 10).unwrap();
    assert_eq!(clamped.q[0], 2.0);
}

#[test]
fn predict_integrates() {
    let (m, obs) = prismatic_z();
    let st = init_state(&m, &obs).unwrap();
    assert_eq!(predict(&st, &v1(0.0), 0.1), st);
    let p = predict(&st, &v1(2.0), 0.1);
    assert!((p.q[0] - 1.2).abs() < 1e-15);
    assert_eq!(p.sigma, st.sigma);
}

#[test]
fn update_examples() {
    let (m, obs) = prismatic_z();
    let st = init_state(&m, &obs).unwrap();
    let r = DMatrix::from_element(1, 1, 1e-9);
    let same = update(&st, &obs.eval_h(&st.q).unwrap(), &obs, &r).unwrap();
    assert_eq!(same.q, st.q);
    assert!(same.sigma.trace() <= st.sigma.trace());

    let mut cur = st;
    let mut steps = 0;
    while (cur.q[0] - 0.3).abs() > 1e-6 {
        cur = update(&cur, &v1(0.3), &obs, &r).unwrap();
        steps += 1;
        assert!(steps <= 3);
    }
}

#[test]
fn degenerate_residual_covariance_is_reported() {
    let (m, obs) = prismatic_z();
    let st = init_state(&m, &obs).unwrap();
    let r = DMatrix::from_element(1, 1, -1.0);
    assert_eq!(
        update(&st, &v1(0.3), &obs, &r).unwrap_err(),
        EstimationError::SingularResidualCovariance
    );
}

#[test]
fn observation_covariance() {
    let (_, obs) = prismatic_z();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r0 = estimate_r(&obs, &v1(1.0), 0.0, 0.0, 10, &mut rng).unwrap();
    assert_eq!(r0, DMatrix::identity(1, 1) * 1e-9);
    let r = estimate_r(&obs, &v1(1.0), 0.01, 0.0, 10_000, &mut rng).unwrap();
    assert!((r[(0, 0)] / 1e-4 - 1.0).abs() < 0.2, "{r}");
}
