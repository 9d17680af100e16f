//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so each criterion reports on its own
//! line even when an earlier one fails; the process exits non-zero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::Path as FsPath;
use std::time::{Duration, Instant};

use kineverse::artmodel::{
    path, replay, ArticulationModel, CreateBody, Definition, JointKind, Operation, Path, Placement, PoseRef,
};
use kineverse::control::{velocity_bounds, GraspConfig, PushConfig, Status, Trace};
use kineverse::estimation::run_experiment;
use kineverse::estimation::EkfExperiment;
use kineverse::geometry::{closest_points, IDENTITY_POSE};
use kineverse::loaders::{load_kmodel, save_kmodel, UrdfDocument};
use kineverse::scenes::{self, scenario};
use kineverse::symexpr::random::random_expr;
use kineverse::symexpr::{Assignment, ExtExpr, ScalarExpr, Variable};
use kineverse_server::{serve, Client};
use nalgebra::{DMatrix, Matrix4, Rotation3, Translation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture(name: &str) -> std::path::PathBuf {
    let crates = FsPath::new(env!("CARGO_MANIFEST_DIR")).join("..");
    let cli = crates.join("cli/fixtures").join(name);
    if cli.exists() {
        cli
    } else {
        crates.join("core/fixtures").join(name)
    }
}

fn worked_example() -> Check {
    let model = kineverse_cli::io::load_model(&fixture("example_transform.kmodel"), None).map_err(|e| e.to_string())?;
    let q = Assignment::from_pairs([("a", std::f64::consts::PI), ("b", 2.0)]);
    let t = kineverse_cli::fk::evaluate(&model, "example.T", &q).map_err(|e| e.to_string())?;
    let want = DMatrix::from_row_slice(
        4,
        4,
        &[-1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 1.0],
    );
    let gap = (t - want).amax();
    ensure!(gap <= 1e-12, "max entry deviation {gap:e}");
    Ok(format!("max entry deviation {gap:e}"))
}

fn gradient_examples() -> Check {
    let (a, b) = (ScalarExpr::symbol("a"), ScalarExpr::symbol("b"));
    let v = |s: &str| s.parse::<Variable>().unwrap();
    let g = ExtExpr::lift(a.sin() + b.pow(2.0)).gradient();
    ensure!(g.len() == 2, "gradient has {} entries", g.len());
    ensure!(g[&v("a'")] == a.cos() && g[&v("b'")] == 2.0 * &b, "sin a + b² gradient is {g:?}");

    let phi = ExtExpr::with_gradient(
        a.sin() + b.pow(2.0),
        [(v("b'"), ScalarExpr::one()), (v("c'"), ScalarExpr::constant(4.0))],
    );
    let psi = ExtExpr::lift(4.0 * &a);
    let g = (&phi * &psi).gradient();
    ensure!(g.len() == 3, "product gradient keys {:?}", g.keys().collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut distinct = 0;
    for _ in 0..32 {
        let (x, y, z) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let q = Assignment::from_pairs([("a", x), ("b", y), ("c", z)]);
        let ev = |k: &str| g[&v(k)].evaluate(&q).unwrap();
        worst = worst
            .max((ev("a'") - 4.0 * (x.sin() + x * x.cos() + y * y)).abs())
            .max((ev("b'") - 4.0 * x).abs())
            .max((ev("c'") - 16.0 * x).abs());
        if (ev("b'") - 8.0 * x * y).abs() > 1e-3 {
            distinct += 1;
        }
    }
    ensure!(worst <= 1e-9, "worst deviation {worst:e}");
    ensure!(distinct == 32, "override matched 8ab at {} points", 32 - distinct);
    Ok(format!("32 points, worst {worst:e}; override differs from 8ab at all of them"))
}

fn finite_differences() -> Check {
    let start = Instant::now();
    let vars: Vec<Variable> = ["a", "b", "c"].iter().map(|n| Variable::new(n)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    let (mut checked, mut skipped) = (0usize, 0usize);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let e = random_expr(&mut rng, &vars, 5);
        let q: Assignment = vars.iter().map(|v| (v.clone(), rng.random_range(-2.0..2.0))).collect();
        for v in &vars {
            let at = |dx: f64| {
                let mut p = q.clone();
                p.insert(v.clone(), q.get(v).unwrap() + dx);
                e.evaluate(&p).unwrap()
            };
            let (fp, f0, fm) = (at(h), at(0.0), at(-h));
            // abs/min/max switch points: one-sided slopes disagree
            let (fwd, bwd) = ((fp - f0) / h, (f0 - fm) / h);
            if (fwd - bwd).abs() > 1e-2 * (1.0 + fwd.abs().max(bwd.abs())) {
                skipped += 1;
                continue;
            }
            let analytic = e.diff(v).evaluate(&q).unwrap();
            let numeric = (fp - fm) / (2.0 * h);
            let dev = (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs());
            worst = worst.max(dev);
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst <= 1e-5, "worst relative deviation {worst:e}");
    ensure!(secs <= 60.0, "took {secs:.1} s");
    Ok(format!("1000 expressions, {checked} partials ({skipped} at kinks), worst {worst:e}, {secs:.1} s"))
}

fn garage_demo() -> Check {
    let demo = || -> Result<String, Box<dyn std::error::Error>> {
        let model = kineverse_cli::garage::garage_model(100.0)?;
        let (points, locks) = kineverse_cli::garage::sweep(&model)?;
        let mut buf = Vec::new();
        kineverse_cli::garage::write_csv(&mut buf, &points, &locks)?;
        Ok(String::from_utf8(buf)?)
    };
    let text = demo().map_err(|e| e.to_string())?;
    let (points, locks) = text.split_once("\n\n").ok_or("missing lock block")?;
    let parse = |block: &str| -> Vec<Vec<f64>> {
        block
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
            .collect()
    };
    let mut path_gap = 0.0f64;
    let mut ellipse_gap = 0.0f64;
    for r in parse(points) {
        path_gap = path_gap.max(r[1].abs()).max(r[4].abs());
        for (i, f) in [0.25, 0.5, 0.75].into_iter().enumerate() {
            let (x, z) = (r[5 + 2 * i], r[6 + 2 * i]);
            let lhs = (x / (2.0 * f)).powi(2) + (z / (2.0 * (1.0 - f))).powi(2);
            ellipse_gap = ellipse_gap.max((lhs - 1.0).abs());
        }
    }
    let locks = parse(locks);
    let locked_max = locks.iter().filter(|r| r[0] < 0.3).map(|r| r[1]).fold(0.0, f64::max);
    let open_min = locks.iter().map(|r| r[2]).fold(1.0, f64::min);
    let detail = format!(
        "|Ax|,|Bz| ≤ {path_gap:e}; ellipse ≤ {ellipse_gap:e}; max unlocked(a=2, b<0.3) = {locked_max:.4}; min unlocked(a=1) = {open_min:.4}"
    );
    ensure!(path_gap <= 1e-9 && ellipse_gap <= 1e-9 && locked_max <= 0.01 && open_min >= 0.99, "{detail}");
    Ok(detail)
}

fn ekf() -> Check {
    let start = Instant::now();
    let (model, frames) = scenes::estimation_model(3).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for sigma_t in [0.0, 0.01, 0.02] {
        for sigma_r in [0.0, 0.01] {
            let cfg = EkfExperiment {
                frames: frames.clone(),
                sigma_t,
                sigma_r,
                trials: 100,
                observations: 25,
                seed: 0,
                r_samples: 1000,
                bootstrap_steps: 10,
            };
            let s = run_experiment(&model, &cfg).map_err(|e| e.to_string())?;
            let (improved, mean, max) = (s.improved_fraction(), s.mean_final_error(), s.max_final_error());
            lines.push(format!("σ=({sigma_t},{sigma_r}): {:.0}% improved, mean {mean:.1e}", improved * 100.0));
            let ok = if sigma_t == 0.0 && sigma_r == 0.0 {
                max <= 1e-6
            } else {
                improved >= 0.95 && mean <= 0.05
            };
            if !ok {
                failures.push(format!("σ=({sigma_t},{sigma_r}) improved {improved:.2} mean {mean:e} max {max:e}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();

    // timing: median over repeated runs per model size
    let mut means = Vec::new();
    for dof in 1..=3 {
        let (m, f) = scenes::estimation_model(dof).map_err(|e| e.to_string())?;
        let mut runs: Vec<f64> = (0..5)
            .map(|seed| {
                let cfg = EkfExperiment {
                    frames: f.clone(),
                    sigma_t: 0.01,
                    sigma_r: 0.01,
                    trials: 20,
                    observations: 25,
                    seed,
                    r_samples: 200,
                    bootstrap_steps: 10,
                };
                run_experiment(&m, &cfg).map(|s| s.mean_iteration_ms())
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        runs.sort_by(f64::total_cmp);
        means.push(runs[2]);
    }
    let timing = format!("iteration ms by DoF {:.4}/{:.4}/{:.4}", means[0], means[1], means[2]);
    if !(means[0] > 0.0 && means[0] <= means[1] && means[1] <= means[2]) {
        failures.push(format!("{timing} not positive and monotone"));
    }
    if secs > 120.0 {
        failures.push(format!("grid took {secs:.1} s"));
    }
    ensure!(failures.is_empty(), "{}", failures.join("; "));
    Ok(format!("{}; {timing}; {secs:.1} s", lines.join(", ")))
}

fn states(trace: &Trace) -> impl Iterator<Item = (&[f64], &kineverse::control::TraceRow)> {
    std::iter::once(trace.q0.as_slice())
        .chain(trace.rows.iter().map(|r| r.q.as_slice()))
        .zip(&trace.rows)
}

const DT: f64 = 0.02;

fn grasp_suite() -> Check {
    let mut summary = Vec::new();
    for name in [
        "grasp-drawer-open",
        "grasp-drawer-close",
        "grasp-drawer-open-diffdrive",
        "grasp-drawer-close-diffdrive",
    ] {
        let sc = scenario(name, DT, 500).map_err(|e| e.to_string())?;
        let trace = sc.run().map_err(|e| e.to_string())?;
        ensure!(trace.status() == &Status::GoalReached, "{name}: {:?}", trace.status());
        let err = (sc.scene.object_state(trace.final_state())[0] - sc.goal[0]).abs();
        ensure!(err <= 1e-2 && trace.rows.len() <= 500, "{name}: error {err} after {} steps", trace.rows.len());
        let ctl = sc.grasp_controller(GraspConfig::default()).map_err(|e| e.to_string())?;
        let (mut worst_t, mut worst_r) = (0.0f64, 0.0f64);
        for (before, row) in states(&trace) {
            let (t, r) = ctl.grasp_error(&row.q).map_err(|e| e.to_string())?;
            worst_t = worst_t.max(t.norm());
            worst_r = worst_r.max(r.norm());
            let bounds = velocity_bounds(sc.scene.model(), &sc.scene.decision_vars(), &sc.scene.assignment(before), DT)
                .map_err(|e| e.to_string())?;
            for (v, (lo, hi)) in row.qdot.iter().zip(&bounds) {
                ensure!(v >= lo && v <= hi, "{name} step {}: {v} outside [{lo}, {hi}]", row.step);
            }
        }
        ensure!(worst_t <= 5e-3 && worst_r <= 5e-2, "{name}: grasp error {worst_t:e} m / {worst_r:e} rad");
        summary.push(format!("{name} {} steps", trace.rows.len()));
    }
    Ok(summary.join(", "))
}

fn push_checks(name: &str, tolerance: f64) -> Result<usize, String> {
    let sc = scenario(name, DT, 500).map_err(|e| e.to_string())?;
    let trace = sc.run().map_err(|e| e.to_string())?;
    ensure!(trace.status() == &Status::GoalReached, "{name}: {:?}", trace.status());
    let err = (sc.scene.object_state(trace.final_state())[0] - sc.goal[0]).abs();
    ensure!(err <= tolerance, "{name}: final error {err}");
    let contact: Vec<f64> = trace.rows.iter().filter_map(|r| r.ppn).collect();
    ensure!(!contact.is_empty(), "{name}: never in contact");
    let worst = contact.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ensure!(worst <= 1e-6, "{name}: ṗᵀn reached {worst:e}");
    let ctl = sc.push_controller(PushConfig::default()).map_err(|e| e.to_string())?;
    let robot = sc.scene.model().shape("robot.ee").map_err(|e| e.to_string())?;
    for row in &trace.rows {
        let qa = sc.scene.assignment(&row.q);
        for other in ctl.avoided() {
            let d = closest_points(other, robot, &qa, sc.scene.model()).map_err(|e| e.to_string())?.distance;
            ensure!(d >= 0.02 - 1e-4, "{name} step {}: {} at {d}", row.step, other.path);
        }
    }
    Ok(trace.rows.len())
}

fn push_suite() -> Check {
    let drawer = push_checks("push-drawer", 1e-2)?;
    let door = push_checks("push-door", 2e-2)?;
    let sc = scenario("push-garage-locked", DT, 200).map_err(|e| e.to_string())?;
    let trace = sc.run().map_err(|e| e.to_string())?;
    let a = sc
        .scene
        .decision_vars()
        .iter()
        .position(|v| v.name() == "garage.a")
        .ok_or("garage.a is not a decision variable")?;
    let worst = trace.rows.iter().map(|r| r.qdot[a].abs()).fold(0.0, f64::max);
    ensure!(worst <= 1e-6, "locked garage door moved at {worst:e}");
    Ok(format!("drawer {drawer} steps, door {door} steps, locked garage |q̇_a| ≤ {worst:e}"))
}

fn folding_door() -> Check {
    let steps = push_checks("push-folding-door", 2e-2)?;
    Ok(format!("goal reached in {steps} steps"))
}

fn values(def: &Definition, q: &Assignment) -> Vec<f64> {
    match def {
        Definition::Scalar(e) => vec![e.evaluate(q).unwrap()],
        Definition::Matrix(m) => m.evaluate(q).unwrap().iter().copied().collect(),
    }
}

fn mirror_gap(mirror: &BTreeMap<Path, Definition>, server: &ArticulationModel) -> Result<f64, String> {
    let expected: Vec<&Path> = server.definitions().keys().collect();
    ensure!(mirror.keys().collect::<Vec<_>>() == expected, "mirrored path set differs");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let q: Assignment = server.variables().into_iter().map(|v| (v, rng.random_range(0.1..1.9))).collect();
        for (p, d) in mirror {
            for (x, y) in values(d, &q).iter().zip(values(server.get(p).unwrap(), &q)) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    Ok(worst)
}

fn model_server() -> Check {
    const WAIT: Duration = Duration::from_secs(10);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = dir.path().join("store.kmodel");
    let err = |e: kineverse_server::ClientError| e.to_string();
    let server = serve(Default::default(), "127.0.0.1:0", Some(store.clone())).map_err(|e| e.to_string())?;
    let writer = Client::connect(server.local_addr()).map_err(err)?;
    let reader = Client::connect(server.local_addr()).map_err(err)?;
    let seen = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let hook_seen = seen.clone();
    reader
        .subscribe(&[path("garage"), path("drawer")], move |_| {
            hook_seen.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        })
        .map_err(err)?;
    for part in [scenes::garage(100.0), scenes::drawer()] {
        for e in part.map_err(|e| e.to_string())?.entries() {
            writer.apply(Placement::Append, e.tag.clone(), e.op.clone()).map_err(err)?;
        }
    }
    // shape attachments change no definition, so end on one that does
    let marker = Operation::CreateBody(CreateBody {
        name: path("drawer.marker"),
        pose: PoseRef::Literal(IDENTITY_POSE),
    });
    let revision = writer.apply(Placement::Append, "create marker", marker).map_err(err)?;
    reader.wait_for_revision(revision, WAIT).map_err(err)?;
    let before = server.model();
    let gap = mirror_gap(&reader.mirror(), &before)?;
    ensure!(gap <= 1e-12, "mirror deviates by {gap:e}");
    let hooks = seen.load(std::sync::atomic::Ordering::SeqCst);
    ensure!(hooks > 0, "on-change hook never ran");
    let history = server.history();
    drop((writer, reader));
    server.shutdown();

    let restarted = serve(Default::default(), "127.0.0.1:0", Some(store)).map_err(|e| e.to_string())?;
    ensure!(restarted.history() == history, "restored history differs");
    let restored = replay(&restarted.history()).map_err(|e| e.to_string())?;
    ensure!(restored == before && restarted.model() == before, "restored model differs");
    Ok(format!("{revision} revisions, {hooks} hook calls, mirror gap {gap:e}, restart replays equal"))
}

fn chain_product(doc: &UrdfDocument, link: &str, q: &Assignment) -> Matrix4<f64> {
    let Some(j) = doc.joints.iter().find(|j| j.child == link) else {
        return Matrix4::identity();
    };
    let value = match &j.mimic {
        Some(m) => m.multiplier * q.get(&Variable::new(&doc.joint_variable(&m.joint))).unwrap() + m.offset,
        None if j.kind == JointKind::Fixed => 0.0,
        None => q.get(&Variable::new(&doc.joint_variable(&j.name))).unwrap(),
    };
    let axis = Vector3::from(j.axis);
    let motion = match j.kind {
        JointKind::Fixed => Matrix4::identity(),
        JointKind::Revolute | JointKind::Continuous => {
            Rotation3::from_axis_angle(&Unit::new_normalize(axis), value).to_homogeneous()
        }
        JointKind::Prismatic => Translation3::from(axis * value).to_homogeneous(),
    };
    chain_product(doc, &j.parent, q) * Matrix4::from_row_slice(&j.origin.concat()) * motion
}

fn urdf_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    let mut count = 0;
    for file in [
        "two_link_arm.urdf",
        "planar_arm_holonomic.urdf",
        "planar_arm_diffdrive.urdf",
        "drawer.urdf",
        "door.urdf",
        "folding_door.urdf",
    ] {
        let xml = std::fs::read_to_string(fixture(file)).map_err(|e| e.to_string())?;
        let doc = UrdfDocument::parse(&xml).map_err(|e| format!("{file}: {e}"))?;
        let history = doc.to_history().map_err(|e| format!("{file}: {e}"))?;
        let back = load_kmodel(&save_kmodel(&history)).map_err(|e| format!("{file}: {e}"))?;
        ensure!(back == history, "{file}: kmodel round trip changed the history");
        let (m, m2) = (
            replay(&history).map_err(|e| e.to_string())?,
            replay(&back).map_err(|e| e.to_string())?,
        );
        for _ in 0..100 {
            let q: Assignment = doc
                .joints
                .iter()
                .filter(|j| j.kind != JointKind::Fixed && j.mimic.is_none())
                .map(|j| (Variable::new(&doc.joint_variable(&j.name)), rng.random_range(-1.5..1.5)))
                .collect();
            for l in &doc.links {
                let p = path(&format!("{}.{}", doc.name, l.name));
                let got = m.fk(&p).map_err(|e| e.to_string())?.evaluate(&q).map_err(|e| e.to_string())?;
                let again = m2.fk(&p).map_err(|e| e.to_string())?.evaluate(&q).map_err(|e| e.to_string())?;
                let want = chain_product(&doc, &l.name, &q);
                let want = DMatrix::from_column_slice(4, 4, want.as_slice());
                worst = worst.max((&got - want).amax()).max((got - again).amax());
            }
        }
        count += 1;
    }
    ensure!(worst <= 1e-12, "worst FK deviation {worst:e}");
    Ok(format!("{count} fixtures × 100 configurations, worst {worst:e}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("worked evaluation example", worked_example),
        ("gradient examples", gradient_examples),
        ("finite-difference suite", finite_differences),
        ("garage door demo", garage_demo),
        ("EKF experiment", ekf),
        ("grasped controller", grasp_suite),
        ("pushing controller", push_suite),
        ("folding door", folding_door),
        ("model server", model_server),
        ("URDF round trip", urdf_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
