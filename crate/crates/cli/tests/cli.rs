use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use kineverse::artmodel::{path, CreateBody, Operation, Placement, PoseRef};
use kineverse::geometry::IDENTITY_POSE;
use kineverse_server::Client;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_kineverse"));
    c.env_remove("KINEVERSE_STORE");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(name: &str) -> String {
    let own = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    let core = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name);
    let p = if own.exists() { own } else { core };
    p.to_string_lossy().into_owned()
}

fn matrix(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn max_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn fk_evaluates_the_example_transform() {
    let o = run(&["fk", "-m", &fixture("example_transform.kmodel"), "-f", "example.T", "-s", "a=pi", "-s", "b=2"]);
    assert!(o.status.success(), "{o:?}");
    let expected = vec![
        vec![-1.0, 0.0, 0.0, 0.0],
        vec![0.0, -1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 2.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ];
    assert!(max_gap(&matrix(&stdout(&o)), &expected) <= 1e-12);
}

#[test]
fn fk_of_fixed_child_is_constant() {
    let drawer = fixture("drawer.urdf");
    let at = |slide: &str| {
        let o = run(&["fk", "-m", &drawer, "-f", "drawer.cabinet", "-s", &format!("drawer.slide={slide}")]);
        assert!(o.status.success());
        stdout(&o)
    };
    assert_eq!(at("0"), at("0.3"));
    // without any binding as well, since the cabinet has no variables
    let o = run(&["fk", "-m", &drawer, "-f", "drawer.cabinet"]);
    assert_eq!(stdout(&o), at("0"));
}

#[test]
fn fk_errors_exit_one() {
    let o = run(&["fk", "-m", &fixture("example_transform.kmodel"), "-f", "example.T", "-s", "a=pi"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("b"));
    let o = run(&["fk", "-m", &fixture("example_transform.kmodel"), "-f", "nowhere", "-s", "a=1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["fk", "-m", "/does/not/exist.kmodel", "-f", "x"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["fk", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["gradcheck", "--expr", "1", "--tol", "0"]).status.code(), Some(2));
    assert_eq!(run(&["gradcheck", "--expr", "1", "--tol", "-1"]).status.code(), Some(2));
    assert_eq!(run(&["fk", "-m", "x", "-f", "y", "-s", "novalue"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn gradcheck_passes_on_garage_door() {
    let o = run(&["gradcheck", "-m", &fixture("garage.kmodel"), "-f", "garage.door", "--samples", "100", "--tol", "1e-5"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).trim_end().ends_with("PASS"));
}

#[test]
fn gradcheck_reports_overrides() {
    let expr = r#"{"expr":{"op":"mul","args":[{"var":"a"},{"var":"b"}]},"grad":{"a'":{"c":8.0}}}"#;
    let o = run(&["gradcheck", "--expr", expr]);
    let out = stdout(&o);
    assert!(o.status.success(), "{out}");
    assert!(out.contains("override (skipped analytic check)"), "{out}");
}

#[test]
fn gradcheck_violation_exits_one() {
    // central differences across the kink of abs at a ≈ 0
    let o = run(&["gradcheck", "--expr", r#"{"op":"abs","args":[{"var":"a"}]}"#, "--tol", "1e-12", "--samples", "2000"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(1), "{out}");
    assert!(out.trim_end().ends_with("FAIL"));
}

#[test]
fn garage_demo_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("garage.csv");
    let o = run(&["garage-demo", "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let (points, locks) = text.split_once("\n\n").unwrap();
    let rows: Vec<Vec<f64>> = points
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 201);
    let first = &rows[0];
    assert_eq!(first[0], 0.0);
    assert!(first[2].abs() <= 1e-12 && (first[3] - 2.0).abs() <= 1e-12 && first[4].abs() <= 1e-12);
    let last = &rows[200];
    assert_eq!(last[0], 2.0);
    assert!(last[1].abs() <= 1e-12 && (last[2] - 2.0).abs() <= 1e-12);
    assert!(last[3].abs() <= 1e-12 && last[4].abs() <= 1e-12);
    for l in locks.lines().skip(1) {
        let at_a1: f64 = l.split(',').nth(2).unwrap().parse().unwrap();
        assert!(at_a1 >= 0.99);
    }
}

#[test]
fn garage_demo_unwritable_path_exits_one() {
    let o = run(&["garage-demo", "-o", "/nonexistent-dir/garage.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

fn final_errors(csv_text: &str, observations: usize) -> Vec<Vec<f64>> {
    csv_text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|f| f[1] == observations.to_string())
        .map(|f| f[2..f.len() - 1].iter().map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn noiseless_ekf_converges_every_trial() {
    let o = run(&["ekf", "--sigma-t", "0", "--sigma-r", "0", "--trials", "30", "--seed", "4"]);
    assert!(o.status.success());
    let finals = final_errors(&stdout(&o), 25);
    assert_eq!(finals.len(), 30);
    for f in finals {
        assert!(f.iter().all(|e| *e <= 1e-6), "{f:?}");
    }
}

#[test]
fn ekf_is_deterministic_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ekf.json");
    std::fs::write(&cfg, r#"{"dof": 2, "sigma_t": 0.01, "sigma_r": 0.01, "trials": 5, "seed": 3}"#).unwrap();
    let go = || {
        let o = run(&["ekf", "--config", cfg.to_str().unwrap()]);
        assert!(o.status.success());
        final_errors(&stdout(&o), 25)
    };
    let a = go();
    assert_eq!(a.len(), 5);
    assert_eq!(a, go());
    assert_eq!(a[0].len(), 2);
    std::fs::write(&cfg, r#"{"dof": 2, "typo": 1}"#).unwrap();
    assert_eq!(run(&["ekf", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn rollout_push_drawer_reaches_goal() {
    let o = run(&["rollout", "--scenario", "push-drawer"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let header = out.lines().next().unwrap();
    assert!(header.starts_with("step,time_s,") && header.ends_with("contact_distance,ppn,iter_ms,status"));
    assert_eq!(out.lines().last().unwrap().rsplit(',').next(), Some("goal_reached"));
    assert_eq!(run(&["rollout", "--scenario", "no-such-scene"]).status.code(), Some(1));
    let list = stdout(&run(&["rollout", "--list"]));
    assert!(list.lines().any(|l| l == "push-folding-door"));
}

#[test]
fn convert_preserves_fk() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("arm.kmodel");
    let urdf = fixture("planar_arm_holonomic.urdf");
    let o = run(&["convert", &urdf, out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let sets = [
        "robot.base_x=0.3",
        "robot.base_y=-0.2",
        "robot.base_yaw=0.7",
        "robot.j1=0.4",
        "robot.j2=-1.1",
        "robot.j3=0.25",
    ];
    let fk = |model: &str| {
        let mut args = vec!["fk", "-m", model, "-f", "robot.ee"];
        for s in &sets {
            args.extend(["-s", s]);
        }
        let o = run(&args);
        assert!(o.status.success(), "{o:?}");
        matrix(&stdout(&o))
    };
    assert!(max_gap(&fk(&urdf), &fk(out.to_str().unwrap())) <= 1e-12);
    let o = run(&["convert", out.to_str().unwrap(), dir.path().join("x.urdf").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn inspect_lists_model() {
    let o = run(&["inspect", "-m", &fixture("garage.kmodel")]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("attach_garage_door   attach garage.door"));
    assert!(out.contains("garage.door.unlocked [scalar]"));
    assert!(out.contains("attach garage.door/lock"));
}

struct Served {
    child: Child,
    addr: String,
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn spawn_server(store: &PathBuf, model: Option<&str>) -> Served {
    let mut cmd = bin();
    cmd.args(["serve", "--endpoint", "127.0.0.1:0"])
        .env("KINEVERSE_STORE", store)
        .stdout(Stdio::piped())
        .stderr(Stdio::null());
    if let Some(m) = model {
        cmd.args(["-m", m]);
    }
    let mut child = cmd.spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    Served { child, addr }
}

#[test]
fn serve_persists_across_restart() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.kmodel");
    let first = spawn_server(&store, Some(&fixture("garage.kmodel")));
    let c = Client::connect(first.addr.as_str()).unwrap();
    let op = Operation::CreateBody(CreateBody {
        name: path("extra.body"),
        pose: PoseRef::Literal(IDENTITY_POSE),
    });
    assert_eq!(c.apply(Placement::Append, "create extra", op).unwrap(), 1);
    drop(c);
    drop(first);

    // the store wins over the model flag
    let second = spawn_server(&store, None);
    let c = Client::connect(second.addr.as_str()).unwrap();
    c.subscribe(&[path("extra"), path("garage")], |_| {}).unwrap();
    for _ in 0..200 {
        if c.mirror().len() == 4 {
            break;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    let paths: Vec<String> = c.mirror().keys().map(|p| p.to_string()).collect();
    assert_eq!(paths, ["extra.body", "garage.door", "garage.door.unlocked", "garage.rail"]);
}
