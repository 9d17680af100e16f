//! Sweep of the garage door closed form and its lock indicator.

use std::io::Write;

use anyhow::{Context, Result};
use kineverse::artmodel::{
    path, replay, ArticulationModel, AttachGarageDoor, CreateBody, Operation, OperationHistory, PoseRef,
};
use kineverse::symexpr::{Assignment, Variable};
use nalgebra::{Matrix4, Vector4};

pub const SAMPLES: usize = 201;
pub const RAIL_LENGTH: f64 = 2.0;
pub const FRACTIONS: [f64; 3] = [0.25, 0.5, 0.75];

const HALF_TURN: [[f64; 4]; 4] = [
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

pub const POINT_HEADER: [&str; 11] = ["a", "Ax", "Az", "Bx", "Bz", "P25x", "P25z", "P50x", "P50z", "P75x", "P75z"];
pub const LOCK_HEADER: [&str; 3] = ["b", "unlocked_at_a2", "unlocked_at_a1"];

/// Door on a rail at the world origin, turned half way about z so that it
/// opens toward +x: `garage.a` slides the top edge `A` up the z-axis while
/// the bottom edge `B` runs along x.
pub fn garage_model(sharpness: f64) -> Result<ArticulationModel> {
    let mut h = OperationHistory::new();
    h.push(
        "create garage.rail",
        Operation::CreateBody(CreateBody {
            name: path("garage.rail"),
            pose: PoseRef::Literal(HALF_TURN),
        }),
    )?;
    h.push(
        "attach garage.door",
        Operation::AttachGarageDoor(AttachGarageDoor {
            parent: path("garage.rail"),
            door: path("garage.door"),
            rail_length: RAIL_LENGTH,
            var: "garage.a".into(),
            lock_var: "garage.b".into(),
            lock_threshold: 0.3,
            closed_threshold: 1.99,
            sharpness,
        }),
    )?;
    Ok(replay(&h)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRow {
    pub a: f64,
    pub a_pt: [f64; 2],
    pub b_pt: [f64; 2],
    /// `P_f` for each of [`FRACTIONS`].
    pub p: [[f64; 2]; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockRow {
    pub b: f64,
    pub unlocked_at_a2: f64,
    pub unlocked_at_a1: f64,
}

fn grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..SAMPLES).map(move |i| lo + (hi - lo) * i as f64 / (SAMPLES - 1) as f64)
}

fn assignment(a: f64, b: f64) -> Assignment {
    [(Variable::new("garage.a"), a), (Variable::new("garage.b"), b)]
        .into_iter()
        .collect()
}

/// World x and z of the door point a fraction `f` of the way from A to B.
fn door_point(t: &Matrix4<f64>, f: f64) -> [f64; 2] {
    let w = t * Vector4::new(0.0, 0.0, -RAIL_LENGTH * f, 1.0);
    [w.x, w.z]
}

pub fn sweep(model: &ArticulationModel) -> Result<(Vec<PointRow>, Vec<LockRow>)> {
    let fk = model.fk(&path("garage.door"))?;
    let unlocked = model.scalar(&path("garage.door.unlocked"))?;
    let mut points = Vec::with_capacity(SAMPLES);
    for a in grid(0.0, RAIL_LENGTH) {
        let m = fk.evaluate(&assignment(a, 0.0))?;
        let t: Matrix4<f64> = m.fixed_view::<4, 4>(0, 0).into_owned();
        points.push(PointRow {
            a,
            a_pt: door_point(&t, 0.0),
            b_pt: door_point(&t, 1.0),
            p: FRACTIONS.map(|f| door_point(&t, f)),
        });
    }
    let mut locks = Vec::with_capacity(SAMPLES);
    for b in grid(0.0, 1.0) {
        locks.push(LockRow {
            b,
            unlocked_at_a2: unlocked.evaluate(&assignment(2.0, b))?,
            unlocked_at_a1: unlocked.evaluate(&assignment(1.0, b))?,
        });
    }
    Ok((points, locks))
}

/// Both blocks, each with its header, separated by an empty line.
pub fn write_csv(out: &mut impl Write, points: &[PointRow], locks: &[LockRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(POINT_HEADER)?;
    for r in points {
        let mut rec = vec![r.a, r.a_pt[0], r.a_pt[1], r.b_pt[0], r.b_pt[1]];
        rec.extend(r.p.iter().flatten());
        w.write_record(rec.iter().map(f64::to_string))?;
    }
    let mut text = w.into_inner().context("csv buffer")?;
    text.push(b'\n');
    let mut w = csv::Writer::from_writer(text);
    w.write_record(LOCK_HEADER)?;
    for r in locks {
        w.write_record([r.b, r.unlocked_at_a2, r.unlocked_at_a1].map(|x| x.to_string()))?;
    }
    out.write_all(&w.into_inner().context("csv buffer")?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let (pts, locks) = sweep(&garage_model(100.0).unwrap()).unwrap();
        assert_eq!(pts.len(), SAMPLES);
        assert_eq!(locks.len(), SAMPLES);
        let closed = pts.last().unwrap();
        assert_eq!(closed.a, 2.0);
        assert!(closed.a_pt[0].abs() < 1e-12 && (closed.a_pt[1] - 2.0).abs() < 1e-12);
        assert!(closed.b_pt[0].abs() < 1e-12 && closed.b_pt[1].abs() < 1e-12);
        let open = pts[0];
        assert!(open.a_pt[1].abs() < 1e-12);
        assert!((open.b_pt[0] - 2.0).abs() < 1e-12 && open.b_pt[1].abs() < 1e-12);
    }

    #[test]
    fn csv_has_two_blocks() {
        let (pts, locks) = sweep(&garage_model(100.0).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &pts, &locks).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let blocks: Vec<&str> = text.split("\n\n").collect();
        assert_eq!(blocks.len(), 2);
        assert!(blocks[0].starts_with("a,Ax,Az,Bx,Bz,P25x"));
        assert!(blocks[1].starts_with("b,unlocked_at_a2,unlocked_at_a1"));
        assert_eq!(blocks[0].lines().count(), SAMPLES + 1);
        assert_eq!(blocks[1].lines().count(), SAMPLES + 1);
    }
}
