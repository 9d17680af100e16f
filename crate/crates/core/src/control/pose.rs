use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};

use super::ControlError;

fn is_rigid(m: &Matrix4<f64>) -> bool {
    let r = m.fixed_view::<3, 3>(0, 0);
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    let bottom = (m[(3, 0)].abs() + m[(3, 1)].abs() + m[(3, 2)].abs() + (m[(3, 3)] - 1.0).abs()) <= 1e-6;
    ortho <= 1e-6 && r.determinant() > 0.0 && bottom
}

/// Rotation vector (axis times angle in `[0, π]`) of a rotation matrix.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    let (w, v) = (q.w, q.imag());
    let (w, v) = if w < 0.0 { (-w, -v) } else { (w, v) };
    let s = v.norm();
    if s == 0.0 {
        return Vector3::zeros();
    }
    v * (2.0 * s.atan2(w) / s)
}

/// Difference `A⁻¹B` of two rigid transforms as (translation, rotation
/// vector). Both parts are zero iff `A = B`.
pub fn pose_error(a: &Matrix4<f64>, b: &Matrix4<f64>) -> Result<(Vector3<f64>, Vector3<f64>), ControlError> {
    if !is_rigid(a) || !is_rigid(b) {
        return Err(ControlError::NonRigidInput);
    }
    let ra = a.fixed_view::<3, 3>(0, 0).into_owned();
    let rb = b.fixed_view::<3, 3>(0, 0).into_owned();
    let ta = a.fixed_view::<3, 1>(0, 3).into_owned();
    let tb = b.fixed_view::<3, 1>(0, 3).into_owned();
    let rel = ra.transpose() * rb;
    Ok((ra.transpose() * (tb - ta), rotation_log(&rel)))
}
