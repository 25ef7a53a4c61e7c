//! Hamilton-convention quaternion <-> rotation matrix conversion.
//!
//! Quaternions are written `(x, y, z, w)` as in g2o files.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion};
use thiserror::Error;

/// Allowed deviation of a quaternion norm from 1 before it is rejected.
pub const UNIT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("quaternion norm {norm} deviates from 1 by more than {UNIT_TOLERANCE}")]
pub struct NonUnitQuaternion {
    pub norm: f64,
}

/// Normalizes `q = (x, y, z, w)` and converts it to a rotation matrix.
pub fn quaternion_to_rotation(q: [f64; 4]) -> Result<Matrix3<f64>, NonUnitQuaternion> {
    let [x, y, z, w] = q;
    let quat = Quaternion::new(w, x, y, z);
    let norm = quat.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(NonUnitQuaternion { norm });
    }
    Ok(UnitQuaternion::from_quaternion(quat)
        .to_rotation_matrix()
        .into_inner())
}

/// Rotation matrix to `(x, y, z, w)` with the sign fixed so that `w > 0`, or,
/// when `w == 0`, the first nonzero of `x, y, z` is positive.
pub fn rotation_to_quaternion(r: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    canonical_sign([q.i, q.j, q.k, q.w])
}

pub fn canonical_sign(q: [f64; 4]) -> [f64; 4] {
    let [x, y, z, w] = q;
    let leading = if w != 0.0 {
        w
    } else {
        [x, y, z].into_iter().find(|c| *c != 0.0).unwrap_or(1.0)
    };
    if leading < 0.0 {
        [-x, -y, -z, -w]
    } else {
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::Motion;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn identity_quaternion() {
        assert_eq!(quaternion_to_rotation([0.0, 0.0, 0.0, 1.0]).unwrap(), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        // axis-angle oracle: q = (axis sin(theta/2), cos(theta/2))
        let s = FRAC_PI_4.sin();
        let c = FRAC_PI_4.cos();
        let r = quaternion_to_rotation([0.0, 0.0, s, c]).unwrap();
        assert!((r - Motion::rot_z(FRAC_PI_2).r).amax() < 1e-15);
        let q = rotation_to_quaternion(&r);
        assert!((q[2] - s).abs() < 1e-15 && (q[3] - c).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_unit() {
        let err = quaternion_to_rotation([0.0, 0.0, 2.0, 0.0]).unwrap_err();
        assert_eq!(err.norm, 2.0);
        assert!(quaternion_to_rotation([0.0, 0.0, 0.0, 1.0005]).is_ok());
        assert!(quaternion_to_rotation([f64::NAN, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn half_turn_sign_convention() {
        let exact = Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, -1.0, 1.0));
        let q = rotation_to_quaternion(&exact);
        assert_eq!(q[3], 0.0);
        assert_eq!(q[2], 1.0);
        let q = rotation_to_quaternion(&Motion::rot_z(PI).r);
        assert!(q[3].abs() < 1e-15 && (q[2] - 1.0).abs() < 1e-15);
        assert_eq!(canonical_sign([0.0, -1.0, 0.0, 0.0]), [-0.0, 1.0, -0.0, -0.0]);
        assert_eq!(canonical_sign([0.1, 0.2, 0.3, -0.9]), [-0.1, -0.2, -0.3, 0.9]);
    }
}
