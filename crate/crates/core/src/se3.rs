//! Rigid motions in SE(3), their Lie-algebra parameterization, and the
//! correntropy kernel used to score relative-motion residuals.
//!
//! A [`Motion`] is stored as a rotation matrix plus a translation vector and
//! behaves like the 4x4 homogeneous matrix `[R t; 0 1]`. A [`Twist`] holds
//! the six se(3) parameters packed as `[omega; u]` (rotation first).

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector6};
use thiserror::Error;

/// Default tolerance for rotation-matrix checks.
pub const MOTION_TOLERANCE: f64 = 1e-9;

/// `log_motion` refuses rotation angles within this distance of pi.
pub const ANGLE_GUARD: f64 = 1e-6;

/// Smallest admissible kernel width.
pub const SIGMA_FLOOR: f64 = 1e-12;

// Below these angles the closed-form coefficients switch to Taylor series.
const SMALL_ANGLE: f64 = 1e-6;
const SERIES_ANGLE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum Se3Error {
    #[error("rotation angle {angle} rad is within {guard:e} of pi; logarithm branch is ambiguous")]
    AngleNearPi { angle: f64, guard: f64 },
}

/// Rigid transformation `x -> r x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
}

impl Motion {
    pub fn new(r: Matrix3<f64>, t: Vector3<f64>) -> Self {
        Self { r, t }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Matrix3::identity(), Vector3::new(x, y, z))
    }

    /// Pure rotation of `angle` radians about the z axis.
    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        #[rustfmt::skip]
        let r = Matrix3::new(
            c, -s, 0.0,
            s,  c, 0.0,
            0.0, 0.0, 1.0,
        );
        Self::new(r, Vector3::zeros())
    }

    /// Rotation about a (not necessarily unit) axis followed by a translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, t: Vector3<f64>) -> Self {
        let n = axis.norm();
        let omega = if n > 0.0 { axis * (angle / n) } else { Vector3::zeros() };
        let mut m = exp_twist(&Twist::new(omega, Vector3::zeros()));
        m.t = t;
        m
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.r);
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.t);
        h
    }

    /// Reads the top 3x4 block of a homogeneous matrix; the bottom row is ignored.
    pub fn from_homogeneous(h: &Matrix4<f64>) -> Self {
        Self::new(
            h.fixed_view::<3, 3>(0, 0).into_owned(),
            h.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn inverse(&self) -> Self {
        inverse(self)
    }

    pub fn validate(&self, tol: f64) -> Result<(), MotionDefect> {
        validate_motion(self, tol)
    }

    pub fn is_valid(&self) -> bool {
        self.validate(MOTION_TOLERANCE).is_ok()
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let (s, c) = rotation_sin_cos(&self.r);
        s.atan2(c)
    }
}

impl Default for Motion {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Motion {
    type Output = Motion;

    fn mul(self, rhs: Motion) -> Motion {
        compose(&self, &rhs)
    }
}

impl Mul<&Motion> for &Motion {
    type Output = Motion;

    fn mul(self, rhs: &Motion) -> Motion {
        compose(self, rhs)
    }
}

impl fmt::Display for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.r;
        write!(
            f,
            "Motion(r: [[{:.6}, {:.6}, {:.6}], [{:.6}, {:.6}, {:.6}], [{:.6}, {:.6}, {:.6}]], t: [{:.6}, {:.6}, {:.6}])",
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
            self.t[0], self.t[1], self.t[2]
        )
    }
}

/// Element of se(3): rotational part `omega` (radians) and translational part `u`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub omega: Vector3<f64>,
    pub u: Vector3<f64>,
}

impl Twist {
    pub fn new(omega: Vector3<f64>, u: Vector3<f64>) -> Self {
        Self { omega, u }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Packs as `[omega1, omega2, omega3, u1, u2, u3]`.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.omega[0],
            self.omega[1],
            self.omega[2],
            self.u[0],
            self.u[1],
            self.u[2],
        )
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), 6, "twist needs exactly 6 parameters");
        Self::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::from_slice(v.as_slice())
    }

    pub fn max_abs(&self) -> f64 {
        self.omega.amax().max(self.u.amax())
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(self.u.iter()).all(|x| x.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.omega * s, self.u * s)
    }
}

/// Width of the Gaussian correntropy kernel, never below [`SIGMA_FLOOR`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct KernelWidth(f64);

impl KernelWidth {
    pub fn new(sigma: f64) -> Self {
        Self::with_floor(sigma, SIGMA_FLOOR)
    }

    /// Clamps `sigma` to `floor`. A NaN sigma also collapses to the floor.
    pub fn with_floor(sigma: f64, floor: f64) -> Self {
        let floor = if floor > 0.0 { floor } else { SIGMA_FLOOR };
        Self(sigma.max(floor))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Which invariant a candidate motion violates.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MotionDefect {
    #[error("motion has non-finite entries")]
    NonFinite,
    #[error("rotation is not orthonormal (max |r^T r - I| = {deviation:e})")]
    NotOrthonormal { deviation: f64 },
    #[error("rotation determinant is {det}, expected +1")]
    BadDeterminant { det: f64 },
}

/// Checks finiteness, orthonormality and `det(r) = +1`, in that order.
pub fn validate_motion(m: &Motion, tol: f64) -> Result<(), MotionDefect> {
    if !m.r.iter().chain(m.t.iter()).all(|x| x.is_finite()) {
        return Err(MotionDefect::NonFinite);
    }
    let deviation = (m.r.transpose() * m.r - Matrix3::identity()).amax();
    if deviation > tol {
        return Err(MotionDefect::NotOrthonormal { deviation });
    }
    let det = m.r.determinant();
    if (det - 1.0).abs() > tol {
        return Err(MotionDefect::BadDeterminant { det });
    }
    Ok(())
}

/// Homogeneous product `a * b`.
pub fn compose(a: &Motion, b: &Motion) -> Motion {
    let m = Motion::new(a.r * b.r, a.r * b.t + a.t);
    debug_assert!(
        m.validate(1e-6).is_ok() || !(a.is_valid() && b.is_valid()),
        "composition of valid motions drifted off SE(3)"
    );
    m
}

pub fn inverse(m: &Motion) -> Motion {
    let rt = m.r.transpose();
    Motion::new(rt, -(rt * m.t))
}

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    #[rustfmt::skip]
    let h = Matrix3::new(
        0.0, -w[2], w[1],
        w[2], 0.0, -w[0],
        -w[1], w[0], 0.0,
    );
    h
}

fn vee_antisymmetric(m: &Matrix3<f64>) -> Vector3<f64> {
    // (m - m^T) / 2, read off as a 3-vector
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

fn rotation_sin_cos(r: &Matrix3<f64>) -> (f64, f64) {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let s = vee_antisymmetric(r).norm();
    (s, c)
}

/// `sin(t)/t`, `(1 - cos t)/t^2`, `(t - sin t)/t^3`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64) {
    let t2 = theta * theta;
    let a = if theta < SMALL_ANGLE {
        1.0 - t2 / 6.0
    } else {
        theta.sin() / theta
    };
    let b = if theta < SMALL_ANGLE {
        0.5 - t2 / 24.0
    } else {
        let h = (0.5 * theta).sin();
        2.0 * h * h / t2
    };
    let c = if theta < SERIES_ANGLE {
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    } else {
        (theta - theta.sin()) / (t2 * theta)
    };
    (a, b, c)
}

/// Exponential map se(3) -> SE(3).
pub fn exp_twist(x: &Twist) -> Motion {
    let theta = x.omega.norm();
    let w = hat(&x.omega);
    let w2 = w * w;
    let (a, b, c) = rodrigues_coefficients(theta);
    let id = Matrix3::identity();
    let r = id + w * a + w2 * b;
    let v = id + w * b + w2 * c;
    Motion::new(r, v * x.u)
}

fn rotation_log(r: &Matrix3<f64>) -> Result<Vector3<f64>, Se3Error> {
    let (s, c) = rotation_sin_cos(r);
    let theta = s.atan2(c);
    if theta >= PI - ANGLE_GUARD {
        return Err(Se3Error::AngleNearPi {
            angle: theta,
            guard: ANGLE_GUARD,
        });
    }
    let sv = vee_antisymmetric(r);
    if c >= 0.0 {
        let factor = if theta < SMALL_ANGLE {
            1.0 + theta * theta / 6.0
        } else {
            theta / s
        };
        return Ok(sv * factor);
    }
    // Obtuse angles: the antisymmetric part loses precision, so recover the
    // axis from the symmetric part `a a^T = (sym(r) - cos I) / (1 - cos)`.
    let sym = (r + r.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity() * c) / (1.0 - c);
    let k = (0..3)
        .max_by(|&p, &q| outer[(p, p)].total_cmp(&outer[(q, q)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = outer.column(k).into_owned() / outer[(k, k)].max(0.0).sqrt();
    axis.normalize_mut();
    if axis.dot(&sv) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

/// Logarithm SE(3) -> se(3), returned as the six twist parameters.
pub fn log_motion(m: &Motion) -> Result<Twist, Se3Error> {
    let omega = rotation_log(&m.r)?;
    let theta = omega.norm();
    let w = hat(&omega);
    let d = if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / (theta * theta)
    };
    let v_inv = Matrix3::identity() - w * 0.5 + w * w * d;
    Ok(Twist::new(omega, v_inv * m.t))
}

/// `|| rel - mi^-1 mj ||_F` over the full homogeneous matrices.
pub fn frobenius_residual(rel: &Motion, mi: &Motion, mj: &Motion) -> f64 {
    let predicted = compose(&inverse(mi), mj);
    let dr = (rel.r - predicted.r).norm_squared();
    let dt = (rel.t - predicted.t).norm_squared();
    (dr + dt).sqrt()
}

/// Gaussian kernel `exp(-e^2 / (2 sigma^2))`.
///
/// The result is clamped to the smallest positive normal `f64` so that it
/// stays in `(0, 1]` when the exponential would underflow (|e| beyond ~37.6
/// sigma).
pub fn gaussian_kernel(e: f64, sigma: KernelWidth) -> f64 {
    let s = sigma.get();
    (-(e * e) / (2.0 * s * s)).exp().max(f64::MIN_POSITIVE)
}

/// Correntropy loss `sum sigma^2 (1 - G_sigma(e))`. Each term is at most `sigma^2`.
pub fn correntropy_loss(residuals: &[f64], sigma: KernelWidth) -> f64 {
    let s2 = sigma.get() * sigma.get();
    residuals
        .iter()
        .map(|&e| s2 * (1.0 - gaussian_kernel(e, sigma)))
        .sum()
}
