//! Rotation-matrix helpers: hat map, Rodrigues exponential, re-orthonormalization.

use nalgebra::{Matrix3, Vector3};

/// Skew-symmetric matrix `[w]x` such that `[w]x * v == w.cross(v)`.
#[inline]
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Exponential map of a rotation vector via Rodrigues' formula.
///
/// Uses the second-order Taylor expansion of the coefficients near zero so
/// small angles keep full precision.
pub fn exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta_sq = phi.norm_squared();
    let k = skew(phi);
    let (a, b) = if theta_sq < 1e-12 {
        // sin(t)/t and (1 - cos(t))/t^2
        (1.0 - theta_sq / 6.0, 0.5 - theta_sq / 24.0)
    } else {
        let theta = theta_sq.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta_sq)
    };
    Matrix3::identity() + k * a + (k * k) * b
}

/// Classical Gram-Schmidt on the columns, in place.
///
/// The third column is rebuilt as the cross product of the first two so the
/// result is always right-handed.
pub fn orthonormalize(r: &mut Matrix3<f64>) {
    let c0 = r.column(0).normalize();
    let c1 = r.column(1) - c0 * c0.dot(&r.column(1));
    let c1 = c1.normalize();
    let c2 = c0.cross(&c1);
    r.set_column(0, &c0);
    r.set_column(1, &c1);
    r.set_column(2, &c2);
}

/// Largest absolute entry of `RᵀR − I`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Rotation about world z by `yaw` radians.
pub fn rot_z(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn skew_matches_cross_product() {
        let w = Vector3::new(0.3, -1.2, 2.0);
        let v = Vector3::new(-0.7, 0.1, 0.4);
        assert!((skew(&w) * v - w.cross(&v)).norm() < 1e-15);
    }

    #[test]
    fn exp_of_half_turn_about_z() {
        let r = exp(&Vector3::new(0.0, 0.0, PI));
        let expected = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        assert!((r - expected).abs().max() < 1e-15);
    }

    #[test]
    fn exp_matches_rot_z() {
        for &a in &[1e-9, 1e-4, 0.3, 2.0, -2.5] {
            let r = exp(&Vector3::new(0.0, 0.0, a));
            assert!((r - rot_z(a)).abs().max() < 1e-15, "angle {a}");
        }
    }

    #[test]
    fn tiny_angle_branch_is_continuous() {
        let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
        let below = exp(&(axis * 0.999e-6));
        let above = exp(&(axis * 1.001e-6));
        assert!((below - above).abs().max() < 1e-8);
        assert!(orthonormality_error(&below) < 1e-15);
    }

    #[test]
    fn orthonormalize_repairs_drift() {
        let mut r = exp(&Vector3::new(0.4, -0.2, 1.1));
        r[(0, 1)] += 1e-6;
        r[(2, 0)] -= 3e-7;
        assert!(orthonormality_error(&r) > 1e-7);
        orthonormalize(&mut r);
        assert!(orthonormality_error(&r) < 1e-15);
        assert!((r.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn orthonormalize_keeps_identity_exact() {
        let mut r = Matrix3::identity();
        orthonormalize(&mut r);
        assert_eq!(r, Matrix3::identity());
    }
}
