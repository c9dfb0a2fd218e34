//! SE(3) poses and the world-frame error transform used by static-reference
//! tracking.
//!
//! A [`Pose`] is the 6-vector `[tx, ty, tz, rx, ry, rz]`: a translation in
//! meters plus an angle-axis rotation vector in radians. Rotation vectors are
//! kept canonical with magnitude in `[0, pi]`. A [`Transform`] is the matrix
//! form (3x3 rotation plus translation) used for composition.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Below this angle the exponential/logarithm use their series expansions to
/// avoid dividing by a small angle.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Cartesian pose: translation plus angle-axis rotation vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Translation in meters.
    pub t: Vector3<f64>,
    /// Rotation vector (axis times angle), radians, canonical `‖r‖ ∈ [0, π]`.
    pub r: Vector3<f64>,
}

impl Pose {
    /// Builds a pose, canonicalizing the rotation vector.
    pub fn new(t: Vector3<f64>, r: Vector3<f64>) -> Self {
        Pose {
            t,
            r: canonical_rotation_vector(&r),
        }
    }

    pub fn identity() -> Self {
        Pose {
            t: Vector3::zeros(),
            r: Vector3::zeros(),
        }
    }

    /// Pure translation with zero orientation.
    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose {
            t: Vector3::new(x, y, z),
            r: Vector3::zeros(),
        }
    }

    /// True if every rotation-vector component is within `tol` of zero.
    pub fn orientation_is_zero(&self, tol: f64) -> bool {
        self.r.amax() <= tol
    }

    pub fn to_transform(&self) -> Transform {
        Transform {
            rot: rotation_from_vector(&self.r),
            t: self.t,
        }
    }

    pub fn from_transform(tf: &Transform) -> Self {
        Pose {
            t: tf.t,
            r: vector_from_rotation(&tf.rot),
        }
    }

    /// Serialization order used by every file format: `[tx, ty, tz, rx, ry, rz]`.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.t.x, self.t.y, self.t.z, self.r.x, self.r.y, self.r.z,
        ]
    }

    pub fn from_array(a: &[f64; 6]) -> Self {
        Pose::new(
            Vector3::new(a[0], a[1], a[2]),
            Vector3::new(a[3], a[4], a[5]),
        )
    }

    pub fn to_vector6(&self) -> Vector6<f64> {
        Vector6::new(
            self.t.x, self.t.y, self.t.z, self.r.x, self.r.y, self.r.z,
        )
    }
}

/// Rigid transform in matrix form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform {
    /// Rotation matrix; orthonormal with determinant +1.
    pub rot: Matrix3<f64>,
    /// Translation in meters.
    pub t: Vector3<f64>,
}

impl Transform {
    pub fn identity() -> Self {
        Transform {
            rot: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rot.transpose();
        Transform {
            rot: rt,
            t: -(rt * self.t),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.t);
        m
    }

    /// `‖RᵀR − I‖_∞`, a cheap orthonormality defect measure.
    pub fn orthonormality_defect(&self) -> f64 {
        (self.rot.transpose() * self.rot - Matrix3::identity()).amax()
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot * p + self.t
    }
}

/// Skew-symmetric matrix `[v]×` with `[v]× a = v × a`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Rotation-matrix exponential of a rotation vector (Rodrigues formula, with
/// a second-order series below [`SMALL_ANGLE`]).
pub fn rotation_from_vector(r: &Vector3<f64>) -> Matrix3<f64> {
    let theta = r.norm();
    let k = skew(r);
    if theta < SMALL_ANGLE {
        Matrix3::identity() + k + k * k * 0.5
    } else {
        let axis_k = k / theta;
        Matrix3::identity()
            + axis_k * theta.sin()
            + axis_k * axis_k * (1.0 - theta.cos())
    }
}

/// Logarithm of a rotation matrix as a canonical rotation vector.
pub fn vector_from_rotation(rot: &Matrix3<f64>) -> Vector3<f64> {
    let cos_theta = ((rot.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let vee = Vector3::new(
        rot[(2, 1)] - rot[(1, 2)],
        rot[(0, 2)] - rot[(2, 0)],
        rot[(1, 0)] - rot[(0, 1)],
    );
    let sin_theta = (vee.norm() / 2.0).min(1.0);
    // atan2 keeps the angle well conditioned away from pi; acos on the trace
    // alone loses half the significant digits there.
    let theta = sin_theta.atan2(cos_theta);
    let r = if theta < SMALL_ANGLE {
        // R ≈ I + [r]x: the antisymmetric part carries the vector.
        vee * 0.5
    } else if theta < std::f64::consts::PI - 1e-3 {
        vee * (theta / (2.0 * theta.sin()))
    } else {
        // Near pi the antisymmetric part cancels; recover the axis from the
        // symmetric part: R + Rᵀ = 2cosθ·I + 2(1−cosθ)·aaᵀ.
        let theta = std::f64::consts::PI - sin_theta.asin();
        let b = (rot + rot.transpose()) / 2.0;
        let one_minus = 1.0 - cos_theta;
        let diag = Vector3::new(
            ((b[(0, 0)] - cos_theta) / one_minus).max(0.0),
            ((b[(1, 1)] - cos_theta) / one_minus).max(0.0),
            ((b[(2, 2)] - cos_theta) / one_minus).max(0.0),
        );
        let k = diag.imax();
        let ak = diag[k].sqrt();
        let mut axis = Vector3::zeros();
        axis[k] = ak;
        for i in 0..3 {
            if i != k {
                axis[i] = b[(i, k)] / (one_minus * ak);
            }
        }
        axis.normalize_mut();
        // The symmetric part fixes the axis only up to sign; take the sign
        // from the antisymmetric part while it is nonzero.
        if vee.dot(&axis) < 0.0 {
            axis = -axis;
        }
        axis * theta
    };
    canonical_rotation_vector(&r)
}

/// Maps a rotation vector to the equivalent representative with magnitude in
/// `[0, π]`. At exactly `π` the representative with lexicographically
/// non-negative leading component is chosen.
pub fn canonical_rotation_vector(r: &Vector3<f64>) -> Vector3<f64> {
    let theta = r.norm();
    if theta == 0.0 {
        return *r;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let axis = r / theta;
    let mut theta_m = theta.rem_euclid(two_pi);
    let mut axis_c = axis;
    if theta_m > std::f64::consts::PI {
        theta_m = two_pi - theta_m;
        axis_c = -axis_c;
    }
    let mut out = axis_c * theta_m;
    if (theta_m - std::f64::consts::PI).abs() <= 1e-12 {
        for i in 0..3 {
            if out[i].abs() > 1e-12 {
                if out[i] < 0.0 {
                    out = -out;
                }
                break;
            }
        }
    }
    out
}

/// Matrix product `T(a)·T(b)`.
pub fn compose(a: &Transform, b: &Transform) -> Transform {
    Transform {
        rot: a.rot * b.rot,
        t: a.rot * b.t + a.t,
    }
}

/// World-frame error transform from `p0` to `p1`: the pose `e` satisfying
/// `T(e)·T(p0) = T(p1)`.
pub fn pose_error(p1: &Pose, p0: &Pose) -> Pose {
    let t1 = p1.to_transform();
    let t0 = p0.to_transform();
    let err = compose(&t1, &t0.inverse());
    Pose::from_transform(&err)
}

/// Applies a world-frame error transform onto a reference pose:
/// the pose of `T(err)·T(reference)`.
pub fn apply_error_on_reference(err: &Pose, reference: &Pose) -> Pose {
    let e = err.to_transform();
    let r = reference.to_transform();
    Pose::from_transform(&compose(&e, &r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Independent 4x4 homogeneous-matrix oracle.
    fn hom(p: &Pose) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&rotation_from_vector(&p.r));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.t);
        m
    }

    fn max_abs_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
        (a - b).amax()
    }

    fn random_pose(rng: &mut rand_chacha::ChaCha8Rng) -> Pose {
        let t = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let r = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        Pose::new(t, r)
    }

    #[test]
    fn compose_identity() {
        let c = compose(&Transform::identity(), &Transform::identity());
        assert_eq!(c.rot, Matrix3::identity());
        assert_eq!(c.t, Vector3::zeros());
    }

    #[test]
    fn compose_pure_translations_add() {
        let a = Pose::from_translation(1.0, 0.0, 0.0).to_transform();
        let b = Pose::from_translation(0.0, 2.0, 0.0).to_transform();
        let c = compose(&a, &b);
        assert_eq!(c.t, Vector3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn compose_rotation_then_translation() {
        // rotZ(pi/2) composed with translate(1,0,0) carries the translation
        // into (0,1,0); verified against the homogeneous-matrix oracle.
        let rot_z = Pose::new(Vector3::zeros(), Vector3::new(0.0, 0.0, FRAC_PI_2));
        let trans = Pose::from_translation(1.0, 0.0, 0.0);
        let c = compose(&rot_z.to_transform(), &trans.to_transform());
        assert!((c.t - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        let oracle = hom(&rot_z) * hom(&trans);
        assert!(max_abs_diff(&Transform { rot: c.rot, t: c.t }.to_homogeneous(), &oracle) < 1e-12);
    }

    #[test]
    fn compose_matches_matrix_oracle_on_random_pairs() {
        let mut rng = crate::rng::stream(11, &[0]);
        for _ in 0..200 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = compose(&a.to_transform(), &b.to_transform());
            let oracle = hom(&a) * hom(&b);
            assert!(max_abs_diff(&c.to_homogeneous(), &oracle) < 1e-12);
        }
    }

    #[test]
    fn pose_error_of_self_is_zero() {
        let mut rng = crate::rng::stream(12, &[0]);
        for _ in 0..20 {
            let p = random_pose(&mut rng);
            let e = pose_error(&p, &p);
            assert!(e.t.norm() < 1e-12);
            assert!(e.r.norm() < 1e-12);
        }
    }

    #[test]
    fn pose_error_pure_translation() {
        let p1 = Pose::from_translation(1.0, 0.0, 0.0);
        let p0 = Pose::identity();
        let e = pose_error(&p1, &p0);
        assert_eq!(e.t, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(e.r, Vector3::zeros());
    }

    #[test]
    fn pose_error_reconstructs_via_matrix_oracle() {
        let mut rng = crate::rng::stream(13, &[0]);
        for _ in 0..200 {
            let p0 = random_pose(&mut rng);
            let p1 = random_pose(&mut rng);
            let e = pose_error(&p1, &p0);
            // T(err)·T(p0) = T(p1)
            let lhs = hom(&e) * hom(&p0);
            assert!(max_abs_diff(&lhs, &hom(&p1)) < 1e-10);
        }
    }

    #[test]
    fn apply_error_identity_and_inverse_pair() {
        let mut rng = crate::rng::stream(14, &[0]);
        for _ in 0..50 {
            let reference = random_pose(&mut rng);
            let back = apply_error_on_reference(&Pose::identity(), &reference);
            assert!((back.t - reference.t).norm() < 1e-12);
            assert!((back.r - reference.r).norm() < 1e-12);

            let p1 = random_pose(&mut rng);
            let err = pose_error(&p1, &reference);
            let again = apply_error_on_reference(&err, &reference);
            assert!((again.t - p1.t).norm() < 1e-9);
            assert!((again.r - p1.r).norm() < 1e-9);
        }
    }

    #[test]
    fn apply_error_matches_matrix_oracle() {
        let mut rng = crate::rng::stream(15, &[0]);
        for _ in 0..200 {
            let e = random_pose(&mut rng);
            let reference = random_pose(&mut rng);
            let out = apply_error_on_reference(&e, &reference);
            let oracle = hom(&e) * hom(&reference);
            assert!(max_abs_diff(&hom(&out), &oracle) < 1e-10);
        }
    }

    #[test]
    fn rotation_round_trip_small_and_large_angles() {
        for &theta in &[0.0, 1e-12, 1e-9, 1e-7, 0.5, 1.0, 3.0, PI - 1e-9, PI] {
            let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
            let r = axis * theta;
            let rot = rotation_from_vector(&r);
            let back = vector_from_rotation(&rot);
            let expect = canonical_rotation_vector(&r);
            assert!(
                (back - expect).norm() < 1e-9,
                "theta {theta}: {back:?} vs {expect:?}"
            );
        }
    }

    #[test]
    fn canonicalization_wraps_large_angles() {
        let axis = Vector3::new(0.0, 0.0, 1.0);
        // 3pi/2 about +Z equals pi/2 about -Z.
        let r = canonical_rotation_vector(&(axis * (1.5 * PI)));
        assert!((r - Vector3::new(0.0, 0.0, -FRAC_PI_2)).norm() < 1e-12);
        // Exactly pi: leading nonzero component must be non-negative.
        let r = canonical_rotation_vector(&Vector3::new(-PI, 0.0, 0.0));
        assert!((r - Vector3::new(PI, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn transform_invariants_hold_for_exponentials() {
        let mut rng = crate::rng::stream(16, &[0]);
        for _ in 0..100 {
            let p = random_pose(&mut rng);
            let tf = p.to_transform();
            assert!(tf.orthonormality_defect() <= 1e-10);
            assert!((tf.rot.determinant() - 1.0).abs() <= 1e-10);
        }
    }

    proptest! {
        #[test]
        fn prop_pose_transform_round_trip(
            tx in -2.0..2.0f64, ty in -2.0..2.0f64, tz in -2.0..2.0f64,
            rx in -3.0..3.0f64, ry in -3.0..3.0f64, rz in -3.0..3.0f64,
        ) {
            let p = Pose::new(Vector3::new(tx, ty, tz), Vector3::new(rx, ry, rz));
            let q = Pose::from_transform(&p.to_transform());
            prop_assert!((p.t - q.t).amax() < 1e-12);
            prop_assert!((p.r - q.r).amax() < 1e-9);
        }

        #[test]
        fn prop_error_round_trip(
            a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64,
            d in -2.5..2.5f64, e in -2.5..2.5f64, f in -2.5..2.5f64,
            g in -1.0..1.0f64, h in -1.0..1.0f64, i in -1.0..1.0f64,
            j in -2.5..2.5f64, k in -2.5..2.5f64, l in -2.5..2.5f64,
        ) {
            let p0 = Pose::new(Vector3::new(a, b, c), Vector3::new(d, e, f));
            let p1 = Pose::new(Vector3::new(g, h, i), Vector3::new(j, k, l));
            let back = apply_error_on_reference(&pose_error(&p1, &p0), &p0);
            prop_assert!((back.t - p1.t).norm() < 1e-9);
            prop_assert!((back.r - p1.r).norm() < 1e-9);
        }

        #[test]
        fn prop_compose_associative(
            seed in 0u64..1_000_000u64,
        ) {
            let mut rng = crate::rng::stream(seed, &[7]);
            let a = random_pose(&mut rng).to_transform();
            let b = random_pose(&mut rng).to_transform();
            let c = random_pose(&mut rng).to_transform();
            let left = compose(&compose(&a, &b), &c);
            let right = compose(&a, &compose(&b, &c));
            prop_assert!((left.to_homogeneous() - right.to_homogeneous()).amax() < 1e-9);
        }
    }
}
