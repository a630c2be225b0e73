//! Rigid poses, trajectory interpolation, pinhole projection, the LED rig and
//! the isotropic half/difference angle reduction.
//!
//! Conventions: a [`Pose`] maps camera coordinates to world coordinates
//! (`world = R * cam + t`), so its translation is the camera centre. Cameras
//! look down +z with +x to the right and +y down the image.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Camera-frame depth below which a point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;

/// Above this |dot| slerp falls back to normalized lerp.
const SLERP_LERP_THRESHOLD: f64 = 1.0 - 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("interpolation time {t} outside [{t0}, {t1}]")]
    OutOfInterval { t: f64, t0: f64, t1: f64 },
    #[error("zero-length or reversed pose interval [{t0}, {t1}]")]
    EmptyInterval { t0: f64, t1: f64 },
    #[error("invalid camera intrinsics: {0}")]
    InvalidCamera(String),
    #[error("invalid LED rig: {0}")]
    InvalidRig(String),
    #[error("incident or outgoing direction is below the surface")]
    BackFacing,
    #[error("half vector undefined for opposite directions")]
    OppositeDirections,
    #[error("angles out of range: theta_h={theta_h}, theta_d={theta_d}")]
    AngleRange { theta_h: f64, theta_d: f64 },
    #[error("degenerate vector")]
    Degenerate,
}

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds a quaternion and normalizes it. A zero input yields identity.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Self::IDENTITY;
        }
        Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    /// Rotation by `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let a = axis / n;
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, a.x * s, a.y * s, a.z * s)
    }

    /// Rotation taking unit vector `from` onto unit vector `to` along the shortest arc.
    pub fn rotation_between(from: &Vec3, to: &Vec3) -> Self {
        let f = from.normalize();
        let t = to.normalize();
        let d = f.dot(&t);
        if d < -1.0 + 1e-12 {
            // antiparallel: any orthogonal axis works
            let ortho = if f.x.abs() < 0.9 {
                Vec3::x().cross(&f)
            } else {
                Vec3::y().cross(&f)
            };
            return Self::from_axis_angle(&ortho, std::f64::consts::PI);
        }
        let c = f.cross(&t);
        Self::new(1.0 + d, c.x, c.y, c.z)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn components(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product `self * rhs` (apply `rhs` first).
    pub fn mul(&self, rhs: &Quaternion) -> Self {
        let (a, b) = (self, rhs);
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.to_matrix() * v
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Rotation angle in radians between the two orientations, in [0, pi].
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        2.0 * self.dot(other).abs().min(1.0).acos()
    }
}

/// Spherical linear interpolation along the shorter arc.
pub fn slerp(q0: &Quaternion, q1: &Quaternion, u: f64) -> Quaternion {
    let a = Quaternion::new(q0.w, q0.x, q0.y, q0.z);
    let mut b = Quaternion::new(q1.w, q1.x, q1.y, q1.z);
    let mut d = a.dot(&b);
    if d < 0.0 {
        b = Quaternion {
            w: -b.w,
            x: -b.x,
            y: -b.y,
            z: -b.z,
        };
        d = -d;
    }
    let (s0, s1) = if d > SLERP_LERP_THRESHOLD {
        (1.0 - u, u)
    } else {
        let theta = d.min(1.0).acos();
        let sin_theta = theta.sin();
        (
            ((1.0 - u) * theta).sin() / sin_theta,
            (u * theta).sin() / sin_theta,
        )
    };
    Quaternion::new(
        s0 * a.w + s1 * b.w,
        s0 * a.x + s1 * b.x,
        s0 * a.y + s1 * b.y,
        s0 * a.z + s1 * b.z,
    )
}

/// Rigid transform from camera to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Quaternion,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: Quaternion::IDENTITY,
        translation: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn new(rotation: Quaternion, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Camera at `eye` with its optical axis pointing at `target`. `up` is
    /// approximately the world direction that should appear as image "up".
    pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Result<Self, GeometryError> {
        let forward = target - eye;
        if forward.norm() == 0.0 {
            return Err(GeometryError::Degenerate);
        }
        let z = forward.normalize();
        let right = z.cross(up);
        if right.norm() < 1e-12 {
            return Err(GeometryError::Degenerate);
        }
        let x = right.normalize();
        let y = z.cross(&x);
        let m = Matrix3::from_columns(&[x, y, z]);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(m);
        let q = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
        Ok(Self::new(
            Quaternion::new(q.w, q.i, q.j, q.k),
            *eye,
        ))
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    /// World point expressed in camera coordinates.
    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.to_matrix().transpose() * (p - self.translation)
    }

    /// `self ∘ rhs`: applies `rhs` first.
    pub fn compose(&self, rhs: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.mul(&rhs.rotation),
            translation: self.rotation.rotate(&rhs.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.conjugate();
        Pose {
            rotation: r,
            translation: -r.rotate(&self.translation),
        }
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.translation
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub pose: Pose,
    pub timestamp: f64,
}

impl TimedPose {
    pub fn new(pose: Pose, timestamp: f64) -> Self {
        Self { pose, timestamp }
    }
}

/// Pose at time `t` between two timestamped poses: slerp on rotation,
/// linear blend on translation.
pub fn interpolate_pose(p0: &TimedPose, p1: &TimedPose, t: f64) -> Result<Pose, GeometryError> {
    let (t0, t1) = (p0.timestamp, p1.timestamp);
    if !(t0 < t1) {
        return Err(GeometryError::EmptyInterval { t0, t1 });
    }
    if !(t >= t0 && t <= t1) {
        return Err(GeometryError::OutOfInterval { t, t0, t1 });
    }
    if t == t0 {
        return Ok(p0.pose);
    }
    if t == t1 {
        return Ok(p1.pose);
    }
    let u = (t - t0) / (t1 - t0);
    Ok(Pose {
        rotation: slerp(&p0.pose.rotation, &p1.pose.rotation, u),
        translation: p0.pose.translation * (1.0 - u) + p1.pose.translation * u,
    })
}

/// Finds the bracketing pair in a strictly increasing trajectory and
/// interpolates. Returns `None` when `t` lies outside the trajectory span.
pub fn pose_at(trajectory: &[TimedPose], t: f64) -> Option<Pose> {
    if trajectory.len() < 2 {
        return None;
    }
    let first = trajectory.first()?.timestamp;
    let last = trajectory.last()?.timestamp;
    if !(t >= first && t <= last) {
        return None;
    }
    // index of first pose with timestamp > t
    let upper = trajectory.partition_point(|p| p.timestamp <= t);
    let i1 = upper.clamp(1, trajectory.len() - 1);
    interpolate_pose(&trajectory[i1 - 1], &trajectory[i1], t).ok()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ProjectionError {
    #[error("point is behind the camera")]
    BehindCamera,
    #[error("projection falls outside the image")]
    OutOfBounds,
}

impl PinholeCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(GeometryError::InvalidCamera(format!(
                "cx={} not inside (0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidCamera(format!(
                "cy={} not inside (0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    /// Projects a camera-frame point.
    pub fn project_camera_point(&self, p: &Vec3) -> Result<[f64; 2], ProjectionError> {
        if p.z <= MIN_DEPTH {
            return Err(ProjectionError::BehindCamera);
        }
        let u = self.fx * p.x / p.z + self.cx;
        let v = self.fy * p.y / p.z + self.cy;
        if !(u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64) {
            return Err(ProjectionError::OutOfBounds);
        }
        Ok([u, v])
    }

    /// Camera-frame point at the given depth along the pixel ray.
    pub fn unproject(&self, pixel: [f64; 2], depth: f64) -> Vec3 {
        Vec3::new(
            (pixel[0] - self.cx) / self.fx * depth,
            (pixel[1] - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// Cosine of the angle between a pixel's ray and the optical axis.
    pub fn off_axis_cos(&self, pixel: [f64; 2]) -> f64 {
        let a = (pixel[0] - self.cx) / self.fx;
        let b = (pixel[1] - self.cy) / self.fy;
        1.0 / (1.0 + a * a + b * b).sqrt()
    }
}

/// Maps a world point through `pose` and the camera intrinsics.
pub fn project(cam: &PinholeCamera, pose: &Pose, point: &Vec3) -> Result<[f64; 2], ProjectionError> {
    cam.project_camera_point(&pose.inverse_transform_point(point))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Led {
    /// Position in the IR camera frame, metres.
    pub position: Vec3,
    /// Relative brightness.
    pub brightness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedRig {
    leds: Vec<Led>,
}

impl LedRig {
    pub fn new(leds: Vec<Led>) -> Result<Self, GeometryError> {
        if leds.is_empty() {
            return Err(GeometryError::InvalidRig("no LEDs".into()));
        }
        for (i, led) in leds.iter().enumerate() {
            if !(led.brightness > 0.0) || !led.brightness.is_finite() {
                return Err(GeometryError::InvalidRig(format!(
                    "LED {i} brightness {} must be positive",
                    led.brightness
                )));
            }
            if !led.position.iter().all(|c| c.is_finite()) {
                return Err(GeometryError::InvalidRig(format!("LED {i} position not finite")));
            }
        }
        Ok(Self { leds })
    }

    pub fn leds(&self) -> &[Led] {
        &self.leds
    }

    pub fn len(&self) -> usize {
        self.leds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leds.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Led> {
        self.leds.get(index)
    }
}

/// Isotropic (theta_h, theta_d) pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfDiffAngles {
    theta_h: f64,
    theta_d: f64,
}

impl HalfDiffAngles {
    pub fn new(theta_h: f64, theta_d: f64) -> Result<Self, GeometryError> {
        let ok = |a: f64| (0.0..=90.0).contains(&a);
        if !ok(theta_h) || !ok(theta_d) {
            return Err(GeometryError::AngleRange { theta_h, theta_d });
        }
        Ok(Self { theta_h, theta_d })
    }

    pub fn theta_h(&self) -> f64 {
        self.theta_h
    }

    pub fn theta_d(&self) -> f64 {
        self.theta_d
    }
}

/// Angle between two unit vectors in degrees, robust near 0 and 180.
pub fn angle_between_deg(a: &Vec3, b: &Vec3) -> f64 {
    // atan2 form keeps precision where acos flattens out
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

/// Half angle and difference angle for a surface normal and incoming and
/// outgoing directions, all pointing away from the surface.
pub fn half_diff_angles(
    normal: &Vec3,
    omega_in: &Vec3,
    omega_out: &Vec3,
) -> Result<HalfDiffAngles, GeometryError> {
    let n = normal.try_normalize(0.0).ok_or(GeometryError::Degenerate)?;
    let wi = omega_in.try_normalize(0.0).ok_or(GeometryError::Degenerate)?;
    let wo = omega_out.try_normalize(0.0).ok_or(GeometryError::Degenerate)?;
    if n.dot(&wi) <= 0.0 || n.dot(&wo) <= 0.0 {
        return Err(GeometryError::BackFacing);
    }
    let h = (wi + wo)
        .try_normalize(1e-12)
        .ok_or(GeometryError::OppositeDirections)?;
    let theta_h = angle_between_deg(&n, &h).clamp(0.0, 90.0);
    let theta_d = angle_between_deg(&h, &wi).clamp(0.0, 90.0);
    HalfDiffAngles::new(theta_h, theta_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Rotation3, UnitQuaternion};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn to_na(q: &Quaternion) -> UnitQuaternion<f64> {
        UnitQuaternion::new_normalize(nalgebra::Quaternion::new(q.w(), q.x(), q.y(), q.z()))
    }

    fn same_rotation(a: &Quaternion, b: &Quaternion, tol: f64) -> bool {
        (a.dot(b).abs() - 1.0).abs() < tol
    }

    #[test]
    fn slerp_endpoints_and_degenerate_arc() {
        let q0 = Quaternion::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.7);
        let q1 = Quaternion::from_axis_angle(&Vec3::new(-1.0, 0.5, 0.0), 1.9);
        assert_eq!(slerp(&q0, &q1, 0.0).components(), q0.components());
        let mid = slerp(&q0, &q0, 0.5);
        for (a, b) in mid.components().iter().zip(q0.components()) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn slerp_quarter_turn_matches_matrix_fractional_power() {
        let q1 = Quaternion::from_axis_angle(&Vec3::z(), FRAC_PI_2);
        let half = slerp(&Quaternion::IDENTITY, &q1, 0.5);
        // oracle: R^(1/2) via the rotation-matrix logarithm
        let r = Rotation3::from_matrix_unchecked(q1.to_matrix());
        let expected = r.powf(0.5);
        let got = half.to_matrix();
        for (a, b) in got.iter().zip(expected.matrix().iter()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
        let expect_q = Quaternion::from_axis_angle(&Vec3::z(), FRAC_PI_4);
        assert!(same_rotation(&half, &expect_q, 1e-12));
    }

    #[test]
    fn slerp_takes_short_path() {
        let q0 = Quaternion::IDENTITY;
        let q1 = Quaternion::from_axis_angle(&Vec3::x(), 0.5);
        let neg = Quaternion::new(-q1.w(), -q1.x(), -q1.y(), -q1.z());
        let a = slerp(&q0, &q1, 0.3);
        let b = slerp(&q0, &neg, 0.3);
        assert!(same_rotation(&a, &b, 1e-12));
        assert_relative_eq!(q0.angle_to(&b), 0.15, epsilon = 1e-12);
    }

    #[test]
    fn slerp_nearly_parallel_falls_back_to_lerp() {
        let q0 = Quaternion::IDENTITY;
        let q1 = Quaternion::from_axis_angle(&Vec3::y(), 1e-5);
        let q = slerp(&q0, &q1, 0.5);
        assert_relative_eq!(q.norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(q0.angle_to(&q), 0.5e-5, epsilon = 1e-10);
    }

    #[test]
    fn interpolate_pose_examples() {
        let p0 = TimedPose::new(Pose::IDENTITY, 1.0);
        let p1 = TimedPose::new(
            Pose::new(
                Quaternion::from_axis_angle(&Vec3::y(), 0.4),
                Vec3::new(2.0, 0.0, 0.0),
            ),
            3.0,
        );
        assert_eq!(interpolate_pose(&p0, &p1, 1.0).unwrap(), p0.pose);
        let mid = interpolate_pose(&p0, &p1, 2.0).unwrap();
        assert_relative_eq!(mid.translation, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert!(matches!(
            interpolate_pose(&p0, &p1, 3.5),
            Err(GeometryError::OutOfInterval { .. })
        ));
        assert!(matches!(
            interpolate_pose(&p0, &p0, 1.0),
            Err(GeometryError::EmptyInterval { .. })
        ));
    }

    #[test]
    fn pose_at_finds_bracketing_pair() {
        let traj: Vec<TimedPose> = (0..5)
            .map(|i| {
                TimedPose::new(
                    Pose::new(Quaternion::IDENTITY, Vec3::new(i as f64, 0.0, 0.0)),
                    i as f64 * 0.5,
                )
            })
            .collect();
        let p = pose_at(&traj, 1.25).unwrap();
        assert_relative_eq!(p.translation.x, 2.5, epsilon = 1e-12);
        assert_relative_eq!(pose_at(&traj, 2.0).unwrap().translation.x, 4.0);
        assert!(pose_at(&traj, 2.01).is_none());
        assert!(pose_at(&traj, -0.1).is_none());
    }

    #[test]
    fn projection_examples() {
        let cam = PinholeCamera::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let on_axis = project(&cam, &Pose::IDENTITY, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(on_axis, [320.0, 240.0]);
        let p = project(&cam, &Pose::IDENTITY, &Vec3::new(0.1, 0.0, 1.0)).unwrap();
        assert_relative_eq!(p[0], 370.0, epsilon = 1e-12);
        assert_relative_eq!(p[1], 240.0, epsilon = 1e-12);
        assert_eq!(
            project(&cam, &Pose::IDENTITY, &Vec3::new(0.0, 0.0, -1.0)),
            Err(ProjectionError::BehindCamera)
        );
        assert_eq!(
            project(&cam, &Pose::IDENTITY, &Vec3::new(5.0, 0.0, 1.0)),
            Err(ProjectionError::OutOfBounds)
        );
    }

    #[test]
    fn camera_validation() {
        assert!(PinholeCamera::new(0.0, 500.0, 320.0, 240.0, 640, 480).is_err());
        assert!(PinholeCamera::new(500.0, 500.0, 640.0, 240.0, 640, 480).is_err());
        assert!(PinholeCamera::new(500.0, 500.0, 320.0, 0.0, 640, 480).is_err());
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = Vec3::new(1.0, -0.5, 2.0);
        let target = Vec3::new(0.0, 0.0, 0.0);
        let pose = Pose::look_at(&eye, &target, &Vec3::new(0.0, -1.0, 0.0)).unwrap();
        let cam = pose.inverse_transform_point(&target);
        assert_relative_eq!(cam.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(cam.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(cam.z, (target - eye).norm(), epsilon = 1e-12);
    }

    #[test]
    fn half_diff_simple_cases() {
        let n = Vec3::z();
        let a = half_diff_angles(&n, &n, &n).unwrap();
        assert_eq!((a.theta_h(), a.theta_d()), (0.0, 0.0));

        let t = 30f64.to_radians();
        let wi = Vec3::new(t.sin(), 0.0, t.cos());
        let wo = Vec3::new(-t.sin(), 0.0, t.cos());
        let a = half_diff_angles(&n, &wi, &wo).unwrap();
        assert_relative_eq!(a.theta_h(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(a.theta_d(), 30.0, epsilon = 1e-12);
    }

    #[test]
    fn half_diff_rejections() {
        let n = Vec3::z();
        let below = Vec3::new(0.0, 0.6, -0.8);
        assert_eq!(
            half_diff_angles(&n, &below, &n),
            Err(GeometryError::BackFacing)
        );
        assert!(HalfDiffAngles::new(91.0, 0.0).is_err());
        assert!(HalfDiffAngles::new(10.0, -1.0).is_err());
    }

    fn unit(v: [f64; 3]) -> Option<Vec3> {
        Vec3::from(v).try_normalize(1e-3)
    }

    proptest! {
        #[test]
        fn half_diff_matches_direct_trig(
            n in prop::array::uniform3(-1.0..1.0f64),
            i in prop::array::uniform3(-1.0..1.0f64),
            o in prop::array::uniform3(-1.0..1.0f64),
        ) {
            let (Some(n), Some(wi), Some(wo)) = (unit(n), unit(i), unit(o)) else { return Ok(()); };
            prop_assume!(n.dot(&wi) > 0.01 && n.dot(&wo) > 0.01);
            let a = half_diff_angles(&n, &wi, &wo).unwrap();
            // oracle: arccos of dot products
            let h = (wi + wo) / (wi + wo).norm();
            let th = n.dot(&h).clamp(-1.0, 1.0).acos().to_degrees();
            let td = h.dot(&wi).clamp(-1.0, 1.0).acos().to_degrees();
            prop_assert!((a.theta_h() - th).abs() < 1e-6);
            prop_assert!((a.theta_d() - td).abs() < 1e-6);
        }

        #[test]
        fn slerp_constant_angular_velocity(
            axis0 in prop::array::uniform3(-1.0..1.0f64),
            axis1 in prop::array::uniform3(-1.0..1.0f64),
            a0 in -3.0..3.0f64,
            a1 in -3.0..3.0f64,
        ) {
            let q0 = Quaternion::from_axis_angle(&Vec3::from(axis0), a0);
            let q1 = Quaternion::from_axis_angle(&Vec3::from(axis1), a1);
            let total = q0.angle_to(&q1);
            for k in 0..=10 {
                let u = k as f64 / 10.0;
                let q = slerp(&q0, &q1, u);
                prop_assert!((q.norm() - 1.0).abs() < 1e-9);
                prop_assert!((q0.angle_to(&q) - u * total).abs() < 1e-7);
            }
        }

        #[test]
        fn interpolate_pose_matches_per_component_oracle(
            axis0 in prop::array::uniform3(-1.0..1.0f64),
            axis1 in prop::array::uniform3(-1.0..1.0f64),
            a0 in -3.0..3.0f64,
            a1 in -3.0..3.0f64,
            t0 in prop::array::uniform3(-5.0..5.0f64),
            t1 in prop::array::uniform3(-5.0..5.0f64),
        ) {
            let q0 = Quaternion::from_axis_angle(&Vec3::from(axis0), a0);
            let q1 = Quaternion::from_axis_angle(&Vec3::from(axis1), a1);
            let p0 = TimedPose::new(Pose::new(q0, Vec3::from(t0)), 10.0);
            let p1 = TimedPose::new(Pose::new(q1, Vec3::from(t1)), 14.0);
            let p = interpolate_pose(&p0, &p1, 11.0).unwrap();
            // rotation oracle: nalgebra's slerp on the short arc
            let mut nb = to_na(&q1);
            if to_na(&q0).coords.dot(&nb.coords) < 0.0 {
                nb = UnitQuaternion::new_unchecked(-nb.into_inner());
            }
            let expected = to_na(&q0).try_slerp(&nb, 0.25, 1e-9).unwrap_or(to_na(&q0));
            let got = to_na(&p.rotation);
            prop_assert!(got.angle_to(&expected) < 1e-7);
            let blend = Vec3::from(t0) * 0.75 + Vec3::from(t1) * 0.25;
            prop_assert!((p.translation - blend).norm() < 1e-12);
        }

        #[test]
        fn project_then_unproject_recovers_point(
            x in -0.5..0.5f64, y in -0.4..0.4f64, z in 0.5..5.0f64,
        ) {
            let cam = PinholeCamera::new(520.0, 515.0, 320.0, 240.0, 640, 480).unwrap();
            let p = Vec3::new(x * z, y * z, z);
            if let Ok(px) = cam.project_camera_point(&p) {
                let back = cam.unproject(px, z);
                prop_assert!((back - p).norm() < 1e-9);
            }
        }

        #[test]
        fn pose_compose_is_associative(
            a in prop::array::uniform4(-1.0..1.0f64),
            b in prop::array::uniform4(-1.0..1.0f64),
            c in prop::array::uniform4(-1.0..1.0f64),
            p in prop::array::uniform3(-2.0..2.0f64),
        ) {
            let mk = |v: [f64; 4]| Pose::new(Quaternion::new(v[0], v[1], v[2], v[3] + 1.5), Vec3::new(v[1], v[2], v[0]));
            let (a, b, c) = (mk(a), mk(b), mk(c));
            let lhs = a.compose(&b).compose(&c).transform_point(&Vec3::from(p));
            let rhs = a.compose(&b.compose(&c)).transform_point(&Vec3::from(p));
            prop_assert!((lhs - rhs).norm() < 1e-12);
            let back = a.inverse().transform_point(&a.transform_point(&Vec3::from(p)));
            prop_assert!((back - Vec3::from(p)).norm() < 1e-12);
        }
    }
}
