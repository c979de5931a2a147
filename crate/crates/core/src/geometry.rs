//! Pose and twist algebra for the end effector.
//!
//! Orientations are unit quaternions kept in the `w >= 0` hemisphere. All
//! rotational quantities are expressed in the world frame: a twist's angular
//! part rotates the gripper about world axes, and orientation errors are
//! measured as `target * current^-1`.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate direction: weighted norm {0:e} is too small")]
    DegenerateDirection(f64),
    #[error("degenerate pair: projection residual {0:e} below 1e-6")]
    DegeneratePair(f64),
}

/// Residual below which the second vector of a pair counts as parallel.
pub const PAIR_RESIDUAL_EPS: f64 = 1e-6;
/// Weighted norm below which a twist has no direction.
pub const DIRECTION_EPS: f64 = 1e-12;

/// Flip a unit quaternion into the `w >= 0` hemisphere. Exact: only signs change.
pub fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Build a canonical unit quaternion from `[w, x, y, z]`.
pub fn quat_from_wxyz(c: [f64; 4]) -> Result<UnitQuaternion<f64>, GeometryError> {
    let q = Quaternion::new(c[0], c[1], c[2], c[3]);
    let n = q.norm();
    if !n.is_finite() || n < 1e-9 {
        return Err(GeometryError::InvalidInput(format!(
            "quaternion {c:?} cannot be normalized"
        )));
    }
    Ok(canonical(UnitQuaternion::new_normalize(q)))
}

pub fn quat_to_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

/// Rotation about world z by `angle` radians.
pub fn yaw(angle: f64) -> UnitQuaternion<f64> {
    canonical(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle))
}

/// Rotation vector (axis times angle, angle in `[0, pi]`) of `to * from^-1`.
pub fn rotation_error(from: &UnitQuaternion<f64>, to: &UnitQuaternion<f64>) -> Vector3<f64> {
    canonical(to * from.inverse()).scaled_axis()
}

/// Angle in `[0, pi]` between two orientations.
pub fn angle_between(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    rotation_error(a, b).norm()
}

/// End-effector state: position (m), orientation, gripper aperture in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoseRepr", try_from = "PoseRepr")]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub aperture: f64,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    orientation: [f64; 4],
    aperture: f64,
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr {
            position: p.position.into(),
            orientation: quat_to_wxyz(&p.orientation),
            aperture: p.aperture,
        }
    }
}

impl TryFrom<PoseRepr> for Pose {
    type Error = GeometryError;

    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        let position = Vector3::from(r.position);
        if !position.iter().all(|v| v.is_finite()) || !r.aperture.is_finite() {
            return Err(GeometryError::InvalidInput("non-finite pose".into()));
        }
        Ok(Pose::new(position, quat_from_wxyz(r.orientation)?, r.aperture))
    }
}

impl Pose {
    /// Orientation is canonicalized and aperture clamped to `[0, 1]`.
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>, aperture: f64) -> Self {
        Pose {
            position,
            orientation: canonical(orientation),
            aperture: aperture.clamp(0.0, 1.0),
        }
    }

    pub fn identity() -> Self {
        Pose::new(Vector3::zeros(), UnitQuaternion::identity(), 0.0)
    }
}

/// Seven-component motion: linear (m/s), angular (rad/s, world frame),
/// gripper aperture rate (1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "TwistRepr", try_from = "TwistRepr")]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
    pub aperture_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct TwistRepr {
    linear: [f64; 3],
    angular: [f64; 3],
    aperture_rate: f64,
}

impl From<Twist> for TwistRepr {
    fn from(t: Twist) -> Self {
        TwistRepr {
            linear: t.linear.into(),
            angular: t.angular.into(),
            aperture_rate: t.aperture_rate,
        }
    }
}

impl TryFrom<TwistRepr> for Twist {
    type Error = GeometryError;

    fn try_from(r: TwistRepr) -> Result<Self, Self::Error> {
        let t = Twist::new(r.linear.into(), r.angular.into(), r.aperture_rate);
        t.check_finite()?;
        Ok(t)
    }
}

impl Twist {
    pub const fn new(linear: Vector3<f64>, angular: Vector3<f64>, aperture_rate: f64) -> Self {
        Twist {
            linear,
            angular,
            aperture_rate,
        }
    }

    pub fn zero() -> Self {
        Twist::new(Vector3::zeros(), Vector3::zeros(), 0.0)
    }

    pub fn linear(x: f64, y: f64, z: f64) -> Self {
        Twist::new(Vector3::new(x, y, z), Vector3::zeros(), 0.0)
    }

    pub fn angular(x: f64, y: f64, z: f64) -> Self {
        Twist::new(Vector3::zeros(), Vector3::new(x, y, z), 0.0)
    }

    pub fn aperture(rate: f64) -> Self {
        Twist::new(Vector3::zeros(), Vector3::zeros(), rate)
    }

    /// Components in cardinal order x, y, z, roll, pitch, yaw, gripper.
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
            self.aperture_rate,
        ]
    }

    pub fn from_array(c: [f64; 7]) -> Self {
        Twist::new(
            Vector3::new(c[0], c[1], c[2]),
            Vector3::new(c[3], c[4], c[5]),
            c[6],
        )
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|v| *v == 0.0)
    }

    pub fn check_finite(&self) -> Result<(), GeometryError> {
        if self.to_array().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(GeometryError::InvalidInput(format!(
                "non-finite twist {:?}",
                self.to_array()
            )))
        }
    }

    pub fn scale(&self, s: f64) -> Twist {
        Twist::new(self.linear * s, self.angular * s, self.aperture_rate * s)
    }
}

impl std::ops::Add for Twist {
    type Output = Twist;
    fn add(self, o: Twist) -> Twist {
        Twist::new(
            self.linear + o.linear,
            self.angular + o.angular,
            self.aperture_rate + o.aperture_rate,
        )
    }
}

impl std::ops::Sub for Twist {
    type Output = Twist;
    fn sub(self, o: Twist) -> Twist {
        Twist::new(
            self.linear - o.linear,
            self.angular - o.angular,
            self.aperture_rate - o.aperture_rate,
        )
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        self.scale(-1.0)
    }
}

/// Scale factors putting rotation (m/rad) and gripper (m per full stroke) on
/// the same footing as translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightedMetric {
    pub lambda_rot: f64,
    pub lambda_grip: f64,
}

impl Default for WeightedMetric {
    fn default() -> Self {
        WeightedMetric {
            lambda_rot: 0.2,
            lambda_grip: 0.1,
        }
    }
}

impl WeightedMetric {
    pub fn new(lambda_rot: f64, lambda_grip: f64) -> Self {
        WeightedMetric {
            lambda_rot,
            lambda_grip,
        }
    }

    pub fn dot(&self, a: &Twist, b: &Twist) -> f64 {
        a.linear.dot(&b.linear)
            + self.lambda_rot * self.lambda_rot * a.angular.dot(&b.angular)
            + self.lambda_grip * self.lambda_grip * a.aperture_rate * b.aperture_rate
    }

    pub fn norm(&self, t: &Twist) -> f64 {
        self.dot(t, t).sqrt()
    }

    /// Cosine of the weighted angle between two nonzero twists.
    pub fn cos_angle(&self, a: &Twist, b: &Twist) -> f64 {
        let na = self.norm(a);
        let nb = self.norm(b);
        if na < DIRECTION_EPS || nb < DIRECTION_EPS {
            return 0.0;
        }
        (self.dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
    }

    /// Components scaled into the weighted frame, so that their Euclidean
    /// norm equals the weighted norm.
    pub fn weighted_components(&self, t: &Twist) -> [f64; 7] {
        let mut c = t.to_array();
        for v in &mut c[3..6] {
            *v *= self.lambda_rot;
        }
        c[6] *= self.lambda_grip;
        c
    }

    /// Weighted distance between two poses.
    pub fn pose_error(&self, current: &Pose, target: &Pose) -> f64 {
        let dp = (target.position - current.position).norm_squared();
        let dr = angle_between(&current.orientation, &target.orientation);
        let da = target.aperture - current.aperture;
        (dp + (self.lambda_rot * dr).powi(2) + (self.lambda_grip * da).powi(2)).sqrt()
    }
}

pub fn weighted_normalize(t: &Twist, metric: &WeightedMetric) -> Result<Twist, GeometryError> {
    t.check_finite()?;
    let n = metric.norm(t);
    if n < DIRECTION_EPS {
        return Err(GeometryError::DegenerateDirection(n));
    }
    Ok(t.scale(1.0 / n))
}

/// Gram-Schmidt on a pair of twists under the weighted inner product.
pub fn orthonormalize_pair(
    primary: &Twist,
    secondary: &Twist,
    metric: &WeightedMetric,
) -> Result<(Twist, Twist), GeometryError> {
    let first = weighted_normalize(primary, metric)?;
    secondary.check_finite()?;
    let sn = metric.norm(secondary);
    if sn < DIRECTION_EPS {
        return Err(GeometryError::DegeneratePair(sn));
    }
    // Work with the unit secondary so the residual threshold is scale free.
    let s = secondary.scale(1.0 / sn);
    let mut residual = s - first.scale(metric.dot(&s, &first));
    // One re-orthogonalization pass keeps |<a,b>| well under 1e-9.
    residual = residual - first.scale(metric.dot(&residual, &first));
    let rn = metric.norm(&residual);
    if rn < PAIR_RESIDUAL_EPS {
        return Err(GeometryError::DegeneratePair(rn));
    }
    Ok((first, residual.scale(1.0 / rn)))
}

/// Axis-aligned workspace box plus speed caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LimitsRepr", try_from = "LimitsRepr")]
pub struct WorkspaceLimits {
    pub min_corner: Vector3<f64>,
    pub max_corner: Vector3<f64>,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
    pub max_aperture_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct LimitsRepr {
    min: [f64; 3],
    max: [f64; 3],
    max_linear_speed: f64,
    max_angular_speed: f64,
    max_aperture_rate: f64,
}

impl From<WorkspaceLimits> for LimitsRepr {
    fn from(l: WorkspaceLimits) -> Self {
        LimitsRepr {
            min: l.min_corner.into(),
            max: l.max_corner.into(),
            max_linear_speed: l.max_linear_speed,
            max_angular_speed: l.max_angular_speed,
            max_aperture_rate: l.max_aperture_rate,
        }
    }
}

impl TryFrom<LimitsRepr> for WorkspaceLimits {
    type Error = GeometryError;

    fn try_from(r: LimitsRepr) -> Result<Self, Self::Error> {
        let l = WorkspaceLimits {
            min_corner: r.min.into(),
            max_corner: r.max.into(),
            max_linear_speed: r.max_linear_speed,
            max_angular_speed: r.max_angular_speed,
            max_aperture_rate: r.max_aperture_rate,
        };
        l.validate()?;
        Ok(l)
    }
}

impl WorkspaceLimits {
    pub fn validate(&self) -> Result<(), GeometryError> {
        for i in 0..3 {
            if !(self.min_corner[i] < self.max_corner[i]) {
                return Err(GeometryError::InvalidInput(format!(
                    "workspace min corner must be below max corner on axis {i}"
                )));
            }
        }
        for (name, v) in [
            ("max_linear_speed", self.max_linear_speed),
            ("max_angular_speed", self.max_angular_speed),
            ("max_aperture_rate", self.max_aperture_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GeometryError::InvalidInput(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min_corner[i] && p[i] <= self.max_corner[i])
    }

    pub fn clamp_position(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| p[i].clamp(self.min_corner[i], self.max_corner[i]))
    }
}

fn clamp_norm(v: Vector3<f64>, cap: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > cap {
        v * (cap / n)
    } else {
        v
    }
}

/// Advance a pose by one time step under a (speed-capped) twist.
pub fn integrate(
    pose: &Pose,
    twist: &Twist,
    dt: f64,
    limits: &WorkspaceLimits,
) -> Result<Pose, GeometryError> {
    twist.check_finite()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(GeometryError::InvalidInput(format!("dt must be > 0, got {dt}")));
    }
    if twist.is_zero() {
        return Ok(pose.clone());
    }
    let linear = clamp_norm(twist.linear, limits.max_linear_speed);
    let angular = clamp_norm(twist.angular, limits.max_angular_speed);
    let rate = twist
        .aperture_rate
        .clamp(-limits.max_aperture_rate, limits.max_aperture_rate);

    let position = limits.clamp_position(&(pose.position + linear * dt));
    let orientation = if angular == Vector3::zeros() {
        pose.orientation
    } else {
        let composed = UnitQuaternion::from_scaled_axis(angular * dt) * pose.orientation;
        UnitQuaternion::new_normalize(composed.into_inner())
    };
    Ok(Pose::new(position, orientation, pose.aperture + rate * dt))
}

/// Unit (weighted) twist pointing from `current` toward `target`.
pub fn goal_twist(
    current: &Pose,
    target: &Pose,
    metric: &WeightedMetric,
) -> Result<Twist, GeometryError> {
    let raw = Twist::new(
        target.position - current.position,
        rotation_error(&current.orientation, &target.orientation),
        target.aperture - current.aperture,
    );
    weighted_normalize(&raw, metric)
}
