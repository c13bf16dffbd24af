//! Planar poses, rigid transforms, and propagation of global pose errors into
//! the ego frame.
//!
//! Angles are radians internally. A [`Transform2D`] `T` maps a point `p` to
//! `R(dtheta) * p + (dx, dy)`, i.e. the homogeneous matrix
//!
//! ```text
//! | cos -sin dx |
//! | sin  cos dy |
//! |  0    0   1 |
//! ```
//!
//! and `a.compose(&b)` is the matrix product `a * b` (apply `b` first).

use std::f64::consts::{PI, TAU};
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn normalize_degrees(angle: f64) -> f64 {
    let r = angle.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_squared(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(p: [f64; 2]) -> Self {
        Self::new(p[0], p[1])
    }
}

/// Planar pose of a vehicle in the global frame. `theta` is the heading
/// relative to the global x-axis and is always kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn from_degrees(x: f64, y: f64, theta_deg: f64) -> Self {
        Self::new(x, y, theta_deg.to_radians())
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn theta_degrees(&self) -> f64 {
        self.theta.to_degrees()
    }

    /// Returns the pose with an additive error applied (`X~ = X + dX`).
    pub fn perturbed(&self, error: &PoseError) -> Self {
        Self::new(self.x + error.dx, self.y + error.dy, self.theta + error.dtheta)
    }

    /// Transform from this vehicle's local frame into the global frame,
    /// `S(x, y) * R(theta)`.
    pub fn local_to_global(&self) -> Transform2D {
        make_translation(self.x, self.y).compose(&make_rotation(self.theta))
    }
}

/// Additive global pose error `(dx, dy, dtheta)` in meters and radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseError {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl PoseError {
    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        Self { dx, dy, dtheta }
    }

    pub fn from_degrees(dx: f64, dy: f64, dtheta_deg: f64) -> Self {
        Self::new(dx, dy, dtheta_deg.to_radians())
    }
}

/// Standard deviations of a global localization error. `sigma_xy` applies to
/// x and y independently; `sigma_r_deg` is the heading deviation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseNoise {
    pub sigma_xy: f64,
    pub sigma_r_deg: f64,
}

impl PoseNoise {
    pub fn new(sigma_xy: f64, sigma_r_deg: f64) -> Result<Self> {
        if !(sigma_xy.is_finite() && sigma_xy >= 0.0) {
            return Err(Error::invalid("sigma_xy", format!("must be >= 0, got {sigma_xy}")));
        }
        if !(sigma_r_deg.is_finite() && sigma_r_deg >= 0.0) {
            return Err(Error::invalid("sigma_r", format!("must be >= 0, got {sigma_r_deg}")));
        }
        Ok(Self { sigma_xy, sigma_r_deg })
    }

    pub fn zero() -> Self {
        Self::default()
    }
}

/// Rigid planar transform stored as `(dtheta, dx, dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform2D {
    pub dtheta: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Default for Transform2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform2D {
    pub fn new(dtheta: f64, dx: f64, dy: f64) -> Self {
        Self {
            dtheta: normalize_angle(dtheta),
            dx,
            dy,
        }
    }

    pub fn from_degrees(dtheta_deg: f64, dx: f64, dy: f64) -> Self {
        Self::new(dtheta_deg.to_radians(), dx, dy)
    }

    pub const fn identity() -> Self {
        Self {
            dtheta: 0.0,
            dx: 0.0,
            dy: 0.0,
        }
    }

    pub fn dtheta_degrees(&self) -> f64 {
        self.dtheta.to_degrees()
    }

    pub fn translation(&self) -> Point2 {
        Point2::new(self.dx, self.dy)
    }

    /// Homogeneous 3x3 matrix, row major.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let (s, c) = self.dtheta.sin_cos();
        [[c, -s, self.dx], [s, c, self.dy], [0.0, 0.0, 1.0]]
    }

    /// Builds a transform from a homogeneous matrix. The rotation block must
    /// be orthonormal with determinant +1 and the last row must be `0 0 1`,
    /// each to within `1e-12`.
    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Result<Self> {
        const TOL: f64 = 1e-12;
        let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
        let orthonormal =
            (a * a + c * c - 1.0).abs() <= TOL && (b * b + d * d - 1.0).abs() <= TOL && (a * b + c * d).abs() <= TOL;
        let det = a * d - b * c;
        let bottom = m[2][0].abs() <= TOL && m[2][1].abs() <= TOL && (m[2][2] - 1.0).abs() <= TOL;
        if !orthonormal || (det - 1.0).abs() > TOL || !bottom {
            return Err(Error::invalid(
                "matrix",
                "not a proper rigid transform (rotation block must be orthonormal, det +1)",
            ));
        }
        Ok(Self::new(c.atan2(a), m[0][2], m[1][2]))
    }

    /// Matrix product `self * other`: applies `other`, then `self`.
    pub fn compose(&self, other: &Transform2D) -> Transform2D {
        let t = self.apply(other.translation());
        Transform2D::new(self.dtheta + other.dtheta, t.x, t.y)
    }

    pub fn inverse(&self) -> Transform2D {
        let (s, c) = self.dtheta.sin_cos();
        // -R^T t
        let dx = -(c * self.dx + s * self.dy);
        let dy = -(-s * self.dx + c * self.dy);
        Transform2D::new(-self.dtheta, dx, dy)
    }

    /// Applies the transform to a point in homogeneous coordinates.
    pub fn apply(&self, p: Point2) -> Point2 {
        let (s, c) = self.dtheta.sin_cos();
        Point2::new(c * p.x - s * p.y + self.dx, s * p.x + c * p.y + self.dy)
    }

    /// Rotates a vector without translating it.
    pub fn rotate(&self, v: Point2) -> Point2 {
        let (s, c) = self.dtheta.sin_cos();
        Point2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    /// Largest absolute parameter difference, with the angle difference
    /// wrapped into `(-pi, pi]`.
    pub fn max_abs_diff(&self, other: &Transform2D) -> f64 {
        normalize_angle(self.dtheta - other.dtheta)
            .abs()
            .max((self.dx - other.dx).abs())
            .max((self.dy - other.dy).abs())
    }
}

impl Mul for Transform2D {
    type Output = Transform2D;

    fn mul(self, rhs: Transform2D) -> Transform2D {
        self.compose(&rhs)
    }
}

/// Pure translation `S(m, n)`.
pub fn make_translation(m: f64, n: f64) -> Transform2D {
    Transform2D::new(0.0, m, n)
}

/// Pure rotation `R(l)` about the origin.
pub fn make_rotation(l: f64) -> Transform2D {
    Transform2D::new(l, 0.0, 0.0)
}

/// Transform that maps points from the `coop` vehicle's local frame into the
/// `ego` vehicle's local frame, built from the two global poses:
/// `R(-theta0) S(-x0, -y0) S(xi, yi) R(theta_i)`.
///
/// With erroneous poses this is the relative transform a vehicle network
/// would use before any correction.
pub fn relative_transform(ego: &Pose2D, coop: &Pose2D) -> Transform2D {
    make_rotation(-ego.theta)
        * make_translation(-ego.x, -ego.y)
        * make_translation(coop.x, coop.y)
        * make_rotation(coop.theta)
}

/// Exact correction `dT` with `dT * relative_transform(err_ego, err_coop) ==
/// relative_transform(true_ego, true_coop)`.
///
/// The transposes in the textbook derivation are matrix inverses; for the
/// translation factors only the inverse makes the identity hold.
pub fn ground_truth_correction(
    true_ego: &Pose2D,
    true_coop: &Pose2D,
    err_ego: &Pose2D,
    err_coop: &Pose2D,
) -> Transform2D {
    let truth = relative_transform(true_ego, true_coop);
    let undo_erroneous = make_rotation(err_coop.theta).inverse()
        * make_translation(err_coop.x, err_coop.y).inverse()
        * make_translation(-err_ego.x, -err_ego.y).inverse()
        * make_rotation(-err_ego.theta).inverse();
    truth * undo_erroneous
}

/// Extremes of the relative correction over a sweep of ego headings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub distance: f64,
    pub dx_min: f64,
    pub dx_max: f64,
    pub dy_min: f64,
    pub dy_max: f64,
    pub dtheta_min: f64,
    pub dtheta_max: f64,
    /// Largest translation norm `sqrt(dx^2 + dy^2)` over the sweep.
    pub norm_max: f64,
}

impl ErrorEnvelope {
    pub fn dx_magnitude(&self) -> f64 {
        self.dx_min.abs().max(self.dx_max.abs())
    }

    pub fn dy_magnitude(&self) -> f64 {
        self.dy_min.abs().max(self.dy_max.abs())
    }
}

/// Sweeps the true ego heading over `n_orientations` evenly spaced values in
/// `[0, 2pi)`. For each heading the ego sits at the origin and the
/// cooperative vehicle sits `distance` meters straight ahead of it with the
/// same heading; both receive the given global errors and the exact
/// correction is evaluated. Returns the per-component extremes.
pub fn relative_error_envelope(
    err_ego: &PoseError,
    err_coop: &PoseError,
    distance: f64,
    n_orientations: usize,
) -> Result<ErrorEnvelope> {
    if n_orientations < 4 {
        return Err(Error::invalid(
            "n_orientations",
            format!("must be >= 4, got {n_orientations}"),
        ));
    }
    if !(distance.is_finite() && distance >= 0.0) {
        return Err(Error::invalid("distance", format!("must be >= 0, got {distance}")));
    }
    let mut env = ErrorEnvelope {
        distance,
        dx_min: f64::INFINITY,
        dx_max: f64::NEG_INFINITY,
        dy_min: f64::INFINITY,
        dy_max: f64::NEG_INFINITY,
        dtheta_min: f64::INFINITY,
        dtheta_max: f64::NEG_INFINITY,
        norm_max: 0.0,
    };
    for k in 0..n_orientations {
        let heading = TAU * k as f64 / n_orientations as f64;
        let ego = Pose2D::new(0.0, 0.0, heading);
        let coop = Pose2D::new(distance * heading.cos(), distance * heading.sin(), heading);
        let dt = ground_truth_correction(&ego, &coop, &ego.perturbed(err_ego), &coop.perturbed(err_coop));
        env.dx_min = env.dx_min.min(dt.dx);
        env.dx_max = env.dx_max.max(dt.dx);
        env.dy_min = env.dy_min.min(dt.dy);
        env.dy_max = env.dy_max.max(dt.dy);
        env.dtheta_min = env.dtheta_min.min(dt.dtheta);
        env.dtheta_max = env.dtheta_max.max(dt.dtheta);
        env.norm_max = env.norm_max.max(dt.translation().norm());
    }
    Ok(env)
}

/// Number of cells of a brute-force `(x, y, theta)` search grid: the product
/// of `floor(span / resolution)` per axis. Angles are in degrees.
pub fn search_space_cells(
    x_span: f64,
    y_span: f64,
    theta_span_deg: f64,
    xy_res: f64,
    theta_res_deg: f64,
) -> Result<u64> {
    for (name, v) in [
        ("x_span", x_span),
        ("y_span", y_span),
        ("theta_span", theta_span_deg),
        ("xy_res", xy_res),
        ("theta_res", theta_res_deg),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(name, format!("must be > 0, got {v}")));
        }
    }
    Ok(axis_cells(x_span, xy_res) * axis_cells(y_span, xy_res) * axis_cells(theta_span_deg, theta_res_deg))
}

/// `floor(span / res)`, tolerant of representation error (12 / 0.1 == 120).
pub(crate) fn axis_cells(span: f64, res: f64) -> u64 {
    (span / res + 1e-9).floor() as u64
}
