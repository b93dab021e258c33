//! SE(2) pose algebra.
//!
//! Angles are raw radians kept in `(-π, π]`; every constructor and group
//! operation renormalizes.

use std::f64::consts::{PI, TAU};

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Point2<f64>;

/// Wraps a finite angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap_angle(a))
}

/// Infallible variant used on values already known to be finite.
#[inline]
pub(crate) fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// `self ⊕ other`: `other` expressed in this pose's frame, mapped to the parent frame.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(
            -(c * self.x + s * self.y),
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// Relative transform `self⁻¹ ⊕ other`.
    pub fn between(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        Pose2D::new(c * dx + s * dy, -s * dx + c * dy, other.theta - self.theta)
    }

    pub fn transform_point(&self, p: &Point) -> Point {
        let (s, c) = self.theta.sin_cos();
        Point::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    pub fn distance_to(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Componentwise comparison; the angular part is compared on the circle.
    pub fn approx_eq(&self, other: &Pose2D, tol: f64) -> bool {
        (self.x - other.x).abs() <= tol
            && (self.y - other.y).abs() <= tol
            && wrap_angle(self.theta - other.theta).abs() <= tol
    }
}

/// Free-function forms, mirroring the method names.
pub fn compose(a: &Pose2D, b: &Pose2D) -> Pose2D {
    a.compose(b)
}

pub fn inverse(p: &Pose2D) -> Pose2D {
    p.inverse()
}

pub fn between(a: &Pose2D, b: &Pose2D) -> Pose2D {
    a.between(b)
}

/// A pose with a timestamp in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose2D,
}

impl TimedPose {
    pub fn new(t: f64, pose: Pose2D) -> Self {
        Self { t, pose }
    }
}

/// Least-squares rigid transform `T` (no scale) minimising `Σ |T·src_k − dst_k|²`.
///
/// Closed-form 2D Procrustes on the centred point sets. Returns `None` for an
/// empty input.
pub fn fit_rigid_2d(src: &[Point], dst: &[Point]) -> Option<Pose2D> {
    debug_assert_eq!(src.len(), dst.len());
    if src.is_empty() {
        return None;
    }
    let n = src.len() as f64;
    let (mut sx, mut sy, mut dx, mut dy) = (0.0, 0.0, 0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        sx += p.x;
        sy += p.y;
        dx += q.x;
        dy += q.y;
    }
    let (sx, sy, dx, dy) = (sx / n, sy / n, dx / n, dy / n);

    let (mut dot, mut cross) = (0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        let (px, py) = (p.x - sx, p.y - sy);
        let (qx, qy) = (q.x - dx, q.y - dy);
        dot += px * qx + py * qy;
        cross += px * qy - py * qx;
    }
    let theta = cross.atan2(dot);
    let (s, c) = theta.sin_cos();
    Some(Pose2D::new(
        dx - (c * sx - s * sy),
        dy - (s * sx + c * sy),
        theta,
    ))
}
