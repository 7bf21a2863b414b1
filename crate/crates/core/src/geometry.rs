//! Plane vectors, 2x2 matrices, oriented angles, and continuous angle lifts.
//!
//! The angle lift is the workhorse of the whole library: every torsion and
//! linking number is the endpoint variation of one continuous determination
//! of an angle along a path of nonzero vectors.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this have no usable direction.
pub const NORM_FLOOR: f64 = 1e-300;

/// Mismatch tolerance for the parent/child delta consistency check.
/// Legitimate mismatches are exactly 0 or +-2pi up to roundoff.
const WRAP_GUARD: f64 = 1e-3;

/// Tolerance for "this angle is a measure of that vector's direction".
const ANCHOR_GUARD: f64 = 1e-6;

/// A plane vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Scalar cross product; positive when `other` sits counterclockwise of `self`.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Counterclockwise quarter turn.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Result<Vec2> {
        let n = self.norm();
        if n < NORM_FLOOR {
            return Err(Error::ZeroVector);
        }
        Ok(Vec2::new(self.x / n, self.y / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// A 2x2 matrix in row-major entries [[m11, m12], [m21, m22]].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl Mat2 {
    pub const fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Mat2 { m11, m12, m21, m22 }
    }

    pub const fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn det(self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn apply(self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.m11 * v.x + self.m12 * v.y,
            self.m21 * v.x + self.m22 * v.y,
        )
    }

    pub fn compose(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.m11 * rhs.m11 + self.m12 * rhs.m21,
            self.m11 * rhs.m12 + self.m12 * rhs.m22,
            self.m21 * rhs.m11 + self.m22 * rhs.m21,
            self.m21 * rhs.m12 + self.m22 * rhs.m22,
        )
    }
}

impl Mul<Mat2> for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        self.compose(rhs)
    }
}

impl Mul<Vec2> for Mat2 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        self.apply(v)
    }
}

/// Wrap an angle into the principal interval (-pi, pi].
pub fn principal(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Oriented angle from `u` to `v` in (-pi, pi], positive counterclockwise.
pub fn oriented_angle(u: Vec2, v: Vec2) -> Result<f64> {
    oriented_angle_with_floor(u, v, NORM_FLOOR)
}

/// Same as [`oriented_angle`] with an explicit norm floor.
pub fn oriented_angle_with_floor(u: Vec2, v: Vec2, floor: f64) -> Result<f64> {
    if u.norm() < floor || v.norm() < floor {
        return Err(Error::ZeroVector);
    }
    let a = f64::atan2(u.cross(v), u.dot(v));
    // atan2 can yield -pi when the cross product rounds to -0.0.
    Ok(if a == -PI { PI } else { a })
}

/// Coordinates of `v` in the positively oriented frame (x_ref, x_ref rotated by pi/2).
///
/// The argument of the result is the oriented angle from `x_ref` to `v`, so a
/// continuous lift of that argument is a continuous determination of the
/// angle between the reference direction and `v`.
pub fn frame_coordinates(x_ref: Vec2, v: Vec2) -> Result<Vec2> {
    let u = x_ref.normalized()?;
    Ok(Vec2::new(u.dot(v), u.cross(v)))
}

/// Sampling and refinement parameters for angle lifts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementPolicy {
    /// Seed samples per unit of the lift parameter.
    pub steps_per_unit: u32,
    /// Largest accepted per-step angle change, strictly below pi.
    pub max_step_angle: f64,
    /// Halving depth limit per seed interval.
    pub max_depth: u32,
    /// Reproducibility tolerance for lift endpoints under grid refinement.
    pub tolerance: f64,
}

impl Default for RefinementPolicy {
    fn default() -> Self {
        RefinementPolicy {
            steps_per_unit: 64,
            max_step_angle: PI / 2.0,
            max_depth: 40,
            tolerance: 1e-9,
        }
    }
}

impl RefinementPolicy {
    /// Same policy with a denser seed grid, for cross-checking lift endpoints.
    pub fn densified(&self, factor: u32) -> RefinementPolicy {
        RefinementPolicy {
            steps_per_unit: self.steps_per_unit.saturating_mul(factor.max(1)),
            ..self.clone()
        }
    }
}

/// A continuous determination of an angle along a parameter interval.
///
/// Consecutive angles differ by strictly less than pi (in fact by at most the
/// policy's `max_step_angle`), times are strictly increasing, and each angle
/// reduces mod 2pi to the argument of the sampled vector at its time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AngleLiftTrace {
    times: Vec<f64>,
    angles: Vec<f64>,
    max_depth_used: u32,
}

impl AngleLiftTrace {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_depth_used(&self) -> u32 {
        self.max_depth_used
    }

    pub fn initial(&self) -> f64 {
        self.angles[0]
    }

    pub fn terminal(&self) -> f64 {
        *self.angles.last().expect("trace is never empty")
    }

    /// Total angle variation across the trace.
    pub fn winding(&self) -> f64 {
        self.terminal() - self.initial()
    }

    /// Lift value at a parameter that is a node of the trace, if present.
    pub fn at_time(&self, t: f64) -> Option<f64> {
        let tol = 1e-9 * t.abs().max(1.0);
        let idx = self.times.partition_point(|&x| x < t - tol);
        if idx < self.times.len() && (self.times[idx] - t).abs() <= tol {
            Some(self.angles[idx])
        } else {
            None
        }
    }
}

/// Uniform grid over [t0, t1] with about `steps_per_unit` samples per unit.
pub fn uniform_grid(t0: f64, t1: f64, steps_per_unit: u32) -> Vec<f64> {
    let steps = (((t1 - t0) * steps_per_unit as f64).ceil() as usize).max(1);
    (0..=steps)
        .map(|i| t0 + (t1 - t0) * i as f64 / steps as f64)
        .collect()
}

/// Continuous angle lift of `sampler` over [t0, t1] starting from `initial_angle`.
///
/// `initial_angle` must be a measure of the direction of `sampler(t0)`.
pub fn lift_angle_path<F>(
    sampler: F,
    t0: f64,
    t1: f64,
    initial_angle: f64,
    policy: &RefinementPolicy,
) -> Result<AngleLiftTrace>
where
    F: FnMut(f64) -> Result<Vec2>,
{
    if !(t1 > t0) {
        return Err(Error::InvalidParameter {
            message: format!("lift interval must be increasing, got [{t0}, {t1}]"),
        });
    }
    let grid = uniform_grid(t0, t1, policy.steps_per_unit);
    lift_angle_path_on_grid(sampler, &grid, initial_angle, policy)
}

/// Continuous angle lift of `sampler` along an explicit seed grid.
///
/// Every grid node appears verbatim in the returned trace, so values at the
/// seed nodes can be read back exactly. Each seed interval is subdivided until
/// both halves of every accepted step turn by at most `policy.max_step_angle`
/// and the parent step's principal delta matches the sum of its halves; a
/// mismatch means the parent step wrapped past pi and must be split further.
/// Correctness requires the sampled direction not to sweep a full turn inside
/// a single seed interval at uniform speed; localized fast sweeps are caught
/// by the consistency check.
pub fn lift_angle_path_on_grid<F>(
    mut sampler: F,
    grid: &[f64],
    initial_angle: f64,
    policy: &RefinementPolicy,
) -> Result<AngleLiftTrace>
where
    F: FnMut(f64) -> Result<Vec2>,
{
    if grid.len() < 2 {
        return Err(Error::InvalidParameter {
            message: "lift grid needs at least two nodes".into(),
        });
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter {
            message: "lift grid must be strictly increasing".into(),
        });
    }
    if !(policy.max_step_angle > 0.0 && policy.max_step_angle < PI) {
        return Err(Error::InvalidParameter {
            message: "max_step_angle must lie in (0, pi)".into(),
        });
    }

    let raw_first = raw_angle(&mut sampler, grid[0])?;
    if principal(initial_angle - raw_first).abs() > ANCHOR_GUARD {
        return Err(Error::InvalidParameter {
            message: "initial_angle is not a measure of the first sample's direction".into(),
        });
    }

    let mut lift = LiftBuilder {
        sampler,
        policy,
        times: Vec::with_capacity(2 * grid.len()),
        angles: Vec::with_capacity(2 * grid.len()),
        max_depth_used: 0,
    };
    lift.times.push(grid[0]);
    lift.angles.push(initial_angle);

    let mut raw_left = raw_first;
    for w in grid.windows(2) {
        let raw_right = raw_angle(&mut lift.sampler, w[1])?;
        lift.extend(w[0], raw_left, w[1], raw_right, 0)?;
        raw_left = raw_right;
    }

    Ok(AngleLiftTrace {
        times: lift.times,
        angles: lift.angles,
        max_depth_used: lift.max_depth_used,
    })
}

fn raw_angle<F>(sampler: &mut F, t: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<Vec2>,
{
    let v = sampler(t)?;
    if v.norm() < NORM_FLOOR {
        return Err(Error::ZeroVector);
    }
    Ok(f64::atan2(v.y, v.x))
}

struct LiftBuilder<'p, F> {
    sampler: F,
    policy: &'p RefinementPolicy,
    times: Vec<f64>,
    angles: Vec<f64>,
    max_depth_used: u32,
}

impl<F> LiftBuilder<'_, F>
where
    F: FnMut(f64) -> Result<Vec2>,
{
    fn extend(&mut self, tl: f64, raw_l: f64, tr: f64, raw_r: f64, depth: u32) -> Result<()> {
        let tm = 0.5 * (tl + tr);
        if !(tm > tl && tm < tr) {
            return Err(Error::RefinementExhausted { time: tl, depth });
        }
        let raw_m = raw_angle(&mut self.sampler, tm)?;
        let d1 = principal(raw_m - raw_l);
        let d2 = principal(raw_r - raw_m);
        let d = principal(raw_r - raw_l);
        let bound = self.policy.max_step_angle;
        if d1.abs() <= bound && d2.abs() <= bound && (d1 + d2 - d).abs() <= WRAP_GUARD {
            self.max_depth_used = self.max_depth_used.max(depth);
            let base = *self.angles.last().expect("trace starts nonempty");
            self.times.push(tm);
            self.angles.push(base + d1);
            self.times.push(tr);
            self.angles.push(base + d1 + d2);
            Ok(())
        } else if depth >= self.policy.max_depth {
            Err(Error::RefinementExhausted { time: tm, depth })
        } else {
            self.extend(tl, raw_l, tm, raw_m, depth + 1)?;
            self.extend(tm, raw_m, tr, raw_r, depth + 1)
        }
    }
}

/// Discrete continuous determination of the argument along already-sampled vectors.
pub fn lift_discrete_angles(samples: &[Vec2], initial_angle: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter {
            message: "need at least one sample".into(),
        });
    }
    if samples[0].norm() < NORM_FLOOR {
        return Err(Error::ZeroVector);
    }
    let mut prev_raw = f64::atan2(samples[0].y, samples[0].x);
    if principal(initial_angle - prev_raw).abs() > ANCHOR_GUARD {
        return Err(Error::InvalidParameter {
            message: "initial_angle is not a measure of the first sample's direction".into(),
        });
    }
    let mut out = Vec::with_capacity(samples.len());
    out.push(initial_angle);
    for (index, v) in samples.iter().enumerate().skip(1) {
        if v.norm() < NORM_FLOOR {
            return Err(Error::ZeroVector);
        }
        let raw = f64::atan2(v.y, v.x);
        let delta = principal(raw - prev_raw);
        // Steps at (or within roundoff of) a half turn are ambiguous.
        if delta.abs() >= PI - 1e-9 {
            return Err(Error::JumpTooLarge { index });
        }
        let last = *out.last().expect("nonempty");
        out.push(last + delta);
        prev_raw = raw;
    }
    Ok(out)
}

/// Radii and lifted arguments of a sampled curve that avoids the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarLift {
    pub radii: Vec<f64>,
    pub lifted_angles: Vec<f64>,
}

/// Polar decomposition of a sampled plane curve with a continuous argument.
pub fn polar_lift(curve: &[Vec2], initial_angle: f64) -> Result<PolarLift> {
    let lifted_angles = lift_discrete_angles(curve, initial_angle)?;
    let radii = curve.iter().map(|v| v.norm()).collect();
    Ok(PolarLift {
        radii,
        lifted_angles,
    })
}

/// Central-difference Jacobian of a plane map at `z` with step `h`.
pub fn finite_difference_jacobian<F>(map: F, z: Vec2, h: f64) -> Mat2
where
    F: Fn(Vec2) -> Vec2,
{
    let ex = Vec2::new(h, 0.0);
    let ey = Vec2::new(0.0, h);
    let dx = (map(z + ex) - map(z - ex)) * (0.5 / h);
    let dy = (map(z + ey) - map(z - ey)) * (0.5 / h);
    Mat2::new(dx.x, dy.x, dx.y, dy.y)
}
