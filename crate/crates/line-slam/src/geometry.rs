//! Perpendicular-form line geometry: fitting, distances, frame transforms
//! and projections used by every other module.
//!
//! A line is `x·cos α + y·sin α = r` with the canonical chart `r ≥ 0`,
//! `α ∈ (−π, π]`. The sign flip `(r, α) ↔ (−r, α+π)` is resolved at
//! construction so two values represent the same line iff their fields are
//! equal.

use nalgebra::{Matrix2, Matrix2x3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TAU: f64 = std::f64::consts::TAU;
pub const PI: f64 = std::f64::consts::PI;

/// Wrap an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate cluster: all points coincide, line direction undefined")]
    DegenerateCluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Line in perpendicular (polar) form. `r` is the distance from the origin,
/// `alpha` the direction of the line's normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    pub r: f64,
    pub alpha: f64,
}

impl LineParams {
    /// Build a canonical line: `r ≥ 0`, `alpha ∈ (−π, π]`. A negative `r`
    /// is folded over by flipping the normal. For `r = 0` the chart is
    /// singular and `alpha` is kept as given (wrapped).
    pub fn new(r: f64, alpha: f64) -> Self {
        if r < 0.0 {
            Self { r: -r, alpha: wrap_angle(alpha + PI) }
        } else {
            Self { r, alpha: wrap_angle(alpha) }
        }
    }

    pub fn normalized(&self) -> Self {
        Self::new(self.r, self.alpha)
    }

    /// Unit normal (cos α, sin α).
    pub fn normal(&self) -> (f64, f64) {
        (self.alpha.cos(), self.alpha.sin())
    }

    /// Unit direction along the line, (−sin α, cos α).
    pub fn direction(&self) -> (f64, f64) {
        (-self.alpha.sin(), self.alpha.cos())
    }

    /// Point on the line at projection coordinate `t` (see
    /// [`project_onto_line`]).
    pub fn point_at(&self, t: f64) -> Point2 {
        let (nx, ny) = self.normal();
        let (dx, dy) = self.direction();
        Point2::new(self.r * nx + t * dx, self.r * ny + t * dy)
    }

    /// Smallest (Δr, wrapped Δα) between two lines, accounting for the
    /// (r, α) ↔ (−r, α+π) ambiguity near r = 0. Returns the representation
    /// with the smaller combined residual.
    pub fn residual_to(&self, other: &LineParams) -> (f64, f64) {
        let direct = (self.r - other.r, wrap_angle(self.alpha - other.alpha));
        let flipped = (-self.r - other.r, wrap_angle(self.alpha + PI - other.alpha));
        let n1 = direct.0.abs() + direct.1.abs();
        let n2 = flipped.0.abs() + flipped.1.abs();
        if n1 <= n2 {
            direct
        } else {
            flipped
        }
    }
}

/// Robot pose (x, y, heading), heading wrapped to (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn origin() -> Self {
        Self { x: 0.0, y: 0.0, theta: 0.0 }
    }

    /// Pose composition: apply increment `u` expressed in this pose's frame.
    pub fn compose(&self, u: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * u.x - s * u.y,
            self.y + s * u.x + c * u.y,
            self.theta + u.theta,
        )
    }

    /// Increment `u` such that `self ⊕ u = other`.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        Pose2::new(c * dx + s * dy, -s * dx + c * dy, other.theta - self.theta)
    }
}

/// Perpendicular distance from a point to a line.
pub fn perp_distance(p: &Point2, line: &LineParams) -> f64 {
    (p.x * line.alpha.cos() + p.y * line.alpha.sin() - line.r).abs()
}

/// Signed coordinate of the foot of the perpendicular from `p`, measured
/// along the line direction (−sin α, cos α) from the foot of the origin's
/// perpendicular.
pub fn project_onto_line(p: &Point2, line: &LineParams) -> f64 {
    -p.x * line.alpha.sin() + p.y * line.alpha.cos()
}

/// Running sums over a point set; enough to fit a line and its χ² Hessian
/// in O(1), and to pool two clusters without touching their points.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub sx: f64,
    pub sy: f64,
    pub sxx: f64,
    pub syy: f64,
    pub sxy: f64,
}

impl Moments {
    pub fn from_points(points: &[Point2]) -> Self {
        let mut m = Moments::default();
        for p in points {
            m.push(p);
        }
        m
    }

    pub fn push(&mut self, p: &Point2) {
        self.n += 1;
        self.sx += p.x;
        self.sy += p.y;
        self.sxx += p.x * p.x;
        self.syy += p.y * p.y;
        self.sxy += p.x * p.y;
    }

    pub fn merged(&self, other: &Moments) -> Moments {
        Moments {
            n: self.n + other.n,
            sx: self.sx + other.sx,
            sy: self.sy + other.sy,
            sxx: self.sxx + other.sxx,
            syy: self.syy + other.syy,
            sxy: self.sxy + other.sxy,
        }
    }

    /// Centered second moments (S_xx, S_yy, S_xy).
    fn centered(&self) -> (f64, f64, f64) {
        let n = self.n as f64;
        (
            self.sxx - self.sx * self.sx / n,
            self.syy - self.sy * self.sy / n,
            self.sxy - self.sx * self.sy / n,
        )
    }
}

/// Least-squares line over a cluster: parameters, χ² error, and the exact
/// χ² Hessian in (r, α) at the optimum.
#[derive(Debug, Clone)]
pub struct LineFit {
    pub params: LineParams,
    pub chi2: f64,
    pub hessian: Matrix2<f64>,
    pub n_points: usize,
    /// Set when the fitted r is (numerically) zero: the chart is singular
    /// there and callers must treat the sign-flip ambiguity.
    pub through_origin: bool,
}

/// Fit the perpendicular-distance least-squares line to a point set.
///
/// `chi2` is Σ d⊥²/σ² at the minimum and `hessian` the analytic second
/// derivative of χ² with respect to (r, α), computed from moment sums.
pub fn fit_line(points: &[Point2], sigma: f64) -> Result<LineFit, GeometryError> {
    fit_line_moments(&Moments::from_points(points), sigma)
}

/// Same as [`fit_line`] but from precomputed moment sums.
pub fn fit_line_moments(m: &Moments, sigma: f64) -> Result<LineFit, GeometryError> {
    assert!(m.n >= 2, "fit_line needs at least 2 points");
    assert!(sigma > 0.0);
    let n = m.n as f64;
    let (cxx, cyy, cxy) = m.centered();
    if cxx + cyy < 1e-18 {
        return Err(GeometryError::DegenerateCluster);
    }
    // Minimizer of E(α) = cos²α·Sxx + 2 sinα cosα·Sxy + sin²α·Syy with the
    // optimal r substituted in.
    let alpha = 0.5 * (-2.0 * cxy).atan2(cyy - cxx);
    let (sa, ca) = alpha.sin_cos();
    let r = (m.sx * ca + m.sy * sa) / n;
    let params = LineParams::new(r, alpha);
    // Re-read the (possibly flipped) canonical angle for the Hessian.
    let (sa, ca) = params.alpha.sin_cos();
    let r = params.r;

    let s2 = sigma * sigma;
    // E = Σ d⊥² at the optimum (centered quadratic form in the normal).
    let e = ca * ca * cxx + 2.0 * sa * ca * cxy + sa * sa * cyy;
    let chi2 = (e / s2).max(0.0);

    // d_i = −x_i sin α + y_i cos α; at the optimum Σ g_i = 0.
    let sum_d = -sa * m.sx + ca * m.sy;
    let sum_d2 = sa * sa * m.sxx - 2.0 * sa * ca * m.sxy + ca * ca * m.syy;
    let h_rr = 2.0 * n / s2;
    let h_ra = -2.0 * sum_d / s2;
    let h_aa = 2.0 * (sum_d2 - e) / s2;
    let hessian = Matrix2::new(h_rr, h_ra, h_ra, h_aa);

    Ok(LineFit {
        params,
        chi2,
        hessian,
        n_points: m.n,
        through_origin: r.abs() < 1e-12,
    })
}

/// Express a global-frame line in the robot frame of `pose`.
///
/// Returns the transformed line plus the Jacobians of (r', α') with respect
/// to the pose (2×3) and to the global line (2×2), consistent with the
/// normalization branch taken.
pub fn transform_line_to_frame(
    global: &LineParams,
    pose: &Pose2,
) -> (LineParams, Matrix2x3<f64>, Matrix2<f64>) {
    let (sa, ca) = global.alpha.sin_cos();
    let r_local = global.r - (pose.x * ca + pose.y * sa);
    let alpha_local = global.alpha - pose.theta;

    let mut jac_pose = Matrix2x3::new(-ca, -sa, 0.0, 0.0, 0.0, -1.0);
    let mut jac_line = Matrix2::new(1.0, pose.x * sa - pose.y * ca, 0.0, 1.0);
    let flipped = r_local < 0.0;
    if flipped {
        for c in 0..3 {
            jac_pose[(0, c)] = -jac_pose[(0, c)];
        }
        jac_line[(0, 0)] = -jac_line[(0, 0)];
        jac_line[(0, 1)] = -jac_line[(0, 1)];
    }
    let local = if flipped {
        LineParams { r: -r_local, alpha: wrap_angle(alpha_local + PI) }
    } else {
        LineParams { r: r_local, alpha: wrap_angle(alpha_local) }
    };
    (local, jac_pose, jac_line)
}

/// Inverse of [`transform_line_to_frame`]: lift a robot-frame line to the
/// global frame.
pub fn line_to_global(local: &LineParams, pose: &Pose2) -> LineParams {
    let alpha = local.alpha + pose.theta;
    let (sa, ca) = alpha.sin_cos();
    let r = local.r + pose.x * ca + pose.y * sa;
    LineParams::new(r, alpha)
}
