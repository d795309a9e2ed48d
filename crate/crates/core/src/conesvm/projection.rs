use serde::{Deserialize, Serialize};

use crate::featspace::{dot, norm, FeatureVector};
use crate::{Error, Result};

/// Feasible set `{ w : theta * ||w|| <= <w, axis> }`: a circular cone of
/// half-angle `acos(theta)` around the unit vector `axis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeConstraint {
    axis: Vec<f64>,
    theta: f64,
}

impl ConeConstraint {
    /// `axis` must already be unit length (within 1e-9); `theta` in (0, 1].
    pub fn new(axis: Vec<f64>, theta: f64) -> Result<Self> {
        if axis.is_empty() || axis.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cone axis must be a non-empty finite vector"));
        }
        let n = norm(&axis);
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("cone axis must be unit norm, has norm {n}")));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::invalid(format!("cone theta must lie in (0, 1], got {theta}")));
        }
        Ok(Self { axis, theta })
    }

    /// Cone around the direction of `prior`, which is normalized first.
    pub fn around(prior: &FeatureVector, theta: f64) -> Result<Self> {
        Self::new(prior.l2_normalize()?.into_values(), theta)
    }

    /// `theta = cos(half_angle)`.
    pub fn from_degrees(axis: Vec<f64>, half_angle_deg: f64) -> Result<Self> {
        Self::new(axis, theta_from_degrees(half_angle_deg))
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dimension(&self) -> usize {
        self.axis.len()
    }

    pub fn half_angle(&self) -> f64 {
        self.theta.acos()
    }

    /// `tan(acos(theta))`: radial slope of the cone boundary.
    pub fn slope(&self) -> f64 {
        (1.0 - self.theta * self.theta).max(0.0).sqrt() / self.theta
    }

    /// `max(0, theta * ||w|| - <w, axis>)`.
    pub fn residual(&self, w: &[f64]) -> f64 {
        (self.theta * norm(w) - dot(w, &self.axis)).max(0.0)
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        self.residual(w) <= tol
    }

    /// Euclidean projection onto the cone.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        project_to_cone(v, self)
    }
}

/// Converts a half-angle in degrees into the cosine bound used by the cone.
pub fn theta_from_degrees(half_angle_deg: f64) -> f64 {
    half_angle_deg.to_radians().cos()
}

/// Closed-form Euclidean projection onto a circular cone.
///
/// Split `v = s * axis + z` with `z` orthogonal to the axis and let `t` be
/// the boundary slope. Points with `||z|| <= s * t` are inside; points with
/// `s <= -t * ||z||` lie in the polar cone and map to 0; the rest map to
/// `beta * (axis + t * z / ||z||)` with `beta = (s + t * ||z||) / (1 + t^2)`.
pub fn project_to_cone(v: &[f64], cone: &ConeConstraint) -> Vec<f64> {
    let c = &cone.axis;
    debug_assert_eq!(v.len(), c.len());
    let t = cone.slope();
    let s = dot(v, c);
    let z: Vec<f64> = v.iter().zip(c).map(|(vi, ci)| vi - s * ci).collect();
    let nz = norm(&z);

    if s >= 0.0 && nz <= s * t {
        return v.to_vec();
    }
    if s <= -t * nz {
        return vec![0.0; v.len()];
    }
    let beta = (s + t * nz) / (1.0 + t * t);
    if nz == 0.0 {
        // t == 0 and s > 0: the cone is the ray through the axis.
        return c.iter().map(|ci| beta * ci).collect();
    }
    c.iter()
        .zip(&z)
        .map(|(ci, zi)| beta * (ci + t * zi / nz))
        .collect()
}
