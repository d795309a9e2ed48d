//! Linear SVM whose normal vector is held inside a cone around a prior.
//!
//! [`fit_cone_svm`] solves
//!
//! ```text
//! minimize   lambda/2 w.w + sum_i max(0, 1 - y_i (w.x_i + b))
//! subject to theta * ||w|| <= w.c
//! ```
//!
//! for a unit prior direction `c` and `theta` in (0, 1]: the hyperplane may
//! deviate from `c` by at most `acos(theta)`. [`fit_svm`] is the same problem
//! without the cone. Both use the dual solver in [`solver`], which works
//! directly with the closed-form cone projection, and report a duality gap as
//! an optimality certificate. [`oracle`] holds brute-force checks.

pub mod oracle;
mod projection;
pub mod solver;

use serde::{Deserialize, Serialize};

use crate::featspace::{dot, norm, FeatureVector};
use crate::{Error, Result};

pub use projection::{project_to_cone, theta_from_degrees, ConeConstraint};
pub use solver::SolverOptions;

/// A training point with label `+1` or `-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub x: FeatureVector,
    pub y: i8,
}

impl LabeledExample {
    pub fn new(x: FeatureVector, y: i8) -> Result<Self> {
        if y != 1 && y != -1 {
            return Err(Error::invalid(format!("label must be -1 or 1, got {y}")));
        }
        Ok(Self { x, y })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: u64,
    /// `max(0, theta ||w|| - w.c)`; zero without a constraint.
    pub feasibility_residual: f64,
    /// Primal objective minus dual objective at the returned point.
    pub duality_gap: f64,
    pub kkt_violation: f64,
    /// A zero norm means the data forced `w = 0`.
    pub w_norm: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub lambda: f64,
    pub constraint: Option<ConeConstraint>,
    pub objective: f64,
    pub report: SolverReport,
}

/// On-disk model layout.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    w: Vec<f64>,
    b: f64,
    lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<Vec<f64>>,
    objective: f64,
}

impl SvmModel {
    pub fn dimension(&self) -> usize {
        self.w.len()
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        predict(self, x)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let file = ModelFile {
            w: self.w.clone(),
            b: self.b,
            lambda: self.lambda,
            theta: self.constraint.as_ref().map(|c| c.theta()),
            axis: self.constraint.as_ref().map(|c| c.axis().to_vec()),
            objective: self.objective,
        };
        serde_json::to_value(file).expect("model is serializable")
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::invalid(format!("bad model JSON: {e}")))?;
        let constraint = match (file.theta, file.axis) {
            (Some(theta), Some(axis)) => Some(ConeConstraint::new(axis, theta)?),
            (None, None) => None,
            _ => return Err(Error::invalid("model JSON needs both `theta` and `axis` or neither")),
        };
        if file.w.is_empty() || file.w.iter().any(|v| !v.is_finite()) || !file.b.is_finite() {
            return Err(Error::invalid("model weights must be finite"));
        }
        Ok(SvmModel {
            w: file.w,
            b: file.b,
            lambda: file.lambda,
            constraint,
            objective: file.objective,
            report: SolverReport::default(),
        })
    }
}

/// Score `w.x + b`.
pub fn predict(model: &SvmModel, x: &FeatureVector) -> Result<f64> {
    if x.len() != model.w.len() {
        return Err(Error::invalid(format!(
            "model has dimension {}, input has {}",
            model.w.len(),
            x.len()
        )));
    }
    Ok(dot(&model.w, x.values()) + model.b)
}

/// `lambda/2 w.w + sum of hinge losses`, recomputed from scratch.
pub fn objective_at(w: &[f64], b: f64, lambda: f64, data: &[LabeledExample]) -> f64 {
    let hinge: f64 = data
        .iter()
        .map(|e| (1.0 - f64::from(e.y) * (dot(w, e.x.values()) + b)).max(0.0))
        .sum();
    0.5 * lambda * dot(w, w) + hinge
}

pub fn objective(model: &SvmModel, data: &[LabeledExample]) -> f64 {
    objective_at(&model.w, model.b, model.lambda, data)
}

fn validate(data: &[LabeledExample], lambda: f64) -> Result<usize> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive and finite, got {lambda}")));
    }
    let d = data
        .first()
        .map(|e| e.x.len())
        .ok_or_else(|| Error::invalid("training set is empty"))?;
    if let Some(e) = data.iter().find(|e| e.x.len() != d) {
        return Err(Error::invalid(format!(
            "inconsistent dimensions in training set: {} vs {d}",
            e.x.len()
        )));
    }
    if let Some(e) = data.iter().find(|e| e.y != 1 && e.y != -1) {
        return Err(Error::invalid(format!("label must be -1 or 1, got {}", e.y)));
    }
    let pos = data.iter().filter(|e| e.y == 1).count();
    if pos == 0 || pos == data.len() {
        return Err(Error::invalid(
            "training set needs at least one positive and one negative example",
        ));
    }
    Ok(d)
}

/// Unconstrained linear SVM.
pub fn fit_svm(data: &[LabeledExample], lambda: f64) -> Result<SvmModel> {
    fit_svm_with(data, lambda, &SolverOptions::default())
}

pub fn fit_svm_with(data: &[LabeledExample], lambda: f64, opts: &SolverOptions) -> Result<SvmModel> {
    validate(data, lambda)?;
    Ok(run(data, lambda, None, opts))
}

/// Linear SVM with `w` restricted to the cone.
pub fn fit_cone_svm(data: &[LabeledExample], lambda: f64, cone: &ConeConstraint) -> Result<SvmModel> {
    fit_cone_svm_with(data, lambda, cone, &SolverOptions::default())
}

pub fn fit_cone_svm_with(
    data: &[LabeledExample],
    lambda: f64,
    cone: &ConeConstraint,
    opts: &SolverOptions,
) -> Result<SvmModel> {
    let d = validate(data, lambda)?;
    if cone.dimension() != d {
        return Err(Error::invalid(format!(
            "cone axis has dimension {}, data has {d}",
            cone.dimension()
        )));
    }
    Ok(run(data, lambda, Some(cone), opts))
}

fn run(data: &[LabeledExample], lambda: f64, cone: Option<&ConeConstraint>, opts: &SolverOptions) -> SvmModel {
    let problem = solver::Problem {
        xs: data.iter().map(|e| e.x.values()).collect(),
        ys: data.iter().map(|e| f64::from(e.y)).collect(),
        targets: vec![1.0; data.len()],
        lambda,
        cone,
    };
    let sol = solver::solve(&problem, opts);
    let objective = objective_at(&sol.w, sol.b, lambda, data);
    let report = SolverReport {
        iterations: sol.iterations,
        feasibility_residual: cone.map_or(0.0, |c| c.residual(&sol.w)),
        duality_gap: objective - sol.dual_objective,
        kkt_violation: sol.kkt_violation,
        w_norm: norm(&sol.w),
        converged: sol.converged,
    };
    SvmModel {
        w: sol.w,
        b: sol.b,
        lambda,
        constraint: cone.cloned(),
        objective,
        report,
    }
}

/// SVM regularized towards a prior: `lambda/2 ||w - prior||^2 + hinge`.
///
/// Substituting `w = v + prior` turns this into a plain SVM in `v` whose
/// margin targets shift by `y_i prior.x_i`. Returns `(w, b)`.
pub(crate) fn fit_soft_prior(
    data: &[LabeledExample],
    lambda: f64,
    prior: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, f64)> {
    let d = validate(data, lambda)?;
    if prior.len() != d {
        return Err(Error::invalid("prior dimension differs from data dimension"));
    }
    let problem = solver::Problem {
        xs: data.iter().map(|e| e.x.values()).collect(),
        ys: data.iter().map(|e| f64::from(e.y)).collect(),
        targets: data
            .iter()
            .map(|e| 1.0 - f64::from(e.y) * dot(prior, e.x.values()))
            .collect(),
        lambda,
        cone: None,
    };
    let sol = solver::solve(&problem, opts);
    let w = sol.w.iter().zip(prior).map(|(v, c)| v + c).collect();
    Ok((w, sol.b))
}
