//! Dual coordinate solver for the (cone-constrained) linear SVM.
//!
//! Primal: minimize `lambda/2 ||w||^2 + sum_i max(0, t_i - y_i (w.x_i + b))`
//! over `b` free and `w` in a closed convex cone `K` (all of R^d when there is
//! no constraint). `t_i` is 1 for the plain SVM; other values express a fixed
//! per-example margin offset.
//!
//! With `u(a) = sum_i a_i y_i x_i`, minimizing the Lagrangian over `w in K`
//! gives `w = P_K(u) / lambda` (`P_K` is the Euclidean projection) and the dual
//!
//! ```text
//! maximize  sum_i t_i a_i - ||P_K(u(a))||^2 / (2 lambda)
//! s.t.      0 <= a_i <= 1,  sum_i a_i y_i = 0
//! ```
//!
//! which is concave with a Lipschitz gradient since `||P_K(u)||^2 / 2` has
//! gradient `P_K(u)`. It is solved by SMO: each step moves one pair of dual
//! variables along the equality constraint, picked by the second-order working
//! set rule, with an exact one-dimensional line search. Without a cone the
//! line search is closed form. The bias is recovered afterwards by exact
//! minimization of the piecewise-linear hinge sum.

use crate::featspace::dot;

use super::ConeConstraint;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Stop once the maximal KKT violation of the dual drops below this.
    pub tolerance: f64,
    /// Also stop once primal minus dual objective is at most this fraction
    /// of the primal objective. Checked every `GAP_CHECK_EVERY` iterations.
    pub relative_gap: f64,
    pub max_iterations: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            relative_gap: 1e-6,
            max_iterations: 200_000,
        }
    }
}

pub(crate) struct Problem<'a> {
    pub xs: Vec<&'a [f64]>,
    pub ys: Vec<f64>,
    pub targets: Vec<f64>,
    pub lambda: f64,
    pub cone: Option<&'a ConeConstraint>,
}

pub(crate) struct DualSolution {
    pub w: Vec<f64>,
    pub b: f64,
    pub iterations: u64,
    pub kkt_violation: f64,
    pub dual_objective: f64,
    pub converged: bool,
}

impl Problem<'_> {
    fn project(&self, u: &[f64]) -> Vec<f64> {
        match self.cone {
            Some(cone) => cone.project(u),
            None => u.to_vec(),
        }
    }

    fn dim(&self) -> usize {
        self.xs.first().map_or(0, |x| x.len())
    }
}

/// Coefficients `(a, b)` with `P(v) = a v + b axis`, from `s = <v, axis>`
/// and `vv = ||v||^2` alone. Every cone projection has this form, which lets
/// the solver track the projection through inner products with the data.
fn projection_coeffs(s: f64, vv: f64, slope: f64) -> (f64, f64) {
    let nz = (vv - s * s).max(0.0).sqrt();
    if s >= 0.0 && nz <= s * slope {
        return (1.0, 0.0);
    }
    if s <= -slope * nz {
        return (0.0, 0.0);
    }
    let beta = (s + slope * nz) / (1.0 + slope * slope);
    if nz == 0.0 {
        return (0.0, beta);
    }
    let a = beta * slope / nz;
    (a, beta - a * s)
}

/// Gram matrix rows, cached in full for moderate `n`.
enum Kernel<'a> {
    Full { n: usize, k: Vec<f64> },
    Rows(&'a [&'a [f64]]),
}

const FULL_GRAM_LIMIT: usize = 3000;

impl<'a> Kernel<'a> {
    fn new(xs: &'a [&'a [f64]]) -> Self {
        let n = xs.len();
        if n > FULL_GRAM_LIMIT {
            return Kernel::Rows(xs);
        }
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = dot(xs[i], xs[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Kernel::Full { n, k }
    }

    fn row(&self, i: usize) -> std::borrow::Cow<'_, [f64]> {
        match self {
            Kernel::Full { n, k } => std::borrow::Cow::Borrowed(&k[i * n..(i + 1) * n]),
            Kernel::Rows(xs) => std::borrow::Cow::Owned(xs.iter().map(|x| dot(xs[i], x)).collect()),
        }
    }
}

/// Inner products of `u = sum_i a_i y_i x_i` that the solver tracks.
struct DualState {
    /// `<x_k, u>`
    xu: Vec<f64>,
    uu: f64,
    cu: f64,
}

impl DualState {
    fn compute(problem: &Problem<'_>, alpha: &[f64]) -> Self {
        let u = weighted_sum(&problem.xs, &problem.ys, alpha, problem.dim());
        Self {
            xu: problem.xs.iter().map(|x| dot(x, &u)).collect(),
            uu: dot(&u, &u),
            cu: problem.cone.map_or(0.0, |c| dot(c.axis(), &u)),
        }
    }
}

const RECOMPUTE_EVERY: u64 = 1000;
const GAP_CHECK_EVERY: u64 = 50;

pub(crate) fn solve(problem: &Problem<'_>, opts: &SolverOptions) -> DualSolution {
    let n = problem.xs.len();
    let lambda = problem.lambda;
    let xs = &problem.xs;
    let ys = &problem.ys;
    let targets = &problem.targets;
    let slope = problem.cone.map_or(0.0, |c| c.slope());
    let coeffs = |s: f64, vv: f64| match problem.cone {
        Some(_) => projection_coeffs(s, vv, slope),
        None => (1.0, 0.0),
    };

    let kernel = Kernel::new(xs);
    let diag: Vec<f64> = xs.iter().map(|x| dot(x, x)).collect();
    let xc: Vec<f64> = match problem.cone {
        Some(c) => xs.iter().map(|x| dot(x, c.axis())).collect(),
        None => vec![0.0; n],
    };
    let mut alpha = vec![0.0; n];
    let mut st = DualState::compute(problem, &alpha);
    // Gradient of the minimized form f = -dual:
    // grad_k = -t_k + y_k <x_k, P(u)> / lambda.
    let gradient = |st: &DualState, grad: &mut Vec<f64>| {
        let (a, b) = coeffs(st.cu, st.uu);
        grad.clear();
        grad.extend((0..n).map(|k| -targets[k] + ys[k] * (a * st.xu[k] + b * xc[k]) / lambda));
    };
    let mut grad = Vec::with_capacity(n);
    gradient(&st, &mut grad);

    let in_up = |a: f64, y: f64| (y > 0.0 && a < 1.0) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < 1.0);

    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let mut converged = false;

    while iterations < opts.max_iterations {
        // Maximal violating index on the "up" side.
        let mut i = usize::MAX;
        let mut m = f64::NEG_INFINITY;
        for k in 0..n {
            if in_up(alpha[k], ys[k]) {
                let v = -ys[k] * grad[k];
                if v > m {
                    m = v;
                    i = k;
                }
            }
        }
        let mut big_m = f64::INFINITY;
        for k in 0..n {
            if in_low(alpha[k], ys[k]) {
                big_m = big_m.min(-ys[k] * grad[k]);
            }
        }
        violation = if i == usize::MAX { 0.0 } else { m - big_m };
        if violation < opts.tolerance {
            converged = true;
            break;
        }
        if iterations % GAP_CHECK_EVERY == 0 && iterations > 0 {
            let (a, b) = coeffs(st.cu, st.uu);
            let pp = a * a * st.uu + 2.0 * a * b * st.cu + b * b;
            let margins: Vec<f64> = (0..n).map(|k| (a * st.xu[k] + b * xc[k]) / lambda).collect();
            let bias = optimal_bias(&margins, ys, targets);
            let hinge: f64 = (0..n)
                .map(|k| (targets[k] - ys[k] * (margins[k] + bias)).max(0.0))
                .sum();
            let primal = pp / (2.0 * lambda) + hinge;
            let dual = dot(targets, &alpha) - pp / (2.0 * lambda);
            if primal - dual <= opts.relative_gap * primal.abs() {
                converged = true;
                break;
            }
        }

        // Second-order choice of the partner index.
        let row_i = kernel.row(i);
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for k in 0..n {
            if !in_low(alpha[k], ys[k]) {
                continue;
            }
            let gap = m + ys[k] * grad[k];
            if gap <= 0.0 {
                continue;
            }
            let curvature = ((diag[i] + diag[k] - 2.0 * row_i[k]) / lambda).max(1e-12);
            let score = -gap * gap / curvature;
            if score < best {
                best = score;
                j = k;
            }
        }
        if j == usize::MAX {
            break;
        }

        let (yi, yj) = (ys[i], ys[j]);
        let cap_i = if yi > 0.0 { 1.0 - alpha[i] } else { alpha[i] };
        let cap_j = if yj > 0.0 { alpha[j] } else { 1.0 - alpha[j] };
        let t_max = cap_i.min(cap_j);
        // u moves along delta = x_i - x_j.
        let dd = (diag[i] + diag[j] - 2.0 * row_i[j]).max(0.0);
        let ud = st.xu[i] - st.xu[j];
        let cd = xc[i] - xc[j];
        let slope0 = yi * grad[i] - yj * grad[j];
        let curvature = dd / lambda;
        let offset = -yi * targets[i] + yj * targets[j];

        let step = match problem.cone {
            None => {
                if curvature > 0.0 {
                    (-slope0 / curvature).min(t_max)
                } else {
                    t_max
                }
            }
            Some(_) => {
                let slope_at = |t: f64| {
                    let (a, b) = coeffs(st.cu + t * cd, st.uu + 2.0 * t * ud + t * t * dd);
                    offset + (a * (ud + t * dd) + b * cd) / lambda
                };
                line_search(slope_at, slope0, curvature, t_max)
            }
        };

        iterations += 1;
        if step <= 0.0 {
            // No progress possible along this pair.
            break;
        }

        alpha[i] += yi * step;
        alpha[j] -= yj * step;
        if step == t_max {
            if cap_i <= cap_j {
                alpha[i] = if yi > 0.0 { 1.0 } else { 0.0 };
            }
            if cap_j <= cap_i {
                alpha[j] = if yj > 0.0 { 0.0 } else { 1.0 };
            }
        }
        alpha[i] = alpha[i].clamp(0.0, 1.0);
        alpha[j] = alpha[j].clamp(0.0, 1.0);

        if iterations % RECOMPUTE_EVERY == 0 {
            st = DualState::compute(problem, &alpha);
        } else {
            let row_j = kernel.row(j);
            for k in 0..n {
                st.xu[k] += step * (row_i[k] - row_j[k]);
            }
            st.uu += 2.0 * step * ud + step * step * dd;
            st.cu += step * cd;
        }
        gradient(&st, &mut grad);
    }

    let u = weighted_sum(xs, ys, &alpha, problem.dim());
    let p = problem.project(&u);
    let w: Vec<f64> = p.iter().map(|v| v / lambda).collect();
    let margins: Vec<f64> = xs.iter().map(|x| dot(x, &w)).collect();
    let b = optimal_bias(&margins, ys, targets);
    let dual_objective = dot(targets, &alpha) - dot(&p, &p) / (2.0 * lambda);

    DualSolution {
        w,
        b,
        iterations,
        kkt_violation: violation,
        dual_objective,
        converged,
    }
}

fn weighted_sum(xs: &[&[f64]], ys: &[f64], alpha: &[f64], d: usize) -> Vec<f64> {
    let mut u = vec![0.0; d];
    for ((x, y), a) in xs.iter().zip(ys).zip(alpha) {
        if *a != 0.0 {
            for (uk, xk) in u.iter_mut().zip(x.iter()) {
                *uk += a * y * xk;
            }
        }
    }
    u
}

/// Root of the nondecreasing directional derivative on `[0, t_max]`, or
/// `t_max` when the derivative stays negative. The derivative is Lipschitz
/// with constant `curvature`, so the Newton step from 0 never overshoots the
/// root and serves as a lower bracket.
fn line_search(slope_at: impl Fn(f64) -> f64, slope0: f64, curvature: f64, t_max: f64) -> f64 {
    if slope_at(t_max) <= 0.0 {
        return t_max;
    }
    let (mut lo, mut f_lo) = (0.0, slope0);
    let (mut hi, mut f_hi) = (t_max, slope_at(t_max));
    if curvature > 0.0 {
        let t = (-slope0 / curvature).min(t_max);
        let f = slope_at(t);
        if f >= 0.0 {
            hi = t;
            f_hi = f;
            if f == 0.0 {
                return t;
            }
        } else {
            lo = t;
            f_lo = f;
        }
    }
    // Illinois variant of regula falsi.
    let mut side = 0i8;
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
        let t = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let t = if t > lo && t < hi { t } else { 0.5 * (lo + hi) };
        let f = slope_at(t);
        if f == 0.0 {
            return t;
        }
        if f < 0.0 {
            lo = t;
            f_lo = f;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = t;
            f_hi = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    lo
}

/// Midpoint of the set of minimizers of `b -> sum_i max(0, t_i - y_i (m_i + b))`.
///
/// Positive examples contribute slope -1 left of `t_i - m_i`, negative ones
/// slope +1 right of `-t_i - m_i`. Needs at least one example of each class.
pub(crate) fn optimal_bias(margins: &[f64], ys: &[f64], targets: &[f64]) -> f64 {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for ((m, y), t) in margins.iter().zip(ys).zip(targets) {
        if *y > 0.0 {
            pos.push(t - m);
        } else {
            neg.push(-t - m);
        }
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let n_pos = pos.len() as i64;
    let le = |v: &[f64], x: f64| v.partition_point(|k| *k <= x) as i64;
    let lt = |v: &[f64], x: f64| v.partition_point(|k| *k < x) as i64;
    // Right and left derivatives at b.
    let right = |b: f64| -(n_pos - le(&pos, b)) + le(&neg, b);
    let left = |b: f64| -(n_pos - lt(&pos, b)) + lt(&neg, b);

    let mut all: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    all.sort_by(f64::total_cmp);
    let lo = all.iter().copied().find(|&b| right(b) >= 0);
    let hi = all.iter().rev().copied().find(|&b| left(b) <= 0);
    match (lo, hi) {
        (Some(lo), Some(hi)) if lo <= hi => 0.5 * (lo + hi),
        (Some(lo), _) => lo,
        (None, Some(hi)) => hi,
        (None, None) => 0.0,
    }
}
