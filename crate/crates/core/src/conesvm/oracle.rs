//! Brute-force reference answers for small instances.
//!
//! Nothing here shares code with the solver or the closed-form projection, so
//! agreement between the two is meaningful.

use super::{ConeConstraint, LabeledExample};

/// Best point found by [`grid_search_2d`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridOptimum {
    pub w: [f64; 2],
    pub b: f64,
    pub objective: f64,
}

/// `min_b sum_i max(0, 1 - y_i (m_i + b))`, returning `(b, value)`.
///
/// The function is convex and piecewise linear with kinks at `y_i - m_i`, so
/// its minimum is attained at one of them. Every kink is evaluated directly,
/// which is O(n^2) but leaves nothing to get wrong.
pub fn best_bias(margins: &[f64], ys: &[i8]) -> (f64, f64) {
    let eval = |b: f64| -> f64 {
        margins
            .iter()
            .zip(ys)
            .map(|(m, y)| (1.0 - f64::from(*y) * (m + b)).max(0.0))
            .sum()
    };
    let kinks: Vec<f64> = margins.iter().zip(ys).map(|(m, y)| f64::from(*y) - m).collect();
    let mut best = (kinks[0], eval(kinks[0]));
    for &k in &kinks[1..] {
        let v = eval(k);
        if v < best.1 {
            best = (k, v);
        }
    }
    best
}

fn objective_with_best_bias(w: [f64; 2], lambda: f64, data: &[LabeledExample], ys: &[i8]) -> (f64, f64) {
    let margins: Vec<f64> = data
        .iter()
        .map(|e| w[0] * e.x.values()[0] + w[1] * e.x.values()[1])
        .collect();
    let (b, hinge) = best_bias(&margins, ys);
    (b, 0.5 * lambda * (w[0] * w[0] + w[1] * w[1]) + hinge)
}

fn feasible(w: [f64; 2], cone: Option<&ConeConstraint>) -> bool {
    match cone {
        None => true,
        Some(c) => {
            let a = c.axis();
            c.theta() * (w[0] * w[0] + w[1] * w[1]).sqrt() <= w[0] * a[0] + w[1] * a[1]
        }
    }
}

/// Global minimum of the (cone-constrained) 2-D SVM objective by search.
///
/// `b` is minimized exactly for every `w`. Over `w` a 101 x 101 grid on the
/// box that must contain the optimum is refined around the incumbent eight
/// times; with a cone, each boundary ray is also searched the same way so the
/// answer is not limited by how many grid points fit inside a narrow cone.
pub fn grid_search_2d(data: &[LabeledExample], lambda: f64, cone: Option<&ConeConstraint>) -> GridOptimum {
    assert!(data.iter().all(|e| e.x.len() == 2), "grid search is two-dimensional");
    let ys: Vec<i8> = data.iter().map(|e| e.y).collect();
    let pos = ys.iter().filter(|y| **y > 0).count();
    let minority = pos.min(ys.len() - pos).max(1) as f64;
    // With w = 0 and b = +-1 the objective is 2 * minority, which bounds
    // lambda/2 ||w||^2 at the optimum.
    let radius = (4.0 * minority / lambda).sqrt();

    let mut best = GridOptimum {
        w: [0.0, 0.0],
        b: 0.0,
        objective: f64::INFINITY,
    };
    let consider = |w: [f64; 2], best: &mut GridOptimum| {
        let (b, obj) = objective_with_best_bias(w, lambda, data, &ys);
        if obj < best.objective {
            *best = GridOptimum { w, b, objective: obj };
        }
    };
    consider([0.0, 0.0], &mut best);

    const N: i32 = 50;
    let mut centre = [0.0, 0.0];
    let mut step = radius / f64::from(N);
    for _ in 0..8 {
        for i in -N..=N {
            for j in -N..=N {
                let w = [centre[0] + f64::from(i) * step, centre[1] + f64::from(j) * step];
                if feasible(w, cone) {
                    consider(w, &mut best);
                }
            }
        }
        centre = best.w;
        step *= 6.0 / f64::from(N);
    }

    if let Some(c) = cone {
        let a = c.axis();
        let (cos, sin) = (c.theta(), (1.0 - c.theta() * c.theta()).max(0.0).sqrt());
        for side in [1.0, -1.0] {
            // Unit vector along a boundary ray: rotate the axis by +-acos(theta).
            let dir = [cos * a[0] - side * sin * a[1], side * sin * a[0] + cos * a[1]];
            let mut ray_best = best.clone();
            ray_best.objective = f64::INFINITY;
            let (mut lo, mut hi) = (0.0, radius);
            for _ in 0..12 {
                let h = (hi - lo) / 200.0;
                for k in 0..=200 {
                    let r = lo + f64::from(k) * h;
                    consider([r * dir[0], r * dir[1]], &mut ray_best);
                }
                let r = (ray_best.w[0] * dir[0] + ray_best.w[1] * dir[1]).max(0.0);
                lo = (r - 5.0 * h).max(0.0);
                hi = r + 5.0 * h;
            }
            if ray_best.objective < best.objective {
                best = ray_best;
            }
        }
    }
    best
}

/// Searches the lattice `resolution * Z^d` (d <= 3) for a feasible point
/// strictly closer to `v` than `candidate`. Returns the first one found.
///
/// Scans a fine cube of `2 * half_width + 1` points per axis around the
/// candidate, then a coarse lattice (spacing `coarse`) over the whole ball of
/// points closer to `v` than the candidate.
pub fn closer_feasible_lattice_point(
    v: &[f64],
    candidate: &[f64],
    cone: &ConeConstraint,
    resolution: f64,
    half_width: i64,
    coarse: f64,
) -> Option<Vec<f64>> {
    let d = v.len();
    assert!((1..=3).contains(&d), "lattice scan supports d <= 3");
    let dist2 = |p: &[f64]| -> f64 { p.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum() };
    let target = dist2(candidate);
    let is_feasible = |p: &[f64]| {
        let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        let s: f64 = p.iter().zip(cone.axis()).map(|(a, b)| a * b).sum();
        cone.theta() * n <= s
    };
    let better = |p: &[f64]| dist2(p) < target * (1.0 - 1e-12) - 1e-300 && is_feasible(p);

    let fine_centre: Vec<i64> = candidate.iter().map(|c| (c / resolution).round() as i64).collect();
    let fine_ranges: Vec<(i64, i64)> = fine_centre
        .iter()
        .map(|c| (c - half_width, c + half_width))
        .collect();
    if let Some(p) = scan(&fine_ranges, resolution, &better) {
        return Some(p);
    }

    let r = target.sqrt();
    let coarse_ranges: Vec<(i64, i64)> = v
        .iter()
        .map(|c| (((c - r) / coarse).floor() as i64, ((c + r) / coarse).ceil() as i64))
        .collect();
    scan(&coarse_ranges, coarse, &better)
}

fn scan(ranges: &[(i64, i64)], spacing: f64, accept: &impl Fn(&[f64]) -> bool) -> Option<Vec<f64>> {
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut point = vec![0.0; ranges.len()];
    loop {
        for (p, i) in point.iter_mut().zip(&idx) {
            *p = *i as f64 * spacing;
        }
        if accept(&point) {
            return Some(point);
        }
        // Odometer increment.
        let mut k = 0;
        loop {
            if k == ranges.len() {
                return None;
            }
            idx[k] += 1;
            if idx[k] <= ranges[k].1 {
                break;
            }
            idx[k] = ranges[k].0;
            k += 1;
        }
    }
}
