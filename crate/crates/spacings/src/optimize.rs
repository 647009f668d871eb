//! Bounded derivative-free minimization used by all spacings estimators.
//!
//! Spacing objectives are piecewise-smooth in theta only through the model
//! CDF, so the primary method is a Nelder-Mead simplex with box projection
//! and a handful of restarts rather than anything gradient-based.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SpacingsError};

const MAX_EVALUATIONS: usize = 100_000;
const MAX_RESTARTS: usize = 5;

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub minimizer: Vec<f64>,
    pub value: f64,
    /// Objective evaluations consumed.
    pub iterations: usize,
    pub converged: bool,
    /// Finite-difference gradient norm at the minimizer.
    pub stationarity: f64,
    pub restarts: usize,
}

struct Tracker<'a> {
    objective: &'a dyn Fn(&[f64]) -> f64,
    evaluations: usize,
    best_point: Vec<f64>,
    best_value: f64,
}

impl<'a> Tracker<'a> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.objective)(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < self.best_value {
            self.best_value = v;
            self.best_point = x.to_vec();
        }
        v
    }

    fn exhausted(&self) -> bool {
        self.evaluations >= MAX_EVALUATIONS
    }
}

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (xi, (lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = xi.clamp(*lo, *hi);
    }
}

/// Minimizes `objective` over the box `bounds` starting from `init`.
///
/// Convergence requires both a simplex diameter below `1e-9 * (1 + |theta|)`
/// and a value spread below `1e-12`; the search then restarts from a
/// perturbed best point (up to five times) and keeps the overall best.
pub fn minimize(
    objective: &dyn Fn(&[f64]) -> f64,
    init: &[f64],
    bounds: &[(f64, f64)],
) -> Result<OptimizeResult> {
    if init.len() != bounds.len() {
        return Err(SpacingsError::Configuration(format!(
            "init has dimension {} but bounds have {}",
            init.len(),
            bounds.len()
        )));
    }
    for (i, ((lo, hi), x)) in bounds.iter().zip(init).enumerate() {
        if x < lo || x > hi {
            return Err(SpacingsError::Configuration(format!(
                "init[{i}] = {x} outside bounds [{lo}, {hi}]"
            )));
        }
    }
    let f0 = objective(init);
    if !f0.is_finite() {
        return Err(SpacingsError::Configuration(format!("objective is {f0} at init")));
    }

    let mut tracker = Tracker {
        objective,
        evaluations: 0,
        best_point: init.to_vec(),
        best_value: f64::INFINITY,
    };

    let mut start = init.to_vec();
    let mut restarts = 0;
    loop {
        let converged = nelder_mead(&mut tracker, &start, bounds)?;
        if !converged {
            return Err(SpacingsError::NonConvergence {
                evaluations: tracker.evaluations,
                best_point: tracker.best_point.clone(),
                best_value: tracker.best_value,
            });
        }
        if restarts >= MAX_RESTARTS {
            break;
        }
        let before = tracker.best_value;
        restarts += 1;
        start = tracker.best_point.clone();
        for (j, x) in start.iter_mut().enumerate() {
            *x += 5e-3 * (1.0 + x.abs()) * if j % 2 == 0 { 1.0 } else { -1.0 };
        }
        clamp_into(&mut start, bounds);
        let _ = nelder_mead(&mut tracker, &start, bounds)?;
        if before - tracker.best_value <= 1e-12 * (1.0 + before.abs()) {
            break;
        }
        start = tracker.best_point.clone();
    }

    let stationarity = gradient_norm(objective, &tracker.best_point, bounds);
    Ok(OptimizeResult {
        minimizer: tracker.best_point.clone(),
        value: tracker.best_value,
        iterations: tracker.evaluations,
        converged: true,
        stationarity,
        restarts,
    })
}

/// One Nelder-Mead run; returns whether it converged within the budget.
fn nelder_mead(tracker: &mut Tracker, start: &[f64], bounds: &[(f64, f64)]) -> Result<bool> {
    let p = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(p + 1);
    let v0 = tracker.eval(start);
    simplex.push((start.to_vec(), v0));
    for j in 0..p {
        let mut x = start.to_vec();
        let step = 0.1 * (1.0 + x[j].abs());
        x[j] += step;
        clamp_into(&mut x, bounds);
        if (x[j] - start[j]).abs() < 1e-12 {
            x[j] = start[j] - step;
            clamp_into(&mut x, bounds);
        }
        let v = tracker.eval(&x);
        simplex.push((x, v));
    }

    loop {
        if tracker.exhausted() {
            return Ok(false);
        }
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("NaN mapped to inf"));
        let best = &simplex[0];
        let spread = simplex[p].1 - best.1;
        let diameter = simplex
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&best.0)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0_f64, f64::max);
        let scale = 1.0 + best.0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if diameter < 1e-9 * scale && spread.abs() < 1e-12 {
            return Ok(true);
        }

        let centroid: Vec<f64> = (0..p)
            .map(|j| simplex[..p].iter().map(|(x, _)| x[j]).sum::<f64>() / p as f64)
            .collect();
        let worst = simplex[p].clone();

        let mut reflected: Vec<f64> =
            centroid.iter().zip(&worst.0).map(|(c, w)| c + (c - w)).collect();
        clamp_into(&mut reflected, bounds);
        let fr = tracker.eval(&reflected);

        if fr < simplex[0].1 {
            let mut expanded: Vec<f64> =
                centroid.iter().zip(&worst.0).map(|(c, w)| c + 2.0 * (c - w)).collect();
            clamp_into(&mut expanded, bounds);
            let fe = tracker.eval(&expanded);
            simplex[p] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[p - 1].1 {
            simplex[p] = (reflected, fr);
        } else {
            let (better, fb) = if fr < worst.1 { (&reflected, fr) } else { (&worst.0, worst.1) };
            let mut contracted: Vec<f64> =
                centroid.iter().zip(better).map(|(c, w)| c + 0.5 * (w - c)).collect();
            clamp_into(&mut contracted, bounds);
            let fc = tracker.eval(&contracted);
            if fc < fb {
                simplex[p] = (contracted, fc);
            } else {
                // Shrink towards the best vertex.
                let best_x = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = entry
                        .0
                        .iter()
                        .zip(&best_x)
                        .map(|(xi, bi)| bi + 0.5 * (xi - bi))
                        .collect();
                    clamp_into(&mut x, bounds);
                    let v = tracker.eval(&x);
                    *entry = (x, v);
                }
            }
        }
    }
}

fn gradient_norm(objective: &dyn Fn(&[f64]) -> f64, x: &[f64], bounds: &[(f64, f64)]) -> f64 {
    let mut sum = 0.0;
    for j in 0..x.len() {
        let h = 1e-6 * (1.0 + x[j].abs());
        let mut hi = x.to_vec();
        let mut lo = x.to_vec();
        hi[j] = (x[j] + h).min(bounds[j].1);
        lo[j] = (x[j] - h).max(bounds[j].0);
        if hi[j] <= lo[j] {
            continue;
        }
        let g = (objective(&hi) - objective(&lo)) / (hi[j] - lo[j]);
        if g.is_finite() {
            sum += g * g;
        }
    }
    sum.sqrt()
}

/// Minimizes `objective` subject to the affine constraint `A theta = c`.
///
/// The feasible set is reparameterized as `theta = theta_p + N beta` with `N`
/// an orthonormal basis of the null space of `A`, and the search runs over
/// `beta`. Box bounds are enforced by an infinite barrier in theta space.
pub fn minimize_constrained(
    objective: &dyn Fn(&[f64]) -> f64,
    a: &[Vec<f64>],
    c: &[f64],
    init: &[f64],
    bounds: &[(f64, f64)],
) -> Result<OptimizeResult> {
    let r = a.len();
    let p = init.len();
    if r == 0 || a.iter().any(|row| row.len() != p) || c.len() != r {
        return Err(SpacingsError::Constraint(format!(
            "constraint shape mismatch: {r} rows, c has {}, parameter dimension {p}",
            c.len()
        )));
    }
    if r > p {
        return Err(SpacingsError::Constraint(format!("more constraint rows ({r}) than parameters ({p})")));
    }
    let amat = DMatrix::from_fn(r, p, |i, j| a[i][j]);
    let cvec = DVector::from_column_slice(c);
    let svd = amat.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    if rank < r {
        return Err(SpacingsError::Constraint(format!(
            "constraint matrix is rank deficient: rank {rank} < {r} rows"
        )));
    }

    let theta_p = svd
        .solve(&cvec, tol)
        .map_err(|e| SpacingsError::Constraint(format!("cannot solve for a feasible point: {e}")))?;
    let residual = (&amat * &theta_p - &cvec).norm();
    if residual > 1e-8 * (1.0 + cvec.norm()) {
        return Err(SpacingsError::Constraint(format!("constraint infeasible, residual {residual}")));
    }

    let in_box = |theta: &DVector<f64>| {
        theta
            .iter()
            .zip(bounds)
            .all(|(t, (lo, hi))| *t >= *lo - 1e-12 && *t <= *hi + 1e-12)
    };

    if r == p {
        // Fully determined: nothing to optimize.
        if !in_box(&theta_p) {
            return Err(SpacingsError::Constraint("unique feasible point violates bounds".into()));
        }
        let theta: Vec<f64> = theta_p.iter().copied().collect();
        let value = objective(&theta);
        return Ok(OptimizeResult {
            minimizer: theta,
            value,
            iterations: 1,
            converged: true,
            stationarity: 0.0,
            restarts: 0,
        });
    }

    let basis = null_space_basis(&amat, tol);
    debug_assert_eq!(basis.ncols(), p - r);

    let theta_of = |beta: &[f64]| -> DVector<f64> {
        let b = DVector::from_column_slice(beta);
        &theta_p + &basis * b
    };
    let beta_objective = |beta: &[f64]| -> f64 {
        let theta = theta_of(beta);
        if !in_box(&theta) {
            return f64::INFINITY;
        }
        objective(theta.as_slice())
    };

    // Project the caller's init onto the feasible subspace coordinates.
    let init_vec = DVector::from_column_slice(init);
    let beta_init: Vec<f64> = (basis.transpose() * (&init_vec - &theta_p)).iter().copied().collect();
    let free_bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); p - r];
    let mut beta_start = beta_init;
    if !beta_objective(&beta_start).is_finite() {
        // Fall back to the feasible particular point.
        beta_start = vec![0.0; p - r];
    }
    let inner = minimize(&beta_objective, &beta_start, &free_bounds)?;

    let theta = theta_of(&inner.minimizer);
    let feas = (&amat * &theta - &cvec).norm();
    debug_assert!(feas < 1e-10 * (1.0 + cvec.norm()), "null-space drift {feas}");
    Ok(OptimizeResult {
        minimizer: theta.iter().copied().collect(),
        value: inner.value,
        iterations: inner.iterations,
        converged: inner.converged,
        stationarity: inner.stationarity,
        restarts: inner.restarts,
    })
}

/// Orthonormal basis of the null space of `a`, via Gram-Schmidt against the
/// orthonormalized rows of `a`.
fn null_space_basis(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let p = a.ncols();
    let mut ortho: Vec<DVector<f64>> = Vec::new();
    for i in 0..a.nrows() {
        let mut v = a.row(i).transpose();
        for u in &ortho {
            let proj = u.dot(&v);
            v -= u * proj;
        }
        let norm = v.norm();
        if norm > tol {
            ortho.push(v / norm);
        }
    }
    let row_rank = ortho.len();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..p {
        if basis.len() == p - row_rank {
            break;
        }
        let mut v = DVector::zeros(p);
        v[j] = 1.0;
        for u in ortho.iter().chain(basis.iter()) {
            let proj = u.dot(&v);
            v -= u * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
    }
    DMatrix::from_columns(&basis.iter().map(|v| v.clone()).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_bowl_recovers_center() {
        let target = [0.7, -1.3];
        let f = |x: &[f64]| (x[0] - target[0]).powi(2) + (x[1] - target[1]).powi(2);
        let bounds = [(-5.0, 5.0), (-5.0, 5.0)];
        let r = minimize(&f, &[0.0, 0.0], &bounds).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.minimizer[0], target[0], epsilon = 1e-7);
        assert_abs_diff_eq!(r.minimizer[1], target[1], epsilon = 1e-7);
        // Reported value equals re-evaluation at the minimizer.
        assert_eq!(r.value, f(&r.minimizer));
    }

    #[test]
    fn rosenbrock_reaches_global_minimum() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let bounds = [(-5.0, 5.0), (-5.0, 5.0)];
        let r = minimize(&f, &[-1.2, 1.0], &bounds).unwrap();
        assert_abs_diff_eq!(r.minimizer[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(r.minimizer[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn constant_objective_converges_at_init() {
        let f = |_: &[f64]| 4.2;
        let bounds = [(-1.0, 1.0)];
        let r = minimize(&f, &[0.25], &bounds).unwrap();
        assert!(r.converged);
        assert_eq!(r.minimizer[0], 0.25);
    }

    #[test]
    fn init_outside_bounds_is_rejected() {
        let f = |x: &[f64]| x[0] * x[0];
        assert!(minimize(&f, &[2.0], &[(-1.0, 1.0)]).is_err());
        assert!(minimize(&|_: &[f64]| f64::INFINITY, &[0.0], &[(-1.0, 1.0)]).is_err());
    }

    #[test]
    fn bounds_are_respected() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2);
        let r = minimize(&f, &[0.0], &[(-1.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(r.minimizer[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn constrained_projection_onto_diagonal() {
        // min |theta - (2,0)|^2 subject to theta_1 = theta_2: analytic (1,1).
        let f = |x: &[f64]| (x[0] - 2.0).powi(2) + x[1] * x[1];
        let bounds = [(-10.0, 10.0), (-10.0, 10.0)];
        let r = minimize_constrained(&f, &[vec![1.0, -1.0]], &[0.0], &[0.0, 0.0], &bounds).unwrap();
        assert_abs_diff_eq!(r.minimizer[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.minimizer[1], 1.0, epsilon = 1e-6);
        let feas = r.minimizer[0] - r.minimizer[1];
        assert!(feas.abs() < 1e-10);
    }

    #[test]
    fn saturated_constraint_solves_directly() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum();
        let a = vec![vec![2.0, 0.0], vec![0.0, 4.0]];
        let bounds = [(-10.0, 10.0), (-10.0, 10.0)];
        let r = minimize_constrained(&f, &a, &[2.0, 2.0], &[0.0, 0.0], &bounds).unwrap();
        assert_abs_diff_eq!(r.minimizer[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.minimizer[1], 0.5, epsilon = 1e-10);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn rank_deficient_constraint_is_rejected() {
        let f = |x: &[f64]| x[0] + x[1];
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let r = minimize_constrained(&f, &a, &[0.0, 0.0], &[0.0, 0.0], &[(-1.0, 1.0), (-1.0, 1.0)]);
        assert!(matches!(r, Err(SpacingsError::Constraint(_))));
    }

    #[test]
    fn constrained_never_beats_unconstrained() {
        let f = |x: &[f64]| (x[0] + 0.3).powi(2) + (x[1] - 0.8).powi(2) + 0.1 * x[0] * x[1];
        let bounds = [(-4.0, 4.0), (-4.0, 4.0)];
        let free = minimize(&f, &[0.0, 0.0], &bounds).unwrap();
        let tied = minimize_constrained(&f, &[vec![1.0, 1.0]], &[1.0], &[0.5, 0.5], &bounds).unwrap();
        assert!(tied.value >= free.value - 1e-9);
    }
}
