//! Bounded nonlinear least squares for small parameter counts: coordinate
//! golden-section refinement followed by a projected, damped Gauss-Newton
//! polish with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Full coordinate sweeps of golden-section search before Gauss-Newton.
    pub golden_sweeps: usize,
    /// Golden-section bracket tolerance as a fraction of each parameter's range.
    pub golden_tolerance: f64,
    pub max_iterations: usize,
    /// Relative cost decrease below which Gauss-Newton stops.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            golden_sweeps: 2,
            golden_tolerance: 1e-3,
            max_iterations: 200,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Columns of the final Jacobian that are identically zero: parameters
    /// no residual depends on.
    pub inert: Vec<bool>,
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn golden_section(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = (a + b) / 2.0;
    // keep the edges reachable: compare against the bounds themselves
    [lo, mid, hi]
        .into_iter()
        .map(|x| (x, f(x)))
        .fold((mid, f64::INFINITY), |best, cand| {
            if cand.1 < best.1 {
                cand
            } else {
                best
            }
        })
        .0
}

fn jacobian(
    residuals: &dyn Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    r0: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(r0.len(), x.len());
    for i in 0..x.len() {
        let h = 1e-6 * (upper[i] - lower[i]);
        let (xp, xm) = ((x[i] + h).min(upper[i]), (x[i] - h).max(lower[i]));
        let mut probe = x.to_vec();
        probe[i] = xp;
        let rp = residuals(&probe);
        probe[i] = xm;
        let rm = if xm == x[i] {
            r0.to_vec()
        } else {
            residuals(&probe)
        };
        let span = xp - xm;
        for k in 0..r0.len() {
            jac[(k, i)] = (rp[k] - rm[k]) / span;
        }
    }
    jac
}

/// Minimizes `Σ r_k(x)²` over the box `lower <= x <= upper` starting at `x0`.
pub fn fit_box_least_squares(
    residuals: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &FitOptions,
) -> FitOutcome {
    let n = x0.len();
    let clamp = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);

    for _ in 0..options.golden_sweeps {
        for i in 0..n {
            if upper[i] <= lower[i] {
                continue;
            }
            let tol = options.golden_tolerance * (upper[i] - lower[i]);
            let mut probe = x.clone();
            x[i] = golden_section(
                |t| {
                    probe[i] = t;
                    cost_of(&residuals(&probe))
                },
                lower[i],
                upper[i],
                tol,
            );
        }
    }

    let mut r = residuals(&x);
    let mut cost = cost_of(&r);
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let mut jac = jacobian(residuals, &x, &r, lower, upper);
    while iterations < options.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &rv;
        // parameters pinned at a bound with the gradient pushing outward stay fixed
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && grad[i] > 0.0) || (x[i] >= upper[i] && grad[i] < 0.0)))
            .collect();
        let projected_grad = (0..n)
            .filter(|&i| free[i])
            .map(|i| grad[i].abs())
            .fold(0.0, f64::max);
        if projected_grad <= 1e-15 * (1.0 + cost) {
            converged = true;
            break;
        }
        let diag_scale = (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let mut improved = false;
        while mu < 1e16 {
            let mut lhs = jtj.clone();
            let mut rhs = -grad.clone();
            for i in 0..n {
                if free[i] {
                    lhs[(i, i)] += mu * jtj[(i, i)].max(1e-12 * diag_scale);
                } else {
                    for k in 0..n {
                        lhs[(i, k)] = 0.0;
                        lhs[(k, i)] = 0.0;
                    }
                    lhs[(i, i)] = 1.0;
                    rhs[i] = 0.0;
                }
            }
            let Some(step) = lhs.lu().solve(&rhs) else {
                mu *= 10.0;
                continue;
            };
            let mut candidate: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut candidate);
            let rc = residuals(&candidate);
            let cc = cost_of(&rc);
            if cc < cost {
                let relative = (cost - cc) / cost;
                x = candidate;
                r = rc;
                cost = cc;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                if relative < options.tolerance {
                    converged = true;
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            // no descent left at any damping: a stationary point of the box problem
            converged = true;
            break;
        }
        if converged {
            break;
        }
        jac = jacobian(residuals, &x, &r, lower, upper);
    }
    let jac = jacobian(residuals, &x, &r, lower, upper);
    let inert = (0..n)
        .map(|i| jac.column(i).iter().all(|&v| v == 0.0))
        .collect();
    FitOutcome {
        x,
        residuals: r,
        cost,
        iterations,
        converged,
        inert,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_problem_solved_exactly() {
        let res = |x: &[f64]| vec![x[0] - 1.5, 2.0 * x[1] + 1.0, x[0] + x[1] - 1.0];
        let out = fit_box_least_squares(
            &res,
            &[0.0, 0.0],
            &[-10.0, -10.0],
            &[10.0, 10.0],
            &FitOptions::default(),
        );
        assert!(out.converged);
        // the system is consistent: x = (1.5, -0.5) zeroes every residual
        assert!(
            (out.x[0] - 1.5).abs() < 1e-9 && (out.x[1] + 0.5).abs() < 1e-9,
            "{:?}",
            out.x
        );
        assert!(out.cost < 1e-18);
    }

    #[test]
    fn bound_is_active_when_optimum_lies_outside() {
        let res = |x: &[f64]| vec![x[0] + 3.0];
        let out = fit_box_least_squares(&res, &[0.5], &[-1.0], &[1.0], &FitOptions::default());
        assert_eq!(out.x, vec![-1.0]);
        assert!(out.converged);
    }

    #[test]
    fn nonlinear_exponential_fit() {
        let data: Vec<(f64, f64)> = (0..10)
            .map(|i| (i as f64, 2.0 * (-0.3 * i as f64).exp()))
            .collect();
        let res = |p: &[f64]| {
            data.iter()
                .map(|&(t, y)| p[0] * (-p[1] * t).exp() - y)
                .collect::<Vec<_>>()
        };
        let out = fit_box_least_squares(
            &res,
            &[1.0, 1.0],
            &[0.0, 0.0],
            &[5.0, 2.0],
            &FitOptions::default(),
        );
        assert!(
            (out.x[0] - 2.0).abs() < 1e-8 && (out.x[1] - 0.3).abs() < 1e-8,
            "{:?}",
            out.x
        );
    }

    #[test]
    fn inert_parameters_are_flagged() {
        let res = |x: &[f64]| vec![x[0] - 0.25];
        let out = fit_box_least_squares(
            &res,
            &[0.0, 0.0],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            &FitOptions::default(),
        );
        assert_eq!(out.inert, vec![false, true]);
    }
}
