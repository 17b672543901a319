//! Bounded local minimization by projected BFGS.
//!
//! Used for both the marginal-likelihood fit (analytic gradients) and the
//! acquisition refinement (central-difference gradients).

/// Stopping rules for [`minimize_bounded`].
#[derive(Debug, Clone, Copy)]
pub struct LocalSearchOptions {
    pub max_iters: usize,
    /// Stop once the projected gradient's largest component falls below this.
    pub grad_tol: f64,
    /// Stop once an accepted step moves no coordinate by more than this.
    pub step_tol: f64,
}

impl Default for LocalSearchOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            grad_tol: 1e-6,
            step_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalMinimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*l, *u);
    }
}

/// Coordinates pinned at a bound with the gradient pushing outward.
fn active_set(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((v, gi), (l, u))| (*v <= *l && *gi > 0.0) || (*v >= *u && *gi < 0.0))
        .collect()
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// `f(x, grad)` returns the objective and, when `grad` is given, writes the
/// gradient into it. Trial points of the line search are scored without a
/// gradient. Non-finite values are treated as infeasible and trigger
/// backtracking.
pub fn minimize_bounded<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &LocalSearchOptions,
) -> LocalMinimum
where
    F: FnMut(&[f64], Option<&mut [f64]>) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, Some(&mut g));
    let mut evaluations = 1;
    if n == 0 || !fx.is_finite() {
        return LocalMinimum {
            x,
            value: fx,
            iterations: 0,
            evaluations,
        };
    }

    // Inverse Hessian approximation, row-major.
    let mut h = identity(n);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut iterations = 0;
    // Whether `h` has not yet absorbed any curvature information.
    let mut fresh = true;
    let mut prev_active = vec![false; n];

    while iterations < opts.max_iters {
        iterations += 1;
        let active = active_set(&x, &g, lower, upper);
        // Curvature gathered with a different set of free coordinates does
        // not describe the reduced problem.
        if active != prev_active {
            fresh = true;
            prev_active.clone_from(&active);
        }
        let pg = g
            .iter()
            .zip(&active)
            .filter(|(_, a)| !**a)
            .fold(0.0_f64, |m, (gi, _)| m.max(gi.abs()));
        if pg < opts.grad_tol {
            break;
        }

        for i in 0..n {
            dir[i] = if active[i] {
                0.0
            } else {
                -(0..n)
                    .filter(|j| !active[*j])
                    .map(|j| h[i * n + j] * g[j])
                    .sum::<f64>()
            };
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if !(slope < 0.0) || fresh {
            // Steepest descent with the first trial step capped at unit
            // length in the largest coordinate.
            h = identity(n);
            fresh = true;
            let scale = 1.0 / pg.max(1.0);
            for i in 0..n {
                dir[i] = if active[i] { 0.0 } else { -g[i] * scale };
            }
            slope = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        }
        if !(slope < 0.0) {
            break;
        }

        // Backtracking on the projected path.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            project(&mut x_new, lower, upper);
            let decrease: f64 = g.iter().zip(x_new.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let trial = f(&x_new, None);
            evaluations += 1;
            if trial.is_finite() && trial <= fx + ARMIJO * decrease.min(0.0) && decrease < 0.0 {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let f_new = f(&x_new, Some(&mut g_new));
        evaluations += 1;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let max_step = s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if max_step < opts.step_tol {
            break;
        }
        if fresh {
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            let yy: f64 = y.iter().map(|v| v * v).sum();
            if sy > 0.0 && yy > 0.0 {
                h = identity(n);
                h.iter_mut().for_each(|v| *v *= sy / yy);
            }
            fresh = false;
        }
        bfgs_update(&mut h, &s, &y);
    }

    LocalMinimum {
        x,
        value: fx,
        iterations,
        evaluations,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64]) {
    let n = s.len();
    let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
    let yy: f64 = y.iter().map(|v| v * v).sum();
    if !(sy > 1e-12 * yy.sqrt() * s.iter().map(|v| v * v).sum::<f64>().sqrt()) {
        return;
    }
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
        .collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    // H ← H − ρ(Hy sᵀ + s yᵀH) + (ρ² yᵀHy + ρ) s sᵀ
    let coef = rho * rho * yhy + rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + coef * s[i] * s[j];
        }
    }
}

/// Central-difference gradient of `f` at `x`, written into `grad`.
pub fn central_gradient<F>(f: &mut F, x: &[f64], grad: &mut [f64], h: f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let step = h * (1.0 + x[i].abs());
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let down = f(&probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * step);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_interior_minimum() {
        let res = minimize_bounded(
            |x, g: Option<&mut [f64]>| {
                if let Some(g) = g {
                    g[0] = 2.0 * (x[0] - 1.0);
                    g[1] = 20.0 * (x[1] + 2.0);
                }
                (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2)
            },
            &[4.0, 4.0],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            &LocalSearchOptions::default(),
        );
        assert!((res.x[0] - 1.0).abs() < 1e-6, "{:?}", res);
        assert!((res.x[1] + 2.0).abs() < 1e-6, "{:?}", res);
    }

    #[test]
    fn minimum_outside_box_lands_on_bound() {
        let res = minimize_bounded(
            |x, g: Option<&mut [f64]>| {
                if let Some(g) = g {
                    g[0] = 2.0 * (x[0] - 9.0);
                    g[1] = 2.0 * x[1];
                }
                (x[0] - 9.0).powi(2) + x[1] * x[1]
            },
            &[0.0, 3.0],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            &LocalSearchOptions::default(),
        );
        assert_eq!(res.x[0], 5.0);
        assert!(res.x[1].abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_converges() {
        let res = minimize_bounded(
            |x, g: Option<&mut [f64]>| {
                let (a, b) = (x[0], x[1]);
                if let Some(g) = g {
                    g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                    g[1] = 200.0 * (b - a * a);
                }
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &[-1.2, 1.0],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            &LocalSearchOptions {
                max_iters: 500,
                grad_tol: 1e-8,
                step_tol: 1e-12,
            },
        );
        assert!((res.x[0] - 1.0).abs() < 1e-4, "{:?}", res);
    }

    #[test]
    fn central_gradient_of_cubic() {
        let mut f = |x: &[f64]| x[0].powi(3) + 2.0 * x[1];
        let mut g = [0.0; 2];
        central_gradient(&mut f, &[2.0, -1.0], &mut g, 1e-6);
        assert!((g[0] - 12.0).abs() < 1e-6);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }
}
