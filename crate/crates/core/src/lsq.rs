//! Box-constrained Levenberg-Marquardt with a central-difference Jacobian.
//!
//! Parameters sitting on a bound whose gradient points outward are held fixed
//! for that step; every trial point is projected back into the box.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Stop once an accepted step improves the cost by less than this fraction.
    pub rel_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iters: 500, rel_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    /// Mean squared residual at `x`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A least-squares problem over a box.
pub struct BoxProblem<'a, F> {
    pub residuals: F,
    pub n_residuals: usize,
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    /// Parameters excluded from optimisation keep their starting value.
    pub free: &'a [bool],
}

const COST_FLOOR: f64 = 1e-30;
const LAMBDA_MAX: f64 = 1e14;
const LAMBDA_MIN: f64 = 1e-15;

impl<F: FnMut(&[f64], &mut [f64])> BoxProblem<'_, F> {
    fn cost(&mut self, x: &[f64], r: &mut [f64]) -> f64 {
        (self.residuals)(x, r);
        let s: f64 = r.iter().map(|v| v * v).sum();
        if s.is_finite() {
            s / self.n_residuals as f64
        } else {
            f64::INFINITY
        }
    }

    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn minimize(&mut self, x0: &[f64], opts: &LmOptions) -> LmOutcome {
        let m = self.n_residuals;
        let p = x0.len();
        let mut x = x0.to_vec();
        self.project(&mut x);
        let mut r = vec![0.0; m];
        let mut cost = self.cost(&x, &mut r);
        let free_idx: Vec<usize> = (0..p).filter(|&i| self.free[i]).collect();
        if free_idx.is_empty() || m == 0 || !cost.is_finite() {
            return LmOutcome { x, cost, iterations: 0, converged: cost.is_finite() };
        }

        let mut jac = DMatrix::<f64>::zeros(m, free_idx.len());
        let mut r_probe = vec![0.0; m];
        let mut r_trial = vec![0.0; m];
        let mut x_trial = x.clone();
        let mut lambda = 1e-3;
        let mut nu = 2.0;
        let mut diag = vec![0.0_f64; free_idx.len()];
        let mut iterations = 0;
        let mut converged = false;

        while iterations < opts.max_iters {
            iterations += 1;
            if cost <= COST_FLOOR {
                converged = true;
                break;
            }
            // central differences, one-sided against a bound
            for (col, &i) in free_idx.iter().enumerate() {
                let h = 1e-6 * x[i].abs().max(1e-2);
                let saved = x[i];
                let hi = (saved + h).min(self.upper[i]);
                let lo = (saved - h).max(self.lower[i]);
                x[i] = hi;
                (self.residuals)(&x, &mut r_probe);
                if lo < saved {
                    x[i] = lo;
                    (self.residuals)(&x, &mut r_trial);
                } else {
                    r_trial.copy_from_slice(&r);
                }
                x[i] = saved;
                let width = hi - lo;
                for row in 0..m {
                    jac[(row, col)] = (r_probe[row] - r_trial[row]) / width;
                }
            }
            let rv = DVector::from_column_slice(&r);
            let grad = jac.tr_mul(&rv);

            // drop parameters pinned against a bound
            let active: Vec<usize> = (0..free_idx.len())
                .filter(|&k| {
                    let i = free_idx[k];
                    let at_lo = x[i] <= self.lower[i] && grad[k] > 0.0;
                    let at_hi = x[i] >= self.upper[i] && grad[k] < 0.0;
                    !(at_lo || at_hi)
                })
                .collect();
            if active.is_empty() {
                converged = true;
                break;
            }
            let k = active.len();
            for (c, d) in diag.iter_mut().enumerate() {
                *d = d.max(jac.column(c).norm_squared());
            }
            let scale: Vec<f64> = active.iter().map(|&c| diag[c].max(1e-12)).collect();

            let mut accepted = None;
            while lambda <= LAMBDA_MAX {
                // min |J s + r|² + λ Σ d_i s_i², solved by QR of the stacked system
                let aug = DMatrix::from_fn(m + k, k, |row, c| {
                    if row < m {
                        jac[(row, active[c])]
                    } else if row - m == c {
                        (lambda * scale[c]).sqrt()
                    } else {
                        0.0
                    }
                });
                let rhs = DVector::from_fn(m + k, |row, _| if row < m { -r[row] } else { 0.0 });
                let qr = aug.qr();
                let qtb = qr.q().tr_mul(&rhs);
                let step = match qr.r().solve_upper_triangular(&qtb) {
                    Some(s) if s.iter().all(|v| v.is_finite()) => s,
                    _ => {
                        lambda *= nu;
                        nu *= 2.0;
                        continue;
                    }
                };
                x_trial.copy_from_slice(&x);
                for (d, &kk) in active.iter().enumerate() {
                    x_trial[free_idx[kk]] += step[d];
                }
                self.project(&mut x_trial);
                let trial = self.cost(&x_trial, &mut r_trial);
                if trial < cost {
                    // gain ratio against the linear model of the projected step
                    let taken = DVector::from_fn(k, |d, _| x_trial[free_idx[active[d]]] - x[free_idx[active[d]]]);
                    let mut lin = rv.clone();
                    for (d, &c) in active.iter().enumerate() {
                        lin.axpy(taken[d], &jac.column(c), 1.0);
                    }
                    let predicted = (rv.norm_squared() - lin.norm_squared()) / m as f64;
                    let rho = if predicted > 0.0 { (cost - trial) / predicted } else { 1.0 };
                    accepted = Some(trial);
                    lambda = (lambda * (1.0 / 3.0_f64).max(1.0 - (2.0 * rho - 1.0).powi(3))).max(LAMBDA_MIN);
                    nu = 2.0;
                    break;
                }
                lambda *= nu;
                nu *= 2.0;
            }
            match accepted {
                Some(trial) => {
                    let improvement = (cost - trial) / cost;
                    x.copy_from_slice(&x_trial);
                    r.copy_from_slice(&r_trial);
                    cost = trial;
                    if improvement < opts.rel_tol {
                        converged = true;
                        break;
                    }
                }
                None => {
                    // no descent direction left at any damping level
                    converged = true;
                    break;
                }
            }
        }
        LmOutcome { x, cost, iterations, converged }
    }
}
