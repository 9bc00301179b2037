//! Small dense Levenberg–Marquardt solver with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct LmSettings {
    pub max_iterations: usize,
    /// Stop as soon as ½‖r‖² drops below this.
    pub target_cost: f64,
    /// A fit whose cost drops by less than this fraction over `STALL_WINDOW`
    /// iterations is considered settled.
    pub stall_tolerance: f64,
    /// Rescale every accepted iterate to unit norm (for scale-invariant residuals).
    pub unit_sphere: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterations over which the relative cost decrease is compared with `stall_tolerance`.
const STALL_WINDOW: usize = 20;

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64], m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let h = 6e-6 * x[k].abs().max(1.0);
        xp[k] = x[k] + h;
        let plus = f(&xp);
        xp[k] = x[k] - h;
        let minus = f(&xp);
        xp[k] = x[k];
        for i in 0..m {
            j[(i, k)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    j
}

pub(crate) fn minimize<F: Fn(&[f64]) -> Vec<f64>>(f: F, x0: Vec<f64>, settings: &LmSettings) -> LmOutcome {
    let mut x = x0;
    let mut r = f(&x);
    let mut cost = cost_of(&r);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let mut history = std::collections::VecDeque::with_capacity(STALL_WINDOW + 1);

    while iterations < settings.max_iterations {
        if cost < settings.target_cost {
            converged = true;
            break;
        }
        iterations += 1;
        let j = jacobian(&f, &x, r.len());
        let jt = j.transpose();
        let a = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);
        if g.amax() < 1e-300 {
            converged = true;
            break;
        }

        let mut accepted = false;
        for _ in 0..40 {
            let mut m = a.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += lambda * a[(i, i)].max(1e-12);
            }
            let Some(chol) = m.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let mut trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            if settings.unit_sphere {
                let nt = trial.iter().map(|v| v * v).sum::<f64>().sqrt();
                trial.iter_mut().for_each(|v| *v /= nt);
            }
            let r_trial = f(&trial);
            let c_trial = cost_of(&r_trial);
            if c_trial.is_finite() && c_trial < cost {
                let step = delta.norm();
                let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let gain = cost - c_trial;
                x = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if step < 1e-10 * (scale + 1e-10) || gain < 1e-9 * cost {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left within the damping range: stationary point
            converged = true;
            break;
        }
        if converged {
            break;
        }
        history.push_back(cost);
        if history.len() > STALL_WINDOW {
            let old = history.pop_front().unwrap_or(cost);
            if old - cost < settings.stall_tolerance * cost {
                converged = true;
                break;
            }
        }
    }
    if cost < settings.target_cost {
        converged = true;
    }
    LmOutcome {
        x,
        cost,
        iterations,
        converged,
    }
}
