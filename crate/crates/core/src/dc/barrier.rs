//! Log-barrier interior-point method for linear objectives under smooth concave
//! constraints of the form `b + a·x + Σ w log2(1 + g x_k) > 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::SolverError;

const LN2: f64 = std::f64::consts::LN_2;

/// `weight * log2(1 + gain * x[var])`, `weight >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogTerm {
    pub var: usize,
    pub gain: f64,
    pub weight: f64,
}

/// Constraint `offset + Σ coef x[var] + Σ log terms > 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConcaveConstraint {
    pub offset: f64,
    pub linear: Vec<(usize, f64)>,
    pub logs: Vec<LogTerm>,
}

impl ConcaveConstraint {
    pub fn affine(offset: f64, linear: Vec<(usize, f64)>) -> Self {
        Self {
            offset,
            linear,
            logs: Vec::new(),
        }
    }

    /// `x[var] > 0`.
    pub fn positive(var: usize) -> Self {
        Self::affine(0.0, vec![(var, 1.0)])
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.offset;
        for &(k, a) in &self.linear {
            v += a * x[k];
        }
        for t in &self.logs {
            let arg = t.gain * x[t.var];
            if arg <= -1.0 {
                return f64::NEG_INFINITY;
            }
            v += t.weight * arg.ln_1p() / LN2;
        }
        v
    }

    /// Sparse gradient, accumulated into `out` (cleared by the caller).
    fn gradient_into(&self, x: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        out.extend(self.linear.iter().copied());
        for t in &self.logs {
            out.push((t.var, t.weight * t.gain / (LN2 * (1.0 + t.gain * x[t.var]))));
        }
    }
}

/// Minimize `objective · x` subject to every constraint being strictly positive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BarrierProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<ConcaveConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    /// Stop once the duality measure `m / t` drops below this (objective units).
    pub gap_tol: f64,
    /// Factor applied to `t` after each centering step.
    pub mu: f64,
    pub max_newton_per_center: usize,
    pub max_outer: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-10,
            mu: 5.0,
            max_newton_per_center: 80,
            max_outer: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Duality measure `m / t` at the returned point.
    pub gap: f64,
    /// Dual estimates `1 / (t c_k(x))`.
    pub duals: Vec<f64>,
    /// Infinity norm of the Lagrangian gradient, relative to the objective norm.
    pub kkt_residual: f64,
    pub newton_steps: usize,
    /// False if the method stopped early on numerical limits before reaching `gap_tol`.
    pub reached_tolerance: bool,
}

impl BarrierProblem {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    pub fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.value(x) > 0.0)
    }

    fn barrier_value(&self, x: &[f64], t: f64) -> f64 {
        let mut v = t * self.objective_value(x);
        for c in &self.constraints {
            let ck = c.value(x);
            if !(ck > 0.0) {
                return f64::INFINITY;
            }
            v -= ck.ln();
        }
        v
    }

    /// Gradient and Hessian of `t c·x - Σ ln c_k(x)`.
    fn derivatives(&self, x: &[f64], t: f64) -> Result<(DVector<f64>, DMatrix<f64>), SolverError> {
        let n = self.num_vars();
        let mut grad = DVector::from_iterator(n, self.objective.iter().map(|c| t * c));
        let mut hess = DMatrix::zeros(n, n);
        let mut g = Vec::new();
        for c in &self.constraints {
            let ck = c.value(x);
            c.gradient_into(x, &mut g);
            for &(k, a) in &g {
                grad[k] -= a / ck;
                for &(l, b) in &g {
                    hess[(k, l)] += a * b / (ck * ck);
                }
            }
            for term in &c.logs {
                let d = 1.0 + term.gain * x[term.var];
                let second = -term.weight * term.gain * term.gain / (LN2 * d * d);
                hess[(term.var, term.var)] -= second / ck;
            }
        }
        if let Some(k) = grad.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteGradient { coordinate: k });
        }
        Ok((grad, hess))
    }

    /// Lagrangian stationarity residual `‖c - Σ μ_k ∇c_k‖∞ / ‖c‖∞` at dual estimates `mu`.
    pub fn kkt_residual(&self, x: &[f64], mu: &[f64]) -> f64 {
        let mut r = self.objective.clone();
        let mut g = Vec::new();
        for (c, &m) in self.constraints.iter().zip(mu) {
            c.gradient_into(x, &mut g);
            for &(k, a) in &g {
                r[k] -= m * a;
            }
        }
        let scale = self
            .objective
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
    }
}

fn newton_direction(grad: &DVector<f64>, mut hess: DMatrix<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let max_diag = (0..n)
        .map(|k| hess[(k, k)].abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut shift = 0.0;
    for _ in 0..8 {
        if let Some(ch) = hess.clone().cholesky() {
            return Some(-ch.solve(grad));
        }
        let next = if shift == 0.0 {
            1e-14 * max_diag
        } else {
            shift * 100.0
        };
        for k in 0..n {
            hess[(k, k)] += next - shift;
        }
        shift = next;
    }
    None
}

/// Runs the barrier method from a strictly feasible `x0`.
pub fn solve(
    problem: &BarrierProblem,
    x0: &[f64],
    options: &BarrierOptions,
) -> Result<BarrierSolution, SolverError> {
    if !problem.is_strictly_feasible(x0) {
        return Err(SolverError::Numerical(
            "starting point is not strictly feasible".into(),
        ));
    }
    let m = problem.constraints.len() as f64;
    let mut x = DVector::from_column_slice(x0);
    let c_norm: f64 = problem.objective.iter().map(|c| c.abs()).sum();
    let x_norm = x.iter().fold(1e-6f64, |a, v| a.max(v.abs()));
    let mut t = if c_norm > 0.0 {
        m / (c_norm * x_norm)
    } else {
        1.0
    };
    if m == 0.0 {
        return Err(SolverError::Numerical(
            "unconstrained linear problem".into(),
        ));
    }
    let mut steps = 0usize;
    let mut reached = false;

    'outer: for _ in 0..options.max_outer {
        for _ in 0..options.max_newton_per_center {
            let (grad, hess) = problem.derivatives(x.as_slice(), t)?;
            let Some(dx) = newton_direction(&grad, hess) else {
                break 'outer;
            };
            let decrement = -grad.dot(&dx);
            if !(decrement.is_finite()) {
                break 'outer;
            }
            if decrement / 2.0 < 1e-13 {
                break;
            }
            let f0 = problem.barrier_value(x.as_slice(), t);
            // Armijo test with room for rounding in `f0`.
            let slack = 4.0 * f64::EPSILON * f0.abs();
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let trial = &x + alpha * &dx;
                let f1 = problem.barrier_value(trial.as_slice(), t);
                if f1.is_finite() && f1 <= f0 - 0.25 * alpha * decrement + slack {
                    x = trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            steps += 1;
            if !accepted {
                // Newton progress is below floating-point resolution at this t.
                break;
            }
        }
        if m / t < options.gap_tol {
            reached = true;
            break;
        }
        t *= options.mu;
    }

    let xs: Vec<f64> = x.iter().copied().collect();
    let duals: Vec<f64> = problem
        .constraints
        .iter()
        .map(|c| 1.0 / (t * c.value(&xs)))
        .collect();
    let kkt = problem.kkt_residual(&xs, &duals);
    Ok(BarrierSolution {
        objective: problem.objective_value(&xs),
        gap: m / t,
        kkt_residual: kkt,
        duals,
        x: xs,
        newton_steps: steps,
        reached_tolerance: reached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn box_constrained_lp() {
        // min x + 2y s.t. 0 < x < 1, 0 < y < 1, x + y > 0.5
        let p = BarrierProblem {
            objective: vec![1.0, 2.0],
            constraints: vec![
                ConcaveConstraint::positive(0),
                ConcaveConstraint::positive(1),
                ConcaveConstraint::affine(1.0, vec![(0, -1.0)]),
                ConcaveConstraint::affine(1.0, vec![(1, -1.0)]),
                ConcaveConstraint::affine(-0.5, vec![(0, 1.0), (1, 1.0)]),
            ],
        };
        let sol = solve(&p, &[0.5, 0.5], &BarrierOptions::default()).unwrap();
        assert!(sol.reached_tolerance);
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.x[1], 0.0, epsilon = 1e-8);
        assert!(sol.kkt_residual < 1e-6, "{}", sol.kkt_residual);
    }

    #[test]
    fn rate_constraint_is_tight_at_optimum() {
        // min p s.t. log2(1 + 4p) > 1, 0 < p < 1  ->  p = 0.25
        let p = BarrierProblem {
            objective: vec![1.0],
            constraints: vec![
                ConcaveConstraint::positive(0),
                ConcaveConstraint::affine(1.0, vec![(0, -1.0)]),
                ConcaveConstraint {
                    offset: -1.0,
                    linear: vec![],
                    logs: vec![LogTerm {
                        var: 0,
                        gain: 4.0,
                        weight: 1.0,
                    }],
                },
            ],
        };
        let sol = solve(&p, &[0.9], &BarrierOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.x[0], 0.25, epsilon = 1e-9);
    }

    #[test]
    fn rejects_infeasible_start() {
        let p = BarrierProblem {
            objective: vec![1.0],
            constraints: vec![ConcaveConstraint::positive(0)],
        };
        assert!(solve(&p, &[-1.0], &BarrierOptions::default()).is_err());
    }
}
