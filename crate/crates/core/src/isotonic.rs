//! Nearly-isotonic regularised problem in the conditional policy.
//!
//! With the state marginals `p` held fixed, the policy `theta` minimises
//!
//! ```text
//! f(theta) = sum_{x,u} [ sum_{k<N} c(x,u,k) theta(x,u,k) p(x,k) + c_N(x) theta(x,u,N) p(x,N) ]
//!          + lambda sum_k sum_{x<X} { mu_k(x) - mu_k(x+1) }_+
//! ```
//!
//! subject to `sum_u theta(x,u,k) = 1` and `theta >= 0`, where `mu_k(x)` is
//! the expected action. The sum constraint is handled by Euclidean projection
//! and nonnegativity by a switching subgradient rule on
//! `f_bar(theta) = max(-theta)`.

use ndarray::{s, Array3, Axis};

use crate::error::{MdpError, Result};
use crate::model::MdpModel;
use crate::policy::{action_weights, ConditionalPolicy, StateDistribution};

/// Directions with a smaller Euclidean norm are treated as zero.
pub const ZERO_DIRECTION_TOL: f64 = 1e-15;

/// A policy iterate whose rows sum to one but whose entries may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePolicy {
    theta: Array3<f64>,
}

impl AffinePolicy {
    pub fn theta(&self) -> &Array3<f64> {
        &self.theta
    }

    /// Clamps negative entries to zero and renormalises each row.
    pub fn repair(&self) -> ConditionalPolicy {
        let mut theta = self.theta.mapv(|v| v.max(0.0));
        let n_actions = theta.dim().2;
        for mut row in theta.lanes_mut(Axis(2)) {
            let total = row.sum();
            if total > 0.0 {
                row /= total;
            } else {
                row.fill(1.0 / n_actions as f64);
            }
        }
        ConditionalPolicy::from_array_unchecked(theta)
    }
}

impl From<ConditionalPolicy> for AffinePolicy {
    fn from(policy: ConditionalPolicy) -> Self {
        Self { theta: policy.into_inner() }
    }
}

/// `{ mu_k(x) - mu_k(x+1) }` for 0-based `x < X - 1`, i.e. the rectifier arguments.
fn monotonicity_gaps(theta: &Array3<f64>) -> Array3<f64> {
    let (t, n_states, n_actions) = theta.dim();
    let weights = action_weights(n_actions);
    let mu = theta.dot_last(&weights);
    Array3::from_shape_fn((t, n_states.saturating_sub(1), 1), |(k, x, _)| mu[[k, x]] - mu[[k, x + 1]])
}

trait DotLast {
    fn dot_last(&self, w: &ndarray::Array1<f64>) -> ndarray::Array2<f64>;
}

impl DotLast for Array3<f64> {
    fn dot_last(&self, w: &ndarray::Array1<f64>) -> ndarray::Array2<f64> {
        let (t, n, _) = self.dim();
        ndarray::Array2::from_shape_fn((t, n), |(k, x)| self.slice(s![k, x, ..]).dot(w))
    }
}

/// Nearly-isotonic penalty `lambda sum_k sum_{x<X} { mu_k(x) - mu_k(x+1) }_+`.
pub fn penalty(theta: &Array3<f64>, lambda: f64) -> f64 {
    lambda * monotonicity_gaps(theta).iter().map(|g| g.max(0.0)).sum::<f64>()
}

/// Value and subgradient of `f_bar(theta) = max(-theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintSubgradient {
    pub value: f64,
    /// 0-based `(k, x, u)` of the most negative entry (first in `(k, x, u)`
    /// lexicographic order on ties); the subgradient is `-1` there.
    pub argmax: (usize, usize, usize),
}

impl ConstraintSubgradient {
    /// Dense form of the subgradient.
    pub fn dense(&self, dim: (usize, usize, usize)) -> Array3<f64> {
        let mut g = Array3::zeros(dim);
        let (k, x, u) = self.argmax;
        g[[k, x, u]] = -1.0;
        g
    }

    /// Euclidean norm of the subgradient, which has a single unit entry.
    pub fn norm(&self) -> f64 {
        1.0
    }
}

pub fn constraint_value_and_subgradient(theta: &Array3<f64>) -> ConstraintSubgradient {
    let mut best = (f64::NEG_INFINITY, (0, 0, 0));
    for (idx, &v) in theta.indexed_iter() {
        if -v > best.0 {
            best = (-v, idx);
        }
    }
    ConstraintSubgradient { value: best.0, argmax: best.1 }
}

/// Projects every `(x, k)` row onto the hyperplane `sum_u theta = 1`.
pub fn project_affine(mut theta: Array3<f64>) -> AffinePolicy {
    let n_actions = theta.dim().2 as f64;
    for mut row in theta.lanes_mut(Axis(2)) {
        let shift = (row.sum() - 1.0) / n_actions;
        row -= shift;
    }
    AffinePolicy { theta }
}

/// The relaxed regularised problem for fixed state marginals.
#[derive(Debug, Clone)]
pub struct RegularizedProblem<'a> {
    model: &'a MdpModel,
    p_fixed: StateDistribution,
    lambda: f64,
    radius: f64,
}

impl<'a> RegularizedProblem<'a> {
    pub fn new(model: &'a MdpModel, p_fixed: StateDistribution, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(MdpError::Config(format!("lambda must be nonnegative, got {lambda}")));
        }
        let expected = (model.horizon() + 1, model.n_states());
        if p_fixed.p().dim() != expected {
            return Err(MdpError::DimensionMismatch(format!(
                "state distribution has shape {:?}, expected {expected:?}",
                p_fixed.p().dim()
            )));
        }
        let radius = (2.0 * model.n_states() as f64 * (model.horizon() + 1) as f64).sqrt();
        Ok(Self { model, p_fixed, lambda, radius })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Diameter bound `sqrt(2 X (N+1))` of the feasible set.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn p_fixed(&self) -> &StateDistribution {
        &self.p_fixed
    }

    /// Gradient of the linear part: `c(x,u,k) p(x,k)` (terminal cost at `k = N`).
    fn linear_gradient(&self) -> Array3<f64> {
        let (nx, nu, horizon) = (self.model.n_states(), self.model.n_actions(), self.model.horizon());
        let p = self.p_fixed.p();
        Array3::from_shape_fn((horizon + 1, nx, nu), |(k, x, u)| self.model.stage_cost0(k, x, u) * p[[k, x]])
    }

    pub fn objective(&self, theta: &Array3<f64>) -> f64 {
        let linear: f64 = (&self.linear_gradient() * theta).sum();
        linear + penalty(theta, self.lambda)
    }

    /// A subgradient of [`objective`](Self::objective). Rectifier indicators
    /// are strict, so a zero argument contributes nothing.
    pub fn subgradient(&self, theta: &Array3<f64>) -> Array3<f64> {
        let mut g = self.linear_gradient();
        if self.lambda == 0.0 {
            return g;
        }
        let gaps = monotonicity_gaps(theta);
        let (t, nx, nu) = theta.dim();
        for k in 0..t {
            for x in 0..nx.saturating_sub(1) {
                if gaps[[k, x, 0]] > 0.0 {
                    for u in 0..nu {
                        let w = self.lambda * (u + 1) as f64;
                        g[[k, x, u]] += w;
                        g[[k, x + 1, u]] -= w;
                    }
                }
            }
        }
        g
    }

    /// Whether the switching rule steps on the objective at counter `n`.
    pub fn takes_objective_branch(constraint: &ConstraintSubgradient, radius: f64, n: u64) -> bool {
        constraint.value < constraint.norm() * radius / (n as f64 + 0.5).sqrt()
    }

    /// One switching projected subgradient step with step length
    /// `R / sqrt(n + 0.5)`. `n` is the caller's global step counter (`n >= 1`).
    pub fn step(&self, theta: &AffinePolicy, n: u64) -> Result<AffinePolicy> {
        let step = self.radius / (n as f64 + 0.5).sqrt();
        let constraint = constraint_value_and_subgradient(&theta.theta);
        let direction = if Self::takes_objective_branch(&constraint, self.radius, n) {
            self.subgradient(&theta.theta)
        } else {
            constraint.dense(theta.theta.dim())
        };
        let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        if !(norm >= ZERO_DIRECTION_TOL) {
            return Err(MdpError::ZeroDirection(norm));
        }
        let moved = &theta.theta - &(direction * (step / norm));
        Ok(project_affine(moved))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::machine_replacement_model;
    use crate::policy::propagate_distribution;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array3, Array4};

    fn arr(t: usize, n: usize, u: usize, v: &[f64]) -> Array3<f64> {
        Array3::from_shape_vec((t, n, u), v.to_vec()).unwrap()
    }

    #[test]
    fn penalty_examples() {
        let mono = arr(1, 2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(penalty(&mono, 3.0), 0.0);
        let anti = arr(1, 2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(penalty(&anti, 1.0), 1.0);
        assert_eq!(penalty(&anti, 0.0), 0.0);
        assert_eq!(penalty(&anti, 2.0), 2.0 * penalty(&anti, 1.0));
    }

    #[test]
    fn constraint_examples() {
        let t = arr(1, 1, 3, &[0.0, 0.5, 0.5]);
        assert_eq!(constraint_value_and_subgradient(&t).value, 0.0);
        let t = arr(1, 2, 2, &[1.0, 0.0, 1.2, -0.2]);
        let c = constraint_value_and_subgradient(&t);
        assert_abs_diff_eq!(c.value, 0.2, epsilon = 1e-15);
        assert_eq!(c.argmax, (0, 1, 1));
        assert_eq!(c.dense((1, 2, 2))[[0, 1, 1]], -1.0);
        assert_eq!(c.dense((1, 2, 2)).sum(), -1.0);
        let t = arr(2, 1, 2, &[1.1, -0.1, -0.1, 1.1]);
        assert_eq!(constraint_value_and_subgradient(&t).argmax, (0, 0, 1));
    }

    #[test]
    fn projection_examples() {
        let p = project_affine(arr(1, 1, 3, &[0.2, 0.3, 0.5]));
        assert_eq!(p.theta(), &arr(1, 1, 3, &[0.2, 0.3, 0.5]));
        let p = project_affine(Array3::zeros((1, 1, 3)));
        for v in p.theta() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        // shift (3 - 1) / 2 = 1 from each entry
        assert_eq!(project_affine(arr(1, 1, 2, &[2.0, 1.0])).theta(), &arr(1, 1, 2, &[1.0, 0.0]));
        let twice = project_affine(project_affine(arr(1, 2, 2, &[3.0, -1.0, 0.1, 0.2])).theta().clone());
        assert_eq!(twice.theta(), project_affine(arr(1, 2, 2, &[3.0, -1.0, 0.1, 0.2])).theta());
    }

    #[test]
    fn repair_clamps_and_renormalises() {
        let p = project_affine(arr(1, 1, 3, &[1.5, -0.25, -0.25]));
        assert_eq!(p.repair().theta(), &arr(1, 1, 3, &[1.0, 0.0, 0.0]));
    }

    fn zero_cost_model(nx: usize, nu: usize, horizon: usize) -> MdpModel {
        let p = Array4::from_elem((horizon, nu, nx, nx), 1.0 / nx as f64);
        MdpModel::new(1, p, Array3::zeros((horizon, nx, nu)), ndarray::Array1::zeros(nx), vec![]).unwrap()
    }

    #[test]
    fn objective_reductions() {
        let m = zero_cost_model(3, 2, 2);
        let theta = ConditionalPolicy::uniform(3, 2, 2);
        let p = propagate_distribution(&m, &theta);
        let prob = RegularizedProblem::new(&m, p, 5.0).unwrap();
        assert_eq!(prob.objective(theta.theta()), 0.0);
        assert_abs_diff_eq!(prob.radius(), (2.0f64 * 3.0 * 3.0).sqrt(), epsilon = 1e-15);

        let m = machine_replacement_model(0.3, 1.0, 0.5, 2).unwrap();
        let theta = ConditionalPolicy::uniform(2, 2, 2);
        let p = propagate_distribution(&m, &theta);
        let prob = RegularizedProblem::new(&m, p.clone(), 0.0).unwrap();
        // term-by-term
        let mut expected = 0.0;
        for k in 0..=2 {
            for x in 1..=2 {
                for u in 1..=2 {
                    expected += m.cost(x, u, k) * 0.5 * p.p()[[k, x - 1]];
                }
            }
        }
        assert_abs_diff_eq!(prob.objective(theta.theta()), expected, epsilon = 1e-14);
        assert!(RegularizedProblem::new(&m, p, -1.0).is_err());
    }

    #[test]
    fn subgradient_without_penalty_is_linear_gradient() {
        let m = machine_replacement_model(0.3, 1.0, 0.5, 2).unwrap();
        let theta = ConditionalPolicy::uniform(2, 2, 2);
        let p = propagate_distribution(&m, &theta);
        let prob = RegularizedProblem::new(&m, p.clone(), 0.0).unwrap();
        let anti = arr(3, 2, 2, &[0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let g = prob.subgradient(&anti);
        assert_eq!(g[[1, 0, 0]], m.cost(1, 1, 1) * p.p()[[1, 0]]);

        let prob = RegularizedProblem::new(&m, p, 2.0).unwrap();
        let strictly = arr(3, 2, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(prob.subgradient(&strictly), prob.linear_gradient());
        // violated pair: +lambda u' on x'=1, -lambda u' on x'=2
        let g = &prob.subgradient(&anti) - &prob.linear_gradient();
        assert_eq!(g.slice(s![0, .., ..]), array![[2.0, 4.0], [-2.0, -4.0]]);
    }

    #[test]
    fn step_contracts() {
        let m = zero_cost_model(3, 2, 2);
        let theta = ConditionalPolicy::uniform(3, 2, 2);
        let p = propagate_distribution(&m, &theta);
        let prob = RegularizedProblem::new(&m, p, 0.0).unwrap();
        assert!(matches!(prob.step(&theta.clone().into(), 1), Err(MdpError::ZeroDirection(_))));

        // branch predicate: f_bar = 0.5 against R / sqrt(n + 0.5), R = sqrt(18)
        let c = ConstraintSubgradient { value: 0.5, argmax: (0, 0, 0) };
        let r = prob.radius();
        assert!(RegularizedProblem::takes_objective_branch(&c, r, 1));
        // threshold crosses below 0.5 once n + 0.5 > 18 / 0.25 = 72
        assert!(RegularizedProblem::takes_objective_branch(&c, r, 71));
        assert!(!RegularizedProblem::takes_objective_branch(&c, r, 72));
    }

    #[test]
    fn normalized_step_length() {
        let m = machine_replacement_model(0.3, 1.0, 0.5, 3).unwrap();
        let theta = ConditionalPolicy::uniform(2, 2, 3);
        let p = propagate_distribution(&m, &theta);
        let prob = RegularizedProblem::new(&m, p, 0.7).unwrap();
        for n in [1u64, 4, 50] {
            let it: AffinePolicy = theta.clone().into();
            let d = prob.subgradient(it.theta());
            let step = prob.radius() / (n as f64 + 0.5).sqrt();
            let pre = it.theta() - &(&d * (step / d.iter().map(|v| v * v).sum::<f64>().sqrt()));
            let moved = (&pre - it.theta()).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert_abs_diff_eq!(moved, step, epsilon = 1e-12);
            let next = prob.step(&it, n).unwrap();
            assert_eq!(next.theta(), project_affine(pre).theta());
            for row in next.theta().lanes(Axis(2)) {
                assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn constraint_branch_raises_most_negative_entry() {
        let m = machine_replacement_model(0.3, 1.0, 0.5, 1).unwrap();
        let p = propagate_distribution(&m, &ConditionalPolicy::uniform(2, 2, 1));
        let prob = RegularizedProblem::new(&m, p, 0.0).unwrap();
        // R = sqrt(8); at n = 1 the threshold is sqrt(8 / 1.5) ~ 2.31
        let theta = project_affine(arr(2, 2, 2, &[4.0, -3.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]));
        let next = prob.step(&theta, 1).unwrap();
        let step = prob.radius() / 1.5f64.sqrt();
        assert_abs_diff_eq!(next.theta()[[0, 0, 1]], -3.0 + step / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(next.theta()[[0, 0, 0]], 4.0 - step / 2.0, epsilon = 1e-12);
        assert_eq!(next.theta()[[1, 1, 1]], 0.5);
    }
}
