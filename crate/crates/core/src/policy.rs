//! Policy representations and the transforms between them.
//!
//! All three arrays are indexed `[k][x][u]` / `[k][x]` with `k = 0..=N` and
//! 0-based state and action offsets.

use ndarray::{s, Array1, Array2, Array3, ArrayView3, Axis};

use crate::error::{MdpError, Result};
use crate::model::MdpModel;

/// Row-sum tolerance for conditional policies.
pub const POLICY_ROW_TOL: f64 = 1e-9;
/// Most negative entry tolerated in a conditional policy.
pub const POLICY_NEG_TOL: f64 = 1e-12;
/// States with marginal mass at or below this are treated as unreachable.
pub const MASS_EPS: f64 = 1e-12;

/// `theta(x, u, k) = Pr{u_k = u | x_k = x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPolicy {
    theta: Array3<f64>,
}

impl ConditionalPolicy {
    pub fn new(theta: Array3<f64>) -> Result<Self> {
        for ((k, x), row) in indexed_rows(theta.view()) {
            if let Some(&v) = row.iter().find(|&&v| !(v >= -POLICY_NEG_TOL)) {
                return Err(MdpError::InvalidPolicy(format!(
                    "theta[{k}][{x}] has entry {v} below zero"
                )));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > POLICY_ROW_TOL {
                return Err(MdpError::InvalidPolicy(format!(
                    "theta[{k}][{x}] sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { theta })
    }

    /// Uniform action distribution at every `(x, k)`.
    pub fn uniform(n_states: usize, n_actions: usize, horizon: usize) -> Self {
        let theta = Array3::from_elem((horizon + 1, n_states, n_actions), 1.0 / n_actions as f64);
        Self { theta }
    }

    /// Deterministic policy from a `[k][x]` table of 1-based actions.
    pub fn deterministic(actions: &Array2<usize>, n_actions: usize) -> Result<Self> {
        let (t, n_states) = actions.dim();
        let mut theta = Array3::zeros((t, n_states, n_actions));
        for ((k, x), &u) in actions.indexed_iter() {
            if u == 0 || u > n_actions {
                return Err(MdpError::IndexOutOfRange(format!(
                    "action {u} at (k={k}, x={}) not in 1..={n_actions}",
                    x + 1
                )));
            }
            theta[[k, x, u - 1]] = 1.0;
        }
        Ok(Self { theta })
    }

    pub(crate) fn from_array_unchecked(theta: Array3<f64>) -> Self {
        Self { theta }
    }

    pub fn theta(&self) -> &Array3<f64> {
        &self.theta
    }

    pub fn into_inner(self) -> Array3<f64> {
        self.theta
    }

    /// Number of time slices, `N + 1`.
    pub fn n_times(&self) -> usize {
        self.theta.dim().0
    }

    pub fn n_states(&self) -> usize {
        self.theta.dim().1
    }

    pub fn n_actions(&self) -> usize {
        self.theta.dim().2
    }

    /// Mean action per state at time `k`.
    pub fn expectation(&self, k: usize) -> Array1<f64> {
        policy_expectation(self.theta.view(), k)
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        is_monotone(self.theta.view(), tol)
    }
}

/// `p(x, k) = Pr{x_k = x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    p: Array2<f64>,
}

impl StateDistribution {
    /// Wraps marginals without checking the per-time mass; marginals of
    /// mid-iteration occupation measures need not sum to one.
    pub fn from_marginals(p: Array2<f64>) -> Self {
        Self { p }
    }

    pub fn p(&self) -> &Array2<f64> {
        &self.p
    }

    /// Largest `|sum_x p(x, k) - 1|` over `k`.
    pub fn max_mass_defect(&self) -> f64 {
        self.p
            .sum_axis(Axis(1))
            .iter()
            .map(|m| (m - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `pi(x, u, k) = Pr{x_k = x, u_k = u}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    pi: Array3<f64>,
}

impl OccupationMeasure {
    pub fn new(pi: Array3<f64>) -> Self {
        Self { pi }
    }

    pub fn pi(&self) -> &Array3<f64> {
        &self.pi
    }

    pub fn into_inner(self) -> Array3<f64> {
        self.pi
    }

    /// Total mass at each time.
    pub fn mass_per_time(&self) -> Array1<f64> {
        self.pi.sum_axis(Axis(2)).sum_axis(Axis(1))
    }
}

fn indexed_rows(
    theta: ArrayView3<'_, f64>,
) -> impl Iterator<Item = ((usize, usize), ndarray::ArrayView1<'_, f64>)> {
    let (t, n, _) = theta.dim();
    (0..t).flat_map(move |k| (0..n).map(move |x| ((k, x), theta.slice_move(s![k, x, ..]))))
}

/// Expected action `sum_u u * theta(x, u, k)` for every state, with actions
/// weighted by their 1-based labels.
pub fn policy_expectation(theta: ArrayView3<'_, f64>, k: usize) -> Array1<f64> {
    let weights = action_weights(theta.dim().2);
    theta.slice(s![k, .., ..]).dot(&weights)
}

pub(crate) fn action_weights(n_actions: usize) -> Array1<f64> {
    Array1::from_iter((1..=n_actions).map(|u| u as f64))
}

/// True iff the expected action is weakly increasing in the state at every time.
pub fn is_monotone(theta: ArrayView3<'_, f64>, tol: f64) -> bool {
    (0..theta.dim().0).all(|k| {
        let mu = policy_expectation(theta, k);
        mu.windows(2).into_iter().all(|w| w[1] >= w[0] - tol)
    })
}

/// Splits an occupation measure into a conditional policy and its state
/// marginals.
///
/// Negative entries are clamped to zero first. States whose mass is at most
/// [`MASS_EPS`] take their row from `previous` when given, and the uniform
/// distribution otherwise.
pub fn occupation_to_conditional(
    pi: &OccupationMeasure,
    previous: Option<&ConditionalPolicy>,
) -> (ConditionalPolicy, StateDistribution) {
    let clamped = pi.pi.mapv(|v| v.max(0.0));
    let (t, n_states, n_actions) = clamped.dim();
    let p = clamped.sum_axis(Axis(2));
    let mut theta = Array3::zeros((t, n_states, n_actions));
    for k in 0..t {
        for x in 0..n_states {
            let mass = p[[k, x]];
            let mut row = theta.slice_mut(s![k, x, ..]);
            if mass > MASS_EPS {
                row.assign(&clamped.slice(s![k, x, ..]));
                row /= mass;
            } else if let Some(prev) = previous.filter(|prev| prev.theta.dim() == clamped.dim()) {
                row.assign(&prev.theta.slice(s![k, x, ..]));
            } else {
                row.fill(1.0 / n_actions as f64);
            }
        }
    }
    (
        ConditionalPolicy::from_array_unchecked(theta),
        StateDistribution::from_marginals(p),
    )
}

/// `pi(x, u, k) = theta(x, u, k) * p(x, k)`.
pub fn conditional_to_occupation(theta: &ConditionalPolicy, p: &StateDistribution) -> OccupationMeasure {
    let marg = p.p.view().insert_axis(Axis(2));
    OccupationMeasure::new(&theta.theta * &marg)
}

/// Forward state distribution from the initial state under `theta`.
pub fn propagate_distribution(model: &MdpModel, theta: &ConditionalPolicy) -> StateDistribution {
    let n_states = model.n_states();
    let horizon = model.horizon();
    let trans = model.transitions();
    let mut p = Array2::zeros((horizon + 1, n_states));
    p[[0, model.initial_state() - 1]] = 1.0;
    for k in 0..horizon {
        for i in 0..n_states {
            let mass = p[[k, i]];
            if mass == 0.0 {
                continue;
            }
            for u in 0..model.n_actions() {
                let w = theta.theta[[k, i, u]] * mass;
                if w == 0.0 {
                    continue;
                }
                for j in 0..n_states {
                    p[[k + 1, j]] += w * trans[[k, u, i, j]];
                }
            }
        }
    }
    StateDistribution::from_marginals(p)
}

/// Expected cumulative cost from the initial state under `theta`.
pub fn evaluate_expected_cost(model: &MdpModel, theta: &ConditionalPolicy) -> f64 {
    let p = propagate_distribution(model, theta);
    let horizon = model.horizon();
    let mut total = 0.0;
    for k in 0..horizon {
        for x in 0..model.n_states() {
            let mass = p.p[[k, x]];
            for u in 0..model.n_actions() {
                total += model.costs()[[k, x, u]] * theta.theta[[k, x, u]] * mass;
            }
        }
    }
    total + model.terminal_cost().dot(&p.p.row(horizon))
}

/// Expected value of each average-type constraint's left-hand side under `theta`.
pub fn expected_constraint_values(model: &MdpModel, theta: &ConditionalPolicy) -> Vec<f64> {
    let pi = conditional_to_occupation(theta, &propagate_distribution(model, theta));
    model
        .constraints()
        .iter()
        .map(|con| (&con.beta * &pi.pi).sum())
        .collect()
}
