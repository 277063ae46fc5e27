//! Backward induction for unconstrained models.

use ndarray::{Array2, Array3};

use crate::error::{MdpError, Result};
use crate::model::MdpModel;
use crate::policy::ConditionalPolicy;

/// Relative slack under which two action values count as tied.
const TIE_TOL: f64 = 1e-12;

/// Optimal deterministic policy and the optimal expected cost from `x0`.
///
/// Ties in the per-state minimisation go to the largest minimising action,
/// which selects a monotone optimum whenever one exists under the usual
/// supermodularity conditions. Terminal-time actions are irrelevant to the
/// cost and are set to `U`.
pub fn dp_solve(model: &MdpModel) -> Result<(ConditionalPolicy, f64)> {
    if model.is_constrained() {
        return Err(MdpError::ConstrainedModel(model.constraints().len()));
    }
    let stage = |k: usize, x: usize, u: usize| model.costs()[[k, x, u]];
    let (actions, values) = backward_induction(model, stage, |x| model.terminal_cost()[x], None);
    let policy = ConditionalPolicy::deterministic(&actions, model.n_actions())?;
    Ok((policy, values[model.initial_state() - 1]))
}

/// Minimal expected value of `sum_{k<N} f(x_k, u_k, k) + g(x_N)` from `x0`
/// over all policies, ignoring the model's own costs.
pub(crate) fn min_expected_sum(
    model: &MdpModel,
    stage: impl Fn(usize, usize, usize) -> f64,
    terminal: impl Fn(usize) -> f64,
) -> f64 {
    let (_, values) = backward_induction(model, stage, terminal, None);
    values[model.initial_state() - 1]
}

/// Returns the `[k][x]` table of 1-based actions (`k = 0..=N`) and the value
/// function at `k = 0`. When `fixed` is given the actions are evaluated rather
/// than optimised.
fn backward_induction(
    model: &MdpModel,
    stage: impl Fn(usize, usize, usize) -> f64,
    terminal: impl Fn(usize) -> f64,
    fixed: Option<&Array2<usize>>,
) -> (Array2<usize>, Vec<f64>) {
    let (n_states, n_actions, horizon) = (model.n_states(), model.n_actions(), model.horizon());
    let trans = model.transitions();
    let mut actions = Array2::from_elem((horizon + 1, n_states), n_actions);
    let mut value: Vec<f64> = (0..n_states).map(&terminal).collect();
    let mut q = vec![0.0; n_actions];
    for k in (0..horizon).rev() {
        let mut next = vec![0.0; n_states];
        for x in 0..n_states {
            for (u, qu) in q.iter_mut().enumerate() {
                let future: f64 = (0..n_states).map(|j| trans[[k, u, x, j]] * value[j]).sum();
                *qu = stage(k, x, u) + future;
            }
            let chosen = match fixed {
                Some(table) => table[[k, x]] - 1,
                None => largest_argmin(&q),
            };
            actions[[k, x]] = chosen + 1;
            next[x] = q[chosen];
        }
        value = next;
    }
    (actions, value)
}

fn largest_argmin(q: &[f64]) -> usize {
    let best = q.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = TIE_TOL * (1.0 + best.abs());
    q.iter().rposition(|&v| v <= best + slack).unwrap_or(0)
}

/// Expected cost of a deterministic `[k][x]` action table (1-based actions),
/// by backward evaluation. Independent of forward propagation.
pub fn evaluate_deterministic(model: &MdpModel, actions: &Array2<usize>) -> f64 {
    let stage = |k: usize, x: usize, u: usize| model.costs()[[k, x, u]];
    let (_, values) = backward_induction(model, stage, |x| model.terminal_cost()[x], Some(actions));
    values[model.initial_state() - 1]
}

/// Converts a deterministic conditional policy back to its action table.
pub fn action_table(policy: &ConditionalPolicy) -> Array2<usize> {
    let theta: &Array3<f64> = policy.theta();
    let (t, n_states, _) = theta.dim();
    Array2::from_shape_fn((t, n_states), |(k, x)| {
        let row = theta.slice(ndarray::s![k, x, ..]);
        row.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (u, &v)| if v > best.1 { (u, v) } else { best })
            .0
            + 1
    })
}
