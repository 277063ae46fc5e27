//! Finite-horizon MDP model.
//!
//! States are labelled `1..=X` and actions `1..=U` in the public API; the
//! backing arrays are 0-based, so state `x` lives at index `x - 1`.

use ndarray::{Array1, Array3, Array4};

use crate::error::{MdpError, Result};

/// Row-sum tolerance for transition matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// An average-type constraint `E[sum_k beta(x_k, u_k, k)] <= gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageConstraint {
    /// Indexed `[k][x][u]` for `k = 0..=N`.
    pub beta: Array3<f64>,
    pub gamma: f64,
}

/// A finite-horizon, optionally constrained, Markov decision process.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    initial_state: usize,
    transitions: Array4<f64>,
    costs: Array3<f64>,
    terminal_cost: Array1<f64>,
    constraints: Vec<AverageConstraint>,
}

impl MdpModel {
    /// Builds and validates a model.
    ///
    /// * `transitions` is indexed `[k][u][i][j]` for `k = 0..N`,
    /// * `costs` is indexed `[k][x][u]` for `k = 0..N`,
    /// * `initial_state` is 1-based.
    pub fn new(
        initial_state: usize,
        transitions: Array4<f64>,
        costs: Array3<f64>,
        terminal_cost: Array1<f64>,
        constraints: Vec<AverageConstraint>,
    ) -> Result<Self> {
        let (horizon, n_actions, n_states, n_states_to) = transitions.dim();
        if n_states == 0 || n_actions == 0 || horizon == 0 {
            return Err(MdpError::DimensionMismatch(format!(
                "X, U and N must be positive (got X={n_states}, U={n_actions}, N={horizon})"
            )));
        }
        if n_states_to != n_states {
            return Err(MdpError::DimensionMismatch(format!(
                "transition matrices must be square, got {n_states}x{n_states_to}"
            )));
        }
        if costs.dim() != (horizon, n_states, n_actions) {
            return Err(MdpError::DimensionMismatch(format!(
                "cost array has shape {:?}, expected ({horizon}, {n_states}, {n_actions})",
                costs.dim()
            )));
        }
        if terminal_cost.len() != n_states {
            return Err(MdpError::DimensionMismatch(format!(
                "terminal cost has length {}, expected {n_states}",
                terminal_cost.len()
            )));
        }
        if initial_state == 0 || initial_state > n_states {
            return Err(MdpError::IndexOutOfRange(format!(
                "initial state {initial_state} not in 1..={n_states}"
            )));
        }
        for (l, con) in constraints.iter().enumerate() {
            if con.beta.dim() != (horizon + 1, n_states, n_actions) {
                return Err(MdpError::DimensionMismatch(format!(
                    "constraint {l}: beta has shape {:?}, expected ({}, {n_states}, {n_actions})",
                    con.beta.dim(),
                    horizon + 1
                )));
            }
            if !con.gamma.is_finite() || con.beta.iter().any(|v| !v.is_finite()) {
                return Err(MdpError::InvalidModel(format!("constraint {l} has non-finite data")));
            }
        }
        if costs.iter().chain(terminal_cost.iter()).any(|v| !v.is_finite()) {
            return Err(MdpError::InvalidModel("costs must be finite".into()));
        }
        for k in 0..horizon {
            for u in 0..n_actions {
                for i in 0..n_states {
                    let row = transitions.slice(ndarray::s![k, u, i, ..]);
                    if let Some(&bad) = row.iter().find(|&&p| !(p >= 0.0) || !p.is_finite()) {
                        return Err(MdpError::InvalidModel(format!(
                            "P[{k}][{u}][{i}] has invalid entry {bad}"
                        )));
                    }
                    let sum: f64 = row.sum();
                    if (sum - 1.0).abs() > ROW_SUM_TOL {
                        return Err(MdpError::InvalidModel(format!(
                            "P[{k}][{u}][{i}] sums to {sum}, not 1"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            horizon,
            initial_state,
            transitions,
            costs,
            terminal_cost,
            constraints,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// 1-based initial state.
    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// `[k][u][i][j]`, 0-based.
    pub fn transitions(&self) -> &Array4<f64> {
        &self.transitions
    }

    /// `[k][x][u]`, 0-based.
    pub fn costs(&self) -> &Array3<f64> {
        &self.costs
    }

    pub fn terminal_cost(&self) -> &Array1<f64> {
        &self.terminal_cost
    }

    pub fn constraints(&self) -> &[AverageConstraint] {
        &self.constraints
    }

    pub fn is_constrained(&self) -> bool {
        !self.constraints.is_empty()
    }

    /// Returns a copy with the given constraints replacing the current ones.
    pub fn with_constraints(&self, constraints: Vec<AverageConstraint>) -> Result<Self> {
        Self::new(
            self.initial_state,
            self.transitions.clone(),
            self.costs.clone(),
            self.terminal_cost.clone(),
            constraints,
        )
    }

    /// `P_ij(u, k)` with 1-based `i`, `j`, `u`.
    pub fn transition(&self, i: usize, j: usize, u: usize, k: usize) -> f64 {
        self.transitions[[k, u - 1, i - 1, j - 1]]
    }

    /// `c(x, u, k)` with 1-based `x`, `u`; returns the terminal cost when `k == N`.
    pub fn cost(&self, x: usize, u: usize, k: usize) -> f64 {
        if k == self.horizon {
            self.terminal_cost[x - 1]
        } else {
            self.costs[[k, x - 1, u - 1]]
        }
    }

    /// Cost coefficient of the occupation variable at 0-based `(k, x, u)`,
    /// covering the terminal stage.
    pub(crate) fn stage_cost0(&self, k: usize, x: usize, u: usize) -> f64 {
        if k == self.horizon {
            self.terminal_cost[x]
        } else {
            self.costs[[k, x, u]]
        }
    }
}
