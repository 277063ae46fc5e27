//! Checks for the four sufficient conditions under which an unconstrained
//! finite-horizon MDP has a monotone optimal policy:
//!
//! * A1: costs (and the terminal cost) weakly decreasing in the state,
//! * A2: transition rows first-order stochastically increasing in the state,
//! * A3: costs submodular in (state, action),
//! * A4: transition tail sums supermodular in (state, action).
//!
//! No claim is made for constrained models.

use std::fmt;

use crate::model::MdpModel;

/// Comparison slack for all four conditions.
pub const STRUCTURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    A1,
    A2,
    A3,
    A4,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::A1, Condition::A2, Condition::A3, Condition::A4];

    pub fn description(self) -> &'static str {
        match self {
            Condition::A1 => "costs decreasing in x",
            Condition::A2 => "rows stochastically increasing in x",
            Condition::A3 => "costs submodular in (x,u)",
            Condition::A4 => "tail sums supermodular in (x,u)",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// First violating index tuple of a condition. Indices are 1-based except
/// time, which runs `0..=N` (`k = N` denotes the terminal cost).
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub condition: Condition,
    pub time: usize,
    pub state: usize,
    pub action: Option<usize>,
    /// Tail-sum level `l` for A2/A4.
    pub level: Option<usize>,
    /// The two sides of the failed `lhs <= rhs` comparison.
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated at (x={}", self.condition, self.state)?;
        if let Some(u) = self.action {
            write!(f, ", u={u}")?;
        }
        write!(f, ", k={}", self.time)?;
        if let Some(l) = self.level {
            write!(f, ", l={l}")?;
        }
        write!(f, "): {} > {}", self.lhs, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub condition: Condition,
    pub violation: Option<Violation>,
}

impl ConditionResult {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub results: Vec<ConditionResult>,
}

impl StructureReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(ConditionResult::passed)
    }

    pub fn result(&self, condition: Condition) -> &ConditionResult {
        &self.results[condition as usize]
    }
}

impl fmt::Display for StructureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            match &r.violation {
                None => writeln!(f, "{} PASS ({})", r.condition, r.condition.description())?,
                Some(v) => writeln!(f, "{} FAIL ({}): {v}", r.condition, r.condition.description())?,
            }
        }
        Ok(())
    }
}

pub fn check_monotone_assumptions(model: &MdpModel) -> StructureReport {
    let results = vec![
        ConditionResult { condition: Condition::A1, violation: check_a1(model) },
        ConditionResult { condition: Condition::A2, violation: check_a2(model) },
        ConditionResult { condition: Condition::A3, violation: check_a3(model) },
        ConditionResult { condition: Condition::A4, violation: check_a4(model) },
    ];
    StructureReport { results }
}

/// `sum_{j >= l} P_ij(u, k)` for 0-based `l`.
fn tail_sums(model: &MdpModel, k: usize, u: usize, i: usize) -> Vec<f64> {
    let n = model.n_states();
    let mut tails = vec![0.0; n + 1];
    for j in (0..n).rev() {
        tails[j] = tails[j + 1] + model.transitions()[[k, u, i, j]];
    }
    tails.truncate(n);
    tails
}

fn violation(
    condition: Condition,
    time: usize,
    state: usize,
    action: Option<usize>,
    level: Option<usize>,
    lhs: f64,
    rhs: f64,
) -> Option<Violation> {
    (lhs > rhs + STRUCTURE_TOL).then_some(Violation { condition, time, state, action, level, lhs, rhs })
}

fn check_a1(model: &MdpModel) -> Option<Violation> {
    let c = model.costs();
    for k in 0..model.horizon() {
        for x in 0..model.n_states().saturating_sub(1) {
            for u in 0..model.n_actions() {
                let v = violation(Condition::A1, k, x + 1, Some(u + 1), None, c[[k, x + 1, u]], c[[k, x, u]]);
                if v.is_some() {
                    return v;
                }
            }
        }
    }
    let cn = model.terminal_cost();
    (0..model.n_states().saturating_sub(1))
        .find_map(|x| violation(Condition::A1, model.horizon(), x + 1, None, None, cn[x + 1], cn[x]))
}

fn check_a2(model: &MdpModel) -> Option<Violation> {
    for k in 0..model.horizon() {
        for i in 0..model.n_states().saturating_sub(1) {
            for u in 0..model.n_actions() {
                let lo = tail_sums(model, k, u, i);
                let hi = tail_sums(model, k, u, i + 1);
                for l in 1..model.n_states() {
                    let v = violation(Condition::A2, k, i + 1, Some(u + 1), Some(l + 1), lo[l], hi[l]);
                    if v.is_some() {
                        return v;
                    }
                }
            }
        }
    }
    None
}

fn check_a3(model: &MdpModel) -> Option<Violation> {
    let c = model.costs();
    for k in 0..model.horizon() {
        for x in 0..model.n_states().saturating_sub(1) {
            for u in 0..model.n_actions().saturating_sub(1) {
                let here = c[[k, x, u + 1]] - c[[k, x, u]];
                let next = c[[k, x + 1, u + 1]] - c[[k, x + 1, u]];
                let v = violation(Condition::A3, k, x + 1, Some(u + 1), None, next, here);
                if v.is_some() {
                    return v;
                }
            }
        }
    }
    None
}

fn check_a4(model: &MdpModel) -> Option<Violation> {
    for k in 0..model.horizon() {
        for i in 0..model.n_states().saturating_sub(1) {
            for u in 0..model.n_actions().saturating_sub(1) {
                let (lo_u, lo_u1) = (tail_sums(model, k, u, i), tail_sums(model, k, u + 1, i));
                let (hi_u, hi_u1) = (tail_sums(model, k, u, i + 1), tail_sums(model, k, u + 1, i + 1));
                for l in 0..model.n_states() {
                    let v = violation(
                        Condition::A4,
                        k,
                        i + 1,
                        Some(u + 1),
                        Some(l + 1),
                        lo_u1[l] - lo_u[l],
                        hi_u1[l] - hi_u[l],
                    );
                    if v.is_some() {
                        return v;
                    }
                }
            }
        }
    }
    None
}
