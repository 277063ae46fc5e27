//! Seeded model generators.
//!
//! # Random monotone models
//!
//! [`random_monotone_mdp`] draws from a `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)`. Every uniform is `Rng::gen::<f64>()`, i.e. the top
//! 53 bits of one `u64` scaled to `[0, 1)`. For each attempt, and for each
//! time `k = 0..N` in order, the stream is consumed as:
//!
//! 1. `X` uniforms for the base cost `a_k(x)`, sorted descending;
//! 2. `X` uniforms for the cost slope `s_k(x)`, sorted descending;
//! 3. `U` uniforms for the action price `m_k(u)`, sorted ascending;
//! 4. `U` uniforms for the reset weight `w_k(u)`, sorted descending;
//! 5. 3 uniforms for the drift weights (down, stay, up), normalised;
//! 6. `X` uniforms for the reset distribution `G_k`, each plus 0.05, normalised.
//!
//! followed by `X` uniforms for the terminal cost, sorted descending. Costs are
//! `c(x,u,k) = cost_scale * (a_k(x) + m_k(u) s_k(x))`, which is decreasing in
//! `x` and submodular. Rows are `P_i(u,k) = w_k(u) G_k + (1 - w_k(u)) B_{k,i}`
//! where `B_{k,i}` moves one state down, stays or moves one state up (clamped
//! at the ends). The drift rows are stochastically increasing in `i`, and with
//! `w_k` decreasing in `u` the tail-sum differences
//! `(w_k(u) - w_k(u+1)) (T_B(i,l) - T_G(l))` are increasing in `i`. Each draw
//! is still passed through the structure checker and redrawn on failure.

use ndarray::{Array1, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dp::{dp_solve, min_expected_sum};
use crate::error::{MdpError, Result};
use crate::model::{AverageConstraint, MdpModel};
use crate::policy::expected_constraint_values;
use crate::structure::check_monotone_assumptions;

pub const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub seed: u64,
    pub cost_scale: f64,
}

impl GeneratorSpec {
    pub fn new(n_states: usize, n_actions: usize, horizon: usize, seed: u64) -> Self {
        Self { n_states, n_actions, horizon, seed, cost_scale: 1.0 }
    }
}

fn sorted_uniforms(rng: &mut ChaCha8Rng, n: usize, descending: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    v.sort_by(|a, b| if descending { b.total_cmp(a) } else { a.total_cmp(b) });
    v
}

fn draw(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Result<MdpModel> {
    let (nx, nu, horizon) = (spec.n_states, spec.n_actions, spec.horizon);
    let mut costs = Array3::zeros((horizon, nx, nu));
    let mut trans = Array4::zeros((horizon, nu, nx, nx));
    for k in 0..horizon {
        let base = sorted_uniforms(rng, nx, true);
        let slope = sorted_uniforms(rng, nx, true);
        let price = sorted_uniforms(rng, nu, false);
        let reset = sorted_uniforms(rng, nu, true);
        let drift: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
        let drift_total: f64 = drift.iter().sum();
        let target: Vec<f64> = (0..nx).map(|_| rng.gen::<f64>() + 0.05).collect();
        let target_total: f64 = target.iter().sum();

        for x in 0..nx {
            for u in 0..nu {
                costs[[k, x, u]] = spec.cost_scale * (base[x] + price[u] * slope[x]);
            }
        }
        for u in 0..nu {
            let w = reset[u];
            for i in 0..nx {
                for j in 0..nx {
                    trans[[k, u, i, j]] += w * target[j] / target_total;
                }
                let down = i.saturating_sub(1);
                let up = (i + 1).min(nx - 1);
                for (dest, weight) in [(down, drift[0]), (i, drift[1]), (up, drift[2])] {
                    trans[[k, u, i, dest]] += (1.0 - w) * weight / drift_total;
                }
                // absorb rounding so rows sum to one
                let total: f64 = (0..nx).map(|j| trans[[k, u, i, j]]).sum();
                for j in 0..nx {
                    trans[[k, u, i, j]] /= total;
                }
            }
        }
    }
    let terminal = Array1::from(sorted_uniforms(rng, nx, true)) * spec.cost_scale;
    MdpModel::new(nx, trans, costs, terminal, vec![])
}

/// Draws a model satisfying A1-A4 (verified by the structure checker).
///
/// The initial state is `X`, the best state.
pub fn random_monotone_mdp(spec: &GeneratorSpec) -> Result<MdpModel> {
    if spec.n_states == 0 || spec.n_actions == 0 || spec.horizon == 0 {
        return Err(MdpError::DimensionMismatch(format!(
            "X, U and N must be positive (got X={}, U={}, N={})",
            spec.n_states, spec.n_actions, spec.horizon
        )));
    }
    if !(spec.cost_scale > 0.0) || !spec.cost_scale.is_finite() {
        return Err(MdpError::InvalidModel(format!(
            "cost scale must be positive, got {}",
            spec.cost_scale
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last_failure = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let model = draw(spec, &mut rng)?;
        let report = check_monotone_assumptions(&model);
        if report.all_pass() {
            return Ok(model);
        }
        last_failure = report.to_string();
    }
    Err(MdpError::GenerationFailed { attempts: MAX_ATTEMPTS, reason: last_failure })
}

/// Two-state machine replacement model.
///
/// States: 1 broken, 2 working. Actions: 1 replace, 2 continue. Replacing
/// costs `replace_cost` in either state; continuing costs `downtime_cost`
/// when broken and nothing when working. The terminal cost is zero and the
/// machine starts working.
pub fn machine_replacement_model(
    theta_break: f64,
    replace_cost: f64,
    downtime_cost: f64,
    horizon: usize,
) -> Result<MdpModel> {
    if !(0.0..=1.0).contains(&theta_break) {
        return Err(MdpError::InvalidProbability { what: "breakdown probability", value: theta_break });
    }
    if horizon == 0 {
        return Err(MdpError::DimensionMismatch("horizon must be positive".into()));
    }
    let mut trans = Array4::zeros((horizon, 2, 2, 2));
    let mut costs = Array3::zeros((horizon, 2, 2));
    for k in 0..horizon {
        trans[[k, 0, 0, 1]] = 1.0;
        trans[[k, 0, 1, 1]] = 1.0;
        trans[[k, 1, 0, 0]] = 1.0;
        trans[[k, 1, 1, 0]] = theta_break;
        trans[[k, 1, 1, 1]] = 1.0 - theta_break;
        costs[[k, 0, 0]] = replace_cost;
        costs[[k, 1, 0]] = replace_cost;
        costs[[k, 0, 1]] = downtime_cost;
    }
    MdpModel::new(2, trans, costs, Array1::zeros(2), vec![])
}

/// How the threshold of a sampled constraint is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaRule {
    /// `gamma = factor * e_opt`, where `e_opt` is the expenditure of the
    /// unconstrained optimum. `factor >= 1` leaves the constraint slack.
    ScaledOptimum(f64),
    /// `gamma = e_min + t (e_opt - e_min)`, where `e_min` is the smallest
    /// achievable expenditure. `t < 1` makes the constraint bind whenever
    /// `e_min < e_opt`.
    Interpolate(f64),
}

/// Appends one average-type constraint with `beta ~ U[0, 1)` drawn from a
/// `ChaCha8Rng` seeded with `seed` in `[k][x][u]` order, `k = 0..=N`.
pub fn with_sampled_constraint(model: &MdpModel, seed: u64, rule: GammaRule) -> Result<MdpModel> {
    let (nx, nu, horizon) = (model.n_states(), model.n_actions(), model.horizon());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = Array3::from_shape_simple_fn((horizon + 1, nx, nu), || rng.gen::<f64>());
    let unconstrained = model.with_constraints(vec![])?;
    let (optimum, _) = dp_solve(&unconstrained)?;
    let probe = unconstrained.with_constraints(vec![AverageConstraint { beta: beta.clone(), gamma: 0.0 }])?;
    let e_opt = expected_constraint_values(&probe, &optimum)[0];
    let gamma = match rule {
        GammaRule::ScaledOptimum(factor) => factor * e_opt,
        GammaRule::Interpolate(t) => {
            let e_min = min_expected_sum(
                model,
                |k, x, u| beta[[k, x, u]],
                |x| (0..nu).map(|u| beta[[horizon, x, u]]).fold(f64::INFINITY, f64::min),
            );
            e_min + t * (e_opt - e_min)
        }
    };
    let mut constraints = model.constraints().to_vec();
    constraints.push(AverageConstraint { beta, gamma });
    model.with_constraints(constraints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::Condition;

    #[test]
    fn trivial_dimensions() {
        let m = random_monotone_mdp(&GeneratorSpec::new(1, 1, 3, 7)).unwrap();
        assert!(check_monotone_assumptions(&m).all_pass());
        assert_eq!(m.initial_state(), 1);
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = GeneratorSpec::new(6, 3, 5, 42);
        assert_eq!(random_monotone_mdp(&spec).unwrap(), random_monotone_mdp(&spec).unwrap());
        let other = GeneratorSpec { seed: 43, ..spec };
        assert_ne!(random_monotone_mdp(&spec).unwrap(), random_monotone_mdp(&other).unwrap());
    }

    #[test]
    fn rejects_empty_dimensions() {
        assert!(random_monotone_mdp(&GeneratorSpec::new(0, 3, 5, 1)).is_err());
        let spec = GeneratorSpec { cost_scale: -1.0, ..GeneratorSpec::new(2, 2, 2, 1) };
        assert!(random_monotone_mdp(&spec).is_err());
    }

    #[test]
    fn machine_replacement_layout() {
        let m = machine_replacement_model(0.2, 1.5, 0.5, 3).unwrap();
        assert_eq!(m.transition(1, 2, 1, 0), 1.0);
        assert_eq!(m.transition(2, 2, 1, 0), 1.0);
        assert_eq!(m.transition(1, 1, 2, 0), 1.0);
        assert_eq!(m.transition(2, 1, 2, 0), 0.2);
        assert!((m.transition(2, 2, 2, 0) - 0.8).abs() < 1e-15);
        assert_eq!((m.cost(1, 1, 0), m.cost(2, 1, 0)), (1.5, 1.5));
        assert_eq!((m.cost(1, 2, 0), m.cost(2, 2, 0)), (0.5, 0.0));
        assert_eq!(m.initial_state(), 2);
        assert!(matches!(
            machine_replacement_model(1.5, 1.0, 1.0, 2),
            Err(MdpError::InvalidProbability { .. })
        ));
    }

    #[test]
    fn machine_replacement_grid_passes() {
        for a in 0..5 {
            for b in 0..5 {
                for c in 0..5 {
                    let m = machine_replacement_model(a as f64 / 4.0, b as f64 / 2.0, c as f64 / 2.0, 3)
                        .unwrap();
                    let report = check_monotone_assumptions(&m);
                    assert!(report.all_pass(), "({a},{b},{c}): {report}");
                }
            }
        }
    }

    #[test]
    fn never_breaking_machine_keeps_running() {
        let m = machine_replacement_model(0.0, 1.0, 0.5, 4).unwrap();
        let (pol, j) = dp_solve(&m).unwrap();
        assert_eq!(j, 0.0);
        for k in 0..4 {
            assert_eq!(pol.theta()[[k, 1, 1]], 1.0);
        }
    }

    #[test]
    fn sampled_constraint_rules() {
        let m = random_monotone_mdp(&GeneratorSpec::new(3, 2, 2, 5)).unwrap();
        let slack = with_sampled_constraint(&m, 9, GammaRule::ScaledOptimum(1.1)).unwrap();
        let (opt, _) = dp_solve(&m).unwrap();
        let spent = expected_constraint_values(&slack, &opt)[0];
        assert!(spent <= slack.constraints()[0].gamma);
        let tight = with_sampled_constraint(&m, 9, GammaRule::Interpolate(0.5)).unwrap();
        assert!(tight.constraints()[0].gamma <= spent + 1e-12);
        assert!(!check_monotone_assumptions(&tight).result(Condition::A1).violation.is_some());
    }
}
