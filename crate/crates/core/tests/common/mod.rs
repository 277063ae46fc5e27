#![allow(dead_code)]

use monomdp::generator::{machine_replacement_model, random_monotone_mdp, GeneratorSpec};
use monomdp::{ConditionalPolicy, MdpModel};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small unconstrained instances used across suites.
pub fn suite_models() -> Vec<MdpModel> {
    let mut models = vec![
        machine_replacement_model(0.3, 1.0, 0.5, 6).unwrap(),
        machine_replacement_model(0.8, 0.4, 1.5, 4).unwrap(),
    ];
    for (seed, (x, u, n)) in [(5, 3, 4), (4, 2, 6), (6, 3, 3)].into_iter().enumerate() {
        models.push(random_monotone_mdp(&GeneratorSpec::new(x, u, n, 100 + seed as u64)).unwrap());
    }
    models
}

/// Rows drawn uniformly from the simplex interior by normalised exponentials.
pub fn random_theta(rng: &mut ChaCha8Rng, nx: usize, nu: usize, horizon: usize) -> Array3<f64> {
    let mut theta = Array3::from_shape_simple_fn((horizon + 1, nx, nu), || -(1.0 - rng.gen::<f64>()).ln());
    for mut row in theta.lanes_mut(ndarray::Axis(2)) {
        let s = row.sum();
        row /= s;
    }
    theta
}

/// Random rows reordered within each time so the expected action is
/// nondecreasing in the state.
pub fn monotone_theta(rng: &mut ChaCha8Rng, nx: usize, nu: usize, horizon: usize) -> Array3<f64> {
    let raw = random_theta(rng, nx, nu, horizon);
    let mut out = raw.clone();
    for k in 0..=horizon {
        let mut rows: Vec<(f64, Vec<f64>)> = (0..nx)
            .map(|x| {
                let row: Vec<f64> = raw.slice(ndarray::s![k, x, ..]).to_vec();
                let mean = row.iter().enumerate().map(|(u, v)| (u + 1) as f64 * v).sum();
                (mean, row)
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (x, (_, row)) in rows.into_iter().enumerate() {
            for (u, v) in row.into_iter().enumerate() {
                out[[k, x, u]] = v;
            }
        }
    }
    out
}

pub fn random_policy(rng: &mut ChaCha8Rng, model: &MdpModel) -> ConditionalPolicy {
    ConditionalPolicy::new(random_theta(rng, model.n_states(), model.n_actions(), model.horizon())).unwrap()
}

/// Expected cost by backward value recursion, independent of the forward
/// propagation used by the library.
pub fn backward_cost(model: &MdpModel, theta: &Array3<f64>) -> f64 {
    let (nx, nu, horizon) = (model.n_states(), model.n_actions(), model.horizon());
    let mut v: Vec<f64> = (1..=nx)
        .map(|x| (1..=nu).map(|u| theta[[horizon, x - 1, u - 1]] * model.terminal_cost()[x - 1]).sum())
        .collect();
    for k in (0..horizon).rev() {
        v = (1..=nx)
            .map(|x| {
                (1..=nu)
                    .map(|u| {
                        let future: f64 = (1..=nx).map(|j| model.transition(x, j, u, k) * v[j - 1]).sum();
                        theta[[k, x - 1, u - 1]] * (model.cost(x, u, k) + future)
                    })
                    .sum()
            })
            .collect();
    }
    v[model.initial_state() - 1]
}

/// Every deterministic decision-time action table (terminal actions fixed to 1).
pub fn all_action_tables(nx: usize, nu: usize, horizon: usize) -> Vec<Array2<usize>> {
    let slots = nx * horizon;
    let total = nu.pow(slots as u32);
    (0..total)
        .map(|mut code| {
            let mut table = Array2::from_elem((horizon + 1, nx), 1);
            for s in 0..slots {
                table[[s / nx, s % nx]] = code % nu + 1;
                code /= nu;
            }
            table
        })
        .collect()
}
