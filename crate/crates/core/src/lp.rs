//! Standard-form LP `min q'a  s.t.  A a = b, a >= 0` over occupation measures.
//!
//! Occupation variables are vectorised time-major, then by state, then by
//! action (see [`LpLayout::flat_index`]). Slack variables for the
//! average-type constraints follow the `X U (N+1)` occupation variables.
//! Rows are ordered: `X` initial-distribution rows, `X N` flow rows (time
//! major), then one row per constraint.

use ndarray::Array3;
use sprs::{CsMat, TriMat};

use crate::error::{MdpError, Result};
use crate::model::MdpModel;
use crate::policy::OccupationMeasure;

/// Dimensions used for vectorisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LpLayout {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
}

impl LpLayout {
    pub fn of(model: &MdpModel) -> Self {
        Self { n_states: model.n_states(), n_actions: model.n_actions(), horizon: model.horizon() }
    }

    /// Number of occupation variables, `X U (N+1)`.
    pub fn n_decision(&self) -> usize {
        self.n_states * self.n_actions * (self.horizon + 1)
    }

    /// 0-based position of `pi(x, u, k)` for 1-based `x`, `u` and `k = 0..=N`.
    pub fn flat_index(&self, x: usize, u: usize, k: usize) -> Result<usize> {
        if x == 0 || x > self.n_states || u == 0 || u > self.n_actions || k > self.horizon {
            return Err(MdpError::IndexOutOfRange(format!(
                "(x={x}, u={u}, k={k}) outside 1..={} x 1..={} x 0..={}",
                self.n_states, self.n_actions, self.horizon
            )));
        }
        Ok(self.index0(k, x - 1, u - 1))
    }

    #[inline]
    pub(crate) fn index0(&self, k: usize, x: usize, u: usize) -> usize {
        (k * self.n_states + x) * self.n_actions + u
    }

    /// Inverse of [`flat_index`](Self::flat_index): returns 1-based `(x, u)` and `k`.
    pub fn unflatten(&self, index: usize) -> Result<(usize, usize, usize)> {
        if index >= self.n_decision() {
            return Err(MdpError::IndexOutOfRange(format!(
                "flat index {index} >= {}",
                self.n_decision()
            )));
        }
        let u = index % self.n_actions;
        let x = (index / self.n_actions) % self.n_states;
        let k = index / (self.n_actions * self.n_states);
        Ok((x + 1, u + 1, k))
    }
}

#[derive(Debug, Clone)]
pub struct StandardFormLp {
    pub q: Vec<f64>,
    /// `M x D`, compressed-column storage.
    pub a: CsMat<f64>,
    pub b: Vec<f64>,
    pub n_decision: usize,
    pub n_slack: usize,
    pub layout: Option<LpLayout>,
}

impl StandardFormLp {
    /// Wraps an arbitrary standard-form LP.
    pub fn new(q: Vec<f64>, a: CsMat<f64>, b: Vec<f64>) -> Result<Self> {
        let (m, d) = a.shape();
        if q.len() != d || b.len() != m {
            return Err(MdpError::DimensionMismatch(format!(
                "A is {m}x{d}, q has length {}, b has length {}",
                q.len(),
                b.len()
            )));
        }
        Ok(Self { q, a: a.to_csc(), b, n_decision: d, n_slack: 0, layout: None })
    }

    pub fn n_vars(&self) -> usize {
        self.q.len()
    }

    pub fn n_rows(&self) -> usize {
        self.b.len()
    }

    /// `A x - b`.
    pub fn equality_residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self.b.iter().map(|v| -v).collect();
        for (col, column) in self.a.outer_iterator().enumerate() {
            let xc = x[col];
            if xc != 0.0 {
                for (row, &v) in column.iter() {
                    r[row] += v * xc;
                }
            }
        }
        r
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.q.iter().zip(x).map(|(q, x)| q * x).sum()
    }
}

pub fn build_lp(model: &MdpModel) -> Result<StandardFormLp> {
    let layout = LpLayout::of(model);
    let (nx, nu, horizon) = (layout.n_states, layout.n_actions, layout.horizon);
    let n_decision = layout.n_decision();
    let n_slack = model.constraints().len();
    let n_vars = n_decision + n_slack;
    let n_rows = nx + nx * horizon + n_slack;
    let trans = model.transitions();

    let mut q = vec![0.0; n_vars];
    for k in 0..=horizon {
        for x in 0..nx {
            for u in 0..nu {
                q[layout.index0(k, x, u)] = model.stage_cost0(k, x, u);
            }
        }
    }

    let mut b = vec![0.0; n_rows];
    b[model.initial_state() - 1] = 1.0;

    let mut tri = TriMat::new((n_rows, n_vars));
    for x in 0..nx {
        for u in 0..nu {
            tri.add_triplet(x, layout.index0(0, x, u), 1.0);
        }
    }
    for k in 1..=horizon {
        for j in 0..nx {
            let row = nx * k + j;
            for u in 0..nu {
                tri.add_triplet(row, layout.index0(k, j, u), 1.0);
            }
            for i in 0..nx {
                for u in 0..nu {
                    let pij = trans[[k - 1, u, i, j]];
                    if pij != 0.0 {
                        tri.add_triplet(row, layout.index0(k - 1, i, u), -pij);
                    }
                }
            }
        }
    }
    for (l, con) in model.constraints().iter().enumerate() {
        let row = nx * (horizon + 1) + l;
        if con.beta.dim() != (horizon + 1, nx, nu) {
            return Err(MdpError::DimensionMismatch(format!("constraint {l} has wrong shape")));
        }
        for ((k, x, u), &beta) in con.beta.indexed_iter() {
            if beta != 0.0 {
                tri.add_triplet(row, layout.index0(k, x, u), beta);
            }
        }
        tri.add_triplet(row, n_decision + l, 1.0);
        b[row] = con.gamma;
    }

    Ok(StandardFormLp {
        q,
        a: tri.to_csc(),
        b,
        n_decision,
        n_slack,
        layout: Some(layout),
    })
}

/// Occupation measure stored in the first `X U (N+1)` entries of `alpha`.
pub fn devectorize(alpha: &[f64], layout: &LpLayout) -> Result<OccupationMeasure> {
    let n = layout.n_decision();
    if alpha.len() < n {
        return Err(MdpError::DimensionMismatch(format!(
            "vector has length {}, need at least {n}",
            alpha.len()
        )));
    }
    let pi = Array3::from_shape_vec(
        (layout.horizon + 1, layout.n_states, layout.n_actions),
        alpha[..n].to_vec(),
    )
    .expect("time-major layout matches the array shape");
    Ok(OccupationMeasure::new(pi))
}

/// Occupation variables in LP order (no slack entries).
pub fn vectorize(pi: &OccupationMeasure) -> Vec<f64> {
    pi.pi().iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::machine_replacement_model;
    use crate::model::AverageConstraint;
    use ndarray::{array, Array3, Array4};

    #[test]
    fn flat_index_examples() {
        let l = LpLayout { n_states: 10, n_actions: 3, horizon: 5 };
        assert_eq!(l.flat_index(1, 1, 0).unwrap(), 0);
        assert_eq!(l.flat_index(1, 1, 1).unwrap(), 30);
        let l = LpLayout { n_states: 2, n_actions: 3, horizon: 1 };
        assert_eq!(l.flat_index(2, 3, 1).unwrap(), 11);
        assert_eq!(l.unflatten(11).unwrap(), (2, 3, 1));
        assert!(l.flat_index(3, 1, 0).is_err());
        assert!(l.flat_index(1, 0, 0).is_err());
        assert!(l.flat_index(1, 1, 2).is_err());
        assert!(l.unflatten(12).is_err());
    }

    #[test]
    fn flat_index_is_a_bijection() {
        let l = LpLayout { n_states: 4, n_actions: 3, horizon: 3 };
        let mut seen = vec![false; l.n_decision()];
        for k in 0..=3 {
            for x in 1..=4 {
                for u in 1..=3 {
                    let i = l.flat_index(x, u, k).unwrap();
                    assert!(!seen[i]);
                    seen[i] = true;
                    assert_eq!(l.unflatten(i).unwrap(), (x, u, k));
                }
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn small_dimensions() {
        let p = Array4::from_elem((1, 2, 2, 2), 0.5);
        let m = MdpModel::new(2, p, Array3::zeros((1, 2, 2)), array![0.0, 0.0], vec![]).unwrap();
        let lp = build_lp(&m).unwrap();
        assert_eq!((lp.n_rows(), lp.n_vars()), (4, 8));
        assert_eq!(lp.b, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn machine_replacement_flow_row() {
        let m = machine_replacement_model(0.3, 1.0, 0.5, 2).unwrap();
        let lp = build_lp(&m).unwrap();
        assert_eq!(lp.n_rows(), 6);
        let l = lp.layout.unwrap();
        let dense = lp.a.to_dense();
        // row for j = 2, k = 1
        let row = dense.row(2 + 1);
        for u in 1..=2 {
            assert_eq!(row[l.flat_index(2, u, 1).unwrap()], 1.0);
            for i in 1..=2 {
                assert_eq!(row[l.flat_index(i, u, 0).unwrap()], -m.transition(i, 2, u, 0));
            }
        }
        assert_eq!(row[l.flat_index(1, 1, 1).unwrap()], 0.0);
        assert_eq!(lp.q[l.flat_index(1, 1, 0).unwrap()], 1.0);
        assert_eq!(lp.q[l.flat_index(1, 2, 0).unwrap()], 0.5);
    }

    #[test]
    fn total_mass_constraint_is_feasible_with_zero_slack() {
        let m = machine_replacement_model(0.3, 1.0, 0.5, 2).unwrap();
        let beta = Array3::from_elem((3, 2, 2), 1.0);
        let m = m.with_constraints(vec![AverageConstraint { beta, gamma: 3.0 }]).unwrap();
        let lp = build_lp(&m).unwrap();
        assert_eq!((lp.n_slack, lp.n_vars(), lp.n_rows()), (1, 13, 7));
        let slack_col = lp.a.outer_view(12).unwrap();
        assert_eq!(slack_col.nnz(), 1);
        assert_eq!(slack_col.iter().next(), Some((6, &1.0)));
        // occupation measure of "always continue", slack zero
        let theta = crate::policy::ConditionalPolicy::deterministic(&ndarray::Array2::from_elem((3, 2), 2), 2)
            .unwrap();
        let p = crate::policy::propagate_distribution(&m, &theta);
        let mut x = vectorize(&crate::policy::conditional_to_occupation(&theta, &p));
        x.push(0.0);
        assert!(lp.equality_residual(&x).iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn devectorize_examples() {
        let l = LpLayout { n_states: 2, n_actions: 2, horizon: 1 };
        let zero = devectorize(&[0.0; 8], &l).unwrap();
        assert!(zero.pi().iter().all(|&v| v == 0.0));
        let mut e = vec![0.0; 9];
        e[l.flat_index(2, 1, 0).unwrap()] = 1.0;
        let pi = devectorize(&e, &l).unwrap();
        assert_eq!(pi.pi()[[0, 1, 0]], 1.0);
        assert_eq!(pi.pi().sum(), 1.0);
        assert!(devectorize(&[0.0; 7], &l).is_err());
    }
}
