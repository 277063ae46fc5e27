//! Factorisation of the ADMM KKT matrix
//!
//! ```text
//! K = [ rho I   A' ]
//!     [ A       0  ]
//! ```
//!
//! `K` is quasi-definite when `A` has full row rank, so it admits an LDL'
//! factorisation for any symmetric ordering without pivoting. Eliminating the
//! `rho I` block first gives
//!
//! ```text
//! K = [ I      0 ] [ rho I   0        ] [ I   A'/rho ]
//!     [ A/rho  I ] [ 0      -A A'/rho ] [ 0   I      ]
//! ```
//!
//! and the trailing block is factored as `A A' = L D L'` in profile (skyline)
//! storage. With time-major vectorisation the flow rows couple only adjacent
//! time blocks, so the profile is a band of width `O(X)` plus one dense row
//! per average-type constraint.

use sprs::CsMat;

use crate::error::{MdpError, Result};

/// Pivots below this fraction of the original diagonal mark `A` as rank deficient.
const PIVOT_TOL: f64 = 1e-10;
/// Linear-solve residual above which one refinement step is taken.
const REFINE_TOL: f64 = 1e-10;

/// LDL' factor of a symmetric positive definite matrix in profile storage.
#[derive(Debug, Clone)]
struct ProfileLdl {
    /// Column of the first stored entry in each row.
    first: Vec<usize>,
    /// Strictly lower entries of row `i`, columns `first[i]..i`.
    lower: Vec<Vec<f64>>,
    diag: Vec<f64>,
}

impl ProfileLdl {
    fn factor(s: &CsMat<f64>) -> Result<Self> {
        let n = s.rows();
        let s = s.to_csr();
        let mut first: Vec<usize> = (0..n).collect();
        let mut lower: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut orig_diag = vec![0.0; n];
        for (i, row) in s.outer_iterator().enumerate() {
            for (j, &v) in row.iter() {
                if j < i && v != 0.0 {
                    first[i] = first[i].min(j);
                } else if j == i {
                    orig_diag[i] = v;
                }
            }
        }
        for (i, row) in s.outer_iterator().enumerate() {
            let mut li = vec![0.0; i - first[i]];
            for (j, &v) in row.iter() {
                if j < i && v != 0.0 {
                    li[j - first[i]] = v;
                }
            }
            lower.push(li);
        }

        let mut diag = vec![0.0; n];
        let mut work = Vec::new();
        for i in 0..n {
            let fi = first[i];
            // work[k - fi] = L[i][k] * D[k] for the columns finished so far
            work.clear();
            work.resize(i - fi, 0.0);
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let mut acc = lower[i][j - fi];
                for k in start..j {
                    acc -= work[k - fi] * lower[j][k - fj];
                }
                work[j - fi] = acc;
                lower[i][j - fi] = acc / diag[j];
            }
            let mut d = orig_diag[i];
            for (idx, &w) in work.iter().enumerate() {
                d -= w * lower[i][idx];
            }
            let scale = orig_diag[i].abs().max(f64::MIN_POSITIVE);
            if !(d > PIVOT_TOL * scale) {
                return Err(MdpError::SingularSystem { row: i, pivot: d });
            }
            diag[i] = d;
        }
        Ok(Self { first, lower, diag })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            let fi = self.first[i];
            let acc: f64 = self.lower[i].iter().zip(&x[fi..i]).map(|(l, v)| l * v).sum();
            x[i] -= acc;
        }
        for (xi, d) in x.iter_mut().zip(&self.diag) {
            *xi /= d;
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let xi = x[i];
            for (l, v) in self.lower[i].iter().zip(&mut x[fi..i]) {
                *v -= l * xi;
            }
        }
    }
}

/// Reusable factorisation of the ADMM KKT matrix for a fixed `A` and `rho`.
#[derive(Debug, Clone)]
pub struct KktFactor {
    a: CsMat<f64>,
    rho: f64,
    schur: ProfileLdl,
}

impl KktFactor {
    pub fn new(a: &CsMat<f64>, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(MdpError::Config(format!("rho must be positive, got {rho}")));
        }
        let a = a.to_csc();
        let at = a.transpose_view().to_owned();
        let s: CsMat<f64> = &a.to_csr() * &at.to_csc();
        let schur = ProfileLdl::factor(&s)?;
        Ok(Self { a, rho, schur })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Switches to a new `rho`. The `A A'` block is independent of `rho`, so
    /// only the scaling changes.
    pub fn set_rho(&mut self, rho: f64) -> Result<()> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(MdpError::Config(format!("rho must be positive, got {rho}")));
        }
        self.rho = rho;
        Ok(())
    }

    fn a_times(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.a.rows()];
        for (col, column) in self.a.outer_iterator().enumerate() {
            let xc = x[col];
            if xc != 0.0 {
                for (row, &v) in column.iter() {
                    out[row] += v * xc;
                }
            }
        }
        out
    }

    fn at_times(&self, y: &[f64]) -> Vec<f64> {
        self.a
            .outer_iterator()
            .map(|column| column.iter().map(|(row, &v)| v * y[row]).sum())
            .collect()
    }

    fn solve_once(&self, top: &[f64], bottom: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut nu = self.a_times(top);
        for (n, b) in nu.iter_mut().zip(bottom) {
            *n -= self.rho * b;
        }
        self.schur.solve_in_place(&mut nu);
        let at_nu = self.at_times(&nu);
        let x = top.iter().zip(&at_nu).map(|(t, v)| (t - v) / self.rho).collect();
        (x, nu)
    }

    /// Solves `rho x + A' nu = top`, `A x = bottom` and returns `(x, nu)`.
    ///
    /// One step of iterative refinement is applied when the residual of the
    /// full system exceeds `1e-10`.
    pub fn solve(&self, top: &[f64], bottom: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut x, mut nu) = self.solve_once(top, bottom);
        let at_nu = self.at_times(&nu);
        let r_top: Vec<f64> = (0..x.len()).map(|i| top[i] - self.rho * x[i] - at_nu[i]).collect();
        let ax = self.a_times(&x);
        let r_bottom: Vec<f64> = bottom.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let worst = r_top.iter().chain(&r_bottom).fold(0.0f64, |m, v| m.max(v.abs()));
        if worst > REFINE_TOL {
            let (dx, dnu) = self.solve_once(&r_top, &r_bottom);
            x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
            nu.iter_mut().zip(&dnu).for_each(|(n, d)| *n += d);
        }
        (x, nu)
    }
}
