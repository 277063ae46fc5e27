//! Scaled-dual ADMM for standard-form LPs.
//!
//! Each step solves the equality-constrained subproblem exactly with the
//! cached KKT factorisation, then projects onto the nonnegative orthant and
//! updates the scaled dual:
//!
//! ```text
//! [rho I  A'] [alpha+]   [rho (z - eta) - q]
//! [A      0 ] [nu    ] = [b                ]
//! z+   = max(alpha+ + eta, 0)
//! eta+ = eta + alpha+ - z+
//! ```

use crate::error::{MdpError, Result};
use crate::kkt::KktFactor;
use crate::lp::StandardFormLp;

#[derive(Debug, Clone)]
pub struct AdmmState {
    pub alpha: Vec<f64>,
    pub z: Vec<f64>,
    pub eta: Vec<f64>,
    kkt: KktFactor,
}

impl AdmmState {
    /// Zero iterates and a factorisation of the KKT matrix for `rho`.
    pub fn setup(lp: &StandardFormLp, rho: f64) -> Result<Self> {
        let kkt = KktFactor::new(&lp.a, rho)?;
        let d = lp.n_vars();
        Ok(Self { alpha: vec![0.0; d], z: vec![0.0; d], eta: vec![0.0; d], kkt })
    }

    pub fn rho(&self) -> f64 {
        self.kkt.rho()
    }

    pub fn set_rho(&mut self, rho: f64) -> Result<()> {
        self.kkt.set_rho(rho)
    }

    pub fn step(&mut self, lp: &StandardFormLp) {
        let rho = self.rho();
        let rhs: Vec<f64> = self
            .z
            .iter()
            .zip(&self.eta)
            .zip(&lp.q)
            .map(|((z, eta), q)| rho * (z - eta) - q)
            .collect();
        let (alpha, _) = self.kkt.solve(&rhs, &lp.b);
        for i in 0..alpha.len() {
            let z = (alpha[i] + self.eta[i]).max(0.0);
            self.eta[i] += alpha[i] - z;
            self.z[i] = z;
        }
        self.alpha = alpha;
    }

    /// `||alpha - z||_inf`.
    pub fn primal_residual(&self) -> f64 {
        primal_residual(&self.alpha, &self.z)
    }

    /// Restarts the primal iterates at `alpha`, with `z = max(alpha, 0)`;
    /// the dual iterate is left untouched.
    pub fn reset_primal(&mut self, alpha: Vec<f64>) -> Result<()> {
        if alpha.len() != self.alpha.len() {
            return Err(MdpError::DimensionMismatch(format!(
                "primal vector has length {}, expected {}",
                alpha.len(),
                self.alpha.len()
            )));
        }
        self.z = alpha.iter().map(|v| v.max(0.0)).collect();
        self.alpha = alpha;
        Ok(())
    }

    pub fn reset_dual(&mut self) {
        self.eta.iter_mut().for_each(|e| *e = 0.0);
    }
}

pub fn primal_residual(alpha: &[f64], z: &[f64]) -> f64 {
    alpha.iter().zip(z).fold(0.0, |m, (a, z)| m.max((a - z).abs()))
}
