//! Alternating solver: blocks of ADMM steps on the occupation-measure LP
//! interleaved with blocks of nearly-isotonic subgradient steps on the
//! conditional policy.
//!
//! Every ADMM step and every subgradient step advances the global iteration
//! index by one. After an ADMM block the policy and state marginals are read
//! off the `z` iterate; after a subgradient block the policy is repaired,
//! multiplied by the fixed marginals and loaded back as `alpha` and `z`,
//! keeping the scaled dual.

use std::fmt;
use std::str::FromStr;

use crate::admm::AdmmState;
use crate::dp::dp_solve;
use crate::error::{MdpError, Result};
use crate::isotonic::{AffinePolicy, RegularizedProblem};
use crate::lp::{build_lp, devectorize, vectorize, LpLayout, StandardFormLp};
use crate::model::MdpModel;
use crate::policy::{
    conditional_to_occupation, evaluate_expected_cost, occupation_to_conditional, ConditionalPolicy,
    OccupationMeasure, StateDistribution,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    PlainAdmm,
    Regularized,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::PlainAdmm => "plain",
            Mode::Regularized => "regularized",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = MdpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "plain_admm" => Ok(Mode::PlainAdmm),
            "regularized" => Ok(Mode::Regularized),
            other => Err(MdpError::Config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    /// Use [`default_lambda`].
    Auto,
    Value(f64),
}

impl FromStr for Lambda {
    type Err = MdpError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Lambda::Auto);
        }
        s.parse::<f64>()
            .map(Lambda::Value)
            .map_err(|_| MdpError::Config(format!("lambda must be 'auto' or a number, got '{s}'")))
    }
}

/// What happens to the scaled dual when ADMM resumes after a subgradient block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualReentry {
    Keep,
    Reset,
}

/// Which ADMM iterate the policy is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicySource {
    Z,
    Alpha,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rho: f64,
    pub lambda: Lambda,
    pub i_admm: usize,
    pub i_sg: usize,
    /// Budget over ADMM and subgradient steps combined.
    pub max_iter: usize,
    /// Relative cost-gap threshold.
    pub eps_cost: f64,
    /// Primal-residual threshold.
    pub eps_res: f64,
    /// After this many iterations only ADMM steps are taken; 0 disables the cutoff.
    pub boost_iter: usize,
    pub mode: Mode,
    /// Optimal cost used for cost gaps; without it only the residual decides convergence.
    pub reference_cost: Option<f64>,
    pub dual_reentry: DualReentry,
    pub policy_source: PolicySource,
    /// Stop as soon as both thresholds hold; sweeps turn this off to observe
    /// the whole budget.
    pub stop_on_convergence: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 5.0,
            lambda: Lambda::Auto,
            i_admm: 10,
            i_sg: 5,
            max_iter: 1000,
            eps_cost: 0.01,
            eps_res: 1e-4,
            boost_iter: 0,
            mode: Mode::Regularized,
            reference_cost: None,
            dual_reentry: DualReentry::Keep,
            policy_source: PolicySource::Z,
            stop_on_convergence: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(MdpError::Config(msg));
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return fail(format!("rho must be positive, got {}", self.rho));
        }
        if let Lambda::Value(l) = self.lambda {
            if !(l >= 0.0) || !l.is_finite() {
                return fail(format!("lambda must be nonnegative, got {l}"));
            }
        }
        if self.i_admm == 0 || self.i_sg == 0 {
            return fail("i_admm and i_sg must be positive".into());
        }
        if self.max_iter == 0 {
            return fail("max_iter must be positive".into());
        }
        if !(self.eps_cost > 0.0) || !(self.eps_res > 0.0) {
            return fail("thresholds must be positive".into());
        }
        if let Some(c) = self.reference_cost {
            if !c.is_finite() {
                return fail(format!("reference cost must be finite, got {c}"));
            }
        }
        Ok(())
    }

    /// Relative cost gap, falling back to the absolute gap when `c* = 0`.
    pub fn relative_gap(cost: f64, reference: f64) -> f64 {
        let gap = (cost - reference).abs();
        if reference == 0.0 {
            gap
        } else {
            gap / reference.abs()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Admm,
    Sg,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Admm => "admm",
            Phase::Sg => "sg",
        }
    }
}

impl FromStr for Phase {
    type Err = MdpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "admm" => Ok(Phase::Admm),
            "sg" => Ok(Phase::Sg),
            other => Err(MdpError::Config(format!("unknown phase '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub phase: Phase,
    /// Expected cost from the initial state of the current policy.
    pub cost: f64,
    /// `|cost - c*|` when a reference cost is known.
    pub cost_gap: Option<f64>,
    /// `||alpha - z||_inf`, ADMM iterates only.
    pub primal_res: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Both thresholds held at an ADMM iterate (only the residual when no
    /// reference cost was given).
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub policy: ConditionalPolicy,
    /// Occupation measure held in the final `z` iterate.
    pub occupation: OccupationMeasure,
    pub trace: Vec<IterationRecord>,
    pub status: SolveStatus,
    /// Regularisation weight actually used.
    pub lambda: f64,
}

/// `lambda = (1 / XU) sum_x sum_u ( sum_{k<N} c(x,u,k) + c_N(x) )`.
pub fn default_lambda(model: &MdpModel) -> f64 {
    let (nx, nu) = (model.n_states(), model.n_actions());
    let stage: f64 = model.costs().sum();
    let terminal: f64 = model.terminal_cost().sum() * nu as f64;
    (stage + terminal) / (nx * nu) as f64
}

struct Run<'a> {
    model: &'a MdpModel,
    config: &'a SolverConfig,
    lp: StandardFormLp,
    layout: LpLayout,
    admm: AdmmState,
    trace: Vec<IterationRecord>,
    policy: Option<ConditionalPolicy>,
}

impl<'a> Run<'a> {
    fn extract(&self) -> (ConditionalPolicy, StateDistribution) {
        let source = match self.config.policy_source {
            PolicySource::Z => &self.admm.z,
            PolicySource::Alpha => &self.admm.alpha,
        };
        let pi = devectorize(source, &self.layout).expect("iterate length matches the LP");
        occupation_to_conditional(&pi, self.policy.as_ref())
    }

    fn record(&mut self, phase: Phase, cost: f64, primal_res: Option<f64>) {
        let iter = self.trace.len() + 1;
        let cost_gap = self.config.reference_cost.map(|c| (cost - c).abs());
        self.trace.push(IterationRecord { iter, phase, cost, cost_gap, primal_res });
    }

    fn converged(&self, cost: f64, residual: f64) -> bool {
        let cost_ok = self
            .config
            .reference_cost
            .map_or(true, |c| SolverConfig::relative_gap(cost, c) < self.config.eps_cost);
        cost_ok && residual < self.config.eps_res
    }

    fn iter(&self) -> usize {
        self.trace.len()
    }

    /// Returns true when the run converged inside the block.
    fn admm_block(&mut self, steps: usize) -> bool {
        for _ in 0..steps {
            if self.iter() >= self.config.max_iter {
                break;
            }
            self.admm.step(&self.lp);
            let (policy, _) = self.extract();
            let cost = evaluate_expected_cost(self.model, &policy);
            let residual = self.admm.primal_residual();
            self.policy = Some(policy);
            self.record(Phase::Admm, cost, Some(residual));
            if self.config.stop_on_convergence && self.converged(cost, residual) {
                return true;
            }
        }
        false
    }

    fn sg_allowed(&self) -> bool {
        self.iter() < self.config.max_iter
            && (self.config.boost_iter == 0 || self.iter() < self.config.boost_iter)
    }

    fn sg_block(&mut self, lambda: f64, counter: &mut u64) -> Result<()> {
        let (start, marginals) = self.extract();
        let problem = RegularizedProblem::new(self.model, marginals, lambda)?;
        let mut iterate = AffinePolicy::from(start);
        for _ in 0..self.config.i_sg {
            if !self.sg_allowed() {
                break;
            }
            *counter += 1;
            match problem.step(&iterate, *counter) {
                Ok(next) => iterate = next,
                Err(MdpError::ZeroDirection(_)) => {}
                Err(e) => return Err(e),
            }
            let cost = evaluate_expected_cost(self.model, &iterate.repair());
            self.record(Phase::Sg, cost, None);
        }

        let repaired = iterate.repair();
        let pi = conditional_to_occupation(&repaired, problem.p_fixed());
        let mut alpha = vectorize(&pi);
        for con in self.model.constraints() {
            let spent: f64 = (&con.beta * pi.pi()).sum();
            alpha.push(con.gamma - spent);
        }
        self.admm.reset_primal(alpha)?;
        if self.config.dual_reentry == DualReentry::Reset {
            self.admm.reset_dual();
        }
        self.policy = Some(repaired);
        Ok(())
    }
}

/// Runs the configured method on `model`.
pub fn solve(model: &MdpModel, config: &SolverConfig) -> Result<SolveOutcome> {
    config.validate()?;
    let lp = build_lp(model)?;
    let layout = LpLayout::of(model);
    let admm = AdmmState::setup(&lp, config.rho)?;
    let lambda = match config.lambda {
        Lambda::Auto => default_lambda(model),
        Lambda::Value(l) => l,
    };
    let mut run = Run { model, config, lp, layout, admm, trace: Vec::new(), policy: None };
    let mut counter = 0u64;
    let mut status = SolveStatus::MaxIterations;

    while run.iter() < config.max_iter {
        let plain_only = config.mode == Mode::PlainAdmm
            || (config.boost_iter > 0 && run.iter() >= config.boost_iter);
        let steps = if plain_only { config.max_iter } else { config.i_admm };
        if run.admm_block(steps) {
            status = SolveStatus::Converged;
            break;
        }
        if !plain_only && run.sg_allowed() {
            run.sg_block(lambda, &mut counter)?;
        }
    }

    let (policy, _) = run.extract();
    let occupation = devectorize(&run.admm.z, &run.layout)?;
    Ok(SolveOutcome { policy, occupation, trace: run.trace, status, lambda })
}

/// Optimal cost used as `c*`: backward induction for unconstrained models,
/// otherwise the cost of a plain ADMM run with ten times the budget.
pub fn reference_cost(model: &MdpModel, config: &SolverConfig) -> Result<f64> {
    if !model.is_constrained() {
        return Ok(dp_solve(model)?.1);
    }
    let long = SolverConfig {
        mode: Mode::PlainAdmm,
        max_iter: config.max_iter.saturating_mul(10),
        reference_cost: None,
        stop_on_convergence: false,
        ..config.clone()
    };
    let outcome = solve(model, &long)?;
    Ok(evaluate_expected_cost(model, &outcome.policy))
}

/// First ADMM iterate from which `holds` is true at every later ADMM iterate,
/// or `None` if it fails at the last one.
pub fn definitive_iteration(
    trace: &[IterationRecord],
    holds: impl Fn(&IterationRecord) -> bool,
) -> Option<usize> {
    let admm: Vec<&IterationRecord> = trace.iter().filter(|r| r.phase == Phase::Admm).collect();
    match admm.iter().rposition(|r| !holds(r)) {
        None => admm.first().map(|r| r.iter),
        Some(i) => admm.get(i + 1).map(|r| r.iter),
    }
}

/// Iterations after which each criterion holds definitively; `None` means
/// the budget was exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdIters {
    pub residual: Option<usize>,
    pub cost: Option<usize>,
}

pub fn threshold_iterations(trace: &[IterationRecord], config: &SolverConfig, reference: f64) -> ThresholdIters {
    ThresholdIters {
        residual: definitive_iteration(trace, |r| r.primal_res.is_some_and(|v| v < config.eps_res)),
        cost: definitive_iteration(trace, |r| {
            SolverConfig::relative_gap(r.cost, reference) < config.eps_cost
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub rho: f64,
    pub mode: Mode,
    pub iters: ThresholdIters,
}

/// Runs both modes for every `rho` over the full budget and reports
/// iterations-to-threshold, ordered by `rho` then mode.
pub fn rho_sweep(model: &MdpModel, rhos: &[f64], config: &SolverConfig) -> Result<Vec<SweepRow>> {
    let reference = match config.reference_cost {
        Some(c) => c,
        None => reference_cost(model, config)?,
    };
    let mut rows = Vec::with_capacity(rhos.len() * 2);
    for &rho in rhos {
        for mode in [Mode::PlainAdmm, Mode::Regularized] {
            rows.push(sweep_cell(model, rho, mode, config, reference)?);
        }
    }
    Ok(rows)
}

/// One `(rho, mode)` cell of a sweep.
pub fn sweep_cell(
    model: &MdpModel,
    rho: f64,
    mode: Mode,
    config: &SolverConfig,
    reference: f64,
) -> Result<SweepRow> {
    let cfg = SolverConfig {
        rho,
        mode,
        reference_cost: Some(reference),
        stop_on_convergence: false,
        ..config.clone()
    };
    let outcome = solve(model, &cfg)?;
    Ok(SweepRow { rho, mode, iters: threshold_iterations(&outcome.trace, &cfg, reference) })
}
