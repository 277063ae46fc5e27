use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use monomdp::dp::dp_solve;
use monomdp::generator::{random_monotone_mdp, GeneratorSpec};
use monomdp::policy::evaluate_expected_cost;
use monomdp::solver::{reference_cost, solve, sweep_cell, Mode, SolveStatus, SolverConfig};
use monomdp::structure::check_monotone_assumptions;
use monomdp::MdpModel;

use crate::args::{BenchArgs, CheckArgs, Cli, Command, GenerateArgs, Reference, SolveArgs};
use crate::error::CliError;
use crate::files::{bench_csv, read_model, to_json, trace_csv, write_file, write_model, BenchRow, PolicyFile};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_BUDGET: u8 = 2;
pub const EXIT_CHECK_FAILED: u8 = 3;

/// Runs one subcommand and returns its exit code; errors map to [`EXIT_ERROR`].
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<u8, CliError> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, out),
        Command::Check(a) => cmd_check(a, out),
        Command::Generate(a) => cmd_generate(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    out.write_fmt(text).and_then(|_| out.write_all(b"\n")).map_err(|e| CliError::io("<stdout>", e))
}

fn resolve_reference(model: &MdpModel, reference: Reference, config: &SolverConfig) -> Result<Option<f64>, CliError> {
    Ok(match reference {
        Reference::None => None,
        Reference::Value(c) => Some(c),
        Reference::Dp if model.is_constrained() => {
            return Err(CliError::Usage("--reference dp needs an unconstrained model".into()))
        }
        Reference::Dp => Some(dp_solve(model)?.1),
        Reference::LongRun => {
            let long = SolverConfig { mode: Mode::PlainAdmm, max_iter: config.max_iter.saturating_mul(10), ..config.clone() };
            let outcome = solve(model, &SolverConfig { stop_on_convergence: false, reference_cost: None, ..long })?;
            Some(evaluate_expected_cost(model, &outcome.policy))
        }
        Reference::Auto => Some(reference_cost(model, config)?),
    })
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let model = read_model(&args.model)?;
    let mut config = args.tuning.config(args.rho, args.mode);
    config.validate()?;
    config.reference_cost = resolve_reference(&model, args.reference, &config)?;
    let outcome = solve(&model, &config)?;
    let cost = evaluate_expected_cost(&model, &outcome.policy);

    create_dir(&args.out)?;
    write_file(&args.out.join("trace.csv"), &trace_csv(&outcome.trace)?)?;
    let policy = PolicyFile::new(&outcome.policy, outcome.status, outcome.trace.len(), cost, outcome.lambda);
    write_file(&args.out.join("policy.json"), &to_json(&policy))?;

    let status = match outcome.status {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIterations => "iteration budget exceeded",
    };
    say(out, format_args!("{status} after {} iterations", outcome.trace.len()))?;
    say(out, format_args!("cost {cost}"))?;
    if let Some(c) = config.reference_cost {
        say(out, format_args!("reference {c} (relative gap {:.3e})", SolverConfig::relative_gap(cost, c)))?;
    }
    Ok(match outcome.status {
        SolveStatus::Converged => EXIT_OK,
        SolveStatus::MaxIterations => EXIT_BUDGET,
    })
}

pub fn cmd_check(args: &CheckArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let model = read_model(&args.model)?;
    let report = check_monotone_assumptions(&model);
    say(out, format_args!("{report}"))?;
    Ok(if report.all_pass() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let spec = GeneratorSpec { cost_scale: args.cost_scale, ..GeneratorSpec::new(args.x, args.u, args.n, args.seed) };
    let model = random_monotone_mdp(&spec)?;
    write_model(&args.out, &model)?;
    say(out, format_args!("wrote {}", args.out.display()))?;
    Ok(EXIT_OK)
}

/// Median with exceeded runs counted as `max_iter + 1`.
fn median(values: &mut [usize]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    if args.rhos.iter().any(|r| !(*r > 0.0)) {
        return Err(CliError::Usage("every rho must be positive".into()));
    }
    let base = args.tuning.config(args.rhos[0], Mode::Regularized);
    base.validate()?;

    let models: Vec<(Option<u64>, MdpModel)> = match (&args.model, args.x, args.u, args.n) {
        (Some(path), ..) => vec![(None, read_model(path)?)],
        (None, Some(x), Some(u), Some(n)) => args
            .seeds
            .par_iter()
            .map(|&seed| Ok((Some(seed), random_monotone_mdp(&GeneratorSpec::new(x, u, n, seed))?)))
            .collect::<Result<_, CliError>>()?,
        _ => return Err(CliError::Usage("bench needs --model or all of --x, --u, --n".into())),
    };
    let references: Vec<f64> = models
        .par_iter()
        .map(|(_, m)| reference_cost(m, &base))
        .collect::<Result<_, _>>()?;

    let cells: Vec<(usize, f64, Mode)> = (0..models.len())
        .flat_map(|i| {
            args.rhos.iter().flat_map(move |&rho| [Mode::PlainAdmm, Mode::Regularized].map(|m| (i, rho, m)))
        })
        .collect();
    let mut rows: Vec<BenchRow> = cells
        .par_iter()
        .map(|&(i, rho, mode)| {
            let row = sweep_cell(&models[i].1, rho, mode, &base, references[i])?;
            Ok(BenchRow { seed: models[i].0, row })
        })
        .collect::<Result<_, CliError>>()?;
    rows.sort_by(|a, b| {
        a.seed
            .cmp(&b.seed)
            .then(a.row.rho.total_cmp(&b.row.rho))
            .then(a.row.mode.cmp(&b.row.mode))
    });

    create_dir(&args.out)?;
    write_file(&args.out.join("table.csv"), &bench_csv(&rows)?)?;

    let exceeded = base.max_iter + 1;
    say(out, format_args!("rho,mode,median_iters_res,median_iters_cost"))?;
    for &rho in &args.rhos {
        for mode in [Mode::PlainAdmm, Mode::Regularized] {
            let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.row.rho == rho && r.row.mode == mode).collect();
            let mut res: Vec<usize> = sel.iter().map(|r| r.row.iters.residual.unwrap_or(exceeded)).collect();
            let mut cost: Vec<usize> = sel.iter().map(|r| r.row.iters.cost.unwrap_or(exceeded)).collect();
            say(out, format_args!("{rho},{mode},{},{}", median(&mut res), median(&mut cost)))?;
        }
    }
    Ok(EXIT_OK)
}
