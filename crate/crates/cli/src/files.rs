//! Model, policy, trace and benchmark files.
//!
//! Models and policies are JSON documents. Reals are written with 17
//! significant digits so every `f64` reads back bit for bit. Traces and
//! benchmark tables are CSV with empty fields for undefined values.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use ndarray::{Array1, Array3, Array4};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use monomdp::solver::{IterationRecord, Mode, Phase, SolveStatus, SweepRow};
use monomdp::{AverageConstraint, ConditionalPolicy, MdpModel};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintFile {
    /// `[N+1][X][U]`
    pub beta: Vec<Vec<Vec<f64>>>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "X")]
    pub n_states: usize,
    #[serde(rename = "U")]
    pub n_actions: usize,
    #[serde(rename = "N")]
    pub horizon: usize,
    /// 1-based initial state.
    pub x0: usize,
    /// `[N][U][X][X]`
    #[serde(rename = "P")]
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[N][X][U]`
    pub cost: Vec<Vec<Vec<f64>>>,
    pub terminal_cost: Vec<f64>,
    #[serde(default)]
    pub constraints: Vec<ConstraintFile>,
}

fn nested3(a: &Array3<f64>) -> Vec<Vec<Vec<f64>>> {
    a.outer_iter().map(|m| m.outer_iter().map(|r| r.to_vec()).collect()).collect()
}

/// Checks that `v` has the given length, naming the offending path.
fn expect_len<T>(v: &[T], len: usize, path: &str) -> Result<(), String> {
    if v.len() == len {
        Ok(())
    } else {
        Err(format!("{path}: expected {len} entries, found {}", v.len()))
    }
}

fn array3(v: &[Vec<Vec<f64>>], dim: (usize, usize, usize), name: &str) -> Result<Array3<f64>, String> {
    expect_len(v, dim.0, name)?;
    let mut out = Array3::zeros(dim);
    for (i, m) in v.iter().enumerate() {
        expect_len(m, dim.1, &format!("{name}[{i}]"))?;
        for (j, r) in m.iter().enumerate() {
            expect_len(r, dim.2, &format!("{name}[{i}][{j}]"))?;
            for (k, &x) in r.iter().enumerate() {
                out[[i, j, k]] = x;
            }
        }
    }
    Ok(out)
}

impl ModelFile {
    pub fn from_model(model: &MdpModel) -> Self {
        let transitions = model
            .transitions()
            .outer_iter()
            .map(|per_k| per_k.outer_iter().map(|m| m.outer_iter().map(|r| r.to_vec()).collect()).collect())
            .collect();
        Self {
            n_states: model.n_states(),
            n_actions: model.n_actions(),
            horizon: model.horizon(),
            x0: model.initial_state(),
            transitions,
            cost: nested3(model.costs()),
            terminal_cost: model.terminal_cost().to_vec(),
            constraints: model
                .constraints()
                .iter()
                .map(|c| ConstraintFile { beta: nested3(&c.beta), gamma: c.gamma })
                .collect(),
        }
    }

    /// Converts to a validated model; messages name the offending member.
    pub fn to_model(&self) -> Result<MdpModel, String> {
        let (nx, nu, horizon) = (self.n_states, self.n_actions, self.horizon);
        expect_len(&self.transitions, horizon, "P")?;
        let mut trans = Array4::zeros((horizon, nu, nx, nx));
        for (k, per_k) in self.transitions.iter().enumerate() {
            let block = array3(per_k, (nu, nx, nx), &format!("P[{k}]"))?;
            trans.index_axis_mut(ndarray::Axis(0), k).assign(&block);
        }
        let cost = array3(&self.cost, (horizon, nx, nu), "cost")?;
        expect_len(&self.terminal_cost, nx, "terminal_cost")?;
        let constraints = self
            .constraints
            .iter()
            .enumerate()
            .map(|(l, c)| {
                Ok(AverageConstraint {
                    beta: array3(&c.beta, (horizon + 1, nx, nu), &format!("constraints[{l}].beta"))?,
                    gamma: c.gamma,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        MdpModel::new(self.x0, trans, cost, Array1::from(self.terminal_cost.clone()), constraints)
            .map_err(|e| e.to_string())
    }
}

/// Pretty JSON layout with reals printed as `{:.16e}`.
struct ExactFloats<'a>(PrettyFormatter<'a>);

macro_rules! forward {
    ($($name:ident),*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.$name(w)
        })*
    };
}

impl Formatter for ExactFloats<'_> {
    forward!(begin_array, end_array, begin_object, end_object, end_array_value, begin_object_value, end_object_value);

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloats(PrettyFormatter::with_indent(b" ")));
    value.serialize(&mut ser).expect("in-memory serialisation of finite data");
    out.push(b'\n');
    out
}

fn from_json<T: for<'de> Deserialize<'de>>(bytes: &[u8], path: &Path) -> Result<T, CliError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let inner = e.inner();
        CliError::format(
            path,
            format!("at {} (line {}, column {}): {inner}", e.path(), inner.line(), inner.column()),
        )
    })
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_model(path: &Path) -> Result<MdpModel, CliError> {
    let file: ModelFile = from_json(&read(path)?, path)?;
    file.to_model().map_err(|m| CliError::format(path, m))
}

pub fn write_model(path: &Path, model: &MdpModel) -> Result<(), CliError> {
    write_file(path, &to_json(&ModelFile::from_model(model)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    #[serde(rename = "X")]
    pub n_states: usize,
    #[serde(rename = "U")]
    pub n_actions: usize,
    #[serde(rename = "N")]
    pub horizon: usize,
    /// `"converged"` or `"max_iterations"`.
    pub status: String,
    pub iterations: usize,
    /// Expected cost of `theta` from the initial state.
    pub cost: f64,
    pub lambda: f64,
    /// `[N+1][X][U]`, `theta[k][x][u] = Pr(u | x, k)`.
    pub theta: Vec<Vec<Vec<f64>>>,
}

impl PolicyFile {
    pub fn new(policy: &ConditionalPolicy, status: SolveStatus, iterations: usize, cost: f64, lambda: f64) -> Self {
        Self {
            n_states: policy.n_states(),
            n_actions: policy.n_actions(),
            horizon: policy.n_times() - 1,
            status: match status {
                SolveStatus::Converged => "converged",
                SolveStatus::MaxIterations => "max_iterations",
            }
            .to_string(),
            iterations,
            cost,
            lambda,
            theta: nested3(policy.theta()),
        }
    }

    pub fn policy(&self) -> Result<ConditionalPolicy, String> {
        let dim = (self.horizon + 1, self.n_states, self.n_actions);
        let theta = array3(&self.theta, dim, "theta")?;
        ConditionalPolicy::new(theta).map_err(|e| e.to_string())
    }
}

pub fn read_policy(path: &Path) -> Result<PolicyFile, CliError> {
    from_json(&read(path)?, path)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const TRACE_HEADER: [&str; 5] = ["iter", "phase", "cost", "cost_gap", "primal_res"];

pub fn trace_csv(trace: &[IterationRecord]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for r in trace {
        w.write_record([
            r.iter.to_string(),
            r.phase.as_str().to_string(),
            r.cost.to_string(),
            opt(r.cost_gap),
            opt(r.primal_res),
        ])?;
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}

pub fn read_trace(path: &Path) -> Result<Vec<IterationRecord>, CliError> {
    let bytes = read(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header = r.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(CliError::format(path, format!("line 1: unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |field: &str| CliError::format(path, format!("line {line}: invalid {field}"));
        let num = |j: usize, field: &str| -> Result<Option<f64>, CliError> {
            match &rec[j] {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(field)),
            }
        };
        out.push(IterationRecord {
            iter: rec[0].parse().map_err(|_| bad("iter"))?,
            phase: rec[1].parse::<Phase>().map_err(|_| bad("phase"))?,
            cost: num(2, "cost")?.ok_or_else(|| bad("cost"))?,
            cost_gap: num(3, "cost_gap")?,
            primal_res: num(4, "primal_res")?,
        });
    }
    Ok(out)
}

/// One benchmark cell; `seed` is absent when the model came from a file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub seed: Option<u64>,
    pub row: SweepRow,
}

pub const BENCH_HEADER: [&str; 5] = ["rho", "seed", "mode", "iters_res", "iters_cost"];

pub fn bench_csv(rows: &[BenchRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BENCH_HEADER)?;
    let count = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.row.rho.to_string(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.row.mode.as_str().to_string(),
            count(r.row.iters.residual),
            count(r.row.iters.cost),
        ])?;
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}

pub fn read_bench(path: &Path) -> Result<Vec<BenchRow>, CliError> {
    use monomdp::solver::ThresholdIters;
    let bytes = read(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || CliError::format(path, format!("line {}: malformed row", i + 2));
        let count = |s: &str| -> Result<Option<usize>, CliError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad())
            }
        };
        out.push(BenchRow {
            seed: if rec[1].is_empty() { None } else { Some(rec[1].parse().map_err(|_| bad())?) },
            row: SweepRow {
                rho: rec[0].parse().map_err(|_| bad())?,
                mode: rec[2].parse::<Mode>().map_err(|_| bad())?,
                iters: ThresholdIters { residual: count(&rec[3])?, cost: count(&rec[4])? },
            },
        });
    }
    Ok(out)
}
