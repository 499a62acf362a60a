//! Command implementations behind the `qpnet` binary.
//!
//! Each command returns its printed output and exit code instead of printing
//! directly, so the same paths are exercised by tests and by the binary.
//!
//! Exit codes: 0 success, 1 parse/IO, 2 validation, 3 divergence,
//! 4 non-convergence, 5 stability condition not met (`check`).

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dde::{self, DelaySpec, IntegrationConfig, Trajectory};
use crate::error::Error;
use crate::linalg::Vector;
use crate::network::{self, HSelector, NetworkDump, NetworkParams, ProjectionNetwork};
use crate::oracle::{self, KktResiduals, KktSolution};
use crate::problem::{self, QpProblem};
use crate::stability::{self, StabilityReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_UNSTABLE: i32 = 5;

pub const MARGIN_NOTE: &str =
    "margin >= 0: exponential stability condition inapplicable; convergence is empirical";

const DEFAULT_ORACLE_TOL: f64 = 5e-3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Parse(_) => EXIT_PARSE,
            Error::Divergence { .. } => EXIT_DIVERGENCE,
            _ => EXIT_VALIDATION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn parse_error(message: String) -> CliError {
    CliError {
        code: EXIT_PARSE,
        message,
    }
}

/// Printed text plus process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmdOutput {
    pub stdout: String,
    pub code: i32,
}

pub type CmdResult = Result<CmdOutput, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistorySpec {
    pub count: usize,
    pub range: f64,
    pub seed: u64,
}

/// Parameters file. Only the network keys are required; the integration keys
/// are needed by `solve` and `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub alpha: f64,
    #[serde(default)]
    pub gamma: f64,
    pub kappa: f64,
    #[serde(default)]
    pub selector: HSelector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stall_window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<DelaySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histories: Option<HistorySpec>,
    /// Largest accepted distance between a converged state and the oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ParamsFile {
    pub fn network_params(&self) -> Result<NetworkParams, CliError> {
        Ok(NetworkParams::new(self.alpha, self.gamma, self.kappa)?)
    }

    pub fn run_config(&self, seed_override: Option<u64>) -> Result<RunConfig, CliError> {
        let missing = |key: &str| parse_error(format!("parameters file is missing key \"{key}\""));
        let cfg = IntegrationConfig {
            step: self.step.ok_or_else(|| missing("step"))?,
            t_end: self.t_end.ok_or_else(|| missing("t_end"))?,
            converge_tol: self.converge_tol.ok_or_else(|| missing("converge_tol"))?,
            stall_window: self.stall_window.ok_or_else(|| missing("stall_window"))?,
        };
        let delay = self.tau.ok_or_else(|| missing("tau"))?;
        let mut histories = self.histories.ok_or_else(|| missing("histories"))?;
        if let Some(seed) = seed_override {
            histories.seed = seed;
        }
        if histories.count == 0 || !(histories.range.is_finite() && histories.range >= 0.0) {
            return Err(
                Error::Config("histories need count >= 1 and a finite range >= 0".into()).into(),
            );
        }
        cfg.check(&delay)?;
        Ok(RunConfig {
            params: self.network_params()?,
            selector: self.selector,
            cfg,
            delay,
            histories,
            oracle_tol: self.oracle_tol.unwrap_or(DEFAULT_ORACLE_TOL),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: NetworkParams,
    pub selector: HSelector,
    #[serde(flatten)]
    pub cfg: IntegrationConfig,
    #[serde(rename = "tau")]
    pub delay: DelaySpec,
    pub histories: HistorySpec,
    pub oracle_tol: f64,
}

pub fn load_params(path: &Path) -> Result<ParamsFile, CliError> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| parse_error(format!("{}: {e}", path.display())))
}

/// Loads and validates a problem file, returning it with its identifier.
pub fn load_problem_with_id(path: &Path) -> Result<(QpProblem, String), CliError> {
    let file = problem::read_problem_file(path)?;
    let id = file.id.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok((file.into_problem()?, id))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
        .into()
    })
}

pub fn cmd_build(problem_path: &Path, params_path: &Path) -> CmdResult {
    let (problem, _) = load_problem_with_id(problem_path)?;
    let params = load_params(params_path)?;
    let net = network::build_network(&problem, params.network_params()?, params.selector)?;
    Ok(CmdOutput {
        stdout: to_json(&net.to_dump()),
        code: EXIT_OK,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSuggestion {
    pub alpha: f64,
    pub report: StabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutput {
    #[serde(flatten)]
    pub report: StabilityReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SearchOutcome {
    Found(AlphaSuggestion),
    NoneFound(String),
}

/// Where `check` gets its network from.
pub enum NetworkSource<'a> {
    Problem { problem: &'a Path, params: &'a Path },
    Dump(&'a Path),
}

/// Stability report for the configured alpha. `alpha = 0` is accepted here
/// as a boundary probe: `W` does not depend on alpha, so the network is built
/// with a unit placeholder and the margin evaluated at zero.
pub fn cmd_check(source: NetworkSource<'_>, search: bool) -> CmdResult {
    let (net, alpha) = match source {
        NetworkSource::Problem { problem, params } => {
            let (problem, _) = load_problem_with_id(problem)?;
            let file = load_params(params)?;
            let probe = file.alpha == 0.0;
            let alpha_for_build = if probe { 1.0 } else { file.alpha };
            let params = NetworkParams::new(alpha_for_build, file.gamma, file.kappa)?;
            let net = network::build_network(&problem, params, file.selector)?;
            (net, file.alpha)
        }
        NetworkSource::Dump(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            let dump: NetworkDump = serde_json::from_str(&text)
                .map_err(|e| parse_error(format!("{}: {e}", path.display())))?;
            let alpha = dump.params.alpha;
            let mut dump = dump;
            if alpha == 0.0 {
                dump.params.alpha = 1.0;
            }
            (dump.into_network()?, alpha)
        }
    };
    let report = stability::stability_margin_for(&net.w, alpha, net.params.kappa);
    let search = search.then(|| {
        match stability::search_alpha(&net, net.params.kappa, &stability::default_alpha_grid()) {
            Some((alpha, report)) => SearchOutcome::Found(AlphaSuggestion { alpha, report }),
            None => SearchOutcome::NoneFound("none found".into()),
        }
    });
    let code = if report.stable {
        EXIT_OK
    } else {
        EXIT_UNSTABLE
    };
    Ok(CmdOutput {
        stdout: to_json(&CheckOutput { report, search }),
        code,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    #[serde(flatten)]
    pub solution: KktSolution,
    pub residuals: KktResiduals,
}

pub fn run_oracle(problem: &QpProblem) -> Result<OracleReport, CliError> {
    let solution = oracle::solve(problem)?;
    let residuals = oracle::kkt_residuals(problem, &solution)?;
    Ok(OracleReport {
        solution,
        residuals,
    })
}

pub fn cmd_oracle(problem_path: &Path) -> CmdResult {
    let (problem, _) = load_problem_with_id(problem_path)?;
    Ok(CmdOutput {
        stdout: to_json(&run_oracle(&problem)?),
        code: EXIT_OK,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryOutcome {
    pub seed_index: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub final_time: f64,
    pub final_x: Vec<f64>,
    pub final_v: Vec<f64>,
    pub distance_to_oracle: f64,
    /// `None` when the fit is undefined (history already at equilibrium).
    pub fitted_decay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub problem_id: String,
    pub params: RunConfig,
    pub stability: StabilityReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_note: Option<String>,
    pub per_history: Vec<HistoryOutcome>,
    pub converged_count: usize,
    pub all_within_oracle_tol: bool,
    pub oracle: OracleReport,
    pub wall_time_ms: u64,
}

/// Everything a network run produces, before anything is written to disk.
pub struct SolveRun {
    pub report: SolverReport,
    pub trajectories: Vec<Trajectory>,
    pub network: ProjectionNetwork,
}

/// Builds, checks and integrates every history. Histories run in parallel
/// and are reduced in index order.
pub fn run_solve(
    problem: &QpProblem,
    problem_id: &str,
    run: &RunConfig,
    oracle_report: OracleReport,
) -> Result<SolveRun, CliError> {
    let start = Instant::now();
    let net = network::build_network(problem, run.params, run.selector)?;
    let stability = stability::stability_margin(&net);
    let dims = problem.dims();
    let histories = dde::random_histories(
        run.histories.count,
        dims.n,
        dims.h,
        run.histories.range,
        run.histories.seed,
    );
    let trajectories = histories
        .par_iter()
        .map(|h| dde::integrate(&net, &run.delay, h, &run.cfg))
        .collect::<Result<Vec<_>, _>>()?;

    let y_star = oracle_report.solution.stacked();
    let x_star = oracle_report.solution.x();
    let per_history: Vec<HistoryOutcome> = trajectories
        .iter()
        .enumerate()
        .map(|(seed_index, traj)| {
            let y = traj.final_state();
            let (final_x, final_v) = net.split(y);
            let distance = (Vector::from_column_slice(&final_x) - &x_star).norm();
            HistoryOutcome {
                seed_index,
                converged: traj.final_residual() <= run.cfg.converge_tol,
                final_residual: traj.final_residual(),
                final_time: traj.t_last(),
                final_x,
                final_v,
                distance_to_oracle: distance,
                fitted_decay: stability::fit_decay_rate(traj, &y_star).ok(),
            }
        })
        .collect();
    let converged_count = per_history.iter().filter(|h| h.converged).count();
    let all_within_oracle_tol = per_history
        .iter()
        .all(|h| h.converged && h.distance_to_oracle <= run.oracle_tol);

    let report = SolverReport {
        problem_id: problem_id.to_string(),
        params: *run,
        stability,
        stability_note: (!stability.stable).then(|| MARGIN_NOTE.to_string()),
        per_history,
        converged_count,
        all_within_oracle_tol,
        oracle: oracle_report,
        wall_time_ms: start.elapsed().as_millis() as u64,
    };
    Ok(SolveRun {
        report,
        trajectories,
        network: net,
    })
}

pub fn trajectory_csv_path(prefix: &Path, index: usize) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("_history{index:02}.csv"));
    PathBuf::from(name)
}

pub fn report_json_path(prefix: &Path) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push("_report.json");
    PathBuf::from(name)
}

fn prepare_output_dir(prefix: &Path) -> Result<(), CliError> {
    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

pub fn cmd_solve(
    problem_path: &Path,
    params_path: &Path,
    out_prefix: &Path,
    seed: Option<u64>,
) -> CmdResult {
    let (problem, id) = load_problem_with_id(problem_path)?;
    let run = load_params(params_path)?.run_config(seed)?;
    let oracle_report = run_oracle(&problem)?;
    let solved = run_solve(&problem, &id, &run, oracle_report)?;

    prepare_output_dir(out_prefix)?;
    for (i, traj) in solved.trajectories.iter().enumerate() {
        let path = trajectory_csv_path(out_prefix, i);
        let file = File::create(&path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        traj.write_csv(BufWriter::new(file))
            .map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
    }
    let report_json = to_json(&solved.report);
    write_file(&report_json_path(out_prefix), &report_json)?;

    let code = if solved.report.all_within_oracle_tol {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    };
    Ok(CmdOutput {
        stdout: report_json,
        code,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub problem_id: String,
    /// `None` when the oracle finds no feasible KKT point.
    pub x_oracle: Option<Vec<f64>>,
    /// Mean final state over converged histories; `None` if none converged.
    pub x_network: Option<Vec<f64>>,
    pub deltas: Option<Vec<f64>>,
    pub objective_oracle: Option<f64>,
    pub objective_network: Option<f64>,
    pub objective_gap: Option<f64>,
    pub converged_count: usize,
    pub history_count: usize,
    pub oracle_status: String,
    pub network_status: String,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.10}"))
}

impl CompareReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "problem: {}", self.problem_id);
        let _ = writeln!(out, "oracle:  {}", self.oracle_status);
        let _ = writeln!(out, "network: {}", self.network_status);
        let n = self
            .x_oracle
            .as_ref()
            .or(self.x_network.as_ref())
            .map_or(0, |x| x.len());
        let _ = writeln!(
            out,
            "{:>4} {:>18} {:>18} {:>12}",
            "i", "x_oracle", "x_network", "delta"
        );
        for i in 0..n {
            let get = |v: &Option<Vec<f64>>| v.as_ref().map(|x| x[i]);
            let _ = writeln!(
                out,
                "{:>4} {:>18} {:>18} {:>12}",
                i + 1,
                fmt_opt(get(&self.x_oracle)),
                fmt_opt(get(&self.x_network)),
                get(&self.deltas).map_or_else(|| "-".to_string(), |d| format!("{d:.3e}")),
            );
        }
        let _ = writeln!(
            out,
            "objective: oracle {} network {} gap {}",
            fmt_opt(self.objective_oracle),
            fmt_opt(self.objective_network),
            self.objective_gap
                .map_or_else(|| "-".to_string(), |g| format!("{g:.3e}")),
        );
        out
    }
}

/// Oracle and network side by side. When the oracle reports infeasibility
/// the network is still run so both verdicts are shown, and the exit code is 2.
pub fn cmd_compare(
    problem_path: &Path,
    params_path: &Path,
    out_prefix: Option<&Path>,
    seed: Option<u64>,
) -> CmdResult {
    let (problem, id) = load_problem_with_id(problem_path)?;
    let run = load_params(params_path)?.run_config(seed)?;
    let oracle_result = run_oracle(&problem);

    let (report, code) = match oracle_result {
        Ok(oracle_report) => {
            let x_oracle = oracle_report.solution.x_star.clone();
            let f_oracle = oracle_report.solution.objective;
            let solved = run_solve(&problem, &id, &run, oracle_report)?;
            let r = &solved.report;
            let converged: Vec<&HistoryOutcome> =
                r.per_history.iter().filter(|h| h.converged).collect();
            let x_network = (!converged.is_empty()).then(|| {
                let k = converged.len() as f64;
                (0..x_oracle.len())
                    .map(|i| converged.iter().map(|h| h.final_x[i]).sum::<f64>() / k)
                    .collect::<Vec<f64>>()
            });
            let f_network = x_network
                .as_ref()
                .map(|x| problem.objective(&Vector::from_column_slice(x)));
            let deltas = x_network
                .as_ref()
                .map(|x| x.iter().zip(&x_oracle).map(|(a, b)| a - b).collect());
            let code = if r.all_within_oracle_tol {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            };
            let report = CompareReport {
                problem_id: id,
                x_oracle: Some(x_oracle),
                x_network,
                deltas,
                objective_oracle: Some(f_oracle),
                objective_network: f_network,
                objective_gap: f_network.map(|f| f - f_oracle),
                converged_count: r.converged_count,
                history_count: r.per_history.len(),
                oracle_status: "optimal".into(),
                network_status: format!(
                    "{}/{} histories converged",
                    r.converged_count,
                    r.per_history.len()
                ),
            };
            (report, code)
        }
        Err(e) if e.code == EXIT_VALIDATION => {
            let network_status = network_verdict(&problem, &run);
            let report = CompareReport {
                problem_id: id,
                x_oracle: None,
                x_network: None,
                deltas: None,
                objective_oracle: None,
                objective_network: None,
                objective_gap: None,
                converged_count: 0,
                history_count: run.histories.count,
                oracle_status: e.message,
                network_status,
            };
            (report, EXIT_VALIDATION)
        }
        Err(e) => return Err(e),
    };

    if let Some(prefix) = out_prefix {
        prepare_output_dir(prefix)?;
        let mut name = prefix.as_os_str().to_owned();
        name.push("_compare.json");
        write_file(Path::new(&name), &to_json(&report))?;
    }
    Ok(CmdOutput {
        stdout: report.table(),
        code,
    })
}

/// Network-only verdict used when there is no oracle point to compare with.
fn network_verdict(problem: &QpProblem, run: &RunConfig) -> String {
    let net = match network::build_network(problem, run.params, run.selector) {
        Ok(net) => net,
        Err(e) => return format!("not built: {e}"),
    };
    let dims = problem.dims();
    let histories = dde::random_histories(
        run.histories.count,
        dims.n,
        dims.h,
        run.histories.range,
        run.histories.seed,
    );
    let mut converged = 0;
    for h in &histories {
        match dde::integrate(&net, &run.delay, h, &run.cfg) {
            Ok(traj) if traj.final_residual() <= run.cfg.converge_tol => converged += 1,
            Ok(_) => {}
            Err(Error::Divergence { t }) => {
                return format!("diverged at t = {t}; no equilibrium (infeasible)")
            }
            Err(e) => return format!("integration failed: {e}"),
        }
    }
    if converged == 0 {
        format!(
            "0/{} histories reached an equilibrium; no equilibrium (infeasible)",
            histories.len()
        )
    } else {
        format!("{converged}/{} histories converged", histories.len())
    }
}
