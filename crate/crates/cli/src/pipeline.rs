//! The four commands, as functions returning the documents they write.

use std::num::NonZeroUsize;
use std::path::Path;

use linbias::decomp::{ComplexMatrix, Cplx, OrthoDecomposition};
use linbias::flow::{self, FlowConfig, Monitor, RunStatus, Trajectory};
use linbias::predictors::{self, Kind, Prediction, SensingLimit};
use linbias::solvers::{cosine, dist, norm, normalize};
use linbias::tensor::Architecture;
use linbias::{Dataset, Error};
use serde::{Deserialize, Serialize};

use crate::config::{Check, ExperimentSpec, MonitorKind, PredictorKind, Resolved, SensingSpec};
use crate::error::{CliError, CliResult};

pub const FINAL_STATE_SCHEMA: &str = "linbias.final_state.v1";
pub const PREDICTIONS_SCHEMA: &str = "linbias.predictions.v1";
pub const REPORT_SCHEMA: &str = "linbias.report.v1";
pub const SWEEP_SCHEMA: &str = "linbias.sweep.v1";

/// One simulated (experiment, α) pair.
#[derive(Debug, Clone)]
pub struct Run {
    pub experiment: usize,
    pub label: String,
    pub alpha: f64,
    pub trajectory: Trajectory,
}

impl Run {
    pub fn csv_name(&self) -> String {
        csv_name(&self.label, self.alpha)
    }
}

pub fn csv_name(label: &str, alpha: f64) -> String {
    format!("{label}_alpha-{alpha}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalStates {
    pub schema: String,
    pub config: String,
    pub runs: Vec<FinalState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalState {
    pub label: String,
    pub alpha: f64,
    pub trajectory: String,
    pub status: String,
    pub steps: usize,
    pub t: f64,
    pub loss: f64,
    pub beta: Vec<f64>,
    pub params: Vec<Vec<f64>>,
    pub max_diag_drift: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predictions {
    pub schema: String,
    pub config: String,
    pub runs: Vec<PredictedRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensing: Option<SensingOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictedRun {
    pub label: String,
    pub alpha: f64,
    pub prediction: Prediction,
    /// Predicted layer parameters, where the predictor gives them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingOut {
    pub alpha: f64,
    pub depth: usize,
    /// Rows of M∞.
    pub m: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub measurement_residual: f64,
    /// Minimum nuclear norm solution, as eigenvalues in the same basis.
    pub oracle_eigenvalues: Vec<f64>,
    pub oracle_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema: String,
    pub config: String,
    pub passed: bool,
    pub runs: Vec<RunReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensing: Option<SensingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub label: String,
    pub alpha: f64,
    pub theorem: Option<String>,
    pub check: Check,
    pub status: String,
    pub steps: usize,
    pub final_loss: f64,
    pub max_diag_drift: f64,
    /// ‖β(T) − prediction‖ for points; for directions the same distance
    /// after normalizing both.
    pub distance: Option<f64>,
    pub cosine: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kkt_residuals: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict_residuals: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict_strictly_decreasing: Option<bool>,
    /// None for report-only checks.
    pub passed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingReport {
    pub measurement_residual: f64,
    pub oracle_distance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub schema: String,
    pub config: String,
    pub passed: bool,
    pub series: Vec<SweepSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSeries {
    pub label: String,
    /// Descending.
    pub alphas: Vec<f64>,
    pub distances: Vec<f64>,
    pub strictly_decreasing: bool,
    pub passed: bool,
}

fn status_name(s: RunStatus) -> String {
    match s {
        RunStatus::Converged => "converged".into(),
        RunStatus::StepBudget => "step_budget".into(),
    }
}

fn config_err(label: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("experiment {label:?}: {msg}"))
}

fn decomposition(e: &ExperimentSpec) -> CliResult<OrthoDecomposition> {
    OrthoDecomposition::for_architecture(&e.arch).map_err(|err| config_err(&e.label, err))
}

fn single_point(e: &ExperimentSpec, data: &Dataset) -> CliResult<(Vec<f64>, f64)> {
    if data.n() != 1 || e.arch.depth() != 2 {
        return Err(config_err(
            &e.label,
            format!(
                "{:?} needs a two-layer network and one data point",
                e.predictor
            ),
        ));
    }
    Ok((data.point(0).to_vec(), data.y()[0]))
}

fn monitor(e: &ExperimentSpec, data: &Dataset) -> CliResult<Monitor> {
    Ok(match e.monitor {
        MonitorKind::None => Monitor::None,
        MonitorKind::Balance => Monitor::Balance(decomposition(e)?),
        MonitorKind::DataSvdBalance => {
            if data.n() != 1 || e.arch.depth() != 2 {
                return Err(config_err(
                    &e.label,
                    "data_svd_balance needs a two-layer network and one data point",
                ));
            }
            let sv = predictors::data_svd(&e.arch, data.point(0))?;
            Monitor::BasisBalance(vec![sv.u, sv.v])
        }
        MonitorKind::FcBalance => {
            if !matches!(e.arch, Architecture::FullyConnected { .. }) {
                return Err(config_err(
                    &e.label,
                    "fc_balance needs a fully-connected network",
                ));
            }
            Monitor::FcBalance
        }
    })
}

fn flow_config(res: &Resolved, k: usize, alpha: f64) -> CliResult<FlowConfig> {
    let f = res.config.flow();
    let e = &res.config.experiments[k];
    let mut cfg = FlowConfig::new(alpha, e.init.clone());
    cfg.integrator = f.integrator;
    cfg.step = f.step;
    cfg.max_steps = f.steps;
    cfg.stop_loss = f.stop_loss;
    cfg.record_every = f.record_every;
    cfg.time_scale = f.time_scale;
    cfg.record_params = f.record_params || e.needs_params();
    cfg.monitor = monitor(e, &res.datasets[k])?;
    Ok(cfg)
}

fn workers(jobs: usize) -> usize {
    std::thread::available_parallelism()
        .map(NonZeroUsize::get)
        .unwrap_or(1)
        .min(jobs)
        .max(1)
}

/// Runs `f` over `0..jobs` on scoped threads and returns the results in
/// index order.
fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(jobs: usize, f: F) -> Vec<T> {
    let w = workers(jobs);
    let mut out: Vec<(usize, T)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..w)
            .map(|t| {
                let f = &f;
                scope.spawn(move || (t..jobs).step_by(w).map(|i| (i, f(i))).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, v)| v).collect()
}

fn jobs(res: &Resolved) -> Vec<(usize, f64)> {
    (0..res.config.experiments.len())
        .flat_map(|k| res.config.flow().alphas.iter().map(move |&a| (k, a)))
        .collect()
}

/// Simulates every (experiment, α) pair.
pub fn simulate(res: &Resolved) -> CliResult<Vec<Run>> {
    let jobs = jobs(res);
    let results = parallel_map(jobs.len(), |i| {
        let (k, alpha) = jobs[i];
        let e = &res.config.experiments[k];
        let trajectory = flow_config(res, k, alpha)
            .and_then(|cfg| Ok(flow::run(&e.arch, &res.datasets[k], &cfg)?))
            .map_err(|err| err.in_run(&e.label, alpha))?;
        Ok(Run {
            experiment: k,
            label: e.label.clone(),
            alpha,
            trajectory,
        })
    });
    results.into_iter().collect()
}

pub fn final_states(res: &Resolved, runs: &[Run]) -> FinalStates {
    FinalStates {
        schema: FINAL_STATE_SCHEMA.into(),
        config: res.config.name.clone(),
        runs: runs
            .iter()
            .map(|r| {
                let last = r.trajectory.last();
                FinalState {
                    label: r.label.clone(),
                    alpha: r.alpha,
                    trajectory: r.csv_name(),
                    status: status_name(r.trajectory.status),
                    steps: r.trajectory.steps,
                    t: last.t,
                    loss: last.loss,
                    beta: last.beta.clone(),
                    params: r.trajectory.final_net.params.clone(),
                    max_diag_drift: r.trajectory.max_diag_drift(),
                    saturated: r.trajectory.saturated,
                }
            })
            .collect(),
    }
}

/// Initial-direction weights η̄ for the Q predictor: the first L − 1 layers
/// must share |U_lᵀv̄_l| and the last must vanish.
fn q_weights(e: &ExperimentSpec, dec: &OrthoDecomposition) -> CliResult<Vec<f64>> {
    if !dec.is_real() {
        return Err(config_err(
            &e.label,
            "q_minimizer needs a real decomposition",
        ));
    }
    let etas = dec.transform(&e.init)?;
    let last = etas.last().expect("at least two layers");
    if last.iter().any(|z| z.abs() > 1e-14) {
        return Err(config_err(
            &e.label,
            "q_minimizer needs the last layer initialized at zero",
        ));
    }
    let first: Vec<f64> = etas[0].iter().map(|z| z.abs()).collect();
    for eta in &etas[1..etas.len() - 1] {
        if eta
            .iter()
            .zip(&first)
            .any(|(z, f)| (z.abs() - f).abs() > 1e-12 * (1.0 + f))
        {
            return Err(config_err(
                &e.label,
                "q_minimizer needs equal |U_lᵀv̄_l| across the first L − 1 layers",
            ));
        }
    }
    Ok(first)
}

fn predict_one(
    e: &ExperimentSpec,
    data: &Dataset,
    alpha: f64,
) -> CliResult<Option<(Prediction, Option<Vec<Vec<f64>>>)>> {
    let (x, y) = (data.x(), data.y());
    let p = match e.predictor {
        PredictorKind::None => return Ok(None),
        PredictorKind::MinL2 => predictors::predict_min_l2(x, y)?,
        PredictorKind::MinL1Transformed => {
            predictors::predict_min_l1_transformed(&decomposition(e)?, x, y)?
        }
        PredictorKind::QMinimizer => {
            let dec = decomposition(e)?;
            let w = q_weights(e, &dec)?;
            predictors::predict_q_minimizer(&dec, e.arch.depth(), alpha, &w, x, y)?.0
        }
        PredictorKind::TwoLayerRegression => {
            let (xp, yp) = single_point(e, data)?;
            let (p, lim) = predictors::predict_two_layer_regression(
                &e.arch, &xp, yp, &e.init[0], &e.init[1], alpha,
            )?;
            return Ok(Some((p, Some(vec![lim.v1, lim.v2]))));
        }
        PredictorKind::TwoLayerClassification => {
            let (xp, yp) = single_point(e, data)?;
            predictors::predict_two_layer_classification(&e.arch, &xp, yp)?.0
        }
        PredictorKind::SmallFilterConv => {
            let (xp, yp) = single_point(e, data)?;
            match &e.arch {
                Architecture::Convolutional { filters, .. } => {
                    predictors::conv_small_filter_direction(&xp, yp, filters[0])?
                }
                _ => {
                    return Err(config_err(
                        &e.label,
                        "small_filter_conv needs a conv network",
                    ))
                }
            }
        }
        PredictorKind::L2Margin => predictors::predict_l2_margin(x, y)?,
        PredictorKind::L1MarginTransformed => {
            if e.arch.depth() != 2 {
                return Err(config_err(
                    &e.label,
                    "l1_margin_transformed needs two layers",
                ));
            }
            predictors::predict_l1_margin_transformed(&decomposition(e)?, x, y)?
        }
    };
    Ok(Some((p, None)))
}

fn sensing_prediction(s: &SensingSpec) -> CliResult<(SensingLimit, SensingOut)> {
    let sensors = s.matrices()?;
    let lim = predictors::matrix_sensing_limit(&sensors, &s.y, s.alpha, s.depth)?;
    let oracle = predictors::min_l1_interpolant_a(&lim.eigenvalues, &s.y, None)?;
    let out = SensingOut {
        alpha: s.alpha,
        depth: s.depth,
        m: lim.m.to_rows(),
        eigenvalues: lim.rho.clone(),
        measurement_residual: lim.measurement_residual,
        oracle_distance: dist(&lim.rho, &oracle),
        oracle_eigenvalues: oracle,
    };
    Ok((lim, out))
}

/// Predictions for every (experiment, α) pair with a predictor, plus the
/// sensing limit if configured.
pub fn predict(res: &Resolved) -> CliResult<Predictions> {
    let mut runs = Vec::new();
    for (k, alpha) in jobs(res) {
        let e = &res.config.experiments[k];
        if let Some((prediction, params)) =
            predict_one(e, &res.datasets[k], alpha).map_err(|err| err.in_run(&e.label, alpha))?
        {
            runs.push(PredictedRun {
                label: e.label.clone(),
                alpha,
                prediction,
                params,
            });
        }
    }
    let sensing = match &res.config.sensing {
        Some(s) => Some(sensing_prediction(s)?.1),
        None => None,
    };
    Ok(Predictions {
        schema: PREDICTIONS_SCHEMA.into(),
        config: res.config.name.clone(),
        runs,
        sensing,
    })
}

/// How far a terminal β is from a prediction.
pub fn compare_vectors(beta: &[f64], prediction: &Prediction) -> CliResult<(f64, Option<f64>)> {
    if beta.len() != prediction.value.len() {
        return Err(CliError::from(Error::Shape(format!(
            "trajectory has {} coefficients, prediction has {}",
            beta.len(),
            prediction.value.len()
        ))));
    }
    match prediction.kind {
        Kind::Point => Ok((dist(beta, &prediction.value), None)),
        Kind::Direction => {
            let (b, p) = match (normalize(beta), normalize(&prediction.value)) {
                (Some(b), Some(p)) => (b, p),
                _ => {
                    return Err(CliError::from(Error::Precondition(
                        "cannot compare directions of a zero vector".into(),
                    )))
                }
            };
            Ok((dist(&b, &p), cosine(&b, &p)))
        }
    }
}

/// Stationarity residual of the margin problem at each of the last `k`
/// records, in transformed coordinates where the architecture has them.
fn kkt_trend(
    e: &ExperimentSpec,
    data: &Dataset,
    traj: &Trajectory,
    k: usize,
) -> CliResult<Vec<f64>> {
    let recs = &traj.records[traj.records.len().saturating_sub(k)..];
    let dec = OrthoDecomposition::for_architecture(&e.arch).ok();
    recs.iter()
        .map(|r| {
            let rep = match &dec {
                Some(dec) => {
                    let params = r.params.as_ref().expect("parameter snapshots recorded");
                    let rho = dec.rho(params)?;
                    predictors::kkt_residual_maxmargin(
                        &rho,
                        &dec.s,
                        data.x(),
                        data.y(),
                        e.arch.depth(),
                    )?
                }
                None => {
                    let rho: Vec<Cplx> = r.beta.iter().map(|&b| Cplx::real(b)).collect();
                    let id = ComplexMatrix::identity(rho.len());
                    predictors::kkt_residual_maxmargin(&rho, &id, data.x(), data.y(), 1)?
                }
            };
            Ok(rep.worst())
        })
        .collect()
}

fn judge(res: &Resolved, run: &Run, prediction: Option<&PredictedRun>) -> CliResult<RunReport> {
    let e = &res.config.experiments[run.experiment];
    let data = &res.datasets[run.experiment];
    let traj = &run.trajectory;
    let last = traj.last();
    let mut report = RunReport {
        label: run.label.clone(),
        alpha: run.alpha,
        theorem: prediction.map(|p| p.prediction.theorem.clone()),
        check: e.check,
        status: status_name(traj.status),
        steps: traj.steps,
        final_loss: last.loss,
        max_diag_drift: traj.max_diag_drift(),
        distance: None,
        cosine: None,
        param_distance: None,
        kkt_residuals: None,
        verdict_residuals: None,
        verdict_strictly_decreasing: None,
        passed: None,
    };
    if let Some(p) = prediction {
        let (d, c) = compare_vectors(&last.beta, &p.prediction)?;
        report.distance = Some(d);
        report.cosine = c;
        if let Some(params) = &p.params {
            let sim: Vec<f64> = traj.final_net.params.concat();
            report.param_distance = Some(dist(&sim, &params.concat()));
        }
    }
    if e.verdict {
        let v = predictors::singular_direction_verdict(traj, data, &e.arch)?;
        report.verdict_residuals = Some(v.checkpoints.iter().map(|c| c.1).collect());
        report.verdict_strictly_decreasing = Some(v.strictly_decreasing);
    }
    let verdict_ok = report.verdict_strictly_decreasing.unwrap_or(true);
    let rel = prediction.map(|p| report.distance.unwrap_or(f64::NAN) / norm(&p.prediction.value));
    let passed = match e.check {
        Check::MaxDistance(tol) => Some(report.distance.is_some_and(|d| d <= tol) && verdict_ok),
        Check::MaxRelativeDistance(tol) => Some(rel.is_some_and(|r| r <= tol) && verdict_ok),
        Check::MaxParamDistance(tol) => {
            Some(report.param_distance.is_some_and(|d| d <= tol) && verdict_ok)
        }
        Check::KktInfo { checkpoints } => {
            report.kkt_residuals = Some(kkt_trend(e, data, traj, checkpoints)?);
            None
        }
        Check::MinCosine(tol) => Some(report.cosine.is_some_and(|c| c >= tol) && verdict_ok),
        Check::KktTrend {
            checkpoints,
            max_loss,
        } => {
            let r = kkt_trend(e, data, traj, checkpoints)?;
            let trend = r.len() == checkpoints && r.windows(2).all(|w| w[1] <= w[0]);
            report.kkt_residuals = Some(r);
            let loss_ok = max_loss.is_none_or(|m| last.loss <= m);
            Some(trend && loss_ok && verdict_ok)
        }
        Check::ReportOnly => None,
    };
    let judged = e.judge_at.as_ref().is_none_or(|at| at.contains(&run.alpha));
    report.passed = passed.filter(|_| judged);
    Ok(report)
}

/// Compares every run with its prediction.
pub fn compare(res: &Resolved, runs: &[Run], preds: &Predictions) -> CliResult<Report> {
    let mut out = Vec::new();
    for run in runs {
        let p = preds
            .runs
            .iter()
            .find(|p| p.label == run.label && p.alpha == run.alpha);
        out.push(judge(res, run, p)?);
    }
    let sensing = match (&res.config.sensing, &preds.sensing) {
        (Some(spec), Some(s)) => Some(SensingReport {
            measurement_residual: s.measurement_residual,
            oracle_distance: s.oracle_distance,
            passed: s.measurement_residual <= spec.measurement_tolerance
                && s.oracle_distance <= spec.oracle_tolerance,
        }),
        _ => None,
    };
    let passed =
        out.iter().all(|r| r.passed != Some(false)) && sensing.as_ref().is_none_or(|s| s.passed);
    Ok(Report {
        schema: REPORT_SCHEMA.into(),
        config: res.config.name.clone(),
        passed,
        runs: out,
        sensing,
    })
}

/// Names of the failed checks in a report.
pub fn failures(report: &Report) -> Vec<String> {
    let mut v: Vec<String> = report
        .runs
        .iter()
        .filter(|r| r.passed == Some(false))
        .map(|r| format!("{} (alpha = {})", r.label, r.alpha))
        .collect();
    if report.sensing.as_ref().is_some_and(|s| !s.passed) {
        v.push("sensing".into());
    }
    v
}

/// Distance to the prediction across the α grid, per experiment.
pub fn sweep(res: &Resolved, runs: &[Run], preds: &Predictions) -> CliResult<(Sweep, String)> {
    let spec = res.config.sweep.unwrap_or(crate::config::SweepSpec {
        expect_decreasing: false,
        max_distance_at_smallest: None,
    });
    let d = runs
        .first()
        .map_or(0, |r| r.trajectory.terminal_beta().len());
    let mut csv = String::from("label,alpha");
    for j in 1..=d {
        csv.push_str(&format!(",beta_{j}"));
    }
    csv.push_str(",distance\n");
    let mut series = Vec::new();
    for e in &res.config.experiments {
        let mut rows: Vec<(f64, &Run, f64)> = Vec::new();
        for r in runs.iter().filter(|r| r.label == e.label) {
            let p = preds
                .runs
                .iter()
                .find(|p| p.label == r.label && p.alpha == r.alpha)
                .ok_or_else(|| config_err(&e.label, "sweep needs a predictor"))?;
            let (dist, _) = compare_vectors(r.trajectory.terminal_beta(), &p.prediction)?;
            rows.push((r.alpha, r, dist));
        }
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (alpha, r, dist) in &rows {
            csv.push_str(&format!("{},{alpha:.16e}", r.label));
            for b in r.trajectory.terminal_beta() {
                csv.push_str(&format!(",{b:.16e}"));
            }
            csv.push_str(&format!(",{dist:.16e}\n"));
        }
        let distances: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let strictly_decreasing = distances.windows(2).all(|w| w[1] < w[0]);
        let small_ok = spec
            .max_distance_at_smallest
            .is_none_or(|m| distances.last().is_some_and(|&d| d <= m));
        series.push(SweepSeries {
            label: e.label.clone(),
            alphas: rows.iter().map(|r| r.0).collect(),
            passed: (strictly_decreasing || !spec.expect_decreasing) && small_ok,
            strictly_decreasing,
            distances,
        });
    }
    let passed = series.iter().all(|s| s.passed);
    Ok((
        Sweep {
            schema: SWEEP_SCHEMA.into(),
            config: res.config.name.clone(),
            passed,
            series,
        },
        csv,
    ))
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    write(dir, name, &s)
}

fn prepare(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_runs(dir: &Path, res: &Resolved, runs: &[Run]) -> CliResult<()> {
    for r in runs {
        write(dir, &r.csv_name(), &r.trajectory.to_csv())?;
    }
    write_json(dir, "final_state.json", &final_states(res, runs))
}

pub fn cmd_simulate(res: &Resolved, out: &Path) -> CliResult<Vec<Run>> {
    if res.config.experiments.is_empty() {
        return Err(CliError::Config("nothing to simulate".into()));
    }
    prepare(out)?;
    let runs = simulate(res)?;
    write_runs(out, res, &runs)?;
    Ok(runs)
}

pub fn cmd_predict(res: &Resolved, out: &Path) -> CliResult<Predictions> {
    prepare(out)?;
    let p = predict(res)?;
    write_json(out, "predictions.json", &p)?;
    Ok(p)
}

/// Simulates, predicts and writes `report.json`. The report is returned
/// whether or not every run passed.
pub fn run_compare(res: &Resolved, out: &Path) -> CliResult<Report> {
    prepare(out)?;
    let runs = if res.config.experiments.is_empty() {
        Vec::new()
    } else {
        let r = simulate(res)?;
        write_runs(out, res, &r)?;
        r
    };
    let preds = cmd_predict(res, out)?;
    let report = compare(res, &runs, &preds)?;
    write_json(out, "report.json", &report)?;
    Ok(report)
}

/// [`run_compare`], failing with [`CliError::ComparisonFailed`] on any miss.
pub fn cmd_compare(res: &Resolved, out: &Path) -> CliResult<Report> {
    let report = run_compare(res, out)?;
    report_outcome(report)
}

pub fn report_outcome(report: Report) -> CliResult<Report> {
    if report.passed {
        Ok(report)
    } else {
        Err(CliError::ComparisonFailed(failures(&report)))
    }
}

pub fn run_sweep(res: &Resolved, out: &Path) -> CliResult<Sweep> {
    let runs = cmd_simulate(res, out)?;
    let preds = cmd_predict(res, out)?;
    let (sw, csv) = sweep(res, &runs, &preds)?;
    write(out, "sweep.csv", &csv)?;
    write_json(out, "sweep.json", &sw)?;
    Ok(sw)
}

pub fn cmd_sweep(res: &Resolved, out: &Path) -> CliResult<Sweep> {
    sweep_outcome(run_sweep(res, out)?)
}

pub fn sweep_outcome(sw: Sweep) -> CliResult<Sweep> {
    if sw.passed {
        Ok(sw)
    } else {
        Err(CliError::ComparisonFailed(
            sw.series
                .iter()
                .filter(|s| !s.passed)
                .map(|s| s.label.clone())
                .collect(),
        ))
    }
}
