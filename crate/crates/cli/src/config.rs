//! Experiment configuration (`linbias.config.v1`).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use linbias::flow::{Integrator, TimeScale};
use linbias::predictors::Kind;
use linbias::tensor::Architecture;
use linbias::{Dataset, Matrix, Task};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONFIG_SCHEMA: &str = "linbias.config.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "$schema", default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub task: Task,
    /// Used by experiments that carry no dataset of their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DataSpec>,
    /// Required when there are experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSpec>,
    #[serde(default)]
    pub experiments: Vec<ExperimentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensing: Option<SensingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSpec {
    Inline(InlineData),
    File(DataFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineData {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

/// Path to a JSON file holding an [`InlineData`] object, relative to the
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFile {
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub alphas: Vec<f64>,
    pub step: f64,
    pub steps: usize,
    pub integrator: Integrator,
    #[serde(default)]
    pub time_scale: TimeScale,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_stop_loss")]
    pub stop_loss: f64,
    #[serde(default)]
    pub record_params: bool,
}

fn default_record_every() -> usize {
    100
}

fn default_stop_loss() -> f64 {
    1e-30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Used in output file names; letters, digits, `-`, `_` and `.` only.
    pub label: String,
    pub arch: Architecture,
    /// Initial directions v̄_l; the run starts at α·v̄_l.
    pub init: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DataSpec>,
    pub predictor: PredictorKind,
    pub check: Check,
    /// Apply the check only at these α; other runs are reported unjudged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_at: Option<Vec<f64>>,
    #[serde(default)]
    pub monitor: MonitorKind,
    /// Also evaluate the singular-vector verdict of a single-point
    /// classification run (needs parameter snapshots, enabled automatically).
    #[serde(default)]
    pub verdict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Minimum ℓ2 interpolant (fully-connected regression, α → 0).
    MinL2,
    /// Minimum ℓ1 interpolant in transformed coordinates (decomposable
    /// regression, α → 0).
    MinL1Transformed,
    /// Minimizer of Q for the given α (real decomposable regression with the
    /// last layer initialized at zero).
    QMinimizer,
    /// Closed-form limit of a two-layer network on one regression point.
    TwoLayerRegression,
    /// Top singular direction for a two-layer network on one labelled point.
    TwoLayerClassification,
    /// Filter-autocorrelation direction of a two-layer conv net with a short
    /// first filter on one labelled point.
    SmallFilterConv,
    /// ℓ2 max-margin direction (fully-connected classification).
    L2Margin,
    /// ℓ1 max-margin direction in transformed coordinates (two-layer
    /// decomposable classification).
    L1MarginTransformed,
    None,
}

impl PredictorKind {
    fn task(self) -> Option<Task> {
        use PredictorKind::*;
        match self {
            MinL2 | MinL1Transformed | QMinimizer | TwoLayerRegression => Some(Task::Regression),
            TwoLayerClassification | SmallFilterConv | L2Margin | L1MarginTransformed => {
                Some(Task::Classification)
            }
            None => Option::None,
        }
    }

    pub fn kind(self) -> Option<Kind> {
        self.task().map(|t| match t {
            Task::Regression => Kind::Point,
            Task::Classification => Kind::Direction,
        })
    }
}

/// How a simulated run is judged against its prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// ‖β(T) − prediction‖ at most this.
    MaxDistance(f64),
    /// ‖β(T) − prediction‖ / ‖prediction‖ at most this.
    MaxRelativeDistance(f64),
    /// Distance between simulated and predicted layer parameters at most this.
    MaxParamDistance(f64),
    /// cos(β(T), prediction) at least this.
    MinCosine(f64),
    /// Stationarity residual of the margin problem non-increasing over the
    /// last `checkpoints` records, and optionally a final-loss bound.
    KktTrend {
        checkpoints: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_loss: Option<f64>,
    },
    /// Same residuals as `kkt_trend`, reported without judging.
    KktInfo { checkpoints: usize },
    /// Record the numbers, judge nothing.
    ReportOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorKind {
    #[default]
    None,
    /// Balance gaps in the orthogonal decomposition of the architecture.
    Balance,
    /// Balance gaps in the singular bases of M(x) for a single data point.
    DataSvdBalance,
    FcBalance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingSpec {
    /// Symmetric, pairwise commuting sensor matrices, each given by rows.
    pub sensors: Vec<Vec<Vec<f64>>>,
    pub y: Vec<f64>,
    pub depth: usize,
    pub alpha: f64,
    /// Largest allowed max_i |⟨A_i, M⟩ − y_i|.
    pub measurement_tolerance: f64,
    /// Largest allowed distance between the eigenvalues of M and the
    /// nuclear-norm oracle.
    pub oracle_tolerance: f64,
}

impl SensingSpec {
    pub fn matrices(&self) -> CliResult<Vec<Matrix>> {
        self.sensors
            .iter()
            .map(|rows| {
                Matrix::from_rows(rows).map_err(|e| CliError::Config(format!("sensor: {e}")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Fail unless the distance to the prediction strictly decreases as α
    /// decreases, for every experiment.
    #[serde(default)]
    pub expect_decreasing: bool,
    /// Optional bound on the distance at the smallest α.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_distance_at_smallest: Option<f64>,
}

/// A config with its datasets loaded and everything cross-checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    /// One dataset per experiment, in order.
    pub datasets: Vec<Dataset>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Resolved> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base)
    }

    /// Loads dataset files relative to `base` and validates the whole config.
    pub fn resolve(self, base: &Path) -> CliResult<Resolved> {
        if let Some(s) = &self.schema {
            if s != CONFIG_SCHEMA {
                return Err(CliError::Config(format!(
                    "unsupported schema {s:?}, expected {CONFIG_SCHEMA:?}"
                )));
            }
        }
        self.validate_flow()?;
        if self.experiments.is_empty() && self.sensing.is_none() {
            return Err(CliError::Config("config has no experiments".into()));
        }
        let mut labels = BTreeSet::new();
        let mut datasets = Vec::new();
        for e in &self.experiments {
            if e.label.is_empty()
                || !e
                    .label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            {
                return Err(CliError::Config(format!("bad label {:?}", e.label)));
            }
            if !labels.insert(e.label.clone()) {
                return Err(CliError::Config(format!("duplicate label {:?}", e.label)));
            }
            let spec = e
                .dataset
                .as_ref()
                .or(self.dataset.as_ref())
                .ok_or_else(|| {
                    CliError::Config(format!("experiment {:?} has no dataset", e.label))
                })?;
            let data = load_data(spec, base, self.task)
                .map_err(|m| CliError::Config(format!("experiment {:?}: {m}", e.label)))?;
            e.validate(self.task, &data)
                .map_err(|m| CliError::Config(format!("experiment {:?}: {m}", e.label)))?;
            datasets.push(data);
        }
        if let Some(s) = &self.sensing {
            if !(s.alpha > 0.0 && s.alpha.is_finite()) {
                return Err(CliError::Config("sensing alpha must be positive".into()));
            }
            if s.depth < 2 {
                return Err(CliError::Config("sensing depth must be at least 2".into()));
            }
            s.matrices()?;
        }
        Ok(Resolved {
            config: self,
            datasets,
        })
    }

    /// The flow settings; only valid after [`ExperimentConfig::resolve`]
    /// when there are experiments.
    pub fn flow(&self) -> &FlowSpec {
        self.flow
            .as_ref()
            .expect("validated config with experiments has flow settings")
    }

    fn validate_flow(&self) -> CliResult<()> {
        let f = match (&self.flow, self.experiments.is_empty()) {
            (Some(f), _) => f,
            (None, true) => return Ok(()),
            (None, false) => return Err(CliError::Config("experiments need flow settings".into())),
        };
        if f.alphas.is_empty() && !self.experiments.is_empty() {
            return Err(CliError::Config("flow.alphas is empty".into()));
        }
        if let Some(a) = f.alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(CliError::Config(format!(
                "initial scale must be positive, got {a}"
            )));
        }
        if !(f.step > 0.0 && f.step.is_finite()) {
            return Err(CliError::Config(format!(
                "step must be positive, got {}",
                f.step
            )));
        }
        if f.steps == 0 || f.record_every == 0 {
            return Err(CliError::Config(
                "steps and record_every must be positive".into(),
            ));
        }
        if !(f.stop_loss > 0.0) {
            return Err(CliError::Config("stop_loss must be positive".into()));
        }
        Ok(())
    }
}

impl ExperimentSpec {
    fn validate(&self, task: Task, data: &Dataset) -> Result<(), String> {
        self.arch.validate().map_err(|e| e.to_string())?;
        self.arch
            .check_params(&self.init)
            .map_err(|e| format!("init: {e}"))?;
        if self.arch.input_dim() != data.d() {
            return Err(format!(
                "architecture takes inputs of length {}, data has {}",
                self.arch.input_dim(),
                data.d()
            ));
        }
        if let Some(t) = self.predictor.task() {
            if t != task {
                return Err(format!(
                    "predictor {:?} does not apply to {task:?}",
                    self.predictor
                ));
            }
        }
        let compatible: Result<(), String> = match (self.check, self.predictor.kind()) {
            (Check::MaxDistance(_) | Check::MaxRelativeDistance(_), k)
                if k != Some(Kind::Point) =>
            {
                Err("distance checks need a point predictor".into())
            }
            (Check::MaxParamDistance(_), _)
                if self.predictor != PredictorKind::TwoLayerRegression =>
            {
                Err("max_param_distance needs the two_layer_regression predictor".into())
            }
            (Check::MinCosine(_), k) if k != Some(Kind::Direction) => {
                Err("min_cosine needs a direction predictor".into())
            }
            (Check::KktTrend { checkpoints, .. } | Check::KktInfo { checkpoints }, _) => {
                if task != Task::Classification {
                    Err("kkt_trend applies to classification only".into())
                } else if checkpoints < 2 {
                    Err("kkt_trend needs at least two checkpoints".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        };
        compatible?;
        if self.verdict && task != Task::Classification {
            return Err("the singular-vector verdict applies to classification only".into());
        }
        Ok(())
    }

    /// Parameter snapshots are needed by the verdict and the KKT trend.
    pub fn needs_params(&self) -> bool {
        self.verdict || matches!(self.check, Check::KktTrend { .. } | Check::KktInfo { .. })
    }
}

fn load_data(spec: &DataSpec, base: &Path, task: Task) -> Result<Dataset, String> {
    let inline = match spec {
        DataSpec::Inline(d) => d.clone(),
        DataSpec::File(f) => {
            let path = base.join(&f.file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            serde_json::from_str::<InlineData>(&text)
                .map_err(|e| format!("{}: {e}", path.display()))?
        }
    };
    Dataset::from_rows(&inline.x, inline.y, task).map_err(|e| e.to_string())
}
