//! The hyper-parameter grid driver: learning rate × optimizer as the
//! crossed factors, everything else held orthogonal, one train/validation
//! split shared by every cell so results are comparable.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::{split_dataset, Sample};
use crate::detector::{evaluate_dataset, PipelineSettings};
use crate::error::{Error, Result};
use crate::metrics::{Averaging, EvalReport, EvalThresholds};
use crate::netdef::NetConfig;
use crate::trainer::{init_weights, train, LossWeights, OptimizerConfig, OptimizerKind, TrainConfig};

/// The crossed factors: every learning rate is run under every optimizer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridFactors {
    pub learning_rate: Vec<f64>,
    pub optimizer: Vec<String>,
}

/// Settings held constant across all cells.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridOrthogonal {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the split, the weight initialization, and each cell's shuffle.
    pub seed: u64,
    /// Fraction of the data used for training; the rest validates.
    pub train_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub factors: GridFactors,
    pub orthogonal: GridOrthogonal,
    pub thresholds: EvalThresholds,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.factors.learning_rate.is_empty() || self.factors.optimizer.is_empty() {
            return Err(Error::Data("grid factors must not be empty".into()));
        }
        for &lr in &self.factors.learning_rate {
            if !lr.is_finite() || lr < 0.0 {
                return Err(Error::Data(format!("bad learning rate {lr}")));
            }
        }
        for name in &self.factors.optimizer {
            OptimizerKind::parse(name)?;
        }
        if self.orthogonal.epochs == 0 || self.orthogonal.batch_size == 0 {
            return Err(Error::Data("epochs and batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.orthogonal.train_fraction)
            || self.orthogonal.train_fraction == 0.0
        {
            return Err(Error::Data(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.orthogonal.train_fraction
            )));
        }
        self.thresholds.validate()
    }

    pub fn from_json(text: &str) -> Result<GridSpec> {
        let spec: GridSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Identifies one cell of the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellId {
    pub optimizer: String,
    pub learning_rate: f64,
}

impl CellId {
    /// Human-readable label, e.g. `adam @ 1e-3`.
    pub fn label(&self) -> String {
        format!("{} @ {:e}", self.optimizer, self.learning_rate)
    }

    /// Filesystem-safe name, e.g. `adam-1e-3`.
    pub fn slug(&self) -> String {
        format!("{}-{:e}", self.optimizer, self.learning_rate)
    }
}

/// Outcome of one grid cell. A cell that failed carries the error text and
/// whatever part of its loss curve was produced; evaluation problems other
/// than "nothing matched" are also recorded here rather than aborting the
/// whole sweep.
#[derive(Debug, Serialize)]
pub struct RunResult {
    pub cell: CellId,
    pub loss_curve: Vec<f64>,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
    /// True when the failure was numeric (non-finite loss) rather than a
    /// data or configuration problem; drives the caller's exit status.
    #[serde(skip)]
    pub numeric_failure: bool,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Run every cell of the grid over one shared split of `data`.
///
/// `progress` is called with a line of text as each cell finishes.
pub fn run_grid(
    cfg: &NetConfig,
    spec: &GridSpec,
    data: Vec<Sample>,
    averaging: Averaging,
    classes: &[String],
    mut progress: impl FnMut(&str),
) -> Result<Vec<RunResult>> {
    spec.validate()?;
    let (train_set, val_set) =
        split_dataset(data, spec.orthogonal.train_fraction, spec.orthogonal.seed)?;
    let init = init_weights(cfg, spec.orthogonal.seed);
    let settings = PipelineSettings { thresholds: spec.thresholds, ..PipelineSettings::default() };

    let mut results = Vec::new();
    for opt_name in &spec.factors.optimizer {
        for &lr in &spec.factors.learning_rate {
            let cell = CellId { optimizer: opt_name.clone(), learning_rate: lr };
            let started = Instant::now();
            let outcome = run_cell(
                cfg, spec, &cell, init.clone(), &train_set, &val_set, &settings, averaging,
                classes,
            );
            let (loss_curve, report, error, numeric_failure) = match outcome {
                Ok((curve, report)) => (curve, Some(report), None, false),
                Err((curve, e)) => {
                    let numeric = matches!(e, Error::NonFiniteLoss { .. });
                    (curve, None, Some(e.to_string()), numeric)
                }
            };
            let result = RunResult {
                cell,
                loss_curve,
                report,
                error,
                numeric_failure,
                wall_time: started.elapsed(),
            };
            progress(&describe(&result));
            results.push(result);
        }
    }
    Ok(results)
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &NetConfig,
    spec: &GridSpec,
    cell: &CellId,
    init: crate::netdef::ModelWeights<f32>,
    train_set: &[Sample],
    val_set: &[Sample],
    settings: &PipelineSettings,
    averaging: Averaging,
    classes: &[String],
) -> std::result::Result<(Vec<f64>, EvalReport), (Vec<f64>, Error)> {
    let kind = OptimizerKind::parse(&cell.optimizer).map_err(|e| (Vec::new(), e))?;
    let optimizer = OptimizerConfig {
        kind,
        learning_rate: cell.learning_rate,
        ..OptimizerConfig::sgd(0.0)
    };
    let tc = TrainConfig {
        epochs: spec.orthogonal.epochs,
        batch_size: spec.orthogonal.batch_size,
        optimizer,
        seed: spec.orthogonal.seed,
        loss_weights: LossWeights::default(),
    };
    let (weights, curve) = train(cfg, init, train_set, &tc).map_err(|e| (Vec::new(), e))?;
    match evaluate_dataset(cfg, &weights, val_set, settings, averaging, classes) {
        Ok(report) => Ok((curve, report)),
        Err(e) => Err((curve, e)),
    }
}

fn fmt_rate(r: Option<f64>) -> String {
    match r {
        Some(v) => format!("{v:.4}"),
        None => "-".to_string(),
    }
}

/// One-line summary of a finished cell.
pub fn describe(r: &RunResult) -> String {
    match (&r.report, &r.error) {
        (Some(rep), _) => format!(
            "{:<14} final loss {:.4}  f1 {}  not detected {}/{}  [{:.1?}]",
            r.cell.label(),
            r.loss_curve.last().copied().unwrap_or(f64::NAN),
            fmt_rate(rep.f1),
            rep.not_detected,
            rep.matched() + rep.not_detected as u64,
            r.wall_time,
        ),
        (None, Some(e)) => format!("{:<14} failed: {e}", r.cell.label()),
        (None, None) => format!("{:<14} produced no result", r.cell.label()),
    }
}

/// Side-by-side comparison table over all cells.
pub fn render_grid_table(results: &[RunResult]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<11}{:<10}{:>11}{:>10}{:>11}{:>8}{:>10}{:>9}{:>14}\n",
        "Optimizer", "LR", "Final loss", "Accuracy", "Precision", "Recall", "F1-score",
        "Avg IOU", "Not detected"
    ));
    for r in results {
        let fl = r
            .loss_curve
            .last()
            .map(|l| format!("{l:.4}"))
            .unwrap_or_else(|| "-".into());
        match &r.report {
            Some(rep) => out.push_str(&format!(
                "{:<11}{:<10}{:>11}{:>10}{:>11}{:>8}{:>10}{:>9}{:>14}\n",
                r.cell.optimizer,
                format!("{:e}", r.cell.learning_rate),
                fl,
                fmt_rate(rep.accuracy),
                fmt_rate(rep.precision),
                fmt_rate(rep.recall),
                fmt_rate(rep.f1),
                fmt_rate(rep.average_iou),
                rep.not_detected,
            )),
            None => out.push_str(&format!(
                "{:<11}{:<10}{:>11}{:>10}{:>11}{:>8}{:>10}{:>9}{:>14}  {}\n",
                r.cell.optimizer,
                format!("{:e}", r.cell.learning_rate),
                fl,
                "-",
                "-",
                "-",
                "-",
                "-",
                "-",
                r.error.as_deref().unwrap_or(""),
            )),
        }
    }
    out
}
