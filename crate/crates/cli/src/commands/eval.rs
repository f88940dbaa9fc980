//! `eval`: run the detection pipeline over a labeled directory and write
//! the evaluation report.

use std::fs;

use sungold::dataset::{index_directory, load_all};
use sungold::detector::{evaluate_dataset, PipelineSettings};
use sungold::metrics::{render_report, Averaging};

use crate::common::{self, data, CliResult};
use crate::EvalArgs;

pub fn run(args: EvalArgs) -> CliResult<()> {
    let settings = PipelineSettings {
        thresholds: common::thresholds(args.score_thresh, args.iou_thresh)?,
        ..PipelineSettings::default()
    };
    let cfg = common::load_netdef(&args.cfg)?;
    let table = common::load_classes(&args.classes, &cfg)?;
    let weights = common::load_model(&args.weights, &cfg)?;

    let index = index_directory(&args.images, &args.labels)?;
    for w in &index.warnings {
        eprintln!("warning: {w}");
    }
    if !index.warnings.is_empty() {
        eprintln!("warning: {} unpaired files skipped", index.warnings.len());
    }
    if index.entries.is_empty() {
        return Err(data("no paired image/label files found"));
    }

    let samples = load_all(&index, &table, cfg.input_w)?;
    let averaging = if args.micro_average { Averaging::Micro } else { Averaging::Macro };
    let report = evaluate_dataset(&cfg, &weights, &samples, &settings, averaging, table.names())?;

    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    fs::write(&args.report, json).map_err(|e| data(format!("{}: {e}", args.report.display())))?;
    print!("{}", render_report(&report));
    Ok(())
}
