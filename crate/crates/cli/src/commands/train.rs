//! `train`: fit a model from scratch on a labeled directory and save the
//! weights plus a per-epoch loss log.

use std::fs;
use std::io::Write;

use sungold::dataset::{index_directory, load_all, ClassTable};
use sungold::netdef::save_weights;
use sungold::trainer::{init_weights, train, LossWeights, OptimizerConfig, TrainConfig};

use crate::common::{self, data, usage, CliResult};
use crate::{OptimizerArg, TrainArgs};

pub fn run(args: TrainArgs) -> CliResult<()> {
    if !args.lr.is_finite() || args.lr < 0.0 {
        return Err(usage(format!("--lr must be finite and non-negative, got {}", args.lr)));
    }
    if args.batch == 0 {
        return Err(usage("--batch must be at least 1"));
    }
    let cfg = common::load_netdef(&args.cfg)?;
    let n_classes = cfg.num_classes()?;
    // Annotations carry class ids only, so training needs no name file;
    // a placeholder table provides the id range check.
    let table = ClassTable::new((0..n_classes).map(|i| format!("class-{i}")).collect())?;

    let index = index_directory(&args.images, &args.labels)?;
    for w in &index.warnings {
        eprintln!("warning: {w}");
    }
    if index.entries.is_empty() {
        return Err(data("no paired image/label files found"));
    }
    let samples = load_all(&index, &table, cfg.input_w)?;

    let optimizer = match args.optimizer {
        OptimizerArg::Adam => OptimizerConfig::adam(args.lr),
        OptimizerArg::Sgd => OptimizerConfig::sgd(args.lr),
    };
    let tc = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        optimizer,
        seed: args.seed,
        loss_weights: LossWeights::default(),
    };
    let init = init_weights(&cfg, args.seed);
    let (weights, curve) = train(&cfg, init, &samples, &tc)?;

    fs::write(&args.out_weights, save_weights(&weights))
        .map_err(|e| data(format!("{}: {e}", args.out_weights.display())))?;

    let mut log = Vec::new();
    for (epoch, loss) in curve.iter().enumerate() {
        writeln!(log, "{}", serde_json::json!({ "epoch": epoch + 1, "loss": loss }))
            .expect("in-memory write");
    }
    fs::write(&args.loss_log, log).map_err(|e| data(format!("{}: {e}", args.loss_log.display())))?;

    println!(
        "trained {} epochs on {} images; final loss {}; weights -> {}",
        curve.len(),
        samples.len(),
        curve.last().map(|l| format!("{l:.6}")).unwrap_or_else(|| "-".into()),
        args.out_weights.display()
    );
    Ok(())
}
