//! `grid`: run the hyper-parameter sweep described by a grid spec file
//! over a labeled directory, writing per-cell results and a comparison
//! table. Cells that fail are recorded and the sweep continues; the exit
//! status then reflects the first failure's kind.

use std::fs;

use sungold::dataset::{index_directory, load_all, ripeness_classes, ClassTable};
use sungold::metrics::Averaging;
use sungold::netdef::parse_cfg;
use sungold::presets;
use sungold::trainer::grid::{render_grid_table, run_grid, GridSpec};

use crate::common::{self, data, CliResult};
use crate::GridArgs;

pub fn run(args: GridArgs) -> CliResult<()> {
    let cfg = match &args.cfg {
        Some(path) => common::load_netdef(path)?,
        None => {
            eprintln!("notice: no --cfg given, using the bundled 32x32 micro graph");
            parse_cfg(presets::MICRO_RIPENESS_CFG)?
        }
    };
    let spec_text = fs::read_to_string(&args.spec)
        .map_err(|e| data(format!("{}: {e}", args.spec.display())))?;
    let spec = GridSpec::from_json(&spec_text)
        .map_err(|e| data(format!("{}: {e}", args.spec.display())))?;

    let n_classes = cfg.num_classes()?;
    // The bundled six-class graphs mean ripening stages; other class
    // counts get neutral placeholder names in the reports.
    let table = if n_classes == ripeness_classes().len() {
        ripeness_classes()
    } else {
        ClassTable::new((0..n_classes).map(|i| format!("class-{i}")).collect())?
    };

    let index = index_directory(&args.images, &args.labels)?;
    for w in &index.warnings {
        eprintln!("warning: {w}");
    }
    if index.entries.is_empty() {
        return Err(data("no paired image/label files found"));
    }
    let samples = load_all(&index, &table, cfg.input_w)?;

    fs::create_dir_all(&args.out).map_err(|e| data(format!("{}: {e}", args.out.display())))?;

    let results = run_grid(&cfg, &spec, samples, Averaging::Macro, table.names(), |line| {
        println!("{line}");
    })?;

    // Per-cell artifacts first, so completed cells survive a partial run.
    for r in &results {
        let path = args.out.join(format!("{}.json", r.cell.slug()));
        let mut json = serde_json::to_string_pretty(r)?;
        json.push('\n');
        fs::write(&path, json).map_err(|e| data(format!("{}: {e}", path.display())))?;
    }
    let mut all = serde_json::to_string_pretty(&results)?;
    all.push('\n');
    let results_path = args.out.join("results.json");
    fs::write(&results_path, all).map_err(|e| data(format!("{}: {e}", results_path.display())))?;

    let table_text = render_grid_table(&results);
    let table_path = args.out.join("table.txt");
    fs::write(&table_path, &table_text)
        .map_err(|e| data(format!("{}: {e}", table_path.display())))?;
    print!("{table_text}");

    if let Some(first_failed) = results.iter().find(|r| r.error.is_some()) {
        let msg = format!(
            "{} cell(s) failed; first: {} ({})",
            results.iter().filter(|r| r.error.is_some()).count(),
            first_failed.cell.label(),
            first_failed.error.as_deref().unwrap_or("unknown"),
        );
        return Err(if first_failed.numeric_failure {
            common::numeric(msg)
        } else {
            data(msg)
        });
    }
    Ok(())
}
