//! `detect`: run the full pipeline over images and emit one JSON record
//! per image, boxes mapped back to original-image pixel coordinates.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use sungold::dataset::{letterbox_image, rescale_image, ClassTable};
use sungold::detector::{detect_image, PipelineSettings};
use sungold::netdef::{ModelWeights, NetConfig};
use sungold::postprocess::Detection;

use crate::common::{
    self, data, CliResult, DetectionRecord, ImageRecord, PixelBox,
};
use crate::DetectArgs;

pub fn run(args: DetectArgs) -> CliResult<()> {
    let settings = PipelineSettings {
        thresholds: common::thresholds(args.score_thresh, args.iou_thresh)?,
        ..PipelineSettings::default()
    };
    let cfg = common::load_netdef(&args.cfg)?;
    let table = common::load_classes(&args.classes, &cfg)?;
    let weights = common::load_model(&args.weights, &cfg)?;
    let paths = common::list_images(&args.input)?;

    // Parallel over images; records come back in input order.
    let results: Vec<Result<ImageRecord, String>> = paths
        .par_iter()
        .map(|path| {
            process_image(path, &cfg, &weights, &table, &settings, args.letterbox)
                .map_err(|e| format!("{}: {}", path.display(), e.message))
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(msg) => {
                failures += 1;
                eprintln!("warning: {msg}");
            }
        }
    }
    if records.is_empty() && failures > 0 {
        return Err(data(format!("all {failures} images failed to process")));
    }

    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(
                File::create(path).map_err(|e| data(format!("{}: {e}", path.display())))?,
            );
            write_records(&mut w, &records)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            write_records(&mut w, &records)?;
        }
    }
    Ok(())
}

fn write_records(w: &mut impl Write, records: &[ImageRecord]) -> CliResult<()> {
    for rec in records {
        serde_json::to_writer(&mut *w, rec)?;
        writeln!(w)?;
    }
    Ok(())
}

fn process_image(
    path: &Path,
    cfg: &NetConfig,
    weights: &ModelWeights<f32>,
    table: &ClassTable,
    settings: &PipelineSettings,
    letterbox: bool,
) -> CliResult<ImageRecord> {
    let img = image::open(path)?.to_rgb8();
    let (orig_w, orig_h) = (img.width(), img.height());
    let target = cfg.input_w;

    let (tensor, map) = if letterbox {
        let (t, m) = letterbox_image(&img, target)?;
        (t, Some(m))
    } else {
        (rescale_image(&img, target)?, None)
    };
    let detections = detect_image(cfg, weights, &tensor, settings)?;

    let records = detections
        .iter()
        .map(|d| to_record(d, table, orig_w, orig_h, map.as_ref()))
        .collect();
    Ok(ImageRecord {
        image: path.display().to_string(),
        width: orig_w,
        height: orig_h,
        detections: records,
    })
}

fn to_record(
    d: &Detection,
    table: &ClassTable,
    orig_w: u32,
    orig_h: u32,
    map: Option<&sungold::dataset::LetterboxMap>,
) -> DetectionRecord {
    let (x0, y0, x1, y1) = match map {
        // Letterbox: undo scaling and padding.
        Some(m) => m.box_to_original(&d.bbox),
        // Stretch resize: normalized coordinates scale per axis.
        None => d.bbox.pixel_corners(orig_w as f64, orig_h as f64),
    };
    let clamp_x = |v: f64| v.clamp(0.0, orig_w as f64);
    let clamp_y = |v: f64| v.clamp(0.0, orig_h as f64);
    DetectionRecord {
        class_id: d.class_id,
        class: table.name(d.class_id).to_string(),
        score: d.score,
        objectness: d.objectness,
        bbox: PixelBox {
            x0: clamp_x(x0),
            y0: clamp_y(y0),
            x1: clamp_x(x1),
            y1: clamp_y(y1),
        },
    }
}
