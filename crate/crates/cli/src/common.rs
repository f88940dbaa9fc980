//! Shared plumbing: exit-code classification, model/class loading, image
//! listing, and the stable on-disk detection record schema.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sungold::dataset::ClassTable;
use sungold::metrics::EvalThresholds;
use sungold::netdef::{parse_cfg, load_weights, ModelWeights, NetConfig};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// A failure bound for the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError { code: EXIT_USAGE, message: msg.into() }
}

pub fn data(msg: impl Into<String>) -> CliError {
    CliError { code: EXIT_DATA, message: msg.into() }
}

pub fn numeric(msg: impl Into<String>) -> CliError {
    CliError { code: EXIT_NUMERIC, message: msg.into() }
}

impl From<sungold::Error> for CliError {
    fn from(e: sungold::Error) -> CliError {
        let code = match &e {
            sungold::Error::NonFiniteLoss { .. } => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> CliError {
        data(e.to_string())
    }
}

impl From<image::ImageError> for CliError {
    fn from(e: image::ImageError) -> CliError {
        data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn read_to_string(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Parse a graph file, forwarding parser warnings — and the built-in
/// anchor notice when a head section declared none — to stderr.
pub fn load_netdef(path: &Path) -> CliResult<NetConfig> {
    let cfg = parse_cfg(&read_to_string(path)?)
        .map_err(|e| data(format!("{}: {e}", path.display())))?;
    for w in &cfg.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    if cfg.anchors_defaulted {
        eprintln!(
            "notice: {}: at least one head section lists no anchors; using the built-in defaults",
            path.display()
        );
    }
    Ok(cfg)
}

pub fn load_model(path: &Path, cfg: &NetConfig) -> CliResult<ModelWeights<f32>> {
    load_weights(&read_bytes(path)?, cfg).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Load the class table and require it to match the graph's class count.
pub fn load_classes(path: &Path, cfg: &NetConfig) -> CliResult<ClassTable> {
    let table = ClassTable::parse(&read_to_string(path)?)
        .map_err(|e| data(format!("{}: {e}", path.display())))?;
    let expected = cfg.num_classes()?;
    if table.len() != expected {
        return Err(data(format!(
            "class file lists {} names but the graph predicts {expected} classes",
            table.len()
        )));
    }
    Ok(table)
}

/// Validate a score/IoU flag pair; out-of-range values are usage errors.
pub fn thresholds(score: f64, iou: f64) -> CliResult<EvalThresholds> {
    for (name, v) in [("--score-thresh", score), ("--iou-thresh", iou)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(usage(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(EvalThresholds { score_min: score, iou_min: iou })
}

const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

/// All images under `input`, sorted by file name; a single file passes
/// through untouched.
pub fn list_images(input: &Path) -> CliResult<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(data(format!("{}: not a file or directory", input.display())));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| data(format!("{}: {e}", input.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(data(format!("{}: no images found", input.display())));
    }
    Ok(paths)
}

/// Axis-aligned box in original-image pixel coordinates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PixelBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// One detection as written to the output document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub class_id: usize,
    pub class: String,
    pub score: f64,
    pub objectness: f64,
    #[serde(rename = "box")]
    pub bbox: PixelBox,
}

/// One line of the detection document: an image and its surviving boxes,
/// in emission order (score-descending after suppression).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub detections: Vec<DetectionRecord>,
}
