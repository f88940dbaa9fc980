//! Image/annotation loading, rescaling to the network input, train/val
//! splitting, and deterministic synthetic-scene generation.
//!
//! On-disk layout: `images/NAME.jpg` (or .jpeg/.png) paired with
//! `labels/NAME.txt` holding one `class cx cy w h` line per box
//! (normalized), plus a `classes.txt` naming the classes one per line.

use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::postprocess::BBox;
use crate::tensor::{Shape, Tensor};

/// Ordered class-name table; index order matches the confusion matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassTable {
    names: Vec<String>,
}

/// The six ripening stages in their matrix coding order.
pub fn ripeness_classes() -> ClassTable {
    ClassTable::new(crate::presets::CLASS_NAMES.iter().map(|s| s.to_string()).collect()).unwrap()
}

impl ClassTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Data("class table is empty".into()));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Data(format!("class {i} has an empty name")));
            }
            if names[..i].contains(name) {
                return Err(Error::Data(format!("duplicate class name `{name}`")));
            }
        }
        Ok(ClassTable { names })
    }

    /// Parse a `classes.txt` body: one name per line, blanks ignored.
    pub fn parse(text: &str) -> Result<Self> {
        ClassTable::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `classes.txt` body for this table.
    pub fn to_text(&self) -> String {
        let mut s = self.names.join("\n");
        s.push('\n');
        s
    }
}

/// One annotated box: class index plus normalized geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruth {
    pub class_id: usize,
    pub bbox: BBox,
}

/// Parse one `class cx cy w h` annotation line.
pub fn parse_annotation(line: &str, table: &ClassTable) -> Result<GroundTruth> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(Error::Data(format!(
            "annotation needs 5 fields (class cx cy w h), got {}: `{line}`",
            fields.len()
        )));
    }
    let class_id: usize = fields[0]
        .parse()
        .map_err(|_| Error::Data(format!("bad class id `{}`", fields[0])))?;
    if class_id >= table.len() {
        return Err(Error::Data(format!(
            "class id {class_id} out of range for {} classes",
            table.len()
        )));
    }
    let mut coords = [0.0f64; 4];
    for (slot, field) in coords.iter_mut().zip(&fields[1..]) {
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Data(format!("bad coordinate `{field}`")))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Data(format!("coordinate {v} outside [0,1]: `{line}`")));
        }
        *slot = v;
    }
    Ok(GroundTruth {
        class_id,
        bbox: BBox { cx: coords[0], cy: coords[1], w: coords[2], h: coords[3] },
    })
}

/// Render a truth back to its annotation line (6 decimal places).
pub fn format_annotation(gt: &GroundTruth) -> String {
    format!(
        "{} {:.6} {:.6} {:.6} {:.6}",
        gt.class_id, gt.bbox.cx, gt.bbox.cy, gt.bbox.w, gt.bbox.h
    )
}

/// One network-ready image with its annotations.
#[derive(Clone, Debug)]
pub struct Sample {
    /// 1×3×size×size, values in [0,1].
    pub image: Tensor<f32>,
    pub truths: Vec<GroundTruth>,
    /// Stem the sample came from (file name or synth id).
    pub id: String,
}

/// Bilinear stretch resize to `target`×`target` (aspect ratio is *not*
/// preserved, so normalized annotations stay valid untouched), mapping
/// bytes to [0,1]. Channels come out in R,G,B order.
pub fn rescale_image(img: &RgbImage, target: usize) -> Result<Tensor<f32>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Data("empty image".into()));
    }
    let mut out = Tensor::zeros(Shape::new(1, 3, target, target));
    let sx_scale = w as f64 / target as f64;
    let sy_scale = h as f64 / target as f64;
    for dy in 0..target {
        // Half-pixel-center mapping: dst center lands on src coordinate.
        let sy = (dy as f64 + 0.5) * sy_scale - 0.5;
        let y0 = sy.floor();
        let fy = sy - y0;
        let y0c = (y0.max(0.0) as usize).min(h - 1);
        let y1c = ((y0 + 1.0).max(0.0) as usize).min(h - 1);
        for dx in 0..target {
            let sx = (dx as f64 + 0.5) * sx_scale - 0.5;
            let x0 = sx.floor();
            let fx = sx - x0;
            let x0c = (x0.max(0.0) as usize).min(w - 1);
            let x1c = ((x0 + 1.0).max(0.0) as usize).min(w - 1);
            let p00 = img.get_pixel(x0c as u32, y0c as u32).0;
            let p01 = img.get_pixel(x1c as u32, y0c as u32).0;
            let p10 = img.get_pixel(x0c as u32, y1c as u32).0;
            let p11 = img.get_pixel(x1c as u32, y1c as u32).0;
            for c in 0..3 {
                let top = (1.0 - fx) * p00[c] as f64 + fx * p01[c] as f64;
                let bot = (1.0 - fx) * p10[c] as f64 + fx * p11[c] as f64;
                let v = ((1.0 - fy) * top + fy * bot) / 255.0;
                *out.at_mut(0, c, dy, dx) = v as f32;
            }
        }
    }
    Ok(out)
}

/// Geometry of a letterbox resize, for mapping boxes back to the original.
#[derive(Clone, Copy, Debug)]
pub struct LetterboxMap {
    pub scale: f64,
    pub pad_x: f64,
    pub pad_y: f64,
    pub target: usize,
}

impl LetterboxMap {
    /// Map a normalized network-space box back to original-image pixels.
    pub fn box_to_original(&self, bbox: &BBox) -> (f64, f64, f64, f64) {
        let (x0, y0, x1, y1) = bbox.pixel_corners(self.target as f64, self.target as f64);
        (
            (x0 - self.pad_x) / self.scale,
            (y0 - self.pad_y) / self.scale,
            (x1 - self.pad_x) / self.scale,
            (y1 - self.pad_y) / self.scale,
        )
    }
}

/// Aspect-preserving resize onto a gray canvas, for toolchains that expect
/// letterboxed inputs. The stretch resize is the default path.
pub fn letterbox_image(img: &RgbImage, target: usize) -> Result<(Tensor<f32>, LetterboxMap)> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Data("empty image".into()));
    }
    let scale = (target as f64 / w as f64).min(target as f64 / h as f64);
    let new_w = ((w as f64 * scale).round() as usize).max(1);
    let new_h = ((h as f64 * scale).round() as usize).max(1);
    let inner = rescale_to(img, new_w, new_h);
    let pad_x = (target - new_w) / 2;
    let pad_y = (target - new_h) / 2;
    let mut out = Tensor::filled(Shape::new(1, 3, target, target), 0.5f32);
    for c in 0..3 {
        for y in 0..new_h {
            for x in 0..new_w {
                *out.at_mut(0, c, pad_y + y, pad_x + x) = inner.at(0, c, y, x);
            }
        }
    }
    Ok((
        out,
        LetterboxMap {
            scale,
            pad_x: pad_x as f64,
            pad_y: pad_y as f64,
            target,
        },
    ))
}

/// Bilinear resize to an arbitrary geometry (the square case is
/// [`rescale_image`]).
fn rescale_to(img: &RgbImage, new_w: usize, new_h: usize) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Tensor::zeros(Shape::new(1, 3, new_h, new_w));
    let sx_scale = w as f64 / new_w as f64;
    let sy_scale = h as f64 / new_h as f64;
    for dy in 0..new_h {
        let sy = (dy as f64 + 0.5) * sy_scale - 0.5;
        let y0 = sy.floor();
        let fy = sy - y0;
        let y0c = (y0.max(0.0) as usize).min(h - 1);
        let y1c = ((y0 + 1.0).max(0.0) as usize).min(h - 1);
        for dx in 0..new_w {
            let sx = (dx as f64 + 0.5) * sx_scale - 0.5;
            let x0 = sx.floor();
            let fx = sx - x0;
            let x0c = (x0.max(0.0) as usize).min(w - 1);
            let x1c = ((x0 + 1.0).max(0.0) as usize).min(w - 1);
            let p00 = img.get_pixel(x0c as u32, y0c as u32).0;
            let p01 = img.get_pixel(x1c as u32, y0c as u32).0;
            let p10 = img.get_pixel(x0c as u32, y1c as u32).0;
            let p11 = img.get_pixel(x1c as u32, y1c as u32).0;
            for c in 0..3 {
                let top = (1.0 - fx) * p00[c] as f64 + fx * p01[c] as f64;
                let bot = (1.0 - fx) * p10[c] as f64 + fx * p11[c] as f64;
                *out.at_mut(0, c, dy, dx) = (((1.0 - fy) * top + fy * bot) / 255.0) as f32;
            }
        }
    }
    out
}

/// Convert a [0,1] image tensor back to 8-bit RGB (clamped, rounded).
pub fn tensor_to_rgb(image: &Tensor<f32>) -> Result<RgbImage> {
    let s = image.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::Shape(format!("expected a 1x3xHxW image tensor, got {s}")));
    }
    let mut img = RgbImage::new(s.w as u32, s.h as u32);
    for y in 0..s.h {
        for x in 0..s.w {
            let px = image::Rgb([
                (image.at(0, 0, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                (image.at(0, 1, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                (image.at(0, 2, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
            ]);
            img.put_pixel(x as u32, y as u32, px);
        }
    }
    Ok(img)
}

/// Deterministic shuffle-then-split. The two sides partition the input;
/// each must come out non-empty.
pub fn split_dataset<T>(items: Vec<T>, train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Data(format!(
            "train fraction must be in (0,1), got {train_fraction}"
        )));
    }
    let n = items.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Data(format!(
            "degenerate split: {n} samples at fraction {train_fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher–Yates, fixed draw order for reproducibility.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let mut train = Vec::with_capacity(n_train);
    let mut val = Vec::with_capacity(n - n_train);
    for (rank, &idx) in order.iter().enumerate() {
        let item = slots[idx].take().unwrap();
        if rank < n_train {
            train.push(item);
        } else {
            val.push(item);
        }
    }
    Ok((train, val))
}

/// Fixed palette mapping ripening classes to circle colors (R, G, B);
/// also used to color rendered detection boxes.
pub const PALETTE: [[u8; 3]; 6] = [
    [214, 39, 31],   // Red
    [231, 94, 41],   // Red-orange
    [240, 146, 47],  // Orange
    [205, 165, 68],  // Striped
    [247, 162, 129], // Salmon
    [96, 158, 77],   // Green
];

/// Generate `n` synthetic scenes: one filled circle (class-colored) per
/// image on a textured gray background, ground truth the circle's exact
/// bounding square. Classes cycle so counts stay within ±1 of each other
/// (exactly 500 each at n = 3000 with 6 classes). Fully determined by
/// `seed`; each sample draws from its own stream, so prefixes agree for
/// any `n`.
pub fn synthesize_dataset(n: usize, seed: u64, table: &ClassTable, size: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let class_id = i % table.len();
            synthesize_one(&mut rng, class_id, size, i)
        })
        .collect()
}

fn synthesize_one(rng: &mut ChaCha8Rng, class_id: usize, size: usize, index: usize) -> Sample {
    // Geometry first: radius 0.16–0.21 of the image, center clear of edges.
    let base: f32 = 0.28 + 0.30 * rng.gen::<f32>();
    let radius: f64 = 0.16 + 0.05 * rng.gen::<f64>();
    let cx: f64 = radius + (1.0 - 2.0 * radius) * rng.gen::<f64>();
    let cy: f64 = radius + (1.0 - 2.0 * radius) * rng.gen::<f64>();
    let color = PALETTE[class_id % PALETTE.len()];
    let jitter: [f32; 3] = [
        (rng.gen::<f32>() - 0.5) * 16.0 / 255.0,
        (rng.gen::<f32>() - 0.5) * 16.0 / 255.0,
        (rng.gen::<f32>() - 0.5) * 16.0 / 255.0,
    ];

    let mut image = Tensor::zeros(Shape::new(1, 3, size, size));
    let r_px = radius * size as f64;
    let cx_px = cx * size as f64;
    let cy_px = cy * size as f64;
    for y in 0..size {
        for x in 0..size {
            let noise: f32 = (rng.gen::<f32>() - 0.5) * 0.10;
            let dx = x as f64 + 0.5 - cx_px;
            let dy = y as f64 + 0.5 - cy_px;
            let inside = dx * dx + dy * dy <= r_px * r_px;
            for c in 0..3 {
                let v = if inside {
                    color[c] as f32 / 255.0 + jitter[c] + noise * 0.3
                } else {
                    base + noise
                };
                *image.at_mut(0, c, y, x) = v.clamp(0.0, 1.0);
            }
        }
    }

    Sample {
        image,
        truths: vec![GroundTruth {
            class_id,
            bbox: BBox { cx, cy, w: 2.0 * radius, h: 2.0 * radius },
        }],
        id: format!("synth-{index:05}"),
    }
}

/// One image/label pair found on disk.
#[derive(Clone, Debug)]
pub struct DatasetEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub label_path: PathBuf,
}

/// The pairing result for a dataset directory: matched entries in sorted
/// id order, plus a warning per unpaired file.
#[derive(Clone, Debug)]
pub struct DatasetIndex {
    pub entries: Vec<DatasetEntry>,
    pub warnings: Vec<String>,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

/// Pair `images/NAME.<ext>` with `labels/NAME.txt`. Unpaired files on
/// either side are skipped with a warning rather than failing the run.
pub fn index_directory(images_dir: &Path, labels_dir: &Path) -> Result<DatasetIndex> {
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    let mut image_stems = Vec::new();

    let mut names: Vec<PathBuf> = std::fs::read_dir(images_dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    names.sort();
    for path in names {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        if !IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()).map(String::from) else {
            continue;
        };
        let label_path = labels_dir.join(format!("{stem}.txt"));
        if label_path.is_file() {
            image_stems.push(stem.clone());
            entries.push(DatasetEntry { id: stem, image_path: path, label_path });
        } else {
            warnings.push(format!("no label for image `{}`; skipped", path.display()));
        }
    }

    let mut label_files: Vec<PathBuf> = std::fs::read_dir(labels_dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    label_files.sort();
    for path in label_files {
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if !image_stems.iter().any(|s| s == stem) {
                warnings.push(format!("no image for label `{}`; skipped", path.display()));
            }
        }
    }

    entries.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(DatasetIndex { entries, warnings })
}

/// Load and rescale one indexed pair.
pub fn load_entry(entry: &DatasetEntry, table: &ClassTable, input_size: usize) -> Result<Sample> {
    let img = image::open(&entry.image_path)?.to_rgb8();
    let image = rescale_image(&img, input_size)?;
    let truths = load_labels(&entry.label_path, table)?;
    Ok(Sample { image, truths, id: entry.id.clone() })
}

/// Parse a label file: one annotation per non-blank line.
pub fn load_labels(path: &Path, table: &ClassTable) -> Result<Vec<GroundTruth>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            parse_annotation(l, table)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Load every indexed pair in parallel, keeping index order.
pub fn load_all(index: &DatasetIndex, table: &ClassTable, input_size: usize) -> Result<Vec<Sample>> {
    index
        .entries
        .par_iter()
        .map(|e| load_entry(e, table, input_size))
        .collect()
}

/// Write samples to the standard directory layout (JPEG images, text
/// labels, `classes.txt`). Deterministic: identical samples produce
/// byte-identical trees.
pub fn write_dataset(samples: &[Sample], table: &ClassTable, out_dir: &Path) -> Result<()> {
    let images = out_dir.join("images");
    let labels = out_dir.join("labels");
    std::fs::create_dir_all(&images)?;
    std::fs::create_dir_all(&labels)?;
    std::fs::write(out_dir.join("classes.txt"), table.to_text())?;
    for sample in samples {
        let img = tensor_to_rgb(&sample.image)?;
        let mut file = std::fs::File::create(images.join(format!("{}.jpg", sample.id)))?;
        let encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut file, 92);
        img.write_with_encoder(encoder)?;
        let body: String = sample
            .truths
            .iter()
            .map(|t| format_annotation(t) + "\n")
            .collect();
        std::fs::write(labels.join(format!("{}.txt", sample.id)), body)?;
    }
    Ok(())
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn annotation_format_parse_round_trip(
            class_id in 0usize..6,
            cx in 0.0..1.0f64,
            cy in 0.0..1.0f64,
            w in 0.0..1.0f64,
            h in 0.0..1.0f64,
        ) {
            let table = ripeness_classes();
            let gt = GroundTruth { class_id, bbox: BBox { cx, cy, w, h } };
            let line = format_annotation(&gt);
            let back = parse_annotation(&line, &table).unwrap();
            prop_assert_eq!(back.class_id, class_id);
            // 6-decimal text keeps values to within half an ulp of 1e-6
            prop_assert!((back.bbox.cx - cx).abs() <= 5e-7);
            prop_assert!((back.bbox.cy - cy).abs() <= 5e-7);
            prop_assert!((back.bbox.w - w).abs() <= 5e-7);
            prop_assert!((back.bbox.h - h).abs() <= 5e-7);
            // and re-formatting is a fixed point
            prop_assert_eq!(format_annotation(&back), line);
        }
    }
}
