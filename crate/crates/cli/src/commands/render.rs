//! `render`: burn detection boxes and labels into copies of the original
//! images. Records are matched to files in `--images` by file name.

use std::fs;
use std::path::Path;

use sungold::dataset::PALETTE;

use crate::common::{data, CliResult, ImageRecord};
use crate::draw;
use crate::RenderArgs;

pub fn run(args: RenderArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.detections)
        .map_err(|e| data(format!("{}: {e}", args.detections.display())))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ImageRecord = serde_json::from_str(line).map_err(|e| {
            data(format!("{} line {}: {e}", args.detections.display(), lineno + 1))
        })?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(data("detection file holds no records"));
    }
    fs::create_dir_all(&args.out).map_err(|e| data(format!("{}: {e}", args.out.display())))?;

    let mut rendered = 0usize;
    for rec in &records {
        match render_one(rec, &args.images, &args.out) {
            Ok(()) => rendered += 1,
            Err(e) => eprintln!("warning: {}: {}", rec.image, e.message),
        }
    }
    if rendered == 0 {
        return Err(data("no images could be rendered"));
    }
    println!("rendered {rendered} of {} images to {}", records.len(), args.out.display());
    Ok(())
}

fn render_one(rec: &ImageRecord, images_dir: &Path, out_dir: &Path) -> CliResult<()> {
    let name = Path::new(&rec.image)
        .file_name()
        .ok_or_else(|| data("record has no file name"))?;
    let src = images_dir.join(name);
    let mut img = image::open(&src)
        .map_err(|e| data(format!("{}: {e}", src.display())))?
        .to_rgb8();
    for d in &rec.detections {
        let color = PALETTE[d.class_id % PALETTE.len()];
        let label = format!("{} {:.2}", d.class.to_ascii_uppercase(), d.score);
        draw::draw_detection(
            &mut img,
            (d.bbox.x0, d.bbox.y0, d.bbox.x1, d.bbox.y1),
            &label,
            color,
        );
    }
    let dest = out_dir.join(name);
    img.save(&dest).map_err(|e| data(format!("{}: {e}", dest.display())))?;
    Ok(())
}
