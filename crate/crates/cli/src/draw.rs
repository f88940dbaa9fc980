//! Minimal raster annotation: box outlines and a 5×7 bitmap font for
//! burning class labels and scores into image copies. Everything is
//! integer pixel work on an RGB buffer — no external font machinery, so
//! rendered output is bit-deterministic everywhere.

use image::RgbImage;

pub type Color = [u8; 3];

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;

/// Uppercase 5×7 glyphs; each byte is one row, low 5 bits used,
/// most-significant of the 5 on the left.
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x01, 0x01, 0x01, 0x01, 0x01, 0x11, 0x0E],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x0E, 0x11, 0x01, 0x06, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        '%' => [0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13],
        ' ' => [0x00; 7],
        _ => [0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F],
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Color) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, image::Rgb(color));
    }
}

/// Outline rectangle of the given edge thickness, clipped to the image.
pub fn draw_box(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: Color, thickness: i64) {
    for t in 0..thickness {
        for x in (x0 - t)..=(x1 + t) {
            put(img, x, y0 - t, color);
            put(img, x, y1 + t, color);
        }
        for y in (y0 - t)..=(y1 + t) {
            put(img, x0 - t, y, color);
            put(img, x1 + t, y, color);
        }
    }
}

/// Pixel width of `text` at `scale` including inter-glyph gaps.
pub fn text_width(text: &str, scale: u32) -> u32 {
    let n = text.chars().count() as u32;
    if n == 0 {
        0
    } else {
        n * (GLYPH_W + 1) * scale - scale
    }
}

pub fn text_height(scale: u32) -> u32 {
    GLYPH_H * scale
}

/// Draw `text` with its top-left corner at (x, y).
pub fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: Color, scale: u32) {
    let mut cx = x;
    for ch in text.chars() {
        let rows = glyph(ch);
        for (ry, row) in rows.iter().enumerate() {
            for rx in 0..GLYPH_W {
                if row >> (GLYPH_W - 1 - rx) & 1 == 1 {
                    for sy in 0..scale {
                        for sx in 0..scale {
                            put(
                                img,
                                cx + (rx * scale + sx) as i64,
                                y + (ry as u32 * scale + sy) as i64,
                                color,
                            );
                        }
                    }
                }
            }
        }
        cx += ((GLYPH_W + 1) * scale) as i64;
    }
}

/// Filled rectangle, clipped to the image.
pub fn fill_rect(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: Color) {
    for y in y0..=y1 {
        for x in x0..=x1 {
            put(img, x, y, color);
        }
    }
}

/// Draw one labeled detection: an outlined box plus a color-tagged label
/// strip above it (or inside the top edge when the box touches the top).
pub fn draw_detection(img: &mut RgbImage, bbox: (f64, f64, f64, f64), label: &str, color: Color) {
    let (x0, y0, x1, y1) = bbox;
    let (x0, y0, x1, y1) = (
        x0.round() as i64,
        y0.round() as i64,
        x1.round() as i64,
        y1.round() as i64,
    );
    // Scale glyphs up on large images so labels stay legible.
    let scale = (img.width().min(img.height()) / 300 + 1).min(3);
    draw_box(img, x0, y0, x1, y1, color, 2);
    let th = text_height(scale) as i64;
    let tw = text_width(label, scale) as i64;
    let pad = scale as i64;
    let (lx, ly) = if y0 - th - 2 * pad >= 0 {
        (x0, y0 - th - 2 * pad)
    } else {
        (x0, y0 + 2)
    };
    fill_rect(img, lx, ly, lx + tw + 2 * pad, ly + th + 2 * pad - 1, color);
    draw_text(img, lx + pad, ly + pad, label, [255, 255, 255], scale);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_edges_are_painted_and_clipped() {
        let mut img = RgbImage::new(20, 20);
        draw_box(&mut img, -5, -5, 10, 10, [255, 0, 0], 1);
        assert_eq!(img.get_pixel(10, 3).0, [255, 0, 0]); // right edge
        assert_eq!(img.get_pixel(3, 10).0, [255, 0, 0]); // bottom edge
        assert_eq!(img.get_pixel(3, 3).0, [0, 0, 0]); // interior untouched
    }

    #[test]
    fn text_marks_pixels() {
        let mut img = RgbImage::new(40, 12);
        draw_text(&mut img, 1, 1, "A1", [0, 255, 0], 1);
        let lit = img.pixels().filter(|p| p.0 == [0, 255, 0]).count();
        assert!(lit > 10, "{lit}");
        assert_eq!(text_width("A1", 1), 11);
    }

    #[test]
    fn detection_label_sits_above_the_box() {
        let mut img = RgbImage::new(64, 64);
        draw_detection(&mut img, (10.0, 20.0, 50.0, 50.0), "RED 0.9", [214, 39, 31]);
        // At scale 1 the strip spans y 11..=19: its corner keeps the class
        // color, and the first glyph pixel (top-left of `R`) is white text.
        assert_eq!(img.get_pixel(10, 11).0, [214, 39, 31]);
        assert_eq!(img.get_pixel(11, 12).0, [255, 255, 255]);
    }
}
