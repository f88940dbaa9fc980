//! From head tensors to final detections: box decoding, IoU, score
//! filtering, and greedy non-maximum suppression.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netdef::YoloSpec;
use crate::tensor::Tensor;

/// Axis-aligned box, center + extent, normalized to [0,1] relative to the
/// network input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// Corner form (x_min, y_min, x_max, y_max), still normalized.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn from_corners(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> BBox {
        BBox {
            cx: (x_min + x_max) / 2.0,
            cy: (y_min + y_max) / 2.0,
            w: x_max - x_min,
            h: y_max - y_min,
        }
    }

    /// Corner form scaled to a pixel geometry.
    pub fn pixel_corners(&self, img_w: f64, img_h: f64) -> (f64, f64, f64, f64) {
        let (x0, y0, x1, y1) = self.corners();
        (x0 * img_w, y0 * img_h, x1 * img_w, y1 * img_h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// One decoded, scored candidate box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub objectness: f64,
    pub class_probs: Vec<f64>,
    /// argmax of `class_probs`, lowest index on ties.
    pub class_id: usize,
    /// objectness × class_probs[class_id].
    pub score: f64,
}

/// Whether suppression compares only same-class boxes (the default) or all.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NmsMode {
    PerClass,
    ClassAgnostic,
}

pub fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// The box transform shared by decoding and loss targets: map raw offsets
/// `(tx, ty, tw, th)` at grid cell (row, col) to a normalized box.
pub fn decode_box<F: Float>(
    t: [F; 4],
    row: usize,
    col: usize,
    grid: usize,
    anchor: (f32, f32),
    input_size: usize,
) -> [F; 4] {
    let g = F::from(grid).unwrap();
    let input = F::from(input_size).unwrap();
    [
        (sigmoid(t[0]) + F::from(col).unwrap()) / g,
        (sigmoid(t[1]) + F::from(row).unwrap()) / g,
        F::from(anchor.0).unwrap() * t[2].exp() / input,
        F::from(anchor.1).unwrap() * t[3].exp() / input,
    ]
}

/// Decode one head tensor (single image) into its S·S·|mask| detections.
///
/// Channel layout per anchor slot `a`, base `a·(5+classes)`: tx, ty, tw,
/// th, objectness, then one logit per class. Emission order is row, then
/// column, then anchor slot.
pub fn decode_head(head: &Tensor<f32>, spec: &YoloSpec, input_size: usize) -> Result<Vec<Detection>> {
    let s = head.shape();
    let per_anchor = 5 + spec.classes;
    if s.n != 1 {
        return Err(Error::Shape(format!(
            "decode_head expects a single-image head, got {s}"
        )));
    }
    if s.c != per_anchor * spec.mask.len() {
        return Err(Error::Shape(format!(
            "head has {} channels, spec requires (5 + {}) x {} = {}",
            s.c,
            spec.classes,
            spec.mask.len(),
            per_anchor * spec.mask.len()
        )));
    }
    if s.h != s.w {
        return Err(Error::Shape(format!("head grid must be square, got {s}")));
    }
    let grid = s.h;

    let mut out = Vec::with_capacity(grid * grid * spec.mask.len());
    for row in 0..grid {
        for col in 0..grid {
            for (a, &anchor_idx) in spec.mask.iter().enumerate() {
                let base = a * per_anchor;
                let at = |ch: usize| head.at(0, base + ch, row, col) as f64;
                let t = [at(0), at(1), at(2), at(3)];
                let [cx, cy, w, h] =
                    decode_box(t, row, col, grid, spec.anchors[anchor_idx], input_size);
                let objectness = sigmoid(at(4));
                let class_probs: Vec<f64> =
                    (0..spec.classes).map(|k| sigmoid(at(5 + k))).collect();
                let (class_id, best) = argmax(&class_probs);
                out.push(Detection {
                    bbox: BBox { cx, cy, w, h },
                    objectness,
                    score: objectness * best,
                    class_probs,
                    class_id,
                });
            }
        }
    }
    Ok(out)
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best_i = 0;
    let mut best = values[0];
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            best_i = i;
        }
    }
    (best_i, best)
}

/// Intersection over union of two boxes; 0 when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Keep detections with score ≥ `score_thresh` (inclusive), order preserved.
pub fn filter_by_score(dets: Vec<Detection>, score_thresh: f64) -> Vec<Detection> {
    dets.into_iter().filter(|d| d.score >= score_thresh).collect()
}

/// Greedy non-maximum suppression.
///
/// Candidates are ranked by score descending (ties: lower class id, then
/// input order); each kept detection suppresses lower-ranked ones of the
/// same class (or of any class in [`NmsMode::ClassAgnostic`]) whose IoU
/// with it is ≥ `iou_thresh`. Survivors come back score-descending.
pub fn nms(dets: Vec<Detection>, iou_thresh: f64, mode: NmsMode) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // Stable sort: equal (score, class) pairs keep input order.
    order.sort_by(|&a, &b| {
        dets[b].score
            .total_cmp(&dets[a].score)
            .then(dets[a].class_id.cmp(&dets[b].class_id))
    });

    let mut suppressed = vec![false; dets.len()];
    let mut keep = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[rank + 1..] {
            if suppressed[j] {
                continue;
            }
            if mode == NmsMode::PerClass && dets[j].class_id != dets[i].class_id {
                continue;
            }
            if iou(&dets[i].bbox, &dets[j].bbox) >= iou_thresh {
                suppressed[j] = true;
            }
        }
    }

    let mut taken: Vec<Option<Detection>> = dets.into_iter().map(Some).collect();
    keep.into_iter().map(|i| taken[i].take().unwrap()).collect()
}
