//! Target assignment and the detection loss.
//!
//! Each ground truth is assigned to exactly one (scale, cell, anchor)
//! slot: the anchor with the highest co-centered IoU against the truth's
//! extent, across every scale, at the grid cell containing the truth
//! center. The loss then sums, over assigned slots, squared error on the
//! box offsets plus binary cross-entropy on class logits; objectness gets
//! BCE everywhere — target 1 at assigned slots, 0 elsewhere, except that
//! unassigned slots whose decoded box overlaps any truth with IoU > 0.5
//! sit in an ignore band and contribute nothing.

use num_traits::Float;

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::layers::Head;
use crate::postprocess::decode_box;
use crate::tensor::Tensor;

/// Per-term loss multipliers, all 1.0 by default.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub coord: f64,
    pub objectness: f64,
    pub class: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { coord: 1.0, objectness: 1.0, class: 1.0 }
    }
}

/// One truth→slot assignment. `tx, ty` are σ-space targets (fractional
/// position inside the cell); `tw, th` are log-space extent targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Assignment {
    pub head: usize,
    pub row: usize,
    pub col: usize,
    pub slot: usize,
    pub truth_index: usize,
    pub tx: f64,
    pub ty: f64,
    pub tw: f64,
    pub th: f64,
}

/// Grid size and anchor list of one head, the geometry assignment needs.
#[derive(Clone, Debug)]
pub struct HeadLayout {
    pub grid: usize,
    /// The masked anchors in slot order, (w, h) in input pixels.
    pub anchors: Vec<(f32, f32)>,
}

impl HeadLayout {
    pub fn of<F>(head: &Head<F>) -> HeadLayout
    where
        F: Float,
    {
        HeadLayout {
            grid: head.tensor.shape().h,
            anchors: head.spec.mask.iter().map(|&m| head.spec.anchors[m]).collect(),
        }
    }
}

/// Co-centered IoU of two extents: boxes share a center, so overlap is
/// `min(w)·min(h)`.
fn extent_iou(w1: f64, h1: f64, w2: f64, h2: f64) -> f64 {
    let inter = w1.min(w2) * h1.min(h2);
    let union = w1 * h1 + w2 * h2 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Assign every truth to its best (head, cell, anchor) slot. When two
/// truths claim the same slot, the first keeps it. Ties across anchors
/// resolve to the first (head, slot) in iteration order.
pub fn assign_targets(
    truths: &[GroundTruth],
    layouts: &[HeadLayout],
    input_size: usize,
) -> Vec<Assignment> {
    let mut out: Vec<Assignment> = Vec::with_capacity(truths.len());
    for (truth_index, truth) in truths.iter().enumerate() {
        let w_px = truth.bbox.w * input_size as f64;
        let h_px = truth.bbox.h * input_size as f64;
        let mut best: Option<(f64, usize, usize)> = None; // (iou, head, slot)
        for (hi, layout) in layouts.iter().enumerate() {
            for (slot, &(aw, ah)) in layout.anchors.iter().enumerate() {
                let iou = extent_iou(w_px, h_px, aw as f64, ah as f64);
                if best.map_or(true, |(b, _, _)| iou > b) {
                    best = Some((iou, hi, slot));
                }
            }
        }
        let Some((_, head, slot)) = best else { continue };
        let layout = &layouts[head];
        let s = layout.grid;
        let col = ((truth.bbox.cx * s as f64).floor() as usize).min(s - 1);
        let row = ((truth.bbox.cy * s as f64).floor() as usize).min(s - 1);
        if out
            .iter()
            .any(|a| a.head == head && a.row == row && a.col == col && a.slot == slot)
        {
            continue; // slot already claimed by an earlier truth
        }
        let (aw, ah) = layout.anchors[slot];
        out.push(Assignment {
            head,
            row,
            col,
            slot,
            truth_index,
            tx: truth.bbox.cx * s as f64 - col as f64,
            ty: truth.bbox.cy * s as f64 - row as f64,
            // Extent targets are logs of the truth/anchor ratio; floor the
            // truth extent so degenerate boxes cannot inject infinities.
            tw: (w_px.max(1e-9) / aw as f64).ln(),
            th: (h_px.max(1e-9) / ah as f64).ln(),
        });
    }
    out
}

fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Numerically stable binary cross-entropy from a logit:
/// `max(x,0) − x·t + ln(1 + e^{−|x|})`; the gradient is `σ(x) − t`.
fn bce<F: Float>(logit: F, target: F) -> (F, F) {
    let loss = logit.max(F::zero()) - logit * target + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - target)
}

/// Corner-form IoU computed in the working precision, for the ignore band.
fn box_iou<F: Float>(a: &[F; 4], b: &[F; 4]) -> F {
    let half = F::from(0.5).unwrap();
    let (ax0, ax1) = (a[0] - a[2] * half, a[0] + a[2] * half);
    let (ay0, ay1) = (a[1] - a[3] * half, a[1] + a[3] * half);
    let (bx0, bx1) = (b[0] - b[2] * half, b[0] + b[2] * half);
    let (by0, by1) = (b[1] - b[3] * half, b[1] + b[3] * half);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(F::zero());
    let ih = (ay1.min(by1) - ay0.max(by0)).max(F::zero());
    let inter = iw * ih;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= F::zero() {
        F::zero()
    } else {
        inter / union
    }
}

/// IoU margin above which an unassigned slot's objectness is ignored.
const IGNORE_IOU: f64 = 0.5;

/// Compute the detection loss and its gradient w.r.t. every head tensor.
///
/// Returns the summed loss (callers divide by batch size) and one
/// gradient tensor per head, aligned with `heads`.
pub fn yolo_loss<F: Float + Send + Sync>(
    heads: &[Head<F>],
    truths: &[GroundTruth],
    input_size: usize,
    lw: &LossWeights,
) -> Result<(F, Vec<Tensor<F>>)> {
    let layouts: Vec<HeadLayout> = heads.iter().map(HeadLayout::of).collect();
    let assignments = assign_targets(truths, &layouts, input_size);

    let truth_boxes: Vec<[F; 4]> = truths
        .iter()
        .map(|t| {
            [
                F::from(t.bbox.cx).unwrap(),
                F::from(t.bbox.cy).unwrap(),
                F::from(t.bbox.w).unwrap(),
                F::from(t.bbox.h).unwrap(),
            ]
        })
        .collect();

    let coord_w = F::from(lw.coord).unwrap();
    let obj_w = F::from(lw.objectness).unwrap();
    let class_w = F::from(lw.class).unwrap();
    let ignore = F::from(IGNORE_IOU).unwrap();
    let two = F::from(2.0).unwrap();

    let mut total = F::zero();
    let mut grads = Vec::with_capacity(heads.len());

    for (hi, head) in heads.iter().enumerate() {
        let shape = head.tensor.shape();
        if shape.n != 1 {
            return Err(Error::Shape(format!(
                "loss expects single-image heads, got {shape}"
            )));
        }
        let spec = &head.spec;
        let per_anchor = 5 + spec.classes;
        if shape.c != per_anchor * spec.mask.len() {
            return Err(Error::Shape(format!(
                "head {hi} has {} channels, spec requires {}",
                shape.c,
                per_anchor * spec.mask.len()
            )));
        }
        let grid = shape.h;
        let mut grad = Tensor::zeros(shape);

        for row in 0..grid {
            for col in 0..grid {
                for slot in 0..spec.mask.len() {
                    let base = slot * per_anchor;
                    let assignment = assignments
                        .iter()
                        .find(|a| a.head == hi && a.row == row && a.col == col && a.slot == slot);
                    let obj_logit = head.tensor.at(0, base + 4, row, col);

                    if let Some(a) = assignment {
                        // Box offsets: squared error on (σtx, σty, tw, th).
                        let targets = [a.tx, a.ty, a.tw, a.th];
                        for (k, &target) in targets.iter().enumerate() {
                            let logit = head.tensor.at(0, base + k, row, col);
                            let t = F::from(target).unwrap();
                            let (value, dvalue) = if k < 2 {
                                let s = sigmoid(logit);
                                (s, s * (F::one() - s))
                            } else {
                                (logit, F::one())
                            };
                            let diff = value - t;
                            total = total + coord_w * diff * diff;
                            *grad.at_mut(0, base + k, row, col) = coord_w * two * diff * dvalue;
                        }
                        // Objectness toward 1.
                        let (l, g) = bce(obj_logit, F::one());
                        total = total + obj_w * l;
                        *grad.at_mut(0, base + 4, row, col) = obj_w * g;
                        // One-vs-rest class targets.
                        let truth_class = truths[a.truth_index].class_id;
                        for k in 0..spec.classes {
                            let logit = head.tensor.at(0, base + 5 + k, row, col);
                            let t = if k == truth_class { F::one() } else { F::zero() };
                            let (l, g) = bce(logit, t);
                            total = total + class_w * l;
                            *grad.at_mut(0, base + 5 + k, row, col) = class_w * g;
                        }
                    } else {
                        // Ignore band: decoded box overlapping any truth
                        // tightly is neither rewarded nor punished.
                        let t = [
                            head.tensor.at(0, base, row, col),
                            head.tensor.at(0, base + 1, row, col),
                            head.tensor.at(0, base + 2, row, col),
                            head.tensor.at(0, base + 3, row, col),
                        ];
                        let decoded = decode_box(
                            t,
                            row,
                            col,
                            grid,
                            spec.anchors[spec.mask[slot]],
                            input_size,
                        );
                        let overlapped = truth_boxes.iter().any(|tb| box_iou(&decoded, tb) > ignore);
                        if !overlapped {
                            let (l, g) = bce(obj_logit, F::zero());
                            total = total + obj_w * l;
                            *grad.at_mut(0, base + 4, row, col) = obj_w * g;
                        }
                    }
                }
            }
        }
        grads.push(grad);
    }
    Ok((total, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdef::YoloSpec;
    use crate::postprocess::BBox;
    use crate::tensor::Shape;

    fn two_scale_layouts() -> Vec<HeadLayout> {
        // The tiny graph's geometry: coarse 13 with large anchors, fine 26.
        let anchors = [
            (10.0, 14.0),
            (23.0, 27.0),
            (37.0, 58.0),
            (81.0, 82.0),
            (135.0, 169.0),
            (344.0, 319.0),
        ];
        vec![
            HeadLayout { grid: 13, anchors: anchors[3..].to_vec() },
            HeadLayout { grid: 26, anchors: anchors[..3].to_vec() },
        ]
    }

    fn truth(cx: f64, cy: f64, w: f64, h: f64) -> GroundTruth {
        GroundTruth { class_id: 2, bbox: BBox { cx, cy, w, h } }
    }

    #[test]
    fn exact_anchor_match_wins_its_slot() {
        // Extent exactly anchor index 4 = (135, 169) → coarse head, slot 1.
        let t = truth(0.5, 0.5, 135.0 / 416.0, 169.0 / 416.0);
        let a = assign_targets(&[t], &two_scale_layouts(), 416);
        assert_eq!(a.len(), 1);
        assert_eq!((a[0].head, a[0].slot), (0, 1));
        assert_eq!((a[0].row, a[0].col), (6, 6)); // floor(0.5·13)
        assert!((a[0].tx - 0.5).abs() < 1e-12);
        assert!(a[0].tw.abs() < 1e-9 && a[0].th.abs() < 1e-9);
    }

    #[test]
    fn small_extent_lands_on_the_fine_scale() {
        let t = truth(0.1, 0.9, 11.0 / 416.0, 13.0 / 416.0);
        let a = assign_targets(&[t], &two_scale_layouts(), 416);
        assert_eq!(a[0].head, 1);
        assert_eq!(a[0].slot, 0); // closest to (10, 14)
        assert_eq!((a[0].row, a[0].col), (23, 2)); // floor(0.9·26), floor(0.1·26)
    }

    #[test]
    fn assignment_matches_exhaustive_search() {
        use rand::{Rng, SeedableRng};
        let layouts = two_scale_layouts();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let w = rng.gen_range(0.01..0.9);
            let h = rng.gen_range(0.01..0.9);
            let t = truth(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), w, h);
            let got = assign_targets(&[t], &layouts, 416);

            // Straight-line oracle: scan every (head, slot) pair.
            let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
            for (hi, layout) in layouts.iter().enumerate() {
                for (slot, &(aw, ah)) in layout.anchors.iter().enumerate() {
                    let iou = extent_iou(w * 416.0, h * 416.0, aw as f64, ah as f64);
                    if iou > best.0 {
                        best = (iou, hi, slot);
                    }
                }
            }
            assert_eq!((got[0].head, got[0].slot), (best.1, best.2));
        }
    }

    #[test]
    fn boundary_centers_clamp_into_the_grid() {
        let t = truth(1.0, 1.0, 0.3, 0.3);
        let a = assign_targets(&[t], &two_scale_layouts(), 416);
        let layout_grid = if a[0].head == 0 { 13 } else { 26 };
        assert_eq!((a[0].row, a[0].col), (layout_grid - 1, layout_grid - 1));
    }

    fn micro_head(classes: usize, grid: usize) -> Head<f64> {
        Head {
            tensor: Tensor::zeros(Shape::new(1, (5 + classes) * 3, grid, grid)),
            spec: YoloSpec {
                classes,
                anchors: vec![(10.0, 10.0), (12.0, 12.0), (14.0, 14.0)],
                mask: vec![0, 1, 2],
            },
            layer_index: 0,
        }
    }

    #[test]
    fn zero_truths_zero_logits_is_slots_times_ln2() {
        let head = micro_head(6, 8);
        let (loss, grads) = yolo_loss(&[head], &[], 32, &LossWeights::default()).unwrap();
        let slots = 8.0 * 8.0 * 3.0;
        assert!((loss - slots * std::f64::consts::LN_2).abs() < 1e-9, "{loss}");
        // gradient at every objectness channel is σ(0) − 0 = 0.5
        let g = &grads[0];
        assert!((g.at(0, 4, 3, 3) - 0.5).abs() < 1e-12);
        assert_eq!(g.at(0, 0, 3, 3), 0.0); // no coord loss unassigned
    }

    #[test]
    fn saturated_correct_head_has_near_zero_loss() {
        let mut head = micro_head(6, 8);
        let t = GroundTruth { class_id: 3, bbox: BBox { cx: 0.5, cy: 0.5, w: 12.0 / 32.0, h: 12.0 / 32.0 } };
        let layouts = vec![HeadLayout::of(&head)];
        let a = assign_targets(&[t], &layouts, 32)[0];
        let base = a.slot * 11;
        // Hit the box targets exactly: logit(tx) for σ-space, raw for logs.
        let logit = |p: f64| (p / (1.0 - p)).ln();
        *head.tensor.at_mut(0, base, a.row, a.col) = logit(a.tx);
        *head.tensor.at_mut(0, base + 1, a.row, a.col) = logit(a.ty);
        *head.tensor.at_mut(0, base + 2, a.row, a.col) = a.tw;
        *head.tensor.at_mut(0, base + 3, a.row, a.col) = a.th;
        *head.tensor.at_mut(0, base + 4, a.row, a.col) = 60.0;
        *head.tensor.at_mut(0, base + 5 + 3, a.row, a.col) = 60.0;
        for k in 0..6 {
            if k != 3 {
                *head.tensor.at_mut(0, base + 5 + k, a.row, a.col) = -60.0;
            }
        }
        // Push every other slot's objectness hard negative.
        for row in 0..8 {
            for col in 0..8 {
                for slot in 0..3 {
                    if (row, col, slot) != (a.row, a.col, a.slot) {
                        *head.tensor.at_mut(0, slot * 11 + 4, row, col) = -60.0;
                    }
                }
            }
        }
        let (loss, _) = yolo_loss(&[head], &[t], 32, &LossWeights::default()).unwrap();
        assert!(loss < 1e-9, "{loss}");
    }

    #[test]
    fn ignore_band_skips_overlapping_unassigned_slots() {
        let head = micro_head(6, 8);
        let t = GroundTruth { class_id: 0, bbox: BBox { cx: 0.5, cy: 0.5, w: 12.0 / 32.0, h: 12.0 / 32.0 } };
        let (_, grads) = yolo_loss(&[head], &[t], 32, &LossWeights::default()).unwrap();
        // The truth (12 px at pixel 16) lands in cell (4,4); zero logits
        // decode every slot there to a box centered at pixel 18. Against
        // the truth, the 14 px anchor's box has IoU 121/219 ≈ 0.553 —
        // inside the ignore band, so its unassigned objectness gets no
        // gradient — while the 10 px anchor's box has IoU ≈ 0.497, a hair
        // below the band, so it is trained as background.
        let g = &grads[0];
        assert_eq!(g.at(0, 2 * 11 + 4, 4, 4), 0.0);
        assert!((g.at(0, 4, 4, 4) - 0.5).abs() < 1e-12);
        // a far-away cell is pure background: gradient σ(0) = 0.5
        assert!((g.at(0, 4, 0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn loss_weights_scale_their_terms() {
        let head = micro_head(6, 8);
        let (base_loss, _) = yolo_loss(&[head.clone()], &[], 32, &LossWeights::default()).unwrap();
        let doubled = LossWeights { objectness: 2.0, ..LossWeights::default() };
        let (scaled, _) = yolo_loss(&[head], &[], 32, &doubled).unwrap();
        assert!((scaled - 2.0 * base_loss).abs() < 1e-9);
    }
}
