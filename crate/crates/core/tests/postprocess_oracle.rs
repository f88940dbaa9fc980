//! Oracle equivalence for decoding and suppression: a brute-force O(n²)
//! suppression written from the stated semantics, and a from-the-formula
//! transcription of box decoding, both independent of the library's
//! internal structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sungold::netdef::YoloSpec;
use sungold::postprocess::{decode_head, iou, nms, BBox, Detection, NmsMode};
use sungold::tensor::{Shape, Tensor};

fn random_detections(rng: &mut ChaCha8Rng, n: usize, n_classes: usize) -> Vec<Detection> {
    (0..n)
        .map(|_| {
            let class_probs: Vec<f64> = (0..n_classes).map(|_| rng.gen_range(0.0..1.0)).collect();
            let class_id = rng.gen_range(0..n_classes);
            let objectness = rng.gen_range(0.0..1.0);
            Detection {
                bbox: BBox {
                    cx: rng.gen_range(0.1..0.9),
                    cy: rng.gen_range(0.1..0.9),
                    w: rng.gen_range(0.05..0.4),
                    h: rng.gen_range(0.05..0.4),
                },
                objectness,
                score: objectness * class_probs[class_id],
                class_probs,
                class_id,
            }
        })
        .collect()
}

/// Brute-force suppression straight from the stated semantics: rank by
/// (score desc, class asc, input order), then for each candidate scan
/// every higher-ranked kept box for a suppressing overlap.
fn brute_force_nms(dets: &[Detection], iou_thresh: f64, mode: NmsMode) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(dets[a].class_id.cmp(&dets[b].class_id))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let mut dead = false;
        for &k in &kept {
            let same_class = dets[k].class_id == dets[i].class_id;
            let applies = match mode {
                NmsMode::PerClass => same_class,
                NmsMode::ClassAgnostic => true,
            };
            if applies && iou(&dets[k].bbox, &dets[i].bbox) >= iou_thresh {
                dead = true;
                break;
            }
        }
        if !dead {
            kept.push(i);
        }
    }
    kept
}

fn key(d: &Detection) -> (u64, u64, u64, u64, u64, usize) {
    (
        d.score.to_bits(),
        d.bbox.cx.to_bits(),
        d.bbox.cy.to_bits(),
        d.bbox.w.to_bits(),
        d.bbox.h.to_bits(),
        d.class_id,
    )
}

#[test]
fn nms_matches_brute_force_on_100_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..100 {
        let n = rng.gen_range(1..=200);
        let n_classes = rng.gen_range(1..=5);
        let dets = random_detections(&mut rng, n, n_classes);
        let thresh = [0.3, 0.5, 0.7, 1.0][case % 4];
        let mode = if case % 2 == 0 { NmsMode::PerClass } else { NmsMode::ClassAgnostic };

        let got = nms(dets.clone(), thresh, mode);
        let oracle = brute_force_nms(&dets, thresh, mode);

        // Exact set equality, compared as bit-level keys.
        let mut got_keys: Vec<_> = got.iter().map(key).collect();
        let mut want_keys: Vec<_> = oracle.iter().map(|&i| key(&dets[i])).collect();
        got_keys.sort_unstable();
        want_keys.sort_unstable();
        assert_eq!(got_keys, want_keys, "case {case}: n {n} thresh {thresh} {mode:?}");
    }
}

#[test]
fn nms_survivors_are_score_descending() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dets = random_detections(&mut rng, 120, 4);
    let kept = nms(dets, 0.4, NmsMode::PerClass);
    for w in kept.windows(2) {
        assert!(w[0].score >= w[1].score);
    }
}

/// Re-derive the decode arithmetic from the written formulas, reading the
/// head layout directly: channel base a·(5+C) holds tx ty tw th obj then
/// class logits; bx = (σ(tx)+col)/S, bw = anchor_w·e^tw / input.
#[test]
fn decode_head_matches_formula_transcription() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = YoloSpec {
        classes: 6,
        anchors: vec![
            (10.0, 14.0),
            (23.0, 27.0),
            (37.0, 58.0),
            (81.0, 82.0),
            (135.0, 169.0),
            (344.0, 319.0),
        ],
        mask: vec![3, 4, 5],
    };
    let grid = 13;
    let input = 416;
    let mut head = Tensor::<f32>::zeros(Shape::new(1, 11 * 3, grid, grid));
    for v in head.data_mut() {
        *v = rng.gen_range(-3.0..3.0);
    }

    let got = decode_head(&head, &spec, input).unwrap();
    assert_eq!(got.len(), grid * grid * 3);

    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut idx = 0;
    for row in 0..grid {
        for col in 0..grid {
            for (a, &anchor) in spec.mask.iter().enumerate() {
                let at = |ch: usize| head.at(0, a * 11 + ch, row, col) as f64;
                let d = &got[idx];
                idx += 1;
                assert_eq!(d.bbox.cx, (sig(at(0)) + col as f64) / grid as f64);
                assert_eq!(d.bbox.cy, (sig(at(1)) + row as f64) / grid as f64);
                assert_eq!(d.bbox.w, spec.anchors[anchor].0 as f64 * at(2).exp() / input as f64);
                assert_eq!(d.bbox.h, spec.anchors[anchor].1 as f64 * at(3).exp() / input as f64);
                assert_eq!(d.objectness, sig(at(4)));
                let probs: Vec<f64> = (0..6).map(|k| sig(at(5 + k))).collect();
                let best = probs.iter().cloned().fold(f64::MIN, f64::max);
                assert_eq!(d.score, d.objectness * best);
                assert_eq!(probs[d.class_id], best);
                assert_eq!(d.class_probs, probs);
            }
        }
    }
}
